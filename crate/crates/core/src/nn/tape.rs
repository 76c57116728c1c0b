//! Tape-based reverse-mode differentiation over small dense vectors.
//!
//! Every operation appends a node whose value lives in one flat arena. The
//! backward pass walks the nodes in reverse, accumulating node gradients in a
//! parallel arena and parameter gradients into a caller-provided flat buffer
//! laid out like the [`ParamStore`].

use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Linear { w: ParamId, b: Option<ParamId>, x: Var },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Max(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    off: usize,
    len: usize,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    values: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(4096),
            values: Vec::with_capacity(1 << 16),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        &self.values[n.off..n.off + n.len]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].len
    }

    fn push_with(&mut self, len: usize, op: Op, fill: impl FnOnce(&[f64], &mut [f64])) -> Var {
        let off = self.values.len();
        self.values.resize(off + len, 0.0);
        let (before, out) = self.values.split_at_mut(off);
        fill(before, out);
        self.nodes.push(Node { off, len, op });
        Var(self.nodes.len() - 1)
    }

    fn span(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.off, n.len)
    }

    pub fn input(&mut self, data: &[f64]) -> Var {
        self.push_with(data.len(), Op::Input, |_, out| out.copy_from_slice(data))
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.push_with(len, Op::Input, |_, _| {})
    }

    /// `W x + b` with `W` stored row-major as `rows x cols`.
    pub fn linear(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let params = self.params;
        let spec = params.spec(w);
        let (rows, cols) = (spec.rows, spec.cols);
        let (xo, xl) = self.span(x);
        assert_eq!(xl, cols, "linear {}: input width {} != {}", spec.name, xl, cols);
        let wv = params.slice(w);
        let bv = b.map(|b| params.slice(b));
        self.push_with(rows, Op::Linear { w, b, x }, |before, out| {
            let xv = &before[xo..xo + xl];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &wv[r * cols..(r + 1) * cols];
                let mut acc = bv.map_or(0.0, |b| b[r]);
                for (a, c) in row.iter().zip(xv) {
                    acc += a * c;
                }
                *o = acc;
            }
        })
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ao, al) = self.span(a);
        let (bo, bl) = self.span(b);
        assert_eq!(al, bl, "elementwise operands differ in length");
        self.push_with(al, op, |before, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = f(before[ao + i], before[bo + i]);
            }
        })
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (ao, al) = self.span(a);
        self.push_with(al, op, |before, out| {
            for (o, x) in out.iter_mut().zip(&before[ao..ao + al]) {
                *o = f(*x);
            }
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let spans: Vec<(usize, usize)> = parts.iter().map(|p| self.span(*p)).collect();
        let len = spans.iter().map(|s| s.1).sum();
        self.push_with(len, Op::Concat(parts.to_vec()), |before, out| {
            let mut at = 0;
            for (o, l) in spans {
                out[at..at + l].copy_from_slice(&before[o..o + l]);
                at += l;
            }
        })
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (ao, al) = self.span(a);
        assert!(start + len <= al);
        self.push_with(len, Op::Slice(a, start), |before, out| {
            out.copy_from_slice(&before[ao + start..ao + start + len])
        })
    }

    /// Elementwise maximum over equally sized inputs; ties go to the earliest input.
    pub fn max(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let spans: Vec<(usize, usize)> = parts.iter().map(|p| self.span(*p)).collect();
        let len = spans[0].1;
        assert!(spans.iter().all(|s| s.1 == len));
        self.push_with(len, Op::Max(parts.to_vec()), |before, out| {
            out.copy_from_slice(&before[spans[0].0..spans[0].0 + len]);
            for &(o, _) in &spans[1..] {
                for (m, x) in out.iter_mut().zip(&before[o..o + len]) {
                    if *x > *m {
                        *m = *x;
                    }
                }
            }
        })
    }

    /// Propagates the seeded output gradients back to the parameters.
    ///
    /// `param_grad` must be laid out like the parameter store; gradients are
    /// added to it.
    pub fn backward(&self, seeds: &[(Var, &[f64])], param_grad: &mut [f64]) {
        assert_eq!(param_grad.len(), self.params.len());
        let mut grads = vec![0.0; self.values.len()];
        for (v, g) in seeds {
            let (o, l) = self.span(*v);
            assert_eq!(l, g.len());
            for (a, b) in grads[o..o + l].iter_mut().zip(g.iter()) {
                *a += b;
            }
        }

        for node in self.nodes.iter().rev() {
            let (lo, hi) = grads.split_at_mut(node.off);
            let gy = &hi[..node.len];
            if gy.iter().all(|g| *g == 0.0) {
                continue;
            }
            let y = &self.values[node.off..node.off + node.len];
            match &node.op {
                Op::Input => {}
                Op::Linear { w, b, x } => {
                    let spec = self.params.spec(*w);
                    let cols = spec.cols;
                    let wv = self.params.slice(*w);
                    let (xo, xl) = self.span(*x);
                    let xv = &self.values[xo..xo + xl];
                    let gw_off = spec.offset;
                    for (r, g) in gy.iter().enumerate() {
                        if *g == 0.0 {
                            continue;
                        }
                        let row = &wv[r * cols..(r + 1) * cols];
                        let gx = &mut lo[xo..xo + xl];
                        for (gxi, wi) in gx.iter_mut().zip(row) {
                            *gxi += wi * g;
                        }
                        let gw = &mut param_grad[gw_off + r * cols..gw_off + (r + 1) * cols];
                        for (gwi, xi) in gw.iter_mut().zip(xv) {
                            *gwi += g * xi;
                        }
                    }
                    if let Some(b) = b {
                        let bo = self.params.spec(*b).offset;
                        for (gb, g) in param_grad[bo..bo + gy.len()].iter_mut().zip(gy) {
                            *gb += g;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        let (o, _) = self.span(*v);
                        for (i, g) in gy.iter().enumerate() {
                            lo[o + i] += g;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ao, _) = self.span(*a);
                    let (bo, _) = self.span(*b);
                    for (i, g) in gy.iter().enumerate() {
                        let (av, bv) = (self.values[ao + i], self.values[bo + i]);
                        lo[ao + i] += g * bv;
                        lo[bo + i] += g * av;
                    }
                }
                Op::Scale(a, s) => {
                    let (o, _) = self.span(*a);
                    for (i, g) in gy.iter().enumerate() {
                        lo[o + i] += g * s;
                    }
                }
                Op::Sigmoid(a) => {
                    let (o, _) = self.span(*a);
                    for (i, (g, yi)) in gy.iter().zip(y).enumerate() {
                        lo[o + i] += g * yi * (1.0 - yi);
                    }
                }
                Op::Tanh(a) => {
                    let (o, _) = self.span(*a);
                    for (i, (g, yi)) in gy.iter().zip(y).enumerate() {
                        lo[o + i] += g * (1.0 - yi * yi);
                    }
                }
                Op::Relu(a) => {
                    let (o, _) = self.span(*a);
                    for (i, (g, yi)) in gy.iter().zip(y).enumerate() {
                        if *yi > 0.0 {
                            lo[o + i] += g;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let (o, l) = self.span(*p);
                        for i in 0..l {
                            lo[o + i] += gy[at + i];
                        }
                        at += l;
                    }
                }
                Op::Slice(a, start) => {
                    let (o, _) = self.span(*a);
                    for (i, g) in gy.iter().enumerate() {
                        lo[o + start + i] += g;
                    }
                }
                Op::Max(parts) => {
                    for (i, (g, yi)) in gy.iter().zip(y).enumerate() {
                        if let Some(p) = parts.iter().find(|p| self.values[self.span(**p).0 + i] == *yi) {
                            lo[self.span(*p).0 + i] += g;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn numeric(store: &ParamStore, f: &dyn Fn(&ParamStore) -> f64) -> Vec<f64> {
        let mut s = store.clone();
        let h = 1e-6;
        (0..s.len())
            .map(|i| {
                let orig = s.data()[i];
                s.data_mut()[i] = orig + h;
                let fp = f(&s);
                s.data_mut()[i] = orig - h;
                let fm = f(&s);
                s.data_mut()[i] = orig;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut store = ParamStore::new();
        let w1 = store.add("w1", 4, 3);
        let b1 = store.add("b1", 4, 1);
        let w2 = store.add("w2", 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in [w1, b1, w2] {
            store.init_uniform(id, 0.8, &mut rng);
        }
        let x = [0.3, -1.2, 0.7];
        let weights = [0.7, -0.4];

        let build = |s: &ParamStore| -> (f64, Vec<f64>) {
            let mut t = Tape::new(s);
            let xi = t.input(&x);
            let h = t.linear(w1, Some(b1), xi);
            let a = t.sigmoid(h);
            let b = t.tanh(h);
            let c = t.relu(h);
            let m = t.max(&[a, b, c]);
            let p = t.mul(m, a);
            let q = t.add(p, b);
            let q = t.scale(q, 1.5);
            let s1 = t.slice(q, 1, 3);
            let cat = t.concat(&[s1, xi]);
            let out = t.linear(w2, None, cat);
            let y = t.value(out).to_vec();
            let loss: f64 = y.iter().zip(&weights).map(|(a, b)| a * b).sum();
            let mut g = vec![0.0; s.len()];
            t.backward(&[(out, &weights)], &mut g);
            (loss, g)
        };

        let (_, analytic) = build(&store);
        let num = numeric(&store, &|s| build(s).0);
        for (i, (a, n)) in analytic.iter().zip(&num).enumerate() {
            assert!((a - n).abs() < 1e-7, "param {i}: {a} vs {n}");
        }
    }
}

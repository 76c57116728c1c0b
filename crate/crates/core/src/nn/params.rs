use rand::Rng;
use serde::{Deserialize, Serialize};

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All trainable tensors of a model, stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    specs: Vec<ParamSpec>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        let offset = self.data.len();
        self.specs.push(ParamSpec {
            name: name.into(),
            rows,
            cols,
            offset,
        });
        self.data.resize(offset + rows * cols, 0.0);
        ParamId(self.specs.len() - 1)
    }

    /// Fills a tensor uniformly in `±bound`.
    pub fn init_uniform<R: Rng>(&mut self, id: ParamId, bound: f64, rng: &mut R) {
        for v in self.slice_mut(id) {
            *v = rng.random_range(-bound..=bound);
        }
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn slice(&self, id: ParamId) -> &[f64] {
        let s = &self.specs[id.0];
        &self.data[s.offset..s.offset + s.len()]
    }

    pub fn slice_mut(&mut self, id: ParamId) -> &mut [f64] {
        let s = &self.specs[id.0];
        let (o, n) = (s.offset, s.len());
        &mut self.data[o..o + n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rebuilds a store from serialized specs and values, checking the layout.
    pub fn from_parts(specs: Vec<ParamSpec>, data: Vec<f64>) -> Option<Self> {
        let mut offset = 0;
        for s in &specs {
            if s.offset != offset {
                return None;
            }
            offset += s.len();
        }
        (offset == data.len()).then_some(Self { specs, data })
    }
}

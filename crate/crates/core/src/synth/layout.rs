//! Canonical road layouts and the routes agents follow on them.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::geom::Vec2;
use crate::scene::{Polyline, PolylineKind};

pub(crate) const LANE_WIDTH: f64 = 3.5;
const ROAD_POINT_SPACING: f64 = 2.0;

/// Arclength-parametrized polyline. Positions outside `[0, length]` are
/// extrapolated along the end segments.
#[derive(Debug, Clone)]
pub(crate) struct Route {
    points: Vec<Vec2>,
    cum: Vec<f64>,
}

impl Route {
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            cum.push(cum.last().unwrap() + w[0].distance(w[1]));
        }
        Self { points, cum }
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Position and unit tangent at arclength `s`.
    pub fn at(&self, s: f64) -> (Vec2, Vec2) {
        let n = self.points.len();
        let i = self.cum.partition_point(|c| *c <= s).clamp(1, n - 1) - 1;
        let (a, b) = (self.points[i], self.points[i + 1]);
        let len = self.cum[i + 1] - self.cum[i];
        let dir = (b - a) * (1.0 / len);
        (a + dir * (s - self.cum[i]), dir)
    }

    /// Points every `spacing` metres, ending exactly at the last vertex.
    pub fn resample(&self, spacing: f64) -> Vec<Vec2> {
        let steps = (self.length() / spacing).ceil().max(1.0) as usize;
        (0..=steps)
            .map(|k| self.at(self.length() * k as f64 / steps as f64).0)
            .collect()
    }
}

fn left(d: Vec2) -> Vec2 {
    Vec2::new(-d.y, d.x)
}

/// Where and how an agent may be placed: the route and the admissible
/// arclength range of its current position.
#[derive(Debug, Clone)]
pub(crate) struct Spawn {
    pub route: Route,
    pub s_min: f64,
    pub s_max: f64,
    /// Signed offset along the left normal to a neighboring lane, if any.
    pub lane_change: Option<f64>,
    /// Upper speed bound implied by the curvature on this route (m/s).
    pub max_speed: f64,
}

impl Spawn {
    fn new(route: Route, s_min: f64, s_max: f64) -> Self {
        Self {
            route,
            s_min,
            s_max,
            lane_change: None,
            max_speed: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Layout {
    pub polylines: Vec<Polyline>,
    /// Straight routes: constant velocity, acceleration, lane changes.
    pub straight: Vec<Spawn>,
    /// Curved routes.
    pub turning: Vec<Spawn>,
    /// Pedestrian crossings.
    pub crossings: Vec<Spawn>,
}

impl Layout {
    fn lane(&mut self, route: &Route) {
        self.polylines.push(Polyline {
            kind: PolylineKind::LaneCenter,
            points: route.resample(ROAD_POINT_SPACING),
        });
    }

    fn edge(&mut self, kind: PolylineKind, a: Vec2, b: Vec2) {
        self.polylines.push(Polyline {
            kind,
            points: Route::new(vec![a, b]).resample(ROAD_POINT_SPACING),
        });
    }

    fn crossing(&mut self, center: Vec2, across: Vec2, half_road: f64, rng: &mut impl Rng) {
        self.edge(PolylineKind::Crosswalk, center - across * half_road, center + across * half_road);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let reach = half_road + 6.0;
        let route = Route::new(vec![center - across * (sign * reach), center + across * (sign * reach)]);
        self.crossings.push(Spawn::new(route, 2.0, reach + half_road));
    }
}

/// Two lanes per direction along the x axis, one crosswalk.
pub(crate) fn straight_road(rng: &mut impl Rng) -> Layout {
    let mut l = Layout::default();
    let half = 200.0;
    let offsets = [-1.5 * LANE_WIDTH, -0.5 * LANE_WIDTH, 0.5 * LANE_WIDTH, 1.5 * LANE_WIDTH];
    for (i, y) in offsets.iter().enumerate() {
        let forward = i < 2;
        let (a, b) = if forward {
            (Vec2::new(-half, *y), Vec2::new(half, *y))
        } else {
            (Vec2::new(half, *y), Vec2::new(-half, *y))
        };
        let route = Route::new(vec![a, b]);
        l.lane(&route);
        let mut spawn = Spawn::new(route, 40.0, 230.0);
        // the partner lane in the same direction
        let partner = if forward { offsets[1 - i] } else { offsets[5 - i] };
        let n = left(if forward { Vec2::new(1.0, 0.0) } else { Vec2::new(-1.0, 0.0) });
        spawn.lane_change = Some((partner - y) * n.y);
        l.straight.push(spawn);
    }
    let edge = 2.0 * LANE_WIDTH;
    l.edge(PolylineKind::RoadEdge, Vec2::new(-half, -edge), Vec2::new(half, -edge));
    l.edge(PolylineKind::RoadEdge, Vec2::new(-half, edge), Vec2::new(half, edge));
    let cx = rng.random_range(-60.0..60.0);
    l.crossing(Vec2::new(cx, 0.0), Vec2::new(0.0, 1.0), edge, rng);
    l
}

/// A straight lead-in followed by a circular bend and a straight exit;
/// two lanes in the direction of travel.
pub(crate) fn arc_road(rng: &mut impl Rng) -> Layout {
    let mut l = Layout::default();
    let radius = rng.random_range(40.0..90.0);
    let sweep = rng.random_range(FRAC_PI_2..PI);
    let turn = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let lead = 200.0;
    let exit = 150.0;

    // reference centerline: origin at the start of the bend, heading +x
    let center = Vec2::new(0.0, turn * radius);
    let mut reference: Vec<(Vec2, Vec2)> = vec![(Vec2::new(-lead, 0.0), Vec2::new(1.0, 0.0))];
    let steps = (radius * sweep / 0.5).ceil() as usize;
    for k in 0..=steps {
        let phi = sweep * k as f64 / steps as f64;
        let radial = Vec2::new(0.0, -turn * radius).rotate(turn * phi);
        reference.push((center + radial, Vec2::new(1.0, 0.0).rotate(turn * phi)));
    }
    let end_dir = Vec2::new(1.0, 0.0).rotate(turn * sweep);
    let end = reference.last().unwrap().0;
    reference.push((end + end_dir * exit, end_dir));

    for d in [-0.5 * LANE_WIDTH, 0.5 * LANE_WIDTH] {
        let pts: Vec<Vec2> = reference.iter().map(|(p, t)| *p + left(*t) * d).collect();
        let route = Route::new(pts);
        l.lane(&route);
        let arc_len = (radius - turn * d) * sweep;
        let mut spawn = Spawn::new(route, lead - 60.0, lead + 0.6 * arc_len);
        spawn.max_speed = (2.5 * (radius - LANE_WIDTH)).sqrt();
        l.turning.push(spawn);

        let mut straight = Spawn::new(Route::new(vec![Vec2::new(-lead, d), Vec2::new(0.0, d)]), 20.0, 60.0);
        straight.lane_change = Some(-2.0 * d);
        l.straight.push(straight);
    }
    for d in [-LANE_WIDTH, LANE_WIDTH] {
        let pts: Vec<Vec2> = reference.iter().map(|(p, t)| *p + left(*t) * d).collect();
        l.polylines.push(Polyline {
            kind: PolylineKind::RoadEdge,
            points: Route::new(pts).resample(ROAD_POINT_SPACING),
        });
    }
    let cx = rng.random_range(-150.0..-60.0);
    l.crossing(Vec2::new(cx, 0.0), Vec2::new(0.0, 1.0), LANE_WIDTH, rng);
    l
}

fn bezier(p0: Vec2, p1: Vec2, p2: Vec2, p3: Vec2, n: usize) -> Vec<Vec2> {
    (0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            let u = 1.0 - t;
            p0 * (u * u * u) + p1 * (3.0 * u * u * t) + p2 * (3.0 * u * t * t) + p3 * (t * t * t)
        })
        .collect()
}

/// Four-arm junction with one lane per direction, turn connectors and crosswalks.
pub(crate) fn intersection(rng: &mut impl Rng) -> Layout {
    let mut l = Layout::default();
    let arm = 150.0;
    let box_half = 8.0;
    let w = 0.5 * LANE_WIDTH;
    let dirs: Vec<Vec2> = (0..4).map(|k| Vec2::from_polar(1.0, k as f64 * FRAC_PI_2)).collect();
    let right = |d: Vec2| Vec2::new(d.y, -d.x);

    for (k, a) in dirs.iter().enumerate() {
        let d_in = -*a;
        let start = *a * arm + right(d_in) * w;
        let stop = *a * box_half + right(d_in) * w;
        l.lane(&Route::new(vec![start, stop]));
        let out_start = *a * box_half + right(*a) * w;
        l.lane(&Route::new(vec![out_start, *a * arm + right(*a) * w]));

        for (j, b) in dirs.iter().enumerate() {
            if j == k {
                continue;
            }
            let q = *b * box_half + right(*b) * w;
            let exit = *b * arm + right(*b) * w;
            if (j + 2) % 4 == k {
                l.straight.push(Spawn::new(Route::new(vec![start, exit]), 40.0, 140.0));
                continue;
            }
            let c = 0.5523 * stop.distance(q) / std::f64::consts::SQRT_2;
            let connector = bezier(stop, stop + d_in * c, q - *b * c, q, 24);
            l.lane(&Route::new(connector.clone()));
            let mut pts = vec![start];
            pts.extend(connector);
            pts.push(exit);
            let approach = arm - box_half;
            let mut spawn = Spawn::new(Route::new(pts), approach - 45.0, approach + 3.0);
            spawn.max_speed = 9.0;
            l.turning.push(spawn);
        }
        let across = left(*a);
        l.crossing(*a * (box_half + 3.0), across, LANE_WIDTH, rng);
    }
    l
}

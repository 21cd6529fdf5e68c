//! Geometric paths made of straight pieces and circular fillets, and their
//! time parameterization.

use super::{PlanParams, PlannerConfig, PlannerError};
use crate::geom::{Shape, Vec3};
use crate::trajectory::Trajectory;

const ARC_STEP: f64 = 0.1;
const PARAM_STEP: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Piece {
    Line {
        a: Vec3<f64>,
        b: Vec3<f64>,
    },
    /// `center + r·(cos(s/r)·u + sin(s/r)·w)` for s in `[0, r·angle]`.
    Arc {
        center: Vec3<f64>,
        radius: f64,
        u: Vec3<f64>,
        w: Vec3<f64>,
        angle: f64,
    },
}

impl Piece {
    pub fn length(&self) -> f64 {
        match *self {
            Piece::Line { a, b } => a.distance(b),
            Piece::Arc { radius, angle, .. } => radius * angle,
        }
    }

    pub fn at(&self, s: f64) -> Vec3<f64> {
        match *self {
            Piece::Line { a, b } => {
                let len = a.distance(b);
                if len <= 0.0 {
                    a
                } else {
                    a.lerp(b, (s / len).clamp(0.0, 1.0))
                }
            }
            Piece::Arc { center, radius, u, w, angle } => {
                let th = (s / radius).clamp(0.0, angle);
                center + u * (radius * th.cos()) + w * (radius * th.sin())
            }
        }
    }

    pub fn curvature(&self) -> f64 {
        match *self {
            Piece::Line { .. } => 0.0,
            Piece::Arc { radius, .. } => 1.0 / radius,
        }
    }
}

/// Arc-length parameterized chain of pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pieces: Vec<Piece>,
    starts: Vec<f64>,
    length: f64,
}

impl Path {
    pub fn new(pieces: Vec<Piece>) -> Self {
        let pieces: Vec<Piece> = pieces.into_iter().filter(|p| p.length() > 1e-12).collect();
        let mut starts = Vec::with_capacity(pieces.len());
        let mut s = 0.0;
        for p in &pieces {
            starts.push(s);
            s += p.length();
        }
        Self {
            pieces,
            starts,
            length: s,
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn locate(&self, s: f64) -> Option<usize> {
        if self.pieces.is_empty() {
            return None;
        }
        let i = self.starts.partition_point(|&x| x <= s);
        Some(i.saturating_sub(1))
    }

    pub fn at(&self, s: f64) -> Vec3<f64> {
        match self.locate(s) {
            Some(i) => self.pieces[i].at(s - self.starts[i]),
            None => Vec3::zero(),
        }
    }

    /// Largest curvature of any piece touching `s`.
    pub fn curvature(&self, s: f64) -> f64 {
        let Some(i) = self.locate(s) else {
            return 0.0;
        };
        let mut k = self.pieces[i].curvature();
        let eps = 1e-9;
        if i > 0 && s - self.starts[i] < eps {
            k = k.max(self.pieces[i - 1].curvature());
        }
        if i + 1 < self.pieces.len() && self.starts[i + 1] - s < eps {
            k = k.max(self.pieces[i + 1].curvature());
        }
        k
    }

    /// Points every `step` meters, both ends included.
    pub fn sample(&self, step: f64) -> Vec<Vec3<f64>> {
        let n = (self.length / step).ceil().max(1.0) as usize;
        (0..=n).map(|i| self.at(self.length * i as f64 / n as f64)).collect()
    }
}

fn static_distance(statics: &[Shape<f64>], p: Vec3<f64>) -> f64 {
    statics.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min)
}

pub(super) fn min_clearance(path: &Path, statics: &[Shape<f64>]) -> f64 {
    path.sample(ARC_STEP)
        .into_iter()
        .map(|p| static_distance(statics, p))
        .fold(f64::INFINITY, f64::min)
}

/// Whether every point of segment `a`–`b` keeps `clearance` from every shape.
/// Distance to a convex shape is convex along a line, so a golden-section
/// search finds its minimum; shapes the 1-Lipschitz bound already clears are
/// skipped.
pub(super) fn segment_clear(statics: &[Shape<f64>], a: Vec3<f64>, b: Vec3<f64>, clearance: f64) -> bool {
    let len = a.distance(b);
    statics.iter().all(|s| {
        let (da, db) = (s.distance(a), s.distance(b));
        if da.min(db) < clearance {
            return false;
        }
        if (da + db - len) / 2.0 >= clearance {
            return true;
        }
        let f = |t: f64| s.distance(a.lerp(b, t));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..40 {
            if f1 < f2 {
                hi = x2;
                (x2, f2) = (x1, f1);
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                (x1, f1) = (x2, f2);
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        f1.min(f2) >= clearance
    })
}

fn line_of_sight(statics: &[Shape<f64>], a: Vec3<f64>, b: Vec3<f64>, clearance: f64) -> bool {
    segment_clear(statics, a, b, clearance)
}

/// Greedy shortcutting: from each kept vertex jump to the farthest vertex in
/// sight at full clearance.
pub(super) fn shortcut(vertices: &[Vec3<f64>], statics: &[Shape<f64>], clearance: f64) -> Vec<Vec3<f64>> {
    let n = vertices.len();
    if n <= 2 {
        return vertices.to_vec();
    }
    let mut out = vec![vertices[0]];
    let mut i = 0;
    while i < n - 1 {
        let j = (i + 2..n)
            .rev()
            .find(|&j| line_of_sight(statics, vertices[i], vertices[j], clearance))
            .unwrap_or(i + 1);
        out.push(vertices[j]);
        i = j;
    }
    out
}

/// Replaces each corner with a tangent arc. The radius is what the speed
/// floor allows at the cornering acceleration, never tighter than the cap;
/// it shrinks toward the cap radius when the arc would cut into clearance.
pub(super) fn fillet(vertices: &[Vec3<f64>], statics: &[Shape<f64>], clearance: f64, params: &PlanParams, cfg: &PlannerConfig) -> Path {
    let n = vertices.len();
    if n <= 2 {
        return Path::new(vec![Piece::Line {
            a: vertices[0],
            b: vertices[n - 1],
        }]);
    }
    let r_min = cfg.fillet_margin / params.curvature_cap;
    let a_lat = cfg.lateral_fraction * params.accel_limit;
    let v_floor = cfg.envelope.speed[0].min(params.cruise_speed);
    let r_want = r_min.max(v_floor * v_floor / a_lat);
    let seg_len: Vec<f64> = vertices.windows(2).map(|w| w[0].distance(w[1])).collect();

    // (entry tangent point, arc) per interior vertex
    let mut corners: Vec<Option<(Vec3<f64>, Piece, Vec3<f64>)>> = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let v = vertices[i];
        let d1 = (v - vertices[i - 1]) / seg_len[i - 1];
        let d2 = (vertices[i + 1] - v) / seg_len[i];
        let cos_phi = d1.dot(d2).clamp(-1.0, 1.0);
        let phi = cos_phi.acos();
        if phi < 1e-6 {
            corners.push(None);
            continue;
        }
        let tan_half = (phi / 2.0).tan();
        let share_in = if i == 1 { 1.0 } else { 0.5 };
        let share_out = if i == n - 2 { 1.0 } else { 0.5 };
        let t_max = (seg_len[i - 1] * share_in).min(seg_len[i] * share_out);
        let vertex_clear = static_distance(statics, v);
        let required = (clearance - cfg.clearance_tolerance).min(vertex_clear);
        let mut r = r_want.min(t_max / tan_half);
        let arc = loop {
            let (t1, arc, t2) = make_arc(v, d1, d2, phi, r);
            let m = (r * phi / ARC_STEP).ceil().max(1.0) as usize;
            let ok = (0..=m)
                .map(|k| arc.at(r * phi * k as f64 / m as f64))
                .all(|p| static_distance(statics, p) >= required);
            if ok || r <= r_min * 1.0001 {
                break (t1, arc, t2);
            }
            r = (r * 0.8).max(r_min).min(r);
        };
        corners.push(Some(arc));
    }

    let mut pieces = Vec::with_capacity(2 * n);
    let mut cursor = vertices[0];
    for (k, corner) in corners.iter().enumerate() {
        if let Some((t1, arc, t2)) = corner {
            pieces.push(Piece::Line { a: cursor, b: *t1 });
            pieces.push(*arc);
            cursor = *t2;
        } else {
            pieces.push(Piece::Line {
                a: cursor,
                b: vertices[k + 1],
            });
            cursor = vertices[k + 1];
        }
    }
    pieces.push(Piece::Line {
        a: cursor,
        b: vertices[n - 1],
    });
    Path::new(pieces)
}

/// Arc of radius `r` tangent to both legs of the corner at `v`; returns
/// (entry point, arc, exit point).
fn make_arc(v: Vec3<f64>, d1: Vec3<f64>, d2: Vec3<f64>, phi: f64, r: f64) -> (Vec3<f64>, Piece, Vec3<f64>) {
    let t = r * (phi / 2.0).tan();
    let t1 = v - d1 * t;
    let t2 = v + d2 * t;
    let inward = (d2 - d1).normalized(1e-12).unwrap_or(Vec3::zero());
    let center = v + inward * (r / (phi / 2.0).cos());
    let u = (t1 - center) / r;
    (
        t1,
        Piece::Arc {
            center,
            radius: r,
            u,
            w: d1,
            angle: phi,
        },
        t2,
    )
}

/// Speed profile over the path: cruise on straights, the cornering limit on
/// arcs, bounded longitudinal acceleration, and at rest at the goal.
/// Returns uniformly spaced samples whose positions lie on the path.
pub(super) fn time_parameterize(
    path: &Path,
    t0: f64,
    v_start: f64,
    params: &PlanParams,
    cfg: &PlannerConfig,
) -> Result<Trajectory<f64>, PlannerError> {
    let len = path.length();
    if len <= 0.0 {
        return Err(PlannerError::Invalid("zero-length path".into()));
    }
    let a_lat = cfg.lateral_fraction * params.accel_limit;
    let a_long = cfg.longitudinal_fraction * params.accel_limit;
    let v_floor = cfg.envelope.speed[0].min(params.cruise_speed);
    let n = (len / PARAM_STEP).ceil().max(2.0) as usize;
    let ds = len / n as f64;
    let s: Vec<f64> = (0..=n).map(|i| ds * i as f64).collect();
    let mut v: Vec<f64> = s
        .iter()
        .map(|&si| {
            let k = path.curvature(si);
            let corner = if k > 1e-9 { (a_lat / k).sqrt() } else { f64::INFINITY };
            params.cruise_speed.min(corner.max(v_floor))
        })
        .collect();
    v[0] = v_start.min(v[0]).max(0.0);
    v[n] = 0.0;
    for i in 0..n {
        v[i + 1] = v[i + 1].min((v[i] * v[i] + 2.0 * a_long * ds).sqrt());
    }
    for i in (0..n).rev() {
        v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * a_long * ds).sqrt());
    }
    let mut t = vec![0.0; n + 1];
    for i in 0..n {
        t[i + 1] = t[i] + 2.0 * ds / (v[i] + v[i + 1]);
    }
    let total = t[n];
    let steps = (total / cfg.sample_dt).ceil().max(2.0) as usize;
    let dt = total / steps as f64;
    let mut positions = Vec::with_capacity(steps + 1);
    let mut i = 0;
    for k in 0..=steps {
        let tk = if k == steps { total } else { dt * k as f64 };
        while i + 1 < n && t[i + 1] <= tk {
            i += 1;
        }
        let tau = tk - t[i];
        let acc = (v[i + 1] * v[i + 1] - v[i] * v[i]) / (2.0 * ds);
        let sk = (s[i] + v[i] * tau + 0.5 * acc * tau * tau).clamp(s[i], s[i + 1]);
        positions.push(path.at(if k == steps { len } else { sk }));
    }
    Ok(Trajectory::from_uniform(&positions, t0, dt)?)
}

//! A* over a 3-D occupancy grid anchored at the start position.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::path::segment_clear;
use super::PlannerConfig;
use crate::geom::{Shape, Vec3};
use crate::world::scenario::Area;

struct Grid {
    origin: Vec3<f64>,
    res: f64,
    lo: [i64; 3],
    dims: [usize; 3],
    free: Vec<bool>,
}

impl Grid {
    fn build(statics: &[Shape<f64>], area: &Area, start: Vec3<f64>, goal: Vec3<f64>, inflate: f64, cfg: &PlannerConfig) -> Self {
        let res = cfg.resolution;
        let m = cfg.margin;
        let span = |a: f64, b: f64, o: f64, lo_lim: f64, hi_lim: f64| {
            let lo = ((a.min(b) - m).max(lo_lim) - o) / res;
            let hi = ((a.max(b) + m).min(hi_lim) - o) / res;
            (lo.ceil() as i64, hi.floor() as i64)
        };
        let (x0, x1) = span(start.x, goal.x, start.x, area.min[0], area.max[0]);
        let (y0, y1) = span(start.y, goal.y, start.y, area.min[1], area.max[1]);
        let z_lo = ((cfg.altitude[0] - start.z) / res).ceil() as i64;
        let z_hi = ((cfg.altitude[1] - start.z) / res).floor() as i64;
        // The start and goal altitudes are always searchable.
        let gz = ((goal.z - start.z) / res).round() as i64;
        let (z0, z1) = (z_lo.min(0).min(gz), z_hi.max(0).max(gz));
        let dims = [
            (x1 - x0 + 1).max(1) as usize,
            (y1 - y0 + 1).max(1) as usize,
            (z1 - z0 + 1).max(1) as usize,
        ];
        let mut g = Self {
            origin: start,
            res,
            lo: [x0, y0, z0],
            dims,
            free: Vec::new(),
        };
        let n = dims[0] * dims[1] * dims[2];
        g.free = (0..n)
            .map(|i| {
                let p = g.position(g.coords(i));
                statics.iter().all(|s| s.distance(p) >= inflate)
            })
            .collect();
        g
    }

    fn coords(&self, i: usize) -> [i64; 3] {
        let [nx, ny, _] = self.dims;
        [
            (i % nx) as i64 + self.lo[0],
            ((i / nx) % ny) as i64 + self.lo[1],
            (i / (nx * ny)) as i64 + self.lo[2],
        ]
    }

    fn index(&self, c: [i64; 3]) -> Option<usize> {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for a in 0..3 {
            let k = c[a] - self.lo[a];
            if k < 0 || k as usize >= self.dims[a] {
                return None;
            }
            idx += k as usize * stride;
            stride *= self.dims[a];
        }
        Some(idx)
    }

    fn position(&self, c: [i64; 3]) -> Vec3<f64> {
        self.origin + Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.res
    }

    fn nearest(&self, p: Vec3<f64>) -> [i64; 3] {
        let d = (p - self.origin) / self.res;
        [d.x.round() as i64, d.y.round() as i64, d.z.round() as i64]
    }
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f).then_with(|| o.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Shortest 26-connected grid path with every interior node at least
/// `clearance - tolerance` from static obstacles. Returns the vertex list
/// from `start` to `goal`, or `None` if the goal is unreachable.
pub(super) fn search(
    statics: &[Shape<f64>],
    area: &Area,
    start: Vec3<f64>,
    goal: Vec3<f64>,
    clearance: f64,
    cfg: &PlannerConfig,
) -> Option<Vec<Vec3<f64>>> {
    let inflate = clearance - cfg.clearance_tolerance;
    let grid = Grid::build(statics, area, start, goal, inflate, cfg);
    let s = grid.index([0, 0, 0])?;
    let g = grid.index(grid.nearest(goal))?;
    let goal_pos = grid.position(grid.coords(g));
    let n = grid.free.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    cost[s] = 0.0;
    open.push(Open {
        f: start.distance(goal_pos),
        node: s,
    });
    let mut offsets = Vec::with_capacity(26);
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if (dx, dy, dz) != (0, 0, 0) {
                    let len = ((dx * dx + dy * dy + dz * dz) as f64).sqrt() * grid.res;
                    offsets.push(([dx, dy, dz], len));
                }
            }
        }
    }
    while let Some(Open { node, .. }) = open.pop() {
        if closed[node] {
            continue;
        }
        if node == g {
            break;
        }
        closed[node] = true;
        let c = grid.coords(node);
        for &(d, len) in &offsets {
            let Some(next) = grid.index([c[0] + d[0], c[1] + d[1], c[2] + d[2]]) else {
                continue;
            };
            if closed[next] || !(grid.free[next] || next == g) {
                continue;
            }
            // The move itself must keep the inflation, not just its end nodes.
            if node != s && next != g && !segment_clear(statics, grid.position(c), grid.position(grid.coords(next)), inflate) {
                continue;
            }
            let tentative = cost[node] + len;
            if tentative < cost[next] {
                cost[next] = tentative;
                parent[next] = node;
                let h = grid.position(grid.coords(next)).distance(goal_pos);
                open.push(Open {
                    f: tentative + h,
                    node: next,
                });
            }
        }
    }
    if !cost[g].is_finite() {
        return None;
    }
    let mut nodes = vec![g];
    while *nodes.last().unwrap() != s {
        nodes.push(parent[*nodes.last().unwrap()]);
    }
    nodes.reverse();
    let mut out: Vec<Vec3<f64>> = nodes.iter().map(|&i| grid.position(grid.coords(i))).collect();
    out[0] = start;
    if goal.distance(goal_pos) > 1e-9 {
        out.push(goal);
    } else {
        *out.last_mut().unwrap() = goal;
    }
    if out.len() == 1 {
        out.push(goal);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Aabb;

    #[test]
    fn open_grid_is_straight() {
        let cfg = PlannerConfig::default();
        let a = Vec3::new(10.0, 10.0, 1.5);
        let b = Vec3::new(20.0, 13.0, 1.5);
        let path = search(&[], &Area::default(), a, b, 1.0, &cfg).unwrap();
        let len: f64 = path.windows(2).map(|w| w[0].distance(w[1])).sum();
        // 3 diagonal + 7 straight moves.
        assert!((len - (3.0 * 2f64.sqrt() + 7.0)).abs() < 1e-9);
        assert_eq!(path[0], a);
        assert_eq!(*path.last().unwrap(), b);
    }

    #[test]
    fn detours_around_box() {
        let cfg = PlannerConfig::default();
        let wall = Shape::Box(Aabb::new(Vec3::new(14.0, 0.0, 0.0), Vec3::new(16.0, 14.0, 30.0)));
        let a = Vec3::new(10.0, 10.0, 1.5);
        let b = Vec3::new(20.0, 10.0, 1.5);
        let path = search(&[wall], &Area::default(), a, b, 1.0, &cfg).unwrap();
        for p in &path[1..path.len() - 1] {
            assert!(wall.distance(*p) >= 0.9);
        }
        assert!(path.iter().any(|p| p.y >= 14.9));
    }
}

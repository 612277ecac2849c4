//! Spatial layouts of the state index set and the sensor motion model on them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker for "not reachable" in hop maps.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GeometryKind {
    Line {
        n: usize,
        periodic: bool,
    },
    /// Row-major grid; index = row * cols + col.
    Grid2d {
        rows: usize,
        cols: usize,
        periodic_rows: bool,
        periodic_cols: bool,
    },
    /// Undirected graph; distances are hop counts.
    Graph { adjacency: Vec<Vec<usize>> },
}

/// State-space layout with per-index coordinates in grid units (`[row, col]` for
/// grids and masked grids, `[i, 0]` for lines).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    kind: GeometryKind,
    coords: Vec<[f64; 2]>,
}

impl Geometry {
    pub fn line(n: usize, periodic: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("line geometry needs at least one cell"));
        }
        Ok(Self {
            kind: GeometryKind::Line { n, periodic },
            coords: (0..n).map(|i| [i as f64, 0.0]).collect(),
        })
    }

    pub fn grid2d(rows: usize, cols: usize, periodic_rows: bool, periodic_cols: bool) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg("grid geometry needs at least one cell"));
        }
        Ok(Self {
            kind: GeometryKind::Grid2d {
                rows,
                cols,
                periodic_rows,
                periodic_cols,
            },
            coords: (0..rows * cols)
                .map(|i| [(i / cols) as f64, (i % cols) as f64])
                .collect(),
        })
    }

    /// Torus: grid with periodic wrap on both axes.
    pub fn torus(rows: usize, cols: usize) -> Result<Self> {
        Self::grid2d(rows, cols, true, true)
    }

    pub fn graph(adjacency: Vec<Vec<usize>>, coords: Vec<[f64; 2]>) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::arg("graph geometry needs at least one node"));
        }
        if coords.len() != n {
            return Err(Error::arg("graph coordinates must match node count"));
        }
        for (i, nbrs) in adjacency.iter().enumerate() {
            for &j in nbrs {
                if j >= n || j == i {
                    return Err(Error::arg(format!("invalid edge {i} -> {j}")));
                }
                if !adjacency[j].contains(&i) {
                    return Err(Error::arg(format!("adjacency is not symmetric at {i} -> {j}")));
                }
            }
        }
        let adjacency = adjacency
            .into_iter()
            .map(|mut v| {
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        Ok(Self {
            kind: GeometryKind::Graph { adjacency },
            coords,
        })
    }

    pub fn kind(&self) -> &GeometryKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self, i: usize) -> [f64; 2] {
        self.coords[i]
    }

    /// Graph nodes without neighbors; never candidates for sensor placement.
    pub fn is_isolated(&self, i: usize) -> bool {
        match &self.kind {
            GeometryKind::Graph { adjacency } => adjacency[i].is_empty() && adjacency.len() > 1,
            _ => false,
        }
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        match &self.kind {
            GeometryKind::Graph { adjacency } => adjacency[i].clone(),
            _ => {
                let mut out = self.within(i, 1.0);
                out.retain(|&j| j != i);
                out
            }
        }
    }

    /// Distance between two indices: Euclidean (with declared periodic wrap) for
    /// lines and grids, hop count for graphs (`INFINITY` across components).
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        match &self.kind {
            GeometryKind::Line { n, periodic } => {
                let d = a.abs_diff(b);
                (if *periodic { d.min(n - d) } else { d }) as f64
            }
            GeometryKind::Grid2d {
                rows,
                cols,
                periodic_rows,
                periodic_cols,
            } => {
                let (ra, ca) = (a / cols, a % cols);
                let (rb, cb) = (b / cols, b % cols);
                let mut dr = ra.abs_diff(rb);
                let mut dc = ca.abs_diff(cb);
                if *periodic_rows {
                    dr = dr.min(rows - dr);
                }
                if *periodic_cols {
                    dc = dc.min(cols - dc);
                }
                ((dr * dr + dc * dc) as f64).sqrt()
            }
            GeometryKind::Graph { adjacency } => {
                let hops = bfs(adjacency, a, u32::MAX);
                match hops[b] {
                    UNREACHABLE => f64::INFINITY,
                    h => h as f64,
                }
            }
        }
    }

    fn diameter_bound(&self) -> f64 {
        match &self.kind {
            GeometryKind::Line { n, .. } => *n as f64,
            GeometryKind::Grid2d { rows, cols, .. } => ((rows * rows + cols * cols) as f64).sqrt(),
            GeometryKind::Graph { adjacency } => adjacency.len() as f64,
        }
    }

    /// All indices within distance `speed` of `from` (including `from`), sorted.
    pub fn within(&self, from: usize, speed: f64) -> Vec<usize> {
        let n = self.n();
        if speed >= self.diameter_bound() {
            return match &self.kind {
                GeometryKind::Graph { adjacency } => {
                    let hops = bfs(adjacency, from, u32::MAX);
                    (0..n).filter(|&i| hops[i] != UNREACHABLE).collect()
                }
                _ => (0..n).collect(),
            };
        }
        let radius = speed.max(0.0).floor() as usize;
        let mut out = match &self.kind {
            GeometryKind::Line { n, periodic } => {
                let mut v = Vec::with_capacity(2 * radius + 1);
                let n = *n as isize;
                for d in -(radius as isize)..=(radius as isize) {
                    let j = from as isize + d;
                    if *periodic {
                        v.push(j.rem_euclid(n) as usize);
                    } else if (0..n).contains(&j) {
                        v.push(j as usize);
                    }
                }
                v
            }
            GeometryKind::Grid2d {
                rows,
                cols,
                periodic_rows,
                periodic_cols,
            } => {
                let (r0, c0) = ((from / cols) as isize, (from % cols) as isize);
                let (nr, nc) = (*rows as isize, *cols as isize);
                let rad = radius as isize;
                let r2 = speed * speed * (1.0 + 1e-12);
                let mut v = Vec::new();
                for dr in -rad..=rad {
                    let r = r0 + dr;
                    let r = if *periodic_rows {
                        r.rem_euclid(nr)
                    } else if (0..nr).contains(&r) {
                        r
                    } else {
                        continue;
                    };
                    for dc in -rad..=rad {
                        if ((dr * dr + dc * dc) as f64) > r2 {
                            continue;
                        }
                        let c = c0 + dc;
                        let c = if *periodic_cols {
                            c.rem_euclid(nc)
                        } else if (0..nc).contains(&c) {
                            c
                        } else {
                            continue;
                        };
                        v.push((r * nc + c) as usize);
                    }
                }
                v
            }
            GeometryKind::Graph { adjacency } => {
                let hops = bfs(adjacency, from, radius as u32);
                (0..n).filter(|&i| hops[i] != UNREACHABLE).collect()
            }
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Minimum number of moves of length at most `speed` from any index to `target`
    /// ([`UNREACHABLE`] where impossible).
    pub fn hops_to(&self, target: usize, speed: f64) -> Vec<u32> {
        let n = self.n();
        if let GeometryKind::Graph { adjacency } = &self.kind {
            let hops = bfs(adjacency, target, u32::MAX);
            if speed.is_infinite() {
                return hops
                    .into_iter()
                    .enumerate()
                    .map(|(i, h)| match h {
                        UNREACHABLE => UNREACHABLE,
                        _ if i == target => 0,
                        _ => 1,
                    })
                    .collect();
            }
            let per_move = speed.max(0.0).floor() as u32;
            return hops
                .into_iter()
                .map(|h| match h {
                    0 => 0,
                    UNREACHABLE => UNREACHABLE,
                    _ if per_move == 0 => UNREACHABLE,
                    h => h.div_ceil(per_move),
                })
                .collect();
        }
        if speed >= self.diameter_bound() {
            return (0..n).map(|i| u32::from(i != target)).collect();
        }
        // Offsets reachable in one move, relative to the origin cell.
        let (rows, cols, wrap_r, wrap_c) = match self.kind {
            GeometryKind::Line { n, periodic } => (1, n, false, periodic),
            GeometryKind::Grid2d {
                rows,
                cols,
                periodic_rows,
                periodic_cols,
            } => (rows, cols, periodic_rows, periodic_cols),
            GeometryKind::Graph { .. } => unreachable!(),
        };
        let rad = speed.max(0.0).floor() as isize;
        let r2 = speed * speed * (1.0 + 1e-12);
        let stencil: Vec<(isize, isize)> = (-rad..=rad)
            .flat_map(|dr| (-rad..=rad).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| (dr, dc) != (0, 0) && ((dr * dr + dc * dc) as f64) <= r2)
            .filter(|&(dr, _)| rows > 1 || dr == 0)
            .collect();
        let (nr, nc) = (rows as isize, cols as isize);
        let mut hops = vec![UNREACHABLE; n];
        hops[target] = 0;
        let mut queue = VecDeque::from([target]);
        while let Some(u) = queue.pop_front() {
            let (r0, c0) = ((u / cols) as isize, (u % cols) as isize);
            for &(dr, dc) in &stencil {
                let (mut r, mut c) = (r0 + dr, c0 + dc);
                if wrap_r {
                    r = r.rem_euclid(nr);
                } else if !(0..nr).contains(&r) {
                    continue;
                }
                if wrap_c {
                    c = c.rem_euclid(nc);
                } else if !(0..nc).contains(&c) {
                    continue;
                }
                let v = (r * nc + c) as usize;
                if hops[v] == UNREACHABLE {
                    hops[v] = hops[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        hops
    }

    /// Human-readable coordinates, e.g. `12:7` for a grid cell.
    pub fn coord_label(&self, i: usize) -> String {
        let [a, b] = self.coords[i];
        match &self.kind {
            GeometryKind::Line { .. } => format!("{}", a as i64),
            _ => format!("{}:{}", a as i64, b as i64),
        }
    }
}

/// Breadth-first hop distances from `source`, truncated at `max_depth`.
fn bfs(adjacency: &[Vec<usize>], source: usize, max_depth: u32) -> Vec<u32> {
    let mut hops = vec![UNREACHABLE; adjacency.len()];
    hops[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        if hops[u] >= max_depth {
            continue;
        }
        for &v in &adjacency[u] {
            if hops[v] == UNREACHABLE {
                hops[v] = hops[u] + 1;
                queue.push_back(v);
            }
        }
    }
    hops
}

/// Per-step sensor speed in grid units (`f64::INFINITY` = unconstrained).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionConstraint {
    pub speed: f64,
}

impl MotionConstraint {
    pub fn new(speed: f64) -> Result<Self> {
        if speed.is_nan() || speed < 0.0 {
            return Err(Error::arg(format!("speed must be nonnegative, got {speed}")));
        }
        Ok(Self { speed })
    }

    pub fn unconstrained() -> Self {
        Self {
            speed: f64::INFINITY,
        }
    }

    pub fn allows(&self, geom: &Geometry, from: usize, to: usize) -> bool {
        from == to || geom.distance(from, to) <= self.speed * (1.0 + 1e-12)
    }
}

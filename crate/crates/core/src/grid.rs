//! Structured grids on the domain factor.
//!
//! Tori use a uniform periodic grid. The 2-sphere uses colatitude rows
//! `θ_j = (j + ½)π/N_θ` (no node on a pole) and periodic longitude columns
//! `φ_i = 2πi/N_φ`. A stencil step across a pole lands on the same colatitude
//! row at longitude `φ + π`, which is why `N_φ` must be even.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{geometry_at, ManifoldSpec, MetricData};
use crate::linalg::MAX_DIM;

pub const MIN_RESOLUTION: usize = 8;

/// Precomputed neighbour table. For each node the entries are, in order:
/// the node itself; `+e_d`, `-e_d` for each direction `d`; and for each pair
/// `d < e` the four diagonal points `(+,+), (+,-), (-,+), (-,-)`; finally
/// `+2e_d`, `-2e_d` for each direction.
#[derive(Debug)]
struct Stencil {
    width: usize,
    table: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct Grid {
    spec: ManifoldSpec,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    stencil: Arc<Stencil>,
    metrics: Arc<Vec<MetricData>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.shape == other.shape && self.spacing == other.spacing
    }
}

pub const fn stencil_width(dim: usize) -> usize {
    1 + 4 * dim + 2 * dim * (dim - 1)
}

pub const fn far_plus(dim: usize, d: usize) -> usize {
    1 + 2 * dim + 2 * dim * (dim - 1) + 2 * d
}

pub const fn far_minus(dim: usize, d: usize) -> usize {
    far_plus(dim, d) + 1
}

pub const fn plus(d: usize) -> usize {
    1 + 2 * d
}

pub const fn minus(d: usize) -> usize {
    2 + 2 * d
}

/// Slot of the diagonal point `(s_d e_d + s_e e_e)`, `d < e`; `pos_d`/`pos_e` pick the signs.
pub fn diagonal(dim: usize, d: usize, e: usize, pos_d: bool, pos_e: bool) -> usize {
    debug_assert!(d < e && e < dim);
    let mut pair = 0;
    for a in 0..d {
        pair += dim - 1 - a;
    }
    pair += e - d - 1;
    let corner = match (pos_d, pos_e) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    };
    1 + 2 * dim + 4 * pair + corner
}

/// Builds a uniform grid on `spec` with `resolution[d]` nodes per direction.
pub fn make_grid(spec: &ManifoldSpec, resolution: &[usize]) -> Result<Grid> {
    spec.validate()?;
    let dim = spec.dim();
    if resolution.len() != dim {
        return Err(Error::Config(format!(
            "resolution has {} entries, domain has dimension {dim}",
            resolution.len()
        )));
    }
    if let Some(r) = resolution.iter().find(|&&r| r < MIN_RESOLUTION) {
        return Err(Error::Config(format!(
            "resolution {r} is below the minimum of {MIN_RESOLUTION} nodes per direction"
        )));
    }
    let spacing: Vec<f64> = match spec {
        ManifoldSpec::FlatTorus { periods } => periods
            .iter()
            .zip(resolution)
            .map(|(p, &r)| p / r as f64)
            .collect(),
        ManifoldSpec::RoundSphere { dim, .. } => {
            if *dim != 2 {
                return Err(Error::Config(format!(
                    "sphere grids are supported in dimension 2 only, got {dim}"
                )));
            }
            if resolution[1] % 2 != 0 {
                return Err(Error::Config(format!(
                    "sphere longitude count must be even, got {}",
                    resolution[1]
                )));
            }
            vec![PI / resolution[0] as f64, 2.0 * PI / resolution[1] as f64]
        }
    };
    let mut grid = Grid {
        spec: spec.clone(),
        shape: resolution.to_vec(),
        spacing,
        stencil: Arc::new(Stencil {
            width: 0,
            table: Vec::new(),
        }),
        metrics: Arc::new(Vec::new()),
    };
    grid.stencil = Arc::new(grid.build_stencil());
    grid.metrics = Arc::new(grid.build_metrics()?);
    Ok(grid)
}

impl Grid {
    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_sphere(&self) -> bool {
        self.spec.is_sphere()
    }

    /// Product of the spacings: the chart cell volume.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Row-major multi-index of a node (first direction slowest).
    pub fn multi_index(&self, node: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = node;
        for d in (0..self.dim()).rev() {
            idx[d] = rest % self.shape[d];
            rest /= self.shape[d];
        }
        idx
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        let mut n = 0;
        for d in 0..self.dim() {
            n = n * self.shape[d] + idx[d];
        }
        n
    }

    /// Chart coordinates of a node.
    pub fn coords(&self, node: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(node);
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dim() {
            x[d] = if self.is_sphere() && d == 0 {
                (idx[d] as f64 + 0.5) * self.spacing[d]
            } else {
                idx[d] as f64 * self.spacing[d]
            };
        }
        x
    }

    /// Exact domain metric at a node.
    pub fn metric(&self, node: usize) -> &MetricData {
        if self.is_sphere() {
            &self.metrics[node / self.shape[1]]
        } else {
            &self.metrics[0]
        }
    }

    /// Neighbour indices of `node` in stencil order (see [`stencil_width`]).
    pub fn neighbours(&self, node: usize) -> &[u32] {
        let w = self.stencil.width;
        &self.stencil.table[node * w..(node + 1) * w]
    }

    /// Node reached from `idx` by the signed offsets, following the topology.
    fn shifted(&self, idx: &[usize; MAX_DIM], offset: &[i64; MAX_DIM]) -> usize {
        let dim = self.dim();
        let mut out = [0usize; MAX_DIM];
        let mut lon_shift = 0i64;
        for d in 0..dim {
            let n = self.shape[d] as i64;
            let mut v = idx[d] as i64 + offset[d];
            if self.is_sphere() && d == 0 {
                if v < 0 {
                    v = -v - 1;
                    lon_shift = n_lon_half(self);
                } else if v >= n {
                    v = 2 * n - v - 1;
                    lon_shift = n_lon_half(self);
                }
                out[d] = v as usize;
            } else {
                let v = if self.is_sphere() && d == 1 { v + lon_shift } else { v };
                out[d] = v.rem_euclid(n) as usize;
            }
        }
        self.node_index(&out[..dim])
    }

    fn build_stencil(&self) -> Stencil {
        let dim = self.dim();
        let width = stencil_width(dim);
        let mut table = Vec::with_capacity(self.len() * width);
        for node in 0..self.len() {
            let idx = self.multi_index(node);
            let start = table.len();
            table.resize(start + width, 0u32);
            table[start] = node as u32;
            for d in 0..dim {
                let mut o = [0i64; MAX_DIM];
                o[d] = 1;
                table[start + plus(d)] = self.shifted(&idx, &o) as u32;
                o[d] = -1;
                table[start + minus(d)] = self.shifted(&idx, &o) as u32;
                o[d] = 2;
                table[start + far_plus(dim, d)] = self.shifted(&idx, &o) as u32;
                o[d] = -2;
                table[start + far_minus(dim, d)] = self.shifted(&idx, &o) as u32;
            }
            for d in 0..dim {
                for e in d + 1..dim {
                    for (sd, se) in [(true, true), (true, false), (false, true), (false, false)] {
                        let mut o = [0i64; MAX_DIM];
                        o[d] = if sd { 1 } else { -1 };
                        o[e] = if se { 1 } else { -1 };
                        table[start + diagonal(dim, d, e, sd, se)] = self.shifted(&idx, &o) as u32;
                    }
                }
            }
        }
        Stencil { width, table }
    }

    fn build_metrics(&self) -> Result<Vec<MetricData>> {
        if self.is_sphere() {
            (0..self.shape[0])
                .map(|row| {
                    let node = row * self.shape[1];
                    let x = self.coords(node);
                    geometry_at(&self.spec, &x[..2])
                })
                .collect()
        } else {
            let x = [0.0; MAX_DIM];
            Ok(vec![geometry_at(&self.spec, &x[..self.dim()])?])
        }
    }
}

fn n_lon_half(grid: &Grid) -> i64 {
    grid.shape[1] as i64 / 2
}

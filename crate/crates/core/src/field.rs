//! The discretized map `f: Σ₁ → Σ₂`, its chart derivatives, and the flow state.
//!
//! Torus targets store two periodic coordinates per node; stencils use
//! minimal-image differences so a period jump is never differentiated.
//! Sphere targets store the ambient position in `R³` at radius `1/√k₂`;
//! derivatives are projected onto the tangent plane at the node's value.

use crate::error::{Error, Result};
use crate::geometry::ManifoldSpec;
use crate::grid::{diagonal, far_minus, far_plus, minus, plus, Grid};
use crate::linalg::{cross, dot, norm3, Vec3, MAX_DIM};

/// Below this norm a sphere-target value has no radial projection.
pub const MIN_SPHERE_NORM: f64 = 1e-8;

/// Target-side behaviour derived from `Σ₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Torus { periods: [f64; 2] },
    Sphere { radius: f64 },
}

impl Target {
    pub fn from_spec(spec: &ManifoldSpec) -> Result<Self> {
        match spec {
            ManifoldSpec::FlatTorus { periods } if periods.len() == 2 => Ok(Target::Torus {
                periods: [periods[0], periods[1]],
            }),
            ManifoldSpec::RoundSphere { dim: 2, .. } => Ok(Target::Sphere {
                radius: spec.radius().unwrap(),
            }),
            other => Err(Error::Config(format!(
                "target factor must be a 2-torus or a 2-sphere, got {other}"
            ))),
        }
    }

    /// Number of stored components per node.
    pub fn comps(&self) -> usize {
        match self {
            Target::Torus { .. } => 2,
            Target::Sphere { .. } => 3,
        }
    }

    /// Displacement `to - from` (minimal image on tori).
    #[inline]
    pub fn delta(&self, from: &[f64], to: &[f64]) -> Vec3 {
        match self {
            Target::Torus { periods } => {
                let mut d = [0.0; 3];
                for a in 0..2 {
                    let p = periods[a];
                    let x = to[a] - from[a];
                    d[a] = if x.abs() <= 0.5 * p { x } else { x - p * (x / p).round() };
                }
                d
            }
            Target::Sphere { .. } => [to[0] - from[0], to[1] - from[1], to[2] - from[2]],
        }
    }

    /// Orthonormal tangent basis at a stored value, as ambient vectors.
    /// On spheres `(t₁, t₂, outward normal)` is positively oriented.
    pub fn tangent_basis(&self, value: &[f64]) -> [Vec3; 2] {
        match self {
            Target::Torus { .. } => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            Target::Sphere { .. } => sphere_tangent_basis(&[value[0], value[1], value[2]]),
        }
    }

    /// Removes the radial component on spheres; identity on tori.
    #[inline]
    pub fn project(&self, value: &[f64], v: &Vec3) -> Vec3 {
        match self {
            Target::Torus { .. } => *v,
            Target::Sphere { .. } => {
                let p = [value[0], value[1], value[2]];
                let pp = dot(3, &p, &p);
                let s = dot(3, &p, v) / pp;
                [v[0] - s * p[0], v[1] - s * p[1], v[2] - s * p[2]]
            }
        }
    }
}

pub fn sphere_tangent_basis(p: &Vec3) -> [Vec3; 2] {
    let n = norm3(p);
    let u = [p[0] / n, p[1] / n, p[2] / n];
    let mut axis = 0;
    for a in 1..3 {
        if u[a].abs() < u[axis].abs() {
            axis = a;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let s = u[axis];
    let t = [e[0] - s * u[0], e[1] - s * u[1], e[2] - s * u[2]];
    let tn = norm3(&t);
    let t1 = [t[0] / tn, t[1] / tn, t[2] / tn];
    let t2 = cross(&u, &t1);
    [t1, t2]
}

/// The map `f` sampled at the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    pub grid: Grid,
    pub target: ManifoldSpec,
    pub values: Vec<f64>,
}

impl MapField {
    /// Builds a field from per-node values; `value_at(node, coords, out)` fills
    /// the target components.
    pub fn from_fn(
        grid: Grid,
        target: ManifoldSpec,
        mut value_at: impl FnMut(usize, &[f64], &mut [f64]),
    ) -> Result<Self> {
        let t = Target::from_spec(&target)?;
        let c = t.comps();
        let mut values = vec![0.0; grid.len() * c];
        for node in 0..grid.len() {
            let x = grid.coords(node);
            value_at(node, &x[..grid.dim()], &mut values[node * c..(node + 1) * c]);
        }
        Ok(MapField {
            grid,
            target,
            values,
        })
    }

    pub fn target_kind(&self) -> Target {
        Target::from_spec(&self.target).expect("field target validated at construction")
    }

    pub fn comps(&self) -> usize {
        self.target_kind().comps()
    }

    pub fn value(&self, node: usize) -> &[f64] {
        let c = self.comps();
        &self.values[node * c..(node + 1) * c]
    }
}

/// Simulation state: `Σ_t` as the graph of `field` at `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub time: f64,
    pub field: MapField,
    pub step_index: u64,
}

impl FlowState {
    pub fn new(field: MapField) -> Self {
        FlowState {
            time: 0.0,
            field,
            step_index: 0,
        }
    }
}

/// Chart derivatives of `f` at a node, expressed in an orthonormal basis of
/// the target tangent plane at `f(node)`.
///
/// `df[i][a]` is component `a` of `∂_i f`. `second[i][j][a]` is component `a`
/// of the target-covariant second derivative `∇^{Σ₂}_{∂_i} ∂_j f` (for tori the
/// plain second derivative); domain Christoffel corrections are not included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DifferentialData {
    pub dim: usize,
    pub df: [[f64; 2]; MAX_DIM],
    pub second: [[[f64; 2]; MAX_DIM]; MAX_DIM],
    /// Ambient vectors of the tangent basis used for the components.
    pub basis: [Vec3; 2],
}

/// Ambient chart derivatives from the central-difference stencil.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RawDerivatives {
    pub first: [Vec3; MAX_DIM],
    pub second: [[Vec3; MAX_DIM]; MAX_DIM],
}

#[inline]
pub(crate) fn raw_derivatives(
    grid: &Grid,
    target: &Target,
    values: &[f64],
    node: usize,
) -> RawDerivatives {
    let dim = grid.dim();
    let c = target.comps();
    let nb = grid.neighbours(node);
    let h = grid.spacing();
    let centre = &values[node * c..(node + 1) * c];
    let at = |slot: usize| {
        let j = nb[slot] as usize;
        target.delta(centre, &values[j * c..(j + 1) * c])
    };
    let mut first = [[0.0; 3]; MAX_DIM];
    let mut second = [[[0.0; 3]; MAX_DIM]; MAX_DIM];
    for d in 0..dim {
        let p = at(plus(d));
        let m = at(minus(d));
        let inv2h = 0.5 / h[d];
        let invh2 = 1.0 / (h[d] * h[d]);
        for a in 0..c {
            first[d][a] = (p[a] - m[a]) * inv2h;
            second[d][d][a] = (p[a] + m[a]) * invh2;
        }
    }
    for d in 0..dim {
        for e in d + 1..dim {
            let pp = at(diagonal(dim, d, e, true, true));
            let pm = at(diagonal(dim, d, e, true, false));
            let mp = at(diagonal(dim, d, e, false, true));
            let mm = at(diagonal(dim, d, e, false, false));
            let s = 0.25 / (h[d] * h[e]);
            for a in 0..c {
                let v = (pp[a] - pm[a] - mp[a] + mm[a]) * s;
                second[d][e][a] = v;
                second[e][d][a] = v;
            }
        }
    }
    RawDerivatives { first, second }
}

/// On sphere domains, replaces `∂_θ f` and `∂_φφ f` by fourth-order
/// differences. Near the poles the flow operator divides
/// `∂_φφ f + sinθ cosθ ∂_θ f` by `sin²θ`, and second-order errors in the two
/// terms do not cancel there.
pub(crate) fn sharpen_polar(grid: &Grid, target: &Target, values: &[f64], node: usize, raw: &mut RawDerivatives) {
    if !grid.is_sphere() {
        return;
    }
    let c = target.comps();
    let nb = grid.neighbours(node);
    let h = grid.spacing();
    let centre = &values[node * c..(node + 1) * c];
    let at = |slot: usize| {
        let j = nb[slot] as usize;
        target.delta(centre, &values[j * c..(j + 1) * c])
    };
    let (p, m, p2, m2) = (at(plus(0)), at(minus(0)), at(far_plus(2, 0)), at(far_minus(2, 0)));
    for a in 0..c {
        raw.first[0][a] = (8.0 * (p[a] - m[a]) - (p2[a] - m2[a])) / (12.0 * h[0]);
    }
    let (p, m, p2, m2) = (at(plus(1)), at(minus(1)), at(far_plus(2, 1)), at(far_minus(2, 1)));
    for a in 0..c {
        raw.second[1][1][a] = (16.0 * (p[a] + m[a]) - (p2[a] + m2[a])) / (12.0 * h[1] * h[1]);
    }
}

fn check_finite(field: &MapField, node: usize) -> Result<()> {
    let c = field.comps();
    for &j in field.grid.neighbours(node) {
        let j = j as usize;
        if field.values[j * c..(j + 1) * c].iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                node,
                what: format!("non-finite value at stencil neighbour {j}"),
            });
        }
    }
    Ok(())
}

/// Second-order central-difference derivatives of `f` at `node`.
pub fn differential_at(field: &MapField, node: usize) -> Result<DifferentialData> {
    if node >= field.grid.len() {
        return Err(Error::Validation(format!("node {node} out of range")));
    }
    check_finite(field, node)?;
    let target = field.target_kind();
    let raw = raw_derivatives(&field.grid, &target, &field.values, node);
    let basis = target.tangent_basis(field.value(node));
    let dim = field.grid.dim();
    let mut out = DifferentialData {
        dim,
        df: [[0.0; 2]; MAX_DIM],
        second: [[[0.0; 2]; MAX_DIM]; MAX_DIM],
        basis,
    };
    for i in 0..dim {
        for a in 0..2 {
            out.df[i][a] = dot(3, &raw.first[i], &basis[a]);
            for j in 0..dim {
                out.second[i][j][a] = dot(3, &raw.second[i][j], &basis[a]);
            }
        }
    }
    Ok(out)
}

/// Wraps torus values into the fundamental domain, rescales sphere values to
/// the target radius. Idempotent.
pub fn chart_normalize(field: &MapField) -> Result<MapField> {
    let mut out = field.clone();
    normalize_values(&field.target_kind(), &mut out.values)?;
    Ok(out)
}

pub(crate) fn normalize_values(target: &Target, values: &mut [f64]) -> Result<()> {
    match *target {
        Target::Torus { periods } => {
            for pair in values.chunks_mut(2) {
                for a in 0..2 {
                    pair[a] = wrap(pair[a], periods[a]);
                }
            }
        }
        Target::Sphere { radius } => {
            for (node, v) in values.chunks_mut(3).enumerate() {
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if !n.is_finite() || n < MIN_SPHERE_NORM {
                    return Err(Error::Numeric {
                        node,
                        what: format!("sphere value of norm {n:e} has no radial projection"),
                    });
                }
                if ((n - radius) / radius).abs() > 1e-14 {
                    let s = radius / n;
                    v.iter_mut().for_each(|x| *x *= s);
                }
            }
        }
    }
    Ok(())
}

/// Representative of `x` modulo `period` in `[0, period)`.
pub fn wrap(x: f64, period: f64) -> f64 {
    if (0.0..period).contains(&x) {
        return x;
    }
    let mut r = x - period * (x / period).floor();
    if r >= period {
        r -= period;
    }
    if r < 0.0 {
        r = 0.0;
    }
    r
}

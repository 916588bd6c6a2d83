//! Library of initial maps `f₀ : Σ₁ → Σ₂`.

use std::f64::consts::PI;
use std::fmt;

use graphflow::field::wrap;
use graphflow::{Grid, ManifoldSpec, MapField, ProductSpec};

/// Relative tolerance for the lattice condition `A Λ₁ ⊂ Λ₂`.
const PERIOD_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialMap {
    /// `f ≡ point` (target chart values: torus coordinates or a point of `R³`).
    Constant { point: Vec<f64> },
    /// `f(x) = A x + b` between tori; `matrix` is `2 × n`, row-major.
    Affine { matrix: Vec<f64>, offset: Vec<f64> },
    /// The affine map plus `ε (sin(2π x²/L₂), cos(2π x¹/L₁))`.
    PerturbedAffine {
        matrix: Vec<f64>,
        offset: Vec<f64>,
        epsilon: f64,
    },
    /// `f(p) = exp_N(ε W(p))` on `S² → S²`, `N` the north pole and
    /// `W(θ, φ) = (sin θ cos φ, sin θ sin φ)` in the `(x, y)` directions at `N`.
    SphereHarmonic { epsilon: f64 },
    /// Identity of a factor onto a copy of itself (up to the target scale).
    Identity,
}

impl InitialMap {
    pub fn name(&self) -> &'static str {
        match self {
            InitialMap::Constant { .. } => "constant",
            InitialMap::Affine { .. } => "affine",
            InitialMap::PerturbedAffine { .. } => "perturbed-affine",
            InitialMap::SphereHarmonic { .. } => "sphere-harmonic",
            InitialMap::Identity => "identity",
        }
    }

    pub const NAMES: [&'static str; 5] =
        ["constant", "affine", "perturbed-affine", "sphere-harmonic", "identity"];

    /// Checks the parameters against the factors; errors are messages for the config report.
    pub fn validate(&self, product: &ProductSpec) -> Vec<String> {
        let mut errs = Vec::new();
        let n = product.n();
        let (s1, s2) = (&product.sigma1, &product.sigma2);
        match self {
            InitialMap::Constant { point } => {
                let want = if s2.is_sphere() { 3 } else { 2 };
                if point.len() != want {
                    errs.push(format!("constant point needs {want} components, got {}", point.len()));
                } else if s2.is_sphere() && point.iter().all(|v| *v == 0.0) {
                    errs.push("constant point on a sphere must be nonzero".into());
                }
            }
            InitialMap::Affine { matrix, offset }
            | InitialMap::PerturbedAffine { matrix, offset, .. } => {
                match (periods(s1), periods(s2)) {
                    (Some(p1), Some(p2)) => {
                        if matrix.len() != 2 * n {
                            errs.push(format!(
                                "matrix needs 2 x {n} = {} entries, got {}",
                                2 * n,
                                matrix.len()
                            ));
                        } else if let Some(msg) = lattice_violation(matrix, p1, p2) {
                            errs.push(msg);
                        }
                        if offset.len() != 2 {
                            errs.push(format!("offset needs 2 components, got {}", offset.len()));
                        }
                    }
                    _ => errs.push(format!("map `{}` needs torus factors", self.name())),
                }
                if let InitialMap::PerturbedAffine { epsilon, .. } = self {
                    if !epsilon.is_finite() {
                        errs.push("epsilon must be finite".into());
                    }
                }
            }
            InitialMap::SphereHarmonic { epsilon } => {
                if !(s1.is_sphere() && s2.is_sphere()) {
                    errs.push("map `sphere-harmonic` needs sphere factors".into());
                }
                if !(epsilon.is_finite() && *epsilon >= 0.0) {
                    errs.push(format!("epsilon must be nonnegative, got {epsilon}"));
                }
            }
            InitialMap::Identity => match (s1, s2) {
                (ManifoldSpec::RoundSphere { .. }, ManifoldSpec::RoundSphere { .. }) => {}
                (ManifoldSpec::FlatTorus { periods: p1 }, ManifoldSpec::FlatTorus { periods: p2 })
                    if n == 2 =>
                {
                    if let Some(msg) = lattice_violation(&[1.0, 0.0, 0.0, 1.0], p1, p2) {
                        errs.push(msg);
                    }
                }
                _ => errs.push("map `identity` needs two factors of the same kind and dimension".into()),
            },
        }
        errs
    }

    /// Samples the map on `grid`. Parameters must have passed [`validate`](Self::validate).
    pub fn build(&self, grid: &Grid, product: &ProductSpec) -> graphflow::Result<MapField> {
        let target = product.sigma2.clone();
        let n = product.n();
        match self {
            InitialMap::Constant { point } => {
                let p = match target.radius() {
                    Some(r) => {
                        let s = r / point.iter().map(|v| v * v).sum::<f64>().sqrt();
                        point.iter().map(|v| v * s).collect()
                    }
                    None => {
                        let p2 = periods(&target).unwrap();
                        vec![wrap(point[0], p2[0]), wrap(point[1], p2[1])]
                    }
                };
                MapField::from_fn(grid.clone(), target, |_, _, v| v.copy_from_slice(&p))
            }
            InitialMap::Affine { matrix, offset } => affine(grid, &target, n, matrix, offset, 0.0),
            InitialMap::PerturbedAffine {
                matrix,
                offset,
                epsilon,
            } => affine(grid, &target, n, matrix, offset, *epsilon),
            InitialMap::SphereHarmonic { epsilon } => {
                let r = target.radius().unwrap();
                let eps = *epsilon;
                MapField::from_fn(grid.clone(), target, |_, x, v| {
                    let (a, b) = (eps * x[0].sin() * x[1].cos(), eps * x[0].sin() * x[1].sin());
                    let len = (a * a + b * b).sqrt();
                    let s = if len > 0.0 { r * (len / r).sin() / len } else { 1.0 };
                    v[0] = s * a;
                    v[1] = s * b;
                    v[2] = r * (len / r).cos();
                })
            }
            InitialMap::Identity => match target.radius() {
                Some(r) => MapField::from_fn(grid.clone(), target, |_, x, v| {
                    v[0] = r * x[0].sin() * x[1].cos();
                    v[1] = r * x[0].sin() * x[1].sin();
                    v[2] = r * x[0].cos();
                }),
                None => affine(grid, &target, n, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 0.0),
            },
        }
    }
}

impl fmt::Display for InitialMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn periods(spec: &ManifoldSpec) -> Option<&[f64]> {
    match spec {
        ManifoldSpec::FlatTorus { periods } => Some(periods),
        ManifoldSpec::RoundSphere { .. } => None,
    }
}

/// `None` when `A e_i L₁ᵢ` lies in the target lattice for every `i`.
fn lattice_violation(matrix: &[f64], p1: &[f64], p2: &[f64]) -> Option<String> {
    let n = p1.len();
    for a in 0..2 {
        for i in 0..n {
            let q = matrix[a * n + i] * p1[i] / p2[a];
            if (q - q.round()).abs() > PERIOD_TOL * q.abs().max(1.0) {
                return Some(format!(
                    "matrix entry ({}, {}) = {} is not period-compatible: \
                     it maps the domain period {} to {} target periods {}, not an integer",
                    a + 1,
                    i + 1,
                    matrix[a * n + i],
                    p1[i],
                    q,
                    p2[a]
                ));
            }
        }
    }
    None
}

fn affine(
    grid: &Grid,
    target: &ManifoldSpec,
    n: usize,
    matrix: &[f64],
    offset: &[f64],
    eps: f64,
) -> graphflow::Result<MapField> {
    let p1 = periods(grid.spec()).unwrap().to_vec();
    let p2 = periods(target).unwrap().to_vec();
    MapField::from_fn(grid.clone(), target.clone(), |_, x, v| {
        for a in 0..2 {
            let lin: f64 = (0..n).map(|i| matrix[a * n + i] * x[i]).sum();
            let wave = if a == 0 {
                (2.0 * PI * x[1] / p1[1]).sin()
            } else {
                (2.0 * PI * x[0] / p1[0]).cos()
            };
            v[a] = wrap(lin + offset[a] + eps * wave, p2[a]);
        }
    })
}

//! Pointwise Gauss-map functionals of a graph: singular values of `df`,
//! `η`, `η₁ = *Ω₁`, the one-parameter family `*Ω`, adapted frames, the second
//! fundamental form and the curvature reaction terms for sphere factors.

use crate::error::{Error, Result};
use crate::field::{differential_at, DifferentialData, MapField};
use crate::geometry::{MetricData, ProductVector};
use crate::linalg::{backward_solve_t, cholesky, det, forward_solve, sym_eigen, Mat, Vec3, MAX_DIM};

/// Eigenvalues of the pullback form below this magnitude are set to zero.
pub const LAMBDA_SQ_CLAMP: f64 = 1e-14;

/// Gram matrix of the orthonormal target basis that `DifferentialData` uses.
pub const ORTHONORMAL_TARGET: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

const CLUSTER_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularData {
    /// `λ₁ ≥ λ₂ ≥ 0`.
    pub lambdas: [f64; 2],
    /// Orientation of `df` on the 2-plane it does not kill; `+1` when it has none.
    pub det_sign: f64,
}

impl SingularData {
    pub fn new(l1: f64, l2: f64) -> Self {
        let (a, b) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
        SingularData {
            lambdas: [a.max(0.0), b.max(0.0)],
            det_sign: 1.0,
        }
    }

    pub fn product(&self) -> f64 {
        self.lambdas[0] * self.lambdas[1]
    }

    /// `(1 + λ₁²)(1 + λ₂²)`.
    pub fn d(&self) -> f64 {
        (1.0 + self.lambdas[0].powi(2)) * (1.0 + self.lambdas[1].powi(2))
    }

    /// `λ_i` with zero-based `i`; zero beyond the second.
    pub fn lambda(&self, i: usize) -> f64 {
        if i < 2 {
            self.lambdas[i]
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussFunctionals {
    pub eta: f64,
    pub eta1: f64,
    pub comass_pullback: f64,
    pub product: f64,
}

impl GaussFunctionals {
    /// Gauss map inside the area-decreasing region.
    pub fn in_class(&self) -> bool {
        self.eta > 0.0
    }
}

pub fn gauss_functionals(sv: &SingularData) -> GaussFunctionals {
    let p = sv.product();
    let s = sv.d().sqrt();
    GaussFunctionals {
        eta: (1.0 - p) / s,
        eta1: 1.0 / s,
        comass_pullback: p,
        product: p,
    }
}

/// `*Ω` for `Ω = Ω₁ − Ω₂ ∧ ω` where `ω(a₃, …, a_n) = omega`.
pub fn star_omega(sv: &SingularData, omega: f64) -> Result<f64> {
    if !(omega.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "omega value {omega} outside [-1, 1]: the family requires comass one"
        )));
    }
    Ok((1.0 - sv.product() * omega) / sv.d().sqrt())
}

/// Orthonormal frames adapted to the singular value decomposition of `df`.
///
/// Domain vectors are given both in chart components (`domain_chart`) and
/// in the orthonormal coordinates of the Cholesky basis of `g₁` (`domain`);
/// `tangent`/`normal` use the latter for their base parts and the target
/// orthonormal basis for their fiber parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptedFrame {
    pub dim: usize,
    pub lambdas: [f64; MAX_DIM],
    pub domain_chart: [Vec3; MAX_DIM],
    pub domain: [Vec3; MAX_DIM],
    pub target: [[f64; 2]; 2],
    pub tangent: [ProductVector; MAX_DIM],
    pub normal: [ProductVector; 2],
    pub det_sign: f64,
}

impl AdaptedFrame {
    pub fn singular_data(&self) -> SingularData {
        SingularData {
            lambdas: [self.lambdas[0], self.lambdas[1]],
            det_sign: self.det_sign,
        }
    }
}

fn check_diff(diff: &DifferentialData) -> Result<()> {
    let dim = diff.dim;
    if diff.df[..dim].iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            node: usize::MAX,
            what: "non-finite differential".into(),
        });
    }
    Ok(())
}

fn pullback(diff: &DifferentialData, g2: &[[f64; 2]; 2]) -> Mat {
    let dim = diff.dim;
    let mut p = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..dim {
        for j in 0..dim {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += diff.df[i][a] * g2[a][b] * diff.df[j][b];
                }
            }
            p[i][j] = s;
        }
    }
    p
}

/// Replaces an eigenbasis of a repeated eigenvalue by the Gram-Schmidt
/// projection of the standard basis.
fn canonical_cluster(dim: usize, vecs: &[Vec3]) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(vecs.len());
    for k in 0..dim {
        if out.len() == vecs.len() {
            break;
        }
        let mut p = [0.0; MAX_DIM];
        for v in vecs {
            for c in 0..dim {
                p[c] += v[k] * v[c];
            }
        }
        for q in &out {
            let s: f64 = (0..dim).map(|c| q[c] * p[c]).sum();
            for c in 0..dim {
                p[c] -= s * q[c];
            }
        }
        let n = (0..dim).map(|c| p[c] * p[c]).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push([p[0] / n, p[1] / n, p[2] / n]);
        }
    }
    out
}

fn sign_normalize(dim: usize, v: &mut Vec3) {
    let mut best = 0;
    for c in 1..dim {
        if v[c].abs() > v[best].abs() + 1e-12 {
            best = c;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn adapted_frame(
    diff: &DifferentialData,
    g1: &MetricData,
    g2: &[[f64; 2]; 2],
) -> Result<AdaptedFrame> {
    check_diff(diff)?;
    let dim = diff.dim;
    let l = cholesky(dim, &g1.g)
        .ok_or_else(|| Error::Validation("domain metric is not positive definite".into()))?;
    let p = pullback(diff, g2);

    // M = L⁻¹ P L⁻ᵀ
    let mut x = [[0.0; MAX_DIM]; MAX_DIM];
    for j in 0..dim {
        let col = [p[0][j], p[1][j], p[2][j]];
        let y = forward_solve(dim, &l, &col);
        for i in 0..dim {
            x[i][j] = y[i];
        }
    }
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for j in 0..dim {
        let col = [x[j][0], x[j][1], x[j][2]];
        let y = forward_solve(dim, &l, &col);
        for i in 0..dim {
            m[i][j] = y[i];
        }
    }
    for i in 0..dim {
        for j in 0..i {
            let s = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = s;
            m[j][i] = s;
        }
    }

    let (vals, vecs) = sym_eigen(dim, &m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut mu = [0.0; MAX_DIM];
    let mut w = [[0.0; MAX_DIM]; MAX_DIM];
    for (k, &o) in order.iter().enumerate() {
        mu[k] = if vals[o].abs() < LAMBDA_SQ_CLAMP { 0.0 } else { vals[o].max(0.0) };
        w[k] = vecs[o];
    }

    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && (mu[start] - mu[end]).abs() <= CLUSTER_TOL * mu[start].abs().max(1.0) {
            end += 1;
        }
        if end - start > 1 {
            let canon = canonical_cluster(dim, &w[start..end]);
            if canon.len() == end - start {
                w[start..end].copy_from_slice(&canon);
            }
        } else {
            sign_normalize(dim, &mut w[start]);
        }
        start = end;
    }
    if det(dim, &w) < 0.0 {
        w[dim - 1].iter_mut().for_each(|x| *x = -*x);
    }

    let mut lambdas = [0.0; MAX_DIM];
    let mut chart = [[0.0; MAX_DIM]; MAX_DIM];
    let mut images = [[0.0; 2]; MAX_DIM];
    for i in 0..dim {
        lambdas[i] = mu[i].sqrt();
        chart[i] = backward_solve_t(dim, &l, &w[i]);
        for j in 0..dim {
            for a in 0..2 {
                images[i][a] += chart[i][j] * diff.df[j][a];
            }
        }
    }
    for lam in lambdas.iter_mut().skip(2) {
        *lam = 0.0;
    }

    let n1 = (images[0][0].powi(2) + images[0][1].powi(2)).sqrt();
    let t1 = if lambdas[0] > 0.0 && n1 > 0.0 {
        [images[0][0] / n1, images[0][1] / n1]
    } else {
        [1.0, 0.0]
    };
    let rot = [-t1[1], t1[0]];
    let proj = if dim > 1 {
        images[1][0] * rot[0] + images[1][1] * rot[1]
    } else {
        0.0
    };
    let (t2, det_sign) = if proj < 0.0 {
        ([-rot[0], -rot[1]], if dim == 2 && lambdas[1] > 0.0 { -1.0 } else { 1.0 })
    } else {
        (rot, 1.0)
    };
    let target = [t1, t2];

    let mut tangent = [ProductVector::default(); MAX_DIM];
    let mut normal = [ProductVector::default(); 2];
    for i in 0..dim {
        let lam = lambdas[i];
        let s = 1.0 / (1.0 + lam * lam).sqrt();
        let mut e = ProductVector::default();
        for c in 0..dim {
            e.base[c] = w[i][c] * s;
        }
        if i < 2 {
            e.fiber = [lam * target[i][0] * s, lam * target[i][1] * s];
            let mut nrm = ProductVector::default();
            for c in 0..dim {
                nrm.base[c] = -lam * w[i][c] * s;
            }
            nrm.fiber = [target[i][0] * s, target[i][1] * s];
            normal[i] = nrm;
        }
        tangent[i] = e;
    }
    Ok(AdaptedFrame {
        dim,
        lambdas,
        domain_chart: chart,
        domain: w,
        target,
        tangent,
        normal,
        det_sign,
    })
}

pub fn singular_values(
    diff: &DifferentialData,
    g1: &MetricData,
    g2: &[[f64; 2]; 2],
) -> Result<SingularData> {
    Ok(adapted_frame(diff, g1, g2)?.singular_data())
}

/// `√(det g₁ / det g)` with `g = g₁ + dfᵀdf`: the volume-ratio route to `η₁`.
pub fn eta1_from_metrics(diff: &DifferentialData, g1: &MetricData) -> f64 {
    let dim = diff.dim;
    let p = pullback(diff, &ORTHONORMAL_TARGET);
    let mut g = g1.g;
    for i in 0..dim {
        for j in 0..dim {
            g[i][j] += p[i][j];
        }
    }
    (det(dim, &g1.g) / det(dim, &g)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondFormData {
    pub dim: usize,
    /// `h[α][i][k]` in the adapted frame, `α = 0, 1` for `e_{n+1}, e_{n+2}`.
    pub h: [[[f64; MAX_DIM]; MAX_DIM]; 2],
    pub mean: [f64; 2],
    pub a_norm_sq: f64,
}

impl SecondFormData {
    /// Frame components `h[α][i][k]`; mean and `|A|²` are derived.
    pub fn from_components(dim: usize, h: [[[f64; MAX_DIM]; MAX_DIM]; 2]) -> Self {
        let mut a_norm_sq = 0.0;
        let mut mean = [0.0; 2];
        for al in 0..2 {
            for i in 0..dim {
                for k in 0..dim {
                    a_norm_sq += h[al][i][k] * h[al][i][k];
                }
                mean[al] += h[al][i][i];
            }
        }
        SecondFormData {
            dim,
            h,
            mean,
            a_norm_sq,
        }
    }

    pub fn mean_sq(&self) -> f64 {
        self.mean[0].powi(2) + self.mean[1].powi(2)
    }

    /// `Σ_k (h_{n+1,1k} h_{n+2,2k} − h_{n+2,1k} h_{n+1,2k})`.
    pub fn cross_term(&self) -> f64 {
        cross_term(self.dim, &self.h)
    }
}

pub fn cross_term(dim: usize, h: &[[[f64; MAX_DIM]; MAX_DIM]; 2]) -> f64 {
    (0..dim)
        .map(|k| h[0][0][k] * h[1][1][k] - h[1][0][k] * h[0][1][k])
        .sum()
}

/// Second fundamental form of the graph from differential data and the frame.
pub fn second_form_from(
    diff: &DifferentialData,
    g1: &MetricData,
    frame: &AdaptedFrame,
) -> SecondFormData {
    let dim = diff.dim;
    // h_α(∂_a, ∂_b)
    let mut hc = [[[0.0; MAX_DIM]; MAX_DIM]; 2];
    for a in 0..dim {
        for b in a..dim {
            let mut v = [0.0; 2];
            for c in 0..2 {
                let mut s = diff.second[a][b][c];
                for k in 0..dim {
                    s -= g1.christoffel[k][a][b] * diff.df[k][c];
                }
                v[c] = s;
            }
            for al in 0..2 {
                let lam = frame.lambdas[al];
                let val = (v[0] * frame.target[al][0] + v[1] * frame.target[al][1])
                    / (1.0 + lam * lam).sqrt();
                hc[al][a][b] = val;
                hc[al][b][a] = val;
            }
        }
    }
    let mut c = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..dim {
        let s = 1.0 / (1.0 + frame.lambdas[i].powi(2)).sqrt();
        for a in 0..dim {
            c[i][a] = frame.domain_chart[i][a] * s;
        }
    }
    let mut h = [[[0.0; MAX_DIM]; MAX_DIM]; 2];
    for al in 0..2 {
        for i in 0..dim {
            for k in 0..dim {
                let mut s = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        s += c[i][a] * c[k][b] * hc[al][a][b];
                    }
                }
                h[al][i][k] = s;
            }
        }
    }
    SecondFormData::from_components(dim, h)
}

/// Everything the monitors need at one node.
#[derive(Clone, Copy, Debug)]
pub struct PointGaussData {
    pub diff: DifferentialData,
    pub frame: AdaptedFrame,
    pub sv: SingularData,
    pub functionals: GaussFunctionals,
    pub second: SecondFormData,
    /// `√det g` of the induced metric in chart coordinates.
    pub sqrt_det_induced: f64,
}

pub fn point_data(field: &MapField, node: usize) -> Result<PointGaussData> {
    let diff = differential_at(field, node)?;
    let g1 = field.grid.metric(node);
    let frame = adapted_frame(&diff, g1, &ORTHONORMAL_TARGET).map_err(|e| match e {
        Error::Numeric { what, .. } => Error::Numeric { node, what },
        other => other,
    })?;
    let sv = frame.singular_data();
    let functionals = gauss_functionals(&sv);
    let second = second_form_from(&diff, g1, &frame);
    let sqrt_det_induced = g1.sqrt_det / functionals.eta1;
    Ok(PointGaussData {
        diff,
        frame,
        sv,
        functionals,
        second,
        sqrt_det_induced,
    })
}

pub fn second_fundamental_form(field: &MapField, node: usize) -> Result<SecondFormData> {
    Ok(point_data(field, node)?.second)
}

/// Closed-form curvature terms for constant-curvature factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureTerms {
    /// `R_{n+i,kki}` for `i = 1..n` (zero-based, zero beyond the second).
    pub riemann: [f64; MAX_DIM],
    pub riemann_total: f64,
    /// `λ_i²/(1+λ_i²)·[(k₁−k₂)/2·(n−1) + (k₁+k₂)/2·(Σ_{j≠i} 2/(1+λ_j²) + 1 − n)]`.
    pub reaction: [f64; MAX_DIM],
    pub reaction_total: f64,
    /// The bracket of `reaction` alone.
    pub split: [f64; MAX_DIM],
}

pub fn curvature_term_closed(sv: &SingularData, k1: f64, k2: f64, n: usize) -> CurvatureTerms {
    let mut out = CurvatureTerms {
        riemann: [0.0; MAX_DIM],
        riemann_total: 0.0,
        reaction: [0.0; MAX_DIM],
        reaction_total: 0.0,
        split: [0.0; MAX_DIM],
    };
    let nf = n as f64;
    let inv: Vec<f64> = (0..n).map(|k| 1.0 / (1.0 + sv.lambda(k).powi(2))).collect();
    for i in 0..n.min(MAX_DIM) {
        let lam = sv.lambda(i);
        let s: f64 = (0..n).filter(|&k| k != i).map(|k| inv[k]).sum();
        out.riemann[i] = lam * inv[i] * (k1 * s + k2 * (1.0 - nf + s));
        out.split[i] = 0.5 * (k1 - k2) * (nf - 1.0) + 0.5 * (k1 + k2) * (2.0 * s + 1.0 - nf);
        out.reaction[i] = lam * lam * inv[i] * out.split[i];
        out.riemann_total += out.riemann[i];
        out.reaction_total += out.reaction[i];
    }
    out
}

//! Factor manifolds (flat tori, round spheres), their chart geometry, and the
//! curvature tensor of the Riemannian product.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Mat, MAX_DIM};

/// One factor of the product `Σ₁ × Σ₂`.
///
/// Tori are `Rⁿ` modulo the rectangular lattice spanned by `periods`, with the
/// Euclidean metric. Spheres are round of constant curvature `k > 0`, charted by
/// hyperspherical coordinates `(θ₁, …, θ_{n-1}, φ)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ManifoldSpec {
    FlatTorus { periods: Vec<f64> },
    RoundSphere { dim: usize, curvature: f64 },
}

impl ManifoldSpec {
    pub fn torus(periods: &[f64]) -> Result<Self> {
        let spec = ManifoldSpec::FlatTorus {
            periods: periods.to_vec(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sphere(dim: usize, curvature: f64) -> Result<Self> {
        let spec = ManifoldSpec::RoundSphere { dim, curvature };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ManifoldSpec::FlatTorus { periods } => {
                if periods.is_empty() || periods.len() > MAX_DIM {
                    return Err(Error::Config(format!(
                        "torus dimension must be between 1 and {MAX_DIM}, got {}",
                        periods.len()
                    )));
                }
                if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                    return Err(Error::Config(format!("torus period {p} is not positive")));
                }
            }
            ManifoldSpec::RoundSphere { dim, curvature } => {
                if *dim < 2 || *dim > MAX_DIM {
                    return Err(Error::Config(format!(
                        "sphere dimension must be between 2 and {MAX_DIM}, got {dim}"
                    )));
                }
                if !(curvature.is_finite() && *curvature > 0.0) {
                    return Err(Error::Config(format!(
                        "sphere curvature must be positive, got {curvature}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ManifoldSpec::FlatTorus { periods } => periods.len(),
            ManifoldSpec::RoundSphere { dim, .. } => *dim,
        }
    }

    /// Sectional curvature (0 for tori).
    pub fn curvature(&self) -> f64 {
        match self {
            ManifoldSpec::FlatTorus { .. } => 0.0,
            ManifoldSpec::RoundSphere { curvature, .. } => *curvature,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, ManifoldSpec::RoundSphere { .. })
    }

    /// Radius `1/√k` of a sphere; `None` for tori.
    pub fn radius(&self) -> Option<f64> {
        match self {
            ManifoldSpec::FlatTorus { .. } => None,
            ManifoldSpec::RoundSphere { curvature, .. } => Some(1.0 / curvature.sqrt()),
        }
    }
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldSpec::FlatTorus { periods } => {
                write!(f, "torus(")?;
                for (i, p) in periods.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
            ManifoldSpec::RoundSphere { dim, curvature } => write!(f, "sphere({dim},{curvature})"),
        }
    }
}

impl FromStr for ManifoldSpec {
    type Err = Error;

    /// Parses `torus(p1,p2,...)` or `sphere(dim,k)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Config(format!("malformed manifold `{s}`")))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Config(format!("malformed manifold `{s}`: missing `)`")))?;
        let nums = args
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number `{}` in `{s}`", a.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        match name.trim() {
            "torus" => ManifoldSpec::torus(&nums),
            "sphere" => {
                if nums.len() != 2 || nums[0].fract() != 0.0 || nums[0] < 0.0 {
                    return Err(Error::Config(format!(
                        "sphere expects `sphere(dim,k)` with integer dim, got `{s}`"
                    )));
                }
                ManifoldSpec::sphere(nums[0] as usize, nums[1])
            }
            other => Err(Error::Config(format!("unknown manifold kind `{other}`"))),
        }
    }
}

/// The product `M = Σ₁ × Σ₂` with `dim Σ₂ = 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductSpec {
    pub sigma1: ManifoldSpec,
    pub sigma2: ManifoldSpec,
}

impl ProductSpec {
    /// Validates the factor dimensions and the curvature hypothesis `k₁ ≥ |k₂|`.
    pub fn new(sigma1: ManifoldSpec, sigma2: ManifoldSpec) -> Result<Self> {
        sigma1.validate()?;
        sigma2.validate()?;
        if sigma1.dim() < 2 {
            return Err(Error::Config(format!(
                "domain dimension must be at least 2, got {}",
                sigma1.dim()
            )));
        }
        if sigma2.dim() != 2 {
            return Err(Error::Config(format!(
                "target factor must be two-dimensional, got dimension {}",
                sigma2.dim()
            )));
        }
        let (k1, k2) = (sigma1.curvature(), sigma2.curvature());
        if k1 < k2.abs() {
            return Err(Error::Config(format!(
                "curvature hypothesis k_1 >= |k_2| violated: k_1 = {k1}, k_2 = {k2}"
            )));
        }
        Ok(ProductSpec { sigma1, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.sigma1.dim()
    }

    pub fn k1(&self) -> f64 {
        self.sigma1.curvature()
    }

    pub fn k2(&self) -> f64 {
        self.sigma2.curvature()
    }

    pub fn is_flat(&self) -> bool {
        self.k1() == 0.0 && self.k2() == 0.0
    }
}

/// Chart data of a factor metric at one point. Only the leading `dim` block
/// of each array is meaningful. `christoffel[k][i][j]` is `Γ^k_{ij}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricData {
    pub dim: usize,
    pub g: Mat,
    pub g_inv: Mat,
    pub christoffel: [Mat; MAX_DIM],
    pub sqrt_det: f64,
}

impl MetricData {
    pub fn flat(dim: usize) -> Self {
        let id = crate::linalg::identity(dim);
        MetricData {
            dim,
            g: id,
            g_inv: id,
            christoffel: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM],
            sqrt_det: 1.0,
        }
    }
}

/// Exact metric, inverse, Christoffel symbols and volume density of `spec`
/// at chart coordinates `point`.
///
/// Torus coordinates may be anything (they are wrapped). Sphere coordinates
/// are `(θ₁, …, θ_{n-1}, φ)`; every colatitude must lie strictly inside `(0, π)`.
pub fn geometry_at(spec: &ManifoldSpec, point: &[f64]) -> Result<MetricData> {
    let dim = spec.dim();
    if point.len() != dim {
        return Err(Error::Domain(format!(
            "point has {} coordinates, manifold has dimension {dim}",
            point.len()
        )));
    }
    if let Some(i) = point.iter().position(|c| !c.is_finite()) {
        return Err(Error::Domain(format!("coordinate {i} is not finite")));
    }
    match spec {
        ManifoldSpec::FlatTorus { .. } => Ok(MetricData::flat(dim)),
        ManifoldSpec::RoundSphere { curvature, .. } => {
            let r2 = 1.0 / curvature;
            for (i, &theta) in point[..dim - 1].iter().enumerate() {
                if !(theta > 0.0 && theta < std::f64::consts::PI) {
                    return Err(Error::Domain(format!(
                        "colatitude coordinate {i} = {theta} is outside the open chart (0, π)"
                    )));
                }
            }
            // g_ii = r² Π_{j<i} sin²θ_j, and ∂_j g_ii = 2 cot θ_j g_ii for j < i.
            let mut diag = [0.0; MAX_DIM];
            let mut acc = r2;
            for i in 0..dim {
                diag[i] = acc;
                if i + 1 < dim {
                    acc *= point[i].sin().powi(2);
                }
            }
            let mut m = MetricData::flat(dim);
            for i in 0..dim {
                m.g[i][i] = diag[i];
                m.g_inv[i][i] = 1.0 / diag[i];
            }
            m.sqrt_det = diag[..dim].iter().map(|d| d.sqrt()).product();
            for i in 0..dim {
                for j in 0..i.min(dim - 1) {
                    let cot = point[j].cos() / point[j].sin();
                    // Γ^i_{ij} = Γ^i_{ji} = cot θ_j
                    m.christoffel[i][i][j] = cot;
                    m.christoffel[i][j][i] = cot;
                    // Γ^j_{ii} = -cot θ_j g_ii / g_jj
                    m.christoffel[j][i][i] = -cot * diag[i] / diag[j];
                }
            }
            Ok(m)
        }
    }
}

/// A tangent vector of `M` in orthonormal coordinates of each factor:
/// `base` for `T Σ₁` (first `n` entries used) and `fiber` for `T Σ₂`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProductVector {
    pub base: [f64; MAX_DIM],
    pub fiber: [f64; 2],
}

impl ProductVector {
    pub fn dot(&self, other: &ProductVector) -> f64 {
        self.dot_base(other) + self.dot_fiber(other)
    }

    pub fn dot_base(&self, other: &ProductVector) -> f64 {
        (0..MAX_DIM).map(|i| self.base[i] * other.base[i]).sum()
    }

    pub fn dot_fiber(&self, other: &ProductVector) -> f64 {
        self.fiber[0] * other.fiber[0] + self.fiber[1] * other.fiber[1]
    }

    pub fn scale(&self, s: f64) -> ProductVector {
        let mut out = *self;
        out.base.iter_mut().for_each(|x| *x *= s);
        out.fiber.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn add(&self, other: &ProductVector) -> ProductVector {
        let mut out = *self;
        for i in 0..MAX_DIM {
            out.base[i] += other.base[i];
        }
        out.fiber[0] += other.fiber[0];
        out.fiber[1] += other.fiber[1];
        out
    }
}

/// Riemann tensor of the product of two constant-curvature factors, in the
/// sign convention where `R(X, Y, X, Y)` is the sectional curvature of an
/// orthonormal pair:
///
/// `R(X,Y,Z,W) = Σ_f k_f (⟨X,Z⟩_f ⟨Y,W⟩_f − ⟨X,W⟩_f ⟨Y,Z⟩_f)`
pub fn curvature_tensor(
    product: &ProductSpec,
    x: &ProductVector,
    y: &ProductVector,
    z: &ProductVector,
    w: &ProductVector,
) -> f64 {
    let k1 = product.k1();
    let k2 = product.k2();
    k1 * (x.dot_base(z) * y.dot_base(w) - x.dot_base(w) * y.dot_base(z))
        + k2 * (x.dot_fiber(z) * y.dot_fiber(w) - x.dot_fiber(w) * y.dot_fiber(z))
}

/// `Σ_k R(e_α, e_k, e_k, e_i)` for an orthonormal frame `e_1..e_n` and a unit
/// vector `e_α` orthogonal to it. `i` is zero-based.
pub fn riemann_contraction(
    product: &ProductSpec,
    e_alpha: &ProductVector,
    frame: &[ProductVector],
    i: usize,
) -> Result<f64> {
    const TOL: f64 = 1e-10;
    if i >= frame.len() {
        return Err(Error::Validation(format!(
            "frame index {i} out of range for a frame of {} vectors",
            frame.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (a, u) in frame.iter().enumerate() {
        for (b, v) in frame.iter().enumerate() {
            let want = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((u.dot(v) - want).abs());
        }
        worst = worst.max(u.dot(e_alpha).abs());
    }
    worst = worst.max((e_alpha.dot(e_alpha) - 1.0).abs());
    if worst > TOL {
        return Err(Error::Validation(format!(
            "frame is not orthonormal: max Gram deviation {worst:e}"
        )));
    }
    Ok(frame
        .iter()
        .map(|ek| curvature_tensor(product, e_alpha, ek, ek, &frame[i]))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_torus_metric() {
        let t = ManifoldSpec::torus(&[2.0 * PI, 1.0]).unwrap();
        let m = geometry_at(&t, &[17.0, -3.0]).unwrap();
        assert_eq!(m.g, crate::linalg::identity(2));
        assert_eq!(m.sqrt_det, 1.0);
        assert!(m.christoffel.iter().flatten().flatten().all(|&c| c == 0.0));
    }

    #[test]
    fn unit_sphere_equator() {
        let s = ManifoldSpec::sphere(2, 1.0).unwrap();
        let m = geometry_at(&s, &[PI / 2.0, 0.3]).unwrap();
        assert!((m.g[0][0] - 1.0).abs() < 1e-15);
        assert!((m.g[1][1] - 1.0).abs() < 1e-15);
        // Γ^θ_{φφ} = -sin θ cos θ
        assert!(m.christoffel[0][1][1].abs() < 1e-15);
    }

    #[test]
    fn unit_sphere_sixty_degrees() {
        let s = ManifoldSpec::sphere(2, 1.0).unwrap();
        let th = PI / 3.0;
        let m = geometry_at(&s, &[th, 1.0]).unwrap();
        assert!((m.g[1][1] - 0.75).abs() < 1e-15);
        assert!((m.christoffel[1][0][1] - 0.577_350_269_189_625_8).abs() < 1e-12);
        assert!((m.christoffel[1][1][0] - 0.577_350_269_189_625_8).abs() < 1e-12);
        assert!((m.christoffel[0][1][1] + th.sin() * th.cos()).abs() < 1e-15);
        assert!((m.sqrt_det - th.sin()).abs() < 1e-15);
    }

    /// Christoffel symbols against finite differences of the metric.
    #[test]
    fn christoffel_matches_metric_derivatives() {
        for (dim, k) in [(2usize, 1.0), (2, 2.5), (3, 1.0), (3, 0.4)] {
            let s = ManifoldSpec::sphere(dim, k).unwrap();
            let p: Vec<f64> = (0..dim).map(|i| 0.7 + 0.4 * i as f64).collect();
            let m = geometry_at(&s, &p).unwrap();
            let h = 1e-5;
            let mut dg = [[[0.0; 3]; 3]; 3]; // dg[l][i][j] = ∂_l g_ij
            for l in 0..dim {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[l] += h;
                pm[l] -= h;
                let gp = geometry_at(&s, &pp).unwrap().g;
                let gm = geometry_at(&s, &pm).unwrap().g;
                for i in 0..dim {
                    for j in 0..dim {
                        dg[l][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * h);
                    }
                }
            }
            for kk in 0..dim {
                for i in 0..dim {
                    for j in 0..dim {
                        let mut want = 0.0;
                        for l in 0..dim {
                            want += 0.5
                                * m.g_inv[kk][l]
                                * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                        }
                        let got = m.christoffel[kk][i][j];
                        assert!((got - want).abs() < 1e-8, "dim {dim} Γ^{kk}_{i}{j}: {got} vs {want}");
                        assert_eq!(got, m.christoffel[kk][j][i]);
                    }
                }
            }
            for i in 0..dim {
                let p: f64 = (0..dim).map(|k| m.g[i][k] * m.g_inv[k][i]).sum();
                assert!((p - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pole_is_rejected() {
        let s = ManifoldSpec::sphere(2, 1.0).unwrap();
        let err = geometry_at(&s, &[0.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("colatitude coordinate 0"));
        assert!(geometry_at(&s, &[PI, 1.0]).is_err());
        assert!(geometry_at(&s, &[-0.1, 1.0]).is_err());
    }

    #[test]
    fn manifold_text_round_trip() {
        for s in [
            ManifoldSpec::torus(&[2.0 * PI, 0.6 * PI]).unwrap(),
            ManifoldSpec::sphere(2, 1.0).unwrap(),
            ManifoldSpec::sphere(3, 0.123_456_789_012_345_67).unwrap(),
        ] {
            let back: ManifoldSpec = s.to_string().parse().unwrap();
            assert_eq!(back, s);
        }
        assert!("cube(1)".parse::<ManifoldSpec>().is_err());
        assert!("torus(1,-2)".parse::<ManifoldSpec>().is_err());
    }

    #[test]
    fn product_requires_curvature_hypothesis() {
        let s1 = ManifoldSpec::sphere(2, 1.0).unwrap();
        let s2 = ManifoldSpec::sphere(2, 2.0).unwrap();
        let err = ProductSpec::new(s1, s2).unwrap_err();
        assert!(err.to_string().contains("k_1 >= |k_2|"));
        let t = ManifoldSpec::torus(&[1.0, 1.0]).unwrap();
        assert!(ProductSpec::new(t.clone(), ManifoldSpec::sphere(2, 1.0).unwrap()).is_err());
        assert!(ProductSpec::new(t.clone(), ManifoldSpec::torus(&[1.0]).unwrap()).is_err());
        assert!(ProductSpec::new(t.clone(), t).is_ok());
    }

    fn base(v: [f64; 3]) -> ProductVector {
        ProductVector {
            base: v,
            fiber: [0.0; 2],
        }
    }

    fn fiber(v: [f64; 2]) -> ProductVector {
        ProductVector {
            base: [0.0; 3],
            fiber: v,
        }
    }

    #[test]
    fn no_mixed_curvature() {
        let p = ProductSpec::new(
            ManifoldSpec::sphere(2, 1.0).unwrap(),
            ManifoldSpec::sphere(2, 1.0).unwrap(),
        )
        .unwrap();
        let frame = [base([1.0, 0.0, 0.0]), base([0.0, 1.0, 0.0])];
        let ea = fiber([1.0, 0.0]);
        assert_eq!(riemann_contraction(&p, &ea, &frame, 0).unwrap(), 0.0);
        let x = base([1.0, 0.0, 0.0]);
        let y = fiber([0.0, 1.0]);
        assert_eq!(curvature_tensor(&p, &x, &y, &x, &y), 0.0);
    }

    #[test]
    fn sectional_curvature_within_factor() {
        let p = ProductSpec::new(
            ManifoldSpec::sphere(3, 1.7).unwrap(),
            ManifoldSpec::sphere(2, 0.9).unwrap(),
        )
        .unwrap();
        let c = (0.3f64).cos();
        let s = (0.3f64).sin();
        let x = base([c, s, 0.0]);
        let y = base([-s, c, 0.0]);
        assert!((curvature_tensor(&p, &x, &y, &x, &y) - 1.7).abs() < 1e-14);
        let u = fiber([c, s]);
        let v = fiber([-s, c]);
        assert!((curvature_tensor(&p, &u, &v, &u, &v) - 0.9).abs() < 1e-14);
    }

    #[test]
    fn contraction_rejects_non_orthonormal() {
        let p = ProductSpec::new(
            ManifoldSpec::torus(&[1.0, 1.0]).unwrap(),
            ManifoldSpec::torus(&[1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let frame = [base([1.0, 0.0, 0.0]), base([0.1, 1.0, 0.0])];
        let err = riemann_contraction(&p, &fiber([1.0, 0.0]), &frame, 0).unwrap_err();
        assert!(err.to_string().contains("max Gram deviation"));
    }
}

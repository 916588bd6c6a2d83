//! Invariant monitoring, the Laplace-Beltrami operator of the graph, and
//! numerical checks of the `η₁` evolution along simulated flows.
//!
//! The simulator moves points at fixed domain coordinates, which is not the
//! normal motion the evolution equations describe. The verifiers convert the
//! fixed-coordinate time derivative with [`tangential_advection`]:
//!
//! `d/dt|_normal u = ∂_t u|_x − c^k ∂_k u`, `c^k = g^{kl}⟨V, F_*∂_l⟩`,
//!
//! where `V` is the coordinate velocity of the graph point.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{raw_derivatives, FlowState, MapField, Target};
use crate::flow::{equally_spaced, mcf_rhs};
use crate::gauss::{curvature_term_closed, eta1_from_metrics, point_data, PointGaussData};
use crate::geometry::ProductSpec;
use crate::grid::{minus, plus};
use crate::linalg::{inverse, Mat, Vec3, MAX_DIM};

pub const CSV_HEADER: &str =
    "time,min_eta,min_eta1,max_product,max_A_norm_sq,energy_H,area,residual_44,residual_49";

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesRow {
    pub time: f64,
    pub min_eta: f64,
    pub min_eta1: f64,
    pub max_product: f64,
    pub max_a_norm_sq: f64,
    pub energy_h: f64,
    pub area: f64,
    pub residual_44: Option<f64>,
    pub residual_49: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MonitorSweep {
    pub row: TimeSeriesRow,
    pub min_eta_node: usize,
    pub points: Vec<PointGaussData>,
}

/// Gauss data at every node.
pub fn gauss_sweep(field: &MapField, exec: Execution) -> Result<Vec<PointGaussData>> {
    exec.try_map(field.grid.len(), |node| point_data(field, node))
}

pub fn monitor_sweep(state: &FlowState, exec: Execution) -> Result<MonitorSweep> {
    let points = gauss_sweep(&state.field, exec)?;
    let cell = state.field.grid.cell_volume();
    let mut row = TimeSeriesRow {
        time: state.time,
        min_eta: f64::INFINITY,
        min_eta1: f64::INFINITY,
        max_product: 0.0,
        max_a_norm_sq: 0.0,
        energy_h: 0.0,
        area: 0.0,
        residual_44: None,
        residual_49: None,
    };
    let mut min_eta_node = 0;
    for (node, p) in points.iter().enumerate() {
        let f = &p.functionals;
        if f.eta < row.min_eta {
            row.min_eta = f.eta;
            min_eta_node = node;
        }
        row.min_eta1 = row.min_eta1.min(f.eta1);
        row.max_product = row.max_product.max(f.product);
        row.max_a_norm_sq = row.max_a_norm_sq.max(p.second.a_norm_sq);
        let dmu = p.sqrt_det_induced * cell;
        row.area += dmu;
        row.energy_h += p.second.mean_sq() * dmu;
    }
    Ok(MonitorSweep {
        row,
        min_eta_node,
        points,
    })
}

pub fn monitor(state: &FlowState, exec: Execution) -> Result<TimeSeriesRow> {
    Ok(monitor_sweep(state, exec)?.row)
}

/// Induced metric inverse and `√det g` at a node, from ambient first derivatives.
fn induced(field: &MapField, target: &Target, node: usize) -> Result<(Mat, f64, [Vec3; MAX_DIM])> {
    let grid = &field.grid;
    let dim = grid.dim();
    let raw = raw_derivatives(grid, target, &field.values, node);
    let mut g = grid.metric(node).g;
    for i in 0..dim {
        for j in 0..dim {
            g[i][j] += (0..3).map(|a| raw.first[i][a] * raw.first[j][a]).sum::<f64>();
        }
    }
    match inverse(dim, &g) {
        Some((gi, d)) if d > 0.0 => Ok((gi, d.sqrt(), raw.first)),
        _ => Err(Error::Numeric {
            node,
            what: "induced metric is degenerate".into(),
        }),
    }
}

/// `Δu = (1/√det g) ∂_i(√det g g^{ij} ∂_j u)` on the graph, in divergence form.
pub fn laplace_beltrami(u: &[f64], field: &MapField, exec: Execution) -> Result<Vec<f64>> {
    let grid = &field.grid;
    if u.len() != grid.len() {
        return Err(Error::Validation(format!(
            "scalar field has {} values for {} nodes",
            u.len(),
            grid.len()
        )));
    }
    let dim = grid.dim();
    let h = grid.spacing();
    let target = field.target_kind();
    let flux = exec.try_map(grid.len(), |node| {
        let (gi, sq, _) = induced(field, &target, node)?;
        let nb = grid.neighbours(node);
        let mut du = [0.0; MAX_DIM];
        for d in 0..dim {
            du[d] = (u[nb[plus(d)] as usize] - u[nb[minus(d)] as usize]) / (2.0 * h[d]);
        }
        let mut w = [0.0; MAX_DIM];
        for i in 0..dim {
            w[i] = sq * (0..dim).map(|j| gi[i][j] * du[j]).sum::<f64>();
        }
        Ok::<_, Error>((w, sq))
    })?;
    Ok(exec.map(grid.len(), |node| {
        let nb = grid.neighbours(node);
        let mut s = 0.0;
        for d in 0..dim {
            s += (flux[nb[plus(d)] as usize].0[d] - flux[nb[minus(d)] as usize].0[d]) / (2.0 * h[d]);
        }
        s / flux[node].1
    }))
}

/// `c^k ∂_k u` where `c^k = g^{kl}(g₁(v₁, ∂_l) + ⟨v₂, ∂_l f⟩)`.
///
/// `base` holds chart components of the domain part of the velocity per node
/// (empty slice for zero); `fiber` holds the target part as ambient vectors
/// (`comps` numbers per node, coordinates for torus targets).
pub fn tangential_advection(
    field: &MapField,
    base: &[Vec3],
    fiber: &[f64],
    u: &[f64],
    exec: Execution,
) -> Result<Vec<f64>> {
    let grid = &field.grid;
    let n = grid.len();
    let target = field.target_kind();
    let c = target.comps();
    if fiber.len() != n * c || u.len() != n || !(base.is_empty() || base.len() == n) {
        return Err(Error::Validation("velocity or scalar length does not match the grid".into()));
    }
    let dim = grid.dim();
    let h = grid.spacing();
    exec.try_map(n, |node| {
        let (gi, _, first) = induced(field, &target, node)?;
        let g1 = &grid.metric(node).g;
        let mut cov = [0.0; MAX_DIM];
        for l in 0..dim {
            let mut s = 0.0;
            for a in 0..c {
                s += fiber[node * c + a] * first[l][a];
            }
            if !base.is_empty() {
                for k in 0..dim {
                    s += g1[k][l] * base[node][k];
                }
            }
            cov[l] = s;
        }
        let nb = grid.neighbours(node);
        let mut out = 0.0;
        for k in 0..dim {
            let ck: f64 = (0..dim).map(|l| gi[k][l] * cov[l]).sum();
            let du = (u[nb[plus(k)] as usize] - u[nb[minus(k)] as usize]) / (2.0 * h[k]);
            out += ck * du;
        }
        Ok(out)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifierReport {
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    /// Orientation of `df` per node.
    pub det_signs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereReport {
    /// `LHS − (Δ*Ω₁ + *Ω₁ · reaction)`; nonnegative in the continuum.
    pub slack: Vec<f64>,
    pub min_slack: f64,
    /// Largest `c` with `LHS − Δ*Ω₁ ≥ c *Ω₁(1 − *Ω₁²)` at every node where
    /// `1 − *Ω₁²` is not negligible.
    pub fitted_c: Option<f64>,
    /// Residual of the full equality `LHS = Δη₁ + η₁(|A|² − 2λ₁λ₂X + reaction)`.
    pub identity_residuals: Vec<f64>,
    pub max_abs_identity_residual: f64,
}

struct EvolutionTerms {
    lhs: Vec<f64>,
    lap: Vec<f64>,
    points: Vec<PointGaussData>,
}

fn evolution_terms(states: &[FlowState], exec: Execution) -> Result<EvolutionTerms> {
    if states.len() != 3 {
        return Err(Error::Validation(format!("expected three states, got {}", states.len())));
    }
    let f0 = &states[0].field;
    for s in &states[1..] {
        if s.field.grid != f0.grid || s.field.target != f0.target {
            return Err(Error::Validation("states live on different grids or targets".into()));
        }
    }
    if !equally_spaced(states) {
        return Err(Error::Validation(format!(
            "states are not equally spaced in time: {}, {}, {}",
            states[0].time, states[1].time, states[2].time
        )));
    }
    let dt = states[1].time - states[0].time;
    let eta1_of = |field: &MapField| -> Result<Vec<f64>> {
        exec.try_map(field.grid.len(), |node| {
            let d = crate::field::differential_at(field, node)?;
            Ok(eta1_from_metrics(&d, field.grid.metric(node)))
        })
    };
    let before = eta1_of(f0)?;
    let after = eta1_of(&states[2].field)?;
    let mid = &states[1];
    let points = gauss_sweep(&mid.field, exec)?;
    let eta1: Vec<f64> = points.iter().map(|p| p.functionals.eta1).collect();
    let lap = laplace_beltrami(&eta1, &mid.field, exec)?;
    let velocity = mcf_rhs(mid, exec)?;
    let adv = tangential_advection(&mid.field, &[], &velocity, &eta1, exec)?;
    let lhs = (0..eta1.len())
        .map(|i| (after[i] - before[i]) / (2.0 * dt) - adv[i])
        .collect();
    Ok(EvolutionTerms { lhs, lap, points })
}

/// Checks `d/dt η₁ = Δη₁ + η₁[|A|² − 2λ₁λ₂ Σ_k(h_{n+1,1k}h_{n+2,2k} − h_{n+2,1k}h_{n+1,2k})]`
/// on flat factors at the middle of three equally spaced states.
pub fn verify_evolution_flat(
    states: &[FlowState],
    product: &ProductSpec,
    exec: Execution,
) -> Result<VerifierReport> {
    if !product.is_flat() {
        return Err(Error::Validation("flat verifier needs k1 = k2 = 0".into()));
    }
    let t = evolution_terms(states, exec)?;
    let residuals: Vec<f64> = t
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let e = p.functionals.eta1;
            let q = p.second.a_norm_sq - 2.0 * p.sv.product() * p.second.cross_term();
            t.lhs[i] - (t.lap[i] + e * q)
        })
        .collect();
    let max_abs_residual = residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
    Ok(VerifierReport {
        residuals,
        max_abs_residual,
        det_signs: t.points.iter().map(|p| p.sv.det_sign).collect(),
    })
}

/// Relative floor on `1 − η₁²` for nodes entering the reaction fit.
const FIT_FLOOR: f64 = 1e-3;

/// Checks the reaction inequality for `*Ω₁ = η₁` on sphere domains.
pub fn verify_inequality_sphere(
    states: &[FlowState],
    product: &ProductSpec,
    exec: Execution,
) -> Result<SphereReport> {
    if !(product.k1() > 0.0 && product.k1() >= product.k2().abs()) {
        return Err(Error::Validation("sphere verifier needs k1 > 0 and k1 >= |k2|".into()));
    }
    let t = evolution_terms(states, exec)?;
    let (k1, k2, n) = (product.k1(), product.k2(), product.n());
    let mut slack = Vec::with_capacity(t.lhs.len());
    let mut identity = Vec::with_capacity(t.lhs.len());
    let mut gap_max: f64 = 0.0;
    for p in &t.points {
        gap_max = gap_max.max(1.0 - p.functionals.eta1.powi(2));
    }
    let mut fitted: Option<f64> = None;
    for (i, p) in t.points.iter().enumerate() {
        let e = p.functionals.eta1;
        let react = curvature_term_closed(&p.sv, k1, k2, n).reaction_total;
        let q = p.second.a_norm_sq - 2.0 * p.sv.product() * p.second.cross_term();
        slack.push(t.lhs[i] - (t.lap[i] + e * react));
        identity.push(t.lhs[i] - (t.lap[i] + e * (q + react)));
        let gap = 1.0 - e * e;
        if gap_max > 0.0 && gap >= FIT_FLOOR * gap_max {
            let ratio = (t.lhs[i] - t.lap[i]) / (e * gap);
            fitted = Some(fitted.map_or(ratio, |c: f64| c.min(ratio)));
        }
    }
    let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
    let max_abs_identity_residual = identity.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
    Ok(SphereReport {
        slack,
        min_slack,
        fitted_c: fitted,
        identity_residuals: identity,
        max_abs_identity_residual,
    })
}

/// Slope of `log error` against `log h` by least squares; `None` with fewer
/// than two usable resolutions.
pub fn convergence_order(spacings: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = spacings
        .iter()
        .zip(errors)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_timeseries(rows: &[TimeSeriesRow], mut out: impl Write) -> Result<()> {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.time,
            r.min_eta,
            r.min_eta1,
            r.max_product,
            r.max_a_norm_sq,
            r.energy_h,
            r.area,
            cell(r.residual_44),
            cell(r.residual_49)
        ));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_timeseries(input: impl BufRead) -> Result<Vec<TimeSeriesRow>> {
    let mut rows = Vec::new();
    let mut offset = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let here = offset;
        offset += line.len() + 1;
        if i == 0 {
            if line != CSV_HEADER {
                return Err(Error::Format {
                    offset: 0,
                    message: "unexpected time-series header".into(),
                });
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(Error::Format {
                offset: here,
                message: format!("expected 9 cells, found {}", cells.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Format {
                offset: here,
                message: format!("bad number `{s}`"),
            })
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        rows.push(TimeSeriesRow {
            time: num(cells[0])?,
            min_eta: num(cells[1])?,
            min_eta1: num(cells[2])?,
            max_product: num(cells[3])?,
            max_a_norm_sq: num(cells[4])?,
            energy_h: num(cells[5])?,
            area: num(cells[6])?,
            residual_44: opt(cells[7])?,
            residual_49: opt(cells[8])?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineFit {
    /// `linear[a][d]`: component `a` of the image of `e_d`.
    pub linear: [[f64; MAX_DIM]; 2],
    pub offset: [f64; 2],
    pub rms: f64,
}

/// Least-squares affine fit `f(x) ≈ A x + b` of a torus-valued field on a
/// torus domain, after unwrapping the field along the grid.
pub fn affine_fit(field: &MapField) -> Result<AffineFit> {
    let target = field.target_kind();
    if !matches!(target, Target::Torus { .. }) || field.grid.is_sphere() {
        return Err(Error::Validation("affine fit needs torus domain and target".into()));
    }
    let grid = &field.grid;
    let dim = grid.dim();
    let n = grid.len();
    let mut lift = vec![[0.0; 2]; n];
    for node in 0..n {
        let v = field.value(node);
        let idx = grid.multi_index(node);
        match (0..dim).rev().find(|&d| idx[d] > 0) {
            None => lift[node] = [v[0], v[1]],
            Some(d) => {
                let mut pi = idx;
                pi[d] -= 1;
                let parent = grid.node_index(&pi[..dim]);
                let delta = target.delta(field.value(parent), v);
                lift[node] = [lift[parent][0] + delta[0], lift[parent][1] + delta[1]];
            }
        }
    }
    let mut design = DMatrix::<f64>::zeros(n, dim + 1);
    for node in 0..n {
        let x = grid.coords(node);
        for d in 0..dim {
            design[(node, d)] = x[d];
        }
        design[(node, dim)] = 1.0;
    }
    let svd = design.clone().svd(true, true);
    let mut fit = AffineFit {
        linear: [[0.0; MAX_DIM]; 2],
        offset: [0.0; 2],
        rms: 0.0,
    };
    let mut ss = 0.0;
    for a in 0..2 {
        let rhs = DVector::from_iterator(n, lift.iter().map(|l| l[a]));
        let coef = svd
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::Numeric { node: 0, what: e.to_string() })?;
        for d in 0..dim {
            fit.linear[a][d] = coef[d];
        }
        fit.offset[a] = coef[dim];
        let r = &design * &coef - rhs;
        ss += r.norm_squared();
    }
    fit.rms = (ss / (2 * n) as f64).sqrt();
    Ok(fit)
}

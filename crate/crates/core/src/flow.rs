//! Nonparametric mean curvature flow of the graph of `f`:
//!
//! `∂_t f = g^{ij}(∂²_{ij} f − Γ₁^k_{ij} ∂_k f)`, `g = g₁ + ⟨∂f, ∂f⟩`,
//!
//! with the ambient second derivative projected onto the tangent plane for
//! sphere targets. Time stepping is explicit midpoint RK2.
//!
//! On sphere domains the longitude spacing shrinks like `sin θ` towards the
//! poles, so each stage tendency is passed through a longitude FFT filter
//! that damps modes the row cannot resolve at the equatorial step size. The
//! step bound uses the correspondingly capped longitude weight.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::diagnostics::{monitor_sweep, verify_evolution_flat, verify_inequality_sphere, TimeSeriesRow};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{chart_normalize, normalize_values, raw_derivatives, sharpen_polar, FlowState, MapField, Target};
use crate::geometry::ProductSpec;
use crate::grid::Grid;
use crate::linalg::{inverse, max_sym_eigenvalue, Vec3, MAX_DIM};

pub const DEFAULT_CFL_SAFETY: f64 = 0.25;
pub const DEFAULT_STOP_A_NORM: f64 = 1e-8;
pub const DEFAULT_STOP_ETA1: f64 = 1e-4;
/// Initial data with `min η` below this is refused.
pub const DEFAULT_REFUSE_ETA: f64 = 1e-2;
pub const DEFAULT_MONITOR_INTERVAL: u64 = 100;
/// `advance` accepts steps up to this factor above the current bound, so a
/// step chosen a few steps earlier survives slow stiffening.
pub const STEP_TOLERANCE: f64 = 1.01;

/// Rows with `sin θ` below this get a reduced longitude weight in the step bound.
pub const POLAR_CAP_SIN: f64 = 1.0;
/// Strength `s_c` of the longitude filter: mode `m` on row `j` is scaled by
/// `min(1, sin θ_j / (s_c sin(|m| h_φ / 2)))²`.
pub const POLAR_FILTER_STRENGTH: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub product: ProductSpec,
    pub cfl_safety: f64,
    pub t_max: f64,
    pub stop_a_norm: f64,
    pub stop_eta1: f64,
    pub refuse_eta: f64,
    pub max_steps: Option<u64>,
    pub monitor_interval: u64,
    pub verify: bool,
    pub execution: Execution,
}

impl FlowConfig {
    pub fn new(product: ProductSpec, t_max: f64) -> Self {
        FlowConfig {
            product,
            cfl_safety: DEFAULT_CFL_SAFETY,
            t_max,
            stop_a_norm: DEFAULT_STOP_A_NORM,
            stop_eta1: DEFAULT_STOP_ETA1,
            refuse_eta: DEFAULT_REFUSE_ETA,
            max_steps: None,
            monitor_interval: DEFAULT_MONITOR_INTERVAL,
            verify: false,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            errs.push(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            errs.push(format!("t_max must be positive and finite, got {}", self.t_max));
        }
        for (name, v) in [
            ("stop_A_norm", self.stop_a_norm),
            ("stop_eta1", self.stop_eta1),
            ("refuse_eta", self.refuse_eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        }
        if self.monitor_interval == 0 {
            errs.push("monitor_interval must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

/// Velocity of one node and its local stiffness `λ_max(P g⁻¹ P)`.
#[inline]
fn rhs_node(
    grid: &Grid,
    target: &Target,
    values: &[f64],
    node: usize,
    time: f64,
) -> Result<(Vec3, f64)> {
    let dim = grid.dim();
    let m = grid.metric(node);
    let mut raw = raw_derivatives(grid, target, values, node);
    sharpen_polar(grid, target, values, node, &mut raw);
    let mut g = m.g;
    for i in 0..dim {
        for j in i..dim {
            let f = &raw.first;
            let s = f[i][0] * f[j][0] + f[i][1] * f[j][1] + f[i][2] * f[j][2];
            g[i][j] += s;
            if i != j {
                g[j][i] += s;
            }
        }
    }
    let gi = match inverse(dim, &g) {
        Some((gi, d)) if d > 0.0 => gi,
        Some((_, d)) => return Err(breakdown(node, time, d)),
        None => return Err(breakdown(node, time, f64::NAN)),
    };
    let mut v = [0.0; 3];
    for i in 0..dim {
        for j in 0..dim {
            let w = gi[i][j];
            if w == 0.0 {
                continue;
            }
            for a in 0..3 {
                let mut s = raw.second[i][j][a];
                for k in 0..dim {
                    s -= m.christoffel[k][i][j] * raw.first[k][a];
                }
                v[a] += w * s;
            }
        }
    }
    let c = target.comps();
    let v = target.project(&values[node * c..(node + 1) * c], &v);

    let h = grid.spacing();
    let mut p = [0.0; MAX_DIM];
    for d in 0..dim {
        p[d] = 1.0 / h[d];
    }
    if grid.is_sphere() {
        let th = grid.coords(node)[0];
        p[1] *= (th.sin() / POLAR_CAP_SIN).min(1.0);
    }
    let mut s = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..dim {
        for j in 0..dim {
            s[i][j] = p[i] * gi[i][j] * p[j];
        }
    }
    Ok((v, max_sym_eigenvalue(dim, &s)))
}

fn breakdown(node: usize, time: f64, det: f64) -> Error {
    Error::Breakdown {
        node,
        time,
        reason: format!("induced metric not positive definite (det = {det:e}); graph condition lost"),
    }
}

const CHUNK_NODES: usize = 256;

/// Evaluates velocities into `out` and returns the maximum stiffness.
fn rhs_into(
    grid: &Grid,
    target: &Target,
    values: &[f64],
    time: f64,
    exec: Execution,
    out: &mut [f64],
) -> Result<f64> {
    let c = target.comps();
    let n = grid.len();
    let chunks = n.div_ceil(CHUNK_NODES);
    let mut status: Vec<Result<f64>> = (0..chunks).map(|_| Ok(0.0)).collect();
    let mut pairs: Vec<(&mut [f64], &mut Result<f64>)> =
        out.chunks_mut(CHUNK_NODES * c).zip(status.iter_mut()).collect();
    exec.for_chunks(&mut pairs, 1, |ci, slot| {
        let (buf, st) = &mut slot[0];
        let mut worst: f64 = 0.0;
        for (k, dst) in buf.chunks_mut(c).enumerate() {
            let node = ci * CHUNK_NODES + k;
            match rhs_node(grid, target, values, node, time) {
                Ok((v, rate)) => {
                    dst.copy_from_slice(&v[..c]);
                    worst = worst.max(rate);
                }
                Err(e) => {
                    **st = Err(e);
                    return;
                }
            }
        }
        **st = Ok(worst);
    });
    let mut worst: f64 = 0.0;
    for s in status {
        worst = worst.max(s?);
    }
    Ok(worst)
}

/// `∂f/∂t` at every node, as ambient target vectors (`comps` numbers per node).
pub fn mcf_rhs(state: &FlowState, exec: Execution) -> Result<Vec<f64>> {
    let f = &state.field;
    let target = f.target_kind();
    let mut out = vec![0.0; f.values.len()];
    rhs_into(&f.grid, &target, &f.values, state.time, exec, &mut out)?;
    Ok(out)
}

fn dt_from_rate(rate: f64, dim: usize, safety: f64, node_time: f64) -> Result<f64> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Breakdown {
            node: 0,
            time: node_time,
            reason: format!("step bound undefined (stiffness {rate})"),
        });
    }
    Ok(safety / (2.0 * dim as f64 * rate))
}

/// Largest explicit step: `safety / (2n · max_nodes λ_max(P g⁻¹ P))`, `P = diag(1/h)`.
pub fn stable_dt(state: &FlowState, cfl_safety: f64, exec: Execution) -> Result<f64> {
    let f = &state.field;
    let grid = &f.grid;
    let target = f.target_kind();
    let rates = exec.try_map(grid.len(), |node| {
        rhs_node(grid, &target, &f.values, node, state.time).map(|(_, r)| r)
    })?;
    let worst = rates.into_iter().fold(0.0, f64::max);
    dt_from_rate(worst, grid.dim(), cfl_safety, state.time)
}

/// Longitude filter for sphere domains.
struct PolarFilter {
    n_lat: usize,
    n_lon: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Per row: per mode factors, or `None` when the row is untouched.
    factors: Vec<Option<Vec<f64>>>,
}

impl PolarFilter {
    fn new(grid: &Grid) -> Option<Self> {
        if !grid.is_sphere() {
            return None;
        }
        let (n_lat, n_lon) = (grid.shape()[0], grid.shape()[1]);
        let h_lon = grid.spacing()[1];
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_lon);
        let inv = planner.plan_fft_inverse(n_lon);
        let factors = (0..n_lat)
            .map(|j| {
                let sin_t = grid.coords(j * n_lon)[0].sin();
                let f: Vec<f64> = (0..n_lon)
                    .map(|k| {
                        let m = k.min(n_lon - k) as f64;
                        let r = POLAR_FILTER_STRENGTH * (0.5 * m * h_lon).sin();
                        if r <= sin_t {
                            1.0
                        } else {
                            (sin_t / r).powi(2)
                        }
                    })
                    .collect();
                f.iter().any(|&x| x < 1.0).then_some(f)
            })
            .collect();
        Some(PolarFilter {
            n_lat,
            n_lon,
            fwd,
            inv,
            factors,
        })
    }

    fn apply(&self, values: &mut [f64], comps: usize, exec: Execution) {
        let row_len = self.n_lon * comps;
        debug_assert_eq!(values.len(), self.n_lat * row_len);
        exec.for_chunks(values, row_len, |j, row| {
            let Some(fac) = &self.factors[j] else {
                return;
            };
            let mut buf = vec![Complex::new(0.0, 0.0); self.n_lon];
            let scale = 1.0 / self.n_lon as f64;
            for a in 0..comps {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex::new(row[i * comps + a], 0.0);
                }
                self.fwd.process(&mut buf);
                for (b, &f) in buf.iter_mut().zip(fac) {
                    *b *= f * scale;
                }
                self.inv.process(&mut buf);
                for (i, b) in buf.iter().enumerate() {
                    row[i * comps + a] = b.re;
                }
            }
        });
    }
}

/// Time stepper bound to one grid and target.
pub struct Stepper {
    cfl_safety: f64,
    exec: Execution,
    filter: Option<PolarFilter>,
}

impl Stepper {
    pub fn new(grid: &Grid, cfl_safety: f64, exec: Execution) -> Self {
        Stepper {
            cfl_safety,
            exec,
            filter: PolarFilter::new(grid),
        }
    }

    pub fn stable_dt(&self, state: &FlowState) -> Result<f64> {
        stable_dt(state, self.cfl_safety, self.exec)
    }

    /// One midpoint RK2 step followed by normalization.
    pub fn advance(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Precondition(format!("time step must be positive, got {dt}")));
        }
        let f = &state.field;
        let grid = &f.grid;
        let target = f.target_kind();
        let c = target.comps();
        let n = f.values.len();

        let mut k = vec![0.0; n];
        let rate = rhs_into(grid, &target, &f.values, state.time, self.exec, &mut k)?;
        let bound = dt_from_rate(rate, grid.dim(), self.cfl_safety, state.time)?;
        if dt > bound * STEP_TOLERANCE {
            return Err(Error::Precondition(format!(
                "time step {dt:e} exceeds the stable step {bound:e}"
            )));
        }
        if let Some(filter) = &self.filter {
            filter.apply(&mut k, c, self.exec);
        }
        let mut mid: Vec<f64> = f.values.iter().zip(&k).map(|(v, d)| v + 0.5 * dt * d).collect();
        self.normalize(&target, &mut mid, state)?;

        rhs_into(grid, &target, &mid, state.time + 0.5 * dt, self.exec, &mut k)?;
        if let Some(filter) = &self.filter {
            filter.apply(&mut k, c, self.exec);
        }
        let mut next: Vec<f64> = f.values.iter().zip(&k).map(|(v, d)| v + dt * d).collect();
        self.normalize(&target, &mut next, state)?;

        Ok(FlowState {
            time: state.time + dt,
            step_index: state.step_index + 1,
            field: MapField {
                grid: grid.clone(),
                target: f.target.clone(),
                values: next,
            },
        })
    }

    fn normalize(&self, target: &Target, values: &mut [f64], state: &FlowState) -> Result<()> {
        let c = target.comps();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                node: i / c,
                step: state.step_index,
            });
        }
        normalize_values(target, values).map_err(|e| match e {
            Error::Numeric { node, .. } => Error::BlowUp {
                node,
                step: state.step_index,
            },
            other => other,
        })
    }
}

/// One step with the default safety factor.
pub fn advance(state: &FlowState, dt: f64, exec: Execution) -> Result<FlowState> {
    Stepper::new(&state.field.grid, DEFAULT_CFL_SAFETY, exec).advance(state, dt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    TimeLimit,
    ANormThreshold,
    Eta1Threshold,
    MaxSteps,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::TimeLimit => "time limit",
            StopReason::ANormThreshold => "A-norm threshold",
            StopReason::Eta1Threshold => "eta1 threshold",
            StopReason::MaxSteps => "max steps",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub final_state: FlowState,
    pub stop_reason: StopReason,
    pub rows: Vec<TimeSeriesRow>,
    /// Fitted reaction constants `c`, one per verified sphere triple.
    pub reaction_constants: Vec<f64>,
}

#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub last_good: FlowState,
    pub rows: Vec<TimeSeriesRow>,
}

/// Runs the flow from `initial` until a stop rule fires. `observer` sees
/// every monitored state together with its row (residual cells of a row are
/// filled in two steps later, so the observer sees them empty).
pub fn run(
    config: &FlowConfig,
    initial: MapField,
    observer: &mut dyn FnMut(&FlowState, &TimeSeriesRow),
) -> std::result::Result<RunOutcome, Box<RunFailure>> {
    let start = FlowState::new(initial);
    let fail = |error: Error, last_good: FlowState, rows: Vec<TimeSeriesRow>| {
        Box::new(RunFailure {
            error,
            last_good,
            rows,
        })
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, start, Vec::new()));
    }
    let exec = config.execution;
    let product = &config.product;
    let mut state = match chart_normalize(&start.field) {
        Ok(f) => FlowState::new(f),
        Err(e) => return Err(fail(e, start, Vec::new())),
    };
    let stepper = Stepper::new(&state.field.grid, config.cfl_safety, exec);
    let mut rows: Vec<TimeSeriesRow> = Vec::new();
    let mut constants = Vec::new();
    let mut pending: Option<(usize, Vec<FlowState>)> = None;
    let mut dt = 0.0;
    let interval = config.monitor_interval;

    loop {
        let on_monitor = state.step_index % interval == 0;
        let time_up = state.time >= config.t_max;
        let steps_up = config.max_steps.is_some_and(|m| state.step_index >= m);
        if on_monitor || time_up || steps_up {
            let sweep = match monitor_sweep(&state, exec) {
                Ok(s) => s,
                Err(e) => return Err(fail(e, state, rows)),
            };
            if state.step_index == 0 && sweep.row.min_eta < config.refuse_eta {
                let e = Error::OutOfClass {
                    min_eta: sweep.row.min_eta,
                    max_product: sweep.row.max_product,
                    node: sweep.min_eta_node,
                    required: config.refuse_eta,
                };
                return Err(fail(e, state, rows));
            }
            let row = sweep.row;
            rows.push(row.clone());
            observer(&state, &row);
            let stop = if product.is_flat() && row.max_a_norm_sq < config.stop_a_norm {
                Some(StopReason::ANormThreshold)
            } else if product.k1() > 0.0 && 1.0 - row.min_eta1 < config.stop_eta1 {
                Some(StopReason::Eta1Threshold)
            } else if time_up {
                Some(StopReason::TimeLimit)
            } else if steps_up {
                Some(StopReason::MaxSteps)
            } else {
                None
            };
            if let Some(stop_reason) = stop {
                return Ok(RunOutcome {
                    final_state: state,
                    stop_reason,
                    rows,
                    reaction_constants: constants,
                });
            }
            if on_monitor {
                dt = match stepper.stable_dt(&state) {
                    Ok(d) => d,
                    Err(e) => return Err(fail(e, state, rows)),
                };
                if config.verify {
                    pending = Some((rows.len() - 1, vec![state.clone()]));
                }
            }
        }

        let mut step_dt = dt.min(config.t_max - state.time);
        let next = loop {
            match stepper.advance(&state, step_dt) {
                Ok(s) => break s,
                Err(Error::Precondition(_)) => {
                    dt = match stepper.stable_dt(&state) {
                        Ok(d) => d,
                        Err(e) => return Err(fail(e, state, rows)),
                    };
                    step_dt = dt.min(config.t_max - state.time);
                }
                Err(e) => return Err(fail(e, state, rows)),
            }
        };
        state = next;

        if let Some((idx, triple)) = pending.as_mut() {
            triple.push(state.clone());
            if triple.len() == 3 {
                let (idx, triple) = (*idx, std::mem::take(triple));
                pending = None;
                if equally_spaced(&triple) {
                    let res = if product.is_flat() {
                        verify_evolution_flat(&triple, product, exec).map(|r| {
                            rows[idx].residual_44 = Some(r.max_abs_residual);
                        })
                    } else if product.k1() > 0.0 {
                        verify_inequality_sphere(&triple, product, exec).map(|r| {
                            rows[idx].residual_49 = Some(r.min_slack);
                            if let Some(c) = r.fitted_c {
                                constants.push(c);
                            }
                        })
                    } else {
                        Ok(())
                    };
                    if let Err(e) = res {
                        return Err(fail(e, state, rows));
                    }
                }
            }
        }
    }
}

/// Equal spacing of three consecutive states, relative tolerance `1e-9`.
pub fn equally_spaced(states: &[FlowState]) -> bool {
    if states.len() != 3 {
        return false;
    }
    let d1 = states[1].time - states[0].time;
    let d2 = states[2].time - states[1].time;
    d1 > 0.0 && (d1 - d2).abs() <= 1e-9 * d1
}

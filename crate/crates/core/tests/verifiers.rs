use std::f64::consts::PI;

use graphflow::diagnostics::{
    convergence_order, gauss_sweep, tangential_advection, verify_evolution_flat,
    verify_inequality_sphere,
};
use graphflow::field::{differential_at, wrap};
use graphflow::flow::Stepper;
use graphflow::{make_grid, Execution, FlowState, ManifoldSpec, MapField, ProductSpec};

const EXEC: Execution = Execution::Parallel;

fn torus(p: [f64; 2]) -> ManifoldSpec {
    ManifoldSpec::torus(&p).unwrap()
}

fn flat_product() -> ProductSpec {
    let tp = 2.0 * PI;
    ProductSpec::new(torus([tp, tp]), torus([PI, 0.6 * PI])).unwrap()
}

fn perturbed_affine(n: usize, eps: f64) -> MapField {
    let tp = 2.0 * PI;
    let grid = make_grid(&torus([tp, tp]), &[n, n]).unwrap();
    MapField::from_fn(grid, torus([PI, 0.6 * PI]), |_, x, v| {
        v[0] = wrap(0.5 * x[0] + eps * x[1].sin(), PI);
        v[1] = wrap(0.3 * x[1] + eps * x[0].cos(), 0.6 * PI);
    })
    .unwrap()
}

fn triple(field: MapField) -> Vec<FlowState> {
    let s0 = FlowState::new(field);
    let stepper = Stepper::new(&s0.field.grid, 0.25, EXEC);
    let dt = stepper.stable_dt(&s0).unwrap();
    let s1 = stepper.advance(&s0, dt).unwrap();
    let s2 = stepper.advance(&s1, dt).unwrap();
    vec![s0, s1, s2]
}

#[test]
fn stationary_affine_map_has_zero_residual() {
    let states = triple(perturbed_affine(32, 0.0));
    let r = verify_evolution_flat(&states, &flat_product(), EXEC).unwrap();
    assert!(r.max_abs_residual <= 1e-10, "{}", r.max_abs_residual);
}

#[test]
fn constant_map_has_zero_residual() {
    let tp = 2.0 * PI;
    let grid = make_grid(&torus([tp, tp]), &[16, 16]).unwrap();
    let f = MapField::from_fn(grid, torus([1.0, 1.0]), |_, _, v| {
        v[0] = 0.25;
        v[1] = 0.5;
    })
    .unwrap();
    let r = verify_evolution_flat(&triple(f), &flat_product(), EXEC).unwrap();
    assert_eq!(r.max_abs_residual, 0.0);
}

#[test]
fn flat_identity_converges_at_second_order() {
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for n in [32, 64] {
        let f = perturbed_affine(n, 0.2);
        hs.push(f.grid.spacing()[0]);
        let r = verify_evolution_flat(&triple(f), &flat_product(), EXEC).unwrap();
        errs.push(r.max_abs_residual);
    }
    let order = convergence_order(&hs, &errs).unwrap();
    assert!(order >= 1.5, "errors {errs:?}, order {order}");
}

#[test]
fn mismatched_states_are_rejected() {
    let mut states = triple(perturbed_affine(16, 0.1));
    states[2].time += 1.0;
    assert!(verify_evolution_flat(&states, &flat_product(), EXEC).is_err());
    let other = triple(perturbed_affine(32, 0.1));
    let mixed = vec![states[0].clone(), states[1].clone(), other[2].clone()];
    assert!(verify_evolution_flat(&mixed, &flat_product(), EXEC).is_err());
}

/// `F_t(x) = (x + t w, f₀(x + t w))` describes a fixed surface, so the
/// advected derivative of any geometric scalar vanishes.
#[test]
fn advection_cancels_reparametrization() {
    let n = 64;
    let tp = 2.0 * PI;
    let w = [0.3, -0.2];
    let grid = make_grid(&torus([tp, tp]), &[n, n]).unwrap();
    let f0 = |x: &[f64], v: &mut [f64]| {
        v[0] = wrap(0.4 * x[1].sin() + 0.2 * x[0].cos(), tp);
        v[1] = wrap(0.3 * (x[0] + x[1]).sin(), tp);
    };
    let field = MapField::from_fn(grid.clone(), torus([tp, tp]), |_, x, v| f0(x, v)).unwrap();
    let eta1: Vec<f64> = gauss_sweep(&field, EXEC)
        .unwrap()
        .iter()
        .map(|p| p.functionals.eta1)
        .collect();

    // velocity (w, df(w)) of the reparametrized surface
    let base = vec![[w[0], w[1], 0.0]; grid.len()];
    let mut fiber = vec![0.0; 2 * grid.len()];
    for node in 0..grid.len() {
        let d = differential_at(&field, node).unwrap();
        for a in 0..2 {
            fiber[2 * node + a] = w[0] * d.df[0][a] + w[1] * d.df[1][a];
        }
    }
    let adv = tangential_advection(&field, &base, &fiber, &eta1, EXEC).unwrap();

    // ∂_t η₁ at fixed x by shifting the surface in time
    let dt = 1e-3;
    let shifted = |t: f64| {
        let fld = MapField::from_fn(grid.clone(), torus([tp, tp]), |_, x, v| {
            f0(&[x[0] + t * w[0], x[1] + t * w[1]], v)
        })
        .unwrap();
        gauss_sweep(&fld, EXEC)
            .unwrap()
            .iter()
            .map(|p| p.functionals.eta1)
            .collect::<Vec<f64>>()
    };
    let (ep, em) = (shifted(dt), shifted(-dt));
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for node in 0..grid.len() {
        let dtdt = (ep[node] - em[node]) / (2.0 * dt);
        worst = worst.max((dtdt - adv[node]).abs());
        scale = scale.max(dtdt.abs());
    }
    assert!(scale > 1e-2);
    assert!(worst < 1e-2 * scale, "worst {worst}, scale {scale}");
}

fn small_sphere_map(n: usize, eps: f64) -> MapField {
    let s = ManifoldSpec::sphere(2, 1.0).unwrap();
    let grid = make_grid(&s, &[n, 2 * n]).unwrap();
    MapField::from_fn(grid, s, |_, x, v| {
        let (p1, p2) = (x[0].sin() * x[1].cos(), x[0].sin() * x[1].sin());
        let (a, b) = (eps * p1, eps * p2);
        let r = (a * a + b * b).sqrt();
        let k = if r > 0.0 { r.sin() / r } else { 1.0 };
        v[0] = k * a;
        v[1] = k * b;
        v[2] = r.cos();
    })
    .unwrap()
}

#[test]
fn sphere_constant_map_has_zero_slack() {
    let s = ManifoldSpec::sphere(2, 1.0).unwrap();
    let prod = ProductSpec::new(s.clone(), s).unwrap();
    let r = verify_inequality_sphere(&triple(small_sphere_map(16, 0.0)), &prod, EXEC).unwrap();
    assert!(r.min_slack.abs() < 1e-12);
    assert!(r.fitted_c.is_none());
}

#[test]
fn sphere_inequality_holds_on_small_map() {
    let s = ManifoldSpec::sphere(2, 1.0).unwrap();
    let prod = ProductSpec::new(s.clone(), s).unwrap();
    let mut slack = Vec::new();
    let mut ident = Vec::new();
    let mut hs = Vec::new();
    for n in [32, 64] {
        hs.push(PI / n as f64);
        let r = verify_inequality_sphere(&triple(small_sphere_map(n, 0.3)), &prod, EXEC).unwrap();
        assert!(r.fitted_c.unwrap() > 0.0, "c = {:?}", r.fitted_c);
        slack.push(r.min_slack);
        ident.push(r.max_abs_identity_residual);
    }
    // the continuum slack vanishes at the poles
    assert!(slack[1] >= -1e-2);
    assert!(slack[1].min(0.0) >= slack[0].min(0.0), "slack {slack:?}");
    let order = convergence_order(&hs, &ident).unwrap();
    assert!(order >= 1.5, "identity {ident:?}, order {order}");
}

//! The alternating minimization loop: candidate step, energy descent test, safeguarded
//! block descent and the smoothing schedule.

use super::log::{Branch, IterRecord, IterateLog};
use super::params::{RunMode, SolverParams, StepSizes};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist_sq};
use crate::objective::{grad_norm, DualState, ProblemSpec};

/// An iterate together with its forward projection.
struct Point {
    x: Vec<f64>,
    z: Vec<f64>,
    ax: Vec<f64>,
}

impl Point {
    fn new(spec: &ProblemSpec, x: Vec<f64>, z: Vec<f64>) -> Self {
        let ax = spec.forward(&x);
        Point { x, z, ax }
    }

    fn from_state(spec: &ProblemSpec, state: &DualState) -> Self {
        Point::new(spec, state.x.values.clone(), state.z.values.clone())
    }

    fn phi(&self, spec: &ProblemSpec, eps: f64) -> Result<f64> {
        spec.phi_eps_with(&self.ax, &self.x, &self.z, eps)
    }

    fn sq_move(&self, other: &Point) -> (f64, f64) {
        (dist_sq(&self.x, &other.x), dist_sq(&self.z, &other.z))
    }
}

struct Gradient {
    gx: Vec<f64>,
    gz: Vec<f64>,
    norm: f64,
}

fn gradient(spec: &ProblemSpec, p: &Point, eps: f64) -> Result<Gradient> {
    let (gx, gz) = spec.grad_phi_eps_with(&p.ax, &p.x, &p.z, eps)?;
    let norm = grad_norm(&gx, &gz);
    Ok(Gradient { gx, gz, norm })
}

fn ensure_finite(what: &str, v: &[f64]) -> Result<()> {
    if all_finite(v) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite values in {what}")))
    }
}

fn candidate_raw(spec: &ProblemSpec, p: &Point, steps: &StepSizes, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let gz = spec.grad_f_z_with(&p.ax, &p.z);
    let b: Vec<f64> = p.z.iter().zip(&gz).map(|(z, g)| z - steps.alpha * g).collect();
    ensure_finite("sinogram gradient step", &b)?;
    let u_z = if steps.alpha_hat > 0.0 {
        let q = spec.reg_sino_grad(&b, eps)?;
        b.iter().zip(&q).map(|(b, q)| b - steps.alpha_hat * q).collect()
    } else {
        b
    };
    ensure_finite("sinogram regularizer step", &u_z)?;
    let gx = spec.grad_f_x_with(&p.ax, &u_z);
    let c: Vec<f64> = p.x.iter().zip(&gx).map(|(x, g)| x - steps.beta * g).collect();
    ensure_finite("image gradient step", &c)?;
    let u_x = if steps.beta_hat > 0.0 {
        let r = spec.reg_image_grad(&c, eps)?;
        c.iter().zip(&r).map(|(c, r)| c - steps.beta_hat * r).collect()
    } else {
        c
    };
    ensure_finite("image regularizer step", &u_x)?;
    Ok((u_x, u_z))
}

fn edc_raw(eta: f64, phi_old: f64, grad_old: f64, phi_new: f64, dx2: f64, dz2: f64) -> bool {
    let sufficient = phi_new - phi_old <= -eta * (dx2 + dz2);
    let bounded = grad_old <= (dx2.sqrt() + dz2.sqrt()) / eta;
    sufficient && bounded
}

/// Outcome of the safeguarded block descent.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeguardStep {
    pub state: DualState,
    pub backtracks: usize,
    pub alpha_bar: f64,
    pub beta_bar: f64,
}

struct SafeguardRaw {
    point: Point,
    phi: f64,
    backtracks: usize,
    alpha_bar: f64,
    beta_bar: f64,
}

fn safeguard_raw(
    spec: &ProblemSpec,
    p: &Point,
    phi_old: f64,
    grad: &Gradient,
    params: &SolverParams,
    eps: f64,
) -> Result<SafeguardRaw> {
    // grad_x f(x_k, v_z) = A^T(A x_k - z_k) + abar A^T grad_z Phi(x_k, z_k)
    let back_gz = spec.back(&grad.gz);
    let mut alpha_bar = params.alpha_bar0;
    let mut beta_bar = params.beta_bar0;
    for shrinks in 0..=params.max_backtracks {
        let v_z: Vec<f64> = p.z.iter().zip(&grad.gz).map(|(z, g)| z - alpha_bar * g).collect();
        let v_x: Vec<f64> =
            p.x.iter()
                .zip(grad.gx.iter().zip(&back_gz))
                .map(|(x, (g, bg))| x - beta_bar * (g + alpha_bar * bg))
                .collect();
        let v = Point::new(spec, v_x, v_z);
        if all_finite(&v.x) && all_finite(&v.z) {
            let phi = v.phi(spec, eps)?;
            let (dx2, dz2) = v.sq_move(p);
            if phi - phi_old <= -params.delta * (dx2 + dz2) {
                return Ok(SafeguardRaw {
                    point: v,
                    phi,
                    backtracks: shrinks,
                    alpha_bar,
                    beta_bar,
                });
            }
        }
        alpha_bar *= params.rho;
        beta_bar *= params.rho;
    }
    Err(Error::Numerical(format!(
        "safeguard line search exceeded {} backtracks",
        params.max_backtracks
    )))
}

fn prepared(state: &DualState, spec: &ProblemSpec) -> Result<()> {
    spec.check_state(state)?;
    if all_finite(&state.x.values) && all_finite(&state.z.values) {
        Ok(())
    } else {
        Err(Error::input("state contains non-finite values"))
    }
}

/// Candidate iterate: a gradient step and a regularizer step on the sinogram block, then the
/// same on the image block evaluated against the new sinogram.
pub fn candidate_step(state: &DualState, spec: &ProblemSpec, steps: &StepSizes, eps: f64) -> Result<DualState> {
    prepared(state, spec)?;
    let p = Point::from_state(spec, state);
    let (u_x, u_z) = candidate_raw(spec, &p, steps, eps)?;
    Ok(spec.state_from(u_x, u_z))
}

/// Energy descent test. The gradient is taken at the current iterate, not the candidate.
pub fn edc_check(state: &DualState, candidate: &DualState, spec: &ProblemSpec, eta: f64, eps: f64) -> Result<bool> {
    prepared(state, spec)?;
    prepared(candidate, spec)?;
    let p = Point::from_state(spec, state);
    let u = Point::from_state(spec, candidate);
    let phi_old = p.phi(spec, eps)?;
    let grad = gradient(spec, &p, eps)?;
    let phi_new = u.phi(spec, eps)?;
    let (dx2, dz2) = u.sq_move(&p);
    Ok(edc_raw(eta, phi_old, grad.norm, phi_new, dx2, dz2))
}

/// Block descent with backtracking from `(alpha_bar0, beta_bar0)`.
pub fn bcd_safeguard(state: &DualState, spec: &ProblemSpec, params: &SolverParams, eps: f64) -> Result<SafeguardStep> {
    prepared(state, spec)?;
    let p = Point::from_state(spec, state);
    let phi_old = p.phi(spec, eps)?;
    let grad = gradient(spec, &p, eps)?;
    let out = safeguard_raw(spec, &p, phi_old, &grad, params, eps)?;
    Ok(SafeguardStep {
        state: spec.state_from(out.point.x, out.point.z),
        backtracks: out.backtracks,
        alpha_bar: out.alpha_bar,
        beta_bar: out.beta_bar,
    })
}

/// Next smoothing factor and whether it was reduced.
pub fn smoothing_update(eps: f64, grad_norm: f64, params: &SolverParams) -> (f64, bool) {
    if grad_norm < params.sigma * params.gamma * eps {
        (params.gamma * eps, true)
    } else {
        (eps, false)
    }
}

fn with_log(e: Error, log: &IterateLog, k: usize) -> Error {
    match e {
        Error::Solver { .. } => e,
        other => Error::Solver {
            message: format!("iteration {k}: {other}"),
            log: Box::new(log.clone()),
        },
    }
}

/// Runs the solver from `init`. Every error raised after setup carries the log so far.
pub fn run(spec: &ProblemSpec, init: &DualState, params: &SolverParams) -> Result<(DualState, IterateLog)> {
    params.validate()?;
    prepared(init, spec)?;
    let cap = params.iteration_cap();
    let mut log = IterateLog::default();
    if cap == 0 {
        return Ok((init.clone(), log));
    }
    let model = spec.lipschitz_model(params.power_iters, &params.lipschitz)?;
    params.check_backtracks(&model)?;

    let mut eps = params.eps0;
    let mut steps = params.steps_at(&model, eps);
    let mut p = Point::from_state(spec, init);
    let mut phi = p.phi(spec, eps).map_err(|e| with_log(e, &log, 0))?;
    let mut grad = gradient(spec, &p, eps).map_err(|e| with_log(e, &log, 0))?;

    for k in 0..cap {
        let step = |log: &IterateLog| -> Result<(Point, f64, Branch, usize, f64, f64)> {
            let (u_x, u_z) = candidate_raw(spec, &p, &steps, eps)?;
            let u = Point::new(spec, u_x, u_z);
            let phi_u = u.phi(spec, eps)?;
            let (dx2, dz2) = u.sq_move(&p);
            if phi_u.is_finite() && edc_raw(params.eta, phi, grad.norm, phi_u, dx2, dz2) {
                return Ok((u, phi_u, Branch::Edc, 0, steps.alpha, steps.beta));
            }
            let s = safeguard_raw(spec, &p, phi, &grad, params, eps).map_err(|e| with_log(e, log, k))?;
            Ok((s.point, s.phi, Branch::Bcd, s.backtracks, s.alpha_bar, s.beta_bar))
        };
        let (next, phi_next, branch, backtracks, alpha_used, beta_used) =
            step(&log).map_err(|e| with_log(e, &log, k))?;
        let grad_next = gradient(spec, &next, eps).map_err(|e| with_log(e, &log, k))?;
        let (eps_next, reduced) = smoothing_update(eps, grad_next.norm, params);
        log.records.push(IterRecord {
            k,
            eps,
            phi_before: phi,
            phi_after: phi_next,
            grad_norm: grad_next.norm,
            branch,
            backtracks,
            alpha_used,
            beta_used,
            eps_reduced: reduced,
        });
        p = next;
        let done = reduced && params.mode == RunMode::Converge && eps <= params.eps_tol;
        if done {
            break;
        }
        if reduced {
            eps = eps_next;
            steps = params.steps_at(&model, eps);
            phi = p.phi(spec, eps).map_err(|e| with_log(e, &log, k + 1))?;
            grad = gradient(spec, &p, eps).map_err(|e| with_log(e, &log, k + 1))?;
        } else {
            phi = phi_next;
            grad = grad_next;
        }
    }
    Ok((spec.state_from(p.x, p.z), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{grad_phi_eps, phi_eps};
    use crate::regularizer::{make_tv_weights, Domain};
    use crate::tomo::{GridSpec, Projector, ScanGeometry, Sinogram, ViewMask};

    /// One pixel, one ray of unit length: `A = [1]`.
    fn scalar_problem(s: f64, lambda: f64) -> ProblemSpec {
        let grid = GridSpec::new(1, 1, 1.0).unwrap();
        let geo = ScanGeometry::parallel(grid, 1, 1, 1.0).unwrap();
        let proj = Projector::new(geo).unwrap();
        let meas = Sinogram::new(1, 1, vec![0], vec![s]).unwrap();
        ProblemSpec::new(proj, ViewMask::identity(1), meas, lambda, None, None).unwrap()
    }

    fn tv_problem() -> (ProblemSpec, DualState) {
        let geo = ScanGeometry::parallel_covering(8, 12).unwrap();
        let proj = Projector::new(geo.clone()).unwrap();
        let truth: Vec<f64> = (0..64)
            .map(|i| {
                if (i % 8) > 2 && (i / 8) > 2 && (i % 8) < 6 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let full = proj.forward_raw(&truth);
        let mask = ViewMask::uniform(12, 4).unwrap();
        let nd = geo.n_dets;
        let vals: Vec<f64> = mask
            .selected
            .iter()
            .flat_map(|&v| full[v * nd..(v + 1) * nd].to_vec())
            .collect();
        let s = Sinogram::new(12, nd, mask.selected.clone(), vals).unwrap();
        let spec = ProblemSpec::new(
            proj,
            mask,
            s,
            10.0,
            Some(make_tv_weights(Domain::Image, 0.05)),
            Some(make_tv_weights(Domain::Sinogram, 0.01)),
        )
        .unwrap();
        let init = spec.state_from(vec![0.0; 64], vec![0.0; 12 * nd]);
        (spec, init)
    }

    #[test]
    fn unit_ray_is_unit_length() {
        let spec = scalar_problem(0.0, 1.0);
        assert_eq!(spec.forward(&[1.0]), vec![1.0]);
    }

    #[test]
    fn candidate_closed_form_on_scalar_problem() {
        let (s, lambda) = (2.0, 3.0);
        let spec = scalar_problem(s, lambda);
        let (x, z) = (1.5, -0.5);
        let steps = StepSizes {
            alpha: 0.2,
            beta: 0.7,
            alpha_hat: 0.0,
            beta_hat: 0.0,
        };
        let out = candidate_step(&spec.state_from(vec![x], vec![z]), &spec, &steps, 0.1).unwrap();
        let uz = z - 0.2 * (-(x - z) + lambda * (z - s));
        let ux = x - 0.7 * (x - uz);
        assert!((out.z.values[0] - uz).abs() < 1e-15);
        assert!((out.x.values[0] - ux).abs() < 1e-15);
    }

    #[test]
    fn candidate_is_fixed_at_exact_fit() {
        let spec = scalar_problem(1.25, 2.0);
        let st = spec.state_from(vec![1.25], vec![1.25]);
        let steps = StepSizes {
            alpha: 0.3,
            beta: 0.3,
            alpha_hat: 0.1,
            beta_hat: 0.1,
        };
        assert_eq!(candidate_step(&st, &spec, &steps, 0.1).unwrap(), st);
    }

    #[test]
    fn candidate_rejects_overflow() {
        let spec = scalar_problem(0.0, 1.0);
        let st = spec.state_from(vec![1e300], vec![-1e300]);
        let steps = StepSizes {
            alpha: 1e10,
            beta: 1.0,
            alpha_hat: 0.0,
            beta_hat: 0.0,
        };
        assert!(matches!(
            candidate_step(&st, &spec, &steps, 0.1),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn edc_degenerate_cases() {
        let spec = scalar_problem(1.0, 1.0);
        let moving = spec.state_from(vec![2.0], vec![0.0]);
        assert!(!edc_check(&moving, &moving, &spec, 1e-4, 0.1).unwrap());
        let still = spec.state_from(vec![1.0], vec![1.0]);
        assert!(edc_check(&still, &still, &spec, 1e-4, 0.1).unwrap());
    }

    #[test]
    fn edc_accepts_small_descent_step() {
        let spec = scalar_problem(0.0, 1.0);
        let st = spec.state_from(vec![1.0], vec![0.0]);
        // f = (x - z)^2 / 2 + z^2 / 2, grad = (1, -1) at (1, 0); step 0.1 along -grad
        let cand = spec.state_from(vec![0.9], vec![0.1]);
        let drop = 0.5 - (0.5 * 0.8 * 0.8 + 0.5 * 0.01);
        let moved = 0.02;
        assert!(drop >= 1e-4 * moved);
        assert!(2f64.sqrt() <= (0.1 + 0.1) / 1e-4);
        assert!(edc_check(&st, &cand, &spec, 1e-4, 0.1).unwrap());
        // a large eta breaks the gradient bound
        assert!(!edc_check(&st, &cand, &spec, 10.0, 0.1).unwrap());
    }

    #[test]
    fn safeguard_backtracks_to_order_one() {
        let spec = scalar_problem(0.0, 1.0);
        let (x, z) = (1.0, 0.0);
        let params = SolverParams {
            alpha_bar0: 100.0,
            beta_bar0: 100.0,
            rho: 0.5,
            delta: 0.1,
            ..Default::default()
        };
        let out = bcd_safeguard(&spec.state_from(vec![x], vec![z]), &spec, &params, 0.1).unwrap();
        // independent scalar evaluation of the same search
        let f = |x: f64, z: f64| 0.5 * (x - z) * (x - z) + 0.5 * z * z;
        let (gx, gz) = (x - z, -(x - z) + z);
        let mut a = 100.0;
        let mut expect = 0;
        loop {
            let vz = z - a * gz;
            let vx = x - a * (x - vz);
            let d = (vx - x).powi(2) + (vz - z).powi(2);
            if f(vx, vz) - f(x, z) <= -0.1 * d {
                break;
            }
            a *= 0.5;
            expect += 1;
        }
        let _ = gx;
        assert_eq!(out.backtracks, expect);
        assert!(out.alpha_bar > 0.1 && out.alpha_bar <= 2.0, "{}", out.alpha_bar);
        let phi_new = f(out.state.x.values[0], out.state.z.values[0]);
        let moved = (out.state.x.values[0] - x).powi(2) + (out.state.z.values[0] - z).powi(2);
        assert!(phi_new - f(x, z) <= -0.1 * moved);
    }

    #[test]
    fn safeguard_stationary_accepts_immediately() {
        let spec = scalar_problem(0.5, 1.0);
        let st = spec.state_from(vec![0.5], vec![0.5]);
        let out = bcd_safeguard(&st, &spec, &SolverParams::default(), 0.1).unwrap();
        assert_eq!(out.backtracks, 0);
        assert_eq!(out.state, st);
    }

    #[test]
    fn safeguard_gives_up() {
        let spec = scalar_problem(0.0, 1.0);
        let params = SolverParams {
            alpha_bar0: 1e6,
            beta_bar0: 1e6,
            max_backtracks: 3,
            ..Default::default()
        };
        let st = spec.state_from(vec![1.0], vec![0.0]);
        assert!(bcd_safeguard(&st, &spec, &params, 0.1).is_err());
    }

    #[test]
    fn smoothing_update_rules() {
        let p = SolverParams::default();
        assert_eq!(smoothing_update(0.1, 0.0, &p), (0.05, true));
        let edge = p.sigma * p.gamma * 0.1;
        assert_eq!(smoothing_update(0.1, edge, &p), (0.1, false));
        for g in [0.0, 1.0, 5.0, 1e3] {
            assert!(smoothing_update(0.1, g, &p).0 <= 0.1);
        }
    }

    #[test]
    fn zero_iterations_returns_init() {
        let (spec, init) = tv_problem();
        let p = SolverParams {
            max_iters: 0,
            ..Default::default()
        };
        let (out, log) = run(&spec, &init, &p).unwrap();
        assert_eq!(out, init);
        assert!(log.is_empty());
    }

    #[test]
    fn run_descends_and_is_deterministic() {
        let (spec, init) = tv_problem();
        let p = SolverParams {
            max_iters: 60,
            ..Default::default()
        };
        let (a, log_a) = run(&spec, &init, &p).unwrap();
        let (b, log_b) = run(&spec, &init, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        assert_eq!(log_a.len(), 60);
        for r in &log_a.records {
            assert!(r.phi_after <= r.phi_before, "k = {}", r.k);
        }
        let last = log_a.records.last().unwrap();
        let check = phi_eps(&a, &spec, last.eps).unwrap();
        assert!((check - last.phi_after).abs() <= 1e-12 * check.abs().max(1.0));
        let (gx, gz) = grad_phi_eps(&a, &spec, last.eps).unwrap();
        assert!((grad_norm(&gx.values, &gz.values) - last.grad_norm).abs() <= 1e-9 * last.grad_norm.max(1.0));
    }

    #[test]
    fn phase_mode_runs_exact_count() {
        let (spec, init) = tv_problem();
        let p = SolverParams {
            mode: RunMode::Phases(5),
            ..Default::default()
        };
        let (_, log) = run(&spec, &init, &p).unwrap();
        assert_eq!(log.len(), 5);
    }

    #[test]
    fn run_rejects_bad_init() {
        let (spec, _) = tv_problem();
        let bad = spec.state_from(vec![f64::NAN; 64], vec![0.0; spec.sino_len()]);
        assert!(run(&spec, &bad, &SolverParams::default()).is_err());
    }
}

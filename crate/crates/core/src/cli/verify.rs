//! Invariant checks run against a single configured instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Instance};
use crate::dynamics::{integrate, monitor_bounds, mean, IntegratorConfig, Method};
use crate::equilibrium::{
    linear_fj_equilibrium, multistart_uniqueness, taylor_equilibrium, taylor_jacobian_check, verify_nash,
};
use crate::error::Result;
use crate::models::{Flow, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.to_string(), passed, detail: detail.into() }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Check::new(name, passed, detail),
            Err(e) => Check::new(name, false, e.to_string()),
        }
    }
}

/// Runs every check that applies to the configured model.
pub fn run_checks(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let inst = cfg.instantiate()?;
    let mut checks = Vec::new();
    let long = IntegratorConfig { method: Method::Rk4Adaptive, stop_tol: 1e-11, ..cfg.integrator.clone() };
    let traj = integrate(&inst.net, &inst.model, &inst.x0, &long);

    if let Ok(traj) = &traj {
        if let Some(energy) = &traj.energy {
            let worst = energy.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1.0)).fold(f64::NEG_INFINITY, f64::max);
            checks.push(Check::new("energy_descent", worst <= 1e-9, format!("largest relative rise {worst:e}")));
        }
    }
    if let Some(c) = gradient_check(&inst, cfg.seed) {
        checks.push(c);
    }

    match &inst.model {
        Model::Nfj(params) => {
            checks.push(Check::from_result(
                "max_min_principle",
                traj.as_ref().map_err(clone_err).map(|t| {
                    let b = monitor_bounds(t, params, &inst.x0);
                    let tol = 1e-9 * b.c_plus.max(1.0);
                    (b.worst() <= tol, format!("worst transgression {:e} (box [{}, {}])", b.worst(), b.c_minus, b.c_plus))
                }),
            ));
            let cert = multistart_uniqueness(&inst.net, params, &cfg.solver);
            checks.push(Check::from_result(
                "uniqueness",
                cert.as_ref().map_err(clone_err).map(|c| {
                    (true, format!("agreement {:e} over {} starts", c.multistart_agreement.unwrap_or(0.0), cfg.solver.starts))
                }),
            ));
            if let Ok(cert) = &cert {
                checks.push(Check::new(
                    "stability_certificate",
                    cert.jac_min_eig > 0.0 && cert.m_matrix_ok,
                    format!("min eigenvalue {:e}, min pivot {:e}", cert.jac_min_eig, cert.min_leading_pivot),
                ));
                checks.push(Check::new("steady_state_bounds", cert.bounds_ok, "min u <= x*^p <= max u"));
                checks.push(Check::from_result(
                    "nash",
                    verify_nash(&inst.net, params, &cert.x_star, cfg.nash_grid)
                        .map(|r| (true, format!("max relative gain {:e}", r.max_relative_gain))),
                ));
                if let Ok(traj) = &traj {
                    let gap = sup_gap(traj.final_state(), &cert.x_star);
                    let tol = 1e-6 * sup(&cert.x_star);
                    checks.push(Check::new(
                        "flow_limit_matches_root",
                        traj.converged && gap <= tol,
                        format!("converged = {}, gap {gap:e}", traj.converged),
                    ));
                }
            }
        }
        Model::Taylor(params) => {
            let closed = taylor_equilibrium(&inst.net, params);
            checks.push(Check::from_result(
                "taylor_jacobian",
                taylor_jacobian_check(&inst.net, params).map(|m| (m > 0.0, format!("min eigenvalue {m:e}"))),
            ));
            if let (Ok(x), Ok(traj)) = (&closed, &traj) {
                let gap = sup_gap(x, traj.final_state());
                checks.push(Check::new("taylor_closed_form", gap <= 1e-8 * sup(x).max(1.0), format!("gap {gap:e}")));
            }
        }
        Model::LinearFj(params) => {
            if let (Ok(x), Ok(traj)) = (&linear_fj_equilibrium(&inst.net, params), &traj) {
                let gap = sup_gap(x, traj.final_state());
                checks.push(Check::new("linear_closed_form", gap <= 1e-8 * sup(x).max(1.0), format!("gap {gap:e}")));
            }
        }
        Model::Abelson | Model::Laplacian => {
            if let Ok(traj) = &traj {
                let s = *traj.spread.last().unwrap_or(&f64::NAN);
                checks.push(Check::new("consensus", s < 1e-8, format!("final spread {s:e}")));
                if matches!(inst.model, Model::Laplacian) || inst.net.degrees().windows(2).all(|w| w[0] == w[1]) {
                    let drift = (mean(traj.final_state()) - mean(&inst.x0)).abs();
                    checks.push(Check::new("mean_conservation", drift < 1e-8, format!("drift {drift:e}")));
                }
            }
        }
    }
    if let Err(e) = &traj {
        checks.push(Check::new("integration", false, e.to_string()));
    }
    Ok(checks)
}

fn clone_err(e: &crate::error::Error) -> crate::error::Error {
    crate::error::Error::Config(e.to_string())
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Central-difference gradient of the energy against the negated field at
/// a few random states.
fn gradient_check(inst: &Instance, seed: u64) -> Option<Check> {
    let flow = Flow::new(&inst.net, &inst.model).ok()?;
    flow.energy(&inst.x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = inst.x0.iter().copied().fold(1.0, f64::max) * 2.0;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut x: Vec<f64> = (0..inst.net.n()).map(|_| rng.gen_range(0.1..hi)).collect();
        if let Model::Nfj(p) = &inst.model {
            p.project_pinned(&mut x);
        }
        let field = flow.eval(&x);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in (0..x.len()).filter(|&i| !flow.is_frozen(i)) {
            let h = 1e-5 * x[i].max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let g = (flow.energy(&xp)? - flow.energy(&xm)?) / (2.0 * h);
            num += (g + field[i]).powi(2);
            den += field[i].powi(2);
        }
        worst = worst.max(num.sqrt() / den.sqrt().max(1e-300));
    }
    Some(Check::new("energy_gradient", worst <= 1e-6, format!("worst relative mismatch {worst:e}")))
}

//! Steady states of the nonlinear model: the root map `F`, its Jacobian
//! `G − M`, a damped Newton solver, stability certificates, multistart
//! uniqueness and best-response (Nash) verification. Also the closed-form
//! equilibrium of the Taylor model.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, log_linear_rate, IntegratorConfig, Method};
use crate::error::{invalid, Error, Result};
use crate::graph::Network;
use crate::models::{check_positive, payout_nfj_at, pow_p, LinearFjParams, Model, NfjParams, TaylorParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Residual target relative to the magnitude of the terms of `F`.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo constant of the backtracking line search.
    pub armijo_c: f64,
    pub max_backtracks: usize,
    pub starts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-12, max_iter: 100, armijo_c: 1e-4, max_backtracks: 30, starts: 100, seed: 0 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("solver tol must be positive"));
        }
        if self.starts == 0 {
            return Err(invalid("solver needs at least one start"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

/// `F_i = d_i x_i − Σ_j M_ij x_j + σ_i (x_i^p − u_i) x_i`; zero on pinned rows.
pub fn f_map(net: &Network, params: &NfjParams, x: &[f64]) -> Result<Vec<f64>> {
    params.validate_for(net)?;
    check_positive(x)?;
    Ok(f_map_unchecked(net, params, x))
}

fn f_map_unchecked(net: &Network, params: &NfjParams, x: &[f64]) -> Vec<f64> {
    let rows = net.rows();
    (0..x.len())
        .map(|i| {
            if params.pinned[i] {
                0.0
            } else {
                -rows.diffusion(i, x) + params.sigma[i] * (pow_p(x[i], params.p) - params.u[i]) * x[i]
            }
        })
        .collect()
}

/// Magnitude of the summands of `F`, used to make residual targets relative.
pub fn residual_scale(net: &Network, params: &NfjParams, x: &[f64]) -> f64 {
    let rows = net.rows();
    (0..x.len())
        .filter(|&i| !params.pinned[i])
        .map(|i| {
            let coupling: f64 = rows.row(i).iter().map(|&(j, w)| w * (x[i] + x[j])).sum();
            coupling + params.sigma[i] * (pow_p(x[i], params.p) + params.u[i]) * x[i]
        })
        .fold(0.0, f64::max)
}

/// Jacobian of [`f_map`]: `G − M` with `g_i = d_i + σ_i((p+1) x_i^p − u_i)`.
/// Pinned rows are zero, matching `f_map`.
pub fn jacobian_nfj(net: &Network, params: &NfjParams, x: &[f64]) -> DMatrix<f64> {
    let n = net.n();
    let mut j = -net.weights().clone();
    for i in 0..n {
        if params.pinned[i] {
            j.row_mut(i).fill(0.0);
            continue;
        }
        j[(i, i)] += diag_g(net, params, x, i);
    }
    j
}

fn diag_g(net: &Network, params: &NfjParams, x: &[f64], i: usize) -> f64 {
    net.degrees()[i] + params.sigma[i] * ((params.p + 1.0) * pow_p(x[i], params.p) - params.u[i])
}

/// Jacobian restricted to the free (unpinned) agents.
pub fn reduced_jacobian(net: &Network, params: &NfjParams, x: &[f64]) -> DMatrix<f64> {
    let free = params.free_indices();
    let m = net.weights();
    DMatrix::from_fn(free.len(), free.len(), |a, b| {
        let (i, j) = (free[a], free[b]);
        let g = if i == j { diag_g(net, params, x, i) } else { 0.0 };
        g - m[(i, j)]
    })
}

/// Output of [`newton_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub residual_scale: f64,
    pub iterations: usize,
}

/// `u_i^{1/p}` for every agent: the default Newton start.
pub fn default_start(params: &NfjParams) -> Vec<f64> {
    (0..params.n()).map(|i| params.target(i)).collect()
}

fn sup_norm_at(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().fold(0.0, |m, &i| m.max(v[i].abs()))
}

/// Damped Newton on `F(x) = 0` over the free agents, pinned agents held at
/// `u_i^{1/p}`.
///
/// Each step is halved (at most `max_backtracks` times) until the iterate is
/// strictly positive and `½‖F‖²` satisfies the Armijo condition. Away from
/// the root `G − M` may be indefinite; when the line search stalls or the
/// Jacobian is singular, the iterate is first carried along the gradient
/// flow until the field is small, then Newton resumes. Succeeds when
/// `‖F‖∞ <= tol · max(1, scale)`, `scale` being [`residual_scale`].
pub fn newton_solve(net: &Network, params: &NfjParams, x0: Option<&[f64]>, cfg: &SolverConfig) -> Result<Solution> {
    params.validate_for(net)?;
    cfg.validate()?;
    let mut x = match x0 {
        Some(x0) => {
            if x0.len() != net.n() {
                return Err(Error::DimensionMismatch { expected: net.n(), got: x0.len() });
            }
            x0.to_vec()
        }
        None => default_start(params),
    };
    check_positive(&x)?;
    params.project_pinned(&mut x);

    let mut iters = 0;
    let mut last_err = None;
    for _ in 0..=MAX_FLOW_RESTARTS {
        match newton_phase(net, params, x, cfg, &mut iters) {
            Ok(sol) => return Ok(sol),
            Err(Stall { x: stuck, err }) => {
                if iters >= cfg.max_iter {
                    return Err(err);
                }
                log::debug!("Newton stalled after {iters} iterations ({err}); following the flow");
                x = relax_along_flow(net, params, &stuck)?;
                last_err = Some(err);
            }
        }
    }
    Err(last_err.expect("at least one phase ran"))
}

const MAX_FLOW_RESTARTS: usize = 3;

struct Stall {
    x: Vec<f64>,
    err: Error,
}

fn newton_phase(
    net: &Network,
    params: &NfjParams,
    mut x: Vec<f64>,
    cfg: &SolverConfig,
    iters: &mut usize,
) -> std::result::Result<Solution, Stall> {
    let free = params.free_indices();
    let mut f = f_map_unchecked(net, params, &x);
    loop {
        let residual = sup_norm_at(&f, &free);
        let scale = residual_scale(net, params, &x);
        if residual <= cfg.tol * scale.max(1.0) {
            return Ok(Solution { x_star: x, residual, residual_scale: scale, iterations: *iters });
        }
        if *iters >= cfg.max_iter {
            return Err(Stall { x, err: Error::MaxIterExceeded { iters: *iters, residual } });
        }
        let iter = *iters;
        *iters += 1;
        let jac = reduced_jacobian(net, params, &x);
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| -f[i]));
        let delta = match jac.lu().solve(&rhs) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => return Err(Stall { x, err: Error::SingularJacobian { iter } }),
        };

        let merit = 0.5 * free.iter().map(|&i| f[i] * f[i]).sum::<f64>();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let mut trial = x.clone();
            for (k, &i) in free.iter().enumerate() {
                trial[i] += alpha * delta[k];
            }
            if trial.iter().all(|&v| v > 0.0) {
                let f_trial = f_map_unchecked(net, params, &trial);
                let m_trial = 0.5 * free.iter().map(|&i| f_trial[i] * f_trial[i]).sum::<f64>();
                if m_trial <= (1.0 - 2.0 * cfg.armijo_c * alpha) * merit {
                    accepted = Some((trial, f_trial));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xn, fnew)) => {
                x = xn;
                f = fnew;
            }
            // At the rounding floor no step can decrease the merit further.
            None if residual <= 1e-10 * scale.max(1.0) => {
                return Ok(Solution { x_star: x, residual, residual_scale: scale, iterations: iter });
            }
            None => return Err(Stall { x, err: Error::MaxIterExceeded { iters: iter, residual } }),
        }
    }
}

/// Integrates the continuous flow from `x` until `‖f‖∞` drops below a small
/// fraction of the term scale, which puts Newton inside its basin.
fn relax_along_flow(net: &Network, params: &NfjParams, x: &[f64]) -> Result<Vec<f64>> {
    let scale = residual_scale(net, params, x).max(1.0);
    let cfg = IntegratorConfig {
        dt: 0.01,
        t_end: 1e4,
        method: Method::Rk4Adaptive,
        stop_tol: 1e-6 * scale,
        record_stride: usize::MAX,
        ..Default::default()
    };
    let traj = integrate(net, &Model::Nfj(params.clone()), x, &cfg)?;
    Ok(traj.final_state().to_vec())
}

/// Steady state with its stability and optimality evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub x_star: Vec<f64>,
    /// `‖F(x*)‖∞`.
    pub residual: f64,
    pub residual_scale: f64,
    /// Smallest eigenvalue of the (reduced) Jacobian at `x*`.
    pub jac_min_eig: f64,
    /// Nonpositive off-diagonals and positive leading principal minors.
    pub m_matrix_ok: bool,
    /// Smallest pivot of the unpivoted elimination (ratio of consecutive
    /// leading principal minors).
    pub min_leading_pivot: f64,
    /// Jacobian numerically singular: the consensus family of pure averaging.
    pub degenerate: bool,
    /// `min u <= (x*_i)^p <= max u` for every agent.
    pub bounds_ok: bool,
    pub nash_ok: Option<bool>,
    pub multistart_agreement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_echo: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Pivots of Gaussian elimination without pivoting; the `k`-th leading
/// principal minor is the product of the first `k` pivots.
pub fn leading_pivots(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut pivots = Vec::with_capacity(n);
    for k in 0..n {
        let piv = a[(k, k)];
        pivots.push(piv);
        if piv == 0.0 || !piv.is_finite() {
            pivots.extend(std::iter::repeat(f64::NAN).take(n - k - 1));
            break;
        }
        for i in (k + 1)..n {
            let factor = a[(i, k)] / piv;
            if factor != 0.0 {
                for j in k..n {
                    a[(i, j)] -= factor * a[(k, j)];
                }
            }
        }
    }
    pivots
}

/// Leading principal minors computed from the pivots.
pub fn leading_minors(m: &DMatrix<f64>) -> Vec<f64> {
    leading_pivots(m)
        .iter()
        .scan(1.0, |acc, p| {
            *acc *= p;
            Some(*acc)
        })
        .collect()
}

/// Builds the stability certificate of a candidate steady state.
pub fn certify(net: &Network, params: &NfjParams, x_star: &[f64]) -> Result<EquilibriumCertificate> {
    let f = f_map(net, params, x_star)?;
    let free = params.free_indices();
    let residual = sup_norm_at(&f, &free);
    let residual_scale = residual_scale(net, params, x_star);
    let jac = reduced_jacobian(net, params, x_star);
    let size = jac.amax().max(1.0);
    let MatrixStability { min_eig: jac_min_eig, m_matrix_ok, min_leading_pivot } = matrix_stability(&jac);
    let degenerate = jac_min_eig.abs() <= 1e-9 * size;

    let slack = 1e-9 * params.u_max();
    let bounds_ok = x_star.iter().enumerate().all(|(i, &x)| {
        let q = pow_p(x, params.p);
        params.pinned[i] || (q >= params.u_min() - slack && q <= params.u_max() + slack)
    });

    Ok(EquilibriumCertificate {
        x_star: x_star.to_vec(),
        residual,
        residual_scale,
        jac_min_eig,
        m_matrix_ok,
        min_leading_pivot,
        degenerate,
        bounds_ok,
        nash_ok: None,
        multistart_agreement: None,
        params_echo: None,
        seed: None,
    })
}

/// Starting points drawn log-uniformly in `[min u, max u]^{1/p}` per agent.
pub fn multistart_points(params: &NfjParams, starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let lo = params.u_min().ln() / params.p;
    let hi = params.u_max().ln() / params.p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..starts)
        .map(|_| {
            let mut x: Vec<f64> =
                (0..params.n()).map(|_| if hi > lo { rng.gen_range(lo..=hi).exp() } else { lo.exp() }).collect();
            params.project_pinned(&mut x);
            x
        })
        .collect()
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Solves from `cfg.starts` random starts and certifies the common root.
///
/// `multistart_agreement` is the largest pairwise sup-distance between the
/// roots found; more than `1e-6 ‖x*‖∞` is reported as an error.
pub fn multistart_uniqueness(net: &Network, params: &NfjParams, cfg: &SolverConfig) -> Result<EquilibriumCertificate> {
    cfg.validate()?;
    let starts = multistart_points(params, cfg.starts, cfg.seed);
    let roots: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|x0| newton_solve(net, params, Some(x0), cfg).map(|s| s.x_star))
        .collect::<Result<_>>()?;
    let mut agreement: f64 = 0.0;
    for a in 0..roots.len() {
        for b in (a + 1)..roots.len() {
            agreement = agreement.max(sup_distance(&roots[a], &roots[b]));
        }
    }
    let x_star = &roots[0];
    let limit = 1e-6 * x_star.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if agreement > limit {
        return Err(Error::MultistartDisagreement { agreement, limit });
    }
    let mut cert = certify(net, params, x_star)?;
    cert.multistart_agreement = Some(agreement);
    cert.seed = Some(cfg.seed);
    Ok(cert)
}

/// Summary of a successful best-response check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub agents_checked: usize,
    /// Largest `p_i(x*) − min_grid p_i`, relative to the payout's scale.
    pub max_relative_gain: f64,
    /// Largest `|∂p_i/∂x_i(x*)|`, relative to the derivative's scale.
    pub max_relative_slope: f64,
}

/// Checks that no agent can lower its payout by a unilateral deviation.
///
/// For every free agent the payout is scanned on `grid` points spanning
/// `[c_−^{1/p}/2, 2 c_+^{1/p}]` with the other agents fixed, and the
/// partial derivative at `x*` is estimated by central differences. Both
/// tolerances are relative to the size of the payout's terms. The worst
/// offending agent is reported in `NashViolation`.
pub fn verify_nash(net: &Network, params: &NfjParams, x_star: &[f64], grid: usize) -> Result<NashReport> {
    params.validate_for(net)?;
    check_positive(x_star)?;
    if grid < 2 {
        return Err(invalid("Nash grid needs at least two points"));
    }
    let (c_minus, c_plus) = crate::dynamics::nfj_bounds(params, x_star);
    let lo = c_minus.powf(1.0 / params.p) / 2.0;
    let hi = 2.0 * c_plus.powf(1.0 / params.p);
    let candidates: Vec<f64> = (0..grid).map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64).collect();

    let mut worst: Option<(usize, f64, f64)> = None;
    let mut max_gain: f64 = 0.0;
    let mut max_slope: f64 = 0.0;
    let rows = net.rows();
    for i in params.free_indices() {
        let xi = x_star[i];
        let here = payout_nfj_at(net, params, x_star, i, xi);
        let coupling_terms: f64 =
            rows.row(i).iter().filter(|&&(j, _)| j != i).map(|&(j, w)| w * (xi * xi + x_star[j] * x_star[j])).sum();
        let payout_scale = (0.5 * coupling_terms + params.sigma[i] * (pow_p(xi, params.p) + params.u[i]) * xi * xi).max(1.0);
        let slope_scale =
            (rows.row(i).iter().filter(|&&(j, _)| j != i).map(|&(j, w)| w * (xi + x_star[j])).sum::<f64>()
                + params.sigma[i] * (pow_p(xi, params.p) + params.u[i]) * xi)
                .max(1.0);

        let (best_r, best_p) = candidates
            .iter()
            .map(|&r| (r, payout_nfj_at(net, params, x_star, i, r)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("grid is nonempty");
        let gain = (here - best_p) / payout_scale;

        let h = f64::EPSILON.cbrt() * xi.max(1.0);
        let slope = (payout_nfj_at(net, params, x_star, i, xi + h) - payout_nfj_at(net, params, x_star, i, xi - h)) / (2.0 * h);
        let rel_slope = slope.abs() / slope_scale;

        max_gain = max_gain.max(gain);
        max_slope = max_slope.max(rel_slope);
        if gain > 1e-9 || rel_slope > 1e-8 {
            let severity = gain.max(rel_slope);
            if worst.map_or(true, |w| severity > w.2) {
                let target = if gain > 1e-9 { best_r } else { xi - slope.signum() * h };
                worst = Some((i, target, severity));
            }
        }
    }
    if let Some((agent, candidate, _)) = worst {
        let gain = payout_nfj_at(net, params, x_star, agent, x_star[agent]) - payout_nfj_at(net, params, x_star, agent, candidate);
        return Err(Error::NashViolation { agent, candidate, gain });
    }
    Ok(NashReport { agents_checked: params.free_indices().len(), max_relative_gain: max_gain, max_relative_slope: max_slope })
}

pub fn is_nash(net: &Network, params: &NfjParams, x_star: &[f64], grid: usize) -> bool {
    verify_nash(net, params, x_star, grid).is_ok()
}

/// Closed-form Taylor equilibrium `x* = (I − ΛA)^{-1} (I − Λ) u`.
pub fn taylor_equilibrium(net: &Network, params: &TaylorParams) -> Result<Vec<f64>> {
    params.validate_for(net)?;
    if params.lambda.iter().all(|&l| l == 1.0) {
        return Err(Error::SingularSystem);
    }
    let n = net.n();
    let a = net.normalized_rows()?;
    let mut sys = DMatrix::identity(n, n);
    for i in 0..n {
        for &(j, w) in a.row(i) {
            sys[(i, j)] -= params.lambda[i] * w;
        }
    }
    let rhs = DVector::from_iterator(n, (0..n).map(|i| (1.0 - params.lambda[i]) * params.u[i]));
    let x = sys.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x.iter().copied().collect())
}

/// Equilibrium of the linear anchored flow `(L + Σ) x = Σ u`.
pub fn linear_fj_equilibrium(net: &Network, params: &LinearFjParams) -> Result<Vec<f64>> {
    if params.u.len() != net.n() {
        return Err(Error::DimensionMismatch { expected: net.n(), got: params.u.len() });
    }
    if params.sigma.iter().all(|&s| s == 0.0) {
        return Err(Error::SingularSystem);
    }
    let sys = linear_fj_jacobian(net, params);
    let rhs = DVector::from_iterator(net.n(), params.sigma.iter().zip(&params.u).map(|(s, u)| s * u));
    let x = sys.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x.iter().copied().collect())
}

/// `L + Σ`, the (constant) Jacobian of the linear anchored flow's root map.
pub fn linear_fj_jacobian(net: &Network, params: &LinearFjParams) -> DMatrix<f64> {
    let mut j = crate::graph::laplacian(net);
    for (i, s) in params.sigma.iter().enumerate() {
        j[(i, i)] += s;
    }
    j
}

/// Stability summary of a symmetric Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixStability {
    pub min_eig: f64,
    pub m_matrix_ok: bool,
    pub min_leading_pivot: f64,
}

pub fn matrix_stability(jac: &DMatrix<f64>) -> MatrixStability {
    let size = jac.amax().max(1.0);
    let min_eig = if jac.nrows() == 0 { f64::INFINITY } else { SymmetricEigen::new(jac.clone()).eigenvalues.min() };
    let offdiag_ok = (0..jac.nrows()).all(|i| (0..jac.ncols()).all(|j| i == j || jac[(i, j)] <= 0.0));
    let pivots = leading_pivots(jac);
    let min_leading_pivot = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    let m_matrix_ok = offdiag_ok && pivots.iter().all(|&p| p > 1e-10 * size);
    MatrixStability { min_eig, m_matrix_ok, min_leading_pivot }
}

/// Smallest eigenvalue of the Taylor Jacobian `I − ΛA`.
///
/// `ΛA = (ΛD⁻¹) M` is similar to `W^{1/2} M W^{1/2}` with `W = ΛD⁻¹` on the
/// agents with `λ_i > 0`; agents with `λ_i = 0` contribute eigenvalue 1.
pub fn taylor_jacobian_check(net: &Network, params: &TaylorParams) -> Result<f64> {
    params.validate_for(net)?;
    if let Some(i) = net.degrees().iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode(i));
    }
    let active: Vec<usize> = (0..net.n()).filter(|&i| params.lambda[i] > 0.0).collect();
    let mut min_eig: f64 = if active.len() < net.n() { 1.0 } else { f64::INFINITY };
    if !active.is_empty() {
        let w: Vec<f64> = active.iter().map(|&i| (params.lambda[i] / net.degrees()[i]).sqrt()).collect();
        let m = net.weights();
        let k = active.len();
        let sym = DMatrix::from_fn(k, k, |a, b| {
            let delta = if a == b { 1.0 } else { 0.0 };
            delta - w[a] * m[(active[a], active[b])] * w[b]
        });
        min_eig = min_eig.min(SymmetricEigen::new(sym).eigenvalues.min());
    }
    Ok(min_eig)
}

/// Measured exponential rate at which a small perturbation of `x*` decays
/// under the continuous nonlinear flow.
///
/// Starts from `x* + eps·v` with `v` a seeded random unit vector (free agents
/// only), runs to `t_end`, and fits `ln ‖x(t) − x(t_end)‖₂` where the
/// deviation lies between `1e-8` and `1e-4` of its initial size. `t_end`
/// should be long enough for the run to settle, e.g. `30 / λ_min`.
pub fn perturbation_decay_rate(
    net: &Network,
    params: &NfjParams,
    x_star: &[f64],
    eps: f64,
    seed: u64,
    t_end: f64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..x_star.len()).map(|i| if params.pinned[i] { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(invalid("no free agents to perturb"));
    }
    v.iter_mut().for_each(|a| *a *= eps / norm);
    let x0: Vec<f64> = x_star.iter().zip(&v).map(|(x, d)| x + d).collect();
    let cfg = IntegratorConfig {
        dt: 0.01,
        t_end,
        method: Method::Rk4Adaptive,
        stop_tol: 1e-300,
        record_stride: 1,
        ..Default::default()
    };
    let traj = integrate(net, &Model::Nfj(params.clone()), &x0, &cfg)?;
    // Deviations are taken from the run's own limit, so a root known only
    // to solver tolerance does not put a floor under them.
    let limit = traj.final_state().to_vec();
    let dev0 = eps;
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, x)| (t, x.iter().zip(&limit).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()))
        .filter(|&(_, d)| d >= 1e-8 * dev0 && d <= 1e-4 * dev0)
        .map(|(t, d)| (t, d.ln()))
        .collect();
    log_linear_rate(&pts).ok_or(Error::InsufficientDecay)
}

//! The opinion models as pure evaluations: payouts, discrete protocols,
//! continuous vector fields and energy functionals.
//!
//! Abelson (DeGroot) and Taylor (Friedkin-Johnsen) act through the
//! normalized adjacency `A`; the nonlinear model and the modified linear
//! model used in the experiments act through the raw coupling `M`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Network, SparseRows};

#[inline]
pub(crate) fn pow_p(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x * x
    } else {
        x.powf(p)
    }
}

pub(crate) fn check_len(name: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(invalid(format!("{name} has length {len}, expected {n}")));
    }
    Ok(())
}

/// Fails with `NonpositiveState` on the first entry that is not strictly positive.
pub fn check_positive(x: &[f64]) -> Result<()> {
    match x.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        Some(index) => Err(Error::NonpositiveState { index, step: None }),
        None => Ok(()),
    }
}

/// Parameters of the nonlinear model: convictions `u`, stubbornness `σ`,
/// pinned agents (`σ = ∞`) and the exponent `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfjParams {
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub pinned: Vec<bool>,
    pub p: f64,
}

impl NfjParams {
    pub fn new(u: Vec<f64>, sigma: Vec<f64>, p: f64) -> Result<Self> {
        let pinned = vec![false; u.len()];
        let params = NfjParams { u, sigma, pinned, p };
        params.validate()?;
        Ok(params)
    }

    pub fn with_pinned(mut self, pinned: Vec<bool>) -> Result<Self> {
        self.pinned = pinned;
        self.validate()?;
        Ok(self)
    }

    pub fn uniform(n: usize, u: f64, sigma: f64, p: f64) -> Result<Self> {
        NfjParams::new(vec![u; n], vec![sigma; n], p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.u.len();
        check_len("sigma", self.sigma.len(), n)?;
        check_len("pinned", self.pinned.len(), n)?;
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(invalid(format!("p = {} must be positive", self.p)));
        }
        if let Some(i) = self.u.iter().position(|&u| !(u > 0.0 && u.is_finite())) {
            return Err(invalid(format!("u[{i}] = {} must be positive", self.u[i])));
        }
        if let Some(i) = self.sigma.iter().position(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(invalid(format!("sigma[{i}] = {} must be finite and nonnegative", self.sigma[i])));
        }
        Ok(())
    }

    pub fn validate_for(&self, net: &Network) -> Result<()> {
        self.validate()?;
        check_len("u", self.u.len(), net.n())
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// The opinion `u_i^{1/p}` agent `i` is drawn toward.
    pub fn target(&self, i: usize) -> f64 {
        if self.p == 1.0 {
            self.u[i]
        } else {
            self.u[i].powf(1.0 / self.p)
        }
    }

    /// Effective stubbornness: zero for pinned agents, whose rows are frozen.
    #[inline]
    pub(crate) fn sigma_eff(&self, i: usize) -> f64 {
        if self.pinned[i] {
            0.0
        } else {
            self.sigma[i]
        }
    }

    /// Overwrites pinned entries of `x` with their fixed value `u_i^{1/p}`.
    pub fn project_pinned(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            if self.pinned[i] {
                x[i] = self.target(i);
            }
        }
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.pinned[i]).collect()
    }

    pub fn u_min(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn u_max(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Parameters of the Taylor / Friedkin-Johnsen model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorParams {
    pub lambda: Vec<f64>,
    pub u: Vec<f64>,
}

impl TaylorParams {
    pub fn new(lambda: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let params = TaylorParams { lambda, u };
        params.validate()?;
        if params.lambda.iter().all(|&l| l == 1.0) {
            log::warn!("every lambda equals 1: the model reduces to pure averaging");
        }
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_len("u", self.u.len(), self.lambda.len())?;
        if let Some(i) = self.lambda.iter().position(|l| !(0.0..=1.0).contains(l)) {
            return Err(invalid(format!("lambda[{i}] = {} is outside [0, 1]", self.lambda[i])));
        }
        if let Some(i) = self.u.iter().position(|&u| !(u >= 0.0 && u.is_finite())) {
            return Err(invalid(format!("u[{i}] = {} must be nonnegative", self.u[i])));
        }
        Ok(())
    }

    pub fn validate_for(&self, net: &Network) -> Result<()> {
        self.validate()?;
        check_len("lambda", self.lambda.len(), net.n())
    }
}

/// Linear model with the same `(u, σ)` parametrization as the nonlinear one:
/// `ẋ_i = Σ_j M_ij (x_j − x_i) + σ_i (u_i − x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFjParams {
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LinearFjParams {
    pub fn new(u: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        check_len("sigma", sigma.len(), u.len())?;
        if let Some(i) = u.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid(format!("u[{i}] = {} must be positive", u[i])));
        }
        if let Some(i) = sigma.iter().position(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(invalid(format!("sigma[{i}] = {} must be finite and nonnegative", sigma[i])));
        }
        Ok(LinearFjParams { u, sigma })
    }
}

/// A time-stamped opinion vector in the positive sector.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    pub x: Vec<f64>,
    pub t: f64,
}

impl OpinionState {
    pub fn new(x: Vec<f64>, t: f64) -> Result<Self> {
        check_positive(&x)?;
        if !(t >= 0.0) {
            return Err(invalid(format!("time {t} must be nonnegative")));
        }
        Ok(OpinionState { x, t })
    }
}

// ---------------------------------------------------------------------------
// payouts

pub fn payout_abelson(net: &Network, x: &[f64], i: usize) -> Result<f64> {
    let a = net.normalized_rows()?;
    Ok(0.5 * a.row(i).iter().map(|&(j, w)| w * (x[i] - x[j]).powi(2)).sum::<f64>())
}

pub fn payout_fj(net: &Network, params: &TaylorParams, x: &[f64], i: usize) -> Result<f64> {
    let lambda = params.lambda[i];
    let coupling = if lambda > 0.0 { payout_abelson(net, x, i)? } else { 0.0 };
    Ok(lambda * coupling + 0.5 * (1.0 - lambda) * (x[i] - params.u[i]).powi(2))
}

/// Payout of agent `i` when it plays `xi` and everyone else plays `x`.
pub fn payout_nfj_at(net: &Network, params: &NfjParams, x: &[f64], i: usize, xi: f64) -> f64 {
    let coupling: f64 = net
        .rows()
        .row(i)
        .iter()
        .filter(|&&(j, _)| j != i)
        .map(|&(j, w)| w * (xi - x[j]).powi(2))
        .sum();
    let p = params.p;
    let s = params.sigma[i];
    0.5 * coupling + s * (xi * xi * pow_p(xi, p) / (p + 2.0) - 0.5 * params.u[i] * xi * xi)
}

pub fn payout_nfj(net: &Network, params: &NfjParams, x: &[f64], i: usize) -> f64 {
    payout_nfj_at(net, params, x, i, x[i])
}

// ---------------------------------------------------------------------------
// vector fields

pub fn vector_field_abelson(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    check_len("x", x.len(), net.n())?;
    let a = net.normalized_rows()?;
    Ok((0..x.len()).map(|i| a.diffusion(i, x)).collect())
}

/// Consensus flow on the raw (symmetric) coupling: `ẋ = −(D_M − M) x`.
pub fn vector_field_laplacian(net: &Network, x: &[f64]) -> Vec<f64> {
    (0..x.len()).map(|i| net.rows().diffusion(i, x)).collect()
}

pub fn vector_field_taylor(net: &Network, params: &TaylorParams, x: &[f64]) -> Result<Vec<f64>> {
    params.validate_for(net)?;
    check_len("x", x.len(), net.n())?;
    let a = net.normalized_rows()?;
    Ok((0..x.len())
        .map(|i| {
            let l = params.lambda[i];
            l * a.diffusion(i, x) + (1.0 - l) * (params.u[i] - x[i])
        })
        .collect())
}

pub fn vector_field_linear_fj(net: &Network, params: &LinearFjParams, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| net.rows().diffusion(i, x) + params.sigma[i] * (params.u[i] - x[i]))
        .collect()
}

pub fn vector_field_nfj(net: &Network, params: &NfjParams, x: &[f64]) -> Result<Vec<f64>> {
    params.validate_for(net)?;
    check_len("x", x.len(), net.n())?;
    check_positive(x)?;
    let mut out = vec![0.0; x.len()];
    nfj_field_into(net.rows(), params, x, &mut out);
    Ok(out)
}

pub(crate) fn nfj_field_into(rows: &SparseRows, params: &NfjParams, x: &[f64], out: &mut [f64]) {
    let p = params.p;
    for i in 0..x.len() {
        out[i] = if params.pinned[i] {
            0.0
        } else {
            rows.diffusion(i, x) + params.sigma[i] * (params.u[i] - pow_p(x[i], p)) * x[i]
        };
    }
}

// ---------------------------------------------------------------------------
// discrete protocols

pub fn discrete_step_degroot(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    check_len("x", x.len(), net.n())?;
    Ok(net.normalized_rows()?.matvec(x))
}

pub fn discrete_step_fj(net: &Network, params: &TaylorParams, x: &[f64]) -> Result<Vec<f64>> {
    params.validate_for(net)?;
    let ax = discrete_step_degroot(net, x)?;
    Ok(ax
        .iter()
        .enumerate()
        .map(|(i, &avg)| params.lambda[i] * avg + (1.0 - params.lambda[i]) * params.u[i])
        .collect())
}

/// True when every row of `M` sums to at most 1, the regime in which the
/// nonlinear discrete protocol is an averaging step.
pub fn is_substochastic(net: &Network) -> bool {
    net.degrees().iter().all(|&d| d <= 1.0 + 1e-12)
}

pub fn discrete_step_nfj(net: &Network, params: &NfjParams, x: &[f64]) -> Result<Vec<f64>> {
    params.validate_for(net)?;
    check_len("x", x.len(), net.n())?;
    check_positive(x)?;
    let mx = net.rows().matvec(x);
    let next: Vec<f64> = (0..x.len())
        .map(|i| {
            if params.pinned[i] {
                params.target(i)
            } else {
                mx[i] + params.sigma[i] * (params.u[i] - pow_p(x[i], params.p)) * x[i]
            }
        })
        .collect();
    check_positive(&next)?;
    Ok(next)
}

/// Rewrites the continuous nonlinear model as a discrete protocol with the
/// same fixed points: `M' = I − τ (D_M − M)` and `σ' = τ σ`, so one step is
/// an explicit Euler step of size `τ`. `M'` stays nonnegative while
/// `τ d_i <= 1`.
pub fn shifted_protocol(net: &Network, params: &NfjParams, tau: f64) -> Result<(Network, NfjParams)> {
    if !(tau > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    let n = net.n();
    let mut m = net.weights() * tau;
    for i in 0..n {
        m[(i, i)] += 1.0 - tau * net.degrees()[i];
        if m[(i, i)] < 0.0 {
            return Err(invalid(format!("tau = {tau} too large: diagonal {i} becomes negative")));
        }
    }
    let shifted = Network::from_matrix(m)?;
    let mut p2 = params.clone();
    p2.sigma.iter_mut().for_each(|s| *s *= tau);
    Ok((shifted, p2))
}

// ---------------------------------------------------------------------------
// Taylor change of variables and energies

/// `y = x / λ` form of the Taylor model: returns `(B, σ)` with
/// `B_ij = λ_j A_ij` and `σ_i = (1 − λ_i) / λ_i`.
pub fn substochastic_transform(net: &Network, params: &TaylorParams) -> Result<(DMatrix<f64>, Vec<f64>)> {
    params.validate_for(net)?;
    if let Some(i) = params.lambda.iter().position(|&l| l == 0.0) {
        return Err(Error::DivisionByZeroLambda(i));
    }
    let n = net.n();
    let mut b = DMatrix::zeros(n, n);
    if n > 1 || net.degrees()[0] > 0.0 {
        let a = net.normalized_rows()?;
        for i in 0..n {
            for &(j, w) in a.row(i) {
                b[(i, j)] = params.lambda[j] * w;
            }
        }
    }
    let sigma = params.lambda.iter().map(|&l| (1.0 - l) / l).collect();
    Ok((b, sigma))
}

/// The Taylor field in `y = x / λ` coordinates:
/// `ẏ_i = Σ_j B_ij y_j − y_i + σ_i u_i`.
pub fn vector_field_taylor_transformed(net: &Network, params: &TaylorParams, y: &[f64]) -> Result<Vec<f64>> {
    let (b, sigma) = substochastic_transform(net, params)?;
    check_len("y", y.len(), net.n())?;
    Ok((0..y.len())
        .map(|i| {
            let by: f64 = (0..y.len()).map(|j| b[(i, j)] * y[j]).sum();
            by - y[i] + sigma[i] * params.u[i]
        })
        .collect())
}

fn coupling_energy(rows: &SparseRows, x: &[f64]) -> f64 {
    0.25 * (0..x.len())
        .map(|i| rows.row(i).iter().map(|&(j, w)| w * (x[i] - x[j]).powi(2)).sum::<f64>())
        .sum::<f64>()
}

/// `Φ(x) = ¼ ΣΣ M_ij (x_i − x_j)² + Σ σ_i x_i^{p+2}/(p+2) − ½ Σ σ_i u_i x_i²`,
/// with pinned agents contributing only through the coupling term.
pub fn energy_nfj(net: &Network, params: &NfjParams, x: &[f64]) -> f64 {
    nfj_energy_rows(net.rows(), params, x)
}

pub(crate) fn nfj_energy_rows(rows: &SparseRows, params: &NfjParams, x: &[f64]) -> f64 {
    let p = params.p;
    let forcing: f64 = (0..x.len())
        .map(|i| {
            let s = params.sigma_eff(i);
            let x2 = x[i] * x[i];
            s * (x2 * pow_p(x[i], p) / (p + 2.0) - 0.5 * params.u[i] * x2)
        })
        .sum();
    coupling_energy(rows, x) + forcing
}

pub fn energy_laplacian(net: &Network, x: &[f64]) -> f64 {
    coupling_energy(net.rows(), x)
}

pub fn energy_linear_fj(net: &Network, params: &LinearFjParams, x: &[f64]) -> f64 {
    let forcing: f64 = (0..x.len()).map(|i| params.sigma[i] * (0.5 * x[i] * x[i] - params.u[i] * x[i])).sum();
    coupling_energy(net.rows(), x) + forcing
}

/// Energy of the Taylor model in `y = x / λ` coordinates:
/// `Φ(y) = ¼ ΣΣ B_ij (y_i − y_j)² + Σ_k (½ (1 − r_k) y_k² − σ_k u_k y_k)`
/// with `r_k = Σ_j B_kj`. Whenever `B` is symmetric, `−∇Φ` is exactly
/// [`vector_field_taylor_transformed`].
pub fn energy_taylor(net: &Network, params: &TaylorParams, y: &[f64]) -> Result<f64> {
    let (b, sigma) = substochastic_transform(net, params)?;
    let n = y.len();
    let mut quad = 0.0;
    let mut linear = 0.0;
    for i in 0..n {
        let mut r = 0.0;
        for j in 0..n {
            quad += b[(i, j)] * (y[i] - y[j]).powi(2);
            r += b[(i, j)];
        }
        linear += 0.5 * (1.0 - r) * y[i] * y[i] - sigma[i] * params.u[i] * y[i];
    }
    Ok(0.25 * quad + linear)
}

// ---------------------------------------------------------------------------
// model selector used by the integrator and the CLI

/// One of the supported opinion dynamics together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Averaging through the normalized adjacency.
    Abelson,
    /// Averaging through the raw symmetric coupling.
    Laplacian,
    Taylor(TaylorParams),
    LinearFj(LinearFjParams),
    Nfj(NfjParams),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Abelson => "abelson",
            Model::Laplacian => "laplacian",
            Model::Taylor(_) => "taylor",
            Model::LinearFj(_) => "linear_fj",
            Model::Nfj(_) => "nfj",
        }
    }

    pub fn validate_for(&self, net: &Network) -> Result<()> {
        match self {
            Model::Abelson => net.normalized_rows().map(|_| ()),
            Model::Laplacian => Ok(()),
            Model::Taylor(p) => {
                p.validate_for(net)?;
                net.normalized_rows().map(|_| ())
            }
            Model::LinearFj(p) => {
                check_len("u", p.u.len(), net.n())?;
                check_len("sigma", p.sigma.len(), net.n())
            }
            Model::Nfj(p) => p.validate_for(net),
        }
    }

    pub fn nfj_params(&self) -> Option<&NfjParams> {
        match self {
            Model::Nfj(p) => Some(p),
            _ => None,
        }
    }
}

/// A model bound to a network with its coupling rows precomputed, for
/// repeated evaluation inside integrators.
#[derive(Debug, Clone)]
pub struct Flow<'a> {
    model: &'a Model,
    rows: SparseRows,
    symmetric: bool,
}

impl<'a> Flow<'a> {
    pub fn new(net: &Network, model: &'a Model) -> Result<Self> {
        model.validate_for(net)?;
        let rows = match model {
            Model::Abelson | Model::Taylor(_) => net.normalized_rows()?,
            _ => net.rows().clone(),
        };
        let symmetric = match model {
            Model::Abelson => {
                let dense = rows.to_dense();
                dense == dense.transpose()
            }
            _ => true,
        };
        Ok(Flow { model, rows, symmetric })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// Whether the coupling matrix driving the flow is symmetric.
    pub fn coupling_is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn n(&self) -> usize {
        self.rows.n()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let rows = &self.rows;
        match self.model {
            Model::Abelson | Model::Laplacian => {
                for i in 0..x.len() {
                    out[i] = rows.diffusion(i, x);
                }
            }
            Model::Taylor(p) => {
                for i in 0..x.len() {
                    let l = p.lambda[i];
                    out[i] = l * rows.diffusion(i, x) + (1.0 - l) * (p.u[i] - x[i]);
                }
            }
            Model::LinearFj(p) => {
                for i in 0..x.len() {
                    out[i] = rows.diffusion(i, x) + p.sigma[i] * (p.u[i] - x[i]);
                }
            }
            Model::Nfj(p) => nfj_field_into(rows, p, x, out),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// Lyapunov energy along the flow, when the flow is a gradient flow in
    /// its own coordinates.
    pub fn energy(&self, x: &[f64]) -> Option<f64> {
        match self.model {
            Model::Abelson if self.symmetric => Some(coupling_energy(&self.rows, x)),
            Model::Abelson => None,
            Model::Laplacian => Some(coupling_energy(&self.rows, x)),
            // Taylor is a gradient flow only after the y = x/λ change of variables.
            Model::Taylor(_) => None,
            Model::LinearFj(p) => Some(
                coupling_energy(&self.rows, x)
                    + (0..x.len()).map(|i| p.sigma[i] * (0.5 * x[i] * x[i] - p.u[i] * x[i])).sum::<f64>(),
            ),
            Model::Nfj(p) => Some(nfj_energy_rows(&self.rows, p, x)),
        }
    }

    /// Upper bound on the largest eigenvalue of `−∂f/∂x` over states with
    /// `x_i^p <= c_plus` (Gershgorin). Used to cap explicit step sizes.
    pub fn stiffness_bound(&self, c_plus: f64) -> f64 {
        let off: Vec<f64> = (0..self.n())
            .map(|i| self.rows.row(i).iter().filter(|&&(j, _)| j != i).map(|&(_, w)| w).sum())
            .collect();
        (0..self.n())
            .map(|i| {
                let lap = 2.0 * off[i];
                match self.model {
                    Model::Abelson | Model::Laplacian => lap,
                    Model::Taylor(p) => p.lambda[i] * lap + (1.0 - p.lambda[i]),
                    Model::LinearFj(p) => lap + p.sigma[i],
                    Model::Nfj(p) => {
                        let s = p.sigma_eff(i);
                        lap + s * ((p.p + 1.0) * c_plus - p.u[i]).max(0.0)
                    }
                }
            })
            .fold(0.0, f64::max)
    }

    /// Nodes whose state never changes (pinned agents).
    pub fn is_frozen(&self, i: usize) -> bool {
        matches!(self.model, Model::Nfj(p) if p.pinned[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::complete_graph;
    use approx::assert_relative_eq;

    fn edge() -> Network {
        Network::from_edges(2, [(0, 1, 1.0)]).unwrap()
    }

    fn isolated() -> Network {
        Network::from_matrix(DMatrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn abelson_payouts() {
        let net = complete_graph(3).unwrap();
        assert_eq!(payout_abelson(&net, &[2.0, 2.0, 2.0], 1).unwrap(), 0.0);
        let e = edge();
        assert_relative_eq!(payout_abelson(&e, &[0.5, 1.5], 0).unwrap(), 0.5);
        assert_relative_eq!(payout_abelson(&e, &[0.5, 1.5], 1).unwrap(), 0.5);
        assert_relative_eq!(payout_abelson(&net, &[1.0, 1.0, 2.0], 0).unwrap(), 0.25);
    }

    #[test]
    fn fj_payouts() {
        let net = complete_graph(3).unwrap();
        let x = [1.0, 2.0, 4.0];
        let ones = TaylorParams::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(payout_fj(&net, &ones, &x, 2).unwrap(), payout_abelson(&net, &x, 2).unwrap());
        let zeros = TaylorParams::new(vec![0.0; 3], x.to_vec()).unwrap();
        assert_eq!(payout_fj(&net, &zeros, &x, 1).unwrap(), 0.0);
        let p = TaylorParams::new(vec![0.5, 0.5], vec![0.0, 2.0]).unwrap();
        assert_relative_eq!(payout_fj(&edge(), &p, &[1.0, 1.0], 0).unwrap(), 0.25);
    }

    #[test]
    fn nfj_payouts() {
        let net = complete_graph(3).unwrap();
        let x = [1.0, 2.0, 3.0];
        let p0 = NfjParams::new(vec![1.0; 3], vec![0.0; 3], 1.0).unwrap();
        let q = 0.5 * ((1.0f64 - 2.0).powi(2) + (1.0f64 - 3.0).powi(2));
        assert_relative_eq!(payout_nfj(&net, &p0, &x, 0), q);

        let iso = isolated();
        let p = NfjParams::new(vec![1.0], vec![1.0], 1.0).unwrap();
        // x³/3 − x²/2: grid search over (0, 3] finds the minimizer at 1.
        let best = (1..=3000)
            .map(|k| k as f64 * 1e-3)
            .min_by(|a, b| payout_nfj(&iso, &p, &[*a], 0).total_cmp(&payout_nfj(&iso, &p, &[*b], 0)))
            .unwrap();
        assert_relative_eq!(best, 1.0, epsilon = 1e-12);
        assert_relative_eq!(payout_nfj(&iso, &p, &[1.0], 0), 1.0 / 3.0 - 0.5);
    }

    #[test]
    fn consensus_at_target_is_stationary_for_each_payout() {
        let net = complete_graph(4).unwrap();
        let params = NfjParams::uniform(4, 9.0, 0.7, 2.0).unwrap();
        let x = vec![3.0; 4];
        let h = 1e-6;
        for i in 0..4 {
            let d = (payout_nfj_at(&net, &params, &x, i, 3.0 + h) - payout_nfj_at(&net, &params, &x, i, 3.0 - h)) / (2.0 * h);
            assert!(d.abs() < 1e-7, "{d}");
        }
    }

    #[test]
    fn abelson_fields() {
        let e = edge();
        assert_eq!(vector_field_abelson(&e, &[0.0, 2.0]).unwrap(), vec![2.0, -2.0]);
        let net = complete_graph(4).unwrap();
        assert!(vector_field_abelson(&net, &[3.0; 4]).unwrap().iter().all(|&v| v == 0.0));
        let f = vector_field_laplacian(&net, &[1.0, 2.0, 5.0, 0.5]);
        assert!(f.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn taylor_fields() {
        let net = complete_graph(3).unwrap();
        let x = [1.0, 2.0, 4.0];
        let ones = TaylorParams::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(vector_field_taylor(&net, &ones, &x).unwrap(), vector_field_abelson(&net, &x).unwrap());
        let zeros = TaylorParams::new(vec![0.0; 3], x.to_vec()).unwrap();
        assert!(vector_field_taylor(&net, &zeros, &x).unwrap().iter().all(|&v| v == 0.0));
        let mut half = TaylorParams::new(vec![0.5, 0.5], vec![1.0, 2.0]).unwrap();
        half.u[0] = 0.0;
        let f = vector_field_taylor(&edge(), &half, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(f[0], -0.5);
        assert_relative_eq!(f[1], 0.5);
    }

    #[test]
    fn nfj_fields() {
        let net = complete_graph(5).unwrap();
        let p = NfjParams::uniform(5, 16.0, 1.3, 2.0).unwrap();
        assert!(vector_field_nfj(&net, &p, &[4.0; 5]).unwrap().iter().all(|v| v.abs() < 1e-12));

        let x = [1.0, 2.0, 0.5, 3.0, 1.5];
        let p0 = NfjParams::uniform(5, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(vector_field_nfj(&net, &p0, &x).unwrap(), vector_field_laplacian(&net, &x));

        let p = NfjParams::new(vec![1.0, 4.0], vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(vector_field_nfj(&edge(), &p, &[1.0, 1.0]).unwrap(), vec![0.0, 3.0]);

        assert!(matches!(
            vector_field_nfj(&edge(), &p, &[1.0, 0.0]),
            Err(Error::NonpositiveState { index: 1, .. })
        ));
    }

    #[test]
    fn pinned_agents_are_frozen() {
        let p = NfjParams::new(vec![1.0, 4.0], vec![1.0, 1.0], 2.0).unwrap().with_pinned(vec![false, true]).unwrap();
        let f = vector_field_nfj(&edge(), &p, &[1.0, 5.0]).unwrap();
        assert_eq!(f[1], 0.0);
        let next = discrete_step_nfj(&edge(), &p, &[1.0, 5.0]).unwrap();
        assert_eq!(next[1], 2.0);
    }

    #[test]
    fn discrete_steps() {
        let p = NfjParams::new(vec![1.0, 4.0], vec![1.0, 1.0], 1.0).unwrap();
        let a = Network::from_matrix(crate::graph::normalized_adjacency(&edge()).unwrap()).unwrap();
        assert_eq!(discrete_step_nfj(&a, &p, &[1.0, 1.0]).unwrap(), vec![1.0, 4.0]);

        let net = complete_graph(4).unwrap();
        let a4 = Network::from_matrix(crate::graph::normalized_adjacency(&net).unwrap()).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let p0 = NfjParams::uniform(4, 1.0, 0.0, 1.0).unwrap();
        let nfj = discrete_step_nfj(&a4, &p0, &x).unwrap();
        let dg = discrete_step_degroot(&net, &x).unwrap();
        for (a, b) in nfj.iter().zip(&dg) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }

        let fj = TaylorParams::new(vec![0.0; 4], vec![5.0; 4]).unwrap();
        assert_eq!(discrete_step_fj(&net, &fj, &x).unwrap(), vec![5.0; 4]);

        let blow = NfjParams::uniform(4, 1.0, 10.0, 1.0).unwrap();
        assert!(matches!(discrete_step_nfj(&a4, &blow, &[5.0; 4]), Err(Error::NonpositiveState { .. })));
    }

    #[test]
    fn transform_cases() {
        let net = complete_graph(3).unwrap();
        let ones = TaylorParams::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
        let (b, s) = substochastic_transform(&net, &ones).unwrap();
        assert_eq!(b, crate::graph::normalized_adjacency(&net).unwrap());
        assert_eq!(s, vec![0.0; 3]);

        let half = TaylorParams::new(vec![0.5; 3], vec![1.0; 3]).unwrap();
        let (b, s) = substochastic_transform(&net, &half).unwrap();
        assert_eq!(b, crate::graph::normalized_adjacency(&net).unwrap() * 0.5);
        assert_eq!(s, vec![1.0; 3]);
        for i in 0..3 {
            assert!(b.row(i).sum() <= 1.0);
        }

        let bad = TaylorParams::new(vec![1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(substochastic_transform(&edge(), &bad), Err(Error::DivisionByZeroLambda(1))));
    }

    #[test]
    fn transformed_field_matches_original_coordinates() {
        let net = crate::graph::erdos_renyi(8, 0.5, 3).unwrap();
        let lambda = vec![0.3, 0.9, 0.5, 1.0, 0.7, 0.2, 0.6, 0.8];
        let params = TaylorParams::new(lambda.clone(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let y = vec![1.5, 0.2, 3.0, 2.0, 0.7, 4.0, 1.1, 2.2];
        let x: Vec<f64> = y.iter().zip(&lambda).map(|(y, l)| y * l).collect();
        let fx = vector_field_taylor(&net, &params, &x).unwrap();
        let fy = vector_field_taylor_transformed(&net, &params, &y).unwrap();
        for i in 0..8 {
            assert_relative_eq!(fy[i], fx[i] / lambda[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn energy_hand_values() {
        let iso = isolated();
        let p = NfjParams::new(vec![1.0], vec![1.0], 1.0).unwrap();
        assert_relative_eq!(energy_nfj(&iso, &p, &[1.0]), -1.0 / 6.0, epsilon = 1e-15);

        let net = complete_graph(3).unwrap();
        let p0 = NfjParams::uniform(3, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(energy_nfj(&net, &p0, &[2.0; 3]), 0.0);
        assert!(energy_nfj(&net, &p0, &[2.0, 1.0, 2.0]) > 0.0);

        // One agent, no edges, λ = 1/2, u = 2, y = 2: σ = 1, r = 0, so
        // Φ = ½ · 4 − 1 · 2 · 2 = −2.
        let tp = TaylorParams::new(vec![0.5], vec![2.0]).unwrap();
        assert_relative_eq!(energy_taylor(&iso, &tp, &[2.0]).unwrap(), -2.0);

        let ones = TaylorParams::new(vec![1.0; 3], vec![1.0; 3]).unwrap();
        let y = [1.0, 2.0, 4.0];
        let a = Network::from_matrix(crate::graph::normalized_adjacency(&net).unwrap()).unwrap();
        assert_relative_eq!(energy_taylor(&net, &ones, &y).unwrap(), energy_laplacian(&a, &y), epsilon = 1e-14);
    }

    #[test]
    fn shifted_protocol_preserves_fixed_points() {
        let net = complete_graph(3).unwrap();
        let p = NfjParams::uniform(3, 4.0, 1.0, 2.0).unwrap();
        let (m, p2) = shifted_protocol(&net, &p, 0.1).unwrap();
        let next = discrete_step_nfj(&m, &p2, &[2.0; 3]).unwrap();
        for v in next {
            assert_relative_eq!(v, 2.0, epsilon = 1e-15);
        }
        assert!(shifted_protocol(&net, &p, 1.0).is_err());
    }

    #[test]
    fn stiffness_bound_is_an_upper_bound() {
        let net = crate::graph::erdos_renyi(12, 0.4, 1).unwrap();
        let u: Vec<f64> = (0..12).map(|i| 1.0 + 7.0 * i as f64).collect();
        let model = Model::Nfj(NfjParams::new(u.clone(), vec![1.5; 12], 2.0).unwrap());
        let flow = Flow::new(&net, &model).unwrap();
        let c_plus = 80.0;
        let bound = flow.stiffness_bound(c_plus);
        let x: Vec<f64> = (0..12).map(|i| (c_plus * (i as f64 + 1.0) / 12.0).sqrt()).collect();
        let jac = crate::equilibrium::jacobian_nfj(&net, model.nfj_params().unwrap(), &x);
        let eig = nalgebra::SymmetricEigen::new(jac);
        assert!(eig.eigenvalues.max() <= bound + 1e-9);
    }
}

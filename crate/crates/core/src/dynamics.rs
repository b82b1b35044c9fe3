//! Trajectory integration for the continuous models, iteration of the
//! discrete protocols, and the runtime checks run on the results.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Network;
use crate::models::{check_positive, is_substochastic, pow_p, Flow, Model, NfjParams};

/// Stability margin for explicit RK4 on real negative eigenvalues
/// (the exact boundary is about 2.785).
const RK4_STABLE_STEP: f64 = 2.0;

/// Accepted steps between attempts to grow a reduced step size.
const GROWTH_DELAY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4Fixed,
    /// RK4 with the base step capped by a stiffness estimate, halved whenever
    /// a step would leave the invariant box, leave the positive sector, or
    /// raise the energy.
    Rk4Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
    /// Stop once `‖field‖∞` drops below this.
    pub stop_tol: f64,
    pub record_stride: usize,
    /// Allowed overshoot of the invariant box before a step is rejected.
    pub box_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 0.01,
            t_end: 100.0,
            method: Method::Rk4Fixed,
            stop_tol: 1e-10,
            record_stride: 10,
            box_tol: 1e-9,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end > self.dt) {
            return Err(invalid(format!("t_end = {} must exceed dt = {}", self.t_end, self.dt)));
        }
        if !(self.stop_tol > 0.0) {
            return Err(invalid("stop_tol must be positive"));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride must be at least 1"));
        }
        if !(self.box_tol >= 0.0) {
            return Err(invalid("box_tol must be nonnegative"));
        }
        Ok(())
    }
}

/// Recorded samples of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per sample.
    pub states: Vec<Vec<f64>>,
    /// Energy at each sample, for models that have one.
    pub energy: Option<Vec<f64>>,
    /// `max_i x_i − min_i x_i` at each sample.
    pub spread: Vec<f64>,
    pub converged: bool,
    /// `‖field‖∞` at the last state (0 for discrete runs).
    pub final_field_norm: f64,
    pub steps: usize,
    pub rejected_steps: usize,
}

pub fn spread(x: &[f64]) -> f64 {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl Trajectory {
    fn new(with_energy: bool) -> Self {
        Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            energy: with_energy.then(Vec::new),
            spread: Vec::new(),
            converged: false,
            final_field_norm: f64::NAN,
            steps: 0,
            rejected_steps: 0,
        }
    }

    fn push(&mut self, t: f64, x: &[f64], energy: Option<f64>) {
        self.times.push(t);
        self.spread.push(spread(x));
        if let (Some(es), Some(e)) = (self.energy.as_mut(), energy) {
            es.push(e);
        }
        self.states.push(x.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn means(&self) -> Vec<f64> {
        self.states.iter().map(|x| mean(x)).collect()
    }

    /// Long-format CSV with header `t,node,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "node", "value"])?;
        for (t, x) in self.times.iter().zip(&self.states) {
            for (i, v) in x.iter().enumerate() {
                w.write_record([t.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Summary CSV with header `t,energy,spread,mean`; energy is left blank
    /// when the model has none.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "energy", "spread", "mean"])?;
        for k in 0..self.len() {
            let e = self.energy.as_ref().map(|e| e[k].to_string()).unwrap_or_default();
            w.write_record([self.times[k].to_string(), e, self.spread[k].to_string(), mean(&self.states[k]).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Box `[lo, hi]` that `x_i^power` stays inside along the flow.
#[derive(Debug, Clone, Copy)]
struct InvariantBox {
    lo: f64,
    hi: f64,
    power: f64,
}

impl InvariantBox {
    fn for_model(model: &Model, x0: &[f64]) -> Self {
        let x_lo = x0.iter().copied().fold(f64::INFINITY, f64::min);
        let x_hi = x0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let with_u = |u: &[f64], power: f64| {
            let (lo, hi) = u.iter().fold((pow_p(x_lo, power), pow_p(x_hi, power)), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            InvariantBox { lo, hi, power }
        };
        match model {
            Model::Abelson | Model::Laplacian => InvariantBox { lo: x_lo, hi: x_hi, power: 1.0 },
            Model::Taylor(p) => with_u(&p.u, 1.0),
            Model::LinearFj(p) => with_u(&p.u, 1.0),
            Model::Nfj(p) => {
                let (lo, hi) = nfj_bounds(p, x0);
                InvariantBox { lo, hi, power: p.p }
            }
        }
    }

    fn transgression(&self, x: &[f64]) -> f64 {
        x.iter().fold(0.0, |m: f64, &v| {
            let q = pow_p(v, self.power);
            m.max(self.lo - q).max(q - self.hi)
        })
    }
}

/// `(c_−, c_+)`: the extremes of `x_i(0)^p` and `u_i` over all agents.
pub fn nfj_bounds(params: &NfjParams, x0: &[f64]) -> (f64, f64) {
    (0..x0.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
        let xp = pow_p(x0[i], params.p);
        (lo.min(xp.min(params.u[i])), hi.max(xp.max(params.u[i])))
    })
}

struct Rk4Workspace {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Rk4Workspace { k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    /// One classical RK4 step from `x` (with `k1 = f(x)` supplied) into `out`.
    fn step(&mut self, flow: &Flow, x: &[f64], k1: &[f64], h: f64, out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        flow.eval_into(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        flow.eval_into(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        flow.eval_into(&self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates a continuous model from `x0` with classical RK4.
///
/// The run ends at `t_end` or as soon as `‖field‖∞ < stop_tol`, in which case
/// `converged` is set. Pinned agents of the nonlinear model are placed at
/// their fixed value before the first step.
pub fn integrate(net: &Network, model: &Model, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let flow = Flow::new(net, model)?;
    if x0.len() != net.n() {
        return Err(Error::DimensionMismatch { expected: net.n(), got: x0.len() });
    }
    check_positive(x0)?;
    let mut x = x0.to_vec();
    if let Model::Nfj(p) = model {
        p.project_pinned(&mut x);
    }
    let n = x.len();
    let adaptive = cfg.method == Method::Rk4Adaptive;
    let bx = InvariantBox::for_model(model, &x);

    let base_dt = if adaptive {
        let stiff = flow.stiffness_bound(bx.hi.max(bx.lo));
        if stiff > 0.0 {
            cfg.dt.min(RK4_STABLE_STEP / stiff)
        } else {
            cfg.dt
        }
    } else {
        cfg.dt
    };
    let min_dt = 1e-12 * base_dt;

    let mut traj = Trajectory::new(flow.energy(&x).is_some());
    let mut k1 = flow.eval(&x);
    let mut energy = flow.energy(&x);
    traj.push(0.0, &x, energy);

    let mut ws = Rk4Workspace::new(n);
    let mut trial = vec![0.0; n];
    let mut t = 0.0;
    let mut h_cur = base_dt;
    let mut accepted_since_cut = 0usize;
    let mut field_norm = sup_norm(&k1);

    if field_norm < cfg.stop_tol {
        traj.converged = true;
        traj.final_field_norm = field_norm;
        return Ok(traj);
    }

    while cfg.t_end - t > 1e-9 * base_dt {
        let mut h = h_cur.min(cfg.t_end - t);
        let trial_energy = loop {
            ws.step(&flow, &x, &k1, h, &mut trial);
            let positive = trial.iter().all(|&v| v > 0.0 && v.is_finite());
            if !adaptive {
                if let Some(index) = trial.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::NonpositiveState { index, step: Some(traj.steps + 1) });
                }
                break flow.energy(&trial);
            }
            let e_new = if positive { flow.energy(&trial) } else { None };
            let in_box = positive && bx.transgression(&trial) <= cfg.box_tol;
            let descends = match (energy, e_new) {
                (Some(e0), Some(e1)) => e1 <= e0 + 1e-10 * (1.0 + e0.abs()),
                _ => true,
            };
            if in_box && descends {
                break e_new;
            }
            traj.rejected_steps += 1;
            h *= 0.5;
            h_cur = h;
            accepted_since_cut = 0;
            if h < min_dt {
                return Err(Error::StepSizeUnderflow { t });
            }
        };

        std::mem::swap(&mut x, &mut trial);
        t += h;
        traj.steps += 1;
        energy = trial_energy;
        flow.eval_into(&x, &mut k1);
        field_norm = sup_norm(&k1);

        if adaptive && h_cur < base_dt {
            accepted_since_cut += 1;
            if accepted_since_cut >= GROWTH_DELAY {
                h_cur = (2.0 * h_cur).min(base_dt);
                accepted_since_cut = 0;
            }
        }

        let done = field_norm < cfg.stop_tol || cfg.t_end - t <= 1e-9 * base_dt;
        if done || traj.steps % cfg.record_stride == 0 {
            traj.push(t, &x, energy);
        }
        if field_norm < cfg.stop_tol {
            traj.converged = true;
            break;
        }
    }
    traj.final_field_norm = field_norm;
    Ok(traj)
}

/// Applies the model's discrete protocol `steps` times, recording every
/// iterate at integer times.
///
/// DeGroot for `Abelson`, Friedkin-Johnsen for `Taylor`, the nonlinear
/// protocol (with `M` used as given) for `Nfj`.
pub fn iterate_discrete(net: &Network, model: &Model, x0: &[f64], steps: usize) -> Result<Trajectory> {
    let flow = Flow::new(net, model)?;
    if x0.len() != net.n() {
        return Err(Error::DimensionMismatch { expected: net.n(), got: x0.len() });
    }
    check_positive(x0)?;
    if let Model::Nfj(_) = model {
        if !is_substochastic(net) {
            log::warn!("nonlinear protocol applied with a coupling matrix that is not row-substochastic");
        }
    }
    let rows = match model {
        Model::Abelson | Model::Taylor(_) => net.normalized_rows()?,
        Model::Nfj(_) => net.rows().clone(),
        Model::Laplacian | Model::LinearFj(_) => {
            return Err(invalid(format!("model {} has no discrete protocol", model.name())));
        }
    };
    let mut x = x0.to_vec();
    if let Model::Nfj(p) = model {
        p.project_pinned(&mut x);
    }
    let mut traj = Trajectory::new(flow.energy(&x).is_some());
    traj.push(0.0, &x, flow.energy(&x));
    for k in 1..=steps {
        let mx = rows.matvec(&x);
        let next: Vec<f64> = match model {
            Model::Abelson => mx,
            Model::Taylor(p) => (0..x.len()).map(|i| p.lambda[i] * mx[i] + (1.0 - p.lambda[i]) * p.u[i]).collect(),
            Model::Nfj(p) => (0..x.len())
                .map(|i| {
                    if p.pinned[i] {
                        p.target(i)
                    } else {
                        mx[i] + p.sigma[i] * (p.u[i] - pow_p(x[i], p.p)) * x[i]
                    }
                })
                .collect(),
            _ => unreachable!(),
        };
        if let Some(index) = next.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NonpositiveState { index, step: Some(k) });
        }
        x = next;
        traj.steps = k;
        traj.push(k as f64, &x, flow.energy(&x));
    }
    traj.final_field_norm = 0.0;
    Ok(traj)
}

/// Worst excursion of `x_i^p(t)` outside `[c_−, c_+]` over a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub c_minus: f64,
    pub c_plus: f64,
    /// `max_t max_i (c_− − x_i^p(t))`, clamped at 0.
    pub lower_transgression: f64,
    /// `max_t max_i (x_i^p(t) − c_+)`, clamped at 0.
    pub upper_transgression: f64,
}

impl BoundsReport {
    pub fn worst(&self) -> f64 {
        self.lower_transgression.max(self.upper_transgression)
    }
}

pub fn monitor_bounds(traj: &Trajectory, params: &NfjParams, x0: &[f64]) -> BoundsReport {
    let (c_minus, c_plus) = nfj_bounds(params, x0);
    let mut lower: f64 = 0.0;
    let mut upper: f64 = 0.0;
    for x in &traj.states {
        for &v in x {
            let q = pow_p(v, params.p);
            lower = lower.max(c_minus - q);
            upper = upper.max(q - c_plus);
        }
    }
    BoundsReport { c_minus, c_plus, lower_transgression: lower, upper_transgression: upper }
}

/// Least-squares exponential decay rate of the spread, fitted where the
/// spread lies between `1e-10` and `1e-2` of its initial value.
pub fn spread_decay_rate(traj: &Trajectory) -> Result<f64> {
    let s0 = *traj.spread.first().ok_or(Error::InsufficientDecay)?;
    if !(s0 > 0.0) {
        return Err(Error::InsufficientDecay);
    }
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.spread)
        .filter(|&(_, &s)| s >= 1e-10 * s0 && s <= 1e-2 * s0)
        .map(|(&t, &s)| (t, s.ln()))
        .collect();
    log_linear_rate(&pts).ok_or(Error::InsufficientDecay)
}

/// Negated least-squares slope of `(t, ln y)` points; `None` if fewer than
/// three points or the fit does not decay.
pub(crate) fn log_linear_rate(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let rate = -sxy / sxx;
    (rate > 0.0).then_some(rate)
}

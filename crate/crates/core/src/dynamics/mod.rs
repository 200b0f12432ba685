//! Closed-loop swing dynamics `θ̇ = ω`, `Mω̇ = −Dω + P* − ∇U(θ) + u` with a
//! secondary controller, and a fixed-step RK4 integrator.
//!
//! Buses with `M_i = 0` are algebraic: `D_i ω_i = P*_i − (∇U)_i + u_i` is solved
//! for `ω_i` at every evaluation. With [`LoadModel::QuasiStatic`] their angles
//! are solved as well, which removes the stiffness of small load damping.

mod noise;
mod trajectory;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::controllers::Controller;
use crate::error::{check_len, invalid, GridError, Result};
use crate::network::{project_com, NetworkModel};

pub use noise::{NoiseDistribution, NoiseProcess, NoiseSpec};
pub use trajectory::{Sample, Trajectory};

/// Per-bus inertia, damping and net injection.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineParams {
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    pub injection: Vec<f64>,
}

impl MachineParams {
    pub fn new(inertia: Vec<f64>, damping: Vec<f64>, injection: Vec<f64>) -> Result<Self> {
        let n = inertia.len();
        check_len("damping", n, damping.len())?;
        check_len("injection", n, injection.len())?;
        for i in 0..n {
            if !(inertia[i].is_finite() && inertia[i] >= 0.0) {
                return Err(invalid(format!("inertia at bus {i} must be ≥ 0")));
            }
            if !(damping[i].is_finite() && damping[i] > 0.0) {
                return Err(invalid(format!("damping at bus {i} must be > 0")));
            }
            if !injection[i].is_finite() {
                return Err(invalid(format!("injection at bus {i} is not finite")));
            }
        }
        Ok(Self {
            inertia,
            damping,
            injection,
        })
    }

    pub fn homogeneous(n: usize, m: f64, d: f64, injection: Vec<f64>) -> Result<Self> {
        Self::new(vec![m; n], vec![d; n], injection)
    }

    pub fn n_buses(&self) -> usize {
        self.inertia.len()
    }

    pub fn total_damping(&self) -> f64 {
        self.damping.iter().sum()
    }

    pub fn total_injection(&self) -> f64 {
        self.injection.iter().sum()
    }

    pub fn is_load(&self, bus: usize) -> bool {
        self.inertia[bus] == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Absolute,
    CenterOfInertia,
}

/// `(θ or δ, ω, p)` at a time instant. Controller state is indexed by
/// controlled-bus position.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub angles: Vec<f64>,
    pub freqs: Vec<f64>,
    pub ctrl_state: Vec<f64>,
    pub frame: Frame,
    pub time: f64,
}

impl ClosedLoopState {
    pub fn flat(n: usize, n_ctrl: usize, frame: Frame) -> Self {
        Self {
            angles: vec![0.0; n],
            freqs: vec![0.0; n],
            ctrl_state: vec![0.0; n_ctrl],
            frame,
            time: 0.0,
        }
    }

    /// Re-expresses the state in another frame; only angles change.
    pub fn to_frame(&self, frame: Frame) -> Self {
        let mut out = self.clone();
        if frame == Frame::CenterOfInertia {
            project_com(&mut out.angles);
        }
        out.frame = frame;
        out
    }
}

/// One step change `ΔP*` at `bus` taking effect at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub time: f64,
    pub bus: usize,
    pub delta_p: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSchedule {
    events: Vec<StepEvent>,
}

impl EventSchedule {
    pub fn new(events: Vec<StepEvent>) -> Result<Self> {
        if events.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(invalid("event times must be non-decreasing"));
        }
        if events.iter().any(|e| !(e.time.is_finite() && e.time >= 0.0 && e.delta_p.is_finite())) {
            return Err(invalid("event time must be ≥ 0 and sizes finite"));
        }
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[StepEvent] {
        &self.events
    }

    pub fn total_delta(&self) -> f64 {
        self.events.iter().map(|e| e.delta_p).sum()
    }

    /// Injection vector after every event has fired.
    pub fn final_injection(&self, base: &[f64]) -> Vec<f64> {
        let mut p = base.to_vec();
        for e in &self.events {
            p[e.bus] += e.delta_p;
        }
        p
    }

    pub fn first_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.time)
    }
}

/// Time derivative of a [`ClosedLoopState`]. Algebraic buses have no frequency
/// state; their `freqs` entry is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate {
    pub angles: Vec<f64>,
    pub freqs: Vec<f64>,
    pub ctrl_state: Vec<f64>,
}

impl StateRate {
    pub fn max_abs(&self) -> f64 {
        self.angles
            .iter()
            .chain(&self.freqs)
            .chain(&self.ctrl_state)
            .fold(0.0, |a, x| a.max(x.abs()))
    }
}

/// Treatment of the angles of zero-inertia buses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadModel {
    /// `θ̇_i = ω_i` is integrated like every other angle.
    #[default]
    Dynamic,
    /// Angles satisfy `(∇U)_i = P*_i + u_i − D_i ω_i` at every evaluation, with
    /// `ω_L = −H_LL⁻¹ H_LG ω_G` from differentiating that constraint. This is the
    /// singular-perturbation limit of small `D_i`; absolute frame only.
    QuasiStatic,
}

/// Closed loop assembled from network, machines and one controller.
#[derive(Debug)]
pub struct ClosedLoop<'a> {
    net: &'a NetworkModel,
    params: &'a MachineParams,
    controller: &'a dyn Controller,
    frame: Frame,
    dynamic: Vec<usize>,
    algebraic: Vec<usize>,
    local: Vec<Option<usize>>,
    feedthrough: Vec<f64>,
    load_model: LoadModel,
    /// Position of each bus within `algebraic`.
    load_local: Vec<Option<usize>>,
}

struct Workspace {
    theta: Vec<f64>,
    grad: Vec<f64>,
    load_lu: Option<LU<f64, Dyn, Dyn>>,
    load_omega: DVector<f64>,
    load_step: DVector<f64>,
    load_res: DVector<f64>,
    omega: Vec<f64>,
    u: Vec<f64>,
    measured: Vec<f64>,
    u_ctrl: Vec<f64>,
    dp: Vec<f64>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        net: &'a NetworkModel,
        params: &'a MachineParams,
        controller: &'a dyn Controller,
        frame: Frame,
    ) -> Result<Self> {
        let n = net.n_buses();
        check_len("machine parameters", n, params.n_buses())?;
        let mut local = vec![None; n];
        for (k, &b) in controller.buses().iter().enumerate() {
            if b >= n {
                return Err(invalid(format!("controller bus {b} outside network")));
            }
            local[b] = Some(k);
        }
        let feedthrough = controller.feedthrough();
        check_len("controller feedthrough", controller.buses().len(), feedthrough.len())?;
        let (mut dynamic, mut algebraic) = (Vec::new(), Vec::new());
        for i in 0..n {
            if params.is_load(i) {
                let f = local[i].map_or(0.0, |k| feedthrough[k]);
                if params.damping[i] - f <= 0.0 {
                    return Err(invalid(format!("zero effective damping at zero-inertia bus {i}")));
                }
                algebraic.push(i);
            } else {
                dynamic.push(i);
            }
        }
        let mut load_local = vec![None; n];
        for (l, &i) in algebraic.iter().enumerate() {
            load_local[i] = Some(l);
        }
        Ok(Self {
            net,
            params,
            controller,
            frame,
            dynamic,
            algebraic,
            local,
            feedthrough,
            load_model: LoadModel::Dynamic,
            load_local,
        })
    }

    pub fn with_load_model(mut self, model: LoadModel) -> Result<Self> {
        if model == LoadModel::QuasiStatic {
            if self.frame != Frame::Absolute {
                return Err(invalid("quasi-static loads require absolute angles"));
            }
            if self.dynamic.is_empty() && !self.algebraic.is_empty() {
                return Err(invalid("quasi-static loads need at least one bus with inertia"));
            }
        }
        self.load_model = model;
        Ok(self)
    }

    pub fn load_model(&self) -> LoadModel {
        self.load_model
    }

    pub fn n_buses(&self) -> usize {
        self.net.n_buses()
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn controller(&self) -> &dyn Controller {
        self.controller
    }

    pub fn network(&self) -> &NetworkModel {
        self.net
    }

    pub fn params(&self) -> &MachineParams {
        self.params
    }

    fn n_ctrl(&self) -> usize {
        self.controller.state_dim()
    }

    fn packed_len(&self) -> usize {
        self.n_buses() + self.dynamic.len() + self.n_ctrl()
    }

    fn workspace(&self) -> Workspace {
        let n = self.n_buses();
        let nc = self.controller.buses().len();
        let nl = self.algebraic.len();
        Workspace {
            theta: vec![0.0; n],
            grad: vec![0.0; n],
            load_lu: None,
            load_omega: DVector::zeros(nl),
            load_step: DVector::zeros(nl),
            load_res: DVector::zeros(nl),
            omega: vec![0.0; n],
            u: vec![0.0; n],
            measured: vec![0.0; nc],
            u_ctrl: vec![0.0; nc],
            dp: vec![0.0; self.n_ctrl()],
        }
    }

    fn check_state(&self, state: &ClosedLoopState) -> Result<()> {
        check_len("state angles", self.n_buses(), state.angles.len())?;
        check_len("state frequencies", self.n_buses(), state.freqs.len())?;
        check_len("controller state", self.n_ctrl(), state.ctrl_state.len())?;
        if state.frame != self.frame {
            return Err(invalid("state frame differs from closed-loop frame"));
        }
        Ok(())
    }

    fn pack(&self, state: &ClosedLoopState) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.packed_len());
        y.extend_from_slice(&state.angles);
        y.extend(self.dynamic.iter().map(|&i| state.freqs[i]));
        y.extend_from_slice(&state.ctrl_state);
        y
    }

    fn unpack(&self, y: &[f64], ws: &Workspace, time: f64) -> ClosedLoopState {
        let n = self.n_buses();
        ClosedLoopState {
            angles: ws.theta[..n].to_vec(),
            freqs: ws.omega.clone(),
            ctrl_state: y[n + self.dynamic.len()..].to_vec(),
            frame: self.frame,
            time,
        }
    }

    /// Evaluates frequencies, injections and (optionally) the packed derivative.
    fn eval(&self, y: &[f64], pstar: &[f64], eta: &[f64], ws: &mut Workspace, dy: Option<&mut [f64]>) -> Result<()> {
        let n = self.n_buses();
        let nd = self.dynamic.len();
        let p = &y[n + nd..];
        ws.theta.copy_from_slice(&y[..n]);
        for (k, &i) in self.dynamic.iter().enumerate() {
            ws.omega[i] = y[n + k];
        }
        for &i in &self.algebraic {
            ws.omega[i] = 0.0;
        }
        for (k, &b) in self.controller.buses().iter().enumerate() {
            ws.measured[k] = ws.omega[b] + eta[b];
        }
        self.controller.control_output(p, &ws.measured, &mut ws.u_ctrl)?;
        ws.u.iter_mut().for_each(|u| *u = 0.0);
        for (k, &b) in self.controller.buses().iter().enumerate() {
            ws.u[b] = ws.u_ctrl[k];
        }
        match self.load_model {
            LoadModel::Dynamic => self.net.gradient_into(&ws.theta, &mut ws.grad),
            LoadModel::QuasiStatic => self.solve_loads(pstar, ws)?,
        }
        // Algebraic buses: u_i still lacks its feedthrough share f_i ω_i.
        for &i in &self.algebraic {
            let f = self.local[i].map_or(0.0, |k| self.feedthrough[k]);
            let w = match self.load_model {
                LoadModel::Dynamic => (pstar[i] - ws.grad[i] + ws.u[i]) / (self.params.damping[i] - f),
                LoadModel::QuasiStatic => ws.omega[i],
            };
            ws.omega[i] = w;
            ws.u[i] += f * w;
            if let Some(k) = self.local[i] {
                ws.measured[k] += w;
            }
        }
        let Some(dy) = dy else {
            return Ok(());
        };
        dy[..n].copy_from_slice(&ws.omega);
        if self.frame == Frame::CenterOfInertia {
            project_com(&mut dy[..n]);
        }
        for (k, &i) in self.dynamic.iter().enumerate() {
            dy[n + k] = (-self.params.damping[i] * ws.omega[i] + pstar[i] - ws.grad[i] + ws.u[i])
                / self.params.inertia[i];
        }
        self.controller.state_derivative(p, &ws.measured, &mut ws.dp)?;
        dy[n + nd..].copy_from_slice(&ws.dp);
        Ok(())
    }

    /// `H_LL` at `theta`: the Hessian of `U` restricted to zero-inertia buses.
    fn load_hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let nl = self.algebraic.len();
        let mut h = DMatrix::zeros(nl, nl);
        for (&(i, j), w) in self.net.edges().iter().zip(self.net.edge_weights()) {
            let c = w * (theta[i] - theta[j]).cos();
            if let Some(a) = self.load_local[i] {
                h[(a, a)] += c;
            }
            if let Some(b) = self.load_local[j] {
                h[(b, b)] += c;
            }
            if let (Some(a), Some(b)) = (self.load_local[i], self.load_local[j]) {
                h[(a, b)] -= c;
                h[(b, a)] -= c;
            }
        }
        h
    }

    /// Solves the load-bus angles by a chord iteration on a cached `H_LL`
    /// factorization, refreshed when convergence slows. Leaves `∇U` in
    /// `ws.grad`, `ω_L` in `ws.omega` and the angles in `ws.theta`.
    fn solve_loads(&self, pstar: &[f64], ws: &mut Workspace) -> Result<()> {
        const TOL: f64 = 1e-11;
        const MAX_ITER: usize = 40;
        let mut since_refresh = 0usize;
        let mut prev = f64::INFINITY;
        for _ in 0..MAX_ITER {
            self.net.gradient_into(&ws.theta, &mut ws.grad);
            if self.algebraic.is_empty() {
                return Ok(());
            }
            if ws.load_lu.is_none() {
                ws.load_lu = Some(self.load_hessian(&ws.theta).lu());
                since_refresh = 0;
            }
            // ω_L solves H_LL ω_L = Σ c ω_gen; chord step from the previous value.
            ws.load_res.fill(0.0);
            for (&(i, j), w) in self.net.edges().iter().zip(self.net.edge_weights()) {
                let c = w * (ws.theta[i] - ws.theta[j]).cos();
                match (self.load_local[i], self.load_local[j]) {
                    (Some(a), None) => ws.load_res[a] += c * (ws.omega[j] - ws.load_omega[a]),
                    (None, Some(b)) => ws.load_res[b] += c * (ws.omega[i] - ws.load_omega[b]),
                    (Some(a), Some(b)) => {
                        let d = c * (ws.load_omega[a] - ws.load_omega[b]);
                        ws.load_res[a] -= d;
                        ws.load_res[b] += d;
                    }
                    (None, None) => {}
                }
            }
            let omega_res = ws.load_res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            let lu = ws.load_lu.as_ref().unwrap();
            if !lu.solve_mut(&mut ws.load_res) {
                return Err(GridError::Numerical("singular load-bus Hessian".into()));
            }
            ws.load_omega += &ws.load_res;
            let mut worst = omega_res;
            for (l, &i) in self.algebraic.iter().enumerate() {
                let f = self.local[i].map_or(0.0, |k| self.feedthrough[k]);
                let w = ws.load_omega[l];
                ws.omega[i] = w;
                let r = ws.grad[i] - (pstar[i] + ws.u[i] - (self.params.damping[i] - f) * w);
                ws.load_step[l] = r;
                worst = worst.max(r.abs());
            }
            if worst <= TOL {
                return Ok(());
            }
            if !worst.is_finite() {
                return Err(GridError::Numerical("load-bus angles diverged".into()));
            }
            if since_refresh > 0 && worst > 0.25 * prev {
                ws.load_lu = None;
                prev = worst;
                continue;
            }
            prev = worst;
            since_refresh += 1;
            if !lu.solve_mut(&mut ws.load_step) {
                return Err(GridError::Numerical("singular load-bus Hessian".into()));
            }
            for (l, &i) in self.algebraic.iter().enumerate() {
                ws.theta[i] -= ws.load_step[l];
            }
        }
        Err(GridError::NoConvergence {
            iterations: MAX_ITER,
            residual: prev,
        })
    }

    /// Vector field at `state` for injection `pstar` and measurement noise `eta`.
    pub fn rhs(&self, state: &ClosedLoopState, pstar: &[f64], eta: &[f64]) -> Result<StateRate> {
        self.check_state(state)?;
        check_len("injection", self.n_buses(), pstar.len())?;
        check_len("noise", self.n_buses(), eta.len())?;
        let y = self.pack(state);
        let mut dy = vec![0.0; y.len()];
        let mut ws = self.workspace();
        self.eval(&y, pstar, eta, &mut ws, Some(&mut dy))?;
        let n = self.n_buses();
        let mut freqs = vec![0.0; n];
        for (k, &i) in self.dynamic.iter().enumerate() {
            freqs[i] = dy[n + k];
        }
        Ok(StateRate {
            angles: dy[..n].to_vec(),
            freqs,
            ctrl_state: dy[n + self.dynamic.len()..].to_vec(),
        })
    }

    /// Frequencies (algebraic buses resolved) and bus injections `u` at `state`.
    pub fn outputs(&self, state: &ClosedLoopState, pstar: &[f64], eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(state)?;
        check_len("injection", self.n_buses(), pstar.len())?;
        check_len("noise", self.n_buses(), eta.len())?;
        let y = self.pack(state);
        let mut ws = self.workspace();
        self.eval(&y, pstar, eta, &mut ws, None)?;
        Ok((ws.omega, ws.u))
    }

    /// Controller state at bus level: `p_i` at controlled buses, zero elsewhere.
    pub fn bus_ctrl_state(&self, ctrl_state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_buses()];
        if ctrl_state.len() == self.controller.buses().len() {
            for (k, &b) in self.controller.buses().iter().enumerate() {
                out[b] = ctrl_state[k];
            }
        }
        out
    }
}

/// Horizon, step and recording cadence of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub t_end: f64,
    pub dt: f64,
    pub record_interval: f64,
}

impl SimulationConfig {
    pub fn new(t_end: f64, dt: f64, record_interval: f64) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(invalid("t_end must be > 0"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt must be > 0"));
        }
        if !(record_interval.is_finite() && record_interval > 0.0) {
            return Err(invalid("record interval must be > 0"));
        }
        Ok(Self {
            t_end,
            dt,
            record_interval,
        })
    }
}

const TIME_EPS: f64 = 1e-9;

fn next_multiple(t: f64, step: f64) -> f64 {
    let k = ((t + TIME_EPS) / step).floor() + 1.0;
    k * step
}

/// Fixed-step RK4 from `x0` to `cfg.t_end`.
///
/// Steps are split at event times, noise resampling instants and recording
/// instants so that each lands exactly on a step boundary. Events at time `t`
/// apply before integrating forward from `t`.
pub fn integrate(
    system: &ClosedLoop,
    noise: &NoiseSpec,
    events: &EventSchedule,
    x0: &ClosedLoopState,
    cfg: &SimulationConfig,
) -> Result<Trajectory> {
    let mut samples = Vec::new();
    integrate_with(system, noise, events, x0, cfg, |s| samples.push(s))?;
    Ok(Trajectory::new(samples, system.controller.buses().to_vec()))
}

/// Same as [`integrate`] but hands each recorded sample to `sink` instead of
/// storing the trajectory.
pub fn integrate_with<F: FnMut(Sample)>(
    system: &ClosedLoop,
    noise: &NoiseSpec,
    events: &EventSchedule,
    x0: &ClosedLoopState,
    cfg: &SimulationConfig,
    mut sink: F,
) -> Result<()> {
    system.check_state(x0)?;
    let n = system.n_buses();
    noise.validate(n)?;
    if events.events().iter().any(|e| e.bus >= n) {
        return Err(invalid("event references bus outside network"));
    }
    let mut pstar = system.params.injection.clone();
    let mut process = NoiseProcess::new(noise);
    let mut ws = system.workspace();
    let len = system.packed_len();
    let mut y = system.pack(x0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);

    let mut t = x0.time;
    let mut next_event = 0usize;
    let mut next_noise = t;
    let mut next_record = t;

    loop {
        while next_event < events.events().len() && events.events()[next_event].time <= t + TIME_EPS {
            let e = events.events()[next_event];
            pstar[e.bus] += e.delta_p;
            next_event += 1;
        }
        if next_noise <= t + TIME_EPS {
            process.resample();
            next_noise = next_multiple(t, noise.interval);
        }
        if next_record <= t + TIME_EPS {
            system.eval(&y, &pstar, process.current(), &mut ws, None)?;
            let state = system.unpack(&y, &ws, t);
            sink(Sample {
                u: ws.u.clone(),
                injection_total: pstar.iter().sum(),
                state,
            });
            next_record = next_multiple(t, cfg.record_interval);
        }
        if t >= cfg.t_end - TIME_EPS {
            break;
        }
        let mut stop = cfg.t_end.min(next_noise).min(next_record);
        if let Some(e) = events.events().get(next_event) {
            stop = stop.min(e.time);
        }
        let steps = (((stop - t) / cfg.dt) - TIME_EPS).ceil().max(1.0) as usize;
        let h = (stop - t) / steps as f64;
        let eta = process.current().to_vec();
        for s in 0..steps {
            system.eval(&y, &pstar, &eta, &mut ws, Some(&mut k1))?;
            for i in 0..len {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            system.eval(&tmp, &pstar, &eta, &mut ws, Some(&mut k2))?;
            for i in 0..len {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            system.eval(&tmp, &pstar, &eta, &mut ws, Some(&mut k3))?;
            for i in 0..len {
                tmp[i] = y[i] + h * k3[i];
            }
            system.eval(&tmp, &pstar, &eta, &mut ws, Some(&mut k4))?;
            let mut finite = true;
            for i in 0..len {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                finite &= y[i].is_finite() && y[i].abs() < 1e12;
            }
            if !finite {
                return Err(GridError::Diverged {
                    time: t + (s + 1) as f64 * h,
                });
            }
        }
        t = stop;
    }
    Ok(())
}

/// Conserved-energy function of the pure-integral loop:
/// `½ωᵀMω + U(θ) − θᵀP* + ½(θ−θ0')ᵀT⁻¹(θ−θ0')`.
///
/// `t_inv` is per bus (zero at uncontrolled buses) and `angles` must be absolute.
pub fn lasalle_value(
    net: &NetworkModel,
    params: &MachineParams,
    t_inv: &[f64],
    angles: &[f64],
    freqs: &[f64],
    theta0: &[f64],
    pstar: &[f64],
) -> Result<f64> {
    let n = net.n_buses();
    for (name, len) in [
        ("T inverse", t_inv.len()),
        ("frequencies", freqs.len()),
        ("anchor angles", theta0.len()),
        ("injection", pstar.len()),
        ("machine parameters", params.n_buses()),
    ] {
        check_len(name, n, len)?;
    }
    let mut v = net.potential(angles)?;
    for i in 0..n {
        let d = angles[i] - theta0[i];
        v += 0.5 * params.inertia[i] * freqs[i] * freqs[i] - angles[i] * pstar[i] + 0.5 * t_inv[i] * d * d;
    }
    Ok(v)
}

/// Bus-level `T⁻¹` and anchor `θ0' = θ0 − T p0` for a pure-integral loop.
pub fn lasalle_anchor(
    n: usize,
    buses: &[usize],
    time_constants: &[f64],
    x0: &ClosedLoopState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("time constants", buses.len(), time_constants.len())?;
    check_len("controller state", buses.len(), x0.ctrl_state.len())?;
    check_len("angles", n, x0.angles.len())?;
    let mut t_inv = vec![0.0; n];
    let mut anchor = x0.angles.clone();
    for (k, &b) in buses.iter().enumerate() {
        t_inv[b] = 1.0 / time_constants[k];
        anchor[b] -= time_constants[k] * x0.ctrl_state[k];
    }
    Ok((t_inv, anchor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{Droop, LeakyIntegral, PureIntegral};

    fn single_machine(p: f64) -> (NetworkModel, MachineParams) {
        (
            NetworkModel::new(1, vec![], vec![]).unwrap(),
            MachineParams::new(vec![2.0], vec![1.5], vec![p]).unwrap(),
        )
    }

    #[test]
    fn single_machine_equilibrium_matches_leaky_formula() {
        let (net, params) = single_machine(0.6);
        let ctrl = LeakyIntegral::new(vec![0], vec![0.5], vec![0.2]).unwrap();
        let sys = ClosedLoop::new(&net, &params, &ctrl, Frame::Absolute).unwrap();
        let w = 0.6 / (1.5 + 2.0);
        let x = ClosedLoopState {
            angles: vec![0.0],
            freqs: vec![w],
            ctrl_state: vec![w / 0.5],
            frame: Frame::Absolute,
            time: 0.0,
        };
        let r = sys.rhs(&x, &params.injection, &[0.0]).unwrap();
        assert!(r.freqs[0].abs() < 1e-15 && r.ctrl_state[0].abs() < 1e-15);
        let cfg = SimulationConfig::new(60.0, 0.01, 1.0).unwrap();
        let x0 = ClosedLoopState::flat(1, 1, Frame::Absolute);
        let traj = integrate(&sys, &NoiseSpec::none(1), &EventSchedule::empty(), &x0, &cfg).unwrap();
        assert!((traj.terminal().state.freqs[0] - w).abs() < 1e-9);
    }

    #[test]
    fn zero_state_stays_zero() {
        let net = NetworkModel::new(3, vec![(0, 1), (1, 2)], vec![1.0, 2.0]).unwrap();
        let params = MachineParams::new(vec![1.0, 0.0, 2.0], vec![1.0; 3], vec![0.0; 3]).unwrap();
        let ctrl = PureIntegral::new(vec![0, 2], vec![0.5, 0.5]).unwrap();
        let sys = ClosedLoop::new(&net, &params, &ctrl, Frame::Absolute).unwrap();
        let x0 = ClosedLoopState::flat(3, 2, Frame::Absolute);
        let cfg = SimulationConfig::new(5.0, 0.01, 0.5).unwrap();
        let traj = integrate(&sys, &NoiseSpec::none(3), &EventSchedule::empty(), &x0, &cfg).unwrap();
        for s in traj.samples() {
            assert!(s.state.angles.iter().chain(&s.state.freqs).all(|x| *x == 0.0));
        }
        assert_eq!(traj.samples().len(), 11);
    }

    #[test]
    fn droop_at_load_bus_is_resolved_algebraically() {
        let net = NetworkModel::new(2, vec![(0, 1)], vec![1.0]).unwrap();
        let params = MachineParams::new(vec![1.0, 0.0], vec![1.0, 0.5], vec![0.3, -0.3]).unwrap();
        let ctrl = Droop::new(vec![1], vec![2.0]).unwrap();
        let sys = ClosedLoop::new(&net, &params, &ctrl, Frame::Absolute).unwrap();
        let x = ClosedLoopState {
            angles: vec![0.1, 0.0],
            freqs: vec![0.0; 2],
            ctrl_state: vec![],
            frame: Frame::Absolute,
            time: 0.0,
        };
        let (w, u) = sys.outputs(&x, &params.injection, &[0.0, 0.01]).unwrap();
        let grad1 = -(0.1f64).sin();
        assert!((0.5 * w[1] - (-0.3 - grad1 + u[1])).abs() < 1e-15);
        assert!((u[1] + 2.0 * (w[1] + 0.01)).abs() < 1e-15);
    }

    #[test]
    fn events_must_be_ordered() {
        let e = |t| StepEvent {
            time: t,
            bus: 0,
            delta_p: 1.0,
        };
        assert!(EventSchedule::new(vec![e(2.0), e(1.0)]).is_err());
        assert!(EventSchedule::new(vec![e(1.0), e(1.0)]).is_ok());
    }

    #[test]
    fn lasalle_at_anchor_is_potential() {
        let net = NetworkModel::new(2, vec![(0, 1)], vec![1.3]).unwrap();
        let params = MachineParams::new(vec![1.0; 2], vec![1.0; 2], vec![0.0; 2]).unwrap();
        let th = [0.4, -0.1];
        let v = lasalle_value(&net, &params, &[2.0, 3.0], &th, &[0.0; 2], &th, &[0.0; 2]).unwrap();
        assert!((v - net.potential(&th).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn quasi_static_loads_track_dynamic_loads() {
        let net = NetworkModel::new(4, vec![(0, 2), (1, 3), (2, 3), (0, 3)], vec![3.0, 2.5, 4.0, 1.5]).unwrap();
        let params = MachineParams::new(vec![2.0, 3.0, 0.0, 0.0], vec![1.0, 1.2, 0.01, 0.01], vec![0.4, 0.3, -0.5, -0.2]).unwrap();
        let ctrl = LeakyIntegral::new(vec![0, 1], vec![0.5, 1.0], vec![0.4, 0.4]).unwrap();
        let dynamic = ClosedLoop::new(&net, &params, &ctrl, Frame::Absolute).unwrap();
        let quasi = ClosedLoop::new(&net, &params, &ctrl, Frame::Absolute)
            .unwrap()
            .with_load_model(LoadModel::QuasiStatic)
            .unwrap();
        let events = EventSchedule::new(vec![StepEvent { time: 1.0, bus: 2, delta_p: -0.2 }]).unwrap();
        let x0 = ClosedLoopState::flat(4, 2, Frame::Absolute);
        let cfg = SimulationConfig::new(60.0, 0.001, 0.5).unwrap();
        let a = integrate(&dynamic, &NoiseSpec::none(4), &events, &x0, &cfg).unwrap();
        let b = integrate(&quasi, &NoiseSpec::none(4), &events, &x0, &cfg).unwrap();
        for (sa, sb) in a.samples().iter().zip(b.samples()).skip(4) {
            for g in 0..2 {
                assert!((sa.state.freqs[g] - sb.state.freqs[g]).abs() < 1e-3, "{} {} {}", sa.state.time, sa.state.freqs[g], sb.state.freqs[g]);
            }
        }
        let (ta, tb) = (a.terminal(), b.terminal());
        let w = -0.2 / (1.0 + 1.2 + 0.02 + 2.0 + 1.0);
        assert!((ta.state.freqs[0] - w).abs() < 1e-8 && (tb.state.freqs[0] - w).abs() < 1e-8, "{w} {} {}", ta.state.freqs[0], tb.state.freqs[0]);
        let grad = net.potential_gradient(&tb.state.angles).unwrap();
        let p = events.final_injection(&params.injection);
        for l in 2..4 {
            assert!((grad[l] - (p[l] - 0.01 * tb.state.freqs[l])).abs() < 1e-9);
        }
    }

    #[test]
    fn quasi_static_loads_need_absolute_frame() {
        let net = NetworkModel::new(2, vec![(0, 1)], vec![1.0]).unwrap();
        let params = MachineParams::new(vec![1.0, 0.0], vec![1.0, 0.1], vec![0.1, -0.1]).unwrap();
        let ctrl = PureIntegral::new(vec![0], vec![0.5]).unwrap();
        let sys = ClosedLoop::new(&net, &params, &ctrl, Frame::CenterOfInertia).unwrap();
        assert!(sys.with_load_model(LoadModel::QuasiStatic).is_err());
    }
}

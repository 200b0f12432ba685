//! Synchronous solutions, steady-state frequency formulas and the dispatch
//! programs whose optima the controllers reach.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::controllers::{Controller, DistributedAveraging};
use crate::dynamics::{ClosedLoopState, Frame, MachineParams};
use crate::error::{check_len, invalid, GridError, Result};
use crate::network::{project_com, NetworkModel};
use crate::report::fmt_sig;

/// `(ΣP* + Σu*)/ΣD` for fixed injections `u*`.
pub fn sync_frequency_open(params: &MachineParams, u_star: &[f64]) -> Result<f64> {
    check_len("u*", params.n_buses(), u_star.len())?;
    Ok((params.total_injection() + u_star.iter().sum::<f64>()) / params.total_damping())
}

/// `ΣP*/Σ(D + K⁻¹)` with a leaky integrator at every bus.
pub fn sync_frequency_leaky(params: &MachineParams, k: &[f64]) -> Result<f64> {
    check_len("K", params.n_buses(), k.len())?;
    if k.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(invalid("K must be > 0 entrywise"));
    }
    let gain: Vec<f64> = k.iter().map(|k| 1.0 / k).collect();
    sync_frequency_with_gain(params, &gain)
}

/// `ΣP*/Σ(D + g)` where `g_i` is the DC gain at bus `i` (zero if uncontrolled).
pub fn sync_frequency_with_gain(params: &MachineParams, gain: &[f64]) -> Result<f64> {
    check_len("DC gain", params.n_buses(), gain.len())?;
    Ok(params.total_injection() / (params.total_damping() + gain.iter().sum::<f64>()))
}

/// Smallest `ΣK⁻¹` keeping `|ω_sync| ≤ ε` for the imbalance `sum_pstar`.
pub fn min_dc_gain_for_band(sum_damping: f64, sum_pstar: f64, eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("frequency band ε must be > 0"));
    }
    Ok((sum_pstar.abs() / eps - sum_damping).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchVariant {
    /// `min ½Σa_i u_i²` subject to `ΣP* + Σu = 0`.
    Exact,
    /// `min ½ΣK_i u_i²` subject to `ΣP* + Σ(1 + D_iK_i)u_i = 0`.
    Leaky,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchProblem {
    pub coefficients: Vec<f64>,
    pub injection: Vec<f64>,
    pub damping: Vec<f64>,
    pub variant: DispatchVariant,
}

impl DispatchProblem {
    pub fn exact(cost: Vec<f64>, injection: Vec<f64>) -> Result<Self> {
        let n = cost.len();
        Self::new(cost, injection, vec![1.0; n], DispatchVariant::Exact)
    }

    pub fn leaky(k: Vec<f64>, injection: Vec<f64>, damping: Vec<f64>) -> Result<Self> {
        Self::new(k, injection, damping, DispatchVariant::Leaky)
    }

    fn new(coefficients: Vec<f64>, injection: Vec<f64>, damping: Vec<f64>, variant: DispatchVariant) -> Result<Self> {
        let n = coefficients.len();
        check_len("dispatch injections", n, injection.len())?;
        check_len("dispatch damping", n, damping.len())?;
        if n == 0 {
            return Err(invalid("dispatch problem has no buses"));
        }
        if coefficients.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(invalid("dispatch coefficients must be > 0"));
        }
        Ok(Self {
            coefficients,
            injection,
            damping,
            variant,
        })
    }

    /// Weights `w` of the balance constraint `ΣP* + Σw_i u_i = 0`.
    pub fn constraint_weights(&self) -> Vec<f64> {
        match self.variant {
            DispatchVariant::Exact => vec![1.0; self.coefficients.len()],
            DispatchVariant::Leaky => self
                .coefficients
                .iter()
                .zip(&self.damping)
                .map(|(k, d)| 1.0 + d * k)
                .collect(),
        }
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        0.5 * self.coefficients.iter().zip(u).map(|(a, u)| a * u * u).sum::<f64>()
    }

    pub fn constraint_residual(&self, u: &[f64]) -> f64 {
        self.injection.iter().sum::<f64>() + self.constraint_weights().iter().zip(u).map(|(w, u)| w * u).sum::<f64>()
    }

    pub fn marginal_costs(&self, u: &[f64]) -> Vec<f64> {
        self.coefficients.iter().zip(u).map(|(a, u)| a * u).collect()
    }
}

/// Closed-form KKT solution `u_i = λ w_i / a_i`, `λ = −ΣP*/Σ(w_j²/a_j)`.
pub fn solve_dispatch(problem: &DispatchProblem) -> Vec<f64> {
    let w = problem.constraint_weights();
    let sum_p: f64 = problem.injection.iter().sum();
    let denom: f64 = w.iter().zip(&problem.coefficients).map(|(w, a)| w * w / a).sum();
    let lambda = -sum_p / denom;
    w.iter().zip(&problem.coefficients).map(|(w, a)| lambda * w / a).collect()
}

/// Steady injections reached by leaky integrators: `u_i = −K_i⁻¹ΣP*/Σ(D + K⁻¹)`.
///
/// These share power as `K_i u_i = K_j u_j`; they coincide with the leaky
/// dispatch optimum only when `D_iK_i` is the same at every bus.
pub fn leaky_steady_injection(k: &[f64], damping: &[f64], sum_pstar: f64) -> Result<Vec<f64>> {
    check_len("damping", k.len(), damping.len())?;
    if k.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(invalid("K must be > 0 entrywise"));
    }
    let s: f64 = damping.iter().sum::<f64>() + k.iter().map(|k| 1.0 / k).sum::<f64>();
    Ok(k.iter().map(|k| -sum_pstar / (k * s)).collect())
}

/// What the controllers impose in steady state: `u_i = u0_i − g_i ω_sync`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyTarget {
    pub dc_gain: Vec<f64>,
    pub fixed_injection: Vec<f64>,
}

impl SteadyTarget {
    pub fn open_loop(n: usize) -> Self {
        Self {
            dc_gain: vec![0.0; n],
            fixed_injection: vec![0.0; n],
        }
    }

    /// Target for a controller whose steady state does not depend on the
    /// initial condition (droop, leaky integral with `K > 0`, DAI).
    pub fn for_controller(controller: &dyn Controller, params: &MachineParams, pstar_total: f64) -> Result<Self> {
        let n = params.n_buses();
        let mut target = Self::open_loop(n);
        if let Some(g) = controller.dc_gain() {
            for (k, &b) in controller.buses().iter().enumerate() {
                target.dc_gain[b] = g[k];
            }
            return Ok(target);
        }
        if let Some(dai) = controller.as_any().downcast_ref::<DistributedAveraging>() {
            let nc = dai.buses().len();
            let mut inj = vec![0.0; nc];
            inj[0] = pstar_total;
            let u = solve_dispatch(&DispatchProblem::exact(dai.cost().to_vec(), inj)?);
            for (k, &b) in dai.buses().iter().enumerate() {
                target.fixed_injection[b] = u[k];
            }
            return Ok(target);
        }
        Err(invalid(format!(
            "steady state of `{}` depends on the initial condition",
            controller.kind()
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Synchronous solution with angles in center-of-inertia coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SynchronousSolution {
    pub angles: Vec<f64>,
    pub omega_sync: f64,
    /// Steady injections `u*` per bus.
    pub injection: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl SynchronousSolution {
    pub fn line_angles(&self, net: &NetworkModel) -> Result<Vec<f64>> {
        net.line_angles(&self.angles)
    }

    /// Whether every line angle lies in `(−π/2 + ρ, π/2 − ρ)`.
    pub fn within_security(&self, net: &NetworkModel, rho: f64) -> Result<bool> {
        let bound = std::f64::consts::FRAC_PI_2 - rho;
        Ok(self.line_angles(net)?.iter().all(|a| a.abs() < bound))
    }

    /// Controller state `p* = −u*` at the controller's buses (empty for droop).
    pub fn ctrl_state(&self, controller: &dyn Controller) -> Vec<f64> {
        if controller.state_dim() == 0 {
            return Vec::new();
        }
        controller.buses().iter().map(|&b| -self.injection[b]).collect()
    }

    pub fn as_state(&self, controller: &dyn Controller, frame: Frame) -> ClosedLoopState {
        ClosedLoopState {
            angles: self.angles.clone(),
            freqs: vec![self.omega_sync; self.angles.len()],
            ctrl_state: self.ctrl_state(controller),
            frame,
            time: 0.0,
        }
    }
}

/// Solves `BΓ sin(Bᵀθ) = P* + u0 − (D + g)ω_sync` by damped Newton from flat start.
pub fn solve_synchronous(
    net: &NetworkModel,
    params: &MachineParams,
    target: &SteadyTarget,
    opts: NewtonOptions,
) -> Result<SynchronousSolution> {
    let n = net.n_buses();
    check_len("machine parameters", n, params.n_buses())?;
    check_len("steady DC gain", n, target.dc_gain.len())?;
    check_len("steady fixed injection", n, target.fixed_injection.len())?;
    let u0_total: f64 = target.fixed_injection.iter().sum();
    let omega = (params.total_injection() + u0_total) / (params.total_damping() + target.dc_gain.iter().sum::<f64>());
    let p_eff: Vec<f64> = (0..n)
        .map(|i| params.injection[i] + target.fixed_injection[i] - (params.damping[i] + target.dc_gain[i]) * omega)
        .collect();
    let injection: Vec<f64> = (0..n)
        .map(|i| target.fixed_injection[i] - target.dc_gain[i] * omega)
        .collect();

    let mismatch = |th: &[f64]| -> Result<(DVector<f64>, f64)> {
        let g = net.potential_gradient(th)?;
        let f = DVector::from_fn(n, |i, _| g[i] - p_eff[i]);
        let norm = f.amax();
        Ok((f, norm))
    };

    let mut theta = vec![0.0; n];
    let (mut f, mut norm) = mismatch(&theta)?;
    let mut iterations = 0;
    while norm > opts.tol {
        if iterations >= opts.max_iter {
            return Err(GridError::NoConvergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let h = net.potential_hessian(&theta)?;
        let jr: DMatrix<f64> = h.view((1, 1), (n - 1, n - 1)).into_owned();
        let fr = f.rows(1, n - 1).into_owned();
        let step = jr.lu().solve(&fr).ok_or_else(|| GridError::NoConvergence {
            iterations,
            residual: norm,
        })?;
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = (0..n)
                .map(|i| if i == 0 { 0.0 } else { theta[i] - alpha * step[i - 1] })
                .collect();
            let (tf, tn) = mismatch(&trial)?;
            if tn < norm || alpha < 1e-9 {
                theta = trial;
                f = tf;
                norm = tn;
                break;
            }
            alpha *= 0.5;
        }
    }
    project_com(&mut theta);
    Ok(SynchronousSolution {
        angles: theta,
        omega_sync: omega,
        injection,
        residual: norm,
        iterations,
    })
}

/// Steady-state table `bus,u_star,marginal_cost,theta_star`.
pub fn write_steady_csv<W: Write>(out: W, bus_ids: &[usize], sol: &SynchronousSolution, cost: &[f64]) -> Result<()> {
    check_len("bus ids", sol.angles.len(), bus_ids.len())?;
    check_len("cost", sol.angles.len(), cost.len())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bus", "u_star", "marginal_cost", "theta_star"])?;
    for i in 0..bus_ids.len() {
        w.write_record([
            bus_ids[i].to_string(),
            fmt_sig(sol.injection[i]),
            fmt_sig(cost[i] * sol.injection[i]),
            fmt_sig(sol.angles[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_loop_frequency() {
        let p = MachineParams::new(vec![1.0; 2], vec![1.0; 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(sync_frequency_open(&p, &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(sync_frequency_open(&p, &[-1.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn band_bound_and_leaky_frequency_use_case_study_numbers() {
        assert_eq!(min_dc_gain_for_band(2100.0, 18.0, 0.005).unwrap(), 1500.0);
        assert_eq!(min_dc_gain_for_band(2100.0, 0.0, 0.005).unwrap(), 0.0);
        assert!(min_dc_gain_for_band(2100.0, 18.0, 0.0).is_err());
        let p = MachineParams::new(vec![0.0], vec![2100.0], vec![18.0]).unwrap();
        assert_eq!(sync_frequency_leaky(&p, &[1.0 / 1500.0]).unwrap(), 0.005);
    }

    #[test]
    fn bound_is_tight() {
        let (sd, sp, eps) = (3.0, -2.0, 0.1);
        let g = min_dc_gain_for_band(sd, sp, eps).unwrap();
        assert!(((sp / (sd + g)).abs() - eps).abs() < 1e-15);
    }

    #[test]
    fn exact_dispatch_examples() {
        let u = solve_dispatch(&DispatchProblem::exact(vec![1.0, 2.0], vec![3.0, 0.0]).unwrap());
        assert!((u[0] + 2.0).abs() < 1e-15 && (u[1] + 1.0).abs() < 1e-15);
        let u = solve_dispatch(&DispatchProblem::exact(vec![3.0; 4], vec![1.0, 1.0, 0.0, 2.0]).unwrap());
        assert!(u.iter().all(|x| (x + 1.0).abs() < 1e-15));
    }

    #[test]
    fn leaky_dispatch_counterexample() {
        // K = (1, 1), D = (0, 1): steady injections share equally but are not optimal.
        let prob = DispatchProblem::leaky(vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let opt = solve_dispatch(&prob);
        assert!((opt[0] - 0.2).abs() < 1e-15 && (opt[1] - 0.4).abs() < 1e-15);
        let shared = leaky_steady_injection(&[1.0, 1.0], &[0.0, 1.0], -1.0).unwrap();
        assert!(prob.constraint_residual(&shared).abs() < 1e-15);
        assert!(prob.objective(&opt) < prob.objective(&shared));
    }

    #[test]
    fn leaky_dispatch_matches_sharing_when_dk_uniform() {
        let k = vec![0.5, 1.0, 2.0];
        let d: Vec<f64> = k.iter().map(|k| 0.3 / k).collect();
        let prob = DispatchProblem::leaky(k.clone(), vec![0.4, -1.0, 0.1], d.clone()).unwrap();
        let opt = solve_dispatch(&prob);
        let shared = leaky_steady_injection(&k, &d, -0.5).unwrap();
        for (a, b) in opt.iter().zip(&shared) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn two_bus_power_flow_inversion() {
        let net = NetworkModel::new(2, vec![(0, 1)], vec![2.0]).unwrap();
        let p = MachineParams::new(vec![1.0; 2], vec![1.0; 2], vec![0.7, -0.7]).unwrap();
        let opts = NewtonOptions { tol: 1e-14, max_iter: 50 };
        let s = solve_synchronous(&net, &p, &SteadyTarget::open_loop(2), opts).unwrap();
        let diff = s.angles[0] - s.angles[1];
        assert!((diff.sin() - 0.35).abs() < 1e-12);
        assert_eq!(s.omega_sync, 0.0);
        assert!(s.angles.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn zero_injection_gives_flat_solution() {
        let net = NetworkModel::new(3, vec![(0, 1), (1, 2)], vec![1.0, 1.0]).unwrap();
        let p = MachineParams::new(vec![1.0; 3], vec![1.0; 3], vec![0.0; 3]).unwrap();
        let s = solve_synchronous(&net, &p, &SteadyTarget::open_loop(3), NewtonOptions::default()).unwrap();
        assert!(s.angles.iter().all(|x| *x == 0.0) && s.omega_sync == 0.0 && s.iterations == 0);
    }

    #[test]
    fn infeasible_flow_is_reported() {
        let net = NetworkModel::new(2, vec![(0, 1)], vec![1.0]).unwrap();
        let p = MachineParams::new(vec![1.0; 2], vec![1.0; 2], vec![1.5, -1.5]).unwrap();
        let err = solve_synchronous(&net, &p, &SteadyTarget::open_loop(2), NewtonOptions::default());
        assert!(matches!(err, Err(GridError::NoConvergence { .. })));
    }
}

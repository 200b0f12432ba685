//! Strict Lyapunov function with a potential/kinetic cross-term for the leaky
//! integral loop, and the exponential-stability and ISS constants it certifies.
//!
//! Coordinates are center-of-inertia deviations from a synchronous solution:
//! `x = (δ − δ*, ω − ω*, p − p*)`. With `g = ∇U(δ) − ∇U(δ*)` and
//! `χ = (g, ω − ω*, p − p*)` the nominal loop satisfies `V̇ = −χᵀH(δ)χ`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controllers::{Controller, LeakyIntegral};
use crate::dynamics::{ClosedLoopState, Frame, MachineParams};
use crate::error::{check_len, invalid, GridError, Result};
use crate::linear_analysis::laplacian_spectrum;
use crate::network::{project_com, NetworkModel};
use crate::optim::golden_section_min;
use crate::steady_state::SynchronousSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateParams {
    /// Cross-term weight; chosen by [`choose_epsilon`] when `None`.
    pub epsilon: Option<f64>,
    /// Noise splitting weight; maximizes `η̄` when `None`.
    pub mu: Option<f64>,
    /// Security margin: line angles stay in `(−π/2 + ρ, π/2 − ρ)`.
    pub rho: f64,
    /// Radius of the line-angle ball around the equilibrium; the largest
    /// admissible value (times 0.999) when `None`.
    pub xi: Option<f64>,
    /// Number of sampled points of the cosine box used for `β₄`.
    pub samples: usize,
    pub seed: u64,
}

impl Default for CertificateParams {
    fn default() -> Self {
        Self {
            epsilon: None,
            mu: None,
            rho: 0.1,
            xi: None,
            samples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub epsilon: f64,
    pub mu: f64,
    pub rho: f64,
    pub xi: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub beta4_hat: f64,
    /// Nominal decay rate `β₃β₄/β₂` of `V`.
    pub alpha: f64,
    /// Decay rate under noise, `β₃β̂₄/β₂`.
    pub alpha_hat: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Sublevel value defining `Ω_c = {V ≤ c}`.
    pub c: f64,
    /// Admissible bound on `sup_t ‖η(t)‖²`.
    pub eta_bar: f64,
    pub samples: usize,
}

impl Certificate {
    /// `(name, value)` pairs in report order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("epsilon", self.epsilon),
            ("mu", self.mu),
            ("rho", self.rho),
            ("xi", self.xi),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("alpha4", self.alpha4),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("beta4", self.beta4),
            ("beta4_hat", self.beta4_hat),
            ("alpha", self.alpha),
            ("alpha_hat", self.alpha_hat),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("c", self.c),
            ("eta_bar", self.eta_bar),
            ("samples", self.samples as f64),
        ]
    }

    /// Right-hand side `λe^{−α̂t}‖x₀‖² + γ‖η‖²∞` of the ISS estimate.
    pub fn iss_bound(&self, t: f64, x0_norm_sq: f64, eta_sup_sq: f64) -> f64 {
        self.lambda * (-self.alpha_hat * t).exp() * x0_norm_sq + self.gamma * eta_sup_sq
    }
}

/// Per-bus `K` and `T` of a leaky integrator acting on every bus.
pub fn leaky_bus_vectors(ctrl: &LeakyIntegral, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut k = vec![f64::NAN; n];
    let mut t = vec![f64::NAN; n];
    for (j, &b) in ctrl.buses().iter().enumerate() {
        if b >= n {
            return Err(invalid("controller bus outside network"));
        }
        k[b] = ctrl.gains()[j];
        t[b] = ctrl.time_constants()[j];
    }
    if k.iter().any(|x| x.is_nan()) {
        return Err(invalid("certification requires a leaky integrator at every bus"));
    }
    Ok((k, t))
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

fn min_eig(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.min()
}

/// `H` for a given vector of line cosines `cos(Bᵀδ)`.
pub fn build_h_from_cos(
    net: &NetworkModel,
    params: &MachineParams,
    k: &[f64],
    eps: f64,
    cos: &[f64],
) -> Result<DMatrix<f64>> {
    let n = net.n_buses();
    check_len("K", n, k.len())?;
    check_len("line cosines", net.n_lines(), cos.len())?;
    let m = diag(&params.inertia);
    let hess = net.weighted_laplacian(cos);
    let mh = &m * &hess;
    let e = (&mh + mh.transpose()) * 0.5;
    let d = diag(&params.damping);
    let id = DMatrix::<f64>::identity(n, n);
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&(&id * eps));
    h.view_mut((0, n), (n, n)).copy_from(&(&d * (0.5 * eps)));
    h.view_mut((n, 0), (n, n)).copy_from(&(&d * (0.5 * eps)));
    h.view_mut((0, 2 * n), (n, n)).copy_from(&(&id * (0.5 * eps)));
    h.view_mut((2 * n, 0), (n, n)).copy_from(&(&id * (0.5 * eps)));
    h.view_mut((n, n), (n, n)).copy_from(&(&d - e * eps));
    h.view_mut((2 * n, 2 * n), (n, n)).copy_from(&diag(k));
    Ok(h)
}

/// `H(δ)` such that `V̇ = −χᵀH(δ)χ` along the nominal loop.
pub fn build_h(net: &NetworkModel, params: &MachineParams, k: &[f64], eps: f64, delta: &[f64]) -> Result<DMatrix<f64>> {
    let cos: Vec<f64> = net.line_angles(delta)?.iter().map(|a| a.cos()).collect();
    build_h_from_cos(net, params, k, eps, &cos)
}

/// Block-diagonal minorant `H′ = diag(ε/2·I, D − ε(E + D²), K − εI)` of `H`.
pub fn build_h_prime(net: &NetworkModel, params: &MachineParams, k: &[f64], eps: f64, delta: &[f64]) -> Result<DMatrix<f64>> {
    let n = net.n_buses();
    check_len("K", n, k.len())?;
    let cos: Vec<f64> = net.line_angles(delta)?.iter().map(|a| a.cos()).collect();
    let m = diag(&params.inertia);
    let mh = &m * net.weighted_laplacian(&cos);
    let e = (&mh + mh.transpose()) * 0.5;
    let d = diag(&params.damping);
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    h.view_mut((0, 0), (n, n)).fill_with_identity();
    h.view_mut((0, 0), (n, n)).scale_mut(0.5 * eps);
    h.view_mut((n, n), (n, n)).copy_from(&(&d - (e + &d * &d) * eps));
    h.view_mut((2 * n, 2 * n), (n, n)).copy_from(&(diag(k) - DMatrix::identity(n, n) * eps));
    Ok(h)
}

/// `Ĥ = H − diag(0, 0, μI)`.
pub fn build_h_hat(h: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
    let n = h.nrows() / 3;
    let mut out = h.clone();
    for i in 0..n {
        out[(2 * n + i, 2 * n + i)] -= mu;
    }
    out
}

/// Potential-bounding constants over the security box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialBounds {
    /// `‖∇U(δ) − ∇U(δ*)‖ ≥ α₁‖δ − δ*‖`.
    pub alpha1: f64,
    /// `‖∇U(δ) − ∇U(δ*)‖ ≤ α₂‖δ − δ*‖`.
    pub alpha2: f64,
    /// Bregman distance `≥ α₃‖δ − δ*‖²`.
    pub alpha3: f64,
    /// Bregman distance `≤ α₄‖δ − δ*‖²`.
    pub alpha4: f64,
}

/// Bounds from `sin ρ·L_Γ ⪯ ∇²U ⪯ L_Γ` on the box, restricted to `1⊥`.
pub fn potential_bounds(net: &NetworkModel, rho: f64) -> Result<PotentialBounds> {
    if !(rho > 0.0 && rho < FRAC_PI_2) {
        return Err(invalid("ρ must lie in (0, π/2)"));
    }
    let eig = laplacian_spectrum(net.laplacian());
    let lmax = *eig.last().unwrap();
    let l2 = if eig.len() > 1 { eig[1] } else { 0.0 };
    Ok(PotentialBounds {
        alpha1: rho.sin() * l2,
        alpha2: lmax,
        alpha3: 0.5 * rho.sin() * l2,
        alpha4: 0.5 * lmax,
    })
}

/// `(β₁, β₂)` with `β₁‖x‖² ≤ V(x) ≤ β₂‖x‖²` while line angles stay in the box.
pub fn sandwich_constants(net: &NetworkModel, params: &MachineParams, t: &[f64], eps: f64, rho: f64) -> Result<(f64, f64)> {
    check_len("T", net.n_buses(), t.len())?;
    let pb = potential_bounds(net, rho)?;
    let (m_min, m_max) = min_max(&params.inertia);
    let (t_min, t_max) = min_max(t);
    let cross_m = 0.5 * eps * m_max * m_max;
    let cross_u = 0.5 * eps * pb.alpha2 * pb.alpha2;
    let beta1 = (0.5 * m_min - cross_m).min(0.5 * t_min).min(pb.alpha3 - cross_u);
    let beta2 = (0.5 * m_max + cross_m).max(0.5 * t_max).max(pb.alpha4 + cross_u);
    if !(beta1 > 0.0) {
        return Err(GridError::Certification(format!("β₁ = {beta1:.3e} is not positive")));
    }
    Ok((beta1, beta2))
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Largest cross-term weight (by bisection) keeping
/// `D − ε(e_max + D²) ⪰ D/2`, `K − εI ⪰ K/2` and `β₁(ε) ≥ β₁(0)/2`, where
/// `e_max = λmax(M)λmax(L_Γ)` bounds `E(δ)` on the box.
pub fn choose_epsilon(net: &NetworkModel, params: &MachineParams, k: &[f64], t: &[f64], rho: f64) -> Result<f64> {
    let n = net.n_buses();
    check_len("K", n, k.len())?;
    check_len("T", n, t.len())?;
    if k.iter().any(|x| !(*x > 0.0)) {
        return Err(GridError::Certification("certification needs K > 0 at every bus".into()));
    }
    if params.inertia.iter().any(|m| !(*m > 0.0)) {
        return Err(GridError::Certification("certification needs M > 0 at every bus".into()));
    }
    let pb = potential_bounds(net, rho)?;
    let (_, m_max) = min_max(&params.inertia);
    let e_max = m_max * pb.alpha2;
    let (k_min, _) = min_max(k);
    let (beta1_0, _) = sandwich_constants(net, params, t, 0.0, rho)?;
    let feasible = |eps: f64| -> bool {
        let damping_ok = params.damping.iter().all(|&d| d - eps * (e_max + d * d) >= 0.5 * d);
        let gain_ok = k_min - eps >= 0.5 * k_min;
        let sandwich_ok = sandwich_constants(net, params, t, eps, rho).is_ok_and(|(b1, _)| b1 >= 0.5 * beta1_0);
        damping_ok && gain_ok && sandwich_ok
    };
    let mut hi = k_min;
    while !feasible(hi) {
        hi *= 0.5;
        if hi < 1e-300 {
            return Err(GridError::Certification("no feasible cross-term weight".into()));
        }
    }
    let mut lo = hi;
    let mut up = 2.0 * hi;
    if feasible(up) {
        return Ok(hi);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + up);
        if feasible(mid) {
            lo = mid;
        } else {
            up = mid;
        }
    }
    Ok(lo)
}

/// Cosine vectors covering `[sin ρ, 1]^m`: both corners, random vertices and
/// random interior points.
pub fn cosine_samples(m: usize, rho: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let lo = rho.sin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![1.0; m], vec![lo; m]];
    while out.len() < count.max(2) {
        let vertex = out.len() % 2 == 0;
        let c = (0..m)
            .map(|_| {
                if vertex {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        lo
                    }
                } else {
                    lo + (1.0 - lo) * rng.random::<f64>()
                }
            })
            .collect();
        out.push(c);
    }
    out
}

/// `min over samples of λmin(H − μ diag(0, 0, I))`.
pub fn sampled_min_eigenvalue(
    net: &NetworkModel,
    params: &MachineParams,
    k: &[f64],
    eps: f64,
    mu: f64,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let mats: Vec<DMatrix<f64>> = samples
        .iter()
        .map(|c| build_h_from_cos(net, params, k, eps, c))
        .collect::<Result<_>>()?;
    Ok(mats
        .into_par_iter()
        .map(|h| min_eig(build_h_hat(&h, mu)))
        .reduce(|| f64::INFINITY, f64::min))
}

/// Builds the full certificate for a leaky integrator at every bus around `eq`.
pub fn certify(
    net: &NetworkModel,
    params: &MachineParams,
    ctrl: &LeakyIntegral,
    eq: &SynchronousSolution,
    cp: &CertificateParams,
) -> Result<Certificate> {
    let n = net.n_buses();
    check_len("machine parameters", n, params.n_buses())?;
    check_len("equilibrium angles", n, eq.angles.len())?;
    let (k, t) = leaky_bus_vectors(ctrl, n)?;
    let rho = cp.rho;
    let pb = potential_bounds(net, rho)?;
    let line = eq.line_angles(net)?;
    let slack = line.iter().map(|a| FRAC_PI_2 - rho - a.abs()).fold(f64::INFINITY, f64::min);
    if !(slack > 0.0) {
        return Err(GridError::Certification("equilibrium line angles violate the security margin".into()));
    }
    let xi = match cp.xi {
        Some(x) if x > 0.0 && x <= slack => x,
        Some(x) => return Err(invalid(format!("ξ = {x} must lie in (0, {slack}]"))),
        None => 0.999 * slack,
    };
    let eps = match cp.epsilon {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(invalid(format!("ε = {e} must be > 0"))),
        None => choose_epsilon(net, params, &k, &t, rho)?,
    };
    let (beta1, beta2) = sandwich_constants(net, params, &t, eps, rho)?;
    let beta3 = 1.0f64.min(pb.alpha1 * pb.alpha1);
    let samples = cosine_samples(net.n_lines(), rho, cp.samples, cp.seed);
    let beta4 = sampled_min_eigenvalue(net, params, &k, eps, 0.0, &samples)?;
    if !(beta4 > 0.0) {
        return Err(GridError::Certification(format!("β₄ = {beta4:.3e} is not positive")));
    }
    let bbt_max = laplacian_spectrum(&(net.incidence() * net.incidence().transpose()))
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(f64::MIN_POSITIVE);
    let c = beta1 * xi * xi / bbt_max;
    let k_min = k.iter().copied().fold(f64::INFINITY, f64::min);
    let mu_max = k_min - eps;
    if !(mu_max > 0.0) {
        return Err(GridError::Certification("K − εI is not positive definite".into()));
    }
    let hat = |mu: f64| sampled_min_eigenvalue(net, params, &k, eps, mu, &samples);
    let mu = match cp.mu {
        Some(m) if m > 0.0 && m < mu_max => m,
        Some(m) => return Err(invalid(format!("μ = {m} must lie in (0, {mu_max})"))),
        None => {
            let (best, _) = golden_section_min(
                |mu| hat(mu).map(|b| -(mu * b.max(0.0))).unwrap_or(f64::INFINITY),
                0.0,
                mu_max,
                1e-6,
            );
            best
        }
    };
    let beta4_hat = hat(mu)?;
    if !(beta4_hat > 0.0) {
        return Err(GridError::Certification(format!("β̂₄ = {beta4_hat:.3e} is not positive for μ = {mu}")));
    }
    let alpha = beta3 * beta4 / beta2;
    let alpha_hat = beta3 * beta4_hat / beta2;
    Ok(Certificate {
        epsilon: eps,
        mu,
        rho,
        xi,
        alpha1: pb.alpha1,
        alpha2: pb.alpha2,
        alpha3: pb.alpha3,
        alpha4: pb.alpha4,
        beta1,
        beta2,
        beta3,
        beta4,
        beta4_hat,
        alpha,
        alpha_hat,
        lambda: beta2 / beta1,
        gamma: 1.0 / (alpha_hat * beta1 * mu),
        c,
        eta_bar: alpha_hat * c * mu,
        samples: samples.len(),
    })
}

/// Deviation `(δ − δ*, ω − ω*, p − p*)` of a state from `eq`; bus-level `p`.
pub fn deviation(state: &ClosedLoopState, eq: &SynchronousSolution, p_bus: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = eq.angles.len();
    check_len("angles", n, state.angles.len())?;
    check_len("frequencies", n, state.freqs.len())?;
    check_len("controller state", n, p_bus.len())?;
    let mut delta = state.angles.clone();
    if state.frame == Frame::Absolute {
        project_com(&mut delta);
    }
    let dd = (0..n).map(|i| delta[i] - eq.angles[i]).collect();
    let dw = (0..n).map(|i| state.freqs[i] - eq.omega_sync).collect();
    let dp = (0..n).map(|i| p_bus[i] + eq.injection[i]).collect();
    Ok((dd, dw, dp))
}

/// `‖x‖²` of the deviation from `eq`.
pub fn deviation_norm_sq(state: &ClosedLoopState, eq: &SynchronousSolution, p_bus: &[f64]) -> Result<f64> {
    let (a, b, c) = deviation(state, eq, p_bus)?;
    Ok(a.iter().chain(&b).chain(&c).map(|x| x * x).sum())
}

/// `V(x) = ½Δωᵀ M Δω + Bregman(δ, δ*) + ½ΔpᵀTΔp + ε(∇U(δ) − ∇U(δ*))ᵀMΔω`.
pub fn lyapunov_value(
    net: &NetworkModel,
    params: &MachineParams,
    t: &[f64],
    eps: f64,
    state: &ClosedLoopState,
    p_bus: &[f64],
    eq: &SynchronousSolution,
) -> Result<f64> {
    let n = net.n_buses();
    check_len("T", n, t.len())?;
    let (dd, dw, dp) = deviation(state, eq, p_bus)?;
    let delta: Vec<f64> = (0..n).map(|i| eq.angles[i] + dd[i]).collect();
    let g = net.potential_gradient(&delta)?;
    let g0 = net.potential_gradient(&eq.angles)?;
    let bregman = net.potential(&delta)? - net.potential(&eq.angles)? - g0.iter().zip(&dd).map(|(a, b)| a * b).sum::<f64>();
    let mut v = bregman;
    for i in 0..n {
        v += 0.5 * params.inertia[i] * dw[i] * dw[i] + 0.5 * t[i] * dp[i] * dp[i] + eps * (g[i] - g0[i]) * params.inertia[i] * dw[i];
    }
    Ok(v)
}

/// `χ = (∇U(δ) − ∇U(δ*), ω − ω*, p − p*)` stacked.
pub fn chi(net: &NetworkModel, state: &ClosedLoopState, p_bus: &[f64], eq: &SynchronousSolution) -> Result<DVector<f64>> {
    let n = net.n_buses();
    let (dd, dw, dp) = deviation(state, eq, p_bus)?;
    let delta: Vec<f64> = (0..n).map(|i| eq.angles[i] + dd[i]).collect();
    let g = net.potential_gradient(&delta)? - net.potential_gradient(&eq.angles)?;
    Ok(DVector::from_iterator(3 * n, g.iter().copied().chain(dw).chain(dp)))
}

/// Nominal `V̇ = −χᵀH(δ)χ` at `state`.
pub fn lyapunov_rate(
    net: &NetworkModel,
    params: &MachineParams,
    k: &[f64],
    eps: f64,
    state: &ClosedLoopState,
    p_bus: &[f64],
    eq: &SynchronousSolution,
) -> Result<f64> {
    let x = chi(net, state, p_bus, eq)?;
    let n = net.n_buses();
    let (dd, _, _) = deviation(state, eq, p_bus)?;
    let delta: Vec<f64> = (0..n).map(|i| eq.angles[i] + dd[i]).collect();
    let h = build_h(net, params, k, eps, &delta)?;
    Ok(-(x.transpose() * h * &x)[(0, 0)])
}

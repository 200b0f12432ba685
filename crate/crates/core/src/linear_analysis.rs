//! Linearized closed loop and its H2 performance, by Lyapunov solve and by the
//! closed-form homogeneous expressions.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::controllers::Controller;
use crate::dynamics::MachineParams;
use crate::error::{check_len, invalid, GridError, Result};
use crate::lyap::solve_lyapunov;
use crate::network::NetworkModel;
use crate::report::fmt_sig;

/// `ẋ = Ax + B[ζ; η]`, `y = Cx = ω`, with state `x = (θ, ω, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub n_buses: usize,
    pub n_ctrl_states: usize,
}

impl LinearSystem {
    pub fn state_blocks(&self) -> [(&'static str, usize); 3] {
        [("theta", self.n_buses), ("omega", self.n_buses), ("p", self.n_ctrl_states)]
    }

    /// Inputs are `ζ` (power, one per bus) followed by `η` (measurement, one per bus).
    pub fn input_blocks(&self) -> [(&'static str, usize); 2] {
        [("zeta", self.n_buses), ("eta", self.n_buses)]
    }
}

/// Per-bus white-noise intensities of the power (`ζ`) and measurement (`η`) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIntensity {
    pub sigma_zeta: Vec<f64>,
    pub sigma_eta: Vec<f64>,
}

impl NoiseIntensity {
    pub fn uniform(n: usize, sigma_zeta: f64, sigma_eta: f64) -> Self {
        Self {
            sigma_zeta: vec![sigma_zeta; n],
            sigma_eta: vec![sigma_eta; n],
        }
    }
}

/// Linearization around `operating_angles` with `L_B = ∇²U`. Pass `None` for the
/// open loop (no controller states).
pub fn linearize(
    net: &NetworkModel,
    params: &MachineParams,
    controller: Option<&dyn Controller>,
    operating_angles: &[f64],
    noise: &NoiseIntensity,
) -> Result<LinearSystem> {
    let n = net.n_buses();
    check_len("machine parameters", n, params.n_buses())?;
    check_len("sigma_zeta", n, noise.sigma_zeta.len())?;
    check_len("sigma_eta", n, noise.sigma_eta.len())?;
    if let Some(i) = params.inertia.iter().position(|m| *m <= 0.0) {
        return Err(invalid(format!("linear analysis requires M > 0 (bus {i} has zero inertia)")));
    }
    let lb = net.potential_hessian(operating_angles)?;
    let (buses, lin) = match controller {
        Some(c) => (c.buses().to_vec(), Some(c.linear_model())),
        None => (Vec::new(), None),
    };
    let nc = buses.len();
    let ns = lin.as_ref().map_or(0, |l| l.f.nrows());
    if buses.iter().any(|b| *b >= n) {
        return Err(invalid("controller bus outside network"));
    }
    let mut e = DMatrix::zeros(n, nc);
    for (k, &b) in buses.iter().enumerate() {
        e[(b, k)] = 1.0;
    }
    let minv = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| 1.0 / params.inertia[i]));
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(&params.damping));
    let s_zeta = DMatrix::from_diagonal(&DVector::from_column_slice(&noise.sigma_zeta));
    let s_eta_c = e.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(&noise.sigma_eta));

    let dim = 2 * n + ns;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DMatrix::zeros(dim, 2 * n);
    a.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    let mut omega_fb = -&d;
    if let Some(l) = &lin {
        omega_fb += &e * &l.j * e.transpose();
    }
    a.view_mut((n, 0), (n, n)).copy_from(&(-(&minv * &lb)));
    a.view_mut((n, n), (n, n)).copy_from(&(&minv * omega_fb));
    b.view_mut((n, 0), (n, n)).copy_from(&(&minv * s_zeta));
    if let Some(l) = &lin {
        if ns > 0 {
            a.view_mut((n, 2 * n), (n, ns)).copy_from(&(&minv * &e * &l.h));
            a.view_mut((2 * n, n), (ns, n)).copy_from(&(&l.g * e.transpose()));
            a.view_mut((2 * n, 2 * n), (ns, ns)).copy_from(&l.f);
            b.view_mut((2 * n, n), (ns, n)).copy_from(&(&l.g * &s_eta_c));
        }
        b.view_mut((n, n), (n, n)).copy_from(&(&minv * &e * &l.j * &s_eta_c));
    }
    let mut c = DMatrix::zeros(n, dim);
    c.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    Ok(LinearSystem {
        a,
        b,
        c,
        n_buses: n,
        n_ctrl_states: ns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H2Split {
    pub total: f64,
    pub power_channel: f64,
    pub noise_channel: f64,
}

/// Squared H2 norm `tr(BᵀXB)`, `AᵀX + XA = −CᵀC`, after removing the marginal
/// (zero-eigenvalue) modes, which must be unobservable.
pub fn h2_numeric(sys: &LinearSystem) -> Result<H2Split> {
    let dim = sys.a.nrows();
    let svd = SVD::new(sys.a.clone(), true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(GridError::Numerical("SVD of A failed".into())),
    };
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(1.0) * dim as f64;
    let null: Vec<usize> = (0..dim).filter(|&i| svd.singular_values[i] <= tol).collect();
    let range: Vec<usize> = (0..dim).filter(|&i| svd.singular_values[i] > tol).collect();

    let (ar, br, cr) = if null.is_empty() {
        (sys.a.clone(), sys.b.clone(), sys.c.clone())
    } else {
        let w = u.select_columns(&null);
        let nv = vt.transpose().select_columns(&null);
        let q = u.select_columns(&range);
        if (&sys.c * &nv).amax() > 1e-8 * sys.c.amax().max(1.0) {
            return Err(GridError::Numerical("marginal mode is observable; H2 norm is infinite".into()));
        }
        let wn = w.transpose() * &nv;
        let wn_inv = wn
            .try_inverse()
            .ok_or_else(|| GridError::Numerical("zero eigenvalue of A is not semisimple".into()))?;
        let proj = DMatrix::identity(dim, dim) - &nv * wn_inv * w.transpose();
        (
            q.transpose() * &sys.a * &q,
            q.transpose() * proj * &sys.b,
            &sys.c * &q,
        )
    };
    let worst = ar.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if ar.nrows() > 0 && worst >= 0.0 {
        return Err(GridError::Numerical(format!(
            "reduced state matrix is not Hurwitz (max Re λ = {worst:.3e})"
        )));
    }
    let q = cr.transpose() * &cr;
    let x = solve_lyapunov(&ar, &q)?;
    let n = sys.n_buses;
    let channel = |start: usize| -> f64 {
        let bs = br.columns(start, n);
        (bs.transpose() * &x * bs).trace()
    };
    let power = channel(0);
    let noise = channel(n);
    Ok(H2Split {
        total: power + noise,
        power_channel: power,
        noise_channel: noise,
    })
}

/// Homogeneous parameters `M = mI`, `D = dI`, `T = τI`, `K = kI` and uniform
/// noise intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousParams {
    pub m: f64,
    pub d: f64,
    pub tau: f64,
    pub k: f64,
    pub sigma_zeta: f64,
    pub sigma_eta: f64,
}

impl HomogeneousParams {
    fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.d > 0.0) {
            return Err(invalid("homogeneous m and d must be > 0"));
        }
        if !(self.tau >= 0.0 && self.k >= 0.0) {
            return Err(invalid("τ and k must be ≥ 0"));
        }
        if !(self.sigma_zeta >= 0.0 && self.sigma_eta >= 0.0) {
            return Err(invalid("noise intensities must be ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum H2Method {
    ClosedForm,
    LyapunovNumeric,
}

impl H2Method {
    pub fn label(self) -> &'static str {
        match self {
            H2Method::ClosedForm => "closed-form",
            H2Method::LyapunovNumeric => "lyapunov-numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct H2Report {
    pub total: f64,
    pub power_channel: f64,
    pub noise_channel: f64,
    pub per_mode: Vec<f64>,
    pub method: H2Method,
    pub params: HomogeneousParams,
    pub eigenvalues: Vec<f64>,
}

/// Power- and noise-channel contribution of the mode with Laplacian eigenvalue `λ`.
pub fn per_mode_decompose(p: &HomogeneousParams, lambda: f64) -> Result<(f64, f64)> {
    p.validate()?;
    let HomogeneousParams {
        m,
        d,
        tau,
        k,
        sigma_zeta: sz,
        sigma_eta: se,
    } = *p;
    let den = 2.0 * d * (m * k * k + (m / d + d * tau) * k + tau + lambda * tau * tau);
    if !(den > 0.0) {
        return Err(invalid(format!("mode λ = {lambda} has a non-positive denominator")));
    }
    let power = sz * sz / (2.0 * m * d) - (k / d) * sz * sz / den;
    let noise = se * se / den;
    Ok((power, noise))
}

/// Closed-form squared H2 norm over the Laplacian spectrum `eigs` (ascending, `λ₁ = 0`).
pub fn h2_closed_form(p: &HomogeneousParams, eigs: &[f64]) -> Result<H2Report> {
    p.validate()?;
    if eigs.is_empty() {
        return Err(invalid("empty spectrum"));
    }
    if eigs.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("eigenvalues must be sorted ascending"));
    }
    let scale = eigs.last().unwrap().abs().max(1.0);
    if eigs[0].abs() > 1e-9 * scale {
        return Err(invalid(format!("smallest eigenvalue {} is not zero", eigs[0])));
    }
    let (mut power, mut noise) = (0.0, 0.0);
    let mut per_mode = Vec::with_capacity(eigs.len());
    for (i, &l) in eigs.iter().enumerate() {
        let lambda = if i == 0 { 0.0 } else { l };
        let (a, b) = per_mode_decompose(p, lambda)?;
        power += a;
        noise += b;
        per_mode.push(a + b);
    }
    Ok(H2Report {
        total: power + noise,
        power_channel: power,
        noise_channel: noise,
        per_mode,
        method: H2Method::ClosedForm,
        params: *p,
        eigenvalues: eigs.to_vec(),
    })
}

/// Squared H2 norm of the uncontrolled loop, `nσζ²/(2md)`.
pub fn open_loop_h2(n: usize, m: f64, d: f64, sigma_zeta: f64) -> f64 {
    n as f64 * sigma_zeta * sigma_zeta / (2.0 * m * d)
}

/// H2-optimal leak gain as `τ → 0`: the positive root of
/// `σζ²k² − 2dση²k − ση² = 0`.
pub fn optimal_k(d: f64, sigma_zeta: f64, sigma_eta: f64) -> Result<f64> {
    if !(d > 0.0 && sigma_eta >= 0.0) {
        return Err(invalid("d must be > 0 and σ_η ≥ 0"));
    }
    if sigma_zeta <= 0.0 {
        return Err(GridError::OpenLoopOptimal);
    }
    let se2 = sigma_eta * sigma_eta;
    Ok((d * se2 + sigma_eta * (d * d * se2 + sigma_zeta * sigma_zeta).sqrt()) / (sigma_zeta * sigma_zeta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenLoopComparison {
    Improves,
    Degrades,
    /// `k/d = (ση/σζ)²`: every mode equals its open-loop value.
    Matches,
}

pub fn check_open_loop_improvement(d: f64, k: f64, sigma_zeta: f64, sigma_eta: f64) -> Result<OpenLoopComparison> {
    if sigma_zeta <= 0.0 {
        return Err(invalid("σ_ζ must be > 0"));
    }
    if !(d > 0.0) {
        return Err(invalid("d must be > 0"));
    }
    let lhs = k * sigma_zeta * sigma_zeta;
    let rhs = d * sigma_eta * sigma_eta;
    Ok(if lhs > rhs {
        OpenLoopComparison::Improves
    } else if lhs < rhs {
        OpenLoopComparison::Degrades
    } else {
        OpenLoopComparison::Matches
    })
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn laplacian_spectrum(l: &DMatrix<f64>) -> Vec<f64> {
    let mut e = SymmetricEigen::new(l.clone()).eigenvalues.as_slice().to_vec();
    e.sort_by(f64::total_cmp);
    e
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H2SweepRow {
    pub k: f64,
    pub tau: f64,
    pub split: H2Split,
    pub method: H2Method,
}

/// Writes `k,tau,h2_total,h2_power_channel,h2_noise_channel,method`.
pub fn write_h2_sweep_csv<W: Write>(out: W, rows: &[H2SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "tau", "h2_total", "h2_power_channel", "h2_noise_channel", "method"])?;
    for r in rows {
        w.write_record([
            fmt_sig(r.k),
            fmt_sig(r.tau),
            fmt_sig(r.split.total),
            fmt_sig(r.split.power_channel),
            fmt_sig(r.split.noise_channel),
            r.method.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

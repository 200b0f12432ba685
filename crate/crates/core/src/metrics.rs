//! Performance metrics of frequency trajectories and the gain/time-constant
//! tuning procedure.

use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::Trajectory;
use crate::error::{check_len, invalid, GridError, Result};
use crate::optim::golden_section_min;
use crate::report::fmt_sig;

/// Nominal frequency in Hz; per-unit frequencies are fractions of this value.
pub const NOMINAL_HZ: f64 = 60.0;

/// How the convergence band was formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    /// `[0.95, 1.05]` times the steady-state error.
    Relative,
    /// `±0.05` times the peak deviation, used when the steady error is zero.
    PeakFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub steady_state_error_hz: f64,
    /// Seconds after `t_ref`; `None` when the signal never stays in the band.
    pub convergence_time_s: Option<f64>,
    pub band: BandKind,
    pub rmse_hz: f64,
    pub window: (f64, f64),
    pub n_realizations: usize,
}

/// First sample time from which every later sample lies in `[lo, hi]`.
fn last_entry(times: &[f64], values: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let mut entry = None;
    for (&t, &v) in times.iter().zip(values) {
        if v >= lo && v <= hi {
            entry.get_or_insert(t);
        } else {
            entry = None;
        }
    }
    entry
}

/// Smallest sample time after which `values` stays in `[0.95, 1.05]·steady`.
pub fn convergence_time(times: &[f64], values: &[f64], steady: f64) -> Result<Option<f64>> {
    check_len("samples", times.len(), values.len())?;
    if steady == 0.0 || !steady.is_finite() {
        return Err(GridError::UndefinedMetric("relative band degenerates for zero steady-state error".into()));
    }
    let (a, b) = (0.95 * steady, 1.05 * steady);
    Ok(last_entry(times, values, a.min(b), a.max(b)))
}

/// Absolute band `steady ± 0.05·max|values − steady|` for zero steady-state error.
pub fn convergence_time_peak_band(times: &[f64], values: &[f64], steady: f64) -> Result<Option<f64>> {
    check_len("samples", times.len(), values.len())?;
    let peak = values.iter().map(|v| (v - steady).abs()).fold(0.0, f64::max);
    let hw = 0.05 * peak;
    Ok(last_entry(times, values, steady - hw, steady + hw))
}

/// Root-mean-square deviation from `steady` over samples with `t ∈ [t0, t1]`.
pub fn rmse_window(times: &[f64], values: &[f64], steady: f64, window: (f64, f64)) -> Result<f64> {
    check_len("samples", times.len(), values.len())?;
    let (t0, t1) = window;
    let tol = 1e-9 * t1.abs().max(1.0);
    let mut acc = 0.0;
    let mut cnt = 0usize;
    for (&t, &v) in times.iter().zip(values) {
        if t >= t0 - tol && t <= t1 + tol {
            acc += (v - steady) * (v - steady);
            cnt += 1;
        }
    }
    if cnt == 0 {
        return Err(invalid(format!("no samples in window [{t0}, {t1}]")));
    }
    Ok((acc / cnt as f64).sqrt())
}

/// Per-realization RMSE of bus frequency (pu) over `window`, averaged.
pub fn rmse(trajectories: &[Trajectory], bus: usize, steady: f64, window: (f64, f64)) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(invalid("no realizations"));
    }
    if let Some(last) = trajectories.iter().map(|t| t.times().last().copied().unwrap_or(f64::NEG_INFINITY)).reduce(f64::min) {
        if window.1 > last + 1e-9 * last.abs().max(1.0) || window.0 > window.1 {
            return Err(invalid(format!("window [{}, {}] outside horizon {last}", window.0, window.1)));
        }
    }
    let per: Vec<f64> = trajectories
        .par_iter()
        .map(|tr| rmse_window(&tr.times(), &tr.frequency(bus), steady, window))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Metrics of one bus: steady error and convergence time from the noise-free
/// run, RMSE from the noisy batch. Convergence time is measured from `t_ref`;
/// `hz_per_unit` converts frequencies to Hz.
pub fn evaluate(
    nominal: &Trajectory,
    noisy: &[Trajectory],
    bus: usize,
    steady: f64,
    t_ref: f64,
    window: (f64, f64),
    hz_per_unit: f64,
) -> Result<MetricsReport> {
    let times = nominal.times();
    let freq = nominal.frequency(bus);
    let mask: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t_ref).collect();
    let ts: Vec<f64> = mask.iter().map(|&i| times[i]).collect();
    let fs: Vec<f64> = mask.iter().map(|&i| freq[i]).collect();
    let scale = 1e-9 * fs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (tc, band) = if steady.abs() > scale {
        (convergence_time(&ts, &fs, steady)?, BandKind::Relative)
    } else {
        (convergence_time_peak_band(&ts, &fs, steady)?, BandKind::PeakFallback)
    };
    let rmse_pu = if noisy.is_empty() { 0.0 } else { rmse(noisy, bus, steady, window)? };
    Ok(MetricsReport {
        steady_state_error_hz: steady * hz_per_unit,
        convergence_time_s: tc.map(|t| t - t_ref),
        band,
        rmse_hz: rmse_pu * hz_per_unit,
        window,
        n_realizations: noisy.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunedGains {
    /// Leaky DC gains `K_i⁻¹`.
    pub k_inv: Vec<f64>,
    /// `K_i`; infinite where `K_i⁻¹ = 0`.
    pub k: Vec<f64>,
    /// Lower bound `|ΣP*|/ε − ΣD` on `ΣK⁻¹`.
    pub bound: f64,
    /// False when the bound is non-positive and no secondary control is needed.
    pub bound_active: bool,
}

/// Sets `ΣK⁻¹` to its band lower bound and apportions it as `K_i⁻¹ ∝ 1/a_i`,
/// so the leaky steady state shares power in cost-optimal ratios.
pub fn tune_gains(cost: &[f64], eps: f64, worst_sum_pstar: f64, sum_damping: f64) -> Result<TunedGains> {
    if !(eps > 0.0) {
        return Err(invalid("ε must be > 0"));
    }
    if cost.is_empty() || cost.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(invalid("cost ratios must be positive"));
    }
    let bound = worst_sum_pstar.abs() / eps - sum_damping;
    if !(bound > 0.0) {
        return Ok(TunedGains {
            k_inv: vec![0.0; cost.len()],
            k: vec![f64::INFINITY; cost.len()],
            bound,
            bound_active: false,
        });
    }
    let total: f64 = cost.iter().map(|a| 1.0 / a).sum();
    let k_inv: Vec<f64> = cost.iter().map(|a| bound * (1.0 / a) / total).collect();
    let k = k_inv.iter().map(|x| 1.0 / x).collect();
    Ok(TunedGains { k_inv, k, bound, bound_active: true })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// `max{(1/α)ln(αc/(γa)), 0}`; `None` when a fitted coefficient is not positive.
    pub tau_star: Option<f64>,
}

impl TuningFit {
    pub fn conv_time(&self, tau: f64) -> f64 {
        self.a * tau + self.b
    }

    pub fn rmse(&self, tau: f64) -> f64 {
        self.c * (-self.alpha * tau).exp() + self.d
    }

    /// `γ·T_conv(τ) + f_RMSE(τ)` under the fitted models.
    pub fn criterion(&self, tau: f64) -> f64 {
        self.gamma * self.conv_time(tau) + self.rmse(tau)
    }
}

/// Closed-form minimizer of `γ(aτ + b) + ce^{−ατ} + d` over `τ ≥ 0`.
pub fn tau_star(a: f64, c: f64, alpha: f64, gamma: f64) -> Option<f64> {
    if !(a > 0.0 && c > 0.0 && alpha > 0.0 && gamma > 0.0) {
        return None;
    }
    Some(((alpha * c / (gamma * a)).ln() / alpha).max(0.0))
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares `(c, d, sse)` of `y ≈ c·e^{−αx} + d` for fixed `α`.
fn exp_coeffs(x: &[f64], y: &[f64], alpha: f64) -> (f64, f64, f64) {
    let e: Vec<f64> = x.iter().map(|t| (-alpha * t).exp()).collect();
    let (c, d) = linear_fit(&e, y);
    let sse = e.iter().zip(y).map(|(ei, yi)| (c * ei + d - yi).powi(2)).sum();
    (c, d, sse)
}

/// Fits `T_conv = aτ + b` and `f_RMSE = ce^{−ατ} + d`, then evaluates `τ*`.
/// The exponential starts from a log-linear fit with `d` at the tail mean and
/// is refined over `α` with `c`, `d` eliminated by linear least squares.
pub fn fit_and_select_tau(samples: &[(f64, f64, f64)], gamma: f64) -> Result<TuningFit> {
    if samples.len() < 4 {
        return Err(invalid("need at least 4 τ samples"));
    }
    let mut s = samples.to_vec();
    s.sort_by(|p, q| p.0.total_cmp(&q.0));
    let tau: Vec<f64> = s.iter().map(|p| p.0).collect();
    let tconv: Vec<f64> = s.iter().map(|p| p.1).collect();
    let rm: Vec<f64> = s.iter().map(|p| p.2).collect();
    if !(tau[0] > 0.0 && tau[tau.len() - 1] >= 10.0 * tau[0]) {
        return Err(invalid("τ samples must be positive and span a decade"));
    }
    let (a, b) = linear_fit(&tau, &tconv);

    let tail = (s.len() / 4).max(1);
    let d0 = rm[rm.len() - tail..].iter().sum::<f64>() / tail as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = tau
        .iter()
        .zip(&rm)
        .filter(|(_, r)| **r > d0)
        .map(|(t, r)| (*t, (r - d0).ln()))
        .unzip();
    let span = tau[tau.len() - 1] - tau[0];
    let alpha0 = if lx.len() >= 2 {
        let (slope, _) = linear_fit(&lx, &ly);
        if slope < 0.0 {
            -slope
        } else {
            1.0 / span
        }
    } else {
        1.0 / span
    };
    let (la, lb) = ((alpha0 * 1e-3).ln(), (alpha0 * 1e3).ln());
    let (log_alpha, _) = golden_section_min(|la| exp_coeffs(&tau, &rm, la.exp()).2, la, lb, 1e-12);
    let alpha = log_alpha.exp();
    let (c, d, _) = exp_coeffs(&tau, &rm, alpha);
    Ok(TuningFit {
        a,
        b,
        c,
        d,
        alpha,
        gamma,
        tau_star: tau_star(a, c, alpha, gamma),
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("spearman samples", x.len(), y.len())?;
    if x.len() < 2 {
        return Err(invalid("need at least two points"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepMetricsRow {
    pub value: f64,
    pub steady_error_hz: f64,
    pub t_conv_s: Option<f64>,
    pub rmse_hz: f64,
}

/// Writes `k_or_tau,steady_error_hz,t_conv_s,rmse_hz`; non-converged runs
/// leave `t_conv_s` empty.
pub fn write_sweep_metrics_csv<W: Write>(out: W, rows: &[SweepMetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k_or_tau", "steady_error_hz", "t_conv_s", "rmse_hz"])?;
    for r in rows {
        w.write_record([
            fmt_sig(r.value),
            fmt_sig(r.steady_error_hz),
            r.t_conv_s.map(fmt_sig).unwrap_or_default(),
            fmt_sig(r.rmse_hz),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Experiment runs over a scenario and their artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::controllers::{Controller, ControllerRegistry, LeakyIntegral};
use crate::dynamics::{integrate, integrate_with, ClosedLoopState, Frame, MachineParams, NoiseDistribution, NoiseSpec, Trajectory};
use crate::error::{GridError, Result};
use crate::linear_analysis::{h2_closed_form, h2_numeric, laplacian_spectrum, linearize, write_h2_sweep_csv, H2Method, H2SweepRow, HomogeneousParams, NoiseIntensity};
use crate::lyapunov_cert::{certify, CertificateParams};
use crate::metrics::{self, fit_and_select_tau, tune_gains, write_sweep_metrics_csv, SweepMetricsRow, TuningFit};
use crate::report::fmt_sig;
use crate::scenario::{BusValues, ControllerSpec, Scenario, SweepConfig, SweepParameter};
use crate::steady_state::{solve_synchronous, write_steady_csv, NewtonOptions, SteadyTarget, SynchronousSolution};
use crate::svg::LinePlot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Steady,
    H2Sweep,
    Certify,
    Tune,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Steady => "steady",
            Self::H2Sweep => "h2sweep",
            Self::Certify => "certify",
            Self::Tune => "tune",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Self::Simulate,
            "steady" => Self::Steady,
            "h2sweep" => Self::H2Sweep,
            "certify" => Self::Certify,
            "tune" => Self::Tune,
            other => return Err(GridError::InvalidParameter(format!("unknown mode `{other}`"))),
        })
    }
}

/// Command-line overrides of scenario settings.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Replaces the parameter and grid of the scenario sweep (simulate) or the
    /// `k` grid of the H2 sweep.
    pub sweep: Option<(SweepParameter, Vec<f64>)>,
    pub out_dir: Option<PathBuf>,
}

fn context(mode: Mode, e: GridError) -> GridError {
    match e {
        GridError::Scenario(m) => GridError::Scenario(format!("{}: {m}", mode.name())),
        GridError::InvalidParameter(m) => GridError::InvalidParameter(format!("{}: {m}", mode.name())),
        GridError::Numerical(m) => GridError::Numerical(format!("{}: {m}", mode.name())),
        GridError::Certification(m) => GridError::Certification(format!("{}: {m}", mode.name())),
        other => other,
    }
}

/// Runs `mode` and returns the written artifact paths.
pub fn run_experiment(sc: &Scenario, mode: Mode, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let out = opts.out_dir.clone().unwrap_or_else(|| sc.output_dir());
    fs::create_dir_all(&out)?;
    let seed = opts.seed.unwrap_or(sc.spec.seed);
    let res = match mode {
        Mode::Simulate => simulate(sc, &out, seed, opts),
        Mode::Steady => steady(sc, &out),
        Mode::H2Sweep => h2sweep(sc, &out, opts),
        Mode::Certify => certify_mode(sc, &out),
        Mode::Tune => tune(sc, &out, seed),
    };
    res.map_err(|e| context(mode, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Synchronous solution of the controlled system for injections `pstar`.
/// `None` when the steady state depends on the initial condition.
pub fn steady_solution(net_sc: &Scenario, ctrl: &dyn Controller, pstar: &[f64]) -> Result<Option<SynchronousSolution>> {
    let params = MachineParams::new(net_sc.params.inertia.clone(), net_sc.params.damping.clone(), pstar.to_vec())?;
    let total: f64 = pstar.iter().sum();
    let target = match SteadyTarget::for_controller(ctrl, &params, total) {
        Ok(t) => t,
        Err(_) if total.abs() <= 1e-12 => SteadyTarget::open_loop(net_sc.n_buses()),
        Err(_) => return Ok(None),
    };
    solve_synchronous(&net_sc.net, &params, &target, NewtonOptions::default()).map(Some)
}

/// Pre-event synchronous state of the closed loop in absolute angles.
pub fn initial_state(sc: &Scenario, ctrl: &dyn Controller) -> Result<ClosedLoopState> {
    let sol = steady_solution(sc, ctrl, &sc.params.injection)?.ok_or_else(|| {
        GridError::Scenario("pre-event injections are unbalanced and the controller has no unique steady state".into())
    })?;
    Ok(sol.as_state(ctrl, Frame::Absolute))
}

/// Nominal post-event frequency: the synchronous frequency, or 0 for
/// controllers with integral action whose steady state is not unique.
pub fn post_event_frequency(sc: &Scenario, ctrl: &dyn Controller) -> Result<f64> {
    Ok(steady_solution(sc, ctrl, &sc.final_injection()?)?.map_or(0.0, |s| s.omega_sync))
}

fn event_time(sc: &Scenario) -> Result<f64> {
    Ok(sc.events()?.first_time().unwrap_or(0.0))
}

/// Controller spec with a swept parameter applied.
pub fn swept_controller(sc: &Scenario, base: &ControllerSpec, parameter: SweepParameter, value: f64) -> Result<ControllerSpec> {
    let mut spec = base.clone();
    let buses = sc.select(&base.buses)?;
    match parameter {
        SweepParameter::K => {
            let k = sc.resolve(
                base.params
                    .get("k")
                    .ok_or_else(|| GridError::Scenario(format!("controller `{}` has no `k`", base.label)))?,
                &buses,
            )?;
            let kmin = k.iter().copied().fold(f64::INFINITY, f64::min);
            if !(kmin > 0.0) {
                return Err(GridError::Scenario("swept `k` must be positive".into()));
            }
            spec.params.insert("k".into(), BusValues::PerBus(k.iter().map(|x| x / kmin * value).collect()));
        }
        SweepParameter::Tau => {
            spec.params.insert("t".into(), BusValues::Uniform(value));
        }
    }
    Ok(spec)
}

/// Bus and window used for metrics; the first generator and the last 20 s by default.
fn metrics_target(sc: &Scenario) -> Result<(usize, (f64, f64))> {
    match &sc.spec.metrics {
        Some(m) => Ok((sc.index_of(m.bus)?, m.window)),
        None => Ok((
            sc.generators.first().copied().unwrap_or(0),
            ((sc.spec.horizon - 20.0).max(0.0), sc.spec.horizon),
        )),
    }
}

/// RMSE (pu) of bus frequency against `reference` over `window` for one run,
/// without storing the trajectory. `reference` holds one value per recorded
/// sample inside the window.
pub fn run_rmse(
    sc: &Scenario,
    ctrl: &dyn Controller,
    x0: &ClosedLoopState,
    noise: &NoiseSpec,
    bus: usize,
    reference: &[f64],
    window: (f64, f64),
) -> Result<f64> {
    let system = sc.closed_loop(ctrl)?;
    let mut cfg = sc.sim_config()?;
    cfg.t_end = window.1.min(cfg.t_end);
    let tol = 1e-9 * window.1.abs().max(1.0);
    let (mut acc, mut cnt) = (0.0, 0usize);
    integrate_with(&system, noise, &sc.events()?, x0, &cfg, |s| {
        let t = s.state.time;
        if t >= window.0 - tol && t <= window.1 + tol {
            if let Some(r) = reference.get(cnt) {
                let e = s.state.freqs[bus] - r;
                acc += e * e;
            }
            cnt += 1;
        }
    })?;
    if cnt == 0 || cnt != reference.len() {
        return Err(GridError::InvalidParameter(format!(
            "RMSE window has {cnt} samples but the reference has {}",
            reference.len()
        )));
    }
    Ok((acc / cnt as f64).sqrt())
}

/// Noise-free run of a controller from its pre-event steady state to `t_end`.
pub fn nominal_run_until(sc: &Scenario, ctrl: &dyn Controller, t_end: f64) -> Result<Trajectory> {
    let system = sc.closed_loop(ctrl)?;
    let mut cfg = sc.sim_config()?;
    cfg.t_end = t_end;
    integrate(&system, &NoiseSpec::none(sc.n_buses()), &sc.events()?, &initial_state(sc, ctrl)?, &cfg)
}

/// Noise-free run of a controller from its pre-event steady state.
pub fn nominal_run(sc: &Scenario, ctrl: &dyn Controller) -> Result<Trajectory> {
    nominal_run_until(sc, ctrl, sc.spec.horizon)
}

/// Steady error and convergence time from a noise-free run to the
/// convergence horizon; RMSE averaged over `realizations` noisy runs (streams
/// `0..realizations`), measured against the noise-free run at the same instants
/// so that transients left in the window do not count as noise.
pub fn evaluate_controller(
    sc: &Scenario,
    ctrl: &dyn Controller,
    seed: u64,
    realizations: usize,
    distribution: Option<NoiseDistribution>,
) -> Result<metrics::MetricsReport> {
    let (bus, window) = metrics_target(sc)?;
    let steady = post_event_frequency(sc, ctrl)?;
    let nominal = nominal_run_until(sc, ctrl, sc.convergence_horizon())?;
    let t_ref = event_time(sc)?;
    let hz = sc.hz_per_unit();
    let mut report = metrics::evaluate(&nominal, &[], bus, steady, t_ref, window, hz)?;
    report.steady_state_error_hz = nominal.terminal().state.freqs[bus] * hz;
    let tol = 1e-9 * window.1.abs().max(1.0);
    let reference: Vec<f64> = nominal
        .samples()
        .iter()
        .filter(|s| s.state.time >= window.0 - tol && s.state.time <= window.1 + tol)
        .map(|s| s.state.freqs[bus])
        .collect();
    let x0 = initial_state(sc, ctrl)?;
    let per: Vec<f64> = (0..realizations as u64)
        .into_par_iter()
        .map(|r| {
            let noise = sc.noise_spec(seed, r, distribution)?;
            run_rmse(sc, ctrl, &x0, &noise, bus, &reference, window)
        })
        .collect::<Result<_>>()?;
    report.rmse_hz = per.iter().sum::<f64>() / per.len().max(1) as f64 * hz;
    report.n_realizations = realizations;
    Ok(report)
}

/// Metrics over a parameter grid with common noise realizations at every point.
pub fn run_sweep(sc: &Scenario, sweep: &SweepConfig, seed: u64, realizations: usize) -> Result<Vec<SweepMetricsRow>> {
    let registry = ControllerRegistry::with_builtins();
    let base = sc.controller_spec(&sweep.controller)?;
    sweep
        .values
        .iter()
        .map(|&v| {
            let spec = swept_controller(sc, base, sweep.parameter, v)?;
            let ctrl = sc.build_controller(&spec, &registry)?;
            let r = evaluate_controller(sc, ctrl.as_ref(), seed, realizations, Some(sweep.distribution))?;
            Ok(SweepMetricsRow {
                value: v,
                steady_error_hz: r.steady_state_error_hz,
                t_conv_s: r.convergence_time_s,
                rmse_hz: r.rmse_hz,
            })
        })
        .collect()
}

fn simulate(sc: &Scenario, out: &Path, seed: u64, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let registry = ControllerRegistry::with_builtins();
    let mut written = Vec::new();
    let (bus, window) = metrics_target(sc)?;
    let gens = &sc.generators;
    let mut metric_rows = Vec::new();
    for spec in &sc.spec.controllers {
        let ctrl = sc.build_controller(spec, &registry)?;
        let system = sc.closed_loop(ctrl.as_ref())?;
        let noise = sc.noise_spec(seed, 0, None)?;
        let traj = integrate(&system, &noise, &sc.events()?, &initial_state(sc, ctrl.as_ref())?, &sc.sim_config()?)?;

        let path = out.join(format!("{}_timeseries.csv", spec.label));
        let mut w = create(&path)?;
        traj.write_csv_with_ids(&mut w, &sc.bus_ids)?;
        w.flush()?;
        written.push(path);

        let times = traj.times();
        let mut fplot = LinePlot::new(&format!("{}: frequency", spec.label), "time (s)", "frequency deviation (Hz)");
        let mut pplot = LinePlot::new(&format!("{}: control power", spec.label), "time (s)", "u (pu)");
        for (g, &b) in gens.iter().enumerate() {
            let f = traj.frequency(b).iter().map(|w| w * sc.hz_per_unit()).collect();
            fplot = fplot.with_series(&format!("G{} (bus {})", g + 1, sc.bus_ids[b]), times.clone(), f);
            pplot = pplot.with_series(&format!("G{}", g + 1), times.clone(), traj.injection(b));
        }
        for (name, plot) in [("frequency", fplot), ("power", pplot)] {
            let path = out.join(format!("{}_{name}.svg", spec.label));
            write_text(&path, &plot.to_svg())?;
            written.push(path);
        }

        let report = evaluate_controller(sc, ctrl.as_ref(), seed, sc.spec.realizations, None)?;
        metric_rows.push((spec.label.clone(), report));
    }

    let path = out.join("metrics.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["controller", "bus", "steady_error_hz", "t_conv_s", "band", "rmse_hz", "window_start_s", "window_end_s", "realizations"])?;
    for (label, r) in &metric_rows {
        w.write_record([
            label.clone(),
            sc.bus_ids[bus].to_string(),
            fmt_sig(r.steady_state_error_hz),
            r.convergence_time_s.map(fmt_sig).unwrap_or_default(),
            match r.band {
                metrics::BandKind::Relative => "relative".into(),
                metrics::BandKind::PeakFallback => "peak_fallback".into(),
            },
            fmt_sig(r.rmse_hz),
            fmt_sig(window.0),
            fmt_sig(window.1),
            r.n_realizations.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let sweep = match (&opts.sweep, &sc.spec.sweep) {
        (Some((p, v)), Some(s)) => Some(SweepConfig {
            parameter: *p,
            values: v.clone(),
            ..s.clone()
        }),
        (Some(_), None) => return Err(GridError::Scenario("`--sweep` needs a `sweep` section naming the controller".into())),
        (None, s) => s.clone(),
    };
    if let Some(sweep) = sweep {
        let rows = run_sweep(sc, &sweep, seed, sc.spec.realizations)?;
        written.extend(write_sweep_artifacts(out, &sweep, &rows)?);
    }
    Ok(written)
}

/// Writes `sweep_<param>.csv` and one SVG per metric.
pub fn write_sweep_artifacts(out: &Path, sweep: &SweepConfig, rows: &[SweepMetricsRow]) -> Result<Vec<PathBuf>> {
    let name = sweep.parameter.name();
    let path = out.join(format!("sweep_{name}.csv"));
    let mut w = create(&path)?;
    write_sweep_metrics_csv(&mut w, rows)?;
    w.flush()?;
    let mut written = vec![path];
    let x: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let series: [(&str, &str, Vec<f64>); 3] = [
        ("steady_error", "steady-state error (Hz)", rows.iter().map(|r| r.steady_error_hz).collect()),
        ("t_conv", "convergence time (s)", rows.iter().map(|r| r.t_conv_s.unwrap_or(f64::NAN)).collect()),
        ("rmse", "RMSE (Hz)", rows.iter().map(|r| r.rmse_hz).collect()),
    ];
    for (file, label, y) in series {
        let plot = LinePlot::new(&format!("{label} vs {name}"), name, label).with_series(label, x.clone(), y);
        let path = out.join(format!("sweep_{name}_{file}.svg"));
        write_text(&path, &plot.to_svg())?;
        written.push(path);
    }
    Ok(written)
}

fn steady(sc: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let registry = ControllerRegistry::with_builtins();
    let pstar = sc.final_injection()?;
    let mut written = Vec::new();
    let summary_path = out.join("steady_summary.csv");
    let mut summary = csv::Writer::from_writer(create(&summary_path)?);
    summary.write_record(["controller", "omega_sync_pu", "omega_sync_hz", "newton_iterations", "residual"])?;
    for spec in &sc.spec.controllers {
        let ctrl = sc.build_controller(spec, &registry)?;
        let Some(sol) = steady_solution(sc, ctrl.as_ref(), &pstar)? else {
            summary.write_record([spec.label.clone(), "0".into(), "0".into(), String::new(), String::new()])?;
            continue;
        };
        let mut cost = vec![1.0; sc.n_buses()];
        for (k, &b) in ctrl.buses().iter().enumerate() {
            cost[b] = sc.controller_cost(spec)?[k];
        }
        let path = out.join(format!("steady_{}.csv", spec.label));
        let mut w = create(&path)?;
        write_steady_csv(&mut w, &sc.bus_ids, &sol, &cost)?;
        w.flush()?;
        written.push(path);
        summary.write_record([
            spec.label.clone(),
            fmt_sig(sol.omega_sync / sc.freq_scale()),
            fmt_sig(sol.omega_sync * sc.hz_per_unit()),
            sol.iterations.to_string(),
            fmt_sig(sol.residual),
        ])?;
    }
    summary.flush()?;
    written.push(summary_path);
    Ok(written)
}

fn h2sweep(sc: &Scenario, out: &Path, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let cfg = sc
        .spec
        .h2
        .as_ref()
        .ok_or_else(|| GridError::Scenario("scenario has no `h2` section".into()))?;
    let ks = match &opts.sweep {
        Some((SweepParameter::K, v)) => v.clone(),
        Some((SweepParameter::Tau, _)) => return Err(GridError::Scenario("the H2 sweep runs over k".into())),
        None => cfg.k_values.clone(),
    };
    let eigs = laplacian_spectrum(sc.net.laplacian());
    let n = sc.n_buses();
    let mut rows = Vec::new();
    for &k in &ks {
        let p = HomogeneousParams {
            m: cfg.m,
            d: cfg.d,
            tau: cfg.tau,
            k,
            sigma_zeta: cfg.sigma_zeta,
            sigma_eta: cfg.sigma_eta,
        };
        let rep = h2_closed_form(&p, &eigs)?;
        rows.push(H2SweepRow {
            k,
            tau: cfg.tau,
            split: crate::linear_analysis::H2Split {
                total: rep.total,
                power_channel: rep.power_channel,
                noise_channel: rep.noise_channel,
            },
            method: H2Method::ClosedForm,
        });
        if cfg.cross_check {
            let params = MachineParams::homogeneous(n, cfg.m, cfg.d, vec![0.0; n])?;
            let ctrl = LeakyIntegral::new((0..n).collect(), vec![k; n], vec![cfg.tau; n])?;
            let sys = linearize(
                &sc.net,
                &params,
                Some(&ctrl as &dyn Controller),
                &vec![0.0; n],
                &NoiseIntensity::uniform(n, cfg.sigma_zeta, cfg.sigma_eta),
            )?;
            rows.push(H2SweepRow {
                k,
                tau: cfg.tau,
                split: h2_numeric(&sys)?,
                method: H2Method::LyapunovNumeric,
            });
        }
    }
    let path = out.join("h2_sweep.csv");
    let mut w = create(&path)?;
    write_h2_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    let closed: Vec<&H2SweepRow> = rows.iter().filter(|r| r.method == H2Method::ClosedForm).collect();
    let x: Vec<f64> = closed.iter().map(|r| r.k).collect();
    let plot = LinePlot::new("squared H2 norm vs k", "k", "squared H2 norm")
        .with_series("total", x.clone(), closed.iter().map(|r| r.split.total).collect())
        .with_series("power channel", x.clone(), closed.iter().map(|r| r.split.power_channel).collect())
        .with_series("noise channel", x, closed.iter().map(|r| r.split.noise_channel).collect());
    let svg = out.join("h2_sweep.svg");
    write_text(&svg, &plot.to_svg())?;
    Ok(vec![path, svg])
}

fn certify_mode(sc: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = sc
        .spec
        .certify
        .as_ref()
        .ok_or_else(|| GridError::Scenario("scenario has no `certify` section".into()))?;
    let spec = sc.controller_spec(&cfg.controller)?;
    let p = sc.controller_params(spec)?;
    let ctrl = LeakyIntegral::new(p.buses.clone(), p.vector("k")?, p.vector("t")?)?;
    let params = MachineParams::new(sc.params.inertia.clone(), sc.params.damping.clone(), sc.final_injection()?)?;
    let target = SteadyTarget::for_controller(&ctrl, &params, params.total_injection())?;
    let eq = solve_synchronous(&sc.net, &params, &target, NewtonOptions::default())?;
    let cert = certify(
        &sc.net,
        &params,
        &ctrl,
        &eq,
        &CertificateParams {
            epsilon: cfg.epsilon,
            mu: cfg.mu,
            rho: cfg.rho,
            xi: cfg.xi,
            samples: cfg.samples,
            seed: sc.spec.seed,
        },
    )?;
    let path = out.join("certificate.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["constant", "value"])?;
    for (name, v) in cert.entries() {
        w.write_record([name.to_string(), fmt_sig(v)])?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Convergence time / RMSE samples over `taus`, fitted trade-off and `τ*`.
pub fn tau_tradeoff(sc: &Scenario, controller: &str, taus: &[f64], gamma: f64, seed: u64, realizations: usize) -> Result<(Vec<SweepMetricsRow>, TuningFit)> {
    let sweep = SweepConfig {
        parameter: SweepParameter::Tau,
        values: taus.to_vec(),
        controller: controller.to_string(),
        distribution: NoiseDistribution::Symmetric,
    };
    let rows = run_sweep(sc, &sweep, seed, realizations)?;
    let samples: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| {
            r.t_conv_s
                .map(|t| (r.value, t, r.rmse_hz))
                .ok_or_else(|| GridError::UndefinedMetric(format!("no convergence at τ = {}", r.value)))
        })
        .collect::<Result<_>>()?;
    Ok((rows, fit_and_select_tau(&samples, gamma)?))
}

fn tune(sc: &Scenario, out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let cfg = sc
        .spec
        .tune
        .as_ref()
        .ok_or_else(|| GridError::Scenario("scenario has no `tune` section".into()))?;
    let spec = sc.controller_spec(&cfg.controller)?;
    let buses = sc.select(&spec.buses)?;
    let cost = sc.controller_cost(spec)?;
    let sum_d = cfg.sum_damping.unwrap_or_else(|| sc.params.total_damping() * sc.freq_scale());
    let gains = tune_gains(&cost, cfg.epsilon, cfg.worst_sum_pstar, sum_d)?;
    let path = out.join("gains.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["bus", "cost", "k_inv", "k", "bound", "bound_active"])?;
    for (j, &b) in buses.iter().enumerate() {
        w.write_record([
            sc.bus_ids[b].to_string(),
            fmt_sig(cost[j]),
            fmt_sig(gains.k_inv[j]),
            if gains.k[j].is_finite() { fmt_sig(gains.k[j]) } else { "inf".into() },
            fmt_sig(gains.bound),
            gains.bound_active.to_string(),
        ])?;
    }
    w.flush()?;
    let mut written = vec![path];
    if !cfg.taus.is_empty() {
        let gamma = cfg.gamma.unwrap_or(1.0);
        let (rows, fit) = tau_tradeoff(sc, &cfg.controller, &cfg.taus, gamma, seed, sc.spec.realizations)?;
        let sweep = SweepConfig {
            parameter: SweepParameter::Tau,
            values: cfg.taus.clone(),
            controller: cfg.controller.clone(),
            distribution: NoiseDistribution::Symmetric,
        };
        written.extend(write_sweep_artifacts(out, &sweep, &rows)?);
        let path = out.join("tuning_fit.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["a", "b", "c", "d", "alpha", "gamma", "tau_star"])?;
        w.write_record([
            fmt_sig(fit.a),
            fmt_sig(fit.b),
            fmt_sig(fit.c),
            fmt_sig(fit.d),
            fmt_sig(fit.alpha),
            fmt_sig(fit.gamma),
            fit.tau_star.map(fmt_sig).unwrap_or_default(),
        ])?;
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

//! JSON scenario files with companion network CSVs.
//!
//! Bus references in a scenario use the ids of the bus CSV; internally buses
//! are numbered by their row order. Generators are buses with positive inertia.
//!
//! Scenario and CSV values are per unit on the machine base. When
//! `frequency_base_hz` is set, frequencies are integrated in electrical rad/s:
//! with `ω₀ = 2π f_base`, inertia and damping are divided by `ω₀`, leaky gains
//! and integrator time constants multiplied by `ω₀`, droop gains divided by it,
//! and measurement noise expressed in rad/s. Steady frequencies are unchanged
//! in physical terms.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::{complete_laplacian, ring_laplacian, Controller, ControllerParams, ControllerRegistry};
use crate::dynamics::{ClosedLoop, EventSchedule, Frame, LoadModel, MachineParams, NoiseDistribution, NoiseSpec, SimulationConfig, StepEvent};
use crate::error::{GridError, Result};
use crate::metrics::NOMINAL_HZ;
use crate::network::NetworkModel;

/// Per-bus values over a bus selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BusValues {
    Uniform(f64),
    /// One value per selected bus, in selection order.
    PerBus(Vec<f64>),
    Groups(GroupValues),
}

/// Group shorthand such as `{"generators": 20, "loads": 0.1, "buses": {"39": 5}}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupValues {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads: Option<f64>,
    /// Overrides keyed by bus id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub buses: BTreeMap<String, f64>,
}

/// `"generators"`, `"loads"`, `"all"` or an explicit list of bus ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BusSelector {
    Group(String),
    Ids(Vec<usize>),
}

impl Default for BusSelector {
    fn default() -> Self {
        Self::Group("generators".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Ring,
    Complete,
}

/// Communication graph over the controller buses, in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSpec {
    pub topology: Topology,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub label: String,
    /// Registry name, e.g. `leaky_integral`.
    pub kind: String,
    #[serde(default)]
    pub buses: BusSelector,
    /// Vector parameters by key (`k`, `t`, `gain`, `cost`).
    #[serde(default)]
    pub params: BTreeMap<String, BusValues>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm: Option<CommSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub distribution: NoiseDistribution,
    /// Sample-and-hold interval (s).
    pub interval: f64,
    /// Euclidean norm (Hz) of the half-width vector over generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_hz: Option<f64>,
    /// Half-width ratios over generators in `generator_order`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    /// Explicit half-widths (pu) over all buses; excludes `norm_hz`/`ratios`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<BusValues>,
    /// Constant measurement bias (pu) over all buses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BusValues>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: f64,
    pub bus: usize,
    pub delta_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub bus: usize,
    pub window: (f64, f64),
    /// End time of the noise-free run behind steady error and convergence
    /// time; defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Scales the leaky `K` vector so its smallest entry equals the grid value.
    K,
    /// Sets every leaky time constant to the grid value.
    Tau,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::K => "k",
            Self::Tau => "tau",
        }
    }
}

/// Parses `name=start:stop:count` into an evenly spaced grid, e.g. `k=0.001:0.02:20`.
pub fn parse_sweep(arg: &str) -> Result<(SweepParameter, Vec<f64>)> {
    let bad = || scenario_err(format!("sweep `{arg}`: expected name=start:stop:count"));
    let (name, grid) = arg.split_once('=').ok_or_else(bad)?;
    let parameter = match name.trim() {
        "k" => SweepParameter::K,
        "tau" => SweepParameter::Tau,
        other => return Err(scenario_err(format!("sweep `{arg}`: unknown parameter `{other}` (k or tau)"))),
    };
    let parts: Vec<&str> = grid.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() || (n == 1 && a != b) {
        return Err(bad());
    }
    let values = if n == 1 {
        vec![a]
    } else {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    };
    Ok((parameter, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Label of the swept controller.
    pub controller: String,
    #[serde(default = "default_symmetric")]
    pub distribution: NoiseDistribution,
}

fn default_symmetric() -> NoiseDistribution {
    NoiseDistribution::Symmetric
}

/// Homogeneous parameters for the H2 sweep on the scenario's Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct H2Config {
    pub m: f64,
    pub d: f64,
    pub tau: f64,
    pub sigma_zeta: f64,
    pub sigma_eta: f64,
    pub k_values: Vec<f64>,
    /// Also evaluate each point through the Lyapunov equation.
    #[serde(default)]
    pub cross_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    /// Label of a leaky controller covering every bus.
    pub controller: String,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_rho() -> f64 {
    0.1
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    /// Label of the leaky controller whose `cost` gives the ratios.
    pub controller: String,
    /// Admissible frequency deviation (pu).
    pub epsilon: f64,
    /// Worst-case total imbalance (pu).
    pub worst_sum_pstar: f64,
    /// Total damping (pu); the scenario's `ΣD` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sum_damping: Option<f64>,
    /// Weight of convergence time against RMSE when selecting `τ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// `τ` grid for the trade-off fit; skipped when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFiles {
    /// CSV with columns `from,to,b_pu`.
    pub lines: String,
    /// CSV with columns `bus,V_pu,M_pu,D_pu,P_star_pu`.
    pub buses: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub network: NetworkFiles,
    /// Generator bus ids in naming order (G1, G2, ...); ascending ids when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generator_order: Vec<usize>,
    /// Integrate in electrical rad/s of this base frequency instead of per unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_base_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "is_default_load_model")]
    pub load_model: LoadModel,
    /// Overrides the CSV damping column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<BusValues>,
    /// Overrides the CSV inertia column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<BusValues>,
    #[serde(default)]
    pub controllers: Vec<ControllerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    pub horizon: f64,
    pub dt: f64,
    pub record_interval: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<H2Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_realizations() -> usize {
    1
}

fn is_default_load_model(m: &LoadModel) -> bool {
    *m == LoadModel::Dynamic
}

#[derive(Debug, Deserialize)]
struct LineRecord {
    from: usize,
    to: usize,
    b_pu: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Deserialize)]
struct BusRecord {
    bus: usize,
    V_pu: f64,
    M_pu: f64,
    D_pu: f64,
    P_star_pu: f64,
}

fn scenario_err(msg: impl Into<String>) -> GridError {
    GridError::Scenario(msg.into())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| scenario_err(format!("{}: {e}", path.display())))?;
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file)
        .deserialize()
        .map(|r| r.map_err(|e| scenario_err(format!("{}: {e}", path.display()))))
        .collect()
}

/// A validated scenario with its network loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub base_dir: PathBuf,
    pub net: NetworkModel,
    pub params: MachineParams,
    /// External id of each internal bus.
    pub bus_ids: Vec<usize>,
    /// Internal indices of the generators in naming order.
    pub generators: Vec<usize>,
}

/// Reads and validates a scenario; relative CSV paths resolve against the
/// scenario's directory.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| scenario_err(format!("{}: {e}", path.display())))?;
    let spec: ScenarioSpec =
        serde_json::from_str(&text).map_err(|e| scenario_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Scenario::from_spec(spec, base)
}

/// Writes `spec` as pretty JSON.
pub fn save_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    serde_json::to_writer_pretty(file, spec)?;
    Ok(())
}

impl Scenario {
    pub fn from_spec(spec: ScenarioSpec, base_dir: PathBuf) -> Result<Self> {
        let buses: Vec<BusRecord> = read_csv(&base_dir.join(&spec.network.buses))?;
        let lines: Vec<LineRecord> = read_csv(&base_dir.join(&spec.network.lines))?;
        if buses.is_empty() {
            return Err(scenario_err("bus table is empty"));
        }
        let bus_ids: Vec<usize> = buses.iter().map(|b| b.bus).collect();
        let index = |id: usize| -> Result<usize> {
            bus_ids
                .iter()
                .position(|&b| b == id)
                .ok_or_else(|| scenario_err(format!("unknown bus id {id}")))
        };
        for (i, id) in bus_ids.iter().enumerate() {
            if bus_ids[..i].contains(id) {
                return Err(scenario_err(format!("duplicate bus id {id}")));
            }
        }
        let mut edges = Vec::with_capacity(lines.len());
        for l in &lines {
            edges.push((index(l.from)?, index(l.to)?, l.b_pu));
        }
        let voltage = buses.iter().map(|b| b.V_pu).collect();
        let net = NetworkModel::from_susceptances(buses.len(), &edges, voltage)?;
        let inertia: Vec<f64> = buses.iter().map(|b| b.M_pu).collect();
        let gens_csv: Vec<usize> = (0..buses.len()).filter(|&i| inertia[i] > 0.0).collect();
        let mut sc = Self {
            params: MachineParams::new(
                inertia,
                buses.iter().map(|b| b.D_pu).collect(),
                buses.iter().map(|b| b.P_star_pu).collect(),
            )?,
            spec,
            base_dir,
            net,
            bus_ids,
            generators: gens_csv,
        };
        if let Some(m) = sc.spec.inertia.clone() {
            let all = sc.select(&BusSelector::Group("all".into()))?;
            sc.params.inertia = sc.resolve(&m, &all)?;
            sc.generators = (0..sc.n_buses()).filter(|&i| sc.params.inertia[i] > 0.0).collect();
        }
        if let Some(d) = sc.spec.damping.clone() {
            let all = sc.select(&BusSelector::Group("all".into()))?;
            sc.params.damping = sc.resolve(&d, &all)?;
        }
        if let Some(f) = sc.spec.frequency_base_hz {
            if !(f > 0.0 && f.is_finite()) {
                return Err(scenario_err("frequency_base_hz must be > 0"));
            }
        }
        let s = sc.freq_scale();
        sc.params = MachineParams::new(
            sc.params.inertia.iter().map(|m| m / s).collect(),
            sc.params.damping.iter().map(|d| d / s).collect(),
            sc.params.injection.clone(),
        )?;
        if !sc.spec.generator_order.is_empty() {
            let order = sc.spec.generator_order.iter().map(|&id| sc.index_of(id)).collect::<Result<Vec<_>>>()?;
            let mut sorted = order.clone();
            sorted.sort_unstable();
            let mut gens = sc.generators.clone();
            gens.sort_unstable();
            if sorted != gens {
                return Err(scenario_err("generator_order must list every generator exactly once"));
            }
            sc.generators = order;
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn n_buses(&self) -> usize {
        self.bus_ids.len()
    }

    /// Internal frequency units per pu: `2π f_base` in rad/s mode, else 1.
    pub fn freq_scale(&self) -> f64 {
        self.spec.frequency_base_hz.map_or(1.0, |f| 2.0 * std::f64::consts::PI * f)
    }

    /// Hz per internal frequency unit.
    pub fn hz_per_unit(&self) -> f64 {
        match self.spec.frequency_base_hz {
            Some(_) => 0.5 / std::f64::consts::PI,
            None => NOMINAL_HZ,
        }
    }

    /// Closed loop of `ctrl` on this scenario's network in absolute angles.
    pub fn closed_loop<'a>(&'a self, ctrl: &'a dyn Controller) -> Result<ClosedLoop<'a>> {
        ClosedLoop::new(&self.net, &self.params, ctrl, Frame::Absolute)?.with_load_model(self.spec.load_model)
    }

    pub fn index_of(&self, id: usize) -> Result<usize> {
        self.bus_ids
            .iter()
            .position(|&b| b == id)
            .ok_or_else(|| scenario_err(format!("unknown bus id {id}")))
    }

    pub fn is_generator(&self, i: usize) -> bool {
        self.generators.contains(&i)
    }

    /// Internal indices of a selection; generators come in naming order.
    pub fn select(&self, sel: &BusSelector) -> Result<Vec<usize>> {
        match sel {
            BusSelector::Group(g) => match g.as_str() {
                "generators" => Ok(self.generators.clone()),
                "loads" => Ok((0..self.n_buses()).filter(|&i| !self.is_generator(i)).collect()),
                "all" => Ok((0..self.n_buses()).collect()),
                other => Err(scenario_err(format!("unknown bus group `{other}`"))),
            },
            BusSelector::Ids(ids) => ids.iter().map(|&id| self.index_of(id)).collect(),
        }
    }

    /// Expands `values` over the selected buses.
    pub fn resolve(&self, values: &BusValues, sel: &[usize]) -> Result<Vec<f64>> {
        match values {
            BusValues::Uniform(v) => Ok(vec![*v; sel.len()]),
            BusValues::PerBus(v) => {
                if v.len() != sel.len() {
                    return Err(scenario_err(format!("expected {} per-bus values, got {}", sel.len(), v.len())));
                }
                Ok(v.clone())
            }
            BusValues::Groups(g) => {
                for key in g.buses.keys() {
                    let id: usize = key.parse().map_err(|_| scenario_err(format!("bus key `{key}` is not an id")))?;
                    let i = self.index_of(id)?;
                    if !sel.contains(&i) {
                        return Err(scenario_err(format!("bus {id} is outside the selection")));
                    }
                }
                sel.iter()
                    .map(|&i| {
                        let id = self.bus_ids[i];
                        if let Some(v) = g.buses.get(&id.to_string()) {
                            return Ok(*v);
                        }
                        let group = if self.is_generator(i) { g.generators } else { g.loads };
                        group.ok_or_else(|| scenario_err(format!("no value for bus {id}")))
                    })
                    .collect()
            }
        }
    }

    pub fn controller_spec(&self, label: &str) -> Result<&ControllerSpec> {
        self.spec
            .controllers
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| scenario_err(format!("no controller labelled `{label}`")))
    }

    /// Registry parameters for a controller spec.
    pub fn controller_params(&self, c: &ControllerSpec) -> Result<ControllerParams> {
        let buses = self.select(&c.buses)?;
        let s = self.freq_scale();
        let mut p = ControllerParams::new(buses.clone());
        for (key, v) in &c.params {
            let factor = match key.as_str() {
                "k" | "t" => s,
                "gain" => 1.0 / s,
                _ => 1.0,
            };
            p = p.with_vector(key, self.resolve(v, &buses)?.iter().map(|x| x * factor).collect());
        }
        if let Some(comm) = &c.comm {
            let l = match comm.topology {
                Topology::Ring => ring_laplacian(buses.len(), comm.weight),
                Topology::Complete => complete_laplacian(buses.len(), comm.weight),
            };
            p = p.with_matrix("comm", l * s);
        }
        Ok(p)
    }

    pub fn build_controller(&self, c: &ControllerSpec, registry: &ControllerRegistry) -> Result<Box<dyn Controller>> {
        let p = self.controller_params(c)?;
        registry
            .build(&c.kind, &p)
            .map_err(|e| scenario_err(format!("controller `{}`: {e}", c.label)))
    }

    /// Cost coefficients of a controller (ones when not given), per controller bus.
    pub fn controller_cost(&self, c: &ControllerSpec) -> Result<Vec<f64>> {
        let buses = self.select(&c.buses)?;
        match c.params.get("cost") {
            Some(v) => self.resolve(v, &buses),
            None => Ok(vec![1.0; buses.len()]),
        }
    }

    /// Noise half-widths (internal units) over all buses.
    pub fn noise_half_width(&self) -> Result<Vec<f64>> {
        let n = self.n_buses();
        let Some(cfg) = &self.spec.noise else {
            return Ok(vec![0.0; n]);
        };
        match (&cfg.half_width, cfg.norm_hz, &cfg.ratios) {
            (Some(hw), None, None) => Ok(self
                .resolve(hw, &(0..n).collect::<Vec<_>>())?
                .iter()
                .map(|x| x * self.freq_scale())
                .collect()),
            (None, Some(norm), Some(r)) => {
                if r.len() != self.generators.len() {
                    return Err(scenario_err(format!(
                        "noise ratios need {} entries, got {}",
                        self.generators.len(),
                        r.len()
                    )));
                }
                let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                let mut out = vec![0.0; n];
                for (&g, &ri) in self.generators.iter().zip(r) {
                    out[g] = norm / self.hz_per_unit() * ri / rn;
                }
                Ok(out)
            }
            (None, None, None) => Ok(vec![0.0; n]),
            _ => Err(scenario_err("noise takes either `half_width` or both `norm_hz` and `ratios`")),
        }
    }

    /// Noise of realization `stream`; `distribution` overrides the configured one.
    pub fn noise_spec(&self, seed: u64, stream: u64, distribution: Option<NoiseDistribution>) -> Result<NoiseSpec> {
        let n = self.n_buses();
        let Some(cfg) = &self.spec.noise else {
            return Ok(NoiseSpec::none(n));
        };
        let mut spec = NoiseSpec::uniform(
            self.noise_half_width()?,
            distribution.unwrap_or(cfg.distribution),
            cfg.interval,
            seed,
        )
        .with_stream(stream);
        if let Some(b) = &cfg.bias {
            let s = self.freq_scale();
            spec.bias = self.resolve(b, &(0..n).collect::<Vec<_>>())?.iter().map(|x| x * s).collect();
        }
        spec.validate(n)?;
        Ok(spec)
    }

    pub fn events(&self) -> Result<EventSchedule> {
        let ev = self
            .spec
            .events
            .iter()
            .map(|e| {
                Ok(StepEvent {
                    time: e.time,
                    bus: self.index_of(e.bus)?,
                    delta_p: e.delta_p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        EventSchedule::new(ev)
    }

    pub fn sim_config(&self) -> Result<SimulationConfig> {
        SimulationConfig::new(self.spec.horizon, self.spec.dt, self.spec.record_interval)
    }

    /// End time of noise-free metric runs.
    pub fn convergence_horizon(&self) -> f64 {
        self.spec.metrics.and_then(|m| m.convergence_horizon).unwrap_or(self.spec.horizon)
    }

    /// Injections after all scheduled events.
    pub fn final_injection(&self) -> Result<Vec<f64>> {
        Ok(self.events()?.final_injection(&self.params.injection))
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.spec.output_dir {
            Some(d) => self.base_dir.join(d),
            None => self.base_dir.join("out"),
        }
    }

    fn validate(&self) -> Result<()> {
        let s = &self.spec;
        let cfg = self.sim_config()?;
        let divides = |a: f64, b: f64| {
            let r = a / b;
            (r - r.round()).abs() < 1e-9 * r.max(1.0) && r.round() >= 1.0
        };
        if !divides(cfg.record_interval, cfg.dt) {
            return Err(scenario_err(format!("dt {} does not divide record_interval {}", cfg.dt, cfg.record_interval)));
        }
        if let Some(n) = &s.noise {
            if !(n.interval > 0.0) || !divides(n.interval, cfg.dt) {
                return Err(scenario_err(format!("dt {} does not divide noise interval {}", cfg.dt, n.interval)));
            }
            self.noise_spec(s.seed, 0, None)?;
        }
        for e in &s.events {
            if !(e.time >= 0.0 && e.time <= s.horizon) || !e.delta_p.is_finite() {
                return Err(scenario_err(format!("event at bus {} outside horizon or non-finite", e.bus)));
            }
        }
        self.events()?;
        let registry = ControllerRegistry::with_builtins();
        for (i, c) in s.controllers.iter().enumerate() {
            if s.controllers[..i].iter().any(|o| o.label == c.label) {
                return Err(scenario_err(format!("duplicate controller label `{}`", c.label)));
            }
            self.build_controller(c, &registry)?;
        }
        if let Some(m) = &s.metrics {
            self.index_of(m.bus)?;
            if !(m.window.0 <= m.window.1 && m.window.1 <= s.horizon + 1e-9) {
                return Err(scenario_err("metrics window must lie within the horizon"));
            }
            if m.convergence_horizon.is_some_and(|h| !(h >= s.horizon && h.is_finite())) {
                return Err(scenario_err("metrics convergence_horizon must be finite and at least the horizon"));
            }
        }
        if let Some(sw) = &s.sweep {
            self.controller_spec(&sw.controller)?;
            if sw.values.iter().any(|v| !(*v > 0.0)) {
                return Err(scenario_err("sweep values must be > 0"));
            }
        }
        if let Some(c) = &s.certify {
            self.controller_spec(&c.controller)?;
        }
        if let Some(t) = &s.tune {
            self.controller_spec(&t.controller)?;
        }
        if s.realizations == 0 {
            return Err(scenario_err("realizations must be ≥ 1"));
        }
        Ok(())
    }
}

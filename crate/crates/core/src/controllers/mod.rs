//! Secondary control laws behind a common [`Controller`] trait, plus a
//! name-keyed [`ControllerRegistry`] used by scenarios and the CLI.

mod dai;
mod droop;
mod integral;

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt::Debug;

use nalgebra::DMatrix;

use crate::error::{invalid, GridError, Result};

pub use dai::{complete_laplacian, ring_laplacian, DistributedAveraging};
pub use droop::Droop;
pub use integral::{LeakyIntegral, PureIntegral};

/// Linear realization `ṗ = F p + G y`, `u = H p + J y` of a controller, where
/// `y` is the measured frequency at its buses.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearController {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub j: DMatrix<f64>,
}

/// A control law acting on a subset of buses.
///
/// Slices passed to the methods are indexed by position in [`Controller::buses`],
/// not by global bus index. `measured` already contains any noise or bias.
pub trait Controller: Send + Sync + Debug {
    fn kind(&self) -> &'static str;

    /// Global indices of the controlled buses.
    fn buses(&self) -> &[usize];

    fn state_dim(&self) -> usize {
        self.buses().len()
    }

    fn control_output(&self, state: &[f64], measured: &[f64], u: &mut [f64]) -> Result<()>;

    fn state_derivative(&self, state: &[f64], measured: &[f64], dstate: &mut [f64]) -> Result<()>;

    /// Direct gain `∂u_i/∂y_i` per controlled bus (nonzero only for droop).
    fn feedthrough(&self) -> Vec<f64> {
        vec![0.0; self.buses().len()]
    }

    fn linear_model(&self) -> LinearController;

    /// Per-bus DC gain `g_i` when the steady injection is `u_i = −g_i ω_sync`;
    /// `None` for laws that restore nominal frequency.
    fn dc_gain(&self) -> Option<Vec<f64>>;

    fn as_any(&self) -> &dyn Any;
}

/// Resolved parameters handed to a controller factory. Vectors are indexed by
/// controlled bus position.
#[derive(Debug, Clone, Default)]
pub struct ControllerParams {
    pub buses: Vec<usize>,
    vectors: BTreeMap<String, Vec<f64>>,
    matrices: BTreeMap<String, DMatrix<f64>>,
}

impl ControllerParams {
    pub fn new(buses: Vec<usize>) -> Self {
        Self {
            buses,
            ..Self::default()
        }
    }

    pub fn with_vector(mut self, key: &str, value: Vec<f64>) -> Self {
        self.vectors.insert(key.to_string(), value);
        self
    }

    pub fn with_matrix(mut self, key: &str, value: DMatrix<f64>) -> Self {
        self.matrices.insert(key.to_string(), value);
        self
    }

    pub fn vector(&self, key: &str) -> Result<Vec<f64>> {
        self.vectors
            .get(key)
            .cloned()
            .ok_or_else(|| invalid(format!("controller parameter `{key}` missing")))
    }

    pub fn matrix(&self, key: &str) -> Result<DMatrix<f64>> {
        self.matrices
            .get(key)
            .cloned()
            .ok_or_else(|| invalid(format!("controller matrix `{key}` missing")))
    }

    pub fn vector_keys(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

pub type ControllerFactory = fn(&ControllerParams) -> Result<Box<dyn Controller>>;

/// Maps controller kind names to factories.
#[derive(Clone)]
pub struct ControllerRegistry {
    factories: BTreeMap<String, ControllerFactory>,
}

impl Default for ControllerRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ControllerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registry holding `droop`, `pure_integral`, `leaky_integral` and `dai`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("droop", |p| Ok(Box::new(Droop::new(p.buses.clone(), p.vector("gain")?)?)));
        reg.register("pure_integral", |p| {
            Ok(Box::new(PureIntegral::new(p.buses.clone(), p.vector("t")?)?))
        });
        reg.register("leaky_integral", |p| {
            Ok(Box::new(LeakyIntegral::new(p.buses.clone(), p.vector("k")?, p.vector("t")?)?))
        });
        reg.register("dai", |p| {
            Ok(Box::new(DistributedAveraging::new(
                p.buses.clone(),
                p.vector("t")?,
                p.vector("cost")?,
                p.matrix("comm")?,
            )?))
        });
        reg
    }

    /// Adds or replaces a factory.
    pub fn register(&mut self, name: &str, factory: ControllerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, params: &ControllerParams) -> Result<Box<dyn Controller>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            GridError::InvalidParameter(format!(
                "unknown controller `{name}` (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(params)
    }
}

fn check_positive(name: &str, values: &[f64], allow_zero: bool) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
        if !ok {
            return Err(invalid(format!("{name}[{i}] = {v} must be {}", if allow_zero { "≥ 0" } else { "> 0" })));
        }
    }
    Ok(())
}

fn check_buses(buses: &[usize]) -> Result<()> {
    let mut sorted = buses.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("controller lists a bus twice"));
    }
    Ok(())
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};

/// Support of the sample-and-hold measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform on `[0, η̄_i]` (biased).
    #[default]
    Positive,
    /// Uniform on `[−η̄_i, η̄_i]` (zero mean).
    Symmetric,
}

/// Per-bus measurement bias and noise description.
///
/// `sigma_zeta` and `sigma_eta` are white-noise intensities used only by the
/// linear H2 analysis; time-domain runs use `bias` plus the held uniform samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub bias: Vec<f64>,
    pub half_width: Vec<f64>,
    pub sigma_zeta: Vec<f64>,
    pub sigma_eta: Vec<f64>,
    pub distribution: NoiseDistribution,
    pub interval: f64,
    pub seed: u64,
    pub stream: u64,
}

impl NoiseSpec {
    pub fn none(n: usize) -> Self {
        Self {
            bias: vec![0.0; n],
            half_width: vec![0.0; n],
            sigma_zeta: vec![0.0; n],
            sigma_eta: vec![0.0; n],
            distribution: NoiseDistribution::Positive,
            interval: 1.0,
            seed: 0,
            stream: 0,
        }
    }

    /// Constant bias only.
    pub fn constant_bias(bias: Vec<f64>) -> Self {
        let n = bias.len();
        Self { bias, ..Self::none(n) }
    }

    pub fn uniform(half_width: Vec<f64>, distribution: NoiseDistribution, interval: f64, seed: u64) -> Self {
        let n = half_width.len();
        Self {
            half_width,
            distribution,
            interval,
            seed,
            ..Self::none(n)
        }
    }

    pub fn n_buses(&self) -> usize {
        self.bias.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("noise bias", n, self.bias.len())?;
        check_len("noise half-width", n, self.half_width.len())?;
        check_len("noise sigma_zeta", n, self.sigma_zeta.len())?;
        check_len("noise sigma_eta", n, self.sigma_eta.len())?;
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(invalid("noise bias must be finite"));
        }
        for (name, v) in [
            ("half-width", &self.half_width),
            ("sigma_zeta", &self.sigma_zeta),
            ("sigma_eta", &self.sigma_eta),
        ] {
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(invalid(format!("noise {name} must be finite and ≥ 0")));
            }
        }
        if !(self.interval.is_finite() && self.interval > 0.0) {
            return Err(invalid("noise sample interval must be > 0"));
        }
        Ok(())
    }

    pub fn is_random(&self) -> bool {
        self.half_width.iter().any(|h| *h > 0.0)
    }

    /// Copy drawing from an independent stream of the same seed.
    pub fn with_stream(&self, stream: u64) -> Self {
        Self {
            stream,
            ..self.clone()
        }
    }

    /// Bound `‖η‖∞` over all realizations.
    pub fn sup_norm(&self) -> f64 {
        self.bias
            .iter()
            .zip(&self.half_width)
            .map(|(b, h)| match self.distribution {
                NoiseDistribution::Positive => b.abs().max((b + h).abs()),
                NoiseDistribution::Symmetric => b.abs() + h,
            })
            .fold(0.0, f64::max)
    }
}

/// Stateful realization of a [`NoiseSpec`]: one draw per bus per interval.
#[derive(Debug, Clone)]
pub struct NoiseProcess {
    spec: NoiseSpec,
    rng: ChaCha8Rng,
    current: Vec<f64>,
}

impl NoiseProcess {
    pub fn new(spec: &NoiseSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(spec.stream);
        Self {
            current: spec.bias.clone(),
            spec: spec.clone(),
            rng,
        }
    }

    pub fn resample(&mut self) {
        if !self.spec.is_random() {
            return;
        }
        for i in 0..self.current.len() {
            let r: f64 = self.rng.random();
            let h = self.spec.half_width[i];
            let draw = match self.spec.distribution {
                NoiseDistribution::Positive => r * h,
                NoiseDistribution::Symmetric => (2.0 * r - 1.0) * h,
            };
            self.current[i] = self.spec.bias[i] + draw;
        }
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }
}

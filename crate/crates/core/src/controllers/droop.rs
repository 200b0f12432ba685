use std::any::Any;

use nalgebra::DMatrix;

use super::{check_buses, check_positive, Controller, LinearController};
use crate::error::{check_len, Result};

/// Stateless proportional law `u = −K⁻¹ y`.
#[derive(Debug, Clone)]
pub struct Droop {
    buses: Vec<usize>,
    gain: Vec<f64>,
}

impl Droop {
    /// `gain` holds `K_i⁻¹` per controlled bus.
    pub fn new(buses: Vec<usize>, gain: Vec<f64>) -> Result<Self> {
        check_len("droop gain", buses.len(), gain.len())?;
        check_buses(&buses)?;
        check_positive("droop gain", &gain, true)?;
        Ok(Self { buses, gain })
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }
}

impl Controller for Droop {
    fn kind(&self) -> &'static str {
        "droop"
    }

    fn buses(&self) -> &[usize] {
        &self.buses
    }

    fn state_dim(&self) -> usize {
        0
    }

    fn control_output(&self, state: &[f64], measured: &[f64], u: &mut [f64]) -> Result<()> {
        check_len("droop state", 0, state.len())?;
        check_len("measured frequency", self.buses.len(), measured.len())?;
        check_len("control output", self.buses.len(), u.len())?;
        for ((u, g), y) in u.iter_mut().zip(&self.gain).zip(measured) {
            *u = -g * y;
        }
        Ok(())
    }

    fn state_derivative(&self, state: &[f64], measured: &[f64], dstate: &mut [f64]) -> Result<()> {
        check_len("droop state", 0, state.len())?;
        check_len("measured frequency", self.buses.len(), measured.len())?;
        check_len("droop state derivative", 0, dstate.len())
    }

    fn feedthrough(&self) -> Vec<f64> {
        self.gain.iter().map(|g| -g).collect()
    }

    fn linear_model(&self) -> LinearController {
        let nc = self.buses.len();
        LinearController {
            f: DMatrix::zeros(0, 0),
            g: DMatrix::zeros(0, nc),
            h: DMatrix::zeros(nc, 0),
            j: DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                nc,
                self.gain.iter().map(|g| -g),
            )),
        }
    }

    fn dc_gain(&self) -> Option<Vec<f64>> {
        Some(self.gain.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

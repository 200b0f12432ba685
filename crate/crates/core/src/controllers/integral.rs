use std::any::Any;

use nalgebra::{Complex, DMatrix, DVector};

use super::{check_buses, check_positive, Controller, LinearController};
use crate::error::{check_len, invalid, GridError, Result};

/// Decentralized integral law `u = −p`, `T ṗ = y`.
#[derive(Debug, Clone)]
pub struct PureIntegral {
    buses: Vec<usize>,
    t: Vec<f64>,
}

impl PureIntegral {
    pub fn new(buses: Vec<usize>, t: Vec<f64>) -> Result<Self> {
        check_len("time constants", buses.len(), t.len())?;
        check_buses(&buses)?;
        check_positive("T", &t, false)?;
        Ok(Self { buses, t })
    }

    pub fn time_constants(&self) -> &[f64] {
        &self.t
    }
}

/// Leaky integral law `u = −p`, `T ṗ = y − K p`, i.e. the lag `1/(Ts + K)`.
#[derive(Debug, Clone)]
pub struct LeakyIntegral {
    buses: Vec<usize>,
    k: Vec<f64>,
    t: Vec<f64>,
}

impl LeakyIntegral {
    pub fn new(buses: Vec<usize>, k: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        check_len("leak gains", buses.len(), k.len())?;
        check_len("time constants", buses.len(), t.len())?;
        check_buses(&buses)?;
        check_positive("K", &k, true)?;
        check_positive("T", &t, false)?;
        Ok(Self { buses, k, t })
    }

    pub fn gains(&self) -> &[f64] {
        &self.k
    }

    pub fn time_constants(&self) -> &[f64] {
        &self.t
    }

    /// Same law with every `K_i` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.buses.clone(), self.k.iter().map(|k| k * factor).collect(), self.t.clone())
    }

    /// `1/(T_i s + K_i)` at controlled bus position `local`.
    pub fn transfer_function(&self, local: usize, s: Complex<f64>) -> Result<Complex<f64>> {
        let (k, t) = match (self.k.get(local), self.t.get(local)) {
            (Some(k), Some(t)) => (*k, *t),
            _ => return Err(invalid(format!("bus position {local} is not controlled"))),
        };
        let den = s * t + k;
        if den.norm() == 0.0 {
            return Err(GridError::Numerical(format!("transfer function evaluated at its pole s = {}", -k / t)));
        }
        Ok(den.inv())
    }
}

fn check_io(n: usize, state: &[f64], measured: &[f64], out: &[f64]) -> Result<()> {
    check_len("controller state", n, state.len())?;
    check_len("measured frequency", n, measured.len())?;
    check_len("controller output", n, out.len())
}

fn negate_state(state: &[f64], u: &mut [f64]) {
    for (u, p) in u.iter_mut().zip(state) {
        *u = -p;
    }
}

impl Controller for PureIntegral {
    fn kind(&self) -> &'static str {
        "pure_integral"
    }

    fn buses(&self) -> &[usize] {
        &self.buses
    }

    fn control_output(&self, state: &[f64], measured: &[f64], u: &mut [f64]) -> Result<()> {
        check_io(self.buses.len(), state, measured, u)?;
        negate_state(state, u);
        Ok(())
    }

    fn state_derivative(&self, state: &[f64], measured: &[f64], dstate: &mut [f64]) -> Result<()> {
        check_io(self.buses.len(), state, measured, dstate)?;
        for ((dp, y), t) in dstate.iter_mut().zip(measured).zip(&self.t) {
            *dp = y / t;
        }
        Ok(())
    }

    fn linear_model(&self) -> LinearController {
        let tinv = DVector::from_iterator(self.t.len(), self.t.iter().map(|t| 1.0 / t));
        let nc = self.buses.len();
        LinearController {
            f: DMatrix::zeros(nc, nc),
            g: DMatrix::from_diagonal(&tinv),
            h: -DMatrix::identity(nc, nc),
            j: DMatrix::zeros(nc, nc),
        }
    }

    fn dc_gain(&self) -> Option<Vec<f64>> {
        None
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

impl Controller for LeakyIntegral {
    fn kind(&self) -> &'static str {
        "leaky_integral"
    }

    fn buses(&self) -> &[usize] {
        &self.buses
    }

    fn control_output(&self, state: &[f64], measured: &[f64], u: &mut [f64]) -> Result<()> {
        check_io(self.buses.len(), state, measured, u)?;
        negate_state(state, u);
        Ok(())
    }

    fn state_derivative(&self, state: &[f64], measured: &[f64], dstate: &mut [f64]) -> Result<()> {
        check_io(self.buses.len(), state, measured, dstate)?;
        for i in 0..dstate.len() {
            dstate[i] = (measured[i] - self.k[i] * state[i]) / self.t[i];
        }
        Ok(())
    }

    fn linear_model(&self) -> LinearController {
        let nc = self.buses.len();
        LinearController {
            f: DMatrix::from_diagonal(&DVector::from_fn(nc, |i, _| -self.k[i] / self.t[i])),
            g: DMatrix::from_diagonal(&DVector::from_fn(nc, |i, _| 1.0 / self.t[i])),
            h: -DMatrix::identity(nc, nc),
            j: DMatrix::zeros(nc, nc),
        }
    }

    fn dc_gain(&self) -> Option<Vec<f64>> {
        if self.k.iter().all(|k| *k > 0.0) {
            Some(self.k.iter().map(|k| 1.0 / k).collect())
        } else {
            None
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_is_negated_state() {
        let c = PureIntegral::new(vec![0, 1], vec![1.0, 1.0]).unwrap();
        let mut u = [0.0; 2];
        c.control_output(&[0.0, 0.0], &[0.3, 0.1], &mut u).unwrap();
        assert_eq!(u, [0.0, 0.0]);
        c.control_output(&[1.0, -1.0], &[0.0, 0.0], &mut u).unwrap();
        assert_eq!(u, [-1.0, 1.0]);
    }

    #[test]
    fn leaky_equilibrium_at_p_equals_omega_over_k() {
        let c = LeakyIntegral::new(vec![0, 1], vec![0.5, 2.0], vec![0.1, 0.3]).unwrap();
        let w = [0.2, -0.4];
        let p = [w[0] / 0.5, w[1] / 2.0];
        let mut dp = [1.0; 2];
        c.state_derivative(&p, &w, &mut dp).unwrap();
        assert!(dp.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn pure_integral_rests_at_zero_frequency() {
        let c = PureIntegral::new(vec![2], vec![0.05]).unwrap();
        let mut dp = [1.0];
        c.state_derivative(&[3.0], &[0.0], &mut dp).unwrap();
        assert_eq!(dp[0], 0.0);
    }

    #[test]
    fn zero_leak_matches_pure_integral_bitwise() {
        let t = vec![0.05, 0.7, 1.3];
        let leaky = LeakyIntegral::new(vec![0, 1, 2], vec![0.0; 3], t.clone()).unwrap();
        let pure = PureIntegral::new(vec![0, 1, 2], t).unwrap();
        let (p, w) = ([0.3, -1.7, 2.2], [1e-3, -0.25, 7.0]);
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        leaky.state_derivative(&p, &w, &mut a).unwrap();
        pure.state_derivative(&p, &w, &mut b).unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }

    #[test]
    fn transfer_function_values() {
        let c = LeakyIntegral::new(vec![0, 1], vec![0.01, 1.0], vec![0.05, 1.0]).unwrap();
        let dc = c.transfer_function(0, Complex::new(0.0, 0.0)).unwrap();
        assert!((dc.re - 100.0).abs() < 1e-12 && dc.im == 0.0);
        let g = c.transfer_function(1, Complex::new(0.0, 1.0)).unwrap();
        assert!((g - Complex::new(0.5, -0.5)).norm() < 1e-15);
        assert!((g.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let corner = c.transfer_function(0, Complex::new(0.0, 0.01 / 0.05)).unwrap();
        assert!((corner.norm() - 100.0 / 2f64.sqrt()).abs() < 1e-10);
        assert!(c.transfer_function(1, Complex::new(-1.0, 0.0)).is_err());
        assert!(c.transfer_function(2, Complex::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn rejects_nonpositive_time_constants() {
        assert!(PureIntegral::new(vec![0], vec![0.0]).is_err());
        assert!(LeakyIntegral::new(vec![0], vec![-1.0], vec![1.0]).is_err());
        assert!(LeakyIntegral::new(vec![0, 0], vec![1.0; 2], vec![1.0; 2]).is_err());
    }
}

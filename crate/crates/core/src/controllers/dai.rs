use std::any::Any;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{check_buses, check_positive, Controller, LinearController};
use crate::error::{check_len, invalid, Result};

/// Distributed-averaging integral law `u = −p`, `T ṗ = A⁻¹y − L A p`, where `L`
/// is the communication Laplacian over the controlled buses and `A` the
/// diagonal marginal-cost matrix.
#[derive(Debug, Clone)]
pub struct DistributedAveraging {
    buses: Vec<usize>,
    t: Vec<f64>,
    cost: Vec<f64>,
    comm: DMatrix<f64>,
}

impl DistributedAveraging {
    pub fn new(buses: Vec<usize>, t: Vec<f64>, cost: Vec<f64>, comm: DMatrix<f64>) -> Result<Self> {
        let nc = buses.len();
        check_len("time constants", nc, t.len())?;
        check_len("cost coefficients", nc, cost.len())?;
        check_len("communication Laplacian rows", nc, comm.nrows())?;
        check_len("communication Laplacian columns", nc, comm.ncols())?;
        check_buses(&buses)?;
        check_positive("T", &t, false)?;
        check_positive("cost", &cost, false)?;
        validate_laplacian(&comm)?;
        Ok(Self { buses, t, cost, comm })
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn time_constants(&self) -> &[f64] {
        &self.t
    }

    pub fn comm_laplacian(&self) -> &DMatrix<f64> {
        &self.comm
    }
}

fn validate_laplacian(l: &DMatrix<f64>) -> Result<()> {
    let n = l.nrows();
    let scale = l.amax().max(1.0);
    if (l - l.transpose()).amax() > 1e-12 * scale {
        return Err(invalid("communication Laplacian is not symmetric"));
    }
    for i in 0..n {
        if l.row(i).sum().abs() > 1e-12 * scale {
            return Err(invalid(format!("communication Laplacian row {i} does not sum to zero")));
        }
    }
    if n < 2 {
        return Ok(());
    }
    let mut eig = SymmetricEigen::new(l.clone()).eigenvalues.as_slice().to_vec();
    eig.sort_by(f64::total_cmp);
    if eig[0] < -1e-10 * scale {
        return Err(invalid("communication Laplacian is not positive semidefinite"));
    }
    if eig[1] <= 1e-10 * scale {
        return Err(invalid("communication graph is not connected"));
    }
    Ok(())
}

/// Laplacian of a ring over `n` nodes with uniform weight `w` (a path for n = 2).
pub fn ring_laplacian(n: usize, w: f64) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    if n < 2 {
        return l;
    }
    let links: Vec<(usize, usize)> = if n == 2 {
        vec![(0, 1)]
    } else {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    };
    for (i, j) in links {
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    l
}

/// Laplacian of the complete graph with uniform weight `w`.
pub fn complete_laplacian(n: usize, w: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { w * (n as f64 - 1.0) } else { -w })
}

impl Controller for DistributedAveraging {
    fn kind(&self) -> &'static str {
        "dai"
    }

    fn buses(&self) -> &[usize] {
        &self.buses
    }

    fn control_output(&self, state: &[f64], measured: &[f64], u: &mut [f64]) -> Result<()> {
        let nc = self.buses.len();
        check_len("controller state", nc, state.len())?;
        check_len("measured frequency", nc, measured.len())?;
        check_len("controller output", nc, u.len())?;
        for (u, p) in u.iter_mut().zip(state) {
            *u = -p;
        }
        Ok(())
    }

    fn state_derivative(&self, state: &[f64], measured: &[f64], dstate: &mut [f64]) -> Result<()> {
        let nc = self.buses.len();
        check_len("controller state", nc, state.len())?;
        check_len("measured frequency", nc, measured.len())?;
        check_len("controller state derivative", nc, dstate.len())?;
        for i in 0..nc {
            let mut consensus = 0.0;
            for j in 0..nc {
                let lij = self.comm[(i, j)];
                if lij != 0.0 {
                    consensus += lij * self.cost[j] * state[j];
                }
            }
            dstate[i] = (measured[i] / self.cost[i] - consensus) / self.t[i];
        }
        Ok(())
    }

    fn linear_model(&self) -> LinearController {
        let nc = self.buses.len();
        let tinv = DMatrix::from_diagonal(&DVector::from_fn(nc, |i, _| 1.0 / self.t[i]));
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&self.cost));
        let ainv = DMatrix::from_diagonal(&DVector::from_fn(nc, |i, _| 1.0 / self.cost[i]));
        LinearController {
            f: -(&tinv * &self.comm * &a),
            g: &tinv * ainv,
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

#[cfg(test)]
mod tests {
    use super::*;

    fn dai() -> DistributedAveraging {
        DistributedAveraging::new(vec![0, 1, 2, 3], vec![0.05; 4], vec![1.0, 2.0, 1.0, 4.0], ring_laplacian(4, 0.1))
            .unwrap()
    }

    #[test]
    fn equilibrium_on_inverse_cost_direction() {
        let c = dai();
        let p: Vec<f64> = c.cost().iter().map(|a| 0.7 / a).collect();
        let mut dp = [1.0; 4];
        c.state_derivative(&p, &[0.0; 4], &mut dp).unwrap();
        assert!(dp.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn consensus_term_ignores_shift_along_inverse_cost() {
        let c = dai();
        let p = [0.3, -0.1, 0.25, 0.9];
        let shifted: Vec<f64> = p.iter().zip(c.cost()).map(|(p, a)| p + 1.5 / a).collect();
        let w = [0.01, -0.02, 0.0, 0.03];
        let (mut a, mut b) = ([0.0; 4], [0.0; 4]);
        c.state_derivative(&p, &w, &mut a).unwrap();
        c.state_derivative(&shifted, &w, &mut b).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_disconnected_or_asymmetric_graphs() {
        let mut l = DMatrix::zeros(3, 3);
        l[(0, 0)] = 1.0;
        l[(1, 1)] = 1.0;
        l[(0, 1)] = -1.0;
        l[(1, 0)] = -1.0;
        assert!(DistributedAveraging::new(vec![0, 1, 2], vec![1.0; 3], vec![1.0; 3], l.clone()).is_err());
        l[(0, 1)] = -0.5;
        assert!(DistributedAveraging::new(vec![0, 1, 2], vec![1.0; 3], vec![1.0; 3], l).is_err());
    }

    #[test]
    fn ring_and_complete_rows_sum_to_zero() {
        for l in [ring_laplacian(5, 0.1), complete_laplacian(4, 2.0), ring_laplacian(2, 1.0)] {
            for i in 0..l.nrows() {
                assert!(l.row(i).sum().abs() < 1e-15);
            }
        }
    }
}

//! Lossless network-reduced grid: incidence structure, edge weights and the
//! potential `U(θ) = −Σ_e γ_e cos(θ_from − θ_to)` with its derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, GridError, Result};

/// Immutable weighted graph of the transmission network.
///
/// Edge `e` is oriented from `edges[e].0` to `edges[e].1`; the incidence column
/// carries `+1` at the tail and `−1` at the head, so `(Bᵀθ)_e = θ_from − θ_to`.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    voltage: Vec<f64>,
    incidence: DMatrix<f64>,
    laplacian: DMatrix<f64>,
}

impl NetworkModel {
    /// Builds a network from edge weights `γ_e` directly. Voltages default to 1.
    pub fn new(n: usize, edges: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        Self::with_voltage(n, edges, weights, vec![1.0; n])
    }

    fn with_voltage(
        n: usize,
        edges: Vec<(usize, usize)>,
        weights: Vec<f64>,
        voltage: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(GridError::InvalidNetwork("network has no buses".into()));
        }
        check_len("edge weights", edges.len(), weights.len())?;
        check_len("bus voltages", n, voltage.len())?;
        for (e, (&(i, j), &w)) in edges.iter().zip(&weights).enumerate() {
            if i >= n || j >= n {
                return Err(GridError::InvalidNetwork(format!(
                    "line {e} references bus outside 0..{n}"
                )));
            }
            if i == j {
                return Err(GridError::InvalidNetwork(format!("line {e} is a self-loop at bus {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GridError::InvalidNetwork(format!(
                    "line {e} has non-positive weight {w}"
                )));
            }
        }
        if let Some(v) = voltage.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(GridError::InvalidNetwork(format!("bus voltage {v} is not positive")));
        }
        if !is_connected(n, &edges) {
            return Err(GridError::InvalidNetwork("graph is not connected".into()));
        }

        let m = edges.len();
        let mut incidence = DMatrix::zeros(n, m);
        let mut laplacian = DMatrix::zeros(n, n);
        for (e, (&(i, j), &w)) in edges.iter().zip(&weights).enumerate() {
            incidence[(i, e)] = 1.0;
            incidence[(j, e)] = -1.0;
            laplacian[(i, i)] += w;
            laplacian[(j, j)] += w;
            laplacian[(i, j)] -= w;
            laplacian[(j, i)] -= w;
        }
        Ok(Self {
            n,
            edges,
            weights,
            voltage,
            incidence,
            laplacian,
        })
    }

    /// Builds a network from line susceptances `B_ij` and bus voltages, with
    /// `γ_e = B_ij·V_i·V_j`.
    pub fn from_susceptances(n: usize, lines: &[(usize, usize, f64)], voltage: Vec<f64>) -> Result<Self> {
        check_len("bus voltages", n, voltage.len())?;
        let mut edges = Vec::with_capacity(lines.len());
        let mut weights = Vec::with_capacity(lines.len());
        for &(i, j, b) in lines {
            if i >= n || j >= n {
                return Err(GridError::InvalidNetwork(format!("line {i}-{j} references unknown bus")));
            }
            edges.push((i, j));
            weights.push(b * voltage[i] * voltage[j]);
        }
        Self::with_voltage(n, edges, weights, voltage)
    }

    pub fn n_buses(&self) -> usize {
        self.n
    }

    pub fn n_lines(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bus_voltage(&self) -> &[f64] {
        &self.voltage
    }

    pub fn incidence(&self) -> &DMatrix<f64> {
        &self.incidence
    }

    /// Weighted Laplacian `BΓBᵀ`, equal to the Hessian at `θ = 0`.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Line angle differences `Bᵀθ`.
    pub fn line_angles(&self, angles: &[f64]) -> Result<Vec<f64>> {
        check_len("angles", self.n, angles.len())?;
        Ok(self.edges.iter().map(|&(i, j)| angles[i] - angles[j]).collect())
    }

    pub fn potential(&self, angles: &[f64]) -> Result<f64> {
        check_len("angles", self.n, angles.len())?;
        Ok(-self
            .edges
            .iter()
            .zip(&self.weights)
            .map(|(&(i, j), w)| w * (angles[i] - angles[j]).cos())
            .sum::<f64>())
    }

    /// Power flow `∇U(θ) = BΓ sin(Bᵀθ)`.
    pub fn potential_gradient(&self, angles: &[f64]) -> Result<DVector<f64>> {
        check_len("angles", self.n, angles.len())?;
        let mut out = DVector::zeros(self.n);
        self.gradient_into(angles, out.as_mut_slice());
        Ok(out)
    }

    /// Unchecked gradient used by the integrator's inner loop.
    pub(crate) fn gradient_into(&self, angles: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (&(i, j), w) in self.edges.iter().zip(&self.weights) {
            let f = w * (angles[i] - angles[j]).sin();
            out[i] += f;
            out[j] -= f;
        }
    }

    /// `B diag(Γ cos(Bᵀθ)) Bᵀ`.
    pub fn potential_hessian(&self, angles: &[f64]) -> Result<DMatrix<f64>> {
        check_len("angles", self.n, angles.len())?;
        let cos: Vec<f64> = self
            .edges
            .iter()
            .map(|&(i, j)| (angles[i] - angles[j]).cos())
            .collect();
        Ok(self.weighted_laplacian(&cos))
    }

    /// Laplacian with edge weights `γ_e·s_e`.
    pub fn weighted_laplacian(&self, scale: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for ((&(i, j), w), s) in self.edges.iter().zip(&self.weights).zip(scale) {
            let g = w * s;
            h[(i, i)] += g;
            h[(j, j)] += g;
            h[(i, j)] -= g;
            h[(j, i)] -= g;
        }
        h
    }
}

/// Center-of-inertia projector `Π = I − (1/n)11ᵀ`.
pub fn com_projector(n: usize) -> DMatrix<f64> {
    let inv = 1.0 / n as f64;
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - inv } else { -inv })
}

/// Subtracts the mean, i.e. applies `Π` without forming it.
pub fn project_com(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut components = n;
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components == 1
}

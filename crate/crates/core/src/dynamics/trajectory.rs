use std::io::Write;

use super::ClosedLoopState;
use crate::error::Result;
use crate::report::fmt_sig;

/// A recorded instant: state, bus injections `u`, and the total `ΣP*` in force.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: ClosedLoopState,
    pub u: Vec<f64>,
    pub injection_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<Sample>,
    ctrl_buses: Vec<usize>,
}

impl Trajectory {
    pub(crate) fn new(samples: Vec<Sample>, ctrl_buses: Vec<usize>) -> Self {
        Self { samples, ctrl_buses }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn terminal(&self) -> &Sample {
        self.samples.last().expect("trajectory holds at least the initial sample")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.time).collect()
    }

    pub fn frequency(&self, bus: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.freqs[bus]).collect()
    }

    pub fn injection(&self, bus: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.u[bus]).collect()
    }

    pub fn ctrl_buses(&self) -> &[usize] {
        &self.ctrl_buses
    }

    /// Bus-level controller state at sample `k` (zero at uncontrolled buses).
    pub fn bus_ctrl_state(&self, k: usize) -> Vec<f64> {
        let s = &self.samples[k];
        let mut p = vec![0.0; s.state.angles.len()];
        if s.state.ctrl_state.len() == self.ctrl_buses.len() {
            for (j, &b) in self.ctrl_buses.iter().enumerate() {
                p[b] = s.state.ctrl_state[j];
            }
        }
        p
    }

    /// Long-format CSV: `t,bus,theta,omega,p,u`, one row per sample and bus,
    /// with 0-based bus indices.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.samples.first().map_or(0, |s| s.state.angles.len());
        self.write_csv_with_ids(out, &(0..n).collect::<Vec<_>>())
    }

    /// As [`Trajectory::write_csv`] with `bus_ids[i]` naming bus `i`.
    pub fn write_csv_with_ids<W: Write>(&self, out: W, bus_ids: &[usize]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "bus", "theta", "omega", "p", "u"])?;
        for (k, s) in self.samples.iter().enumerate() {
            let p = self.bus_ctrl_state(k);
            for bus in 0..s.state.angles.len() {
                w.write_record([
                    fmt_sig(s.state.time),
                    bus_ids[bus].to_string(),
                    fmt_sig(s.state.angles[bus]),
                    fmt_sig(s.state.freqs[bus]),
                    fmt_sig(p[bus]),
                    fmt_sig(s.u[bus]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

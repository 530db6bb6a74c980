use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AdaptationState, AmConfig, ConstraintSchedule};
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// The output of one AM run. `states[0]` is the starting point, so a run of
/// `n` steps stores `n + 1` states and `n` acceptance flags. The norm
/// columns are indexed like `states`; entry 0 describes `S_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainTrace {
    pub seed: u64,
    pub dim: usize,
    pub states: Vec<Vector>,
    pub accepted: Vec<bool>,
    /// `|S_n|`.
    pub s_norms: Vec<f64>,
    /// `‖S_n^(m)‖`.
    pub mean_norms: Vec<f64>,
    /// `‖S_n^(v)‖_F`.
    pub cov_norms: Vec<f64>,
    /// Per step: whether `σ_n` discarded the increment.
    pub constraint_hit: Vec<bool>,
    /// Step indices where `σ_n` discarded the increment.
    pub constraint_hits: Vec<u64>,
    pub snapshot_every: u64,
    pub snapshots: Vec<AdaptationState>,
}

/// The columns that survive a CSV round trip.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceColumns {
    pub states: Vec<Vector>,
    pub accepted: Vec<bool>,
    pub s_norms: Vec<f64>,
    pub constraint_hit: Vec<bool>,
}

/// JSON sidecar written next to the CSV columns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub seed: u64,
    pub dim: usize,
    pub n_steps: u64,
    pub config: AmConfig,
    pub schedule: ConstraintSchedule,
    pub acceptance_rate: f64,
    pub constraint_hits: Vec<u64>,
    pub snapshot_every: u64,
    pub snapshots: Vec<AdaptationState>,
}

impl ChainTrace {
    pub fn n_steps(&self) -> usize {
        self.accepted.len()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("a trace holds at least the start")
    }

    pub fn final_adaptation(&self) -> &AdaptationState {
        self.snapshots.last().expect("the final step is always snapshotted")
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    pub fn sidecar(&self, config: &AmConfig, schedule: &ConstraintSchedule) -> TraceSidecar {
        TraceSidecar {
            seed: self.seed,
            dim: self.dim,
            n_steps: self.n_steps() as u64,
            config: *config,
            schedule: *schedule,
            acceptance_rate: self.acceptance_rate(),
            constraint_hits: self.constraint_hits.clone(),
            snapshot_every: self.snapshot_every,
            snapshots: self.snapshots.clone(),
        }
    }

    /// Columns `step, x0 … x{d-1}, accepted, s_norm, constraint_hit`; one
    /// row per state, with row 0 carrying `accepted = constraint_hit = 0`.
    /// Reals are written with 17 significant digits so the file round-trips
    /// exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string()];
        header.extend((0..self.dim).map(|i| format!("x{i}")));
        header.extend(["accepted", "s_norm", "constraint_hit"].map(String::from));
        out.write_record(&header).map_err(io_err)?;
        for (k, x) in self.states.iter().enumerate() {
            let mut row = Vec::with_capacity(self.dim + 4);
            row.push(k.to_string());
            row.extend(x.iter().map(|v| format!("{v:.16e}")));
            let (acc, hit) = match k {
                0 => (false, false),
                _ => (self.accepted[k - 1], self.constraint_hit[k - 1]),
            };
            row.push(u8::from(acc).to_string());
            row.push(format!("{:.16e}", self.s_norms[k]));
            row.push(u8::from(hit).to_string());
            out.write_record(&row).map_err(io_err)?;
        }
        out.flush().map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// Reads a file produced by [`ChainTrace::write_csv`].
pub fn read_csv<R: Read>(r: R) -> Result<TraceColumns> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(io_err)?.clone();
    let dim = headers.iter().filter(|h| h.starts_with('x')).count();
    if dim == 0 || headers.len() != dim + 4 {
        return Err(Error::InvalidInput("unexpected trace header".into()));
    }
    let mut cols = TraceColumns {
        states: Vec::new(),
        accepted: Vec::new(),
        s_norms: Vec::new(),
        constraint_hit: Vec::new(),
    };
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(io_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("row {k}, column {i}: {e}")))
        };
        let x = (1..=dim).map(num).collect::<Result<Vec<_>>>()?;
        cols.states.push(Vector::from_vec(x));
        cols.s_norms.push(num(dim + 2)?);
        if k > 0 {
            cols.accepted.push(&rec[dim + 1] == "1");
            cols.constraint_hit.push(&rec[dim + 3] == "1");
        }
    }
    if cols.states.is_empty() {
        return Err(Error::InvalidInput("empty trace".into()));
    }
    Ok(cols)
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("trace csv: {e}"))
}

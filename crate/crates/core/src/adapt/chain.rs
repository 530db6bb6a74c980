use serde::{Deserialize, Serialize};

use super::{am_update, constrain_candidate, AdaptationState, AmConfig, ChainTrace, ConstraintSchedule};
use crate::error::{check_dim, Error, Result};
use crate::kernel::step_from;
use crate::linalg::{SpdMatrix, Vector};
use crate::rng::stream;
use crate::targets::{DriftFunction, TargetDensity, MAX_LOG_V};

pub const DEFAULT_SNAPSHOT_EVERY: u64 = 100;

/// Relative slack allowed when checking `Σ_0 ⪰ κI`.
const FLOOR_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmSampler {
    pub config: AmConfig,
    pub schedule: ConstraintSchedule,
    pub snapshot_every: u64,
}

impl AmSampler {
    pub fn new(config: AmConfig, schedule: ConstraintSchedule) -> Self {
        AmSampler {
            config,
            schedule,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }

    pub fn with_snapshot_every(mut self, k: u64) -> Self {
        self.snapshot_every = k.max(1);
        self
    }

    /// Runs `n_steps` AM iterations from `x0` with initial covariance
    /// `sigma0`. Each iteration moves the state first and then adapts.
    pub fn run(
        &self,
        t: &dyn TargetDensity,
        x0: &Vector,
        sigma0: &SpdMatrix,
        n_steps: u64,
        seed: u64,
    ) -> Result<ChainTrace> {
        let cfg = &self.config;
        cfg.validate()?;
        if self.schedule.enabled {
            self.schedule.validate()?;
        }
        let d = t.dim();
        check_dim(d, x0.len())?;
        check_dim(d, sigma0.dim())?;
        if sigma0.min_eigenvalue() < cfg.kappa * (1.0 - FLOOR_SLACK) {
            return Err(Error::InvalidInput(format!(
                "initial covariance must dominate κI: min eigenvalue {} < κ = {}",
                sigma0.min_eigenvalue(),
                cfg.kappa
            )));
        }
        let mut log_px = t.log_density(x0);
        if !log_px.is_finite() {
            return Err(Error::InvalidInput("π(x0) must be positive".into()));
        }
        let drift = DriftFunction::new(t);
        if drift.log_v_from_log_density(log_px) > MAX_LOG_V {
            return Err(Error::OverflowHalt { step: 0 });
        }
        let mut s = AdaptationState::new(x0.clone(), sigma0.clone(), 0)?;
        if self.schedule.enabled && s.norm() > self.schedule.t {
            return Err(Error::InvalidInput(format!(
                "initial adaptation parameter |s0| = {} lies outside K_1 (t = {})",
                s.norm(),
                self.schedule.t
            )));
        }

        let n = n_steps as usize;
        let mut trace = ChainTrace {
            seed,
            dim: d,
            states: Vec::with_capacity(n + 1),
            accepted: Vec::with_capacity(n),
            s_norms: Vec::with_capacity(n + 1),
            mean_norms: Vec::with_capacity(n + 1),
            cov_norms: Vec::with_capacity(n + 1),
            constraint_hit: Vec::with_capacity(n),
            constraint_hits: Vec::new(),
            snapshot_every: self.snapshot_every,
            snapshots: vec![s.clone()],
        };
        trace.states.push(x0.clone());
        record_norms(&mut trace, &s);

        let burn_in_cov = sigma0.scale(cfg.theta);
        let mut rng = stream(seed);
        let mut x = x0.clone();
        for k in 1..=n_steps {
            let adapted;
            let proposal_cov = if k <= cfg.burn_in {
                &burn_in_cov
            } else {
                adapted = s.cov.scale(cfg.theta);
                &adapted
            };
            let (step, log_next) = step_from(&x, log_px, t, proposal_cov, &mut rng)?;
            if drift.log_v_from_log_density(log_next) > MAX_LOG_V {
                return Err(Error::OverflowHalt { step: k as usize });
            }
            x = step.next_state;
            log_px = log_next;

            let candidate = am_update(&s, &x, cfg)?;
            let (next, applied) = constrain_candidate(&s, candidate, &self.schedule);
            s = next;
            debug_assert!(!self.schedule.enabled || s.norm() <= self.schedule.bound(k));

            trace.states.push(x.clone());
            trace.accepted.push(step.accepted);
            trace.constraint_hit.push(!applied);
            if !applied {
                trace.constraint_hits.push(k);
            }
            record_norms(&mut trace, &s);
            if k % self.snapshot_every == 0 || k == n_steps {
                trace.snapshots.push(s.clone());
            }
        }
        Ok(trace)
    }
}

fn record_norms(trace: &mut ChainTrace, s: &AdaptationState) {
    let m = s.mean.norm();
    let v = s.cov.frobenius_norm();
    trace.mean_norms.push(m);
    trace.cov_norms.push(v);
    trace.s_norms.push(m.max(v));
}

pub fn run_am_chain(
    cfg: &AmConfig,
    sched: &ConstraintSchedule,
    t: &dyn TargetDensity,
    x0: &Vector,
    sigma0: &SpdMatrix,
    n_steps: u64,
    seed: u64,
) -> Result<ChainTrace> {
    AmSampler::new(*cfg, *sched).run(t, x0, sigma0, n_steps, seed)
}

/// Smallest constants with `‖X_n‖ ≤ A n^ε`, `‖S_n^(m)‖ ≤ A n^ε` and
/// `‖S_n^(v)‖ ≤ A n^ε` over `1 ≤ n ≤ N` on the observed trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub eps: f64,
    pub a_state: f64,
    pub a_mean: f64,
    pub a_cov: f64,
}

pub fn growth_monitor(trace: &ChainTrace, eps: f64) -> Result<GrowthReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let sup = |vals: &mut dyn Iterator<Item = f64>| {
        vals.enumerate()
            .skip(1)
            .map(|(n, v)| v / (n as f64).powf(eps))
            .fold(0.0_f64, f64::max)
    };
    Ok(GrowthReport {
        eps,
        a_state: sup(&mut trace.states.iter().map(|x| x.norm())),
        a_mean: sup(&mut trace.mean_norms.iter().copied()),
        a_cov: sup(&mut trace.cov_norms.iter().copied()),
    })
}

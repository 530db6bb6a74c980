//! Ergodic averages, `V^r` moment tracking, batch means and the distance of
//! the adaptation parameter from its limit.
//!
//! Every function is a pure function of the trace it is given.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptationState, ChainTrace};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{SpdMatrix, Vector};
use crate::targets::DriftFunction;

pub const MIN_BATCHES: usize = 20;
pub const MIN_BATCH_SIZE: usize = 50;
pub const DEFAULT_BURN_FRAC: f64 = 0.1;
/// Log-log slope of the running maximum above which growth is flagged.
pub const DEFAULT_GROWTH_SLOPE: f64 = 2.0;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `I_n = (1/n) Σ_{k=1}^n f(X_k)` at each checkpoint `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSeries {
    pub checkpoints: Vec<usize>,
    pub values: Vec<f64>,
    pub reference: Option<f64>,
}

impl EstimatorSeries {
    pub fn with_reference(mut self, r: f64) -> Self {
        self.reference = Some(r);
        self
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// `|I_n − π(f)| / |π(f)|` at the last checkpoint.
    pub fn relative_error(&self) -> Option<f64> {
        let r = self.reference?;
        Some((self.last()? - r).abs() / r.abs())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "value"]).map_err(csv_err)?;
        for (n, v) in self.checkpoints.iter().zip(&self.values) {
            out.write_record([n.to_string(), format!("{v:.16e}")])
                .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

/// Evenly spaced checkpoints `n/k, 2n/k, …, n`.
pub fn linear_checkpoints(n: usize, k: usize) -> Vec<usize> {
    let k = k.clamp(1, n.max(1));
    let mut out: Vec<usize> = (1..=k).map(|i| i * n / k).filter(|&c| c > 0).collect();
    out.dedup();
    out
}

/// Roughly log-spaced checkpoints in `[1, n]`, always ending at `n`.
pub fn log_checkpoints(n: usize, per_decade: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let step = 10f64.powf(1.0 / per_decade.max(1) as f64);
    let mut x = 1.0;
    while (x as usize) < n {
        out.push(x as usize);
        x *= step;
    }
    out.push(n);
    out.dedup();
    out
}

pub fn running_average<F: Fn(&Vector) -> f64>(
    trace: &ChainTrace,
    f: F,
    checkpoints: &[usize],
) -> Result<EstimatorSeries> {
    running_average_of(&trace.states, f, checkpoints)
}

/// As [`running_average`] over `states[1..]`; `states[0]` is the start.
pub fn running_average_of<F: Fn(&Vector) -> f64>(
    states: &[Vector],
    f: F,
    checkpoints: &[usize],
) -> Result<EstimatorSeries> {
    let n = states.len().saturating_sub(1);
    validate_checkpoints(checkpoints, n)?;
    let mut values = Vec::with_capacity(checkpoints.len());
    let mut sum = CompensatedSum::default();
    let mut next = 0;
    for (k, x) in states.iter().enumerate().skip(1) {
        sum.add(f(x));
        while next < checkpoints.len() && checkpoints[next] == k {
            values.push(sum.value() / k as f64);
            next += 1;
        }
        if next == checkpoints.len() {
            break;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("non-finite running average".into()));
    }
    Ok(EstimatorSeries {
        checkpoints: checkpoints.to_vec(),
        values,
        reference: None,
    })
}

fn validate_checkpoints(checkpoints: &[usize], n: usize) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidInput("no checkpoints".into()));
    }
    if checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "checkpoints must be positive and increasing".into(),
        ));
    }
    if *checkpoints.last().unwrap() > n {
        return Err(Error::InvalidInput(format!(
            "checkpoint {} exceeds the {n} steps in the trace",
            checkpoints.last().unwrap()
        )));
    }
    Ok(())
}

/// Running maximum and running mean of `V^r(X_k)`, kept in log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTrack {
    pub r: f64,
    pub checkpoints: Vec<usize>,
    pub log_running_max: Vec<f64>,
    pub log_running_mean: Vec<f64>,
    /// Least-squares slope of `log max_{k ≤ n} V^r(X_k)` against `log n`
    /// over the last decade of checkpoints.
    pub max_slope: f64,
    /// Same for the running mean.
    pub mean_slope: f64,
    pub threshold: f64,
    pub growth_flag: bool,
}

pub fn v_moment_track(trace: &ChainTrace, df: &DriftFunction<'_>, r: f64) -> Result<MomentTrack> {
    v_moment_track_of(&trace.states, df, r, DEFAULT_GROWTH_SLOPE)
}

pub fn v_moment_track_of(states: &[Vector], df: &DriftFunction<'_>, r: f64, threshold: f64) -> Result<MomentTrack> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidInput(format!("r must lie in (0, 1], got {r}")));
    }
    let n = states.len().saturating_sub(1);
    if n < 10 {
        return Err(Error::TooShort(format!("{n} steps; moment tracking needs at least 10")));
    }
    let checkpoints = log_checkpoints(n, 20);
    let mut log_max = f64::NEG_INFINITY;
    // Running log Σ V^r, as a scaled sum: total = exp(shift) * acc.
    let mut shift = f64::NEG_INFINITY;
    let mut acc = 0.0;
    let mut lmax = Vec::with_capacity(checkpoints.len());
    let mut lmean = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for (k, x) in states.iter().enumerate().skip(1) {
        let lv = r * df.log_v(x);
        if !lv.is_finite() {
            return Err(Error::OverflowHalt { step: k });
        }
        log_max = log_max.max(lv);
        if lv > shift {
            acc = acc * (shift - lv).exp() + 1.0;
            shift = lv;
        } else {
            acc += (lv - shift).exp();
        }
        if next < checkpoints.len() && checkpoints[next] == k {
            lmax.push(log_max);
            lmean.push(shift + acc.ln() - (k as f64).ln());
            next += 1;
        }
    }
    let decade: Vec<usize> = (0..checkpoints.len()).filter(|&i| checkpoints[i] * 10 >= n).collect();
    let slope = |ys: &[f64]| {
        let xs: Vec<f64> = decade.iter().map(|&i| (checkpoints[i] as f64).ln()).collect();
        let ys: Vec<f64> = decade.iter().map(|&i| ys[i]).collect();
        least_squares_slope(&xs, &ys)
    };
    let max_slope = slope(&lmax);
    let mean_slope = slope(&lmean);
    Ok(MomentTrack {
        r,
        checkpoints,
        log_running_max: lmax,
        log_running_mean: lmean,
        max_slope,
        mean_slope,
        threshold,
        growth_flag: max_slope > threshold,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMeansReport {
    pub n_batches: usize,
    pub batch_size: usize,
    pub burn_in: usize,
    pub batch_means: Vec<f64>,
    pub mean: f64,
    /// `batch_size ×` sample variance of the batch means.
    pub sigma2_hat: f64,
    /// Skewness of the standardized batch means.
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl BatchMeansReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["batch", "mean"]).map_err(csv_err)?;
        for (i, m) in self.batch_means.iter().enumerate() {
            out.write_record([i.to_string(), format!("{m:.16e}")])
                .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

pub fn clt_batch_means<F: Fn(&Vector) -> f64>(
    trace: &ChainTrace,
    f: F,
    n_batches: usize,
    burn_frac: f64,
) -> Result<BatchMeansReport> {
    let values: Vec<f64> = trace.states.iter().skip(1).map(f).collect();
    clt_batch_means_of(&values, n_batches, burn_frac)
}

/// Non-overlapping batch means of `values` after discarding the first
/// `⌊burn_frac · n⌋` entries; a trailing remainder shorter than a batch is
/// dropped.
pub fn clt_batch_means_of(values: &[f64], n_batches: usize, burn_frac: f64) -> Result<BatchMeansReport> {
    if n_batches < MIN_BATCHES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_BATCHES} batches, got {n_batches}"
        )));
    }
    if !(0.0..1.0).contains(&burn_frac) {
        return Err(Error::InvalidInput(format!(
            "burn_frac must lie in [0, 1), got {burn_frac}"
        )));
    }
    let burn_in = (burn_frac * values.len() as f64).floor() as usize;
    let kept = &values[burn_in..];
    let batch_size = kept.len() / n_batches;
    if batch_size < MIN_BATCH_SIZE {
        return Err(Error::TooShort(format!(
            "{} samples after burn-in give {batch_size} per batch; need {MIN_BATCH_SIZE}",
            kept.len()
        )));
    }
    let batch_means: Vec<f64> = kept
        .chunks_exact(batch_size)
        .take(n_batches)
        .map(|c| {
            let mut s = CompensatedSum::default();
            c.iter().for_each(|&v| s.add(v));
            s.value() / batch_size as f64
        })
        .collect();
    let b = n_batches as f64;
    let mean = batch_means.iter().sum::<f64>() / b;
    let dev: Vec<f64> = batch_means.iter().map(|m| m - mean).collect();
    let m2 = dev.iter().map(|d| d * d).sum::<f64>();
    let var = m2 / (b - 1.0);
    let pop_var = m2 / b;
    let (skewness, excess_kurtosis) = if pop_var > 0.0 {
        let m3 = dev.iter().map(|d| d.powi(3)).sum::<f64>() / b;
        let m4 = dev.iter().map(|d| d.powi(4)).sum::<f64>() / b;
        (m3 / pop_var.powf(1.5), m4 / (pop_var * pop_var) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(BatchMeansReport {
        n_batches,
        batch_size,
        burn_in,
        batch_means,
        mean,
        sigma2_hat: batch_size as f64 * var,
        skewness,
        excess_kurtosis,
    })
}

/// `|S_n − (m_π, v_π + κI)|` at each adaptation snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSeries {
    pub steps: Vec<u64>,
    pub distances: Vec<f64>,
    /// `‖S_n^(v) − (v_π + κI)‖_F / ‖v_π + κI‖_F` at each snapshot.
    pub relative_cov_errors: Vec<f64>,
}

impl LimitSeries {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "distance", "relative_cov_error"])
            .map_err(csv_err)?;
        for i in 0..self.steps.len() {
            out.write_record([
                self.steps[i].to_string(),
                format!("{:.16e}", self.distances[i]),
                format!("{:.16e}", self.relative_cov_errors[i]),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

pub fn adaptation_limit(trace: &ChainTrace, ref_mean: &Vector, ref_cov: &SpdMatrix, kappa: f64) -> Result<LimitSeries> {
    check_dim(trace.dim, ref_mean.len())?;
    adaptation_limit_of(&trace.snapshots, ref_mean, ref_cov, kappa)
}

/// As [`adaptation_limit`] over stored snapshots.
pub fn adaptation_limit_of(
    snapshots: &[AdaptationState],
    ref_mean: &Vector,
    ref_cov: &SpdMatrix,
    kappa: f64,
) -> Result<LimitSeries> {
    let d = ref_mean.len();
    check_dim(d, ref_cov.dim())?;
    for s in snapshots {
        check_dim(d, s.dim())?;
    }
    let limit = ref_cov.matrix() + nalgebra::DMatrix::<f64>::identity(d, d) * kappa;
    let limit_norm = limit.norm();
    let mut out = LimitSeries {
        steps: Vec::with_capacity(snapshots.len()),
        distances: Vec::with_capacity(snapshots.len()),
        relative_cov_errors: Vec::with_capacity(snapshots.len()),
    };
    for s in snapshots {
        let dm = (&s.mean - ref_mean).norm();
        let dv = (s.cov.matrix() - &limit).norm();
        out.steps.push(s.n);
        out.distances.push(dm.max(dv));
        out.relative_cov_errors.push(dv / limit_norm);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::{AmConfig, ConstraintSchedule};
    use crate::rng::stream;
    use crate::targets::Target;
    use crate::{run_am_chain, SpdMatrix};
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn v1(x: f64) -> Vector {
        DVector::from_element(1, x)
    }

    #[test]
    fn constant_function_averages_to_one() {
        let states: Vec<Vector> = (0..50).map(|k| v1(k as f64)).collect();
        let s = running_average_of(&states, |_| 1.0, &[1, 7, 49]).unwrap();
        assert_eq!(s.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn hand_computed_averages() {
        let states: Vec<Vector> = [100.0, 1.0, 2.0, 3.0, 6.0].iter().map(|&x| v1(x)).collect();
        let s = running_average_of(&states, |x| x[0], &[1, 2, 4]).unwrap();
        assert_eq!(s.values, vec![1.0, 1.5, 3.0]);
    }

    #[test]
    fn checkpoint_validation() {
        let states: Vec<Vector> = (0..5).map(|k| v1(k as f64)).collect();
        assert!(running_average_of(&states, |x| x[0], &[5]).is_err());
        assert!(running_average_of(&states, |x| x[0], &[2, 2]).is_err());
        assert!(running_average_of(&states, |x| x[0], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn running_average_is_linear(xs in prop::collection::vec(-1e3f64..1e3, 2..200), a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let states: Vec<Vector> = xs.iter().map(|&x| v1(x)).collect();
            let cps = linear_checkpoints(states.len() - 1, 5);
            let f = running_average_of(&states, |x| x[0], &cps).unwrap();
            let g = running_average_of(&states, |x| x[0] * x[0], &cps).unwrap();
            let h = running_average_of(&states, |x| a * x[0] + b * x[0] * x[0], &cps).unwrap();
            for i in 0..cps.len() {
                let expect = a * f.values[i] + b * g.values[i];
                prop_assert!((h.values[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs().max(a.abs() * f.values[i].abs() + b.abs() * g.values[i].abs())));
            }
        }

        #[test]
        fn batch_variance_shift_invariant(seed in 0u64..1000, c in -100.0f64..100.0) {
            let mut rng = stream(seed);
            let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let a = clt_batch_means_of(&xs, 20, 0.0).unwrap();
            let b = clt_batch_means_of(&shifted, 20, 0.0).unwrap();
            prop_assert!((a.sigma2_hat - b.sigma2_hat).abs() <= 1e-9 * (1.0 + a.sigma2_hat));
        }
    }

    #[test]
    fn constant_batches_have_zero_variance() {
        let r = clt_batch_means_of(&vec![3.5; 5000], 25, 0.1).unwrap();
        assert_eq!(r.sigma2_hat, 0.0);
        assert_eq!(r.skewness, 0.0);
    }

    #[test]
    fn iid_normal_variance() {
        let mut rng = stream(99);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = clt_batch_means_of(&xs, 50, 0.0).unwrap();
        assert!((r.sigma2_hat - 1.0).abs() < 0.15 * 1.0);
    }

    #[test]
    fn too_short_and_too_few() {
        assert!(matches!(
            clt_batch_means_of(&vec![0.0; 900], 20, 0.0),
            Err(Error::TooShort(_))
        ));
        assert!(matches!(
            clt_batch_means_of(&vec![0.0; 9000], 10, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn moment_track_flags_divergence() {
        let t = Target::standard_gaussian(1);
        let df = DriftFunction::new(&t);
        let states: Vec<Vector> = (0..=40).map(|k| v1(k as f64)).collect();
        let m = v_moment_track_of(&states, &df, 0.5, DEFAULT_GROWTH_SLOPE).unwrap();
        assert!(m.growth_flag);
        let states: Vec<Vector> = (0..=40).map(|_| v1(0.3)).collect();
        assert!(matches!(
            v_moment_track_of(&states, &df, 0.0, 2.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn moment_track_flat_for_stationary_chain() {
        let t = Target::standard_gaussian(1);
        let df = DriftFunction::new(&t);
        let mut rng = stream(5);
        let states: Vec<Vector> = (0..=50_000).map(|_| v1(StandardNormal.sample(&mut rng))).collect();
        let m = v_moment_track_of(&states, &df, 0.5, DEFAULT_GROWTH_SLOPE).unwrap();
        assert!(!m.growth_flag);
        assert!(m.mean_slope.abs() < 0.05, "{}", m.mean_slope);
    }

    #[test]
    fn limit_distance_zero_at_limit_and_offset_by_kappa() {
        let kappa = 0.01;
        let cov = SpdMatrix::from_rows(&[vec![1.0, 0.9], vec![0.9, 1.0]]).unwrap();
        let at_limit = SpdMatrix::new(cov.matrix() + nalgebra::DMatrix::identity(2, 2) * kappa).unwrap();
        let mean = DVector::zeros(2);
        let snap = AdaptationState::new(mean.clone(), at_limit, 10).unwrap();
        let trace = ChainTrace {
            seed: 0,
            dim: 2,
            states: vec![mean.clone()],
            accepted: vec![],
            s_norms: vec![0.0],
            mean_norms: vec![0.0],
            cov_norms: vec![0.0],
            constraint_hit: vec![],
            constraint_hits: vec![],
            snapshot_every: 1,
            snapshots: vec![snap.clone(), snap],
        };
        let l = adaptation_limit(&trace, &mean, &cov, kappa).unwrap();
        assert!(l.distances.iter().all(|&d| d < 1e-15));
        let off = adaptation_limit(&trace, &mean, &cov, kappa + 1.0).unwrap();
        assert!(off.distances.iter().all(|&d| d >= 2f64.sqrt() - 1e-12));
    }

    #[test]
    fn limit_distance_decreases_on_gaussian_run() {
        let cov = SpdMatrix::from_rows(&[vec![1.0, 0.9], vec![0.9, 1.0]]).unwrap();
        let t = Target::gaussian(DVector::zeros(2), cov.clone()).unwrap();
        let cfg = AmConfig::for_dim(2);
        let tr = run_am_chain(
            &cfg,
            &ConstraintSchedule::default(),
            &t,
            &DVector::zeros(2),
            &SpdMatrix::identity(2),
            50_000,
            3,
        )
        .unwrap();
        let l = adaptation_limit(&tr, &DVector::zeros(2), &cov, cfg.kappa).unwrap();
        let k = l.distances.len() / 10;
        let median = |xs: &[f64]| {
            let mut v = xs.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(&l.distances[l.distances.len() - k..]) < median(&l.distances[..k]));
    }

    #[test]
    fn diagnostics_are_pure() {
        let t = Target::standard_gaussian(1);
        let cfg = AmConfig::for_dim(1);
        let tr = run_am_chain(
            &cfg,
            &ConstraintSchedule::default(),
            &t,
            &v1(0.0),
            &SpdMatrix::identity(1),
            5000,
            1,
        )
        .unwrap();
        let a = clt_batch_means(&tr, |x| x[0], 20, 0.1).unwrap();
        let b = clt_batch_means(&tr, |x| x[0], 20, 0.1).unwrap();
        assert_eq!(a, b);
    }
}

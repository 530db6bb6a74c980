//! Runs the chains of an experiment and writes everything to one output
//! directory:
//!
//! ```text
//! config.toml              fully explicit config echo
//! chain_{i}.csv            trace columns
//! chain_{i}.json           sidecar (seed, config, snapshots)
//! chain_{i}_diagnostics.json
//! certificate.json         when [certify] is present
//! scaling_audit.csv
//! summary.json             OutputRecord
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use amcert_core::adapt::{AdaptationState, AmSampler, ChainTrace, GrowthReport};
use amcert_core::certify::{
    det_scaling_audit, fit_drift_certificate, mt_bound, CertificateSearch, ConvergenceBound, DriftCertificate,
    ScalingAudit,
};
use amcert_core::diagnostics::{
    adaptation_limit_of, clt_batch_means_of, linear_checkpoints, running_average_of, v_moment_track_of,
    BatchMeansReport, EstimatorSeries, MomentTrack, DEFAULT_GROWTH_SLOPE,
};
use amcert_core::{
    derive_seed, growth_monitor, DriftFunction, Error as CoreError, SpdMatrix, Target, TargetDensity, Vector,
};
use anyhow::{bail, Context};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{CertifySection, DiagnosticsSection, Expectation, RunConfig};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const AUDIT_FILE: &str = "scaling_audit.csv";

pub fn chain_csv_name(i: usize) -> String {
    format!("chain_{i}.csv")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub average: EstimatorSeries,
    pub average_relative_error: Option<f64>,
    pub batch_means: Option<BatchMeansReport>,
    pub batch_means_error: Option<String>,
    pub moments: Option<MomentTrack>,
    pub growth: Option<GrowthReport>,
    /// Terminal `|S_n − (m_π, v_π + κI)|` when the target moments are known.
    pub limit_distance: Option<f64>,
    pub limit_relative_cov_error: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainRecord {
    pub index: usize,
    pub seed: u64,
    pub passed: bool,
    pub error: Option<String>,
    pub csv: Option<String>,
    pub csv_sha256: Option<String>,
    pub n_steps: u64,
    pub acceptance_rate: Option<f64>,
    pub constraint_hits: Option<usize>,
    /// Smallest eigenvalue over all covariance snapshots.
    pub min_snapshot_eigenvalue: Option<f64>,
    pub seconds: f64,
    pub steps_per_second: f64,
    pub diagnostics: Option<ChainDiagnostics>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyRecord {
    pub expect: Expectation,
    pub certificate: Option<DriftCertificate>,
    pub bound: Option<ConvergenceBound>,
    pub audit: Option<ScalingAudit>,
    pub error: Option<String>,
    pub passed: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputRecord {
    pub config_toml: String,
    pub output_dir: PathBuf,
    pub chains: Vec<ChainRecord>,
    pub certify: Option<CertifyRecord>,
    /// Every file written, except this summary.
    pub files: Vec<FileEntry>,
    pub wall_seconds: f64,
    pub all_passed: bool,
}

pub fn build_target(cfg: &RunConfig) -> anyhow::Result<Target> {
    cfg.target.build().context("building target")
}

/// The `i`-th chain of `cfg`, regenerated in memory.
pub fn run_chain(cfg: &RunConfig, target: &Target, i: usize) -> amcert_core::Result<ChainTrace> {
    AmSampler::new(cfg.am_config(), cfg.constraint)
        .with_snapshot_every(cfg.sampler.snapshot_every)
        .run(
            target,
            &cfg.x0(),
            &cfg.sigma0(),
            cfg.run.n_steps,
            derive_seed(cfg.run.root_seed, i as u64),
        )
}

pub fn trace_csv_bytes(trace: &ChainTrace) -> amcert_core::Result<Vec<u8>> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    Ok(buf)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<FileEntry> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(FileEntry {
        path: name.to_string(),
        sha256: sha256_hex(bytes),
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<FileEntry> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(dir, name, &bytes)
}

/// Diagnostics computed from stored states and snapshots, so that `sample`
/// and `diagnose` agree.
pub fn diagnose_states(
    target: &Target,
    cfg: &RunConfig,
    dg: &DiagnosticsSection,
    states: &[Vector],
    snapshots: &[AdaptationState],
) -> amcert_core::Result<ChainDiagnostics> {
    let n = states.len().saturating_sub(1);
    let cps = linear_checkpoints(n, cfg.run.checkpoints);
    let mut average = running_average_of(states, |x| dg.average.eval(x), &cps)?;
    if let Some(r) = dg.average.reference(target) {
        average = average.with_reference(r);
    }
    let values: Vec<f64> = states.iter().skip(1).map(|x| dg.batch.eval(x)).collect();
    let (batch_means, batch_means_error) = match clt_batch_means_of(&values, dg.n_batches, dg.burn_frac) {
        Ok(r) => (Some(r), None),
        Err(e @ CoreError::TooShort(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let df = DriftFunction::new(target);
    let moments = match v_moment_track_of(states, &df, dg.moment_r, DEFAULT_GROWTH_SLOPE) {
        Ok(m) => Some(m),
        Err(CoreError::TooShort(_)) => None,
        Err(e) => return Err(e),
    };
    let (limit_distance, limit_relative_cov_error) = match target.moments() {
        Some((m, c)) if !snapshots.is_empty() => {
            let ref_cov = SpdMatrix::new(c)?;
            let lim = adaptation_limit_of(snapshots, &m, &ref_cov, cfg.sampler.kappa)?;
            (lim.distances.last().copied(), lim.relative_cov_errors.last().copied())
        }
        _ => (None, None),
    };
    let passed = average.last().is_some_and(f64::is_finite)
        && batch_means.as_ref().is_none_or(|b| b.sigma2_hat.is_finite())
        && moments.as_ref().is_none_or(|m| !m.growth_flag);
    Ok(ChainDiagnostics {
        average_relative_error: average.relative_error(),
        average,
        batch_means,
        batch_means_error,
        moments,
        growth: None,
        limit_distance,
        limit_relative_cov_error,
        passed,
    })
}

fn run_one(cfg: &RunConfig, target: &Target, dir: &Path, i: usize) -> (ChainRecord, Vec<FileEntry>) {
    let seed = derive_seed(cfg.run.root_seed, i as u64);
    let start = Instant::now();
    let mut rec = ChainRecord {
        index: i,
        seed,
        passed: false,
        error: None,
        csv: None,
        csv_sha256: None,
        n_steps: cfg.run.n_steps,
        acceptance_rate: None,
        constraint_hits: None,
        min_snapshot_eigenvalue: None,
        seconds: 0.0,
        steps_per_second: 0.0,
        diagnostics: None,
    };
    let mut files = Vec::new();
    let result = (|| -> anyhow::Result<()> {
        let trace = run_chain(cfg, target, i).with_context(|| format!("chain {i}"))?;
        let elapsed = start.elapsed().as_secs_f64();
        rec.seconds = elapsed;
        rec.steps_per_second = cfg.run.n_steps as f64 / elapsed.max(1e-9);
        rec.acceptance_rate = Some(trace.acceptance_rate());
        rec.constraint_hits = Some(trace.constraint_hits.len());
        rec.min_snapshot_eigenvalue = Some(
            trace
                .snapshots
                .iter()
                .map(|s| s.cov.min_eigenvalue())
                .fold(f64::INFINITY, f64::min),
        );
        let csv = write_file(dir, &chain_csv_name(i), &trace_csv_bytes(&trace)?)?;
        rec.csv = Some(csv.path.clone());
        rec.csv_sha256 = Some(csv.sha256.clone());
        files.push(csv);
        files.push(write_json(
            dir,
            &format!("chain_{i}.json"),
            &trace.sidecar(&cfg.am_config(), &cfg.constraint),
        )?);
        let mut passed = true;
        if let Some(dg) = &cfg.diagnostics {
            let mut d = diagnose_states(target, cfg, dg, &trace.states, &trace.snapshots)?;
            d.growth = Some(growth_monitor(&trace, dg.growth_eps)?);
            passed = d.passed;
            files.push(write_json(dir, &format!("chain_{i}_diagnostics.json"), &d)?);
            rec.diagnostics = Some(d);
        }
        rec.passed = passed;
        Ok(())
    })();
    if let Err(e) = result {
        rec.error = Some(format!("{e:#}"));
        rec.passed = false;
    }
    (rec, files)
}

/// Certifies the target with proposal covariance `section.v`.
pub fn certify_target(target: &Target, section: &CertifySection, kappa: f64) -> CertifyRecord {
    let start = Instant::now();
    let mut search = CertificateSearch {
        probe_max: section.probe_max,
        ..CertificateSearch::default()
    };
    search.radii.retain(|r| *r <= section.probe_max);
    let mut rec = CertifyRecord {
        expect: section.expect,
        certificate: None,
        bound: None,
        audit: None,
        error: None,
        passed: false,
        seconds: 0.0,
    };
    let outcome = (|| -> amcert_core::Result<()> {
        let v = SpdMatrix::from_rows(&section.v)?;
        let cert = fit_drift_certificate(target, &v, &search, section.margin)?;
        rec.bound = Some(mt_bound(cert.lambda, cert.b, cert.delta)?);
        rec.certificate = Some(cert);
        let vs: Vec<SpdMatrix> = section.audit_scales.iter().map(|s| v.scale(*s)).collect();
        rec.audit = Some(det_scaling_audit(target, &vs, kappa, &search, section.margin)?);
        Ok(())
    })();
    rec.passed = match (&outcome, section.expect) {
        (Ok(()), Expectation::Drift) => rec
            .certificate
            .as_ref()
            .is_some_and(|c| c.holdout.passed && c.lambda < 1.0),
        (Err(CoreError::NoDriftFound(_)), Expectation::NoDrift) => true,
        _ => false,
    };
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec.seconds = start.elapsed().as_secs_f64();
    rec
}

fn audit_csv(audit: &ScalingAudit) -> Vec<u8> {
    let mut out = String::from("det,lambda,delta,ratio\n");
    for r in &audit.rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.det, r.lambda, r.delta, r.ratio
        ));
    }
    out.into_bytes()
}

/// Writes the certificate record and its scaling-audit table.
pub fn write_certify(dir: &Path, rec: &CertifyRecord) -> anyhow::Result<Vec<FileEntry>> {
    let mut files = vec![write_json(dir, CERTIFICATE_FILE, rec)?];
    if let Some(a) = &rec.audit {
        files.push(write_file(dir, AUDIT_FILE, &audit_csv(a))?);
    }
    Ok(files)
}

pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run
        .output_dir
        .clone()
        .or_else(|| std::env::var_os("AMCERT_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("amcert-out"))
}

/// Runs every chain, then the optional certification, then writes the
/// summary. Per-chain failures are recorded and do not stop other chains.
pub fn run_experiment(cfg: &RunConfig) -> anyhow::Result<OutputRecord> {
    run_experiment_in(cfg, &output_dir(cfg))
}

pub fn run_experiment_in(cfg: &RunConfig, dir: &Path) -> anyhow::Result<OutputRecord> {
    let start = Instant::now();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let target = build_target(cfg)?;
    let config_toml = cfg.to_toml();
    let mut files = vec![write_file(dir, CONFIG_FILE, config_toml.as_bytes())?];

    let workers = cfg.run.workers.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let results: Vec<(ChainRecord, Vec<FileEntry>)> = pool.install(|| {
        (0..cfg.run.n_chains)
            .into_par_iter()
            .map(|i| run_one(cfg, &target, dir, i))
            .collect()
    });
    let mut chains = Vec::with_capacity(results.len());
    for (rec, f) in results {
        chains.push(rec);
        files.extend(f);
    }

    let certify = cfg
        .certify
        .as_ref()
        .map(|c| certify_target(&target, c, cfg.sampler.kappa));
    if let Some(c) = &certify {
        files.extend(write_certify(dir, c)?);
    }

    let all_passed = chains.iter().all(|c| c.passed) && certify.as_ref().is_none_or(|c| c.passed);
    let record = OutputRecord {
        config_toml,
        output_dir: dir.to_path_buf(),
        chains,
        certify,
        files,
        wall_seconds: start.elapsed().as_secs_f64(),
        all_passed,
    };
    write_json(dir, SUMMARY_FILE, &record)?;
    Ok(record)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayRow {
    pub index: usize,
    pub recorded_sha256: String,
    pub stored_sha256: String,
    pub replayed_sha256: String,
    pub matches: bool,
}

/// Re-derives each chain from the stored config and seeds and checks that
/// the stored CSV, the hash recorded in the summary and the replayed bytes
/// all agree.
pub fn replay(dir: &Path) -> anyhow::Result<Vec<ReplayRow>> {
    let cfg = crate::config::parse_config(&dir.join(CONFIG_FILE))?;
    let summary: OutputRecord = serde_json::from_slice(
        &fs::read(dir.join(SUMMARY_FILE)).with_context(|| format!("reading {}", dir.join(SUMMARY_FILE).display()))?,
    )?;
    if summary.config_toml != cfg.to_toml() {
        bail!("config echo in {SUMMARY_FILE} does not match {CONFIG_FILE}");
    }
    let target = build_target(&cfg)?;
    let rows: Vec<anyhow::Result<ReplayRow>> = summary
        .chains
        .par_iter()
        .filter(|c| c.csv_sha256.is_some())
        .map(|c| {
            let stored = fs::read(dir.join(chain_csv_name(c.index)))
                .with_context(|| format!("reading chain {} trace", c.index))?;
            let replayed = trace_csv_bytes(&run_chain(&cfg, &target, c.index)?)?;
            let row = ReplayRow {
                index: c.index,
                recorded_sha256: c.csv_sha256.clone().unwrap_or_default(),
                stored_sha256: sha256_hex(&stored),
                replayed_sha256: sha256_hex(&replayed),
                matches: false,
            };
            Ok(ReplayRow {
                matches: row.recorded_sha256 == row.stored_sha256 && row.stored_sha256 == row.replayed_sha256,
                ..row
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    if let Some(bad) = rows.iter().find(|r| !r.matches) {
        bail!(
            "hash mismatch for chain {}: recorded {}, stored {}, replayed {}",
            bad.index,
            bad.recorded_sha256,
            bad.stored_sha256,
            bad.replayed_sha256
        );
    }
    Ok(rows)
}

/// Recomputes diagnostics from a finished run directory.
pub fn diagnose_dir(dir: &Path) -> anyhow::Result<Vec<ChainDiagnostics>> {
    let cfg = crate::config::parse_config(&dir.join(CONFIG_FILE))?;
    let dg = cfg.diagnostics.clone().unwrap_or_default();
    let target = build_target(&cfg)?;
    let mut out = Vec::new();
    for i in 0..cfg.run.n_chains {
        let path = dir.join(chain_csv_name(i));
        if !path.exists() {
            continue;
        }
        let cols = amcert_core::adapt::read_csv(fs::File::open(&path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        let side: amcert_core::adapt::TraceSidecar =
            serde_json::from_slice(&fs::read(dir.join(format!("chain_{i}.json")))?)?;
        out.push(diagnose_states(&target, &cfg, &dg, &cols.states, &side.snapshots)?);
    }
    Ok(out)
}

pub fn write_stdout_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// `x0` as a vector; used by subcommands that take a starting point.
pub fn vector(v: &[f64]) -> Vector {
    DVector::from_vec(v.to_vec())
}

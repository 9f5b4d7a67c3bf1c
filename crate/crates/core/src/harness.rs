// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment orchestration: length sweeps, sigma grids, baselines, and the
//! JSON/CSV artifacts they produce.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Projection;
use crate::noise::{sample_ensemble, NoiseConfig, RNG_ALGORITHM};
use crate::optimizer::{optimize_sequence, OptimizerOptions, SequenceProblem, SolutionArchive};
use crate::sequence::{InteractionKind, RotationParams, SequenceParams};

/// Version tag written into every JSON artifact.
pub const SCHEMA_VERSION: &str = "leakseq/1";

/// Tolerance used by [`verify_record`].
pub const VERIFY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub rng_algorithm: String,
    pub seed: u64,
    pub command: String,
    pub interaction: InteractionKind,
    pub noise: NoiseConfig,
    pub optimizer: OptimizerOptions,
    pub eval_m: usize,
    pub lengths: Vec<usize>,
    /// Accepted L-BFGS iterations per solved length, in sweep order.
    pub iterations: Vec<(usize, usize)>,
    /// Seconds since the Unix epoch when the run started.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        interaction: InteractionKind,
        noise: &NoiseConfig,
        optimizer: &OptimizerOptions,
        eval_m: usize,
        lengths: &[usize],
    ) -> RunManifest {
        RunManifest {
            schema_version: SCHEMA_VERSION.to_string(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed: noise.seed,
            command: command.to_string(),
            interaction,
            noise: noise.clone(),
            optimizer: optimizer.clone(),
            eval_m,
            lengths: lengths.to_vec(),
            iterations: Vec::new(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Stable identifier shared by the records of one run.
    pub fn id(&self) -> String {
        format!("{}-{}-seed{}", self.command, self.interaction, self.seed)
    }
}

/// One solved sequence with everything needed to re-derive its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub interaction: InteractionKind,
    pub n_steps: usize,
    /// `[alpha1, beta1, gamma1, alpha2, beta2, gamma2]` per step, radians.
    pub angles: Vec<[f64; 6]>,
    /// Training ensemble; the held-out ensemble uses `seed + 1` and `eval_m`.
    pub noise: NoiseConfig,
    pub eval_m: usize,
    pub j_value: f64,
    pub in_sample_gate_error: f64,
    pub in_sample_pe_error: f64,
    pub out_of_sample_gate_error: f64,
    pub out_of_sample_pe_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub manifest: String,
}

impl SolutionRecord {
    pub fn params(&self) -> Result<SequenceParams> {
        if self.angles.len() != self.n_steps {
            return Err(Error::domain(format!(
                "record lists {} steps but n_steps = {}",
                self.angles.len(),
                self.n_steps
            )));
        }
        SequenceParams::new(
            self.interaction,
            self.angles.iter().map(|a| RotationParams::from_array(*a)).collect(),
        )
    }
}

/// Figures of merit of a fixed sequence, recomputed from its configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reevaluation {
    pub j_value: f64,
    pub in_sample_gate_error: f64,
    pub in_sample_pe_error: f64,
    pub out_of_sample_gate_error: f64,
    pub out_of_sample_pe_error: f64,
}

fn held_out_config(noise: &NoiseConfig, eval_m: usize) -> NoiseConfig {
    NoiseConfig {
        seed: noise.seed.wrapping_add(1),
        m_realizations: eval_m,
        ..noise.clone()
    }
}

/// Rebuilds both ensembles of a record and evaluates its angles on them.
pub fn reevaluate(record: &SolutionRecord) -> Result<Reevaluation> {
    let params = record.params()?;
    let training = sample_ensemble(&record.noise, record.n_steps)?;
    let held_out = sample_ensemble(&held_out_config(&record.noise, record.eval_m), record.n_steps)?;
    let a = SequenceProblem::new(record.interaction, &training)?.metrics(&params, Projection::Raw)?;
    let b = SequenceProblem::new(record.interaction, &held_out)?.metrics(&params, Projection::Raw)?;
    Ok(Reevaluation {
        j_value: a.j_value,
        in_sample_gate_error: a.gate_error,
        in_sample_pe_error: a.pe_error,
        out_of_sample_gate_error: b.gate_error,
        out_of_sample_pe_error: b.pe_error,
    })
}

/// Checks every recorded metric against a fresh evaluation to [`VERIFY_TOL`].
pub fn verify_record(record: &SolutionRecord) -> Result<Reevaluation> {
    let fresh = reevaluate(record)?;
    let pairs = [
        ("j_value", record.j_value, fresh.j_value),
        ("in_sample_gate_error", record.in_sample_gate_error, fresh.in_sample_gate_error),
        ("in_sample_pe_error", record.in_sample_pe_error, fresh.in_sample_pe_error),
        ("out_of_sample_gate_error", record.out_of_sample_gate_error, fresh.out_of_sample_gate_error),
        ("out_of_sample_pe_error", record.out_of_sample_pe_error, fresh.out_of_sample_pe_error),
    ];
    for (field, recorded, recomputed) in pairs {
        if !((recorded - recomputed).abs() <= VERIFY_TOL) {
            return Err(Error::Verification {
                n_steps: record.n_steps,
                field: field.to_string(),
                recorded,
                recomputed,
            });
        }
    }
    Ok(fresh)
}

/// One row of a length sweep. Metric fields are empty when the length failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub in_sample_error: Option<f64>,
    pub oos_error: Option<f64>,
    pub pe_error: Option<f64>,
    pub oos_pe_error: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSweep {
    pub manifest: RunManifest,
    pub rows: Vec<SweepRow>,
    pub records: Vec<SolutionRecord>,
}

impl LengthSweep {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(SweepRow::is_ok)
    }

    pub fn record(&self, n: usize) -> Option<&SolutionRecord> {
        self.records.iter().find(|r| r.n_steps == n)
    }

    /// The solved row with the lowest out-of-sample gate error.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.oos_error.is_some())
            .min_by(|a, b| a.oos_error.unwrap().total_cmp(&b.oos_error.unwrap()))
    }
}

/// Solves each length in order, bootstrapping composite lengths from the
/// solutions already found. A failing length is recorded in its row and the
/// sweep moves on; lengths that depend on it fail with a dependency error.
pub fn run_length_sweep(
    lengths: &[usize],
    interaction: InteractionKind,
    config: &NoiseConfig,
    opts: &OptimizerOptions,
    eval_m: usize,
) -> Result<LengthSweep> {
    if lengths.is_empty() {
        return Err(Error::domain("length sweep needs at least one length"));
    }
    if lengths.windows(2).any(|w| w[0] >= w[1]) || lengths[0] == 0 {
        return Err(Error::domain("lengths must be positive and strictly increasing"));
    }
    config.validate()?;
    opts.validate()?;

    let mut manifest = RunManifest::new("sweep", interaction, config, opts, eval_m, lengths);
    let id = manifest.id();
    let mut archive = SolutionArchive::new();
    let mut rows = Vec::with_capacity(lengths.len());
    let mut records = Vec::with_capacity(lengths.len());
    for &n in lengths {
        match optimize_sequence(n, interaction, config, opts, &archive, eval_m) {
            Ok(r) => {
                manifest.iterations.push((n, r.iterations));
                rows.push(SweepRow {
                    n,
                    in_sample_error: Some(r.in_sample_gate_error),
                    oos_error: Some(r.out_of_sample_gate_error),
                    pe_error: Some(r.in_sample_pe_error),
                    oos_pe_error: Some(r.out_of_sample_pe_error),
                    iterations: Some(r.iterations),
                    converged: Some(r.converged),
                    status: "ok".to_string(),
                });
                records.push(SolutionRecord {
                    interaction,
                    n_steps: n,
                    angles: r.params.steps().iter().map(RotationParams::to_array).collect(),
                    noise: config.clone(),
                    eval_m,
                    j_value: r.j_value,
                    in_sample_gate_error: r.in_sample_gate_error,
                    in_sample_pe_error: r.in_sample_pe_error,
                    out_of_sample_gate_error: r.out_of_sample_gate_error,
                    out_of_sample_pe_error: r.out_of_sample_pe_error,
                    iterations: r.iterations,
                    converged: r.converged,
                    manifest: id.clone(),
                });
                archive.insert(n, r.params);
            }
            Err(e) => rows.push(SweepRow {
                n,
                in_sample_error: None,
                oos_error: None,
                pe_error: None,
                oos_pe_error: None,
                iterations: None,
                converged: None,
                status: format!("error: {e}"),
            }),
        }
    }
    Ok(LengthSweep {
        manifest,
        rows,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub sigma_logical: f64,
    pub sigma_leakage: f64,
    pub gate_error: f64,
}

/// Mean gate error of a fixed solution at every `(sigma_logical,
/// sigma_leakage)` pair, rows in `logical`-major order. Each cell draws
/// `eval_m` realizations from the same `seed`; local-noise settings are taken
/// from the record.
pub fn run_sigma_grid(
    record: &SolutionRecord,
    sigma_logical_axis: &[f64],
    sigma_leakage_axis: &[f64],
    eval_m: usize,
    seed: u64,
) -> Result<Vec<GridRow>> {
    if sigma_logical_axis.is_empty() || sigma_leakage_axis.is_empty() {
        return Err(Error::domain("sigma grid axes must be non-empty"));
    }
    let params = record.params()?;
    let cells: Vec<(f64, f64)> = sigma_logical_axis
        .iter()
        .flat_map(|&a| sigma_leakage_axis.iter().map(move |&b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(sigma_logical, sigma_leakage)| {
            let config = NoiseConfig {
                sigma_logical,
                sigma_leakage,
                m_realizations: eval_m,
                seed,
                ..record.noise.clone()
            };
            let ensemble = sample_ensemble(&config, record.n_steps)?;
            let m = SequenceProblem::new(record.interaction, &ensemble)?.metrics(&params, Projection::Raw)?;
            Ok(GridRow {
                sigma_logical,
                sigma_leakage,
                gate_error: m.gate_error,
            })
        })
        .collect()
}

/// Mean gate error of the identity-rotation sequence of length `n_steps`.
pub fn run_baseline(interaction: InteractionKind, config: &NoiseConfig, n_steps: usize) -> Result<f64> {
    let ensemble = sample_ensemble(config, n_steps)?;
    let zeros = SequenceParams::zeros(interaction, n_steps)?;
    Ok(SequenceProblem::new(interaction, &ensemble)?
        .metrics(&zeros, Projection::Raw)?
        .gate_error)
}

/// Contents of a solution archive file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveFile {
    pub schema_version: String,
    pub manifest: RunManifest,
    pub records: Vec<SolutionRecord>,
}

impl ArchiveFile {
    pub fn new(manifest: RunManifest, records: Vec<SolutionRecord>) -> ArchiveFile {
        ArchiveFile {
            schema_version: SCHEMA_VERSION.to_string(),
            manifest,
            records,
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        field: "<root>".to_string(),
        message: e.to_string(),
    })?;
    let mut file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    file.write_all(text.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| io_error(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        let message = e.to_string();
        let field = message
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| format!("line {} column {}", e.line(), e.column()));
        Error::Schema {
            path: path.to_path_buf(),
            field,
            message,
        }
    })
}

pub fn write_archive(path: &Path, archive: &ArchiveFile) -> Result<()> {
    write_json(path, archive)
}

/// Reads an archive and checks its schema version.
pub fn read_archive(path: &Path) -> Result<ArchiveFile> {
    let version: serde_json::Value = read_json(path)?;
    match version.get("schema_version").and_then(|v| v.as_str()) {
        Some(SCHEMA_VERSION) => {}
        other => {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                field: "schema_version".to_string(),
                message: format!("expected {SCHEMA_VERSION:?}, found {other:?}"),
            })
        }
    }
    read_json(path)
}

/// Outcome of re-evaluating one archived record.
#[derive(Debug)]
pub struct VerifyItem {
    pub n_steps: usize,
    pub result: Result<Reevaluation>,
}

/// Re-evaluates every record of an archive file.
pub fn verify_archive(path: &Path) -> Result<Vec<VerifyItem>> {
    let archive = read_archive(path)?;
    Ok(archive
        .records
        .iter()
        .map(|r| VerifyItem {
            n_steps: r.n_steps,
            result: verify_record(r),
        })
        .collect())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        other => Error::Schema {
            path: path.to_path_buf(),
            field: "<csv>".to_string(),
            message: format!("{other:?}"),
        },
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Columns `N,in_sample_error,oos_error,pe_error,oos_pe_error,iterations,converged,status`.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Columns `sigma_logical,sigma_leakage,gate_error`.
pub fn write_grid_csv(path: &Path, rows: &[GridRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Paths of the artifacts a sweep writes into `dir`.
#[derive(Debug, Clone)]
pub struct SweepArtifacts {
    pub csv: PathBuf,
    pub archive: PathBuf,
    pub manifest: PathBuf,
}

/// Writes `sweep.csv`, `solutions.json` and `manifest.json` into `dir`.
pub fn write_sweep_artifacts(dir: &Path, sweep: &LengthSweep) -> Result<SweepArtifacts> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let out = SweepArtifacts {
        csv: dir.join("sweep.csv"),
        archive: dir.join("solutions.json"),
        manifest: dir.join("manifest.json"),
    };
    write_sweep_csv(&out.csv, &sweep.rows)?;
    write_archive(&out.archive, &ArchiveFile::new(sweep.manifest.clone(), sweep.records.clone()))?;
    write_json(&out.manifest, &sweep.manifest)?;
    Ok(out)
}

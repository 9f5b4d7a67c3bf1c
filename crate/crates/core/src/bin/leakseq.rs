// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leakseq::harness::{
    read_archive, run_baseline, run_length_sweep, run_sigma_grid, verify_archive, write_grid_csv, write_json,
    write_sweep_artifacts, LengthSweep, RunManifest,
};
use leakseq::noise::{local_rotation_fidelity, NoiseConfig};
use leakseq::optimizer::{greatest_proper_divisor, OptimizerOptions};
use leakseq::sequence::InteractionKind;

#[derive(Parser)]
#[command(name = "leakseq", version, about = "Robust entangling sequences for leaky qutrit pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct NoiseArgs {
    #[arg(long, default_value = "zz")]
    interaction: InteractionKind,
    /// Training realizations.
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 0.065)]
    sigma_logical: f64,
    #[arg(long, default_value_t = 0.065)]
    sigma_leakage: f64,
    #[arg(long, default_value_t = 0.002)]
    sigma_local: f64,
    /// Enable noise on the single-qutrit rotations.
    #[arg(long)]
    local_noise: bool,
    /// Treat Z rotations as error free.
    #[arg(long)]
    virtual_z: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl NoiseArgs {
    fn config(&self) -> NoiseConfig {
        NoiseConfig {
            sigma_logical: self.sigma_logical,
            sigma_leakage: self.sigma_leakage,
            sigma_local: self.sigma_local,
            local_enabled: self.local_noise,
            virtual_z: self.virtual_z,
            m_realizations: self.m,
            seed: self.seed,
            ..NoiseConfig::default()
        }
    }
}

#[derive(Args, Clone)]
struct SolveArgs {
    #[command(flatten)]
    noise: NoiseArgs,
    /// Held-out realizations for out-of-sample metrics.
    #[arg(long, default_value_t = 1000)]
    eval_m: usize,
    #[arg(long, default_value_t = 0)]
    restarts: usize,
    #[arg(long, default_value_t = 15_000)]
    max_iterations: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl SolveArgs {
    fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            restarts: self.restarts,
            max_iterations: self.max_iterations,
            ..OptimizerOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one length (and the divisor chain it bootstraps from).
    Optimize {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Solve a list of lengths in increasing order.
    Sweep {
        /// Comma-separated lengths or ranges, e.g. `1-16` or `1,2,4,8`.
        #[arg(long, default_value = "1-16", value_parser = parse_lengths)]
        lengths: Lengths,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Re-evaluate an archived solution over a grid of noise strengths.
    SigmaGrid {
        /// Archive written by `sweep` or `optimize`.
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.0325,0.065,0.0975,0.13")]
        logical_axis: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.0325,0.065,0.0975,0.13")]
        leakage_axis: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        eval_m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Mean gate error with identity rotations.
    Baseline {
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Average fidelity of noisy single-qutrit rotations.
    LocalFidelity {
        #[arg(long, default_value_t = 0.002)]
        sigma_local: f64,
        #[arg(long, default_value_t = 1000)]
        coeff_sets: usize,
        #[arg(long, default_value_t = 1000)]
        angle_sets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-evaluate every record of an archive against its stored metrics.
    Verify {
        #[arg(long)]
        archive: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Lengths(Vec<usize>);

fn parse_lengths(s: &str) -> Result<Lengths, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.trim().parse().map_err(|e| format!("{part}: {e}"))?,
                    b.trim().parse().map_err(|e| format!("{part}: {e}"))?,
                );
                if a > b {
                    return Err(format!("empty range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|e| format!("{part}: {e}"))?),
        }
    }
    if out.is_empty() {
        return Err("no lengths given".to_string());
    }
    Ok(Lengths(out))
}

/// `n` together with every length its warm start transitively needs.
fn divisor_chain(n: usize) -> Vec<usize> {
    let mut chain = vec![n];
    while let Some(d) = greatest_proper_divisor(*chain.last().unwrap()).filter(|&d| d > 1) {
        chain.push(d);
    }
    chain.reverse();
    chain
}

fn report_sweep(sweep: &LengthSweep, out: &Path) -> leakseq::Result<bool> {
    println!("N,in_sample_error,oos_error,pe_error,iterations,converged,status");
    for r in &sweep.rows {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
        println!(
            "{},{},{},{},{},{},{}",
            r.n,
            f(r.in_sample_error),
            f(r.oos_error),
            f(r.pe_error),
            r.iterations.map(|v| v.to_string()).unwrap_or_default(),
            r.converged.map(|v| v.to_string()).unwrap_or_default(),
            r.status
        );
    }
    let paths = write_sweep_artifacts(out, sweep)?;
    println!(
        "wrote {}, {}, {}",
        paths.csv.display(),
        paths.archive.display(),
        paths.manifest.display()
    );
    if !sweep.all_ok() {
        eprintln!("failed lengths:");
        for r in sweep.rows.iter().filter(|r| !r.is_ok()) {
            eprintln!("  N={}: {}", r.n, r.status);
        }
    }
    Ok(sweep.all_ok())
}

fn run(cli: Cli) -> leakseq::Result<bool> {
    match cli.command {
        Command::Optimize { n, solve } => {
            let sweep = run_length_sweep(
                &divisor_chain(n),
                solve.noise.interaction,
                &solve.noise.config(),
                &solve.options(),
                solve.eval_m,
            )?;
            report_sweep(&sweep, &solve.out)
        }
        Command::Sweep {
            lengths: Lengths(mut lengths),
            solve,
        } => {
            lengths.sort_unstable();
            lengths.dedup();
            let sweep = run_length_sweep(
                &lengths,
                solve.noise.interaction,
                &solve.noise.config(),
                &solve.options(),
                solve.eval_m,
            )?;
            report_sweep(&sweep, &solve.out)
        }
        Command::SigmaGrid {
            archive,
            n,
            logical_axis,
            leakage_axis,
            eval_m,
            seed,
            out,
        } => {
            let file = read_archive(&archive)?;
            let record = file
                .records
                .iter()
                .find(|r| r.n_steps == n)
                .ok_or_else(|| leakseq::Error::Domain(format!("{} has no solution for N={n}", archive.display())))?;
            let rows = run_sigma_grid(record, &logical_axis, &leakage_axis, eval_m, seed)?;
            std::fs::create_dir_all(&out).map_err(|source| leakseq::Error::Io {
                path: out.clone(),
                source,
            })?;
            println!("sigma_logical,sigma_leakage,gate_error");
            for r in &rows {
                println!("{},{},{:.6e}", r.sigma_logical, r.sigma_leakage, r.gate_error);
            }
            let mut manifest = RunManifest::new(
                "sigma-grid",
                record.interaction,
                &NoiseConfig {
                    seed,
                    m_realizations: eval_m,
                    ..record.noise.clone()
                },
                &OptimizerOptions::default(),
                eval_m,
                &[n],
            );
            manifest.iterations.push((n, record.iterations));
            write_grid_csv(&out.join("sigma_grid.csv"), &rows)?;
            write_json(&out.join("sigma_grid_manifest.json"), &manifest)?;
            println!("wrote {}", out.join("sigma_grid.csv").display());
            Ok(true)
        }
        Command::Baseline { n, noise } => {
            let e = run_baseline(noise.interaction, &noise.config(), n)?;
            println!("baseline gate error (N={n}, M={}, seed={}): {e:.6}", noise.m, noise.seed);
            Ok(true)
        }
        Command::LocalFidelity {
            sigma_local,
            coeff_sets,
            angle_sets,
            seed,
        } => {
            let f = local_rotation_fidelity(sigma_local, coeff_sets, angle_sets, seed)?;
            println!("local rotation fidelity (sigma_local={sigma_local}): {f:.6}");
            Ok(true)
        }
        Command::Verify { archive } => {
            let items = verify_archive(&archive)?;
            let mut ok = true;
            for item in &items {
                match &item.result {
                    Ok(_) => println!("N={}: ok", item.n_steps),
                    Err(e) => {
                        ok = false;
                        println!("N={}: FAILED: {e}", item.n_steps);
                    }
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

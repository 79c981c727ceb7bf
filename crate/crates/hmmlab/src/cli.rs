//! Command-line front end.
//!
//! Subcommands: `structure-check` (assemble and independently verify the
//! stencil structure), `run` (Monte Carlo ensemble with CSV/JSON artifacts),
//! `scan-amplification` (seed-coupled patch-ratio scan), `scan-epsilon`
//! (correlation-length scan), `field-check` (field synthesis diagnostics and
//! optional raw dump), and `reference` (limit variances from a refined
//! deterministic solve).
//!
//! Exit codes: 0 success, 1 validation or verification failure, 2 ensemble
//! failure (more than 1% of samples invalid).

use crate::config::RunConfig;
use crate::corrector::reference_solution;
use crate::error::{Error, Result};
use crate::experiment::{amplification_scan, epsilon_scan, prepare, run_ensemble, with_threads};
use crate::field::probe::{covariance_probe, gaussian_layer_moments, stationarity_probe};
use crate::field::FieldSpec;
use crate::funcs::SmoothFn;
use crate::hmm::{assemble, verify_structure, AssemblyInputs};
use crate::mesh::Mesh;
use crate::rng::sample_seed;
use crate::runio::{
    write_amplification_csv, write_epsilon_scan_csv, write_f64_grid, write_json,
    write_samples_csv, AmplificationRow, EpsilonScanRow, PredictedVariances, RunRecord,
    RunSummary,
};
use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Verification tolerance of `structure-check`.
const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(
    name = "hmmlab",
    version,
    about = "Numerical laboratory for corrector fluctuations of a sampled \
             finite-element scheme with random potentials",
    long_about = "Solves -Δu + (q0 + q_ε)u = f on the unit square with a \
                  first-order triangular scheme whose potential is sampled on \
                  shrunken element patches, and measures the Gaussian \
                  fluctuations of the corrector (u_ε - u⁰, φ) against the \
                  predicted intermediate and limiting variances.\n\nWithout \
                  --config, a desk-scale short-range demonstration \
                  configuration is used (N = 8, ε = 2⁻⁹, 1000 samples)."
)]
struct Cli {
    /// Configuration file (sectioned key-value text).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the base seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sampling (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Override the output directory of the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble both flavors and verify the stencil structure (exit 1 on
    /// any residual above 1e-12).
    StructureCheck {
        /// Override the mesh size.
        #[arg(long)]
        n: Option<usize>,
        /// Override the patch ratio.
        #[arg(long)]
        r: Option<f64>,
        /// Negative-control hook: perturb one stencil entry before
        /// verification; the check must then fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Run a Monte Carlo ensemble and write samples.csv + summary.json.
    Run,
    /// Seed-coupled scan over patch ratios; writes amplification.csv/.json.
    ScanAmplification {
        /// Comma-separated patch ratios (baseline is the largest).
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25")]
        r_list: Vec<f64>,
    },
    /// Scan over correlation lengths; writes epsilon.csv/.json.
    ScanEpsilon {
        /// Comma-separated ε values.
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
    },
    /// Check field synthesis against its specification (covariance,
    /// stationarity, Gaussian layer), optionally dumping one realization.
    FieldCheck {
        /// Dump one realization as raw little-endian f64 (field.bin) with a
        /// JSON sidecar of the dimensions (field.json).
        #[arg(long)]
        dump: bool,
        /// Grid points per side of the dump.
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// Realizations averaged by the probes.
        #[arg(long, default_value_t = 64)]
        realizations: u64,
    },
    /// Build the reference solution and print the limiting variances.
    Reference,
}

/// Parses arguments, dispatches, and maps errors to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::EnsembleFailure(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::desk_src(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match cli.command {
        Command::StructureCheck { n, r, corrupt } => cmd_structure_check(cfg, n, r, corrupt),
        Command::Run => cmd_run(cfg, cli.threads),
        Command::ScanAmplification { r_list } => {
            cmd_scan_amplification(cfg, &r_list, cli.threads)
        }
        Command::ScanEpsilon { eps_list } => {
            let list = eps_list.unwrap_or_else(|| default_eps_list(&cfg));
            cmd_scan_epsilon(cfg, &list, cli.threads)
        }
        Command::FieldCheck { dump, grid, realizations } => {
            cmd_field_check(cfg, dump, grid, realizations)
        }
        Command::Reference => cmd_reference(cfg),
    }
}

/// Three halvings ending at the configured ε.
fn default_eps_list(cfg: &RunConfig) -> Vec<f64> {
    vec![cfg.eps * 4.0, cfg.eps * 2.0, cfg.eps]
}

fn cmd_structure_check(
    mut cfg: RunConfig,
    n: Option<usize>,
    r: Option<f64>,
    corrupt: bool,
) -> Result<ExitCode> {
    if let Some(n) = n {
        cfg.n = n;
    }
    if let Some(r) = r {
        cfg.r = r;
    }
    cfg.validate()?;
    let mesh = Mesh::new(cfg.n)?;
    let field_eps = match cfg.field {
        FieldSpec::Zero => None,
        _ => Some(cfg.eps),
    };
    let subdiv = cfg.quadrature().subdivisions(field_eps, cfg.delta());
    println!(
        "structure-check: N = {}, r = {}, subdivisions = {subdiv}, tolerance {STRUCTURE_TOL:.0e}",
        cfg.n, cfg.r
    );
    let mut all_ok = true;

    let hom_inputs = AssemblyInputs {
        mesh: &mesh,
        q0: &cfg.q0,
        field: None,
        rhs: &cfg.f,
        r: cfg.r,
        subdiv,
    };
    let mut sys = assemble(&hom_inputs)?;
    if corrupt {
        // Grid id of interior node (1,1); nonzero for every valid mesh.
        let anchor = (cfg.n + 1) + 1;
        sys.alpha[0][anchor] += 1e-3;
        println!("negative control: stencil entry alpha[e1] at node (1,1) perturbed by 1e-3");
    }
    let report = verify_structure(&sys, &hom_inputs);
    println!("homogenized flavor:\n{report}");
    all_ok &= report.ok(STRUCTURE_TOL);

    if let SmoothFn::Const(c) = cfg.q0 {
        // For a constant potential the patch average is exact, so the
        // zeroth-order entries must equal c·h² for every patch ratio.
        let want = c * mesh.h() * mesh.h();
        let max_dev =
            sys.dvec.iter().map(|d| (d - want).abs()).fold(0.0f64, f64::max);
        let rel = if want > 0.0 { max_dev / want } else { max_dev };
        println!("  constant-potential oracle |d - c h^2| max rel: {rel:.3e}");
        all_ok &= rel < STRUCTURE_TOL;
    }

    if cfg.field != FieldSpec::Zero {
        let seed = sample_seed(cfg.seed, 0);
        let field = cfg.field.sample(cfg.eps, seed)?;
        let inputs = AssemblyInputs { field: Some(&field), ..hom_inputs };
        let sys_eps = assemble(&inputs)?;
        let report = verify_structure(&sys_eps, &inputs);
        println!("sampled flavor (seed {seed}):\n{report}");
        all_ok &= report.ok(STRUCTURE_TOL);
    }

    if all_ok {
        println!("structure-check: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("structure-check: FAIL");
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_run(cfg: RunConfig, threads: usize) -> Result<ExitCode> {
    let t0 = Instant::now();
    let mut record = RunRecord::new(cfg.hash());
    println!("config hash   {}", record.config_hash);
    println!(
        "mesh          N = {} (h = {}), r = {}, delta = {}",
        cfg.n,
        1.0 / cfg.n as f64,
        cfg.r,
        cfg.delta()
    );

    let t = Instant::now();
    let prep = prepare(&cfg)?;
    record.add_timing("prepare", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let ensemble = with_threads(threads, || run_ensemble(&prep))??;
    record.add_timing("ensemble", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let reference = reference_solution(
        cfg.effective_reference_n(),
        &cfg.q0,
        &cfg.f,
        &cfg.phi,
        cfg.cg_tol,
    )?;
    let limit = reference.limit_variance(&cfg.field, cfg.r);
    record.add_timing("reference", t.elapsed().as_secs_f64());

    let stats = ensemble.statistics();
    let t = Instant::now();
    let samples_path = cfg.out_dir.join("samples.csv");
    write_samples_csv(&samples_path, &ensemble.rows)?;
    record.add_artifact(&samples_path);
    let summary_path = cfg.out_dir.join("summary.json");
    record.add_artifact(&summary_path);
    record.add_timing("io", t.elapsed().as_secs_f64());
    record.wall_seconds = t0.elapsed().as_secs_f64();
    let summary = RunSummary {
        record,
        statistics: stats.clone(),
        predicted: PredictedVariances {
            intermediate_variance: prep.intermediate_var,
            limit_variance: limit,
        },
        invalid_samples: ensemble.invalid,
    };
    write_json(&summary_path, &summary)?;

    println!("samples       {} valid, {} invalid", ensemble.rows.len(), ensemble.invalid);
    println!("mean          {:.6e}", stats.mean);
    match stats.variance_se {
        Some(se) => println!("variance      {:.6e} (batch se {se:.2e})", stats.variance),
        None => println!("variance      {:.6e}", stats.variance),
    }
    println!("intermediate  {:.6e} (predicted variance of the linear part)", prep.intermediate_var);
    println!("limit         {:.6e} (reference N = {})", limit, cfg.effective_reference_n());
    println!("residual      {:.2}% of std", 100.0 * ensemble.residual_fraction());
    if let (Some(s), Some(k)) = (stats.skewness, stats.excess_kurtosis) {
        println!("shape         skewness {s:.4}, excess kurtosis {k:.4}");
    }
    if let Some(p) = stats.ks_p_value {
        println!("normality     KS p-value {p:.4}");
    }
    println!("artifacts     {}", summary.record.artifacts.join(", "));
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan_amplification(cfg: RunConfig, r_list: &[f64], threads: usize) -> Result<ExitCode> {
    let t0 = Instant::now();
    let mut record = RunRecord::new(cfg.hash());
    let scan = with_threads(threads, || amplification_scan(&cfg, r_list))??;
    record.add_timing("scan", t0.elapsed().as_secs_f64());

    let csv_path = cfg.out_dir.join("amplification.csv");
    write_amplification_csv(&csv_path, &scan.rows)?;
    record.add_artifact(&csv_path);
    let json_path = cfg.out_dir.join("amplification.json");
    record.add_artifact(&json_path);
    record.wall_seconds = t0.elapsed().as_secs_f64();

    #[derive(Serialize)]
    struct Doc {
        record: RunRecord,
        rows: Vec<AmplificationRow>,
        invalid_samples: u64,
    }
    let doc = Doc { record, rows: scan.rows.clone(), invalid_samples: scan.invalid };
    write_json(&json_path, &doc)?;

    println!("seed-coupled patch-ratio scan ({} samples per ratio)", cfg.samples);
    println!(
        "{:>8} {:>14} {:>14} {:>14} {:>10} {:>10}",
        "r", "variance", "intermediate", "limit", "ratio", "predicted"
    );
    for row in &scan.rows {
        println!(
            "{:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.4} {:>10.4}",
            row.r,
            row.variance,
            row.intermediate_variance,
            row.limit_variance,
            row.ratio_vs_full,
            row.predicted_ratio
        );
    }
    println!("artifacts     {}", doc.record.artifacts.join(", "));
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan_epsilon(cfg: RunConfig, eps_list: &[f64], threads: usize) -> Result<ExitCode> {
    let t0 = Instant::now();
    let mut record = RunRecord::new(cfg.hash());
    let rows = with_threads(threads, || epsilon_scan(&cfg, eps_list))??;
    record.add_timing("scan", t0.elapsed().as_secs_f64());

    let csv_path = cfg.out_dir.join("epsilon.csv");
    write_epsilon_scan_csv(&csv_path, &rows)?;
    record.add_artifact(&csv_path);
    let json_path = cfg.out_dir.join("epsilon.json");
    record.add_artifact(&json_path);
    record.wall_seconds = t0.elapsed().as_secs_f64();

    #[derive(Serialize)]
    struct Doc {
        record: RunRecord,
        rows: Vec<EpsilonScanRow>,
    }
    let doc = Doc { record, rows };
    write_json(&json_path, &doc)?;

    println!("correlation-length scan ({} samples per value)", cfg.samples);
    println!(
        "{:>14} {:>14} {:>14} {:>12}",
        "eps", "variance", "predicted", "resid/std"
    );
    for row in &doc.rows {
        println!(
            "{:>14.6e} {:>14.6e} {:>14.6e} {:>11.2}%",
            row.eps,
            row.variance,
            row.predicted_variance,
            100.0 * row.residual_fraction
        );
    }
    println!("artifacts     {}", doc.record.artifacts.join(", "));
    Ok(ExitCode::SUCCESS)
}

fn cmd_field_check(cfg: RunConfig, dump: bool, grid: usize, realizations: u64) -> Result<ExitCode> {
    if cfg.field == FieldSpec::Zero {
        return Err(Error::ConfigValidation(
            "field-check needs a random field ([field] kind = src or lrc)".into(),
        ));
    }
    if grid < 2 {
        return Err(Error::InvalidArgument("dump grid must be at least 2".into()));
    }
    let mut all_ok = true;
    println!(
        "field-check: eps = {}, {realizations} realizations, base seed {}",
        cfg.eps, cfg.seed
    );

    // Covariance probe: lags in field units.
    let (lags, spacing): (Vec<[f64; 2]>, f64) = match cfg.field {
        // SRC spacing must be well-spread mod 1 so probe points cover the
        // grid phase; an integer spacing aliases every point to one phase.
        FieldSpec::Src { .. } => {
            (vec![[0.0, 0.0], [0.5, 0.0], [0.0, 0.75], [0.5, 0.5], [2.0, 0.0]], 3.37)
        }
        FieldSpec::Lrc { .. } => {
            (vec![[0.0, 0.0], [1.0, 0.0], [8.0, 0.0], [0.0, 12.0], [9.0, 12.0]], 1.0)
        }
        FieldSpec::Zero => unreachable!("rejected above"),
    };
    let estimates = covariance_probe(&cfg.field, cfg.eps, realizations, cfg.seed, &lags, spacing)?;
    let amp2 = cfg.field.amplitude_bound() * cfg.field.amplitude_bound();
    println!("{:>16} {:>14} {:>14} {:>10}", "lag", "empirical", "predicted", "status");
    for row in &estimates {
        let (predicted, tol, kind) = match (row.analytic, row.tail_prediction) {
            (Some(a), _) => (Some(a), 0.15 * amp2.max(f64::MIN_POSITIVE), "exact"),
            (None, Some(t)) => (Some(t), 0.5 * t.abs(), "tail"),
            (None, None) => (None, 0.0, "none"),
        };
        let lag = format!("({}, {})", row.lag[0], row.lag[1]);
        match predicted {
            Some(p) => {
                let ok = (row.estimate - p).abs() <= tol;
                all_ok &= ok;
                println!(
                    "{lag:>16} {:>14.6e} {:>14.6e} {:>10}",
                    row.estimate,
                    p,
                    if ok { kind } else { "MISMATCH" }
                );
            }
            None => println!("{lag:>16} {:>14.6e} {:>14} {:>10}", row.estimate, "-", "info"),
        }
    }

    let (dm1, dm2) =
        stationarity_probe(&cfg.field, cfg.eps, realizations, cfg.seed, [0.37, 0.61], spacing)?;
    println!("stationarity  |mean diff| = {dm1:.3e}, |2nd-moment diff| = {dm2:.3e}");

    if let FieldSpec::Lrc { kappa_g, .. } = cfg.field {
        let (mean, var, skew, exkurt) =
            gaussian_layer_moments(&cfg.field, cfg.eps, realizations, cfg.seed)?;
        let var_want = kappa_g * kappa_g;
        let layer_ok = mean.abs() <= 0.1 * kappa_g && (var - var_want).abs() <= 0.15 * var_want;
        all_ok &= layer_ok;
        println!(
            "gaussian layer mean {mean:.3e}, variance {var:.4} (want {var_want:.4}), \
             skewness {skew:.3}, excess kurtosis {exkurt:.3}{}",
            if layer_ok { "" } else { "  MISMATCH" }
        );
    }

    if dump {
        let seed = sample_seed(cfg.seed, 0);
        let field = cfg.field.sample(cfg.eps, seed)?;
        let mut data = Vec::with_capacity(grid * grid);
        for j in 0..grid {
            for i in 0..grid {
                let x = [(i as f64 + 0.5) / grid as f64, (j as f64 + 0.5) / grid as f64];
                data.push(field.eval(x));
            }
        }
        let art = write_f64_grid(&cfg.out_dir.join("field"), grid, grid, &data)?;
        println!(
            "dumped realization (seed {seed}) to {} with sidecar {}",
            art.bin.display(),
            art.sidecar.display()
        );
    }

    if all_ok {
        println!("field-check: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("field-check: FAIL");
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_reference(cfg: RunConfig) -> Result<ExitCode> {
    cfg.validate()?;
    let n_ref = cfg.effective_reference_n();
    let n_coarse = (n_ref / 2).max(2);
    let fine = reference_solution(n_ref, &cfg.q0, &cfg.f, &cfg.phi, cfg.cg_tol)?;
    let coarse = reference_solution(n_coarse, &cfg.q0, &cfg.f, &cfg.phi, cfg.cg_tol)?;
    println!("reference mesh N = {n_ref} (refinement check against N = {n_coarse})");
    println!("product norm  {:.8e}", fine.product_l2_sq);
    if let FieldSpec::Lrc { alpha, .. } = cfg.field {
        println!("s-functional  {:.8e} (alpha = {alpha})", fine.s_functional(alpha));
    }
    let limit_fine = fine.limit_variance(&cfg.field, cfg.r);
    let limit_coarse = coarse.limit_variance(&cfg.field, cfg.r);
    println!("limit variance (r = {}) = {:.8e}", cfg.r, limit_fine);
    let drift = if limit_fine != 0.0 {
        (limit_fine - limit_coarse).abs() / limit_fine.abs()
    } else {
        0.0
    };
    println!("refinement drift {:.3}% (vs N = {n_coarse})", 100.0 * drift);
    Ok(ExitCode::SUCCESS)
}

//! Command-line frontend for the `vbsvm` crate: simulate datasets, fit the
//! four model variants with either inference engine, score new rows, and run
//! repeated hold-out evaluations and paired engine comparisons.
//!
//! Conventions shared by every subcommand:
//!
//! * Primary outputs (data files, model files, reports) are byte-identical
//!   across runs with the same flags and inputs. Timing goes to a separate
//!   metadata file (`--timing-out`), never into a primary output.
//! * Diagnostics and progress notes go to stderr; stdout carries data.
//! * Exit codes: 0 success (including fits that stop at the sweep cap with
//!   a warning), 2 flag or domain errors, 3 data or file errors, 4 numerical
//!   failure inside a fit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use vbsvm::data::LabeledDataset;
use vbsvm::evaluate::{
    ber, holdout_indices, repeated_holdout, Engine, EvalReport, FitterSpec, HoldoutOptions,
    Variant,
};
use vbsvm::io::{
    read_dataset_csv, read_features_csv, read_labels_csv, write_dataset_csv,
    write_predictions_csv,
};
use vbsvm::mcmc::{quantile, ParamSummary};
use vbsvm::model::{fit_to_model, ModelFile};
use vbsvm::rng::RngState;
use vbsvm::simulate::{apply_mcar, simulate_logistic};
use vbsvm::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vbsvm",
    version,
    about = "Bayesian support vector classification: simulate, fit, predict, evaluate, compare"
)]
struct Cli {
    /// Worker threads for evaluate/compare replicates (0 = automatic).
    /// Results do not depend on this setting.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic classification dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a classifier on a CSV and write a model file.
    Fit(FitArgs),
    /// Score feature rows with a saved model file.
    Predict(PredictArgs),
    /// Repeated hold-out evaluation of one fitting recipe.
    Evaluate(EvaluateArgs),
    /// Paired comparison of the two engines on identical splits.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of rows.
    #[arg(long)]
    n: usize,
    /// Number of predictor columns.
    #[arg(long)]
    d: usize,
    /// RNG seed; identical flags produce a byte-identical file.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that each predictor cell is blanked (missing completely
    /// at random). Labels are never blanked.
    #[arg(long, default_value_t = 0.0)]
    missing_fraction: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Prior and solver settings shared by fit, evaluate, and compare.
#[derive(Args)]
struct PriorArgs {
    /// Fixed-effect prior variance.
    #[arg(long, default_value_t = 1e8)]
    sigma2_beta: f64,
    /// Inverse-gamma shape for the random-effect variance.
    #[arg(long, default_value_t = 0.01)]
    a_u: f64,
    /// Inverse-gamma rate for the random-effect variance.
    #[arg(long, default_value_t = 0.01)]
    b_u: f64,
    /// Prior inclusion probability per coefficient (sparse variant).
    #[arg(long, default_value_t = 0.01)]
    rho: f64,
    /// Prior variance of the imputation-model mean (missing variant).
    #[arg(long, default_value_t = 1e8)]
    sigma2_mu: f64,
    /// Ridge penalty of the basic variant (ignored by the others).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Variational stop: sweep-to-sweep lower-bound gain below this.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Variational sweep cap; hitting it records converged=false.
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
}

/// Chain sizes for the Gibbs engine (ignored by the variational engine).
#[derive(Args)]
struct GibbsArgs {
    /// Burn-in scans discarded before collection.
    #[arg(long, default_value_t = 5000)]
    burn: usize,
    /// Scans kept after burn-in.
    #[arg(long, default_value_t = 5000)]
    draws: usize,
    /// Keep every thin-th scan.
    #[arg(long, default_value_t = 1)]
    thin: usize,
}

#[derive(Args)]
struct FitArgs {
    /// Training data CSV.
    #[arg(long)]
    data: PathBuf,
    /// Output model file path.
    #[arg(long)]
    out: PathBuf,
    /// Model variant: basic, mixed, sparse, or missing.
    #[arg(long)]
    variant: String,
    /// Inference engine: vb or gibbs.
    #[arg(long, default_value = "vb")]
    engine: String,
    /// Label column name.
    #[arg(long, default_value = "y")]
    label_col: String,
    /// Group-id column for a random-intercept fit (mixed variant only).
    #[arg(long)]
    group_col: Option<String>,
    /// Drop rows with missing predictors before fitting.
    #[arg(long)]
    complete_cases: bool,
    /// Fit on raw columns instead of centered/scaled ones.
    #[arg(long)]
    no_standardize: bool,
    /// RNG seed for the Gibbs engine (the variational engine draws nothing).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    gibbs: GibbsArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model file.
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV; must contain every training feature column by name.
    #[arg(long)]
    data: PathBuf,
    /// Output predictions CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the linear score next to each label.
    #[arg(long)]
    scores: bool,
    /// Group-id column (only for models with group effects; default
    /// "group").
    #[arg(long)]
    group_col: Option<String>,
    /// Label column to ignore when present in the input.
    #[arg(long, default_value = "y")]
    label_col: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Data CSV to evaluate on.
    #[arg(long)]
    data: PathBuf,
    /// Model variant: basic, mixed, sparse, or missing.
    #[arg(long)]
    variant: String,
    /// Inference engine: vb or gibbs.
    #[arg(long, default_value = "vb")]
    engine: String,
    /// Label column name.
    #[arg(long, default_value = "y")]
    label_col: String,
    /// Number of independent train/test splits.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Fraction of rows on the training side of each split.
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    /// Base seed; replicate r derives all its randomness from (seed, r).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Complete-case training: drop gappy rows from each training side.
    #[arg(long)]
    complete_cases: bool,
    /// Fit on raw columns instead of centered/scaled ones.
    #[arg(long)]
    no_standardize: bool,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the report with per-replicate wall-clock seconds here.
    #[arg(long)]
    timing_out: Option<PathBuf>,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    gibbs: GibbsArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Data CSV to compare on.
    #[arg(long)]
    data: PathBuf,
    /// Model variant fitted by both engines.
    #[arg(long)]
    variant: String,
    /// Label column name.
    #[arg(long, default_value = "y")]
    label_col: String,
    /// Number of independent train/test splits.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Fraction of rows on the training side of each split.
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    /// Base seed; both engines see the identical splits it generates.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Externally produced labels (one per data row) scored on the same
    /// test sides.
    #[arg(long)]
    baseline_pred: Option<PathBuf>,
    /// Complete-case training: drop gappy rows from each training side.
    #[arg(long)]
    complete_cases: bool,
    /// Fit on raw columns instead of centered/scaled ones.
    #[arg(long)]
    no_standardize: bool,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-replicate wall-clock seconds for both engines here.
    #[arg(long)]
    timing_out: Option<PathBuf>,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    gibbs: GibbsArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Map the crate's error taxonomy onto process exit codes.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Dimension(_) => 2,
        Error::Data(_) | Error::Io(_) => 3,
        Error::Numerical { .. } => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Domain(format!("cannot set up {jobs} worker threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

/// Assemble a fitting recipe from the shared flag groups.
fn build_fitter(
    variant: Variant,
    engine: Engine,
    prior: &PriorArgs,
    gibbs: &GibbsArgs,
    seed: u64,
    complete_cases: bool,
) -> Result<FitterSpec> {
    let mut spec = FitterSpec::new(variant, engine);
    spec.prior.sigma2_beta = prior.sigma2_beta;
    spec.prior.a_u = prior.a_u;
    spec.prior.b_u = prior.b_u;
    spec.prior.rho = prior.rho;
    spec.prior.sigma2_mu = prior.sigma2_mu;
    spec.prior.solver.tol = prior.tol;
    spec.prior.solver.max_iter = prior.max_iter;
    spec.alpha = prior.alpha;
    spec.gibbs.n_burn = gibbs.burn;
    spec.gibbs.n_keep = gibbs.draws;
    spec.gibbs.thin = gibbs.thin;
    spec.gibbs.seed = seed;
    spec.complete_cases = complete_cases;
    spec.validate()?;
    Ok(spec)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    if !(0.0..1.0).contains(&args.missing_fraction) {
        return Err(Error::Domain(format!(
            "--missing-fraction must lie in [0, 1), got {}",
            args.missing_fraction
        )));
    }
    let mut rng = RngState::from_seed(args.seed);
    let mut sim = simulate_logistic(args.n, args.d, &mut rng)?;
    let masked = apply_mcar(&mut sim.data, args.missing_fraction, &mut rng)?;
    write_dataset_csv(&args.out, &sim.data)?;
    eprintln!(
        "wrote {} rows x {} predictors ({} cells blanked) to {}",
        args.n,
        args.d,
        masked,
        args.out.display()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let variant: Variant = args.variant.parse()?;
    let engine: Engine = args.engine.parse()?;
    if args.group_col.is_some() && variant != Variant::Mixed {
        return Err(Error::Domain(format!(
            "--group-col only applies to the mixed variant, not {variant}"
        )));
    }
    let fitter = build_fitter(variant, engine, &args.prior, &args.gibbs, args.seed, false)?;
    let mut data = read_dataset_csv(&args.data, &args.label_col, args.group_col.as_deref())?;
    if args.complete_cases {
        data = data.select_rows(&data.complete_rows())?;
    }
    if variant != Variant::Missing {
        require_complete(&data)?;
    }
    let model = fit_to_model(&data, &fitter, !args.no_standardize)?;
    model.save(&args.out)?;
    report_fit(&model);
    eprintln!("wrote model to {}", args.out.display());
    Ok(())
}

/// Reject gappy data on behalf of variants without a missing-data model,
/// naming the offending cells.
fn require_complete(data: &LabeledDataset) -> Result<()> {
    let mut cells = Vec::new();
    for i in 0..data.n_rows() {
        for j in 0..data.n_features() {
            if data.features[(i, j)].is_nan() {
                cells.push(format!("row {i} column '{}'", data.feature_names[j]));
            }
        }
    }
    if cells.is_empty() {
        return Ok(());
    }
    let head = cells.iter().take(6).cloned().collect::<Vec<_>>().join(", ");
    let tail = if cells.len() > 6 {
        format!(" and {} more", cells.len() - 6)
    } else {
        String::new()
    };
    Err(Error::Data(format!(
        "{} missing cell(s): {head}{tail}; use --variant missing or drop rows with --complete-cases",
        cells.len()
    )))
}

/// One stdout line summarizing the fit: the final lower bound for the
/// variational engine, an effective-sample-size digest for the Gibbs one.
fn report_fit(model: &ModelFile) {
    let meta = &model.metadata;
    match model.engine {
        Engine::Vb => {
            println!(
                "variant={} engine=vb converged={} iterations={} lower_bound={}",
                model.variant,
                meta.converged,
                meta.iterations.unwrap_or(0),
                meta.final_lower_bound.unwrap_or(f64::NAN),
            );
            if !meta.converged {
                eprintln!(
                    "warning: sweep cap reached before the tolerance; model saved with converged=false"
                );
            }
        }
        Engine::Gibbs => {
            let mut line = format!(
                "variant={} engine=gibbs draws={}",
                model.variant,
                meta.draws.unwrap_or(0)
            );
            if let Some((name, min, median)) = meta.chain_summary.as_deref().and_then(ess_digest)
            {
                line.push_str(&format!(" ess_min={min:.1} ({name}) ess_median={median:.1}"));
            }
            println!("{line}");
        }
    }
}

/// Smallest and median effective sample size across chain parameters.
fn ess_digest(summary: &[ParamSummary]) -> Option<(String, f64, f64)> {
    let worst = summary.iter().min_by(|a, b| a.ess.total_cmp(&b.ess))?;
    let mut ess: Vec<f64> = summary.iter().map(|p| p.ess).collect();
    ess.sort_by(f64::total_cmp);
    Some((worst.name.clone(), worst.ess, quantile(&ess, 0.5)))
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = ModelFile::load(&args.model)?;
    let needs_groups = model.group_names.is_some();
    if args.group_col.is_some() && !needs_groups {
        return Err(Error::Domain(
            "--group-col given, but the model has no group effects".to_string(),
        ));
    }
    let group_col = if needs_groups {
        Some(args.group_col.clone().unwrap_or_else(|| "group".to_string()))
    } else {
        None
    };
    let (features, groups) = read_features_csv(
        &args.data,
        &model.feature_names,
        group_col.as_deref(),
        &[args.label_col.as_str()],
    )?;
    let pred = model.predict(&features, groups.as_deref())?;
    write_predictions_csv(&args.out, &pred.labels, args.scores.then_some(&pred.scores))?;
    eprintln!("wrote {} predictions to {}", pred.labels.len(), args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let variant: Variant = args.variant.parse()?;
    let engine: Engine = args.engine.parse()?;
    let fitter = build_fitter(
        variant,
        engine,
        &args.prior,
        &args.gibbs,
        args.seed,
        args.complete_cases,
    )?;
    let data = read_dataset_csv(&args.data, &args.label_col, None)?;
    let opts = HoldoutOptions {
        reps: args.reps,
        train_fraction: args.train_fraction,
        seed: args.seed,
        standardize: !args.no_standardize,
    };
    let report = repeated_holdout(&data, &fitter, &opts)?;
    emit(args.out.as_deref(), &report.render(false))?;
    if let Some(path) = &args.timing_out {
        fs::write(path, report.render(true))?;
        eprintln!("wrote timing metadata to {}", path.display());
    }
    warn_stalled(&format!("{engine}"), &report);
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let variant: Variant = args.variant.parse()?;
    let vb_fitter = build_fitter(
        variant,
        Engine::Vb,
        &args.prior,
        &args.gibbs,
        args.seed,
        args.complete_cases,
    )?;
    let gibbs_fitter = build_fitter(
        variant,
        Engine::Gibbs,
        &args.prior,
        &args.gibbs,
        args.seed,
        args.complete_cases,
    )?;
    let data = read_dataset_csv(&args.data, &args.label_col, None)?;
    let opts = HoldoutOptions {
        reps: args.reps,
        train_fraction: args.train_fraction,
        seed: args.seed,
        standardize: !args.no_standardize,
    };
    let vb_report = repeated_holdout(&data, &vb_fitter, &opts)?;
    let gibbs_report = repeated_holdout(&data, &gibbs_fitter, &opts)?;
    let baseline = match &args.baseline_pred {
        Some(path) => Some(baseline_bers(&data, path, &opts)?),
        None => None,
    };
    emit(
        args.out.as_deref(),
        &render_comparison(&vb_report, &gibbs_report, baseline.as_deref()),
    )?;
    if let Some(path) = &args.timing_out {
        fs::write(path, render_comparison_timing(&vb_report, &gibbs_report))?;
        eprintln!("wrote timing metadata to {}", path.display());
    }
    warn_stalled("vb", &vb_report);
    Ok(())
}

/// Balanced error rate of externally supplied labels on each replicate's
/// test side — the same splits the engines were scored on.
fn baseline_bers(data: &LabeledDataset, path: &Path, opts: &HoldoutOptions) -> Result<Vec<f64>> {
    let preds = read_labels_csv(path)?;
    if preds.len() != data.n_rows() {
        return Err(Error::Dimension(format!(
            "{} baseline predictions for {} data rows",
            preds.len(),
            data.n_rows()
        )));
    }
    (0..opts.reps)
        .map(|rep| {
            let (_, test_idx) = holdout_indices(data, opts.train_fraction, opts.seed, rep)?;
            let truth =
                DVector::from_iterator(test_idx.len(), test_idx.iter().map(|&i| data.labels[i]));
            let scored =
                DVector::from_iterator(test_idx.len(), test_idx.iter().map(|&i| preds[i]));
            ber(&truth, &scored)
        })
        .collect()
}

/// Side-by-side replicate table with a paired summary line.
fn render_comparison(
    vb: &EvalReport,
    gibbs: &EvalReport,
    baseline: Option<&[f64]>,
) -> String {
    let mut out = String::new();
    out.push_str(match baseline {
        Some(_) => "replicate\tber_vb\tber_gibbs\tber_baseline\n",
        None => "replicate\tber_vb\tber_gibbs\n",
    });
    let mut diff_sum = 0.0;
    for (i, (v, g)) in vb.replicates.iter().zip(&gibbs.replicates).enumerate() {
        diff_sum += v.ber - g.ber;
        match baseline {
            Some(b) => out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\n",
                v.replicate, v.ber, g.ber, b[i]
            )),
            None => out.push_str(&format!("{}\t{:.6}\t{:.6}\n", v.replicate, v.ber, g.ber)),
        }
    }
    let n = vb.n_replicates();
    out.push_str(&format!(
        "# summary reps={n} mean_vb={:.6} mean_gibbs={:.6} mean_diff={:+.6}",
        vb.mean_ber,
        gibbs.mean_ber,
        diff_sum / n as f64
    ));
    if let Some(b) = baseline {
        out.push_str(&format!(
            " mean_baseline={:.6}",
            b.iter().sum::<f64>() / b.len() as f64
        ));
    }
    out.push('\n');
    out
}

/// Per-replicate wall-clock seconds for both engines (metadata, not part of
/// the reproducible report).
fn render_comparison_timing(vb: &EvalReport, gibbs: &EvalReport) -> String {
    let mut out = String::from("replicate\tseconds_vb\tseconds_gibbs\n");
    for (v, g) in vb.replicates.iter().zip(&gibbs.replicates) {
        out.push_str(&format!("{}\t{:.4}\t{:.4}\n", v.replicate, v.seconds, g.seconds));
    }
    out
}

/// Write to the path when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            eprintln!("wrote report to {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Stderr note when variational replicates hit the sweep cap.
fn warn_stalled(engine: &str, report: &EvalReport) {
    let stalled = report.replicates.iter().filter(|r| !r.converged).count();
    if stalled > 0 {
        eprintln!(
            "warning: {stalled} of {} {engine} replicates hit the sweep cap",
            report.n_replicates()
        );
    }
}

//! Command-line front end: shift synthesis, prior estimation, shift
//! diagnostics, scenario execution and seeded sampling over JSON/CSV
//! artifacts.
//!
//! Exit codes: 0 success, 2 validation/input error, 3 solver
//! non-convergence, 4 identifiability failure.

use std::fs::File;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use priorshift::diagnostics::{rank_identifiability_with_classifier, scs_decomposition_check};
use priorshift::dist::{CategoricalDistribution, Classifier, FeatureTransform, JointDistribution};
use priorshift::error::Error;
use priorshift::estimators::PriorEstimate;
use priorshift::sample::{
    draw_categorical, draw_joint, fit_empirical, read_labeled_csv, read_unlabeled_csv,
    write_labeled_csv, write_unlabeled_csv,
};
use priorshift::scenario::{
    run_batch, run_estimator, run_experiment, EstimatorConfig, ScenarioConfig, EMPIRICAL_SMOOTHING,
};
use priorshift::shift::{synthesize, ShiftSpec, SolverConfig};
use priorshift::SplitMix64;

#[derive(Parser)]
#[command(
    name = "priorshift",
    version,
    about = "Class prior estimation under dataset shift on finite discrete spaces"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a target distribution from a source and a shift spec
    Synth(SynthArgs),
    /// Estimate target class priors with one method
    Estimate(EstimateArgs),
    /// Verify shift assumptions and rank identifiability for a (P, Q, T) triple
    Diagnose(DiagnoseArgs),
    /// Execute a scenario config (object or array) end to end
    Run(RunArgs),
    /// Draw a seeded sample from a distribution as CSV
    Sample(SampleArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Md,
}

#[derive(Args)]
struct SynthArgs {
    /// Source joint distribution (JSON)
    #[arg(long)]
    source: PathBuf,
    /// Shift spec (JSON, tagged by "kind")
    #[arg(long)]
    spec: PathBuf,
    /// Solver tolerance (factorizable-joint-shift system)
    #[arg(long)]
    tol: Option<f64>,
    /// Solver iteration cap
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Hard classify-and-count
    Cc,
    /// Probabilistic classify-and-count (posterior averaging)
    Pcc,
    /// Importance reweighting with weights q_X/p_X
    Reweighting,
    /// EM fixed point for label shift
    Em,
    /// Factorizable-joint-shift prior solver for a known class factor
    FjsQ,
    /// Conditional confusion-matrix method over declared strata
    Ccm,
}

#[derive(Args)]
struct EstimateArgs {
    /// Source joint distribution (JSON)
    #[arg(long, conflicts_with = "labeled_csv")]
    source: Option<PathBuf>,
    /// Labeled source sample (CSV `feature,label`), fitted with smoothing
    #[arg(long)]
    labeled_csv: Option<PathBuf>,
    /// Target feature pmf (JSON categorical: {"labels":[...],"mass":[...]})
    #[arg(long, conflicts_with = "unlabeled_csv")]
    target: Option<PathBuf>,
    /// Unlabeled target sample (CSV `feature`), fitted with smoothing
    #[arg(long)]
    unlabeled_csv: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Method,
    /// Stratum assignment per feature point (ccm), e.g. --strata 0,0,1
    #[arg(long, value_delimiter = ',')]
    strata: Option<Vec<usize>>,
    /// Class weight factor per class (fjs-q), e.g. --rho 1.2,0.8
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    /// Iteration tolerance (em, fjs-q)
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap (em, fjs-q)
    #[arg(long)]
    max_iter: Option<usize>,
    /// Additive smoothing for CSV fitting (default 0.5 when a CSV is given)
    #[arg(long)]
    smoothing: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Source joint distribution (JSON)
    #[arg(long)]
    source: PathBuf,
    /// Target joint distribution (JSON)
    #[arg(long)]
    target: PathBuf,
    /// Stratum assignment per feature point, e.g. --strata 0,0,1
    #[arg(long, value_delimiter = ',', required = true)]
    strata: Vec<usize>,
    /// Verification tolerance
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config: one object or an array of them (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Master seed override for sampled scenarios
    #[arg(long)]
    seed: Option<u64>,
    /// Smoothing override for empirical fitting
    #[arg(long)]
    smoothing: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output path; falls back to the config's output_path, then stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Distribution to sample (JSON): joint unless --marginal is set
    #[arg(long)]
    source: PathBuf,
    /// Treat the input as a categorical feature pmf; emits unlabeled CSV
    #[arg(long)]
    marginal: bool,
    /// Number of draws
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Estimate(args) => cmd_estimate(args),
        Cmd::Diagnose(args) => cmd_diagnose(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sample(args) => cmd_sample(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 validation, 3 solver non-convergence, 4 identifiability failure.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. } | Error::InfeasibleSystem(_) => 3,
        Error::SingularStratum { .. } | Error::InconsistentSystem { .. } => 4,
        _ => 2,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, Error> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => File::create(path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

fn transform_from_strata(strata: &[usize]) -> Result<FeatureTransform, Error> {
    let n = strata.iter().copied().max().map_or(0, |m| m + 1);
    let labels = (0..n).map(|t| format!("t{t}")).collect();
    FeatureTransform::new(strata.to_vec(), labels)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let p: JointDistribution = read_json(&args.source)?;
    let spec: ShiftSpec = read_json(&args.spec)?;
    let mut cfg = SolverConfig::default();
    if let Some(t) = args.tol {
        cfg.tolerance = t;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iterations = m;
    }
    let q = synthesize(&p, &spec, &cfg)?;
    emit(args.out.as_ref(), &to_json(&q)?)
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Error> {
    let csv_input = args.labeled_csv.is_some() || args.unlabeled_csv.is_some();
    let smoothing = args
        .smoothing
        .unwrap_or(if csv_input { EMPIRICAL_SMOOTHING } else { 0.0 });
    if !(smoothing >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "smoothing {smoothing} must be non-negative"
        )));
    }

    let p: JointDistribution = match (&args.source, &args.labeled_csv) {
        (Some(path), None) => read_json(path)?,
        (None, Some(path)) => {
            let file = File::open(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let ingest = read_labeled_csv(file, None)?;
            if ingest.vocabulary_inferred {
                eprintln!(
                    "note: feature vocabulary and class count inferred from {}",
                    path.display()
                );
            }
            let (joint, _) = fit_empirical(&ingest.samples, smoothing)?;
            joint.ok_or(Error::EmptySample)?
        }
        _ => {
            return Err(Error::InvalidInput(
                "exactly one of --source and --labeled-csv is required".into(),
            ))
        }
    };

    let qx: CategoricalDistribution = match (&args.target, &args.unlabeled_csv) {
        (Some(path), None) => read_json(path)?,
        (None, Some(path)) => {
            let file = File::open(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let ingest = read_unlabeled_csv(file, Some(p.features()))?;
            let (_, marginal) = fit_empirical(&ingest.samples, smoothing)?;
            marginal.ok_or(Error::EmptySample)?
        }
        _ => {
            return Err(Error::InvalidInput(
                "exactly one of --target and --unlabeled-csv is required".into(),
            ))
        }
    };
    if qx.len() != p.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "target pmf covers {} feature points, source has {}",
            qx.len(),
            p.feature_count()
        )));
    }

    let est_cfg = match args.method {
        Method::Cc => EstimatorConfig::ClassifyAndCount,
        Method::Pcc => EstimatorConfig::Pcc,
        Method::Reweighting => EstimatorConfig::Reweighting,
        Method::Em => EstimatorConfig::Em {
            tolerance: args.tol,
            max_iterations: args.max_iter,
        },
        Method::FjsQ => EstimatorConfig::FjsQ {
            rho: args.rho.clone().ok_or_else(|| {
                Error::InvalidInput("--rho is required for method fjs-q".into())
            })?,
            tolerance: args.tol,
            max_iterations: args.max_iter,
        },
        Method::Ccm => EstimatorConfig::Ccm {
            strata: args.strata.clone().ok_or_else(|| {
                Error::InvalidInput("--strata is required for method ccm".into())
            })?,
        },
    };
    let estimate = run_estimator(&est_cfg, &p, &qx)?;
    let text = match args.format {
        Format::Json => to_json(&estimate)?,
        Format::Md => estimate_markdown(&estimate),
    };
    emit(args.out.as_ref(), &text)
}

fn estimate_markdown(est: &PriorEstimate) -> String {
    let priors: Vec<String> = est
        .priors
        .masses()
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect();
    let iters = est
        .diagnostics
        .iterations
        .map(|i| i.to_string())
        .unwrap_or_else(|| "—".into());
    format!(
        "| method | priors | iterations | residual |\n|---|---|---|---|\n| {} | ({}) | {} | {:.3e} |\n",
        est.method,
        priors.join(", "),
        iters,
        est.diagnostics.residual
    )
}

#[derive(Serialize)]
struct DiagnoseReport {
    decomposition: priorshift::diagnostics::ScsDecompositionReport,
    rank: priorshift::diagnostics::RankReport,
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<(), Error> {
    let p: JointDistribution = read_json(&args.source)?;
    let q: JointDistribution = read_json(&args.target)?;
    let t = transform_from_strata(&args.strata)?;
    let cls = Classifier::bayes(&p);
    let report = DiagnoseReport {
        decomposition: scs_decomposition_check(&p, &q, &t, &cls, args.tol)?,
        rank: rank_identifiability_with_classifier(&p, &[&t], &cls)?,
    };
    let text = match args.format {
        Format::Json => to_json(&report)?,
        Format::Md => diagnose_markdown(&report),
    };
    emit(args.out.as_ref(), &text)
}

fn diagnose_markdown(report: &DiagnoseReport) -> String {
    let d = &report.decomposition;
    let mut out = String::from("| assumption | holds | max deviation |\n|---|---|---|\n");
    for (name, v) in [
        ("covariate shift", &d.covariate),
        ("conditional distribution invariance", &d.cdi),
        ("sparse covariate shift", &d.scs),
        ("sparse joint shift", &d.sjs),
    ] {
        out.push_str(&format!(
            "| {name} | {} | {:.3e} |\n",
            v.holds, v.max_deviation
        ));
    }
    out.push_str(&format!(
        "\nIdentifiable: {} ({} strata checked)\n",
        report.rank.overall_identifiable,
        report.rank.per_stratum.len()
    ));
    out
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let value: serde_json::Value = read_json(&args.config)?;
    let parse =
        |v: serde_json::Value| -> Result<ScenarioConfig, Error> {
            let mut cfg: ScenarioConfig = serde_json::from_value(v)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", args.config.display())))?;
            if args.seed.is_some() {
                cfg.seed = args.seed;
            }
            if args.smoothing.is_some() {
                cfg.smoothing = args.smoothing;
            }
            Ok(cfg)
        };

    if let serde_json::Value::Array(items) = value {
        let cfgs = items
            .into_iter()
            .map(parse)
            .collect::<Result<Vec<_>, _>>()?;
        let results = run_batch(&cfgs);
        let text = match args.format {
            Format::Json => to_json(&results)?,
            Format::Md => {
                let mut out = String::new();
                for r in &results {
                    out.push_str(&format!("## scenario {}\n\n", r.index));
                    match (&r.report, &r.error) {
                        (Some(rep), _) => out.push_str(&rep.to_markdown()),
                        (None, Some(e)) => {
                            out.push_str(&format!("failed — {}: {}\n", e.class, e.message))
                        }
                        (None, None) => out.push_str("missing result\n"),
                    }
                    out.push('\n');
                }
                out
            }
        };
        emit(args.out.as_ref(), &text)
    } else {
        let cfg = parse(value)?;
        let report = run_experiment(&cfg)?;
        let text = match args.format {
            Format::Json => to_json(&report)?,
            Format::Md => report.to_markdown(),
        };
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
        emit(out.as_ref(), &text)
    }
}

fn cmd_sample(args: SampleArgs) -> Result<(), Error> {
    let mut rng = SplitMix64::new(args.seed);
    let mut buf = Vec::new();
    if args.marginal {
        let pmf: CategoricalDistribution = read_json(&args.source)?;
        let unlabeled = draw_categorical(&pmf, args.n, &mut rng);
        let samples = priorshift::estimators::SampleSet::new(
            pmf.labels().to_vec(),
            2,
            Vec::new(),
            unlabeled,
        )?;
        write_unlabeled_csv(&samples, &mut buf)?;
    } else {
        let p: JointDistribution = read_json(&args.source)?;
        let labeled = draw_joint(&p, args.n, &mut rng);
        let samples = priorshift::estimators::SampleSet::new(
            p.features().to_vec(),
            p.class_count(),
            labeled,
            Vec::new(),
        )?;
        write_labeled_csv(&samples, &mut buf)?;
    }
    let text = String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))?;
    match args.out {
        Some(path) => File::create(&path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

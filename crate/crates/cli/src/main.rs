//! `onestep-vqa`: feature extraction, training, prediction, evaluation and
//! subjective-study tooling from the command line.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use onestep_vqa::evaluation::{compare_reports, run_split_evaluation, EvaluationReport, HyperparamChoice, SplitPlan};
use onestep_vqa::regressor::{default_epsilon, grid_search, train_rows, HyperGrid};
use onestep_vqa::subjective::{self, RatingTable};
use onestep_vqa::table::{align, load_contents, load_manifest, load_scores, FeatureTable};
use onestep_vqa::{
    extract_batch, extract_features_from_files, load_y4m, Hyperparams, ManifestRow, TrainedModel, Variant,
    VariantConfig, VqaError,
};

#[derive(Parser, Debug)]
#[command(
    name = "onestep-vqa",
    version,
    about = "Quality prediction for compressed user-generated video"
)]
#[command(args_override_self = true, propagate_version = true)]
struct Cli {
    /// TOML file with per-subcommand defaults, e.g. `[evaluate] seed = 7`.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract feature vectors for reference/compressed pairs.
    Extract(ExtractArgs),
    /// Train the SVR on a feature table and MOS.
    Train(TrainArgs),
    /// Predict quality scores with a trained model.
    Predict(PredictArgs),
    /// Repeated content-disjoint train/test evaluation.
    Evaluate(EvaluateArgs),
    /// Rank-sum comparison of two evaluation reports.
    Compare(CompareArgs),
    /// Z-scores, MOS and split-half consistency from raw ratings.
    Mos(MosArgs),
    /// Spatial and temporal information of a video.
    Siti(SitiArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Compare(_) => "compare",
            Command::Mos(_) => "mos",
            Command::Siti(_) => "siti",
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct ExtractArgs {
    /// CSV with `id,ref_path,cmp_path`; relative paths resolve against its directory.
    #[arg(long, required_unless_present_all = ["reference", "dist"], conflicts_with_all = ["reference", "dist"])]
    manifest: Option<PathBuf>,
    /// Reference video (single-pair mode).
    #[arg(long = "ref", requires = "dist")]
    reference: Option<PathBuf>,
    /// Compressed video (single-pair mode).
    #[arg(long, requires = "reference")]
    dist: Option<PathBuf>,
    /// Row id in single-pair mode (default: compressed file stem).
    #[arg(long)]
    id: Option<String>,
    /// Feature CSV to write (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "base")]
    variant: Variant,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug, Serialize)]
struct SvrFlags {
    #[arg(long)]
    cost: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Tube half-width (default: 0.1% of the training score range).
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    /// CSV with `id,score`.
    #[arg(long)]
    scores: PathBuf,
    /// Model JSON to write.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    svr: SvrFlags,
    /// Choose cost and gamma by content-disjoint k-fold cross-validation.
    #[arg(long, requires = "contents", conflicts_with_all = ["cost", "gamma"])]
    grid_search: bool,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// CSV with `id,content`; required with --grid-search.
    #[arg(long)]
    contents: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "ref", requires = "dist", conflicts_with = "features")]
    reference: Option<PathBuf>,
    #[arg(long, requires = "reference")]
    dist: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    /// Feature CSV to score instead of a video pair.
    #[arg(long, required_unless_present = "reference")]
    features: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    contents: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON to write (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    svr: SvrFlags,
    /// Re-tune cost and gamma on every training split.
    #[arg(long, conflicts_with_all = ["cost", "gamma"])]
    grid_search_per_split: bool,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Model name recorded in the report.
    #[arg(long, default_value = "onestep-vqa")]
    name: String,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    #[arg(long)]
    report_a: PathBuf,
    #[arg(long)]
    report_b: PathBuf,
    #[arg(long, default_value = "srocc", value_parser = ["srocc", "lcc", "rmse"])]
    metric: String,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
}

#[derive(Args, Debug, Serialize)]
struct MosArgs {
    /// CSV with `subject_id,session,video_id,raw_score`.
    #[arg(long)]
    ratings: PathBuf,
    /// MOS CSV to write (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write per-rating Z-scores here.
    #[arg(long)]
    zscores: Option<PathBuf>,
    /// Also run split-half consistency and write its JSON report here.
    #[arg(long)]
    consistency: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct SitiArgs {
    #[arg(long)]
    input: PathBuf,
    /// JSON to write (default: standard output).
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Inserts `--key value` pairs from the config file's table for the chosen
/// subcommand right after the subcommand token, so explicit flags win.
fn apply_config(argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut config = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy();
        if arg == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            break;
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
            break;
        }
        i += 1;
    }
    let Some(path) = config else { return Ok(argv) };
    let text = fs::read_to_string(&path).map_err(|e| VqaError::Io {
        path: path.clone(),
        source: e,
    })?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| VqaError::Validation(format!("config {}: {e}", path.display())))?;

    let subcommands = ["extract", "train", "predict", "evaluate", "compare", "mos", "siti"];
    let Some(pos) = argv
        .iter()
        .position(|a| subcommands.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(argv);
    };
    let name = argv[pos].to_string_lossy().into_owned();
    let Some(section) = table.get(&name) else {
        return Ok(argv);
    };
    let section = section
        .as_table()
        .ok_or_else(|| VqaError::Validation(format!("config section [{name}] is not a table")))?;

    let mut injected = Vec::new();
    for (key, value) in section {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => injected.push(OsString::from(flag)),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => injected.extend([OsString::from(flag), OsString::from(s)]),
            toml::Value::Integer(n) => injected.extend([OsString::from(flag), OsString::from(n.to_string())]),
            toml::Value::Float(x) => injected.extend([OsString::from(flag), OsString::from(x.to_string())]),
            other => {
                return Err(VqaError::Validation(format!("config key {name}.{key}: unsupported value {other}")).into())
            }
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

fn provenance(command: &str, args: &impl Serialize, seed: Option<u64>) -> serde_json::Value {
    json!({
        "tool": "onestep-vqa",
        "version": onestep_vqa::VERSION,
        "command": command,
        "config": args,
        "seed": seed,
    })
}

/// Provenance for outputs that cannot carry it (CSV, plain lines).
fn emit_provenance(value: &serde_json::Value) {
    eprintln!("{}", json!({ "provenance": value }));
}

fn write_output(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| VqaError::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            let mut out = io::BufWriter::new(file);
            write(&mut out)?;
            out.flush().with_context(|| format!("writing {}", p.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write(&mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    write_output(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)?;
        Ok(())
    })
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn run_extract(args: &ExtractArgs) -> anyhow::Result<()> {
    let variant = VariantConfig::of(args.variant);
    let manifest = match (&args.manifest, &args.reference, &args.dist) {
        (Some(m), _, _) => load_manifest(m)?,
        (None, Some(r), Some(d)) => vec![ManifestRow {
            id: args.id.clone().unwrap_or_else(|| file_stem(d)),
            ref_path: r.clone(),
            cmp_path: d.clone(),
        }],
        _ => bail!(VqaError::Validation("give --manifest or both --ref and --dist".into())),
    };
    emit_provenance(&provenance("extract", args, None));
    let batch = extract_batch(&manifest, variant, args.workers)?;
    let table = batch.to_table();
    write_output(args.output.as_deref(), |out| Ok(table.write_csv(out)?))?;

    let mut first_failure: Option<&VqaError> = None;
    for (id, err) in batch.failures() {
        eprintln!("error: {id}: {err}");
        // an I/O failure anywhere decides the exit status
        if first_failure.is_none_or(|f| !f.is_io() && err.is_io()) {
            first_failure = Some(err);
        }
    }
    if let Some(err) = first_failure {
        let failed = batch.failures().count();
        let msg = format!("{failed} of {} rows failed", manifest.len());
        return Err(if err.is_io() {
            VqaError::Io {
                path: PathBuf::from("<batch>"),
                source: io::Error::other(msg),
            }
        } else {
            VqaError::Validation(msg)
        }
        .into());
    }
    Ok(())
}

/// Scores and content ids aligned to the table's row order.
fn aligned_inputs(
    table: &FeatureTable,
    scores: &Path,
    contents: Option<&Path>,
) -> anyhow::Result<(Vec<f64>, Option<Vec<String>>)> {
    let scores = align(table.ids(), &load_scores(scores)?, "score")?;
    let contents = match contents {
        Some(p) => Some(align(table.ids(), &load_contents(p)?, "content")?),
        None => None,
    };
    Ok((scores, contents))
}

fn fixed_hyperparams(svr: &SvrFlags, n_features: usize, scores: &[f64]) -> Hyperparams {
    Hyperparams {
        cost: svr.cost.unwrap_or(64.0),
        gamma: svr.gamma.unwrap_or(1.0 / n_features as f64),
        epsilon: svr.epsilon.unwrap_or_else(|| default_epsilon(scores)),
    }
}

fn run_train(args: &TrainArgs) -> anyhow::Result<()> {
    let table = FeatureTable::load(&args.features)?;
    let (scores, contents) = aligned_inputs(&table, &args.scores, args.contents.as_deref())?;
    let matrix = table.matrix();
    let mut search = None;
    let hp = if args.grid_search {
        let contents = contents.ok_or_else(|| VqaError::Validation("--grid-search needs --contents".into()))?;
        let epsilon = args.svr.epsilon.unwrap_or_else(|| default_epsilon(&scores));
        let result = grid_search(&matrix, &scores, &contents, &HyperGrid::standard(epsilon), args.folds)?;
        let best = result.best;
        search = Some(json!({ "folds": args.folds, "best_mean_srocc": result.best_srocc }));
        best
    } else {
        fixed_hyperparams(&args.svr, table.variant.feature_count(), &scores)
    };
    let mut model = train_rows(&matrix, &scores, hp, Some(table.variant))?;
    let mut prov = provenance("train", args, None);
    prov["hyperparams"] = json!(hp);
    if let Some(s) = search {
        prov["grid_search"] = s;
    }
    model.provenance = Some(prov);
    model.save(&args.model)?;
    Ok(())
}

fn run_predict(args: &PredictArgs) -> anyhow::Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let mut lines = Vec::new();
    match (&args.features, &args.reference, &args.dist) {
        (Some(f), _, _) => {
            let table = FeatureTable::load(f)?;
            if let Some(v) = model.variant {
                if v != table.variant {
                    bail!(VqaError::Contract(format!(
                        "model expects variant {}, table has {}",
                        v.name, table.variant.name
                    )));
                }
            }
            for (id, values) in &table.rows {
                lines.push((id.clone(), model.predict_values(values)?));
            }
        }
        (None, Some(r), Some(d)) => {
            let variant = model
                .variant
                .ok_or_else(|| VqaError::Contract("model has no feature variant; score a feature table".into()))?;
            let fv = extract_features_from_files(r, d, variant)?;
            let id = args.id.clone().unwrap_or_else(|| file_stem(d));
            lines.push((id, onestep_vqa::predict(&model, &fv)?));
        }
        _ => bail!(VqaError::Validation("give --features or both --ref and --dist".into())),
    }
    emit_provenance(&provenance("predict", args, None));
    write_output(None, |out| {
        for (id, score) in &lines {
            writeln!(out, "{id}\t{score:.6}")?;
        }
        Ok(())
    })
}

fn run_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let table = FeatureTable::load(&args.features)?;
    let (scores, contents) = aligned_inputs(&table, &args.scores, Some(&args.contents))?;
    let contents = contents.expect("contents path given");
    let choice = if args.grid_search_per_split {
        let epsilon = args.svr.epsilon.unwrap_or_else(|| default_epsilon(&scores));
        HyperparamChoice::GridSearchPerSplit {
            grid: HyperGrid::standard(epsilon),
            folds: args.folds,
        }
    } else {
        HyperparamChoice::Fixed(fixed_hyperparams(&args.svr, table.variant.feature_count(), &scores))
    };
    let plan = SplitPlan::new(contents, args.seed, args.iterations);
    let mut report = run_split_evaluation(&table.matrix(), &scores, &plan, choice, &args.name, Some(table.variant))?;
    report.provenance = Some(provenance("evaluate", args, Some(args.seed)));
    write_json(args.output.as_deref(), &report)?;
    if args.output.is_some() {
        println!(
            "median\tsrocc={:.6}\tlcc={:.6}\trmse={:.6}",
            report.median.srocc, report.median.lcc, report.median.rmse
        );
    }
    Ok(())
}

fn run_compare(args: &CompareArgs) -> anyhow::Result<()> {
    let a = EvaluationReport::load(&args.report_a)?;
    let b = EvaluationReport::load(&args.report_b)?;
    let test = compare_reports(&a, &b, &args.metric, args.level)?;
    emit_provenance(&provenance("compare", args, None));
    println!("{}\t{:.6e}", test.decision, test.p_value);
    Ok(())
}

fn run_mos(args: &MosArgs) -> anyhow::Result<()> {
    let ratings = RatingTable::load(&args.ratings)?;
    let z = subjective::zscore(&ratings)?;
    let mos = subjective::mos(&z)?;
    let mut prov = provenance("mos", args, Some(args.seed));
    prov["mos_rescale"] = json!(subjective::MOS_RESCALE);
    emit_provenance(&prov);
    if let Some(p) = &args.zscores {
        write_output(Some(p), |out| Ok(subjective::write_zscores_csv(&z, out)?))?;
    }
    if let Some(p) = &args.consistency {
        let report = subjective::split_half_consistency(&ratings, args.repeats, args.seed)?;
        write_json(Some(p), &json!({ "consistency": report, "provenance": prov }))?;
    }
    write_output(args.output.as_deref(), |out| Ok(subjective::write_mos_csv(&mos, out)?))
}

fn run_siti(args: &SitiArgs) -> anyhow::Result<()> {
    let video = load_y4m(&args.input)?;
    let siti = subjective::compute_siti(&video);
    write_json(
        args.output.as_deref(),
        &json!({ "si": siti.si, "ti": siti.ti, "frames": video.len(), "provenance": provenance("siti", args, None) }),
    )
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Extract(a) => run_extract(a),
        Command::Train(a) => run_train(a),
        Command::Predict(a) => run_predict(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Compare(a) => run_compare(a),
        Command::Mos(a) => run_mos(a),
        Command::Siti(a) => run_siti(a),
    }
}

/// The error and its causes, skipping causes already spelled out.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}

/// 2 for filesystem failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<VqaError>() {
            return if e.is_io() { 2 } else { 1 };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match apply_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {}", cli.command.name(), describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

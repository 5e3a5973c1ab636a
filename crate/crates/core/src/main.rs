use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use firecast::dataio::{synthesize, Container, SynthConfig, FRACTIONS};
use firecast::digest::sha256_hex;
use firecast::metrics::{cost_report, feature_matrix, Measure, Summary};
use firecast::models::{build, Family, ModelGraph, ModelSpec, Width};
use firecast::report::{ModelCard, RunManifest, RunReport};
use firecast::training::{
    evaluate_model, run, seed_table_csv, fraction_table_csv, FractionRow, SeedRun, SeedSummary, TrainConfig,
};
use firecast::xai::{explain_sample, ExplainModel, Methods, DEFAULT_IG_STEPS};
use firecast::{fsio, Error};

const OUT_DIR_ENV: &str = "FIRECAST_OUT_DIR";

#[derive(Parser)]
#[command(name = "firecast", version, about = "Next-day wildfire spread models, metrics and attributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutDir {
    /// Output directory; defaults to $FIRECAST_OUT_DIR, then ./firecast-out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl OutDir {
    fn resolve(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("firecast-out"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic WFD1 container.
    GenData {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(2..))]
        height: u64,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(2..))]
        width: u64,
        /// Label fire wherever drought exceeds a fixed threshold.
        #[arg(long)]
        separable: bool,
        /// Container path; defaults to <out-dir>/synthetic-<count>-<seed>.wfd1.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Train one model and evaluate it on the held-out test split.
    Train {
        #[arg(long)]
        model: Family,
        #[arg(long)]
        data: PathBuf,
        /// Training configuration JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_fraction)]
        fraction: Option<f64>,
        /// Channel width multiplier, e.g. 1/4.
        #[arg(long)]
        width: Option<Width>,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Evaluate a checkpoint on every 32x32 tile of a container.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Aggregate train reports into seed and fraction tables.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Parameter and FLOP counts per model.
    Cost {
        #[arg(long, value_delimiter = ',', default_values_t = Family::ALL.to_vec())]
        models: Vec<Family>,
        #[arg(long)]
        width: Option<Width>,
        #[command(flatten)]
        dir: OutDir,
    },
    /// Attribution bundle for one sample across trained models.
    Explain {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Zero-based index into the container.
        #[arg(long)]
        sample_id: usize,
        #[arg(long, default_value = "shap,gradcam,ig")]
        methods: Methods,
        #[arg(long, default_value_t = DEFAULT_IG_STEPS, value_parser = parse_steps)]
        ig_steps: usize,
        #[command(flatten)]
        dir: OutDir,
    },
    /// 12x12 pairwise feature similarity.
    FeatureMatrix {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        measure: Measure,
        #[command(flatten)]
        dir: OutDir,
    },
}

fn parse_steps(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("{s:?} is not a positive integer")),
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    FRACTIONS
        .iter()
        .copied()
        .find(|q| (q - p).abs() < 1e-9)
        .ok_or_else(|| format!("fraction must be one of {FRACTIONS:?}"))
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load_data(path: &Path, manifest: &mut RunManifest) -> Result<Container, Failure> {
    manifest.input(path)?;
    Ok(Container::load(path)?)
}

fn load_model(checkpoint: &Path, data: &Container, manifest: &mut RunManifest) -> Result<ModelGraph, Failure> {
    manifest.input(checkpoint)?;
    manifest.input(&ModelCard::path_for(checkpoint))?;
    let (card, model) = ModelCard::load(checkpoint)?;
    let found = data.stats.digest();
    if card.stats_digest != found {
        return Err(Error::DigestMismatch { expected: card.stats_digest, found }.into());
    }
    Ok(model)
}

fn finish(mut manifest: RunManifest, path: &Path, started: Instant) -> CmdResult {
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.write(path)?;
    Ok(())
}

fn gen_data(
    count: u64,
    seed: u64,
    h: u64,
    w: u64,
    separable: bool,
    out: Option<PathBuf>,
    dir: &OutDir,
    mut manifest: RunManifest,
) -> CmdResult {
    let started = Instant::now();
    let cfg = SynthConfig { count: count as usize, h: h as usize, w: w as usize, seed, separable, ..Default::default() };
    let out = out.unwrap_or_else(|| dir.resolve().join(format!("synthetic-{count}-{seed}.wfd1")));
    let data = synthesize(&cfg)?;
    manifest.config_hash = Some(sha256_hex(serde_json::to_string(&cfg).expect("config serializes").as_bytes()));
    manifest.emit(&out, &data.encode())?;
    println!("wrote {} ({} samples, digest {})", out.display(), data.len(), data.digest());
    let mut mpath = out.clone().into_os_string();
    mpath.push(".manifest.json");
    finish(manifest, Path::new(&mpath), started)
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    family: Family,
    data_path: &Path,
    config: Option<PathBuf>,
    seed: Option<u64>,
    fraction: Option<f64>,
    width: Option<Width>,
    dir: &OutDir,
    mut manifest: RunManifest,
) -> CmdResult {
    let started = Instant::now();
    let mut cfg = match &config {
        Some(p) => {
            manifest.input(p)?;
            TrainConfig::from_json(&String::from_utf8_lossy(&fsio::read(p)?))
                .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(f) = fraction {
        cfg.fraction = f;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let mut spec = ModelSpec::desk(family);
    if let Some(w) = width {
        spec = spec.with_width(w);
    }
    let data = load_data(data_path, &mut manifest)?;
    manifest.config_hash = Some(cfg.hash());
    let out = dir.resolve();
    let stem = format!("{}-seed{}-frac{}", family.short_name(), cfg.seed, (cfg.fraction * 100.0).round() as u32);
    let outcome = run(&spec, &data, &cfg)?;
    let report = RunReport { train: outcome.report, test: outcome.test, test_digest: outcome.test_digest };
    manifest.emit(&out.join(format!("{stem}.report.json")), report.to_json().as_bytes())?;
    let result = if report.train.diverged() {
        Err(Failure::Runtime(format!(
            "training diverged at epoch {}; report kept in {}",
            report.train.stopped_epoch + 1,
            out.display()
        )))
    } else {
        let bytes = outcome.model.checkpoint_bytes();
        let ckpt = out.join(format!("{stem}.pyc1"));
        let card = ModelCard {
            spec,
            init_seed: outcome.model.init_seed(),
            stats_digest: data.stats.digest(),
            checkpoint_sha256: sha256_hex(&bytes),
        };
        manifest.emit(&ckpt, &bytes)?;
        manifest.emit(&ModelCard::path_for(&ckpt), card.to_json().as_bytes())?;
        if let Some(t) = &report.test {
            println!(
                "{}: best epoch {}, test AUC {:.4}, AUC-PR {:.4}, precision {:.4}, recall {:.4}",
                family.display_name(),
                report.train.best_epoch,
                t.summary.auc,
                t.summary.auc_pr,
                t.summary.precision,
                t.summary.recall
            );
        }
        Ok(())
    };
    finish(manifest, &out.join(format!("{stem}.manifest.json")), started)?;
    result
}

fn evaluate_cmd(checkpoint: &Path, data_path: &Path, dir: &OutDir, mut manifest: RunManifest) -> CmdResult {
    let started = Instant::now();
    let data = load_data(data_path, &mut manifest)?;
    let model = load_model(checkpoint, &data, &mut manifest)?;
    let eval = evaluate_model(&model, &data)?;
    let out = dir.resolve();
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let json = serde_json::to_string_pretty(&eval).expect("evaluation serializes");
    manifest.emit(&out.join(format!("{stem}.evaluation.json")), json.as_bytes())?;
    manifest.emit(&out.join(format!("{stem}.confusion.csv")), eval.confusion.to_csv().as_bytes())?;
    println!("AUC {:.4}, AUC-PR {:.4}", eval.summary.auc, eval.summary.auc_pr);
    finish(manifest, &out.join(format!("{stem}.evaluate.manifest.json")), started)
}

fn mean_summary(s: &[Summary]) -> Summary {
    let n = s.len() as f64;
    let m = |f: fn(&Summary) -> f64| s.iter().map(f).sum::<f64>() / n;
    Summary { auc: m(|x| x.auc), auc_pr: m(|x| x.auc_pr), precision: m(|x| x.precision), recall: m(|x| x.recall) }
}

fn compare_cmd(paths: &[PathBuf], dir: &OutDir, mut manifest: RunManifest) -> CmdResult {
    let started = Instant::now();
    let mut reports = Vec::new();
    for p in paths {
        manifest.input(p)?;
        let r = RunReport::from_json(&String::from_utf8_lossy(&fsio::read(p)?))
            .map_err(|e| Failure::Usage(format!("{} is not a train report: {e}", p.display())))?;
        reports.push(r);
    }
    if let Some(d) = reports.iter().find(|r| r.test_digest != reports[0].test_digest) {
        return Err(Failure::Runtime(format!(
            "reports were evaluated on different test splits ({} vs {})",
            reports[0].test_digest, d.test_digest
        )));
    }
    // (fraction in basis points, family order) -> reports
    let mut groups: BTreeMap<(u32, usize), Vec<&RunReport>> = BTreeMap::new();
    for r in &reports {
        let fam = Family::ALL.iter().position(|&f| f == r.train.model.family).expect("known family");
        groups.entry(((r.train.config.fraction * 10_000.0).round() as u32, fam)).or_default().push(r);
    }
    let out = dir.resolve();
    let mut seed_rows = Vec::new();
    let mut fraction_rows = Vec::new();
    for ((bp, fam), rs) in &groups {
        let name = Family::ALL[*fam].display_name();
        if *bp == 10_000 {
            let runs = rs
                .iter()
                .map(|r| SeedRun {
                    seed: r.train.seed,
                    summary: r.test.as_ref().map(|e| e.summary),
                    failure: r.train.diverged().then(|| "diverged".to_string()),
                    best_epoch: r.train.best_epoch,
                    stopped_epoch: r.train.stopped_epoch,
                })
                .collect();
            seed_rows.push(SeedSummary::from_runs(name, runs));
        }
        let ok: Vec<Summary> = rs.iter().filter_map(|r| r.test.as_ref().map(|e| e.summary)).collect();
        fraction_rows.push(FractionRow {
            fraction: *bp as f64 / 10_000.0,
            model: name.to_string(),
            train_samples: rs[0].train.train_ids.len(),
            summary: (!ok.is_empty()).then(|| mean_summary(&ok)),
            failure: ok.is_empty().then(|| "all runs failed".to_string()),
            test_digest: rs[0].test_digest.clone(),
        });
    }
    if !seed_rows.is_empty() {
        manifest.emit(&out.join("seed_rows.csv"), seed_table_csv(&seed_rows).as_bytes())?;
    }
    if groups.keys().map(|k| k.0).collect::<std::collections::BTreeSet<_>>().len() > 1 {
        manifest.emit(&out.join("fraction_rows.csv"), fraction_table_csv(&fraction_rows).as_bytes())?;
    }
    let json = serde_json::json!({ "seed_summaries": seed_rows, "fraction_rows": fraction_rows });
    manifest.emit(&out.join("compare.json"), serde_json::to_string_pretty(&json).expect("json").as_bytes())?;
    finish(manifest, &out.join("compare.manifest.json"), started)
}

fn cost_cmd(models: &[Family], width: Option<Width>, dir: &OutDir, mut manifest: RunManifest) -> CmdResult {
    let started = Instant::now();
    let mut graphs = Vec::new();
    for &f in models {
        let mut spec = ModelSpec::desk(f);
        if let Some(w) = width {
            spec = spec.with_width(w);
        }
        graphs.push((f.display_name(), build(&spec, 0)?));
    }
    let report = cost_report(graphs.iter().map(|(n, g)| (*n, g)));
    let out = dir.resolve();
    manifest.emit(&out.join("cost_table.csv"), report.to_table_csv().as_bytes())?;
    manifest.emit(&out.join("cost_rows.csv"), report.to_rows_csv().as_bytes())?;
    print!("{}", report.to_table_csv());
    finish(manifest, &out.join("cost.manifest.json"), started)
}

#[allow(clippy::too_many_arguments)]
fn explain_cmd(
    checkpoints: &[PathBuf],
    data_path: &Path,
    sample_id: usize,
    methods: Methods,
    ig_steps: usize,
    dir: &OutDir,
    mut manifest: RunManifest,
) -> CmdResult {
    let started = Instant::now();
    let data = load_data(data_path, &mut manifest)?;
    if sample_id >= data.len() {
        return Err(Failure::Usage(format!("sample id {sample_id} out of range; valid ids are 0..={}", data.len() - 1)));
    }
    let mut loaded = Vec::new();
    for c in checkpoints {
        let m = load_model(c, &data, &mut manifest)?;
        loaded.push((m.spec().family.display_name().to_string(), m));
    }
    let models: Vec<ExplainModel<'_>> =
        loaded.iter().map(|(name, m)| ExplainModel { name: name.clone(), model: m, trained: true }).collect();
    let bundle = explain_sample(&models, &data, sample_id, methods, ig_steps)?;
    let out = dir.resolve().join(format!("explain-sample-{sample_id}"));
    let written = bundle.write(&out)?;
    manifest.record(&written)?;
    println!("wrote {} files to {}", written.len(), out.display());
    finish(manifest, &out.join("explain.manifest.json"), started)
}

fn feature_matrix_cmd(data_path: &Path, measure: Measure, dir: &OutDir, mut manifest: RunManifest) -> CmdResult {
    let started = Instant::now();
    let data = load_data(data_path, &mut manifest)?;
    let m = feature_matrix(&data, measure)?;
    let out = dir.resolve();
    let name = match measure {
        Measure::Pearson => "pearson",
        Measure::Ssim => "ssim",
    };
    manifest.emit(&out.join(format!("feature_matrix_{name}.csv")), m.to_csv().as_bytes())?;
    finish(manifest, &out.join(format!("feature_matrix_{name}.manifest.json")), started)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let sub = args.first().cloned().unwrap_or_default();
    let manifest = RunManifest::new(&sub, args);
    let result = match cli.command {
        Command::GenData { count, seed, height, width, separable, out, dir } => {
            gen_data(count, seed, height, width, separable, out, &dir, manifest)
        }
        Command::Train { model, data, config, seed, fraction, width, dir } => {
            train_cmd(model, &data, config, seed, fraction, width, &dir, manifest)
        }
        Command::Evaluate { checkpoint, data, dir } => evaluate_cmd(&checkpoint, &data, &dir, manifest),
        Command::Compare { reports, dir } => compare_cmd(&reports, &dir, manifest),
        Command::Cost { models, width, dir } => cost_cmd(&models, width, &dir, manifest),
        Command::Explain { checkpoints, data, sample_id, methods, ig_steps, dir } => {
            explain_cmd(&checkpoints, &data, sample_id, methods, ig_steps, &dir, manifest)
        }
        Command::FeatureMatrix { data, measure, dir } => feature_matrix_cmd(&data, measure, &dir, manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

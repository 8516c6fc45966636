use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use aisc::anomaly::{detect_anomalies, AnomalyConfig};
use aisc::attribution::{pseudo_label_rounds, KMeansParams, PseudoLabelThresholds};
use aisc::dataio::{
    load_detection_log, load_png_rgb, load_samples, load_verdicts, save_png_rgb, SampleFormat,
    SampleSet,
};
use aisc::metrics::{self, AreaNorm, DeepfakeScoreInput, DrivingScoreInput, ScoreReport};
use aisc::patchcheck::{connected_components, region_mask, validate_face_patch, Connectivity};
use aisc::patchopt::{load_palette, optimize_patch, OptimizeSettings, Texture, ToySceneSpec};
use aisc::retrieval::{
    label_map, precision_at_5, write_results_jsonl, GalleryIndex, SUBMISSION_HITS,
};

#[derive(Parser)]
#[command(
    name = "aisc",
    version,
    about = "Scoring and analysis tools for deepfake attribution and adversarial patches"
)]
struct Cli {
    /// JSON config for the subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (directory for `optimize`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Retrieve the top gallery matches for every probe.
    Attribute(AttributeArgs),
    /// Assign pseudo-labels to unlabeled samples with constrained k-means.
    PseudoLabel(PseudoArgs),
    /// Score how likely each probe comes from an unseen class.
    Anomaly(AnomalyArgs),
    /// Compute a track score.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Check a face patch against the connected-domain limits.
    ValidatePatch(ValidateArgs),
    /// Optimize a patch against the built-in toy detector.
    Optimize,
}

#[derive(Args)]
struct AttributeArgs {
    #[arg(long)]
    probe: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct PseudoArgs {
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long)]
    k_extra: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args)]
struct AnomalyArgs {
    #[arg(long)]
    probe: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
}

#[derive(Subcommand)]
enum ScoreCommand {
    /// 0.6·precision@5 + 0.3·AUC + 0.1·subjective.
    Deepfake {
        #[arg(long)]
        precision5: Option<f64>,
        #[arg(long)]
        auc: Option<f64>,
        #[arg(long)]
        subjective: Option<f64>,
    },
    /// Mean attack success over the verification models.
    Face {
        #[arg(long)]
        verdicts: PathBuf,
    },
    /// Per-object driving score from a detection log and the printed patch.
    Driving {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        patch: PathBuf,
        #[arg(long, default_value_t = 8, value_parser = parse_connectivity_arg)]
        connectivity: u8,
        #[arg(long, value_enum, default_value_t = AreaNormArg::ChannelMean)]
        area_norm: AreaNormArg,
    },
    /// 0.8·truck + 0.2·person.
    DrivingTotal {
        #[arg(long)]
        truck: f64,
        #[arg(long)]
        person: f64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AreaNormArg {
    ChannelMean,
    ChannelSum,
}

impl From<AreaNormArg> for AreaNorm {
    fn from(a: AreaNormArg) -> Self {
        match a {
            AreaNormArg::ChannelMean => AreaNorm::ChannelMean,
            AreaNormArg::ChannelSum => AreaNorm::ChannelSum,
        }
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    adv: PathBuf,
    #[arg(long)]
    orig: PathBuf,
    #[arg(long, default_value_t = 8, value_parser = parse_connectivity_arg)]
    connectivity: u8,
}

fn parse_connectivity_arg(s: &str) -> std::result::Result<u8, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err("connectivity must be 4 or 8".into()),
    }
}

/// Command finished but the input failed a competition rule.
struct Rejected(String);

enum Outcome {
    Done,
    Rejected(Rejected),
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn load_set(path: &Path) -> Result<SampleSet> {
    Ok(load_samples(path, SampleFormat::from_path(path))?)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            Ok(stdout.flush()?)
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeConfig {
    k: Option<usize>,
}

fn cmd_attribute(cli: &Cli, args: &AttributeArgs) -> Result<Outcome> {
    let cfg: AttributeConfig = read_config(cli.config.as_deref())?;
    let k = args.k.or(cfg.k).unwrap_or(SUBMISSION_HITS);
    let probes = load_set(&args.probe)?;
    let gallery = load_set(&args.gallery)?;
    let index = GalleryIndex::new(&gallery)?;
    let results = index.top_k_all(&probes, k)?;
    let mut buf = Vec::new();
    write_results_jsonl(&results, &mut buf)?;
    emit(cli.out.as_deref(), &buf)?;

    if probes.iter().all(|r| r.label.is_some()) {
        if let Some(r) = gallery.iter().find(|r| r.label.is_none()) {
            bail!("gallery record `{}` has no label", r.id);
        }
        let top5 = if k == SUBMISSION_HITS {
            results
        } else {
            index.top_k_all(&probes, SUBMISSION_HITS)?
        };
        let p = precision_at_5(&top5, &label_map(&probes), &label_map(&gallery))?;
        eprintln!("precision@5: {p}");
    }
    Ok(Outcome::Done)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PseudoConfig {
    k_extra: usize,
    rounds: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    thresholds: PseudoLabelThresholds,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        let km = KMeansParams::new(0, 0);
        PseudoConfig {
            k_extra: 1,
            rounds: 3,
            seed: 0,
            max_iter: km.max_iter,
            tol: km.tol,
            thresholds: PseudoLabelThresholds::default(),
        }
    }
}

fn cmd_pseudo(cli: &Cli, args: &PseudoArgs) -> Result<Outcome> {
    let cfg: PseudoConfig = read_config(cli.config.as_deref())?;
    let labeled = load_set(&args.labeled)?;
    let unlabeled = load_set(&args.unlabeled)?;
    let params = KMeansParams {
        k: 0,
        seed: cli.seed.unwrap_or(cfg.seed),
        max_iter: cfg.max_iter,
        tol: cfg.tol,
    };
    let outcome = pseudo_label_rounds(
        &labeled,
        &unlabeled,
        args.k_extra.unwrap_or(cfg.k_extra),
        args.rounds.unwrap_or(cfg.rounds),
        &params,
        &cfg.thresholds,
    )?;
    let mut buf = Vec::new();
    outcome.report.write_csv(&mut buf)?;
    emit(cli.out.as_deref(), &buf)?;
    eprintln!(
        "accepted {} of {} after {} round(s)",
        outcome.report.accepted.len(),
        unlabeled.len(),
        outcome.rounds_run
    );
    Ok(Outcome::Done)
}

fn cmd_anomaly(cli: &Cli, args: &AnomalyArgs) -> Result<Outcome> {
    let mut cfg: AnomalyConfig = read_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let probes = load_set(&args.probe)?;
    let gallery = load_set(&args.gallery)?;
    let report = detect_anomalies(&probes, &gallery, &cfg)?;
    match cli.out.as_deref() {
        Some(p) => report.save(p)?,
        None => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            emit(None, &buf)?;
        }
    }
    Ok(Outcome::Done)
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeepfakeConfig {
    precision5: Option<f64>,
    auc: Option<f64>,
    subjective: Option<f64>,
}

fn cmd_score(cli: &Cli, cmd: &ScoreCommand) -> Result<Outcome> {
    let out = cli.out.as_deref();
    let report = match cmd {
        ScoreCommand::Deepfake {
            precision5,
            auc,
            subjective,
        } => {
            let cfg: DeepfakeConfig = read_config(cli.config.as_deref())?;
            let need = |flag: Option<f64>, cfg: Option<f64>, name: &str| {
                flag.or(cfg).with_context(|| format!("missing --{name}"))
            };
            metrics::deepfake_report(DeepfakeScoreInput {
                precision5: need(*precision5, cfg.precision5, "precision5")?,
                auc: need(*auc, cfg.auc, "auc")?,
                subjective: need(*subjective, cfg.subjective, "subjective")?,
            })?
        }
        ScoreCommand::Face { verdicts } => metrics::face_report(&load_verdicts(verdicts)?),
        ScoreCommand::Driving {
            log,
            patch,
            connectivity,
            area_norm,
        } => {
            let log = load_detection_log(log)?;
            let patch = load_png_rgb(patch)?;
            let conn = Connectivity::try_from(*connectivity)?;
            let regions = connected_components(&region_mask(&patch), conn).count();
            let input = DrivingScoreInput {
                log: &log,
                patch: &patch,
                connected_region_count: regions,
            };
            match metrics::driving_object_score(input, (*area_norm).into()) {
                Ok(score) => {
                    let mut r = score.report();
                    r.components.insert("regions".into(), regions as f64);
                    r
                }
                Err(e @ aisc::Error::VoidResult { .. }) => {
                    return Ok(Outcome::Rejected(Rejected(e.to_string())));
                }
                Err(e) => return Err(e.into()),
            }
        }
        ScoreCommand::DrivingTotal { truck, person } => {
            if !truck.is_finite() || !person.is_finite() {
                bail!("scores must be finite");
            }
            ScoreReport {
                score: metrics::driving_total_score(*truck, *person),
                components: [
                    ("truck".to_string(), *truck),
                    ("person".to_string(), *person),
                ]
                .into_iter()
                .collect(),
            }
        }
    };
    emit_json(out, &report)?;
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct ValidationOutput {
    connectivity: u8,
    count: usize,
    #[serde(flatten)]
    report: aisc::patchcheck::ComponentReport,
}

fn cmd_validate(cli: &Cli, args: &ValidateArgs) -> Result<Outcome> {
    let adv = load_png_rgb(&args.adv)?;
    let orig = load_png_rgb(&args.orig)?;
    let report = validate_face_patch(&adv, &orig, Connectivity::try_from(args.connectivity)?)?;
    let valid = report.valid;
    let summary = format!(
        "{} component(s), area {}",
        report.count(),
        report.total_area
    );
    emit_json(
        cli.out.as_deref(),
        &ValidationOutput {
            connectivity: args.connectivity,
            count: report.count(),
            report,
        },
    )?;
    Ok(if valid {
        Outcome::Done
    } else {
        Outcome::Rejected(Rejected(format!("invalid patch: {summary}")))
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchInit {
    height: usize,
    width: usize,
    #[serde(default = "mid_grey")]
    init: f64,
}

fn mid_grey() -> f64 {
    0.5
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizeConfig {
    patch: PatchInit,
    #[serde(default)]
    scene: ToySceneSpec,
    run: OptimizeSettings,
    #[serde(default)]
    palette: Option<PathBuf>,
}

#[derive(Serialize)]
struct OptimizeSummary {
    iterations: usize,
    objectness_before: f64,
    objectness_after: f64,
    reduction: f64,
    final_loss: f64,
}

fn cmd_optimize(cli: &Cli) -> Result<Outcome> {
    let path = cli.config.as_deref().context("optimize needs --config")?;
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg: OptimizeConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    cfg.run.validate()?;
    if cfg.patch.height == 0 || cfg.patch.width == 0 {
        bail!("patch size must be positive");
    }
    let palette = cfg.palette.as_deref().map(load_palette).transpose()?;
    let scene = cfg.scene.build()?;
    let init = Texture::filled(cfg.patch.height, cfg.patch.width, 3, cfg.patch.init);
    let before = scene.detector.mean_objectness(&scene.frames, &init)?;
    let outcome = optimize_patch(
        &scene.frames,
        &[&scene.detector],
        init,
        palette.as_ref(),
        &cfg.run,
    )?;
    let after = scene
        .detector
        .mean_objectness(&scene.frames, &outcome.state.texture)?;

    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    save_png_rgb(&outcome.state.texture.to_image()?, dir.join("patch.png"))?;
    let mut trace = String::from("iter,loss\n");
    for (i, v) in outcome.trace.iter().enumerate() {
        trace.push_str(&format!("{i},{v}\n"));
    }
    fs::write(dir.join("trace.csv"), trace).context("writing trace.csv")?;
    emit_json(
        None,
        &OptimizeSummary {
            iterations: outcome.trace.len(),
            objectness_before: before,
            objectness_after: after,
            reduction: 1.0 - after / before,
            final_loss: outcome.trace.last().copied().unwrap_or(f64::NAN),
        },
    )?;
    Ok(Outcome::Done)
}

fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Attribute(a) => cmd_attribute(cli, a),
        Command::PseudoLabel(a) => cmd_pseudo(cli, a),
        Command::Anomaly(a) => cmd_anomaly(cli, a),
        Command::Score(s) => cmd_score(cli, s),
        Command::ValidatePatch(a) => cmd_validate(cli, a),
        Command::Optimize => cmd_optimize(cli),
    }
}

fn main() -> ExitCode {
    // Usage errors are input errors (exit 1); 2 is reserved for rule violations.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Rejected(Rejected(msg))) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use asc_core::data::{parse_manifest, synth_dataset, ManifestRow, SynthOptions};
use asc_core::eval::{evaluate, evaluate_labels, make_folds, FoldPlan, DEFAULT_FOLDS};
use asc_core::fusion::{
    apply_calibration, average_fold_scores, fit_calibration, vote_systems, CalibrationModel, ScoreMatrix,
};
use asc_core::pipeline::{extract_dataset, load_examples};
use asc_core::topology::{build, BuildOptions, Topology};
use asc_core::train::{predict, train, Checkpoint, TrainConfig};
use asc_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "asc", version, about = "Acoustic scene classification pipeline")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice (synthesis, fold plan, training).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic ten-scene corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        per_class: usize,
    },
    /// Compute and cache log-mel features for every manifest row.
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        audio_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign recording locations to cross-validation folds.
    Folds {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one topology with a fold held out for validation.
    Train(TrainArgs),
    /// Score segments with a trained checkpoint.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features_dir: Option<PathBuf>,
        /// Restrict scoring to this fold (needs --folds-file).
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        folds_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrated score fusion.
    #[command(subcommand)]
    Fuse(FuseCommand),
    /// Average score files covering the same segments.
    Avg {
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Majority vote across systems; ties follow the fallback scores.
    Vote {
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        fallback: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-scene accuracy report.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        scores: Option<PathBuf>,
        /// `segment_id<TAB>scene_label` file, as written by `vote`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        confusion: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum FuseCommand {
    /// Fit fusion weights on labelled scores.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply fitted weights.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fail on the first malformed manifest row instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    features_dir: Option<PathBuf>,
    #[arg(long)]
    folds_file: Option<PathBuf>,
    /// Fold held out for validation.
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long, value_parser = ["vgg", "lcnn", "xvec"])]
    topology: Option<String>,
    /// Divide every hidden width by this factor.
    #[arg(long)]
    width_divisor: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    decay_start_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    lr_final: Option<f64>,
    #[arg(long)]
    crop_len: Option<usize>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    /// Output directory for `model.ascm` and `train.log`.
    #[arg(long)]
    out: PathBuf,
}

struct Ctx {
    cfg: RunConfig,
    seed: Option<u64>,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.or(self.cfg.seed).unwrap_or(0)
    }

    fn manifest(&self, data: &DataArgs) -> Result<(PathBuf, Vec<ManifestRow>)> {
        let path = required(data.manifest.clone().or_else(|| self.cfg.manifest.clone()), "--manifest")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let parsed = parse_manifest(&text, data.strict).map_err(|e| e.context(path.display()))?;
        for w in &parsed.warnings {
            eprintln!("warning: {}: {w}", path.display());
        }
        for e in &parsed.errors {
            eprintln!("warning: {}: skipped {e}", path.display());
        }
        if parsed.rows.is_empty() {
            return Err(Error::Input(format!("{}: no usable rows", path.display())));
        }
        Ok((path, parsed.rows))
    }

    fn features_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        required(flag.or_else(|| self.cfg.features_dir.clone()), "--features-dir")
    }

    fn fold_plan(&self, flag: Option<PathBuf>) -> Result<FoldPlan> {
        FoldPlan::load(&required(flag.or_else(|| self.cfg.folds_file.clone()), "--folds-file")?)
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("{flag} is required (flag or config file)")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn system_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn read_scores(paths: &[PathBuf]) -> Result<Vec<ScoreMatrix>> {
    paths.iter().map(|p| ScoreMatrix::read(p)).collect()
}

fn label_map(rows: &[ManifestRow]) -> HashMap<String, usize> {
    rows.iter().map(|r| (r.segment_id(), r.label)).collect()
}

fn labels_for(ids: &[String], labels: &HashMap<String, usize>) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            labels.get(id).copied().ok_or_else(|| Error::Alignment(format!("segment {id} is not in the manifest")))
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx { cfg, seed: cli.seed };
    match cli.command {
        Command::Synth { out, per_class } => {
            let rows = synth_dataset(&SynthOptions::new(per_class, ctx.seed()), &out)?;
            eprintln!("wrote {} segments to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Features { data, audio_dir, out } => {
            let (path, rows) = ctx.manifest(&data)?;
            let audio_dir = audio_dir
                .or_else(|| ctx.cfg.audio_dir.clone())
                .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            extract_dataset(&rows, &audio_dir, &out)?;
            eprintln!("cached features for {} segments in {}", rows.len(), out.display());
            Ok(())
        }
        Command::Folds { data, folds, out } => {
            let (_, rows) = ctx.manifest(&data)?;
            let plan = make_folds(&rows, folds, ctx.seed())?;
            plan.save(&out)?;
            let imbalance = plan.imbalance(&rows, asc_core::topology::N_CLASSES)?;
            eprintln!("{} locations in {folds} folds, class imbalance {imbalance:.3}", plan.locations.len());
            Ok(())
        }
        Command::Train(args) => run_train(&ctx, args),
        Command::Predict { data, checkpoint, features_dir, fold, folds_file, out } => {
            let (_, rows) = ctx.manifest(&data)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let selected: Vec<&ManifestRow> = match fold {
                Some(f) => ctx.fold_plan(folds_file)?.split(&rows, f)?.0,
                None => rows.iter().collect(),
            };
            let examples = load_examples(selected, &ctx.features_dir(features_dir)?)?;
            let feats: Vec<_> = examples.iter().map(|e| &e.features).collect();
            let scores = predict(&ckpt, &feats)?;
            let ids = examples.into_iter().map(|e| e.id).collect();
            ScoreMatrix::new(ckpt.spec().topology.as_str(), ids, scores)?.write(&out)
        }
        Command::Fuse(FuseCommand::Fit { data, scores, out }) => {
            let (_, rows) = ctx.manifest(&data)?;
            let mut systems = read_scores(&scores)?;
            for (s, p) in systems.iter_mut().zip(&scores) {
                s.system = system_name(p);
            }
            let labels = labels_for(&systems[0].ids, &label_map(&rows))?;
            let (model, report) = fit_calibration(&systems, &labels)?;
            eprintln!(
                "fusion NLL {:.6} -> {:.6} after {} iterations{}",
                report.initial_nll,
                report.final_nll,
                report.iterations,
                if report.converged { "" } else { " (not converged)" }
            );
            model.save(&out)
        }
        Command::Fuse(FuseCommand::Apply { model, scores, out }) => {
            let model = CalibrationModel::load(&model)?;
            let systems = read_scores(&scores)?;
            for (name, p) in model.systems.iter().zip(&scores) {
                if *name != system_name(p) {
                    eprintln!("warning: {} is used in the slot fitted for {name}", p.display());
                }
            }
            apply_calibration(&model, &systems)?.write(&out)
        }
        Command::Avg { scores, out } => average_fold_scores(&read_scores(&scores)?)?.write(&out),
        Command::Vote { scores, fallback, out } => {
            let fallback = ScoreMatrix::read(&fallback)?;
            let votes = vote_systems(&read_scores(&scores)?, &fallback)?;
            let mut text = String::from("segment_id\tscene_label\n");
            for (id, c) in fallback.ids.iter().zip(votes) {
                text.push_str(&format!("{id}\t{}\n", asc_core::data::SCENES[c]));
            }
            write_text(&out, &text)
        }
        Command::Eval { data, scores, predictions, confusion, out } => {
            let (_, rows) = ctx.manifest(&data)?;
            let labels = label_map(&rows);
            let report = match (scores, predictions) {
                (Some(p), _) => evaluate(&ScoreMatrix::read(&p)?, &labels)?,
                (None, Some(p)) => {
                    let (ids, predicted) = read_predictions(&p)?;
                    evaluate_labels(&ids, &predicted, &labels, asc_core::data::SCENES.len())?
                }
                (None, None) => return Err(Error::Config("--scores or --predictions is required".into())),
            };
            let text = report.render();
            match out {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
            if let Some(p) = confusion {
                write_text(&p, &report.confusion_tsv())?;
            }
            Ok(())
        }
    }
}

fn read_predictions(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    let mut predicted = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: String| Error::line(i + 1, m).context(path.display());
        let (id, label) = line.split_once('\t').ok_or_else(|| bad("expected segment_id<TAB>scene_label".into()))?;
        let c = asc_core::data::scene_index(label.trim()).ok_or_else(|| bad(format!("unknown scene {label:?}")))?;
        ids.push(id.to_string());
        predicted.push(c);
    }
    Ok((ids, predicted))
}

fn run_train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    let topology =
        Topology::parse(&required(args.topology.clone().or_else(|| ctx.cfg.topology.clone()), "--topology")?)?;
    let fold = required(args.fold.or(ctx.cfg.fold), "--fold")?;
    let mut tc: TrainConfig = ctx.cfg.train.clone();
    macro_rules! flag {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { tc.$f = v; } )* };
    }
    flag!(max_epochs, decay_start_epoch, batch_size, patience, lr0, lr_final, crop_len, dropout_rate);
    if let Some(s) = ctx.seed.or(ctx.cfg.seed) {
        tc.seed = s;
    }
    tc.validate()?;

    let opts = BuildOptions {
        width_divisor: args.width_divisor.or(ctx.cfg.width_divisor).unwrap_or(1),
        dropout_rate: tc.dropout_rate,
    };
    let spec = build(topology, &opts)?;
    let (_, rows) = ctx.manifest(&args.data)?;
    let plan = ctx.fold_plan(args.folds_file.clone())?;
    let (held, rest) = plan.split(&rows, fold)?;
    let features_dir = ctx.features_dir(args.features_dir.clone())?;
    let train_set = load_examples(rest, &features_dir)?;
    let val_set = load_examples(held, &features_dir)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let log_path = args.out.join("train.log");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let header = "epoch\tlr\ttrain_loss\tval_loss\tval_accuracy";
    writeln!(log, "{header}").map_err(|e| Error::io(&log_path, e))?;
    eprintln!("{} on {} segments, validating on fold {fold} ({} segments)", topology, train_set.len(), val_set.len());
    eprintln!("{header}");
    let mut log_err = None;
    let outcome = train(spec, &train_set, &val_set, &tc, |e| {
        let line = e.to_line();
        eprintln!("{line}");
        if let Err(err) = writeln!(log, "{line}") {
            log_err.get_or_insert(Error::io(&log_path, err));
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    outcome.checkpoint.save(&args.out.join("model.ascm"))
}

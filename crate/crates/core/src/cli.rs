//! Command-line interface. `run_from` parses arguments, runs one subcommand
//! and returns the process exit code: 0 on success, 1 on a runtime failure,
//! 2 on a usage or configuration error.
//!
//! Every command writes `run_manifest.json` into its output directory (bench
//! prints it when no directory is given).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::{load_cascade, save_cascade, train_cascade};
use crate::config::Config;
use crate::data::icvl::{load_icvl, write_icvl};
use crate::data::msra::{load_msra, write_msra};
use crate::data::synth::generate_dataset;
use crate::data::{split_leave_one_subject_out, DatasetIndex};
use crate::error::Error;
use crate::eval::{evaluate, format_table, write_csv, write_json, write_overlay};
use crate::finger_detect::{detect_and_identify, detect_fingers, Detection};
use crate::geometry::{DepthImage, HandPose, Point3, SkeletonSpec};
use crate::pipeline::{Pipeline, StageTimings};
use crate::voting::{load_voting, save_voting, train_voting, Vote};

#[derive(Parser, Debug)]
#[command(name = "handpose", version, about = "Depth-image hand pose estimation")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set cascade.forest.tree_count=4`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed, replacing the configured one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Msra,
    Icvl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SkeletonKind {
    Msra21,
    Icvl16,
}

#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    /// Dataset root (MSRA layout) or image directory (ICVL layout).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "msra")]
    pub format: Format,
    /// ICVL label file; defaults to `<dataset>/labels.txt`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Leave this subject out: training commands use every other subject,
    /// testing commands only this one.
    #[arg(long)]
    pub held_out: Option<u32>,
    /// Use only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic dataset to disk.
    SynthGenerate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        subjects: u32,
        #[arg(long, value_enum, default_value = "msra21")]
        skeleton: SkeletonKind,
    },
    /// Train the cascaded baseline.
    TrainBaseline {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the voting forest.
    TrainVoting {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump finger detections, one JSON file per image.
    Detect {
        #[command(flatten)]
        data: DatasetArgs,
        /// Baseline model used to assign finger identities.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Baseline plus refinement on every image; writes predictions and a report.
    Refine {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        voting: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write every vote to `<out>/votes/<id>.json`.
        #[arg(long)]
        dump_votes: bool,
        /// Write overlay images to `<out>/overlays`.
        #[arg(long)]
        overlays: bool,
    },
    /// Score a predictions file against the dataset.
    Evaluate {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-threaded end-to-end throughput.
    Bench {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        voting: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// One line of `predictions.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    /// Refined joints, mm.
    pub joints: Vec<[f64; 3]>,
    /// Per joint: was it eligible for refinement.
    pub updated: Vec<bool>,
    /// Baseline joints, mm.
    pub baseline: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub images: usize,
    pub images_per_second: f64,
    /// Mean milliseconds per image for each stage.
    pub stages_ms: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_path: Option<String>,
    /// Effective configuration after overrides, TOML.
    pub config: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// sha256 of each model bundle read or written.
    pub model_hashes: BTreeMap<String, String>,
    pub timing: Timing,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            Error::Invalid { what, reason } if what.ends_with("config") => Failure::Usage(format!("invalid {what}: {reason}")),
            e => Failure::Runtime(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let result = match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Failure::Runtime(Error::invalid("thread pool", e.to_string()))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Run {
    cfg: Config,
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    fn new(cli: &Cli, command: &str) -> CliResult<Self> {
        if let Some(p) = &cli.config {
            require(p, "config file")?;
        }
        let mut cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        let manifest = RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_path: cli.config.as_ref().map(|p| p.display().to_string()),
            config: cfg.to_toml()?,
            seed: cfg.seed,
            threads: cli.threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
            model_hashes: BTreeMap::new(),
            timing: Timing::default(),
        };
        Ok(Run {
            cfg,
            manifest,
            started: Instant::now(),
        })
    }

    fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(p.display().to_string());
    }

    fn output(&mut self, p: &Path) {
        self.manifest.outputs.push(p.display().to_string());
    }

    fn model(&mut self, name: &str, dir: &Path) -> CliResult<()> {
        self.manifest.model_hashes.insert(name.into(), hash_bundle(dir)?);
        Ok(())
    }

    fn finish(self, images: usize, out: Option<&Path>) -> CliResult<()> {
        let wall = self.started.elapsed().as_secs_f64();
        self.finish_timed(images, wall, out)
    }

    fn finish_timed(mut self, images: usize, wall: f64, out: Option<&Path>) -> CliResult<()> {
        self.manifest.timing.wall_seconds = wall;
        self.manifest.timing.images = images;
        self.manifest.timing.images_per_second = if wall > 0.0 { images as f64 / wall } else { 0.0 };
        let text = serde_json::to_string_pretty(&self.manifest).map_err(Error::from)?;
        match out {
            Some(dir) => {
                let path = dir.join("run_manifest.json");
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            None => println!("{text}"),
        }
        Ok(())
    }
}

/// sha256 over the sorted file names and contents of a bundle directory.
pub fn hash_bundle(dir: &Path) -> crate::Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn load_dataset(args: &DatasetArgs, cfg: &Config, training: bool) -> CliResult<DatasetIndex> {
    require(&args.dataset, "dataset")?;
    let mut index = match args.format {
        Format::Msra => load_msra(&args.dataset, &cfg.msra)?,
        Format::Icvl => {
            let labels = args.labels.clone().unwrap_or_else(|| args.dataset.join("labels.txt"));
            require(&labels, "label file")?;
            load_icvl(&labels, &args.dataset, &cfg.icvl)?
        }
    };
    if let Some(s) = args.held_out {
        let (train, test) = split_leave_one_subject_out(&index, s).map_err(|e| Failure::Usage(e.to_string()))?;
        index = if training { train } else { test };
    }
    if let Some(n) = args.limit {
        index.samples.truncate(n);
    }
    index.validate()?;
    if index.is_empty() {
        return Err(Failure::Usage("dataset selection is empty".into()));
    }
    Ok(index)
}

fn load_images(index: &DatasetIndex) -> crate::Result<Vec<DepthImage>> {
    (0..index.len()).into_par_iter().map(|i| index.load_image(i)).collect()
}

fn create_dir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| Failure::Runtime(Error::io(p, e)))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Runtime(Error::io(path, e)))
}

fn xyz(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn to_pose(joints: &[[f64; 3]], skeleton: &Arc<SkeletonSpec>) -> crate::Result<HandPose> {
    HandPose::new(joints.iter().map(|j| Point3::new(j[0], j[1], j[2])).collect(), skeleton.clone())
}

fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::SynthGenerate {
            out,
            count,
            subjects,
            skeleton,
        } => {
            let mut run = Run::new(cli, "synth-generate")?;
            let sk = Arc::new(match skeleton {
                SkeletonKind::Msra21 => SkeletonSpec::msra21(),
                SkeletonKind::Icvl16 => SkeletonSpec::icvl16(),
            });
            if *count == 0 || *subjects == 0 {
                return Err(Failure::Usage("--count and --subjects must be positive".into()));
            }
            let index = generate_dataset(&run.cfg.synth, &sk, *count, *subjects, run.cfg.seed)?;
            create_dir(out)?;
            match skeleton {
                SkeletonKind::Msra21 => {
                    let msra = crate::data::msra::MsraConfig {
                        intrinsics: run.cfg.synth.intrinsics,
                        ..run.cfg.msra.clone()
                    };
                    write_msra(&index, out, &msra)?
                }
                SkeletonKind::Icvl16 => {
                    let icvl = crate::data::icvl::IcvlConfig {
                        intrinsics: run.cfg.synth.intrinsics,
                        ..run.cfg.icvl.clone()
                    };
                    write_icvl(&index, out, &icvl)?
                }
            }
            run.output(out);
            run.finish(*count, Some(out))
        }
        Command::TrainBaseline { data, out } => {
            let mut run = Run::new(cli, "train-baseline")?;
            let index = load_dataset(data, &run.cfg, true)?;
            run.input(&data.dataset);
            let images = load_images(&index)?;
            let refs: Vec<&DepthImage> = images.iter().collect();
            let poses: Vec<&HandPose> = index.samples.iter().map(|s| &s.pose).collect();
            let trained = train_cascade(&refs, &poses, &index.intrinsics, &run.cfg.cascade, run.cfg.seed)?;
            save_cascade(&trained.model, out)?;
            write_text(
                &out.join("stage_errors.json"),
                &serde_json::to_string_pretty(&trained.stage_errors).map_err(Error::from)?,
            )?;
            run.output(out);
            run.model("baseline", out)?;
            run.finish(index.len(), Some(out))
        }
        Command::TrainVoting { data, out } => {
            let mut run = Run::new(cli, "train-voting")?;
            let index = load_dataset(data, &run.cfg, true)?;
            run.input(&data.dataset);
            let images = load_images(&index)?;
            let refs: Vec<&DepthImage> = images.iter().collect();
            let poses: Vec<&HandPose> = index.samples.iter().map(|s| &s.pose).collect();
            let model = train_voting(&refs, &poses, &index.intrinsics, &run.cfg.voting, run.cfg.seed)?;
            save_voting(&model, out)?;
            run.output(out);
            run.model("voting", out)?;
            run.finish(index.len(), Some(out))
        }
        Command::Detect { data, baseline, out } => {
            let mut run = Run::new(cli, "detect")?;
            let index = load_dataset(data, &run.cfg, false)?;
            run.input(&data.dataset);
            let model = match baseline {
                Some(b) => {
                    require(b, "baseline model")?;
                    run.input(b);
                    run.model("baseline", b)?;
                    Some(load_cascade(b)?)
                }
                None => None,
            };
            let dir = out.join("detections");
            create_dir(&dir)?;
            #[derive(Serialize)]
            struct Dump<'a> {
                id: &'a str,
                #[serde(flatten)]
                detection: Detection,
            }
            let cfg = &run.cfg.detect;
            (0..index.len()).into_par_iter().try_for_each(|i| -> CliResult<()> {
                let img = index.load_image(i)?;
                let detection = match &model {
                    Some(m) => {
                        let base = m.predict(&img)?;
                        detect_and_identify(&img, &index.intrinsics, &base, cfg)?
                    }
                    None => detect_fingers(&img, &index.intrinsics, &index.skeleton, cfg)?,
                };
                let s = &index.samples[i];
                let text = serde_json::to_string_pretty(&Dump { id: &s.id, detection }).map_err(Error::from)?;
                write_text(&dir.join(format!("{}.json", s.id)), &text)
            })?;
            run.output(&dir);
            run.finish(index.len(), Some(out))
        }
        Command::Refine {
            data,
            baseline,
            voting,
            out,
            dump_votes,
            overlays,
        } => {
            let mut run = Run::new(cli, "refine")?;
            require(baseline, "baseline model")?;
            require(voting, "voting model")?;
            let index = load_dataset(data, &run.cfg, false)?;
            run.input(&data.dataset);
            run.input(baseline);
            run.input(voting);
            run.model("baseline", baseline)?;
            run.model("voting", voting)?;
            let pipeline = Pipeline::new(load_cascade(baseline)?, load_voting(voting)?, run.cfg.detect.clone())?;
            if pipeline.cascade.skeleton != index.skeleton {
                return Err(Failure::Runtime(Error::SkeletonMismatch {
                    expected: index.skeleton.joint_count,
                    found: pipeline.cascade.skeleton.joint_count,
                }));
            }
            create_dir(out)?;
            if *dump_votes {
                create_dir(&out.join("votes"))?;
            }
            let intr = index.intrinsics;
            let results: Vec<(PredictionRecord, StageTimings)> = (0..index.len())
                .into_par_iter()
                .map(|i| -> CliResult<_> {
                    let img = index.load_image(i)?;
                    let est = pipeline.run(&img)?;
                    let s = &index.samples[i];
                    if *dump_votes {
                        #[derive(Serialize)]
                        struct VoteDump<'a> {
                            id: &'a str,
                            votes: &'a [Vote],
                        }
                        let text = serde_json::to_string(&VoteDump {
                            id: &s.id,
                            votes: &est.refinement.votes,
                        })
                        .map_err(Error::from)?;
                        write_text(&out.join("votes").join(format!("{}.json", s.id)), &text)?;
                    }
                    if *overlays {
                        let dir = out.join("overlays");
                        write_overlay(&dir, &s.id, "baseline", &img, &est.baseline, &intr)?;
                        write_overlay(&dir, &s.id, "refined", &img, est.refined(), &intr)?;
                    }
                    Ok((
                        PredictionRecord {
                            id: s.id.clone(),
                            joints: est.refined().joints.iter().map(xyz).collect(),
                            updated: est.refinement.updated.clone(),
                            baseline: est.baseline.joints.iter().map(xyz).collect(),
                        },
                        est.timings,
                    ))
                })
                .collect::<CliResult<_>>()?;
            let mut lines = String::new();
            let mut total = StageTimings::default();
            for (r, t) in &results {
                lines.push_str(&serde_json::to_string(r).map_err(Error::from)?);
                lines.push('\n');
                total.add(t);
            }
            let pred_path = out.join("predictions.jsonl");
            write_text(&pred_path, &lines)?;
            let records: Vec<PredictionRecord> = results.into_iter().map(|(r, _)| r).collect();
            let reports = report_from_records(&index, &records)?;
            write_reports(&reports, out)?;
            print!("{}", format_table(&reports));
            run.output(&pred_path);
            stage_ms(&mut run.manifest.timing, &total, index.len());
            run.finish(index.len(), Some(out))
        }
        Command::Evaluate { data, predictions, out } => {
            let mut run = Run::new(cli, "evaluate")?;
            require(predictions, "predictions file")?;
            let index = load_dataset(data, &run.cfg, false)?;
            run.input(&data.dataset);
            run.input(predictions);
            let text = fs::read_to_string(predictions).map_err(|e| Error::io(predictions, e))?;
            let mut records = Vec::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let r: PredictionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                    path: predictions.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                records.push(r);
            }
            let reports = report_from_records(&index, &records)?;
            create_dir(out)?;
            write_reports(&reports, out)?;
            print!("{}", format_table(&reports));
            run.finish(index.len(), Some(out))
        }
        Command::Bench {
            data,
            baseline,
            voting,
            count,
            out,
        } => {
            let mut run = Run::new(cli, "bench")?;
            require(baseline, "baseline model")?;
            require(voting, "voting model")?;
            let mut index = load_dataset(data, &run.cfg, false)?;
            index.samples.truncate(*count);
            run.input(&data.dataset);
            run.model("baseline", baseline)?;
            run.model("voting", voting)?;
            let pipeline = Pipeline::new(load_cascade(baseline)?, load_voting(voting)?, run.cfg.detect.clone())?;
            let images = load_images(&index)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map_err(|e| Failure::Runtime(Error::invalid("thread pool", e.to_string())))?;
            let (total, wall) = pool.install(|| -> CliResult<_> {
                let start = Instant::now();
                let mut total = StageTimings::default();
                for img in &images {
                    total.add(&pipeline.run(img)?.timings);
                }
                Ok((total, start.elapsed().as_secs_f64()))
            })?;
            let n = images.len();
            let fps = n as f64 / wall;
            println!("{n} frames in {wall:.2} s: {fps:.1} fps (single thread)");
            for (name, d) in [("cascade", total.cascade), ("detect", total.detect), ("vote", total.vote)] {
                println!("  {name:<8} {:.2} ms/frame", d.as_secs_f64() * 1e3 / n as f64);
            }
            stage_ms(&mut run.manifest.timing, &total, n);
            if let Some(o) = out {
                create_dir(o)?;
            }
            // throughput covers the pipeline only, not image loading
            run.finish_timed(n, wall, out.as_deref())
        }
    }
}

fn stage_ms(timing: &mut Timing, total: &StageTimings, n: usize) {
    let n = n.max(1) as f64;
    for (name, d) in [("cascade", total.cascade), ("detect", total.detect), ("vote", total.vote)] {
        timing.stages_ms.insert(name.into(), d.as_secs_f64() * 1e3 / n);
    }
}

/// Baseline and refined reports for the records that match dataset samples.
fn report_from_records(index: &DatasetIndex, records: &[PredictionRecord]) -> CliResult<Vec<crate::eval::EvalReport>> {
    let by_id: BTreeMap<&str, usize> = index.samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let (mut base, mut refined, mut truth, mut flags) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in records {
        let i = *by_id.get(r.id.as_str()).ok_or_else(|| {
            Failure::Runtime(Error::Data {
                sample: r.id.clone(),
                reason: "not in the dataset".into(),
            })
        })?;
        let s = &index.samples[i];
        base.push(to_pose(&r.baseline, &index.skeleton)?);
        refined.push(to_pose(&r.joints, &index.skeleton)?);
        truth.push(s.pose.clone());
        flags.push(s.stretched.clone());
    }
    Ok(vec![
        evaluate("baseline", &base, &truth, &flags)?,
        evaluate("refined", &refined, &truth, &flags)?,
    ])
}

fn write_reports(reports: &[crate::eval::EvalReport], out: &Path) -> CliResult<()> {
    write_json(reports, &out.join("report.json"))?;
    write_csv(reports, &out.join("report.csv"))?;
    let mut f = fs::File::create(out.join("report.txt")).map_err(|e| Error::io(out, e))?;
    f.write_all(format_table(reports).as_bytes()).map_err(|e| Error::io(out, e))?;
    Ok(())
}

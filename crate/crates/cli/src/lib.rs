//! Command implementations behind the `tio` binary.

pub mod bench;
pub mod checks;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use tio_core::eval::{contact_state_ap, full_state_map_with, per_scene, render_report, ApVariant};
use tio_core::io::{load_ground_truth, load_results, read_detections, synthesize_sequence, JsonlWriter, ResultRecord, SequenceManifest, SyntheticSceneSpec};
use tio_core::pipeline::{Frame, Pipeline, PipelineConfig};
use tio_core::siam::{DecodingHead, LearnedHead};

#[derive(Debug, Parser)]
#[command(name = "tio", version, about = "Track objects held by hands through video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the tracker over a sequence manifest.
    Track {
        manifest: Option<PathBuf>,
        /// Results file (one JSON record per frame).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pipeline configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Learned decoding head weights (HD1); the analytic head otherwise.
        #[arg(long)]
        head: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Score a results file against annotations (or another results file).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = tio_core::eval::DEFAULT_TAU)]
        tau: f64,
        /// Add a breakdown per scene tag.
        #[arg(long)]
        per_scene: bool,
        /// Use 11-point interpolated AP instead of all-point.
        #[arg(long)]
        eleven_point: bool,
    },
    /// Render a synthetic sequence from a JSON scene spec.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Time the depth-wise cross-correlation at tracking size.
    BenchXcorr {
        #[arg(long, default_value_t = 256)]
        channels: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
    },
    /// Run the oracle-backed self checks.
    Selftest,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Invariant(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Invariant(m) => f.write_str(m),
        }
    }
}

impl From<tio_core::Error> for Failure {
    fn from(e: tio_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn with_path<T>(path: &Path, r: tio_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Worker count from `TIO_THREADS`: unset means 1, 0 means automatic.
pub fn threads_from_env() -> Result<usize, Failure> {
    match std::env::var("TIO_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v.trim().parse().map_err(|_| Failure::Data(format!("TIO_THREADS must be a non-negative integer, got {v:?}"))),
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Track { manifest, out, config, head, print_config } => {
            let cfg = match &config {
                Some(p) => with_path(p, std::fs::read_to_string(p).map_err(Into::into).and_then(|t| PipelineConfig::from_toml(&t)))?,
                None => PipelineConfig::default(),
            };
            if print_config {
                write!(stdout, "{}", cfg.to_toml())?;
                return Ok(());
            }
            let manifest = manifest.ok_or_else(|| Failure::Usage("track needs a manifest".into()))?;
            let out = out.ok_or_else(|| Failure::Usage("track needs --out <results>".into()))?;
            let head = match &head {
                Some(p) => DecodingHead::Learned(with_path(p, File::open(p).map_err(Into::into).and_then(|f| LearnedHead::read_hd1(BufReader::new(f))))?),
                None => DecodingHead::Analytic,
            };
            let frames = track(&manifest, &out, cfg, head, threads_from_env()?)?;
            eprintln!("tracked {frames} frames -> {}", out.display());
            Ok(())
        }
        Command::Eval { pred, gt, tau, per_scene: scenes, eleven_point } => {
            let report = evaluate(&pred, &gt, tau, scenes, if eleven_point { ApVariant::ElevenPoint } else { ApVariant::AllPoint })?;
            write!(stdout, "{report}")?;
            Ok(())
        }
        Command::Synth { spec, out_dir } => {
            let text = std::fs::read_to_string(&spec)?;
            let parsed = with_path(&spec, SyntheticSceneSpec::from_json(&text))?;
            let seq = with_path(&spec, synthesize_sequence(&parsed))?;
            let m = seq.write_to_dir(&parsed, &out_dir)?;
            writeln!(stdout, "wrote {} frames to {}", m.frames, out_dir.display())?;
            Ok(())
        }
        Command::BenchXcorr { channels, iters } => {
            if channels == 0 || iters == 0 {
                return Err(Failure::Usage("--channels and --iters must be positive".into()));
            }
            writeln!(stdout, "{}", bench::bench_xcorr(channels, iters, 0).summary())?;
            Ok(())
        }
        Command::Selftest => {
            let checks = checks::all_checks();
            let mut failed = 0;
            for c in &checks {
                writeln!(stdout, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Failure::Invariant(format!("{failed} of {} self checks failed", checks.len())));
            }
            Ok(())
        }
    }
}

/// Stream a manifest's frames through the pipeline into a results file.
pub fn track(manifest: &Path, out: &Path, config: PipelineConfig, head: DecodingHead, threads: usize) -> Result<usize, Failure> {
    let m = with_path(manifest, SequenceManifest::load(manifest))?;
    let mut provider = m.provider()?;
    let mut pipeline = Pipeline::new(config, head, threads)?;
    let mut writer = JsonlWriter::new(BufWriter::new(File::create(out)?));
    let detections = read_detections(BufReader::new(File::open(&m.detections)?));
    let limit = m.frames as u64;
    let frames = detections.map(|d| {
        let d = d?;
        if d.frame >= limit {
            return Err(tio_core::Error::Sequencing(format!("frame {} beyond the manifest's {limit} frames", d.frame)));
        }
        Ok(Frame { index: d.frame, feature: provider.feature(d.frame)?, detections: d })
    });
    let n = with_path(&m.detections, pipeline.run_sequence(frames, |o| writer.write(&ResultRecord::from(&o.result))))?;
    writer.finish()?;
    Ok(n)
}

pub fn evaluate(pred: &Path, gt: &Path, tau: f64, scenes: bool, variant: ApVariant) -> Result<String, Failure> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Failure::Usage(format!("--tau {tau} must lie in (0, 1)")));
    }
    let preds: Vec<_> = with_path(pred, load_results(pred))?.iter().map(ResultRecord::to_prediction).collect();
    let gts = with_path(gt, load_ground_truth(gt))?;
    let report = full_state_map_with(&preds, &gts, tau, variant)?;
    let states = contact_state_ap(&preds, &gts, tau)?;
    let scene_reports = if scenes { Some(per_scene(&preds, &gts, tau)?) } else { None };
    Ok(render_report(&report, &states, scene_reports.as_ref()))
}

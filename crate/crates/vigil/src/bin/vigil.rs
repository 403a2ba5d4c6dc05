//! Command-line front end: `run`, `eval`, `sweep`, `bench`.
//!
//! Every flag can also be set through a `VIGIL_`-prefixed environment
//! variable (`--max-cos-distance` ↔ `VIGIL_MAX_COS_DISTANCE`). All
//! randomness flows from `--seed`; identical configuration yields
//! bytewise-identical logs.

use std::fs;
use std::io::{BufReader, Read};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vigil::alerting::{AlertSink, DatagramSink, FileSink};
use vigil::anomaly::AnomalyCode;
use vigil::appearance::EncoderSpec;
use vigil::association::AssociationConfig;
use vigil::evaluation::{bench_report, frame_auc, run_sweep, EvalRecord, SweepConfig, TimingModel};
use vigil::ingestion::{
    attach_descriptors, generate_scenario, parse_descriptors, parse_detections, parse_scenario,
    FrameBatch, GroundTruth,
};
use vigil::pipeline::{run_pipeline, PipelineConfig, RunOutput};

#[derive(Parser)]
#[command(
    name = "vigil",
    version,
    about = "Multi-object tracking and trajectory anomaly detection for fixed cameras"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process detections: track, detect anomalies, dispatch alerts.
    Run(RunArgs),
    /// Run the pipeline and score it against ground-truth labels.
    Eval(EvalArgs),
    /// Grid-sweep tracker parameters and report per-point AUC.
    Sweep(SweepArgs),
    /// Wall-clock the pipeline stages, or predict latency analytically.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Detection CSV (frame,id,x,y,w,h,confidence); `-` reads stdin.
    #[arg(long, env = "VIGIL_DETECTIONS")]
    detections: Option<String>,
    /// Descriptor sidecar CSV (frame,det_index,v0..v127); required with
    /// --detections.
    #[arg(long, env = "VIGIL_DESCRIPTORS")]
    descriptors: Option<PathBuf>,
    /// Synthetic scenario TOML; alternative to --detections.
    #[arg(long, env = "VIGIL_SCENARIO", conflicts_with = "detections")]
    scenario: Option<PathBuf>,
    /// Seed for scenario generation.
    #[arg(long, env = "VIGIL_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TuneArgs {
    /// Appearance gate: maximum cosine distance to a track's gallery.
    #[arg(long, env = "VIGIL_MAX_COS_DISTANCE", default_value_t = 0.9)]
    max_cos_distance: f64,
    /// IoU threshold for non-maximum suppression.
    #[arg(long, env = "VIGIL_NMS_OVERLAP", default_value_t = 0.3)]
    nms_overlap: f64,
    /// Feature encoder input size, HEIGHTxWIDTH.
    #[arg(long, env = "VIGIL_ENCODER_SIZE", default_value = "64x32")]
    encoder_size: String,
    /// Cost blend: weight of the motion term (0 = appearance only).
    #[arg(long, env = "VIGIL_MOTION_WEIGHT", default_value_t = 0.0)]
    motion_weight: f64,
    /// Mahalanobis gate on the motion term.
    #[arg(long, env = "VIGIL_MOTION_GATE", default_value_t = 9.4877)]
    motion_gate: f64,
    /// Frames a track may coast unmatched before deletion.
    #[arg(long, env = "VIGIL_MAX_AGE", default_value_t = 30)]
    max_age: u32,
    /// Consecutive hits before a track is confirmed.
    #[arg(long, env = "VIGIL_N_INIT", default_value_t = 3)]
    n_init: u32,
    /// Appearance gallery capacity per track.
    #[arg(long, env = "VIGIL_GALLERY_CAPACITY", default_value_t = 100)]
    gallery_capacity: usize,
    /// Station id stamped into alerts.
    #[arg(long, env = "VIGIL_NODE_ID", default_value_t = 1)]
    node_id: u16,
    /// Alert timestamp base (seconds); frame index is added.
    #[arg(long, env = "VIGIL_BASE_TIMESTAMP", default_value_t = 0)]
    base_timestamp: u32,
}

impl TuneArgs {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        // Validated up front even though file runs never encode pixels:
        // config errors must surface before frame 1.
        EncoderSpec::parse_size(&self.encoder_size)
            .with_context(|| format!("--encoder-size {}", self.encoder_size))?;
        Ok(PipelineConfig {
            association: AssociationConfig {
                motion_weight: self.motion_weight,
                motion_gate: self.motion_gate,
                max_cos_distance: self.max_cos_distance,
                max_age: self.max_age,
                n_init: self.n_init,
                gallery_capacity: self.gallery_capacity,
            },
            anomaly: Default::default(),
            nms_overlap: self.nms_overlap,
            node_id: self.node_id,
            base_timestamp: self.base_timestamp,
        })
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Write per-frame confirmed-track CSV here.
    #[arg(long, env = "VIGIL_TRACK_LOG")]
    track_log: Option<PathBuf>,
    /// Write the anomaly event TSV here.
    #[arg(long, env = "VIGIL_EVENT_LOG")]
    event_log: Option<PathBuf>,
    /// Append hex-encoded alert frames here.
    #[arg(long, env = "VIGIL_ALERT_LOG")]
    alert_log: Option<PathBuf>,
    /// Send alert frames as datagrams to this address.
    #[arg(long, env = "VIGIL_UDP")]
    udp: Option<String>,
}

impl OutputArgs {
    fn sinks(&self) -> Result<Vec<Box<dyn AlertSink>>> {
        let mut sinks: Vec<Box<dyn AlertSink>> = Vec::new();
        if let Some(path) = &self.alert_log {
            sinks.push(Box::new(
                FileSink::create(path).with_context(|| format!("--alert-log {path:?}"))?,
            ));
        }
        if let Some(target) = &self.udp {
            sinks.push(Box::new(DatagramSink::create(target)?));
        }
        Ok(sinks)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tune: TuneArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tune: TuneArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Ground-truth labels, one 0/1 per line; defaults to scenario truth.
    #[arg(long, env = "VIGIL_LABELS")]
    labels: Option<PathBuf>,
    /// Also print one AUC line per anomaly class.
    #[arg(long)]
    per_class: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tune: TuneArgs,
    /// Sweep grid TOML.
    #[arg(long, env = "VIGIL_GRID")]
    grid: PathBuf,
    /// Write the result table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tune: TuneArgs,
    /// Print the analytic latency prediction instead of measuring.
    #[arg(long)]
    predict: bool,
    /// Detection count for --predict.
    #[arg(long, default_value_t = 8)]
    dk: u64,
    /// Per-frame object detection cost, ms.
    #[arg(long, env = "VIGIL_OD_MS", default_value_t = 92.0)]
    od_ms: f64,
    /// Per-detection feature encoding cost, ms.
    #[arg(long, env = "VIGIL_FE_MS", default_value_t = 38.0)]
    fe_ms: f64,
    /// Per-frame trajectory association cost, ms.
    #[arg(long, env = "VIGIL_TA_MS", default_value_t = 4.0)]
    ta_ms: f64,
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

/// Loads frames from whichever input was configured; scenario inputs also
/// return their ground truth.
fn load_frames(input: &InputArgs) -> Result<(Vec<FrameBatch>, Option<GroundTruth>)> {
    if let Some(path) = &input.scenario {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading scenario {path:?}"))?;
        let spec = parse_scenario(&text)?;
        let run = generate_scenario(&spec, input.seed)?;
        return Ok((run.frames, Some(run.truth)));
    }
    let Some(source) = &input.detections else {
        bail!("provide --detections (or `-` for stdin) or --scenario");
    };
    let mut frames = if source == "-" {
        let mut text = String::new();
        std::io::stdin().lock().read_to_string(&mut text)?;
        parse_detections(text.as_bytes())?
    } else {
        let file =
            fs::File::open(source).with_context(|| format!("opening detections {source:?}"))?;
        parse_detections(BufReader::new(file))?
    };
    let Some(sidecar) = &input.descriptors else {
        bail!("file runs need --descriptors (see `vigil run --help`)");
    };
    let file =
        fs::File::open(sidecar).with_context(|| format!("opening descriptors {sidecar:?}"))?;
    let map = parse_descriptors(BufReader::new(file))?;
    attach_descriptors(&mut frames, &map)?;
    Ok((frames, None))
}

fn execute(
    input: &InputArgs,
    tune: &TuneArgs,
    output: &OutputArgs,
) -> Result<(RunOutput, Option<GroundTruth>)> {
    let cfg = tune.pipeline_config()?;
    let (frames, truth) = load_frames(input)?;
    let mut sinks = output.sinks()?;
    let out = run_pipeline(&cfg, &frames, &mut sinks)?;
    if let Some(path) = &output.track_log {
        fs::write(path, &out.track_log)?;
    }
    if let Some(path) = &output.event_log {
        fs::write(path, &out.event_log)?;
    }
    Ok((out, truth))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (out, _) = execute(&args.input, &args.tune, &args.output)?;
    let failed_deliveries = out
        .delivery
        .iter()
        .flat_map(|r| &r.outcomes)
        .filter(|(_, r)| r.is_err())
        .count();
    println!(
        "frames: {}  tracks-logged: {}  events: {}  alerts: {}  failed-deliveries: {}",
        out.frames,
        out.track_log.lines().count(),
        out.events.len(),
        out.alerts.len(),
        failed_deliveries
    );
    Ok(())
}

fn read_labels(path: &PathBuf) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading labels {path:?}"))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => bail!("labels line {}: expected 0 or 1, found {other:?}", i + 1),
        })
        .collect()
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (out, truth) = execute(&args.input, &args.tune, &args.output)?;
    let labels = match (&args.labels, &truth) {
        (Some(path), _) => read_labels(path)?,
        (None, Some(truth)) => truth.pooled(),
        (None, None) => bail!("--labels is required when the input is a detection file"),
    };
    if labels.len() != out.scores.len() {
        bail!(
            "label count {} does not match scored frame count {}",
            labels.len(),
            out.scores.len()
        );
    }
    let auc = frame_auc(&EvalRecord::new(out.scores.clone(), labels)?)?;
    println!("{auc:.4}");

    if args.per_class {
        let Some(truth) = &truth else {
            bail!("--per-class needs scenario ground truth");
        };
        for (i, code) in AnomalyCode::ALL.iter().enumerate() {
            let labels = truth.class(*code);
            let record = EvalRecord::new(out.class_scores[i].clone(), labels)?;
            match frame_auc(&record) {
                Ok(auc) => println!("{} {auc:.4}", code.label()),
                Err(_) => println!("{} n/a", code.label()),
            }
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let Some(path) = &args.input.scenario else {
        bail!("sweep needs --scenario (each grid point re-runs the scenario)");
    };
    let grid_text =
        fs::read_to_string(&args.grid).with_context(|| format!("reading grid {:?}", args.grid))?;
    let sweep = SweepConfig::parse(&grid_text).context("parsing sweep grid")?;
    let spec = parse_scenario(&fs::read_to_string(path)?)?;
    let base = args.tune.pipeline_config()?;
    let table = run_sweep(&spec, args.input.seed, &sweep, &base)?;
    let tsv = table.to_tsv();
    match &args.out {
        Some(path) => fs::write(path, tsv)?,
        None => print!("{tsv}"),
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.predict {
        let model = TimingModel::new(args.od_ms, args.fe_ms, args.ta_ms)?;
        let p = model.predict(args.dk);
        println!(
            "tau = {} ms ({:.2} fps) at {} detections",
            p.tau_ms, p.fps, args.dk
        );
        return Ok(());
    }
    let cfg = args.tune.pipeline_config()?;
    let (frames, _) = load_frames(&args.input)?;
    let out = run_pipeline(&cfg, &frames, &mut [])?;
    println!("{}", bench_report(out.frames, &out.timings));
    Ok(())
}

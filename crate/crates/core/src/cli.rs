//! `pta` command-line interface: `gen`, `run`, `sweep` and `bench`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::CliConfig;
use crate::error::{Error, Result};
use crate::harness::{self, BenchResult, MethodKind, RunReport, Spread, SweepParam, SweepRow, MIN_BENCH_SAMPLES};
use crate::io::{self, EmbeddingKind};
use crate::pta::{AnchorMode, DecayRule, Scoring, UpdateOrder};
use crate::synthetic::{self, LabelDistribution, ShiftKind, ShiftSpec};

#[derive(Debug, Parser)]
#[command(name = "pta", version, about = "Streaming prototype-based test-time adaptation over embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate seeded synthetic anchors and a shifted stream as PTAE files.
    Gen(GenArgs),
    /// Run methods over a stream and write records, report and curves.
    Run(RunArgs),
    /// Sweep h or w for PTA and write a CSV table.
    Sweep(SweepArgs),
    /// Measure per-method throughput on a throwaway synthetic stream.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Stream length.
    #[arg(long)]
    pub n: Option<usize>,
    /// none, rotate, bias or mix.
    #[arg(long)]
    pub shift: Option<ShiftKind>,
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Per-coordinate noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Seed for anchors and shift.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for labels and noise.
    #[arg(long)]
    pub order_seed: Option<u64>,
    /// uniform or zipf:<s>.
    #[arg(long)]
    pub labels: Option<LabelDistribution>,
}

impl SyntheticArgs {
    fn apply(&self, spec: &mut ShiftSpec) {
        set(&mut spec.class_count, self.classes);
        set(&mut spec.dim, self.dim);
        set(&mut spec.stream_length, self.n);
        set(&mut spec.shift_kind, self.shift);
        set(&mut spec.shift_magnitude, self.magnitude);
        set(&mut spec.noise_sigma, self.noise);
        set(&mut spec.anchor_seed, self.seed);
        set(&mut spec.order_seed, self.order_seed);
        set(&mut spec.label_distribution, self.labels);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// PTAE anchors file (requires --stream).
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    /// PTAE stream file (requires --anchors).
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// Keep stream rows as stored instead of L2-normalizing them.
    #[arg(long)]
    pub no_normalize: bool,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub w: Option<f64>,
    /// Softmax temperature for zero-shot and prototype scores.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub update_order: Option<UpdateOrder>,
    #[arg(long)]
    pub anchor_mode: Option<AnchorMode>,
    #[arg(long)]
    pub decay: Option<DecayRule>,
    #[arg(long)]
    pub scoring: Option<Scoring>,
    /// Cache slots per class.
    #[arg(long)]
    pub capacity: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub sharpness: Option<f64>,
    /// Samples skipped at the start of the online curve.
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub cold_start_window: Option<usize>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Output directory (default: $PTA_OUTPUT_DIR, then ./pta-output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    /// File values first, then every flag that was given.
    pub fn resolve(&self) -> Result<CliConfig> {
        let mut cfg = match &self.config {
            Some(path) => CliConfig::load(path)?,
            None => CliConfig::default(),
        };
        if self.anchors.is_some() || self.stream.is_some() {
            cfg.data.anchors = self.anchors.clone();
            cfg.data.stream = self.stream.clone();
        }
        if self.no_normalize {
            cfg.data.normalize_on_ingest = false;
        }
        self.synthetic.apply(&mut cfg.synthetic);
        set(&mut cfg.pta.h, self.h);
        set(&mut cfg.pta.w, self.w);
        set(&mut cfg.pta.tau, self.tau);
        set(&mut cfg.pta.update_order, self.update_order);
        set(&mut cfg.pta.anchor_mode, self.anchor_mode);
        set(&mut cfg.pta.decay, self.decay);
        set(&mut cfg.pta.scoring, self.scoring);
        set(&mut cfg.cache.capacity_per_class, self.capacity);
        set(&mut cfg.cache.alpha, self.alpha);
        set(&mut cfg.cache.sharpness, self.sharpness);
        set(&mut cfg.run.warmup_skip, self.warmup);
        set(&mut cfg.run.checkpoint_every, self.checkpoint_every);
        set(&mut cfg.run.cold_start_window, self.cold_start_window);
        if self.shuffle_seed.is_some() {
            cfg.run.shuffle_seed = self.shuffle_seed;
        }
        if self.run_id.is_some() {
            cfg.run.run_id = self.run_id.clone();
        }
        if self.out.is_some() {
            cfg.run.output_dir = self.out.clone();
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Comma-separated: zero-shot, pta, cache.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<MethodKind>>,
    /// Extra seeded shuffles for order-robustness statistics.
    #[arg(long)]
    pub order_shuffles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    #[arg(long)]
    pub param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Maximum concurrent sweep cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    pub classes: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "zero-shot,pta,cache")]
    pub methods: Vec<MethodKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Bench(args) => cmd_bench(&args),
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct GenManifest<'a> {
    spec: &'a ShiftSpec,
    max_pairwise_cosine: f64,
    separated: bool,
    anchors: &'a Path,
    stream: &'a Path,
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    args.synthetic.apply(&mut cfg.synthetic);
    if args.out.is_some() {
        cfg.run.output_dir = args.out.clone();
    }
    let spec = &cfg.synthetic;
    let (draw, stream) = synthetic::generate(spec)?;
    let dir = cfg.output_dir();
    prepare_dir(&dir)?;
    let anchors_path = dir.join("anchors.ptae");
    let stream_path = dir.join("stream.ptae");
    io::write_embeddings(&anchors_path, EmbeddingKind::Anchors, &draw.matrix, None, true)?;
    io::write_embeddings(&stream_path, EmbeddingKind::Stream, stream.features(), Some(stream.labels()), true)?;
    write_json(
        &dir.join("gen.json"),
        &GenManifest {
            spec,
            max_pairwise_cosine: draw.max_pairwise_cosine,
            separated: draw.separated,
            anchors: &anchors_path,
            stream: &stream_path,
        },
    )?;
    println!(
        "generated C={} d={} N={} shift={} magnitude={} noise={} seed={} order-seed={}",
        spec.class_count,
        spec.dim,
        spec.stream_length,
        spec.shift_kind,
        spec.shift_magnitude,
        spec.noise_sigma,
        spec.anchor_seed,
        spec.order_seed
    );
    println!("max anchor cosine {:.4}", draw.max_pairwise_cosine);
    println!("wrote {} and {}", anchors_path.display(), stream_path.display());
    Ok(())
}

#[derive(Serialize)]
struct RunFile<'a> {
    run_id: &'a str,
    config: &'a CliConfig,
    report: &'a RunReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    order_robustness: Vec<(String, Spread)>,
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(m) = &args.methods {
        cfg.run.methods = m.clone();
    }
    set(&mut cfg.run.order_shuffles, args.order_shuffles);
    cfg.validate()?;
    let (anchors, stream) = cfg.resolve_data()?;
    let mut methods = cfg
        .run
        .methods
        .iter()
        .map(|m| m.build(&anchors, &cfg.pta, &cfg.cache))
        .collect::<Result<Vec<_>>>()?;
    let output = harness::run_stream(&stream, &mut methods, &cfg.run_options())?;

    let mut order_robustness = Vec::new();
    if cfg.run.order_shuffles > 0 {
        let seed = cfg.run.shuffle_seed.unwrap_or(0);
        for m in methods.iter_mut() {
            let spread = harness::order_robustness(m.as_mut(), &stream, cfg.run.order_shuffles, seed)?;
            order_robustness.push((m.name().to_string(), spread));
        }
    }

    let run_id = cfg.run_id();
    let dir = cfg.output_dir();
    prepare_dir(&dir)?;
    io::append_results(&dir.join("records.jsonl"), &io::result_records(&run_id, &output))?;
    write_json(
        &dir.join("report.json"),
        &RunFile {
            run_id: &run_id,
            config: &cfg,
            report: &output.report,
            order_robustness: order_robustness.clone(),
        },
    )?;
    io::write_curve_csv(&dir.join("online_accuracy.csv"), &output.report)?;
    write_predictions(&dir.join("predictions.csv"), &output)?;

    println!("run {run_id}: {} samples, {} classes", stream.len(), anchors.class_count());
    println!("{:<10} {:>9} {:>11} {:>12}", "method", "final %", "cold-start %", "samples/s");
    for m in &output.report.methods {
        println!(
            "{:<10} {:>9.2} {:>11.2} {:>12.0}",
            m.method, m.final_accuracy, m.cold_start_accuracy, m.throughput
        );
    }
    for (name, s) in &order_robustness {
        println!("{name}: order std {:.3} over {} shuffles (mean {:.2})", s.std, s.runs, s.mean);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

/// Timing-free predictions, identical across reruns of the same config.
fn write_predictions(path: &Path, output: &harness::RunOutput) -> Result<()> {
    let mut text = String::from("position,truth");
    for m in &output.report.methods {
        text.push(',');
        text.push_str(&m.method);
    }
    text.push('\n');
    for rec in &output.records {
        text.push_str(&format!("{},{}", rec.index, rec.true_label));
        for o in &rec.outcomes {
            text.push_str(&format!(",{}", o.prediction));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct SweepFile<'a> {
    config: &'a CliConfig,
    param: SweepParam,
    jobs: usize,
    rows: &'a [SweepRow],
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    cfg.validate()?;
    if args.jobs == 0 {
        return Err(Error::config("--jobs must be at least 1"));
    }
    let (anchors, stream) = cfg.resolve_data()?;
    let rows = harness::sweep(args.param, &args.values, &cfg.pta, &anchors, &stream, &cfg.run_options(), args.jobs)?;

    let dir = cfg.output_dir();
    prepare_dir(&dir)?;
    let mut csv = String::from(SweepRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    let csv_path = dir.join("sweep.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    write_json(
        &dir.join("sweep.json"),
        &SweepFile {
            config: &cfg,
            param: args.param,
            jobs: args.jobs,
            rows: &rows,
        },
    )?;

    println!("{:>10} {:>9} {:>9}", args.param, "final %", "early %");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    for r in &rows {
        print!("{:>10} {:>9} {:>9}", r.value, fmt(r.final_accuracy), fmt(r.early_accuracy));
        if let Some(w) = &r.warning {
            print!("  ({w})");
        }
        println!();
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchFile<'a> {
    spec: &'a ShiftSpec,
    machine: harness::MachineInfo,
    results: &'a [BenchResult],
    ratio_to_zero_shot: Vec<(String, f64)>,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.n < MIN_BENCH_SAMPLES {
        return Err(Error::validation(format!(
            "benchmark needs at least {MIN_BENCH_SAMPLES} samples, got {}",
            args.n
        )));
    }
    if args.methods.is_empty() {
        return Err(Error::config("no methods selected"));
    }
    let spec = ShiftSpec {
        class_count: args.classes,
        dim: args.dim,
        stream_length: args.n,
        anchor_seed: args.seed,
        order_seed: args.seed,
        shift_kind: ShiftKind::RotateSubspace,
        shift_magnitude: 0.3,
        ..ShiftSpec::default()
    };
    let (draw, stream) = synthetic::generate(&spec)?;
    let cfg = CliConfig::default();
    let anchors = Arc::new(draw.into_text_anchors(cfg.pta.tau)?);
    let mut results = Vec::new();
    for m in &args.methods {
        let mut adapter = m.build(&anchors, &cfg.pta, &cfg.cache)?;
        results.push(harness::bench_throughput(adapter.as_mut(), &stream)?);
    }
    let zero_shot = results.iter().find(|r| r.method == MethodKind::ZeroShot.to_string()).map(|r| r.throughput);
    let ratio_to_zero_shot: Vec<(String, f64)> = match zero_shot {
        Some(z) => results.iter().map(|r| (r.method.clone(), r.throughput / z)).collect(),
        None => Vec::new(),
    };

    println!("bench C={} d={} N={}", args.classes, args.dim, args.n);
    println!("{:<10} {:>12} {:>10} {:>10} {:>9}", "method", "samples/s", "ns@10%", "ns@90%", "ratio");
    for r in &results {
        let ratio = ratio_to_zero_shot
            .iter()
            .find(|(m, _)| *m == r.method)
            .map_or("-".to_string(), |(_, x)| format!("{x:.3}"));
        println!(
            "{:<10} {:>12.0} {:>10.0} {:>10.0} {:>9}",
            r.method,
            r.throughput,
            r.cost_at(0.1).unwrap_or(f64::NAN),
            r.cost_at(0.9).unwrap_or(f64::NAN),
            ratio
        );
    }
    if let Some(dir) = args.out.clone().or_else(|| std::env::var_os(crate::config::OUTPUT_DIR_ENV).map(PathBuf::from)) {
        prepare_dir(&dir)?;
        write_json(
            &dir.join("bench.json"),
            &BenchFile {
                spec: &spec,
                machine: harness::MachineInfo::current(),
                results: &results,
                ratio_to_zero_shot,
            },
        )?;
        println!("wrote {}", dir.join("bench.json").display());
    }
    Ok(())
}

/// 0 on success, 1 for invalid input or configuration, 2 for I/O failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

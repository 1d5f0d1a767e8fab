//! Online evaluation: runs adapters over a stream, times every `observe`,
//! and derives accuracy curves, order-robustness statistics, parameter
//! sweeps and throughput curves.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, ZeroShot};
use crate::cache::{CacheAdapter, CacheConfig};
use crate::error::{Error, Result};
use crate::pta::{DecayRule, Pta, PtaConfig};
use crate::stream::Stream;
use crate::zero_shot::TextAnchors;

pub const DEFAULT_WARMUP_SKIP: usize = 100;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    ZeroShot,
    Pta,
    Cache,
}

impl MethodKind {
    pub const ALL: [MethodKind; 3] = [MethodKind::ZeroShot, MethodKind::Pta, MethodKind::Cache];

    pub fn build(
        self,
        anchors: &Arc<TextAnchors>,
        pta: &PtaConfig,
        cache: &CacheConfig,
    ) -> Result<Box<dyn Adapter>> {
        Ok(match self {
            MethodKind::ZeroShot => Box::new(ZeroShot::new(anchors.clone())),
            MethodKind::Pta => Box::new(Pta::new(anchors.clone(), *pta)?),
            MethodKind::Cache => Box::new(CacheAdapter::new(anchors.clone(), *cache)?),
        })
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::ZeroShot => "zero-shot",
            MethodKind::Pta => "pta",
            MethodKind::Cache => "cache",
        })
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-shot" | "zeroshot" | "clip" => Ok(MethodKind::ZeroShot),
            "pta" => Ok(MethodKind::Pta),
            "cache" => Ok(MethodKind::Cache),
            other => Err(Error::config(format!(
                "unknown method '{other}' (expected zero-shot, pta or cache)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Samples excluded from the online curve.
    pub warmup_skip: usize,
    pub checkpoint_every: usize,
    /// Length of the cold-start window scored from the first sample.
    pub cold_start_window: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            warmup_skip: DEFAULT_WARMUP_SKIP,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            cold_start_window: DEFAULT_WARMUP_SKIP,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint spacing must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub prediction: usize,
    pub correct: bool,
    pub wall_nanos: u64,
}

/// Everything that happened at one stream position, one outcome per method
/// in report order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub index: usize,
    pub true_label: usize,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub checkpoint_n: usize,
    pub online_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub config: String,
    pub samples: usize,
    pub correct: usize,
    /// Percent over every sample.
    pub final_accuracy: f64,
    /// Percent over samples `warmup_skip + 1 ..= n`.
    pub online_curve: Vec<CurvePoint>,
    /// Percent over the first `cold_start_window` samples.
    pub cold_start_accuracy: f64,
    pub mean_latency_nanos: f64,
    pub median_latency_nanos: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
}

impl MachineInfo {
    pub fn current() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        });
        MachineInfo {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stream_length: usize,
    pub options: RunOptions,
    pub methods: Vec<MethodReport>,
    pub machine: MachineInfo,
}

impl RunReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub records: Vec<StreamRecord>,
}

/// Per-sample predictions and timings for one method.
#[derive(Debug, Clone)]
pub struct Trace {
    pub predictions: Vec<usize>,
    pub wall_nanos: Vec<u64>,
}

fn check_compatible(stream: &Stream, methods: &[Box<dyn Adapter>]) -> Result<()> {
    for m in methods {
        if m.dim() != stream.dim() {
            return Err(Error::validation(format!(
                "method {} expects dimension {} but the stream has {}",
                m.name(),
                m.dim(),
                stream.dim()
            )));
        }
        if let Some(first) = methods.first() {
            if m.class_count() != first.class_count() {
                return Err(Error::validation(format!(
                    "method {} has {} classes but {} has {}",
                    m.name(),
                    m.class_count(),
                    first.name(),
                    first.class_count()
                )));
            }
        }
        stream.check_labels(m.class_count())?;
    }
    Ok(())
}

/// Feeds the stream through one adapter, timing only `observe`.
pub fn trace(method: &mut dyn Adapter, stream: &Stream) -> Result<Trace> {
    let mut predictions = Vec::with_capacity(stream.len());
    let mut wall_nanos = Vec::with_capacity(stream.len());
    for (f, _) in stream.iter() {
        let start = Instant::now();
        let class = method.observe(f)?.class;
        let elapsed = start.elapsed();
        predictions.push(class);
        wall_nanos.push(elapsed.as_nanos() as u64);
    }
    Ok(Trace {
        predictions,
        wall_nanos,
    })
}

/// Percent correct over `predictions[from..to]`; 0 for an empty range.
pub fn window_accuracy(predictions: &[usize], labels: &[usize], from: usize, to: usize) -> f64 {
    let to = to.min(predictions.len());
    if from >= to {
        return 0.0;
    }
    let correct = (from..to).filter(|&i| predictions[i] == labels[i]).count();
    100.0 * correct as f64 / (to - from) as f64
}

/// Checkpoints at multiples of `every` past the warm-up, plus the final
/// sample.
pub fn online_curve(predictions: &[usize], labels: &[usize], options: &RunOptions) -> Vec<CurvePoint> {
    let n = predictions.len();
    let k = options.warmup_skip;
    let mut points = Vec::new();
    let mut cp = options.checkpoint_every;
    while cp <= n {
        if cp > k {
            points.push(CurvePoint {
                checkpoint_n: cp,
                online_accuracy: window_accuracy(predictions, labels, k, cp),
            });
        }
        cp += options.checkpoint_every;
    }
    if n > k && points.last().is_none_or(|p| p.checkpoint_n != n) {
        points.push(CurvePoint {
            checkpoint_n: n,
            online_accuracy: window_accuracy(predictions, labels, k, n),
        });
    }
    points
}

fn median(values: &mut [u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable();
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        (values[mid - 1] as f64 + values[mid] as f64) / 2.0
    } else {
        values[mid] as f64
    }
}

fn method_report(method: &dyn Adapter, trace: &Trace, labels: &[usize], options: &RunOptions) -> MethodReport {
    let n = labels.len();
    let correct = trace.predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    let total: u64 = trace.wall_nanos.iter().sum();
    let mean = if n == 0 { 0.0 } else { total as f64 / n as f64 };
    MethodReport {
        method: method.name().to_string(),
        config: method.describe(),
        samples: n,
        correct,
        final_accuracy: if n == 0 { 0.0 } else { 100.0 * correct as f64 / n as f64 },
        online_curve: online_curve(&trace.predictions, labels, options),
        cold_start_accuracy: window_accuracy(&trace.predictions, labels, 0, options.cold_start_window),
        mean_latency_nanos: mean,
        median_latency_nanos: median(&mut trace.wall_nanos.clone()),
        throughput: if total == 0 { 0.0 } else { n as f64 / (total as f64 * 1e-9) },
    }
}

/// Runs every method over the same sample order and assembles the report
/// and per-sample records. Compatibility is checked before any sample is
/// consumed.
pub fn run_stream(stream: &Stream, methods: &mut [Box<dyn Adapter>], options: &RunOptions) -> Result<RunOutput> {
    options.validate()?;
    check_compatible(stream, methods)?;
    let labels = stream.labels();
    let mut traces = Vec::with_capacity(methods.len());
    let mut reports = Vec::with_capacity(methods.len());
    for m in methods.iter_mut() {
        let t = trace(m.as_mut(), stream)?;
        reports.push(method_report(m.as_ref(), &t, labels, options));
        traces.push(t);
    }
    let records = (0..stream.len())
        .map(|i| StreamRecord {
            index: i,
            true_label: labels[i],
            outcomes: traces
                .iter()
                .map(|t| Outcome {
                    prediction: t.predictions[i],
                    correct: t.predictions[i] == labels[i],
                    wall_nanos: t.wall_nanos[i],
                })
                .collect(),
        })
        .collect();
    Ok(RunOutput {
        report: RunReport {
            stream_length: stream.len(),
            options: *options,
            methods: reports,
            machine: MachineInfo::current(),
        },
        records,
    })
}

/// Percent final accuracy of one fresh run.
pub fn final_accuracy(method: &mut dyn Adapter, stream: &Stream) -> Result<f64> {
    method.reset();
    let t = trace(method, stream)?;
    Ok(window_accuracy(&t.predictions, stream.labels(), 0, stream.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub runs: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Spread { mean, std, runs: n }
    }
}

/// Final accuracy over explicit sample orders, resetting the method
/// before each run.
pub fn order_robustness_with_orders(method: &mut dyn Adapter, stream: &Stream, orders: &[Vec<usize>]) -> Result<Spread> {
    if orders.len() < 2 {
        return Err(Error::validation("order robustness needs at least 2 orders"));
    }
    let mut accs = Vec::with_capacity(orders.len());
    for order in orders {
        let shuffled = stream.reordered(order)?;
        accs.push(final_accuracy(method, &shuffled)?);
    }
    Ok(Spread::of(&accs))
}

/// `shuffles` seeded permutations of the stream; per-run seeds are drawn
/// from ChaCha8 seeded with `seed`.
pub fn order_robustness(method: &mut dyn Adapter, stream: &Stream, shuffles: usize, seed: u64) -> Result<Spread> {
    if shuffles < 2 {
        return Err(Error::validation("order robustness needs at least 2 shuffles"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accs = Vec::with_capacity(shuffles);
    for _ in 0..shuffles {
        let shuffled = stream.shuffled(rng.random());
        accs.push(final_accuracy(method, &shuffled)?);
    }
    Ok(Spread::of(&accs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    H,
    W,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::H => "h",
            SweepParam::W => "w",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(SweepParam::H),
            "w" => Ok(SweepParam::W),
            other => Err(Error::config(format!("unknown sweep parameter '{other}' (expected h or w)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    /// Percent over the whole stream; `None` when the value was skipped.
    pub final_accuracy: Option<f64>,
    /// Percent over the first `cold_start_window` samples.
    pub early_accuracy: Option<f64>,
    pub warning: Option<String>,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "param,value,final_accuracy,early_accuracy,warning";

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.param,
            self.value,
            fmt(self.final_accuracy),
            fmt(self.early_accuracy),
            self.warning.as_deref().unwrap_or("").replace(',', ";")
        )
    }
}

/// One fresh PTA run per value. Invalid values produce a warning row.
/// Up to `jobs` cells run concurrently; rows keep the order of `values`.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    base: &PtaConfig,
    anchors: &Arc<TextAnchors>,
    stream: &Stream,
    options: &RunOptions,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::validation("sweep needs at least one value"));
    }
    let run_cell = |value: f64| -> Result<SweepRow> {
        let mut cfg = *base;
        match param {
            SweepParam::H => cfg.h = value,
            SweepParam::W => cfg.w = value,
        }
        if let Err(e) = cfg.validate() {
            return Ok(SweepRow {
                param,
                value,
                final_accuracy: None,
                early_accuracy: None,
                warning: Some(format!("skipped: {e}")),
            });
        }
        let mut pta = Pta::new(anchors.clone(), cfg)?;
        let t = trace(&mut pta, stream)?;
        Ok(SweepRow {
            param,
            value,
            final_accuracy: Some(window_accuracy(&t.predictions, stream.labels(), 0, stream.len())),
            early_accuracy: Some(window_accuracy(&t.predictions, stream.labels(), 0, options.cold_start_window)),
            warning: None,
        })
    };

    let jobs = jobs.clamp(1, values.len());
    if jobs == 1 {
        return values.iter().map(|&v| run_cell(v)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SweepRow>>>> = Mutex::new((0..values.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= values.len() {
                    break;
                }
                let row = run_cell(values[i]);
                slots.lock().expect("sweep slot lock")[i] = Some(row);
            });
        }
    });
    slots
        .into_inner()
        .expect("sweep slot lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    /// Fraction of the stream, e.g. 0.1 for the sample at N/10.
    pub position: f64,
    pub median_nanos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub method: String,
    pub samples: usize,
    /// Samples per second after the first 10% of the stream.
    pub throughput: f64,
    /// Median per-sample cost around 10%, 20%, ..., 90% of the stream.
    pub cost_curve: Vec<CostPoint>,
}

impl BenchResult {
    pub fn cost_at(&self, position: f64) -> Option<f64> {
        self.cost_curve
            .iter()
            .find(|p| (p.position - position).abs() < 1e-9)
            .map(|p| p.median_nanos)
    }
}

/// Median of the per-sample times in a window of width N/20 centred on
/// `position * N`.
pub fn cost_at_position(wall_nanos: &[u64], position: f64) -> f64 {
    let n = wall_nanos.len();
    let half = (n / 40).max(1);
    let centre = ((position * n as f64) as usize).min(n.saturating_sub(1));
    let lo = centre.saturating_sub(half);
    let hi = (centre + half).min(n);
    median(&mut wall_nanos[lo..hi].to_vec())
}

pub const MIN_BENCH_SAMPLES: usize = 100;

/// Times one method over the stream from a fresh state.
pub fn bench_throughput(method: &mut dyn Adapter, stream: &Stream) -> Result<BenchResult> {
    if stream.len() < MIN_BENCH_SAMPLES {
        return Err(Error::validation(format!(
            "benchmark needs at least {MIN_BENCH_SAMPLES} samples, got {}",
            stream.len()
        )));
    }
    method.reset();
    let t = trace(method, stream)?;
    let warm = stream.len() / 10;
    let steady = &t.wall_nanos[warm..];
    let total: u64 = steady.iter().sum();
    let throughput = steady.len() as f64 / (total.max(1) as f64 * 1e-9);
    let cost_curve = (1..10)
        .map(|i| {
            let position = i as f64 / 10.0;
            CostPoint {
                position,
                median_nanos: cost_at_position(&t.wall_nanos, position),
            }
        })
        .collect();
    Ok(BenchResult {
        method: method.name().to_string(),
        samples: stream.len(),
        throughput,
        cost_curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayAblation {
    /// Percent final accuracy with `1 - exp(-s/h)`.
    pub adaptive_accuracy: f64,
    /// Percent final accuracy with the raw confidence as decay.
    pub raw_accuracy: f64,
}

/// Runs PTA twice over the stream, once per decay rule.
pub fn beta_vs_raw_s_ablation(anchors: &Arc<TextAnchors>, stream: &Stream, config: &PtaConfig) -> Result<DecayAblation> {
    let run = |decay| -> Result<f64> {
        let mut pta = Pta::new(anchors.clone(), PtaConfig { decay, ..*config })?;
        final_accuracy(&mut pta, stream)
    };
    Ok(DecayAblation {
        adaptive_accuracy: run(DecayRule::Adaptive)?,
        raw_accuracy: run(DecayRule::RawConfidence)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::Observation;
    use crate::synthetic::{generate, ShiftSpec};
    use crate::vector::Matrix;

    /// Replays a fixed label sequence offset by `shift` (mod C).
    struct Scripted {
        labels: Vec<usize>,
        classes: usize,
        dim: usize,
        shift: usize,
        pos: usize,
        scores: Vec<f64>,
    }

    impl Scripted {
        fn new(stream: &Stream, classes: usize, shift: usize) -> Self {
            Scripted {
                labels: stream.labels().to_vec(),
                classes,
                dim: stream.dim(),
                shift,
                pos: 0,
                scores: vec![0.0; classes],
            }
        }
    }

    impl Adapter for Scripted {
        fn name(&self) -> &str {
            if self.shift == 0 { "oracle" } else { "adversary" }
        }
        fn describe(&self) -> String {
            format!("shift={}", self.shift)
        }
        fn class_count(&self) -> usize {
            self.classes
        }
        fn dim(&self) -> usize {
            self.dim
        }
        fn observe(&mut self, _f: &[f64]) -> Result<Observation<'_>> {
            let class = (self.labels[self.pos] + self.shift) % self.classes;
            self.pos += 1;
            Ok(Observation { class, scores: &self.scores })
        }
        fn reset(&mut self) {
            self.pos = 0;
        }
    }

    fn small_stream() -> (Arc<TextAnchors>, Stream) {
        let spec = ShiftSpec { class_count: 5, dim: 32, stream_length: 400, noise_sigma: 0.1, anchor_seed: 3, order_seed: 4, ..Default::default() };
        let (a, s) = generate(&spec).unwrap();
        (Arc::new(a.into_text_anchors(0.01).unwrap()), s)
    }

    #[test]
    fn scripted_adapters_bound_accuracy() {
        let (_, stream) = small_stream();
        let mut methods: Vec<Box<dyn Adapter>> =
            vec![Box::new(Scripted::new(&stream, 5, 0)), Box::new(Scripted::new(&stream, 5, 1))];
        let out = run_stream(&stream, &mut methods, &RunOptions::default()).unwrap();
        assert_eq!(out.report.methods[0].final_accuracy, 100.0);
        assert_eq!(out.report.methods[1].final_accuracy, 0.0);
        assert_eq!(out.records.len(), 400);
        assert!(out.records.windows(2).all(|w| w[0].index < w[1].index));
    }

    #[test]
    fn curve_skips_warmup() {
        let preds = vec![0, 0, 1, 1, 1, 1];
        let labels = vec![1, 1, 1, 1, 1, 1];
        let opts = RunOptions { warmup_skip: 2, checkpoint_every: 2, cold_start_window: 2 };
        let curve = online_curve(&preds, &labels, &opts);
        assert_eq!(curve.iter().map(|p| p.checkpoint_n).collect::<Vec<_>>(), vec![4, 6]);
        assert!(curve.iter().all(|p| p.online_accuracy == 100.0));
        let curve = online_curve(&preds[..5], &labels[..5], &opts);
        assert_eq!(curve.last().unwrap().checkpoint_n, 5);
    }

    #[test]
    fn final_accuracy_matches_records() {
        let (anchors, stream) = small_stream();
        let mut methods: Vec<Box<dyn Adapter>> = MethodKind::ALL
            .iter()
            .map(|k| k.build(&anchors, &PtaConfig::default(), &CacheConfig::default()).unwrap())
            .collect();
        let out = run_stream(&stream, &mut methods, &RunOptions::default()).unwrap();
        for (m, report) in out.report.methods.iter().enumerate() {
            let correct = out.records.iter().filter(|r| r.outcomes[m].correct).count();
            assert_eq!(correct, report.correct);
            assert!((report.final_accuracy - 100.0 * correct as f64 / 400.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rerun_reproduces_predictions() {
        let (anchors, stream) = small_stream();
        let build = || -> Vec<Box<dyn Adapter>> {
            MethodKind::ALL
                .iter()
                .map(|k| k.build(&anchors, &PtaConfig::default(), &CacheConfig::default()).unwrap())
                .collect()
        };
        let a = run_stream(&stream, &mut build(), &RunOptions::default()).unwrap();
        let b = run_stream(&stream, &mut build(), &RunOptions::default()).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            for (oa, ob) in ra.outcomes.iter().zip(&rb.outcomes) {
                assert_eq!(oa.prediction, ob.prediction);
            }
        }
    }

    #[test]
    fn mismatched_dimension_rejected_up_front() {
        let (anchors, stream) = small_stream();
        let other = Arc::new(TextAnchors::new(Matrix::from_rows(3, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap(), 0.01).unwrap());
        let mut methods: Vec<Box<dyn Adapter>> = vec![Box::new(ZeroShot::new(anchors)), Box::new(ZeroShot::new(other))];
        assert!(run_stream(&stream, &mut methods, &RunOptions::default()).is_err());
    }

    #[test]
    fn stateless_method_is_order_invariant() {
        let (anchors, stream) = small_stream();
        let mut zs = ZeroShot::new(anchors.clone());
        let spread = order_robustness(&mut zs, &stream, 4, 1).unwrap();
        assert_eq!(spread.std, 0.0);
        let order: Vec<usize> = (0..stream.len()).rev().collect();
        let mut pta = Pta::new(anchors, PtaConfig::default()).unwrap();
        let same = order_robustness_with_orders(&mut pta, &stream, &[order.clone(), order]).unwrap();
        assert_eq!(same.std, 0.0);
        assert!(order_robustness(&mut zs, &stream, 1, 0).is_err());
    }

    #[test]
    fn sweep_shapes_and_warnings() {
        let (anchors, stream) = small_stream();
        let opts = RunOptions::default();
        let rows = sweep(SweepParam::H, &[1.0, 5.0, 20.0, 100.0], &PtaConfig::default(), &anchors, &stream, &opts, 1).unwrap();
        assert_eq!(rows.len(), 4);
        let rows = sweep(SweepParam::W, &[0.01, -0.5, 0.01], &PtaConfig::default(), &anchors, &stream, &opts, 2).unwrap();
        assert!(rows[1].final_accuracy.is_none() && rows[1].warning.is_some());
        assert_eq!(rows[0].final_accuracy, rows[2].final_accuracy);
        assert!(sweep(SweepParam::W, &[], &PtaConfig::default(), &anchors, &stream, &opts, 1).is_err());
    }

    #[test]
    fn parallel_sweep_matches_serial() {
        let (anchors, stream) = small_stream();
        let opts = RunOptions::default();
        let values = [0.0, 0.001, 0.01, 0.1, 1.0];
        let a = sweep(SweepParam::W, &values, &PtaConfig::default(), &anchors, &stream, &opts, 1).unwrap();
        let b = sweep(SweepParam::W, &values, &PtaConfig::default(), &anchors, &stream, &opts, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bench_requires_enough_samples() {
        let (anchors, stream) = small_stream();
        let short = stream.prefix(50);
        assert!(bench_throughput(&mut ZeroShot::new(anchors.clone()), &short).is_err());
        let r = bench_throughput(&mut ZeroShot::new(anchors), &stream).unwrap();
        assert_eq!(r.cost_curve.len(), 9);
        assert!(r.throughput > 0.0);
        assert!(r.cost_at(0.5).is_some());
    }

    #[test]
    fn spread_uses_sample_std() {
        let s = Spread::of(&[1.0, 2.0, 3.0]);
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.std - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decay_ablation_is_deterministic() {
        let (anchors, stream) = small_stream();
        let a = beta_vs_raw_s_ablation(&anchors, &stream, &PtaConfig::default()).unwrap();
        let b = beta_vs_raw_s_ablation(&anchors, &stream, &PtaConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}

//! Seeded class-conditional embedding streams with controllable shift.
//!
//! Class anchors are isotropic Gaussian draws projected onto the unit
//! sphere. A sample of class `c` is `normalize(shifted(c) + sigma * g)`
//! where `g` is a standard Gaussian vector and `shifted(c)` moves the class
//! anchor away from where the zero-shot head expects it.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) seeded with the spec's
//! seeds; Gaussian draws use `rand_distr::StandardNormal`. Anchors and shift
//! geometry depend only on `anchor_seed`, while labels, noise and order
//! depend only on `order_seed`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::Stream;
use crate::vector::{self, Matrix};
use crate::zero_shot::TextAnchors;

/// Pairwise anchor cosine the rejection sampler aims to stay under.
pub const MAX_ANCHOR_COSINE: f64 = 0.5;
const ANCHOR_ATTEMPTS: usize = 1000;

// independent ChaCha streams derived from one seed
const STREAM_ANCHORS: u64 = 0;
const STREAM_SHIFT: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_NOISE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftKind {
    #[default]
    None,
    /// Rotate each anchor by `magnitude * pi/2` toward its own seeded
    /// orthogonal direction.
    RotateSubspace,
    /// Add `magnitude` times one shared unit bias vector, then normalize.
    AdditiveBias,
    /// Blend `(1 - m) own + m other` with a seeded other class.
    MixAnchors,
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftKind::None => "none",
            ShiftKind::RotateSubspace => "rotate",
            ShiftKind::AdditiveBias => "bias",
            ShiftKind::MixAnchors => "mix",
        })
    }
}

impl FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ShiftKind::None),
            "rotate" | "rotate-subspace" => Ok(ShiftKind::RotateSubspace),
            "bias" | "additive-bias" => Ok(ShiftKind::AdditiveBias),
            "mix" | "mix-anchors" => Ok(ShiftKind::MixAnchors),
            other => Err(Error::config(format!(
                "unknown shift '{other}' (expected none, rotate, bias or mix)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LabelDistribution {
    #[default]
    Uniform,
    /// `P(c) ~ 1 / (c + 1)^s`.
    Zipf { s: f64 },
}

impl FromStr for LabelDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(LabelDistribution::Uniform);
        }
        if let Some(exp) = s.strip_prefix("zipf:") {
            let s: f64 = exp
                .parse()
                .map_err(|_| Error::config(format!("bad zipf exponent '{exp}'")))?;
            return Ok(LabelDistribution::Zipf { s });
        }
        Err(Error::config(format!(
            "unknown label distribution '{s}' (expected uniform or zipf:<s>)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSpec {
    pub class_count: usize,
    pub dim: usize,
    pub anchor_seed: u64,
    pub noise_sigma: f64,
    pub shift_kind: ShiftKind,
    pub shift_magnitude: f64,
    pub stream_length: usize,
    pub label_distribution: LabelDistribution,
    pub order_seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            class_count: 10,
            dim: 64,
            anchor_seed: 0,
            noise_sigma: 0.25,
            shift_kind: ShiftKind::None,
            shift_magnitude: 0.0,
            stream_length: 1000,
            label_distribution: LabelDistribution::Uniform,
            order_seed: 0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::validation(format!(
                "need at least 2 classes, got {}",
                self.class_count
            )));
        }
        if self.dim < 2 {
            return Err(Error::validation(format!("dimension must be at least 2, got {}", self.dim)));
        }
        if self.stream_length < 1 {
            return Err(Error::validation("stream length must be at least 1"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::validation(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.shift_magnitude) {
            return Err(Error::validation(format!(
                "shift magnitude must lie in [0, 1], got {}",
                self.shift_magnitude
            )));
        }
        if let LabelDistribution::Zipf { s } = self.label_distribution {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::validation(format!("zipf exponent must be non-negative, got {s}")));
            }
        }
        Ok(())
    }
}

/// Generated anchors plus how well separated they came out.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDraw {
    pub matrix: Matrix,
    pub max_pairwise_cosine: f64,
    /// False when `d < 4C` and the best effort still exceeded the target.
    pub separated: bool,
}

impl AnchorDraw {
    pub fn into_text_anchors(self, tau: f64) -> Result<TextAnchors> {
        TextAnchors::new(self.matrix, tau)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if vector::norm(&v) > 1e-6 {
            return vector::l2_normalize(&v).expect("finite gaussian draw");
        }
    }
}

/// C unit-norm anchors with pairwise cosine below 0.5, enforced by
/// rejection when `d >= 4C`.
pub fn make_anchors(spec: &ShiftSpec) -> Result<AnchorDraw> {
    spec.validate()?;
    let (c, d) = (spec.class_count, spec.dim);
    let enforce = d >= 4 * c;
    let mut rng = rng_for(spec.anchor_seed, STREAM_ANCHORS);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(c);
    let mut overall_max = f64::NEG_INFINITY;
    for i in 0..c {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..ANCHOR_ATTEMPTS {
            let cand = gaussian_unit(&mut rng, d);
            let worst = rows
                .iter()
                .map(|r| vector::dot(r, &cand))
                .fold(f64::NEG_INFINITY, f64::max);
            if worst < MAX_ANCHOR_COSINE {
                best = Some((worst, cand));
                break;
            }
            if best.as_ref().is_none_or(|(b, _)| worst < *b) {
                best = Some((worst, cand));
            }
        }
        let (worst, row) = best.expect("at least one attempt");
        if enforce && worst >= MAX_ANCHOR_COSINE {
            return Err(Error::validation(format!(
                "could not separate anchor {i} below cosine {MAX_ANCHOR_COSINE} in {ANCHOR_ATTEMPTS} attempts"
            )));
        }
        overall_max = overall_max.max(worst);
        rows.push(row);
    }
    let matrix = Matrix::from_rows(d, rows)?;
    Ok(AnchorDraw {
        matrix,
        max_pairwise_cosine: overall_max,
        separated: overall_max < MAX_ANCHOR_COSINE,
    })
}

/// Where each class's samples are centred after the shift is applied.
pub fn shifted_anchors(spec: &ShiftSpec, anchors: &Matrix) -> Result<Matrix> {
    spec.validate()?;
    let (c, d) = (anchors.rows(), anchors.cols());
    if c != spec.class_count || d != spec.dim {
        return Err(Error::validation(format!(
            "anchors are {c}x{d} but spec asks for {}x{}",
            spec.class_count, spec.dim
        )));
    }
    let m = spec.shift_magnitude;
    let mut rng = rng_for(spec.anchor_seed, STREAM_SHIFT);
    let mut out = anchors.clone();
    match spec.shift_kind {
        ShiftKind::None => {}
        ShiftKind::RotateSubspace => {
            let (sin, cos) = (m * FRAC_PI_2).sin_cos();
            for j in 0..c {
                let a = anchors.row(j);
                let u = orthogonal_direction(&mut rng, a);
                for (o, (x, y)) in out.row_mut(j).iter_mut().zip(a.iter().zip(&u)) {
                    *o = cos * x + sin * y;
                }
            }
        }
        ShiftKind::AdditiveBias => {
            let bias = gaussian_unit(&mut rng, d);
            for j in 0..c {
                let row = out.row_mut(j);
                row.iter_mut().zip(&bias).for_each(|(x, b)| *x += m * b);
                let n = vector::l2_normalize(row)?;
                row.copy_from_slice(&n);
            }
        }
        ShiftKind::MixAnchors => {
            for j in 0..c {
                let other = (j + rng.random_range(1..c)) % c;
                let mixed: Vec<f64> = anchors
                    .row(j)
                    .iter()
                    .zip(anchors.row(other))
                    .map(|(a, b)| (1.0 - m) * a + m * b)
                    .collect();
                out.row_mut(j).copy_from_slice(&vector::l2_normalize(&mixed)?);
            }
        }
    }
    Ok(out)
}

/// Unit vector orthogonal to the unit vector `a` (Gram-Schmidt on a
/// Gaussian draw).
fn orthogonal_direction(rng: &mut ChaCha8Rng, a: &[f64]) -> Vec<f64> {
    loop {
        let mut v = gaussian_unit(rng, a.len());
        let proj = vector::dot(&v, a);
        v.iter_mut().zip(a).for_each(|(x, y)| *x -= proj * y);
        if vector::norm(&v) > 1e-6 {
            let mut u = vector::l2_normalize(&v).expect("finite");
            // one more pass keeps the residual at rounding level
            let proj = vector::dot(&u, a);
            u.iter_mut().zip(a).for_each(|(x, y)| *x -= proj * y);
            return vector::l2_normalize(&u).expect("finite");
        }
    }
}

fn draw_labels(spec: &ShiftSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let c = spec.class_count;
    match spec.label_distribution {
        LabelDistribution::Uniform => (0..spec.stream_length).map(|_| rng.random_range(0..c)).collect(),
        LabelDistribution::Zipf { s } => {
            let weights: Vec<f64> = (0..c).map(|k| ((k + 1) as f64).powf(-s)).collect();
            let total: f64 = weights.iter().sum();
            let mut cdf = Vec::with_capacity(c);
            let mut acc = 0.0;
            for w in &weights {
                acc += w / total;
                cdf.push(acc);
            }
            (0..spec.stream_length)
                .map(|_| {
                    let u: f64 = rng.random();
                    cdf.iter().position(|&p| u < p).unwrap_or(c - 1)
                })
                .collect()
        }
    }
}

/// Draws the labeled stream for `spec` around the given (unshifted)
/// anchors.
pub fn sample_stream(spec: &ShiftSpec, anchors: &Matrix) -> Result<Stream> {
    let centres = shifted_anchors(spec, anchors)?;
    let labels = draw_labels(spec, &mut rng_for(spec.order_seed, STREAM_LABELS));
    let mut noise_rng = rng_for(spec.order_seed, STREAM_NOISE);
    let d = spec.dim;
    let mut data = Vec::with_capacity(labels.len() * d);
    let mut buf = vec![0.0; d];
    for &label in &labels {
        for (b, x) in buf.iter_mut().zip(centres.row(label)) {
            let g: f64 = StandardNormal.sample(&mut noise_rng);
            *b = x + spec.noise_sigma * g;
        }
        data.extend(vector::l2_normalize(&buf)?);
    }
    Stream::new(Matrix::from_vec(labels.len(), d, data)?, labels)
}

/// Anchors and stream in one call.
pub fn generate(spec: &ShiftSpec) -> Result<(AnchorDraw, Stream)> {
    let anchors = make_anchors(spec)?;
    let stream = sample_stream(spec, &anchors.matrix)?;
    Ok((anchors, stream))
}

/// `levels` copies of `spec` with magnitudes `max * i / levels`.
pub fn severity_ladder(spec: &ShiftSpec, levels: usize, max_magnitude: f64) -> Result<Vec<ShiftSpec>> {
    if levels == 0 {
        return Err(Error::validation("severity ladder needs at least one level"));
    }
    if !(max_magnitude > 0.0 && max_magnitude <= 1.0) {
        return Err(Error::validation(format!(
            "maximum magnitude must lie in (0, 1], got {max_magnitude}"
        )));
    }
    Ok((1..=levels)
        .map(|i| ShiftSpec {
            shift_magnitude: max_magnitude * i as f64 / levels as f64,
            ..spec.clone()
        })
        .collect())
}

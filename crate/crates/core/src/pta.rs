//! Prototype-based test-time adaptation.
//!
//! Each class keeps a knowledge prototype that starts at zero and absorbs
//! every incoming feature through a confidence-weighted moving average. The
//! per-class decay is `beta_j = 1 - exp(-s_j / h)` where `s` is the zero-shot
//! confidence of the sample, so a single sample can move a prototype by at
//! most `1 - exp(-1/h)`. Predictions interpolate the prototypes toward the
//! text anchors, score the feature against them exactly like the zero-shot
//! head, and add the two probability vectors.
//!
//! The hot path in [`PtaState::observe`] never materializes the interpolated
//! prototypes in fixed-anchor mode. It keeps `|P_c|^2` and `P_c . F_c` per
//! row and updates them alongside the moving average, so one pass over the
//! prototype bank per sample is enough.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, Observation};
use crate::error::{check_dim, Error, Result};
use crate::vector::{self, Matrix};
use crate::zero_shot::{TextAnchors, DEFAULT_TAU};

pub const DEFAULT_H: f64 = 20.0;
pub const DEFAULT_W: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Fold the sample into the prototypes, then predict with them.
    #[default]
    UpdateThenPredict,
    /// Predict from the prototypes as they were before this sample.
    PredictThenUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    /// `(1 - w) P_t + w F_t` against the immutable text anchors each step.
    #[default]
    Fixed,
    /// `P_a <- (1 - w) P_t + w P_a`, with `P_a` starting at the anchors.
    Recurrent,
}

/// How the per-class decay is derived from the zero-shot confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayRule {
    /// `1 - exp(-s / h)`.
    #[default]
    Adaptive,
    /// The confidence itself. Ablation only.
    RawConfidence,
}

/// What the final class is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// Zero-shot probabilities plus prototype probabilities.
    #[default]
    Fused,
    /// Prototype probabilities alone. Ablation only.
    PrototypeOnly,
}

macro_rules! kebab_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::config(format!(
                        "unknown {} '{other}'", stringify!($ty)
                    ))),
                }
            }
        }
    };
}

kebab_enum!(UpdateOrder { UpdateThenPredict => "update-then-predict", PredictThenUpdate => "predict-then-update" });
kebab_enum!(AnchorMode { Fixed => "fixed", Recurrent => "recurrent" });
kebab_enum!(DecayRule { Adaptive => "adaptive", RawConfidence => "raw-confidence" });
kebab_enum!(Scoring { Fused => "fused", PrototypeOnly => "prototype-only" });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtaConfig {
    pub h: f64,
    pub w: f64,
    pub tau: f64,
    pub update_order: UpdateOrder,
    pub anchor_mode: AnchorMode,
    pub decay: DecayRule,
    pub scoring: Scoring,
}

impl Default for PtaConfig {
    fn default() -> Self {
        PtaConfig {
            h: DEFAULT_H,
            w: DEFAULT_W,
            tau: DEFAULT_TAU,
            update_order: UpdateOrder::default(),
            anchor_mode: AnchorMode::default(),
            decay: DecayRule::default(),
            scoring: Scoring::default(),
        }
    }
}

impl PtaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::config(format!("h must be positive, got {}", self.h)));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::config(format!("w must lie in [0, 1], got {}", self.w)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

impl fmt::Display for PtaConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "h={} w={} tau={} order={} anchor={} decay={} scoring={}",
            self.h, self.w, self.tau, self.update_order, self.anchor_mode, self.decay, self.scoring
        )
    }
}

/// `beta_j = 1 - exp(-s_j / h)`, evaluated with `expm1` so that
/// `beta_j > 0` whenever `s_j > 0`.
pub fn adaptive_weights(s: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::config(format!("h must be positive, got {h}")));
    }
    Ok(s.iter().map(|&sj| adaptive_weight(sj, h)).collect())
}

#[inline]
fn adaptive_weight(s: f64, h: f64) -> f64 {
    -(-s / h).exp_m1()
}

/// Softmax over `cos(f, proto_c) / tau`; null prototype rows score 0.
pub fn prototype_confidence(f: &[f64], protos: &Matrix, tau: f64) -> Result<Vec<f64>> {
    check_dim(protos.cols(), f.len())?;
    let f_norm = vector::norm(f);
    let logits: Vec<f64> = protos
        .iter_rows()
        .map(|row| vector::cosine_from_parts(vector::dot(f, row), f_norm, vector::norm(row)))
        .collect();
    vector::softmax(&logits, tau)
}

/// Adds the two probability vectors and reads off the argmax.
pub fn fused_prediction(p_clip: &[f64], p_proto: &[f64]) -> Result<(Vec<f64>, usize)> {
    check_dim(p_clip.len(), p_proto.len())?;
    let scores: Vec<f64> = p_clip.iter().zip(p_proto).map(|(a, b)| a + b).collect();
    let class = vector::argmax(&scores);
    Ok((scores, class))
}

/// Adapted state for one stream.
#[derive(Debug, Clone)]
pub struct PtaState {
    anchors: Arc<TextAnchors>,
    prototypes: Matrix,
    /// Text-anchored prototypes, present only in recurrent mode.
    recurrent: Option<Matrix>,
    samples_seen: u64,
    // per-row |P_c|^2 and P_c . F_c, maintained incrementally
    sq_norms: Vec<f64>,
    anchor_dots: Vec<f64>,
    // scratch
    clip_logits: Vec<f64>,
    p_clip: Vec<f64>,
    beta: Vec<f64>,
    proto_dots: Vec<f64>,
    p_proto: Vec<f64>,
    scores: Vec<f64>,
}

impl PtaState {
    pub fn new(anchors: Arc<TextAnchors>, mode: AnchorMode) -> Self {
        let c = anchors.class_count();
        let d = anchors.dim();
        let recurrent = match mode {
            AnchorMode::Fixed => None,
            AnchorMode::Recurrent => Some(anchors.matrix().clone()),
        };
        PtaState {
            anchors,
            prototypes: Matrix::zeros(c, d),
            recurrent,
            samples_seen: 0,
            sq_norms: vec![0.0; c],
            anchor_dots: vec![0.0; c],
            clip_logits: vec![0.0; c],
            p_clip: vec![0.0; c],
            beta: vec![0.0; c],
            proto_dots: vec![0.0; c],
            p_proto: vec![0.0; c],
            scores: vec![0.0; c],
        }
    }

    /// Rebuilds a state from checkpointed parts.
    pub fn from_parts(
        anchors: Arc<TextAnchors>,
        prototypes: Matrix,
        recurrent: Option<Matrix>,
        samples_seen: u64,
    ) -> Result<Self> {
        check_dim(anchors.class_count(), prototypes.rows())?;
        check_dim(anchors.dim(), prototypes.cols())?;
        prototypes.check_finite()?;
        if let Some(pa) = &recurrent {
            check_dim(anchors.class_count(), pa.rows())?;
            check_dim(anchors.dim(), pa.cols())?;
            pa.check_finite()?;
        }
        let mode = if recurrent.is_some() { AnchorMode::Recurrent } else { AnchorMode::Fixed };
        let mut state = PtaState::new(anchors, mode);
        state.prototypes = prototypes;
        state.recurrent = recurrent;
        state.samples_seen = samples_seen;
        state.refresh_row_stats();
        Ok(state)
    }

    pub fn anchors(&self) -> &Arc<TextAnchors> {
        &self.anchors
    }

    /// The knowledge prototypes `P_t`.
    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    /// The text-anchored prototypes `P_a` (recurrent mode only).
    pub fn recurrent_prototypes(&self) -> Option<&Matrix> {
        self.recurrent.as_ref()
    }

    pub fn anchor_mode(&self) -> AnchorMode {
        if self.recurrent.is_some() {
            AnchorMode::Recurrent
        } else {
            AnchorMode::Fixed
        }
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn reset(&mut self) {
        *self = PtaState::new(self.anchors.clone(), self.anchor_mode());
    }

    fn refresh_row_stats(&mut self) {
        for c in 0..self.prototypes.rows() {
            let row = self.prototypes.row(c);
            self.sq_norms[c] = vector::dot(row, row);
            self.anchor_dots[c] = vector::dot(row, self.anchors.row(c));
        }
    }

    /// `P_j <- (1 - beta_j) P_j + beta_j f` for every class `j`.
    pub fn ema_update(&mut self, f: &[f64], beta: &[f64]) -> Result<()> {
        check_dim(self.anchors.dim(), f.len())?;
        check_dim(self.anchors.class_count(), beta.len())?;
        let f_sq = vector::dot(f, f);
        for (c, &b) in beta.iter().enumerate() {
            let pf = ema_row(self.prototypes.row_mut(c), f, b);
            let anchor_dot = vector::dot(f, self.anchors.row(c));
            self.update_row_stats(c, b, pf, f_sq, anchor_dot);
        }
        Ok(())
    }

    #[inline]
    fn update_row_stats(&mut self, c: usize, b: f64, old_pf: f64, f_sq: f64, f_anchor_dot: f64) {
        let keep = 1.0 - b;
        self.sq_norms[c] = keep * keep * self.sq_norms[c] + 2.0 * b * keep * old_pf + b * b * f_sq;
        self.anchor_dots[c] = keep * self.anchor_dots[c] + b * f_anchor_dot;
    }

    /// The prototypes used for scoring. Fixed mode computes
    /// `(1 - w) P_t + w F_t` without touching the state; recurrent mode
    /// advances `P_a` and returns it.
    pub fn interpolated_prototypes(&mut self, w: f64) -> Matrix {
        let (c, d) = (self.prototypes.rows(), self.prototypes.cols());
        match &mut self.recurrent {
            None => {
                let mut out = Matrix::zeros(c, d);
                for j in 0..c {
                    interpolate_row(out.row_mut(j), self.prototypes.row(j), self.anchors.row(j), w);
                }
                out
            }
            Some(pa) => {
                for j in 0..c {
                    recurrent_row(pa.row_mut(j), self.prototypes.row(j), w);
                }
                pa.clone()
            }
        }
    }

    /// Processes one sample: zero-shot confidence, decay, prototype update
    /// and fused prediction, in the configured order. O(C d) per call.
    pub fn observe(&mut self, f: &[f64], config: &PtaConfig) -> Result<Observation<'_>> {
        check_dim(self.anchors.dim(), f.len())?;
        let f_norm = vector::norm(f);
        let f_sq = f_norm * f_norm;
        let tau = config.tau;

        // zero-shot logits under this config's temperature
        self.anchors.logits_into(f, f_norm, &mut self.clip_logits);
        let rescale = self.anchors.temperature() / tau;
        for (p, &l) in self.p_clip.iter_mut().zip(&self.clip_logits) {
            *p = l * rescale;
        }
        vector::softmax_in_place(&mut self.p_clip);

        match config.decay {
            DecayRule::Adaptive => {
                for (b, &s) in self.beta.iter_mut().zip(&self.p_clip) {
                    *b = adaptive_weight(s, config.h);
                }
            }
            DecayRule::RawConfidence => self.beta.copy_from_slice(&self.p_clip),
        }

        let update_first = config.update_order == UpdateOrder::UpdateThenPredict;
        if self.recurrent.is_some() {
            self.observe_recurrent(f, f_norm, f_sq, config, update_first);
        } else {
            self.observe_fixed(f, f_norm, f_sq, config, update_first);
        }
        vector::softmax_in_place(&mut self.p_proto);

        match config.scoring {
            Scoring::Fused => {
                for ((s, a), b) in self.scores.iter_mut().zip(&self.p_clip).zip(&self.p_proto) {
                    *s = a + b;
                }
            }
            Scoring::PrototypeOnly => self.scores.copy_from_slice(&self.p_proto),
        }
        self.samples_seen += 1;
        Ok(Observation {
            class: vector::argmax(&self.scores),
            scores: &self.scores,
        })
    }

    /// Fills `p_proto` with prototype logits (pre-softmax) and applies the
    /// moving-average update, in one pass over the prototype bank.
    fn observe_fixed(&mut self, f: &[f64], f_norm: f64, f_sq: f64, config: &PtaConfig, update_first: bool) {
        let w = config.w;
        let keep_w = 1.0 - w;
        let c_count = self.prototypes.rows();
        for c in 0..c_count {
            let b = self.beta[c];
            // cos(f, F_c) * |F_c| * |f| recovers f . F_c
            let f_anchor_dot = self.clip_logits[c] * self.anchors.temperature() * f_norm * self.anchors.row_norm(c);
            let old_pf = ema_row(self.prototypes.row_mut(c), f, b);
            let (sq, ad, pf) = if update_first {
                self.update_row_stats(c, b, old_pf, f_sq, f_anchor_dot);
                (self.sq_norms[c], self.anchor_dots[c], (1.0 - b) * old_pf + b * f_sq)
            } else {
                let snapshot = (self.sq_norms[c], self.anchor_dots[c], old_pf);
                self.update_row_stats(c, b, old_pf, f_sq, f_anchor_dot);
                snapshot
            };
            let anchor_sq = self.anchors.row_norm(c) * self.anchors.row_norm(c);
            let dot = keep_w * pf + w * f_anchor_dot;
            let norm_sq = keep_w * keep_w * sq + 2.0 * w * keep_w * ad + w * w * anchor_sq;
            let cos = vector::cosine_from_parts(dot, f_norm, norm_sq.max(0.0).sqrt());
            self.proto_dots[c] = dot;
            self.p_proto[c] = cos / config.tau;
        }
    }

    fn observe_recurrent(&mut self, f: &[f64], f_norm: f64, f_sq: f64, config: &PtaConfig, update_first: bool) {
        let c_count = self.prototypes.rows();
        let mut pa = self.recurrent.take().expect("recurrent mode");
        for c in 0..c_count {
            let b = self.beta[c];
            let f_anchor_dot = self.clip_logits[c] * self.anchors.temperature() * f_norm * self.anchors.row_norm(c);
            if update_first {
                let pf = ema_row(self.prototypes.row_mut(c), f, b);
                self.update_row_stats(c, b, pf, f_sq, f_anchor_dot);
            }
            recurrent_row(pa.row_mut(c), self.prototypes.row(c), config.w);
            if !update_first {
                let pf = ema_row(self.prototypes.row_mut(c), f, b);
                self.update_row_stats(c, b, pf, f_sq, f_anchor_dot);
            }
            let row = pa.row(c);
            let dot = vector::dot(f, row);
            self.proto_dots[c] = dot;
            self.p_proto[c] = vector::cosine_from_parts(dot, f_norm, vector::norm(row)) / config.tau;
        }
        self.recurrent = Some(pa);
    }
}

/// In-place moving-average step on one row. Returns the row's dot product
/// with `f` before the update.
#[inline]
fn ema_row(row: &mut [f64], f: &[f64], b: f64) -> f64 {
    let keep = 1.0 - b;
    let mut acc = [0.0f64; 4];
    let mut rows = row.chunks_exact_mut(4);
    let mut fs = f.chunks_exact(4);
    for (p, x) in (&mut rows).zip(&mut fs) {
        for k in 0..4 {
            acc[k] += p[k] * x[k];
            p[k] = keep * p[k] + b * x[k];
        }
    }
    let mut tail = 0.0;
    for (p, x) in rows.into_remainder().iter_mut().zip(fs.remainder()) {
        tail += *p * x;
        *p = keep * *p + b * x;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn interpolate_row(out: &mut [f64], proto: &[f64], anchor: &[f64], w: f64) {
    let keep = 1.0 - w;
    for ((o, p), a) in out.iter_mut().zip(proto).zip(anchor) {
        *o = keep * p + w * a;
    }
}

#[inline]
fn recurrent_row(pa: &mut [f64], proto: &[f64], w: f64) {
    let keep = 1.0 - w;
    for (a, p) in pa.iter_mut().zip(proto) {
        *a = keep * p + w * *a;
    }
}

/// [`PtaState`] bundled with its configuration behind the [`Adapter`] trait.
#[derive(Debug, Clone)]
pub struct Pta {
    state: PtaState,
    config: PtaConfig,
}

impl Pta {
    pub fn new(anchors: Arc<TextAnchors>, config: PtaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pta {
            state: PtaState::new(anchors, config.anchor_mode),
            config,
        })
    }

    pub fn from_state(state: PtaState, config: PtaConfig) -> Result<Self> {
        config.validate()?;
        if state.anchor_mode() != config.anchor_mode {
            return Err(Error::config(format!(
                "state is in {} anchor mode but config asks for {}",
                state.anchor_mode(),
                config.anchor_mode
            )));
        }
        Ok(Pta { state, config })
    }

    pub fn state(&self) -> &PtaState {
        &self.state
    }

    pub fn config(&self) -> &PtaConfig {
        &self.config
    }
}

impl Adapter for Pta {
    fn name(&self) -> &str {
        "pta"
    }

    fn describe(&self) -> String {
        self.config.to_string()
    }

    fn class_count(&self) -> usize {
        self.state.anchors.class_count()
    }

    fn dim(&self) -> usize {
        self.state.anchors.dim()
    }

    fn observe(&mut self, f: &[f64]) -> Result<Observation<'_>> {
        self.state.observe(f, &self.config)
    }

    fn reset(&mut self) {
        self.state.reset();
    }
}

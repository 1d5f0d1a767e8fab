//! Common interface over the streaming classifiers the harness drives.

use std::sync::Arc;

use crate::error::{check_dim, Result};
use crate::vector;
use crate::zero_shot::TextAnchors;

/// One prediction. `scores` borrows the adapter's scratch buffer and is
/// overwritten by the next `observe`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<'a> {
    pub class: usize,
    pub scores: &'a [f64],
}

/// A batch-size-1 classifier that may adapt as it sees unlabeled samples.
/// Calls to `observe` must be externally ordered.
pub trait Adapter: Send {
    /// Short method name used in reports ("zero-shot", "pta", "cache").
    fn name(&self) -> &str;

    /// Human-readable configuration echo.
    fn describe(&self) -> String;

    fn class_count(&self) -> usize;

    fn dim(&self) -> usize;

    fn observe(&mut self, f: &[f64]) -> Result<Observation<'_>>;

    /// Drops all adapted state, as if no sample had been observed.
    fn reset(&mut self);

    /// True if predictions never depend on previously observed samples.
    fn is_stateless(&self) -> bool {
        false
    }
}

/// Plain zero-shot classifier.
#[derive(Debug, Clone)]
pub struct ZeroShot {
    anchors: Arc<TextAnchors>,
    scores: Vec<f64>,
}

impl ZeroShot {
    pub fn new(anchors: Arc<TextAnchors>) -> Self {
        let scores = vec![0.0; anchors.class_count()];
        ZeroShot { anchors, scores }
    }
}

impl Adapter for ZeroShot {
    fn name(&self) -> &str {
        "zero-shot"
    }

    fn describe(&self) -> String {
        format!("tau={}", self.anchors.temperature())
    }

    fn class_count(&self) -> usize {
        self.anchors.class_count()
    }

    fn dim(&self) -> usize {
        self.anchors.dim()
    }

    fn observe(&mut self, f: &[f64]) -> Result<Observation<'_>> {
        check_dim(self.anchors.dim(), f.len())?;
        self.anchors.logits_into(f, vector::norm(f), &mut self.scores);
        vector::softmax_in_place(&mut self.scores);
        Ok(Observation {
            class: vector::argmax(&self.scores),
            scores: &self.scores,
        })
    }

    fn reset(&mut self) {}

    fn is_stateless(&self) -> bool {
        true
    }
}

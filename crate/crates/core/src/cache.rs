//! Entropy-filtered feature cache, the reference point for cache-based
//! adaptation.
//!
//! Each class owns up to `M` entries. A sample joins its pseudo-label's
//! cache while the cache has room, or by evicting the highest-entropy entry
//! when its own entropy is strictly lower. Retrieval scores a feature by
//! `alpha * sum exp(-sharpness * (1 - cos))` over each class's entries and
//! adds that to the zero-shot logits.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, Observation};
use crate::error::{check_dim, Error, Result};
use crate::vector;
use crate::zero_shot::TextAnchors;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub capacity_per_class: usize,
    pub alpha: f64,
    pub sharpness: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            capacity_per_class: 3,
            alpha: 1.0,
            sharpness: 5.0,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity_per_class == 0 {
            return Err(Error::config("cache capacity must be positive"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.sharpness.is_finite() && self.sharpness > 0.0) {
            return Err(Error::config(format!(
                "sharpness must be positive, got {}",
                self.sharpness
            )));
        }
        Ok(())
    }
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    h.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub feature: Vec<f64>,
    pub norm: f64,
    pub entropy: f64,
    pub pseudo_label: usize,
}

impl CacheEntry {
    pub fn new(feature: Vec<f64>, entropy: f64, pseudo_label: usize) -> Self {
        let norm = vector::norm(&feature);
        CacheEntry {
            feature,
            norm,
            entropy,
            pseudo_label,
        }
    }
}

/// Entries for one class, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCache {
    entries: Vec<CacheEntry>,
    capacity: usize,
}

impl ClassCache {
    pub fn new(capacity: usize) -> Self {
        ClassCache {
            entries: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn max_entropy(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.entropy).reduce(f64::max)
    }

    /// Returns true if the entry was stored.
    pub fn try_insert(&mut self, entry: CacheEntry) -> bool {
        if !self.is_full() {
            self.entries.push(entry);
            return true;
        }
        // first maximum in insertion order is the oldest
        let mut worst = 0;
        for (i, e) in self.entries.iter().enumerate().skip(1) {
            if e.entropy > self.entries[worst].entropy {
                worst = i;
            }
        }
        if entry.entropy < self.entries[worst].entropy {
            // keep insertion order: drop the evicted entry, append the new one
            self.entries.remove(worst);
            self.entries.push(entry);
            true
        } else {
            false
        }
    }

    fn affinity(&self, f: &[f64], f_norm: f64, sharpness: f64) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let cos = vector::cosine_from_parts(vector::dot(f, &e.feature), f_norm, e.norm);
                (-sharpness * (1.0 - cos)).exp()
            })
            .sum()
    }
}

/// Per-class retrieval scores for `f`; empty caches contribute 0.
pub fn cache_logits(f: &[f64], caches: &[ClassCache], config: &CacheConfig) -> Result<Vec<f64>> {
    let f_norm = vector::norm(f);
    let mut out = Vec::with_capacity(caches.len());
    for cache in caches {
        if let Some(e) = cache.entries.first() {
            check_dim(e.feature.len(), f.len())?;
        }
        out.push(config.alpha * cache.affinity(f, f_norm, config.sharpness));
    }
    Ok(out)
}

/// Cache-based adapter: zero-shot logits plus retrieval logits.
#[derive(Debug, Clone)]
pub struct CacheAdapter {
    anchors: Arc<TextAnchors>,
    config: CacheConfig,
    caches: Vec<ClassCache>,
    p_clip: Vec<f64>,
    scores: Vec<f64>,
}

impl CacheAdapter {
    pub fn new(anchors: Arc<TextAnchors>, config: CacheConfig) -> Result<Self> {
        config.validate()?;
        let c = anchors.class_count();
        Ok(CacheAdapter {
            caches: vec![ClassCache::new(config.capacity_per_class); c],
            p_clip: vec![0.0; c],
            scores: vec![0.0; c],
            anchors,
            config,
        })
    }

    pub fn caches(&self) -> &[ClassCache] {
        &self.caches
    }

    pub fn total_entries(&self) -> usize {
        self.caches.iter().map(ClassCache::len).sum()
    }
}

impl Adapter for CacheAdapter {
    fn name(&self) -> &str {
        "cache"
    }

    fn describe(&self) -> String {
        format!(
            "capacity={} alpha={} sharpness={} tau={}",
            self.config.capacity_per_class,
            self.config.alpha,
            self.config.sharpness,
            self.anchors.temperature()
        )
    }

    fn class_count(&self) -> usize {
        self.anchors.class_count()
    }

    fn dim(&self) -> usize {
        self.anchors.dim()
    }

    fn observe(&mut self, f: &[f64]) -> Result<Observation<'_>> {
        check_dim(self.anchors.dim(), f.len())?;
        let f_norm = vector::norm(f);
        self.anchors.logits_into(f, f_norm, &mut self.scores);
        self.p_clip.copy_from_slice(&self.scores);
        vector::softmax_in_place(&mut self.p_clip);
        let entropy = shannon_entropy(&self.p_clip);
        let pseudo_label = vector::argmax(&self.p_clip);

        for (s, cache) in self.scores.iter_mut().zip(&self.caches) {
            if !cache.is_empty() {
                *s += self.config.alpha * cache.affinity(f, f_norm, self.config.sharpness);
            }
        }
        let class = vector::argmax(&self.scores);

        self.caches[pseudo_label].try_insert(CacheEntry {
            feature: f.to_vec(),
            norm: f_norm,
            entropy,
            pseudo_label,
        });
        Ok(Observation {
            class,
            scores: &self.scores,
        })
    }

    fn reset(&mut self) {
        self.caches = vec![ClassCache::new(self.config.capacity_per_class); self.anchors.class_count()];
    }
}

//! Zero-shot scoring against fixed class text embeddings.

use crate::error::{check_dim, Error, Result};
use crate::vector::{self, Matrix};

/// Default softmax temperature (logit scale 100).
pub const DEFAULT_TAU: f64 = 0.01;

/// Fixed `C x d` class text embeddings with the softmax temperature used to
/// score against them.
#[derive(Debug, Clone)]
pub struct TextAnchors {
    matrix: Matrix,
    norms: Vec<f64>,
    class_names: Vec<String>,
    temperature: f64,
}

impl TextAnchors {
    /// Rows are L2-normalized on construction.
    pub fn new(mut matrix: Matrix, temperature: f64) -> Result<Self> {
        if matrix.rows() < 2 {
            return Err(Error::validation(format!(
                "need at least 2 classes, got {}",
                matrix.rows()
            )));
        }
        if matrix.cols() == 0 {
            return Err(Error::validation("anchor dimension must be positive"));
        }
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(Error::config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        matrix.normalize_rows()?;
        let norms = matrix.iter_rows().map(vector::norm).collect();
        let class_names = (0..matrix.rows()).map(|c| format!("class_{c}")).collect();
        Ok(TextAnchors {
            matrix,
            norms,
            class_names,
            temperature,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        check_dim(self.class_count(), names.len())?;
        self.class_names = names;
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn row(&self, c: usize) -> &[f64] {
        self.matrix.row(c)
    }

    pub(crate) fn row_norm(&self, c: usize) -> f64 {
        self.norms[c]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Entry `c` is `cos(f, anchor_c) / tau`.
    pub fn logits(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), f.len())?;
        let mut out = vec![0.0; self.class_count()];
        self.logits_into(f, vector::norm(f), &mut out);
        Ok(out)
    }

    pub(crate) fn logits_into(&self, f: &[f64], f_norm: f64, out: &mut [f64]) {
        for (c, (row, slot)) in self.matrix.iter_rows().zip(out.iter_mut()).enumerate() {
            let cos = vector::cosine_from_parts(vector::dot(f, row), f_norm, self.norms[c]);
            *slot = cos / self.temperature;
        }
    }

    /// Zero-shot class probabilities: softmax over `cos(f, anchor_c) / tau`.
    pub fn confidence(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut p = self.logits(f)?;
        vector::softmax_in_place(&mut p);
        Ok(p)
    }
}

/// Argmax readout with lowest-index tie-break.
pub fn predict(conf: &[f64]) -> usize {
    vector::argmax(conf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity(c: usize, d: usize) -> Matrix {
        let mut m = Matrix::zeros(c, d);
        for i in 0..c {
            m.row_mut(i)[i] = 1.0;
        }
        m
    }

    #[test]
    fn logits_on_orthonormal_anchors() {
        let anchors = TextAnchors::new(identity(5, 8), 0.01).unwrap();
        let logits = anchors.logits(anchors.row(3)).unwrap();
        for (c, l) in logits.iter().enumerate() {
            let want = if c == 3 { 100.0 } else { 0.0 };
            assert!((l - want).abs() < 1e-12);
        }
    }

    #[test]
    fn null_feature_scores_uniform() {
        let anchors = TextAnchors::new(identity(4, 4), 0.01).unwrap();
        assert_eq!(anchors.logits(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        let p = anchors.confidence(&[0.0; 4]).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert_eq!(predict(&p), 0);
    }

    #[test]
    fn logits_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..10 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let anchors = TextAnchors::new(Matrix::from_vec(10, 16, raw.clone()).unwrap(), 0.01).unwrap();
        let f = vector::l2_normalize(&(0..16).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap();
        let got = anchors.logits(&f).unwrap();
        for c in 0..10 {
            let row = &raw[c * 16..(c + 1) * 16];
            let mut d = 0.0;
            let mut nr = 0.0;
            let mut nf = 0.0;
            for k in 0..16 {
                d += row[k] * f[k];
                nr += row[k] * row[k];
                nf += f[k] * f[k];
            }
            let want = d / (nr.sqrt() * nf.sqrt()) / 0.01;
            assert!((got[c] - want).abs() < 1e-9, "class {c}: {} vs {want}", got[c]);
        }
    }

    #[test]
    fn sharp_two_class_confidence() {
        let anchors = TextAnchors::new(identity(2, 2), 0.01).unwrap();
        let p = anchors.confidence(anchors.row(0)).unwrap();
        // closed form: p1 = e^-100 / (1 + e^-100)
        let tail = (-100.0f64).exp() / (1.0 + (-100.0f64).exp());
        assert!((p[1] - tail).abs() < 1e-55);
        assert!(1.0 - p[0] < 1e-40);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn confidence_argmax_matches_cosine_and_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<f64> = (0..6 * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let anchors = TextAnchors::new(Matrix::from_vec(6, 12, raw).unwrap(), 0.05).unwrap();
        for _ in 0..200 {
            let f: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = anchors.confidence(&f).unwrap();
            let cos: Vec<f64> = (0..6).map(|c| vector::cosine(&f, anchors.row(c)).unwrap()).collect();
            assert_eq!(predict(&p), vector::argmax(&cos));
            let scaled: Vec<f64> = f.iter().map(|x| x * 7.5).collect();
            let q = anchors.confidence(&scaled).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TextAnchors::new(identity(1, 4), 0.01).is_err());
        assert!(TextAnchors::new(identity(2, 4), 0.0).is_err());
        let anchors = TextAnchors::new(identity(2, 4), 0.01).unwrap();
        assert!(matches!(
            anchors.logits(&[1.0, 0.0]),
            Err(Error::DimensionMismatch { expected: 4, actual: 2 })
        ));
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(predict(&[0.5, 0.5]), 0);
    }
}

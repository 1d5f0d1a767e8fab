//! Dense vector and matrix primitives.
//!
//! Everything is stored and accumulated in `f64`. The all-zero vector is the
//! designated null embedding: it survives normalization unchanged and has
//! cosine 0 against everything.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Norms at or below this are treated as the null vector.
pub const NULL_NORM: f64 = 1e-12;

/// Row-major `rows x cols` matrix. One row per class (prototypes, anchors)
/// or per sample (streams).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty iterator yields a
    /// `0 x cols` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(cols: usize, rows: impl IntoIterator<Item = R>) -> Result<Self> {
        let mut data = Vec::new();
        let mut n = 0;
        for row in rows {
            let row = row.as_ref();
            check_dim(cols, row.len())?;
            data.extend_from_slice(row);
            n += 1;
        }
        Ok(Matrix { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data
            .chunks_exact(cols)
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Errors on the first NaN or infinity, reporting its flat index.
    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.data)
    }

    /// L2-normalizes every row in place; null rows stay null.
    pub fn normalize_rows(&mut self) -> Result<()> {
        self.check_finite()?;
        let cols = self.cols;
        if cols == 0 {
            return Ok(());
        }
        for row in self.data.chunks_exact_mut(cols) {
            normalize_in_place(row);
        }
        Ok(())
    }
}

pub fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results are reproducible run to run.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn normalize_in_place(v: &mut [f64]) {
    let n = norm(v);
    if n > NULL_NORM {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Returns `v / ||v||`, or the all-zero vector when `||v|| <= 1e-12`.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    check_finite(v)?;
    let mut out = v.to_vec();
    normalize_in_place(&mut out);
    Ok(out)
}

/// Cosine similarity, defined as exactly 0 when either side is null.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(cosine_unchecked(a, b))
}

#[inline]
pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    cosine_from_parts(dot(a, b), norm(a), norm(b))
}

/// Cosine from a precomputed dot product and the two norms.
#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    if norm_a <= NULL_NORM || norm_b <= NULL_NORM {
        return 0.0;
    }
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Temperature softmax with max-subtraction.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::config(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    if logits.is_empty() {
        return Err(Error::validation("softmax of an empty logit vector"));
    }
    check_finite(logits)?;
    let mut out: Vec<f64> = logits.iter().map(|&l| l / temperature).collect();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unit-temperature softmax over already-scaled logits.
pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_three_four_five() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15);
        assert!((v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_keeps_null_vector() {
        assert_eq!(l2_normalize(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(matches!(
            l2_normalize(&[1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(l2_normalize(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn normalize_random_512() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let v: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = norm(&l2_normalize(&v).unwrap());
            assert!((n - 1.0).abs() < 1e-9, "norm {n}");
        }
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0; 4], 1.0).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_sharp() {
        // exp(100) / (exp(100) + 1) = 1 - 3.72e-44, so the minority mass is
        // the quantity that is actually representable
        let p = softmax(&[1.0, 0.0], 0.01).unwrap();
        assert!(p[1] > 0.0 && p[1] < 1e-40);
        assert!((p[1] - (-100.0f64).exp() / (1.0 + (-100.0f64).exp())).abs() < 1e-55);
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(matches!(softmax(&[1.0], 0.0), Err(Error::Config(_))));
        assert!(matches!(softmax(&[1.0], -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2; 5]), 0);
    }

    #[test]
    fn matrix_row_access() {
        let m = Matrix::from_rows(2, [[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.iter_rows().count(), 2);
        assert!(Matrix::from_rows(3, [[1.0, 2.0]]).is_err());
        assert_eq!(Matrix::zeros(0, 4).iter_rows().count(), 0);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in prop::collection::vec(-1e3f64..1e3, 1..200), t in 1e-3f64..10.0) {
            let p = softmax(&logits, t).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn softmax_shift_invariant(logits in prop::collection::vec(-50f64..50.0, 1..64), k in -100f64..100.0) {
            let shifted: Vec<f64> = logits.iter().map(|x| x + k).collect();
            let a = softmax(&logits, 1.0).unwrap();
            let b = softmax(&shifted, 1.0).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            pair in (2usize..64).prop_flat_map(|d| (
                prop::collection::vec(-1f64..1.0, d),
                prop::collection::vec(-1f64..1.0, d),
            )),
            lambda in 1e-3f64..1e3,
        ) {
            let (a, b) = pair;
            let ab = cosine(&a, &b).unwrap();
            prop_assert!((ab - cosine(&b, &a).unwrap()).abs() < 1e-9);
            let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
            prop_assert!((ab - cosine(&scaled, &b).unwrap()).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn softmax_large_class_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits: Vec<f64> = (0..10_000).map(|_| rng.random_range(-100.0..100.0)).collect();
        let s: f64 = softmax(&logits, 0.5).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}

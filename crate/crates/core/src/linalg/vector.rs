use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Dense real vector.
///
/// Dereferences to `[f64]`, so slice methods (`iter`, `len`, indexing) are
/// available directly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    /// The all-ones vector `e`.
    pub fn ones(dim: usize) -> Self {
        Self::filled(dim, 1.0)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self((0..dim).map(f).collect())
    }

    /// Unit basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!(self.dim(), x.dim(), "axpy: dimension mismatch");
        for (s, xi) in self.0.iter_mut().zip(&x.0) {
            *s += a * xi;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in &mut self.0 {
            *s *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|s| a * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// `a * x + b * y`, one rounding per product and one per sum.
    pub fn lincomb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        x.zip_map(y, |xi, yi| a * xi + b * yi)
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Index of the first NaN or infinite entry.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }

    /// Concatenation `(self, tail)`.
    pub fn concat(&self, tail: &Self) -> Self {
        let mut data = Vec::with_capacity(self.dim() + tail.dim());
        data.extend_from_slice(&self.0);
        data.extend_from_slice(&tail.0);
        Self(data)
    }

    /// Splits into `(self[..at], self[at..])`.
    pub fn split(&self, at: usize) -> (Self, Self) {
        let (head, tail) = self.0.split_at(at);
        (Self(head.to_vec()), Self(tail.to_vec()))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Self(data)
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Self(data.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(data: [f64; N]) -> Self {
        Self(data.to_vec())
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Dot product with four independent accumulators.
///
/// The summation order is fixed, so results are reproducible across runs.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    let mut acc = [0.0f64; 4];
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a = Vector::from_fn(11, |i| i as f64 * 0.5 - 2.0);
        let b = Vector::from_fn(11, |i| (i as f64).sqrt());
        let naive: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        assert!((a.dot(&b) - naive).abs() < 1e-12);
    }

    #[test]
    fn split_and_concat_are_inverse() {
        let v = Vector::from([1.0, 2.0, 3.0, 4.0, 5.0]);
        let (h, t) = v.split(2);
        assert_eq!(h.as_slice(), &[1.0, 2.0]);
        assert_eq!(h.concat(&t), v);
    }

    #[test]
    fn first_non_finite_reports_index() {
        let v = Vector::from([0.0, f64::NAN, f64::INFINITY]);
        assert_eq!(v.first_non_finite(), Some(1));
        assert!(!v.is_finite());
        assert_eq!(Vector::ones(3).first_non_finite(), None);
    }

    #[test]
    fn axpy_and_lincomb() {
        let mut y = Vector::ones(3);
        y.axpy(2.0, &Vector::from([1.0, 0.0, -1.0]));
        assert_eq!(y.as_slice(), &[3.0, 1.0, -1.0]);
        let z = Vector::lincomb(0.5, &y, 2.0, &Vector::ones(3));
        assert_eq!(z.as_slice(), &[3.5, 2.5, 1.5]);
    }
}

//! Price vectors on the probability simplex and Euclidean projection onto it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Point of the `(m-1)`-simplex: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidPrice("empty price vector".into()));
        }
        if p.iter().any(|x| !x.is_finite() || *x < -SIMPLEX_TOL) {
            return Err(Error::InvalidPrice(format!("negative or non-finite entry in {p:?}")));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidPrice(format!("prices sum to {s}")));
        }
        Ok(PriceVector(p.into_iter().map(|x| x.max(0.0)).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        PriceVector(vec![1.0 / m as f64; m])
    }

    /// Projection of an arbitrary vector onto the simplex.
    pub fn projected(v: &[f64]) -> Self {
        PriceVector(project_simplex(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &PriceVector) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto `{x >= 0, Σx = 1}` by Michelot's active-set
/// iteration: shift the free coordinates to sum to one, drop the ones that go
/// negative, repeat until none do.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut active: Vec<bool> = vec![true; v.len()];
    loop {
        let k = active.iter().filter(|&&a| a).count();
        let s: f64 = v.iter().zip(&active).filter(|(_, &a)| a).map(|(x, _)| x).sum();
        let tau = (s - 1.0) / k as f64;
        let mut changed = false;
        for (a, &x) in active.iter_mut().zip(v) {
            if *a && x - tau <= 0.0 {
                *a = false;
                changed = true;
            }
        }
        if !changed || active.iter().all(|a| !a) {
            if active.iter().all(|a| !a) {
                // all mass would vanish; only possible through rounding
                let j = v
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(j, _)| j)
                    .unwrap_or(0);
                let mut out = vec![0.0; v.len()];
                out[j] = 1.0;
                return out;
            }
            let mut out: Vec<f64> = v
                .iter()
                .zip(&active)
                .map(|(&x, &a)| if a { x - tau } else { 0.0 })
                .collect();
            let s: f64 = out.iter().sum();
            out.iter_mut().for_each(|x| *x /= s);
            return out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_simplex() {
        assert!(PriceVector::new(vec![0.5, 0.6]).is_err());
        assert!(PriceVector::new(vec![-0.5, 1.5]).is_err());
        assert!(PriceVector::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn projection_fixes_simplex_points() {
        let p = vec![0.2, 0.3, 0.5];
        let q = project_simplex(&p);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_far_point_is_a_vertex() {
        assert_eq!(project_simplex(&[10.0, 0.0, -3.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_shift_is_removed() {
        let q = project_simplex(&[1.25, 1.25, 1.25, 1.25]);
        assert!(q.iter().all(|x| (x - 0.25).abs() < 1e-12));
    }
}

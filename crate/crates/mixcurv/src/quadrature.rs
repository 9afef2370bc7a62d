//! Tensor-product quadrature over coordinate boxes with deterministic
//! parallel summation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{GeomError, Model};
use crate::linalg::det;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Midpoint,
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub bbox: Vec<(f64, f64)>,
    pub grid: usize,
    pub rule: Rule,
}

impl QuadratureSpec {
    pub fn new(bbox: Vec<(f64, f64)>, grid: usize, rule: Rule) -> Result<Self, GeomError> {
        if grid < 2 {
            return Err(GeomError::Specialization(format!("grid {grid} < 2")));
        }
        if bbox.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && b > a)) {
            return Err(GeomError::Specialization("degenerate quadrature box".into()));
        }
        Ok(QuadratureSpec { bbox, grid, rule })
    }

    /// Same box, checked to lie inside `domain`.
    pub fn within(bbox: Vec<(f64, f64)>, domain: &[(f64, f64)], grid: usize, rule: Rule) -> Result<Self, GeomError> {
        let inside = bbox.len() == domain.len()
            && bbox.iter().zip(domain).all(|((a, b), (lo, hi))| a >= lo && b <= hi);
        if !inside {
            return Err(GeomError::Domain { point: bbox.iter().map(|(a, _)| *a).collect() });
        }
        Self::new(bbox, grid, rule)
    }

    pub fn with_grid(&self, grid: usize) -> Self {
        QuadratureSpec { grid, ..self.clone() }
    }

    fn axis(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = self.bbox[k];
        let m = self.grid;
        match self.rule {
            Rule::Midpoint => {
                let h = (b - a) / m as f64;
                ((0..m).map(|i| a + (i as f64 + 0.5) * h).collect(), vec![h; m])
            }
            Rule::Trapezoid => {
                let h = (b - a) / (m - 1) as f64;
                let x = (0..m).map(|i| a + i as f64 * h).collect();
                let w = (0..m).map(|i| if i == 0 || i == m - 1 { 0.5 * h } else { h }).collect();
                (x, w)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.grid.pow(self.bbox.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// ∫ f dx over the box (coordinate measure).
    pub fn integrate<F>(&self, f: F) -> Result<f64, GeomError>
    where
        F: Fn(&[f64]) -> Result<f64, GeomError> + Sync,
    {
        let d = self.bbox.len();
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..d).map(|k| self.axis(k)).collect();
        let m = self.grid;
        let vals: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|mut idx| {
                let mut x = vec![0.0; d];
                let mut w = 1.0;
                for (k, (xs, ws)) in axes.iter().enumerate() {
                    let i = idx % m;
                    idx /= m;
                    x[k] = xs[i];
                    w *= ws[i];
                }
                f(&x).map(|v| v * w)
            })
            .collect::<Result<_, _>>()?;
        Ok(pairwise_sum(&vals))
    }
}

/// Pairwise summation in a fixed order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// `√|det g|` at a point.
pub fn volume_density<M: Model>(m: &M, x: &[f64]) -> Result<f64, GeomError> {
    let g = m.metric(x)?;
    let v = det(&g).abs().sqrt();
    if v == 0.0 || !v.is_finite() {
        return Err(GeomError::singular("volume density", x));
    }
    Ok(v)
}

pub fn volume<M: Model>(m: &M, q: &QuadratureSpec) -> Result<f64, GeomError> {
    q.integrate(|x| volume_density(m, x))
}

/// `∫ f dvol / Vol(Ω)`.
pub fn domain_mean<M, F>(m: &M, q: &QuadratureSpec, f: F) -> Result<f64, GeomError>
where
    M: Model,
    F: Fn(&[f64]) -> Result<f64, GeomError> + Sync,
{
    let vol = volume(m, q)?;
    let int = q.integrate(|x| Ok(f(x)? * volume_density(m, x)?))?;
    Ok(int / vol)
}

/// Integral at `q.grid` with the difference to half the grid as error estimate.
pub fn integrate_with_error<F>(q: &QuadratureSpec, f: F) -> Result<(f64, f64), GeomError>
where
    F: Fn(&[f64]) -> Result<f64, GeomError> + Sync,
{
    let fine = q.integrate(&f)?;
    let coarse = q.with_grid((q.grid / 2).max(2)).integrate(&f)?;
    Ok((fine, (fine - coarse).abs()))
}

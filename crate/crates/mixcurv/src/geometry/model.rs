use crate::expr::{Expr, Params};
use crate::jets::Scalar;
use crate::linalg::{inverse, Mat};
use crate::structure::ProductStructure;

use super::GeomError;

/// A metric on a chart together with a spanning set for D̃.
pub trait Model: Sync {
    fn dim(&self) -> usize;
    fn n(&self) -> usize;
    fn params(&self) -> &Params;
    fn domain(&self) -> &[(f64, f64)];
    fn metric<S: Scalar>(&self, x: &[S]) -> Result<Mat<S>, GeomError>;
    fn span<S: Scalar>(&self, x: &[S]) -> Result<Vec<Vec<S>>, GeomError>;
}

impl Model for ProductStructure {
    fn dim(&self) -> usize {
        self.dim
    }
    fn n(&self) -> usize {
        self.n
    }
    fn params(&self) -> &Params {
        &self.params
    }
    fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }
    fn metric<S: Scalar>(&self, x: &[S]) -> Result<Mat<S>, GeomError> {
        Ok(self.metric_at(x)?)
    }
    fn span<S: Scalar>(&self, x: &[S]) -> Result<Vec<Vec<S>>, GeomError> {
        Ok(self.dtilde_at(x)?)
    }
}

/// A symmetric (0,2) field in coordinates. It sees the base metric and the
/// D̃ span so that it can be built from projections.
pub trait SymField: Sync {
    fn eval<S: Scalar>(&self, x: &[S], g: &Mat<S>, span: &[Vec<S>]) -> Result<Mat<S>, GeomError>;
}

pub struct NoField;

impl SymField for NoField {
    fn eval<S: Scalar>(&self, x: &[S], _g: &Mat<S>, _span: &[Vec<S>]) -> Result<Mat<S>, GeomError> {
        Ok(vec![vec![S::zero(); x.len()]; x.len()])
    }
}

/// `g^⊤ = gV (VᵀgV)⁻¹ Vᵀg`, the metric composed with the projection onto span V.
pub fn top_part<S: Scalar>(g: &Mat<S>, span: &[Vec<S>]) -> Option<Mat<S>> {
    let d = g.len();
    let gv: Vec<Vec<S>> = span
        .iter()
        .map(|v| (0..d).map(|i| (0..d).fold(S::zero(), |s, j| s + g[i][j] * v[j])).collect())
        .collect();
    let gram: Mat<S> = span
        .iter()
        .map(|u| gv.iter().map(|w| (0..d).fold(S::zero(), |s, k| s + u[k] * w[k])).collect())
        .collect();
    let ginv = inverse(&gram)?;
    let n = span.len();
    let mut out = vec![vec![S::zero(); d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut s = S::zero();
            for a in 0..n {
                for b in 0..n {
                    s += gv[a][i] * ginv[a][b] * gv[b][j];
                }
            }
            out[i][j] = s;
        }
    }
    Some(out)
}

/// `e^{-2ψ} (φ⊥ g_t^⊥ + φ⊤ g_t^⊤)` with `g_t = g + t B`, the split taken with
/// respect to `g_t`. Each modification is optional.
pub struct Deformed<'a, M: Model, B: SymField = NoField> {
    pub base: &'a M,
    pub field: Option<(&'a B, f64)>,
    pub scale_perp: f64,
    pub scale_top: f64,
    pub conformal: Option<&'a Expr>,
}

impl<'a, M: Model> Deformed<'a, M, NoField> {
    pub fn conformal(base: &'a M, psi: &'a Expr) -> Self {
        Deformed { base, field: None, scale_perp: 1.0, scale_top: 1.0, conformal: Some(psi) }
    }
}

impl<'a, M: Model, B: SymField> Deformed<'a, M, B> {
    pub fn shifted(base: &'a M, field: &'a B, t: f64) -> Self {
        Deformed { base, field: Some((field, t)), scale_perp: 1.0, scale_top: 1.0, conformal: None }
    }
}

impl<M: Model, B: SymField> Model for Deformed<'_, M, B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn n(&self) -> usize {
        self.base.n()
    }
    fn params(&self) -> &Params {
        self.base.params()
    }
    fn domain(&self) -> &[(f64, f64)] {
        self.base.domain()
    }
    fn span<S: Scalar>(&self, x: &[S]) -> Result<Vec<Vec<S>>, GeomError> {
        self.base.span(x)
    }
    fn metric<S: Scalar>(&self, x: &[S]) -> Result<Mat<S>, GeomError> {
        let mut g = self.base.metric(x)?;
        let span = self.base.span(x)?;
        let d = g.len();
        if let Some((b, t)) = self.field {
            let bx = b.eval(x, &g, &span)?;
            for i in 0..d {
                for j in 0..d {
                    g[i][j] += bx[i][j].scale(t);
                }
            }
        }
        if self.scale_perp != 1.0 || self.scale_top != 1.0 {
            let pt: Vec<f64> = x.iter().map(|v| v.value()).collect();
            let top = top_part(&g, &span).ok_or_else(|| GeomError::singular("D̃ Gram matrix", &pt))?;
            for i in 0..d {
                for j in 0..d {
                    let perp = g[i][j] - top[i][j];
                    g[i][j] = perp.scale(self.scale_perp) + top[i][j].scale(self.scale_top);
                }
            }
        }
        if let Some(psi) = self.conformal {
            let f = psi.eval(x, self.base.params())?.scale(-2.0).exp();
            for row in g.iter_mut() {
                for v in row.iter_mut() {
                    *v *= f;
                }
            }
        }
        Ok(g)
    }
}

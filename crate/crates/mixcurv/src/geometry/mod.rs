//! Levi-Civita connection, curvature and the extrinsic tensors of the two
//! complementary distributions, all expressed in the adapted frame.
//!
//! Frame conventions: indices `0..n` span D̃, `n..d` span 𝒟. Vectors are
//! stored lowered, `V_α = g(V, e_α)`; (0,2) forms and operators as
//! `F[α][β] = g(F e_α, e_β)`; (1,2) tensors as `P[α][β][γ] = g(P(e_α, e_β), e_γ)`.

mod bundle;
mod curvature;
pub mod identities;
mod local;
mod model;

pub use bundle::{Geometry, GeometryBundle, SideData, Tensor2};
pub use curvature::{riemann_coords, sectional, CurvatureFast};
pub use local::{algebra, Local, Side, T3};
pub use model::{Deformed, Model, NoField, SymField};

use thiserror::Error;

use crate::expr::ExprError;
use crate::structure::StructureError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("singular {what} at {point:?}")]
    Singular { what: String, point: Vec<f64> },
    #[error("not applicable: {0}")]
    Specialization(String),
    #[error("point {point:?} lies outside the domain box")]
    Domain { point: Vec<f64> },
}

impl GeomError {
    pub(crate) fn singular(what: impl Into<String>, point: &[f64]) -> Self {
        GeomError::Singular { what: what.into(), point: point.to_vec() }
    }
}

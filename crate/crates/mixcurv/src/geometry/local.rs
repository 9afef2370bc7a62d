use std::ops::Range;

use serde::Serialize;

use crate::jets::{seed_dual, Scalar};
use crate::linalg::{inverse, Mat};
use crate::structure::adapted_frame;

use super::{GeomError, Model};

pub type T3<S> = Vec<Vec<Vec<S>>>;

/// Which distribution plays the role of "inner": `Top` takes D̃ inside and
/// 𝒟 as normal bundle (h, T, H, ...); `Perp` the reverse (h̃, T̃, H̃, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Top,
    Perp,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Top => Side::Perp,
            Side::Perp => Side::Top,
        }
    }

    pub fn inner(self, n: usize, d: usize) -> Range<usize> {
        match self {
            Side::Top => 0..n,
            Side::Perp => n..d,
        }
    }

    pub fn outer(self, n: usize, d: usize) -> Range<usize> {
        self.other().inner(n, d)
    }
}

/// Connection data at a point with scalars of type `S`. Differentiation
/// happens one level down, so `S = f64` gives first-order data only and
/// `S = Dual<f64>` carries one more derivative in every field.
#[derive(Debug, Clone)]
pub struct Local<S> {
    pub x: Vec<f64>,
    pub n: usize,
    pub g: Mat<S>,
    pub ginv: Mat<S>,
    /// `gamma[ν][μ][ρ] = Γ^ν_{μρ}`
    pub gamma: Vec<Mat<S>>,
    /// Frame vectors in coordinates, `e[α][ν]`.
    pub e: Vec<Vec<S>>,
    /// Covectors `g(e_α, ·)`.
    pub ge: Vec<Vec<S>>,
    pub eps: Vec<f64>,
    /// `w[α][β][γ] = g(∇_{e_α} e_β, e_γ)`
    pub w: T3<S>,
}

impl<S: Scalar> Local<S> {
    pub fn new<M: Model>(m: &M, x: &[S]) -> Result<Self, GeomError> {
        let d = m.dim();
        let n = m.n();
        let xv: Vec<f64> = x.iter().map(|v| v.value()).collect();
        let xd = seed_dual(x);
        let gd = m.metric(&xd)?;
        let span = m.span(&xd)?;
        let fr = adapted_frame(&gd, &span).map_err(|what| GeomError::singular(what, &xv))?;
        let g: Mat<S> = gd.iter().map(|r| r.iter().map(|v| v.v).collect()).collect();
        let ginv = inverse(&g).ok_or_else(|| GeomError::singular("metric", &xv))?;
        let dg = |k: usize, i: usize, j: usize| gd[i][j].d[k];

        let mut gamma = vec![vec![vec![S::zero(); d]; d]; d];
        for nu in 0..d {
            for mu in 0..d {
                for rho in mu..d {
                    let mut s = S::zero();
                    for k in 0..d {
                        s += ginv[nu][k] * (dg(mu, k, rho) + dg(rho, k, mu) - dg(k, mu, rho));
                    }
                    let s = s.scale(0.5);
                    gamma[nu][mu][rho] = s;
                    gamma[nu][rho][mu] = s;
                }
            }
        }

        let e: Vec<Vec<S>> = fr.e.iter().map(|v| v.iter().map(|c| c.v).collect()).collect();
        let ge: Vec<Vec<S>> = e
            .iter()
            .map(|v| (0..d).map(|i| (0..d).fold(S::zero(), |s, j| s + g[i][j] * v[j])).collect())
            .collect();
        // ∇_{e_α} e_β in coordinates
        let mut w = vec![vec![vec![S::zero(); d]; d]; d];
        for a in 0..d {
            for b in 0..d {
                let mut cov = vec![S::zero(); d];
                for (nu, c) in cov.iter_mut().enumerate() {
                    let mut s = S::zero();
                    for mu in 0..d {
                        let mut inner = fr.e[b][nu].d[mu];
                        for rho in 0..d {
                            inner += gamma[nu][mu][rho] * e[b][rho];
                        }
                        s += e[a][mu] * inner;
                    }
                    *c = s;
                }
                for c in 0..d {
                    w[a][b][c] = (0..d).fold(S::zero(), |s, nu| s + cov[nu] * ge[c][nu]);
                }
            }
        }
        Ok(Local { x: xv, n, g, ginv, gamma, e, ge, eps: fr.eps, w })
    }

    pub fn dim(&self) -> usize {
        self.e.len()
    }

    pub fn inner(&self, s: Side) -> Range<usize> {
        s.inner(self.n, self.dim())
    }

    pub fn outer(&self, s: Side) -> Range<usize> {
        s.outer(self.n, self.dim())
    }

    /// Coordinate vector to lowered frame components.
    pub fn lower_vec(&self, v: &[S]) -> Vec<S> {
        self.ge.iter().map(|c| c.iter().zip(v).fold(S::zero(), |s, (a, b)| s + *a * *b)).collect()
    }

    /// Lowered frame components back to a coordinate vector.
    pub fn raise_vec(&self, low: &[S]) -> Vec<S> {
        let d = self.dim();
        let mut out = vec![S::zero(); d];
        for (a, la) in low.iter().enumerate() {
            let c = la.scale(self.eps[a]);
            for k in 0..d {
                out[k] += c * self.e[a][k];
            }
        }
        out
    }

    /// Coordinate (0,2) form to frame components.
    pub fn lower_form(&self, b: &Mat<S>) -> Mat<S> {
        let d = self.dim();
        let be: Vec<Vec<S>> = self
            .e
            .iter()
            .map(|v| (0..d).map(|i| (0..d).fold(S::zero(), |s, j| s + b[i][j] * v[j])).collect())
            .collect();
        (0..d)
            .map(|a| (0..d).map(|c| (0..d).fold(S::zero(), |s, k| s + self.e[a][k] * be[c][k])).collect())
            .collect()
    }

    /// Second fundamental form of the inner distribution: `½(w_abz + w_baz)`.
    pub fn sff(&self, s: Side) -> T3<S> {
        self.split(s, 1.0)
    }

    /// Integrability tensor of the inner distribution: `½(w_abz − w_baz)`.
    pub fn integ(&self, s: Side) -> T3<S> {
        self.split(s, -1.0)
    }

    fn split(&self, s: Side, sign: f64) -> T3<S> {
        let d = self.dim();
        let mut out = algebra::zeros3(d);
        for a in self.inner(s) {
            for b in self.inner(s) {
                for z in self.outer(s) {
                    out[a][b][z] = (self.w[a][b][z] + self.w[b][a][z].scale(sign)).scale(0.5);
                }
            }
        }
        out
    }

    /// Mean curvature vector (lowered) of the inner distribution.
    pub fn mean(&self, s: Side) -> Vec<S> {
        let h = self.sff(s);
        algebra::trace12(&self.eps, &h, self.inner(s))
    }
}

/// Frame-level tensor algebra shared by every scalar type.
pub mod algebra {
    use std::ops::Range;

    use super::T3;
    use crate::jets::Scalar;
    use crate::linalg::Mat;

    pub fn zeros3<S: Scalar>(d: usize) -> T3<S> {
        vec![vec![vec![S::zero(); d]; d]; d]
    }

    pub fn zeros2<S: Scalar>(d: usize) -> Mat<S> {
        vec![vec![S::zero(); d]; d]
    }

    /// `V_γ = Σ_{a∈r} ε_a P[a][a][γ]`
    pub fn trace12<S: Scalar>(eps: &[f64], p: &T3<S>, r: Range<usize>) -> Vec<S> {
        let d = eps.len();
        (0..d).map(|c| r.clone().fold(S::zero(), |s, a| s + p[a][a][c].scale(eps[a]))).collect()
    }

    /// Operator `P(·,·)` contracted with `e_z`: `F[a][b] = P[a][b][z]`.
    pub fn slice<S: Scalar>(p: &T3<S>, z: usize) -> Mat<S> {
        p.iter().map(|r| r.iter().map(|c| c[z]).collect()).collect()
    }

    /// Lowered matrix of `F ∘ G`.
    pub fn compose<S: Scalar>(eps: &[f64], f: &Mat<S>, g: &Mat<S>) -> Mat<S> {
        let d = eps.len();
        (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| (0..d).fold(S::zero(), |s, c| s + (g[a][c] * f[c][b]).scale(eps[c])))
                    .collect()
            })
            .collect()
    }

    pub fn trace<S: Scalar>(eps: &[f64], f: &Mat<S>) -> S {
        (0..eps.len()).fold(S::zero(), |s, a| s + f[a][a].scale(eps[a]))
    }

    pub fn add<S: Scalar>(a: &Mat<S>, b: &Mat<S>, k: f64) -> Mat<S> {
        a.iter().zip(b).map(|(r, q)| r.iter().zip(q).map(|(x, y)| *x + y.scale(k)).collect()).collect()
    }

    pub fn scaled<S: Scalar>(a: &Mat<S>, k: f64) -> Mat<S> {
        a.iter().map(|r| r.iter().map(|x| x.scale(k)).collect()).collect()
    }

    pub fn add3<S: Scalar>(a: &T3<S>, b: &T3<S>, k: f64) -> T3<S> {
        a.iter().zip(b).map(|(x, y)| add(x, y, k)).collect()
    }

    /// `Σ_{z∈r} ε_z F_z ∘ G_z` for operator families indexed by the frame.
    pub fn sum_products<S: Scalar>(eps: &[f64], f: &[Mat<S>], g: &[Mat<S>], r: Range<usize>) -> Mat<S> {
        let d = eps.len();
        let mut out = zeros2(d);
        for z in r {
            out = add(&out, &compose(eps, &f[z], &g[z]), eps[z]);
        }
        out
    }

    /// `Ψ[z₁][z₂] = Tr(A_{z₂}A_{z₁} + T_{z₂}T_{z₁})` on the block `r`.
    pub fn psi<S: Scalar>(eps: &[f64], a: &[Mat<S>], t: &[Mat<S>], r: Range<usize>) -> Mat<S> {
        let d = eps.len();
        let mut out = zeros2(d);
        for z1 in r.clone() {
            for z2 in r.clone() {
                out[z1][z2] =
                    trace(eps, &compose(eps, &a[z2], &a[z1])) + trace(eps, &compose(eps, &t[z2], &t[z1]));
            }
        }
        out
    }

    /// `Φ[x][y] = H_x H_y − Σ_{a,b∈r} ε_a ε_b P_abx P_aby` (pass `None` to drop the first term).
    pub fn phi<S: Scalar>(eps: &[f64], p: &T3<S>, mean: Option<&[S]>, r: Range<usize>, blk: Range<usize>) -> Mat<S> {
        let d = eps.len();
        let mut out = zeros2(d);
        for x in blk.clone() {
            for y in blk.clone() {
                let mut s = match mean {
                    Some(h) => h[x] * h[y],
                    None => S::zero(),
                };
                for a in r.clone() {
                    for b in r.clone() {
                        s -= (p[a][b][x] * p[a][b][y]).scale(eps[a] * eps[b]);
                    }
                }
                out[x][y] = s;
            }
        }
        out
    }

    /// `⟨P, V⟩[x][y] = Σ_γ ε_γ P[x][y][γ] V_γ`
    pub fn contract<S: Scalar>(eps: &[f64], p: &T3<S>, v: &[S]) -> Mat<S> {
        p.iter()
            .map(|r| r.iter().map(|c| (0..eps.len()).fold(S::zero(), |s, k| s + (c[k] * v[k]).scale(eps[k]))).collect())
            .collect()
    }

    /// `Λ_{P,Q}[x][y] = Σ_{λ,μ} ε_λ ε_μ (P_λμx Q_λμy + Q_λμx P_λμy)`
    pub fn lambda<S: Scalar>(eps: &[f64], p: &T3<S>, q: &T3<S>) -> Mat<S> {
        let d = eps.len();
        let mut out = zeros2(d);
        for x in 0..d {
            for y in 0..d {
                let mut s = S::zero();
                for l in 0..d {
                    for m in 0..d {
                        s += (p[l][m][x] * q[l][m][y] + q[l][m][x] * p[l][m][y]).scale(eps[l] * eps[m]);
                    }
                }
                out[x][y] = s;
            }
        }
        out
    }

    /// Vector `Σ_{λ,μ} ε_λ ε_μ B_λμ P(e_λ, e_μ)`, lowered.
    pub fn pair_vec<S: Scalar>(eps: &[f64], p: &T3<S>, b: &Mat<S>) -> Vec<S> {
        let d = eps.len();
        (0..d)
            .map(|c| {
                let mut s = S::zero();
                for l in 0..d {
                    for m in 0..d {
                        s += (b[l][m] * p[l][m][c]).scale(eps[l] * eps[m]);
                    }
                }
                s
            })
            .collect()
    }

    /// `Σ ε_λ ε_μ ε_ν P²`
    pub fn norm3<S: Scalar>(eps: &[f64], p: &T3<S>) -> S {
        let d = eps.len();
        let mut s = S::zero();
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    s += (p[a][b][c] * p[a][b][c]).scale(eps[a] * eps[b] * eps[c]);
                }
            }
        }
        s
    }

    /// `⟨A, B⟩ = Σ ε_x ε_y A_xy B_xy`
    pub fn pair2<S: Scalar>(eps: &[f64], a: &Mat<S>, b: &Mat<S>) -> S {
        let d = eps.len();
        let mut s = S::zero();
        for x in 0..d {
            for y in 0..d {
                s += (a[x][y] * b[x][y]).scale(eps[x] * eps[y]);
            }
        }
        s
    }

    pub fn gnorm<S: Scalar>(eps: &[f64], v: &[S]) -> S {
        v.iter().zip(eps).fold(S::zero(), |s, (a, e)| s + (*a * *a).scale(*e))
    }

    /// Lowered metric restricted to a block: `ε_x δ_xy` for `x ∈ r`.
    pub fn metric_block(eps: &[f64], r: Range<usize>) -> Mat<f64> {
        let d = eps.len();
        let mut out = vec![vec![0.0; d]; d];
        for x in r {
            out[x][x] = eps[x];
        }
        out
    }

    /// Keep only the `rows × cols` block and its transpose.
    pub fn restrict<S: Scalar>(a: &Mat<S>, rows: Range<usize>, cols: Range<usize>) -> Mat<S> {
        let d = a.len();
        let mut out = zeros2(d);
        for x in 0..d {
            for y in 0..d {
                if (rows.contains(&x) && cols.contains(&y)) || (rows.contains(&y) && cols.contains(&x)) {
                    out[x][y] = a[x][y];
                }
            }
        }
        out
    }

    /// Mixed tensor built from a (1,2) tensor `P` of the inner side:
    /// `M(e_a, e_z) = M(e_z, e_a) = ½ P_z e_a` where `g(P_z e_a, e_c) = P[a][c][z]`.
    pub fn mixed<S: Scalar>(p: &T3<S>, inner: Range<usize>, outer: Range<usize>) -> T3<S> {
        let d = p.len();
        let mut out = zeros3(d);
        for a in inner.clone() {
            for z in outer.clone() {
                for c in inner.clone() {
                    let v = p[a][c][z].scale(0.5);
                    out[a][z][c] = v;
                    out[z][a][c] = v;
                }
            }
        }
        out
    }

    pub fn values2<S: Scalar>(a: &Mat<S>) -> Mat<f64> {
        a.iter().map(|r| r.iter().map(|x| x.value()).collect()).collect()
    }

    pub fn values3<S: Scalar>(a: &T3<S>) -> T3<f64> {
        a.iter().map(values2).collect()
    }

    pub fn values1<S: Scalar>(a: &[S]) -> Vec<f64> {
        a.iter().map(|x| x.value()).collect()
    }
}

use std::ops::Range;

use serde::Serialize;

use crate::jets::{seed_dual, Dual, Scalar};
use crate::linalg::{max_abs, Mat};
use crate::structure::Frame;

use super::curvature::{frame_ricci, frame_riemann, riemann_coords, T4};
use super::local::algebra::{self as alg, values1, values2, values3};
use super::{GeomError, Local, Model, Side, T3};

type D1 = Dual<f64>;

/// A (0,2) tensor in the adapted frame with its block structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor2 {
    pub m: Mat<f64>,
    pub n: usize,
}

impl Tensor2 {
    pub fn new(m: Mat<f64>, n: usize) -> Self {
        Tensor2 { m, n }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    fn block(&self, rows: Range<usize>, cols: Range<usize>) -> Mat<f64> {
        alg::restrict(&self.m, rows, cols)
    }

    /// D̃ × D̃ block (other entries zero).
    pub fn top(&self) -> Mat<f64> {
        self.block(0..self.n, 0..self.n)
    }

    /// D̃ × 𝒟 block and its transpose.
    pub fn mixed(&self) -> Mat<f64> {
        self.block(0..self.n, self.n..self.dim())
    }

    /// 𝒟 × 𝒟 block.
    pub fn perp(&self) -> Mat<f64> {
        self.block(self.n..self.dim(), self.n..self.dim())
    }

    pub fn norm(&self) -> f64 {
        max_abs(&self.m)
    }
}

/// Covariant derivatives of frame-lowered tensors given their coordinate jets.
#[derive(Debug, Clone)]
pub struct Conn {
    pub e: Mat<f64>,
    pub eps: Vec<f64>,
    pub w: T3<f64>,
}

impl Conn {
    /// `e_μ(f)`
    pub fn ef(&self, mu: usize, f: &D1) -> f64 {
        self.e[mu].iter().enumerate().map(|(k, c)| c * f.d[k]).sum()
    }

    /// `[μ][β] = (∇_{e_μ} V)_β`
    pub fn nabla1(&self, v: &[D1]) -> Mat<f64> {
        let d = self.eps.len();
        (0..d)
            .map(|mu| {
                (0..d)
                    .map(|b| {
                        let mut s = self.ef(mu, &v[b]);
                        for r in 0..d {
                            s -= self.eps[r] * self.w[mu][b][r] * v[r].v;
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    }

    /// `[μ][x][y] = (∇_{e_μ} F)_{xy}`
    pub fn nabla2(&self, f: &Mat<D1>) -> T3<f64> {
        let d = self.eps.len();
        let mut out = alg::zeros3(d);
        for mu in 0..d {
            for x in 0..d {
                for y in 0..d {
                    let mut s = self.ef(mu, &f[x][y]);
                    for r in 0..d {
                        s -= self.eps[r] * (self.w[mu][x][r] * f[r][y].v + self.w[mu][y][r] * f[x][r].v);
                    }
                    out[mu][x][y] = s;
                }
            }
        }
        out
    }

    /// `(∇_{e_μ} P)_{xyz}` for a single direction.
    pub fn nabla3_at(&self, p: &T3<D1>, mu: usize, x: usize, y: usize, z: usize) -> f64 {
        let d = self.eps.len();
        let mut s = self.ef(mu, &p[x][y][z]);
        for r in 0..d {
            s -= self.eps[r]
                * (self.w[mu][x][r] * p[r][y][z].v + self.w[mu][y][r] * p[x][r][z].v + self.w[mu][z][r] * p[x][y][r].v);
        }
        s
    }

    pub fn div1(&self, v: &[D1], r: Range<usize>) -> f64 {
        let nv = self.nabla1(v);
        r.map(|m| self.eps[m] * nv[m][m]).sum()
    }

    /// `[x][y] = Σ_{μ∈r} ε_μ (∇_μ P)(e_x, e_y, e_μ)`
    pub fn div3(&self, p: &T3<D1>, r: Range<usize>) -> Mat<f64> {
        let d = self.eps.len();
        let mut out = vec![vec![0.0; d]; d];
        for (x, row) in out.iter_mut().enumerate() {
            for (y, v) in row.iter_mut().enumerate() {
                *v = r.clone().map(|m| self.eps[m] * self.nabla3_at(p, m, x, y, m)).sum();
            }
        }
        out
    }

    /// Divergence of an operator over a block: `[x] = Σ_{μ∈r} ε_μ g((∇_μ F) e_x, e_μ)`.
    pub fn div_op(&self, f: &Mat<D1>, r: Range<usize>) -> Vec<f64> {
        let nf = self.nabla2(f);
        let d = self.eps.len();
        (0..d).map(|x| r.clone().map(|m| self.eps[m] * nf[m][x][m]).sum()).collect()
    }

    /// `Def Z[x][y] = ½((∇_x Z)_y + (∇_y Z)_x)` on the block `r`.
    pub fn deformation(&self, z: &[D1], r: Range<usize>) -> Mat<f64> {
        let nz = self.nabla1(z);
        let d = self.eps.len();
        let mut out = vec![vec![0.0; d]; d];
        for x in r.clone() {
            for y in r.clone() {
                out[x][y] = 0.5 * (nz[x][y] + nz[y][x]);
            }
        }
        out
    }
}

/// Everything attached to one of the two distributions.
#[derive(Debug, Clone)]
pub struct SideData {
    pub side: Side,
    pub inner: Range<usize>,
    pub outer: Range<usize>,
    pub h_d: T3<D1>,
    pub t_d: T3<D1>,
    pub mean_d: Vec<D1>,
    pub h: T3<f64>,
    pub t: T3<f64>,
    pub mean: Vec<f64>,
    /// Weingarten operators `A_z` indexed by the full frame (zero off `outer`).
    pub a_ops: Vec<Mat<f64>>,
    pub t_ops: Vec<Mat<f64>>,
    pub casorati: Mat<f64>,
    pub tcal: Mat<f64>,
    pub kcal: Mat<f64>,
    pub psi: Mat<f64>,
    pub phi_h: Mat<f64>,
    pub phi_t: Mat<f64>,
    pub alpha: T3<f64>,
    pub theta: T3<f64>,
    pub alpha_d: T3<D1>,
    pub theta_d: T3<D1>,
    pub hh: f64,
    pub tt: f64,
    pub mean2: f64,
    pub s_ex: f64,
    /// `τ_k = Tr A_N^k`, present when the normal bundle is a line.
    pub tau: Option<[f64; 2]>,
    pub nabla_mean: Mat<f64>,
    pub div_mean: f64,
    pub def_mean: Mat<f64>,
    pub div_h: Mat<f64>,
    pub div_alpha: Mat<f64>,
    pub div_theta: Mat<f64>,
    /// Partial Ricci tensor on the outer block.
    pub ricci: Mat<f64>,
}

impl SideData {
    fn new(loc: &Local<D1>, conn: &Conn, rm: &T4, side: Side) -> Self {
        let eps = &loc.eps;
        let d = eps.len();
        let inner = loc.inner(side);
        let outer = loc.outer(side);
        let h_d = loc.sff(side);
        let t_d = loc.integ(side);
        let mean_d = loc.mean(side);
        let h = values3(&h_d);
        let t = values3(&t_d);
        let mean = values1(&mean_d);
        let a_ops: Vec<Mat<f64>> = (0..d).map(|z| alg::slice(&h, z)).collect();
        let t_ops: Vec<Mat<f64>> = (0..d).map(|z| alg::slice(&t, z)).collect();
        let casorati = alg::sum_products(eps, &a_ops, &a_ops, outer.clone());
        let tcal = alg::sum_products(eps, &t_ops, &t_ops, outer.clone());
        let kcal = alg::add(
            &alg::sum_products(eps, &t_ops, &a_ops, outer.clone()),
            &alg::sum_products(eps, &a_ops, &t_ops, outer.clone()),
            -1.0,
        );
        let psi = alg::psi(eps, &a_ops, &t_ops, outer.clone());
        let phi_h = alg::phi(eps, &h, Some(&mean), inner.clone(), outer.clone());
        let phi_t = alg::phi(eps, &t, None, inner.clone(), outer.clone());
        let alpha_d = alg::mixed(&h_d, inner.clone(), outer.clone());
        let theta_d = alg::mixed(&t_d, inner.clone(), outer.clone());
        let hh = alg::norm3(eps, &h);
        let tt = alg::norm3(eps, &t);
        let mean2 = alg::gnorm(eps, &mean);
        let tau = (outer.len() == 1).then(|| {
            let a = &a_ops[outer.start];
            let a2 = alg::compose(eps, a, a);
            [alg::trace(eps, a), alg::trace(eps, &a2)]
        });
        let nabla_mean = conn.nabla1(&mean_d);
        let div_mean = (0..d).map(|m| eps[m] * nabla_mean[m][m]).sum();
        let def_mean = conn.deformation(&mean_d, outer.clone());
        let div_h = conn.div3(&h_d, 0..d);
        let div_alpha = conn.div3(&alpha_d, 0..d);
        let div_theta = conn.div3(&theta_d, 0..d);
        let mut ricci = vec![vec![0.0; d]; d];
        for x in outer.clone() {
            for y in outer.clone() {
                ricci[x][y] = inner.clone().map(|a| eps[a] * rm[a][x][a][y]).sum();
            }
        }
        SideData {
            side,
            inner,
            outer,
            alpha: values3(&alpha_d),
            theta: values3(&theta_d),
            h_d,
            t_d,
            mean_d,
            h,
            t,
            mean,
            a_ops,
            t_ops,
            casorati,
            tcal,
            kcal,
            psi,
            phi_h,
            phi_t,
            alpha_d,
            theta_d,
            hh,
            tt,
            mean2,
            s_ex: mean2 - hh,
            tau,
            nabla_mean,
            div_mean,
            def_mean,
            div_h,
            div_alpha,
            div_theta,
            ricci,
        }
    }

    /// Lowered metric on the outer block.
    pub fn g_outer(&self, eps: &[f64]) -> Mat<f64> {
        alg::metric_block(eps, self.outer.clone())
    }
}

/// Full pointwise geometry with one derivative of every frame quantity.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub x: Vec<f64>,
    pub n: usize,
    pub loc: Local<D1>,
    pub conn: Conn,
    pub g: Mat<f64>,
    /// `gamma[ν][μ][ρ] = Γ^ν_{μρ}`
    pub gamma: Vec<Mat<f64>>,
    /// Paper-convention curvature in the frame, `g(R(e_α,e_β)e_γ, e_δ)`.
    pub rm: T4,
    /// Standard-convention coordinate curvature `R^ρ_{σμν}`.
    pub r_std: T4,
    /// Ricci tensor in the frame.
    pub ric: Mat<f64>,
    pub top: SideData,
    pub perp: SideData,
}

impl Geometry {
    pub fn new<M: Model>(m: &M, x: &[f64]) -> Result<Self, GeomError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::Domain { point: x.to_vec() });
        }
        let loc = Local::new(m, &seed_dual(x))?;
        let e = values2(&loc.e);
        let conn = Conn { e: e.clone(), eps: loc.eps.clone(), w: values3(&loc.w) };
        let g = values2(&loc.g);
        let gamma: Vec<Mat<f64>> = loc.gamma.iter().map(values2).collect();
        let r_std = riemann_coords(&loc.gamma);
        let rm = frame_riemann(&g, &e, &r_std);
        let ric = frame_ricci(&e, &r_std);
        let top = SideData::new(&loc, &conn, &rm, Side::Top);
        let perp = SideData::new(&loc, &conn, &rm, Side::Perp);
        Ok(Geometry { x: x.to_vec(), n: loc.n, loc, conn, g, gamma, rm, r_std, ric, top, perp })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn p(&self) -> usize {
        self.dim() - self.n
    }

    pub fn eps(&self) -> &[f64] {
        &self.conn.eps
    }

    pub fn frame(&self) -> Frame<f64> {
        Frame { e: self.conn.e.clone(), eps: self.conn.eps.clone(), n: self.n }
    }

    pub fn side(&self, s: Side) -> &SideData {
        match s {
            Side::Top => &self.top,
            Side::Perp => &self.perp,
        }
    }

    pub fn smix(&self) -> f64 {
        let eps = self.eps();
        let mut s = 0.0;
        for a in 0..self.n {
            for i in self.n..self.dim() {
                s += eps[a] * eps[i] * self.rm[a][i][a][i];
            }
        }
        s
    }

    /// `Ric(N, N)`, only for a line field D̃.
    pub fn ric_n(&self) -> Option<f64> {
        (self.n == 1).then(|| self.ric[0][0])
    }

    /// Jacobi operator `R_N = R(N, ·)N` on 𝒟, for a line field D̃.
    pub fn jacobi_n(&self) -> Option<Mat<f64>> {
        (self.n == 1).then(|| {
            let d = self.dim();
            let mut out = vec![vec![0.0; d]; d];
            for i in 1..d {
                for j in 1..d {
                    out[i][j] = self.rm[0][i][0][j];
                }
            }
            out
        })
    }

    /// The metric-adjusted scalar `S*` of a side: with `s = Top` this is the
    /// constant of the 𝒟-block equation, with `s = Perp` its dual.
    pub fn s_star(&self, s: Side) -> f64 {
        let me = self.side(s);
        let other = self.side(s.other());
        let k = me.outer.len() as f64;
        self.smix() - (2.0 / k) * (me.s_ex + 2.0 * other.tt - me.tt + me.div_mean)
    }

    /// Lowered components of a coordinate vector field given at jet points.
    pub fn lower_field(&self, v: &[D1]) -> Vec<D1> {
        self.loc.lower_vec(v)
    }

    /// Evaluate a coordinate vector field on the jet point and lower it.
    pub fn lower_fn(&self, f: impl Fn(&[D1]) -> Vec<D1>) -> Vec<D1> {
        let xd = seed_dual(&self.x);
        self.lower_field(&f(&xd))
    }

    /// `δ̃_Z(X, Y) = ½ g(∇_X Z, Y)` on the D̃ × 𝒟 block, symmetrized.
    /// Other blocks are left at zero (undefined).
    pub fn delta_tilde(&self, z: &[D1]) -> Mat<f64> {
        let nz = self.conn.nabla1(z);
        let d = self.dim();
        let mut out = vec![vec![0.0; d]; d];
        for a in 0..self.n {
            for i in self.n..d {
                let v = 0.5 * nz[a][i];
                out[a][i] = v;
                out[i][a] = v;
            }
        }
        out
    }

    /// Coordinate divergence `|g|^{-1/2} ∂_μ(|g|^{1/2} X^μ)` of a coordinate field.
    pub fn coord_divergence(&self, x: &[D1]) -> f64 {
        let d = self.dim();
        // ∂_μ ln√|g| = Γ^ν_{νμ}
        (0..d)
            .map(|mu| x[mu].d[mu] + (0..d).map(|nu| self.gamma[nu][nu][mu]).sum::<f64>() * x[mu].v)
            .sum()
    }

    /// Matrix of an operator (given lowered) in a coordinate basis `basis`:
    /// `M[j][i] = g(F b_i, b_j)`.
    pub fn in_basis(&self, f: &Mat<f64>, basis: &[Vec<f64>]) -> Mat<f64> {
        let eps = self.eps();
        let d = self.dim();
        let low: Vec<Vec<f64>> = basis
            .iter()
            .map(|b| (0..d).map(|a| (0..d).map(|k| self.conn.e[a][k] * (0..d).map(|l| self.g[k][l] * b[l]).sum::<f64>()).sum()).collect())
            .collect();
        let k = basis.len();
        let mut out = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += eps[a] * eps[b] * low[i][a] * f[a][b] * low[j][b];
                    }
                }
                out[j][i] = s;
            }
        }
        out
    }

    pub fn bundle(&self, z_for_delta: Option<&[D1]>) -> GeometryBundle {
        let eps = self.eps().to_vec();
        let (t, p) = (&self.top, &self.perp);
        let lam = |a: &T3<f64>, b: &T3<f64>| Tensor2::new(alg::lambda(&eps, a, b), self.n);
        let t2 = |m: &Mat<f64>| Tensor2::new(m.clone(), self.n);
        GeometryBundle {
            dim: self.dim(),
            n: self.n,
            point: self.x.clone(),
            eps: eps.clone(),
            frame: self.conn.e.clone(),
            christoffels: self.gamma.clone(),
            h: t.h.clone(),
            h_tilde: p.h.clone(),
            t: t.t.clone(),
            t_tilde: p.t.clone(),
            mean: t.mean.clone(),
            mean_tilde: p.mean.clone(),
            a_ops: t.outer.clone().map(|i| t.a_ops[i].clone()).collect(),
            t_ops: t.outer.clone().map(|i| t.t_ops[i].clone()).collect(),
            a_tilde_ops: p.outer.clone().map(|i| p.a_ops[i].clone()).collect(),
            t_tilde_ops: p.outer.clone().map(|i| p.t_ops[i].clone()).collect(),
            casorati: t2(&t.casorati),
            tcal: t2(&t.tcal),
            casorati_tilde: t2(&p.casorati),
            tcal_tilde: t2(&p.tcal),
            kcal: t2(&t.kcal),
            kcal_tilde: t2(&p.kcal),
            psi: t2(&t.psi),
            psi_tilde: t2(&p.psi),
            phi_h: t2(&t.phi_h),
            phi_t: t2(&t.phi_t),
            phi_h_tilde: t2(&p.phi_h),
            phi_t_tilde: t2(&p.phi_t),
            lambda_tt: lam(&t.t, &t.t),
            alpha: t.alpha.clone(),
            theta: t.theta.clone(),
            alpha_tilde: p.alpha.clone(),
            theta_tilde: p.theta.clone(),
            delta_tilde: z_for_delta.map(|z| t2(&self.delta_tilde(z))),
            r_d: t2(&t.ricci),
            r_dtilde: t2(&p.ricci),
            s_mix: self.smix(),
            s_ex: t.s_ex,
            s_ex_tilde: p.s_ex,
            hh: t.hh,
            hh_tilde: p.hh,
            tt: t.tt,
            tt_tilde: p.tt,
            mean2: t.mean2,
            mean2_tilde: p.mean2,
            div_mean: t.div_mean,
            div_mean_tilde: p.div_mean,
            tau: t.tau,
            tau_tilde: p.tau,
            ric_n: self.ric_n(),
        }
    }
}

/// Serializable snapshot of the pointwise geometry.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryBundle {
    pub dim: usize,
    pub n: usize,
    pub point: Vec<f64>,
    pub eps: Vec<f64>,
    pub frame: Mat<f64>,
    pub christoffels: Vec<Mat<f64>>,
    pub h: T3<f64>,
    pub h_tilde: T3<f64>,
    pub t: T3<f64>,
    pub t_tilde: T3<f64>,
    pub mean: Vec<f64>,
    pub mean_tilde: Vec<f64>,
    pub a_ops: Vec<Mat<f64>>,
    pub t_ops: Vec<Mat<f64>>,
    pub a_tilde_ops: Vec<Mat<f64>>,
    pub t_tilde_ops: Vec<Mat<f64>>,
    pub casorati: Tensor2,
    pub tcal: Tensor2,
    pub casorati_tilde: Tensor2,
    pub tcal_tilde: Tensor2,
    pub kcal: Tensor2,
    pub kcal_tilde: Tensor2,
    pub psi: Tensor2,
    pub psi_tilde: Tensor2,
    pub phi_h: Tensor2,
    pub phi_t: Tensor2,
    pub phi_h_tilde: Tensor2,
    pub phi_t_tilde: Tensor2,
    pub lambda_tt: Tensor2,
    pub alpha: T3<f64>,
    pub theta: T3<f64>,
    pub alpha_tilde: T3<f64>,
    pub theta_tilde: T3<f64>,
    pub delta_tilde: Option<Tensor2>,
    pub r_d: Tensor2,
    pub r_dtilde: Tensor2,
    pub s_mix: f64,
    pub s_ex: f64,
    pub s_ex_tilde: f64,
    pub hh: f64,
    pub hh_tilde: f64,
    pub tt: f64,
    pub tt_tilde: f64,
    pub mean2: f64,
    pub mean2_tilde: f64,
    pub div_mean: f64,
    pub div_mean_tilde: f64,
    pub tau: Option<[f64; 2]>,
    pub tau_tilde: Option<[f64; 2]>,
    pub ric_n: Option<f64>,
}

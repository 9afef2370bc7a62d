//! First variations along metric families `g_t = g + tB`.
//!
//! Left-hand sides are always central differences in `t` of scalars computed
//! from a fresh geometry of `g_t`; right-hand sides are assembled from the
//! `t = 0` geometry and spatial jets of `B`. Integral relations use the
//! quadrature module with the same split.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{parse, Expr, ExprError, Params};
use crate::geometry::identities::Poly;
use crate::geometry::{algebra as alg, CurvatureFast, Deformed, GeomError, Geometry, Model, Side, SymField, T3};
use crate::jets::{seed_dual, Dual, Scalar};
use crate::linalg::{det, inverse, Mat};
use crate::quadrature::{volume, volume_density, QuadratureSpec};
use crate::structure::adapted_frame;

type D1 = Dual<f64>;

/// Central-difference steps in `t`.
pub const FD_STEPS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];
/// Smallest acceptable observed convergence order.
pub const ORDER_MIN: f64 = 1.8;
pub const FORMULA_TOL: f64 = 1e-5;
/// Relative size below which a block of B counts as zero.
pub const CLASS_TOL: f64 = 1e-12;
/// Largest |B| tolerated on the boundary of an integration box.
pub const SUPPORT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariationError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("declared {declared} variation has a nonzero {block} block (size {size:.3e}) at {point:?}")]
    Class { declared: VariationClass, block: &'static str, size: f64, point: Vec<f64> },
    #[error("{what} needs {needed}, got {got}")]
    Mismatch { what: String, needed: String, got: VariationClass },
    #[error("g_t degenerates at t = {t} at {point:?}")]
    Degenerate { t: f64, point: Vec<f64> },
    #[error("variation does not vanish on the boundary of the box (|B| = {leak:.3e})")]
    Support { leak: f64 },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("scaling factor must be positive, got {0}")]
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VariationClass {
    /// Keeps the metric on D̃.
    #[serde(rename = "g-perp")]
    Perp,
    /// Changes the metric on D̃ only.
    #[serde(rename = "g-top")]
    Top,
    #[serde(rename = "general")]
    General,
}

impl VariationClass {
    pub const ALL: [VariationClass; 3] = [VariationClass::Perp, VariationClass::Top, VariationClass::General];

    pub fn name(self) -> &'static str {
        match self {
            VariationClass::Perp => "g-perp",
            VariationClass::Top => "g-top",
            VariationClass::General => "general",
        }
    }
}

impl fmt::Display for VariationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariationClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown variation class `{s}` (expected g-perp, g-top or general)"))
    }
}

/// Product of `cos²` windows over a box, raised to `power`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub bbox: Vec<(f64, f64)>,
    pub power: i32,
}

impl Window {
    pub fn new(bbox: &[(f64, f64)]) -> Self {
        Window { bbox: bbox.to_vec(), power: 3 }
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let mut w = S::one();
        for (k, &(a, b)) in self.bbox.iter().enumerate() {
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            let u = (x[k] - S::cst(c)).scale(1.0 / r);
            if u.value().abs() >= 1.0 {
                return S::zero();
            }
            let cs = u.scale(0.5 * PI).cos();
            w *= (cs * cs).powi(self.power);
        }
        w
    }
}

/// `P = V (VᵀgV)⁻¹ Vᵀg`, the g-orthogonal projector onto span V, `P[i][j]`
/// acting on coordinate vectors.
pub fn projector<S: Scalar>(g: &Mat<S>, span: &[Vec<S>]) -> Option<Mat<S>> {
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
    let mut p = vec![vec![S::zero(); d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut s = S::zero();
            for a in 0..n {
                for b in 0..n {
                    s += span[a][i] * ginv[a][b] * gv[b][j];
                }
            }
            p[i][j] = s;
        }
    }
    Some(p)
}

/// Keep the part of `c` that belongs to `class`: `PᵀCP` for g⊤, `C − PᵀCP` for g⊥.
pub fn restrict_class<S: Scalar>(c: Mat<S>, class: VariationClass, g: &Mat<S>, span: &[Vec<S>]) -> Option<Mat<S>> {
    if class == VariationClass::General {
        return Some(c);
    }
    let p = projector(g, span)?;
    let d = g.len();
    let mut cp = vec![vec![S::zero(); d]; d];
    for i in 0..d {
        for k in 0..d {
            cp[i][k] = (0..d).fold(S::zero(), |s, l| s + c[i][l] * p[l][k]);
        }
    }
    let mut top = vec![vec![S::zero(); d]; d];
    for j in 0..d {
        for k in 0..d {
            top[j][k] = (0..d).fold(S::zero(), |s, i| s + p[i][j] * cp[i][k]);
        }
    }
    Some(match class {
        VariationClass::Top => top,
        _ => (0..d).map(|j| (0..d).map(|k| c[j][k] - top[j][k]).collect()).collect(),
    })
}

/// Seeded random variation: window times quadratic polynomial entries,
/// projected to a class.
#[derive(Debug, Clone)]
pub struct RandomVariation {
    pub class: VariationClass,
    pub seed: u64,
    pub window: Window,
    coeffs: Vec<Vec<Poly>>,
}

impl RandomVariation {
    pub fn new(class: VariationClass, bbox: &[(f64, f64)], seed: u64, amp: f64) -> Self {
        let d = bbox.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..d)
            .map(|i| (0..d).map(|j| if j >= i { Poly::random(&mut rng, d, amp) } else { Poly::random(&mut rng, d, 0.0) }).collect())
            .collect();
        RandomVariation { class, seed, window: Window::new(bbox), coeffs }
    }

    /// A random variation windowed on `bbox` shrunk towards its centre by `shrink`.
    pub fn inside(class: VariationClass, bbox: &[(f64, f64)], shrink: f64, seed: u64, amp: f64) -> Self {
        let b: Vec<(f64, f64)> = bbox
            .iter()
            .map(|&(a, b)| {
                let (c, r) = (0.5 * (a + b), 0.5 * (b - a) * shrink);
                (c - r, c + r)
            })
            .collect();
        Self::new(class, &b, seed, amp)
    }
}

impl SymField for RandomVariation {
    fn eval<S: Scalar>(&self, x: &[S], g: &Mat<S>, span: &[Vec<S>]) -> Result<Mat<S>, GeomError> {
        let d = x.len();
        let w = self.window.eval(x);
        let mut c = vec![vec![S::zero(); d]; d];
        if w.value() != 0.0 {
            for i in 0..d {
                for j in i..d {
                    let v = self.coeffs[i][j].eval(x) * w;
                    c[i][j] = v;
                    c[j][i] = v;
                }
            }
        }
        let pt: Vec<f64> = x.iter().map(|v| v.value()).collect();
        restrict_class(c, self.class, g, span).ok_or_else(|| GeomError::singular("D̃ Gram matrix", &pt))
    }
}

/// Variation given by expressions (upper triangle) and an optional cutoff.
///
/// Text format, one key per line:
///
/// ```text
/// class = g-perp
/// bump = cos(x0)^6 * cos(x1)^6
/// b 1 1 = x0*x2
/// b 1 2 = 0.5
/// ```
#[derive(Debug, Clone)]
pub struct ExprVariation {
    pub dim: usize,
    pub declared: VariationClass,
    pub bump: Option<Expr>,
    pub params: Params,
    entries: Vec<Vec<Expr>>,
}

impl ExprVariation {
    pub fn new(
        dim: usize,
        params: &Params,
        declared: VariationClass,
        entries: &[(usize, usize, &str)],
        bump: Option<&str>,
    ) -> Result<Self, VariationError> {
        let names: BTreeSet<String> = params.keys().cloned().collect();
        let mut m = vec![vec![Expr::constant(0.0); dim]; dim];
        for (k, &(i, j, text)) in entries.iter().enumerate() {
            if i >= dim || j >= dim || j < i {
                return Err(VariationError::Format { line: k + 1, msg: format!("entry ({i},{j}) is not in the upper triangle") });
            }
            let e = parse(text, dim, &names)?;
            m[i][j] = e.clone();
            m[j][i] = e;
        }
        let bump = bump.map(|b| parse(b, dim, &names)).transpose()?;
        Ok(ExprVariation { dim, declared, bump, params: params.clone(), entries: m })
    }

    pub fn load(text: &str, dim: usize, params: &Params) -> Result<Self, VariationError> {
        let mut declared = VariationClass::General;
        let mut bump = None;
        let mut entries: Vec<(usize, usize, String)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |msg: String| VariationError::Format { line: k + 1, msg };
            let (key, val) = line.split_once('=').ok_or_else(|| fail("expected `key = value`".into()))?;
            let words: Vec<&str> = key.split_whitespace().collect();
            match words.as_slice() {
                ["class"] => declared = val.trim().parse().map_err(fail)?,
                ["bump"] => bump = Some(val.trim().to_string()),
                ["b", i, j] => {
                    let i: usize = i.parse().map_err(|_| fail(format!("bad index `{i}`")))?;
                    let j: usize = j.parse().map_err(|_| fail(format!("bad index `{j}`")))?;
                    entries.push((i, j, val.trim().to_string()));
                }
                _ => return Err(fail(format!("unknown key `{}`", key.trim()))),
            }
        }
        let refs: Vec<(usize, usize, &str)> = entries.iter().map(|(i, j, s)| (*i, *j, s.as_str())).collect();
        Self::new(dim, params, declared, &refs, bump.as_deref())
    }
}

impl SymField for ExprVariation {
    fn eval<S: Scalar>(&self, x: &[S], _g: &Mat<S>, _span: &[Vec<S>]) -> Result<Mat<S>, GeomError> {
        let w = match &self.bump {
            Some(b) => b.eval(x, &self.params)?,
            None => S::one(),
        };
        let mut out = vec![vec![S::zero(); self.dim]; self.dim];
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.entries[i][j].eval(x, &self.params)? * w;
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        Ok(out)
    }
}

/// `B(e_a, e_c)` for coordinate `b` and frame vectors `e`.
fn frame_form(e: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let d = e.len();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|c| (0..d).map(|k| (0..d).map(|l| e[a][k] * b[k][l] * e[c][l]).sum::<f64>()).sum())
                .collect()
        })
        .collect()
}

/// Sizes of the three blocks of B in an adapted frame of the base metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockSizes {
    pub top: f64,
    pub mixed: f64,
    pub perp: f64,
}

impl BlockSizes {
    fn scale(&self) -> f64 {
        self.top.max(self.mixed).max(self.perp).max(1.0)
    }
}

pub fn frame_blocks<M: Model, B: SymField>(m: &M, field: &B, x: &[f64]) -> Result<BlockSizes, VariationError> {
    let g = m.metric(x)?;
    let span = m.span(x)?;
    let fr = adapted_frame(&g, &span).map_err(|w| GeomError::singular(w, x))?;
    let bf = frame_form(&fr.e, &field.eval(x, &g, &span)?);
    let n = m.n();
    let mut s = BlockSizes { top: 0.0, mixed: 0.0, perp: 0.0 };
    for (a, row) in bf.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let slot = match (a < n, c < n) {
                (true, true) => &mut s.top,
                (false, false) => &mut s.perp,
                _ => &mut s.mixed,
            };
            *slot = slot.max(v.abs());
        }
    }
    Ok(s)
}

fn check_declared(sizes: &BlockSizes, declared: VariationClass, x: &[f64]) -> Result<(), VariationError> {
    let tol = CLASS_TOL * sizes.scale();
    let bad = |block, size| Err(VariationError::Class { declared, block, size, point: x.to_vec() });
    match declared {
        VariationClass::Perp if sizes.top > tol => bad("D̃×D̃", sizes.top),
        VariationClass::Top if sizes.mixed > tol => bad("D̃×𝒟", sizes.mixed),
        VariationClass::Top if sizes.perp > tol => bad("𝒟×𝒟", sizes.perp),
        _ => Ok(()),
    }
}

/// Class of B from its frame blocks at `points`; a declared class is validated.
pub fn classify<M: Model, B: SymField>(
    m: &M,
    field: &B,
    points: &[Vec<f64>],
    declared: Option<VariationClass>,
) -> Result<VariationClass, VariationError> {
    let (mut top, mut rest) = (true, true);
    for x in points {
        let s = frame_blocks(m, field, x)?;
        if let Some(c) = declared {
            check_declared(&s, c, x)?;
        }
        let tol = CLASS_TOL * s.scale();
        top &= s.top <= tol;
        rest &= s.mixed <= tol && s.perp <= tol;
    }
    Ok(declared.unwrap_or(if top {
        VariationClass::Perp
    } else if rest {
        VariationClass::Top
    } else {
        VariationClass::General
    }))
}

/// Largest `t` in `1, ½, ¼, …` with `|det g_s| ≥ ½|det g|` (same sign) for
/// all `|s| ≤ t` on the sample points.
pub fn t_max<M: Model, B: SymField>(m: &M, field: &B, points: &[Vec<f64>]) -> Result<f64, VariationError> {
    let mut data = Vec::new();
    for x in points {
        let g = m.metric(x)?;
        let b = field.eval(x, &g, &m.span(x)?)?;
        data.push((det(&g), g, b));
    }
    let ok = |t: f64| {
        data.iter().all(|(d0, g, b)| {
            (1..=8).flat_map(|k| [k as f64, -(k as f64)]).all(|k| {
                let s = t * k / 8.0;
                let gs: Mat<f64> = g.iter().zip(b).map(|(r, q)| r.iter().zip(q).map(|(u, v)| u + s * v).collect()).collect();
                let ds = det(&gs);
                ds * d0.signum() >= 0.5 * d0.abs()
            })
        })
    };
    let mut t = 1.0;
    while t > 1e-8 {
        if ok(t) {
            return Ok(t);
        }
        t *= 0.5;
    }
    Err(VariationError::Degenerate { t, point: points.first().cloned().unwrap_or_default() })
}

/// Frame-independent scalars whose first variations are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    /// `⟨h̃,h̃⟩`, second fundamental form of 𝒟.
    SffNormD,
    /// `g(H̃,H̃)`.
    MeanNormD,
    /// `⟨h,h⟩`, second fundamental form of D̃.
    SffNormDtilde,
    MeanNormDtilde,
    /// `⟨T̃,T̃⟩`, integrability tensor of 𝒟.
    TwistNormD,
    TwistNormDtilde,
    /// `S̃_ex = g(H̃,H̃) − ⟨h̃,h̃⟩`.
    ExtrinsicD,
    ExtrinsicDtilde,
}

impl Invariant {
    pub const ALL: [Invariant; 8] = [
        Invariant::SffNormD,
        Invariant::MeanNormD,
        Invariant::SffNormDtilde,
        Invariant::MeanNormDtilde,
        Invariant::TwistNormD,
        Invariant::TwistNormDtilde,
        Invariant::ExtrinsicD,
        Invariant::ExtrinsicDtilde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Invariant::SffNormD => "sff_norm_d",
            Invariant::MeanNormD => "mean_norm_d",
            Invariant::SffNormDtilde => "sff_norm_dtilde",
            Invariant::MeanNormDtilde => "mean_norm_dtilde",
            Invariant::TwistNormD => "twist_norm_d",
            Invariant::TwistNormDtilde => "twist_norm_dtilde",
            Invariant::ExtrinsicD => "extrinsic_d",
            Invariant::ExtrinsicDtilde => "extrinsic_dtilde",
        }
    }

    pub fn value(self, geo: &Geometry) -> f64 {
        let (t, p) = (&geo.top, &geo.perp);
        match self {
            Invariant::SffNormD => p.hh,
            Invariant::MeanNormD => p.mean2,
            Invariant::SffNormDtilde => t.hh,
            Invariant::MeanNormDtilde => t.mean2,
            Invariant::TwistNormD => p.tt,
            Invariant::TwistNormDtilde => t.tt,
            Invariant::ExtrinsicD => p.s_ex,
            Invariant::ExtrinsicDtilde => t.s_ex,
        }
    }
}

/// A first-variation formula: an invariant under a family class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Formula {
    pub invariant: Invariant,
    pub family: VariationClass,
}

impl Formula {
    /// The fourteen formulas: eight for g⊥ families (six invariants and the
    /// two extrinsic combinations), six for g⊤ families.
    pub fn listed() -> Vec<Formula> {
        let mut out: Vec<Formula> = Invariant::ALL.iter().map(|&invariant| Formula { invariant, family: VariationClass::Perp }).collect();
        out.extend(Invariant::ALL[..6].iter().map(|&invariant| Formula { invariant, family: VariationClass::Top }));
        out
    }

    pub fn id(&self) -> String {
        format!("{}/{}", self.family, self.invariant.name())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Formula {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (fam, inv) = s.split_once('/').ok_or_else(|| format!("formula id `{s}` is not `class/invariant`"))?;
        let family: VariationClass = fam.parse()?;
        let invariant = Invariant::ALL
            .into_iter()
            .find(|i| i.name() == inv)
            .ok_or_else(|| format!("unknown invariant `{inv}`"))?;
        if family == VariationClass::General {
            return Err("general variations are checked through the sum rule".into());
        }
        Ok(Formula { invariant, family })
    }
}

/// Frame components `B(e_a, e_c)` of the variation, carrying first derivatives.
pub fn frame_variation<M: Model, B: SymField>(geo: &Geometry, m: &M, field: &B) -> Result<Mat<D1>, VariationError> {
    let xd = seed_dual(&geo.x);
    let g = m.metric(&xd)?;
    let span = m.span(&xd)?;
    Ok(geo.loc.lower_form(&field.eval(&xd, &g, &span)?))
}

/// Keep only the frame block(s) selected by `top` (D̃×D̃) or its complement.
fn split_blocks(b: &Mat<D1>, n: usize, top: bool) -> Mat<D1> {
    b.iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .enumerate()
                .map(|(c, v)| if (a < n && c < n) == top { *v } else { D1::constant(0.0) })
                .collect()
        })
        .collect()
}

/// Right-hand side of a first-variation formula at `t = 0`.
pub fn formula_rhs(geo: &Geometry, b: &Mat<D1>, f: Formula) -> f64 {
    let eps = geo.eps();
    let d = geo.dim();
    let n = geo.n;
    let (t, p) = (&geo.top, &geo.perp);
    let bf = alg::values2(b);
    let pair = |m: &Mat<f64>| alg::pair2(eps, m, &bf);
    let div = |v: Vec<D1>| geo.conn.div1(&v, 0..d);
    let pv = |q: &T3<D1>| div(alg::pair_vec(eps, q, b));
    let bhh = |h: &[f64]| -> f64 {
        let mut s = 0.0;
        for x in 0..d {
            for y in 0..d {
                s += eps[x] * eps[y] * h[x] * h[y] * bf[x][y];
            }
        }
        s
    };
    let trace_on = |r: std::ops::Range<usize>| -> D1 { r.fold(D1::constant(0.0), |s, i| s + b[i][i].scale(eps[i])) };
    let scale_vec = |k: D1, v: &[D1]| -> Vec<D1> { v.iter().map(|x| *x * k).collect() };
    let mixed = |m: &Mat<f64>| alg::restrict(m, 0..n, n..d);
    let add = |a: &Mat<f64>, c: &Mat<f64>, k: f64| alg::add(a, c, k);

    use Invariant as I;
    use VariationClass as C;
    let go = |inv: Invariant| formula_rhs(geo, b, Formula { invariant: inv, family: f.family });
    match (f.family, f.invariant) {
        (C::Perp, I::SffNormD) => {
            let m = add(&add(&p.div_h, &alg::lambda(eps, &p.alpha, &t.theta), -4.0), &p.kcal, 1.0);
            pair(&m) - pv(&p.h_d)
        }
        (C::Perp, I::MeanNormD) => {
            let m = add(&alg::scaled(&alg::metric_block(eps, n..d), p.div_mean), &alg::contract(eps, &t.theta, &p.mean), 4.0);
            pair(&m) - div(scale_vec(trace_on(n..d), &p.mean_d))
        }
        (C::Perp, I::SffNormDtilde) => {
            let aa = alg::add3(&p.alpha, &p.theta, 1.0);
            let m = add(&mixed(&t.div_alpha), &alg::lambda(eps, &t.alpha, &aa), 1.0);
            2.0 * pv(&t.alpha_d) - 2.0 * pair(&m) + pair(&t.phi_h) - bhh(&t.mean)
        }
        (C::Perp, I::MeanNormDtilde) => {
            let h = &t.mean;
            let sym: Mat<f64> = (0..d).map(|x| (0..d).map(|y| 0.5 * (h[x] * p.mean[y] + h[y] * p.mean[x])).collect()).collect();
            let m = add(
                &add(&alg::contract(eps, &alg::add3(&p.theta, &p.alpha, -1.0), h), &sym, 1.0),
                &geo.delta_tilde(&t.mean_d),
                -1.0,
            );
            // lowered (B♯H)^⊤: B(H, e_a) on D̃, zero on 𝒟
            let bh: Vec<D1> = (0..d)
                .map(|a| {
                    if a < n {
                        (0..d).fold(D1::constant(0.0), |s, c| s + b[c][a] * t.mean_d[c].scale(eps[c]))
                    } else {
                        D1::constant(0.0)
                    }
                })
                .collect();
            -bhh(h) + 2.0 * pair(&m) + 2.0 * div(bh)
        }
        (C::Perp, I::TwistNormD) => {
            let ta = alg::add3(&t.theta, &t.alpha, -1.0);
            let m = add(&add(&p.tcal, &alg::lambda(eps, &p.theta, &ta), 1.0), &mixed(&p.div_theta), -1.0);
            2.0 * pair(&m) + 2.0 * pv(&p.theta_d)
        }
        (C::Perp, I::TwistNormDtilde) => -pair(&t.phi_t),
        (C::Top, I::SffNormD) => pair(&p.phi_h) - bhh(&p.mean),
        (C::Top, I::MeanNormD) => -bhh(&p.mean),
        (C::Top, I::SffNormDtilde) => pair(&add(&t.div_h, &t.kcal, 1.0)) - pv(&t.h_d),
        (C::Top, I::MeanNormDtilde) => {
            pair(&alg::scaled(&alg::metric_block(eps, 0..n), t.div_mean)) - div(scale_vec(trace_on(0..n), &t.mean_d))
        }
        (C::Top, I::TwistNormD) => -pair(&p.phi_t),
        (C::Top, I::TwistNormDtilde) => 2.0 * pair(&t.tcal),
        (_, I::ExtrinsicD) => go(I::MeanNormD) - go(I::SffNormD),
        (_, I::ExtrinsicDtilde) => go(I::MeanNormDtilde) - go(I::SffNormDtilde),
        (C::General, inv) => {
            let below = split_blocks(b, n, false);
            let above = split_blocks(b, n, true);
            formula_rhs(geo, &below, Formula { invariant: inv, family: C::Perp })
                + formula_rhs(geo, &above, Formula { invariant: inv, family: C::Top })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    /// Observed order from the coarsest and finest step.
    Order(f64),
    /// Finest-step error already at round-off; no order is measurable.
    Exact,
}

impl Convergence {
    pub fn acceptable(&self) -> bool {
        match self {
            Convergence::Order(o) => *o >= ORDER_MIN,
            Convergence::Exact => true,
        }
    }

    /// From errors at steps halving each time; `floor` is the round-off level.
    pub fn from_errors(errors: &[f64], floor: f64) -> Self {
        let (first, last) = (errors[0], errors[errors.len() - 1]);
        if last <= floor {
            return Convergence::Exact;
        }
        Convergence::Order((first / last).log2() / (errors.len() - 1) as f64)
    }
}

impl fmt::Display for Convergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Convergence::Order(o) => write!(f, "order {o:.2}"),
            Convergence::Exact => f.write_str("exact"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationReport {
    pub formula: String,
    pub point: Vec<f64>,
    pub value: f64,
    pub rhs: f64,
    pub steps: Vec<f64>,
    pub derivatives: Vec<f64>,
    pub errors: Vec<f64>,
    pub discrepancy: f64,
    pub convergence: Convergence,
    pub tolerance: f64,
    pub pass: bool,
}

/// Round-off level of a central difference at the finest step of a scalar
/// of size `scale`. Scalars vanishing at `t = 0` still carry about 1e-12;
/// others carry relative errors up to 6e-12 where the pivoting frame
/// switches between `±h`, which the step 2.5e-4 amplifies to 2.5e-8.
fn fd_floor(scale: f64) -> f64 {
    1e-11 + 3e-8 * scale
}

fn report(formula: String, point: &[f64], value: f64, rhs: f64, derivatives: Vec<f64>, tol: f64) -> VariationReport {
    let errors: Vec<f64> = derivatives.iter().map(|v| (v - rhs).abs()).collect();
    let discrepancy = errors[errors.len() - 1];
    let convergence = Convergence::from_errors(&errors, fd_floor(value.abs()));
    VariationReport {
        formula,
        point: point.to_vec(),
        value,
        rhs,
        steps: FD_STEPS.to_vec(),
        derivatives,
        errors,
        discrepancy,
        pass: discrepancy <= tol && convergence.acceptable(),
        convergence,
        tolerance: tol,
    }
}

/// Central differences of every invariant, one entry per step.
fn fd_invariants<M: Model, B: SymField>(m: &M, field: &B, x: &[f64]) -> Result<Vec<[f64; 8]>, VariationError> {
    FD_STEPS
        .iter()
        .map(|&h| {
            let plus = Geometry::new(&Deformed::shifted(m, field, h), x)?;
            let minus = Geometry::new(&Deformed::shifted(m, field, -h), x)?;
            let mut out = [0.0; 8];
            for (k, inv) in Invariant::ALL.iter().enumerate() {
                out[k] = (inv.value(&plus) - inv.value(&minus)) / (2.0 * h);
            }
            Ok(out)
        })
        .collect()
}

fn index_of(inv: Invariant) -> usize {
    Invariant::ALL.iter().position(|&i| i == inv).unwrap_or(0)
}

/// Compare finite differences of the left-hand sides with the assembled
/// right-hand sides at one point.
pub fn verify_first_variation<M: Model, B: SymField>(
    m: &M,
    field: &B,
    x: &[f64],
    formulas: &[Formula],
    tol: f64,
) -> Result<Vec<VariationReport>, VariationError> {
    let sizes = frame_blocks(m, field, x)?;
    for f in formulas {
        if f.family == VariationClass::General {
            return Err(VariationError::Mismatch {
                what: format!("formula {f}"),
                needed: "g-perp or g-top".into(),
                got: f.family,
            });
        }
        check_declared(&sizes, f.family, x)?;
    }
    let geo = Geometry::new(m, x)?;
    let b = frame_variation(&geo, m, field)?;
    let fd = fd_invariants(m, field, x)?;
    Ok(formulas
        .iter()
        .map(|f| {
            let k = index_of(f.invariant);
            report(f.id(), x, f.invariant.value(&geo), formula_rhs(&geo, &b, *f), fd.iter().map(|r| r[k]).collect(), tol)
        })
        .collect())
}

/// For an arbitrary B: the measured derivative of each invariant against the
/// g⊥ formula applied to the D̃×𝒟 and 𝒟×𝒟 blocks plus the g⊤ formula
/// applied to the D̃×D̃ block.
pub fn verify_sum_rule<M: Model, B: SymField>(
    m: &M,
    field: &B,
    x: &[f64],
    tol: f64,
) -> Result<Vec<VariationReport>, VariationError> {
    let geo = Geometry::new(m, x)?;
    let b = frame_variation(&geo, m, field)?;
    let fd = fd_invariants(m, field, x)?;
    Ok(Invariant::ALL
        .iter()
        .enumerate()
        .map(|(k, &inv)| {
            let rhs = formula_rhs(&geo, &b, Formula { invariant: inv, family: VariationClass::General });
            report(format!("general/{}", inv.name()), x, inv.value(&geo), rhs, fd.iter().map(|r| r[k]).collect(), tol)
        })
        .collect())
}

/// Frame path of the adapted-frame ODE at a fixed point.
#[derive(Debug, Clone, Serialize)]
pub struct FramePath {
    pub point: Vec<f64>,
    pub rule: VariationClass,
    pub times: Vec<f64>,
    /// `frames[k][α]` is the coordinate vector `e_α(t_k)`.
    pub frames: Vec<Mat<f64>>,
    pub eps: Vec<f64>,
    /// max |g_t(e_α, e_β) − ε_α δ_αβ|
    pub orthonormality_drift: f64,
    /// max coordinate size of the wrong-side projection of a frame vector
    pub adaptedness_drift: f64,
    /// max |𝓔_i(t) − 𝓔_i(0)|
    pub perp_motion: f64,
}

impl FramePath {
    pub fn drift(&self) -> f64 {
        self.orthonormality_drift.max(self.adaptedness_drift)
    }
}

/// Integrate the frame equations with classical RK4. The rule selects the
/// right-hand side: g⊥ keeps `E_a` fixed, g⊤ keeps `𝓔_i` fixed, general moves
/// both, `∂_t E_a = −½(B♯E_a)^⊤`, `∂_t 𝓔_i = −(B♯𝓔_i)^⊤ − ½(B♯𝓔_i)^⊥`.
pub fn evolve_frame<M: Model, B: SymField>(
    m: &M,
    field: &B,
    x: &[f64],
    rule: VariationClass,
    t_end: f64,
    steps: usize,
) -> Result<FramePath, VariationError> {
    let g0 = m.metric(x)?;
    let span = m.span(x)?;
    let bx = field.eval(x, &g0, &span)?;
    let fr = adapted_frame(&g0, &span).map_err(|w| GeomError::singular(w, x))?;
    let (d, n) = (g0.len(), span.len());
    let det0 = det(&g0);
    let metric = |t: f64| -> Result<(Mat<f64>, Mat<f64>, Mat<f64>), VariationError> {
        let g: Mat<f64> = g0.iter().zip(&bx).map(|(r, q)| r.iter().zip(q).map(|(u, v)| u + t * v).collect()).collect();
        let dt = det(&g);
        if dt * det0.signum() < 0.5 * det0.abs() {
            return Err(VariationError::Degenerate { t, point: x.to_vec() });
        }
        let gi = inverse(&g).ok_or_else(|| VariationError::Degenerate { t, point: x.to_vec() })?;
        let p = projector(&g, &span).ok_or_else(|| VariationError::Degenerate { t, point: x.to_vec() })?;
        Ok((g, gi, p))
    };
    let apply = |m: &Mat<f64>, v: &[f64]| -> Vec<f64> { m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect() };
    let rhs = |t: f64, e: &Mat<f64>| -> Result<Mat<f64>, VariationError> {
        let (_, gi, p) = metric(t)?;
        Ok(e.iter()
            .enumerate()
            .map(|(a, ea)| {
                let bs = apply(&gi, &apply(&bx, ea));
                let top = apply(&p, &bs);
                let perp: Vec<f64> = bs.iter().zip(&top).map(|(u, v)| u - v).collect();
                let moving = if a < n { rule != VariationClass::Perp } else { rule != VariationClass::Top };
                (0..d)
                    .map(|k| match (moving, a < n) {
                        (false, _) => 0.0,
                        (true, true) => -0.5 * top[k],
                        (true, false) => -top[k] - 0.5 * perp[k],
                    })
                    .collect()
            })
            .collect())
    };
    let axpy = |e: &Mat<f64>, k: &Mat<f64>, s: f64| -> Mat<f64> {
        e.iter().zip(k).map(|(r, q)| r.iter().zip(q).map(|(u, v)| u + s * v).collect()).collect()
    };
    let measure = |t: f64, e: &Mat<f64>, out: &mut FramePath| -> Result<(), VariationError> {
        let (g, _, p) = metric(t)?;
        for a in 0..d {
            for b in 0..d {
                let gab: f64 = (0..d).map(|i| (0..d).map(|j| e[a][i] * g[i][j] * e[b][j]).sum::<f64>()).sum();
                let want = if a == b { fr.eps[a] } else { 0.0 };
                out.orthonormality_drift = out.orthonormality_drift.max((gab - want).abs());
            }
            let pe = apply(&p, &e[a]);
            let wrong: f64 = if a < n {
                e[a].iter().zip(&pe).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
            } else {
                pe.iter().map(|v| v.abs()).fold(0.0, f64::max)
            };
            out.adaptedness_drift = out.adaptedness_drift.max(wrong);
            if a >= n {
                let mv = e[a].iter().zip(&fr.e[a]).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                out.perp_motion = out.perp_motion.max(mv);
            }
        }
        Ok(())
    };

    let mut path = FramePath {
        point: x.to_vec(),
        rule,
        times: vec![0.0],
        frames: vec![fr.e.clone()],
        eps: fr.eps.clone(),
        orthonormality_drift: 0.0,
        adaptedness_drift: 0.0,
        perp_motion: 0.0,
    };
    measure(0.0, &fr.e, &mut path)?;
    let dt = t_end / steps.max(1) as f64;
    let mut e = fr.e.clone();
    for s in 0..steps {
        let t = s as f64 * dt;
        let k1 = rhs(t, &e)?;
        let k2 = rhs(t + 0.5 * dt, &axpy(&e, &k1, 0.5 * dt))?;
        let k3 = rhs(t + 0.5 * dt, &axpy(&e, &k2, 0.5 * dt))?;
        let k4 = rhs(t + dt, &axpy(&e, &k3, dt))?;
        let mut next = e.clone();
        for a in 0..d {
            for k in 0..d {
                next[a][k] += dt / 6.0 * (k1[a][k] + 2.0 * k2[a][k] + 2.0 * k3[a][k] + k4[a][k]);
            }
        }
        e = next;
        measure(t + dt, &e, &mut path)?;
        path.times.push(t + dt);
        path.frames.push(e.clone());
    }
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionReport {
    pub point: Vec<f64>,
    pub vector: Vec<f64>,
    /// max over components of |FD ∂_t X^⊤ − (B♯X^⊥)^⊤|, per step
    pub top_errors: Vec<f64>,
    /// same for `∂_t X^⊥ = −(B♯X^⊥)^⊤`
    pub perp_errors: Vec<f64>,
    pub discrepancy: f64,
    pub convergence: Convergence,
    pub tolerance: f64,
    pub pass: bool,
}

/// Check the projection derivatives for a `t`-independent coordinate vector.
pub fn verify_projection_lemma<M: Model, B: SymField>(
    m: &M,
    field: &B,
    x: &[f64],
    v: &[f64],
    tol: f64,
) -> Result<ProjectionReport, VariationError> {
    let sizes = frame_blocks(m, field, x)?;
    let tolb = CLASS_TOL * sizes.scale();
    if sizes.top > tolb && (sizes.mixed > tolb || sizes.perp > tolb) {
        return Err(VariationError::Mismatch {
            what: "projection derivatives".into(),
            needed: "g-perp or g-top".into(),
            got: VariationClass::General,
        });
    }
    let g0 = m.metric(x)?;
    let span = m.span(x)?;
    let bx = field.eval(x, &g0, &span)?;
    let d = g0.len();
    let apply = |m: &Mat<f64>, v: &[f64]| -> Vec<f64> { m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect() };
    let proj = |t: f64| -> Result<Vec<f64>, VariationError> {
        let g: Mat<f64> = g0.iter().zip(&bx).map(|(r, q)| r.iter().zip(q).map(|(u, w)| u + t * w).collect()).collect();
        let p = projector(&g, &span).ok_or_else(|| VariationError::Degenerate { t, point: x.to_vec() })?;
        Ok(apply(&p, v))
    };
    let p0 = proj(0.0)?;
    let xperp: Vec<f64> = v.iter().zip(&p0).map(|(a, b)| a - b).collect();
    let gi = inverse(&g0).ok_or_else(|| GeomError::singular("metric", x))?;
    let bs = apply(&gi, &apply(&bx, &xperp));
    let p_mat = projector(&g0, &span).ok_or_else(|| GeomError::singular("D̃ Gram matrix", x))?;
    let want = apply(&p_mat, &bs);
    let mut top_errors = Vec::new();
    let mut perp_errors = Vec::new();
    for &h in &FD_STEPS {
        let (a, b) = (proj(h)?, proj(-h)?);
        let dtop: Vec<f64> = (0..d).map(|k| (a[k] - b[k]) / (2.0 * h)).collect();
        // X^⊥ = X − X^⊤ with X fixed
        let dperp: Vec<f64> = dtop.iter().map(|u| -u).collect();
        top_errors.push((0..d).map(|k| (dtop[k] - want[k]).abs()).fold(0.0, f64::max));
        perp_errors.push((0..d).map(|k| (dperp[k] + want[k]).abs()).fold(0.0, f64::max));
    }
    let errs: Vec<f64> = top_errors.iter().zip(&perp_errors).map(|(a, b)| a.max(*b)).collect();
    let scale = want.iter().chain(v).fold(0.0f64, |m, u| m.max(u.abs()));
    let convergence = Convergence::from_errors(&errs, fd_floor(scale));
    let discrepancy = errs[errs.len() - 1];
    Ok(ProjectionReport {
        point: x.to_vec(),
        vector: v.to_vec(),
        top_errors,
        perp_errors,
        discrepancy,
        pass: discrepancy <= tol && convergence.acceptable(),
        convergence,
        tolerance: tol,
    })
}

/// Integral functionals over a quadrature box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// `∫ S_mix dvol`
    Mix,
    /// `∫ ⟨T̃,T̃⟩ dvol`, integrability of 𝒟
    TwistD,
    /// `∫ ⟨T,T⟩ dvol`
    TwistDtilde,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Mix, Action::TwistD, Action::TwistDtilde];

    pub fn name(self) -> &'static str {
        match self {
            Action::Mix => "mix",
            Action::TwistD => "twist_d",
            Action::TwistDtilde => "twist_dtilde",
        }
    }
}

impl FromStr for Action {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown action `{s}`"))
    }
}

pub fn action_value<M: Model>(m: &M, q: &QuadratureSpec, action: Action) -> Result<f64, VariationError> {
    Ok(q.integrate(|x| match action {
        Action::Mix => {
            let c = CurvatureFast::new(m, x)?;
            Ok(c.smix() * c.det.abs().sqrt())
        }
        Action::TwistD => Ok(Geometry::new(m, x)?.perp.tt * volume_density(m, x)?),
        Action::TwistDtilde => Ok(Geometry::new(m, x)?.top.tt * volume_density(m, x)?),
    })?)
}

/// A derivative with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Central difference at `h/2`, error from comparison with step `h`.
fn central<F>(h: f64, f: F) -> Result<Estimate, VariationError>
where
    F: Fn(f64) -> Result<f64, VariationError>,
{
    let coarse = (f(h)? - f(-h)?) / (2.0 * h);
    let fine = (f(0.5 * h)? - f(-0.5 * h)?) / h;
    Ok(Estimate { value: fine, error: (fine - coarse).abs() })
}

/// Largest |B| over a lattice on the faces of the box.
pub fn support_leak<M: Model, B: SymField>(m: &M, field: &B, q: &QuadratureSpec) -> Result<f64, VariationError> {
    let d = q.bbox.len();
    let per: usize = if d <= 4 { 5 } else { 3 };
    let mut leak = 0.0f64;
    for k in 0..d {
        for side in [q.bbox[k].0, q.bbox[k].1] {
            let others = per.pow((d - 1) as u32);
            for mut idx in 0..others {
                let mut x = vec![0.0; d];
                for (j, xj) in x.iter_mut().enumerate() {
                    if j == k {
                        *xj = side;
                        continue;
                    }
                    let i = idx % per;
                    idx /= per;
                    let (a, b) = q.bbox[j];
                    *xj = a + (b - a) * i as f64 / (per - 1) as f64;
                }
                let g = m.metric(&x)?;
                let b = field.eval(&x, &g, &m.span(&x)?)?;
                leak = leak.max(b.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())));
            }
        }
    }
    Ok(leak)
}

fn require_support<M: Model, B: SymField>(m: &M, field: &B, q: &QuadratureSpec) -> Result<(), VariationError> {
    let leak = support_leak(m, field, q)?;
    if leak > SUPPORT_TOL {
        return Err(VariationError::Support { leak });
    }
    Ok(())
}

/// `d/dt` of the quadrature-evaluated action along `g + tB` at `t = 0`.
pub fn action_derivative<M: Model, B: SymField>(
    m: &M,
    field: &B,
    q: &QuadratureSpec,
    action: Action,
    h: f64,
) -> Result<Estimate, VariationError> {
    require_support(m, field, q)?;
    central(h, |t| action_value(&Deformed::shifted(m, field, t), q, action))
}

/// Pointwise gradient of `∫ S_mix dvol` for g⊥ variations, paired with B
/// after integrating divergences away.
pub fn mix_gradient(geo: &Geometry) -> Mat<f64> {
    let eps = geo.eps();
    let (d, n) = (geo.dim(), geo.n);
    let (t, p) = (&geo.top, &geo.perp);
    let mut m = alg::scaled(&alg::lambda(eps, &p.alpha, &t.theta), 4.0);
    m = alg::add(&m, &p.div_h, -1.0);
    m = alg::add(&m, &p.kcal, -1.0);
    m = alg::add(&m, &t.phi_h, -1.0);
    m = alg::add(&m, &t.phi_t, -1.0);
    m = alg::add(&m, &p.tcal, 2.0);
    m = alg::add(&m, &alg::contract(eps, &t.theta, &p.mean), 4.0);
    m = alg::add(&m, &alg::restrict(&alg::add(&t.div_alpha, &p.div_theta, -1.0), 0..n, n..d), 2.0);
    m = alg::add(&m, &alg::lambda(eps, &t.alpha, &alg::add3(&p.alpha, &p.theta, 1.0)), 2.0);
    m = alg::add(&m, &alg::contract(eps, &alg::add3(&p.theta, &p.alpha, -1.0), &t.mean), 2.0);
    let sym: Mat<f64> = (0..d).map(|x| (0..d).map(|y| t.mean[x] * p.mean[y] + t.mean[y] * p.mean[x]).collect()).collect();
    m = alg::add(&m, &sym, 1.0);
    m = alg::add(&m, &geo.delta_tilde(&t.mean_d), -2.0);
    m = alg::add(&m, &alg::lambda(eps, &p.theta, &alg::add3(&t.theta, &t.alpha, -1.0)), 2.0);
    let k = 0.5 * (geo.smix() + p.div_mean - t.div_mean);
    alg::add(&m, &alg::metric_block(eps, n..d), k)
}

/// Pointwise gradient of `∫ ⟨T̃,T̃⟩ dvol` (`Action::TwistD`) or `∫ ⟨T,T⟩ dvol`
/// for g⊥ variations.
pub fn twist_gradient(geo: &Geometry, action: Action) -> Mat<f64> {
    let eps = geo.eps();
    let (d, n) = (geo.dim(), geo.n);
    let (t, p) = (&geo.top, &geo.perp);
    let gp = alg::metric_block(eps, n..d);
    match action {
        Action::TwistDtilde => alg::add(&alg::scaled(&t.phi_t, -1.0), &gp, 0.5 * t.tt),
        _ => {
            let mut m = alg::add(&p.tcal, &alg::lambda(eps, &p.theta, &alg::add3(&t.theta, &t.alpha, -1.0)), 1.0);
            m = alg::add(&m, &alg::restrict(&p.div_theta, 0..n, n..d), -1.0);
            alg::add(&alg::scaled(&m, 2.0), &gp, 0.5 * p.tt)
        }
    }
}

/// `∫ ⟨G, B⟩ dvol` with the assembled gradient `G` of a g⊥ variation, with
/// the difference to half the grid as error estimate.
pub fn gradient_pairing<M: Model, B: SymField>(
    m: &M,
    field: &B,
    q: &QuadratureSpec,
    action: Action,
) -> Result<Estimate, VariationError> {
    let f = |x: &[f64]| -> Result<f64, GeomError> {
        let geo = Geometry::new(m, x)?;
        let g = m.metric(x)?;
        let bf = frame_form(&geo.conn.e, &field.eval(x, &g, &m.span(x)?)?);
        let grad = match action {
            Action::Mix => mix_gradient(&geo),
            _ => twist_gradient(&geo, action),
        };
        Ok(alg::pair2(geo.eps(), &grad, &bf) * det(&g).abs().sqrt())
    };
    let (value, error) = crate::quadrature::integrate_with_error(q, f)?;
    Ok(Estimate { value, error })
}

/// `d/dt J` by finite differences against `∫⟨G, B⟩ dvol`. The quadrature
/// error adds the grid-halving differences of both sides.
pub fn verify_gradient_consistency<M: Model, B: SymField>(
    m: &M,
    field: &B,
    q: &QuadratureSpec,
    action: Action,
    h: f64,
) -> Result<IntegralCheck, VariationError> {
    let fd = action_derivative(m, field, q, action, h)?;
    let grad = gradient_pairing(m, field, q, action)?;
    let half = q.with_grid((q.grid / 2).max(2));
    let fd_half = central(h, |t| action_value(&Deformed::shifted(m, field, t), &half, action))?;
    let name = format!("gradient_{}", action.name());
    Ok(IntegralCheck::new(
        &name,
        fd.value,
        grad.value,
        fd.error,
        grad.error + (fd.value - fd_half.value).abs(),
        fd.value.abs().max(grad.value.abs()),
    ))
}

/// Outcome of an integral identity check.
#[derive(Debug, Clone, Serialize)]
pub struct IntegralCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub fd_error: f64,
    pub quad_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IntegralCheck {
    fn new(name: &str, lhs: f64, rhs: f64, fd_error: f64, quad_error: f64, scale: f64) -> Self {
        let residual = (lhs - rhs).abs();
        let tolerance = 3.0 * (fd_error + quad_error) + 1e-10 * (1.0 + scale);
        IntegralCheck { name: name.into(), lhs, rhs, residual, fd_error, quad_error, tolerance, pass: residual <= tolerance }
    }
}

/// Derivative of `∫ div(H + H̃) dvol` along a g⊥ family, expected to vanish.
pub fn verify_divergence_lemma<M: Model, B: SymField>(
    m: &M,
    field: &B,
    q: &QuadratureSpec,
    h: f64,
) -> Result<IntegralCheck, VariationError> {
    require_support(m, field, q)?;
    let integral = |q: &QuadratureSpec, t: f64| -> Result<f64, VariationError> {
        let mt = Deformed::shifted(m, field, t);
        Ok(q.integrate(|x| {
            let geo = Geometry::new(&mt, x)?;
            Ok((geo.top.div_mean + geo.perp.div_mean) * det(&geo.g).abs().sqrt())
        })?)
    };
    let fine = central(h, |t| integral(q, t))?;
    let half = q.with_grid((q.grid / 2).max(2));
    let coarse = (integral(&half, 0.5 * h)? - integral(&half, -0.5 * h)?) / h;
    let scale = q.integrate(|x| {
        let geo = Geometry::new(m, x)?;
        Ok((geo.top.div_mean.abs() + geo.perp.div_mean.abs()) * det(&geo.g).abs().sqrt())
    })?;
    Ok(IntegralCheck::new("divergence_lemma", fine.value, 0.0, fine.error, (fine.value - coarse).abs(), scale))
}

/// Rescaled-family checks for a g⊥ variation.
#[derive(Debug, Clone, Serialize)]
pub struct BarReport {
    /// max relative |Vol(ḡ_t) − Vol(g)| over the sampled `t`
    pub volume_drift: f64,
    pub phi_rate_fd: f64,
    pub phi_rate_closed: f64,
    pub s_star_mean: f64,
    pub trace_integral: f64,
    pub rescaled: Estimate,
    pub plain: Estimate,
    pub relation: IntegralCheck,
    pub pass: bool,
}

/// `φ_t = (Vol(g_t)/Vol(g))^{−2/p}` on the quadrature box.
pub fn volume_factor<M: Model, B: SymField>(m: &M, field: &B, q: &QuadratureSpec, t: f64) -> Result<f64, VariationError> {
    let p = (m.dim() - m.n()) as f64;
    let v0 = volume(m, q)?;
    let vt = volume(&Deformed::shifted(m, field, t), q)?;
    Ok((vt / v0).powf(-2.0 / p))
}

fn rescaled<'a, M: Model, B: SymField>(m: &'a M, field: &'a B, t: f64, phi: f64) -> Deformed<'a, M, B> {
    Deformed { base: m, field: Some((field, t)), scale_perp: phi, scale_top: 1.0, conformal: None }
}

/// Compare `d/dt J(ḡ_t)` with `d/dt J(g_t) − ½ S*(Ω,g) ∫ Tr_g B dvol`, and
/// check the volume normalisation of the rescaled family.
pub fn verify_bar_relation<M: Model, B: SymField>(
    m: &M,
    field: &B,
    q: &QuadratureSpec,
    h: f64,
) -> Result<BarReport, VariationError> {
    require_support(m, field, q)?;
    let p = (m.dim() - m.n()) as f64;
    let v0 = volume(m, q)?;

    let mut volume_drift = 0.0f64;
    for t in [h, -h, 0.5 * h, 10.0 * h, -10.0 * h] {
        let phi = volume_factor(m, field, q, t)?;
        let v = volume(&rescaled(m, field, t, phi), q)?;
        volume_drift = volume_drift.max((v - v0).abs() / v0);
    }

    let trace = |q: &QuadratureSpec| -> Result<f64, VariationError> {
        Ok(q.integrate(|x| {
            let g = m.metric(x)?;
            let b = field.eval(x, &g, &m.span(x)?)?;
            let gi = inverse(&g).ok_or_else(|| GeomError::singular("metric", x))?;
            let tr: f64 = (0..g.len()).map(|i| (0..g.len()).map(|j| gi[i][j] * b[j][i]).sum::<f64>()).sum();
            Ok(tr * det(&g).abs().sqrt())
        })?)
    };
    let trace_integral = trace(q)?;
    let phi_rate_fd = (volume_factor(m, field, q, h)? - volume_factor(m, field, q, -h)?) / (2.0 * h);
    let phi_rate_closed = -trace_integral / (p * v0);

    let s_star = |q: &QuadratureSpec| -> Result<f64, VariationError> {
        let int = q.integrate(|x| {
            let geo = Geometry::new(m, x)?;
            Ok(geo.s_star(Side::Top) * det(&geo.g).abs().sqrt())
        })?;
        Ok(int / volume(m, q)?)
    };
    let residual = |q: &QuadratureSpec, h: f64| -> Result<(Estimate, Estimate, f64, f64), VariationError> {
        let bar = central(h, |t| {
            let phi = volume_factor(m, field, q, t)?;
            action_value(&rescaled(m, field, t, phi), q, Action::Mix)
        })?;
        let plain = central(h, |t| action_value(&Deformed::shifted(m, field, t), q, Action::Mix))?;
        let s = s_star(q)?;
        let tr = trace(q)?;
        Ok((bar, plain, s, tr))
    };
    let (bar, plain, s_star_mean, _) = residual(q, h)?;
    let rhs = plain.value - 0.5 * s_star_mean * trace_integral;
    let half = q.with_grid((q.grid / 2).max(2));
    let (bar_c, plain_c, s_c, tr_c) = residual(&half, h)?;
    let res_fine = bar.value - rhs;
    let res_coarse = bar_c.value - (plain_c.value - 0.5 * s_c * tr_c);
    let relation = IntegralCheck::new(
        "rescaled_action_derivative",
        bar.value,
        rhs,
        bar.error + plain.error,
        (res_fine - res_coarse).abs(),
        plain.value.abs().max(bar.value.abs()),
    );
    let phi_ok = (phi_rate_fd - phi_rate_closed).abs() <= 1e-6 * (1.0 + phi_rate_closed.abs());
    Ok(BarReport {
        pass: relation.pass && volume_drift <= 1e-6 && phi_ok,
        volume_drift,
        phi_rate_fd,
        phi_rate_closed,
        s_star_mean,
        trace_integral,
        rescaled: bar,
        plain,
        relation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub phi: f64,
    pub points: usize,
    /// max |⟨T̃,T̃⟩_ḡ − φ⁻²⟨T̃,T̃⟩_g|
    pub twist_d_error: f64,
    /// max |⟨T,T⟩_ḡ − φ⟨T,T⟩_g|
    pub twist_dtilde_error: f64,
    pub max_twist_d: f64,
    pub pass: bool,
}

/// Rescale the 𝒟 block by a constant `φ` and compare the two twist norms
/// with their scaling laws.
pub fn tilde_t_scaling_check<M: Model>(m: &M, points: &[Vec<f64>], phi: f64) -> Result<ScalingReport, VariationError> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(VariationError::Scale(phi));
    }
    let scaled: Deformed<'_, M> = Deformed { base: m, field: None, scale_perp: phi, scale_top: 1.0, conformal: None };
    let mut r = ScalingReport { phi, points: points.len(), twist_d_error: 0.0, twist_dtilde_error: 0.0, max_twist_d: 0.0, pass: true };
    for x in points {
        let a = Geometry::new(m, x)?;
        let b = Geometry::new(&scaled, x)?;
        r.twist_d_error = r.twist_d_error.max((b.perp.tt - a.perp.tt / (phi * phi)).abs());
        r.twist_dtilde_error = r.twist_dtilde_error.max((b.top.tt - phi * a.top.tt).abs());
        r.max_twist_d = r.max_twist_d.max(a.perp.tt.abs());
    }
    r.pass = r.twist_d_error <= 1e-9 && r.twist_dtilde_error <= 1e-9;
    Ok(r)
}

/// Seeded sample of points in a box, shrunk towards its centre by `shrink`.
pub fn box_samples(bbox: &[(f64, f64)], count: usize, seed: u64, shrink: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            bbox.iter()
                .map(|&(a, b)| {
                    let (c, r) = (0.5 * (a + b), 0.5 * (b - a) * shrink);
                    rng.gen_range(c - r..=c + r)
                })
                .collect()
        })
        .collect()
}

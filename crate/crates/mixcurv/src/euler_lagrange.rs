//! Residuals of the criticality equations for the mixed scalar curvature
//! action and its relatives, assembled term by term from a [`Geometry`].
//!
//! Equation roles: `General*` are the three blocks of the general system
//! (𝒟×𝒟, mixed, D̃×D̃); `Flow*` their reduction when D̃ is a line field;
//! `Twist*` the system for the integrability action of 𝒟; `Leaf*` the
//! codimension-one foliation case.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::expr::Expr;
use crate::geometry::{algebra as alg, Deformed, GeomError, Geometry, Model, Side, Tensor2};
use crate::jets::{seed_dual, Dual, Scalar};
use crate::linalg::{max_abs, Mat};

pub use crate::quadrature::{domain_mean, volume, QuadratureSpec, Rule};

pub const DEFAULT_TOL: f64 = 1e-6;

/// A residual counts as clearly nonzero above this multiple of the tolerance.
pub const NONCRITICAL_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    GeneralPerp,
    GeneralMixed,
    GeneralTop,
    FlowPerp,
    FlowMixed,
    FlowTop,
    JacobiIsotropy,
    MixedRicci,
    TwistPerp,
    TwistMixed,
    TwistTop,
    LeafShape,
    LeafMixed,
    LeafUmbilic,
}

impl Equation {
    pub const ALL: [Equation; 14] = [
        Equation::GeneralPerp,
        Equation::GeneralMixed,
        Equation::GeneralTop,
        Equation::FlowPerp,
        Equation::FlowMixed,
        Equation::FlowTop,
        Equation::JacobiIsotropy,
        Equation::MixedRicci,
        Equation::TwistPerp,
        Equation::TwistMixed,
        Equation::TwistTop,
        Equation::LeafShape,
        Equation::LeafMixed,
        Equation::LeafUmbilic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Equation::GeneralPerp => "general_perp",
            Equation::GeneralMixed => "general_mixed",
            Equation::GeneralTop => "general_top",
            Equation::FlowPerp => "flow_perp",
            Equation::FlowMixed => "flow_mixed",
            Equation::FlowTop => "flow_top",
            Equation::JacobiIsotropy => "jacobi_isotropy",
            Equation::MixedRicci => "mixed_ricci",
            Equation::TwistPerp => "twist_perp",
            Equation::TwistMixed => "twist_mixed",
            Equation::TwistTop => "twist_top",
            Equation::LeafShape => "leaf_shape",
            Equation::LeafMixed => "leaf_mixed",
            Equation::LeafUmbilic => "leaf_umbilic",
        }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Equation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Equation::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown equation `{s}`"))
    }
}

/// Where a mean-value constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Source {
    /// The pointwise value of the integrand; meaningful when it is constant.
    Pointwise,
    Supplied,
    DomainMean { grid: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constant {
    pub value: f64,
    pub source: Source,
}

impl Constant {
    pub fn supplied(value: f64) -> Self {
        Constant { value, source: Source::Supplied }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Constants {
    pub s_star: Option<Constant>,
    pub s_star_tilde: Option<Constant>,
    pub t_star_tilde: Option<Constant>,
    pub t_star: Option<Constant>,
    pub c_hat: Option<Constant>,
}

fn resolve(c: Option<Constant>, pointwise: f64) -> Constant {
    c.unwrap_or(Constant { value: pointwise, source: Source::Pointwise })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Residual {
    Scalar(f64),
    Form(Vec<f64>),
    Tensor(Tensor2),
}

impl Residual {
    pub fn norm(&self) -> f64 {
        match self {
            Residual::Scalar(v) => v.abs(),
            Residual::Form(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Residual::Tensor(t) => t.norm(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ElReport {
    pub equation: Equation,
    pub point: Vec<f64>,
    pub residual: Residual,
    pub norm: f64,
    pub constants: BTreeMap<String, Constant>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ElReport {
    fn new(equation: Equation, geo: &Geometry, residual: Residual, constants: Vec<(&str, Constant)>, tol: f64) -> Self {
        let norm = residual.norm();
        ElReport {
            equation,
            point: geo.x.clone(),
            residual,
            norm,
            constants: constants.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            tolerance: tol,
            pass: norm <= tol,
        }
    }

    /// Clearly nonzero, robust to round-off.
    pub fn clearly_fails(&self) -> bool {
        self.norm >= NONCRITICAL_FACTOR * self.tolerance
    }
}

fn need_line(geo: &Geometry, what: &str) -> Result<(), GeomError> {
    if geo.n != 1 {
        return Err(GeomError::Specialization(format!("{what} needs dim D̃ = 1, got {}", geo.n)));
    }
    Ok(())
}

fn need_codim1(geo: &Geometry, what: &str) -> Result<(), GeomError> {
    if geo.p() != 1 {
        return Err(GeomError::Specialization(format!("{what} needs dim 𝒟 = 1, got {}", geo.p())));
    }
    Ok(())
}

/// `S*` of a side (`Top` for the 𝒟-block equation, `Perp` for its dual).
pub fn s_star(geo: &Geometry, side: Side) -> f64 {
    geo.s_star(side)
}

/// `τ̃₁` with one derivative, for a line field D̃ spanned by `N = e_0`.
fn tau_tilde_jet(geo: &Geometry) -> Dual<f64> {
    let eps = geo.eps();
    (1..geo.dim()).fold(Dual::constant(0.0), |s, i| s + geo.perp.h_d[i][i][0].scale(eps[i]))
}

/// `div(ε_N τ̃₁ N) = ε_N (N(τ̃₁) − τ̃₁²)` along a separate route from `div H̃`.
fn div_tau_n(geo: &Geometry) -> f64 {
    let t = tau_tilde_jet(geo);
    geo.eps()[0] * (geo.conn.ef(0, &t) - t.v * t.v)
}

/// Flow form of `S*`: `ε_N Ric_N − 2((2/p)⟨T̃,T̃⟩ + (1/p) div H)`.
pub fn s_star_flow(geo: &Geometry) -> Result<f64, GeomError> {
    need_line(geo, "flow constant")?;
    let p = geo.p() as f64;
    let en = geo.eps()[0];
    Ok(en * geo.ric[0][0] - 2.0 * ((2.0 / p) * geo.perp.tt + geo.top.div_mean / p))
}

/// Flow form of the dual constant: `ε_N Ric_N − 2(ε_N(N(τ̃₁) − τ̃₂) − ⟨T̃,T̃⟩)`.
pub fn s_star_tilde_flow(geo: &Geometry) -> Result<f64, GeomError> {
    need_line(geo, "flow constant")?;
    let en = geo.eps()[0];
    let t = tau_tilde_jet(geo);
    let tau2 = geo.perp.tau.map(|t| t[1]).unwrap_or(0.0);
    Ok(en * geo.ric[0][0] - 2.0 * (en * (geo.conn.ef(0, &t) - tau2) - geo.perp.tt))
}

fn block_eq(geo: &Geometry, s: Side, c: Constant) -> Mat<f64> {
    let eps = geo.eps();
    let me = geo.side(s);
    let o = geo.side(s.other());
    let mut m = alg::add(&me.ricci, &alg::contract(eps, &o.h, &o.mean), -1.0);
    for (t, k) in [
        (&o.casorati, 1.0),
        (&o.tcal, -1.0),
        (&me.phi_h, 1.0),
        (&me.phi_t, 1.0),
        (&me.psi, 1.0),
        (&me.def_mean, -1.0),
        (&o.kcal, 1.0),
    ] {
        m = alg::add(&m, t, k);
    }
    let scalar = 0.5 * (geo.smix() - c.value + o.div_mean - me.div_mean);
    m = alg::add(&m, &me.g_outer(eps), -scalar);
    alg::restrict(&m, me.outer.clone(), me.outer.clone())
}

/// Mixed block of the general system (symmetric, D̃ × 𝒟 entries).
pub fn mixed_block(geo: &Geometry) -> Mat<f64> {
    let eps = geo.eps();
    let (t, p) = (&geo.top, &geo.perp);
    let d = geo.dim();
    let mut m = alg::scaled(&alg::contract(eps, &t.theta, &p.mean), 2.0);
    m = alg::add(&m, &t.div_alpha, 1.0);
    m = alg::add(&m, &p.div_theta, -1.0);
    m = alg::add(&m, &alg::contract(eps, &alg::add3(&p.theta, &p.alpha, -1.0), &t.mean), 1.0);
    let sym: Mat<f64> = (0..d)
        .map(|x| (0..d).map(|y| 0.5 * (t.mean[x] * p.mean[y] + p.mean[x] * t.mean[y])).collect())
        .collect();
    m = alg::add(&m, &sym, 1.0);
    m = alg::add(&m, &geo.delta_tilde(&t.mean_d), -1.0);
    m = alg::add(&m, &alg::lambda(eps, &p.alpha, &t.theta), 2.0);
    m = alg::add(&m, &alg::lambda(eps, &t.alpha, &p.alpha), 1.0);
    m = alg::add(&m, &alg::lambda(eps, &t.theta, &p.theta), 1.0);
    alg::restrict(&m, 0..geo.n, geo.n..d)
}

/// One block of the general system.
pub fn el_general(geo: &Geometry, eq: Equation, consts: &Constants, tol: f64) -> Result<ElReport, GeomError> {
    let n = geo.n;
    let t2 = |m| Residual::Tensor(Tensor2::new(m, n));
    Ok(match eq {
        Equation::GeneralPerp => {
            let c = resolve(consts.s_star, geo.s_star(Side::Top));
            ElReport::new(eq, geo, t2(block_eq(geo, Side::Top, c)), vec![("s_star", c)], tol)
        }
        Equation::GeneralTop => {
            let c = resolve(consts.s_star_tilde, geo.s_star(Side::Perp));
            ElReport::new(eq, geo, t2(block_eq(geo, Side::Perp, c)), vec![("s_star_tilde", c)], tol)
        }
        Equation::GeneralMixed => ElReport::new(eq, geo, t2(mixed_block(geo)), vec![], tol),
        other => return Err(GeomError::Specialization(format!("{other} is not a general block"))),
    })
}

pub fn el_general_all(geo: &Geometry, consts: &Constants, tol: f64) -> Vec<ElReport> {
    [Equation::GeneralPerp, Equation::GeneralMixed, Equation::GeneralTop]
        .iter()
        .map(|e| el_general(geo, *e, consts, tol).expect("general blocks apply everywhere"))
        .collect()
}

/// `div^⊥ T̃♯_N + 2 (T̃♯_N H)♭` on 𝒟.
fn flow_mixed_form(geo: &Geometry) -> Vec<f64> {
    let eps = geo.eps();
    let d = geo.dim();
    let f = alg::slice(&geo.perp.t_d, 0);
    let div = geo.conn.div_op(&f, 1..d);
    let fv = &geo.perp.t_ops[0];
    let h = &geo.top.mean;
    (0..d)
        .map(|x| {
            if x == 0 {
                return 0.0;
            }
            div[x] + 2.0 * (0..d).map(|g| eps[g] * h[g] * fv[g][x]).sum::<f64>()
        })
        .collect()
}

pub fn el_flow(geo: &Geometry, eq: Equation, consts: &Constants, tol: f64) -> Result<ElReport, GeomError> {
    need_line(geo, "flow equations")?;
    let eps = geo.eps();
    let d = geo.dim();
    let en = eps[0];
    let ric_n = geo.ric[0][0];
    let (t, p) = (&geo.top, &geo.perp);
    let tau1 = p.tau.map(|v| v[0]).unwrap_or(0.0);
    Ok(match eq {
        Equation::FlowPerp => {
            let c = resolve(consts.s_star, s_star_flow(geo)?);
            let a = &p.a_ops[0];
            let tt = &p.t_ops[0];
            let rn = geo.jacobi_n().expect("line field");
            let mut op = alg::add(&rn, &alg::compose(eps, a, a), 1.0);
            op = alg::add(&op, &alg::compose(eps, tt, tt), -1.0);
            op = alg::add(&op, &alg::compose(eps, tt, a), 1.0);
            op = alg::add(&op, &alg::compose(eps, a, tt), -1.0);
            let mut m = alg::scaled(&op, en);
            m = alg::add(&m, a, -tau1 * en);
            let hh: Mat<f64> = (0..d).map(|x| (0..d).map(|y| t.mean[x] * t.mean[y]).collect()).collect();
            m = alg::add(&m, &hh, 1.0);
            m = alg::add(&m, &t.def_mean, -1.0);
            let scalar = 0.5 * (en * ric_n - c.value + div_tau_n(geo) - t.div_mean);
            m = alg::add(&m, &alg::metric_block(eps, 1..d), -scalar);
            let m = alg::restrict(&m, 1..d, 1..d);
            ElReport::new(eq, geo, Residual::Tensor(Tensor2::new(m, 1)), vec![("s_star", c)], tol)
        }
        Equation::FlowMixed => ElReport::new(eq, geo, Residual::Form(flow_mixed_form(geo)), vec![], tol),
        Equation::FlowTop => {
            let c = resolve(consts.s_star_tilde, s_star_tilde_flow(geo)?);
            let r = en * ric_n + c.value - 4.0 * p.tt - (div_tau_n(geo) + t.div_mean);
            ElReport::new(eq, geo, Residual::Scalar(r), vec![("s_star_tilde", c)], tol)
        }
        other => return Err(GeomError::Specialization(format!("{other} is not a flow equation"))),
    })
}

pub fn el_flow_all(geo: &Geometry, consts: &Constants, tol: f64) -> Result<Vec<ElReport>, GeomError> {
    [Equation::FlowPerp, Equation::FlowMixed, Equation::FlowTop]
        .iter()
        .map(|e| el_flow(geo, *e, consts, tol))
        .collect()
}

/// Conditions for a line field with totally geodesic D̃ and 𝒟: isotropic
/// Jacobi operator and vanishing mixed Ricci curvature.
pub fn el_geodesic_flow(geo: &Geometry, tol: f64) -> Result<Vec<ElReport>, GeomError> {
    need_line(geo, "geodesic flow conditions")?;
    let scale = 1.0 + geo.rm.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let hmax = geo.top.h.iter().chain(&geo.perp.h).flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if hmax > 1e-8 * scale {
        return Err(GeomError::Specialization(format!(
            "geodesic flow conditions need h = h̃ = 0 (max |h| = {hmax:.3e})"
        )));
    }
    let eps = geo.eps();
    let d = geo.dim();
    let p = geo.p() as f64;
    let ric_n = geo.ric[0][0];
    let rn = geo.jacobi_n().expect("line field");
    let m = alg::add(&rn, &alg::metric_block(eps, 1..d), -ric_n / p);
    let form: Vec<f64> = (0..d).map(|i| if i == 0 { 0.0 } else { geo.ric[i][0] }).collect();
    let c = Constant { value: ric_n, source: Source::Pointwise };
    Ok(vec![
        ElReport::new(Equation::JacobiIsotropy, geo, Residual::Tensor(Tensor2::new(m, 1)), vec![("ric_n", c)], tol),
        ElReport::new(Equation::MixedRicci, geo, Residual::Form(form), vec![], tol),
    ])
}

/// Residual of any single equation.
pub fn el_report(geo: &Geometry, eq: Equation, consts: &Constants, tol: f64) -> Result<ElReport, GeomError> {
    use Equation as E;
    match eq {
        E::GeneralPerp | E::GeneralMixed | E::GeneralTop => el_general(geo, eq, consts, tol),
        E::FlowPerp | E::FlowMixed | E::FlowTop => el_flow(geo, eq, consts, tol),
        E::TwistPerp | E::TwistMixed | E::TwistTop => el_twist(geo, eq, consts, tol),
        E::JacobiIsotropy | E::MixedRicci => Ok(el_geodesic_flow(geo, tol)?
            .into_iter()
            .find(|r| r.equation == eq)
            .expect("both geodesic-flow conditions are reported")),
        E::LeafShape | E::LeafMixed | E::LeafUmbilic => el_leaf(geo, eq, consts, tol),
    }
}

/// Mean and standard deviation of a sampled quantity.
pub fn spread(values: &[f64]) -> (f64, f64) {
    let k = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    (mean, var.sqrt())
}

/// Constancy test: relative spread for large means, absolute near zero.
pub fn is_constant(values: &[f64], rel: f64, abs: f64) -> bool {
    let (mean, std) = spread(values);
    std <= abs || std <= rel * mean.abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeReport {
    pub kind: &'static str,
    pub point: Vec<f64>,
    /// λ recovered from the trace of the first equation.
    pub lambda_trace: f64,
    /// λ recovered from the second (scalar or trace) equation.
    pub lambda_other: f64,
    pub gap: f64,
    /// Trace-free remainder once λ is substituted.
    pub remainder: f64,
    pub consistent: bool,
}

impl VolumeReport {
    fn new(kind: &'static str, geo: &Geometry, a: f64, b: f64, remainder: f64, tol: f64) -> Self {
        let gap = (a - b).abs();
        VolumeReport {
            kind,
            point: geo.x.clone(),
            lambda_trace: a,
            lambda_other: b,
            gap,
            remainder,
            consistent: gap <= tol && remainder <= tol,
        }
    }
}

/// Volume-preserving variations of a line field with Killing unit normal.
pub fn volume_flow(geo: &Geometry, tol: f64) -> Result<VolumeReport, GeomError> {
    need_line(geo, "volume-preserving flow")?;
    let eps = geo.eps();
    let d = geo.dim();
    let p = geo.p() as f64;
    let en = eps[0];
    let ric_n = geo.ric[0][0];
    let tt = &geo.perp.t_ops[0];
    let op = alg::add(&geo.jacobi_n().expect("line field"), &alg::compose(eps, tt, tt), -1.0);
    let lam1 = en * ric_n - (2.0 / p) * en * alg::trace(eps, &op);
    let lam2 = 4.0 * geo.perp.tt - en * ric_n;
    let rest = alg::add(&alg::scaled(&op, en), &alg::metric_block(eps, 1..d), -0.5 * (en * ric_n - lam1));
    Ok(VolumeReport::new("flow", geo, lam1, lam2, max_abs(&alg::restrict(&rest, 1..d, 1..d)), tol))
}

/// Volume-preserving variations for the integrability action of 𝒟.
pub fn volume_twist(geo: &Geometry, tol: f64) -> VolumeReport {
    let eps = geo.eps();
    let p = geo.p() as f64;
    let n = geo.n as f64;
    let tt = geo.perp.tt;
    let lam1 = -(2.0 / p) * alg::trace(eps, &geo.perp.tcal) - 0.5 * tt;
    let lam3 = 0.5 * tt - alg::trace(eps, &geo.perp.phi_t) / n;
    let r1 = alg::add(&alg::scaled(&geo.perp.tcal, 2.0), &geo.top.g_outer(eps), 0.5 * tt + lam1);
    let r3 = alg::add(&geo.perp.phi_t, &geo.perp.g_outer(eps), -(0.5 * tt - lam3));
    VolumeReport::new("twist", geo, lam1, lam3, max_abs(&r1).max(max_abs(&r3)), tol)
}

fn leaf_parts(geo: &Geometry) -> (Mat<Dual<f64>>, Mat<f64>, [f64; 2]) {
    let nn = geo.n;
    let en = geo.eps()[nn];
    let a = alg::slice(&geo.top.h_d, nn);
    let hsc: Mat<Dual<f64>> = a.iter().map(|r| r.iter().map(|v| v.scale(en)).collect()).collect();
    let nh = geo.conn.nabla2(&hsc);
    let tau = geo.top.tau.expect("line normal bundle");
    (hsc, nh[nn].clone(), tau)
}

/// Frame components of `∇_N h_sc` on the leaves, for comparison with the
/// coordinate closed form of [`biregular`].
pub fn leaf_shape_derivative(geo: &Geometry) -> Result<Mat<f64>, GeomError> {
    need_codim1(geo, "leaf shape derivative")?;
    let (_, nh, _) = leaf_parts(geo);
    Ok(alg::restrict(&nh, 0..geo.n, 0..geo.n))
}

/// Volume-preserving variations of a codimension-one foliation.
pub fn volume_leaf(geo: &Geometry, tol: f64) -> Result<VolumeReport, GeomError> {
    need_codim1(geo, "volume-preserving leaf equations")?;
    if geo.n < 2 {
        return Err(GeomError::Specialization("leaf equations need leaves of dimension ≥ 2".into()));
    }
    let eps = geo.eps();
    let en = eps[geo.n];
    let n = geo.n as f64;
    let (hsc, nh, [t1, t2]) = leaf_parts(geo);
    let lhs = alg::add(&nh, &alg::values2(&hsc), -t1);
    let lam1 = -en * (t1 * t1 - t2);
    let lam2 = (n - 1.0) / n * alg::trace(eps, &lhs);
    let rest = alg::add(&lhs, &alg::metric_block(eps, 0..geo.n), -lam2 / (n - 1.0));
    Ok(VolumeReport::new("leaf", geo, lam1, lam2, max_abs(&alg::restrict(&rest, 0..geo.n, 0..geo.n)), tol))
}

/// Integrability action of 𝒟: its three blocks.
pub fn el_twist(geo: &Geometry, eq: Equation, consts: &Constants, tol: f64) -> Result<ElReport, GeomError> {
    let eps = geo.eps();
    let (t, p) = (&geo.top, &geo.perp);
    let d = geo.dim();
    let n = geo.n;
    let (pn, nn) = (geo.p() as f64, n as f64);
    let tt = p.tt;
    let t2 = |m| Residual::Tensor(Tensor2::new(m, n));
    Ok(match eq {
        Equation::TwistPerp => {
            let c = resolve(consts.t_star_tilde, (4.0 - pn) / (2.0 * pn) * tt);
            let m = alg::add(&alg::scaled(&p.tcal, 2.0), &t.g_outer(eps), 0.5 * tt + c.value);
            ElReport::new(eq, geo, t2(alg::restrict(&m, n..d, n..d)), vec![("t_star_tilde", c)], tol)
        }
        Equation::TwistMixed => {
            let m = alg::add(&alg::lambda(eps, &p.theta, &alg::add3(&t.theta, &t.alpha, -1.0)), &p.div_theta, -1.0);
            ElReport::new(eq, geo, t2(alg::restrict(&m, 0..n, n..d)), vec![], tol)
        }
        Equation::TwistTop => {
            let c = resolve(consts.t_star, (2.0 + nn) / (2.0 * nn) * tt);
            let m = alg::add(&p.phi_t, &p.g_outer(eps), -(0.5 * tt - c.value));
            ElReport::new(eq, geo, t2(alg::restrict(&m, 0..n, 0..n)), vec![("t_star", c)], tol)
        }
        other => return Err(GeomError::Specialization(format!("{other} is not a twist-action equation"))),
    })
}

pub fn el_twist_all(geo: &Geometry, consts: &Constants, tol: f64) -> Vec<ElReport> {
    [Equation::TwistPerp, Equation::TwistMixed, Equation::TwistTop]
        .iter()
        .map(|e| el_twist(geo, *e, consts, tol).expect("twist blocks apply everywhere"))
        .collect()
}

/// Codimension-one foliation tangent to D̃ (𝒟 spanned by the unit normal).
pub fn el_leaf(geo: &Geometry, eq: Equation, consts: &Constants, tol: f64) -> Result<ElReport, GeomError> {
    need_codim1(geo, "leaf equations")?;
    let eps = geo.eps();
    let nn = geo.n;
    let en = eps[nn];
    let n = nn as f64;
    let (hsc, nh, [t1, t2]) = leaf_parts(geo);
    let lhs = alg::add(&nh, &alg::values2(&hsc), -t1);
    let t2m = |m| Residual::Tensor(Tensor2::new(m, nn));
    Ok(match eq {
        Equation::LeafShape => {
            if nn < 2 {
                return Err(GeomError::Specialization("leaf shape equation needs n ≥ 2".into()));
            }
            let m = alg::add(&lhs, &alg::metric_block(eps, 0..nn), en * (t1 * t1 - t2) / (n - 1.0));
            ElReport::new(eq, geo, t2m(alg::restrict(&m, 0..nn, 0..nn)), vec![], tol)
        }
        Equation::LeafUmbilic => {
            let c = resolve(consts.c_hat, geo.perp.div_mean);
            let m = alg::add(&lhs, &alg::metric_block(eps, 0..nn), -en / n * c.value);
            ElReport::new(eq, geo, t2m(alg::restrict(&m, 0..nn, 0..nn)), vec![("c_hat", c)], tol)
        }
        Equation::LeafMixed => {
            let a = alg::slice(&geo.top.h_d, nn);
            let div = geo.conn.div_op(&a, 0..nn);
            let tau = (0..nn).fold(Dual::constant(0.0), |s, k| s + a[k][k].scale(eps[k]));
            let form: Vec<f64> =
                (0..geo.dim()).map(|x| if x < nn { div[x] - geo.conn.ef(x, &tau) } else { 0.0 }).collect();
            ElReport::new(eq, geo, Residual::Form(form), vec![], tol)
        }
        other => return Err(GeomError::Specialization(format!("{other} is not a leaf equation"))),
    })
}

/// Closed-form quantities for a diagonal metric whose leaves are `x₀ = const`
/// (D̃ spanned by `∂₁ … ∂ₙ`, normal along `∂₀`).
#[derive(Debug, Clone, Serialize)]
pub struct Biregular {
    pub point: Vec<f64>,
    /// `y_i = −g_{ii,0} / (2 √|g₀₀| g_ii)`
    pub y: Vec<f64>,
    pub dy0: Vec<f64>,
    pub tau1: f64,
    pub tau2: f64,
    /// Closed form of `(∇_N h_sc)(∂_i, ∂_i)`.
    pub nabla_hsc: Vec<f64>,
    /// `∂₀ y_i − √|g₀₀| (y_i τ₁ − (τ₁² − τ₂)/(n−1))`
    pub ode: Vec<f64>,
    /// `∂₀ y_i − √|g₀₀| (τ₁ y_i + Ĉ/n)` for a supplied Ĉ.
    pub umbilic_ode: Option<Vec<f64>>,
    /// `∂_i Σ_{a≠i} y_a + Σ_{a≠i} Γ^a_{ai}(y_i − y_a)`
    pub mixed: Vec<f64>,
}

pub fn biregular<M: Model>(m: &M, x: &[f64], c_hat: Option<f64>) -> Result<Biregular, GeomError> {
    let d = m.dim();
    if m.n() + 1 != d {
        return Err(GeomError::Specialization("biregular forms need a codimension-one D̃".into()));
    }
    let xd = seed_dual(&seed_dual(x));
    let g = m.metric(&xd)?;
    for i in 0..d {
        for j in 0..d {
            if i != j && g[i][j].v.v.abs() > 1e-14 {
                return Err(GeomError::Specialization("biregular forms need a diagonal metric".into()));
            }
        }
    }
    let n = d - 1;
    let s00 = g[0][0].v.v.abs().sqrt();
    let root = g[0][0].v.scale(g[0][0].v.v.signum()).sqrt();
    // y_i with one derivative in every coordinate
    let yd: Vec<Dual<f64>> = (1..d).map(|i| -(g[i][i].d[0] / (root.scale(2.0) * g[i][i].v))).collect();
    let y: Vec<f64> = yd.iter().map(|v| v.v).collect();
    let dy0: Vec<f64> = yd.iter().map(|v| v.d[0]).collect();
    let tau1: f64 = y.iter().sum();
    let tau2: f64 = y.iter().map(|v| v * v).sum();
    let en = g[0][0].v.v.signum();
    let nabla_hsc = (1..d)
        .map(|i| {
            let gi = g[i][i].v.v;
            let gi0 = g[i][i].d[0].v;
            let gi00 = g[i][i].d[0].d[0];
            let l0 = g[0][0].d[0].v / g[0][0].v.v;
            -en / (2.0 * s00 * s00) * (gi00 - 0.5 * gi0 * l0 - gi0 * gi0 / gi)
        })
        .collect();
    let ode = (0..n)
        .map(|i| dy0[i] - s00 * (y[i] * tau1 - (tau1 * tau1 - tau2) / (n as f64 - 1.0)))
        .collect();
    let umbilic_ode = c_hat.map(|c| (0..n).map(|i| dy0[i] - s00 * (tau1 * y[i] + c / n as f64)).collect());
    let mixed = (1..d)
        .map(|i| {
            let mut s = 0.0;
            for a in 1..d {
                if a == i {
                    continue;
                }
                let gamma = 0.5 * g[a][a].v.d[i] / g[a][a].v.v;
                s += yd[a - 1].d[i] + gamma * (y[i - 1] - y[a - 1]);
            }
            s
        })
        .collect();
    Ok(Biregular { point: x.to_vec(), y, dy0, tau1, tau2, nabla_hsc, ode, umbilic_ode, mixed })
}

/// Closed-form mean curvature of leaves along the unit normal for the
/// umbilical Riccati solution with `τ₁(0) = τ⁰`.
pub fn tau_riccati(t: f64, c_abs: f64, tau0: f64) -> f64 {
    let c = c_abs.sqrt();
    c * (1.0 - 2.0 * (c - tau0) / ((c + tau0) * (-2.0 * t * c).exp() + c - tau0))
}

/// `τ₁′ − (τ₁² − |Ĉ|)` with the derivative taken by a fourth-order central difference.
pub fn riccati_residual(t: f64, c_abs: f64, tau0: f64) -> f64 {
    let h = 1e-3;
    let f = |s| tau_riccati(s, c_abs, tau0);
    let dt = (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h);
    let v = f(t);
    dt - (v * v - c_abs)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformalCheck {
    pub point: Vec<f64>,
    /// Half the flow-mixed form of `e^{−2ψ} g` evaluated on `Y`.
    pub direct: f64,
    /// `((1−p)/2) e^ψ g(T̃♯_ξ Y, ∇ψ)` in the base metric.
    pub closed: f64,
}

impl ConformalCheck {
    pub fn gap(&self) -> f64 {
        (self.direct - self.closed).abs()
    }
}

/// Flow-mixed equation after a conformal change, against its closed form.
/// `y` is a coordinate vector in 𝒟.
pub fn conformal_check<M: Model>(m: &M, psi: &Expr, x: &[f64], y: &[f64]) -> Result<ConformalCheck, GeomError> {
    let base = Geometry::new(m, x)?;
    need_line(&base, "conformal check")?;
    let bar = Geometry::new(&Deformed::conformal(m, psi), x)?;
    let d = base.dim();
    let eps = base.eps();

    let form = flow_mixed_form(&bar);
    let ylow: Vec<f64> = alg::values1(&bar.loc.lower_vec(&y.iter().map(|v| Dual::constant(*v)).collect::<Vec<_>>()));
    let direct = 0.5 * (0..d).map(|k| bar.eps()[k] * form[k] * ylow[k]).sum::<f64>();

    let f = &base.perp.t_ops[0];
    let u = alg::values1(&base.loc.lower_vec(&y.iter().map(|v| Dual::constant(*v)).collect::<Vec<_>>()));
    let fy_low: Vec<f64> = (0..d).map(|b| (0..d).map(|a| eps[a] * u[a] * f[a][b]).sum()).collect();
    let fy: Vec<f64> = (0..d).map(|k| (0..d).map(|b| eps[b] * fy_low[b] * base.conn.e[b][k]).sum()).collect();
    let pd = psi.eval(&seed_dual(x), m.params())?;
    let dpsi: f64 = (0..d).map(|k| fy[k] * pd.d[k]).sum();
    let p = base.p() as f64;
    let closed = 0.5 * (1.0 - p) * pd.v.exp() * dpsi;
    Ok(ConformalCheck { point: x.to_vec(), direct, closed })
}

/// Mean of a pointwise scalar over a quadrature box, tagged as such.
pub fn mean_constant<M, F>(m: &M, q: &QuadratureSpec, f: F) -> Result<Constant, GeomError>
where
    M: Model,
    F: Fn(&Geometry) -> f64 + Sync,
{
    let v = domain_mean(m, q, |x| Ok(f(&Geometry::new(m, x)?)))?;
    Ok(Constant { value: v, source: Source::DomainMean { grid: q.grid } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equation_names_round_trip() {
        for e in Equation::ALL {
            assert_eq!(e.name().parse::<Equation>().unwrap(), e);
        }
        assert!("nope".parse::<Equation>().is_err());
    }

    #[test]
    fn riccati_formula_matches_initial_value() {
        assert!((tau_riccati(0.0, 4.0, 0.5) - 0.5).abs() < 1e-14);
        assert!(riccati_residual(0.3, 4.0, 0.5).abs() < 1e-8);
    }

    #[test]
    fn spread_detects_constants() {
        assert!(is_constant(&[2.0, 2.0, 2.0], 1e-9, 1e-9));
        assert!(!is_constant(&[1.0, 2.0], 1e-3, 1e-3));
    }
}

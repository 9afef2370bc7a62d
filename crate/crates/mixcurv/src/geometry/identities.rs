//! Pointwise identities between curvature and extrinsic invariants, each
//! side computed along a separate path.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::jets::{seed_dual, Dual, Scalar};
use crate::linalg::max_abs;

use super::local::algebra as alg;
use super::{Geometry, Side, T3};

/// Random quadratic polynomial in the chart coordinates.
#[derive(Debug, Clone)]
pub struct Poly {
    pub c0: f64,
    pub c1: Vec<f64>,
    pub c2: Vec<Vec<f64>>,
}

impl Poly {
    pub fn random(rng: &mut ChaCha8Rng, d: usize, amp: f64) -> Self {
        let mut u = || rng.gen_range(-amp..=amp);
        let c0 = u();
        let c1 = (0..d).map(|_| u()).collect();
        let c2 = (0..d).map(|_| (0..d).map(|_| 0.5 * u()).collect()).collect();
        Poly { c0, c1, c2 }
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let mut s = S::cst(self.c0);
        for (k, xk) in x.iter().enumerate() {
            s += xk.scale(self.c1[k]);
            for (l, xl) in x.iter().enumerate() {
                s += (*xk * *xl).scale(self.c2[k][l]);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityResidual {
    pub name: String,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub point: Vec<f64>,
    pub entries: Vec<IdentityResidual>,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.residual)
    }
}

/// Partial Ricci tensor of `s` from the extrinsic side:
/// `div h_o + ⟨h_o, H_o⟩ − 𝒜_o − 𝒯_o − Ψ_s + Def H_s` on the outer block of `s`.
pub fn ricci_from_extrinsic(geo: &Geometry, s: Side) -> Vec<Vec<f64>> {
    let eps = geo.eps();
    let me = geo.side(s);
    let o = geo.side(s.other());
    let mut m = alg::add(&o.div_h, &alg::contract(eps, &o.h, &o.mean), 1.0);
    m = alg::add(&m, &o.casorati, -1.0);
    m = alg::add(&m, &o.tcal, -1.0);
    m = alg::add(&m, &me.psi, -1.0);
    m = alg::add(&m, &me.def_mean, 1.0);
    alg::restrict(&m, me.outer.clone(), me.outer.clone())
}

pub fn identity_suite(geo: &Geometry, seed: u64) -> IdentityReport {
    let eps = geo.eps().to_vec();
    let d = geo.dim();
    let (t, p) = (&geo.top, &geo.perp);
    let mut out = Vec::new();
    let mut push = |name: &str, v: f64| out.push(IdentityResidual { name: name.into(), residual: v.abs() });

    for (label, s) in [("ricci_d", Side::Top), ("ricci_dtilde", Side::Perp)] {
        let r = alg::add(&geo.side(s).ricci, &ricci_from_extrinsic(geo, s), -1.0);
        push(label, max_abs(&r));
    }
    let smix = geo.smix();
    push(
        "smix_invariants",
        smix - (t.s_ex + p.s_ex + t.tt + p.tt + t.div_mean + p.div_mean),
    );
    push("trace_ricci_d", alg::trace(&eps, &t.ricci) - smix);
    push("trace_ricci_dtilde", alg::trace(&eps, &p.ricci) - smix);
    for (label, s) in [("trace_psi", t), ("trace_psi_tilde", p)] {
        push(label, alg::trace(&eps, &s.psi) - s.hh + s.tt);
    }
    for (label, s) in [("trace_def", t), ("trace_def_tilde", p)] {
        push(label, alg::trace(&eps, &s.def_mean) - s.div_mean - s.mean2);
    }
    push("trace_k", alg::trace(&eps, &t.kcal));
    push("trace_k_tilde", alg::trace(&eps, &p.kcal));
    push("trace_casorati", alg::trace(&eps, &t.casorati) - t.hh);
    push("trace_tcal", alg::trace(&eps, &t.tcal) + t.tt);
    for (label, s) in [("phi_t", t), ("phi_t_tilde", p)] {
        let r = alg::add(&s.phi_t, &alg::lambda(&eps, &s.t, &s.t), 0.5);
        push(label, max_abs(&r));
    }
    for (label, s) in [("phi_h", t), ("phi_h_tilde", p)] {
        let hh: Vec<Vec<f64>> = (0..d).map(|x| (0..d).map(|y| s.mean[x] * s.mean[y]).collect()).collect();
        let r = alg::add(&alg::add(&s.phi_h, &hh, -1.0), &alg::lambda(&eps, &s.h, &s.h), 0.5);
        push(label, max_abs(&r));
    }

    // divergence identities with random fields
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xd = seed_dual(&geo.x);
    let n = geo.n;
    let xi_low: Vec<Dual<f64>> = (0..d)
        .map(|k| if k >= n { Poly::random(&mut rng, d, 1.0).eval(&xd) } else { Dual::constant(0.0) })
        .collect();
    let xi = geo.loc.raise_vec(&xi_low);
    let lhs = geo.conn.div1(&xi_low, n..d);
    let rhs = geo.coord_divergence(&xi) + (0..d).map(|k| eps[k] * xi_low[k].v * t.mean[k]).sum::<f64>();
    push("div_perp_vector", lhs - rhs);
    push(
        "div_split",
        geo.conn.div1(&xi_low, 0..d) - geo.conn.div1(&xi_low, 0..n) - geo.conn.div1(&xi_low, n..d),
    );

    let mut pt: T3<Dual<f64>> = alg::zeros3(d);
    for a in 0..d {
        for b in 0..d {
            for z in n..d {
                pt[a][b][z] = Poly::random(&mut rng, d, 1.0).eval(&xd);
            }
        }
    }
    let pv = alg::values3(&pt);
    let r = alg::add(
        &alg::add(&geo.conn.div3(&pt, n..d), &geo.conn.div3(&pt, 0..d), -1.0),
        &alg::contract(&eps, &pv, &t.mean),
        -1.0,
    );
    push("div_perp_tensor", max_abs(&r));

    IdentityReport { point: geo.x.clone(), entries: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::ProductStructure;

    const R3: &str = "name = r3\ndim = 3\ndtilde_dim = 1\n\
        metric 0 0 = (1 + x1^2)/4\nmetric 0 2 = -x1/4\nmetric 1 1 = 1/4\nmetric 2 2 = 1/4\n\
        dtilde 0 = 0, 0, 2\ndomain = [-1, 1] x [-1, 1] x [-1, 1]\n";

    #[test]
    fn r3_identities_hold() {
        let s = ProductStructure::load(R3).unwrap();
        for (k, x) in s.sample_points(5, 11, 0.05).iter().enumerate() {
            let geo = Geometry::new(&s, x).unwrap();
            let rep = identity_suite(&geo, k as u64);
            for e in &rep.entries {
                assert!(e.residual < 1e-8, "{} = {}", e.name, e.residual);
            }
        }
    }
}

#[cfg(test)]
mod generic_tests {
    use super::*;
    use crate::geometry::CurvatureFast;
    use crate::structure::ProductStructure;

    pub(crate) const GENERIC: &str = "name = generic\ndim = 4\ndtilde_dim = 2\n\
        metric 0 0 = 1 + 0.3*x1^2\nmetric 0 1 = 0.2*x2\nmetric 0 3 = 0.1*x0*x1\nmetric 1 1 = 2 + sin(x3)\n\
        metric 1 2 = 0.15*x0\nmetric 2 2 = -1 - 0.2*x3^2\nmetric 2 3 = 0.1*x1\nmetric 3 3 = 1.5 + 0.1*x0*x2\n\
        dtilde 0 = 1, x2, 0.3, x1*x3\ndtilde 1 = 0, 1, x0, -0.5\n\
        domain = [-0.5, 0.5] x [-0.5, 0.5] x [-0.5, 0.5] x [-0.5, 0.5]\n";

    #[test]
    fn generic_indefinite_identities_hold() {
        let s = ProductStructure::load(GENERIC).unwrap();
        for (k, x) in s.sample_points(4, 3, 0.05).iter().enumerate() {
            let geo = Geometry::new(&s, x).unwrap();
            assert!(geo.top.hh.abs() > 1e-3 && geo.perp.tt.abs() > 1e-3 && geo.top.tt.abs() > 1e-3);
            let rep = identity_suite(&geo, k as u64);
            for e in &rep.entries {
                assert!(e.residual < 1e-8, "{} = {}", e.name, e.residual);
            }
            let fast = CurvatureFast::new(&s, x).unwrap();
            assert!((fast.smix() - geo.smix()).abs() < 1e-9);
        }
    }
}

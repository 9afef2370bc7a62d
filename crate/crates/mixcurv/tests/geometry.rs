use std::collections::BTreeSet;

use mixcurv::expr::parse;
use mixcurv::gallery::{list_entries, load_entry};
use mixcurv::geometry::identities::identity_suite;
use mixcurv::geometry::{sectional, CurvatureFast, Geometry, Model};
use mixcurv::linalg::inverse;
use mixcurv::structure::ProductStructure;
use proptest::prelude::*;

fn sphere2() -> ProductStructure {
    ProductStructure::load(
        "name = s2\ndim = 2\ndtilde_dim = 1\nmetric 0 0 = 1\nmetric 1 1 = sin(x0)^2\n\
         dtilde 0 = 1, 0\ndomain = [0.3, 2.8] x [-1, 1]\n",
    )
    .unwrap()
}

fn hyperbolic3() -> ProductStructure {
    ProductStructure::load(
        "name = h3\ndim = 3\ndtilde_dim = 1\nmetric 0 0 = 1/x2^2\nmetric 1 1 = 1/x2^2\nmetric 2 2 = 1/x2^2\n\
         dtilde 0 = 1, x0, 0.5\ndomain = [-1, 1] x [-1, 1] x [0.5, 2]\n",
    )
    .unwrap()
}

/// Christoffels from central differences of the metric.
fn fd_christoffels(s: &ProductStructure, x: &[f64], h: f64) -> Vec<Vec<Vec<f64>>> {
    let d = x.len();
    let g = s.metric::<f64>(x).unwrap();
    let ginv = inverse(&g).unwrap();
    let dg: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|k| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let (gp, gm) = (s.metric::<f64>(&xp).unwrap(), s.metric::<f64>(&xm).unwrap());
            (0..d).map(|i| (0..d).map(|j| (gp[i][j] - gm[i][j]) / (2.0 * h)).collect()).collect()
        })
        .collect();
    let mut gamma = vec![vec![vec![0.0; d]; d]; d];
    for nu in 0..d {
        for mu in 0..d {
            for rho in 0..d {
                gamma[nu][mu][rho] = 0.5
                    * (0..d)
                        .map(|k| ginv[nu][k] * (dg[rho][mu][k] + dg[mu][rho][k] - dg[k][mu][rho]))
                        .sum::<f64>();
            }
        }
    }
    gamma
}

#[test]
fn round_sphere_christoffels_in_closed_form() {
    let s = sphere2();
    for x in s.sample_points(10, 1, 0.05) {
        let geo = Geometry::new(&s, &x).unwrap();
        let (sn, cs) = x[0].sin_cos();
        let want = |nu: usize, mu: usize, rho: usize| match (nu, mu, rho) {
            (0, 1, 1) => -sn * cs,
            (1, 0, 1) | (1, 1, 0) => cs / sn,
            _ => 0.0,
        };
        for nu in 0..2 {
            for mu in 0..2 {
                for rho in 0..2 {
                    assert!((geo.gamma[nu][mu][rho] - want(nu, mu, rho)).abs() < 1e-12);
                }
            }
        }
        assert!((sectional(&geo.rm, geo.eps(), 0, 1) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn christoffels_match_finite_differences() {
    for name in ["r3_contact", "s3_hopf", "lorentz_rotating", "warped_product"] {
        let s = load_entry(name).unwrap().structure().unwrap();
        for x in s.sample_points(4, 2, 0.1) {
            let geo = Geometry::new(&s, &x).unwrap();
            let fd = fd_christoffels(&s, &x, 1e-5);
            for (a, b) in geo.gamma.iter().flatten().flatten().zip(fd.iter().flatten().flatten()) {
                assert!((a - b).abs() < 1e-7 * (1.0 + a.abs()), "{name}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn unit_sphere_has_constant_curvature_one() {
    let s = load_entry("s3_hopf").unwrap().structure().unwrap();
    for x in s.sample_points(8, 5, 0.05) {
        let geo = Geometry::new(&s, &x).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert!((sectional(&geo.rm, geo.eps(), a, b) - 1.0).abs() < 1e-9);
                }
                let want = if a == b { 2.0 } else { 0.0 };
                assert!((geo.ric[a][b] - want).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn hyperbolic_space_has_constant_curvature_minus_one() {
    let s = hyperbolic3();
    for x in s.sample_points(8, 6, 0.05) {
        let geo = Geometry::new(&s, &x).unwrap();
        let fast = CurvatureFast::new(&s, &x).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert!((sectional(&geo.rm, geo.eps(), a, b) + 1.0).abs() < 1e-9);
                    assert!((sectional(&fast.rm, &fast.eps, a, b) + 1.0).abs() < 1e-9);
                }
            }
        }
        // two mixed planes, each of curvature −1
        assert!((geo.smix() + 2.0).abs() < 1e-9);
    }
}

/// Rescaling the spanning field by a positive function leaves the
/// distribution, and so every invariant, unchanged.
#[test]
fn invariants_do_not_depend_on_the_spanning_field() {
    let s = load_entry("r3_contact").unwrap().structure().unwrap();
    let none = BTreeSet::new();
    let span: Vec<_> = ["0", "0", "2*(1 + x0^2)*exp(x1)"].iter().map(|t| parse(t, 3, &none).unwrap()).collect();
    let t = s.with_dtilde(vec![span]).unwrap();
    for x in s.sample_points(6, 8, 0.05) {
        let (a, b) = (Geometry::new(&s, &x).unwrap(), Geometry::new(&t, &x).unwrap());
        for (u, v) in [
            (a.smix(), b.smix()),
            (a.top.hh, b.top.hh),
            (a.perp.hh, b.perp.hh),
            (a.top.tt, b.top.tt),
            (a.perp.tt, b.perp.tt),
            (a.top.mean2, b.top.mean2),
            (a.perp.mean2, b.perp.mean2),
            (a.top.div_mean, b.top.div_mean),
        ] {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
    }
}

#[test]
fn two_dimensional_leaves_mix_their_spanning_vectors() {
    let e = load_entry("s7_three_sasakian").unwrap();
    let s = e.structure().unwrap();
    let x = s.sample_points(1, 4, 0.1).remove(0);
    let before = Geometry::new(&s, &x).unwrap();
    let fields = s.dtilde_exprs().to_vec();
    // replace (ξ0, ξ1, ξ2) by (ξ0 + ξ1, ξ1, ξ2 − 2ξ0)
    let mixed = vec![
        fields[0].iter().zip(&fields[1]).map(|(a, b)| a.clone() + b.clone()).collect(),
        fields[1].clone(),
        fields[2].iter().zip(&fields[0]).map(|(a, b)| a.clone() + b.clone() * mixcurv::expr::Expr::constant(-2.0)).collect(),
    ];
    let after = Geometry::new(&s.with_dtilde(mixed).unwrap(), &x).unwrap();
    assert!((before.smix() - after.smix()).abs() < 1e-8);
    assert!((before.perp.tt - after.perp.tt).abs() < 1e-8);
    assert!((before.top.hh - after.top.hh).abs() < 1e-8);
}

#[test]
fn identities_hold_on_every_entry() {
    for name in list_entries() {
        let s = load_entry(name).unwrap().structure().unwrap();
        let count = if name == "s7_three_sasakian" { 2 } else { 5 };
        for (k, x) in s.sample_points(count, 21, 0.05).iter().enumerate() {
            let geo = Geometry::new(&s, x).unwrap();
            let rep = identity_suite(&geo, k as u64);
            for e in &rep.entries {
                assert!(e.residual < 1e-7, "{name}: {} = {:.3e}", e.name, e.residual);
            }
            let fast = CurvatureFast::new(&s, x).unwrap();
            assert!((fast.smix() - geo.smix()).abs() < 1e-8 * (1.0 + geo.smix().abs()), "{name}");
        }
    }
}

#[test]
fn metric_outside_its_domain_is_reported() {
    let s = hyperbolic3();
    assert!(Geometry::new(&s, &[0.0, 0.0, 0.0]).is_err());
    assert!(Geometry::new(&s, &[f64::NAN, 0.0, 1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contact_identities_at_random_points(x in -0.9f64..0.9, y in -0.9f64..0.9, z in -0.9f64..0.9, seed in 0u64..1000) {
        let s = load_entry("r3_contact").unwrap().structure().unwrap();
        let geo = Geometry::new(&s, &[x, y, z]).unwrap();
        prop_assert!(identity_suite(&geo, seed).max() < 1e-8);
        // the Reeb field is geodesic and the contact distribution is minimal
        prop_assert!(geo.top.hh.abs() < 1e-9 && geo.perp.mean2.abs() < 1e-9);
        prop_assert!((geo.perp.tt - 2.0).abs() < 1e-9);
    }
}

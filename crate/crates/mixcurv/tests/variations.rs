use mixcurv::gallery::{list_entries, load_entry};
use mixcurv::geometry::{Geometry, NoField};
use mixcurv::quadrature::{QuadratureSpec, Rule};
use mixcurv::structure::ProductStructure;
use mixcurv::variations::*;
use proptest::prelude::*;

fn entry(name: &str) -> ProductStructure {
    load_entry(name).unwrap().structure().unwrap()
}

fn formulas(class: VariationClass) -> Vec<Formula> {
    Formula::listed().into_iter().filter(|f| f.family == class).collect()
}

#[test]
fn every_entry_passes_five_fields_per_class_at_ten_points() {
    for name in list_entries() {
        let s = entry(name);
        let pts = s.sample_points(10, 101, 0.2);
        for class in VariationClass::ALL {
            for seed in 0..5 {
                let v = RandomVariation::new(class, &s.domain, 1000 + seed, 0.5);
                for x in &pts {
                    let reps = match class {
                        VariationClass::General => verify_sum_rule(&s, &v, x, FORMULA_TOL).unwrap(),
                        c => verify_first_variation(&s, &v, x, &formulas(c), FORMULA_TOL).unwrap(),
                    };
                    for r in reps {
                        assert!(
                            r.pass,
                            "{name} seed {seed} {} at {x:?}: errors {:?}, {}",
                            r.formula, r.errors, r.convergence
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn twist_norm_of_dtilde_under_perp_family_on_contact() {
    let s = entry("r3_contact");
    let v = RandomVariation::new(VariationClass::Perp, &s.domain, 7, 0.5);
    let f = Formula { invariant: Invariant::TwistNormDtilde, family: VariationClass::Perp };
    for x in s.sample_points(5, 2, 0.2) {
        let r = &verify_first_variation(&s, &v, &x, &[f], 1e-6).unwrap()[0];
        assert!(r.discrepancy <= 1e-6, "{r:?}");
    }
}

#[test]
fn twist_norm_of_dtilde_under_top_family_on_hopf() {
    let s = entry("s3_hopf");
    let v = RandomVariation::new(VariationClass::Top, &s.domain, 8, 0.5);
    let f = Formula { invariant: Invariant::TwistNormDtilde, family: VariationClass::Top };
    for x in s.sample_points(5, 3, 0.2) {
        let r = &verify_first_variation(&s, &v, &x, &[f], 1e-6).unwrap()[0];
        assert!(r.pass && r.discrepancy <= 1e-6, "{r:?}");
    }
}

#[test]
fn class_mismatch_is_reported() {
    let s = entry("r3_contact");
    let v = RandomVariation::new(VariationClass::Top, &s.domain, 1, 0.5);
    let x = s.center();
    let err = verify_first_variation(&s, &v, &x, &formulas(VariationClass::Perp), 1e-5).unwrap_err();
    assert!(matches!(err, VariationError::Class { .. }), "{err}");
    let g = RandomVariation::new(VariationClass::General, &s.domain, 1, 0.5);
    assert!(verify_projection_lemma(&s, &g, &x, &[0.0, 1.0, 0.0], 1e-6).is_err());
}

#[test]
fn mixed_block_only_is_a_perp_variation() {
    let s = entry("euclidean_product");
    let d = s.dim;
    let bump: String = (0..d).map(|k| format!("cos(x{k})^6")).collect::<Vec<_>>().join("*");
    let v = ExprVariation::new(d, &s.params, VariationClass::Perp, &[(0, d - 1, "1 + x0")], Some(&bump)).unwrap();
    let pts = s.sample_points(6, 1, 0.3);
    assert_eq!(classify(&s, &v, &pts, Some(VariationClass::Perp)).unwrap(), VariationClass::Perp);
}

#[test]
fn frame_stays_orthonormal_along_contact_families() {
    let s = entry("r3_contact");
    for x in s.sample_points(4, 9, 0.3) {
        for class in VariationClass::ALL {
            let v = RandomVariation::new(class, &s.domain, 40, 0.5);
            assert!(t_max(&s, &v, std::slice::from_ref(&x)).unwrap() >= 0.1);
            let path = evolve_frame(&s, &v, &x, class, 0.1, 64).unwrap();
            assert_eq!(path.times.len(), 65);
            assert!(path.drift() <= 1e-8, "{class}: {}", path.drift());
            if class == VariationClass::Top {
                assert_eq!(path.perp_motion, 0.0);
            }
        }
    }
}

#[test]
fn frame_drifts_without_the_correction_terms() {
    // Evolving a general B with the g⊥ rule leaves E_a fixed although g_t changes on D̃.
    let s = entry("r3_contact");
    let v = RandomVariation::new(VariationClass::General, &s.domain, 5, 0.5);
    let path = evolve_frame(&s, &v, &s.center(), VariationClass::Perp, 0.1, 64).unwrap();
    assert!(path.orthonormality_drift > 1e-4, "{}", path.orthonormality_drift);
}

#[test]
fn projection_derivatives_for_coordinate_fields() {
    let s = entry("r3_contact");
    let v = RandomVariation::new(VariationClass::Perp, &s.domain, 12, 0.5);
    for x in s.sample_points(5, 4, 0.3) {
        for e in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            let r = verify_projection_lemma(&s, &v, &x, &e, 1e-6).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let zero = verify_projection_lemma(&s, &NoField, &x, &[0.0, 1.0, 0.0], 1e-12).unwrap();
        assert_eq!(zero.discrepancy, 0.0);
    }
}

#[test]
fn zero_variation_has_zero_action_derivative() {
    let s = entry("r3_contact");
    let q = QuadratureSpec::new(s.domain.clone(), 6, Rule::Midpoint).unwrap();
    for a in Action::ALL {
        assert_eq!(action_derivative(&s, &NoField, &q, a, 1e-3).unwrap().value, 0.0);
    }
}

#[test]
fn unsupported_variation_is_rejected() {
    let s = entry("r3_contact");
    let v = ExprVariation::new(3, &s.params, VariationClass::Perp, &[(1, 1, "1")], None).unwrap();
    let q = QuadratureSpec::new(s.domain.clone(), 4, Rule::Midpoint).unwrap();
    assert!(matches!(action_derivative(&s, &v, &q, Action::Mix, 1e-3), Err(VariationError::Support { .. })));
}

#[test]
fn assembled_gradients_match_action_derivatives() {
    let s = entry("r3_contact");
    let v = RandomVariation::new(VariationClass::Perp, &s.domain, 3, 0.5);
    let mut last = f64::INFINITY;
    for grid in [8, 16, 32] {
        let q = QuadratureSpec::new(s.domain.clone(), grid, Rule::Midpoint).unwrap();
        let c = verify_gradient_consistency(&s, &v, &q, Action::Mix, 1e-3).unwrap();
        assert!(c.pass, "grid {grid}: {c:?}");
        assert!(c.residual < last, "no convergence at grid {grid}");
        last = c.residual;
    }
    let q = QuadratureSpec::new(s.domain.clone(), 16, Rule::Midpoint).unwrap();
    for a in [Action::TwistD, Action::TwistDtilde] {
        let c = verify_gradient_consistency(&s, &v, &q, a, 1e-3).unwrap();
        assert!(c.pass, "{c:?}");
    }
}

#[test]
fn divergence_integral_is_stationary_under_perp_families() {
    let s = entry("s3_hopf");
    let v = RandomVariation::new(VariationClass::Perp, &s.domain, 21, 0.5);
    let q = QuadratureSpec::new(s.domain.clone(), 12, Rule::Midpoint).unwrap();
    let c = verify_divergence_lemma(&s, &v, &q, 1e-3).unwrap();
    assert!(c.pass, "{c:?}");
}

#[test]
fn rescaled_family_keeps_volume_and_shifts_the_derivative() {
    let s = entry("r3_contact");
    let v = RandomVariation::new(VariationClass::Perp, &s.domain, 3, 0.5);
    let q = QuadratureSpec::new(s.domain.clone(), 12, Rule::Midpoint).unwrap();
    let r = verify_bar_relation(&s, &v, &q, 1e-3).unwrap();
    assert!(r.pass, "{r:#?}");
    assert!(r.trace_integral.abs() > 1e-3, "correction term should be visible");
    assert!((r.s_star_mean + 4.0).abs() < 1e-9);
}

#[test]
fn volume_preserving_family_needs_no_correction() {
    // B = bump·(x1 dx2⊗dx2) on the flat product: odd in x1, so ∫Tr B = 0.
    let s = entry("euclidean_product");
    let d = s.dim;
    let bump: String = (0..d).map(|k| format!("cos(x{k})^6")).collect::<Vec<_>>().join("*");
    let v = ExprVariation::new(d, &s.params, VariationClass::Perp, &[(d - 1, d - 1, "x1")], Some(&bump)).unwrap();
    let half = std::f64::consts::FRAC_PI_2;
    let q = QuadratureSpec::new(vec![(-half, half); d], 8, Rule::Midpoint).unwrap();
    let s = s.with_domain(vec![(-half, half); d]);
    let r = verify_bar_relation(&s, &v, &q, 1e-3).unwrap();
    assert!(r.trace_integral.abs() < 1e-12);
    assert!((r.rescaled.value - r.plain.value).abs() < 1e-9, "{r:#?}");
}

#[test]
fn twist_norms_follow_their_scaling_laws() {
    let s = entry("r3_contact");
    let pts = s.sample_points(8, 6, 0.2);
    let r = tilde_t_scaling_check(&s, &pts, 2.0).unwrap();
    assert!(r.pass && r.max_twist_d > 1.0, "{r:?}");
    let x = &pts[0];
    let a = Geometry::new(&s, x).unwrap().perp.tt;
    assert!((a - 2.0).abs() < 1e-9);
    let same = tilde_t_scaling_check(&s, &pts, 1.0).unwrap();
    assert_eq!(same.twist_d_error, 0.0);
    let fol = entry("codim1_coth_tanh");
    let r = tilde_t_scaling_check(&fol, &fol.sample_points(5, 1, 0.2), 3.0).unwrap();
    assert!(r.pass && r.max_twist_d < 1e-12);
    assert!(matches!(tilde_t_scaling_check(&s, &pts, -1.0), Err(VariationError::Scale(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn random_fields_on_generic_points(seed in 0u64..10_000, u in proptest::collection::vec(-0.6f64..0.6, 3), class in 0usize..3) {
        let s = entry("r3_contact");
        let class = VariationClass::ALL[class];
        let v = RandomVariation::new(class, &s.domain, seed, 0.5);
        let reps = match class {
            VariationClass::General => verify_sum_rule(&s, &v, &u, FORMULA_TOL).unwrap(),
            c => verify_first_variation(&s, &v, &u, &formulas(c), FORMULA_TOL).unwrap(),
        };
        for r in reps {
            prop_assert!(r.pass, "{} {:?} {}", r.formula, r.errors, r.convergence);
        }
    }
}

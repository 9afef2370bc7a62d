//! End-to-end acceptance run. Prints one line per criterion and exits
//! non-zero when any outcome differs from the expected one.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use mixcurv::euler_lagrange::*;
use mixcurv::expr::parse;
use mixcurv::gallery::load_entry;
use mixcurv::geometry::identities::identity_suite;
use mixcurv::geometry::{algebra as alg, Geometry, Side};
use mixcurv::linalg::max_abs;
use mixcurv::quadrature::{QuadratureSpec, Rule};
use mixcurv::structure::ProductStructure;
use mixcurv::variations::*;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Criterion number, its check, and whether it is expected to pass.
type Criterion = (u32, fn() -> Outcome, bool);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn entry(name: &str) -> ProductStructure {
    load_entry(name).unwrap().structure().unwrap()
}

fn geos(s: &ProductStructure, count: usize, seed: u64) -> Vec<Geometry> {
    s.sample_points(count, seed, 0.05).iter().map(|x| Geometry::new(s, x).unwrap()).collect()
}

fn worst<T>(items: &[T], f: impl Fn(&T) -> f64) -> f64 {
    items.iter().map(f).fold(0.0, f64::max)
}

fn identities() -> Outcome {
    let names = ["euclidean_product", "r3_contact", "s3_hopf", "s7_three_sasakian", "codim1_coth_tanh"];
    let mut max = 0.0f64;
    let mut at = String::new();
    for name in names {
        for (k, geo) in geos(&entry(name), 10, 1).iter().enumerate() {
            let rep = identity_suite(geo, k as u64);
            for e in &rep.entries {
                if e.residual > max {
                    max = e.residual;
                    at = format!("{name}/{}", e.name);
                }
            }
        }
    }
    outcome(max <= 1e-6, format!("max residual {max:.2e} ({at}) over 5 entries x 10 points"))
}

fn contact_reproduction() -> Outcome {
    let s = entry("r3_contact");
    let gs = geos(&s, 10, 2);
    let shape = vec![vec![0.0, -1.0], vec![-1.0, 0.0]];
    let twist = vec![vec![0.0, 1.0], vec![-1.0, 0.0]];
    let (mut op_err, mut ric, mut mean, mut mixed, mut top) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut perp_min = f64::INFINITY;
    for geo in &gs {
        let [_, y, z] = [geo.x[0], geo.x[1], geo.x[2]];
        let basis = vec![vec![2.0, -2.0 * z, 2.0 * y], vec![0.0, 2.0, 0.0]];
        let a = geo.in_basis(&geo.perp.a_ops[0], &basis);
        let t = geo.in_basis(&geo.perp.t_ops[0], &basis);
        op_err = op_err.max(max_abs(&mixcurv::linalg::sub(&a, &shape))).max(max_abs(&mixcurv::linalg::sub(&t, &twist)));
        ric = ric.max(geo.ric_n().unwrap().abs());
        // H, and τ̃₁ through the mean curvature of 𝒟
        mean = geo.top.mean.iter().chain(&geo.perp.mean).fold(mean, |m, v| m.max(v.abs()));
        let reps = el_flow_all(geo, &Constants::default(), DEFAULT_TOL).unwrap();
        perp_min = perp_min.min(reps[0].norm);
        mixed = mixed.max(reps[1].norm);
        top = top.max(reps[2].norm);
    }
    let pass = op_err <= 1e-9 && ric <= 1e-8 && mean <= 1e-9 && mixed <= 1e-6 && top <= 1e-6 && perp_min >= 1e-5;
    outcome(
        pass,
        format!(
            "operators {op_err:.1e}, Ric_N {ric:.1e}, H and tau~ {mean:.1e}, mixed {mixed:.1e}, top {top:.1e}, perp block min {perp_min:.3}"
        ),
    )
}

fn k_contact() -> Outcome {
    let s = entry("s3_hopf");
    let gs = geos(&s, 50, 3);
    let mut flow = 0.0f64;
    let mut geodesic = 0.0f64;
    let mut ric = 0.0f64;
    let (mut sf, mut sft, mut ss, mut sst) = (vec![], vec![], vec![], vec![]);
    for geo in &gs {
        flow = flow.max(worst(&el_flow_all(geo, &Constants::default(), DEFAULT_TOL).unwrap(), |r| r.norm));
        geodesic = geodesic.max(worst(&el_geodesic_flow(geo, DEFAULT_TOL).unwrap(), |r| r.norm));
        ric = ric.max((geo.ric_n().unwrap() - 2.0).abs());
        sf.push(s_star_flow(geo).unwrap());
        sft.push(s_star_tilde_flow(geo).unwrap());
        ss.push(geo.s_star(Side::Top));
        sst.push(geo.s_star(Side::Perp));
    }
    let std = [&sf, &sft, &ss, &sst].iter().map(|v| spread(v).1).fold(0.0, f64::max);
    let pass = flow <= 1e-6 && geodesic <= 1e-6 && ric <= 1e-7 && std <= 1e-7;
    outcome(
        pass,
        format!("flow {flow:.1e}, geodesic-flow {geodesic:.1e}, |Ric_N - 2| {ric:.1e}, constant std {std:.1e} over 50 points"),
    )
}

fn three_sasakian() -> Outcome {
    let s = entry("s7_three_sasakian");
    let gs = geos(&s, 10, 4);
    let (mut rd, mut rdt, mut tt, mut el) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for geo in &gs {
        let eps = geo.eps();
        let block = |side: Side, k: f64| {
            let sd = geo.side(side);
            let r = alg::add(&sd.ricci, &alg::metric_block(eps, sd.outer.clone()), -k);
            max_abs(&alg::restrict(&r, sd.outer.clone(), sd.outer.clone()))
        };
        rd = rd.max(block(Side::Top, 3.0));
        rdt = rdt.max(block(Side::Perp, 4.0));
        tt = tt.max((geo.perp.tt - 12.0).abs());
        el = el.max(worst(&el_general_all(geo, &Constants::default(), 1e-6), |r| r.norm));
    }
    let pass = rd <= 1e-6 && rdt <= 1e-6 && tt <= 1e-6 && el <= 1e-6;
    outcome(pass, format!("r_D - 3g {rd:.1e}, r_Dtilde - 4g {rdt:.1e}, <T~,T~> - 12 {tt:.1e}, equations {el:.1e}"))
}

fn first_variations() -> Outcome {
    let mut count = 0;
    let mut max_disc = 0.0f64;
    let mut min_order = f64::INFINITY;
    let mut exact = 0;
    let mut failures = Vec::new();
    for name in ["r3_contact", "s3_hopf"] {
        let s = entry(name);
        let pts = s.sample_points(3, 55, 0.2);
        for class in [VariationClass::Perp, VariationClass::Top] {
            let fs: Vec<Formula> = Formula::listed().into_iter().filter(|f| f.family == class).collect();
            for seed in 0..5 {
                let v = RandomVariation::new(class, &s.domain, 500 + seed, 0.5);
                for x in &pts {
                    for r in verify_first_variation(&s, &v, x, &fs, 1e-5).unwrap() {
                        count += 1;
                        max_disc = max_disc.max(r.discrepancy);
                        match r.convergence {
                            Convergence::Order(o) => min_order = min_order.min(o),
                            Convergence::Exact => exact += 1,
                        }
                        if !r.pass {
                            failures.push(format!("{name}:{}", r.formula));
                        }
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{count} checks of 14 formulas, max discrepancy {max_disc:.1e}, min order {min_order:.2} ({exact} at round-off){}",
            if failures.is_empty() { String::new() } else { format!(", failing {failures:?}") }
        ),
    )
}

fn frame_evolution() -> Outcome {
    let mut drift = 0.0f64;
    for name in ["r3_contact", "s3_hopf"] {
        let s = entry(name);
        for x in s.sample_points(3, 6, 0.3) {
            for class in VariationClass::ALL {
                let v = RandomVariation::new(class, &s.domain, 77, 0.5);
                drift = drift.max(evolve_frame(&s, &v, &x, class, 0.1, 64).unwrap().drift());
            }
        }
    }
    outcome(drift <= 1e-8, format!("max drift {drift:.1e} over t in [0, 0.1], 64 steps"))
}

fn integral_relations() -> Outcome {
    let s = entry("r3_contact");
    let v = RandomVariation::new(VariationClass::Perp, &s.domain, 3, 0.5);
    let q = QuadratureSpec::new(s.domain.clone(), 32, Rule::Midpoint).unwrap();
    let div = verify_divergence_lemma(&s, &v, &q, 1e-3).unwrap();
    let bar = verify_bar_relation(&s, &v, &q, 1e-3).unwrap();
    outcome(
        div.pass && bar.pass,
        format!(
            "divergence {:.1e} <= {:.1e}, rescaled {:.1e} <= {:.1e}, volume drift {:.1e} (grid 32)",
            div.residual, div.tolerance, bar.relation.residual, bar.relation.tolerance, bar.volume_drift
        ),
    )
}

fn foliations() -> Outcome {
    let s = entry("codim1_coth_tanh");
    let ode = (0..50)
        .map(|k| {
            let t = 0.01 + 0.98 * k as f64 / 49.0;
            biregular(&s, &[t, 0.2, -0.3], None).unwrap().ode.iter().fold(0.0f64, |m, r| m.max(r.abs()))
        })
        .fold(0.0, f64::max);
    let r = entry("codim1_tau_riccati");
    let mut ric = 0.0f64;
    for k in 0..50 {
        let t = 0.02 + 0.96 * k as f64 / 49.0;
        let b = biregular(&r, &[t, 0.1, 0.4], Some(-1.0)).unwrap();
        let umbilic = b.umbilic_ode.unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ric = ric.max(riccati_residual(t, 1.0, 0.5).abs()).max(umbilic).max((b.tau1 - tau_riccati(t, 1.0, 0.5)).abs());
    }
    let bi = entry("codim1_bifoliated");
    let mixed = bi
        .sample_points(20, 5, 0.05)
        .iter()
        .map(|x| biregular(&bi, x, None).unwrap().mixed.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(0.0, f64::max);
    outcome(
        ode <= 1e-8 && ric <= 1e-7 && mixed <= 1e-7,
        format!("leaf equation {ode:.1e}, Riccati {ric:.1e}, mixed condition {mixed:.1e}"),
    )
}

fn conformal() -> Outcome {
    let s = entry("r3_contact");
    let psi = parse("x1", 3, &BTreeSet::new()).unwrap();
    let mut gap = 0.0f64;
    let mut direct = 0.0f64;
    for x in s.sample_points(10, 8, 0.1) {
        for y in [vec![2.0, -2.0 * x[2], 2.0 * x[1]], vec![0.0, 2.0, 0.0]] {
            let c = conformal_check(&s, &psi, &x, &y).unwrap();
            gap = gap.max(c.gap());
            direct = direct.max(c.direct.abs());
        }
    }
    outcome(gap <= 1e-6 && direct >= 1e-4, format!("gap {gap:.1e}, largest residual {direct:.3}"))
}

fn volume_preserving() -> Outcome {
    let s = entry("s3_hopf");
    let mut gap_err = 0.0f64;
    for geo in geos(&s, 10, 9) {
        let r = volume_flow(&geo, 1e-6).unwrap();
        let (p, tt) = (geo.p() as f64, geo.perp.tt);
        gap_err = gap_err.max((r.gap - (3.0 - (p - 4.0) / p).abs() * tt).abs());
    }
    let c = entry("r3_contact");
    let geo = Geometry::new(&c, &c.center()).unwrap();
    let tw = volume_twist(&geo, 1e-6);
    let part1 = gap_err <= 1e-6;
    let part2 = tw.consistent && (tw.lambda_other - 3.0).abs() <= 1e-6;
    outcome(
        part1 && part2,
        format!(
            "flow gap reproduced to {gap_err:.1e}; contact twist (p = 2) gives lambda {:.6} from the first block (2 - p/2) vs {:.6} from the second (3p/2)",
            tw.lambda_trace, tw.lambda_other
        ),
    )
}

fn main() -> ExitCode {
    // (criterion, check, expected outcome)
    let criteria: [Criterion; 10] = [
        (1, identities, true),
        (2, contact_reproduction, true),
        (3, k_contact, true),
        (4, three_sasakian, true),
        (5, first_variations, true),
        (6, frame_evolution, true),
        (7, integral_relations, true),
        (8, foliations, true),
        (9, conformal, true),
        // the two λ recoveries for the contact twist action disagree (1 vs 3)
        (10, volume_preserving, false),
    ];
    let mut ok = true;
    for (k, check, expected) in criteria {
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let note = if o.pass == expected { "" } else { " [unexpected]" };
        println!("criterion {k:>2}: {verdict} ({secs:.1} s) {}{note}", o.detail);
        ok &= o.pass == expected;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

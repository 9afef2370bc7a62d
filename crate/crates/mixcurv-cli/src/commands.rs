use std::path::PathBuf;

use clap::Args;
use mixcurv::euler_lagrange::{el_report, mean_constant, Constants, Equation, DEFAULT_TOL, NONCRITICAL_FACTOR};
use mixcurv::gallery::{list_entries, load_entry, verify_entry_at, Check, Regime};
use mixcurv::geometry::identities::identity_suite;
use mixcurv::geometry::{Geometry, Model, Side};
use mixcurv::quadrature::{QuadratureSpec, Rule};
use mixcurv::structure::ProductStructure;
use mixcurv::variations::{
    evolve_frame, verify_bar_relation, verify_divergence_lemma, verify_first_variation, verify_gradient_consistency,
    verify_sum_rule, Action, ExprVariation, Formula, RandomVariation, VariationClass, FORMULA_TOL,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load, sha256_hex, CliError, Common, Format, Loaded};
use crate::output::{to_value, Report};

pub const IDENTITY_TOL: f64 = 1e-6;
pub const FRAME_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-3;

fn geometry(s: &ProductStructure, x: &[f64]) -> Result<Geometry, CliError> {
    Geometry::new(s, x).map_err(|source| CliError::AtPoint { point: x.to_vec(), source })
}

fn quadrature(l: &Loaded) -> Result<Option<QuadratureSpec>, CliError> {
    l.config
        .grid
        .map(|g| QuadratureSpec::new(l.config.bbox.clone(), g, Rule::Midpoint))
        .transpose()
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn inspect(common: &Common) -> Result<Report, CliError> {
    let l = load(common, "inspect", DEFAULT_TOL)?;
    let results = l
        .points
        .iter()
        .map(|x| Ok(to_value(geometry(&l.structure, x)?.bundle(None))))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Report::new(&l.config, None, results))
}

pub fn identities(common: &Common) -> Result<Report, CliError> {
    let l = load(common, "verify identities", IDENTITY_TOL)?;
    let tol = l.config.tol;
    let mut results = Vec::new();
    for (k, x) in l.points.iter().enumerate() {
        let rep = identity_suite(&geometry(&l.structure, x)?, l.config.seed.wrapping_add(k as u64));
        for e in rep.entries {
            results.push(json!({
                "check": e.name,
                "point": x,
                "residual": e.residual,
                "tolerance": tol,
                "pass": e.residual <= tol,
                "provenance": "derived: both sides computed along separate paths",
            }));
        }
    }
    let pass = results.iter().all(|r| r["pass"] == true);
    Ok(Report::new(&l.config, Some(pass), results))
}

#[derive(Debug, Clone, Args)]
pub struct ElArgs {
    #[command(flatten)]
    pub common: Common,
    /// Variation regime: bar-g-perp, bar-g-top, flow or twist (repeatable; default all that apply).
    #[arg(long = "regime")]
    pub regimes: Vec<Regime>,
    /// Equation expected to be clearly non-critical (repeatable).
    #[arg(long = "noncritical")]
    pub noncritical: Vec<Equation>,
}

#[derive(Serialize)]
struct ElConfig<'a> {
    #[serde(flatten)]
    run: &'a crate::config::RunConfig,
    regimes: Vec<&'static str>,
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::BarGPerp => "bar-g-perp",
        Regime::BarGTop => "bar-g-top",
        Regime::Flow => "flow",
        Regime::Twist => "twist",
    }
}

pub fn el(args: &ElArgs) -> Result<Report, CliError> {
    let l = load(&args.common, "verify el", DEFAULT_TOL)?;
    let tol = l.config.tol;
    let s = &l.structure;
    let regimes = if args.regimes.is_empty() {
        let mut r = vec![Regime::BarGPerp, Regime::BarGTop];
        if s.n() == 1 {
            r.push(Regime::Flow);
        }
        r.push(Regime::Twist);
        r
    } else {
        args.regimes.clone()
    };
    if regimes.contains(&Regime::Flow) && s.n() != 1 {
        return Err(CliError::Config("the flow regime needs a one-dimensional D̃".into()));
    }
    let mut eqs: Vec<Equation> = Vec::new();
    for r in &regimes {
        for e in r.equations() {
            if !eqs.contains(e) {
                eqs.push(*e);
            }
        }
    }

    let mut consts = l.entry.as_ref().map(|e| e.constants()).unwrap_or_default();
    if let Some(q) = quadrature(&l)? {
        let mean = |side: Side| mean_constant(s, &q, move |g: &Geometry| g.s_star(side));
        consts = Constants {
            s_star: Some(mean(Side::Top).map_err(|e| CliError::Config(e.to_string()))?),
            s_star_tilde: Some(mean(Side::Perp).map_err(|e| CliError::Config(e.to_string()))?),
            ..consts
        };
    }
    let geos = l.points.iter().map(|x| geometry(s, x)).collect::<Result<Vec<_>, _>>()?;

    let mut results = Vec::new();
    for eq in eqs {
        let flag = l.entry.as_ref().and_then(|e| e.flags.iter().find(|f| f.check == Check::Equation(eq)));
        let (critical, provenance) = match flag {
            _ if args.noncritical.contains(&eq) => (false, json!("user expectation")),
            Some(f) => (f.critical, to_value(f.provenance)),
            None => (true, json!("default expectation")),
        };
        let mut residuals = Vec::new();
        let mut constants = Value::Null;
        for geo in &geos {
            let r = el_report(geo, eq, &consts, tol).map_err(|source| CliError::AtPoint { point: geo.x.clone(), source })?;
            residuals.push(r.norm);
            if constants.is_null() && !r.constants.is_empty() {
                constants = to_value(&r.constants);
            }
        }
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        let pass = if critical { worst <= tol } else { worst >= NONCRITICAL_FACTOR * tol };
        results.push(json!({
            "check": eq.name(),
            "expectation": if critical { "critical" } else { "noncritical" },
            "residual": worst,
            "residuals": residuals,
            "tolerance": tol,
            "constants": constants,
            "provenance": provenance,
            "pass": pass,
        }));
    }
    let pass = results.iter().all(|r| r["pass"] == true);
    let cfg = ElConfig { run: &l.config, regimes: regimes.iter().map(|r| regime_name(*r)).collect() };
    Ok(Report::new(cfg, Some(pass), results))
}

#[derive(Debug, Clone, Args)]
pub struct VariationArgs {
    #[command(flatten)]
    pub common: Common,
    /// Class of the seeded random variations: g-perp, g-top or general.
    #[arg(long, conflicts_with = "variation")]
    pub class: Option<VariationClass>,
    /// Variation file (`class = ...`, `bump = ...`, `b i j = expr`).
    #[arg(long)]
    pub variation: Option<PathBuf>,
    /// Number of seeded random variations.
    #[arg(long, default_value_t = 1)]
    pub fields: u64,
    /// Amplitude of the random variations.
    #[arg(long, default_value_t = 0.5)]
    pub amp: f64,
}

#[derive(Serialize)]
struct VariationConfig<'a> {
    #[serde(flatten)]
    run: &'a crate::config::RunConfig,
    class: VariationClass,
    fields: Vec<String>,
    variation_sha256: Option<String>,
}

fn variation_checks<B: mixcurv::geometry::SymField>(
    l: &Loaded,
    field: &B,
    label: &str,
    class: VariationClass,
    results: &mut Vec<Value>,
) -> Result<(), CliError> {
    let s = &l.structure;
    let tol = l.config.tol;
    let formulas: Vec<Formula> = Formula::listed().into_iter().filter(|f| f.family == class).collect();
    for x in &l.points {
        let reps = match class {
            VariationClass::General => verify_sum_rule(s, field, x, tol)?,
            _ => verify_first_variation(s, field, x, &formulas, tol)?,
        };
        for r in reps {
            let mut v = to_value(&r);
            v["check"] = json!(r.formula);
            v["field"] = json!(label);
            v["provenance"] = json!("finite differences along g + tB");
            results.push(v);
        }
        let path = evolve_frame(s, field, x, class, 0.1, 64)?;
        let drift = path.drift();
        results.push(json!({
            "check": "frame_evolution",
            "field": label,
            "point": x,
            "residual": drift,
            "tolerance": FRAME_TOL,
            "pass": drift <= FRAME_TOL,
            "provenance": "g_t-orthonormality along the evolved frame, t in [0, 0.1], 64 steps",
        }));
    }
    if let Some(q) = quadrature(l)? {
        let mut push = |c: mixcurv::variations::IntegralCheck| {
            let mut v = to_value(&c);
            v["check"] = json!(c.name);
            v["field"] = json!(label);
            results.push(v);
        };
        push(verify_gradient_consistency(s, field, &q, Action::Mix, FD_STEP)?);
        if class == VariationClass::Perp {
            push(verify_divergence_lemma(s, field, &q, FD_STEP)?);
            let bar = verify_bar_relation(s, field, &q, FD_STEP)?;
            let mut v = to_value(&bar.relation);
            v["check"] = json!(bar.relation.name);
            v["field"] = json!(label);
            v["volume_drift"] = json!(bar.volume_drift);
            v["pass"] = json!(bar.pass);
            results.push(v);
        }
    }
    Ok(())
}

pub fn variations(args: &VariationArgs) -> Result<Report, CliError> {
    let l = load(&args.common, "verify variations", FORMULA_TOL)?;
    let mut results = Vec::new();
    let (class, labels, hash) = match &args.variation {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
            let v = ExprVariation::load(&text, l.structure.dim, &l.structure.params)?;
            let label = path.display().to_string();
            variation_checks(&l, &v, &label, v.declared, &mut results)?;
            (v.declared, vec![label], Some(sha256_hex(&text)))
        }
        None => {
            let class = args.class.unwrap_or(VariationClass::Perp);
            if !(args.amp > 0.0) || args.fields == 0 {
                return Err(CliError::Config("--amp must be positive and --fields at least 1".into()));
            }
            let mut labels = Vec::new();
            for k in 0..args.fields {
                let seed = l.config.seed.wrapping_add(k);
                let v = RandomVariation::new(class, &l.config.bbox, seed, args.amp);
                let label = format!("random seed {seed}");
                variation_checks(&l, &v, &label, class, &mut results)?;
                labels.push(label);
            }
            (class, labels, None)
        }
    };
    let pass = results.iter().all(|r| r["pass"] == true);
    let cfg = VariationConfig { run: &l.config, class, fields: labels, variation_sha256: hash };
    Ok(Report::new(cfg, Some(pass), results))
}

#[derive(Serialize)]
struct GalleryRunConfig {
    command: &'static str,
    entries: Vec<(String, String)>,
    points: Option<usize>,
    seed: u64,
}

/// `verify gallery`: one entry with `--gallery`, every entry otherwise.
pub fn verify_gallery(common: &Common) -> Result<Report, CliError> {
    if common.spec.is_some() {
        return Err(CliError::Config("verify gallery checks gallery entries; use --gallery NAME or no source".into()));
    }
    let names: Vec<String> = match &common.gallery {
        Some(n) => vec![n.clone()],
        None => list_entries().into_iter().map(String::from).collect(),
    };
    if names.len() > 1 && (common.points.is_some() || common.bbox.is_some()) {
        return Err(CliError::Config("--points and --box need a single --gallery entry".into()));
    }
    let mut results = Vec::new();
    let mut entries = Vec::new();
    for name in &names {
        let sub = Common { gallery: Some(name.clone()), ..common.clone() };
        let l = load(&sub, "verify gallery", DEFAULT_TOL)?;
        let entry = l.entry.as_ref().expect("gallery source");
        let rep = verify_entry_at(entry, &l.structure, &l.points)?;
        for e in rep.expected {
            results.push(json!({
                "entry": name,
                "check": e.quantity.name(),
                "kind": "expected",
                "residual": e.worst,
                "tolerance": e.tol,
                "provenance": e.provenance,
                "pass": e.pass,
            }));
        }
        for f in rep.flags {
            results.push(json!({
                "entry": name,
                "check": f.check,
                "kind": if f.expected_critical { "critical" } else { "noncritical" },
                "residual": f.value,
                "tolerance": DEFAULT_TOL,
                "provenance": entry.flags.iter().find(|x| x.check.to_string() == f.check).map(|x| to_value(x.provenance)),
                "pass": f.matches,
            }));
        }
        entries.push((name.clone(), l.config.spec_sha256.clone()));
    }
    let pass = results.iter().all(|r| r["pass"] == true);
    let cfg = GalleryRunConfig {
        command: "verify gallery",
        entries,
        points: if common.points.is_some() { None } else { Some(common.random.unwrap_or(crate::config::DEFAULT_POINTS)) },
        seed: common.seed,
    };
    Ok(Report::new(cfg, Some(pass), results))
}

#[derive(Debug, Clone, Args)]
pub struct GalleryArgs {
    /// Show a single entry.
    #[arg(long)]
    pub gallery: Option<String>,
    /// Keep entries critical for this regime (repeatable).
    #[arg(long = "critical")]
    pub critical: Vec<Regime>,
    /// Keep entries clearly non-critical for this regime (repeatable).
    #[arg(long = "noncritical")]
    pub noncritical: Vec<Regime>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Listing of entries with their expected-value tables and flags.
pub fn gallery(args: &GalleryArgs) -> Result<Report, CliError> {
    let names: Vec<&str> = match &args.gallery {
        Some(n) => vec![load_entry(n)?.name],
        None => list_entries(),
    };
    let mut results = Vec::new();
    for name in names {
        let e = load_entry(name)?;
        let keep = args.critical.iter().all(|r| e.regime(*r) == Some(true))
            && args.noncritical.iter().all(|r| e.regime(*r) == Some(false));
        if !keep {
            continue;
        }
        let s = e.structure()?;
        let regimes: serde_json::Map<String, Value> = [Regime::BarGPerp, Regime::BarGTop, Regime::Flow, Regime::Twist]
            .into_iter()
            .map(|r| (regime_name(r).to_string(), json!(e.regime(r))))
            .collect();
        results.push(json!({
            "name": e.name,
            "summary": e.summary,
            "dim": s.dim,
            "dtilde_dim": s.n,
            "spec_sha256": sha256_hex(e.spec),
            "basis": e.basis,
            "expected": e.expected,
            "flags": e.flags,
            "critical": regimes,
        }));
    }
    let cfg = json!({
        "command": "gallery",
        "critical": args.critical.iter().map(|r| regime_name(*r)).collect::<Vec<_>>(),
        "noncritical": args.noncritical.iter().map(|r| regime_name(*r)).collect::<Vec<_>>(),
    });
    Ok(Report::new(cfg, None, results))
}

//! Built-in almost-product structures with expected values and criticality
//! flags. Spec texts live in `data/`.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::euler_lagrange::{self as el, Constant, Constants, Equation, DEFAULT_TOL};
use crate::expr::{self, Expr};
use crate::geometry::{algebra as alg, GeomError, Geometry, Model, Side};
use crate::jets::seed_dual;
use crate::linalg::max_abs;
use crate::structure::{ProductStructure, StructureError};

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("unknown gallery entry `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("{0}")]
    Entry(String),
}

/// How an expected value is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "note")]
pub enum Provenance {
    /// Reproduces a closed-form value stated for this example.
    Published(&'static str),
    /// Immediate from the construction.
    Trivial,
    /// Computed independently; the note names the oracle.
    Derived(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    SMix,
    /// `Ric(N, N)` for a unit line field N spanning D̃.
    RicN,
    /// Max |h| over the second fundamental form of D̃.
    SecondFormDtilde,
    /// Max |h| over the second fundamental form of 𝒟.
    SecondFormD,
    /// Max |H| for the mean curvature of D̃.
    MeanDtilde,
    /// Max |H| for the mean curvature of 𝒟.
    MeanD,
    /// `⟨T,T⟩` for the integrability tensor of D̃.
    TwistNormDtilde,
    /// `⟨T̃,T̃⟩` for the integrability tensor of 𝒟.
    TwistNormD,
    /// Shape operator of 𝒟 along the first frame vector, in the entry basis.
    ShapeOpD,
    /// Integrability operator of 𝒟 along the first frame vector, in the entry basis.
    TwistOpD,
    /// Partial Ricci tensor on 𝒟 (trace over D̃).
    RicciD,
    /// Partial Ricci tensor on D̃ (trace over 𝒟).
    RicciDtilde,
    /// Mean curvature of the leaves along the unit normal (codimension one).
    LeafTau,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::SMix => "s_mix",
            Quantity::RicN => "ric_n",
            Quantity::SecondFormDtilde => "second_form_dtilde",
            Quantity::SecondFormD => "second_form_d",
            Quantity::MeanDtilde => "mean_dtilde",
            Quantity::MeanD => "mean_d",
            Quantity::TwistNormDtilde => "twist_norm_dtilde",
            Quantity::TwistNormD => "twist_norm_d",
            Quantity::ShapeOpD => "shape_op_d",
            Quantity::TwistOpD => "twist_op_d",
            Quantity::RicciD => "ricci_d",
            Quantity::RicciDtilde => "ricci_dtilde",
            Quantity::LeafTau => "leaf_tau",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Scalar(f64),
    /// Expression in the chart coordinates and entry parameters.
    Formula(&'static str),
    Matrix(Vec<Vec<f64>>),
    /// A multiple of the metric on the relevant block.
    MetricMultiple(f64),
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expected {
    pub quantity: Quantity,
    pub value: Value,
    pub tol: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    Flow,
    Twist,
    Leaf,
}

/// What a criticality flag refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "which")]
pub enum Check {
    /// Pointwise residual of an equation, with pointwise constants unless the
    /// entry supplies them.
    Equation(Equation),
    /// Consistency of the two λ recoveries under volume-preserving variations.
    Volume(VolumeKind),
    /// Constancy of the side's mean-value constant over the domain, which
    /// upgrades pointwise criticality to every subdomain.
    ConstantSStar(SideName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SideName {
    D,
    Dtilde,
}

impl SideName {
    pub fn side(self) -> Side {
        match self {
            SideName::D => Side::Top,
            SideName::Dtilde => Side::Perp,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Check::Equation(e) => write!(f, "{e}"),
            Check::Volume(k) => write!(f, "volume_{}", format!("{k:?}").to_lowercase()),
            Check::ConstantSStar(SideName::D) => f.write_str("constant_s_star"),
            Check::ConstantSStar(SideName::Dtilde) => f.write_str("constant_s_star_tilde"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Flag {
    pub check: Check,
    pub critical: bool,
    pub provenance: Provenance,
}

/// Variation regimes a user may filter by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    BarGPerp,
    BarGTop,
    Flow,
    Twist,
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bar-g-perp" => Ok(Regime::BarGPerp),
            "bar-g-top" => Ok(Regime::BarGTop),
            "flow" => Ok(Regime::Flow),
            "twist" => Ok(Regime::Twist),
            _ => Err(format!("unknown regime `{s}`")),
        }
    }
}

impl Regime {
    pub fn equations(self) -> &'static [Equation] {
        match self {
            Regime::BarGPerp => &[Equation::GeneralPerp, Equation::GeneralMixed],
            Regime::BarGTop => &[Equation::GeneralTop, Equation::GeneralMixed],
            Regime::Flow => &[Equation::FlowPerp, Equation::FlowMixed, Equation::FlowTop],
            Regime::Twist => &[Equation::TwistPerp, Equation::TwistMixed, Equation::TwistTop],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GalleryEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub spec: &'static str,
    /// Vector fields (coordinate components as expressions) spanning 𝒟, used
    /// for matrix-valued expectations.
    pub basis: Option<&'static [&'static str]>,
    /// Supplied value of the umbilical leaf constant.
    pub c_hat: Option<f64>,
    pub expected: Vec<Expected>,
    pub flags: Vec<Flag>,
}

const ENTRY_NAMES: [&str; 11] = [
    "euclidean_product",
    "lorentz_product",
    "r3_contact",
    "s3_hopf",
    "s7_three_sasakian",
    "codim1_coth_tanh",
    "codim1_tau_riccati",
    "codim1_bifoliated",
    "warped_product",
    "lorentz_rotating",
    "heisenberg_anisotropic",
];

pub fn list_entries() -> Vec<&'static str> {
    ENTRY_NAMES.to_vec()
}

fn ex(quantity: Quantity, value: Value, tol: f64, provenance: Provenance) -> Expected {
    Expected { quantity, value, tol, provenance }
}

fn flags(list: &[(Check, bool)], provenance: Provenance) -> Vec<Flag> {
    list.iter().map(|&(check, critical)| Flag { check, critical, provenance }).collect()
}

use Check::{ConstantSStar as Cs, Equation as Eqn, Volume as Vol};
use Equation as E;
use Provenance::{Derived, Published, Trivial};
use Quantity as Q;

const FLAT_ALL: [(Check, bool); 14] = [
    (Eqn(E::GeneralPerp), true),
    (Eqn(E::GeneralMixed), true),
    (Eqn(E::GeneralTop), true),
    (Eqn(E::FlowPerp), true),
    (Eqn(E::FlowMixed), true),
    (Eqn(E::FlowTop), true),
    (Eqn(E::JacobiIsotropy), true),
    (Eqn(E::MixedRicci), true),
    (Eqn(E::TwistPerp), true),
    (Eqn(E::TwistMixed), true),
    (Eqn(E::TwistTop), true),
    (Vol(VolumeKind::Flow), true),
    (Vol(VolumeKind::Twist), true),
    (Cs(SideName::D), true),
];

fn flat_expected() -> Vec<Expected> {
    vec![
        ex(Q::SMix, Value::Zero, 1e-12, Trivial),
        ex(Q::RicN, Value::Zero, 1e-12, Trivial),
        ex(Q::SecondFormDtilde, Value::Zero, 1e-12, Trivial),
        ex(Q::SecondFormD, Value::Zero, 1e-12, Trivial),
        ex(Q::TwistNormD, Value::Zero, 1e-12, Trivial),
        ex(Q::TwistNormDtilde, Value::Zero, 1e-12, Trivial),
    ]
}

pub fn load_entry(name: &str) -> Result<GalleryEntry, GalleryError> {
    let mut e = GalleryEntry {
        name: ENTRY_NAMES.iter().copied().find(|n| *n == name).ok_or_else(|| GalleryError::Unknown(name.into()))?,
        summary: "",
        spec: "",
        basis: None,
        c_hat: None,
        expected: vec![],
        flags: vec![],
    };
    match name {
        "euclidean_product" => {
            e.summary = "flat R^3 split along a coordinate axis";
            e.spec = include_str!("../data/euclidean_product.spec");
            e.expected = flat_expected();
            e.flags = flags(&FLAT_ALL, Trivial);
        }
        "lorentz_product" => {
            e.summary = "Minkowski R^3 split along the time axis";
            e.spec = include_str!("../data/lorentz_product.spec");
            e.expected = flat_expected();
            e.flags = flags(&FLAT_ALL, Trivial);
        }
        "r3_contact" => {
            e.summary = "contact metric structure on R^3, D̃ spanned by the Reeb field";
            e.spec = include_str!("../data/r3_contact.spec");
            e.basis = Some(&["2, -2*x2, 2*x1", "0, 2, 0"]);
            e.expected = vec![
                ex(Q::ShapeOpD, Value::Matrix(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]), 1e-9, Published("adapted frame display")),
                ex(Q::TwistOpD, Value::Matrix(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]), 1e-9, Published("adapted frame display")),
                ex(Q::RicN, Value::Zero, 1e-8, Published("Ricci curvature of the Reeb field vanishes")),
                ex(Q::MeanDtilde, Value::Zero, 1e-9, Published("Reeb orbits are geodesics")),
                ex(Q::MeanD, Value::Zero, 1e-9, Published("trace of the shape operator vanishes")),
                ex(Q::TwistNormD, Value::Scalar(2.0), 1e-9, Published("squared norm equals p for contact structures")),
                ex(Q::SMix, Value::Zero, 1e-9, Derived("sum of mixed sectional curvatures in the adapted frame")),
            ];
            let mut f = flags(
                &[
                    (Eqn(E::GeneralPerp), false),
                    (Eqn(E::GeneralMixed), true),
                    (Eqn(E::GeneralTop), true),
                    (Eqn(E::FlowPerp), false),
                    (Eqn(E::FlowMixed), true),
                    (Eqn(E::FlowTop), true),
                    (Eqn(E::TwistPerp), true),
                    (Eqn(E::TwistMixed), true),
                    (Eqn(E::TwistTop), true),
                    (Cs(SideName::D), true),
                    (Cs(SideName::Dtilde), true),
                ],
                Published("contact metric example"),
            );
            f.push(Flag {
                check: Vol(VolumeKind::Twist),
                critical: false,
                provenance: Derived("λ recovered from both traces: 2 − p/2 against 3p/2"),
            });
            e.flags = f;
        }
        "s3_hopf" => {
            e.summary = "round S^3 with the Hopf field, a K-contact structure";
            e.spec = include_str!("../data/s3_hopf.spec");
            e.expected = vec![
                ex(Q::RicN, Value::Scalar(2.0), 1e-7, Published("Ric_N = p for K-contact flows")),
                ex(Q::SMix, Value::Scalar(2.0), 1e-9, Derived("unit sectional curvature times n·p")),
                ex(Q::TwistNormD, Value::Scalar(2.0), 1e-9, Published("squared norm equals p for contact structures")),
                ex(Q::SecondFormDtilde, Value::Zero, 1e-9, Derived("unit Killing field has geodesic orbits")),
                ex(Q::SecondFormD, Value::Zero, 1e-9, Derived("Killing field makes 𝒟 totally geodesic")),
            ];
            let mut f = flags(
                &[
                    (Eqn(E::GeneralPerp), true),
                    (Eqn(E::GeneralMixed), true),
                    (Eqn(E::GeneralTop), true),
                    (Eqn(E::FlowPerp), true),
                    (Eqn(E::FlowMixed), true),
                    (Eqn(E::FlowTop), true),
                    (Eqn(E::JacobiIsotropy), true),
                    (Eqn(E::MixedRicci), true),
                    (Eqn(E::TwistPerp), true),
                    (Eqn(E::TwistMixed), true),
                    (Eqn(E::TwistTop), true),
                    (Cs(SideName::D), true),
                    (Cs(SideName::Dtilde), true),
                ],
                Published("K-contact structures are critical"),
            );
            f.push(Flag {
                check: Vol(VolumeKind::Flow),
                critical: false,
                provenance: Published("the λ system has a solution only when ⟨T̃,T̃⟩ = 0"),
            });
            f.push(Flag {
                check: Vol(VolumeKind::Twist),
                critical: false,
                provenance: Derived("λ recovered from both traces: 2 − p/2 against 3p/2"),
            });
            e.flags = f;
        }
        "s7_three_sasakian" => {
            e.summary = "round S^7 with the three Reeb fields of its 3-Sasakian structure";
            e.spec = include_str!("../data/s7_three_sasakian.spec");
            e.expected = vec![
                ex(Q::RicciD, Value::MetricMultiple(3.0), 1e-6, Published("partial Ricci tensors of a 3-Sasakian structure")),
                ex(Q::RicciDtilde, Value::MetricMultiple(4.0), 1e-6, Published("partial Ricci tensors of a 3-Sasakian structure")),
                ex(Q::TwistNormD, Value::Scalar(12.0), 1e-6, Published("⟨T̃,T̃⟩ = 3p")),
                ex(Q::TwistNormDtilde, Value::Zero, 1e-9, Published("the Reeb fields span an integrable distribution")),
                ex(Q::SMix, Value::Scalar(12.0), 1e-9, Derived("unit sectional curvature times n·p")),
            ];
            e.flags = flags(
                &[
                    (Eqn(E::GeneralPerp), true),
                    (Eqn(E::GeneralMixed), true),
                    (Eqn(E::GeneralTop), true),
                    (Eqn(E::TwistPerp), true),
                    (Eqn(E::TwistMixed), true),
                    (Eqn(E::TwistTop), true),
                    (Cs(SideName::D), true),
                    (Cs(SideName::Dtilde), true),
                ],
                Published("3-Sasakian structures are critical"),
            );
        }
        "codim1_coth_tanh" => {
            e.summary = "codimension-one foliation with principal curvatures −coth, −tanh";
            e.spec = include_str!("../data/codim1_coth_tanh.spec");
            e.expected = vec![
                ex(
                    Q::LeafTau,
                    Value::Formula("-sqrt(c1)*(1/tanh(sqrt(c1)*(x0 + c2)) + tanh(sqrt(c1)*(x0 + c2)))"),
                    1e-9,
                    Published("explicit solution of the leaf equations"),
                ),
                ex(Q::SMix, Value::Scalar(-2.0), 1e-9, Derived("−f''/f for both warping functions")),
                ex(Q::TwistNormDtilde, Value::Zero, 1e-12, Trivial),
            ];
            e.flags = flags(
                &[(Eqn(E::LeafShape), true), (Eqn(E::LeafMixed), true), (Vol(VolumeKind::Leaf), true)],
                Published("explicit solution of the leaf equations"),
            );
            e.flags.push(Flag { check: Eqn(E::LeafUmbilic), critical: false, provenance: Derived("distinct principal curvatures") });
        }
        "codim1_tau_riccati" => {
            e.summary = "umbilical codimension-one foliation whose mean curvature solves the Riccati relation";
            e.spec = include_str!("../data/codim1_tau_riccati.spec");
            e.c_hat = Some(-1.0);
            e.expected = vec![ex(
                Q::LeafTau,
                Value::Formula("c*(1 - 2*(c - tau0)/((c + tau0)*exp(-2*c*x0) + c - tau0))"),
                1e-9,
                Published("closed-form mean curvature along the normal"),
            )];
            e.flags = flags(
                &[(Eqn(E::LeafUmbilic), true), (Eqn(E::LeafMixed), true)],
                Derived("umbilical system with the supplied constant −c²"),
            );
            e.flags.push(Flag { check: Eqn(E::LeafShape), critical: false, provenance: Derived("direct evaluation") });
        }
        "codim1_bifoliated" => {
            e.summary = "codimension-one foliation with normal-independent principal curvatures";
            e.spec = include_str!("../data/codim1_bifoliated.spec");
            e.expected = vec![ex(Q::LeafTau, Value::Zero, 1e-9, Derived("principal curvatures k, −k, 0"))];
            e.flags = flags(&[(Eqn(E::LeafMixed), true)], Derived("biregular mixed condition in closed form"));
            e.flags.push(Flag { check: Eqn(E::LeafShape), critical: false, provenance: Derived("direct evaluation") });
        }
        "warped_product" => {
            e.summary = "flat base with a warped flat fibre, D̃ the fibre";
            e.spec = include_str!("../data/warped_product.spec");
            e.expected = vec![
                ex(Q::SecondFormD, Value::Zero, 1e-12, Derived("base slices of a warped product are totally geodesic")),
                ex(Q::TwistNormD, Value::Zero, 1e-12, Trivial),
                ex(Q::TwistNormDtilde, Value::Zero, 1e-12, Trivial),
            ];
            e.flags = flags(
                &[
                    (Eqn(E::GeneralPerp), false),
                    (Eqn(E::GeneralMixed), true),
                    (Eqn(E::GeneralTop), true),
                    (Eqn(E::TwistPerp), true),
                    (Eqn(E::TwistMixed), true),
                    (Eqn(E::TwistTop), true),
                    (Cs(SideName::Dtilde), false),
                ],
                Derived("direct evaluation"),
            );
        }
        "lorentz_rotating" => {
            e.summary = "Lorentzian metric with a unit timelike Killing field of constant twist";
            e.spec = include_str!("../data/lorentz_rotating.spec");
            e.expected = vec![
                ex(Q::RicN, Value::Formula("2*w^2"), 1e-9, Derived("Jacobi operator equals −T̃♯² for a unit Killing field")),
                ex(Q::TwistNormD, Value::Formula("-2*w^2"), 1e-9, Derived("frame sum with a timelike normal")),
                ex(Q::SecondFormDtilde, Value::Zero, 1e-9, Derived("unit Killing field has geodesic orbits")),
                ex(Q::SecondFormD, Value::Zero, 1e-9, Derived("Killing field makes 𝒟 totally geodesic")),
            ];
            e.flags = flags(
                &[
                    (Eqn(E::GeneralPerp), true),
                    (Eqn(E::GeneralMixed), true),
                    (Eqn(E::GeneralTop), true),
                    (Eqn(E::FlowPerp), true),
                    (Eqn(E::FlowMixed), true),
                    (Eqn(E::FlowTop), true),
                    (Eqn(E::JacobiIsotropy), true),
                    (Eqn(E::MixedRicci), true),
                    (Cs(SideName::D), true),
                    (Cs(SideName::Dtilde), true),
                ],
                Derived("direct evaluation"),
            );
        }
        "heisenberg_anisotropic" => {
            e.summary = "5-dim Heisenberg-type metric with unequal twist rates, D̃ the centre";
            e.spec = include_str!("../data/heisenberg_anisotropic.spec");
            e.expected = vec![
                ex(Q::RicN, Value::Formula("(a^2 + b^2)/2"), 1e-9, Derived("Jacobi operator equals −T̃♯² for a unit Killing field")),
                ex(Q::TwistNormD, Value::Formula("(a^2 + b^2)/2"), 1e-9, Derived("frame sum of the twist rates")),
            ];
            e.flags = flags(
                &[
                    (Eqn(E::JacobiIsotropy), false),
                    (Eqn(E::MixedRicci), true),
                    (Eqn(E::FlowPerp), false),
                    (Eqn(E::FlowMixed), true),
                    (Eqn(E::FlowTop), true),
                ],
                Derived("Jacobi operator has eigenvalues a²/4 and b²/4"),
            );
        }
        _ => unreachable!(),
    }
    Ok(e)
}

impl GalleryEntry {
    pub fn structure(&self) -> Result<ProductStructure, GalleryError> {
        Ok(ProductStructure::load(self.spec)?)
    }

    pub fn constants(&self) -> Constants {
        Constants { c_hat: self.c_hat.map(Constant::supplied), ..Constants::default() }
    }

    pub fn flag(&self, check: Check) -> Option<bool> {
        self.flags.iter().find(|f| f.check == check).map(|f| f.critical)
    }

    /// Whether the entry is flagged critical for every equation of a regime;
    /// `None` when some of them are not flagged.
    pub fn regime(&self, r: Regime) -> Option<bool> {
        let mut all = true;
        for e in r.equations() {
            all &= self.flag(Check::Equation(*e))?;
        }
        Some(all)
    }

    fn basis_at(&self, s: &ProductStructure, x: &[f64]) -> Result<Vec<Vec<f64>>, GalleryError> {
        let rows = self.basis.ok_or_else(|| GalleryError::Entry(format!("{} declares no basis", self.name)))?;
        let names: BTreeSet<String> = s.params.keys().cloned().collect();
        rows.iter()
            .map(|row| {
                row.split(',')
                    .map(|t| {
                        let e = expr::parse(t.trim(), s.dim, &names).map_err(GeomError::from)?;
                        Ok(e.eval(x, &s.params).map_err(GeomError::from)?)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Discrepancy between an expected value and its evaluation at `x`.
pub fn discrepancy(
    entry: &GalleryEntry,
    s: &ProductStructure,
    geo: &Geometry,
    exp: &Expected,
) -> Result<f64, GalleryError> {
    let eps = geo.eps();
    let max3 = |t: &Vec<Vec<Vec<f64>>>| t.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let maxv = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let target = |v: &Value| -> Result<f64, GalleryError> {
        match v {
            Value::Scalar(a) => Ok(*a),
            Value::Zero => Ok(0.0),
            Value::Formula(t) => {
                let names: BTreeSet<String> = s.params.keys().cloned().collect();
                let e: Expr = expr::parse(t, s.dim, &names).map_err(GeomError::from)?;
                Ok(e.eval(&geo.x, &s.params).map_err(GeomError::from)?)
            }
            _ => Err(GalleryError::Entry(format!("{} needs a scalar value", exp.quantity.name()))),
        }
    };
    let scalar = |v: f64| -> Result<f64, GalleryError> { Ok((v - target(&exp.value)?).abs()) };
    match exp.quantity {
        Q::SMix => scalar(geo.smix()),
        Q::RicN => scalar(geo.ric_n().ok_or_else(|| GalleryError::Entry("Ric_N needs dim D̃ = 1".into()))?),
        Q::SecondFormDtilde => scalar(max3(&geo.top.h)),
        Q::SecondFormD => scalar(max3(&geo.perp.h)),
        Q::MeanDtilde => scalar(maxv(&geo.top.mean)),
        Q::MeanD => scalar(maxv(&geo.perp.mean)),
        Q::TwistNormDtilde => scalar(geo.top.tt),
        Q::TwistNormD => scalar(geo.perp.tt),
        Q::LeafTau => scalar(geo.top.tau.ok_or_else(|| GalleryError::Entry("leaf τ needs dim 𝒟 = 1".into()))?[0]),
        Q::ShapeOpD | Q::TwistOpD => {
            let Value::Matrix(m) = &exp.value else {
                return Err(GalleryError::Entry("operator expectations are matrices".into()));
            };
            let basis = entry.basis_at(s, &geo.x)?;
            let op = if exp.quantity == Q::ShapeOpD { &geo.perp.a_ops[0] } else { &geo.perp.t_ops[0] };
            let got = geo.in_basis(op, &basis);
            Ok(max_abs(&crate::linalg::sub(&got, m)))
        }
        Q::RicciD | Q::RicciDtilde => {
            let Value::MetricMultiple(k) = exp.value else {
                return Err(GalleryError::Entry("partial Ricci expectations are metric multiples".into()));
            };
            let side = if exp.quantity == Q::RicciD { &geo.top } else { &geo.perp };
            let r = alg::add(&side.ricci, &alg::metric_block(eps, side.outer.clone()), -k);
            Ok(max_abs(&alg::restrict(&r, side.outer.clone(), side.outer.clone())))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagVerdict {
    pub check: String,
    pub expected_critical: bool,
    /// Largest residual (or λ gap, or spread) over the sample.
    pub value: f64,
    pub matches: bool,
}

/// Evaluates one flag over sample points. Critical means every residual is
/// within tolerance; non-critical means some residual is clearly nonzero.
pub fn evaluate_flag(
    entry: &GalleryEntry,
    s: &ProductStructure,
    geos: &[Geometry],
    flag: &Flag,
    tol: f64,
) -> Result<FlagVerdict, GalleryError> {
    let consts = entry.constants();
    let mut worst = 0.0f64;
    for geo in geos {
        let v = match flag.check {
            Check::Equation(eq) => el::el_report(geo, eq, &consts, tol)?.norm,
            Check::Volume(kind) => {
                let r = match kind {
                    VolumeKind::Flow => el::volume_flow(geo, tol)?,
                    VolumeKind::Twist => el::volume_twist(geo, tol),
                    VolumeKind::Leaf => el::volume_leaf(geo, tol)?,
                };
                r.gap.max(r.remainder)
            }
            Check::ConstantSStar(side) => {
                let vals: Vec<f64> = geos.iter().map(|g| g.s_star(side.side())).collect();
                let (mean, std) = el::spread(&vals);
                worst = if std <= 1e-7 || std <= 1e-6 * mean.abs() { 0.0 } else { std };
                break;
            }
        };
        worst = worst.max(v);
    }
    let _ = s;
    let matches = if flag.critical { worst <= tol } else { worst >= el::NONCRITICAL_FACTOR * tol };
    Ok(FlagVerdict { check: flag.check.to_string(), expected_critical: flag.critical, value: worst, matches })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpectedVerdict {
    pub quantity: Quantity,
    pub worst: f64,
    pub tol: f64,
    pub provenance: Provenance,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryReport {
    pub name: &'static str,
    pub points: Vec<Vec<f64>>,
    pub expected: Vec<ExpectedVerdict>,
    pub flags: Vec<FlagVerdict>,
}

impl EntryReport {
    pub fn pass(&self) -> bool {
        self.expected.iter().all(|e| e.pass) && self.flags.iter().all(|f| f.matches)
    }
}

/// Checks every expected value and flag of an entry at `count` seeded
/// interior points.
pub fn verify_entry(entry: &GalleryEntry, count: usize, seed: u64) -> Result<EntryReport, GalleryError> {
    let s = entry.structure()?;
    let points = s.sample_points(count, seed, 0.05);
    verify_entry_at(entry, &s, &points)
}

pub fn verify_entry_at(
    entry: &GalleryEntry,
    s: &ProductStructure,
    points: &[Vec<f64>],
) -> Result<EntryReport, GalleryError> {
    let geos = points.iter().map(|x| Geometry::new(s, x)).collect::<Result<Vec<_>, _>>()?;
    let mut expected = Vec::new();
    for exp in &entry.expected {
        let mut worst = 0.0f64;
        for geo in &geos {
            worst = worst.max(discrepancy(entry, s, geo, exp)?);
        }
        expected.push(ExpectedVerdict {
            quantity: exp.quantity,
            worst,
            tol: exp.tol,
            provenance: exp.provenance,
            pass: worst <= exp.tol,
        });
    }
    let flags = entry
        .flags
        .iter()
        .map(|f| evaluate_flag(entry, s, &geos, f, DEFAULT_TOL))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EntryReport { name: entry.name, points: points.to_vec(), expected, flags })
}

/// `[X_a, X_b]` of two spanning fields of D̃ at `x`, in coordinates.
pub fn bracket(s: &ProductStructure, x: &[f64], a: usize, b: usize) -> Result<Vec<f64>, GalleryError> {
    let xd = seed_dual(x);
    let f = s.span(&xd)?;
    let d = s.dim;
    Ok((0..d)
        .map(|k| (0..d).map(|j| f[a][j].v * f[b][k].d[j] - f[b][j].v * f[a][k].d[j]).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_loads() {
        for name in list_entries() {
            let e = load_entry(name).unwrap();
            let s = e.structure().unwrap();
            assert_eq!(s.name, name);
            assert!(!e.expected.is_empty() && !e.flags.is_empty());
        }
        assert!(matches!(load_entry("nope"), Err(GalleryError::Unknown(_))));
    }

    #[test]
    fn regimes_follow_flags() {
        let r3 = load_entry("r3_contact").unwrap();
        assert_eq!(r3.regime(Regime::BarGPerp), Some(false));
        assert_eq!(r3.regime(Regime::BarGTop), Some(true));
        assert_eq!(r3.regime(Regime::Twist), Some(true));
        assert_eq!(load_entry("codim1_bifoliated").unwrap().regime(Regime::Flow), None);
    }
}

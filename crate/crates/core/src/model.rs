//! Coefficient sets, constitutive laws and the boundedness-regime classifier.
//!
//! A [`ModelSpec`] describes the competition system
//!
//! ```text
//! u_t = div(D1(u) grad u + s chi phi(u) grad v) + (a1 - b1 u^alpha - c1 v) u
//! v_t = D2 lap v + (a2 - b2 u - c2 v) v        (or 0 = ... in the elliptic limit)
//! ```
//!
//! with zero-flux boundaries, where `s = +1` for repulsion and `s = -1` for
//! attraction. The classifier evaluates the sufficient growth-rate conditions
//! on `(m1, m2, alpha)` under which solutions are known to stay bounded.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("domain error: {what} must be nonnegative, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid model parameter `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("ideal-free kinetics need the local resource value m(x)")]
    MissingResource,
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaxisSign {
    /// Flux `D1 grad u + chi phi(u) grad v`: u is driven away from high v.
    Repulsion,
    /// Flux `D1 grad u - chi phi(u) grad v`: u is driven towards high v.
    Attraction,
}

impl TaxisSign {
    pub fn sigma(self) -> f64 {
        match self {
            TaxisSign::Repulsion => 1.0,
            TaxisSign::Attraction => -1.0,
        }
    }
}

impl fmt::Display for TaxisSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaxisSign::Repulsion => "repulsion",
            TaxisSign::Attraction => "attraction",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VDynamics {
    Parabolic,
    Elliptic,
}

impl fmt::Display for VDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VDynamics::Parabolic => "parabolic",
            VDynamics::Elliptic => "elliptic",
        })
    }
}

/// Density-dependent random dispersal rate of u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionLaw {
    /// `D1(u) = M1 (1 + u)^m1`
    Power {
        #[serde(rename = "M1")]
        scale: f64,
        #[serde(rename = "m1")]
        exponent: f64,
    },
    /// `D1(u) = d1 + 2 rho11 u`
    Affine { d1: f64, rho11: f64 },
    /// `D1(u, v) = d1 + 2 rho11 u + rho12 v`
    SktCross { d1: f64, rho11: f64, rho12: f64 },
}

impl DiffusionLaw {
    pub fn constant(d1: f64) -> Self {
        DiffusionLaw::Power {
            scale: d1,
            exponent: 0.0,
        }
    }

    /// Unchecked evaluation for the hot loops; callers guarantee `u, v >= 0`.
    #[inline]
    pub fn value(&self, u: f64, v: f64) -> f64 {
        match *self {
            DiffusionLaw::Power { scale, exponent } => {
                if exponent == 0.0 {
                    scale
                } else {
                    scale * (1.0 + u).powf(exponent)
                }
            }
            DiffusionLaw::Affine { d1, rho11 } => d1 + 2.0 * rho11 * u,
            DiffusionLaw::SktCross { d1, rho11, rho12 } => d1 + 2.0 * rho11 * u + rho12 * v,
        }
    }

    /// Growth exponent used by the classifier.
    pub fn effective_m1(&self) -> f64 {
        match *self {
            DiffusionLaw::Power { exponent, .. } => exponent,
            DiffusionLaw::Affine { rho11, .. } | DiffusionLaw::SktCross { rho11, .. } => {
                if rho11 > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn depends_on_v(&self) -> bool {
        matches!(self, DiffusionLaw::SktCross { rho12, .. } if *rho12 > 0.0)
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            DiffusionLaw::Power { scale, exponent } => {
                positive("diffusion.M1", scale)?;
                finite("diffusion.m1", exponent)
            }
            DiffusionLaw::Affine { d1, rho11 } => {
                positive("diffusion.d1", d1)?;
                nonnegative("diffusion.rho11", rho11)
            }
            DiffusionLaw::SktCross { d1, rho11, rho12 } => {
                positive("diffusion.d1", d1)?;
                nonnegative("diffusion.rho11", rho11)?;
                nonnegative("diffusion.rho12", rho12)
            }
        }
    }
}

/// Density-dependent taxis sensitivity `phi(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensitivityLaw {
    /// `phi(u) = M2 u^m2`
    Power {
        #[serde(rename = "M2")]
        scale: f64,
        #[serde(rename = "m2")]
        exponent: f64,
    },
    /// `phi(u) = u`
    Linear,
}

impl SensitivityLaw {
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            SensitivityLaw::Power { scale, exponent } => {
                if u <= 0.0 {
                    0.0
                } else if exponent == 1.0 {
                    scale * u
                } else {
                    scale * u.powf(exponent)
                }
            }
            SensitivityLaw::Linear => u,
        }
    }

    /// `(M2, m2)` with `phi(u) = M2 u^m2` holding as an equality.
    pub fn effective(&self) -> (f64, f64) {
        match *self {
            SensitivityLaw::Power { scale, exponent } => (scale, exponent),
            SensitivityLaw::Linear => (1.0, 1.0),
        }
    }

    pub fn effective_m2(&self) -> f64 {
        self.effective().1
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            SensitivityLaw::Power { scale, exponent } => {
                positive("sensitivity.M2", scale)?;
                positive("sensitivity.m2", exponent)
            }
            SensitivityLaw::Linear => Ok(()),
        }
    }
}

/// Spatial resource distribution `m(x)` of the ideal-free dispersal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResourceField {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * cos(pi modes x / Lx)` (times the same factor in y on 2D grids).
    Cosine {
        mean: f64,
        amplitude: f64,
        modes: u32,
    },
    /// Cell values read from a field CSV file.
    File {
        path: PathBuf,
    },
}

impl ResourceField {
    fn validate(&self) -> Result<(), ModelError> {
        match self {
            ResourceField::Constant { value } => positive("kinetics.resource.value", *value),
            ResourceField::Cosine {
                mean, amplitude, ..
            } => {
                finite("kinetics.resource.amplitude", *amplitude)?;
                if !(mean.is_finite() && *mean > amplitude.abs()) {
                    return Err(invalid(
                        "kinetics.resource.mean",
                        format!("must exceed |amplitude| so that m(x) > 0, got {mean}"),
                    ));
                }
                Ok(())
            }
            ResourceField::File { path } => {
                if path.as_os_str().is_empty() {
                    Err(invalid("kinetics.resource.path", "empty path".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Reaction terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kinetics {
    /// `(a1 - b1 u^alpha - c1 v) u` and `(a2 - b2 u - c2 v) v`.
    LotkaVolterra,
    /// `(m - u - v) u` and `r (m - u - v) v`, with an extra `-chi u grad m` flux.
    ///
    /// The rate `r` multiplies the v-kinetics as in the rewritten form of the
    /// ideal-free model; the original form corresponds to `r = 1`.
    IdealFree { resource: ResourceField, rate: f64 },
    /// No reactions; pure transport.
    Disabled,
}

impl Kinetics {
    pub fn is_lotka_volterra(&self) -> bool {
        matches!(self, Kinetics::LotkaVolterra)
    }
}

/// Full coefficient set of the competition system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub alpha: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
    pub chi: f64,
    pub taxis_sign: TaxisSign,
    pub diffusion: DiffusionLaw,
    pub sensitivity: SensitivityLaw,
    pub v_dynamics: VDynamics,
    pub kinetics: Kinetics,
    /// Opt-in assumption that b1 is "large enough" for the relaxed
    /// equality cases of the parabolic-elliptic repulsion results.
    #[serde(default)]
    pub assume_b1_large: bool,
}

impl Default for ModelSpec {
    /// Classical diffusive competition in the weak-competition regime.
    fn default() -> Self {
        ModelSpec {
            a1: 3.0,
            b1: 2.0,
            c1: 1.0,
            a2: 2.0,
            b2: 1.0,
            c2: 2.0,
            alpha: 1.0,
            d2: 1.0,
            chi: 0.0,
            taxis_sign: TaxisSign::Repulsion,
            diffusion: DiffusionLaw::constant(1.0),
            sensitivity: SensitivityLaw::Linear,
            v_dynamics: VDynamics::Parabolic,
            kinetics: Kinetics::LotkaVolterra,
            assume_b1_large: false,
        }
    }
}

/// Per-cell kinetic coefficients in Lotka-Volterra form.
///
/// Every kinetics mode reduces to this shape, which is what the
/// positivity-preserving splitting acts on: `a1 u` is production and
/// `(b1 u^alpha + c1 v) u` is loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalRates {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub alpha: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl LocalRates {
    pub const ZERO: LocalRates = LocalRates {
        a1: 0.0,
        b1: 0.0,
        c1: 0.0,
        alpha: 1.0,
        a2: 0.0,
        b2: 0.0,
        c2: 0.0,
    };

    #[inline]
    pub fn u_loss_coefficient(&self, u: f64, v: f64) -> f64 {
        self.b1 * pow_alpha(u, self.alpha) + self.c1 * v
    }

    #[inline]
    pub fn v_loss_coefficient(&self, u: f64, v: f64) -> f64 {
        self.b2 * u + self.c2 * v
    }

    #[inline]
    pub fn rates(&self, u: f64, v: f64) -> (f64, f64) {
        (
            (self.a1 - self.b1 * pow_alpha(u, self.alpha) - self.c1 * v) * u,
            (self.a2 - self.b2 * u - self.c2 * v) * v,
        )
    }
}

#[inline]
pub(crate) fn pow_alpha(u: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        u
    } else {
        u.powf(alpha)
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("a1", self.a1),
            ("b1", self.b1),
            ("c1", self.c1),
            ("a2", self.a2),
            ("b2", self.b2),
            ("c2", self.c2),
            ("alpha", self.alpha),
            ("D2", self.d2),
        ] {
            positive(name, value)?;
        }
        nonnegative("chi", self.chi)?;
        self.diffusion.validate()?;
        self.sensitivity.validate()?;
        if let Kinetics::IdealFree { resource, rate } = &self.kinetics {
            positive("kinetics.rate", *rate)?;
            resource.validate()?;
        }
        Ok(())
    }

    /// Kinetic coefficients at a cell; `m_local` is the resource value there.
    pub fn local_rates(&self, m_local: Option<f64>) -> Result<LocalRates, ModelError> {
        match &self.kinetics {
            Kinetics::LotkaVolterra => Ok(LocalRates {
                a1: self.a1,
                b1: self.b1,
                c1: self.c1,
                alpha: self.alpha,
                a2: self.a2,
                b2: self.b2,
                c2: self.c2,
            }),
            Kinetics::IdealFree { rate, .. } => {
                let m = m_local.ok_or(ModelError::MissingResource)?;
                Ok(LocalRates {
                    a1: m,
                    b1: 1.0,
                    c1: 1.0,
                    alpha: 1.0,
                    a2: rate * m,
                    b2: *rate,
                    c2: *rate,
                })
            }
            Kinetics::Disabled => Ok(LocalRates::ZERO),
        }
    }

    pub fn effective_exponents(&self) -> (f64, f64) {
        (
            self.diffusion.effective_m1(),
            self.sensitivity.effective_m2(),
        )
    }
}

pub fn eval_diffusion(law: &DiffusionLaw, u: f64, v: f64) -> Result<f64, ModelError> {
    check_nonnegative("u", u)?;
    check_nonnegative("v", v)?;
    Ok(law.value(u, v))
}

pub fn eval_sensitivity(law: &SensitivityLaw, u: f64) -> Result<f64, ModelError> {
    check_nonnegative("u", u)?;
    Ok(law.value(u))
}

/// Reaction rates `(f, g)` at a point.
pub fn eval_kinetics(
    spec: &ModelSpec,
    u: f64,
    v: f64,
    m_local: Option<f64>,
) -> Result<(f64, f64), ModelError> {
    check_nonnegative("u", u)?;
    check_nonnegative("v", v)?;
    Ok(spec.local_rates(m_local)?.rates(u, v))
}

fn check_nonnegative(what: &'static str, value: f64) -> Result<(), ModelError> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Domain { what, value })
    }
}

fn invalid(field: &str, reason: String) -> ModelError {
    ModelError::Invalid {
        field: field.to_string(),
        reason,
    }
}

fn positive(field: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            field,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

fn nonnegative(field: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(
            field,
            format!("must be nonnegative and finite, got {value}"),
        ))
    }
}

fn finite(field: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite, got {value}")))
    }
}

// ---------------------------------------------------------------------------
// Regime classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TheoremId {
    Thm1_1,
    Thm1_2,
    Thm4_1,
    Thm4_2,
    Thm4_3,
    Remark4_1,
    Remark4_2,
}

impl TheoremId {
    pub const ALL: [TheoremId; 7] = [
        TheoremId::Thm1_1,
        TheoremId::Thm1_2,
        TheoremId::Thm4_1,
        TheoremId::Thm4_2,
        TheoremId::Thm4_3,
        TheoremId::Remark4_1,
        TheoremId::Remark4_2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::Thm1_1 => "Thm1_1",
            TheoremId::Thm1_2 => "Thm1_2",
            TheoremId::Thm4_1 => "Thm4_1",
            TheoremId::Thm4_2 => "Thm4_2",
            TheoremId::Thm4_3 => "Thm4_3",
            TheoremId::Remark4_1 => "Remark4_1",
            TheoremId::Remark4_2 => "Remark4_2",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Satisfied,
    ConditionallySatisfied,
    Violated,
    NotApplicable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Satisfied => "Satisfied",
            Verdict::ConditionallySatisfied => "ConditionallySatisfied",
            Verdict::Violated => "Violated",
            Verdict::NotApplicable => "NotApplicable",
        }
    }

    /// Satisfied, possibly under an extra hypothesis.
    pub fn guarantees_boundedness(self) -> bool {
        matches!(self, Verdict::Satisfied | Verdict::ConditionallySatisfied)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated sufficient condition `lhs < rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub theorem: TheoremId,
    pub verdict: Verdict,
    #[serde(serialize_with = "serialize_extended_real")]
    pub lhs: f64,
    #[serde(serialize_with = "serialize_extended_real")]
    pub rhs: f64,
    pub note: String,
}

/// JSON has no infinities; they are written as the strings "inf"/"-inf".
fn serialize_extended_real<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    if value.is_finite() {
        s.serialize_f64(*value)
    } else if value.is_nan() {
        s.serialize_str("nan")
    } else if *value > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

impl fmt::Display for RegimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<10} {:<22} lhs={} rhs={}  {}",
            self.theorem.as_str(),
            self.verdict.as_str(),
            fmt_real(self.lhs),
            fmt_real(self.rhs),
            self.note
        )
    }
}

fn fmt_real(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.6}")
    }
}

const EQUALITY_TOL: f64 = 1e-12;

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQUALITY_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Comparison {
    Less,
    Equal,
    Greater,
}

fn compare(lhs: f64, rhs: f64) -> Comparison {
    if nearly_equal(lhs, rhs) {
        Comparison::Equal
    } else if lhs < rhs {
        Comparison::Less
    } else {
        Comparison::Greater
    }
}

/// Evaluates every applicable boundedness condition for `spec` in space dimension `n`.
///
/// Parabolic v yields the two parabolic-parabolic conditions; elliptic v with
/// repulsion yields the two repulsion conditions plus their relaxed equality
/// cases; elliptic v with attraction yields the attraction result.
pub fn classify(spec: &ModelSpec, n: usize) -> Vec<RegimeReport> {
    let (m1, m2) = spec.effective_exponents();
    let alpha = spec.alpha;
    let n = n.max(1);
    let mut caveats: Vec<&str> = Vec::new();
    if spec.diffusion.depends_on_v() {
        caveats.push(
            "caveat: D1 depends on v (rho12 > 0); coverage by the growth hypotheses unverified",
        );
    }
    let mut reports = match (spec.v_dynamics, spec.taxis_sign) {
        (VDynamics::Parabolic, sign) => {
            if sign == TaxisSign::Attraction {
                caveats.push("attraction: the estimates use |chi| only");
            }
            parabolic_reports(m1, m2, alpha, n)
        }
        (VDynamics::Elliptic, TaxisSign::Repulsion) => {
            if n == 1 {
                caveats.push("stated for N >= 2; inequality evaluated as is");
            }
            repulsion_reports(m1, m2, alpha, spec.assume_b1_large)
        }
        (VDynamics::Elliptic, TaxisSign::Attraction) => vec![attraction_report(m1, m2, alpha)],
    };
    for report in &mut reports {
        for c in &caveats {
            report.note.push_str("; ");
            report.note.push_str(c);
        }
    }
    reports
}

fn parabolic_reports(m1: f64, m2: f64, alpha: f64, n: usize) -> Vec<RegimeReport> {
    let nf = n as f64;
    let (rhs1, branch1) = if alpha < 1.0 {
        (2.0 / nf, "alpha < 1: m2 - m1 < 2/N")
    } else {
        (
            (3.0 * nf + 2.0) / (nf * (nf + 2.0)),
            "alpha >= 1: m2 - m1 < (3N+2)/(N(N+2))",
        )
    };
    let (rhs2, branch2) = if alpha < 1.0 {
        (
            alpha.max(m1) + 2.0 / nf,
            "alpha < 1: 2m2 - m1 < max{alpha,m1} + 2/N",
        )
    } else {
        (
            alpha.max(m1) + 4.0 / (nf + 2.0),
            "alpha >= 1: 2m2 - m1 < max{alpha,m1} + 4/(N+2)",
        )
    };
    let lhs1 = m2 - m1;
    let lhs2 = 2.0 * m2 - m1;
    if n == 1 {
        let note = "N=1: bounded by Moser-Alikakos iteration".to_string();
        return vec![
            RegimeReport {
                theorem: TheoremId::Thm1_1,
                verdict: Verdict::Satisfied,
                lhs: lhs1,
                rhs: f64::INFINITY,
                note: note.clone(),
            },
            RegimeReport {
                theorem: TheoremId::Thm1_2,
                verdict: Verdict::Satisfied,
                lhs: lhs2,
                rhs: f64::INFINITY,
                note,
            },
        ];
    }
    let strict = |theorem, lhs: f64, rhs: f64, branch: &str| {
        let (verdict, note) = match compare(lhs, rhs) {
            Comparison::Less => (Verdict::Satisfied, branch.to_string()),
            Comparison::Equal => (
                Verdict::Violated,
                format!("{branch}; equality case, no relaxation known for parabolic v"),
            ),
            Comparison::Greater => (Verdict::Violated, branch.to_string()),
        };
        RegimeReport {
            theorem,
            verdict,
            lhs,
            rhs,
            note,
        }
    };
    vec![
        strict(TheoremId::Thm1_1, lhs1, rhs1, branch1),
        strict(TheoremId::Thm1_2, lhs2, rhs2, branch2),
    ]
}

fn repulsion_reports(m1: f64, m2: f64, alpha: f64, b1_large: bool) -> Vec<RegimeReport> {
    let top = alpha.max(m1);
    // Relaxation hypotheses: m1 >= alpha for the first condition, m1 > alpha
    // for the second; either one may be replaced by the b1-large assumption.
    let hyp1 = (m1 >= alpha, "m1 >= alpha");
    let hyp2 = (m1 > alpha, "m1 > alpha");

    let lhs1 = 2.0 * m2 - m1;
    let rhs1 = top + 1.0;
    let lhs2 = m2;
    let rhs2 = top;

    let main = |theorem, lhs, rhs, form: &str, hyp: (bool, &str)| {
        let (verdict, note) = match compare(lhs, rhs) {
            Comparison::Less => (Verdict::Satisfied, form.to_string()),
            Comparison::Equal => relaxed_equality(form, hyp, b1_large),
            Comparison::Greater => (Verdict::Violated, form.to_string()),
        };
        RegimeReport {
            theorem,
            verdict,
            lhs,
            rhs,
            note,
        }
    };
    let remark = |theorem, lhs, rhs, form: &str, hyp: (bool, &str)| {
        let (verdict, note) = match compare(lhs, rhs) {
            Comparison::Less => (
                Verdict::NotApplicable,
                format!("{form}; strict inequality holds, relaxation not needed"),
            ),
            Comparison::Equal => relaxed_equality(form, hyp, b1_large),
            Comparison::Greater => (Verdict::Violated, form.to_string()),
        };
        RegimeReport {
            theorem,
            verdict,
            lhs,
            rhs,
            note,
        }
    };
    let form1 = "2m2 - m1 < max{alpha,m1} + 1";
    let form2 = "m2 < max{alpha,m1}";
    vec![
        main(TheoremId::Thm4_1, lhs1, rhs1, form1, hyp1),
        main(TheoremId::Thm4_2, lhs2, rhs2, form2, hyp2),
        remark(TheoremId::Remark4_1, lhs1, rhs1, form1, hyp1),
        remark(TheoremId::Remark4_2, lhs2, rhs2, form2, hyp2),
    ]
}

fn relaxed_equality(form: &str, hyp: (bool, &str), b1_large: bool) -> (Verdict, String) {
    let (holds, name) = hyp;
    if holds {
        (
            Verdict::ConditionallySatisfied,
            format!("{form}; equality case relaxed since {name}"),
        )
    } else if b1_large {
        (
            Verdict::ConditionallySatisfied,
            format!("{form}; equality case relaxed under the b1-large assumption"),
        )
    } else {
        (
            Verdict::Violated,
            format!("{form}; equality case but {name} fails and b1-large is not assumed"),
        )
    }
}

fn attraction_report(m1: f64, m2: f64, alpha: f64) -> RegimeReport {
    let rhs = m1.max(m2).max(alpha);
    let verdict = if rhs >= 0.0 {
        Verdict::Satisfied
    } else {
        Verdict::Violated
    };
    RegimeReport {
        theorem: TheoremId::Thm4_3,
        verdict,
        lhs: 0.0,
        rhs,
        note: "max{m1,m2,alpha} >= 0; phi >= M2 u^m2 holds with equality for the built-in laws"
            .to_string(),
    }
}

// ---------------------------------------------------------------------------
// Homogeneous states
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompetitionKind {
    Weak,
    Strong,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitionType {
    pub kind: CompetitionKind,
    /// `(b1/b2, a1/a2, c1/c2)`
    pub ratios: (f64, f64, f64),
}

pub fn competition_type(spec: &ModelSpec) -> Result<CompetitionType, ModelError> {
    if !spec.kinetics.is_lotka_volterra() {
        return Err(ModelError::NotApplicable(
            "competition type needs Lotka-Volterra kinetics",
        ));
    }
    let ratios = (spec.b1 / spec.b2, spec.a1 / spec.a2, spec.c1 / spec.c2);
    let (b, a, c) = ratios;
    let kind = if b > a && a > c {
        CompetitionKind::Weak
    } else if b < a && a < c {
        CompetitionKind::Strong
    } else {
        CompetitionKind::Mixed
    };
    Ok(CompetitionType { kind, ratios })
}

/// Positive spatially homogeneous equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub u: f64,
    pub v: f64,
    /// Number of positive roots detected; the smallest `u` is returned.
    pub roots_found: usize,
}

const ROOT_SCAN_INTERVALS: usize = 4096;

/// Positive root of `a1 - b1 u^alpha - c1 v = 0`, `a2 - b2 u - c2 v = 0`.
///
/// Returns `None` for kinetics other than Lotka-Volterra or when no root lies
/// in the open positive quadrant.
pub fn coexistence_steady_state(spec: &ModelSpec) -> Option<SteadyState> {
    if !spec.kinetics.is_lotka_volterra() {
        return None;
    }
    let ModelSpec {
        a1,
        b1,
        c1,
        a2,
        b2,
        c2,
        alpha,
        ..
    } = *spec;
    let accept = |u: f64, v: f64, roots_found| {
        (u > 0.0 && v > 0.0 && u.is_finite() && v.is_finite()).then_some(SteadyState {
            u,
            v,
            roots_found,
        })
    };

    if c1 == 0.0 {
        let u = (a1 / b1).powf(1.0 / alpha);
        return accept(u, (a2 - b2 * u) / c2, 1);
    }
    if alpha == 1.0 {
        let det = b1 * c2 - b2 * c1;
        if det == 0.0 {
            return None;
        }
        let u = (a1 * c2 - a2 * c1) / det;
        let v = (a2 * b1 - a1 * b2) / det;
        return accept(u, v, 1);
    }

    // Eliminate v through the second (linear) nullcline and scan the first.
    let v_of = |u: f64| (a2 - b2 * u) / c2;
    let residual = |u: f64| a1 - b1 * u.powf(alpha) - c1 * v_of(u);
    let mut hi = (a1 / b1).powf(1.0 / alpha);
    if b2 > 0.0 {
        hi = hi.min(a2 / b2);
    }
    if !(hi > 0.0 && hi.is_finite()) {
        return None;
    }
    let mut roots = Vec::new();
    let node = |k: usize| hi * k as f64 / ROOT_SCAN_INTERVALS as f64;
    let mut left = residual(node(0));
    for k in 1..=ROOT_SCAN_INTERVALS {
        let x = node(k);
        let right = residual(x);
        if k < ROOT_SCAN_INTERVALS && right == 0.0 {
            roots.push(x);
        } else if left * right < 0.0 {
            roots.push(bisect(&residual, node(k - 1), x, left));
        }
        left = right;
    }
    let count = roots.len();
    let u = *roots.first()?;
    accept(u, v_of(u), count)
}

/// Bisection until the bracket collapses to adjacent floats.
fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    0.5 * (lo + hi)
}

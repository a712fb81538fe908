//! Scenario presets, parameter sweeps and the theory-versus-numerics tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{write_timeseries_csv, MonitorConfig};
use crate::grid::{Dim, Grid, GridError, ScalarField};
use crate::model::{
    classify, DiffusionLaw, Kinetics, ModelError, ModelSpec, RegimeReport, ResourceField,
    SensitivityLaw, TaxisSign, TheoremId, VDynamics, Verdict,
};
use crate::plot::{Cell, Heatmap, LinePlot};
use crate::stepper::{run, RunSummary, RunVerdict, StepControl, StepError};

pub const DEFAULT_SWEEP_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("sweep requests {requested} runs, the cap is {cap}")]
    CapExceeded { requested: usize, cap: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    ClassicalLv,
    AdvectiveLv,
    SktReduced,
    IdealFree,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::ClassicalLv,
        Preset::AdvectiveLv,
        Preset::SktReduced,
        Preset::IdealFree,
        Preset::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::ClassicalLv => "ClassicalLV",
            Preset::AdvectiveLv => "AdvectiveLV",
            Preset::SktReduced => "SKTReduced",
            Preset::IdealFree => "IdealFree",
            Preset::Custom => "Custom",
        }
    }

    pub fn config_key(self) -> &'static str {
        match self {
            Preset::ClassicalLv => "classical_lv",
            Preset::AdvectiveLv => "advective_lv",
            Preset::SktReduced => "skt_reduced",
            Preset::IdealFree => "ideal_free",
            Preset::Custom => "custom",
        }
    }

    /// The u-equation the preset realizes.
    pub fn model_form(self) -> &'static str {
        match self {
            Preset::ClassicalLv => "u_t = D1 lap u + (a1 - b1 u - c1 v) u",
            Preset::AdvectiveLv => "u_t = div(D1 grad u + chi u grad v) + (a1 - b1 u - c1 v) u",
            Preset::SktReduced => {
                "u_t = div((d1 + 2 rho11 u + rho12 v) grad u + rho12 u grad v) + (a1 - b1 u - c1 v) u"
            }
            Preset::IdealFree => {
                "u_t = div((d1 + chi u) grad u + chi u grad v - chi u grad m) + (m - u - v) u"
            }
            Preset::Custom => {
                "u_t = div(D1(u) grad u +/- chi phi(u) grad v) + (a1 - b1 u^alpha - c1 v) u"
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coefficient overrides on top of a preset.
///
/// The scalar shortcuts (`D1`, `m1`, `m2`, `d1`, `rho11`, `rho12`,
/// `resource`, `rate`) edit the preset's laws in place; the full `diffusion`,
/// `sensitivity` and `kinetics` tables replace them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(rename = "D2", default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxis_sign: Option<TaxisSign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_dynamics: Option<VDynamics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assume_b1_large: Option<bool>,
    /// Constant diffusion rate of the power law.
    #[serde(rename = "D1", default, skip_serializing_if = "Option::is_none")]
    pub d1_const: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho11: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho12: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<ResourceField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<DiffusionLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetics: Option<Kinetics>,
}

impl ModelOverrides {
    /// Overrides that pin every field of `spec`.
    pub fn full(spec: &ModelSpec) -> Self {
        ModelOverrides {
            a1: Some(spec.a1),
            b1: Some(spec.b1),
            c1: Some(spec.c1),
            a2: Some(spec.a2),
            b2: Some(spec.b2),
            c2: Some(spec.c2),
            alpha: Some(spec.alpha),
            d2: Some(spec.d2),
            chi: Some(spec.chi),
            taxis_sign: Some(spec.taxis_sign),
            v_dynamics: Some(spec.v_dynamics),
            assume_b1_large: Some(spec.assume_b1_large),
            diffusion: Some(spec.diffusion),
            sensitivity: Some(spec.sensitivity),
            kinetics: Some(spec.kinetics.clone()),
            ..ModelOverrides::default()
        }
    }
}

fn preset_base(preset: Preset) -> ModelSpec {
    let base = ModelSpec::default();
    match preset {
        Preset::ClassicalLv | Preset::Custom => base,
        Preset::AdvectiveLv => ModelSpec { chi: 1.0, ..base },
        Preset::SktReduced => ModelSpec {
            chi: 0.5,
            diffusion: DiffusionLaw::SktCross {
                d1: 1.0,
                rho11: 0.5,
                rho12: 0.5,
            },
            ..base
        },
        Preset::IdealFree => ModelSpec {
            chi: 1.0,
            diffusion: DiffusionLaw::Affine {
                d1: 1.0,
                rho11: 0.5,
            },
            kinetics: Kinetics::IdealFree {
                resource: ResourceField::Cosine {
                    mean: 1.0,
                    amplitude: 0.5,
                    modes: 1,
                },
                rate: 1.0,
            },
            ..base
        },
    }
}

/// Sets the diffusion growth exponent, switching to the power law if needed.
pub fn set_m1(spec: &mut ModelSpec, m1: f64) {
    match &mut spec.diffusion {
        DiffusionLaw::Power { exponent, .. } => *exponent = m1,
        DiffusionLaw::Affine { d1, .. } | DiffusionLaw::SktCross { d1, .. } => {
            spec.diffusion = DiffusionLaw::Power {
                scale: *d1,
                exponent: m1,
            }
        }
    }
}

/// Sets the sensitivity growth exponent; `m2 = 1` keeps a linear law linear.
pub fn set_m2(spec: &mut ModelSpec, m2: f64) {
    match &mut spec.sensitivity {
        SensitivityLaw::Power { exponent, .. } => *exponent = m2,
        SensitivityLaw::Linear if m2 == 1.0 => {}
        SensitivityLaw::Linear => {
            spec.sensitivity = SensitivityLaw::Power {
                scale: 1.0,
                exponent: m2,
            }
        }
    }
}

/// Sets chi and the coefficients a preset ties to it.
pub fn set_chi(spec: &mut ModelSpec, preset: Preset, chi: f64) {
    spec.chi = chi;
    match (preset, &mut spec.diffusion) {
        (Preset::SktReduced, DiffusionLaw::SktCross { rho12, .. }) => *rho12 = chi,
        (Preset::IdealFree, DiffusionLaw::Affine { rho11, .. }) => *rho11 = chi / 2.0,
        _ => {}
    }
}

/// Why `spec` does not realize `preset`, if it does not.
pub fn preset_violation(preset: Preset, spec: &ModelSpec) -> Option<String> {
    let p = preset.as_str();
    let lv = spec.kinetics.is_lotka_volterra();
    let constant_d1 =
        matches!(spec.diffusion, DiffusionLaw::Power { exponent, .. } if exponent == 0.0);
    let linear = spec.sensitivity == SensitivityLaw::Linear;
    let checks: Vec<(bool, &str)> = match preset {
        Preset::Custom => vec![],
        Preset::ClassicalLv => vec![
            (spec.chi == 0.0, "chi = 0"),
            (spec.alpha == 1.0, "alpha = 1"),
            (constant_d1, "a constant power-law D1"),
            (lv, "Lotka-Volterra kinetics"),
            (spec.v_dynamics == VDynamics::Parabolic, "parabolic v"),
        ],
        Preset::AdvectiveLv => vec![
            (spec.alpha == 1.0, "alpha = 1"),
            (constant_d1, "a constant power-law D1"),
            (linear, "linear sensitivity"),
            (lv, "Lotka-Volterra kinetics"),
        ],
        Preset::SktReduced => vec![
            (
                matches!(spec.diffusion, DiffusionLaw::SktCross { rho12, .. } if rho12 == spec.chi),
                "the cross-diffusion law with chi = rho12",
            ),
            (linear, "linear sensitivity"),
            (spec.alpha == 1.0, "alpha = 1"),
            (lv, "Lotka-Volterra kinetics"),
            (spec.taxis_sign == TaxisSign::Repulsion, "repulsion"),
        ],
        Preset::IdealFree => vec![
            (
                matches!(spec.kinetics, Kinetics::IdealFree { .. }),
                "ideal-free kinetics with a resource field",
            ),
            (
                matches!(spec.diffusion, DiffusionLaw::Affine { rho11, .. } if rho11 == spec.chi / 2.0),
                "affine diffusion d1 + chi u",
            ),
            (linear, "linear sensitivity"),
            (spec.taxis_sign == TaxisSign::Repulsion, "repulsion"),
        ],
    };
    let missing: Vec<&str> = checks
        .iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, w)| *w)
        .collect();
    (!missing.is_empty()).then(|| format!("{p} requires {}", missing.join(", ")))
}

/// Resolves a preset plus overrides into a validated model.
pub fn build_spec(preset: Preset, o: &ModelOverrides) -> Result<ModelSpec, ScenarioError> {
    let mut s = preset_base(preset);
    if let Some(d) = o.diffusion {
        s.diffusion = d;
    }
    if let Some(l) = o.sensitivity {
        s.sensitivity = l;
    }
    if let Some(k) = &o.kinetics {
        s.kinetics = k.clone();
    }
    let scalars = [
        (&mut s.a1, o.a1),
        (&mut s.b1, o.b1),
        (&mut s.c1, o.c1),
        (&mut s.a2, o.a2),
        (&mut s.b2, o.b2),
        (&mut s.c2, o.c2),
        (&mut s.alpha, o.alpha),
        (&mut s.d2, o.d2),
        (&mut s.chi, o.chi),
    ];
    for (slot, value) in scalars {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if let Some(t) = o.taxis_sign {
        s.taxis_sign = t;
    }
    if let Some(v) = o.v_dynamics {
        s.v_dynamics = v;
    }
    if let Some(b) = o.assume_b1_large {
        s.assume_b1_large = b;
    }
    if let Some(d) = o.d1_const {
        match (&mut s.diffusion, preset) {
            (_, Preset::SktReduced | Preset::IdealFree) => {
                return Err(invalid("model.D1", format!("{preset} takes d1, not D1")))
            }
            (DiffusionLaw::Power { scale, .. }, _) => *scale = d,
            _ => s.diffusion = DiffusionLaw::constant(d),
        }
    }
    if let Some(m1) = o.m1 {
        set_m1(&mut s, m1);
    }
    if let Some(m2) = o.m2 {
        set_m2(&mut s, m2);
    }
    match &mut s.diffusion {
        DiffusionLaw::SktCross { d1, rho11, rho12 } => {
            o.d1.inspect(|v| *d1 = *v);
            o.rho11.inspect(|v| *rho11 = *v);
            o.rho12.inspect(|v| *rho12 = *v);
        }
        DiffusionLaw::Affine { d1, rho11 } => {
            o.d1.inspect(|v| *d1 = *v);
            if o.rho12.is_some() {
                return Err(invalid("model.rho12", "needs the cross-diffusion law"));
            }
            if let Some(v) = o.rho11 {
                if preset == Preset::IdealFree {
                    return Err(invalid("model.rho11", "IdealFree ties rho11 to chi / 2"));
                }
                *rho11 = v;
            }
        }
        DiffusionLaw::Power { .. } => {
            for (key, v) in [
                ("model.d1", o.d1),
                ("model.rho11", o.rho11),
                ("model.rho12", o.rho12),
            ] {
                if v.is_some() {
                    return Err(invalid(key, "needs the affine or cross-diffusion law"));
                }
            }
        }
    }
    if o.resource.is_some() || o.rate.is_some() {
        match &mut s.kinetics {
            Kinetics::IdealFree { resource, rate } => {
                if let Some(r) = &o.resource {
                    *resource = r.clone();
                }
                o.rate.inspect(|v| *rate = *v);
            }
            _ => {
                return Err(invalid(
                    "model.resource",
                    "resource and rate need ideal-free kinetics",
                ))
            }
        }
    }
    match (preset, &mut s.diffusion) {
        (Preset::SktReduced, DiffusionLaw::SktCross { rho12, .. }) => {
            // chi and rho12 are one coefficient here; whichever was given wins.
            if o.chi.is_some() && o.rho12.is_none() && o.diffusion.is_none() {
                *rho12 = s.chi;
            }
            if o.chi.is_some() && (o.rho12.is_some() || o.diffusion.is_some()) && *rho12 != s.chi {
                return Err(invalid(
                    "model.chi",
                    format!(
                        "SKTReduced needs chi = rho12, got chi = {} and rho12 = {rho12}",
                        s.chi
                    ),
                ));
            }
            s.chi = *rho12;
        }
        (Preset::IdealFree, DiffusionLaw::Affine { rho11, .. }) => *rho11 = s.chi / 2.0,
        _ => {}
    }
    s.validate()?;
    if let Some(reason) = preset_violation(preset, &s) {
        return Err(invalid("preset", reason));
    }
    Ok(s)
}

/// Initial data for the pair `(u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant {
        u0: f64,
        v0: f64,
    },
    /// `u = background + amplitude exp(-|x - center|^2 / width^2)`; v is
    /// constant `v0`, defaulting to `background`. A one-entry center on a
    /// 2D grid sits at mid-height.
    Bump {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        background: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v0: Option<f64>,
    },
    /// Independent uniform draws per cell, all of u then all of v.
    RandomUniform {
        lo: f64,
        hi: f64,
        seed: u64,
    },
    FromFile {
        u: PathBuf,
        v: PathBuf,
    },
}

impl InitialData {
    pub fn validate(&self, grid: &Grid) -> Result<(), ScenarioError> {
        let nonneg = |key: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("must be finite and >= 0, got {x}")))
            }
        };
        match self {
            InitialData::Constant { u0, v0 } => {
                nonneg("initial.u0", *u0)?;
                nonneg("initial.v0", *v0)
            }
            InitialData::Bump {
                center,
                width,
                amplitude,
                background,
                v0,
            } => {
                if center.is_empty() || center.len() > grid.n_dim() {
                    return Err(invalid(
                        "initial.center",
                        format!(
                            "needs 1..={} coordinates, got {}",
                            grid.n_dim(),
                            center.len()
                        ),
                    ));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(invalid(
                        "initial.width",
                        format!("must be positive, got {width}"),
                    ));
                }
                nonneg("initial.amplitude", *amplitude)?;
                nonneg("initial.background", *background)?;
                v0.map_or(Ok(()), |v| nonneg("initial.v0", v))
            }
            InitialData::RandomUniform { lo, hi, .. } => {
                nonneg("initial.lo", *lo)?;
                nonneg("initial.hi", *hi)?;
                if lo > hi {
                    return Err(invalid(
                        "initial.lo",
                        format!("{lo} exceeds initial.hi = {hi}"),
                    ));
                }
                Ok(())
            }
            InitialData::FromFile { u, v } => {
                for (key, p) in [("initial.u", u), ("initial.v", v)] {
                    if p.as_os_str().is_empty() {
                        return Err(invalid(key, "empty path"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn materialize(&self, grid: &Grid) -> Result<(ScalarField, ScalarField), ScenarioError> {
        self.validate(grid)?;
        let g = *grid;
        let pair = match self {
            InitialData::Constant { u0, v0 } => {
                (ScalarField::constant(g, *u0), ScalarField::constant(g, *v0))
            }
            InitialData::Bump {
                center,
                width,
                amplitude,
                background,
                v0,
            } => {
                let cx = center[0];
                let cy = center.get(1).copied().unwrap_or(g.ly() / 2.0);
                let two_d = g.dim() == Dim::Two;
                let u = ScalarField::from_fn(g, |x, y| {
                    let mut r2 = (x - cx).powi(2);
                    if two_d {
                        r2 += (y - cy).powi(2);
                    }
                    background + amplitude * (-r2 / (width * width)).exp()
                })?;
                (u, ScalarField::constant(g, v0.unwrap_or(*background)))
            }
            InitialData::RandomUniform { lo, hi, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut draw =
                    || -> Vec<f64> { (0..g.len()).map(|_| rng.random_range(*lo..=*hi)).collect() };
                let u = draw();
                let v = draw();
                (ScalarField::new(g, u)?, ScalarField::new(g, v)?)
            }
            InitialData::FromFile { u, v } => {
                let load = |p: &Path| -> Result<ScalarField, ScenarioError> {
                    let f = ScalarField::read_csv(p)?;
                    if f.grid() != grid {
                        return Err(invalid(
                            "initial",
                            format!(
                                "{} is on grid {}, run grid is {grid}",
                                p.display(),
                                f.grid()
                            ),
                        ));
                    }
                    f.check_nonnegative("initial data")?;
                    Ok(f)
                };
                (load(u)?, load(v)?)
            }
        };
        Ok(pair)
    }
}

/// A fully specified run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub preset: Preset,
    pub spec: ModelSpec,
    pub grid: Grid,
    pub initial: InitialData,
    #[serde(rename = "control")]
    pub ctrl: StepControl,
    pub monitors: MonitorConfig,
}

pub fn default_grid() -> Grid {
    Grid::new_1d(128, 10.0).expect("default grid is valid")
}

pub fn default_initial() -> InitialData {
    InitialData::RandomUniform {
        lo: 0.5,
        hi: 1.5,
        seed: 1,
    }
}

/// A preset with overrides, on the default 1D grid with random initial data.
pub fn build_preset(preset: Preset, overrides: &ModelOverrides) -> Result<Scenario, ScenarioError> {
    Ok(Scenario {
        name: preset.config_key().to_string(),
        preset,
        spec: build_spec(preset, overrides)?,
        grid: default_grid(),
        initial: default_initial(),
        ctrl: StepControl::default(),
        monitors: MonitorConfig::default(),
    })
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.spec.validate()?;
        self.ctrl.validate()?;
        self.monitors.validate()?;
        self.initial.validate(&self.grid)?;
        if let Some(reason) = preset_violation(self.preset, &self.spec) {
            return Err(invalid("preset", reason));
        }
        Ok(())
    }

    /// Classifier verdicts at the grid's dimension (or `n` when given).
    pub fn classify(&self, n: Option<usize>) -> Vec<RegimeReport> {
        classify(&self.spec, n.unwrap_or(self.grid.n_dim()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AxisValue {
    Number(f64),
    Sign(TaxisSign),
    Dynamics(VDynamics),
    Dim(usize),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Number(x) => write!(f, "{x}"),
            AxisValue::Sign(s) => write!(f, "{s}"),
            AxisValue::Dynamics(d) => write!(f, "{d}"),
            AxisValue::Dim(n) => write!(f, "{n}"),
        }
    }
}

/// Swept parameters; absent axes stay at the base scenario's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxis_sign: Option<Vec<TaxisSign>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_dynamics: Option<Vec<VDynamics>>,
    /// Space dimension of the simulation grid (1 or 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_dim: Option<Vec<usize>>,
}

impl SweepAxes {
    /// Present axes in canonical order; the first varies slowest.
    pub fn named(&self) -> Vec<(&'static str, Vec<AxisValue>)> {
        let num = |v: &Option<Vec<f64>>| {
            v.as_ref()
                .map(|v| v.iter().map(|x| AxisValue::Number(*x)).collect())
        };
        let axes: [(&'static str, Option<Vec<AxisValue>>); 7] = [
            ("m1", num(&self.m1)),
            ("m2", num(&self.m2)),
            ("alpha", num(&self.alpha)),
            ("chi", num(&self.chi)),
            (
                "taxis_sign",
                self.taxis_sign
                    .as_ref()
                    .map(|v| v.iter().map(|s| AxisValue::Sign(*s)).collect()),
            ),
            (
                "v_dynamics",
                self.v_dynamics
                    .as_ref()
                    .map(|v| v.iter().map(|d| AxisValue::Dynamics(*d)).collect()),
            ),
            (
                "n_dim",
                self.n_dim
                    .as_ref()
                    .map(|v| v.iter().map(|n| AxisValue::Dim(*n)).collect()),
            ),
        ];
        axes.into_iter()
            .filter_map(|(n, v)| v.map(|v| (n, v)))
            .collect()
    }

    pub fn point_count(&self) -> usize {
        self.named().iter().map(|(_, v)| v.len()).product()
    }
}

fn apply_axis(s: &mut Scenario, axis: &str, value: &AxisValue) -> Result<(), ScenarioError> {
    match (axis, value) {
        ("m1", AxisValue::Number(x)) => set_m1(&mut s.spec, *x),
        ("m2", AxisValue::Number(x)) => set_m2(&mut s.spec, *x),
        ("alpha", AxisValue::Number(x)) => s.spec.alpha = *x,
        ("chi", AxisValue::Number(x)) => set_chi(&mut s.spec, s.preset, *x),
        ("taxis_sign", AxisValue::Sign(t)) => s.spec.taxis_sign = *t,
        ("v_dynamics", AxisValue::Dynamics(d)) => s.spec.v_dynamics = *d,
        ("n_dim", AxisValue::Dim(n)) => {
            let g = s.grid;
            s.grid = match n {
                1 => Grid::new_1d(g.nx(), g.lx())?,
                2 if g.dim() == Dim::Two => g,
                2 => Grid::new_2d(g.nx(), g.nx(), g.lx(), g.lx())?,
                _ => {
                    return Err(invalid(
                        "sweep.axes.n_dim",
                        format!("must be 1 or 2, got {n}"),
                    ))
                }
            };
        }
        _ => {
            return Err(invalid(
                "sweep.axes",
                format!("bad value {value} for axis {axis}"),
            ))
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    pub base: Scenario,
    pub axes: SweepAxes,
    /// Replicate seeds for random initial data; empty means one replicate.
    pub seeds: Vec<u64>,
    pub cap: usize,
    /// Dimension handed to the classifier instead of the grid's.
    pub classify_n: Option<usize>,
    /// Axes of the agreement heatmap.
    pub heatmap: Option<[String; 2]>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub id: String,
    pub seed: Option<u64>,
    pub values: Vec<(String, AxisValue)>,
    pub scenario: Scenario,
}

impl SweepPlan {
    pub fn single(base: Scenario) -> Self {
        SweepPlan {
            base,
            axes: SweepAxes::default(),
            seeds: Vec::new(),
            cap: DEFAULT_SWEEP_CAP,
            classify_n: None,
            heatmap: None,
        }
    }

    pub fn run_count(&self) -> usize {
        self.axes.point_count() * self.seeds.len().max(1)
    }

    /// Every (point, seed) pair in plan order.
    pub fn points(&self) -> Result<Vec<SweepPoint>, ScenarioError> {
        let requested = self.run_count();
        if requested > self.cap {
            return Err(ScenarioError::CapExceeded {
                requested,
                cap: self.cap,
            });
        }
        let axes = self.axes.named();
        if let Some((name, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(invalid(&format!("sweep.axes.{name}"), "empty value list"));
        }
        let seeds: Vec<Option<u64>> = if self.seeds.is_empty() {
            vec![None]
        } else {
            self.seeds.iter().map(|s| Some(*s)).collect()
        };
        let mut out = Vec::with_capacity(requested);
        for combo in 0..self.axes.point_count() {
            let mut rest = combo;
            let mut picks = vec![0; axes.len()];
            for (k, (_, values)) in axes.iter().enumerate().rev() {
                picks[k] = rest % values.len();
                rest /= values.len();
            }
            let values: Vec<(String, AxisValue)> = axes
                .iter()
                .zip(&picks)
                .map(|((name, vals), &i)| (name.to_string(), vals[i].clone()))
                .collect();
            for seed in &seeds {
                let id = format!("p{:04}", out.len());
                let mut s = self.base.clone();
                s.name = format!("{}-{id}", self.base.name);
                for (name, value) in &values {
                    apply_axis(&mut s, name, value)?;
                }
                if preset_violation(s.preset, &s.spec).is_some() {
                    s.preset = Preset::Custom;
                }
                if let (Some(seed), InitialData::RandomUniform { seed: slot, .. }) =
                    (seed, &mut s.initial)
                {
                    *slot = *seed;
                }
                out.push(SweepPoint {
                    id,
                    seed: *seed,
                    values: values.clone(),
                    scenario: s,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    /// Theory guarantees boundedness and the run stayed bounded.
    Agree,
    /// Theory guarantees boundedness but the run grew: a resolution issue.
    Anomaly,
    /// No guarantee applies; the run stayed bounded (conditions are only sufficient).
    NoGuaranteeBounded,
    NoGuaranteeUnbounded,
    Failed,
}

impl Agreement {
    pub fn as_str(self) -> &'static str {
        match self {
            Agreement::Agree => "agree",
            Agreement::Anomaly => "anomaly",
            Agreement::NoGuaranteeBounded => "no_guarantee_bounded",
            Agreement::NoGuaranteeUnbounded => "no_guarantee_unbounded",
            Agreement::Failed => "failed",
        }
    }

    pub fn of(reports: &[RegimeReport], verdict: RunVerdict) -> Self {
        let guaranteed = reports.iter().any(|r| r.verdict.guarantees_boundedness());
        match (guaranteed, verdict) {
            (_, RunVerdict::Failed) => Agreement::Failed,
            (true, v) if v.is_bounded() => Agreement::Agree,
            (true, _) => Agreement::Anomaly,
            (false, v) if v.is_bounded() => Agreement::NoGuaranteeBounded,
            (false, _) => Agreement::NoGuaranteeUnbounded,
        }
    }
}

/// Strongest classifier verdict among the reports.
pub fn best_verdict(reports: &[RegimeReport]) -> Verdict {
    [
        Verdict::Satisfied,
        Verdict::ConditionallySatisfied,
        Verdict::Violated,
    ]
    .into_iter()
    .find(|v| reports.iter().any(|r| r.verdict == *v))
    .unwrap_or(Verdict::NotApplicable)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub id: String,
    pub seed: Option<u64>,
    pub values: Vec<(String, AxisValue)>,
    pub scenario: Scenario,
    pub reports: Vec<RegimeReport>,
    pub verdict: RunVerdict,
    pub max_linf_u: f64,
    pub agreement: Agreement,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis_names: Vec<String>,
    pub rows: Vec<SweepRow>,
}

fn run_point(p: SweepPoint, classify_n: Option<usize>) -> SweepRow {
    let reports = p.scenario.classify(classify_n);
    let summary = match run(&p.scenario) {
        Ok(s) => s,
        Err(e) => RunSummary::failed(&p.scenario.name, e.to_string()),
    };
    SweepRow {
        agreement: Agreement::of(&reports, summary.verdict),
        verdict: summary.verdict,
        max_linf_u: summary.max_linf_u,
        id: p.id,
        seed: p.seed,
        values: p.values,
        scenario: p.scenario,
        reports,
        summary,
    }
}

/// Runs every point of the plan on `workers` threads; rows come back in plan order.
pub fn run_sweep(plan: &SweepPlan, workers: usize) -> Result<SweepResult, ScenarioError> {
    let points = plan.points()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| invalid("workers", e.to_string()))?;
    let classify_n = plan.classify_n;
    let rows = pool.install(|| {
        points
            .into_par_iter()
            .map(|p| run_point(p, classify_n))
            .collect::<Vec<_>>()
    });
    Ok(SweepResult {
        axis_names: plan
            .axes
            .named()
            .iter()
            .map(|(n, _)| n.to_string())
            .collect(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementRow {
    /// Strongest classifier verdict of the points in this row.
    pub theory: String,
    /// Count per numerical verdict.
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementTable {
    pub rows: Vec<AgreementRow>,
    pub guaranteed: usize,
    pub guaranteed_bounded: usize,
    /// Fraction of guaranteed points that stayed bounded.
    pub agreement: Option<f64>,
    pub anomalies: Vec<String>,
    pub unguaranteed_bounded: Vec<String>,
}

/// Cross-tabulates classifier verdicts against numerical verdicts.
pub fn compare_theory(result: &SweepResult) -> AgreementTable {
    let theories = [
        Verdict::Satisfied,
        Verdict::ConditionallySatisfied,
        Verdict::Violated,
        Verdict::NotApplicable,
    ];
    let rows = theories
        .iter()
        .map(|t| AgreementRow {
            theory: t.as_str().to_string(),
            counts: RunVerdict::ALL
                .iter()
                .map(|v| {
                    let n = result
                        .rows
                        .iter()
                        .filter(|r| best_verdict(&r.reports) == *t && r.verdict == *v)
                        .count();
                    (v.as_str().to_string(), n)
                })
                .collect(),
        })
        .collect();
    let ids = |a: Agreement| -> Vec<String> {
        result
            .rows
            .iter()
            .filter(|r| r.agreement == a)
            .map(|r| r.id.clone())
            .collect()
    };
    let guaranteed = result
        .rows
        .iter()
        .filter(|r| matches!(r.agreement, Agreement::Agree | Agreement::Anomaly))
        .count();
    let guaranteed_bounded = ids(Agreement::Agree).len();
    AgreementTable {
        rows,
        guaranteed,
        guaranteed_bounded,
        agreement: (guaranteed > 0).then(|| guaranteed_bounded as f64 / guaranteed as f64),
        anomalies: ids(Agreement::Anomaly),
        unguaranteed_bounded: ids(Agreement::NoGuaranteeBounded),
    }
}

impl fmt::Display for AgreementTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<24}", "theory \\ numerics")?;
        for v in RunVerdict::ALL {
            write!(f, " {:>22}", v.as_str())?;
        }
        writeln!(f)?;
        for row in &self.rows {
            write!(f, "{:<24}", row.theory)?;
            for v in RunVerdict::ALL {
                write!(
                    f,
                    " {:>22}",
                    row.counts.get(v.as_str()).copied().unwrap_or(0)
                )?;
            }
            writeln!(f)?;
        }
        match self.agreement {
            Some(a) => writeln!(
                f,
                "agreement: {}/{} guaranteed points bounded ({:.1}%)",
                self.guaranteed_bounded,
                self.guaranteed,
                100.0 * a
            )?,
            None => writeln!(f, "agreement: no point carries a boundedness guarantee")?,
        }
        if !self.anomalies.is_empty() {
            writeln!(
                f,
                "anomalies (guaranteed but unbounded): {}",
                self.anomalies.join(" ")
            )?;
        }
        if !self.unguaranteed_bounded.is_empty() {
            writeln!(
                f,
                "no theory guarantee, numerically bounded: {}",
                self.unguaranteed_bounded.join(" ")
            )?;
        }
        Ok(())
    }
}

/// `rows.csv`: deterministic for a fixed plan (no wall-clock data).
pub fn rows_csv(result: &SweepResult) -> String {
    let mut cols = vec!["point_id".to_string(), "seed".to_string()];
    cols.extend(result.axis_names.iter().cloned());
    cols.extend(TheoremId::ALL.iter().map(|t| t.as_str().to_string()));
    cols.extend(["verdict", "max_linf_u", "agreement"].map(String::from));
    let mut s = cols.join(",");
    s.push('\n');
    for r in &result.rows {
        let mut fields = vec![
            r.id.clone(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
        ];
        fields.extend(r.values.iter().map(|(_, v)| v.to_string()));
        for t in TheoremId::ALL {
            let v = r.reports.iter().find(|x| x.theorem == t);
            fields.push(v.map_or("-".to_string(), |x| x.verdict.as_str().to_string()));
        }
        fields.push(r.verdict.as_str().to_string());
        fields.push(r.max_linf_u.to_string());
        fields.push(r.agreement.as_str().to_string());
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

type Point = (f64, f64);

fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())
}

/// Writes the artifacts of one run into `dir`: the scenario, summary,
/// time series, final fields and plots.
pub fn write_run_artifacts(
    dir: &Path,
    scenario: &Scenario,
    summary: &RunSummary,
) -> Result<(), ScenarioError> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    write_file(
        &dir.join("scenario.toml"),
        &crate::config::scenario_to_toml(scenario),
    )?;
    write_file(
        &dir.join("summary.json"),
        &(serde_json::to_string_pretty(summary)? + "\n"),
    )?;
    write_timeseries_csv(
        &dir.join("timeseries.csv"),
        &summary.history,
        &scenario.monitors,
    )?;
    if let (Some(u), Some(v)) = (&summary.final_u, &summary.final_v) {
        u.write_csv(&dir.join("final_u.csv"))?;
        v.write_csv(&dir.join("final_v.csv"))?;
    }
    let series = |f: fn(&crate::diagnostics::DiagnosticsRecord) -> f64| {
        summary
            .history
            .iter()
            .map(|r| (r.t, f(r)))
            .collect::<Vec<_>>()
    };
    let monitors: [(&str, &str, Vec<Point>); 4] = [
        ("mass_u", "mass of u", series(|r| r.mass_u)),
        ("linf_u", "max norm of u", series(|r| r.linf_u)),
        ("linf_v", "max norm of v", series(|r| r.linf_v)),
        ("l2_grad_v", "L2 norm of grad v", series(|r| r.l2_grad_v)),
    ];
    for (key, label, pts) in monitors {
        let plot =
            LinePlot::new(&format!("{} : {label}", scenario.name), "t", key).with_series(key, pts);
        write_file(&plots.join(format!("{key}.svg")), &plot.to_svg())?;
    }
    if let (Some(u), Some(v)) = (&summary.final_u, &summary.final_v) {
        let g = scenario.grid;
        match g.dim() {
            Dim::One => {
                let profile = |f: &ScalarField| {
                    (0..g.len())
                        .map(|c| (g.cell_center(c).0, f.values()[c]))
                        .collect::<Vec<_>>()
                };
                let plot = LinePlot::new(
                    &format!(
                        "{} : final profiles at t = {}",
                        scenario.name, summary.t_final
                    ),
                    "x",
                    "density",
                )
                .with_series("u", profile(u))
                .with_series("v", profile(v));
                write_file(&plots.join("profiles.svg"), &plot.to_svg())?;
            }
            Dim::Two => {
                for (key, f) in [("final_u", u), ("final_v", v)] {
                    let h = Heatmap::from_field(key, g.nx(), g.ny(), f.values());
                    write_file(&plots.join(format!("{key}.svg")), &h.to_svg())?;
                }
            }
        }
    }
    Ok(())
}

/// Heatmap of the fraction of numerically bounded runs over two axes.
///
/// Labels read `bounded/total` followed by `T` when every point in the cell
/// carries a boundedness guarantee, `-` when none does, `~` when mixed, and
/// `!` when the cell holds an anomaly.
pub fn agreement_heatmap(plan: &SweepPlan, result: &SweepResult) -> Heatmap {
    let axes = plan.axes.named();
    let pick = |name: &str| axes.iter().find(|(n, _)| *n == name).cloned();
    let (ax, ay) = match &plan.heatmap {
        Some([a, b]) => (pick(a), pick(b)),
        None => (axes.first().cloned(), axes.get(1).cloned()),
    };
    let ticks = |a: &Option<(&str, Vec<AxisValue>)>| -> Vec<String> {
        a.as_ref().map_or(vec![String::new()], |(_, v)| {
            v.iter().map(|x| x.to_string()).collect()
        })
    };
    let (xt, yt) = (ticks(&ax), ticks(&ay));
    let coord = |row: &SweepRow, a: &Option<(&str, Vec<AxisValue>)>, t: &[String]| -> usize {
        a.as_ref()
            .and_then(|(name, _)| row.values.iter().find(|(n, _)| n == name))
            .and_then(|(_, v)| t.iter().position(|x| *x == v.to_string()))
            .unwrap_or(0)
    };
    let mut cells: Vec<Vec<Vec<&SweepRow>>> = vec![vec![Vec::new(); xt.len()]; yt.len()];
    for row in &result.rows {
        cells[coord(row, &ay, &yt)][coord(row, &ax, &xt)].push(row);
    }
    let cells = cells
        .into_iter()
        .map(|line| {
            line.into_iter()
                .map(|members| {
                    if members.is_empty() {
                        return None;
                    }
                    let n = members.len();
                    let bounded = members.iter().filter(|r| r.verdict.is_bounded()).count();
                    let guaranteed = members
                        .iter()
                        .filter(|r| r.reports.iter().any(|x| x.verdict.guarantees_boundedness()))
                        .count();
                    let mark = if members.iter().any(|r| r.agreement == Agreement::Anomaly) {
                        "!"
                    } else if guaranteed == n {
                        "T"
                    } else if guaranteed == 0 {
                        "-"
                    } else {
                        "~"
                    };
                    Some(Cell {
                        value: bounded as f64 / n as f64,
                        label: format!("{bounded}/{n} {mark}"),
                    })
                })
                .collect()
        })
        .collect();
    Heatmap {
        title: format!("{}: fraction of bounded runs", plan.base.name),
        x_label: ax.map_or(String::new(), |(n, _)| n.to_string()),
        y_label: ay.map_or(String::new(), |(n, _)| n.to_string()),
        x_ticks: xt,
        y_ticks: yt,
        cells,
    }
}

#[derive(Serialize)]
struct PlanRecord<'a> {
    plan: &'a SweepPlan,
    runs: Vec<PlannedRun>,
}

#[derive(Serialize)]
struct PlannedRun {
    id: String,
    seed: Option<u64>,
    values: BTreeMap<String, AxisValue>,
}

#[derive(Serialize)]
struct PointSummary<'a> {
    id: &'a str,
    seed: Option<u64>,
    values: BTreeMap<String, AxisValue>,
    preset: Preset,
    regimes: &'a [RegimeReport],
    agreement: Agreement,
    summary: &'a RunSummary,
}

/// Writes the sweep directory: `plan.json`, `rows.csv`, `timing.csv`,
/// `agreement.{json,txt,svg}`, `summaries/<id>.json` and `points/<id>/`.
pub fn persist_sweep(
    dir: &Path,
    plan: &SweepPlan,
    result: &SweepResult,
    table: &AgreementTable,
) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir.join("summaries"))?;
    fs::create_dir_all(dir.join("points"))?;
    let value_map =
        |values: &[(String, AxisValue)]| values.iter().cloned().collect::<BTreeMap<_, _>>();
    let record = PlanRecord {
        plan,
        runs: result
            .rows
            .iter()
            .map(|r| PlannedRun {
                id: r.id.clone(),
                seed: r.seed,
                values: value_map(&r.values),
            })
            .collect(),
    };
    write_file(
        &dir.join("plan.json"),
        &(serde_json::to_string_pretty(&record)? + "\n"),
    )?;
    write_file(&dir.join("rows.csv"), &rows_csv(result))?;
    let mut timing = String::from("point_id,runtime_seconds\n");
    for r in &result.rows {
        timing.push_str(&format!("{},{}\n", r.id, r.summary.runtime_seconds));
    }
    write_file(&dir.join("timing.csv"), &timing)?;
    write_file(
        &dir.join("agreement.json"),
        &(serde_json::to_string_pretty(table)? + "\n"),
    )?;
    write_file(&dir.join("agreement.txt"), &table.to_string())?;
    write_file(
        &dir.join("agreement.svg"),
        &agreement_heatmap(plan, result).to_svg(),
    )?;
    for r in &result.rows {
        let point = PointSummary {
            id: &r.id,
            seed: r.seed,
            values: value_map(&r.values),
            preset: r.scenario.preset,
            regimes: &r.reports,
            agreement: r.agreement,
            summary: &r.summary,
        };
        write_file(
            &dir.join("summaries").join(format!("{}.json", r.id)),
            &(serde_json::to_string_pretty(&point)? + "\n"),
        )?;
        write_run_artifacts(&dir.join("points").join(&r.id), &r.scenario, &r.summary)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_defaults_are_weak_competition() {
        let s = build_preset(Preset::ClassicalLv, &ModelOverrides::default()).unwrap();
        assert_eq!(s.spec.chi, 0.0);
        assert_eq!(
            (s.spec.a1, s.spec.b1, s.spec.c1, s.spec.a2, s.spec.b2, s.spec.c2),
            (3.0, 2.0, 1.0, 2.0, 1.0, 2.0)
        );
        assert_eq!(
            crate::model::competition_type(&s.spec).unwrap().kind,
            crate::model::CompetitionKind::Weak
        );
        assert!(s.validate().is_ok());
        let bad = ModelOverrides {
            chi: Some(1.0),
            ..ModelOverrides::default()
        };
        assert!(build_preset(Preset::ClassicalLv, &bad).is_err());
    }

    #[test]
    fn skt_preset_has_unit_exponents() {
        let s = build_preset(Preset::SktReduced, &ModelOverrides::default()).unwrap();
        assert_eq!(s.spec.effective_exponents(), (1.0, 1.0));
        assert_eq!(s.spec.alpha, 1.0);
        let r = s.classify(Some(2));
        assert!(r.iter().all(|x| x.verdict == Verdict::Satisfied));
        let o = ModelOverrides {
            chi: Some(2.0),
            ..ModelOverrides::default()
        };
        let s = build_spec(Preset::SktReduced, &o).unwrap();
        assert!(matches!(s.diffusion, DiffusionLaw::SktCross { rho12, .. } if rho12 == 2.0));
        let clash = ModelOverrides {
            chi: Some(2.0),
            rho12: Some(1.0),
            ..ModelOverrides::default()
        };
        assert!(build_spec(Preset::SktReduced, &clash).is_err());
    }

    #[test]
    fn ideal_free_ties_rho11_to_chi() {
        let o = ModelOverrides {
            chi: Some(3.0),
            d1: Some(0.2),
            ..ModelOverrides::default()
        };
        let s = build_spec(Preset::IdealFree, &o).unwrap();
        assert_eq!(
            s.diffusion,
            DiffusionLaw::Affine {
                d1: 0.2,
                rho11: 1.5
            }
        );
        let o = ModelOverrides {
            rho11: Some(3.0),
            ..ModelOverrides::default()
        };
        assert!(build_spec(Preset::IdealFree, &o).is_err());
    }

    #[test]
    fn full_overrides_reproduce_the_spec() {
        for p in Preset::ALL {
            let s = build_spec(p, &ModelOverrides::default()).unwrap();
            assert_eq!(build_spec(p, &ModelOverrides::full(&s)).unwrap(), s, "{p}");
        }
    }

    #[test]
    fn random_initial_data_is_seeded() {
        let g = Grid::new_1d(16, 1.0).unwrap();
        let a = InitialData::RandomUniform {
            lo: 0.5,
            hi: 1.5,
            seed: 9,
        };
        let (u1, v1) = a.materialize(&g).unwrap();
        let (u2, _) = a.materialize(&g).unwrap();
        assert_eq!(u1, u2);
        assert_ne!(u1, v1);
        assert!(u1.min() >= 0.5 && u1.max() <= 1.5);
    }

    #[test]
    fn bump_centre_defaults_in_2d() {
        let g = Grid::new_2d(8, 8, 1.0, 1.0).unwrap();
        let b = InitialData::Bump {
            center: vec![0.5],
            width: 0.2,
            amplitude: 1.0,
            background: 0.1,
            v0: None,
        };
        let (u, v) = b.materialize(&g).unwrap();
        assert!((u.values()[g.idx(3, 3)] - u.values()[g.idx(4, 4)]).abs() < 1e-15);
        assert_eq!(v.max(), 0.1);
    }

    #[test]
    fn plan_enumerates_in_order() {
        let base = build_preset(Preset::AdvectiveLv, &ModelOverrides::default()).unwrap();
        let plan = SweepPlan {
            axes: SweepAxes {
                m2: Some(vec![0.5, 1.0, 3.0]),
                chi: Some(vec![0.1, 1.0]),
                ..SweepAxes::default()
            },
            seeds: vec![1, 2],
            ..SweepPlan::single(base)
        };
        let pts = plan.points().unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[0].id, "p0000");
        assert_eq!(pts[0].values[0].1, AxisValue::Number(0.5));
        assert_eq!(pts[2].values[1].1, AxisValue::Number(1.0));
        assert_eq!(pts[1].seed, Some(2));
        assert_eq!(pts[0].scenario.preset, Preset::Custom);
        assert_eq!(pts[4].scenario.preset, Preset::AdvectiveLv);
        let capped = SweepPlan { cap: 5, ..plan };
        assert!(matches!(
            capped.points(),
            Err(ScenarioError::CapExceeded {
                requested: 12,
                cap: 5
            })
        ));
    }

    #[test]
    fn classifier_columns_follow_hand_evaluation() {
        // m1 = alpha = 1, N = 2: Thm1_1 needs m2 < 2, Thm1_2 needs 2 m2 - 1 < 2.
        let base = build_preset(Preset::AdvectiveLv, &ModelOverrides::default()).unwrap();
        let plan = SweepPlan {
            axes: SweepAxes {
                m1: Some(vec![1.0]),
                m2: Some(vec![0.5, 1.0, 3.0]),
                ..SweepAxes::default()
            },
            classify_n: Some(2),
            ..SweepPlan::single(base)
        };
        let expect = [
            (Verdict::Satisfied, Verdict::Satisfied),
            (Verdict::Satisfied, Verdict::Satisfied),
            (Verdict::Violated, Verdict::Violated),
        ];
        for (p, (e1, e2)) in plan.points().unwrap().iter().zip(expect) {
            let r = p.scenario.classify(plan.classify_n);
            assert_eq!((r[0].verdict, r[1].verdict), (e1, e2), "{:?}", p.values);
        }
    }

    fn row(id: &str, reports: Vec<RegimeReport>, verdict: RunVerdict) -> SweepRow {
        let scenario = build_preset(Preset::Custom, &ModelOverrides::default()).unwrap();
        SweepRow {
            id: id.into(),
            seed: None,
            values: vec![],
            agreement: Agreement::of(&reports, verdict),
            reports,
            verdict,
            max_linf_u: 1.0,
            summary: RunSummary::failed(id, String::new()),
            scenario,
        }
    }

    #[test]
    fn agreement_semantics() {
        let mut sat_spec = ModelSpec::default();
        set_m1(&mut sat_spec, 1.0);
        let sat = classify(&sat_spec, 2);
        let mut viol_spec = ModelSpec::default();
        set_m2(&mut viol_spec, 3.0);
        let viol = classify(&viol_spec, 2);
        assert!(viol.iter().all(|r| r.verdict == Verdict::Violated));
        let result = SweepResult {
            axis_names: vec![],
            rows: vec![
                row("a", sat.clone(), RunVerdict::Bounded),
                row("b", sat.clone(), RunVerdict::ConvergedToSteadyState),
                row("c", viol.clone(), RunVerdict::Bounded),
                row("d", sat, RunVerdict::Growing),
            ],
        };
        let t = compare_theory(&result);
        assert_eq!(t.guaranteed, 3);
        assert_eq!(t.guaranteed_bounded, 2);
        assert_eq!(t.anomalies, vec!["d".to_string()]);
        assert_eq!(t.unguaranteed_bounded, vec!["c".to_string()]);
        assert_eq!(t.rows[2].counts["Bounded"], 1);
        let all_good = SweepResult {
            axis_names: vec![],
            rows: result.rows[..2].to_vec(),
        };
        assert_eq!(compare_theory(&all_good).agreement, Some(1.0));
        let text = rows_csv(&result);
        assert!(text.starts_with("point_id,seed,Thm1_1,"));
        assert!(text
            .lines()
            .nth(3)
            .unwrap()
            .ends_with(",Bounded,1,no_guarantee_bounded"));
    }
}

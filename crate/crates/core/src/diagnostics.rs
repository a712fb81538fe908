//! Monitored quantities of a run and the runtime checks against the known
//! a priori bounds.
//!
//! Everything here is a pure function of fields or of a recorded history.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{face_gradient, ScalarField};
use crate::model::{ModelError, ModelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("check not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("need at least {need} records, have {have}")]
    InsufficientData { have: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// Exponents `p >= 1` of the tracked `L^p` norms of u.
    pub lp_exponents: Vec<f64>,
    /// Steps per window of the boundedness verdict.
    pub window: usize,
    /// Relative slack of the a priori bound checks.
    pub bound_tol: f64,
    /// Relative slack of the window-to-window comparison.
    pub trend_tol: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            lp_exponents: vec![1.0, 2.0, 4.0],
            window: 200,
            bound_tol: 1e-6,
            trend_tol: 1e-6,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &str, reason: String| ModelError::Invalid {
            field: format!("monitors.{field}"),
            reason,
        };
        if self.window < 2 {
            return Err(bad(
                "window",
                format!("must be at least 2, got {}", self.window),
            ));
        }
        if let Some(p) = self
            .lp_exponents
            .iter()
            .find(|p| !(p.is_finite() && **p >= 1.0))
        {
            return Err(bad(
                "lp_exponents",
                format!("exponents must be >= 1, got {p}"),
            ));
        }
        for (field, tol) in [("bound_tol", self.bound_tol), ("trend_tol", self.trend_tol)] {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(bad(
                    field,
                    format!("must be a nonnegative number, got {tol}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub mass_u: f64,
    /// One entry per configured exponent, in order.
    pub lp_u: Vec<f64>,
    pub linf_u: f64,
    pub linf_v: f64,
    pub l2_grad_v: f64,
    /// `(2 mu / b1) int u + 1/2 int |grad v|^2` with `mu = b2^2 ||v||_inf^2 / (2 D2)`.
    pub energy_like: f64,
}

/// `(int |u|^p)^(1/p)` with cell-volume weights; `p = 1` is the plain integral.
pub fn lp_norm(u: &ScalarField, p: f64) -> f64 {
    let vol = u.grid().cell_volume();
    if p == 1.0 {
        return vol * u.values().iter().map(|x| x.abs()).sum::<f64>();
    }
    let s: f64 = u.values().iter().map(|x| x.abs().powf(p)).sum();
    (vol * s).powf(1.0 / p)
}

/// `int |grad v|^2`, each face derivative weighted by its dual volume `hx hy`.
pub fn grad_squared_integral(v: &ScalarField) -> f64 {
    let g = face_gradient(v);
    let vol = v.grid().cell_volume();
    vol * g.x.iter().chain(&g.y).map(|d| d * d).sum::<f64>()
}

pub fn measure(
    u: &ScalarField,
    v: &ScalarField,
    spec: &ModelSpec,
    cfg: &MonitorConfig,
) -> DiagnosticsRecord {
    let mass_u = u.integral();
    let lp_u = cfg
        .lp_exponents
        .iter()
        .map(|&p| if p == 1.0 { mass_u } else { lp_norm(u, p) })
        .collect();
    let linf_v = v.linf();
    let grad2 = grad_squared_integral(v);
    // b1 and b2 do not depend on the resource in any kinetics mode.
    let rates = spec
        .local_rates(Some(1.0))
        .unwrap_or(crate::model::LocalRates::ZERO);
    let mu = rates.b2 * rates.b2 * linf_v * linf_v / (2.0 * spec.d2);
    let mass_term = if rates.b1 > 0.0 {
        2.0 * mu / rates.b1 * mass_u
    } else {
        0.0
    };
    DiagnosticsRecord {
        t: 0.0,
        dt: 0.0,
        mass_u,
        lp_u,
        linf_u: u.linf(),
        linf_v,
        l2_grad_v: grad2.sqrt(),
        energy_like: mass_term + 0.5 * grad2,
    }
}

/// Outcome of comparing a recorded maximum against an a priori bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub pass: bool,
    pub bound: f64,
    pub max_value: f64,
    /// `bound - max_value`; negative when violated.
    pub margin: f64,
}

fn bound_check(values: impl Iterator<Item = f64>, bound: f64, tol: f64) -> BoundCheck {
    let max_value = values.fold(0.0, f64::max);
    BoundCheck {
        pass: max_value <= bound * (1.0 + tol),
        bound,
        max_value,
        margin: bound - max_value,
    }
}

/// `||v||_inf <= max{a2/c2, ||v0||_inf}` over the history.
pub fn check_v_bound(
    history: &[DiagnosticsRecord],
    spec: &ModelSpec,
    v0_linf: f64,
    tol: f64,
) -> Result<BoundCheck, DiagnosticsError> {
    if !spec.kinetics.is_lotka_volterra() {
        return Err(DiagnosticsError::NotApplicable(
            "the v bound needs Lotka-Volterra kinetics",
        ));
    }
    let bound = (spec.a2 / spec.c2).max(v0_linf);
    Ok(bound_check(history.iter().map(|r| r.linf_v), bound, tol))
}

/// `int u <= max{int u0, |Omega| (a1/b1)^(1/alpha)}` over the history.
///
/// The second term is the equilibrium of the logistic comparison ODE
/// obtained from Jensen's inequality `int u^(1+alpha) >= |Omega|^-alpha (int u)^(1+alpha)`.
pub fn check_mass_bound(
    history: &[DiagnosticsRecord],
    spec: &ModelSpec,
    measure: f64,
    u0_mass: f64,
    tol: f64,
) -> Result<BoundCheck, DiagnosticsError> {
    if !spec.kinetics.is_lotka_volterra() {
        return Err(DiagnosticsError::NotApplicable(
            "the mass bound needs Lotka-Volterra kinetics",
        ));
    }
    let carrying = measure * (spec.a1 / spec.b1).powf(1.0 / spec.alpha);
    let bound = u0_mass.max(carrying);
    Ok(bound_check(history.iter().map(|r| r.mass_u), bound, tol))
}

/// Trend check on `||grad v||_2`, armed only for `alpha >= 1`.
pub fn check_grad_v(
    history: &[DiagnosticsRecord],
    spec: &ModelSpec,
    cfg: &MonitorConfig,
) -> Result<bool, DiagnosticsError> {
    if spec.alpha < 1.0 {
        return Err(DiagnosticsError::NotApplicable(
            "the grad v bound is known only for alpha >= 1",
        ));
    }
    let series: Vec<f64> = history.iter().map(|r| r.l2_grad_v).collect();
    need_records(series.len(), cfg)?;
    Ok(!is_growing(&series, cfg.window))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundednessVerdict {
    Bounded,
    Growing,
    Inconclusive,
    InsufficientData,
}

impl fmt::Display for BoundednessVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundednessVerdict::Bounded => "Bounded",
            BoundednessVerdict::Growing => "Growing",
            BoundednessVerdict::Inconclusive => "Inconclusive",
            BoundednessVerdict::InsufficientData => "InsufficientData",
        };
        f.write_str(s)
    }
}

fn need_records(have: usize, cfg: &MonitorConfig) -> Result<(), DiagnosticsError> {
    let need = 2 * cfg.window;
    if have < need {
        Err(DiagnosticsError::InsufficientData { have, need })
    } else {
        Ok(())
    }
}

fn max_of(s: &[f64]) -> f64 {
    s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Last window's maximum does not exceed the previous window's.
fn window_settled(series: &[f64], window: usize, tol: f64) -> bool {
    let n = series.len();
    let last = max_of(&series[n - window..]);
    let prev = max_of(&series[n - 2 * window..n - window]);
    last <= prev * (1.0 + tol) || last <= prev + f64::MIN_POSITIVE
}

/// At least doubled across the final half, with a positive least-squares slope.
fn is_growing(series: &[f64], window: usize) -> bool {
    let half = &series[series.len() / 2..];
    if half.len() < window.min(2) {
        return false;
    }
    let first = half[0];
    let last = *half.last().unwrap_or(&first);
    if !(last >= 2.0 * first && last > 0.0) {
        return false;
    }
    let n = half.len() as f64;
    let mean_k = (n - 1.0) / 2.0;
    let mean_y = half.iter().sum::<f64>() / n;
    let cov: f64 = half
        .iter()
        .enumerate()
        .map(|(k, y)| (k as f64 - mean_k) * (y - mean_y))
        .sum();
    cov > 0.0
}

/// Window verdict on `||u||_inf`, with mass, `||v||_inf` and `||grad v||_2`
/// required not to be growing.
pub fn boundedness_verdict(
    history: &[DiagnosticsRecord],
    cfg: &MonitorConfig,
) -> Result<BoundednessVerdict, DiagnosticsError> {
    need_records(history.len(), cfg)?;
    let series = |f: fn(&DiagnosticsRecord) -> f64| history.iter().map(f).collect::<Vec<_>>();
    let linf_u = series(|r| r.linf_u);
    let others = [
        series(|r| r.mass_u),
        series(|r| r.linf_v),
        series(|r| r.l2_grad_v),
    ];
    if window_settled(&linf_u, cfg.window, cfg.trend_tol)
        && others.iter().all(|s| !is_growing(s, cfg.window))
    {
        Ok(BoundednessVerdict::Bounded)
    } else if is_growing(&linf_u, cfg.window) {
        Ok(BoundednessVerdict::Growing)
    } else {
        Ok(BoundednessVerdict::Inconclusive)
    }
}

/// Result of an optional check, as it appears in run summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MonitorOutcome<T> {
    Checked(T),
    Skipped { skipped: String },
}

impl<T> MonitorOutcome<T> {
    pub fn from_result(r: Result<T, DiagnosticsError>) -> Self {
        match r {
            Ok(v) => MonitorOutcome::Checked(v),
            Err(e) => MonitorOutcome::Skipped {
                skipped: e.to_string(),
            },
        }
    }

    pub fn checked(&self) -> Option<&T> {
        match self {
            MonitorOutcome::Checked(v) => Some(v),
            MonitorOutcome::Skipped { .. } => None,
        }
    }
}

/// Every check evaluated on a finished history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub v_bound: MonitorOutcome<BoundCheck>,
    pub mass_bound: MonitorOutcome<BoundCheck>,
    pub grad_v_not_growing: MonitorOutcome<bool>,
    pub boundedness: BoundednessVerdict,
    /// Soft monitor: the energy-like functional settled over the last window.
    pub energy_like_settled: Option<bool>,
}

pub fn evaluate(
    history: &[DiagnosticsRecord],
    spec: &ModelSpec,
    cfg: &MonitorConfig,
    measure: f64,
    u0_mass: f64,
    v0_linf: f64,
) -> DiagnosticsReport {
    let boundedness = match boundedness_verdict(history, cfg) {
        Ok(v) => v,
        Err(_) => BoundednessVerdict::InsufficientData,
    };
    let energy_like_settled = (history.len() >= 2 * cfg.window).then(|| {
        let e: Vec<f64> = history.iter().map(|r| r.energy_like).collect();
        window_settled(&e, cfg.window, cfg.trend_tol)
    });
    DiagnosticsReport {
        v_bound: MonitorOutcome::from_result(check_v_bound(history, spec, v0_linf, cfg.bound_tol)),
        mass_bound: MonitorOutcome::from_result(check_mass_bound(
            history,
            spec,
            measure,
            u0_mass,
            cfg.bound_tol,
        )),
        grad_v_not_growing: MonitorOutcome::from_result(check_grad_v(history, spec, cfg)),
        boundedness,
        energy_like_settled,
    }
}

fn p_label(p: f64) -> String {
    format!("lp_u_{p}")
}

pub fn timeseries_header(cfg: &MonitorConfig) -> String {
    let mut cols: Vec<String> = ["t", "dt", "mass_u", "linf_u", "linf_v", "l2_grad_v"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(cfg.lp_exponents.iter().map(|&p| p_label(p)));
    cols.push("energy_like".into());
    cols.join(",")
}

pub fn write_timeseries(
    out: &mut impl Write,
    history: &[DiagnosticsRecord],
    cfg: &MonitorConfig,
) -> std::io::Result<()> {
    writeln!(out, "{}", timeseries_header(cfg))?;
    for r in history {
        write!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.dt, r.mass_u, r.linf_u, r.linf_v, r.l2_grad_v
        )?;
        for p in &r.lp_u {
            write!(out, ",{p}")?;
        }
        writeln!(out, ",{}", r.energy_like)?;
    }
    Ok(())
}

pub fn write_timeseries_csv(
    path: &Path,
    history: &[DiagnosticsRecord],
    cfg: &MonitorConfig,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_timeseries(&mut out, history, cfg)?;
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::Kinetics;
    use proptest::prelude::*;

    fn record(linf_u: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t: 0.0,
            dt: 0.1,
            mass_u: 1.0,
            lp_u: vec![],
            linf_u,
            linf_v: 1.0,
            l2_grad_v: 0.1,
            energy_like: 1.0,
        }
    }

    #[test]
    fn constant_field_norms() {
        let g = Grid::new_1d(10, 1.0).unwrap();
        let u = ScalarField::constant(g, 1.0);
        let v = ScalarField::constant(g, 0.3);
        let r = measure(&u, &v, &ModelSpec::default(), &MonitorConfig::default());
        assert!((r.mass_u - 1.0).abs() < 1e-15);
        for p in &r.lp_u {
            assert!((p - 1.0).abs() < 1e-14);
        }
        assert_eq!(r.l2_grad_v, 0.0);
    }

    #[test]
    fn hand_summation_example() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        let u = ScalarField::new(g, vec![0.0, 1.0, 2.0, 1.0]).unwrap();
        let v = ScalarField::new(g, vec![0.0, 1.0, 2.0, 1.0]).unwrap();
        let cfg = MonitorConfig::default();
        let r = measure(&u, &v, &ModelSpec::default(), &cfg);
        assert_eq!(r.mass_u, 1.0);
        assert_eq!(r.lp_u[0], r.mass_u);
        let l2 = (0.25f64 * (0.0 + 1.0 + 4.0 + 1.0)).sqrt();
        assert!((r.lp_u[1] - l2).abs() < 1e-15);
        let l4 = (0.25f64 * (0.0 + 1.0 + 16.0 + 1.0)).powf(0.25);
        assert!((r.lp_u[2] - l4).abs() < 1e-15);
        // Face derivatives 4, 4, -4 with dual volume 0.25.
        let grad = (0.25f64 * 48.0).sqrt();
        assert!((r.l2_grad_v - grad).abs() < 1e-14);
        assert_eq!(r.linf_u, 2.0);
        // mu = b2^2 |v|^2 / (2 D2) = 2; energy = (2 mu / b1) * 1 + 12 / 2.
        assert!((r.energy_like - (2.0 + 6.0)).abs() < 1e-12);
    }

    #[test]
    fn v_bound_examples() {
        let spec = ModelSpec::default();
        let a2c2 = spec.a2 / spec.c2;
        let h = vec![record(1.0)];
        let c = check_v_bound(&h, &spec, a2c2 / 2.0, 1e-6).unwrap();
        assert_eq!(c.bound, a2c2);
        assert!(c.pass);
        let c = check_v_bound(&h, &spec, 2.0 * a2c2, 1e-6).unwrap();
        assert_eq!(c.bound, 2.0 * a2c2);
        let mut bad = record(1.0);
        bad.linf_v = 5.0;
        assert!(!check_v_bound(&[bad], &spec, 0.0, 1e-6).unwrap().pass);
        let off = ModelSpec {
            kinetics: Kinetics::Disabled,
            ..ModelSpec::default()
        };
        assert!(check_v_bound(&h, &off, 0.0, 1e-6).is_err());
    }

    #[test]
    fn mass_bound_examples() {
        let spec = ModelSpec {
            a1: 1.0,
            b1: 1.0,
            alpha: 1.0,
            ..ModelSpec::default()
        };
        let h = vec![record(1.0)];
        assert_eq!(
            check_mass_bound(&h, &spec, 1.0, 0.5, 1e-6).unwrap().bound,
            1.0
        );
        assert_eq!(
            check_mass_bound(&h, &spec, 1.0, 10.0, 1e-6).unwrap().bound,
            10.0
        );
        let mut zero = record(0.0);
        zero.mass_u = 0.0;
        assert!(
            check_mass_bound(&[zero], &spec, 1.0, 0.0, 1e-6)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn verdict_examples() {
        let cfg = MonitorConfig {
            window: 10,
            ..MonitorConfig::default()
        };
        let flat: Vec<_> = (0..40).map(|_| record(3.0)).collect();
        assert_eq!(
            boundedness_verdict(&flat, &cfg),
            Ok(BoundednessVerdict::Bounded)
        );
        let doubling: Vec<_> = (0..40)
            .map(|k| record(2f64.powf(k as f64 / 10.0)))
            .collect();
        assert_eq!(
            boundedness_verdict(&doubling, &cfg),
            Ok(BoundednessVerdict::Growing)
        );
        assert_eq!(
            boundedness_verdict(&flat[..19], &cfg),
            Err(DiagnosticsError::InsufficientData { have: 19, need: 20 })
        );
        let slow: Vec<_> = (0..40).map(|k| record(1.0 + 0.001 * k as f64)).collect();
        assert_eq!(
            boundedness_verdict(&slow, &cfg),
            Ok(BoundednessVerdict::Inconclusive)
        );
    }

    #[test]
    fn grad_check_armed_by_alpha() {
        let cfg = MonitorConfig {
            window: 2,
            ..MonitorConfig::default()
        };
        let h: Vec<_> = (0..8).map(|_| record(1.0)).collect();
        let sub = ModelSpec {
            alpha: 0.5,
            ..ModelSpec::default()
        };
        assert!(check_grad_v(&h, &sub, &cfg).is_err());
        assert_eq!(check_grad_v(&h, &ModelSpec::default(), &cfg), Ok(true));
    }

    #[test]
    fn timeseries_columns() {
        let cfg = MonitorConfig::default();
        assert_eq!(
            timeseries_header(&cfg),
            "t,dt,mass_u,linf_u,linf_v,l2_grad_v,lp_u_1,lp_u_2,lp_u_4,energy_like"
        );
        let g = Grid::new_1d(4, 1.0).unwrap();
        let u = ScalarField::constant(g, 1.0);
        let r = measure(&u, &u, &ModelSpec::default(), &cfg);
        let mut buf = Vec::new();
        write_timeseries(&mut buf, &[r], &cfg).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row.split(',').count(), 10);
    }

    #[test]
    fn monitor_config_validation() {
        assert!(MonitorConfig::default().validate().is_ok());
        let bad = MonitorConfig {
            window: 1,
            ..MonitorConfig::default()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("monitors.window"));
        let bad = MonitorConfig {
            lp_exponents: vec![0.5],
            ..MonitorConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn norms_monotone_under_domination(
            base in prop::collection::vec(0.0f64..5.0, 6),
            extra in prop::collection::vec(0.0f64..5.0, 6),
        ) {
            let g = Grid::new_1d(6, 2.0).unwrap();
            let u = ScalarField::new(g, base.clone()).unwrap();
            let w = ScalarField::new(g, base.iter().zip(&extra).map(|(a, b)| a + b).collect()).unwrap();
            let v = ScalarField::zeros(g);
            let cfg = MonitorConfig { lp_exponents: vec![1.0, 1.5, 2.0, 4.0, 7.0], ..MonitorConfig::default() };
            let ru = measure(&u, &v, &ModelSpec::default(), &cfg);
            let rw = measure(&w, &v, &ModelSpec::default(), &cfg);
            prop_assert!(ru.mass_u <= rw.mass_u);
            prop_assert!(ru.linf_u <= rw.linf_u);
            for (a, b) in ru.lp_u.iter().zip(&rw.lp_u) {
                prop_assert!(*a <= *b * (1.0 + 1e-14));
            }
            prop_assert_eq!(ru.lp_u[0], ru.mass_u);
        }
    }
}

//! Time integration with positivity-preserving IMEX steps, the nonlinear
//! elliptic solve for v, adaptive step control and blow-up detection.
//!
//! One u-step solves
//!
//! ```text
//! (1 + dt (b1 u^alpha + c1 v)) u' - dt div(D1 grad u') = u + dt a1 u + dt div(F_taxis)
//! ```
//!
//! with `D1` and the loss coefficient lagged at the old state and the
//! upwinded taxis flux explicit. Production stays explicit and loss is
//! implicit, so the right-hand side is nonnegative under the advective CFL
//! bound and the M-matrix solve keeps `u' >= 0`. The parabolic v-step has
//! the same shape with `D2`, `a2 v` and `b2 u + c2 v`.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsRecord, DiagnosticsReport, MonitorConfig};
use crate::grid::{
    divergence, face_diffusivity, neumann_laplacian_matrix, taxis_fluxes, FaceField, Grid,
    GridError, NeumannLaplacian, ScalarField, ShiftedLaplacian, TaxisFluxes,
};
use crate::harness::{Scenario, ScenarioError};
use crate::linalg::{pcg, BandedLu, LinalgError};
use crate::model::{Kinetics, LocalRates, ModelError, ModelSpec, ResourceField, VDynamics};

/// Relative tolerance of every inner linear solve.
const CG_TOL: f64 = 1e-12;
/// Accepted steps grow the next step by this factor, up to `dt_max`.
const DT_GROWTH: f64 = 1.2;
/// Cells below this fraction of `max u` are kept positive by the flux
/// limiter instead of restricting the step.
const CFL_BULK_FRACTION: f64 = 1e-3;
/// Negative solver output above `-NEG_CLAMP * max|x|` is rounding noise.
const NEG_CLAMP: f64 = 1e-12;
const STEADY_RATE: f64 = 1e-8;
const STEADY_STEPS: usize = 50;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("step rejected: {0}")]
    Rejected(String),
    #[error("time step {dt:e} fell below dt_min = {dt_min:e}")]
    DtUnderflow { dt: f64, dt_min: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolve(#[from] LinalgError),
    #[error(
        "elliptic solve stalled at residual {residual:e} after {newton} Newton and {picard} Picard iterations"
    )]
    NoConvergence {
        residual: f64,
        newton: usize,
        picard: usize,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl StepError {
    /// Errors a smaller step may cure.
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            StepError::Rejected(_)
                | StepError::LinearSolve(_)
                | StepError::Grid(GridError::NonFinite { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction of the explicit taxis stability limit used per step.
    pub cfl_adv: f64,
    /// `||u||_inf` above this ends the run as suspected blow-up.
    pub blowup_linf: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt_init: 1e-3,
            dt_min: 1e-10,
            dt_max: 0.05,
            cfl_adv: 0.5,
            blowup_linf: 1e8,
            t_end: 100.0,
            newton_tol: 1e-10,
            newton_max_iter: 50,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &str, reason: String| {
            Err(ModelError::Invalid {
                field: format!("control.{field}"),
                reason,
            })
        };
        for (name, value) in [
            ("dt_init", self.dt_init),
            ("dt_min", self.dt_min),
            ("dt_max", self.dt_max),
            ("cfl_adv", self.cfl_adv),
            ("blowup_linf", self.blowup_linf),
            ("t_end", self.t_end),
            ("newton_tol", self.newton_tol),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return bad(name, format!("must be positive and finite, got {value}"));
            }
        }
        if self.dt_min >= self.dt_init {
            return bad(
                "dt_min",
                format!(
                    "control.dt_min ({}) must be smaller than control.dt_init ({})",
                    self.dt_min, self.dt_init
                ),
            );
        }
        if self.dt_init > self.dt_max {
            return bad(
                "dt_init",
                format!(
                    "control.dt_init ({}) must not exceed control.dt_max ({})",
                    self.dt_init, self.dt_max
                ),
            );
        }
        if self.cfl_adv > 1.0 {
            return bad(
                "cfl_adv",
                format!("must lie in (0, 1], got {}", self.cfl_adv),
            );
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Work counters of the elliptic solves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NewtonStats {
    pub solves: usize,
    pub newton_iterations: usize,
    pub picard_iterations: usize,
    /// Newton systems that CG could not handle and went to banded LU.
    pub lu_fallbacks: usize,
    pub max_residual: f64,
}

impl NewtonStats {
    fn absorb(&mut self, o: &EllipticSolution) {
        self.solves += 1;
        self.newton_iterations += o.newton_iterations;
        self.picard_iterations += o.picard_iterations;
        self.lu_fallbacks += o.lu_fallbacks;
        self.max_residual = self.max_residual.max(o.residual);
    }
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    /// Step size requested for the next step.
    pub dt: f64,
    pub step_count: usize,
    pub newton_stats: NewtonStats,
}

impl RunState {
    pub fn new(u: ScalarField, v: ScalarField, dt: f64) -> Self {
        RunState {
            t: 0.0,
            u,
            v,
            dt,
            step_count: 0,
            newton_stats: NewtonStats::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub v: ScalarField,
    /// `||D2 L v + (a2 - b2 u - c2 v) v||_inf` at the returned v.
    pub residual: f64,
    pub newton_iterations: usize,
    pub picard_iterations: usize,
    pub lu_fallbacks: usize,
}

/// Samples a resource distribution on `grid`.
pub fn resource_field(resource: &ResourceField, grid: &Grid) -> Result<ScalarField, StepError> {
    let field = match resource {
        ResourceField::Constant { value } => ScalarField::constant(*grid, *value),
        ResourceField::Cosine {
            mean,
            amplitude,
            modes,
        } => {
            let k = std::f64::consts::PI * f64::from(*modes);
            let (lx, ly, two_d) = (grid.lx(), grid.ly(), grid.n_dim() == 2);
            ScalarField::from_fn(*grid, |x, y| {
                let mut shape = (k * x / lx).cos();
                if two_d {
                    shape *= (k * y / ly).cos();
                }
                mean + amplitude * shape
            })?
        }
        ResourceField::File { path } => {
            let f = ScalarField::read_csv(path)?;
            if f.grid() != grid {
                return Err(GridError::Csv {
                    path: path.display().to_string(),
                    reason: format!("resource grid {} differs from run grid {grid}", f.grid()),
                }
                .into());
            }
            f
        }
    };
    if field.min() <= 0.0 {
        return Err(ModelError::Invalid {
            field: "kinetics.resource".into(),
            reason: format!("m(x) must be positive, minimum is {}", field.min()),
        }
        .into());
    }
    Ok(field)
}

/// Everything a step needs that does not change during a run.
#[derive(Debug, Clone)]
pub struct Stepper {
    spec: ModelSpec,
    ctrl: StepControl,
    grid: Grid,
    resource: Option<ScalarField>,
    rates: Vec<LocalRates>,
    /// `D2 * L` with unit face weights.
    lap_v: NeumannLaplacian,
}

impl Stepper {
    pub fn new(spec: &ModelSpec, ctrl: &StepControl, grid: &Grid) -> Result<Self, StepError> {
        spec.validate()?;
        ctrl.validate()?;
        let resource = match &spec.kinetics {
            Kinetics::IdealFree { resource, .. } => Some(resource_field(resource, grid)?),
            _ => None,
        };
        let rates = (0..grid.len())
            .map(|c| spec.local_rates(resource.as_ref().map(|m| m.values()[c])))
            .collect::<Result<Vec<_>, _>>()?;
        let lap_v = neumann_laplacian_matrix(grid, &FaceField::interior_constant(*grid, spec.d2))?;
        Ok(Stepper {
            spec: spec.clone(),
            ctrl: ctrl.clone(),
            grid: *grid,
            resource,
            rates,
            lap_v,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn control(&self) -> &StepControl {
        &self.ctrl
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn resource(&self) -> Option<&ScalarField> {
        self.resource.as_ref()
    }

    fn check_grid(&self, f: &ScalarField) -> Result<(), StepError> {
        if f.grid() == &self.grid {
            Ok(())
        } else {
            Err(GridError::GridMismatch.into())
        }
    }

    /// Largest step the explicit taxis flux allows: `cfl_adv` over the
    /// largest per-cell outflow rate among the bulk cells.
    pub fn cfl_limit(&self, taxis: &TaxisFluxes, u: &ScalarField) -> f64 {
        let rates = taxis.outflow_rates(u);
        let floor = CFL_BULK_FRACTION * u.max();
        let r = u
            .values()
            .iter()
            .zip(&rates)
            .filter(|(uc, _)| **uc >= floor)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max);
        if r > 0.0 {
            self.ctrl.cfl_adv / r
        } else {
            f64::INFINITY
        }
    }

    /// Scales the outgoing fluxes of any cell that would otherwise be
    /// drained by more than `cfl_adv` of its content in one step. Each face
    /// has a single upwind cell, so the scaled flux stays conservative.
    fn limit_taxis(&self, taxis: &mut TaxisFluxes, u: &ScalarField, dt: f64) {
        let rates = taxis.outflow_rates(u);
        let theta: Vec<f64> = rates
            .iter()
            .map(|r| {
                let drain = dt * r;
                if drain > self.ctrl.cfl_adv {
                    self.ctrl.cfl_adv / drain
                } else {
                    1.0
                }
            })
            .collect();
        for (f, up) in taxis.flux.x.iter_mut().zip(&taxis.upwind_x) {
            if let Some(c) = up {
                *f *= theta[*c];
            }
        }
        for (f, up) in taxis.flux.y.iter_mut().zip(&taxis.upwind_y) {
            if let Some(c) = up {
                *f *= theta[*c];
            }
        }
    }

    fn solve_spd(
        &self,
        lap: &NeumannLaplacian,
        scale: f64,
        diag: Vec<f64>,
        rhs: &[f64],
    ) -> Result<Vec<f64>, StepError> {
        let x0: Vec<f64> = rhs.iter().zip(&diag).map(|(b, d)| b / d).collect();
        let op = ShiftedLaplacian { lap, scale, diag };
        let n = rhs.len();
        Ok(pcg(&op, rhs, &x0, CG_TOL, 10 * n + 100)?.x)
    }

    fn new_field(&self, name: &'static str, mut x: Vec<f64>) -> Result<ScalarField, StepError> {
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (cell, value) in x.iter_mut().enumerate() {
            if !value.is_finite() {
                return Err(StepError::Rejected(format!(
                    "non-finite {name} = {value} at cell {cell}"
                )));
            }
            if *value < 0.0 {
                if *value >= -NEG_CLAMP * scale {
                    *value = 0.0;
                } else {
                    return Err(StepError::Rejected(format!(
                        "negative {name} = {value:e} at cell {cell}"
                    )));
                }
            }
        }
        Ok(ScalarField::new(self.grid, x)?)
    }

    /// u-update with lagged coefficients, given the (already limited) taxis flux.
    fn update_u(
        &self,
        u: &ScalarField,
        v: &ScalarField,
        taxis: &TaxisFluxes,
        dt: f64,
    ) -> Result<ScalarField, StepError> {
        let div = divergence(&taxis.flux);
        let uv = u.values();
        let vv = v.values();
        let rhs: Vec<f64> = (0..uv.len())
            .map(|c| uv[c] + dt * (self.rates[c].a1 * uv[c]) + dt * div.values()[c])
            .collect();
        let diag: Vec<f64> = (0..uv.len())
            .map(|c| 1.0 + dt * self.rates[c].u_loss_coefficient(uv[c], vv[c]))
            .collect();
        let lap = neumann_laplacian_matrix(&self.grid, &face_diffusivity(u, v, &self.spec))?;
        let x = self.solve_spd(&lap, dt, diag, &rhs)?;
        self.new_field("u", x)
    }

    fn update_v(
        &self,
        u: &ScalarField,
        v: &ScalarField,
        dt: f64,
    ) -> Result<ScalarField, StepError> {
        let uv = u.values();
        let vv = v.values();
        let rhs: Vec<f64> = (0..vv.len())
            .map(|c| vv[c] + dt * (self.rates[c].a2 * vv[c]))
            .collect();
        let diag: Vec<f64> = (0..vv.len())
            .map(|c| 1.0 + dt * self.rates[c].v_loss_coefficient(uv[c], vv[c]))
            .collect();
        let x = self.solve_spd(&self.lap_v, dt, diag, &rhs)?;
        self.new_field("v", x)
    }

    /// One step of size at most `dt_req` (also capped by `dt_max` and the
    /// advective CFL bound). The returned state requests a grown step.
    pub fn step_with(&self, state: &RunState, dt_req: f64) -> Result<RunState, StepError> {
        self.check_grid(&state.u)?;
        self.check_grid(&state.v)?;
        state.u.check_nonnegative("u")?;
        state.v.check_nonnegative("v")?;
        let mut stats = state.newton_stats;
        let solved;
        let v_for_u = match self.spec.v_dynamics {
            VDynamics::Parabolic => &state.v,
            VDynamics::Elliptic => {
                let sol = self.solve_elliptic(&state.u, &state.v)?;
                stats.absorb(&sol);
                solved = sol.v;
                &solved
            }
        };
        let mut taxis = taxis_fluxes(&state.u, v_for_u, &self.spec, self.resource.as_ref());
        let dt = dt_req
            .min(self.ctrl.dt_max)
            .min(self.cfl_limit(&taxis, &state.u));
        if dt.is_nan() || dt < self.ctrl.dt_min {
            return Err(StepError::DtUnderflow {
                dt,
                dt_min: self.ctrl.dt_min,
            });
        }
        self.limit_taxis(&mut taxis, &state.u, dt);
        let u = self.update_u(&state.u, v_for_u, &taxis, dt)?;
        let v = match self.spec.v_dynamics {
            VDynamics::Parabolic => self.update_v(&state.u, &state.v, dt)?,
            VDynamics::Elliptic => v_for_u.clone(),
        };
        Ok(RunState {
            t: state.t + dt,
            u,
            v,
            dt: (dt * DT_GROWTH).min(self.ctrl.dt_max),
            step_count: state.step_count + 1,
            newton_stats: stats,
        })
    }

    pub fn step(&self, state: &RunState) -> Result<RunState, StepError> {
        self.step_with(state, state.dt)
    }

    fn elliptic_residual(&self, u: &[f64], v: &[f64], out: &mut [f64]) -> f64 {
        self.lap_v.apply_into(v, out);
        let mut norm = 0.0f64;
        for c in 0..v.len() {
            let r = &self.rates[c];
            out[c] += (r.a2 - r.b2 * u[c] - r.c2 * v[c]) * v[c];
            norm = norm.max(out[c].abs());
        }
        if norm.is_nan() {
            f64::INFINITY
        } else {
            norm
        }
    }

    /// Positive constant root `a2/c2` of the v-kinetics, cell by cell.
    fn positive_branch_guess(&self) -> Vec<f64> {
        self.rates
            .iter()
            .map(|r| if r.c2 > 0.0 { r.a2 / r.c2 } else { 1.0 })
            .collect()
    }

    /// Solves `D2 L v + (a2 - b2 u - c2 v) v = 0` for `v >= 0`.
    ///
    /// A zero guess is replaced by the constant positive root so the
    /// nontrivial branch is selected whenever it exists.
    pub fn solve_elliptic(
        &self,
        u: &ScalarField,
        guess: &ScalarField,
    ) -> Result<EllipticSolution, StepError> {
        self.check_grid(u)?;
        self.check_grid(guess)?;
        u.check_nonnegative("u")?;
        let uv = u.values();
        let mut v: Vec<f64> = guess.values().iter().map(|x| x.max(0.0)).collect();
        if v.iter().all(|x| *x == 0.0) {
            v = self.positive_branch_guess();
        }
        let mut work = NewtonWork::default();
        let mut converged = self.newton(uv, &mut v, &mut work)?;
        if !converged {
            converged = self.picard(uv, &mut v, &mut work)?;
            if !converged {
                converged = self.newton(uv, &mut v, &mut work)?;
            }
        }
        let mut r = vec![0.0; v.len()];
        let residual = self.elliptic_residual(uv, &v, &mut r);
        if !converged || residual.is_nan() || residual >= self.ctrl.newton_tol {
            return Err(StepError::NoConvergence {
                residual,
                newton: work.newton,
                picard: work.picard,
            });
        }
        Ok(EllipticSolution {
            v: ScalarField::new(self.grid, v)?,
            residual,
            newton_iterations: work.newton,
            picard_iterations: work.picard,
            lu_fallbacks: work.lu,
        })
    }

    /// Damped, projected Newton. Returns `false` on stagnation or when the
    /// iteration budget runs out.
    fn newton(
        &self,
        u: &[f64],
        v: &mut Vec<f64>,
        work: &mut NewtonWork,
    ) -> Result<bool, StepError> {
        let n = v.len();
        let mut r = vec![0.0; n];
        let mut rn = self.elliptic_residual(u, v, &mut r);
        let mut trial_r = vec![0.0; n];
        for _ in 0..self.ctrl.newton_max_iter {
            if rn < self.ctrl.newton_tol {
                return Ok(true);
            }
            work.newton += 1;
            // -J = -D2 L + diag(b2 u + 2 c2 v - a2); solve -J delta = R.
            let diag: Vec<f64> = (0..n)
                .map(|c| {
                    let k = &self.rates[c];
                    k.b2 * u[c] + 2.0 * k.c2 * v[c] - k.a2
                })
                .collect();
            let op = ShiftedLaplacian {
                lap: &self.lap_v,
                scale: 1.0,
                diag,
            };
            let delta = match pcg(&op, &r, &vec![0.0; n], CG_TOL, 10 * n + 100) {
                Ok(o) => o.x,
                Err(LinalgError::NonFinite) => return Err(LinalgError::NonFinite.into()),
                Err(_) => {
                    work.lu += 1;
                    BandedLu::factor(n, self.lap_v.bandwidth(), |i, j| op.entry(i, j))?.solve(&r)
                }
            };
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = v
                    .iter()
                    .zip(&delta)
                    .map(|(x, d)| (x + lambda * d).max(0.0))
                    .collect();
                let tn = self.elliptic_residual(u, &trial, &mut trial_r);
                if tn < (1.0 - 1e-4 * lambda) * rn {
                    *v = trial;
                    std::mem::swap(&mut r, &mut trial_r);
                    rn = tn;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Ok(false);
            }
        }
        Ok(rn < self.ctrl.newton_tol)
    }

    /// Monotone sweeps `(-D2 L + diag(b2 u + c2 v_k)) v_{k+1} = a2 v_k`.
    fn picard(&self, u: &[f64], v: &mut [f64], work: &mut NewtonWork) -> Result<bool, StepError> {
        let n = v.len();
        let mut r = vec![0.0; n];
        for _ in 0..self.ctrl.newton_max_iter {
            work.picard += 1;
            let diag: Vec<f64> = (0..n)
                .map(|c| self.rates[c].b2 * u[c] + self.rates[c].c2 * v[c])
                .collect();
            let rhs: Vec<f64> = (0..n).map(|c| self.rates[c].a2 * v[c]).collect();
            let op = ShiftedLaplacian {
                lap: &self.lap_v,
                scale: 1.0,
                diag,
            };
            let next = match pcg(&op, &rhs, v, CG_TOL, 10 * n + 100) {
                Ok(o) => o.x,
                Err(LinalgError::NonFinite) => return Err(LinalgError::NonFinite.into()),
                Err(_) => {
                    work.lu += 1;
                    BandedLu::factor(n, self.lap_v.bandwidth(), |i, j| op.entry(i, j))?.solve(&rhs)
                }
            };
            for (x, y) in v.iter_mut().zip(next) {
                *x = y.max(0.0);
            }
            if self.elliptic_residual(u, v, &mut r) < self.ctrl.newton_tol {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Integrates from `(u0, v0)` to `t_end` or an earlier verdict.
    ///
    /// Numerical trouble becomes a verdict; this never fails.
    pub fn integrate(
        &self,
        name: &str,
        u0: ScalarField,
        v0: ScalarField,
        monitors: &MonitorConfig,
    ) -> RunSummary {
        let started = Instant::now();
        let mut state = RunState::new(u0, v0, self.ctrl.dt_init);
        let mut out = RunSummary::new(name);
        if self.spec.v_dynamics == VDynamics::Elliptic {
            match self.solve_elliptic(&state.u, &ScalarField::zeros(self.grid)) {
                Ok(sol) => {
                    state.newton_stats.absorb(&sol);
                    state.v = sol.v;
                }
                Err(e) => {
                    out.verdict = RunVerdict::Failed;
                    out.message = Some(format!("initial elliptic solve: {e}"));
                    return self.finish(out, state, Vec::new(), monitors, started, (0.0, 0.0));
                }
            }
        }
        let initial = (state.u.integral(), state.v.linf());
        let mut history = vec![diagnostics::measure(
            &state.u, &state.v, &self.spec, monitors,
        )];
        let mut quiet_steps = 0;
        let kinetics_on = !matches!(self.spec.kinetics, Kinetics::Disabled);
        let t_end = self.ctrl.t_end;
        let mut verdict = None;

        while t_end - state.t > 1e-12 * t_end {
            let mut dt = state.dt.min(t_end - state.t);
            let next = loop {
                match self.step_with(&state, dt) {
                    Ok(next) => break Ok(next),
                    Err(e) if e.is_retryable() => {
                        out.rejected_steps += 1;
                        dt = dt.min(self.ctrl.dt_max) * 0.5;
                        if dt < self.ctrl.dt_min {
                            break Err((
                                RunVerdict::BlowUpSuspected,
                                format!("dt underflow after repeated rejection: {e}"),
                            ));
                        }
                    }
                    Err(e @ StepError::DtUnderflow { .. }) => {
                        break Err((RunVerdict::BlowUpSuspected, e.to_string()))
                    }
                    Err(e) => break Err((RunVerdict::Failed, e.to_string())),
                }
            };
            let next = match next {
                Ok(n) => n,
                Err((v, msg)) => {
                    verdict = Some(v);
                    out.message = Some(msg);
                    break;
                }
            };
            let dt_used = next.t - state.t;
            out.min_dt = out.min_dt.min(dt_used);
            let mut rec = diagnostics::measure(&next.u, &next.v, &self.spec, monitors);
            rec.t = next.t;
            rec.dt = dt_used;
            let rate = |a: &ScalarField, b: &ScalarField| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
                    / dt_used
            };
            let still =
                rate(&next.u, &state.u) < STEADY_RATE && rate(&next.v, &state.v) < STEADY_RATE;
            quiet_steps = if still { quiet_steps + 1 } else { 0 };
            let blown = rec.linf_u > self.ctrl.blowup_linf;
            let nonzero = rec.linf_u > 0.0 || rec.linf_v > 0.0;
            history.push(rec);
            state = next;
            if blown {
                verdict = Some(RunVerdict::BlowUpSuspected);
                out.message = Some(format!(
                    "||u||_inf exceeded blowup_linf = {:e} at t = {}",
                    self.ctrl.blowup_linf, state.t
                ));
                break;
            }
            if kinetics_on && nonzero && quiet_steps >= STEADY_STEPS {
                verdict = Some(RunVerdict::ConvergedToSteadyState);
                break;
            }
        }
        if let Some(v) = verdict {
            out.verdict = v;
        }
        self.finish(out, state, history, monitors, started, initial)
    }

    fn finish(
        &self,
        mut out: RunSummary,
        state: RunState,
        history: Vec<DiagnosticsRecord>,
        monitors: &MonitorConfig,
        started: Instant,
        initial: (f64, f64),
    ) -> RunSummary {
        let report = diagnostics::evaluate(
            &history,
            &self.spec,
            monitors,
            self.grid.measure(),
            initial.0,
            initial.1,
        );
        if out.verdict == RunVerdict::Bounded
            && report.boundedness == diagnostics::BoundednessVerdict::Growing
        {
            out.verdict = RunVerdict::Growing;
        }
        out.t_final = state.t;
        out.steps = state.step_count;
        out.newton_stats = state.newton_stats;
        out.max_linf_u = history.iter().map(|r| r.linf_u).fold(0.0, f64::max);
        if !out.min_dt.is_finite() {
            out.min_dt = 0.0;
        }
        out.diagnostics = Some(report);
        out.history = history;
        out.final_u = Some(state.u);
        out.final_v = Some(state.v);
        out.runtime_seconds = started.elapsed().as_secs_f64();
        out
    }
}

#[derive(Debug, Default)]
struct NewtonWork {
    newton: usize,
    picard: usize,
    lu: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RunVerdict {
    Bounded,
    ConvergedToSteadyState,
    Growing,
    BlowUpSuspected,
    Failed,
}

impl RunVerdict {
    pub const ALL: [RunVerdict; 5] = [
        RunVerdict::Bounded,
        RunVerdict::ConvergedToSteadyState,
        RunVerdict::Growing,
        RunVerdict::BlowUpSuspected,
        RunVerdict::Failed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RunVerdict::Bounded => "Bounded",
            RunVerdict::ConvergedToSteadyState => "ConvergedToSteadyState",
            RunVerdict::Growing => "Growing",
            RunVerdict::BlowUpSuspected => "BlowUpSuspected",
            RunVerdict::Failed => "Failed",
        }
    }

    pub fn is_bounded(self) -> bool {
        matches!(
            self,
            RunVerdict::Bounded | RunVerdict::ConvergedToSteadyState
        )
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, RunVerdict::Growing | RunVerdict::BlowUpSuspected)
    }
}

impl fmt::Display for RunVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub verdict: RunVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub t_final: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub min_dt: f64,
    pub max_linf_u: f64,
    pub newton_stats: NewtonStats,
    pub diagnostics: Option<DiagnosticsReport>,
    pub runtime_seconds: f64,
    #[serde(skip)]
    pub history: Vec<DiagnosticsRecord>,
    #[serde(skip)]
    pub final_u: Option<ScalarField>,
    #[serde(skip)]
    pub final_v: Option<ScalarField>,
}

impl RunSummary {
    fn new(name: &str) -> Self {
        RunSummary {
            name: name.to_string(),
            verdict: RunVerdict::Bounded,
            message: None,
            t_final: 0.0,
            steps: 0,
            rejected_steps: 0,
            min_dt: f64::INFINITY,
            max_linf_u: 0.0,
            newton_stats: NewtonStats::default(),
            diagnostics: None,
            runtime_seconds: 0.0,
            history: Vec::new(),
            final_u: None,
            final_v: None,
        }
    }

    /// Summary of a run that could not start.
    pub fn failed(name: &str, message: String) -> Self {
        let mut s = Self::new(name);
        s.verdict = RunVerdict::Failed;
        s.message = Some(message);
        s.min_dt = 0.0;
        s
    }
}

/// One step of the fully parabolic system.
pub fn step_parabolic(
    state: &RunState,
    spec: &ModelSpec,
    ctrl: &StepControl,
) -> Result<RunState, StepError> {
    if spec.v_dynamics != VDynamics::Parabolic {
        return Err(ModelError::NotApplicable("step_parabolic needs parabolic v").into());
    }
    Stepper::new(spec, ctrl, state.u.grid())?.step(state)
}

/// Elliptic v-solve followed by one u-step with the fresh v.
pub fn step_parabolic_elliptic(
    state: &RunState,
    spec: &ModelSpec,
    ctrl: &StepControl,
) -> Result<RunState, StepError> {
    if spec.v_dynamics != VDynamics::Elliptic {
        return Err(ModelError::NotApplicable("step_parabolic_elliptic needs elliptic v").into());
    }
    Stepper::new(spec, ctrl, state.u.grid())?.step(state)
}

pub fn solve_elliptic_v(
    u: &ScalarField,
    spec: &ModelSpec,
    guess: &ScalarField,
    ctrl: &StepControl,
) -> Result<EllipticSolution, StepError> {
    Stepper::new(spec, ctrl, u.grid())?.solve_elliptic(u, guess)
}

/// Runs a scenario to completion. Only configuration problems are errors.
pub fn run(scenario: &Scenario) -> Result<RunSummary, ScenarioError> {
    scenario.validate()?;
    let stepper = Stepper::new(&scenario.spec, &scenario.ctrl, &scenario.grid)?;
    let (u0, v0) = scenario.initial.materialize(&scenario.grid)?;
    Ok(stepper.integrate(&scenario.name, u0, v0, &scenario.monitors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionLaw, SensitivityLaw, TaxisSign};

    fn grid1(n: usize, l: f64) -> Grid {
        Grid::new_1d(n, l).unwrap()
    }

    /// Scalar Patankar step of the kinetics alone.
    fn ode_step(spec: &ModelSpec, u: f64, v: f64, dt: f64) -> (f64, f64) {
        let un =
            u * (1.0 + dt * spec.a1) / (1.0 + dt * (spec.b1 * u.powf(spec.alpha) + spec.c1 * v));
        let vn = v * (1.0 + dt * spec.a2) / (1.0 + dt * (spec.b2 * u + spec.c2 * v));
        (un, vn)
    }

    #[test]
    fn control_validation_names_keys() {
        assert!(StepControl::default().validate().is_ok());
        let bad = StepControl {
            dt_min: 1.0,
            ..StepControl::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(
            msg.contains("control.dt_min") && msg.contains("control.dt_init"),
            "{msg}"
        );
        let bad = StepControl {
            cfl_adv: 1.5,
            ..StepControl::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = grid1(16, 4.0);
        let spec = ModelSpec {
            chi: 2.0,
            ..ModelSpec::default()
        };
        let s = RunState::new(ScalarField::zeros(g), ScalarField::zeros(g), 0.05);
        let next = step_parabolic(&s, &spec, &StepControl::default()).unwrap();
        assert!(next
            .u
            .values()
            .iter()
            .chain(next.v.values())
            .all(|x| *x == 0.0));
        assert_eq!(next.t, 0.05);
    }

    #[test]
    fn constant_state_follows_scalar_ode() {
        let g = Grid::new_2d(5, 4, 2.0, 1.0).unwrap();
        let spec = ModelSpec {
            chi: 7.0,
            alpha: 1.5,
            diffusion: DiffusionLaw::Power {
                scale: 1.0,
                exponent: 2.0,
            },
            sensitivity: SensitivityLaw::Power {
                scale: 1.0,
                exponent: 0.5,
            },
            ..ModelSpec::default()
        };
        let ctrl = StepControl {
            dt_init: 0.02,
            ..StepControl::default()
        };
        let (mut u, mut v) = (0.4, 1.7);
        let mut s = RunState::new(
            ScalarField::constant(g, u),
            ScalarField::constant(g, v),
            0.02,
        );
        for _ in 0..20 {
            let dt = s.dt;
            s = step_parabolic(&s, &spec, &ctrl).unwrap();
            (u, v) = ode_step(&spec, u, v, dt);
            let u0 = s.u.values()[0];
            assert!(s.u.values().iter().all(|x| *x == u0));
            assert!(s.v.values().iter().all(|x| *x == s.v.values()[0]));
            assert!((u0 - u).abs() <= 1e-14 * u);
            assert!((s.v.values()[0] - v).abs() <= 1e-14 * v);
        }
    }

    #[test]
    fn pure_diffusion_conserves_mass() {
        let g = grid1(32, 3.0);
        let spec = ModelSpec {
            kinetics: Kinetics::Disabled,
            diffusion: DiffusionLaw::Power {
                scale: 0.5,
                exponent: 1.0,
            },
            ..ModelSpec::default()
        };
        let u = ScalarField::from_fn(g, |x, _| 1.0 + (3.0 * x).sin().powi(2) * x).unwrap();
        let mut s = RunState::new(u, ScalarField::constant(g, 1.0), 0.01);
        let m0 = s.u.integral();
        for _ in 0..50 {
            s = step_parabolic(&s, &spec, &StepControl::default()).unwrap();
            assert!(((s.u.integral() - m0) / m0).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_taxis_keeps_positivity() {
        let g = grid1(64, 4.0);
        let spec = ModelSpec {
            chi: 20.0,
            sensitivity: SensitivityLaw::Power {
                scale: 1.0,
                exponent: 0.5,
            },
            ..ModelSpec::default()
        };
        let ctrl = StepControl::default();
        let stepper = Stepper::new(&spec, &ctrl, &g).unwrap();
        let u = ScalarField::from_fn(g, |x, _| (-(x - 2.0).powi(2) * 8.0).exp()).unwrap();
        let v = ScalarField::from_fn(g, |x, _| 1.0 + (x * 2.0).cos()).unwrap();
        let mut s = RunState::new(u, v, 0.05);
        for _ in 0..40 {
            s = stepper.step(&s).unwrap();
            assert!(s.u.min() >= 0.0 && s.v.min() >= 0.0);
        }
    }

    #[test]
    fn elliptic_trivial_roots() {
        let g = grid1(8, 1.0);
        let spec = ModelSpec {
            v_dynamics: VDynamics::Elliptic,
            ..ModelSpec::default()
        };
        let ctrl = StepControl::default();
        let a2c2 = spec.a2 / spec.c2;
        let sol = solve_elliptic_v(
            &ScalarField::zeros(g),
            &spec,
            &ScalarField::constant(g, a2c2),
            &ctrl,
        )
        .unwrap();
        assert!(sol.v.values().iter().all(|x| *x == a2c2));
        let sol = solve_elliptic_v(
            &ScalarField::constant(g, spec.a2 / spec.b2),
            &spec,
            &ScalarField::constant(g, a2c2),
            &ctrl,
        )
        .unwrap();
        // u = a2/b2 leaves -c2 v^2: a double root, so the residual test stops
        // at v of order sqrt(tol / c2).
        assert!(sol.residual < 1e-10);
        assert!(sol.v.linf() < 1e-5, "{:?}", sol.v.values());
    }

    /// Nonlinear Gauss-Seidel on the same discrete system: each cell takes
    /// the positive root of its own quadratic with the neighbours frozen.
    fn gauss_seidel_oracle(u: &[f64], spec: &ModelSpec, g: &Grid, tol: f64) -> Vec<f64> {
        let lap = neumann_laplacian_matrix(g, &FaceField::interior_constant(*g, spec.d2)).unwrap();
        let n = u.len();
        let mut v = vec![spec.a2 / spec.c2; n];
        for _ in 0..1_000_000 {
            let mut change = 0.0f64;
            for c in 0..n {
                let w = -lap.entry(c, c);
                let s: f64 = (0..n)
                    .filter(|&k| k != c)
                    .map(|k| lap.entry(c, k) * v[k])
                    .sum();
                let b = spec.a2 - spec.b2 * u[c] - w;
                let root = (b + (b * b + 4.0 * spec.c2 * s).sqrt()) / (2.0 * spec.c2);
                change = change.max((root - v[c]).abs());
                v[c] = root;
            }
            if change < tol {
                break;
            }
        }
        v
    }

    #[test]
    fn elliptic_spike_matches_fixed_point_oracle() {
        let g = grid1(8, 1.0);
        let spec = ModelSpec {
            v_dynamics: VDynamics::Elliptic,
            ..ModelSpec::default()
        };
        let mut u = vec![0.0; 8];
        u[3] = 6.0;
        let uf = ScalarField::new(g, u.clone()).unwrap();
        let sol =
            solve_elliptic_v(&uf, &spec, &ScalarField::zeros(g), &StepControl::default()).unwrap();
        assert!(sol.residual < 1e-10);
        let oracle = gauss_seidel_oracle(&u, &spec, &g, 1e-14);
        for (a, b) in sol.v.values().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!(sol.v.max() <= spec.a2 / spec.c2 + 1e-10);
    }

    #[test]
    fn elliptic_step_zero_u() {
        let g = grid1(16, 2.0);
        let spec = ModelSpec {
            v_dynamics: VDynamics::Elliptic,
            chi: 3.0,
            ..ModelSpec::default()
        };
        let s = RunState::new(ScalarField::zeros(g), ScalarField::zeros(g), 0.01);
        let next = step_parabolic_elliptic(&s, &spec, &StepControl::default()).unwrap();
        assert!(next.u.values().iter().all(|x| *x == 0.0));
        let a2c2 = spec.a2 / spec.c2;
        assert!(next.v.values().iter().all(|x| (x - a2c2).abs() < 1e-14));
    }

    #[test]
    fn elliptic_constant_u_ignores_chi() {
        let g = grid1(16, 2.0);
        let base = ModelSpec {
            v_dynamics: VDynamics::Elliptic,
            ..ModelSpec::default()
        };
        let taxis = ModelSpec {
            chi: 5.0,
            taxis_sign: TaxisSign::Attraction,
            ..base.clone()
        };
        let s = RunState::new(ScalarField::constant(g, 0.7), ScalarField::zeros(g), 0.01);
        let a = step_parabolic_elliptic(&s, &base, &StepControl::default()).unwrap();
        let b = step_parabolic_elliptic(&s, &taxis, &StepControl::default()).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.v, b.v);
    }

    #[test]
    fn picard_path_agrees_with_newton() {
        let g = grid1(12, 1.0);
        let spec = ModelSpec {
            v_dynamics: VDynamics::Elliptic,
            ..ModelSpec::default()
        };
        let ctrl = StepControl::default();
        let stepper = Stepper::new(&spec, &ctrl, &g).unwrap();
        let u: Vec<f64> = (0..12)
            .map(|k| (k as f64 * 0.9).sin().abs() * 1.5)
            .collect();
        let mut v = vec![1.0; 12];
        let mut work = NewtonWork::default();
        // Picard alone converges linearly; give it a generous budget.
        let long = Stepper {
            ctrl: StepControl {
                newton_max_iter: 5000,
                ..ctrl.clone()
            },
            ..stepper.clone()
        };
        assert!(long.picard(&u, &mut v, &mut work).unwrap());
        let sol = stepper
            .solve_elliptic(&ScalarField::new(g, u).unwrap(), &ScalarField::zeros(g))
            .unwrap();
        for (a, b) in sol.v.values().iter().zip(&v) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

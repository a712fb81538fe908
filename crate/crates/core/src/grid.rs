//! Cell-centered Cartesian grids, scalar fields and the conservative
//! finite-volume operators under zero-flux boundaries.
//!
//! Cells are stored row-major with x fastest: cell `(i, j)` has flat index
//! `j * nx + i`. A 1D grid is a single row (`ny = 1`, unit transverse
//! length), so cell volumes and integrals need no special casing.
//!
//! Face arrays include the boundary faces, which always carry zero flux:
//! x-face `(i, j)` with `i in 0..=nx` sits between cells `(i-1, j)` and
//! `(i, j)`; y-face `(i, j)` with `j in 0..=ny` between `(i, j-1)` and `(i, j)`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinearOperator;
use crate::model::ModelSpec;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field has {got} values, grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} at cell {cell}")]
    NonFinite { cell: usize, value: f64 },
    #[error("negative {name} = {value} at cell {cell}")]
    Negative {
        name: &'static str,
        cell: usize,
        value: f64,
    },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("face coefficient {value} at interior face {face} is not positive")]
    NonPositiveCoefficient { face: usize, value: f64 },
    #[error("field file {path}: {reason}")]
    Csv { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dim {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridConfig", into = "GridConfig")]
pub struct Grid {
    dim: Dim,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

/// Serialized form of a [`Grid`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub nx: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly", default, skip_serializing_if = "Option::is_none")]
    pub ly: Option<f64>,
}

impl TryFrom<GridConfig> for Grid {
    type Error = GridError;

    fn try_from(c: GridConfig) -> Result<Self, GridError> {
        match c.dim {
            1 => {
                if c.ny.is_some_and(|ny| ny != 1) || c.ly.is_some() {
                    return Err(GridError::InvalidGrid(
                        "ny / Ly must be omitted for a 1D grid".into(),
                    ));
                }
                Grid::new_1d(c.nx, c.lx)
            }
            2 => {
                let ny =
                    c.ny.ok_or_else(|| GridError::InvalidGrid("2D grid needs ny".into()))?;
                let ly =
                    c.ly.ok_or_else(|| GridError::InvalidGrid("2D grid needs Ly".into()))?;
                Grid::new_2d(c.nx, ny, c.lx, ly)
            }
            d => Err(GridError::InvalidGrid(format!(
                "dimension must be 1 or 2, got {d}"
            ))),
        }
    }
}

impl From<Grid> for GridConfig {
    fn from(g: Grid) -> Self {
        match g.dim {
            Dim::One => GridConfig {
                dim: 1,
                nx: g.nx,
                ny: None,
                lx: g.lx,
                ly: None,
            },
            Dim::Two => GridConfig {
                dim: 2,
                nx: g.nx,
                ny: Some(g.ny),
                lx: g.lx,
                ly: Some(g.ly),
            },
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dim {
            Dim::One => write!(f, "1D n={} L={}", self.nx, self.lx),
            Dim::Two => write!(f, "2D {}x{} L={}x{}", self.nx, self.ny, self.lx, self.ly),
        }
    }
}

fn check_axis(name: &str, n: usize, len: f64) -> Result<(), GridError> {
    if n < 3 {
        return Err(GridError::InvalidGrid(format!(
            "{name} must have at least 3 cells, got {n}"
        )));
    }
    if !(len.is_finite() && len > 0.0) {
        return Err(GridError::InvalidGrid(format!(
            "{name} length must be positive, got {len}"
        )));
    }
    Ok(())
}

impl Grid {
    pub fn new_1d(nx: usize, lx: f64) -> Result<Self, GridError> {
        check_axis("x", nx, lx)?;
        Ok(Grid {
            dim: Dim::One,
            nx,
            ny: 1,
            lx,
            ly: 1.0,
        })
    }

    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        check_axis("x", nx, lx)?;
        check_axis("y", ny, ly)?;
        Ok(Grid {
            dim: Dim::Two,
            nx,
            ny,
            lx,
            ly,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Space dimension N as an integer.
    pub fn n_dim(&self) -> usize {
        match self.dim {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Smallest spacing over the active axes.
    pub fn h_min(&self) -> f64 {
        match self.dim {
            Dim::One => self.hx(),
            Dim::Two => self.hx().min(self.hy()),
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// `|Omega|`
    pub fn measure(&self) -> f64 {
        match self.dim {
            Dim::One => self.lx,
            Dim::Two => self.lx * self.ly,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let i = cell % self.nx;
        let j = cell / self.nx;
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    pub fn x_face_count(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn y_face_count(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// Interior faces as `(face_index, left_cell, right_cell)` per axis.
    fn interior_x_faces(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.ny).flat_map(move |j| {
            (1..self.nx).map(move |i| (j * (self.nx + 1) + i, self.idx(i - 1, j), self.idx(i, j)))
        })
    }

    fn interior_y_faces(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (1..self.ny).flat_map(move |j| {
            (0..self.nx).map(move |i| (j * self.nx + i, self.idx(i, j - 1), self.idx(i, j)))
        })
    }
}

/// One value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { cell, value });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.len())
            .map(|c| {
                let (x, y) = grid.cell_center(c);
                f(x, y)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cell-volume-weighted sum.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.measure()
    }

    pub(crate) fn check_nonnegative(&self, name: &'static str) -> Result<(), GridError> {
        match self.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            Some((cell, &value)) => Err(GridError::Negative { name, cell, value }),
            None => Ok(()),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), GridError> {
        let mut out = fs::File::create(path)?;
        out.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Flat CSV: the header line `nx,ny,Lx,Ly` (numeric) followed by `ny`
    /// rows of `nx` values. 1D grids are written with `ny = 1, Ly = 1`.
    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let mut s = format!("{},{},{},{}\n", g.nx, g.ny, g.lx, g.ly);
        for row in self.values.chunks(g.nx) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn read_csv(path: &Path) -> Result<Self, GridError> {
        let text = fs::read_to_string(path)?;
        Self::from_csv(&text).map_err(|reason| GridError::Csv {
            path: path.display().to_string(),
            reason,
        })
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut header = lines.next().ok_or("empty file")?;
        if header.replace(' ', "").eq_ignore_ascii_case("nx,ny,lx,ly") {
            header = lines.next().ok_or("missing header values")?;
        }
        let parts: Vec<&str> = header.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("header must be nx,ny,Lx,Ly, got `{header}`"));
        }
        let nx: usize = parts[0].parse().map_err(|e| format!("nx: {e}"))?;
        let ny: usize = parts[1].parse().map_err(|e| format!("ny: {e}"))?;
        let lx: f64 = parts[2].parse().map_err(|e| format!("Lx: {e}"))?;
        let ly: f64 = parts[3].parse().map_err(|e| format!("Ly: {e}"))?;
        let grid = if ny == 1 {
            Grid::new_1d(nx, lx)
        } else {
            Grid::new_2d(nx, ny, lx, ly)
        }
        .map_err(|e| e.to_string())?;
        let mut values = Vec::with_capacity(grid.len());
        for (row, line) in lines.enumerate() {
            for item in line.split(',') {
                let v: f64 = item
                    .trim()
                    .parse()
                    .map_err(|e| format!("row {row}: `{}`: {e}", item.trim()))?;
                values.push(v);
            }
        }
        Self::new(grid, values).map_err(|e| e.to_string())
    }
}

/// One value per face, boundary faces included.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: Grid) -> Self {
        FaceField {
            grid,
            x: vec![0.0; grid.x_face_count()],
            y: vec![0.0; grid.y_face_count()],
        }
    }

    /// Same value on every interior face, zero on the boundary.
    pub fn interior_constant(grid: Grid, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        for (face, _, _) in grid.interior_x_faces() {
            f.x[face] = value;
        }
        for (face, _, _) in grid.interior_y_faces() {
            f.y[face] = value;
        }
        f
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_boundary_x(&self, face: usize) -> bool {
        let i = face % (self.grid.nx + 1);
        i == 0 || i == self.grid.nx
    }

    pub fn is_boundary_y(&self, face: usize) -> bool {
        let j = face / self.grid.nx;
        j == 0 || j == self.grid.ny
    }
}

/// Normal derivatives `(f_R - f_L) / h` on every face; zero on the boundary.
pub fn face_gradient(field: &ScalarField) -> FaceField {
    let g = *field.grid();
    let f = field.values();
    let mut out = FaceField::zeros(g);
    let (hx, hy) = (g.hx(), g.hy());
    for (face, l, r) in g.interior_x_faces() {
        out.x[face] = (f[r] - f[l]) / hx;
    }
    for (face, l, r) in g.interior_y_faces() {
        out.y[face] = (f[r] - f[l]) / hy;
    }
    out
}

/// Discrete divergence of a face flux: `(F_right - F_left)/hx + (G_top - G_bottom)/hy`.
pub fn divergence(flux: &FaceField) -> ScalarField {
    let g = *flux.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = vec![0.0; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let left = j * (g.nx + 1) + i;
            let mut d = (flux.x[left + 1] - flux.x[left]) / hx;
            if g.ny > 1 {
                let bottom = j * g.nx + i;
                d += (flux.y[bottom + g.nx] - flux.y[bottom]) / hy;
            }
            out[g.idx(i, j)] = d;
        }
    }
    ScalarField {
        grid: g,
        values: out,
    }
}

/// Face diffusivities: arithmetic mean of the cellwise `D1(u, v)`.
pub fn face_diffusivity(u: &ScalarField, v: &ScalarField, spec: &ModelSpec) -> FaceField {
    let g = *u.grid();
    let d: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(&uc, &vc)| spec.diffusion.value(uc, vc))
        .collect();
    let mut out = FaceField::zeros(g);
    for (face, l, r) in g.interior_x_faces() {
        out.x[face] = 0.5 * (d[l] + d[r]);
    }
    for (face, l, r) in g.interior_y_faces() {
        out.y[face] = 0.5 * (d[l] + d[r]);
    }
    out
}

/// Upwinded taxis fluxes with the upwind cell of every face.
#[derive(Debug, Clone)]
pub struct TaxisFluxes {
    pub flux: FaceField,
    /// Upwind cell per x-face; `None` on the boundary or where the drift vanishes.
    pub upwind_x: Vec<Option<usize>>,
    pub upwind_y: Vec<Option<usize>>,
}

impl TaxisFluxes {
    /// Explicit outflow rate `sum |F| / (h u_c)` of every cell.
    pub fn outflow_rates(&self, u: &ScalarField) -> Vec<f64> {
        let g = *u.grid();
        let uv = u.values();
        let mut rate = vec![0.0; g.len()];
        let mut add = |cell: Option<usize>, flux: f64, h: f64| {
            if let Some(c) = cell {
                if uv[c] > 0.0 {
                    rate[c] += flux.abs() / (h * uv[c]);
                }
            }
        };
        for (face, &f) in self.flux.x.iter().enumerate() {
            add(self.upwind_x[face], f, g.hx());
        }
        for (face, &f) in self.flux.y.iter().enumerate() {
            add(self.upwind_y[face], f, g.hy());
        }
        rate
    }
}

/// Face fluxes `s chi phi(u_upwind) d(v - m)/dn`, upwinded against the drift
/// velocity `-s chi d(v - m)/dn`; the `m` term is present only when a
/// resource field is given.
pub fn taxis_fluxes(
    u: &ScalarField,
    v: &ScalarField,
    spec: &ModelSpec,
    m: Option<&ScalarField>,
) -> TaxisFluxes {
    let g = *u.grid();
    let mut flux = FaceField::zeros(g);
    let mut upwind_x = vec![None; g.x_face_count()];
    let mut upwind_y = vec![None; g.y_face_count()];
    if spec.chi == 0.0 {
        return TaxisFluxes {
            flux,
            upwind_x,
            upwind_y,
        };
    }
    let sigma_chi = spec.taxis_sign.sigma() * spec.chi;
    let uv = u.values();
    let vv = v.values();
    let mv = m.map(|m| m.values());
    let face_flux = |l: usize, r: usize, h: f64| -> (f64, Option<usize>) {
        let mut dv = vv[r] - vv[l];
        if let Some(mv) = mv {
            dv -= mv[r] - mv[l];
        }
        let grad = dv / h;
        let drift = -sigma_chi * grad;
        if drift == 0.0 {
            return (0.0, None);
        }
        let up = if drift > 0.0 { l } else { r };
        (sigma_chi * spec.sensitivity.value(uv[up]) * grad, Some(up))
    };
    for (face, l, r) in g.interior_x_faces() {
        let (f, up) = face_flux(l, r, g.hx());
        flux.x[face] = f;
        upwind_x[face] = up;
    }
    for (face, l, r) in g.interior_y_faces() {
        let (f, up) = face_flux(l, r, g.hy());
        flux.y[face] = f;
        upwind_y[face] = up;
    }
    TaxisFluxes {
        flux,
        upwind_x,
        upwind_y,
    }
}

fn same_grid(a: &ScalarField, b: &ScalarField) -> Result<(), GridError> {
    if a.grid() == b.grid() {
        Ok(())
    } else {
        Err(GridError::GridMismatch)
    }
}

/// `div(D1 grad u + s chi phi(u) grad v - s chi phi(u) grad m)` cell by cell.
pub fn div_total_flux(
    u: &ScalarField,
    v: &ScalarField,
    spec: &ModelSpec,
    m: Option<&ScalarField>,
) -> Result<ScalarField, GridError> {
    same_grid(u, v)?;
    if let Some(m) = m {
        same_grid(u, m)?;
    }
    u.check_nonnegative("u")?;
    v.check_nonnegative("v")?;
    let g = *u.grid();
    let grad_u = face_gradient(u);
    let mut total = face_diffusivity(u, v, spec);
    for (d, gu) in total.x.iter_mut().zip(&grad_u.x) {
        *d *= gu;
    }
    for (d, gu) in total.y.iter_mut().zip(&grad_u.y) {
        *d *= gu;
    }
    let taxis = taxis_fluxes(u, v, spec, m);
    for (t, f) in total.x.iter_mut().zip(&taxis.flux.x) {
        *t += f;
    }
    for (t, f) in total.y.iter_mut().zip(&taxis.flux.y) {
        *t += f;
    }
    let div = divergence(&total);
    if let Some((cell, &value)) = div.values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(GridError::NonFinite { cell, value });
    }
    debug_assert_eq!(div.grid, g);
    Ok(div)
}

/// `div(k grad .)` with zero-flux boundaries, stored as per-face weights
/// `k / h^2`; applied in flux form so constants are annihilated exactly.
#[derive(Debug, Clone)]
pub struct NeumannLaplacian {
    grid: Grid,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

/// Assembles the zero-flux operator `div(coeff grad .)`.
///
/// Every interior face coefficient must be positive; boundary entries of
/// `coeff` are ignored.
pub fn neumann_laplacian_matrix(
    grid: &Grid,
    coeff: &FaceField,
) -> Result<NeumannLaplacian, GridError> {
    let g = *grid;
    let mut wx = vec![0.0; g.x_face_count()];
    let mut wy = vec![0.0; g.y_face_count()];
    let (hx2, hy2) = (g.hx() * g.hx(), g.hy() * g.hy());
    for (face, _, _) in g.interior_x_faces() {
        let k = coeff.x[face];
        if !(k > 0.0 && k.is_finite()) {
            return Err(GridError::NonPositiveCoefficient { face, value: k });
        }
        wx[face] = k / hx2;
    }
    for (face, _, _) in g.interior_y_faces() {
        let k = coeff.y[face];
        if !(k > 0.0 && k.is_finite()) {
            return Err(GridError::NonPositiveCoefficient {
                face: g.x_face_count() + face,
                value: k,
            });
        }
        wy[face] = k / hy2;
    }
    Ok(NeumannLaplacian { grid: g, wx, wy })
}

impl NeumannLaplacian {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Largest distance between coupled cell indices.
    pub fn bandwidth(&self) -> usize {
        if self.grid.ny > 1 {
            self.grid.nx
        } else {
            1
        }
    }

    /// `y = L x`
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.grid;
        let nx = g.nx;
        for j in 0..g.ny {
            for i in 0..nx {
                let c = j * nx + i;
                let xc = x[c];
                let fx = j * (nx + 1) + i;
                let mut s = 0.0;
                if i > 0 {
                    s += self.wx[fx] * (x[c - 1] - xc);
                }
                if i + 1 < nx {
                    s += self.wx[fx + 1] * (x[c + 1] - xc);
                }
                if j > 0 {
                    s += self.wy[c] * (x[c - nx] - xc);
                }
                if j + 1 < g.ny {
                    s += self.wy[c + nx] * (x[c + nx] - xc);
                }
                y[c] = s;
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        let nx = g.nx;
        let mut d = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..nx {
                let c = j * nx + i;
                let fx = j * (nx + 1) + i;
                d[c] = -(self.wx[fx] + self.wx[fx + 1] + self.wy[c] + self.wy[c + nx]);
            }
        }
        d
    }

    /// Matrix entry `L[r][c]`.
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let g = &self.grid;
        let nx = g.nx;
        if r == c {
            let i = r % nx;
            let j = r / nx;
            let fx = j * (nx + 1) + i;
            return -(self.wx[fx] + self.wx[fx + 1] + self.wy[r] + self.wy[r + nx]);
        }
        let (lo, hi) = (r.min(c), r.max(c));
        if hi - lo == 1 && lo / nx == hi / nx {
            let j = hi / nx;
            let i = hi % nx;
            return self.wx[j * (nx + 1) + i];
        }
        if g.ny > 1 && hi - lo == nx {
            return self.wy[hi];
        }
        0.0
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.grid.len();
        (0..n)
            .map(|r| (0..n).map(|c| self.entry(r, c)).collect())
            .collect()
    }
}

/// `A = diag(d) - scale * L`, the shape of every implicit system here.
pub struct ShiftedLaplacian<'a> {
    pub lap: &'a NeumannLaplacian,
    pub scale: f64,
    pub diag: Vec<f64>,
}

impl ShiftedLaplacian<'_> {
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        let l = self.lap.entry(r, c);
        if r == c {
            self.diag[r] - self.scale * l
        } else {
            -self.scale * l
        }
    }
}

impl LinearOperator for ShiftedLaplacian<'_> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.lap.apply_into(x, y);
        for ((y, d), x) in y.iter_mut().zip(&self.diag).zip(x) {
            *y = d * x - self.scale * *y;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.lap
            .diagonal()
            .iter()
            .zip(&self.diag)
            .map(|(l, d)| d - self.scale * l)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionLaw, SensitivityLaw, TaxisSign};

    fn grid1(n: usize, l: f64) -> Grid {
        Grid::new_1d(n, l).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new_1d(2, 1.0).is_err());
        assert!(Grid::new_1d(3, 0.0).is_err());
        assert!(Grid::new_2d(3, 2, 1.0, 1.0).is_err());
        let g = Grid::new_2d(4, 5, 2.0, 3.0).unwrap();
        assert_eq!(g.measure(), 6.0);
        assert_eq!(g.len(), 20);
        assert_eq!(grid1(8, 2.0).measure(), 2.0);
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = grid1(3, 3.0);
        assert!(matches!(
            ScalarField::new(g, vec![0.0, f64::NAN, 1.0]),
            Err(GridError::NonFinite { cell: 1, .. })
        ));
        assert!(matches!(
            ScalarField::new(g, vec![0.0, 1.0]),
            Err(GridError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn gradient_examples() {
        let g = grid1(3, 3.0);
        let c = ScalarField::constant(g, 2.5);
        let gr = face_gradient(&c);
        assert!(gr.x.iter().chain(&gr.y).all(|v| *v == 0.0));

        let f = ScalarField::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        let gr = face_gradient(&f);
        assert_eq!(gr.x, vec![0.0, 1.0, 1.0, 0.0]);

        let g2 = Grid::new_2d(4, 3, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g2, |x, _| x * x).unwrap();
        let gr = face_gradient(&f);
        assert!(gr.y.iter().all(|v| *v == 0.0));
        assert!(gr.x.iter().any(|v| *v != 0.0));
    }

    fn unit_spec() -> ModelSpec {
        ModelSpec {
            diffusion: DiffusionLaw::constant(1.0),
            chi: 0.0,
            ..ModelSpec::default()
        }
    }

    #[test]
    fn diffusion_stencil_example() {
        let g = grid1(3, 3.0);
        let u = ScalarField::new(g, vec![1.0, 2.0, 1.0]).unwrap();
        let v = ScalarField::zeros(g);
        let d = div_total_flux(&u, &v, &unit_spec(), None).unwrap();
        assert_eq!(d.values(), &[1.0, -2.0, 1.0]);
        assert_eq!(d.integral(), 0.0);
    }

    #[test]
    fn constant_fields_have_zero_divergence() {
        let g = Grid::new_2d(5, 4, 1.0, 2.0).unwrap();
        let spec = ModelSpec {
            chi: 3.0,
            diffusion: DiffusionLaw::Power {
                scale: 1.0,
                exponent: 1.5,
            },
            ..ModelSpec::default()
        };
        let d = div_total_flux(
            &ScalarField::constant(g, 0.7),
            &ScalarField::constant(g, 1.3),
            &spec,
            None,
        )
        .unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
    }

    /// Hand enumeration: both interior faces have dv/dn = 1, drift -1 < 0,
    /// so the right cell is upwind and each face carries flux phi(1) * 1 = 1.
    #[test]
    fn taxis_upwind_example() {
        let g = grid1(3, 3.0);
        let spec = ModelSpec {
            chi: 1.0,
            taxis_sign: TaxisSign::Repulsion,
            sensitivity: SensitivityLaw::Linear,
            ..ModelSpec::default()
        };
        let u = ScalarField::constant(g, 1.0);
        let v = ScalarField::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        let t = taxis_fluxes(&u, &v, &spec, None);
        assert_eq!(t.upwind_x, vec![None, Some(1), Some(2), None]);
        assert_eq!(t.flux.x, vec![0.0, 1.0, 1.0, 0.0]);
        let brute: Vec<f64> = (0..3).map(|c| t.flux.x[c + 1] - t.flux.x[c]).collect();
        let div = divergence(&t.flux);
        assert_eq!(div.values(), brute.as_slice());
        assert_eq!(div.values(), &[1.0, 0.0, -1.0]);
        // u is constant, so the full operator reduces to the taxis part.
        assert_eq!(div_total_flux(&u, &v, &spec, None).unwrap(), div);
    }

    #[test]
    fn attraction_flips_upwind_side() {
        let g = grid1(3, 3.0);
        let spec = ModelSpec {
            chi: 1.0,
            taxis_sign: TaxisSign::Attraction,
            ..ModelSpec::default()
        };
        let u = ScalarField::new(g, vec![1.0, 2.0, 3.0]).unwrap();
        let v = ScalarField::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        let t = taxis_fluxes(&u, &v, &spec, None);
        assert_eq!(t.upwind_x[1], Some(0));
        assert_eq!(t.flux.x[1], -1.0);
    }

    #[test]
    fn negative_input_is_contract_violation() {
        let g = grid1(3, 3.0);
        let u = ScalarField::new(g, vec![1.0, -1.0, 1.0]).unwrap();
        let v = ScalarField::zeros(g);
        assert!(matches!(
            div_total_flux(&u, &v, &unit_spec(), None),
            Err(GridError::Negative { name: "u", .. })
        ));
    }

    #[test]
    fn laplacian_hand_assembly() {
        let g = grid1(3, 3.0);
        let lap = neumann_laplacian_matrix(&g, &FaceField::interior_constant(g, 1.0)).unwrap();
        assert_eq!(
            lap.to_dense(),
            vec![
                vec![-1.0, 1.0, 0.0],
                vec![1.0, -2.0, 1.0],
                vec![0.0, 1.0, -1.0]
            ]
        );
        assert_eq!(lap.apply(&[4.2; 3]), vec![0.0; 3]);
        assert_eq!(lap.bandwidth(), 1);
    }

    #[test]
    fn laplacian_rejects_nonpositive_coefficient() {
        let g = grid1(4, 1.0);
        let mut c = FaceField::interior_constant(g, 1.0);
        c.x[2] = 0.0;
        assert!(matches!(
            neumann_laplacian_matrix(&g, &c),
            Err(GridError::NonPositiveCoefficient { face: 2, .. })
        ));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn laplacian_entries_match_apply_in_2d() {
        let g = Grid::new_2d(4, 3, 2.0, 1.5).unwrap();
        let mut c = FaceField::interior_constant(g, 1.0);
        for (k, x) in c.x.iter_mut().enumerate() {
            *x *= 1.0 + 0.1 * k as f64;
        }
        for (k, y) in c.y.iter_mut().enumerate() {
            *y *= 2.0 + 0.05 * k as f64;
        }
        let lap = neumann_laplacian_matrix(&g, &c).unwrap();
        let dense = lap.to_dense();
        let x: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.7).sin()).collect();
        let y = lap.apply(&x);
        for r in 0..g.len() {
            let expect: f64 = (0..g.len()).map(|c| dense[r][c] * x[c]).sum();
            assert!((expect - y[r]).abs() < 1e-12);
            for cc in 0..g.len() {
                assert_eq!(dense[r][cc], dense[cc][r]);
                if r.abs_diff(cc) > lap.bandwidth() {
                    assert_eq!(dense[r][cc], 0.0);
                }
            }
        }
        assert_eq!(
            lap.diagonal(),
            (0..g.len()).map(|r| dense[r][r]).collect::<Vec<_>>()
        );
    }

    #[test]
    fn csv_roundtrip_and_labels() {
        let g = Grid::new_2d(3, 4, 1.5, 2.0).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x + 10.0 * y).unwrap();
        let text = f.to_csv();
        assert!(text.starts_with("3,4,1.5,2\n"));
        assert_eq!(ScalarField::from_csv(&text).unwrap(), f);
        let labelled = format!("nx,ny,Lx,Ly\n{text}");
        assert_eq!(ScalarField::from_csv(&labelled).unwrap(), f);
        assert!(ScalarField::from_csv("3,1,1,1\n1,2\n").is_err());
        let one = ScalarField::from_csv("3,1,3,1\n1,2,3\n").unwrap();
        assert_eq!(one.grid().dim(), Dim::One);
    }

    #[test]
    fn grid_config_serde() {
        let g = Grid::new_2d(8, 6, 1.0, 0.5).unwrap();
        let text = toml::to_string(&g).unwrap();
        assert_eq!(toml::from_str::<Grid>(&text).unwrap(), g);
        let g1 = grid1(16, 4.0);
        let text = toml::to_string(&g1).unwrap();
        assert!(!text.contains("ny"));
        assert_eq!(toml::from_str::<Grid>(&text).unwrap(), g1);
        assert!(toml::from_str::<Grid>("dim = 3\nnx = 4\nLx = 1.0").is_err());
        assert!(toml::from_str::<Grid>("dim = 2\nnx = 4\nLx = 1.0").is_err());
    }

    mod props {
        use super::super::*;
        use crate::model::{DiffusionLaw, SensitivityLaw, TaxisSign};
        use proptest::prelude::*;

        fn field_2d() -> impl Strategy<Value = (ScalarField, ScalarField)> {
            (3usize..8, 3usize..7).prop_flat_map(|(nx, ny)| {
                let g = Grid::new_2d(nx, ny, 1.3, 0.7).unwrap();
                (
                    prop::collection::vec(0.0..4.0f64, g.len()),
                    prop::collection::vec(0.0..4.0f64, g.len()),
                )
                    .prop_map(move |(u, v)| {
                        (
                            ScalarField::new(g, u).unwrap(),
                            ScalarField::new(g, v).unwrap(),
                        )
                    })
            })
        }

        fn spec(chi: f64, attract: bool) -> ModelSpec {
            ModelSpec {
                chi,
                taxis_sign: if attract {
                    TaxisSign::Attraction
                } else {
                    TaxisSign::Repulsion
                },
                diffusion: DiffusionLaw::Power {
                    scale: 0.7,
                    exponent: 1.5,
                },
                sensitivity: SensitivityLaw::Power {
                    scale: 1.0,
                    exponent: 0.8,
                },
                ..ModelSpec::default()
            }
        }

        proptest! {
            #[test]
            fn flux_divergence_integrates_to_zero(
                (u, v) in field_2d(), chi in 0.0..5.0f64, attract in any::<bool>(),
            ) {
                let div = div_total_flux(&u, &v, &spec(chi, attract), None).unwrap();
                let scale: f64 = div.values().iter().map(|x| x.abs()).sum::<f64>().max(1.0);
                prop_assert!(div.values().iter().sum::<f64>().abs() <= 1e-12 * scale);
            }

            #[test]
            fn laplacian_is_negative_semidefinite((u, v) in field_2d()) {
                let g = *u.grid();
                let coeff = face_diffusivity(&u, &v, &spec(0.0, false));
                let mut k = FaceField::interior_constant(g, 1.0);
                for (kf, c) in k.x.iter_mut().zip(&coeff.x) {
                    *kf += c;
                }
                for (kf, c) in k.y.iter_mut().zip(&coeff.y) {
                    *kf += c;
                }
                let lap = neumann_laplacian_matrix(&g, &k).unwrap();
                let x = v.values();
                let ax = lap.apply(x);
                let quad: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
                prop_assert!(quad <= 1e-12 * x.iter().map(|a| a * a).sum::<f64>().max(1.0));
                let ones = lap.apply(&vec![1.0; g.len()]);
                prop_assert!(ones.iter().all(|y| *y == 0.0));
            }

            #[test]
            fn taxis_draws_from_the_upwind_cell(
                (u, v) in field_2d(), chi in 0.01..5.0f64, attract in any::<bool>(),
            ) {
                let g = *u.grid();
                let s = spec(chi, attract);
                let t = taxis_fluxes(&u, &v, &s, None);
                for (face, l, r) in g.interior_x_faces() {
                    let drift = -s.taxis_sign.sigma() * chi * (v.values()[r] - v.values()[l]);
                    match t.upwind_x[face] {
                        None => prop_assert_eq!(t.flux.x[face], 0.0),
                        Some(up) => {
                            prop_assert_eq!(up, if drift > 0.0 { l } else { r });
                            // flux carries mass along the drift
                            prop_assert!(t.flux.x[face] * drift <= 0.0);
                            if u.values()[up] == 0.0 {
                                prop_assert_eq!(t.flux.x[face], 0.0);
                            }
                        }
                    }
                }
                for (face, _, _) in g.interior_y_faces() {
                    if t.upwind_y[face].is_none() {
                        prop_assert_eq!(t.flux.y[face], 0.0);
                    }
                }
            }
        }
    }
}

//! Tilted bichromatic lattice: potential, complex absorbing potential and the
//! discretized Hamiltonian.
//!
//! Units throughout: lattice period `d = 2π`, `ħ = m = 1`, energies in units
//! of `8 E_R`.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let wrapped = phi - TAU * ((phi - PI) / TAU).ceil();
    // ceil() can land on -π for inputs that are exact odd multiples of π
    if wrapped <= -PI {
        wrapped + TAU
    } else {
        wrapped
    }
}

fn deserialize_phase<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    f64::deserialize(d).map(wrap_phase)
}

/// Physical configuration of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeParams {
    /// Potential strength `V0`.
    pub v0: f64,
    /// Relative strength of the half-period component.
    pub delta: f64,
    /// Relative phase, kept in `(-π, π]`.
    #[serde(deserialize_with = "deserialize_phase")]
    pub phi: f64,
    /// Static field strength `F`.
    pub field: f64,
    /// Mean-field interaction strength.
    pub g: f64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            v0: 1.0,
            delta: 1.0,
            phi: -2.991,
            field: 1.0 / 3.769,
            g: 0.0,
        }
    }
}

impl LatticeParams {
    /// Linear configuration from the inverse field `1/F`, with `V0 = 1`.
    pub fn new(inv_field: f64, delta: f64, phi: f64) -> Self {
        Self {
            v0: 1.0,
            delta,
            phi: wrap_phase(phi),
            field: 1.0 / inv_field,
            g: 0.0,
        }
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = wrap_phase(phi);
        self
    }

    pub fn with_field(mut self, field: f64) -> Self {
        self.field = field;
        self
    }

    pub fn inv_field(&self) -> f64 {
        1.0 / self.field
    }

    /// Ladder spacing `d F` for `d = 2π`.
    pub fn ladder_spacing(&self) -> f64 {
        TAU * self.field
    }

    /// The `(1/F, δ, φ)` coordinates used by the exceptional-point search.
    pub fn coordinates(&self) -> [f64; 3] {
        [self.inv_field(), self.delta, self.phi]
    }

    pub fn from_coordinates(c: [f64; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    /// Validated copy suitable for a resonance computation.
    pub fn checked(&self) -> Result<Self> {
        let finite = [self.v0, self.delta, self.phi, self.field, self.g]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::input("lattice parameters must be finite"));
        }
        if self.v0 <= 0.0 {
            return Err(Error::input(format!("V0 must be positive, got {}", self.v0)));
        }
        if self.field <= 0.0 {
            return Err(Error::input(format!(
                "F must be positive for a resonance ladder, got {}",
                self.field
            )));
        }
        Ok(Self {
            phi: wrap_phase(self.phi),
            ..*self
        })
    }
}

/// Second-derivative discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticScheme {
    /// Fourier second derivative on the box, treated as periodic.
    Spectral,
    /// Standard three-point central difference, Dirichlet edges.
    Stencil3,
    /// Eighth-order nine-point central difference, Dirichlet edges.
    Stencil9,
}

/// Spatial grid and absorbing-potential placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub periods_left: usize,
    pub periods_right: usize,
    pub points_per_period: usize,
    /// CAP strength `η`.
    pub cap_strength: f64,
    /// Number of periods covered by the CAP at the downhill (left) edge.
    pub cap_width: usize,
    pub cap_order: u32,
    pub kinetic: KineticScheme,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            periods_left: 10,
            periods_right: 3,
            points_per_period: 24,
            cap_strength: 5.0,
            cap_width: 6,
            cap_order: 2,
            kinetic: KineticScheme::Spectral,
        }
    }
}

impl GridSpec {
    pub fn n_points(&self) -> usize {
        (self.periods_left + self.periods_right) * self.points_per_period
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.points_per_period as f64
    }

    pub fn x_min(&self) -> f64 {
        -TAU * self.periods_left as f64
    }

    pub fn x_max(&self) -> f64 {
        TAU * self.periods_right as f64
    }

    pub fn length(&self) -> f64 {
        TAU * (self.periods_left + self.periods_right) as f64
    }

    /// Position where the CAP switches on; it is nonzero for `x < cap_onset`.
    pub fn cap_onset(&self) -> f64 {
        self.x_min() + self.cap_length()
    }

    pub fn cap_length(&self) -> f64 {
        TAU * self.cap_width as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        let dx = self.spacing();
        let x0 = self.x_min();
        (0..self.n_points()).map(|j| x0 + j as f64 * dx).collect()
    }

    pub fn with_cap_strength(mut self, eta: f64) -> Self {
        self.cap_strength = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_period < 4 {
            return Err(Error::config("grid.points_per_period", "must be at least 4"));
        }
        if self.periods_left == 0 {
            return Err(Error::config("grid.periods_left", "must be at least 1"));
        }
        if self.periods_right == 0 {
            return Err(Error::config("grid.periods_right", "must be at least 1"));
        }
        if self.cap_width > self.periods_left {
            return Err(Error::config(
                "grid.cap_width",
                format!("must not exceed grid.periods_left ({})", self.periods_left),
            ));
        }
        if !(self.cap_strength >= 0.0 && self.cap_strength.is_finite()) {
            return Err(Error::config("grid.cap_strength", "must be finite and >= 0"));
        }
        if self.cap_order == 0 {
            return Err(Error::config("grid.cap_order", "must be at least 1"));
        }
        Ok(())
    }
}

/// `V(x) = (V0/2) [cos x + δ cos(2x + φ)]`.
pub fn potential_value(x: f64, p: &LatticeParams) -> f64 {
    0.5 * p.v0 * (x.cos() + p.delta * (2.0 * x + p.phi).cos())
}

/// Monomial CAP shape `((x_cap - x)/w)^order` left of the onset, zero elsewhere.
pub fn cap_profile(x: f64, grid: &GridSpec) -> f64 {
    let onset = grid.cap_onset();
    if grid.cap_width == 0 || x >= onset {
        return 0.0;
    }
    ((onset - x) / grid.cap_length()).powi(grid.cap_order as i32)
}

/// Dense complex Hamiltonian on the grid.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub entries: Array2<Complex64>,
    /// Set when `entries` equals its own transpose exactly.
    pub symmetric: bool,
}

impl HamiltonianMatrix {
    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    fn from_entries(entries: Array2<Complex64>) -> Self {
        let n = entries.nrows();
        let symmetric = (0..n).all(|i| (0..i).all(|j| entries[[i, j]] == entries[[j, i]]));
        Self { entries, symmetric }
    }
}

/// Symmetric matrix of `-½ d²/dx²` for the given grid.
pub fn kinetic_matrix(grid: &GridSpec) -> Array2<f64> {
    let n = grid.n_points();
    let dx = grid.spacing();
    let mut t = Array2::<f64>::zeros((n, n));
    match grid.kinetic {
        KineticScheme::Spectral => {
            let col = spectral_second_derivative(n, grid.length());
            for i in 0..n {
                for j in 0..n {
                    let m = if i >= j { i - j } else { j - i };
                    t[[i, j]] = -0.5 * col[m];
                }
            }
        }
        KineticScheme::Stencil3 | KineticScheme::Stencil9 => {
            let coeffs: &[f64] = if grid.kinetic == KineticScheme::Stencil3 {
                &[-2.0, 1.0]
            } else {
                &[-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0]
            };
            let scale = -0.5 / (dx * dx);
            for i in 0..n {
                for (k, c) in coeffs.iter().enumerate() {
                    if i + k < n {
                        t[[i, i + k]] = scale * c;
                        t[[i + k, i]] = scale * c;
                    }
                }
            }
        }
    }
    t
}

/// First column of the periodic Fourier second-derivative matrix on a box of
/// length `length` sampled at `n` points.
fn spectral_second_derivative(n: usize, length: f64) -> Vec<f64> {
    let h = TAU / n as f64;
    let scale = (TAU / length).powi(2);
    let even = n % 2 == 0;
    (0..n)
        .map(|m| {
            let v = if m == 0 {
                if even {
                    -PI * PI / (3.0 * h * h) - 1.0 / 6.0
                } else {
                    -PI * PI / (3.0 * h * h) + 1.0 / 12.0
                }
            } else {
                let s = (m as f64 * h / 2.0).sin();
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                if even {
                    -sign / (2.0 * s * s)
                } else {
                    -sign * (m as f64 * h / 2.0).cos() / (2.0 * s * s)
                }
            };
            v * scale
        })
        .collect()
}

/// Grid-dependent pieces of the Hamiltonian, computed once per grid.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: GridSpec,
    pub positions: Vec<f64>,
    pub cap: Vec<f64>,
    kinetic: Array2<f64>,
}

impl Discretization {
    pub fn new(grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        let positions = grid.positions();
        let cap = positions.iter().map(|&x| cap_profile(x, &grid)).collect();
        Ok(Self {
            kinetic: kinetic_matrix(&grid),
            grid,
            positions,
            cap,
        })
    }

    pub fn n_points(&self) -> usize {
        self.positions.len()
    }

    /// Diagonal `V(x) + F x - iηW(x) + g ρ(x)`.
    pub fn diagonal(&self, p: &LatticeParams, density: Option<&[f64]>) -> Result<Vec<Complex64>> {
        if let Some(rho) = density {
            if rho.len() != self.n_points() {
                return Err(Error::input(format!(
                    "density has {} samples but the grid has {}",
                    rho.len(),
                    self.n_points()
                )));
            }
            if rho.iter().any(|r| !(*r >= 0.0)) {
                return Err(Error::input("density must be nonnegative"));
            }
        }
        let eta = self.grid.cap_strength;
        Ok(self
            .positions
            .iter()
            .zip(&self.cap)
            .enumerate()
            .map(|(j, (&x, &w))| {
                let mut re = potential_value(x, p) + p.field * x;
                if let Some(rho) = density {
                    re += p.g * rho[j];
                }
                Complex64::new(re, -eta * w)
            })
            .collect())
    }

    pub fn hamiltonian(&self, p: &LatticeParams, density: Option<&[f64]>) -> Result<HamiltonianMatrix> {
        let diag = self.diagonal(p, density)?;
        let mut h = self.kinetic.mapv(|t| Complex64::new(t, 0.0));
        for (j, d) in diag.into_iter().enumerate() {
            h[[j, j]] += d;
        }
        Ok(HamiltonianMatrix::from_entries(h))
    }
}

/// Builds `-½ d²/dx² + V(x) + F x - iηW(x) (+ g ρ(x))` on the grid.
pub fn build_hamiltonian(
    p: &LatticeParams,
    grid: &GridSpec,
    density: Option<&[f64]>,
) -> Result<HamiltonianMatrix> {
    Discretization::new(*grid)?.hamiltonian(p, density)
}

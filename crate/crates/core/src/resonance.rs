//! Non-hermitian eigenproblem: physical filtering, ladder labels, overlap and
//! Petermann diagnostics, plus the Bloch-gap and Landau-Zener helpers.

use std::f64::consts::{PI, TAU};

use ndarray::{s, Array1, Array2, ArrayView1};
use ndarray_linalg::{EigValsh, UPLO};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{c_dot, c_normalize, eig_dense, h_dot, norm2, residual, EigenPairs};
use crate::error::{Error, Result};
use crate::lattice::{Discretization, GridSpec, HamiltonianMatrix, LatticeParams};

/// Thresholds for deciding which eigenpairs are physical resonances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Maximal fraction of `|Ψ|²` inside the CAP.
    pub leak_threshold: f64,
    /// Distance in periods the density peak must keep from the CAP onset and
    /// from the uphill edge.
    pub edge_margin: f64,
    /// Upper bound on `E − F x_peak`; removes grid-scale states.
    pub max_local_energy: f64,
    pub residual_tol: f64,
    /// Eigenvalue distance below which the tracked pair is flagged near-defective.
    pub near_defective_tol: f64,
    /// Minimal translated-vector overlap for two states to share a ladder.
    pub ladder_overlap: f64,
    /// Tolerance on `(E − E')/(2πF)` being an integer, in units of the spacing.
    pub ladder_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            leak_threshold: 0.6,
            edge_margin: 1.0,
            max_local_energy: 5.0,
            residual_tol: 1e-8,
            near_defective_tol: 1e-8,
            ladder_overlap: 0.9,
            ladder_tol: 2e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("solver.leak_threshold", self.leak_threshold),
            ("solver.max_local_energy", self.max_local_energy),
            ("solver.residual_tol", self.residual_tol),
            ("solver.near_defective_tol", self.near_defective_tol),
            ("solver.ladder_overlap", self.ladder_overlap),
            ("solver.ladder_tol", self.ladder_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(self.edge_margin >= 0.0) {
            return Err(Error::config("solver.edge_margin", "must be >= 0"));
        }
        Ok(())
    }
}

/// One complex eigenvalue `E − iΓ/2` with its right eigenvector.
#[derive(Debug, Clone)]
pub struct Resonance {
    pub eigenvalue: Complex64,
    pub energy: f64,
    /// `-2 Im μ`; reported as computed, tiny negative values included.
    pub gamma: f64,
    /// c-normalized unless `near_defective`, then unit 2-norm.
    pub right_vector: Array1<Complex64>,
    pub ladder_index: Option<usize>,
    pub site_index: i64,
    pub cap_leakage: f64,
    pub localization_center: f64,
    pub peak_position: f64,
    pub residual: f64,
    pub near_defective: bool,
    pub ambiguous_label: bool,
}

impl Resonance {
    pub fn petermann(&self) -> f64 {
        petermann_vector(self.right_vector.view())
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumSlice {
    pub params: LatticeParams,
    pub grid: GridSpec,
    pub eta_used: f64,
    /// One representative per ladder, from a single energy window of width
    /// `2πF`, sorted by `Γ` ascending.
    pub resonances: Vec<Resonance>,
    /// Every physical state in the box, including ladder translates, sorted by `Γ`.
    pub replicas: Vec<Resonance>,
    /// `ℰ_α` per representative once labeled.
    pub miniladder_offsets: Vec<f64>,
}

impl SpectrumSlice {
    /// The two most stable representatives.
    pub fn tracked_pair(&self) -> Result<(&Resonance, &Resonance)> {
        match self.resonances.as_slice() {
            [a, b, ..] => Ok((a, b)),
            other => Err(Error::TooFewStates {
                found: other.len(),
                needed: 2,
            }),
        }
    }
}

/// Grid-bound solver with the kinetic matrix cached.
#[derive(Debug, Clone)]
pub struct ResonanceSolver {
    disc: Discretization,
    config: SolverConfig,
}

impl ResonanceSolver {
    pub fn new(grid: GridSpec, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            disc: Discretization::new(grid)?,
            config,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.disc.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn hamiltonian(&self, p: &LatticeParams, density: Option<&[f64]>) -> Result<HamiltonianMatrix> {
        let h = self.disc.hamiltonian(p, density)?;
        if !h.symmetric {
            return Err(Error::Eigen(
                "Hamiltonian is not complex symmetric; left vectors are unavailable".into(),
            ));
        }
        Ok(h)
    }

    /// Linear resonances at `p`, keeping at most `n_keep` representatives.
    pub fn solve(&self, p: &LatticeParams, n_keep: usize) -> Result<SpectrumSlice> {
        let p = p.checked()?;
        if p.g != 0.0 {
            return Err(Error::input("g must be 0 for the linear solver; use the nonlinear solver"));
        }
        let h = self.hamiltonian(&p, None)?;
        let pairs = eig_dense(&h)?;
        let mut states = self.physical_states(&p, &h, &pairs)?;
        if states.is_empty() {
            return Err(Error::NoPhysicalStates {
                leak_threshold: self.config.leak_threshold,
            });
        }
        states.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
        let mut reps = representatives(&states, p.field);
        reps.truncate(n_keep.max(1));
        if let [a, b, ..] = reps.as_mut_slice() {
            if (a.eigenvalue - b.eigenvalue).norm() < self.config.near_defective_tol {
                a.near_defective = true;
                b.near_defective = true;
            }
        }
        let slice = SpectrumSlice {
            params: p,
            grid: self.disc.grid,
            eta_used: self.disc.grid.cap_strength,
            resonances: reps,
            replicas: states,
            miniladder_offsets: Vec::new(),
        };
        Ok(label_ladders(slice, &self.config))
    }

    /// Converts eigenpairs into resonances without filtering.
    pub fn resonances_from_pairs(&self, h: &HamiltonianMatrix, pairs: &EigenPairs) -> Vec<Resonance> {
        (0..pairs.values.len())
            .map(|k| self.make_resonance(h, pairs.values[k], pairs.vectors.column(k).to_owned()))
            .collect()
    }

    pub(crate) fn make_resonance(
        &self,
        h: &HamiltonianMatrix,
        mu: Complex64,
        mut v: Array1<Complex64>,
    ) -> Resonance {
        let res = residual(h.entries.view(), v.view(), mu);
        let c_ok = c_normalize(&mut v);
        let xs = &self.disc.positions;
        let dens: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
        let total: f64 = dens.iter().sum();
        let leak = dens
            .iter()
            .zip(&self.disc.cap)
            .filter(|(_, w)| **w > 0.0)
            .map(|(d, _)| d)
            .sum::<f64>()
            / total;
        let center = dens.iter().zip(xs).map(|(d, x)| d * x).sum::<f64>() / total;
        // the outgoing tail of broad resonances can peak inside the CAP
        let onset = self.disc.grid.cap_onset();
        let first = xs.iter().position(|&x| x >= onset).unwrap_or(0);
        let peak = xs[first + argmax(&dens[first..])];
        Resonance {
            eigenvalue: mu,
            energy: mu.re,
            gamma: -2.0 * mu.im,
            right_vector: v,
            ladder_index: None,
            site_index: (peak / TAU).floor() as i64,
            cap_leakage: leak,
            localization_center: center,
            peak_position: peak,
            residual: res,
            near_defective: !c_ok,
            ambiguous_label: false,
        }
    }

    fn is_physical(&self, p: &LatticeParams, r: &Resonance) -> bool {
        let g = &self.disc.grid;
        let margin = self.config.edge_margin * TAU;
        r.gamma >= -1e-10
            && r.cap_leakage < self.config.leak_threshold
            && r.peak_position >= g.cap_onset() + margin
            && r.peak_position <= g.x_max() - margin
            && r.energy - p.field * r.peak_position <= self.config.max_local_energy
    }

    fn physical_states(&self, p: &LatticeParams, h: &HamiltonianMatrix, pairs: &EigenPairs) -> Result<Vec<Resonance>> {
        let mut out = Vec::new();
        for r in self.resonances_from_pairs(h, pairs) {
            if !self.is_physical(p, &r) {
                continue;
            }
            if r.residual > self.config.residual_tol {
                return Err(Error::Residual {
                    residual: r.residual,
                    tolerance: self.config.residual_tol,
                });
            }
            out.push(r);
        }
        Ok(out)
    }

    /// Filtered physical states for an arbitrary (possibly density-dependent)
    /// Hamiltonian.
    pub fn physical_subset(&self, p: &LatticeParams, states: Vec<Resonance>) -> Vec<Resonance> {
        states.into_iter().filter(|r| self.is_physical(p, r)).collect()
    }

    /// Checks that translating representative `k` by one period reproduces a
    /// neighbouring eigenpair shifted by `±2πF`.
    pub fn ladder_covariance(&self, slice: &SpectrumSlice, k: usize) -> Result<Covariance> {
        let rep = slice
            .resonances
            .get(k)
            .ok_or_else(|| Error::input(format!("no representative {k}")))?;
        let ppp = self.disc.grid.points_per_period;
        let h = self.hamiltonian(&slice.params, None)?;
        let spacing = slice.params.ladder_spacing();
        let mut best: Option<Covariance> = None;
        for shift in [-1i64, 1] {
            let predicted = rep.eigenvalue + spacing * shift as f64;
            let moved = translate(rep.right_vector.view(), shift * ppp as i64);
            // the translate of the representative identifies its neighbour
            let Some((neighbor, ov)) = slice
                .replicas
                .iter()
                .filter(|r| r.site_index == rep.site_index + shift)
                .filter_map(|r| Some((r, overlap_vectors(moved.view(), r.right_vector.view()).ok()?)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
            else {
                continue;
            };
            let hv = h.entries.dot(&moved);
            let rayleigh = c_dot(moved.view(), hv.view()) / c_dot(moved.view(), moved.view());
            let cand = Covariance {
                shift,
                predicted,
                neighbor: neighbor.eigenvalue,
                rayleigh,
                overlap: ov,
                relative_error: (neighbor.eigenvalue - predicted).norm() / neighbor.eigenvalue.norm(),
            };
            if best.as_ref().is_none_or(|b| cand.overlap > b.overlap) {
                best = Some(cand);
            }
        }
        best.ok_or_else(|| Error::input("no translated neighbour inside the physical window"))
    }
}

/// Result of a one-period translation test.
#[derive(Debug, Clone, Copy)]
pub struct Covariance {
    pub shift: i64,
    pub predicted: Complex64,
    pub neighbor: Complex64,
    /// c-product Rayleigh quotient of the translated vector.
    pub rayleigh: Complex64,
    pub overlap: f64,
    pub relative_error: f64,
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Shifts samples by `k` indices (positive moves uphill), zero-filled.
pub fn translate(v: ArrayView1<Complex64>, k: i64) -> Array1<Complex64> {
    let n = v.len() as i64;
    let mut out = Array1::zeros(v.len());
    for j in 0..n {
        let src = j - k;
        if (0..n).contains(&src) {
            out[j as usize] = v[src as usize];
        }
    }
    out
}

/// One state per ladder, taken from a single energy window of width `2πF`.
///
/// Replicas far downhill or uphill can be lost to the filters, so every
/// physical state is tried as the window anchor; the window holding the most
/// ladders wins, and among those the one closest to `E = 0`.
fn representatives(states: &[Resonance], field: f64) -> Vec<Resonance> {
    let half = PI * field;
    let window = |e0: f64| states.iter().filter(move |r| (r.energy - e0).abs() < half);
    let mut best: Option<(usize, f64, f64)> = None;
    for anchor in states {
        let members: Vec<&Resonance> = window(anchor.energy).collect();
        let count = members.len();
        let centre = (members.iter().map(|r| r.energy).sum::<f64>() / count as f64).abs();
        if best.is_none_or(|(c, m, _)| count > c || (count == c && centre < m - 1e-12)) {
            best = Some((count, centre, anchor.energy));
        }
    }
    match best {
        Some((_, _, e0)) => window(e0).cloned().collect(),
        None => Vec::new(),
    }
}

/// Convenience wrapper building a solver with default thresholds.
pub fn solve_resonances(p: &LatticeParams, grid: &GridSpec, n_keep: usize) -> Result<SpectrumSlice> {
    ResonanceSolver::new(*grid, SolverConfig::default())?.solve(p, n_keep)
}

/// Assigns ladder indices to every state and computes miniladder offsets.
pub fn label_ladders(mut s: SpectrumSlice, config: &SolverConfig) -> SpectrumSlice {
    let spacing = s.params.ladder_spacing();
    let ppp = s.grid.points_per_period as i64;
    for (k, r) in s.resonances.iter_mut().enumerate() {
        r.ladder_index = Some(k + 1);
    }
    let reps = s.resonances.clone();
    for r in s.replicas.iter_mut() {
        let matches: Vec<usize> = reps
            .iter()
            .enumerate()
            .filter(|(_, rep)| {
                let m = r.site_index - rep.site_index;
                let ratio = (r.energy - rep.energy) / spacing;
                if (ratio - m as f64).abs() > config.ladder_tol {
                    return false;
                }
                let moved = translate(rep.right_vector.view(), m * ppp);
                overlap_vectors(moved.view(), r.right_vector.view()).is_ok_and(|o| o > config.ladder_overlap)
            })
            .map(|(k, _)| k + 1)
            .collect();
        match matches.as_slice() {
            [alpha] => r.ladder_index = Some(*alpha),
            [] => {}
            _ => r.ambiguous_label = true,
        }
    }
    s.miniladder_offsets = miniladder_offsets(&s.resonances, spacing);
    s
}

/// `ℰ_α`: half the splitting of the first two ladders reduced to a common
/// site and wrapped into `(-πF, πF]`.
pub fn miniladder_offsets(reps: &[Resonance], spacing: f64) -> Vec<f64> {
    let [a, b, ..] = reps else {
        return Vec::new();
    };
    let ea = a.energy - a.site_index as f64 * spacing;
    let eb = b.energy - b.site_index as f64 * spacing;
    let mut d = (ea - eb).rem_euclid(spacing);
    if d > spacing / 2.0 {
        d -= spacing;
    }
    vec![d / 2.0, -d / 2.0]
}

/// `|⟨a|b⟩| / (‖a‖‖b‖)`.
pub fn overlap_vectors(a: ArrayView1<Complex64>, b: ArrayView1<Complex64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::input("overlap of vectors with different lengths"));
    }
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::input("overlap of a zero vector"));
    }
    Ok((h_dot(a, b).norm() / (na * nb)).min(1.0))
}

pub fn overlap(a: &Resonance, b: &Resonance) -> Result<f64> {
    overlap_vectors(a.right_vector.view(), b.right_vector.view())
}

/// `K = ‖Ψ‖⁴ / |ΨᵀΨ|²` with left vector `conj(Ψ)`; `+∞` when the c-norm
/// underflows.
pub fn petermann_vector(v: ArrayView1<Complex64>) -> f64 {
    let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let c = c_dot(v, v).norm();
    if n2 == 0.0 || c <= n2 * 1e-150 {
        return f64::INFINITY;
    }
    let r = n2 / c;
    r * r
}

pub fn petermann(a: &Resonance) -> f64 {
    a.petermann()
}

/// Outcome of a CAP-strength plateau scan.
#[derive(Debug, Clone)]
pub struct CapSelection {
    pub eta: f64,
    pub flatness: f64,
    /// `(η, Γ₁)` samples of the scan.
    pub samples: Vec<(f64, f64)>,
}

/// Scans `η` on a logarithmic ladder and returns the value where
/// `|d ln Γ₁ / d ln η|` is smallest.
pub fn select_cap_strength(p: &LatticeParams, grid: &GridSpec, config: &SolverConfig) -> Result<CapSelection> {
    const ETA_MIN: f64 = 0.5;
    const STEPS: usize = 15;
    const MAX_FLATNESS: f64 = 0.02;
    let etas: Vec<f64> = (0..STEPS).map(|i| ETA_MIN * 2f64.powf(i as f64 / 2.0)).collect();
    let gammas: Vec<Option<f64>> = etas
        .par_iter()
        .map(|&eta| {
            ResonanceSolver::new(grid.with_cap_strength(eta), *config)
                .and_then(|s| s.solve(p, 1))
                .ok()
                .and_then(|sl| sl.resonances.first().map(|r| r.gamma))
                .filter(|g| *g > 0.0)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    // centred difference at i, and the doubled strength at i + 2 must exist
    for i in 1..STEPS - 2 {
        let (Some(lo), Some(hi), Some(_)) = (gammas[i - 1], gammas[i + 1], gammas[i + 2]) else {
            continue;
        };
        if gammas[i].is_none() {
            continue;
        }
        let slope = (hi.ln() - lo.ln()).abs() / (etas[i + 1].ln() - etas[i - 1].ln());
        if best.is_none_or(|(_, b)| slope < b) {
            best = Some((i, slope));
        }
    }
    let samples = etas
        .iter()
        .zip(&gammas)
        .filter_map(|(e, g)| g.map(|g| (*e, g)))
        .collect();
    match best {
        Some((i, flatness)) if flatness <= MAX_FLATNESS => Ok(CapSelection {
            eta: etas[i],
            flatness,
            samples,
        }),
        Some((_, flatness)) => Err(Error::NoPlateau { flatness }),
        None => Err(Error::NoPlateau { flatness: f64::INFINITY }),
    }
}

/// Least-squares fit of `ln(Γ/F)` against `1/F`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LandauZenerFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS deviation of `ln(Γ/F)` from the fitted line.
    pub residual: f64,
    /// `-π ΔE²` for the supplied gap.
    pub expected_slope: f64,
    pub poor_fit: bool,
    pub samples: usize,
}

const POOR_FIT_RESIDUAL: f64 = 0.1;

pub fn fit_landau_zener(samples: &[(f64, f64)], delta_e: f64) -> Result<LandauZenerFit> {
    if samples.len() < 5 {
        return Err(Error::input(format!("need at least 5 samples, got {}", samples.len())));
    }
    let mut pts = Vec::with_capacity(samples.len());
    for &(f, g) in samples {
        if !(f > 0.0 && g > 0.0) {
            return Err(Error::input(format!("F and Γ must be positive, got ({f}, {g})")));
        }
        pts.push((1.0 / f, (g / f).ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::input("all samples share the same F"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let poor_fit = residual > POOR_FIT_RESIDUAL;
    if poor_fit {
        log::warn!("Landau-Zener fit residual {residual:.3} suggests a resonant peak inside the window");
    }
    Ok(LandauZenerFit {
        slope,
        intercept,
        residual,
        expected_slope: -PI * delta_e * delta_e,
        poor_fit,
        samples: samples.len(),
    })
}

const BLOCH_CUTOFF: i64 = 12;
const BLOCH_K_POINTS: usize = 129;

/// Minimal direct gap between the two lowest bands of the untilted lattice,
/// from a plane-wave expansion.
pub fn bloch_gap(p: &LatticeParams) -> f64 {
    let ks: Vec<f64> = (0..BLOCH_K_POINTS)
        .map(|i| -0.5 + i as f64 / (BLOCH_K_POINTS - 1) as f64)
        .collect();
    ks.iter()
        .map(|&k| {
            let e = bloch_bands(p, k);
            e[1] - e[0]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Band energies at quasimomentum `k ∈ [-½, ½]`, ascending.
pub fn bloch_bands(p: &LatticeParams, k: f64) -> Vec<f64> {
    let m = (2 * BLOCH_CUTOFF + 1) as usize;
    let v1 = Complex64::new(p.v0 / 4.0, 0.0);
    let v2 = Complex64::from_polar(p.v0 * p.delta / 4.0, p.phi);
    let mut h = Array2::<Complex64>::zeros((m, m));
    for i in 0..m {
        let q = k + i as f64 - BLOCH_CUTOFF as f64;
        h[[i, i]] = Complex64::new(0.5 * q * q, 0.0);
        // ⟨q+1|V|q⟩ = V_{+1}, ⟨q+2|V|q⟩ = V_{+2}
        if i + 1 < m {
            h[[i + 1, i]] = v1;
            h[[i, i + 1]] = v1.conj();
        }
        if i + 2 < m {
            h[[i + 2, i]] = v2;
            h[[i, i + 2]] = v2.conj();
        }
    }
    let vals = h.eigvalsh(UPLO::Lower).expect("hermitian eigensolve of a small dense matrix");
    vals.slice(s![..]).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn overlap_examples() {
        let a = array![c(1.0, 0.5), c(0.0, 2.0), c(0.0, 0.0)];
        assert_relative_eq!(overlap_vectors(a.view(), a.view()).unwrap(), 1.0, epsilon = 1e-15);
        let b = array![c(0.0, 0.0), c(0.0, 0.0), c(3.0, 1.0)];
        assert_eq!(overlap_vectors(a.view(), b.view()).unwrap(), 0.0);
        let z = Array1::<Complex64>::zeros(3);
        assert!(overlap_vectors(a.view(), z.view()).is_err());
    }

    #[test]
    fn petermann_of_real_vector_is_one() {
        let a = array![c(0.3, 0.0), c(-1.0, 0.0), c(2.0, 0.0)];
        assert_relative_eq!(petermann_vector(a.view()), 1.0, epsilon = 1e-15);
        let self_orth = array![c(1.0, 0.0), c(0.0, 1.0)];
        assert!(petermann_vector(self_orth.view()).is_infinite());
    }

    #[test]
    fn landau_zener_recovers_synthetic_slope() {
        let de: f64 = 0.3;
        let samples: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let f = 1.0 / (8.0 + 0.5 * i as f64);
                (f, 0.7 * f * (-PI * de * de / f).exp())
            })
            .collect();
        let fit = fit_landau_zener(&samples, de).unwrap();
        assert_relative_eq!(fit.slope, -PI * de * de, max_relative = 1e-6);
        assert_relative_eq!(fit.slope, fit.expected_slope, max_relative = 1e-6);
        assert_relative_eq!(fit.intercept, 0.7f64.ln(), max_relative = 1e-6);
        assert!(!fit.poor_fit);
        assert!(fit_landau_zener(&samples[..4], de).is_err());
    }

    #[test]
    fn empty_lattice_has_no_gap() {
        let p = LatticeParams {
            v0: 1e-12,
            ..LatticeParams::new(3.0, 1.0, 0.3)
        };
        assert!(bloch_gap(&p) < 1e-9);
    }

    #[test]
    fn miniladder_offsets_are_opposite() {
        let mk = |e: f64, n: i64| Resonance {
            eigenvalue: c(e, -0.01),
            energy: e,
            gamma: 0.02,
            right_vector: array![c(1.0, 0.0)],
            ladder_index: None,
            site_index: n,
            cap_leakage: 0.0,
            localization_center: 0.0,
            peak_position: 0.0,
            residual: 0.0,
            near_defective: false,
            ambiguous_label: false,
        };
        let spacing = 1.0;
        let off = miniladder_offsets(&[mk(0.3, 0), mk(2.1, 2)], spacing);
        assert_relative_eq!(off[0], 0.1, epsilon = 1e-12);
        assert_relative_eq!(off[1], -0.1, epsilon = 1e-12);
    }

    #[test]
    fn translation_moves_and_zero_fills() {
        let v = array![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)];
        assert_eq!(translate(v.view(), 1), array![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        assert_eq!(translate(v.view(), -2), array![c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    /// Independent real-space Bloch discretization: nine-point stencil on one
    /// period with twisted periodic boundary conditions.
    fn bloch_bands_real_space(p: &LatticeParams, k: f64, m: usize) -> Vec<f64> {
        let h = TAU / m as f64;
        let coeffs = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
        let mut mat = Array2::<Complex64>::zeros((m, m));
        for i in 0..m {
            let x = i as f64 * h;
            mat[[i, i]] += c(-0.5 * coeffs[0] / (h * h) + crate::lattice::potential_value(x, p), 0.0);
            for (d, cf) in coeffs.iter().enumerate().skip(1) {
                for sign in [-1i64, 1] {
                    let j = i as i64 + sign * d as i64;
                    let wraps = j.div_euclid(m as i64);
                    let phase = Complex64::from_polar(1.0, TAU * k * wraps as f64);
                    mat[[i, j.rem_euclid(m as i64) as usize]] += phase * (-0.5 * cf / (h * h));
                }
            }
        }
        mat.eigvalsh(UPLO::Lower).unwrap().to_vec()
    }

    #[test]
    fn plane_wave_bands_match_real_space_oracle() {
        for p in [
            LatticeParams::new(3.0, 0.0, 0.0),
            LatticeParams::new(3.0, 1.0, -2.991),
            LatticeParams::new(3.0, 2.251, 1.1),
        ] {
            for k in [0.0, 0.2, 0.5] {
                let pw = bloch_bands(&p, k);
                let rs = bloch_bands_real_space(&p, k, 192);
                for b in 0..2 {
                    assert!((pw[b] - rs[b]).abs() < 1e-6, "band {b} at k={k}: {} vs {}", pw[b], rs[b]);
                }
            }
        }
    }

    #[test]
    fn gap_is_continuous_at_zero_delta() {
        let g0 = bloch_gap(&LatticeParams::new(3.0, 0.0, 0.0));
        let g1 = bloch_gap(&LatticeParams::new(3.0, 1e-4, 0.0));
        assert!((g0 - g1).abs() < 1e-3);
    }
}

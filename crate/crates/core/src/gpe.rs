//! Mean-field (Gross-Pitaevskii) resonances by under-relaxed self-consistent
//! iteration, crossing classification and nonlinear Petermann scans.

use std::f64::consts::PI;

use ndarray::Array1;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{eig_dense, inverse_iteration, residual};
use crate::error::{Error, Result};
use crate::lattice::LatticeParams;
use crate::resonance::{overlap_vectors, petermann_vector, Resonance, ResonanceSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearConfig {
    /// Density mixing `λ` in `ρ ← (1−λ)ρ + λρ_new`.
    pub relaxation: f64,
    /// Convergence threshold on the change of `μ` between iterations.
    pub sc_tol: f64,
    pub max_iterations: usize,
    /// Inverse-iteration sweeps per self-consistency step.
    pub inverse_sweeps: usize,
    /// Below this overlap with the previous iterate the branch is lost.
    pub branch_overlap: f64,
    /// Two nonlinear states closer than this in `μ` count as one branch.
    pub collapse_tol: f64,
    /// Closest approaches below this count as degenerate.
    pub degenerate_threshold: f64,
    /// Bisection rounds around the closest approach of a crossing scan.
    pub refine_levels: usize,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            relaxation: 0.3,
            sc_tol: 1e-9,
            max_iterations: 500,
            inverse_sweeps: 2,
            branch_overlap: 0.5,
            collapse_tol: 1e-6,
            degenerate_threshold: 0.01,
            refine_levels: 6,
        }
    }
}

impl NonlinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::config("nonlinear.relaxation", "must lie in (0, 1]"));
        }
        for (key, v) in [
            ("nonlinear.sc_tol", self.sc_tol),
            ("nonlinear.branch_overlap", self.branch_overlap),
            ("nonlinear.collapse_tol", self.collapse_tol),
            ("nonlinear.degenerate_threshold", self.degenerate_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::config("nonlinear.max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearResonance {
    pub params: LatticeParams,
    /// Chemical potential `M − iΓ/2`.
    pub mu: Complex64,
    /// `|Ψ|²` normalized to unit integral over the period centred on the
    /// seed's density peak.
    pub density: Vec<f64>,
    pub right_vector: Array1<Complex64>,
    pub g_used: f64,
    pub iterations: usize,
    /// Last change of `μ`.
    pub residual: f64,
    /// `|μ − μ'|` where `μ'` comes from a fresh dense solve with the final density.
    pub verification_shift: f64,
}

impl NonlinearResonance {
    pub fn gamma(&self) -> f64 {
        -2.0 * self.mu.im
    }

    /// Petermann factor against the frozen-density operator.
    pub fn petermann(&self) -> f64 {
        petermann_vector(self.right_vector.view())
    }
}

/// Density normalized over the period `[x_c − π, x_c + π)`.
fn normalized_density(v: &Array1<Complex64>, xs: &[f64], cell: (f64, f64), dx: f64) -> Vec<f64> {
    let raw: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
    let norm: f64 = raw
        .iter()
        .zip(xs)
        .filter(|(_, x)| **x >= cell.0 && **x < cell.1)
        .map(|(r, _)| r)
        .sum::<f64>()
        * dx;
    raw.into_iter().map(|r| r / norm).collect()
}

fn best_match(pairs_vectors: &ndarray::Array2<Complex64>, target: &Array1<Complex64>) -> (usize, f64) {
    (0..pairs_vectors.ncols())
        .map(|k| (k, overlap_vectors(pairs_vectors.column(k), target.view()).unwrap_or(0.0)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0))
}

/// Self-consistent solution of `[H₀ + g ρ] Ψ = μ Ψ` seeded by a linear resonance.
pub fn solve_nonlinear(
    solver: &ResonanceSolver,
    p: &LatticeParams,
    seed: &Resonance,
    cfg: &NonlinearConfig,
) -> Result<NonlinearResonance> {
    cfg.validate()?;
    let p = p.checked()?;
    let disc = solver.discretization();
    if seed.right_vector.len() != disc.n_points() {
        return Err(Error::input("seed vector does not match the grid"));
    }
    let xs = &disc.positions;
    let dx = disc.grid.spacing();
    let cell = (seed.peak_position - PI, seed.peak_position + PI);
    let mut v = seed.right_vector.clone();
    let mut mu = seed.eigenvalue;
    let mut rho = normalized_density(&v, xs, cell, dx);

    if p.g == 0.0 {
        let h = solver.hamiltonian(&p, None)?;
        let r = residual(h.entries.view(), v.view(), mu);
        if r > solver.config().residual_tol {
            return Err(Error::Residual {
                residual: r,
                tolerance: solver.config().residual_tol,
            });
        }
        return Ok(NonlinearResonance {
            params: p,
            mu,
            density: rho,
            right_vector: v,
            g_used: 0.0,
            iterations: 1,
            residual: 0.0,
            verification_shift: 0.0,
        });
    }

    let lam = cfg.relaxation;
    let mut change = f64::INFINITY;
    for it in 1..=cfg.max_iterations {
        let h = solver.hamiltonian(&p, Some(&rho))?;
        let (mu_new, w) = if it == 1 {
            let pairs = eig_dense(&h)?;
            let (k, _) = best_match(&pairs.vectors, &v);
            (pairs.values[k], pairs.vectors.column(k).to_owned())
        } else {
            // a shift exactly on an eigenvalue of the factorized matrix is harmless
            // for LAPACK's pivoted LU only up to rounding; nudge it off
            let shift = mu + Complex64::new(1e-13, 0.0);
            inverse_iteration(h.entries.view(), shift, v.view(), cfg.inverse_sweeps)?
        };
        let ov = overlap_vectors(v.view(), w.view())?;
        if ov < cfg.branch_overlap {
            return Err(Error::BranchJump { overlap: ov });
        }
        let fresh = normalized_density(&w, xs, cell, dx);
        for (r, f) in rho.iter_mut().zip(&fresh) {
            *r = (1.0 - lam) * *r + lam * f;
        }
        change = (mu_new - mu).norm();
        mu = mu_new;
        v = w;
        if change < cfg.sc_tol && it > 1 {
            let h = solver.hamiltonian(&p, Some(&rho))?;
            let pairs = eig_dense(&h)?;
            let (k, _) = best_match(&pairs.vectors, &v);
            let mut vec = pairs.vectors.column(k).to_owned();
            crate::eigen::c_normalize(&mut vec);
            return Ok(NonlinearResonance {
                params: p,
                mu,
                density: rho,
                right_vector: vec,
                g_used: p.g,
                iterations: it,
                residual: change,
                verification_shift: (pairs.values[k] - mu).norm(),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        change,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CrossingType {
    #[serde(rename = "type-I")]
    TypeI,
    #[serde(rename = "type-II")]
    TypeII,
    #[serde(rename = "degenerate")]
    Degenerate,
    /// Both or neither of the differences change sign.
    #[serde(rename = "indeterminate")]
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingReport {
    pub g: f64,
    pub f_range: (f64, f64),
    #[serde(rename = "type")]
    pub kind: CrossingType,
    /// `min |M₁ − M₂|`
    pub closest_approach_real: f64,
    /// `min |Γ₁ − Γ₂|`
    pub closest_approach_imag: f64,
    pub real_parts_cross: bool,
    pub imag_parts_cross: bool,
}

/// One scan sample: `(F, μ₁, μ₂)` with identity-matched tracks.
pub type CrossingSample = (f64, Complex64, Complex64);

/// Exact zeros are skipped so that a sample landing on the crossing still counts.
fn sign_changes(d: &[f64]) -> bool {
    let signs: Vec<bool> = d.iter().filter(|x| **x != 0.0).map(|x| *x > 0.0).collect();
    signs.windows(2).any(|w| w[0] != w[1])
}

/// Classifies a scan that is monotone in `F` with matched tracks.
pub fn classify_crossing(scan: &[CrossingSample], g: f64, degenerate_threshold: f64) -> Result<CrossingReport> {
    if scan.len() < 2 {
        return Err(Error::input("crossing scan needs at least two samples"));
    }
    let increasing = scan.windows(2).all(|w| w[1].0 > w[0].0);
    let decreasing = scan.windows(2).all(|w| w[1].0 < w[0].0);
    if !(increasing || decreasing) {
        return Err(Error::input("crossing scan must be monotone in F"));
    }
    let dm: Vec<f64> = scan.iter().map(|s| s.1.re - s.2.re).collect();
    let dg: Vec<f64> = scan.iter().map(|s| -2.0 * (s.1.im - s.2.im)).collect();
    let min_abs = |d: &[f64]| d.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let (closest_real, closest_imag) = (min_abs(&dm), min_abs(&dg));
    let (real_cross, imag_cross) = (sign_changes(&dm), sign_changes(&dg));
    let kind = if closest_real < degenerate_threshold && closest_imag < degenerate_threshold {
        CrossingType::Degenerate
    } else {
        match (real_cross, imag_cross) {
            (false, true) => CrossingType::TypeI,
            (true, false) => CrossingType::TypeII,
            _ => CrossingType::Indeterminate,
        }
    };
    let (a, b) = (scan[0].0, scan[scan.len() - 1].0);
    Ok(CrossingReport {
        g,
        f_range: (a.min(b), a.max(b)),
        kind,
        closest_approach_real: closest_real,
        closest_approach_imag: closest_imag,
        real_parts_cross: real_cross,
        imag_parts_cross: imag_cross,
    })
}

/// Nonlinear continuation of the two most stable linear resonances at one `F`.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub field: f64,
    pub states: [NonlinearResonance; 2],
}

impl PairSample {
    fn collapsed(&self, cfg: &NonlinearConfig) -> bool {
        (self.states[0].mu - self.states[1].mu).norm() < cfg.collapse_tol
    }
}

/// Solves both tracked states at field `f`; `p` supplies `δ, φ, g`.
pub fn pair_at(solver: &ResonanceSolver, p: &LatticeParams, f: f64, cfg: &NonlinearConfig) -> Result<PairSample> {
    let lin = LatticeParams { g: 0.0, ..p.with_field(f) };
    let slice = solver.solve(&lin, 2)?;
    let (a, b) = slice.tracked_pair()?;
    let pf = p.with_field(f);
    let s1 = solve_nonlinear(solver, &pf, a, cfg)?;
    let s2 = solve_nonlinear(solver, &pf, b, cfg)?;
    Ok(PairSample {
        field: f,
        states: [s1, s2],
    })
}

/// Orders each sample's pair by overlap continuity along increasing `F`.
fn match_tracks(samples: &mut [PairSample]) {
    for k in 1..samples.len() {
        let (prev, rest) = samples.split_at_mut(k);
        let p = &prev[k - 1].states;
        let cur = &mut rest[0].states;
        let ov = |a: &NonlinearResonance, b: &NonlinearResonance| {
            overlap_vectors(a.right_vector.view(), b.right_vector.view()).unwrap_or(0.0)
        };
        let keep = ov(&p[0], &cur[0]) + ov(&p[1], &cur[1]);
        let swap = ov(&p[0], &cur[1]) + ov(&p[1], &cur[0]);
        if swap > keep {
            cur.swap(0, 1);
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrossingScan {
    pub samples: Vec<PairSample>,
    /// Fields where the solve failed or both states fell onto one branch.
    pub skipped: Vec<f64>,
    pub report: CrossingReport,
}

impl CrossingScan {
    pub fn track(&self) -> Vec<CrossingSample> {
        self.samples
            .iter()
            .map(|s| (s.field, s.states[0].mu, s.states[1].mu))
            .collect()
    }

    /// `(F, K)` at the largest Petermann factor of either state.
    pub fn petermann_peak(&self) -> Option<(f64, f64)> {
        self.samples
            .iter()
            .map(|s| (s.field, s.states[0].petermann().max(s.states[1].petermann())))
            .filter(|(_, k)| k.is_finite())
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Scans `F` over `fields`, bisects around the closest approach and classifies.
pub fn crossing_scan(
    solver: &ResonanceSolver,
    p: &LatticeParams,
    fields: &[f64],
    cfg: &NonlinearConfig,
) -> Result<CrossingScan> {
    cfg.validate()?;
    if fields.len() < 2 {
        return Err(Error::input("crossing scan needs at least two fields"));
    }
    let mut skipped = Vec::new();
    let mut samples: Vec<PairSample> = Vec::new();
    let absorb = |results: Vec<(f64, Result<PairSample>)>, samples: &mut Vec<PairSample>, skipped: &mut Vec<f64>| {
        for (f, r) in results {
            match r {
                Ok(s) if !s.collapsed(cfg) => samples.push(s),
                Ok(_) => skipped.push(f),
                Err(e) => {
                    log::warn!("nonlinear pair at F = {f} skipped: {e}");
                    skipped.push(f);
                }
            }
        }
        samples.sort_by(|a, b| a.field.total_cmp(&b.field));
    };
    let first: Vec<(f64, Result<PairSample>)> = fields.par_iter().map(|&f| (f, pair_at(solver, p, f, cfg))).collect();
    absorb(first, &mut samples, &mut skipped);

    for _ in 0..cfg.refine_levels {
        if samples.len() < 2 {
            break;
        }
        let gap = |s: &PairSample| (s.states[0].mu - s.states[1].mu).norm();
        let k = (0..samples.len())
            .min_by(|&a, &b| gap(&samples[a]).total_cmp(&gap(&samples[b])))
            .unwrap();
        let mut new_fields = Vec::new();
        if k > 0 {
            new_fields.push(0.5 * (samples[k - 1].field + samples[k].field));
        }
        if k + 1 < samples.len() {
            new_fields.push(0.5 * (samples[k].field + samples[k + 1].field));
        }
        new_fields.retain(|f| !skipped.iter().any(|s| (s - f).abs() < 1e-15));
        if new_fields.is_empty() {
            break;
        }
        let extra = new_fields.par_iter().map(|&f| (f, pair_at(solver, p, f, cfg))).collect();
        absorb(extra, &mut samples, &mut skipped);
    }
    if samples.len() < 2 {
        return Err(Error::input("fewer than two usable samples in the crossing scan"));
    }
    match_tracks(&mut samples);
    let track: Vec<CrossingSample> = samples.iter().map(|s| (s.field, s.states[0].mu, s.states[1].mu)).collect();
    let report = classify_crossing(&track, p.g, cfg.degenerate_threshold)?;
    Ok(CrossingScan {
        samples,
        skipped,
        report,
    })
}

/// `(F, K₁, K₂)` from the frozen-density operator at each field.
pub fn nonlinear_petermann_scan(
    solver: &ResonanceSolver,
    p: &LatticeParams,
    fields: &[f64],
    cfg: &NonlinearConfig,
) -> Vec<Result<(f64, f64, f64)>> {
    fields
        .par_iter()
        .map(|&f| {
            let s = pair_at(solver, p, f, cfg)?;
            Ok((f, s.states[0].petermann(), s.states[1].petermann()))
        })
        .collect()
}

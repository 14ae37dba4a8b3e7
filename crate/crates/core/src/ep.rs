//! Exceptional-point search: gap objective, simplex localization with
//! certification, shell continuation of the EP curve and gap-plane scans.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{wrap_phase, LatticeParams};
use crate::resonance::{overlap, overlap_vectors, Resonance, ResonanceSolver, SpectrumSlice};
use crate::simplex::{minimize, NelderMeadOptions};

/// Axis of the `(1/F, δ, φ)` parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coordinate {
    InvField,
    Delta,
    Phi,
}

impl Coordinate {
    pub const ALL: [Coordinate; 3] = [Coordinate::InvField, Coordinate::Delta, Coordinate::Phi];

    pub fn index(self) -> usize {
        match self {
            Coordinate::InvField => 0,
            Coordinate::Delta => 1,
            Coordinate::Phi => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Coordinate::InvField => "invF",
            Coordinate::Delta => "delta",
            Coordinate::Phi => "phi",
        }
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Coordinate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "invf" | "1/f" | "inv-f" | "inv_f" => Ok(Coordinate::InvField),
            "delta" => Ok(Coordinate::Delta),
            "phi" => Ok(Coordinate::Phi),
            _ => Err(Error::input(format!("unknown coordinate `{s}` (expected invF, delta or phi)"))),
        }
    }
}

/// Search, certification and continuation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpConfig {
    pub gap_tol: f64,
    pub overlap_tol: f64,
    pub petermann_tol: f64,
    pub shell_radius: f64,
    pub max_points: usize,
    /// Stop the trace at the first reversal of the δ-direction.
    pub stop_at_fold: bool,
    /// Scan cells below this gap are reported as EP seeds.
    pub seed_threshold: f64,
    pub inv_field_bounds: [f64; 2],
    pub delta_bounds: [f64; 2],
    pub simplex: NelderMeadOptions,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            overlap_tol: 0.999,
            petermann_tol: 1e3,
            shell_radius: 0.1,
            max_points: 200,
            stop_at_fold: false,
            seed_threshold: 0.05,
            inv_field_bounds: [0.5, 15.0],
            delta_bounds: [0.0, 3.0],
            simplex: NelderMeadOptions::default(),
        }
    }
}

impl EpConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("ep.gap_tol", self.gap_tol),
            ("ep.overlap_tol", self.overlap_tol),
            ("ep.petermann_tol", self.petermann_tol),
            ("ep.shell_radius", self.shell_radius),
            ("ep.seed_threshold", self.seed_threshold),
            ("ep.simplex.initial_edge", self.simplex.initial_edge),
            ("ep.simplex.x_tol", self.simplex.x_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.overlap_tol > 1.0 {
            return Err(Error::config("ep.overlap_tol", "must not exceed 1"));
        }
        for (key, [lo, hi]) in [
            ("ep.inv_field_bounds", self.inv_field_bounds),
            ("ep.delta_bounds", self.delta_bounds),
        ] {
            if !(lo < hi) {
                return Err(Error::config(key, "lower bound must be below upper bound"));
            }
        }
        if self.inv_field_bounds[0] <= 0.0 {
            return Err(Error::config("ep.inv_field_bounds", "must be positive"));
        }
        Ok(())
    }

    fn in_domain(&self, c: [f64; 3]) -> bool {
        let [f0, f1] = self.inv_field_bounds;
        let [d0, d1] = self.delta_bounds;
        (f0..=f1).contains(&c[0]) && (d0..=d1).contains(&c[1]) && c[2].is_finite()
    }
}

/// Gap and diagnostics of the tracked pair at one parameter point.
#[derive(Debug, Clone)]
pub struct GapEvaluation {
    pub params: LatticeParams,
    pub gap: f64,
    pub first: Resonance,
    pub second: Resonance,
    pub overlap: f64,
}

impl GapEvaluation {
    pub fn petermann_min(&self) -> f64 {
        self.first.petermann().min(self.second.petermann())
    }
}

const MATCH_MIN_OVERLAP: f64 = 0.5;

/// `|ℰ₁ − ℰ₂|` of the two most stable states, kept on the same pair of
/// eigenstates by overlap matching against a cached reference pair.
pub struct GapObjective<'a> {
    solver: &'a ResonanceSolver,
    reference: RefCell<Option<[Array1<Complex64>; 2]>>,
    ambiguous: Cell<usize>,
}

impl<'a> GapObjective<'a> {
    pub fn new(solver: &'a ResonanceSolver) -> Self {
        Self {
            solver,
            reference: RefCell::new(None),
            ambiguous: Cell::new(0),
        }
    }

    pub fn solver(&self) -> &ResonanceSolver {
        self.solver
    }

    /// Evaluations that fell back to the two smallest-Γ states.
    pub fn ambiguous_count(&self) -> usize {
        self.ambiguous.get()
    }

    pub fn set_reference(&self, a: &Resonance, b: &Resonance) {
        *self.reference.borrow_mut() = Some([a.right_vector.clone(), b.right_vector.clone()]);
    }

    pub fn clear_reference(&self) {
        *self.reference.borrow_mut() = None;
    }

    pub fn value(&self, p: &LatticeParams) -> Result<f64> {
        Ok(self.evaluate(p)?.gap)
    }

    pub fn evaluate(&self, p: &LatticeParams) -> Result<GapEvaluation> {
        let slice = self.solver.solve(p, 4)?;
        let (a, b) = self.pick_pair(&slice)?;
        let overlap = overlap(&a, &b)?;
        if self.reference.borrow().is_none() {
            self.set_reference(&a, &b);
        }
        Ok(GapEvaluation {
            params: slice.params,
            gap: (a.eigenvalue - b.eigenvalue).norm(),
            first: a,
            second: b,
            overlap,
        })
    }

    fn pick_pair(&self, slice: &SpectrumSlice) -> Result<(Resonance, Resonance)> {
        let fallback = || slice.tracked_pair().map(|(a, b)| (a.clone(), b.clone()));
        let reference = self.reference.borrow();
        let Some([r1, r2]) = reference.as_ref() else {
            return fallback();
        };
        let cands = &slice.replicas;
        let ov = |r: &Array1<Complex64>, s: &Resonance| overlap_vectors(r.view(), s.right_vector.view()).unwrap_or(0.0);
        let o1: Vec<f64> = cands.iter().map(|s| ov(r1, s)).collect();
        let o2: Vec<f64> = cands.iter().map(|s| ov(r2, s)).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..cands.len() {
            for j in 0..cands.len() {
                if i == j {
                    continue;
                }
                let score = o1[i].min(o2[j]);
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((i, j, score));
                }
            }
        }
        match best {
            Some((i, j, score)) if score >= MATCH_MIN_OVERLAP => Ok((cands[i].clone(), cands[j].clone())),
            _ => {
                self.ambiguous.set(self.ambiguous.get() + 1);
                log::warn!("gap objective lost the reference pair; using the two most stable states");
                fallback()
            }
        }
    }
}

/// Parameter point with the diagnostics that certify an EP.
#[derive(Debug, Clone, Serialize)]
pub struct EPCandidate {
    pub params: LatticeParams,
    pub gap: f64,
    pub overlap_s: f64,
    pub petermann_min: f64,
    pub certified: bool,
    pub converged: bool,
    pub evaluations: usize,
    /// Complex eigenvalues of the coalescing pair.
    #[serde(skip)]
    pub eigenvalues: [Complex64; 2],
}

impl EPCandidate {
    fn from_evaluation(e: &GapEvaluation, cfg: &EpConfig, converged: bool, evaluations: usize) -> Self {
        let petermann_min = e.petermann_min();
        Self {
            params: e.params,
            gap: e.gap,
            overlap_s: e.overlap,
            petermann_min,
            certified: e.gap < cfg.gap_tol && e.overlap > cfg.overlap_tol && petermann_min > cfg.petermann_tol,
            converged,
            evaluations,
            eigenvalues: [e.first.eigenvalue, e.second.eigenvalue],
        }
    }

    pub fn coordinates(&self) -> [f64; 3] {
        self.params.coordinates()
    }
}

fn with_free(base: [f64; 3], free: &[usize], x: &[f64]) -> [f64; 3] {
    let mut c = base;
    for (k, &i) in free.iter().enumerate() {
        c[i] = x[k];
    }
    c
}

fn params_at(template: &LatticeParams, c: [f64; 3]) -> LatticeParams {
    LatticeParams {
        field: 1.0 / c[0],
        delta: c[1],
        phi: wrap_phase(c[2]),
        ..*template
    }
}

/// Simplex minimization of the gap over the coordinates not in `frozen`.
pub fn find_ep(
    solver: &ResonanceSolver,
    guess: &LatticeParams,
    frozen: &[Coordinate],
    cfg: &EpConfig,
) -> Result<EPCandidate> {
    cfg.validate()?;
    let guess = guess.checked()?;
    let base = guess.coordinates();
    if !cfg.in_domain(base) {
        return Err(Error::input(format!(
            "guess ({:.4}, {:.4}, {:.4}) lies outside the search domain",
            base[0], base[1], base[2]
        )));
    }
    let free: Vec<usize> = Coordinate::ALL
        .iter()
        .filter(|c| !frozen.contains(c))
        .map(|c| c.index())
        .collect();
    let objective = GapObjective::new(solver);
    objective.evaluate(&guess)?;
    let x0: Vec<f64> = free.iter().map(|&i| base[i]).collect();
    let opts = NelderMeadOptions {
        f_tol: cfg.gap_tol,
        ..cfg.simplex
    };
    let report = minimize(
        |x| {
            let c = with_free(base, &free, x);
            if !cfg.in_domain(c) {
                return Err(Error::input("outside search domain"));
            }
            objective.value(&params_at(&guess, c))
        },
        &x0,
        &opts,
    )?;
    let best = objective.evaluate(&params_at(&guess, with_free(base, &free, &report.x)))?;
    if objective.ambiguous_count() > 0 {
        log::warn!("{} gap evaluations used the fallback pair", objective.ambiguous_count());
    }
    Ok(EPCandidate::from_evaluation(&best, cfg, report.converged, report.evaluations + 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    LeftDomain,
    FoldDetected,
    MaxPoints,
    ConvergenceFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct EPCurve {
    pub points: Vec<EPCandidate>,
    pub step_r: f64,
    /// Radius actually used for each step (after halvings).
    pub step_radii: Vec<f64>,
    /// Spherical angles `(ϑ, ϕ)` of each step,
    /// `Δ(1/F) = r sinϑ cosϕ, Δδ = r sinϑ sinϕ, Δφ = r cosϑ`.
    pub step_angles: Vec<(f64, f64)>,
    /// Indices of points at which the δ-component of the step reversed.
    pub folds: Vec<usize>,
    pub termination_reason: Termination,
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}


fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Orthonormal pair spanning the plane normal to `d`.
fn tangent_frame(d: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = normalize3(cross3(d, helper));
    let e2 = cross3(d, e1);
    (e1, e2)
}

/// Spherical angles of a unit step in `(1/F, δ, φ)` order.
pub fn step_angles(d: [f64; 3]) -> (f64, f64) {
    (d[2].clamp(-1.0, 1.0).acos(), d[1].atan2(d[0]))
}

/// Direction of the shell minimum, searched in the gnomonic chart around
/// `forward`; every admissible direction has positive overlap with it.
fn shell_step(
    objective: &GapObjective,
    template: &LatticeParams,
    center: [f64; 3],
    forward: [f64; 3],
    r: f64,
    cfg: &EpConfig,
) -> Result<(GapEvaluation, [f64; 3], usize)> {
    let (e1, e2) = tangent_frame(forward);
    let dir = |u: &[f64]| normalize3(std::array::from_fn(|i| forward[i] + u[0] * e1[i] + u[1] * e2[i]));
    let point = |d: [f64; 3]| std::array::from_fn::<f64, 3, _>(|i| center[i] + r * d[i]);
    let opts = NelderMeadOptions {
        f_tol: cfg.gap_tol,
        initial_edge: 0.25,
        x_tol: cfg.simplex.x_tol / r,
        ..cfg.simplex
    };
    let report = minimize(
        |u| {
            let c = point(dir(u));
            if !cfg.in_domain(c) {
                return Err(Error::input("outside search domain"));
            }
            objective.value(&params_at(template, c))
        },
        &[0.0, 0.0],
        &opts,
    )?;
    let d = dir(&report.x);
    Ok((objective.evaluate(&params_at(template, point(d)))?, d, report.evaluations))
}

/// Coarse scan of the shell for the initial direction of a trace.
fn initial_direction(
    objective: &GapObjective,
    template: &LatticeParams,
    center: [f64; 3],
    r: f64,
    cfg: &EpConfig,
) -> Result<[f64; 3]> {
    let mut best: Option<(f64, [f64; 3])> = None;
    for i in 1..8 {
        let theta = std::f64::consts::PI * i as f64 / 8.0;
        for j in 0..12 {
            let varphi = std::f64::consts::TAU * j as f64 / 12.0;
            let d = [theta.sin() * varphi.cos(), theta.sin() * varphi.sin(), theta.cos()];
            let c: [f64; 3] = std::array::from_fn(|k| center[k] + r * d[k]);
            if !cfg.in_domain(c) {
                continue;
            }
            if let Ok(g) = objective.value(&params_at(template, c)) {
                if best.is_none_or(|(b, _)| g < b) {
                    best = Some((g, d));
                }
            }
        }
    }
    best.map(|(_, d)| d)
        .ok_or_else(|| Error::input("no admissible direction on the first shell"))
}

/// Continues a certified EP along the curve of EPs by minimizing the gap on
/// spheres of radius `r` around the last point.
///
/// `direction` fixes the initial heading; otherwise the lowest-gap direction
/// of a coarse shell scan is used.
pub fn trace_ep_curve(
    solver: &ResonanceSolver,
    start: &EPCandidate,
    r: f64,
    max_points: usize,
    direction: Option<[f64; 3]>,
    cfg: &EpConfig,
) -> Result<EPCurve> {
    cfg.validate()?;
    if !start.certified {
        return Err(Error::input("trace must start from a certified EP"));
    }
    if !(r > 0.0) {
        return Err(Error::config("ep.shell_radius", "must be positive"));
    }
    let template = start.params;
    let objective = GapObjective::new(solver);
    let first = objective.evaluate(&template)?;
    objective.set_reference(&first.first, &first.second);

    let mut forward = match direction {
        Some(d) => normalize3(d),
        None => initial_direction(&objective, &template, start.coordinates(), r, cfg)?,
    };
    let mut curve = EPCurve {
        points: vec![start.clone()],
        step_r: r,
        step_radii: Vec::new(),
        step_angles: Vec::new(),
        folds: Vec::new(),
        termination_reason: Termination::MaxPoints,
    };
    let mut last_delta_step: Option<f64> = None;
    while curve.points.len() < max_points {
        let center = curve.points.last().unwrap().coordinates();
        let mut radius = r;
        let mut accepted = None;
        while radius >= r / 8.0 - 1e-15 {
            match shell_step(&objective, &template, center, forward, radius, cfg) {
                Ok((eval, d, n)) => {
                    let cand = EPCandidate::from_evaluation(&eval, cfg, true, n + 1);
                    if cand.certified {
                        accepted = Some((cand, eval, d));
                        break;
                    }
                    log::debug!("shell r={radius} uncertified (gap {:.3e})", cand.gap);
                }
                Err(e) => log::debug!("shell r={radius} failed: {e}"),
            }
            radius /= 2.0;
        }
        let Some((cand, eval, d)) = accepted else {
            let next: [f64; 3] = std::array::from_fn(|i| center[i] + r * forward[i]);
            curve.termination_reason = if cfg.in_domain(next) {
                Termination::ConvergenceFailure
            } else {
                Termination::LeftDomain
            };
            return Ok(curve);
        };
        objective.set_reference(&eval.first, &eval.second);
        let step_delta = d[1];
        let fold = last_delta_step.is_some_and(|s| s * step_delta < 0.0);
        last_delta_step = Some(step_delta);
        forward = d;
        curve.step_radii.push(radius);
        curve.step_angles.push(step_angles(d));
        curve.points.push(cand);
        if fold {
            curve.folds.push(curve.points.len() - 1);
            if cfg.stop_at_fold {
                curve.termination_reason = Termination::FoldDetected;
                return Ok(curve);
            }
        }
    }
    curve.termination_reason = Termination::MaxPoints;
    Ok(curve)
}

/// Axis specification for a plane scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanAxis {
    pub coordinate: Coordinate,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl ScanAxis {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapSeed {
    pub coordinates: [f64; 3],
    pub gap: f64,
    pub index: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct GapScan {
    pub fixed: (Coordinate, f64),
    pub axes: [ScanAxis; 2],
    /// `gaps[i][j]` at `axes[0].values()[i]`, `axes[1].values()[j]`; NaN where
    /// the solver failed.
    pub gaps: Vec<Vec<f64>>,
    pub seeds: Vec<GapSeed>,
}

/// Dense evaluation of the two-state gap over a parameter plane.
pub fn scan_gap_plane(
    solver: &ResonanceSolver,
    template: &LatticeParams,
    fixed: (Coordinate, f64),
    axes: [ScanAxis; 2],
    cfg: &EpConfig,
) -> Result<GapScan> {
    let [a0, a1] = axes;
    if a0.coordinate == a1.coordinate || a0.coordinate == fixed.0 || a1.coordinate == fixed.0 {
        return Err(Error::input("scan axes and the fixed coordinate must be distinct"));
    }
    for a in &axes {
        if a.count < 2 {
            return Err(Error::input(format!("resolution of {} must be at least 2", a.coordinate)));
        }
        if !(a.min < a.max) {
            return Err(Error::input(format!("range of {} is empty or inverted", a.coordinate)));
        }
    }
    let v0 = a0.values();
    let v1 = a1.values();
    let coords = |i: usize, j: usize| {
        let mut c = [0.0; 3];
        c[fixed.0.index()] = fixed.1;
        c[a0.coordinate.index()] = v0[i];
        c[a1.coordinate.index()] = v1[j];
        c
    };
    let cells: Vec<(usize, usize)> = (0..v0.len()).flat_map(|i| (0..v1.len()).map(move |j| (i, j))).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let objective = GapObjective::new(solver);
            objective.value(&params_at(template, coords(i, j))).unwrap_or(f64::NAN)
        })
        .collect();
    let gaps: Vec<Vec<f64>> = values.chunks(v1.len()).map(|c| c.to_vec()).collect();

    let mut seeds = Vec::new();
    for i in 0..v0.len() {
        for j in 0..v1.len() {
            let g = gaps[i][j];
            if !(g < cfg.seed_threshold) {
                continue;
            }
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || ni < 0 || nj < 0 || ni >= v0.len() as i64 || nj >= v1.len() as i64 {
                        continue;
                    }
                    let ng = gaps[ni as usize][nj as usize];
                    // ties resolve to the first cell in scan order
                    if ng < g || (ng == g && (ni, nj) < (i as i64, j as i64)) {
                        is_min = false;
                    }
                }
            }
            if is_min {
                seeds.push(GapSeed {
                    coordinates: coords(i, j),
                    gap: g,
                    index: (i, j),
                });
            }
        }
    }
    Ok(GapScan {
        fixed,
        axes,
        gaps,
        seeds,
    })
}

/// Runs `find_ep` from every seed of a scan, keeping the fixed coordinate frozen.
pub fn certify_seeds(
    solver: &ResonanceSolver,
    template: &LatticeParams,
    scan: &GapScan,
    extra_frozen: &[Coordinate],
    cfg: &EpConfig,
) -> Vec<Result<EPCandidate>> {
    let mut frozen = vec![scan.fixed.0];
    frozen.extend_from_slice(extra_frozen);
    scan.seeds
        .par_iter()
        .map(|s| find_ep(solver, &params_at(template, s.coordinates), &frozen, cfg))
        .collect()
}

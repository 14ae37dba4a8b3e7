//! Closed loops in the `(1/F, φ)` plane: eigenpair continuation, exchange
//! verdicts and cycle signs of the tracked eigenvector components.

use std::collections::HashMap;
use std::f64::consts::TAU;

use ndarray::Array1;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::c_dot;
use crate::error::{Error, Result};
use crate::lattice::LatticeParams;
use crate::resonance::{overlap_vectors, Resonance, ResonanceSolver};

/// Circle `1/F = 1/F_c + r sin β + Δ(1/F)`, `φ = φ_c + r cos β + Δφ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub center: LatticeParams,
    pub radius: f64,
    pub offset_inv_field: f64,
    pub offset_phi: f64,
    pub steps: usize,
    pub cycles: usize,
    /// Traverse with decreasing `β`.
    #[serde(default)]
    pub reversed: bool,
}

impl LoopSpec {
    pub fn new(center: LatticeParams, radius: f64) -> Self {
        Self {
            center,
            radius,
            offset_inv_field: 0.0,
            offset_phi: 0.0,
            steps: 128,
            cycles: 2,
            reversed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 32 {
            return Err(Error::config("loops.steps", "must be at least 32"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config("loops.radius", "must be positive"));
        }
        if self.cycles == 0 {
            return Err(Error::config("loops.cycles", "must be at least 1"));
        }
        Ok(())
    }

    pub fn params_at(&self, beta: f64) -> LatticeParams {
        let b = if self.reversed { -beta } else { beta };
        let inv_f = self.center.inv_field() + self.radius * b.sin() + self.offset_inv_field;
        self.center
            .with_phi(self.center.phi + self.radius * b.cos() + self.offset_phi)
            .with_field(1.0 / inv_f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Permutation {
    Identity,
    Swap,
}

/// Where each track stands after a number of full cycles, relative to the
/// initial pair: track `t` equals `sign[t] · Ψ_{image[t]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleImage {
    pub cycles: usize,
    pub image: [usize; 2],
    pub sign: [i8; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopTrace {
    pub spec: LoopSpec,
    pub beta_samples: Vec<f64>,
    pub eigenvalue_tracks: [Vec<Complex64>; 2],
    /// `(Ψ_t)_max`: component of each tracked vector at the index where
    /// `|Ψ₁|` peaks at `β = 0`.
    pub component_tracks: [Vec<Complex64>; 2],
    pub component_index: usize,
    pub permutation: Permutation,
    pub encloses_ep: bool,
    /// Image of the initial pair after every completed cycle.
    pub cycle_images: Vec<CycleImage>,
    /// Smallest number of cycles after which both eigenvalue tracks return
    /// to their own starting values.
    pub closure_cycles: Option<usize>,
    pub tracks_disjoint: bool,
    /// Distinct parameter points solved.
    pub solves: usize,
    pub refinements: usize,
}

impl LoopTrace {
    pub fn component_sign(&self) -> Vec<[i8; 2]> {
        self.cycle_images.iter().map(|c| c.sign).collect()
    }

    /// Rows `β, Re ℰ₁, Im ℰ₁, Re ℰ₂, Im ℰ₂, Re c₁, Im c₁, Re c₂, Im c₂`.
    pub fn rows(&self) -> Vec<[f64; 9]> {
        (0..self.beta_samples.len())
            .map(|k| {
                let [e1, e2] = [self.eigenvalue_tracks[0][k], self.eigenvalue_tracks[1][k]];
                let [c1, c2] = [self.component_tracks[0][k], self.component_tracks[1][k]];
                [self.beta_samples[k], e1.re, e1.im, e2.re, e2.im, c1.re, c1.im, c2.re, c2.im]
            })
            .collect()
    }
}

const CONTINUITY_OVERLAP: f64 = 0.8;
const TIE_MARGIN: f64 = 1e-3;
const MAX_HALVINGS: u32 = 3;

/// Memoized spectra keyed by the loop angle in units of the finest step.
struct SpectrumCache<'a> {
    solver: &'a ResonanceSolver,
    spec: LoopSpec,
    ticks_per_cycle: i64,
    spectra: HashMap<i64, Vec<Resonance>>,
}

impl SpectrumCache<'_> {
    fn beta(&self, tick: i64) -> f64 {
        TAU * tick as f64 / self.ticks_per_cycle as f64
    }

    fn states(&mut self, tick: i64) -> Result<&Vec<Resonance>> {
        let key = tick.rem_euclid(self.ticks_per_cycle);
        if !self.spectra.contains_key(&key) {
            let slice = self.solver.solve(&self.spec.params_at(self.beta(key)), 4)?;
            self.spectra.insert(key, slice.replicas);
        }
        Ok(&self.spectra[&key])
    }
}

#[derive(Clone)]
struct TrackState {
    vectors: [Array1<Complex64>; 2],
    eigenvalues: [Complex64; 2],
}

/// Matches both tracks into `cands`; `None` when continuity is not clear-cut.
fn match_step(prev: &TrackState, cands: &[Resonance]) -> Option<TrackState> {
    let mut picks = [0usize; 2];
    for t in 0..2 {
        let mut ovs: Vec<(usize, f64)> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| (i, overlap_vectors(prev.vectors[t].view(), c.right_vector.view()).unwrap_or(0.0)))
            .collect();
        ovs.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (best, o) = *ovs.first()?;
        if o < CONTINUITY_OVERLAP || ovs.get(1).is_some_and(|s| o - s.1 < TIE_MARGIN) {
            return None;
        }
        picks[t] = best;
    }
    if picks[0] == picks[1] {
        return None;
    }
    let mut next = prev.clone();
    for t in 0..2 {
        let c = &cands[picks[t]];
        let mut v = c.right_vector.clone();
        // c-normalized vectors carry a sign ambiguity; fix it by continuity
        if crate::eigen::h_dot(prev.vectors[t].view(), v.view()).re < 0.0 {
            v.mapv_inplace(|z| -z);
        }
        next.vectors[t] = v;
        next.eigenvalues[t] = c.eigenvalue;
    }
    Some(next)
}

/// Continues the pair from tick `a` to tick `b`, subdividing on failure.
fn advance(cache: &mut SpectrumCache, state: &TrackState, a: i64, b: i64, depth: u32, refinements: &mut usize) -> Result<TrackState> {
    let cands = cache.states(b)?;
    if let Some(next) = match_step(state, cands) {
        return Ok(next);
    }
    if depth == MAX_HALVINGS || (b - a).abs() < 2 {
        let best = cands
            .iter()
            .map(|c| overlap_vectors(state.vectors[0].view(), c.right_vector.view()).unwrap_or(0.0))
            .fold(0.0, f64::max);
        return Err(Error::Continuity {
            beta_from: cache.beta(a),
            beta_to: cache.beta(b),
            overlap: best,
        });
    }
    *refinements += 1;
    let mid = (a + b) / 2;
    let half = advance(cache, state, a, mid, depth + 1, refinements)?;
    advance(cache, &half, mid, b, depth + 1, refinements)
}

fn sign_of(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

/// Runs the loop `spec.cycles` times and classifies the exchange.
pub fn run_loop(solver: &ResonanceSolver, spec: &LoopSpec) -> Result<LoopTrace> {
    spec.validate()?;
    let sub = 1i64 << MAX_HALVINGS;
    let mut cache = SpectrumCache {
        solver,
        spec: *spec,
        ticks_per_cycle: spec.steps as i64 * sub,
        spectra: HashMap::new(),
    };
    let start = solver.solve(&spec.params_at(0.0), 4)?;
    let (a, b) = start.tracked_pair()?;
    let mut init = TrackState {
        vectors: [a.right_vector.clone(), b.right_vector.clone()],
        eigenvalues: [a.eigenvalue, b.eigenvalue],
    };
    cache.spectra.insert(0, start.replicas.clone());
    let component_index = init.vectors[0]
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut refinements = 0usize;
    let mut states = vec![init.clone()];
    let mut betas = vec![0.0];
    let total = spec.steps * spec.cycles;
    for k in 0..total {
        let (ta, tb) = (k as i64 * sub, (k as i64 + 1) * sub);
        let next = advance(&mut cache, states.last().unwrap(), ta, tb, 0, &mut refinements)?;
        states.push(next);
        betas.push(cache.beta(tb));
    }

    let image_after = |st: &TrackState, init: &TrackState| -> CycleImage {
        let mut image = [0usize; 2];
        let mut sign = [1i8; 2];
        for t in 0..2 {
            let o: Vec<f64> = (0..2)
                .map(|s| overlap_vectors(st.vectors[t].view(), init.vectors[s].view()).unwrap_or(0.0))
                .collect();
            image[t] = if o[0] >= o[1] { 0 } else { 1 };
            sign[t] = sign_of(c_dot(st.vectors[t].view(), init.vectors[image[t]].view()).re);
        }
        CycleImage { cycles: 0, image, sign }
    };

    // Orient the initial Ψ₂ so that one cycle maps Ψ₁ onto −Ψ₂ when the pair
    // is exchanged; the sign of the other track is then gauge invariant.
    let first = image_after(&states[spec.steps], &init);
    if first.image[0] == 1 && first.sign[0] == 1 {
        for st in states.iter_mut() {
            st.vectors[1].mapv_inplace(|z| -z);
        }
        init.vectors[1].mapv_inplace(|z| -z);
    }
    let cycle_images: Vec<CycleImage> = (1..=spec.cycles)
        .map(|c| CycleImage {
            cycles: c,
            ..image_after(&states[c * spec.steps], &init)
        })
        .collect();
    let permutation = if cycle_images[0].image == [1, 0] {
        Permutation::Swap
    } else {
        Permutation::Identity
    };

    let tol = 1e-9;
    let closure_cycles = (1..=spec.cycles).find(|&c| {
        let end = &states[c * spec.steps];
        (0..2).all(|t| (end.eigenvalues[t] - init.eigenvalues[t]).norm() < tol * init.eigenvalues[t].norm().max(1.0))
    });

    let eigenvalue_tracks = [0, 1].map(|t| states.iter().map(|s| s.eigenvalues[t]).collect::<Vec<_>>());
    let component_tracks = [0, 1].map(|t| states.iter().map(|s| s.vectors[t][component_index]).collect::<Vec<_>>());
    let one_cycle = spec.steps.min(eigenvalue_tracks[0].len() - 1);
    let tracks_disjoint = permutation == Permutation::Identity
        && !polylines_intersect(&eigenvalue_tracks[0][..=one_cycle], &eigenvalue_tracks[1][..=one_cycle]);

    Ok(LoopTrace {
        spec: *spec,
        beta_samples: betas,
        eigenvalue_tracks,
        component_tracks,
        component_index,
        encloses_ep: permutation == Permutation::Swap,
        permutation,
        cycle_images,
        closure_cycles,
        tracks_disjoint,
        solves: cache.spectra.len(),
        refinements,
    })
}

fn segments_intersect(p1: Complex64, p2: Complex64, q1: Complex64, q2: Complex64) -> bool {
    let cross = |a: Complex64, b: Complex64| a.re * b.im - a.im * b.re;
    let d1 = cross(q2 - q1, p1 - q1);
    let d2 = cross(q2 - q1, p2 - q1);
    let d3 = cross(p2 - p1, q1 - p1);
    let d4 = cross(p2 - p1, q2 - p1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Whether two polylines in the complex plane cross each other.
pub fn polylines_intersect(a: &[Complex64], b: &[Complex64]) -> bool {
    a.windows(2)
        .any(|s| b.windows(2).any(|t| segments_intersect(s[0], s[1], t[0], t[1])))
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopFamilyReport {
    pub encloses: Vec<bool>,
    pub swaps: usize,
    /// For each adjacent pair `(i, i+1)`: whether continuing the tracks along
    /// the straight segment between the loops' starting points exchanges them.
    pub interchanges: Vec<bool>,
    pub traces: Vec<LoopTrace>,
}

/// Continues the two states of `from` along a straight parameter segment and
/// reports whether they arrive exchanged relative to the stability ordering at `to`.
pub fn segment_exchanges(solver: &ResonanceSolver, from: &LatticeParams, to: &LatticeParams, steps: usize) -> Result<bool> {
    let s0 = solver.solve(from, 4)?;
    let (a, b) = s0.tracked_pair()?;
    let mut state = TrackState {
        vectors: [a.right_vector.clone(), b.right_vector.clone()],
        eigenvalues: [a.eigenvalue, b.eigenvalue],
    };
    let [c0, c1] = [from.coordinates(), to.coordinates()];
    let mut last = None;
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let c: [f64; 3] = std::array::from_fn(|i| c0[i] + t * (c1[i] - c0[i]));
        let slice = solver.solve(&LatticeParams::from_coordinates(c), 4)?;
        state = match_step(&state, &slice.replicas).ok_or(Error::Continuity {
            beta_from: (k - 1) as f64 / steps as f64,
            beta_to: t,
            overlap: f64::NAN,
        })?;
        last = Some(slice);
    }
    let end = last.ok_or_else(|| Error::input("segment needs at least one step"))?;
    let (e1, _) = end.tracked_pair()?;
    Ok(overlap_vectors(state.vectors[0].view(), e1.right_vector.view())? < 0.5)
}

pub fn classify_loop_family(solver: &ResonanceSolver, specs: &[LoopSpec]) -> Result<LoopFamilyReport> {
    if specs.len() < 2 {
        return Err(Error::input("a loop family needs at least two loops"));
    }
    let traces: Vec<LoopTrace> = specs
        .par_iter()
        .map(|s| run_loop(solver, s))
        .collect::<Result<_>>()?;
    let interchanges = specs
        .windows(2)
        .map(|w| segment_exchanges(solver, &w[0].params_at(0.0), &w[1].params_at(0.0), 16))
        .collect::<Result<Vec<_>>>()?;
    let encloses: Vec<bool> = traces.iter().map(|t| t.encloses_ep).collect();
    Ok(LoopFamilyReport {
        swaps: encloses.iter().filter(|e| **e).count(),
        encloses,
        interchanges,
        traces,
    })
}

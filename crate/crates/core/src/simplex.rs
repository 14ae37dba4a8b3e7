//! Nelder-Mead downhill simplex for small, possibly non-smooth objectives.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Initial edge length along each coordinate.
    pub initial_edge: f64,
    pub max_iterations: usize,
    /// Convergence requires the simplex diameter below this...
    pub x_tol: f64,
    /// ...and the best objective value below this.
    pub f_tol: f64,
    /// Rebuilds of the simplex around the best vertex after it stagnates.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_edge: 0.05,
            max_iterations: 400,
            x_tol: 1e-5,
            f_tol: 1e-6,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub diameter: f64,
    /// Diameter and objective tolerances both met.
    pub converged: bool,
}

struct Simplex {
    pts: Vec<Vec<f64>>,
    vals: Vec<f64>,
}

impl Simplex {
    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.vals.len()).collect();
        idx.sort_by(|&a, &b| self.vals[a].total_cmp(&self.vals[b]));
        self.pts = idx.iter().map(|&i| self.pts[i].clone()).collect();
        self.vals = idx.iter().map(|&i| self.vals[i]).collect();
    }

    fn diameter(&self) -> f64 {
        let best = &self.pts[0];
        self.pts[1..]
            .iter()
            .map(|p| p.iter().zip(best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Below this diameter the simplex has collapsed to rounding level and counts
/// as stagnated even if the objective is still above `f_tol`.
const STALL_DIAMETER: f64 = 1e-13;

/// `a + t (b − a)`
fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Minimizes `f` from `x0`. Failed evaluations count as `+∞`.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::input("simplex needs at least one free coordinate"));
    }
    let evaluations = Cell::new(0usize);
    let mut eval = |x: &[f64]| -> f64 {
        evaluations.set(evaluations.get() + 1);
        match f(x) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                log::debug!("objective failed at {x:?}: {e}");
                f64::INFINITY
            }
        }
    };

    let build = |center: &[f64], eval: &mut dyn FnMut(&[f64]) -> f64| {
        let mut pts = vec![center.to_vec()];
        for i in 0..n {
            let mut p = center.to_vec();
            p[i] += opts.initial_edge;
            pts.push(p);
        }
        let vals = pts.iter().map(|p| eval(p)).collect();
        Simplex { pts, vals }
    };

    let mut s = build(x0, &mut eval);
    if s.vals.iter().all(|v| v.is_infinite()) {
        return Err(Error::input("objective is undefined on the whole initial simplex"));
    }
    let mut restarts_left = opts.restarts;
    let mut iterations = 0;
    loop {
        s.order();
        let diameter = s.diameter();
        let converged = diameter < opts.x_tol && s.vals[0] < opts.f_tol;
        if converged || diameter < STALL_DIAMETER {
            if converged || restarts_left == 0 {
                return Ok(NelderMeadReport {
                    x: s.pts[0].clone(),
                    f: s.vals[0],
                    iterations,
                    evaluations: evaluations.get(),
                    diameter,
                    converged,
                });
            }
            restarts_left -= 1;
            let best = s.pts[0].clone();
            s = build(&best, &mut eval);
            continue;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::MaxIterations { iterations });
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|i| s.pts[..n].iter().map(|p| p[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = s.pts[n].clone();
        let xr = lerp(&centroid, &worst, -opts.reflection);
        let fr = eval(&xr);
        if fr < s.vals[0] {
            let xe = lerp(&centroid, &worst, -opts.reflection * opts.expansion);
            let fe = eval(&xe);
            (s.pts[n], s.vals[n]) = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < s.vals[n - 1] {
            (s.pts[n], s.vals[n]) = (xr, fr);
            continue;
        }
        // outside contraction when the reflected point beats the worst vertex
        let xc = if fr < s.vals[n] {
            lerp(&centroid, &xr, opts.contraction)
        } else {
            lerp(&centroid, &worst, opts.contraction)
        };
        let fc = eval(&xc);
        if fc < fr.min(s.vals[n]) {
            (s.pts[n], s.vals[n]) = (xc, fc);
            continue;
        }
        let best = s.pts[0].clone();
        for i in 1..=n {
            s.pts[i] = lerp(&best, &s.pts[i], opts.shrink);
            s.vals[i] = eval(&s.pts[i]);
        }
    }
}

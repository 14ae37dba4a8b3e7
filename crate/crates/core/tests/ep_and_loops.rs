use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsep_core::{
    find_ep, run_loop, trace_ep_curve, Coordinate, EPCandidate, EpConfig, GridSpec, LatticeParams, LoopSpec,
    Permutation, ResonanceSolver, SolverConfig,
};

fn solver() -> &'static ResonanceSolver {
    static S: OnceLock<ResonanceSolver> = OnceLock::new();
    S.get_or_init(|| ResonanceSolver::new(GridSpec::default(), SolverConfig::default()).unwrap())
}

fn reference_ep() -> &'static EPCandidate {
    static EP: OnceLock<EPCandidate> = OnceLock::new();
    EP.get_or_init(|| {
        let c = find_ep(solver(), &LatticeParams::new(3.8, 1.0, -3.0), &[Coordinate::Delta], &EpConfig::default())
            .unwrap();
        assert!(c.certified);
        c
    })
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn certified_candidates_meet_every_threshold() {
    let c = reference_ep();
    let cfg = EpConfig::default();
    assert!(c.gap < cfg.gap_tol);
    assert!(c.overlap_s > cfg.overlap_tol);
    assert!(c.petermann_min > cfg.petermann_tol);
}

#[test]
fn perturbed_seeds_converge_to_the_same_point() {
    let ep = reference_ep().coordinates();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut hits = 0;
    for _ in 0..10 {
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let guess = LatticeParams::new(ep[0] + 0.1 * a.cos(), 1.0, ep[2] + 0.1 * a.sin());
        let Ok(c) = find_ep(solver(), &guess, &[Coordinate::Delta], &EpConfig::default()) else {
            continue;
        };
        let x = c.coordinates();
        if c.certified && (x[0] - ep[0]).abs() < 1e-4 && (x[2] - ep[2]).abs() < 1e-4 {
            hits += 1;
        }
    }
    assert!(hits >= 9, "{hits} of 10 seeds reached the reference point");
}

#[test]
fn reversed_shell_step_returns_to_the_previous_point() {
    let cfg = EpConfig::default();
    let r = cfg.shell_radius;
    let forward = trace_ep_curve(solver(), reference_ep(), r, 3, None, &cfg).unwrap();
    assert!(forward.points.len() >= 3, "{:?}", forward.termination_reason);
    let prev = forward.points[1].coordinates();
    let last = &forward.points[2];
    let x = last.coordinates();
    let back = [(prev[0] - x[0]) / r, (prev[1] - x[1]) / r, (prev[2] - x[2]) / r];
    let reverse = trace_ep_curve(solver(), last, r, 2, Some(back), &cfg).unwrap();
    let returned = reverse.points[1].coordinates();
    assert!(dist(returned, prev) < r / 10.0, "missed by {:e}", dist(returned, prev));
}

fn enclosing_loop() -> LoopSpec {
    LoopSpec {
        steps: 64,
        cycles: 1,
        ..LoopSpec::new(reference_ep().params, 0.3)
    }
}

#[test]
fn loop_orientation_does_not_change_the_permutation() {
    let forward = run_loop(solver(), &enclosing_loop()).unwrap();
    let backward = run_loop(
        solver(),
        &LoopSpec {
            reversed: true,
            ..enclosing_loop()
        },
    )
    .unwrap();
    assert_eq!(forward.permutation, Permutation::Swap);
    assert_eq!(backward.permutation, forward.permutation);
}

#[test]
fn eigenvalue_tracks_move_without_jumps() {
    let trace = run_loop(solver(), &enclosing_loop()).unwrap();
    for track in &trace.eigenvalue_tracks {
        let mut jumps: Vec<f64> = track.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let max = jumps.iter().cloned().fold(0.0, f64::max);
        jumps.sort_by(f64::total_cmp);
        let median = jumps[jumps.len() / 2];
        assert!(max < 5.0 * median, "max jump {max:e}, median {median:e}");
    }
}

/// Winding number of a closed track around the centroid of the area it encloses.
fn winding(track: &[Complex64]) -> f64 {
    let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for w in track.windows(2) {
        let cross = w[0].re * w[1].im - w[1].re * w[0].im;
        area += cross / 2.0;
        cx += (w[0].re + w[1].re) * cross;
        cy += (w[0].im + w[1].im) * cross;
    }
    let centre = Complex64::new(cx, cy) / (6.0 * area);
    let total: f64 = track.windows(2).map(|w| ((w[1] - centre) / (w[0] - centre)).arg()).sum();
    total / std::f64::consts::TAU
}

#[test]
fn loop_away_from_the_ep_winds_each_eigenvalue_once() {
    let spec = LoopSpec {
        offset_inv_field: 0.6,
        ..enclosing_loop()
    };
    let trace = run_loop(solver(), &spec).unwrap();
    assert_eq!(trace.permutation, Permutation::Identity);
    assert!(trace.tracks_disjoint);
    for track in &trace.eigenvalue_tracks {
        let n = winding(track);
        assert!((n.abs() - 1.0).abs() < 0.05, "winding {n}");
    }
}

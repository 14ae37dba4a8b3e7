//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wsep_core::braid::{run_loop, LoopSpec, Permutation};
use wsep_core::eigen::eig_dense;
use wsep_core::ep::{certify_seeds, find_ep, scan_gap_plane, Coordinate, EPCandidate, EpConfig, ScanAxis};
use wsep_core::gpe::{crossing_scan, CrossingScan, CrossingType, NonlinearConfig};
use wsep_core::lattice::{GridSpec, LatticeParams};
use wsep_core::resonance::{petermann_vector, select_cap_strength, ResonanceSolver, SolverConfig, SpectrumSlice};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn solver() -> &'static ResonanceSolver {
    static S: OnceLock<ResonanceSolver> = OnceLock::new();
    S.get_or_init(|| ResonanceSolver::new(GridSpec::default(), SolverConfig::default()).unwrap())
}

/// First EP at δ = 1, shared by criteria 1 and 6.
fn first_ep() -> &'static (Result<EPCandidate, String>, f64) {
    static EP: OnceLock<(Result<EPCandidate, String>, f64)> = OnceLock::new();
    EP.get_or_init(|| {
        let t = Instant::now();
        let r = find_ep(solver(), &LatticeParams::new(3.8, 1.0, -3.0), &[Coordinate::Delta], &EpConfig::default());
        (r.map_err(|e| e.to_string()), t.elapsed().as_secs_f64())
    })
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn criterion_1() -> Outcome {
    let (r, secs) = first_ep();
    match r {
        Ok(c) => {
            let [f, _, phi] = c.coordinates();
            let ok = c.certified && (f - 3.769).abs() <= 0.05 && (phi + 2.991).abs() <= 0.05 && *secs <= 300.0;
            outcome(
                ok,
                format!(
                    "1/F = {f:.5}, phi = {phi:.5}, gap {:.1e}, S {:.6}, K {:.1e}, certified {}, {:.0} s",
                    c.gap, c.overlap_s, c.petermann_min, c.certified, secs
                ),
            )
        }
        Err(e) => outcome(false, e.clone()),
    }
}

fn criterion_2() -> Outcome {
    let r = find_ep(solver(), &LatticeParams::new(6.5, 1.0, -2.3), &[Coordinate::Delta], &EpConfig::default());
    match r {
        Ok(c) => {
            let [f, _, phi] = c.coordinates();
            let ok = c.certified && (f - 6.662).abs() <= 0.08 && (phi + 2.228).abs() <= 0.05;
            outcome(
                ok,
                format!("1/F = {f:.5}, phi = {phi:.5}, gap {:.1e}, certified {}", c.gap, c.certified),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn pair(s: &SpectrumSlice) -> [(f64, f64); 2] {
    let (a, b) = s.tracked_pair().unwrap();
    [(a.energy, a.gamma), (b.energy, b.gamma)]
}

fn criterion_3() -> Outcome {
    let s = solver();
    let a = match s.solve(&LatticeParams::new(3.814, 2.251, -3.035), 2) {
        Ok(x) => pair(&x),
        Err(e) => return outcome(false, e.to_string()),
    };
    let b = match s.solve(&LatticeParams::new(3.000, 2.251, -3.141), 2) {
        Ok(x) => pair(&x),
        Err(e) => return outcome(false, e.to_string()),
    };
    let pairwise = (a[0].0 - a[1].0).abs() < 1e-3 && (a[0].1 - a[1].1).abs() < 1e-3;
    let first = a.iter().all(|&(e, g)| rel(e, 0.1538) <= 0.05 && rel(g, 0.07427) <= 0.05);
    let second = rel(b[0].0, 0.2561) <= 0.05
        && rel(b[0].1, 0.02961) <= 0.10
        && rel(b[1].0, 0.1858) <= 0.05
        && rel(b[1].1, 0.1361) <= 0.10;
    outcome(
        pairwise && first && second,
        format!(
            "(3.814): E {:.5}/{:.5} G {:.5}/{:.5} pairwise {} values {}; (3.000): E1 {:.5} G1 {:.5} E2 {:.5} G2 {:.5} values {}",
            a[0].0, a[1].0, a[0].1, a[1].1, pairwise, first, b[0].0, b[0].1, b[1].0, b[1].1, second
        ),
    )
}

/// Random parameters whose tracked pair is well separated.
fn off_resonant(rng: &mut ChaCha8Rng) -> (LatticeParams, SpectrumSlice) {
    loop {
        let p = LatticeParams::new(rng.random_range(3.0..7.0), rng.random_range(0.3..2.0), rng.random_range(-PI..PI));
        if let Ok(s) = solver().solve(&p, 4) {
            if let Ok((a, b)) = s.tracked_pair() {
                if (a.eigenvalue - b.eigenvalue).norm() > 0.02 {
                    return (p, s);
                }
            }
        }
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = solver();
    let mut worst_ladder: f64 = 0.0;
    let mut worst_flip: f64 = 0.0;
    for _ in 0..5 {
        let (p, slice) = off_resonant(&mut rng);
        match s.ladder_covariance(&slice, 0) {
            Ok(c) => worst_ladder = worst_ladder.max(c.relative_error),
            Err(_) => worst_ladder = f64::INFINITY,
        }
        // δ → −δ with an odd translation: every representative must reappear
        // shifted by an odd multiple of 2πF
        let flipped = match s.solve(&LatticeParams { delta: -p.delta, ..p }, 4) {
            Ok(x) => x,
            Err(_) => {
                worst_flip = f64::INFINITY;
                continue;
            }
        };
        let spacing = p.ladder_spacing();
        for r in slice.resonances.iter().take(2) {
            let best = flipped
                .replicas
                .iter()
                .filter_map(|q| {
                    let k = ((q.energy - r.energy) / spacing).round();
                    if (k as i64).rem_euclid(2) != 1 {
                        return None;
                    }
                    let target = r.eigenvalue + Complex64::new(k * spacing, 0.0);
                    Some((q.eigenvalue - target).norm() / target.norm())
                })
                .fold(f64::INFINITY, f64::min);
            worst_flip = worst_flip.max(best);
        }
    }
    outcome(
        worst_ladder < 1e-4 && worst_flip < 1e-4,
        format!("translation covariance max rel. error {worst_ladder:.2e}; delta-flip odd-translation max rel. error {worst_flip:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let s = solver();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for d in [0.25, 0.5, 1.0] {
        let plus = s.solve(&LatticeParams::new(5.0, d, 0.0), 4);
        let minus = s.solve(&LatticeParams::new(5.0, -d, 0.0), 4);
        match (plus, minus) {
            (Ok(a), Ok(b)) if !a.miniladder_offsets.is_empty() && !b.miniladder_offsets.is_empty() => {
                let sum = a.miniladder_offsets[0] + b.miniladder_offsets[0];
                worst = worst.max(sum.abs());
                parts.push(format!("delta {d}: {:+.4e} {:+.4e}", a.miniladder_offsets[0], b.miniladder_offsets[0]));
            }
            _ => {
                worst = f64::INFINITY;
                parts.push(format!("delta {d}: no offsets"));
            }
        }
    }
    outcome(worst < 1e-6, format!("max |E(d)+E(-d)| = {worst:.3e} [{}]", parts.join("; ")))
}

const EIGHT_PI: [([usize; 2], [i8; 2]); 4] = [([1, 0], [-1, 1]), ([0, 1], [-1, -1]), ([1, 0], [1, -1]), ([0, 1], [1, 1])];

fn criterion_6() -> Outcome {
    let centre = match &first_ep().0 {
        Ok(c) => c.params,
        Err(e) => return outcome(false, format!("no EP: {e}")),
    };
    let mut spec = LoopSpec::new(centre, 0.3);
    spec.steps = 64;
    spec.cycles = 4;
    let enc = match run_loop(solver(), &spec) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("enclosing loop: {e}")),
    };
    let pattern: Vec<([usize; 2], [i8; 2])> = enc.cycle_images.iter().map(|c| (c.image, c.sign)).collect();
    let enc_ok = enc.permutation == Permutation::Swap && enc.closure_cycles == Some(2) && pattern == EIGHT_PI && enc.solves <= 256;
    let mut far = spec;
    far.offset_inv_field = 0.6;
    far.cycles = 2;
    let non = match run_loop(solver(), &far) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("non-enclosing loop: {e}")),
    };
    let non_ok = non.permutation == Permutation::Identity && non.closure_cycles == Some(1) && non.tracks_disjoint && non.solves <= 256;
    outcome(
        enc_ok && non_ok,
        format!(
            "enclosing: {:?}, closure {:?}, pattern {:?}, {} solves; offset: {:?}, closure {:?}, disjoint {}, {} solves",
            enc.permutation, enc.closure_cycles, pattern, enc.solves, non.permutation, non.closure_cycles, non.tracks_disjoint, non.solves
        ),
    )
}

fn criterion_7() -> Outcome {
    let s = solver();
    let invs: Vec<f64> = (0..=120).map(|i| 3.469 + 0.005 * i as f64).collect();
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_rescale: f64 = 0.0;
    let mut k_min = f64::INFINITY;
    for &inv in &invs {
        let slice = match s.solve(&LatticeParams::new(inv, 1.0, -2.991), 2) {
            Ok(x) => x,
            Err(e) => return outcome(false, format!("1/F = {inv}: {e}")),
        };
        let (a, b) = slice.tracked_pair().unwrap();
        let ks = [a.petermann(), b.petermann()];
        for (r, k) in [a, b].iter().zip(ks) {
            let c = Complex64::from_polar(rng.random_range(0.01..100.0), rng.random_range(-PI..PI));
            let kr = petermann_vector(r.right_vector.mapv(|z| z * c).view());
            worst_rescale = worst_rescale.max(((kr - k) / k).abs());
            k_min = k_min.min(k);
        }
        rows.push((inv, ks[0], ks[1]));
    }
    let peak = rows.iter().copied().max_by(|x, y| x.1.min(x.2).total_cmp(&y.1.min(y.2))).unwrap();
    let near = |target: f64| rows.iter().copied().min_by(|x, y| (x.0 - target).abs().total_cmp(&(y.0 - target).abs())).unwrap();
    let (lo, hi) = (near(peak.0 - 0.2), near(peak.0 + 0.2));
    let ok = peak.1 > 1e3 && peak.2 > 1e3 && [lo, hi].iter().all(|r| r.1 < 50.0 && r.2 < 50.0) && k_min >= 1.0 && worst_rescale < 1e-12;
    outcome(
        ok,
        format!(
            "peak at 1/F = {:.3}: K = {:.3e}, {:.3e}; at {:.3}: {:.1}, {:.1}; at {:.3}: {:.1}, {:.1}; min K {:.4}; rescaling error {:.1e}",
            peak.0, peak.1, peak.2, lo.0, lo.1, lo.2, hi.0, hi.1, hi.2, k_min, worst_rescale
        ),
    )
}

fn criterion_8() -> Outcome {
    let s = solver();
    let cfg = EpConfig::default();
    let tpl = LatticeParams::new(3.0, 0.0, 0.0);
    let axes = [
        ScanAxis {
            coordinate: Coordinate::InvField,
            min: 1.0,
            max: 12.0,
            count: 56,
        },
        ScanAxis {
            coordinate: Coordinate::Phi,
            min: -3.0,
            max: 3.0,
            count: 2,
        },
    ];
    let scan = match scan_gap_plane(s, &tpl, (Coordinate::Delta, 0.0), axes, &cfg) {
        Ok(x) => x,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut certified = certify_seeds(s, &tpl, &scan, &[Coordinate::Phi], &cfg)
        .into_iter()
        .filter(|r| r.as_ref().is_ok_and(|c| c.certified))
        .count();
    // also polish the smallest gap of the whole scan
    let inv = axes[0].values();
    let (mut best, mut at) = (f64::INFINITY, 0);
    for (i, row) in scan.gaps.iter().enumerate() {
        if row[0] < best {
            (best, at) = (row[0], i);
        }
    }
    let finite = scan.gaps.iter().flatten().filter(|g| g.is_finite()).count();
    let mut polished = String::from("none");
    if best.is_finite() {
        match find_ep(s, &LatticeParams::new(inv[at], 0.0, -3.0), &[Coordinate::Delta, Coordinate::Phi], &cfg) {
            Ok(c) => {
                certified += c.certified as usize;
                polished = format!("1/F = {:.4}, gap {:.3e}", c.coordinates()[0], c.gap);
            }
            Err(e) => polished = format!("failed ({e})"),
        }
    }
    outcome(
        certified == 0 && finite > 0,
        format!(
            "{} seeds, {certified} certified; {finite} finite cells, smallest gap {best:.4} at 1/F = {:.2}; polished minimum {polished}",
            scan.seeds.len(),
            inv[at]
        ),
    )
}

fn criterion_9() -> Outcome {
    let s = solver();
    let cfg = NonlinearConfig::default();
    let fields: Vec<f64> = (0..21).map(|i| 0.255 + 0.001 * i as f64).collect();
    let run = |g: f64| -> Result<CrossingScan, String> { crossing_scan(s, &LatticeParams::new(3.769, 1.0, -2.991).with_g(g), &fields, &cfg).map_err(|e| e.to_string()) };
    let (zero, rep, att) = match (run(0.0), run(0.02), run(-0.02)) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (a, b, c) => return outcome(false, format!("scan failed: {:?} {:?} {:?}", a.err(), b.err(), c.err())),
    };
    let kinds = [zero.report.kind, rep.report.kind, att.report.kind];
    let peaks = [zero.petermann_peak(), rep.petermann_peak(), att.petermann_peak()];
    let kinds_ok = kinds == [CrossingType::Degenerate, CrossingType::TypeI, CrossingType::TypeII];
    let shift_ok = match peaks {
        [Some(p0), Some(pp), Some(pm)] => pp.0 > p0.0 && pm.0 < p0.0,
        _ => false,
    };
    let f = |p: Option<(f64, f64)>| p.map_or("none".to_string(), |(f, k)| format!("F = {f:.5} (K {k:.2e})"));
    outcome(
        kinds_ok && shift_ok,
        format!(
            "g=0: {:?} (min dM {:.1e}, min dG {:.1e}); g=+0.02: {:?} (min dM {:.1e}); g=-0.02: {:?} (min dG {:.1e}); Petermann peaks {} / {} / {}",
            kinds[0],
            zero.report.closest_approach_real,
            zero.report.closest_approach_imag,
            kinds[1],
            rep.report.closest_approach_real,
            kinds[2],
            att.report.closest_approach_imag,
            f(peaks[0]),
            f(peaks[1]),
            f(peaks[2])
        ),
    )
}

fn criterion_10() -> Outcome {
    let grid = GridSpec::default();
    let cfg = SolverConfig::default();
    let points = [LatticeParams::new(3.814, 2.251, -3.035), LatticeParams::new(5.0, 1.0, 0.0), LatticeParams::new(3.769, 1.0, -2.991)];
    let herm = ResonanceSolver::new(grid.with_cap_strength(0.0), cfg).unwrap();
    let mut herm_worst: f64 = 0.0;
    let mut res_worst: f64 = 0.0;
    let mut plateau_worst: f64 = 0.0;
    let mut refine_worst: f64 = 0.0;
    let fine = ResonanceSolver::new(
        GridSpec {
            points_per_period: 2 * grid.points_per_period,
            ..grid
        },
        cfg,
    )
    .unwrap();
    for p in &points {
        let h = herm.hamiltonian(p, None).unwrap();
        match eig_dense(&h) {
            Ok(pairs) => {
                herm_worst = pairs.values.iter().map(|z| z.im.abs() / z.norm().max(1.0)).fold(herm_worst, f64::max);
            }
            Err(_) => herm_worst = f64::INFINITY,
        }
        let (Ok(coarse), Ok(refined)) = (solver().solve(p, 5), fine.solve(p, 5)) else {
            return outcome(false, format!("solve failed at {:?}", p.coordinates()));
        };
        res_worst = coarse.replicas.iter().map(|r| r.residual).fold(res_worst, f64::max);
        for r in coarse.replicas.iter().take(5) {
            let d = refined.replicas.iter().map(|q| (q.eigenvalue - r.eigenvalue).norm()).fold(f64::INFINITY, f64::min);
            refine_worst = refine_worst.max(d);
        }
        match select_cap_strength(p, &grid, &cfg) {
            Ok(sel) => {
                let a = ResonanceSolver::new(grid.with_cap_strength(sel.eta), cfg).and_then(|x| x.solve(p, 2));
                let b = ResonanceSolver::new(grid.with_cap_strength(2.0 * sel.eta), cfg).and_then(|x| x.solve(p, 2));
                match (a, b) {
                    (Ok(a), Ok(b)) => {
                        for (x, y) in a.resonances.iter().zip(&b.resonances).take(2) {
                            plateau_worst = plateau_worst.max(rel(y.gamma, x.gamma));
                        }
                    }
                    _ => plateau_worst = f64::INFINITY,
                }
            }
            Err(_) => plateau_worst = f64::INFINITY,
        }
    }
    let ok = herm_worst < 1e-12 && res_worst < 1e-8 && plateau_worst < 0.01 && refine_worst < 1e-4;
    outcome(
        ok,
        format!(
            "hermitian |Im|/|E| {herm_worst:.1e}; residual {res_worst:.1e}; plateau {plateau_worst:.2e}; refinement {refine_worst:.2e}"
        ),
    )
}

fn main() {
    // the harness flags (--nocapture, test filters) are accepted and ignored
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 EP regression (delta=1)", criterion_1),
        ("2 second EP (delta=1)", criterion_2),
        ("3 table reproduction", criterion_3),
        ("4 ladder covariance", criterion_4),
        ("5 miniladder antisymmetry", criterion_5),
        ("6 braid", criterion_6),
        ("7 Petermann divergence", criterion_7),
        ("8 monochromatic exclusion", criterion_8),
        ("9 nonlinear crossing flip", criterion_9),
        ("10 solver soundness", criterion_10),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let o = f();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!("criterion {name}: {tag} ({:.1} s) {}", t.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

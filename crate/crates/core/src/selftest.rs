//! Fast end-to-end invariant checks run by `wsep selftest`.

use num_complex::Complex64;
use serde::Serialize;

use crate::config::{parse_config, RunConfig};
use crate::ep::{scan_gap_plane, Coordinate, EpConfig, ScanAxis};
use crate::gpe::{classify_crossing, solve_nonlinear, NonlinearConfig};
use crate::io::to_json_line;
use crate::lattice::{potential_value, GridSpec, LatticeParams};
use crate::resonance::{overlap_vectors, petermann_vector, ResonanceSolver, SolverConfig};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    match f() {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

pub fn run() -> Vec<Check> {
    let p = LatticeParams::new(3.814, 2.251, -3.035);
    let grid = GridSpec::default();
    let solver = ResonanceSolver::new(grid, SolverConfig::default());
    let mut out = vec![
        check("config-defaults", || {
            ensure(parse_config("").map_err(|e| e.to_string())? == RunConfig::default(), "empty config differs from defaults")?;
            Ok("empty file gives defaults".into())
        }),
        check("config-round-trip", || {
            let c = RunConfig::default();
            let text = c.to_toml().map_err(|e| e.to_string())?;
            ensure(parse_config(&text).map_err(|e| e.to_string())? == c, "round trip changed the configuration")?;
            Ok(format!("{} bytes", text.len()))
        }),
        check("potential-symmetries", || {
            let q = LatticeParams::new(3.0, -p.delta, p.phi + std::f64::consts::PI);
            let mut worst: f64 = 0.0;
            for i in 0..50 {
                let x = -7.0 + 0.37 * i as f64;
                let v = potential_value(x, &p);
                worst = worst
                    .max((v - potential_value(x + 2.0 * std::f64::consts::PI, &p)).abs())
                    .max((v - potential_value(x, &q)).abs());
            }
            ensure(worst < 1e-13, format!("deviation {worst:.2e}"))?;
            Ok(format!("max deviation {worst:.2e}"))
        }),
        check("float-serialization", || {
            let x = 0.1_f64 + 0.2;
            let back: f64 = serde_json::from_str(&to_json_line(&x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure(back.to_bits() == x.to_bits(), "17-digit output does not round-trip")?;
            Ok("bit exact".into())
        }),
        check("crossing-label-symmetry", || {
            let scan: Vec<_> = (0..21)
                .map(|i| {
                    let f = 0.25 + 0.001 * i as f64;
                    let d = f - 0.26;
                    (f, Complex64::new(0.4 + (d * d + 1e-4).sqrt(), -0.05 - d), Complex64::new(0.4 - (d * d + 1e-4).sqrt(), -0.05 + d))
                })
                .collect();
            let swapped: Vec<_> = scan.iter().map(|&(f, a, b)| (f, b, a)).collect();
            let r1 = classify_crossing(&scan, 0.0, 1e-3).map_err(|e| e.to_string())?;
            let r2 = classify_crossing(&swapped, 0.0, 1e-3).map_err(|e| e.to_string())?;
            ensure(r1.kind == r2.kind, "verdict depends on labels")?;
            Ok(format!("{:?}", r1.kind))
        }),
    ];

    let solver = match solver {
        Ok(s) => s,
        Err(e) => {
            out.push(Check {
                name: "solver-construction",
                passed: false,
                detail: e.to_string(),
            });
            return out;
        }
    };
    out.push(check("hamiltonian-complex-symmetric", || {
        let h = solver.hamiltonian(&p, None).map_err(|e| e.to_string())?;
        let a = &h.entries;
        let asym = (a - &a.t()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        ensure(asym == 0.0, format!("asymmetry {asym:.2e}"))?;
        Ok(format!("dimension {}", h.dimension()))
    }));
    out.push(check("hermitian-limit", || {
        let herm = ResonanceSolver::new(grid.with_cap_strength(0.0), SolverConfig::default()).map_err(|e| e.to_string())?;
        let h = herm.hamiltonian(&p, None).map_err(|e| e.to_string())?;
        let pairs = crate::eigen::eig_dense(&h).map_err(|e| e.to_string())?;
        let worst = pairs.values.iter().map(|z| z.im.abs() / z.norm().max(1.0)).fold(0.0, f64::max);
        ensure(worst < 1e-12, format!("relative imaginary part {worst:.2e}"))?;
        Ok(format!("max relative imaginary part {worst:.2e}"))
    }));
    let slice = solver.solve(&p, 2);
    out.push(check("table-point-pair", || {
        let s = slice.as_ref().map_err(|e| e.to_string())?;
        let (a, b) = s.tracked_pair().map_err(|e| e.to_string())?;
        ensure(a.residual < 1e-8 && b.residual < 1e-8, "residual too large")?;
        Ok(format!("E = {:.5}, {:.5}; Gamma = {:.5}, {:.5}", a.energy, b.energy, a.gamma, b.gamma))
    }));
    out.push(check("petermann-rescaling", || {
        let s = slice.as_ref().map_err(|e| e.to_string())?;
        let v = &s.resonances[0].right_vector;
        let k = petermann_vector(v.view());
        let w = v.mapv(|z| z * Complex64::new(-2.7, 0.9));
        let k2 = petermann_vector(w.view());
        ensure(k >= 1.0 && ((k - k2) / k).abs() < 1e-12, format!("K = {k}, rescaled {k2}"))?;
        Ok(format!("K = {k:.4}"))
    }));
    out.push(check("overlap-phase-invariance", || {
        let s = slice.as_ref().map_err(|e| e.to_string())?;
        let v = &s.resonances[0].right_vector;
        let w = v.mapv(|z| z * Complex64::from_polar(3.0, 1.2));
        let o = overlap_vectors(v.view(), w.view()).map_err(|e| e.to_string())?;
        ensure((o - 1.0).abs() < 1e-12, format!("overlap {o}"))?;
        Ok(format!("overlap {o:.15}"))
    }));
    out.push(check("nonlinear-g0-is-linear", || {
        let s = slice.as_ref().map_err(|e| e.to_string())?;
        let seed = &s.resonances[0];
        let r = solve_nonlinear(&solver, &p, seed, &NonlinearConfig::default()).map_err(|e| e.to_string())?;
        ensure(r.iterations == 1 && r.mu == seed.eigenvalue, "g = 0 did not return the linear state")?;
        Ok("one iteration".into())
    }));
    out.push(check("inverted-scan-rejected", || {
        let axes = [
            ScanAxis {
                coordinate: Coordinate::InvField,
                min: 4.0,
                max: 3.0,
                count: 3,
            },
            ScanAxis {
                coordinate: Coordinate::Phi,
                min: -3.0,
                max: -2.0,
                count: 3,
            },
        ];
        let r = scan_gap_plane(&solver, &p, (Coordinate::Delta, 1.0), axes, &EpConfig::default());
        ensure(r.is_err(), "inverted range accepted")?;
        Ok("rejected".into())
    }));
    out
}

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use wsep_core::braid::run_loop;
use wsep_core::ep::{certify_seeds, find_ep, scan_gap_plane, trace_ep_curve, ScanAxis};
use wsep_core::gpe::{crossing_scan, pair_at, NonlinearResonance};
use wsep_core::io::{to_json_line, write_complex_dump, write_csv_file, JsonlWriter, RunManifest};
use wsep_core::resonance::select_cap_strength;
use wsep_core::{load_config, Coordinate, Error, LatticeParams, LoopSpec, Resonance, ResonanceSolver, RunConfig};

use crate::{Cli, Command, Point};

pub enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

pub fn defaults_help() -> String {
    let text = RunConfig::default().to_toml().unwrap_or_default();
    format!("Configuration defaults:\n\n{text}")
}

const THREADS_ENV: &str = "WSEP_THREADS";

fn thread_count(flag: Option<usize>) -> CmdResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => match flag {
            Some(0) => Err(Failure::Usage("--threads must be positive".into())),
            other => Ok(other),
        },
    }
}

/// Output directory plus the manifest that lists every file written.
struct Output {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Output {
    fn new(dir: &Path, manifest: RunManifest) -> CmdResult<Self> {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.add_output(name);
        self.dir.join(name)
    }

    fn jsonl(&mut self, name: &str, kind: &str) -> CmdResult<JsonlWriter<BufWriter<File>>> {
        let p = self.path(name);
        Ok(JsonlWriter::create(&p, kind)?)
    }

    fn finish(self) -> CmdResult {
        self.manifest.write(&self.dir)?;
        Ok(())
    }
}

/// Writes a record to the file and echoes it on stdout.
fn emit<T: Serialize>(w: &mut JsonlWriter<BufWriter<File>>, r: &T) -> CmdResult {
    w.record(r)?;
    println!("{}", to_json_line(r)?);
    Ok(())
}

fn point(cfg: &RunConfig, pt: &Point) -> LatticeParams {
    let mut p = cfg.lattice;
    if let Some(f) = pt.inv_field {
        p.field = 1.0 / f;
    }
    if let Some(d) = pt.delta {
        p.delta = d;
    }
    if let Some(phi) = pt.phi {
        p = p.with_phi(phi);
    }
    p
}

fn frozen(names: &[String]) -> CmdResult<Vec<Coordinate>> {
    names
        .iter()
        .filter(|s| !s.trim().is_empty() && s.trim() != "none")
        .map(|s| s.parse::<Coordinate>().map_err(|e| Failure::Usage(e.to_string())))
        .collect()
}

#[derive(Serialize)]
struct ResonanceRecord {
    alpha: usize,
    inv_field: f64,
    delta: f64,
    phi: f64,
    energy: f64,
    gamma: f64,
    site_index: i64,
    ladder_index: Option<usize>,
    cap_leakage: f64,
    peak_position: f64,
    residual: f64,
    petermann: f64,
    near_defective: bool,
    ambiguous_label: bool,
}

fn resonance_record(alpha: usize, p: &LatticeParams, r: &Resonance) -> ResonanceRecord {
    ResonanceRecord {
        alpha,
        inv_field: p.inv_field(),
        delta: p.delta,
        phi: p.phi,
        energy: r.energy,
        gamma: r.gamma,
        site_index: r.site_index,
        ladder_index: r.ladder_index,
        cap_leakage: r.cap_leakage,
        peak_position: r.peak_position,
        residual: r.residual,
        petermann: r.petermann(),
        near_defective: r.near_defective,
        ambiguous_label: r.ambiguous_label,
    }
}

#[derive(Serialize)]
struct NonlinearRecord {
    field: f64,
    track: usize,
    g: f64,
    chemical_potential: f64,
    gamma: f64,
    iterations: usize,
    residual: f64,
    verification_shift: f64,
    petermann: f64,
    normalization: &'static str,
}

fn nonlinear_record(field: f64, track: usize, s: &NonlinearResonance) -> NonlinearRecord {
    NonlinearRecord {
        field,
        track,
        g: s.g_used,
        chemical_potential: s.mu.re,
        gamma: s.gamma(),
        iterations: s.iterations,
        residual: s.residual,
        verification_shift: s.verification_shift,
        petermann: s.petermann(),
        normalization: "unit density per central period",
    }
}

pub fn run(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", path.display())),
            other => Failure::Usage(other.to_string()),
        })?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(n) = thread_count(cli.threads)? {
        // a second initialization only happens in tests; keep the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Selftest = cli.command {
        return selftest();
    }

    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = command_name(&cli.command);
    let manifest = RunManifest::start(name, args, cfg.clone());
    let mut out = Output::new(&cfg.output_dir, manifest)?;
    let solver = ResonanceSolver::new(cfg.grid, cfg.solver)?;

    match &cli.command {
        Command::Spectrum {
            point: pt,
            n_keep,
            select_cap,
            dump_states,
        } => {
            let p = point(&cfg, pt).checked()?;
            let solver = if *select_cap {
                let sel = select_cap_strength(&p, &cfg.grid, &cfg.solver)?;
                log::info!("selected cap strength {} (flatness {:.2e})", sel.eta, sel.flatness);
                ResonanceSolver::new(cfg.grid.with_cap_strength(sel.eta), cfg.solver)?
            } else {
                solver
            };
            let slice = solver.solve(&p, *n_keep)?;
            let mut w = out.jsonl("spectrum.jsonl", "spectrum")?;
            for (alpha, r) in slice.resonances.iter().enumerate() {
                emit(&mut w, &resonance_record(alpha + 1, &p, r))?;
                if *dump_states {
                    let name = format!("spectrum_state_{}.bin", alpha + 1);
                    let path = out.path(&name);
                    let sidecar = write_complex_dump(&path, r.right_vector.as_slice().unwrap_or(&r.right_vector.to_vec()), json!({ "alpha": alpha + 1, "eta": slice.eta_used }))?;
                    out.manifest.add_output(sidecar.file_name().unwrap().to_string_lossy());
                }
            }
            w.finish()?;
        }
        Command::Scan { fix, axes, certify } => {
            let [a0, a1] = axes.as_slice() else {
                return Err(Failure::Usage(format!("scan needs exactly two --axis arguments, got {}", axes.len())));
            };
            if a0.coordinate == a1.coordinate || a0.coordinate == fix.coordinate || a1.coordinate == fix.coordinate {
                return Err(Failure::Usage("scan axes and the fixed coordinate must be distinct".into()));
            }
            let to_axis = |a: &crate::spec::AxisSpec| ScanAxis {
                coordinate: a.coordinate,
                min: a.range.min,
                max: a.range.max,
                count: a.range.count,
            };
            let template = cfg.lattice;
            let scan = scan_gap_plane(&solver, &template, (fix.coordinate, fix.value), [to_axis(a0), to_axis(a1)], &cfg.ep)?;
            let v0 = scan.axes[0].values();
            let v1 = scan.axes[1].values();
            let mut rows = Vec::new();
            for (i, row) in scan.gaps.iter().enumerate() {
                for (j, g) in row.iter().enumerate() {
                    rows.push(vec![v0[i], v1[j], *g]);
                }
            }
            let gap_path = out.path("scan.csv");
            write_csv_file(&gap_path, &[a0.coordinate.name(), a1.coordinate.name(), "gap"], &rows)?;
            let mut w = out.jsonl("scan_seeds.jsonl", "scan-seeds")?;
            for s in &scan.seeds {
                emit(&mut w, s)?;
            }
            w.finish()?;
            if *certify {
                let mut w = out.jsonl("scan_candidates.jsonl", "ep-candidates")?;
                for r in certify_seeds(&solver, &template, &scan, &[], &cfg.ep) {
                    match r {
                        Ok(c) => emit(&mut w, &c)?,
                        Err(e) => log::warn!("seed not refined: {e}"),
                    }
                }
                w.finish()?;
            }
        }
        Command::FindEp { point: pt, freeze } => {
            let guess = point(&cfg, pt).checked()?;
            let c = find_ep(&solver, &guess, &frozen(freeze)?, &cfg.ep)?;
            let mut w = out.jsonl("find_ep.jsonl", "ep-candidate")?;
            emit(&mut w, &c)?;
            w.finish()?;
            if !c.certified {
                out.finish()?;
                return Err(Failure::Domain(Error::Input(format!(
                    "search ended uncertified (gap {:.3e}, overlap {:.6}, Petermann {:.3e})",
                    c.gap, c.overlap_s, c.petermann_min
                ))));
            }
        }
        Command::TraceEp {
            point: pt,
            freeze,
            radius,
            max_points,
        } => {
            let guess = point(&cfg, pt).checked()?;
            let start = find_ep(&solver, &guess, &frozen(freeze)?, &cfg.ep)?;
            let r = radius.unwrap_or(cfg.ep.shell_radius);
            let n = max_points.unwrap_or(cfg.ep.max_points);
            let curve = trace_ep_curve(&solver, &start, r, n, None, &cfg.ep)?;
            let rows: Vec<Vec<f64>> = curve
                .points
                .iter()
                .map(|c| {
                    let [f, d, phi] = c.coordinates();
                    vec![f, d, phi, c.gap, c.overlap_s, c.petermann_min]
                })
                .collect();
            let csv = out.path("trace_ep.csv");
            write_csv_file(&csv, &["invF", "delta", "phi", "gap", "overlap", "petermann"], &rows)?;
            let mut w = out.jsonl("trace_ep.jsonl", "ep-curve")?;
            for c in &curve.points {
                emit(&mut w, c)?;
            }
            emit(
                &mut w,
                &json!({
                    "termination_reason": curve.termination_reason,
                    "folds": curve.folds,
                    "step_r": curve.step_r,
                    "step_radii": curve.step_radii,
                    "step_angles": curve.step_angles,
                }),
            )?;
            w.finish()?;
        }
        Command::Loop {
            point: pt,
            radius,
            steps,
            cycles,
            offset_inv_field,
            offset_phi,
            reversed,
        } => {
            let centre = point(&cfg, pt).checked()?;
            let mut spec = LoopSpec::new(centre, radius.unwrap_or(cfg.loops.radius));
            spec.steps = steps.unwrap_or(cfg.loops.steps);
            spec.cycles = cycles.unwrap_or(cfg.loops.cycles);
            spec.offset_inv_field = *offset_inv_field;
            spec.offset_phi = *offset_phi;
            spec.reversed = *reversed;
            let trace = run_loop(&solver, &spec)?;
            let rows: Vec<Vec<f64>> = trace.rows().iter().map(|r| r.to_vec()).collect();
            let csv = out.path("loop.csv");
            write_csv_file(&csv, &["beta", "re_e1", "im_e1", "re_e2", "im_e2", "re_c1", "im_c1", "re_c2", "im_c2"], &rows)?;
            let mut w = out.jsonl("loop.jsonl", "loop")?;
            emit(
                &mut w,
                &json!({
                    "spec": trace.spec,
                    "permutation": trace.permutation,
                    "encloses_ep": trace.encloses_ep,
                    "cycle_images": trace.cycle_images,
                    "closure_cycles": trace.closure_cycles,
                    "tracks_disjoint": trace.tracks_disjoint,
                    "component_index": trace.component_index,
                    "solves": trace.solves,
                    "refinements": trace.refinements,
                }),
            )?;
            w.finish()?;
        }
        Command::Nonlinear {
            point: pt,
            g,
            scan_f,
            dump_states,
        } => {
            let mut p = point(&cfg, pt);
            if let Some(g) = g {
                p.g = *g;
            }
            let p = p.checked()?;
            let mut w = out.jsonl("nonlinear.jsonl", "nonlinear")?;
            let samples = match scan_f {
                Some(r) => {
                    let scan = crossing_scan(&solver, &p, &r.values(), &cfg.nonlinear)?;
                    for f in &scan.skipped {
                        log::warn!("F = {f}: sample skipped (solver failure or branch collapse)");
                    }
                    let report = scan.report.clone();
                    let peak = scan.petermann_peak();
                    let samples = scan.samples;
                    for s in &samples {
                        for (t, st) in s.states.iter().enumerate() {
                            emit(&mut w, &nonlinear_record(s.field, t + 1, st))?;
                        }
                    }
                    emit(&mut w, &json!({ "crossing": report, "petermann_peak": peak }))?;
                    samples
                }
                None => {
                    let s = pair_at(&solver, &p, p.field, &cfg.nonlinear)?;
                    for (t, st) in s.states.iter().enumerate() {
                        emit(&mut w, &nonlinear_record(s.field, t + 1, st))?;
                    }
                    vec![s]
                }
            };
            w.finish()?;
            if *dump_states {
                for (k, s) in samples.iter().enumerate() {
                    for (t, st) in s.states.iter().enumerate() {
                        let name = format!("nonlinear_{k:04}_{}.bin", t + 1);
                        let path = out.path(&name);
                        let v = st.right_vector.to_vec();
                        let sidecar = write_complex_dump(&path, &v, json!({ "field": s.field, "track": t + 1, "g": st.g_used }))?;
                        out.manifest.add_output(sidecar.file_name().unwrap().to_string_lossy());
                    }
                }
            }
        }
        Command::Selftest => unreachable!(),
    }
    out.finish()
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Spectrum { .. } => "spectrum",
        Command::Scan { .. } => "scan",
        Command::FindEp { .. } => "find-ep",
        Command::TraceEp { .. } => "trace-ep",
        Command::Loop { .. } => "loop",
        Command::Nonlinear { .. } => "nonlinear",
        Command::Selftest => "selftest",
    }
}

fn selftest() -> CmdResult {
    let checks = wsep_core::selftest::run();
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    if failed > 0 {
        return Err(Failure::Domain(Error::Input(format!("{failed} self-test check(s) failed"))));
    }
    Ok(())
}

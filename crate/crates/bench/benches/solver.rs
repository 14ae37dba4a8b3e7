use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use wsep_core::ep::GapObjective;
use wsep_core::{
    build_hamiltonian, solve_nonlinear, GridSpec, LatticeParams, NonlinearConfig, ResonanceSolver, SolverConfig,
};

fn point() -> LatticeParams {
    LatticeParams::new(3.769, 1.0, -2.991)
}

fn hamiltonian(c: &mut Criterion) {
    let grid = GridSpec::default();
    c.bench_function("build_hamiltonian", |b| {
        b.iter(|| build_hamiltonian(black_box(&point()), &grid, None).unwrap())
    });
}

fn spectrum(c: &mut Criterion) {
    let solver = ResonanceSolver::new(GridSpec::default(), SolverConfig::default()).unwrap();
    let mut group = c.benchmark_group("spectrum");
    group.sample_size(10);
    group.bench_function("solve", |b| b.iter(|| solver.solve(black_box(&point()), 2).unwrap()));
    let objective = GapObjective::new(&solver);
    group.bench_function("gap_objective", |b| b.iter(|| objective.value(black_box(&point())).unwrap()));
    group.finish();
}

fn nonlinear(c: &mut Criterion) {
    let solver = ResonanceSolver::new(GridSpec::default(), SolverConfig::default()).unwrap();
    let p = LatticeParams::new(5.0, 1.0, 0.0);
    let seed = solver.solve(&p, 2).unwrap().resonances[0].clone();
    let cfg = NonlinearConfig::default();
    let mut group = c.benchmark_group("nonlinear");
    group.sample_size(10);
    group.bench_function("solve_g0.02", |b| {
        b.iter(|| solve_nonlinear(&solver, black_box(&p.with_g(0.02)), &seed, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, hamiltonian, spectrum, nonlinear);
criterion_main!(benches);

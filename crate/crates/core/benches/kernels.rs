//! Sequential vs data-parallel node kernels.
//!
//! The parallel cases run in a dedicated pool of at least two workers so
//! the parallel path is exercised even on a single-core machine.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use radwave::grid::{energy, to_reduced, FieldState, RadialGrid, ReducedState};
use radwave::par::{self, Exec};
use radwave::params::ModelParams;
use radwave::solver_char::CharStepper;
use radwave::solver_fd::FdStepper;

const SIZES: [usize; 2] = [10_000, 100_000];

fn params() -> ModelParams {
    ModelParams { d: 4, p: 7.0 / 3.0, zeta: -1 }
}

fn state(n: usize) -> (RadialGrid, FieldState) {
    let grid = RadialGrid::new(100.0, n).unwrap();
    let s = FieldState::from_fns(&grid, 0.0, |r| 2.0 * (-(r - 5.0) * (r - 5.0)).exp(), |r| (-r * r).exp());
    (grid, s)
}

#[cfg(feature = "parallel")]
fn pool() -> rayon::ThreadPool {
    let n = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(2);
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
}

fn under<R: Send>(exec: Exec, f: impl FnOnce() -> R + Send) -> R {
    par::set_exec(exec);
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel {
        return pool().install(f);
    }
    f()
}

fn policies() -> Vec<Exec> {
    if cfg!(feature = "parallel") {
        vec![Exec::Sequential, Exec::Parallel]
    } else {
        vec![Exec::Sequential]
    }
}

fn fd_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("fd_step");
    for n in SIZES {
        for exec in policies() {
            let (grid, s0) = state(n);
            let dt = 0.25 * grid.h;
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &n, |b, _| {
                under(exec, || {
                    let mut stepper = FdStepper::new(grid, params());
                    let mut s = s0.clone();
                    b.iter(|| stepper.step(black_box(&mut s), dt));
                })
            });
        }
    }
    group.finish();
}

fn energy_sum(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy");
    for n in SIZES {
        for exec in policies() {
            let (grid, s) = state(n);
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &n, |b, _| {
                under(exec, || b.iter(|| energy(black_box(&s), &grid, &params())))
            });
        }
    }
    group.finish();
}

fn char_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("char_step");
    for n in SIZES {
        for exec in policies() {
            let (grid, s) = state(n);
            let red = to_reduced(&s, &grid, &params());
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &n, |b, _| {
                under(exec, || {
                    let mut stepper = CharStepper::new(grid, params());
                    let mut next = ReducedState::zeros(&grid, 0.0);
                    b.iter(|| stepper.step_into(black_box(&red), &mut next));
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, fd_step, energy_sum, char_step);
criterion_main!(benches);

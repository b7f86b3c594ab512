use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use levy_stability::density::{invert_density, DensityConfig};
use levy_stability::exec;
use levy_stability::fk_solver::{solve_fixed_point, Problem, SolverConfig};
use levy_stability::grid::Lattice;
use levy_stability::nonlinearity::{NonlinearitySpec, SpaceTimeFn};
use levy_stability::sampling::CoupledDriver;
use levy_stability::sde::euler_paths;
use levy_stability::symbols::{OperatorSpec, SymbolSpec};

fn run(c: &mut Criterion, name: &str, work: impl Fn() + Send + Sync) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", ""), |b| b.iter(|| exec::sequential(&work)));
    group.bench_function(BenchmarkId::new("parallel", ""), |b| b.iter(&work));
    group.finish();
}

fn benches(c: &mut Criterion) {
    let spec = SymbolSpec::stable(1.5, 2).unwrap();
    let lattice = Lattice::symmetric(2, 4.0, 0.1).unwrap();
    let cfg = DensityConfig::for_dim(2);
    run(c, "density_inversion_2d", || {
        invert_density(&spec, 0.5, &lattice, &cfg).unwrap();
    });

    let op = OperatorSpec::levy(SymbolSpec::relativistic(1.5, 1.0, 1).unwrap());
    let driver = CoupledDriver::new(1);
    run(c, "euler_paths", || {
        euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 64.0, 20_000, &driver).unwrap();
    });

    let pb = Problem::new(
        OperatorSpec::levy(SymbolSpec::stable(1.8, 1).unwrap()),
        SpaceTimeFn::bump(1.0, 1.0),
        1.0,
        Lattice::symmetric(1, 32.0, 0.05).unwrap(),
    )
    .unwrap();
    let f = NonlinearitySpec::power(SpaceTimeFn::bump(0.5, 1.0), SpaceTimeFn::constant(1.0), 3.0);
    let solver = SolverConfig::default();
    run(c, "fixed_point_solve", || {
        solve_fixed_point(&pb, &f, &solver).unwrap();
    });
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);

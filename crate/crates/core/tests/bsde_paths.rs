use levy_stability::bsde::{markov_representation_check, martingale_residual, picard_bsde, BsdeConfig};
use levy_stability::fk_solver::{solve_fixed_point, Problem, SolverConfig};
use levy_stability::grid::{GridFunction, Lattice};
use levy_stability::nonlinearity::{NonlinearitySpec, SpaceTimeFn};
use levy_stability::sampling::CoupledDriver;
use levy_stability::sde::euler_paths;
use levy_stability::symbols::{OperatorSpec, SymbolSpec};

fn setup() -> (OperatorSpec, Problem, NonlinearitySpec) {
    let op = OperatorSpec::levy(SymbolSpec::stable(2.0, 1).unwrap());
    let pb = Problem::new(op.clone(), SpaceTimeFn::bump(1.0, 1.0), 1.0, Lattice::symmetric(1, 12.0, 0.05).unwrap())
        .unwrap();
    let f = NonlinearitySpec::power(SpaceTimeFn::bump(0.5, 1.0), SpaceTimeFn::constant(1.0), 3.0);
    (op, pb, f)
}

#[test]
fn markov_representation_holds_and_detects_a_wrong_u() {
    let (op, pb, f) = setup();
    let paths = euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 16.0, 4000, &CoupledDriver::new(3)).unwrap();
    let phi = |x: &[f64]| pb.phi_at(x);
    let sol = picard_bsde(&paths, &phi, &f, &BsdeConfig::default()).unwrap();
    let u = solve_fixed_point(&pb, &f, &SolverConfig::default()).unwrap().u;
    let gap = markov_representation_check(&sol, &paths, &u).unwrap();
    assert!(gap.terminal_sup < 1e-3, "{gap:?}");
    assert!(gap.mean < 0.02, "{gap:?}");

    let zero = GridFunction::zeros(u.knots.clone(), u.lattice.clone());
    let wrong = markov_representation_check(&sol, &paths, &zero).unwrap();
    assert!(wrong.mean > 10.0 * gap.mean, "{wrong:?} vs {gap:?}");
}

#[test]
fn uncoupled_drivers_do_not_converge_pathwise() {
    let (op, pb, f) = setup();
    let phi = |x: &[f64]| pb.phi_at(x);
    let a = euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 16.0, 2000, &CoupledDriver::new(5)).unwrap();
    let b = euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 16.0, 2000, &CoupledDriver::fresh(5, 1)).unwrap();
    let sa = picard_bsde(&a, &phi, &f, &BsdeConfig::default()).unwrap();
    let sb = picard_bsde(&b, &phi, &f, &BsdeConfig::default()).unwrap();
    let k = sa.knots();
    let mean_gap: f64 =
        (0..sa.m).map(|i| (sa.y[i * k + k - 1] - sb.y[i * k + k - 1]).abs()).sum::<f64>() / sa.m as f64;
    assert!(mean_gap > 0.05, "{mean_gap}");
    // Same law: the time-zero values still agree statistically.
    assert!((sa.y0() - sb.y0()).abs() < 3.0 * (sa.combined_error() + sb.combined_error()));
}

#[test]
fn martingale_part_has_no_drift() {
    let (op, pb, f) = setup();
    let paths = euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 16.0, 4000, &CoupledDriver::new(11)).unwrap();
    let phi = |x: &[f64]| pb.phi_at(x);
    let sol = picard_bsde(&paths, &phi, &f, &BsdeConfig::default()).unwrap();
    let (_, diag) = martingale_residual(&sol, &paths, &f).unwrap();
    assert!(diag.pass, "{diag:?}");
}

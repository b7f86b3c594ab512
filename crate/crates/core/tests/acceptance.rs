//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line to
//! stderr (bypassing the harness capture) and then asserts the criterion.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use levy_stability::bsde::{coupled_bsde_convergence, picard_bsde, BsdeConfig, CoupledRun};
use levy_stability::density::{density_sup_bound, invert_density, DensityConfig};
use levy_stability::exec;
use levy_stability::fk_solver::bounds::{check_apriori_bound, check_l2_l1_bounds, truncation_tail_bound};
use levy_stability::fk_solver::{default_probes, solve_fixed_point, McConfig, Problem, Scheme, SolverConfig};
use levy_stability::grid::{GridFunction, Lattice};
use levy_stability::lab::{catalog, run_stability, CatalogName};
use levy_stability::nonlinearity::{inf_convolution, truncate_f, NonlinearitySpec, SpaceTimeFn, ZGrid};
use levy_stability::rng::JUMP;
use levy_stability::sampling::{cf_band, empirical_exponent_check, CoupledDriver, JumpSampler};
use levy_stability::sde::euler_paths;
use levy_stability::stats::{trend_verdict, TrendRule, Verdict};
use levy_stability::symbols::{OperatorSpec, SymbolSpec};

fn record(n: usize, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2} {name:<28} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn sup_err(values: &[f64], lat: &Lattice, exact: impl Fn(f64) -> f64) -> f64 {
    values.iter().enumerate().map(|(i, v)| (v - exact(lat.coord(0, i))).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_01_density_oracles() {
    let lat = Lattice::symmetric(1, 10.0, 0.05).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for t in [0.25, 1.0] {
        let start = Instant::now();
        let g = invert_density(&SymbolSpec::stable(2.0, 1).unwrap(), t, &lat, &DensityConfig::default()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let err = sup_err(&g.values, &lat, |z| (4.0 * PI * t).powf(-0.5) * (-z * z / (4.0 * t)).exp());
        pass &= err <= 1e-6 && secs < 2.0;
        detail += &format!("gauss t={t}: {err:.1e} in {secs:.2}s; ");
    }
    let lat = Lattice::symmetric(1, 20.0, 0.1).unwrap();
    let start = Instant::now();
    let cfg = DensityConfig::default().with_resolution(64.0, 16384);
    let g = invert_density(&SymbolSpec::stable(1.0, 1).unwrap(), 1.0, &lat, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = sup_err(&g.values, &lat, |z| 1.0 / (PI * (z * z + 1.0)));
    pass &= err <= 1e-5 && secs < 2.0;
    detail += &format!("cauchy: {err:.1e} in {secs:.2}s");
    record(1, "density_oracles", pass, &detail);
    assert!(pass, "{detail}");
}

/// Mass tolerance and negative-ringing tolerance of the density inversion.
const TOL_MASS: f64 = 1e-4;
const TOL_NEG: f64 = 1e-8;

fn levy_catalog() -> Vec<(String, SymbolSpec)> {
    let mut out = Vec::new();
    for name in [
        CatalogName::FracToLaplace,
        CatalogName::FracToFrac,
        CatalogName::Multifractal,
        CatalogName::RelativisticAlpha,
        CatalogName::RelativisticMass,
    ] {
        let cfg = catalog(name);
        for n in (1..=cfg.members).map(Some).chain([None]) {
            out.push((format!("{name}[{n:?}]"), cfg.operator(n).unwrap().psi));
        }
    }
    out
}

#[test]
fn criterion_02_normalization_and_sup_bound() {
    let t = 0.5;
    let lat = Lattice::symmetric(1, 200.0, 0.25).unwrap();
    let cfg = DensityConfig::default().with_resolution(64.0, 16384);
    let mut worst_mass = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut failures = Vec::new();
    let specs = levy_catalog();
    for (name, spec) in &specs {
        let g = invert_density(spec, t, &lat, &cfg).unwrap();
        let bound = density_sup_bound(spec, t, &cfg).unwrap();
        let dm = (g.mass() - 1.0).abs();
        worst_mass = worst_mass.max(dm);
        worst_ratio = worst_ratio.max(g.max_value() / bound);
        if dm > TOL_MASS || g.max_value() > bound + TOL_NEG {
            failures.push(name.clone());
        }
    }
    let pass = failures.is_empty();
    let detail = format!(
        "{} densities, worst |mass-1| {worst_mass:.1e}, worst max/bound {worst_ratio:.6}, failing {failures:?}",
        specs.len()
    );
    record(2, "normalization_and_bound", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_03_sampler_fidelity() {
    let m = 100_000;
    let grid: Vec<Vec<f64>> = (-4..=4).map(|i| vec![0.5 * i as f64]).collect();
    let specs = [
        SymbolSpec::stable(0.7, 1).unwrap(),
        SymbolSpec::stable(1.0, 1).unwrap(),
        SymbolSpec::stable(1.5, 1).unwrap(),
        SymbolSpec::stable(2.0, 1).unwrap(),
        SymbolSpec::multifractal(vec![(1.0, 2.0), (1.0, 1.0)], 1).unwrap(),
        SymbolSpec::relativistic(1.0, 1.0, 1).unwrap(),
    ];
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (k, spec) in specs.iter().enumerate() {
        let sampler = JumpSampler::new(spec, 1.0).unwrap();
        let driver = CoupledDriver::new(1000 + k as u64);
        let xs = exec::map_range(m, |i| sampler.sample(&mut driver.stream(i as u64, JUMP)));
        worst = worst.max(empirical_exponent_check(&xs, 1.0, spec, &grid).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= cf_band(m) && secs < 10.0;
    let detail = format!("max CF error {worst:.2e} vs band {:.2e}, {secs:.2}s", cf_band(m));
    record(3, "sampler_fidelity", pass, &detail);
    assert!(pass, "{detail}");
}

/// `E φ(x + X_τ)` for `φ = exp(−x²/2)` and `X_τ ~ N(0, 2τ)`.
fn heat_bump(tau: f64, x: f64) -> f64 {
    let v = 1.0 + 2.0 * tau;
    (-x * x / (2.0 * v)).exp() / v.sqrt()
}

fn gaussian_problem(half_width: f64, step: f64) -> Problem {
    let op = OperatorSpec::levy(SymbolSpec::stable(2.0, 1).unwrap());
    Problem::new(op, SpaceTimeFn::bump(1.0, 1.0), 1.0, Lattice::symmetric(1, half_width, step).unwrap()).unwrap()
}

/// Name, reaction and closed-form solution `u(s, x)`.
type LinearCase = (&'static str, NonlinearitySpec, Box<dyn Fn(f64, f64) -> f64>);

fn linear_cases() -> Vec<LinearCase> {
    vec![
        ("zero", NonlinearitySpec::zero(), Box::new(|s, x| heat_bump(1.0 - s, x))),
        (
            "constant",
            NonlinearitySpec::source(SpaceTimeFn::constant(0.3)),
            Box::new(|s, x| heat_bump(1.0 - s, x) + 0.3 * (1.0 - s)),
        ),
        (
            "linear_decay",
            NonlinearitySpec::linear(-0.7),
            Box::new(|s, x| (-0.7 * (1.0 - s)).exp() * heat_bump(1.0 - s, x)),
        ),
        (
            "linear_growth",
            NonlinearitySpec::linear(0.5),
            Box::new(|s, x| (0.5 * (1.0 - s)).exp() * heat_bump(1.0 - s, x)),
        ),
    ]
}

#[test]
fn criterion_04_linear_oracles() {
    let mut pass = true;
    let mut detail = String::new();
    let dens = gaussian_problem(12.0, 0.05);
    for (name, f, exact) in linear_cases() {
        let sol = solve_fixed_point(&dens, &f, &SolverConfig::default()).unwrap();
        let err = sol.report.probes.iter().map(|p| (p.u - exact(p.s, p.x[0])).abs()).fold(0.0, f64::max);
        pass &= err <= 1e-3;
        detail += &format!("density {name}: {err:.1e}; ");
    }
    let mc = gaussian_problem(4.0, 0.25);
    let cfg = SolverConfig::monte_carlo(McConfig { paths: 4000, steps_per_knot: 2, seed: 42 }).with_knots(8);
    for (name, f, exact) in linear_cases() {
        let sol = solve_fixed_point(&mc, &f, &cfg).unwrap();
        let worst = sol
            .report
            .probes
            .iter()
            .map(|p| (p.u - exact(p.s, p.x[0])).abs() / (3.0 * p.std_err.unwrap()))
            .fold(0.0, f64::max);
        pass &= worst <= 1.0;
        detail += &format!("mc {name}: {worst:.2} of 3se; ");
    }
    record(4, "linear_oracles", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_05_apriori_bounds() {
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut worst_norm = 0.0f64;
    for name in CatalogName::ALL {
        let cfg = catalog(name);
        let lattice = cfg.lattice.build().unwrap();
        let solver = cfg.solver_config();
        for n in (1..=cfg.members).map(Some).chain([None]) {
            let pb = Problem::new(cfg.operator(n).unwrap(), cfg.phi.clone(), cfg.t_end, lattice.clone()).unwrap();
            let f = &cfg.nonlinearity;
            let sol = solve_fixed_point(&pb, f, &solver).unwrap();
            let pointwise = check_apriori_bound(&sol.u, sol.std_err.as_ref(), &pb, f, &solver).unwrap();
            checked += 1;
            if !pointwise.holds {
                failures.push(format!("{name}[{n:?}] pointwise"));
            }
            if pb.op.is_constant() {
                let nb = check_l2_l1_bounds(&sol.u, &pb, f, 1e-4).unwrap();
                worst_norm = worst_norm.max(nb.worst_ratio);
                if !nb.all_hold {
                    failures.push(format!("{name}[{n:?}] norms"));
                }
            }
        }
    }
    let pass = failures.is_empty();
    let detail = format!("{checked} runs, worst norm lhs/rhs {worst_norm:.3}, failing {failures:?}");
    record(5, "apriori_bounds", pass, &detail);
    assert!(pass, "{detail}");
}

fn max_abs_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_06_approximation_ladders() {
    // Inf-convolution ladder for the non-Lipschitz f(y) = −sign(y)|y|^{2/3}.
    let op = OperatorSpec::levy(SymbolSpec::stable(2.0, 1).unwrap());
    let phi = SpaceTimeFn::PolyBump { coeffs: vec![0.0, 1.0], center: 0.0, width: 1.0 };
    let pb = Problem::new(op.clone(), phi, 1.0, Lattice::symmetric(1, 12.0, 0.05).unwrap()).unwrap();
    let cfg = SolverConfig::default().with_scheme(Scheme::BackwardSweep);
    let f = NonlinearitySpec::power(SpaceTimeFn::Zero, SpaceTimeFn::constant(1.0), 2.0 / 3.0);
    let u = solve_fixed_point(&pb, &f, &cfg).unwrap().u;
    let ms = [1.0, 2.0, 4.0, 8.0];
    let ladder: Vec<GridFunction> = ms
        .iter()
        .map(|&m| {
            let fm = inf_convolution(&f, m, ZGrid::new(1.5, 2e-6).unwrap()).unwrap();
            solve_fixed_point(&pb, &fm, &cfg).unwrap().u
        })
        .collect();
    let violation = ladder
        .windows(2)
        .flat_map(|w| w[0].values.iter().zip(&w[1].values).map(|(a, b)| a - b))
        .fold(0.0, f64::max);
    let monotone = violation <= 1e-10;
    let gaps: Vec<f64> = ladder.iter().map(|um| max_abs_diff(um, &u)).collect();
    let halving = gaps.windows(2).all(|w| w[1] <= 0.5 * w[0]);

    // Truncation ladder with the unbounded source |x|^{−0.45} e^{−x²/8}; x = 0 is not a node.
    let h = 0.005;
    let half = 16.0;
    let n = (2.0 * half / h) as usize;
    let lat = Lattice::new(vec![-half + 0.5 * h], vec![h], vec![n]).unwrap();
    let pb = Problem::new(op, SpaceTimeFn::bump(1.0, 1.0), 1.0, lat.clone()).unwrap();
    let singular = SpaceTimeFn::Singular { amplitude: 1.0, beta: 0.45, width: Some(2.0) };
    let f = NonlinearitySpec::power(singular, SpaceTimeFn::constant(1.0), 3.0);
    let u = solve_fixed_point(&pb, &f, &cfg).unwrap();
    let probes = default_probes(1.0, &lat);
    let mut within = true;
    let mut tgaps = Vec::new();
    let mut tails = Vec::new();
    for k in [1.0, 2.0, 4.0, 8.0] {
        let fk = truncate_f(f.clone(), k).unwrap();
        let uk = solve_fixed_point(&pb, &fk, &cfg).unwrap();
        let tail = truncation_tail_bound(&pb, &f, k, &cfg).unwrap();
        let mut worst = 0.0f64;
        let mut tail_sup = 0.0f64;
        for p in &probes {
            tail_sup = tail_sup.max(tail.eval(p.s, &p.x));
            let gap = (uk.eval(p.s, &p.x) - u.eval(p.s, &p.x)).abs();
            within &= gap <= tail.eval(p.s, &p.x) + 1e-9;
            worst = worst.max(gap);
        }
        tgaps.push(worst);
        tails.push(tail_sup);
    }
    let rule = TrendRule::with_floor(1e-10);
    let vanishing = trend_verdict(&tgaps, &rule) == Verdict::Decreasing && trend_verdict(&tails, &rule) == Verdict::Decreasing;

    let pass = monotone && halving && within && vanishing;
    let detail = format!(
        "inf-conv gaps {} max order violation {violation:.1e}; truncation gaps {} tail bounds {} within={within}",
        sci(&gaps),
        sci(&tgaps),
        sci(&tails)
    );
    record(6, "approximation_ladders", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_07_cross_solver() {
    let pb = gaussian_problem(12.0, 0.05);
    let paths = euler_paths(&pb.op, 0.0, &[0.0], 1.0, 1.0 / 16.0, 10_000, &CoupledDriver::new(7)).unwrap();
    let phi = |x: &[f64]| pb.phi_at(x);
    let mut cases: Vec<(&str, NonlinearitySpec)> = linear_cases().into_iter().map(|(n, f, _)| (n, f)).collect();
    cases.push(("cubic", NonlinearitySpec::power(SpaceTimeFn::bump(0.5, 1.0), SpaceTimeFn::constant(1.0), 3.0)));
    let mut pass = true;
    let mut detail = String::new();
    for (name, f) in cases {
        let u = solve_fixed_point(&pb, &f, &SolverConfig::default()).unwrap();
        let sol = picard_bsde(&paths, &phi, &f, &BsdeConfig::default()).unwrap();
        let z = (sol.y0() - u.eval(0.0, &[0.0])).abs() / sol.combined_error();
        pass &= z <= 3.0;
        detail += &format!("{name}: {z:.2} combined errors; ");
    }
    record(7, "cross_solver_consistency", pass, &detail);
    assert!(pass, "{detail}");
}

fn verdicts_ok(v: Verdict) -> bool {
    v == Verdict::Decreasing
}

#[test]
fn criterion_08_headline_stability() {
    let cfg = catalog(CatalogName::FracToLaplace);
    let start = Instant::now();
    let rep = run_stability(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let p = rep.pointwise.as_ref().unwrap();
    let l1 = rep.l1_compact.as_ref().unwrap();
    let w = rep.weak_l2.as_ref().unwrap();
    let probes_ok = p.probes.len() == 6 && p.verdicts.iter().all(|v| verdicts_ok(*v));
    let pass = probes_ok
        && p.final_gap < 1e-2
        && verdicts_ok(l1.verdict)
        && verdicts_ok(w.verdict)
        && rep.metric_consistency
        && secs < 60.0;
    let detail = format!(
        "probe verdicts {:?}, final gap {:.2e}, L1 {:?}, weak-L2 {:?}, {secs:.1}s",
        p.verdicts, p.final_gap, l1.verdict, w.verdict
    );
    record(8, "headline_stability", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_09_coupled_bsde() {
    let limit = OperatorSpec::levy(SymbolSpec::stable(2.0, 1).unwrap());
    let seq: Vec<OperatorSpec> =
        (1..=8).map(|n| OperatorSpec::levy(SymbolSpec::stable(2.0 - 0.5f64.powi(n), 1).unwrap())).collect();
    let phi = |x: &[f64]| (-x[0] * x[0] / 2.0).exp();
    let f = NonlinearitySpec::power(SpaceTimeFn::Zero, SpaceTimeFn::constant(1.0), 3.0);
    let run = CoupledRun { s: 0.0, t_end: 1.0, steps: 16, paths: 2000 };
    let driver = CoupledDriver::new(42);
    let cfg = BsdeConfig::default();
    let rep = coupled_bsde_convergence(&seq, &limit, &phi, &f, &driver, &[0.0], &run, &cfg).unwrap();
    let ys: Vec<f64> = rep.members.iter().map(|m| m.y_dist.median).collect();
    let ms: Vec<f64> = rep.members.iter().map(|m| m.m_dist.median).collect();
    let rule = TrendRule::default();
    let (vy, vm) = (trend_verdict(&ys, &rule), trend_verdict(&ms, &rule));
    let control = coupled_bsde_convergence(&[limit.clone(), limit.clone()], &limit, &phi, &f, &driver, &[0.0], &run, &cfg)
        .unwrap();
    let control_max = control.members.iter().map(|m| m.y_dist.max.max(m.m_dist.max)).fold(0.0, f64::max);
    let pass = vy == Verdict::Decreasing && vm == Verdict::Decreasing && control_max <= 1e-12;
    let detail = format!("median Y {} {vy:?}; median M {} {vm:?}; control {control_max:.1e}", sci(&ys), sci(&ms));
    record(9, "coupled_bsde_stability", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_10_reproducibility() {
    let cfg = catalog(CatalogName::FracToLaplace);
    let a = run_stability(&cfg).unwrap();
    let b = run_stability(&cfg).unwrap();
    let one = exec::with_threads(1, || run_stability(&cfg).unwrap());
    let four = exec::with_threads(4, || run_stability(&cfg).unwrap());
    let same_seed = a.canonical_json() == b.canonical_json();
    let workers = one.canonical_json() == four.canonical_json() && one.canonical_json() == a.canonical_json();
    let pass = same_seed && workers;
    let detail = format!("same seed identical={same_seed}, 1 vs 4 workers identical={workers}, hash {}", a.content_hash());
    record(10, "reproducibility", pass, &detail);
    assert!(pass, "{detail}");
}

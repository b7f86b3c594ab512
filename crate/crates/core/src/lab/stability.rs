//! Stability sweeps: solve the limit problem and every member, then measure
//! how fast the solutions approach each other.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::density::{uniform_bound_check, DensityConfig};
use crate::error::{Error, Result};
use crate::exec;
use crate::fk_solver::bounds::edge_mass_fraction;
use crate::fk_solver::{default_probes, solve_fixed_point, Mode, Problem, Solution};
use crate::grid::GridFunction;
use crate::lab::config::{ExperimentConfig, Metric};
use crate::lab::report::{
    combine, ConvergenceReport, GateDiagnostics, HwEntry, L1Metric, PointwiseMetric, RegimeClaim, WeakL2Metric,
    REPORT_SCHEMA,
};
use crate::nonlinearity::{check_h2_monotonicity, SampleDomain, SpaceTimeFn};
use crate::stats::{trend_verdict, TrendRule, Verdict};
use crate::symbols::{
    default_hw_radii, domination_check, DominationReport, hartman_wintner_check, radial_grid, HwVerdict, OperatorSpec, SymbolFamily,
    SymbolSpec,
};

/// Metric values at or below this are treated as zero.
pub const NOISE_FLOOR: f64 = 1e-10;

const CERTIFICATE_SAMPLES: usize = 4000;

/// The fixed weak-L² test bank.
pub fn test_bank() -> Vec<(&'static str, SpaceTimeFn)> {
    vec![
        ("bump", SpaceTimeFn::Bump { amplitude: 1.0, center: 0.0, width: 1.0 }),
        ("bump_left", SpaceTimeFn::Bump { amplitude: 1.0, center: -1.0, width: 0.5 }),
        ("bump_right", SpaceTimeFn::Bump { amplitude: 1.0, center: 1.0, width: 0.5 }),
        ("bump_wide", SpaceTimeFn::Bump { amplitude: 1.0, center: 0.0, width: 2.0 }),
        ("linear_bump", SpaceTimeFn::PolyBump { coeffs: vec![0.0, 1.0], center: 0.0, width: 1.0 }),
        ("quadratic_bump", SpaceTimeFn::PolyBump { coeffs: vec![-1.0, 0.0, 1.0], center: 0.0, width: 1.0 }),
        ("time_bump", SpaceTimeFn::TimeBump { amplitude: 1.0, center: 0.0, width: 1.0 }),
        ("zero", SpaceTimeFn::Zero),
    ]
}

fn same_grid(a: &GridFunction, b: &GridFunction) -> Result<()> {
    if a.knots != b.knots || a.lattice != b.lattice {
        return Err(Error::GridMismatch("solutions live on different grids".into()));
    }
    Ok(())
}

/// `∬_{Q_T} (uₙ − u) η dt dx` for each member and test function, by the
/// trapezoid rule in time and the lattice sum in space.
pub fn weak_l2_pairings(
    u_seq: &[GridFunction],
    u_limit: &GridFunction,
    bank: &[(&str, SpaceTimeFn)],
) -> Result<Vec<Vec<f64>>> {
    let lat = &u_limit.lattice;
    let points = lat.points();
    let knots = &u_limit.knots;
    let vol = lat.cell_volume();
    let tables: Vec<Vec<f64>> = bank
        .iter()
        .map(|(_, eta)| {
            let mid = 0.5 * knots[knots.len() - 1];
            let slice: Vec<f64> = points.iter().map(|x| eta.eval(mid, x).abs()).collect();
            let edge = edge_mass_fraction(&slice, lat);
            if edge > 1e-3 {
                return Err(Error::LatticeCoverage(edge));
            }
            Ok(knots.iter().flat_map(|&t| points.iter().map(move |x| eta.eval(t, x))).collect())
        })
        .collect::<Result<_>>()?;
    let n = lat.len();
    u_seq
        .iter()
        .map(|u| {
            same_grid(u, u_limit)?;
            Ok(tables
                .iter()
                .map(|eta| {
                    let per_knot: Vec<f64> = (0..knots.len())
                        .map(|j| {
                            let terms: Vec<f64> = (0..n)
                                .map(|i| (u.values[j * n + i] - u_limit.values[j * n + i]) * eta[j * n + i])
                                .collect();
                            exec::pairwise_sum(&terms) * vol
                        })
                        .collect();
                    (1..knots.len())
                        .map(|j| 0.5 * (knots[j] - knots[j - 1]) * (per_knot[j] + per_knot[j - 1]))
                        .sum()
                })
                .collect())
        })
        .collect()
}

/// `Σ_{x ∈ [−a,a]^d} |a(s,x) − b(s,x)| · cell volume` at the knot nearest `s`.
pub fn l1_on_compact(a: &GridFunction, b: &GridFunction, s: f64, half_width: f64) -> Result<f64> {
    same_grid(a, b)?;
    let lat = &a.lattice;
    let j = a.knot_index(s);
    let (sa, sb) = (a.slice(j), b.slice(j));
    let terms: Vec<f64> = (0..lat.len())
        .filter(|&i| lat.point(i).iter().all(|c| c.abs() <= half_width + 1e-12))
        .map(|i| (sa[i] - sb[i]).abs())
        .collect();
    Ok(exec::pairwise_sum(&terms) * lat.cell_volume())
}

fn operator_distance(a: &OperatorSpec, b: &OperatorSpec, xs: &[Vec<f64>], xis: &[Vec<f64>]) -> Result<f64> {
    let mut max = 0.0f64;
    for x in xs {
        for xi in xis {
            max = max.max((a.eval_symbol(x, xi)? - b.eval_symbol(x, xi)?).norm());
        }
    }
    Ok(max)
}

fn coefficient_distance(a: &OperatorSpec, b: &OperatorSpec, xs: &[Vec<f64>]) -> f64 {
    let mut max = 0.0f64;
    for x in xs {
        for (ca, cb) in [(&a.b, &b.b), (&a.sigma, &b.sigma), (&a.gamma, &b.gamma)] {
            let d: f64 = ca.eval(x).iter().zip(cb.eval(x)).map(|(p, q)| (p - q) * (p - q)).sum();
            max = max.max(d.sqrt());
        }
    }
    max
}

fn sample_points(dim: usize, half_width: f64) -> Vec<Vec<f64>> {
    let r = half_width.min(2.0);
    (0..9)
        .map(|k| {
            let mut x = vec![0.0; dim];
            x[0] = -r + r * k as f64 / 4.0;
            x
        })
        .collect()
}

fn all_ok(v: Verdict) -> bool {
    v != Verdict::Violated
}

/// Convergence and density gates of a sequence, computed without solving anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolGates {
    pub symbol_distances: Vec<f64>,
    pub symbol_distance_verdict: Verdict,
    pub coefficient_distances: Vec<f64>,
    pub hartman_wintner: Vec<HwEntry>,
    pub domination: Option<DominationReport>,
    pub uniform_density_bound: Option<bool>,
    pub warnings: Vec<String>,
}

pub fn symbol_gates(cfg: &ExperimentConfig) -> Result<SymbolGates> {
    let dim = cfg.lattice.dim;
    let members: Vec<usize> = (1..=cfg.members).collect();
    let ops: Vec<OperatorSpec> = members.iter().map(|&n| cfg.operator(Some(n))).collect::<Result<_>>()?;
    let limit_op = cfg.operator(None)?;
    let mut warnings = Vec::new();
    let xs = sample_points(dim, cfg.lattice.half_width);
    let xis = radial_grid(dim, &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0]);
    let symbol_distances: Vec<f64> =
        ops.iter().map(|op| operator_distance(op, &limit_op, &xs, &xis)).collect::<Result<_>>()?;
    let symbol_distance_verdict = trend_verdict(&symbol_distances, &TrendRule::with_floor(NOISE_FLOOR));
    if !all_ok(symbol_distance_verdict) {
        warnings.push("symbol distances do not decrease along the sequence".into());
    }
    let coefficient_distances: Vec<f64> = if cfg.sequence.is_levy() {
        Vec::new()
    } else {
        ops.iter().map(|op| coefficient_distance(op, &limit_op, &xs)).collect()
    };
    if !coefficient_distances.is_empty()
        && !all_ok(trend_verdict(&coefficient_distances, &TrendRule::with_floor(NOISE_FLOOR)))
    {
        warnings.push("coefficients do not converge along the sequence".into());
    }

    let mut hartman_wintner = Vec::new();
    let mut domination = None;
    let mut uniform_density_bound = None;
    if cfg.sequence.is_levy() {
        let radii = default_hw_radii();
        for (n, op) in members.iter().map(|&n| Some(n)).zip(&ops).chain([(None, &limit_op)]) {
            let verdict = hartman_wintner_check(&op.psi, &radii)?.verdict;
            if verdict != HwVerdict::Satisfied {
                warnings.push(format!("Hartman-Wintner verdict {verdict:?} for member {n:?}"));
            }
            hartman_wintner.push(HwEntry { n, verdict });
        }
        let family: Vec<SymbolSpec> = ops.iter().map(|o| o.psi.clone()).collect();
        let min_alpha = family.iter().chain([&limit_op.psi]).map(|s| s.min_alpha()).fold(2.0, f64::min);
        let tilde =
            SymbolSpec::new(SymbolFamily::Multifractal { terms: vec![(0.5, 0.5 * min_alpha)] }, dim)?;
        let dom = domination_check(&family, &tilde, 1, 10.0)?;
        if !dom.all_hold {
            warnings.push("domination by the reference exponent fails".into());
        }
        domination = Some(dom);
        let ub = uniform_bound_check(&family, &[cfg.t_end, 0.5 * cfg.t_end], 1, &DensityConfig::for_dim(dim))?;
        if !ub {
            warnings.push("uniform density bound not established".into());
        }
        uniform_density_bound = Some(ub);
    }

    Ok(SymbolGates {
        symbol_distances,
        symbol_distance_verdict,
        coefficient_distances,
        hartman_wintner,
        domination,
        uniform_density_bound,
        warnings,
    })
}

/// Runs the sweep described by `cfg`.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let dim = cfg.lattice.dim;
    let lattice = cfg.lattice.build()?;
    let members: Vec<usize> = (1..=cfg.members).collect();
    let ops: Vec<OperatorSpec> = members.iter().map(|&n| cfg.operator(Some(n))).collect::<Result<_>>()?;
    let limit_op = cfg.operator(None)?;
    let mut warnings = Vec::new();

    let domain = SampleDomain::new(cfg.t_end, dim, cfg.lattice.half_width, 4.0);
    let monotonicity = check_h2_monotonicity(&cfg.nonlinearity, &domain, CERTIFICATE_SAMPLES)?;
    if !monotonicity.pass {
        return Err(Error::Gate(format!(
            "monotonicity certificate falsified: quotient {} exceeds declared {}",
            monotonicity.max_quotient, monotonicity.declared
        )));
    }
    let h2_nonnegative = cfg.nonlinearity.check_h2_sign(&domain, CERTIFICATE_SAMPLES);
    if !h2_nonnegative {
        return Err(Error::Gate("h2 takes negative values".into()));
    }

    let SymbolGates {
        symbol_distances,
        symbol_distance_verdict,
        coefficient_distances,
        hartman_wintner,
        domination,
        uniform_density_bound,
        warnings: gate_warnings,
    } = symbol_gates(cfg)?;
    warnings.extend(gate_warnings);

    // Solve the limit and every member; index 0 is the limit.
    let solver_cfg = cfg.solver_config();
    let problems: Vec<Problem> = std::iter::once(&limit_op)
        .chain(&ops)
        .map(|op| Problem::new(op.clone(), cfg.phi.clone(), cfg.t_end, lattice.clone()))
        .collect::<Result<_>>()?;
    let solutions: Vec<Solution> =
        exec::try_map_range(problems.len(), |k| solve_fixed_point(&problems[k], &cfg.nonlinearity, &solver_cfg))?;
    let limit = &solutions[0];
    let seq = &solutions[1..];
    let max_boundary_mass =
        solutions.iter().flat_map(|s| s.report.boundary_mass.iter().map(|b| b.1)).fold(0.0, f64::max);
    let max_exit_fraction = solutions.iter().map(|s| s.report.exit_fraction).fold(0.0, f64::max);

    let probes = solver_cfg.probes.clone().unwrap_or_else(|| default_probes(cfg.t_end, &lattice));
    let rule = TrendRule::with_floor(NOISE_FLOOR);
    let wants = |m: Metric| cfg.metrics.contains(&m);

    let mut pointwise = None;
    let gaps: Vec<Vec<f64>> = seq
        .iter()
        .map(|s| probes.iter().map(|p| (s.eval(p.s, &p.x) - limit.eval(p.s, &p.x)).abs()).collect())
        .collect();
    if wants(Metric::Pointwise) {
        let verdicts: Vec<Verdict> = (0..probes.len())
            .map(|k| trend_verdict(&gaps.iter().map(|g| g[k]).collect::<Vec<_>>(), &rule))
            .collect();
        let final_gap = gaps[gaps.len() - 1].iter().copied().fold(0.0, f64::max);
        let threshold = cfg.thresholds.final_gap;
        let std_errors = (cfg.solver.mode == Mode::MonteCarlo).then(|| {
            seq.iter()
                .map(|s| {
                    probes
                        .iter()
                        .map(|p| {
                            let a = s.std_err_at(p.s, &p.x).unwrap_or(0.0);
                            let b = limit.std_err_at(p.s, &p.x).unwrap_or(0.0);
                            a.max(b)
                        })
                        .collect()
                })
                .collect()
        });
        pointwise = Some(PointwiseMetric {
            probes: probes.clone(),
            gaps: gaps.clone(),
            std_errors,
            verdict: combine(&verdicts),
            verdicts,
            final_gap,
            final_gap_threshold: threshold,
            final_gap_pass: threshold.is_none_or(|t| final_gap < t),
        });
    }

    let mut times: Vec<f64> = probes.iter().map(|p| p.s).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let l1_values: Vec<Vec<f64>> = seq
        .iter()
        .map(|s| times.iter().map(|&t| l1_on_compact(&s.u, &limit.u, t, cfg.compact_half_width)).collect())
        .collect::<Result<_>>()?;
    let mut l1_compact = None;
    if wants(Metric::L1Compact) {
        let verdicts: Vec<Verdict> = (0..times.len())
            .map(|k| trend_verdict(&l1_values.iter().map(|v| v[k]).collect::<Vec<_>>(), &rule))
            .collect();
        l1_compact = Some(L1Metric {
            times: times.clone(),
            half_width: cfg.compact_half_width,
            values: l1_values.clone(),
            verdict: combine(&verdicts),
            verdicts,
        });
    }

    let mut weak_l2 = None;
    if wants(Metric::WeakL2) {
        let bank = test_bank();
        let us: Vec<GridFunction> = seq.iter().map(|s| s.u.clone()).collect();
        let values = weak_l2_pairings(&us, &limit.u, &bank)?;
        let verdicts: Vec<Verdict> = (0..bank.len())
            .map(|k| trend_verdict(&values.iter().map(|v| v[k].abs()).collect::<Vec<_>>(), &rule))
            .collect();
        weak_l2 = Some(WeakL2Metric {
            bank: bank.iter().map(|(n, _)| n.to_string()).collect(),
            values,
            verdict: combine(&verdicts),
            verdicts,
        });
    }

    // A probe gap inside the compact never exceeds the node sum the L¹ metric is built from.
    let cell = lattice.cell_volume();
    let metric_consistency = seq.iter().enumerate().all(|(n, _)| {
        probes.iter().enumerate().all(|(k, p)| {
            if p.x.iter().any(|c| c.abs() > cfg.compact_half_width) {
                return true;
            }
            let t = times.iter().position(|&t| t == p.s).expect("probe time is listed");
            gaps[n][k] <= l1_values[n][t] / cell + 1e-12
        })
    });

    let bounded_data = cfg.phi.is_bounded() && cfg.nonlinearity.h1.is_bounded();
    let convergence_gate = all_ok(symbol_distance_verdict)
        && (coefficient_distances.is_empty()
            || all_ok(trend_verdict(&coefficient_distances, &TrendRule::with_floor(NOISE_FLOOR))));
    let density_gate = cfg.sequence.is_levy()
        && cfg.solver.mode == Mode::Density
        && uniform_density_bound == Some(true)
        && hartman_wintner.iter().all(|h| h.verdict == HwVerdict::Satisfied)
        && domination.as_ref().is_some_and(|d| d.all_hold);
    let mut regimes = vec![RegimeClaim {
        regime: "pointwise".into(),
        gates_passed: bounded_data && convergence_gate,
        claimed: false,
        note: "bounded continuous terminal data, bounded f(.,.,0), converging symbols".into(),
    }];
    if cfg.sequence.is_levy() {
        regimes.push(RegimeClaim {
            regime: "l1_local".into(),
            gates_passed: density_gate && convergence_gate,
            claimed: false,
            note: "transition densities with a uniform sup bound".into(),
        });
        regimes.push(RegimeClaim {
            regime: "weak_l2".into(),
            gates_passed: density_gate && convergence_gate,
            claimed: false,
            note: "square-integrable data in density mode".into(),
        });
    } else {
        warnings.push("variable-coefficient sequence: only the pointwise regime applies".into());
    }
    let metric_for = |r: &str| match r {
        "pointwise" => pointwise.as_ref().map(|p| p.verdict),
        "l1_local" => l1_compact.as_ref().map(|l| l.verdict),
        _ => weak_l2.as_ref().map(|w| w.verdict),
    };
    for r in &mut regimes {
        r.claimed = r.gates_passed && metric_for(&r.regime).is_some_and(all_ok);
    }

    let mut pass = metric_consistency;
    if let Some(p) = &pointwise {
        pass &= all_ok(p.verdict) && p.final_gap_pass;
    }
    if let Some(l) = &l1_compact {
        pass &= all_ok(l.verdict);
    }
    if let Some(w) = &weak_l2 {
        pass &= all_ok(w.verdict);
    }

    let generated_at = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
    Ok(ConvergenceReport {
        schema: REPORT_SCHEMA,
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        master_seed: cfg.seed,
        generated_at,
        parameters: members.iter().map(|&n| cfg.sequence.parameters(n)).collect(),
        members,
        limit_probe_values: probes.iter().map(|p| limit.eval(p.s, &p.x)).collect(),
        solver_iterations: solutions.iter().map(|s| s.report.iterations).collect(),
        pointwise,
        l1_compact,
        weak_l2,
        gates: GateDiagnostics {
            symbol_distances,
            symbol_distance_verdict,
            coefficient_distances,
            hartman_wintner,
            domination,
            uniform_density_bound,
            monotonicity,
            h2_nonnegative,
            bounded_data,
            max_boundary_mass,
            max_exit_fraction,
            regimes,
        },
        metric_consistency,
        warnings,
        pass,
    })
}

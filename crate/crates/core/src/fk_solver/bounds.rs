//! A priori estimates checked against computed solutions: the pointwise
//! bound `|u(s,x)| ≤ e^{μ(T−s)} E(|φ(X_T)| + ∫_s^T |f(t,X_t,0)| dt)`, the
//! global `L²`/`L¹` bounds for Lévy operators, and the truncation tail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::GridFunction;
use crate::nonlinearity::Reaction;

use super::{solve_linear, Mode, Problem, Scheme, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s: f64,
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// `min (rhs + slack − |u|)` over checked points.
    pub margin: f64,
    pub checked: usize,
    /// At most [`MAX_WITNESSES`] violating points.
    pub witnesses: Vec<Witness>,
}

pub const MAX_WITNESSES: usize = 10;

fn same_grid(a: &GridFunction, b: &GridFunction) -> Result<()> {
    if a.knots.len() != b.knots.len() || a.lattice != b.lattice {
        return Err(Error::GridMismatch("solution and bound live on different grids".into()));
    }
    Ok(())
}

/// Pointwise bound at every knot and lattice node. `u_err` carries Monte
/// Carlo standard errors; the slack is `3·(se_u + se_rhs)` in that case and
/// `1e-9 + 1e-6·rhs` otherwise.
pub fn check_apriori_bound(
    u: &GridFunction,
    u_err: Option<&GridFunction>,
    problem: &Problem,
    f: &dyn Reaction,
    cfg: &SolverConfig,
) -> Result<BoundCheck> {
    let mu = f.mu();
    let lin_cfg = SolverConfig { scheme: Scheme::BackwardSweep, knots: u.knots.len() - 1, ..cfg.clone() };
    let phi_abs = |x: &[f64]| problem.phi_at(x).abs();
    let src = |t: f64, x: &[f64]| f.at_zero(t, x).map_or(f64::INFINITY, f64::abs);
    let w = solve_linear(problem, &phi_abs, &src, &lin_cfg)?;
    same_grid(u, &w.u)?;
    let n = u.lattice.len();
    let t_end = problem.t_end;
    let mut margin = f64::INFINITY;
    let mut witnesses = Vec::new();
    let mut holds = true;
    for (j, &s) in u.knots.iter().enumerate() {
        let factor = (mu * (t_end - s)).exp();
        for i in 0..n {
            let k = j * n + i;
            let rhs = factor * w.u.values[k];
            let slack = match (u_err, &w.std_err) {
                (Some(ue), Some(we)) if cfg.mode == Mode::MonteCarlo => 3.0 * (ue.values[k] + factor * we.values[k]),
                _ => 1e-9 + 1e-6 * rhs.abs(),
            };
            let lhs = u.values[k].abs();
            let m = rhs + slack - lhs;
            margin = margin.min(m);
            if m < 0.0 {
                holds = false;
                if witnesses.len() < MAX_WITNESSES {
                    witnesses.push(Witness { s, x: u.lattice.point(i), lhs, rhs });
                }
            }
        }
    }
    Ok(BoundCheck { holds, margin, checked: u.values.len(), witnesses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormCheck {
    pub label: String,
    pub s: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub checks: Vec<NormCheck>,
    pub all_hold: bool,
    /// Largest `lhs / rhs`.
    pub worst_ratio: f64,
}

/// Fraction of the lattice `L¹` mass carried by the outer 5% band of the box.
pub fn edge_mass_fraction(values: &[f64], lattice: &crate::grid::Lattice) -> f64 {
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut edge = 0.0;
    for (i, v) in values.iter().enumerate() {
        let idx = lattice.multi_index(i);
        let near = idx.iter().zip(&lattice.n).any(|(&k, &nk)| {
            let band = (nk / 20).max(1);
            k < band || k + band >= nk
        });
        if near {
            edge += v.abs();
        }
    }
    edge / total
}

fn trapezoid(values: &[f64], dt: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    dt * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

/// Global `L²` and `L¹` bounds at every knot with relative slack `slack`.
pub fn check_l2_l1_bounds(u: &GridFunction, problem: &Problem, f: &dyn Reaction, slack: f64) -> Result<NormBounds> {
    if !problem.op.is_constant() {
        return Err(Error::ModeMismatch("global norm bounds are stated for constant-coefficient operators".into()));
    }
    if u.lattice != problem.lattice {
        return Err(Error::GridMismatch("solution lattice differs from the problem lattice".into()));
    }
    let lat = &u.lattice;
    let n = lat.len();
    let vol = lat.cell_volume();
    let points = lat.points();
    let phi: Vec<f64> = points.iter().map(|x| problem.phi_at(x)).collect();
    for vals in [&phi[..], u.slice(0)] {
        let frac = edge_mass_fraction(vals, lat);
        if frac > 1e-3 {
            return Err(Error::LatticeCoverage(frac));
        }
    }
    let jn = u.knots.len() - 1;
    let dt = problem.t_end / jn as f64;
    let mu = f.mu();
    let t_end = problem.t_end;
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() * vol;
    let l2sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() * vol;

    let layers: Vec<(Vec<f64>, Vec<f64>)> = exec::try_map_range(jn + 1, |j| {
        let t = u.knots[j];
        let uj = u.slice(j);
        let mut f0 = Vec::with_capacity(n);
        let mut fu = Vec::with_capacity(n);
        for (i, x) in points.iter().enumerate() {
            f0.push(f.at_zero(t, x)?);
            fu.push(f.eval(t, x, uj[i])?);
        }
        Ok::<_, Error>((f0, fu))
    })?;
    let f0_l1: Vec<f64> = layers.iter().map(|l| l1(&l.0)).collect();
    let f0_l2: Vec<f64> = layers.iter().map(|l| l2sq(&l.0)).collect();
    let fu_l1: Vec<f64> = layers.iter().map(|l| l1(&l.1)).collect();
    let u_l1: Vec<f64> = (0..=jn).map(|j| l1(u.slice(j))).collect();
    let f0_q = trapezoid(&f0_l1, dt);
    let phi_l1 = l1(&phi);
    let phi_l2 = l2sq(&phi);

    let mut checks = Vec::new();
    let mut push = |label: &str, s: Option<f64>, lhs: f64, rhs: f64| {
        let holds = lhs <= rhs * (1.0 + slack) + 1e-12;
        checks.push(NormCheck { label: label.to_string(), s, lhs, rhs, holds });
    };
    for j in 0..jn {
        let s = u.knots[j];
        let tail = trapezoid(&f0_l2[j..], dt);
        let rhs = 2.0 * (2.0 * mu * t_end).exp() * (phi_l2 + (t_end - s) * tail);
        push("l2_energy", Some(s), l2sq(u.slice(j)), rhs);
        let rhs = (mu * (t_end - s)).exp() * (phi_l1 + f0_q);
        push("l1_solution", Some(s), u_l1[j], rhs);
    }
    let rhs = (mu * t_end).exp() * (phi_l1 + 2.0 * f0_q) + mu * trapezoid(&u_l1, dt);
    push("l1_reaction", None, trapezoid(&fu_l1, dt), rhs);
    let all_hold = checks.iter().all(|c| c.holds);
    let worst_ratio = checks
        .iter()
        .map(|c| if c.rhs > 0.0 { c.lhs / c.rhs } else if c.lhs > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(NormBounds { checks, all_hold, worst_ratio })
}

/// `E ∫_s^T |f(t, X_t, 0)| 1{|f(t, X_t, 0)| > k} dt` on the solver grid.
pub fn truncation_tail_bound(problem: &Problem, f: &dyn Reaction, k: f64, cfg: &SolverConfig) -> Result<GridFunction> {
    let zero = |_: &[f64]| 0.0;
    let src = |t: f64, x: &[f64]| {
        let v = f.at_zero(t, x).map_or(f64::INFINITY, f64::abs);
        if v > k {
            v
        } else {
            0.0
        }
    };
    let cfg = SolverConfig { scheme: Scheme::BackwardSweep, ..cfg.clone() };
    Ok(solve_linear(problem, &zero, &src, &cfg)?.u)
}

//! Path-level backward solver: Picard iterates of
//! `Y_t = ξ + ∫_t^T f(s, X_s, Y_s) ds − (M_T − M_t)` with conditional
//! expectations replaced by least-squares regression on features of `X_t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::GridFunction;
use crate::nonlinearity::{MuTransformed, Reaction};
use crate::sampling::CoupledDriver;
use crate::sde::{euler_paths, quantile_sorted, DistanceStats, PathBundle};
use crate::stats;
use crate::symbols::{radial_grid, symbol_distance, OperatorSpec};

/// Polynomials of total degree `≤ degree` in standardized coordinates plus
/// radial bumps `exp(−|z|²/(2w²))` for each width `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    pub bump_widths: Vec<f64>,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec { degree: 3, bump_widths: vec![0.5, 1.0, 2.0] }
    }
}

impl BasisSpec {
    pub fn constant() -> Self {
        BasisSpec { degree: 0, bump_widths: Vec::new() }
    }

    fn exponents(&self, d: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = vec![0usize; d];
        fn rec(a: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if a == cur.len() {
                out.push(cur.clone());
                return;
            }
            for e in 0..=left {
                cur[a] = e;
                rec(a + 1, left - e, cur, out);
            }
            cur[a] = 0;
        }
        rec(0, self.degree, &mut cur, &mut out);
        out.sort_by_key(|e| e.iter().sum::<usize>());
        out
    }

    pub fn len(&self, d: usize) -> usize {
        self.exponents(d).len() + self.bump_widths.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Largest standardized coordinate fed to the basis.
const Z_CLIP: f64 = 6.0;

struct Features {
    exps: Vec<Vec<usize>>,
    widths: Vec<f64>,
    centre: Vec<f64>,
    scale: Vec<f64>,
}

impl Features {
    /// Median/IQR standardization of the cross-section; `None` when it is degenerate.
    fn fit(spec: &BasisSpec, xs: &[&[f64]]) -> Option<Self> {
        let d = xs[0].len();
        let mut centre = vec![0.0; d];
        let mut scale = vec![0.0; d];
        let mut degenerate = true;
        for a in 0..d {
            let mut col: Vec<f64> = xs.iter().map(|x| x[a]).collect();
            col.sort_by(f64::total_cmp);
            let med = quantile_sorted(&col, 0.5);
            let mut s = (quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25)) / 1.349;
            if !(s > 1e-12) {
                s = stats::variance(&col).sqrt();
            }
            if s > 1e-12 {
                degenerate = false;
            } else {
                s = 1.0;
            }
            centre[a] = med;
            scale[a] = s;
        }
        if degenerate {
            return None;
        }
        Some(Features { exps: spec.exponents(d), widths: spec.bump_widths.clone(), centre, scale })
    }

    fn len(&self) -> usize {
        self.exps.len() + self.widths.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let z: Vec<f64> = x
            .iter()
            .zip(&self.centre)
            .zip(&self.scale)
            .map(|((v, c), s)| ((v - c) / s).clamp(-Z_CLIP, Z_CLIP))
            .collect();
        for (k, e) in self.exps.iter().enumerate() {
            out[k] = e.iter().zip(&z).map(|(&p, &v)| v.powi(p as i32)).product();
        }
        let r2: f64 = z.iter().map(|v| v * v).sum();
        for (k, w) in self.widths.iter().enumerate() {
            out[self.exps.len() + k] = (-r2 / (2.0 * w * w)).exp();
        }
    }
}

const CHUNK: usize = 1024;

/// Least-squares fit of `y` on the features of `xs`.
/// Returns fitted values and, when asked, HC0 standard errors of the coefficients.
struct Fit {
    fitted: Vec<f64>,
    coef: Vec<f64>,
    se: Vec<f64>,
}

fn regress(feat: &Features, xs: &[&[f64]], y: &[f64], want_se: bool) -> Result<Fit> {
    let p = feat.len();
    let m = xs.len();
    if m <= p {
        return Err(Error::Basis(format!("{m} samples cannot identify {p} coefficients")));
    }
    let rows: Vec<Vec<f64>> = exec::map_range(m, |i| {
        let mut r = vec![0.0; p];
        feat.eval(xs[i], &mut r);
        r
    });
    let chunks = m.div_ceil(CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = exec::map_range(chunks, |c| {
        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        for i in c * CHUNK..((c + 1) * CHUNK).min(m) {
            let r = &rows[i];
            for u in 0..p {
                b[u] += r[u] * y[i];
                for v in 0..=u {
                    a[u * p + v] += r[u] * r[v];
                }
            }
        }
        (a, b)
    });
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (pa, pb) in &partial {
        for u in 0..p {
            b[u] += pb[u];
            for v in 0..=u {
                a[(u, v)] += pa[u * p + v];
            }
        }
    }
    for u in 0..p {
        for v in 0..u {
            a[(v, u)] = a[(u, v)];
        }
    }
    let chol = a.clone().cholesky().ok_or_else(|| Error::Basis("singular normal equations".into()))?;
    let l = chol.l();
    let diag: Vec<f64> = (0..p).map(|k| l[(k, k)] * l[(k, k)]).collect();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 1e-12 * hi) {
        return Err(Error::Basis(format!("design is numerically rank deficient (pivot ratio {:e})", lo / hi)));
    }
    let beta = chol.solve(&b);
    let coef: Vec<f64> = beta.iter().copied().collect();
    let fitted: Vec<f64> = rows.iter().map(|r| r.iter().zip(&coef).map(|(a, b)| a * b).sum()).collect();
    let se = if want_se {
        let inv = chol.inverse();
        let mut meat = DMatrix::<f64>::zeros(p, p);
        for i in 0..m {
            let e = y[i] - fitted[i];
            let r = &rows[i];
            for u in 0..p {
                for v in 0..p {
                    meat[(u, v)] += e * e * r[u] * r[v];
                }
            }
        }
        let cov = &inv * meat * &inv;
        (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect()
    } else {
        Vec::new()
    };
    Ok(Fit { fitted, coef, se })
}

/// Conditional expectation of `y` given `X_j`: regression, or the sample mean
/// when the cross-section is degenerate.
fn conditional(spec: &BasisSpec, xs: &[&[f64]], y: &[f64]) -> Result<Vec<f64>> {
    if spec.degree == 0 && spec.bump_widths.is_empty() {
        return Ok(vec![stats::mean(y); y.len()]);
    }
    match Features::fit(spec, xs) {
        Some(feat) => Ok(regress(&feat, xs, y, false)?.fitted),
        None => Ok(vec![stats::mean(y); y.len()]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsdeConfig {
    /// Picard sweeps `K`.
    pub iterations: usize,
    /// Early stop when the path-mean sup distance between sweeps drops below this.
    pub tol: f64,
    pub basis: BasisSpec,
    /// Winsorize regression targets at the 0.1% / 99.9% quantiles below this stability index.
    pub winsorize_below_alpha: f64,
}

impl Default for BsdeConfig {
    fn default() -> Self {
        BsdeConfig { iterations: 8, tol: 1e-8, basis: BasisSpec::default(), winsorize_below_alpha: 1.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsdeSolution {
    pub times: Vec<f64>,
    pub m: usize,
    /// `Y`, path-major `[path][knot]`.
    pub y: Vec<f64>,
    /// `M`, same layout; `M[·][0] = 0`.
    pub mart: Vec<f64>,
    pub basis: BasisSpec,
    pub iterations: usize,
    /// Path-mean sup distance between successive sweeps.
    pub sweep_distances: Vec<f64>,
    pub winsorized: bool,
    /// Monte Carlo standard error of `Y_{s₀}`.
    pub y0_se: f64,
    /// Root-mean-square regression residual at the first knot after `s₀`, over `√M`.
    pub regression_se: f64,
}

impl BsdeSolution {
    pub fn knots(&self) -> usize {
        self.times.len()
    }

    pub fn y_path(&self, i: usize) -> &[f64] {
        let k = self.knots();
        &self.y[i * k..(i + 1) * k]
    }

    pub fn m_path(&self, i: usize) -> &[f64] {
        let k = self.knots();
        &self.mart[i * k..(i + 1) * k]
    }

    pub fn y0(&self) -> f64 {
        stats::mean(&(0..self.m).map(|i| self.y[i * self.knots()]).collect::<Vec<_>>())
    }

    /// `√(se_mc² + se_reg²)`.
    pub fn combined_error(&self) -> f64 {
        self.y0_se.hypot(self.regression_se)
    }

    /// `t, mean Y, q05, q50, q95` per knot, plus the martingale diagnostic when given.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, diag: Option<&MartingaleDiagnostic>, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "t,mean_y,q05,q50,q95,max_abs_z")?;
        let k = self.knots();
        for j in 0..k {
            let mut col: Vec<f64> = (0..self.m).map(|i| self.y[i * k + j]).collect();
            let mean = stats::mean(&col);
            col.sort_by(f64::total_cmp);
            let z = diag.and_then(|d| d.max_abs_z.get(j).copied()).unwrap_or(f64::NAN);
            writeln!(
                w,
                "{:e},{mean:e},{:e},{:e},{:e},{z:e}",
                self.times[j],
                quantile_sorted(&col, 0.05),
                quantile_sorted(&col, 0.5),
                quantile_sorted(&col, 0.95)
            )?;
        }
        Ok(())
    }
}

fn winsorize(y: &mut [f64]) {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&s, 0.001);
    let hi = quantile_sorted(&s, 0.999);
    for v in y.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

fn trapezoid_weight(l: usize, j: usize, n: usize, h: f64) -> f64 {
    if l == j || l == n {
        0.5 * h
    } else {
        h
    }
}

/// Picard iterates on the bundle grid: `U^κ_{t_j}` is the regression on `X_{t_j}` of the
/// one-step target `U^κ_{t_{j+1}} + h/2 (f_j + f_{j+1})`, with `f` evaluated along `U^{κ−1}`.
pub fn picard_bsde(
    paths: &PathBundle,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    f: &dyn Reaction,
    cfg: &BsdeConfig,
) -> Result<BsdeSolution> {
    if cfg.iterations < 1 {
        return Err(Error::InvalidSpec("at least one Picard sweep is required".into()));
    }
    let m = paths.m;
    let n = paths.steps;
    let k = n + 1;
    let h = paths.h;
    let times: Vec<f64> = (0..k).map(|j| paths.time(j)).collect();
    let t_end = times[n];
    let mu = f.mu();
    let ft = MuTransformed { inner: f, mu };
    let lift = (mu * t_end).exp();
    let winsorized = paths.op.psi.min_alpha() < cfg.winsorize_below_alpha;

    let xi: Vec<f64> = exec::map_range(m, |i| lift * phi(paths.terminal(i)));
    let cross: Vec<Vec<&[f64]>> = (0..k).map(|j| (0..m).map(|i| paths.point(i, j)).collect()).collect();

    let mut u = vec![0.0; m * k];
    let mut distances = Vec::new();
    let mut iterations = 0;
    let mut reg_se = 0.0;
    let mut y0_se = 0.0;
    for _ in 0..cfg.iterations {
        // Per-path f along the previous iterate.
        let fvals: Vec<f64> = exec::try_map_range(m * k, |idx| {
            let (i, j) = (idx / k, idx % k);
            ft.eval(times[j], paths.point(i, j), u[idx])
        })?;
        let mut next = vec![0.0; m * k];
        for i in 0..m {
            next[i * k + n] = xi[i];
        }
        for j in (0..n).rev() {
            let mut target: Vec<f64> = (0..m)
                .map(|i| next[i * k + j + 1] + 0.5 * h * (fvals[i * k + j] + fvals[i * k + j + 1]))
                .collect();
            if winsorized {
                winsorize(&mut target);
            }
            let fit = conditional(&cfg.basis, &cross[j], &target)?;
            if j == 1 {
                let rss: Vec<f64> = target.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).collect();
                reg_se = (stats::mean(&rss) / m as f64).sqrt();
            }
            if j == 0 {
                let realized: Vec<f64> = (0..m)
                    .map(|i| xi[i] + (0..=n).map(|l| trapezoid_weight(l, 0, n, h) * fvals[i * k + l]).sum::<f64>())
                    .collect();
                y0_se = stats::std_error(&realized);
            }
            for i in 0..m {
                next[i * k + j] = fit[i];
            }
        }
        iterations += 1;
        let sups: Vec<f64> = (0..m)
            .map(|i| (0..k).map(|j| (next[i * k + j] - u[i * k + j]).abs()).fold(0.0, f64::max))
            .collect();
        let dist = stats::mean(&sups);
        distances.push(dist);
        u = next;
        if dist < cfg.tol {
            break;
        }
    }
    let mut y = u;
    for i in 0..m {
        for j in 0..k {
            y[i * k + j] *= (-mu * times[j]).exp();
        }
        y[i * k + n] = phi(paths.terminal(i));
    }
    let scale0 = (-mu * times[0]).exp();
    let mut sol = BsdeSolution {
        times,
        m,
        y,
        mart: vec![0.0; m * k],
        basis: cfg.basis.clone(),
        iterations,
        sweep_distances: distances,
        winsorized,
        y0_se: y0_se * scale0,
        regression_se: reg_se * scale0,
    };
    sol.mart = martingale_path(&sol, paths, f)?;
    Ok(sol)
}

/// `M_t = Y_t − Y_{s₀} + ∫_{s₀}^t f(s, X_s, Y_s) ds` per path (trapezoid rule).
pub fn martingale_path(sol: &BsdeSolution, paths: &PathBundle, f: &dyn Reaction) -> Result<Vec<f64>> {
    let k = sol.knots();
    if paths.m != sol.m || paths.steps + 1 != k {
        return Err(Error::GridMismatch("solution and paths are not aligned".into()));
    }
    let h = paths.h;
    let rows: Vec<Vec<f64>> = exec::try_map_range(sol.m, |i| {
        let y = sol.y_path(i);
        let mut out = vec![0.0; k];
        let mut integral = 0.0;
        let mut prev = f.eval(sol.times[0], paths.point(i, 0), y[0])?;
        for j in 1..k {
            let cur = f.eval(sol.times[j], paths.point(i, j), y[j])?;
            integral += 0.5 * h * (prev + cur);
            prev = cur;
            out[j] = y[j] - y[0] + integral;
        }
        Ok::<_, Error>(out)
    })?;
    Ok(rows.concat())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDiagnostic {
    /// `z`-scores of increment-regression coefficients, per knot interval.
    pub z_scores: Vec<Vec<f64>>,
    pub max_abs_z: Vec<f64>,
    /// Fraction of coefficients with `|z| > 3`.
    pub exceed_fraction: f64,
    pub pass: bool,
}

/// Largest admissible fraction of `|z| > 3` coefficients.
pub const MARTINGALE_EXCEED_LIMIT: f64 = 0.02;

/// Recomputes `M` for `sol` and tests its increments for zero conditional mean.
pub fn martingale_residual(
    sol: &BsdeSolution,
    paths: &PathBundle,
    f: &dyn Reaction,
) -> Result<(Vec<f64>, MartingaleDiagnostic)> {
    let mart = martingale_path(sol, paths, f)?;
    let k = sol.knots();
    let m = sol.m;
    let mut z_scores = Vec::with_capacity(k - 1);
    let mut max_abs_z = Vec::with_capacity(k - 1);
    let mut total = 0usize;
    let mut exceed = 0usize;
    for j in 0..k - 1 {
        let inc: Vec<f64> = (0..m).map(|i| mart[i * k + j + 1] - mart[i * k + j]).collect();
        let xs: Vec<&[f64]> = (0..m).map(|i| paths.point(i, j)).collect();
        let zs: Vec<f64> = match Features::fit(&sol.basis, &xs) {
            Some(feat) if !(sol.basis.degree == 0 && sol.basis.bump_widths.is_empty()) => {
                let fit = regress(&feat, &xs, &inc, true)?;
                fit.coef.iter().zip(&fit.se).map(|(c, s)| z_of(*c, *s)).collect()
            }
            _ => vec![z_of(stats::mean(&inc), stats::std_error(&inc))],
        };
        total += zs.len();
        exceed += zs.iter().filter(|z| z.abs() > 3.0).count();
        max_abs_z.push(zs.iter().fold(0.0f64, |a, z| a.max(z.abs())));
        z_scores.push(zs);
    }
    let exceed_fraction = exceed as f64 / total.max(1) as f64;
    let diag = MartingaleDiagnostic { z_scores, max_abs_z, exceed_fraction, pass: exceed_fraction <= MARTINGALE_EXCEED_LIMIT };
    Ok((mart, diag))
}

fn z_of(c: f64, s: f64) -> f64 {
    if s > 0.0 {
        c / s
    } else if c.abs() <= 1e-13 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovGap {
    pub sup: f64,
    pub mean: f64,
    /// Gap restricted to the terminal knot.
    pub terminal_sup: f64,
    pub exit_fraction: f64,
}

/// Largest tolerated fraction of path points outside the `u` lattice.
pub const EXIT_CAP: f64 = 0.05;

/// Statistics of `|Y_t − u(t, X_t)|` over paths and knots, excluding points off the lattice.
pub fn markov_representation_check(sol: &BsdeSolution, paths: &PathBundle, u: &GridFunction) -> Result<MarkovGap> {
    let k = sol.knots();
    if paths.m != sol.m || paths.steps + 1 != k {
        return Err(Error::GridMismatch("solution and paths are not aligned".into()));
    }
    let mut sup = 0.0f64;
    let mut terminal_sup = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut outside = 0usize;
    for i in 0..sol.m {
        for j in 0..k {
            let x = paths.point(i, j);
            if !u.lattice.contains(x) {
                outside += 1;
                continue;
            }
            let gap = (sol.y[i * k + j] - u.eval(sol.times[j], x)).abs();
            sup = sup.max(gap);
            sum += gap;
            count += 1;
            if j == k - 1 {
                terminal_sup = terminal_sup.max(gap);
            }
        }
    }
    let exit_fraction = outside as f64 / (sol.m * k) as f64;
    if exit_fraction > EXIT_CAP {
        return Err(Error::LatticeCoverage(exit_fraction));
    }
    Ok(MarkovGap { sup, mean: sum / count.max(1) as f64, terminal_sup, exit_fraction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledMember {
    pub n: usize,
    pub y_dist: DistanceStats,
    pub m_dist: DistanceStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledGates {
    pub symbol_distances: Vec<f64>,
    pub symbol_distance_decreasing: bool,
    /// `E[|ξₙ| 1{|ξₙ| > K}]` for `K = 10, 100`.
    pub tail_means: Vec<[f64; 2]>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledReport {
    pub members: Vec<CoupledMember>,
    pub gates: CoupledGates,
    pub limit_y0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub s: f64,
    pub t_end: f64,
    pub steps: usize,
    pub paths: usize,
}

/// Solves the limit and every member on paths driven by the same primitives and
/// reports per-path `sup_t |Yⁿ_t − Y_t|` and `sup_t |Mⁿ_t − M_t|`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_bsde_convergence(
    op_seq: &[OperatorSpec],
    op_limit: &OperatorSpec,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    f: &dyn Reaction,
    driver: &CoupledDriver,
    x: &[f64],
    run: &CoupledRun,
    cfg: &BsdeConfig,
) -> Result<CoupledReport> {
    let h = (run.t_end - run.s) / run.steps as f64;
    let base_paths = euler_paths(op_limit, run.s, x, run.t_end, h, run.paths, driver)?;
    let base = picard_bsde(&base_paths, phi, f, cfg)?;
    let k = base.knots();

    let xi_grid = radial_grid(op_limit.psi.dim, &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0]);
    let mut symbol_distances = Vec::new();
    let mut warnings = Vec::new();
    let mut members = Vec::new();
    let mut tail_means = Vec::new();
    for (idx, op) in op_seq.iter().enumerate() {
        symbol_distances.push(symbol_distance(&op.psi, &op_limit.psi, &xi_grid).unwrap_or(f64::NAN));
        let p = euler_paths(op, run.s, x, run.t_end, h, run.paths, driver)?;
        let terminal: Vec<f64> = (0..p.m).map(|i| phi(p.terminal(i)).abs()).collect();
        let tail = |lvl: f64| stats::mean(&terminal.iter().map(|&g| if g > lvl { g } else { 0.0 }).collect::<Vec<_>>());
        tail_means.push([tail(10.0), tail(100.0)]);
        let sol = picard_bsde(&p, phi, f, cfg)?;
        let ydist: Vec<f64> = (0..run.paths)
            .map(|i| (0..k).map(|j| (sol.y[i * k + j] - base.y[i * k + j]).abs()).fold(0.0, f64::max))
            .collect();
        let mdist: Vec<f64> = (0..run.paths)
            .map(|i| (0..k).map(|j| (sol.mart[i * k + j] - base.mart[i * k + j]).abs()).fold(0.0, f64::max))
            .collect();
        members.push(CoupledMember {
            n: idx + 1,
            y_dist: DistanceStats::from_values(ydist),
            m_dist: DistanceStats::from_values(mdist),
        });
    }
    let symbol_distance_decreasing = symbol_distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    if !symbol_distance_decreasing {
        warnings.push("symbol distances are not nonincreasing along the sequence".into());
    }
    if tail_means.iter().any(|t| t[1] > 0.0) {
        warnings.push("terminal values exceed 100 on some paths".into());
    }
    Ok(CoupledReport {
        members,
        gates: CoupledGates { symbol_distances, symbol_distance_decreasing, tail_means, warnings },
        limit_y0: base.y0(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{NonlinearitySpec, SpaceTimeFn};
    use crate::symbols::SymbolSpec;

    fn gauss_paths(m: usize, seed: u64) -> PathBundle {
        let op = OperatorSpec::levy(SymbolSpec::stable(2.0, 1).unwrap());
        euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 16.0, m, &CoupledDriver::new(seed)).unwrap()
    }

    fn bump(x: &[f64]) -> f64 {
        (-x[0] * x[0] / 2.0).exp()
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(BasisSpec::default().len(1), 7);
        assert_eq!(BasisSpec::default().len(2), 13);
        assert_eq!(BasisSpec::constant().len(3), 1);
    }

    #[test]
    fn constant_basis_reduces_to_path_average() {
        let p = gauss_paths(4000, 1);
        let cfg = BsdeConfig { basis: BasisSpec::constant(), ..Default::default() };
        let sol = picard_bsde(&p, &bump, &NonlinearitySpec::zero(), &cfg).unwrap();
        let avg = stats::mean(&(0..p.m).map(|i| bump(p.terminal(i))).collect::<Vec<_>>());
        assert!((sol.y0() - avg).abs() < 1e-12);
        for i in 0..p.m {
            assert_eq!(sol.y_path(i)[16], bump(p.terminal(i)));
            assert_eq!(sol.m_path(i)[0], 0.0);
        }
    }

    #[test]
    fn constant_shift_commutes() {
        let p = gauss_paths(3000, 2);
        let cfg = BsdeConfig::default();
        let a = picard_bsde(&p, &bump, &NonlinearitySpec::zero(), &cfg).unwrap();
        let b = picard_bsde(&p, &bump, &NonlinearitySpec::source(SpaceTimeFn::constant(0.4)), &cfg).unwrap();
        for i in (0..p.m).step_by(97) {
            for j in 0..16 {
                let t = a.times[j];
                assert!((b.y_path(i)[j] - a.y_path(i)[j] - 0.4 * (1.0 - t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_data_gives_zero_martingale() {
        let p = gauss_paths(500, 3);
        let one = |_: &[f64]| 1.0;
        let sol = picard_bsde(&p, &one, &NonlinearitySpec::zero(), &BsdeConfig::default()).unwrap();
        assert!(sol.y.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!(sol.mart.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn martingale_diagnostic_and_negative_control() {
        let p = gauss_paths(5000, 4);
        let f = NonlinearitySpec::power(SpaceTimeFn::Zero, SpaceTimeFn::constant(1.0), 3.0);
        let sol = picard_bsde(&p, &bump, &f, &BsdeConfig::default()).unwrap();
        let (_, diag) = martingale_residual(&sol, &p, &f).unwrap();
        assert!(diag.pass, "exceed fraction {}", diag.exceed_fraction);
        let mut bad = sol.clone();
        let k = bad.knots();
        for i in 0..bad.m {
            for j in 0..k {
                bad.y[i * k + j] += 5.0 * bad.times[j];
            }
        }
        let (_, diag) = martingale_residual(&bad, &p, &f).unwrap();
        assert!(!diag.pass, "{:?} {:?}", diag.exceed_fraction, diag.z_scores);
    }

    #[test]
    fn picard_sweeps_contract() {
        let p = gauss_paths(2000, 5);
        let f = NonlinearitySpec::linear(-1.0);
        let sol = picard_bsde(&p, &bump, &f, &BsdeConfig { iterations: 8, tol: 0.0, ..Default::default() }).unwrap();
        let d = &sol.sweep_distances;
        for w in d.windows(2).skip(1) {
            assert!(w[1] <= w[0] * 1.0 * 1.1 + 1e-12, "{d:?}");
        }
        assert!(d[7] < 1e-3 * d[1]);
    }

    #[test]
    fn identical_operators_give_zero_distance() {
        let op = OperatorSpec::levy(SymbolSpec::stable(1.7, 1).unwrap());
        let run = CoupledRun { s: 0.0, t_end: 1.0, steps: 8, paths: 500 };
        let f = NonlinearitySpec::zero();
        let rep = coupled_bsde_convergence(
            &[op.clone(), op.clone()],
            &op,
            &bump,
            &f,
            &CoupledDriver::new(7),
            &[0.0],
            &run,
            &BsdeConfig::default(),
        )
        .unwrap();
        for m in &rep.members {
            assert_eq!(m.y_dist.max, 0.0);
            assert_eq!(m.m_dist.max, 0.0);
        }
    }
}

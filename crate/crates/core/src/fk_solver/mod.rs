//! Fixed point of the nonlinear Feynman–Kac map
//! `u(s,x) = E[φ(X_T^{s,x}) + ∫_s^T f(t, X_t^{s,x}, u(t, X_t^{s,x})) dt]`.
//!
//! Time is discretized on `J + 1` uniform knots with the composite trapezoid
//! rule. In density mode the expectation is a spectral convolution against the
//! transition density, applied one knot interval at a time through the
//! backward recursion `B_j = P_Δ(B_{j+1} + Δ F_{j+1})`. In Monte Carlo mode
//! every lattice node owns a bundle of Euler paths started at time 0; by time
//! homogeneity the first `J − j` knots of a path serve as the path started at
//! knot `j`.
//!
//! Both modes share the same sweep. [`Scheme::Picard`] evaluates the map at the
//! previous iterate; [`Scheme::BackwardSweep`] solves the discrete equations
//! directly, knot by knot, treating the diagonal trapezoid term implicitly.

pub mod bounds;
pub mod propagator;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{GridFunction, Lattice};
use crate::nonlinearity::{MuTransformed, Reaction};
use crate::nonlinearity::SpaceTimeFn;
use crate::sampling::CoupledDriver;
use crate::sde::euler_paths;
use crate::symbols::OperatorSpec;

use propagator::{boundary_mass, Padding, SpectralPropagator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Density,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Picard,
    BackwardSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps_per_knot: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { paths: 2000, steps_per_knot: 4, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub s: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: Mode,
    pub scheme: Scheme,
    /// Number of knot intervals `J`.
    pub knots: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Picard relaxation; 1 means plain iteration.
    pub relaxation: f64,
    pub boundary_mass_limit: f64,
    pub mc: McConfig,
    #[serde(default)]
    pub probes: Option<Vec<Probe>>,
    /// Points where the boundary-mass guard is evaluated; defaults to the probe locations.
    #[serde(default)]
    pub guard_points: Option<Vec<Vec<f64>>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: Mode::Density,
            scheme: Scheme::Picard,
            knots: 64,
            tol: 1e-10,
            max_iter: 200,
            relaxation: 1.0,
            boundary_mass_limit: 1e-3,
            mc: McConfig::default(),
            probes: None,
            guard_points: None,
        }
    }
}

impl SolverConfig {
    pub fn monte_carlo(mc: McConfig) -> Self {
        SolverConfig { mode: Mode::MonteCarlo, knots: 16, mc, ..Self::default() }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_knots(mut self, knots: usize) -> Self {
        self.knots = knots;
        self
    }
}

/// Operator, terminal data, horizon and space lattice of one Cauchy problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub op: OperatorSpec,
    pub phi: SpaceTimeFn,
    pub t_end: f64,
    pub lattice: Lattice,
}

impl Problem {
    pub fn new(op: OperatorSpec, phi: SpaceTimeFn, t_end: f64, lattice: Lattice) -> Result<Self> {
        if op.dim != lattice.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim, got: lattice.dim() });
        }
        if !(t_end > 0.0) {
            return Err(Error::InvalidSpec(format!("horizon T = {t_end} must be positive")));
        }
        Ok(Problem { op, phi, t_end, lattice })
    }

    pub fn phi_at(&self, x: &[f64]) -> f64 {
        self.phi.eval(self.t_end, x)
    }

    pub fn knots(&self, intervals: usize) -> Vec<f64> {
        (0..=intervals).map(|j| self.t_end * j as f64 / intervals as f64).collect()
    }
}

/// `{0, T/2} × {c, c ± a e₁}` with `c` the box centre and `a = min(1, half-width / 2)`.
pub fn default_probes(t_end: f64, lattice: &Lattice) -> Vec<Probe> {
    let d = lattice.dim();
    let centre: Vec<f64> = (0..d).map(|k| 0.5 * (lattice.lo[k] + lattice.hi(k))).collect();
    let a = (0.25 * (lattice.hi(0) - lattice.lo[0])).min(1.0);
    let mut out = Vec::with_capacity(6);
    for s in [0.0, 0.5 * t_end] {
        for off in [0.0, -a, a] {
            let mut x = centre.clone();
            x[0] += off;
            out.push(Probe { s, x });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeValue {
    pub s: f64,
    pub x: Vec<f64>,
    pub u: f64,
    /// `|Φ(u) − u|` at the probe, with `Φ` the discrete Feynman–Kac map.
    pub residual: f64,
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: Mode,
    pub scheme: Scheme,
    pub iterations: usize,
    /// Sup distance between successive iterates (transformed variables).
    pub distances: Vec<f64>,
    pub probes: Vec<ProbeValue>,
    /// `(point, mass)` pairs of the boundary-mass guard.
    pub boundary_mass: Vec<(Vec<f64>, f64)>,
    /// Fraction of Monte Carlo path points outside the lattice.
    pub exit_fraction: f64,
    pub mu: f64,
}

impl SolveReport {
    /// Whether distances are nonincreasing after the first `burn_in` sweeps.
    pub fn distances_monotone(&self, burn_in: usize) -> bool {
        self.distances.iter().skip(burn_in).collect::<Vec<_>>().windows(2).all(|w| w[1] <= w[0])
    }

    pub fn max_residual(&self) -> f64 {
        self.probes.iter().map(|p| p.residual).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridFunction,
    /// Monte Carlo standard errors of `u`, same layout.
    pub std_err: Option<GridFunction>,
    pub report: SolveReport,
}

impl Solution {
    pub fn eval(&self, s: f64, x: &[f64]) -> f64 {
        self.u.eval(s, x)
    }

    pub fn std_err_at(&self, s: f64, x: &[f64]) -> Option<f64> {
        self.std_err.as_ref().map(|g| g.eval(s, x))
    }
}

/// Path positions at knot offsets, `[node][path][offset][coordinate]`.
struct KnotPaths {
    m: usize,
    d: usize,
    offsets: usize,
    data: Vec<f64>,
    exit_fraction: f64,
}

impl KnotPaths {
    fn point(&self, node: usize, path: usize, l: usize) -> &[f64] {
        let base = ((node * self.m + path) * (self.offsets + 1) + l) * self.d;
        &self.data[base..base + self.d]
    }
}

enum Kind {
    Density { prop: SpectralPropagator, step: Vec<Complex64> },
    Mc(KnotPaths),
}

struct Engine<'a> {
    problem: &'a Problem,
    knots: Vec<f64>,
    dt: f64,
    points: Vec<Vec<f64>>,
    kind: Kind,
    boundary: Vec<(Vec<f64>, f64)>,
}

type Phi<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Solves `y − w·g(y) = e` for nonincreasing `g`.
fn solve_implicit(e: f64, w: f64, g: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let g0 = g(e)?;
    if g0 == 0.0 {
        return Ok(e);
    }
    let h = |y: f64| -> Result<f64> { Ok(y - w * g(y)? - e) };
    let (mut a, mut b) = (e, e + w * g0);
    let (mut fa, mut fb) = (h(a)?, h(b)?);
    if fa * fb > 0.0 {
        // Not monotone on this bracket: fall back to fixed-point iteration.
        let mut y = b;
        for _ in 0..200 {
            let next = e + w * g(y)?;
            if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) {
                return Ok(next);
            }
            y = next;
        }
        return Err(Error::NonConvergence { iterations: 200, distance: fb.abs() });
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = h(c)?;
        if fc == 0.0 || (b - a).abs() <= 1e-15 * (1.0 + c.abs()) {
            return Ok(c);
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
            side = 0;
        } else {
            side += 1;
            if side >= 2 {
                fa *= 0.5;
            }
        }
        b = c;
        fb = fc;
        if fb.abs() <= 1e-16 * (1.0 + e.abs()) {
            return Ok(b);
        }
    }
    Ok(b)
}

impl<'a> Engine<'a> {
    fn new(problem: &'a Problem, cfg: &SolverConfig, guard: &[Vec<f64>]) -> Result<Self> {
        let lattice = &problem.lattice;
        if cfg.knots == 0 {
            return Err(Error::InvalidSpec("need at least one knot interval".into()));
        }
        let knots = problem.knots(cfg.knots);
        let dt = problem.t_end / cfg.knots as f64;
        let points = lattice.points();
        let (kind, boundary) = match cfg.mode {
            Mode::Density => {
                let d = lattice.dim();
                if !(1..=2).contains(&d) {
                    return Err(Error::UnsupportedDimension(d));
                }
                if !problem.op.is_constant() {
                    return Err(Error::ModeMismatch("density mode needs constant coefficients".into()));
                }
                let prop = SpectralPropagator::new(&problem.op, lattice, 2)?;
                let step = prop.multiplier(dt);
                let leak = boundary_mass(&problem.op, lattice, problem.t_end, guard)?;
                let boundary: Vec<(Vec<f64>, f64)> = guard.iter().cloned().zip(leak).collect();
                for (p, m) in &boundary {
                    if *m > cfg.boundary_mass_limit {
                        return Err(Error::BoundaryMass { mass: *m, point: p.clone(), limit: cfg.boundary_mass_limit });
                    }
                }
                (Kind::Density { prop, step }, boundary)
            }
            Mode::MonteCarlo => (Kind::Mc(Self::simulate(problem, cfg, &points)?), Vec::new()),
        };
        Ok(Engine { problem, knots, dt, points, kind, boundary })
    }

    fn simulate(problem: &Problem, cfg: &SolverConfig, points: &[Vec<f64>]) -> Result<KnotPaths> {
        let mc = cfg.mc;
        if mc.paths < 2 || mc.steps_per_knot == 0 {
            return Err(Error::InvalidSpec("Monte Carlo mode needs at least 2 paths and 1 step per knot".into()));
        }
        let driver = CoupledDriver::new(mc.seed);
        let d = problem.op.dim;
        let j = cfg.knots;
        let h = problem.t_end / (j * mc.steps_per_knot) as f64;
        let mut data = Vec::with_capacity(points.len() * mc.paths * (j + 1) * d);
        let mut outside = 0usize;
        for x in points {
            let bundle = euler_paths(&problem.op, 0.0, x, problem.t_end, h, mc.paths, &driver)?;
            for p in 0..mc.paths {
                for l in 0..=j {
                    let q = bundle.point(p, l * mc.steps_per_knot);
                    if !problem.lattice.contains(q) {
                        outside += 1;
                    }
                    data.extend_from_slice(q);
                }
            }
        }
        let total = (points.len() * mc.paths * (j + 1)).max(1);
        Ok(KnotPaths { m: mc.paths, d, offsets: j, data, exit_fraction: outside as f64 / total as f64 })
    }

    fn nodes(&self) -> usize {
        self.points.len()
    }

    fn eval_layer(&self, f: &dyn Reaction, j: usize, vals: &[f64]) -> Result<Vec<f64>> {
        let t = self.knots[j];
        exec::try_map_range(self.nodes(), |i| f.eval(t, &self.points[i], vals[i]))
    }

    /// One application of the discrete map. With `implicit`, the knot-`j`
    /// diagonal term is solved for and later knots use the new values.
    fn sweep(&self, phi: Phi, f: &dyn Reaction, prev: &[f64], implicit: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        match &self.kind {
            Kind::Density { prop, step } => self.sweep_density(prop, step, phi, f, prev, implicit).map(|v| (v, None)),
            Kind::Mc(paths) => self.sweep_mc(paths, phi, f, prev, implicit).map(|(v, s)| (v, Some(s))),
        }
    }

    fn diagonal(&self, f: &dyn Reaction, j: usize, e: &[f64], prev: &[f64], implicit: bool) -> Result<Vec<f64>> {
        let w0 = 0.5 * self.dt;
        let t = self.knots[j];
        exec::try_map_range(self.nodes(), |i| {
            let x = &self.points[i];
            if implicit {
                if f.y_independent() {
                    Ok(e[i] + w0 * f.eval(t, x, 0.0)?)
                } else {
                    solve_implicit(e[i], w0, |y| f.eval(t, x, y))
                }
            } else {
                Ok(e[i] + w0 * f.eval(t, x, prev[i])?)
            }
        })
    }

    fn sweep_density(
        &self,
        prop: &SpectralPropagator,
        step: &[Complex64],
        phi: Phi,
        f: &dyn Reaction,
        prev: &[f64],
        implicit: bool,
    ) -> Result<Vec<f64>> {
        let n = self.nodes();
        let jn = self.knots.len() - 1;
        let dt = self.dt;
        let mut out = vec![0.0; (jn + 1) * n];
        let terminal: Vec<f64> = if implicit {
            exec::map_range(n, |i| phi(&self.points[i]))
        } else {
            prev[jn * n..].to_vec()
        };
        let phi_vals: Vec<f64> = exec::map_range(n, |i| phi(&self.points[i]));
        out[jn * n..].copy_from_slice(&phi_vals);
        let f_last = self.eval_layer(f, jn, &terminal)?;
        let mut carry: Vec<f64> = (0..n).map(|i| phi_vals[i] + 0.5 * dt * f_last[i]).collect();
        for j in (0..jn).rev() {
            let b = prop.apply(&carry, step, Padding::EdgeConstant);
            let prev_j = &prev[j * n..(j + 1) * n];
            let v = self.diagonal(f, j, &b, prev_j, implicit)?;
            let fj = self.eval_layer(f, j, if implicit { &v } else { prev_j })?;
            for i in 0..n {
                carry[i] = b[i] + dt * fj[i];
            }
            out[j * n..(j + 1) * n].copy_from_slice(&v);
        }
        Ok(out)
    }

    fn sweep_mc(
        &self,
        paths: &KnotPaths,
        phi: Phi,
        f: &dyn Reaction,
        prev: &[f64],
        implicit: bool,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.nodes();
        let jn = self.knots.len() - 1;
        let dt = self.dt;
        let lattice = &self.problem.lattice;
        let mut out = vec![0.0; (jn + 1) * n];
        let mut se = vec![0.0; (jn + 1) * n];
        for (i, x) in self.points.iter().enumerate() {
            out[jn * n + i] = phi(x);
        }
        // Terminal values along paths do not change between sweeps.
        let explicit = |j: usize, vals: &[f64]| -> Result<Vec<(f64, f64)>> {
            let horizon = jn - j;
            exec::try_map_range(n, |i| {
                let mut terms = Vec::with_capacity(paths.m);
                for p in 0..paths.m {
                    let mut acc = phi(paths.point(i, p, horizon));
                    for l in 1..=horizon {
                        let w = if l == horizon { 0.5 * dt } else { dt };
                        let q = paths.point(i, p, l);
                        let k = j + l;
                        let u = lattice.interpolate_clamped(&vals[k * n..(k + 1) * n], q);
                        acc += w * f.eval(self.knots[k], q, u)?;
                    }
                    terms.push(acc);
                }
                let m = paths.m as f64;
                let mean = exec::pairwise_sum(&terms) / m;
                let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (m - 1.0);
                Ok((mean, (var / m).sqrt()))
            })
        };
        for j in (0..jn).rev() {
            let source = if implicit { &out } else { prev };
            let stats = explicit(j, source)?;
            let e: Vec<f64> = stats.iter().map(|s| s.0).collect();
            let v = self.diagonal(f, j, &e, &prev[j * n..(j + 1) * n], implicit)?;
            out[j * n..(j + 1) * n].copy_from_slice(&v);
            for (i, s) in stats.iter().enumerate() {
                se[j * n + i] = s.1;
            }
        }
        Ok((out, se))
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves with terminal data `phi` and reaction `f`; the public entry points delegate here.
pub fn solve_with(problem: &Problem, phi: Phi, f: &dyn Reaction, cfg: &SolverConfig) -> Result<Solution> {
    let probes = cfg.probes.clone().unwrap_or_else(|| default_probes(problem.t_end, &problem.lattice));
    let guard = cfg.guard_points.clone().unwrap_or_else(|| {
        let mut g: Vec<Vec<f64>> = Vec::new();
        for p in &probes {
            if !g.contains(&p.x) {
                g.push(p.x.clone());
            }
        }
        g
    });
    let engine = Engine::new(problem, cfg, &guard)?;
    let mu = f.mu();
    let ft = MuTransformed { inner: f, mu };
    let t_end = problem.t_end;
    let lift = (mu * t_end).exp();
    let phi_t = move |x: &[f64]| lift * phi(x);
    let n = engine.nodes();
    let jn = cfg.knots;

    let mut distances = Vec::new();
    let mut iterations = 0;
    let mut current = vec![0.0; (jn + 1) * n];
    let mut std_err: Option<Vec<f64>>;
    let direct = cfg.scheme == Scheme::BackwardSweep || ft.y_independent();
    if direct {
        let (v, se) = engine.sweep(&phi_t, &ft, &current, true)?;
        distances.push(sup_distance(&v, &current));
        current = v;
        std_err = se;
        iterations = 1;
    } else {
        let relax = cfg.relaxation;
        if !(relax > 0.0 && relax <= 1.0) {
            return Err(Error::InvalidSpec(format!("relaxation {relax} must lie in (0, 1]")));
        }
        loop {
            let (v, se) = engine.sweep(&phi_t, &ft, &current, false)?;
            iterations += 1;
            let dist = sup_distance(&v, &current);
            distances.push(dist);
            if relax == 1.0 {
                current = v;
            } else {
                for (c, nv) in current.iter_mut().zip(&v) {
                    *c = relax * nv + (1.0 - relax) * *c;
                }
            }
            std_err = se;
            if !dist.is_finite() {
                return Err(Error::NonConvergence { iterations, distance: dist });
            }
            if dist < cfg.tol {
                break;
            }
            if iterations >= cfg.max_iter {
                return Err(Error::NonConvergence { iterations, distance: dist });
            }
        }
    }

    let (check, _) = engine.sweep(&phi_t, &ft, &current, false)?;
    let knots = engine.knots.clone();
    let untransform = |vals: &[f64]| -> Vec<f64> {
        let mut out = vals.to_vec();
        for (j, s) in knots.iter().enumerate() {
            let k = (-mu * s).exp();
            for v in &mut out[j * n..(j + 1) * n] {
                *v *= k;
            }
        }
        out
    };
    let mut values = untransform(&current);
    for (i, x) in engine.points.iter().enumerate() {
        values[jn * n + i] = phi(x);
    }
    let residual_grid = GridFunction {
        knots: knots.clone(),
        lattice: problem.lattice.clone(),
        values: untransform(&check).iter().zip(&values).map(|(a, b)| (a - b).abs()).collect(),
    };
    let u = GridFunction::new(knots.clone(), problem.lattice.clone(), values)?;
    let std_err = std_err.map(|se| GridFunction { knots: knots.clone(), lattice: problem.lattice.clone(), values: untransform(&se) });
    let probe_values = probes
        .iter()
        .map(|p| ProbeValue {
            s: p.s,
            x: p.x.clone(),
            u: u.eval(p.s, &p.x),
            residual: residual_grid.eval(p.s, &p.x),
            std_err: std_err.as_ref().map(|g| g.eval(p.s, &p.x)),
        })
        .collect();
    let exit_fraction = match &engine.kind {
        Kind::Mc(p) => p.exit_fraction,
        Kind::Density { .. } => 0.0,
    };
    let report = SolveReport {
        mode: cfg.mode,
        scheme: cfg.scheme,
        iterations,
        distances,
        probes: probe_values,
        boundary_mass: engine.boundary.clone(),
        exit_fraction,
        mu,
    };
    Ok(Solution { u, std_err, report })
}

/// Fixed point of the Feynman–Kac map for `problem` and reaction `f`.
pub fn solve_fixed_point<R: Reaction>(problem: &Problem, f: &R, cfg: &SolverConfig) -> Result<Solution> {
    let phi = |x: &[f64]| problem.phi_at(x);
    solve_with(problem, &phi, f, cfg)
}

/// `y`-independent reaction built from a closure.
pub struct Source<F>(pub F);

impl<F: Fn(f64, &[f64]) -> f64 + Send + Sync> Reaction for Source<F> {
    fn eval(&self, t: f64, x: &[f64], _y: f64) -> Result<f64> {
        Ok((self.0)(t, x))
    }
    fn mu(&self) -> f64 {
        0.0
    }
    fn y_independent(&self) -> bool {
        true
    }
}

/// `E[φ(X_T^{s,x}) + ∫_s^T g(t, X_t^{s,x}) dt]` on the knots and lattice.
pub fn solve_linear(
    problem: &Problem,
    phi: Phi,
    source: &(dyn Fn(f64, &[f64]) -> f64 + Send + Sync),
    cfg: &SolverConfig,
) -> Result<Solution> {
    solve_with(problem, phi, &Source(source), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupOutput {
    pub values: Vec<f64>,
    pub std_err: Option<Vec<f64>>,
    /// Largest boundary mass over the guard points.
    pub boundary_mass: f64,
    pub warning: bool,
}

/// `x ↦ E g(X_t^{0,x})` on the lattice nodes.
pub fn apply_semigroup(
    op: &OperatorSpec,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    t: f64,
    lattice: &Lattice,
    cfg: &SolverConfig,
) -> Result<SemigroupOutput> {
    if op.dim != lattice.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim, got: lattice.dim() });
    }
    if !(t > 0.0) {
        return Err(Error::InvalidSpec(format!("horizon {t} must be positive")));
    }
    let guard = cfg
        .guard_points
        .clone()
        .unwrap_or_else(|| default_probes(t, lattice).into_iter().take(3).map(|p| p.x).collect());
    match cfg.mode {
        Mode::Density => {
            let prop = SpectralPropagator::new(op, lattice, 2)?;
            let vals: Vec<f64> = lattice.points().iter().map(|x| g(x)).collect();
            let values = prop.apply_tau(&vals, t, Padding::EdgeConstant);
            let leak = boundary_mass(op, lattice, t, &guard)?.into_iter().fold(0.0, f64::max);
            Ok(SemigroupOutput { values, std_err: None, boundary_mass: leak, warning: leak > cfg.boundary_mass_limit })
        }
        Mode::MonteCarlo => {
            let driver = CoupledDriver::new(cfg.mc.seed);
            let steps = (cfg.knots * cfg.mc.steps_per_knot).max(1);
            let points = lattice.points();
            let mut values = Vec::with_capacity(points.len());
            let mut errs = Vec::with_capacity(points.len());
            let mut outside = 0usize;
            for x in &points {
                let bundle = euler_paths(op, 0.0, x, t, t / steps as f64, cfg.mc.paths, &driver)?;
                let terms: Vec<f64> = (0..bundle.m).map(|p| g(bundle.terminal(p))).collect();
                outside += (0..bundle.m).filter(|&p| !lattice.contains(bundle.terminal(p))).count();
                let m = terms.len() as f64;
                let mean = exec::pairwise_sum(&terms) / m;
                let var = terms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
                values.push(mean);
                errs.push((var / m).sqrt());
            }
            let leak = outside as f64 / (points.len() * cfg.mc.paths).max(1) as f64;
            Ok(SemigroupOutput { values, std_err: Some(errs), boundary_mass: leak, warning: leak > cfg.boundary_mass_limit })
        }
    }
}

//! Euler simulation of `dX = b(X)dt + σ(X)dW + γ(X₋)dN`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{BROWNIAN, JUMP};
use crate::sampling::{CoupledDriver, JumpSampler};
use crate::symbols::{OperatorSpec, ScalarField};

/// `M` trajectories on the uniform grid `s + j·h`, `j = 0..=steps`, stored
/// path-major as `[path][step][coordinate]`.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub op: OperatorSpec,
    pub s: f64,
    pub x: Vec<f64>,
    pub h: f64,
    pub steps: usize,
    pub m: usize,
    pub data: Vec<f64>,
    pub master_seed: u64,
}

impl PathBundle {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn horizon(&self) -> f64 {
        self.s + self.steps as f64 * self.h
    }

    pub fn time(&self, j: usize) -> f64 {
        self.s + j as f64 * self.h
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = (self.steps + 1) * self.dim();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn point(&self, i: usize, j: usize) -> &[f64] {
        let d = self.dim();
        let w = (self.steps + 1) * d;
        &self.data[i * w + j * d..i * w + (j + 1) * d]
    }

    pub fn terminal(&self, i: usize) -> &[f64] {
        self.point(i, self.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    /// Steps over the horizon `T − s`.
    pub steps: usize,
    pub paths: usize,
}

impl Default for EulerConfig {
    fn default() -> Self {
        EulerConfig { steps: 256, paths: 20_000 }
    }
}

/// Per-path stepping state shared by bundle simulation and restarts.
pub struct Stepper<'a> {
    op: &'a OperatorSpec,
    sampler: JumpSampler,
    h: f64,
    constant: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    diffusive: bool,
}

impl<'a> Stepper<'a> {
    pub fn new(op: &'a OperatorSpec, h: f64) -> Result<Self> {
        let sampler = JumpSampler::new(&op.psi, h)?;
        let constant = op.is_constant().then(|| {
            let o = vec![0.0; op.dim];
            (op.b.eval(&o), op.sigma.eval(&o), op.gamma.eval(&o))
        });
        let diffusive = op
            .sigma
            .entries
            .iter()
            .any(|e| !matches!(e, ScalarField::Constant { value } if *value == 0.0));
        Ok(Stepper { op, sampler, h, constant, diffusive })
    }

    /// Advances `state` from step `from` to step `to` along path `path`,
    /// writing every visited state into `out` when provided.
    pub fn run(
        &self,
        driver: &CoupledDriver,
        path: u64,
        state: &mut [f64],
        from: usize,
        to: usize,
        mut out: Option<&mut [f64]>,
    ) -> Result<()> {
        let d = self.op.dim;
        let k = self.op.jump_dim();
        let mut w = driver.stream(path, BROWNIAN);
        let mut n = driver.stream(path, JUMP);
        let mut dw = vec![0.0; d];
        let mut dn = vec![0.0; k];
        let mut b = vec![0.0; d];
        let mut sig = vec![0.0; d * d];
        let mut gam = vec![0.0; d * k];
        let sqrt_h = self.h.sqrt();
        let diffusive = self.diffusive;
        for step in from..to {
            if diffusive {
                w.seek_step(step as u64);
                for v in dw.iter_mut() {
                    *v = sqrt_h * w.normal();
                }
            }
            n.seek_step(step as u64);
            self.sampler.sample_into(&mut n, &mut dn);
            let (bb, ss, gg) = match &self.constant {
                Some((b0, s0, g0)) => (&b0[..], &s0[..], &g0[..]),
                None => {
                    self.op.b.eval_into(state, &mut b);
                    self.op.sigma.eval_into(state, &mut sig);
                    self.op.gamma.eval_into(state, &mut gam);
                    (&b[..], &sig[..], &gam[..])
                }
            };
            for i in 0..d {
                let mut inc = bb[i] * self.h;
                if diffusive {
                    for j in 0..d {
                        inc += ss[i * d + j] * dw[j];
                    }
                }
                for j in 0..k {
                    inc += gg[i * k + j] * dn[j];
                }
                state[i] += inc;
            }
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { path: path as usize, step: step + 1 });
            }
            if let Some(o) = out.as_deref_mut() {
                let off = (step + 1 - from) * d;
                o[off..off + d].copy_from_slice(state);
            }
        }
        Ok(())
    }
}

fn step_count(s: f64, t_end: f64, h: f64) -> Result<usize> {
    let span = t_end - s;
    if !(span > 0.0 && h > 0.0) {
        return Err(Error::InvalidSpec(format!("need s < T and h > 0 (s = {s}, T = {t_end}, h = {h})")));
    }
    let steps = (span / h).round();
    if (steps * h - span).abs() > 1e-9 * span.max(1.0) || steps < 1.0 {
        return Err(Error::InvalidSpec(format!("step {h} does not divide the horizon {span}")));
    }
    Ok(steps as usize)
}

/// Simulates `m` Euler paths of `X^{s,x}` on `[s, T]` with step `h`.
/// Path `i` always draws from streams `(i, ·)` of `driver`, whatever `x` is.
pub fn euler_paths(
    op: &OperatorSpec,
    s: f64,
    x: &[f64],
    t_end: f64,
    h: f64,
    m: usize,
    driver: &CoupledDriver,
) -> Result<PathBundle> {
    if x.len() != op.dim {
        return Err(Error::DimensionMismatch { expected: op.dim, got: x.len() });
    }
    let steps = step_count(s, t_end, h)?;
    let stepper = Stepper::new(op, h)?;
    let d = op.dim;
    let width = (steps + 1) * d;
    let mut data = vec![0.0; m * width];
    let errors = exec::map_chunks_mut(&mut data, width.max(1), |i, buf| {
        buf[..d].copy_from_slice(x);
        let mut state = x.to_vec();
        stepper.run(driver, i as u64, &mut state, 0, steps, Some(buf)).err()
    });
    if let Some(e) = errors.into_iter().flatten().next() {
        return Err(e);
    }
    Ok(PathBundle { op: op.clone(), s, x: x.to_vec(), h, steps, m, data, master_seed: driver.master_seed })
}

/// Terminal values only, from a single increment per path. Requires constant coefficients.
pub fn exact_terminal(
    op: &OperatorSpec,
    x: &[f64],
    horizon: f64,
    m: usize,
    driver: &CoupledDriver,
) -> Result<Vec<Vec<f64>>> {
    if !op.is_constant() {
        return Err(Error::ModeMismatch("exact increments need constant coefficients".into()));
    }
    let stepper = Stepper::new(op, horizon)?;
    exec::try_map_range(m, |i| {
        let mut state = x.to_vec();
        stepper.run(driver, i as u64, &mut state, 0, 1, None)?;
        Ok(state)
    })
}

/// Continues path `path` of `bundle` from step `from` to the horizon, reusing
/// the residual stream blocks.
pub fn restart_path(bundle: &PathBundle, path: usize, from: usize, driver: &CoupledDriver) -> Result<Vec<f64>> {
    let stepper = Stepper::new(&bundle.op, bundle.h)?;
    let d = bundle.dim();
    let mut out = vec![0.0; (bundle.steps - from + 1) * d];
    let mut state = bundle.point(path, from).to_vec();
    out[..d].copy_from_slice(&state);
    stepper.run(driver, path as u64, &mut state, from, bundle.steps, Some(&mut out))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
    pub per_path: Vec<f64>,
}

impl DistanceStats {
    pub fn from_values(per_path: Vec<f64>) -> Self {
        let mut sorted = per_path.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| quantile_sorted(&sorted, p);
        DistanceStats {
            mean: exec::pairwise_sum(&per_path) / per_path.len().max(1) as f64,
            median: q(0.5),
            q90: q(0.9),
            max: sorted.last().copied().unwrap_or(0.0),
            per_path,
        }
    }
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Statistics of `sup_j |a_i(t_j) − b_i(t_j)|` over paths `i`.
pub fn path_distance(a: &PathBundle, b: &PathBundle) -> Result<DistanceStats> {
    if a.m != b.m || a.steps != b.steps || a.dim() != b.dim() || (a.h - b.h).abs() > 1e-15 || (a.s - b.s).abs() > 1e-15 {
        return Err(Error::GridMismatch("bundles differ in paths, steps, dimension or grid".into()));
    }
    let d = a.dim();
    let per_path = exec::map_range(a.m, |i| {
        let (pa, pb) = (a.path(i), b.path(i));
        let mut sup = 0.0f64;
        for j in 0..=a.steps {
            let dist: f64 = (0..d).map(|c| (pa[j * d + c] - pb[j * d + c]).powi(2)).sum::<f64>().sqrt();
            sup = sup.max(dist);
        }
        sup
    });
    Ok(DistanceStats::from_values(per_path))
}

/// Fraction of paths whose running supremum of `|X|` exceeds `level`.
pub fn exceedance_fraction(bundle: &PathBundle, level: f64) -> f64 {
    let d = bundle.dim();
    let hits = (0..bundle.m)
        .filter(|&i| {
            bundle
                .path(i)
                .chunks(d)
                .any(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt() > level)
        })
        .count();
    hits as f64 / bundle.m.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{cf_band, empirical_exponent_check};
    use crate::symbols::{Coefficient, SymbolSpec};

    fn constant_op(b: f64, sigma: f64, gamma: f64, alpha: f64) -> OperatorSpec {
        OperatorSpec::new(
            Coefficient::constant(1, 1, &[b]).unwrap(),
            Coefficient::constant(1, 1, &[sigma]).unwrap(),
            Coefficient::constant(1, 1, &[gamma]).unwrap(),
            SymbolSpec::stable(alpha, 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_drift() {
        let op = constant_op(0.7, 0.0, 0.0, 1.5);
        let drv = CoupledDriver::new(1);
        let pb = euler_paths(&op, 0.25, &[1.0], 1.25, 1.0 / 64.0, 10, &drv).unwrap();
        for i in 0..10 {
            assert_eq!(pb.point(i, 0), &[1.0]);
            assert!((pb.terminal(i)[0] - 1.7).abs() < 1e-12);
        }
        assert!(euler_paths(&op, 0.0, &[0.0], 1.0, 0.3, 1, &drv).is_err());
    }

    #[test]
    fn constant_coefficients_give_levy_law() {
        let op = constant_op(0.3, 0.5, 1.0, 1.3);
        let drv = CoupledDriver::new(5);
        let m = 20_000;
        let pb = euler_paths(&op, 0.0, &[2.0], 1.0, 0.25, m, &drv).unwrap();
        let inc: Vec<Vec<f64>> = (0..m).map(|i| vec![pb.terminal(i)[0] - 2.0]).collect();
        let grid: Vec<Vec<f64>> = (-4..=4).map(|i| vec![0.5 * i as f64]).collect();
        let mut worst = 0.0f64;
        for xi in &grid {
            let p = op.eval_symbol(&[0.0], xi).unwrap();
            let target = (-p).exp();
            let emp: num_complex::Complex64 = inc
                .iter()
                .map(|v| num_complex::Complex64::from_polar(1.0, v[0] * xi[0]))
                .sum::<num_complex::Complex64>()
                / m as f64;
            worst = worst.max((emp - target).norm());
        }
        assert!(worst <= cf_band(m), "{worst}");
        let exact = exact_terminal(&op, &[0.0], 1.0, m, &drv).unwrap();
        let levy = OperatorSpec::levy(SymbolSpec::stable(1.3, 1).unwrap());
        let pure = exact_terminal(&levy, &[0.0], 1.0, m, &drv).unwrap();
        assert!(empirical_exponent_check(&pure, 1.0, &levy.psi, &grid).unwrap() <= cf_band(m));
        assert_eq!(exact.len(), m);
    }

    #[test]
    fn zero_jump_coefficient_freezes_paths() {
        let g = ScalarField::Hinge { slope: 1.0, cap: 1.0, axis: 0 };
        let op = OperatorSpec::new(
            Coefficient::zeros(1, 1),
            Coefficient::zeros(1, 1),
            Coefficient::new(1, 1, vec![g]).unwrap(),
            SymbolSpec::stable(1.5, 1).unwrap(),
        )
        .unwrap();
        let pb = euler_paths(&op, 0.0, &[-0.5], 1.0, 0.01, 50, &CoupledDriver::new(2)).unwrap();
        assert!(pb.data.iter().all(|&v| v == -0.5));
    }

    #[test]
    fn restart_reproduces_tail() {
        let g = ScalarField::Tanh { offset: 0.75, amplitude: 0.25, scale: 1.0, axis: 0 };
        let op = OperatorSpec::new(
            Coefficient::new(1, 1, vec![ScalarField::Tanh { offset: 0.0, amplitude: 0.5, scale: 2.0, axis: 0 }]).unwrap(),
            Coefficient::constant(1, 1, &[0.3]).unwrap(),
            Coefficient::new(1, 1, vec![g]).unwrap(),
            SymbolSpec::stable(1.6, 1).unwrap(),
        )
        .unwrap();
        let drv = CoupledDriver::new(77);
        let pb = euler_paths(&op, 0.0, &[0.1], 1.0, 1.0 / 32.0, 8, &drv).unwrap();
        for path in 0..8 {
            let tail = restart_path(&pb, path, 13, &drv).unwrap();
            assert_eq!(&tail[..], &pb.path(path)[13..]);
        }
    }

    #[test]
    fn euler_refinement_order() {
        let op = OperatorSpec::new(
            Coefficient::new(1, 1, vec![ScalarField::Tanh { offset: 0.2, amplitude: 1.0, scale: 1.5, axis: 0 }]).unwrap(),
            Coefficient::zeros(1, 1),
            Coefficient::zeros(1, 1),
            SymbolSpec::stable(2.0, 1).unwrap(),
        )
        .unwrap();
        let drv = CoupledDriver::new(0);
        let phi = |x: f64| x.sin();
        let vals: Vec<f64> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&n| phi(euler_paths(&op, 0.0, &[0.3], 1.0, 1.0 / n, 1, &drv).unwrap().terminal(0)[0]))
            .collect();
        let e1 = (vals[0] - vals[1]).abs();
        let e2 = (vals[1] - vals[2]).abs();
        let e3 = (vals[2] - vals[3]).abs();
        assert!((e1 / e2).log2() >= 0.8 && (e2 / e3).log2() >= 0.8, "{e1} {e2} {e3}");
    }

    #[test]
    fn distances_and_boundedness() {
        let drv = CoupledDriver::new(3);
        let op = constant_op(0.0, 0.0, 1.0, 1.5);
        let a = euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 64.0, 2000, &drv).unwrap();
        let same = path_distance(&a, &a).unwrap();
        assert_eq!(same.max, 0.0);
        let mut prev = f64::INFINITY;
        for n in 1..=6 {
            let opn = constant_op(0.0, 0.0, 1.0, 2.0 - 0.5f64.powi(n));
            let lim = constant_op(0.0, 0.0, 1.0, 2.0);
            let bn = euler_paths(&opn, 0.0, &[0.0], 1.0, 1.0 / 64.0, 2000, &drv).unwrap();
            let bl = euler_paths(&lim, 0.0, &[0.0], 1.0, 1.0 / 64.0, 2000, &drv).unwrap();
            let med = path_distance(&bn, &bl).unwrap().median;
            assert!(med < prev);
            prev = med;
        }
        let indep = euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 64.0, 2000, &CoupledDriver::fresh(3, 1)).unwrap();
        assert!(path_distance(&a, &indep).unwrap().median > 0.5);
        let short = euler_paths(&op, 0.0, &[0.0], 1.0, 1.0 / 32.0, 2000, &drv).unwrap();
        assert!(matches!(path_distance(&a, &short), Err(Error::GridMismatch(_))));

        let fr: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&k| exceedance_fraction(&a, k)).collect();
        assert!(fr[0] >= fr[1] && fr[1] >= fr[2]);
    }
}

//! Transition densities of constant-coefficient operators by Fourier inversion.
//!
//! The density of the increment `X_t − X_0` is
//! `p_t(z) = (2π)^{-d} ∫ e^{-i(z,ξ)} e^{-t p(ξ)} dξ`, computed with the
//! trapezoid rule on `[-R, R]^d` using `N` nodes per axis. The prefactor
//! `(2π)^{-d}` is the one for which the Gaussian case reproduces the heat
//! kernel with unit mass; the unit tests pin it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::Lattice;
use crate::symbols::{
    default_hw_radii, directions, hartman_wintner_check, HwVerdict, OperatorSpec, SymbolSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    /// Frequency cutoff `R`.
    pub cutoff: f64,
    /// Trapezoid nodes per axis `N`.
    pub nodes: usize,
    /// Upper bound on `exp(-t Re ψ)` at the cutoff.
    pub tail_tol: f64,
    pub tol_neg: f64,
    pub tol_mass: f64,
    /// Accept symbols whose Hartman–Wintner verdict is inconclusive.
    pub allow_inconclusive: bool,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            cutoff: 64.0,
            nodes: 4096,
            tail_tol: 1e-8,
            tol_neg: 1e-8,
            tol_mass: 1e-4,
            allow_inconclusive: false,
        }
    }
}

impl DensityConfig {
    /// Defaults scaled down for planar lattices.
    pub fn planar() -> Self {
        DensityConfig { cutoff: 32.0, nodes: 512, ..Self::default() }
    }

    pub fn for_dim(d: usize) -> Self {
        if d >= 2 {
            Self::planar()
        } else {
            Self::default()
        }
    }

    pub fn with_resolution(mut self, cutoff: f64, nodes: usize) -> Self {
        self.cutoff = cutoff;
        self.nodes = nodes;
        self
    }

    fn spacing(&self) -> f64 {
        2.0 * self.cutoff / (self.nodes - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub t: f64,
    pub spec: SymbolSpec,
    pub lattice: Lattice,
    /// Clamped values `max(p, 0)` at each lattice point.
    pub values: Vec<f64>,
    /// Most negative raw quadrature value before clamping.
    pub min_raw: f64,
    pub cutoff: f64,
    pub nodes: usize,
    pub tol_mass: f64,
}

impl DensityGrid {
    pub fn mass(&self) -> f64 {
        exec::pairwise_sum(&self.values) * self.lattice.cell_volume()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        if self.lattice.dim() == 1 {
            writeln!(w, "z,p")?;
        } else {
            writeln!(w, "z1,z2,p")?;
        }
        for (i, v) in self.values.iter().enumerate() {
            let p = self.lattice.point(i);
            let zs: Vec<String> = p.iter().map(|x| format!("{x:e}")).collect();
            writeln!(w, "{},{v:e}", zs.join(","))?;
        }
        Ok(())
    }
}

fn check_inputs(dim: usize, t: f64, cfg: &DensityConfig) -> Result<()> {
    if dim == 0 || dim > 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidSpec(format!("time t = {t} must be positive")));
    }
    if cfg.nodes < 3 || !(cfg.cutoff > 0.0) {
        return Err(Error::InvalidSpec("need cutoff > 0 and at least 3 nodes".into()));
    }
    Ok(())
}

fn hw_gate(spec: &SymbolSpec, cfg: &DensityConfig) -> Result<()> {
    let radii: Vec<f64> = default_hw_radii().into_iter().filter(|&r| r <= spec.max_radius()).collect();
    if radii.last().is_none_or(|&r| r < 1e3) {
        return if cfg.allow_inconclusive { Ok(()) } else { Err(Error::HartmanWintnerFailed) };
    }
    match hartman_wintner_check(spec, &radii)?.verdict {
        HwVerdict::Satisfied => Ok(()),
        HwVerdict::Inconclusive if cfg.allow_inconclusive => Ok(()),
        _ => Err(Error::HartmanWintnerFailed),
    }
}

fn tail_gate<F>(symbol: &F, dim: usize, t: f64, cutoff: f64, tol: f64) -> Result<()>
where
    F: Fn(&[f64]) -> Result<Complex64>,
{
    for u in directions(dim, 32) {
        let xi: Vec<f64> = u.iter().map(|c| c * cutoff).collect();
        let tail = (-t * symbol(&xi)?.re).exp();
        if !(tail < tol) {
            return Err(Error::TailTolerance { cutoff, tail, tolerance: tol });
        }
    }
    Ok(())
}

fn trapezoid_weight(j: usize, n: usize, h: f64) -> f64 {
    if j == 0 || j + 1 == n {
        0.5 * h
    } else {
        h
    }
}

/// Evaluates `(2π)^{-d} Σ w e^{-i(z,ξ)} e^{-t p(ξ)}` on the lattice, unclamped.
fn invert_raw<F>(symbol: &F, t: f64, lattice: &Lattice, cfg: &DensityConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Complex64> + Sync,
{
    let n = cfg.nodes;
    let h = cfg.spacing();
    let xi0 = -cfg.cutoff;
    let xi = |j: usize| xi0 + j as f64 * h;
    let two_pi = std::f64::consts::TAU;
    match lattice.dim() {
        1 => {
            let coeff: Vec<Complex64> = (0..n)
                .map(|j| symbol(&[xi(j)]).map(|p| (-t * p).exp() * trapezoid_weight(j, n, h)))
                .collect::<Result<_>>()?;
            Ok(exec::map_range(lattice.len(), |i| {
                let z = lattice.coord(0, i);
                fourier_sum(&coeff, z, xi0, h).re / two_pi
            }))
        }
        2 => {
            let coeff: Vec<Complex64> = (0..n * n)
                .map(|k| {
                    let (j1, j2) = (k / n, k % n);
                    symbol(&[xi(j1), xi(j2)]).map(|p| {
                        (-t * p).exp() * trapezoid_weight(j1, n, h) * trapezoid_weight(j2, n, h)
                    })
                })
                .collect::<Result<_>>()?;
            let z2s = lattice.axis_coords(1);
            let n2 = z2s.len();
            // stage one: transform along the second frequency axis
            let stage: Vec<Vec<Complex64>> = exec::map_range(n, |j1| {
                let row = &coeff[j1 * n..(j1 + 1) * n];
                z2s.iter().map(|&z2| fourier_sum(row, z2, xi0, h)).collect()
            });
            let norm = two_pi * two_pi;
            Ok(exec::map_range(lattice.len(), |i| {
                let (i1, i2) = (i / n2, i % n2);
                let z1 = lattice.coord(0, i1);
                let col: Vec<Complex64> = stage.iter().map(|r| r[i2]).collect();
                fourier_sum(&col, z1, xi0, h).re / norm
            }))
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// `Σ_j c_j e^{-i z ξ_j}` with `ξ_j = ξ_0 + j h`, by a phase recurrence.
fn fourier_sum(coeff: &[Complex64], z: f64, xi0: f64, h: f64) -> Complex64 {
    let mut phase = Complex64::from_polar(1.0, -z * xi0);
    let rot = Complex64::from_polar(1.0, -z * h);
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, c) in coeff.iter().enumerate() {
        acc += c * phase;
        phase *= rot;
        if j % 256 == 255 {
            // renormalize to keep |phase| = 1 over long sums
            phase /= phase.norm();
        }
    }
    acc
}

fn finish(
    raw: Vec<f64>,
    t: f64,
    spec: SymbolSpec,
    lattice: &Lattice,
    cfg: &DensityConfig,
) -> Result<DensityGrid> {
    let min_raw = raw.iter().copied().fold(f64::INFINITY, f64::min);
    if min_raw < -cfg.tol_neg {
        return Err(Error::NegativeMass { value: min_raw, tolerance: cfg.tol_neg });
    }
    Ok(DensityGrid {
        t,
        spec,
        lattice: lattice.clone(),
        values: raw.into_iter().map(|v| v.max(0.0)).collect(),
        min_raw,
        cutoff: cfg.cutoff,
        nodes: cfg.nodes,
        tol_mass: cfg.tol_mass,
    })
}

/// Density of the Lévy process with exponent `spec` at time `t` on the `z` lattice.
pub fn invert_density(spec: &SymbolSpec, t: f64, lattice: &Lattice, cfg: &DensityConfig) -> Result<DensityGrid> {
    if spec.dim != lattice.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: lattice.dim() });
    }
    check_inputs(spec.dim, t, cfg)?;
    hw_gate(spec, cfg)?;
    let symbol = |xi: &[f64]| spec.eval_psi(xi);
    tail_gate(&symbol, spec.dim, t, cfg.cutoff, cfg.tail_tol)?;
    let raw = invert_raw(&symbol, t, lattice, cfg)?;
    finish(raw, t, spec.clone(), lattice, cfg)
}

/// Increment density of a constant-coefficient operator (drift and diffusion included).
pub fn invert_operator_density(
    op: &OperatorSpec,
    t: f64,
    lattice: &Lattice,
    cfg: &DensityConfig,
) -> Result<DensityGrid> {
    if !op.is_constant() {
        return Err(Error::ModeMismatch("density inversion needs constant coefficients".into()));
    }
    if op.dim != lattice.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim, got: lattice.dim() });
    }
    check_inputs(op.dim, t, cfg)?;
    let origin = vec![0.0; op.dim];
    let symbol = |xi: &[f64]| op.eval_symbol(&origin, xi);
    tail_gate(&symbol, op.dim, t, cfg.cutoff, cfg.tail_tol)?;
    let raw = invert_raw(&symbol, t, lattice, cfg)?;
    finish(raw, t, op.psi.clone(), lattice, cfg)
}

/// `(2π)^{-d} ∫_{[-R,R]^d} e^{-t Re ψ(ξ)} dξ` by the same trapezoid rule.
pub fn density_sup_bound(spec: &SymbolSpec, t: f64, cfg: &DensityConfig) -> Result<f64> {
    check_inputs(spec.dim, t, cfg)?;
    let symbol = |xi: &[f64]| spec.eval_psi(xi);
    tail_gate(&symbol, spec.dim, t, cfg.cutoff, cfg.tail_tol)?;
    bound_integral(spec, t, cfg)
}

fn bound_integral(spec: &SymbolSpec, t: f64, cfg: &DensityConfig) -> Result<f64> {
    let n = cfg.nodes;
    let h = cfg.spacing();
    let xi = |j: usize| -cfg.cutoff + j as f64 * h;
    let two_pi = std::f64::consts::TAU;
    match spec.dim {
        1 => {
            let terms: Vec<f64> = (0..n)
                .map(|j| spec.eval_psi(&[xi(j)]).map(|p| (-t * p.re).exp() * trapezoid_weight(j, n, h)))
                .collect::<Result<_>>()?;
            Ok(exec::pairwise_sum(&terms) / two_pi)
        }
        2 => {
            let rows: Vec<f64> = exec::try_map_range(n, |j1| {
                let terms: Vec<f64> = (0..n)
                    .map(|j2| {
                        spec.eval_psi(&[xi(j1), xi(j2)]).map(|p| {
                            (-t * p.re).exp() * trapezoid_weight(j1, n, h) * trapezoid_weight(j2, n, h)
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok::<f64, Error>(exec::pairwise_sum(&terms))
            })?;
            Ok(exec::pairwise_sum(&rows) / (two_pi * two_pi))
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// True iff `max_{n ≥ start} sup-bound(ψₙ, t)` is finite and changes by less
/// than `1e-3` (relative) when the cutoff is doubled at fixed spacing, for
/// every `t` in `t_list`. A member whose integrand does not decay within the
/// doubled cutoff makes the check false.
pub fn uniform_bound_check(family: &[SymbolSpec], t_list: &[f64], start: usize, cfg: &DensityConfig) -> Result<bool> {
    if family.is_empty() {
        return Err(Error::Empty("symbol family"));
    }
    if t_list.is_empty() {
        return Err(Error::Empty("time list"));
    }
    let wide = cfg.with_resolution(2.0 * cfg.cutoff, 2 * cfg.nodes - 1);
    for &t in t_list {
        let mut max_bound = 0.0f64;
        for spec in family.iter().skip(start.saturating_sub(1)) {
            let narrow = match density_sup_bound(spec, t, cfg) {
                Ok(v) => v,
                Err(Error::TailTolerance { .. }) | Err(Error::OutOfRange { .. }) => {
                    match density_sup_bound(spec, t, &wide) {
                        Ok(_) => return Ok(false),
                        Err(Error::TailTolerance { .. }) | Err(Error::OutOfRange { .. }) => return Ok(false),
                        Err(e) => return Err(e),
                    }
                }
                Err(e) => return Err(e),
            };
            let doubled = match density_sup_bound(spec, t, &wide) {
                Ok(v) => v,
                Err(Error::TailTolerance { .. }) | Err(Error::OutOfRange { .. }) => return Ok(false),
                Err(e) => return Err(e),
            };
            if !narrow.is_finite() || !doubled.is_finite() {
                return Ok(false);
            }
            if (doubled - narrow).abs() > 1e-3 * doubled.abs() {
                return Ok(false);
            }
            max_bound = max_bound.max(doubled);
        }
        if !max_bound.is_finite() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sub-probability check: lattice mass at most `1 + tol_mass`.
pub fn mass_condition_check(grid: &DensityGrid) -> bool {
    grid.mass() <= 1.0 + grid.tol_mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(half: f64, step: f64) -> Lattice {
        Lattice::symmetric(1, half, step).unwrap()
    }

    #[test]
    fn gaussian_oracle_pins_the_prefactor() {
        let spec = SymbolSpec::stable(2.0, 1).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let lat = line(10.0, 0.05);
            let g = invert_density(&spec, t, &lat, &DensityConfig::default()).unwrap();
            let err = g
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let z = lat.coord(0, i);
                    (v - (4.0 * PI * t).powf(-0.5) * (-z * z / (4.0 * t)).exp()).abs()
                })
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "t = {t}: {err}");
            assert!((g.mass() - 1.0).abs() < 1e-4);
            assert!(mass_condition_check(&g));
        }
    }

    #[test]
    fn cauchy_oracle() {
        let spec = SymbolSpec::stable(1.0, 1).unwrap();
        let lat = line(20.0, 0.1);
        let cfg = DensityConfig::default().with_resolution(64.0, 16384);
        let g = invert_density(&spec, 1.0, &lat, &cfg).unwrap();
        let err = g
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let z = lat.coord(0, i);
                (v - 1.0 / (PI * (z * z + 1.0))).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn symmetric_and_drifted() {
        let spec = SymbolSpec::stable(1.5, 1).unwrap();
        let lat = line(5.0, 0.1);
        let g = invert_density(&spec, 0.5, &lat, &DensityConfig::default()).unwrap();
        let n = g.values.len();
        for i in 0..n {
            assert!((g.values[i] - g.values[n - 1 - i]).abs() < 1e-10);
        }
        let op = crate::symbols::OperatorSpec::new(
            crate::symbols::Coefficient::constant(1, 1, &[1.0]).unwrap(),
            crate::symbols::Coefficient::constant(1, 1, &[0.0]).unwrap(),
            crate::symbols::Coefficient::identity(1),
            SymbolSpec::stable(2.0, 1).unwrap(),
        )
        .unwrap();
        let lat = line(8.0, 0.05);
        let g = invert_operator_density(&op, 0.5, &lat, &DensityConfig::default()).unwrap();
        let mean: f64 =
            g.values.iter().enumerate().map(|(i, v)| v * lat.coord(0, i)).sum::<f64>() * lat.cell_volume();
        assert!((mean - 0.5).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn planar_gaussian() {
        let spec = SymbolSpec::stable(2.0, 2).unwrap();
        let lat = Lattice::symmetric(2, 4.0, 0.25).unwrap();
        let g = invert_density(&spec, 0.5, &lat, &DensityConfig::planar()).unwrap();
        let err = (0..lat.len())
            .map(|i| {
                let p = lat.point(i);
                let r2 = p[0] * p[0] + p[1] * p[1];
                (g.values[i] - (-r2 / 2.0).exp() / (2.0 * PI)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!((g.mass() - 1.0).abs() < 1e-3);
        assert!(matches!(
            invert_density(&SymbolSpec::stable(2.0, 3).unwrap(), 1.0, &Lattice::symmetric(3, 1.0, 0.5).unwrap(), &DensityConfig::default()),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn sup_bound_values() {
        let spec = SymbolSpec::stable(2.0, 1).unwrap();
        let b = density_sup_bound(&spec, 1.0, &DensityConfig::default()).unwrap();
        assert!((b - (4.0 * PI).powf(-0.5)).abs() < 1e-10);
        assert!((b - 0.2821).abs() < 1e-4);
        let rel = SymbolSpec::relativistic(1.0, 1.0, 1).unwrap();
        let rb = density_sup_bound(&rel, 1.0, &DensityConfig::default()).unwrap();
        assert!(rb.is_finite() && rb > 0.0);
        let g = invert_density(&rel, 1.0, &line(30.0, 0.05), &DensityConfig::default()).unwrap();
        assert!(rb >= g.max_value() - 1e-8);
    }

    #[test]
    fn sup_is_nonincreasing_in_time() {
        let spec = SymbolSpec::stable(1.3, 1).unwrap();
        let lat = line(6.0, 0.05);
        let sups: Vec<f64> = [0.25, 0.5, 1.0]
            .iter()
            .map(|&t| invert_density(&spec, t, &lat, &DensityConfig::default()).unwrap().max_value())
            .collect();
        assert!(sups[0] >= sups[1] && sups[1] >= sups[2]);
    }

    #[test]
    fn chapman_kolmogorov() {
        let spec = SymbolSpec::stable(1.7, 1).unwrap();
        let lat = line(40.0, 0.05);
        let cfg = DensityConfig::default();
        let half = invert_density(&spec, 0.25, &lat, &cfg).unwrap();
        let full = invert_density(&spec, 0.5, &lat, &cfg).unwrap();
        let n = lat.len();
        let c = n / 2;
        let h = lat.cell_volume();
        for i in (c - 100..=c + 100).step_by(10) {
            let mut s = 0.0;
            for j in 0..n {
                let k = i as isize - j as isize + c as isize;
                if k >= 0 && (k as usize) < n {
                    s += half.values[j] * half.values[k as usize];
                }
            }
            assert!((s * h - full.values[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn tail_and_hw_failures() {
        let spec = SymbolSpec::stable(2.0, 1).unwrap();
        let cfg = DensityConfig::default().with_resolution(2.0, 101);
        assert!(matches!(
            invert_density(&spec, 0.25, &line(1.0, 0.1), &cfg),
            Err(Error::TailTolerance { .. })
        ));
        let radii = vec![0.0, 1e7];
        let zero = SymbolSpec::custom(radii, vec![0.0, 0.0], 1).unwrap();
        assert!(matches!(
            invert_density(&zero, 1.0, &line(1.0, 0.1), &DensityConfig::default()),
            Err(Error::HartmanWintnerFailed)
        ));
    }

    #[test]
    fn uniform_bound_examples() {
        let cfg = DensityConfig::default();
        let fam: Vec<SymbolSpec> =
            (1..=10).map(|n| SymbolSpec::stable(2.0 - 0.5f64.powi(n), 1).unwrap()).collect();
        assert!(uniform_bound_check(&fam, &[0.5], 1, &cfg).unwrap());
        assert!(uniform_bound_check(&[SymbolSpec::stable(2.0, 1).unwrap()], &[0.5], 1, &cfg).unwrap());
        let zero = SymbolSpec::custom(vec![0.0, 1e6], vec![0.0, 0.0], 1).unwrap();
        let mixed = vec![SymbolSpec::stable(2.0, 1).unwrap(), zero];
        assert!(!uniform_bound_check(&mixed, &[0.5], 1, &cfg).unwrap());
        assert!(uniform_bound_check(&mixed, &[0.5], 1, &cfg).is_ok());
    }

    #[test]
    fn mass_condition_controls() {
        let spec = SymbolSpec::stable(2.0, 1).unwrap();
        let lat = Lattice::new(vec![0.0], vec![0.01], vec![1001]).unwrap();
        let g = invert_density(&spec, 1.0, &lat, &DensityConfig::default()).unwrap();
        assert!((g.mass() - 0.5).abs() < 0.01);
        assert!(mass_condition_check(&g));
        let mut doubled = invert_density(&spec, 1.0, &line(15.0, 0.01), &DensityConfig::default()).unwrap();
        doubled.values.iter_mut().for_each(|v| *v *= 2.0);
        assert!(!mass_condition_check(&doubled));
    }
}

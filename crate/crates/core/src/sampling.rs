//! Increment generators for the driving noise: Brownian increments and the
//! pure-jump Lévy increments of every supported exponent family.
//!
//! All generators are deterministic transforms of the uniforms of an
//! [`RngStream`]. Two symbols of the same family consume the same primitives
//! in the same order, which is what couples paths across a parameter sequence.

use num_complex::Complex64;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::symbols::{SymbolFamily, SymbolSpec};

/// Shares one master seed, hence one set of primitives per `(path, component)`,
/// across every operator it drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledDriver {
    pub master_seed: u64,
}

impl CoupledDriver {
    pub fn new(master_seed: u64) -> Self {
        CoupledDriver { master_seed }
    }

    /// An independent driver derived from `master_seed` and `salt`.
    pub fn fresh(master_seed: u64, salt: u64) -> Self {
        CoupledDriver { master_seed: splitmix64(master_seed ^ splitmix64(salt.wrapping_add(0x9E37_79B9))) }
    }

    pub fn stream(&self, path: u64, component: u8) -> RngStream {
        RngStream::new(self.master_seed, path, component)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `N(0, dt·I_d)`.
pub fn gaussian_increment(stream: &mut RngStream, dt: f64, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    gaussian_into(stream, dt, &mut out);
    out
}

pub fn gaussian_into(stream: &mut RngStream, dt: f64, out: &mut [f64]) {
    let s = dt.sqrt();
    for o in out.iter_mut() {
        *o = s * stream.normal();
    }
}

/// Symmetric unit stable variable with characteristic function `e^{-|ξ|^α}`
/// from the primitive pair `(W, V)`.
fn cms(alpha: f64, w: f64, v: f64) -> f64 {
    if alpha == 1.0 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * ((((1.0 - alpha) * v).cos()) / w).powf((1.0 - alpha) / alpha)
}

/// Positive `β`-stable variable with Laplace transform `e^{-s^β}`.
fn kanter(beta: f64, e: f64, u: f64) -> f64 {
    if beta >= 1.0 {
        return 1.0;
    }
    (beta * u).sin() / u.sin().powf(1.0 / beta) * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta)
}

fn unit_stable_1d(stream: &mut RngStream, alpha: f64) -> f64 {
    if alpha == 2.0 {
        std::f64::consts::SQRT_2 * stream.normal()
    } else {
        let (w, v) = stream.exp_angle();
        cms(alpha, w, v)
    }
}

/// Unit isotropic stable in `k ≥ 2` dimensions: `√A · G`, `G ~ N(0, 2I)`.
fn unit_stable_iso(stream: &mut RngStream, alpha: f64, out: &mut [f64]) {
    let (e, v) = stream.exp_angle();
    let a = kanter(alpha / 2.0, e, v + std::f64::consts::FRAC_PI_2);
    let s = (2.0 * a).sqrt();
    for o in out.iter_mut() {
        *o = s * stream.normal();
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("alpha = {alpha} outside (0, 2]")))
    }
}

/// Increment over `dt` of a symmetric `α`-stable process with exponent `|ξ|^α`
/// (isotropic) or `Σ|ξ_j|^α` (independent coordinates).
pub fn stable_increment(stream: &mut RngStream, alpha: f64, dt: f64, k: usize, isotropic: bool) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let mut out = vec![0.0; k];
    stable_into(stream, alpha, dt, isotropic, &mut out);
    Ok(out)
}

fn stable_into(stream: &mut RngStream, alpha: f64, dt: f64, isotropic: bool, out: &mut [f64]) {
    let scale = dt.powf(1.0 / alpha);
    if out.len() == 1 || !isotropic {
        for o in out.iter_mut() {
            *o = scale * unit_stable_1d(stream, alpha);
        }
    } else {
        unit_stable_iso(stream, alpha, out);
        for o in out.iter_mut() {
            *o *= scale;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Gaussian,
    Stable { alpha: f64 },
    Multifractal { terms: Vec<(f64, f64)> },
    Independent { alphas: Vec<f64> },
    Relativistic(Box<Subordinator>),
}

/// Small/big jump split of the tempered stable subordinator with Laplace
/// exponent `(s + λ₀)^β − λ₀^β`.
#[derive(Debug, Clone, PartialEq)]
struct Subordinator {
    beta: f64,
    lambda0: f64,
    eps: f64,
    rate: f64,
    small_mean: f64,
    small_var: f64,
}

/// Fraction of the subordinator variance carried by jumps below the cutoff.
const SMALL_JUMP_VARIANCE_FRACTION: f64 = 1e-6;

impl Subordinator {
    fn new(alpha: f64, m: f64) -> Self {
        let beta = alpha / 2.0;
        let lambda0 = m.powf(1.0 / beta);
        if beta >= 1.0 {
            return Subordinator { beta, lambda0, eps: 0.0, rate: 0.0, small_mean: 1.0, small_var: 0.0 };
        }
        // solve P(2 − β, y) = fraction for y = λ₀ε by bisection in log space
        let target = SMALL_JUMP_VARIANCE_FRACTION;
        let (mut lo, mut hi) = (1e-300f64.ln(), 50f64.ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gamma_lr(2.0 - beta, mid.exp()) > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let y = lo.exp();
        let eps = y / lambda0;
        let rate = eps.powf(-beta) * (-y).exp() / gamma(1.0 - beta) - lambda0.powf(beta) * gamma_ur(1.0 - beta, y);
        let small_mean = beta * lambda0.powf(beta - 1.0) * gamma_lr(1.0 - beta, y);
        let small_var = beta * (1.0 - beta) * lambda0.powf(beta - 2.0) * gamma_lr(2.0 - beta, y);
        Subordinator { beta, lambda0, eps, rate: rate.max(0.0), small_mean, small_var }
    }

    fn sample(&self, stream: &mut RngStream, dt: f64) -> f64 {
        if self.beta >= 1.0 {
            return dt;
        }
        let z = stream.normal();
        let mut s = (dt * self.small_mean + (dt * self.small_var).sqrt() * z).max(0.0);
        let mean = self.rate * dt;
        let count = if mean > 0.0 {
            Poisson::new(mean).map(|p| p.sample(stream.rng_mut())).unwrap_or(0.0) as u64
        } else {
            0
        };
        for _ in 0..count {
            loop {
                let x = self.eps * stream.uniform().powf(-1.0 / self.beta);
                if stream.uniform() < (-self.lambda0 * (x - self.eps)).exp() {
                    s += x;
                    break;
                }
            }
        }
        s
    }
}

/// Increment sampler for a fixed exponent and time step.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSampler {
    kind: Kind,
    dt: f64,
    k: usize,
}

impl JumpSampler {
    pub fn new(spec: &SymbolSpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidSpec(format!("time step {dt} must be positive")));
        }
        let kind = match &spec.family {
            SymbolFamily::Stable { alpha } => Kind::Stable { alpha: *alpha },
            SymbolFamily::BrownianQuadratic => Kind::Gaussian,
            SymbolFamily::Multifractal { terms } => Kind::Multifractal {
                terms: terms.iter().map(|&(c, a)| ((c * dt).powf(1.0 / a), a)).collect(),
            },
            SymbolFamily::IndependentStable { alphas } => Kind::Independent { alphas: alphas.clone() },
            SymbolFamily::RelativisticStable { alpha, m } => Kind::Relativistic(Box::new(Subordinator::new(*alpha, *m))),
            SymbolFamily::Custom { .. } => return Err(Error::UnsupportedFamily("custom tabulated exponent".into())),
        };
        Ok(JumpSampler { kind, dt, k: spec.dim })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sample_into(&self, stream: &mut RngStream, out: &mut [f64]) {
        let dt = self.dt;
        match &self.kind {
            Kind::Gaussian => gaussian_into(stream, dt, out),
            Kind::Stable { alpha } => stable_into(stream, *alpha, dt, true, out),
            Kind::Independent { alphas } => {
                for (o, &a) in out.iter_mut().zip(alphas) {
                    *o = dt.powf(1.0 / a) * unit_stable_1d(stream, a);
                }
            }
            Kind::Multifractal { terms } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut buf = [0.0f64; 8];
                let mut heap;
                let tmp: &mut [f64] = if out.len() <= 8 {
                    &mut buf[..out.len()]
                } else {
                    heap = vec![0.0; out.len()];
                    &mut heap
                };
                for &(scale, a) in terms {
                    stable_into(stream, a, 1.0, true, tmp);
                    for (o, t) in out.iter_mut().zip(tmp.iter()) {
                        *o += scale * t;
                    }
                }
            }
            Kind::Relativistic(sub) => {
                // Gaussian directions come first so they are shared across members
                for o in out.iter_mut() {
                    *o = stream.normal();
                }
                let s = (2.0 * sub.sample(stream, dt)).sqrt();
                for o in out.iter_mut() {
                    *o *= s;
                }
            }
        }
    }

    pub fn sample(&self, stream: &mut RngStream) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.sample_into(stream, &mut out);
        out
    }
}

/// One increment over `dt` of the Lévy process with exponent `spec`.
pub fn jump_increment_general(stream: &mut RngStream, spec: &SymbolSpec, dt: f64) -> Result<Vec<f64>> {
    Ok(JumpSampler::new(spec, dt)?.sample(stream))
}

/// Minimum sample count accepted by [`empirical_exponent_check`].
pub const MIN_CF_SAMPLES: usize = 10_000;

/// `max_ξ |mean e^{i(ξ,X)} − e^{−dt ψ(ξ)}|`; compare against `3/√M`.
pub fn empirical_exponent_check(samples: &[Vec<f64>], dt: f64, spec: &SymbolSpec, xi_grid: &[Vec<f64>]) -> Result<f64> {
    if samples.len() < MIN_CF_SAMPLES {
        return Err(Error::InvalidSpec(format!(
            "{} samples is below the minimum of {MIN_CF_SAMPLES}",
            samples.len()
        )));
    }
    if xi_grid.is_empty() {
        return Err(Error::Empty("xi grid"));
    }
    let mut worst = 0.0f64;
    for xi in xi_grid {
        let target = (-dt * spec.eval_psi(xi)?).exp();
        if xi.iter().all(|&v| v == 0.0) {
            continue;
        }
        let terms: Vec<Complex64> = samples
            .iter()
            .map(|x| {
                let phase: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
                Complex64::from_polar(1.0, phase)
            })
            .collect();
        let re: Vec<f64> = terms.iter().map(|c| c.re).collect();
        let im: Vec<f64> = terms.iter().map(|c| c.im).collect();
        let m = samples.len() as f64;
        let emp = Complex64::new(crate::exec::pairwise_sum(&re) / m, crate::exec::pairwise_sum(&im) / m);
        worst = worst.max((emp - target).norm());
    }
    Ok(worst)
}

/// The `3/√M` validation band.
pub fn cf_band(m: usize) -> f64 {
    3.0 / (m as f64).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic and its 1% critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
}

impl KsResult {
    pub fn pass(&self) -> bool {
        self.statistic <= self.critical
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    KsResult { statistic: d, critical: 1.628 * ((nf + mf) / (nf * mf)).sqrt() }
}

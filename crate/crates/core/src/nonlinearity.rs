//! Reaction terms `f(t, x, y) = h₁(t,x) − h₂(t,x)·ψ̂(y) + λy` and the
//! transformations applied to them: the μ-transform, truncation `f^k`, the
//! inf-convolution `f_m`, the envelope `F_r`, and randomized certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A real function of `(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceTimeFn {
    Zero,
    Constant { value: f64 },
    /// `A · exp(−|x − c|² / (2w²))`.
    Bump { amplitude: f64, center: f64, width: f64 },
    /// `(Σ c_k x₁^k) · exp(−|x − c|² / (2w²))`.
    PolyBump { coeffs: Vec<f64>, center: f64, width: f64 },
    /// `t · A · exp(−|x − c|² / (2w²))`.
    TimeBump { amplitude: f64, center: f64, width: f64 },
    /// `A · (1 + |x|²)^{−q/2}`.
    PowerDecay { amplitude: f64, power: f64 },
    /// `A · |x|^{−β}`, optionally damped by `exp(−|x|²/(2w²))`; unbounded at the origin.
    Singular {
        amplitude: f64,
        beta: f64,
        #[serde(default)]
        width: Option<f64>,
    },
    /// `a + b · x₁`.
    Affine { offset: f64, slope: f64 },
}

fn dist2(x: &[f64], c: f64) -> f64 {
    x.iter().map(|v| (v - c) * (v - c)).sum()
}

impl SpaceTimeFn {
    pub fn bump(amplitude: f64, width: f64) -> Self {
        SpaceTimeFn::Bump { amplitude, center: 0.0, width }
    }

    pub fn constant(value: f64) -> Self {
        SpaceTimeFn::Constant { value }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            SpaceTimeFn::Zero => 0.0,
            SpaceTimeFn::Constant { value } => *value,
            SpaceTimeFn::Bump { amplitude, center, width } => {
                amplitude * (-dist2(x, *center) / (2.0 * width * width)).exp()
            }
            SpaceTimeFn::PolyBump { coeffs, center, width } => {
                let p = coeffs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c);
                p * (-dist2(x, *center) / (2.0 * width * width)).exp()
            }
            SpaceTimeFn::TimeBump { amplitude, center, width } => {
                t * amplitude * (-dist2(x, *center) / (2.0 * width * width)).exp()
            }
            SpaceTimeFn::PowerDecay { amplitude, power } => {
                amplitude * (1.0 + dist2(x, 0.0)).powf(-power / 2.0)
            }
            SpaceTimeFn::Singular { amplitude, beta, width } => {
                let r2 = dist2(x, 0.0);
                let damp = width.map_or(1.0, |w| (-r2 / (2.0 * w * w)).exp());
                amplitude * r2.sqrt().powf(-beta) * damp
            }
            SpaceTimeFn::Affine { offset, slope } => offset + slope * x[0],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SpaceTimeFn::Zero => true,
            SpaceTimeFn::Constant { value } => *value == 0.0,
            SpaceTimeFn::Bump { amplitude, .. }
            | SpaceTimeFn::TimeBump { amplitude, .. }
            | SpaceTimeFn::PowerDecay { amplitude, .. }
            | SpaceTimeFn::Singular { amplitude, .. } => *amplitude == 0.0,
            SpaceTimeFn::PolyBump { coeffs, .. } => coeffs.iter().all(|c| *c == 0.0),
            SpaceTimeFn::Affine { offset, slope } => *offset == 0.0 && *slope == 0.0,
        }
    }

    /// Whether the function is constant in `(t, x)`.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            SpaceTimeFn::Zero => Some(0.0),
            SpaceTimeFn::Constant { value } => Some(*value),
            _ if self.is_zero() => Some(0.0),
            _ => None,
        }
    }

    /// Whether `sup |·|` is finite.
    pub fn is_bounded(&self) -> bool {
        match self {
            SpaceTimeFn::Singular { amplitude, beta, .. } => *amplitude == 0.0 || *beta <= 0.0,
            SpaceTimeFn::Affine { slope, .. } => *slope == 0.0,
            _ => true,
        }
    }
}

/// The monotone profile `ψ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    None,
    /// `y|y|^{p−1}`.
    Power { p: f64 },
    /// `e^y − 1`.
    Exponential,
}

/// Largest argument accepted by the exponential profile.
pub const EXP_LIMIT: f64 = 700.0;

impl Profile {
    pub fn eval(&self, y: f64) -> Result<f64> {
        match *self {
            Profile::None => Ok(0.0),
            Profile::Power { p } => Ok(if y == 0.0 { 0.0 } else { y * y.abs().powf(p - 1.0) }),
            Profile::Exponential => {
                if y > EXP_LIMIT {
                    Err(Error::Overflow(y))
                } else {
                    Ok(y.exp_m1())
                }
            }
        }
    }
}

/// Anything usable as the right-hand side of the semilinear equation.
pub trait Reaction: Send + Sync {
    fn eval(&self, t: f64, x: &[f64], y: f64) -> Result<f64>;

    /// Declared one-sided Lipschitz constant in `y`.
    fn mu(&self) -> f64;

    fn at_zero(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.eval(t, x, 0.0)
    }

    /// True when `f` does not depend on `y`.
    fn y_independent(&self) -> bool {
        false
    }
}

/// Growth function of the declared envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Growth {
    /// `r^q`.
    Power { q: f64 },
    /// `e^r − 1`.
    Exponential,
    /// `r`.
    Linear,
}

impl Growth {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Growth::Power { q } => r.powf(q),
            Growth::Exponential => r.exp_m1(),
            Growth::Linear => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub h: SpaceTimeFn,
    pub g: Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub h1: SpaceTimeFn,
    pub h2: SpaceTimeFn,
    pub profile: Profile,
    /// Coefficient of the linear term `λy`.
    #[serde(default)]
    pub lambda: f64,
    /// Declared monotonicity constant.
    pub mu: f64,
    #[serde(default)]
    pub envelope: Option<Envelope>,
}

impl NonlinearitySpec {
    /// `f ≡ 0`.
    pub fn zero() -> Self {
        Self::source(SpaceTimeFn::Zero)
    }

    /// `f(t, x, y) = h₁(t, x)`.
    pub fn source(h1: SpaceTimeFn) -> Self {
        NonlinearitySpec { h1, h2: SpaceTimeFn::Zero, profile: Profile::None, lambda: 0.0, mu: 0.0, envelope: None }
    }

    /// `f(y) = λy`, with `μ = max(λ, 0)`.
    pub fn linear(lambda: f64) -> Self {
        NonlinearitySpec { lambda, mu: lambda.max(0.0), ..Self::zero() }
    }

    /// `h₁ − h₂ · y|y|^{p−1}` with the matching envelope `h₂ · r^p`.
    pub fn power(h1: SpaceTimeFn, h2: SpaceTimeFn, p: f64) -> Self {
        let envelope = Some(Envelope { h: h2.clone(), g: Growth::Power { q: p } });
        NonlinearitySpec { h1, h2, profile: Profile::Power { p }, lambda: 0.0, mu: 0.0, envelope }
    }

    /// `h₁ − h₂ · (e^y − 1)`.
    pub fn exponential(h1: SpaceTimeFn, h2: SpaceTimeFn) -> Self {
        let envelope = Some(Envelope { h: h2.clone(), g: Growth::Exponential });
        NonlinearitySpec { h1, h2, profile: Profile::Exponential, lambda: 0.0, mu: 0.0, envelope }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn eval_f(&self, t: f64, x: &[f64], y: f64) -> Result<f64> {
        let mut v = self.h1.eval(t, x) + self.lambda * y;
        if !matches!(self.profile, Profile::None) {
            let h2 = self.h2.eval(t, x);
            if h2 != 0.0 {
                v -= h2 * self.profile.eval(y)?;
            }
        }
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || self.mu < self.lambda {
            return Err(Error::InvalidSpec(format!(
                "declared mu = {} must be >= max(lambda, 0) = {}",
                self.mu,
                self.lambda.max(0.0)
            )));
        }
        if let Profile::Power { p } = self.profile {
            if !(p > 0.0) {
                return Err(Error::InvalidSpec(format!("power p = {p} must be positive")));
            }
        }
        Ok(())
    }

    /// `h₂ ≥ 0` on a deterministic sample of `domain`.
    pub fn check_h2_sign(&self, domain: &SampleDomain, samples: usize) -> bool {
        let mut s = RngStream::new(domain.seed, 0, 7);
        (0..samples).all(|_| {
            let (t, x) = domain.draw_tx(&mut s);
            self.h2.eval(t, &x) >= 0.0
        })
    }
}

impl Reaction for NonlinearitySpec {
    fn eval(&self, t: f64, x: &[f64], y: f64) -> Result<f64> {
        self.eval_f(t, x, y)
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn y_independent(&self) -> bool {
        self.lambda == 0.0 && (matches!(self.profile, Profile::None) || self.h2.is_zero())
    }
}

impl<R: Reaction + ?Sized> Reaction for &R {
    fn eval(&self, t: f64, x: &[f64], y: f64) -> Result<f64> {
        (**self).eval(t, x, y)
    }
    fn mu(&self) -> f64 {
        (**self).mu()
    }
    fn at_zero(&self, t: f64, x: &[f64]) -> Result<f64> {
        (**self).at_zero(t, x)
    }
    fn y_independent(&self) -> bool {
        (**self).y_independent()
    }
}

/// `f̃(t,x,y) = e^{μt} f(t,x,e^{−μt}y) − μy`, monotone with constant 0.
#[derive(Debug, Clone)]
pub struct MuTransformed<R> {
    pub inner: R,
    pub mu: f64,
}

pub fn mu_transform<R: Reaction>(inner: R) -> MuTransformed<R> {
    let mu = inner.mu();
    MuTransformed { inner, mu }
}

impl<R> MuTransformed<R> {
    /// Transformed terminal value `e^{μT} ξ`.
    pub fn terminal(&self, t_end: f64, xi: f64) -> f64 {
        (self.mu * t_end).exp() * xi
    }

    /// `(Ỹ, M̃) = (e^{μt} Y, e^{μt} M)`.
    pub fn forward(&self, t: f64, v: f64) -> f64 {
        (self.mu * t).exp() * v
    }

    /// Inverse of [`MuTransformed::forward`].
    pub fn inverse(&self, t: f64, v: f64) -> f64 {
        (-self.mu * t).exp() * v
    }
}

impl<R: Reaction> Reaction for MuTransformed<R> {
    fn eval(&self, t: f64, x: &[f64], y: f64) -> Result<f64> {
        if self.mu == 0.0 {
            return self.inner.eval(t, x, y);
        }
        let e = (self.mu * t).exp();
        Ok(e * self.inner.eval(t, x, y / e)? - self.mu * y)
    }

    fn mu(&self) -> f64 {
        0.0
    }

    fn y_independent(&self) -> bool {
        self.mu == 0.0 && self.inner.y_independent()
    }
}

/// `T_k(y) = ((−k) ∨ y) ∧ k`.
pub fn clip(y: f64, k: f64) -> f64 {
    y.clamp(-k, k)
}

/// `f^k = f − f(·,·,0) + T_k(f(·,·,0))`.
#[derive(Debug, Clone)]
pub struct Truncated<R> {
    pub inner: R,
    pub k: f64,
}

pub fn truncate_f<R: Reaction>(inner: R, k: f64) -> Result<Truncated<R>> {
    if !(k > 0.0) {
        return Err(Error::InvalidSpec(format!("truncation level k = {k} must be positive")));
    }
    Ok(Truncated { inner, k })
}

impl<R: Reaction> Reaction for Truncated<R> {
    fn eval(&self, t: f64, x: &[f64], y: f64) -> Result<f64> {
        let f0 = self.inner.at_zero(t, x)?;
        let fy = if y == 0.0 { f0 } else { self.inner.eval(t, x, y)? };
        Ok(fy - f0 + clip(f0, self.k))
    }

    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    fn y_independent(&self) -> bool {
        self.inner.y_independent()
    }
}

/// A symmetric uniform grid `{−Z, −Z+δ, …, Z}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZGrid {
    pub half_width: f64,
    pub spacing: f64,
}

impl ZGrid {
    pub fn new(half_width: f64, spacing: f64) -> Result<Self> {
        if !(half_width > 0.0 && spacing > 0.0 && spacing <= half_width) {
            return Err(Error::InvalidSpec("z grid needs 0 < spacing <= half width".into()));
        }
        Ok(ZGrid { half_width, spacing })
    }

    pub fn len(&self) -> usize {
        (2.0 * self.half_width / self.spacing).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }
}

/// Largest admissible `m · δ` for the inf-convolution grid.
pub const MAX_GRID_SLACK: f64 = 0.05;

/// `f_m(t,x,y) = min_{z ∈ grid} { m|y − z| + f(t,x,z) }`.
///
/// When `f(t,x,z) − f(t,x,0)` does not depend on `(t,x)`, prefix/suffix minima
/// over the grid are tabulated once and each evaluation costs `O(log n)`.
pub struct InfConvolution<R> {
    pub inner: R,
    pub m: f64,
    pub grid: ZGrid,
    tables: Option<Tables>,
}

struct Tables {
    z: Vec<f64>,
    /// `min_{i ≤ k} (g_i − m z_i)`.
    left: Vec<f64>,
    /// `min_{i ≥ k} (g_i + m z_i)`.
    right: Vec<f64>,
}

impl<R: Reaction> InfConvolution<R> {
    pub fn new(inner: R, m: f64, grid: ZGrid, shift_invariant: bool) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::InvalidSpec(format!("penalty m = {m} must be positive")));
        }
        let slack = m * grid.spacing;
        if slack > MAX_GRID_SLACK {
            return Err(Error::CoarseGrid(slack));
        }
        let tables = if shift_invariant {
            let z = grid.nodes();
            let origin = [0.0f64; 4];
            let g: Vec<f64> = z
                .iter()
                .map(|&zi| Ok(inner.eval(0.0, &origin[..1], zi)? - inner.at_zero(0.0, &origin[..1])?))
                .collect::<Result<_>>()?;
            let n = z.len();
            let mut left = vec![0.0; n];
            let mut right = vec![0.0; n];
            let mut acc = f64::INFINITY;
            for i in 0..n {
                acc = acc.min(g[i] - m * z[i]);
                left[i] = acc;
            }
            acc = f64::INFINITY;
            for i in (0..n).rev() {
                acc = acc.min(g[i] + m * z[i]);
                right[i] = acc;
            }
            Some(Tables { z, left, right })
        } else {
            None
        };
        Ok(InfConvolution { inner, m, grid, tables })
    }

    /// Grid error budget `m · δ`.
    pub fn slack(&self) -> f64 {
        self.m * self.grid.spacing
    }
}

/// Builds `f_m` for a closed-form spec, using the tabulated path when `h₂` is constant.
pub fn inf_convolution(spec: &NonlinearitySpec, m: f64, grid: ZGrid) -> Result<InfConvolution<NonlinearitySpec>> {
    let shift_invariant = spec.h2.constant_value().is_some();
    InfConvolution::new(spec.clone(), m, grid, shift_invariant)
}

impl<R: Reaction> Reaction for InfConvolution<R> {
    fn eval(&self, t: f64, x: &[f64], y: f64) -> Result<f64> {
        match &self.tables {
            Some(tb) => {
                let base = self.inner.at_zero(t, x)?;
                let k = tb.z.partition_point(|&z| z <= y);
                let mut best = f64::INFINITY;
                if k > 0 {
                    best = best.min(self.m * y + tb.left[k - 1]);
                }
                if k < tb.z.len() {
                    best = best.min(-self.m * y + tb.right[k]);
                }
                Ok(base + best)
            }
            None => {
                let mut best = f64::INFINITY;
                for i in 0..self.grid.len() {
                    let z = self.grid.node(i);
                    best = best.min(self.m * (y - z).abs() + self.inner.eval(t, x, z)?);
                }
                Ok(best)
            }
        }
    }

    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    fn y_independent(&self) -> bool {
        self.inner.y_independent()
    }
}

/// `F_r(t,x) = sup_{|y| ≤ r} |f(t,x,y) − f(t,x,0)|`.
pub fn envelope_f_r(spec: &NonlinearitySpec, r: f64, t: f64, x: &[f64]) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidSpec(format!("radius r = {r} must be positive")));
    }
    let f0 = spec.eval_f(t, x, 0.0)?;
    let h2 = spec.h2.eval(t, x);
    let monotone = spec.lambda == 0.0 || h2 == 0.0 || matches!(spec.profile, Profile::None) || (spec.lambda <= 0.0 && h2 >= 0.0);
    if monotone {
        let a = (spec.eval_f(t, x, r)? - f0).abs();
        let b = (spec.eval_f(t, x, -r)? - f0).abs();
        return Ok(a.max(b));
    }
    let n = 2001;
    let mut best = 0.0f64;
    for i in 0..n {
        let y = -r + 2.0 * r * i as f64 / (n - 1) as f64;
        best = best.max((spec.eval_f(t, x, y)? - f0).abs());
    }
    Ok(best)
}

/// Region sampled by the randomized certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDomain {
    pub t_end: f64,
    pub dim: usize,
    pub x_half_width: f64,
    pub y_half_width: f64,
    pub seed: u64,
}

impl SampleDomain {
    pub fn new(t_end: f64, dim: usize, x_half_width: f64, y_half_width: f64) -> Self {
        SampleDomain { t_end, dim, x_half_width, y_half_width, seed: 0x5EED }
    }

    fn draw_tx(&self, s: &mut RngStream) -> (f64, Vec<f64>) {
        let t = self.t_end * s.uniform();
        let x = (0..self.dim).map(|_| self.x_half_width * (2.0 * s.uniform() - 1.0)).collect();
        (t, x)
    }

    fn draw_y(&self, s: &mut RngStream) -> f64 {
        self.y_half_width * (2.0 * s.uniform() - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub max_quotient: f64,
    pub declared: f64,
    pub pass: bool,
    /// `(t, x, y, y′)` attaining the largest quotient.
    pub witness: Option<(f64, Vec<f64>, f64, f64)>,
}

/// Randomized falsification of `(f(y) − f(y′))(y − y′) ≤ μ|y − y′|²`.
pub fn check_h2_monotonicity<R: Reaction>(f: &R, domain: &SampleDomain, samples: usize) -> Result<Certificate> {
    let mut s = RngStream::new(domain.seed, 1, 7);
    let mut max_q = f64::NEG_INFINITY;
    let mut witness = None;
    for _ in 0..samples {
        let (t, x) = domain.draw_tx(&mut s);
        let y = domain.draw_y(&mut s);
        let y2 = domain.draw_y(&mut s);
        if y == y2 {
            continue;
        }
        let q = (f.eval(t, &x, y)? - f.eval(t, &x, y2)?) / (y - y2);
        if q > max_q {
            max_q = q;
            witness = Some((t, x, y, y2));
        }
    }
    let declared = f.mu();
    let tol = 1e-9 * (1.0 + declared.abs());
    Ok(Certificate { max_quotient: max_q,declared, pass: max_q <= declared + tol, witness })
}

/// Spot check of `|f(t,x,y) − f(t,x,0)| ≤ h(t,x)·g(|y|)` for the declared envelope.
pub fn check_envelope(spec: &NonlinearitySpec, domain: &SampleDomain, samples: usize) -> Result<bool> {
    let Some(env) = &spec.envelope else {
        return Ok(false);
    };
    let mut s = RngStream::new(domain.seed, 2, 7);
    for _ in 0..samples {
        let (t, x) = domain.draw_tx(&mut s);
        let y = domain.draw_y(&mut s);
        let lhs = (spec.eval_f(t, &x, y)? - spec.eval_f(t, &x, 0.0)?).abs();
        let rhs = env.h.eval(t, &x) * env.g.eval(y.abs());
        if lhs > rhs * (1.0 + 1e-12) + 1e-14 {
            return Ok(false);
        }
    }
    Ok(true)
}

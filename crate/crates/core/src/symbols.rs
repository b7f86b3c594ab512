//! Lévy characteristic exponents, operator symbols and the analytic
//! diagnostics run on them before any solver is trusted.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed-form exponent families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SymbolFamily {
    /// `|ξ|^α`.
    Stable { alpha: f64 },
    /// `Σ c_i |ξ|^{α_i}`.
    Multifractal { terms: Vec<(f64, f64)> },
    /// `(|ξ|² + m^{2/α})^{α/2} − m`.
    RelativisticStable { alpha: f64, m: f64 },
    /// `½|ξ|²`, the exponent of a standard Brownian motion.
    BrownianQuadratic,
    /// `Σ_j |ξ_j|^{α_j}`, a vector of independent one-dimensional stables.
    IndependentStable { alphas: Vec<f64> },
    /// Radial table `|ξ| ↦ ψ`, linear between nodes.
    Custom { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSpec {
    #[serde(flatten)]
    pub family: SymbolFamily,
    pub dim: usize,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("alpha = {alpha} outside (0, 2]")))
    }
}

fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl SymbolSpec {
    pub fn new(family: SymbolFamily, dim: usize) -> Result<Self> {
        let spec = SymbolSpec { family, dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn stable(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(SymbolFamily::Stable { alpha }, dim)
    }

    pub fn multifractal(terms: Vec<(f64, f64)>, dim: usize) -> Result<Self> {
        Self::new(SymbolFamily::Multifractal { terms }, dim)
    }

    pub fn relativistic(alpha: f64, m: f64, dim: usize) -> Result<Self> {
        Self::new(SymbolFamily::RelativisticStable { alpha, m }, dim)
    }

    pub fn brownian(dim: usize) -> Result<Self> {
        Self::new(SymbolFamily::BrownianQuadratic, dim)
    }

    pub fn independent_stable(alphas: Vec<f64>) -> Result<Self> {
        let dim = alphas.len();
        Self::new(SymbolFamily::IndependentStable { alphas }, dim)
    }

    pub fn custom(radii: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        Self::new(SymbolFamily::Custom { radii, values }, dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        match &self.family {
            SymbolFamily::Stable { alpha } => check_alpha(*alpha),
            SymbolFamily::Multifractal { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidSpec("multifractal needs at least one term".into()));
                }
                for &(c, a) in terms {
                    if !(c >= 0.0 && c.is_finite()) {
                        return Err(Error::InvalidSpec(format!("coefficient {c} must be >= 0")));
                    }
                    check_alpha(a)?;
                }
                Ok(())
            }
            SymbolFamily::RelativisticStable { alpha, m } => {
                check_alpha(*alpha)?;
                if *m > 0.0 && m.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!("mass m = {m} must be > 0")))
                }
            }
            SymbolFamily::BrownianQuadratic => Ok(()),
            SymbolFamily::IndependentStable { alphas } => {
                if alphas.len() != self.dim {
                    return Err(Error::DimensionMismatch { expected: self.dim, got: alphas.len() });
                }
                alphas.iter().try_for_each(|&a| check_alpha(a))
            }
            SymbolFamily::Custom { radii, values } => {
                if radii.len() < 2 || radii.len() != values.len() {
                    return Err(Error::InvalidSpec(
                        "custom table needs matching radii/values with at least two nodes".into(),
                    ));
                }
                if radii[0] != 0.0 || values[0] != 0.0 {
                    return Err(Error::InvalidSpec("custom table must start at psi(0) = 0".into()));
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("custom radii must increase, values be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// Whether ψ depends on ξ only through |ξ|.
    pub fn is_radial(&self) -> bool {
        match &self.family {
            SymbolFamily::IndependentStable { alphas } => alphas.len() == 1,
            _ => true,
        }
    }

    /// Largest |ξ| at which ψ is defined.
    pub fn max_radius(&self) -> f64 {
        match &self.family {
            SymbolFamily::Custom { radii, .. } => radii[radii.len() - 1],
            _ => f64::INFINITY,
        }
    }

    /// ψ as a function of |ξ| for radial families.
    pub fn psi_radial(&self, r: f64) -> Result<f64> {
        let r = r.abs();
        Ok(match &self.family {
            SymbolFamily::Stable { alpha } => r.powf(*alpha),
            SymbolFamily::Multifractal { terms } => terms.iter().map(|&(c, a)| c * r.powf(a)).sum(),
            SymbolFamily::RelativisticStable { alpha, m } => {
                let lambda0 = m.powf(2.0 / alpha);
                m * ((alpha / 2.0) * (r * r / lambda0).ln_1p()).exp_m1()
            }
            SymbolFamily::BrownianQuadratic => 0.5 * r * r,
            SymbolFamily::IndependentStable { alphas } if alphas.len() == 1 => r.powf(alphas[0]),
            SymbolFamily::IndependentStable { .. } => {
                return Err(Error::InvalidSpec("independent stables are not radial".into()))
            }
            SymbolFamily::Custom { radii, values } => interp(radii, values, r)?,
        })
    }

    /// ψ(ξ).
    pub fn eval_psi(&self, xi: &[f64]) -> Result<Complex64> {
        if xi.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: xi.len() });
        }
        if let SymbolFamily::IndependentStable { alphas } = &self.family {
            let v = xi.iter().zip(alphas).map(|(x, a)| x.abs().powf(*a)).sum();
            return Ok(Complex64::new(v, 0.0));
        }
        Ok(Complex64::new(self.psi_radial(norm(xi))?, 0.0))
    }

    /// Smallest stability index appearing in the family (2 for Gaussian).
    pub fn min_alpha(&self) -> f64 {
        match &self.family {
            SymbolFamily::Stable { alpha } | SymbolFamily::RelativisticStable { alpha, .. } => *alpha,
            SymbolFamily::Multifractal { terms } => {
                terms.iter().filter(|t| t.0 > 0.0).map(|t| t.1).fold(2.0, f64::min)
            }
            SymbolFamily::BrownianQuadratic | SymbolFamily::Custom { .. } => 2.0,
            SymbolFamily::IndependentStable { alphas } => alphas.iter().copied().fold(2.0, f64::min),
        }
    }
}

fn interp(radii: &[f64], values: &[f64], r: f64) -> Result<f64> {
    let max = radii[radii.len() - 1];
    if !(r <= max) {
        return Err(Error::OutOfRange { radius: r, max });
    }
    let i = radii.partition_point(|&q| q <= r);
    if i >= radii.len() {
        return Ok(values[radii.len() - 1]);
    }
    let (r0, r1) = (radii[i - 1], radii[i]);
    let w = (r - r0) / (r1 - r0);
    Ok(values[i - 1] * (1.0 - w) + values[i] * w)
}

/// Free-standing alias for [`SymbolSpec::eval_psi`].
pub fn eval_psi(spec: &SymbolSpec, xi: &[f64]) -> Result<Complex64> {
    spec.eval_psi(xi)
}

/// A real coefficient depending on one coordinate of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarField {
    Constant { value: f64 },
    /// `offset + amplitude · tanh(scale · x[axis])`.
    Tanh { offset: f64, amplitude: f64, scale: f64, #[serde(default)] axis: usize },
    /// `min(max(slope · x[axis], 0), cap)`; identically zero on `x[axis] ≤ 0`.
    Hinge { slope: f64, cap: f64, #[serde(default)] axis: usize },
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            ScalarField::Constant { value } => value,
            ScalarField::Tanh { offset, amplitude, scale, axis } => {
                offset + amplitude * (scale * x[axis]).tanh()
            }
            ScalarField::Hinge { slope, cap, axis } => (slope * x[axis]).max(0.0).min(cap),
        }
    }

    fn analytic_bound(&self) -> f64 {
        match *self {
            ScalarField::Constant { value } => value.abs(),
            ScalarField::Tanh { offset, amplitude, .. } => offset.abs() + amplitude.abs(),
            ScalarField::Hinge { cap, .. } => cap.abs(),
        }
    }

    fn analytic_lipschitz(&self) -> f64 {
        match *self {
            ScalarField::Constant { .. } => 0.0,
            ScalarField::Tanh { amplitude, scale, .. } => (amplitude * scale).abs(),
            ScalarField::Hinge { slope, .. } => slope.abs(),
        }
    }

    fn axis(&self) -> Option<usize> {
        match *self {
            ScalarField::Constant { .. } => None,
            ScalarField::Tanh { axis, .. } | ScalarField::Hinge { axis, .. } => Some(axis),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalarField::Constant { .. })
    }
}

/// A `rows × cols` matrix field stored row-major, with declared sup bound and
/// Lipschitz constant in the Frobenius norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<ScalarField>,
    pub bound: f64,
    pub lipschitz: f64,
}

const DECLARED_FLOOR: f64 = 1e-12;

impl Coefficient {
    /// Builds a coefficient whose declared constants come from the entries' closed forms.
    pub fn new(rows: usize, cols: usize, entries: Vec<ScalarField>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: entries.len() });
        }
        let bound = entries.iter().map(|e| e.analytic_bound().powi(2)).sum::<f64>().sqrt();
        let lipschitz = entries.iter().map(|e| e.analytic_lipschitz().powi(2)).sum::<f64>().sqrt();
        Ok(Coefficient {
            rows,
            cols,
            entries,
            bound: bound.max(DECLARED_FLOOR),
            lipschitz: lipschitz.max(DECLARED_FLOOR),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(rows, cols, &vec![0.0; rows * cols]).expect("shape is consistent")
    }

    pub fn identity(n: usize) -> Self {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        Self::constant(n, n, &v).expect("shape is consistent")
    }

    pub fn constant(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(rows, cols, values.iter().map(|&v| ScalarField::constant(v)).collect())
    }

    /// `g(x) · I_n`.
    pub fn scaled_identity(n: usize, g: ScalarField) -> Self {
        let entries = (0..n * n)
            .map(|i| if i / n == i % n { g.clone() } else { ScalarField::constant(0.0) })
            .collect();
        Self::new(n, n, entries).expect("shape is consistent")
    }

    pub fn with_declared(mut self, bound: f64, lipschitz: f64) -> Self {
        self.bound = bound;
        self.lipschitz = lipschitz;
        self
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(ScalarField::is_constant)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.entries) {
            *o = e.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.entries.len()];
        self.eval_into(x, &mut out);
        out
    }

    fn max_axis(&self) -> Option<usize> {
        self.entries.iter().filter_map(ScalarField::axis).max()
    }
}

/// A jump-diffusion generator `−i(b,ξ) + ½(aξ,ξ) + ψ(γᵀξ)` with `a = σσᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub dim: usize,
    pub b: Coefficient,
    pub sigma: Coefficient,
    pub gamma: Coefficient,
    pub psi: SymbolSpec,
}

impl OperatorSpec {
    pub fn new(b: Coefficient, sigma: Coefficient, gamma: Coefficient, psi: SymbolSpec) -> Result<Self> {
        let dim = b.rows;
        let shape = |c: &Coefficient, r: usize, k: usize| c.rows == r && c.cols == k;
        if !shape(&b, dim, 1) {
            return Err(Error::InvalidSpec("drift must be a d x 1 field".into()));
        }
        if !shape(&sigma, dim, dim) {
            return Err(Error::InvalidSpec("diffusion must be a d x d field".into()));
        }
        if !shape(&gamma, dim, psi.dim) {
            return Err(Error::DimensionMismatch { expected: dim * psi.dim, got: gamma.rows * gamma.cols });
        }
        psi.validate()?;
        for c in [&b, &sigma, &gamma] {
            if !(c.bound > 0.0 && c.lipschitz > 0.0) {
                return Err(Error::InvalidSpec("declared bounds and Lipschitz constants must be positive".into()));
            }
            if c.max_axis().is_some_and(|a| a >= dim) {
                return Err(Error::InvalidSpec("coefficient reads a coordinate outside the state".into()));
            }
        }
        Ok(OperatorSpec { dim, b, sigma, gamma, psi })
    }

    /// `b = 0`, `σ = 0`, `γ = I`: the pure Lévy operator with exponent ψ.
    pub fn levy(psi: SymbolSpec) -> Self {
        let d = psi.dim;
        OperatorSpec {
            dim: d,
            b: Coefficient::zeros(d, 1),
            sigma: Coefficient::zeros(d, d),
            gamma: Coefficient::identity(d),
            psi,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.b.is_constant() && self.sigma.is_constant() && self.gamma.is_constant()
    }

    pub fn jump_dim(&self) -> usize {
        self.psi.dim
    }

    /// `p(x, ξ)`.
    pub fn eval_symbol(&self, x: &[f64], xi: &[f64]) -> Result<Complex64> {
        let d = self.dim;
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if xi.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: xi.len() });
        }
        let b = self.b.eval(x);
        let s = self.sigma.eval(x);
        let g = self.gamma.eval(x);
        let drift: f64 = b.iter().zip(xi).map(|(b, x)| b * x).sum();
        // (aξ, ξ) = |σᵀξ|²
        let mut quad = 0.0;
        for j in 0..d {
            let col: f64 = (0..d).map(|i| s[i * d + j] * xi[i]).sum();
            quad += col * col;
        }
        let k = self.psi.dim;
        let gt_xi: Vec<f64> = (0..k).map(|j| (0..d).map(|i| g[i * k + j] * xi[i]).sum()).collect();
        let jump = self.psi.eval_psi(&gt_xi)?;
        Ok(Complex64::new(0.5 * quad, -drift) + jump)
    }

    /// Spot-checks declared bounds, Lipschitz constants and `a ⪰ 0` on a
    /// deterministic sample of points in `[-half_width, half_width]^d`.
    pub fn verify_coefficients(&self, half_width: f64, samples: usize) -> Result<()> {
        let d = self.dim;
        let pts: Vec<Vec<f64>> = (0..samples)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let u = halton(i + 1, PRIMES[j % PRIMES.len()]);
                        half_width * (2.0 * u - 1.0)
                    })
                    .collect()
            })
            .collect();
        for (name, c) in [("b", &self.b), ("sigma", &self.sigma), ("gamma", &self.gamma)] {
            let vals: Vec<Vec<f64>> = pts.iter().map(|p| c.eval(p)).collect();
            for v in &vals {
                let n = norm(v);
                if n > c.bound * (1.0 + 1e-12) {
                    return Err(Error::InvalidSpec(format!("{name}: |c(x)| = {n} exceeds declared bound {}", c.bound)));
                }
            }
            for i in 1..pts.len() {
                let dv: Vec<f64> = vals[i].iter().zip(&vals[i - 1]).map(|(a, b)| a - b).collect();
                let dx: Vec<f64> = pts[i].iter().zip(&pts[i - 1]).map(|(a, b)| a - b).collect();
                if norm(&dv) > c.lipschitz * norm(&dx) * (1.0 + 1e-9) + 1e-14 {
                    return Err(Error::InvalidSpec(format!("{name}: declared Lipschitz constant {} violated", c.lipschitz)));
                }
            }
        }
        for p in &pts {
            let s = self.sigma.eval(p);
            if !psd(&s, d) {
                return Err(Error::InvalidSpec(format!("a(x) is not positive semidefinite at {p:?}")));
            }
        }
        Ok(())
    }
}

/// Free-standing alias for [`OperatorSpec::eval_symbol`].
pub fn eval_operator_symbol(op: &OperatorSpec, x: &[f64], xi: &[f64]) -> Result<Complex64> {
    op.eval_symbol(x, xi)
}

fn psd(s: &[f64], d: usize) -> bool {
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
        }
    }
    let m = nalgebra::DMatrix::from_row_slice(d, d, &a);
    let tol = 1e-12 * (1.0 + m.norm());
    let sym = (0..d).all(|i| (0..d).all(|j| (a[i * d + j] - a[j * d + i]).abs() <= tol));
    sym && m.symmetric_eigenvalues().iter().all(|&l| l >= -tol)
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Unit directions used for minima over the sphere: `±1` on the line, equally
/// spaced angles in the plane, a normalized Halton–Gaussian set above.
pub fn directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|j| {
                let a = std::f64::consts::TAU * j as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut out: Vec<Vec<f64>> = (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            let mut i = 1;
            while out.len() < count.max(d) {
                let mut v: Vec<f64> = (0..d)
                    .map(|j| {
                        let u1 = halton(i, PRIMES[(2 * j) % PRIMES.len()]).max(1e-12);
                        let u2 = halton(i, PRIMES[(2 * j + 1) % PRIMES.len()]);
                        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    })
                    .collect();
                let n = norm(&v);
                if n > 1e-9 {
                    v.iter_mut().for_each(|c| *c /= n);
                    out.push(v);
                }
                i += 1;
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HwVerdict {
    Satisfied,
    Failed,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwReport {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub threshold: f64,
    pub verdict: HwVerdict,
}

#[derive(Debug, Clone)]
pub struct HwConfig {
    /// Divergence threshold; `None` means `10 · d`.
    pub threshold: Option<f64>,
    /// Smallest admissible last radius.
    pub r_min: f64,
    pub directions: usize,
}

impl Default for HwConfig {
    fn default() -> Self {
        HwConfig { threshold: None, r_min: 1e3, directions: 32 }
    }
}

/// `10^0, 10^1, …, 10^6`.
pub fn default_hw_radii() -> Vec<f64> {
    (0..=6).map(|e| 10f64.powi(e)).collect()
}

pub fn hartman_wintner_check(spec: &SymbolSpec, radii: &[f64]) -> Result<HwReport> {
    hartman_wintner_check_with(spec, radii, &HwConfig::default())
}

/// Ratio `min_dir Re ψ(ξ) / ln(1+|ξ|)` along `radii`, with a divergence verdict.
pub fn hartman_wintner_check_with(spec: &SymbolSpec, radii: &[f64], cfg: &HwConfig) -> Result<HwReport> {
    if radii.is_empty() {
        return Err(Error::Empty("radii"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::InvalidSpec("radii must be positive and increasing".into()));
    }
    let last = radii[radii.len() - 1];
    if last < cfg.r_min {
        return Err(Error::InvalidSpec(format!("last radius {last} is below R_min = {}", cfg.r_min)));
    }
    let dirs = directions(spec.dim, cfg.directions);
    let mut ratios = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut min = f64::INFINITY;
        for u in &dirs {
            let xi: Vec<f64> = u.iter().map(|c| c * r).collect();
            min = min.min(spec.eval_psi(&xi)?.re);
        }
        ratios.push(min / (1.0 + r).ln());
    }
    let threshold = cfg.threshold.unwrap_or(10.0 * spec.dim as f64);
    let n = ratios.len();
    let verdict = if n < 3 {
        HwVerdict::Inconclusive
    } else {
        let tail = &ratios[n - 3..];
        let increasing = tail[0] < tail[1] && tail[1] < tail[2];
        if tail[2] > threshold && increasing {
            HwVerdict::Satisfied
        } else if tail[2] < threshold && tail[2] <= tail[0] * 1.05 {
            HwVerdict::Failed
        } else {
            HwVerdict::Inconclusive
        }
    };
    Ok(HwReport { radii: radii.to_vec(), ratios, threshold, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDomination {
    /// One-based position in the sequence.
    pub n: usize,
    pub holds: bool,
    /// Smallest `Re ψₙ − ψ̃` seen on the grid.
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub members: Vec<MemberDomination>,
    pub all_hold: bool,
}

/// Checks `Re ψₙ(ξ) ≥ ψ̃(ξ)` for `|ξ| ∈ radius·[1, 1024]` and every `n ≥ start`
/// (members are numbered from 1).
pub fn domination_check(
    family: &[SymbolSpec],
    tilde_psi: &SymbolSpec,
    start: usize,
    radius: f64,
) -> Result<DominationReport> {
    let d = tilde_psi.dim;
    if let Some(bad) = family.iter().find(|s| s.dim != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.dim });
    }
    let dirs = directions(d, 32);
    let grid: Vec<Vec<f64>> = (0..=40)
        .flat_map(|j| {
            let r = radius * 2f64.powf(j as f64 / 4.0);
            dirs.iter().map(move |u| u.iter().map(|c| c * r).collect::<Vec<_>>())
        })
        .collect();
    let tilde: Vec<f64> = grid.iter().map(|xi| tilde_psi.eval_psi(xi).map(|z| z.re)).collect::<Result<_>>()?;
    let mut members = Vec::new();
    for (i, spec) in family.iter().enumerate() {
        let n = i + 1;
        if n < start {
            continue;
        }
        let mut worst = f64::INFINITY;
        let mut holds = true;
        for (xi, t) in grid.iter().zip(&tilde) {
            let v = spec.eval_psi(xi)?.re;
            worst = worst.min(v - t);
            if v < t - 1e-12 * t.abs().max(1.0) {
                holds = false;
            }
        }
        members.push(MemberDomination { n, holds, worst_margin: worst });
    }
    let all_hold = members.iter().all(|m| m.holds);
    Ok(DominationReport { members, all_hold })
}

/// `max_{ξ ∈ grid} |ψₙ(ξ) − ψ(ξ)|`.
pub fn symbol_distance(psi_n: &SymbolSpec, psi: &SymbolSpec, xi_grid: &[Vec<f64>]) -> Result<f64> {
    if xi_grid.is_empty() {
        return Err(Error::Empty("xi grid"));
    }
    if psi_n.dim != psi.dim {
        return Err(Error::DimensionMismatch { expected: psi.dim, got: psi_n.dim });
    }
    let mut max = 0.0f64;
    for xi in xi_grid {
        max = max.max((psi_n.eval_psi(xi)? - psi.eval_psi(xi)?).norm());
    }
    Ok(max)
}

/// Radial grid `{r·u}` over `radii` and the standard direction sample.
pub fn radial_grid(d: usize, radii: &[f64]) -> Vec<Vec<f64>> {
    let dirs = directions(d, 32);
    radii
        .iter()
        .flat_map(|&r| dirs.iter().map(move |u| u.iter().map(|c| c * r).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        let s = SymbolSpec::stable(2.0, 1).unwrap();
        assert_eq!(s.eval_psi(&[1.0]).unwrap(), Complex64::new(1.0, 0.0));
        let r = SymbolSpec::relativistic(1.0, 1.0, 1).unwrap();
        assert_eq!(r.eval_psi(&[0.0]).unwrap().re, 0.0);
        let m = SymbolSpec::multifractal(vec![(1.0, 1.0), (2.0, 2.0)], 2).unwrap();
        assert_abs_diff_eq!(m.eval_psi(&[0.0, 2.0]).unwrap().re, 10.0, epsilon = 1e-12);
        let b = SymbolSpec::brownian(1).unwrap();
        assert_abs_diff_eq!(b.eval_psi(&[2.0]).unwrap().re, 2.0);
        let ind = SymbolSpec::independent_stable(vec![1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(ind.eval_psi(&[-3.0, 2.0]).unwrap().re, 7.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(SymbolSpec::stable(0.0, 1).is_err());
        assert!(SymbolSpec::stable(2.1, 1).is_err());
        assert!(SymbolSpec::relativistic(1.0, 0.0, 1).is_err());
        assert!(SymbolSpec::multifractal(vec![(-1.0, 1.0)], 1).is_err());
        assert!(SymbolSpec::custom(vec![0.0, 1.0], vec![1.0, 2.0], 1).is_err());
    }

    #[test]
    fn custom_interpolates_and_refuses_extrapolation() {
        let c = SymbolSpec::custom(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 4.0], 1).unwrap();
        assert_abs_diff_eq!(c.eval_psi(&[2.0]).unwrap().re, 3.0);
        assert_abs_diff_eq!(c.eval_psi(&[-0.5]).unwrap().re, 1.0);
        assert!(matches!(c.eval_psi(&[3.5]), Err(Error::OutOfRange { .. })));
    }

    fn op_1d(b: f64, sigma: f64, gamma: ScalarField, alpha: f64) -> OperatorSpec {
        OperatorSpec::new(
            Coefficient::constant(1, 1, &[b]).unwrap(),
            Coefficient::constant(1, 1, &[sigma]).unwrap(),
            Coefficient::new(1, 1, vec![gamma]).unwrap(),
            SymbolSpec::stable(alpha, 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn operator_symbol_reductions() {
        let psi = SymbolSpec::relativistic(1.3, 0.7, 2).unwrap();
        let op = OperatorSpec::levy(psi.clone());
        let xi = [0.4, -1.7];
        assert_eq!(op.eval_symbol(&[3.0, 1.0], &xi).unwrap(), psi.eval_psi(&xi).unwrap());

        let g = ScalarField::Tanh { offset: 0.75, amplitude: 0.25, scale: 1.0, axis: 0 };
        let op = op_1d(0.0, 0.0, g.clone(), 1.5);
        let x = 0.3;
        let expect = g.eval(&[x]).abs().powf(1.5) * 2f64.powf(1.5);
        assert_abs_diff_eq!(op.eval_symbol(&[x], &[2.0]).unwrap().re, expect, epsilon = 1e-12);

        let op = op_1d(0.5, 0.8, g.clone(), 1.2);
        let p = op.eval_symbol(&[x], &[1.5]).unwrap();
        let a = 0.64;
        assert_abs_diff_eq!(p.im, -0.5 * 1.5, epsilon = 1e-12);
        let re = a / 2.0 * 2.25 + g.eval(&[x]).abs().powf(1.2) * 1.5f64.powf(1.2);
        assert_abs_diff_eq!(p.re, re, epsilon = 1e-12);
        assert!(op.eval_symbol(&[x, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn coefficient_declarations_verified() {
        let g = ScalarField::Tanh { offset: 0.75, amplitude: 0.25, scale: 1.0, axis: 0 };
        let op = op_1d(0.1, 0.5, g, 1.5);
        op.verify_coefficients(5.0, 200).unwrap();
        let mut bad = op.clone();
        bad.gamma = bad.gamma.with_declared(0.5, 0.25);
        assert!(bad.verify_coefficients(5.0, 200).is_err());
        let mut bad = op;
        bad.gamma = bad.gamma.with_declared(1.0, 0.01);
        assert!(bad.verify_coefficients(5.0, 200).is_err());
    }

    #[test]
    fn hartman_wintner_verdicts() {
        let radii = default_hw_radii();
        let s = SymbolSpec::stable(1.0, 1).unwrap();
        assert_eq!(hartman_wintner_check(&s, &radii).unwrap().verdict, HwVerdict::Satisfied);
        let s2 = SymbolSpec::stable(1.5, 2).unwrap();
        assert_eq!(hartman_wintner_check(&s2, &radii).unwrap().verdict, HwVerdict::Satisfied);

        let table: Vec<f64> = std::iter::once(0.0).chain(radii.iter().copied()).collect();
        let zero = SymbolSpec::custom(table.clone(), vec![0.0; table.len()], 1).unwrap();
        assert_eq!(hartman_wintner_check(&zero, &radii).unwrap().verdict, HwVerdict::Failed);
        let log_vals: Vec<f64> = table.iter().map(|r| (1.0 + r).ln()).collect();
        let log = SymbolSpec::custom(table, log_vals, 1).unwrap();
        let rep = hartman_wintner_check(&log, &radii).unwrap();
        assert_eq!(rep.verdict, HwVerdict::Failed);
        assert!(rep.ratios.iter().all(|r| (r - 1.0).abs() < 1e-12));

        assert!(matches!(hartman_wintner_check(&s, &[]), Err(Error::Empty(_))));
        assert!(hartman_wintner_check(&s, &[1.0, 10.0]).is_err());
    }

    #[test]
    fn domination_examples() {
        let fam: Vec<SymbolSpec> =
            (1..=8).map(|n| SymbolSpec::stable(1.0 + 1.0 / n as f64, 1).unwrap()).collect();
        let tilde = SymbolSpec::multifractal(vec![(0.5, 0.5)], 1).unwrap();
        assert!(domination_check(&fam, &tilde, 1, 1.0).unwrap().all_hold);

        let psi = SymbolSpec::relativistic(1.2, 0.3, 1).unwrap();
        assert!(domination_check(std::slice::from_ref(&psi), &psi, 1, 1.0).unwrap().all_hold);

        let one = SymbolSpec::stable(1.0, 1).unwrap();
        let two = SymbolSpec::stable(2.0, 1).unwrap();
        let rep = domination_check(&[one], &two, 1, 2.0).unwrap();
        assert!(!rep.all_hold);
        assert_eq!(rep.members[0].n, 1);

        let fam = vec![SymbolSpec::stable(0.2, 1).unwrap(), SymbolSpec::stable(1.0, 1).unwrap()];
        let rep = domination_check(&fam, &tilde, 2, 1.0).unwrap();
        assert_eq!(rep.members.len(), 1);
        assert!(rep.all_hold);
    }

    #[test]
    fn distance_examples() {
        let a = SymbolSpec::stable(1.9, 1).unwrap();
        let b = SymbolSpec::stable(2.0, 1).unwrap();
        assert_abs_diff_eq!(symbol_distance(&a, &b, &[vec![1.0]]).unwrap(), 0.0, epsilon = 1e-15);
        let d2 = symbol_distance(&a, &b, &[vec![2.0]]).unwrap();
        assert_abs_diff_eq!(d2, 4.0 - 2f64.powf(1.9), epsilon = 1e-12);
        assert!((d2 - 0.268).abs() < 1e-3);
        let m = SymbolSpec::multifractal(vec![(1.0, 1.3)], 2).unwrap();
        let s = SymbolSpec::stable(1.3, 2).unwrap();
        let grid = radial_grid(2, &[0.5, 1.0, 7.0]);
        assert_eq!(symbol_distance(&m, &s, &grid).unwrap(), 0.0);
        assert!(symbol_distance(&m, &s, &[]).is_err());
    }

    fn any_spec() -> impl Strategy<Value = SymbolSpec> {
        prop_oneof![
            (0.05f64..=2.0, 1usize..4).prop_map(|(a, d)| SymbolSpec::stable(a, d).unwrap()),
            (0.05f64..=2.0, 0.01f64..5.0, 1usize..4)
                .prop_map(|(a, m, d)| SymbolSpec::relativistic(a, m, d).unwrap()),
            (0.0f64..3.0, 0.05f64..=2.0, 0.0f64..3.0, 0.05f64..=2.0, 1usize..4)
                .prop_map(|(c1, a1, c2, a2, d)| SymbolSpec::multifractal(vec![(c1, a1), (c2, a2)], d).unwrap()),
            (1usize..4).prop_map(|d| SymbolSpec::brownian(d).unwrap()),
            proptest::collection::vec(0.05f64..=2.0, 1..4)
                .prop_map(|a| SymbolSpec::independent_stable(a).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn psi_vanishes_at_origin_and_is_even(spec in any_spec(), seed in proptest::collection::vec(-50.0f64..50.0, 3)) {
            let zero = vec![0.0; spec.dim];
            prop_assert_eq!(spec.eval_psi(&zero).unwrap(), Complex64::new(0.0, 0.0));
            let xi: Vec<f64> = seed[..spec.dim].to_vec();
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            let a = spec.eval_psi(&xi).unwrap();
            prop_assert_eq!(a, spec.eval_psi(&neg).unwrap());
            prop_assert_eq!(a.im, 0.0);
        }

        #[test]
        fn stable_continuity_in_alpha(a in 0.05f64..=2.0, b in 0.05f64..=2.0, r in 1e-3f64..100.0) {
            let pa = SymbolSpec::stable(a, 1).unwrap().eval_psi(&[r]).unwrap().re;
            let pb = SymbolSpec::stable(b, 1).unwrap().eval_psi(&[r]).unwrap().re;
            let bound = (a - b).abs() * r.ln().abs() * pa.max(pb);
            prop_assert!((pa - pb).abs() <= bound * (1.0 + 1e-9) + 1e-14);
        }

        #[test]
        fn trivial_operator_equals_psi(spec in any_spec(), seed in proptest::collection::vec(-20.0f64..20.0, 6)) {
            let op = OperatorSpec::levy(spec.clone());
            let d = spec.dim;
            let x = &seed[..d];
            let xi = &seed[3..3 + d];
            prop_assert_eq!(op.eval_symbol(x, xi).unwrap(), spec.eval_psi(xi).unwrap());
        }
    }
}

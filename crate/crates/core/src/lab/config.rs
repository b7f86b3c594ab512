//! Versioned experiment descriptions and their TOML encoding.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fk_solver::{McConfig, Mode, Scheme, SolverConfig};
use crate::grid::Lattice;
use crate::nonlinearity::{NonlinearitySpec, SpaceTimeFn};
use crate::symbols::{Coefficient, OperatorSpec, ScalarField, SymbolFamily, SymbolSpec};

pub const CONFIG_VERSION: u32 = 1;

/// Geometric schedule `base + offset · 2^{−n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base: f64,
    #[serde(default)]
    pub offset: f64,
}

impl Schedule {
    pub fn fixed(base: f64) -> Self {
        Schedule { base, offset: 0.0 }
    }

    pub fn at(&self, n: usize) -> f64 {
        self.base + self.offset * 0.5f64.powi(n as i32)
    }

    pub fn limit(&self) -> f64 {
        self.base
    }
}

/// One term `c |ξ|^α` of a multifractal exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiTerm {
    pub c: f64,
    pub alpha: Schedule,
    #[serde(default)]
    pub c_offset: f64,
}

/// `offset + amplitude · tanh(scale · x)`, shifted along the sequence by `shift · 2^{−n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaField {
    pub offset: f64,
    pub amplitude: f64,
    pub scale: f64,
    #[serde(default)]
    pub shift: f64,
}

impl GammaField {
    fn field(&self, n: Option<usize>) -> ScalarField {
        let shift = n.map_or(0.0, |n| self.shift * 0.5f64.powi(n as i32));
        ScalarField::Tanh { offset: self.offset + shift, amplitude: self.amplitude, scale: self.scale, axis: 0 }
    }
}

/// Operator sequence `Lⁿ` and its limit `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SequenceFamily {
    /// `|ξ|^{αₙ}`.
    Stable { alpha: Schedule },
    /// `Σ cₙ⁽ⁱ⁾ |ξ|^{αₙ⁽ⁱ⁾}` with `cₙ = c + c_offset · 2^{−n}`.
    Multifractal { terms: Vec<MultiTerm> },
    /// `(|ξ|² + m^{2/αₙ})^{αₙ/2} − m` at fixed mass.
    RelativisticAlpha { alpha: Schedule, m: f64 },
    /// `(|ξ|² + mₙ^{2/α})^{α/2} − mₙ` with `mₙ = m0 · 2^{−n}`; the limit is `|ξ|^α`.
    RelativisticMass { alpha: f64, m0: f64 },
    /// `|γ̄ⁿ(x)|^{αₙ} |ξ|^{αₙ}`.
    LevyTypeGamma { alpha: Schedule, gamma: GammaField },
    /// `Σ_j |γ̄ⁿ_j(x)|^{αₙ⁽ʲ⁾} |ξ|^{αₙ⁽ʲ⁾}` in one dimension.
    LevyType1dMulti { alphas: Vec<Schedule>, gammas: Vec<GammaField> },
    /// `−i bₙ ξ + ½ σₙ² ξ² + |γ̄ⁿ(x)|^{αₙ} |ξ|^{αₙ}` in one dimension.
    LevyTypeMixed { alpha: Schedule, b: Schedule, sigma: Schedule, gamma: GammaField },
    /// `ψₙ = ψ` for every `n`.
    Constant { symbol: SymbolSpec },
}

impl SequenceFamily {
    /// `Some(n)` for a member, `None` for the limit.
    pub fn operator(&self, n: Option<usize>, dim: usize) -> Result<OperatorSpec> {
        let at = |s: &Schedule| n.map_or(s.limit(), |n| s.at(n));
        let levy = |fam: SymbolFamily| -> Result<OperatorSpec> { Ok(OperatorSpec::levy(SymbolSpec::new(fam, dim)?)) };
        match self {
            SequenceFamily::Stable { alpha } => levy(SymbolFamily::Stable { alpha: at(alpha) }),
            SequenceFamily::Multifractal { terms } => levy(SymbolFamily::Multifractal {
                terms: terms
                    .iter()
                    .map(|t| (t.c + n.map_or(0.0, |n| t.c_offset * 0.5f64.powi(n as i32)), at(&t.alpha)))
                    .collect(),
            }),
            SequenceFamily::RelativisticAlpha { alpha, m } => {
                levy(SymbolFamily::RelativisticStable { alpha: at(alpha), m: *m })
            }
            SequenceFamily::RelativisticMass { alpha, m0 } => match n {
                Some(n) => levy(SymbolFamily::RelativisticStable { alpha: *alpha, m: m0 * 0.5f64.powi(n as i32) }),
                None => levy(SymbolFamily::Stable { alpha: *alpha }),
            },
            SequenceFamily::LevyTypeGamma { alpha, gamma } => OperatorSpec::new(
                Coefficient::zeros(dim, 1),
                Coefficient::zeros(dim, dim),
                Coefficient::scaled_identity(dim, gamma.field(n)),
                SymbolSpec::stable(at(alpha), dim)?,
            ),
            SequenceFamily::LevyType1dMulti { alphas, gammas } => {
                one_dim(dim)?;
                if alphas.len() != gammas.len() || alphas.is_empty() {
                    return Err(Error::Config("levy_type_1d_multi needs one gamma per stable component".into()));
                }
                OperatorSpec::new(
                    Coefficient::zeros(1, 1),
                    Coefficient::zeros(1, 1),
                    Coefficient::new(1, gammas.len(), gammas.iter().map(|g| g.field(n)).collect())?,
                    SymbolSpec::independent_stable(alphas.iter().map(at).collect())?,
                )
            }
            SequenceFamily::LevyTypeMixed { alpha, b, sigma, gamma } => {
                one_dim(dim)?;
                OperatorSpec::new(
                    Coefficient::constant(1, 1, &[at(b)])?,
                    Coefficient::constant(1, 1, &[at(sigma)])?,
                    Coefficient::new(1, 1, vec![gamma.field(n)])?,
                    SymbolSpec::stable(at(alpha), 1)?,
                )
            }
            SequenceFamily::Constant { symbol } => {
                if symbol.dim != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: symbol.dim });
                }
                Ok(OperatorSpec::levy(symbol.clone()))
            }
        }
    }

    /// Whether every member has constant coefficients.
    pub fn is_levy(&self) -> bool {
        !matches!(
            self,
            SequenceFamily::LevyTypeGamma { .. }
                | SequenceFamily::LevyType1dMulti { .. }
                | SequenceFamily::LevyTypeMixed { .. }
        )
    }

    /// Scalar parameters of member `n`, in declaration order.
    pub fn parameters(&self, n: usize) -> Vec<f64> {
        match self {
            SequenceFamily::Stable { alpha } => vec![alpha.at(n)],
            SequenceFamily::Multifractal { terms } => terms
                .iter()
                .flat_map(|t| [t.c + t.c_offset * 0.5f64.powi(n as i32), t.alpha.at(n)])
                .collect(),
            SequenceFamily::RelativisticAlpha { alpha, m } => vec![alpha.at(n), *m],
            SequenceFamily::RelativisticMass { alpha, m0 } => vec![*alpha, m0 * 0.5f64.powi(n as i32)],
            SequenceFamily::LevyTypeGamma { alpha, gamma } => {
                vec![alpha.at(n), gamma.offset + gamma.shift * 0.5f64.powi(n as i32)]
            }
            SequenceFamily::LevyType1dMulti { alphas, gammas } => alphas
                .iter()
                .zip(gammas)
                .flat_map(|(a, g)| [a.at(n), g.offset + g.shift * 0.5f64.powi(n as i32)])
                .collect(),
            SequenceFamily::LevyTypeMixed { alpha, b, sigma, gamma } => vec![
                alpha.at(n),
                b.at(n),
                sigma.at(n),
                gamma.offset + gamma.shift * 0.5f64.powi(n as i32),
            ],
            SequenceFamily::Constant { .. } => Vec::new(),
        }
    }
}

fn one_dim(dim: usize) -> Result<()> {
    if dim != 1 {
        return Err(Error::Config(format!("this family is one-dimensional, got dim = {dim}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `|uₙ − u|` at the probe points.
    Pointwise,
    /// `∫_{[−a,a]^d} |uₙ(s,·) − u(s,·)|` at the probe times.
    L1Compact,
    /// `|∬ (uₙ − u) η|` over the fixed test bank.
    WeakL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dim: usize,
    pub half_width: f64,
    pub step: f64,
}

impl LatticeSpec {
    pub fn build(&self) -> Result<Lattice> {
        Lattice::symmetric(self.dim, self.half_width, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub mode: Mode,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub knots: usize,
    #[serde(default)]
    pub mc: Option<McConfig>,
}

fn default_scheme() -> Scheme {
    Scheme::Picard
}

/// Thresholds frozen after the first validated run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Thresholds {
    /// Upper bound on the largest probe gap of the last member.
    #[serde(default)]
    pub final_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub t_end: f64,
    /// Sequence length `N`; members are `n = 1..=N`.
    pub members: usize,
    /// Half-width `a` of the compact `[−a, a]^d` used by the L¹ metric.
    pub compact_half_width: f64,
    pub metrics: Vec<Metric>,
    pub sequence: SequenceFamily,
    pub phi: SpaceTimeFn,
    pub nonlinearity: NonlinearitySpec,
    pub lattice: LatticeSpec,
    pub solver: SolverSection,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configs always serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn operator(&self, n: Option<usize>) -> Result<OperatorSpec> {
        self.sequence.operator(n, self.lattice.dim)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = match self.solver.mode {
            Mode::Density => SolverConfig::default(),
            Mode::MonteCarlo => {
                let mut mc = self.solver.mc.unwrap_or_default();
                mc.seed = self.seed;
                SolverConfig::monte_carlo(mc)
            }
        };
        cfg.scheme = self.solver.scheme;
        cfg.knots = self.solver.knots;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.members < 2 {
            return bad("at least two sequence members are needed for a trend".into());
        }
        if !(self.t_end > 0.0) {
            return bad(format!("horizon {} must be positive", self.t_end));
        }
        if self.metrics.is_empty() {
            return bad("metric set is empty".into());
        }
        if !(self.compact_half_width > 0.0 && self.compact_half_width <= self.lattice.half_width) {
            return bad("the L1 compact must be a nonempty subset of the lattice box".into());
        }
        if self.solver.knots < 1 {
            return bad("at least one time interval is required".into());
        }
        self.lattice.build().map_err(|e| Error::Config(e.to_string()))?;
        self.nonlinearity.validate().map_err(|e| Error::Config(e.to_string()))?;
        for n in (1..=self.members).map(Some).chain([None]) {
            self.operator(n).map_err(|e| Error::Config(format!("member {n:?}: {e}")))?;
        }
        let needs_density = self.metrics.iter().any(|m| *m != Metric::Pointwise);
        if needs_density && (self.solver.mode != Mode::Density || !self.sequence.is_levy()) {
            return bad("L1 and weak-L2 metrics need density mode and constant coefficients".into());
        }
        if self.solver.mode == Mode::Density && !self.sequence.is_levy() {
            return bad("variable-coefficient sequences need Monte Carlo mode".into());
        }
        Ok(())
    }
}

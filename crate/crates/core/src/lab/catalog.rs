//! Prevalidated experiment configurations for the standard operator sequences.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fk_solver::{McConfig, Mode, Scheme};
use crate::lab::config::{
    ExperimentConfig, GammaField, LatticeSpec, Metric, MultiTerm, Schedule, SequenceFamily, SolverSection,
    Thresholds, CONFIG_VERSION,
};
use crate::nonlinearity::{NonlinearitySpec, SpaceTimeFn};
use crate::symbols::SymbolSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CatalogName {
    FracToLaplace,
    FracToFrac,
    Multifractal,
    RelativisticAlpha,
    RelativisticMass,
    LevytypeGamma,
    Levytype1dMulti,
    LevytypeMixed,
    /// `ψₙ = ψ`: every metric must vanish.
    ConstantControl,
}

impl CatalogName {
    pub const ALL: [CatalogName; 9] = [
        CatalogName::FracToLaplace,
        CatalogName::FracToFrac,
        CatalogName::Multifractal,
        CatalogName::RelativisticAlpha,
        CatalogName::RelativisticMass,
        CatalogName::LevytypeGamma,
        CatalogName::Levytype1dMulti,
        CatalogName::LevytypeMixed,
        CatalogName::ConstantControl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CatalogName::FracToLaplace => "frac_to_laplace",
            CatalogName::FracToFrac => "frac_to_frac",
            CatalogName::Multifractal => "multifractal",
            CatalogName::RelativisticAlpha => "relativistic_alpha",
            CatalogName::RelativisticMass => "relativistic_mass",
            CatalogName::LevytypeGamma => "levytype_gamma",
            CatalogName::Levytype1dMulti => "levytype_1d_multi",
            CatalogName::LevytypeMixed => "levytype_mixed",
            CatalogName::ConstantControl => "constant_control",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            CatalogName::FracToLaplace => "|xi|^a_n with a_n = 2 - 2^-n, limit the Laplacian",
            CatalogName::FracToFrac => "|xi|^a_n with a_n = 1.5 + 0.4 * 2^-n, limit |xi|^1.5",
            CatalogName::Multifractal => "c_n |xi|^a_n + c'_n |xi|^a'_n with converging weights and indices",
            CatalogName::RelativisticAlpha => "relativistic stable with a_n = 2 - 0.5 * 2^-n at mass 1",
            CatalogName::RelativisticMass => "relativistic 1.5-stable with mass 2^-n, limit |xi|^1.5",
            CatalogName::LevytypeGamma => "|g_n(x)|^a_n |xi|^a_n with g_n = g + 2^-n",
            CatalogName::Levytype1dMulti => "two independent stable drivers with x-dependent intensities",
            CatalogName::LevytypeMixed => "drift, Brownian part and x-dependent stable part",
            CatalogName::ConstantControl => "constant sequence |xi|^1.8",
        }
    }
}

impl fmt::Display for CatalogName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CatalogName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CatalogName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown catalog entry '{s}'")))
    }
}

/// `h₁ − y³` with `h₂ = 1`.
fn cubic(h1: SpaceTimeFn) -> NonlinearitySpec {
    NonlinearitySpec::power(h1, SpaceTimeFn::constant(1.0), 3.0)
}

fn density_run(name: CatalogName, sequence: SequenceFamily, half_width: f64, step: f64) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        name: name.as_str().into(),
        seed: 42,
        t_end: 1.0,
        members: 8,
        compact_half_width: 1.0,
        metrics: vec![Metric::Pointwise, Metric::L1Compact, Metric::WeakL2],
        sequence,
        phi: SpaceTimeFn::bump(1.0, 1.0),
        nonlinearity: cubic(SpaceTimeFn::bump(0.5, 1.0)),
        lattice: LatticeSpec { dim: 1, half_width, step },
        solver: SolverSection { mode: Mode::Density, scheme: Scheme::Picard, knots: 64, mc: None },
        thresholds: Thresholds::default(),
    }
}

fn mc_run(name: CatalogName, sequence: SequenceFamily) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        name: name.as_str().into(),
        seed: 42,
        t_end: 1.0,
        members: 6,
        compact_half_width: 1.0,
        metrics: vec![Metric::Pointwise],
        sequence,
        phi: SpaceTimeFn::bump(1.0, 1.0),
        nonlinearity: cubic(SpaceTimeFn::bump(0.5, 1.0)),
        lattice: LatticeSpec { dim: 1, half_width: 4.0, step: 0.25 },
        solver: SolverSection {
            mode: Mode::MonteCarlo,
            scheme: Scheme::Picard,
            knots: 8,
            mc: Some(McConfig { paths: 1000, steps_per_knot: 2, seed: 42 }),
        },
        thresholds: Thresholds::default(),
    }
}

fn gamma(shift: f64) -> GammaField {
    GammaField { offset: 1.0, amplitude: 0.5, scale: 1.0, shift }
}

/// The prevalidated configuration for `name`.
pub fn catalog(name: CatalogName) -> ExperimentConfig {
    use CatalogName::*;
    match name {
        FracToLaplace => {
            let mut cfg = density_run(
                name,
                SequenceFamily::Stable { alpha: Schedule { base: 2.0, offset: -1.0 } },
                64.0,
                0.025,
            );
            cfg.nonlinearity = cubic(SpaceTimeFn::Zero);
            cfg.thresholds.final_gap = Some(1e-2);
            cfg
        }
        FracToFrac => {
            density_run(name, SequenceFamily::Stable { alpha: Schedule { base: 1.5, offset: 0.4 } }, 64.0, 0.05)
        }
        Multifractal => density_run(
            name,
            SequenceFamily::Multifractal {
                terms: vec![
                    MultiTerm { c: 1.0, alpha: Schedule { base: 1.6, offset: 0.2 }, c_offset: 0.5 },
                    MultiTerm { c: 0.5, alpha: Schedule { base: 2.0, offset: -0.2 }, c_offset: 0.0 },
                ],
            },
            64.0,
            0.05,
        ),
        RelativisticAlpha => density_run(
            name,
            SequenceFamily::RelativisticAlpha { alpha: Schedule { base: 2.0, offset: -0.5 }, m: 1.0 },
            32.0,
            0.05,
        ),
        RelativisticMass => {
            density_run(name, SequenceFamily::RelativisticMass { alpha: 1.5, m0: 1.0 }, 64.0, 0.05)
        }
        LevytypeGamma => mc_run(
            name,
            SequenceFamily::LevyTypeGamma { alpha: Schedule { base: 1.8, offset: -0.2 }, gamma: gamma(1.0) },
        ),
        Levytype1dMulti => mc_run(
            name,
            SequenceFamily::LevyType1dMulti {
                alphas: vec![Schedule { base: 1.5, offset: 0.2 }, Schedule { base: 1.9, offset: -0.2 }],
                gammas: vec![
                    GammaField { offset: 0.6, amplitude: 0.2, scale: 1.0, shift: 0.5 },
                    GammaField { offset: 0.6, amplitude: -0.2, scale: 1.0, shift: 0.5 },
                ],
            },
        ),
        LevytypeMixed => mc_run(
            name,
            SequenceFamily::LevyTypeMixed {
                alpha: Schedule { base: 1.7, offset: -0.2 },
                b: Schedule { base: 0.2, offset: 0.5 },
                sigma: Schedule { base: 0.5, offset: 0.25 },
                gamma: gamma(0.5),
            },
        ),
        ConstantControl => {
            let symbol = SymbolSpec::stable(1.8, 1).expect("valid index");
            let mut cfg = density_run(name, SequenceFamily::Constant { symbol }, 32.0, 0.05);
            cfg.members = 4;
            cfg
        }
    }
}

pub fn catalog_by_name(name: &str) -> Result<ExperimentConfig> {
    Ok(catalog(name.parse()?))
}

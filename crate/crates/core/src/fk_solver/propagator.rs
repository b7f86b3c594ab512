//! Spectral transition operator `g ↦ E g(x + X_τ)` for constant-coefficient
//! operators on uniform lattices in one or two dimensions.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Lattice;
use crate::symbols::OperatorSpec;

/// How lattice data is extended to the padded FFT box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Each side repeats its boundary value up to the middle of the pad.
    EdgeConstant,
    Zero,
}

/// Multiplies the Fourier coefficients of padded lattice data by `e^{−τ p(ξ)}`.
pub struct SpectralPropagator {
    n: Vec<usize>,
    big: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    symbol: Vec<Complex64>,
}

impl std::fmt::Debug for SpectralPropagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPropagator").field("n", &self.n).field("big", &self.big).finish()
    }
}

/// Padded length: the next power of two at or above `factor · n`.
fn padded_len(n: usize, factor: usize) -> usize {
    (factor * n).max(2).next_power_of_two()
}

impl SpectralPropagator {
    pub fn new(op: &OperatorSpec, lattice: &Lattice, pad_factor: usize) -> Result<Self> {
        let d = lattice.dim();
        if !(1..=2).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        if op.dim != d {
            return Err(Error::DimensionMismatch { expected: op.dim, got: d });
        }
        if !op.is_constant() {
            return Err(Error::ModeMismatch("spectral propagation needs constant coefficients".into()));
        }
        let n = lattice.n.clone();
        let big: Vec<usize> = n.iter().map(|&k| padded_len(k, pad_factor.max(2))).collect();
        let mut planner = FftPlanner::new();
        let fwd = big.iter().map(|&m| planner.plan_fft_forward(m)).collect();
        let inv = big.iter().map(|&m| planner.plan_fft_inverse(m)).collect();
        let freqs: Vec<Vec<f64>> = big
            .iter()
            .zip(&lattice.step)
            .map(|(&m, &h)| {
                (0..m)
                    .map(|k| {
                        let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
                        std::f64::consts::TAU * kk / (m as f64 * h)
                    })
                    .collect()
            })
            .collect();
        let origin = vec![0.0; d];
        let total: usize = big.iter().product();
        let mut symbol = Vec::with_capacity(total);
        for flat in 0..total {
            let xi: Vec<f64> = if d == 1 {
                vec![freqs[0][flat]]
            } else {
                vec![freqs[0][flat / big[1]], freqs[1][flat % big[1]]]
            };
            symbol.push(op.eval_symbol(&origin, &xi)?);
        }
        Ok(SpectralPropagator { n, big, fwd, inv, symbol })
    }

    pub fn padded_shape(&self) -> &[usize] {
        &self.big
    }

    /// `e^{−τ p(ξ_k)}` on the padded frequency grid.
    pub fn multiplier(&self, tau: f64) -> Vec<Complex64> {
        self.symbol.iter().map(|p| (-tau * p).exp()).collect()
    }

    fn source_index(k: usize, n: usize, m: usize) -> Option<usize> {
        if k < n {
            Some(k)
        } else if k < n + (m - n) / 2 {
            Some(n - 1)
        } else if m > n {
            Some(0)
        } else {
            None
        }
    }

    /// Applies a precomputed multiplier to lattice values.
    pub fn apply(&self, g: &[f64], mult: &[Complex64], padding: Padding) -> Vec<f64> {
        let total: usize = self.big.iter().product();
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        match self.n.len() {
            1 => {
                let (n, m) = (self.n[0], self.big[0]);
                for (k, b) in buf.iter_mut().enumerate() {
                    let v = if k < n {
                        g[k]
                    } else if padding == Padding::EdgeConstant {
                        g[Self::source_index(k, n, m).unwrap_or(0)]
                    } else {
                        0.0
                    };
                    *b = Complex64::new(v, 0.0);
                }
                self.fwd[0].process(&mut buf);
                for (b, w) in buf.iter_mut().zip(mult) {
                    *b *= w;
                }
                self.inv[0].process(&mut buf);
                let scale = 1.0 / m as f64;
                buf[..n].iter().map(|c| c.re * scale).collect()
            }
            _ => {
                let (n0, n1) = (self.n[0], self.n[1]);
                let (m0, m1) = (self.big[0], self.big[1]);
                for k0 in 0..m0 {
                    for k1 in 0..m1 {
                        let v = match padding {
                            Padding::EdgeConstant => {
                                let i0 = Self::source_index(k0, n0, m0).unwrap_or(0);
                                let i1 = Self::source_index(k1, n1, m1).unwrap_or(0);
                                g[i0 * n1 + i1]
                            }
                            Padding::Zero if k0 < n0 && k1 < n1 => g[k0 * n1 + k1],
                            Padding::Zero => 0.0,
                        };
                        buf[k0 * m1 + k1] = Complex64::new(v, 0.0);
                    }
                }
                self.fwd[1].process(&mut buf);
                let mut t = transpose(&buf, m0, m1);
                self.fwd[0].process(&mut t);
                // `t` is laid out [k1][k0]; the multiplier is [k0][k1].
                for k1 in 0..m1 {
                    for k0 in 0..m0 {
                        t[k1 * m0 + k0] *= mult[k0 * m1 + k1];
                    }
                }
                self.inv[0].process(&mut t);
                let mut back = transpose(&t, m1, m0);
                self.inv[1].process(&mut back);
                let scale = 1.0 / (m0 * m1) as f64;
                let mut out = Vec::with_capacity(n0 * n1);
                for i0 in 0..n0 {
                    for i1 in 0..n1 {
                        out.push(back[i0 * m1 + i1].re * scale);
                    }
                }
                out
            }
        }
    }

    pub fn apply_tau(&self, g: &[f64], tau: f64, padding: Padding) -> Vec<f64> {
        self.apply(g, &self.multiplier(tau), padding)
    }
}

fn transpose(a: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Probability that `x + X_τ` leaves the lattice box, at each of `points`.
pub fn boundary_mass(op: &OperatorSpec, lattice: &Lattice, tau: f64, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let prop = SpectralPropagator::new(op, lattice, 4)?;
    let ones = vec![1.0; lattice.len()];
    let stay = prop.apply_tau(&ones, tau, Padding::Zero);
    Ok(points
        .iter()
        .map(|x| (1.0 - lattice.interpolate_clamped(&stay, x)).clamp(0.0, 1.0))
        .collect())
}

//! Uniform space lattices and space-time grid functions.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tensor-product uniform lattice `lo + i·step` with `n` nodes per axis.
/// Flat indices run with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub lo: Vec<f64>,
    pub step: Vec<f64>,
    pub n: Vec<usize>,
}

impl Lattice {
    pub fn new(lo: Vec<f64>, step: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != step.len() || lo.len() != n.len() {
            return Err(Error::InvalidSpec("lattice axes disagree".into()));
        }
        if step.iter().any(|&h| !(h > 0.0 && h.is_finite())) || n.contains(&0) {
            return Err(Error::InvalidSpec("lattice needs positive steps and node counts".into()));
        }
        Ok(Lattice { lo, step, n })
    }

    /// `[-half_width, half_width]^dim` with the given spacing (rounded to fit).
    pub fn symmetric(dim: usize, half_width: f64, step: f64) -> Result<Self> {
        let cells = (2.0 * half_width / step).round().max(1.0) as usize;
        let h = 2.0 * half_width / cells as f64;
        Self::new(vec![-half_width; dim], vec![h; dim], vec![cells + 1; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.coord(axis, self.n[axis] - 1)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.step[axis]
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.coord(axis, i)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.step.iter().product()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.n[a];
            flat /= self.n[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(a, &v)| v >= self.lo[a] - 1e-12 && v <= self.hi(a) + 1e-12)
    }

    /// Multilinear interpolation; `None` outside the lattice.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        if !self.contains(x) {
            return None;
        }
        Some(self.interpolate_clamped(values, x))
    }

    /// Multilinear interpolation with coordinates clamped into the lattice.
    pub fn interpolate_clamped(&self, values: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let mut base = [0usize; 4];
        let mut frac = [0.0f64; 4];
        for a in 0..d {
            let n = self.n[a];
            if n == 1 {
                base[a] = 0;
                frac[a] = 0.0;
                continue;
            }
            let s = ((x[a] - self.lo[a]) / self.step[a]).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                let i = (base[a] + bit).min(self.n[a] - 1);
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.n[a] + i;
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        acc
    }

    /// Nearest node (clamped).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.dim())
            .map(|a| {
                let s = ((x[a] - self.lo[a]) / self.step[a]).round();
                s.clamp(0.0, (self.n[a] - 1) as f64) as usize
            })
            .collect();
        self.flat_index(&idx)
    }
}

/// `u(s_j, x_i)` on time knots times a lattice. Values are stored knot-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub knots: Vec<f64>,
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"GFN1";
const FORMAT_VERSION: u32 = 1;

impl GridFunction {
    pub fn new(knots: Vec<f64>, lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec("time knots must be increasing".into()));
        }
        if values.len() != knots.len() * lattice.len() {
            return Err(Error::DimensionMismatch { expected: knots.len() * lattice.len(), got: values.len() });
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { path: p % lattice.len(), step: p / lattice.len() });
        }
        Ok(GridFunction { knots, lattice, values })
    }

    pub fn zeros(knots: Vec<f64>, lattice: Lattice) -> Self {
        let n = knots.len() * lattice.len();
        GridFunction { knots, lattice, values: vec![0.0; n] }
    }

    pub fn terminal_time(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let n = self.lattice.len();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn slice_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.lattice.len();
        &mut self.values[j * n..(j + 1) * n]
    }

    /// Index of the knot governing time `s` under the left-constant rule.
    pub fn knot_index(&self, s: f64) -> usize {
        let k = self.knots.partition_point(|&t| t <= s + 1e-12);
        k.saturating_sub(1)
    }

    /// Value at `(s, x)`: left-constant in time, multilinear in space, clamped to the box.
    pub fn eval(&self, s: f64, x: &[f64]) -> f64 {
        self.lattice.interpolate_clamped(self.slice(self.knot_index(s)), x)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::GridMismatch("grid functions have different shapes".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// CSV with header `s,x,u` (or `s,x1,...,xd,u`), after optional `#` comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let d = self.lattice.dim();
        let header = if d == 1 {
            "s,x,u".to_string()
        } else {
            let xs: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
            format!("s,{},u", xs.join(","))
        };
        writeln!(w, "{header}")?;
        for (j, &s) in self.knots.iter().enumerate() {
            for i in 0..self.lattice.len() {
                let p = self.lattice.point(i);
                let xs: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{s:e},{},{:e}", xs.join(","), self.slice(j)[i])?;
            }
        }
        Ok(())
    }

    /// Reads the CSV written by [`GridFunction::write_csv`], reconstructing the lattice.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if width.is_none() {
                width = Some(line.split(',').count());
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Config(format!("bad CSV value: {e}")))?;
            if Some(row.len()) != width {
                return Err(Error::Config("ragged CSV row".into()));
            }
            rows.push(row);
        }
        let width = width.ok_or(Error::Empty("csv"))?;
        if width < 3 || rows.is_empty() {
            return Err(Error::Empty("csv rows"));
        }
        let d = width - 2;
        let mut knots: Vec<f64> = Vec::new();
        for r in &rows {
            if knots.last() != Some(&r[0]) {
                knots.push(r[0]);
            }
        }
        let per = rows.len() / knots.len();
        let mut lo = Vec::with_capacity(d);
        let mut step = Vec::with_capacity(d);
        let mut n = Vec::with_capacity(d);
        for a in 0..d {
            let mut axis = 1;
            let first = rows[0][1 + a];
            let mut vals: Vec<f64> = rows[..per].iter().map(|r| r[1 + a]).collect();
            vals.sort_by(|x, y| x.total_cmp(y));
            vals.dedup();
            if vals.len() > 1 {
                axis = vals.len();
                step.push((vals[vals.len() - 1] - vals[0]) / (axis - 1) as f64);
            } else {
                step.push(1.0);
            }
            lo.push(first);
            n.push(axis);
        }
        let lattice = Lattice::new(lo, step, n)?;
        if lattice.len() != per {
            return Err(Error::GridMismatch("CSV rows do not form a tensor lattice".into()));
        }
        let values = rows.iter().map(|r| r[width - 1]).collect();
        GridFunction::new(knots, lattice, values)
    }

    /// Compact little-endian binary: magic, version, dim, knot count,
    /// per-axis (lo, step, n), knots, values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.lattice.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.knots.len() as u64).to_le_bytes())?;
        for a in 0..self.lattice.dim() {
            w.write_all(&self.lattice.lo[a].to_le_bytes())?;
            w.write_all(&self.lattice.step[a].to_le_bytes())?;
            w.write_all(&(self.lattice.n[a] as u64).to_le_bytes())?;
        }
        for k in &self.knots {
            w.write_all(&k.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not a grid function file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported grid function version {version}")));
        }
        let d = read_u32(&mut r)? as usize;
        let nk = read_u64(&mut r)? as usize;
        let mut lo = Vec::new();
        let mut step = Vec::new();
        let mut n = Vec::new();
        for _ in 0..d {
            lo.push(read_f64(&mut r)?);
            step.push(read_f64(&mut r)?);
            n.push(read_u64(&mut r)? as usize);
        }
        let lattice = Lattice::new(lo, step, n)?;
        let knots = (0..nk).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let values = (0..nk * lattice.len()).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        GridFunction::new(knots, lattice, values)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_lattice_layout() {
        let l = Lattice::symmetric(2, 1.0, 0.5).unwrap();
        assert_eq!(l.n, vec![5, 5]);
        assert_eq!(l.point(0), vec![-1.0, -1.0]);
        assert_eq!(l.point(1), vec![-1.0, -0.5]);
        assert_eq!(l.flat_index(&l.multi_index(17)), 17);
        assert!((l.cell_volume() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn interpolation_is_exact_on_affine_data() {
        let l = Lattice::symmetric(2, 2.0, 0.25).unwrap();
        let v: Vec<f64> = l.points().iter().map(|p| 1.0 + 2.0 * p[0] - p[1]).collect();
        let x = [0.3, -1.17];
        assert!((l.interpolate(&v, &x).unwrap() - (1.0 + 0.6 + 1.17)).abs() < 1e-12);
        assert!(l.interpolate(&v, &[3.0, 0.0]).is_none());
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let l = Lattice::new(vec![-1.0, 0.0], vec![0.5, 0.25], vec![5, 3]).unwrap();
        let knots = vec![0.0, 0.5, 1.0];
        let values: Vec<f64> = (0..knots.len() * l.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = GridFunction::new(knots, l, values).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf, &["seed 7".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap() == "s,x1,x2,u");
        let back = GridFunction::read_csv(&buf[..]).unwrap();
        assert_eq!(back.knots, g.knots);
        assert!(back.max_abs_diff(&g).unwrap() < 1e-14);

        let mut bin = Vec::new();
        g.write_binary(&mut bin).unwrap();
        assert_eq!(&bin[..4], b"GFN1");
        assert_eq!(GridFunction::read_binary(&bin[..]).unwrap(), g);
    }

    #[test]
    fn left_constant_time_rule() {
        let l = Lattice::symmetric(1, 1.0, 1.0).unwrap();
        let g = GridFunction::new(vec![0.0, 0.5, 1.0], l, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(g.eval(0.49, &[0.0]), 0.0);
        assert_eq!(g.eval(0.5, &[0.0]), 1.0);
        assert_eq!(g.eval(1.0, &[0.0]), 2.0);
    }

    proptest! {
        #[test]
        fn interpolation_reproduces_nodes(i in 0usize..121, seed in 0u64..1000) {
            let l = Lattice::symmetric(2, 1.0, 0.2).unwrap();
            let v: Vec<f64> = (0..l.len()).map(|k| ((k as u64 * 31 + seed) % 97) as f64).collect();
            let p = l.point(i);
            prop_assert!((l.interpolate(&v, &p).unwrap() - v[i]).abs() < 1e-9);
        }
    }
}

//! Two-phase random coefficient fields on the lattice torus.
//!
//! A `MaterialModel` is a pair of Z^d-periodic coefficient matrices
//! (the reference phase and the defect phase, each piecewise constant on
//! an s×s subcell partition of the unit cell) together with a defect
//! probability `eta`. A `DefectField` is one realization of the i.i.d.
//! Bernoulli switches on the N^d cells of the torus [0, N)^d: cell k
//! carries the defect phase exactly when its bit is 1.
//!
//! Bits are drawn from a counter-based stream keyed by `(seed, cell)`, so
//! any single cell is reconstructible without sampling the rest and
//! sampling is a pure function of `(eta, N, seed)`.

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use std::fmt::Write as _;

/// The two phases of the material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Reference phase (bit 0).
    A,
    /// Defect phase (bit 1).
    C,
}

/// Periodic two-phase coefficient model with defect probability.
#[derive(Debug, Clone)]
pub struct MaterialModel {
    d: usize,
    /// Subcells per unit-cell side.
    s: usize,
    /// Phase-A coefficient per subcell, x-fastest, s^d entries.
    a_cells: Vec<Tensor>,
    /// Phase-C coefficient per subcell, same partition.
    c_cells: Vec<Tensor>,
    eta: f64,
    /// Ellipticity range over both phases.
    bounds: (f64, f64),
}

impl MaterialModel {
    /// Constant-per-cell checkerboard model: phase A = alpha·Id,
    /// phase C = beta·Id on a single-subcell partition.
    pub fn checkerboard(d: usize, alpha: f64, beta: f64, eta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidModel(format!(
                "phase values must be positive, got alpha={alpha}, beta={beta}"
            )));
        }
        Self::from_subcells(
            d,
            1,
            vec![Tensor::scaled_identity(d, alpha)],
            vec![Tensor::scaled_identity(d, beta)],
            eta,
        )
    }

    /// General model from per-subcell coefficient tables sharing one
    /// uniform s×s partition of the unit cell (x-fastest ordering).
    pub fn from_subcells(
        d: usize,
        s: usize,
        a_cells: Vec<Tensor>,
        c_cells: Vec<Tensor>,
        eta: f64,
    ) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::InvalidModel(format!("dimension {d} not supported")));
        }
        if s == 0 {
            return Err(Error::InvalidModel("subcell count must be positive".into()));
        }
        let count = s.pow(d as u32);
        if a_cells.len() != count || c_cells.len() != count {
            return Err(Error::InvalidModel(format!(
                "expected {count} subcells, got {} / {}",
                a_cells.len(),
                c_cells.len()
            )));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidModel(format!("eta={eta} outside [0, 1]")));
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (idx, t) in a_cells.iter().chain(c_cells.iter()).enumerate() {
            if t.dim() != d {
                return Err(Error::InvalidModel("subcell tensor dimension mismatch".into()));
            }
            t.validate_spd(&format!("subcell {idx}"))?;
            let (l, h) = t.eigen_range();
            lo = lo.min(l);
            hi = hi.max(h);
        }
        Ok(MaterialModel { d, s, a_cells, c_cells, eta, bounds: (lo, hi) })
    }

    /// 2D laminate cell: stripes of `alpha` and `beta` with normal e1,
    /// equal volume fractions (two subcells per side).
    pub fn laminate_2d(alpha: f64, beta: f64, eta: f64) -> Result<Self> {
        let a = |v: f64| Tensor::scaled_identity(2, v);
        // subcells (x, y): x = 0 -> alpha, x = 1 -> beta, independent of y
        let cells = vec![a(alpha), a(beta), a(alpha), a(beta)];
        Self::from_subcells(2, 2, cells.clone(), cells, eta)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn subcells_per_side(&self) -> usize {
        self.s
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Copy of the model with a different defect probability.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidModel(format!("eta={eta} outside [0, 1]")));
        }
        let mut m = self.clone();
        m.eta = eta;
        Ok(m)
    }

    /// Declared ellipticity range over both phases.
    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Coefficient of `phase` at fractional position `frac` in the unit
    /// cell (components in [0, 1)).
    pub fn phase_coefficient(&self, phase: Phase, frac: [f64; 2]) -> Tensor {
        let sub = |x: f64| ((x * self.s as f64) as usize).min(self.s - 1);
        let idx = match self.d {
            1 => sub(frac[0]),
            _ => sub(frac[0]) + self.s * sub(frac[1]),
        };
        match phase {
            Phase::A => self.a_cells[idx],
            Phase::C => self.c_cells[idx],
        }
    }

    /// True when both phases are scalar multiples of the identity on a
    /// single subcell; such a model is invariant under the full square
    /// lattice symmetry group.
    pub fn is_lattice_symmetric(&self) -> bool {
        self.s == 1
            && self.a_cells[0].is_isotropic(1e-14)
            && self.c_cells[0].is_isotropic(1e-14)
    }

    /// True when the two phases coincide (the field is deterministic).
    pub fn phases_equal(&self) -> bool {
        self.a_cells
            .iter()
            .zip(&self.c_cells)
            .all(|(a, c)| a.max_abs_diff(c) == 0.0)
    }

    /// Stable fingerprint of (d, s, phase tables); used to key catalog
    /// files. Independent of eta: catalogs hold eta-free quantities.
    pub fn fingerprint(&self) -> u64 {
        let mut h = rng::mix64(0x5eed_cafe, self.d as u64) ^ rng::mix64(0x5eed_cafe, self.s as u64);
        let mut feed = |v: f64| {
            h = rng::mix64(h, v.to_bits());
        };
        for t in self.a_cells.iter().chain(self.c_cells.iter()) {
            for i in 0..self.d {
                for j in 0..self.d {
                    feed(t.entry(i, j));
                }
            }
        }
        h
    }
}

/// One realization of the Bernoulli defect lattice on [0, N)^d.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefectField {
    n: usize,
    d: usize,
    seed: u64,
    bits: Vec<u8>,
}

impl DefectField {
    /// Samples the field for `model.eta()`: bit k is an independent
    /// Bernoulli(eta) draw from the stream keyed by (seed, linear index
    /// of k), x-fastest.
    pub fn sample(model: &MaterialModel, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("N must be at least 1".into()));
        }
        let eta = model.eta();
        let count = n.pow(model.dim() as u32);
        let bits = (0..count)
            .map(|k| u8::from(rng::uniform01(seed, k as u64) < eta))
            .collect();
        Ok(DefectField { n, d: model.dim(), seed, bits })
    }

    /// All-zero field (no defects).
    pub fn zeros(d: usize, n: usize) -> Self {
        DefectField { n, d, seed: 0, bits: vec![0; n.pow(d as u32)] }
    }

    /// Field with prescribed defect cells (multi-index per cell).
    pub fn with_defects(d: usize, n: usize, cells: &[[usize; 2]]) -> Self {
        let mut f = Self::zeros(d, n);
        for c in cells {
            let idx = f.linear_index(*c);
            f.bits[idx] = 1;
        }
        f
    }

    pub fn from_bits(d: usize, n: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != n.pow(d as u32) {
            return Err(Error::InvalidInput("bit count does not match N^d".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("bits must be 0 or 1".into()));
        }
        Ok(DefectField { n, d, seed: 0, bits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of lattice cells |I_N| = N^d.
    pub fn cell_count(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn linear_index(&self, k: [usize; 2]) -> usize {
        match self.d {
            1 => k[0],
            _ => k[0] + self.n * k[1],
        }
    }

    #[inline]
    pub fn bit(&self, k: [usize; 2]) -> u8 {
        self.bits[self.linear_index(k)]
    }

    #[inline]
    pub fn bit_linear(&self, idx: usize) -> u8 {
        self.bits[idx]
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Total defect count, sum of all bits.
    pub fn count_defects(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Linear indices of cells carrying the given bit value.
    pub fn cells_with_bit(&self, value: u8) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == value).then_some(i))
            .collect()
    }

    /// Field cyclically shifted by `shift` cells (new[k] = old[k - shift]).
    pub fn shifted(&self, shift: [usize; 2]) -> Self {
        let n = self.n;
        let mut out = self.clone();
        match self.d {
            1 => {
                for i in 0..n {
                    out.bits[i] = self.bits[(i + n - shift[0] % n) % n];
                }
            }
            _ => {
                for j in 0..n {
                    for i in 0..n {
                        let si = (i + n - shift[0] % n) % n;
                        let sj = (j + n - shift[1] % n) % n;
                        out.bits[i + n * j] = self.bits[si + n * sj];
                    }
                }
            }
        }
        out
    }

    /// Compact text form: header line then one row of 0/1 characters per
    /// lattice row.
    pub fn to_text(&self, eta: f64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "N={} d={} eta={:?} seed={:#018x}", self.n, self.d, eta, self.seed);
        let rows = if self.d == 1 { 1 } else { self.n };
        for j in 0..rows {
            for i in 0..self.n {
                s.push(if self.bits[i + self.n * j] == 1 { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    /// Parses the text form written by [`DefectField::to_text`].
    /// Returns the field and the recorded eta.
    pub fn from_text(text: &str) -> Result<(Self, f64)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))?;
        let mut n = None;
        let mut d = None;
        let mut eta = None;
        let mut seed = 0u64;
        for tok in header.split_whitespace() {
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token '{tok}'")))?;
            match key {
                "N" => n = Some(val.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                "d" => d = Some(val.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                "eta" => eta = Some(val.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?),
                "seed" => {
                    let raw = val.trim_start_matches("0x");
                    seed = u64::from_str_radix(raw, 16).map_err(|e| Error::Parse(e.to_string()))?;
                }
                _ => return Err(Error::Parse(format!("unknown header key '{key}'"))),
            }
        }
        let (n, d, eta) = match (n, d, eta) {
            (Some(n), Some(d), Some(eta)) => (n, d, eta),
            _ => return Err(Error::Parse("header must carry N, d and eta".into())),
        };
        let mut bits = Vec::with_capacity(n.pow(d as u32));
        for line in lines {
            for ch in line.chars() {
                match ch {
                    '0' => bits.push(0),
                    '1' => bits.push(1),
                    _ => return Err(Error::Parse(format!("unexpected character '{ch}'"))),
                }
            }
        }
        let mut field = Self::from_bits(d, n, bits)?;
        field.seed = seed;
        Ok((field, eta))
    }
}

/// Coefficient of the realized field at a point of [0, N)^d.
/// Cell convention: k = floor(x) componentwise.
pub fn coefficient_at(model: &MaterialModel, field: &DefectField, x: &[f64]) -> Result<Tensor> {
    if x.len() != model.dim() {
        return Err(Error::InvalidInput("point dimension mismatch".into()));
    }
    let n = field.n() as f64;
    let mut k = [0usize; 2];
    let mut frac = [0.0f64; 2];
    for (i, &xi) in x.iter().enumerate() {
        if !(0.0..n).contains(&xi) {
            return Err(Error::InvalidInput(format!("point component {xi} outside [0, {n})")));
        }
        k[i] = xi.floor() as usize;
        frac[i] = xi - xi.floor();
    }
    let phase = if field.bit(k) == 1 { Phase::C } else { Phase::A };
    Ok(model.phase_coefficient(phase, frac))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_rejects_nonpositive_phases() {
        assert!(MaterialModel::checkerboard(2, -1.0, 23.0, 0.5).is_err());
        assert!(MaterialModel::checkerboard(2, 3.0, 0.0, 0.5).is_err());
        assert!(MaterialModel::checkerboard(2, 3.0, 23.0, 1.5).is_err());
    }

    #[test]
    fn degenerate_eta_gives_constant_fields() {
        let m0 = MaterialModel::checkerboard(2, 3.0, 23.0, 0.0).unwrap();
        let m1 = MaterialModel::checkerboard(2, 3.0, 23.0, 1.0).unwrap();
        for seed in [1u64, 999, 123456] {
            let f0 = DefectField::sample(&m0, 7, seed).unwrap();
            let f1 = DefectField::sample(&m1, 7, seed).unwrap();
            assert_eq!(f0.count_defects(), 0);
            assert_eq!(f1.count_defects(), 49);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = MaterialModel::checkerboard(2, 3.0, 23.0, 0.37).unwrap();
        let a = DefectField::sample(&m, 12, 777).unwrap();
        let b = DefectField::sample(&m, 12, 777).unwrap();
        assert_eq!(a, b);
        let c = DefectField::sample(&m, 12, 778).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_mean_within_four_sigma() {
        // eta = 0.5, N = 50, d = 2: binomial sd = sqrt(0.25/2500) = 0.01
        let m = MaterialModel::checkerboard(2, 3.0, 23.0, 0.5).unwrap();
        let f = DefectField::sample(&m, 50, 2024).unwrap();
        let mean = f.count_defects() as f64 / 2500.0;
        assert!((mean - 0.5).abs() <= 0.04, "mean {mean}");
    }

    #[test]
    fn marginal_law_is_bernoulli_eta_chi_square() {
        // fixed cell, many seeds; 1-df chi-square below the 1e-3 quantile
        let eta = 0.3;
        let m = MaterialModel::checkerboard(2, 3.0, 23.0, eta).unwrap();
        for k in [[0usize, 0], [3, 7], [9, 2]] {
            let trials = 20_000;
            let mut ones = 0usize;
            for s in 0..trials {
                let f = DefectField::sample(&m, 10, 0xABCD + s as u64).unwrap();
                ones += f.bit(k) as usize;
            }
            let e1 = trials as f64 * eta;
            let e0 = trials as f64 * (1.0 - eta);
            let o1 = ones as f64;
            let o0 = (trials - ones) as f64;
            let chi2 = (o1 - e1).powi(2) / e1 + (o0 - e0).powi(2) / e0;
            assert!(chi2 < 10.828, "chi2 = {chi2} at cell {k:?}");
        }
    }

    #[test]
    fn coefficient_lookup_takes_two_values() {
        let m = MaterialModel::checkerboard(2, 3.0, 23.0, 0.5).unwrap();
        let f = DefectField::with_defects(2, 4, &[[1, 2]]);
        let c_def = coefficient_at(&m, &f, &[1.5, 2.5]).unwrap();
        let c_ref = coefficient_at(&m, &f, &[0.5, 0.5]).unwrap();
        assert_eq!(c_def.entry(0, 0), 23.0);
        assert_eq!(c_ref.entry(0, 0), 3.0);
        assert!(coefficient_at(&m, &f, &[4.0, 0.0]).is_err());
        assert!(coefficient_at(&m, &f, &[-0.1, 0.0]).is_err());
    }

    #[test]
    fn equal_phases_make_lookup_field_independent() {
        let m = MaterialModel::checkerboard(2, 5.0, 5.0, 0.3).unwrap();
        assert!(m.phases_equal());
        let f1 = DefectField::sample(&m, 6, 1).unwrap();
        let f2 = DefectField::sample(&m, 6, 2).unwrap();
        let x = [2.3, 4.9];
        let a = coefficient_at(&m, &f1, &x).unwrap();
        let b = coefficient_at(&m, &f2, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn count_defects_examples() {
        let f = DefectField::from_bits(1, 4, vec![1, 0, 1, 0]).unwrap();
        assert_eq!(f.count_defects(), 2);
        let zero = DefectField::zeros(2, 10);
        assert_eq!(zero.count_defects(), 0);
        let ones = DefectField::from_bits(2, 10, vec![1; 100]).unwrap();
        assert_eq!(ones.count_defects(), 100);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let m = MaterialModel::checkerboard(2, 3.0, 23.0, 0.41).unwrap();
        let f = DefectField::sample(&m, 9, 0xFEED).unwrap();
        let text = f.to_text(0.41);
        let (g, eta) = DefectField::from_text(&text).unwrap();
        assert_eq!(f.bits(), g.bits());
        assert_eq!(f.seed(), g.seed());
        assert_eq!(eta, 0.41);
    }

    #[test]
    fn laminate_partition_is_striped() {
        let m = MaterialModel::laminate_2d(3.0, 23.0, 0.0).unwrap();
        let f = DefectField::zeros(2, 1);
        assert_eq!(coefficient_at(&m, &f, &[0.25, 0.9]).unwrap().entry(0, 0), 3.0);
        assert_eq!(coefficient_at(&m, &f, &[0.75, 0.1]).unwrap().entry(0, 0), 23.0);
    }
}

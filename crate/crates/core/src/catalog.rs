//! Deterministic defect tensors and their marginal contributions.
//!
//! For a reference phase (either side of the two-phase model) the catalog
//! holds the homogenized tensor of the defect-free torus, the tensor with
//! a single defect cell, and the full table of two-defect tensors indexed
//! by the lattice offset between the defects. Periodic boundary
//! conditions make the one-defect tensor independent of the defect
//! location and the pair tensor a function of the offset only, so one
//! solve per offset suffices. Square-lattice symmetry cuts the computed
//! offsets further: one representative per orbit is solved and the rest
//! filled by conjugation.
//!
//! Derived from the tables are the one-defect and pair marginals, their
//! lattice totals, and the weakly-stochastic expansion of the expected
//! apparent tensor around either pure phase.

use crate::error::{Error, Result};
use crate::exec;
use crate::field::{MaterialModel, Phase};
use crate::solver::{solve_cell_problem, ElementCoefficients, SolverOptions};
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::Path;

/// Reference phase of a catalog side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Marginals around the defect-free phase A.
    A,
    /// Marginals around the full-defect phase C.
    C,
}

impl Side {
    pub fn base_phase(self) -> Phase {
        match self {
            Side::A => Phase::A,
            Side::C => Phase::C,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::C => "C",
        }
    }
}

/// Signed lattice offset between two defect cells.
pub type Offset = [i64; 2];

/// Wraps a signed offset into linear storage index on the torus.
pub fn linear_offset(off: Offset, n: usize, d: usize) -> usize {
    let n_i = n as i64;
    let ox = ((off[0] % n_i) + n_i) % n_i;
    match d {
        1 => ox as usize,
        _ => {
            let oy = ((off[1] % n_i) + n_i) % n_i;
            (ox + n_i * oy) as usize
        }
    }
}

pub fn offset_from_linear(idx: usize, n: usize, d: usize) -> Offset {
    match d {
        1 => [idx as i64, 0],
        _ => [(idx % n) as i64, (idx / n) as i64],
    }
}

/// Signed representative with components in (-N/2, N/2].
fn signed_rep(idx: usize, n: usize, d: usize) -> Offset {
    let half = (n / 2) as i64;
    let n_i = n as i64;
    let mut o = offset_from_linear(idx, n, d);
    for c in o.iter_mut().take(d) {
        if *c > half {
            *c -= n_i;
        }
    }
    o
}

/// The 8 orthogonal symmetries of the square lattice (rows of R).
const D8: [[[i8; 2]; 2]; 8] = [
    [[1, 0], [0, 1]],
    [[0, -1], [1, 0]],
    [[-1, 0], [0, -1]],
    [[0, 1], [-1, 0]],
    [[1, 0], [0, -1]],
    [[-1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1], [-1, 0]],
];

const IDENTITY: [[i8; 2]; 2] = [[1, 0], [0, 1]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryLevel {
    /// Offset and its negation only (exact by translation, model-free).
    Inversion,
    /// Full square-lattice point group (needs a lattice-symmetric model).
    Full,
}

fn apply_rot(r: [[i8; 2]; 2], o: Offset) -> Offset {
    [
        r[0][0] as i64 * o[0] + r[0][1] as i64 * o[1],
        r[1][0] as i64 * o[0] + r[1][1] as i64 * o[1],
    ]
}

/// Canonical representative of the symmetry orbit of a (wrapped) offset,
/// together with the group element mapping the offset onto it.
pub(crate) fn canonical_offset(
    idx: usize,
    n: usize,
    d: usize,
    level: SymmetryLevel,
) -> (usize, [[i8; 2]; 2]) {
    if d == 1 {
        // inversion only: {l, N - l}
        let alt = (n - idx) % n;
        return if alt != 0 && alt < idx { (alt, IDENTITY) } else { (idx, IDENTITY) };
    }
    let o = signed_rep(idx, n, d);
    let ops: &[[[i8; 2]; 2]] = match level {
        SymmetryLevel::Inversion => &D8[0..1],
        SymmetryLevel::Full => &D8,
    };
    let mut best = idx;
    let mut best_rot = IDENTITY;
    // inversion is included explicitly: it is exact for any model
    for &rot in ops {
        for sign in [1i64, -1] {
            let cand = linear_offset(apply_rot(rot, [sign * o[0], sign * o[1]]), n, d);
            if cand != 0 && cand < best {
                best = cand;
                best_rot = rot;
            }
        }
    }
    (best, best_rot)
}

/// One reference side: raw tensors plus derived marginal tables.
#[derive(Debug, Clone)]
pub struct SideCatalog {
    pub side: Side,
    /// Homogenized tensor of the pure reference phase on Q_N.
    pub base: Tensor,
    /// Tensor with a single defect cell.
    pub one_defect: Tensor,
    /// Two-defect tensors by linear offset (entry 0 unused).
    pair: Vec<Tensor>,
    /// Pair marginals pair - 2 onedef + base, same indexing.
    marg: Vec<Tensor>,
    /// Sum of all pair marginals over nonzero offsets.
    marg_sum: Tensor,
    /// Full cell problems solved on Q_N for this side.
    pub solves: usize,
    pub method: String,
}

impl SideCatalog {
    /// Assembles a side from raw tensors; call `refresh_marginals` after.
    pub(crate) fn from_parts(
        side: Side,
        base: Tensor,
        one_defect: Tensor,
        pair: Vec<Tensor>,
        solves: usize,
        method: String,
    ) -> Self {
        let d = base.dim();
        SideCatalog {
            side,
            base,
            one_defect,
            pair,
            marg: Vec::new(),
            marg_sum: Tensor::zero(d),
            solves,
            method,
        }
    }

    pub(crate) fn refresh_marginals(&mut self, d: usize) {
        self.finalize(d);
    }

    fn finalize(&mut self, d: usize) {
        let count = self.pair.len();
        self.marg = vec![Tensor::zero(d); count];
        let mut sum = Tensor::zero(d);
        for idx in 1..count {
            let m = self.pair[idx] - self.one_defect - self.one_defect + self.base;
            self.marg[idx] = m;
            sum = sum + m;
        }
        self.marg_sum = sum;
    }

    /// One-defect marginal, the tensor increment of a single defect.
    pub fn one_defect_marginal(&self) -> Tensor {
        self.one_defect - self.base
    }

    pub fn pair_tensor(&self, idx: usize) -> &Tensor {
        &self.pair[idx]
    }

    /// Pair marginal by linear offset index.
    #[inline]
    pub fn pair_marginal(&self, idx: usize) -> &Tensor {
        &self.marg[idx]
    }

    pub fn pair_marginal_sum(&self) -> Tensor {
        self.marg_sum
    }

    pub fn offset_count(&self) -> usize {
        self.pair.len() - 1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CatalogOptions {
    pub solver: SolverOptions,
    /// None: full symmetry when the model allows it, inversion otherwise.
    pub symmetry: Option<SymmetryLevel>,
    pub parallel: bool,
}

impl Default for CatalogOptions {
    fn default() -> Self {
        CatalogOptions { solver: SolverOptions::default(), symmetry: None, parallel: true }
    }
}

impl CatalogOptions {
    pub(crate) fn level(&self, model: &MaterialModel) -> SymmetryLevel {
        self.symmetry.unwrap_or(if model.is_lattice_symmetric() {
            SymmetryLevel::Full
        } else {
            SymmetryLevel::Inversion
        })
    }
}

/// Both sides of the catalog for a model on a fixed grid.
#[derive(Debug, Clone)]
pub struct DefectCatalog {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub model_hash: u64,
    pub a_side: SideCatalog,
    pub c_side: SideCatalog,
}

/// Tensor of the torus carrying the pure reference phase except one
/// defect cell (at the origin; the location does not matter).
pub fn one_defect_tensor(
    model: &MaterialModel,
    n: usize,
    r: usize,
    side: Side,
    opts: &SolverOptions,
) -> Result<Tensor> {
    let coef = ElementCoefficients::two_phase(model, n, r, side.base_phase(), &[0])?;
    Ok(solve_cell_problem(&coef, opts)?.tensor)
}

/// Tensor with defects at the origin and at offset `l` (nonzero).
pub fn two_defect_tensor(
    model: &MaterialModel,
    n: usize,
    r: usize,
    l: Offset,
    side: Side,
    opts: &SolverOptions,
) -> Result<Tensor> {
    let idx = linear_offset(l, n, model.dim());
    if idx == 0 {
        return Err(Error::InvalidInput("coincident defects: offset must be nonzero".into()));
    }
    let coef =
        ElementCoefficients::two_phase(model, n, r, side.base_phase(), &[0, idx])?;
    Ok(solve_cell_problem(&coef, opts)?.tensor)
}

enum Task {
    Base,
    OneDefect,
    Pair(usize),
}

fn build_side(
    model: &MaterialModel,
    n: usize,
    r: usize,
    side: Side,
    opts: &CatalogOptions,
) -> Result<SideCatalog> {
    let d = model.dim();
    let cell_total = n.pow(d as u32);
    let level = opts.level(model);

    // orbit representatives over nonzero offsets
    let mut rep_of = vec![(0usize, IDENTITY); cell_total];
    let mut reps: Vec<usize> = Vec::new();
    for idx in 1..cell_total {
        let (rep, rot) = canonical_offset(idx, n, d, level);
        rep_of[idx] = (rep, rot);
        if rep == idx {
            reps.push(idx);
        }
    }

    let mut tasks = vec![Task::Base, Task::OneDefect];
    tasks.extend(reps.iter().map(|&i| Task::Pair(i)));
    let results = exec::map_indexed(tasks.len(), opts.parallel, |t| -> Result<Tensor> {
        let coef = match tasks[t] {
            Task::Base => ElementCoefficients::two_phase(model, n, r, side.base_phase(), &[])?,
            Task::OneDefect => {
                ElementCoefficients::two_phase(model, n, r, side.base_phase(), &[0])?
            }
            Task::Pair(idx) => {
                ElementCoefficients::two_phase(model, n, r, side.base_phase(), &[0, idx])?
            }
        };
        Ok(solve_cell_problem(&coef, &opts.solver)?.tensor)
    });
    let mut tensors = Vec::with_capacity(results.len());
    for res in results {
        tensors.push(res?);
    }
    let base = tensors[0];
    let one_defect = tensors[1];

    let mut pair = vec![Tensor::zero(d); cell_total];
    for (slot, &idx) in reps.iter().enumerate() {
        pair[idx] = tensors[2 + slot];
    }
    for idx in 1..cell_total {
        let (rep, rot) = rep_of[idx];
        if rep != idx {
            pair[idx] = if d == 1 || rot == IDENTITY {
                pair[rep]
            } else {
                // offset maps onto its representative by rot, so the
                // tensor maps back by the transpose
                let rt = [[rot[0][0], rot[1][0]], [rot[0][1], rot[1][1]]];
                pair[rep].conjugate(rt)
            };
        }
    }

    let mut cat = SideCatalog {
        side,
        base,
        one_defect,
        pair,
        marg: Vec::new(),
        marg_sum: Tensor::zero(d),
        solves: 2 + reps.len(),
        method: format!(
            "exact symmetry={}",
            match level {
                SymmetryLevel::Inversion => "inversion",
                SymmetryLevel::Full => "full",
            }
        ),
    };
    cat.finalize(d);
    Ok(cat)
}

impl DefectCatalog {
    /// Builds both sides with exact pair solves (one per symmetry orbit).
    pub fn build_exact(
        model: &MaterialModel,
        n: usize,
        r: usize,
        opts: &CatalogOptions,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("catalog needs N >= 2".into()));
        }
        let a_side = build_side(model, n, r, Side::A, opts)?;
        let c_side = build_side(model, n, r, Side::C, opts)?;
        Ok(DefectCatalog {
            n,
            r,
            d: model.dim(),
            model_hash: model.fingerprint(),
            a_side,
            c_side,
        })
    }

    pub fn side(&self, side: Side) -> &SideCatalog {
        match side {
            Side::A => &self.a_side,
            Side::C => &self.c_side,
        }
    }

    /// |I_N| = N^d.
    pub fn cell_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Lattice total of the one-defect marginals.
    pub fn first_order_total(&self, side: Side) -> Tensor {
        self.side(side).one_defect_marginal() * self.cell_count() as f64
    }

    /// Lattice total of the pair marginals (half the ordered double sum).
    pub fn second_order_total(&self, side: Side) -> Tensor {
        self.side(side).pair_marginal_sum() * (0.5 * self.cell_count() as f64)
    }

    /// Expectation of the first-order surrogate.
    pub fn e_first(&self, eta: f64) -> Tensor {
        self.first_order_total(Side::A) * eta
    }

    /// Expectation of the second-order surrogate (reference side A).
    pub fn e_second(&self, eta: f64) -> Tensor {
        self.second_order_total(Side::A) * (eta * eta)
    }

    /// Expectation of the mirrored second-order surrogate.
    pub fn e_second_mirror(&self, eta: f64) -> Tensor {
        self.second_order_total(Side::C) * ((1.0 - eta) * (1.0 - eta))
    }

    /// Deterministic expansion of the expected apparent tensor around the
    /// pure phase of `side` (order 1 or 2). For side C the small
    /// parameter is 1 - eta.
    pub fn weak_expansion(&self, side: Side, eta: f64, order: u8) -> Tensor {
        let t = match side {
            Side::A => eta,
            Side::C => 1.0 - eta,
        };
        let mut out = self.side(side).base + self.first_order_total(side) * t;
        if order >= 2 {
            out = out + self.second_order_total(side) * (t * t);
        }
        out
    }

    pub fn total_solves(&self) -> usize {
        self.a_side.solves + self.c_side.solves
    }

    /// Writes one side in the catalog text format (bit-exact floats).
    pub fn save_side(&self, side: Side, path: &Path) -> Result<()> {
        let cat = self.side(side);
        let mut out = String::new();
        let _ = writeln!(out, "cvhom catalog v1");
        let _ = writeln!(
            out,
            "model={:016x} n={} r={} d={} side={} method={} solves={}",
            self.model_hash, self.n, self.r, self.d, cat.side.label(), cat.method, cat.solves
        );
        let fmt_t = |t: &Tensor| -> String {
            if self.d == 1 {
                format!("{:?} 0 0 0", t.entry(0, 0))
            } else {
                format!(
                    "{:?} {:?} {:?} {:?}",
                    t.entry(0, 0),
                    t.entry(0, 1),
                    t.entry(1, 0),
                    t.entry(1, 1)
                )
            }
        };
        let _ = writeln!(out, "base {}", fmt_t(&cat.base));
        let _ = writeln!(out, "onedef {}", fmt_t(&cat.one_defect));
        for idx in 1..cat.pair.len() {
            let o = offset_from_linear(idx, self.n, self.d);
            let _ = writeln!(out, "{} {} {}", o[0], o[1], fmt_t(&cat.pair[idx]));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn save(&self, a_path: &Path, c_path: &Path) -> Result<()> {
        self.save_side(Side::A, a_path)?;
        self.save_side(Side::C, c_path)
    }

    fn load_side(path: &Path) -> Result<(SideCatalog, usize, usize, usize, u64)> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or_default();
        if magic != "cvhom catalog v1" {
            return Err(Error::Parse(format!("unrecognized catalog header '{magic}'")));
        }
        let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
        let mut model_hash = 0u64;
        let (mut n, mut r, mut d) = (0usize, 0usize, 0usize);
        let mut side = Side::A;
        let mut solves = 0usize;
        let mut method = String::new();
        for tok in header.split_whitespace() {
            let (key, val) =
                tok.split_once('=').ok_or_else(|| Error::Parse(format!("bad token '{tok}'")))?;
            match key {
                "model" => {
                    model_hash = u64::from_str_radix(val, 16)
                        .map_err(|e| Error::Parse(e.to_string()))?
                }
                "n" => n = val.parse().map_err(|_| Error::Parse("bad n".into()))?,
                "r" => r = val.parse().map_err(|_| Error::Parse("bad r".into()))?,
                "d" => d = val.parse().map_err(|_| Error::Parse("bad d".into()))?,
                "side" => side = if val == "C" { Side::C } else { Side::A },
                "method" => method = val.replace('_', " "),
                "symmetry" | "snapshots" => {
                    let _ = write!(method, " {key}={val}");
                }
                "solves" => solves = val.parse().map_err(|_| Error::Parse("bad solves".into()))?,
                _ => {}
            }
        }
        if n < 2 || r == 0 || (d != 1 && d != 2) {
            return Err(Error::Parse("incomplete catalog header".into()));
        }
        let parse_t = |rest: &[&str]| -> Result<Tensor> {
            let v: Vec<f64> = rest
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(Error::Parse("tensor line needs 4 entries".into()));
            }
            Ok(if d == 1 {
                Tensor::from_scalar_1d(v[0])
            } else {
                Tensor::from_entries_2d(v[0], v[1], v[2], v[3])
            })
        };
        let mut base = None;
        let mut one_defect = None;
        let cell_total = n.pow(d as u32);
        let mut pair = vec![Tensor::zero(d); cell_total];
        let mut seen = vec![false; cell_total];
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            match toks[0] {
                "base" => base = Some(parse_t(&toks[1..])?),
                "onedef" => one_defect = Some(parse_t(&toks[1..])?),
                _ => {
                    let ox: i64 = toks[0].parse().map_err(|_| Error::Parse("bad offset".into()))?;
                    let oy: i64 = toks
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Parse("bad offset".into()))?;
                    let idx = linear_offset([ox, oy], n, d);
                    if idx == 0 {
                        return Err(Error::Parse("zero offset in pair table".into()));
                    }
                    pair[idx] = parse_t(&toks[2..])?;
                    seen[idx] = true;
                }
            }
        }
        if seen.iter().skip(1).any(|&s| !s) {
            return Err(Error::Parse("pair table incomplete".into()));
        }
        let mut cat = SideCatalog {
            side,
            base: base.ok_or_else(|| Error::Parse("missing base line".into()))?,
            one_defect: one_defect.ok_or_else(|| Error::Parse("missing onedef line".into()))?,
            pair,
            marg: Vec::new(),
            marg_sum: Tensor::zero(d),
            solves,
            method,
        };
        cat.finalize(d);
        Ok((cat, n, r, d, model_hash))
    }

    pub fn load(a_path: &Path, c_path: &Path) -> Result<Self> {
        let (a_side, n, r, d, hash) = Self::load_side(a_path)?;
        let (c_side, n2, r2, d2, hash2) = Self::load_side(c_path)?;
        if (n, r, d, hash) != (n2, r2, d2, hash2) {
            return Err(Error::Parse("catalog sides disagree on grid or model".into()));
        }
        Ok(DefectCatalog { n, r, d, model_hash: hash, a_side, c_side })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard() -> MaterialModel {
        MaterialModel::checkerboard(2, 3.0, 23.0, 0.5).unwrap()
    }

    #[test]
    fn equal_phases_make_all_marginals_zero() {
        let model = MaterialModel::checkerboard(2, 5.0, 5.0, 0.3).unwrap();
        let cat = DefectCatalog::build_exact(&model, 3, 2, &CatalogOptions::default()).unwrap();
        assert!(cat.a_side.one_defect_marginal().max_abs() < 1e-10);
        assert!(cat.a_side.pair_marginal_sum().max_abs() < 1e-8);
        assert!(cat.a_side.one_defect.max_abs_diff(&cat.a_side.base) < 1e-10);
    }

    #[test]
    fn one_defect_tensor_is_location_independent() {
        let model = checkerboard();
        let n = 4;
        let opts = SolverOptions::with_tol(1e-11);
        let at_origin = one_defect_tensor(&model, n, 2, Side::A, &opts).unwrap();
        // defect at another cell, solved directly
        let coef = ElementCoefficients::two_phase(&model, n, 2, Phase::A, &[2 + n * 1]).unwrap();
        let moved = solve_cell_problem(&coef, &opts).unwrap().tensor;
        assert!(at_origin.max_abs_diff(&moved) < 1e-8, "{at_origin} vs {moved}");
    }

    #[test]
    fn pair_tensor_depends_on_offset_only() {
        let model = checkerboard();
        let n = 4;
        let opts = SolverOptions::with_tol(1e-11);
        let by_offset = two_defect_tensor(&model, n, 2, [2, 1], Side::A, &opts).unwrap();
        // defects at k = (1,1) and l = (3,2): offset (2,1)
        let cells = [1 + n * 1, 3 + n * 2];
        let coef = ElementCoefficients::two_phase(&model, n, 2, Phase::A, &cells).unwrap();
        let moved = solve_cell_problem(&coef, &opts).unwrap().tensor;
        assert!(by_offset.max_abs_diff(&moved) < 1e-8);
    }

    #[test]
    fn coincident_defects_are_rejected() {
        let model = checkerboard();
        let err = two_defect_tensor(&model, 4, 2, [0, 0], Side::A, &SolverOptions::default());
        assert!(err.is_err());
        let err = two_defect_tensor(&model, 4, 2, [4, 4], Side::A, &SolverOptions::default());
        assert!(err.is_err(), "offset wrapping to zero is coincident");
    }

    #[test]
    fn symmetry_reduced_table_matches_unreduced() {
        let model = checkerboard();
        let opts_full = CatalogOptions {
            symmetry: Some(SymmetryLevel::Full),
            ..Default::default()
        };
        let opts_inv = CatalogOptions {
            symmetry: Some(SymmetryLevel::Inversion),
            ..Default::default()
        };
        let reduced = DefectCatalog::build_exact(&model, 4, 2, &opts_full).unwrap();
        let plain = DefectCatalog::build_exact(&model, 4, 2, &opts_inv).unwrap();
        for idx in 1..16 {
            let d = reduced.a_side.pair_tensor(idx).max_abs_diff(plain.a_side.pair_tensor(idx));
            assert!(d < 1e-7, "offset {idx}: mismatch {d}");
        }
        assert!(reduced.a_side.solves < plain.a_side.solves);
    }

    #[test]
    fn pair_marginals_are_inversion_symmetric() {
        let model = checkerboard();
        let cat = DefectCatalog::build_exact(&model, 4, 2, &CatalogOptions::default()).unwrap();
        let n = 4;
        for idx in 1..16usize {
            let o = offset_from_linear(idx, n, 2);
            let neg = linear_offset([-o[0], -o[1]], n, 2);
            let diff = cat
                .a_side
                .pair_marginal(idx)
                .max_abs_diff(cat.a_side.pair_marginal(neg));
            assert!(diff < 1e-12, "offset {o:?}");
        }
    }

    #[test]
    fn second_order_total_matches_brute_force_double_sum() {
        let model = checkerboard();
        let cat = DefectCatalog::build_exact(&model, 4, 2, &CatalogOptions::default()).unwrap();
        let n = 4usize;
        let mut brute = Tensor::zero(2);
        for k in 0..16usize {
            for l in 0..16usize {
                if k == l {
                    continue;
                }
                let (kx, ky) = ((k % n) as i64, (k / n) as i64);
                let (lx, ly) = ((l % n) as i64, (l / n) as i64);
                let idx = linear_offset([lx - kx, ly - ky], n, 2);
                brute = brute + *cat.a_side.pair_marginal(idx);
            }
        }
        brute = brute * 0.5;
        let total = cat.second_order_total(Side::A);
        assert!(brute.max_abs_diff(&total) < 1e-9 * total.max_abs().max(1.0));
    }

    #[test]
    fn catalog_solve_counter_is_orbit_count_plus_two() {
        let model = checkerboard();
        let cat = DefectCatalog::build_exact(&model, 4, 2, &CatalogOptions::default()).unwrap();
        // count orbits of the 15 nonzero offsets under the full group
        let mut reps = std::collections::BTreeSet::new();
        for idx in 1..16 {
            reps.insert(canonical_offset(idx, 4, 2, SymmetryLevel::Full).0);
        }
        assert_eq!(cat.a_side.solves, reps.len() + 2);
        assert_eq!(cat.c_side.solves, reps.len() + 2);
    }

    #[test]
    fn weak_expansion_degenerates_to_base() {
        let model = checkerboard();
        let cat = DefectCatalog::build_exact(&model, 3, 2, &CatalogOptions::default()).unwrap();
        let t = cat.weak_expansion(Side::A, 0.0, 2);
        assert!(t.max_abs_diff(&cat.a_side.base) < 1e-14);
        let t1 = cat.weak_expansion(Side::C, 1.0, 2);
        assert!(t1.max_abs_diff(&cat.c_side.base) < 1e-14);
    }

    #[test]
    fn one_defect_marginal_sign_is_positive_for_stiffer_defect() {
        // adding a stiffer cell raises the apparent tensor
        let model = checkerboard();
        let cat = DefectCatalog::build_exact(&model, 3, 2, &CatalogOptions::default()).unwrap();
        assert!(cat.a_side.one_defect_marginal().entry(0, 0) > 0.0);
        // mirrored side: removing a stiff cell lowers it
        assert!(cat.c_side.one_defect_marginal().entry(0, 0) < 0.0);
    }

    #[test]
    fn one_defect_configuration_is_isotropic() {
        let model = checkerboard();
        let cat = DefectCatalog::build_exact(&model, 3, 2, &CatalogOptions::default()).unwrap();
        assert!(cat.a_side.one_defect.is_isotropic(1e-7));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let model = checkerboard();
        let cat = DefectCatalog::build_exact(&model, 3, 2, &CatalogOptions::default()).unwrap();
        let dir = std::env::temp_dir().join("cvhom_catalog_test");
        std::fs::create_dir_all(&dir).unwrap();
        let a = dir.join("cat_a.txt");
        let c = dir.join("cat_c.txt");
        cat.save(&a, &c).unwrap();
        let re = DefectCatalog::load(&a, &c).unwrap();
        assert_eq!(re.n, cat.n);
        assert_eq!(re.model_hash, cat.model_hash);
        for idx in 1..9 {
            assert_eq!(re.a_side.pair_tensor(idx).entry(0, 0), cat.a_side.pair_tensor(idx).entry(0, 0));
            assert_eq!(re.c_side.pair_tensor(idx).entry(1, 1), cat.c_side.pair_tensor(idx).entry(1, 1));
        }
        assert_eq!(re.a_side.solves, cat.a_side.solves);
    }
}

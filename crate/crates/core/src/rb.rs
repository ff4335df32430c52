//! Reduced-basis approximation of the two-defect tensor family.
//!
//! The pair problems are parametrized by the defect offset. A small
//! reduced space solves them all: the one-defect corrector, its lattice
//! translate to the second defect site, and the correctors of a few
//! snapshot offsets solved in full. The two translates alone capture the
//! non-interacting (far-separated) limit exactly; snapshots add the
//! near-field interaction. Stored basis fields are orthonormalized in the
//! energy inner product of the defect-free operator; the translate is
//! appended per offset. Per-offset work is a dense Galerkin solve plus
//! one tensor average, no full PCG solve.

use crate::catalog::{
    linear_offset, offset_from_linear, CatalogOptions, DefectCatalog, Offset, Side, SideCatalog,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::field::MaterialModel;
use crate::solver::{
    element_gradients, apparent_tensor, solve_cell_problem, CorrectorSolution,
    ElementCoefficients, StiffnessOperator,
};
use crate::tensor::Tensor;
use nalgebra::{DMatrix, DVector};

/// Named snapshot sets: shells of offsets around the first defect.
/// 4 = nearest neighbors, 8 = adds diagonals, 12 = adds second neighbors
/// on the axes, 20 = adds the knight moves. The sets are nested.
pub fn named_snapshot_set(card: usize) -> Result<Vec<Offset>> {
    let mut set: Vec<Offset> = vec![[1, 0], [0, 1], [-1, 0], [0, -1]];
    if card >= 8 {
        set.extend([[1, 1], [-1, 1], [1, -1], [-1, -1]]);
    }
    if card >= 12 {
        set.extend([[2, 0], [0, 2], [-2, 0], [0, -2]]);
    }
    if card >= 20 {
        set.extend([[1, 2], [2, 1], [-1, 2], [-2, 1], [1, -2], [2, -1], [-1, -2], [-2, -1]]);
    }
    match card {
        4 | 8 | 12 | 20 => Ok(set),
        _ => Err(Error::InvalidInput(format!("no named snapshot set of size {card}"))),
    }
}

/// Every nonzero offset of the torus (the full snapshot set).
pub fn all_offsets(n: usize, d: usize) -> Vec<Offset> {
    (1..n.pow(d as u32)).map(|idx| offset_from_linear(idx, n, d)).collect()
}

struct DirectionBasis {
    /// Orthonormal fields in the defect-free energy product;
    /// fields[0] is the normalized one-defect corrector.
    fields: Vec<Vec<f64>>,
}

/// Snapshot-built reduced space for one reference side.
pub struct ReducedBasisSet {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub side: Side,
    /// Deduplicated snapshot offsets (linear indices).
    pub snapshots: Vec<usize>,
    /// Snapshot indices discarded as linearly dependent.
    pub dropped: Vec<usize>,
    /// Zero-defect tensor on Q_N.
    pub base_tensor: Tensor,
    pub one_defect_tensor: Tensor,
    /// Exact tensors of the snapshot solves, by linear offset.
    pub snapshot_tensors: Vec<(usize, Tensor)>,
    /// Full cell problems performed (reference, one-defect, snapshots).
    pub solves: usize,
    dirs: Vec<DirectionBasis>,
}

fn translate_field(values: &[f64], n: usize, d: usize, shift: [i64; 2]) -> Vec<f64> {
    let n_i = n as i64;
    let wrap = |v: i64| (((v % n_i) + n_i) % n_i) as usize;
    match d {
        1 => (0..n).map(|i| values[wrap(i as i64 - shift[0])]).collect(),
        _ => {
            let mut out = vec![0.0; n * n];
            for j in 0..n {
                let sj = wrap(j as i64 - shift[1]);
                for i in 0..n {
                    let si = wrap(i as i64 - shift[0]);
                    out[i + n * j] = values[si + n * sj];
                }
            }
            out
        }
    }
}

/// Builds the reduced space: one full solve for the single defect and one
/// per snapshot offset, then energy orthonormalization per direction.
pub fn build_basis(
    model: &MaterialModel,
    n: usize,
    r: usize,
    snapshot_offsets: &[Offset],
    side: Side,
    opts: &CatalogOptions,
) -> Result<ReducedBasisSet> {
    if snapshot_offsets.is_empty() {
        return Err(Error::InvalidInput("snapshot set must not be empty".into()));
    }
    let d = model.dim();
    let mut snapshots: Vec<usize> = Vec::new();
    for &off in snapshot_offsets {
        let idx = linear_offset(off, n, d);
        if idx == 0 {
            return Err(Error::InvalidInput("snapshot offset wraps to zero".into()));
        }
        if !snapshots.contains(&idx) {
            snapshots.push(idx);
        }
    }

    // full solves: reference, one defect, snapshots
    let mut tasks: Vec<Vec<usize>> = vec![vec![], vec![0]];
    tasks.extend(snapshots.iter().map(|&idx| vec![0, idx]));
    let solved = exec::map_indexed(tasks.len(), opts.parallel, |t| -> Result<_> {
        let coef = ElementCoefficients::two_phase(model, n, r, side.base_phase(), &tasks[t])?;
        let sol = solve_cell_problem(&coef, &opts.solver)?;
        Ok(sol)
    });
    let mut sols = Vec::with_capacity(solved.len());
    for s in solved {
        sols.push(s?);
    }
    let base_tensor = sols[0].tensor;
    let one_defect_tensor = sols[1].tensor;
    let snapshot_tensors: Vec<(usize, Tensor)> =
        snapshots.iter().enumerate().map(|(i, &idx)| (idx, sols[2 + i].tensor)).collect();

    // orthonormalize per direction in the defect-free energy product
    let base_coef = ElementCoefficients::two_phase(model, n, r, side.base_phase(), &[])?;
    let kper = StiffnessOperator::new(&base_coef);
    let mut dirs = Vec::with_capacity(d);
    let mut dropped = Vec::new();
    for axis in 0..d {
        let mut fields: Vec<Vec<f64>> = Vec::new();
        for (slot, sol) in sols.iter().enumerate().skip(1) {
            let mut v = sol.correctors[axis].values.clone();
            let orig = kper.energy(&v, &v);
            // two-pass modified Gram-Schmidt
            for _ in 0..2 {
                for u in &fields {
                    let c = kper.energy(u, &v);
                    for (vi, ui) in v.iter_mut().zip(u) {
                        *vi -= c * ui;
                    }
                }
            }
            let nrm2 = kper.energy(&v, &v);
            if nrm2 <= 1e-24 * orig.max(1e-300) {
                // dependent snapshot; the one-defect field (slot 1) is
                // always first and cannot be dropped
                if slot >= 2 && axis == 0 {
                    dropped.push(snapshots[slot - 2]);
                }
                continue;
            }
            let inv = 1.0 / nrm2.sqrt();
            v.iter_mut().for_each(|x| *x *= inv);
            fields.push(v);
        }
        dirs.push(DirectionBasis { fields });
    }

    Ok(ReducedBasisSet {
        n,
        r,
        d,
        side,
        snapshots,
        dropped,
        base_tensor,
        one_defect_tensor,
        snapshot_tensors,
        solves: 2 + sols.len() - 2,
        dirs,
    })
}

impl ReducedBasisSet {
    /// Orthonormality defect of the stored fields under the defect-free
    /// energy product (diagnostic).
    pub fn orthonormality_defect(&self, model: &MaterialModel) -> Result<f64> {
        let base_coef =
            ElementCoefficients::two_phase(model, self.n, self.r, self.side.base_phase(), &[])?;
        let kper = StiffnessOperator::new(&base_coef);
        let mut worst: f64 = 0.0;
        for dir in &self.dirs {
            for (i, u) in dir.fields.iter().enumerate() {
                for (j, v) in dir.fields.iter().enumerate() {
                    let g = kper.energy(u, v);
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((g - target).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Galerkin solution of the pair problem at offset `l` in the reduced
/// space, then the tensor average on the reduced solution. Returns the
/// tensor and the worst relative residual over directions.
pub fn rb_two_defect_tensor(
    basis: &ReducedBasisSet,
    model: &MaterialModel,
    l: Offset,
    opts: &CatalogOptions,
) -> Result<(Tensor, f64)> {
    let idx = linear_offset(l, basis.n, basis.d);
    if idx == 0 {
        return Err(Error::InvalidInput("coincident defects: offset must be nonzero".into()));
    }
    let n = basis.n;
    let d = basis.d;
    let coef =
        ElementCoefficients::two_phase(model, n, basis.r, basis.side.base_phase(), &[0, idx])?;
    let op = StiffnessOperator::new(&coef);
    let shift = {
        let o = offset_from_linear(idx, n, d);
        [o[0] * basis.r as i64, o[1] * basis.r as i64]
    };

    let mut correctors = Vec::with_capacity(d);
    let mut worst_res: f64 = 0.0;
    for axis in 0..d {
        let dir = &basis.dirs[axis];
        let mut fields: Vec<&Vec<f64>> = dir.fields.iter().collect();
        let translated = translate_field(&dir.fields[0], op_nodes(n, basis.r), d, shift);
        fields.push(&translated);

        let values = reduced_solve(&op, &fields, axis).or_else(|_| {
            // near-singular reduced system: retry in the two-translate space
            let two: Vec<&Vec<f64>> = vec![&dir.fields[0], &translated];
            reduced_solve(&op, &two, axis)
        })?;

        let b = op.rhs(axis);
        let mut kw = vec![0.0; values.len()];
        op.apply(&values, &mut kw);
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res = if bnorm == 0.0 {
            0.0
        } else {
            b.iter().zip(&kw).map(|(bi, ki)| (bi - ki) * (bi - ki)).sum::<f64>().sqrt() / bnorm
        };
        worst_res = worst_res.max(res);

        let grads = element_gradients(coef.grid(), &values);
        correctors.push(CorrectorSolution { axis, values, grads, residual: res, iterations: 0 });
    }
    let _ = opts;
    Ok((apparent_tensor(&coef, &correctors)?, worst_res))
}

fn op_nodes(n: usize, r: usize) -> usize {
    n * r
}

/// Dense Galerkin solve in the span of `fields`; returns the nodal
/// reconstruction.
fn reduced_solve(
    op: &StiffnessOperator<'_>,
    fields: &[&Vec<f64>],
    axis: usize,
) -> Result<Vec<f64>> {
    let dim = fields.len();
    let m = fields[0].len();
    let mut applied: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for f in fields {
        let mut kf = vec![0.0; m];
        op.apply(f, &mut kf);
        applied.push(kf);
    }
    let b = op.rhs(axis);
    let mat = DMatrix::from_fn(dim, dim, |i, j| {
        fields[i].iter().zip(&applied[j]).map(|(a, c)| a * c).sum::<f64>()
    });
    let rhs = DVector::from_fn(dim, |i, _| fields[i].iter().zip(&b).map(|(a, c)| a * c).sum());
    let chol = mat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("reduced system not positive definite".into()))?;
    let coeffs = chol.solve(&rhs);
    let mut w = vec![0.0; m];
    for (c, f) in coeffs.iter().zip(fields) {
        for (wi, fi) in w.iter_mut().zip(*f) {
            *wi += c * fi;
        }
    }
    Ok(w)
}

/// Diagnostics of a reduced-basis table build.
#[derive(Debug, Clone, Default)]
pub struct RbDiagnostics {
    pub max_residual_a: f64,
    pub max_residual_c: f64,
    pub dropped_a: Vec<usize>,
    pub dropped_c: Vec<usize>,
}

fn build_reduced_side(
    model: &MaterialModel,
    n: usize,
    r: usize,
    snapshot_offsets: &[Offset],
    side: Side,
    opts: &CatalogOptions,
) -> Result<(SideCatalog, f64, Vec<usize>)> {
    let d = model.dim();
    let basis = build_basis(model, n, r, snapshot_offsets, side, opts)?;
    let cell_total = n.pow(d as u32);

    // same orbit reduction as the exact catalog
    let level = opts.level(model);
    let mut rep_of = vec![(0usize, [[1i8, 0], [0, 1]]); cell_total];
    let mut reps: Vec<usize> = Vec::new();
    for idx in 1..cell_total {
        let (rep, rot) = crate::catalog::canonical_offset(idx, n, d, level);
        rep_of[idx] = (rep, rot);
        if rep == idx {
            reps.push(idx);
        }
    }

    let rep_results = exec::map_indexed(reps.len(), opts.parallel, |t| {
        rb_two_defect_tensor(&basis, model, offset_from_linear(reps[t], n, d), opts)
    });
    let mut pair = vec![Tensor::zero(d); cell_total];
    let mut max_res: f64 = 0.0;
    for (slot, res) in rep_results.into_iter().enumerate() {
        let (tensor, resid) = res?;
        pair[reps[slot]] = tensor;
        max_res = max_res.max(resid);
    }
    for idx in 1..cell_total {
        let (rep, rot) = rep_of[idx];
        if rep != idx {
            pair[idx] = if d == 1 || rot == [[1, 0], [0, 1]] {
                pair[rep]
            } else {
                let rt = [[rot[0][0], rot[1][0]], [rot[0][1], rot[1][1]]];
                pair[rep].conjugate(rt)
            };
        }
    }

    let snap_list: Vec<String> = basis
        .snapshots
        .iter()
        .map(|&i| {
            let o = offset_from_linear(i, n, d);
            format!("{},{}", o[0], o[1])
        })
        .collect();
    let mut cat = SideCatalog::from_parts(
        side,
        basis.base_tensor,
        basis.one_defect_tensor,
        pair,
        basis.solves,
        format!("rb snapshots={}", snap_list.join(";")),
    );
    cat.refresh_marginals(d);
    Ok((cat, max_res, basis.dropped))
}

/// Builds a catalog whose pair tables come from the reduced basis
/// (snapshots solved in full, everything else projected).
pub fn build_reduced_catalog(
    model: &MaterialModel,
    n: usize,
    r: usize,
    snapshot_offsets: &[Offset],
    opts: &CatalogOptions,
) -> Result<(DefectCatalog, RbDiagnostics)> {
    if n < 2 {
        return Err(Error::InvalidInput("catalog needs N >= 2".into()));
    }
    let (a_side, res_a, dropped_a) =
        build_reduced_side(model, n, r, snapshot_offsets, Side::A, opts)?;
    let (c_side, res_c, dropped_c) =
        build_reduced_side(model, n, r, snapshot_offsets, Side::C, opts)?;
    Ok((
        DefectCatalog {
            n,
            r,
            d: model.dim(),
            model_hash: model.fingerprint(),
            a_side,
            c_side,
        },
        RbDiagnostics {
            max_residual_a: res_a,
            max_residual_c: res_c,
            dropped_a,
            dropped_c,
        },
    ))
}

//! Surrogate variables, controlled variables and estimators.
//!
//! The surrogates of a realization are catalog sums: the first-order one
//! is the defect count times the one-defect marginal; the second-order
//! ones accumulate the pair marginals over ordered pairs of defect cells
//! (or of defect-free cells for the mirrored side), at half weight. Their
//! expectations are known in closed form from the catalog, which is what
//! makes them admissible controls.
//!
//! Sample generation is parallel over sample indices with deterministic
//! per-sample seeds; every reduction below is a sequential fold in index
//! order, so batches are bit-reproducible regardless of worker count.

use crate::catalog::{DefectCatalog, Side};
use crate::error::{Error, Result};
use crate::exec;
use crate::field::{DefectField, MaterialModel};
use crate::rho::{self, RhoSolution};
use crate::rng;
use crate::solver::{solve_cell_problem, ElementCoefficients, SolverOptions};
use crate::stats;
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Plain Monte Carlo mean of the apparent tensor.
    Mc,
    /// First-order control (defect count).
    Cv1,
    /// Adds the pair surrogate around the reference phase.
    Cv2,
    /// Two-sided: adds the mirrored pair surrogate.
    Cv3,
    /// Negative control: pair marginals replaced by the identity.
    Cv3Degraded,
    /// Deterministic weakly-stochastic expansion (no sampling).
    Weak,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Mc => "mc",
            EstimatorKind::Cv1 => "cv1",
            EstimatorKind::Cv2 => "cv2",
            EstimatorKind::Cv3 => "cv3",
            EstimatorKind::Cv3Degraded => "cv3-degraded",
            EstimatorKind::Weak => "weak",
        }
    }

    pub fn control_count(self) -> usize {
        match self {
            EstimatorKind::Mc | EstimatorKind::Weak => 0,
            EstimatorKind::Cv1 => 1,
            EstimatorKind::Cv2 => 2,
            EstimatorKind::Cv3 | EstimatorKind::Cv3Degraded => 3,
        }
    }
}

/// How the control coefficients are chosen.
#[derive(Debug, Clone)]
pub enum RhoPolicy {
    /// In-sample empirical optimum on the full batch.
    Optimal,
    /// Coefficients from the first half, estimate from the second half
    /// (avoids the O(1/M) in-sample bias).
    SplitHalf,
    /// Fixed coefficients.
    Fixed(Vec<f64>),
}

/// One realization: field, apparent tensor, surrogate values, solve cost.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub seed: u64,
    pub defect_count: usize,
    pub field: DefectField,
    pub apparent: Tensor,
    pub y1: Option<Tensor>,
    pub y2: Option<Tensor>,
    pub c2: Option<Tensor>,
    /// PCG iterations spent on this realization.
    pub iterations: usize,
}

/// A batch of i.i.d. realizations with a common grid.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub eta: f64,
    pub seed: u64,
    pub records: Vec<SampleRecord>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_surrogates(&self) -> bool {
        self.records.iter().all(|r| r.y1.is_some() && r.y2.is_some() && r.c2.is_some())
    }
}

/// Draws and solves `m` realizations. Sample `i` uses the field seed
/// `substream(seed, i)`.
pub fn draw_batch(
    model: &MaterialModel,
    n: usize,
    r: usize,
    m: usize,
    seed: u64,
    solver: &SolverOptions,
    parallel: bool,
) -> Result<SampleBatch> {
    let results = exec::map_indexed(m, parallel, |i| -> Result<SampleRecord> {
        let sample_seed = rng::substream(seed, i as u64);
        let field = DefectField::sample(model, n, sample_seed)?;
        let coef = ElementCoefficients::from_realization(model, &field, r)?;
        let sol = solve_cell_problem(&coef, solver)?;
        Ok(SampleRecord {
            seed: sample_seed,
            defect_count: field.count_defects(),
            apparent: sol.tensor,
            field,
            y1: None,
            y2: None,
            c2: None,
            iterations: sol.iterations,
        })
    });
    let mut records = Vec::with_capacity(m);
    for r_ in results {
        records.push(r_?);
    }
    Ok(SampleBatch { n, r, d: model.dim(), eta: model.eta(), seed, records })
}

/// First-order surrogate: defect count times the one-defect marginal.
pub fn surrogate_first(field: &DefectField, catalog: &DefectCatalog) -> Result<Tensor> {
    if field.n() != catalog.n || field.dim() != catalog.d {
        return Err(Error::InvalidInput("field and catalog grids differ".into()));
    }
    Ok(catalog.side(Side::A).one_defect_marginal() * field.count_defects() as f64)
}

/// Second-order surrogate: half the ordered double sum of pair marginals
/// over the active cells (defect cells for side A, defect-free cells for
/// side C). Runs in O(P^2) over the P active cells.
pub fn surrogate_second(
    field: &DefectField,
    catalog: &DefectCatalog,
    side: Side,
) -> Result<Tensor> {
    if field.n() != catalog.n || field.dim() != catalog.d {
        return Err(Error::InvalidInput("field and catalog grids differ".into()));
    }
    let active = field.cells_with_bit(match side {
        Side::A => 1,
        Side::C => 0,
    });
    let n = catalog.n;
    let d = catalog.d;
    let cat = catalog.side(side);
    let mut acc = Tensor::zero(d);
    // unordered pairs, both orientations at half weight
    for (a_pos, &k) in active.iter().enumerate() {
        let (kx, ky) = ((k % n) as i64, (k / n) as i64);
        for &l in active.iter().skip(a_pos + 1) {
            let (lx, ly) = ((l % n) as i64, (l / n) as i64);
            let fw = crate::catalog::linear_offset([lx - kx, ly - ky], n, d);
            let bw = crate::catalog::linear_offset([kx - lx, ky - ly], n, d);
            acc = acc + (*cat.pair_marginal(fw) + *cat.pair_marginal(bw)) * 0.5;
        }
    }
    Ok(acc)
}

/// Degraded pair surrogates with all marginals set to the identity:
/// P (P - 1) / 2 times Id over defect cells, and the mirror over
/// defect-free cells.
pub fn degraded_second_order(field: &DefectField, _eta: f64) -> (Tensor, Tensor) {
    let d = field.dim();
    let p = field.count_defects();
    let q = field.cell_count() - p;
    (
        Tensor::scaled_identity(d, 0.5 * (p * p.saturating_sub(1)) as f64),
        Tensor::scaled_identity(d, 0.5 * (q * q.saturating_sub(1)) as f64),
    )
}

/// Exact expectations of the degraded pair surrogates.
pub fn degraded_expectations(d: usize, cells: usize, eta: f64) -> (Tensor, Tensor) {
    let pairs = 0.5 * (cells * (cells - 1)) as f64;
    (
        Tensor::scaled_identity(d, pairs * eta * eta),
        Tensor::scaled_identity(d, pairs * (1.0 - eta) * (1.0 - eta)),
    )
}

/// Fills the surrogate tensors of every record from the catalog.
pub fn attach_surrogates(
    batch: &mut SampleBatch,
    catalog: &DefectCatalog,
    parallel: bool,
) -> Result<()> {
    if batch.n != catalog.n || batch.d != catalog.d {
        return Err(Error::InvalidInput("batch and catalog grids differ".into()));
    }
    let computed = {
        let records = &batch.records;
        exec::map_indexed(records.len(), parallel, |i| -> Result<(Tensor, Tensor, Tensor)> {
            let f = &records[i].field;
            Ok((
                surrogate_first(f, catalog)?,
                surrogate_second(f, catalog, Side::A)?,
                surrogate_second(f, catalog, Side::C)?,
            ))
        })
    };
    for (rec, res) in batch.records.iter_mut().zip(computed) {
        let (y1, y2, c2) = res?;
        rec.y1 = Some(y1);
        rec.y2 = Some(y2);
        rec.c2 = Some(c2);
    }
    Ok(())
}

/// Controlled tensor of one sample for scalar coefficients shared across
/// entries. An empty `rho` (or all zeros) returns the apparent tensor.
pub fn controlled_value(
    sample: &SampleRecord,
    kind: EstimatorKind,
    rho: &[f64],
    catalog: &DefectCatalog,
    eta: f64,
) -> Result<Tensor> {
    if rho.len() != kind.control_count() {
        return Err(Error::InvalidInput(format!(
            "{} expects {} coefficients, got {}",
            kind.label(),
            kind.control_count(),
            rho.len()
        )));
    }
    let mut out = sample.apparent;
    if kind == EstimatorKind::Mc || kind == EstimatorKind::Weak {
        return Ok(out);
    }
    let need = |t: &Option<Tensor>| -> Result<Tensor> {
        t.ok_or_else(|| Error::InvalidInput("surrogates not attached".into()))
    };
    out = out - (need(&sample.y1)? - catalog.e_first(eta)) * rho[0];
    match kind {
        EstimatorKind::Cv2 => {
            out = out - (need(&sample.y2)? - catalog.e_second(eta)) * rho[1];
        }
        EstimatorKind::Cv3 => {
            out = out - (need(&sample.y2)? - catalog.e_second(eta)) * rho[1];
            out = out - (need(&sample.c2)? - catalog.e_second_mirror(eta)) * rho[2];
        }
        EstimatorKind::Cv3Degraded => {
            let (y2d, c2d) = degraded_second_order(&sample.field, eta);
            let (ey2d, ec2d) = degraded_expectations(catalog.d, catalog.cell_count(), eta);
            out = out - (y2d - ey2d) * rho[1];
            out = out - (c2d - ec2d) * rho[2];
        }
        _ => {}
    }
    Ok(out)
}

/// Series of control values and their exact expectations for one entry.
fn control_series(
    batch: &SampleBatch,
    catalog: &DefectCatalog,
    kind: EstimatorKind,
    entry: (usize, usize),
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (i, j) = entry;
    let pick = |t: &Option<Tensor>| -> Result<f64> {
        t.map(|t| t.entry(i, j))
            .ok_or_else(|| Error::InvalidInput("surrogates not attached".into()))
    };
    let m = batch.len();
    let mut series: Vec<Vec<f64>> = Vec::new();
    let mut expect: Vec<f64> = Vec::new();
    if kind.control_count() >= 1 {
        let mut y = Vec::with_capacity(m);
        for rec in &batch.records {
            y.push(pick(&rec.y1)?);
        }
        series.push(y);
        expect.push(catalog.e_first(batch.eta).entry(i, j));
    }
    match kind {
        EstimatorKind::Cv2 | EstimatorKind::Cv3 => {
            let mut y = Vec::with_capacity(m);
            for rec in &batch.records {
                y.push(pick(&rec.y2)?);
            }
            series.push(y);
            expect.push(catalog.e_second(batch.eta).entry(i, j));
            if kind == EstimatorKind::Cv3 {
                let mut c = Vec::with_capacity(m);
                for rec in &batch.records {
                    c.push(pick(&rec.c2)?);
                }
                series.push(c);
                expect.push(catalog.e_second_mirror(batch.eta).entry(i, j));
            }
        }
        EstimatorKind::Cv3Degraded => {
            let (ey2d, ec2d) = degraded_expectations(catalog.d, catalog.cell_count(), batch.eta);
            let mut y = Vec::with_capacity(m);
            let mut c = Vec::with_capacity(m);
            for rec in &batch.records {
                let (y2d, c2d) = degraded_second_order(&rec.field, batch.eta);
                y.push(y2d.entry(i, j));
                c.push(c2d.entry(i, j));
            }
            series.push(y);
            expect.push(ey2d.entry(i, j));
            series.push(c);
            expect.push(ec2d.entry(i, j));
        }
        _ => {}
    }
    Ok((series, expect))
}

/// Empirical optimal coefficient of the first-order control for an entry.
pub fn optimal_rho_single(
    batch: &SampleBatch,
    catalog: &DefectCatalog,
    entry: (usize, usize),
) -> Result<f64> {
    let xs: Vec<f64> = batch.records.iter().map(|r| r.apparent.entry(entry.0, entry.1)).collect();
    let (series, expect) = control_series(batch, catalog, EstimatorKind::Cv1, entry)?;
    let refs: Vec<&[f64]> = series.iter().map(|v| v.as_slice()).collect();
    Ok(rho::empirical_rho(&xs, &refs, &expect, rho::CONDITION_LIMIT)?.rho[0])
}

/// Empirical optimal coefficients of the two-sided second-order control.
pub fn optimal_rho_triple(
    batch: &SampleBatch,
    catalog: &DefectCatalog,
    entry: (usize, usize),
) -> Result<RhoSolution> {
    let xs: Vec<f64> = batch.records.iter().map(|r| r.apparent.entry(entry.0, entry.1)).collect();
    let (series, expect) = control_series(batch, catalog, EstimatorKind::Cv3, entry)?;
    let refs: Vec<&[f64]> = series.iter().map(|v| v.as_slice()).collect();
    rho::empirical_rho(&xs, &refs, &expect, rho::CONDITION_LIMIT)
}

/// Estimator summary for one matrix entry.
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub kind: EstimatorKind,
    pub entry: (usize, usize),
    pub m: usize,
    pub mean: f64,
    pub variance: f64,
    /// 1.96 sqrt(variance / m).
    pub half_width: f64,
    pub rho: Vec<f64>,
    /// Controls shed for collinearity or zero variance.
    pub dropped: Vec<usize>,
    /// True when every control was degenerate and the estimate fell back
    /// to the plain mean.
    pub degenerate: bool,
    /// Cell problems solved online (the batch).
    pub cost_online: usize,
    /// Offline cell problems attributable to the surrogate (one-defect
    /// and pair solves; reference solves excluded by convention).
    pub cost_offline: usize,
}

fn offline_cost(kind: EstimatorKind, catalog: &DefectCatalog) -> usize {
    match kind {
        EstimatorKind::Mc => 0,
        // the one-defect problem
        EstimatorKind::Cv1 | EstimatorKind::Cv3Degraded => 1,
        // one-defect plus pair solves of the reference side
        EstimatorKind::Cv2 => catalog.a_side.solves - 1,
        // both sides
        EstimatorKind::Cv3 => catalog.a_side.solves + catalog.c_side.solves - 2,
        EstimatorKind::Weak => catalog.a_side.solves - 1,
    }
}

/// Builds the estimator report of `kind` for one matrix entry.
pub fn estimate(
    batch: &SampleBatch,
    catalog: Option<&DefectCatalog>,
    kind: EstimatorKind,
    entry: (usize, usize),
    policy: &RhoPolicy,
) -> Result<EstimatorReport> {
    if batch.len() < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    if kind == EstimatorKind::Weak {
        return Err(Error::InvalidInput("the weak expansion is not a sampling estimator".into()));
    }
    let xs: Vec<f64> = batch.records.iter().map(|r| r.apparent.entry(entry.0, entry.1)).collect();
    let m = xs.len();

    if kind == EstimatorKind::Mc {
        let mean = stats::mean(&xs);
        let variance = stats::variance_unbiased(&xs);
        return Ok(EstimatorReport {
            kind,
            entry,
            m,
            mean,
            variance,
            half_width: 1.96 * (variance / m as f64).sqrt(),
            rho: Vec::new(),
            dropped: Vec::new(),
            degenerate: false,
            cost_online: m,
            cost_offline: 0,
        });
    }

    let catalog = catalog
        .ok_or_else(|| Error::InvalidInput("control variates require a catalog".into()))?;
    let (series, expect) = control_series(batch, catalog, kind, entry)?;
    let refs: Vec<&[f64]> = series.iter().map(|v| v.as_slice()).collect();
    let k = refs.len();

    let mut degenerate = false;
    let mut dropped = Vec::new();
    let mut start = 0usize; // first sample entering the estimate
    let rho: Vec<f64> = match policy {
        RhoPolicy::Fixed(r) => {
            if r.len() != k {
                return Err(Error::InvalidInput(format!(
                    "{} expects {k} coefficients, got {}",
                    kind.label(),
                    r.len()
                )));
            }
            r.clone()
        }
        RhoPolicy::Optimal => match rho::empirical_rho(&xs, &refs, &expect, rho::CONDITION_LIMIT) {
            Ok(sol) => {
                dropped = sol.dropped;
                sol.rho
            }
            Err(Error::DegenerateControl) => {
                degenerate = true;
                vec![0.0; k]
            }
            Err(e) => return Err(e),
        },
        RhoPolicy::SplitHalf => {
            let h = m / 2;
            if h < 2 {
                return Err(Error::InvalidInput("split-batch mode needs M >= 4".into()));
            }
            start = h;
            let head_refs: Vec<&[f64]> = series.iter().map(|v| &v[..h]).collect();
            match rho::empirical_rho(&xs[..h], &head_refs, &expect, rho::CONDITION_LIMIT) {
                Ok(sol) => {
                    dropped = sol.dropped;
                    sol.rho
                }
                Err(Error::DegenerateControl) => {
                    degenerate = true;
                    vec![0.0; k]
                }
                Err(e) => return Err(e),
            }
        }
    };

    let mut values = Vec::with_capacity(m - start);
    for s in start..m {
        let mut v = xs[s];
        for c in 0..k {
            v -= rho[c] * (series[c][s] - expect[c]);
        }
        values.push(v);
    }
    let m_eff = values.len();
    let mean = stats::mean(&values);
    let variance = stats::variance_unbiased(&values);
    Ok(EstimatorReport {
        kind,
        entry,
        m: m_eff,
        mean,
        variance,
        half_width: 1.96 * (variance / m_eff as f64).sqrt(),
        rho,
        dropped,
        degenerate,
        cost_online: m,
        cost_offline: offline_cost(kind, catalog),
    })
}

/// Report of the deterministic weakly-stochastic expansion.
pub fn weak_report(
    catalog: &DefectCatalog,
    side: Side,
    order: u8,
    eta: f64,
    entry: (usize, usize),
) -> EstimatorReport {
    let t = catalog.weak_expansion(side, eta, order);
    EstimatorReport {
        kind: EstimatorKind::Weak,
        entry,
        m: 0,
        mean: t.entry(entry.0, entry.1),
        variance: 0.0,
        half_width: 0.0,
        rho: Vec::new(),
        dropped: Vec::new(),
        degenerate: false,
        cost_online: 0,
        cost_offline: offline_cost(EstimatorKind::Weak, catalog),
    }
}

/// Var(MC) / Var(CV) from two reports of the same entry; infinite when
/// the controlled variance vanished.
pub fn variance_ratio(mc: &EstimatorReport, cv: &EstimatorReport) -> Result<f64> {
    if mc.entry != cv.entry {
        return Err(Error::InvalidInput("reports describe different entries".into()));
    }
    Ok(if cv.variance == 0.0 { f64::INFINITY } else { mc.variance / cv.variance })
}

/// One CSV row per sample: seed, defect count, apparent entries, then the
/// three surrogate tensors (zeros when not attached).
pub fn write_batch_csv(path: &Path, batch: &SampleBatch) -> Result<()> {
    let mut out = String::from(
        "seed,defect_count,a11,a12,a22,y1_11,y1_12,y1_22,y2_11,y2_12,y2_22,c2_11,c2_12,c2_22\n",
    );
    let d = batch.d;
    let tri = |t: &Tensor| -> (f64, f64, f64) {
        if d == 1 {
            (t.entry(0, 0), 0.0, 0.0)
        } else {
            (t.entry(0, 0), t.entry(0, 1), t.entry(1, 1))
        }
    };
    for rec in &batch.records {
        let zero = Tensor::zero(d);
        let (a11, a12, a22) = tri(&rec.apparent);
        let (y111, y112, y122) = tri(rec.y1.as_ref().unwrap_or(&zero));
        let (y211, y212, y222) = tri(rec.y2.as_ref().unwrap_or(&zero));
        let (c211, c212, c222) = tri(rec.c2.as_ref().unwrap_or(&zero));
        let _ = writeln!(
            out,
            "{:#018x},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            rec.seed, rec.defect_count, a11, a12, a22, y111, y112, y122, y211, y212, y222,
            c211, c212, c222
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Flat key = value report block for one estimator.
pub fn report_block(report: &EstimatorReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "kind = {}", report.kind.label());
    let _ = writeln!(s, "entry = {}{}", report.entry.0 + 1, report.entry.1 + 1);
    let _ = writeln!(s, "m = {}", report.m);
    let _ = writeln!(s, "mean = {:?}", report.mean);
    let _ = writeln!(s, "variance = {:?}", report.variance);
    let _ = writeln!(s, "half_width = {:?}", report.half_width);
    for (i, r) in report.rho.iter().enumerate() {
        let _ = writeln!(s, "rho{} = {:?}", i + 1, r);
    }
    if !report.dropped.is_empty() {
        let labels: Vec<String> = report.dropped.iter().map(|i| format!("{}", i + 1)).collect();
        let _ = writeln!(s, "dropped_controls = {}", labels.join(","));
    }
    let _ = writeln!(s, "degenerate = {}", report.degenerate);
    let _ = writeln!(s, "cost_online = {}", report.cost_online);
    let _ = writeln!(s, "cost_offline = {}", report.cost_offline);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogOptions;

    fn small_setup_1d() -> (MaterialModel, DefectCatalog) {
        let model = MaterialModel::checkerboard(1, 3.0, 23.0, 0.5).unwrap();
        let cat = DefectCatalog::build_exact(&model, 6, 1, &CatalogOptions::default()).unwrap();
        (model, cat)
    }

    #[test]
    fn surrogates_on_degenerate_fields() {
        let (model, cat) = small_setup_1d();
        let zeros = DefectField::zeros(1, 6);
        assert_eq!(surrogate_first(&zeros, &cat).unwrap().entry(0, 0), 0.0);
        assert_eq!(surrogate_second(&zeros, &cat, Side::A).unwrap().entry(0, 0), 0.0);
        // a single defect has no pair
        let one = DefectField::with_defects(1, 6, &[[2, 0]]);
        assert_eq!(surrogate_second(&one, &cat, Side::A).unwrap().entry(0, 0), 0.0);
        let _ = model;
    }

    #[test]
    fn all_defect_field_scales_the_marginal() {
        let model = MaterialModel::checkerboard(2, 3.0, 23.0, 1.0).unwrap();
        let cat = DefectCatalog::build_exact(&model, 3, 2, &CatalogOptions::default()).unwrap();
        let field = DefectField::sample(&model, 3, 5).unwrap();
        assert_eq!(field.count_defects(), 9);
        let y1 = surrogate_first(&field, &cat).unwrap();
        let expect = cat.a_side.one_defect_marginal() * 9.0;
        assert!(y1.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn brute_force_double_sum_matches_surrogate() {
        let (model, cat) = small_setup_1d();
        let field = DefectField::from_bits(1, 6, vec![1, 0, 1, 1, 0, 1]).unwrap();
        let fast = surrogate_second(&field, &cat, Side::A).unwrap();
        // ordered double loop over all cells at half weight
        let mut brute = Tensor::zero(1);
        for k in 0..6usize {
            for l in 0..6usize {
                if k != l && field.bit_linear(k) == 1 && field.bit_linear(l) == 1 {
                    let idx = crate::catalog::linear_offset([l as i64 - k as i64, 0], 6, 1);
                    brute = brute + *cat.a_side.pair_marginal(idx) * 0.5;
                }
            }
        }
        assert!((fast.entry(0, 0) - brute.entry(0, 0)).abs() < 1e-15);
        let _ = model;
    }

    #[test]
    fn controlled_value_with_zero_rho_is_identity() {
        let (model, cat) = small_setup_1d();
        let mut batch = draw_batch(&model, 6, 1, 4, 42, &SolverOptions::default(), false).unwrap();
        attach_surrogates(&mut batch, &cat, false).unwrap();
        for rec in &batch.records {
            let v = controlled_value(rec, EstimatorKind::Cv3, &[0.0; 3], &cat, 0.5).unwrap();
            assert_eq!(v.entry(0, 0), rec.apparent.entry(0, 0));
        }
    }

    #[test]
    fn exhaustive_enumeration_controlled_mean_is_unbiased() {
        // all 64 fields of the 1D torus with N = 6 at eta = 1/2
        let (model, cat) = small_setup_1d();
        let opts = SolverOptions::with_tol(1e-12);
        let mut e_x = Tensor::zero(1);
        let mut e_d = Tensor::zero(1);
        let rho = [0.8, -0.4, 0.15];
        let w = 1.0 / 64.0;
        for mask in 0u32..64 {
            let bits: Vec<u8> = (0..6).map(|b| ((mask >> b) & 1) as u8).collect();
            let field = DefectField::from_bits(1, 6, bits).unwrap();
            let coef = ElementCoefficients::from_realization(&model, &field, 1).unwrap();
            let sol = solve_cell_problem(&coef, &opts).unwrap();
            let rec = SampleRecord {
                seed: 0,
                defect_count: field.count_defects(),
                apparent: sol.tensor,
                y1: Some(surrogate_first(&field, &cat).unwrap()),
                y2: Some(surrogate_second(&field, &cat, Side::A).unwrap()),
                c2: Some(surrogate_second(&field, &cat, Side::C).unwrap()),
                field,
                iterations: sol.iterations,
            };
            e_x = e_x + rec.apparent * w;
            e_d = e_d + controlled_value(&rec, EstimatorKind::Cv3, &rho, &cat, 0.5).unwrap() * w;
        }
        assert!(
            (e_x.entry(0, 0) - e_d.entry(0, 0)).abs() < 1e-11 * e_x.entry(0, 0).abs(),
            "bias {:?}",
            e_x.entry(0, 0) - e_d.entry(0, 0)
        );
    }

    #[test]
    fn stored_surrogates_recompute_exactly() {
        let model = MaterialModel::checkerboard(2, 3.0, 23.0, 0.5).unwrap();
        let cat = DefectCatalog::build_exact(&model, 4, 2, &CatalogOptions::default()).unwrap();
        let mut batch = draw_batch(&model, 4, 2, 3, 7, &SolverOptions::default(), true).unwrap();
        attach_surrogates(&mut batch, &cat, true).unwrap();
        for rec in &batch.records {
            let y1 = surrogate_first(&rec.field, &cat).unwrap();
            let y2 = surrogate_second(&rec.field, &cat, Side::A).unwrap();
            let c2 = surrogate_second(&rec.field, &cat, Side::C).unwrap();
            assert_eq!(rec.y1.unwrap().entry(0, 0), y1.entry(0, 0));
            assert_eq!(rec.y2.unwrap().entry(0, 0), y2.entry(0, 0));
            assert_eq!(rec.c2.unwrap().entry(1, 1), c2.entry(1, 1));
        }
    }

    #[test]
    fn degenerate_eta_yields_zero_variance_and_mc_fallback() {
        let model = MaterialModel::checkerboard(1, 3.0, 23.0, 0.0).unwrap();
        let cat = DefectCatalog::build_exact(&model, 4, 1, &CatalogOptions::default()).unwrap();
        let mut batch = draw_batch(&model, 4, 1, 5, 3, &SolverOptions::default(), false).unwrap();
        attach_surrogates(&mut batch, &cat, false).unwrap();
        let rep = estimate(&batch, Some(&cat), EstimatorKind::Cv1, (0, 0), &RhoPolicy::Optimal)
            .unwrap();
        assert!(rep.degenerate);
        assert_eq!(rep.variance, 0.0);
        assert_eq!(rep.half_width, 0.0);
        assert!((rep.mean - 3.0).abs() < 1e-10);
    }

    #[test]
    fn mc_report_costs_and_ratio_sentinel() {
        let (model, cat) = small_setup_1d();
        let mut batch = draw_batch(&model, 6, 1, 8, 17, &SolverOptions::default(), false).unwrap();
        attach_surrogates(&mut batch, &cat, false).unwrap();
        let mc = estimate(&batch, None, EstimatorKind::Mc, (0, 0), &RhoPolicy::Optimal).unwrap();
        assert_eq!(mc.cost_online, 8);
        assert_eq!(mc.cost_offline, 0);
        let cv1 =
            estimate(&batch, Some(&cat), EstimatorKind::Cv1, (0, 0), &RhoPolicy::Optimal).unwrap();
        assert_eq!(cv1.cost_online + cv1.cost_offline, 1 + 8);
        assert_eq!(variance_ratio(&mc, &mc).unwrap(), 1.0);
        let constant = EstimatorReport { variance: 0.0, ..cv1.clone() };
        assert_eq!(variance_ratio(&mc, &constant).unwrap(), f64::INFINITY);
    }

    #[test]
    fn split_half_uses_second_half_only() {
        let (model, cat) = small_setup_1d();
        let mut batch = draw_batch(&model, 6, 1, 10, 23, &SolverOptions::default(), false).unwrap();
        attach_surrogates(&mut batch, &cat, false).unwrap();
        let rep = estimate(&batch, Some(&cat), EstimatorKind::Cv1, (0, 0), &RhoPolicy::SplitHalf)
            .unwrap();
        assert_eq!(rep.m, 5);
        assert_eq!(rep.cost_online, 10);
    }
}

//! Closed-form one-dimensional apparent coefficient and the exact
//! enumeration oracle behind the variance-scaling studies.
//!
//! In 1D the apparent coefficient of a realization is a scalar function
//! of the defect count alone: with `phi(b)` the cell-average of the
//! reciprocal coefficient of the phase mix, the apparent value is
//! `g(P/N)` where `g(b) = 1 / (phi(0) + b (phi(1) - phi(0)))` and P is
//! the number of defect cells. Every statistic in scope (the apparent
//! value, both surrogates and all controlled variables) is therefore
//! count-determined, and exact moments reduce to binomial sums over the
//! N + 1 possible counts instead of 2^N field enumerations.

use crate::error::{Error, Result};
use crate::field::{DefectField, MaterialModel, Phase};
use crate::rho::{self, RhoSolution};
use crate::rng;
use crate::stats;
use crate::exec;

/// Harmonic cell integrals of the two phases and the induced map g.
#[derive(Debug, Clone, Copy)]
pub struct OneDModel {
    phi0: f64,
    phi1: f64,
}

impl OneDModel {
    pub fn from_phases(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidModel("phases must be positive".into()));
        }
        Ok(OneDModel { phi0: 1.0 / alpha, phi1: 1.0 / beta })
    }

    /// Reduces a 1D material model: phi(b) is the average over the unit
    /// cell of the reciprocal coefficient of each pure phase (exact for
    /// the piecewise-constant subcell partition).
    pub fn from_model(model: &MaterialModel) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::InvalidInput("one-dimensional model required".into()));
        }
        let s = model.subcells_per_side();
        let mut phi0 = 0.0;
        let mut phi1 = 0.0;
        for j in 0..s {
            let frac = [(j as f64 + 0.5) / s as f64, 0.0];
            phi0 += 1.0 / model.phase_coefficient(Phase::A, frac).entry(0, 0);
            phi1 += 1.0 / model.phase_coefficient(Phase::C, frac).entry(0, 0);
        }
        Ok(OneDModel { phi0: phi0 / s as f64, phi1: phi1 / s as f64 })
    }

    /// g(b) = 1 / (phi(0) + b (phi(1) - phi(0))); g(0) and g(1) are the
    /// homogenized coefficients of the two pure phases.
    pub fn g(&self, b: f64) -> f64 {
        1.0 / (self.phi0 + b * (self.phi1 - self.phi0))
    }

    /// Apparent coefficient of a realization, g(defect fraction).
    pub fn apparent(&self, field: &DefectField) -> Result<f64> {
        if field.dim() != 1 {
            return Err(Error::InvalidInput("one-dimensional field required".into()));
        }
        Ok(self.g(field.count_defects() as f64 / field.n() as f64))
    }
}

/// The count-determined statistics of size-N realizations: the apparent
/// value, the two pair surrogates and their exact expectations, with the
/// marginal scalars taken from g.
#[derive(Debug, Clone, Copy)]
pub struct Controls1d {
    pub model: OneDModel,
    pub n: usize,
    pub eta: f64,
    /// One-defect marginal g(1/N) - g(0).
    pub abar1: f64,
    /// Pair marginal g(2/N) - 2 g(1/N) + g(0).
    pub abar2: f64,
    /// Mirrored pair marginal around the full-defect phase.
    pub cbar2: f64,
}

impl Controls1d {
    pub fn new(model: OneDModel, n: usize, eta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("need N >= 2 for pair statistics".into()));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidInput(format!("eta={eta} outside [0, 1]")));
        }
        let nf = n as f64;
        Ok(Controls1d {
            model,
            n,
            eta,
            abar1: model.g(1.0 / nf) - model.g(0.0),
            abar2: model.g(2.0 / nf) - 2.0 * model.g(1.0 / nf) + model.g(0.0),
            cbar2: model.g((nf - 2.0) / nf) - 2.0 * model.g((nf - 1.0) / nf) + model.g(1.0),
        })
    }

    #[inline]
    pub fn x(&self, p: usize) -> f64 {
        self.model.g(p as f64 / self.n as f64)
    }

    /// First-order surrogate, count times the one-defect marginal.
    #[inline]
    pub fn y1(&self, p: usize) -> f64 {
        self.abar1 * p as f64
    }

    /// Second-order surrogate: every ordered defect pair carries the same
    /// marginal in 1D, so it collapses to P (P - 1) / 2 times it.
    #[inline]
    pub fn y2(&self, p: usize) -> f64 {
        0.5 * self.abar2 * (p * (p.saturating_sub(1))) as f64
    }

    /// Mirrored second-order surrogate over the non-defect cells.
    #[inline]
    pub fn c2(&self, p: usize) -> f64 {
        let q = self.n - p;
        0.5 * self.cbar2 * (q * (q.saturating_sub(1))) as f64
    }

    pub fn e_y1(&self) -> f64 {
        self.eta * self.n as f64 * self.abar1
    }

    pub fn e_y2(&self) -> f64 {
        0.5 * self.abar2 * self.eta * self.eta * (self.n * (self.n - 1)) as f64
    }

    pub fn e_c2(&self) -> f64 {
        let q = 1.0 - self.eta;
        0.5 * self.cbar2 * q * q * (self.n * (self.n - 1)) as f64
    }

    /// First-order controlled value.
    pub fn d1(&self, p: usize, rho: f64) -> f64 {
        self.x(p) - rho * (self.y1(p) - self.e_y1())
    }

    /// Second-order controlled value around the reference phase only.
    pub fn d2(&self, p: usize, rho: [f64; 2]) -> f64 {
        self.d1(p, rho[0]) - rho[1] * (self.y2(p) - self.e_y2())
    }

    /// Two-sided second-order controlled value.
    pub fn d3(&self, p: usize, rho: [f64; 3]) -> f64 {
        self.d2(p, [rho[0], rho[1]]) - rho[2] * (self.c2(p) - self.e_c2())
    }
}

/// Exact binomial enumeration over the N + 1 defect counts.
#[derive(Debug, Clone)]
pub struct Enumeration1d {
    pub n: usize,
    pub eta: f64,
    weights: Vec<f64>,
}

impl Enumeration1d {
    pub fn new(n: usize, eta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("N must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidInput(format!("eta={eta} outside [0, 1]")));
        }
        let mut weights = vec![0.0; n + 1];
        if eta == 0.0 {
            weights[0] = 1.0;
        } else if eta == 1.0 {
            weights[n] = 1.0;
        } else {
            // recur outward from the mode to dodge underflow, normalize after
            let mode = (((n + 1) as f64) * eta).floor().min(n as f64) as usize;
            weights[mode] = 1.0;
            let ratio = eta / (1.0 - eta);
            for p in mode..n {
                weights[p + 1] = weights[p] * ratio * (n - p) as f64 / (p + 1) as f64;
            }
            for p in (0..mode).rev() {
                weights[p] = weights[p + 1] / ratio * (p + 1) as f64 / (n - p) as f64;
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Enumeration1d { n, eta, weights })
    }

    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(p, w)| w * f(p)).sum()
    }

    pub fn variance(&self, f: impl Fn(usize) -> f64) -> f64 {
        let mu = self.expectation(&f);
        self.expectation(|p| {
            let d = f(p) - mu;
            d * d
        })
    }

    pub fn covariance(&self, f: impl Fn(usize) -> f64, g: impl Fn(usize) -> f64) -> f64 {
        let mf = self.expectation(&f);
        let mg = self.expectation(&g);
        self.expectation(|p| (f(p) - mf) * (g(p) - mg))
    }

    pub fn central_moment4(&self, f: impl Fn(usize) -> f64) -> f64 {
        let mu = self.expectation(&f);
        self.expectation(|p| (f(p) - mu).powi(4))
    }
}

/// Statistic selector for the enumeration oracle.
#[derive(Debug, Clone, Copy)]
pub enum Observable {
    Apparent,
    SurrogateFirst,
    SurrogateSecond,
    ControlledFirst(f64),
    ControlledSecond([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    Mean,
    Variance,
}

fn observable_fn(ctr: &Controls1d, obs: Observable) -> impl Fn(usize) -> f64 + '_ {
    move |p| match obs {
        Observable::Apparent => ctr.x(p),
        Observable::SurrogateFirst => ctr.y1(p),
        Observable::SurrogateSecond => ctr.y2(p),
        Observable::ControlledFirst(rho) => ctr.d1(p, rho),
        Observable::ControlledSecond(rho) => ctr.d3(p, rho),
    }
}

/// Exact moment of a count-determined statistic by weighted enumeration.
/// Sizes beyond 20 are rejected: this is the oracle for field-enumerable
/// instances, not a large-N device.
pub fn enumerate_exact_moments(
    model: &OneDModel,
    n: usize,
    eta: f64,
    obs: Observable,
    moment: Moment,
) -> Result<f64> {
    if n > 20 {
        return Err(Error::InvalidInput(format!("N={n} too large to enumerate")));
    }
    let ctr = Controls1d::new(*model, n, eta)?;
    let en = Enumeration1d::new(n, eta)?;
    let f = observable_fn(&ctr, obs);
    Ok(match moment {
        Moment::Mean => en.expectation(f),
        Moment::Variance => en.variance(f),
    })
}

/// Enumeration-exact optimal coefficient for the first-order control.
pub fn exact_optimal_rho_first(ctr: &Controls1d) -> Result<f64> {
    let en = Enumeration1d::new(ctr.n, ctr.eta)?;
    let var = en.variance(|p| ctr.y1(p));
    let cov = en.covariance(|p| ctr.x(p), |p| ctr.y1(p));
    let sol = rho::solve_rho_system(&[vec![var]], &[cov], rho::CONDITION_LIMIT)?;
    Ok(sol.rho[0])
}

/// Enumeration-exact optimal coefficients for the two-sided second-order
/// control. In 1D the three controls are exactly collinear (all are
/// functions of the count), so the shedding rule fires and the returned
/// vector has one zero component.
pub fn exact_optimal_rho_second(ctr: &Controls1d) -> Result<RhoSolution> {
    let en = Enumeration1d::new(ctr.n, ctr.eta)?;
    let fs: [&dyn Fn(usize) -> f64; 3] =
        [&|p| ctr.y1(p), &|p| ctr.y2(p), &|p| ctr.c2(p)];
    let mut gram = vec![vec![0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            gram[i][j] = en.covariance(fs[i], fs[j]);
        }
    }
    let rhs: Vec<f64> = (0..3).map(|i| en.covariance(|p| ctr.x(p), fs[i])).collect();
    rho::solve_rho_system(&gram, &rhs, rho::CONDITION_LIMIT)
}

/// Samples a Bernoulli count: number of cells with uniform(key, k) < eta.
fn sample_count(key: u64, n: usize, eta: f64) -> usize {
    (0..n).filter(|&k| rng::uniform01(key, k as u64) < eta).count()
}

/// One row of the variance-scaling study.
#[derive(Debug, Clone, Copy)]
pub struct ScalingRow {
    pub n: usize,
    pub var_mc: f64,
    pub var_cv1: f64,
    pub var_cv3: f64,
    pub se_mc: f64,
    pub se_cv1: f64,
    pub se_cv3: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    pub slope_mc: f64,
    pub slope_cv1: f64,
    pub slope_cv3: f64,
    /// Sizes whose variance estimates were non-positive and left out.
    pub rejected: Vec<usize>,
}

/// Monte Carlo variance-scaling study over a list of sizes, using the
/// closed-form g (no PDE solves). Control coefficients are the empirical
/// optima per size; enumeration replaces sampling for N <= 20.
pub fn scaling_study(
    model: &OneDModel,
    eta: f64,
    n_list: &[usize],
    m: usize,
    seed: u64,
    parallel: bool,
) -> Result<ScalingStudy> {
    if n_list.len() < 4 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "need at least 4 strictly increasing sizes".into(),
        ));
    }
    if m < 2 {
        return Err(Error::InvalidInput("need M >= 2".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let ctr = Controls1d::new(*model, n, eta)?;
        let nkey = rng::substream(seed, n as u64);
        let counts = exec::map_indexed(m, parallel, |i| {
            sample_count(rng::substream(nkey, i as u64), n, eta)
        });
        let xs: Vec<f64> = counts.iter().map(|&p| ctr.x(p)).collect();
        let y1: Vec<f64> = counts.iter().map(|&p| ctr.y1(p)).collect();
        let y2: Vec<f64> = counts.iter().map(|&p| ctr.y2(p)).collect();
        let c2: Vec<f64> = counts.iter().map(|&p| ctr.c2(p)).collect();

        let rho1 = rho::empirical_rho(&xs, &[&y1], &[ctr.e_y1()], rho::CONDITION_LIMIT)?;
        let d1: Vec<f64> = counts
            .iter()
            .map(|&p| ctr.d1(p, rho1.rho[0]))
            .collect();
        let rho3 = rho::empirical_rho(
            &xs,
            &[&y1, &y2, &c2],
            &[ctr.e_y1(), ctr.e_y2(), ctr.e_c2()],
            rho::CONDITION_LIMIT,
        )?;
        let d3: Vec<f64> = counts
            .iter()
            .map(|&p| ctr.d3(p, [rho3.rho[0], rho3.rho[1], rho3.rho[2]]))
            .collect();

        rows.push(ScalingRow {
            n,
            var_mc: stats::variance_unbiased(&xs),
            var_cv1: stats::variance_unbiased(&d1),
            var_cv3: stats::variance_unbiased(&d3),
            se_mc: stats::variance_standard_error(&xs),
            se_cv1: stats::variance_standard_error(&d1),
            se_cv3: stats::variance_standard_error(&d3),
        });
    }

    let mut rejected = Vec::new();
    let fit = |pick: &dyn Fn(&ScalingRow) -> f64, rejected: &mut Vec<usize>| -> f64 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for row in &rows {
            let v = pick(row);
            if v > 0.0 {
                xs.push(row.n as f64);
                ys.push(v);
            } else if !rejected.contains(&row.n) {
                rejected.push(row.n);
            }
        }
        if xs.len() < 2 {
            f64::NAN
        } else {
            stats::fit_loglog_slope(&xs, &ys)
        }
    };
    let slope_mc = fit(&|r| r.var_mc, &mut rejected);
    let slope_cv1 = fit(&|r| r.var_cv1, &mut rejected);
    let slope_cv3 = fit(&|r| r.var_cv3, &mut rejected);
    Ok(ScalingStudy { rows, slope_mc, slope_cv1, slope_cv3, rejected })
}

/// Exact centered-mean moment bound check: with d_k = B_k - eta,
/// |E[(sum d_k / N)^p]| must decay like N^{-p/2} (p even) or
/// N^{-(p+1)/2} (p odd), with the constant fitted at the smallest size.
pub fn moment_bound_check(p: u32, eta: f64, n_list: &[usize]) -> Result<bool> {
    if p == 0 || p > 6 {
        return Err(Error::InvalidInput("p must be in 1..=6".into()));
    }
    if n_list.is_empty() || n_list.iter().any(|&n| n > 20) {
        return Err(Error::InvalidInput("sizes must be non-empty and <= 20".into()));
    }
    let rate = if p % 2 == 0 { p as f64 / 2.0 } else { (p as f64 + 1.0) / 2.0 };
    let moment = |n: usize| -> Result<f64> {
        let en = Enumeration1d::new(n, eta)?;
        Ok(en.expectation(|cnt| ((cnt as f64 - n as f64 * eta) / n as f64).powi(p as i32)))
    };
    let n0 = n_list[0];
    let c_p = moment(n0)?.abs() * (n0 as f64).powf(rate);
    for &n in &n_list[1..] {
        let m = moment(n)?.abs();
        if m > c_p * (n as f64).powf(-rate) + 1e-18 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MaterialModel;

    const EXPECT_HALF: f64 = 69.0 / 13.0; // harmonic mean of (3, 23) half-half

    #[test]
    fn g_hits_the_pure_phases_and_the_mix() {
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        assert!((m.g(0.0) - 3.0).abs() < 1e-14);
        assert!((m.g(1.0) - 23.0).abs() < 1e-14);
        assert!((m.g(0.5) - EXPECT_HALF).abs() < 1e-13);
    }

    #[test]
    fn apparent_depends_only_on_the_count() {
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        let f1 = DefectField::from_bits(1, 4, vec![1, 0, 1, 0]).unwrap();
        let f2 = DefectField::from_bits(1, 4, vec![0, 1, 1, 0]).unwrap();
        let a1 = m.apparent(&f1).unwrap();
        let a2 = m.apparent(&f2).unwrap();
        assert_eq!(a1, a2);
        assert!((a1 - EXPECT_HALF).abs() < 1e-13);
        let zeros = DefectField::zeros(1, 5);
        assert!((m.apparent(&zeros).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn from_model_reduces_the_checkerboard() {
        let cb = MaterialModel::checkerboard(1, 3.0, 23.0, 0.5).unwrap();
        let m = OneDModel::from_model(&cb).unwrap();
        assert!((m.g(0.5) - EXPECT_HALF).abs() < 1e-13);
    }

    #[test]
    fn one_cell_variance_is_two_point() {
        // N = 1: Var = eta (1 - eta) (g(1) - g(0))^2
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        let eta = 0.3;
        let en = Enumeration1d::new(1, eta).unwrap();
        let var = en.variance(|p| m.g(p as f64));
        let expect = eta * (1.0 - eta) * (23.0f64 - 3.0).powi(2);
        assert!((var - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn degenerate_eta_has_zero_variance() {
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        for eta in [0.0, 1.0] {
            let v =
                enumerate_exact_moments(&m, 8, eta, Observable::Apparent, Moment::Variance)
                    .unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn controlled_mean_equals_apparent_mean_for_any_rho() {
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        let e_x = enumerate_exact_moments(&m, 6, 0.5, Observable::Apparent, Moment::Mean).unwrap();
        for rho in [-0.7, 0.0, 0.3, 1.0, 2.9] {
            let e_d = enumerate_exact_moments(
                &m,
                6,
                0.5,
                Observable::ControlledFirst(rho),
                Moment::Mean,
            )
            .unwrap();
            assert!((e_d - e_x).abs() < 1e-12 * e_x.abs());
            let e_d3 = enumerate_exact_moments(
                &m,
                6,
                0.5,
                Observable::ControlledSecond([rho, -rho, 0.5 * rho]),
                Moment::Mean,
            )
            .unwrap();
            assert!((e_d3 - e_x).abs() < 1e-12 * e_x.abs());
        }
    }

    #[test]
    fn grouped_enumeration_matches_raw_field_enumeration() {
        // raw 2^N oracle at N = 10
        let n = 10usize;
        let eta = 0.37;
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        let ctr = Controls1d::new(m, n, eta).unwrap();
        let mut mean = 0.0;
        let mut mean_sq = 0.0;
        for mask in 0u32..(1 << n) {
            let p = mask.count_ones() as usize;
            let w = eta.powi(p as i32) * (1.0 - eta).powi((n - p) as i32);
            let v = ctr.d3(p, [0.4, 1.3, -0.2]);
            mean += w * v;
            mean_sq += w * v * v;
        }
        let raw_var = mean_sq - mean * mean;
        let en = Enumeration1d::new(n, eta).unwrap();
        let grouped_mean = en.expectation(|p| ctr.d3(p, [0.4, 1.3, -0.2]));
        let grouped_var = en.variance(|p| ctr.d3(p, [0.4, 1.3, -0.2]));
        assert!((mean - grouped_mean).abs() < 1e-12 * mean.abs());
        assert!((raw_var - grouped_var).abs() < 1e-10 * raw_var.abs().max(1e-12));
    }

    #[test]
    fn variance_ordering_of_optimal_controls() {
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        for n in [4usize, 6, 8, 10] {
            let ctr = Controls1d::new(m, n, 0.5).unwrap();
            let en = Enumeration1d::new(n, 0.5).unwrap();
            let var_mc = en.variance(|p| ctr.x(p));
            let r1 = exact_optimal_rho_first(&ctr).unwrap();
            let var_cv1 = en.variance(|p| ctr.d1(p, r1));
            let r3 = exact_optimal_rho_second(&ctr).unwrap();
            let var_cv3 = en.variance(|p| ctr.d3(p, [r3.rho[0], r3.rho[1], r3.rho[2]]));
            assert!(var_cv1 <= var_mc * (1.0 + 1e-12));
            assert!(var_cv3 <= var_cv1 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn collinear_controls_are_shed_in_one_dimension() {
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        let ctr = Controls1d::new(m, 6, 0.5).unwrap();
        let sol = exact_optimal_rho_second(&ctr).unwrap();
        assert_eq!(sol.dropped.len(), 1, "exactly one of the three collinear controls goes");
    }

    #[test]
    fn moment_bounds_hold_exactly() {
        assert!(moment_bound_check(2, 0.5, &[4, 8, 16]).unwrap());
        assert!(moment_bound_check(3, 0.5, &[4, 8, 16]).unwrap());
        assert!(moment_bound_check(4, 0.3, &[4, 8, 16, 20]).unwrap());
        // p = 1 is exactly zero at every size
        assert!(moment_bound_check(1, 0.4, &[4, 8, 16]).unwrap());
        let m = Enumeration1d::new(12, 0.3).unwrap();
        let second = m.expectation(|c| ((c as f64 - 12.0 * 0.3) / 12.0).powi(2));
        assert!((second - 0.3 * 0.7 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_study_runs_and_orders_variances() {
        let m = OneDModel::from_phases(3.0, 23.0).unwrap();
        let study = scaling_study(&m, 0.5, &[8, 16, 32, 64], 2000, 99, true).unwrap();
        for row in &study.rows {
            assert!(row.var_mc > row.var_cv1);
            assert!(row.var_cv1 > row.var_cv3);
        }
        assert!(study.slope_mc < -0.5);
    }
}

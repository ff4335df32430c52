//! Periodic corrector problems on the torus [0, N)^d and the apparent
//! homogenized tensor.
//!
//! Discretization: conforming multilinear elements on a uniform grid with
//! `r` elements per unit-cell side, coefficient sampled at element centers
//! (so piecewise-constant-per-subcell data is represented exactly whenever
//! `r` is a multiple of the subcell count). Element integrals are exact for
//! constant-per-element coefficients, and the tensor average uses the same
//! elementwise integration as the assembly; in 1D the discrete apparent
//! coefficient therefore equals the harmonic mean of the element values to
//! solver accuracy, and the Voigt-Reuss bounds hold discretely.
//!
//! The linear systems are symmetric positive semidefinite with the
//! constants as null space; a projected, diagonally preconditioned
//! conjugate gradient returns the mean-zero representative.

use crate::error::{Error, Result};
use crate::field::{coefficient_at, DefectField, MaterialModel, Phase};
use crate::tensor::Tensor;

/// Exact unit-square integrals of products of bilinear basis gradients,
/// node order (0,0), (1,0), (1,1), (0,1).
const KXX: [[f64; 4]; 4] = [
    [2.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 1.0 / 6.0],
    [-2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0, -2.0 / 6.0],
    [1.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, 2.0 / 6.0],
];
const KYY: [[f64; 4]; 4] = [
    [2.0 / 6.0, 1.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [1.0 / 6.0, 2.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0],
];
/// Symmetrized cross term (for the off-diagonal coefficient entry).
const KXYS: [[f64; 4]; 4] = [
    [0.5, 0.0, -0.5, 0.0],
    [0.0, -0.5, 0.0, 0.5],
    [-0.5, 0.0, 0.5, 0.0],
    [0.0, 0.5, 0.0, -0.5],
];
/// Integrals of basis gradients over the unit square.
const GV: [[f64; 2]; 4] = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]];

/// Uniform periodic grid: N unit cells per side, r elements per cell side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscreteGrid {
    cells: usize,
    res: usize,
    d: usize,
}

impl DiscreteGrid {
    pub fn new(d: usize, cells: usize, res: usize) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::InvalidInput(format!("dimension {d} not supported")));
        }
        if cells == 0 || res == 0 {
            return Err(Error::InvalidInput("grid needs cells >= 1 and res >= 1".into()));
        }
        Ok(DiscreteGrid { cells, res, d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// N, unit cells per side.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// r, elements per unit-cell side.
    pub fn res(&self) -> usize {
        self.res
    }

    /// Nodes (= elements) per side of the periodic grid.
    pub fn nodes_per_side(&self) -> usize {
        self.cells * self.res
    }

    /// Total degrees of freedom (one equivalence class per periodic node).
    pub fn node_count(&self) -> usize {
        self.nodes_per_side().pow(self.d as u32)
    }

    /// Element side length.
    pub fn h(&self) -> f64 {
        1.0 / self.res as f64
    }

    /// |Q_N|.
    pub fn volume(&self) -> f64 {
        (self.cells as f64).powi(self.d as i32)
    }
}

/// Coefficient tensor per element, sampled at element centers.
#[derive(Debug, Clone)]
pub struct ElementCoefficients {
    grid: DiscreteGrid,
    /// (a11, a12, a22) per element; 1D uses a11 only.
    vals: Vec<[f64; 3]>,
}

impl ElementCoefficients {
    /// Samples an arbitrary coefficient field at element centers.
    pub fn from_fn(grid: DiscreteGrid, f: impl Fn(&[f64]) -> Tensor) -> Self {
        let n = grid.nodes_per_side();
        let h = grid.h();
        let mut vals = Vec::with_capacity(grid.node_count());
        match grid.dim() {
            1 => {
                for i in 0..n {
                    let t = f(&[(i as f64 + 0.5) * h]);
                    vals.push([t.entry(0, 0), 0.0, 0.0]);
                }
            }
            _ => {
                for j in 0..n {
                    for i in 0..n {
                        let t = f(&[(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                        let a12 = 0.5 * (t.entry(0, 1) + t.entry(1, 0));
                        vals.push([t.entry(0, 0), a12, t.entry(1, 1)]);
                    }
                }
            }
        }
        ElementCoefficients { grid, vals }
    }

    /// Coefficients of one realization of the two-phase field.
    pub fn from_realization(
        model: &MaterialModel,
        field: &DefectField,
        res: usize,
    ) -> Result<Self> {
        let grid = DiscreteGrid::new(model.dim(), field.n(), res)?;
        Ok(Self::from_fn(grid, |x| {
            coefficient_at(model, field, x).expect("element center inside the torus")
        }))
    }

    /// Coefficients of the `base` phase everywhere except the listed cells
    /// (linear cell indices), which carry the other phase.
    pub fn two_phase(
        model: &MaterialModel,
        n: usize,
        res: usize,
        base: Phase,
        flipped: &[usize],
    ) -> Result<Self> {
        let grid = DiscreteGrid::new(model.dim(), n, res)?;
        let other = match base {
            Phase::A => Phase::C,
            Phase::C => Phase::A,
        };
        let s = grid.res();
        let cell_of = |i: usize, j: usize| -> usize {
            match grid.dim() {
                1 => i / s,
                _ => (i / s) + n * (j / s),
            }
        };
        let flipped: std::collections::HashSet<usize> = flipped.iter().copied().collect();
        let nn = grid.nodes_per_side();
        let h = grid.h();
        let mut vals = Vec::with_capacity(grid.node_count());
        let rows = if grid.dim() == 1 { 1 } else { nn };
        for j in 0..rows {
            for i in 0..nn {
                let phase = if flipped.contains(&cell_of(i, j)) { other } else { base };
                let fx = (i as f64 + 0.5) * h;
                let frac = [fx - fx.floor(), {
                    let fy = (j as f64 + 0.5) * h;
                    fy - fy.floor()
                }];
                let t = model.phase_coefficient(phase, frac);
                let a12 = if grid.dim() == 2 { 0.5 * (t.entry(0, 1) + t.entry(1, 0)) } else { 0.0 };
                let a22 = if grid.dim() == 2 { t.entry(1, 1) } else { 0.0 };
                vals.push([t.entry(0, 0), a12, a22]);
            }
        }
        Ok(ElementCoefficients { grid, vals })
    }

    pub fn grid(&self) -> DiscreteGrid {
        self.grid
    }

    #[inline]
    pub fn value(&self, e: usize) -> [f64; 3] {
        self.vals[e]
    }

    /// Harmonic and arithmetic means of the elementwise scalar value, when
    /// every element is isotropic. Used for Voigt-Reuss checks.
    pub fn isotropic_element_range(&self) -> Option<(f64, f64)> {
        let mut inv_sum = 0.0;
        let mut sum = 0.0;
        for v in &self.vals {
            if self.grid.dim() == 2 && ((v[0] - v[2]).abs() > 1e-12 * v[0].abs() || v[1] != 0.0) {
                return None;
            }
            if v[0] <= 0.0 {
                return None;
            }
            sum += v[0];
            inv_sum += 1.0 / v[0];
        }
        let m = self.vals.len() as f64;
        Some((m / inv_sum, sum / m))
    }
}

/// Iteration control for the projected PCG solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap as a multiple of nodes-per-side.
    pub max_iter_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, max_iter_factor: 50 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, ..Default::default() }
    }
}

/// Corrector solution for one direction p = e_axis.
#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    pub axis: usize,
    /// Nodal values, discrete mean zero.
    pub values: Vec<f64>,
    /// Elementwise gradient (exact element average of the discrete gradient).
    pub grads: Vec<[f64; 2]>,
    /// Relative residual reached.
    pub residual: f64,
    pub iterations: usize,
}

/// Assembled periodic stiffness operator, applied matrix-free per element.
pub struct StiffnessOperator<'a> {
    coef: &'a ElementCoefficients,
    n: usize,
    d: usize,
    /// Per-element 4x4 stiffness (2D, row major); 1D keeps a_e/h in slot 0.
    ke: Vec<[f64; 16]>,
    diag: Vec<f64>,
    wrap: Vec<usize>,
}

impl<'a> StiffnessOperator<'a> {
    pub fn new(coef: &'a ElementCoefficients) -> Self {
        let grid = coef.grid();
        let n = grid.nodes_per_side();
        let d = grid.dim();
        let h = grid.h();
        let wrap: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        let count = grid.node_count();
        let mut ke = vec![[0.0; 16]; count];
        let mut diag = vec![0.0; count];
        match d {
            1 => {
                for e in 0..n {
                    let a = coef.value(e)[0] / h;
                    ke[e][0] = a;
                    diag[e] += a;
                    diag[wrap[e]] += a;
                }
            }
            _ => {
                for j in 0..n {
                    for i in 0..n {
                        let e = i + n * j;
                        let [a11, a12, a22] = coef.value(e);
                        let k = &mut ke[e];
                        for r in 0..4 {
                            for c in 0..4 {
                                k[4 * r + c] =
                                    a11 * KXX[r][c] + a22 * KYY[r][c] + a12 * KXYS[r][c];
                            }
                        }
                        let loc = [i + n * j, wrap[i] + n * j, wrap[i] + n * wrap[j], i + n * wrap[j]];
                        for r in 0..4 {
                            diag[loc[r]] += k[4 * r + r];
                        }
                    }
                }
            }
        }
        StiffnessOperator { coef, n, d, ke, diag, wrap }
    }

    pub fn node_count(&self) -> usize {
        self.coef.grid().node_count()
    }

    /// y = K x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        let n = self.n;
        match self.d {
            1 => {
                for e in 0..n {
                    let a = self.ke[e][0];
                    let l = e;
                    let r = self.wrap[e];
                    let dx = x[l] - x[r];
                    y[l] += a * dx;
                    y[r] -= a * dx;
                }
            }
            _ => {
                for j in 0..n {
                    let jp = self.wrap[j];
                    for i in 0..n {
                        let ip = self.wrap[i];
                        let e = i + n * j;
                        let loc = [e, ip + n * j, ip + n * jp, i + n * jp];
                        let xv = [x[loc[0]], x[loc[1]], x[loc[2]], x[loc[3]]];
                        let k = &self.ke[e];
                        for r in 0..4 {
                            let row = &k[4 * r..4 * r + 4];
                            y[loc[r]] +=
                                row[0] * xv[0] + row[1] * xv[1] + row[2] * xv[2] + row[3] * xv[3];
                        }
                    }
                }
            }
        }
    }

    /// Load vector for the corrector problem in direction e_axis:
    /// b_i = -sum_e (A_e e_axis) . integral_e grad(phi_i).
    pub fn rhs(&self, axis: usize) -> Vec<f64> {
        let n = self.n;
        let h = self.coef.grid().h();
        let mut b = vec![0.0; self.node_count()];
        match self.d {
            1 => {
                for e in 0..n {
                    let a = self.coef.value(e)[0];
                    // integral of dphi/dx over the element: -1 left node, +1 right node
                    b[e] += a;
                    b[self.wrap[e]] -= a;
                }
            }
            _ => {
                for j in 0..n {
                    let jp = self.wrap[j];
                    for i in 0..n {
                        let ip = self.wrap[i];
                        let e = i + n * j;
                        let [a11, a12, a22] = self.coef.value(e);
                        let bx = if axis == 0 { a11 } else { a12 };
                        let by = if axis == 0 { a12 } else { a22 };
                        let loc = [e, ip + n * j, ip + n * jp, i + n * jp];
                        for r in 0..4 {
                            b[loc[r]] -= h * (bx * GV[r][0] + by * GV[r][1]);
                        }
                    }
                }
            }
        }
        b
    }

    /// x^T K y (energy pairing).
    pub fn energy(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut kx = vec![0.0; x.len()];
        self.apply(y, &mut kx);
        x.iter().zip(&kx).map(|(a, b)| a * b).sum()
    }

    /// Solves K w = b in the mean-zero subspace by projected PCG with
    /// diagonal preconditioning.
    pub fn solve(&self, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, f64, usize)> {
        let m = b.len();
        let inv_m = 1.0 / m as f64;
        let project = |v: &mut [f64]| {
            let mean: f64 = v.iter().sum::<f64>() * inv_m;
            v.iter_mut().for_each(|x| *x -= mean);
        };

        let mut r = b.to_vec();
        project(&mut r);
        let bnorm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut x = vec![0.0; m];
        if bnorm == 0.0 {
            return Ok((x, 0.0, 0));
        }
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(ri, di)| ri / di).collect();
        project(&mut z);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; m];
        let cap = opts.max_iter_factor * self.n;
        let mut res = 1.0;
        for it in 0..cap {
            res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
            if res <= opts.tol {
                project(&mut x);
                return Ok((x, res, it));
            }
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(Error::EllipticityLost);
            }
            let alpha = rz / pap;
            for i in 0..m {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            project(&mut r);
            for i in 0..m {
                z[i] = r[i] / self.diag[i];
            }
            project(&mut z);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NoConvergence { residual: res, iterations: cap })
    }
}

/// Elementwise gradients of a nodal field (exact element averages).
pub fn element_gradients(grid: DiscreteGrid, values: &[f64]) -> Vec<[f64; 2]> {
    let n = grid.nodes_per_side();
    let h = grid.h();
    let mut grads = vec![[0.0; 2]; grid.node_count()];
    match grid.dim() {
        1 => {
            for e in 0..n {
                let r = (e + 1) % n;
                grads[e][0] = (values[r] - values[e]) / h;
            }
        }
        _ => {
            for j in 0..n {
                let jp = (j + 1) % n;
                for i in 0..n {
                    let ip = (i + 1) % n;
                    let w0 = values[i + n * j];
                    let w1 = values[ip + n * j];
                    let w2 = values[ip + n * jp];
                    let w3 = values[i + n * jp];
                    grads[i + n * j] = [
                        0.5 * ((w1 - w0) + (w2 - w3)) / h,
                        0.5 * ((w3 - w0) + (w2 - w1)) / h,
                    ];
                }
            }
        }
    }
    grads
}

/// Solves the periodic corrector problem in direction e_axis.
pub fn solve_corrector(
    coef: &ElementCoefficients,
    axis: usize,
    opts: &SolverOptions,
) -> Result<CorrectorSolution> {
    if axis >= coef.grid().dim() {
        return Err(Error::InvalidInput(format!("axis {axis} out of range")));
    }
    if opts.tol <= 0.0 {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let op = StiffnessOperator::new(coef);
    let b = op.rhs(axis);
    let (values, residual, iterations) = op.solve(&b, opts)?;
    let grads = element_gradients(coef.grid(), &values);
    Ok(CorrectorSolution { axis, values, grads, residual, iterations })
}

/// Apparent homogenized tensor: column p is the volume average of
/// A (e_p + grad w_p), integrated elementwise like the assembly.
pub fn apparent_tensor(
    coef: &ElementCoefficients,
    correctors: &[CorrectorSolution],
) -> Result<Tensor> {
    let grid = coef.grid();
    let d = grid.dim();
    if correctors.len() != d {
        return Err(Error::InvalidInput(format!("need {d} correctors, got {}", correctors.len())));
    }
    let count = grid.node_count();
    for w in correctors {
        if w.values.len() != count {
            return Err(Error::InvalidInput("corrector grid size mismatch".into()));
        }
    }
    let mut t = Tensor::zero(d);
    let weight = grid.h().powi(d as i32) / grid.volume();
    for w in correctors {
        let p = w.axis;
        let mut col = [0.0f64; 2];
        for e in 0..count {
            let v = coef.value(e);
            let g = w.grads[e];
            match d {
                1 => col[0] += v[0] * (1.0 + g[0]),
                _ => {
                    let ex = if p == 0 { 1.0 } else { 0.0 };
                    let ey = if p == 1 { 1.0 } else { 0.0 };
                    col[0] += v[0] * (ex + g[0]) + v[1] * (ey + g[1]);
                    col[1] += v[1] * (ex + g[0]) + v[2] * (ey + g[1]);
                }
            }
        }
        for i in 0..d {
            t.set_entry(i, p, col[i] * weight);
        }
    }
    Ok(t)
}

/// All correctors of one coefficient realization plus its tensor.
/// This is the unit of the cost accounting: one cell problem.
pub struct CellSolution {
    pub correctors: Vec<CorrectorSolution>,
    pub tensor: Tensor,
    pub iterations: usize,
}

pub fn solve_cell_problem(coef: &ElementCoefficients, opts: &SolverOptions) -> Result<CellSolution> {
    let d = coef.grid().dim();
    let mut correctors = Vec::with_capacity(d);
    let mut iterations = 0;
    for axis in 0..d {
        let w = solve_corrector(coef, axis, opts)?;
        iterations += w.iterations;
        correctors.push(w);
    }
    let tensor = apparent_tensor(coef, &correctors)?;
    Ok(CellSolution { correctors, tensor, iterations })
}

/// Homogenized tensor of the pure `phase` material, solved on the single
/// unit cell (equal to the zero-defect solve on any Q_N by periodicity).
pub fn periodic_tensor(
    model: &MaterialModel,
    res: usize,
    phase: Phase,
    opts: &SolverOptions,
) -> Result<Tensor> {
    let coef = match phase {
        Phase::A => ElementCoefficients::two_phase(model, 1, res, Phase::A, &[])?,
        Phase::C => ElementCoefficients::two_phase(model, 1, res, Phase::C, &[])?,
    };
    Ok(solve_cell_problem(&coef, opts)?.tensor)
}

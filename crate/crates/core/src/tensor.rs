//! Small dense d×d tensors (d = 1 or 2) holding homogenized coefficients.

use crate::error::{Error, Result};
use std::ops::{Add, Mul, Sub};

/// A d×d matrix of coefficient values. Storage is always 2×2; for d = 1
/// only the (0,0) entry is meaningful and the rest stays zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor {
    d: usize,
    m: [[f64; 2]; 2],
}

impl Tensor {
    pub fn zero(d: usize) -> Self {
        assert!(d == 1 || d == 2, "dimension must be 1 or 2");
        Tensor { d, m: [[0.0; 2]; 2] }
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        let mut t = Self::zero(d);
        for i in 0..d {
            t.m[i][i] = s;
        }
        t
    }

    /// 2×2 tensor from entries (row major).
    pub fn from_entries_2d(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Tensor { d: 2, m: [[a11, a12], [a21, a22]] }
    }

    pub fn from_scalar_1d(a: f64) -> Self {
        let mut t = Self::zero(1);
        t.m[0][0] = a;
        t
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.d && j < self.d);
        self.m[i][j]
    }

    #[inline]
    pub fn set_entry(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.d && j < self.d);
        self.m[i][j] = v;
    }

    /// Applies the tensor to a vector (first `d` components used).
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for i in 0..self.d {
            for j in 0..self.d {
                out[i] += self.m[i][j] * v[j];
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                v = v.max(self.m[i][j].abs());
            }
        }
        v
    }

    /// Largest absolute asymmetry |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        if self.d == 1 {
            0.0
        } else {
            (self.m[0][1] - self.m[1][0]).abs()
        }
    }

    /// Eigenvalue range of the symmetric part.
    pub fn eigen_range(&self) -> (f64, f64) {
        if self.d == 1 {
            (self.m[0][0], self.m[0][0])
        } else {
            let a = self.m[0][0];
            let b = 0.5 * (self.m[0][1] + self.m[1][0]);
            let c = self.m[1][1];
            let mean = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (mean - disc, mean + disc)
        }
    }

    /// Checks symmetry and a positive eigenvalue range.
    pub fn validate_spd(&self, what: &str) -> Result<()> {
        let (lo, hi) = self.eigen_range();
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "{what}: eigenvalues [{lo}, {hi}] not in (0, inf)"
            )));
        }
        if self.asymmetry() > 1e-12 * self.max_abs().max(1.0) {
            return Err(Error::InvalidModel(format!("{what}: matrix is not symmetric")));
        }
        Ok(())
    }

    /// True when the tensor is a multiple of the identity (up to `tol`).
    pub fn is_isotropic(&self, tol: f64) -> bool {
        if self.d == 1 {
            return true;
        }
        let scale = self.max_abs().max(1.0);
        (self.m[0][0] - self.m[1][1]).abs() <= tol * scale
            && self.m[0][1].abs() <= tol * scale
            && self.m[1][0].abs() <= tol * scale
    }

    /// Conjugation R T R^T by an orthogonal lattice symmetry with entries
    /// in {0, ±1} (rows of `rot`).
    pub fn conjugate(&self, rot: [[i8; 2]; 2]) -> Self {
        assert_eq!(self.d, 2);
        let r = |i: usize, j: usize| rot[i][j] as f64;
        let mut out = Self::zero(2);
        for i in 0..2 {
            for j in 0..2 {
                let mut v = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        v += r(i, k) * self.m[k][l] * r(j, l);
                    }
                }
                out.m[i][j] = v;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                v = v.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        v
    }
}

impl Add for Tensor {
    type Output = Tensor;
    fn add(self, rhs: Tensor) -> Tensor {
        debug_assert_eq!(self.d, rhs.d);
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] += rhs.m[i][j];
            }
        }
        out
    }
}

impl Sub for Tensor {
    type Output = Tensor;
    fn sub(self, rhs: Tensor) -> Tensor {
        debug_assert_eq!(self.d, rhs.d);
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] -= rhs.m[i][j];
            }
        }
        out
    }
}

impl Mul<f64> for Tensor {
    type Output = Tensor;
    fn mul(self, s: f64) -> Tensor {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] *= s;
            }
        }
        out
    }
}

impl std::fmt::Display for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.d == 1 {
            write!(f, "[{:.9}]", self.m[0][0])
        } else {
            write!(
                f,
                "[{:.9} {:.9}; {:.9} {:.9}]",
                self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]
            )
        }
    }
}

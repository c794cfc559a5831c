//! Small symmetric matrices (`n ≤ 3`) and their eigen-decompositions.
//!
//! `n ≤ 2` uses closed forms, `n = 3` cyclic Jacobi rotations.

#[allow(unused_imports)] // unused when std float methods are in scope
use num_traits::Float;

use crate::operator::EigenTuple;

pub type Mat3 = [[f64; 3]; 3];

/// Off-diagonal tolerance for Jacobi, relative to the Frobenius norm.
pub const JACOBI_TOLERANCE: f64 = 1e-13;
pub const JACOBI_MAX_SWEEPS: usize = 30;

/// A symmetric `n × n` matrix stored densely in a 3 × 3 block. Entries
/// outside the leading `n × n` block are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    n: usize,
    m: Mat3,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=3).contains(&n), "dimension {n} out of range");
        Self {
            n,
            m: [[0.0; 3]; 3],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn scalar(n: usize, value: f64) -> Self {
        let mut s = Self::zeros(n);
        for i in 0..n {
            s.m[i][i] = value;
        }
        s
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut s = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            s.m[i][i] = v;
        }
        s
    }

    /// Builds from rows, symmetrizing with the upper triangle.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                s.set(i, j, rows[i][j]);
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.m[i][j] = value;
        self.m[j][i] = value;
    }

    pub fn as_array(&self) -> &Mat3 {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.m[i][i]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.m[i][j] * self.m[i][j];
            }
        }
        s.sqrt()
    }

    /// `self²`, symmetric because `self` is.
    pub fn square(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let v = (0..self.n).map(|k| self.m[i][k] * self.m[k][j]).sum();
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] += other.m[i][j];
            }
        }
        out
    }

    /// `Q diag(values) Qᵀ` where the columns of `vectors` are `Q`.
    pub fn from_eigen(values: &[f64], vectors: &Mat3) -> Self {
        let n = values.len();
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = (0..n)
                    .map(|k| vectors[i][k] * values[k] * vectors[j][k])
                    .sum();
                out.set(i, j, v);
            }
        }
        out
    }

    /// Sorted eigenvalues.
    pub fn eigenvalues(&self) -> EigenTuple {
        match self.n {
            1 => EigenTuple::from_sorted(1, [self.m[0][0], 0.0, 0.0]),
            2 => {
                let (lo, hi) = eig2_values(self.m[0][0], self.m[0][1], self.m[1][1]);
                EigenTuple::from_sorted(2, [lo, hi, 0.0])
            }
            _ => self.eigen().0,
        }
    }

    /// Sorted eigenvalues and the matching orthonormal eigenvectors, stored
    /// as the columns of the returned matrix.
    pub fn eigen(&self) -> (EigenTuple, Mat3) {
        match self.n {
            1 => (
                EigenTuple::from_sorted(1, [self.m[0][0], 0.0, 0.0]),
                [[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]],
            ),
            2 => eig2(self.m[0][0], self.m[0][1], self.m[1][1]),
            _ => jacobi3(&self.m),
        }
    }
}

fn eig2_values(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    (mean - r, mean + r)
}

fn eig2(a: f64, b: f64, c: f64) -> (EigenTuple, Mat3) {
    let (lo, hi) = eig2_values(a, b, c);
    // the rotation by θ diagonalizes [[a, b], [b, c]]; (cos θ, sin θ) goes with `hi`
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let vectors = [[-s, co, 0.0], [co, s, 0.0], [0.0; 3]];
    (EigenTuple::from_sorted(2, [lo, hi, 0.0]), vectors)
}

fn jacobi3(input: &Mat3) -> (EigenTuple, Mat3) {
    let mut a = *input;
    let mut v: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = {
        let mut s = 0.0;
        for row in &a {
            for x in row {
                s += x * x;
            }
        }
        s.sqrt()
    };
    let threshold = JACOBI_TOLERANCE * scale;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        if off <= threshold || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = [
        a[order[0]][order[0]],
        a[order[1]][order[1]],
        a[order[2]][order[2]],
    ];
    let mut vectors = [[0.0; 3]; 3];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..3 {
            vectors[row][col] = v[row][src];
        }
    }
    (EigenTuple::from_sorted(3, values), vectors)
}

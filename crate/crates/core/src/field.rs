//! Uniform box grids centered at the origin, scalar fields on them, and
//! centered finite differences up to third order.
//!
//! Derivative fields carry a `ring` width: values are only defined at grid
//! points at least `ring` indices away from every face. Ring entries are
//! left at their zero value and never extrapolated.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // unused when std float methods are in scope
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;

/// Slack, in units of grid spacing, when deciding whether a point is inside
/// the box.
const BOX_SLACK: f64 = 1e-9;

/// A cube `[-L, L]^n` sampled with spacing `h` and `m = 2⌊L/h⌋ + 1` points
/// per axis, symmetric about the origin (which is always a grid point).
///
/// Flattening is row-major: the last axis varies fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    half_points: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid("grid spacing must be positive and finite"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid("grid half-width must be positive and finite"));
        }
        // L/h is often meant to be an integer but lands a few ulps below it
        let ratio = half_width / spacing;
        let half_points = (ratio * (1.0 + 1e-12)).floor() as usize;
        Self::with_half_points(dim, half_points, spacing)
    }

    pub fn with_half_points(dim: usize, half_points: usize, spacing: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension { dim });
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid("grid spacing must be positive and finite"));
        }
        let m = 2 * half_points + 1;
        if m < 5 {
            return Err(Error::GridTooSmall {
                points_per_axis: m,
                needed: 5,
            });
        }
        Ok(Self {
            dim,
            half_points,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn half_points(&self) -> usize {
        self.half_points
    }

    pub fn points_per_axis(&self) -> usize {
        2 * self.half_points + 1
    }

    /// `k·h`, which can be slightly below the requested half-width.
    pub fn half_width(&self) -> f64 {
        self.half_points as f64 * self.spacing
    }

    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis().pow((self.dim - 1 - axis) as u32)
    }

    #[inline]
    pub fn coordinate(&self, index: usize) -> f64 {
        (index as f64 - self.half_points as f64) * self.spacing
    }

    #[inline]
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let m = self.points_per_axis();
        let mut idx = [0; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % m;
            rest /= m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let m = self.points_per_axis();
        idx[..self.dim].iter().fold(0, |acc, &i| acc * m + i)
    }

    /// Coordinates of a grid point; entries past `dim` are zero.
    #[inline]
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.coordinate(idx[axis]);
        }
        x
    }

    /// Index distance from the nearest face.
    #[inline]
    pub fn ring_distance(&self, flat: usize) -> usize {
        let m = self.points_per_axis();
        let idx = self.multi_index(flat);
        idx[..self.dim]
            .iter()
            .map(|&i| i.min(m - 1 - i))
            .min()
            .unwrap_or(0)
    }

    /// Flat indices at least `ring` away from every face.
    pub fn interior(&self, ring: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&p| self.ring_distance(p) >= ring)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let limit = self.half_width() + BOX_SLACK * self.spacing;
        x[..self.dim].iter().all(|c| c.abs() <= limit)
    }
}

/// Values of a potential `u` at every grid point. Values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    /// `values[p] = f(x_p)`.
    pub fn sample<F: Fn(&[f64]) -> f64>(grid: &Grid, f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for p in 0..grid.len() {
            let x = grid.point(p);
            let v = f(&x[..grid.dim()]);
            if !v.is_finite() {
                return Err(Error::NonFinite { point: p, value: v });
            }
            values.push(v);
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid("value count does not match the grid"));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: p,
                value: values[p],
            });
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Multilinear interpolation at `x`.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        let g = &self.grid;
        let dim = g.dim();
        let m = g.points_per_axis();
        let h = g.spacing();
        let hw = g.half_width();
        let mut base = [0usize; 3];
        let mut w = [0.0; 3];
        for axis in 0..dim {
            let s = (x[axis] + hw) / h;
            let top = (m - 1) as f64;
            if !(s >= -BOX_SLACK && s <= top + BOX_SLACK) {
                return Err(Error::OutOfBox {
                    coordinate: x[axis],
                    half_width: hw,
                });
            }
            let s = s.clamp(0.0, top);
            let i = (s.floor() as usize).min(m - 2);
            base[axis] = i;
            w[axis] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut flat = 0;
            for axis in 0..dim {
                let up = (corner >> axis) & 1 == 1;
                weight *= if up { w[axis] } else { 1.0 - w[axis] };
                flat = flat * m + base[axis] + usize::from(up);
            }
            if weight != 0.0 {
                acc += weight * self.values[flat];
            }
        }
        Ok(acc)
    }

    /// `max_p |self[p] − other[p]|` over every grid point.
    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(invalid("fields live on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Like [`sup_distance`](Self::sup_distance) but restricted to points at
    /// least `ring` away from the faces.
    pub fn sup_distance_interior(&self, other: &ScalarField, ring: usize) -> Result<f64> {
        if self.grid != other.grid {
            return Err(invalid("fields live on different grids"));
        }
        Ok(self
            .grid
            .interior(ring)
            .map(|p| (self.values[p] - other.values[p]).abs())
            .fold(0.0, f64::max))
    }
}

/// A per-point quantity defined on the interior `ring_distance ≥ ring`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointField<T> {
    grid: Grid,
    ring: usize,
    data: Vec<T>,
}

impl<T> PointField<T> {
    pub(crate) fn new(grid: Grid, ring: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, ring, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ring(&self) -> usize {
        self.ring
    }

    /// `None` on the flagged boundary ring.
    pub fn get(&self, flat: usize) -> Option<&T> {
        (self.grid.ring_distance(flat) >= self.ring).then(|| &self.data[flat])
    }

    pub fn interior(&self) -> impl Iterator<Item = (usize, &T)> + '_ {
        self.grid
            .interior(self.ring)
            .map(move |p| (p, &self.data[p]))
    }
}

impl PointField<f64> {
    /// Max of `|value|` over the interior.
    pub fn sup_abs(&self) -> f64 {
        self.interior().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }
}

/// Order-3 derivative tensor `T[i][j][k] = ∂_k u_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor3 {
    n: usize,
    t: [[[f64; 3]; 3]; 3],
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            t: [[[0.0; 3]; 3]; 3],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.t[i][j][k]
    }

    pub fn frobenius(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s += self.t[i][j][k] * self.t[i][j][k];
                }
            }
        }
        s.sqrt()
    }
}

/// Output of [`derivatives`].
#[derive(Debug, Clone, PartialEq)]
pub enum Derivatives {
    Gradient(PointField<[f64; 3]>),
    Hessian(PointField<SymMatrix>),
    Third(PointField<Tensor3>),
}

fn check_stencil(grid: &Grid, ring: usize) -> Result<()> {
    let needed = 2 * ring + 1;
    if grid.points_per_axis() < needed {
        return Err(Error::GridTooSmall {
            points_per_axis: grid.points_per_axis(),
            needed,
        });
    }
    Ok(())
}

/// Centered first differences at an interior point (`ring ≥ 1`).
#[inline]
pub fn gradient_at(values: &[f64], grid: &Grid, p: usize) -> [f64; 3] {
    let inv = 0.5 / grid.spacing();
    let mut g = [0.0; 3];
    for axis in 0..grid.dim() {
        let s = grid.stride(axis);
        g[axis] = (values[p + s] - values[p - s]) * inv;
    }
    g
}

/// Three-point diagonal and four-point cross stencils at an interior point
/// (`ring ≥ 1`). Each unordered pair is computed once, so the result is
/// exactly symmetric.
#[inline]
pub fn hessian_at(values: &[f64], grid: &Grid, p: usize) -> SymMatrix {
    let n = grid.dim();
    let h = grid.spacing();
    let inv2 = 1.0 / (h * h);
    let inv4 = 0.25 * inv2;
    let mut hess = SymMatrix::zeros(n);
    let c = values[p];
    for i in 0..n {
        let si = grid.stride(i);
        hess.set(i, i, (values[p + si] - 2.0 * c + values[p - si]) * inv2);
        for j in (i + 1)..n {
            let sj = grid.stride(j);
            let v = values[p + si + sj] - values[p + si - sj] - values[p - si + sj]
                + values[p - si - sj];
            hess.set(i, j, v * inv4);
        }
    }
    hess
}

pub fn gradient(field: &ScalarField) -> Result<PointField<[f64; 3]>> {
    let grid = field.grid;
    check_stencil(&grid, 1)?;
    let mut data = vec![[0.0; 3]; grid.len()];
    for p in grid.interior(1) {
        data[p] = gradient_at(&field.values, &grid, p);
    }
    Ok(PointField::new(grid, 1, data))
}

pub fn hessian(field: &ScalarField) -> Result<PointField<SymMatrix>> {
    let grid = field.grid;
    check_stencil(&grid, 1)?;
    let mut data = vec![SymMatrix::zeros(grid.dim()); grid.len()];
    for p in grid.interior(1) {
        data[p] = hessian_at(&field.values, &grid, p);
    }
    Ok(PointField::new(grid, 1, data))
}

/// `∂_k u_ij` by centered differencing of the Hessian field (`ring = 2`).
pub fn third_derivatives(field: &ScalarField) -> Result<PointField<Tensor3>> {
    let hess = hessian(field)?;
    third_from_hessian(&hess)
}

pub(crate) fn third_from_hessian(hess: &PointField<SymMatrix>) -> Result<PointField<Tensor3>> {
    let grid = hess.grid;
    check_stencil(&grid, 2)?;
    let n = grid.dim();
    let inv = 0.5 / grid.spacing();
    let mut data = vec![Tensor3::zeros(n); grid.len()];
    for p in grid.interior(2) {
        let t = &mut data[p].t;
        for k in 0..n {
            let s = grid.stride(k);
            let up = &hess.data[p + s];
            let down = &hess.data[p - s];
            for i in 0..n {
                for j in 0..n {
                    t[i][j][k] = (up.get(i, j) - down.get(i, j)) * inv;
                }
            }
        }
    }
    Ok(PointField::new(grid, 2, data))
}

/// Derivative field of order 1, 2 or 3.
pub fn derivatives(field: &ScalarField, order: usize) -> Result<Derivatives> {
    match order {
        1 => gradient(field).map(Derivatives::Gradient),
        2 => hessian(field).map(Derivatives::Hessian),
        3 => third_derivatives(field).map(Derivatives::Third),
        _ => Err(invalid("derivative order must be 1, 2 or 3")),
    }
}

/// Max over the interior of the Frobenius norm of `D^l u`, `l ∈ {2, 3}`.
pub fn sup_derivative_norm(field: &ScalarField, order: usize) -> Result<f64> {
    match order {
        2 => Ok(hessian(field)?
            .interior()
            .map(|(_, h)| h.frobenius())
            .fold(0.0, f64::max)),
        3 => Ok(third_derivatives(field)?
            .interior()
            .map(|(_, t)| t.frobenius())
            .fold(0.0, f64::max)),
        _ => Err(invalid("sup_derivative_norm supports orders 2 and 3")),
    }
}

/// `u_σ(y) = σ²·[u(x₀ + y/σ) − u(x₀) − Du(x₀)·(y/σ)]` sampled on `target`.
///
/// `u_σ(0) = 0`, `Du_σ(0) = 0`, and `D^l u_σ = σ^{2−l} D^l u` at matching
/// points. Off-grid values of `u` come from multilinear interpolation.
pub fn parabolic_rescale(
    field: &ScalarField,
    center: &[f64],
    center_value: f64,
    grad_at_center: &[f64],
    sigma: f64,
    target: &Grid,
) -> Result<ScalarField> {
    let dim = field.grid.dim();
    if target.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: target.dim(),
        });
    }
    if center.len() < dim || grad_at_center.len() < dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: center.len().min(grad_at_center.len()),
        });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma must be positive"));
    }
    let mut values = Vec::with_capacity(target.len());
    for p in 0..target.len() {
        let y = target.point(p);
        let mut x = [0.0; 3];
        let mut linear = 0.0;
        for axis in 0..dim {
            let step = y[axis] / sigma;
            x[axis] = center[axis] + step;
            linear += grad_at_center[axis] * step;
        }
        let u = field.interpolate(&x[..dim])?;
        values.push(sigma * sigma * (u - center_value - linear));
    }
    Ok(ScalarField::from_values_unchecked(*target, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(dim: usize, l: f64, h: f64) -> Grid {
        Grid::new(dim, l, h).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = grid(2, 1.0, 0.05);
        assert_eq!(g.points_per_axis(), 41);
        assert_eq!(g.len(), 41 * 41);
        assert_eq!(g.point(0)[..2], [-1.0, -1.0]);
        let centre = g.flat_index(&[20, 20]);
        assert_eq!(g.point(centre)[..2], [0.0, 0.0]);
        assert_eq!(g.ring_distance(centre), 20);
        assert_eq!(g.interior(2).count(), 37 * 37);
        assert!(matches!(
            Grid::new(1, 1.0, 0.6),
            Err(Error::GridTooSmall { .. })
        ));
        assert!(Grid::new(4, 1.0, 0.1).is_err());
    }

    #[test]
    fn sample_examples() {
        let g = grid(1, 1.0, 0.5);
        let f = ScalarField::sample(&g, |x| 0.5 * x[0] * x[0]).unwrap();
        assert_eq!(f.values(), &[0.5, 0.125, 0.0, 0.125, 0.5]);
        let z = ScalarField::sample(&g, |_| 0.0).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));

        let g = grid(2, 1.0, 0.25);
        let f = ScalarField::sample(&g, |x| x[0] * x[1]).unwrap();
        let m = g.points_per_axis();
        for i in 0..m {
            for j in 0..m {
                let a = f.values()[g.flat_index(&[i, j])];
                let b = f.values()[g.flat_index(&[m - 1 - i, j])];
                assert_eq!(a, -b);
            }
        }
        let bad = ScalarField::sample(&g, |x| 1.0 / x[0]);
        assert!(matches!(bad, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn second_differences_exact_on_quadratics() {
        let g = grid(1, 1.0, 0.1);
        let f = ScalarField::sample(&g, |x| x[0] * x[0]).unwrap();
        let h = hessian(&f).unwrap();
        for (_, m) in h.interior() {
            assert_abs_diff_eq!(m.get(0, 0), 2.0, epsilon = 1e-12);
        }
        assert!(h.get(0).is_none());

        let g = grid(3, 1.0, 0.25);
        let f = ScalarField::sample(&g, |x| {
            1.5 * x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[2] + 2.0 * x[2] * x[2] + x[0] - 3.0
        })
        .unwrap();
        let want = SymMatrix::from_rows(&[&[3.0, -1.0, 0.0], &[-1.0, 0.0, 0.5], &[0.0, 0.5, 4.0]]);
        for (_, m) in hessian(&f).unwrap().interior() {
            for i in 0..3 {
                for j in 0..3 {
                    assert_abs_diff_eq!(m.get(i, j), want.get(i, j), epsilon = 1e-12);
                    assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
        }
        for (p, gr) in gradient(&f).unwrap().interior() {
            let x = g.point(p);
            assert_abs_diff_eq!(gr[0], 3.0 * x[0] - x[1] + 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = grid(2, 1.0, 0.25);
        let f = ScalarField::sample(&g, |_| 4.2).unwrap();
        assert_eq!(sup_derivative_norm(&f, 2).unwrap(), 0.0);
        assert_eq!(sup_derivative_norm(&f, 3).unwrap(), 0.0);
        assert!(gradient(&f)
            .unwrap()
            .interior()
            .all(|(_, g)| g == &[0.0; 3]));
    }

    #[test]
    fn sine_derivatives_at_origin() {
        let g = grid(1, 1.0, 0.01);
        let f = ScalarField::sample(&g, |x| x[0].sin()).unwrap();
        let o = g.flat_index(&[g.half_points()]);
        // truncation: h²/6·|u'''| and h²/12·|u''''| at 0
        let grad = gradient(&f).unwrap();
        assert!((grad.get(o).unwrap()[0] - 1.0).abs() <= 1e-4);
        assert!((grad.get(o).unwrap()[0] - 1.0).abs() <= 0.01f64.powi(2) / 6.0 * 1.01);
        let hess = hessian(&f).unwrap();
        assert!(hess.get(o).unwrap().get(0, 0).abs() <= 1e-4);
    }

    #[test]
    fn sup_norm_examples() {
        for n in 1..=3 {
            let g = grid(n, 1.0, 0.25);
            let f =
                ScalarField::sample(&g, |x| 0.5 * x.iter().map(|c| c * c).sum::<f64>()).unwrap();
            assert_abs_diff_eq!(
                sup_derivative_norm(&f, 2).unwrap(),
                (n as f64).sqrt(),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(sup_derivative_norm(&f, 3).unwrap(), 0.0, epsilon = 1e-10);
        }
        let g = grid(1, 1.0, 0.1);
        let f = ScalarField::sample(&g, |x| x[0].powi(3)).unwrap();
        // centered differences reproduce (x³)''' = 6 up to rounding
        assert_abs_diff_eq!(sup_derivative_norm(&f, 3).unwrap(), 6.0, epsilon = 1e-9);
        assert!(sup_derivative_norm(&f, 4).is_err());
    }

    #[test]
    fn third_differences_exact_on_cubic_monomials() {
        let g = grid(2, 1.0, 0.125);
        let f = ScalarField::sample(&g, |x| x[0] * x[0] * x[1]).unwrap();
        for (_, t) in third_derivatives(&f).unwrap().interior() {
            assert_abs_diff_eq!(t.get(0, 0, 1), 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(t.get(0, 1, 0), 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(t.get(1, 1, 0), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn interpolation_is_exact_on_multilinear_functions() {
        let g = grid(2, 1.0, 0.25);
        let f = ScalarField::sample(&g, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]).unwrap();
        let v = f.interpolate(&[0.33, -0.71]).unwrap();
        assert_abs_diff_eq!(v, 1.0 + 0.66 + 0.71 - 0.5 * 0.33 * 0.71, epsilon = 1e-14);
        assert_eq!(f.interpolate(&[1.0, 1.0]).unwrap(), f.values()[g.len() - 1]);
        assert!(matches!(
            f.interpolate(&[1.01, 0.0]),
            Err(Error::OutOfBox { .. })
        ));
    }

    #[test]
    fn rescale_quadratic_about_center() {
        let src = grid(2, 2.0, 0.05);
        let x0 = [0.3, -0.2];
        let c = 1.7;
        let q = |x: &[f64]| 0.5 * c * ((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2));
        let f = ScalarField::sample(&src, q).unwrap();
        for sigma in [1.0, 2.0, 4.0] {
            // target spacing σ·h puts every mapped point on a source node
            let target = grid(2, 1.0, 0.05 * sigma);
            let r = parabolic_rescale(&f, &x0, 0.0, &[0.0, 0.0], sigma, &target).unwrap();
            let want =
                ScalarField::sample(&target, |y| 0.5 * c * (y[0] * y[0] + y[1] * y[1])).unwrap();
            assert!(r.sup_distance(&want).unwrap() <= 1e-11, "sigma = {sigma}");
        }
        // off-node: the only error is multilinear interpolation, σ²·c·h²/8 per axis
        let target = grid(2, 1.0, 0.1);
        let r = parabolic_rescale(&f, &x0, 0.0, &[0.0, 0.0], 3.0, &target).unwrap();
        let want = ScalarField::sample(&target, |y| 0.5 * c * (y[0] * y[0] + y[1] * y[1])).unwrap();
        assert!(r.sup_distance(&want).unwrap() <= 9.0 * c * 0.05 * 0.05 / 4.0);
        assert!(parabolic_rescale(&f, &x0, 0.0, &[0.0, 0.0], 0.5, &target).is_err());
    }

    #[test]
    fn rescale_scales_derivatives() {
        // D^l_y u_σ = σ^{2−l} D^l_x u at matching points
        let src = grid(2, 2.0, 0.05);
        let u = |x: &[f64]| (x[0] + 0.3).sin() * (0.7 * x[1]).cos() + 0.2 * x[0].powi(3);
        let f = ScalarField::sample(&src, u).unwrap();
        let x0 = [0.2, -0.1];
        let c0 = u(&x0);
        let g0 = [
            (x0[0] + 0.3).cos() * (0.7 * x0[1]).cos() + 0.6 * x0[0] * x0[0],
            -0.7 * (x0[0] + 0.3).sin() * (0.7 * x0[1]).sin(),
        ];
        let sigma = 2.0;
        let target = grid(2, 1.0, 0.1);
        let r = parabolic_rescale(&f, &x0, c0, &g0, sigma, &target).unwrap();
        let hs = hessian(&f).unwrap();
        let ht = hessian(&r).unwrap();
        let ts = third_derivatives(&f).unwrap();
        let tt = third_derivatives(&r).unwrap();
        for (p, hy) in tt.interior() {
            let y = target.point(p);
            let x = [x0[0] + y[0] / sigma, x0[1] + y[1] / sigma];
            let idx = [
                ((x[0] + 2.0) / 0.05).round() as usize,
                ((x[1] + 2.0) / 0.05).round() as usize,
            ];
            let q = src.flat_index(&idx);
            let hx = ts.get(q).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!(
                        ht.get(p).unwrap().get(i, j),
                        hs.get(q).unwrap().get(i, j),
                        epsilon = 1e-8
                    );
                    for k in 0..2 {
                        assert_abs_diff_eq!(
                            hy.get(i, j, k),
                            hx.get(i, j, k) / sigma,
                            epsilon = 1e-7
                        );
                    }
                }
            }
        }
        assert_abs_diff_eq!(
            r.values()[target.flat_index(&[10, 10])],
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rescale_identity() {
        let g = grid(2, 1.0, 0.1);
        let f = ScalarField::sample(&g, |x| x[0] * x[0] * x[1] + x[1].powi(4)).unwrap();
        let r = parabolic_rescale(&f, &[0.0, 0.0], 0.0, &[0.0, 0.0], 1.0, &g).unwrap();
        assert!(r.sup_distance(&f).unwrap() <= 1e-14);
    }
}

//! Small dense linear algebra, central differences, composite quadrature and a
//! classical fixed-step RK4 stepper.
//!
//! Everything here works on plain `f64` slices; dimensions in this crate are
//! tiny (d <= 3 for the built-in manifolds), so no BLAS-style machinery.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major n x n matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::identity(n);
        m.scale(s);
        m
    }

    /// Builds a matrix from rows. Panics if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix rows must have length {n}");
            data.extend_from_slice(r);
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// vᵀ M w
    pub fn bilinear(&self, v: &[f64], w: &[f64]) -> f64 {
        v.iter().zip(self.mul_vec(w)).map(|(a, b)| a * b).sum()
    }

    /// Max-norm (largest absolute entry).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest entrywise deviation between two matrices of equal size.
    pub fn max_diff(&self, other: &SquareMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

const PIVOT_REL_THRESHOLD: f64 = 1e-13;

/// LU factorization with partial pivoting; returns (packed LU, permutation).
fn lu_decompose(a: &SquareMatrix) -> Result<(SquareMatrix, Vec<usize>)> {
    let n = a.dim();
    let threshold = PIVOT_REL_THRESHOLD * a.max_abs();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, lu[(r, col)]))
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("non-empty pivot range");
        if pivot.abs() <= threshold || pivot == 0.0 {
            return Err(Error::SingularMatrix {
                pivot: pivot.abs(),
                threshold,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = lu[(col, j)];
                lu[(col, j)] = lu[(pivot_row, j)];
                lu[(pivot_row, j)] = tmp;
            }
            perm.swap(col, pivot_row);
        }
        for r in (col + 1)..n {
            let factor = lu[(r, col)] / pivot;
            lu[(r, col)] = factor;
            for j in (col + 1)..n {
                lu[(r, j)] -= factor * lu[(col, j)];
            }
        }
    }
    Ok((lu, perm))
}

fn lu_solve(lu: &SquareMatrix, perm: &[usize], b: &[f64]) -> Vec<f64> {
    let n = lu.dim();
    let mut y: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for j in 0..i {
            y[i] -= lu[(i, j)] * y[j];
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            y[i] -= lu[(i, j)] * y[j];
        }
        y[i] /= lu[(i, i)];
    }
    y
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::InvalidInput(format!(
            "right-hand side has length {}, matrix is {}x{}",
            b.len(),
            a.dim(),
            a.dim()
        )));
    }
    if a.dim() == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let (lu, perm) = lu_decompose(a)?;
    Ok(lu_solve(&lu, &perm, b))
}

pub fn invert(a: &SquareMatrix) -> Result<SquareMatrix> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let (lu, perm) = lu_decompose(a)?;
    let mut inv = SquareMatrix::zeros(n);
    let mut e = vec![0.0; n];
    for col in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[col] = 1.0;
        let x = lu_solve(&lu, &perm, &e);
        for (row, v) in x.into_iter().enumerate() {
            inv[(row, col)] = v;
        }
    }
    Ok(inv)
}

/// Step size for central differences, in coordinate units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffConfig {
    step: f64,
}

impl FiniteDiffConfig {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "finite-difference step must be positive, got {step}"
            )));
        }
        Ok(Self { step })
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

impl Default for FiniteDiffConfig {
    fn default() -> Self {
        Self { step: 1e-5 }
    }
}

/// `(f(x + h e_k) - f(x - h e_k)) / 2h`
pub fn central_diff<F>(f: F, x: &[f64], k: usize, cfg: &FiniteDiffConfig) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if k >= x.len() {
        return Err(Error::InvalidInput(format!(
            "axis {k} out of range for a {}-tuple",
            x.len()
        )));
    }
    let h = cfg.step;
    let mut probe = x.to_vec();
    probe[k] = x[k] + h;
    let plus = f(&probe);
    probe[k] = x[k] - h;
    let minus = f(&probe);
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFiniteSample(format!(
            "central difference along axis {k} at {x:?}"
        )));
    }
    Ok((plus - minus) / (2.0 * h))
}

/// Composite Simpson rule with a fixed, even panel count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    panels: usize,
}

impl QuadratureConfig {
    pub fn new(panels: usize) -> Result<Self> {
        if panels < 2 || !panels.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "Simpson panel count must be even and >= 2, got {panels}"
            )));
        }
        Ok(Self { panels })
    }

    pub fn panels(&self) -> usize {
        self.panels
    }
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { panels: 256 }
    }
}

/// Composite Simpson on `[a, b]`.
pub fn integrate_scalar<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a < b) {
        return Err(Error::InvalidInput(format!(
            "integration bounds must satisfy a < b, got [{a}, {b}]"
        )));
    }
    let n = cfg.panels;
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let x = if i == n { b } else { a + i as f64 * h };
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::NonFiniteSample(format!("integrand at {x}")));
        }
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * fx;
    }
    Ok(acc * h / 3.0)
}

/// Integrates tabulated values over their nodes.
///
/// Uniform grids use composite Simpson (with a 3/8 tail when the interval
/// count is odd); non-uniform grids use pairwise non-uniform Simpson and a
/// quadratic correction on a trailing odd interval. Two nodes fall back to the
/// trapezoid rule.
pub fn integrate_samples(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput("node/value length mismatch".into()));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: xs.len(),
        });
    }
    if let Some(y) = ys.iter().find(|y| !y.is_finite()) {
        return Err(Error::NonFiniteSample(format!("tabulated integrand value {y}")));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("nodes must be strictly increasing".into()));
    }
    let intervals = xs.len() - 1;
    if intervals == 1 {
        return Ok(0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]));
    }
    let h = (xs[intervals] - xs[0]) / intervals as f64;
    let uniform = xs.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    if uniform {
        Ok(uniform_simpson(ys, h))
    } else {
        Ok(nonuniform_simpson(xs, ys))
    }
}

fn uniform_simpson(ys: &[f64], h: f64) -> f64 {
    let intervals = ys.len() - 1;
    let simpson = |ys: &[f64]| -> f64 {
        let n = ys.len() - 1;
        let mut acc = ys[0] + ys[n];
        for (i, y) in ys.iter().enumerate().take(n).skip(1) {
            acc += if i % 2 == 1 { 4.0 * y } else { 2.0 * y };
        }
        acc * h / 3.0
    };
    if intervals.is_multiple_of(2) {
        return simpson(ys);
    }
    // odd interval count: Simpson on the head, 3/8 rule on the last three intervals
    let split = intervals - 3;
    let tail = &ys[split..];
    let three_eighths = 3.0 * h / 8.0 * (tail[0] + 3.0 * tail[1] + 3.0 * tail[2] + tail[3]);
    if split == 0 {
        three_eighths
    } else {
        simpson(&ys[..=split]) + three_eighths
    }
}

fn nonuniform_simpson(xs: &[f64], ys: &[f64]) -> f64 {
    let intervals = xs.len() - 1;
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 <= intervals {
        let h0 = xs[i + 1] - xs[i];
        let h1 = xs[i + 2] - xs[i + 1];
        let hs = h0 + h1;
        acc += hs / 6.0 * ((2.0 - h1 / h0) * ys[i] + hs * hs / (h0 * h1) * ys[i + 1] + (2.0 - h0 / h1) * ys[i + 2]);
        i += 2;
    }
    if intervals % 2 == 1 {
        let n = xs.len();
        let h0 = xs[n - 2] - xs[n - 3];
        let h1 = xs[n - 1] - xs[n - 2];
        acc += ys[n - 1] * (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1))
            + ys[n - 2] * (h1 * h1 + 3.0 * h1 * h0) / (6.0 * h0)
            - ys[n - 3] * h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
    }
    acc
}

/// Weights `w` such that `Σ w_i f(nodes_i)` is the derivative at `at` of the
/// interpolating polynomial through the nodes.
pub fn derivative_weights(nodes: &[f64], at: f64) -> Vec<f64> {
    let m = nodes.len();
    (0..m)
        .map(|j| {
            let denom: f64 = (0..m).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product();
            let numer: f64 = (0..m)
                .filter(|&i| i != j)
                .map(|i| {
                    (0..m)
                        .filter(|&k| k != j && k != i)
                        .map(|k| at - nodes[k])
                        .product::<f64>()
                })
                .sum();
            numer / denom
        })
        .collect()
}

/// One classical fourth-order Runge-Kutta step of size `h` from `(lambda, state)`.
pub fn rk4_step<F>(mut rhs: F, state: &[f64], lambda: f64, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let check = |k: Vec<f64>, stage: usize| -> Result<Vec<f64>> {
        if k.len() != state.len() {
            return Err(Error::InvalidInput(format!(
                "rhs returned {} components for a {}-state",
                k.len(),
                state.len()
            )));
        }
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample(format!(
                "RK4 stage {stage} at lambda = {lambda}"
            )));
        }
        Ok(k)
    };
    let k1 = check(rhs(lambda, state)?, 1)?;
    let k2 = check(rhs(lambda + 0.5 * h, &axpy(state, &k1, 0.5 * h))?, 2)?;
    let k3 = check(rhs(lambda + 0.5 * h, &axpy(state, &k2, 0.5 * h))?, 3)?;
    let k4 = check(rhs(lambda + h, &axpy(state, &k3, h))?, 4)?;
    let next: Vec<f64> = (0..state.len())
        .map(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteSample(format!("RK4 update at lambda = {lambda}")));
    }
    Ok(next)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

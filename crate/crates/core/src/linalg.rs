//! Small dense linear algebra for the regression kernels.
//!
//! Design matrices here are short and fat-free (a treatment column plus a
//! few dozen bin indicators), so a plain Cholesky on the normal equations is
//! both the fastest and the most transparent route. Everything is generic
//! over [`Scalar`]; the pipeline instantiates `f64`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    /// Build from explicit rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut S {
        &mut self.data[i * self.cols + j]
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, other.rows, "shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.at(i, l);
                if a == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    *out.at_mut(i, j) += a * other.at(l, j);
                }
            }
        }
        out
    }
}

/// X'WX for a diagonal weight vector (k × k, symmetric).
pub fn xtwx<S: Scalar>(x: &Mat<S>, w: &[S]) -> Mat<S> {
    let (n, k) = (x.rows(), x.cols());
    assert_eq!(w.len(), n);
    let mut a = Mat::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i);
        let wi = w[i];
        for p in 0..k {
            let wxp = wi * xi[p];
            if wxp == S::zero() {
                continue;
            }
            for q in p..k {
                *a.at_mut(p, q) += wxp * xi[q];
            }
        }
    }
    for p in 0..k {
        for q in 0..p {
            *a.at_mut(p, q) = a.at(q, p);
        }
    }
    a
}

/// X'Wy for a diagonal weight vector.
pub fn xtwy<S: Scalar>(x: &Mat<S>, w: &[S], y: &[S]) -> Vec<S> {
    let (n, k) = (x.rows(), x.cols());
    assert_eq!(w.len(), n);
    assert_eq!(y.len(), n);
    let mut b = vec![S::zero(); k];
    for i in 0..n {
        let xi = x.row(i);
        let wy = w[i] * y[i];
        if wy == S::zero() {
            continue;
        }
        for p in 0..k {
            b[p] += xi[p] * wy;
        }
    }
    b
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails with a numerical error when a pivot collapses relative to the
/// largest diagonal entry — the caller's design matrix is rank-deficient.
pub fn cholesky<S: Scalar>(a: &Mat<S>) -> Result<Mat<S>> {
    let k = a.rows();
    assert_eq!(k, a.cols(), "cholesky needs a square matrix");
    let mut diag_max = S::zero();
    for p in 0..k {
        diag_max = diag_max.max(a.at(p, p).abs());
    }
    let tol = diag_max * S::epsilon() * S::from_usize(64 * k.max(1));
    let mut l = Mat::zeros(k, k);
    for p in 0..k {
        for q in 0..=p {
            let mut s = a.at(p, q);
            for r in 0..q {
                s -= l.at(p, r) * l.at(q, r);
            }
            if p == q {
                if s <= tol {
                    return Err(Error::numerical(format!(
                        "normal equations not positive definite at pivot {p} (value {s})"
                    )));
                }
                *l.at_mut(p, p) = s.sqrt();
            } else {
                *l.at_mut(p, q) = s / l.at(q, q);
            }
        }
    }
    Ok(l)
}

/// Solve `L L' x = b` given the lower Cholesky factor.
pub fn solve_chol<S: Scalar>(l: &Mat<S>, b: &[S]) -> Vec<S> {
    let k = l.rows();
    assert_eq!(b.len(), k);
    let mut y = b.to_vec();
    for p in 0..k {
        for r in 0..p {
            let v = l.at(p, r) * y[r];
            y[p] = y[p] - v;
        }
        y[p] = y[p] / l.at(p, p);
    }
    for p in (0..k).rev() {
        for r in p + 1..k {
            let v = l.at(r, p) * y[r];
            y[p] = y[p] - v;
        }
        y[p] = y[p] / l.at(p, p);
    }
    y
}

/// Full inverse from a lower Cholesky factor (column-by-column solves).
pub fn inv_from_chol<S: Scalar>(l: &Mat<S>) -> Mat<S> {
    let k = l.rows();
    let mut inv = Mat::zeros(k, k);
    let mut e = vec![S::zero(); k];
    for j in 0..k {
        e[j] = S::one();
        let col = solve_chol(l, &e);
        e[j] = S::zero();
        for i in 0..k {
            *inv.at_mut(i, j) = col[i];
        }
    }
    inv
}

/// Quadratic form `c' V c` (contrast variance).
pub fn quad_form<S: Scalar>(v: &Mat<S>, c: &[S]) -> S {
    let k = v.rows();
    assert_eq!(c.len(), k);
    let mut s = S::zero();
    for p in 0..k {
        if c[p] == S::zero() {
            continue;
        }
        for q in 0..k {
            s += c[p] * v.at(p, q) * c[q];
        }
    }
    s
}

/// Weighted least-squares fit.
#[derive(Clone, Debug)]
pub struct WlsFit<S> {
    pub coef: Vec<S>,
    /// (X'WX)^{-1}, the sandwich bread.
    pub xtwx_inv: Mat<S>,
    pub fitted: Vec<S>,
    pub residuals: Vec<S>,
}

/// Weighted least squares via Cholesky on the normal equations.
pub fn wls<S: Scalar>(x: &Mat<S>, y: &[S], w: &[S]) -> Result<WlsFit<S>> {
    let (n, k) = (x.rows(), x.cols());
    if n < k {
        return Err(Error::numerical(format!(
            "underdetermined regression: {n} rows for {k} columns"
        )));
    }
    let a = xtwx(x, w);
    let b = xtwy(x, w, y);
    let l = cholesky(&a)?;
    let coef = solve_chol(&l, &b);
    let xtwx_inv = inv_from_chol(&l);
    let mut fitted = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.row(i);
        let mut f = S::zero();
        for p in 0..k {
            f += xi[p] * coef[p];
        }
        fitted.push(f);
        residuals.push(y[i] - f);
    }
    Ok(WlsFit { coef, xtwx_inv, fitted, residuals })
}

/// Sandwich `B M B` with symmetric bread `B`.
pub fn sandwich<S: Scalar>(bread: &Mat<S>, meat: &Mat<S>) -> Mat<S> {
    bread.matmul(meat).matmul(bread)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_system(n: usize, k: usize, seed: u64) -> (Mat<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = crate::rng::substream(seed, "linalg-test", 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r: Vec<f64> = (0..k - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
                r.insert(0, 1.0);
                r
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
        (Mat::from_rows(&rows), y, w)
    }

    #[test]
    fn wls_matches_nalgebra_solution() {
        for seed in 0..20 {
            let (x, y, w) = random_system(60, 7, seed);
            let fit = wls(&x, &y, &w).unwrap();

            // independent route: nalgebra SVD least squares on the
            // sqrt(W)-scaled system
            let xs = nalgebra::DMatrix::from_fn(60, 7, |i, j| w[i].sqrt() * x.at(i, j));
            let ys = nalgebra::DVector::from_fn(60, |i, _| w[i].sqrt() * y[i]);
            let sol = xs.svd(true, true).solve(&ys, 1e-12).expect("full-rank system");
            for p in 0..7 {
                assert!(
                    (fit.coef[p] - sol[p]).abs() < 1e-8,
                    "coef {p}: {} vs {}",
                    fit.coef[p],
                    sol[p]
                );
            }
        }
    }

    #[test]
    fn inverse_really_inverts() {
        let (x, _, w) = random_system(40, 5, 3);
        let a = xtwx(&x, &w);
        let l = cholesky(&a).unwrap();
        let inv = inv_from_chol(&l);
        let prod = a.matmul(&inv);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.at(i, j) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_design_is_reported() {
        // duplicated column
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, i as f64]).collect();
        let x = Mat::from_rows(&rows);
        let y = vec![1.0; 10];
        let w = vec![1.0; 10];
        match wls(&x, &y, &w) {
            Err(crate::Error::Numerical(_)) => {}
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn kernels_instantiate_at_f32() {
        let rows: Vec<Vec<f32>> = vec![
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
        ];
        let x = Mat::from_rows(&rows);
        let y = vec![1.0f32, 3.0, 5.0, 7.0];
        let w = vec![1.0f32; 4];
        let fit = wls(&x, &y, &w).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-5);
        assert!((fit.coef[1] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn quad_form_matches_manual() {
        let v = Mat::<f64>::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let c = vec![1.0, -1.0];
        // 2 - 0.5 - 0.5 + 1 = 2
        assert!((quad_form(&v, &c) - 2.0).abs() < 1e-12);
    }
}

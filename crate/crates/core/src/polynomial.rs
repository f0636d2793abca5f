//! Matrix polynomials with exact derivatives of every order.
//!
//! Polynomials are stored in the affinely mapped variable `u = (2t-a-b)/(b-a)`
//! on `[-1, 1]`, which keeps least-squares fitting well conditioned; the chain
//! rule factor `(2/(b-a))^d` restores derivatives with respect to `t`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::grid::CoefficientFunction;
use crate::{Error, Result};

/// Polynomial with matrix coefficients in the mapped variable `u`.
#[derive(Debug, Clone)]
pub struct MatrixPolynomial {
    a: f64,
    b: f64,
    rows: usize,
    cols: usize,
    /// coefficient of `u^j` at index `j`
    coeffs: Vec<DMatrix<Complex64>>,
}

impl MatrixPolynomial {
    pub fn new(a: f64, b: f64, coeffs: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "MatrixPolynomial::new",
                expected: "at least one coefficient".into(),
                actual: "0".into(),
            });
        }
        let (rows, cols) = (coeffs[0].nrows(), coeffs[0].ncols());
        if coeffs.iter().any(|m| m.nrows() != rows || m.ncols() != cols) {
            return Err(Error::DimensionMismatch {
                context: "MatrixPolynomial::new",
                expected: format!("{rows}x{cols} for every coefficient"),
                actual: "mixed shapes".into(),
            });
        }
        Ok(Self { a, b, rows, cols, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn map(&self, t: f64) -> f64 {
        (2.0 * t - self.a - self.b) / (self.b - self.a)
    }

    /// `d`-th derivative with respect to `t`, exact for every `d`.
    pub fn evaluate(&self, t: f64, d: usize) -> DMatrix<Complex64> {
        let u = self.map(t);
        let mut acc = DMatrix::zeros(self.rows, self.cols);
        // Horner evaluation of the d-times differentiated series in u.
        for j in (d..self.coeffs.len()).rev() {
            let mut fall = 1.0;
            for k in 0..d {
                fall *= (j - k) as f64;
            }
            acc = acc * Complex64::new(u, 0.0) + &self.coeffs[j] * Complex64::new(fall, 0.0);
        }
        let chain = (2.0 / (self.b - self.a)).powi(d as i32);
        acc * Complex64::new(chain, 0.0)
    }

    /// Wraps the polynomial as an analytic coefficient evaluator.
    pub fn into_coefficient(self, max_order: usize) -> CoefficientFunction {
        let (rows, cols) = (self.rows, self.cols);
        CoefficientFunction::new(rows, cols, max_order, move |t, d| self.evaluate(t, d))
    }
}

/// Values of the Legendre polynomials `P_0..P_degree` and their `u`-derivatives
/// up to `max_deriv` at the point `u`, as `values[d][q] = P_q^(d)(u)`.
///
/// Uses the differentiated three-term recurrence
/// `(q+1) P_{q+1}^(d) = (2q+1)(u P_q^(d) + d P_q^(d-1)) - q P_{q-1}^(d)`.
pub fn legendre_values(u: f64, degree: usize, max_deriv: usize) -> Vec<Vec<f64>> {
    let mut v = vec![vec![0.0; degree + 1]; max_deriv + 1];
    v[0][0] = 1.0;
    if degree == 0 {
        return v;
    }
    v[0][1] = u;
    if max_deriv >= 1 {
        v[1][1] = 1.0;
    }
    for q in 1..degree {
        for d in 0..=max_deriv {
            let lower = if d > 0 { v[d - 1][q] } else { 0.0 };
            let prev = v[d][q - 1];
            let cur = v[d][q];
            v[d][q + 1] =
                ((2 * q + 1) as f64 * (u * cur + d as f64 * lower) - q as f64 * prev) / (q + 1) as f64;
        }
    }
    v
}

/// Monomial coefficients (in `u`) of `P_0..P_degree`, row `q` holding `P_q`.
pub fn legendre_monomial_coeffs(degree: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    rows.push(vec![1.0]);
    if degree == 0 {
        return rows;
    }
    rows.push(vec![0.0, 1.0]);
    for q in 1..degree {
        let mut next = vec![0.0; q + 2];
        for (j, c) in rows[q].iter().enumerate() {
            next[j + 1] += (2 * q + 1) as f64 * c / (q + 1) as f64;
        }
        for (j, c) in rows[q - 1].iter().enumerate() {
            next[j] -= q as f64 * c / (q + 1) as f64;
        }
        rows.push(next);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn evaluates_polynomial_and_derivatives() {
        // p(u) = 1 + 2u + 3u^2 on [0,1], u = 2t-1
        let coeffs = vec![
            DMatrix::from_element(1, 1, c(1.0)),
            DMatrix::from_element(1, 1, c(2.0)),
            DMatrix::from_element(1, 1, c(3.0)),
        ];
        let p = MatrixPolynomial::new(0.0, 1.0, coeffs).unwrap();
        let t = 0.75;
        let u = 2.0 * t - 1.0;
        assert!((p.evaluate(t, 0)[(0, 0)].re - (1.0 + 2.0 * u + 3.0 * u * u)).abs() < 1e-14);
        // d/dt = 2 d/du
        assert!((p.evaluate(t, 1)[(0, 0)].re - 2.0 * (2.0 + 6.0 * u)).abs() < 1e-14);
        assert!((p.evaluate(t, 2)[(0, 0)].re - 4.0 * 6.0).abs() < 1e-14);
        assert_eq!(p.evaluate(t, 3)[(0, 0)], c(0.0));
    }

    #[test]
    fn legendre_recurrences_agree() {
        // P_3(u) = (5u^3 - 3u)/2, P_3'(u) = (15u^2 - 3)/2
        let u = 0.3;
        let v = legendre_values(u, 4, 2);
        assert!((v[0][3] - (5.0 * u.powi(3) - 3.0 * u) / 2.0).abs() < 1e-14);
        assert!((v[1][3] - (15.0 * u * u - 3.0) / 2.0).abs() < 1e-14);
        let coeffs = legendre_monomial_coeffs(4);
        let eval = |row: &Vec<f64>, x: f64| {
            row.iter().rev().fold(0.0, |acc, c| acc * x + c)
        };
        for q in 0..=4 {
            assert!((eval(&coeffs[q], u) - v[0][q]).abs() < 1e-13);
        }
    }
}

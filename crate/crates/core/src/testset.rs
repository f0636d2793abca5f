//! Seeded, reproducible test-function and right-hand-side generators shared
//! by the convergence checkers, the approximation pipeline, and the tests.
//!
//! Boundary-operator convergence "for all y" is probed on a finite set: the
//! monomial matrix functions `t^s I_m` (enough to separate every coefficient)
//! plus seeded trigonometric combinations. Right-hand-side sets for inverse
//! comparisons also carry localized Gaussian bumps so that density mismatches
//! concentrated near a point can be excited at all.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{sample, CoefficientFunction, Grid, GridFunction};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Monomial matrix function `t^s I_m` with its derivative stack.
pub fn monomial_matrix(grid: Grid, m: usize, s: usize, max_order: usize) -> GridFunction {
    let mut out = GridFunction::zeros(grid, m, m, max_order);
    for d in 0..=max_order.min(s) {
        let mut fall = 1.0;
        for k in 0..d {
            fall *= (s - k) as f64;
        }
        for i in 0..grid.node_count() {
            let v = fall * grid.node(i).powi((s - d) as i32);
            for j in 0..m {
                out.set_entry(d, i, j, j, c(v));
            }
        }
    }
    out
}

/// Trigonometric sum with exact derivatives:
/// `sum_k a_k sin(w_k t + phase_k)` per entry, on the grid's interval.
fn trig_coefficient(
    grid: Grid,
    rows: usize,
    cols: usize,
    max_order: usize,
    rng: &mut ChaCha8Rng,
) -> CoefficientFunction {
    let base = std::f64::consts::PI / (grid.b() - grid.a());
    let mut terms: Vec<(usize, usize, f64, f64, f64)> = Vec::new();
    for r in 0..rows {
        for col in 0..cols {
            for k in 1..=3usize {
                let amp = rng.gen_range(-1.0..1.0);
                let omega = k as f64 * base;
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                terms.push((r, col, amp, omega, phase));
            }
        }
    }
    CoefficientFunction::new(rows, cols, max_order, move |t, d| {
        let mut out = DMatrix::zeros(rows, cols);
        for &(r, col, amp, omega, phase) in &terms {
            let angle = omega * t + phase + d as f64 * std::f64::consts::FRAC_PI_2;
            out[(r, col)] += c(amp * omega.powi(d as i32) * angle.sin());
        }
        out
    })
}

/// `count` seeded random trigonometric functions of shape `rows x cols` with
/// derivative stacks up to `max_order`.
pub fn random_trig_functions(
    grid: Grid,
    rows: usize,
    cols: usize,
    max_order: usize,
    count: usize,
    seed: u64,
) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coef = trig_coefficient(grid, rows, cols, max_order, &mut rng);
            sample(&coef, grid, max_order).expect("trig samples are finite")
        })
        .collect()
}

/// Test set for the boundary-operator convergence checks: monomials
/// `t^s I_m` up to degree `order + 2` plus 10 seeded trigonometric matrix
/// functions.
pub fn boundary_test_set(grid: Grid, m: usize, order: usize, seed: u64) -> Vec<GridFunction> {
    let mut set: Vec<GridFunction> = (0..=(order + 2))
        .map(|s| monomial_matrix(grid, m, s, order))
        .collect();
    set.extend(random_trig_functions(grid, m, m, order, 10, seed));
    set
}

/// Gaussian bump `exp(-((t - center)/width)^2)` with exact derivatives via
/// the Hermite recurrence.
pub fn gaussian_bump(center: f64, width: f64, max_order: usize) -> CoefficientFunction {
    CoefficientFunction::scalar(max_order, move |t, d| {
        let u = (t - center) / width;
        // physicists' Hermite polynomials: H_{k+1} = 2u H_k - 2k H_{k-1}
        let mut h_prev = 0.0;
        let mut h = 1.0;
        for k in 0..d {
            let next = 2.0 * u * h - 2.0 * k as f64 * h_prev;
            h_prev = h;
            h = next;
        }
        let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
        c(sign * h * (-u * u).exp() / width.powi(d as i32))
    })
}

/// Seeded right-hand-side pairs `(f, c)` for inverse-operator comparisons:
/// trigonometric `f` plus dyadic-width Gaussian bumps, with random boundary
/// vectors.
pub fn random_rhs_set(
    grid: Grid,
    m: usize,
    n: usize,
    ell: usize,
    count: usize,
    seed: u64,
) -> Vec<(CoefficientFunction, DVector<Complex64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let span = grid.b() - grid.a();
    for idx in 0..count {
        let f = if idx % 3 == 2 {
            // localized bump at a random position, width shrinking dyadically
            let center = grid.a() + span * rng.gen_range(0.2..0.8);
            let width = span * 2.0f64.powi(-(2 + (idx as i32 / 3) % 5));
            let bump = gaussian_bump(center, width, n);
            if m == 1 {
                bump
            } else {
                let row = rng.gen_range(0..m);
                CoefficientFunction::new(m, 1, n, move |t, d| {
                    let mut v = DMatrix::zeros(m, 1);
                    v[(row, 0)] = bump.evaluate(t, d).expect("within order")[(0, 0)];
                    v
                })
            }
        } else {
            trig_coefficient(grid, m, 1, n, &mut rng)
        };
        let cvec = DVector::from_fn(ell, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        out.push((f, cvec));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomials_have_exact_derivatives() {
        let grid = Grid::new(0.0, 2.0, 8).unwrap();
        let f = monomial_matrix(grid, 2, 3, 4);
        let t = grid.node(5);
        assert_eq!(f.entry(0, 5, 0, 0), c(t.powi(3)));
        assert_eq!(f.entry(1, 5, 1, 1), c(3.0 * t * t));
        assert_eq!(f.entry(2, 5, 0, 0), c(6.0 * t));
        assert_eq!(f.entry(3, 5, 0, 0), c(6.0));
        assert_eq!(f.entry(4, 5, 0, 0), c(0.0));
        assert_eq!(f.entry(1, 5, 0, 1), c(0.0));
    }

    #[test]
    fn generators_are_deterministic() {
        let grid = Grid::new(0.0, 1.0, 16).unwrap();
        let a = random_trig_functions(grid, 1, 1, 2, 3, 42);
        let b = random_trig_functions(grid, 1, 1, 2, 3, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let g = gaussian_bump(0.5, 0.1, 3);
        let eps = 1e-6;
        for d in 0..3 {
            for t in [0.4, 0.5, 0.62] {
                let fd = (g.evaluate(t + eps, d).unwrap()[(0, 0)]
                    - g.evaluate(t - eps, d).unwrap()[(0, 0)])
                    / c(2.0 * eps);
                let an = g.evaluate(t, d + 1).unwrap()[(0, 0)];
                assert!(
                    (fd - an).norm() < 1e-3 * (1.0 + an.norm()),
                    "order {d} at {t}: {fd} vs {an}"
                );
            }
        }
    }
}

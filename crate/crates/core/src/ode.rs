//! Companion-system reduction, Cauchy problem integration, Leibniz lifting of
//! higher derivatives, and fundamental-matrix construction.
//!
//! An r-th order system
//!
//! ```text
//! y^(r) + A_{r-1}(t) y^(r-1) + ... + A_0(t) y = f(t)
//! ```
//!
//! is rewritten as the first-order companion system `x' + K(t) x = g(t)` on
//! the state `x = (y, y', ..., y^(r-1))` and integrated with classical
//! fixed-step RK4 at the grid spacing, which matches the `O(N^-4)` accuracy of
//! the Simpson quadrature used for norms. Derivatives of orders `r..n+r` are
//! recovered analytically from the differentiated equation (Leibniz rule), so
//! the returned derivative stacks never involve numerical differentiation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::grid::{sample, CoefficientFunction, Grid, GridFunction};
use crate::{Error, Result};

/// Linear differential system of order `r` and dimension `m` with
/// coefficients of smoothness order `n`.
///
/// `coefficients[j]` is the matrix `A_j` multiplying `y^(j)`; the leading
/// coefficient of `y^(r)` is the identity.
#[derive(Debug, Clone)]
pub struct DifferentialSystem {
    m: usize,
    r: usize,
    n: usize,
    coefficients: Vec<CoefficientFunction>,
    rhs: CoefficientFunction,
}

impl DifferentialSystem {
    pub fn new(
        m: usize,
        r: usize,
        n: usize,
        coefficients: Vec<CoefficientFunction>,
        rhs: CoefficientFunction,
    ) -> Result<Self> {
        if m < 1 || r < 1 {
            return Err(Error::DimensionMismatch {
                context: "DifferentialSystem::new",
                expected: "m >= 1 and r >= 1".into(),
                actual: format!("m = {m}, r = {r}"),
            });
        }
        if coefficients.len() != r {
            return Err(Error::DimensionMismatch {
                context: "DifferentialSystem::new",
                expected: format!("{r} coefficient matrices"),
                actual: format!("{}", coefficients.len()),
            });
        }
        for (j, a) in coefficients.iter().enumerate() {
            if a.rows() != m || a.cols() != m {
                return Err(Error::DimensionMismatch {
                    context: "DifferentialSystem::new",
                    expected: format!("A_{j} of shape {m}x{m}"),
                    actual: format!("{}x{}", a.rows(), a.cols()),
                });
            }
            if a.max_order() < n {
                return Err(Error::OrderOutOfRange {
                    requested: n,
                    max: a.max_order(),
                });
            }
        }
        if rhs.rows() != m || rhs.cols() != 1 {
            return Err(Error::DimensionMismatch {
                context: "DifferentialSystem::new",
                expected: format!("rhs of shape {m}x1"),
                actual: format!("{}x{}", rhs.rows(), rhs.cols()),
            });
        }
        if rhs.max_order() < n {
            return Err(Error::OrderOutOfRange {
                requested: n,
                max: rhs.max_order(),
            });
        }
        Ok(Self {
            m,
            r,
            n,
            coefficients,
            rhs,
        })
    }

    pub fn dimension(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn smoothness(&self) -> usize {
        self.n
    }

    /// Solution order `n + r` of the Sobolev space the solutions live in.
    pub fn solution_order(&self) -> usize {
        self.n + self.r
    }

    /// Companion-state dimension `r * m`.
    pub fn state_dim(&self) -> usize {
        self.r * self.m
    }

    /// Coefficient `A_j` of `y^(j)`.
    pub fn coefficient(&self, j: usize) -> &CoefficientFunction {
        &self.coefficients[j]
    }

    pub fn coefficients(&self) -> &[CoefficientFunction] {
        &self.coefficients
    }

    pub fn rhs(&self) -> &CoefficientFunction {
        &self.rhs
    }

    /// Same differential expression with another right-hand side.
    pub fn with_rhs(&self, rhs: CoefficientFunction) -> Result<Self> {
        Self::new(self.m, self.r, self.n, self.coefficients.clone(), rhs)
    }

    /// Homogeneous copy (zero right-hand side).
    pub fn homogeneous(&self) -> Self {
        self.with_rhs(CoefficientFunction::zero(self.m, 1, self.n))
            .expect("zero rhs always matches")
    }

    /// Block companion matrix `K(t)`: `-I_m` on the first block superdiagonal
    /// and `A_0(t), ..., A_{r-1}(t)` along the bottom block row.
    pub fn companion(&self, t: f64) -> Result<DMatrix<Complex64>> {
        let (m, r) = (self.m, self.r);
        let mut k = DMatrix::zeros(r * m, r * m);
        for block in 0..r.saturating_sub(1) {
            for i in 0..m {
                k[(block * m + i, (block + 1) * m + i)] = Complex64::new(-1.0, 0.0);
            }
        }
        for (j, a) in self.coefficients.iter().enumerate() {
            let value = a.evaluate(t, 0)?;
            k.view_mut(((r - 1) * m, j * m), (m, m)).copy_from(&value);
        }
        Ok(k)
    }

    fn rhs_state(&self, t: f64) -> Result<DVector<Complex64>> {
        let mut g = DVector::zeros(self.state_dim());
        let f = self.rhs.evaluate(t, 0)?;
        g.rows_mut((self.r - 1) * self.m, self.m)
            .copy_from(&f.column(0));
        Ok(g)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// RK4 sweep of `x' = -K(t) x + g(t)` over the whole grid, starting from the
/// state `x0` at `start` and integrating toward both endpoints. The state may
/// carry several columns; they share one companion evaluation per stage.
fn integrate_companion(
    system: &DifferentialSystem,
    grid: Grid,
    start: usize,
    x0: &DMatrix<Complex64>,
    with_rhs: bool,
) -> Result<Vec<DMatrix<Complex64>>> {
    let dim = system.state_dim();
    if x0.nrows() != dim {
        return Err(Error::DimensionMismatch {
            context: "integrate_companion",
            expected: format!("{dim} state rows"),
            actual: format!("{}", x0.nrows()),
        });
    }
    let cols = x0.ncols();
    let mut states = vec![DMatrix::zeros(dim, cols); grid.node_count()];
    states[start] = x0.clone();

    let derivative = |t: f64, x: &DMatrix<Complex64>| -> Result<DMatrix<Complex64>> {
        let mut dx = -(system.companion(t)? * x);
        if with_rhs {
            let g = system.rhs_state(t)?;
            for c in 0..cols {
                dx.column_mut(c).zip_apply(&g, |v, gv| *v += gv);
            }
        }
        Ok(dx)
    };

    let mut sweep = |from: usize, to_end: bool| -> Result<()> {
        let last = grid.interval_count();
        let (range, step): (Vec<usize>, f64) = if to_end {
            ((from..last).collect(), grid.spacing())
        } else {
            ((0..from).rev().map(|i| i + 1).collect(), -grid.spacing())
        };
        for i in range {
            let (src, dst) = if to_end { (i, i + 1) } else { (i, i - 1) };
            let t = grid.node(src);
            let h = step;
            let x = states[src].clone();
            let k1 = derivative(t, &x)?;
            let k2 = derivative(t + h / 2.0, &(&x + &k1 * Complex64::new(h / 2.0, 0.0)))?;
            let k3 = derivative(t + h / 2.0, &(&x + &k2 * Complex64::new(h / 2.0, 0.0)))?;
            let k4 = derivative(t + h, &(&x + &k3 * Complex64::new(h, 0.0)))?;
            let next = &x
                + (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
                    * Complex64::new(h / 6.0, 0.0);
            if next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFiniteState {
                    node: dst,
                    t: grid.node(dst),
                });
            }
            states[dst] = next;
        }
        Ok(())
    };

    sweep(start, true)?;
    sweep(start, false)?;
    Ok(states)
}

/// Fills derivative orders `r..n+r` of `out` from orders `0..r-1` via the
/// differentiated equation
/// `y^(r+s) = f^(s) - sum_l sum_i C(s,i) A_{r-l}^(i) y^(r-l+s-i)`,
/// where `s = 0` is the equation itself.
fn complete_stack(
    system: &DifferentialSystem,
    coeff_samples: &[GridFunction],
    rhs_samples: Option<&GridFunction>,
    out: &mut GridFunction,
) -> Result<()> {
    let (r, n) = (system.order(), system.smoothness());
    let nodes = out.grid().node_count();
    let cols = out.cols();
    for s in 0..=n {
        for node in 0..nodes {
            let mut value: DMatrix<Complex64> = match rhs_samples {
                Some(f) => f.value(s, node),
                None => DMatrix::zeros(out.rows(), cols),
            };
            for (j, a) in coeff_samples.iter().enumerate() {
                // a = A_j multiplies y^(j); j = r - l
                for i in 0..=s {
                    let w = Complex64::new(binomial(s, i), 0.0);
                    value -= a.view(i, node) * out.view(j + s - i, node) * w;
                }
            }
            out.set_value(r + s, node, &value)?;
        }
    }
    Ok(())
}

fn sampled_coefficients(system: &DifferentialSystem, grid: Grid) -> Result<Vec<GridFunction>> {
    system
        .coefficients()
        .iter()
        .map(|a| sample(a, grid, system.smoothness()))
        .collect()
}

/// Extends a solution (or fundamental block) carrying orders `0..=r-1` or
/// more to the full stack `0..=n+r` using the equation; `n = 0` returns the
/// input unchanged apart from the order-`r` completion when missing.
pub fn lift_derivatives(system: &DifferentialSystem, y: &GridFunction) -> Result<GridFunction> {
    let grid = y.grid();
    if y.max_order() + 1 < system.order() {
        return Err(Error::OrderOutOfRange {
            requested: system.order() - 1,
            max: y.max_order(),
        });
    }
    if y.max_order() >= system.solution_order() {
        return Ok(y.clone());
    }
    let rhs_samples = if y.cols() == 1 {
        Some(sample(system.rhs(), grid, system.smoothness())?)
    } else {
        None // matrix stacks are lifted through the homogeneous equation
    };
    let coeff_samples = sampled_coefficients(system, grid)?;
    let mut out = GridFunction::zeros(grid, y.rows(), y.cols(), system.solution_order());
    for d in 0..system.order().min(y.max_order() + 1) {
        for node in 0..grid.node_count() {
            out.set_value(d, node, &y.value(d, node))?;
        }
    }
    complete_stack(system, &coeff_samples, rhs_samples.as_ref(), &mut out)?;
    Ok(out)
}

/// Solves the Cauchy problem `y^(j)(a) = init[j]`, `j = 0..r-1`, over the
/// grid and returns the solution with its full derivative stack `0..=n+r`.
pub fn solve_cauchy(
    system: &DifferentialSystem,
    init: &[DVector<Complex64>],
    grid: Grid,
) -> Result<GridFunction> {
    solve_cauchy_from(system, init, grid, 0)
}

/// Same as [`solve_cauchy`] with the initial data posed at an arbitrary grid
/// node; integration proceeds in both directions from there.
pub fn solve_cauchy_from(
    system: &DifferentialSystem,
    init: &[DVector<Complex64>],
    grid: Grid,
    start: usize,
) -> Result<GridFunction> {
    let (m, r) = (system.dimension(), system.order());
    if init.len() != r || init.iter().any(|v| v.len() != m) {
        return Err(Error::DimensionMismatch {
            context: "solve_cauchy",
            expected: format!("{r} initial vectors of size {m}"),
            actual: format!(
                "{} vectors of sizes {:?}",
                init.len(),
                init.iter().map(|v| v.len()).collect::<Vec<_>>()
            ),
        });
    }
    let mut x0 = DMatrix::zeros(system.state_dim(), 1);
    for (j, v) in init.iter().enumerate() {
        x0.view_mut((j * m, 0), (m, 1)).copy_from(v);
    }
    let states = integrate_companion(system, grid, start, &x0, true)?;

    let mut out = GridFunction::zeros(grid, m, 1, system.solution_order());
    for (node, state) in states.iter().enumerate() {
        for d in 0..r {
            let block = state.view((d * m, 0), (m, 1)).into_owned();
            out.set_value(d, node, &block)?;
        }
    }
    let coeff_samples = sampled_coefficients(system, grid)?;
    let rhs_samples = sample(system.rhs(), grid, system.smoothness())?;
    complete_stack(system, &coeff_samples, Some(&rhs_samples), &mut out)?;
    Ok(out)
}

/// Fundamental system: the blocks `Y_0, ..., Y_{r-1}` of homogeneous matrix
/// solutions with Kronecker-delta derivative data `Y_k^(j)(t0) = d_{kj} I_m`
/// at the anchor node.
#[derive(Debug, Clone)]
pub struct FundamentalSystem {
    anchor: f64,
    anchor_node: usize,
    blocks: Vec<GridFunction>,
}

impl FundamentalSystem {
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn anchor_node(&self) -> usize {
        self.anchor_node
    }

    /// Block `Y_k` with derivative stack up to `n + r`.
    pub fn block(&self, k: usize) -> &GridFunction {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[GridFunction] {
        &self.blocks
    }

    pub fn order(&self) -> usize {
        self.blocks.len()
    }

    pub fn dimension(&self) -> usize {
        self.blocks[0].rows()
    }

    /// Linear combination `y = sum_k Y_k q_k` across all stored derivative
    /// orders.
    pub fn general_solution(&self, q: &[DVector<Complex64>]) -> Result<GridFunction> {
        let (m, r) = (self.dimension(), self.order());
        if q.len() != r || q.iter().any(|v| v.len() != m) {
            return Err(Error::DimensionMismatch {
                context: "general_solution",
                expected: format!("{r} blocks of size {m}"),
                actual: format!(
                    "{} blocks of sizes {:?}",
                    q.len(),
                    q.iter().map(|v| v.len()).collect::<Vec<_>>()
                ),
            });
        }
        let grid = self.blocks[0].grid();
        let max_order = self.blocks[0].max_order();
        let mut out = GridFunction::zeros(grid, m, 1, max_order);
        for d in 0..=max_order {
            for node in 0..grid.node_count() {
                let mut v = DMatrix::zeros(m, 1);
                for (k, qk) in q.iter().enumerate() {
                    v += self.blocks[k].view(d, node) * qk;
                }
                out.set_value(d, node, &v)?;
            }
        }
        Ok(out)
    }
}

/// Builds the fundamental system anchored at the grid node `t0` by solving
/// the `r*m` homogeneous column problems simultaneously, forward and backward
/// from the anchor.
pub fn fundamental_system(
    system: &DifferentialSystem,
    t0: f64,
    grid: Grid,
) -> Result<FundamentalSystem> {
    let anchor_node = grid.node_index(t0)?;
    let (m, r) = (system.dimension(), system.order());
    let dim = system.state_dim();
    let x0 = DMatrix::identity(dim, dim);
    let states = integrate_companion(system, grid, anchor_node, &x0, false)?;

    let coeff_samples = sampled_coefficients(system, grid)?;
    let mut blocks = Vec::with_capacity(r);
    for k in 0..r {
        let mut block = GridFunction::zeros(grid, m, m, system.solution_order());
        for (node, state) in states.iter().enumerate() {
            for d in 0..r {
                let value = state.view((d * m, k * m), (m, m)).into_owned();
                block.set_value(d, node, &value)?;
            }
        }
        complete_stack(system, &coeff_samples, None, &mut block)?;
        blocks.push(block);
    }
    Ok(FundamentalSystem {
        anchor: grid.node(anchor_node),
        anchor_node,
        blocks,
    })
}

/// Applies the differential expression to a function with a sufficient
/// derivative stack, returning `L y` with orders `0..=n`:
/// `(L y)^(s) = y^(r+s) + sum_l sum_i C(s,i) A_{r-l}^(i) y^(r-l+s-i)`.
pub fn apply_differential_operator(
    system: &DifferentialSystem,
    y: &GridFunction,
) -> Result<GridFunction> {
    let (r, n) = (system.order(), system.smoothness());
    y.check_order(system.solution_order())?;
    let grid = y.grid();
    let coeff_samples = sampled_coefficients(system, grid)?;
    let mut out = GridFunction::zeros(grid, y.rows(), y.cols(), n);
    for s in 0..=n {
        for node in 0..grid.node_count() {
            let mut value = y.value(r + s, node);
            for (j, a) in coeff_samples.iter().enumerate() {
                for i in 0..=s {
                    let w = Complex64::new(binomial(s, i), 0.0);
                    value += a.view(i, node) * y.view(j + s - i, node) * w;
                }
            }
            out.set_value(s, node, &value)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, sobolev_norm};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn scalar_system(r: usize, n: usize, coeffs: Vec<CoefficientFunction>, rhs: CoefficientFunction) -> DifferentialSystem {
        DifferentialSystem::new(1, r, n, coeffs, rhs).unwrap()
    }

    fn second_order_free() -> DifferentialSystem {
        // y'' = 0
        scalar_system(
            2,
            0,
            vec![CoefficientFunction::zero(1, 1, 0), CoefficientFunction::zero(1, 1, 0)],
            CoefficientFunction::zero(1, 1, 0),
        )
    }

    fn oscillator(n: usize) -> DifferentialSystem {
        // y'' + y = 0
        scalar_system(
            2,
            n,
            vec![
                CoefficientFunction::constant(DMatrix::from_element(1, 1, c(1.0)), n),
                CoefficientFunction::zero(1, 1, n),
            ],
            CoefficientFunction::zero(1, 1, n),
        )
    }

    #[test]
    fn companion_block_layout() {
        // r=1: the single block is A_0 itself
        let sys = scalar_system(
            1,
            0,
            vec![CoefficientFunction::constant(DMatrix::from_element(1, 1, c(5.0)), 0)],
            CoefficientFunction::zero(1, 1, 0),
        );
        let k = sys.companion(0.3).unwrap();
        assert_eq!(k.nrows(), 1);
        assert_eq!(k[(0, 0)], c(5.0));

        // r=2, m=1, A_0 = 2, A_1 = 3 -> [[0, -1], [2, 3]]
        let sys = scalar_system(
            2,
            0,
            vec![
                CoefficientFunction::constant(DMatrix::from_element(1, 1, c(2.0)), 0),
                CoefficientFunction::constant(DMatrix::from_element(1, 1, c(3.0)), 0),
            ],
            CoefficientFunction::zero(1, 1, 0),
        );
        let k = sys.companion(0.0).unwrap();
        assert_eq!(k[(0, 0)], c(0.0));
        assert_eq!(k[(0, 1)], c(-1.0));
        assert_eq!(k[(1, 0)], c(2.0));
        assert_eq!(k[(1, 1)], c(3.0));

        // r=2, m=2, zero coefficients: -I_2 in the top-right block
        let sys = DifferentialSystem::new(
            2,
            2,
            0,
            vec![CoefficientFunction::zero(2, 2, 0), CoefficientFunction::zero(2, 2, 0)],
            CoefficientFunction::zero(2, 1, 0),
        )
        .unwrap();
        let k = sys.companion(0.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if j == i + 2 { c(-1.0) } else { c(0.0) };
                assert_eq!(k[(i, j)], expected, "at ({i},{j})");
            }
        }
    }

    #[test]
    fn cauchy_constant_and_linear_solutions() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        // y' = 0, y(0) = 1
        let sys = scalar_system(
            1,
            0,
            vec![CoefficientFunction::zero(1, 1, 0)],
            CoefficientFunction::zero(1, 1, 0),
        );
        let y = solve_cauchy(&sys, &[DVector::from_element(1, c(1.0))], grid).unwrap();
        for i in 0..=64 {
            assert!((y.entry(0, i, 0, 0) - c(1.0)).norm() < 1e-14);
        }

        // y'' = 0, y(0) = 0, y'(0) = 1 -> y = t, RK4-exact
        let y = solve_cauchy(
            &second_order_free(),
            &[DVector::from_element(1, c(0.0)), DVector::from_element(1, c(1.0))],
            grid,
        )
        .unwrap();
        for i in 0..=64 {
            assert!((y.entry(0, i, 0, 0) - c(grid.node(i))).norm() < 1e-12);
        }
    }

    #[test]
    fn cauchy_sine_solution() {
        let grid = Grid::new(0.0, std::f64::consts::PI, 4096).unwrap();
        let y = solve_cauchy(
            &oscillator(0),
            &[DVector::from_element(1, c(0.0)), DVector::from_element(1, c(1.0))],
            grid,
        )
        .unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=4096 {
            worst = worst.max((y.entry(0, i, 0, 0) - c(grid.node(i).sin())).norm());
        }
        assert!(worst < 1e-8, "sup error {worst}");
    }

    #[test]
    fn rk4_order_on_oscillator() {
        let sup_err = |n: usize| {
            let grid = Grid::new(0.0, std::f64::consts::PI, n).unwrap();
            let y = solve_cauchy(
                &oscillator(0),
                &[DVector::from_element(1, c(0.0)), DVector::from_element(1, c(1.0))],
                grid,
            )
            .unwrap();
            (0..=n)
                .map(|i| (y.entry(0, i, 0, 0) - c(grid.node(i).sin())).norm())
                .fold(0.0f64, f64::max)
        };
        let ratio = sup_err(64) / sup_err(128);
        assert!(ratio >= 12.0, "halving the step only gave {ratio}");
    }

    #[test]
    fn lift_matches_symbolic_derivative() {
        // y' + t y = 0, y = exp(-t^2/2): y'' = (t^2 - 1) exp(-t^2/2)
        let grid = Grid::new(0.0, 1.0, 256).unwrap();
        let sys = scalar_system(
            1,
            1,
            vec![CoefficientFunction::scalar(1, |t, d| match d {
                0 => c(t),
                1 => c(1.0),
                _ => c(0.0),
            })],
            CoefficientFunction::zero(1, 1, 1),
        );
        let mut y = GridFunction::zeros(grid, 1, 1, 1);
        for i in 0..grid.node_count() {
            let t = grid.node(i);
            let v = (-t * t / 2.0).exp();
            y.set_entry(0, i, 0, 0, c(v));
            y.set_entry(1, i, 0, 0, c(-t * v));
        }
        let lifted = lift_derivatives(&sys, &y).unwrap();
        assert_eq!(lifted.max_order(), 2);
        for i in 0..grid.node_count() {
            let t = grid.node(i);
            let expected = (t * t - 1.0) * (-t * t / 2.0).exp();
            assert!((lifted.entry(2, i, 0, 0) - c(expected)).norm() < 1e-8);
        }
    }

    #[test]
    fn lift_with_zero_smoothness_is_identity() {
        let grid = Grid::new(0.0, 1.0, 8).unwrap();
        let sys = second_order_free();
        let mut y = GridFunction::zeros(grid, 1, 1, 2);
        for i in 0..grid.node_count() {
            y.set_entry(0, i, 0, 0, c(grid.node(i)));
            y.set_entry(1, i, 0, 0, c(1.0));
        }
        let lifted = lift_derivatives(&sys, &y).unwrap();
        assert_eq!(lifted, y);
    }

    #[test]
    fn fundamental_free_particle() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let fs = fundamental_system(&second_order_free(), 0.0, grid).unwrap();
        for i in 0..=64 {
            assert!((fs.block(0).entry(0, i, 0, 0) - c(1.0)).norm() < 1e-12);
            assert!((fs.block(1).entry(0, i, 0, 0) - c(grid.node(i))).norm() < 1e-12);
        }
    }

    #[test]
    fn fundamental_oscillator_cos_sin() {
        let grid = Grid::new(0.0, std::f64::consts::PI, 4096).unwrap();
        let fs = fundamental_system(&oscillator(0), 0.0, grid).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=4096 {
            let t = grid.node(i);
            worst = worst.max((fs.block(0).entry(0, i, 0, 0) - c(t.cos())).norm());
            worst = worst.max((fs.block(1).entry(0, i, 0, 0) - c(t.sin())).norm());
        }
        assert!(worst < 1e-8, "sup error {worst}");
    }

    #[test]
    fn fundamental_nilpotent_matrix_exponential() {
        // r=1, m=2, A_0 = [[0,1],[0,0]]: Y_0(t) = [[1,-t],[0,1]]
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let a0 = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        let sys = DifferentialSystem::new(
            2,
            1,
            0,
            vec![CoefficientFunction::constant(a0, 0)],
            CoefficientFunction::zero(2, 1, 0),
        )
        .unwrap();
        let fs = fundamental_system(&sys, 0.0, grid).unwrap();
        for i in 0..=64 {
            let t = grid.node(i);
            let y = fs.block(0).value(0, i);
            assert!((y[(0, 0)] - c(1.0)).norm() < 1e-10);
            assert!((y[(0, 1)] - c(-t)).norm() < 1e-10);
            assert!((y[(1, 0)]).norm() < 1e-10);
            assert!((y[(1, 1)] - c(1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn fundamental_rejects_off_grid_anchor() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        assert!(matches!(
            fundamental_system(&second_order_free(), 0.3211, grid),
            Err(Error::NotAGridNode { .. })
        ));
    }

    #[test]
    fn general_solution_superposition() {
        let grid = Grid::new(0.0, std::f64::consts::PI, 2048).unwrap();
        let sys = oscillator(0);
        let fs = fundamental_system(&sys, 0.0, grid).unwrap();

        let zero = fs
            .general_solution(&[DVector::from_element(1, c(0.0)), DVector::from_element(1, c(0.0))])
            .unwrap();
        assert_eq!(lp_norm(&zero, 0, f64::INFINITY).unwrap(), 0.0);

        // q = (3, -1) -> 3 cos t - sin t; check the residual of the equation
        let y = fs
            .general_solution(&[DVector::from_element(1, c(3.0)), DVector::from_element(1, c(-1.0))])
            .unwrap();
        for i in (0..=2048).step_by(97) {
            let t = grid.node(i);
            let expected = 3.0 * t.cos() - t.sin();
            assert!((y.entry(0, i, 0, 0) - c(expected)).norm() < 1e-8);
        }
        let residual = apply_differential_operator(&sys, &y).unwrap();
        assert!(lp_norm(&residual, 0, f64::INFINITY).unwrap() < 1e-8);
    }

    #[test]
    fn affine_combination_free_particle() {
        let grid = Grid::new(0.0, 1.0, 32).unwrap();
        let fs = fundamental_system(&second_order_free(), 0.0, grid).unwrap();
        let y = fs
            .general_solution(&[DVector::from_element(1, c(1.0)), DVector::from_element(1, c(2.0))])
            .unwrap();
        for i in 0..=32 {
            assert!((y.entry(0, i, 0, 0) - c(1.0 + 2.0 * grid.node(i))).norm() < 1e-12);
        }
    }

    #[test]
    fn wronskian_stays_nonsingular() {
        let grid = Grid::new(0.0, std::f64::consts::PI, 512).unwrap();
        let fs = fundamental_system(&oscillator(0), 0.0, grid).unwrap();
        for i in (0..=512).step_by(37) {
            let mut x = DMatrix::zeros(2, 2);
            for k in 0..2 {
                for d in 0..2 {
                    x[(d, k)] = fs.block(k).entry(d, i, 0, 0);
                }
            }
            let svd = x.svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            assert!(smin > 1e-10 * smax);
        }
    }

    #[test]
    fn coefficient_perturbation_bounded_response() {
        // Perturbing A by delta in W^n_p moves each Y_k by O(delta).
        let grid = Grid::new(0.0, 1.0, 512).unwrap();
        let base = fundamental_system(&oscillator(1), 0.0, grid).unwrap();
        let mut ratios = Vec::new();
        for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let sys = scalar_system(
                2,
                1,
                vec![
                    CoefficientFunction::constant(DMatrix::from_element(1, 1, c(1.0 + delta)), 1),
                    CoefficientFunction::zero(1, 1, 1),
                ],
                CoefficientFunction::zero(1, 1, 1),
            );
            let fs = fundamental_system(&sys, 0.0, grid).unwrap();
            let mut dev = 0.0;
            for k in 0..2 {
                let diff = fs.block(k).difference(base.block(k)).unwrap();
                dev += sobolev_norm(&diff, 3, 2.0).unwrap();
            }
            ratios.push(dev / delta);
        }
        let max = ratios.iter().cloned().fold(0.0f64, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "ratios not comparable: {ratios:?}");
    }

    #[test]
    fn stack_consistent_with_finite_differences() {
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        let sys = scalar_system(
            1,
            1,
            vec![CoefficientFunction::scalar(1, |t, d| match d {
                0 => c(t),
                1 => c(1.0),
                _ => c(0.0),
            })],
            CoefficientFunction::zero(1, 1, 1),
        );
        let y = solve_cauchy(&sys, &[DVector::from_element(1, c(1.0))], grid).unwrap();
        let h = grid.spacing();
        let mut worst: f64 = 0.0;
        for s in 0..2 {
            for i in 1..grid.interval_count() {
                let fd = (y.entry(s, i + 1, 0, 0) - y.entry(s, i - 1, 0, 0)) / c(2.0 * h);
                worst = worst.max((fd - y.entry(s + 1, i, 0, 0)).norm());
            }
        }
        assert!(worst < 5e-6, "finite differences disagree: {worst}");
    }

    #[test]
    fn blow_up_reports_node() {
        // y' = 10^6 y overflows f64 well before t = 1
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let sys = scalar_system(
            1,
            0,
            vec![CoefficientFunction::constant(
                DMatrix::from_element(1, 1, c(-1.0e6)),
                0,
            )],
            CoefficientFunction::zero(1, 1, 0),
        );
        let res = solve_cauchy(&sys, &[DVector::from_element(1, c(1.0))], grid);
        assert!(matches!(res, Err(Error::NonFiniteState { .. })));
    }
}

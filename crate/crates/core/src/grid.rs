//! Uniform grids, sampled functions with derivative stacks, quadrature, and
//! the `L_p` / Sobolev norms used by every other module.
//!
//! A [`GridFunction`] stores complex matrix values at every node for every
//! derivative order up to a declared maximum, so norms over `W^q_p` reduce to
//! weighted sums over the stored samples. Coefficients of differential
//! systems enter as [`CoefficientFunction`]s: analytic evaluators that return
//! exact derivatives, which keeps numerical differentiation out of every
//! tolerance downstream.

use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView};
use num_complex::Complex64;

use crate::{Error, Result};

/// Uniform grid with an even number of subintervals on a finite `[a, b]`.
///
/// Node `i` is exactly `a + i*(b-a)/N`, reproducible from `(a, b, N)`. The
/// interval count stays even so composite Simpson quadrature covers the full
/// range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || a >= b {
            return Err(Error::InvalidGrid(format!(
                "need finite a < b, got [{a}, {b}]"
            )));
        }
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "interval count must be even and >= 2, got {n}"
            )));
        }
        Ok(Self { a, b, n })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn interval_count(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.n + 1
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.a + i as f64 * (self.b - self.a) / self.n as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |i| self.node(i))
    }

    /// Index of the node at `t`, tolerating only floating-point noise
    /// (within `1e-6` of a spacing). Points genuinely between nodes get
    /// `None`; snapping is the caller's job.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.a) / (self.b - self.a) * self.n as f64;
        let i = x.round();
        if !(0.0..=self.n as f64).contains(&i) {
            return None;
        }
        if (x - i).abs() <= 1e-6 {
            Some(i as usize)
        } else {
            None
        }
    }

    pub fn node_index(&self, t: f64) -> Result<usize> {
        self.index_of(t).ok_or(Error::NotAGridNode { t })
    }

    pub fn refined(&self, factor: usize) -> Result<Grid> {
        Grid::new(self.a, self.b, self.n * factor)
    }

    /// Composite-Simpson weight of node `i` over the whole grid.
    pub fn simpson_weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        let c = if i == 0 || i == self.n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        c * h / 3.0
    }

    /// Composite Simpson over the whole grid of a nodewise real integrand.
    pub fn integrate<F: FnMut(usize) -> f64>(&self, mut f: F) -> f64 {
        (0..=self.n).map(|i| self.simpson_weight(i) * f(i)).sum()
    }

    /// Quadrature over the node range `[i0, i1]` of a nodewise real
    /// integrand, using [`quadrature_weights`].
    pub fn integrate_range<F: FnMut(usize) -> f64>(&self, i0: usize, i1: usize, mut f: F) -> f64 {
        quadrature_weights(i1 - i0, self.spacing())
            .iter()
            .enumerate()
            .map(|(k, w)| w * f(i0 + k))
            .sum()
    }
}

/// Node weights for integrating over a span of `span` uniform subintervals
/// with spacing `h`. Even spans get composite Simpson; an odd span gets
/// Simpson on the leading even part plus a trapezoid on the last interval;
/// a single interval is one trapezoid.
pub fn quadrature_weights(span: usize, h: f64) -> Vec<f64> {
    match span {
        0 => vec![0.0],
        1 => vec![h / 2.0, h / 2.0],
        _ => {
            let even_span = if span % 2 == 0 { span } else { span - 1 };
            let mut w = vec![0.0; span + 1];
            for (i, wi) in w.iter_mut().enumerate().take(even_span + 1) {
                let c = if i == 0 || i == even_span {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                *wi = c * h / 3.0;
            }
            if span % 2 == 1 {
                w[span - 1] += h / 2.0;
                w[span] += h / 2.0;
            }
            w
        }
    }
}

/// Conjugate exponent `p' = p/(p-1)`, with `p' = infinity` for `p = 1`.
pub fn conjugate_exponent(p: f64) -> Result<f64> {
    validate_exponent(p)?;
    if p == 1.0 {
        Ok(f64::INFINITY)
    } else if p.is_infinite() {
        Ok(1.0)
    } else {
        Ok(p / (p - 1.0))
    }
}

pub(crate) fn validate_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    Ok(())
}

/// Complex matrix-valued function sampled on a grid, carrying every
/// derivative order from 0 up to `max_order`.
///
/// Storage is one dense block per `(order, node)` pair in column-major
/// layout, so nodewise values can be viewed without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    rows: usize,
    cols: usize,
    max_order: usize,
    data: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(grid: Grid, rows: usize, cols: usize, max_order: usize) -> Self {
        let len = (max_order + 1) * grid.node_count() * rows * cols;
        Self {
            grid,
            rows,
            cols,
            max_order,
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Builds a function by evaluating `f(order, t)` at every node.
    pub fn from_fn<F>(grid: Grid, rows: usize, cols: usize, max_order: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, f64) -> DMatrix<Complex64>,
    {
        let mut out = Self::zeros(grid, rows, cols, max_order);
        for d in 0..=max_order {
            for i in 0..grid.node_count() {
                let value = f(d, grid.node(i));
                out.set_value(d, i, &value)?;
            }
        }
        Ok(out)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    fn block_len(&self) -> usize {
        self.rows * self.cols
    }

    fn block_start(&self, order: usize, node: usize) -> usize {
        (order * self.grid.node_count() + node) * self.block_len()
    }

    pub fn check_order(&self, order: usize) -> Result<()> {
        if order > self.max_order {
            return Err(Error::OrderOutOfRange {
                requested: order,
                max: self.max_order,
            });
        }
        Ok(())
    }

    /// Borrowed view of the value block at `(order, node)`.
    pub fn view(&self, order: usize, node: usize) -> DMatrixView<'_, Complex64> {
        let s = self.block_start(order, node);
        DMatrixView::from_slice(&self.data[s..s + self.block_len()], self.rows, self.cols)
    }

    pub fn value(&self, order: usize, node: usize) -> DMatrix<Complex64> {
        self.view(order, node).into_owned()
    }

    pub fn entry(&self, order: usize, node: usize, r: usize, c: usize) -> Complex64 {
        // column-major within the block
        self.data[self.block_start(order, node) + c * self.rows + r]
    }

    pub fn set_entry(&mut self, order: usize, node: usize, r: usize, c: usize, v: Complex64) {
        let s = self.block_start(order, node) + c * self.rows + r;
        self.data[s] = v;
    }

    pub fn set_value(&mut self, order: usize, node: usize, value: &DMatrix<Complex64>) -> Result<()> {
        if value.nrows() != self.rows || value.ncols() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "GridFunction::set_value",
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{}", value.nrows(), value.ncols()),
            });
        }
        let s = self.block_start(order, node);
        let len = self.block_len();
        self.data[s..s + len].copy_from_slice(value.as_slice());
        Ok(())
    }

    /// Errors with the first offending node if any stored value is NaN or
    /// infinite.
    pub fn validate_finite(&self) -> Result<()> {
        let block = self.block_len();
        for (k, v) in self.data.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                let node = (k / block) % self.grid.node_count();
                return Err(Error::NonFiniteSample {
                    node,
                    t: self.grid.node(node),
                });
            }
        }
        Ok(())
    }

    /// Copy with the derivative stack truncated to `max_order`.
    pub fn truncated(&self, max_order: usize) -> Result<GridFunction> {
        self.check_order(max_order)?;
        let mut out = GridFunction::zeros(self.grid, self.rows, self.cols, max_order);
        let keep = (max_order + 1) * self.grid.node_count() * self.block_len();
        out.data.copy_from_slice(&self.data[..keep]);
        Ok(out)
    }

    /// Single column as an `rows x 1` function sharing the derivative stack.
    pub fn column(&self, col: usize) -> GridFunction {
        let mut out = GridFunction::zeros(self.grid, self.rows, 1, self.max_order);
        for d in 0..=self.max_order {
            for i in 0..self.grid.node_count() {
                for r in 0..self.rows {
                    out.set_entry(d, i, r, 0, self.entry(d, i, r, col));
                }
            }
        }
        out
    }

    /// Single entry as a scalar function sharing the derivative stack.
    pub fn component(&self, r: usize, c: usize) -> GridFunction {
        let mut out = GridFunction::zeros(self.grid, 1, 1, self.max_order);
        for d in 0..=self.max_order {
            for i in 0..self.grid.node_count() {
                out.set_entry(d, i, 0, 0, self.entry(d, i, r, c));
            }
        }
        out
    }

    fn check_compatible(&self, other: &GridFunction, context: &'static str) -> Result<()> {
        if self.grid != other.grid
            || self.rows != other.rows
            || self.cols != other.cols
            || self.max_order != other.max_order
        {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!(
                    "{}x{} on {:?} up to order {}",
                    self.rows, self.cols, self.grid, self.max_order
                ),
                actual: format!(
                    "{}x{} on {:?} up to order {}",
                    other.rows, other.cols, other.grid, other.max_order
                ),
            });
        }
        Ok(())
    }

    pub fn difference(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other, "GridFunction::difference")?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn sum(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other, "GridFunction::sum")?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: Complex64) -> GridFunction {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= factor;
        }
        out
    }

    /// Sum over matrix components of `|entry|^p` at `(order, node)`.
    fn component_power_sum(&self, order: usize, node: usize, p: f64) -> f64 {
        let s = self.block_start(order, node);
        self.data[s..s + self.block_len()]
            .iter()
            .map(|v| v.norm().powf(p))
            .sum()
    }

    /// Sum over matrix components of `|entry|` at `(order, node)`.
    pub fn component_abs_sum(&self, order: usize, node: usize) -> f64 {
        let s = self.block_start(order, node);
        self.data[s..s + self.block_len()].iter().map(|v| v.norm()).sum()
    }
}

/// Analytic coefficient data: a matrix-valued function together with exact
/// derivative evaluators up to `max_order`.
///
/// The evaluator is shared behind an `Arc`, so clones are cheap and a system
/// can be re-assembled with a different right-hand side without re-building
/// its coefficients.
#[derive(Clone)]
pub struct CoefficientFunction {
    rows: usize,
    cols: usize,
    max_order: usize,
    eval: Arc<dyn Fn(f64, usize) -> DMatrix<Complex64> + Send + Sync>,
}

impl std::fmt::Debug for CoefficientFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientFunction")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("max_order", &self.max_order)
            .finish()
    }
}

impl CoefficientFunction {
    pub fn new<F>(rows: usize, cols: usize, max_order: usize, eval: F) -> Self
    where
        F: Fn(f64, usize) -> DMatrix<Complex64> + Send + Sync + 'static,
    {
        Self {
            rows,
            cols,
            max_order,
            eval: Arc::new(eval),
        }
    }

    /// Constant matrix; all derivatives vanish.
    pub fn constant(value: DMatrix<Complex64>, max_order: usize) -> Self {
        let (rows, cols) = (value.nrows(), value.ncols());
        Self::new(rows, cols, max_order, move |_, d| {
            if d == 0 {
                value.clone()
            } else {
                DMatrix::zeros(rows, cols)
            }
        })
    }

    pub fn zero(rows: usize, cols: usize, max_order: usize) -> Self {
        Self::new(rows, cols, max_order, move |_, _| DMatrix::zeros(rows, cols))
    }

    /// Scalar (1x1) function from a derivative-indexed evaluator.
    pub fn scalar<F>(max_order: usize, eval: F) -> Self
    where
        F: Fn(f64, usize) -> Complex64 + Send + Sync + 'static,
    {
        Self::new(1, 1, max_order, move |t, d| {
            DMatrix::from_element(1, 1, eval(t, d))
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn evaluate(&self, t: f64, order: usize) -> Result<DMatrix<Complex64>> {
        if order > self.max_order {
            return Err(Error::OrderOutOfRange {
                requested: order,
                max: self.max_order,
            });
        }
        let m = (self.eval)(t, order);
        if m.nrows() != self.rows || m.ncols() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "CoefficientFunction::evaluate",
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(m)
    }

    /// Pointwise sum of two coefficient functions of equal shape.
    pub fn add(&self, other: &CoefficientFunction) -> Result<CoefficientFunction> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "CoefficientFunction::add",
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{}", other.rows, other.cols),
            });
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(CoefficientFunction::new(
            self.rows,
            self.cols,
            self.max_order.min(other.max_order),
            move |t, d| (a.eval)(t, d) + (b.eval)(t, d),
        ))
    }

    pub fn scale(&self, factor: Complex64) -> CoefficientFunction {
        let a = self.clone();
        CoefficientFunction::new(self.rows, self.cols, self.max_order, move |t, d| {
            (a.eval)(t, d) * factor
        })
    }
}

/// Samples `coef` and its derivatives up to order `up_to` at every grid node.
///
/// Fails with the node index and abscissa if the evaluator produces a
/// non-finite value anywhere.
pub fn sample(coef: &CoefficientFunction, grid: Grid, up_to: usize) -> Result<GridFunction> {
    if up_to > coef.max_order() {
        return Err(Error::OrderOutOfRange {
            requested: up_to,
            max: coef.max_order(),
        });
    }
    let mut out = GridFunction::zeros(grid, coef.rows(), coef.cols(), up_to);
    for d in 0..=up_to {
        for i in 0..grid.node_count() {
            let t = grid.node(i);
            let value = coef.evaluate(t, d)?;
            if value.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFiniteSample { node: i, t });
            }
            out.set_value(d, i, &value)?;
        }
    }
    Ok(out)
}

/// `L_p` norm of the order-`d` derivative of `f`.
///
/// For `p < infinity` this is the composite-Simpson quadrature of the
/// componentwise sum `sum_c |f_c^(d)|^p`, taken to the power `1/p`. For
/// `p = infinity` it is the maximum over nodes of `sum_c |f_c^(d)|`, a lower
/// bound on the true essential sup that is adequate for smooth data at the
/// default grid resolution.
pub fn lp_norm(f: &GridFunction, d: usize, p: f64) -> Result<f64> {
    f.check_order(d)?;
    validate_exponent(p)?;
    if p.is_infinite() {
        let mut best: f64 = 0.0;
        for i in 0..f.grid().node_count() {
            best = best.max(f.component_abs_sum(d, i));
        }
        Ok(best)
    } else {
        let integral = f.grid().integrate(|i| f.component_power_sum(d, i, p));
        Ok(integral.max(0.0).powf(1.0 / p))
    }
}

/// Sobolev norm `sum_{s=0}^{q} ||f^(s)||_p`.
pub fn sobolev_norm(f: &GridFunction, q: usize, p: f64) -> Result<f64> {
    f.check_order(q)?;
    let mut total = 0.0;
    for s in 0..=q {
        total += lp_norm(f, s, p)?;
    }
    Ok(total)
}

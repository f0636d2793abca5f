//! Canonical and multipoint boundary operators, step densities, the
//! integration-by-parts conversion between them, the operator-norm bound, and
//! canonicalization of a black-box functional.
//!
//! Every bounded boundary operator `B : (W^{n+r}_p)^m -> C^{rm}` with
//! `p < infinity` has a unique canonical form
//!
//! ```text
//! B y = sum_{s=0}^{n+r-1} alpha_s y^(s)(t0) + integral_a^b Phi(t) y^(n+r)(t) dt
//! ```
//!
//! with `l x m` matrices `alpha_s` (`l = r*m`) and an integrable density
//! `Phi`. When `Phi` is a step function the integral telescopes into point
//! evaluations of `y^(n+r-1)` at the breakpoints, which is exactly the
//! multipoint form; [`to_multipoint`] performs that conversion with jump
//! coefficients `beta_j = -(Phi(tau_j+) - Phi(tau_j-))`, extending `Phi` by
//! zero outside `[a, b]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::grid::{
    conjugate_exponent, lp_norm, quadrature_weights, sobolev_norm, Grid, GridFunction,
};
use crate::{Error, Result};

/// Piecewise-constant matrix function on `[a, b]`: value `pieces[j]` on
/// `[breakpoints[j], breakpoints[j+1])`, with the last piece closed at `b`.
#[derive(Debug, Clone)]
pub struct StepMatrixFunction {
    breakpoints: Vec<f64>,
    pieces: Vec<DMatrix<Complex64>>,
}

impl StepMatrixFunction {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if pieces.is_empty() || breakpoints.len() != pieces.len() + 1 {
            return Err(Error::InvalidStep(format!(
                "{} breakpoints for {} pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidStep("breakpoints not strictly increasing".into()));
        }
        let (rows, cols) = (pieces[0].nrows(), pieces[0].ncols());
        if pieces.iter().any(|p| p.nrows() != rows || p.ncols() != cols) {
            return Err(Error::InvalidStep("pieces of mixed shapes".into()));
        }
        Ok(Self { breakpoints, pieces })
    }

    pub fn constant(a: f64, b: f64, value: DMatrix<Complex64>) -> Result<Self> {
        Self::new(vec![a, b], vec![value])
    }

    pub fn rows(&self) -> usize {
        self.pieces[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.pieces[0].ncols()
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[DMatrix<Complex64>] {
        &self.pieces
    }

    pub fn value_at(&self, t: f64) -> &DMatrix<Complex64> {
        let m = self.pieces.len();
        let idx = match self.breakpoints[1..m].binary_search_by(|bp| bp.partial_cmp(&t).unwrap()) {
            Ok(j) => j + 1, // value on [tau_j, tau_{j+1}) -> right piece at a breakpoint
            Err(j) => j,
        };
        &self.pieces[idx.min(m - 1)]
    }

    /// Exact `L_{p'}` norm under the componentwise-sum convention.
    pub fn lp_norm(&self, p_prime: f64) -> Result<f64> {
        crate::grid::validate_exponent(p_prime)?;
        if p_prime.is_infinite() {
            Ok(self
                .pieces
                .iter()
                .map(|p| p.iter().map(|v| v.norm()).sum::<f64>())
                .fold(0.0, f64::max))
        } else {
            let mut total = 0.0;
            for (j, piece) in self.pieces.iter().enumerate() {
                let len = self.breakpoints[j + 1] - self.breakpoints[j];
                total += len * piece.iter().map(|v| v.norm().powf(p_prime)).sum::<f64>();
            }
            Ok(total.powf(1.0 / p_prime))
        }
    }

    /// Order-0 samples on a grid, taking the right-piece value at interior
    /// breakpoints per the `[tau_j, tau_{j+1})` convention.
    pub fn sample_on(&self, grid: Grid) -> Result<GridFunction> {
        let mut out = GridFunction::zeros(grid, self.rows(), self.cols(), 0);
        for i in 0..grid.node_count() {
            let v = self.value_at(grid.node(i)).clone();
            out.set_value(0, i, &v)?;
        }
        Ok(out)
    }
}

/// Density of the integral part of a canonical operator: either grid samples
/// (integrated by quadrature) or a step function (integrated exactly).
#[derive(Debug, Clone)]
pub enum Density {
    Grid(GridFunction),
    Step(StepMatrixFunction),
}

impl Density {
    pub fn rows(&self) -> usize {
        match self {
            Density::Grid(g) => g.rows(),
            Density::Step(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Density::Grid(g) => g.cols(),
            Density::Step(s) => s.cols(),
        }
    }

    pub fn lp_norm(&self, p_prime: f64) -> Result<f64> {
        match self {
            Density::Grid(g) => lp_norm(g, 0, p_prime),
            Density::Step(s) => s.lp_norm(p_prime),
        }
    }

    /// Order-0 node samples of the density on `grid`.
    pub fn sample_on(&self, grid: Grid) -> Result<GridFunction> {
        match self {
            Density::Grid(g) => {
                if g.grid() != grid {
                    return Err(Error::DimensionMismatch {
                        context: "Density::sample_on",
                        expected: format!("{:?}", grid),
                        actual: format!("{:?}", g.grid()),
                    });
                }
                g.truncated(0)
            }
            Density::Step(s) => s.sample_on(grid),
        }
    }
}

/// Canonical boundary operator `B y = sum_s alpha_s y^(s)(t0) + int Phi y^(n+r)`.
///
/// Shapes: `n + r` matrices `alpha_s` and the density `Phi`, all `l x m` with
/// `l = r*m`. Applied columnwise to matrix-valued functions, which reproduces
/// the bracket `[B Y]` used by the characteristic matrix.
#[derive(Debug, Clone)]
pub struct CanonicalBoundaryOperator {
    t0: f64,
    alphas: Vec<DMatrix<Complex64>>,
    phi: Density,
}

impl CanonicalBoundaryOperator {
    pub fn new(t0: f64, alphas: Vec<DMatrix<Complex64>>, phi: Density) -> Result<Self> {
        let (ell, m) = check_alpha_shapes(&alphas)?;
        if phi.rows() != ell || phi.cols() != m {
            return Err(Error::DimensionMismatch {
                context: "CanonicalBoundaryOperator::new",
                expected: format!("density of shape {ell}x{m}"),
                actual: format!("{}x{}", phi.rows(), phi.cols()),
            });
        }
        Ok(Self { t0, alphas, phi })
    }

    pub fn anchor(&self) -> f64 {
        self.t0
    }

    pub fn alphas(&self) -> &[DMatrix<Complex64>] {
        &self.alphas
    }

    pub fn phi(&self) -> &Density {
        &self.phi
    }

    /// Number of derivative terms `n + r`.
    pub fn order(&self) -> usize {
        self.alphas.len()
    }

    pub fn ell(&self) -> usize {
        self.alphas[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.alphas[0].ncols()
    }

    /// Applies the operator columnwise to an `m x q` function, producing an
    /// `l x q` matrix. For a step density the integral telescopes against
    /// order-`(n+r-1)` samples and is exact; otherwise it is a composite
    /// Simpson quadrature against order-`n+r` samples.
    pub fn apply_matrix(&self, y: &GridFunction) -> Result<DMatrix<Complex64>> {
        let order = self.order();
        let grid = y.grid();
        if y.rows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "CanonicalBoundaryOperator::apply",
                expected: format!("{} rows", self.input_dim()),
                actual: format!("{}", y.rows()),
            });
        }
        let t0_node = grid.node_index(self.t0)?;
        let mut out = DMatrix::zeros(self.ell(), y.cols());
        for (s, alpha) in self.alphas.iter().enumerate() {
            y.check_order(s)?;
            out += alpha * y.view(s, t0_node);
        }
        match &self.phi {
            Density::Step(step) => {
                y.check_order(order - 1)?;
                for (j, piece) in step.pieces().iter().enumerate() {
                    let i0 = grid.node_index(step.breakpoints()[j])?;
                    let i1 = grid.node_index(step.breakpoints()[j + 1])?;
                    let jump = y.view(order - 1, i1) - y.view(order - 1, i0);
                    out += piece * jump;
                }
            }
            Density::Grid(phi) => {
                y.check_order(order)?;
                if phi.grid() != grid {
                    return Err(Error::DimensionMismatch {
                        context: "CanonicalBoundaryOperator::apply",
                        expected: format!("density sampled on {:?}", grid),
                        actual: format!("{:?}", phi.grid()),
                    });
                }
                for i in 0..grid.node_count() {
                    let w = Complex64::new(grid.simpson_weight(i), 0.0);
                    out += phi.view(0, i) * y.view(order, i) * w;
                }
            }
        }
        Ok(out)
    }

    /// Applies the operator to a vector-valued (`m x 1`) function.
    pub fn apply(&self, y: &GridFunction) -> Result<DVector<Complex64>> {
        Ok(DVector::from_column_slice(self.apply_matrix(y)?.as_slice()))
    }
}

/// Multipoint boundary operator
/// `B y = sum_s alpha_s y^(s)(t0) + sum_j beta_j y^(n+r-1)(t_j)`.
#[derive(Debug, Clone)]
pub struct MultipointBoundaryOperator {
    t0: f64,
    alphas: Vec<DMatrix<Complex64>>,
    points: Vec<f64>,
    betas: Vec<DMatrix<Complex64>>,
}

impl MultipointBoundaryOperator {
    pub fn new(
        t0: f64,
        alphas: Vec<DMatrix<Complex64>>,
        points: Vec<f64>,
        betas: Vec<DMatrix<Complex64>>,
    ) -> Result<Self> {
        let (ell, m) = check_alpha_shapes(&alphas)?;
        if points.len() != betas.len() {
            return Err(Error::DimensionMismatch {
                context: "MultipointBoundaryOperator::new",
                expected: format!("{} betas", points.len()),
                actual: format!("{}", betas.len()),
            });
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidStep("points not strictly increasing".into()));
        }
        if betas.iter().any(|b| b.nrows() != ell || b.ncols() != m) {
            return Err(Error::DimensionMismatch {
                context: "MultipointBoundaryOperator::new",
                expected: format!("betas of shape {ell}x{m}"),
                actual: "mixed shapes".into(),
            });
        }
        Ok(Self {
            t0,
            alphas,
            points,
            betas,
        })
    }

    pub fn anchor(&self) -> f64 {
        self.t0
    }

    pub fn alphas(&self) -> &[DMatrix<Complex64>] {
        &self.alphas
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn betas(&self) -> &[DMatrix<Complex64>] {
        &self.betas
    }

    pub fn order(&self) -> usize {
        self.alphas.len()
    }

    pub fn ell(&self) -> usize {
        self.alphas[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.alphas[0].ncols()
    }

    pub fn apply_matrix(&self, y: &GridFunction) -> Result<DMatrix<Complex64>> {
        let order = self.order();
        let grid = y.grid();
        if y.rows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "MultipointBoundaryOperator::apply",
                expected: format!("{} rows", self.input_dim()),
                actual: format!("{}", y.rows()),
            });
        }
        y.check_order(order - 1)?;
        let t0_node = grid.node_index(self.t0)?;
        let mut out = DMatrix::zeros(self.ell(), y.cols());
        for (s, alpha) in self.alphas.iter().enumerate() {
            out += alpha * y.view(s, t0_node);
        }
        for (t, beta) in self.points.iter().zip(self.betas.iter()) {
            let node = grid.node_index(*t)?;
            out += beta * y.view(order - 1, node);
        }
        Ok(out)
    }

    pub fn apply(&self, y: &GridFunction) -> Result<DVector<Complex64>> {
        Ok(DVector::from_column_slice(self.apply_matrix(y)?.as_slice()))
    }
}

fn check_alpha_shapes(alphas: &[DMatrix<Complex64>]) -> Result<(usize, usize)> {
    if alphas.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "boundary operator",
            expected: "n + r >= 1 alpha matrices".into(),
            actual: "0".into(),
        });
    }
    let (ell, m) = (alphas[0].nrows(), alphas[0].ncols());
    if alphas.iter().any(|a| a.nrows() != ell || a.ncols() != m) {
        return Err(Error::DimensionMismatch {
            context: "boundary operator",
            expected: format!("alphas of shape {ell}x{m}"),
            actual: "mixed shapes".into(),
        });
    }
    if ell % m != 0 {
        return Err(Error::DimensionMismatch {
            context: "boundary operator",
            expected: "row count divisible by column count (l = r*m)".into(),
            actual: format!("{ell}x{m}"),
        });
    }
    Ok((ell, m))
}

/// Either form of boundary operator, dispatching the columnwise application.
#[derive(Debug, Clone)]
pub enum BoundaryOperator {
    Canonical(CanonicalBoundaryOperator),
    Multipoint(MultipointBoundaryOperator),
}

impl BoundaryOperator {
    pub fn apply_matrix(&self, y: &GridFunction) -> Result<DMatrix<Complex64>> {
        match self {
            BoundaryOperator::Canonical(b) => b.apply_matrix(y),
            BoundaryOperator::Multipoint(b) => b.apply_matrix(y),
        }
    }

    pub fn apply(&self, y: &GridFunction) -> Result<DVector<Complex64>> {
        match self {
            BoundaryOperator::Canonical(b) => b.apply(y),
            BoundaryOperator::Multipoint(b) => b.apply(y),
        }
    }

    pub fn order(&self) -> usize {
        match self {
            BoundaryOperator::Canonical(b) => b.order(),
            BoundaryOperator::Multipoint(b) => b.order(),
        }
    }

    pub fn ell(&self) -> usize {
        match self {
            BoundaryOperator::Canonical(b) => b.ell(),
            BoundaryOperator::Multipoint(b) => b.ell(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            BoundaryOperator::Canonical(b) => b.input_dim(),
            BoundaryOperator::Multipoint(b) => b.input_dim(),
        }
    }

    pub fn anchor(&self) -> f64 {
        match self {
            BoundaryOperator::Canonical(b) => b.anchor(),
            BoundaryOperator::Multipoint(b) => b.anchor(),
        }
    }

    pub fn as_canonical(&self) -> Option<&CanonicalBoundaryOperator> {
        match self {
            BoundaryOperator::Canonical(b) => Some(b),
            BoundaryOperator::Multipoint(_) => None,
        }
    }
}

/// Converts a canonical operator with a step density into the equivalent
/// multipoint operator.
///
/// The integral telescopes into `sum_j beta_j y^(n+r-1)(tau_j)` over the
/// breakpoints with `beta_j = -(Phi(tau_j+) - Phi(tau_j-))` and `Phi` extended
/// by zero outside `[a, b]`; the identity is exact for every `y`, so
/// `apply_multipoint . to_multipoint == apply_canonical` up to round-off.
/// Points whose jump vanishes are dropped.
pub fn to_multipoint(
    alphas: Vec<DMatrix<Complex64>>,
    phi: &StepMatrixFunction,
    t0: f64,
) -> Result<MultipointBoundaryOperator> {
    let (ell, m) = check_alpha_shapes(&alphas)?;
    if phi.rows() != ell || phi.cols() != m {
        return Err(Error::DimensionMismatch {
            context: "to_multipoint",
            expected: format!("density of shape {ell}x{m}"),
            actual: format!("{}x{}", phi.rows(), phi.cols()),
        });
    }
    let zero = DMatrix::zeros(ell, m);
    let mut points = Vec::new();
    let mut betas = Vec::new();
    for (j, tau) in phi.breakpoints().iter().enumerate() {
        let left = if j == 0 { &zero } else { &phi.pieces()[j - 1] };
        let right = if j == phi.piece_count() { &zero } else { &phi.pieces()[j] };
        let beta = left - right; // -(right - left) = -jump
        if beta.iter().any(|v| v.norm() != 0.0) {
            points.push(*tau);
            betas.push(beta);
        }
    }
    MultipointBoundaryOperator::new(t0, alphas, points, betas)
}

/// Max-row-sum magnitude of a complex matrix.
pub fn matrix_magnitude(m: &DMatrix<Complex64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.norm()).sum())
        .fold(0.0, f64::max)
}

/// Norm bound `gamma * max_s |alpha_s| + ||Phi||_{p'}` for a canonical
/// operator, with the max-row-sum magnitude for the alphas and the conjugate
/// exponent `p' = p/(p-1)`.
pub fn norm_bound(op: &CanonicalBoundaryOperator, gamma: f64, p: f64) -> Result<f64> {
    let p_prime = conjugate_exponent(p)?;
    let alpha_mag = op.alphas().iter().map(matrix_magnitude).fold(0.0, f64::max);
    Ok(gamma * alpha_mag + op.phi().lp_norm(p_prime)?)
}

/// Taylor monomial `(t - t0)^s / s!` times the basis vector `e_j`, with its
/// full derivative stack up to `max_order`.
pub fn taylor_monomial(
    grid: Grid,
    m: usize,
    j: usize,
    s: usize,
    t0: f64,
    max_order: usize,
) -> Result<GridFunction> {
    let mut out = GridFunction::zeros(grid, m, 1, max_order);
    for d in 0..=max_order {
        if d > s {
            break;
        }
        let mut fact = 1.0;
        for k in 1..=(s - d) {
            fact *= k as f64;
        }
        for i in 0..grid.node_count() {
            let v = (grid.node(i) - t0).powi((s - d) as i32) / fact;
            out.set_entry(d, i, j, 0, Complex64::new(v, 0.0));
        }
    }
    Ok(out)
}

/// Recovers the alpha part of the canonical representation of a linear
/// black-box functional by probing it with Taylor monomials.
///
/// Monomials of degree below `n + r` have a vanishing `(n+r)`-th derivative,
/// so the density contributes nothing and
/// `B((t - t0)^s / s! * e_j) = alpha_s e_j` exactly.
pub fn extract_alphas<F>(
    b: F,
    t0: f64,
    n: usize,
    r: usize,
    m: usize,
    grid: Grid,
) -> Result<Vec<DMatrix<Complex64>>>
where
    F: Fn(&GridFunction) -> Result<DVector<Complex64>>,
{
    let order = n + r;
    let mut alphas = Vec::with_capacity(order);
    for s in 0..order {
        let mut alpha = DMatrix::zeros(r * m, m);
        for j in 0..m {
            let probe = taylor_monomial(grid, m, j, s, t0, order)?;
            let image = b(&probe)?;
            if image.len() != r * m {
                return Err(Error::DimensionMismatch {
                    context: "extract_alphas",
                    expected: format!("{} outputs", r * m),
                    actual: format!("{}", image.len()),
                });
            }
            alpha.column_mut(j).copy_from(&image);
        }
        alphas.push(alpha);
    }
    Ok(alphas)
}

/// Empirical embedding constant `gamma` for [`norm_bound`]: the largest ratio
/// `sum_{s<order} max_t sum_c |y_c^(s)(t)| / ||y||_{order,p}` over a basis of
/// monomials and trigonometric functions plus seeded random combinations.
///
/// The true constant is existential in the underlying theory; this value is a
/// calibrated stand-in, adequate for validity experiments on the same class
/// of smooth test functions.
pub fn calibrate_embedding_constant(grid: Grid, m: usize, order: usize, p: f64) -> Result<f64> {
    let mut gamma: f64 = 0.0;
    let mut consider = |y: &GridFunction| -> Result<()> {
        let mut c_norm = 0.0;
        for s in 0..order {
            let mut sup: f64 = 0.0;
            for i in 0..grid.node_count() {
                sup = sup.max(y.component_abs_sum(s, i));
            }
            c_norm += sup;
        }
        let w_norm = sobolev_norm(y, order, p)?;
        if w_norm > 0.0 {
            gamma = gamma.max(c_norm / w_norm);
        }
        Ok(())
    };

    for j in 0..m {
        for s in 0..=(order + 2) {
            consider(&taylor_monomial(grid, m, j, s, grid.a(), order)?)?;
        }
    }
    for y in crate::testset::random_trig_functions(grid, m, 1, order, 64, 0xCA11B) {
        consider(&y)?;
    }
    Ok(gamma)
}

/// `L_{p'}` distance between a step function and grid samples, integrated
/// piecewise so that the jumps never cross a quadrature panel. Breakpoints
/// must be grid nodes.
pub fn step_density_distance(
    step: &StepMatrixFunction,
    phi: &GridFunction,
    p_prime: f64,
) -> Result<f64> {
    crate::grid::validate_exponent(p_prime)?;
    let grid = phi.grid();
    if step.rows() != phi.rows() || step.cols() != phi.cols() {
        return Err(Error::DimensionMismatch {
            context: "step_density_distance",
            expected: format!("{}x{}", phi.rows(), phi.cols()),
            actual: format!("{}x{}", step.rows(), step.cols()),
        });
    }
    let component_diff_sum = |piece: &DMatrix<Complex64>, node: usize, pw: f64| -> f64 {
        let mut acc = 0.0;
        for r in 0..phi.rows() {
            for c in 0..phi.cols() {
                let d = (piece[(r, c)] - phi.entry(0, node, r, c)).norm();
                acc += if pw.is_infinite() { d } else { d.powf(pw) };
            }
        }
        acc
    };
    if p_prime.is_infinite() {
        let mut sup: f64 = 0.0;
        for (j, piece) in step.pieces().iter().enumerate() {
            let i0 = grid.node_index(step.breakpoints()[j])?;
            let i1 = grid.node_index(step.breakpoints()[j + 1])?;
            for i in i0..=i1 {
                sup = sup.max(component_diff_sum(piece, i, f64::INFINITY));
            }
        }
        Ok(sup)
    } else {
        let mut total = 0.0;
        for (j, piece) in step.pieces().iter().enumerate() {
            let i0 = grid.node_index(step.breakpoints()[j])?;
            let i1 = grid.node_index(step.breakpoints()[j + 1])?;
            let weights = quadrature_weights(i1 - i0, grid.spacing());
            for (k, w) in weights.iter().enumerate() {
                total += w * component_diff_sum(piece, i0 + k, p_prime);
            }
        }
        Ok(total.max(0.0).powf(1.0 / p_prime))
    }
}

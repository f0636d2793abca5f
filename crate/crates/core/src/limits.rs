//! Parameter families over a sampled metric space, checkers for the
//! well-posedness and limit conditions, boundary-operator convergence modes,
//! and the continuity / two-sided-bound experiments.
//!
//! Analytic convergence cannot be certified from a finite sweep, only
//! evidenced, so every checker reduces to a *trend verdict*: the final
//! deviation must fall below a tenth of the initial one and the last three
//! rows must decrease (or the whole tail sits at round-off). Thresholds are
//! configurable through [`TrendConfig`].

use std::sync::Arc;

use num_complex::Complex64;

use crate::boundary::{matrix_magnitude, Density};
use crate::bvp::{
    solve, well_posedness, BoundaryValueProblem, PreparedProblem, WellPosednessVerdict,
};
use crate::grid::{conjugate_exponent, lp_norm, sample, sobolev_norm, Grid, GridFunction};
use crate::ode::apply_differential_operator;
use crate::testset::boundary_test_set;
use crate::{Error, Result};

/// One sampled parameter: a label, the raw value `mu`, and its distance to
/// the limit point.
#[derive(Debug, Clone)]
pub struct ParameterPoint {
    pub label: String,
    pub mu: f64,
    pub distance: f64,
}

/// Finite sampled parameter set with a designated limit point and a per-point
/// problem builder.
///
/// Points are kept sorted by decreasing distance with the limit (distance 0)
/// last, which fixes the row order of every report.
#[derive(Clone)]
pub struct ParameterFamily {
    points: Vec<ParameterPoint>,
    build: Arc<dyn Fn(&ParameterPoint) -> Result<BoundaryValueProblem> + Send + Sync>,
}

impl ParameterFamily {
    pub fn new<F>(mut points: Vec<ParameterPoint>, build: F) -> Result<Self>
    where
        F: Fn(&ParameterPoint) -> Result<BoundaryValueProblem> + Send + Sync + 'static,
    {
        let zero_count = points.iter().filter(|p| p.distance == 0.0).count();
        if zero_count != 1 {
            return Err(Error::InvalidFamily(format!(
                "need exactly one limit point with distance 0, found {zero_count}"
            )));
        }
        if points.iter().any(|p| p.distance < 0.0 || !p.distance.is_finite()) {
            return Err(Error::InvalidFamily("distances must be finite and >= 0".into()));
        }
        points.sort_by(|a, b| b.distance.partial_cmp(&a.distance).unwrap());
        Ok(Self {
            points,
            build: Arc::new(build),
        })
    }

    /// Sweep over raw values with the metric `d = |mu - mu0|`.
    pub fn from_mu_sweep<F>(mus: &[f64], mu0: f64, build: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<BoundaryValueProblem> + Send + Sync + 'static,
    {
        let mut points: Vec<ParameterPoint> = mus
            .iter()
            .map(|&mu| ParameterPoint {
                label: format!("mu={mu}"),
                mu,
                distance: (mu - mu0).abs(),
            })
            .collect();
        points.push(ParameterPoint {
            label: format!("mu0={mu0}"),
            mu: mu0,
            distance: 0.0,
        });
        Self::new(points, move |p| build(p.mu))
    }

    /// Integer-sequence sweep with the metric `d(k, 0) = 1/k`; the limit is
    /// the index 0, conventionally standing for the original problem.
    pub fn from_sequence<F>(ks: &[u32], build: F) -> Result<Self>
    where
        F: Fn(u32) -> Result<BoundaryValueProblem> + Send + Sync + 'static,
    {
        let mut points: Vec<ParameterPoint> = ks
            .iter()
            .filter(|&&k| k > 0)
            .map(|&k| ParameterPoint {
                label: format!("k={k}"),
                mu: k as f64,
                distance: 1.0 / k as f64,
            })
            .collect();
        points.push(ParameterPoint {
            label: "k=0".into(),
            mu: 0.0,
            distance: 0.0,
        });
        Self::new(points, move |p| build(p.mu as u32))
    }

    /// All points, limit last.
    pub fn points(&self) -> &[ParameterPoint] {
        &self.points
    }

    /// Non-limit points in decreasing distance.
    pub fn sweep_points(&self) -> &[ParameterPoint] {
        &self.points[..self.points.len() - 1]
    }

    pub fn limit(&self) -> &ParameterPoint {
        self.points.last().expect("validated non-empty")
    }

    pub fn build(&self, point: &ParameterPoint) -> Result<BoundaryValueProblem> {
        (self.build)(point)
    }

    pub fn build_limit(&self) -> Result<BoundaryValueProblem> {
        self.build(self.limit())
    }

    /// Family with every right-hand side (`f` and `c`) multiplied by a fixed
    /// factor; used by linearity experiments.
    pub fn scaled_rhs(&self, factor: Complex64) -> ParameterFamily {
        let inner = self.build.clone();
        ParameterFamily {
            points: self.points.clone(),
            build: Arc::new(move |p| {
                let bvp = inner(p)?;
                let system = bvp.system.with_rhs(bvp.system.rhs().scale(factor))?;
                BoundaryValueProblem::new(system, bvp.boundary, bvp.c * factor)
            }),
        }
    }
}

/// Thresholds of the trend verdict.
#[derive(Debug, Clone, Copy)]
pub struct TrendConfig {
    /// Final deviation must not exceed `ratio` times the initial one.
    pub ratio: f64,
    /// Deviations below this floor count as converged outright.
    pub floor: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            ratio: 0.1,
            floor: 1e-12,
        }
    }
}

impl TrendConfig {
    /// Trend test over deviations ordered by decreasing distance.
    pub fn converged(&self, deviations: &[f64]) -> bool {
        match deviations {
            [] => false,
            [single] => *single <= self.floor,
            devs => {
                let first = devs[0];
                let last = devs[devs.len() - 1];
                if last <= self.floor {
                    return true;
                }
                if last > self.ratio * first {
                    return false;
                }
                let tail = &devs[devs.len().saturating_sub(3)..];
                tail.windows(2).all(|w| w[0] > w[1])
            }
        }
    }
}

/// Shared configuration of the checkers and experiments.
#[derive(Debug, Clone, Copy)]
pub struct CheckContext {
    pub grid: Grid,
    /// Anchor node of the fundamental systems.
    pub anchor: f64,
    pub p: f64,
    pub wp_tol: f64,
    pub trend: TrendConfig,
    /// Seed of the generated test sets.
    pub seed: u64,
    /// Fallback bound for the density-norm condition (b) when the limit
    /// density vanishes.
    pub bound_cap: f64,
    /// Accepted spread `max/min` of the two-sided ratio table.
    pub ratio_spread_bound: f64,
}

impl CheckContext {
    pub fn new(grid: Grid, p: f64) -> Self {
        Self {
            grid,
            anchor: grid.a(),
            p,
            wp_tol: crate::bvp::DEFAULT_WP_TOL,
            trend: TrendConfig::default(),
            seed: 0x5EED,
            bound_cap: 100.0,
            ratio_spread_bound: 100.0,
        }
    }
}

/// Per-point deviation rows plus the trend verdict.
#[derive(Debug, Clone)]
pub struct TrendReport {
    pub rows: Vec<(ParameterPoint, f64)>,
    pub pass: bool,
}

impl TrendReport {
    fn from_rows(rows: Vec<(ParameterPoint, f64)>, trend: &TrendConfig) -> Self {
        let deviations: Vec<f64> = rows.iter().map(|(_, d)| *d).collect();
        let pass = trend.converged(&deviations);
        Self { rows, pass }
    }

    pub fn deviations(&self) -> Vec<f64> {
        self.rows.iter().map(|(_, d)| *d).collect()
    }
}

/// Condition (0): the homogeneous limit problem has only the trivial
/// solution, tested through the characteristic matrix at the limit point.
pub fn check_condition_zero(
    family: &ParameterFamily,
    ctx: &CheckContext,
) -> Result<WellPosednessVerdict> {
    let bvp = family.build_limit()?;
    let matrix =
        crate::bvp::characteristic_matrix(&bvp.system, &bvp.boundary, ctx.anchor, ctx.grid)?;
    Ok(well_posedness(&matrix, ctx.wp_tol))
}

/// Limit Condition (I): coefficient convergence
/// `sum_l ||A_{r-l}(mu) - A_{r-l}(mu0)||_{n,p} -> 0`.
pub fn check_condition_i(family: &ParameterFamily, ctx: &CheckContext) -> Result<TrendReport> {
    let limit = family.build_limit()?;
    let n = limit.system.smoothness();
    let limit_samples: Vec<GridFunction> = limit
        .system
        .coefficients()
        .iter()
        .map(|a| sample(a, ctx.grid, n))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for point in family.sweep_points() {
        let bvp = family.build(point)?;
        let mut deviation = 0.0;
        for (a, a0) in bvp.system.coefficients().iter().zip(limit_samples.iter()) {
            let diff = sample(a, ctx.grid, n)?.difference(a0)?;
            deviation += sobolev_norm(&diff, n, ctx.p)?;
        }
        rows.push((point.clone(), deviation));
    }
    Ok(TrendReport::from_rows(rows, &ctx.trend))
}

/// Limit Condition (II): `B(mu) y -> B(mu0) y` probed on the finite test set
/// (monomial matrix functions plus seeded trigonometric functions); the
/// deviation per point is the worst Frobenius norm over the set.
///
/// Sound for refutation; for confirmation it is evidence on the test set
/// only.
pub fn check_condition_ii(family: &ParameterFamily, ctx: &CheckContext) -> Result<TrendReport> {
    let limit = family.build_limit()?;
    let order = limit.system.solution_order();
    let m = limit.system.dimension();
    let test_set = boundary_test_set(ctx.grid, m, order, ctx.seed);
    let limit_values: Vec<_> = test_set
        .iter()
        .map(|y| limit.boundary.apply_matrix(y))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for point in family.sweep_points() {
        let bvp = family.build(point)?;
        let mut worst: f64 = 0.0;
        for (y, b0) in test_set.iter().zip(limit_values.iter()) {
            let deviation = (bvp.boundary.apply_matrix(y)? - b0).norm();
            worst = worst.max(deviation);
        }
        rows.push((point.clone(), worst));
    }
    Ok(TrendReport::from_rows(rows, &ctx.trend))
}

/// Empirical deviation of the differential operator,
/// `sup_test ||(L(mu) - L(mu0)) y||_{n,p} / ||y||_{n+r,p}`; the experimental
/// side of the equivalence between coefficient convergence and operator
/// convergence.
pub fn l_operator_deviation(family: &ParameterFamily, ctx: &CheckContext) -> Result<TrendReport> {
    let limit = family.build_limit()?;
    let order = limit.system.solution_order();
    let m = limit.system.dimension();
    let n = limit.system.smoothness();
    let test_set: Vec<GridFunction> = boundary_test_set(ctx.grid, m, order, ctx.seed)
        .into_iter()
        .flat_map(|y| (0..m).map(move |j| y.column(j)))
        .collect();
    let limit_images: Vec<GridFunction> = test_set
        .iter()
        .map(|y| apply_differential_operator(&limit.system, y))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for point in family.sweep_points() {
        let bvp = family.build(point)?;
        let mut worst: f64 = 0.0;
        for (y, l0y) in test_set.iter().zip(limit_images.iter()) {
            let ly = apply_differential_operator(&bvp.system, y)?;
            let dev = sobolev_norm(&ly.difference(l0y)?, n, ctx.p)?;
            let denom = sobolev_norm(y, order, ctx.p)?;
            if denom > 0.0 {
                worst = worst.max(dev / denom);
            }
        }
        rows.push((point.clone(), worst));
    }
    Ok(TrendReport::from_rows(rows, &ctx.trend))
}

/// Convergence mode of the boundary-operator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceMode {
    Strong,
    Uniform,
}

/// Boundedness rows for condition (b): per-point density norms against the
/// admissible bound.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub rows: Vec<(ParameterPoint, f64)>,
    pub bound: f64,
    pub pass: bool,
}

/// Verdicts on the four asymptotic conditions of boundary-operator
/// convergence.
#[derive(Debug, Clone)]
pub struct BConvergenceReport {
    /// (a) alpha-matrix convergence.
    pub alpha_trend: TrendReport,
    /// (b) density norms bounded.
    pub density_bounded: BoundReport,
    /// (c) primitive (running integral) convergence, sup over nodes.
    pub primitive_trend: TrendReport,
    /// (d) density convergence in `L_{p'}`.
    pub density_trend: TrendReport,
    pub strong: bool,
    pub uniform: bool,
    /// Verdict of the requested mode.
    pub pass: bool,
}

fn canonical_of(bvp: &BoundaryValueProblem) -> Result<&crate::boundary::CanonicalBoundaryOperator> {
    bvp.boundary.as_canonical().ok_or_else(|| {
        Error::Unsupported("boundary-operator convergence checks need the canonical form".into())
    })
}

/// Cumulative trapezoid primitives `int_a^{t_i}` of the order-0 samples,
/// entrywise; returned as node-indexed matrices.
fn primitives(phi: &GridFunction) -> Vec<nalgebra::DMatrix<Complex64>> {
    let grid = phi.grid();
    let h = Complex64::new(grid.spacing() / 2.0, 0.0);
    let mut acc = nalgebra::DMatrix::zeros(phi.rows(), phi.cols());
    let mut out = Vec::with_capacity(grid.node_count());
    out.push(acc.clone());
    for i in 1..grid.node_count() {
        acc += (phi.view(0, i - 1) + phi.view(0, i)) * h;
        out.push(acc.clone());
    }
    out
}

/// Checks conditions (a)-(d) for a family of canonical boundary operators
/// and combines them per the requested mode: strong requires (a), (b), (c);
/// uniform requires (a) and (d). `p = infinity` is out of scope.
pub fn check_b_convergence(
    family: &ParameterFamily,
    mode: ConvergenceMode,
    ctx: &CheckContext,
) -> Result<BConvergenceReport> {
    if ctx.p.is_infinite() {
        return Err(Error::Unsupported(
            "boundary-operator convergence checks require p < infinity".into(),
        ));
    }
    let p_prime = conjugate_exponent(ctx.p)?;
    let limit = family.build_limit()?;
    let b0 = canonical_of(&limit)?;
    let phi0 = b0.phi().sample_on(ctx.grid)?;
    let phi0_norm = b0.phi().lp_norm(p_prime)?;
    let phi0_primitives = primitives(&phi0);
    let bound = (10.0 * phi0_norm).max(ctx.bound_cap);

    let mut alpha_rows = Vec::new();
    let mut norm_rows = Vec::new();
    let mut primitive_rows = Vec::new();
    let mut density_rows = Vec::new();
    for point in family.sweep_points() {
        let bvp = family.build(point)?;
        let b = canonical_of(&bvp)?;
        let alpha_dev = b
            .alphas()
            .iter()
            .zip(b0.alphas().iter())
            .map(|(a, a0)| matrix_magnitude(&(a - a0)))
            .fold(0.0, f64::max);
        alpha_rows.push((point.clone(), alpha_dev));

        norm_rows.push((point.clone(), b.phi().lp_norm(p_prime)?));

        let phi = b.phi().sample_on(ctx.grid)?;
        let prim = primitives(&phi);
        let prim_dev = prim
            .iter()
            .zip(phi0_primitives.iter())
            .map(|(a, a0)| matrix_magnitude(&(a - a0)))
            .fold(0.0, f64::max);
        primitive_rows.push((point.clone(), prim_dev));

        let density_dev = match (b.phi(), b0.phi()) {
            (Density::Step(s), Density::Grid(_)) => {
                crate::boundary::step_density_distance(s, &phi0, p_prime)?
            }
            (Density::Grid(_), Density::Step(s0)) => {
                crate::boundary::step_density_distance(s0, &phi, p_prime)?
            }
            _ => lp_norm(&phi.difference(&phi0)?, 0, p_prime)?,
        };
        density_rows.push((point.clone(), density_dev));
    }

    let alpha_trend = TrendReport::from_rows(alpha_rows, &ctx.trend);
    let bounded = norm_rows.iter().all(|(_, n)| *n <= bound);
    let density_bounded = BoundReport {
        rows: norm_rows,
        bound,
        pass: bounded,
    };
    let primitive_trend = TrendReport::from_rows(primitive_rows, &ctx.trend);
    let density_trend = TrendReport::from_rows(density_rows, &ctx.trend);

    let strong = alpha_trend.pass && density_bounded.pass && primitive_trend.pass;
    let uniform = alpha_trend.pass && density_trend.pass;
    let pass = match mode {
        ConvergenceMode::Strong => strong,
        ConvergenceMode::Uniform => uniform,
    };
    Ok(BConvergenceReport {
        alpha_trend,
        density_bounded,
        primitive_trend,
        density_trend,
        strong,
        uniform,
        pass,
    })
}

/// One row of a [`ConvergenceReport`].
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub point: ParameterPoint,
    pub coefficient_deviation: f64,
    pub boundary_deviation: f64,
    /// Deviation `||y(mu) - y(mu0)||_{n+r,p}`; absent when the instance is
    /// not well posed.
    pub solution_deviation: Option<f64>,
    /// Discrepancy of `y(mu0)` against the instance at `mu`.
    pub discrepancy: f64,
    /// `solution_deviation / discrepancy` where the discrepancy is above
    /// round-off.
    pub ratio: Option<f64>,
    pub well_posed: bool,
}

/// Output of [`continuity_experiment`].
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub condition_zero: bool,
    pub condition_i: bool,
    pub condition_ii: bool,
    /// Trend verdict of the solution deviations.
    pub solutions_converge: bool,
    /// Forward direction observed: all three conditions hold and the
    /// solutions converge, or some condition fails and they do not.
    pub consistent_with_theory: bool,
}

const RATIO_FLOOR: f64 = 1e-14;

/// Solves every instance of the family and compares against the limit
/// solution; the per-row discrepancies make the rows directly comparable to
/// the two-sided bound. Non-well-posed instances inside the sweep are
/// reported per row, not fatal.
pub fn continuity_experiment(
    family: &ParameterFamily,
    ctx: &CheckContext,
) -> Result<ConvergenceReport> {
    let zero = check_condition_zero(family, ctx)?;
    let cond_i = check_condition_i(family, ctx)?;
    let cond_ii = check_condition_ii(family, ctx)?;

    let limit_bvp = family.build_limit()?;
    let y0 = solve(&limit_bvp, ctx.anchor, ctx.grid)?.y;
    let order = limit_bvp.system.solution_order();

    let mut rows = Vec::new();
    let mut deviations = Vec::new();
    for ((point, coeff_dev), (_, boundary_dev)) in
        cond_i.rows.iter().zip(cond_ii.rows.iter())
    {
        let bvp = family.build(point)?;
        let d_tilde = crate::bvp::discrepancy(&bvp, &y0, ctx.p)?;
        let solved = solve(&bvp, ctx.anchor, ctx.grid);
        let (solution_deviation, well_posed) = match solved {
            Ok(sol) => {
                let dev = sobolev_norm(&sol.y.difference(&y0)?, order, ctx.p)?;
                (Some(dev), true)
            }
            Err(Error::NotWellPosed { .. }) => (None, false),
            Err(e) => return Err(e),
        };
        if let Some(dev) = solution_deviation {
            deviations.push(dev);
        }
        let ratio = solution_deviation
            .filter(|_| d_tilde > RATIO_FLOOR)
            .map(|dev| dev / d_tilde);
        rows.push(ConvergenceRow {
            point: point.clone(),
            coefficient_deviation: *coeff_dev,
            boundary_deviation: *boundary_dev,
            solution_deviation,
            discrepancy: d_tilde,
            ratio,
            well_posed,
        });
    }

    let solutions_converge =
        deviations.len() == rows.len() && ctx.trend.converged(&deviations);
    let conditions = zero.well_posed && cond_i.pass && cond_ii.pass;
    let consistent_with_theory = conditions == solutions_converge;
    Ok(ConvergenceReport {
        rows,
        condition_zero: zero.well_posed,
        condition_i: cond_i.pass,
        condition_ii: cond_ii.pass,
        solutions_converge,
        consistent_with_theory,
    })
}

/// One row of the two-sided ratio table.
#[derive(Debug, Clone)]
pub struct RatioRow {
    pub point: ParameterPoint,
    pub solution_deviation: f64,
    pub discrepancy: f64,
    pub ratio: f64,
}

/// Empirical two-sided bound: the ratios
/// `rho(mu) = ||y(mu0) - y(mu)||_{n+r,p} / d(mu)` bracket the proportionality
/// constants; their extremes over the sweep estimate gamma_1 (min) and
/// gamma_2 (max).
#[derive(Debug, Clone)]
pub struct RatioTable {
    pub rows: Vec<RatioRow>,
    pub gamma1_estimate: f64,
    pub gamma2_estimate: f64,
    /// `gamma2_estimate / gamma1_estimate`.
    pub spread: f64,
    pub pass: bool,
}

/// Ratio table of the family; rows with discrepancy at round-off are
/// excluded. The verdict requires every ratio finite and positive with
/// spread below the configured bound.
pub fn two_sided_bound_experiment(
    family: &ParameterFamily,
    ctx: &CheckContext,
) -> Result<RatioTable> {
    let limit_bvp = family.build_limit()?;
    let y0 = solve(&limit_bvp, ctx.anchor, ctx.grid)?.y;
    let order = limit_bvp.system.solution_order();
    let mut rows = Vec::new();
    for point in family.sweep_points() {
        let bvp = family.build(point)?;
        let d_tilde = crate::bvp::discrepancy(&bvp, &y0, ctx.p)?;
        if d_tilde <= RATIO_FLOOR {
            continue;
        }
        let y = solve(&bvp, ctx.anchor, ctx.grid)?.y;
        let dev = sobolev_norm(&y.difference(&y0)?, order, ctx.p)?;
        rows.push(RatioRow {
            point: point.clone(),
            solution_deviation: dev,
            discrepancy: d_tilde,
            ratio: dev / d_tilde,
        });
    }
    let gamma1 = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let gamma2 = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    let spread = if rows.is_empty() { f64::NAN } else { gamma2 / gamma1 };
    let pass = !rows.is_empty()
        && rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0)
        && spread <= ctx.ratio_spread_bound;
    Ok(RatioTable {
        rows,
        gamma1_estimate: gamma1,
        gamma2_estimate: gamma2,
        spread,
        pass,
    })
}

/// Convenience: solve one instance of a family with shared context settings.
pub fn solve_instance(
    bvp: &BoundaryValueProblem,
    ctx: &CheckContext,
) -> Result<(GridFunction, WellPosednessVerdict)> {
    let prepared = PreparedProblem::new(&bvp.system, &bvp.boundary, ctx.anchor, ctx.grid, ctx.wp_tol)?;
    let y = prepared.solve_with(bvp.system.rhs(), &bvp.c)?;
    Ok((y, prepared.verdict().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn trend_verdict_logic() {
        let trend = TrendConfig::default();
        assert!(trend.converged(&[1.0, 0.5, 0.2, 0.05]));
        assert!(!trend.converged(&[1.0, 0.5, 0.5, 0.5])); // stalls
        assert!(!trend.converged(&[1.0, 0.05, 0.06, 0.04])); // tail not decreasing
        assert!(trend.converged(&[0.0, 0.0, 0.0, 0.0])); // identically zero
        assert!(trend.converged(&[1e-15, 2e-15, 1e-15])); // round-off floor
        assert!(!trend.converged(&[]));
    }

    #[test]
    fn relaxation_family_all_conditions_pass() {
        let ctx = CheckContext::new(Grid::new(0.0, 1.0, 512).unwrap(), 2.0);
        let family = fixtures::relaxation_family(ctx.grid).unwrap();

        let zero = check_condition_zero(&family, &ctx).unwrap();
        assert!(zero.well_posed);

        let cond_i = check_condition_i(&family, &ctx).unwrap();
        assert!(cond_i.pass, "deviations {:?}", cond_i.deviations());
        // A(mu) - A(mu0) = mu: deviations scale linearly in mu
        let devs = cond_i.deviations();
        assert!((devs[0] / devs[1] - 2.0).abs() < 1e-9);

        let cond_ii = check_condition_ii(&family, &ctx).unwrap();
        assert!(cond_ii.pass);
        assert!(cond_ii.deviations().iter().all(|d| *d < 1e-12));
    }

    #[test]
    fn condition_i_stationary_and_divergent() {
        let grid = Grid::new(0.0, 1.0, 128).unwrap();
        let ctx = CheckContext::new(grid, 2.0);

        let stationary = fixtures::boundary_only_family(grid).unwrap();
        let report = check_condition_i(&stationary, &ctx).unwrap();
        assert!(report.pass);
        assert!(report.deviations().iter().all(|d| *d == 0.0));

        let flip = fixtures::sign_flip_family(grid).unwrap();
        let report = check_condition_i(&flip, &ctx).unwrap();
        assert!(!report.pass);
        let devs = report.deviations();
        // |A(mu) - A(mu0)| = |1 - (-1)| = 2, constant across the sweep
        for d in devs {
            assert!((d - 2.0).abs() < 1e-9, "expected constant 2, got {d}");
        }
    }

    #[test]
    fn condition_ii_affine_alpha_family() {
        let grid = Grid::new(0.0, 1.0, 128).unwrap();
        let ctx = CheckContext::new(grid, 2.0);
        let family = fixtures::boundary_only_family(grid).unwrap();
        let report = check_condition_ii(&family, &ctx).unwrap();
        assert!(report.pass);
        // deviation is proportional to |mu|
        let devs = report.deviations();
        assert!((devs[0] / devs[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn continuity_experiment_smooth_family() {
        let ctx = CheckContext::new(Grid::new(0.0, 1.0, 512).unwrap(), 2.0);
        let family = fixtures::relaxation_family(ctx.grid).unwrap();
        let report = continuity_experiment(&family, &ctx).unwrap();
        assert!(report.condition_zero && report.condition_i && report.condition_ii);
        assert!(report.solutions_converge);
        assert!(report.consistent_with_theory);
        // closed form: deviation decreases linearly in mu
        let devs: Vec<f64> = report
            .rows
            .iter()
            .map(|r| r.solution_deviation.unwrap())
            .collect();
        let ratio = devs[0] / devs[1];
        assert!((ratio - 2.0).abs() < 0.2, "expected ~2, got {ratio}");
    }

    #[test]
    fn continuity_experiment_detects_divergence() {
        let ctx = CheckContext::new(Grid::new(0.0, 1.0, 256).unwrap(), 2.0);
        let family = fixtures::sign_flip_family(ctx.grid).unwrap();
        let report = continuity_experiment(&family, &ctx).unwrap();
        assert!(!report.condition_i);
        assert!(!report.solutions_converge);
        assert!(report.consistent_with_theory);
    }

    #[test]
    fn stationary_family_has_degenerate_ratio_table() {
        let ctx = CheckContext::new(Grid::new(0.0, 1.0, 256).unwrap(), 2.0);
        let family = fixtures::stationary_family(ctx.grid).unwrap();
        let table = two_sided_bound_experiment(&family, &ctx).unwrap();
        assert!(table.rows.is_empty());
        assert!(!table.pass);
    }

    #[test]
    fn two_sided_ratios_bounded_and_scale_invariant() {
        let ctx = CheckContext::new(Grid::new(0.0, 1.0, 512).unwrap(), 2.0);
        let family = fixtures::relaxation_family(ctx.grid).unwrap();
        let table = two_sided_bound_experiment(&family, &ctx).unwrap();
        assert_eq!(table.rows.len(), 8);
        assert!(table.pass, "spread {}", table.spread);
        assert!(table.spread <= 50.0);

        let scaled = family.scaled_rhs(Complex64::new(10.0, 0.0));
        let table10 = two_sided_bound_experiment(&scaled, &ctx).unwrap();
        for (a, b) in table.rows.iter().zip(table10.rows.iter()) {
            let rel = (a.ratio - b.ratio).abs() / a.ratio;
            assert!(rel <= 0.01, "ratio changed by {rel}");
        }
    }

    #[test]
    fn oscillating_density_strong_but_not_uniform() {
        let grid = Grid::new(0.0, std::f64::consts::PI, 2048).unwrap();
        let ctx = CheckContext::new(grid, 2.0);
        let family = fixtures::oscillating_density_family(grid, &[1, 2, 4, 8, 16, 32, 64]).unwrap();
        let report = check_b_convergence(&family, ConvergenceMode::Strong, &ctx).unwrap();
        assert!(report.alpha_trend.pass);
        assert!(report.density_bounded.pass);
        assert!(report.primitive_trend.pass);
        assert!(!report.density_trend.pass);
        assert!(report.strong && !report.uniform);
        assert!(report.pass);

        // primitive sup matches the closed form 2/k within 10%
        for (point, dev) in &report.primitive_trend.rows {
            let expected = 2.0 / point.mu;
            assert!(
                (dev - expected).abs() <= 0.1 * expected,
                "k = {}: {dev} vs {expected}",
                point.mu
            );
        }
        // density norms match sqrt(pi/2) within 1%
        let target = (std::f64::consts::PI / 2.0).sqrt();
        for (_, norm) in &report.density_bounded.rows {
            assert!((norm - target).abs() <= 0.01 * target);
        }
    }

    #[test]
    fn shrinking_density_converges_uniformly() {
        let grid = Grid::new(0.0, std::f64::consts::PI, 1024).unwrap();
        let ctx = CheckContext::new(grid, 2.0);
        let family = fixtures::shrinking_density_family(grid, &[1, 2, 4, 8, 16]).unwrap();
        let report = check_b_convergence(&family, ConvergenceMode::Uniform, &ctx).unwrap();
        assert!(report.uniform && report.strong);
        assert!(report.pass);
        // (d) passing implies (b) and (c) pass
        assert!(report.density_bounded.pass && report.primitive_trend.pass);
    }

    #[test]
    fn p_infinity_rejected() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let mut ctx = CheckContext::new(grid, f64::INFINITY);
        ctx.p = f64::INFINITY;
        let family = fixtures::relaxation_family(grid).unwrap();
        assert!(matches!(
            check_b_convergence(&family, ConvergenceMode::Strong, &ctx),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn l_deviation_tracks_condition_i() {
        let ctx = CheckContext::new(Grid::new(0.0, 1.0, 256).unwrap(), 2.0);
        let smooth = fixtures::relaxation_family(ctx.grid).unwrap();
        assert!(l_operator_deviation(&smooth, &ctx).unwrap().pass);
        let flip = fixtures::sign_flip_family(ctx.grid).unwrap();
        assert!(!l_operator_deviation(&flip, &ctx).unwrap().pass);
    }
}

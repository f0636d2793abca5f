//! Shipped example problems and parameter families used across the test
//! suites and mirrored by the command-line fixture configs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::boundary::{BoundaryOperator, CanonicalBoundaryOperator, Density, StepMatrixFunction};
use crate::bvp::BoundaryValueProblem;
use crate::grid::{CoefficientFunction, Grid, GridFunction};
use crate::limits::ParameterFamily;
use crate::ode::DifferentialSystem;
use crate::Result;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn scalar_mat(v: f64) -> DMatrix<Complex64> {
    DMatrix::from_element(1, 1, c(v))
}

/// First-order scalar system `y' + a0 y = f` with constant `a0`.
fn first_order_constant(a0: f64, f: CoefficientFunction) -> Result<DifferentialSystem> {
    DifferentialSystem::new(
        1,
        1,
        0,
        vec![CoefficientFunction::constant(scalar_mat(a0), 0)],
        f,
    )
}

/// Initial-value functional `B y = y(a)` for first-order scalar problems.
pub fn initial_value_operator(grid: Grid) -> BoundaryOperator {
    let _ = grid;
    BoundaryOperator::Multipoint(
        crate::boundary::MultipointBoundaryOperator::new(
            0.0,
            vec![scalar_mat(1.0)],
            vec![],
            vec![],
        )
        .expect("valid shapes"),
    )
}

/// Dirichlet pair `(y(a), y(b))` in canonical form for `r = 2`, `n = 0`
/// scalar problems: `y(b) = y(a) + (b-a) y'(a) + int_a^b (b-t) y''(t) dt`.
pub fn dirichlet_operator(grid: Grid) -> Result<BoundaryOperator> {
    let (a, b) = (grid.a(), grid.b());
    let alphas = vec![
        DMatrix::from_column_slice(2, 1, &[c(1.0), c(1.0)]),
        DMatrix::from_column_slice(2, 1, &[c(0.0), c(b - a)]),
    ];
    let phi = GridFunction::from_fn(grid, 2, 1, 0, |_, t| {
        DMatrix::from_column_slice(2, 1, &[c(0.0), c(b - t)])
    })?;
    Ok(BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
        a,
        alphas,
        Density::Grid(phi),
    )?))
}

/// Manufactured Dirichlet problem `y'' = -pi^2 sin(pi t)` on `[0, 1]` with
/// boundary values `(0, 0)`; the solution is `sin(pi t)`. Returns the
/// problem together with the exact solution's derivative stack.
pub fn dirichlet_sine(grid: Grid) -> Result<(BoundaryValueProblem, GridFunction)> {
    let pi = std::f64::consts::PI;
    let system = DifferentialSystem::new(
        1,
        2,
        0,
        vec![
            CoefficientFunction::zero(1, 1, 0),
            CoefficientFunction::zero(1, 1, 0),
        ],
        CoefficientFunction::scalar(0, move |t, _| c(-pi * pi * (pi * t).sin())),
    )?;
    let bvp = BoundaryValueProblem::new(
        system,
        dirichlet_operator(grid)?,
        DVector::from_column_slice(&[c(0.0), c(0.0)]),
    )?;
    let exact = GridFunction::from_fn(grid, 1, 1, 2, |d, t| {
        let v = match d {
            0 => (pi * t).sin(),
            1 => pi * (pi * t).cos(),
            _ => -pi * pi * (pi * t).sin(),
        };
        scalar_mat(v)
    })?;
    Ok((bvp, exact))
}

/// The manufactured sine problem posed with initial conditions
/// `(y(0), y'(0)) = (0, pi)` written canonically with a zero density; the
/// approximation pipeline changes nothing but the polynomial degree here.
pub fn sine_with_initial_conditions(grid: Grid) -> Result<(BoundaryValueProblem, GridFunction)> {
    let pi = std::f64::consts::PI;
    let system = DifferentialSystem::new(
        1,
        2,
        0,
        vec![
            CoefficientFunction::zero(1, 1, 0),
            CoefficientFunction::zero(1, 1, 0),
        ],
        CoefficientFunction::scalar(0, move |t, _| c(-pi * pi * (pi * t).sin())),
    )?;
    let alphas = vec![
        DMatrix::from_column_slice(2, 1, &[c(1.0), c(0.0)]),
        DMatrix::from_column_slice(2, 1, &[c(0.0), c(1.0)]),
    ];
    let phi = StepMatrixFunction::constant(grid.a(), grid.b(), DMatrix::zeros(2, 1))?;
    let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
        grid.a(),
        alphas,
        Density::Step(phi),
    )?);
    let bvp = BoundaryValueProblem::new(
        system,
        boundary,
        DVector::from_column_slice(&[c(0.0), c(pi)]),
    )?;
    let exact = GridFunction::from_fn(grid, 1, 1, 2, |d, t| {
        let v = match d {
            0 => (pi * t).sin(),
            1 => pi * (pi * t).cos(),
            _ => -pi * pi * (pi * t).sin(),
        };
        scalar_mat(v)
    })?;
    Ok((bvp, exact))
}

/// Periodic oscillator `y'' + y = 0` on `[0, 2pi]` with conditions
/// `(y(2pi) - y(0), y'(2pi) - y'(0))` in canonical form. Both fundamental
/// solutions are periodic, so the characteristic matrix vanishes: the
/// standard non-well-posed fixture.
pub fn periodic_oscillator(grid: Grid) -> Result<BoundaryValueProblem> {
    let two_pi = grid.b() - grid.a();
    let system = DifferentialSystem::new(
        1,
        2,
        0,
        vec![
            CoefficientFunction::constant(scalar_mat(1.0), 0),
            CoefficientFunction::zero(1, 1, 0),
        ],
        CoefficientFunction::zero(1, 1, 0),
    )?;
    // y(b) - y(a) = (b-a) y'(a) + int (b-t) y''; y'(b) - y'(a) = int y''
    let alphas = vec![
        DMatrix::zeros(2, 1),
        DMatrix::from_column_slice(2, 1, &[c(two_pi), c(0.0)]),
    ];
    let phi = GridFunction::from_fn(grid, 2, 1, 0, |_, t| {
        DMatrix::from_column_slice(2, 1, &[c(grid.b() - t), c(1.0)])
    })?;
    let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
        grid.a(),
        alphas,
        Density::Grid(phi),
    )?);
    BoundaryValueProblem::new(
        system,
        boundary,
        DVector::from_column_slice(&[c(0.0), c(0.0)]),
    )
}

/// Smooth-converging family `y' + (1 + mu) y = 1, y(0) = 0` over
/// `mu = 2^-j`, `j = 1..8`, with limit `mu0 = 0`; the closed-form solution is
/// `(1 - exp(-(1+mu) t)) / (1 + mu)`.
pub fn relaxation_family(grid: Grid) -> Result<ParameterFamily> {
    let mus: Vec<f64> = (1..=8).map(|j| 2.0f64.powi(-j)).collect();
    let op = initial_value_operator(grid);
    ParameterFamily::from_mu_sweep(&mus, 0.0, move |mu| {
        let system = first_order_constant(
            1.0 + mu,
            CoefficientFunction::constant(scalar_mat(1.0), 0),
        )?;
        BoundaryValueProblem::new(system, op.clone(), DVector::from_element(1, c(0.0)))
    })
}

/// Boundary-only-converging family: fixed system `y' + y = 1` with the
/// varying functional `B(mu) y = (1 + mu) y(0) = 1`.
pub fn boundary_only_family(grid: Grid) -> Result<ParameterFamily> {
    let _ = grid;
    let mus: Vec<f64> = (1..=6).map(|j| 2.0f64.powi(-j)).collect();
    ParameterFamily::from_mu_sweep(&mus, 0.0, move |mu| {
        let system =
            first_order_constant(1.0, CoefficientFunction::constant(scalar_mat(1.0), 0))?;
        let boundary = BoundaryOperator::Multipoint(
            crate::boundary::MultipointBoundaryOperator::new(
                0.0,
                vec![scalar_mat(1.0 + mu)],
                vec![],
                vec![],
            )?,
        );
        BoundaryValueProblem::new(system, boundary, DVector::from_element(1, c(1.0)))
    })
}

/// Non-converging family: the coefficient is `+1` along the whole sweep but
/// flips to `-1` at the limit point, so the coefficient deviation stays at
/// `2 ||1||` and the solutions stall away from the limit solution.
pub fn sign_flip_family(grid: Grid) -> Result<ParameterFamily> {
    let op = initial_value_operator(grid);
    let mus: Vec<f64> = (1..=6).map(|j| 2.0f64.powi(-j)).collect();
    ParameterFamily::from_mu_sweep(&mus, 0.0, move |mu| {
        let a0 = if mu == 0.0 { -1.0 } else { 1.0 };
        let system =
            first_order_constant(a0, CoefficientFunction::constant(scalar_mat(1.0), 0))?;
        BoundaryValueProblem::new(system, op.clone(), DVector::from_element(1, c(0.0)))
    })
}

/// Stationary family: every point builds the identical problem.
pub fn stationary_family(grid: Grid) -> Result<ParameterFamily> {
    let op = initial_value_operator(grid);
    let mus: Vec<f64> = (1..=5).map(|j| 2.0f64.powi(-j)).collect();
    ParameterFamily::from_mu_sweep(&mus, 0.0, move |_| {
        let system =
            first_order_constant(1.0, CoefficientFunction::constant(scalar_mat(1.0), 0))?;
        BoundaryValueProblem::new(system, op.clone(), DVector::from_element(1, c(0.0)))
    })
}

/// Oscillating-density family on `[0, pi]`:
/// `B(k) y = y(0) + int sin(k t) y'(t) dt` with the zero density at the
/// limit. Strong convergence holds (bounded norms, primitives `<= 2/k`) but
/// the density norms stay at `sqrt(pi/2)`, so uniform convergence fails.
pub fn oscillating_density_family(grid: Grid, ks: &[u32]) -> Result<ParameterFamily> {
    ParameterFamily::from_sequence(ks, move |k| {
        let system =
            first_order_constant(0.0, CoefficientFunction::constant(scalar_mat(1.0), 0))?;
        let phi = GridFunction::from_fn(grid, 1, 1, 0, |_, t| {
            scalar_mat((k as f64 * t).sin())
        })?;
        let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
            0.0,
            vec![scalar_mat(1.0)],
            Density::Grid(phi),
        )?);
        BoundaryValueProblem::new(system, boundary, DVector::from_element(1, c(1.0)))
    })
}

/// Uniformly converging density family `Phi_k = cos(t) / k` with zero limit
/// density; condition (d) passes with deviation `||cos||_{p'} / k`.
pub fn shrinking_density_family(grid: Grid, ks: &[u32]) -> Result<ParameterFamily> {
    ParameterFamily::from_sequence(ks, move |k| {
        let system =
            first_order_constant(0.0, CoefficientFunction::constant(scalar_mat(1.0), 0))?;
        let amplitude = if k == 0 { 0.0 } else { 1.0 / k as f64 };
        let phi = GridFunction::from_fn(grid, 1, 1, 0, |_, t| scalar_mat(amplitude * t.cos()))?;
        let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
            0.0,
            vec![scalar_mat(1.0)],
            Density::Grid(phi),
        )?);
        BoundaryValueProblem::new(system, boundary, DVector::from_element(1, c(1.0)))
    })
}

/// Smooth pipeline fixture on `[0, 1]` for `p = 2`: exponential coefficient
/// and right-hand side with the density `cos(pi t)`,
/// `y' + e^t y = e^t`, `y(0) + int cos(pi t) y'(t) dt = 1`.
pub fn pipeline_smooth(grid: Grid) -> Result<BoundaryValueProblem> {
    let pi = std::f64::consts::PI;
    let system = DifferentialSystem::new(
        1,
        1,
        0,
        vec![CoefficientFunction::scalar(0, |t, _| c(t.exp()))],
        CoefficientFunction::scalar(0, |t, _| c(t.exp())),
    )?;
    let phi = GridFunction::from_fn(grid, 1, 1, 0, move |_, t| scalar_mat((pi * t).cos()))?;
    let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
        0.0,
        vec![scalar_mat(1.0)],
        Density::Grid(phi),
    )?);
    BoundaryValueProblem::new(system, boundary, DVector::from_element(1, c(1.0)))
}

/// Pipeline fixed point: polynomial coefficients and a step density whose
/// breakpoints sit inside every default partition, so level builds reproduce
/// the problem exactly.
pub fn pipeline_fixed_point(grid: Grid) -> Result<BoundaryValueProblem> {
    let system = DifferentialSystem::new(
        1,
        1,
        0,
        vec![CoefficientFunction::scalar(0, |t, d| match d {
            0 => c(t),
            _ => c(0.0),
        })],
        CoefficientFunction::scalar(0, |t, d| match d {
            0 => c(1.0 + t),
            _ => c(0.0),
        }),
    )?;
    let phi = StepMatrixFunction::new(
        vec![grid.a(), grid.a() + 0.5 * (grid.b() - grid.a()), grid.b()],
        vec![scalar_mat(1.0), scalar_mat(-0.5)],
    )?;
    let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
        grid.a(),
        vec![scalar_mat(1.0)],
        Density::Step(phi),
    )?);
    BoundaryValueProblem::new(system, boundary, DVector::from_element(1, c(1.0)))
}

/// Regulated-but-discontinuous density for the `p = 1` pipeline: a step
/// whose jump sits at a grid node away from every dyadic partition point.
pub fn pipeline_regulated_p1(grid: Grid) -> Result<BoundaryValueProblem> {
    let jump_node = grid.interval_count() / 3 | 1; // odd index, not dyadic
    let jump = grid.node(jump_node);
    let system = first_order_constant(1.0, CoefficientFunction::scalar(0, |t, _| c(t.exp())))?;
    let phi = StepMatrixFunction::new(
        vec![grid.a(), jump, grid.b()],
        vec![scalar_mat(1.0), scalar_mat(0.0)],
    )?;
    let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
        grid.a(),
        vec![scalar_mat(1.0)],
        Density::Step(phi),
    )?);
    BoundaryValueProblem::new(system, boundary, DVector::from_element(1, c(1.0)))
}

/// Continuous periodic density `cos(2 pi t)` for the `p = 1` pipeline: the
/// Fejer stage converges uniformly here, so the uniform-mode deviation
/// trends to zero across levels.
pub fn pipeline_smooth_periodic_p1(grid: Grid) -> Result<BoundaryValueProblem> {
    let span = grid.b() - grid.a();
    let a = grid.a();
    let system = first_order_constant(1.0, CoefficientFunction::scalar(0, |t, _| c(t.exp())))?;
    let phi = GridFunction::from_fn(grid, 1, 1, 0, move |_, t| {
        scalar_mat((std::f64::consts::TAU * (t - a) / span).cos())
    })?;
    let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
        grid.a(),
        vec![scalar_mat(1.0)],
        Density::Grid(phi),
    )?);
    BoundaryValueProblem::new(system, boundary, DVector::from_element(1, c(1.0)))
}

/// Non-regulated density for the `p = 1` pipeline: a bounded oscillation
/// `sin(1/(t - 1/sqrt(2)))` whose one-sided limits at the singular point do
/// not exist. The singularity sits at an irrational point, never on a node.
pub fn pipeline_oscillatory_p1(grid: Grid) -> Result<BoundaryValueProblem> {
    let center = grid.a() + (grid.b() - grid.a()) / 2.0f64.sqrt();
    let system = first_order_constant(1.0, CoefficientFunction::scalar(0, |t, _| c(t.exp())))?;
    let phi = GridFunction::from_fn(grid, 1, 1, 0, move |_, t| {
        scalar_mat((1.0 / (t - center)).sin())
    })?;
    let boundary = BoundaryOperator::Canonical(CanonicalBoundaryOperator::new(
        grid.a(),
        vec![scalar_mat(1.0)],
        Density::Grid(phi),
    )?);
    BoundaryValueProblem::new(system, boundary, DVector::from_element(1, c(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvp::{solve, well_posedness, DEFAULT_WP_TOL};
    use crate::grid::sobolev_norm;

    #[test]
    fn dirichlet_sine_solves_to_manufactured_solution() {
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        let (bvp, exact) = dirichlet_sine(grid).unwrap();
        let sol = solve(&bvp, 0.0, grid).unwrap();
        let err = sobolev_norm(&sol.y.difference(&exact).unwrap(), 2, 2.0).unwrap();
        assert!(err < 1e-6);
    }

    #[test]
    fn periodic_fixture_is_singular() {
        let grid = Grid::new(0.0, std::f64::consts::TAU, 1024).unwrap();
        let bvp = periodic_oscillator(grid).unwrap();
        let m =
            crate::bvp::characteristic_matrix(&bvp.system, &bvp.boundary, 0.0, grid).unwrap();
        assert!(!well_posedness(&m, DEFAULT_WP_TOL).well_posed);
    }

    #[test]
    fn relaxation_solution_matches_closed_form() {
        let grid = Grid::new(0.0, 1.0, 512).unwrap();
        let family = relaxation_family(grid).unwrap();
        let point = &family.sweep_points()[0]; // mu = 1/2
        let bvp = family.build(point).unwrap();
        let sol = solve(&bvp, 0.0, grid).unwrap();
        let mu = point.mu;
        for i in (0..=512).step_by(41) {
            let t = grid.node(i);
            let exact = (1.0 - (-(1.0 + mu) * t).exp()) / (1.0 + mu);
            assert!((sol.y.entry(0, i, 0, 0) - c(exact)).norm() < 1e-9);
        }
    }
}

//! The constructive approximation pipeline: polynomial coefficient fitting,
//! Fejer (Cesaro) means, step-function projection of densities, multipoint
//! approximant construction, convergence reporting, and regulated-function
//! classification.
//!
//! Given a well-posed problem with a canonical boundary operator, each
//! [`ApproximationLevel`] replaces the coefficients and right-hand side by
//! polynomial fits, projects the density onto a uniform step function (for
//! `p = 1` after a Fejer pre-smoothing pass, which converges weak* and never
//! overshoots the sup bound), converts the step density to a multipoint
//! condition, and keeps the alpha matrices and boundary vector unchanged.
//! The resulting problems have polynomial data and multipoint boundary
//! conditions only, yet their inverses track the original problem's inverse.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::boundary::{
    step_density_distance, to_multipoint, BoundaryOperator, Density,
    StepMatrixFunction,
};
use crate::bvp::{BoundaryValueProblem, PreparedProblem, WellPosednessVerdict};
use crate::grid::{
    conjugate_exponent, quadrature_weights, sample, sobolev_norm, CoefficientFunction, Grid,
    GridFunction,
};
use crate::polynomial::{legendre_monomial_coeffs, legendre_values, MatrixPolynomial};
use crate::testset::random_rhs_set;
use crate::{Error, Result};

/// One level of the approximation schedule.
#[derive(Debug, Clone, Copy)]
pub struct ApproximationLevel {
    pub k: usize,
    pub poly_degree: usize,
    pub partition_size: usize,
    /// Cesaro order of the pre-smoothing pass; used only when `p = 1`.
    pub fejer_order: usize,
}

impl ApproximationLevel {
    /// Default schedule: geometric refinement in every knob.
    pub fn schedule(k: usize) -> Self {
        Self {
            k,
            poly_degree: 2 * k + 4,
            partition_size: 4 << k,
            fejer_order: 4usize.pow(k as u32),
        }
    }

    pub fn default_levels(count: usize) -> Vec<Self> {
        (1..=count).map(Self::schedule).collect()
    }
}

/// Entrywise least-squares polynomial fit in the discrete `W^n_2` inner
/// product (simultaneous value and derivative matching with Simpson weights).
///
/// The fit is computed in a Legendre basis on the mapped interval for
/// conditioning and returned as an exact-polynomial coefficient function;
/// the reported error is `||fit - coef||_{n,p}`.
pub fn polynomial_fit(
    coef: &CoefficientFunction,
    degree: usize,
    grid: Grid,
    p: f64,
    n: usize,
) -> Result<(CoefficientFunction, f64)> {
    if degree < n {
        return Err(Error::OrderOutOfRange {
            requested: n,
            max: degree,
        });
    }
    let samples = sample(coef, grid, n)?;
    let nodes = grid.node_count();
    let chain = 2.0 / (grid.b() - grid.a());
    let map = |t: f64| (2.0 * t - grid.a() - grid.b()) / (grid.b() - grid.a());

    // Weighted design matrix: rows (s, i), columns Legendre degrees.
    let mut design = DMatrix::zeros((n + 1) * nodes, degree + 1);
    let mut sqrt_w = vec![0.0; nodes];
    for (i, w) in sqrt_w.iter_mut().enumerate() {
        *w = grid.simpson_weight(i).sqrt();
    }
    for i in 0..nodes {
        let values = legendre_values(map(grid.node(i)), degree, n);
        for s in 0..=n {
            let scale = chain.powi(s as i32) * sqrt_w[i];
            for q in 0..=degree {
                design[(s * nodes + i, q)] = values[s][q] * scale;
            }
        }
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(smin > 1e-13 * smax) {
        return Err(Error::IllConditionedFit { degree });
    }
    let eps = 1e-13 * smax;

    let legendre_to_monomial = legendre_monomial_coeffs(degree);
    let mut mono = vec![DMatrix::zeros(coef.rows(), coef.cols()); degree + 1];
    let mut rhs_re = DVector::zeros((n + 1) * nodes);
    let mut rhs_im = DVector::zeros((n + 1) * nodes);
    for row in 0..coef.rows() {
        for col in 0..coef.cols() {
            for s in 0..=n {
                for i in 0..nodes {
                    let v = samples.entry(s, i, row, col);
                    rhs_re[s * nodes + i] = v.re * sqrt_w[i];
                    rhs_im[s * nodes + i] = v.im * sqrt_w[i];
                }
            }
            let x_re = svd
                .solve(&rhs_re, eps)
                .map_err(|e| Error::LinearSolve(e.to_string()))?;
            let x_im = svd
                .solve(&rhs_im, eps)
                .map_err(|e| Error::LinearSolve(e.to_string()))?;
            for q in 0..=degree {
                let cq = Complex64::new(x_re[q], x_im[q]);
                for (j, l) in legendre_to_monomial[q].iter().enumerate() {
                    mono[j][(row, col)] += cq * Complex64::new(*l, 0.0);
                }
            }
        }
    }
    let fitted =
        MatrixPolynomial::new(grid.a(), grid.b(), mono)?.into_coefficient(coef.max_order());
    let error = sobolev_norm(&sample(&fitted, grid, n)?.difference(&samples)?, n, p)?;
    Ok((fitted, error))
}

/// Cesaro mean of order `K` of the Fourier series of a scalar function,
/// computed on the affine image of the interval onto `[-pi, pi]`.
///
/// Coefficients come from the rectangle rule on the periodic extension
/// (exact for trigonometric polynomials below the grid's Nyquist degree),
/// so the mean at every node is a convex combination of sample values: the
/// sup bound `|sigma_K f| <= max |f|` holds exactly.
pub fn fejer_mean(f: &GridFunction, order: usize) -> Result<GridFunction> {
    if order < 1 {
        return Err(Error::Unsupported("Fejer order must be >= 1".into()));
    }
    if f.rows() != 1 || f.cols() != 1 {
        return Err(Error::DimensionMismatch {
            context: "fejer_mean",
            expected: "scalar (1x1) function".into(),
            actual: format!("{}x{}", f.rows(), f.cols()),
        });
    }
    let grid = f.grid();
    let n = grid.interval_count();
    if 2 * order > n {
        return Err(Error::Unsupported(format!(
            "Fejer order {order} above the Nyquist degree of a grid with {n} intervals"
        )));
    }
    let theta = |i: usize| -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / n as f64;

    // c_j for |j| < order, via incremental phase rotation per node
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * order - 1]; // index j + order - 1
    for i in 0..n {
        let v = f.entry(0, i, 0, 0) / Complex64::new(n as f64, 0.0);
        let rot = Complex64::from_polar(1.0, -theta(i));
        let mut acc = Complex64::new(1.0, 0.0); // e^{-i j theta_i} at j = 0
        coeffs[order - 1] += v;
        for j in 1..order {
            acc *= rot;
            coeffs[order - 1 + j] += v * acc;
            coeffs[order - 1 - j] += v * acc.conj();
        }
    }

    let mut out = GridFunction::zeros(grid, 1, 1, 0);
    for i in 0..=n {
        let rot = Complex64::from_polar(1.0, theta(i));
        let mut acc = Complex64::new(1.0, 0.0);
        let mut value = coeffs[order - 1];
        for j in 1..order {
            acc *= rot;
            let weight = Complex64::new(1.0 - j as f64 / order as f64, 0.0);
            value += weight * (coeffs[order - 1 + j] * acc + coeffs[order - 1 - j] * acc.conj());
        }
        out.set_entry(0, i, 0, 0, value);
    }
    Ok(out)
}

/// Node-snapped uniform partition of the grid's interval into `pieces`
/// pieces; the realized dense point set of the pipeline.
pub fn uniform_partition(grid: Grid, pieces: usize) -> Result<Vec<f64>> {
    if pieces < 1 || pieces > grid.interval_count() {
        return Err(Error::InvalidStep(format!(
            "cannot cut {} pieces out of {} grid intervals",
            pieces,
            grid.interval_count()
        )));
    }
    let n = grid.interval_count();
    let mut points: Vec<f64> = (0..=pieces)
        .map(|j| grid.node((j * n + pieces / 2) / pieces))
        .collect();
    points.dedup();
    Ok(points)
}

/// Projects grid samples onto a step function over the partition by piece
/// averages (the `L_2`-optimal choice); reports the `L_{p'}` projection
/// error. Partition points must be grid nodes.
pub fn step_project(
    phi: &GridFunction,
    partition: &[f64],
    p_prime: f64,
) -> Result<(StepMatrixFunction, f64)> {
    if partition.len() < 2 {
        return Err(Error::InvalidStep("partition needs at least two points".into()));
    }
    let grid = phi.grid();
    let mut pieces = Vec::with_capacity(partition.len() - 1);
    for w in partition.windows(2) {
        let i0 = grid.node_index(w[0])?;
        let i1 = grid.node_index(w[1])?;
        if i1 <= i0 {
            return Err(Error::InvalidStep(format!("empty piece [{}, {}]", w[0], w[1])));
        }
        let weights = quadrature_weights(i1 - i0, grid.spacing());
        let length = w[1] - w[0];
        let mut avg = DMatrix::zeros(phi.rows(), phi.cols());
        for (k, weight) in weights.iter().enumerate() {
            avg += phi.view(0, i0 + k) * Complex64::new(weight / length, 0.0);
        }
        pieces.push(avg);
    }
    let step = StepMatrixFunction::new(partition.to_vec(), pieces)?;
    let error = step_density_distance(&step, phi, p_prime)?;
    Ok((step, error))
}

/// Exact `L_{p'}` distance between two step functions over their merged
/// breakpoints.
fn step_step_distance(
    a: &StepMatrixFunction,
    b: &StepMatrixFunction,
    p_prime: f64,
) -> Result<f64> {
    let mut cuts: Vec<f64> = a
        .breakpoints()
        .iter()
        .chain(b.breakpoints().iter())
        .cloned()
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    let mut sup: f64 = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let diff = a.value_at(mid) - b.value_at(mid);
        let comp: f64 = diff
            .iter()
            .map(|v| {
                if p_prime.is_infinite() {
                    v.norm()
                } else {
                    v.norm().powf(p_prime)
                }
            })
            .sum();
        if p_prime.is_infinite() {
            sup = sup.max(comp);
        } else {
            total += (w[1] - w[0]) * comp;
        }
    }
    if p_prime.is_infinite() {
        Ok(sup)
    } else {
        Ok(total.max(0.0).powf(1.0 / p_prime))
    }
}

/// Exact projection of a step function onto a coarser partition by
/// length-weighted averages of the overlapping pieces.
fn step_reproject(step: &StepMatrixFunction, partition: &[f64]) -> Result<StepMatrixFunction> {
    let mut pieces = Vec::with_capacity(partition.len() - 1);
    for w in partition.windows(2) {
        let mut avg = DMatrix::zeros(step.rows(), step.cols());
        for (j, piece) in step.pieces().iter().enumerate() {
            let lo = step.breakpoints()[j].max(w[0]);
            let hi = step.breakpoints()[j + 1].min(w[1]);
            if hi > lo {
                avg += piece * Complex64::new((hi - lo) / (w[1] - w[0]), 0.0);
            }
        }
        pieces.push(avg);
    }
    StepMatrixFunction::new(partition.to_vec(), pieces)
}

/// Settings shared by approximant construction and pipeline runs.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub grid: Grid,
    /// Anchor of the fundamental systems.
    pub anchor: f64,
    pub p: f64,
    pub wp_tol: f64,
    pub seed: u64,
    pub test_rhs_count: usize,
}

impl PipelineConfig {
    pub fn new(grid: Grid, p: f64) -> Self {
        Self {
            grid,
            anchor: grid.a(),
            p,
            wp_tol: crate::bvp::DEFAULT_WP_TOL,
            seed: 0x5EED,
            test_rhs_count: 6,
        }
    }
}

/// A built approximant with its deviation diagnostics.
#[derive(Debug, Clone)]
pub struct ApproximantBuild {
    pub level: ApproximationLevel,
    pub problem: BoundaryValueProblem,
    /// The step density realizing the multipoint condition.
    pub step: StepMatrixFunction,
    /// `sum_l ||A_l,k - A_l,0||_{n,p}`.
    pub coefficient_error: f64,
    /// `||f_k - f_0||_{n,p}`.
    pub rhs_error: f64,
    /// `L_{p'}` density deviation for `1 < p`, weak*-primitive sup for `p = 1`.
    pub density_error: f64,
    pub verdict: WellPosednessVerdict,
}

/// Sup over grid nodes of the running integral of the difference between a
/// step density and reference samples; the weak* deviation measure at `p=1`.
fn primitive_sup_distance(step: &StepMatrixFunction, phi0: &GridFunction) -> Result<f64> {
    let grid = phi0.grid();
    let sampled = step.sample_on(grid)?;
    let h = Complex64::new(grid.spacing() / 2.0, 0.0);
    let mut acc = DMatrix::zeros(phi0.rows(), phi0.cols());
    let mut sup: f64 = 0.0;
    for i in 1..grid.node_count() {
        let prev = sampled.view(0, i - 1) - phi0.view(0, i - 1);
        let cur = sampled.view(0, i) - phi0.view(0, i);
        acc += (prev + cur) * h;
        sup = sup.max(crate::boundary::matrix_magnitude(&acc));
    }
    Ok(sup)
}

/// Builds the multipoint approximant of one level: polynomial coefficients
/// and right-hand side, step-projected density (Fejer-smoothed first when
/// `p = 1`), unchanged alphas and boundary vector. The well-posedness of the
/// result is verified and reported; a singular level is an error carrying
/// the verdict, since well-posedness is only guaranteed asymptotically.
pub fn build_approximant(
    bvp0: &BoundaryValueProblem,
    level: ApproximationLevel,
    cfg: &PipelineConfig,
) -> Result<ApproximantBuild> {
    if cfg.p.is_infinite() {
        return Err(Error::Unsupported("the pipeline requires p < infinity".into()));
    }
    let canonical = bvp0.boundary.as_canonical().ok_or_else(|| {
        Error::Unsupported("build_approximant needs a canonical boundary operator".into())
    })?;
    let system = &bvp0.system;
    let n = system.smoothness();
    let grid = cfg.grid;
    let p_prime = conjugate_exponent(cfg.p)?;

    let mut coefficient_error = 0.0;
    let mut fitted_coeffs = Vec::with_capacity(system.order());
    for a in system.coefficients() {
        let (fit, err) = polynomial_fit(a, level.poly_degree, grid, cfg.p, n)?;
        coefficient_error += err;
        fitted_coeffs.push(fit);
    }
    let (fitted_rhs, rhs_error) = polynomial_fit(system.rhs(), level.poly_degree, grid, cfg.p, n)?;
    let fitted_system = crate::ode::DifferentialSystem::new(
        system.dimension(),
        system.order(),
        n,
        fitted_coeffs,
        fitted_rhs,
    )?;

    let partition = uniform_partition(grid, level.partition_size)?;
    let (step, density_error) = match canonical.phi() {
        Density::Step(s) if cfg.p > 1.0 => {
            let projected = step_reproject(s, &partition)?;
            let err = step_step_distance(&projected, s, p_prime)?;
            (projected, err)
        }
        phi => {
            let samples = phi.sample_on(grid)?;
            let smoothed = if cfg.p == 1.0 {
                let mut out = GridFunction::zeros(grid, samples.rows(), samples.cols(), 0);
                for row in 0..samples.rows() {
                    for col in 0..samples.cols() {
                        let entry = fejer_mean(&samples.component(row, col), level.fejer_order)?;
                        for i in 0..grid.node_count() {
                            out.set_entry(0, i, row, col, entry.entry(0, i, 0, 0));
                        }
                    }
                }
                out
            } else {
                samples.clone()
            };
            let (projected, _) = step_project(&smoothed, &partition, p_prime)?;
            let err = if cfg.p == 1.0 {
                primitive_sup_distance(&projected, &samples)?
            } else {
                step_density_distance(&projected, &samples, p_prime)?
            };
            (projected, err)
        }
    };
    let multipoint = to_multipoint(canonical.alphas().to_vec(), &step, canonical.anchor())?;
    let problem = BoundaryValueProblem::new(
        fitted_system,
        BoundaryOperator::Multipoint(multipoint),
        bvp0.c.clone(),
    )?;
    let matrix =
        crate::bvp::characteristic_matrix(&problem.system, &problem.boundary, cfg.anchor, grid)?;
    let verdict = crate::bvp::well_posedness(&matrix, cfg.wp_tol);
    Ok(ApproximantBuild {
        level,
        problem,
        step,
        coefficient_error,
        rhs_error,
        density_error,
        verdict,
    })
}

/// Right-hand side that excites the density mismatch the hardest: a narrow
/// Gaussian bump centered where the moving-window response of the mismatch
/// peaks. Smooth seeded test functions cannot see a mismatch oscillating at
/// unresolved scales, so the witness sharpens the empirical lower bound on
/// the uniform operator distance. Scalar problems only.
fn mismatch_witness(
    step: &StepMatrixFunction,
    phi0: &GridFunction,
    n: usize,
) -> Result<Option<CoefficientFunction>> {
    if phi0.rows() != 1 || phi0.cols() != 1 {
        return Ok(None);
    }
    let grid = phi0.grid();
    let diff = step.sample_on(grid)?.difference(&phi0.truncated(0)?)?;
    let span: isize = 4;
    let profile: Vec<f64> = (-3 * span..=3 * span)
        .map(|o| (-((o as f64 / span as f64).powi(2))).exp())
        .collect();
    let last = grid.interval_count() as isize;
    let mut best = (0usize, 0.0f64);
    for center in 0..=last {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, w) in profile.iter().enumerate() {
            let i = center + k as isize - 3 * span;
            if (0..=last).contains(&i) {
                acc += diff.entry(0, i as usize, 0, 0) * Complex64::new(*w, 0.0);
            }
        }
        if acc.norm() > best.1 {
            best = (center as usize, acc.norm());
        }
    }
    if best.1 == 0.0 {
        return Ok(None);
    }
    let width = span as f64 * grid.spacing();
    Ok(Some(crate::testset::gaussian_bump(
        grid.node(best.0),
        width,
        n,
    )))
}

/// One row of a [`PipelineReport`].
#[derive(Debug, Clone)]
pub struct PipelineRow {
    pub level: ApproximationLevel,
    pub coefficient_error: f64,
    pub rhs_error: f64,
    pub density_error: f64,
    pub sigma_min: f64,
    pub well_posed: bool,
    /// `||y_k - y_0||_{n+r,p}` for the level's own (fitted) right-hand side;
    /// absent when the level is not well posed.
    pub solution_error: Option<f64>,
    /// Sup over the test right-hand sides of the normalized solution
    /// deviation: the empirical inverse-operator distance (a lower bound).
    pub sup_deviation: Option<f64>,
    /// Per-right-hand-side normalized deviations (strong mode).
    pub per_rhs_deviations: Vec<f64>,
    /// Normalized deviation of the density-mismatch witness (scalar problems
    /// with a canonical original operator); sharpens the uniform-mode
    /// estimate.
    pub witness_deviation: Option<f64>,
}

impl PipelineRow {
    /// Empirical uniform-mode deviation: the seeded sup together with the
    /// mismatch witness.
    pub fn uniform_deviation(&self) -> Option<f64> {
        match (self.sup_deviation, self.witness_deviation) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Level-by-level convergence diagnostics of the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub rows: Vec<PipelineRow>,
    pub p: f64,
    pub seed: u64,
    pub test_rhs_count: usize,
}

impl PipelineReport {
    pub fn well_posed_rows(&self) -> impl Iterator<Item = &PipelineRow> {
        self.rows.iter().filter(|r| r.well_posed)
    }
}

/// Runs the pipeline over the levels: builds each approximant, solves the
/// original and approximant problems against the seeded right-hand-side set,
/// and records the deviation diagnostics. Fails only when every level is
/// singular.
pub fn pipeline_report(
    bvp0: &BoundaryValueProblem,
    levels: &[ApproximationLevel],
    cfg: &PipelineConfig,
) -> Result<PipelineReport> {
    let grid = cfg.grid;
    let order = bvp0.system.solution_order();
    let prepared0 = PreparedProblem::new(&bvp0.system, &bvp0.boundary, cfg.anchor, grid, cfg.wp_tol)?;
    if !prepared0.verdict().well_posed {
        return Err(Error::NotWellPosed {
            sigma_min: prepared0.verdict().sigma_min,
            sigma_max: prepared0.verdict().sigma_max,
        });
    }
    let y0 = prepared0.solve_with(bvp0.system.rhs(), &bvp0.c)?;
    let rhs_set = random_rhs_set(
        grid,
        bvp0.system.dimension(),
        bvp0.system.smoothness(),
        bvp0.boundary.ell(),
        cfg.test_rhs_count,
        cfg.seed,
    );
    let baseline: Vec<(GridFunction, f64)> = rhs_set
        .iter()
        .map(|(f, cvec)| -> Result<(GridFunction, f64)> {
            let y = prepared0.solve_with(f, cvec)?;
            let scale = sobolev_norm(&sample(f, grid, bvp0.system.smoothness())?, bvp0.system.smoothness(), cfg.p)?
                + cvec.norm();
            Ok((y, scale))
        })
        .collect::<Result<_>>()?;

    let phi0_samples = bvp0
        .boundary
        .as_canonical()
        .map(|b| b.phi().sample_on(grid))
        .transpose()?;

    let mut rows = Vec::with_capacity(levels.len());
    let mut any_well_posed = false;
    for &level in levels {
        let build = build_approximant(bvp0, level, cfg)?;
        if !build.verdict.well_posed {
            rows.push(PipelineRow {
                level,
                coefficient_error: build.coefficient_error,
                rhs_error: build.rhs_error,
                density_error: build.density_error,
                sigma_min: build.verdict.sigma_min,
                well_posed: false,
                solution_error: None,
                sup_deviation: None,
                per_rhs_deviations: Vec::new(),
                witness_deviation: None,
            });
            continue;
        }
        any_well_posed = true;
        let prepared_k = PreparedProblem::new(
            &build.problem.system,
            &build.problem.boundary,
            cfg.anchor,
            grid,
            cfg.wp_tol,
        )?;
        let y_k = prepared_k.solve_with(build.problem.system.rhs(), &build.problem.c)?;
        let solution_error = sobolev_norm(&y_k.difference(&y0)?, order, cfg.p)?;

        let mut per_rhs = Vec::with_capacity(rhs_set.len());
        for ((f, cvec), (y0_i, scale)) in rhs_set.iter().zip(baseline.iter()) {
            let yk_i = prepared_k.solve_with(f, cvec)?;
            let dev = sobolev_norm(&yk_i.difference(y0_i)?, order, cfg.p)?;
            per_rhs.push(dev / scale.max(1e-300));
        }
        let sup = per_rhs.iter().cloned().fold(0.0f64, f64::max);

        let witness_deviation = match &phi0_samples {
            Some(phi0) => {
                match mismatch_witness(&build.step, phi0, bvp0.system.smoothness())? {
                    Some(f_w) => {
                        let zero_c = DVector::zeros(bvp0.boundary.ell());
                        let y0_w = prepared0.solve_with(&f_w, &zero_c)?;
                        let yk_w = prepared_k.solve_with(&f_w, &zero_c)?;
                        let dev = sobolev_norm(&yk_w.difference(&y0_w)?, order, cfg.p)?;
                        let scale = sobolev_norm(
                            &sample(&f_w, grid, bvp0.system.smoothness())?,
                            bvp0.system.smoothness(),
                            cfg.p,
                        )?;
                        Some(dev / scale.max(1e-300))
                    }
                    None => None,
                }
            }
            None => None,
        };
        rows.push(PipelineRow {
            level,
            coefficient_error: build.coefficient_error,
            rhs_error: build.rhs_error,
            density_error: build.density_error,
            sigma_min: build.verdict.sigma_min,
            well_posed: true,
            solution_error: Some(solution_error),
            sup_deviation: Some(sup),
            per_rhs_deviations: per_rhs,
            witness_deviation,
        });
    }
    if !any_well_posed {
        return Err(Error::NotWellPosed {
            sigma_min: 0.0,
            sigma_max: 0.0,
        });
    }
    Ok(PipelineReport {
        rows,
        p: cfg.p,
        seed: cfg.seed,
        test_rhs_count: cfg.test_rhs_count,
    })
}

/// Windowed-oscillation classifier for regulated functions (finite one-sided
/// limits everywhere).
///
/// At every node the oscillation (max - min of real and imaginary parts)
/// over one-sided windows must settle below `tol` as the window shrinks by
/// factors of 4; a node where it stalls on both sides marks the function
/// non-regulated. A heuristic and advisory classifier, not a certificate;
/// it gates nothing.
pub fn is_regulated(phi: &GridFunction, window: f64, tol: f64) -> bool {
    let grid = phi.grid();
    let h = grid.spacing();
    let mut smallest = window;
    while smallest / 4.0 >= 2.0 * h {
        smallest /= 4.0;
    }
    let span = (smallest / h).round() as usize;
    let oscillation = |lo: usize, hi: usize| -> f64 {
        let mut re_min = f64::INFINITY;
        let mut re_max = f64::NEG_INFINITY;
        let mut im_min = f64::INFINITY;
        let mut im_max = f64::NEG_INFINITY;
        for i in lo..=hi {
            let v = phi.entry(0, i, 0, 0);
            re_min = re_min.min(v.re);
            re_max = re_max.max(v.re);
            im_min = im_min.min(v.im);
            im_max = im_max.max(v.im);
        }
        (re_max - re_min) + (im_max - im_min)
    };
    let last = grid.interval_count();
    for i in 0..=last {
        // left window [i-span, i), right window (i, i+span]
        let left_stalls = if i >= 1 {
            let lo = i.saturating_sub(span);
            oscillation(lo, i - 1) > tol
        } else {
            false
        };
        let right_stalls = if i < last {
            let hi = (i + span).min(last);
            oscillation(i + 1, hi) > tol
        } else {
            false
        };
        if left_stalls && right_stalls {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::lp_norm;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn polynomial_fit_reproduces_polynomials() {
        let grid = Grid::new(0.0, 1.0, 256).unwrap();
        let cubic = CoefficientFunction::scalar(1, |t, d| match d {
            0 => c(1.0 - 2.0 * t + 0.5 * t * t * t),
            1 => c(-2.0 + 1.5 * t * t),
            _ => c(0.0),
        });
        let (fit, err) = polynomial_fit(&cubic, 5, grid, 2.0, 1).unwrap();
        assert!(err < 1e-10, "fit error {err}");
        let t = 0.3711;
        assert!((fit.evaluate(t, 0).unwrap()[(0, 0)]
            - cubic.evaluate(t, 0).unwrap()[(0, 0)])
        .norm()
            < 1e-10);
    }

    #[test]
    fn polynomial_fit_exponential_degree8() {
        let grid = Grid::new(0.0, 1.0, 512).unwrap();
        let exp = CoefficientFunction::scalar(0, |t, _| c(t.exp()));
        let (_, err) = polynomial_fit(&exp, 8, grid, 2.0, 0).unwrap();
        assert!(err < 1e-6, "fit error {err}");
    }

    #[test]
    fn polynomial_fit_kink_error_floor() {
        let grid = Grid::new(0.0, 1.0, 512).unwrap();
        let kink = CoefficientFunction::scalar(0, |t, _| c((t - 0.5).abs()));
        let (_, err) = polynomial_fit(&kink, 4, grid, 2.0, 0).unwrap();
        assert!(err >= 1e-3, "kink fit unexpectedly good: {err}");
    }

    #[test]
    fn fejer_mean_fixed_points_and_damping() {
        let grid = Grid::new(0.0, 1.0, 256).unwrap();
        let ones = GridFunction::from_fn(grid, 1, 1, 0, |_, _| DMatrix::from_element(1, 1, c(1.0)))
            .unwrap();
        for order in [1, 4, 32] {
            let s = fejer_mean(&ones, order).unwrap();
            for i in 0..=256 {
                assert!((s.entry(0, i, 0, 0) - c(1.0)).norm() < 1e-12);
            }
        }

        // single harmonic cos(theta) is damped by exactly (1 - 1/K)
        let pi = std::f64::consts::PI;
        let harmonic = GridFunction::from_fn(grid, 1, 1, 0, |_, t| {
            DMatrix::from_element(1, 1, c((-pi + 2.0 * pi * t).cos()))
        })
        .unwrap();
        for order in [2, 8, 64] {
            let s = fejer_mean(&harmonic, order).unwrap();
            let damp = 1.0 - 1.0 / order as f64;
            for i in (0..=256).step_by(31) {
                let expected = damp * harmonic.entry(0, i, 0, 0).re;
                assert!(
                    (s.entry(0, i, 0, 0) - c(expected)).norm() < 1e-8,
                    "order {order} node {i}"
                );
            }
        }
    }

    #[test]
    fn fejer_mean_respects_sup_bound_on_steps() {
        let grid = Grid::new(0.0, 1.0, 512).unwrap();
        let step = GridFunction::from_fn(grid, 1, 1, 0, |_, t| {
            DMatrix::from_element(1, 1, if t < 0.5 { c(1.0) } else { c(0.0) })
        })
        .unwrap();
        for order in [4, 16, 64, 256] {
            let s = fejer_mean(&step, order).unwrap();
            let sup = lp_norm(&s, 0, f64::INFINITY).unwrap();
            assert!(sup <= 1.0 + 1e-12, "order {order}: sup {sup}");
        }
    }

    #[test]
    fn step_project_closed_forms() {
        let grid = Grid::new(0.0, 1.0, 256).unwrap();
        let constant = GridFunction::from_fn(grid, 1, 1, 0, |_, _| {
            DMatrix::from_element(1, 1, c(0.7))
        })
        .unwrap();
        let partition = uniform_partition(grid, 4).unwrap();
        let (step, err) = step_project(&constant, &partition, 2.0).unwrap();
        assert!(err < 1e-13);
        for piece in step.pieces() {
            assert!((piece[(0, 0)] - c(0.7)).norm() < 1e-13);
        }

        // phi = t with 2 pieces: averages (1/4, 3/4), L2 error 1/(4 sqrt(3))
        let linear =
            GridFunction::from_fn(grid, 1, 1, 0, |_, t| DMatrix::from_element(1, 1, c(t)))
                .unwrap();
        let partition = uniform_partition(grid, 2).unwrap();
        let (step, err) = step_project(&linear, &partition, 2.0).unwrap();
        assert!((step.pieces()[0][(0, 0)] - c(0.25)).norm() < 1e-12);
        assert!((step.pieces()[1][(0, 0)] - c(0.75)).norm() < 1e-12);
        assert!((err - 1.0 / (4.0 * 3.0f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn step_project_error_halves_with_piece_width() {
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        let pi = std::f64::consts::PI;
        let phi = GridFunction::from_fn(grid, 1, 1, 0, |_, t| {
            DMatrix::from_element(1, 1, c((pi * t).cos()))
        })
        .unwrap();
        let mut prev = f64::NAN;
        for pieces in [8, 16, 32, 64] {
            let partition = uniform_partition(grid, pieces).unwrap();
            let (_, err) = step_project(&phi, &partition, 2.0).unwrap();
            if !prev.is_nan() {
                let ratio = prev / err;
                assert!((ratio - 2.0).abs() < 0.4, "pieces {pieces}: ratio {ratio}");
            }
            prev = err;
        }
    }

    #[test]
    fn approximant_fixed_point_reproduces_solution() {
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        let cfg = PipelineConfig::new(grid, 2.0);
        let bvp0 = fixtures::pipeline_fixed_point(grid).unwrap();
        let y0 = crate::bvp::solve(&bvp0, 0.0, grid).unwrap().y;
        let build = build_approximant(&bvp0, ApproximationLevel::schedule(1), &cfg).unwrap();
        assert!(build.verdict.well_posed);
        assert!(build.coefficient_error < 1e-10);
        assert!(build.density_error < 1e-10);
        let y1 = crate::bvp::solve(&build.problem, 0.0, grid).unwrap().y;
        let dev = sobolev_norm(&y1.difference(&y0).unwrap(), 1, 2.0).unwrap();
        assert!(dev < 1e-8, "fixed point moved by {dev}");
    }

    #[test]
    fn approximant_dirichlet_sine_at_degree10() {
        // approximants differ from the original only in the polynomial fit
        // of the right-hand side; degree 10 brings the solution within 1e-4
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        let cfg = PipelineConfig::new(grid, 2.0);
        let (bvp0, exact) = fixtures::sine_with_initial_conditions(grid).unwrap();
        let level = ApproximationLevel {
            k: 3,
            poly_degree: 10,
            partition_size: 32,
            fejer_order: 1,
        };
        let build = build_approximant(&bvp0, level, &cfg).unwrap();
        assert!(build.verdict.well_posed);
        let y = crate::bvp::solve(&build.problem, 0.0, grid).unwrap().y;
        let err = sobolev_norm(&y.difference(&exact).unwrap(), 2, 2.0).unwrap();
        assert!(err < 1e-4, "solution error {err}");
    }

    #[test]
    fn pipeline_smooth_deviations_shrink() {
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        let cfg = PipelineConfig::new(grid, 2.0);
        let bvp0 = fixtures::pipeline_smooth(grid).unwrap();
        let levels = ApproximationLevel::default_levels(5);
        let report = pipeline_report(&bvp0, &levels, &cfg).unwrap();
        assert_eq!(report.rows.len(), 5);
        assert!(report.rows.iter().all(|r| r.well_posed));
        let first = report.rows[0].sup_deviation.unwrap();
        let last = report.rows[4].sup_deviation.unwrap();
        assert!(
            last <= 0.1 * first,
            "sup deviation fell only from {first} to {last}"
        );
    }

    #[test]
    fn regulated_classifier() {
        let grid = Grid::new(0.0, 1.0, 4096).unwrap();
        let continuous = GridFunction::from_fn(grid, 1, 1, 0, |_, t| {
            DMatrix::from_element(1, 1, c((3.0 * t).sin()))
        })
        .unwrap();
        assert!(is_regulated(&continuous, 0.05, 0.2));

        let step = GridFunction::from_fn(grid, 1, 1, 0, |_, t| {
            DMatrix::from_element(1, 1, if t < 0.5 { c(1.0) } else { c(0.0) })
        })
        .unwrap();
        assert!(is_regulated(&step, 0.05, 0.2));

        let center = 1.0 / 2.0f64.sqrt();
        let wild = GridFunction::from_fn(grid, 1, 1, 0, move |_, t| {
            DMatrix::from_element(1, 1, c((1.0 / (t - center)).sin()))
        })
        .unwrap();
        assert!(!is_regulated(&wild, 0.05, 0.2));
    }

    #[test]
    fn rejects_p_infinity_and_low_degree() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let bvp0 = fixtures::pipeline_smooth(grid).unwrap();
        let mut cfg = PipelineConfig::new(grid, f64::INFINITY);
        cfg.p = f64::INFINITY;
        assert!(matches!(
            build_approximant(&bvp0, ApproximationLevel::schedule(1), &cfg),
            Err(Error::Unsupported(_))
        ));
        let exp = CoefficientFunction::scalar(2, |t, _| c(t.exp()));
        assert!(matches!(
            polynomial_fit(&exp, 1, grid, 2.0, 2),
            Err(Error::OrderOutOfRange { .. })
        ));
    }
}

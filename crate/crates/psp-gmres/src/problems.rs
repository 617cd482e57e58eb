//! Test-problem construction and the time-stepping driver that makes
//! the preconditioning progressive across solves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::gmres::{psp_gmres, GmresConfig, GmresError, Preconditioner, SolveReport};
use crate::linalg::{BandedMatrix, CsrMatrix, LinearOperator, ProbeHistory};
use crate::mrep::mrep;

/// Configuration of the random seven-diagonal family.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    /// Each row satisfies `|a_ii| >= sum_{j != i} |a_ij| + margin`.
    pub dominance_margin: f64,
}

impl GeneratorConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        GeneratorConfig {
            n,
            seed,
            dominance_margin: DEFAULT_DOMINANCE_MARGIN,
        }
    }
}

/// Default per-row dominance margin. Small margins put the family in
/// the regime where iteration counts grow with system size, which is
/// where statistical preconditioning pays off; large margins make the
/// systems so well conditioned that a handful of iterations suffices
/// and the probe dataset stays too thin to fit from.
pub const DEFAULT_DOMINANCE_MARGIN: f64 = 0.005;

/// Offsets of the seven stored diagonals.
pub const SEVEN_DIAGONAL_OFFSETS: [i64; 7] = [-3, -2, -1, 0, 1, 2, 3];

/// Generate a diagonally dominant random seven-diagonal matrix and the
/// right-hand side `[1, 2, ..., n]`. Deterministic in the seed.
///
/// Off-diagonals are drawn uniformly from `[-1, 0)` and the diagonal is
/// the row's absolute off-diagonal sum plus the dominance margin, so
/// each matrix is a randomly weighted seven-point diffusion stencil
/// shifted by the margin. Same-sign off-diagonals keep the spectrum
/// spread over `[margin, ~2*row_sum]` like a discretized diffusion
/// operator; mixed signs would instead cluster the eigenvalues and
/// trivialize the solves.
pub fn gen_seven_diagonal(cfg: &GeneratorConfig) -> Result<(CsrMatrix, Vec<f64>), Error> {
    if cfg.n < 7 {
        return Err(Error::Config(format!(
            "seven-diagonal generator needs n >= 7, got {}",
            cfg.n
        )));
    }
    if !(cfg.dominance_margin > 0.0) {
        return Err(Error::Config("dominance margin must be positive".into()));
    }
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut triplets = Vec::with_capacity(n * 7);
    for i in 0..n {
        let mut off_sum = 0.0;
        for &off in &SEVEN_DIAGONAL_OFFSETS {
            if off == 0 {
                continue;
            }
            let j = i as i64 + off;
            if (0..n as i64).contains(&j) {
                let v: f64 = -rng.gen_range(0.0..1.0);
                triplets.push((i, j as usize, v));
                off_sum += v.abs();
            }
        }
        triplets.push((i, i, off_sum + cfg.dominance_margin));
    }
    let a = CsrMatrix::from_triplets(n, n, &triplets)?;
    let b = (1..=n).map(|v| v as f64).collect();
    Ok((a, b))
}

/// Matrix-free backward-Euler step operator for the 1-D heat equation
/// with Dirichlet boundaries: `apply(v) = v - dt*alpha/dx^2 * D2 v` on
/// interior points, identity on the two boundary rows.
#[derive(Debug, Clone)]
pub struct Heat1dOperator {
    nx: usize,
    coeff: f64, // dt * alpha / dx^2
}

impl Heat1dOperator {
    pub fn new(nx: usize, dx: f64, dt: f64, alpha: f64) -> Result<Self, Error> {
        if nx < 3 {
            return Err(Error::Config("heat operator needs nx >= 3".into()));
        }
        if !(dx > 0.0) {
            return Err(Error::Config("grid spacing dx must be positive".into()));
        }
        if dt < 0.0 || !(alpha > 0.0) {
            return Err(Error::Config("need dt >= 0 and alpha > 0".into()));
        }
        Ok(Heat1dOperator {
            nx,
            coeff: dt * alpha / (dx * dx),
        })
    }

    /// Explicit CSR twin of the matrix-free apply.
    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.nx;
        let mut triplets = Vec::with_capacity(3 * n);
        triplets.push((0, 0, 1.0));
        for i in 1..n - 1 {
            triplets.push((i, i - 1, -self.coeff));
            triplets.push((i, i, 1.0 + 2.0 * self.coeff));
            triplets.push((i, i + 1, -self.coeff));
        }
        triplets.push((n - 1, n - 1, 1.0));
        CsrMatrix::from_triplets(n, n, &triplets).unwrap()
    }
}

impl LinearOperator for Heat1dOperator {
    fn dim(&self) -> usize {
        self.nx
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nx, "operator dimension mismatch");
        let n = self.nx;
        let mut y = vec![0.0; n];
        y[0] = x[0];
        for i in 1..n - 1 {
            y[i] = x[i] - self.coeff * (x[i - 1] - 2.0 * x[i] + x[i + 1]);
        }
        y[n - 1] = x[n - 1];
        y
    }
}

/// What the next right-hand side is after a completed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    /// Re-solve the same system every step (the benchmark protocol).
    Constant,
    /// The solution becomes the next right-hand side (implicit time
    /// stepping, `u^n` on the right of the backward-Euler system).
    PreviousSolution,
}

#[derive(Debug, Clone)]
pub struct TimeStepPlan {
    pub steps: usize,
    /// Solves between preconditioner refits.
    pub reestimate_every: usize,
    /// Preconditioner half-bandwidth.
    pub d: usize,
    pub rhs_mode: RhsMode,
    /// Clear the probe history after every refit.
    pub reset_history: bool,
    /// Ring-buffer cap on the probe history.
    pub history_cap: Option<usize>,
}

impl TimeStepPlan {
    pub fn two_step_benchmark() -> Self {
        TimeStepPlan {
            steps: 2,
            reestimate_every: 1,
            d: 1,
            rhs_mode: RhsMode::Constant,
            reset_history: false,
            history_cap: None,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if self.steps == 0 {
            return Err(Error::Config("plan needs at least one step".into()));
        }
        if self.reestimate_every == 0 {
            return Err(Error::Config("reestimate_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-step outcome of the driver.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    pub report: SolveReport,
    /// This step ran with an estimated (non-identity) preconditioner.
    pub used_estimate: bool,
    /// The estimated preconditioner was rejected (singular or otherwise
    /// unusable) and the step degraded to the identity.
    pub fell_back_to_identity: bool,
    /// Why estimation was skipped or rejected, when it was.
    pub estimate_note: Option<String>,
}

/// Solve with an optional banded preconditioner, degrading to the
/// identity when the factorization fails.
pub fn solve_with_fallback(
    op: &dyn LinearOperator,
    b: &[f64],
    x0: &[f64],
    estimate: Option<&BandedMatrix>,
    cfg: &GmresConfig,
    history: &mut ProbeHistory,
) -> Result<(Vec<f64>, SolveReport, bool), GmresError> {
    if let Some(m) = estimate {
        match Preconditioner::from_banded(m) {
            Ok(p) => {
                let (x, rep) = psp_gmres(op, b, x0, &p, cfg, history)?;
                return Ok((x, rep, false));
            }
            Err(Error::SingularPreconditioner(_)) => {
                // fall through to identity
            }
            Err(e) => return Err(GmresError::Other(e)),
        }
        let (x, rep) = psp_gmres(op, b, x0, &Preconditioner::identity(), cfg, history)?;
        return Ok((x, rep, true));
    }
    let (x, rep) = psp_gmres(op, b, x0, &Preconditioner::identity(), cfg, history)?;
    Ok((x, rep, false))
}

/// Outcome of a full driver run.
#[derive(Debug, Clone)]
pub struct DriverRun {
    pub state: Vec<f64>,
    pub steps: Vec<StepReport>,
    /// The most recent fitted preconditioner, if any refit succeeded.
    pub estimate: Option<BandedMatrix>,
}

/// Repeated solves with progressive preconditioning: step 1 runs with
/// the identity while recording probes, later steps reuse a
/// preconditioner refit from the accumulated history.
pub fn time_step_driver(
    op: &dyn LinearOperator,
    b0: &[f64],
    plan: &TimeStepPlan,
    cfg: &GmresConfig,
) -> Result<DriverRun, GmresError> {
    plan.validate().map_err(GmresError::Other)?;
    let n = op.dim();
    if b0.len() != n {
        return Err(GmresError::Other(Error::DimensionMismatch {
            expected: n,
            got: b0.len(),
        }));
    }
    let mut history = match plan.history_cap {
        Some(cap) => ProbeHistory::with_capacity(n, cap),
        None => ProbeHistory::new(n),
    };
    let mut estimate: Option<BandedMatrix> = None;
    let mut estimate_note: Option<String> = None;
    let mut b = b0.to_vec();
    let mut x = vec![0.0; n];
    let mut steps = Vec::with_capacity(plan.steps);

    for step in 1..=plan.steps {
        let x0 = vec![0.0; n];
        let (sol, report, fell_back) =
            solve_with_fallback(op, &b, &x0, estimate.as_ref(), cfg, &mut history)?;
        let used_estimate = estimate.is_some() && !fell_back;
        let note = if fell_back {
            Some("estimated preconditioner singular; used identity".to_string())
        } else {
            estimate_note.take()
        };
        steps.push(StepReport {
            step,
            report,
            used_estimate,
            fell_back_to_identity: fell_back,
            estimate_note: note,
        });
        x = sol;

        if step < plan.steps && step % plan.reestimate_every == 0 {
            match mrep(&history, plan.d) {
                Ok(est) => {
                    estimate = Some(est.matrix);
                    if plan.reset_history {
                        history.clear();
                    }
                }
                Err(e @ (Error::InsufficientSamples { .. } | Error::RankDeficient)) => {
                    estimate_note = Some(format!("refit skipped: {e}"));
                }
                Err(e) => return Err(GmresError::Other(e)),
            }
        }

        if plan.rhs_mode == RhsMode::PreviousSolution {
            b = x.clone();
        }
    }
    Ok(DriverRun {
        state: x,
        steps,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    #[test]
    fn generator_rejects_small_n() {
        assert!(matches!(
            gen_seven_diagonal(&GeneratorConfig::new(5, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn generator_rhs_is_one_to_n() {
        let (_, b) = gen_seven_diagonal(&GeneratorConfig::new(7, 0)).unwrap();
        assert_eq!(b, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn generator_pattern_is_seven_diagonals() {
        let (a, _) = gen_seven_diagonal(&GeneratorConfig::new(20, 1)).unwrap();
        for (i, j, _) in a.iter_entries() {
            assert!(i.abs_diff(j) <= 3, "entry ({i},{j}) off the seven diagonals");
        }
        // every in-range offset is populated
        for i in 0..20usize {
            let nnz_row = a.row_offsets[i + 1] - a.row_offsets[i];
            let expect = SEVEN_DIAGONAL_OFFSETS
                .iter()
                .filter(|&&off| (0..20).contains(&(i as i64 + off)))
                .count();
            assert_eq!(nnz_row, expect);
        }
    }

    #[test]
    fn generator_diagonal_dominance_audit() {
        let cfg = GeneratorConfig::new(50, 3);
        let (a, _) = gen_seven_diagonal(&cfg).unwrap();
        for i in 0..50 {
            let mut diag = 0.0;
            let mut off = 0.0;
            for idx in a.row_offsets[i]..a.row_offsets[i + 1] {
                let v = a.values[idx];
                if a.col_indices[idx] == i {
                    diag = v.abs();
                } else {
                    off += v.abs();
                }
            }
            assert!(diag - off >= cfg.dominance_margin - 1e-12, "row {i}");
        }
    }

    #[test]
    fn generator_deterministic_in_seed() {
        let a1 = gen_seven_diagonal(&GeneratorConfig::new(30, 42)).unwrap().0;
        let a2 = gen_seven_diagonal(&GeneratorConfig::new(30, 42)).unwrap().0;
        let a3 = gen_seven_diagonal(&GeneratorConfig::new(30, 43)).unwrap().0;
        assert_eq!(a1, a2);
        assert_ne!(a1, a3);
    }

    #[test]
    fn heat_zero_dt_is_identity() {
        let op = Heat1dOperator::new(16, 0.1, 0.0, 1.0).unwrap();
        let v: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        assert_eq!(op.apply(&v), v);
    }

    #[test]
    fn heat_constant_vector_annihilated_on_interior() {
        let op = Heat1dOperator::new(10, 0.1, 0.01, 2.0).unwrap();
        let y = op.apply(&vec![1.0; 10]);
        for yi in y {
            assert!((yi - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn heat_matrix_free_matches_csr() {
        use rand::{Rng, SeedableRng};
        let op = Heat1dOperator::new(32, 1.0 / 31.0, 0.01, 1.5).unwrap();
        let a = op.to_csr();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y1 = op.apply(&v);
            let y2 = a.matvec(&v).unwrap();
            for (a, b) in y1.iter().zip(&y2) {
                assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn heat_first_mode_decay_matches_analytic_factor() {
        let nx = 64;
        let dx = 1.0 / (nx as f64 - 1.0);
        let dt = 1e-3;
        let alpha = 1.0;
        let op = Heat1dOperator::new(nx, dx, dt, alpha).unwrap();
        let mode: Vec<f64> = (0..nx)
            .map(|i| (std::f64::consts::PI * i as f64 * dx).sin())
            .collect();
        let lambda1 = (2.0 - 2.0 * (std::f64::consts::PI * dx).cos()) / (dx * dx);
        let factor = 1.0 / (1.0 + dt * alpha * lambda1);
        let mut h = ProbeHistory::new(nx);
        let cfg = GmresConfig {
            epsilon: 1e-13,
            ..GmresConfig::default()
        };
        let (u, rep) = psp_gmres(
            &op,
            &mode,
            &vec![0.0; nx],
            &Preconditioner::identity(),
            &cfg,
            &mut h,
        )
        .unwrap();
        assert!(rep.converged);
        for (ui, mi) in u.iter().zip(&mode) {
            assert!((ui - factor * mi).abs() < 1e-8, "{ui} vs {}", factor * mi);
        }
    }

    #[test]
    fn driver_single_step_matches_plain_solve() {
        let (a, b) = gen_seven_diagonal(&GeneratorConfig::new(20, 7)).unwrap();
        let cfg = GmresConfig::default();
        let plan = TimeStepPlan {
            steps: 1,
            ..TimeStepPlan::two_step_benchmark()
        };
        let run = time_step_driver(&a, &b, &plan, &cfg).unwrap();
        let (x_driver, steps) = (run.state, run.steps);
        assert_eq!(steps.len(), 1);
        assert!(!steps[0].used_estimate);

        let mut h = ProbeHistory::new(20);
        let (x_plain, rep) =
            psp_gmres(&a, &b, &vec![0.0; 20], &Preconditioner::identity(), &cfg, &mut h).unwrap();
        assert_eq!(x_driver, x_plain);
        assert_eq!(steps[0].report.iterations_total, rep.iterations_total);
    }

    #[test]
    fn driver_second_step_takes_fewer_iterations() {
        let (a, b) = gen_seven_diagonal(&GeneratorConfig::new(20, 0)).unwrap();
        // restart short enough that the first solve cannot run a full
        // unrestarted Krylov cycle, leaving room for improvement
        let cfg = GmresConfig {
            max_inner: 15,
            max_restarts: 1000,
            ..GmresConfig::default()
        };
        let plan = TimeStepPlan::two_step_benchmark();
        let steps = time_step_driver(&a, &b, &plan, &cfg).unwrap().steps;
        assert_eq!(steps.len(), 2);
        assert!(steps[1].used_estimate);
        assert!(
            steps[1].report.iterations_total < steps[0].report.iterations_total,
            "step2 {} !< step1 {}",
            steps[1].report.iterations_total,
            steps[0].report.iterations_total
        );
    }

    #[test]
    fn driver_tridiagonal_truth_converges_almost_immediately() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 16;
        let mut triplets = Vec::new();
        for i in 0..n {
            let mut off = 0.0;
            for delta in [-1i64, 1] {
                let j = i as i64 + delta;
                if (0..n as i64).contains(&j) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    triplets.push((i, j as usize, v));
                    off += v.abs();
                }
            }
            triplets.push((i, i, off + 1.0));
        }
        let a = CsrMatrix::from_triplets(n, n, &triplets).unwrap();
        let b: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        // span the space so the interior fit is exact
        let mut history = ProbeHistory::new(n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            history.record_apply(&a, &e).unwrap();
        }
        history.record_apply(&a, &vec![1.0; n]).unwrap();
        let est = mrep(&history, 1).unwrap();
        let cfg = GmresConfig::default();
        let mut h2 = ProbeHistory::new(n);
        let precond = Preconditioner::from_banded(&est.matrix).unwrap();
        let (_, rep) = psp_gmres(&a, &b, &vec![0.0; n], &precond, &cfg, &mut h2).unwrap();
        assert!(rep.converged);
        // N matches A on interior rows; only the two boundary rows differ
        assert!(rep.iterations_total <= 4, "took {}", rep.iterations_total);
    }

    #[test]
    fn fallback_engages_on_singular_estimate() {
        let (a, b) = gen_seven_diagonal(&GeneratorConfig::new(20, 5)).unwrap();
        let mut bad = BandedMatrix::identity(20, 1);
        bad.set(7, 7, 0.0);
        let mut h = ProbeHistory::new(20);
        let (x, rep, fell_back) = solve_with_fallback(
            &a,
            &b,
            &vec![0.0; 20],
            Some(&bad),
            &GmresConfig::default(),
            &mut h,
        )
        .unwrap();
        assert!(fell_back);
        assert!(rep.converged);
        let ax = a.matvec(&x).unwrap();
        let res = norm2(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<f64>>());
        assert!(res <= 1e-8);
    }

    #[test]
    fn heat_time_stepping_with_previous_solution_rhs() {
        let nx = 32;
        let dx = 1.0 / (nx as f64 - 1.0);
        let op = Heat1dOperator::new(nx, dx, 1e-3, 1.0).unwrap();
        let u0: Vec<f64> = (0..nx)
            .map(|i| (std::f64::consts::PI * i as f64 * dx).sin())
            .collect();
        let plan = TimeStepPlan {
            steps: 4,
            rhs_mode: RhsMode::PreviousSolution,
            ..TimeStepPlan::two_step_benchmark()
        };
        let cfg = GmresConfig {
            epsilon: 1e-12,
            ..GmresConfig::default()
        };
        let run = time_step_driver(&op, &u0, &plan, &cfg).unwrap();
        let (u, steps) = (run.state, run.steps);
        assert_eq!(steps.len(), 4);
        // four backward-Euler steps of the first mode: decay^4
        let lambda1 = (2.0 - 2.0 * (std::f64::consts::PI * dx).cos()) / (dx * dx);
        let factor = (1.0 / (1.0 + 1e-3 * lambda1)).powi(4);
        for (ui, m0) in u.iter().zip(&u0) {
            assert!((ui - factor * m0).abs() < 1e-7);
        }
    }
}

//! Command-line entry points: the speedup benchmark, single solves
//! of external Matrix Market systems, and artifact emission (CSV,
//! sparsity patterns, SVG convergence plots).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::gmres::{psp_gmres, GmresConfig, GmresError, Preconditioner, SolveReport};
use crate::linalg::{CsrMatrix, ProbeHistory};
use crate::mtx::read_matrix_market;
use crate::problems::{gen_seven_diagonal, time_step_driver, GeneratorConfig, RhsMode, TimeStepPlan};

/// Everything a run needs, recorded verbatim into the output directory
/// so any run can be reproduced from its artifacts alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub band_d: usize,
    pub epsilon: f64,
    pub max_inner: usize,
    pub restarts: usize,
    pub steps: usize,
    pub matrix: Option<PathBuf>,
    pub rhs: Option<PathBuf>,
    pub out: PathBuf,
    pub emit_plot: bool,
    pub history_cap: Option<usize>,
    pub reset_history: bool,
}

/// Failure classified by the exit-code contract:
/// 0 success, 2 usage/config, 3 input parse, 4 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::Unsupported(_) => CliError::Input(e.to_string()),
            Error::Config(_) | Error::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
            Error::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<GmresError> for CliError {
    fn from(e: GmresError) -> Self {
        match e {
            GmresError::Diverged { .. } => CliError::Numerical(e.to_string()),
            GmresError::Other(inner) => inner.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn gmres_config(m: &RunManifest) -> GmresConfig {
    GmresConfig {
        epsilon: m.epsilon,
        max_inner: m.max_inner,
        max_restarts: m.restarts,
        relative: false,
        reorthogonalize: false,
    }
}

fn write_manifest(m: &RunManifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(m)
        .map_err(|e| CliError::Io(format!("manifest serialization: {e}")))?;
    fs::write(m.out.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Per-iteration residual CSV, columns exactly `iter,residual_norm`.
pub fn residual_csv(history: &[f64]) -> String {
    let mut s = String::from("iter,residual_norm\n");
    for (k, r) in history.iter().enumerate() {
        let _ = writeln!(s, "{},{}", k + 1, r);
    }
    s
}

/// Text sparsity pattern: `*` marks a stored nonzero, `.` a zero.
pub fn pattern_text(a: &CsrMatrix) -> String {
    let mut grid = vec![vec![b'.'; a.n_cols]; a.n_rows];
    for (i, j, v) in a.iter_entries() {
        if v != 0.0 {
            grid[i][j] = b'*';
        }
    }
    let mut s = String::with_capacity(a.n_rows * (a.n_cols + 1));
    for row in grid {
        s.push_str(std::str::from_utf8(&row).unwrap());
        s.push('\n');
    }
    s
}

/// SVG plot of residual norm (log scale) against iteration for the
/// plain and preconditioned runs.
pub fn plot_svg(plain: &[f64], psp: &[f64]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const MARGIN: f64 = 50.0;
    let floor = 1e-16f64;
    let all: Vec<f64> = plain.iter().chain(psp).map(|v| v.max(floor)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in &all {
        lo = lo.min(v.log10());
        hi = hi.max(v.log10());
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = -16.0;
        hi = 0.0;
    }
    if hi - lo < 1.0 {
        hi = lo + 1.0;
    }
    let max_iter = plain.len().max(psp.len()).max(2) as f64;
    let xmap = |k: usize| MARGIN + (k as f64 / (max_iter - 1.0)) * (W - 2.0 * MARGIN);
    let ymap = |v: f64| {
        let t = (v.max(floor).log10() - lo) / (hi - lo);
        H - MARGIN - t * (H - 2.0 * MARGIN)
    };
    let polyline = |vals: &[f64], color: &str| {
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{:.2},{:.2}", xmap(k), ymap(*v)))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        )
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    );
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>",
        H - MARGIN
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">iteration</text>",
        W / 2.0 - 25.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        "<text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12,{})\">residual norm (log10)</text>",
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(s, "{}", polyline(plain, "crimson"));
    let _ = writeln!(s, "{}", polyline(psp, "steelblue"));
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"crimson\">plain</text>",
        W - MARGIN - 90.0,
        MARGIN + 14.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"steelblue\">preconditioned</text>",
        W - MARGIN - 90.0,
        MARGIN + 30.0
    );
    s.push_str("</svg>\n");
    s
}

fn report_summary_csv(rep: &SolveReport) -> String {
    let mut s = String::from(
        "converged,iterations_total,restarts_used,matvec_count,precond_apply_count,final_residual\n",
    );
    let _ = writeln!(
        s,
        "{},{},{},{},{},{}",
        rep.converged,
        rep.iterations_total,
        rep.restarts_used,
        rep.matvec_count,
        rep.precond_apply_count,
        rep.final_residual
    );
    s
}

/// Measure the progressive-preconditioning speedup: for each size, run the multi-step
/// driver (plain first solve, preconditioned follow-ups) and emit
/// residual CSVs, sparsity patterns and a summary table.
pub fn cmd_benchmark(m: &RunManifest) -> Result<(), CliError> {
    if m.sizes.is_empty() {
        return Err(CliError::Usage("benchmark needs at least one size".into()));
    }
    if m.steps < 2 {
        return Err(CliError::Usage(
            "benchmark needs at least 2 steps to compare plain vs preconditioned".into(),
        ));
    }
    fs::create_dir_all(&m.out)?;
    write_manifest(m)?;
    let cfg = gmres_config(m);
    let plan = TimeStepPlan {
        steps: m.steps,
        reestimate_every: 1,
        d: m.band_d,
        rhs_mode: RhsMode::Constant,
        reset_history: m.reset_history,
        history_cap: m.history_cap,
    };

    let mut summary = String::from("n,iters_plain,iters_psp,ratio\n");
    for &n in &m.sizes {
        let size_dir = m.out.join(format!("n{n}"));
        fs::create_dir_all(&size_dir)?;
        let (a, b) = gen_seven_diagonal(&GeneratorConfig::new(n, m.seed))
            .map_err(CliError::from)?;
        fs::write(size_dir.join("pattern_a.txt"), pattern_text(&a))?;

        let run = match time_step_driver(&a, &b, &plan, &cfg) {
            Ok(run) => run,
            Err(GmresError::Diverged { source, partial }) => {
                fs::write(
                    size_dir.join("plain.csv"),
                    residual_csv(&partial.residual_history),
                )?;
                fs::write(
                    size_dir.join("error.txt"),
                    format!("solver diverged on n={n}: {source}\n"),
                )?;
                return Err(CliError::Numerical(format!(
                    "solver diverged on n={n}: {source}"
                )));
            }
            Err(e) => return Err(e.into()),
        };

        let first = &run.steps.first().unwrap().report;
        let last = &run.steps.last().unwrap().report;
        fs::write(size_dir.join("plain.csv"), residual_csv(&first.residual_history))?;
        fs::write(size_dir.join("psp.csv"), residual_csv(&last.residual_history))?;
        for step in &run.steps[1..run.steps.len() - 1] {
            fs::write(
                size_dir.join(format!("step{}.csv", step.step)),
                residual_csv(&step.report.residual_history),
            )?;
        }
        if let Some(est) = &run.estimate {
            fs::write(size_dir.join("pattern_n.txt"), pattern_text(&est.to_csr()))?;
        }
        if m.emit_plot {
            fs::write(
                size_dir.join("plot.svg"),
                plot_svg(&first.residual_history, &last.residual_history),
            )?;
        }
        let ratio = last.iterations_total as f64 / first.iterations_total.max(1) as f64;
        let _ = writeln!(
            summary,
            "{},{},{},{}",
            n, first.iterations_total, last.iterations_total, ratio
        );
    }
    fs::write(m.out.join("summary.csv"), summary)?;
    Ok(())
}

fn read_rhs_file(path: &Path, n: usize) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut vals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| {
            CliError::Input(format!("rhs parse error at line {}: '{t}'", i + 1))
        })?;
        vals.push(v);
    }
    if vals.len() != n {
        return Err(CliError::Usage(format!(
            "rhs length {} does not match matrix dimension {n}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Solve a single Matrix Market system, optionally with progressive
/// preconditioning across repeated solves when `steps > 1`.
pub fn cmd_solve(m: &RunManifest) -> Result<(), CliError> {
    let matrix_path = m
        .matrix
        .as_ref()
        .ok_or_else(|| CliError::Usage("solve requires --matrix".into()))?;
    let a = read_matrix_market(matrix_path)?;
    if a.n_rows != a.n_cols {
        return Err(CliError::Usage(format!(
            "matrix must be square, got {}x{}",
            a.n_rows, a.n_cols
        )));
    }
    let n = a.n_rows;
    let b = match &m.rhs {
        Some(p) => read_rhs_file(p, n)?,
        None => (1..=n).map(|v| v as f64).collect(),
    };
    fs::create_dir_all(&m.out)?;
    write_manifest(m)?;
    let cfg = gmres_config(m);

    let (x, report) = if m.steps <= 1 {
        let mut history = match m.history_cap {
            Some(cap) => ProbeHistory::with_capacity(n, cap),
            None => ProbeHistory::new(n),
        };
        match psp_gmres(&a, &b, &vec![0.0; n], &Preconditioner::identity(), &cfg, &mut history) {
            Ok((x, rep)) => (x, rep),
            Err(GmresError::Diverged { source, partial }) => {
                fs::write(m.out.join("report.csv"), residual_csv(&partial.residual_history))?;
                fs::write(m.out.join("error.txt"), format!("solver diverged: {source}\n"))?;
                return Err(CliError::Numerical(format!("solver diverged: {source}")));
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        let plan = TimeStepPlan {
            steps: m.steps,
            reestimate_every: 1,
            d: m.band_d,
            rhs_mode: RhsMode::Constant,
            reset_history: m.reset_history,
            history_cap: m.history_cap,
        };
        match time_step_driver(&a, &b, &plan, &cfg) {
            Ok(run) => {
                let rep = run.steps.last().unwrap().report.clone();
                (run.state, rep)
            }
            Err(GmresError::Diverged { source, partial }) => {
                fs::write(m.out.join("report.csv"), residual_csv(&partial.residual_history))?;
                fs::write(m.out.join("error.txt"), format!("solver diverged: {source}\n"))?;
                return Err(CliError::Numerical(format!("solver diverged: {source}")));
            }
            Err(e) => return Err(e.into()),
        }
    };

    let mut sol = String::from("i,x\n");
    for (i, xi) in x.iter().enumerate() {
        let _ = writeln!(sol, "{},{}", i + 1, xi);
    }
    fs::write(m.out.join("solution.csv"), sol)?;
    fs::write(m.out.join("report.csv"), residual_csv(&report.residual_history))?;
    fs::write(m.out.join("report_summary.csv"), report_summary_csv(&report))?;
    if !report.converged {
        return Err(CliError::Numerical(format!(
            "did not converge: final residual {}",
            report.final_residual
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_csv_single_row() {
        let csv = residual_csv(&[1.5e-9]);
        assert_eq!(csv, "iter,residual_norm\n1,0.0000000015\n");
    }

    #[test]
    fn pattern_marks_diagonals() {
        let (a, _) = gen_seven_diagonal(&GeneratorConfig::new(20, 0)).unwrap();
        let p = pattern_text(&a);
        let lines: Vec<&str> = p.lines().collect();
        assert_eq!(lines.len(), 20);
        // row 10 has all seven offsets populated
        let row: Vec<char> = lines[10].chars().collect();
        for off in -3i64..=3 {
            assert_eq!(row[(10 + off) as usize], '*');
        }
        assert_eq!(row[0], '.');
    }

    #[test]
    fn empty_sizes_is_usage_error() {
        let m = RunManifest {
            subcommand: "benchmark".into(),
            sizes: vec![],
            seed: 0,
            band_d: 1,
            epsilon: 1e-8,
            max_inner: 200,
            restarts: 50,
            steps: 2,
            matrix: None,
            rhs: None,
            out: PathBuf::from("/tmp/nowhere"),
            emit_plot: false,
            history_cap: None,
            reset_history: false,
        };
        let err = cmd_benchmark(&m).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}

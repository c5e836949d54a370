//! Experiment harness: single runs, refinement studies and timing fits, with
//! CSV/JSON reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HpsError, Result};
use crate::geometry::{DomainSpec, SolverTree};
use crate::hps::{FactorOptions, DEFAULT_RCOND_MIN};
use crate::pde::{builtin_problem, ppw_for_kappa, DomainShape, Problem, ProblemDescriptor, ProblemKind};
use crate::solver::{
    boundary_data, dense_oracle, difference_rows, error_metrics, precompute, probe_values, solve, ConvergenceRow,
    SolverOptions, SolverState,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest mesh the dense oracle is run on.
pub const ORACLE_MAX_NODES: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub p: usize,
    /// Leaves per unit length.
    pub n: usize,
    pub kappa: Option<f64>,
    pub ppw: Option<f64>,
    pub convection: Option<f64>,
    pub restrict_rows: bool,
    pub rcond_min: f64,
    pub oracle_check: bool,
    pub save_operators: Option<PathBuf>,
    pub load_operators: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(problem: ProblemKind, p: usize, n: usize) -> Self {
        Self {
            problem,
            p,
            n,
            kappa: None,
            ppw: None,
            convection: None,
            restrict_rows: false,
            rcond_min: DEFAULT_RCOND_MIN,
            oracle_check: false,
            save_operators: None,
            load_operators: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=64).contains(&self.p) {
            return Err(HpsError::InvalidArgument(format!("p must lie in [4, 64], got {}", self.p)));
        }
        if self.n == 0 || !self.n.is_power_of_two() {
            return Err(HpsError::InvalidArgument(format!("n must be a power of two, got {}", self.n)));
        }
        if self.kappa.is_some() && self.ppw.is_some() {
            return Err(HpsError::InvalidArgument("give either kappa or ppw, not both".into()));
        }
        if let Some(ppw) = self.ppw {
            if !(ppw > 0.0 && ppw.is_finite()) {
                return Err(HpsError::InvalidArgument(format!("ppw must be > 0, got {ppw}")));
            }
        }
        if self.problem == ProblemKind::Convdiff && (self.kappa.is_some() || self.ppw.is_some()) {
            return Err(HpsError::InvalidArgument("convdiff takes no wave number".into()));
        }
        if !(self.rcond_min >= 0.0 && self.rcond_min.is_finite()) {
            return Err(HpsError::InvalidArgument(format!("invalid rcond threshold {}", self.rcond_min)));
        }
        Ok(())
    }

    fn descriptor(&self) -> ProblemDescriptor {
        let mut d = builtin_problem(self.problem).unwrap_or(ProblemDescriptor {
            kind: ProblemKind::Custom,
            shape: DomainShape::UnitSquare,
            kappa: None,
            ppw: None,
            convection: 0.0,
            source: None,
            probe_interior: Some([0.75, 0.25]),
            probe_boundary: Some([0.75, 0.0]),
        });
        if self.kappa.is_some() || self.ppw.is_some() {
            d.kappa = self.kappa;
            d.ppw = self.ppw;
        }
        if let Some(s) = self.convection {
            d.convection = s;
        }
        d
    }

    /// The concrete problem and layout for this configuration.
    pub fn instantiate(&self) -> Result<(Problem, DomainSpec)> {
        self.validate()?;
        let d = self.descriptor();
        let problem = d.instantiate(self.n, self.p);
        let spec = DomainSpec::for_shape(d.shape, self.p, self.n);
        Ok((problem, spec))
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            factor: FactorOptions {
                rcond_min: self.rcond_min,
            },
            restrict_rows: self.restrict_rows,
        }
    }
}

/// One line of output. Optional fields are empty in CSV and `null` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub problem: String,
    pub p: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub dofs: Option<usize>,
    pub kappa: f64,
    pub convection: f64,
    pub n_wave: f64,
    pub ppw: Option<f64>,
    pub t_inv: Option<f64>,
    pub t_solve: Option<f64>,
    pub memory_bytes: Option<usize>,
    pub reals_per_dof: Option<f64>,
    pub e_pot: Option<f64>,
    pub e_grad: Option<f64>,
    pub u_probe: Option<f64>,
    pub w_probe: Option<f64>,
    pub rcond_min_leaf: Option<f64>,
    pub rcond_min_merge: Option<f64>,
    pub oracle_rel_diff: Option<f64>,
    pub restrict_rows: bool,
    pub build: String,
    pub error: Option<String>,
}

fn build_tag() -> String {
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    format!("{}-{}", env!("CARGO_PKG_VERSION"), profile)
}

impl RunReport {
    fn skeleton(config: &RunConfig, problem: Option<&Problem>) -> Self {
        let (kappa, convection, extent) = problem
            .map(|p| (p.kappa, p.convection, p.shape.extent()))
            .unwrap_or((config.kappa.unwrap_or(0.0), config.convection.unwrap_or(0.0), 1.0));
        Self {
            schema_version: SCHEMA_VERSION,
            problem: config.problem.name().to_string(),
            p: config.p,
            n: config.n,
            dofs: None,
            kappa,
            convection,
            n_wave: kappa * extent / (2.0 * std::f64::consts::PI),
            ppw: (kappa > 0.0 && config.p >= 2).then(|| ppw_for_kappa(config.n, config.p, kappa)),
            t_inv: None,
            t_solve: None,
            memory_bytes: None,
            reals_per_dof: None,
            e_pot: None,
            e_grad: None,
            u_probe: None,
            w_probe: None,
            rcond_min_leaf: None,
            rcond_min_merge: None,
            oracle_rel_diff: None,
            restrict_rows: config.restrict_rows,
            build: build_tag(),
            error: None,
        }
    }

    /// A report carrying only the configuration and the failure.
    pub fn failure(config: &RunConfig, err: &HpsError) -> Self {
        let problem = config.instantiate().ok().map(|(p, _)| p);
        let mut r = Self::skeleton(config, problem.as_ref());
        r.error = Some(err.to_string());
        r
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn finite_min(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Builds the problem, pre-computes (or loads) the operators, solves and
/// measures.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let (problem, spec) = config.instantiate()?;
    let opts = config.solver_options();
    let state = match &config.load_operators {
        Some(path) => {
            let s = SolverState::load(path)?;
            if s.tree.spec != spec {
                return Err(HpsError::InvalidArgument(format!(
                    "operators in {} were built for a different layout",
                    path.display()
                )));
            }
            s
        }
        None => precompute(SolverTree::new(spec)?, &problem.operator, &opts)?,
    };
    if let Some(path) = &config.save_operators {
        state.save(path)?;
    }
    let f = boundary_data(&state.tree, &problem);
    let solution = solve(&state, &f)?;

    let mut report = RunReport::skeleton(config, Some(&problem));
    report.dofs = Some(state.tree.mesh.len());
    report.t_inv = Some(state.t_inv);
    report.t_solve = Some(solution.t_solve);
    report.memory_bytes = Some(state.memory_bytes());
    report.reals_per_dof = Some(state.reals_per_dof());
    report.rcond_min_leaf = finite_min(state.min_leaf_rcond());
    report.rcond_min_merge = finite_min(state.min_merge_rcond());
    if let Some(reference) = &problem.reference {
        let m = error_metrics(&state.tree, &solution, reference)?;
        report.e_pot = Some(m.e_pot);
        report.e_grad = Some(m.e_grad);
    }
    if let (Some(xi), Some(yb)) = (problem.probe_interior, problem.probe_boundary) {
        let (u, w) = probe_values(&state, &solution, xi, yb, None)?;
        report.u_probe = Some(u);
        report.w_probe = Some(w);
    }
    if config.oracle_check {
        if state.tree.mesh.len() > ORACLE_MAX_NODES {
            return Err(HpsError::InvalidArgument(format!(
                "oracle check limited to {ORACLE_MAX_NODES} nodes, mesh has {}",
                state.tree.mesh.len()
            )));
        }
        let oracle = dense_oracle(&state.tree, &problem.operator, &f)?;
        report.oracle_rel_diff = Some(max_rel_diff(&solution.u, &oracle.u));
    }
    Ok(report)
}

/// One row of a refinement study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub p: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub dofs: usize,
    pub pts_per_wave: Option<f64>,
    pub u_interior: f64,
    pub e_int: Option<f64>,
    pub w_boundary: f64,
    pub e_bnd: Option<f64>,
}

/// Runs `config` at each `n` (each twice the previous) and differences the
/// probe values of successive levels.
pub fn convergence_study(config: &RunConfig, ns: &[usize]) -> Result<Vec<ConvergenceRecord>> {
    if ns.is_empty() {
        return Err(HpsError::InvalidArgument("empty refinement sequence".into()));
    }
    if ns.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(HpsError::InvalidArgument("each n must double the previous".into()));
    }
    let mut rows = Vec::with_capacity(ns.len());
    let mut ppws = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut c = config.clone();
        c.n = n;
        c.oracle_check = false;
        c.save_operators = None;
        c.load_operators = None;
        let report = run(&c)?;
        let (Some(u), Some(w)) = (report.u_probe, report.w_probe) else {
            return Err(HpsError::InvalidArgument(format!(
                "problem {} has no probe points",
                config.problem.name()
            )));
        };
        ppws.push(report.ppw);
        rows.push(ConvergenceRow {
            n,
            dofs: report.dofs.unwrap_or(0),
            u_interior: u,
            w_boundary: w,
            e_int: None,
            e_bnd: None,
        });
    }
    difference_rows(&mut rows);
    Ok(rows
        .into_iter()
        .zip(ppws)
        .map(|(r, ppw)| ConvergenceRecord {
            p: config.p,
            n: r.n,
            dofs: r.dofs,
            pts_per_wave: ppw,
            u_interior: r.u_interior,
            e_int: r.e_int,
            w_boundary: r.w_boundary,
            e_bnd: r.e_bnd,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    #[serde(rename = "N")]
    pub dofs: usize,
    pub t_inv: f64,
    pub t_solve: f64,
    pub memory_bytes: usize,
    pub reals_per_dof: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub p: usize,
    pub ppw: f64,
    pub rows: Vec<ScalingRow>,
    pub slope_t_inv: f64,
    pub slope_t_solve: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(HpsError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(HpsError::InvalidArgument("slope fit needs two or more positive samples".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(HpsError::InvalidArgument("slope fit needs distinct sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Times pre-computation and solve for the constant-coefficient problem over
/// `ns` and fits power laws in `N`. The solve time is the fastest of
/// `solve_repeats` runs.
pub fn scaling_study(p: usize, ns: &[usize], ppw: f64, solve_repeats: usize) -> Result<ScalingStudy> {
    let dofs: Vec<usize> = ns
        .iter()
        .map(|&n| {
            let m = n * (p - 1);
            m * m + 2 * m + 1
        })
        .collect();
    let span = match (dofs.iter().min(), dofs.iter().max()) {
        (Some(&lo), Some(&hi)) if lo > 0 => hi as f64 / lo as f64,
        _ => 0.0,
    };
    if ns.len() < 4 || span < 8.0 {
        return Err(HpsError::InsufficientPoints {
            needed: 4,
            span,
            got: ns.len(),
        });
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut c = RunConfig::new(ProblemKind::Constant, p, n);
        c.ppw = Some(ppw);
        let (problem, spec) = c.instantiate()?;
        let state = precompute(SolverTree::new(spec)?, &problem.operator, &c.solver_options())?;
        let f = boundary_data(&state.tree, &problem);
        let mut t_solve = f64::INFINITY;
        for _ in 0..solve_repeats.max(1) {
            t_solve = t_solve.min(solve(&state, &f)?.t_solve);
        }
        rows.push(ScalingRow {
            n,
            dofs: state.tree.mesh.len(),
            t_inv: state.t_inv,
            t_solve,
            memory_bytes: state.memory_bytes(),
            reals_per_dof: state.reals_per_dof(),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.dofs as f64).collect();
    let slope_t_inv = loglog_slope(&x, &rows.iter().map(|r| r.t_inv).collect::<Vec<_>>())?;
    let slope_t_solve = loglog_slope(&x, &rows.iter().map(|r| r.t_solve).collect::<Vec<_>>())?;
    Ok(ScalingStudy {
        p,
        ppw,
        rows,
        slope_t_inv,
        slope_t_solve,
    })
}

/// Writes records as CSV with a header row or as a JSON array.
pub fn write_records<T: Serialize>(out: impl Write, records: &[T], format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r).map_err(|e| HpsError::Format(e.to_string()))?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(out, records).map_err(|e| HpsError::Format(e.to_string()))?;
        }
    }
    Ok(())
}

pub fn read_records<T: for<'de> Deserialize<'de>>(input: impl std::io::Read, format: OutputFormat) -> Result<Vec<T>> {
    match format {
        OutputFormat::Csv => csv::Reader::from_reader(input)
            .deserialize()
            .map(|r| r.map_err(|e| HpsError::Format(e.to_string())))
            .collect(),
        OutputFormat::Json => serde_json::from_reader(input).map_err(|e| HpsError::Format(e.to_string())),
    }
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn emit<T: Serialize>(path: Option<&Path>, records: &[T], format: OutputFormat) -> Result<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)?;
            write_records(std::io::BufWriter::new(file), records, format)
        }
        None => {
            let stdout = std::io::stdout();
            write_records(stdout.lock(), records, format)?;
            if format == OutputFormat::Json {
                println!();
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn scaling_needs_enough_sizes() {
        assert!(matches!(
            scaling_study(6, &[1, 2], 12.0, 1),
            Err(HpsError::InsufficientPoints { .. })
        ));
        assert!(matches!(
            scaling_study(6, &[4, 4, 4, 4], 12.0, 1),
            Err(HpsError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(ProblemKind::Constant, 21, 4);
        assert!(c.validate().is_ok());
        c.kappa = Some(3.0);
        c.ppw = Some(12.0);
        assert!(c.validate().is_err());
        let c = RunConfig::new(ProblemKind::Bump, 3, 4);
        assert!(c.validate().is_err());
        let c = RunConfig::new(ProblemKind::Bump, 8, 3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn constant_run_report() {
        let mut c = RunConfig::new(ProblemKind::Constant, 11, 2);
        c.ppw = Some(12.0);
        c.oracle_check = true;
        let r = run(&c).unwrap();
        assert_eq!(r.dofs, Some(441));
        assert!((r.n_wave - 20.0 / 12.0).abs() < 1e-12);
        assert!(r.e_pot.unwrap() < 1e-3);
        assert!(r.oracle_rel_diff.unwrap() < 1e-10);
        assert!(r.rcond_min_leaf.unwrap() > 0.0);
    }

    #[test]
    fn reports_round_trip_through_csv_and_json() {
        let mut c = RunConfig::new(ProblemKind::Bump, 6, 2);
        c.restrict_rows = true;
        let mut reports = vec![run(&c).unwrap()];
        reports.push(RunReport::failure(&c, &HpsError::SingularSystem { rcond: 1e-20 }));
        for format in [OutputFormat::Csv, OutputFormat::Json] {
            let mut buf = Vec::new();
            write_records(&mut buf, &reports, format).unwrap();
            let back: Vec<RunReport> = read_records(buf.as_slice(), format).unwrap();
            assert_eq!(back, reports);
        }
    }

    #[test]
    fn convergence_rows_difference_successive_levels() {
        let c = RunConfig::new(ProblemKind::Convdiff, 6, 1);
        let rows = convergence_study(&c, &[1, 2]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].e_int, Some(rows[0].u_interior - rows[1].u_interior));
        assert!(rows[1].e_int.is_none());
        assert!(convergence_study(&c, &[1, 3]).is_err());
        let again = convergence_study(&c, &[1, 2]).unwrap();
        assert_eq!(rows, again);
    }
}

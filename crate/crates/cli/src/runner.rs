//! Experiment orchestration: resolve a [`RunConfig`] into grid, scheme,
//! initial state, and solver settings, run the requested experiment, and
//! write the CSV/PGM artifacts.
//!
//! All numeric CSV columns are written with 17 significant digits so the
//! files parse back to the exact binary values.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use entrodiff::coeffs::{admissibility_k, nonneg_margin};
use entrodiff::diagnostics::{convergence_order, l2_error, restrict_to_coarse};
use entrodiff::integrator::integrate;
use entrodiff::{
    EntropySpec, IntegrateError, JacobianKind, Method, ModelParams, Scheme1DSystem,
    Scheme2DConfig, Scheme2DSystem, SchemeConfig, SchemeError, Solution, SolverConfig, TorusGrid,
    TrajectoryRecord,
};
use thiserror::Error;

use crate::config::{
    ConfigError, InitialSpec, JacobianSpec, MethodSpec, RunConfig, SolverSpec,
};
use crate::image::{field_to_image, image_to_field, ImageError};
use crate::pgm::{load_pgm, save_pgm, PgmError};
use crate::presets::{preset_initial_data, PresetError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Preset(#[from] PresetError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

impl RunError {
    fn invalid(message: impl Into<String>) -> RunError {
        RunError::Invalid(message.into())
    }
}

/// Process exit code for an error: 2 for configuration problems, 3 for loss
/// of positivity, 4 for step-size underflow, 1 otherwise.
pub fn exit_code(err: &RunError) -> i32 {
    match err {
        RunError::Config(_) | RunError::Invalid(_) | RunError::Preset(_) => 2,
        RunError::Image(ImageError::BadFloor { .. }) => 2,
        RunError::Integrate(IntegrateError::InvalidConfig { .. }) => 2,
        RunError::Integrate(IntegrateError::NonpositiveInitial { .. }) => 2,
        RunError::Integrate(IntegrateError::PositivityLoss { .. }) => 3,
        RunError::Integrate(IntegrateError::StepSizeUnderflow { .. }) => 4,
        _ => 1,
    }
}

/// Exit code for a check-suite report with hard failures.
pub const EXIT_CHECK_FAILED: i32 = 5;

/// The dimension-specific half of a resolved configuration.
#[derive(Debug, Clone)]
pub enum ResolvedScheme {
    OneD(SchemeConfig),
    TwoD(Scheme2DConfig),
}

/// Dissipation certificate of the resolved scheme: the sign condition K for
/// the 1D family, plus the global minimum margin of the quartic form.
#[derive(Debug, Clone, Copy)]
pub struct Admissibility {
    pub k: Option<f64>,
    pub margin: f64,
    pub guaranteed: bool,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: TorusGrid,
    pub scheme: ResolvedScheme,
    pub u0: Vec<f64>,
    pub solver: SolverConfig,
    pub admissibility: Admissibility,
}

fn model_params(config: &RunConfig) -> Result<ModelParams, RunError> {
    let (a, b, beta) = config.equation.coefficients();
    ModelParams::new(a, b, beta).map_err(|e| RunError::invalid(e.to_string()))
}

fn solver_config(spec: &SolverSpec, grid: &TorusGrid) -> SolverConfig {
    let method = match spec.method {
        MethodSpec::ImplicitEuler => Method::ImplicitEuler,
        MethodSpec::Bdf2 => Method::Bdf2,
        MethodSpec::Rk45 => Method::ExplicitRk45,
    };
    // The stencil reaches two nodes along each axis, so the band half-width
    // is 2 in 1D and twice the slow-axis stride in 2D.
    let bandwidth = if grid.ndim() == 1 { 2 } else { 2 * grid.stride(0) };
    let jacobian = match spec.jacobian {
        JacobianSpec::Auto => {
            if grid.ndim() == 1 {
                JacobianKind::Banded { bandwidth }
            } else {
                JacobianKind::Sparse
            }
        }
        JacobianSpec::Dense => JacobianKind::Dense,
        JacobianSpec::Banded => JacobianKind::Banded { bandwidth },
        JacobianSpec::Sparse => JacobianKind::Sparse,
        JacobianSpec::MatrixFree => JacobianKind::MatrixFree,
    };
    SolverConfig {
        method,
        atol: spec.atol,
        rtol: spec.rtol,
        dt_init: spec.dt_init,
        dt_min: spec.dt_min,
        dt_max: spec.dt_max,
        max_steps: spec.max_steps,
        jacobian,
        ..SolverConfig::default()
    }
}

/// Build the scheme for the configured dimension on the given grid.
fn build_scheme(config: &RunConfig, grid: &TorusGrid) -> Result<ResolvedScheme, RunError> {
    let model = model_params(config)?;
    if grid.ndim() == 1 {
        let entropy = EntropySpec::new(config.alpha).map_err(|e| RunError::invalid(e.to_string()))?;
        let scheme =
            SchemeConfig::with_optimal_lambda4(entropy, model, config.variant, config.average)
                .map_err(|e| RunError::invalid(e.to_string()))?;
        Ok(ResolvedScheme::OneD(scheme))
    } else {
        if config.alpha != 0.0 {
            return Err(RunError::invalid(format!(
                "the 2D scheme dissipates the logarithmic entropy; alpha must be 0, got {}",
                config.alpha
            )));
        }
        if model.a != 0.0 || model.b != 0.0 {
            return Err(RunError::invalid(
                "the 2D scheme covers only the family with a = b = 0".to_string(),
            ));
        }
        let scheme = Scheme2DConfig::new(model.beta, config.average)
            .map_err(|e| RunError::invalid(e.to_string()))?;
        Ok(ResolvedScheme::TwoD(scheme))
    }
}

fn admissibility(config: &RunConfig, scheme: &ResolvedScheme) -> Result<Admissibility, RunError> {
    let report = match scheme {
        ResolvedScheme::OneD(s) => {
            let model = model_params(config)?;
            let margin = nonneg_margin(s.poly());
            Admissibility {
                k: Some(admissibility_k(config.alpha, model)),
                margin,
                guaranteed: margin >= -1e-12,
            }
        }
        ResolvedScheme::TwoD(s) => Admissibility {
            k: None,
            margin: nonneg_margin(s.poly()),
            guaranteed: s.dissipation_guaranteed(),
        },
    };
    Ok(report)
}

/// Resolve the grid, scheme, initial state, and solver. Image initial data
/// supplies its own grid, which replaces the `[grid]` section.
pub fn resolve(config: &RunConfig) -> Result<Resolved, RunError> {
    let (grid, u0) = match &config.initial {
        InitialSpec::Image { path, floor } => {
            let image = load_pgm(path)?;
            image_to_field(&image, *floor)?
        }
        other => {
            let grid = TorusGrid::new(&config.dims, config.h)
                .map_err(|e| RunError::invalid(e.to_string()))?;
            let u0 = preset_initial_data(other, &grid)?;
            (grid, u0)
        }
    };
    let scheme = build_scheme(config, &grid)?;
    let admissibility = admissibility(config, &scheme)?;
    let solver = solver_config(&config.solver, &grid);
    Ok(Resolved { grid, scheme, u0, solver, admissibility })
}

/// One line on stdout stating the dissipation certificate; a warning on
/// stderr when the sign condition fails.
pub fn report_admissibility(adm: &Admissibility) {
    match adm.k {
        Some(k) => println!(
            "admissibility: K = {k:.6e}, dissipation margin = {:.6e}",
            adm.margin
        ),
        None => println!("admissibility: dissipation margin = {:.6e}", adm.margin),
    }
    if !adm.guaranteed {
        eprintln!("warning: entropy dissipation is not guaranteed for these parameters");
    }
}

/// Compact, filename-safe rendering of a time value (`1e-8`, `2.5e-4`).
pub fn format_time(t: f64) -> String {
    format!("{t:e}")
}

fn create_dir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct CsvWriter {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl CsvWriter {
    fn create(path: PathBuf) -> Result<CsvWriter, RunError> {
        let file = fs::File::create(&path).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(CsvWriter { path, out: BufWriter::new(file) })
    }

    fn line(&mut self, text: &str) -> Result<(), RunError> {
        writeln!(self.out, "{text}").map_err(|source| RunError::Io {
            path: self.path.display().to_string(),
            source,
        })
    }

    fn finish(mut self) -> Result<PathBuf, RunError> {
        self.out.flush().map_err(|source| RunError::Io {
            path: self.path.display().to_string(),
            source,
        })?;
        Ok(self.path)
    }
}

fn write_series(path: PathBuf, record: &TrajectoryRecord) -> Result<PathBuf, RunError> {
    let mut csv = CsvWriter::create(path)?;
    csv.line("t,mass,entropy,entropy_production,dissipation,min_u,max_u")?;
    for row in &record.rows {
        csv.line(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            row.t, row.mass, row.entropy, row.entropy_production, row.dissipation, row.min_u,
            row.max_u
        ))?;
    }
    csv.finish()
}

fn write_snapshot(path: PathBuf, u: &[f64], grid: &TorusGrid) -> Result<PathBuf, RunError> {
    let mut csv = CsvWriter::create(path)?;
    let h = grid.h();
    if grid.ndim() == 1 {
        csv.line("x,u")?;
        for (i, &value) in u.iter().enumerate() {
            csv.line(&format!("{:.16e},{:.16e}", i as f64 * h, value))?;
        }
    } else {
        csv.line("x,y,u")?;
        for (i, &value) in u.iter().enumerate() {
            let x = grid.coord(i, 1) as f64 * h;
            let y = grid.coord(i, 0) as f64 * h;
            csv.line(&format!("{x:.16e},{y:.16e},{value:.16e}"))?;
        }
    }
    csv.finish()
}

/// Snapshot times: sorted, deduplicated, and confined to [0, t_end].
fn sample_times(config: &RunConfig) -> Result<Vec<f64>, RunError> {
    let mut times = config.times.clone();
    times.sort_by(|a, b| a.partial_cmp(b).expect("times are finite"));
    times.dedup();
    for &t in &times {
        if !(t.is_finite() && (0.0..=config.t_end).contains(&t)) {
            return Err(RunError::invalid(format!(
                "output time {t:e} lies outside [0, t_end = {:e}]",
                config.t_end
            )));
        }
    }
    Ok(times)
}

#[derive(Debug)]
pub struct EvolveOutcome {
    pub resolved: Resolved,
    pub solution: Solution,
    pub record: TrajectoryRecord,
    pub series_path: PathBuf,
    pub snapshot_paths: Vec<PathBuf>,
}

/// Integrate the configured problem, recording the observables at every
/// accepted step and writing `series.csv` plus one `snapshot_<t>.csv` per
/// requested time.
pub fn run_evolve(config: &RunConfig) -> Result<EvolveOutcome, RunError> {
    let resolved = resolve(config)?;
    report_admissibility(&resolved.admissibility);
    let out_dir = PathBuf::from(&config.out_dir);
    create_dir(&out_dir)?;
    let times = sample_times(config)?;

    let mut record = TrajectoryRecord::new();
    let mut observer_error: Option<SchemeError> = None;
    let grid = &resolved.grid;

    let solution = match &resolved.scheme {
        ResolvedScheme::OneD(scheme) => {
            record.push_1d(0.0, &resolved.u0, scheme, grid)?;
            let system = Scheme1DSystem { config: scheme, grid };
            let mut observer = |step: &entrodiff::StepResult, u: &[f64]| {
                if observer_error.is_none() {
                    if let Err(e) = record.push_1d(step.t, u, scheme, grid) {
                        observer_error = Some(e);
                    }
                }
            };
            integrate(&system, &resolved.u0, 0.0, config.t_end, &resolved.solver, &times,
                Some(&mut observer))?
        }
        ResolvedScheme::TwoD(scheme) => {
            record.push_2d(0.0, &resolved.u0, scheme, grid)?;
            let system = Scheme2DSystem { config: scheme, grid };
            let mut observer = |step: &entrodiff::StepResult, u: &[f64]| {
                if observer_error.is_none() {
                    if let Err(e) = record.push_2d(step.t, u, scheme, grid) {
                        observer_error = Some(e);
                    }
                }
            };
            integrate(&system, &resolved.u0, 0.0, config.t_end, &resolved.solver, &times,
                Some(&mut observer))?
        }
    };
    if let Some(e) = observer_error {
        return Err(RunError::Scheme(e));
    }

    let series_path = write_series(out_dir.join("series.csv"), &record)?;
    let mut snapshot_paths = Vec::new();
    for (t, u) in &solution.samples {
        let name = format!("snapshot_{}.csv", format_time(*t));
        snapshot_paths.push(write_snapshot(out_dir.join(name), u, grid)?);
    }
    Ok(EvolveOutcome { resolved, solution, record, series_path, snapshot_paths })
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error: f64,
    /// Observed order against the previous row; absent on the first row.
    pub order: Option<f64>,
}

#[derive(Debug)]
pub struct ConvergenceOutcome {
    pub rows: Vec<ConvergenceRow>,
    pub slope: f64,
    pub csv_path: PathBuf,
}

/// Turn (h, error) measurements into table rows plus the log-log regression
/// slope across all of them.
pub fn convergence_table(errors: &[(f64, f64)]) -> Result<(Vec<ConvergenceRow>, f64), RunError> {
    let mut rows = Vec::with_capacity(errors.len());
    for (j, &(h, error)) in errors.iter().enumerate() {
        let order = if j == 0 {
            None
        } else {
            let (hp, ep) = errors[j - 1];
            Some(((ep / error).ln()) / ((hp / h).ln()))
        };
        rows.push(ConvergenceRow { h, error, order });
    }
    let slope =
        convergence_order(errors).map_err(|e| RunError::invalid(e.to_string()))?;
    Ok((rows, slope))
}

fn grid_from_spacing(h: f64) -> Result<TorusGrid, RunError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(RunError::invalid(format!("grid spacing {h} must be positive")));
    }
    let n = (1.0 / h).round();
    if (n * h - 1.0).abs() > 1e-9 || n < 3.0 {
        return Err(RunError::invalid(format!(
            "spacing {h} does not tile the unit torus with at least 3 nodes"
        )));
    }
    TorusGrid::unit_1d(n as usize).map_err(|e| RunError::invalid(e.to_string()))
}

/// Self-convergence study: integrate the same 1D problem on each coarse grid
/// and on the reference grid, compare at t_end on coincident nodes, and
/// regress error against spacing. The independent legs run in parallel.
pub fn run_convergence(
    config: &RunConfig,
    h_list: &[f64],
    h_ref: f64,
) -> Result<ConvergenceOutcome, RunError> {
    if config.dims.len() != 1 {
        return Err(RunError::invalid("convergence studies are 1D".to_string()));
    }
    if matches!(config.initial, InitialSpec::Image { .. }) {
        return Err(RunError::invalid("convergence studies need an analytic datum".to_string()));
    }
    if h_list.len() < 2 {
        return Err(RunError::invalid("need at least two spacings".to_string()));
    }
    for (i, &h) in h_list.iter().enumerate() {
        if h_list[..i].contains(&h) {
            return Err(RunError::invalid(format!(
                "spacing {h} appears twice; the regression would be degenerate"
            )));
        }
    }

    let ref_grid = grid_from_spacing(h_ref)?;
    let coarse_grids: Vec<TorusGrid> =
        h_list.iter().map(|&h| grid_from_spacing(h)).collect::<Result<_, _>>()?;
    for grid in &coarse_grids {
        // Node coincidence: the reference count must be a multiple.
        if ref_grid.len() % grid.len() != 0 {
            return Err(RunError::invalid(format!(
                "reference spacing {h_ref} does not refine h = {}",
                grid.h()
            )));
        }
    }

    let scheme = match build_scheme(config, &ref_grid)? {
        ResolvedScheme::OneD(s) => s,
        ResolvedScheme::TwoD(_) => unreachable!("checked dims above"),
    };
    report_admissibility(&admissibility(config, &ResolvedScheme::OneD(scheme.clone()))?);

    let mut all_grids = coarse_grids;
    all_grids.push(ref_grid);
    let t_end = config.t_end;

    let finals: Vec<Vec<f64>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for grid in &all_grids {
            let scheme = &scheme;
            let initial = &config.initial;
            let solver = solver_config(&config.solver, grid);
            handles.push(scope.spawn(move || -> Result<Vec<f64>, RunError> {
                let u0 = preset_initial_data(initial, grid)?;
                let system = Scheme1DSystem { config: scheme, grid };
                let solution = integrate(&system, &u0, 0.0, t_end, &solver, &[], None)?;
                Ok(solution.u)
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("convergence leg panicked"))
            .collect::<Result<Vec<_>, RunError>>()
    })?;

    let ref_grid = all_grids.pop().expect("reference grid present");
    let ref_u = finals.last().expect("reference solution present");
    let mut errors = Vec::new();
    for (grid, u) in all_grids.iter().zip(&finals) {
        let restricted = restrict_to_coarse(ref_u, &ref_grid, grid)
            .map_err(|e| RunError::invalid(e.to_string()))?;
        let error =
            l2_error(u, &restricted, grid).map_err(|e| RunError::invalid(e.to_string()))?;
        errors.push((grid.h(), error));
    }

    let (rows, slope) = convergence_table(&errors)?;
    let out_dir = PathBuf::from(&config.out_dir);
    create_dir(&out_dir)?;
    let mut csv = CsvWriter::create(out_dir.join("convergence.csv"))?;
    csv.line("h,error,order")?;
    for row in &rows {
        let order = row.order.map(|p| format!("{p:.16e}")).unwrap_or_default();
        csv.line(&format!("{:.16e},{:.16e},{order}", row.h, row.error))?;
    }
    let csv_path = csv.finish()?;
    println!("convergence slope = {slope:.4}");
    Ok(ConvergenceOutcome { rows, slope, csv_path })
}

#[derive(Debug)]
pub struct DenoiseOutcome {
    pub resolved: Resolved,
    pub solution: Solution,
    pub record: TrajectoryRecord,
    pub series_path: PathBuf,
    pub pgm_paths: Vec<PathBuf>,
}

/// Fourth-order smoothing of a grayscale image: evolve the image as a 2D
/// state and render each requested time back to `denoised_<t>.pgm`.
pub fn run_denoise(config: &RunConfig) -> Result<DenoiseOutcome, RunError> {
    if !matches!(config.initial, InitialSpec::Image { .. }) {
        return Err(RunError::invalid(
            "denoise needs image initial data ([initial] preset = image)".to_string(),
        ));
    }
    let (a, b, beta) = config.equation.coefficients();
    if a != 0.0 || b != 0.0 || beta != 2.0 {
        return Err(RunError::invalid(format!(
            "denoise runs the 2D family with a = b = 0 and beta = 2, got a = {a}, b = {b}, beta = {beta}"
        )));
    }
    if config.alpha != 0.0 {
        return Err(RunError::invalid("denoise dissipates the logarithmic entropy (alpha = 0)".to_string()));
    }

    let outcome = run_evolve(config)?;
    let out_dir = PathBuf::from(&config.out_dir);
    let mut pgm_paths = Vec::new();
    for (t, u) in &outcome.solution.samples {
        let image = field_to_image(u, &outcome.resolved.grid)?;
        let path = out_dir.join(format!("denoised_{}.pgm", format_time(*t)));
        save_pgm(&image, &path)?;
        pgm_paths.push(path);
    }
    Ok(DenoiseOutcome {
        resolved: outcome.resolved,
        solution: outcome.solution,
        record: outcome.record,
        series_path: outcome.series_path,
        pgm_paths,
    })
}

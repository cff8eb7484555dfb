//! Observables and post-processing for solver trajectories.
//!
//! The quantities mirror what the schemes guarantee: the discrete mass is
//! conserved exactly, the discrete entropy h^d sum s(u_i) decreases along
//! admissible trajectories, and for strictly positive steady states the
//! entropy gap S(t) - S_inf decays exponentially. `decay_rate` extracts that
//! exponential rate by log-linear regression, `convergence_order` fits the
//! slope of an error-versus-spacing series, and `restrict_to_coarse` aligns
//! solutions across nested grids for error measurement.

use crate::coeffs::EntropySpec;
use crate::grid::TorusGrid;
use crate::scheme1d::{self, SchemeConfig, SchemeError};
use crate::scheme2d::{self, Scheme2DConfig};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    /// Too few points above the datum to fit a decay rate.
    #[error("window has fewer than two points with a positive entropy gap")]
    DegenerateWindow,
    /// Fields live on grids that cannot be compared node by node.
    #[error("grids are incompatible: {reason}")]
    IncompatibleGrids { reason: String },
}

/// Discrete mass h^d sum u_i.
pub fn mass(u: &[f64], grid: &TorusGrid) -> f64 {
    grid.cell_volume() * u.iter().sum::<f64>()
}

/// Discrete entropy h^d sum s(u_i).
pub fn discrete_entropy(u: &[f64], grid: &TorusGrid, entropy: EntropySpec) -> f64 {
    grid.cell_volume() * u.iter().map(|&x| entropy.density(x)).sum::<f64>()
}

/// Entropy of the constant state with the same mass: the large-time datum
/// S_inf = s(mean u) * measure for mass-conserving dissipative dynamics.
pub fn equilibrium_entropy(u: &[f64], grid: &TorusGrid, entropy: EntropySpec) -> f64 {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    entropy.density(mean) * grid.measure()
}

/// One recorded instant of a trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub t: f64,
    pub mass: f64,
    pub entropy: f64,
    pub entropy_production: f64,
    pub dissipation: f64,
    pub min_u: f64,
    pub max_u: f64,
}

/// Time series of the standard observables.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryRecord {
    pub fn new() -> TrajectoryRecord {
        TrajectoryRecord { rows: Vec::new() }
    }

    /// Record the observables of a 1D state.
    pub fn push_1d(
        &mut self,
        t: f64,
        u: &[f64],
        config: &SchemeConfig,
        grid: &TorusGrid,
    ) -> Result<(), SchemeError> {
        let row = TrajectoryRow {
            t,
            mass: mass(u, grid),
            entropy: discrete_entropy(u, grid, config.entropy),
            entropy_production: scheme1d::entropy_production_closed_form(u, config, grid)?,
            dissipation: scheme1d::dissipation_functional(u, config, grid)?,
            min_u: u.iter().cloned().fold(f64::INFINITY, f64::min),
            max_u: u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        self.rows.push(row);
        Ok(())
    }

    /// Record the observables of a 2D state; the entropy is the logarithmic
    /// one the 2D scheme dissipates.
    pub fn push_2d(
        &mut self,
        t: f64,
        u: &[f64],
        config: &Scheme2DConfig,
        grid: &TorusGrid,
    ) -> Result<(), SchemeError> {
        let entropy = EntropySpec::new(0.0).expect("alpha = 0 is valid");
        let row = TrajectoryRow {
            t,
            mass: mass(u, grid),
            entropy: discrete_entropy(u, grid, entropy),
            entropy_production: scheme2d::entropy_production_2d(u, config, grid)?,
            dissipation: scheme2d::dissipation_functional_2d(u, config, grid)?,
            min_u: u.iter().cloned().fold(f64::INFINITY, f64::min),
            max_u: u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        self.rows.push(row);
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.entropy).collect()
    }
}

/// Exponential decay rate of `values` toward `datum`: the least-squares slope
/// of -ln(values - datum) against time over all points with a positive gap.
pub fn decay_rate(times: &[f64], values: &[f64], datum: f64) -> Result<f64, DiagnosticsError> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values.iter())
        .filter(|(_, &v)| v - datum > 0.0 && (v - datum).is_finite())
        .map(|(&t, &v)| (t, (v - datum).ln()))
        .collect();
    if pts.len() < 2 || pts.iter().all(|&(t, _)| t == pts[0].0) {
        return Err(DiagnosticsError::DegenerateWindow);
    }
    let n = pts.len() as f64;
    let st: f64 = pts.iter().map(|&(t, _)| t).sum();
    let sy: f64 = pts.iter().map(|&(_, y)| y).sum();
    let stt: f64 = pts.iter().map(|&(t, _)| t * t).sum();
    let sty: f64 = pts.iter().map(|&(t, y)| t * y).sum();
    let denom = n * stt - st * st;
    if denom.abs() < 1e-300 {
        return Err(DiagnosticsError::DegenerateWindow);
    }
    Ok(-(n * sty - st * sy) / denom)
}

/// Discrete L2 distance sqrt(h^d sum (u_i - v_i)^2) of two fields on one grid.
pub fn l2_error(u: &[f64], v: &[f64], grid: &TorusGrid) -> Result<f64, DiagnosticsError> {
    if u.len() != grid.len() || v.len() != grid.len() {
        return Err(DiagnosticsError::IncompatibleGrids {
            reason: format!(
                "field lengths {} and {} against grid of {} nodes",
                u.len(),
                v.len(),
                grid.len()
            ),
        });
    }
    let sum: f64 = u.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((grid.cell_volume() * sum).sqrt())
}

/// Subsample a field from a nested fine grid onto a coarse grid whose node
/// count divides the fine one along every axis.
pub fn restrict_to_coarse(
    fine: &[f64],
    fine_grid: &TorusGrid,
    coarse_grid: &TorusGrid,
) -> Result<Vec<f64>, DiagnosticsError> {
    if fine_grid.ndim() != coarse_grid.ndim() {
        return Err(DiagnosticsError::IncompatibleGrids {
            reason: format!(
                "dimension {} vs {}",
                fine_grid.ndim(),
                coarse_grid.ndim()
            ),
        });
    }
    if fine.len() != fine_grid.len() {
        return Err(DiagnosticsError::IncompatibleGrids {
            reason: "field length does not match the fine grid".to_string(),
        });
    }
    let d = fine_grid.ndim();
    let mut ratios = Vec::with_capacity(d);
    for axis in 0..d {
        let nf = fine_grid.dims()[axis];
        let nc = coarse_grid.dims()[axis];
        if nc == 0 || nf % nc != 0 {
            return Err(DiagnosticsError::IncompatibleGrids {
                reason: format!("axis {axis}: {nf} fine nodes over {nc} coarse"),
            });
        }
        ratios.push(nf / nc);
    }
    let mut out = vec![0.0; coarse_grid.len()];
    for (ic, o) in out.iter_mut().enumerate() {
        let mut fi = 0usize;
        for axis in 0..d {
            let cc = coarse_grid.coord(ic, axis);
            fi += cc * ratios[axis] * fine_grid.stride(axis);
        }
        *o = fine[fi];
    }
    Ok(out)
}

/// Least-squares slope of log(error) against log(h) for a series of
/// (spacing, error) pairs.
pub fn convergence_order(series: &[(f64, f64)]) -> Result<f64, DiagnosticsError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|&&(h, e)| h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite())
        .map(|&(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 || pts.iter().all(|&(x, _)| x == pts[0].0) {
        return Err(DiagnosticsError::DegenerateWindow);
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|&(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|&(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|&(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|&(x, y)| x * y).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

//! Self-check suite: runs the scheme's defining identities on random states
//! for one configuration and reports a pass/fail table.
//!
//! Identity checks (flux identification, difference/chain-rule identities,
//! the entropy-production closed form, mass conservation) must hold for any
//! parameters and are hard failures. The nonnegativity of the dissipation
//! polynomial depends on the chosen parameters; when its global minimum is
//! negative the row reports "not guaranteed" without failing the suite.

use std::fmt::Write as _;

use entrodiff::coeffs::verify_flux_identification;
use entrodiff::scheme1d::{
    self, entropy_variables, xi_alpha1, xi_central, xi_noncentral,
};
use entrodiff::scheme2d;
use entrodiff::{EntropyKind, Scheme2DConfig, SchemeConfig, SchemeVariant, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::runner::{resolve, Resolved, ResolvedScheme, RunError};

const IDENTITY_TOL: f64 = 1e-10;
const POINTWISE_TOL: f64 = 1e-12;
const IDENTIFICATION_TOL: f64 = 1e-8;
const MARGIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotGuaranteed,
}

impl CheckStatus {
    fn label(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotGuaranteed => "not guaranteed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    /// True when no hard identity check failed.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != CheckStatus::Fail)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28}{:<16}detail", "invariant", "status");
        let _ = writeln!(out, "{}", "-".repeat(72));
        for row in &self.rows {
            let _ = writeln!(out, "{:<28}{:<16}{}", row.name, row.status.label(), row.detail);
        }
        let verdict = if self.passed() { "all hard checks passed" } else { "HARD CHECK FAILED" };
        let _ = writeln!(out, "{}", "-".repeat(72));
        let _ = writeln!(out, "{verdict}");
        out
    }

    fn push(&mut self, name: &'static str, status: CheckStatus, detail: String) {
        self.rows.push(CheckRow { name, status, detail });
    }

    fn push_residual(&mut self, name: &'static str, residual: f64, tol: f64) {
        let status = if residual <= tol { CheckStatus::Pass } else { CheckStatus::Fail };
        self.push(name, status, format!("max residual = {residual:.3e} (tol {tol:.1e})"));
    }
}

fn random_states(grid: &TorusGrid, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c43_c21d);
    (0..count)
        .map(|_| (0..grid.len()).map(|_| 0.3 + 1.5 * rng.gen::<f64>()).collect())
        .collect()
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff.abs() / scale.abs().max(1.0)
}

/// Largest pointwise residual of the variant's defining difference identity.
fn chain_rule_residual_1d(
    states: &[Vec<f64>],
    scheme: &SchemeConfig,
    grid: &TorusGrid,
) -> Result<f64, RunError> {
    let h2 = grid.h() * grid.h();
    let mut worst = 0.0_f64;
    for u in states {
        let vars = entropy_variables(u, scheme.entropy)?;
        let v = &vars.v;
        if scheme.entropy.kind == EntropyKind::Shannon {
            // xi1^2 - xi2 equals the plain second difference of v over h^2.
            let xi = xi_alpha1(&vars, grid)?;
            for i in 0..grid.len() {
                let second = (v[grid.up(i, 0)] - 2.0 * v[i] + v[grid.down(i, 0)]) / h2;
                let lhs = xi.xi1sq[i] - xi.xi2[i];
                worst = worst.max(rel(lhs - second, lhs.max(second)));
            }
        } else if scheme.variant == SchemeVariant::Central {
            // v^2 (xi2 + xi1^2) telescopes to the second difference of v^2.
            let xi = xi_central(&vars, grid)?;
            for i in 0..grid.len() {
                let (vp, vi, vm) = (v[grid.up(i, 0)], v[i], v[grid.down(i, 0)]);
                let lhs = vi * vi * (xi.xi2[i] + xi.xi1sq[i]);
                let rhs = (vp * vp - 2.0 * vi * vi + vm * vm) / (2.0 * h2);
                worst = worst.max(rel(lhs - rhs, lhs.max(rhs)));
            }
        } else {
            // The noncentral xi2 multiplies back to the second difference.
            let xi = xi_noncentral(&vars, grid)?;
            for i in 0..grid.len() {
                let second = (v[grid.up(i, 0)] - 2.0 * v[i] + v[grid.down(i, 0)]) / h2;
                let lhs = v[i] * xi.xi2[i];
                worst = worst.max(rel(lhs - second, lhs.max(second)));
            }
        }
    }
    Ok(worst)
}

/// Largest pointwise residual of the discrete product rule
/// div+(v grad- v) = v lap(v) + |grad+ v|^2 on the 2D torus.
fn product_rule_residual_2d(states: &[Vec<f64>], grid: &TorusGrid) -> f64 {
    let h = grid.h();
    let h2 = h * h;
    let mut worst = 0.0_f64;
    for u in states {
        let v: Vec<f64> = u.iter().map(|&x| -1.0 / x).collect();
        for i in 0..grid.len() {
            let mut lhs = 0.0;
            let mut lap = 0.0;
            let mut grad_sq = 0.0;
            for axis in 0..2 {
                let up = grid.up(i, axis);
                let dn = grid.down(i, axis);
                let flux_here = v[i] * (v[i] - v[dn]);
                let flux_up = v[up] * (v[up] - v[i]);
                lhs += (flux_up - flux_here) / h2;
                lap += (v[up] - 2.0 * v[i] + v[dn]) / h2;
                let d = (v[up] - v[i]) / h;
                grad_sq += d * d;
            }
            let rhs = v[i] * lap + grad_sq;
            worst = worst.max(rel(lhs - rhs, lhs.max(rhs)));
        }
    }
    worst
}

fn production_residual_1d(
    states: &[Vec<f64>],
    scheme: &SchemeConfig,
    grid: &TorusGrid,
) -> Result<f64, RunError> {
    let mut worst = 0.0_f64;
    for u in states {
        let closed = scheme1d::entropy_production_closed_form(u, scheme, grid)?;
        let direct = scheme1d::entropy_production_direct(u, scheme, grid)?;
        worst = worst.max(rel(closed - direct, closed));
    }
    Ok(worst)
}

fn production_residual_2d(
    states: &[Vec<f64>],
    scheme: &Scheme2DConfig,
    grid: &TorusGrid,
) -> Result<f64, RunError> {
    let mut worst = 0.0_f64;
    for u in states {
        let closed = scheme2d::entropy_production_2d(u, scheme, grid)?;
        let direct = scheme2d::entropy_production_direct_2d(u, scheme, grid)?;
        worst = worst.max(rel(closed - direct, closed));
    }
    Ok(worst)
}

fn conservation_residual(
    states: &[Vec<f64>],
    resolved: &Resolved,
) -> Result<f64, RunError> {
    let grid = &resolved.grid;
    let vol = grid.cell_volume();
    let mut worst = 0.0_f64;
    for u in states {
        let du = match &resolved.scheme {
            ResolvedScheme::OneD(s) => scheme1d::rhs(u, s, grid)?,
            ResolvedScheme::TwoD(s) => scheme2d::rhs_2d(u, s, grid)?,
        };
        let drift: f64 = du.iter().sum::<f64>() * vol;
        let scale: f64 = du.iter().map(|x| x.abs()).sum::<f64>() * vol;
        worst = worst.max(rel(drift, scale));
    }
    Ok(worst)
}

/// Run every suite for the configuration and collect the table.
pub fn run_check(config: &RunConfig) -> Result<CheckReport, RunError> {
    let resolved = resolve(config)?;
    let grid = &resolved.grid;
    let states = random_states(grid, 6);
    let mut report = CheckReport::default();

    match &resolved.scheme {
        ResolvedScheme::OneD(scheme) => {
            let residual =
                verify_flux_identification(scheme.entropy, scheme.model, scheme.lambdas);
            report.push_residual("flux identification", residual, IDENTIFICATION_TOL);
            let chain = chain_rule_residual_1d(&states, scheme, grid)?;
            report.push_residual("chain rule", chain, POINTWISE_TOL);
            let production = production_residual_1d(&states, scheme, grid)?;
            report.push_residual("production identity", production, IDENTITY_TOL);
        }
        ResolvedScheme::TwoD(scheme) => {
            let l = scheme.lambdas.as_array();
            let beta = scheme.beta;
            let residual = (2.0 * l[0] + l[1])
                .abs()
                .max((2.0 * l[2] + l[3]).abs())
                .max((l[0] - l[2] - 1.0).abs())
                .max((l[0] * beta - l[2] * (beta + 1.0)).abs());
            report.push_residual("flux identification", residual, IDENTIFICATION_TOL);
            let product = product_rule_residual_2d(&states, grid);
            report.push_residual("product rule", product, POINTWISE_TOL);
            let production = production_residual_2d(&states, scheme, grid)?;
            report.push_residual("production identity", production, IDENTITY_TOL);
        }
    }

    let margin = resolved.admissibility.margin;
    if margin >= -MARGIN_TOL {
        report.push(
            "polynomial nonnegativity",
            CheckStatus::Pass,
            format!("margin = {margin:.3e}"),
        );
    } else {
        report.push(
            "polynomial nonnegativity",
            CheckStatus::NotGuaranteed,
            format!("margin = {margin:.3e}; entropy decay is not certified"),
        );
    }

    let drift = conservation_residual(&states, &resolved)?;
    report.push_residual("mass conservation", drift, POINTWISE_TOL);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EquationSpec;

    #[test]
    fn quantum_diffusion_config_passes_all_checks() {
        let config = RunConfig::default_dlss(48);
        let report = run_check(&config).unwrap();
        assert!(report.passed(), "{}", report.render_table());
        assert!(report.rows.iter().all(|r| r.status == CheckStatus::Pass));
        assert_eq!(report.rows.len(), 5);
    }

    #[test]
    fn inadmissible_film_exponent_is_reported_not_failed() {
        let mut config = RunConfig::default_thin_film(4.0, 48);
        config.alpha = 0.0;
        let report = run_check(&config).unwrap();
        assert!(report.passed(), "{}", report.render_table());
        let row = report
            .rows
            .iter()
            .find(|r| r.name == "polynomial nonnegativity")
            .expect("nonnegativity row present");
        assert_eq!(row.status, CheckStatus::NotGuaranteed);
    }

    #[test]
    fn two_dimensional_beta_one_margin_is_minus_one() {
        let mut config = RunConfig::default_thin_film(1.0, 8);
        config.dims = vec![8, 8];
        config.h = 0.125;
        let report = run_check(&config).unwrap();
        assert!(report.passed(), "{}", report.render_table());
        let row = report
            .rows
            .iter()
            .find(|r| r.name == "polynomial nonnegativity")
            .unwrap();
        assert_eq!(row.status, CheckStatus::NotGuaranteed);
        assert!(row.detail.contains("-1.000e"), "detail: {}", row.detail);
    }

    #[test]
    fn two_dimensional_film_checks_pass() {
        let mut config = RunConfig::default_thin_film(2.0, 8);
        config.dims = vec![12, 8];
        config.h = 1.0 / 12.0;
        let report = run_check(&config).unwrap();
        assert!(report.passed(), "{}", report.render_table());
        assert!(report
            .rows
            .iter()
            .all(|r| r.status == CheckStatus::Pass || r.name == "polynomial nonnegativity"));
    }

    #[test]
    fn shannon_and_noncentral_variants_check_out() {
        let mut shannon = RunConfig::default_thin_film(2.0, 32);
        shannon.alpha = 1.0;
        let report = run_check(&shannon).unwrap();
        assert!(report.passed(), "{}", report.render_table());

        let mut noncentral = RunConfig::default_thin_film(2.0, 32);
        noncentral.alpha = 0.5;
        noncentral.variant = SchemeVariant::Noncentral;
        let report = run_check(&noncentral).unwrap();
        assert!(report.passed(), "{}", report.render_table());
    }

    #[test]
    fn general_flux_family_checks_out() {
        let mut config = RunConfig::default_dlss(40);
        config.equation = EquationSpec::Raw { a: -0.5, b: 0.25, beta: 1.25 };
        config.alpha = 0.75;
        let report = run_check(&config).unwrap();
        assert!(report.passed(), "{}", report.render_table());
    }

    #[test]
    fn table_rendering_lists_every_row() {
        let report = run_check(&RunConfig::default_dlss(16)).unwrap();
        let table = report.render_table();
        for row in &report.rows {
            assert!(table.contains(row.name));
        }
        assert!(table.contains("all hard checks passed"));
    }
}

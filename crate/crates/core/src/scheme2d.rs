//! Entropy-dissipating scheme for du/dt = -div(u^beta grad lap(u)) on the
//! 2D torus.
//!
//! The construction mirrors the 1D schemes with the entropy variable fixed to
//! v = -1/u (the logarithmic entropy): normalized quotients xi2 = lap_h(v)/v
//! and xi1^2 = |grad^+ v|^2 / v^2 feed two scalar fields
//!
//! ```text
//!     A = ubar^beta / v (l1 xi2 + l2 xi1^2),
//!     B = ubar^beta / v^2 (l3 xi2 + l4 xi1^2),
//! ```
//!
//! and the flux J = grad^- A - v grad^- B is closed by du/dt = -div^+ J.
//! Summation by parts and the discrete product rule
//! div^+(v grad^- v) = v lap_h(v) + |grad^+ v|^2 turn the entropy production
//! into -h^2 sum ubar^beta Q(xi1, xi2) exactly, with Q the quartic from
//! `poly_spec_2d`. The canonical coefficients `lambda_2d(beta)` make the flux
//! consistent with u^beta grad lap(u); their quartic has nonnegativity margin
//! -(beta - 2)^2, so dissipation of the logarithmic entropy is guaranteed
//! only at beta = 2 and `dissipation_guaranteed` reports exactly that.

use crate::coeffs::{lambda_2d, nonneg_margin, poly_spec_2d, LambdaSet, PolySpec};
use crate::grid::TorusGrid;
use crate::scheme1d::{AverageRule, SchemeError, XiPair};

/// Residual bound accepted when validating a lambda set against beta.
const LAMBDA_CONSISTENCY_TOL: f64 = 1e-8;

/// A fully specified 2D scheme.
#[derive(Debug, Clone)]
pub struct Scheme2DConfig {
    pub beta: f64,
    pub lambdas: LambdaSet,
    pub average: AverageRule,
}

impl Scheme2DConfig {
    /// Scheme with the canonical coefficients for the given exponent.
    pub fn new(beta: f64, average: AverageRule) -> Result<Self, SchemeError> {
        if !beta.is_finite() {
            return Err(SchemeError::InconsistentLambdas { residual: f64::NAN });
        }
        Ok(Scheme2DConfig { beta, lambdas: lambda_2d(beta), average })
    }

    /// Scheme with an explicit lambda set, validated for flux consistency:
    /// the gradient-squared contributions of A and B must cancel
    /// (2 l1 + l2 = 0, 2 l3 + l4 = 0) and the remainder must reproduce
    /// u^beta grad lap(u) (l1 - l3 = 1, l1 beta = l3 (beta + 1)).
    pub fn with_lambdas(
        beta: f64,
        lambdas: LambdaSet,
        average: AverageRule,
    ) -> Result<Self, SchemeError> {
        let LambdaSet { lambda1, lambda2, lambda3, lambda4 } = lambdas;
        let residual = (2.0 * lambda1 + lambda2)
            .abs()
            .max((2.0 * lambda3 + lambda4).abs())
            .max((lambda1 - lambda3 - 1.0).abs())
            .max((lambda1 * beta - lambda3 * (beta + 1.0)).abs());
        if !(residual <= LAMBDA_CONSISTENCY_TOL) {
            return Err(SchemeError::InconsistentLambdas { residual });
        }
        Ok(Scheme2DConfig { beta, lambdas, average })
    }

    /// Dissipation quartic in coefficient normal form.
    pub fn poly(&self) -> PolySpec {
        poly_spec_2d(self.lambdas)
    }

    /// Whether the quartic is pointwise nonnegative, which makes the
    /// logarithmic entropy a certified Lyapunov functional.
    pub fn dissipation_guaranteed(&self) -> bool {
        nonneg_margin(self.poly()) >= -1e-12
    }
}

fn check_positive(u: &[f64]) -> Result<(), SchemeError> {
    for (i, &x) in u.iter().enumerate() {
        if !(x > 0.0 && x.is_finite()) {
            return Err(SchemeError::NonpositiveState { index: i, value: x });
        }
    }
    Ok(())
}

fn expect_2d(grid: &TorusGrid) -> Result<(), SchemeError> {
    if grid.ndim() != 2 {
        return Err(SchemeError::WrongDimension { expected: 2, got: grid.ndim() });
    }
    Ok(())
}

/// Stencil average of u per `rule`: identity, or the (2d+1)-point arithmetic
/// or geometric mean over the node and its axis neighbors.
pub fn average_u_2d(u: &[f64], rule: AverageRule, grid: &TorusGrid) -> Vec<f64> {
    match rule {
        AverageRule::Identity => u.to_vec(),
        AverageRule::ArithmeticNbr => (0..u.len())
            .map(|i| {
                (u[i] + u[grid.up(i, 0)] + u[grid.down(i, 0)] + u[grid.up(i, 1)]
                    + u[grid.down(i, 1)])
                    / 5.0
            })
            .collect(),
        AverageRule::Geometric => (0..u.len())
            .map(|i| {
                (u[i] * u[grid.up(i, 0)] * u[grid.down(i, 0)] * u[grid.up(i, 1)]
                    * u[grid.down(i, 1)])
                    .powf(0.2)
            })
            .collect(),
    }
}

/// Normalized quotients of v = -1/u: xi2 = lap_h(v)/v and
/// xi1^2 = |grad^+ v|^2 / v^2.
pub fn xi_2d(v: &[f64], grid: &TorusGrid) -> Result<XiPair, SchemeError> {
    expect_2d(grid)?;
    let h2 = grid.h() * grid.h();
    let n = v.len();
    let mut xi1sq = vec![0.0; n];
    let mut xi2 = vec![0.0; n];
    for i in 0..n {
        let vi = v[i];
        let lap = (v[grid.up(i, 0)] - 2.0 * vi + v[grid.down(i, 0)]) / h2
            + (v[grid.up(i, 1)] - 2.0 * vi + v[grid.down(i, 1)]) / h2;
        let dx = v[grid.up(i, 0)] - vi;
        let dy = v[grid.up(i, 1)] - vi;
        xi2[i] = lap / vi;
        xi1sq[i] = (dx * dx + dy * dy) / (vi * vi * h2);
    }
    Ok(XiPair { xi1sq, xi2 })
}

/// A and B fields from the averaged state, entropy variable, and xi pair.
pub fn assemble_ab_2d(
    ubar: &[f64],
    v: &[f64],
    xi: &XiPair,
    config: &Scheme2DConfig,
) -> (Vec<f64>, Vec<f64>) {
    let LambdaSet { lambda1, lambda2, lambda3, lambda4 } = config.lambdas;
    let n = ubar.len();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        let pref = ubar[i].powf(config.beta) / v[i];
        a[i] = pref * (lambda1 * xi.xi2[i] + lambda2 * xi.xi1sq[i]);
        b[i] = pref / v[i] * (lambda3 * xi.xi2[i] + lambda4 * xi.xi1sq[i]);
    }
    (a, b)
}

fn fields(
    u: &[f64],
    config: &Scheme2DConfig,
    grid: &TorusGrid,
) -> Result<(Vec<f64>, Vec<f64>, XiPair), SchemeError> {
    expect_2d(grid)?;
    check_positive(u)?;
    let v: Vec<f64> = u.iter().map(|&x| -1.0 / x).collect();
    let xi = xi_2d(&v, grid)?;
    let ubar = average_u_2d(u, config.average, grid);
    Ok((v, ubar, xi))
}

/// Semi-discrete right-hand side du/dt = -div^+(grad^- A - v grad^- B).
/// Conserves the discrete mass exactly.
pub fn rhs_2d(
    u: &[f64],
    config: &Scheme2DConfig,
    grid: &TorusGrid,
) -> Result<Vec<f64>, SchemeError> {
    let (v, ubar, xi) = fields(u, config, grid)?;
    let (a, b) = assemble_ab_2d(&ubar, &v, &xi, config);
    let h = grid.h();
    let n = u.len();
    // backward-difference flux components, stored at the node they subtract from
    let mut jx = vec![0.0; n];
    let mut jy = vec![0.0; n];
    for i in 0..n {
        let dx = grid.down(i, 0);
        let dy = grid.down(i, 1);
        jx[i] = (a[i] - a[dx]) / h - v[i] * (b[i] - b[dx]) / h;
        jy[i] = (a[i] - a[dy]) / h - v[i] * (b[i] - b[dy]) / h;
    }
    let mut du = vec![0.0; n];
    for i in 0..n {
        du[i] = -((jx[grid.up(i, 0)] - jx[i]) / h + (jy[grid.up(i, 1)] - jy[i]) / h);
    }
    Ok(du)
}

/// Entropy production of the logarithmic entropy in summation-by-parts
/// closed form: -h^2 sum ubar^beta Q(xi1, xi2).
pub fn entropy_production_2d(
    u: &[f64],
    config: &Scheme2DConfig,
    grid: &TorusGrid,
) -> Result<f64, SchemeError> {
    let (_, ubar, xi) = fields(u, config, grid)?;
    let poly = config.poly();
    let mut total = 0.0;
    for i in 0..u.len() {
        total += ubar[i].powf(config.beta) * poly.eval(xi.xi1sq[i], xi.xi2[i]);
    }
    Ok(-grid.cell_volume() * total)
}

/// Entropy production evaluated directly as h^2 sum v_i du_i/dt with
/// v = -1/u. Agrees with the closed form to rounding.
pub fn entropy_production_direct_2d(
    u: &[f64],
    config: &Scheme2DConfig,
    grid: &TorusGrid,
) -> Result<f64, SchemeError> {
    let du = rhs_2d(u, config, grid)?;
    let total: f64 = u.iter().zip(du.iter()).map(|(&x, d)| -d / x).sum();
    Ok(grid.cell_volume() * total)
}

/// Quadrature h^2 sum ubar^beta (xi2^2 + xi1^4).
pub fn dissipation_functional_2d(
    u: &[f64],
    config: &Scheme2DConfig,
    grid: &TorusGrid,
) -> Result<f64, SchemeError> {
    let (_, ubar, xi) = fields(u, config, grid)?;
    let mut total = 0.0;
    for i in 0..u.len() {
        total += ubar[i].powf(config.beta)
            * (xi.xi2[i] * xi.xi2[i] + xi.xi1sq[i] * xi.xi1sq[i]);
    }
    Ok(grid.cell_volume() * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_state(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(0.4..2.5)).collect()
    }

    #[test]
    fn canonical_lambdas_validate() {
        for beta in [0.5, 1.0, 2.0, 3.0] {
            let config = Scheme2DConfig::new(beta, AverageRule::Identity).unwrap();
            assert!(Scheme2DConfig::with_lambdas(beta, config.lambdas, AverageRule::Identity)
                .is_ok());
        }
        let bad = LambdaSet { lambda1: 3.0, lambda2: -6.0, lambda3: 2.0, lambda4: -3.9 };
        assert!(matches!(
            Scheme2DConfig::with_lambdas(2.0, bad, AverageRule::Identity),
            Err(SchemeError::InconsistentLambdas { .. })
        ));
    }

    #[test]
    fn dissipation_guarantee_only_at_beta_two() {
        assert!(Scheme2DConfig::new(2.0, AverageRule::Identity).unwrap().dissipation_guaranteed());
        for beta in [0.5, 1.0, 1.9, 2.1, 3.0] {
            let config = Scheme2DConfig::new(beta, AverageRule::Identity).unwrap();
            assert!(!config.dissipation_guaranteed(), "beta = {beta}");
        }
    }

    #[test]
    fn production_identity_2d() {
        let grid = TorusGrid::new(&[8, 6], 0.125).unwrap();
        for beta in [1.0, 2.0, 3.0] {
            for rule in [AverageRule::Identity, AverageRule::ArithmeticNbr, AverageRule::Geometric]
            {
                let config = Scheme2DConfig::new(beta, rule).unwrap();
                for s in 0..6 {
                    let u = random_state(48, 40 + s);
                    let direct = entropy_production_direct_2d(&u, &config, &grid).unwrap();
                    let closed = entropy_production_2d(&u, &config, &grid).unwrap();
                    let scale = direct.abs().max(closed.abs()).max(1e-12);
                    assert!(
                        (direct - closed).abs() < 1e-10 * scale,
                        "beta {beta}: direct {direct} closed {closed}"
                    );
                }
            }
        }
    }

    #[test]
    fn production_nonpositive_at_beta_two() {
        let grid = TorusGrid::new(&[10, 10], 0.1).unwrap();
        let config = Scheme2DConfig::new(2.0, AverageRule::Identity).unwrap();
        for s in 0..20 {
            let u = random_state(100, 700 + s);
            let p = entropy_production_2d(&u, &config, &grid).unwrap();
            assert!(p <= 1e-12, "positive production {p}");
        }
    }

    #[test]
    fn rhs_conserves_mass_2d() {
        let grid = TorusGrid::new(&[12, 7], 0.05).unwrap();
        let config = Scheme2DConfig::new(2.0, AverageRule::Identity).unwrap();
        let u = random_state(84, 3);
        let du = rhs_2d(&u, &config, &grid).unwrap();
        let total: f64 = du.iter().sum();
        let scale: f64 = du.iter().map(|d| d.abs()).sum::<f64>().max(1.0);
        assert!(total.abs() < 1e-13 * scale);
    }

    #[test]
    fn rhs_commutes_with_transpose() {
        // identity averaging keeps the axis sums two-term, so the swap is
        // exact in floating point
        let n = 9;
        let grid = TorusGrid::new(&[n, n], 1.0 / n as f64).unwrap();
        let config = Scheme2DConfig::new(2.0, AverageRule::Identity).unwrap();
        let u = random_state(n * n, 8);
        let ut: Vec<f64> = (0..n * n).map(|i| u[(i % n) * n + i / n]).collect();
        let du = rhs_2d(&u, &config, &grid).unwrap();
        let dut = rhs_2d(&ut, &config, &grid).unwrap();
        for i in 0..n * n {
            assert_eq!(dut[i], du[(i % n) * n + i / n]);
        }
    }

    #[test]
    fn rhs_consistency_beta_two() {
        // u = 1 + eps phi with phi = sin(2 pi x) sin(2 pi y), so
        // lap(u) = -2 tau^2 eps phi and
        // -div(u^2 grad lap u) = 2 tau^2 eps (2 u eps |grad phi|^2 - 2 tau^2 u^2 phi)
        let tau = std::f64::consts::TAU;
        let eps = 0.25;
        let phi = |x: f64, y: f64| (tau * x).sin() * (tau * y).sin();
        let exact = |x: f64, y: f64| {
            let u = 1.0 + eps * phi(x, y);
            let px = tau * (tau * x).cos() * (tau * y).sin();
            let py = tau * (tau * x).sin() * (tau * y).cos();
            let grad_sq = px * px + py * py;
            2.0 * tau * tau
                * eps
                * (2.0 * u * eps * grad_sq - 2.0 * tau * tau * u * u * phi(x, y))
        };
        let config = Scheme2DConfig::new(2.0, AverageRule::Identity).unwrap();
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let grid = TorusGrid::new(&[n, n], 1.0 / n as f64).unwrap();
            let u: Vec<f64> = (0..n * n)
                .map(|i| 1.0 + eps * phi((i % n) as f64 / n as f64, (i / n) as f64 / n as f64))
                .collect();
            let du = rhs_2d(&u, &config, &grid).unwrap();
            let err = (0..n * n)
                .map(|i| {
                    (du[i] - exact((i % n) as f64 / n as f64, (i / n) as f64 / n as f64)).abs()
                })
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        // the one-sided gradient quotient makes the 2D scheme first-order
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order > 0.8, "order {order} from {errs:?}");
        assert!(errs[2] < errs[0]);
    }

    #[test]
    fn rejects_bad_input() {
        let grid2 = TorusGrid::new(&[6, 6], 0.1).unwrap();
        let grid1 = TorusGrid::unit_1d(8).unwrap();
        let config = Scheme2DConfig::new(2.0, AverageRule::Identity).unwrap();
        let mut u = random_state(36, 1);
        assert!(matches!(
            rhs_2d(&u, &config, &grid1),
            Err(SchemeError::WrongDimension { expected: 2, got: 1 })
        ));
        u[5] = -0.2;
        assert!(matches!(
            rhs_2d(&u, &config, &grid2),
            Err(SchemeError::NonpositiveState { index: 5, .. })
        ));
    }
}

//! Flux-splitting coefficients and admissibility conditions.
//!
//! The flux J = u^beta u_xxx + a u^(beta-1) u_xx u_x + b u^(beta-2) u_x^3 is
//! rewritten as J = A_x - v B_x, where v is the derivative of an entropy
//! density s_alpha and A, B are combinations of u-powers and the logarithmic
//! derivatives xi1 = v_x/v, xi2 = v_xx/v weighted by four coefficients
//! lambda1..lambda4. Matching the two forms of J fixes lambda1..lambda3 as
//! affine functions of the free parameter lambda4; entropy dissipation then
//! reduces to pointwise nonnegativity of a quartic in (xi1, xi2).
//!
//! This module computes the lambda sets, the admissibility indicator K, the
//! quartic's coefficient normal form, its nonnegativity margin and coercivity
//! constant, and the residual of the flux identification (used as a
//! correctness oracle throughout the test suite).

use thiserror::Error;

/// Errors from coefficient construction and validation.
#[derive(Debug, Error, PartialEq)]
pub enum CoeffsError {
    /// The identification system degenerates when beta - 2 alpha + 3 vanishes.
    #[error("singular identification denominator beta - 2*alpha + 3 = {denom:e}")]
    SingularDenominator { denom: f64 },
    /// Entropy exponent outside the supported range, or alpha = 1 passed to
    /// the general-alpha path.
    #[error("invalid entropy exponent alpha = {alpha}")]
    InvalidAlpha { alpha: f64 },
    /// Model parameter that must be nonnegative (currently only beta).
    #[error("parameter {name} = {value} must be nonnegative and finite")]
    NotNonnegative { name: &'static str, value: f64 },
}

/// Coefficients (a, b, beta) of the fourth-order flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
}

impl ModelParams {
    /// Validated constructor; beta must be nonnegative, everything finite.
    pub fn new(a: f64, b: f64, beta: f64) -> Result<Self, CoeffsError> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(CoeffsError::NotNonnegative { name: "beta", value: beta });
        }
        if !a.is_finite() {
            return Err(CoeffsError::NotNonnegative { name: "a", value: a });
        }
        if !b.is_finite() {
            return Err(CoeffsError::NotNonnegative { name: "b", value: b });
        }
        Ok(ModelParams { a, b, beta })
    }

    /// The quantum diffusion (DLSS) flux: a = -2, b = 1, beta = 0.
    pub fn dlss() -> Self {
        ModelParams { a: -2.0, b: 1.0, beta: 0.0 }
    }

    /// The thin-film flux u^beta u_xxx: a = b = 0.
    pub fn thin_film(beta: f64) -> Result<Self, CoeffsError> {
        ModelParams::new(0.0, 0.0, beta)
    }
}

/// Classification of the entropy density by its exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyKind {
    /// s(u) = u^alpha / (alpha (alpha - 1)), alpha not in {0, 1}.
    Renyi,
    /// s(u) = -log u (alpha = 0).
    Logarithmic,
    /// s(u) = u (log u - 1) (alpha = 1).
    Shannon,
}

/// An entropy exponent together with its derived classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropySpec {
    pub alpha: f64,
    pub kind: EntropyKind,
}

impl EntropySpec {
    /// Validated constructor; alpha must be finite and nonnegative.
    pub fn new(alpha: f64) -> Result<Self, CoeffsError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(CoeffsError::InvalidAlpha { alpha });
        }
        let kind = if alpha == 0.0 {
            EntropyKind::Logarithmic
        } else if alpha == 1.0 {
            EntropyKind::Shannon
        } else {
            EntropyKind::Renyi
        };
        Ok(EntropySpec { alpha, kind })
    }

    /// Entropy density s_alpha(u) for u > 0.
    pub fn density(&self, u: f64) -> f64 {
        match self.kind {
            EntropyKind::Renyi => u.powf(self.alpha) / (self.alpha * (self.alpha - 1.0)),
            EntropyKind::Logarithmic => -u.ln(),
            EntropyKind::Shannon => u * (u.ln() - 1.0),
        }
    }

    /// Entropy variable s_alpha'(u); this is what the schemes difference.
    pub fn derivative(&self, u: f64) -> f64 {
        match self.kind {
            EntropyKind::Shannon => u.ln(),
            // covers alpha = 0 as u^(-1)/(-1) = -1/u
            _ => u.powf(self.alpha - 1.0) / (self.alpha - 1.0),
        }
    }
}

/// The four flux-splitting coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSet {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl LambdaSet {
    pub fn as_array(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }
}

/// Which quartic-in-(xi1, xi2) the coefficients parameterize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyVariant {
    /// Entropy-variable form for alpha != 1 (covers the logarithmic case).
    General,
    /// Shannon-entropy form (alpha = 1), built on w = -1/u.
    Shannon,
    /// Two-dimensional logarithmic-entropy form.
    TwoDim,
}

/// Normal form c22 xi2^2 + c21 xi2 xi1^2 + c11 xi1^4 of the dissipation quartic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolySpec {
    pub variant: PolyVariant,
    pub c22: f64,
    pub c21: f64,
    pub c11: f64,
}

impl PolySpec {
    /// Evaluate the quartic at (xi1^2, xi2).
    pub fn eval(&self, xi1sq: f64, xi2: f64) -> f64 {
        self.c22 * xi2 * xi2 + self.c21 * xi2 * xi1sq + self.c11 * xi1sq * xi1sq
    }
}

/// Solve the flux identification for lambda1..lambda3 given lambda4, for
/// alpha != 1. Fails when alpha = 1 or the denominator beta - 2 alpha + 3
/// degenerates.
pub fn lambda_general(
    entropy: EntropySpec,
    model: ModelParams,
    lambda4: f64,
) -> Result<LambdaSet, CoeffsError> {
    let al = entropy.alpha;
    if al == 1.0 {
        return Err(CoeffsError::InvalidAlpha { alpha: al });
    }
    let (a, b, be) = (model.a, model.b, model.beta);
    let den = be - 2.0 * al + 3.0;
    if den.abs() < 1e-12 {
        return Err(CoeffsError::SingularDenominator { denom: den });
    }
    let am1 = al - 1.0;
    let lambda1 = (-2.0 * al * al + (be + 5.0) * al + a * be - be * be - a - 2.0 * b - 3.0)
        / (am1 * den)
        + 2.0 * am1 * lambda4 / den;
    let lambda2 = (2.0 * al * al - (a + 7.0) * al + 2.0 * a + b + 6.0) / (am1 * den)
        + (be - 3.0 * al + 4.0) * lambda4 / den;
    let lambda3 = ((a + 1.0) * be - be * be - a - 2.0 * b) / (am1 * den)
        + 2.0 * am1 * lambda4 / den;
    Ok(LambdaSet { lambda1, lambda2, lambda3, lambda4 })
}

/// Coefficients for the Shannon case alpha = 1. The w = -1/u reformulation
/// identifies through the same linear system as alpha = 0, so these are the
/// alpha = 0 closed forms evaluated at the given model.
pub fn lambda_alpha1(model: ModelParams, lambda4: f64) -> LambdaSet {
    let (a, b, be) = (model.a, model.b, model.beta);
    let den = be + 3.0; // beta >= 0, never singular
    let lambda1 = (be * be - a * be + a + 2.0 * b + 3.0) / den - 2.0 * lambda4 / den;
    let lambda2 = -(2.0 * a + b + 6.0) / den + (be + 4.0) * lambda4 / den;
    let lambda3 = (be * be - a * be - be + a + 2.0 * b) / den - 2.0 * lambda4 / den;
    LambdaSet { lambda1, lambda2, lambda3, lambda4 }
}

/// The lambda4 maximizing the nonnegativity margin of the dissipation quartic.
pub fn lambda4_optimal(entropy: EntropySpec, model: ModelParams) -> f64 {
    let al = entropy.alpha;
    let (a, b, be) = (model.a, model.b, model.beta);
    if al == 1.0 {
        (be * be - (3.0 * a + 14.0) * be + 9.0 * (a + b) + 3.0) / 9.0
    } else {
        (-2.0 * al * al + (-3.0 * a + 8.0 * be + 3.0) * al - 3.0 * a * be + be * be
            + 9.0 * (a + b)
            - 15.0 * be)
            / (9.0 * (al - 1.0) * (al - 1.0))
    }
}

/// Admissibility indicator. The dissipation quartic at the optimal lambda4 is
/// nonnegative on all of R^2 exactly when K(alpha, beta) >= 0.
pub fn admissibility_k(alpha: f64, model: ModelParams) -> f64 {
    let (a, b, be) = (model.a, model.b, model.beta);
    -2.0 * alpha * alpha + (3.0 * a - 4.0 * be + 9.0) * alpha - 2.0 * be * be
        + (3.0 * a + 9.0) * be
        - 9.0 * (a + b + 1.0)
}

/// Coefficient normal form of the dissipation quartic for a 1D lambda set.
pub fn poly_spec(entropy: EntropySpec, lambdas: LambdaSet) -> PolySpec {
    let LambdaSet { lambda1, lambda2, lambda3, lambda4 } = lambdas;
    if entropy.kind == EntropyKind::Shannon {
        PolySpec {
            variant: PolyVariant::Shannon,
            c22: lambda1 - lambda3,
            c21: -lambda1 + lambda2 - lambda4,
            c11: -lambda2,
        }
    } else {
        PolySpec {
            variant: PolyVariant::General,
            c22: lambda1 - lambda3,
            c21: lambda2 - lambda3 - lambda4,
            c11: -lambda4,
        }
    }
}

/// Coefficient normal form for the 2D scheme's lambda set.
pub fn poly_spec_2d(lambdas: LambdaSet) -> PolySpec {
    let LambdaSet { lambda1, lambda2, lambda3, lambda4 } = lambdas;
    PolySpec {
        variant: PolyVariant::TwoDim,
        c22: lambda1 - lambda3,
        c21: lambda2 - lambda3 - lambda4,
        c11: -lambda4,
    }
}

/// Nonnegativity margin 4 c22 c11 - c21^2 of the quartic. For
/// identification-consistent sets c22 = 1 and this is 4 c11 - c21^2; the
/// quartic is nonnegative on R^2 iff the margin and c11 are both nonnegative.
pub fn nonneg_margin(spec: PolySpec) -> f64 {
    4.0 * spec.c22 * spec.c11 - spec.c21 * spec.c21
}

/// Largest c >= 0 with quartic >= c (xi2^2 + xi1^4) everywhere: the smaller
/// root of 4 (c22 - c)(c11 - c) = c21^2, clipped to [0, min(c22, c11)].
pub fn coercivity_constant(spec: PolySpec) -> f64 {
    let (c22, c21, c11) = (spec.c22, spec.c21, spec.c11);
    let disc = (c22 - c11) * (c22 - c11) + c21 * c21;
    let root = 0.5 * (c22 + c11 - disc.sqrt());
    root.clamp(0.0, c22.min(c11).max(0.0))
}

/// Max-norm residual of the three identification equations relating
/// (lambda1..lambda4) to (a, b) for the given alpha. Zero (to rounding) iff
/// the split flux A_x - v B_x reproduces the model flux. The Shannon case
/// alpha = 1 identifies through the alpha = 0 system.
pub fn verify_flux_identification(
    entropy: EntropySpec,
    model: ModelParams,
    lambdas: LambdaSet,
) -> f64 {
    let al = if entropy.kind == EntropyKind::Shannon { 0.0 } else { entropy.alpha };
    let (a, b, be) = (model.a, model.b, model.beta);
    let LambdaSet { lambda1: l1, lambda2: l2, lambda3: l3, lambda4: l4 } = lambdas;
    let e1 = l1 - l3 - 1.0;
    let e2 = (2.0 * l1 + 2.0 * l2 - l3 - 2.0 * l4) * al + (l1 - l3) * be - 4.0 * l1 - 2.0 * l2
        + 3.0 * l3
        + 2.0 * l4
        - a;
    let e3 = (l3 + l4) * al * al + (l1 + l2 - l3 - l4) * al * be
        - (l1 + l2 + 2.0 * l3 + l4) * al
        + (-2.0 * l1 - l2 + 2.0 * l3 + l4) * be
        + 2.0 * l1
        + l2
        - b;
    e1.abs().max(e2.abs()).max(e3.abs())
}

/// The fixed lambda set of the 2D logarithmic-entropy scheme for u^beta.
pub fn lambda_2d(beta: f64) -> LambdaSet {
    LambdaSet {
        lambda1: beta + 1.0,
        lambda2: -2.0 * (beta + 1.0),
        lambda3: beta,
        lambda4: -2.0 * beta,
    }
}

/// Coercivity constant of the u-variable quartic
/// xi2^2 + 2 (alpha - 2) xi2 xi1^2 + (2 alpha^2 - 6 alpha + 5) xi1^4
/// that appears when translating entropy-variable dissipation back to
/// derivatives of u. Diagnostic only; no scheme consumes it.
pub fn u_variable_coercivity(alpha: f64) -> f64 {
    coercivity_constant(PolySpec {
        variant: PolyVariant::General,
        c22: 1.0,
        c21: 2.0 * (alpha - 2.0),
        c11: 2.0 * alpha * alpha - 6.0 * alpha + 5.0,
    })
}

/// Constant in the continuous dissipation estimate: product of the
/// entropy-variable coercivity at the optimal lambda4 and the u-variable
/// factor. Diagnostic only.
pub fn dissipation_constant(entropy: EntropySpec, model: ModelParams) -> Result<f64, CoeffsError> {
    let l4 = lambda4_optimal(entropy, model);
    let lambdas = if entropy.kind == EntropyKind::Shannon {
        lambda_alpha1(model, l4)
    } else {
        lambda_general(entropy, model, l4)?
    };
    let c0 = coercivity_constant(poly_spec(entropy, lambdas));
    Ok(c0 * u_variable_coercivity(entropy.alpha))
}

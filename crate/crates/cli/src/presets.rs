//! Initial data presets sampled at the grid nodes x_i = i h.
//!
//! On 2D grids the analytic presets vary along the last axis and are constant
//! along the first, so the same formulas seed both 1D and 2D runs. Image
//! initial data is resolved by the runner, not here.

use entrodiff::TorusGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::InitialSpec;

#[derive(Debug, Error, PartialEq)]
pub enum PresetError {
    #[error("constant initial datum must be strictly positive, got {value}")]
    NonpositiveConstant { value: f64 },
    #[error("image initial data must be loaded through the runner")]
    ImageNotInline,
}

/// Positivity floor of the `cos16` datum.
pub const COS16_FLOOR: f64 = 1e-10;
/// Lower plateau of the `step` datum (the upper plateau is 2 minus this).
pub const STEP_MIN: f64 = 1e-6;
/// Amplitude defect of the `sine-full` datum, keeping it strictly positive.
pub const SINE_FULL_GAP: f64 = 1e-16;

fn sample_profile(grid: &TorusGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let axis = grid.ndim() - 1;
    let h = grid.h();
    (0..grid.len()).map(|i| f(grid.coord(i, axis) as f64 * h)).collect()
}

/// Evaluate a preset on the grid; all values are strictly positive.
pub fn preset_initial_data(spec: &InitialSpec, grid: &TorusGrid) -> Result<Vec<f64>, PresetError> {
    let pi = std::f64::consts::PI;
    match spec {
        InitialSpec::Cos16 => {
            Ok(sample_profile(grid, |x| (pi * x).cos().powi(16).max(COS16_FLOOR)))
        }
        InitialSpec::Step => Ok(sample_profile(grid, |x| {
            if x < 0.5 {
                2.0 - STEP_MIN
            } else {
                STEP_MIN
            }
        })),
        InitialSpec::Sine => Ok(sample_profile(grid, |x| 1.0 + 0.5 * (2.0 * pi * x).sin())),
        InitialSpec::SineFull => {
            Ok(sample_profile(grid, |x| 1.0 + (1.0 - SINE_FULL_GAP) * (2.0 * pi * x).sin()))
        }
        InitialSpec::Constant { value } => {
            if !(*value > 0.0 && value.is_finite()) {
                return Err(PresetError::NonpositiveConstant { value: *value });
            }
            Ok(vec![*value; grid.len()])
        }
        InitialSpec::RandomPositive { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..grid.len()).map(|_| 0.2 + 1.6 * rng.gen::<f64>()).collect())
        }
        InitialSpec::Image { .. } => Err(PresetError::ImageNotInline),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use entrodiff::diagnostics::mass;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::unit_1d(n).unwrap()
    }

    #[test]
    fn cos16_hits_the_floor_at_one_half() {
        let g = grid(100);
        let u = preset_initial_data(&InitialSpec::Cos16, &g).unwrap();
        assert_eq!(u[50], COS16_FLOOR);
        assert_eq!(u[0], 1.0);
        assert!(u.iter().all(|&x| x >= COS16_FLOOR));
    }

    #[test]
    fn sine_has_unit_mass() {
        let g = grid(128);
        let u = preset_initial_data(&InitialSpec::Sine, &g).unwrap();
        assert!((mass(&u, &g) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn step_plateaus_and_mass() {
        let g = grid(100);
        let u = preset_initial_data(&InitialSpec::Step, &g).unwrap();
        let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min, STEP_MIN);
        assert_eq!(max, 2.0 - STEP_MIN);
        assert!((mass(&u, &g) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn sine_full_stays_strictly_positive() {
        let g = grid(64);
        let u = preset_initial_data(&InitialSpec::SineFull, &g).unwrap();
        let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "minimum {min} must stay positive");
        assert!(min < 1e-14, "the datum is expected to graze zero");
    }

    #[test]
    fn constant_rejects_nonpositive_values() {
        let g = grid(8);
        let err = preset_initial_data(&InitialSpec::Constant { value: 0.0 }, &g).unwrap_err();
        assert_eq!(err, PresetError::NonpositiveConstant { value: 0.0 });
        let u = preset_initial_data(&InitialSpec::Constant { value: 0.5 }, &g).unwrap();
        assert!(u.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn random_positive_is_reproducible_and_positive() {
        let g = grid(64);
        let spec = InitialSpec::RandomPositive { seed: 7 };
        let u1 = preset_initial_data(&spec, &g).unwrap();
        let u2 = preset_initial_data(&spec, &g).unwrap();
        assert_eq!(u1, u2);
        assert!(u1.iter().all(|&x| (0.2..1.8).contains(&x)));
        let other = preset_initial_data(&InitialSpec::RandomPositive { seed: 8 }, &g).unwrap();
        assert_ne!(u1, other);
    }

    #[test]
    fn two_dimensional_sampling_varies_along_the_last_axis() {
        let g = TorusGrid::new(&[4, 8], 0.125).unwrap();
        let u = preset_initial_data(&InitialSpec::Sine, &g).unwrap();
        for i in 0..g.len() {
            let x = g.coord(i, 1) as f64 * g.h();
            let expected = 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin();
            assert!((u[i] - expected).abs() < 1e-15);
        }
        // constant along axis 0
        for i in 0..g.len() {
            assert_eq!(u[i], u[g.up(i, 0)]);
        }
    }
}

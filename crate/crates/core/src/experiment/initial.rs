//! Initial data presets.

use std::f64::consts::PI;

use super::config::{InitialPreset, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{gradient_c, GridSpec, ScalarField};
use crate::noise::{GaussianSource, INITIAL_DATA_STREAM};

/// Rescales `u` so that the central-difference `‖∇u‖_∞` equals `l` (no-op on constants).
pub fn rescale_lipschitz(u: &ScalarField<f64>, l: f64) -> ScalarField<f64> {
    let sup = gradient_c(u).sup_norm();
    if sup == 0.0 {
        return u.clone();
    }
    let s = l / sup;
    u.map(|x| s * x)
}

/// `A·Π sin(2πx_i)`.
pub fn sine(grid: GridSpec, amplitude: f64) -> ScalarField<f64> {
    ScalarField::from_fn(grid, |x: &[f64]| amplitude * x.iter().map(|&xi| (2.0 * PI * xi).sin()).product::<f64>())
}

/// Random trigonometric polynomial with wavenumbers up to `modes` per axis and
/// coefficients `N(0,1)/|k|²`, rescaled to `‖∇u‖_∞ = l`.
pub fn random_fourier(grid: GridSpec, modes: usize, l: f64, seed: u64) -> ScalarField<f64> {
    let n = grid.dim();
    let m = modes as i64;
    let side = (2 * m + 1) as usize;
    let mut src = GaussianSource::new(seed, INITIAL_DATA_STREAM);
    let mut waves: Vec<([f64; 3], f64, f64)> = Vec::new();
    for code in 0..side.pow(n as u32) {
        let mut k = [0.0; 3];
        let mut c = code;
        for ki in k.iter_mut().take(n) {
            *ki = (c % side) as f64 - m as f64;
            c /= side;
        }
        let k2: f64 = k.iter().map(|x| x * x).sum();
        if k2 == 0.0 {
            continue;
        }
        let (a, b) = (src.next_standard() / k2, src.next_standard() / k2);
        waves.push((k, a, b));
    }
    let u = ScalarField::from_fn(grid, |x| {
        waves
            .iter()
            .map(|(k, a, b)| {
                let phase = 2.0 * PI * (0..n).map(|i| k[i] * x[i]).sum::<f64>();
                a * phase.cos() + b * phase.sin()
            })
            .sum()
    });
    rescale_lipschitz(&u, l)
}

/// Initial field of path `seed` under the configured preset.
pub fn initial_field(cfg: &RunConfig, grid: GridSpec, seed: u64) -> Result<ScalarField<f64>> {
    match cfg.initial_preset {
        InitialPreset::Flat => Ok(ScalarField::constant(grid, cfg.initial_amplitude)),
        InitialPreset::Sine => {
            let u = sine(grid, cfg.initial_amplitude);
            Ok(match cfg.initial_lipschitz {
                Some(l) => rescale_lipschitz(&u, l),
                None => u,
            })
        }
        InitialPreset::RandomFourier => {
            let l = cfg
                .initial_lipschitz
                .ok_or_else(|| Error::Config("initial.preset = random_fourier requires initial.lipschitz_l".into()))?;
            if cfg.initial_modes == 0 {
                return Err(Error::Config("initial.modes must be at least 1".into()));
            }
            Ok(random_fourier(grid, cfg.initial_modes, l, seed))
        }
    }
}

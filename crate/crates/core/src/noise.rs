//! Seeded scalar Brownian increments on a uniform time mesh.
//!
//! Gaussians come from the Marsaglia polar method driven by a ChaCha8 stream
//! keyed by the seed. Both variates of each accepted pair are used, in order.
//! Stream 0 of a seed drives the Wiener path; other streams are free for
//! auxiliary randomness (random initial data) without disturbing the path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Stream id used for Wiener increments.
pub const WIENER_STREAM: u64 = 0;
/// Stream id used for random initial data.
pub const INITIAL_DATA_STREAM: u64 = 1;

/// Seed of path `index` in an ensemble: `base ^ index`, independent of execution order.
#[inline]
pub fn path_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ index
}

/// Standard normal variates (polar method) from a keyed ChaCha8 stream.
pub struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let a = 2.0 * self.rng.gen::<f64>() - 1.0;
            let b = 2.0 * self.rng.gen::<f64>() - 1.0;
            let s = a * a + b * b;
            if s > 0.0 && s < 1.0 {
                let k = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(b * k);
                return a * k;
            }
        }
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WienerPath<T> {
    dt: T,
    increments: Vec<T>,
    /// `W(t_k)` for `k = 0..=len`, `W(0) = 0`.
    cumulative: Vec<T>,
    seed: u64,
}

impl<T: Real> WienerPath<T> {
    /// Path with explicitly given increments (used by tests and replay).
    pub fn from_increments(dt: T, increments: Vec<T>, seed: u64) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if increments.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite Wiener increment".into()));
        }
        let mut cumulative = Vec::with_capacity(increments.len() + 1);
        let mut acc = T::zero();
        cumulative.push(acc);
        for &d in &increments {
            acc = acc + d;
            cumulative.push(acc);
        }
        Ok(Self { dt, increments, cumulative, seed })
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.dt
    }

    #[inline]
    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// Path values `W(t_k)` on the mesh, starting with `W(0) = 0`.
    #[inline]
    pub fn cumulative(&self) -> &[T] {
        &self.cumulative
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> T {
        self.dt * T::from_usize_lossy(self.len())
    }
}

/// Number of mesh steps covering `[0, horizon]`: `⌈horizon/dt⌉`, with ratios within
/// 1e-9 of an integer snapped to it.
pub fn step_count<T: Real>(horizon: T, dt: T) -> usize {
    let r = (horizon / dt).to_f64_lossy();
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        r.ceil() as usize
    }
}

/// `⌈T/dt⌉` independent `N(0, dt)` increments keyed by `seed`.
pub fn sample_path<T: Real>(horizon: T, dt: T, seed: u64) -> Result<WienerPath<T>> {
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(invalid("T", format!("must be positive, got {horizon}")));
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let steps = step_count(horizon, dt);
    if steps > (1usize << 34) {
        return Err(invalid("dt", format!("T/dt = {steps} steps exceeds the sequence limit")));
    }
    let sd = dt.to_f64_lossy().sqrt();
    let mut src = GaussianSource::new(seed, WIENER_STREAM);
    let increments = (0..steps).map(|_| T::lit(sd * src.next_standard())).collect();
    WienerPath::from_increments(dt, increments, seed)
}

/// The same Brownian path on a mesh `factor` times coarser.
///
/// Coarse path values are the fine path values at the shared mesh points, so
/// partial sums agree exactly there.
pub fn coarsen<T: Real>(path: &WienerPath<T>, factor: usize) -> Result<WienerPath<T>> {
    if factor == 0 || !path.len().is_multiple_of(factor) {
        return Err(Error::NotDivisible { factor, len: path.len() });
    }
    if factor == 1 {
        return Ok(path.clone());
    }
    let cumulative: Vec<T> = path.cumulative.iter().step_by(factor).copied().collect();
    let increments = cumulative.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(WienerPath { dt: path.dt * T::from_usize_lossy(factor), increments, cumulative, seed: path.seed })
}

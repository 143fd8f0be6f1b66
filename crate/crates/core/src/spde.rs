//! Drift and noise of the graph flow
//!
//! ```text
//! du = (ε Δ_f u + Q div_f v + ξ u) dt + λ Q ∘ dW,    Q = √(1+|∇u|²),  v = ∇u / Q
//! ```
//!
//! and its explicit time stepping. `Q div_f v` is evaluated through the identity
//! `Q div_f v = Δ_f u - v·D²u v`, so every drift reuses the mimetic Laplacian.
//! The Stratonovich-to-Itô correction of `λ Q ∘ dW` is `λ²/2 · v·∇Q`, which is
//! `λ²/2 · v·D²u v` in the continuum. On the grid it is taken as `v·∇_c Q(∇_c u)`,
//! the exact derivative of the discrete noise coefficient along itself, so the
//! Itô and Stratonovich schemes share one semi-discrete limit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{dot, gradient_c, hessian, laplacian_f, sym_matvec, ScalarField, SymMatrixField, VectorField};
use crate::noise::{step_count, WienerPath};
use crate::scalar::Real;
use crate::weight::WeightModel;

pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e6;
pub const DEFAULT_CFL_SAFETY: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama on the Itô form (drift includes the correction term).
    ExplicitEm,
    /// Stochastic Heun predictor–corrector on the Stratonovich form.
    HeunStratonovich,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ExplicitEm => "explicit_em",
            Scheme::HeunStratonovich => "heun_stratonovich",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit_em" => Ok(Scheme::ExplicitEm),
            "heun_stratonovich" => Ok(Scheme::HeunStratonovich),
            other => Err(invalid("params.scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdeParams<T> {
    pub epsilon: T,
    pub xi: T,
    pub lambda: T,
    pub dt: T,
    pub scheme: Scheme,
    /// Sup-norm cap beyond which a path is declared blown up.
    pub blowup_threshold: T,
}

impl<T: Real> SpdeParams<T> {
    pub fn new(epsilon: T, xi: T, lambda: T, dt: T, scheme: Scheme) -> Result<Self> {
        let p = Self { epsilon, xi, lambda, dt, scheme, blowup_threshold: T::lit(DEFAULT_BLOWUP_THRESHOLD) };
        p.validate()?;
        Ok(p)
    }

    pub fn with_blowup_threshold(mut self, threshold: T) -> Result<Self> {
        self.blowup_threshold = threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn with_dt(mut self, dt: T) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: T) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: T| {
            if v >= T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and non-negative, got {v}")))
            }
        };
        nonneg("params.epsilon", self.epsilon)?;
        nonneg("params.xi", self.xi)?;
        nonneg("params.lambda", self.lambda)?;
        if !(self.lambda * self.lambda < T::lit(2.0)) {
            return Err(invalid("params.lambda", format!("λ² must be < 2, got λ = {}", self.lambda)));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(invalid("params.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.blowup_threshold > T::zero()) {
            return Err(invalid("params.blowup_threshold", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    pub t: T,
    /// Number of steps taken to reach `t`.
    pub step: usize,
    pub u: ScalarField<T>,
}

impl<T: Real> State<T> {
    pub fn initial(u: ScalarField<T>) -> Self {
        Self { t: T::zero(), step: 0, u }
    }
}

/// `Q(p) = √(1+|p|²)` pointwise.
pub fn area_element<T: Real>(grad_u: &VectorField<T>) -> ScalarField<T> {
    let g = *grad_u.grid();
    let values = (0..g.len()).map(|j| (T::one() + grad_u.norm_sq_at(j)).sqrt()).collect();
    ScalarField::from_vec_unchecked(g, values)
}

/// `v(p) = p / √(1+|p|²)` pointwise.
pub fn tilt<T: Real>(grad_u: &VectorField<T>) -> VectorField<T> {
    let g = *grad_u.grid();
    let values = grad_u
        .values()
        .chunks(g.dim())
        .flat_map(|p| {
            let q = (T::one() + dot(p, p)).sqrt();
            p.iter().map(move |&x| x / q)
        })
        .collect();
    VectorField::new(g, values).expect("tilt of a finite gradient is finite")
}

/// Per-node `v·D²u v` from precomputed gradient and Hessian.
fn v_hess_v_at<T: Real>(grad: &VectorField<T>, hess: &SymMatrixField<T>, j: usize) -> T {
    let n = grad.grid().dim();
    let p = grad.at(j);
    let q2 = T::one() + dot(p, p);
    let hp = sym_matvec(n, hess.at(j), p);
    dot(&hp[..n], p) / q2
}

/// `½ v·∇_c Q`, the Itô–Stratonovich correction of `Q ∘ dW` (for λ = 1).
pub fn correction_term<T: Real>(u: &ScalarField<T>) -> ScalarField<T> {
    let grad = gradient_c(u);
    let dq = gradient_c(&area_element(&grad));
    let half = T::lit(0.5);
    let values = (0..u.grid().len()).map(|j| half * dot(grad.at(j), dq.at(j)) / (T::one() + grad.norm_sq_at(j)).sqrt()).collect();
    ScalarField::from_vec_unchecked(*u.grid(), values)
}

/// Stratonovich drift and correction term evaluated on shared stencils.
fn drift_parts<T: Real>(u: &ScalarField<T>, p: &SpdeParams<T>, w: &WeightModel<T>) -> (Vec<T>, Vec<T>) {
    let grad = gradient_c(u);
    let hess = hessian(u);
    let lap = laplacian_f(u, w);
    let corr = correction_term(u).into_values();
    let strat = (0..u.grid().len())
        .map(|j| {
            let l = lap.get(j);
            p.epsilon * l + (l - v_hess_v_at(&grad, &hess, j)) + p.xi * u.get(j)
        })
        .collect();
    (strat, corr)
}

/// `εΔ_f u + Q div_f v + ξu` with `Q div_f v = Δ_f u - v·D²u v`.
pub fn strat_drift<T: Real>(u: &ScalarField<T>, p: &SpdeParams<T>, w: &WeightModel<T>) -> ScalarField<T> {
    let (strat, _) = drift_parts(u, p, w);
    ScalarField::from_vec_unchecked(*u.grid(), strat)
}

/// Itô drift `strat_drift + λ² · correction_term`, i.e.
/// `(1+ε)Δ_f u - v·D²u v + (λ²/2) v·∇Q + ξu`.
pub fn ito_drift<T: Real>(u: &ScalarField<T>, p: &SpdeParams<T>, w: &WeightModel<T>) -> ScalarField<T> {
    let (strat, corr) = drift_parts(u, p, w);
    let lam2 = p.lambda * p.lambda;
    let values = strat.iter().zip(&corr).map(|(&s, &c)| s + lam2 * c).collect();
    ScalarField::from_vec_unchecked(*u.grid(), values)
}

/// `λ Q(∇u)` pointwise.
pub fn noise_coeff<T: Real>(u: &ScalarField<T>, p: &SpdeParams<T>) -> ScalarField<T> {
    area_element(&gradient_c(u)).map(|q| p.lambda * q)
}

/// Explicit-scheme stability heuristic
/// `dt = c_safe · h² / (2n(1+ε) + h·max|∇f| + h²ξ)`.
pub fn cfl_dt<T: Real>(epsilon: T, xi: T, w: &WeightModel<T>, c_safe: T) -> T {
    let g = w.grid();
    let h = g.spacing::<T>();
    let n = T::from_usize_lossy(g.dim());
    let denom = T::lit(2.0) * n * (T::one() + epsilon) + h * w.max_grad_norm() + h * h * xi;
    c_safe * h * h / denom
}

fn blowup_check<T: Real>(u: &ScalarField<T>, p: &SpdeParams<T>, t: T, step: usize) -> Result<()> {
    if !u.all_finite() {
        return Err(Error::BlowupDetected { t: t.to_f64_lossy(), step, reason: "non-finite value".into() });
    }
    let sup = u.max_abs();
    if sup > p.blowup_threshold {
        return Err(Error::BlowupDetected {
            t: t.to_f64_lossy(),
            step,
            reason: format!("sup norm {sup:e} exceeds {:e}", p.blowup_threshold),
        });
    }
    Ok(())
}

/// One time step of size `p.dt` driven by the Wiener increment `dw`.
pub fn step<T: Real>(state: &State<T>, dw: T, p: &SpdeParams<T>, w: &WeightModel<T>) -> Result<State<T>> {
    let dt = p.dt;
    let u = &state.u;
    let next = match p.scheme {
        Scheme::ExplicitEm => {
            let drift = ito_drift(u, p, w);
            let sigma = noise_coeff(u, p);
            let values = u
                .values()
                .iter()
                .zip(drift.values())
                .zip(sigma.values())
                .map(|((&x, &d), &s)| x + dt * d + dw * s)
                .collect();
            ScalarField::from_vec_unchecked(*u.grid(), values)
        }
        Scheme::HeunStratonovich => {
            let d0 = strat_drift(u, p, w);
            let s0 = noise_coeff(u, p);
            let predictor_values = u
                .values()
                .iter()
                .zip(d0.values())
                .zip(s0.values())
                .map(|((&x, &d), &s)| x + dt * d + dw * s)
                .collect();
            let predictor = ScalarField::from_vec_unchecked(*u.grid(), predictor_values);
            blowup_check(&predictor, p, state.t + dt, state.step + 1)?;
            let d1 = strat_drift(&predictor, p, w);
            let s1 = noise_coeff(&predictor, p);
            let half = T::lit(0.5);
            let values = (0..u.grid().len())
                .map(|j| u.get(j) + half * dt * (d0.get(j) + d1.get(j)) + half * dw * (s0.get(j) + s1.get(j)))
                .collect();
            ScalarField::from_vec_unchecked(*u.grid(), values)
        }
    };
    let step_index = state.step + 1;
    let t = T::from_usize_lossy(step_index) * dt;
    blowup_check(&next, p, t, step_index)?;
    Ok(State { t, step: step_index, u: next })
}

/// Callback invoked on recorded states of a path.
pub trait Observer<T> {
    fn observe(&mut self, state: &State<T>);
}

impl<T, F: FnMut(&State<T>)> Observer<T> for F {
    fn observe(&mut self, state: &State<T>) {
        self(state)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupInfo {
    pub t: f64,
    pub step: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    /// Last finite state (the state before blow-up when truncated).
    pub final_state: State<T>,
    pub sample_times: Vec<T>,
    pub blowup: Option<BlowupInfo>,
}

impl<T> Trajectory<T> {
    pub fn blew_up(&self) -> bool {
        self.blowup.is_some()
    }
}

/// Integrates from `u0` over `[0, horizon]` on the mesh of `path`, calling every
/// observer at step 0, every `stride` steps and at the final step.
///
/// Blow-up truncates the trajectory; the returned value carries the truncation time.
pub fn run_path<T: Real>(
    u0: &ScalarField<T>,
    horizon: T,
    path: &WienerPath<T>,
    p: &SpdeParams<T>,
    w: &WeightModel<T>,
    observers: &mut [&mut dyn Observer<T>],
    stride: usize,
) -> Result<Trajectory<T>> {
    p.validate()?;
    if u0.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    if !(horizon >= T::zero()) {
        return Err(invalid("T", format!("must be non-negative, got {horizon}")));
    }
    if (path.dt() - p.dt).abs() > T::lit(1e-12) * p.dt {
        return Err(invalid("params.dt", format!("path mesh dt {} differs from step dt {}", path.dt(), p.dt)));
    }
    let steps = if horizon == T::zero() { 0 } else { step_count(horizon, p.dt) };
    if path.len() < steps {
        return Err(invalid("path", format!("path has {} increments, horizon needs {steps}", path.len())));
    }
    let stride = stride.max(1);
    let mut state = State::initial(u0.clone());
    let mut sample_times = vec![state.t];
    for obs in observers.iter_mut() {
        obs.observe(&state);
    }
    let mut blowup = None;
    for k in 0..steps {
        match step(&state, path.increments()[k], p, w) {
            Ok(next) => state = next,
            Err(Error::BlowupDetected { t, step, reason }) => {
                blowup = Some(BlowupInfo { t, step, reason });
                break;
            }
            Err(e) => return Err(e),
        }
        if state.step.is_multiple_of(stride) || state.step == steps {
            sample_times.push(state.t);
            for obs in observers.iter_mut() {
                obs.observe(&state);
            }
        }
    }
    Ok(Trajectory { final_state: state, sample_times, blowup })
}

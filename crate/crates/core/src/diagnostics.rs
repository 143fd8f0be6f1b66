//! Energy functionals, dissipation bookkeeping and ensemble tests.
//!
//! Reports are stored in `f64` regardless of the solver scalar so ensembles of
//! different precision aggregate the same way.

use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{
    dirichlet_form, dot, gradient_c, hessian, integrate_mu_by, l2_mu_norm, laplacian_f, sym_matvec, ScalarField,
};
use crate::scalar::Real;
use crate::spde::{Observer, SpdeParams, State};
use crate::weight::WeightModel;

/// Minimum ensemble size accepted by the statistical tests.
pub const MIN_PATHS: usize = 30;
/// Default number of standard errors allowed by the statistical tests.
pub const DEFAULT_K: f64 = 2.0;
/// Default relative overshoot allowed by the gradient maximum principle.
pub const DEFAULT_MAX_SLACK: f64 = 0.05;
/// Constant `c` of the declared bias budget `c·(dt + h²)·E₀`.
pub const BIAS_CONSTANT: f64 = 10.0;

/// Bias budget `c·(dt + h²)·scale` for discrete-vs-continuum energy comparisons.
pub fn bias_budget(dt: f64, h: f64, scale: f64) -> f64 {
    BIAS_CONSTANT * (dt + h * h) * scale.abs()
}

/// Convex profile `h` used for the generalized energy `∫h(Q)dμ`.
#[derive(Clone, Copy, Debug)]
pub enum HSpec {
    /// `coef · x²`
    Dirichlet { coef: f64 },
    /// `coef · x`
    Area { coef: f64 },
    /// Quadratic-then-linear ramp starting at `m`, see [`h_m_eval`].
    HM { m: f64, coef: f64 },
    /// Arbitrary profile given by `h`, `h'`, `h''`.
    Custom { name: &'static str, h: fn(f64) -> f64, dh: fn(f64) -> f64, d2h: fn(f64) -> f64 },
}

/// `αε` when the flow is viscous, else `α` (the profile would vanish identically otherwise).
fn viscous_coef(scale: f64, epsilon: f64) -> f64 {
    if epsilon > 0.0 {
        scale * epsilon
    } else {
        scale
    }
}

impl HSpec {
    /// `h(x) = αε x²`.
    pub fn dirichlet(alpha: f64, epsilon: f64) -> Self {
        HSpec::Dirichlet { coef: viscous_coef(alpha, epsilon) }
    }

    /// `h(x) = ε x`.
    pub fn area(epsilon: f64) -> Self {
        HSpec::Area { coef: viscous_coef(1.0, epsilon) }
    }

    /// `h = h_M` with coefficient `αε`.
    pub fn h_m(m: f64, alpha: f64, epsilon: f64) -> Self {
        HSpec::HM { m, coef: viscous_coef(alpha, epsilon) }
    }

    /// Builds a profile from its config name (`dirichlet`, `area`, `h_m`).
    pub fn by_name(name: &str, m: f64, alpha: f64, epsilon: f64) -> Result<Self> {
        match name {
            "dirichlet" => Ok(Self::dirichlet(alpha, epsilon)),
            "area" => Ok(Self::area(epsilon)),
            "h_m" => Ok(Self::h_m(m, alpha, epsilon)),
            other => Err(Error::Config(format!("unknown energy profile `{other}` (dirichlet, area, h_m)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HSpec::Dirichlet { .. } => "dirichlet",
            HSpec::Area { .. } => "area",
            HSpec::HM { .. } => "h_m",
            HSpec::Custom { name, .. } => name,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            HSpec::Dirichlet { coef } => coef * x * x,
            HSpec::Area { coef } => coef * x,
            HSpec::HM { m, coef } => h_m_eval(x, m, coef),
            HSpec::Custom { h, .. } => h(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            HSpec::Dirichlet { coef } => 2.0 * coef * x,
            HSpec::Area { coef } => coef,
            HSpec::HM { m, coef } => {
                if x <= m {
                    0.0
                } else if x < m + 1.0 {
                    2.0 * coef * (x - m)
                } else {
                    2.0 * coef
                }
            }
            HSpec::Custom { dh, .. } => dh(x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            HSpec::Dirichlet { coef } => 2.0 * coef,
            HSpec::Area { .. } => 0.0,
            HSpec::HM { m, coef } => {
                if x > m && x < m + 1.0 {
                    2.0 * coef
                } else {
                    0.0
                }
            }
            HSpec::Custom { d2h, .. } => d2h(x),
        }
    }

    /// Points where `h''` jumps.
    pub fn knots(&self) -> Vec<f64> {
        match *self {
            HSpec::HM { m, .. } => vec![m, m + 1.0],
            _ => vec![],
        }
    }

    /// Checks `h ≥ 0`, `h' ≥ 0`, `h'' ≥ 0` on samples of `[1, 1 + 20]` and `h'(1) ≥ h(1)`.
    pub fn check_admissible(&self) -> Result<()> {
        let tol = 1e-12;
        let gap = self.derivative(1.0) - self.value(1.0);
        if gap < -tol {
            return Err(Error::InadmissibleH(format!("{}: h'(1) - h(1) = {gap:e} < 0", self.name())));
        }
        for k in 0..=400 {
            let x = 1.0 + 0.05 * k as f64;
            let (h, dh, d2h) = (self.value(x), self.derivative(x), self.second_derivative(x));
            if h < -tol || dh < -tol || d2h < -tol {
                return Err(Error::InadmissibleH(format!(
                    "{}: h = {h:e}, h' = {dh:e}, h'' = {d2h:e} at x = {x}",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

/// `h_M(x)`: `0` for `x ≤ M`, `c(x-M)²` on `(M, M+1)`, `c(2x-2M-1)` beyond; C¹ at both knots.
pub fn h_m_eval(x: f64, m: f64, coef: f64) -> f64 {
    if x <= m {
        0.0
    } else if x < m + 1.0 {
        coef * (x - m) * (x - m)
    } else {
        coef * (2.0 * x - 2.0 * m - 1.0)
    }
}

/// Energy functionals of one state. Column order of the CSV output follows field order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    /// Face-weighted forward-difference energy `∫|∇u|² dμ`.
    pub dirichlet: f64,
    pub area: f64,
    pub h_energy: f64,
    /// `∫ Q²|div_f v|² dμ`, evaluated as `∫(Δ_f u - v·D²u v)² dμ`.
    pub divf_term: f64,
    pub hess_l2: f64,
    pub pinch_quad: f64,
    pub mixed_term: f64,
    pub grad_sup: f64,
    /// `∫|D²u v|² dμ`
    pub hess_v_l2: f64,
    /// `∫|v·D²u v|² dμ`
    pub vhv_l2: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str =
        "t,dirichlet,area,h_energy,divf_term,hess_l2,pinch_quad,mixed_term,grad_sup,hess_v_l2,vhv_l2";

    pub fn as_array(&self) -> [f64; 11] {
        [
            self.t,
            self.dirichlet,
            self.area,
            self.h_energy,
            self.divf_term,
            self.hess_l2,
            self.pinch_quad,
            self.mixed_term,
            self.grad_sup,
            self.hess_v_l2,
            self.vhv_l2,
        ]
    }

    pub fn csv_row(&self) -> String {
        self.as_array().iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// Integrand of the time integral in the dissipation inequality at noise level `λ`.
    pub fn dissipation_rate(&self, epsilon: f64, lambda: f64) -> f64 {
        let l2 = lambda * lambda;
        2.0 * epsilon * self.hess_l2
            + (1.0 - 0.5 * l2) * self.divf_term
            + self.pinch_quad
            + ((1.0 + 0.5 * l2) * self.hess_l2 - l2 * self.hess_v_l2 - (1.0 - 0.5 * l2) * self.vhv_l2)
    }
}

/// Evaluates every functional on `state`. `α` weights the pinching quadratic form.
pub fn energy_report<T: Real>(state: &State<T>, w: &WeightModel<T>, p: &SpdeParams<T>, alpha: T, h: &HSpec) -> EnergyReport {
    let u = &state.u;
    let g = *u.grid();
    let n = g.dim();
    let grad = gradient_c(u);
    let hess = hessian(u);
    let lap = laplacian_f(u, w);
    let hess_f = w.hess_f();
    let pinch_a = T::one() + T::lit(1.5) * alpha;
    let pinch_b = T::lit(2.0) * alpha * p.xi;

    let len = g.len();
    let mut q = vec![T::zero(); len];
    let mut h_q = vec![T::zero(); len];
    let mut divf = vec![T::zero(); len];
    let mut hess_sq = vec![T::zero(); len];
    let mut hv_sq = vec![T::zero(); len];
    let mut vhv_sq = vec![T::zero(); len];
    let mut pinch = vec![T::zero(); len];
    let mut grad_sup = T::zero();
    for j in 0..len {
        let pj = grad.at(j);
        let p2 = dot(pj, pj);
        let qj = (T::one() + p2).sqrt();
        let hj = hess.at(j);
        let hp = sym_matvec(n, hj, pj);
        let hv: Vec<T> = hp[..n].iter().map(|&x| x / qj).collect();
        let vhv = dot(&hv, pj) / qj;
        q[j] = qj;
        h_q[j] = T::lit(h.value(qj.to_f64_lossy()));
        divf[j] = (lap.get(j) - vhv).powi(2);
        hess_sq[j] = crate::grid::sym_frobenius_sq(n, hj);
        hv_sq[j] = dot(&hv, &hv);
        vhv_sq[j] = vhv * vhv;
        let fp = sym_matvec(n, hess_f.at(j), pj);
        pinch[j] = pinch_a * dot(&fp[..n], pj) - pinch_b * p2;
        grad_sup = grad_sup.max(p2.sqrt());
    }
    let int = |v: &[T]| integrate_mu_by(w, |j| v[j]).to_f64_lossy();
    let hess_l2 = int(&hess_sq);
    let hess_v_l2 = int(&hv_sq);
    let vhv_l2 = int(&vhv_sq);
    let mixed_term = integrate_mu_by(w, |j| T::lit(1.5) * hess_sq[j] - hv_sq[j] - T::lit(0.5) * vhv_sq[j]).to_f64_lossy();
    EnergyReport {
        t: state.t.to_f64_lossy(),
        dirichlet: dirichlet_form(u, u, w).to_f64_lossy(),
        area: int(&q),
        h_energy: int(&h_q),
        divf_term: int(&divf),
        hess_l2,
        pinch_quad: int(&pinch),
        mixed_term,
        grad_sup: grad_sup.to_f64_lossy(),
        hess_v_l2,
        vhv_l2,
    }
}

/// Observer that appends an [`EnergyReport`] for every state it sees.
pub struct EnergyRecorder<'a, T> {
    w: &'a WeightModel<T>,
    p: &'a SpdeParams<T>,
    alpha: T,
    h: HSpec,
    pub reports: Vec<EnergyReport>,
}

impl<'a, T: Real> EnergyRecorder<'a, T> {
    pub fn new(w: &'a WeightModel<T>, p: &'a SpdeParams<T>, alpha: T, h: HSpec) -> Self {
        Self { w, p, alpha, h, reports: Vec::new() }
    }
}

impl<T: Real> Observer<T> for EnergyRecorder<'_, T> {
    fn observe(&mut self, state: &State<T>) {
        self.reports.push(energy_report(state, self.w, self.p, self.alpha, &self.h));
    }
}

/// Coercivity slack `rhs - lhs` of the viscous operator at `u`, where
/// `lhs = 2⟨A_ε(∇u), ∇u⟩ + ‖D²u v‖²` with the pairing
/// `-∫((1+ε)Δ_f u - ½ v·D²u v)Δ_f u dμ + ξ∫|∇u|² dμ`, and
/// `rhs = -2ε(‖∇u‖² + ‖D²u‖²) + 2(ε+ξ)‖∇u‖²`.
pub fn coercivity_check<T: Real>(u: &ScalarField<T>, p: &SpdeParams<T>, w: &WeightModel<T>) -> T {
    let g = *u.grid();
    let n = g.dim();
    let grad = gradient_c(u);
    let hess = hessian(u);
    let lap = laplacian_f(u, w);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let len = g.len();
    let mut pairing = vec![T::zero(); len];
    let mut hv_sq = vec![T::zero(); len];
    let mut hess_sq = vec![T::zero(); len];
    let mut grad_sq = vec![T::zero(); len];
    for j in 0..len {
        let pj = grad.at(j);
        let p2 = dot(pj, pj);
        let q = (T::one() + p2).sqrt();
        let hp = sym_matvec(n, hess.at(j), pj);
        let hv: Vec<T> = hp[..n].iter().map(|&x| x / q).collect();
        let vhv = dot(&hv, pj) / q;
        let l = lap.get(j);
        pairing[j] = -(((T::one() + p.epsilon) * l - half * vhv) * l);
        hv_sq[j] = dot(&hv, &hv);
        hess_sq[j] = crate::grid::sym_frobenius_sq(n, hess.at(j));
        grad_sq[j] = p2;
    }
    let int = |v: &[T]| integrate_mu_by(w, |j| v[j]);
    let grad_l2 = int(&grad_sq);
    let lhs = two * (int(&pairing) + p.xi * grad_l2) + int(&hv_sq);
    let rhs = -two * p.epsilon * (grad_l2 + int(&hess_sq)) + two * (p.epsilon + p.xi) * grad_l2;
    rhs - lhs
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_ensemble(ensemble: &[Vec<EnergyReport>]) -> Result<Vec<f64>> {
    if ensemble.len() < MIN_PATHS {
        return Err(Error::TooFewPaths { required: MIN_PATHS, got: ensemble.len() });
    }
    let times: Vec<f64> = ensemble[0].iter().map(|r| r.t).collect();
    if times.is_empty() {
        return Err(Error::InvalidInput("empty energy series".into()));
    }
    for (i, path) in ensemble.iter().enumerate() {
        let same = path.len() == times.len()
            && path.iter().zip(&times).all(|(r, &t)| (r.t - t).abs() <= 1e-12 * t.abs().max(1.0));
        if !same {
            return Err(Error::InvalidInput(format!("path {i} is not on the common time mesh")));
        }
    }
    Ok(times)
}

/// Per-time ensemble mean and standard error of a report field.
pub fn ensemble_stats<F: Fn(&EnergyReport) -> f64>(ensemble: &[Vec<EnergyReport>], field: F) -> (Vec<f64>, Vec<f64>) {
    let len = ensemble.first().map_or(0, Vec::len);
    (0..len)
        .map(|i| {
            let xs: Vec<f64> = ensemble.iter().map(|path| field(&path[i])).collect();
            mean_stderr(&xs)
        })
        .unzip()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupermartingaleVerdict {
    pub times: Vec<f64>,
    pub mean_energy: Vec<f64>,
    pub std_err: Vec<f64>,
    pub k: f64,
    pub bias_budget: f64,
    /// Largest `mean[i+1] - mean[i] - k·√(se[i]² + se[i+1]²) - budget` over the mesh.
    pub worst_excess: f64,
    pub monotone_within: bool,
}

impl fmt::Display for SupermartingaleVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "supermartingale: {} (k = {}, budget = {:.3e}, worst excess = {:.3e}, E0 = {:.6e}, E(T) = {:.6e})",
            self.monotone_within,
            self.k,
            self.bias_budget,
            self.worst_excess,
            self.mean_energy.first().copied().unwrap_or(f64::NAN),
            self.mean_energy.last().copied().unwrap_or(f64::NAN),
        )
    }
}

/// Mean Dirichlet energy non-increasing between consecutive samples within
/// `k` standard errors plus `bias_budget`.
pub fn supermartingale_test(ensemble: &[Vec<EnergyReport>], k: f64, bias_budget: f64) -> Result<SupermartingaleVerdict> {
    supermartingale_test_by(ensemble, k, bias_budget, |r| r.dirichlet)
}

/// [`supermartingale_test`] on an arbitrary report field.
pub fn supermartingale_test_by<F: Fn(&EnergyReport) -> f64>(
    ensemble: &[Vec<EnergyReport>],
    k: f64,
    bias_budget: f64,
    field: F,
) -> Result<SupermartingaleVerdict> {
    if !(k >= 0.0) {
        return Err(invalid("k", "must be non-negative"));
    }
    let times = check_ensemble(ensemble)?;
    let (mean, se) = ensemble_stats(ensemble, field);
    let worst_excess = (1..mean.len())
        .map(|i| mean[i] - mean[i - 1] - k * se[i].hypot(se[i - 1]) - bias_budget)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_excess = if mean.len() < 2 { 0.0 } else { worst_excess };
    Ok(SupermartingaleVerdict {
        times,
        mean_energy: mean,
        std_err: se,
        k,
        bias_budget,
        worst_excess,
        monotone_within: worst_excess <= 0.0,
    })
}

/// `D(t_K) + Σ_{k<K} (t_{k+1}-t_k)·rate(t_k) - D(t_0)` along one path (left Riemann sum).
fn ledger_series<F: Fn(&EnergyReport) -> f64>(reports: &[EnergyReport], rate: F) -> Vec<f64> {
    let Some(first) = reports.first() else {
        return vec![];
    };
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(reports.len());
    out.push(0.0);
    for w in reports.windows(2) {
        acc += (w[1].t - w[0].t) * rate(&w[0]);
        out.push(w[1].dirichlet + acc - first.dirichlet);
    }
    out
}

/// Dissipation ledger of one path at its last sample:
/// `D(t) + Σ dt·(2ε‖D²u‖² + (1-λ²/2)·divf + pinch + λ-mixed) - D(0)`.
pub fn dissipation_ledger(reports: &[EnergyReport], epsilon: f64, lambda: f64) -> f64 {
    ledger_series(reports, |r| r.dissipation_rate(epsilon, lambda)).last().copied().unwrap_or(0.0)
}

/// Lower-bound coefficient `(3+4L²)/(2(1+L²)²)` of the Hessian dissipation at `λ = 1`.
pub fn l_form_coefficient(l: f64) -> f64 {
    let l2 = l * l;
    (3.0 + 4.0 * l2) / (2.0 * (1.0 + l2).powi(2))
}

/// `D(t) + c_L Σ dt·‖D²u‖² - D(0)` along one path.
pub fn l_form_ledger(reports: &[EnergyReport], l: f64) -> f64 {
    let c = l_form_coefficient(l);
    ledger_series(reports, |r| c * r.hess_l2).last().copied().unwrap_or(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerVerdict {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub k: f64,
    pub bias_budget: f64,
    /// Largest `mean - k·se - budget` over the mesh.
    pub worst_excess: f64,
    pub within: bool,
}

impl LedgerVerdict {
    pub fn final_value(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }
}

impl fmt::Display for LedgerVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ledger: {} (final mean = {:.3e} ± {:.1e}, budget = {:.3e}, worst excess = {:.3e})",
            self.within,
            self.final_value(),
            self.std_err.last().copied().unwrap_or(0.0),
            self.bias_budget,
            self.worst_excess
        )
    }
}

fn ledger_verdict<F: Fn(&EnergyReport) -> f64 + Copy>(
    ensemble: &[Vec<EnergyReport>],
    k: f64,
    bias_budget: f64,
    rate: F,
) -> Result<LedgerVerdict> {
    let times = check_ensemble(ensemble)?;
    let series: Vec<Vec<f64>> = ensemble.iter().map(|path| ledger_series(path, rate)).collect();
    let (mean, std_err): (Vec<f64>, Vec<f64>) = (0..times.len())
        .map(|i| mean_stderr(&series.iter().map(|s| s[i]).collect::<Vec<_>>()))
        .unzip();
    let worst_excess =
        mean.iter().zip(&std_err).map(|(m, s)| m - k * s - bias_budget).fold(f64::NEG_INFINITY, f64::max);
    Ok(LedgerVerdict { times, mean, std_err, k, bias_budget, worst_excess, within: worst_excess <= 0.0 })
}

/// Ensemble dissipation ledger at every sample time; holds when the mean stays
/// below `bias_budget` up to `k` standard errors.
pub fn ensemble_ledger(
    ensemble: &[Vec<EnergyReport>],
    epsilon: f64,
    lambda: f64,
    k: f64,
    bias_budget: f64,
) -> Result<LedgerVerdict> {
    ledger_verdict(ensemble, k, bias_budget, |r| r.dissipation_rate(epsilon, lambda))
}

/// Ensemble form of [`l_form_ledger`].
pub fn ensemble_l_form(ensemble: &[Vec<EnergyReport>], l: f64, k: f64, bias_budget: f64) -> Result<LedgerVerdict> {
    let c = l_form_coefficient(l);
    ledger_verdict(ensemble, k, bias_budget, move |r| c * r.hess_l2)
}

/// True iff every recorded `grad_sup ≤ L·(1+slack)`.
pub fn max_principle_test(reports: &[EnergyReport], l: f64, slack: f64) -> bool {
    max_principle_violations(reports, l, slack) == 0
}

/// Number of recorded samples with `grad_sup > L·(1+slack)`.
pub fn max_principle_violations(reports: &[EnergyReport], l: f64, slack: f64) -> usize {
    let cap = l * (1.0 + slack);
    reports.iter().filter(|r| !(r.grad_sup <= cap)).count()
}

/// `‖u^λ(T) - u⁰(T)‖_{L²(dμ)}`.
pub fn small_noise_gap<T: Real>(u_lambda: &ScalarField<T>, u_det: &ScalarField<T>, w: &WeightModel<T>) -> T {
    l2_mu_norm(&u_lambda.zip_map(u_det, |a, b| a - b), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::noise::{path_seed, sample_path};
    use crate::spde::{cfl_dt, run_path, Scheme};
    use crate::weight::WeightPreset;
    use std::f64::consts::PI;

    fn flat(g: GridSpec) -> WeightModel<f64> {
        WeightModel::from_preset(WeightPreset::Constant, 0.0, &[], 0.0, g).unwrap()
    }

    fn report_of(u: ScalarField<f64>, w: &WeightModel<f64>, eps: f64) -> EnergyReport {
        let p = SpdeParams::new(eps, 0.0, 1.0, 1e-5, Scheme::ExplicitEm).unwrap();
        energy_report(&State::initial(u), w, &p, 0.25, &HSpec::area(eps))
    }

    #[test]
    fn zero_field_report() {
        let g = GridSpec::new(2, 16).unwrap();
        let w = flat(g);
        let r = report_of(ScalarField::<f64>::zeros(g), &w, 0.0);
        assert_eq!(r.dirichlet, 0.0);
        assert!((r.area - 1.0).abs() < 1e-14);
        assert_eq!(r.grad_sup, 0.0);
        assert_eq!((r.divf_term, r.hess_l2, r.pinch_quad, r.mixed_term), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn sine_dirichlet_energy() {
        for n in [32usize, 64] {
            let g = GridSpec::new(1, n).unwrap();
            let w = flat(g);
            let r = report_of(ScalarField::<f64>::from_fn(g, |x| 0.1 * (2.0 * PI * x[0]).sin()), &w, 0.0);
            let exact = 0.5 * (0.1 * 2.0 * PI).powi(2);
            let h = 1.0 / n as f64;
            assert!((r.dirichlet - exact).abs() < 5.0 * exact * h * h * 4.0 * PI * PI / 12.0 + 1e-15);
            assert!(r.area >= 1.0 && r.hess_l2 >= 0.0 && r.mixed_term >= 0.0);
        }
    }

    #[test]
    fn one_dimensional_dissipation_matches_closed_form() {
        // f ≡ 0, λ = 1: the rate reduces pointwise to 2 u''²/Q²
        let g = GridSpec::new(1, 64).unwrap();
        let w = flat(g);
        let u = ScalarField::<f64>::from_fn(g, |x| 0.3 * (2.0 * PI * x[0]).sin());
        let r = report_of(u.clone(), &w, 0.0);
        let grad = gradient_c(&u);
        let hess = hessian(&u);
        let expect: f64 = (0..64).map(|j| 2.0 * hess.at(j)[0].powi(2) / (1.0 + grad.norm_sq_at(j))).sum::<f64>() / 64.0;
        assert!((r.dissipation_rate(0.0, 1.0) - expect).abs() < 1e-10 * expect);
        // λ-mixed bracket at λ = 1 is the plain mixed term
        let bracket = r.dissipation_rate(0.0, 1.0) - 0.5 * r.divf_term - r.pinch_quad;
        assert!((bracket - r.mixed_term).abs() < 1e-10 * r.mixed_term);
    }

    #[test]
    fn mixed_term_lower_bound() {
        let g = GridSpec::new(2, 32).unwrap();
        let w = flat(g);
        let u = ScalarField::<f64>::from_fn(g, |x| 0.15 * (2.0 * PI * x[0]).sin() + 0.1 * (2.0 * PI * (x[0] + x[1])).cos());
        let r = report_of(u, &w, 0.0);
        let l = r.grad_sup;
        assert!(r.mixed_term >= l_form_coefficient(l) * r.hess_l2 - 0.5 * r.hess_l2);
    }

    #[test]
    fn h_m_examples() {
        assert_eq!(h_m_eval(1.5, 2.0, 0.3), 0.0);
        let (m, c) = (2.0f64, 0.3f64);
        let left = c * (m + 1.0 - m).powi(2);
        let right = c * (2.0 * (m + 1.0) - 2.0 * m - 1.0);
        assert!((left - right).abs() < 1e-15);
        assert!((h_m_eval(m + 1.0, m, c) - c).abs() < 1e-15);
        let hs = HSpec::HM { m, coef: c };
        let d = 1e-7;
        assert!((hs.derivative(m + 1.0 - d) - 2.0 * c).abs() < 1e-6);
        assert!((hs.derivative(m + 1.0 + d) - 2.0 * c).abs() < 1e-12);
        for spec in [HSpec::dirichlet(0.3, 0.1), HSpec::area(0.1), HSpec::h_m(1.0, 0.3, 0.0)] {
            spec.check_admissible().unwrap();
        }
        let bad = HSpec::Custom { name: "shifted", h: |x| x + 1.0, dh: |_| 1.0, d2h: |_| 0.0 };
        assert!(matches!(bad.check_admissible(), Err(Error::InadmissibleH(_))));
    }

    #[test]
    fn coercivity_examples() {
        let g = GridSpec::new(2, 32).unwrap();
        let w = flat(g);
        let p = SpdeParams::new(0.1, 0.0, 1.0, 1e-5, Scheme::ExplicitEm).unwrap();
        assert_eq!(coercivity_check(&ScalarField::<f64>::constant(g, 3.0), &p, &w), 0.0);
        let u = ScalarField::<f64>::from_fn(g, |x| 0.4 * (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos());
        let s_hi = coercivity_check(&u, &p, &w);
        let s_lo = coercivity_check(&u, &p.with_epsilon(0.01).unwrap(), &w);
        assert!(s_hi >= -1e-6 && s_lo >= -1e-6);
        assert!(s_lo <= s_hi);
    }

    fn deterministic_ensemble(m: usize) -> Vec<Vec<EnergyReport>> {
        let g = GridSpec::new(1, 32).unwrap();
        let w = flat(g);
        let dt = cfl_dt(0.0, 0.0, &w, 0.5);
        let p = SpdeParams::new(0.0, 0.0, 0.0, dt, Scheme::ExplicitEm).unwrap();
        let u0 = ScalarField::<f64>::from_fn(g, |x| 0.2 * (2.0 * PI * x[0]).sin());
        let path = sample_path(0.05, dt, 0).unwrap();
        let mut rec = EnergyRecorder::new(&w, &p, 0.25, HSpec::area(0.0));
        run_path(&u0, 0.05, &path, &p, &w, &mut [&mut rec], 1).unwrap();
        vec![rec.reports; m]
    }

    #[test]
    fn supermartingale_on_deterministic_decay() {
        let ens = deterministic_ensemble(40);
        let v = supermartingale_test(&ens, 2.0, 0.0).unwrap();
        assert!(v.monotone_within);
        assert!(v.std_err.iter().all(|&s| s == 0.0));
        let dt = ens[0][1].t;
        let budget = bias_budget(dt, 1.0 / 32.0, ens[0][0].dirichlet);
        let ledger = ensemble_ledger(&ens, 0.0, 0.0, 2.0, budget).unwrap();
        assert!(ledger.within, "{ledger}");
        assert!(matches!(supermartingale_test(&ens[..10], 2.0, 0.0), Err(Error::TooFewPaths { .. })));
    }

    #[test]
    fn supermartingale_flags_growth() {
        let mut ens = deterministic_ensemble(40);
        for path in &mut ens {
            path.reverse();
            let times: Vec<f64> = path.iter().rev().map(|r| r.t).collect();
            for (r, t) in path.iter_mut().zip(times) {
                r.t = t;
            }
        }
        assert!(!supermartingale_test(&ens, 2.0, 0.0).unwrap().monotone_within);
    }

    #[test]
    fn flat_paths_have_zero_energy_and_ledger() {
        let g = GridSpec::new(1, 16).unwrap();
        let w = flat(g);
        let p = SpdeParams::new(0.0, 0.0, 1.0, 1e-3, Scheme::ExplicitEm).unwrap();
        let ens: Vec<Vec<EnergyReport>> = (0..30)
            .map(|i| {
                let path = sample_path(0.05, 1e-3, path_seed(5, i)).unwrap();
                let mut rec = EnergyRecorder::new(&w, &p, 0.25, HSpec::area(0.0));
                run_path(&ScalarField::<f64>::constant(g, 0.1), 0.05, &path, &p, &w, &mut [&mut rec], 1).unwrap();
                rec.reports
            })
            .collect();
        assert!(ens.iter().flatten().all(|r| r.dirichlet == 0.0 && r.grad_sup == 0.0));
        assert!(supermartingale_test(&ens, 2.0, 0.0).unwrap().monotone_within);
        assert_eq!(dissipation_ledger(&ens[0], 0.0, 1.0), 0.0);
        assert!(ens.iter().all(|path| max_principle_test(path, 0.0, 0.0)));
    }

    #[test]
    fn deterministic_max_principle() {
        let ens = deterministic_ensemble(1);
        let l = 0.2 * 2.0 * PI;
        assert!(max_principle_test(&ens[0], l, DEFAULT_MAX_SLACK));
        assert!(!max_principle_test(&ens[0], 0.5 * l, DEFAULT_MAX_SLACK));
    }

    #[test]
    fn small_noise_gap_zero_on_identical() {
        let g = GridSpec::new(1, 16).unwrap();
        let w = flat(g);
        let u = ScalarField::<f64>::from_fn(g, |x| x[0].sin());
        assert_eq!(small_noise_gap(&u, &u, &w), 0.0);
        let v = u.map(|x| x + 0.5);
        assert!((small_noise_gap(&u, &v, &w) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn csv_row_has_header_width() {
        let r = EnergyReport { t: 0.5, ..report_of(ScalarField::<f64>::zeros(GridSpec::new(1, 8).unwrap()), &flat(GridSpec::new(1, 8).unwrap()), 0.0) };
        assert_eq!(r.csv_row().split(',').count(), EnergyReport::CSV_HEADER.split(',').count());
        assert!(r.csv_row().starts_with("5.0000000000000000e-1,"));
    }
}

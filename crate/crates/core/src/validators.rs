//! Oracle checks of the matrix and profile identities behind the energy estimates.
//!
//! Each check compares a closed form against an independent computation (dense
//! eigenvalues, finite differences) on small random instances. The suite runs
//! them in bulk and reports per-check failures; its function table can be
//! swapped to confirm that a broken formula is caught.

use std::fmt;

use serde::Serialize;

use crate::diagnostics::HSpec;
use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues;
use crate::noise::GaussianSource;

pub const MAX_DIM: usize = 4;
/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;
pub const RANK_ONE_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-12;
pub const G_DERIV_TOL: f64 = 1e-6;
pub const COMBO_TOL: f64 = 1e-12;
pub const DEFAULT_TRIALS: usize = 10_000;

/// Row-major `n×n` matrix with `n ≤ 4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallMatrix {
    n: usize,
    a: [f64; MAX_DIM * MAX_DIM],
}

impl SmallMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "matrix size {n} outside 1..=4");
        Self { n, a: [0.0; MAX_DIM * MAX_DIM] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(n: usize, entries: &[f64]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&n) || entries.len() != n * n {
            return Err(Error::InvalidInput(format!("expected {n}×{n} entries with n ≤ 4, got {}", entries.len())));
        }
        let mut m = Self::zeros(n);
        m.a[..n * n].copy_from_slice(entries);
        Ok(m)
    }

    /// `a·Id + b·v⊗v`.
    pub fn rank_one_update(a: f64, b: f64, v: &[f64]) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, b * v[i] * v[j] + if i == j { a } else { 0.0 });
            }
        }
        m
    }

    /// `G Gᵀ`, positive semidefinite by construction.
    pub fn gram(g: &SmallMatrix) -> Self {
        g.mul(&g.transpose())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.a[i * self.n + j] = x;
    }

    pub fn entries(&self) -> &[f64] {
        &self.a[..self.n * self.n]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, other: &SmallMatrix) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum());
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * (1.0 + self.max_abs())))
    }

    /// Ascending eigenvalues (matrix assumed symmetric).
    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigenvalues(self.n, self.entries())
    }
}

/// Closed-form spectrum of `a·Id + b·v⊗v`: `a` (on `v⊥`) and `a + b|v|²` (along `v`).
pub fn rank_one_eigs(a: f64, b: f64, v: &[f64]) -> (f64, f64) {
    (a, a + b * v.iter().map(|x| x * x).sum::<f64>())
}

/// Largest gap between a claimed rank-one spectrum and the dense spectrum of
/// the explicitly formed matrix, relative to `1 + |a| + |b||v|²`.
pub fn rank_one_deviation(claimed: (f64, f64), a: f64, b: f64, v: &[f64]) -> f64 {
    let n = v.len();
    let mut expect = vec![claimed.0; n.saturating_sub(1)];
    expect.push(claimed.1);
    expect.sort_by(f64::total_cmp);
    let dense = SmallMatrix::rank_one_update(a, b, v).eigenvalues();
    let scale = 1.0 + a.abs() + b.abs() * v.iter().map(|x| x * x).sum::<f64>();
    expect.iter().zip(&dense).map(|(e, d)| (e - d).abs()).fold(0.0, f64::max) / scale
}

/// `tr((AB)(CA)ᵀ)` for symmetric `A` and symmetric positive semidefinite `B`, `C`.
pub fn trace_product_check(a: &SmallMatrix, b: &SmallMatrix, c: &SmallMatrix) -> Result<f64> {
    if a.dim() != b.dim() || a.dim() != c.dim() {
        return Err(Error::InvalidInput("matrix sizes differ".into()));
    }
    for (name, m) in [("A", a), ("B", b), ("C", c)] {
        if !m.is_symmetric(1e-12) {
            return Err(Error::InvalidInput(format!("{name} is not symmetric")));
        }
    }
    for (name, m) in [("B", b), ("C", c)] {
        let min = m.eigenvalues()[0];
        if min < -1e-12 * (1.0 + m.max_abs()) {
            return Err(Error::InvalidInput(format!("{name} is not positive semidefinite (λ_min = {min:e})")));
        }
    }
    Ok(a.mul(b).mul(&c.mul(a).transpose()).trace())
}

fn area(p: &[f64]) -> f64 {
    (1.0 + p.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// `∇g(p) = h'(Q)v` for `g = h∘Q`.
pub fn g_gradient(h: &HSpec, p: &[f64]) -> Vec<f64> {
    let q = area(p);
    let dh = h.derivative(q);
    p.iter().map(|&x| dh * x / q).collect()
}

/// `D²g(p) = h''(Q) v⊗v + (h'(Q)/Q)(Id - v⊗v)`.
pub fn g_hessian(h: &HSpec, p: &[f64]) -> SmallMatrix {
    let n = p.len();
    let q = area(p);
    let (dh, d2h) = (h.derivative(q), h.second_derivative(q));
    let mut m = SmallMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let vv = p[i] * p[j] / (q * q);
            let id = if i == j { 1.0 } else { 0.0 };
            m.set(i, j, d2h * vv + dh / q * (id - vv));
        }
    }
    m
}

/// Largest deviation of the closed-form gradient and Hessian of `g = h∘Q` from
/// central differences: the gradient against differences of `g`, the Hessian
/// against differences of the closed-form gradient.
pub fn g_derivatives_check(h: &HSpec, p: &[f64]) -> f64 {
    let n = p.len();
    let g = |x: &[f64]| h.value(area(x));
    let grad = g_gradient(h, p);
    let hess = g_hessian(h, p);
    let mut worst = 0.0f64;
    let mut x = p.to_vec();
    for i in 0..n {
        x[i] = p[i] + FD_STEP;
        let (gp, dp) = (g(&x), g_gradient(h, &x));
        x[i] = p[i] - FD_STEP;
        let (gm, dm) = (g(&x), g_gradient(h, &x));
        x[i] = p[i];
        worst = worst.max((grad[i] - (gp - gm) / (2.0 * FD_STEP)).abs());
        for j in 0..n {
            worst = worst.max((hess.get(j, i) - (dp[j] - dm[j]) / (2.0 * FD_STEP)).abs());
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositiveCombo {
    /// `h'(Q)/Q - h(Q)/(2Q²)`, eigenvalue on `v⊥`.
    pub transverse: f64,
    /// `h'(Q)/Q³ - h(Q)/(2Q⁴) + h''(Q)|p|²/Q²`, eigenvalue along `v`.
    pub longitudinal: f64,
    /// Gap to the dense spectrum of `D²g - (h(Q)/(2Q²))(Id - v⊗v)`.
    pub dense_deviation: f64,
}

/// Eigenvalues of `D²g - (h(Q)/(2Q²))(Id - v⊗v)` in closed form, with a dense cross-check.
pub fn positive_combo_check(h: &HSpec, p: &[f64]) -> Result<PositiveCombo> {
    h.check_admissible()?;
    let n = p.len();
    let q = area(p);
    let p2 = q * q - 1.0;
    let (hv, dh, d2h) = (h.value(q), h.derivative(q), h.second_derivative(q));
    let transverse = dh / q - hv / (2.0 * q * q);
    let longitudinal = dh / q.powi(3) - hv / (2.0 * q.powi(4)) + d2h * p2 / (q * q);

    let mut m = g_hessian(h, p);
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            m.set(i, j, m.get(i, j) - hv / (2.0 * q * q) * (id - p[i] * p[j] / (q * q)));
        }
    }
    let dense = m.eigenvalues();
    let mut expect = vec![transverse; n - 1];
    expect.push(longitudinal);
    expect.sort_by(f64::total_cmp);
    let scale = 1.0 + dh.abs() + hv.abs() + d2h.abs() * p2;
    let dense_deviation = expect.iter().zip(&dense).map(|(e, d)| (e - d).abs()).fold(0.0, f64::max) / scale;
    Ok(PositiveCombo { transverse, longitudinal, dense_deviation })
}

/// Smallest increment of `x h'(x) - h(x)` between consecutive samples of `[1, x_max]`.
pub fn xh_monotonicity(h: &HSpec, x_max: f64, samples: usize) -> f64 {
    let phi = |x: f64| x * h.derivative(x) - h.value(x);
    let step = (x_max - 1.0) / samples as f64;
    (0..samples)
        .map(|k| {
            let x = 1.0 + step * k as f64;
            phi(x + step) - phi(x)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// Worst observed value of the checked quantity (deviation or negative margin).
    pub worst: f64,
    pub tolerance: f64,
    pub first_failure: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<20} {} {}/{} failed, worst {:.3e} (tol {:.0e})",
            self.name,
            if self.passed() { "ok  " } else { "FAIL" },
            self.failures,
            self.trials,
            self.worst,
            self.tolerance
        )?;
        if let Some(first) = &self.first_failure {
            write!(f, "; first: {first}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect()
    }
}

/// Injectable formulas checked by the suite.
#[derive(Clone, Copy)]
pub struct Formulas {
    pub rank_one_eigs: fn(f64, f64, &[f64]) -> (f64, f64),
    pub trace_product: fn(&SmallMatrix, &SmallMatrix, &SmallMatrix) -> Result<f64>,
    pub g_derivatives: fn(&HSpec, &[f64]) -> f64,
    pub positive_combo: fn(&HSpec, &[f64]) -> Result<PositiveCombo>,
}

impl Default for Formulas {
    fn default() -> Self {
        Self {
            rank_one_eigs,
            trace_product: trace_product_check,
            g_derivatives: g_derivatives_check,
            positive_combo: positive_combo_check,
        }
    }
}

/// Named faults for exercising the suite.
pub fn fault(name: &str) -> Result<Formulas> {
    let mut f = Formulas::default();
    match name {
        "rank_one_sign" => f.rank_one_eigs = |a, b, v| (a, a - b * v.iter().map(|x| x * x).sum::<f64>()),
        "trace_transpose" => f.trace_product = |a, b, c| Ok(-a.mul(b).mul(&c.mul(a).transpose()).trace()),
        "combo_half" => {
            f.positive_combo = |h, p| {
                positive_combo_check(h, p).map(|c| PositiveCombo { transverse: c.transverse - 1.0, ..c })
            }
        }
        other => return Err(Error::Config(format!("unknown fault `{other}`"))),
    }
    Ok(f)
}

pub struct ValidatorSuite {
    pub trials: usize,
    pub seed: u64,
    pub formulas: Formulas,
}

/// Randomness stream of the suite, distinct from Wiener and initial-data streams.
const SUITE_STREAM: u64 = 7;

struct Draw(GaussianSource);

impl Draw {
    fn normal(&mut self) -> f64 {
        self.0.next_standard()
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.next_uniform()
    }

    fn dim(&mut self, max: usize) -> usize {
        1 + ((self.0.next_uniform() * max as f64) as usize).min(max - 1)
    }

    fn vector(&mut self, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| scale * self.normal()).collect()
    }

    fn matrix(&mut self, n: usize) -> SmallMatrix {
        let mut m = SmallMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, self.normal());
            }
        }
        m
    }

    fn symmetric(&mut self, n: usize) -> SmallMatrix {
        let g = self.matrix(n);
        let mut s = SmallMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, 0.5 * (g.get(i, j) + g.get(j, i)));
            }
        }
        s
    }

    fn profile(&mut self) -> HSpec {
        let coef = self.uniform(0.1, 2.0);
        match (self.0.next_uniform() * 3.0) as usize {
            0 => HSpec::Dirichlet { coef },
            1 => HSpec::Area { coef },
            _ => HSpec::HM { m: self.uniform(1.0, 3.0), coef },
        }
    }

    /// Gradient sample whose area element keeps clear of the profile's knots.
    fn gradient_for(&mut self, h: &HSpec) -> Vec<f64> {
        loop {
            let n = self.dim(3);
            let scale = [0.1, 1.0, 3.0][(self.0.next_uniform() * 3.0) as usize % 3];
            let p = self.vector(n, scale);
            let q = area(&p);
            if h.knots().iter().all(|k| (q - k).abs() > 1e-3) {
                return p;
            }
        }
    }
}

struct Tally {
    result: CheckResult,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { result: CheckResult { name, trials: 0, failures: 0, worst: 0.0, tolerance, first_failure: None } }
    }

    /// Records one trial; `excess > 0` is a failure.
    fn record(&mut self, worst: f64, excess: f64, describe: impl FnOnce() -> String) {
        let r = &mut self.result;
        r.trials += 1;
        r.worst = r.worst.max(worst);
        if !(excess <= 0.0) {
            r.failures += 1;
            if r.first_failure.is_none() {
                r.first_failure = Some(describe());
            }
        }
    }
}

impl ValidatorSuite {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self { trials, seed, formulas: Formulas::default() }
    }

    pub fn with_formulas(mut self, formulas: Formulas) -> Self {
        self.formulas = formulas;
        self
    }

    pub fn run(&self) -> SuiteReport {
        let mut draw = Draw(GaussianSource::new(self.seed, SUITE_STREAM));
        let f = self.formulas;

        let mut rank = Tally::new("rank_one_eigs", RANK_ONE_TOL);
        for _ in 0..self.trials {
            let n = draw.dim(MAX_DIM);
            let (a, b) = (2.0 * draw.normal(), 2.0 * draw.normal());
            let v = draw.vector(n, 1.0);
            let dev = rank_one_deviation((f.rank_one_eigs)(a, b, &v), a, b, &v);
            rank.record(dev, dev - RANK_ONE_TOL, || format!("a = {a}, b = {b}, v = {v:?}, deviation {dev:e}"));
        }

        let mut trace = Tally::new("trace_product", TRACE_TOL);
        for _ in 0..self.trials {
            let n = draw.dim(MAX_DIM);
            let a = draw.symmetric(n);
            let b = SmallMatrix::gram(&draw.matrix(n));
            let c = SmallMatrix::gram(&draw.matrix(n));
            match (f.trace_product)(&a, &b, &c) {
                Ok(value) => trace.record(-value, -value - TRACE_TOL, || format!("n = {n}, value {value:e}")),
                Err(e) => trace.record(f64::INFINITY, f64::INFINITY, || e.to_string()),
            }
        }

        let mut deriv = Tally::new("g_derivatives", G_DERIV_TOL);
        for _ in 0..self.trials {
            let h = draw.profile();
            let p = draw.gradient_for(&h);
            let dev = (f.g_derivatives)(&h, &p);
            let tol = G_DERIV_TOL * area(&p).powi(2);
            deriv.record(dev / area(&p).powi(2), dev - tol, || format!("{h:?} at p = {p:?}: deviation {dev:e}"));
        }

        let mut combo = Tally::new("positive_combo", COMBO_TOL);
        let mut mono = Tally::new("xh_monotone", COMBO_TOL);
        for _ in 0..self.trials {
            let h = draw.profile();
            let p = draw.gradient_for(&h);
            match (f.positive_combo)(&h, &p) {
                Ok(c) => {
                    let neg = (-c.transverse).max(-c.longitudinal);
                    let excess = neg.max(c.dense_deviation - RANK_ONE_TOL) - COMBO_TOL;
                    combo.record(neg.max(0.0), excess, || format!("{h:?} at p = {p:?}: {c:?}"));
                }
                Err(e) => combo.record(f64::INFINITY, f64::INFINITY, || e.to_string()),
            }
            let inc = xh_monotonicity(&h, 10.0, 64);
            mono.record((-inc).max(0.0), -inc - COMBO_TOL, || format!("{h:?}: decrement {inc:e}"));
        }

        SuiteReport { seed: self.seed, checks: vec![rank.result, trace.result, deriv.result, combo.result, mono.result] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_one_examples() {
        assert_eq!(rank_one_eigs(2.0, 3.0, &[1.0, 0.0]), (2.0, 5.0));
        assert_eq!(rank_one_eigs(1.5, 0.0, &[0.3, -2.0, 1.0]), (1.5, 1.5));
        let v = [0.3, -1.2, 0.7];
        let eigs = SmallMatrix::rank_one_update(-0.4, 1.7, &v).eigenvalues();
        let (a, top) = rank_one_eigs(-0.4, 1.7, &v);
        assert!((eigs[0] - a).abs() < 1e-10 && (eigs[1] - a).abs() < 1e-10 && (eigs[2] - top).abs() < 1e-10);
    }

    #[test]
    fn trace_product_examples() {
        let a = SmallMatrix::from_rows(2, &[1.0, 2.0, 2.0, -3.0]).unwrap();
        let id = SmallMatrix::identity(2);
        let fro: f64 = a.entries().iter().map(|x| x * x).sum();
        assert!((trace_product_check(&a, &id, &id).unwrap() - fro).abs() < 1e-14);
        assert_eq!(trace_product_check(&SmallMatrix::zeros(2), &id, &id).unwrap(), 0.0);
        let not_psd = SmallMatrix::from_rows(2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(trace_product_check(&a, &not_psd, &id).is_err());
        let not_sym = SmallMatrix::from_rows(2, &[1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(trace_product_check(&not_sym, &id, &id).is_err());
    }

    #[test]
    fn g_derivative_examples() {
        let area_h = HSpec::Area { coef: 1.0 };
        let quad = HSpec::Dirichlet { coef: 1.0 };
        // p = 0: ∇g = 0 and D²g = h'(1) Id
        assert!(g_gradient(&quad, &[0.0, 0.0]).iter().all(|&x| x == 0.0));
        assert_eq!(g_hessian(&quad, &[0.0, 0.0]), SmallMatrix::rank_one_update(2.0, 0.0, &[0.0, 0.0]));
        // h(x) = x²: ∇g = 2p
        let p = [0.3, -1.1, 2.0];
        for (gi, pi) in g_gradient(&quad, &p).iter().zip(&p) {
            assert!((gi - 2.0 * pi).abs() < 1e-14);
        }
        assert!(g_derivatives_check(&area_h, &p) <= 1e-6);
        assert!(g_derivatives_check(&HSpec::HM { m: 1.5, coef: 0.7 }, &p) <= 1e-6 * 6.3);
    }

    #[test]
    fn positive_combo_examples() {
        let p = [0.8, -0.1];
        let q = area(&p);
        let c = positive_combo_check(&HSpec::Area { coef: 1.0 }, &p).unwrap();
        assert!((c.transverse - 1.0 / (2.0 * q)).abs() < 1e-15);
        let c = positive_combo_check(&HSpec::Dirichlet { coef: 1.0 }, &[0.0]).unwrap();
        assert!((c.transverse - 1.5).abs() < 1e-15 && (c.longitudinal - 1.5).abs() < 1e-15);
        let c = positive_combo_check(&HSpec::HM { m: 5.0, coef: 1.0 }, &p).unwrap();
        assert_eq!((c.transverse, c.longitudinal), (0.0, 0.0));
        let bad = HSpec::Custom { name: "offset", h: |x| x + 1.0, dh: |_| 1.0, d2h: |_| 0.0 };
        assert!(matches!(positive_combo_check(&bad, &p), Err(Error::InadmissibleH(_))));
    }

    #[test]
    fn suite_passes_and_catches_faults() {
        let report = ValidatorSuite::new(500, 1).run();
        assert!(report.passed(), "{:#?}", report.checks);
        for (name, check) in [("rank_one_sign", "rank_one_eigs"), ("trace_transpose", "trace_product"), ("combo_half", "positive_combo")] {
            let report = ValidatorSuite::new(200, 1).with_formulas(fault(name).unwrap()).run();
            assert_eq!(report.failed_checks(), vec![check], "{name}");
        }
        assert!(fault("nope").is_err());
    }

    proptest! {
        #[test]
        fn rank_one_matches_dense(a in -5.0f64..5.0, b in -5.0f64..5.0, v in proptest::collection::vec(-3.0f64..3.0, 1..=4)) {
            prop_assert!(rank_one_deviation(rank_one_eigs(a, b, &v), a, b, &v) < RANK_ONE_TOL);
        }

        #[test]
        fn xh_minus_h_increases(coef in 0.01f64..3.0, m in 1.0f64..4.0) {
            for h in [HSpec::Dirichlet { coef }, HSpec::Area { coef }, HSpec::HM { m, coef }] {
                prop_assert!(xh_monotonicity(&h, 12.0, 100) >= -1e-12);
            }
        }
    }
}

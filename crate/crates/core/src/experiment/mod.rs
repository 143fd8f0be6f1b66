//! Configuration-driven experiment runners behind the `fmcf` command.

pub mod config;
pub mod initial;
pub mod output;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{
    bias_budget, coercivity_check, dissipation_ledger, ensemble_l_form, ensemble_ledger, max_principle_violations,
    small_noise_gap, supermartingale_test, supermartingale_test_by, EnergyRecorder, EnergyReport, HSpec, MIN_PATHS,
};
use crate::error::{Error, Result};
use crate::grid::{gradient_c, GridSpec, ScalarField};
use crate::noise::{path_seed, sample_path, step_count};
use crate::spde::{cfl_dt, run_path, BlowupInfo, SpdeParams, State};
use crate::validators::{SuiteReport, ValidatorSuite};
use crate::weight::{alpha_from_delta, check_pinching, PinchingReport, WeightModel};

use config::{DtSpec, RunConfig};
use initial::initial_field;
use output::{energy_csv_path, field_path, strided, write_energy_csv, write_field, write_json, SUMMARY_FILE};

/// Everything derived from a config before any path runs.
#[derive(Clone, Debug)]
pub struct Setup {
    pub grid: GridSpec,
    pub weight: WeightModel<f64>,
    pub params: SpdeParams<f64>,
    pub alpha: f64,
    pub h: HSpec,
    pub pinching: PinchingReport,
    pub steps: usize,
}

impl Setup {
    pub fn resolve(cfg: &RunConfig) -> Result<Self> {
        Self::resolve_for_dt(cfg, cfg.epsilon)
    }

    /// Like [`Setup::resolve`], with an automatic step sized for viscosity `eps_for_dt`.
    pub fn resolve_for_dt(cfg: &RunConfig, eps_for_dt: f64) -> Result<Self> {
        let grid = GridSpec::new(cfg.grid_dim, cfg.grid_n)?;
        let weight = WeightModel::from_preset(cfg.weight_preset, cfg.weight_c, &cfg.weight_x0, cfg.xi, grid)?;
        if !(cfg.t > 0.0) || !cfg.t.is_finite() {
            return Err(Error::Config(format!("params.t must be positive, got {}", cfg.t)));
        }
        if cfg.output_stride == 0 {
            return Err(Error::Config("output.stride must be at least 1".into()));
        }
        let (dt, steps) = match cfg.dt {
            DtSpec::Auto => {
                if !(cfg.cfl_safety > 0.0) {
                    return Err(Error::Config("params.cfl_safety must be positive".into()));
                }
                let bound = cfl_dt(eps_for_dt.max(0.0), cfg.xi.max(0.0), &weight, cfg.cfl_safety);
                let steps = (cfg.t / bound).ceil().max(1.0) as usize;
                (cfg.t / steps as f64, steps)
            }
            DtSpec::Fixed(dt) => {
                if !(dt > 0.0) {
                    return Err(Error::Config(format!("params.dt must be positive, got {dt}")));
                }
                (dt, step_count(cfg.t, dt))
            }
        };
        let params = SpdeParams::new(cfg.epsilon, cfg.xi, cfg.lambda, dt, cfg.scheme)?
            .with_blowup_threshold(cfg.blowup_threshold)?;
        let alpha = 0.5 * alpha_from_delta(cfg.pinching_delta)?;
        let pinching = check_pinching(&weight, cfg.pinching_delta)?;
        let h = HSpec::by_name(&cfg.energy_h, cfg.energy_h_m, alpha, cfg.epsilon)?;
        Ok(Self { grid, weight, params, alpha, h, pinching, steps })
    }

    /// Simulated horizon `steps·dt` (equals `T` for the automatic step).
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.params.dt
    }

    pub fn bias_budget(&self, energy_scale: f64) -> f64 {
        bias_budget(self.params.dt, self.grid.spacing::<f64>(), energy_scale)
    }
}

/// One simulated path with reports at every step.
#[derive(Clone, Debug)]
pub struct PathOutcome {
    pub index: usize,
    pub seed: u64,
    pub initial: ScalarField<f64>,
    pub reports: Vec<EnergyReport>,
    pub final_state: State<f64>,
    pub blowup: Option<BlowupInfo>,
}

impl PathOutcome {
    pub fn initial_grad_sup(&self) -> f64 {
        gradient_c(&self.initial).sup_norm()
    }
}

pub fn run_one(setup: &Setup, cfg: &RunConfig, index: usize) -> Result<PathOutcome> {
    run_one_with(setup, cfg, index, &setup.params)
}

fn run_one_with(setup: &Setup, cfg: &RunConfig, index: usize, params: &SpdeParams<f64>) -> Result<PathOutcome> {
    let seed = path_seed(cfg.base_seed, index as u64);
    let initial = initial_field(cfg, setup.grid, seed)?;
    let path = sample_path(setup.horizon(), params.dt, seed)?;
    let mut rec = EnergyRecorder::new(&setup.weight, params, setup.alpha, setup.h);
    let traj = run_path(&initial, setup.horizon(), &path, params, &setup.weight, &mut [&mut rec], 1)?;
    Ok(PathOutcome { index, seed, initial, reports: rec.reports, final_state: traj.final_state, blowup: traj.blowup })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::Config(e.to_string()))
}

/// Runs paths `0..cfg.paths` on `cfg.workers` threads; results are in index order.
pub fn run_paths(setup: &Setup, cfg: &RunConfig) -> Result<Vec<PathOutcome>> {
    pool(cfg.workers)?.install(|| (0..cfg.paths).into_par_iter().map(|i| run_one(setup, cfg, i)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleVerdicts {
    pub paths_used: usize,
    pub paths_blown_up: usize,
    pub k: f64,
    pub bias_budget: f64,
    pub energy_initial_mean: f64,
    pub energy_final_mean: f64,
    pub supermartingale: bool,
    pub supermartingale_worst_excess: f64,
    pub h_energy_supermartingale: bool,
    pub ledger: bool,
    pub ledger_final_mean: f64,
    pub ledger_final_std_err: f64,
    pub ledger_worst_excess: f64,
    pub l_form: bool,
    pub l_form_lipschitz: f64,
    pub l_form_final_mean: f64,
    pub max_principle: bool,
    pub max_principle_slack: f64,
    pub max_principle_violating_samples: usize,
    pub max_principle_total_samples: usize,
    pub max_principle_violating_paths: usize,
    pub coercivity_slack_min: f64,
}

/// Statistical verdicts over the paths that did not blow up.
pub fn ensemble_verdicts(setup: &Setup, cfg: &RunConfig, outcomes: &[PathOutcome]) -> Result<EnsembleVerdicts> {
    let kept: Vec<&PathOutcome> = outcomes.iter().filter(|o| o.blowup.is_none()).collect();
    let ensemble: Vec<Vec<EnergyReport>> = kept.iter().map(|o| o.reports.clone()).collect();
    if ensemble.len() < MIN_PATHS {
        return Err(Error::TooFewPaths { required: MIN_PATHS, got: ensemble.len() });
    }
    let p = &setup.params;
    let e0 = ensemble.iter().map(|r| r[0].dirichlet).sum::<f64>() / ensemble.len() as f64;
    let budget = setup.bias_budget(e0);
    let sm = supermartingale_test(&ensemble, cfg.k, budget)?;
    let h0 = ensemble.iter().map(|r| r[0].h_energy).sum::<f64>() / ensemble.len() as f64;
    let hsm = supermartingale_test_by(&ensemble, cfg.k, setup.bias_budget(h0), |r| r.h_energy)?;
    let ledger = ensemble_ledger(&ensemble, p.epsilon, p.lambda, cfg.k, budget)?;
    let l_emp = ensemble.iter().flatten().map(|r| r.grad_sup).fold(0.0, f64::max);
    let l_form = ensemble_l_form(&ensemble, l_emp, cfg.k, budget)?;

    let mut violating_samples = 0;
    let mut violating_paths = 0;
    let mut total = 0;
    let mut slack_min = f64::INFINITY;
    for o in &kept {
        let l = cfg.initial_lipschitz.unwrap_or_else(|| o.initial_grad_sup());
        let v = max_principle_violations(&o.reports, l, cfg.max_slack);
        violating_samples += v;
        violating_paths += usize::from(v > 0);
        total += o.reports.len();
        for u in [&o.initial, &o.final_state.u] {
            slack_min = slack_min.min(coercivity_check(u, p, &setup.weight));
        }
    }
    Ok(EnsembleVerdicts {
        paths_used: kept.len(),
        paths_blown_up: outcomes.len() - kept.len(),
        k: cfg.k,
        bias_budget: budget,
        energy_initial_mean: sm.mean_energy[0],
        energy_final_mean: *sm.mean_energy.last().unwrap_or(&f64::NAN),
        supermartingale: sm.monotone_within,
        supermartingale_worst_excess: sm.worst_excess,
        h_energy_supermartingale: hsm.monotone_within,
        ledger: ledger.within,
        ledger_final_mean: ledger.final_value(),
        ledger_final_std_err: *ledger.std_err.last().unwrap_or(&0.0),
        ledger_worst_excess: ledger.worst_excess,
        l_form: l_form.within,
        l_form_lipschitz: l_emp,
        l_form_final_mean: l_form.final_value(),
        max_principle: violating_samples == 0,
        max_principle_slack: cfg.max_slack,
        max_principle_violating_samples: violating_samples,
        max_principle_total_samples: total,
        max_principle_violating_paths: violating_paths,
        coercivity_slack_min: slack_min,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSummary {
    pub index: usize,
    pub seed: u64,
    pub blowup: Option<BlowupInfo>,
    pub final_t: f64,
    pub final_dirichlet: f64,
    pub grad_sup_max: f64,
    pub ledger: f64,
}

impl PathSummary {
    fn of(o: &PathOutcome, p: &SpdeParams<f64>) -> Self {
        Self {
            index: o.index,
            seed: o.seed,
            blowup: o.blowup.clone(),
            final_t: o.final_state.t,
            final_dirichlet: o.reports.last().map_or(f64::NAN, |r| r.dirichlet),
            grad_sup_max: o.reports.iter().map(|r| r.grad_sup).fold(0.0, f64::max),
            ledger: dissipation_ledger(&o.reports, p.epsilon, p.lambda),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub gap: f64,
    /// `gap / value`, absent at value 0.
    pub gap_ratio: Option<f64>,
    pub blown_up: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub parameter: &'static str,
    pub rows: Vec<SweepRow>,
    pub monotone: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub dt: f64,
    pub steps: usize,
    pub horizon: f64,
    pub h: f64,
    pub alpha: f64,
    pub energy_profile: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub config: BTreeMap<String, String>,
    pub resolved: Resolved,
    pub pinching: PinchingReport,
    pub validators: Option<SuiteReport>,
    pub verdicts: Option<EnsembleVerdicts>,
    pub sweep: Option<SweepTable>,
    pub paths: Vec<PathSummary>,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    fn new(command: &'static str, cfg: &RunConfig, setup: &Setup, validators: Option<SuiteReport>) -> Self {
        Self {
            command,
            config: cfg.to_map(),
            resolved: Resolved {
                dt: setup.params.dt,
                steps: setup.steps,
                horizon: setup.horizon(),
                h: setup.grid.spacing(),
                alpha: setup.alpha,
                energy_profile: setup.h.name(),
            },
            pinching: setup.pinching,
            validators,
            verdicts: None,
            sweep: None,
            paths: vec![],
            wall_clock_seconds: 0.0,
        }
    }

    /// Human-readable digest for the terminal.
    pub fn lines(&self) -> Vec<String> {
        let r = &self.resolved;
        let mut out = vec![
            format!("{}: dt = {:.6e}, steps = {}, h = {:.6e}, α = {}", self.command, r.dt, r.steps, r.h, r.alpha),
            format!(
                "pinching δ = {}: {} (min margin {:.3e})",
                self.pinching.delta,
                if self.pinching.satisfied { "satisfied" } else { "NOT satisfied" },
                self.pinching.min_margin
            ),
        ];
        let blown: Vec<usize> = self.paths.iter().filter(|p| p.blowup.is_some()).map(|p| p.index).collect();
        if !blown.is_empty() {
            out.push(format!("blow-up on paths {blown:?}"));
        }
        if let Some(v) = &self.verdicts {
            out.push(format!(
                "supermartingale: {} (E0 = {:.6e}, E(T) = {:.6e}, budget {:.3e}, worst excess {:.3e})",
                v.supermartingale, v.energy_initial_mean, v.energy_final_mean, v.bias_budget, v.supermartingale_worst_excess
            ));
            out.push(format!(
                "dissipation ledger: {} ({:.3e} ± {:.1e})",
                v.ledger, v.ledger_final_mean, v.ledger_final_std_err
            ));
            out.push(format!("L-form ledger (L = {:.4}): {} ({:.3e})", v.l_form_lipschitz, v.l_form, v.l_form_final_mean));
            out.push(format!(
                "max principle: {} ({} of {} samples above L·(1+{}))",
                v.max_principle, v.max_principle_violating_samples, v.max_principle_total_samples, v.max_principle_slack
            ));
            out.push(format!("coercivity slack min: {:.3e}", v.coercivity_slack_min));
        }
        if let Some(s) = &self.sweep {
            out.push(format!("{:>10} {:>14} {:>14}", s.parameter, "gap", "gap/value"));
            for row in &s.rows {
                let ratio = row.gap_ratio.map_or_else(|| "-".into(), |x| format!("{x:.6e}"));
                out.push(format!("{:>10} {:>14.6e} {:>14}", row.value, row.gap, ratio));
            }
            out.push(format!("monotone: {}", s.monotone));
        }
        if self.paths.len() == 1 {
            let p = &self.paths[0];
            out.push(format!(
                "path {}: seed {}, final t = {}, dirichlet {:.6e}, ledger {:.3e}",
                p.index, p.seed, p.final_t, p.final_dirichlet, p.ledger
            ));
        }
        out.push(format!("wall clock: {:.2} s", self.wall_clock_seconds));
        out
    }
}

/// Runs the validator suite; an experiment only proceeds when every check passes.
pub fn validator_gate(cfg: &RunConfig) -> Result<Option<SuiteReport>> {
    if cfg.validate_trials == 0 {
        return Ok(None);
    }
    let report = ValidatorSuite::new(cfg.validate_trials, cfg.base_seed).run();
    if !report.passed() {
        return Err(Error::InvalidInput(format!("validator suite failed: {:?}", report.failed_checks())));
    }
    Ok(Some(report))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_path_files(dir: &Path, o: &PathOutcome, stride: usize) -> Result<()> {
    write_energy_csv(&energy_csv_path(dir, o.index), &strided(&o.reports, stride))?;
    write_field(&field_path(dir, o.index), &o.final_state.u)
}

pub fn cmd_validate(trials: usize, seed: u64) -> SuiteReport {
    ValidatorSuite::new(trials, seed).run()
}

/// One path: energy CSV, final field and summary.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let validators = validator_gate(cfg)?;
    let setup = Setup::resolve(cfg)?;
    let outcome = run_one(&setup, cfg, 0)?;
    prepare_dir(&cfg.output_dir)?;
    write_path_files(&cfg.output_dir, &outcome, cfg.output_stride)?;
    let mut summary = RunSummary::new("simulate", cfg, &setup, validators);
    summary.paths.push(PathSummary::of(&outcome, &setup.params));
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_json(&cfg.output_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// `M ≥ 30` paths: per-path CSVs and fields, aggregate verdicts.
pub fn cmd_ensemble(cfg: &RunConfig) -> Result<RunSummary> {
    if cfg.paths < MIN_PATHS {
        return Err(Error::TooFewPaths { required: MIN_PATHS, got: cfg.paths });
    }
    let start = Instant::now();
    let validators = validator_gate(cfg)?;
    let setup = Setup::resolve(cfg)?;
    let outcomes = run_paths(&setup, cfg)?;
    prepare_dir(&cfg.output_dir)?;
    for o in &outcomes {
        write_path_files(&cfg.output_dir, o, cfg.output_stride)?;
    }
    let mut summary = RunSummary::new("ensemble", cfg, &setup, validators);
    summary.verdicts = Some(ensemble_verdicts(&setup, cfg, &outcomes)?);
    summary.paths = outcomes.iter().map(|o| PathSummary::of(o, &setup.params)).collect();
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_json(&cfg.output_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Final fields of path 0 for each parameter set, all driven by one Wiener path and one `dt`.
fn common_path_finals(
    setup: &Setup,
    cfg: &RunConfig,
    params: &[SpdeParams<f64>],
) -> Result<Vec<(ScalarField<f64>, Option<BlowupInfo>)>> {
    let seed = path_seed(cfg.base_seed, 0);
    let u0 = initial_field(cfg, setup.grid, seed)?;
    let path = sample_path(setup.horizon(), setup.params.dt, seed)?;
    params
        .iter()
        .map(|p| {
            let t = run_path(&u0, setup.horizon(), &path, p, &setup.weight, &mut [], 1)?;
            Ok((t.final_state.u, t.blowup))
        })
        .collect()
}

fn sweep_rows(values: &[f64], finals: &[(ScalarField<f64>, Option<BlowupInfo>)], w: &WeightModel<f64>) -> Vec<SweepRow> {
    let (reference, _) = finals.last().expect("reference run appended last");
    values
        .iter()
        .zip(finals)
        .map(|(&value, (u, blowup))| {
            let gap = if blowup.is_some() { f64::NAN } else { small_noise_gap(u, reference, w) };
            SweepRow { value, gap, gap_ratio: (value != 0.0).then(|| gap / value), blown_up: blowup.is_some() }
        })
        .collect()
}

fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<()> {
    let mut text = format!("{},gap,gap_ratio\n", table.parameter);
    for r in &table.rows {
        let ratio = r.gap_ratio.map_or_else(String::new, |x| format!("{x:.16e}"));
        text.push_str(&format!("{},{:.16e},{}\n", r.value, r.gap, ratio));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Viscous sweep: `‖u^ε(T) - u⁰(T)‖` along a descending list, common path and `dt`.
pub fn cmd_sweep_eps(cfg: &RunConfig) -> Result<RunSummary> {
    let eps = &cfg.sweep_eps;
    if eps.is_empty() || eps.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::Config("sweep.eps must be a non-empty list of non-negative values".into()));
    }
    if eps.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Config("sweep.eps must be descending".into()));
    }
    let start = Instant::now();
    let validators = validator_gate(cfg)?;
    let setup = Setup::resolve_for_dt(cfg, eps[0])?;
    let mut params = eps.iter().map(|&e| setup.params.with_epsilon(e)).collect::<Result<Vec<_>>>()?;
    params.push(setup.params.with_epsilon(0.0)?);
    let finals = common_path_finals(&setup, cfg, &params)?;
    let rows = sweep_rows(eps, &finals, &setup.weight);
    let monotone = rows.windows(2).all(|w| w[1].gap <= w[0].gap * (1.0 + 1e-12));
    let table = SweepTable { parameter: "epsilon", rows, monotone };
    prepare_dir(&cfg.output_dir)?;
    write_sweep_csv(&cfg.output_dir.join("sweep_eps.csv"), &table)?;
    let mut summary = RunSummary::new("sweep-eps", cfg, &setup, validators);
    summary.sweep = Some(table);
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_json(&cfg.output_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Small-noise sweep: `‖u^λ(T) - u⁰(T)‖` on a common path and `dt`.
pub fn cmd_sweep_lambda(cfg: &RunConfig) -> Result<RunSummary> {
    let lambdas = &cfg.sweep_lambda;
    if lambdas.is_empty() {
        return Err(Error::Config("sweep.lambda must not be empty".into()));
    }
    let start = Instant::now();
    let validators = validator_gate(cfg)?;
    let setup = Setup::resolve(cfg)?;
    let mut params = lambdas.iter().map(|&l| setup.params.with_lambda(l)).collect::<Result<Vec<_>>>()?;
    params.push(setup.params.with_lambda(0.0)?);
    let finals = common_path_finals(&setup, cfg, &params)?;
    let rows = sweep_rows(lambdas, &finals, &setup.weight);
    let mut positive: Vec<&SweepRow> = rows.iter().filter(|r| r.value > 0.0).collect();
    positive.sort_by(|a, b| b.value.total_cmp(&a.value));
    let monotone = positive.windows(2).all(|w| w[1].gap < w[0].gap)
        && rows.iter().filter(|r| r.value == 0.0).all(|r| r.gap == 0.0);
    let table = SweepTable { parameter: "lambda", rows, monotone };
    prepare_dir(&cfg.output_dir)?;
    write_sweep_csv(&cfg.output_dir.join("sweep_lambda.csv"), &table)?;
    let mut summary = RunSummary::new("sweep-lambda", cfg, &setup, validators);
    summary.sweep = Some(table);
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_json(&cfg.output_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

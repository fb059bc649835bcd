//! Command implementations. Each command consumes a validated scenario,
//! runs the corresponding experiment, writes its artifacts, and returns the
//! process exit code: 0 on success, 4 when a requested check or
//! certification fails. Configuration and solver errors are surfaced as
//! `FlowError` and mapped to exit codes by the caller.

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use mmflow_core::attractor::{
    attractor_approximate, decay_fit, lyapunov_check, rest_points_solve,
};
use mmflow_core::banach::{key_estimate_check, BanachBackend};
use mmflow_core::engine::{
    edi_residual, energy_solution_check, gmm_convergence_study, run_mm, MMConfig, MMRun,
    StateBits, StepSpec,
};
use mmflow_core::error::{FlowError, Result};
use mmflow_core::metric::MetricBackend;
use mmflow_core::wasserstein::{
    gibbs_stationary, wasserstein_slope, QuantileMeasure, WassersteinBackend,
};

use crate::artifacts::{
    ensure_dir, num, write_json, write_table_csv, write_trajectory_csv,
};
use crate::scenario::{ExperimentSpec, Instance, Scenario};

pub struct Ctx {
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub write_csv: bool,
    pub write_json: bool,
    pub quiet: bool,
}

impl Ctx {
    fn note(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn state_columns(instance: &Instance) -> Vec<String> {
    match instance {
        Instance::Banach { backend, .. } => {
            (0..backend.space.dim).map(|i| format!("state_{i}")).collect()
        }
        Instance::Wasserstein { backend, .. } => {
            (1..=backend.n).map(|i| format!("q_{i}")).collect()
        }
    }
}

fn require_initial_banach(instance: &Instance) -> Result<(&BanachBackend, Vec<f64>)> {
    match instance {
        Instance::Banach { backend, initial } => {
            let u0 = initial.clone().ok_or_else(|| {
                FlowError::Input("this experiment requires backend.initial".into())
            })?;
            Ok((backend, u0))
        }
        Instance::Wasserstein { .. } => unreachable!("dispatched by backend kind"),
    }
}

fn require_initial_wasserstein(
    instance: &Instance,
) -> Result<(&WassersteinBackend, QuantileMeasure)> {
    match instance {
        Instance::Wasserstein { backend, initial } => {
            let mu0 = initial.clone().ok_or_else(|| {
                FlowError::Input("this experiment requires backend.initial".into())
            })?;
            Ok((backend, mu0))
        }
        Instance::Banach { .. } => unreachable!("dispatched by backend kind"),
    }
}

fn flow_summary<B>(b: &B, run: &MMRun<B::State>) -> Value
where
    B: MetricBackend,
{
    let last = run.states.len() - 1;
    json!({
        "p": num(run.config.p),
        "nodes": run.states.len(),
        "horizon": num(run.partition.horizon()),
        "energy_initial": num(run.energies[0]),
        "energy_final": num(run.energies[last]),
        "slope_final": num(b.slope(&run.states[last])),
        "inner_iterations": run.inner_iterations,
    })
}

// ---------------------------------------------------------------- run

pub fn cmd_run(ctx: &Ctx, instance: &Instance) -> Result<i32> {
    let cfg = ctx.scenario.mm_config();
    match instance {
        Instance::Banach { .. } => {
            let (b, u0) = require_initial_banach(instance)?;
            let run = run_mm(b, &u0, &cfg)?;
            finish_run(ctx, instance, b, &run, |s| s.clone(), json!({}))
        }
        Instance::Wasserstein { .. } => {
            let (b, mu0) = require_initial_wasserstein(instance)?;
            let run = run_mm(b, &mu0, &cfg)?;
            let horizon = run.partition.horizon();
            let v0 = run.states[0].variance();
            let v1 = run.states[run.states.len() - 1].variance();
            let extra = json!({
                "variance_initial": num(v0),
                "variance_final": num(v1),
                "variance_rate": num((v1 - v0) / horizon),
            });
            finish_run(ctx, instance, b, &run, |s| s.quantiles().to_vec(), extra)
        }
    }
}

fn finish_run<B>(
    ctx: &Ctx,
    instance: &Instance,
    b: &B,
    run: &MMRun<B::State>,
    row: impl Fn(&B::State) -> Vec<f64>,
    extra: Value,
) -> Result<i32>
where
    B: MetricBackend,
    B::State: Clone,
{
    let traj = run.trajectory(b);
    if ctx.write_csv {
        let path = ctx.path("trajectory.csv");
        write_trajectory_csv(&path, &ctx.scenario, &traj, &state_columns(instance), row)?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    if ctx.write_json {
        let mut summary = flow_summary(b, run);
        if let (Some(obj), Some(ex)) = (summary.as_object_mut(), extra.as_object()) {
            for (k, v) in ex {
                obj.insert(k.clone(), v.clone());
            }
        }
        let path = ctx.path("summary.json");
        write_json(&path, &ctx.scenario, summary)?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    ctx.note(&format!(
        "run: {} nodes, final energy {:.6e}",
        run.states.len(),
        run.energies[run.energies.len() - 1]
    ));
    Ok(0)
}

// ---------------------------------------------------------------- check

struct CheckLedger {
    entries: Vec<Value>,
    all_pass: bool,
}

impl CheckLedger {
    fn new() -> Self {
        CheckLedger {
            entries: Vec::new(),
            all_pass: true,
        }
    }

    fn record(&mut self, ctx: &Ctx, name: &str, pass: bool, details: Value) {
        ctx.note(&format!(
            "check {name}: {}",
            if pass { "pass" } else { "FAIL" }
        ));
        self.entries.push(json!({
            "name": name,
            "pass": pass,
            "details": details,
        }));
        self.all_pass &= pass;
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_check(
    ctx: &Ctx,
    instance: &Instance,
    edi: bool,
    energy_solution: bool,
    key_estimate: bool,
    lyapunov: bool,
    gibbs: bool,
    edi_points: usize,
    edi_tol: f64,
    energy_solution_tol: f64,
    gibbs_tol: f64,
) -> Result<i32> {
    let cfg = ctx.scenario.mm_config();
    let mut ledger = CheckLedger::new();
    match instance {
        Instance::Banach { .. } => {
            if gibbs {
                return Err(FlowError::Input(
                    "the gibbs check requires the wasserstein1d backend".into(),
                ));
            }
            let (b, u0) = require_initial_banach(instance)?;
            let run = run_mm(b, &u0, &cfg)?;
            common_checks(
                ctx, b, &run, &mut ledger, edi, energy_solution, lyapunov, edi_points, edi_tol,
                energy_solution_tol,
            )?;
            if key_estimate {
                // An unusable certificate is a failed check, not a config
                // error: the scenario asked for a guarantee that does not
                // hold.
                match key_estimate_check(&b.functional, &b.space, 1000, cfg.seed) {
                    Ok(rep) => ledger.record(
                        ctx,
                        "key_estimate",
                        rep.violations == 0,
                        json!({
                            "samples": rep.samples,
                            "violations": rep.violations,
                            "worst_left_margin": num(rep.worst_left_margin),
                            "worst_right_margin": num(rep.worst_right_margin),
                        }),
                    ),
                    Err(FlowError::Domain(msg)) => {
                        ledger.record(ctx, "key_estimate", false, json!({ "error": msg }))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Instance::Wasserstein { .. } => {
            if key_estimate {
                return Err(FlowError::Input(
                    "the key_estimate check requires the banach backend".into(),
                ));
            }
            let (b, mu0) = require_initial_wasserstein(instance)?;
            let run = run_mm(b, &mu0, &cfg)?;
            common_checks(
                ctx, b, &run, &mut ledger, edi, energy_solution, lyapunov, edi_points, edi_tol,
                energy_solution_tol,
            )?;
            if gibbs {
                match gibbs_stationary(&b.spec, b.n, b.p) {
                    Ok(stat) => {
                        let rep = wasserstein_slope(&b.spec, &stat);
                        ledger.record(
                            ctx,
                            "gibbs",
                            rep.value <= gibbs_tol,
                            json!({
                                "slope": num(rep.value),
                                "excluded_mass": num(rep.excluded_mass),
                                "tolerance": num(gibbs_tol),
                            }),
                        );
                    }
                    Err(FlowError::Domain(msg)) => {
                        ledger.record(ctx, "gibbs", false, json!({ "error": msg }))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if ctx.write_json {
        let path = ctx.path("report.json");
        write_json(
            &path,
            &ctx.scenario,
            json!({ "checks": ledger.entries, "all_pass": ledger.all_pass }),
        )?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    Ok(if ledger.all_pass { 0 } else { 4 })
}

#[allow(clippy::too_many_arguments)]
fn common_checks<B>(
    ctx: &Ctx,
    b: &B,
    run: &MMRun<B::State>,
    ledger: &mut CheckLedger,
    edi: bool,
    energy_solution: bool,
    lyapunov: bool,
    edi_points: usize,
    edi_tol: f64,
    energy_solution_tol: f64,
) -> Result<()>
where
    B: MetricBackend,
    B::State: Clone,
{
    if edi {
        // refine the EDI ledger on up to eight evenly spaced intervals
        let m = run.partition.len();
        let picks = m.min(8);
        let mut worst = 0.0f64;
        for k in 0..picks {
            let interval = 1 + k * m / picks;
            let r = edi_residual(b, run, interval, edi_points)?;
            worst = worst.max(r.abs());
        }
        ledger.record(
            ctx,
            "edi",
            worst <= edi_tol,
            json!({
                "max_abs_residual": num(worst),
                "intervals_checked": picks,
                "quadrature_points": edi_points,
                "tolerance": num(edi_tol),
            }),
        );
    }
    if energy_solution {
        let rep = energy_solution_check(b, run)?;
        ledger.record(
            ctx,
            "energy_solution",
            rep.max_defect <= energy_solution_tol,
            json!({
                "max_defect": num(rep.max_defect),
                "tolerance": num(energy_solution_tol),
            }),
        );
    }
    if lyapunov {
        let traj = run.trajectory(b);
        let slack = 10.0 * run.config.eps_prox * (1.0 + run.energies[0].abs());
        let horizon = run.partition.horizon();
        let verdict = lyapunov_check(&traj, run.config.p, (0.0, horizon), slack)?;
        ledger.record(
            ctx,
            "lyapunov",
            verdict.monotone,
            json!({
                "max_uptick": num(verdict.max_uptick),
                "kinetic_integral": num(verdict.kinetic_integral),
                "slack": num(slack),
            }),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- attractor

pub fn sample_initial_states(
    instance: &Instance,
    count: usize,
    sample_box: [f64; 2],
    seed: u64,
) -> Result<SampledStates> {
    let [lo, hi] = sample_box;
    if !(hi > lo) {
        return Err(FlowError::Input(
            "sample_box must satisfy lo < hi".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match instance {
        Instance::Banach { backend, .. } => {
            let dim = backend.space.dim;
            let states = (0..count)
                .map(|_| (0..dim).map(|_| rng.gen_range(lo..hi)).collect())
                .collect();
            Ok(SampledStates::Banach(states))
        }
        Instance::Wasserstein { backend, .. } => {
            // uniform measures with endpoints drawn from the box
            let states = (0..count)
                .map(|_| {
                    let mut a = rng.gen_range(lo..hi);
                    let mut b2 = rng.gen_range(lo..hi);
                    if b2 < a {
                        std::mem::swap(&mut a, &mut b2);
                    }
                    if b2 - a < 1e-6 * (hi - lo) {
                        b2 = a + 1e-6 * (hi - lo);
                    }
                    QuantileMeasure::from_quantile_fn(backend.n, backend.p, |theta| {
                        a + (b2 - a) * theta
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampledStates::Wasserstein(states))
        }
    }
}

pub enum SampledStates {
    Banach(Vec<Vec<f64>>),
    Wasserstein(Vec<QuantileMeasure>),
}

pub fn cmd_attractor(
    ctx: &Ctx,
    instance: &Instance,
    count: usize,
    sample_box: [f64; 2],
    cluster_radius: f64,
    snapshots: usize,
) -> Result<i32> {
    let cfg = ctx.scenario.mm_config();
    let (tau, horizon) = match cfg.steps {
        StepSpec::Uniform { tau, horizon } => (tau, horizon),
        _ => {
            return Err(FlowError::Input(
                "the attractor experiment requires flow.tau and flow.horizon".into(),
            ));
        }
    };
    let sampled = sample_initial_states(instance, count, sample_box, cfg.seed)?;
    match (instance, sampled) {
        (Instance::Banach { backend, .. }, SampledStates::Banach(states)) => {
            let rep = attractor_approximate(
                backend,
                states,
                horizon,
                snapshots,
                tau,
                cluster_radius,
                &cfg,
            )?;
            finish_attractor(ctx, backend, rep, |s: &Vec<f64>| s.clone())
        }
        (Instance::Wasserstein { backend, .. }, SampledStates::Wasserstein(states)) => {
            let rep = attractor_approximate(
                backend,
                states,
                horizon,
                snapshots,
                tau,
                cluster_radius,
                &cfg,
            )?;
            finish_attractor(ctx, backend, rep, |s: &QuantileMeasure| {
                s.quantiles().to_vec()
            })
        }
        _ => unreachable!("sampling matches the backend kind"),
    }
}

fn finish_attractor<B>(
    ctx: &Ctx,
    b: &B,
    rep: mmflow_core::attractor::AttractorReport<B::State>,
    row: impl Fn(&B::State) -> Vec<f64>,
) -> Result<i32>
where
    B: MetricBackend,
{
    if ctx.write_csv {
        let rows: Vec<Vec<f64>> = rep.approach.iter().map(|&(t, e)| vec![t, e]).collect();
        let path = ctx.path("study.csv");
        write_table_csv(&path, &ctx.scenario, &["t", "hausdorff_gap"], &rows)?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    if ctx.write_json {
        let reps: Vec<Value> = rep
            .attractor
            .iter()
            .map(|p| {
                json!({
                    "energy": num(p.energy),
                    "slope": num(b.slope(&p.state)),
                    "state": row(&p.state),
                })
            })
            .collect();
        let payload = json!({
            "certified": rep.certified,
            "invariance_defect": num(rep.invariance_defect),
            "attractor_size": rep.attractor.len(),
            "representatives": reps,
            "approach": rep.approach.iter()
                .map(|&(t, e)| json!([num(t), num(e)]))
                .collect::<Vec<_>>(),
            "failed_points": rep.failures.len(),
        });
        let path = ctx.path("report.json");
        write_json(&path, &ctx.scenario, payload)?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    ctx.note(&format!(
        "attractor: {} representatives, certified = {}",
        rep.attractor.len(),
        rep.certified
    ));
    Ok(if rep.certified { 0 } else { 4 })
}

// ---------------------------------------------------------------- decay

pub fn cmd_decay(
    ctx: &Ctx,
    instance: &Instance,
    t_start: f64,
    rate_tolerance: f64,
) -> Result<i32> {
    let cfg = ctx.scenario.mm_config();
    match instance {
        Instance::Banach { .. } => {
            let (b, u0) = require_initial_banach(instance)?;
            decay_generic(ctx, instance, b, u0, &cfg, t_start, rate_tolerance, |s| {
                s.clone()
            })
        }
        Instance::Wasserstein { .. } => {
            let (b, mu0) = require_initial_wasserstein(instance)?;
            decay_generic(ctx, instance, b, mu0, &cfg, t_start, rate_tolerance, |s| {
                s.quantiles().to_vec()
            })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn decay_generic<B>(
    ctx: &Ctx,
    instance: &Instance,
    b: &B,
    u0: B::State,
    cfg: &MMConfig,
    t_start: f64,
    rate_tolerance: f64,
    row: impl Fn(&B::State) -> Vec<f64>,
) -> Result<i32>
where
    B: MetricBackend,
    B::State: StateBits + Clone,
{
    let conv = b.convexity().ok_or_else(|| {
        FlowError::Domain("the decay experiment needs a convexity certificate".into())
    })?;
    if conv.lambda <= 0.0 {
        return Err(FlowError::Domain(format!(
            "the decay experiment needs lambda > 0, got {}",
            conv.lambda
        )));
    }
    let rest = b.exact_minimizer().ok_or_else(|| {
        FlowError::Domain("the decay experiment needs the exact minimizer".into())
    })?;
    let run = run_mm(b, &u0, cfg)?;
    let traj = run.trajectory(b);
    let fit = decay_fit(b, &traj, &rest, conv.lambda, cfg.p, t_start)?;
    let rate_ok = (fit.rate - fit.target).abs() <= rate_tolerance * fit.target;
    let pass = rate_ok && fit.distance_bound_ok;

    if ctx.write_csv {
        let path = ctx.path("trajectory.csv");
        write_trajectory_csv(&path, &ctx.scenario, &traj, &state_columns(instance), row)?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    if ctx.write_json {
        let payload = json!({
            "rate": num(fit.rate),
            "target": num(fit.target),
            "rate_tolerance": num(rate_tolerance),
            "rate_ok": rate_ok,
            "points_used": fit.points_used,
            "distance_bound_ok": fit.distance_bound_ok,
            "envelope_excess": num(fit.envelope_excess),
            "pass": pass,
        });
        let path = ctx.path("report.json");
        write_json(&path, &ctx.scenario, payload)?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    ctx.note(&format!(
        "decay: fitted rate {:.6} against target {:.6} ({})",
        fit.rate,
        fit.target,
        if pass { "pass" } else { "FAIL" }
    ));
    Ok(if pass { 0 } else { 4 })
}

// ---------------------------------------------------------------- restpoints

pub fn cmd_restpoints(
    ctx: &Ctx,
    instance: &Instance,
    seeds: &Option<Vec<Vec<f64>>>,
    sample_box: &Option<[f64; 2]>,
    count: usize,
    tol: f64,
    dedup_radius: f64,
) -> Result<i32> {
    let cfg = ctx.scenario.mm_config();
    match instance {
        Instance::Banach { backend, .. } => {
            let dim = backend.space.dim;
            let seed_states: Vec<Vec<f64>> = match (seeds, sample_box) {
                (Some(list), _) => {
                    for s in list {
                        if s.len() != dim {
                            return Err(FlowError::Input(format!(
                                "rest-point seed has length {}, expected {dim}",
                                s.len()
                            )));
                        }
                    }
                    list.clone()
                }
                (None, Some(bx)) => match sample_initial_states(instance, count, *bx, cfg.seed)? {
                    SampledStates::Banach(s) => s,
                    _ => unreachable!(),
                },
                (None, None) => {
                    return Err(FlowError::Input(
                        "the restpoints experiment needs seeds or sample_box".into(),
                    ));
                }
            };
            let rep = rest_points_solve(backend, &seed_states, tol, dedup_radius, 10_000);
            finish_restpoints(ctx, rep, |s: &Vec<f64>| s.clone())
        }
        Instance::Wasserstein { backend, .. } => {
            let seed_states: Vec<QuantileMeasure> = match (seeds, sample_box) {
                (Some(list), _) => list
                    .iter()
                    .map(|q| {
                        if q.len() != backend.n {
                            return Err(FlowError::Input(format!(
                                "rest-point seed has length {}, expected {}",
                                q.len(),
                                backend.n
                            )));
                        }
                        QuantileMeasure::new(q.clone(), backend.p)
                    })
                    .collect::<Result<Vec<_>>>()?,
                (None, Some(bx)) => match sample_initial_states(instance, count, *bx, cfg.seed)? {
                    SampledStates::Wasserstein(s) => s,
                    _ => unreachable!(),
                },
                (None, None) => {
                    return Err(FlowError::Input(
                        "the restpoints experiment needs seeds or sample_box".into(),
                    ));
                }
            };
            let rep = rest_points_solve(backend, &seed_states, tol, dedup_radius, 10_000);
            finish_restpoints(ctx, rep, |s: &QuantileMeasure| s.quantiles().to_vec())
        }
    }
}

fn finish_restpoints<S>(
    ctx: &Ctx,
    rep: mmflow_core::attractor::RestPointReport<S>,
    row: impl Fn(&S) -> Vec<f64>,
) -> Result<i32> {
    if ctx.write_json {
        let points: Vec<Value> = rep
            .points
            .iter()
            .zip(&rep.slopes)
            .map(|(p, &s)| {
                json!({
                    "energy": num(p.energy),
                    "slope": num(s),
                    "state": row(&p.state),
                })
            })
            .collect();
        let payload = json!({
            "points": points,
            "diameter": num(rep.diameter),
            "unresolved": rep.unresolved,
        });
        let path = ctx.path("report.json");
        write_json(&path, &ctx.scenario, payload)?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    ctx.note(&format!(
        "restpoints: {} found, {} seeds unresolved",
        rep.points.len(),
        rep.unresolved
    ));
    Ok(if rep.points.is_empty() { 4 } else { 0 })
}

// ---------------------------------------------------------------- refine

pub fn cmd_refine(ctx: &Ctx, instance: &Instance, refinements: usize) -> Result<i32> {
    let cfg = ctx.scenario.mm_config();
    match instance {
        Instance::Banach { .. } => {
            let (b, u0) = require_initial_banach(instance)?;
            let rep = gmm_convergence_study(b, &u0, &cfg, refinements)?;
            finish_refine(ctx, instance, b, rep, |s: &Vec<f64>| s.clone())
        }
        Instance::Wasserstein { .. } => {
            let (b, mu0) = require_initial_wasserstein(instance)?;
            let rep = gmm_convergence_study(b, &mu0, &cfg, refinements)?;
            finish_refine(ctx, instance, b, rep, |s: &QuantileMeasure| {
                s.quantiles().to_vec()
            })
        }
    }
}

fn finish_refine<B>(
    ctx: &Ctx,
    instance: &Instance,
    b: &B,
    rep: mmflow_core::engine::GmmReport<B::State>,
    row: impl Fn(&B::State) -> Vec<f64>,
) -> Result<i32>
where
    B: MetricBackend,
    B::State: Clone,
{
    if ctx.write_csv {
        let rows: Vec<Vec<f64>> = rep
            .levels
            .iter()
            .map(|l| vec![l.tau, l.sup_distance_to_prev.unwrap_or(f64::NAN)])
            .collect();
        let path = ctx.path("study.csv");
        write_table_csv(&path, &ctx.scenario, &["tau", "sup_distance_to_prev"], &rows)?;
        ctx.note(&format!("wrote {}", path.display()));

        let traj = rep.finest.trajectory(b);
        let tpath = ctx.path("trajectory.csv");
        write_trajectory_csv(&tpath, &ctx.scenario, &traj, &state_columns(instance), row)?;
        ctx.note(&format!("wrote {}", tpath.display()));
    }
    if ctx.write_json {
        let payload = json!({
            "levels": rep.levels.iter().map(|l| json!({
                "tau": num(l.tau),
                "sup_distance_to_prev": l.sup_distance_to_prev.map(num),
            })).collect::<Vec<_>>(),
            "cauchy_order": rep.cauchy_order.map(num),
            "envelope": rep.envelope.iter()
                .map(|&(t, e, gap)| json!([num(t), num(e), num(gap)]))
                .collect::<Vec<_>>(),
        });
        let path = ctx.path("report.json");
        write_json(&path, &ctx.scenario, payload)?;
        ctx.note(&format!("wrote {}", path.display()));
    }
    ctx.note(&format!(
        "refine: {} levels, empirical Cauchy order {:?}",
        rep.levels.len(),
        rep.cauchy_order
    ));
    Ok(0)
}

// ---------------------------------------------------------------- dispatch

pub fn dispatch(ctx: &Ctx, instance: &Instance) -> Result<i32> {
    ensure_dir(&ctx.out_dir)?;
    match ctx.scenario.experiment.clone() {
        ExperimentSpec::Run {} => cmd_run(ctx, instance),
        ExperimentSpec::Check {
            edi,
            energy_solution,
            key_estimate,
            lyapunov,
            gibbs,
            edi_points,
            edi_tol,
            energy_solution_tol,
            gibbs_tol,
        } => cmd_check(
            ctx,
            instance,
            edi,
            energy_solution,
            key_estimate,
            lyapunov,
            gibbs,
            edi_points,
            edi_tol,
            energy_solution_tol,
            gibbs_tol,
        ),
        ExperimentSpec::Attractor {
            count,
            sample_box,
            cluster_radius,
            snapshots,
        } => cmd_attractor(ctx, instance, count, sample_box, cluster_radius, snapshots),
        ExperimentSpec::Decay {
            t_start,
            rate_tolerance,
        } => cmd_decay(ctx, instance, t_start, rate_tolerance),
        ExperimentSpec::Restpoints {
            seeds,
            sample_box,
            count,
            tol,
            dedup_radius,
        } => cmd_restpoints(ctx, instance, &seeds, &sample_box, count, tol, dedup_radius),
        ExperimentSpec::Refine { refinements } => cmd_refine(ctx, instance, refinements),
    }
}

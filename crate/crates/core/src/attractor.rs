//! Long-time laboratory: the solver-induced semiflow on the energy phase
//! space (state, energy value), omega-limit and rest-point estimation,
//! attractor approximation by Hausdorff semidistance decay, and decay-rate
//! fits against the convexity modulus.

use rayon::prelude::*;

use crate::engine::{run_mm, MMConfig, StateBits, StepSpec};
use crate::error::{FlowError, Result};
use crate::metric::{MetricBackend, Trajectory};

/// A point of the phase space: a state paired with its energy value.
#[derive(Debug, Clone)]
pub struct PhasePoint<S> {
    pub state: S,
    pub energy: f64,
}

impl<S> PhasePoint<S> {
    pub fn new<B: MetricBackend<State = S>>(b: &B, state: S) -> Self {
        let energy = b.energy(&state);
        PhasePoint { state, energy }
    }
}

/// Phase-space distance: state distance plus the energy gap.
pub fn phase_distance<B: MetricBackend>(
    b: &B,
    x: &PhasePoint<B::State>,
    y: &PhasePoint<B::State>,
) -> f64 {
    b.distance(&x.state, &y.state) + (x.energy - y.energy).abs()
}

/// One-sided Hausdorff semidistance `e(A, B) = sup_a inf_b dist(a, b)` in
/// the phase space. Returns 0 for empty `A` and infinity for empty `B`.
pub fn hausdorff_semidistance<B: MetricBackend>(
    b: &B,
    a_set: &[PhasePoint<B::State>],
    b_set: &[PhasePoint<B::State>],
) -> f64 {
    a_set
        .iter()
        .map(|a| {
            b_set
                .iter()
                .map(|bb| phase_distance(b, a, bb))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// A finite set of phase points carried by the semiflow.
#[derive(Debug, Clone)]
pub struct Ensemble<S> {
    pub points: Vec<PhasePoint<S>>,
    pub time: f64,
}

impl<S> Ensemble<S> {
    pub fn from_states<B: MetricBackend<State = S>>(b: &B, states: Vec<S>) -> Self {
        Ensemble {
            points: states.into_iter().map(|s| PhasePoint::new(b, s)).collect(),
            time: 0.0,
        }
    }
}

/// Result of evolving an ensemble: the surviving points (in input order)
/// and the per-point failures of the inner solver.
#[derive(Debug)]
pub struct EvolveOutcome<S> {
    pub ensemble: Ensemble<S>,
    pub failures: Vec<(usize, FlowError)>,
}

/// Applies the solver semiflow for a duration to every point of the set.
/// Points are evolved independently (in parallel) and merged back in index
/// order, so the result does not depend on the thread schedule.
pub fn evolve_set<B>(
    b: &B,
    ens: &Ensemble<B::State>,
    duration: f64,
    tau: f64,
    cfg_template: &MMConfig,
) -> EvolveOutcome<B::State>
where
    B: MetricBackend,
    B::State: StateBits,
{
    let mut cfg = cfg_template.clone();
    cfg.steps = StepSpec::Uniform {
        tau,
        horizon: duration,
    };
    let results: Vec<std::result::Result<PhasePoint<B::State>, FlowError>> = ens
        .points
        .par_iter()
        .map(|pt| {
            run_mm(b, &pt.state, &cfg).map(|run| {
                let state = run.states.last().unwrap().clone();
                let energy = *run.energies.last().unwrap();
                PhasePoint { state, energy }
            })
        })
        .collect();
    let mut points = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(pt) => points.push(pt),
            Err(e) => failures.push((i, e)),
        }
    }
    EvolveOutcome {
        ensemble: Ensemble {
            points,
            time: ens.time + duration,
        },
        failures,
    }
}

/// Greedy clustering of phase points at a given radius; returns one
/// representative per cluster, in first-seen order.
pub fn cluster_representatives<B>(
    b: &B,
    points: &[PhasePoint<B::State>],
    radius: f64,
) -> Vec<PhasePoint<B::State>>
where
    B: MetricBackend,
    B::State: Clone,
{
    let mut reps: Vec<PhasePoint<B::State>> = Vec::new();
    for p in points {
        if reps.iter().all(|r| phase_distance(b, p, r) > radius) {
            reps.push(p.clone());
        }
    }
    reps
}

/// Omega-limit estimate for an initial set: evolve through an increasing
/// observation grid, declare settling when the set stops moving (Hausdorff
/// drift below the cluster radius) on three consecutive observations, and
/// cluster the endpoint.
#[derive(Debug)]
pub struct OmegaReport<S> {
    pub clusters: Vec<PhasePoint<S>>,
    pub settled: bool,
    /// Hausdorff drift between consecutive observations.
    pub drifts: Vec<f64>,
    /// Largest backend slope over the cluster representatives.
    pub max_rep_slope: f64,
    pub failures: Vec<(usize, FlowError)>,
}

pub fn omega_limit_estimate<B>(
    b: &B,
    initial: &Ensemble<B::State>,
    observe_at: &[f64],
    tau: f64,
    cluster_radius: f64,
    cfg_template: &MMConfig,
) -> Result<OmegaReport<B::State>>
where
    B: MetricBackend,
    B::State: StateBits,
{
    if observe_at.is_empty() || observe_at.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FlowError::Input(
            "observation times must be strictly increasing and non-empty".into(),
        ));
    }
    if observe_at[0] <= 0.0 {
        return Err(FlowError::Input("observation times must be positive".into()));
    }
    let mut ens = initial.clone();
    let mut prev_time = 0.0;
    let mut snapshots: Vec<Ensemble<B::State>> = Vec::new();
    let mut failures = Vec::new();
    for &t in observe_at {
        let out = evolve_set(b, &ens, t - prev_time, tau, cfg_template);
        failures.extend(out.failures);
        ens = out.ensemble;
        if ens.points.is_empty() {
            return Err(FlowError::Invariant(
                "every ensemble point failed to evolve".into(),
            ));
        }
        snapshots.push(ens.clone());
        prev_time = t;
    }
    let drifts: Vec<f64> = snapshots
        .windows(2)
        .map(|w| {
            hausdorff_semidistance(b, &w[1].points, &w[0].points)
                .max(hausdorff_semidistance(b, &w[0].points, &w[1].points))
        })
        .collect();
    let settled = drifts.len() >= 3 && drifts.iter().rev().take(3).all(|&d| d <= cluster_radius);
    let clusters = cluster_representatives(b, &snapshots.last().unwrap().points, cluster_radius);
    let max_rep_slope = clusters
        .iter()
        .map(|c| b.slope(&c.state))
        .fold(0.0, f64::max);
    Ok(OmegaReport {
        clusters,
        settled,
        drifts,
        max_rep_slope,
        failures,
    })
}

/// Rest points reachable from a seed list, found by the backend's
/// refinement procedure, deduplicated in the phase distance.
#[derive(Debug)]
pub struct RestPointReport<S> {
    pub points: Vec<PhasePoint<S>>,
    /// Backend slope at each accepted rest point (same order).
    pub slopes: Vec<f64>,
    /// Phase-space diameter of the accepted set.
    pub diameter: f64,
    /// Seeds the backend could not refine to tolerance.
    pub unresolved: usize,
}

pub fn rest_points_solve<B>(
    b: &B,
    seeds: &[B::State],
    tol: f64,
    dedup_radius: f64,
    max_iter: usize,
) -> RestPointReport<B::State>
where
    B: MetricBackend,
{
    let mut points: Vec<PhasePoint<B::State>> = Vec::new();
    let mut slopes = Vec::new();
    let mut unresolved = 0usize;
    for seed in seeds {
        match b.refine_rest_point(seed, tol, max_iter) {
            Some(state) => {
                let pt = PhasePoint::new(b, state);
                if points
                    .iter()
                    .all(|q| phase_distance(b, &pt, q) > dedup_radius)
                {
                    slopes.push(b.slope(&pt.state));
                    points.push(pt);
                }
            }
            None => unresolved += 1,
        }
    }
    let mut diameter = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            diameter = diameter.max(phase_distance(b, &points[i], &points[j]));
        }
    }
    RestPointReport {
        points,
        slopes,
        diameter,
        unresolved,
    }
}

/// Attractor approximation: evolve a sampled bounded set, record the decay
/// of the Hausdorff semidistance to the final configuration, and spot-check
/// quasi-invariance of the candidate attractor under a further push.
#[derive(Debug)]
pub struct AttractorReport<S> {
    /// Candidate attractor: cluster representatives of the final ensemble.
    pub attractor: Vec<PhasePoint<S>>,
    /// `(time, e(T(t) B, A))` samples along the evolution.
    pub approach: Vec<(f64, f64)>,
    /// Hausdorff drift of the candidate under one extra unit of flow.
    pub invariance_defect: f64,
    pub certified: bool,
    pub failures: Vec<(usize, FlowError)>,
}

pub fn attractor_approximate<B>(
    b: &B,
    initial_states: Vec<B::State>,
    horizon: f64,
    snapshots: usize,
    tau: f64,
    radius: f64,
    cfg_template: &MMConfig,
) -> Result<AttractorReport<B::State>>
where
    B: MetricBackend,
    B::State: StateBits,
{
    if snapshots < 2 {
        return Err(FlowError::Input("need at least two snapshots".into()));
    }
    if initial_states.is_empty() {
        return Err(FlowError::Input("empty initial set".into()));
    }
    let mut ens = Ensemble::from_states(b, initial_states);
    let dt = horizon / snapshots as f64;
    let mut history: Vec<Ensemble<B::State>> = vec![ens.clone()];
    let mut failures = Vec::new();
    for _ in 0..snapshots {
        let out = evolve_set(b, &ens, dt, tau, cfg_template);
        failures.extend(out.failures);
        ens = out.ensemble;
        if ens.points.is_empty() {
            return Err(FlowError::Invariant(
                "every ensemble point failed to evolve".into(),
            ));
        }
        history.push(ens.clone());
    }
    let attractor = cluster_representatives(b, &ens.points, radius);
    let approach: Vec<(f64, f64)> = history
        .iter()
        .map(|snap| {
            (
                snap.time,
                hausdorff_semidistance(b, &snap.points, &attractor),
            )
        })
        .collect();
    // quasi-invariance: push the candidate one unit forward and measure
    // how far it moved
    let push = evolve_set(
        b,
        &Ensemble {
            points: attractor.clone(),
            time: ens.time,
        },
        1.0,
        tau,
        cfg_template,
    );
    let invariance_defect = if push.ensemble.points.len() == attractor.len() {
        hausdorff_semidistance(b, &push.ensemble.points, &attractor)
    } else {
        f64::INFINITY
    };
    let final_gap = approach.last().map(|&(_, e)| e).unwrap_or(f64::INFINITY);
    let certified = final_gap <= radius && invariance_defect <= radius;
    Ok(AttractorReport {
        attractor,
        approach,
        invariance_defect,
        certified,
        failures,
    })
}

/// Lyapunov verdict along a trajectory: the energy must be non-increasing
/// up to a slack, and once it is flat over a window the kinetic integral
/// over that window must be compatibly small.
#[derive(Debug, Clone)]
pub struct LyapunovVerdict {
    pub monotone: bool,
    /// Largest energy uptick along the trajectory.
    pub max_uptick: f64,
    /// `int |u'|^p dt` over the requested window.
    pub kinetic_integral: f64,
    /// Set when the energy varies less than the slack over the window:
    /// whether the kinetic integral is below `p * slack`.
    pub near_stationary: Option<bool>,
}

pub fn lyapunov_check<S>(
    traj: &Trajectory<S>,
    p: f64,
    window: (f64, f64),
    slack: f64,
) -> Result<LyapunovVerdict> {
    traj.validate()?;
    let (w_lo, w_hi) = window;
    if !(w_hi > w_lo) {
        return Err(FlowError::Input("window must have positive length".into()));
    }
    let mut max_uptick = 0.0f64;
    for w in traj.energies.windows(2) {
        max_uptick = max_uptick.max(w[1] - w[0]);
    }
    let monotone = max_uptick <= slack;

    // trapezoid of |u'|^p over the window, and the energy variation there
    let mut kinetic = 0.0;
    let mut e_min = f64::INFINITY;
    let mut e_max = f64::NEG_INFINITY;
    for i in 1..traj.times.len() {
        let (t0, t1) = (traj.times[i - 1], traj.times[i]);
        let lo = t0.max(w_lo);
        let hi = t1.min(w_hi);
        if hi > lo {
            let f0 = traj.speeds[i - 1].powf(p);
            let f1 = traj.speeds[i].powf(p);
            kinetic += 0.5 * (f0 + f1) * (hi - lo);
        }
        for &(t, e) in [(t0, traj.energies[i - 1]), (t1, traj.energies[i])].iter() {
            if t >= w_lo && t <= w_hi {
                e_min = e_min.min(e);
                e_max = e_max.max(e);
            }
        }
    }
    let near_stationary = if e_min.is_finite() && e_max - e_min <= slack {
        Some(kinetic <= p * slack)
    } else {
        None
    };
    Ok(LyapunovVerdict {
        monotone,
        max_uptick,
        kinetic_integral: kinetic,
        near_stationary,
    })
}

/// Least-squares fit of the exponential decay rate of the energy gap to a
/// rest value, compared against the sharp rate `lambda p'`, together with
/// the pointwise distance bound `(lambda/p) d^p <= gap`.
#[derive(Debug, Clone)]
pub struct DecayFit {
    /// Fitted decay rate of `log(gap)`.
    pub rate: f64,
    /// Target rate `lambda p'`.
    pub target: f64,
    pub points_used: usize,
    pub distance_bound_ok: bool,
    /// Largest relative violation of the pointwise exponential envelope.
    pub envelope_excess: f64,
}

pub fn decay_fit<B>(
    b: &B,
    traj: &Trajectory<B::State>,
    rest: &B::State,
    lambda: f64,
    p: f64,
    t_start: f64,
) -> Result<DecayFit>
where
    B: MetricBackend,
{
    traj.validate()?;
    if !(lambda > 0.0) {
        return Err(FlowError::Domain(
            "decay fit requires a positive convexity modulus".into(),
        ));
    }
    let pp = p / (p - 1.0);
    let phi_rest = b.energy(rest);
    let target = lambda * pp;

    let mut ts = Vec::new();
    let mut logs = Vec::new();
    let mut distance_bound_ok = true;
    let mut envelope_excess = 0.0f64;
    let mut gap0: Option<(f64, f64)> = None; // (t0, gap at t0)
    for (i, &t) in traj.times.iter().enumerate() {
        let gap = traj.energies[i] - phi_rest;
        if gap < -1e-9 * (1.0 + phi_rest.abs()) {
            return Err(FlowError::Invariant(format!(
                "energy fell below the rest value by {gap}"
            )));
        }
        let d = b.distance(&traj.states[i], rest);
        if lambda / p * d.powf(p) > gap + 1e-9 * (1.0 + gap.abs()) {
            distance_bound_ok = false;
        }
        if t < t_start || gap <= 1e-14 {
            continue;
        }
        if let Some((t0, g0)) = gap0 {
            let bound = g0 * (-target * (t - t0)).exp();
            if bound > 1e-300 {
                envelope_excess = envelope_excess.max(gap / bound - 1.0);
            }
        } else {
            gap0 = Some((t, gap));
        }
        ts.push(t);
        logs.push(gap.ln());
    }
    if ts.len() < 3 {
        return Err(FlowError::Input(
            "not enough usable samples for the decay fit".into(),
        ));
    }
    // ordinary least squares for log(gap) = a - rate * t
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        num += (t - tm) * (l - lm);
        den += (t - tm) * (t - tm);
    }
    let rate = -num / den;
    Ok(DecayFit {
        rate,
        target,
        points_used: ts.len(),
        distance_bound_ok,
        envelope_excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banach::{BanachBackend, BanachFunctional, PNormSpace};
    use crate::engine::MMConfig;

    fn quadratic_line() -> BanachBackend {
        BanachBackend::new(
            PNormSpace::euclidean(1),
            BanachFunctional::quadratic(1.0, vec![0.0]),
        )
    }

    fn double_well_line() -> BanachBackend {
        BanachBackend::new(PNormSpace::euclidean(1), BanachFunctional::double_well())
    }

    #[test]
    fn phase_distance_combines_state_and_energy() {
        let b = quadratic_line();
        let x = PhasePoint::new(&b, vec![1.0]);
        let y = PhasePoint::new(&b, vec![3.0]);
        // state distance 2, energies 0.5 and 4.5
        assert!((phase_distance(&b, &x, &y) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_semidistance_is_one_sided() {
        let b = quadratic_line();
        let a_set = vec![PhasePoint::new(&b, vec![0.0])];
        let b_set = vec![
            PhasePoint::new(&b, vec![0.0]),
            PhasePoint::new(&b, vec![10.0]),
        ];
        assert_eq!(hausdorff_semidistance(&b, &a_set, &b_set), 0.0);
        assert!(hausdorff_semidistance(&b, &b_set, &a_set) > 10.0);
    }

    #[test]
    fn evolve_set_is_concatenation_of_runs() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.05, 1.0);
        let ens = Ensemble::from_states(&b, vec![vec![1.0], vec![-2.0]]);
        let once = evolve_set(&b, &ens, 1.0, 0.05, &cfg);
        let half = evolve_set(&b, &ens, 0.5, 0.05, &cfg);
        let twice = evolve_set(&b, &half.ensemble, 0.5, 0.05, &cfg);
        assert!(once.failures.is_empty() && twice.failures.is_empty());
        for (p, q) in once.ensemble.points.iter().zip(&twice.ensemble.points) {
            assert!(phase_distance(&b, p, q) < 1e-12);
        }
        assert!((twice.ensemble.time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn omega_limit_of_quadratic_is_origin() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.05, 1.0);
        let ens = Ensemble::from_states(&b, vec![vec![1.5], vec![-0.7], vec![0.2]]);
        let report = omega_limit_estimate(
            &b,
            &ens,
            &[2.0, 8.0, 16.0, 32.0, 64.0],
            0.05,
            1e-2,
            &cfg,
        )
        .unwrap();
        assert!(report.settled);
        assert_eq!(report.clusters.len(), 1);
        assert!(report.clusters[0].state[0].abs() < 1e-2);
        assert!(report.max_rep_slope < 1e-2);
    }

    #[test]
    fn rest_points_of_double_well() {
        let b = double_well_line();
        let seeds: Vec<Vec<f64>> = (0..17).map(|i| vec![-2.0 + 0.25 * i as f64]).collect();
        let report = rest_points_solve(&b, &seeds, 1e-8, 0.3, 400);
        let mut roots: Vec<f64> = report.points.iter().map(|p| p.state[0]).collect();
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(roots.len(), 3, "roots: {roots:?}");
        assert!((roots[0] + 1.0).abs() < 1e-6);
        assert!(roots[1].abs() < 1e-6);
        assert!((roots[2] - 1.0).abs() < 1e-6);
        assert!(report.slopes.iter().all(|&s| s <= 1e-8));
    }

    #[test]
    fn attractor_of_quadratic_is_the_origin() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.05, 1.0);
        let states: Vec<Vec<f64>> = (0..9).map(|i| vec![-2.0 + 0.5 * i as f64]).collect();
        let report =
            attractor_approximate(&b, states, 12.0, 6, 0.05, 5e-2, &cfg).unwrap();
        assert!(report.certified, "defect {}", report.invariance_defect);
        assert_eq!(report.attractor.len(), 1);
        assert!(report.attractor[0].state[0].abs() < 5e-2);
        // the approach curve decays monotonically after the first snapshot
        let es: Vec<f64> = report.approach.iter().map(|&(_, e)| e).collect();
        for w in es.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "approach not decaying: {es:?}");
        }
    }

    #[test]
    fn lyapunov_on_a_solver_run() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.01, 20.0);
        let run = run_mm(&b, &vec![1.0], &cfg).unwrap();
        let traj = run.trajectory(&b);
        let v = lyapunov_check(&traj, 2.0, (15.0, 20.0), 1e-6).unwrap();
        assert!(v.monotone);
        assert_eq!(v.near_stationary, Some(true));
    }

    #[test]
    fn lyapunov_flags_energy_increase() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.01, 1.0);
        let run = run_mm(&b, &vec![1.0], &cfg).unwrap();
        let mut traj = run.trajectory(&b);
        let last = traj.energies.len() - 1;
        traj.energies[last] += 1.0;
        traj.envelope[last] += 1.0;
        let v = lyapunov_check(&traj, 2.0, (0.0, 1.0), 1e-6).unwrap();
        assert!(!v.monotone);
        assert!(v.max_uptick > 0.5);
    }

    #[test]
    fn decay_fit_recovers_the_sharp_quadratic_rate() {
        // lambda = 1, p = 2: the continuous gap decays like exp(-2t); the
        // scheme at step tau decays like (1+tau)^{-2t/tau}, rate
        // 2 log(1+tau)/tau -> 2
        let b = quadratic_line();
        let tau = 1e-3;
        let cfg = MMConfig::uniform(2.0, tau, 4.0);
        let run = run_mm(&b, &vec![1.0], &cfg).unwrap();
        let traj = run.trajectory(&b);
        let fit = decay_fit(&b, &traj, &vec![0.0], 1.0, 2.0, 0.5).unwrap();
        let expected = 2.0 * (1.0 + tau).ln() / tau;
        assert!(
            (fit.rate - expected).abs() < 1e-3,
            "rate {} vs {}",
            fit.rate,
            expected
        );
        assert!(fit.rate >= fit.target * 0.99);
        assert!(fit.distance_bound_ok);
        // the discrete rate 2 log(1+tau)/tau undershoots 2 by ~tau, so the
        // envelope is exceeded by at most exp(tau * T) - 1
        assert!(fit.envelope_excess < 5e-3, "excess {}", fit.envelope_excess);
    }
}

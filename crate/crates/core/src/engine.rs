//! The minimizing-movements solver: incremental minimization over a time
//! partition, trajectory assembly, discrete-energy-identity accounting, and
//! refinement studies toward generalized minimizing movements.

use std::time::{Duration, Instant};

use crate::error::{FlowError, Result};
use crate::metric::{
    InterpolantSet, MetricBackend, Partition, ProxOpts, ProxResult, Trajectory,
};

/// How the time grid of a run is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSpec {
    Uniform { tau: f64, horizon: f64 },
    Explicit(Vec<f64>),
}

/// Configuration of a minimizing-movements run.
#[derive(Debug, Clone, PartialEq)]
pub struct MMConfig {
    /// Flow exponent in `(1, inf)`.
    pub p: f64,
    pub steps: StepSpec,
    /// Inner-solver first-order tolerance.
    pub eps_prox: f64,
    pub max_inner: usize,
    pub seed: u64,
}

impl MMConfig {
    pub fn uniform(p: f64, tau: f64, horizon: f64) -> Self {
        MMConfig {
            p,
            steps: StepSpec::Uniform { tau, horizon },
            eps_prox: 1e-10,
            max_inner: 50_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(FlowError::Input(format!(
                "flow exponent must lie in (1, inf), got {}",
                self.p
            )));
        }
        if !(self.eps_prox > 0.0) {
            return Err(FlowError::Input("eps_prox must be positive".into()));
        }
        if let StepSpec::Uniform { tau, horizon } = self.steps {
            if !(tau > 0.0) || !(horizon > 0.0) {
                return Err(FlowError::Input(
                    "uniform step spec needs tau > 0 and horizon > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Conjugate exponent `p' = p / (p - 1)`.
    pub fn p_conj(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn partition(&self) -> Result<Partition> {
        match &self.steps {
            StepSpec::Uniform { tau, horizon } => Partition::uniform(*tau, *horizon),
            StepSpec::Explicit(steps) => Partition::from_steps(steps.clone()),
        }
    }

    pub fn prox_opts(&self) -> ProxOpts {
        ProxOpts {
            tol: self.eps_prox,
            max_iter: self.max_inner,
            restart_seed: self.seed,
        }
    }
}

/// One interval of the discrete energy identity ledger: the kinetic term,
/// a cheap two-point estimate of the slope term, and the energy drop.
#[derive(Debug, Clone, Copy)]
pub struct EdiEntry {
    pub kinetic: f64,
    pub slope_term: f64,
    pub energy_drop: f64,
}

impl EdiEntry {
    pub fn residual(&self) -> f64 {
        self.kinetic + self.slope_term + self.energy_drop
    }
}

/// A completed minimizing-movements run.
#[derive(Debug, Clone)]
pub struct MMRun<S> {
    pub config: MMConfig,
    pub partition: Partition,
    pub states: Vec<S>,
    pub energies: Vec<f64>,
    pub slopes: Vec<f64>,
    pub edi: Vec<EdiEntry>,
    pub inner_iterations: usize,
    pub wall_time: Duration,
}

impl<S: Clone> MMRun<S> {
    pub fn interpolants(&self) -> InterpolantSet<S> {
        InterpolantSet::new(self.states.clone(), self.partition.clone(), self.config.p)
            .expect("run states align with the partition by construction")
    }

    /// Trajectory view with node times, energies, slopes and discrete speeds.
    pub fn trajectory<B>(&self, b: &B) -> Trajectory<S>
    where
        B: MetricBackend<State = S>,
    {
        let n = self.states.len();
        let mut speeds = vec![0.0; n];
        for i in 1..n {
            let tau = self.partition.steps()[i - 1];
            speeds[i] = b.distance(&self.states[i], &self.states[i - 1]) / tau;
        }
        if n > 1 {
            speeds[0] = speeds[1];
        }
        Trajectory {
            times: self.partition.nodes().to_vec(),
            states: self.states.clone(),
            energies: self.energies.clone(),
            envelope: self.energies.clone(),
            slopes: self.slopes.clone(),
            speeds,
            edi_residuals: self.edi.iter().map(|e| e.residual()).collect(),
        }
    }
}

/// Deterministic restart seed as a function of `(u_prev, tau, seed)` only,
/// so that concatenated runs reproduce combined runs state-for-state.
fn mix_seed(seed: u64, state_bits: impl Iterator<Item = u64>, tau: f64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed;
    let mut absorb = |x: u64| {
        h ^= x;
        h = h.wrapping_mul(0x100000001b3);
    };
    for b in state_bits {
        absorb(b);
    }
    absorb(tau.to_bits());
    h
}

pub trait StateBits {
    fn state_bits(&self) -> Box<dyn Iterator<Item = u64> + '_>;
}

impl StateBits for Vec<f64> {
    fn state_bits(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        Box::new(self.iter().map(|x| x.to_bits()))
    }
}

/// One incremental step: solves
/// `argmin_v d^p(v, u_prev)/(p tau^(p-1)) + phi(v)` and certifies both the
/// comparison with `v = u_prev` and the first-order optimality residual.
pub fn mm_step<B>(
    b: &B,
    u_prev: &B::State,
    tau: f64,
    p: f64,
    opts: &ProxOpts,
) -> Result<ProxResult<B::State>>
where
    B: MetricBackend,
{
    let phi_prev = b.energy(u_prev);
    if !phi_prev.is_finite() {
        return Err(FlowError::Domain(
            "mm_step requires finite energy at the previous state".into(),
        ));
    }
    if !(tau > 0.0) {
        return Err(FlowError::Input("step must be positive".into()));
    }
    let r = b
        .prox(u_prev, tau, p, opts)
        .map_err(|f| f.into_flow_error(0))?;
    let d = b.distance(&r.state, u_prev);
    let moved = d.powf(p) / (p * tau.powf(p - 1.0)) + b.energy(&r.state);
    if moved > phi_prev + opts.tol * (1.0 + phi_prev.abs()) {
        return Err(FlowError::Invariant(format!(
            "incremental minimum {moved} exceeds the stay-put value {phi_prev}"
        )));
    }
    Ok(r)
}

/// Runs the scheme over the configured partition, filling energies, node
/// slopes, and the per-interval EDI ledger (with a free endpoint-trapezoid
/// estimate of the slope term; `edi_residual` refines it on demand).
pub fn run_mm<B>(b: &B, u0: &B::State, cfg: &MMConfig) -> Result<MMRun<B::State>>
where
    B: MetricBackend,
    B::State: StateBits,
{
    cfg.validate()?;
    if !b.energy(u0).is_finite() {
        return Err(FlowError::Domain(
            "initial state lies outside the energy domain".into(),
        ));
    }
    let start = Instant::now();
    let partition = cfg.partition()?;
    let pp = cfg.p_conj();
    let mut states = Vec::with_capacity(partition.len() + 1);
    let mut energies = Vec::with_capacity(partition.len() + 1);
    let mut slopes = Vec::with_capacity(partition.len() + 1);
    let mut edi = Vec::with_capacity(partition.len());
    let mut inner = 0usize;

    states.push(u0.clone());
    energies.push(b.energy(u0));
    slopes.push(b.slope(u0));

    for (n, &tau) in partition.steps().iter().enumerate() {
        let u_prev = states.last().unwrap();
        let mut opts = cfg.prox_opts();
        opts.restart_seed = mix_seed(cfg.seed, u_prev.state_bits(), tau);
        let r = mm_step(b, u_prev, tau, cfg.p, &opts).map_err(|e| match e {
            FlowError::Solver {
                message,
                residual,
                iterations,
                ..
            } => FlowError::Solver {
                node: n + 1,
                message,
                residual,
                iterations,
            },
            other => other,
        })?;
        inner += r.iterations;
        let d = b.distance(&r.state, states.last().unwrap());
        let phi_new = b.energy(&r.state);
        let slope_new = b.slope(&r.state);
        let phi_prev = *energies.last().unwrap();
        let slope_prev = *slopes.last().unwrap();
        edi.push(EdiEntry {
            kinetic: tau / cfg.p * (d / tau).powf(cfg.p),
            slope_term: tau / pp * 0.5 * (slope_prev.powf(pp) + slope_new.powf(pp)),
            energy_drop: phi_new - phi_prev,
        });
        states.push(r.state);
        energies.push(phi_new);
        slopes.push(slope_new);
    }

    // energy monotonicity up to the prox slack
    for w in energies.windows(2) {
        if w[1] > w[0] + cfg.eps_prox * (1.0 + w[0].abs()) {
            return Err(FlowError::Invariant(format!(
                "energy increased along the run: {} -> {}",
                w[0], w[1]
            )));
        }
    }

    Ok(MMRun {
        config: cfg.clone(),
        partition,
        states,
        energies,
        slopes,
        edi,
        inner_iterations: inner,
        wall_time: start.elapsed(),
    })
}

/// Signed residual of the discrete energy identity on one interval
/// (1-based index), with the slope term integrated by an `n_points`
/// composite trapezoid over De Giorgi interpolant evaluations.
pub fn edi_residual<B>(
    b: &B,
    run: &MMRun<B::State>,
    interval: usize,
    n_points: usize,
) -> Result<f64>
where
    B: MetricBackend,
{
    if interval == 0 || interval > run.partition.len() {
        return Err(FlowError::Input(format!(
            "interval index {interval} out of range 1..={}",
            run.partition.len()
        )));
    }
    if n_points < 2 {
        return Err(FlowError::Input(
            "EDI quadrature needs at least two points".into(),
        ));
    }
    let p = run.config.p;
    let pp = run.config.p_conj();
    let tau = run.partition.steps()[interval - 1];
    let t_prev = run.partition.nodes()[interval - 1];
    let interp = run.interpolants();
    let opts = run.config.prox_opts();

    let d = b.distance(&run.states[interval], &run.states[interval - 1]);
    let kinetic = tau / p * (d / tau).powf(p);

    // composite trapezoid of slope(De Giorgi)^{p'} over (0, tau)
    let h = tau / (n_points - 1) as f64;
    let mut slope_term = 0.0;
    for k in 0..n_points {
        let delta = (k as f64) * h;
        let t = if k + 1 == n_points {
            run.partition.nodes()[interval]
        } else {
            t_prev + delta
        };
        let state = interp.de_giorgi(b, t, &opts)?;
        let w = if k == 0 || k + 1 == n_points { 0.5 } else { 1.0 };
        slope_term += w * b.slope(&state).powf(pp);
    }
    slope_term *= h / pp;

    let energy_drop = run.energies[interval] - run.energies[interval - 1];
    Ok(kinetic + slope_term + energy_drop)
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone)]
pub struct GmmLevel {
    pub tau: f64,
    /// Sup over common nodes of the distance to the previous (coarser) level.
    pub sup_distance_to_prev: Option<f64>,
}

/// Report of a refinement-ladder study toward the generalized minimizing
/// movement.
#[derive(Debug, Clone)]
pub struct GmmReport<S> {
    pub levels: Vec<GmmLevel>,
    /// Empirical Cauchy order from successive sup distances.
    pub cauchy_order: Option<f64>,
    /// Per coarse node: `(t, envelope phi(t), envelope gap phi(t) - phi(u(t)))`.
    pub envelope: Vec<(f64, f64, f64)>,
    pub finest: MMRun<S>,
}

/// Runs the scheme at `tau, tau/2, ..., tau/2^refinements` and reports the
/// Cauchy behavior of the trajectories plus the Richardson energy envelope.
pub fn gmm_convergence_study<B>(
    b: &B,
    u0: &B::State,
    cfg_base: &MMConfig,
    refinements: usize,
) -> Result<GmmReport<B::State>>
where
    B: MetricBackend,
    B::State: StateBits,
{
    if refinements < 2 {
        return Err(FlowError::Input(
            "a convergence study needs at least two refinements".into(),
        ));
    }
    let (tau0, horizon) = match cfg_base.steps {
        StepSpec::Uniform { tau, horizon } => (tau, horizon),
        _ => {
            return Err(FlowError::Input(
                "refinement studies require a uniform step spec".into(),
            ))
        }
    };
    let coarse_nodes: Vec<f64> = Partition::uniform(tau0, horizon)?.nodes().to_vec();

    let mut runs: Vec<MMRun<B::State>> = Vec::new();
    let mut levels: Vec<GmmLevel> = Vec::new();
    for k in 0..=refinements {
        let tau = tau0 / 2f64.powi(k as i32);
        let cfg = MMConfig {
            steps: StepSpec::Uniform { tau, horizon },
            ..cfg_base.clone()
        };
        let run = run_mm(b, u0, &cfg)?;
        let sup = runs
            .last()
            .map(|prev| sup_common_nodes(b, prev, &run, &coarse_nodes));
        levels.push(GmmLevel {
            tau,
            sup_distance_to_prev: sup,
        });
        runs.push(run);
    }

    let dists: Vec<f64> = levels.iter().filter_map(|l| l.sup_distance_to_prev).collect();
    let cauchy_order = if dists.len() >= 2 && dists.iter().all(|&d| d > 0.0) {
        let orders: Vec<f64> = dists.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        Some(orders.iter().sum::<f64>() / orders.len() as f64)
    } else {
        None
    };

    // Richardson limit of phi(U_tau(t)) over the two finest levels
    // (first-order scheme: phi_k = phi_inf + C tau_k)
    let n_levels = runs.len();
    let fine = &runs[n_levels - 1];
    let mid = &runs[n_levels - 2];
    let mut envelope = Vec::with_capacity(coarse_nodes.len());
    for (i, &t) in coarse_nodes.iter().enumerate() {
        let stride_f = 1usize << refinements;
        let stride_m = 1usize << (refinements - 1);
        let phi_f = fine.energies[i * stride_f];
        let phi_m = mid.energies[i * stride_m];
        let env = 2.0 * phi_f - phi_m;
        let env = env.max(phi_f); // the envelope dominates the energy
        envelope.push((t, env, env - phi_f));
    }

    let finest = runs.pop().unwrap();
    Ok(GmmReport {
        levels,
        cauchy_order,
        envelope,
        finest,
    })
}

fn sup_common_nodes<B>(
    b: &B,
    coarse: &MMRun<B::State>,
    fine: &MMRun<B::State>,
    nodes: &[f64],
) -> f64
where
    B: MetricBackend,
{
    let mut sup = 0.0f64;
    for &t in nodes {
        let ic = nearest_node(coarse.partition.nodes(), t);
        let i_f = nearest_node(fine.partition.nodes(), t);
        sup = sup.max(b.distance(&coarse.states[ic], &fine.states[i_f]));
    }
    sup
}

fn nearest_node(nodes: &[f64], t: f64) -> usize {
    let mut i = nodes.partition_point(|&x| x < t);
    if i > 0
        && (i == nodes.len() || (t - nodes[i - 1]).abs() <= (nodes[i] - t).abs())
    {
        i -= 1;
    }
    i
}

/// Report of the integrated energy-solution inequality over a sampled curve.
#[derive(Debug, Clone)]
pub struct EnergySolutionReport {
    /// Max over sampled pairs `s <= t` of
    /// `1/p int |u'|^p + 1/p' int slope^{p'} + phi(t) - phi(s)`.
    pub max_defect: f64,
    /// Pointwise defect of the differential form at interior samples.
    pub pointwise_defect: Vec<f64>,
}

/// Evaluates the integrated energy inequality on a trajectory whose slope
/// and speed channels are filled.
pub fn energy_solution_check_traj<S>(traj: &Trajectory<S>, p: f64) -> Result<EnergySolutionReport> {
    let n = traj.len();
    if traj.slopes.len() != n || traj.speeds.len() != n {
        return Err(FlowError::Input(
            "energy-solution check needs slope and speed channels".into(),
        ));
    }
    let pp = p / (p - 1.0);
    let integrand: Vec<f64> = traj
        .speeds
        .iter()
        .zip(&traj.slopes)
        .map(|(sp, sl)| sp.powf(p) / p + sl.powf(pp) / pp)
        .collect();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        let h = traj.times[i] - traj.times[i - 1];
        cum[i] = cum[i - 1] + 0.5 * h * (integrand[i] + integrand[i - 1]);
    }
    let mut max_defect = f64::NEG_INFINITY;
    for s in 0..n {
        for t in s..n {
            let defect = cum[t] - cum[s] + traj.energies[t] - traj.energies[s];
            max_defect = max_defect.max(defect);
        }
    }
    let mut pointwise = Vec::with_capacity(n.saturating_sub(2));
    for i in 1..n.saturating_sub(1) {
        let dphi =
            (traj.energies[i + 1] - traj.energies[i - 1]) / (traj.times[i + 1] - traj.times[i - 1]);
        pointwise.push(-dphi - integrand[i]);
    }
    Ok(EnergySolutionReport {
        max_defect,
        pointwise_defect: pointwise,
    })
}

/// Energy-solution check on a completed run.
pub fn energy_solution_check<B>(b: &B, run: &MMRun<B::State>) -> Result<EnergySolutionReport>
where
    B: MetricBackend,
{
    energy_solution_check_traj(&run.trajectory(b), run.config.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banach::{BanachBackend, BanachFunctional, PNormSpace};

    fn quadratic_line() -> BanachBackend {
        BanachBackend::new(
            PNormSpace::euclidean(1),
            BanachFunctional::quadratic(1.0, vec![0.0]),
        )
    }

    #[test]
    fn mm_step_quadratic_closed_form() {
        let b = quadratic_line();
        let opts = ProxOpts::default();
        let r = mm_step(&b, &vec![1.0], 0.5, 2.0, &opts).unwrap();
        assert!((r.state[0] - 2.0 / 3.0).abs() < 10.0 * opts.tol);
    }

    #[test]
    fn mm_step_fixed_point_at_minimizer() {
        let b = quadratic_line();
        let r = mm_step(&b, &vec![0.0], 0.5, 2.0, &ProxOpts::default()).unwrap();
        assert!(r.state[0].abs() < 1e-10);
    }

    #[test]
    fn mm_step_rejects_infinite_energy() {
        let b = BanachBackend::new(
            PNormSpace::euclidean(1),
            BanachFunctional::quadratic(1.0, vec![0.0]).with_offset(f64::INFINITY),
        );
        assert!(matches!(
            mm_step(&b, &vec![1.0], 0.1, 2.0, &ProxOpts::default()),
            Err(FlowError::Domain(_))
        ));
    }

    #[test]
    fn run_mm_geometric_decay() {
        // oracle: exact recursion U^n = (1 + tau)^{-n} for the quadratic prox
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.1, 1.0);
        let run = run_mm(&b, &vec![1.0], &cfg).unwrap();
        for (n, s) in run.states.iter().enumerate() {
            let expected = 1.1f64.powi(-(n as i32));
            assert!(
                (s[0] - expected).abs() < 1e-7,
                "node {n}: {} vs {expected}",
                s[0]
            );
        }
        // energies non-increasing
        for w in run.energies.windows(2) {
            assert!(w[1] <= w[0] + cfg.eps_prox);
        }
    }

    #[test]
    fn run_mm_rest_point_start() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.1, 1.0);
        let run = run_mm(&b, &vec![0.0], &cfg).unwrap();
        for e in &run.edi {
            assert!(e.residual().abs() < 1e-12);
        }
        for s in &run.states {
            assert!(s[0].abs() < 1e-9);
        }
    }

    #[test]
    fn run_mm_double_well_selects_positive_well() {
        // oracle: high-accuracy RK4 on u' = -W'(u) from 0.1 reaches +1
        let b = BanachBackend::new(PNormSpace::euclidean(1), BanachFunctional::double_well());
        let mut cfg = MMConfig::uniform(2.0, 0.01, 50.0);
        cfg.eps_prox = 1e-10;
        let run = run_mm(&b, &vec![0.1], &cfg).unwrap();
        let endpoint = run.states.last().unwrap()[0];

        let mut u = 0.1f64;
        let f = |x: f64| -(x * x * x - x);
        let h = 1e-4;
        let n = (50.0 / h) as usize;
        for _ in 0..n {
            let k1 = f(u);
            let k2 = f(u + 0.5 * h * k1);
            let k3 = f(u + 0.5 * h * k2);
            let k4 = f(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((u - 1.0).abs() < 1e-6, "reference endpoint {u}");
        assert!((endpoint - 1.0).abs() < 1e-3, "MM endpoint {endpoint}");
    }

    #[test]
    fn edi_residual_quadratic_single_step() {
        // all three terms are closed-form integrable; the symbolic value of
        // the identity is exactly zero, so the residual is pure quadrature
        let b = quadratic_line();
        let mut cfg = MMConfig::uniform(2.0, 0.1, 0.1);
        cfg.eps_prox = 1e-10;
        let run = run_mm(&b, &vec![1.0], &cfg).unwrap();
        let r32 = edi_residual(&b, &run, 1, 32).unwrap();
        assert!(r32.abs() <= 1e-6, "32-point residual {r32}");
        // coarse quadrature dominated by trapezoid error, shrinking at
        // second order as points double
        let r2 = edi_residual(&b, &run, 1, 2).unwrap();
        let r4 = edi_residual(&b, &run, 1, 4).unwrap();
        let r8 = edi_residual(&b, &run, 1, 8).unwrap();
        assert!(r2.abs() > r4.abs() && r4.abs() > r8.abs());
        let order = (r2.abs() / r4.abs()).log2();
        assert!(order > 1.5 && order < 4.0, "observed order {order}");
    }

    #[test]
    fn edi_residual_stationary_run() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.1, 0.5);
        let run = run_mm(&b, &vec![0.0], &cfg).unwrap();
        for i in 1..=run.partition.len() {
            assert!(edi_residual(&b, &run, i, 8).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn apriori_kinetic_bound() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.05, 2.0);
        let run = run_mm(&b, &vec![1.0], &cfg).unwrap();
        let kinetic_sum: f64 = run.edi.iter().map(|e| e.kinetic).sum();
        let bound =
            run.energies[0] - 0.0 + run.partition.len() as f64 * cfg.eps_prox;
        assert!(kinetic_sum <= bound, "{kinetic_sum} vs {bound}");
    }

    #[test]
    fn concatenation_exact() {
        // n1 steps then n2 steps equals n1+n2 steps, state-for-state
        let b = BanachBackend::new(PNormSpace::euclidean(1), BanachFunctional::double_well());
        let full = run_mm(&b, &vec![0.4], &MMConfig::uniform(2.0, 0.1, 2.0)).unwrap();
        let first = run_mm(&b, &vec![0.4], &MMConfig::uniform(2.0, 0.1, 1.0)).unwrap();
        let second = run_mm(
            &b,
            first.states.last().unwrap(),
            &MMConfig::uniform(2.0, 0.1, 1.0),
        )
        .unwrap();
        for (i, s) in first.states.iter().enumerate() {
            assert_eq!(s, &full.states[i]);
        }
        for (i, s) in second.states.iter().enumerate() {
            assert_eq!(s, &full.states[first.states.len() - 1 + i]);
        }
    }

    #[test]
    fn mm_step_shift_invariance() {
        let b0 = quadratic_line();
        let b1 = BanachBackend::new(
            PNormSpace::euclidean(1),
            BanachFunctional::quadratic(1.0, vec![0.0]).with_offset(7.0),
        );
        let opts = ProxOpts::default();
        let r0 = mm_step(&b0, &vec![0.8], 0.2, 2.0, &opts).unwrap();
        let r1 = mm_step(&b1, &vec![0.8], 0.2, 2.0, &opts).unwrap();
        assert_eq!(r0.state, r1.state);
    }

    #[test]
    fn convergence_study_first_order() {
        // implicit Euler on the linear ODE is first order; sup distances
        // between successive ladder levels halve
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.1, 1.0);
        let rep = gmm_convergence_study(&b, &vec![1.0], &cfg, 3).unwrap();
        let order = rep.cauchy_order.unwrap();
        assert!((order - 1.0).abs() < 0.15, "order {order}");
        // comparison with e^{-t} at the finest level
        for (i, &t) in rep.finest.partition.nodes().iter().enumerate() {
            let err = (rep.finest.states[i][0] - (-t).exp()).abs();
            assert!(err < 0.02, "t = {t}: error {err}");
        }
        // envelope dominates the energy and the gap is small here
        for &(_, env, gap) in &rep.envelope {
            assert!(gap >= 0.0 && gap < 1e-2, "env {env} gap {gap}");
        }
    }

    #[test]
    fn convergence_study_rest_point_all_levels_identical() {
        let b = quadratic_line();
        let cfg = MMConfig::uniform(2.0, 0.1, 1.0);
        let rep = gmm_convergence_study(&b, &vec![0.0], &cfg, 2).unwrap();
        for l in &rep.levels {
            if let Some(d) = l.sup_distance_to_prev {
                assert!(d < 1e-9);
            }
        }
    }

    #[test]
    fn energy_solution_exact_flow() {
        // analytic sampling of the equality case
        let times: Vec<f64> = (0..401).map(|i| i as f64 * 0.005).collect();
        let states: Vec<Vec<f64>> = times.iter().map(|&t| vec![(-t).exp()]).collect();
        let traj = Trajectory {
            energies: states.iter().map(|s| 0.5 * s[0] * s[0]).collect(),
            slopes: states.iter().map(|s| s[0].abs()).collect(),
            speeds: states.iter().map(|s| s[0].abs()).collect(),
            envelope: vec![],
            edi_residuals: vec![],
            times,
            states,
        };
        let rep = energy_solution_check_traj(&traj, 2.0).unwrap();
        assert!(rep.max_defect.abs() < 1e-4, "defect {}", rep.max_defect);
    }

    #[test]
    fn energy_solution_flags_violation() {
        // hand-built increasing-energy trajectory
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let n = times.len();
        let traj = Trajectory {
            states: vec![vec![0.0]; n],
            energies: (0..n).map(|i| i as f64).collect(),
            slopes: vec![0.0; n],
            speeds: vec![0.0; n],
            envelope: vec![],
            edi_residuals: vec![],
            times,
        };
        let rep = energy_solution_check_traj(&traj, 2.0).unwrap();
        assert!(rep.max_defect > 0.0);
    }

    #[test]
    fn energy_solution_defect_decreases_with_tau() {
        let b = quadratic_line();
        let mut defects = Vec::new();
        for tau in [0.1, 0.05, 0.025] {
            let run = run_mm(&b, &vec![1.0], &MMConfig::uniform(2.0, tau, 1.0)).unwrap();
            let rep = energy_solution_check(&b, &run).unwrap();
            defects.push(rep.max_defect.max(0.0));
        }
        assert!(defects[2] <= defects[0] + 1e-12, "{defects:?}");
    }
}

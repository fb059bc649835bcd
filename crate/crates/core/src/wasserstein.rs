//! Wasserstein backend on probability measures over the line, stored as
//! monotone quantile vectors on the mid-point level grid `(i - 1/2)/N`.
//! Realizes the JKO scheme for drift-diffusion energies built from a
//! potential, an internal energy, and an interaction kernel.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FlowError, ProxFailure, Result};
use crate::metric::{Convexity, MetricBackend, ProxOpts, ProxResult};

/// Width below which a quantile cell is treated as collapsed (an atom).
pub const CELL_TOL: f64 = 1e-12;

/// A probability measure on the line with finite `p`-moment, stored by its
/// quantile values at the levels `theta_i = (i - 1/2)/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileMeasure {
    q: Vec<f64>,
    p: f64,
}

impl QuantileMeasure {
    pub fn new(q: Vec<f64>, p: f64) -> Result<Self> {
        if q.is_empty() {
            return Err(FlowError::Input("empty quantile vector".into()));
        }
        if !(p > 1.0) {
            return Err(FlowError::Input("moment exponent must exceed 1".into()));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(FlowError::Input("quantiles must be finite".into()));
        }
        if q.windows(2).any(|w| w[1] < w[0]) {
            return Err(FlowError::Invariant(
                "quantile vector must be non-decreasing".into(),
            ));
        }
        Ok(QuantileMeasure { q, p })
    }

    /// Dirac mass at `a` on an `n`-point grid.
    pub fn dirac(a: f64, n: usize, p: f64) -> Self {
        QuantileMeasure {
            q: vec![a; n],
            p,
        }
    }

    /// Samples a quantile function `Q(theta)` at the mid-point levels.
    pub fn from_quantile_fn(n: usize, p: f64, qf: impl Fn(f64) -> f64) -> Result<Self> {
        let q: Vec<f64> = (0..n).map(|i| qf((i as f64 + 0.5) / n as f64)).collect();
        QuantileMeasure::new(q, p)
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.q
    }

    pub fn level(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.q.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.q.iter().sum::<f64>() / self.q.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.q.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.q.len() as f64
    }

    pub fn p_moment(&self) -> f64 {
        let n = self.q.len() as f64;
        self.q.iter().map(|x| x.abs().powf(self.p)).sum::<f64>() / n
    }

    pub fn translated(&self, a: f64) -> Self {
        QuantileMeasure {
            q: self.q.iter().map(|x| x + a).collect(),
            p: self.p,
        }
    }

    /// Centered cell widths `Delta q_i` of the quantile grid.
    pub fn cell_widths(&self) -> Vec<f64> {
        let n = self.q.len();
        let mut w = vec![0.0; n];
        if n == 1 {
            return w;
        }
        w[0] = self.q[1] - self.q[0];
        w[n - 1] = self.q[n - 1] - self.q[n - 2];
        for i in 1..n - 1 {
            w[i] = 0.5 * (self.q[i + 1] - self.q[i - 1]);
        }
        w
    }

    /// Density reconstruction `rho_i = (1/N) / Delta q_i`; collapsed cells
    /// yield `f64::INFINITY`.
    pub fn densities(&self) -> Vec<f64> {
        let n = self.q.len() as f64;
        self.cell_widths()
            .iter()
            .map(|&w| if w < CELL_TOL { f64::INFINITY } else { 1.0 / (n * w) })
            .collect()
    }
}

/// Exact 1D `p`-Wasserstein distance via the monotone coupling of quantiles.
pub fn wp_distance(a: &QuantileMeasure, b: &QuantileMeasure) -> Result<f64> {
    if a.n() != b.n() || a.p() != b.p() {
        return Err(FlowError::Input(format!(
            "grid mismatch: ({}, p={}) vs ({}, p={})",
            a.n(),
            a.p(),
            b.n(),
            b.p()
        )));
    }
    let n = a.n() as f64;
    let p = a.p();
    let s: f64 = a
        .quantiles()
        .iter()
        .zip(b.quantiles())
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum();
    Ok((s / n).powf(1.0 / p))
}

/// Analytic potentials `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Zero,
    /// `V(x) = curvature x^2 / 2`
    Quadratic { curvature: f64 },
}

impl Potential {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { curvature } => 0.5 * curvature * x * x,
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { curvature } => curvature * x,
        }
    }

    /// Convexity modulus of `V` (exponent 2).
    pub fn lambda(&self) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { curvature } => *curvature,
        }
    }
}

/// Internal-energy integrands `F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InternalEnergy {
    /// `F(s) = s log s`, with `0 log 0 = 0`
    Entropy,
    /// `F(s) = s^m / (m - 1)`, `m > 1`
    Power { m: f64 },
}

impl InternalEnergy {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            InternalEnergy::Entropy => {
                if s <= 0.0 {
                    0.0
                } else {
                    s * s.ln()
                }
            }
            InternalEnergy::Power { m } => s.powf(*m) / (m - 1.0),
        }
    }

    /// `L_F(r) = r F'(r) - F(r)`.
    pub fn l_f(&self, r: f64) -> f64 {
        match self {
            InternalEnergy::Entropy => r,
            InternalEnergy::Power { m } => r.powf(*m),
        }
    }
}

/// Interaction kernels `W` (convex, even, nonnegative).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteractionKernel {
    Zero,
    /// `W(x) = x^2 / 2`
    Quadratic,
}

impl InteractionKernel {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InteractionKernel::Zero => 0.0,
            InteractionKernel::Quadratic => 0.5 * x * x,
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            InteractionKernel::Zero => 0.0,
            InteractionKernel::Quadratic => x,
        }
    }
}

/// The drift-diffusion energy
/// `phi(mu) = c1 V-term + c2 F-term + c3 W-term`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub potential: Potential,
    pub internal: InternalEnergy,
    pub interaction: InteractionKernel,
}

impl EnergySpec {
    pub fn validate(&self) -> Result<()> {
        if self.c1 < 0.0 || self.c2 < 0.0 || self.c3 < 0.0 {
            return Err(FlowError::Input(
                "energy coefficients must be nonnegative".into(),
            ));
        }
        if let InternalEnergy::Power { m } = self.internal {
            if !(m > 1.0) {
                return Err(FlowError::Input("power internal energy needs m > 1".into()));
            }
        }
        Ok(())
    }

    /// Convexity modulus of the whole energy (interaction and internal
    /// terms are geodesically convex, so only `c1 V` contributes).
    pub fn lambda(&self) -> f64 {
        self.c1 * self.potential.lambda()
    }

    pub fn entropy_only(n_unused: ()) -> Self {
        let _ = n_unused;
        EnergySpec {
            c1: 0.0,
            c2: 1.0,
            c3: 0.0,
            potential: Potential::Zero,
            internal: InternalEnergy::Entropy,
            interaction: InteractionKernel::Zero,
        }
    }
}

/// Evaluates the energy of a measure; collapsed cells make the internal
/// term infinite (both implemented `F` diverge on atoms).
pub fn energy_eval(spec: &EnergySpec, mu: &QuantileMeasure) -> f64 {
    let n = mu.n() as f64;
    let q = mu.quantiles();
    let mut total = 0.0;
    if spec.c1 > 0.0 {
        total += spec.c1 * q.iter().map(|&x| spec.potential.eval(x)).sum::<f64>() / n;
    }
    if spec.c2 > 0.0 {
        // interface discretization: each consecutive gap carries mass 1/N at
        // density rho_{i+1/2} = (1/N)/(q_{i+1} - q_i). Its variational
        // gradient is exactly the interface-difference driving field, so the
        // discrete flow and the discrete slope share one stationarity notion
        // (a centered-cell form would decouple even and odd nodes and grow a
        // checkerboard boundary layer).
        let mut f_term = 0.0;
        for w in q.windows(2) {
            let width = w[1] - w[0];
            if width < CELL_TOL {
                return f64::INFINITY;
            }
            let rho = 1.0 / (n * width);
            f_term += spec.internal.eval(rho) * width;
        }
        total += spec.c2 * f_term;
    }
    if spec.c3 > 0.0 {
        let mut w_term = 0.0;
        for &x in q {
            for &y in q {
                w_term += spec.interaction.eval(x - y);
            }
        }
        total += spec.c3 * w_term / (2.0 * n * n);
    }
    total
}

/// The driving field
/// `G = c1 V' + c2 grad L_F(rho)/rho + c3 W' * rho` at the quantile points.
/// The diffusion part is evaluated in level coordinates as
/// `d_theta(L_F(rho) o Q) / (rho o Q * d_theta Q)` by central differences.
pub fn driving_field(spec: &EnergySpec, mu: &QuantileMeasure) -> Vec<f64> {
    let n = mu.n();
    let nf = n as f64;
    let q = mu.quantiles();
    let dtheta = 1.0 / nf;
    let mut field = vec![0.0; n];
    if spec.c1 > 0.0 {
        for i in 0..n {
            field[i] += spec.c1 * spec.potential.deriv(q[i]);
        }
    }
    if spec.c2 > 0.0 && n >= 2 {
        // interface densities rho_{i+1/2} = (1/N)/(q_{i+1} - q_i) satisfy
        // rho * d_theta Q = 1 exactly, so the diffusion term reduces to the
        // centered interface difference N (L_F(rho_{i+1/2}) - L_F(rho_{i-1/2})).
        // The boundary interfaces carry the natural condition L_F(rho) -> 0,
        // which is also the variational gradient of the discretized energy.
        let rho = mu.densities();
        let mut lf_int = vec![0.0; n + 1]; // interface i between nodes i-1, i
        for i in 1..n {
            let w = q[i] - q[i - 1];
            if w < CELL_TOL {
                lf_int[i] = f64::NAN; // collapsed cell, flagged downstream
            } else {
                lf_int[i] = spec.internal.l_f(1.0 / (nf * w));
            }
        }
        for i in 0..n {
            if !rho[i].is_finite() {
                continue; // collapsed cell, flagged by the slope report
            }
            let d = (lf_int[i + 1] - lf_int[i]) / dtheta;
            if d.is_finite() {
                field[i] += spec.c2 * d;
            }
        }
    }
    if spec.c3 > 0.0 {
        for i in 0..n {
            let conv: f64 = q.iter().map(|&y| spec.interaction.deriv(q[i] - y)).sum();
            field[i] += spec.c3 * conv / nf;
        }
    }
    field
}

/// Fraction of the median density below which a cell counts as
/// vanishing-density and is excluded from the slope integral.
pub const DENSITY_FLOOR_FRACTION: f64 = 0.1;

/// Metric slope of the energy at a measure: the `L^{p'}(mu)` norm of the
/// driving field. When the internal term is active, collapsed cells and
/// vanishing-density cells (density below a fixed fraction of the median)
/// are excluded and their mass reported: in such cells the reconstructed
/// quantile map has unbounded curvature and no finite-difference field
/// value converges, while their contribution to the norm carries the
/// reported mass deficit.
#[derive(Debug, Clone)]
pub struct SlopeReport {
    pub value: f64,
    /// Probability mass of cells excluded as collapsed or vanishing-density.
    pub excluded_mass: f64,
}

pub fn wasserstein_slope(spec: &EnergySpec, mu: &QuantileMeasure) -> SlopeReport {
    let n = mu.n();
    let nf = n as f64;
    let pp = mu.p() / (mu.p() - 1.0);
    let field = driving_field(spec, mu);
    let rho = mu.densities();
    let floor = if spec.c2 > 0.0 {
        let mut sorted: Vec<f64> = rho.iter().cloned().filter(|r| r.is_finite()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted
            .get(sorted.len() / 2)
            .map(|&m| DENSITY_FLOOR_FRACTION * m)
            .unwrap_or(0.0)
    } else {
        0.0
    };
    let mut s = 0.0;
    let mut excluded = 0usize;
    for i in 0..n {
        if spec.c2 > 0.0 && (!rho[i].is_finite() || rho[i] < floor) {
            excluded += 1;
            continue;
        }
        s += field[i].abs().powf(pp);
    }
    SlopeReport {
        value: (s / nf).powf(1.0 / pp),
        excluded_mass: excluded as f64 / nf,
    }
}

/// Euclidean gradient of the energy with respect to the quantile vector
/// (includes the `1/N` particle weights).
fn energy_gradient(spec: &EnergySpec, q: &[f64], p_unused: f64) -> Vec<f64> {
    let _ = p_unused;
    let n = q.len();
    let nf = n as f64;
    let mut g = vec![0.0; n];
    if spec.c1 > 0.0 {
        for i in 0..n {
            g[i] += spec.c1 * spec.potential.deriv(q[i]) / nf;
        }
    }
    if spec.c2 > 0.0 && n >= 2 {
        // F-term = sum over interfaces of A(w), A(w) = F((1/N)/w) w with
        // A'(w) = -L_F(rho); each gap w_i = q_{i+1} - q_i contributes
        // +A'(w_i) to g[i+1] and -A'(w_i) to g[i], which telescopes to the
        // interface-difference driving field with natural boundary terms.
        let a_prime = |w: f64| -> f64 {
            let w = w.max(CELL_TOL);
            -spec.c2 * spec.internal.l_f(1.0 / (nf * w))
        };
        for i in 0..n - 1 {
            let ap = a_prime(q[i + 1] - q[i]);
            g[i + 1] += ap;
            g[i] -= ap;
        }
    }
    if spec.c3 > 0.0 {
        for i in 0..n {
            let conv: f64 = q.iter().map(|&y| spec.interaction.deriv(q[i] - y)).sum();
            g[i] += spec.c3 * conv / (nf * nf);
        }
    }
    g
}

/// Pool-adjacent-violators projection onto non-decreasing vectors
/// (uniform weights).
pub fn isotonic_projection(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    let mut count: Vec<usize> = Vec::with_capacity(n);
    for &x in v {
        level.push(x);
        weight.push(1.0);
        count.push(1);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (l2, w2, c2) = (level.pop().unwrap(), weight.pop().unwrap(), count.pop().unwrap());
            let k = level.len() - 1;
            let merged = (level[k] * weight[k] + l2 * w2) / (weight[k] + w2);
            level[k] = merged;
            weight[k] += w2;
            count[k] += c2;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (l, c) in level.iter().zip(&count) {
        out.extend(std::iter::repeat(*l).take(*c));
    }
    out
}

/// One JKO step: minimizes
/// `(1/(p tau^{p-1})) (1/N) sum |q_i - qprev_i|^p + phi(q)` over monotone
/// quantile vectors by projected gradient with isotonic projection,
/// warm-started at the previous quantiles.
pub fn jko_step(
    spec: &EnergySpec,
    mu_prev: &QuantileMeasure,
    tau: f64,
    p: f64,
    opts: &ProxOpts,
) -> std::result::Result<ProxResult<QuantileMeasure>, ProxFailure<QuantileMeasure>> {
    let n = mu_prev.n();
    let nf = n as f64;
    let q_prev = mu_prev.quantiles().to_vec();
    let scale = 1.0 / (p * tau.powf(p - 1.0) * nf);

    let objective = |q: &[f64]| -> f64 {
        let movement: f64 = q
            .iter()
            .zip(&q_prev)
            .map(|(a, b)| (a - b).abs().powf(p))
            .sum::<f64>()
            * scale;
        let mu = QuantileMeasure {
            q: q.to_vec(),
            p: mu_prev.p(),
        };
        movement + energy_eval(spec, &mu)
    };
    let gradient = |q: &[f64]| -> Vec<f64> {
        let mut g = energy_gradient(spec, q, p);
        let mscale = 1.0 / (tau.powf(p - 1.0) * nf);
        for (gi, (a, b)) in g.iter_mut().zip(q.iter().zip(&q_prev)) {
            let d = a - b;
            *gi += mscale * d.abs().powf(p - 2.0) * d;
        }
        g
    };
    // projected-gradient residual at a fixed probe step
    let probe = tau.min(1.0);
    let residual_of = |q: &[f64], g: &[f64]| -> f64 {
        let trial: Vec<f64> = q.iter().zip(g).map(|(qi, gi)| qi - probe * gi).collect();
        let proj = isotonic_projection(&trial);
        (q.iter()
            .zip(&proj)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
        .sqrt()
            / probe
    };

    let mut q = q_prev.clone();
    let mut fq = objective(&q);
    let mut step = tau;
    let mut res = f64::INFINITY;
    for it in 0..opts.max_iter {
        let g = gradient(&q);
        res = residual_of(&q, &g);
        if res <= opts.tol {
            return Ok(ProxResult {
                state: QuantileMeasure {
                    q,
                    p: mu_prev.p(),
                },
                residual: res,
                iterations: it,
            });
        }
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = q.iter().zip(&g).map(|(qi, gi)| qi - step * gi).collect();
            let cand = isotonic_projection(&trial);
            let fc = objective(&cand);
            let move2: f64 = cand
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if fc < fq && fc <= fq - 0.25 * move2 / step {
                q = cand;
                fq = fc;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // objective differences fell below float resolution; polish by
            // accepting steps that shrink the projected-gradient residual
            let mut pstep = tau;
            for _ in it..opts.max_iter {
                if res <= opts.tol {
                    break;
                }
                let g = gradient(&q);
                res = residual_of(&q, &g);
                let mut improved = false;
                for _ in 0..80 {
                    let trial: Vec<f64> =
                        q.iter().zip(&g).map(|(qi, gi)| qi - pstep * gi).collect();
                    let cand = isotonic_projection(&trial);
                    let rc = residual_of(&cand, &gradient(&cand));
                    if rc < res {
                        q = cand;
                        res = rc;
                        pstep *= 2.0;
                        improved = true;
                        break;
                    }
                    pstep *= 0.5;
                }
                if !improved {
                    break;
                }
            }
            break;
        }
    }
    let state = QuantileMeasure {
        q,
        p: mu_prev.p(),
    };
    if res <= opts.tol {
        Ok(ProxResult {
            state,
            residual: res,
            iterations: opts.max_iter,
        })
    } else {
        Err(ProxFailure {
            best: state,
            residual: res,
            iterations: opts.max_iter,
        })
    }
}

/// Quantile representation of the Gibbs rest point
/// `rho = exp(-(c1/c2) V) / Z` by numerical CDF inversion.
pub fn gibbs_stationary(spec: &EnergySpec, n: usize, p: f64) -> Result<QuantileMeasure> {
    spec.validate()?;
    if spec.c3 != 0.0 || spec.interaction != InteractionKernel::Zero && spec.c3 > 0.0 {
        return Err(FlowError::Domain(
            "Gibbs rest point requires no interaction term (c3 = 0)".into(),
        ));
    }
    if !(spec.c1 > 0.0 && spec.c2 > 0.0) {
        return Err(FlowError::Domain(
            "Gibbs rest point requires c1 > 0 and c2 > 0".into(),
        ));
    }
    if spec.internal != InternalEnergy::Entropy {
        return Err(FlowError::Domain(
            "Gibbs rest point implemented for the entropy internal energy".into(),
        ));
    }
    let beta = spec.c1 / spec.c2;
    let dens = |x: f64| (-beta * spec.potential.eval(x)).exp();

    // expand the support until the unnormalized density is negligible
    let mut half = 1.0;
    let mut grew = 0;
    while dens(half) > 1e-20 || dens(-half) > 1e-20 {
        half *= 2.0;
        grew += 1;
        if grew > 60 {
            return Err(FlowError::Domain(
                "exp(-c1 V / c2) does not appear integrable".into(),
            ));
        }
    }

    // composite Simpson CDF on a fine grid, then per-level Newton inversion
    let m = (64 * n.max(64)).next_power_of_two();
    let h = 2.0 * half / m as f64;
    let xs: Vec<f64> = (0..=m).map(|i| -half + i as f64 * h).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| dens(x)).collect();
    let mut cdf = vec![0.0; m + 1];
    for i in (2..=m).step_by(2) {
        cdf[i] = cdf[i - 2] + h / 3.0 * (fs[i - 2] + 4.0 * fs[i - 1] + fs[i]);
        cdf[i - 1] = cdf[i - 2] + h / 12.0 * (5.0 * fs[i - 2] + 8.0 * fs[i - 1] - fs[i]);
    }
    let z = cdf[m];
    if !(z > 0.0) || !z.is_finite() {
        return Err(FlowError::Domain("degenerate Gibbs normalization".into()));
    }

    let mut q = Vec::with_capacity(n);
    for i in 0..n {
        let target = (i as f64 + 0.5) / n as f64 * z;
        let j = cdf.partition_point(|&c| c < target).min(m);
        let (j0, j1) = (j.saturating_sub(1), j);
        let mut x = if cdf[j1] > cdf[j0] {
            xs[j0] + (target - cdf[j0]) / (cdf[j1] - cdf[j0]) * (xs[j1] - xs[j0])
        } else {
            xs[j0]
        };
        // Newton refinement on CDF(x) = target using the analytic density
        for _ in 0..30 {
            let jx = ((x + half) / h).floor().max(0.0).min((m - 1) as f64) as usize;
            let cdf_x = cdf[jx] + 0.5 * (dens(xs[jx]) + dens(x)) * (x - xs[jx]);
            let d = dens(x);
            if d <= 0.0 {
                break;
            }
            let delta = (cdf_x - target) / d;
            x -= delta;
            if delta.abs() < 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        q.push(x);
    }
    // floating-point noise can leave microscopic non-monotonicity
    let q = isotonic_projection(&q);
    QuantileMeasure::new(q, p)
}

/// Weak-form residual of the drift-diffusion equation along a sampled
/// sequence of measures, against a battery of smooth bump test functions.
#[derive(Debug, Clone)]
pub struct PdeResidualReport {
    pub max_residual: f64,
    pub tests: usize,
}

pub fn pde_residual(
    spec: &EnergySpec,
    times: &[f64],
    measures: &[QuantileMeasure],
    p: f64,
) -> Result<PdeResidualReport> {
    if times.len() != measures.len() {
        return Err(FlowError::Input("times/measures length mismatch".into()));
    }
    if times.len() < 3 {
        return Err(FlowError::Input(
            "PDE residual needs at least three time samples".into(),
        ));
    }
    let n = measures[0].n();
    if measures.iter().any(|m| m.n() != n) {
        return Err(FlowError::Input("measures must share a common grid".into()));
    }
    let pp = p / (p - 1.0);
    let jpp = |r: f64| r.abs().powf(pp - 2.0) * r;

    // battery of compactly supported bumps covering the data range
    let lo = measures
        .iter()
        .flat_map(|m| m.quantiles().iter().cloned())
        .fold(f64::INFINITY, f64::min);
    let hi = measures
        .iter()
        .flat_map(|m| m.quantiles().iter().cloned())
        .fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-6);
    let mut tests: Vec<(f64, f64)> = Vec::new(); // (center, halfwidth)
    for k in 0..5 {
        let c = lo + span * (k as f64 + 0.5) / 5.0;
        tests.push((c, span * 0.6));
        tests.push((c, span * 0.3));
    }
    let bump = |x: f64, c: f64, w: f64| -> f64 {
        let y = (x - c) / w;
        if y.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - y * y)).exp()
        }
    };
    let bump_deriv = |x: f64, c: f64, w: f64| -> f64 {
        let y = (x - c) / w;
        if y.abs() >= 1.0 {
            0.0
        } else {
            let b = (1.0 - 1.0 / (1.0 - y * y)).exp();
            b * (-2.0 * y / ((1.0 - y * y) * (1.0 - y * y))) / w
        }
    };

    let nf = n as f64;
    let mut max_residual = 0.0f64;
    for &(c, w) in &tests {
        let moments: Vec<f64> = measures
            .iter()
            .map(|m| m.quantiles().iter().map(|&x| bump(x, c, w)).sum::<f64>() / nf)
            .collect();
        for k in 1..times.len() - 1 {
            let dt_m = (moments[k + 1] - moments[k - 1]) / (times[k + 1] - times[k - 1]);
            let field = driving_field(spec, &measures[k]);
            let flux: f64 = measures[k]
                .quantiles()
                .iter()
                .zip(&field)
                .map(|(&x, &g)| bump_deriv(x, c, w) * jpp(g))
                .sum::<f64>()
                / nf;
            max_residual = max_residual.max((dt_m + flux).abs());
        }
    }
    Ok(PdeResidualReport {
        max_residual,
        tests: tests.len(),
    })
}

/// The Wasserstein instantiation of [`MetricBackend`].
#[derive(Debug, Clone)]
pub struct WassersteinBackend {
    pub spec: EnergySpec,
    pub n: usize,
    pub p: f64,
}

impl WassersteinBackend {
    pub fn new(spec: EnergySpec, n: usize, p: f64) -> Result<Self> {
        spec.validate()?;
        if n == 0 || n > 4096 {
            return Err(FlowError::Input(
                "quantile grid size must lie in 1..=4096".into(),
            ));
        }
        Ok(WassersteinBackend { spec, n, p })
    }
}

impl MetricBackend for WassersteinBackend {
    type State = QuantileMeasure;

    fn distance(&self, u: &QuantileMeasure, v: &QuantileMeasure) -> f64 {
        wp_distance(u, v).expect("states on a shared backend share the grid")
    }

    fn energy(&self, u: &QuantileMeasure) -> f64 {
        energy_eval(&self.spec, u)
    }

    fn slope(&self, u: &QuantileMeasure) -> f64 {
        wasserstein_slope(&self.spec, u).value
    }

    fn prox(
        &self,
        u_prev: &QuantileMeasure,
        step: f64,
        p: f64,
        opts: &ProxOpts,
    ) -> std::result::Result<ProxResult<QuantileMeasure>, ProxFailure<QuantileMeasure>> {
        jko_step(&self.spec, u_prev, step, p, opts)
    }

    fn sample_near(&self, u: &QuantileMeasure, radius: f64, rng: &mut ChaCha8Rng) -> QuantileMeasure {
        let n = u.n();
        let noise: Vec<f64> = (0..n)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        // scale the monotone projection of the perturbation to the radius
        let mut s = radius;
        for _ in 0..40 {
            let trial: Vec<f64> = u
                .quantiles()
                .iter()
                .zip(&noise)
                .map(|(qi, ni)| qi + s * ni)
                .collect();
            let cand = QuantileMeasure {
                q: isotonic_projection(&trial),
                p: u.p(),
            };
            let d = self.distance(u, &cand);
            if d >= 0.5 * radius && d <= 2.0 * radius {
                return cand;
            }
            if d < 0.5 * radius {
                s *= 2.0;
            } else {
                s *= 0.5;
            }
        }
        u.clone()
    }

    fn exact_minimizer(&self) -> Option<QuantileMeasure> {
        gibbs_stationary(&self.spec, self.n, self.p).ok()
    }

    fn convexity(&self) -> Option<Convexity> {
        Some(Convexity {
            lambda: self.spec.lambda(),
            exponent: 2.0,
        })
    }

    /// Flows the measure by JKO steps until the discrete velocity
    /// `W_p(step) / tau` falls below the tolerance; the fixed point of the
    /// step is exactly the stationary point of the discretized energy.
    fn refine_rest_point(
        &self,
        seed: &QuantileMeasure,
        tol: f64,
        max_iter: usize,
    ) -> Option<QuantileMeasure> {
        let tau = 0.05;
        let opts = ProxOpts {
            tol: (tol * tau * 1e-2).max(1e-12),
            max_iter: 200_000,
            restart_seed: 0,
        };
        let mut mu = seed.clone();
        for _ in 0..max_iter {
            let r = jko_step(&self.spec, &mu, tau, self.p, &opts).ok()?;
            let moved = self.distance(&mu, &r.state);
            mu = r.state;
            if moved / tau <= tol {
                return Some(mu);
            }
        }
        None
    }
}

impl crate::engine::StateBits for QuantileMeasure {
    fn state_bits(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        Box::new(self.q.iter().map(|x| x.to_bits()))
    }
}

//! Finite-dimensional Banach backend: p-norms on R^n, the p-duality map,
//! quadratic / power / double-well / discretized Allen-Cahn functionals, and
//! the gradient-based proximal solver behind the minimizing-movement step.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FlowError, ProxFailure, Result};
use crate::metric::{Convexity, MetricBackend, ProxOpts, ProxResult};

/// State-dependent weight families for the frozen-coefficient Finsler mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FinslerWeight {
    /// `rho(u) = 1 + u^2 / (1 + u^2)`, bounded in `[1, 2]`.
    AllenCahnRho,
}

impl FinslerWeight {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            FinslerWeight::AllenCahnRho => 1.0 + u * u / (1.0 + u * u),
        }
    }

    /// Bound `K` with `K^-1 ||v|| <= eta_u(v) <= K ||v||`.
    pub fn equivalence_constant(&self) -> f64 {
        match self {
            FinslerWeight::AllenCahnRho => 2.0f64.sqrt(),
        }
    }
}

/// `R^n` with the `q`-norm, optionally carrying a state-dependent weight
/// family used (frozen at the previous iterate) as the step metric.
#[derive(Debug, Clone)]
pub struct PNormSpace {
    pub dim: usize,
    pub q_norm: f64,
    pub finsler: Option<FinslerWeight>,
}

impl PNormSpace {
    pub fn new(dim: usize, q_norm: f64) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        assert!(q_norm > 1.0, "norm exponent must lie in (1, inf)");
        PNormSpace {
            dim,
            q_norm,
            finsler: None,
        }
    }

    pub fn euclidean(dim: usize) -> Self {
        PNormSpace::new(dim, 2.0)
    }

    pub fn with_finsler(mut self, w: FinslerWeight) -> Self {
        self.finsler = Some(w);
        self
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        lq_norm(v, self.q_norm)
    }

    /// Dual norm (the `q'`-norm) of a covector.
    pub fn dual_norm(&self, xi: &[f64]) -> f64 {
        lq_norm(xi, conjugate(self.q_norm))
    }

    /// Weighted norm `eta_w(v) = (sum w_i |v_i|^q)^(1/q)`.
    pub fn weighted_norm(&self, w: &[f64], v: &[f64]) -> f64 {
        v.iter()
            .zip(w)
            .map(|(vi, wi)| wi * vi.abs().powf(self.q_norm))
            .sum::<f64>()
            .powf(1.0 / self.q_norm)
    }
}

fn lq_norm(v: &[f64], q: f64) -> f64 {
    if v.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    // scale out the max to avoid overflow for large exponents
    let m = v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    m * v
        .iter()
        .map(|&x| (x.abs() / m).powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// The p-duality map on `(R^n, ||.||_q)`: the covector `xi` with
/// `<xi, v> = ||v||^p = ||xi||_*^{p'}`. Returns zero at `v = 0`.
pub fn jp_dual(v: &[f64], p: f64, q: f64) -> Vec<f64> {
    assert!(p > 1.0);
    let n = lq_norm(v, q);
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    let scale = n.powf(p - q);
    v.iter()
        .map(|&x| scale * x.abs().powf(q - 2.0) * x)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalKind {
    /// `lambda/2 ||u - c||_2^2`
    Quadratic { lambda: f64, center: Vec<f64> },
    /// `lambda/r ||u - c||_2^r`; the (lambda, r)-convex analytic form
    PowerDistance {
        lambda: f64,
        exponent: f64,
        center: Vec<f64>,
    },
    /// `sum_i (u_i^2 - 1)^2 / 4`
    DoubleWell,
    /// 1D Allen-Cahn energy `sum j(D_h u) h + sum W(u_i) h` with
    /// homogeneous Dirichlet ends, `j(s) = s^2/2`, `W(u) = (u^2-1)^2/4`.
    AllenCahn1d { h: f64 },
}

/// An energy on a [`PNormSpace`] with analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct BanachFunctional {
    pub kind: FunctionalKind,
    pub offset: f64,
}

impl BanachFunctional {
    pub fn quadratic(lambda: f64, center: Vec<f64>) -> Self {
        BanachFunctional {
            kind: FunctionalKind::Quadratic { lambda, center },
            offset: 0.0,
        }
    }

    pub fn power_distance(lambda: f64, exponent: f64, center: Vec<f64>) -> Self {
        assert!(exponent > 1.0);
        BanachFunctional {
            kind: FunctionalKind::PowerDistance {
                lambda,
                exponent,
                center,
            },
            offset: 0.0,
        }
    }

    pub fn double_well() -> Self {
        BanachFunctional {
            kind: FunctionalKind::DoubleWell,
            offset: 0.0,
        }
    }

    /// Allen-Cahn on a uniform grid of `n` interior points over `[0, 1]`.
    pub fn allen_cahn_1d(n: usize) -> Self {
        BanachFunctional {
            kind: FunctionalKind::AllenCahn1d {
                h: 1.0 / (n as f64 + 1.0),
            },
            offset: 0.0,
        }
    }

    pub fn with_offset(mut self, c: f64) -> Self {
        self.offset = c;
        self
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.offset
            + match &self.kind {
                FunctionalKind::Quadratic { lambda, center } => {
                    0.5 * lambda * sq_dist(u, center)
                }
                FunctionalKind::PowerDistance {
                    lambda,
                    exponent,
                    center,
                } => lambda / exponent * sq_dist(u, center).sqrt().powf(*exponent),
                FunctionalKind::DoubleWell => {
                    u.iter().map(|&x| (x * x - 1.0).powi(2) / 4.0).sum()
                }
                FunctionalKind::AllenCahn1d { h } => allen_cahn_energy(u, *h),
            }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        match &self.kind {
            FunctionalKind::Quadratic { lambda, center } => u
                .iter()
                .zip(center)
                .map(|(ui, ci)| lambda * (ui - ci))
                .collect(),
            FunctionalKind::PowerDistance {
                lambda,
                exponent,
                center,
            } => {
                let d = sq_dist(u, center).sqrt();
                if d == 0.0 {
                    return vec![0.0; u.len()];
                }
                let scale = lambda * d.powf(exponent - 2.0);
                u.iter()
                    .zip(center)
                    .map(|(ui, ci)| scale * (ui - ci))
                    .collect()
            }
            FunctionalKind::DoubleWell => u.iter().map(|&x| x * x * x - x).collect(),
            FunctionalKind::AllenCahn1d { h } => allen_cahn_gradient(u, *h),
        }
    }

    /// Geodesic-convexity certificate `(lambda, exponent)`.
    pub fn convexity(&self) -> Option<Convexity> {
        match &self.kind {
            FunctionalKind::Quadratic { lambda, .. } => Some(Convexity {
                lambda: *lambda,
                exponent: 2.0,
            }),
            // (mu/p) d^p(., c) is (lambda, p)-convex with modulus
            // lambda = mu * min(1, p - 1): the two-sided energy/slope
            // estimate saturates on the right for p < 2 and on the left for
            // p >= 2, and any larger modulus violates one side.
            FunctionalKind::PowerDistance {
                lambda, exponent, ..
            } => Some(Convexity {
                lambda: *lambda * 1.0f64.min(*exponent - 1.0),
                exponent: *exponent,
            }),
            // min W'' = W''(0) = -1 on the relevant range
            FunctionalKind::DoubleWell => Some(Convexity {
                lambda: -1.0,
                exponent: 2.0,
            }),
            FunctionalKind::AllenCahn1d { h } => {
                let n = (1.0 / h).round() as usize - 1;
                let lap_min = 4.0 * (std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
                Some(Convexity {
                    lambda: lap_min / h - h,
                    exponent: 2.0,
                })
            }
        }
    }

    /// Whether the certificate saturates the slope representation formula
    /// (true for the genuinely convex quadratic forms).
    pub fn certificate_exact(&self) -> bool {
        match &self.kind {
            FunctionalKind::Quadratic { lambda, .. } => *lambda >= 0.0,
            FunctionalKind::PowerDistance {
                lambda, exponent, ..
            } => *lambda >= 0.0 && *exponent == 2.0,
            _ => false,
        }
    }

    pub fn exact_minimizer(&self, dim: usize) -> Option<Vec<f64>> {
        match &self.kind {
            FunctionalKind::Quadratic { lambda, center } if *lambda > 0.0 => {
                Some(center.clone())
            }
            FunctionalKind::PowerDistance { lambda, center, .. } if *lambda > 0.0 => {
                Some(center.clone())
            }
            // constant energy: every point minimizes; pick the origin
            FunctionalKind::Quadratic { lambda, .. } if *lambda == 0.0 => Some(vec![0.0; dim]),
            _ => None,
        }
    }
}

fn sq_dist(u: &[f64], c: &[f64]) -> f64 {
    u.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn allen_cahn_energy(u: &[f64], h: f64) -> f64 {
    let n = u.len();
    let mut e = 0.0;
    // forward differences, Dirichlet zero at both ends
    let mut prev = 0.0;
    for &ui in u {
        let s = (ui - prev) / h;
        e += 0.5 * s * s * h;
        prev = ui;
    }
    let s = (0.0 - prev) / h;
    e += 0.5 * s * s * h;
    for &ui in u.iter().take(n) {
        e += (ui * ui - 1.0).powi(2) / 4.0 * h;
    }
    e
}

fn allen_cahn_gradient(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let mut g = vec![0.0; n];
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { u[i - 1] };
        let right = if i + 1 == n { 0.0 } else { u[i + 1] };
        g[i] = -(right - 2.0 * u[i] + left) / h + (u[i] * u[i] * u[i] - u[i]) * h;
    }
    g
}

/// The Banach instantiation of [`MetricBackend`].
#[derive(Debug, Clone)]
pub struct BanachBackend {
    pub space: PNormSpace,
    pub functional: BanachFunctional,
}

impl BanachBackend {
    pub fn new(space: PNormSpace, functional: BanachFunctional) -> Self {
        BanachBackend { space, functional }
    }
}

impl MetricBackend for BanachBackend {
    type State = Vec<f64>;

    fn distance(&self, u: &Vec<f64>, v: &Vec<f64>) -> f64 {
        let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        self.space.norm(&diff)
    }

    fn energy(&self, u: &Vec<f64>) -> f64 {
        self.functional.energy(u)
    }

    fn slope(&self, u: &Vec<f64>) -> f64 {
        self.space.dual_norm(&self.functional.gradient(u))
    }

    fn prox(
        &self,
        u_prev: &Vec<f64>,
        step: f64,
        p: f64,
        opts: &ProxOpts,
    ) -> std::result::Result<ProxResult<Vec<f64>>, ProxFailure<Vec<f64>>> {
        banach_prox(&self.functional, &self.space, u_prev, step, p, opts)
    }

    fn sample_near(&self, u: &Vec<f64>, radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        // gaussian direction rescaled to the requested q-norm radius
        let mut dir: Vec<f64> = (0..u.len())
            .map(|_| {
                // Box-Muller from two uniforms keeps us independent of
                // rand_distr
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        let n = self.space.norm(&dir);
        if n == 0.0 {
            dir[0] = 1.0;
            return self.sample_near(u, radius, rng);
        }
        u.iter().zip(&dir).map(|(ui, di)| ui + radius * di / n).collect()
    }

    fn exact_minimizer(&self) -> Option<Vec<f64>> {
        self.functional.exact_minimizer(self.space.dim)
    }

    fn convexity(&self) -> Option<Convexity> {
        self.functional.convexity()
    }

    /// Drives the euclidean gradient norm `g(u) = |grad phi(u)|^2 / 2` to
    /// zero by descent, using a central-difference Hessian-vector product
    /// along the gradient itself. This converges to critical points of any
    /// index, not just minimizers.
    fn refine_rest_point(&self, seed: &Vec<f64>, tol: f64, max_iter: usize) -> Option<Vec<f64>> {
        let grad = |u: &[f64]| self.functional.gradient(u);
        let gnorm2 = |w: &[f64]| 0.5 * w.iter().map(|x| x * x).sum::<f64>();
        let mut u = seed.clone();
        let mut step = 1.0f64;
        for _ in 0..max_iter {
            let w = grad(&u);
            if self.space.dual_norm(&w) <= tol {
                return Some(u);
            }
            let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if wn == 0.0 {
                return Some(u);
            }
            let h = 1e-6 / wn;
            let up: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + h * b).collect();
            let um: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - h * b).collect();
            let (gp, gm) = (grad(&up), grad(&um));
            // descent direction for g: H(u) grad phi(u)
            let dir: Vec<f64> = gp
                .iter()
                .zip(&gm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let g0 = gnorm2(&w);
            let dir_n2: f64 = dir.iter().map(|x| x * x).sum();
            if dir_n2 == 0.0 {
                return Some(u);
            }
            // trust radius: cap the displacement so refinement stays in the
            // seed's basin instead of hopping to a remote stationary point
            let u_n2: f64 = u.iter().map(|x| x * x).sum();
            let cap = 0.1 * (1.0 + u_n2.sqrt()) / dir_n2.sqrt();
            step = step.min(cap);
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a - step * b).collect();
                if gnorm2(&grad(&cand)) <= g0 - 1e-4 * step * dir_n2 {
                    u = cand;
                    step *= 2.0;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let w = grad(&u);
        if self.space.dual_norm(&w) <= tol {
            Some(u)
        } else {
            None
        }
    }
}

/// Gradient-descent-with-backtracking minimizer of the movement functional
/// `v -> eta(v - u_prev)^p / (p step^(p-1)) + phi(v)`, warm-started at
/// `u_prev`. Nonconvex energies get three seeded restarts around `u_prev`.
///
/// The returned residual is the dual norm of
/// `J_p((v - u_prev)/step) + grad phi(v)`, the discrete minimal-section
/// inclusion defect.
pub fn banach_prox(
    f: &BanachFunctional,
    sp: &PNormSpace,
    u_prev: &[f64],
    step: f64,
    p: f64,
    opts: &ProxOpts,
) -> std::result::Result<ProxResult<Vec<f64>>, ProxFailure<Vec<f64>>> {
    assert!(step > 0.0 && p > 1.0);
    let weights: Option<Vec<f64>> = sp
        .finsler
        .map(|w| u_prev.iter().map(|&ui| w.eval(ui)).collect());

    let movement = |v: &[f64]| -> f64 {
        let diff: Vec<f64> = v.iter().zip(u_prev).map(|(a, b)| a - b).collect();
        let n = match &weights {
            Some(w) => sp.weighted_norm(w, &diff),
            None => sp.norm(&diff),
        };
        n.powf(p) / (p * step.powf(p - 1.0))
    };
    let movement_grad = |v: &[f64]| -> Vec<f64> {
        let diff: Vec<f64> = v.iter().zip(u_prev).map(|(a, b)| a - b).collect();
        match &weights {
            Some(w) => {
                let n = sp.weighted_norm(w, &diff);
                if n == 0.0 {
                    return vec![0.0; v.len()];
                }
                let scale = n.powf(p - sp.q_norm) / step.powf(p - 1.0);
                diff.iter()
                    .zip(w)
                    .map(|(&x, wi)| scale * wi * x.abs().powf(sp.q_norm - 2.0) * x)
                    .collect()
            }
            None => jp_dual(&diff, p, sp.q_norm)
                .into_iter()
                .map(|x| x / step.powf(p - 1.0))
                .collect(),
        }
    };
    let objective = |v: &[f64]| movement(v) + f.energy(v);
    let total_grad = |v: &[f64]| -> Vec<f64> {
        let mut g = movement_grad(v);
        for (gi, pi) in g.iter_mut().zip(f.gradient(v)) {
            *gi += pi;
        }
        g
    };

    // the movement term adds 1/step of convexity for p = 2, so the inner
    // problem is convex (single minimizer, no restarts) whenever
    // lambda + 1/step >= 0
    let convex = f.certificate_exact()
        || matches!(f.convexity(), Some(c) if c.lambda >= 0.0)
        || (p == 2.0
            && matches!(f.convexity(), Some(c) if c.exponent == 2.0 && c.lambda + 1.0 / step >= 0.0));
    let mut starts = vec![u_prev.to_vec()];
    if !convex {
        let g0 = f.gradient(u_prev);
        let r = step * sp.dual_norm(&g0);
        if r > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.restart_seed);
            for _ in 0..3 {
                let v: Vec<f64> = u_prev
                    .iter()
                    .map(|&ui| ui + r * rng.gen_range(-1.0..1.0))
                    .collect();
                starts.push(v);
            }
        }
    }

    let mut best: Option<(Vec<f64>, f64, f64, usize)> = None; // (state, obj, residual, iters)
    for start in starts {
        let (v, res, iters, ok) =
            descend(&objective, &total_grad, start, opts.tol, opts.max_iter);
        let obj = objective(&v);
        let better = match &best {
            None => true,
            Some((_, bobj, _, _)) => obj < *bobj - 1e-15 * (1.0 + bobj.abs()),
        };
        if better {
            best = Some((v, obj, res, iters + if ok { 0 } else { opts.max_iter }));
        }
    }
    let (state, _, residual, iterations) = best.unwrap();
    if residual <= opts.tol {
        Ok(ProxResult {
            state,
            residual,
            iterations,
        })
    } else {
        Err(ProxFailure {
            best: state,
            residual,
            iterations,
        })
    }
}

/// Backtracking gradient descent; returns (iterate, grad residual, iters, converged).
fn descend(
    objective: &dyn Fn(&[f64]) -> f64,
    gradient: &dyn Fn(&[f64]) -> Vec<f64>,
    mut v: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let mut step = 1.0;
    let mut fv = objective(&v);
    for it in 0..max_iter {
        let g = gradient(&v);
        let gnorm2: f64 = g.iter().map(|x| x * x).sum();
        let res = crate::banach::lq_norm(&g, 2.0);
        if res <= tol {
            return (v, res, it, true);
        }
        let mut accepted = false;
        for _ in 0..80 {
            let cand: Vec<f64> = v.iter().zip(&g).map(|(vi, gi)| vi - step * gi).collect();
            let fc = objective(&cand);
            if fc < fv && fc <= fv - 0.25 * step * gnorm2 {
                v = cand;
                fv = fc;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // objective differences fell below float resolution; polish by
            // accepting steps that shrink the gradient norm itself, which
            // stays resolvable all the way to machine precision
            let mut res = crate::banach::lq_norm(&gradient(&v), 2.0);
            let mut pstep = 1.0;
            for it2 in it..max_iter {
                if res <= tol {
                    return (v, res, it2, true);
                }
                let g = gradient(&v);
                let mut improved = false;
                for _ in 0..80 {
                    let cand: Vec<f64> =
                        v.iter().zip(&g).map(|(vi, gi)| vi - pstep * gi).collect();
                    let rc = crate::banach::lq_norm(&gradient(&cand), 2.0);
                    if rc < res {
                        v = cand;
                        res = rc;
                        pstep *= 2.0;
                        improved = true;
                        break;
                    }
                    pstep *= 0.5;
                }
                if !improved {
                    return (v, res, it2, res <= tol);
                }
            }
            return (v, res, max_iter, res <= tol);
        }
    }
    let res = crate::banach::lq_norm(&gradient(&v), 2.0);
    (v, res, max_iter, false)
}

/// Result of the slope representation formula.
#[derive(Debug, Clone)]
pub struct SlopeReprResult {
    /// The sup of `((phi(u) - phi(v))/d + lambda/p d^(p-1))^+` over probes.
    pub value: f64,
    /// The same sup without the convexity term.
    pub plain_quotient_sup: f64,
    /// Dual norm of the analytic gradient.
    pub grad_dual_norm: f64,
    /// Set when the certificate is exact and the sup was compared against
    /// the gradient norm (2% agreement).
    pub agrees_with_gradient: Option<bool>,
    /// True when no convexity certificate was available and the sampled
    /// local slope was returned instead.
    pub fallback: bool,
}

/// Evaluates the convexity-aware slope representation
/// `|d phi|(u) = sup_{v != u} ((phi(u) - phi(v))/d(u,v) + lambda/p d^{p-1}(u,v))^+`
/// over random probes plus deterministic candidates along the negative
/// gradient and through the exact minimizer.
pub fn slope_repr_formula(
    f: &BanachFunctional,
    sp: &PNormSpace,
    u: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<SlopeReprResult> {
    let b = BanachBackend::new(sp.clone(), f.clone());
    let Some(conv) = f.convexity() else {
        let est = crate::metric::local_slope_sampled(
            &b,
            &u.to_vec(),
            &crate::metric::default_slope_radii(1e-1),
            sample_count.max(8),
            seed,
        )?;
        return Ok(SlopeReprResult {
            value: est.value,
            plain_quotient_sup: est.value,
            grad_dual_norm: sp.dual_norm(&f.gradient(u)),
            agrees_with_gradient: None,
            fallback: true,
        });
    };
    let (lambda, p) = (conv.lambda, conv.exponent);
    let phi_u = f.energy(u);
    if !phi_u.is_finite() {
        return Err(FlowError::Domain("slope undefined at infinite energy".into()));
    }

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..sample_count {
        let r = 1e-6 * 4.0f64.powi((k % 12) as i32);
        candidates.push(b.sample_near(&u.to_vec(), r, &mut rng));
    }
    // deterministic candidates along the steepest-descent ray
    let g = f.gradient(u);
    let gn = sp.norm(&g);
    if gn > 0.0 {
        for k in -24..=8 {
            let s = 2.0f64.powi(k);
            candidates.push(u.iter().zip(&g).map(|(ui, gi)| ui - s * gi / gn).collect());
        }
    }
    // through and beyond the exact minimizer
    if let Some(bar) = f.exact_minimizer(sp.dim) {
        for s in [0.5, 1.0, 1.5, 2.0, 3.0] {
            candidates.push(
                u.iter()
                    .zip(&bar)
                    .map(|(ui, bi)| ui + s * (bi - ui))
                    .collect(),
            );
        }
    }

    let mut sup = 0.0f64;
    let mut plain = 0.0f64;
    for v in &candidates {
        let d = b.distance(&u.to_vec(), v);
        if d <= crate::metric::STATE_TOL {
            continue;
        }
        let q = (phi_u - f.energy(v)) / d;
        plain = plain.max(q);
        sup = sup.max(q + lambda / p * d.powf(p - 1.0));
    }
    sup = sup.max(0.0);
    plain = plain.max(0.0);

    let grad_dual_norm = sp.dual_norm(&g);
    let agrees = if f.certificate_exact() {
        let denom = grad_dual_norm.max(1e-30);
        Some((sup - grad_dual_norm).abs() / denom <= 0.02 || grad_dual_norm < 1e-12)
    } else {
        None
    };
    Ok(SlopeReprResult {
        value: sup,
        plain_quotient_sup: plain,
        grad_dual_norm,
        agrees_with_gradient: agrees,
        fallback: false,
    })
}

/// Margins of the two inequalities
/// `lambda/p d^p(u, ubar) <= phi(u) - phi(ubar) <= 1/(lambda p') slope^{p'}(u)`
/// over sampled states.
#[derive(Debug, Clone)]
pub struct KeyEstimateReport {
    pub samples: usize,
    pub violations: usize,
    /// Worst (most negative means violated) slack of the left inequality.
    pub worst_left_margin: f64,
    /// Worst slack of the right inequality.
    pub worst_right_margin: f64,
}

/// Verifies the two-sided energy/slope estimate at random states in the unit
/// ball around the exact minimizer. Requires `lambda > 0`.
pub fn key_estimate_check(
    f: &BanachFunctional,
    sp: &PNormSpace,
    samples: usize,
    seed: u64,
) -> Result<KeyEstimateReport> {
    let conv = f
        .convexity()
        .ok_or_else(|| FlowError::Domain("no convexity certificate".into()))?;
    if conv.lambda <= 0.0 {
        return Err(FlowError::Domain(format!(
            "key estimate requires lambda > 0, got {}",
            conv.lambda
        )));
    }
    let bar = f
        .exact_minimizer(sp.dim)
        .ok_or_else(|| FlowError::Domain("key estimate needs the exact minimizer".into()))?;
    let phi_bar = f.energy(&bar);
    let (lambda, p) = (conv.lambda, conv.exponent);
    let pp = conjugate(p);
    let b = BanachBackend::new(sp.clone(), f.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_left = f64::INFINITY;
    let mut worst_right = f64::INFINITY;
    let mut violations = 0usize;
    for k in 0..samples {
        let r: f64 = rng.gen_range(0.0..1.0f64);
        let u = b.sample_near(&bar, r.max(1e-6), &mut rng);
        let d = b.distance(&u, &bar);
        let gap = f.energy(&u) - phi_bar;
        let slope = slope_repr_formula(f, sp, &u, 32, seed.wrapping_add(k as u64))?.value;
        let left = gap - lambda / p * d.powf(p);
        let right = slope.powf(pp) / (lambda * pp) - gap;
        worst_left = worst_left.min(left);
        worst_right = worst_right.min(right);
        let tol = 1e-9 * (1.0 + gap.abs());
        if left < -tol || right < -tol {
            violations += 1;
        }
    }
    Ok(KeyEstimateReport {
        samples,
        violations,
        worst_left_margin: worst_left,
        worst_right_margin: worst_right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jp_dual_identity_for_p2() {
        let v = vec![1.0, -2.0, 0.5];
        let xi = jp_dual(&v, 2.0, 2.0);
        for (a, b) in v.iter().zip(&xi) {
            assert_relative_eq!(a, b);
        }
    }

    #[test]
    fn jp_dual_scalar_p3() {
        // n=1, p=3, v=2 -> |v|^{p-2} v = 4; oracle: <xi,v> = |v|^3 = 8 and
        // |xi|^{3/2} = 8
        let xi = jp_dual(&[2.0], 3.0, 2.0);
        assert_relative_eq!(xi[0], 4.0);
        assert_relative_eq!(xi[0] * 2.0, 8.0);
        assert_relative_eq!(xi[0].powf(1.5), 8.0);
    }

    #[test]
    fn jp_dual_zero() {
        assert_eq!(jp_dual(&[0.0, 0.0], 4.0, 2.0), vec![0.0, 0.0]);
    }

    #[test]
    fn jp_dual_pairing_identity_randomized() {
        // <xi, v> = ||v||^p = ||xi||_*^{p'} = ||v|| ||xi||_* on random vectors
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let n = rng.gen_range(1..6);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = rng.gen_range(1.2..4.0);
            let q = rng.gen_range(1.2..4.0);
            let xi = jp_dual(&v, p, q);
            let pairing: f64 = xi.iter().zip(&v).map(|(a, b)| a * b).sum();
            let vn = lq_norm(&v, q);
            let xin = lq_norm(&xi, conjugate(q));
            if vn < 1e-8 {
                continue;
            }
            let target = vn.powf(p);
            assert!((pairing - target).abs() / target.max(1e-30) < 1e-12);
            assert!((xin.powf(conjugate(p)) - target).abs() / target.max(1e-30) < 1e-10);
            assert!((vn * xin - target).abs() / target.max(1e-30) < 1e-12);
        }
    }

    #[test]
    fn slope_repr_quadratic() {
        let sp = PNormSpace::euclidean(1);
        let f = BanachFunctional::quadratic(1.0, vec![0.0]);
        // oracle: dense sweep of the sup gives |u| = 3
        let r = slope_repr_formula(&f, &sp, &[3.0], 64, 5).unwrap();
        assert_relative_eq!(r.value, 3.0, max_relative = 1e-10);
        assert_eq!(r.agrees_with_gradient, Some(true));
        // minimizer: slope 0
        let r0 = slope_repr_formula(&f, &sp, &[0.0], 64, 5).unwrap();
        assert!(r0.value < 1e-12);
    }

    #[test]
    fn slope_repr_double_well_at_well() {
        // W'(1) = 0
        let sp = PNormSpace::euclidean(1);
        let f = BanachFunctional::double_well();
        let r = slope_repr_formula(&f, &sp, &[1.0], 64, 5).unwrap();
        assert!(r.grad_dual_norm < 1e-14);
        assert!(r.value < 1e-5, "value {}", r.value);
    }

    #[test]
    fn slope_repr_dominates_plain_quotient() {
        let sp = PNormSpace::euclidean(2);
        let f = BanachFunctional::quadratic(2.0, vec![0.3, -0.1]);
        for seed in 0..20 {
            let u = vec![seed as f64 * 0.1 - 1.0, 0.4];
            let r = slope_repr_formula(&f, &sp, &u, 32, seed).unwrap();
            assert!(r.value >= r.plain_quotient_sup - 1e-15);
        }
    }

    #[test]
    fn prox_quadratic_closed_form() {
        // oracle: dense grid minimization of v^2/2 + (v-1)^2/(2 tau)
        // confirms v = u_prev / (1 + tau)
        let sp = PNormSpace::euclidean(1);
        let f = BanachFunctional::quadratic(1.0, vec![0.0]);
        let opts = ProxOpts::default();
        let r = banach_prox(&f, &sp, &[1.0], 0.5, 2.0, &opts).unwrap();
        assert!((r.state[0] - 2.0 / 3.0).abs() < 1e-9, "{}", r.state[0]);
        assert!(r.residual <= opts.tol);
    }

    #[test]
    fn prox_constant_energy_stays_put() {
        let sp = PNormSpace::euclidean(3);
        let f = BanachFunctional::quadratic(0.0, vec![0.0; 3]);
        let r = banach_prox(&f, &sp, &[1.0, -2.0, 0.5], 0.3, 2.0, &ProxOpts::default()).unwrap();
        assert_eq!(r.state, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn prox_quadratic_range_of_steps() {
        let sp = PNormSpace::euclidean(1);
        let f = BanachFunctional::quadratic(1.0, vec![0.0]);
        let opts = ProxOpts::default();
        for tau in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let r = banach_prox(&f, &sp, &[0.7], tau, 2.0, &opts).unwrap();
            let expected = 0.7 / (1.0 + tau);
            assert!(
                (r.state[0] - expected).abs() <= 10.0 * opts.tol,
                "tau {tau}: {} vs {expected}",
                r.state[0]
            );
        }
    }

    #[test]
    fn prox_allen_cahn_moves_toward_plus_one() {
        // from u = 0.1 the interior should move toward +1 and the energy drop;
        // oracle: one explicit-Euler step at a much finer step has the same sign
        let n = 64;
        let sp = PNormSpace::euclidean(n);
        let f = BanachFunctional::allen_cahn_1d(n);
        let u0 = vec![0.1; n];
        let opts = ProxOpts {
            tol: 1e-8,
            ..Default::default()
        };
        let r = banach_prox(&f, &sp, &u0, 1e-3, 2.0, &opts).unwrap();
        assert!(f.energy(&r.state) < f.energy(&u0));
        // interior points (away from the Dirichlet ends) increase
        for i in n / 4..3 * n / 4 {
            assert!(r.state[i] > u0[i], "interior index {i} did not move up");
        }
    }

    #[test]
    fn key_estimate_quadratic_saturates() {
        // quadratic lambda=1, p=2, u=2: the whole chain is 2 <= 2 <= 2
        let sp = PNormSpace::euclidean(1);
        let f = BanachFunctional::quadratic(1.0, vec![0.0]);
        let gap = f.energy(&[2.0]) - 0.0;
        assert_relative_eq!(gap, 2.0);
        let slope = slope_repr_formula(&f, &sp, &[2.0], 32, 0).unwrap().value;
        assert_relative_eq!(slope * slope / 2.0, 2.0, max_relative = 1e-10);
        let rep = key_estimate_check(&f, &sp, 200, 9).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.worst_left_margin.abs() < 1e-9);
        assert!(rep.worst_right_margin.abs() < 1e-9);
    }

    #[test]
    fn key_estimate_rejects_nonpositive_lambda() {
        let sp = PNormSpace::euclidean(1);
        let f = BanachFunctional::double_well();
        assert!(matches!(
            key_estimate_check(&f, &sp, 10, 0),
            Err(FlowError::Domain(_))
        ));
    }

    #[test]
    fn finsler_weight_bounds() {
        let w = FinslerWeight::AllenCahnRho;
        for u in [-5.0, -1.0, 0.0, 0.3, 2.0, 100.0] {
            let r = w.eval(u);
            assert!(r >= 1.0 && r <= 2.0);
        }
    }

    #[test]
    fn finsler_prox_stays_close_to_plain_prox() {
        // weights are within [1, 2], so the frozen-coefficient step is a
        // bounded perturbation of the plain one
        let n = 8;
        let f = BanachFunctional::double_well();
        let plain = PNormSpace::euclidean(n);
        let finsler = PNormSpace::euclidean(n).with_finsler(FinslerWeight::AllenCahnRho);
        let u0 = vec![0.4; n];
        let opts = ProxOpts {
            tol: 1e-9,
            ..Default::default()
        };
        let a = banach_prox(&f, &plain, &u0, 0.1, 2.0, &opts).unwrap();
        let b = banach_prox(&f, &finsler, &u0, 0.1, 2.0, &opts).unwrap();
        // both descend the energy; the weighted one moves less per unit step
        assert!(f.energy(&a.state) < f.energy(&u0));
        assert!(f.energy(&b.state) < f.energy(&u0));
        let da: f64 = plain.norm(&a.state.iter().zip(&u0).map(|(x, y)| x - y).collect::<Vec<_>>());
        let db: f64 =
            plain.norm(&b.state.iter().zip(&u0).map(|(x, y)| x - y).collect::<Vec<_>>());
        assert!(db <= da + 1e-12);
    }
}

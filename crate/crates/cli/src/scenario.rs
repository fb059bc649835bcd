//! Scenario files: a single JSON document selecting a backend, a flow
//! configuration, exactly one experiment, and output options. Unknown keys
//! are rejected everywhere.

use serde::{Deserialize, Serialize};

use mmflow_core::banach::{
    BanachBackend, BanachFunctional, FinslerWeight, PNormSpace,
};
use mmflow_core::engine::{MMConfig, StepSpec};
use mmflow_core::error::{FlowError, Result};
use mmflow_core::wasserstein::{
    EnergySpec, InteractionKernel, InternalEnergy, Potential, QuantileMeasure,
    WassersteinBackend,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub backend: BackendSpec,
    pub flow: FlowSpec,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Banach {
        dim: usize,
        #[serde(default = "default_q_norm")]
        q_norm: f64,
        functional: FunctionalSpec,
        #[serde(default)]
        finsler: bool,
        /// Initial state for trajectory experiments.
        #[serde(default)]
        initial: Option<Vec<f64>>,
    },
    Wasserstein1d {
        n: usize,
        energy: EnergyBlock,
        #[serde(default)]
        initial: Option<MeasureSpec>,
    },
}

fn default_q_norm() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    Quadratic { lambda: f64, center: Vec<f64> },
    PowerDistance {
        lambda: f64,
        exponent: f64,
        center: Vec<f64>,
    },
    DoubleWell {},
    AllenCahn { n: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBlock {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub potential: PotentialSpec,
    pub internal: InternalSpec,
    #[serde(default)]
    pub interaction: InteractionSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    None {},
    Quadratic { curvature: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InternalSpec {
    Entropy {},
    Power { m: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionSpec {
    None {},
    Quadratic {},
}

impl Default for InteractionSpec {
    fn default() -> Self {
        InteractionSpec::None {}
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Gaussian { mean: f64, sd: f64 },
    Uniform { a: f64, b: f64 },
    Dirac { at: f64 },
    Quantiles { values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub p: f64,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub steps: Option<Vec<f64>>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub eps_prox: Option<f64>,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_inner() -> usize {
    50_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Run {},
    Check {
        #[serde(default = "default_true")]
        edi: bool,
        #[serde(default = "default_true")]
        energy_solution: bool,
        #[serde(default)]
        key_estimate: bool,
        #[serde(default = "default_true")]
        lyapunov: bool,
        #[serde(default)]
        gibbs: bool,
        #[serde(default = "default_edi_points")]
        edi_points: usize,
        #[serde(default = "default_edi_tol")]
        edi_tol: f64,
        #[serde(default = "default_energy_tol")]
        energy_solution_tol: f64,
        #[serde(default = "default_gibbs_tol")]
        gibbs_tol: f64,
    },
    Attractor {
        #[serde(default = "default_count")]
        count: usize,
        /// Sampling interval for the initial bounded set (Banach, per axis).
        sample_box: [f64; 2],
        #[serde(default = "default_cluster_radius")]
        cluster_radius: f64,
        #[serde(default = "default_snapshots")]
        snapshots: usize,
    },
    Decay {
        #[serde(default = "default_t_start")]
        t_start: f64,
        #[serde(default = "default_rate_tol")]
        rate_tolerance: f64,
    },
    Restpoints {
        #[serde(default)]
        seeds: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        sample_box: Option<[f64; 2]>,
        #[serde(default = "default_count_rp")]
        count: usize,
        #[serde(default = "default_rp_tol")]
        tol: f64,
        #[serde(default = "default_cluster_radius")]
        dedup_radius: f64,
    },
    Refine {
        #[serde(default = "default_refinements")]
        refinements: usize,
    },
}

fn default_true() -> bool {
    true
}
fn default_edi_points() -> usize {
    32
}
fn default_edi_tol() -> f64 {
    1e-5
}
fn default_energy_tol() -> f64 {
    5e-2
}
fn default_gibbs_tol() -> f64 {
    5e-2
}
fn default_count() -> usize {
    64
}
fn default_count_rp() -> usize {
    17
}
fn default_cluster_radius() -> f64 {
    1e-2
}
fn default_snapshots() -> usize {
    25
}
fn default_t_start() -> f64 {
    0.5
}
fn default_rate_tol() -> f64 {
    0.03
}
fn default_rp_tol() -> f64 {
    1e-8
}
fn default_refinements() -> usize {
    4
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub directory: Option<String>,
    #[serde(default)]
    pub formats: Option<Vec<String>>,
}

impl ExperimentSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentSpec::Run {} => "run",
            ExperimentSpec::Check { .. } => "check",
            ExperimentSpec::Attractor { .. } => "attractor",
            ExperimentSpec::Decay { .. } => "decay",
            ExperimentSpec::Restpoints { .. } => "restpoints",
            ExperimentSpec::Refine { .. } => "refine",
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.flow.p > 1.0) {
            return Err(FlowError::Input(format!(
                "flow.p must lie in (1, inf), got {}",
                self.flow.p
            )));
        }
        match (&self.flow.tau, &self.flow.steps) {
            (Some(tau), None) => {
                if !(*tau > 0.0) {
                    return Err(FlowError::Input("flow.tau must be positive".into()));
                }
                if self.flow.horizon.is_none() {
                    return Err(FlowError::Input(
                        "flow.horizon is required with flow.tau".into(),
                    ));
                }
            }
            (None, Some(steps)) => {
                if steps.is_empty() || steps.iter().any(|&s| !(s > 0.0)) {
                    return Err(FlowError::Input(
                        "flow.steps must be non-empty and positive".into(),
                    ));
                }
            }
            (Some(_), Some(_)) => {
                return Err(FlowError::Input(
                    "flow.tau and flow.steps are mutually exclusive".into(),
                ));
            }
            (None, None) => {
                return Err(FlowError::Input(
                    "one of flow.tau or flow.steps is required".into(),
                ));
            }
        }
        if let Some(eps) = self.flow.eps_prox {
            if !(eps > 0.0) {
                return Err(FlowError::Input("flow.eps_prox must be positive".into()));
            }
        }
        if let Some(formats) = &self.output.formats {
            for f in formats {
                if f != "csv" && f != "json" {
                    return Err(FlowError::Input(format!(
                        "output.formats entries must be \"csv\" or \"json\", got {f:?}"
                    )));
                }
            }
        }
        match &self.backend {
            BackendSpec::Banach {
                dim,
                q_norm,
                functional,
                initial,
                ..
            } => {
                if *dim == 0 {
                    return Err(FlowError::Input("backend.dim must be positive".into()));
                }
                if !(*q_norm > 1.0) {
                    return Err(FlowError::Input(
                        "backend.q_norm must lie in (1, inf)".into(),
                    ));
                }
                let want = match functional {
                    FunctionalSpec::AllenCahn { n } => *n,
                    _ => *dim,
                };
                if want != *dim {
                    return Err(FlowError::Input(format!(
                        "backend.dim = {dim} does not match the functional's grid size {want}"
                    )));
                }
                if let Some(u0) = initial {
                    if u0.len() != *dim {
                        return Err(FlowError::Input(format!(
                            "backend.initial has length {}, expected {dim}",
                            u0.len()
                        )));
                    }
                }
            }
            BackendSpec::Wasserstein1d { n, energy, initial } => {
                if *n == 0 || *n > 4096 {
                    return Err(FlowError::Input(
                        "backend.n must lie in 1..=4096".into(),
                    ));
                }
                if energy.c1 < 0.0 || energy.c2 < 0.0 || energy.c3 < 0.0 {
                    return Err(FlowError::Input(
                        "backend.energy coefficients must be nonnegative".into(),
                    ));
                }
                if let Some(MeasureSpec::Quantiles { values }) = initial {
                    if values.len() != *n {
                        return Err(FlowError::Input(format!(
                            "backend.initial.values has length {}, expected {n}",
                            values.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn mm_config(&self) -> MMConfig {
        let steps = match (&self.flow.tau, &self.flow.steps) {
            (Some(tau), _) => StepSpec::Uniform {
                tau: *tau,
                horizon: self.flow.horizon.unwrap_or(1.0),
            },
            (None, Some(list)) => StepSpec::Explicit(list.clone()),
            (None, None) => unreachable!("validated"),
        };
        let default_eps = match &self.backend {
            BackendSpec::Banach { .. } => 1e-10,
            BackendSpec::Wasserstein1d { .. } => 1e-8,
        };
        MMConfig {
            p: self.flow.p,
            steps,
            eps_prox: self.flow.eps_prox.unwrap_or(default_eps),
            max_inner: self.flow.max_inner,
            seed: self.flow.seed,
        }
    }
}

/// A backend instantiated from a scenario, with its initial state.
pub enum Instance {
    Banach {
        backend: BanachBackend,
        initial: Option<Vec<f64>>,
    },
    Wasserstein {
        backend: WassersteinBackend,
        initial: Option<QuantileMeasure>,
    },
}

pub fn instantiate(sc: &Scenario) -> Result<Instance> {
    sc.validate()?;
    match &sc.backend {
        BackendSpec::Banach {
            dim,
            q_norm,
            functional,
            finsler,
            initial,
        } => {
            let mut space = PNormSpace::new(*dim, *q_norm);
            if *finsler {
                space = space.with_finsler(FinslerWeight::AllenCahnRho);
            }
            let f = match functional {
                FunctionalSpec::Quadratic { lambda, center } => {
                    BanachFunctional::quadratic(*lambda, center.clone())
                }
                FunctionalSpec::PowerDistance {
                    lambda,
                    exponent,
                    center,
                } => BanachFunctional::power_distance(*lambda, *exponent, center.clone()),
                FunctionalSpec::DoubleWell {} => BanachFunctional::double_well(),
                FunctionalSpec::AllenCahn { n } => BanachFunctional::allen_cahn_1d(*n),
            };
            Ok(Instance::Banach {
                backend: BanachBackend::new(space, f),
                initial: initial.clone(),
            })
        }
        BackendSpec::Wasserstein1d { n, energy, initial } => {
            let spec = EnergySpec {
                c1: energy.c1,
                c2: energy.c2,
                c3: energy.c3,
                potential: match &energy.potential {
                    PotentialSpec::None {} => Potential::Zero,
                    PotentialSpec::Quadratic { curvature } => Potential::Quadratic {
                        curvature: *curvature,
                    },
                },
                internal: match &energy.internal {
                    InternalSpec::Entropy {} => InternalEnergy::Entropy,
                    InternalSpec::Power { m } => InternalEnergy::Power { m: *m },
                },
                interaction: match &energy.interaction {
                    InteractionSpec::None {} => InteractionKernel::Zero,
                    InteractionSpec::Quadratic {} => InteractionKernel::Quadratic,
                },
            };
            let backend = WassersteinBackend::new(spec, *n, sc.flow.p)?;
            let initial = match initial {
                None => None,
                Some(m) => Some(build_measure(m, *n, sc.flow.p)?),
            };
            Ok(Instance::Wasserstein { backend, initial })
        }
    }
}

fn build_measure(spec: &MeasureSpec, n: usize, p: f64) -> Result<QuantileMeasure> {
    match spec {
        MeasureSpec::Gaussian { mean, sd } => {
            if !(*sd > 0.0) {
                return Err(FlowError::Input("gaussian initial needs sd > 0".into()));
            }
            QuantileMeasure::from_quantile_fn(n, p, |theta| mean + sd * normal_quantile(theta))
        }
        MeasureSpec::Uniform { a, b } => {
            if !(b > a) {
                return Err(FlowError::Input("uniform initial needs b > a".into()));
            }
            QuantileMeasure::from_quantile_fn(n, p, |theta| a + (b - a) * theta)
        }
        MeasureSpec::Dirac { at } => Ok(QuantileMeasure::dirac(*at, n, p)),
        MeasureSpec::Quantiles { values } => QuantileMeasure::new(values.clone(), p),
    }
}

/// Standard normal quantile function (Acklam's rational approximation,
/// relative error below 1.2e-9; plenty for initial-condition synthesis).
pub fn normal_quantile(theta: f64) -> f64 {
    assert!(theta > 0.0 && theta < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let plow = 0.02425;
    let x = if theta < plow {
        let q = (-2.0 * theta.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if theta <= 1.0 - plow {
        let q = theta - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - theta).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    x
}

//! Splitting-step composition and the constant-step integration loop.
//!
//! A step of an `s`-stage method applies the expanded palindromic sequence as
//! maps with the leading A-flow first:
//!
//! ```text
//! x <- A(a1 tau) ; B(b1 tau) ; A(a2 tau) ; ... ; B(bs tau) ; A(a_{s+1} tau)
//! ```
//!
//! When steps are iterated, the trailing A-flow of one step is concatenated
//! with the leading A-flow of the next (the flows form a one-parameter
//! group), so the cost per step is `s` A-flows and `s` B-flows plus one
//! terminal A-flow. The engine keeps the still-unapplied trailing A time as
//! `pending` state and flushes it whenever a sample needs the true step
//! boundary, so sampling never changes the trajectory.
//!
//! With `compensated` enabled every flow update goes through error-carrying
//! accumulation (see [`crate::flows::Accum`]), which flattens the round-off
//! random walk of long constant-step runs.

use crate::coeffs::{MethodKind, SplittingMethod};
use crate::flows::{Accum, Carry, FlowError, PhaseState};
use crate::models::{energy_error_series, SplitSystem};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum EngineError {
    #[error("method {method} needs an exact B-flow; the system only offers a 2nd-order approximation (opt into the order-degraded composition to proceed)")]
    ApproximateBNotAllowed { method: String },
    #[error("invalid plan: {0}")]
    BadPlan(String),
    #[error("flow failure at stage {stage}: {source}")]
    Flow {
        stage: usize,
        #[source]
        source: FlowError,
    },
}

/// Everything needed for one integration run.
#[derive(Debug, Clone)]
pub struct IntegrationPlan<'a> {
    pub method: &'a SplittingMethod,
    pub tau: f64,
    pub n_steps: usize,
    /// Record a sample every this many steps (the initial state is always
    /// sample 0).
    pub sample_every: usize,
    /// Route all state updates through compensated accumulation.
    pub compensated: bool,
    /// Concatenate adjacent boundary A-flows across steps.
    pub fsal: bool,
    /// Keep full states at samples (energies are always kept).
    pub store_states: bool,
    /// Permit a non-ABAH method on a system whose B-flow is approximate,
    /// degrading generalized order (r1,...) to (r1,4,2).
    pub allow_approximate_b: bool,
}

impl<'a> IntegrationPlan<'a> {
    pub fn new(method: &'a SplittingMethod, tau: f64, n_steps: usize) -> Self {
        IntegrationPlan {
            method,
            tau,
            n_steps,
            sample_every: 1,
            compensated: false,
            fsal: true,
            store_states: false,
            allow_approximate_b: false,
        }
    }
}

/// Sampled output of one run, with flow-evaluation counters as the cost
/// proxy. Under pure trailing/leading concatenation `a_flow_evals ==
/// stages * n_steps + 1` and `b_stage_evals == stages * n_steps`.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub energies: Vec<f64>,
    pub b_stage_evals: usize,
    pub a_flow_evals: usize,
    pub tau_over_s: f64,
    /// Set when a flow failed; the record holds everything sampled so far.
    pub failure: Option<EngineError>,
}

impl TrajectoryRecord {
    /// Relative energy deviations against the first sample.
    pub fn energy_series(&self) -> Result<crate::models::EnergySeries, crate::models::ModelError> {
        energy_error_series(&self.energies)
    }
}

fn check_compatibility(
    method: &SplittingMethod,
    system: &dyn SplitSystem,
    allow_approximate_b: bool,
) -> Result<(), EngineError> {
    // An ABAH coefficient set is a valid symmetric ABA composition, so it may
    // run on exact-B systems; the cubic condition is simply unused there.
    // The converse needs an explicit opt-in because the order claim drops.
    if system.approximate_b() && method.kind() != MethodKind::Abah && !allow_approximate_b {
        return Err(EngineError::ApproximateBNotAllowed {
            method: method.id().to_string(),
        });
    }
    Ok(())
}

/// One step of the splitting composition (no cross-step concatenation).
pub fn step(
    method: &SplittingMethod,
    system: &dyn SplitSystem,
    state: &PhaseState,
    tau: f64,
) -> Result<PhaseState, EngineError> {
    step_with_options(method, system, state, tau, false)
}

/// [`step`] with the approximate-B opt-in exposed.
pub fn step_with_options(
    method: &SplittingMethod,
    system: &dyn SplitSystem,
    state: &PhaseState,
    tau: f64,
    allow_approximate_b: bool,
) -> Result<PhaseState, EngineError> {
    check_compatibility(method, system, allow_approximate_b)?;
    let (a, b) = method.expand_f64();
    let mut out = state.clone();
    {
        let mut acc = Accum::plain(&mut out);
        apply_flow_a(system, &mut acc, a[0] * tau, 0)?;
        for i in 0..method.stages() {
            system
                .flow_b(&mut acc, b[i] * tau)
                .map_err(|source| EngineError::Flow { stage: 2 * i + 1, source })?;
            apply_flow_a(system, &mut acc, a[i + 1] * tau, 2 * i + 2)?;
        }
    }
    out.t = state.t + tau;
    Ok(out)
}

fn apply_flow_a(
    system: &dyn SplitSystem,
    acc: &mut Accum,
    tau: f64,
    stage: usize,
) -> Result<(), EngineError> {
    if tau == 0.0 {
        return Ok(());
    }
    system
        .flow_a(acc, tau)
        .map_err(|source| EngineError::Flow { stage, source })
}

/// Run `plan.n_steps` steps from `x0`, sampling times, energies and
/// (optionally) states every `plan.sample_every` steps.
pub fn integrate(
    plan: &IntegrationPlan,
    system: &dyn SplitSystem,
    x0: &PhaseState,
) -> Result<TrajectoryRecord, EngineError> {
    if plan.tau == 0.0 {
        return Err(EngineError::BadPlan("tau must be nonzero".into()));
    }
    if plan.sample_every == 0 {
        return Err(EngineError::BadPlan("sample_every must be >= 1".into()));
    }
    check_compatibility(plan.method, system, plan.allow_approximate_b)?;

    let (a, b) = plan.method.expand_f64();
    let s = plan.method.stages();
    let tau = plan.tau;

    let mut record = TrajectoryRecord {
        times: Vec::new(),
        states: Vec::new(),
        energies: Vec::new(),
        b_stage_evals: 0,
        a_flow_evals: 0,
        tau_over_s: tau.abs() / s as f64,
        failure: None,
    };

    let mut state = x0.clone();
    let mut carry = Carry::zeros(state.q.len());

    let sample = |state: &mut PhaseState, step_idx: usize, rec: &mut TrajectoryRecord| {
        let t = x0.t + step_idx as f64 * tau;
        state.t = t;
        rec.times.push(t);
        rec.energies.push(system.energy(state));
        if plan.store_states {
            rec.states.push(state.clone());
        }
    };
    sample(&mut state, 0, &mut record);

    // time still owed to the trailing A-flow of the previous step
    let mut pending_a = 0.0f64;
    for k in 1..=plan.n_steps {
        let run = (|| -> Result<(), EngineError> {
            let mut acc = if plan.compensated {
                Accum::compensated(&mut state, &mut carry)
            } else {
                Accum::plain(&mut state)
            };
            let lead = pending_a + a[0] * tau;
            if lead != 0.0 {
                system
                    .flow_a(&mut acc, lead)
                    .map_err(|source| EngineError::Flow { stage: 0, source })?;
                record.a_flow_evals += 1;
            }
            for i in 0..s {
                system
                    .flow_b(&mut acc, b[i] * tau)
                    .map_err(|source| EngineError::Flow { stage: 2 * i + 1, source })?;
                record.b_stage_evals += 1;
                if i + 1 < s {
                    if a[i + 1] * tau != 0.0 {
                        system
                            .flow_a(&mut acc, a[i + 1] * tau)
                            .map_err(|source| EngineError::Flow { stage: 2 * i + 2, source })?;
                        record.a_flow_evals += 1;
                    }
                }
            }
            pending_a = a[s] * tau;
            let boundary_needed = !plan.fsal || k % plan.sample_every == 0 || k == plan.n_steps;
            if boundary_needed && pending_a != 0.0 {
                system
                    .flow_a(&mut acc, pending_a)
                    .map_err(|source| EngineError::Flow { stage: 2 * s, source })?;
                record.a_flow_evals += 1;
                pending_a = 0.0;
            }
            Ok(())
        })();
        if let Err(e) = run {
            record.failure = Some(e);
            return Ok(record);
        }
        if k % plan.sample_every == 0 {
            sample(&mut state, k, &mut record);
        }
    }
    state.t = x0.t + plan.n_steps as f64 * tau;
    Ok(record)
}

/// High-accuracy reference for local-error measurements: the (10,6,4)
/// 8-stage scheme composed over many substeps.
pub fn reference_step(
    system: &dyn SplitSystem,
    x0: &PhaseState,
    tau: f64,
    substeps: usize,
) -> Result<PhaseState, EngineError> {
    let method = crate::coeffs::registry_lookup("ABA1064").expect("registry");
    let mut plan = IntegrationPlan::new(method, tau / substeps as f64, substeps);
    plan.sample_every = substeps.max(1);
    plan.compensated = true;
    plan.store_states = true;
    plan.allow_approximate_b = true;
    let rec = integrate(&plan, system, x0)?;
    if let Some(f) = rec.failure {
        return Err(f);
    }
    Ok(rec.states.last().expect("final sample").clone())
}

/// One row of an efficiency sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: String,
    pub tau: f64,
    pub tau_over_s: f64,
    pub stages: usize,
    pub niter: usize,
    pub max_de_rel: Option<f64>,
    pub final_t: f64,
    pub status: String,
}

pub const SWEEP_CSV_HEADER: &str = "method,tau,tau_over_s,stages,niter,max_dE_rel,final_t";

impl SweepRow {
    /// The canonical seven sweep columns (status is reported separately).
    pub fn csv_line(&self) -> String {
        let de = match self.max_de_rel {
            Some(v) => format!("{v:e}"),
            None => "nan".to_string(),
        };
        format!(
            "{},{:e},{:e},{},{},{},{:e}",
            self.method, self.tau, self.tau_over_s, self.stages, self.niter, de, self.final_t
        )
    }
}

/// Integrate every `(method, tau)` pair for `niter` scheme evaluations and
/// record the maximum relative energy variation. Runs are independent and may
/// execute in parallel; rows come back in input order (methods outer, taus
/// inner).
pub fn efficiency_sweep(
    methods: &[&SplittingMethod],
    system: &dyn SplitSystem,
    x0: &PhaseState,
    taus: &[f64],
    niter: usize,
    compensated: bool,
    allow_approximate_b: bool,
) -> Vec<SweepRow> {
    let jobs: Vec<(usize, &SplittingMethod, f64)> = methods
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| {
            taus.iter()
                .enumerate()
                .map(move |(ti, tau)| (mi * taus.len() + ti, *m, *tau))
        })
        .collect();
    let mut rows: Vec<(usize, SweepRow)> = jobs
        .par_iter()
        .map(|(idx, method, tau)| {
            let mut plan = IntegrationPlan::new(method, *tau, niter);
            plan.compensated = compensated;
            plan.allow_approximate_b = allow_approximate_b;
            let row = match integrate(&plan, system, x0) {
                Ok(rec) => {
                    let status = match &rec.failure {
                        None => "ok".to_string(),
                        Some(e) => format!("error: {e}"),
                    };
                    let max_de = rec.energy_series().ok().map(|s| s.max);
                    SweepRow {
                        method: method.id().to_string(),
                        tau: *tau,
                        tau_over_s: rec.tau_over_s,
                        stages: method.stages(),
                        niter,
                        max_de_rel: if rec.failure.is_none() { max_de } else { None },
                        final_t: *rec.times.last().unwrap_or(&0.0),
                        status,
                    }
                }
                Err(e) => SweepRow {
                    method: method.id().to_string(),
                    tau: *tau,
                    tau_over_s: tau.abs() / method.stages() as f64,
                    stages: method.stages(),
                    niter,
                    max_de_rel: None,
                    final_t: 0.0,
                    status: format!("error: {e}"),
                },
            };
            (*idx, row)
        })
        .collect();
    rows.sort_by_key(|(idx, _)| *idx);
    rows.into_iter().map(|(_, row)| row).collect()
}

//! Iteration engines: the randomly truncated Robbins-Monro recursion, the
//! plain recursion it guards against, and the normalized error.
//!
//! One truncated step reads
//!
//! ```text
//! X_{n+1/2} = X_n - gamma_{n+1} (u(X_n) + dM_{n+1})
//! X_{n+1}   = X_{n+1/2},  sigma_{n+1} = sigma_n        if X_{n+1/2} in K_{sigma_n}
//! X_{n+1}   = reset,      sigma_{n+1} = sigma_n + 1    otherwise
//! ```
//!
//! and is equivalently `X_{n+1} = X_n - gamma_{n+1}(u(X_n) + dM_{n+1}) + gamma_{n+1} p_{n+1}`
//! with `p_{n+1} = u(X_n) + dM_{n+1} + (reset - X_n) / gamma_{n+1}` on truncation, zero
//! otherwise.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, Vector};
use crate::model::{GainSchedule, Problem, ResetPolicy, RngStream, TruncationSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateState {
    pub n: u64,
    pub x: Vector,
    /// Number of truncations so far.
    pub sigma: u32,
    pub last_truncation_step: Option<u64>,
}

impl IterateState {
    pub fn initial(x0: Vector) -> Self {
        IterateState {
            n: 0,
            x: x0,
            sigma: 0,
            last_truncation_step: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationEvent {
    /// Index of the iterate produced by the reset.
    pub step: u64,
    pub sigma_after: u32,
    /// The rejected point `X_{n+1/2}`.
    pub pre_truncation: Vector,
    pub p_term: Vector,
}

/// The truncated algorithm: step sizes, compacts and reset rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Algorithm {
    pub schedule: GainSchedule,
    pub truncation: TruncationSequence,
    #[serde(default)]
    pub reset: ResetPolicy,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub problem_id: String,
    pub schedule: GainSchedule,
    /// Every `stride`-th state, every post-truncation state and the final state.
    pub states: Vec<IterateState>,
    pub final_state: IterateState,
    pub truncation_events: Vec<TruncationEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub diverged_at: u64,
    /// `|X_n|` at `diverged_at`; infinite if a component stopped being finite.
    pub last_finite_norm: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub enum PlainOutcome {
    Completed(Trajectory),
    Diverged(DivergenceReport),
}

/// One transition of the truncated recursion given an already drawn observation.
pub fn step_truncated(
    state: &IterateState,
    observation: &[f64],
    gain_next: f64,
    trunc: &TruncationSequence,
    reset_target: &Vector,
) -> Result<(IterateState, Option<TruncationEvent>)> {
    let d = state.x.dim();
    check_dim(d, observation.len())?;
    check_dim(d, trunc.dim())?;
    check_dim(d, reset_target.dim())?;
    let step = state.n + 1;
    if observation.iter().any(|o| !o.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    let half = half_step(&state.x, observation, gain_next);
    if trunc.contains_unchecked(state.sigma, &half) {
        return Ok((
            IterateState {
                n: step,
                x: half.into(),
                sigma: state.sigma,
                last_truncation_step: state.last_truncation_step,
            },
            None,
        ));
    }
    let p_term = truncation_term(state, observation, gain_next, reset_target);
    let next = IterateState {
        n: step,
        x: reset_target.clone(),
        sigma: state.sigma + 1,
        last_truncation_step: Some(step),
    };
    let event = TruncationEvent {
        step,
        sigma_after: next.sigma,
        pre_truncation: half.into(),
        p_term,
    };
    Ok((next, Some(event)))
}

fn half_step(x: &[f64], observation: &[f64], gain: f64) -> Vec<f64> {
    x.iter()
        .zip(observation)
        .map(|(xi, oi)| xi - gain * oi)
        .collect()
}

/// `p_{n+1} = observation + (reset_target - X_n) / gamma_{n+1}`.
pub fn truncation_term(
    state: &IterateState,
    observation: &[f64],
    gain_next: f64,
    reset_target: &[f64],
) -> Vector {
    observation
        .iter()
        .zip(state.x.iter())
        .zip(reset_target)
        .map(|((o, x), r)| o + (r - x) / gain_next)
        .collect::<Vec<_>>()
        .into()
}

struct Recorder {
    stride: u64,
    states: Vec<IterateState>,
}

impl Recorder {
    fn new(stride: u64, initial: &IterateState) -> Self {
        Recorder {
            stride,
            states: vec![initial.clone()],
        }
    }

    fn offer(&mut self, state: &IterateState, forced: bool) {
        if forced || state.n.is_multiple_of(self.stride) {
            self.states.push(state.clone());
        }
    }

    fn finish(mut self, last: &IterateState) -> Vec<IterateState> {
        if self.states.last().map(|s| s.n) != Some(last.n) {
            self.states.push(last.clone());
        }
        self.states
    }
}

fn check_run_args(problem: &Problem, x0: &Vector, horizon: u64, stride: u64) -> Result<()> {
    check_dim(problem.dim(), x0.dim())?;
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    if stride == 0 {
        return Err(Error::invalid("stride", "must be at least 1"));
    }
    if !x0.is_finite() {
        return Err(Error::invalid("x0", "must be finite"));
    }
    Ok(())
}

/// Runs the truncated recursion for `horizon` steps from `x0 in K_0`.
pub fn run_truncated(
    problem: &Problem,
    algorithm: &Algorithm,
    x0: &Vector,
    horizon: u64,
    stride: u64,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    check_run_args(problem, x0, horizon, stride)?;
    let trunc = &algorithm.truncation;
    check_dim(problem.dim(), trunc.dim())?;
    let margin = trunc.boundary_margin(0, x0)?;
    if margin < 0.0 {
        return Err(Error::InitialPointOutside { margin });
    }
    algorithm.reset.validate(trunc)?;
    let target = algorithm.reset.target(x0);

    let mut state = IterateState::initial(x0.clone());
    let mut recorder = Recorder::new(stride, &state);
    let mut events = Vec::new();
    let mut obs = vec![0.0; problem.dim()];
    for n in 0..horizon {
        problem.model().observe(&state.x, rng, &mut obs);
        let gain = algorithm.schedule.gain(n + 1);
        let (next, event) = step_truncated(&state, &obs, gain, trunc, target)?;
        let truncated = event.is_some();
        if let Some(e) = event {
            events.push(e);
        }
        state = next;
        recorder.offer(&state, truncated);
    }
    Ok(Trajectory {
        problem_id: problem.id().to_string(),
        schedule: algorithm.schedule,
        states: recorder.finish(&state),
        final_state: state,
        truncation_events: events,
    })
}

/// Blow-up guard used when the caller has none: `1e6 (1 + |x0|)`.
pub fn default_blowup_threshold(x0: &Vector) -> f64 {
    1e6 * (1.0 + x0.norm())
}

/// Runs the untruncated recursion, stopping the first time `|X_n|` reaches
/// `blowup_threshold` or a component stops being finite.
pub fn run_plain(
    problem: &Problem,
    schedule: &GainSchedule,
    x0: &Vector,
    horizon: u64,
    stride: u64,
    blowup_threshold: f64,
    rng: &mut RngStream,
) -> Result<PlainOutcome> {
    check_run_args(problem, x0, horizon, stride)?;
    let diverged = |n: u64, x: &[f64]| {
        let norm = crate::linalg::norm(x);
        let norm = if norm.is_finite() {
            norm
        } else {
            f64::INFINITY
        };
        (norm >= blowup_threshold).then_some(DivergenceReport {
            diverged_at: n,
            last_finite_norm: norm,
            threshold: blowup_threshold,
        })
    };
    if let Some(report) = diverged(0, x0) {
        return Ok(PlainOutcome::Diverged(report));
    }

    let mut state = IterateState::initial(x0.clone());
    let mut recorder = Recorder::new(stride, &state);
    let mut obs = vec![0.0; problem.dim()];
    for n in 0..horizon {
        problem.model().observe(&state.x, rng, &mut obs);
        let gain = schedule.gain(n + 1);
        let x = half_step(&state.x, &obs, gain);
        if let Some(report) = diverged(n + 1, &x) {
            return Ok(PlainOutcome::Diverged(report));
        }
        state = IterateState {
            n: n + 1,
            x: x.into(),
            ..state
        };
        recorder.offer(&state, false);
    }
    Ok(PlainOutcome::Completed(Trajectory {
        problem_id: problem.id().to_string(),
        schedule: *schedule,
        states: recorder.finish(&state),
        final_state: state,
        truncation_events: Vec::new(),
    }))
}

/// `(x - root) / sqrt(gamma_n)`.
pub fn normalized_error(x: &[f64], root: &[f64], schedule: &GainSchedule, n: u64) -> Vector {
    let scale = schedule.gain(n).sqrt();
    x.iter()
        .zip(root)
        .map(|(xi, ri)| (xi - ri) / scale)
        .collect::<Vec<_>>()
        .into()
}

/// Normalized error `Delta_n` of a recorded state.
pub fn delta(trajectory: &Trajectory, n: u64, root: &Vector) -> Result<Vector> {
    let idx = trajectory
        .states
        .binary_search_by_key(&n, |s| s.n)
        .map_err(|_| Error::NotRecorded { step: n })?;
    let state = &trajectory.states[idx];
    check_dim(state.x.dim(), root.dim())?;
    Ok(normalized_error(&state.x, root, &trajectory.schedule, n))
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_header(w: &mut impl Write, fixed: &[&str], prefix: &str, d: usize) -> io::Result<()> {
    let mut cols: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    cols.extend((0..d).map(|i| format!("{prefix}_{i}")));
    writeln!(w, "{}", cols.join(","))
}

/// CSV with columns `step,sigma,x_0..x_{d-1}`.
pub fn write_trajectory_csv(trajectory: &Trajectory, mut w: impl Write) -> io::Result<()> {
    let d = trajectory.final_state.x.dim();
    write_header(&mut w, &["step", "sigma"], "x", d)?;
    for s in &trajectory.states {
        let xs: Vec<String> = s.x.iter().map(|&v| fmt_float(v)).collect();
        writeln!(w, "{},{},{}", s.n, s.sigma, xs.join(","))?;
    }
    Ok(())
}

/// CSV with columns `step,sigma_after,p_0..p_{d-1}`.
pub fn write_truncations_csv(trajectory: &Trajectory, mut w: impl Write) -> io::Result<()> {
    let d = trajectory.final_state.x.dim();
    write_header(&mut w, &["step", "sigma_after"], "p", d)?;
    for e in &trajectory.truncation_events {
        let ps: Vec<String> = e.p_term.iter().map(|&v| fmt_float(v)).collect();
        writeln!(w, "{},{},{}", e.step, e.sigma_after, ps.join(","))?;
    }
    Ok(())
}

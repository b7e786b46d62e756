use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use truncsa::asymptotics::{covariance_quadrature_auto, relative_frobenius_error};
use truncsa::solver::{
    default_blowup_threshold, run_plain, run_truncated, write_trajectory_csv, write_truncations_csv,
};
use truncsa::verify::{clt_report, run_replications, write_delta_csv};
use truncsa::{
    asymptotic_covariance, check_stability, CltReport, PlainOutcome, Regime, RngStream, SymMatrix,
    Trajectory,
};

use crate::config::{Experiment, RunConfig};
use crate::error::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TRUNCATIONS_FILE: &str = "truncations.csv";
pub const CLT_REPORT_FILE: &str = "clt_report.json";
pub const DELTA_SAMPLES_FILE: &str = "delta_samples.csv";
pub const CLT_SUMMARY_FILE: &str = "clt_summary.csv";

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceDoc {
    #[serde(rename = "V")]
    pub v: SymMatrix,
    pub regime: Regime,
    pub stability_margin: f64,
    pub lyapunov_residual: f64,
    /// Relative Frobenius distance to the quadrature oracle; absolute when `V = 0`.
    pub quadrature_check_err: f64,
}

/// Closed-form covariance for the configured problem, cross-checked by quadrature.
pub fn covariance(config: &RunConfig) -> Result<CovarianceDoc, CliError> {
    let exp = config.experiment()?;
    let a = exp.problem.jacobian();
    let sigma = exp.problem.noise_cov();
    let schedule = &exp.algorithm.schedule;
    let closed = asymptotic_covariance(a, sigma, schedule)?;
    let quad = covariance_quadrature_auto(a, sigma, schedule)?;
    let quadrature_check_err = if closed.v.frobenius_norm() == 0.0 {
        quad.frobenius_norm()
    } else {
        relative_frobenius_error(quad.matrix(), closed.v.matrix())
    };
    Ok(CovarianceDoc {
        v: closed.v,
        regime: closed.regime,
        stability_margin: closed.stability_margin,
        lyapunov_residual: closed.lyapunov_residual,
        quadrature_check_err,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveSummary {
    pub steps: u64,
    pub final_error: f64,
    pub sigma_final: u32,
}

/// Single seeded trajectory, written as `trajectory.csv` and `truncations.csv`.
pub fn solve(config: &RunConfig, plain: bool, out_dir: &Path) -> Result<SolveSummary, CliError> {
    let exp = config.experiment()?;
    let mut rng = RngStream::new(exp.master_seed, 0);
    let traj = if plain {
        match run_plain(
            &exp.problem,
            &exp.algorithm.schedule,
            &exp.x0,
            exp.horizon,
            exp.stride,
            default_blowup_threshold(&exp.x0),
            &mut rng,
        )? {
            PlainOutcome::Completed(t) => t,
            PlainOutcome::Diverged(report) => return Err(CliError::Diverged(report)),
        }
    } else {
        run_truncated(
            &exp.problem,
            &exp.algorithm,
            &exp.x0,
            exp.horizon,
            exp.stride,
            &mut rng,
        )?
    };
    fs::create_dir_all(out_dir)?;
    write_file(&out_dir.join(TRAJECTORY_FILE), |w| {
        write_trajectory_csv(&traj, w)
    })?;
    write_file(&out_dir.join(TRUNCATIONS_FILE), |w| {
        write_truncations_csv(&traj, w)
    })?;
    Ok(summarize(&exp, &traj))
}

fn summarize(exp: &Experiment, traj: &Trajectory) -> SolveSummary {
    SolveSummary {
        steps: traj.final_state.n,
        final_error: traj.final_state.x.distance(exp.problem.root()),
        sigma_final: traj.final_state.sigma,
    }
}

/// Output locations of a `verify-clt` run.
#[derive(Clone, Debug)]
pub struct CltOutputs {
    pub report: PathBuf,
    pub deltas: PathBuf,
    pub summary: PathBuf,
}

/// Replicated CLT experiment; the regime condition is checked before any run.
pub fn verify_clt(
    config: &RunConfig,
    workers: usize,
    out_dir: &Path,
) -> Result<(CltReport, CltOutputs), CliError> {
    let exp = config.experiment()?;
    let a = exp.problem.jacobian();
    check_stability(a, &exp.algorithm.schedule)?;
    let v = asymptotic_covariance(a, exp.problem.noise_cov(), &exp.algorithm.schedule)?.v;
    let results = run_replications(
        &exp.problem,
        &exp.algorithm,
        &exp.x0,
        exp.horizon,
        exp.replications,
        exp.master_seed,
        workers,
    )?;
    let report = clt_report(&results, &v, &exp.tolerances, exp.horizon)?;

    fs::create_dir_all(out_dir)?;
    let outputs = CltOutputs {
        report: out_dir.join(CLT_REPORT_FILE),
        deltas: out_dir.join(DELTA_SAMPLES_FILE),
        summary: out_dir.join(CLT_SUMMARY_FILE),
    };
    write_file(&outputs.report, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    write_file(&outputs.deltas, |w| write_delta_csv(&results, w))?;
    write_file(&outputs.summary, |w| {
        writeln!(w, "{}", CltReport::CSV_HEADER)?;
        writeln!(w, "{}", report.csv_row())
    })?;
    Ok((report, outputs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlainResult {
    DivergedAt(u64),
    FinalError(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareDoc {
    pub plain: PlainResult,
    /// `X_N` of the plain run when it completed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plain_final_x: Option<Vec<f64>>,
    pub truncated: f64,
    pub truncated_final_x: Vec<f64>,
    pub sigma_final: u32,
    /// Both runs completed with bit-identical final iterates.
    pub identical: bool,
}

/// Plain and truncated recursions driven by the same seed.
pub fn compare(config: &RunConfig) -> Result<CompareDoc, CliError> {
    let exp = config.experiment()?;
    let root = exp.problem.root();
    let plain = run_plain(
        &exp.problem,
        &exp.algorithm.schedule,
        &exp.x0,
        exp.horizon,
        exp.horizon,
        default_blowup_threshold(&exp.x0),
        &mut RngStream::new(exp.master_seed, 0),
    )?;
    let truncated = run_truncated(
        &exp.problem,
        &exp.algorithm,
        &exp.x0,
        exp.horizon,
        exp.horizon,
        &mut RngStream::new(exp.master_seed, 0),
    )?;
    let fin = truncated.final_state;
    let (plain, plain_final_x) = match plain {
        PlainOutcome::Completed(t) => (
            PlainResult::FinalError(t.final_state.x.distance(root)),
            Some(t.final_state.x.to_vec()),
        ),
        PlainOutcome::Diverged(r) => (PlainResult::DivergedAt(r.diverged_at), None),
    };
    Ok(CompareDoc {
        identical: plain_final_x.as_deref() == Some(&fin.x[..]),
        plain,
        plain_final_x,
        truncated: fin.x.distance(root),
        truncated_final_x: fin.x.to_vec(),
        sigma_final: fin.sigma,
    })
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

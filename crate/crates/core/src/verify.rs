//! Monte Carlo check of the central limit theorem for the truncated recursion.
//!
//! Replication `i` runs on `RngStream(master_seed, i)` and contributes one
//! draw of `Delta_N`. The draws are compared to the theoretical covariance,
//! whitened, and tested for normality coordinate-wise (Kolmogorov-Smirnov)
//! and jointly (Mardia kurtosis).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{eigh, relative_frobenius_error};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix, Vector};
use crate::model::{Problem, RngStream};
use crate::solver::{normalized_error, run_truncated, Algorithm};

pub mod synthetic;

pub const KS_CRITICAL_5PCT: f64 = 1.358;
pub const KS_CRITICAL_1PCT: f64 = 1.628;
pub const KS_MIN_SAMPLES: usize = 20;
pub const MARDIA_MIN_SAMPLES: usize = 50;
pub const MARDIA_Z_LIMIT: f64 = 4.0;
pub const NEAR_SINGULAR_RATIO: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub stream_id: u64,
    pub delta_final: Vector,
    pub sigma_final: u32,
    pub last_truncation_step: Option<u64>,
}

/// Runs `m` independent truncated trajectories of length `horizon`.
///
/// Results are ordered by stream id whatever the worker count.
pub fn run_replications(
    problem: &Problem,
    algorithm: &Algorithm,
    x0: &Vector,
    horizon: u64,
    m: usize,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<ReplicationResult>> {
    if m < 2 {
        return Err(Error::InsufficientSample {
            what: "replications",
            needed: 2,
            got: m,
        });
    }
    let one = |stream_id: u64| -> Result<ReplicationResult> {
        let mut rng = RngStream::new(master_seed, stream_id);
        let traj =
            run_truncated(problem, algorithm, x0, horizon, horizon, &mut rng).map_err(|e| {
                Error::Replication {
                    stream_id,
                    source: Box::new(e),
                }
            })?;
        let fin = traj.final_state;
        let delta_final = normalized_error(&fin.x, problem.root(), &algorithm.schedule, fin.n);
        if !delta_final.is_finite() {
            return Err(Error::Replication {
                stream_id,
                source: Box::new(Error::NonFinite { step: fin.n }),
            });
        }
        Ok(ReplicationResult {
            stream_id,
            delta_final,
            sigma_final: fin.sigma,
            last_truncation_step: fin.last_truncation_step,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    pool.install(|| (0..m as u64).into_par_iter().map(one).collect())
}

/// Mean-centered sample covariance with `1/(m - 1)` normalization.
pub fn empirical_covariance(samples: &[Vector]) -> Result<SymMatrix> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::InsufficientSample {
            what: "empirical covariance",
            needed: 2,
            got: m,
        });
    }
    let d = samples[0].dim();
    let mut mean = vec![0.0; d];
    for s in samples {
        s.check_dim(d)?;
        for (acc, v) in mean.iter_mut().zip(s.iter()) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut cov = Matrix::zeros(d);
    for s in samples {
        for i in 0..d {
            let ci = s[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += ci * (s[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (m - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(SymMatrix::symmetrize(cov))
}

/// `V^{1/2}` and `V^{-1/2}` from one eigendecomposition; rejects near-singular `V`.
pub fn square_root_pair(v: &SymMatrix) -> Result<(SymMatrix, SymMatrix)> {
    let eig = eigh(v)?;
    let threshold = NEAR_SINGULAR_RATIO * v.trace();
    let lambda = eig.min_eigenvalue();
    if lambda <= threshold {
        return Err(Error::NearSingular {
            eigenvalue: lambda,
            threshold,
        });
    }
    Ok((
        eig.map_spectrum(f64::sqrt),
        eig.map_spectrum(|l| 1.0 / l.sqrt()),
    ))
}

fn apply(m: &Matrix, samples: &[Vector]) -> Vec<Vector> {
    samples.iter().map(|s| m.mul_vec(s).into()).collect()
}

/// `V^{-1/2} s` for every sample.
pub fn whiten(samples: &[Vector], v: &SymMatrix) -> Result<Vec<Vector>> {
    let (_, inv_half) = square_root_pair(v)?;
    for s in samples {
        s.check_dim(v.dim())?;
    }
    Ok(apply(&inv_half, samples))
}

/// `V^{1/2} s` for every sample; inverse of [`whiten`].
pub fn unwhiten(samples: &[Vector], v: &SymMatrix) -> Result<Vec<Vector>> {
    let (half, _) = square_root_pair(v)?;
    Ok(apply(&half, samples))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub d_stat: f64,
    pub critical_5pct: f64,
    pub critical_1pct: f64,
}

/// One-sample Kolmogorov-Smirnov statistic against `N(0, 1)` with asymptotic
/// critical values.
pub fn ks_normal_test(samples: &[f64]) -> Result<KsResult> {
    let m = samples.len();
    if m == 0 {
        return Err(Error::InsufficientSample {
            what: "Kolmogorov-Smirnov test",
            needed: 1,
            got: 0,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mf = m as f64;
    let d_stat = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            let above = (i + 1) as f64 / mf - f;
            let below = f - i as f64 / mf;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let root_m = mf.sqrt();
    Ok(KsResult {
        d_stat,
        critical_5pct: KS_CRITICAL_5PCT / root_m,
        critical_1pct: KS_CRITICAL_1PCT / root_m,
    })
}

/// Mardia's kurtosis z-score of the samples under `N(0, V)`.
pub fn mardia_kurtosis(samples: &[Vector], v: &SymMatrix) -> Result<f64> {
    let m = samples.len();
    if m < MARDIA_MIN_SAMPLES {
        return Err(Error::InsufficientSample {
            what: "Mardia kurtosis",
            needed: MARDIA_MIN_SAMPLES,
            got: m,
        });
    }
    let white = whiten(samples, v)?;
    let d = v.dim() as f64;
    let b = white.iter().map(|w| w.norm().powi(4)).sum::<f64>() / m as f64;
    let null = d * (d + 2.0);
    Ok((b - null) * (m as f64 / (8.0 * null)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Bound on `|V_emp - V|_F / |V|_F`.
    pub cov_rel_err: f64,
    /// Kolmogorov-Smirnov level, 0.05 or 0.01.
    pub ks_level: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cov_rel_err: 0.2,
            ks_level: 0.01,
        }
    }
}

impl Tolerances {
    pub fn new(cov_rel_err: f64, ks_level: f64) -> Result<Self> {
        let t = Tolerances {
            cov_rel_err,
            ks_level,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cov_rel_err.is_finite() && self.cov_rel_err > 0.0) {
            return Err(Error::invalid("cov_rel_err", "must be positive"));
        }
        if self.ks_level != 0.05 && self.ks_level != 0.01 {
            return Err(Error::invalid(
                "ks_level",
                format!("must be 0.05 or 0.01, got {}", self.ks_level),
            ));
        }
        Ok(())
    }

    fn ks_critical(&self, ks: &KsResult) -> f64 {
        if self.ks_level == 0.05 {
            ks.critical_5pct
        } else {
            ks.critical_1pct
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationSummary {
    pub max_sigma: u32,
    pub mean_sigma: f64,
    pub late_truncation_count: usize,
    pub late_threshold: u64,
}

/// Counts replications whose last truncation came after `horizon / 10`.
pub fn truncation_stats(results: &[ReplicationResult], horizon: u64) -> TruncationSummary {
    let late_threshold = horizon / 10;
    let max_sigma = results.iter().map(|r| r.sigma_final).max().unwrap_or(0);
    let mean_sigma = if results.is_empty() {
        0.0
    } else {
        results.iter().map(|r| r.sigma_final as f64).sum::<f64>() / results.len() as f64
    };
    let late_truncation_count = results
        .iter()
        .filter(|r| r.last_truncation_step.is_some_and(|s| s > late_threshold))
        .count();
    TruncationSummary {
        max_sigma,
        mean_sigma,
        late_truncation_count,
        late_threshold,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    InsufficientSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub covariance: bool,
    /// `None` when the sample is too small for the test.
    pub ks: Option<bool>,
    pub mardia: Option<bool>,
    pub truncation: bool,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub m: usize,
    pub n: u64,
    pub v_theory: SymMatrix,
    pub v_empirical: SymMatrix,
    pub frob_rel_err: f64,
    pub ks_stats: Vec<f64>,
    pub ks_critical: Option<f64>,
    pub mardia_kurtosis_z: Option<f64>,
    pub truncation_summary: TruncationSummary,
    pub tolerances: Tolerances,
    pub verdict: Verdict,
}

impl CltReport {
    pub fn passed(&self) -> bool {
        self.verdict.outcome == Outcome::Pass
    }

    pub const CSV_HEADER: &'static str = "m,n,frob_rel_err,ks_max,ks_critical,mardia_z,max_sigma,mean_sigma,late_truncations,outcome";

    /// Single summary row matching [`CltReport::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(crate::solver::fmt_float).unwrap_or_default();
        let ks_max = self.ks_stats.iter().cloned().reduce(f64::max);
        let outcome = match self.verdict.outcome {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::InsufficientSample => "insufficient_sample",
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.m,
            self.n,
            crate::solver::fmt_float(self.frob_rel_err),
            opt(ks_max),
            opt(self.ks_critical),
            opt(self.mardia_kurtosis_z),
            self.truncation_summary.max_sigma,
            crate::solver::fmt_float(self.truncation_summary.mean_sigma),
            self.truncation_summary.late_truncation_count,
            outcome
        )
    }
}

/// Assembles every statistic and the verdict.
///
/// Passing requires the covariance error within tolerance, every whitened
/// KS statistic below its critical value, `|z_Mardia| < 4` and no truncation
/// after `horizon / 10`. Samples too small for the KS or Mardia test give an
/// `InsufficientSample` outcome.
pub fn clt_report(
    results: &[ReplicationResult],
    v_theory: &SymMatrix,
    tolerances: &Tolerances,
    horizon: u64,
) -> Result<CltReport> {
    tolerances.validate()?;
    let m = results.len();
    let samples: Vec<Vector> = results.iter().map(|r| r.delta_final.clone()).collect();
    let v_empirical = empirical_covariance(&samples)?;
    let frob_rel_err = relative_frobenius_error(v_empirical.matrix(), v_theory.matrix());
    let white = whiten(&samples, v_theory)?;

    let d = v_theory.dim();
    let (ks_stats, ks_critical, ks_pass) = if m >= KS_MIN_SAMPLES {
        let mut stats = Vec::with_capacity(d);
        let mut critical = 0.0;
        for k in 0..d {
            let coord: Vec<f64> = white.iter().map(|w| w[k]).collect();
            let ks = ks_normal_test(&coord)?;
            critical = tolerances.ks_critical(&ks);
            stats.push(ks.d_stat);
        }
        let pass = stats.iter().all(|&s| s < critical);
        (stats, Some(critical), Some(pass))
    } else {
        (Vec::new(), None, None)
    };
    let mardia_kurtosis_z = match mardia_kurtosis(&samples, v_theory) {
        Ok(z) => Some(z),
        Err(Error::InsufficientSample { .. }) => None,
        Err(e) => return Err(e),
    };
    let mardia = mardia_kurtosis_z.map(|z| z.abs() < MARDIA_Z_LIMIT);
    let truncation_summary = truncation_stats(results, horizon);

    let covariance = frob_rel_err <= tolerances.cov_rel_err;
    let truncation = truncation_summary.late_truncation_count == 0;
    let outcome = match (ks_pass, mardia) {
        (Some(k), Some(mk)) if covariance && truncation && k && mk => Outcome::Pass,
        (Some(_), Some(_)) => Outcome::Fail,
        _ => Outcome::InsufficientSample,
    };
    Ok(CltReport {
        m,
        n: horizon,
        v_theory: v_theory.clone(),
        v_empirical,
        frob_rel_err,
        ks_stats,
        ks_critical,
        mardia_kurtosis_z,
        truncation_summary,
        tolerances: *tolerances,
        verdict: Verdict {
            covariance,
            ks: ks_pass,
            mardia,
            truncation,
            outcome,
        },
    })
}

/// CSV of raw samples: `stream_id,delta_0..delta_{d-1},sigma_final`.
pub fn write_delta_csv(
    results: &[ReplicationResult],
    mut w: impl std::io::Write,
) -> std::io::Result<()> {
    let d = results.first().map_or(0, |r| r.delta_final.dim());
    let mut header = vec!["stream_id".to_string()];
    header.extend((0..d).map(|i| format!("delta_{i}")));
    header.push("sigma_final".into());
    writeln!(w, "{}", header.join(","))?;
    for r in results {
        let ds: Vec<String> = r
            .delta_final
            .iter()
            .map(|&v| crate::solver::fmt_float(v))
            .collect();
        writeln!(w, "{},{},{}", r.stream_id, ds.join(","), r.sigma_final)?;
    }
    Ok(())
}

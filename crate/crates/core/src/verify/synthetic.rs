//! Synthetic samples with a known law, used to check the report itself.

use crate::error::Result;
use crate::linalg::{cholesky, SymMatrix, Vector};
use crate::model::RngStream;
use crate::verify::ReplicationResult;

/// One standard normal pair by Box-Muller.
pub fn box_muller(rng: &mut RngStream) -> (f64, f64) {
    let r = (-2.0 * rng.open_unit().ln()).sqrt();
    let theta = std::f64::consts::TAU * rng.open_unit();
    (r * theta.cos(), r * theta.sin())
}

fn standard_normals(rng: &mut RngStream, d: usize) -> Vec<f64> {
    let mut z = Vec::with_capacity(d + 1);
    while z.len() < d {
        let (a, b) = box_muller(rng);
        z.push(a);
        z.push(b);
    }
    z.truncate(d);
    z
}

/// `m` exact draws from `N(0, v)`.
pub fn gaussian_samples(v: &SymMatrix, m: usize, rng: &mut RngStream) -> Result<Vec<Vector>> {
    let l = cholesky(v)?;
    Ok((0..m)
        .map(|_| l.mul_vec(&standard_normals(rng, v.dim())).into())
        .collect())
}

/// `m` multivariate Student-t draws with `dof > 2` degrees of freedom, scaled
/// so their covariance is exactly `v`. Heavy tails, correct second moments.
pub fn student_t_samples(
    v: &SymMatrix,
    dof: u32,
    m: usize,
    rng: &mut RngStream,
) -> Result<Vec<Vector>> {
    assert!(dof > 2, "Student-t needs dof > 2 for a finite covariance");
    let l = cholesky(v)?;
    let nu = dof as f64;
    let unit_variance = ((nu - 2.0) / nu).sqrt();
    Ok((0..m)
        .map(|_| {
            let z = standard_normals(rng, v.dim());
            let chi2: f64 = standard_normals(rng, dof as usize)
                .iter()
                .map(|g| g * g)
                .sum();
            let w = unit_variance / (chi2 / nu).sqrt();
            let scaled: Vec<f64> = z.iter().map(|zi| zi * w).collect();
            l.mul_vec(&scaled).into()
        })
        .collect())
}

/// Wraps samples as untruncated replication results.
pub fn as_results(samples: Vec<Vector>) -> Vec<ReplicationResult> {
    samples
        .into_iter()
        .enumerate()
        .map(|(i, delta_final)| ReplicationResult {
            stream_id: i as u64,
            delta_final,
            sigma_final: 0,
            last_truncation_step: None,
        })
        .collect()
}

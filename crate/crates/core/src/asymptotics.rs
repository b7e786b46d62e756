//! Limiting covariance of the normalized error `(X_n - x*) / sqrt(gamma_n)`.
//!
//! For `1/2 < alpha < 1` the covariance is `V = int_0^inf e^{-At} Sigma e^{-At} dt`,
//! the unique solution of `A V + V A = Sigma`. For `alpha = 1` it is
//! `V = gamma int_0^inf e^{(I/2 - gamma A)t} Sigma e^{(I/2 - gamma A)t} dt`, which
//! solves `(gamma A - I/2) V + V (gamma A - I/2) = gamma Sigma` and exists only
//! when `gamma A - I/2` is positive definite.
//!
//! The closed form works in the eigenbasis of the symmetric operator. The
//! quadrature routine evaluates the integrals directly with series matrix
//! exponentials and serves as an independent check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::model::GainSchedule;

pub const MAX_JACOBI_SWEEPS: usize = 100;
pub const JACOBI_TOLERANCE: f64 = 1e-14;
pub const LYAPUNOV_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct EigDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthogonal; column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

impl EigDecomposition {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `U f(diag(lambda)) Uᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let u = &self.eigenvectors;
        let n = u.dim();
        let mut out = Matrix::zeros(n);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            for i in 0..n {
                let uik = u[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += uik * u[(j, k)];
                }
            }
        }
        SymMatrix::symmetrize(out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map_spectrum(|l| l)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eigh(m: &SymMatrix) -> Result<EigDecomposition> {
    let n = m.dim();
    let mut a = m.matrix().clone();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let target = JACOBI_TOLERANCE * scale;

    let mut converged = false;
    for sweep in 0..=MAX_JACOBI_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            converged = true;
            break;
        }
        if sweep == MAX_JACOBI_SWEEPS {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                // Negligible against both diagonal entries: annihilate without rotating.
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: MAX_JACOBI_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors[(row, col)] = v[(row, src)];
        }
    }
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

// A <- Jᵀ A J, V <- V J for the plane rotation J(p, q, c, s).
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.dim();
    for k in 0..n {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Solves `B V + V B = C` for symmetric positive definite `B`.
pub fn lyapunov_solve(b: &SymMatrix, c: &SymMatrix) -> Result<SymMatrix> {
    if b.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: c.dim(),
        });
    }
    let eig = eigh(b)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&mu| mu <= 0.0) {
        return Err(Error::NotPositiveDefinite { eigenvalue: bad });
    }
    let u = &eig.eigenvectors;
    let mut rotated = c.congruence(u).into_matrix();
    let n = b.dim();
    for i in 0..n {
        for j in 0..n {
            rotated[(i, j)] /= eig.eigenvalues[i] + eig.eigenvalues[j];
        }
    }
    Ok(SymMatrix::symmetrize(
        u.matmul(&rotated).matmul(&u.transpose()),
    ))
}

/// `|B V + V B - C|_F / |C|_F` (absolute when `C = 0`).
pub fn lyapunov_residual(b: &SymMatrix, v: &SymMatrix, c: &SymMatrix) -> f64 {
    let bv = b.matmul(v);
    let lhs = bv.add(&bv.transpose());
    let r = lhs.sub(c).frobenius_norm();
    let cn = c.frobenius_norm();
    if cn > 0.0 {
        r / cn
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    AlphaBelowOne,
    AlphaEqualOne,
}

impl Regime {
    pub fn of(schedule: &GainSchedule) -> Regime {
        if schedule.is_critical_exponent() {
            Regime::AlphaEqualOne
        } else {
            Regime::AlphaBelowOne
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stability {
    pub stable: bool,
    /// `gamma lambda_min(A) - 1/2` at `alpha = 1`, `lambda_min(A)` otherwise.
    pub margin: f64,
}

/// Checks `gamma A - I/2` positive definite at `alpha = 1`. Below `alpha = 1`
/// only `A` positive definite is needed.
pub fn check_stability(a: &SymMatrix, schedule: &GainSchedule) -> Result<Stability> {
    let lambda_min = eigh(a)?.min_eigenvalue();
    Ok(match Regime::of(schedule) {
        Regime::AlphaEqualOne => {
            let margin = schedule.gamma() * lambda_min - 0.5;
            Stability {
                stable: margin > 0.0,
                margin,
            }
        }
        Regime::AlphaBelowOne => Stability {
            stable: lambda_min > 0.0,
            margin: lambda_min,
        },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceResult {
    pub v: SymMatrix,
    pub regime: Regime,
    pub lyapunov_residual: f64,
    pub stability_margin: f64,
}

/// Closed-form CLT covariance for either gain regime.
pub fn asymptotic_covariance(
    a: &SymMatrix,
    sigma: &SymMatrix,
    schedule: &GainSchedule,
) -> Result<CovarianceResult> {
    if a.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: sigma.dim(),
        });
    }
    let stability = check_stability(a, schedule)?;
    let regime = Regime::of(schedule);
    if !stability.stable {
        return Err(match regime {
            Regime::AlphaEqualOne => Error::RegimeBoundary {
                scaled_min_eigenvalue: stability.margin + 0.5,
            },
            Regime::AlphaBelowOne => Error::NotPositiveDefinite {
                eigenvalue: stability.margin,
            },
        });
    }
    let (b, c) = match regime {
        Regime::AlphaBelowOne => (a.clone(), sigma.clone()),
        Regime::AlphaEqualOne => {
            let gamma = schedule.gamma();
            let half = SymMatrix::identity(a.dim()).scale(0.5);
            (a.scale(gamma).sub(&half), sigma.scale(gamma))
        }
    };
    let v = lyapunov_solve(&b, &c)?;
    Ok(CovarianceResult {
        lyapunov_residual: lyapunov_residual(&b, &v, &c),
        v,
        regime,
        stability_margin: stability.margin,
    })
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(m: &Matrix) -> Matrix {
    let n = m.dim();
    let norm = m.norm_one();
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = m.scale(0.5f64.powi(squarings as i32));

    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=30 {
        term = term.matmul(&scaled).scale(1.0 / k as f64);
        sum = sum.add(&term);
        if term.max_abs() <= f64::EPSILON * 1e-3 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    sum
}

/// Composite Simpson evaluation of the covariance integral on `[0, t_max]`.
///
/// `steps` must be even. Matrix exponentials come from [`expm`], never from
/// an eigendecomposition.
pub fn covariance_quadrature(
    a: &SymMatrix,
    sigma: &SymMatrix,
    schedule: &GainSchedule,
    t_max: f64,
    steps: usize,
) -> Result<SymMatrix> {
    if steps == 0 || !steps.is_multiple_of(2) {
        return Err(Error::Quadrature(format!(
            "steps must be even and positive, got {steps}"
        )));
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::Quadrature(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    let (generator, factor) = integrand_generator(a, schedule);
    let h = t_max / steps as f64;
    let step = expm(&generator.scale(h));

    let n = a.dim();
    let mut flow = Matrix::identity(n);
    let mut acc = Matrix::zeros(n);
    for k in 0..=steps {
        let weight = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let value = flow.matmul(sigma.matrix()).matmul(&flow.transpose());
        acc = acc.add(&value.scale(weight));
        if k < steps {
            flow = flow.matmul(&step);
        }
    }
    Ok(SymMatrix::symmetrize(acc.scale(factor * h / 3.0)))
}

/// Picks `(t_max, steps)` for [`covariance_quadrature`] without touching the
/// spectrum: integrates until `|e^{Gt}|_F^2 <= 1e-14` and keeps `h |G|_F <= 0.01`.
pub fn quadrature_grid(a: &SymMatrix, schedule: &GainSchedule) -> Result<(f64, usize)> {
    let (generator, _) = integrand_generator(a, schedule);
    let rate = generator.frobenius_norm();
    if rate == 0.0 {
        return Err(Error::Quadrature("integrand generator is zero".into()));
    }
    let unit = 1.0 / rate;
    let jump = expm(&generator.scale(unit));
    let mut flow = Matrix::identity(a.dim());
    let mut t = 0.0;
    while flow.frobenius_norm().powi(2) > 1e-14 {
        flow = flow.matmul(&jump);
        t += unit;
        if t > 1e4 || !flow.max_abs().is_finite() {
            return Err(Error::Quadrature(
                "integrand does not decay; the generator is not stable".into(),
            ));
        }
    }
    let h_max = 0.01 * unit;
    let mut steps = (t / h_max).ceil() as usize;
    steps += steps % 2;
    Ok((t, steps.max(2)))
}

// The exponent G of e^{Gt} and the scalar in front of the integral.
fn integrand_generator(a: &SymMatrix, schedule: &GainSchedule) -> (Matrix, f64) {
    match Regime::of(schedule) {
        Regime::AlphaBelowOne => (a.matrix().scale(-1.0), 1.0),
        Regime::AlphaEqualOne => {
            let gamma = schedule.gamma();
            let half = Matrix::identity(a.dim()).scale(0.5);
            (half.sub(&a.matrix().scale(gamma)), gamma)
        }
    }
}

/// Quadrature oracle on an automatically chosen grid.
pub fn covariance_quadrature_auto(
    a: &SymMatrix,
    sigma: &SymMatrix,
    schedule: &GainSchedule,
) -> Result<SymMatrix> {
    let (t_max, steps) = quadrature_grid(a, schedule)?;
    covariance_quadrature(a, sigma, schedule, t_max, steps)
}

/// `|x - y|_F / |y|_F`.
pub fn relative_frobenius_error(x: &Matrix, y: &Matrix) -> f64 {
    x.sub(y).frobenius_norm() / y.frobenius_norm()
}

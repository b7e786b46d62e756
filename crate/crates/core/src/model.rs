//! Domain vocabulary: gain schedules, truncation compacts, reset policies,
//! root-finding problems and the per-replication random stream.

use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::asymptotics::eigh;
use crate::error::{Error, Result};
use crate::linalg::{self, check_dim, SymMatrix, Vector};

/// Step sequence `gamma_n = gamma / (n + 1)^alpha` with `1/2 < alpha <= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct GainSchedule {
    gamma: f64,
    alpha: f64,
}

#[derive(Deserialize)]
struct RawSchedule {
    gamma: f64,
    alpha: f64,
}

impl TryFrom<RawSchedule> for GainSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        GainSchedule::new(raw.gamma, raw.alpha)
    }
}

impl GainSchedule {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(
                "gamma",
                format!("must be positive, got {gamma}"),
            ));
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!(
                    "must lie in the interval (1/2, 1], got {alpha}; \
                     outside this range almost sure convergence is not guaranteed"
                ),
            ));
        }
        Ok(GainSchedule { gamma, alpha })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `gamma_n`; `gain(0) == gamma`. The move from `X_n` to `X_{n+1}` uses `gain(n + 1)`.
    pub fn gain(&self, n: u64) -> f64 {
        let base = (n as f64) + 1.0;
        if self.alpha == 1.0 {
            self.gamma / base
        } else {
            self.gamma / base.powf(self.alpha)
        }
    }

    pub fn is_critical_exponent(&self) -> bool {
        self.alpha == 1.0
    }
}

/// Closed balls `K_j = { x : |x - center| <= r0 * growth^j }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTruncation")]
pub struct TruncationSequence {
    center: Vector,
    r0: f64,
    growth: f64,
}

#[derive(Deserialize)]
struct RawTruncation {
    center: Vector,
    r0: f64,
    growth: f64,
}

impl TryFrom<RawTruncation> for TruncationSequence {
    type Error = Error;

    fn try_from(raw: RawTruncation) -> Result<Self> {
        TruncationSequence::new(raw.center, raw.r0, raw.growth)
    }
}

impl TruncationSequence {
    pub fn new(center: Vector, r0: f64, growth: f64) -> Result<Self> {
        if !center.is_finite() || center.dim() == 0 {
            return Err(Error::invalid(
                "center",
                "must be a finite vector of dimension >= 1",
            ));
        }
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::invalid("r0", format!("must be positive, got {r0}")));
        }
        if !(growth.is_finite() && growth > 1.0) {
            return Err(Error::invalid(
                "growth",
                format!("must exceed 1, got {growth}"),
            ));
        }
        Ok(TruncationSequence { center, r0, growth })
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn radius(&self, j: u32) -> f64 {
        self.r0 * self.growth.powi(j.min(i32::MAX as u32) as i32)
    }

    /// Membership in `K_j`; boundary points are inside.
    pub fn contains(&self, j: u32, x: &[f64]) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        Ok(self.contains_unchecked(j, x))
    }

    pub(crate) fn contains_unchecked(&self, j: u32, x: &[f64]) -> bool {
        let d = linalg::distance(&self.center, x);
        // NaN distances fail the comparison and count as outside.
        d <= self.radius(j)
    }

    /// `radius(j) - |x - center|`: positive inside, zero on the boundary.
    pub fn boundary_margin(&self, j: u32, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.radius(j) - linalg::distance(&self.center, x))
    }

    /// Checks `d(x*, boundary of K_j) >= mu` for every `j`.
    ///
    /// The radii increase, so the binding compact is `K_0`. This can only be
    /// checked when the root is known.
    pub fn check_root_margin(&self, root: &[f64], mu: f64) -> Result<f64> {
        let margin = self.boundary_margin(0, root)?;
        if margin >= mu && mu > 0.0 {
            Ok(margin)
        } else {
            Err(Error::invalid(
                "truncation",
                format!("root margin {margin} to the boundary of K_0 is below mu = {mu}"),
            ))
        }
    }
}

/// Where an iterate goes when it escapes the current compact.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "target")]
pub enum ResetPolicy {
    #[default]
    ToInitial,
    ToFixedPoint(Vector),
}

impl ResetPolicy {
    pub fn target<'a>(&'a self, x0: &'a Vector) -> &'a Vector {
        match self {
            ResetPolicy::ToInitial => x0,
            ResetPolicy::ToFixedPoint(p) => p,
        }
    }

    /// A fixed reset point must lie in `K_0`.
    pub fn validate(&self, trunc: &TruncationSequence) -> Result<()> {
        if let ResetPolicy::ToFixedPoint(p) = self {
            let margin = trunc.boundary_margin(0, p)?;
            if margin < 0.0 {
                return Err(Error::ResetTargetOutside { margin });
            }
        }
        Ok(())
    }
}

/// Deterministic random stream keyed by `(master_seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id selecting one of its 2^64
/// independent streams.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RngStream {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.standard_normal();
        }
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open_unit(&mut self) -> f64 {
        // 53 random bits offset by half an ulp so neither endpoint occurs.
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Mean field `u` and its noisy evaluation `u(x) + dM`.
pub trait FieldModel: Send + Sync + fmt::Debug {
    fn mean_field(&self, x: &[f64], out: &mut [f64]);

    /// One noisy evaluation; the noise must have zero conditional mean.
    fn observe(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]);
}

pub const ROOT_TOLERANCE: f64 = 1e-12;

/// A root-finding instance with known ground truth `(x*, A, Sigma)`.
#[derive(Clone, Debug)]
pub struct Problem {
    id: String,
    root: Vector,
    jacobian: SymMatrix,
    noise_cov: SymMatrix,
    model: Arc<dyn FieldModel>,
}

impl Problem {
    /// Validates the root, the symmetry and positivity of `A` and `Sigma`.
    pub fn new(
        id: impl Into<String>,
        root: Vector,
        jacobian: SymMatrix,
        noise_cov: SymMatrix,
        model: Arc<dyn FieldModel>,
    ) -> Result<Self> {
        let problem = Problem {
            id: id.into(),
            root,
            jacobian,
            noise_cov,
            model,
        };
        problem.validate(true)?;
        Ok(problem)
    }

    fn violation(&self, reason: impl Into<String>) -> Error {
        Error::ProblemInvariant {
            problem: self.id.clone(),
            reason: reason.into(),
        }
    }

    fn validate(&self, noisy: bool) -> Result<()> {
        let d = self.root.dim();
        if d == 0 || !self.root.is_finite() {
            return Err(self.violation("root must be a finite vector of dimension >= 1"));
        }
        check_dim(d, self.jacobian.dim())?;
        check_dim(d, self.noise_cov.dim())?;
        let at_root = self.mean_field(&self.root);
        if let Some(c) = at_root.iter().find(|c| c.abs() > ROOT_TOLERANCE) {
            return Err(self.violation(format!("mean field at the root is {c}, not 0")));
        }
        let lambda = eigh(&self.jacobian)?.min_eigenvalue();
        if lambda <= 0.0 {
            return Err(self.violation(format!("Jacobian eigenvalue {lambda} is not positive")));
        }
        if noisy {
            let lambda = eigh(&self.noise_cov)?.min_eigenvalue();
            if lambda <= 0.0 {
                return Err(self.violation(format!(
                    "noise covariance eigenvalue {lambda} is not positive"
                )));
            }
        }
        Ok(())
    }

    /// Same mean field with the measurement noise switched off (`Sigma = 0`).
    pub fn noiseless(&self) -> Problem {
        Problem {
            id: format!("{}_noiseless", self.id),
            root: self.root.clone(),
            jacobian: self.jacobian.clone(),
            noise_cov: SymMatrix::zeros(self.dim()),
            model: Arc::new(Noiseless(self.model.clone())),
        }
    }

    /// Replaces the field model, e.g. by a scripted stub. Root and Jacobian
    /// are still checked against the new mean field.
    pub fn with_model(&self, id: impl Into<String>, model: Arc<dyn FieldModel>) -> Result<Problem> {
        let p = Problem {
            id: id.into(),
            root: self.root.clone(),
            jacobian: self.jacobian.clone(),
            noise_cov: self.noise_cov.clone(),
            model,
        };
        p.validate(false)?;
        Ok(p)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.root.dim()
    }

    pub fn root(&self) -> &Vector {
        &self.root
    }

    pub fn jacobian(&self) -> &SymMatrix {
        &self.jacobian
    }

    pub fn noise_cov(&self) -> &SymMatrix {
        &self.noise_cov
    }

    pub fn model(&self) -> &dyn FieldModel {
        self.model.as_ref()
    }

    pub fn mean_field(&self, x: &[f64]) -> Vector {
        let mut out = vec![0.0; self.dim()];
        self.model.mean_field(x, &mut out);
        out.into()
    }

    pub fn observe(&self, x: &[f64], rng: &mut RngStream) -> Vector {
        let mut out = vec![0.0; self.dim()];
        self.model.observe(x, rng, &mut out);
        out.into()
    }

    /// `(x - x*) . u(x)`, positive away from the root for a monotone field.
    pub fn monotonicity(&self, x: &[f64]) -> f64 {
        let u = self.mean_field(x);
        x.iter()
            .zip(self.root.iter())
            .zip(u.iter())
            .map(|((xi, ri), ui)| (xi - ri) * ui)
            .sum()
    }

    /// `|u(x* + h) - A h| / |h|`, which must vanish as `|h| -> 0`.
    pub fn linearization_error(&self, h: &[f64]) -> f64 {
        let x: Vec<f64> = self.root.iter().zip(h).map(|(r, hi)| r + hi).collect();
        let u = self.mean_field(&x);
        let ah = self.jacobian.mul_vec(h);
        linalg::distance(&u, &ah) / linalg::norm(h)
    }
}

#[derive(Debug)]
struct Noiseless(Arc<dyn FieldModel>);

impl FieldModel for Noiseless {
    fn mean_field(&self, x: &[f64], out: &mut [f64]) {
        self.0.mean_field(x, out)
    }

    fn observe(&self, x: &[f64], _rng: &mut RngStream, out: &mut [f64]) {
        self.0.mean_field(x, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(center: Vec<f64>, r0: f64, growth: f64) -> TruncationSequence {
        TruncationSequence::new(center.into(), r0, growth).unwrap()
    }

    #[test]
    fn gain_values() {
        let s = GainSchedule::new(2.0, 1.0).unwrap();
        assert_eq!(s.gain(0), 2.0);
        assert_eq!(s.gain(3), 0.5);
        // 10^-0.7 to 17 digits
        let s = GainSchedule::new(1.0, 0.7).unwrap();
        assert!((s.gain(9) - 0.199_526_231_496_887_96).abs() < 1e-15);
    }

    #[test]
    fn gain_rejects_bad_parameters() {
        for alpha in [0.4, 0.5, 1.2, f64::NAN] {
            let err = GainSchedule::new(1.0, alpha).unwrap_err().to_string();
            assert!(err.contains("(1/2, 1]"), "{err}");
        }
        assert!(GainSchedule::new(0.0, 0.7).is_err());
        assert!(GainSchedule::new(-1.0, 0.7).is_err());
    }

    #[test]
    fn gain_is_strictly_decreasing() {
        let s = GainSchedule::new(1.5, 0.6).unwrap();
        for n in 0..1000 {
            assert!(s.gain(n + 1) < s.gain(n));
        }
    }

    #[test]
    fn gain_series_diverges_and_squares_converge() {
        let s = GainSchedule::new(1.0, 1.0).unwrap();
        let sum: f64 = (0..1_000_000u64).map(|n| s.gain(n)).sum();
        assert!(sum >= 13.0, "harmonic partial sum {sum}");

        for alpha in [0.55, 0.7, 1.0] {
            let s = GainSchedule::new(1.0, alpha).unwrap();
            let tail: f64 = (100_000u64..1_000_000).map(|n| s.gain(n).powi(2)).sum();
            // integral of x^{-2 alpha} over [1e5, inf)
            let bound = 100_000f64.powf(1.0 - 2.0 * alpha) / (2.0 * alpha - 1.0);
            assert!(
                tail < 10.0 * bound,
                "alpha {alpha}: tail {tail} bound {bound}"
            );
        }
    }

    #[test]
    fn contains_examples() {
        let k = ball(vec![0.0, 0.0], 1.0, 2.0);
        assert!(k.contains(0, &[1.0, 0.0]).unwrap());
        assert!(k.contains(1, &[1.5, 0.0]).unwrap());
        assert!(!k.contains(0, &[1.5, 0.0]).unwrap());
        assert!(matches!(
            k.contains(0, &[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn boundary_margin_examples() {
        let k = ball(vec![0.0, 0.0], 1.0, 2.0);
        assert_eq!(k.boundary_margin(1, &[0.5, 0.0]).unwrap(), 1.5);
        assert_eq!(k.boundary_margin(0, &[0.6, 0.8]).unwrap(), 0.0);
        let k = ball(vec![0.0, 0.0], 3.0, 2.0);
        assert_eq!(k.check_root_margin(&[1.0, 0.0], 2.0).unwrap(), 2.0);
        assert!(k.check_root_margin(&[1.0, 0.0], 2.5).is_err());
    }

    #[test]
    fn truncation_rejects_degenerate_sequences() {
        assert!(TruncationSequence::new(vec![0.0].into(), 1.0, 1.0).is_err());
        assert!(TruncationSequence::new(vec![0.0].into(), 0.0, 2.0).is_err());
        assert!(TruncationSequence::new(vec![0.0].into(), -1.0, 2.0).is_err());
    }

    #[test]
    fn reset_target_must_be_in_k0() {
        let k = ball(vec![0.0], 1.0, 2.0);
        assert!(ResetPolicy::ToFixedPoint(vec![0.5].into())
            .validate(&k)
            .is_ok());
        assert!(ResetPolicy::ToFixedPoint(vec![1.5].into())
            .validate(&k)
            .is_err());
        let x0: Vector = vec![0.3].into();
        assert_eq!(ResetPolicy::ToInitial.target(&x0), &x0);
    }

    #[test]
    fn reset_policy_serialization() {
        let json = serde_json::to_string(&ResetPolicy::ToFixedPoint(vec![1.0].into())).unwrap();
        assert_eq!(json, r#"{"kind":"to_fixed_point","target":[1.0]}"#);
        let back: ResetPolicy = serde_json::from_str(r#"{"kind":"to_initial"}"#).unwrap();
        assert_eq!(back, ResetPolicy::ToInitial);
    }

    #[test]
    fn rng_streams_reproduce_and_differ() {
        let draw = |seed, id| {
            let mut r = RngStream::new(seed, id);
            (0..8).map(|_| r.standard_normal()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
    }

    #[test]
    fn open_unit_stays_inside() {
        let mut r = RngStream::new(1, 1);
        for _ in 0..10_000 {
            let u = r.open_unit();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    proptest::proptest! {
        #[test]
        fn contains_is_monotone_in_j(x in -50.0f64..50.0, y in -50.0f64..50.0, j in 0u32..6) {
            let k = ball(vec![0.5, -0.5], 1.3, 1.7);
            if k.contains(j, &[x, y]).unwrap() {
                proptest::prop_assert!(k.contains(j + 1, &[x, y]).unwrap());
            }
        }
    }
}

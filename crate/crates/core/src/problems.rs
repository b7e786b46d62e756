//! Built-in benchmark problems with known `(x*, A, Sigma)`.
//!
//! - [`linear_gaussian`]: `u(x) = A(x - x*)`, constant Gaussian noise.
//! - [`cubic`]: `u(x) = A(x - x*) + |x - x*|^2 (x - x*)`, fast enough growth
//!   to break the untruncated recursion from far starts.
//! - [`expectation_form`]: `u(x) = E[U(x, Z)]` with a state-dependent noise
//!   factor, so only the covariance at the root is `I`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky, Matrix, SymMatrix, Vector};
use crate::model::{FieldModel, Problem, RngStream};

#[derive(Debug)]
struct Affine {
    a: Matrix,
    root: Vector,
}

impl Affine {
    // out <- A(x - x*); returns h = x - x*
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Vec<f64> {
        let h: Vec<f64> = x.iter().zip(self.root.iter()).map(|(a, b)| a - b).collect();
        self.a.mul_vec_into(&h, out);
        h
    }
}

fn add_correlated_noise(chol: &Matrix, rng: &mut RngStream, out: &mut [f64]) {
    let d = out.len();
    // stack buffer for the common small case
    let mut buf = [0.0f64; 16];
    let mut heap;
    let z: &mut [f64] = if d <= buf.len() {
        &mut buf[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    rng.fill_standard_normal(z);
    for (i, o) in out.iter_mut().enumerate() {
        // lower triangular
        *o += linalg::dot(&chol.row(i)[..=i], &z[..=i]);
    }
}

#[derive(Debug)]
struct LinearGaussian {
    field: Affine,
    chol: Matrix,
}

impl FieldModel for LinearGaussian {
    fn mean_field(&self, x: &[f64], out: &mut [f64]) {
        self.field.apply(x, out);
    }

    fn observe(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        self.field.apply(x, out);
        add_correlated_noise(&self.chol, rng, out);
    }
}

#[derive(Debug)]
struct Cubic {
    field: Affine,
    chol: Matrix,
}

impl Cubic {
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let h = self.field.apply(x, out);
        let r2 = linalg::dot(&h, &h);
        for (o, hi) in out.iter_mut().zip(&h) {
            *o += r2 * hi;
        }
    }
}

impl FieldModel for Cubic {
    fn mean_field(&self, x: &[f64], out: &mut [f64]) {
        self.drift(x, out);
    }

    fn observe(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        self.drift(x, out);
        add_correlated_noise(&self.chol, rng, out);
    }
}

/// State-dependent noise factor of [`expectation_form`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// `S(x) = (1 + min(|x - x*|, 1)) I`.
    #[default]
    ClampedDistance,
}

impl NoiseScale {
    pub fn factor(&self, distance: f64) -> f64 {
        match self {
            NoiseScale::ClampedDistance => 1.0 + distance.min(1.0),
        }
    }
}

#[derive(Debug)]
struct ExpectationForm {
    cubic: Cubic,
    scale: NoiseScale,
}

impl FieldModel for ExpectationForm {
    fn mean_field(&self, x: &[f64], out: &mut [f64]) {
        self.cubic.drift(x, out);
    }

    // U(x, z) = u(x) + S(x) z
    fn observe(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        self.cubic.drift(x, out);
        let s = self.scale.factor(self.cubic.field.root.distance(x));
        for o in out.iter_mut() {
            *o += s * rng.standard_normal();
        }
    }
}

fn check_inputs(a: &SymMatrix, sigma: &SymMatrix, root: &Vector) -> Result<Matrix> {
    let d = root.dim();
    root.check_dim(a.dim())?;
    root.check_dim(sigma.dim())?;
    if d == 0 {
        return Err(Error::invalid("root", "dimension must be at least 1"));
    }
    cholesky(sigma)
}

/// `u(x) = A(x - x*)`, observation `u(x) + L z` with `L Lᵀ = Sigma`.
pub fn linear_gaussian(a: &SymMatrix, sigma: &SymMatrix, root: &Vector) -> Result<Problem> {
    let chol = check_inputs(a, sigma, root)?;
    let model = LinearGaussian {
        field: Affine {
            a: a.matrix().clone(),
            root: root.clone(),
        },
        chol,
    };
    Problem::new(
        "linear_gaussian",
        root.clone(),
        a.clone(),
        sigma.clone(),
        Arc::new(model),
    )
}

/// `u(x) = A(x - x*) + |x - x*|^2 (x - x*)` with Gaussian noise of covariance `Sigma`.
pub fn cubic(a: &SymMatrix, sigma: &SymMatrix, root: &Vector) -> Result<Problem> {
    let chol = check_inputs(a, sigma, root)?;
    let model = Cubic {
        field: Affine {
            a: a.matrix().clone(),
            root: root.clone(),
        },
        chol,
    };
    Problem::new(
        "cubic",
        root.clone(),
        a.clone(),
        sigma.clone(),
        Arc::new(model),
    )
}

/// `U(x, z) = A(x - x*) + |x - x*|^2 (x - x*) + S(x) z`, so the conditional noise
/// covariance is `S(x)^2 I` and equals `I` at the root.
pub fn expectation_form(a: &SymMatrix, scale: NoiseScale, root: &Vector) -> Result<Problem> {
    let d = root.dim();
    let identity = SymMatrix::identity(d);
    let chol = check_inputs(a, &identity, root)?;
    let model = ExpectationForm {
        cubic: Cubic {
            field: Affine {
                a: a.matrix().clone(),
                root: root.clone(),
            },
            chol,
        },
        scale,
    };
    Problem::new(
        "expectation_form",
        root.clone(),
        a.clone(),
        identity,
        Arc::new(model),
    )
}

/// Conditional covariance `S(x)^2 I` of the [`expectation_form`] noise at `x`.
pub fn expectation_form_covariance(scale: NoiseScale, root: &Vector, x: &[f64]) -> SymMatrix {
    let s = scale.factor(root.distance(x));
    SymMatrix::identity(root.dim()).scale(s * s)
}

/// A parameter of a [`ProblemSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Flag(bool),
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
    Name(String),
}

/// Named problem plus parameters, as read from a run configuration.
///
/// Recognized parameters: `a` and `sigma` (row-major matrices), `root`
/// (defaults to the origin), `noise_scale` (`"clamped_distance"`),
/// `noiseless` (switches the measurement noise off) and an optional `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, Param>,
}

impl ProblemSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ProblemSpec {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: Param) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn matrix(&self, key: &'static str) -> Result<SymMatrix> {
        match self.params.get(key) {
            Some(Param::Matrix(rows)) => SymMatrix::from_rows(rows),
            Some(Param::Scalar(v)) => Ok(SymMatrix::diagonal(&[*v])),
            Some(_) => Err(Error::invalid(key, "expected a row-major matrix")),
            None => Err(Error::invalid(key, "missing")),
        }
    }

    fn root(&self, d: usize) -> Result<Vector> {
        match self.params.get("root") {
            Some(Param::Vector(v)) => Vector::new(v.clone()),
            Some(Param::Scalar(v)) => Vector::new(vec![*v]),
            Some(_) => Err(Error::invalid("root", "expected a vector")),
            None => Ok(Vector::zeros(d)),
        }
    }

    fn noiseless(&self) -> Result<bool> {
        match self.params.get("noiseless") {
            None => Ok(false),
            Some(Param::Flag(b)) => Ok(*b),
            Some(_) => Err(Error::invalid("noiseless", "expected true or false")),
        }
    }

    fn noise_scale(&self) -> Result<NoiseScale> {
        match self.params.get("noise_scale") {
            None => Ok(NoiseScale::default()),
            Some(Param::Name(n)) if n == "clamped_distance" => Ok(NoiseScale::ClampedDistance),
            Some(other) => Err(Error::invalid(
                "noise_scale",
                format!("unknown noise scale {other:?}; expected \"clamped_distance\""),
            )),
        }
    }

    /// Instantiates the problem, validating every invariant.
    pub fn build(&self) -> Result<Problem> {
        let a = self.matrix("a")?;
        let d = a.dim();
        if let Some(p) = self.params.get("d") {
            match p {
                Param::Scalar(v) if *v == d as f64 => {}
                _ => {
                    return Err(Error::invalid(
                        "d",
                        format!("does not match the dimension {d} of `a`"),
                    ))
                }
            }
        }
        let root = self.root(d)?;
        let problem = match self.name.as_str() {
            "linear_gaussian" => linear_gaussian(&a, &self.matrix("sigma")?, &root)?,
            "cubic" => cubic(&a, &self.matrix("sigma")?, &root)?,
            "expectation_form" => expectation_form(&a, self.noise_scale()?, &root)?,
            other => return Err(Error::UnknownProblem(other.to_string())),
        };
        Ok(if self.noiseless()? {
            problem.noiseless()
        } else {
            problem
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> SymMatrix {
        SymMatrix::identity(1)
    }

    #[test]
    fn linear_examples() {
        let p = linear_gaussian(&one(), &one(), &Vector::zeros(1)).unwrap();
        assert_eq!(p.mean_field(&[0.0])[0], 0.0);
        assert_eq!(p.mean_field(&[2.0])[0] - p.mean_field(&[1.0])[0], 1.0);
    }

    #[test]
    fn cubic_examples() {
        let p = cubic(&one(), &one(), &Vector::zeros(1)).unwrap();
        assert_eq!(p.mean_field(&[10.0])[0], 1010.0);
        // remainder |h|^2 h exactly
        for h in [0.3, -1e-2, 1e-4] {
            let remainder = p.mean_field(&[h])[0] - h;
            assert!((remainder - h * h * h).abs() <= 1e-15 * h.abs());
        }
    }

    #[test]
    fn expectation_form_covariance_examples() {
        let root: Vector = vec![0.0, 0.0].into();
        let s = NoiseScale::ClampedDistance;
        assert_eq!(
            expectation_form_covariance(s, &root, &[0.0, 0.0]),
            SymMatrix::identity(2)
        );
        assert_eq!(
            expectation_form_covariance(s, &root, &[0.6, 0.8]),
            SymMatrix::identity(2).scale(4.0)
        );
        assert_eq!(
            expectation_form_covariance(s, &root, &[30.0, 0.0]),
            SymMatrix::identity(2).scale(4.0)
        );
    }

    #[test]
    fn constructors_reject_bad_inputs() {
        let not_pd = SymMatrix::diagonal(&[1.0, -1.0]);
        let root = Vector::zeros(2);
        assert!(linear_gaussian(&not_pd, &SymMatrix::identity(2), &root).is_err());
        assert!(linear_gaussian(&SymMatrix::identity(2), &not_pd, &root).is_err());
        assert!(cubic(&SymMatrix::identity(2), &SymMatrix::identity(3), &root).is_err());
        assert!(expectation_form(&not_pd, NoiseScale::ClampedDistance, &root).is_err());
    }

    #[test]
    fn spec_builds_each_problem() {
        let spec = ProblemSpec::new("cubic")
            .with("a", Param::Matrix(vec![vec![1.0]]))
            .with("sigma", Param::Matrix(vec![vec![1.0]]))
            .with("root", Param::Vector(vec![0.0]));
        assert_eq!(spec.build().unwrap().id(), "cubic");

        let spec = ProblemSpec::new("expectation_form")
            .with("a", Param::Matrix(vec![vec![1.0, 0.3], vec![0.3, 2.0]]))
            .with("noise_scale", Param::Name("clamped_distance".into()));
        let p = spec.build().unwrap();
        assert_eq!(p.noise_cov(), &SymMatrix::identity(2));

        let spec = ProblemSpec::new("linear_gaussian")
            .with("a", Param::Scalar(1.0))
            .with("sigma", Param::Scalar(1.0))
            .with("noiseless", Param::Flag(true));
        let p = spec.build().unwrap();
        let mut rng = RngStream::new(0, 0);
        assert_eq!(p.observe(&[0.5], &mut rng)[0], 0.5);

        assert!(matches!(
            ProblemSpec::new("quartic")
                .with("a", Param::Scalar(1.0))
                .build(),
            Err(Error::UnknownProblem(_))
        ));
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"name":"linear_gaussian","params":{"a":[[1.0,0.3],[0.3,2.0]],"noiseless":false,"root":[0.0,0.0],"sigma":[[1.0,0.2],[0.2,1.0]]}}"#;
        let spec: ProblemSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.params["root"], Param::Vector(vec![0.0, 0.0]));
        assert_eq!(serde_json::to_string(&spec).unwrap(), json);
    }
}

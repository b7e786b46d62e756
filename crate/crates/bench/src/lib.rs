//! Fixtures shared by the criterion benchmarks in `benches/`.

use truncsa::problems::linear_gaussian;
use truncsa::{
    Algorithm, GainSchedule, Matrix, Problem, ResetPolicy, RngStream, SymMatrix,
    TruncationSequence, Vector,
};

/// Seeded SPD matrix with spectrum bounded below by `floor`.
pub fn spd(d: usize, floor: f64, seed: u64) -> SymMatrix {
    let mut rng = RngStream::new(seed, d as u64);
    let mut m = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = rng.standard_normal();
        }
    }
    let gram = m.matmul(&m.transpose()).scale(1.0 / d as f64);
    SymMatrix::symmetrize(gram.add(&Matrix::identity(d).scale(floor)))
}

/// The two-dimensional linear benchmark with `alpha = 0.7`.
pub fn linear_setup() -> (Problem, Algorithm, Vector) {
    let a = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
    let sigma = SymMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 1.0]]).unwrap();
    let problem = linear_gaussian(&a, &sigma, &Vector::zeros(2)).unwrap();
    let algorithm = Algorithm {
        schedule: GainSchedule::new(1.0, 0.7).unwrap(),
        truncation: TruncationSequence::new(Vector::zeros(2), 3.0, 2.0).unwrap(),
        reset: ResetPolicy::ToInitial,
    };
    (problem, algorithm, vec![0.5, 0.5].into())
}

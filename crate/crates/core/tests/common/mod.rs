#![allow(dead_code)]

use truncsa::{Matrix, RngStream, SymMatrix};

/// Random symmetric positive definite matrix with eigenvalues bounded below by `floor`.
pub fn random_spd(d: usize, floor: f64, rng: &mut RngStream) -> SymMatrix {
    let mut m = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = rng.standard_normal();
        }
    }
    let gram = m.matmul(&m.transpose()).scale(1.0 / d as f64);
    SymMatrix::symmetrize(gram.add(&Matrix::identity(d).scale(floor)))
}

pub fn random_symmetric(d: usize, rng: &mut RngStream) -> SymMatrix {
    let mut m = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = rng.standard_normal();
        }
    }
    SymMatrix::symmetrize(m.add(&m.transpose()).scale(0.5))
}

pub fn is_psd(m: &SymMatrix, rel_tol: f64) -> bool {
    let e = truncsa::asymptotics::eigh(m).unwrap();
    let scale = m.trace().abs().max(m.max_abs());
    e.min_eigenvalue() >= -rel_tol * scale
}

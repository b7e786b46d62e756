mod common;

use common::{is_psd, random_spd, random_symmetric};
use truncsa::asymptotics::{
    asymptotic_covariance, covariance_quadrature_auto, eigh, lyapunov_residual, lyapunov_solve,
    relative_frobenius_error,
};
use truncsa::{GainSchedule, Matrix, RngStream, SymMatrix};

#[test]
fn lyapunov_residual_on_random_inputs() {
    let mut rng = RngStream::new(11, 0);
    for d in 1..=16 {
        for _ in 0..3 {
            let b = random_spd(d, 0.05, &mut rng);
            let c = random_symmetric(d, &mut rng);
            let v = lyapunov_solve(&b, &c).unwrap();
            let r = lyapunov_residual(&b, &v, &c);
            assert!(r <= 1e-10, "d={d}: residual {r}");
        }
    }
}

#[test]
fn eigh_reconstruction_and_orthogonality() {
    let mut rng = RngStream::new(12, 0);
    for d in [1, 2, 5, 16, 40, 64] {
        let m = random_symmetric(d, &mut rng);
        let e = eigh(&m).unwrap();
        let back = e.reconstruct();
        assert!(
            relative_frobenius_error(back.matrix(), m.matrix()) <= 1e-10,
            "d={d}"
        );
        let u = &e.eigenvectors;
        let orth = u
            .transpose()
            .matmul(u)
            .sub(&Matrix::identity(d))
            .frobenius_norm();
        assert!(orth <= 1e-10, "d={d}: {orth}");
    }
}

#[test]
fn closed_form_matches_quadrature_in_both_regimes() {
    let mut rng = RngStream::new(13, 0);
    for k in 0..6 {
        let d = 1 + k % 4;
        let a = random_spd(d, 0.6, &mut rng);
        let sigma = random_spd(d, 0.1, &mut rng);
        for sched in [
            GainSchedule::new(1.0, 0.75).unwrap(),
            GainSchedule::new(1.3, 1.0).unwrap(),
        ] {
            let closed = asymptotic_covariance(&a, &sigma, &sched).unwrap();
            let quad = covariance_quadrature_auto(&a, &sigma, &sched).unwrap();
            let err = relative_frobenius_error(quad.matrix(), closed.v.matrix());
            assert!(err <= 1e-8, "d={d} alpha={}: {err}", sched.alpha());
        }
    }
}

#[test]
fn covariance_is_positive_semidefinite() {
    let mut rng = RngStream::new(14, 0);
    for d in 1..=8 {
        let a = random_spd(d, 0.3, &mut rng);
        let sigma = random_spd(d, 0.01, &mut rng);
        let r = asymptotic_covariance(&a, &sigma, &GainSchedule::new(1.0, 0.6).unwrap()).unwrap();
        assert!(is_psd(&r.v, 1e-12));
        assert!(r.lyapunov_residual <= 1e-10);
    }
}

#[test]
fn commuting_case_closed_forms() {
    let mut rng = RngStream::new(15, 0);
    for d in 1..=5 {
        let sigma = random_spd(d, 0.2, &mut rng);
        let a_scalar = 1.7;
        let a = SymMatrix::identity(d).scale(a_scalar);

        let r = asymptotic_covariance(&a, &sigma, &GainSchedule::new(1.0, 0.8).unwrap()).unwrap();
        let expected = sigma.scale(1.0 / (2.0 * a_scalar));
        assert!(r.v.sub(&expected).max_abs() <= 1e-12);

        let gamma = 0.9;
        let r = asymptotic_covariance(&a, &sigma, &GainSchedule::new(gamma, 1.0).unwrap()).unwrap();
        let expected = sigma.scale(gamma / (2.0 * gamma * a_scalar - 1.0));
        assert!(r.v.sub(&expected).max_abs() <= 1e-12);
    }
}

#[test]
fn covariance_is_monotone_in_noise() {
    let mut rng = RngStream::new(16, 0);
    for d in 2..=6 {
        let a = random_spd(d, 0.4, &mut rng);
        let s1 = random_spd(d, 0.1, &mut rng);
        let extra = random_spd(d, 0.0, &mut rng);
        let s2 = s1.add(&extra);
        for sched in [
            GainSchedule::new(1.0, 0.7).unwrap(),
            GainSchedule::new(2.0, 1.0).unwrap(),
        ] {
            let v1 = asymptotic_covariance(&a, &s1, &sched).unwrap().v;
            let v2 = asymptotic_covariance(&a, &s2, &sched).unwrap().v;
            assert!(is_psd(&v2.sub(&v1), 1e-12));
        }
    }
}

#[test]
fn covariance_is_linear_in_noise() {
    let mut rng = RngStream::new(17, 0);
    let a = random_spd(4, 0.5, &mut rng);
    let s1 = random_spd(4, 0.1, &mut rng);
    let s2 = random_spd(4, 0.1, &mut rng);
    let sched = GainSchedule::new(1.0, 0.9).unwrap();
    let v = |s: &SymMatrix| asymptotic_covariance(&a, s, &sched).unwrap().v;
    let lhs = v(&s1.scale(2.0).add(&s2));
    let rhs = v(&s1).scale(2.0).add(&v(&s2));
    assert!(relative_frobenius_error(lhs.matrix(), rhs.matrix()) < 1e-12);
}

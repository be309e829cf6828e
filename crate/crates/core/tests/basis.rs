use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sbf_ilc::basis::{fir_basis, identity_basis, physical_basis, BasisKind, BasisMatrix};
use sbf_ilc::trajectory::{fourth_order_reference, MotionProfile, ReferenceSignal};
use sbf_ilc::Error;

fn slow() -> ReferenceSignal {
    let p = MotionProfile {
        displacement: 0.02,
        max_velocity: 1.0,
        max_acceleration: 80.0,
        max_jerk: 1e5,
        max_snap: 1e8,
        sample_time: 1e-3,
    };
    fourth_order_reference(&p, 500).unwrap()
}

fn pulse(n: usize, at: usize) -> DVector<f64> {
    DVector::from_fn(n, |k, _| if k == at { 1.0 } else { 0.0 })
}

#[test]
fn physical_basis_of_constant_and_ramp() {
    let c = ReferenceSignal::from_position(DVector::from_element(10, 0.3), 1e-3).unwrap();
    let psi = physical_basis(&c).unwrap();
    assert_eq!(psi.n_params(), 3);
    assert_eq!(psi.kind(), BasisKind::Physical);
    assert!(psi.matrix().iter().all(|&x| x == 0.0));

    let mut ramp = ReferenceSignal::zeros(10, 1e-3);
    ramp.v.fill(0.5);
    let psi = physical_basis(&ramp).unwrap();
    assert!(psi.matrix().column(0).iter().all(|&x| x == 0.5));
    assert!(psi.matrix().columns(1, 2).iter().all(|&x| x == 0.0));
}

#[test]
fn physical_basis_columns_are_v_a_s() {
    let r = slow();
    let psi = physical_basis(&r).unwrap();
    assert_eq!(psi.matrix().column(0), r.v);
    assert_eq!(psi.matrix().column(1), r.a);
    assert_eq!(psi.matrix().column(2), r.s);
    assert!(psi.matrix().column_iter().all(|c| c.norm() > 0.0));
}

#[test]
fn fir_basis_without_preview_is_lower_triangular() {
    let r = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
    let psi = fir_basis(&r, 3, 0).unwrap();
    let want = DMatrix::from_row_slice(4, 3, &[1., 0., 0., 2., 1., 0., 3., 2., 1., 4., 3., 2.]);
    assert_eq!(psi.matrix(), &want);
    assert_eq!(psi.kind(), BasisKind::Fir);
}

#[test]
fn fir_basis_of_a_pulse_is_shifted_pulses() {
    let psi = fir_basis(&pulse(10, 5), 3, 1).unwrap();
    for (i, at) in [4, 5, 6].into_iter().enumerate() {
        assert_eq!(psi.matrix().column(i), pulse(10, at));
    }
    assert_eq!(psi.preview(), 1);
}

#[test]
fn zero_shift_tap_reproduces_the_reference() {
    let r = slow().r;
    let psi = fir_basis(&r, 8, 3).unwrap();
    let mut theta = DVector::zeros(8);
    theta[3] = 1.0;
    assert_eq!(psi.feedforward(&theta).unwrap(), r);
}

#[test]
fn fir_parameter_errors() {
    let r = DVector::from_element(10, 1.0);
    assert!(matches!(fir_basis(&r, 3, 3), Err(Error::Parameter(_))));
    assert!(matches!(fir_basis(&r, 11, 0), Err(Error::Parameter(_))));
    assert!(fir_basis(&r, 0, 0).is_err());
}

#[test]
fn identity_basis_examples() {
    let psi = identity_basis(3).unwrap();
    assert_eq!(psi.matrix(), &DMatrix::identity(3, 3));
    assert_eq!(psi.kind(), BasisKind::Identity);
    let theta = DVector::from_vec(vec![0.5, -1.0, 2.0]);
    assert_eq!(psi.feedforward(&theta).unwrap(), theta);
    assert_eq!(
        fir_basis(&pulse(6, 0), 6, 0).unwrap().matrix(),
        identity_basis(6).unwrap().matrix()
    );
    assert!(identity_basis(0).is_err());
}

#[test]
fn custom_basis_keeps_the_matrix() {
    let m = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64);
    let psi = BasisMatrix::custom(m.clone()).unwrap();
    assert_eq!(psi.kind(), BasisKind::Custom);
    assert_eq!(psi.matrix(), &m);
    assert!(psi.feedforward(&DVector::zeros(3)).is_err());
}

/// Relative least-squares residual of projecting `b` onto the columns of `a`.
fn projection_residual(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let x = a.clone().svd(true, true).solve(b, 1e-12).unwrap();
    (b - a * x).norm() / b.norm()
}

/// Out and back: the slow move followed by its negative, at rest at both trial ends.
fn round_trip() -> ReferenceSignal {
    let one = slow();
    let n = one.len();
    let lag = n / 2;
    let back = |x: &DVector<f64>| {
        DVector::from_fn(n, |k, _| x[k] - if k >= lag { x[k - lag] } else { 0.0 })
    };
    ReferenceSignal {
        r: back(&one.r),
        v: back(&one.v),
        a: back(&one.a),
        jk: back(&one.jk),
        s: back(&one.s),
        sample_time: one.sample_time,
    }
}

#[test]
fn physical_columns_lie_in_a_wide_fir_span() {
    let r = round_trip();
    assert!(r.r[r.len() - 1].abs() < 1e-15);
    let fir = fir_basis(&r.r, 12, 6).unwrap();
    let phys = physical_basis(&r).unwrap();
    for (name, col) in ["v", "a", "s"].iter().zip(phys.matrix().column_iter()) {
        let res = projection_residual(fir.matrix(), &col.into_owned());
        assert!(res < 1e-2, "{name} residual {res}");
    }
}

proptest! {
    #[test]
    fn fir_basis_is_toeplitz_in_the_reference(
        r in prop::collection::vec(-1.0..1.0f64, 5..40),
        n_theta in 1usize..5,
        n_p in 0usize..4,
    ) {
        prop_assume!(n_p < n_theta);
        let n = r.len();
        let psi = fir_basis(&DVector::from_vec(r.clone()), n_theta, n_p).unwrap();
        let m = psi.matrix();
        for k in 0..n - 1 {
            for i in 0..n_theta - 1 {
                prop_assert_eq!(m[(k, i)], m[(k + 1, i + 1)]);
            }
        }
        for k in 0..n {
            for i in 0..n_theta {
                let src = k as isize - i as isize + n_p as isize;
                let want = if (0..n as isize).contains(&src) { r[src as usize] } else { 0.0 };
                prop_assert_eq!(m[(k, i)], want);
            }
        }
    }

    #[test]
    fn fir_basis_is_linear_in_the_reference(
        r1 in prop::collection::vec(-1.0..1.0f64, 20),
        r2 in prop::collection::vec(-1.0..1.0f64, 20),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
    ) {
        let r1 = DVector::from_vec(r1);
        let r2 = DVector::from_vec(r2);
        let lhs = fir_basis(&(&r1 * a + &r2 * b), 6, 2).unwrap();
        let rhs = fir_basis(&r1, 6, 2).unwrap().matrix() * a + fir_basis(&r2, 6, 2).unwrap().matrix() * b;
        prop_assert!((lhs.matrix() - rhs).amax() <= 1e-14);
    }
}

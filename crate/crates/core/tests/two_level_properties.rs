//! Property tests of the adiabatic frame and the spin-sphere kernel.

use proptest::prelude::*;
use redmash::mash_core::{estimator_kernel, initial_dressing};
use redmash::two_level::{
    adiabatize, sample_sphere, spin_from_amplitudes, DiabaticOperator,
    PauliExpansion, PotentialPoint, SphereRegion,
};
use redmash::two_level::expand_diabatic_operator;

fn point_1d(v0: f64, bias: f64, coup: f64, db: f64, dc: f64) -> PotentialPoint {
    PotentialPoint {
        v0,
        v_bias: bias,
        v_coup: coup,
        grad_v0: vec![0.0],
        grad_v_bias: vec![db],
        grad_v_coup: vec![dc],
    }
}

proptest! {
    /// theta and gap reconstruct the diabatic fields:
    /// v_bias = (gap/2) cos(2 theta), v_coup = (gap/2) sin(2 theta).
    #[test]
    fn gap_and_angle_rebuild_the_potentials(
        bias in -10.0_f64..10.0,
        coup in -10.0_f64..10.0,
    ) {
        prop_assume!(bias.hypot(coup) > 1e-6);
        let frame = adiabatize(&point_1d(0.0, bias, coup, 0.0, 0.0), None).unwrap();
        let r = 0.5 * frame.gap;
        prop_assert!((r * frame.cos_2theta() - bias).abs() < 1e-12 * r.max(1.0));
        prop_assert!((r * frame.sin_2theta() - coup).abs() < 1e-12 * r.max(1.0));
    }

    /// The eigenvalues implied by (vbar, gap) solve the characteristic
    /// equation of the diabatic matrix, and the upper eigenvector
    /// (cos theta, sin theta) satisfies V phi = E1 phi.
    #[test]
    fn frame_diagonalizes_the_diabatic_matrix(
        v0 in -5.0_f64..5.0,
        bias in -10.0_f64..10.0,
        coup in -10.0_f64..10.0,
    ) {
        prop_assume!(bias.hypot(coup) > 1e-6);
        let frame = adiabatize(&point_1d(v0, bias, coup, 0.0, 0.0), None).unwrap();
        let e1 = frame.surface(1.0);
        let scale = bias.abs().max(coup.abs()).max(v0.abs()).max(1.0);
        let (c, s) = (frame.theta.cos(), frame.theta.sin());
        // Rows of (V - E1) applied to the upper eigenvector.
        prop_assert!(((v0 + bias - e1) * c + coup * s).abs() < 1e-12 * scale);
        prop_assert!((coup * c + (v0 - bias - e1) * s).abs() < 1e-12 * scale);
    }

    /// The analytic coupling equals <Phi_1 | d/dq Phi_0> from
    /// finite-difference eigenvectors, and is antisymmetric under
    /// exchanging the two surfaces.
    #[test]
    fn nac_matches_finite_difference_eigenvectors(
        bias in -3.0_f64..3.0,
        coup in -3.0_f64..3.0,
        db in -2.0_f64..2.0,
        dc in -2.0_f64..2.0,
    ) {
        prop_assume!(bias.hypot(coup) > 1e-2);
        let at = |q: f64| point_1d(0.0, bias + db * q, coup + dc * q, db, dc);
        let frame0 = adiabatize(&at(0.0), None).unwrap();
        let h = 1e-6;
        // Eigenvectors threaded through the same branch continuation.
        let plus = adiabatize(&at(h), Some(frame0.theta)).unwrap();
        let minus = adiabatize(&at(-h), Some(frame0.theta)).unwrap();
        let upper = |t: f64| (t.cos(), t.sin());
        let lower = |t: f64| (t.sin(), -t.cos());
        let (u1, u2) = upper(frame0.theta);
        let (lp1, lp2) = lower(plus.theta);
        let (lm1, lm2) = lower(minus.theta);
        let fd_nac = (u1 * (lp1 - lm1) + u2 * (lp2 - lm2)) / (2.0 * h);
        prop_assert!(
            (fd_nac - frame0.nac[0]).abs() < 1e-6 * frame0.nac[0].abs().max(1.0),
            "fd {} vs analytic {}", fd_nac, frame0.nac[0]
        );
        // Antisymmetry: <Phi_0 | d Phi_1> = -<Phi_1 | d Phi_0>.
        let (l1, l2) = lower(frame0.theta);
        let (up1, up2) = upper(plus.theta);
        let (um1, um2) = upper(minus.theta);
        let fd_rev = (l1 * (up1 - um1) + l2 * (up2 - um2)) / (2.0 * h);
        prop_assert!((fd_rev + fd_nac).abs() < 1e-6 * fd_nac.abs().max(1.0));
    }

    /// Spins built from normalised amplitudes land on the unit sphere.
    #[test]
    fn amplitude_spins_are_unit_length(
        re1 in -1.0_f64..1.0,
        im1 in -1.0_f64..1.0,
        re0 in -1.0_f64..1.0,
        im0 in -1.0_f64..1.0,
    ) {
        let norm = (re1 * re1 + im1 * im1 + re0 * re0 + im0 * im0).sqrt();
        prop_assume!(norm > 1e-3);
        let s = spin_from_amplitudes(
            (re1 / norm, im1 / norm),
            (re0 / norm, im0 / norm),
        ).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    /// Operator expansion preserves the trace and the Frobenius norm
    /// (the adiabatic change of basis is unitary up to the y reflection).
    #[test]
    fn expansion_is_an_isometry(
        bias in -3.0_f64..3.0,
        coup in -3.0_f64..3.0,
        ai in -2.0_f64..2.0,
        ax in -2.0_f64..2.0,
        ay in -2.0_f64..2.0,
        az in -2.0_f64..2.0,
    ) {
        prop_assume!(bias.hypot(coup) > 1e-6);
        let frame = adiabatize(&point_1d(0.0, bias, coup, 0.0, 0.0), None).unwrap();
        let op = DiabaticOperator::new(ai, ax, ay, az);
        let e = expand_diabatic_operator(&frame, &op);
        prop_assert!((e.ai - ai).abs() < 1e-13);
        let before = ax * ax + ay * ay + az * az;
        let after = e.ax * e.ax + e.ay * e.ay + e.az * e.az;
        prop_assert!((before - after).abs() < 1e-12 * before.max(1.0));
    }
}

/// Midpoint quadrature over the sphere of the initial-time dressing against
/// the time-t reading at t = 0: C_munu(0) = 2 delta_munu for mu, nu in
/// {I, x, y, z}, on a 100 x 100 grid to 1e-3.
#[test]
fn kernel_completeness_on_the_sphere() {
    let n_z = 100;
    let n_phi = 100;
    let mut c = [[0.0_f64; 4]; 4];
    for i in 0..n_z {
        let z = -1.0 + (i as f64 + 0.5) * 2.0 / n_z as f64;
        let r = (1.0 - z * z).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / n_phi as f64;
            let (x, y) = (r * phi.cos(), r * phi.sin());
            let s = redmash::two_level::SpinVector::new(x, y, z);
            let dressing = initial_dressing(&s).unwrap();
            let reading = estimator_kernel(&s);
            for (mu, d) in dressing.iter().enumerate() {
                for (nu, m) in reading.iter().enumerate() {
                    c[mu][nu] += 2.0 * d * m;
                }
            }
        }
    }
    let norm = (n_z * n_phi) as f64;
    for mu in 0..4 {
        for nu in 0..4 {
            let expect = if mu == nu { 2.0 } else { 0.0 };
            let got = c[mu][nu] / norm;
            assert!(
                (got - expect).abs() < 1e-3,
                "C[{mu}][{nu}] = {got}, expected {expect}"
            );
        }
    }
}

/// Monte-Carlo moments of the sphere samplers: E|S_z| = 1/2 on the full
/// sphere, E[S_i^2] = 1/3, and the population reading
/// E[2 |S_z| sgn(S_z)] = 1 on the upper hemisphere.
#[test]
fn sphere_sampling_moments() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
    let n = 200_000;
    let (mut abs_z, mut x2, mut y2, mut z2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let s = sample_sphere(&mut rng, SphereRegion::Full);
        abs_z += s.z.abs();
        x2 += s.x * s.x;
        y2 += s.y * s.y;
        z2 += s.z * s.z;
    }
    let n = n as f64;
    assert!((abs_z / n - 0.5).abs() < 3e-3);
    assert!((x2 / n - 1.0 / 3.0).abs() < 3e-3);
    assert!((y2 / n - 1.0 / 3.0).abs() < 3e-3);
    assert!((z2 / n - 1.0 / 3.0).abs() < 3e-3);

    let n = 200_000;
    let mut pop = 0.0;
    for _ in 0..n {
        let s = sample_sphere(&mut rng, SphereRegion::Upper);
        // Population reading of an upper-hemisphere preparation: the
        // dressing 2 sgn(S_z) against the kernel |S_z| averages to 1.
        pop += initial_dressing(&s).unwrap()[3] * estimator_kernel(&s)[0];
    }
    assert!((pop / n as f64 - 1.0).abs() < 3e-3);
}

/// The adiabatic expansion of a transition dipole: |<Phi_0|mu|Phi_1>| is
/// mu_ab |cos 2 theta| and the population difference reads 2 mu_ab sin 2
/// theta / 2; at theta = pi/8 both components have equal weight.
#[test]
fn dipole_rotation_reference_point() {
    let b = std::f64::consts::FRAC_1_SQRT_2;
    let frame = adiabatize(&point_1d(0.0, b, b, 0.0, 0.0), None).unwrap();
    let mu_ab = 0.8;
    let e: PauliExpansion =
        expand_diabatic_operator(&frame, &DiabaticOperator::off_diagonal(mu_ab));
    // theta = pi/8: cos(2 theta) = sin(2 theta) = 1/sqrt(2).
    assert!((e.ax.abs() - mu_ab * b).abs() < 1e-14);
    assert!((e.az - mu_ab * b).abs() < 1e-14);
    assert_eq!(e.ai, 0.0);
    assert_eq!(e.ay, 0.0);
}

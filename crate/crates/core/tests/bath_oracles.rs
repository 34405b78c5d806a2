//! Cross-validates the Debye-bath spectral functions against an independent
//! closed form.
//!
//! The Debye correlation function has the exact pole expansion
//!
//! ```text
//!     C(t) = (lambda omega_c / 4) [cot(beta omega_c / 2) - i] e^{-omega_c t}
//!          + (lambda omega_c / beta) sum_k nu_k e^{-nu_k t} / (nu_k^2 - omega_c^2)
//! ```
//!
//! with Matsubara frequencies nu_k = 2 pi k / beta, so its half-Fourier
//! transform is a sum of simple complex fractions,
//!
//! ```text
//!     Gamma(w) = (lambda omega_c / 4) [cot(beta omega_c / 2) - i] / (omega_c - i w)
//!              + (lambda omega_c / beta) sum_k nu_k / ((nu_k^2 - omega_c^2)(nu_k - i w)).
//! ```
//!
//! This never touches the production code paths (Bose function, principal
//! value quadrature), so agreement validates both sides. The slowly
//! convergent Matsubara tail is summed to k = 4e5 and finished with the
//! analytic midpoint integral of the remainder.

use num_complex::Complex64;
use redmash::bath::DebyeBath;

struct MatsubaraGamma {
    lambda: f64,
    omega_c: f64,
    beta: f64,
}

impl MatsubaraGamma {
    fn eval(&self, omega: f64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let oc = self.omega_c;
        let x = 0.5 * self.beta * oc;
        let pole = 0.25 * self.lambda * oc * Complex64::new(x.cos() / x.sin(), -1.0)
            / Complex64::new(oc, -omega);

        let nu = |k: f64| 2.0 * std::f64::consts::PI * k / self.beta;
        let term = |k: f64| {
            let v = nu(k);
            v / (Complex64::new(v, -omega) * (v * v - oc * oc))
        };
        let k_max = 400_000;
        let mut sum = Complex64::new(0.0, 0.0);
        for k in (1..=k_max).rev() {
            sum += term(k as f64);
        }
        // Midpoint Euler-Maclaurin tail: integral of the continuous term
        // from k_max + 1/2 to infinity, by partial fractions in nu.
        let n = nu(k_max as f64 + 0.5);
        let a = 1.0 / (2.0 * Complex64::new(oc, -omega));
        let b = -1.0 / (2.0 * Complex64::new(oc, omega));
        let d = -i * omega / (omega * omega + oc * oc);
        let tail = -(a * Complex64::new(n - oc, 0.0).ln()
            + b * Complex64::new(n + oc, 0.0).ln()
            + d * Complex64::new(n, -omega).ln())
            * (self.beta / (2.0 * std::f64::consts::PI));

        pole + self.lambda * oc / self.beta * (sum + tail)
    }
}

#[test]
fn quadrature_agrees_with_matsubara_expansion() {
    let bath = DebyeBath {
        lambda: 0.5,
        omega_c: 10.0,
        beta: 0.25,
    };
    let oracle = MatsubaraGamma {
        lambda: bath.lambda,
        omega_c: bath.omega_c,
        beta: bath.beta,
    };
    let omega_s = 2.0 * std::f64::consts::SQRT_2;
    for &w in &[0.0, 0.5, -0.5, 2.0, -2.0, omega_s, -omega_s, 7.0, -12.5, 30.0] {
        let exact = oracle.eval(w);
        let re = bath.gamma_real(w);
        assert!(
            (re - exact.re).abs() < 1e-9 * exact.re.abs().max(1e-9),
            "Re Gamma({w}): {re} vs {}",
            exact.re
        );
        let im = bath.gamma_imag(w).unwrap();
        assert!(
            (im - exact.im).abs() < 5e-6 * exact.im.abs().max(0.01),
            "Im Gamma({w}): {im} vs {}",
            exact.im
        );
    }
}

#[test]
fn matsubara_reproduces_the_exact_zero_frequency_shift() {
    // Im Gamma(0) = -lambda/4 for any Debye bath: a closed-form anchor that
    // checks the oracle itself before it is trusted elsewhere.
    for (lambda, omega_c, beta) in [(0.5, 10.0, 0.25), (1.3, 4.0, 1.5)] {
        let oracle = MatsubaraGamma {
            lambda,
            omega_c,
            beta,
        };
        let v = oracle.eval(0.0);
        assert!(
            (v.im + lambda / 4.0).abs() < 1e-10,
            "lambda {lambda}: {}",
            v.im
        );
    }
}

#[test]
fn low_temperature_quadrature_still_converges() {
    // A colder, slower bath stresses the quadrature's feature resolution.
    let bath = DebyeBath {
        lambda: 0.2,
        omega_c: 1.0,
        beta: 20.0,
    };
    let oracle = MatsubaraGamma {
        lambda: bath.lambda,
        omega_c: bath.omega_c,
        beta: bath.beta,
    };
    for &w in &[0.0, 0.3, -0.3, 2.5] {
        let exact = oracle.eval(w);
        let im = bath.gamma_imag(w).unwrap();
        assert!(
            (im - exact.im).abs() < 5e-6 * exact.im.abs().max(0.005),
            "Im Gamma({w}): {im} vs {}",
            exact.im
        );
    }
}

//! Minimal 3x3 real matrix algebra for Bloch-vector generators, including a
//! scaling-and-squaring matrix exponential. The spin propagators are built
//! from exp(G dt) of a generator G that is antisymmetric (pure precession)
//! plus a diagonal damping block, so a dense small-matrix exponential covers
//! every case with one code path.

use crate::two_level::SpinVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn identity() -> Self {
        Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in &mut out.0 {
            for v in row {
                *v *= s;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        for (r, row) in out.0.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += other.0[r][c];
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let a = &self.0;
        let b = &other.0;
        let mut out = [[0.0; 3]; 3];
        for (r, out_row) in out.iter_mut().enumerate() {
            for (c, v) in out_row.iter_mut().enumerate() {
                *v = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
            }
        }
        Mat3(out)
    }

    pub fn apply(&self, s: &SpinVector) -> SpinVector {
        let a = &self.0;
        SpinVector::new(
            a[0][0] * s.x + a[0][1] * s.y + a[0][2] * s.z,
            a[1][0] * s.x + a[1][1] * s.y + a[1][2] * s.z,
            a[2][0] * s.x + a[2][1] * s.y + a[2][2] * s.z,
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Matrix exponential by scaling and squaring with a Taylor series,
    /// accurate to ~1e-15 for the well-conditioned generators used here.
    pub fn expm(&self) -> Mat3 {
        // Scale so the series argument has norm <= 0.5.
        let norm = self.max_abs() * 3.0;
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as u32
        } else {
            0
        };
        let scaled = self.scale(0.5_f64.powi(squarings as i32));

        let mut result = Mat3::identity();
        let mut term = Mat3::identity();
        for k in 1..=24 {
            term = term.mul(&scaled).scale(1.0 / k as f64);
            result = result.add(&term);
            if term.max_abs() < 1e-18 * result.max_abs() {
                break;
            }
        }
        for _ in 0..squarings {
            result = result.mul(&result);
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = Mat3::ZERO.expm();
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((e.0[r][c] - expect).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn exponential_of_precession_is_a_rotation() {
        // G generates rotation about z by angle w t.
        let w = 0.7;
        let t = 2.3;
        let g = Mat3([[0.0, -w, 0.0], [w, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let e = g.scale(t).expm();
        let (s, c) = (w * t).sin_cos();
        let expect = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        for r in 0..3 {
            for col in 0..3 {
                assert!(
                    (e.0[r][col] - expect[r][col]).abs() < 1e-14,
                    "({r},{col})"
                );
            }
        }
    }

    #[test]
    fn exponential_of_diagonal_damping() {
        let g = Mat3([[-0.3, 0.0, 0.0], [0.0, -0.3, 0.0], [0.0, 0.0, 0.0]]);
        let e = g.scale(4.0).expm();
        assert!((e.0[0][0] - (-1.2_f64).exp()).abs() < 1e-15);
        assert!((e.0[1][1] - (-1.2_f64).exp()).abs() < 1e-15);
        assert!((e.0[2][2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_generator_matches_series_integration() {
        // Independent oracle: integrate ds/dt = G s with very fine RK4.
        let g = Mat3([
            [-0.2, -1.4, 0.6],
            [1.4, -0.2, 0.0],
            [-0.6, 0.0, 0.0],
        ]);
        let t = 1.7;
        let s0 = SpinVector::new(0.3, -0.5, 0.8);
        let exact = g.scale(t).expm().apply(&s0);

        let n = 20000;
        let h = t / n as f64;
        let mut s = s0;
        for _ in 0..n {
            let k1 = g.apply(&s);
            let k2 = g.apply(&SpinVector::new(
                s.x + 0.5 * h * k1.x,
                s.y + 0.5 * h * k1.y,
                s.z + 0.5 * h * k1.z,
            ));
            let k3 = g.apply(&SpinVector::new(
                s.x + 0.5 * h * k2.x,
                s.y + 0.5 * h * k2.y,
                s.z + 0.5 * h * k2.z,
            ));
            let k4 = g.apply(&SpinVector::new(
                s.x + h * k3.x,
                s.y + h * k3.y,
                s.z + h * k3.z,
            ));
            s = SpinVector::new(
                s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
                s.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
                s.z + h / 6.0 * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
            );
        }
        assert!((s.x - exact.x).abs() < 1e-11);
        assert!((s.y - exact.y).abs() < 1e-11);
        assert!((s.z - exact.z).abs() < 1e-11);
    }

    #[test]
    fn rotation_preserves_norm() {
        let g = Mat3([
            [0.0, -2.0, 0.8],
            [2.0, 0.0, 0.0],
            [-0.8, 0.0, 0.0],
        ]);
        let e = g.scale(5.0).expm();
        let s = e.apply(&SpinVector::new(0.6, 0.0, 0.8));
        assert!((s.norm() - 1.0).abs() < 1e-13);
    }
}

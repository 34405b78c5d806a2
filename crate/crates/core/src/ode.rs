//! Fixed-step classical RK4 on 3-component states, the workhorse for Bloch
//! equations and jump-free drift segments.

/// One classic fourth-order Runge-Kutta step of dy/dt = f(t, y).
pub fn rk4_step<F>(f: &F, t: f64, y: [f64; 3], h: f64) -> [f64; 3]
where
    F: Fn(f64, [f64; 3]) -> [f64; 3],
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, offset(y, k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, offset(y, k2, 0.5 * h));
    let k4 = f(t + h, offset(y, k3, h));
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

fn offset(y: [f64; 3], k: [f64; 3], h: f64) -> [f64; 3] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]]
}

/// One step with a Richardson error estimate: the step is taken once at h
/// and once as two h/2 substeps; the difference over 15 estimates the local
/// error of the fine solution, which is returned.
pub fn rk4_step_doubled<F>(f: &F, t: f64, y: [f64; 3], h: f64) -> ([f64; 3], f64)
where
    F: Fn(f64, [f64; 3]) -> [f64; 3],
{
    let coarse = rk4_step(f, t, y, h);
    let mid = rk4_step(f, t, y, 0.5 * h);
    let fine = rk4_step(f, t + 0.5 * h, mid, 0.5 * h);
    let err = (0..3)
        .map(|i| (fine[i] - coarse[i]).abs())
        .fold(0.0_f64, f64::max)
        / 15.0;
    (fine, err)
}

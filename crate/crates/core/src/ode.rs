//! Explicit Runge–Kutta integrators: classical RK4 with a fixed step and the
//! Dormand–Prince 5(4) embedded pair with step-size control.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("step limit {limit} reached at t = {t}")]
    TooManySteps { t: f64, limit: usize },
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("output times must be non-decreasing and start at or after t0")]
    InvalidTimes,
}

pub type Result<T> = std::result::Result<T, OdeError>;

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One classical fourth-order step of `y' = f(t, y)`.
pub fn rk4_step(f: impl Fn(f64, &[f64]) -> Vec<f64>, t: f64, y: &[f64], h: f64) -> Vec<f64> {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = f(t + h, &axpy(y, h, &k3));
    y.iter()
        .enumerate()
        .map(|(i, &v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// `steps` RK4 steps of size `(t1 - t0) / steps`.
pub fn rk4_integrate(f: impl Fn(f64, &[f64]) -> Vec<f64>, t0: f64, y0: &[f64], t1: f64, steps: usize) -> Result<Vec<f64>> {
    let h = (t1 - t0) / steps.max(1) as f64;
    let mut y = y0.to_vec();
    for s in 0..steps.max(1) {
        y = rk4_step(&f, t0 + s as f64 * h, &y, h);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite(t0 + (s + 1) as f64 * h));
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self { rtol: 1e-6, atol: 1e-9, max_steps: 1_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights are the last row of A; these are fifth minus fourth.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince 5(4) integration of `y' = f(t, y)` from `t0`, returning
/// the state at every time in `t_out`. Steps are clipped to land exactly on
/// output times.
pub fn dopri5(f: impl Fn(f64, &[f64]) -> Vec<f64>, t0: f64, y0: &[f64], t_out: &[f64], opts: &AdaptiveOptions) -> Result<Vec<Vec<f64>>> {
    if t_out.first().is_some_and(|&t| t < t0) || t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(OdeError::InvalidTimes);
    }
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k0 = f(t, &y);
    let mut h = initial_step(&f, t, &y, &k0, opts);
    let mut steps = 0;
    let mut out = Vec::with_capacity(t_out.len());
    for &target in t_out {
        while t < target {
            if steps >= opts.max_steps {
                return Err(OdeError::TooManySteps { t, limit: opts.max_steps });
            }
            let last = h >= target - t;
            let step = if last { target - t } else { h };
            if step <= 16.0 * f64::EPSILON * t.abs().max(1.0) && !last {
                return Err(OdeError::StepSizeUnderflow { t, h: step });
            }
            let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
            k.push(k0.clone());
            for s in 1..7 {
                let ys: Vec<f64> = (0..n).map(|i| y[i] + step * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>()).collect();
                k.push(f(t + C[s] * step, &ys));
            }
            // Stage 7 is evaluated at the fifth-order solution (FSAL).
            let y_new: Vec<f64> = (0..n).map(|i| y[i] + step * (0..6).map(|j| A[6][j] * k[j][i]).sum::<f64>()).collect();
            let err = (0..n)
                .map(|i| {
                    let e = step * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
                    let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                    (e / sc).powi(2)
                })
                .sum::<f64>()
                / n.max(1) as f64;
            let err = err.sqrt();
            if !err.is_finite() {
                if step <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                    return Err(OdeError::NonFinite(t));
                }
                h = step * 0.1;
                continue;
            }
            steps += 1;
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y_new;
                k0 = k.swap_remove(6);
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * factor.min(1.0);
                if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                    return Err(OdeError::StepSizeUnderflow { t, h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step(f: &impl Fn(f64, &[f64]) -> Vec<f64>, t: f64, y: &[f64], k0: &[f64], opts: &AdaptiveOptions) -> f64 {
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt();
    let (d0, d1) = (rms(y), rms(k0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let k1 = f(t + h0, &axpy(y, h0, k0));
    let diff: Vec<f64> = k1.iter().zip(k0).map(|(a, b)| (a - b) / h0).collect();
    let d2 = rms(&diff);
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential() {
        let y = rk4_integrate(|_, y| vec![-y[0]], 0.0, &[1.0], 1.0, 100).unwrap();
        assert!((y[0] - (-1f64).exp()).abs() < 1e-10);
        // Fourth order: halving h cuts the error by about 16.
        let e1 = (rk4_integrate(|_, y| vec![y[0]], 0.0, &[1.0], 2.0, 10).unwrap()[0] - 2f64.exp()).abs();
        let e2 = (rk4_integrate(|_, y| vec![y[0]], 0.0, &[1.0], 2.0, 20).unwrap()[0] - 2f64.exp()).abs();
        assert!((e1 / e2 - 16.0).abs() < 1.5, "{}", e1 / e2);
    }

    #[test]
    fn rk4_time_dependent() {
        let y = rk4_integrate(|t, _| vec![3.0 * t * t], 1.0, &[0.0], 2.0, 4).unwrap();
        assert!((y[0] - 7.0).abs() < 1e-13);
    }

    #[test]
    fn dopri5_harmonic_oscillator() {
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
        let opts = AdaptiveOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let ys = dopri5(|_, y| vec![y[1], -y[0]], 0.0, &[1.0, 0.0], &times, &opts).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-8);
            assert!((y[1] + t.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn dopri5_tolerance_controls_error() {
        let f = |t: f64, y: &[f64]| vec![-2.0 * t * y[0]];
        let exact = (-9f64).exp();
        let loose = dopri5(f, 0.0, &[1.0], &[3.0], &AdaptiveOptions { rtol: 1e-4, atol: 1e-8, ..Default::default() }).unwrap();
        let tight = dopri5(f, 0.0, &[1.0], &[3.0], &AdaptiveOptions { rtol: 1e-9, atol: 1e-14, ..Default::default() }).unwrap();
        assert!((tight[0][0] - exact).abs() < (loose[0][0] - exact).abs());
        assert!((tight[0][0] - exact).abs() < 1e-10);
    }

    #[test]
    fn dopri5_repeated_and_initial_times() {
        let ys = dopri5(|_, y| vec![y[0]], 0.0, &[1.0], &[0.0, 1.0, 1.0], &AdaptiveOptions::default()).unwrap();
        assert_eq!(ys[0], vec![1.0]);
        assert_eq!(ys[1], ys[2]);
        assert!(dopri5(|_, y| vec![y[0]], 1.0, &[1.0], &[0.5], &AdaptiveOptions::default()).is_err());
    }

    #[test]
    fn dopri5_blowup_is_an_error() {
        // y' = y² from y(0) = 1 blows up at t = 1.
        let r = dopri5(|_, y| vec![y[0] * y[0]], 0.0, &[1.0], &[2.0], &AdaptiveOptions { max_steps: 100_000, ..Default::default() });
        assert!(r.is_err());
    }
}

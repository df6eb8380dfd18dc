//! Adaptive Dormand-Prince 5(4) integrator for small real systems.

use crate::error::{Error, Result};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates y' = f(y) from 0 to `t` (either sign) with mixed tolerance `tol`.
pub fn dopri5<F>(f: F, y0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t == 0.0 {
        return Ok(y);
    }
    let dir = t.signum();
    let total = t.abs();
    let mut done = 0.0;
    let mut h = (total * 1e-3).max(1e-6).min(total);
    let mut k = vec![vec![0.0; n]; 7];
    let mut steps = 0usize;
    while done < total {
        h = h.min(total - done);
        k[0] = f(&y);
        for s in 1..7 {
            let ys: Vec<f64> = (0..n)
                .map(|i| y[i] + dir * h * (0..s).map(|r| A[s][r] * k[r][i]).sum::<f64>())
                .collect();
            k[s] = f(&ys);
        }
        let y5: Vec<f64> = (0..n).map(|i| y[i] + dir * h * (0..7).map(|r| B5[r] * k[r][i]).sum::<f64>()).collect();
        let err = (0..n)
            .map(|i| {
                let e = dir * h * (0..7).map(|r| (B5[r] - B4[r]) * k[r][i]).sum::<f64>();
                let sc = tol * (1.0 + y[i].abs().max(y5[i].abs()));
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let err = err.sqrt();
        if err <= 1.0 {
            y = y5;
            done += h;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= if err.is_finite() { factor } else { 0.2 };
        steps += 1;
        if h < total * 1e-14 || steps > 10_000_000 {
            return Err(Error::StepUnderflow(done * dir));
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let y = dopri5(|y| vec![y[1], -y[0]], &[1.0, 0.0], 10.0, 1e-12).unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
        let back = dopri5(|y| vec![y[1], -y[0]], &y, -10.0, 1e-12).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-9);
    }
}

//! Adaptive Dormand-Prince 5(4) integration for the small ODE systems used by
//! the shooting solver (Prüfer phase, eigenfunction, right-anchored solutions).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at x = {0}")]
    StepUnderflow(f64),
}

const SAFETY: f64 = 0.9;
const MIN_SHRINK: f64 = 0.2;
const MAX_GROW: f64 = 5.0;
const MAX_STEPS: usize = 2_000_000;

/// One Dormand-Prince step from (x, y) with step h. Returns (y5, err_norm)
/// where err_norm is the scaled embedded-error estimate.
fn dopri5_step<const D: usize>(
    f: &impl Fn(f64, &[f64; D]) -> [f64; D],
    x: f64,
    y: &[f64; D],
    k1: &[f64; D],
    h: f64,
    rtol: f64,
    atol: f64,
) -> ([f64; D], [f64; D], f64) {
    let stage = |coeffs: &[(f64, &[f64; D])], c: f64| -> [f64; D] {
        let mut yt = *y;
        for (a, k) in coeffs {
            for d in 0..D {
                yt[d] += h * a * k[d];
            }
        }
        f(x + c * h, &yt)
    };

    let k2 = stage(&[(1.0 / 5.0, k1)], 1.0 / 5.0);
    let k3 = stage(&[(3.0 / 40.0, k1), (9.0 / 40.0, &k2)], 3.0 / 10.0);
    let k4 = stage(
        &[(44.0 / 45.0, k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)],
        4.0 / 5.0,
    );
    let k5 = stage(
        &[
            (19372.0 / 6561.0, k1),
            (-25360.0 / 2187.0, &k2),
            (64448.0 / 6561.0, &k3),
            (-212.0 / 729.0, &k4),
        ],
        8.0 / 9.0,
    );
    let k6 = stage(
        &[
            (9017.0 / 3168.0, k1),
            (-355.0 / 33.0, &k2),
            (46732.0 / 5247.0, &k3),
            (49.0 / 176.0, &k4),
            (-5103.0 / 18656.0, &k5),
        ],
        1.0,
    );

    let mut y5 = *y;
    for d in 0..D {
        y5[d] += h
            * (35.0 / 384.0 * k1[d] + 500.0 / 1113.0 * k3[d] + 125.0 / 192.0 * k4[d]
                - 2187.0 / 6784.0 * k5[d]
                + 11.0 / 84.0 * k6[d]);
    }
    let k7 = f(x + h, &y5);

    // Difference of 5th and embedded 4th order solutions.
    let e = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut err = 0.0_f64;
    for d in 0..D {
        let ed = h
            * (e[0] * k1[d] + e[2] * k3[d] + e[3] * k4[d] + e[4] * k5[d] + e[5] * k6[d]
                + e[6] * k7[d]);
        let scale = atol + rtol * y[d].abs().max(y5[d].abs());
        err += (ed / scale) * (ed / scale);
    }
    (y5, k7, (err / D as f64).sqrt())
}

/// Integrate y' = f(x,y) from `a` to `b` (either direction), invoking
/// `observe(x, y)` at every checkpoint in `checkpoints` (which must be sorted
/// in integration direction and lie within [min(a,b), max(a,b)]).
pub fn integrate_with_checkpoints<const D: usize>(
    f: impl Fn(f64, &[f64; D]) -> [f64; D],
    a: f64,
    b: f64,
    y0: [f64; D],
    rtol: f64,
    atol: f64,
    checkpoints: &[f64],
    mut observe: impl FnMut(f64, &[f64; D]),
) -> Result<[f64; D], OdeError> {
    let dir = if b >= a { 1.0 } else { -1.0 };
    let mut x = a;
    let mut y = y0;
    let mut k1 = f(x, &y);
    let mut h = dir * ((b - a).abs() / 100.0).min(0.1).max(1e-8);
    let mut next_cp = 0usize;
    while next_cp < checkpoints.len() && (checkpoints[next_cp] - x) * dir <= 0.0 {
        observe(checkpoints[next_cp], &y);
        next_cp += 1;
    }

    let mut steps = 0usize;
    while (b - x) * dir > 0.0 {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(OdeError::StepUnderflow(x));
        }
        // Never step past the target or the next checkpoint.
        let mut limit = b;
        if next_cp < checkpoints.len() && (checkpoints[next_cp] - limit) * dir < 0.0 {
            limit = checkpoints[next_cp];
        }
        if (x + h - limit) * dir > 0.0 {
            h = limit - x;
        }
        if h.abs() < 1e-15 * x.abs().max(1.0) {
            return Err(OdeError::StepUnderflow(x));
        }

        let (y_new, k_new, err) = dopri5_step(&f, x, &y, &k1, h, rtol, atol);
        if err <= 1.0 {
            x += h;
            y = y_new;
            k1 = k_new;
            while next_cp < checkpoints.len() && (checkpoints[next_cp] - x) * dir <= 1e-15 {
                observe(checkpoints[next_cp], &y);
                next_cp += 1;
            }
            let grow = if err == 0.0 {
                MAX_GROW
            } else {
                (SAFETY * err.powf(-0.2)).min(MAX_GROW)
            };
            h *= grow;
        } else {
            h *= (SAFETY * err.powf(-0.2)).max(MIN_SHRINK);
        }
    }
    while next_cp < checkpoints.len() {
        observe(checkpoints[next_cp], &y);
        next_cp += 1;
    }
    Ok(y)
}

/// Integrate from `a` to `b` and return the final state.
pub fn integrate<const D: usize>(
    f: impl Fn(f64, &[f64; D]) -> [f64; D],
    a: f64,
    b: f64,
    y0: [f64; D],
    rtol: f64,
    atol: f64,
) -> Result<[f64; D], OdeError> {
    integrate_with_checkpoints(f, a, b, y0, rtol, atol, &[], |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, 1.0, [1.0], 1e-10, 1e-10).unwrap();
        assert!((y[0] - (-1.0_f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_round_trip() {
        let tau = 2.0 * std::f64::consts::PI;
        let y = integrate(
            |_, y: &[f64; 2]| [y[1], -tau * tau * y[0]],
            0.0,
            1.0,
            [1.0, 0.0],
            1e-10,
            1e-10,
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-7, "y0 = {}", y[0]);
        assert!(y[1].abs() < 1e-6, "y1 = {}", y[1]);
    }

    #[test]
    fn backwards_integration() {
        // y' = y integrated from 1 down to 0 reverses the exponential.
        let y = integrate(|_, y: &[f64; 1]| [y[0]], 1.0, 0.0, [1.0_f64.exp()], 1e-10, 1e-10)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn checkpoints_record_dense_output() {
        let cps: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let mut seen = Vec::new();
        integrate_with_checkpoints(
            |_, y: &[f64; 1]| [-y[0]],
            0.0,
            1.0,
            [1.0],
            1e-10,
            1e-10,
            &cps,
            |x, y| seen.push((x, y[0])),
        )
        .unwrap();
        assert_eq!(seen.len(), 11);
        for (x, v) in seen {
            assert!((v - (-x).exp()).abs() < 1e-9, "at {x}: {v}");
        }
    }
}

//! Bessel functions of the second kind, orders 0 and 1, for real positive
//! arguments.
//!
//! For `x ≤ 25` the Neumann series
//! `Y₀(x) = (2/π)(ln(x/2) + γ) J₀(x) − (4/π) Σ_{k≥1} (−1)^k J_{2k}(x)/k`
//! is summed with `Jₙ(x)` from Miller's backward recurrence (normalised by
//! `J₀ + 2 Σ J_{2k} = 1`); `Y₁ = −Y₀'` follows by differentiating the same
//! series term by term. Beyond that the Hankel asymptotic expansion is used,
//! which is accurate to rounding there.

use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{HpsError, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_LIMIT: f64 = 25.0;

/// `Y₀(x)` for `x > 0`.
pub fn bessel_y0(x: f64) -> Result<f64> {
    check(x)?;
    Ok(if x <= SERIES_LIMIT {
        neumann(x).0
    } else {
        hankel(x, 0)
    })
}

/// `Y₁(x)` for `x > 0`.
pub fn bessel_y1(x: f64) -> Result<f64> {
    check(x)?;
    Ok(if x <= SERIES_LIMIT {
        neumann(x).1
    } else {
        hankel(x, 1)
    })
}

/// `(Y₀(x), Y₁(x))` sharing one evaluation.
pub fn bessel_y01(x: f64) -> Result<(f64, f64)> {
    check(x)?;
    Ok(if x <= SERIES_LIMIT {
        neumann(x)
    } else {
        (hankel(x, 0), hankel(x, 1))
    })
}

fn check(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(HpsError::Domain(format!("Y0/Y1 need a finite argument > 0, got {x}")))
    }
}

/// `J₀ … J_n` at `x` by Miller's algorithm.
fn bessel_j_sequence(x: f64) -> Vec<f64> {
    // Start index well past the turning point n ≈ x so the seeded error decays.
    let mut start = (x + 20.0 + 4.0 * x.sqrt()).ceil() as usize + 10;
    if start % 2 == 1 {
        start += 1;
    }
    let mut j = vec![0.0f64; start + 2];
    j[start + 1] = 0.0;
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = j[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * j[k];
    }
    for v in j.iter_mut() {
        *v /= norm;
    }
    j
}

fn neumann(x: f64) -> (f64, f64) {
    let j = bessel_j_sequence(x);
    let kmax = (j.len() - 3) / 2;
    let log_term = (x / 2.0).ln() + EULER_GAMMA;

    let mut sum = 0.0;
    let mut dsum = 0.0;
    // Sum from the small tail toward k = 1.
    for k in (1..=kmax).rev() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        sum += sign * j[2 * k] / kf;
        // J_{2k}' = (J_{2k-1} - J_{2k+1}) / 2
        dsum += sign * 0.5 * (j[2 * k - 1] - j[2 * k + 1]) / kf;
    }
    let y0 = FRAC_2_PI * (log_term * j[0] - 2.0 * sum);
    // Y₀' = (2/π)(J₀/x − (ln(x/2)+γ) J₁) − (4/π) Σ (−1)^k J_{2k}'/k
    let dy0 = FRAC_2_PI * (j[0] / x - log_term * j[1] - 2.0 * dsum);
    (y0, -dy0)
}

/// Hankel expansion `Yν(x) = √(2/(πx)) (P sin χ + Q cos χ)`, `χ = x − (2ν+1)π/4`.
fn hankel(x: f64, order: u32) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut p = 0.0;
    let mut q = 0.0;
    // a_k = Π_{m=1..k} (μ − (2m−1)²) / (k! 8^k x^k)
    let mut term = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        }
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        // even k feed P with sign (−1)^{k/2}, odd k feed Q with sign (−1)^{(k−1)/2}
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-17 * p.abs().max(1e-300) {
            break;
        }
    }
    let (s, c) = x.sin_cos();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (sin_chi, cos_chi) = match order {
        0 => ((s - c) * r, (c + s) * r),
        _ => (-(s + c) * r, (s - c) * r),
    };
    (2.0 / (PI * x)).sqrt() * (p * sin_chi + q * cos_chi)
}

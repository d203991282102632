//! Linear step of the LPPL calibration.
//!
//! For fixed `(tc, m, ω)` the model is linear in four coefficients:
//! `y ≈ A + B'·f + C₁·g + C₂·h` with `f = (tc−t)^m`, `g = f·cos(ω ln(tc−t))`,
//! `h = f·sin(ω ln(tc−t))`. The system is solved by Householder QR on the
//! column-equilibrated design, which also exposes rank deficiency.

use std::f64::consts::TAU;

use serde::Serialize;

use super::LpplError;

/// Relative size of a QR pivot below which the design counts as singular.
const RANK_TOLERANCE: f64 = 1e-10;

/// Result of the linear least-squares step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub a: f64,
    /// Power-law amplitude in the `A − B(tc−t)^m(...)` convention (`B = −B'`).
    pub b: f64,
    /// Relative oscillation amplitude, non-negative.
    pub c: f64,
    /// Oscillation phase in `[0, 2π)`.
    pub phi: f64,
    /// Raw regression coefficients on `g` and `h`.
    pub c1: f64,
    pub c2: f64,
    pub sse: f64,
}

/// Solves the linear step on `times`/`log_prices` for fixed `(tc, m, ω)`.
pub fn ols_linear_fit(times: &[f64], log_prices: &[f64], tc: f64, m: f64, omega: f64) -> Result<LinearFit, LpplError> {
    if times.len() != log_prices.len() {
        return Err(LpplError::LengthMismatch { times: times.len(), values: log_prices.len() });
    }
    if times.len() < 4 {
        return Err(LpplError::TooFewObservations(times.len()));
    }
    if let Some(&t) = times.iter().find(|&&t| !(t < tc)) {
        return Err(LpplError::BeyondCriticalTime { t, tc });
    }
    let log_dt: Vec<f64> = times.iter().map(|&t| (tc - t).ln()).collect();
    let mut scratch = Scratch::new(times.len());
    solve(&log_dt, log_prices, m, omega, &mut scratch)
}

/// Reusable buffers for repeated solves over one window.
pub(crate) struct Scratch {
    design: Vec<f64>,
    rhs: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(n: usize) -> Self {
        Scratch { design: vec![0.0; 4 * n], rhs: vec![0.0; n] }
    }
}

/// Linear solve given precomputed `ln(tc − t)`.
pub(crate) fn solve(
    log_dt: &[f64],
    y: &[f64],
    m: f64,
    omega: f64,
    scratch: &mut Scratch,
) -> Result<LinearFit, LpplError> {
    let n = log_dt.len();
    if scratch.rhs.len() != n {
        *scratch = Scratch::new(n);
    }
    // Column-major design: [1 | f | g | h].
    let (c0, rest) = scratch.design.split_at_mut(n);
    let (c1, rest) = rest.split_at_mut(n);
    let (c2, c3) = rest.split_at_mut(n);
    let mut f_max = 0.0f64;
    for i in 0..n {
        let l = log_dt[i];
        let f = (m * l).exp();
        let (s, c) = (omega * l).sin_cos();
        c0[i] = 1.0;
        c1[i] = f;
        c2[i] = f * c;
        c3[i] = f * s;
        f_max = f_max.max(f);
    }
    if !f_max.is_finite() {
        return Err(LpplError::SingularDesign);
    }
    scratch.rhs.copy_from_slice(y);

    let mut scale = [0.0f64; 4];
    for (j, col) in scratch.design.chunks_exact_mut(n).enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(LpplError::SingularDesign);
        }
        scale[j] = norm;
        col.iter_mut().for_each(|v| *v /= norm);
    }

    let mut r = [[0.0f64; 4]; 4];
    householder_qr(&mut scratch.design, &mut scratch.rhs, n, &mut r)?;

    let mut beta = [0.0f64; 4];
    for k in (0..4).rev() {
        let mut acc = scratch.rhs[k];
        for j in (k + 1)..4 {
            acc -= r[k][j] * beta[j];
        }
        beta[k] = acc / r[k][k];
    }
    for (b, s) in beta.iter_mut().zip(scale) {
        *b /= s;
    }
    let sse: f64 = scratch.rhs[4..].iter().map(|v| v * v).sum();

    let [a, b_prime, c1, c2] = beta;
    let osc = c1.hypot(c2);
    let (c, phi) = if osc * f_max <= 1e-12 * (1.0 + a.abs()) {
        (0.0, 0.0)
    } else {
        // -B·C·cos(x + φ) = C₁cos x + C₂ sin x with B' = -B.
        let (cc, cs) = (c1 / b_prime, -c2 / b_prime);
        (cc.hypot(cs), cs.atan2(cc).rem_euclid(TAU))
    };
    Ok(LinearFit { a, b: -b_prime, c, phi: if phi >= TAU { 0.0 } else { phi }, c1, c2, sse })
}

/// In-place Householder QR of an `n × 4` column-major matrix, applying the
/// reflections to `rhs` as well. Writes the upper triangle into `r`.
fn householder_qr(a: &mut [f64], rhs: &mut [f64], n: usize, r: &mut [[f64; 4]; 4]) -> Result<(), LpplError> {
    for k in 0..4 {
        let norm = (k..n).map(|i| a[k * n + i].powi(2)).sum::<f64>().sqrt();
        // Columns have unit norm, so the pivot is a relative measure.
        if norm < RANK_TOLERANCE {
            return Err(LpplError::SingularDesign);
        }
        let alpha = if a[k * n + k] > 0.0 { -norm } else { norm };
        // v = x - alpha e_k, stored in place of column k.
        a[k * n + k] -= alpha;
        let vnorm2: f64 = (k..n).map(|i| a[k * n + i].powi(2)).sum();
        if vnorm2 > 0.0 {
            for j in (k + 1)..4 {
                let dot: f64 = (k..n).map(|i| a[k * n + i] * a[j * n + i]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    a[j * n + i] -= f * a[k * n + i];
                }
            }
            let dot: f64 = (k..n).map(|i| a[k * n + i] * rhs[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                rhs[i] -= f * a[k * n + i];
            }
        }
        r[k][k] = alpha;
        for j in (k + 1)..4 {
            r[k][j] = a[j * n + k];
        }
    }
    Ok(())
}

//! Periodic finite-difference stencils shared across modules.
//!
//! All operators assume a uniform grid of spacing `dx` with index arithmetic
//! mod `n`; fields are plain slices of length `n`.

/// Centered first derivative, second order: (f[i+1] - f[i-1]) / (2 dx).
pub(crate) fn d0(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let s = 0.5 / dx;
    for i in 0..n {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let im = if i == 0 { n - 1 } else { i - 1 };
        out[i] = (f[ip] - f[im]) * s;
    }
    out
}

/// Cumulative trapezoid primitive anchored at the left box edge:
/// out[0] = 0, out[i] = out[i-1] + dx (f[i-1] + f[i]) / 2.
pub(crate) fn cumtrapz(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for i in 1..n {
        acc += 0.5 * dx * (f[i - 1] + f[i]);
        out[i] = acc;
    }
    out
}

/// Periodic cubic (four-point Lagrange) interpolation of `f` at physical
/// position `x`; `x` may lie outside [0, n dx) and is wrapped.
pub(crate) fn interp_cubic(f: &[f64], dx: f64, x: f64) -> f64 {
    let n = f.len();
    let length = dx * n as f64;
    let mut s = (x / length).rem_euclid(1.0) * n as f64;
    // Guard against s == n from rounding of rem_euclid at the seam.
    if s >= n as f64 {
        s -= n as f64;
    }
    let j = s.floor() as usize;
    let xi = s - j as f64;
    let jm = (j + n - 1) % n;
    let jp = (j + 1) % n;
    let jpp = (j + 2) % n;
    let wm = -xi * (xi - 1.0) * (xi - 2.0) / 6.0;
    let w0 = (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0;
    let wp = -(xi + 1.0) * xi * (xi - 2.0) / 2.0;
    let wpp = (xi + 1.0) * xi * (xi - 1.0) / 6.0;
    wm * f[jm] + w0 * f[j] + wp * f[jp] + wpp * f[jpp]
}

pub(crate) fn min_of(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_of(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn norm_inf(f: &[f64]) -> f64 {
    f.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
}

pub(crate) fn all_finite(f: &[f64]) -> bool {
    f.iter().all(|v| v.is_finite())
}

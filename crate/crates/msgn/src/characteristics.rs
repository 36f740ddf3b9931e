//! Characteristic paths through stored trajectories and the pointwise
//! monitors formulated along them.
//!
//! Paths solve `dX/dt = lambda(t, X)` (or `mu`) with RK4 across each
//! snapshot interval, cubic interpolation in space and linear blending in
//! time between consecutive snapshots; positions are kept unwrapped (the
//! periodic image is used only for field lookups). Along the paths the
//! Riemann slopes obey Riccati equations,
//!
//! ```text
//!   dP/dt along lambda = -(3/8) P^2 + (3/8) Q^2 + P Q - 3 R / (alpha h^3),
//!   dQ/dt along mu     = -(3/8) Q^2 + (3/8) P^2 + P Q - 3 R / (alpha h^3),
//! ```
//!
//! whose residuals, cross-path integrals and tangent-type lower bound are
//! what the blow-up experiments monitor.

use crate::diagnostics::riemann_fields;
use crate::dynamics::{script_r, Trajectory};
use crate::model::{FluidState, Grid, ModelParams};
use crate::stencil;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Right-leaning family with speed `u + sqrt(kappa h)`.
    Lambda,
    /// Left-leaning family with speed `u - sqrt(kappa h)`.
    Mu,
}

/// A characteristic path sampled at the trajectory's snapshot times,
/// carrying both Riemann slopes along it.
#[derive(Debug, Clone)]
pub struct CharPath {
    pub family: Family,
    pub origin: f64,
    pub times: Vec<f64>,
    /// Unwrapped positions; reduce mod the box length for field lookups.
    pub positions: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Set when integration stopped early on non-finite data.
    pub truncated: bool,
}

/// Residual series of the Riccati equation along a path, reported at the
/// interior sample times.
#[derive(Debug, Clone)]
pub struct RiccatiSeries {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
}

/// The two cross-path integrals `int Q(s, X(s))^2 ds` and
/// `int P(s, Y(s))^2 ds` up to the first intersection of the paths.
#[derive(Debug, Clone, Copy)]
pub struct CrossPathIntegrals {
    pub q2_along_lambda: f64,
    pub p2_along_mu: f64,
    /// `None` when the paths never met; the integrals then cover the whole
    /// stored horizon and are lower bounds.
    pub t_intersect: Option<f64>,
}

/// Verdict of the tangent lower bound / fitted linear upper bound check on
/// `Q` along a collection of mu-paths.
#[derive(Debug, Clone, Copy)]
pub struct QbReport {
    /// `max sqrt(3 |R| / (alpha h^3))` over the path samples.
    pub c_tilde: f64,
    /// Fitted linear envelope `a t + b` of the running max of `|Q|`.
    pub a_fit: f64,
    pub b_fit: f64,
    /// RMS deviation of the fit; the tested bound is `a t + b + 3 sigma`.
    pub sigma: f64,
    pub lower_fraction_ok: f64,
    pub lower_worst_margin: f64,
    pub upper_fraction_ok: f64,
    pub upper_worst_margin: f64,
    pub samples: usize,
}

struct SnapshotFields<'a> {
    state: &'a FluidState,
    p: Vec<f64>,
    q: Vec<f64>,
}

fn snapshot_fields<'a>(
    state: &'a FluidState,
    params: &ModelParams,
    grid: &Grid,
) -> SnapshotFields<'a> {
    let f = riemann_fields(state, params, grid);
    SnapshotFields {
        state,
        p: f.p,
        q: f.q,
    }
}

fn speed_at(fields: &SnapshotFields, params: &ModelParams, grid: &Grid, family: Family, x: f64) -> f64 {
    let u = stencil::interp_cubic(&fields.state.u, grid.dx, x);
    let h = stencil::interp_cubic(&fields.state.h, grid.dx, x).max(f64::MIN_POSITIVE);
    let c = (params.kappa() * h).sqrt();
    match family {
        Family::Lambda => u + c,
        Family::Mu => u - c,
    }
}

/// Trace several paths of one family from `origins` through the whole
/// stored trajectory.
pub fn trace_many(
    traj: &Trajectory,
    params: &ModelParams,
    grid: &Grid,
    origins: &[f64],
    family: Family,
) -> Result<Vec<CharPath>> {
    let snaps = &traj.snapshots;
    if snaps.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "tracing needs at least two snapshots, got {}",
            snaps.len()
        )));
    }
    for w in snaps.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(Error::InvalidParam(
                "snapshot times must increase strictly".into(),
            ));
        }
    }

    let mut paths: Vec<CharPath> = origins
        .iter()
        .map(|&origin| CharPath {
            family,
            origin,
            times: vec![snaps[0].t],
            positions: vec![origin],
            p: Vec::new(),
            q: Vec::new(),
            truncated: false,
        })
        .collect();

    let mut cur = snapshot_fields(&snaps[0], params, grid);
    for path in paths.iter_mut() {
        let x = path.positions[0];
        path.p.push(stencil::interp_cubic(&cur.p, grid.dx, x));
        path.q.push(stencil::interp_cubic(&cur.q, grid.dx, x));
    }

    for k in 1..snaps.len() {
        let next = snapshot_fields(&snaps[k], params, grid);
        let t0 = snaps[k - 1].t;
        let dt = snaps[k].t - t0;
        for path in paths.iter_mut() {
            if path.truncated {
                continue;
            }
            let x0 = *path.positions.last().unwrap();
            // RK4 stage speeds with linear blending of the two snapshots.
            let spd = |theta: f64, x: f64| {
                let a = speed_at(&cur, params, grid, family, x);
                let b = speed_at(&next, params, grid, family, x);
                (1.0 - theta) * a + theta * b
            };
            let k1 = spd(0.0, x0);
            let k2 = spd(0.5, x0 + 0.5 * dt * k1);
            let k3 = spd(0.5, x0 + 0.5 * dt * k2);
            let k4 = spd(1.0, x0 + dt * k3);
            let x1 = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let pv = stencil::interp_cubic(&next.p, grid.dx, x1);
            let qv = stencil::interp_cubic(&next.q, grid.dx, x1);
            if !x1.is_finite() || !pv.is_finite() || !qv.is_finite() {
                path.truncated = true;
                continue;
            }
            path.times.push(snaps[k].t);
            path.positions.push(x1);
            path.p.push(pv);
            path.q.push(qv);
        }
        cur = next;
    }
    Ok(paths)
}

/// Trace a single path; see [`trace_many`].
pub fn trace(
    traj: &Trajectory,
    params: &ModelParams,
    grid: &Grid,
    origin: f64,
    family: Family,
) -> Result<CharPath> {
    Ok(trace_many(traj, params, grid, &[origin], family)?
        .pop()
        .expect("one origin yields one path"))
}

/// Centered derivative on a possibly non-uniform time grid (second order).
fn dot_nonuniform(fm: f64, f0: f64, fp: f64, h1: f64, h2: f64) -> f64 {
    (h1 * h1 * fp + (h2 * h2 - h1 * h1) * f0 - h2 * h2 * fm) / (h1 * h2 * (h1 + h2))
}

/// Residual of the Riccati equation along a traced path, via centered
/// differencing of the carried slope against the pointwise right side.
pub fn riccati_residual(
    path: &CharPath,
    traj: &Trajectory,
    params: &ModelParams,
    grid: &Grid,
) -> Result<RiccatiSeries> {
    let m = path.times.len();
    if m < 3 {
        return Err(Error::InvalidParam(format!(
            "need at least three path samples for a residual, got {m}"
        )));
    }
    // Traced paths are sampled at the snapshot times from index 0 on.
    for (k, &t) in path.times.iter().enumerate() {
        let ts = traj.snapshots[k].t;
        if (t - ts).abs() > 1e-12 * ts.abs().max(1.0) {
            return Err(Error::InvalidParam(
                "path samples are not aligned with the trajectory snapshots".into(),
            ));
        }
    }

    let a = params.alpha;
    let mut times = Vec::with_capacity(m - 2);
    let mut residual = Vec::with_capacity(m - 2);
    for k in 1..m - 1 {
        let h1 = path.times[k] - path.times[k - 1];
        let h2 = path.times[k + 1] - path.times[k];
        let (vm, v0, vp) = match path.family {
            Family::Lambda => (path.p[k - 1], path.p[k], path.p[k + 1]),
            Family::Mu => (path.q[k - 1], path.q[k], path.q[k + 1]),
        };
        let lhs = dot_nonuniform(vm, v0, vp, h1, h2);

        let snap = &traj.snapshots[k];
        let x = path.positions[k];
        let rfield = script_r(snap, params, grid)?;
        let rr = stencil::interp_cubic(&rfield, grid.dx, x);
        let h = stencil::interp_cubic(&snap.h, grid.dx, x).max(f64::MIN_POSITIVE);
        let p = path.p[k];
        let q = path.q[k];
        let rhs = match path.family {
            Family::Lambda => -0.375 * p * p + 0.375 * q * q + p * q - 3.0 * rr / (a * h * h * h),
            Family::Mu => -0.375 * q * q + 0.375 * p * p + p * q - 3.0 * rr / (a * h * h * h),
        };
        times.push(path.times[k]);
        residual.push(lhs - rhs);
    }
    Ok(RiccatiSeries { times, residual })
}

/// Trapezoid of `f^2` over the path nodes up to (interpolated) time `t_cut`.
fn integral_sq_until(times: &[f64], values: &[f64], t_cut: Option<f64>) -> f64 {
    let mut acc = 0.0;
    for k in 1..times.len() {
        let t0 = times[k - 1];
        let t1 = times[k];
        let f0 = values[k - 1] * values[k - 1];
        let f1 = values[k] * values[k];
        match t_cut {
            Some(tc) if tc <= t0 => break,
            Some(tc) if tc < t1 => {
                let theta = (tc - t0) / (t1 - t0);
                let fmid = f0 + theta * (f1 - f0);
                acc += 0.5 * (tc - t0) * (f0 + fmid);
                break;
            }
            _ => acc += 0.5 * (t1 - t0) * (f0 + f1),
        }
    }
    acc
}

/// Trace the lambda-path from `x1` and the mu-path from `x2 > x1`, locate
/// their first meeting, and accumulate `int Q^2` along the former and
/// `int P^2` along the latter up to it.
pub fn lemma5_integrals(
    traj: &Trajectory,
    params: &ModelParams,
    grid: &Grid,
    x1: f64,
    x2: f64,
) -> Result<CrossPathIntegrals> {
    if !(x1 < x2) {
        return Err(Error::InvalidParam(format!(
            "need x1 < x2 for approaching paths, got {x1} and {x2}"
        )));
    }
    let xpath = trace(traj, params, grid, x1, Family::Lambda)?;
    let ypath = trace(traj, params, grid, x2, Family::Mu)?;
    let m = xpath.times.len().min(ypath.times.len());

    let mut t_intersect = None;
    for k in 1..m {
        let d_prev = xpath.positions[k - 1] - ypath.positions[k - 1];
        let d = xpath.positions[k] - ypath.positions[k];
        if d_prev < 0.0 && d >= 0.0 {
            let theta = -d_prev / (d - d_prev);
            t_intersect = Some(xpath.times[k - 1] + theta * (xpath.times[k] - xpath.times[k - 1]));
            break;
        }
    }

    Ok(CrossPathIntegrals {
        q2_along_lambda: integral_sq_until(&xpath.times[..m], &xpath.q[..m], t_intersect),
        p2_along_mu: integral_sq_until(&ypath.times[..m], &ypath.p[..m], t_intersect),
        t_intersect,
    })
}

/// Check `Q` along mu-paths from `origins` against the tangent lower bound
/// `-C tan(3 C t)` (on the window `3 C t <= pi/4` where the estimate is
/// meaningful) and a linear upper envelope fitted to the running max of
/// `|Q|` with three-sigma slack.
pub fn qb_bound_check(
    traj: &Trajectory,
    params: &ModelParams,
    grid: &Grid,
    origins: &[f64],
) -> Result<QbReport> {
    if origins.is_empty() {
        return Err(Error::InvalidParam("need at least one origin".into()));
    }
    let paths = trace_many(traj, params, grid, origins, Family::Mu)?;

    // Forcing amplitude along the paths, shared per snapshot.
    let a = params.alpha;
    let mut coef_max = 0.0_f64;
    let longest = paths.iter().map(|p| p.times.len()).max().unwrap_or(0);
    for k in 0..longest {
        let snap = &traj.snapshots[k];
        let rfield = script_r(snap, params, grid)?;
        for path in &paths {
            if k >= path.times.len() {
                continue;
            }
            let x = path.positions[k];
            let rr = stencil::interp_cubic(&rfield, grid.dx, x);
            let h = stencil::interp_cubic(&snap.h, grid.dx, x).max(f64::MIN_POSITIVE);
            coef_max = coef_max.max(3.0 * rr.abs() / (a * h * h * h));
        }
    }
    let c_tilde = coef_max.sqrt();

    // Linear envelope of the running max of |Q|, pooled over paths.
    let mut fit_t = Vec::new();
    let mut fit_m = Vec::new();
    for path in &paths {
        let mut run = 0.0_f64;
        for (k, &t) in path.times.iter().enumerate() {
            run = run.max(path.q[k].abs());
            fit_t.push(t);
            fit_m.push(run);
        }
    }
    let nfit = fit_t.len() as f64;
    let mean_t = fit_t.iter().sum::<f64>() / nfit;
    let mean_m = fit_m.iter().sum::<f64>() / nfit;
    let mut stt = 0.0;
    let mut stm = 0.0;
    for i in 0..fit_t.len() {
        let dt = fit_t[i] - mean_t;
        stt += dt * dt;
        stm += dt * (fit_m[i] - mean_m);
    }
    let a_fit = if stt > 0.0 { stm / stt } else { 0.0 };
    let b_fit = mean_m - a_fit * mean_t;
    let mut ss = 0.0;
    for i in 0..fit_t.len() {
        let r = fit_m[i] - (a_fit * fit_t[i] + b_fit);
        ss += r * r;
    }
    let sigma = (ss / nfit).sqrt();

    let scale = fit_m.iter().fold(c_tilde.max(1e-30), |acc, v| acc.max(*v));
    let tol = 1e-9 * scale;
    let mut lower_ok = 0usize;
    let mut lower_n = 0usize;
    let mut lower_worst = f64::INFINITY;
    let mut upper_ok = 0usize;
    let mut upper_n = 0usize;
    let mut upper_worst = f64::INFINITY;
    for path in &paths {
        for (k, &t) in path.times.iter().enumerate() {
            let qv = path.q[k];
            let phase = 3.0 * c_tilde * t;
            if phase <= std::f64::consts::FRAC_PI_4 {
                let low = -c_tilde * phase.tan();
                let margin = qv - low;
                lower_n += 1;
                lower_worst = lower_worst.min(margin);
                if margin >= -tol {
                    lower_ok += 1;
                }
            }
            let bound = a_fit * t + b_fit + 3.0 * sigma;
            let margin = bound - qv.abs();
            upper_n += 1;
            upper_worst = upper_worst.min(margin);
            if margin >= -tol {
                upper_ok += 1;
            }
        }
    }

    Ok(QbReport {
        c_tilde,
        a_fit,
        b_fit,
        sigma,
        lower_fraction_ok: if lower_n > 0 {
            lower_ok as f64 / lower_n as f64
        } else {
            1.0
        },
        lower_worst_margin: if lower_worst.is_finite() {
            lower_worst
        } else {
            0.0
        },
        upper_fraction_ok: if upper_n > 0 {
            upper_ok as f64 / upper_n as f64
        } else {
            1.0
        },
        upper_worst_margin: if upper_worst.is_finite() {
            upper_worst
        } else {
            0.0
        },
        samples: upper_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, DetectRule, SimConfig};
    use crate::model::{derive_params, FluidState, Grid};

    fn flat_run() -> (Trajectory, crate::model::ModelParams, Grid) {
        let p = derive_params(9.81, 1.0, 2.0 / 15.0).unwrap();
        let grid = Grid::new(64, 16.0).unwrap();
        let s = FluidState::new(0.0, vec![1.0; 64], vec![0.0; 64], &grid).unwrap();
        let cfg = SimConfig {
            params: p,
            grid,
            t_end: 1.0,
            courant: 0.4,
            dt_min: 1e-9,
            snapshot_every: 1,
            thresholds: DetectRule::default(),
        };
        (simulate(&cfg, &s).unwrap(), p, grid)
    }

    #[test]
    fn flat_paths_advect_at_the_sound_speed() {
        let (traj, p, grid) = flat_run();
        let path = trace(&traj, &p, &grid, 2.0, Family::Lambda).unwrap();
        assert!(!path.truncated);
        for (k, &t) in path.times.iter().enumerate() {
            let expect = 2.0 + p.c0 * t;
            assert!(
                (path.positions[k] - expect).abs() < 1e-9,
                "t={t}: {} vs {expect}",
                path.positions[k]
            );
            assert!(path.p[k].abs() < 1e-12);
            assert!(path.q[k].abs() < 1e-12);
        }
        let back = trace(&traj, &p, &grid, 2.0, Family::Mu).unwrap();
        let t_last = *back.times.last().unwrap();
        let x_last = *back.positions.last().unwrap();
        assert!((x_last - (2.0 - p.c0 * t_last)).abs() < 1e-9);
    }

    #[test]
    fn paths_unwrap_across_the_seam() {
        let (traj, p, grid) = flat_run();
        // Starting close to the right edge, a lambda path leaves the box.
        let path = trace(&traj, &p, &grid, 15.5, Family::Lambda).unwrap();
        let x_last = *path.positions.last().unwrap();
        assert!(x_last > grid.length, "position should unwrap, got {x_last}");
    }

    #[test]
    fn flat_riccati_residual_vanishes() {
        let (traj, p, grid) = flat_run();
        let path = trace(&traj, &p, &grid, 3.0, Family::Lambda).unwrap();
        let res = riccati_residual(&path, &traj, &p, &grid).unwrap();
        assert_eq!(res.times.len(), path.times.len() - 2);
        for &r in &res.residual {
            assert!(r.abs() < 1e-10, "residual {r}");
        }
    }

    #[test]
    fn flat_crossing_time_matches_geometry() {
        let (traj, p, grid) = flat_run();
        let ints = lemma5_integrals(&traj, &p, &grid, 4.0, 6.0).unwrap();
        let t_star = ints.t_intersect.expect("paths must meet");
        assert!((t_star - 1.0 / p.c0).abs() < 1e-6, "t* = {t_star}");
        assert!(ints.q2_along_lambda.abs() < 1e-20);
        assert!(ints.p2_along_mu.abs() < 1e-20);
        assert!(lemma5_integrals(&traj, &p, &grid, 6.0, 4.0).is_err());
    }

    #[test]
    fn flat_bounds_check_passes_trivially() {
        let (traj, p, grid) = flat_run();
        let rep = qb_bound_check(&traj, &p, &grid, &[3.0, 8.0, 12.0]).unwrap();
        assert!(rep.c_tilde < 1e-8, "flat run has no forcing, got {}", rep.c_tilde);
        assert!((rep.lower_fraction_ok - 1.0).abs() < 1e-15);
        assert!((rep.upper_fraction_ok - 1.0).abs() < 1e-15);
        assert!(rep.samples > 0);
    }
}

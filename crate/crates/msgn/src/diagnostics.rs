//! Conserved quantities, Riemann fields, pointwise identities and blow-up
//! detection.
//!
//! Two samplings of the energy density coexist deliberately:
//!
//! - [`energy_density`] (and the budget/series totals) sample the two
//!   gradient terms on cell faces. With that choice the semi-discrete
//!   linearized flow conserves the measured energy exactly, because the
//!   face symbol matches the discrete dispersion relation through the
//!   relation `beta = (2/3)(alpha - 1)`; drift in a simulation then comes
//!   from the time integrator and genuine nonlinearity only.
//! - The pointwise centered sampling (inside [`energy_flux`] and
//!   [`ed_identity_residual`]) keeps the algebraic flux-speed identities
//!   exact at the nodes, which is what the identity checks verify.
//!
//! Both samplings agree with the continuum energy to O(dx^2).

use crate::dynamics::{DetectRule, StepRecord};
use crate::model::{EnergyBudget, FluidState, Grid, ModelParams};
use crate::stencil;
use crate::{Error, Result};

/// Riemann invariants `R = u + 2 sqrt(kappa h)`, `S = u - 2 sqrt(kappa h)`,
/// the characteristic speeds `lambda = u + sqrt(kappa h)`,
/// `mu = u - sqrt(kappa h)`, and their centered slopes `P = R_x`, `Q = S_x`.
#[derive(Debug, Clone)]
pub struct RiemannFields {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// A-priori depth and velocity bounds implied by the total energy.
#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub h_min: f64,
    pub h_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

/// Per-state blow-up indicators.
#[derive(Debug, Clone, Copy)]
pub struct Indicators {
    pub min_h: f64,
    pub min_ux: f64,
    pub max_ux: f64,
    pub min_hx: f64,
    pub max_hx: f64,
    pub norm_r_inf: f64,
}

impl Indicators {
    pub fn max_abs_hx(&self) -> f64 {
        self.min_hx.abs().max(self.max_hx.abs())
    }
}

/// Resolved stop/labelling context for a run.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    /// Depth below which the run stops as vanishing.
    pub h_floor: f64,
    /// Slope magnitude `-u_x` must exceed this for the blow-up signature.
    pub u_big: f64,
    /// `max |h_x|` must exceed this for the blow-up signature.
    pub h_big: f64,
    /// Smallest step the driver was allowed to take.
    pub dt_min: f64,
    /// Requested final time.
    pub t_end: f64,
}

impl Thresholds {
    pub fn with_overrides(mut self, rule: &DetectRule) -> Thresholds {
        if let Some(v) = rule.h_floor {
            self.h_floor = v;
        }
        if let Some(v) = rule.u_big {
            self.u_big = v;
        }
        if let Some(v) = rule.h_big {
            self.h_big = v;
        }
        self
    }
}

/// Default detector from the initial data: generous multiples of the
/// initial slopes plus scale floors, and a depth floor of 5% rest depth.
pub fn default_thresholds(
    initial: &FluidState,
    params: &ModelParams,
    grid: &Grid,
    dt_min: f64,
    t_end: f64,
) -> Thresholds {
    let ux0 = stencil::norm_inf(&stencil::d0(&initial.u, grid.dx));
    let hx0 = stencil::norm_inf(&stencil::d0(&initial.h, grid.dx));
    Thresholds {
        h_floor: 0.05 * params.hbar,
        u_big: 100.0 * ux0 + 10.0 * params.c0 / params.hbar,
        h_big: 100.0 * hx0 + 10.0,
        dt_min,
        t_end,
    }
}

/// Run labels, most specific first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedTEnd,
    BlowupSuspected,
    DepthVanishing,
    DtUnderflow,
    Instability,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::BlowupSuspected => "blowup_suspected",
            Termination::DepthVanishing => "depth_vanishing",
            Termination::DtUnderflow => "dt_underflow",
            Termination::Instability => "instability",
        }
    }
}

/// Which side of the depth-slope range diverged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HxSide {
    MaxDiverging,
    MinDiverging,
    Neither,
}

impl HxSide {
    pub fn as_str(&self) -> &'static str {
        match self {
            HxSide::MaxDiverging => "max_diverging",
            HxSide::MinDiverging => "min_diverging",
            HxSide::Neither => "neither",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub termination: Termination,
    pub hx_side: HxSide,
}

/// Face-sampled energy density (see the module note); integrates the box
/// total exactly as the sum of per-face gradient energies.
pub fn energy_density(state: &FluidState, params: &ModelParams, grid: &Grid) -> Vec<f64> {
    split_density(state, params, grid).0
}

/// Box totals of the four energy summands.
pub fn energy_budget(state: &FluidState, params: &ModelParams, grid: &Grid) -> EnergyBudget {
    let (_, kin, du, pot, dh) = split_density(state, params, grid);
    let dx = grid.dx;
    let kinetic: f64 = kin.iter().sum::<f64>() * dx;
    let dispersive_u: f64 = du.iter().sum::<f64>() * dx;
    let potential: f64 = pot.iter().sum::<f64>() * dx;
    let dispersive_h: f64 = dh.iter().sum::<f64>() * dx;
    EnergyBudget {
        total: kinetic + dispersive_u + potential + dispersive_h,
        kinetic,
        dispersive_u,
        potential,
        dispersive_h,
    }
}

#[allow(clippy::type_complexity)]
fn split_density(
    state: &FluidState,
    params: &ModelParams,
    grid: &Grid,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = grid.n;
    let h = &state.h;
    let u = &state.u;
    let g = params.g;
    let hb = params.hbar;
    let inv_dx = 1.0 / grid.dx;

    // Face energies at i+1/2.
    let mut fu = vec![0.0; n];
    let mut fh = vec![0.0; n];
    for i in 0..n {
        let ip = if i + 1 == n { 0 } else { i + 1 };
        let hf = 0.5 * (h[i] + h[ip]);
        let du = (u[ip] - u[i]) * inv_dx;
        let dh = (h[ip] - h[i]) * inv_dx;
        fu[i] = hf * hf * hf * du * du;
        fh[i] = hf * hf * dh * dh;
    }

    let mut total = vec![0.0; n];
    let mut kin = vec![0.0; n];
    let mut dis_u = vec![0.0; n];
    let mut pot = vec![0.0; n];
    let mut dis_h = vec![0.0; n];
    let cu = params.alpha / 12.0;
    let ch = params.beta * g / 8.0;
    for i in 0..n {
        let im = if i == 0 { n - 1 } else { i - 1 };
        kin[i] = 0.5 * h[i] * u[i] * u[i];
        dis_u[i] = cu * (fu[i] + fu[im]);
        let eta = h[i] - hb;
        pot[i] = 0.5 * g * eta * eta;
        dis_h[i] = ch * (fh[i] + fh[im]);
        total[i] = kin[i] + dis_u[i] + pot[i] + dis_h[i];
    }
    (total, kin, dis_u, pot, dis_h)
}

/// Pointwise centered energy density used inside the flux and the
/// flux-speed identities.
fn pointwise_density(state: &FluidState, params: &ModelParams, grid: &Grid) -> Vec<f64> {
    let n = grid.n;
    let ux = stencil::d0(&state.u, grid.dx);
    let hx = stencil::d0(&state.h, grid.dx);
    let g = params.g;
    let hb = params.hbar;
    let mut e = vec![0.0; n];
    for i in 0..n {
        let h = state.h[i];
        let eta = h - hb;
        e[i] = 0.5 * h * state.u[i] * state.u[i]
            + params.alpha / 6.0 * h * h * h * ux[i] * ux[i]
            + 0.5 * g * eta * eta
            + 0.25 * params.beta * g * h * h * hx[i] * hx[i];
    }
    e
}

/// Energy flux
/// `Q = u (E + R + g (h^2 - hbar^2)/2) + (beta/2) g h^3 h_x u_x`,
/// with the nonlocal stress from [`crate::dynamics::script_r`] and centered
/// slopes throughout. The potential part of the bracket is (g/2)(h^2 - hbar^2)
/// rather than g h (h - hbar); only the former closes `E_t + Q_x = 0` on
/// smooth solutions (the two differ by (g/2)(h - hbar)^2, whose transport is
/// not a divergence).
pub fn energy_flux(state: &FluidState, params: &ModelParams, grid: &Grid) -> Result<Vec<f64>> {
    let n = grid.n;
    let e = pointwise_density(state, params, grid);
    let r = crate::dynamics::script_r(state, params, grid)?;
    let ux = stencil::d0(&state.u, grid.dx);
    let hx = stencil::d0(&state.h, grid.dx);
    let g = params.g;
    let hb = params.hbar;
    let mut q = vec![0.0; n];
    for i in 0..n {
        let h = state.h[i];
        let u = state.u[i];
        q[i] = u * (e[i] + r[i] + 0.5 * g * (h * h - hb * hb))
            + 0.5 * params.beta * g * h * h * h * hx[i] * ux[i];
    }
    Ok(q)
}

/// Centered-in-time residual of the conservation law `E_t + Q_x = 0` from
/// three equally spaced states.
pub fn conservation_residual(
    prev: &FluidState,
    mid: &FluidState,
    next: &FluidState,
    params: &ModelParams,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let dt1 = mid.t - prev.t;
    let dt2 = next.t - mid.t;
    if !(dt1 > 0.0) || !(dt2 > 0.0) || (dt1 - dt2).abs() > 1e-9 * dt1.max(dt2) {
        return Err(Error::InvalidParam(format!(
            "states must be equally spaced in time, got spacings {dt1:.6e} and {dt2:.6e}"
        )));
    }
    let e_prev = energy_density(prev, params, grid);
    let e_next = energy_density(next, params, grid);
    let qx = stencil::d0(&energy_flux(mid, params, grid)?, grid.dx);
    let inv_2dt = 1.0 / (dt1 + dt2);
    Ok((0..grid.n)
        .map(|i| (e_next[i] - e_prev[i]) * inv_2dt + qx[i])
        .collect())
}

/// Riemann invariants, speeds and slopes for a state.
pub fn riemann_fields(state: &FluidState, params: &ModelParams, grid: &Grid) -> RiemannFields {
    let n = grid.n;
    let kappa = params.kappa();
    let mut r = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    let mut mu = vec![0.0; n];
    for i in 0..n {
        let c = (kappa * state.h[i]).sqrt();
        let u = state.u[i];
        r[i] = u + 2.0 * c;
        s[i] = u - 2.0 * c;
        lambda[i] = u + c;
        mu[i] = u - c;
    }
    let p = stencil::d0(&r, grid.dx);
    let q = stencil::d0(&s, grid.dx);
    RiemannFields {
        r,
        s,
        lambda,
        mu,
        p,
        q,
    }
}

/// Residual fields of the two pointwise flux-speed identities
///
/// ```text
///   lambda E - Q = sqrt(6 alpha beta g h^7)/12 Q_s^2 + B1,
///   -mu E + Q    = sqrt(6 alpha beta g h^7)/12 P_s^2 + B2,
/// ```
///
/// where `P_s = u_x + sqrt(kappa/h) h_x`, `Q_s = u_x - sqrt(kappa/h) h_x`
/// and `B(1,2) = sqrt(kappa h)(h u^2/2 + g (h-hbar)^2/2) -+ u (R + g (h^2-hbar^2)/2)`,
/// the transported bracket matching the one inside [`energy_flux`].
/// Every term uses the same centered `u_x`, `h_x` and the same `R`, so the
/// identities hold to rounding on any admissible state.
#[derive(Debug, Clone)]
pub struct EdResiduals {
    pub lambda_branch: Vec<f64>,
    pub mu_branch: Vec<f64>,
    /// Pointwise magnitude scale (sum of |term|) for relative assessment.
    pub scale: Vec<f64>,
}

pub fn ed_identity_residual(
    state: &FluidState,
    params: &ModelParams,
    grid: &Grid,
) -> Result<EdResiduals> {
    let n = grid.n;
    let e = pointwise_density(state, params, grid);
    let rr = crate::dynamics::script_r(state, params, grid)?;
    let ux = stencil::d0(&state.u, grid.dx);
    let hx = stencil::d0(&state.h, grid.dx);
    let g = params.g;
    let hb = params.hbar;
    let kappa = params.kappa();
    let a = params.alpha;
    let b = params.beta;

    let mut lambda_branch = vec![0.0; n];
    let mut mu_branch = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for i in 0..n {
        let h = state.h[i];
        let u = state.u[i];
        let c = (kappa * h).sqrt();
        let slope = (kappa / h).sqrt() * hx[i];
        let p_s = ux[i] + slope;
        let q_s = ux[i] - slope;
        let coef = (6.0 * a * b * g * h.powi(7)).sqrt() / 12.0;
        let qflux = u * (e[i] + rr[i] + 0.5 * g * (h * h - hb * hb))
            + 0.5 * b * g * h * h * h * hx[i] * ux[i];
        let still = c * (0.5 * h * u * u + 0.5 * g * (h - hb) * (h - hb));
        let transport = u * (rr[i] + 0.5 * g * (h * h - hb * hb));
        let b1 = still - transport;
        let b2 = still + transport;

        let lam = u + c;
        let mu = u - c;
        lambda_branch[i] = lam * e[i] - qflux - coef * q_s * q_s - b1;
        mu_branch[i] = -mu * e[i] + qflux - coef * p_s * p_s - b2;
        scale[i] = (lam * e[i]).abs()
            + (mu * e[i]).abs()
            + qflux.abs()
            + coef * (q_s * q_s + p_s * p_s)
            + b1.abs()
            + b2.abs()
            + 1e-300;
    }
    Ok(EdResiduals {
        lambda_branch,
        mu_branch,
        scale,
    })
}

/// Depth and velocity bounds implied by a total energy `E` below the
/// threshold `g sqrt(beta) hbar^3 / (3 sqrt 2)`:
///
/// ```text
///   |h - hbar| <= sqrt(3 sqrt2 E / (g sqrt(beta) hbar)),
///   |u| <= (3/alpha)^(1/4) sqrt(E) / h_min.
/// ```
pub fn prop_bounds(params: &ModelParams, energy: f64) -> Result<Bounds> {
    if !(energy >= 0.0) || !energy.is_finite() {
        return Err(Error::InvalidParam(format!(
            "energy must be nonnegative, got {energy}"
        )));
    }
    if energy >= params.energy_threshold {
        return Err(Error::EnergyAboveThreshold {
            energy,
            threshold: params.energy_threshold,
        });
    }
    let dev = (3.0 * 2.0_f64.sqrt() * energy / (params.g * params.beta.sqrt() * params.hbar))
        .sqrt();
    let h_min = params.hbar - dev;
    let h_max = params.hbar + dev;
    let u_max = (3.0 / params.alpha).powf(0.25) * energy.sqrt() / h_min;
    Ok(Bounds {
        h_min,
        h_max,
        u_min: -u_max,
        u_max,
    })
}

/// Indicators the driver records each step.
pub fn blowup_indicators(
    state: &FluidState,
    params: &ModelParams,
    grid: &Grid,
) -> Result<Indicators> {
    let ux = stencil::d0(&state.u, grid.dx);
    let hx = stencil::d0(&state.h, grid.dx);
    let r = crate::dynamics::script_r(state, params, grid)?;
    Ok(Indicators {
        min_h: stencil::min_of(&state.h),
        min_ux: stencil::min_of(&ux),
        max_ux: stencil::max_of(&ux),
        min_hx: stencil::min_of(&hx),
        max_hx: stencil::max_of(&hx),
        norm_r_inf: stencil::norm_inf(&r),
    })
}

/// Net growth of a nonnegative indicator across the series: final value
/// over the smallest recorded value (guarded so an exact zero base counts
/// as unbounded growth).
fn growth(values: impl Iterator<Item = f64>, end: f64) -> f64 {
    let base = values.fold(f64::INFINITY, f64::min);
    end / base.max(1e-12 * end).max(f64::MIN_POSITIVE)
}

/// Label a completed series.
///
/// Order of precedence: non-finite data, depth below the floor, reaching
/// `t_end`, step underflow (split into suspected blow-up when the detector
/// signature holds with at least tenfold net indicator growth trending into
/// the final steps), and otherwise instability (a run that stopped early at
/// a healthy step size can only have exhausted its stage retries).
pub fn classify_termination(series: &[StepRecord], th: &Thresholds) -> Classification {
    let neither = |termination| Classification {
        termination,
        hx_side: HxSide::Neither,
    };
    let Some(last) = series.last() else {
        return neither(Termination::Instability);
    };
    if !last.is_finite() {
        return neither(Termination::Instability);
    }
    if last.min_h < th.h_floor {
        return neither(Termination::DepthVanishing);
    }
    if last.t >= th.t_end - th.dt_min - 1e-12 * th.t_end.abs() {
        return neither(Termination::ReachedTEnd);
    }
    if last.dt > 0.0 && last.dt <= 2.0 * th.dt_min {
        let neg_ux = |r: &StepRecord| (-r.min_ux).max(0.0);
        let end_ux = neg_ux(last);
        let end_hx = last.max_abs_hx();
        let signature = last.min_ux < -th.u_big && end_hx > th.h_big;
        let g_ux = growth(series.iter().map(neg_ux), end_ux);
        let g_hx = growth(series.iter().map(StepRecord::max_abs_hx), end_hx);
        let peak_ux = series.iter().map(neg_ux).fold(0.0_f64, f64::max);
        let peak_hx = series
            .iter()
            .map(StepRecord::max_abs_hx)
            .fold(0.0_f64, f64::max);
        let trending = end_ux >= 0.8 * peak_ux && end_hx >= 0.8 * peak_hx;
        if signature && g_ux >= 10.0 && g_hx >= 10.0 && trending {
            let end_min = (-last.min_hx).max(0.0);
            let end_max = last.max_hx.max(0.0);
            let g_min = growth(series.iter().map(|r| (-r.min_hx).max(0.0)), end_min);
            let g_max = growth(series.iter().map(|r| r.max_hx.max(0.0)), end_max);
            let hx_side = if end_min >= 2.0 * end_max && g_min >= 10.0 {
                HxSide::MinDiverging
            } else if end_max >= 2.0 * end_min && g_max >= 10.0 {
                HxSide::MaxDiverging
            } else {
                HxSide::Neither
            };
            return Classification {
                termination: Termination::BlowupSuspected,
                hx_side,
            };
        }
        return neither(Termination::DtUnderflow);
    }
    neither(Termination::Instability)
}

//! Parameters, grid, state containers and initial data.

use crate::stencil;
use crate::{Error, Result};

/// Physical and derived constants of the system.
///
/// `alpha = 1 + 3 beta / 2` couples the dispersive tuning to the pressure
/// correction; `c0 = sqrt((alpha-1) g hbar / alpha)` is the long-wave speed
/// of the reformulated hyperbolic part, and `energy_threshold` is the energy
/// below which the a-priori depth/velocity bounds are non-vacuous,
/// `g sqrt(beta) hbar^3 / (3 sqrt(2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub g: f64,
    pub hbar: f64,
    pub beta: f64,
    pub alpha: f64,
    pub c0: f64,
    pub energy_threshold: f64,
}

impl ModelParams {
    /// `kappa = (alpha - 1) g / alpha`; characteristic speeds are
    /// `u +- sqrt(kappa h)`.
    pub fn kappa(&self) -> f64 {
        (self.alpha - 1.0) / self.alpha * self.g
    }

    /// Characteristic speed offset `sqrt(kappa h)` at depth `h`.
    pub fn char_speed(&self, h: f64) -> f64 {
        (self.kappa() * h).sqrt()
    }
}

/// Build [`ModelParams`] from the primitive constants.
///
/// All three inputs must be strictly positive.
pub fn derive_params(g: f64, hbar: f64, beta: f64) -> Result<ModelParams> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::InvalidParam(format!("g must be positive, got {g}")));
    }
    if !(hbar > 0.0) || !hbar.is_finite() {
        return Err(Error::InvalidParam(format!(
            "hbar must be positive, got {hbar}"
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParam(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let alpha = 1.0 + 1.5 * beta;
    let c0 = ((alpha - 1.0) / alpha * g * hbar).sqrt();
    let energy_threshold = g * beta.sqrt() / (3.0 * 2.0_f64.sqrt()) * hbar.powi(3);
    Ok(ModelParams {
        g,
        hbar,
        beta,
        alpha,
        c0,
        energy_threshold,
    })
}

/// Uniform periodic grid with nodes `x_i = i dx`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub length: f64,
    pub dx: f64,
}

impl Grid {
    /// `n` must be even and at least 16 (the centered stencils and the
    /// cyclic solver assume a non-degenerate ring); `length` positive.
    pub fn new(n: usize, length: f64) -> Result<Grid> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "grid size must be even and >= 16, got {n}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidParam(format!(
                "grid length must be positive, got {length}"
            )));
        }
        Ok(Grid {
            n,
            length,
            dx: length / n as f64,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.dx * i as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

/// Depth and velocity samples at a single time.
///
/// Invariant: `h` is strictly positive and both fields are finite with
/// exactly `grid.n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub t: f64,
    pub h: Vec<f64>,
    pub u: Vec<f64>,
}

impl FluidState {
    pub fn new(t: f64, h: Vec<f64>, u: Vec<f64>, grid: &Grid) -> Result<FluidState> {
        if h.len() != grid.n {
            return Err(Error::ShapeMismatch {
                expected: grid.n,
                got: h.len(),
            });
        }
        if u.len() != grid.n {
            return Err(Error::ShapeMismatch {
                expected: grid.n,
                got: u.len(),
            });
        }
        if !stencil::all_finite(&h) || !stencil::all_finite(&u) || !t.is_finite() {
            return Err(Error::NonFinite { context: "state" });
        }
        let min_h = stencil::min_of(&h);
        if !(min_h > 0.0) {
            return Err(Error::DegenerateDepth { min_h });
        }
        Ok(FluidState { t, h, u })
    }
}

/// Split of the conserved energy into its four summands (each integrated
/// over the box, so `total = kinetic + dispersive_u + potential +
/// dispersive_h`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBudget {
    pub total: f64,
    pub kinetic: f64,
    pub dispersive_u: f64,
    pub potential: f64,
    pub dispersive_h: f64,
}

/// Still water with a Gaussian hump: `h = hbar + a exp(-((x-c)/w)^2)`,
/// `u = 0`. Tails with a relative contribution below 1e-15 are flushed to
/// exactly `hbar` so the support is compact and wrap checks stay exact.
pub fn gaussian_state(
    grid: &Grid,
    params: &ModelParams,
    amplitude: f64,
    width: f64,
    center: f64,
) -> Result<FluidState> {
    if !(width > 0.0) || !width.is_finite() || !amplitude.is_finite() || !center.is_finite() {
        return Err(Error::InvalidParam(format!(
            "gaussian needs finite amplitude/center and positive width, got a={amplitude}, w={width}, c={center}"
        )));
    }
    let mut h = vec![params.hbar; grid.n];
    for i in 0..grid.n {
        let z = (grid.x(i) - center) / width;
        let e = (-z * z).exp();
        if e >= 1e-15 {
            h[i] = params.hbar + amplitude * e;
        }
    }
    FluidState::new(0.0, h, vec![0.0; grid.n], grid)
}

/// Velocity that closes the left-going Riemann slope: `u = 2 sqrt(kappa)
/// (sqrt(h) - sqrt(hbar))`, so `Q = u_x - sqrt(kappa/h) h_x` vanishes
/// identically and the data launches a right-moving simple wave.
pub fn zero_q_state(grid: &Grid, params: &ModelParams, h: Vec<f64>) -> Result<FluidState> {
    let sk = params.kappa().sqrt();
    let hb = params.hbar.sqrt();
    let u: Vec<f64> = h.iter().map(|&hi| 2.0 * sk * (hi.sqrt() - hb)).collect();
    FluidState::new(0.0, h, u, grid)
}

/// Reflection `x -> -x`: depth is even, velocity odd. An involution; the
/// dynamics commutes with it, which turns a steep down-slope data set into
/// the mirrored steep up-slope one.
pub fn reflected(state: &FluidState) -> FluidState {
    let n = state.h.len();
    let mut h = vec![0.0; n];
    let mut u = vec![0.0; n];
    for i in 0..n {
        let j = (n - i) % n;
        h[i] = state.h[j];
        u[i] = -state.u[j];
    }
    FluidState {
        t: state.t,
        h,
        u,
    }
}

/// A compactly supported right-moving hump with one steep face, built for
/// gradient blow-up experiments.
#[derive(Debug, Clone)]
pub struct BlowupProfile {
    pub state: FluidState,
    /// Most negative initial Riemann slope `P = u_x + sqrt(kappa/h) h_x`.
    pub min_p0: f64,
    /// Realised hump height after the energy capping.
    pub amplitude: f64,
}

/// Build blow-up seed data: a raised-cosine hump (gentle up-ramp, short
/// plateau, steep down-ramp whose slope is `-steepness * hbar`) with the
/// zero-Q velocity closure, scaled so the total energy stays at or below
/// `energy_cap`.
///
/// The down-ramp must span at least eight cells; if the requested steepness
/// cannot be represented, the error reports the most negative `P_0` the
/// grid supports at the capped height.
pub fn blowup_state(
    grid: &Grid,
    params: &ModelParams,
    steepness: f64,
    energy_cap: f64,
) -> Result<BlowupProfile> {
    if !(steepness > 0.0) || !steepness.is_finite() {
        return Err(Error::InvalidParam(format!(
            "steepness must be positive, got {steepness}"
        )));
    }
    if !(energy_cap > 0.0) || !energy_cap.is_finite() {
        return Err(Error::InvalidParam(format!(
            "energy cap must be positive, got {energy_cap}"
        )));
    }

    let budget = support_budget(grid);
    if 24.0 * grid.dx > budget {
        return Err(Error::InvalidParam(format!(
            "grid too coarse for any admissible hump: {} cells", grid.n
        )));
    }

    let target = 0.98 * energy_cap;
    // Keep the bracket inside the geometry so every probe builds cleanly.
    let a_geom = 2.0 * steepness * params.hbar * (budget / 3.0) / std::f64::consts::PI;
    let a_hi = (0.45 * params.hbar).min((1.0 - 1e-9) * a_geom);
    let energy_of = |a: f64| -> Result<f64> {
        let state = build_hump(grid, params, a, steepness)?;
        Ok(crate::diagnostics::energy_budget(&state, params, grid).total)
    };

    let amplitude = if energy_of(a_hi)? <= target {
        a_hi
    } else {
        // E(a) grows monotonically with the height (the support widens with
        // it as well), so a fixed-count bisection is deterministic and safe.
        let mut lo = 0.0;
        let mut hi = a_hi;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if energy_of(mid)? <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let wd = ramp_width(params, amplitude, steepness);
    if wd < 8.0 * grid.dx {
        // Report what the grid can actually deliver: the same hump with the
        // down-ramp stretched to its eight-cell minimum.
        let relaxed = steepness * wd / (8.0 * grid.dx);
        let state = build_hump(grid, params, amplitude, relaxed)?;
        let achievable = stencil::min_of(&crate::diagnostics::riemann_fields(&state, params, grid).p);
        return Err(Error::InfeasibleProfile {
            achievable_min_p0: achievable,
        });
    }

    let state = build_hump(grid, params, amplitude, steepness)?;
    let min_p0 = stencil::min_of(&crate::diagnostics::riemann_fields(&state, params, grid).p);
    Ok(BlowupProfile {
        state,
        min_p0,
        amplitude,
    })
}

fn ramp_width(params: &ModelParams, amplitude: f64, steepness: f64) -> f64 {
    // Raised-cosine ramp of height a over width w has peak slope pi a / (2 w).
    std::f64::consts::PI * amplitude / (2.0 * steepness * params.hbar)
}

/// Room available for the hump, from `L/8` to `3L/4`.
fn support_budget(grid: &Grid) -> f64 {
    0.625 * grid.length
}

fn build_hump(
    grid: &Grid,
    params: &ModelParams,
    amplitude: f64,
    steepness: f64,
) -> Result<FluidState> {
    let wd = ramp_width(params, amplitude, steepness);
    let budget = support_budget(grid);
    if 3.0 * wd > budget {
        return Err(Error::InvalidParam(format!(
            "hump ramps of width {:.3e} do not fit the box of length {:.3e}",
            wd,
            grid.length
        )));
    }
    // Gentle rise, short crest, steep fall; the rise is compressed when the
    // box leaves less than four ramp widths of room.
    let wu = (4.0 * wd).min(budget - 2.0 * wd);
    let wp = wd;
    let x0 = grid.length / 8.0;

    let mut h = vec![params.hbar; grid.n];
    if amplitude > 0.0 {
        for i in 0..grid.n {
            let x = grid.x(i);
            h[i] = if x <= x0 || x >= x0 + wu + wp + wd {
                params.hbar
            } else if x < x0 + wu {
                let xi = (x - x0) / wu;
                params.hbar + amplitude * 0.5 * (1.0 - (std::f64::consts::PI * xi).cos())
            } else if x < x0 + wu + wp {
                params.hbar + amplitude
            } else {
                let xi = (x - x0 - wu - wp) / wd;
                params.hbar + amplitude * 0.5 * (1.0 + (std::f64::consts::PI * xi).cos())
            };
        }
    }
    zero_q_state(grid, params, h)
}

//! The four commands behind the binary, each returning the process exit
//! code instead of calling `exit` itself so tests can drive them in place.
//!
//! Exit code contract:
//!
//! | code | meaning |
//! |------|---------|
//! | 0    | run reached its final time (or the table was written) |
//! | 10   | stopped on the gradient blow-up signature |
//! | 11   | depth reached the vanishing floor |
//! | 12   | time step underflowed `dt_min` |
//! | 13   | non-finite state (instability) |
//! | 2    | configuration error (file, key, value or parameter) |
//! | 3    | bounds query at or above the energy threshold |
//! | 4    | infeasible blow-up request (steepness or energy cap) |
//! | 1    | internal failure (I/O, solver invariant) |
//!
//! Every file-writing command drops a `manifest.json` whose `config_echo`
//! reproduces the run bit for bit when fed back in.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde_json::json;

use msgn::characteristics::{self, Family};
use msgn::diagnostics::{riemann_fields, Termination};
use msgn::dynamics::{simulate, DetectRule, SimConfig, Trajectory};
use msgn::model::{
    blowup_state, derive_params, gaussian_state, reflected, FluidState, Grid, ModelParams,
};

use crate::config::{fmt_value, render_echo, Config};
use crate::csvio;
use crate::manifest::RunManifest;

/// A command failure carrying the exit code the process must report.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(err: anyhow::Error) -> Failure {
        Failure {
            code: 2,
            message: format!("{err:#}"),
        }
    }

    fn infeasible(message: String) -> Failure {
        Failure { code: 4, message }
    }

    fn internal(err: anyhow::Error) -> Failure {
        Failure {
            code: 1,
            message: format!("{err:#}"),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

fn finish(result: CmdResult) -> i32 {
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn termination_code(t: Termination) -> i32 {
    match t {
        Termination::ReachedTEnd => 0,
        Termination::BlowupSuspected => 10,
        Termination::DepthVanishing => 11,
        Termination::DtUnderflow => 12,
        Termination::Instability => 13,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Down,
    Up,
}

impl Side {
    fn as_str(self) -> &'static str {
        match self {
            Side::Down => "down",
            Side::Up => "up",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum InitKind {
    Flat,
    Gaussian {
        amplitude: f64,
        width: f64,
        center: f64,
    },
    Blowup {
        side: Side,
        steepness: f64,
        energy_cap: f64,
        trace: bool,
    },
}

/// Fully resolved simulation request; [`RunSpec::echo`] serializes it back
/// to config text with every default filled in.
#[derive(Debug, Clone)]
struct RunSpec {
    g: f64,
    hbar: f64,
    beta: f64,
    n: usize,
    length: f64,
    t_end: f64,
    courant: f64,
    dt_min: f64,
    kind: InitKind,
    out_dir: String,
    snapshot_every: usize,
    detect: DetectRule,
    seed: u64,
}

impl RunSpec {
    fn from_config(cfg: &Config) -> Result<RunSpec> {
        let g = cfg.f64_or("model.g", 9.81)?;
        let hbar = cfg.f64_or("model.hbar", 1.0)?;
        let beta = cfg.f64_or("model.beta", 2.0 / 15.0)?;
        let n = cfg.usize_req("grid.n")?;
        let length = cfg.f64_req("grid.length")?;
        let t_end = cfg.f64_req("time.t_end")?;
        let courant = cfg.f64_or("time.courant", 0.3)?;
        let dt_min = cfg.f64_or("time.dt_min", 1e-9)?;
        let kind_name = cfg.string_or("init.kind", "flat");
        let kind = match kind_name.as_str() {
            "flat" => InitKind::Flat,
            "gaussian" => InitKind::Gaussian {
                amplitude: cfg.f64_req("init.amplitude")?,
                width: cfg.f64_req("init.width")?,
                center: cfg.f64_or("init.center", 0.5 * length)?,
            },
            "blowup" => {
                let side_name = cfg.string_or("blowup.side", "down");
                let side = match side_name.as_str() {
                    "down" => Side::Down,
                    "up" => Side::Up,
                    other => {
                        return Err(anyhow!(
                            "key 'blowup.side': expected down or up, got '{other}'"
                        ))
                    }
                };
                InitKind::Blowup {
                    side,
                    steepness: cfg.f64_req("blowup.steepness")?,
                    energy_cap: cfg.f64_req("blowup.energy_cap")?,
                    trace: cfg.bool_or("blowup.trace_characteristics", true)?,
                }
            }
            other => {
                return Err(anyhow!(
                    "key 'init.kind': expected flat, gaussian or blowup, got '{other}'"
                ))
            }
        };
        let out_dir = cfg.string_or("output.dir", "out");
        let snapshot_every = cfg.usize_or("output.snapshot_every", 10)?;
        let detect = DetectRule {
            h_floor: cfg.f64_opt("detect.h_floor")?,
            u_big: cfg.f64_opt("detect.u_big")?,
            h_big: cfg.f64_opt("detect.h_big")?,
        };
        let seed = cfg.u64_or("seed", 0)?;
        cfg.finish()?;
        Ok(RunSpec {
            g,
            hbar,
            beta,
            n,
            length,
            t_end,
            courant,
            dt_min,
            kind,
            out_dir,
            snapshot_every,
            detect,
            seed,
        })
    }

    fn echo(&self) -> String {
        let mut pairs: Vec<(String, String)> = vec![
            ("model.g".into(), fmt_value(self.g)),
            ("model.hbar".into(), fmt_value(self.hbar)),
            ("model.beta".into(), fmt_value(self.beta)),
            ("grid.n".into(), self.n.to_string()),
            ("grid.length".into(), fmt_value(self.length)),
            ("time.t_end".into(), fmt_value(self.t_end)),
            ("time.courant".into(), fmt_value(self.courant)),
            ("time.dt_min".into(), fmt_value(self.dt_min)),
            ("output.dir".into(), self.out_dir.clone()),
            (
                "output.snapshot_every".into(),
                self.snapshot_every.to_string(),
            ),
            ("seed".into(), self.seed.to_string()),
        ];
        match &self.kind {
            InitKind::Flat => pairs.push(("init.kind".into(), "flat".into())),
            InitKind::Gaussian {
                amplitude,
                width,
                center,
            } => {
                pairs.push(("init.kind".into(), "gaussian".into()));
                pairs.push(("init.amplitude".into(), fmt_value(*amplitude)));
                pairs.push(("init.width".into(), fmt_value(*width)));
                pairs.push(("init.center".into(), fmt_value(*center)));
            }
            InitKind::Blowup {
                side,
                steepness,
                energy_cap,
                trace,
            } => {
                pairs.push(("init.kind".into(), "blowup".into()));
                pairs.push(("blowup.side".into(), side.as_str().into()));
                pairs.push(("blowup.steepness".into(), fmt_value(*steepness)));
                pairs.push(("blowup.energy_cap".into(), fmt_value(*energy_cap)));
                pairs.push((
                    "blowup.trace_characteristics".into(),
                    trace.to_string(),
                ));
            }
        }
        if let Some(v) = self.detect.h_floor {
            pairs.push(("detect.h_floor".into(), fmt_value(v)));
        }
        if let Some(v) = self.detect.u_big {
            pairs.push(("detect.u_big".into(), fmt_value(v)));
        }
        if let Some(v) = self.detect.h_big {
            pairs.push(("detect.h_big".into(), fmt_value(v)));
        }
        render_echo(&pairs)
    }

    fn params(&self) -> msgn::Result<ModelParams> {
        derive_params(self.g, self.hbar, self.beta)
    }

    fn grid(&self) -> msgn::Result<Grid> {
        Grid::new(self.n, self.length)
    }
}

fn build_initial(
    spec: &RunSpec,
    params: &ModelParams,
    grid: &Grid,
) -> msgn::Result<FluidState> {
    match &spec.kind {
        InitKind::Flat => FluidState::new(
            0.0,
            vec![params.hbar; grid.n],
            vec![0.0; grid.n],
            grid,
        ),
        InitKind::Gaussian {
            amplitude,
            width,
            center,
        } => gaussian_state(grid, params, *amplitude, *width, *center),
        InitKind::Blowup {
            side,
            steepness,
            energy_cap,
            ..
        } => {
            let profile = blowup_state(grid, params, *steepness, *energy_cap)?;
            Ok(match side {
                Side::Down => profile.state,
                Side::Up => reflected(&profile.state),
            })
        }
    }
}

fn run_sim(
    spec: &RunSpec,
    params: &ModelParams,
    grid: &Grid,
    initial: &FluidState,
) -> msgn::Result<Trajectory> {
    let sim = SimConfig {
        params: *params,
        grid: *grid,
        t_end: spec.t_end,
        courant: spec.courant,
        dt_min: spec.dt_min,
        snapshot_every: spec.snapshot_every,
        thresholds: spec.detect,
    };
    simulate(&sim, initial)
}

fn resolve_out(out_override: Option<&Path>, spec_dir: &str) -> PathBuf {
    match out_override {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(spec_dir),
    }
}

const SERIES_HEADER: &str = "t,dt,total_energy,min_h,min_ux,max_ux,max_abs_hx,norm_R_inf";

fn write_series(dir: &Path, traj: &Trajectory) -> Result<u64> {
    csvio::write_table(
        &dir.join("series.csv"),
        SERIES_HEADER,
        traj.series.iter().map(|r| {
            vec![
                r.t,
                r.dt,
                r.total_energy,
                r.min_h,
                r.min_ux,
                r.max_ux,
                r.max_abs_hx(),
                r.norm_r_inf,
            ]
        }),
    )
}

fn write_snapshots(dir: &Path, traj: &Trajectory, grid: &Grid) -> Result<Vec<(String, u64)>> {
    std::fs::create_dir_all(dir.join("snapshots"))
        .with_context(|| format!("cannot create {}", dir.join("snapshots").display()))?;
    let mut written = Vec::new();
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let rel = format!("snapshots/{k:04}.csv");
        let rows = csvio::write_table(
            &dir.join(&rel),
            "x,h,u",
            (0..grid.n).map(|i| vec![grid.x(i), snap.h[i], snap.u[i]]),
        )?;
        written.push((rel, rows));
    }
    Ok(written)
}

fn warn_on_wrap(traj: &Trajectory) {
    if traj.wrap_warning {
        eprintln!(
            "warning: the disturbance reached the periodic seam; late-time records are box-contaminated"
        );
    }
}

pub fn cmd_simulate(config_path: &Path, out_override: Option<&Path>) -> i32 {
    finish(simulate_inner(config_path, out_override))
}

fn simulate_inner(config_path: &Path, out_override: Option<&Path>) -> CmdResult {
    let cfg = Config::load(config_path).map_err(Failure::config)?;
    let spec = RunSpec::from_config(&cfg).map_err(Failure::config)?;
    let params = spec.params().map_err(|e| Failure::config(e.into()))?;
    let grid = spec.grid().map_err(|e| Failure::config(e.into()))?;
    let initial = build_initial(&spec, &params, &grid).map_err(|e| Failure::config(e.into()))?;
    let traj = run_sim(&spec, &params, &grid, &initial).map_err(|e| Failure::internal(e.into()))?;
    warn_on_wrap(&traj);

    let dir = resolve_out(out_override, &spec.out_dir);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::internal)?;

    let mut man = RunManifest::new(spec.seed, spec.echo());
    let rows = write_series(&dir, &traj).map_err(Failure::internal)?;
    man.record("series.csv", rows);
    for (rel, rows) in write_snapshots(&dir, &traj, &grid).map_err(Failure::internal)? {
        man.record(&rel, rows);
    }
    man.termination = Some(traj.termination.termination.as_str().to_string());
    man.hx_side = Some(traj.termination.hx_side.as_str().to_string());
    man.write(&dir).map_err(Failure::internal)?;

    Ok(termination_code(traj.termination.termination))
}

/// Resolved dispersion-table request.
#[derive(Debug, Clone)]
struct DispersionSpec {
    g: f64,
    hbar: f64,
    betas: Vec<f64>,
    khbars: Vec<f64>,
    measure: bool,
    measure_amplitude: f64,
    grid: Option<(usize, f64)>,
    out_dir: String,
    seed: u64,
}

impl DispersionSpec {
    fn from_config(cfg: &Config) -> Result<DispersionSpec> {
        let g = cfg.f64_or("model.g", 9.81)?;
        let hbar = cfg.f64_or("model.hbar", 1.0)?;
        let betas = cfg.f64_list_req("model.beta")?;
        let khbars = cfg.f64_list_req("sweep.khbar")?;
        let measure = cfg.bool_or("measure.enabled", false)?;
        let measure_amplitude = cfg.f64_or("measure.amplitude", 1e-5)?;
        let grid = if measure {
            Some((cfg.usize_req("grid.n")?, cfg.f64_req("grid.length")?))
        } else {
            None
        };
        let out_dir = cfg.string_or("output.dir", "out");
        let seed = cfg.u64_or("seed", 0)?;
        cfg.finish()?;
        for &b in &betas {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(anyhow!("key 'model.beta': entries must be >= 0, got {b}"));
            }
            if measure && b == 0.0 {
                return Err(anyhow!(
                    "key 'model.beta': beta = 0 cannot be measured (the model needs beta > 0); drop it or disable measure"
                ));
            }
        }
        for &k in &khbars {
            if !(k >= 0.0) || !k.is_finite() {
                return Err(anyhow!("key 'sweep.khbar': entries must be >= 0, got {k}"));
            }
            if measure && k == 0.0 {
                return Err(anyhow!(
                    "key 'sweep.khbar': the k = 0 limit cannot be measured; drop it or disable measure"
                ));
            }
        }
        Ok(DispersionSpec {
            g,
            hbar,
            betas,
            khbars,
            measure,
            measure_amplitude,
            grid,
            out_dir,
            seed,
        })
    }

    fn echo(&self) -> String {
        let join = |vals: &[f64]| {
            vals.iter()
                .map(|&v| fmt_value(v))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut pairs: Vec<(String, String)> = vec![
            ("model.g".into(), fmt_value(self.g)),
            ("model.hbar".into(), fmt_value(self.hbar)),
            ("model.beta".into(), join(&self.betas)),
            ("sweep.khbar".into(), join(&self.khbars)),
            ("measure.enabled".into(), self.measure.to_string()),
            ("output.dir".into(), self.out_dir.clone()),
            ("seed".into(), self.seed.to_string()),
        ];
        if self.measure {
            pairs.push((
                "measure.amplitude".into(),
                fmt_value(self.measure_amplitude),
            ));
            if let Some((n, length)) = self.grid {
                pairs.push(("grid.n".into(), n.to_string()));
                pairs.push(("grid.length".into(), fmt_value(length)));
            }
        }
        render_echo(&pairs)
    }
}

const DISPERSION_HEADER: &str = "beta,khbar,msgn,exact,rel_error,c4_model,c4_exact";

pub fn cmd_dispersion(config_path: &Path, out_override: Option<&Path>) -> i32 {
    finish(dispersion_inner(config_path, out_override))
}

fn dispersion_inner(config_path: &Path, out_override: Option<&Path>) -> CmdResult {
    let cfg = Config::load(config_path).map_err(Failure::config)?;
    let spec = DispersionSpec::from_config(&cfg).map_err(Failure::config)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let c4_exact = 2.0 / 15.0;
    for &beta in &spec.betas {
        let c4_model = 1.0 / 9.0 + beta / 6.0;
        let measured_setup = if spec.measure {
            let params =
                derive_params(spec.g, spec.hbar, beta).map_err(|e| Failure::config(e.into()))?;
            let (n, length) = spec.grid.expect("grid keys required when measuring");
            let grid = Grid::new(n, length).map_err(|e| Failure::config(e.into()))?;
            Some((params, grid))
        } else {
            None
        };
        for &khbar in &spec.khbars {
            let model = msgn::dispersion::msgn_phase_speed_sq(khbar, beta);
            let exact = msgn::dispersion::exact_phase_speed_sq(khbar);
            let rel_error = (model - exact).abs() / exact;
            let mut row = vec![beta, khbar, model, exact, rel_error, c4_model, c4_exact];
            if let Some((params, grid)) = &measured_setup {
                let measured = msgn::dispersion::measure_phase_speed_sq(
                    params,
                    grid,
                    khbar,
                    spec.measure_amplitude,
                )
                .map_err(|e| Failure::config(e.into()))?;
                row.push(measured);
            }
            rows.push(row);
        }
    }

    let dir = resolve_out(out_override, &spec.out_dir);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::internal)?;
    let header = if spec.measure {
        format!("{DISPERSION_HEADER},measured")
    } else {
        DISPERSION_HEADER.to_string()
    };
    let mut man = RunManifest::new(spec.seed, spec.echo());
    let nrows =
        csvio::write_table(&dir.join("dispersion.csv"), &header, rows).map_err(Failure::internal)?;
    man.record("dispersion.csv", nrows);
    man.write(&dir).map_err(Failure::internal)?;
    Ok(0)
}

pub fn cmd_bounds(energy: f64, g: f64, hbar: f64, beta: f64) -> i32 {
    let params = match derive_params(g, hbar, beta) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match msgn::diagnostics::prop_bounds(&params, energy) {
        Ok(b) => {
            let doc = json!({
                "h_min": b.h_min,
                "h_max": b.h_max,
                "u_min": b.u_min,
                "u_max": b.u_max,
                "energy_threshold": params.energy_threshold,
            });
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
            0
        }
        Err(msgn::Error::EnergyAboveThreshold { energy, threshold }) => {
            let doc = json!({
                "error": "energy is not below the admissible threshold",
                "energy": energy,
                "energy_threshold": threshold,
            });
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn cmd_blowup(config_path: &Path, out_override: Option<&Path>) -> i32 {
    finish(blowup_inner(config_path, out_override))
}

fn blowup_inner(config_path: &Path, out_override: Option<&Path>) -> CmdResult {
    let cfg = Config::load(config_path).map_err(Failure::config)?;
    let spec = RunSpec::from_config(&cfg).map_err(Failure::config)?;
    let InitKind::Blowup {
        side,
        steepness,
        energy_cap,
        trace,
    } = spec.kind
    else {
        return Err(Failure::config(anyhow!(
            "the blowup command requires init.kind = blowup"
        )));
    };
    let params = spec.params().map_err(|e| Failure::config(e.into()))?;
    let grid = spec.grid().map_err(|e| Failure::config(e.into()))?;

    if energy_cap >= params.energy_threshold {
        return Err(Failure::infeasible(format!(
            "energy cap {:.6e} is outside the admissible interval K in ]0, (g sqrt(beta) / (3 sqrt 2)) hbar^3[ = ]0, {:.6e}[",
            energy_cap, params.energy_threshold
        )));
    }

    let profile = blowup_state(&grid, &params, steepness, energy_cap).map_err(|e| match e {
        msgn::Error::InfeasibleProfile { .. } => Failure::infeasible(e.to_string()),
        other => Failure::config(other.into()),
    })?;
    let initial = match side {
        Side::Down => profile.state,
        Side::Up => reflected(&profile.state),
    };

    let traj = run_sim(&spec, &params, &grid, &initial).map_err(|e| Failure::internal(e.into()))?;
    warn_on_wrap(&traj);

    let dir = resolve_out(out_override, &spec.out_dir);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::internal)?;
    let mut man = RunManifest::new(spec.seed, spec.echo());
    let rows = write_series(&dir, &traj).map_err(Failure::internal)?;
    man.record("series.csv", rows);

    if trace {
        let (files, verdict) =
            trace_and_judge(&traj, &params, &grid, side).map_err(Failure::internal)?;
        for (rel, content) in files {
            let rows = write_trace_file(&dir, rel, content).map_err(Failure::internal)?;
            man.record(rel, rows);
        }
        let mut text = serde_json::to_string_pretty(&verdict).map_err(|e| Failure::internal(e.into()))?;
        text.push('\n');
        std::fs::write(dir.join("verdict.json"), text)
            .with_context(|| format!("cannot write {}", dir.join("verdict.json").display()))
            .map_err(Failure::internal)?;
        man.record("verdict.json", 0);
    }

    man.termination = Some(traj.termination.termination.as_str().to_string());
    man.hx_side = Some(traj.termination.hx_side.as_str().to_string());
    man.write(&dir).map_err(Failure::internal)?;
    Ok(termination_code(traj.termination.termination))
}

fn write_trace_file(dir: &Path, rel: &str, content: (String, Vec<String>)) -> Result<u64> {
    csvio::write_lines(&dir.join(rel), &content.0, &content.1)
}

type TraceFiles = Vec<(&'static str, (String, Vec<String>))>;

/// Trace the steep-face characteristic pair, evaluate the Riccati and
/// envelope monitors, and assemble the verdict document.
fn trace_and_judge(
    traj: &Trajectory,
    params: &ModelParams,
    grid: &Grid,
    side: Side,
) -> Result<(TraceFiles, serde_json::Value)> {
    let class = traj.termination;
    let mut verdict = serde_json::Map::new();
    verdict.insert(
        "termination".into(),
        json!(class.termination.as_str()),
    );
    verdict.insert("hx_side".into(), json!(class.hx_side.as_str()));
    verdict.insert("side".into(), json!(side.as_str()));

    let mut files: TraceFiles = vec![
        (
            "characteristics.csv",
            (
                "t,X,P_along_X,Q_along_X,Y,P_along_Y,Q_along_Y".to_string(),
                Vec::new(),
            ),
        ),
        (
            "riccati_residuals.csv",
            ("t,family,residual".to_string(), Vec::new()),
        ),
    ];

    if traj.snapshots.len() < 2 {
        verdict.insert("traced".into(), json!(false));
        return Ok((files, serde_json::Value::Object(verdict)));
    }

    // The steep face carries the most negative slope of the family that
    // the experiment drives: P for a down-slope seed, Q for its mirror.
    let f0 = riemann_fields(&traj.snapshots[0], params, grid);
    let argmin = |v: &[f64]| {
        let mut best = 0;
        for i in 1..v.len() {
            if v[i] < v[best] {
                best = i;
            }
        }
        best
    };
    let offset = (2.0 * params.hbar).min(grid.length / 8.0);
    let (x_origin, y_origin) = match side {
        Side::Down => {
            let x = grid.x(argmin(&f0.p));
            (x, x + offset)
        }
        Side::Up => {
            let y = grid.x(argmin(&f0.q));
            (y - offset, y)
        }
    };

    let xpath = characteristics::trace(traj, params, grid, x_origin, Family::Lambda)?;
    let ypath = characteristics::trace(traj, params, grid, y_origin, Family::Mu)?;

    let m = xpath.times.len().min(ypath.times.len());
    let char_rows: Vec<String> = (0..m)
        .map(|k| {
            [
                xpath.times[k],
                xpath.positions[k],
                xpath.p[k],
                xpath.q[k],
                ypath.positions[k],
                ypath.p[k],
                ypath.q[k],
            ]
            .iter()
            .map(|&v| csvio::fmt(v))
            .collect::<Vec<_>>()
            .join(",")
        })
        .collect();
    files[0].1 .1 = char_rows;

    let mut riccati_rows = Vec::new();
    for (path, family) in [(&xpath, "lambda"), (&ypath, "mu")] {
        if path.times.len() >= 3 {
            let series = characteristics::riccati_residual(path, traj, params, grid)?;
            for (t, r) in series.times.iter().zip(&series.residual) {
                riccati_rows.push(format!("{},{family},{}", csvio::fmt(*t), csvio::fmt(*r)));
            }
        }
    }
    files[1].1 .1 = riccati_rows;

    let steep_face = match side {
        Side::Down => grid.x(argmin(&f0.p)),
        Side::Up => grid.x(argmin(&f0.q)),
    };
    let fan: Vec<f64> = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
        .iter()
        .map(|&s| (steep_face + s * params.hbar).rem_euclid(grid.length))
        .collect();
    let fan_paths = characteristics::trace_many(traj, params, grid, &fan, Family::Mu)?;

    let min_p = xpath.p.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_abs_q = ypath.q.iter().fold(0.0_f64, |m, &q| m.max(q.abs()));
    for path in &fan_paths {
        for &q in &path.q {
            max_abs_q = max_abs_q.max(q.abs());
        }
    }

    verdict.insert("traced".into(), json!(true));
    verdict.insert("x_origin".into(), json!(x_origin));
    verdict.insert("y_origin".into(), json!(y_origin));
    verdict.insert("min_p".into(), json!(min_p));
    verdict.insert("max_abs_q".into(), json!(max_abs_q));

    let qb = characteristics::qb_bound_check(traj, params, grid, &fan)?;
    verdict.insert("c_tilde".into(), json!(qb.c_tilde));
    verdict.insert(
        "fit".into(),
        json!({
            "a": qb.a_fit,
            "b": qb.b_fit,
            "sigma": qb.sigma,
            "upper_fraction_ok": qb.upper_fraction_ok,
            "upper_worst_margin": qb.upper_worst_margin,
            "lower_fraction_ok": qb.lower_fraction_ok,
            "lower_worst_margin": qb.lower_worst_margin,
            "samples": qb.samples,
        }),
    );

    let (x1, x2) = (x_origin.min(y_origin), x_origin.max(y_origin));
    let lemma5 = characteristics::lemma5_integrals(traj, params, grid, x1, x2)?;
    verdict.insert(
        "lemma5".into(),
        json!({
            "q2_along_lambda": lemma5.q2_along_lambda,
            "p2_along_mu": lemma5.p2_along_mu,
            "t_intersect": lemma5.t_intersect,
        }),
    );

    if !traj.series.is_empty() {
        let mrows = traj.series.len();
        let window = (mrows / 10).max(2).min(mrows);
        let k0 = mrows - window;
        let first = &traj.series[k0];
        let last = &traj.series[mrows - 1];
        let ratio = |start: f64, end: f64| {
            if start != 0.0 {
                end / start
            } else {
                f64::INFINITY
            }
        };
        let min_h_overall = traj
            .series
            .iter()
            .fold(f64::INFINITY, |m, r| m.min(r.min_h));
        verdict.insert(
            "final_decade".into(),
            json!({
                "rows": window,
                "t_start": first.t,
                "t_end": last.t,
                "min_ux_start": first.min_ux,
                "min_ux_end": last.min_ux,
                "min_ux_growth": ratio(first.min_ux, last.min_ux),
                "max_abs_hx_start": first.max_abs_hx(),
                "max_abs_hx_end": last.max_abs_hx(),
                "max_abs_hx_growth": ratio(first.max_abs_hx(), last.max_abs_hx()),
                "min_h": min_h_overall,
            }),
        );
    }

    Ok((files, serde_json::Value::Object(verdict)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_from(text: &str) -> RunSpec {
        let cfg = Config::parse(text).unwrap();
        RunSpec::from_config(&cfg).unwrap()
    }

    #[test]
    fn echo_parses_back_to_the_same_spec() {
        let spec = spec_from(
            "grid.n = 64\ngrid.length = 8\ntime.t_end = 0.1\ninit.kind = gaussian\ninit.amplitude = 0.05\ninit.width = 1.5\n",
        );
        let echoed = spec_from(&spec.echo());
        assert_eq!(format!("{spec:?}"), format!("{echoed:?}"));
        // Defaults resolved in the echo.
        assert!(spec.echo().contains("init.center = 4\n"));
        assert!(spec.echo().contains("time.courant = 0.3\n"));
    }

    #[test]
    fn blowup_echo_round_trips_detect_overrides() {
        let spec = spec_from(
            "grid.n = 64\ngrid.length = 12\ntime.t_end = 0.5\ninit.kind = blowup\nblowup.steepness = 2.0\nblowup.energy_cap = 0.3\ndetect.u_big = 25\n",
        );
        let echoed = spec_from(&spec.echo());
        assert_eq!(format!("{spec:?}"), format!("{echoed:?}"));
        assert_eq!(echoed.detect.u_big, Some(25.0));
        assert_eq!(echoed.detect.h_floor, None);
    }

    #[test]
    fn unknown_init_kind_is_a_config_error() {
        let cfg = Config::parse("grid.n = 64\ngrid.length = 8\ntime.t_end = 0.1\ninit.kind = soliton\n").unwrap();
        let err = RunSpec::from_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("soliton"), "{err}");
    }

    #[test]
    fn termination_codes_match_the_contract() {
        assert_eq!(termination_code(Termination::ReachedTEnd), 0);
        assert_eq!(termination_code(Termination::BlowupSuspected), 10);
        assert_eq!(termination_code(Termination::DepthVanishing), 11);
        assert_eq!(termination_code(Termination::DtUnderflow), 12);
        assert_eq!(termination_code(Termination::Instability), 13);
    }
}

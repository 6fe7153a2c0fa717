use std::fmt;
use std::path::{Path, PathBuf};

use rabisim::calibration::{extract_swap_time, ramp_coherence_study, sweep_tau, SweepProtocol, SweepTemplate};
use rabisim::config::{load_config, RunConfig};
use rabisim::dynamics::{default_dt_max, EvolveOptions, Sampling, Segment, Trajectory};
use rabisim::hilbert::Frame;
use rabisim::model::{effective_coupling, Mode, SystemParams};
use rabisim::protocols::{
    analytic_timings, bell_schedule, fock_generation_schedule, outcome, prepare, swap_schedule, ProtocolRun,
    PulseSchedule, RampSpec, RunOptions, TimingTable,
};
use rabisim::report::{heatmap_svg, line_plot_svg};
use rabisim::tomography::{char_function, joint_char_function, postselect_ground, CharGrid};
use rabisim::validate::run_validation;
use rabisim::Error;
use serde_json::json;

use crate::output::Emitter;
use crate::{Command, Common, FrameArg, SweepArg, TrajectoryArg};

const DEFAULT_CONFIG: &str = "paper_params.json";
const TRAJECTORY_POINTS: usize = 201;
const CHAR_EXTENT: f64 = 2.5;
const CHAR_POINTS: usize = 51;
const JOINT_EXTENT: f64 = 2.0;
const JOINT_POINTS: usize = 41;
const NORM_DRIFT_LIMIT: f64 = 1e-6;
const NEGATIVITY_LIMIT: f64 = -1e-8;

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
    Invariant(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_numerical() => 2,
            Failure::Core(_) | Failure::Usage(_) => 1,
            Failure::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Invariant(m) => write!(f, "invariant failed: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Resolved settings shared by every subcommand.
struct Context {
    config: RunConfig,
    frame: Frame,
    decoherence: bool,
    fock_dim: Option<usize>,
    workers: usize,
    emitter: Emitter,
}

impl Context {
    fn new(common: &Common) -> Outcome<Self> {
        let config = resolve_config(common.config.as_deref())?;
        let frame = match common.frame {
            Some(FrameArg::Jc) => Frame::JcFrame,
            Some(FrameArg::Drive) => Frame::DriveFrame,
            None => config.simulation.frame,
        };
        if common.fock_dim.is_some_and(|d| d < 2) {
            return Err(Failure::Usage("--fock-dim needs at least 2 levels".into()));
        }
        if common.workers == Some(0) {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        let svg = match (common.svg, common.no_svg) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        };
        let dir = common.out.clone().unwrap_or_else(|| config.output.directory.clone());
        let emitter = Emitter::new(&dir, &config.output.formats, svg)?;
        Ok(Self {
            frame,
            decoherence: !common.ideal,
            fock_dim: common.fock_dim.or(config.simulation.fock_dim),
            workers: common.workers.unwrap_or(config.simulation.workers),
            emitter,
            config,
        })
    }

    fn params(&self) -> &SystemParams {
        &self.config.system
    }

    fn ramps(&self) -> RampSpec {
        let len = self.config.protocol.ramp_ns * 1e-3;
        RampSpec { sideband_us: len, rabi_us: len, shape: self.config.protocol.ramp_shape }
    }

    fn run_options(&self, sampling: Sampling) -> RunOptions {
        let sim = &self.config.simulation;
        let dt = sim.dt_max.unwrap_or_else(|| default_dt_max(self.frame, self.params()));
        let evolve = EvolveOptions::new(dt).with_tolerance(sim.tolerances.rtol, sim.tolerances.atol).with_sampling(sampling);
        RunOptions {
            fock_dim: self.fock_dim,
            decoherence: self.decoherence,
            evolve: Some(evolve),
            ..RunOptions::ideal(self.frame)
        }
    }

    fn n(&self, flag: Option<usize>) -> Outcome<usize> {
        match flag.unwrap_or(self.config.protocol.n) {
            0 => Err(Failure::Usage("--n must be at least 1".into())),
            n => Ok(n),
        }
    }

    fn frame_name(&self) -> &'static str {
        frame_name(self.frame)
    }

    fn base_summary(&self, command: &str) -> serde_json::Value {
        json!({
            "command": command,
            "frame": self.frame_name(),
            "decoherence": self.decoherence,
            "fock_dim": self.fock_dim,
        })
    }
}

fn frame_name(frame: Frame) -> &'static str {
    match frame {
        Frame::JcFrame => "jc",
        Frame::DriveFrame => "drive",
    }
}

/// An explicit `--config` must exist; the default path is optional.
fn resolve_config(path: Option<&Path>) -> Outcome<RunConfig> {
    match path {
        Some(p) => Ok(load_config(p).map_err(|e| with_path(e, p))?),
        None => {
            let p = PathBuf::from(DEFAULT_CONFIG);
            if p.exists() {
                Ok(load_config(&p).map_err(|e| with_path(e, &p))?)
            } else {
                log::warn!("{DEFAULT_CONFIG} not found, using built-in device parameters");
                Ok(RunConfig::paper())
            }
        }
    }
}

fn with_path(e: Error, path: &Path) -> Failure {
    match e {
        Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", path.display())),
        other => Failure::Core(other),
    }
}

pub fn run(common: &Common, command: &Command) -> Outcome {
    let mut ctx = Context::new(common)?;
    match command {
        Command::Fock { n } => fock(&mut ctx, *n),
        Command::Swap { n } => swap(&mut ctx, *n),
        Command::Bell => bell(&mut ctx),
        Command::Calibrate { protocol, n, tmin, tmax, steps } => calibrate(&mut ctx, *protocol, *n, *tmin, *tmax, *steps),
        Command::Trajectory { protocol: TrajectoryArg::Swap, n, until, samples } => trajectory(&mut ctx, *n, *until, *samples),
        Command::RampStudy { n, ramps_ns, multipliers } => ramp_study(&mut ctx, n, ramps_ns, multipliers),
        Command::Validate => validate(&mut ctx),
    }?;
    for path in ctx.emitter.written() {
        println!("{}", path.display());
    }
    Ok(())
}

fn check_run(run: &ProtocolRun) -> Outcome {
    let t = &run.trajectory;
    if t.norm_drift > NORM_DRIFT_LIMIT {
        return Err(Failure::Invariant(format!("trace drifted by {:e}", t.norm_drift)));
    }
    if t.min_eigenvalue < NEGATIVITY_LIMIT {
        return Err(Failure::Invariant(format!("state lost positivity (min eigenvalue {:e})", t.min_eigenvalue)));
    }
    Ok(())
}

fn simulate(ctx: &Context, schedule: &PulseSchedule, sampling: Sampling) -> Outcome<ProtocolRun> {
    let run = prepare(schedule, ctx.params(), &ctx.run_options(sampling))?.run()?;
    check_run(&run)?;
    Ok(run)
}

fn run_summary(run: &ProtocolRun) -> serde_json::Value {
    let t = &run.trajectory;
    json!({
        "layout": run.layout.labels(),
        "dims": run.layout.dims(),
        "final": t.columns.iter().map(|c| (c.clone(), json!(t.last(c)))).collect::<serde_json::Map<_, _>>(),
        "norm_drift": t.norm_drift,
        "min_eigenvalue": t.min_eigenvalue,
        "steps_accepted": t.steps_accepted,
        "steps_rejected": t.steps_rejected,
    })
}

fn write_trajectory(ctx: &mut Context, stem: &str, trajectory: &Trajectory, plotted: &[&str]) -> Outcome {
    ctx.emitter.csv(&format!("{stem}_trajectory.csv"), |buf| trajectory.write_csv(buf))?;
    let series: Vec<(&str, Vec<f64>)> =
        plotted.iter().filter_map(|c| trajectory.column(c).map(|v| (*c, v))).collect();
    ctx.emitter.svg(&format!("{stem}_trajectory.svg"), || {
        let refs: Vec<(&str, &[f64])> = series.iter().map(|(c, v)| (*c, v.as_slice())).collect();
        line_plot_svg(stem, "t (us)", &trajectory.times, &refs)
    })?;
    Ok(())
}

fn write_char_map(ctx: &mut Context, stem: &str, run: &ProtocolRun, mode: Mode) -> Outcome<f64> {
    let (post, prob) = postselect_ground(run.final_state())?;
    let grid = CharGrid::square(CHAR_EXTENT, CHAR_POINTS)?;
    let map = char_function(&post, mode.label(), &grid)?;
    ctx.emitter.csv(&format!("{stem}_char.csv"), |buf| map.write_csv(buf))?;
    let re: Vec<f64> = map.values.iter().map(|c| c.re).collect();
    ctx.emitter.svg(&format!("{stem}_char.svg"), || {
        heatmap_svg(&format!("{stem}: Re C({mode})"), "Re alpha", "Im alpha", &grid.re_axis, &grid.im_axis, &re)
    })?;
    Ok(prob)
}

fn timing_json(t: &TimingTable, n: usize, primes: bool) -> serde_json::Value {
    let pick = |k: usize| if primes { t.tau_prime(k).ok() } else { t.tau(k).ok() };
    json!((1..=n).map(pick).collect::<Vec<_>>())
}

fn fock(ctx: &mut Context, n: Option<usize>) -> Outcome {
    let n = ctx.n(n)?;
    let g = effective_coupling(ctx.params(), Mode::Mem1)?;
    let timings = analytic_timings(g, n)?;
    let schedule = fock_generation_schedule(n, &timings, ctx.ramps(), ctx.frame)?;
    let run = simulate(ctx, &schedule, Sampling::Uniform(TRAJECTORY_POINTS))?;
    let result = outcome(&schedule, &run)?;
    let stem = format!("fock_n{n}");
    write_trajectory(ctx, &stem, &run.trajectory, &["n_mem1", "sigma_z"])?;
    write_char_map(ctx, &stem, &run, Mode::Mem1)?;
    ctx.emitter.json_text(&format!("{stem}_schedule.json"), &schedule.with_frame(ctx.frame).to_json()?)?;
    let mut summary = ctx.base_summary("fock");
    summary["n"] = json!(n);
    summary["effective_coupling_mhz"] = json!(g);
    summary["tau1_analytic_us"] = json!(timings.tau(1)?);
    summary["tau_us"] = timing_json(&timings, n, false);
    summary["fidelity"] = json!(result.fidelity);
    summary["postselect_prob"] = json!(result.postselect_prob);
    summary["run"] = run_summary(&run);
    ctx.emitter.json(&format!("{stem}_summary.json"), &summary)?;
    eprintln!("fock n={n}: fidelity {:.6}, P(g) {:.6}", result.fidelity, result.postselect_prob);
    Ok(())
}

/// Analytic `tau'_1`; higher `n` use the extracted maximum of `<n_2>`.
fn swap_timings(params: &SystemParams, n: usize) -> Outcome<(TimingTable, &'static str)> {
    let g = effective_coupling(params, Mode::Mem1)?;
    let mut timings = analytic_timings(g, n)?;
    if n == 1 {
        return Ok((timings, "analytic"));
    }
    let extracted = extract_swap_time(n, params, None)?;
    timings.set_tau_prime(n, extracted.tau_prime);
    Ok((timings, "extracted"))
}

fn swap(ctx: &mut Context, n: Option<usize>) -> Outcome {
    let n = ctx.n(n)?;
    let (timings, source) = swap_timings(ctx.params(), n)?;
    let schedule = swap_schedule(n, &timings, ctx.ramps(), ctx.frame)?;
    let run = simulate(ctx, &schedule, Sampling::Uniform(TRAJECTORY_POINTS))?;
    let result = outcome(&schedule, &run)?;
    let stem = format!("swap_n{n}");
    write_trajectory(ctx, &stem, &run.trajectory, &["n_mem1", "n_mem2", "sigma_z"])?;
    write_char_map(ctx, &stem, &run, Mode::Mem2)?;
    ctx.emitter.json_text(&format!("{stem}_schedule.json"), &schedule.with_frame(ctx.frame).to_json()?)?;
    let mut summary = ctx.base_summary("swap");
    summary["n"] = json!(n);
    summary["tau_prime_us"] = json!(timings.tau_prime(n)?);
    summary["tau_prime_source"] = json!(source);
    summary["fidelity"] = json!(result.fidelity);
    summary["postselect_prob"] = json!(result.postselect_prob);
    summary["run"] = run_summary(&run);
    ctx.emitter.json(&format!("{stem}_summary.json"), &summary)?;
    eprintln!("swap n={n}: fidelity {:.6}, P(g) {:.6}", result.fidelity, result.postselect_prob);
    Ok(())
}

fn bell(ctx: &mut Context) -> Outcome {
    let g = effective_coupling(ctx.params(), Mode::Mem1)?;
    let timings = analytic_timings(g, 1)?;
    let schedule = bell_schedule(&timings, ctx.ramps(), ctx.frame)?;
    let run = simulate(ctx, &schedule, Sampling::Uniform(TRAJECTORY_POINTS))?;
    let result = outcome(&schedule, &run)?;
    write_trajectory(ctx, "bell", &run.trajectory, &["n_mem1", "n_mem2", "sigma_z"])?;
    let (post, _) = postselect_ground(run.final_state())?;
    let grid = CharGrid::square(JOINT_EXTENT, JOINT_POINTS)?;
    let slices = joint_char_function(&post, &grid)?;
    for slice in &slices {
        let name = slice.slice.name();
        ctx.emitter.csv(&format!("bell_joint_{name}.csv"), |buf| slice.write_csv(buf))?;
        let re: Vec<f64> = slice.values.iter().map(|c| c.re).collect();
        let (xl, yl) = name.split_once('_').unwrap_or((name, name));
        ctx.emitter.svg(&format!("bell_joint_{name}.svg"), || {
            heatmap_svg(
                &format!("Re C(alpha, beta), {name} slice"),
                &format!("{xl} alpha"),
                &format!("{yl} beta"),
                &grid.re_axis,
                &grid.im_axis,
                &re,
            )
        })?;
    }
    ctx.emitter.json_text("bell_schedule.json", &schedule.with_frame(ctx.frame).to_json()?)?;
    let mut summary = ctx.base_summary("bell");
    summary["hold_us"] = json!(timings.tau_prime(1)? / 4.0);
    summary["fidelity"] = json!(result.fidelity);
    summary["postselect_prob"] = json!(result.postselect_prob);
    summary["slices"] = json!(slices.iter().map(|s| s.slice.name()).collect::<Vec<_>>());
    summary["run"] = run_summary(&run);
    ctx.emitter.json("bell_summary.json", &summary)?;
    eprintln!("bell: fidelity {:.6}, P(g) {:.6}", result.fidelity, result.postselect_prob);
    Ok(())
}

fn calibrate(
    ctx: &mut Context,
    protocol: SweepArg,
    n: Option<usize>,
    tmin: Option<f64>,
    tmax: Option<f64>,
    steps: usize,
) -> Outcome {
    let n = ctx.n(n)?;
    let sweep_protocol = match protocol {
        SweepArg::Fock => SweepProtocol::Fock,
        SweepArg::Swap => SweepProtocol::Swap,
    };
    let mut template = SweepTemplate::new(sweep_protocol, ctx.params(), n)?;
    template.frame = ctx.frame;
    template.workers = ctx.workers;
    if ctx.frame == Frame::DriveFrame {
        template.ramps = ctx.ramps();
    }
    if ctx.fock_dim.is_some() {
        log::warn!("calibrate uses the default truncation; --fock-dim is ignored");
    }
    let guess = match sweep_protocol {
        SweepProtocol::Fock => template.timings.tau(n)?,
        SweepProtocol::Swap => {
            let (t, _) = swap_timings(ctx.params(), n)?;
            t.tau_prime(n)?
        }
    };
    let range = (tmin.unwrap_or(0.5 * guess), tmax.unwrap_or(1.5 * guess));
    let sweep = sweep_tau(&template, n, range, steps, ctx.params(), ctx.decoherence)?;
    let name = match protocol {
        SweepArg::Fock => "fock",
        SweepArg::Swap => "swap",
    };
    let stem = format!("calibrate_{name}_n{n}");
    ctx.emitter.csv(&format!("{stem}.csv"), |buf| sweep.write_csv(buf))?;
    ctx.emitter.json_text(&format!("{stem}.json"), &sweep.metadata_json()?)?;
    ctx.emitter.svg(&format!("{stem}.svg"), || {
        line_plot_svg(&stem, "tau (us)", &sweep.grid, &[(sweep.objective_name.as_str(), &sweep.objective)])
    })?;
    let e = &sweep.extremum;
    eprintln!("calibrate {name} n={n}: maximum at {:.4} us (grid {:.4} us)", e.fit_location, e.grid_location);
    Ok(())
}

fn trajectory(ctx: &mut Context, n: Option<usize>, until: Option<f64>, samples: usize) -> Outcome {
    let n = ctx.n(n)?;
    if samples < 2 {
        return Err(Failure::Usage("--samples must be at least 2".into()));
    }
    let g = effective_coupling(ctx.params(), Mode::Mem1)?;
    let mut timings = analytic_timings(g, n)?;
    let until = until.unwrap_or(4.0 * timings.tau_prime(1)?);
    if !(until > 0.0 && until.is_finite()) {
        return Err(Failure::Usage("--until must be positive".into()));
    }
    timings.set_tau_prime(n, until);
    let schedule = swap_schedule(n, &timings, RampSpec::none(), ctx.frame)?;
    // Samples span the hold, stopping short of the closing pulse at its end.
    let probe = prepare(&schedule, ctx.params(), &ctx.run_options(Sampling::Final))?;
    let start = probe
        .program
        .segments
        .iter()
        .zip(probe.program.segment_starts())
        .find_map(|(s, t0)| matches!(s, Segment::Evolve { label, .. } if label.starts_with("hold_")).then_some(t0))
        .ok_or_else(|| Failure::Core(Error::InvalidSchedule("swap schedule has no hold".into())))?;
    let times: Vec<f64> = (0..samples).map(|k| start + until * k as f64 / samples as f64).collect();
    let run = simulate(ctx, &schedule, Sampling::Times(times))?;
    let stem = format!("trajectory_swap_n{n}");
    write_trajectory(ctx, &stem, &run.trajectory, &["n_mem1", "n_mem2"])?;
    let mut summary = ctx.base_summary("trajectory");
    summary["protocol"] = json!("swap");
    summary["n"] = json!(n);
    summary["hold_us"] = json!(until);
    summary["samples"] = json!(samples);
    let n2 = run.trajectory.column("n_mem2").unwrap_or_default();
    if let Some((k, v)) = n2.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
        summary["max_n_mem2"] = json!(v);
        summary["max_n_mem2_time_us"] = json!(run.trajectory.times[k] - start);
    }
    summary["run"] = run_summary(&run);
    ctx.emitter.json(&format!("{stem}_summary.json"), &summary)?;
    Ok(())
}

fn ramp_study(ctx: &mut Context, n_list: &[usize], ramps_ns: &[f64], multipliers: &[f64]) -> Outcome {
    if ctx.frame != Frame::DriveFrame {
        log::info!("ramp study always runs in the drive frame");
    }
    if !ctx.decoherence {
        log::warn!("ramp study always includes decoherence; --ideal is ignored");
    }
    let table = ramp_coherence_study(n_list, ramps_ns, multipliers, ctx.params(), ctx.workers)?;
    ctx.emitter.csv("ramp_study.csv", |buf| table.write_csv(buf))?;
    ctx.emitter.json("ramp_study.json", &json!({ "frame": "drive", "decoherence": true, "rows": table.rows }))?;
    let panels: Vec<(String, Vec<(usize, f64)>)> = ramps_ns
        .iter()
        .flat_map(|r| multipliers.iter().map(move |m| (*r, *m)))
        .map(|(r, m)| (format!("{r} ns, x{m}"), table.panel(r, m)))
        .collect();
    if let Some((_, first)) = panels.first() {
        let x: Vec<f64> = first.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<(String, Vec<f64>)> =
            panels.iter().map(|(name, p)| (name.clone(), p.iter().map(|q| q.1).collect())).collect();
        ctx.emitter.svg("ramp_study.svg", || {
            let refs: Vec<(&str, &[f64])> = ys.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
            line_plot_svg("generation fidelity", "n", &x, &refs)
        })?;
    }
    for row in &table.rows {
        eprintln!("n={} ramp={} ns x{}: fidelity {:.4}", row.n, row.ramp_ns, row.coherence_mult, row.fidelity);
    }
    Ok(())
}

fn validate(ctx: &mut Context) -> Outcome {
    let report = run_validation(ctx.params());
    ctx.emitter.json_text("validate.json", &report.to_json_deterministic()?)?;
    for c in &report.checks {
        let value = c.value.map_or_else(|| "n/a".to_string(), |v| format!("{v:e}"));
        eprintln!("{} {}::{} = {value}", if c.passed { "PASS" } else { "FAIL" }, c.module, c.name);
    }
    let failed: Vec<String> = report.failures().map(|c| format!("{}::{}", c.module, c.name)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(failed.join(", ")))
    }
}

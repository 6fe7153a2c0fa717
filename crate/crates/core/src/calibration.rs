//! Hold-time calibration sweeps, SWAP-time extraction and the ramp/coherence
//! fidelity study.
//!
//! Sweeps maximize the final qubit polarization `<sigma_z>`: with `sigma_z |g> = +|g>`
//! a completed protocol leaves the qubit in `|g>`, so the calibrated hold is the
//! sweep maximum.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{csv_error, default_dt_max, evolve, CollapseSet, EvolveOptions, Sampling};
use crate::error::{Error, Result};
use crate::hilbert::{Frame, QuantumState};
use crate::model::{effective_coupling, Mode, SystemParams};
use crate::protocols::{
    analytic_timings, compile, fock_generation_schedule, hamiltonian_for, initial_state, outcome, protocol_layout,
    simulate, swap_schedule, DriveEngine, RampSpec, RunOptions, TimingTable,
};
use crate::report::fmt_float;
use crate::tomography::linspace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepProtocol {
    Fock,
    Swap,
}

/// Everything about a sweep except the swept hold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTemplate {
    pub protocol: SweepProtocol,
    /// Earlier-stage holds; the swept one is overwritten.
    pub timings: TimingTable,
    pub ramps: RampSpec,
    pub frame: Frame,
    /// Upper bound on concurrent simulations.
    pub workers: usize,
}

impl SweepTemplate {
    /// Analytic timings, no ramps, dressed frame, one worker.
    pub fn new(protocol: SweepProtocol, params: &SystemParams, n_max: usize) -> Result<Self> {
        Ok(Self {
            protocol,
            timings: analytic_timings(effective_coupling(params, Mode::Mem1)?, n_max.max(1))?,
            ramps: RampSpec::none(),
            frame: Frame::JcFrame,
            workers: 1,
        })
    }
}

/// Grid optimum and its three-point quadratic refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub kind: String,
    pub grid_location: f64,
    pub grid_value: f64,
    pub fit_location: f64,
    pub fit_value: f64,
    /// `y = a (x - x0)^2 + b (x - x0) + c` around the grid optimum `x0`.
    pub fit_coefficients: [f64; 3],
    /// False when the optimum sits on the grid boundary or the objective is flat.
    pub interior: bool,
}

/// Refines the maximum of `values` on the strictly increasing `grid`.
pub fn locate_maximum(grid: &[f64], values: &[f64]) -> Result<Extremum> {
    if grid.len() != values.len() || grid.len() < 3 {
        return Err(Error::params("grid", "need at least three matching grid points"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::params("grid", "must be strictly increasing"));
    }
    let (k, &best) = values
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let flat = best - lo < 1e-9;
    let mut out = Extremum {
        kind: "maximum".into(),
        grid_location: grid[k],
        grid_value: best,
        fit_location: grid[k],
        fit_value: best,
        fit_coefficients: [0.0, 0.0, best],
        interior: false,
    };
    if flat {
        log::warn!("flat sweep objective; the range excludes the oscillation");
        return Ok(out);
    }
    if k == 0 || k + 1 == grid.len() {
        log::warn!("sweep maximum at the window edge ({}); no interior extremum", grid[k]);
        return Ok(out);
    }
    // Lagrange parabola through the three points around the optimum.
    let (x0, x1, x2) = (grid[k - 1] - grid[k], 0.0, grid[k + 1] - grid[k]);
    let (y0, y1, y2) = (values[k - 1], values[k], values[k + 1]);
    let a = ((y2 - y1) / (x2 - x1) - (y1 - y0) / (x1 - x0)) / (x2 - x0);
    let b = (y1 - y0) / (x1 - x0) - a * (x0 + x1);
    let c = y1;
    out.fit_coefficients = [a, b, c];
    out.interior = true;
    if a < 0.0 {
        let dx = (-b / (2.0 * a)).clamp(x0, x2);
        out.fit_location = grid[k] + dx;
        out.fit_value = a * dx * dx + b * dx + c;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub objective_name: String,
    pub protocol: SweepProtocol,
    pub n: usize,
    pub frame: Frame,
    pub decoherence: bool,
    pub grid: Vec<f64>,
    pub objective: Vec<f64>,
    pub extremum: Extremum,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau_us", "objective"]).map_err(csv_error)?;
        for (t, v) in self.grid.iter().zip(&self.objective) {
            w.write_record([fmt_float(*t), fmt_float(*v)]).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Metadata without the sampled curve.
    pub fn metadata_json(&self) -> Result<String> {
        let meta = serde_json::json!({
            "parameter": self.parameter,
            "objective": self.objective_name,
            "protocol": self.protocol,
            "n": self.n,
            "frame": self.frame,
            "decoherence": self.decoherence,
            "points": self.grid.len(),
            "range_us": [self.grid.first(), self.grid.last()],
            "extremum": self.extremum,
        });
        Ok(serde_json::to_string_pretty(&meta)?)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Final `<sigma_z>` of the protocol with its `n`-th hold set to `tau`.
fn sweep_point(
    template: &SweepTemplate,
    n: usize,
    tau: f64,
    params: &SystemParams,
    decoherence: bool,
) -> Result<f64> {
    let mut timings = template.timings.clone();
    let schedule = match template.protocol {
        SweepProtocol::Fock => {
            timings.set_tau(n, tau);
            fock_generation_schedule(n, &timings, template.ramps, template.frame)?
        }
        SweepProtocol::Swap => {
            timings.set_tau_prime(n, tau);
            swap_schedule(n, &timings, template.ramps, template.frame)?
        }
    };
    let opts = RunOptions { decoherence, ..RunOptions::ideal(template.frame) };
    let run = simulate(&schedule, params, &opts)?;
    run.trajectory.last("sigma_z").ok_or_else(|| Error::UnknownLabel("sigma_z".into()))
}

/// Sweeps the `n`-th hold over `range` (inclusive, `steps` points).
pub fn sweep_tau(
    template: &SweepTemplate,
    n: usize,
    range: (f64, f64),
    steps: usize,
    params: &SystemParams,
    decoherence: bool,
) -> Result<SweepResult> {
    if n < 1 {
        return Err(Error::params("n", "must be at least 1"));
    }
    if !(range.0 > 0.0 && range.1 > range.0 && range.1.is_finite()) {
        return Err(Error::params("tau_range", "must be positive and increasing"));
    }
    if steps < 5 {
        return Err(Error::params("steps", "need at least 5 grid points"));
    }
    let grid = linspace(range.0, range.1, steps)?;
    let objective: Vec<f64> = pool(template.workers)?.install(|| {
        grid.par_iter()
            .map(|&tau| sweep_point(template, n, tau, params, decoherence))
            .collect::<Result<Vec<f64>>>()
    })?;
    let extremum = locate_maximum(&grid, &objective)?;
    Ok(SweepResult {
        parameter: match template.protocol {
            SweepProtocol::Fock => format!("tau_{n}"),
            SweepProtocol::Swap => format!("tau_prime_{n}"),
        },
        objective_name: "sigma_z".into(),
        protocol: template.protocol,
        n,
        frame: template.frame,
        decoherence,
        grid,
        objective,
        extremum,
    })
}

/// Generation holds calibrated stage by stage: each `tau_k` is swept over
/// `[0.5, 1.5] x` its analytic value with the earlier stages already calibrated.
pub fn calibrate_generation(
    template: &SweepTemplate,
    n_max: usize,
    steps: usize,
    params: &SystemParams,
    decoherence: bool,
) -> Result<(TimingTable, Vec<SweepResult>)> {
    let mut template = SweepTemplate { protocol: SweepProtocol::Fock, ..template.clone() };
    let analytic = analytic_timings(effective_coupling(params, Mode::Mem1)?, n_max)?;
    let mut sweeps = Vec::with_capacity(n_max);
    for k in 1..=n_max {
        let guess = analytic.tau(k)?;
        let sweep = sweep_tau(&template, k, (0.5 * guess, 1.5 * guess), steps, params, decoherence)?;
        if !sweep.extremum.interior {
            return Err(Error::WindowExcludesMaximum(format!("stage {k} sweep has no interior maximum")));
        }
        template.timings.set_tau(k, sweep.extremum.fit_location);
        sweeps.push(sweep);
    }
    Ok((template.timings, sweeps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapExtraction {
    pub n: usize,
    pub tau_prime: f64,
    pub max_n2: f64,
    pub window: (f64, f64),
}

fn swap_n2_samples(n: usize, params: &SystemParams, until: f64, times: Vec<f64>) -> Result<Vec<f64>> {
    let g = effective_coupling(params, Mode::Mem1)?;
    let mut timings = analytic_timings(g, n)?;
    timings.set_tau_prime(n, until);
    let schedule = swap_schedule(n, &timings, RampSpec::none(), Frame::JcFrame)?;
    let params = params.restricted_to(&[Mode::Mem1, Mode::Mem2]).ideal();
    let layout = protocol_layout(&schedule, n + 5)?;
    let ham = hamiltonian_for(Frame::JcFrame, DriveEngine::Displaced, &params, &layout)?;
    let program = compile(&schedule, &params, &layout, Frame::JcFrame, DriveEngine::Displaced)?;
    let psi0: QuantumState = initial_state(&schedule, &layout, Frame::JcFrame)?;
    let opts = EvolveOptions::new(default_dt_max(Frame::JcFrame, &params)).with_sampling(Sampling::Times(times));
    let traj = evolve(&ham, &program, &psi0, &CollapseSet::new(), &opts)?;
    traj.column("n_mem2").ok_or_else(|| Error::UnknownLabel("n_mem2".into()))
}

/// Time maximizing `<n_2>` in the ideal dressed-frame SWAP from `|n, 0>`.
///
/// `window` defaults to `(0, 4 tau'_1]`. The coarse maximum is refined on a
/// finer grid and then by a parabola through its neighbors.
pub fn extract_swap_time(n: usize, params: &SystemParams, window: Option<(f64, f64)>) -> Result<SwapExtraction> {
    if n < 1 {
        return Err(Error::params("n", "must be at least 1"));
    }
    let g = effective_coupling(params, Mode::Mem1)?;
    let tau1p = analytic_timings(g, 1)?.tau_prime(1)?;
    let (lo, hi) = window.unwrap_or((0.0, 4.0 * tau1p));
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::params("window", "must satisfy 0 <= start < end"));
    }
    const COARSE: usize = 801;
    let grid = linspace(lo, hi, COARSE)?;
    let n2 = swap_n2_samples(n, params, hi, grid.clone())?;
    let coarse = locate_maximum(&grid, &n2)?;
    if !coarse.interior {
        return Err(Error::WindowExcludesMaximum(format!(
            "<n_2> peaks at the window edge {} of [{lo}, {hi}]",
            coarse.grid_location
        )));
    }
    let h = grid[1] - grid[0];
    let fine = linspace(coarse.grid_location - h, coarse.grid_location + h, 41)?;
    let fine_n2 = swap_n2_samples(n, params, hi, fine.clone())?;
    let refined = locate_maximum(&fine, &fine_n2)?;
    Ok(SwapExtraction { n, tau_prime: refined.fit_location, max_n2: refined.fit_value, window: (lo, hi) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub ramp_ns: f64,
    pub coherence_mult: f64,
    pub fidelity: f64,
    pub postselect_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityTable {
    pub rows: Vec<StudyRow>,
}

impl FidelityTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "ramp_ns", "coherence_mult", "fidelity", "postselect_prob"]).map_err(csv_error)?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                fmt_float(r.ramp_ns),
                fmt_float(r.coherence_mult),
                fmt_float(r.fidelity),
                fmt_float(r.postselect_prob),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn get(&self, n: usize, ramp_ns: f64, coherence_mult: f64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.n == n && r.ramp_ns == ramp_ns && r.coherence_mult == coherence_mult)
    }

    /// Fidelities for one (ramp, multiplier) panel, ordered by `n`.
    pub fn panel(&self, ramp_ns: f64, coherence_mult: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.ramp_ns == ramp_ns && r.coherence_mult == coherence_mult)
            .map(|r| (r.n, r.fidelity))
            .collect();
        out.sort_by_key(|p| p.0);
        out
    }
}

/// Decoherent drive-frame generation for every `(n, ramp, multiplier)`,
/// using analytic holds. Rows come out in input order with `n` slowest.
pub fn ramp_coherence_study(
    n_list: &[usize],
    ramps_ns: &[f64],
    multipliers: &[f64],
    params: &SystemParams,
    workers: usize,
) -> Result<FidelityTable> {
    if n_list.iter().any(|&n| n == 0) {
        return Err(Error::params("n_list", "photon numbers must be positive"));
    }
    if ramps_ns.iter().chain(multipliers).any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::params("ramps/multipliers", "must be positive"));
    }
    let n_max = n_list.iter().copied().max().unwrap_or(1);
    let timings = analytic_timings(effective_coupling(params, Mode::Mem1)?, n_max)?;
    let mut jobs = Vec::new();
    for &n in n_list {
        for &ramp in ramps_ns {
            for &mult in multipliers {
                jobs.push((n, ramp, mult));
            }
        }
    }
    let rows = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(n, ramp_ns, coherence_mult)| {
                let schedule = fock_generation_schedule(n, &timings, RampSpec::uniform(ramp_ns * 1e-3), Frame::DriveFrame)?;
                let p = params.with_coherence_multiplier(coherence_mult);
                let run = simulate(&schedule, &p, &RunOptions::decoherent(Frame::DriveFrame))?;
                let o = outcome(&schedule, &run)?;
                Ok(StudyRow { n, ramp_ns, coherence_mult, fidelity: o.fidelity, postselect_prob: o.postselect_prob })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(FidelityTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_refinement_is_exact_for_parabolas() {
        let grid = linspace(0.0, 2.0, 11).unwrap();
        let values: Vec<f64> = grid.iter().map(|x| 3.0 - (x - 1.234f64).powi(2)).collect();
        let e = locate_maximum(&grid, &values).unwrap();
        assert!(e.interior);
        assert!((e.fit_location - 1.234).abs() < 1e-12);
        assert!((e.fit_value - 3.0).abs() < 1e-12);
        assert!((e.grid_location - 1.2).abs() < 1e-12);
    }

    #[test]
    fn edge_and_flat_objectives_are_not_interior() {
        let grid = linspace(0.0, 1.0, 5).unwrap();
        assert!(!locate_maximum(&grid, &[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap().interior);
        assert!(!locate_maximum(&grid, &[1.0; 5]).unwrap().interior);
        assert!(locate_maximum(&[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn ideal_fock_sweep_finds_analytic_time() {
        let p = SystemParams::default();
        let template = SweepTemplate::new(SweepProtocol::Fock, &p, 2).unwrap();
        let s = sweep_tau(&template, 1, (0.5, 2.5), 41, &p, false).unwrap();
        let step = 2.0 / 40.0;
        assert!((s.extremum.grid_location - 1.0 / (4.0 * 0.182)).abs() <= step);
        assert!((s.extremum.fit_location - 1.0 / (4.0 * 0.182)).abs() < step * step);
        let s2 = sweep_tau(&template, 2, (0.5, 1.5), 21, &p, false).unwrap();
        assert!((s2.extremum.grid_location - 0.9713).abs() <= 0.05);
        assert!(sweep_tau(&template, 1, (0.5, 2.5), 4, &p, false).is_err());
        assert!(sweep_tau(&template, 1, (0.0, 2.5), 9, &p, false).is_err());
    }

    #[test]
    fn sweep_is_periodic() {
        let p = SystemParams::default();
        let template = SweepTemplate::new(SweepProtocol::Fock, &p, 1).unwrap();
        // Full Rabi period of the |0,e> <-> |1,g> exchange.
        let period = 1.0 / 0.182;
        let a = sweep_point(&template, 1, 0.7, &p, false).unwrap();
        let b = sweep_point(&template, 1, 0.7 + period, &p, false).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn single_photon_swap_time() {
        let p = SystemParams::default();
        let e = extract_swap_time(1, &p, None).unwrap();
        assert!((e.tau_prime - 2f64.sqrt() / (4.0 * 0.182)).abs() < 1e-4, "{e:?}");
        assert!((e.max_n2 - 1.0).abs() < 1e-6);
        assert!(matches!(extract_swap_time(1, &p, Some((0.1, 1.0))), Err(Error::WindowExcludesMaximum(_))));
    }

    #[test]
    fn csv_and_metadata() {
        let p = SystemParams::default();
        let template = SweepTemplate { workers: 2, ..SweepTemplate::new(SweepProtocol::Swap, &p, 1).unwrap() };
        let s = sweep_tau(&template, 1, (1.0, 3.0), 9, &p, false).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau_us,objective\n"));
        assert_eq!(text.lines().count(), 10);
        let meta: serde_json::Value = serde_json::from_str(&s.metadata_json().unwrap()).unwrap();
        assert_eq!(meta["extremum"]["kind"], "maximum");
        let t = s.extremum.fit_location;
        assert!((t - 1.943).abs() < 0.1, "{t}");
    }
}

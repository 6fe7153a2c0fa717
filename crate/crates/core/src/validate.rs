//! Invariant and oracle suite run by the `validate` command.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calibration::{extract_swap_time, SweepProtocol, SweepTemplate};
use crate::dynamics::{cross_check_frames, CrossCheckOptions, Envelope, EvolveOptions, Sampling};
use crate::error::{Error, Result};
use crate::hilbert::{
    displacement, hermitian_deviation, max_abs, min_eigenvalue, partial_trace, CMatrix, CVector, Frame, OperatorMatrix,
    QuantumState, SubsystemLayout, C64, ONE,
};
use crate::model::{
    bright_dark_operators, build_displaced_drive_hamiltonian, build_jc_channels, effective_coupling, excitation_number,
    jc_channel, Mode, SystemParams,
};
use crate::oracle::{
    bright_dark_evolution, brute_force_propagator, char_fock_closed_form, jc_populations, BrightDarkStart, JcStart,
};
use crate::protocols::{
    analytic_timings, bell_schedule, bell_target, fock_generation_schedule, outcome, prepare, simulate, swap_schedule,
    PulseSchedule, RampSpec, RunOptions,
};
use crate::tomography::{char_function, emulate_char_measurement, postselect_ground, CharGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub module: String,
    pub name: String,
    pub value: Option<f64>,
    pub bound: Bound,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub elapsed_s: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Same content without the wall-clock time, for byte-stable output.
    pub fn to_json_deterministic(&self) -> Result<String> {
        let body = serde_json::json!({ "passed": self.passed(), "checks": self.checks });
        Ok(serde_json::to_string_pretty(&body)?)
    }

    fn record(&mut self, module: &str, name: &str, bound: Bound, tolerance: f64, value: Result<f64>) {
        let (value, passed, detail) = match value {
            Ok(v) => {
                let ok = match bound {
                    Bound::AtMost => v <= tolerance,
                    Bound::AtLeast => v >= tolerance,
                };
                (Some(v), ok && v.is_finite(), String::new())
            }
            Err(e) => (None, false, e.to_string()),
        };
        if !passed {
            log::error!("{module}/{name} failed: {value:?} vs {tolerance} {detail}");
        }
        self.checks.push(Check {
            module: module.into(),
            name: name.into(),
            value,
            bound,
            tolerance,
            passed,
            detail,
        });
    }
}

fn max_dev(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn bool_check(ok: bool) -> f64 {
    if ok {
        0.0
    } else {
        1.0
    }
}

/// Runs every check. Individual failures are recorded, never propagated.
pub fn run_validation(params: &SystemParams) -> ValidationReport {
    let start = Instant::now();
    let mut r = ValidationReport::default();
    let g = effective_coupling(params, Mode::Mem1).unwrap_or(0.182);

    r.record("hilbert", "displacement_unitarity", Bound::AtMost, 1e-8, displacement_unitarity());
    r.record("hilbert", "partial_trace_unit_trace", Bound::AtMost, 1e-12, partial_trace_unit_trace());

    r.record("model", "channel_hermiticity", Bound::AtMost, 1e-12, channel_hermiticity(params));
    r.record("model", "excitation_commutes_with_jc", Bound::AtMost, 1e-12, excitation_commutator());
    r.record("model", "equal_couplings", Bound::AtMost, 1e-12, (|| {
        Ok((effective_coupling(params, Mode::Mem1)? - effective_coupling(params, Mode::Mem2)?).abs())
    })());

    r.record("dynamics", "dark_mode_number_conserved", Bound::AtMost, 1e-8, dark_mode_conservation(g));
    r.record("dynamics", "total_excitation_conserved", Bound::AtMost, 1e-8, excitation_conservation(params));
    r.record("dynamics", "pure_norm_drift", Bound::AtMost, 1e-8, pure_norm_drift(params));
    match lindblad_invariants(params) {
        Ok((trace, herm, min_eig)) => {
            r.record("dynamics", "lindblad_trace_preserved", Bound::AtMost, 1e-8, Ok(trace));
            r.record("dynamics", "lindblad_hermiticity", Bound::AtMost, 1e-10, Ok(herm));
            r.record("dynamics", "lindblad_positivity", Bound::AtLeast, -1e-8, Ok(min_eig));
        }
        Err(e) => {
            let msg = e.to_string();
            for name in ["lindblad_trace_preserved", "lindblad_hermiticity", "lindblad_positivity"] {
                r.record("dynamics", name, Bound::AtMost, 0.0, Err(Error::InvalidState(msg.clone())));
            }
        }
    }
    r.record("dynamics", "brute_force_propagator_agreement", Bound::AtMost, 1e-8, brute_force_agreement(g));

    r.record("oracle", "jc_populations_sum_to_one", Bound::AtMost, 1e-14, (|| {
        Ok(max_dev((0..50).flat_map(|k| {
            let t = 0.05 * k as f64;
            (0..5).map(move |n| {
                let (a, b) = jc_populations(n, g, t, JcStart::QubitExcited);
                (a + b - 1.0).abs()
            })
        })))
    })());
    r.record("oracle", "bright_dark_unit_norm", Bound::AtMost, 1e-14, (|| {
        let mut dev: f64 = 0.0;
        for k in 0..50 {
            for start in [BrightDarkStart::SinglePhotonMem1, BrightDarkStart::QubitExcitedVacuum] {
                dev = dev.max((bright_dark_evolution(0.05 * k as f64, g, start)?.norm_sqr() - 1.0).abs());
            }
        }
        Ok(dev)
    })());
    r.record("oracle", "jc_transfer_matches_simulation", Bound::AtMost, 1e-8, jc_transfer_agreement(params, g));

    r.record("protocols", "sqrt_n_timing_law", Bound::AtMost, 1e-15, (|| {
        let t = analytic_timings(g, 5)?;
        let mut dev: f64 = 0.0;
        for n in 1..=5 {
            dev = dev.max((t.tau(n)? * (n as f64).sqrt() - t.tau(1)?).abs());
        }
        Ok(dev.max((t.tau_prime(1)? - 2f64.sqrt() * t.tau(1)?).abs()))
    })());
    r.record("protocols", "schedule_structure", Bound::AtMost, 0.0, (|| {
        let t = analytic_timings(g, 5)?;
        let mut ok = true;
        for n in 1..=5 {
            let s = fock_generation_schedule(n, &t, RampSpec::uniform(0.2), Frame::DriveFrame)?;
            ok &= s.holds().len() == n && s.flip_count() == n - 1;
            ok &= PulseSchedule::from_json(&s.to_json()?)? == s;
        }
        Ok(bool_check(ok))
    })());
    r.record("protocols", "ideal_generation_fidelity", Bound::AtLeast, 1.0 - 1e-6, (|| {
        let t = analytic_timings(g, 5)?;
        let mut worst: f64 = 1.0;
        for n in 1..=5 {
            let s = fock_generation_schedule(n, &t, RampSpec::none(), Frame::JcFrame)?;
            let o = outcome(&s, &simulate(&s, params, &RunOptions::ideal(Frame::JcFrame))?)?;
            worst = worst.min(o.fidelity).min(o.postselect_prob);
        }
        Ok(worst)
    })());
    r.record("protocols", "single_photon_swap_phase", Bound::AtMost, 1e-6, (|| {
        let t = analytic_timings(g, 1)?;
        let s = swap_schedule(1, &t, RampSpec::none(), Frame::JcFrame)?;
        let run = simulate(&s, params, &RunOptions::ideal(Frame::JcFrame))?;
        let v = run.final_state().vector().ok_or_else(|| Error::InvalidState("expected a pure state".into()))?;
        Ok((v[run.layout.basis_index(&[0, 1, 0])?] + ONE).norm())
    })());
    r.record("protocols", "ideal_bell_fidelity", Bound::AtLeast, 1.0 - 1e-6, (|| {
        let t = analytic_timings(g, 1)?;
        let s = bell_schedule(&t, RampSpec::none(), Frame::JcFrame)?;
        let run = simulate(&s, params, &RunOptions::ideal(Frame::JcFrame))?;
        let (post, p) = postselect_ground(run.final_state())?;
        Ok(crate::tomography::fidelity(&post, &bell_target(post.layout(), Frame::JcFrame)?)?.min(p))
    })());

    r.record("tomography", "laguerre_agreement", Bound::AtMost, 1e-8, laguerre_agreement());
    match char_symmetries() {
        Ok((sym, bound, origin)) => {
            r.record("tomography", "conjugate_symmetry", Bound::AtMost, 1e-10, Ok(sym));
            r.record("tomography", "magnitude_at_most_one", Bound::AtMost, 1.0 + 1e-9, Ok(bound));
            r.record("tomography", "origin_is_one", Bound::AtMost, 1e-6, Ok(origin));
        }
        Err(e) => r.record("tomography", "conjugate_symmetry", Bound::AtMost, 1e-10, Err(e)),
    }
    r.record("tomography", "emulated_measurement", Bound::AtMost, 1e-8, emulation_agreement());

    r.record("calibration", "single_photon_swap_time", Bound::AtMost, 1e-4, (|| {
        let e = extract_swap_time(1, params, None)?;
        Ok((e.tau_prime - analytic_timings(g, 1)?.tau_prime(1)?).abs())
    })());
    r.record("calibration", "sweep_periodicity", Bound::AtMost, 1e-6, (|| {
        let template = SweepTemplate::new(SweepProtocol::Fock, params, 1)?;
        let period = 1.0 / g;
        let a = crate::calibration::sweep_tau(&template, 1, (0.5, 0.9), 5, params, false)?;
        let b = crate::calibration::sweep_tau(&template, 1, (0.5 + period, 0.9 + period), 5, params, false)?;
        Ok(max_dev(a.objective.iter().zip(&b.objective).map(|(x, y)| (x - y).abs())))
    })());

    r.record("dynamics", "frame_cross_check", Bound::AtMost, 0.1, (|| {
        let t = analytic_timings(g, 1)?;
        let s = fock_generation_schedule(1, &t, RampSpec::sideband_only(0.2), Frame::DriveFrame)?;
        Ok(cross_check_frames(params, &s, &CrossCheckOptions::default())?.max_discrepancy())
    })());

    r.elapsed_s = start.elapsed().as_secs_f64();
    r
}

fn displacement_unitarity() -> Result<f64> {
    let dim = 40;
    let mut worst: f64 = 0.0;
    for alpha in [C64::new(1.2, 0.0), C64::new(-0.4, 1.7), C64::new(0.0, -2.2)] {
        let prod = displacement(alpha, dim)?.compose(&displacement(-alpha, dim)?)?;
        let block = prod.data().view((0, 0), (10, 10)).into_owned();
        worst = worst.max(max_abs(&(block - CMatrix::identity(10, 10))));
    }
    Ok(worst)
}

fn partial_trace_unit_trace() -> Result<f64> {
    let layout = SubsystemLayout::new([("mem1", 3), ("mem2", 4), ("qubit", 2)])?;
    let v = CVector::from_fn(layout.total_dim(), |i, _| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()));
    let state = QuantumState::pure_normalized(layout, Frame::JcFrame, v)?;
    let mut dev: f64 = 0.0;
    for keep in [&["mem1"][..], &["mem2", "qubit"], &["qubit"]] {
        dev = dev.max((partial_trace(&state, keep)?.trace() - 1.0).abs());
    }
    Ok(dev)
}

fn channel_hermiticity(params: &SystemParams) -> Result<f64> {
    let layout = SubsystemLayout::modes_with_qubit(&["mem1", "mem2"], 4)?;
    let drive = build_displaced_drive_hamiltonian(params, &layout)?;
    let jc = build_jc_channels(&layout)?;
    Ok(max_dev(
        [&drive, &jc]
            .iter()
            .flat_map(|h| h.channels.iter().map(|(_, op)| hermitian_deviation(op.data())).chain([hermitian_deviation(h.static_term.data())])),
    ))
}

fn excitation_commutator() -> Result<f64> {
    let layout = SubsystemLayout::modes_with_qubit(&["mem1", "mem2"], 5)?;
    let jc = build_jc_channels(&layout)?;
    let n = excitation_number(&layout)?;
    let mut worst: f64 = 0.0;
    for (_, op) in &jc.channels {
        worst = worst.max(op.commutator(&n)?.max_abs());
    }
    Ok(worst)
}

fn two_mode_jc_run(g: f64, levels: &[usize], duration: f64, extras: Vec<(String, OperatorMatrix)>, layout: &SubsystemLayout) -> Result<crate::dynamics::Trajectory> {
    let ham = build_jc_channels(layout)?;
    let mut program = crate::dynamics::CoefficientProgram::new();
    let coupling = crate::model::angular(g);
    program.evolve(
        "hold_1",
        duration,
        BTreeMap::from([
            (jc_channel(Mode::Mem1), Envelope::Constant(coupling)),
            (jc_channel(Mode::Mem2), Envelope::Constant(coupling)),
        ]),
    );
    let mut opts = EvolveOptions::new(0.05).with_sampling(Sampling::Uniform(41));
    for (name, op) in extras {
        opts = opts.with_extra(name, op);
    }
    let psi0 = QuantumState::basis(layout.clone(), Frame::JcFrame, levels)?;
    crate::dynamics::evolve(&ham, &program, &psi0, &crate::dynamics::CollapseSet::new(), &opts)
}

fn dark_mode_conservation(g: f64) -> Result<f64> {
    let layout = SubsystemLayout::modes_with_qubit(&["mem1", "mem2"], 5)?;
    let (_, dark) = bright_dark_operators(&layout)?;
    let dark_number = dark.adjoint().compose(&dark)?.into_hermitian()?;
    let traj = two_mode_jc_run(g, &[2, 0, 0], 6.0, vec![("n_dark".into(), dark_number)], &layout)?;
    let col = traj.column("n_dark").ok_or_else(|| Error::UnknownLabel("n_dark".into()))?;
    Ok(max_dev(col.iter().map(|v| (v - col[0]).abs())))
}

fn excitation_conservation(params: &SystemParams) -> Result<f64> {
    let g = effective_coupling(params, Mode::Mem1)?;
    let layout = SubsystemLayout::modes_with_qubit(&["mem1", "mem2"], 5)?;
    let n = excitation_number(&layout)?;
    let traj = two_mode_jc_run(g, &[2, 1, 1], 6.0, vec![("n_exc".into(), n)], &layout)?;
    let col = traj.column("n_exc").ok_or_else(|| Error::UnknownLabel("n_exc".into()))?;
    Ok(max_dev(col.iter().map(|v| (v - 4.0).abs())))
}

fn pure_norm_drift(params: &SystemParams) -> Result<f64> {
    let t = analytic_timings(effective_coupling(params, Mode::Mem1)?, 3)?;
    let s = fock_generation_schedule(3, &t, RampSpec::uniform(0.2), Frame::DriveFrame)?;
    Ok(simulate(&s, params, &RunOptions::ideal(Frame::DriveFrame))?.trajectory.norm_drift)
}

fn lindblad_invariants(params: &SystemParams) -> Result<(f64, f64, f64)> {
    let t = analytic_timings(effective_coupling(params, Mode::Mem1)?, 2)?;
    let s = fock_generation_schedule(2, &t, RampSpec::uniform(0.2), Frame::DriveFrame)?;
    let run = simulate(&s, params, &RunOptions::decoherent(Frame::DriveFrame))?;
    let rho = run.final_state().density_matrix();
    Ok((
        run.trajectory.norm_drift.max((rho.trace().re - 1.0).abs()),
        hermitian_deviation(&rho),
        min_eigenvalue(&rho),
    ))
}

fn brute_force_agreement(g: f64) -> Result<f64> {
    let t = analytic_timings(g, 3)?;
    let s = fock_generation_schedule(3, &t, RampSpec::none(), Frame::JcFrame)?;
    let params = SystemParams::default();
    let prepared = prepare(&s, &params, &RunOptions::ideal(Frame::JcFrame))?;
    let mut state = prepared.initial.vector().cloned().ok_or_else(|| Error::InvalidState("expected pure".into()))?;
    for seg in &prepared.program.segments {
        match seg {
            crate::dynamics::Segment::Evolve { duration, envelopes, .. } => {
                let h = prepared.hamiltonian.assemble(|name| {
                    envelopes.get(name).and_then(Envelope::constant_value).unwrap_or(0.0)
                });
                state = brute_force_propagator(&h, *duration)?.apply(&state);
            }
            crate::dynamics::Segment::Instant { unitary, .. } => state = unitary * state,
        }
    }
    let simulated = prepared.run()?.trajectory.final_state;
    let v = simulated.vector().ok_or_else(|| Error::InvalidState("expected pure".into()))?;
    Ok((v - state).camax())
}

fn jc_transfer_agreement(params: &SystemParams, g: f64) -> Result<f64> {
    let t = analytic_timings(g, 3)?;
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        // Generation stage n starts from |n-1, e> in the dressed frame.
        let s = fock_generation_schedule(n, &t, RampSpec::none(), Frame::JcFrame)?;
        let mut prepared = prepare(&s, params, &RunOptions::ideal(Frame::JcFrame))?;
        let hold = t.tau(n)? * 0.6;
        let mut program = crate::dynamics::CoefficientProgram::new();
        program.evolve(
            "hold",
            hold,
            BTreeMap::from([(jc_channel(Mode::Mem1), Envelope::Constant(crate::model::angular(g)))]),
        );
        prepared.program = program;
        prepared.initial = QuantumState::basis(prepared.layout.clone(), Frame::JcFrame, &[n - 1, 1])?;
        let traj = prepared.run()?.trajectory;
        let v = traj.final_state.vector().ok_or_else(|| Error::InvalidState("expected pure".into()))?;
        let p_emitted = v[prepared.layout.basis_index(&[n, 0])?].norm_sqr();
        let (oracle, _) = jc_populations(n - 1, g, hold, JcStart::QubitExcited);
        worst = worst.max((p_emitted - oracle).abs());
    }
    Ok(worst)
}

fn laguerre_agreement() -> Result<f64> {
    let layout = SubsystemLayout::single("mem1", 18)?;
    let grid = CharGrid::square(2.5 / 2f64.sqrt(), 9)?;
    let ring = CharGrid::new(vec![-2.5, -1.0, 0.3, 2.5], vec![0.0])?;
    let mut worst: f64 = 0.0;
    for n in 0..=5 {
        let state = QuantumState::basis(layout.clone(), Frame::JcFrame, &[n])?;
        for g in [&grid, &ring] {
            let map = char_function(&state, "mem1", g)?;
            for (alpha, c) in g.points().zip(&map.values) {
                worst = worst.max((c - char_fock_closed_form(n, alpha)).norm());
            }
        }
    }
    Ok(worst)
}

fn char_symmetries() -> Result<(f64, f64, f64)> {
    let p = SystemParams::default();
    let t = analytic_timings(effective_coupling(&p, Mode::Mem1)?, 1)?;
    let s = fock_generation_schedule(1, &t, RampSpec::uniform(0.2), Frame::DriveFrame)?;
    let run = simulate(&s, &p, &RunOptions::decoherent(Frame::DriveFrame))?;
    let grid = CharGrid::square(2.0, 9)?;
    let map = char_function(run.final_state(), "mem1", &grid)?;
    let k = grid.re_axis.len();
    let mut sym: f64 = 0.0;
    for j in 0..k {
        for i in 0..k {
            sym = sym.max((map.at(i, j) - map.at(k - 1 - i, k - 1 - j).conj()).norm());
        }
    }
    let bound = max_dev(map.values.iter().map(|c| c.norm()));
    let origin = (map.at(k / 2, k / 2) - ONE).norm();
    Ok((sym, bound, origin))
}

fn emulation_agreement() -> Result<f64> {
    let layout = SubsystemLayout::modes_with_qubit(&["mem1"], 6)?;
    let mut v = CVector::zeros(layout.total_dim());
    v[layout.basis_index(&[1, 0])?] = C64::new(0.6, 0.0);
    v[layout.basis_index(&[3, 0])?] = C64::new(0.0, 0.8);
    let state = QuantumState::pure(layout, Frame::JcFrame, v)?;
    let mut worst: f64 = 0.0;
    for alpha in [C64::new(0.5, 0.5), C64::new(-1.5, 0.2), C64::new(1.0, -2.0)] {
        let direct = char_function(&state, "mem1", &CharGrid::new(vec![alpha.re], vec![alpha.im])?)?.values[0];
        worst = worst.max((direct - emulate_char_measurement(&state, "mem1", alpha)?).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_default_parameters() {
        let report = run_validation(&SystemParams::default());
        let failures: Vec<_> = report.failures().collect();
        assert!(failures.is_empty(), "{failures:#?}");
        assert!(report.checks.len() >= 25);
        assert!(report.elapsed_s < 120.0);
    }
}

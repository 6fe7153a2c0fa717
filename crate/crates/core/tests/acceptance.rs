//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rabisim::calibration::{extract_swap_time, ramp_coherence_study, sweep_tau, SweepProtocol, SweepTemplate};
use rabisim::dynamics::{cross_check_frames, CrossCheckOptions, Envelope, Segment};
use rabisim::hilbert::{mode_number, CMatrix, CVector, Frame, QuantumState, SubsystemLayout, C64};
use rabisim::model::{effective_coupling, Mode, SystemParams};
use rabisim::oracle::{bell_char_closed_form, brute_force_propagator, char_fock_closed_form};
use rabisim::protocols::{
    analytic_timings, bell_schedule, bell_target, fock_generation_schedule, outcome, prepare, simulate, swap_schedule,
    RampSpec, RunOptions,
};
use rabisim::tomography::{
    char_function, emulate_char_measurement, joint_char_function, postselect_ground, CharGrid, JointSlice,
};
use rabisim::validate::run_validation;

// 1. Timing.
const G_MHZ: f64 = 0.182;
const TAU1_US: f64 = 1.374;
const TAU1_PRIME_US: f64 = 1.943;
const SQRT_LAW_TOL: f64 = 1e-12;
const SWEEP_TOL_US: f64 = 5e-3;

// 2. Ideal protocols.
const IDEAL_TOL: f64 = 1e-6;

// 3. Ramp/coherence trend.
const MEASURED_F1: f64 = 0.9164;
const F1_TOL: f64 = 0.08;

// 4. SWAP non-ideality; frozen from dressed-frame oracle runs.
const SWAP_FROZEN: [(usize, f64, f64); 4] =
    [(2, 5.6656, 1.85933), (3, 5.6065, 2.81117), (4, 5.6172, 3.74047), (5, 5.6571, 4.56984)];
const SWAP_TAU_TOL_US: f64 = 2e-4;
const SWAP_N2_TOL: f64 = 1e-4;
const SWAP_ORACLE_TOL: f64 = 1e-6;
const SWAP_FLOOR: f64 = 0.9;

// 5. Frame cross-check.
const RABI_LADDER_MHZ: [f64; 3] = [6.0, 12.0, 24.0];
const CROSS_TOL: f64 = 0.1;

// 6. Tomography.
const CHAR_TOL: f64 = 1e-8;
const CHAR_RADIUS: f64 = 2.5;
const RING_TOL: f64 = 1e-4;

// 7. Bell slices.
const BELL_SLICE_TOL: f64 = 0.15;
const BELL_BRUTE_TOL: f64 = 1e-10;
const BELL_SIGN_MIN: f64 = 0.1;

// 8. Validation suite.
const VALIDATE_BUDGET_S: f64 = 120.0;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn device_at(rabi_mhz: f64) -> SystemParams {
    let d = SystemParams::default();
    let k = rabi_mhz / d.rabi_freq;
    SystemParams { rabi_freq: rabi_mhz, eps_1: d.eps_1 * k, eps_2: d.eps_2 * k, eps_r: d.eps_r * k, ..d }
}

fn analytic_timing() -> Check {
    let params = SystemParams::default();
    let g = effective_coupling(&params, Mode::Mem1).map_err(err)?;
    ensure((g - G_MHZ).abs() < 1e-12, || format!("effective coupling {g}"))?;
    let t = analytic_timings(g, 5).map_err(err)?;
    let tau1 = t.tau(1).map_err(err)?;
    for n in 2..=5 {
        let tn = t.tau(n).map_err(err)?;
        ensure((tn * (n as f64).sqrt() - tau1).abs() < SQRT_LAW_TOL, || format!("tau_{n} = {tn} breaks the sqrt law"))?;
    }

    let template = SweepTemplate::new(SweepProtocol::Fock, &params, 2).map_err(err)?;
    let s1 = sweep_tau(&template, 1, (1.0, 1.8), 41, &params, false).map_err(err)?;
    let s2 = sweep_tau(&template, 2, (0.6, 1.4), 41, &params, false).map_err(err)?;
    let swap = SweepTemplate::new(SweepProtocol::Swap, &params, 1).map_err(err)?;
    let sp = sweep_tau(&swap, 1, (1.5, 2.4), 46, &params, false).map_err(err)?;
    let (f1, f2, fp) = (s1.extremum.fit_location, s2.extremum.fit_location, sp.extremum.fit_location);
    ensure((f1 - TAU1_US).abs() <= SWEEP_TOL_US, || format!("swept tau_1 = {f1}"))?;
    ensure((f2 - TAU1_US / 2f64.sqrt()).abs() <= SWEEP_TOL_US, || format!("swept tau_2 = {f2}"))?;
    ensure((fp - TAU1_PRIME_US).abs() <= SWEEP_TOL_US, || format!("swept tau'_1 = {fp}"))?;
    Ok(format!("tau_1 {f1:.4} us, tau_2 {f2:.4} us, tau'_1 {fp:.4} us (analytic {tau1:.4})"))
}

fn ideal_protocols() -> Check {
    let params = SystemParams::default();
    let t = analytic_timings(G_MHZ, 5).map_err(err)?;
    let opts = RunOptions::ideal(Frame::JcFrame);
    let mut worst: f64 = 0.0;
    for n in 1..=5 {
        let s = fock_generation_schedule(n, &t, RampSpec::uniform(0.2), Frame::JcFrame).map_err(err)?;
        let o = outcome(&s, &simulate(&s, &params, &opts).map_err(err)?).map_err(err)?;
        ensure(o.fidelity >= 1.0 - IDEAL_TOL, || format!("|{n}> fidelity {}", o.fidelity))?;
        ensure(o.postselect_prob >= 1.0 - IDEAL_TOL, || format!("|{n}> ground population {}", o.postselect_prob))?;
        worst = worst.max(1.0 - o.fidelity);
    }

    let s = swap_schedule(1, &t, RampSpec::uniform(0.2), Frame::JcFrame).map_err(err)?;
    let run = simulate(&s, &params, &opts).map_err(err)?;
    let o = outcome(&s, &run).map_err(err)?;
    ensure(o.fidelity >= 1.0 - IDEAL_TOL, || format!("swap fidelity {}", o.fidelity))?;
    let mut levels = vec![0; run.layout.len()];
    levels[run.layout.index_of("mem2").map_err(err)?] = 1;
    let v = run.final_state().vector().ok_or("swap run is not pure")?;
    let amp = v[run.layout.basis_index(&levels).map_err(err)?];
    ensure((amp + C64::new(1.0, 0.0)).norm() < IDEAL_TOL, || format!("swap amplitude {amp}, expected -1"))?;

    let s = bell_schedule(&t, RampSpec::uniform(0.2), Frame::JcFrame).map_err(err)?;
    let b = outcome(&s, &simulate(&s, &params, &opts).map_err(err)?).map_err(err)?;
    ensure(b.fidelity >= 1.0 - IDEAL_TOL, || format!("Bell fidelity {}", b.fidelity))?;
    Ok(format!("worst generation infidelity {worst:.1e}, swap amplitude {:.6}, Bell fidelity {:.8}", amp.re, b.fidelity))
}

fn ramp_trend() -> Check {
    let params = SystemParams::default();
    let ns = [1, 2, 3, 4, 5];
    let table = ramp_coherence_study(&ns, &[200.0, 20.0], &[1.0, 10.0], &params, 1).map_err(err)?;
    let f = |n: usize, ramp: f64, mult: f64| table.get(n, ramp, mult).map(|r| r.fidelity).unwrap_or(f64::NAN);
    let base: Vec<f64> = ns.iter().map(|&n| f(n, 200.0, 1.0)).collect();
    ensure(base.windows(2).all(|w| w[1] < w[0]), || format!("200 ns fidelities not strictly decreasing: {base:?}"))?;
    ensure((base[0] - MEASURED_F1).abs() <= F1_TOL, || format!("F(1) = {} vs {MEASURED_F1}", base[0]))?;
    for mult in [1.0, 10.0] {
        for n in 3..=5 {
            let (fast, slow) = (f(n, 20.0, mult), f(n, 200.0, mult));
            ensure(fast > slow, || format!("n={n} x{mult}: 20 ns {fast} does not beat 200 ns {slow}"))?;
        }
    }
    for ramp in [200.0, 20.0] {
        for &n in &ns {
            let (long, short) = (f(n, ramp, 10.0), f(n, ramp, 1.0));
            ensure(long > short, || format!("n={n} {ramp} ns: x10 {long} does not beat x1 {short}"))?;
        }
    }
    let fast: Vec<f64> = ns.iter().map(|&n| f(n, 20.0, 1.0)).collect();
    Ok(format!("200 ns {:.4?}, 20 ns {:.4?}", base, fast))
}

/// `<n_2>` at hold time `t` of the dressed-frame SWAP, by exact diagonalization.
fn swap_n2_exact(n: usize, params: &SystemParams, times: &[f64]) -> Result<Vec<f64>, String> {
    let mut timings = analytic_timings(G_MHZ, n).map_err(err)?;
    timings.set_tau_prime(n, 1.0);
    let s = swap_schedule(n, &timings, RampSpec::none(), Frame::JcFrame).map_err(err)?;
    let ideal = params.ideal();
    let prepared = prepare(&s, &ideal, &RunOptions::ideal(Frame::JcFrame)).map_err(err)?;
    let mut psi: CVector = prepared.initial.vector().cloned().ok_or("initial state is not pure")?;
    let mut hold = None;
    for seg in &prepared.program.segments {
        match seg {
            Segment::Instant { unitary, .. } => psi = unitary * psi,
            Segment::Evolve { envelopes, .. } => {
                hold = Some(envelopes.clone());
                break;
            }
        }
    }
    let envelopes: BTreeMap<String, Envelope> = hold.ok_or("no hold segment")?;
    let h = prepared.hamiltonian.assemble(|name| envelopes.get(name).and_then(Envelope::constant_value).unwrap_or(0.0));
    let n2 = mode_number(&prepared.layout, "mem2").map_err(err)?;
    times
        .iter()
        .map(|&t| {
            let phi = brute_force_propagator(&h, t).map_err(err)?.apply(&psi);
            Ok(phi.dotc(&n2.apply(&phi)).re)
        })
        .collect()
}

fn swap_nonideality() -> Check {
    let params = SystemParams::default();
    let tau1p = analytic_timings(G_MHZ, 1).map_err(err)?.tau_prime(1).map_err(err)?;
    let mut summary = Vec::new();
    for (n, tau_frozen, n2_frozen) in SWAP_FROZEN {
        let e = extract_swap_time(n, &params, None).map_err(err)?;
        let nf = n as f64;
        ensure(e.max_n2 < nf && e.max_n2 > SWAP_FLOOR * nf, || format!("n={n}: max <n_2> = {}", e.max_n2))?;
        ensure(e.tau_prime > tau1p / nf.sqrt(), || format!("n={n}: tau' {} not slower than tau'_1/sqrt n", e.tau_prime))?;
        ensure((e.tau_prime - tau_frozen).abs() <= SWAP_TAU_TOL_US, || format!("n={n}: tau' {} vs {tau_frozen}", e.tau_prime))?;
        ensure((e.max_n2 - n2_frozen).abs() <= SWAP_N2_TOL, || format!("n={n}: max <n_2> {} vs {n2_frozen}", e.max_n2))?;
        let exact = swap_n2_exact(n, &params, &[e.tau_prime - 0.01, e.tau_prime, e.tau_prime + 0.01])?;
        ensure((exact[1] - e.max_n2).abs() <= SWAP_ORACLE_TOL, || format!("n={n}: oracle <n_2> {} vs {}", exact[1], e.max_n2))?;
        ensure(exact[0] < exact[1] && exact[2] < exact[1], || format!("n={n}: oracle does not peak at tau' ({exact:?})"))?;
        summary.push(format!("n={n} tau'={:.4} <n2>={:.5}", e.tau_prime, e.max_n2));
    }
    Ok(summary.join(", "))
}

fn frame_cross_check() -> Check {
    let mut discrepancies = Vec::new();
    for rabi in RABI_LADDER_MHZ {
        let params = device_at(rabi);
        let g = effective_coupling(&params, Mode::Mem1).map_err(err)?;
        ensure((g - G_MHZ).abs() < 1e-9, || format!("coupling drifted to {g} at {rabi} MHz"))?;
        let t = analytic_timings(g, 1).map_err(err)?;
        let s = fock_generation_schedule(1, &t, RampSpec::sideband_only(0.2), Frame::DriveFrame).map_err(err)?;
        let report = cross_check_frames(&params, &s, &CrossCheckOptions::default()).map_err(err)?;
        discrepancies.push(report.max_discrepancy());
    }
    ensure(discrepancies[0] < CROSS_TOL, || format!("discrepancy {} at the operating point", discrepancies[0]))?;
    ensure(discrepancies.windows(2).all(|w| w[1] < w[0]), || format!("not decreasing with Rabi frequency: {discrepancies:?}"))?;
    let shown: Vec<String> = discrepancies.iter().map(|d| format!("{d:.2e}")).collect();
    Ok(format!("max discrepancy at 6/12/24 MHz: {}", shown.join(", ")))
}

fn fock_state(n: usize, dim: usize) -> Result<QuantumState, String> {
    let layout = SubsystemLayout::single("mem1", dim).map_err(err)?;
    QuantumState::basis(layout, Frame::JcFrame, &[n]).map_err(err)
}

fn tomography_oracles() -> Check {
    let grid = CharGrid::square(CHAR_RADIUS, 41).map_err(err)?;
    let mut worst: f64 = 0.0;
    for n in 0..=5 {
        let map = char_function(&fock_state(n, n + 2)?, "mem1", &grid).map_err(err)?;
        for (alpha, c) in grid.points().zip(&map.values) {
            if alpha.norm() <= CHAR_RADIUS {
                worst = worst.max((c - char_fock_closed_form(n, alpha)).norm());
            }
        }
    }
    ensure(worst <= CHAR_TOL, || format!("closed-form deviation {worst:e}"))?;

    let layout = SubsystemLayout::modes_with_qubit(&["mem1"], 5).map_err(err)?;
    let mut emul: f64 = 0.0;
    let mut v = CVector::zeros(layout.total_dim());
    v[layout.basis_index(&[0, 0]).map_err(err)?] = C64::new(0.5, 0.0);
    v[layout.basis_index(&[2, 0]).map_err(err)?] = C64::new(0.5, 0.5);
    v[layout.basis_index(&[4, 0]).map_err(err)?] = C64::new(0.0, -0.5);
    let mixed_rho = {
        let a = QuantumState::basis(layout.clone(), Frame::JcFrame, &[1, 0]).map_err(err)?.density_matrix();
        let b = QuantumState::basis(layout.clone(), Frame::JcFrame, &[3, 0]).map_err(err)?.density_matrix();
        a * C64::new(0.3, 0.0) + b * C64::new(0.7, 0.0)
    };
    let states = [
        QuantumState::pure(layout.clone(), Frame::JcFrame, v).map_err(err)?,
        QuantumState::density(layout.clone(), Frame::JcFrame, mixed_rho).map_err(err)?,
    ];
    for state in &states {
        for alpha in [C64::new(0.3, -0.7), C64::new(-1.2, 0.4), C64::new(1.5, 1.5), C64::new(0.0, -2.2)] {
            let direct = char_function(state, "mem1", &CharGrid::new(vec![alpha.re], vec![alpha.im]).map_err(err)?)
                .map_err(err)?
                .values[0];
            let emulated = emulate_char_measurement(state, "mem1", alpha).map_err(err)?;
            emul = emul.max((direct - emulated).norm());
        }
    }
    ensure(emul <= CHAR_TOL, || format!("emulated measurement deviation {emul:e}"))?;

    let one = fock_state(1, 2)?;
    let c_at = |r: f64| -> Result<f64, String> {
        Ok(char_function(&one, "mem1", &CharGrid::new(vec![r], vec![0.0]).map_err(err)?).map_err(err)?.values[0].re)
    };
    let (mut lo, mut hi) = (0.5, 1.5);
    let (f_lo, f_hi) = (c_at(lo)?, c_at(hi)?);
    ensure(f_lo > 0.0 && f_hi < 0.0, || format!("no sign change on [0.5, 1.5]: {f_lo}, {f_hi}"))?;
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if c_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ring = 0.5 * (lo + hi);
    ensure((ring - 1.0).abs() <= RING_TOL, || format!("zero ring at {ring}"))?;
    Ok(format!("closed form {worst:.1e}, emulation {emul:.1e}, zero ring at {ring:.7}"))
}

/// `D(alpha)` by dense matrix exponential on `dim` levels.
fn displacement_expm(alpha: C64, dim: usize) -> CMatrix {
    let a = CMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { C64::new((j as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
    let gen = a.adjoint() * alpha - &a * alpha.conj();
    gen.exp()
}

fn bell_slices() -> Check {
    let params = SystemParams::default();
    let t = analytic_timings(G_MHZ, 1).map_err(err)?;
    let s = bell_schedule(&t, RampSpec::uniform(0.2), Frame::JcFrame).map_err(err)?;
    let run = simulate(&s, &params, &RunOptions::decoherent(Frame::JcFrame)).map_err(err)?;
    let (post, _) = postselect_ground(run.final_state()).map_err(err)?;
    let grid = CharGrid::square(2.0, 41).map_err(err)?;
    let slices = joint_char_function(&post, &grid).map_err(err)?;
    let mut worst: f64 = 0.0;
    for slice in &slices {
        for (xy, c) in grid.points().zip(&slice.values) {
            let (a, b) = slice.slice.point(xy.re, xy.im);
            worst = worst.max((c - bell_char_closed_form(a, b)).norm());
        }
    }
    ensure(worst <= BELL_SLICE_TOL, || format!("decoherent slices deviate by {worst}"))?;

    let mut signs = 0;
    for slice in &slices {
        for d in [0.5, 1.0] {
            let value = |x: f64, y: f64| {
                let (ix, iy) = (grid.re_axis.iter().position(|v| (v - x).abs() < 1e-12), grid.im_axis.iter().position(|v| (v - y).abs() < 1e-12));
                slice.at(ix.expect("on grid"), iy.expect("on grid")).re
            };
            let sim = value(d, d) - value(d, -d);
            let (a1, b1) = slice.slice.point(d, d);
            let (a2, b2) = slice.slice.point(d, -d);
            let exact = bell_char_closed_form(a1, b1).re - bell_char_closed_form(a2, b2).re;
            if exact.abs() > BELL_SIGN_MIN {
                ensure(sim.signum() == exact.signum(), || {
                    format!("{} slice: diagonal contrast {sim} has the wrong sign ({exact})", slice.slice.name())
                })?;
                signs += 1;
            }
        }
    }
    ensure(signs >= 4, || format!("only {signs} sign checks were informative"))?;

    let layout = SubsystemLayout::new([("mem1", 2), ("mem2", 2)]).map_err(err)?;
    let target = bell_target(&layout, Frame::JcFrame).map_err(err)?;
    let coarse = CharGrid::square(2.0, 9).map_err(err)?;
    let ideal = joint_char_function(&target, &coarse).map_err(err)?;
    let psi = target.vector().ok_or("Bell target is not pure")?;
    // The state lives on levels 0 and 1, so only that block of each
    // (well-converged) 40-level exponential enters the expectation value.
    const BIG: usize = 40;
    let mut brute: f64 = 0.0;
    let mut closed: f64 = 0.0;
    for slice in &ideal {
        for (xy, c) in coarse.points().zip(&slice.values) {
            let (a, b) = slice.slice.point(xy.re, xy.im);
            let (d1, d2) = (displacement_expm(a, BIG), displacement_expm(b, BIG));
            let mut exact = C64::new(0.0, 0.0);
            for (i, j, k, l) in (0..16).map(|m| (m >> 3 & 1, m >> 2 & 1, m >> 1 & 1, m & 1)) {
                exact += psi[i * 2 + j].conj() * d1[(i, k)] * d2[(j, l)] * psi[k * 2 + l];
            }
            brute = brute.max((c - exact).norm());
            closed = closed.max((c - bell_char_closed_form(a, b)).norm());
        }
    }
    ensure(brute <= BELL_BRUTE_TOL, || format!("ideal slices differ from brute force by {brute:e}"))?;
    ensure(closed <= BELL_BRUTE_TOL, || format!("ideal slices differ from the closed form by {closed:e}"))?;
    let names: Vec<&str> = JointSlice::ALL.iter().map(|s| s.name()).collect();
    Ok(format!("decoherent deviation {worst:.3} over {names:?}, {signs} sign checks, brute force {brute:.1e}"))
}

fn conservation_suite() -> Check {
    let start = Instant::now();
    let report = run_validation(&SystemParams::default());
    let elapsed = start.elapsed().as_secs_f64();
    let failed: Vec<String> = report.failures().map(|c| format!("{}::{}", c.module, c.name)).collect();
    ensure(failed.is_empty(), || format!("failed checks: {failed:?}"))?;
    for required in [
        "dark_mode_number_conserved",
        "total_excitation_conserved",
        "lindblad_trace_preserved",
        "lindblad_hermiticity",
        "lindblad_positivity",
        "conjugate_symmetry",
        "pure_norm_drift",
    ] {
        ensure(report.checks.iter().any(|c| c.name == required), || format!("suite lacks {required}"))?;
    }
    ensure(elapsed <= VALIDATE_BUDGET_S, || format!("suite took {elapsed:.1} s"))?;
    Ok(format!("{} checks passed in {elapsed:.1} s", report.checks.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("analytic timing reproduction", analytic_timing),
        ("ideal protocol exactness", ideal_protocols),
        ("ramp and coherence trend", ramp_trend),
        ("SWAP non-ideality", swap_nonideality),
        ("drive vs dressed frame cross-check", frame_cross_check),
        ("tomography oracle equivalence", tomography_oracles),
        ("Bell joint characteristic structure", bell_slices),
        ("conservation suite", conservation_suite),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}, {secs:.1} s): {detail}", k + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {} ({name}, {secs:.1} s): {why}", k + 1);
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

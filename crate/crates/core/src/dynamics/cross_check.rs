//! Comparison of the same schedule simulated in the drive frame and in the
//! dressed (JC) frame.
//!
//! Both runs are closed. Photon numbers are compared directly (the displaced
//! drive-frame modes carry no coherent offset); the dressed `sigma_z` is compared
//! with `(-1)^(p+1) <sigma_x>` of the lab qubit, `p` being the number of Rabi
//! flips so far. Samples are aligned by cumulative hold time.

use serde::{Deserialize, Serialize};

use super::{evolve, default_dt_max, CollapseSet, EvolveOptions, Sampling, Segment};
use crate::error::{Error, Result};
use crate::hilbert::{qubit_op, Frame, Pauli};
use crate::model::SystemParams;
use crate::protocols::{compile, default_fock_dim, hamiltonian_for, initial_state, protocol_layout, DriveEngine, PulseSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckOptions {
    /// Samples per hold, at the midpoints of equal sub-intervals so that no
    /// sample coincides with a flip or pulse.
    pub samples_per_hold: usize,
    pub fock_dim: Option<usize>,
}

impl Default for CrossCheckOptions {
    fn default() -> Self {
        Self { samples_per_hold: 20, fock_dim: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSample {
    /// 1-based hold index.
    pub hold: usize,
    /// Time spent in holds so far, in us.
    pub hold_time: f64,
    pub n_drive: Vec<f64>,
    pub n_jc: Vec<f64>,
    pub sigma_z_drive: f64,
    pub sigma_z_jc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub modes: Vec<String>,
    pub samples: Vec<CrossSample>,
    pub max_photon_discrepancy: f64,
    pub max_sigma_z_discrepancy: f64,
}

impl CrossCheckReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.max_photon_discrepancy.max(self.max_sigma_z_discrepancy)
    }
}

fn hold_windows(program: &super::CoefficientProgram) -> Vec<(f64, f64)> {
    program
        .segments
        .iter()
        .zip(program.segment_starts())
        .filter_map(|(seg, start)| match seg {
            Segment::Evolve { label, duration, .. } if label.starts_with("hold_") => Some((start, *duration)),
            _ => None,
        })
        .collect()
}

/// Runs `schedule` (a drive-frame schedule) in both frames and reports the
/// largest disagreement in photon numbers and mapped qubit polarization.
pub fn cross_check_frames(
    params: &SystemParams,
    schedule: &PulseSchedule,
    options: &CrossCheckOptions,
) -> Result<CrossCheckReport> {
    if schedule.frame != Frame::DriveFrame {
        return Err(Error::FrameMismatch("cross-check expects a drive-frame schedule".into()));
    }
    if options.samples_per_hold < 1 {
        return Err(Error::params("samples_per_hold", "must be at least 1"));
    }
    let modes = schedule.sideband_modes();
    let params = params.restricted_to(&modes).ideal();
    let layout = protocol_layout(schedule, options.fock_dim.unwrap_or_else(|| default_fock_dim(schedule, Frame::DriveFrame)))?;
    let jc_schedule = schedule.with_frame(Frame::JcFrame);

    let mut runs = Vec::with_capacity(2);
    for (frame, sched) in [(Frame::DriveFrame, schedule), (Frame::JcFrame, &jc_schedule)] {
        let ham = hamiltonian_for(frame, DriveEngine::Displaced, &params, &layout)?;
        let program = compile(sched, &params, &layout, frame, DriveEngine::Displaced)?;
        let windows = hold_windows(&program);
        let m = options.samples_per_hold;
        let mut times = Vec::new();
        let mut tags = Vec::new();
        let mut cumulative = 0.0;
        for (k, &(start, duration)) in windows.iter().enumerate() {
            for j in 0..m {
                let f = (j as f64 + 0.5) / m as f64;
                times.push(start + f * duration);
                tags.push((k + 1, cumulative + f * duration));
            }
            cumulative += duration;
        }
        let opts = EvolveOptions::new(default_dt_max(frame, &params))
            .with_sampling(Sampling::Times(times))
            .with_extra("sigma_x", qubit_op(&layout, Pauli::X)?);
        let psi0 = initial_state(sched, &layout, frame)?;
        let traj = evolve(&ham, &program, &psi0, &CollapseSet::new(), &opts)?;
        runs.push((traj, tags));
    }
    let (drive, tags) = &runs[0];
    let (jc, jc_tags) = &runs[1];
    if tags.len() != jc_tags.len() {
        return Err(Error::InvalidSchedule("hold structure differs between frames".into()));
    }

    let mode_cols: Vec<String> = modes.iter().map(|m| format!("n_{m}")).collect();
    let col = |t: &super::Trajectory, name: &str| t.column(name).ok_or_else(|| Error::UnknownLabel(name.to_string()));
    let drive_n: Vec<Vec<f64>> = mode_cols.iter().map(|c| col(drive, c)).collect::<Result<_>>()?;
    let jc_n: Vec<Vec<f64>> = mode_cols.iter().map(|c| col(jc, c)).collect::<Result<_>>()?;
    let sx = col(drive, "sigma_x")?;
    let sz = col(jc, "sigma_z")?;

    let mut samples = Vec::with_capacity(tags.len());
    let (mut max_n, mut max_z) = (0.0f64, 0.0f64);
    for (i, &(hold, hold_time)) in tags.iter().enumerate() {
        let parity_sign = if (hold - 1) % 2 == 0 { -1.0 } else { 1.0 };
        let sample = CrossSample {
            hold,
            hold_time,
            n_drive: drive_n.iter().map(|c| c[i]).collect(),
            n_jc: jc_n.iter().map(|c| c[i]).collect(),
            sigma_z_drive: parity_sign * sx[i],
            sigma_z_jc: sz[i],
        };
        for (a, b) in sample.n_drive.iter().zip(&sample.n_jc) {
            max_n = max_n.max((a - b).abs());
        }
        max_z = max_z.max((sample.sigma_z_drive - sample.sigma_z_jc).abs());
        samples.push(sample);
    }
    Ok(CrossCheckReport {
        modes: modes.iter().map(|m| m.to_string()).collect(),
        samples,
        max_photon_discrepancy: max_n,
        max_sigma_z_discrepancy: max_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{analytic_timings, fock_generation_schedule, RampSpec};

    #[test]
    fn uncoupled_system_agrees_exactly() {
        let p = SystemParams { eps_1: 0.0, eps_2: 0.0, ..SystemParams::default() };
        let t = analytic_timings(0.182, 2).unwrap();
        let s = fock_generation_schedule(2, &t, RampSpec::sideband_only(0.2), Frame::DriveFrame).unwrap();
        let report = cross_check_frames(&p, &s, &CrossCheckOptions { samples_per_hold: 5, fock_dim: None }).unwrap();
        assert_eq!(report.samples.len(), 10);
        assert!(report.max_discrepancy() < 1e-8, "{report:?}");
    }

    #[test]
    fn single_photon_generation_agrees() {
        let p = SystemParams::default();
        let t = analytic_timings(0.182, 1).unwrap();
        let s = fock_generation_schedule(1, &t, RampSpec::sideband_only(0.2), Frame::DriveFrame).unwrap();
        let report = cross_check_frames(&p, &s, &CrossCheckOptions::default()).unwrap();
        assert!(report.max_discrepancy() < 0.01, "{} {}", report.max_photon_discrepancy, report.max_sigma_z_discrepancy);
        let last = report.samples.last().unwrap();
        assert!(last.n_jc[0] > 0.99);
    }
}

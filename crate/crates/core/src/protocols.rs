//! Fock-state generation, Fock-state SWAP and Bell-state generation as pulse
//! schedules, and their compilation into channel programs for either frame.
//!
//! Schedules are written in lab terms (sideband ramps, qubit pulses, Rabi holds
//! and sign flips). The drive-frame compiler realizes every step literally. The
//! dressed-frame compiler absorbs ramps and qubit pulses: pulses that precede
//! the Rabi drive set the dressed-frame initial state, and the closing pulse maps
//! the dressed ground state onto the lab ground state, so the final dressed
//! `sigma_z` reads the lab qubit population directly.
//!
//! A Rabi sign flip exchanges the roles of the dressed states. In the dressed
//! frame it is an instantaneous `sigma_x` on the qubit.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    collapse_from_params, default_dt_max, evolve, CollapseSet, CoefficientProgram, Envelope, EvolveOptions, RampShape,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::hilbert::{embed_matrix, pauli, CMatrix, CVector, Frame, Pauli, QuantumState, SubsystemLayout, C64, I, ONE, QUBIT};
use crate::model::{
    angular, build_displaced_drive_hamiltonian, build_drive_frame_hamiltonian, build_jc_channels, coupling_im_channel,
    coupling_re_channel, effective_coupling, jc_channel, jc_quadrature_channel, qubit_frame_unitary, stark_channel,
    steady_state_amplitude, ChannelHamiltonian, Mode, SystemParams, RABI_CHANNEL,
};

/// A drive line: the qubit Rabi drive or a sideband drive on one mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Channel {
    Rabi,
    Sideband(Mode),
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Rabi => f.write_str("rabi"),
            Channel::Sideband(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "rabi" {
            Ok(Channel::Rabi)
        } else {
            Ok(Channel::Sideband(s.parse()?))
        }
    }
}

impl TryFrom<String> for Channel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Channel> for String {
    fn from(c: Channel) -> String {
        c.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

fn one() -> f64 {
    1.0
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    /// Ramps a drive from zero to `amplitude` (relative to the configured drive).
    RampUp {
        channel: Channel,
        #[serde(default = "one")]
        amplitude: f64,
        ramp_us: f64,
        #[serde(default)]
        shape: RampShape,
        /// Sideband drive phase in radians.
        #[serde(default, skip_serializing_if = "is_zero")]
        phase: f64,
    },
    /// Evolves with every active drive held constant.
    Hold { duration_us: f64 },
    /// Inverts the sign of the Rabi drive.
    RabiPhaseFlip,
    /// Instantaneous lab-frame qubit rotation `exp(-i angle sigma / 2)`.
    QubitPulse { axis: Axis, angle: f64 },
    RampDown {
        channel: Channel,
        ramp_us: f64,
        #[serde(default)]
        shape: RampShape,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    FockGeneration,
    Swap,
    Bell,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleMetadata {
    pub protocol: ProtocolKind,
    pub n: usize,
    /// Photon numbers the modes start in; unlisted modes start in vacuum.
    #[serde(default)]
    pub initial_photons: BTreeMap<Mode, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub frame: Frame,
    pub steps: Vec<Step>,
    pub metadata: ScheduleMetadata,
}

impl PulseSchedule {
    pub fn validate(&self) -> Result<()> {
        let mut active: BTreeMap<Channel, ()> = BTreeMap::new();
        for (k, step) in self.steps.iter().enumerate() {
            let bad = |msg: String| Err(Error::InvalidSchedule(format!("step {k}: {msg}")));
            match step {
                Step::RampUp { channel, amplitude, ramp_us, phase, .. } => {
                    if !(ramp_us.is_finite() && *ramp_us >= 0.0) {
                        return bad(format!("ramp length {ramp_us} must be finite and non-negative"));
                    }
                    if !amplitude.is_finite() || !phase.is_finite() {
                        return bad("amplitude and phase must be finite".into());
                    }
                    if *channel == Channel::Rabi && *phase != 0.0 {
                        return bad("the Rabi drive has no phase field; use rabi_phase_flip".into());
                    }
                    if active.insert(*channel, ()).is_some() {
                        return bad(format!("{channel} ramped up twice"));
                    }
                }
                Step::RampDown { channel, ramp_us, .. } => {
                    if !(ramp_us.is_finite() && *ramp_us >= 0.0) {
                        return bad(format!("ramp length {ramp_us} must be finite and non-negative"));
                    }
                    if active.remove(channel).is_none() {
                        return bad(format!("{channel} ramped down while inactive"));
                    }
                }
                Step::Hold { duration_us } => {
                    if !(duration_us.is_finite() && *duration_us > 0.0) {
                        return bad(format!("hold duration {duration_us} must be positive"));
                    }
                }
                Step::RabiPhaseFlip => {
                    if !active.contains_key(&Channel::Rabi) {
                        return bad("phase flip while the Rabi drive is off".into());
                    }
                }
                Step::QubitPulse { angle, .. } => {
                    if !angle.is_finite() {
                        return bad("pulse angle must be finite".into());
                    }
                }
            }
        }
        if let Some((channel, _)) = active.iter().next() {
            return Err(Error::InvalidSchedule(format!("{channel} is never ramped down")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a schedule. Field errors carry their JSON path.
    pub fn from_json(text: &str) -> Result<Self> {
        let schedule: PulseSchedule = crate::config::parse_json(text)?;
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn with_frame(&self, frame: Frame) -> Self {
        Self { frame, ..self.clone() }
    }

    /// Sideband modes driven anywhere in the schedule, in mode order.
    pub fn sideband_modes(&self) -> Vec<Mode> {
        let mut modes: Vec<Mode> = self
            .steps
            .iter()
            .filter_map(|s| match s {
                Step::RampUp { channel: Channel::Sideband(m), .. } => Some(*m),
                _ => None,
            })
            .collect();
        modes.sort();
        modes.dedup();
        modes
    }

    pub fn holds(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Hold { duration_us } => Some(*duration_us),
                _ => None,
            })
            .collect()
    }

    pub fn flip_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::RabiPhaseFlip)).count()
    }

    /// Largest photon number the protocol is expected to populate.
    pub fn max_photons(&self) -> usize {
        let initial = self.metadata.initial_photons.values().copied().sum::<usize>();
        match self.metadata.protocol {
            ProtocolKind::FockGeneration => self.metadata.n,
            ProtocolKind::Bell => 1,
            _ => initial.max(self.metadata.n).max(1),
        }
    }

    /// Replaces the duration of the `index`-th hold (0-based).
    pub fn with_hold(&self, index: usize, duration_us: f64) -> Result<Self> {
        let mut out = self.clone();
        let step = out
            .steps
            .iter_mut()
            .filter(|s| matches!(s, Step::Hold { .. }))
            .nth(index)
            .ok_or_else(|| Error::InvalidSchedule(format!("schedule has no hold {index}")))?;
        *step = Step::Hold { duration_us };
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingSource {
    Analytic,
    Calibrated,
}

/// Hold durations `tau_n` (generation) and `tau'_n` (SWAP), in us, indexed from `n = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub tau: Vec<f64>,
    pub tau_prime: Vec<Option<f64>>,
    pub source: TimingSource,
}

impl TimingTable {
    pub fn tau(&self, n: usize) -> Result<f64> {
        n.checked_sub(1)
            .and_then(|i| self.tau.get(i).copied())
            .ok_or_else(|| Error::MissingTiming(format!("tau_{n}")))
    }

    pub fn tau_prime(&self, n: usize) -> Result<f64> {
        n.checked_sub(1)
            .and_then(|i| self.tau_prime.get(i).copied().flatten())
            .ok_or_else(|| Error::MissingTiming(format!("tau'_{n}")))
    }

    pub fn set_tau(&mut self, n: usize, value: f64) {
        if self.tau.len() < n {
            self.tau.resize(n, f64::NAN);
        }
        self.tau[n - 1] = value;
        self.source = TimingSource::Calibrated;
    }

    pub fn set_tau_prime(&mut self, n: usize, value: f64) {
        if self.tau_prime.len() < n {
            self.tau_prime.resize(n, None);
        }
        self.tau_prime[n - 1] = Some(value);
        self.source = TimingSource::Calibrated;
    }
}

/// `tau_1 = 1/(4 g)` for `g` in MHz, `tau_n = tau_1 / sqrt n`, `tau'_1 = sqrt 2 tau_1`.
/// SWAP times for `n >= 2` have no closed form and are left unset.
pub fn analytic_timings(g: f64, n_max: usize) -> Result<TimingTable> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::params("g", "coupling must be positive"));
    }
    let tau1 = 1.0 / (4.0 * g);
    let tau = (1..=n_max).map(|n| tau1 / (n as f64).sqrt()).collect();
    let mut tau_prime = vec![None; n_max.max(1)];
    tau_prime[0] = Some(SQRT_2 * tau1);
    Ok(TimingTable { tau, tau_prime, source: TimingSource::Analytic })
}

/// Ramp lengths for the sideband and Rabi drives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    pub sideband_us: f64,
    pub rabi_us: f64,
    pub shape: RampShape,
}

impl RampSpec {
    /// The same ramp on every drive.
    pub fn uniform(len_us: f64) -> Self {
        Self { sideband_us: len_us, rabi_us: len_us, shape: RampShape::Cosine }
    }

    /// Ramped sidebands, Rabi drive switched on and off instantaneously.
    pub fn sideband_only(len_us: f64) -> Self {
        Self { sideband_us: len_us, rabi_us: 0.0, shape: RampShape::Cosine }
    }

    pub fn none() -> Self {
        Self::uniform(0.0)
    }
}

fn ramp_up(channel: Channel, len: f64, shape: RampShape) -> Step {
    Step::RampUp { channel, amplitude: 1.0, ramp_us: len, shape, phase: 0.0 }
}

fn ramp_down(channel: Channel, len: f64, shape: RampShape) -> Step {
    Step::RampDown { channel, ramp_us: len, shape }
}

fn y_pulse(angle: f64) -> Step {
    Step::QubitPulse { axis: Axis::Y, angle }
}

/// Generation of `|n>` in memory 1: excite the emitting dressed state, then
/// `n` Rabi holds `tau_1..tau_n` separated by sign flips, then a `pi/2` pulse in
/// phase with the final Rabi drive.
pub fn fock_generation_schedule(n: usize, timings: &TimingTable, ramps: RampSpec, frame: Frame) -> Result<PulseSchedule> {
    if n < 1 {
        return Err(Error::InvalidSchedule("generation needs n >= 1".into()));
    }
    let mem = Channel::Sideband(Mode::Mem1);
    let mut steps = vec![ramp_up(mem, ramps.sideband_us, ramps.shape), y_pulse(FRAC_PI_2), ramp_up(Channel::Rabi, ramps.rabi_us, ramps.shape)];
    for k in 1..=n {
        if k > 1 {
            steps.push(Step::RabiPhaseFlip);
        }
        steps.push(Step::Hold { duration_us: timings.tau(k)? });
    }
    let final_sign = if (n - 1) % 2 == 0 { 1.0 } else { -1.0 };
    steps.push(ramp_down(Channel::Rabi, ramps.rabi_us, ramps.shape));
    steps.push(y_pulse(final_sign * FRAC_PI_2));
    steps.push(ramp_down(mem, ramps.sideband_us, ramps.shape));
    let schedule = PulseSchedule {
        frame,
        steps,
        metadata: ScheduleMetadata { protocol: ProtocolKind::FockGeneration, n, initial_photons: BTreeMap::new() },
    };
    schedule.validate()?;
    Ok(schedule)
}

/// SWAP of `|n, 0>` into `|0, n>` with equal couplings and the qubit starting
/// in the non-emitting dressed state. A closing `pi/2` returns the qubit to `|g>`.
pub fn swap_schedule(n: usize, timings: &TimingTable, ramps: RampSpec, frame: Frame) -> Result<PulseSchedule> {
    if n < 1 {
        return Err(Error::InvalidSchedule("swap needs n >= 1".into()));
    }
    let hold = timings.tau_prime(n)?;
    let mut schedule = two_mode_schedule(Some(hold), -FRAC_PI_2, ramps, frame);
    schedule.metadata = ScheduleMetadata {
        protocol: ProtocolKind::Swap,
        n,
        initial_photons: BTreeMap::from([(Mode::Mem1, n)]),
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Bell-state generation: qubit in the emitting dressed state, both sidebands
/// on, Rabi hold of `tau'_1 / 2`.
pub fn bell_schedule(timings: &TimingTable, ramps: RampSpec, frame: Frame) -> Result<PulseSchedule> {
    bell_schedule_with_hold(timings.tau_prime(1)? / 2.0, ramps, frame)
}

/// Bell protocol with an explicit hold; a zero hold omits the Rabi hold entirely.
pub fn bell_schedule_with_hold(hold_us: f64, ramps: RampSpec, frame: Frame) -> Result<PulseSchedule> {
    let mut schedule = two_mode_schedule((hold_us > 0.0).then_some(hold_us), FRAC_PI_2, ramps, frame);
    schedule.metadata = ScheduleMetadata { protocol: ProtocolKind::Bell, n: 1, initial_photons: BTreeMap::new() };
    schedule.validate()?;
    Ok(schedule)
}

fn two_mode_schedule(hold: Option<f64>, init_angle: f64, ramps: RampSpec, frame: Frame) -> PulseSchedule {
    let (m1, m2) = (Channel::Sideband(Mode::Mem1), Channel::Sideband(Mode::Mem2));
    let mut steps = vec![
        ramp_up(m1, ramps.sideband_us, ramps.shape),
        ramp_up(m2, ramps.sideband_us, ramps.shape),
        y_pulse(init_angle),
        ramp_up(Channel::Rabi, ramps.rabi_us, ramps.shape),
    ];
    if let Some(duration_us) = hold {
        steps.push(Step::Hold { duration_us });
    }
    steps.extend([
        ramp_down(Channel::Rabi, ramps.rabi_us, ramps.shape),
        y_pulse(FRAC_PI_2),
        ramp_down(m1, ramps.sideband_us, ramps.shape),
        ramp_down(m2, ramps.sideband_us, ramps.shape),
    ]);
    PulseSchedule {
        frame,
        steps,
        metadata: ScheduleMetadata { protocol: ProtocolKind::Custom, n: 0, initial_photons: BTreeMap::new() },
    }
}

/// `exp(-i angle sigma / 2)`.
pub fn qubit_rotation(axis: Axis, angle: f64) -> CMatrix {
    let sigma = match axis {
        Axis::X => pauli(Pauli::X).into_data(),
        Axis::Y => pauli(Pauli::Y).into_data(),
    };
    let (s, c) = (angle / 2.0).sin_cos();
    CMatrix::identity(2, 2) * C64::from(c) - sigma * (I * s)
}

/// How the drive-frame compiler treats the coherent drive population.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveEngine {
    /// Modes shifted by their instantaneous steady state (see the model module).
    #[default]
    Displaced,
    /// Explicit `epsilon (a^dag + a)` drives; needs a truncation holding the coherent state.
    Literal,
}

/// Channel Hamiltonian matching [`compile`] for the given frame.
pub fn hamiltonian_for(
    frame: Frame,
    engine: DriveEngine,
    params: &SystemParams,
    layout: &SubsystemLayout,
) -> Result<ChannelHamiltonian> {
    match (frame, engine) {
        (Frame::JcFrame, _) => build_jc_channels(layout),
        (Frame::DriveFrame, DriveEngine::Displaced) => build_displaced_drive_hamiltonian(params, layout),
        (Frame::DriveFrame, DriveEngine::Literal) => build_drive_frame_hamiltonian(params, layout),
    }
}

#[derive(Clone, Copy, Debug)]
struct Level {
    value: f64,
    phase: f64,
}

/// Compiles a schedule into channel coefficients for `frame`.
pub fn compile(
    schedule: &PulseSchedule,
    params: &SystemParams,
    layout: &SubsystemLayout,
    frame: Frame,
    engine: DriveEngine,
) -> Result<CoefficientProgram> {
    if schedule.frame != frame {
        return Err(Error::FrameMismatch(format!("schedule is for {:?}, requested {frame:?}", schedule.frame)));
    }
    schedule.validate()?;
    params.validate()?;
    for mode in schedule.sideband_modes() {
        if !layout.contains(mode.label()) {
            return Err(Error::InvalidLayout(format!("schedule drives {mode}, absent from {layout}")));
        }
    }
    match frame {
        Frame::JcFrame => compile_jc(schedule, params, layout),
        Frame::DriveFrame => compile_drive(schedule, params, layout, engine),
    }
}

fn compile_jc(schedule: &PulseSchedule, params: &SystemParams, layout: &SubsystemLayout) -> Result<CoefficientProgram> {
    let mut program = CoefficientProgram::new();
    let mut levels: BTreeMap<Channel, Level> = BTreeMap::new();
    let x = embed_matrix(pauli(Pauli::X).data(), layout, QUBIT)?;
    let (mut holds, mut flips) = (0, 0);
    for step in &schedule.steps {
        match step {
            Step::RampUp { channel, amplitude, phase, .. } => {
                levels.insert(*channel, Level { value: *amplitude, phase: *phase });
            }
            Step::RampDown { channel, .. } => {
                levels.remove(channel);
            }
            Step::QubitPulse { .. } => {}
            Step::RabiPhaseFlip => {
                flips += 1;
                program.instant(format!("flip_{flips}"), x.clone());
            }
            Step::Hold { duration_us } => {
                holds += 1;
                let rabi = levels.get(&Channel::Rabi).map(|l| l.value).unwrap_or(0.0);
                if rabi == 0.0 {
                    return Err(Error::InvalidSchedule("dressed-frame hold without the Rabi drive".into()));
                }
                let mut envelopes = BTreeMap::new();
                for (channel, level) in &levels {
                    if let Channel::Sideband(mode) = channel {
                        let g = angular(effective_coupling(params, *mode)?) * level.value;
                        envelopes.insert(jc_channel(*mode), Envelope::Constant(g * level.phase.cos()));
                        if level.phase != 0.0 {
                            envelopes.insert(jc_quadrature_channel(*mode), Envelope::Constant(g * level.phase.sin()));
                        }
                    }
                }
                program.evolve(format!("hold_{holds}"), *duration_us, envelopes);
            }
        }
    }
    Ok(program)
}

fn compile_drive(
    schedule: &PulseSchedule,
    params: &SystemParams,
    layout: &SubsystemLayout,
    engine: DriveEngine,
) -> Result<CoefficientProgram> {
    let omega = angular(params.rabi_freq);
    let compensated = schedule.sideband_modes();
    let mut program = CoefficientProgram::new();
    let mut levels: BTreeMap<Channel, Level> = BTreeMap::new();
    let mut rabi_sign = 1.0;
    let (mut holds, mut pulses) = (0, 0);

    // Envelopes for a segment in which `ramping` (if any) moves from `from` to `to`.
    let envelopes = |levels: &BTreeMap<Channel, Level>,
                     ramping: Option<(Channel, f64, f64, f64, RampShape)>,
                     rabi_sign: f64|
     -> Result<BTreeMap<String, Envelope>> {
        let mut out = BTreeMap::new();
        let level_of = |channel: Channel| -> (f64, f64, f64, RampShape, f64) {
            let phase = levels.get(&channel).map(|l| l.phase).unwrap_or(0.0);
            match ramping {
                Some((c, from, to, len, shape)) if c == channel => (from, to, len, shape, phase),
                _ => {
                    let v = levels.get(&channel).map(|l| l.value).unwrap_or(0.0);
                    (v, v, 0.0, RampShape::Cosine, phase)
                }
            }
        };
        let (from, to, len, shape, _) = level_of(Channel::Rabi);
        if from != 0.0 || to != 0.0 {
            let s = rabi_sign * omega;
            out.insert(RABI_CHANNEL.to_string(), Envelope::Ramp { from: s * from, to: s * to, len, shape });
        }
        for &mode in &compensated {
            let (from, to, len, shape, phase) = level_of(Channel::Sideband(mode));
            match engine {
                DriveEngine::Displaced => {
                    let abar = steady_state_amplitude(params, mode)? * C64::from_polar(1.0, phase);
                    if from != 0.0 || to != 0.0 {
                        out.insert(
                            coupling_re_channel(mode),
                            Envelope::Ramp { from: from * abar.re, to: to * abar.re, len, shape },
                        );
                        if abar.im != 0.0 {
                            out.insert(
                                coupling_im_channel(mode),
                                Envelope::Ramp { from: from * abar.im, to: to * abar.im, len, shape },
                            );
                        }
                    }
                    let a2 = abar.norm_sqr();
                    out.insert(
                        stark_channel(mode),
                        Envelope::RampSquared { from, to, len, shape, scale: a2, offset: -a2 },
                    );
                }
                DriveEngine::Literal => {
                    if phase != 0.0 {
                        return Err(Error::InvalidSchedule("the literal drive engine supports only zero drive phase".into()));
                    }
                    let eps = angular(params.eps(mode));
                    if from != 0.0 || to != 0.0 {
                        out.insert(format!("drive_{mode}"), Envelope::Ramp { from: from * eps, to: to * eps, len, shape });
                    }
                }
            }
        }
        if engine == DriveEngine::Literal && !compensated.is_empty() {
            out.insert("stark_comp".to_string(), Envelope::Constant(1.0));
        }
        Ok(out)
    };

    for step in &schedule.steps {
        match step {
            Step::RampUp { channel, amplitude, ramp_us, shape, phase } => {
                levels.insert(*channel, Level { value: 0.0, phase: *phase });
                if *ramp_us > 0.0 {
                    let env = envelopes(&levels, Some((*channel, 0.0, *amplitude, *ramp_us, *shape)), rabi_sign)?;
                    program.evolve(format!("ramp_up_{channel}"), *ramp_us, env);
                }
                levels.insert(*channel, Level { value: *amplitude, phase: *phase });
            }
            Step::RampDown { channel, ramp_us, shape } => {
                let from = levels.get(channel).map(|l| l.value).unwrap_or(0.0);
                if *ramp_us > 0.0 {
                    let env = envelopes(&levels, Some((*channel, from, 0.0, *ramp_us, *shape)), rabi_sign)?;
                    program.evolve(format!("ramp_down_{channel}"), *ramp_us, env);
                }
                levels.remove(channel);
            }
            Step::Hold { duration_us } => {
                holds += 1;
                program.evolve(format!("hold_{holds}"), *duration_us, envelopes(&levels, None, rabi_sign)?);
            }
            Step::RabiPhaseFlip => rabi_sign = -rabi_sign,
            Step::QubitPulse { axis, angle } => {
                pulses += 1;
                program.instant(format!("pulse_{pulses}"), embed_matrix(&qubit_rotation(*axis, *angle), layout, QUBIT)?);
            }
        }
    }
    Ok(program)
}

/// Starting state of a schedule. In the dressed frame the qubit pulses that
/// precede the Rabi drive are folded into it.
pub fn initial_state(schedule: &PulseSchedule, layout: &SubsystemLayout, frame: Frame) -> Result<QuantumState> {
    let mut levels = Vec::with_capacity(layout.len());
    for label in layout.labels() {
        if label == QUBIT {
            levels.push(0);
        } else {
            let mode: Mode = label.parse()?;
            levels.push(schedule.metadata.initial_photons.get(&mode).copied().unwrap_or(0));
        }
    }
    let lab = QuantumState::basis(layout.clone(), frame, &levels)?;
    if frame == Frame::DriveFrame {
        return Ok(lab);
    }
    let mut qubit = CVector::from_vec(vec![ONE, C64::from(0.0)]);
    for step in &schedule.steps {
        match step {
            Step::QubitPulse { axis, angle } => qubit = qubit_rotation(*axis, *angle) * qubit,
            Step::RampUp { channel: Channel::Rabi, .. } => break,
            _ => {}
        }
    }
    let mut dressed = qubit_frame_unitary(false) * qubit;
    // Fix the global phase so the dominant component is real and positive.
    let lead = if dressed[0].norm() >= dressed[1].norm() { dressed[0] } else { dressed[1] };
    dressed *= lead.conj() / C64::from(lead.norm());
    let u = embed_matrix(&(dressed.clone() * CVector::from_vec(vec![ONE, C64::from(0.0)]).adjoint()), layout, QUBIT)?;
    // `u` maps |.., g> to |.., dressed>; the basis state has the qubit in g.
    lab.transform(&u)
}

/// Layout holding every mode the schedule drives or populates, each truncated at `fock_dim`.
pub fn protocol_layout(schedule: &PulseSchedule, fock_dim: usize) -> Result<SubsystemLayout> {
    let mut modes = schedule.sideband_modes();
    for mode in schedule.metadata.initial_photons.keys() {
        if !modes.contains(mode) {
            modes.push(*mode);
        }
    }
    modes.sort();
    let labels: Vec<&str> = modes.iter().map(|m| m.label()).collect();
    SubsystemLayout::modes_with_qubit(&labels, fock_dim)
}

/// Fock truncation used when none is configured: target photon number plus 5
/// in the dressed frame, plus 6 in the drive frame.
pub fn default_fock_dim(schedule: &PulseSchedule, frame: Frame) -> usize {
    schedule.max_photons()
        + match frame {
            Frame::JcFrame => 5,
            Frame::DriveFrame => 6,
        }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub frame: Frame,
    pub engine: DriveEngine,
    pub fock_dim: Option<usize>,
    pub decoherence: bool,
    pub evolve: Option<EvolveOptions>,
}

impl RunOptions {
    pub fn ideal(frame: Frame) -> Self {
        Self { frame, engine: DriveEngine::Displaced, fock_dim: None, decoherence: false, evolve: None }
    }

    pub fn decoherent(frame: Frame) -> Self {
        Self { decoherence: true, ..Self::ideal(frame) }
    }
}

/// Everything needed to rerun or analyze one protocol execution.
#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub layout: SubsystemLayout,
    pub program: CoefficientProgram,
    pub trajectory: Trajectory,
}

impl ProtocolRun {
    pub fn final_state(&self) -> &QuantumState {
        &self.trajectory.final_state
    }
}

/// A schedule compiled for one frame, ready to evolve.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub params: SystemParams,
    pub layout: SubsystemLayout,
    pub hamiltonian: ChannelHamiltonian,
    pub program: CoefficientProgram,
    pub initial: QuantumState,
    pub collapse: CollapseSet,
    pub evolve_options: EvolveOptions,
}

impl PreparedRun {
    pub fn run(&self) -> Result<ProtocolRun> {
        let trajectory = evolve(&self.hamiltonian, &self.program, &self.initial, &self.collapse, &self.evolve_options)?;
        Ok(ProtocolRun { layout: self.layout.clone(), program: self.program.clone(), trajectory })
    }
}

/// Builds the layout, Hamiltonian, program, initial state and collapse
/// operators for `schedule` in `opts.frame`. Parameters are restricted to the
/// modes the schedule uses.
pub fn prepare(schedule: &PulseSchedule, params: &SystemParams, opts: &RunOptions) -> Result<PreparedRun> {
    let frame = opts.frame;
    let schedule = if schedule.frame == frame { schedule.clone() } else { schedule.with_frame(frame) };
    let layout = protocol_layout(&schedule, opts.fock_dim.unwrap_or_else(|| default_fock_dim(&schedule, frame)))?;
    let modes = schedule.sideband_modes();
    let params = params.restricted_to(&modes);
    let hamiltonian = hamiltonian_for(frame, opts.engine, &params, &layout)?;
    let program = compile(&schedule, &params, &layout, frame, opts.engine)?;
    let initial = initial_state(&schedule, &layout, frame)?;
    let collapse = if opts.decoherence { collapse_from_params(&params, &layout, frame)? } else { CollapseSet::new() };
    let evolve_options = match &opts.evolve {
        Some(o) => o.clone(),
        None if collapse.is_empty() => EvolveOptions::new(default_dt_max(frame, &params)),
        None => EvolveOptions::lindblad(default_dt_max(frame, &params)),
    };
    Ok(PreparedRun { params, layout, hamiltonian, program, initial, collapse, evolve_options })
}

/// Compiles and evolves a schedule (closed evolution unless decoherence is on).
pub fn simulate(schedule: &PulseSchedule, params: &SystemParams, opts: &RunOptions) -> Result<ProtocolRun> {
    prepare(schedule, params, opts)?.run()
}

/// Result of a protocol run, after post-selecting the qubit in `|g>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub fidelity: f64,
    pub postselect_prob: f64,
}

/// Fidelity of the post-selected mode state with the protocol target.
pub fn outcome(schedule: &PulseSchedule, run: &ProtocolRun) -> Result<Outcome> {
    let (post, postselect_prob) = crate::tomography::postselect_ground(run.final_state())?;
    let target = target_state(&schedule.with_frame(post.frame()), post.layout())?;
    Ok(Outcome { fidelity: crate::tomography::fidelity(&post, &target)?, postselect_prob })
}

/// The state a protocol aims for, on the memory modes only.
pub fn target_state(schedule: &PulseSchedule, mode_layout: &SubsystemLayout) -> Result<QuantumState> {
    let n = schedule.metadata.n;
    let frame = schedule.frame;
    match schedule.metadata.protocol {
        ProtocolKind::FockGeneration => {
            let mut levels = vec![0; mode_layout.len()];
            levels[mode_layout.index_of(Mode::Mem1.label())?] = n;
            QuantumState::basis(mode_layout.clone(), frame, &levels)
        }
        ProtocolKind::Swap => {
            let mut levels = vec![0; mode_layout.len()];
            levels[mode_layout.index_of(Mode::Mem2.label())?] = n;
            QuantumState::basis(mode_layout.clone(), frame, &levels)
        }
        ProtocolKind::Bell => bell_target(mode_layout, frame),
        ProtocolKind::Custom => Err(Error::InvalidSchedule("custom schedules have no built-in target".into())),
    }
}

/// `(|1,0> + |0,1>)/sqrt 2` on memory 1 and memory 2.
pub fn bell_target(mode_layout: &SubsystemLayout, frame: Frame) -> Result<QuantumState> {
    let i1 = mode_layout.index_of(Mode::Mem1.label())?;
    let i2 = mode_layout.index_of(Mode::Mem2.label())?;
    let mut a = vec![0; mode_layout.len()];
    let mut b = vec![0; mode_layout.len()];
    a[i1] = 1;
    b[i2] = 1;
    let mut v = CVector::zeros(mode_layout.total_dim());
    v[mode_layout.basis_index(&a)?] = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    v[mode_layout.basis_index(&b)?] = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    QuantumState::pure(mode_layout.clone(), frame, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{expectation, mode_number, partial_trace, qubit_op};
    use crate::tomography::{fidelity, postselect_ground};

    fn timings() -> TimingTable {
        analytic_timings(0.182, 5).unwrap()
    }

    #[test]
    fn analytic_timing_examples() {
        let t = timings();
        assert!((t.tau(1).unwrap() - 1.0 / (4.0 * 0.182)).abs() < 1e-15);
        assert!((t.tau(1).unwrap() - 1.374).abs() < 5e-4);
        assert!((t.tau(2).unwrap() / t.tau(1).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((t.tau_prime(1).unwrap() / t.tau(1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((t.tau_prime(1).unwrap() - 1.943).abs() < 5e-4);
        assert!(matches!(t.tau_prime(2), Err(Error::MissingTiming(_))));
        assert!(analytic_timings(0.0, 3).is_err());
        let doubled = analytic_timings(0.364, 5).unwrap();
        for n in 1..=5 {
            assert!((doubled.tau(n).unwrap() - t.tau(n).unwrap() / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn generation_structure() {
        let t = timings();
        let s1 = fock_generation_schedule(1, &t, RampSpec::uniform(0.2), Frame::DriveFrame).unwrap();
        assert_eq!(s1.holds().len(), 1);
        assert_eq!(s1.flip_count(), 0);
        let s3 = fock_generation_schedule(3, &t, RampSpec::uniform(0.2), Frame::JcFrame).unwrap();
        assert_eq!(s3.flip_count(), 2);
        let total: f64 = s3.holds().iter().sum();
        assert!((total - 3.138).abs() < 1e-3);
        assert!(fock_generation_schedule(0, &t, RampSpec::none(), Frame::JcFrame).is_err());
        assert!(matches!(
            fock_generation_schedule(6, &t, RampSpec::none(), Frame::JcFrame),
            Err(Error::MissingTiming(_))
        ));
    }

    #[test]
    fn drive_compile_structure() {
        let p = SystemParams::default().restricted_to(&[Mode::Mem1]);
        let s = fock_generation_schedule(1, &timings(), RampSpec::uniform(0.2), Frame::DriveFrame).unwrap();
        let layout = protocol_layout(&s, 7).unwrap();
        let prog = compile(&s, &p, &layout, Frame::DriveFrame, DriveEngine::Displaced).unwrap();
        let labels: Vec<&str> = prog.segments.iter().map(|s| s.label()).collect();
        assert_eq!(
            labels,
            ["ramp_up_mem1", "pulse_1", "ramp_up_rabi", "hold_1", "ramp_down_rabi", "pulse_2", "ramp_down_mem1"]
        );
        assert!(compile(&s, &p, &layout, Frame::JcFrame, DriveEngine::Displaced).is_err());
    }

    #[test]
    fn jc_compile_hold_is_constant_g() {
        let p = SystemParams::default();
        let s = fock_generation_schedule(1, &timings(), RampSpec::uniform(0.2), Frame::JcFrame).unwrap();
        let layout = protocol_layout(&s, 6).unwrap();
        let prog = compile(&s, &p, &layout, Frame::JcFrame, DriveEngine::Displaced).unwrap();
        assert_eq!(prog.segments.len(), 1);
        match &prog.segments[0] {
            crate::dynamics::Segment::Evolve { duration, envelopes, .. } => {
                assert!((duration - 1.374).abs() < 5e-4);
                assert_eq!(envelopes["g_mem1"], Envelope::Constant(angular(0.182)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ideal_generation_reaches_fock_states() {
        let p = SystemParams::default();
        for n in 1..=5 {
            let s = fock_generation_schedule(n, &timings(), RampSpec::uniform(0.2), Frame::JcFrame).unwrap();
            let run = simulate(&s, &p, &RunOptions::ideal(Frame::JcFrame)).unwrap();
            let state = run.final_state();
            let nm = mode_number(&run.layout, "mem1").unwrap();
            assert!((expectation(state, &nm).unwrap().re - n as f64).abs() < 1e-6, "n={n}");
            let z = qubit_op(&run.layout, Pauli::Z).unwrap();
            assert!((1.0 + expectation(state, &z).unwrap().re) / 2.0 > 1.0 - 1e-6);
            let (post, prob) = postselect_ground(state).unwrap();
            assert!(prob > 1.0 - 1e-6);
            let mode = partial_trace(&post, &["mem1"]).unwrap();
            let target = target_state(&s, mode.layout()).unwrap();
            assert!(fidelity(&mode, &target).unwrap() > 1.0 - 1e-6);
        }
    }

    #[test]
    fn ideal_single_photon_swap_has_negative_phase() {
        let p = SystemParams::default();
        let s = swap_schedule(1, &timings(), RampSpec::uniform(0.2), Frame::JcFrame).unwrap();
        let run = simulate(&s, &p, &RunOptions::ideal(Frame::JcFrame)).unwrap();
        let v = run.final_state().vector().unwrap();
        let amp = v[run.layout.basis_index(&[0, 1, 0]).unwrap()];
        assert!((amp + ONE).norm() < 1e-6, "{amp}");
    }

    #[test]
    fn swap_of_vacuum_is_identity() {
        let p = SystemParams::default();
        let mut s = swap_schedule(1, &timings(), RampSpec::uniform(0.2), Frame::JcFrame).unwrap();
        s.metadata.initial_photons.clear();
        let run = simulate(&s, &p, &RunOptions { fock_dim: Some(4), ..RunOptions::ideal(Frame::JcFrame) }).unwrap();
        let v = run.final_state().vector().unwrap();
        assert!((v[0].norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bell_examples() {
        let p = SystemParams::default();
        let t = timings();
        let s = bell_schedule(&t, RampSpec::uniform(0.2), Frame::JcFrame).unwrap();
        let run = simulate(&s, &p, &RunOptions::ideal(Frame::JcFrame)).unwrap();
        let modes = partial_trace(run.final_state(), &["mem1", "mem2"]).unwrap();
        assert!(fidelity(&modes, &bell_target(modes.layout(), Frame::JcFrame).unwrap()).unwrap() > 1.0 - 1e-6);

        let quarter = bell_schedule_with_hold(t.tau_prime(1).unwrap() / 4.0, RampSpec::none(), Frame::JcFrame).unwrap();
        let run = simulate(&quarter, &p, &RunOptions::ideal(Frame::JcFrame)).unwrap();
        let z = qubit_op(&run.layout, Pauli::Z).unwrap();
        let excited = (1.0 - expectation(run.final_state(), &z).unwrap().re) / 2.0;
        assert!((excited - 0.5).abs() < 1e-6);

        let zero = bell_schedule_with_hold(0.0, RampSpec::none(), Frame::JcFrame).unwrap();
        let run = simulate(&zero, &p, &RunOptions::ideal(Frame::JcFrame)).unwrap();
        let psi0 = initial_state(&zero, &run.layout, Frame::JcFrame).unwrap();
        assert_eq!(run.final_state().vector(), psi0.vector());
    }

    #[test]
    fn initial_states_in_dressed_frame() {
        let t = timings();
        let gen = fock_generation_schedule(1, &t, RampSpec::none(), Frame::JcFrame).unwrap();
        let layout = protocol_layout(&gen, 3).unwrap();
        let psi = initial_state(&gen, &layout, Frame::JcFrame).unwrap();
        assert!((psi.vector().unwrap()[layout.basis_index(&[0, 1]).unwrap()] - ONE).norm() < 1e-15);
        let swap = swap_schedule(1, &t, RampSpec::none(), Frame::JcFrame).unwrap();
        let layout = protocol_layout(&swap, 3).unwrap();
        let psi = initial_state(&swap, &layout, Frame::JcFrame).unwrap();
        assert!((psi.vector().unwrap()[layout.basis_index(&[1, 0, 0]).unwrap()] - ONE).norm() < 1e-15);
    }

    #[test]
    fn schedule_json_round_trip_and_validation() {
        let s = fock_generation_schedule(2, &timings(), RampSpec::uniform(0.2), Frame::DriveFrame).unwrap();
        let text = s.to_json().unwrap();
        assert_eq!(PulseSchedule::from_json(&text).unwrap(), s);

        let unmatched = r#"{"frame":"jc_frame","metadata":{"protocol":"custom","n":0},
            "steps":[{"step":"ramp_up","channel":"mem1","ramp_us":0.2}]}"#;
        assert!(matches!(PulseSchedule::from_json(unmatched), Err(Error::InvalidSchedule(_))));
        let flip_off = r#"{"frame":"jc_frame","metadata":{"protocol":"custom","n":0},"steps":[{"step":"rabi_phase_flip"}]}"#;
        assert!(matches!(PulseSchedule::from_json(flip_off), Err(Error::InvalidSchedule(_))));
        let unknown = r#"{"frame":"jc_frame","metadata":{"protocol":"custom","n":0},"steps":[{"step":"hold","duration_us":1,"extra":2}]}"#;
        match PulseSchedule::from_json(unknown) {
            Err(Error::ConfigField { path, .. }) => assert!(path.starts_with("steps"), "{path}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(PulseSchedule::from_json("{"), Err(Error::ConfigParse { .. })));
        let bad_channel = r#"{"frame":"jc_frame","metadata":{"protocol":"custom","n":0},"steps":[{"step":"ramp_down","channel":"mem9","ramp_us":0}]}"#;
        assert!(PulseSchedule::from_json(bad_channel).is_err());
    }

    #[test]
    fn qubit_rotation_conventions() {
        let up = qubit_rotation(Axis::Y, FRAC_PI_2) * CVector::from_vec(vec![ONE, C64::from(0.0)]);
        assert!((up[0].re - up[1].re).abs() < 1e-15 && up[0].re > 0.0);
        let r = qubit_rotation(Axis::X, std::f64::consts::PI);
        assert!((r[(1, 0)] + I).norm() < 1e-15);
    }
}

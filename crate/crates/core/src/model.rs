//! Device parameters and the Hamiltonians of the sideband-coupled system.
//!
//! Three builders are provided:
//!
//! * [`build_drive_frame_hamiltonian`] is the literal drive-frame Hamiltonian with
//!   explicit `epsilon (a^dag + a)` drive channels.
//! * [`build_displaced_drive_hamiltonian`] is the same physics after shifting every
//!   mode by its instantaneous steady-state amplitude, which lets the truncation
//!   follow the photon number of interest instead of the coherent drive population.
//! * [`build_jc_hamiltonian`] is the effective Jaynes-Cummings Hamiltonian in the
//!   dressed-qubit frame.
//!
//! The dressed-frame map is `U = (sigma_z - sigma_x) / sqrt 2` on the qubit. The
//! lab state `(|g> + |e>)/sqrt 2` (the dressed state that emits photons into the
//! sideband-driven modes) becomes `|e>` and `(|g> - |e>)/sqrt 2` becomes `|g>`.
//! After an odd number of Rabi sign flips the map is `sigma_x U`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    displacement_matrix, embed, embed_matrix, mode_annihilation, pauli, CMatrix, Frame, OperatorMatrix, Pauli,
    QuantumState, SubsystemLayout, C64, I, QUBIT,
};

/// Converts a frequency quoted as `f = omega / 2pi` in MHz to rad/us.
pub fn angular(mhz: f64) -> f64 {
    2.0 * PI * mhz
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Readout,
    Mem1,
    Mem2,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Readout, Mode::Mem1, Mode::Mem2];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Readout => "readout",
            Mode::Mem1 => "mem1",
            Mode::Mem2 => "mem2",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "readout" => Ok(Mode::Readout),
            "mem1" => Ok(Mode::Mem1),
            "mem2" => Ok(Mode::Mem2),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// Lifetimes serialize as numbers, with `null` standing for an infinite lifetime.
mod lifetime {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Device constants. Frequencies in MHz (as `omega / 2pi`), lifetimes in us.
/// Fields missing from JSON take the measured-device defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub rabi_freq: f64,
    pub chi_r: f64,
    pub chi_1: f64,
    pub chi_2: f64,
    pub kappa_r: f64,
    pub eps_r: f64,
    pub eps_1: f64,
    pub eps_2: f64,
    #[serde(with = "lifetime")]
    pub t1_qubit: f64,
    #[serde(with = "lifetime")]
    pub t2_echo_qubit: f64,
    #[serde(with = "lifetime")]
    pub t1_mem1: f64,
    #[serde(with = "lifetime")]
    pub t1_mem2: f64,
    #[serde(default)]
    pub include_readout: bool,
}

impl Default for SystemParams {
    /// The measured device: Rabi drive at 6 MHz and memory drives set for
    /// `g_1 = g_2 = 0.182 MHz`, readout drive for `g_r = 0.456 MHz`.
    fn default() -> Self {
        let rabi_freq: f64 = 6.0;
        let kappa_r: f64 = 0.42;
        let chi_r = 0.36;
        let eps_r = (0.456 / chi_r) * rabi_freq.hypot(kappa_r / 2.0);
        Self {
            rabi_freq,
            chi_r,
            chi_1: 0.035,
            chi_2: 0.020,
            kappa_r,
            eps_r,
            eps_1: 0.182 / 0.035 * rabi_freq,
            eps_2: 0.182 / 0.020 * rabi_freq,
            t1_qubit: 22.8,
            t2_echo_qubit: 21.8,
            t1_mem1: 145.0,
            t1_mem2: 136.0,
            include_readout: false,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("rabi_freq", self.rabi_freq),
            ("chi_r", self.chi_r),
            ("chi_1", self.chi_1),
            ("chi_2", self.chi_2),
            ("kappa_r", self.kappa_r),
            ("eps_r", self.eps_r),
            ("eps_1", self.eps_1),
            ("eps_2", self.eps_2),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(Error::params(field, "must be finite"));
            }
        }
        if self.rabi_freq <= 0.0 {
            return Err(Error::params("rabi_freq", "Rabi frequency must be positive"));
        }
        for (field, value) in [("chi_r", self.chi_r), ("chi_1", self.chi_1), ("chi_2", self.chi_2), ("kappa_r", self.kappa_r)] {
            if value < 0.0 {
                return Err(Error::params(field, "rates must be non-negative"));
            }
        }
        for (field, value) in [
            ("t1_qubit", self.t1_qubit),
            ("t2_echo_qubit", self.t2_echo_qubit),
            ("t1_mem1", self.t1_mem1),
            ("t1_mem2", self.t1_mem2),
        ] {
            if value.is_nan() || value <= 0.0 {
                return Err(Error::params(field, "lifetimes must be positive"));
            }
        }
        if self.t2_echo_qubit > 2.0 * self.t1_qubit {
            return Err(Error::params(
                "t2_echo_qubit",
                format!("T2 = {} us exceeds 2 T1 = {} us", self.t2_echo_qubit, 2.0 * self.t1_qubit),
            ));
        }
        Ok(())
    }

    pub fn chi(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Readout => self.chi_r,
            Mode::Mem1 => self.chi_1,
            Mode::Mem2 => self.chi_2,
        }
    }

    pub fn eps(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Readout => self.eps_r,
            Mode::Mem1 => self.eps_1,
            Mode::Mem2 => self.eps_2,
        }
    }

    fn eps_mut(&mut self, mode: Mode) -> &mut f64 {
        match mode {
            Mode::Readout => &mut self.eps_r,
            Mode::Mem1 => &mut self.eps_1,
            Mode::Mem2 => &mut self.eps_2,
        }
    }

    /// Energy-relaxation time of a mode; the readout lifetime follows from its linewidth.
    pub fn t1_mode(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Readout => {
                if self.kappa_r > 0.0 {
                    1.0 / angular(self.kappa_r)
                } else {
                    f64::INFINITY
                }
            }
            Mode::Mem1 => self.t1_mem1,
            Mode::Mem2 => self.t1_mem2,
        }
    }

    /// Pure-dephasing rate `1/T2 - 1/(2 T1)` in 1/us.
    pub fn pure_dephasing_rate(&self) -> f64 {
        (1.0 / self.t2_echo_qubit - 0.5 / self.t1_qubit).max(0.0)
    }

    /// Copy with every drive outside `modes` switched off (and the readout dropped
    /// unless listed).
    pub fn restricted_to(&self, modes: &[Mode]) -> Self {
        let mut out = self.clone();
        for mode in Mode::ALL {
            if !modes.contains(&mode) {
                *out.eps_mut(mode) = 0.0;
            }
        }
        out.include_readout = modes.contains(&Mode::Readout);
        out
    }

    /// Copy without any decoherence.
    pub fn ideal(&self) -> Self {
        Self {
            t1_qubit: f64::INFINITY,
            t2_echo_qubit: f64::INFINITY,
            t1_mem1: f64::INFINITY,
            t1_mem2: f64::INFINITY,
            ..self.clone()
        }
    }

    /// Scales every qubit and memory lifetime by `factor`.
    pub fn with_coherence_multiplier(&self, factor: f64) -> Self {
        Self {
            t1_qubit: self.t1_qubit * factor,
            t2_echo_qubit: self.t2_echo_qubit * factor,
            t1_mem1: self.t1_mem1 * factor,
            t1_mem2: self.t1_mem2 * factor,
            ..self.clone()
        }
    }

    /// Changes the Rabi frequency while keeping every steady-state amplitude,
    /// and therefore every coupling `g`, fixed.
    pub fn with_rabi_freq_fixed_coupling(&self, rabi_freq: f64) -> Self {
        let mut out = self.clone();
        for mode in [Mode::Mem1, Mode::Mem2] {
            *out.eps_mut(mode) = self.eps(mode) * rabi_freq / self.rabi_freq;
        }
        let old = C64::new(self.rabi_freq, self.kappa_r / 2.0).norm();
        let new = C64::new(rabi_freq, self.kappa_r / 2.0).norm();
        out.eps_r = self.eps_r * new / old;
        out.rabi_freq = rabi_freq;
        out
    }

    /// Sets the memory drives so that both couplings equal `g` (MHz).
    pub fn with_memory_coupling(&self, g: f64) -> Result<Self> {
        let mut out = self.clone();
        for mode in [Mode::Mem1, Mode::Mem2] {
            let chi = self.chi(mode);
            if chi == 0.0 {
                return Err(Error::params(mode.label(), "cannot reach a coupling with zero dispersive shift"));
            }
            *out.eps_mut(mode) = g / chi * self.rabi_freq;
        }
        Ok(out)
    }
}

/// Steady-state coherent amplitude of a driven mode (dimensionless).
///
/// Memory modes: `epsilon / Omega_R`. Readout: `epsilon_r / (Omega_R + i kappa_r / 2)`.
pub fn steady_state_amplitude(params: &SystemParams, mode: Mode) -> Result<C64> {
    if params.rabi_freq <= 0.0 {
        return Err(Error::params("rabi_freq", "Rabi frequency must be positive"));
    }
    Ok(match mode {
        Mode::Readout => C64::from(params.eps_r) / C64::new(params.rabi_freq, params.kappa_r / 2.0),
        Mode::Mem1 | Mode::Mem2 => C64::from(params.eps(mode) / params.rabi_freq),
    })
}

/// `g = |chi| |abar|` in MHz.
pub fn effective_coupling(params: &SystemParams, mode: Mode) -> Result<f64> {
    Ok(params.chi(mode).abs() * steady_state_amplitude(params, mode)?.norm())
}

/// Couplings (MHz) and steady-state amplitudes for every mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    pub g_r: f64,
    pub g_1: f64,
    pub g_2: f64,
    pub abar_r: C64,
    pub abar_1: f64,
    pub abar_2: f64,
}

impl CouplingSet {
    pub fn from_params(params: &SystemParams) -> Result<Self> {
        let abar_r = steady_state_amplitude(params, Mode::Readout)?;
        let abar_1 = steady_state_amplitude(params, Mode::Mem1)?.re;
        let abar_2 = steady_state_amplitude(params, Mode::Mem2)?.re;
        Ok(Self {
            g_r: params.chi_r.abs() * abar_r.norm(),
            g_1: params.chi_1.abs() * abar_1.abs(),
            g_2: params.chi_2.abs() * abar_2.abs(),
            abar_r,
            abar_1,
            abar_2,
        })
    }

    pub fn g(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Readout => self.g_r,
            Mode::Mem1 => self.g_1,
            Mode::Mem2 => self.g_2,
        }
    }

    pub fn abar(&self, mode: Mode) -> C64 {
        match mode {
            Mode::Readout => self.abar_r,
            Mode::Mem1 => C64::from(self.abar_1),
            Mode::Mem2 => C64::from(self.abar_2),
        }
    }
}

/// A static Hamiltonian plus named operators whose coefficients vary in time.
///
/// `H(t) = static + sum_k c_k(t) H_k`, everything in rad/us once the coefficients
/// are applied.
#[derive(Clone, Debug)]
pub struct ChannelHamiltonian {
    pub frame: Frame,
    pub static_term: OperatorMatrix,
    pub channels: Vec<(String, OperatorMatrix)>,
}

impl ChannelHamiltonian {
    pub fn new(frame: Frame, static_term: OperatorMatrix) -> Self {
        Self { frame, static_term, channels: Vec::new() }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        self.static_term.layout()
    }

    pub fn push(&mut self, name: impl Into<String>, op: OperatorMatrix) -> Result<()> {
        if op.layout() != self.layout() {
            return Err(Error::LayoutMismatch(format!("channel operator on {}", op.layout())));
        }
        if !op.is_hermitian() {
            return Err(Error::NotHermitian { deviation: f64::NAN });
        }
        self.channels.push((name.into(), op));
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&OperatorMatrix> {
        self.channels.iter().find(|(n, _)| n == name).map(|(_, op)| op)
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }

    /// Assembles `H` for the given coefficients; unnamed channels are zero.
    pub fn assemble(&self, coefficient: impl Fn(&str) -> f64) -> OperatorMatrix {
        let mut data = self.static_term.data().clone();
        for (name, op) in &self.channels {
            let c = coefficient(name);
            if c != 0.0 {
                data += op.data() * C64::from(c);
            }
        }
        OperatorMatrix::hermitian(self.layout().clone(), data).expect("sum of Hermitian terms")
    }
}

fn modes_in(layout: &SubsystemLayout) -> Result<Vec<Mode>> {
    layout.mode_labels().map(Mode::from_str).collect()
}

fn check_drive_layout(params: &SystemParams, layout: &SubsystemLayout) -> Result<Vec<Mode>> {
    if !layout.has_qubit() {
        return Err(Error::InvalidLayout("drive-frame Hamiltonian needs the qubit".into()));
    }
    let modes = modes_in(layout)?;
    for mode in [Mode::Mem1, Mode::Mem2] {
        if params.eps(mode) != 0.0 && !modes.contains(&mode) {
            return Err(Error::InvalidLayout(format!(
                "{mode} is driven but absent from the layout; restrict the parameters first"
            )));
        }
    }
    if params.include_readout && !modes.contains(&Mode::Readout) {
        return Err(Error::InvalidLayout("readout included but absent from the layout".into()));
    }
    Ok(modes)
}

/// Name of the Rabi-drive channel. Operator `-sigma_x / 2`, coefficient `Omega_R(t)` in rad/us.
pub const RABI_CHANNEL: &str = "rabi";

/// Drive-frame Hamiltonian with explicit drive channels.
///
/// Static term: `-Omega_R sum a^dag a - sum chi a^dag a sigma_z`. Channels:
/// `rabi` (`-sigma_x / 2`), `drive_<mode>` (`a^dag + a`, coefficient `epsilon(t)` in
/// rad/us) and `stark_comp` (`sum chi |abar|^2 sigma_z`, coefficient 1 to move the
/// Rabi drive onto the steady-state Stark-shifted qubit frequency).
pub fn build_drive_frame_hamiltonian(params: &SystemParams, layout: &SubsystemLayout) -> Result<ChannelHamiltonian> {
    params.validate()?;
    let modes = check_drive_layout(params, layout)?;
    let omega = angular(params.rabi_freq);
    let z = embed(&pauli(Pauli::Z), layout, QUBIT)?;
    let mut stat = OperatorMatrix::zeros(layout.clone());
    let mut stark = OperatorMatrix::zeros(layout.clone());
    let mut ham = ChannelHamiltonian::new(Frame::DriveFrame, OperatorMatrix::zeros(layout.clone()));
    ham.push(RABI_CHANNEL, embed(&pauli(Pauli::X), layout, QUBIT)?.scale(-0.5))?;
    for mode in modes {
        let a = mode_annihilation(layout, mode.label())?;
        let n = a.adjoint().compose(&a)?.into_hermitian()?;
        let chi = angular(params.chi(mode));
        stat = stat.sub(&n.scale(omega))?;
        stat = stat.sub(&n.compose(&z)?.into_hermitian()?.scale(chi))?;
        ham.push(format!("drive_{mode}"), a.add(&a.adjoint())?.into_hermitian()?)?;
        let abar = steady_state_amplitude(params, mode)?;
        stark = stark.add(&z.scale(chi * abar.norm_sqr()))?;
    }
    ham.static_term = stat;
    ham.push("stark_comp", stark)?;
    Ok(ham)
}

pub fn coupling_re_channel(mode: Mode) -> String {
    format!("coupling_re_{mode}")
}

pub fn coupling_im_channel(mode: Mode) -> String {
    format!("coupling_im_{mode}")
}

pub fn stark_channel(mode: Mode) -> String {
    format!("stark_{mode}")
}

/// Drive-frame Hamiltonian after displacing each mode by its instantaneous
/// steady-state amplitude `alpha(t)`, with `b = a - alpha`.
///
/// Static term: `-Omega_R sum b^dag b - sum chi b^dag b sigma_z`. Channels per mode:
/// `coupling_re_<mode>` (`-chi (b^dag + b) sigma_z`, coefficient `Re alpha`),
/// `coupling_im_<mode>` (`-chi i (b^dag - b) sigma_z`, coefficient `Im alpha`) and
/// `stark_<mode>` (`-chi sigma_z`, coefficient `|alpha|^2 - |abar|^2`, so the
/// steady-state Stark shift is compensated). Plus the `rabi` channel.
///
/// The term `-i d(alpha)/dt` generated by a moving frame is dropped: ramps are
/// treated as adiabatic for the classical field.
pub fn build_displaced_drive_hamiltonian(
    params: &SystemParams,
    layout: &SubsystemLayout,
) -> Result<ChannelHamiltonian> {
    params.validate()?;
    let modes = check_drive_layout(params, layout)?;
    let omega = angular(params.rabi_freq);
    let z = embed(&pauli(Pauli::Z), layout, QUBIT)?;
    let mut stat = OperatorMatrix::zeros(layout.clone());
    let mut ham = ChannelHamiltonian::new(Frame::DriveFrame, OperatorMatrix::zeros(layout.clone()));
    ham.push(RABI_CHANNEL, embed(&pauli(Pauli::X), layout, QUBIT)?.scale(-0.5))?;
    for mode in modes {
        let b = mode_annihilation(layout, mode.label())?;
        let bd = b.adjoint();
        let n = bd.compose(&b)?.into_hermitian()?;
        let chi = angular(params.chi(mode));
        stat = stat.sub(&n.scale(omega))?;
        stat = stat.sub(&n.compose(&z)?.into_hermitian()?.scale(chi))?;
        let quad_x = bd.add(&b)?.compose(&z)?.into_hermitian()?;
        let quad_p = bd.sub(&b)?.scale_complex(I).compose(&z)?.into_hermitian()?;
        ham.push(coupling_re_channel(mode), quad_x.scale(-chi))?;
        ham.push(coupling_im_channel(mode), quad_p.scale(-chi))?;
        ham.push(stark_channel(mode), z.scale(-chi))?;
    }
    ham.static_term = stat;
    Ok(ham)
}

/// `a sigma_+ + a^dag sigma_-` for one mode.
pub fn jc_exchange_operator(layout: &SubsystemLayout, mode: Mode) -> Result<OperatorMatrix> {
    let a = mode_annihilation(layout, mode.label())?;
    let sp = embed(&pauli(Pauli::Plus), layout, QUBIT)?;
    let sm = embed(&pauli(Pauli::Minus), layout, QUBIT)?;
    a.compose(&sp)?.add(&a.adjoint().compose(&sm)?)?.into_hermitian()
}

/// `i (a^dag sigma_- - a sigma_+)`, the exchange operator for an imaginary coupling.
pub fn jc_quadrature_operator(layout: &SubsystemLayout, mode: Mode) -> Result<OperatorMatrix> {
    let a = mode_annihilation(layout, mode.label())?;
    let sp = embed(&pauli(Pauli::Plus), layout, QUBIT)?;
    let sm = embed(&pauli(Pauli::Minus), layout, QUBIT)?;
    a.adjoint().compose(&sm)?.sub(&a.compose(&sp)?)?.scale_complex(I).into_hermitian()
}

pub fn jc_channel(mode: Mode) -> String {
    format!("g_{mode}")
}

pub fn jc_quadrature_channel(mode: Mode) -> String {
    format!("gq_{mode}")
}

/// Effective Jaynes-Cummings Hamiltonian as channels: `g_<mode>` multiplies
/// `a sigma_+ + a^dag sigma_-` and `gq_<mode>` multiplies its quadrature partner.
/// Coefficients are `2pi Re g` and `2pi Im g`.
pub fn build_jc_channels(layout: &SubsystemLayout) -> Result<ChannelHamiltonian> {
    if !layout.has_qubit() {
        return Err(Error::InvalidLayout("JC Hamiltonian needs the qubit".into()));
    }
    let mut ham = ChannelHamiltonian::new(Frame::JcFrame, OperatorMatrix::zeros(layout.clone()));
    for mode in modes_in(layout)? {
        ham.push(jc_channel(mode), jc_exchange_operator(layout, mode)?)?;
        ham.push(jc_quadrature_channel(mode), jc_quadrature_operator(layout, mode)?)?;
    }
    Ok(ham)
}

/// `H = sum_i (g_i^* a_i sigma_+ + g_i a_i^dag sigma_-)` in rad/us for every mode in the layout.
pub fn build_jc_hamiltonian(couplings: &CouplingSet, layout: &SubsystemLayout) -> Result<OperatorMatrix> {
    let mut h = OperatorMatrix::zeros(layout.clone());
    if !layout.has_qubit() {
        return Err(Error::InvalidLayout("JC Hamiltonian needs the qubit".into()));
    }
    for mode in modes_in(layout)? {
        let g = couplings.g(mode);
        if !g.is_finite() {
            return Err(Error::params(format!("g_{mode}"), "coupling must be finite"));
        }
        h = h.add(&jc_exchange_operator(layout, mode)?.scale(angular(g)))?;
    }
    Ok(h)
}

/// Bright `(a_1 + a_2)/sqrt 2` and dark `(a_1 - a_2)/sqrt 2` mode operators.
pub fn bright_dark_operators(layout: &SubsystemLayout) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let d1 = layout.dim_of(Mode::Mem1.label())?;
    let d2 = layout.dim_of(Mode::Mem2.label())?;
    if d1 != d2 {
        return Err(Error::DimensionMismatch { expected: d1, found: d2 });
    }
    let a1 = mode_annihilation(layout, Mode::Mem1.label())?;
    let a2 = mode_annihilation(layout, Mode::Mem2.label())?;
    Ok((a1.add(&a2)?.scale(FRAC_1_SQRT_2), a1.sub(&a2)?.scale(FRAC_1_SQRT_2)))
}

/// Qubit unitary taking lab (drive-frame) amplitudes to dressed-frame amplitudes.
///
/// Even flip parity: `(sigma_z - sigma_x)/sqrt 2`, Hermitian and an involution.
/// Odd parity: `sigma_x (sigma_z - sigma_x)/sqrt 2`.
pub fn qubit_frame_unitary(odd_flips: bool) -> CMatrix {
    let s = C64::from(FRAC_1_SQRT_2);
    let u = CMatrix::from_row_slice(2, 2, &[s, -s, -s, -s]);
    if odd_flips {
        pauli(Pauli::X).data() * u
    } else {
        u
    }
}

/// Maps a state between frames by conjugating the qubit with the dressed-frame
/// unitary. The modes are untouched.
pub fn frame_map(state: &QuantumState, to: Frame) -> Result<QuantumState> {
    frame_map_displaced(state, to, &[])
}

/// As [`frame_map`], additionally shifting listed modes by their steady-state
/// amplitude: `D(-abar)` going to the dressed frame, `D(abar)` coming back.
pub fn frame_map_displaced(state: &QuantumState, to: Frame, shifts: &[(Mode, C64)]) -> Result<QuantumState> {
    if state.frame() == to {
        return Err(Error::FrameMismatch(format!("state is already in {to:?}")));
    }
    let layout = state.layout();
    let sign = if to == Frame::JcFrame { -1.0 } else { 1.0 };
    let mut total = embed_matrix(&qubit_frame_unitary(false), layout, QUBIT)?;
    for &(mode, abar) in shifts {
        let dim = layout.dim_of(mode.label())?;
        let d = embed_matrix(&displacement_matrix(abar * sign, dim)?, layout, mode.label())?;
        total = if to == Frame::JcFrame { &total * d } else { d * total };
    }
    Ok(state.transform(&total)?.with_frame(to))
}

/// Basis state `|levels>` in the given frame.
pub fn basis_state(layout: &SubsystemLayout, frame: Frame, levels: &[usize]) -> Result<QuantumState> {
    QuantumState::basis(layout.clone(), frame, levels)
}

/// Total excitation number `sum a^dag a + sigma_+ sigma_-`.
pub fn excitation_number(layout: &SubsystemLayout) -> Result<OperatorMatrix> {
    let sp = embed(&pauli(Pauli::Plus), layout, QUBIT)?;
    let mut n = sp.compose(&sp.adjoint())?;
    for mode in layout.mode_labels().map(str::to_string).collect::<Vec<_>>() {
        n = n.add(&crate::hilbert::mode_number(layout, &mode)?)?;
    }
    n.into_hermitian()
}

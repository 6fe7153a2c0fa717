//! Time evolution under piecewise time-dependent Hamiltonians, closed or with
//! Lindblad decoherence.
//!
//! Each evolve segment is integrated in the interaction picture of the diagonal
//! part of its constant Hamiltonian, which removes the fast detuning phases from
//! the integrator. Instantaneous unitaries sit between segments.

mod cross_check;
pub mod ode;
mod sparse;

pub use cross_check::{cross_check_frames, CrossCheckOptions, CrossCheckReport, CrossSample};

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    embed, embed_matrix, hermitian_deviation, min_eigenvalue, mode_annihilation, pauli, trace_product, CMatrix,
    CVector, Frame, OperatorMatrix, Pauli, QuantumState, StateBody, SubsystemLayout, C64, I, QUBIT,
};
use crate::model::{qubit_frame_unitary, ChannelHamiltonian, Mode, SystemParams};
use crate::report::fmt_float;

use ode::{Dopri5, OdeOptions};
use sparse::SparseOp;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampShape {
    /// `(1 - cos(pi t / T)) / 2`: continuous with a continuous first derivative.
    #[default]
    Cosine,
    Linear,
}

impl RampShape {
    /// Fraction of the ramp completed at local time `t` for a ramp of length `len`.
    pub fn fraction(self, t: f64, len: f64) -> f64 {
        if len <= 0.0 || t >= len {
            return 1.0;
        }
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            RampShape::Cosine => 0.5 * (1.0 - (PI * t / len).cos()),
            RampShape::Linear => t / len,
        }
    }
}

/// Channel coefficient as a function of time within a segment.
#[derive(Clone, Debug, PartialEq)]
pub enum Envelope {
    Constant(f64),
    /// `from + (to - from) s(t / len)`, holding `to` after the ramp.
    Ramp { from: f64, to: f64, len: f64, shape: RampShape },
    /// `scale r(t)^2 + offset` with `r(t)` the ramp above.
    RampSquared { from: f64, to: f64, len: f64, shape: RampShape, scale: f64, offset: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant(c) => c,
            Envelope::Ramp { from, to, len, shape } => from + (to - from) * shape.fraction(t, len),
            Envelope::RampSquared { from, to, len, shape, scale, offset } => {
                let r = from + (to - from) * shape.fraction(t, len);
                scale * r * r + offset
            }
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            Envelope::Constant(c) => Some(c),
            Envelope::Ramp { from, to, len, .. } if len <= 0.0 || from == to => Some(to),
            Envelope::RampSquared { from, to, len, scale, offset, .. } if len <= 0.0 || from == to => {
                Some(scale * to * to + offset)
            }
            _ => None,
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Envelope::Constant(c) => c.is_finite(),
            Envelope::Ramp { from, to, len, .. } => from.is_finite() && to.is_finite() && len.is_finite(),
            Envelope::RampSquared { from, to, len, scale, offset, .. } => {
                [from, to, len, scale, offset].iter().all(|v| v.is_finite())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Segment {
    /// Continuous evolution; channels without an envelope are zero.
    Evolve { label: String, duration: f64, envelopes: BTreeMap<String, Envelope> },
    /// Instantaneous unitary on the full space.
    Instant { label: String, unitary: CMatrix },
}

impl Segment {
    pub fn label(&self) -> &str {
        match self {
            Segment::Evolve { label, .. } | Segment::Instant { label, .. } => label,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Segment::Evolve { duration, .. } => *duration,
            Segment::Instant { .. } => 0.0,
        }
    }
}

/// Piecewise schedule of channel coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoefficientProgram {
    pub segments: Vec<Segment>,
}

impl CoefficientProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn evolve(&mut self, label: impl Into<String>, duration: f64, envelopes: BTreeMap<String, Envelope>) {
        self.segments.push(Segment::Evolve { label: label.into(), duration, envelopes });
    }

    pub fn instant(&mut self, label: impl Into<String>, unitary: CMatrix) {
        self.segments.push(Segment::Instant { label: label.into(), unitary });
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    /// Start time of every segment.
    pub fn segment_starts(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration();
                start
            })
            .collect()
    }

    /// Number of evolve segments whose label starts with `prefix`.
    pub fn count_labelled(&self, prefix: &str) -> usize {
        self.segments.iter().filter(|s| s.label().starts_with(prefix)).count()
    }

    pub fn validate(&self, ham: &ChannelHamiltonian) -> Result<()> {
        let n = ham.layout().total_dim();
        for seg in &self.segments {
            match seg {
                Segment::Evolve { label, duration, envelopes } => {
                    if !(duration.is_finite() && *duration > 0.0) {
                        return Err(Error::InvalidSchedule(format!("segment `{label}` has duration {duration}")));
                    }
                    for (name, env) in envelopes {
                        if ham.channel(name).is_none() {
                            return Err(Error::InvalidSchedule(format!("segment `{label}` drives unknown channel `{name}`")));
                        }
                        if !env.is_finite() {
                            return Err(Error::InvalidSchedule(format!("segment `{label}` has a non-finite envelope")));
                        }
                    }
                }
                Segment::Instant { label, unitary } => {
                    if unitary.nrows() != n || unitary.ncols() != n {
                        return Err(Error::InvalidSchedule(format!("instant `{label}` has the wrong dimension")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sampling {
    /// Only the end of the program.
    Final,
    /// `points` evenly spaced times over the whole program, both ends included.
    Uniform(usize),
    /// The end of every segment, plus `t = 0`.
    SegmentEnds,
    /// Explicit times in us.
    Times(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub dt_max: f64,
    pub sampling: Sampling,
    /// Extra observables recorded after the standard columns.
    pub extras: Vec<(String, OperatorMatrix)>,
}

impl EvolveOptions {
    pub fn new(dt_max: f64) -> Self {
        Self { rtol: 1e-10, atol: 1e-12, dt_max, sampling: Sampling::Final, extras: Vec::new() }
    }

    /// Defaults for open-system runs.
    pub fn lindblad(dt_max: f64) -> Self {
        Self { rtol: 1e-9, atol: 1e-11, ..Self::new(dt_max) }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_extra(mut self, name: impl Into<String>, op: OperatorMatrix) -> Self {
        self.extras.push((name.into(), op));
        self
    }

    pub fn with_tolerance(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }
}

/// Largest integrator step: a twentieth of the fastest retained period.
pub fn default_dt_max(frame: Frame, params: &SystemParams) -> f64 {
    match frame {
        Frame::DriveFrame => 1.0 / (20.0 * params.rabi_freq),
        Frame::JcFrame => {
            let g = crate::model::CouplingSet::from_params(params)
                .map(|c| c.g_1.max(c.g_2).max(if params.include_readout { c.g_r } else { 0.0 }))
                .unwrap_or(0.0);
            if g > 0.0 {
                1.0 / (20.0 * g)
            } else {
                0.1
            }
        }
    }
}

pub const STANDARD_COLUMNS: [&str; 3] = ["n_mem1", "n_mem2", "sigma_z"];

/// Sampled expectation values along an evolution.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    /// One row per time, one entry per column.
    pub records: Vec<Vec<f64>>,
    /// Label of the segment each sample was taken in.
    pub segment_labels: Vec<String>,
    pub final_state: QuantumState,
    /// `| ||psi|| - 1 |` or `| Tr rho - 1 |` at the end.
    pub norm_drift: f64,
    /// Smallest density-matrix eigenvalue at the end (1 for pure states).
    pub min_eigenvalue: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Trajectory {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.records.iter().map(|r| r[k]).collect())
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c.last().copied())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t_us".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(csv_error)?;
        for (t, row) in self.times.iter().zip(&self.records) {
            let mut fields = vec![fmt_float(*t)];
            fields.extend(row.iter().copied().map(fmt_float));
            w.write_record(&fields).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Clone, Debug)]
pub struct CollapseTerm {
    pub label: String,
    pub op: OperatorMatrix,
    /// Rate in 1/us.
    pub rate: f64,
}

/// Lindblad jump operators with their rates.
#[derive(Clone, Debug, Default)]
pub struct CollapseSet {
    pub terms: Vec<CollapseTerm>,
}

impl CollapseSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: impl Into<String>, op: OperatorMatrix, rate: f64) -> Result<()> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::params("rate", format!("collapse rates must be finite and non-negative, got {rate}")));
        }
        if rate > 0.0 {
            self.terms.push(CollapseTerm { label: label.into(), op, rate });
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn rate(&self, label: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.label == label).map(|t| t.rate)
    }
}

fn finite_rate(lifetime: f64) -> f64 {
    if lifetime.is_finite() {
        1.0 / lifetime
    } else {
        0.0
    }
}

/// Qubit relaxation, qubit pure dephasing and mode damping for every mode in
/// the layout. In the dressed frame the qubit operators are conjugated by the
/// frame unitary, so lab `sigma_z` dephasing acts as dressed `-sigma_x`.
pub fn collapse_from_params(params: &SystemParams, layout: &SubsystemLayout, frame: Frame) -> Result<CollapseSet> {
    params.validate()?;
    let mut set = CollapseSet::new();
    let conj = |m: &CMatrix| -> CMatrix {
        match frame {
            Frame::DriveFrame => m.clone(),
            Frame::JcFrame => {
                let u = qubit_frame_unitary(false);
                &u * m * u.adjoint()
            }
        }
    };
    if layout.has_qubit() {
        let sm = conj(pauli(Pauli::Minus).data());
        let sz = conj(pauli(Pauli::Z).data()) * C64::from(FRAC_1_SQRT_2);
        let single = SubsystemLayout::single(QUBIT, 2)?;
        set.push("qubit_relaxation", embed(&OperatorMatrix::new(single.clone(), sm)?, layout, QUBIT)?, finite_rate(params.t1_qubit))?;
        set.push(
            "qubit_dephasing",
            embed(&OperatorMatrix::hermitian(single, sz)?, layout, QUBIT)?,
            params.pure_dephasing_rate() * if params.t2_echo_qubit.is_finite() { 1.0 } else { 0.0 },
        )?;
    }
    for label in layout.mode_labels().map(str::to_string).collect::<Vec<_>>() {
        let mode: Mode = label.parse()?;
        set.push(format!("{label}_damping"), mode_annihilation(layout, &label)?, finite_rate(params.t1_mode(mode)))?;
    }
    Ok(set)
}

/// Per-segment generator data: `H(t) = diag(d) + base + sum c_k(t) H_k`.
struct SegmentGenerator<'a> {
    diag: Vec<f64>,
    base: SparseOp,
    varying: Vec<(&'a Envelope, SparseOp)>,
}

impl<'a> SegmentGenerator<'a> {
    /// `extra` is added to the constant part (the non-Hermitian Lindblad term).
    fn new(ham: &'a ChannelHamiltonian, envelopes: &'a BTreeMap<String, Envelope>, extra: Option<&CMatrix>) -> Self {
        let mut base = ham.static_term.data().clone();
        let mut varying = Vec::new();
        for (name, env) in envelopes {
            let op = ham.channel(name).expect("validated channel").data();
            match env.constant_value() {
                Some(c) if c != 0.0 => base += op * C64::from(c),
                Some(_) => {}
                None => varying.push((env, SparseOp::from_dense(op))),
            }
        }
        let diag: Vec<f64> = (0..base.nrows()).map(|i| base[(i, i)].re).collect();
        for (i, d) in diag.iter().enumerate() {
            base[(i, i)] -= C64::from(*d);
        }
        if let Some(x) = extra {
            base += x;
        }
        Self { diag, base: SparseOp::from_dense(&base), varying }
    }

    /// `out = a * V(t) * y` with `V` the interaction-picture part at local time `t`.
    fn apply(&self, t: f64, a: C64, y: &CMatrix, out: &mut CMatrix) {
        out.fill(C64::from(0.0));
        self.base.mul_add(a, y, out);
        for (env, op) in &self.varying {
            let c = env.value(t);
            if c != 0.0 {
                op.mul_add(a * c, y, out);
            }
        }
    }

    /// `exp(-i d t)` elementwise.
    fn phases(&self, t: f64) -> Vec<C64> {
        self.diag.iter().map(|d| (-I * (d * t)).exp()).collect()
    }

    fn is_trivial(&self) -> bool {
        self.varying.is_empty() && self.base.is_zero()
    }
}

fn rotate_vector(y: &mut CMatrix, phases: &[C64], conjugate: bool) {
    for (i, p) in phases.iter().enumerate() {
        y[(i, 0)] *= if conjugate { p.conj() } else { *p };
    }
}

/// `rho_jk *= p_j conj(p_k)` (or the conjugate).
fn rotate_density(rho: &mut CMatrix, phases: &[C64], conjugate: bool) {
    let n = phases.len();
    for k in 0..n {
        for j in 0..n {
            let f = phases[j] * phases[k].conj();
            rho[(j, k)] *= if conjugate { f.conj() } else { f };
        }
    }
}

struct Recorder {
    columns: Vec<String>,
    ops: Vec<Option<CMatrix>>,
    times: Vec<f64>,
    records: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl Recorder {
    fn new(layout: &SubsystemLayout, extras: &[(String, OperatorMatrix)]) -> Result<Self> {
        let mut columns = Vec::new();
        let mut ops = Vec::new();
        for mode in ["mem1", "mem2"] {
            columns.push(format!("n_{mode}"));
            ops.push(if layout.contains(mode) {
                Some(crate::hilbert::mode_number(layout, mode)?.into_data())
            } else {
                None
            });
        }
        columns.push("sigma_z".into());
        ops.push(if layout.has_qubit() { Some(embed_matrix(pauli(Pauli::Z).data(), layout, QUBIT)?) } else { None });
        for (name, op) in extras {
            if op.layout() != layout {
                return Err(Error::LayoutMismatch(format!("observable `{name}` on {}", op.layout())));
            }
            columns.push(name.clone());
            ops.push(Some(op.data().clone()));
        }
        Ok(Self { columns, ops, times: Vec::new(), records: Vec::new(), labels: Vec::new() })
    }

    fn record(&mut self, t: f64, label: &str, state: &CMatrix, density: bool) {
        let row = self
            .ops
            .iter()
            .map(|op| match op {
                None => 0.0,
                Some(m) if density => trace_product(state, m).re,
                Some(m) => {
                    let v = state.column(0);
                    v.dotc(&(m * v)).re
                }
            })
            .collect();
        self.times.push(t);
        self.records.push(row);
        self.labels.push(label.to_string());
    }
}

fn sample_times(program: &CoefficientProgram, sampling: &Sampling) -> Result<Vec<f64>> {
    let total = program.total_duration();
    let times = match sampling {
        Sampling::Final => vec![total],
        Sampling::Uniform(points) => {
            if *points < 2 {
                return Err(Error::InvalidSchedule("uniform sampling needs at least 2 points".into()));
            }
            (0..*points).map(|k| total * k as f64 / (*points - 1) as f64).collect()
        }
        Sampling::SegmentEnds => {
            let mut ts = vec![0.0];
            let mut t = 0.0;
            for seg in &program.segments {
                if let Segment::Evolve { duration, .. } = seg {
                    t += duration;
                    ts.push(t);
                }
            }
            ts
        }
        Sampling::Times(ts) => ts.clone(),
    };
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidSchedule("sample times must be strictly increasing".into()));
        }
    }
    let tol = 1e-12 * total.max(1.0);
    if times.iter().any(|&t| t < -tol || t > total + tol || !t.is_finite()) {
        return Err(Error::InvalidSchedule(format!("sample times must lie in [0, {total}]")));
    }
    Ok(times)
}

enum Body {
    Pure,
    Density { collapse: Vec<SparseOp>, anti: CMatrix },
}

fn run(
    ham: &ChannelHamiltonian,
    program: &CoefficientProgram,
    initial: CMatrix,
    body: Body,
    opts: &EvolveOptions,
) -> Result<(CMatrix, Recorder, usize, usize)> {
    program.validate(ham)?;
    let layout = ham.layout();
    let n = layout.total_dim();
    let density = matches!(body, Body::Density { .. });
    let samples = sample_times(program, &opts.sampling)?;
    let total = program.total_duration();
    let eps = 1e-12 * total.max(1.0);
    let mut recorder = Recorder::new(layout, &opts.extras)?;
    let mut next_sample = 0usize;
    let mut ode = Dopri5::new(OdeOptions { rtol: opts.rtol, atol: opts.atol, h_max: opts.dt_max, ..OdeOptions::default() });
    let mut y = initial;
    let mut t0 = 0.0;
    let mut last_label = program.segments.first().map(|s| s.label().to_string()).unwrap_or_default();
    let mut scratch = CMatrix::zeros(n, n);

    for seg in &program.segments {
        match seg {
            Segment::Instant { label, unitary } => {
                y = if density { unitary * &y * unitary.adjoint() } else { unitary * &y };
                last_label = label.clone();
            }
            Segment::Evolve { label, duration, envelopes } => {
                while next_sample < samples.len() && samples[next_sample] <= t0 + eps {
                    recorder.record(samples[next_sample], &last_label, &y, density);
                    next_sample += 1;
                }
                let anti = match &body {
                    // H_eff = V - (i/2) sum L^dag L
                    Body::Density { anti, .. } => Some(anti * C64::new(0.0, -0.5)),
                    Body::Pure => None,
                };
                let gen = SegmentGenerator::new(ham, envelopes, anti.as_ref());
                let t_end = t0 + duration;
                let mut stops: Vec<f64> = Vec::new();
                let first_inner = next_sample;
                while next_sample < samples.len() && samples[next_sample] < t_end - eps {
                    stops.push(samples[next_sample] - t0);
                    next_sample += 1;
                }
                stops.push(*duration);
                let inner = &samples[first_inner..next_sample];

                if gen.is_trivial() && !density {
                    for &ts in inner {
                        let mut s = y.clone();
                        rotate_vector(&mut s, &gen.phases(ts - t0), false);
                        recorder.record(ts, label, &s, false);
                    }
                    rotate_vector(&mut y, &gen.phases(*duration), false);
                } else {
                    let stop_count = stops.len();
                    match &body {
                        Body::Pure => {
                            let mut f = |t: f64, yi: &CMatrix, dy: &mut CMatrix| {
                                let ph = gen.phases(t);
                                let mut psi = yi.clone();
                                rotate_vector(&mut psi, &ph, false);
                                gen.apply(t, -I, &psi, dy);
                                rotate_vector(dy, &ph, true);
                            };
                            ode.integrate(&mut f, 0.0, &mut y, &stops, |k, t, yi| {
                                let mut s = yi.clone();
                                rotate_vector(&mut s, &gen.phases(t), false);
                                if k + 1 < stop_count {
                                    recorder.record(t0 + t, label, &s, false);
                                }
                                Ok(())
                            })?;
                            rotate_vector(&mut y, &gen.phases(*duration), false);
                        }
                        Body::Density { collapse, .. } => {
                            let mut f = |t: f64, yi: &CMatrix, dy: &mut CMatrix| {
                                let ph = gen.phases(t);
                                let mut rho = yi.clone();
                                rotate_density(&mut rho, &ph, false);
                                // d rho = A + A^dag + sum L rho L^dag, A = -i H_eff rho
                                gen.apply(t, -I, &rho, dy);
                                let a = dy.adjoint();
                                *dy += a;
                                for l in collapse {
                                    scratch.fill(C64::from(0.0));
                                    l.mul_add(C64::from(1.0), &rho, &mut scratch);
                                    l.mul_adjoint_right_add(&scratch, dy);
                                }
                                rotate_density(dy, &ph, true);
                            };
                            ode.integrate(&mut f, 0.0, &mut y, &stops, |k, t, yi| {
                                if k + 1 < stop_count {
                                    let mut s = yi.clone();
                                    rotate_density(&mut s, &gen.phases(t), false);
                                    recorder.record(t0 + t, label, &s, true);
                                }
                                Ok(())
                            })?;
                            rotate_density(&mut y, &gen.phases(*duration), false);
                        }
                    }
                }
                t0 = t_end;
                last_label = label.clone();
            }
        }
    }
    while next_sample < samples.len() {
        recorder.record(samples[next_sample], &last_label, &y, density);
        next_sample += 1;
    }
    Ok((y, recorder, ode.accepted, ode.rejected))
}

/// Closed-system evolution `i d(psi)/dt = H(t) psi`.
pub fn evolve_pure(
    ham: &ChannelHamiltonian,
    program: &CoefficientProgram,
    psi0: &QuantumState,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    if psi0.layout() != ham.layout() {
        return Err(Error::LayoutMismatch(format!("state {} vs Hamiltonian {}", psi0.layout(), ham.layout())));
    }
    let v = psi0.vector().ok_or_else(|| Error::InvalidState("evolve_pure needs a pure state".into()))?;
    let n = v.len();
    let initial = CMatrix::from_column_slice(n, 1, v.as_slice());
    let (y, rec, accepted, rejected) = run(ham, program, initial, Body::Pure, opts)?;
    let psi = CVector::from_column_slice(y.as_slice());
    let drift = (psi.norm() - 1.0).abs();
    if drift > 1e-8 {
        log::warn!("norm drifted by {drift:e} during closed evolution");
    }
    let final_state = QuantumState::pure_unchecked(ham.layout().clone(), psi0.frame(), psi)?;
    Ok(Trajectory {
        times: rec.times,
        columns: rec.columns,
        records: rec.records,
        segment_labels: rec.labels,
        final_state,
        norm_drift: drift,
        min_eigenvalue: 1.0,
        steps_accepted: accepted,
        steps_rejected: rejected,
    })
}

/// Lindblad evolution `d(rho)/dt = -i[H, rho] + sum_k g_k (L rho L^dag - {L^dag L, rho}/2)`.
pub fn evolve_lindblad(
    ham: &ChannelHamiltonian,
    program: &CoefficientProgram,
    rho0: &QuantumState,
    collapse: &CollapseSet,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    if rho0.layout() != ham.layout() {
        return Err(Error::LayoutMismatch(format!("state {} vs Hamiltonian {}", rho0.layout(), ham.layout())));
    }
    rho0.validate()?;
    let n = ham.layout().total_dim();
    let mut ops = Vec::new();
    let mut anti = CMatrix::zeros(n, n);
    for term in &collapse.terms {
        if term.op.layout() != ham.layout() {
            return Err(Error::LayoutMismatch(format!("collapse `{}` on {}", term.label, term.op.layout())));
        }
        let l = term.op.data() * C64::from(term.rate.sqrt());
        anti += l.adjoint() * &l;
        ops.push(SparseOp::from_dense(&l));
    }
    let (rho, rec, accepted, rejected) =
        run(ham, program, rho0.density_matrix(), Body::Density { collapse: ops, anti }, opts)?;
    let drift = (rho.trace() - C64::from(1.0)).norm();
    let herm = hermitian_deviation(&rho);
    let min_eig = min_eigenvalue(&rho);
    if min_eig < -1e-6 {
        return Err(Error::Negativity { min_eigenvalue: min_eig });
    }
    if drift > 1e-8 || herm > 1e-9 {
        log::warn!("Lindblad evolution drifted: trace {drift:e}, hermiticity {herm:e}");
    }
    let final_state = QuantumState::density_unchecked(ham.layout().clone(), rho0.frame(), rho)?;
    Ok(Trajectory {
        times: rec.times,
        columns: rec.columns,
        records: rec.records,
        segment_labels: rec.labels,
        final_state,
        norm_drift: drift,
        min_eigenvalue: min_eig,
        steps_accepted: accepted,
        steps_rejected: rejected,
    })
}

/// Evolves a pure state with [`evolve_pure`] when `collapse` is empty and with
/// [`evolve_lindblad`] otherwise.
pub fn evolve(
    ham: &ChannelHamiltonian,
    program: &CoefficientProgram,
    state: &QuantumState,
    collapse: &CollapseSet,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    if collapse.is_empty() && matches!(state.body(), StateBody::Pure(_)) {
        evolve_pure(ham, program, state, opts)
    } else {
        evolve_lindblad(ham, program, state, collapse, opts)
    }
}

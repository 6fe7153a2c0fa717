//! Closed-form and brute-force references that do not touch the integrator.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{hermitian_deviation, CMatrix, OperatorMatrix, C64, I};
use crate::model::angular;

/// A scalar closed form valid on `[domain.0, domain.1]`.
pub struct AnalyticPrediction {
    pub quantity: String,
    pub domain: (f64, f64),
    evaluator: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for AnalyticPrediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticPrediction").field("quantity", &self.quantity).field("domain", &self.domain).finish()
    }
}

impl AnalyticPrediction {
    pub fn new(quantity: impl Into<String>, domain: (f64, f64), evaluator: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { quantity: quantity.into(), domain, evaluator: Box::new(evaluator) }
    }

    /// Value at `x`, or `None` outside the validity domain.
    pub fn evaluate(&self, x: f64) -> Option<f64> {
        (x >= self.domain.0 && x <= self.domain.1).then(|| (self.evaluator)(x))
    }

    /// Population of `|n+1, g>` versus time, starting from `|n, e>`.
    pub fn jc_transfer(n: usize, g: f64) -> Self {
        Self::new(format!("p_mode_gain(n={n}, g={g} MHz)"), (0.0, f64::INFINITY), move |t| {
            jc_populations(n, g, t, JcStart::QubitExcited).0
        })
    }

    /// Fock characteristic function on the real axis, `C_n(x)`.
    pub fn fock_char(n: usize) -> Self {
        Self::new(format!("C_{n}(alpha)"), (f64::NEG_INFINITY, f64::INFINITY), move |x| {
            char_fock_closed_form(n, C64::from(x)).re
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JcStart {
    /// `|n, e>`
    QubitExcited,
    /// `|n+1, g>`
    ModeExcited,
}

/// Two-level exchange between `|n, e>` and `|n+1, g>` at angular rate
/// `2pi g sqrt(n+1)` with `g` in MHz and `t` in us.
///
/// Returns `(population of |n+1, g>, population of |n, e>)`.
pub fn jc_populations(n: usize, g: f64, t: f64, start: JcStart) -> (f64, f64) {
    let phase = angular(g) * ((n + 1) as f64).sqrt() * t;
    let (s, c) = phase.sin_cos();
    let moved = s * s;
    let stayed = c * c;
    match start {
        JcStart::QubitExcited => (moved, stayed),
        JcStart::ModeExcited => (stayed, moved),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrightDarkStart {
    /// `|1, 0, g>`
    SinglePhotonMem1,
    /// `|0, 0, e>`
    QubitExcitedVacuum,
}

/// Amplitudes of the single-excitation manifold for equal couplings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrightDarkAmplitudes {
    /// `<1, 0, g|psi>`
    pub mem1: C64,
    /// `<0, 1, g|psi>`
    pub mem2: C64,
    /// `<0, 0, e|psi>`
    pub qubit: C64,
    /// `<1_B, g|psi>` with `|1_B> = (|1,0> + |0,1>)/sqrt 2`
    pub bright: C64,
    /// `<1_D, g|psi>` with `|1_D> = (|1,0> - |0,1>)/sqrt 2`
    pub dark: C64,
}

impl BrightDarkAmplitudes {
    pub fn norm_sqr(&self) -> f64 {
        self.mem1.norm_sqr() + self.mem2.norm_sqr() + self.qubit.norm_sqr()
    }
}

/// Closed-form evolution under `H = sqrt 2 G (B^dag sigma_- + B sigma_+)`,
/// `G = 2pi g`. Only the bright mode exchanges with the qubit.
pub fn bright_dark_evolution(t: f64, g: f64, start: BrightDarkStart) -> Result<BrightDarkAmplitudes> {
    if !(g > 0.0) {
        return Err(Error::params("g", "coupling must be positive"));
    }
    let w = 2f64.sqrt() * angular(g) * t;
    let (s, c) = w.sin_cos();
    let (bright, dark, qubit) = match start {
        BrightDarkStart::SinglePhotonMem1 => {
            (C64::from(c * FRAC_1_SQRT_2), C64::from(FRAC_1_SQRT_2), -I * (s * FRAC_1_SQRT_2))
        }
        BrightDarkStart::QubitExcitedVacuum => (-I * s, C64::from(0.0), C64::from(c)),
    };
    let r = C64::from(FRAC_1_SQRT_2);
    Ok(BrightDarkAmplitudes { mem1: (bright + dark) * r, mem2: (bright - dark) * r, qubit, bright, dark })
}

/// Laguerre polynomial `L_n(x)` by the three-term recurrence.
pub fn laguerre(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `<n|D(alpha)|n> = exp(-|alpha|^2/2) L_n(|alpha|^2)`.
pub fn char_fock_closed_form(n: usize, alpha: C64) -> C64 {
    let x = alpha.norm_sqr();
    C64::from((-x / 2.0).exp() * laguerre(n, x))
}

/// Joint characteristic function of `(|1,0> + |0,1>)/sqrt 2`:
/// `exp(-(|a|^2 + |b|^2)/2) (2 - |a|^2 - |b|^2 - (a b^* + a^* b)) / 2`.
pub fn bell_char_closed_form(alpha: C64, beta: C64) -> C64 {
    let (x, y) = (alpha.norm_sqr(), beta.norm_sqr());
    let cross = (alpha * beta.conj() + alpha.conj() * beta).re;
    C64::from(0.5 * (-(x + y) / 2.0).exp() * (2.0 - x - y - cross))
}

/// `exp(-i H t)` by diagonalization.
pub fn brute_force_propagator(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    let dim = h.dim();
    if dim > 512 {
        return Err(Error::InvalidDimension { dim, reason: "brute-force propagator is limited to 512 levels" });
    }
    let deviation = hermitian_deviation(h.data());
    if deviation > 1e-12 {
        return Err(Error::NotHermitian { deviation });
    }
    let eig = h.data().clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|e| (-I * (e * t)).exp()));
    OperatorMatrix::new(h.layout().clone(), v * phases * v.adjoint())
}

//! Operator and state algebra on truncated Fock spaces tensored with a qubit.
//!
//! Basis ordering follows the layout: the first listed subsystem is the most
//! significant index of the tensor product. The qubit basis is `{|g>, |e>}`
//! with index 0 the ground state and `sigma_z |g> = +|g>`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const QUBIT: &str = "qubit";

const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;
const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
const DENSITY_MIN_EIGENVALUE: f64 = -1e-8;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Ordered tensor-product structure: one entry per bosonic mode plus the qubit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemLayout {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl SubsystemLayout {
    pub fn new<S: Into<String>>(parts: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let (labels, dims): (Vec<String>, Vec<usize>) =
            parts.into_iter().map(|(l, d)| (l.into(), d)).unzip();
        if labels.is_empty() {
            return Err(Error::InvalidLayout("layout has no subsystems".into()));
        }
        for (label, &dim) in labels.iter().zip(&dims) {
            if dim < 2 {
                return Err(Error::InvalidDimension { dim, reason: "subsystem dims must be at least 2" });
            }
            if label == QUBIT && dim != 2 {
                return Err(Error::InvalidDimension { dim, reason: "the qubit has dimension 2" });
            }
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::InvalidLayout(format!("duplicate label `{label}`")));
            }
        }
        Ok(Self { dims, labels })
    }

    /// A layout with a single subsystem, used for operators acting on one mode or the qubit.
    pub fn single(label: &str, dim: usize) -> Result<Self> {
        Self::new([(label, dim)])
    }

    /// Modes named in `modes` (each truncated at `fock_dim`) followed by the qubit.
    pub fn modes_with_qubit(modes: &[&str], fock_dim: usize) -> Result<Self> {
        Self::new(modes.iter().map(|m| (*m, fock_dim)).chain(std::iter::once((QUBIT, 2))))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.index_of(label)?])
    }

    pub fn has_qubit(&self) -> bool {
        self.contains(QUBIT)
    }

    /// Labels of every bosonic mode, in layout order.
    pub fn mode_labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str).filter(|l| *l != QUBIT)
    }

    /// Stride of each subsystem index inside the flattened basis index.
    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    /// Flattened basis index of the given per-subsystem occupation numbers.
    pub fn basis_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.dims.len() {
            return Err(Error::DimensionMismatch { expected: self.dims.len(), found: levels.len() });
        }
        let mut index = 0;
        for ((&level, &dim), stride) in levels.iter().zip(&self.dims).zip(self.strides()) {
            if level >= dim {
                return Err(Error::InvalidDimension { dim: level, reason: "level exceeds truncation" });
            }
            index += level * stride;
        }
        Ok(index)
    }

    /// Sub-layout restricted to the given labels, kept in layout order.
    pub fn restrict(&self, keep: &[&str]) -> Result<Self> {
        for label in keep {
            self.index_of(label)?;
        }
        Self::new(
            self.labels
                .iter()
                .zip(&self.dims)
                .filter(|(l, _)| keep.contains(&l.as_str()))
                .map(|(l, &d)| (l.clone(), d)),
        )
    }
}

impl fmt::Display for SubsystemLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.labels.iter().zip(&self.dims).map(|(l, d)| format!("{l}:{d}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Dense complex operator on a layout's Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    layout: SubsystemLayout,
    data: CMatrix,
    hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(layout: SubsystemLayout, data: CMatrix) -> Result<Self> {
        let n = layout.total_dim();
        if data.nrows() != n || data.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: data.nrows().max(data.ncols()) });
        }
        Ok(Self { layout, data, hermitian: false })
    }

    /// Builds an operator flagged Hermitian, verifying `max |A - A^dag| <= 1e-12`.
    pub fn hermitian(layout: SubsystemLayout, data: CMatrix) -> Result<Self> {
        let mut op = Self::new(layout, data)?;
        let deviation = hermitian_deviation(&op.data);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn zeros(layout: SubsystemLayout) -> Self {
        let n = layout.total_dim();
        Self { layout, data: CMatrix::zeros(n, n), hermitian: true }
    }

    pub fn identity(layout: SubsystemLayout) -> Self {
        let n = layout.total_dim();
        Self { layout, data: CMatrix::identity(n, n), hermitian: true }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> Self {
        Self { layout: self.layout.clone(), data: self.data.adjoint(), hermitian: self.hermitian }
    }

    fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!("{} vs {}", self.layout, other.layout)));
        }
        Ok(())
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self { layout: self.layout.clone(), data: &self.data * &other.data, hermitian: false })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            data: &self.data + &other.data,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            data: &self.data - &other.data,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    /// Multiplies by a real scalar (keeps the Hermitian flag).
    pub fn scale(&self, factor: f64) -> Self {
        Self { layout: self.layout.clone(), data: &self.data * C64::from(factor), hermitian: self.hermitian }
    }

    pub fn scale_complex(&self, factor: C64) -> Self {
        Self {
            layout: self.layout.clone(),
            data: &self.data * factor,
            hermitian: self.hermitian && factor.im == 0.0,
        }
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            data: &self.data * &other.data - &other.data * &self.data,
            hermitian: false,
        })
    }

    /// Re-checks and sets the Hermitian flag.
    pub fn into_hermitian(self) -> Result<Self> {
        Self::hermitian(self.layout, self.data)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn apply(&self, vector: &CVector) -> CVector {
        &self.data * vector
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub(crate) fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Which reference frame a state is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Sideband-drive frame for the modes, Rabi-drive frame for the qubit.
    #[serde(alias = "drive")]
    DriveFrame,
    /// Effective Jaynes-Cummings frame (dressed qubit basis).
    #[serde(alias = "jc")]
    JcFrame,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateBody {
    Pure(CVector),
    Density(CMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    layout: SubsystemLayout,
    frame: Frame,
    body: StateBody,
}

impl QuantumState {
    pub fn pure(layout: SubsystemLayout, frame: Frame, vector: CVector) -> Result<Self> {
        if vector.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch { expected: layout.total_dim(), found: vector.len() });
        }
        let norm = vector.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("pure state norm {norm} differs from 1")));
        }
        Ok(Self { layout, frame, body: StateBody::Pure(vector) })
    }

    /// Normalizes `vector` before wrapping it.
    pub fn pure_normalized(layout: SubsystemLayout, frame: Frame, vector: CVector) -> Result<Self> {
        let norm = vector.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Self::pure(layout, frame, vector / C64::from(norm))
    }

    pub fn density(layout: SubsystemLayout, frame: Frame, rho: CMatrix) -> Result<Self> {
        let state = Self::density_unchecked(layout, frame, rho)?;
        state.validate()?;
        Ok(state)
    }

    /// Wraps a vector checking only its length.
    pub(crate) fn pure_unchecked(layout: SubsystemLayout, frame: Frame, vector: CVector) -> Result<Self> {
        if vector.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch { expected: layout.total_dim(), found: vector.len() });
        }
        Ok(Self { layout, frame, body: StateBody::Pure(vector) })
    }

    /// Wraps a density matrix checking only its shape.
    pub(crate) fn density_unchecked(layout: SubsystemLayout, frame: Frame, rho: CMatrix) -> Result<Self> {
        let n = layout.total_dim();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rho.nrows() });
        }
        Ok(Self { layout, frame, body: StateBody::Density(rho) })
    }

    /// Checks the state invariants (unit norm or unit trace, Hermiticity, positivity).
    pub fn validate(&self) -> Result<()> {
        match &self.body {
            StateBody::Pure(v) => {
                let norm = v.norm();
                if (norm - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidState(format!("pure state norm {norm} differs from 1")));
                }
            }
            StateBody::Density(rho) => {
                let trace = rho.trace();
                if (trace - ONE).norm() > NORM_TOL {
                    return Err(Error::InvalidState(format!("density trace {trace} differs from 1")));
                }
                let dev = hermitian_deviation(rho);
                if dev > DENSITY_HERMITIAN_TOL {
                    return Err(Error::InvalidState(format!("density matrix not Hermitian ({dev:e})")));
                }
                let min = min_eigenvalue(rho);
                if min < DENSITY_MIN_EIGENVALUE {
                    return Err(Error::InvalidState(format!("density matrix has eigenvalue {min:e}")));
                }
            }
        }
        Ok(())
    }

    /// Product basis state; `levels` holds one occupation per subsystem (qubit: 0 = g, 1 = e).
    pub fn basis(layout: SubsystemLayout, frame: Frame, levels: &[usize]) -> Result<Self> {
        let index = layout.basis_index(levels)?;
        let mut v = CVector::zeros(layout.total_dim());
        v[index] = ONE;
        Ok(Self { layout, frame, body: StateBody::Pure(v) })
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn body(&self) -> &StateBody {
        &self.body
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.body, StateBody::Pure(_))
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn vector(&self) -> Option<&CVector> {
        match &self.body {
            StateBody::Pure(v) => Some(v),
            StateBody::Density(_) => None,
        }
    }

    pub fn density_matrix(&self) -> CMatrix {
        match &self.body {
            StateBody::Pure(v) => v * v.adjoint(),
            StateBody::Density(rho) => rho.clone(),
        }
    }

    pub fn to_density(&self) -> Self {
        Self { layout: self.layout.clone(), frame: self.frame, body: StateBody::Density(self.density_matrix()) }
    }

    /// Applies a unitary given as a full-space matrix.
    pub fn transform(&self, unitary: &CMatrix) -> Result<Self> {
        let n = self.layout.total_dim();
        if unitary.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: unitary.nrows() });
        }
        let body = match &self.body {
            StateBody::Pure(v) => StateBody::Pure(unitary * v),
            StateBody::Density(rho) => StateBody::Density(unitary * rho * unitary.adjoint()),
        };
        Ok(Self { layout: self.layout.clone(), frame: self.frame, body })
    }

    pub fn trace(&self) -> f64 {
        match &self.body {
            StateBody::Pure(v) => v.norm_squared(),
            StateBody::Density(rho) => rho.trace().re,
        }
    }
}

pub(crate) fn min_eigenvalue(rho: &CMatrix) -> f64 {
    let herm = (rho + rho.adjoint()) * C64::from(0.5);
    herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Truncated bosonic lowering operator with `<m|a|m+1> = sqrt(m+1)`.
pub fn annihilation(dim: usize) -> Result<OperatorMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, reason: "Fock truncation needs at least 2 levels" });
    }
    let mut data = CMatrix::zeros(dim, dim);
    for m in 0..dim - 1 {
        data[(m, m + 1)] = C64::from(((m + 1) as f64).sqrt());
    }
    OperatorMatrix::new(SubsystemLayout::single("mode", dim)?, data)
}

pub fn creation(dim: usize) -> Result<OperatorMatrix> {
    Ok(annihilation(dim)?.adjoint())
}

pub fn number(dim: usize) -> Result<OperatorMatrix> {
    let a = annihilation(dim)?;
    a.adjoint().compose(&a)?.into_hermitian()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
    /// Raising operator `|e><g|`.
    Plus,
    /// Lowering operator `|g><e|`.
    Minus,
}

pub fn pauli(which: Pauli) -> OperatorMatrix {
    let (z, o, i) = (ZERO, ONE, I);
    let (data, hermitian) = match which {
        Pauli::X => (CMatrix::from_row_slice(2, 2, &[z, o, o, z]), true),
        Pauli::Y => (CMatrix::from_row_slice(2, 2, &[z, -i, i, z]), true),
        Pauli::Z => (CMatrix::from_row_slice(2, 2, &[o, z, z, -o]), true),
        Pauli::Plus => (CMatrix::from_row_slice(2, 2, &[z, z, o, z]), false),
        Pauli::Minus => (CMatrix::from_row_slice(2, 2, &[z, o, z, z]), false),
    };
    OperatorMatrix { layout: SubsystemLayout::single(QUBIT, 2).expect("qubit layout"), data, hermitian }
}

/// Tensors `op` with identities so it acts on `target` inside `layout`.
pub fn embed(op: &OperatorMatrix, layout: &SubsystemLayout, target: &str) -> Result<OperatorMatrix> {
    embed_matrix(op.data(), layout, target).map(|data| OperatorMatrix {
        layout: layout.clone(),
        data,
        hermitian: op.is_hermitian(),
    })
}

pub(crate) fn embed_matrix(op: &CMatrix, layout: &SubsystemLayout, target: &str) -> Result<CMatrix> {
    let k = layout.index_of(target)?;
    let dim = layout.dims()[k];
    if op.nrows() != dim || op.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: op.nrows() });
    }
    let before: usize = layout.dims()[..k].iter().product();
    let after: usize = layout.dims()[k + 1..].iter().product();
    let left = CMatrix::identity(before, before).kronecker(op);
    Ok(left.kronecker(&CMatrix::identity(after, after)))
}

/// Mode lowering operator embedded in `layout`.
pub fn mode_annihilation(layout: &SubsystemLayout, mode: &str) -> Result<OperatorMatrix> {
    embed(&annihilation(layout.dim_of(mode)?)?, layout, mode)
}

pub fn mode_number(layout: &SubsystemLayout, mode: &str) -> Result<OperatorMatrix> {
    embed(&number(layout.dim_of(mode)?)?, layout, mode)
}

pub fn qubit_op(layout: &SubsystemLayout, which: Pauli) -> Result<OperatorMatrix> {
    embed(&pauli(which), layout, QUBIT)
}

/// Smallest Fock dimension considered adequate for displacements of size `|alpha|`.
pub fn displacement_adequate_dim(alpha_abs: f64) -> usize {
    (alpha_abs * alpha_abs + 3.0 * alpha_abs + 4.0).ceil() as usize
}

/// `D(alpha) = exp(alpha a^dag - alpha^* a)` on a truncated Fock space.
///
/// Logs a truncation warning when the displaced vacuum leaks more than 1e-6
/// into the top two levels.
pub fn displacement(alpha: C64, dim: usize) -> Result<OperatorMatrix> {
    let data = displacement_matrix(alpha, dim)?;
    let leakage: f64 = (dim.saturating_sub(2)..dim).map(|m| data[(m, 0)].norm_sqr()).sum();
    if leakage > 1e-6 {
        log::warn!(
            "displacement |alpha| = {:.3} on {dim} levels leaks {leakage:.2e} into the top levels",
            alpha.norm()
        );
    }
    OperatorMatrix::new(SubsystemLayout::single("mode", dim)?, data)
}

pub(crate) fn displacement_matrix(alpha: C64, dim: usize) -> Result<CMatrix> {
    let a = annihilation(dim)?.into_data();
    let generator = a.adjoint() * alpha - a * alpha.conj();
    Ok(expm(&generator))
}

/// Matrix exponential (scaling and squaring with Pade approximants).
pub fn expm(m: &CMatrix) -> CMatrix {
    if m.iter().all(|z| *z == ZERO) {
        return CMatrix::identity(m.nrows(), m.ncols());
    }
    m.exp()
}

/// Reduced density matrix on the kept subsystems (in layout order).
pub fn partial_trace(state: &QuantumState, keep: &[&str]) -> Result<QuantumState> {
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let layout = state.layout();
    let kept_layout = layout.restrict(keep)?;
    let keep_mask: Vec<bool> = layout.labels().iter().map(|l| keep.contains(&l.as_str())).collect();
    let dims = layout.dims();

    let traced_dims: Vec<usize> =
        dims.iter().zip(&keep_mask).filter(|(_, &k)| !k).map(|(&d, _)| d).collect();
    let traced_total: usize = traced_dims.iter().product();
    let kept_total = kept_layout.total_dim();
    let strides = layout.strides();

    // Flattened full index for (kept index, traced index).
    let full_index = |kept: usize, traced: usize| -> usize {
        let mut kept_rem = kept;
        let mut traced_rem = traced;
        let mut kept_div: usize = kept_total;
        let mut traced_div: usize = traced_total;
        let mut idx = 0;
        for (k, &d) in dims.iter().enumerate() {
            let level = if keep_mask[k] {
                kept_div /= d;
                let l = kept_rem / kept_div;
                kept_rem %= kept_div;
                l
            } else {
                traced_div /= d;
                let l = traced_rem / traced_div;
                traced_rem %= traced_div;
                l
            };
            idx += level * strides[k];
        }
        idx
    };

    let index_table: Vec<Vec<usize>> = (0..kept_total)
        .map(|i| (0..traced_total).map(|t| full_index(i, t)).collect())
        .collect();

    let mut reduced = CMatrix::zeros(kept_total, kept_total);
    match state.body() {
        StateBody::Pure(v) => {
            for i in 0..kept_total {
                for j in 0..kept_total {
                    let mut acc = ZERO;
                    for t in 0..traced_total {
                        acc += v[index_table[i][t]] * v[index_table[j][t]].conj();
                    }
                    reduced[(i, j)] = acc;
                }
            }
        }
        StateBody::Density(rho) => {
            for i in 0..kept_total {
                for j in 0..kept_total {
                    let mut acc = ZERO;
                    for t in 0..traced_total {
                        acc += rho[(index_table[i][t], index_table[j][t])];
                    }
                    reduced[(i, j)] = acc;
                }
            }
        }
    }
    QuantumState::density_unchecked(kept_layout, state.frame(), reduced)
}

/// `<psi|A|psi>` or `Tr[rho A]`.
pub fn expectation(state: &QuantumState, op: &OperatorMatrix) -> Result<C64> {
    if state.layout() != op.layout() {
        return Err(Error::LayoutMismatch(format!("state {} vs operator {}", state.layout(), op.layout())));
    }
    let value = match state.body() {
        StateBody::Pure(v) => v.dotc(&(op.data() * v)),
        StateBody::Density(rho) => trace_product(rho, op.data()),
    };
    if op.is_hermitian() && value.im.abs() > 1e-9 * value.norm().max(1.0) {
        log::warn!("Hermitian expectation value has imaginary part {:e}", value.im);
    }
    Ok(value)
}

/// `Tr[A B]` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fock(dim: usize, n: usize) -> CVector {
        let mut v = CVector::zeros(dim);
        v[n] = ONE;
        v
    }

    #[test]
    fn annihilation_matrix_elements() {
        let a2 = annihilation(2).unwrap();
        assert_eq!(a2.apply(&fock(2, 1)), fock(2, 0));

        let a4 = annihilation(4).unwrap();
        let out = a4.apply(&fock(4, 3));
        assert!((out[2] - C64::from(3f64.sqrt())).norm() < 1e-15);
        assert!(a4.apply(&fock(4, 0)).iter().all(|z| *z == ZERO));

        assert!(matches!(annihilation(1), Err(Error::InvalidDimension { .. })));
    }

    #[test]
    fn pauli_conventions() {
        let g = fock(2, 0);
        let e = fock(2, 1);
        assert_eq!(pauli(Pauli::Z).apply(&g), g);
        assert_eq!(pauli(Pauli::Plus).apply(&g), e);
        assert_eq!(pauli(Pauli::Minus).apply(&e), g);
        let x = pauli(Pauli::X);
        assert_eq!(x.compose(&x).unwrap().data(), &CMatrix::identity(2, 2));
        // sigma_+ = (sigma_x - i sigma_y) / 2
        let plus = (pauli(Pauli::X).data() - pauli(Pauli::Y).data() * I) * C64::from(0.5);
        assert_eq!(&plus, pauli(Pauli::Plus).data());
    }

    #[test]
    fn embed_examples() {
        let layout = SubsystemLayout::new([("mem1", 3), (QUBIT, 2)]).unwrap();
        let z = embed(&pauli(Pauli::Z), &layout, QUBIT).unwrap();
        assert_eq!(z.dim(), 6);
        for i in 0..6 {
            for j in 0..6 {
                if i / 2 != j / 2 {
                    assert_eq!(z.data()[(i, j)], ZERO);
                }
            }
        }
        let a = embed(&annihilation(3).unwrap(), &layout, "mem1").unwrap();
        let one_g = layout.basis_index(&[1, 0]).unwrap();
        let zero_g = layout.basis_index(&[0, 0]).unwrap();
        let mut v = CVector::zeros(6);
        v[one_g] = ONE;
        let out = a.apply(&v);
        assert_eq!(out[zero_g], ONE);

        let n = embed(&number(3).unwrap(), &layout, "mem1").unwrap();
        assert!((n.trace() - C64::from(6.0)).norm() < 1e-14);

        assert!(matches!(embed(&pauli(Pauli::Z), &layout, "mem2"), Err(Error::UnknownLabel(_))));
        assert!(matches!(
            embed(&annihilation(4).unwrap(), &layout, "mem1"),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn layout_validation() {
        assert!(SubsystemLayout::new([("mem1", 1)]).is_err());
        assert!(SubsystemLayout::new([(QUBIT, 3)]).is_err());
        assert!(SubsystemLayout::new([("mem1", 3), ("mem1", 3)]).is_err());
        let l = SubsystemLayout::new([("mem1", 3), ("mem2", 4), (QUBIT, 2)]).unwrap();
        assert_eq!(l.total_dim(), 24);
        assert_eq!(l.basis_index(&[1, 2, 1]).unwrap(), 8 + 4 + 1);
    }

    #[test]
    fn displacement_examples() {
        let d0 = displacement(ZERO, 6).unwrap();
        assert!((d0.data() - CMatrix::identity(6, 6)).iter().all(|z| z.norm() < 1e-15));

        let d = displacement(ONE, 20).unwrap();
        assert!((d.data()[(0, 0)].re - (-0.5f64).exp()).abs() < 1e-12);
        assert!((d.data()[(0, 0)].re - 0.606531).abs() < 1e-6);
        assert!(d.data()[(1, 1)].norm() < 1e-12);
    }

    #[test]
    fn coherent_state_mean_photon_number() {
        let dim = 16;
        let layout = SubsystemLayout::single("mem1", dim).unwrap();
        let psi = displacement(C64::from(2.0), dim).unwrap().apply(&fock(dim, 0));
        let state = QuantumState::pure_normalized(layout.clone(), Frame::JcFrame, psi).unwrap();
        let n = mode_number(&layout, "mem1").unwrap();
        let mean = expectation(&state, &n).unwrap();
        assert!((mean.re - 4.0).abs() < 1e-3, "{mean}");
    }

    #[test]
    fn expectation_examples() {
        let q = SubsystemLayout::single(QUBIT, 2).unwrap();
        let g = QuantumState::basis(q.clone(), Frame::DriveFrame, &[0]).unwrap();
        let z = qubit_op(&q, Pauli::Z).unwrap();
        assert_eq!(expectation(&g, &z).unwrap(), ONE);

        let m = SubsystemLayout::single("mem1", 5).unwrap();
        let three = QuantumState::basis(m.clone(), Frame::DriveFrame, &[3]).unwrap();
        let n = mode_number(&m, "mem1").unwrap();
        assert!((expectation(&three, &n).unwrap() - C64::from(3.0)).norm() < 1e-14);
        assert!(matches!(expectation(&three, &z), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn partial_trace_examples() {
        let layout = SubsystemLayout::new([("mem1", 3), ("mem2", 3), (QUBIT, 2)]).unwrap();
        let s = QuantumState::basis(layout.clone(), Frame::JcFrame, &[1, 0, 0]).unwrap();
        let r = partial_trace(&s, &["mem1"]).unwrap();
        let rho = r.density_matrix();
        assert_eq!(rho[(1, 1)], ONE);
        assert!((r.trace() - 1.0).abs() < 1e-10);

        let mut v = CVector::zeros(layout.total_dim());
        v[layout.basis_index(&[1, 0, 0]).unwrap()] = C64::from(0.5f64.sqrt());
        v[layout.basis_index(&[0, 1, 0]).unwrap()] = C64::from(0.5f64.sqrt());
        let bell = QuantumState::pure(layout, Frame::JcFrame, v).unwrap();
        let r = partial_trace(&bell, &["mem1"]).unwrap().density_matrix();
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((r[(1, 1)].re - 0.5).abs() < 1e-14);
        assert!(r[(0, 1)].norm() < 1e-14);

        assert!(matches!(partial_trace(&bell_like(), &[]), Err(Error::EmptyKeep)));
    }

    fn bell_like() -> QuantumState {
        let layout = SubsystemLayout::new([("mem1", 2), (QUBIT, 2)]).unwrap();
        QuantumState::basis(layout, Frame::JcFrame, &[0, 0]).unwrap()
    }

    #[test]
    fn ladder_commutator_is_identity_below_truncation() {
        let dim = 7;
        let a = annihilation(dim).unwrap();
        let c = a.commutator(&a.adjoint()).unwrap();
        for i in 0..dim - 1 {
            for j in 0..dim - 1 {
                let expected = if i == j { ONE } else { ZERO };
                assert!((c.data()[(i, j)] - expected).norm() < 1e-13);
            }
        }
    }

    fn arb_complex_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
            .prop_map(move |v| CMatrix::from_iterator(n, n, v.into_iter().map(|(re, im)| C64::new(re, im))))
    }

    proptest! {
        #[test]
        fn embed_respects_composition(a in arb_complex_matrix(3), b in arb_complex_matrix(3)) {
            let layout = SubsystemLayout::new([("mem1", 3), (QUBIT, 2)]).unwrap();
            let single = SubsystemLayout::single("mode", 3).unwrap();
            let oa = OperatorMatrix::new(single.clone(), a).unwrap();
            let ob = OperatorMatrix::new(single, b).unwrap();
            let lhs = embed(&oa.compose(&ob).unwrap(), &layout, "mem1").unwrap();
            let rhs = embed(&oa, &layout, "mem1").unwrap().compose(&embed(&ob, &layout, "mem1").unwrap()).unwrap();
            prop_assert!(max_abs(&(lhs.data() - rhs.data())) < 1e-14);
        }

        #[test]
        fn displacement_inverse(re in -1.5f64..1.5, im in -1.5f64..1.5) {
            let alpha = C64::new(re, im);
            let dim = displacement_adequate_dim(alpha.norm()).max(4);
            let d = displacement(alpha, dim).unwrap();
            let dm = displacement(-alpha, dim).unwrap();
            let prod = d.compose(&dm).unwrap();
            prop_assert!(max_abs(&(prod.data() - CMatrix::identity(dim, dim))) < 1e-8);
        }

        #[test]
        fn partial_trace_has_unit_trace(amps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 18)) {
            let layout = SubsystemLayout::new([("mem1", 3), ("mem2", 3), (QUBIT, 2)]).unwrap();
            let v = CVector::from_iterator(18, amps.into_iter().map(|(re, im)| C64::new(re, im)));
            prop_assume!(v.norm() > 1e-3);
            let s = QuantumState::pure_normalized(layout, Frame::JcFrame, v).unwrap();
            for keep in [&["mem1"][..], &["mem2", "qubit"][..], &["qubit"][..]] {
                let r = partial_trace(&s, keep).unwrap();
                prop_assert!((r.trace() - 1.0).abs() < 1e-10);
            }
        }
    }
}

//! Characteristic-function tomography of the memory modes.
//!
//! `C(alpha) = Tr[rho D(alpha)]` is evaluated from the reduced mode state with
//! displacement operators built on a padded Fock space, so that truncation of
//! the state does not truncate the displacement.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::csv_error;
use crate::error::{Error, Result};
use crate::hilbert::{
    displacement_matrix, embed_matrix, partial_trace, pauli, CMatrix, CVector, Pauli, QuantumState, StateBody,
    SubsystemLayout, C64, ONE, QUBIT, ZERO,
};
use crate::protocols::{qubit_rotation, Axis};
use crate::report::fmt_float;

/// Rectangular grid in the complex plane; `values` are stored row by row,
/// with the imaginary part varying slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharGrid {
    pub re_axis: Vec<f64>,
    pub im_axis: Vec<f64>,
}

impl CharGrid {
    pub fn new(re_axis: Vec<f64>, im_axis: Vec<f64>) -> Result<Self> {
        if re_axis.is_empty() || im_axis.is_empty() {
            return Err(Error::params("grid", "axes must be non-empty"));
        }
        if re_axis.iter().chain(&im_axis).any(|x| !x.is_finite()) {
            return Err(Error::params("grid", "axis values must be finite"));
        }
        Ok(Self { re_axis, im_axis })
    }

    /// `points x points` grid spanning `[-extent, extent]` on both axes.
    pub fn square(extent: f64, points: usize) -> Result<Self> {
        let axis = linspace(-extent, extent, points)?;
        Self::new(axis.clone(), axis)
    }

    pub fn len(&self) -> usize {
        self.re_axis.len() * self.im_axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = C64> + '_ {
        self.im_axis.iter().flat_map(move |&im| self.re_axis.iter().map(move |&re| C64::new(re, im)))
    }

    pub fn max_radius(&self) -> f64 {
        let r = self.re_axis.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let i = self.im_axis.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        r.hypot(i)
    }
}

/// Evenly spaced samples including both end points.
pub fn linspace(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    match points {
        0 => Err(Error::params("points", "need at least one point")),
        1 => Ok(vec![start]),
        _ => {
            let step = (stop - start) / (points - 1) as f64;
            Ok((0..points).map(|k| if k == points - 1 { stop } else { start + step * k as f64 }).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharMap {
    pub grid: CharGrid,
    pub values: Vec<C64>,
}

impl CharMap {
    pub fn at(&self, re_index: usize, im_index: usize) -> C64 {
        self.values[im_index * self.grid.re_axis.len() + re_index]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["re_alpha", "im_alpha", "re_C", "im_C"]).map_err(csv_error)?;
        for (alpha, c) in self.grid.points().zip(&self.values) {
            w.write_record([alpha.re, alpha.im, c.re, c.im].map(fmt_float)).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Matrix elements of `D(alpha)` on the first `dim` Fock levels, computed from
/// one eigen-decomposition of `a + a^dag` on a padded space:
/// `D(i s) = exp(i s (a + a^dag))`, and a phase rotation gives every other angle.
#[derive(Clone, Debug)]
pub struct DisplacementTable {
    dim: usize,
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl DisplacementTable {
    /// Accurate for `|alpha| <= max_radius`.
    pub fn new(dim: usize, max_radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension { dim, reason: "displacement table needs at least one level" });
        }
        let r = max_radius.abs();
        let padded = dim + (2.0 * r * r + 10.0 * r + 30.0).ceil() as usize;
        let mut x = DMatrix::<f64>::zeros(padded, padded);
        for k in 1..padded {
            let s = (k as f64).sqrt();
            x[(k - 1, k)] = s;
            x[(k, k - 1)] = s;
        }
        let eig = x.symmetric_eigen();
        Ok(Self { dim, vectors: eig.eigenvectors, eigenvalues: eig.eigenvalues.iter().copied().collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `dim x dim` block of `D(alpha)`.
    pub fn matrix(&self, alpha: C64) -> CMatrix {
        let (r, theta) = alpha.to_polar();
        let phase: Vec<C64> = self.eigenvalues.iter().map(|&l| C64::from_polar(1.0, r * l)).collect();
        let rot = theta - std::f64::consts::FRAC_PI_2;
        let d = self.dim;
        let padded = self.eigenvalues.len();
        let mut out = CMatrix::zeros(d, d);
        for m in 0..d {
            for n in 0..d {
                let mut acc = ZERO;
                for k in 0..padded {
                    acc += phase[k] * (self.vectors[(m, k)] * self.vectors[(n, k)]);
                }
                out[(m, n)] = acc * C64::from_polar(1.0, rot * (m as f64 - n as f64));
            }
        }
        out
    }
}

/// Reduced single-mode density matrix.
fn mode_density(state: &QuantumState, mode: &str) -> Result<CMatrix> {
    if !state.layout().contains(mode) || mode == QUBIT {
        return Err(Error::UnknownLabel(mode.to_string()));
    }
    Ok(partial_trace(state, &[mode])?.density_matrix())
}

fn check_origin(grid: &CharGrid, values: &[C64]) -> Result<()> {
    for (alpha, c) in grid.points().zip(values) {
        if alpha == ZERO && (c - ONE).norm() > 1e-6 {
            return Err(Error::InvalidState(format!("characteristic function at the origin is {c}, expected 1")));
        }
    }
    Ok(())
}

/// `C(alpha) = Tr[rho_mode D(alpha)]` over `grid`; other subsystems are traced out.
pub fn char_function(state: &QuantumState, mode: &str, grid: &CharGrid) -> Result<CharMap> {
    let rho = mode_density(state, mode)?;
    let table = DisplacementTable::new(rho.nrows(), grid.max_radius())?;
    let values: Vec<C64> = grid
        .points()
        .map(|alpha| {
            let d = table.matrix(alpha);
            let mut acc = ZERO;
            for m in 0..rho.nrows() {
                for n in 0..rho.nrows() {
                    acc += rho[(n, m)] * d[(m, n)];
                }
            }
            acc
        })
        .collect();
    check_origin(grid, &values)?;
    Ok(CharMap { grid: grid.clone(), values })
}

/// Which real coordinate of `alpha` (memory 1) and `beta` (memory 2) each
/// slice axis varies; the other coordinates are zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointSlice {
    ReRe,
    ReIm,
    ImRe,
    ImIm,
}

impl JointSlice {
    pub const ALL: [JointSlice; 4] = [JointSlice::ReRe, JointSlice::ReIm, JointSlice::ImRe, JointSlice::ImIm];

    pub fn name(self) -> &'static str {
        match self {
            JointSlice::ReRe => "re_re",
            JointSlice::ReIm => "re_im",
            JointSlice::ImRe => "im_re",
            JointSlice::ImIm => "im_im",
        }
    }

    /// `(alpha, beta)` for horizontal coordinate `x` and vertical coordinate `y`.
    pub fn point(self, x: f64, y: f64) -> (C64, C64) {
        match self {
            JointSlice::ReRe => (C64::new(x, 0.0), C64::new(y, 0.0)),
            JointSlice::ReIm => (C64::new(x, 0.0), C64::new(0.0, y)),
            JointSlice::ImRe => (C64::new(0.0, x), C64::new(y, 0.0)),
            JointSlice::ImIm => (C64::new(0.0, x), C64::new(0.0, y)),
        }
    }
}

/// One joint slice; the grid's real axis carries the memory 1 coordinate and
/// its imaginary axis the memory 2 coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct JointCharSlice {
    pub slice: JointSlice,
    pub grid: CharGrid,
    pub values: Vec<C64>,
}

impl JointCharSlice {
    pub fn at(&self, x_index: usize, y_index: usize) -> C64 {
        self.values[y_index * self.grid.re_axis.len() + x_index]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["re_alpha", "im_alpha", "re_beta", "im_beta", "re_C", "im_C"]).map_err(csv_error)?;
        for (xy, c) in self.grid.points().zip(&self.values) {
            let (a, b) = self.slice.point(xy.re, xy.im);
            w.write_record([a.re, a.im, b.re, b.im, c.re, c.im].map(fmt_float)).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `C(alpha, beta) = Tr[rho D_1(alpha) D_2(beta)]` on the four real slices.
pub fn joint_char_function(state: &QuantumState, grid: &CharGrid) -> Result<Vec<JointCharSlice>> {
    let reduced = partial_trace(state, &["mem1", "mem2"])?;
    let layout = reduced.layout().clone();
    let rho = reduced.density_matrix();
    let (d1, d2) = (layout.dim_of("mem1")?, layout.dim_of("mem2")?);
    let i1 = layout.index_of("mem1")?;
    let t1 = DisplacementTable::new(d1, grid.max_radius())?;
    let t2 = DisplacementTable::new(d2, grid.max_radius())?;
    // Basis index of (n1, n2) in layout order.
    let idx = |n1: usize, n2: usize| if i1 == 0 { n1 * d2 + n2 } else { n2 * d1 + n1 };
    let mut out = Vec::with_capacity(4);
    for slice in JointSlice::ALL {
        let values: Vec<C64> = grid
            .points()
            .map(|xy| {
                let (alpha, beta) = slice.point(xy.re, xy.im);
                let (da, db) = (t1.matrix(alpha), t2.matrix(beta));
                let mut acc = ZERO;
                for m1 in 0..d1 {
                    for n1 in 0..d1 {
                        let a = da[(m1, n1)];
                        if a == ZERO {
                            continue;
                        }
                        for m2 in 0..d2 {
                            for n2 in 0..d2 {
                                acc += rho[(idx(n1, n2), idx(m1, m2))] * a * db[(m2, n2)];
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        check_origin(grid, &values)?;
        out.push(JointCharSlice { slice, grid: grid.clone(), values });
    }
    Ok(out)
}

/// Excited-state population above which the qubit counts as not reset.
pub const RESET_THRESHOLD: f64 = 1e-6;

/// Emulates the qubit-echo measurement of `C(alpha)` on `mode`.
///
/// Starting from the qubit in `|g>`: `R_y(pi/2)`, `CD(-alpha/2)`, a `pi`
/// pulse about x, `CD(alpha/2)`, where `CD(b) = exp(-(b a^dag - b^* a) sigma_z / 2)`
/// displaces the `|e>` branch by `b/2` and the `|g>` branch by `-b/2`. The net
/// relative displacement is `alpha`, and `<sigma_x> + i <sigma_y> = C(alpha)`.
pub fn emulate_char_measurement(state: &QuantumState, mode: &str, alpha: C64) -> Result<C64> {
    if !state.layout().has_qubit() {
        return Err(Error::UnknownLabel(QUBIT.to_string()));
    }
    let qubit = partial_trace(state, &[QUBIT])?.density_matrix();
    let excited = qubit[(1, 1)].re;
    if excited > RESET_THRESHOLD {
        return Err(Error::QubitNotReset { excited });
    }
    let reduced = partial_trace(state, &[mode, QUBIT])?;
    let d = reduced.layout().dim_of(mode)?;
    let padded = d + (alpha.norm_sqr() + 6.0 * alpha.norm() + 20.0).ceil() as usize;
    let labels: Vec<(String, usize)> = reduced
        .layout()
        .labels()
        .iter()
        .map(|l| (l.clone(), if l == mode { padded } else { 2 }))
        .collect();
    let layout = SubsystemLayout::new(labels)?;
    let rho = pad_density(&reduced.density_matrix(), reduced.layout(), &layout)?;

    let cd = |b: C64| -> Result<CMatrix> {
        let plus = embed_matrix(&displacement_matrix(b / 2.0, padded)?, &layout, mode)?;
        let minus = embed_matrix(&displacement_matrix(-b / 2.0, padded)?, &layout, mode)?;
        let pe = embed_matrix(&CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]), &layout, QUBIT)?;
        let pg = embed_matrix(&CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]), &layout, QUBIT)?;
        Ok(&plus * &pe + &minus * &pg)
    };
    let u = cd(alpha / 2.0)?
        * embed_matrix(&qubit_rotation(Axis::X, std::f64::consts::PI), &layout, QUBIT)?
        * cd(-alpha / 2.0)?
        * embed_matrix(&qubit_rotation(Axis::Y, std::f64::consts::FRAC_PI_2), &layout, QUBIT)?;
    let out = &u * rho * u.adjoint();
    let sx = embed_matrix(pauli(Pauli::X).data(), &layout, QUBIT)?;
    let sy = embed_matrix(pauli(Pauli::Y).data(), &layout, QUBIT)?;
    let x = (&out * sx).trace();
    let y = (&out * sy).trace();
    Ok(C64::new(x.re, y.re))
}

/// Embeds a density matrix into a layout with the same labels and larger dims.
fn pad_density(rho: &CMatrix, from: &SubsystemLayout, to: &SubsystemLayout) -> Result<CMatrix> {
    let map: Vec<usize> = (0..from.total_dim()).map(|i| to.basis_index(&levels_of(from, i))).collect::<Result<_>>()?;
    let mut out = CMatrix::zeros(to.total_dim(), to.total_dim());
    for (i, &pi) in map.iter().enumerate() {
        for (j, &pj) in map.iter().enumerate() {
            out[(pi, pj)] = rho[(i, j)];
        }
    }
    Ok(out)
}

fn levels_of(layout: &SubsystemLayout, mut index: usize) -> Vec<usize> {
    let mut levels = vec![0; layout.len()];
    for (k, &d) in layout.dims().iter().enumerate().rev() {
        levels[k] = index % d;
        index /= d;
    }
    levels
}

/// Probability below which post-selection is refused.
pub const POSTSELECT_FLOOR: f64 = 1e-12;

/// Projects the qubit onto `|g>` and drops it; returns the normalized mode
/// state and the success probability.
pub fn postselect_ground(state: &QuantumState) -> Result<(QuantumState, f64)> {
    let layout = state.layout();
    if !layout.has_qubit() {
        return Err(Error::UnknownLabel(QUBIT.to_string()));
    }
    let modes: Vec<&str> = layout.mode_labels().collect();
    if modes.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let kept = layout.restrict(&modes)?;
    let q = layout.index_of(QUBIT)?;
    let map: Vec<usize> = (0..layout.total_dim()).filter(|&i| levels_of(layout, i)[q] == 0).collect();
    let (body, probability) = match state.body() {
        StateBody::Pure(v) => {
            let proj = CVector::from_iterator(map.len(), map.iter().map(|&i| v[i]));
            let p = proj.norm_squared();
            (StateBody::Pure(proj), p)
        }
        StateBody::Density(rho) => {
            let proj = CMatrix::from_fn(map.len(), map.len(), |i, j| rho[(map[i], map[j])]);
            let p = proj.trace().re;
            (StateBody::Density(proj), p)
        }
    };
    if !(probability >= POSTSELECT_FLOOR) {
        return Err(Error::DegeneratePostselection { probability });
    }
    let out = match body {
        StateBody::Pure(v) => QuantumState::pure_unchecked(kept, state.frame(), v / C64::from(probability.sqrt()))?,
        StateBody::Density(r) => QuantumState::density_unchecked(kept, state.frame(), r / C64::from(probability))?,
    };
    Ok((out, probability))
}

/// `<psi|rho|psi>` for a pure target.
pub fn fidelity(state: &QuantumState, target: &QuantumState) -> Result<f64> {
    if state.layout() != target.layout() {
        return Err(Error::LayoutMismatch(format!("state {} vs target {}", state.layout(), target.layout())));
    }
    let psi = target.vector().ok_or_else(|| Error::InvalidState("fidelity target must be pure".into()))?;
    let value = match state.body() {
        StateBody::Pure(v) => psi.dotc(v).norm_sqr(),
        StateBody::Density(rho) => psi.dotc(&(rho * psi)).re,
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{Frame, QuantumState};
    use crate::oracle::{char_fock_closed_form, laguerre};
    use proptest::prelude::*;

    fn fock(layout: &SubsystemLayout, levels: &[usize]) -> QuantumState {
        QuantumState::basis(layout.clone(), Frame::JcFrame, levels).unwrap()
    }

    #[test]
    fn fock_characteristic_function_matches_closed_form() {
        let layout = SubsystemLayout::single("mem1", 8).unwrap();
        let grid = CharGrid::square(2.5, 11).unwrap();
        for n in 0..=5 {
            let map = char_function(&fock(&layout, &[n]), "mem1", &grid).unwrap();
            for (alpha, c) in grid.points().zip(&map.values) {
                assert!((c - char_fock_closed_form(n, alpha)).norm() < 1e-10, "n={n} alpha={alpha}");
            }
        }
        assert!((laguerre(1, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn vacuum_is_gaussian() {
        let layout = SubsystemLayout::single("mem1", 3).unwrap();
        let map = char_function(&fock(&layout, &[0]), "mem1", &CharGrid::square(2.0, 5).unwrap()).unwrap();
        for (alpha, c) in map.grid.points().zip(&map.values) {
            assert!((c.re - (-alpha.norm_sqr() / 2.0).exp()).abs() < 1e-12);
            assert!(c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn emulated_measurement_matches() {
        let layout = SubsystemLayout::modes_with_qubit(&["mem1"], 5).unwrap();
        let mut v = CVector::zeros(10);
        v[layout.basis_index(&[1, 0]).unwrap()] = C64::new(0.6, 0.0);
        v[layout.basis_index(&[2, 0]).unwrap()] = C64::new(0.0, 0.8);
        let state = QuantumState::pure(layout.clone(), Frame::JcFrame, v).unwrap();
        for alpha in [C64::new(0.3, -0.7), C64::new(-1.2, 0.4), C64::new(2.0, 1.0)] {
            let direct = char_function(&state, "mem1", &CharGrid::new(vec![alpha.re], vec![alpha.im]).unwrap())
                .unwrap()
                .values[0];
            let emulated = emulate_char_measurement(&state, "mem1", alpha).unwrap();
            assert!((direct - emulated).norm() < 1e-8, "{direct} vs {emulated}");
        }
        let excited = fock(&layout, &[0, 1]);
        assert!(matches!(
            emulate_char_measurement(&excited, "mem1", C64::new(0.5, 0.0)),
            Err(Error::QubitNotReset { .. })
        ));
    }

    #[test]
    fn postselection() {
        let layout = SubsystemLayout::modes_with_qubit(&["mem1"], 3).unwrap();
        let mut v = CVector::zeros(6);
        v[layout.basis_index(&[1, 0]).unwrap()] = C64::new(0.6, 0.0);
        v[layout.basis_index(&[0, 1]).unwrap()] = C64::new(0.8, 0.0);
        let state = QuantumState::pure(layout.clone(), Frame::JcFrame, v).unwrap();
        let (post, p) = postselect_ground(&state).unwrap();
        assert!((p - 0.36).abs() < 1e-14);
        let target = fock(post.layout(), &[1]);
        assert!((fidelity(&post, &target).unwrap() - 1.0).abs() < 1e-14);
        let (post_rho, p_rho) = postselect_ground(&state.to_density()).unwrap();
        assert!((p_rho - p).abs() < 1e-14);
        assert!((fidelity(&post_rho, &target).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(postselect_ground(&fock(&layout, &[0, 1])), Err(Error::DegeneratePostselection { .. })));
    }

    #[test]
    fn joint_function_of_product_state_factorizes() {
        let layout = SubsystemLayout::new([("mem1", 3), ("mem2", 3)]).unwrap();
        let state = fock(&layout, &[1, 0]);
        let grid = CharGrid::square(1.5, 5).unwrap();
        for slice in joint_char_function(&state, &grid).unwrap() {
            for (xy, c) in grid.points().zip(&slice.values) {
                let (a, b) = slice.slice.point(xy.re, xy.im);
                let expected = char_fock_closed_form(1, a) * char_fock_closed_form(0, b);
                assert!((c - expected).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn csv_columns() {
        let layout = SubsystemLayout::single("mem1", 2).unwrap();
        let map = char_function(&fock(&layout, &[0]), "mem1", &CharGrid::square(1.0, 3).unwrap()).unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("re_alpha,im_alpha,re_C,im_C\n"));
        assert_eq!(text.lines().count(), 10);
        assert!(text.contains("\n0.000000000000,0.000000000000,1.000000000000,0.000000000000\n"));
    }

    fn random_density(seed: &[f64], dim: usize) -> QuantumState {
        let m = CMatrix::from_fn(dim, dim, |i, j| C64::new(seed[(i * dim + j) % seed.len()], seed[(i + 3 * j) % seed.len()]));
        let rho = &m * m.adjoint();
        let tr = rho.trace();
        let layout = SubsystemLayout::single("mem1", dim).unwrap();
        QuantumState::density(layout, Frame::JcFrame, rho / tr).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn conjugate_symmetry_and_bound(
            seed in proptest::collection::vec(-1.0f64..1.0, 8..16),
            re in -2.5f64..2.5,
            im in -2.5f64..2.5,
        ) {
            let state = random_density(&seed, 5);
            let grid = CharGrid::new(vec![re, -re], vec![im, -im]).unwrap();
            let map = char_function(&state, "mem1", &grid).unwrap();
            // (re, im) at index (0, 0) and (-re, -im) at index (1, 1).
            prop_assert!((map.at(0, 0) - map.at(1, 1).conj()).norm() < 1e-10);
            for c in &map.values {
                prop_assert!(c.norm() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn fidelity_is_linear(w in 0.0f64..1.0, seed in proptest::collection::vec(-1.0f64..1.0, 8..12)) {
            let a = random_density(&seed, 4);
            let b = fock(a.layout(), &[2]);
            let mix = a.density_matrix() * C64::from(w) + b.density_matrix() * C64::from(1.0 - w);
            let mixed = QuantumState::density(a.layout().clone(), Frame::JcFrame, mix).unwrap();
            let target = fock(a.layout(), &[1]);
            let lhs = fidelity(&mixed, &target).unwrap();
            let rhs = w * fidelity(&a, &target).unwrap() + (1.0 - w) * fidelity(&b, &target).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}

//! Coordinate-list operators for the integrator right-hand sides, where the
//! Hamiltonian and collapse terms have only a few entries per row.

use crate::hilbert::{CMatrix, C64};

#[derive(Clone, Debug)]
pub(crate) struct SparseOp {
    n: usize,
    /// `(row, col, value)`, grouped by column.
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub(crate) fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for k in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, k)];
                if v.re != 0.0 || v.im != 0.0 {
                    entries.push((i, k, v));
                }
            }
        }
        Self { n: m.nrows(), entries }
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// `out += a * self * b`.
    pub(crate) fn mul_add(&self, a: C64, b: &CMatrix, out: &mut CMatrix) {
        let n = self.n;
        let cols = b.ncols();
        let bs = b.as_slice();
        let os = out.as_mut_slice();
        for &(i, k, v) in &self.entries {
            let av = a * v;
            for j in 0..cols {
                os[j * n + i] += av * bs[j * n + k];
            }
        }
    }

    /// `out += b * self^dag`.
    pub(crate) fn mul_adjoint_right_add(&self, b: &CMatrix, out: &mut CMatrix) {
        let rows = b.nrows();
        let bs = b.as_slice();
        let os = out.as_mut_slice();
        for &(j, k, v) in &self.entries {
            let cv = v.conj();
            let (src, dst) = (&bs[k * rows..(k + 1) * rows], &mut os[j * rows..(j + 1) * rows]);
            for (d, s) in dst.iter_mut().zip(src) {
                *d += cv * s;
            }
        }
    }
}

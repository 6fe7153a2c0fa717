//! Dormand-Prince 5(4) with PI step-size control over dense complex matrices.
//!
//! Column vectors are integrated as `n x 1` matrices so pure states and density
//! matrices share one code path.

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_max: f64::INFINITY, max_steps: 5_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrator state kept across calls so consecutive segments reuse the step size.
#[derive(Clone, Debug)]
pub struct Dopri5 {
    opts: OdeOptions,
    h_next: Option<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy(y: &mut CMatrix, a: f64, x: &CMatrix) {
    add_scaled(y, C64::from(a), x);
}

/// `y += a x`.
pub(crate) fn add_scaled(y: &mut CMatrix, a: C64, x: &CMatrix) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

impl Dopri5 {
    pub fn new(opts: OdeOptions) -> Self {
        Self { opts, h_next: None, accepted: 0, rejected: 0 }
    }

    fn error_norm(&self, err: &CMatrix, y0: &CMatrix, y1: &CMatrix) -> f64 {
        let mut acc = 0.0;
        for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
            let sc = self.opts.atol + self.opts.rtol * a.norm().max(b.norm());
            let r = e.norm() / sc;
            acc += r * r;
        }
        (acc / err.len() as f64).sqrt()
    }

    fn initial_step<F>(&self, f: &mut F, t: f64, y: &CMatrix, f0: &CMatrix, span: f64) -> f64
    where
        F: FnMut(f64, &CMatrix, &mut CMatrix),
    {
        let zero = CMatrix::zeros(y.nrows(), y.ncols());
        let d0 = self.error_norm(y, y, &zero);
        let d1 = self.error_norm(f0, y, &zero);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span).min(self.opts.h_max);
        let mut y1 = y.clone();
        axpy(&mut y1, h0, f0);
        let mut f1 = zero.clone();
        f(t + h0, &y1, &mut f1);
        let d2 = self.error_norm(&(&f1 - f0), y, &zero) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1).min(span).min(self.opts.h_max)
    }

    /// Integrates `dy/dt = f(t, y)` from `t0` through every time in `stops`
    /// (strictly increasing, all greater than `t0`), calling `at_stop` when each
    /// is reached exactly.
    pub fn integrate<F, S>(&mut self, f: &mut F, t0: f64, y: &mut CMatrix, stops: &[f64], mut at_stop: S) -> Result<()>
    where
        F: FnMut(f64, &CMatrix, &mut CMatrix),
        S: FnMut(usize, f64, &CMatrix) -> Result<()>,
    {
        let (nr, nc) = (y.nrows(), y.ncols());
        let mut k1 = CMatrix::zeros(nr, nc);
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut k5 = k1.clone();
        let mut k6 = k1.clone();
        let mut k7 = k1.clone();
        let mut ytmp = k1.clone();
        let mut ynew = k1.clone();
        let mut err = k1.clone();

        let mut t = t0;
        f(t, y, &mut k1);
        let t_end = stops.last().copied().unwrap_or(t0);
        let mut h = match self.h_next {
            Some(h) => h.min(self.opts.h_max),
            None => self.initial_step(f, t, y, &k1, t_end - t0),
        };
        let mut fac_old: f64 = 1e-4;
        let mut steps = 0usize;

        for (index, &stop) in stops.iter().enumerate() {
            if stop <= t {
                return Err(Error::InvalidSchedule(format!("stop time {stop} not after {t}")));
            }
            while t < stop {
                steps += 1;
                if steps > self.opts.max_steps {
                    return Err(Error::Stiffness { t, h, detail: format!("exceeded {} steps", self.opts.max_steps) });
                }
                let remaining = stop - t;
                let mut step = h.min(self.opts.h_max);
                let last = step >= remaining * (1.0 - 1e-12) || remaining - step < 0.01 * step;
                if last {
                    step = remaining;
                }
                if step < 1e-13 * t.abs().max(1.0) {
                    return Err(Error::Stiffness { t, h: step, detail: "step size underflow".into() });
                }

                ytmp.copy_from(y);
                axpy(&mut ytmp, step * A21, &k1);
                f(t + C2 * step, &ytmp, &mut k2);

                ytmp.copy_from(y);
                axpy(&mut ytmp, step * A31, &k1);
                axpy(&mut ytmp, step * A32, &k2);
                f(t + C3 * step, &ytmp, &mut k3);

                ytmp.copy_from(y);
                axpy(&mut ytmp, step * A41, &k1);
                axpy(&mut ytmp, step * A42, &k2);
                axpy(&mut ytmp, step * A43, &k3);
                f(t + C4 * step, &ytmp, &mut k4);

                ytmp.copy_from(y);
                axpy(&mut ytmp, step * A51, &k1);
                axpy(&mut ytmp, step * A52, &k2);
                axpy(&mut ytmp, step * A53, &k3);
                axpy(&mut ytmp, step * A54, &k4);
                f(t + C5 * step, &ytmp, &mut k5);

                ytmp.copy_from(y);
                axpy(&mut ytmp, step * A61, &k1);
                axpy(&mut ytmp, step * A62, &k2);
                axpy(&mut ytmp, step * A63, &k3);
                axpy(&mut ytmp, step * A64, &k4);
                axpy(&mut ytmp, step * A65, &k5);
                f(t + step, &ytmp, &mut k6);

                ynew.copy_from(y);
                axpy(&mut ynew, step * A71, &k1);
                axpy(&mut ynew, step * A73, &k3);
                axpy(&mut ynew, step * A74, &k4);
                axpy(&mut ynew, step * A75, &k5);
                axpy(&mut ynew, step * A76, &k6);
                f(t + step, &ynew, &mut k7);

                err.fill(C64::from(0.0));
                axpy(&mut err, step * E1, &k1);
                axpy(&mut err, step * E3, &k3);
                axpy(&mut err, step * E4, &k4);
                axpy(&mut err, step * E5, &k5);
                axpy(&mut err, step * E6, &k6);
                axpy(&mut err, step * E7, &k7);
                let e = self.error_norm(&err, y, &ynew);
                if !e.is_finite() {
                    return Err(Error::Stiffness { t, h: step, detail: "non-finite error estimate".into() });
                }

                let fac11 = e.powf(0.2 - 0.75 * BETA);
                if e <= 1.0 {
                    let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                    fac_old = e.max(1e-4);
                    self.accepted += 1;
                    std::mem::swap(y, &mut ynew);
                    std::mem::swap(&mut k1, &mut k7);
                    t = if last { stop } else { t + step };
                    let proposal = step / fac;
                    // Do not let a short final step shrink the next one.
                    h = if last { h.max(proposal) } else { proposal };
                } else {
                    self.rejected += 1;
                    h = step / (fac11 / SAFETY).min(1.0 / FAC_MIN);
                }
            }
            at_stop(index, stop, y)?;
        }
        self.h_next = Some(h);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::I;

    #[test]
    fn harmonic_phase_matches_closed_form() {
        let w = 3.7;
        let mut y = CMatrix::from_element(1, 1, C64::from(1.0));
        let mut f = |_t: f64, y: &CMatrix, dy: &mut CMatrix| {
            dy[(0, 0)] = -I * w * y[(0, 0)];
        };
        let stops = [0.5, 1.0, 2.0];
        let mut seen = Vec::new();
        let mut ode = Dopri5::new(OdeOptions::default());
        ode.integrate(&mut f, 0.0, &mut y, &stops, |_, t, y| {
            seen.push((t, y[(0, 0)]));
            Ok(())
        })
        .unwrap();
        for (t, v) in seen {
            let exact = (-I * w * t).exp();
            assert!((v - exact).norm() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn decay_with_time_dependent_rate() {
        // dy/dt = -2t y  =>  y = exp(-t^2)
        let mut y = CMatrix::from_element(1, 1, C64::from(1.0));
        let mut f = |t: f64, y: &CMatrix, dy: &mut CMatrix| {
            dy[(0, 0)] = y[(0, 0)] * (-2.0 * t);
        };
        let mut ode = Dopri5::new(OdeOptions { h_max: 0.1, ..OdeOptions::default() });
        ode.integrate(&mut f, 0.0, &mut y, &[1.5], |_, _, _| Ok(())).unwrap();
        assert!((y[(0, 0)].re - (-2.25f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn stiffness_is_reported() {
        let mut y = CMatrix::from_element(1, 1, C64::from(1.0));
        let mut f = |_t: f64, y: &CMatrix, dy: &mut CMatrix| {
            dy[(0, 0)] = y[(0, 0)] * y[(0, 0)] * 1e3;
        };
        let mut ode = Dopri5::new(OdeOptions::default());
        let r = ode.integrate(&mut f, 0.0, &mut y, &[1.0], |_, _, _| Ok(()));
        assert!(matches!(r, Err(Error::Stiffness { .. })));
    }
}

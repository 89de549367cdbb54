//! Real-valued view of the fusion center's observation.
//!
//! Both the signal `x` and the power vector `eta` are real, so a complex
//! observation `y = Phi H diag(eta) x + w` is equivalent to the real system
//! obtained by stacking real parts over imaginary parts. In real mode only
//! the real rows are kept.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::sim::FadingMode;

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Stacked `Phi H`, one column per sensor.
    gain: DMatrix<f64>,
    y: DVector<f64>,
}

impl Measurement {
    pub fn new(y: &[Complex64], phi: &DMatrix<f64>, h: &[Complex64], mode: FadingMode) -> Result<Self> {
        let (m, n) = phi.shape();
        if y.len() != m || h.len() != n {
            return Err(invalid(format!(
                "measurement shapes disagree: y {}, phi {m}x{n}, h {}",
                y.len(),
                h.len()
            )));
        }
        let rows = match mode {
            FadingMode::Real => m,
            FadingMode::Complex => 2 * m,
        };
        let mut gain = DMatrix::zeros(rows, n);
        let mut yv = DVector::zeros(rows);
        for i in 0..m {
            yv[i] = y[i].re;
            for j in 0..n {
                gain[(i, j)] = phi[(i, j)] * h[j].re;
            }
            if mode == FadingMode::Complex {
                yv[m + i] = y[i].im;
                for j in 0..n {
                    gain[(m + i, j)] = phi[(i, j)] * h[j].im;
                }
            }
        }
        Ok(Self { gain, y: yv })
    }

    /// Real channels and observations.
    pub fn from_real(y: DVector<f64>, phi: &DMatrix<f64>, h: &[f64]) -> Result<Self> {
        let (m, n) = phi.shape();
        if y.len() != m || h.len() != n {
            return Err(invalid("measurement shapes disagree"));
        }
        let gain = DMatrix::from_fn(m, n, |i, j| phi[(i, j)] * h[j]);
        Ok(Self { gain, y })
    }

    /// Directly from a stacked gain matrix.
    pub fn from_parts(gain: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if gain.nrows() != y.len() {
            return Err(invalid("gain rows must match observation length"));
        }
        Ok(Self { gain, y })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.gain.ncols()
    }

    /// `Phi H diag(v)`; with `v = eta` this is the signal operator, with
    /// `v = x` it is the power operator `Q`.
    pub fn scaled(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.gain.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= v[j];
        }
        out
    }

    /// Same measurement with observation and gain divided by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        Self {
            gain: &self.gain / s,
            y: &self.y / s,
        }
    }
}

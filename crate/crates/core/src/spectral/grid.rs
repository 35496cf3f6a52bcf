use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Periodic cube `[-L/2, L/2)^3` sampled at `N^3` points, `x_i = (i - N/2) dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub box_length: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(box_length: f64, points: usize) -> Result<Self> {
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::Grid(format!("box length must be positive, got {box_length}")));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::Grid(format!("point count must be even and >= 8, got {points}")));
        }
        Ok(Self { box_length, points })
    }

    pub fn dx(&self) -> f64 {
        self.box_length / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    pub fn len(&self) -> usize {
        self.points * self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - (self.points / 2) as f64) * self.dx()
    }

    /// Signed integer frequency of FFT index `i`; the Nyquist index maps to `-N/2`.
    pub fn frequency(&self, i: usize) -> i64 {
        let n = self.points as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI * self.frequency(i) as f64 / self.box_length
    }

    /// Wavenumber used by first-order derivatives: zero on the Nyquist index so
    /// that derivatives of real fields stay real.
    pub fn odd_wavenumber(&self, i: usize) -> f64 {
        if i == self.points / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.points + iy) * self.points + iz
    }

    pub fn split(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.points;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let (a, b, c) = self.split(idx);
        [self.coordinate(a), self.coordinate(b), self.coordinate(c)]
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let (a, b, c) = self.split(idx);
        [self.wavenumber(a), self.wavenumber(b), self.wavenumber(c)]
    }

    pub fn odd_wavevector(&self, idx: usize) -> [f64; 3] {
        let (a, b, c) = self.split(idx);
        [self.odd_wavenumber(a), self.odd_wavenumber(b), self.odd_wavenumber(c)]
    }

    pub fn k_squared(&self, idx: usize) -> f64 {
        let k = self.wavevector(idx);
        k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
    }

    pub fn same_as(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(L={}, N={}) vs (L={}, N={})",
                self.box_length, self.points, other.box_length, other.points
            )))
        }
    }
}

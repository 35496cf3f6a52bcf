use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::sum::{sum_complex, sum_real};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Electron,
    Phonon,
    Auxiliary,
}

#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: GridSpec,
    role: Role,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: GridSpec, role: Role) -> Self {
        Self {
            grid,
            role,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, role: Role, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count does not match grid");
        Self { grid, role, values }
    }

    pub fn from_real(grid: GridSpec, role: Role, values: &[f64]) -> Self {
        Self::from_values(grid, role, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Samples `f(x, y, z)` at the grid points.
    pub fn from_fn(grid: GridSpec, role: Role, f: impl Fn([f64; 3]) -> Complex64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(grid.position(i))).collect();
        Self { grid, role, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn real_part(&self) -> Self {
        self.map(|v| Complex64::new(v.re, 0.0))
    }

    pub fn imag_part(&self) -> Self {
        self.map(|v| Complex64::new(v.im, 0.0))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64 + Sync) -> Self {
        Self {
            grid: self.grid,
            role: self.role,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64 + Sync) -> Result<Self> {
        self.grid.same_as(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            role: self.role,
            values: self.values.par_iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        self.map(|v| v * s)
    }

    pub fn scale_mut(&mut self, s: f64) {
        self.values.par_iter_mut().for_each(|v| *v *= s);
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: Complex64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn axpy_mut(&mut self, s: Complex64, other: &Self) {
        assert_eq!(self.grid, other.grid);
        self.values.par_iter_mut().zip(&other.values).for_each(|(a, &b)| *a += s * b);
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `∫ conj(self) other`
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.grid.same_as(&other.grid)?;
        let (a, b) = (&self.values, &other.values);
        Ok(sum_complex(a.len(), |i| a[i].conj() * b[i]) * self.grid.cell_volume())
    }

    /// `Re ∫ conj(self) other`, the real inner product on complex fields.
    pub fn real_inner(&self, other: &Self) -> Result<f64> {
        self.grid.same_as(&other.grid)?;
        let (a, b) = (&self.values, &other.values);
        Ok(sum_real(a.len(), |i| a[i].re * b[i].re + a[i].im * b[i].im) * self.grid.cell_volume())
    }

    pub fn norm_sq(&self) -> f64 {
        let a = &self.values;
        sum_real(a.len(), |i| a[i].norm_sqr()) * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scaled(Complex64::new(1.0 / n, 0.0))
    }

    pub fn lp_norm_pow(&self, p: i32) -> f64 {
        let a = &self.values;
        sum_real(a.len(), |i| a[i].norm().powi(p)) * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_product_is_conjugate_linear_in_first_slot() {
        let g = GridSpec::new(4.0, 8).unwrap();
        let a = ComplexField::from_fn(g, Role::Electron, |x| Complex64::new(x[0], x[1]));
        let b = ComplexField::from_fn(g, Role::Electron, |x| Complex64::new(1.0, x[2]));
        let i = Complex64::i();
        let lhs = a.scaled(i).inner(&b).unwrap();
        let rhs = -i * a.inner(&b).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        assert!((a.inner(&a).unwrap().re - a.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = ComplexField::zeros(GridSpec::new(4.0, 8).unwrap(), Role::Auxiliary);
        let b = ComplexField::zeros(GridSpec::new(4.0, 10).unwrap(), Role::Auxiliary);
        assert!(a.inner(&b).is_err());
    }
}

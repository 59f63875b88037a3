//! Small dense complex helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// `a^H M b`.
pub fn quad_form(a: &CVector, m: &CMatrix, b: &CVector) -> Complex64 {
    a.dotc(&(m * b))
}

/// Real part of `w^H M w` for Hermitian `M`.
pub fn hermitian_power(w: &CVector, m: &CMatrix) -> f64 {
    quad_form(w, m, w).re
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Unit selector `e_c` of length `m`.
pub fn selector(m: usize, c: usize) -> CVector {
    let mut v = CVector::zeros(m);
    v[c] = Complex64::new(1.0, 0.0);
    v
}

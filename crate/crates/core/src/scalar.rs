//! Real scalar abstraction shared by the state-vector core.
//!
//! Amplitudes are `Complex<T>` for any `T: Real`. Tolerances scale with the
//! precision of `T`, so the same algebraic checks run at f32 and f64.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Tolerance for exact-construction identities (unitarity, orthonormality).
    fn algebraic_tol() -> Self;
    /// Tolerance for norms after a handful of gate applications.
    fn norm_tol() -> Self;
    /// Tolerance for span membership and support detection.
    fn span_tol() -> Self;

    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts to any Real")
    }

    fn from_usize_lossy(x: usize) -> Self {
        <Self as FromPrimitive>::from_usize(x).expect("usize converts to any Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f64 {
    fn algebraic_tol() -> Self {
        1e-12
    }
    fn norm_tol() -> Self {
        1e-10
    }
    fn span_tol() -> Self {
        1e-8
    }
}

impl Real for f32 {
    fn algebraic_tol() -> Self {
        1e-5
    }
    fn norm_tol() -> Self {
        1e-5
    }
    fn span_tol() -> Self {
        1e-4
    }
}

/// `exp(2πi·k/d)`, exact at quarter turns so that qubit matrices stay real.
pub fn root_of_unity<T: Real>(k: usize, d: usize) -> Complex<T> {
    let k = k % d;
    let (one, zero) = (T::one(), T::zero());
    if (4 * k).is_multiple_of(d) {
        return match 4 * k / d {
            0 => Complex::new(one, zero),
            1 => Complex::new(zero, one),
            2 => Complex::new(-one, zero),
            _ => Complex::new(zero, -one),
        };
    }
    let angle = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(d);
    Complex::from_polar(one, angle)
}

//! One-particle unitaries: the qubit Pauli set and the qudit shift-phase family.

use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::{root_of_unity, Real};

/// Row-major `d × d` complex matrix.
pub type Matrix<T> = Vec<Vec<Complex<T>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SingleParticleGate {
    IdentityI,
    PauliX,
    /// `i·σ_y`, rows `(0, 1)` and `(−1, 0)`.
    PauliIY,
    PauliZ,
    /// `U_mn = Σ_j ω^{jm} |j+n mod d⟩⟨j|` with `ω = e^{2πi/d}`.
    Generalized { m: usize, n: usize },
}

impl SingleParticleGate {
    /// Shift by `n` levels with no phase (`U_0n`).
    pub fn shift(n: usize) -> Self {
        Self::Generalized { m: 0, n }
    }

    /// Phase clock `U_m0`.
    pub fn clock(m: usize) -> Self {
        Self::Generalized { m, n: 0 }
    }

    pub fn is_pauli(&self) -> bool {
        !matches!(self, Self::Generalized { .. })
    }

    pub fn matrix<T: Real>(&self, dim: usize) -> Result<Matrix<T>> {
        if dim < 2 {
            return Err(domain(format!("particle dimension must be at least 2, got {dim}")));
        }
        let zero = Complex::new(T::zero(), T::zero());
        let one = Complex::new(T::one(), T::zero());
        if self.is_pauli() && dim != 2 {
            return Err(domain(format!("Pauli gate {self} requires d = 2, got d = {dim}")));
        }
        let m = match *self {
            Self::IdentityI => vec![vec![one, zero], vec![zero, one]],
            Self::PauliX => vec![vec![zero, one], vec![one, zero]],
            Self::PauliIY => vec![vec![zero, one], vec![-one, zero]],
            Self::PauliZ => vec![vec![one, zero], vec![zero, -one]],
            Self::Generalized { m, n } => {
                if m >= dim || n >= dim {
                    return Err(domain(format!("U({m},{n}) needs m, n < d = {dim}")));
                }
                let mut mat = vec![vec![zero; dim]; dim];
                for (j, col) in (0..dim).map(|j| (j, root_of_unity::<T>(j * m, dim))) {
                    mat[(j + n) % dim][j] = col;
                }
                mat
            }
        };
        Ok(m)
    }
}

impl fmt::Display for SingleParticleGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::IdentityI => write!(f, "I"),
            Self::PauliX => write!(f, "X"),
            Self::PauliIY => write!(f, "iY"),
            Self::PauliZ => write!(f, "Z"),
            Self::Generalized { m, n } => write!(f, "U{m}{n}"),
        }
    }
}

/// Largest entry of `|U†U − I|`.
pub fn unitarity_defect<T: Real>(u: &Matrix<T>) -> T {
    let d = u.len();
    let mut worst = T::zero();
    for r in 0..d {
        for c in 0..d {
            let mut acc = Complex::new(T::zero(), T::zero());
            for row in u {
                acc = acc + row[r].conj() * row[c];
            }
            if r == c {
                acc = acc - Complex::new(T::one(), T::zero());
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

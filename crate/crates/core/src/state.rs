//! Dense state vectors for registers of equal-dimension qudits.
//!
//! Basis index `i` encodes the particle digits in base `d` with particle 0 as
//! the most significant digit: for `d = 2, p = 3`, `|abc⟩` sits at `4a + 2b + c`.
//! States are immutable; every operation returns a new vector.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::GhzFamily;
use crate::error::{domain, Error, Result};
use crate::gate::{Matrix, SingleParticleGate};
use crate::scalar::{root_of_unity, Real};

/// Default cap on `d^p`.
pub const DEFAULT_MAX_AMPLITUDES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    dim: usize,
    particles: usize,
    amps: Vec<Complex<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome<T, L = usize> {
    pub label: L,
    /// Born probability of the sampled label.
    pub probability: T,
    pub post_state: StateVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XSign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];
}

pub(crate) fn register_len(dim: usize, particles: usize, limit: usize) -> Result<usize> {
    if dim < 2 {
        return Err(domain(format!("particle dimension must be at least 2, got {dim}")));
    }
    if particles == 0 {
        return Err(domain("register needs at least one particle"));
    }
    let too_large = Error::RegisterTooLarge {
        dim,
        particles,
        limit,
    };
    let exp = u32::try_from(particles).map_err(|_| too_large.clone())?;
    match dim.checked_pow(exp) {
        Some(n) if n <= limit => Ok(n),
        _ => Err(too_large),
    }
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Orthonormal eigenbasis of the shift operator: `|k̃⟩ = d^{-1/2} Σ_j ω^{jk} |j⟩`.
/// For `d = 2` this is `|+⟩, |−⟩`.
pub fn fourier_basis<T: Real>(dim: usize) -> Vec<Vec<Complex<T>>> {
    let norm = T::one() / T::from_usize_lossy(dim).sqrt();
    (0..dim)
        .map(|k| (0..dim).map(|j| root_of_unity::<T>(j * k, dim) * norm).collect())
        .collect()
}

/// Bell basis on an ordered pair, in [`BellState::ALL`] order.
pub fn bell_basis<T: Real>() -> Vec<Vec<Complex<T>>> {
    let h = T::FRAC_1_SQRT_2();
    let z = T::zero();
    let c = |x: T| Complex::new(x, z);
    vec![
        vec![c(h), c(z), c(z), c(h)],
        vec![c(h), c(z), c(z), c(-h)],
        vec![c(z), c(h), c(h), c(z)],
        vec![c(z), c(h), c(-h), c(z)],
    ]
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], cutoff: f64, rng: &mut R) -> usize {
    let total: f64 = probs.iter().filter(|&&p| p > cutoff).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= cutoff {
            continue;
        }
        last = k;
        if u < p {
            return k;
        }
        u -= p;
    }
    last
}

/// Measured particles, remaining particles, outcome probabilities and the
/// conditional coefficients over the remaining particles.
type Projection<T> = (Vec<usize>, Vec<usize>, Vec<T>, Vec<Vec<Complex<T>>>);

impl<T: Real> StateVector<T> {
    pub fn from_amplitudes(dim: usize, particles: usize, amps: Vec<Complex<T>>) -> Result<Self> {
        let n = register_len(dim, particles, usize::MAX)?;
        if amps.len() != n {
            return Err(domain(format!(
                "expected {n} amplitudes for {particles} particles of dimension {dim}, got {}",
                amps.len()
            )));
        }
        let s = Self {
            dim,
            particles,
            amps,
        };
        let norm = s.norm_sqr();
        if (norm - T::one()).abs() > T::norm_tol() {
            return Err(Error::NotNormalized(norm.as_f64()));
        }
        Ok(s)
    }

    /// Computational basis state `|digits⟩`.
    pub fn basis_state(dim: usize, digits: &[usize]) -> Result<Self> {
        let n = register_len(dim, digits.len(), DEFAULT_MAX_AMPLITUDES)?;
        if let Some(&bad) = digits.iter().find(|&&x| x >= dim) {
            return Err(domain(format!("digit {bad} out of range for d = {dim}")));
        }
        let mut amps = vec![czero(); n];
        let idx = digits.iter().fold(0, |acc, &x| acc * dim + x);
        amps[idx] = Complex::new(T::one(), T::zero());
        Ok(Self {
            dim,
            particles: digits.len(),
            amps,
        })
    }

    /// `d^{-1/2} Σ_n |n n … n⟩` under the default register limit.
    pub fn ghz(particles: usize, dim: usize) -> Result<Self> {
        Self::ghz_with_limit(particles, dim, DEFAULT_MAX_AMPLITUDES)
    }

    pub fn ghz_with_limit(particles: usize, dim: usize, limit: usize) -> Result<Self> {
        if particles < 2 {
            return Err(domain(format!("GHZ state needs at least 2 particles, got {particles}")));
        }
        let n = register_len(dim, particles, limit)?;
        let mut amps = vec![czero(); n];
        let weight = Complex::new(T::one() / T::from_usize_lossy(dim).sqrt(), T::zero());
        // |n…n⟩ sits at n·(1 + d + … + d^{p−1}).
        let step = (n - 1) / (dim - 1);
        for level in 0..dim {
            amps[level * step] = weight;
        }
        Ok(Self {
            dim,
            particles,
            amps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    fn stride(&self, particle: usize) -> usize {
        self.dim.pow((self.particles - 1 - particle) as u32)
    }

    fn check_particle(&self, particle: usize) -> Result<()> {
        if particle >= self.particles {
            return Err(Error::ParticleIndex {
                index: particle,
                particles: self.particles,
            });
        }
        Ok(())
    }

    pub fn digit(&self, index: usize, particle: usize) -> usize {
        (index / self.stride(particle)) % self.dim
    }

    pub fn digits(&self, index: usize) -> Vec<usize> {
        (0..self.particles).map(|j| self.digit(index, j)).collect()
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().fold(0, |acc, &x| acc * self.dim + x)
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn probabilities(&self) -> Vec<T> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Computational-basis distribution of `particles`, indexed base `d` in the given order.
    pub fn marginal(&self, particles: &[usize]) -> Result<Vec<T>> {
        for &j in particles {
            self.check_particle(j)?;
        }
        let mut out = vec![T::zero(); self.dim.pow(particles.len() as u32)];
        for (i, a) in self.amps.iter().enumerate() {
            let key = particles.iter().fold(0, |acc, &j| acc * self.dim + self.digit(i, j));
            out[key] = out[key] + a.norm_sqr();
        }
        Ok(out)
    }

    pub fn with_phase(&self, phase: Complex<T>) -> Self {
        Self {
            dim: self.dim,
            particles: self.particles,
            amps: self.amps.iter().map(|&a| a * phase).collect(),
        }
    }

    /// `⟨self|other⟩`, conjugating `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        if self.dim != other.dim || self.particles != other.particles {
            return Err(Error::Shape(self.particles, self.dim, other.particles, other.dim));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .fold(czero(), |acc, (a, b)| acc + a.conj() * b))
    }

    /// `self ⊗ other`, with `other`'s particles appended after `self`'s.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Shape(self.particles, self.dim, other.particles, other.dim));
        }
        let particles = self.particles + other.particles;
        register_len(self.dim, particles, DEFAULT_MAX_AMPLITUDES)?;
        let amps = self
            .amps
            .iter()
            .flat_map(|&a| other.amps.iter().map(move |&b| a * b))
            .collect();
        Ok(Self {
            dim: self.dim,
            particles,
            amps,
        })
    }

    pub fn apply(&self, particle: usize, gate: SingleParticleGate) -> Result<Self> {
        let u = gate.matrix::<T>(self.dim)?;
        self.apply_matrix(particle, &u)
    }

    pub fn apply_matrix(&self, particle: usize, u: &Matrix<T>) -> Result<Self> {
        self.check_particle(particle)?;
        let d = self.dim;
        if u.len() != d || u.iter().any(|row| row.len() != d) {
            return Err(domain(format!("gate matrix must be {d}x{d}")));
        }
        let stride = self.stride(particle);
        let mut out = vec![czero(); self.amps.len()];
        let mut column = vec![czero(); d];
        for base in (0..self.amps.len()).filter(|&i| self.digit(i, particle) == 0) {
            for (k, slot) in column.iter_mut().enumerate() {
                *slot = self.amps[base + k * stride];
            }
            for (r, row) in u.iter().enumerate() {
                out[base + r * stride] = row
                    .iter()
                    .zip(&column)
                    .fold(czero(), |acc, (&m, &v)| acc + m * v);
            }
        }
        Ok(Self {
            dim: d,
            particles: self.particles,
            amps: out,
        })
    }

    /// Projects `particles` (in the given order) onto every vector of `basis` and returns
    /// `(probabilities, projections)` where each projection holds the coefficients over the
    /// remaining particles.
    fn project_onto(
        &self,
        particles: &[usize],
        basis: &[Vec<Complex<T>>],
    ) -> Result<Projection<T>> {
        for (k, &j) in particles.iter().enumerate() {
            self.check_particle(j)?;
            if particles[..k].contains(&j) {
                return Err(domain(format!("particle {j} listed twice in a joint measurement")));
            }
        }
        let sub_len = self.dim.pow(particles.len() as u32);
        if basis.iter().any(|b| b.len() != sub_len) {
            return Err(domain(format!("basis vectors must have {sub_len} entries")));
        }
        let rest: Vec<usize> = (0..self.particles).filter(|j| !particles.contains(j)).collect();
        let offsets = |set: &[usize]| -> Vec<usize> {
            let count = self.dim.pow(set.len() as u32);
            (0..count)
                .map(|s| {
                    let mut s = s;
                    let mut off = 0;
                    for &j in set.iter().rev() {
                        off += (s % self.dim) * self.stride(j);
                        s /= self.dim;
                    }
                    off
                })
                .collect()
        };
        let sub_off = offsets(particles);
        let rest_off = offsets(&rest);
        let mut probs = Vec::with_capacity(basis.len());
        let mut projections = Vec::with_capacity(basis.len());
        for b in basis {
            let coeffs: Vec<Complex<T>> = rest_off
                .iter()
                .map(|&r| {
                    sub_off
                        .iter()
                        .zip(b)
                        .fold(czero(), |acc, (&s, bv)| acc + bv.conj() * self.amps[s + r])
                })
                .collect();
            probs.push(coeffs.iter().fold(T::zero(), |acc, c| acc + c.norm_sqr()));
            projections.push(coeffs);
        }
        Ok((sub_off, rest_off, probs, projections))
    }

    /// Born distribution of a joint measurement of `particles` in an orthonormal `basis`.
    pub fn outcome_distribution(
        &self,
        particles: &[usize],
        basis: &[Vec<Complex<T>>],
    ) -> Result<Vec<T>> {
        Ok(self.project_onto(particles, basis)?.2)
    }

    /// Projective measurement of `particles` against the orthonormal set `basis`.
    /// The label is the index of the sampled basis vector. Fails with
    /// [`Error::OutsideSpan`] when the set does not capture the state.
    pub fn measure_subsystem<R: Rng + ?Sized>(
        &self,
        particles: &[usize],
        basis: &[Vec<Complex<T>>],
        rng: &mut R,
    ) -> Result<MeasurementOutcome<T>> {
        let (sub_off, rest_off, probs, projections) = self.project_onto(particles, basis)?;
        let captured = probs.iter().fold(T::zero(), |acc, &p| acc + p);
        let outside = T::one() - captured;
        if outside > T::span_tol() {
            return Err(Error::OutsideSpan(outside.as_f64()));
        }
        let as_f64: Vec<f64> = probs.iter().map(|p| p.as_f64()).collect();
        let cutoff = T::span_tol().powi(3).as_f64();
        let k = sample_index(&as_f64, cutoff, rng);
        let scale = T::one() / probs[k].sqrt();
        let mut amps = vec![czero(); self.amps.len()];
        for (&r, &c) in rest_off.iter().zip(&projections[k]) {
            for (&s, &bv) in sub_off.iter().zip(&basis[k]) {
                amps[s + r] = bv * c * scale;
            }
        }
        Ok(MeasurementOutcome {
            label: k,
            probability: probs[k],
            post_state: Self {
                dim: self.dim,
                particles: self.particles,
                amps,
            },
        })
    }

    /// Computational (σ_z for qubits) measurement; label is the observed digit.
    pub fn measure_computational<R: Rng + ?Sized>(
        &self,
        particle: usize,
        rng: &mut R,
    ) -> Result<MeasurementOutcome<T>> {
        self.check_particle(particle)?;
        let mut probs = vec![T::zero(); self.dim];
        for (i, a) in self.amps.iter().enumerate() {
            probs[self.digit(i, particle)] = probs[self.digit(i, particle)] + a.norm_sqr();
        }
        let as_f64: Vec<f64> = probs.iter().map(|p| p.as_f64()).collect();
        let k = sample_index(&as_f64, T::span_tol().powi(3).as_f64(), rng);
        let scale = T::one() / probs[k].sqrt();
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, &a)| if self.digit(i, particle) == k { a * scale } else { czero() })
            .collect();
        Ok(MeasurementOutcome {
            label: k,
            probability: probs[k],
            post_state: Self {
                dim: self.dim,
                particles: self.particles,
                amps,
            },
        })
    }

    /// Measurement in the shift eigenbasis ([`fourier_basis`]); label `k`.
    pub fn measure_fourier<R: Rng + ?Sized>(
        &self,
        particle: usize,
        rng: &mut R,
    ) -> Result<MeasurementOutcome<T>> {
        self.measure_subsystem(&[particle], &fourier_basis(self.dim), rng)
    }

    /// σ_x measurement, qubits only.
    pub fn measure_x_basis<R: Rng + ?Sized>(
        &self,
        particle: usize,
        rng: &mut R,
    ) -> Result<MeasurementOutcome<T, XSign>> {
        if self.dim != 2 {
            return Err(domain(format!("x-basis measurement needs d = 2, got d = {}", self.dim)));
        }
        let out = self.measure_fourier(particle, rng)?;
        Ok(MeasurementOutcome {
            label: if out.label == 0 { XSign::Plus } else { XSign::Minus },
            probability: out.probability,
            post_state: out.post_state,
        })
    }

    /// Bell-basis measurement of an ordered qubit pair.
    pub fn measure_bell<R: Rng + ?Sized>(
        &self,
        pair: (usize, usize),
        rng: &mut R,
    ) -> Result<MeasurementOutcome<T, BellState>> {
        if self.dim != 2 {
            return Err(domain(format!("Bell measurement needs d = 2, got d = {}", self.dim)));
        }
        if pair.0 == pair.1 {
            return Err(domain(format!("Bell measurement needs two distinct particles, got {} twice", pair.0)));
        }
        let out = self.measure_subsystem(&[pair.0, pair.1], &bell_basis(), rng)?;
        Ok(MeasurementOutcome {
            label: BellState::ALL[out.label],
            probability: out.probability,
            post_state: out.post_state,
        })
    }

    /// Joint measurement of the leading `family.particles()` particles against the
    /// family members; trailing particles (probe ancillas) ride along as spectators.
    pub fn measure_family<R: Rng + ?Sized>(
        &self,
        family: &GhzFamily<T>,
        rng: &mut R,
    ) -> Result<MeasurementOutcome<T>> {
        if family.dim() != self.dim || family.particles() > self.particles {
            return Err(Error::Shape(self.particles, self.dim, family.particles(), family.dim()));
        }
        let leading: Vec<usize> = (0..family.particles()).collect();
        let basis: Vec<Vec<Complex<T>>> =
            family.members().iter().map(|m| m.amplitudes().to_vec()).collect();
        self.measure_subsystem(&leading, &basis, rng)
    }
}

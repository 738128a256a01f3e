//! GHZ-state families and the message ↔ encoding-operator bijections.
//!
//! Three schemes are supported:
//!
//! * [`Scheme::Qubit3`]: triplets `A, B, C`; the eight two-particle Pauli products on
//!   `(A, B)` map `|Ψ₁⟩ = (|000⟩+|111⟩)/√2` onto the eight GHZ states, and state `k`
//!   carries the 3-bit message `k − 1`.
//! * [`Scheme::QubitP`]: `p`-particle multiplets. Particle `p−2` carries one of
//!   `I, σ_z, iσ_y, σ_x` (the two most significant message bits, in that order) and every
//!   particle `j < p−2` carries `I` or `σ_x` (one bit each, particle 0 first).
//!   `QubitP(3)` uses the `Qubit3` table so both schemes agree member-for-member.
//! * [`Scheme::Qutrit3`]: qutrit triplets encoded with `U_{0,c}(A) ⊗ U_{m,n}(B)`;
//!   message `(t₀, t₁, t₂) = (c, n, m)`.
//!
//! In every scheme the last particle (`p−1`) is never encoded: it is the one sent
//! first and used for the channel check. The family index of a message is its digits
//! read as a base-`d` number, most significant first.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gate::SingleParticleGate;
use crate::scalar::Real;
use crate::state::{register_len, StateVector, DEFAULT_MAX_AMPLITUDES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Scheme {
    Qubit3,
    QubitP(usize),
    Qutrit3,
}

impl Scheme {
    pub fn particles(&self) -> usize {
        match *self {
            Self::Qubit3 | Self::Qutrit3 => 3,
            Self::QubitP(p) => p,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Qutrit3 => 3,
            _ => 2,
        }
    }

    /// Digits per message; equals the particle count in every scheme.
    pub fn message_len(&self) -> usize {
        self.particles()
    }

    pub fn family_size(&self) -> usize {
        self.dim().pow(self.particles() as u32)
    }

    /// Particle sent first and reserved for the channel check.
    pub fn check_particle(&self) -> usize {
        self.particles() - 1
    }

    pub fn message_particles(&self) -> std::ops::Range<usize> {
        0..self.particles() - 1
    }

    pub fn capacity_bits(&self) -> f64 {
        (self.family_size() as f64).log2()
    }

    /// Conventional particle name: `A, B, C` for triplets, `P0 … P{p−1}` otherwise.
    pub fn particle_name(&self, particle: usize) -> String {
        if self.particles() == 3 && particle < 3 {
            ["A", "B", "C"][particle].to_string()
        } else {
            format!("P{particle}")
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::QubitP(p) = *self {
            if p < 2 {
                return Err(domain(format!("QubitP needs at least 2 particles, got {p}")));
            }
        }
        // Families store d^p members of d^p amplitudes each.
        let n = register_len(self.dim(), self.particles(), DEFAULT_MAX_AMPLITUDES)?;
        if n.saturating_mul(n) > DEFAULT_MAX_AMPLITUDES {
            return Err(Error::RegisterTooLarge {
                dim: self.dim(),
                particles: 2 * self.particles(),
                limit: DEFAULT_MAX_AMPLITUDES,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Qubit3 => write!(f, "qubit3"),
            Self::QubitP(p) => write!(f, "qubitp:{p}"),
            Self::Qutrit3 => write!(f, "qutrit3"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let scheme = match s.as_str() {
            "qubit3" => Self::Qubit3,
            "qutrit3" => Self::Qutrit3,
            _ => {
                let p = s
                    .strip_prefix("qubitp:")
                    .or_else(|| s.strip_prefix("qubitp"))
                    .and_then(|rest| rest.parse::<usize>().ok())
                    .ok_or_else(|| {
                        domain(format!("unknown scheme `{s}` (expected qubit3, qutrit3 or qubitp:<p>)"))
                    })?;
                Self::QubitP(p)
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> Self {
        s.to_string()
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Classical message carried by one multiplet: one digit per particle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Message {
    digits: Vec<u8>,
}

impl Message {
    pub fn new(digits: Vec<u8>) -> Self {
        Self { digits }
    }

    pub fn zero(len: usize) -> Self {
        Self {
            digits: vec![0; len],
        }
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    fn validate(&self, scheme: Scheme) -> Result<()> {
        if self.digits.len() != scheme.message_len() {
            return Err(domain(format!(
                "message {self} has {} digits, {scheme} needs {}",
                self.digits.len(),
                scheme.message_len()
            )));
        }
        if self.digits.iter().any(|&x| usize::from(x) >= scheme.dim()) {
            return Err(domain(format!("message {self} has a digit >= {}", scheme.dim())));
        }
        Ok(())
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for Message {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or_else(|| domain(format!("message `{s}` contains non-digit `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { digits })
    }
}

impl From<Message> for String {
    fn from(m: Message) -> Self {
        m.to_string()
    }
}

impl TryFrom<String> for Message {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Gates applied to the message-carrying particles, in increasing particle order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodingOp {
    gates: Vec<(usize, SingleParticleGate)>,
}

impl EncodingOp {
    pub fn new(gates: Vec<(usize, SingleParticleGate)>) -> Result<Self> {
        if gates.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(domain("encoding gates must target strictly increasing particles"));
        }
        Ok(Self { gates })
    }

    pub fn gates(&self) -> &[(usize, SingleParticleGate)] {
        &self.gates
    }

    pub fn apply<T: Real>(&self, state: &StateVector<T>) -> Result<StateVector<T>> {
        self.gates
            .iter()
            .try_fold(state.clone(), |s, &(j, g)| s.apply(j, g))
    }
}

impl fmt::Display for EncodingOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.gates.iter().map(|(_, g)| g.to_string()).collect();
        write!(f, "{}", parts.join("⊗"))
    }
}

const QUBIT3_TABLE: [(SingleParticleGate, SingleParticleGate); 8] = {
    use SingleParticleGate::*;
    [
        (PauliZ, PauliZ),
        (IdentityI, PauliZ),
        (PauliIY, PauliZ),
        (PauliX, PauliZ),
        (IdentityI, PauliX),
        (PauliZ, PauliX),
        (PauliX, PauliX),
        (PauliIY, PauliX),
    ]
};

const PAIR_GATES: [SingleParticleGate; 4] = [
    SingleParticleGate::IdentityI,
    SingleParticleGate::PauliZ,
    SingleParticleGate::PauliIY,
    SingleParticleGate::PauliX,
];

/// Family index of `msg`: its digits as a base-`d` number.
pub fn index_of_message(scheme: Scheme, msg: &Message) -> Result<usize> {
    msg.validate(scheme)?;
    Ok(msg
        .digits()
        .iter()
        .fold(0, |acc, &x| acc * scheme.dim() + usize::from(x)))
}

pub fn decode_index(scheme: Scheme, index: usize) -> Result<Message> {
    if index >= scheme.family_size() {
        return Err(domain(format!(
            "family index {index} out of range for {scheme} ({} members)",
            scheme.family_size()
        )));
    }
    let d = scheme.dim();
    let mut digits = vec![0u8; scheme.message_len()];
    let mut rest = index;
    for slot in digits.iter_mut().rev() {
        *slot = (rest % d) as u8;
        rest /= d;
    }
    Ok(Message { digits })
}

pub fn encode_ops_for_message(scheme: Scheme, msg: &Message) -> Result<EncodingOp> {
    let index = index_of_message(scheme, msg)?;
    let digit = |k: usize| usize::from(msg.digits()[k]);
    let gates = match scheme {
        Scheme::Qubit3 | Scheme::QubitP(3) => {
            let (a, b) = QUBIT3_TABLE[index];
            vec![(0, a), (1, b)]
        }
        Scheme::QubitP(p) => {
            let mut gates: Vec<(usize, SingleParticleGate)> = (0..p - 2)
                .map(|j| {
                    let g = if digit(2 + j) == 0 {
                        SingleParticleGate::IdentityI
                    } else {
                        SingleParticleGate::PauliX
                    };
                    (j, g)
                })
                .collect();
            gates.push((p - 2, PAIR_GATES[2 * digit(0) + digit(1)]));
            gates
        }
        Scheme::Qutrit3 => vec![
            (0, SingleParticleGate::shift(digit(0))),
            (1, SingleParticleGate::Generalized { m: digit(2), n: digit(1) }),
        ],
    };
    EncodingOp::new(gates)
}

pub fn capacity_bits(scheme: Scheme) -> f64 {
    scheme.capacity_bits()
}

/// Every message of `scheme` in family-index order.
pub fn all_messages(scheme: Scheme) -> impl Iterator<Item = Message> + Clone {
    (0..scheme.family_size()).map(move |k| decode_index(scheme, k).expect("index in range"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FamilyKind {
    Scheme(Scheme),
    /// Shifts on particles `0..q−2`, `U_mn` on particle `q−2`, last particle untouched.
    Generalized { particles: usize, dim: usize },
}

/// Ordered orthonormal GHZ family; member `k` carries message `decode_index(k)`.
#[derive(Debug, Clone)]
pub struct GhzFamily<T> {
    kind: FamilyKind,
    particles: usize,
    dim: usize,
    members: Vec<StateVector<T>>,
}

impl<T: Real> GhzFamily<T> {
    pub fn build(scheme: Scheme) -> Result<Self> {
        scheme.validate()?;
        let base = StateVector::ghz(scheme.particles(), scheme.dim())?;
        let members = all_messages(scheme)
            .map(|m| encode_ops_for_message(scheme, &m)?.apply(&base))
            .collect::<Result<Vec<_>>>()?;
        Self::checked(FamilyKind::Scheme(scheme), scheme.particles(), scheme.dim(), members)
    }

    /// Complete GHZ-type basis on `particles` qudits, used for joint check
    /// measurements on a partial multiplet (the Bell basis when `particles = 2, d = 2`).
    pub fn generalized(particles: usize, dim: usize) -> Result<Self> {
        if particles < 2 {
            return Err(domain("generalized GHZ family needs at least 2 particles"));
        }
        let n = register_len(dim, particles, DEFAULT_MAX_AMPLITUDES)?;
        if n.saturating_mul(n) > DEFAULT_MAX_AMPLITUDES {
            return Err(Error::RegisterTooLarge {
                dim,
                particles: 2 * particles,
                limit: DEFAULT_MAX_AMPLITUDES,
            });
        }
        let base = StateVector::ghz(particles, dim)?;
        let mut members = Vec::with_capacity(n);
        for index in 0..n {
            let mut rest = index;
            let n_shift = rest % dim;
            rest /= dim;
            let m_phase = rest % dim;
            rest /= dim;
            let mut state = base.apply(particles - 2, SingleParticleGate::Generalized {
                m: m_phase,
                n: n_shift,
            })?;
            for j in (0..particles - 2).rev() {
                state = state.apply(j, SingleParticleGate::shift(rest % dim))?;
                rest /= dim;
            }
            members.push(state);
        }
        Self::checked(FamilyKind::Generalized { particles, dim }, particles, dim, members)
    }

    fn checked(kind: FamilyKind, particles: usize, dim: usize, members: Vec<StateVector<T>>) -> Result<Self> {
        let family = Self {
            kind,
            particles,
            dim,
            members,
        };
        let (off, diag) = family.gram_defect();
        if off > T::algebraic_tol() || diag > T::algebraic_tol() {
            return Err(Error::Consistency(format!(
                "family is not orthonormal: off-diagonal {:e}, diagonal {:e}",
                off.as_f64(),
                diag.as_f64()
            )));
        }
        Ok(family)
    }

    pub fn scheme(&self) -> Option<Scheme> {
        match self.kind {
            FamilyKind::Scheme(s) => Some(s),
            FamilyKind::Generalized { .. } => None,
        }
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[StateVector<T>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `(max |⟨i|j⟩| for i ≠ j, max |⟨i|i⟩ − 1|)`.
    pub fn gram_defect(&self) -> (T, T) {
        let mut off = T::zero();
        let mut diag = T::zero();
        for (i, a) in self.members.iter().enumerate() {
            for (j, b) in self.members.iter().enumerate().skip(i) {
                let g = a.inner(b).expect("family members share a shape");
                if i == j {
                    diag = diag.max((g - Complex::new(T::one(), T::zero())).norm());
                } else {
                    off = off.max(g.norm());
                }
            }
        }
        (off, diag)
    }

    /// Index of the member equal to `state` up to global phase.
    pub fn index_of_state(&self, state: &StateVector<T>) -> Option<usize> {
        self.members.iter().position(|m| {
            m.inner(state)
                .map(|g| (g.norm_sqr() - T::one()).abs() < T::span_tol())
                .unwrap_or(false)
        })
    }

    pub fn message_of_index(&self, index: usize) -> Result<Message> {
        match self.kind {
            FamilyKind::Scheme(s) => decode_index(s, index),
            FamilyKind::Generalized { .. } => Err(domain("generalized family carries no messages")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::StateVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    /// The eight Qubit3 family states, written out by hand.
    fn listed_qubit3() -> Vec<StateVector<f64>> {
        let pairs: [([usize; 3], [usize; 3], f64); 8] = [
            ([0, 0, 0], [1, 1, 1], 1.0),
            ([0, 0, 0], [1, 1, 1], -1.0),
            ([1, 0, 0], [0, 1, 1], 1.0),
            ([1, 0, 0], [0, 1, 1], -1.0),
            ([0, 1, 0], [1, 0, 1], 1.0),
            ([0, 1, 0], [1, 0, 1], -1.0),
            ([1, 1, 0], [0, 0, 1], 1.0),
            ([1, 1, 0], [0, 0, 1], -1.0),
        ];
        pairs
            .iter()
            .map(|(a, b, s)| {
                let mut amps = vec![Complex::new(0.0, 0.0); 8];
                amps[4 * a[0] + 2 * a[1] + a[2]] = Complex::new(H, 0.0);
                amps[4 * b[0] + 2 * b[1] + b[2]] = Complex::new(s * H, 0.0);
                StateVector::from_amplitudes(2, 3, amps).unwrap()
            })
            .collect()
    }

    #[test]
    fn qubit3_matches_listed_states_up_to_phase() {
        let fam = GhzFamily::<f64>::build(Scheme::Qubit3).unwrap();
        let listed = listed_qubit3();
        for (i, m) in fam.members().iter().enumerate() {
            for (j, l) in listed.iter().enumerate() {
                let g = m.inner(l).unwrap().norm();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12, "member {i} vs Ψ{}", j + 1);
            }
        }
    }

    #[test]
    fn qubitp3_agrees_with_qubit3_member_for_member() {
        let a = GhzFamily::<f64>::build(Scheme::Qubit3).unwrap();
        let b = GhzFamily::<f64>::build(Scheme::QubitP(3)).unwrap();
        for (i, x) in a.members().iter().enumerate() {
            for (j, y) in b.members().iter().enumerate() {
                let g = x.inner(y).unwrap().norm();
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn family_sizes_and_orthonormality() {
        for p in 2..=8 {
            let fam = GhzFamily::<f64>::build(Scheme::QubitP(p)).unwrap();
            assert_eq!(fam.len(), 1 << p);
            let (off, diag) = fam.gram_defect();
            assert!(off < 1e-12 && diag < 1e-12, "p={p}");
        }
        let q = GhzFamily::<f64>::build(Scheme::Qutrit3).unwrap();
        assert_eq!(q.len(), 27);
        let (off, diag) = q.gram_defect();
        assert!(off < 1e-12 && diag < 1e-12);
    }

    #[test]
    fn encoding_examples() {
        use SingleParticleGate::*;
        let ops = |s: &str| encode_ops_for_message(Scheme::Qubit3, &s.parse().unwrap()).unwrap();
        assert_eq!(ops("000").gates(), &[(0, PauliZ), (1, PauliZ)]);
        assert_eq!(ops("010").gates(), &[(0, PauliIY), (1, PauliZ)]);
        assert_eq!(ops("100").gates(), &[(0, IdentityI), (1, PauliX)]);
        assert_eq!(ops("101").gates(), &[(0, PauliZ), (1, PauliX)]);
        assert_eq!(ops("000").to_string(), "Z⊗Z");
    }

    #[test]
    fn qubitp_generic_ordering() {
        use SingleParticleGate::*;
        let op = encode_ops_for_message(Scheme::QubitP(5), &"11010".parse().unwrap()).unwrap();
        assert_eq!(op.gates(), &[(0, IdentityI), (1, PauliX), (2, IdentityI), (3, PauliX)]);
        let op2 = encode_ops_for_message(Scheme::QubitP(2), &"01".parse().unwrap()).unwrap();
        assert_eq!(op2.gates(), &[(0, PauliZ)]);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_index(Scheme::Qubit3, 6).unwrap().to_string(), "110");
        assert_eq!(decode_index(Scheme::Qubit3, 0).unwrap().to_string(), "000");
        assert_eq!(decode_index(Scheme::Qutrit3, 0).unwrap().to_string(), "000");
        assert_eq!(decode_index(Scheme::Qutrit3, 5).unwrap().to_string(), "012");
        assert!(decode_index(Scheme::Qubit3, 8).is_err());
        let q = GhzFamily::<f64>::build(Scheme::Qutrit3).unwrap();
        let base = StateVector::<f64>::ghz(3, 3).unwrap();
        assert_eq!(q.index_of_state(&base), Some(0));
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(capacity_bits(Scheme::Qubit3), 3.0);
        assert_eq!(capacity_bits(Scheme::QubitP(5)), 5.0);
        assert!((capacity_bits(Scheme::Qutrit3) - 27f64.log2()).abs() < 1e-12);
        assert!((capacity_bits(Scheme::Qutrit3) - 4.7549).abs() < 1e-4);
    }

    #[test]
    fn malformed_messages_rejected() {
        assert!(encode_ops_for_message(Scheme::Qubit3, &"0120".parse().unwrap()).is_err());
        assert!(encode_ops_for_message(Scheme::Qubit3, &"012".parse().unwrap()).is_err());
        assert!("0a1".parse::<Message>().is_err());
    }

    #[test]
    fn bijection_and_physical_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut schemes = vec![Scheme::Qubit3, Scheme::Qutrit3];
        schemes.extend((2..=6).map(Scheme::QubitP));
        for scheme in schemes {
            let fam = GhzFamily::<f64>::build(scheme).unwrap();
            let base = StateVector::<f64>::ghz(scheme.particles(), scheme.dim()).unwrap();
            for msg in all_messages(scheme) {
                let idx = index_of_message(scheme, &msg).unwrap();
                assert_eq!(decode_index(scheme, idx).unwrap(), msg);
                let encoded = encode_ops_for_message(scheme, &msg).unwrap().apply(&base).unwrap();
                let out = encoded.measure_family(&fam, &mut rng).unwrap();
                assert!((out.probability - 1.0).abs() < 1e-10);
                assert_eq!(fam.message_of_index(out.label).unwrap(), msg, "{scheme}");
            }
        }
    }

    #[test]
    fn qubitp_operator_tuples_are_distinct() {
        for p in 2..=8 {
            let ops: std::collections::HashSet<_> = all_messages(Scheme::QubitP(p))
                .map(|m| encode_ops_for_message(Scheme::QubitP(p), &m).unwrap())
                .collect();
            assert_eq!(ops.len(), 4 * (1 << (p - 2)));
        }
    }

    #[test]
    fn single_particle_marginals_uniform() {
        let mut schemes = vec![Scheme::Qubit3, Scheme::Qutrit3];
        schemes.extend((2..=6).map(Scheme::QubitP));
        for scheme in schemes {
            let fam = GhzFamily::<f64>::build(scheme).unwrap();
            let d = scheme.dim() as f64;
            for m in fam.members() {
                for j in 0..scheme.particles() {
                    for p in m.marginal(&[j]).unwrap() {
                        assert!((p - 1.0 / d).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn generalized_pair_family_is_bell_basis() {
        let fam = GhzFamily::<f64>::generalized(2, 2).unwrap();
        assert_eq!(fam.len(), 4);
        let bell = crate::state::bell_basis::<f64>();
        for b in bell {
            let s = StateVector::from_amplitudes(2, 2, b).unwrap();
            assert!(fam.index_of_state(&s).is_some());
        }
        let q = GhzFamily::<f64>::generalized(2, 3).unwrap();
        assert_eq!(q.len(), 9);
        assert!(GhzFamily::<f64>::generalized(4, 3).is_ok());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("qubit3".parse::<Scheme>().unwrap(), Scheme::Qubit3);
        assert_eq!("QUTRIT3".parse::<Scheme>().unwrap(), Scheme::Qutrit3);
        assert_eq!("qubitp:5".parse::<Scheme>().unwrap(), Scheme::QubitP(5));
        assert!("qubitp:1".parse::<Scheme>().is_err());
        assert!("qubitp:11".parse::<Scheme>().is_err());
        assert!("ququart".parse::<Scheme>().is_err());
    }

    #[test]
    fn f32_family_builds() {
        let fam = GhzFamily::<f32>::build(Scheme::Qutrit3).unwrap();
        assert_eq!(fam.len(), 27);
    }
}

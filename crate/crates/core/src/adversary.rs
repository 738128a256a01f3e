//! Channel behaviours an eavesdropper can apply to particle sequences in transit.
//!
//! Eve's classical knowledge is kept in an [`EveRecord`] that the honest parties
//! never read; attacks only show up through measurement statistics.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_index, encode_ops_for_message, Scheme};
use crate::error::{domain, Error, Result};
use crate::protocol::{check_position, AliceCheckBasis, CheckBasis, CheckMethod};
use crate::scalar::Real;
use crate::state::{register_len, StateVector, DEFAULT_MAX_AMPLITUDES};
use crate::stats::{mutual_information, Counts, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisPolicy {
    AlwaysZ,
    AlwaysX,
    RandomZX,
}

impl BasisPolicy {
    fn pick<R: Rng + ?Sized>(self, rng: &mut R) -> CheckBasis {
        match self {
            Self::AlwaysZ => CheckBasis::Z,
            Self::AlwaysX => CheckBasis::X,
            Self::RandomZX => CheckBasis::random(rng),
        }
    }
}

/// Amplitudes of the probe interaction on a qubit and a 4-level ancilla:
///
/// ```text
/// |0⟩|e⟩ → α₁|0⟩|e00⟩ + β₁|1⟩|e01⟩
/// |1⟩|e⟩ → α₂|1⟩|e10⟩ + β₂|0⟩|e11⟩
/// ```
///
/// `β` is the flip amplitude on each branch, so the induced z error rates are
/// `|β₁|²` and `|β₂|²`. The unflipped branches share one ancilla state
/// (`e00 = e10`), which makes `β = 0` the identity channel; the two flip
/// states are orthogonal to it and to each other, so Eve learns exactly which
/// branch flipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeParams<T> {
    alpha1: Complex<T>,
    beta1: Complex<T>,
    alpha2: Complex<T>,
    beta2: Complex<T>,
}

impl<T: Real> ProbeParams<T> {
    pub fn new(alpha1: Complex<T>, beta1: Complex<T>, alpha2: Complex<T>, beta2: Complex<T>) -> Result<Self> {
        for (branch, a, b) in [(0, alpha1, beta1), (1, alpha2, beta2)] {
            let norm = a.norm_sqr() + b.norm_sqr();
            if (norm - T::one()).abs() > T::algebraic_tol() {
                return Err(domain(format!(
                    "probe branch {branch} is not unitary: |α|² + |β|² = {}",
                    norm.as_f64()
                )));
            }
        }
        Ok(Self {
            alpha1,
            beta1,
            alpha2,
            beta2,
        })
    }

    /// Real probe with `β₁ = β₂ = beta`.
    pub fn symmetric(beta: T) -> Result<Self> {
        if !(T::zero()..=T::one()).contains(&beta) {
            return Err(domain(format!("probe flip amplitude must lie in [0, 1], got {beta}")));
        }
        let b = Complex::new(beta, T::zero());
        let a = Complex::new((T::one() - beta * beta).max(T::zero()).sqrt(), T::zero());
        Self::new(a, b, a, b)
    }

    pub fn amplitudes(&self) -> [Complex<T>; 4] {
        [self.alpha1, self.beta1, self.alpha2, self.beta2]
    }

    /// `(|β₁|², |β₂|²)`: flip probabilities of the `|0⟩` and `|1⟩` branches.
    pub fn error_rates(&self) -> (T, T) {
        (self.beta1.norm_sqr(), self.beta2.norm_sqr())
    }
}

/// Particles an attack touches, whenever they pass through the channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Targets {
    /// The check particle `p−1`, sent before encoding.
    CheckSequence,
    Particles(BTreeSet<usize>),
}

impl Targets {
    pub fn resolve(&self, scheme: Scheme) -> BTreeSet<usize> {
        match self {
            Self::CheckSequence => [scheme.check_particle()].into(),
            Self::Particles(set) => set.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel<T> {
    Ideal,
    /// Measure each target in the chosen basis and resend the eigenstate found.
    InterceptResend { basis_policy: BasisPolicy, targets: Targets },
    /// Entangle each target with a fresh ancilla that Eve keeps.
    Probe { params: ProbeParams<T>, targets: Targets },
    /// Keep each target, learn its z value, and forward a fresh `|0⟩` instead.
    FakeResend { targets: Targets },
    /// z-measure the group particles of a grouped send.
    GroupedInterception { group: BTreeSet<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EveAction {
    Measured { particle: usize, basis: CheckBasis, outcome: usize },
    /// Ancilla qubits appended at register positions `ancilla` and `ancilla + 1`.
    Probed { particle: usize, ancilla: usize },
    Replaced { particle: usize, kept_outcome: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveEntry {
    pub batch: usize,
    pub position: usize,
    pub action: EveAction,
}

/// Append-only log of everything Eve did and saw.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveRecord {
    entries: Vec<EveEntry>,
}

impl EveRecord {
    pub fn push(&mut self, batch: usize, position: usize, action: EveAction) {
        self.entries.push(EveEntry { batch, position, action });
    }

    pub fn entries(&self) -> &[EveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: Real> ChannelModel<T> {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Ideal => "ideal",
            Self::InterceptResend { .. } => "intercept-resend",
            Self::Probe { .. } => "probe",
            Self::FakeResend { .. } => "fake-resend",
            Self::GroupedInterception { .. } => "grouped",
        }
    }

    pub fn validate(&self, scheme: Scheme) -> Result<()> {
        let p = scheme.particles();
        let in_range = |set: &BTreeSet<usize>| match set.iter().find(|&&j| j >= p) {
            Some(&j) => Err(Error::ParticleIndex { index: j, particles: p }),
            None => Ok(()),
        };
        match self {
            Self::Ideal => Ok(()),
            Self::InterceptResend { targets, .. } | Self::FakeResend { targets } => in_range(&targets.resolve(scheme)),
            Self::Probe { targets, .. } => {
                if scheme.dim() != 2 {
                    return Err(domain(format!("the probe acts on qubits, scheme {scheme} has d = {}", scheme.dim())));
                }
                let set = targets.resolve(scheme);
                in_range(&set)?;
                let grown = p + 2 * set.len();
                register_len(2, grown, DEFAULT_MAX_AMPLITUDES).map(|_| ())
            }
            Self::GroupedInterception { group } => {
                if group.is_empty() || group.iter().any(|&j| j >= scheme.check_particle()) {
                    return Err(domain("grouped interception needs a non-empty set of message particles"));
                }
                Ok(())
            }
        }
    }

    /// Applies the channel to one multiplet whose `sequence` particles are in transit.
    pub fn intercept<R: Rng + ?Sized>(
        &self,
        scheme: Scheme,
        state: &StateVector<T>,
        sequence: &[usize],
        rng: &mut R,
    ) -> Result<(StateVector<T>, Vec<EveAction>)> {
        let hit = |set: BTreeSet<usize>| -> Vec<usize> { sequence.iter().copied().filter(|j| set.contains(j)).collect() };
        let mut state = state.clone();
        let mut actions = Vec::new();
        match self {
            Self::Ideal => {}
            Self::InterceptResend { basis_policy, targets } => {
                for particle in hit(targets.resolve(scheme)) {
                    let basis = basis_policy.pick(rng);
                    let (outcome, post) = basis.measure(&state, particle, rng)?;
                    state = post;
                    actions.push(EveAction::Measured { particle, basis, outcome });
                }
            }
            Self::Probe { params, targets } => {
                for particle in hit(targets.resolve(scheme)) {
                    let ancilla = state.particles();
                    state = probe_attach(&state, particle, params)?;
                    actions.push(EveAction::Probed { particle, ancilla });
                }
            }
            Self::FakeResend { targets } => {
                let d = state.dim();
                for particle in hit(targets.resolve(scheme)) {
                    let (kept, post) = CheckBasis::Z.measure(&state, particle, rng)?;
                    // Eve's copy is gone from the register; Bob gets |0⟩.
                    state = post.apply(particle, crate::gate::SingleParticleGate::shift((d - kept) % d))?;
                    actions.push(EveAction::Replaced {
                        particle,
                        kept_outcome: kept,
                    });
                }
            }
            Self::GroupedInterception { group } => {
                for particle in hit(group.clone()) {
                    let (outcome, post) = CheckBasis::Z.measure(&state, particle, rng)?;
                    state = post;
                    actions.push(EveAction::Measured {
                        particle,
                        basis: CheckBasis::Z,
                        outcome,
                    });
                }
            }
        }
        Ok((state, actions))
    }
}

/// Sends `sequence` of every multiplet through `model`; positions keep their order.
pub fn transmit<T: Real, R: Rng + ?Sized>(
    states: &[StateVector<T>],
    scheme: Scheme,
    sequence: &[usize],
    model: &ChannelModel<T>,
    rng: &mut R,
) -> Result<(Vec<StateVector<T>>, EveRecord)> {
    let mut record = EveRecord::default();
    let mut out = Vec::with_capacity(states.len());
    for (pos, s) in states.iter().enumerate() {
        let (next, actions) = model.intercept(scheme, s, sequence, rng)?;
        for a in actions {
            record.push(0, pos, a);
        }
        out.push(next);
    }
    Ok((out, record))
}

/// Ancilla register index of each probe outcome: unflipped, `|0⟩` flipped, `|1⟩` flipped.
pub const PROBE_ANCILLA_STATES: [usize; 3] = [0b00, 0b01, 0b11];

/// Appends a 2-qubit ancilla in `|00⟩` and applies the probe interaction to
/// qubit `particle` (see [`ProbeParams`] for the ancilla labels).
pub fn probe_attach<T: Real>(state: &StateVector<T>, particle: usize, params: &ProbeParams<T>) -> Result<StateVector<T>> {
    if state.dim() != 2 {
        return Err(domain(format!("the probe acts on qubits, got d = {}", state.dim())));
    }
    let p = state.particles();
    if particle >= p {
        return Err(Error::ParticleIndex { index: particle, particles: p });
    }
    let params = ProbeParams::new(params.alpha1, params.beta1, params.alpha2, params.beta2)?;
    let n = register_len(2, p + 2, DEFAULT_MAX_AMPLITUDES)?;
    let bit = 1usize << (p - 1 - particle);
    let mut amps = vec![Complex::new(T::zero(), T::zero()); n];
    for (idx, &a) in state.amplitudes().iter().enumerate() {
        if a.norm_sqr() == T::zero() {
            continue;
        }
        let (stay, flip) = if idx & bit == 0 {
            ((params.alpha1, PROBE_ANCILLA_STATES[0]), (params.beta1, PROBE_ANCILLA_STATES[1]))
        } else {
            ((params.alpha2, PROBE_ANCILLA_STATES[0]), (params.beta2, PROBE_ANCILLA_STATES[2]))
        };
        amps[(idx << 2) | stay.1] = amps[(idx << 2) | stay.1] + stay.0 * a;
        amps[((idx ^ bit) << 2) | flip.1] = amps[((idx ^ bit) << 2) | flip.1] + flip.0 * a;
    }
    StateVector::from_amplitudes(2, p + 2, amps)
}

/// Mismatch rates of single first-check positions under an attack on the check sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEstimate {
    pub overall: Estimate,
    pub z: Estimate,
    pub x: Estimate,
    /// z-check mismatch rate split by Alice's first digit.
    pub z_branches: Vec<Estimate>,
}

/// Monte Carlo estimate of the per-position mismatch probability of a first
/// check when `model` acts on the check sequence.
pub fn detection_probability<T: Real, R: Rng + ?Sized>(
    model: &ChannelModel<T>,
    scheme: Scheme,
    method: CheckMethod,
    trials: usize,
    rng: &mut R,
) -> Result<DetectionEstimate> {
    if trials == 0 {
        return Err(domain("trials must be at least 1"));
    }
    model.validate(scheme)?;
    let joint = AliceCheckBasis::<T>::for_scheme(scheme)?;
    let ghz = StateVector::<T>::ghz(scheme.particles(), scheme.dim())?;
    let sequence = [scheme.check_particle()];
    let (mut all, mut z, mut x) = (Counts::default(), Counts::default(), Counts::default());
    let mut branches = vec![Counts::default(); scheme.dim()];
    for _ in 0..trials {
        let (state, _) = model.intercept(scheme, &ghz, &sequence, rng)?;
        let basis = CheckBasis::random(rng);
        let (pc, _) = check_position(&state, scheme, method, basis, joint.as_ref(), rng)?;
        all.record(pc.mismatch);
        match basis {
            CheckBasis::Z => {
                z.record(pc.mismatch);
                if let Some(b) = pc.branch {
                    branches[b].record(pc.mismatch);
                }
            }
            CheckBasis::X => x.record(pc.mismatch),
        }
    }
    Ok(DetectionEstimate {
        overall: all.estimate(),
        z: z.estimate(),
        x: x.estimate(),
        z_branches: branches.iter().map(Counts::estimate).collect(),
    })
}

/// Empirical mutual information (bits per multiplet) between Eve's observations
/// and a uniformly random message.
///
/// Attacks on the check particle happen before encoding, attacks on message
/// particles after it; no checks run, so Eve is never stopped. Probe ancillas are
/// z-measured at the end.
pub fn eve_information<T: Real, R: Rng + ?Sized>(
    model: &ChannelModel<T>,
    scheme: Scheme,
    trials: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if trials == 0 {
        return Err(domain("trials must be at least 1"));
    }
    model.validate(scheme)?;
    let ghz = StateVector::<T>::ghz(scheme.particles(), scheme.dim())?;
    let ops = (0..scheme.family_size())
        .map(|k| encode_ops_for_message(scheme, &decode_index(scheme, k)?))
        .collect::<Result<Vec<_>>>()?;
    let message_particles: Vec<usize> = scheme.message_particles().collect();
    let mut joint: BTreeMap<(Vec<usize>, usize), u64> = BTreeMap::new();
    for _ in 0..trials {
        let k = rng.random_range(0..scheme.family_size());
        let (state, mut actions) = model.intercept(scheme, &ghz, &[scheme.check_particle()], rng)?;
        let state = ops[k].apply(&state)?;
        let (mut state, later) = model.intercept(scheme, &state, &message_particles, rng)?;
        actions.extend(later);
        let mut seen = Vec::new();
        for a in &actions {
            match *a {
                EveAction::Measured { outcome, .. } => seen.push(outcome),
                EveAction::Replaced { kept_outcome, .. } => seen.push(kept_outcome),
                EveAction::Probed { ancilla, .. } => {
                    for q in [ancilla, ancilla + 1] {
                        let (digit, post) = CheckBasis::Z.measure(&state, q, rng)?;
                        seen.push(digit);
                        state = post;
                    }
                }
            }
        }
        *joint.entry((seen, k)).or_default() += 1;
    }
    Ok(mutual_information(&joint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn c(x: f64) -> Complex<f64> {
        Complex::new(x, 0.0)
    }

    #[test]
    fn probe_params_validation() {
        assert!(ProbeParams::new(c(1.0), c(0.1), c(1.0), c(0.0)).is_err());
        assert!(ProbeParams::<f64>::symmetric(1.2).is_err());
        let p = ProbeParams::<f64>::symmetric(0.5).unwrap();
        let (e1, e2) = p.error_rates();
        assert!((e1 - 0.25).abs() < 1e-15 && (e2 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn identity_probe_factorizes() {
        let g = StateVector::<f64>::ghz(3, 2).unwrap();
        let out = probe_attach(&g, 2, &ProbeParams::symmetric(0.0).unwrap()).unwrap();
        let expect = g.tensor(&StateVector::basis_state(2, &[0, 0]).unwrap()).unwrap();
        assert!((out.inner(&expect).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_flip_probe_inverts_check_digit() {
        let g = StateVector::<f64>::ghz(3, 2).unwrap();
        let out = probe_attach(&g, 2, &ProbeParams::symmetric(1.0).unwrap()).unwrap();
        let probs = out.probabilities();
        // |00 1⟩|e01⟩ and |11 0⟩|e11⟩ only.
        let i1 = 0b001 << 2 | 1;
        let i2 = 0b110 << 2 | 3;
        assert!((probs[i1] - 0.5).abs() < 1e-12 && (probs[i2] - 0.5).abs() < 1e-12);
        let est = detection_probability(
            &ChannelModel::Probe {
                params: ProbeParams::symmetric(1.0).unwrap(),
                targets: Targets::CheckSequence,
            },
            Scheme::Qubit3,
            CheckMethod::Method1,
            2000,
            &mut rng(1),
        )
        .unwrap();
        assert_eq!(est.z.mean, 1.0);
    }

    #[test]
    fn probe_rejects_qutrits() {
        let g = StateVector::<f64>::ghz(3, 3).unwrap();
        assert!(probe_attach(&g, 2, &ProbeParams::symmetric(0.3).unwrap()).is_err());
        let m = ChannelModel::Probe {
            params: ProbeParams::symmetric(0.3).unwrap(),
            targets: Targets::CheckSequence,
        };
        assert!(m.validate(Scheme::Qutrit3).is_err());
    }

    #[test]
    fn intercept_resend_z_collapses_triplet() {
        let g = StateVector::<f64>::ghz(3, 2).unwrap();
        let m = ChannelModel::InterceptResend {
            basis_policy: BasisPolicy::AlwaysZ,
            targets: Targets::CheckSequence,
        };
        let mut r = rng(3);
        for _ in 0..20 {
            let (s, acts) = m.intercept(Scheme::Qubit3, &g, &[2], &mut r).unwrap();
            let EveAction::Measured { outcome, .. } = acts[0] else { panic!() };
            let idx = if outcome == 0 { 0 } else { 7 };
            assert!((s.probabilities()[idx] - 1.0).abs() < 1e-12);
        }
        // Sequences without targets pass untouched.
        let (s, acts) = m.intercept(Scheme::Qubit3, &g, &[1], &mut r).unwrap();
        assert!(acts.is_empty());
        assert_eq!(s, g);
    }

    #[test]
    fn ideal_channel_detects_nothing() {
        for method in [CheckMethod::Method1, CheckMethod::Method2] {
            for scheme in [Scheme::Qubit3, Scheme::Qutrit3, Scheme::QubitP(4)] {
                let est = detection_probability(&ChannelModel::<f64>::Ideal, scheme, method, 500, &mut rng(2)).unwrap();
                assert_eq!(est.overall.mean, 0.0);
            }
        }
    }

    #[test]
    fn transmit_keeps_positions() {
        let g = StateVector::<f64>::ghz(3, 2).unwrap();
        let states = vec![g.clone(); 5];
        let (out, rec) = transmit(&states, Scheme::Qubit3, &[2], &ChannelModel::Ideal, &mut rng(0)).unwrap();
        assert_eq!(out, states);
        assert!(rec.is_empty());
        let m = ChannelModel::FakeResend {
            targets: Targets::CheckSequence,
        };
        let (out, rec) = transmit(&states, Scheme::Qubit3, &[2], &m, &mut rng(0)).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(rec.entries().iter().map(|e| e.position).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
        for s in &out {
            assert!(s.marginal(&[2]).unwrap()[0] > 1.0 - 1e-12);
        }
    }

    #[test]
    fn eve_learns_nothing_from_ideal_or_check_attack() {
        let ideal = eve_information(&ChannelModel::<f64>::Ideal, Scheme::Qubit3, 1000, &mut rng(4)).unwrap();
        assert_eq!(ideal.mean, 0.0);
        let ir = ChannelModel::<f64>::InterceptResend {
            basis_policy: BasisPolicy::AlwaysZ,
            targets: Targets::CheckSequence,
        };
        let est = eve_information(&ir, Scheme::Qubit3, 20_000, &mut rng(5)).unwrap();
        // Plug-in bias for a 2×8 table is about 7/(2n ln 2).
        assert!(est.mean < 0.002, "{est:?}");
    }

    #[test]
    fn grouped_interception_leaks_one_bit() {
        let m = ChannelModel::<f64>::GroupedInterception { group: [0, 1].into() };
        let est = eve_information(&m, Scheme::Qubit3, 20_000, &mut rng(6)).unwrap();
        assert!((est.mean - 1.0).abs() < 0.01, "{est:?}");
    }
}

//! Multi-step direct-communication session.
//!
//! One batch runs as a strict state machine:
//!
//! 1. Alice prepares `N` GHZ multiplets.
//! 2. The check particle (`p−1`) of every multiplet is sent to Bob.
//! 3. Bob checks a random subset of positions against Alice (method 1 or 2).
//! 4. Alice encodes: random decoy operations on sampling positions, the payload elsewhere.
//! 5. The remaining particles are sent one sequence at a time; every transmission is
//!    followed by a check on sampling positions before the next sequence leaves Alice.
//! 6. Bob measures each payload multiplet in the GHZ family and decodes.
//!
//! Batches repeat until the payload is delivered or a check aborts the session.

use std::collections::HashMap;

use num_complex::Complex;
use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{ChannelModel, EveRecord};
use crate::codec::{decode_index, encode_ops_for_message, index_of_message, GhzFamily, Message, Scheme};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::state::{fourier_basis, BellState, StateVector};
use crate::stats::Counts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckMethod {
    /// Alice measures each of her particles in Bob's basis.
    Method1,
    /// Alice measures her particles jointly in the GHZ/Bell basis on an x-check.
    Method2,
}

/// Shared measurement basis of a check: `Z` is computational, `X` the shift
/// eigenbasis (`σ_x` for qubits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CheckBasis {
    Z,
    X,
}

impl CheckBasis {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random_bool(0.5) {
            Self::X
        } else {
            Self::Z
        }
    }

    pub fn measure<T: Real, R: Rng + ?Sized>(
        self,
        state: &StateVector<T>,
        particle: usize,
        rng: &mut R,
    ) -> Result<(usize, StateVector<T>)> {
        let out = match self {
            Self::Z => state.measure_computational(particle, rng)?,
            Self::X => state.measure_fourier(particle, rng)?,
        };
        Ok((out.label, out.post_state))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SendPlan {
    /// One particle sequence per step.
    MultiStep,
    /// The listed message particles leave together in one step; the rest follow together.
    Grouped(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub batch_size: usize,
    pub scheme: Scheme,
    pub check_fraction: f64,
    pub check_method: CheckMethod,
    pub abort_threshold: f64,
    pub payload: Vec<Message>,
    pub seed: u64,
    pub send_plan: SendPlan,
}

impl ProtocolConfig {
    pub fn new(scheme: Scheme, batch_size: usize, seed: u64) -> Self {
        Self {
            batch_size,
            scheme,
            check_fraction: 0.1,
            check_method: CheckMethod::Method1,
            abort_threshold: 0.0,
            payload: Vec::new(),
            seed,
            send_plan: SendPlan::MultiStep,
        }
    }

    /// `⌈check_fraction · N⌉`; used for both the first check and the sampling set.
    pub fn check_count(&self) -> usize {
        ((self.check_fraction * self.batch_size as f64) - 1e-9).ceil().max(0.0) as usize
    }

    /// Positions per batch left for payload after the first check and the sampling set.
    pub fn payload_slots(&self) -> usize {
        self.batch_size.saturating_sub(2 * self.check_count())
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.check_fraction > 0.0 && self.check_fraction < 1.0) {
            return bad(format!("check_fraction must lie in (0, 1), got {}", self.check_fraction));
        }
        if self.check_count() < 1 {
            return bad("check_fraction · batch_size must be at least 1".into());
        }
        if self.payload_slots() < 1 {
            return bad(format!(
                "batch of {} leaves no payload positions after two check sets of {}",
                self.batch_size,
                self.check_count()
            ));
        }
        if !(0.0..=1.0).contains(&self.abort_threshold) {
            return bad(format!("abort_threshold must lie in [0, 1], got {}", self.abort_threshold));
        }
        for m in &self.payload {
            index_of_message(self.scheme, m)?;
        }
        transmission_plan(self.scheme, &self.send_plan)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceLabel {
    pub particles: Vec<usize>,
    pub name: String,
}

impl SequenceLabel {
    fn new(scheme: Scheme, particles: Vec<usize>) -> Self {
        let name = particles.iter().map(|&j| scheme.particle_name(j)).collect::<Vec<_>>().join("");
        Self { particles, name }
    }
}

/// Sequence order for a batch: the check particle first, then the message particles.
pub fn transmission_plan(scheme: Scheme, plan: &SendPlan) -> Result<Vec<SequenceLabel>> {
    let p = scheme.particles();
    let mut out = vec![SequenceLabel::new(scheme, vec![p - 1])];
    match plan {
        SendPlan::MultiStep => {
            out.extend((0..p - 1).rev().map(|j| SequenceLabel::new(scheme, vec![j])));
        }
        SendPlan::Grouped(group) => {
            let mut group = group.clone();
            group.sort_unstable();
            group.dedup();
            if group.is_empty() || group.iter().any(|&j| j >= p - 1) {
                return Err(Error::Config(format!(
                    "grouped send needs a non-empty subset of message particles 0..{}",
                    p - 2
                )));
            }
            let rest: Vec<usize> = (0..p - 1).filter(|j| !group.contains(j)).collect();
            out.push(SequenceLabel::new(scheme, group));
            if !rest.is_empty() {
                out.push(SequenceLabel::new(scheme, rest));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    PositionsAnnounce,
    BasisAnnounce,
    OutcomeAnnounce,
    OpAnnounce,
    AbortAnnounce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Announcement {
    PositionsAnnounce(Vec<usize>),
    BasisAnnounce(Vec<CheckBasis>),
    /// One entry per position; digits for single-particle measurements, a basis
    /// index for joint ones.
    OutcomeAnnounce(Vec<Vec<usize>>),
    OpAnnounce(Vec<String>),
    AbortAnnounce { stage: String, mismatch_rate: f64 },
}

impl Announcement {
    pub fn kind(&self) -> EventKind {
        match self {
            Self::PositionsAnnounce(_) => EventKind::PositionsAnnounce,
            Self::BasisAnnounce(_) => EventKind::BasisAnnounce,
            Self::OutcomeAnnounce(_) => EventKind::OutcomeAnnounce,
            Self::OpAnnounce(_) => EventKind::OpAnnounce,
            Self::AbortAnnounce { .. } => EventKind::AbortAnnounce,
        }
    }
}

/// Classical-channel event; the channel is authenticated and lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub batch: usize,
    pub actor: Actor,
    pub announcement: Announcement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step")]
pub enum Step {
    Prepare { batch: usize },
    Transmit { batch: usize, sequence: String },
    Check { batch: usize, sequence: String },
    Encode { batch: usize },
    Decode { batch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckKind {
    First,
    PostTransmission,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub batch: usize,
    /// Name of the sequence whose arrival the check follows.
    pub stage: String,
    pub kind: CheckKind,
    pub method: Option<CheckMethod>,
    pub total: Counts,
    pub z: Counts,
    pub x: Counts,
    /// Z-basis tallies split by the digit Alice observed on her first particle.
    pub z_branches: Vec<Counts>,
    pub skipped: bool,
}

impl CheckResult {
    fn new(batch: usize, stage: &str, kind: CheckKind, method: Option<CheckMethod>, dim: usize) -> Self {
        Self {
            batch,
            stage: stage.to_string(),
            kind,
            method,
            total: Counts::default(),
            z: Counts::default(),
            x: Counts::default(),
            z_branches: vec![Counts::default(); dim],
            skipped: false,
        }
    }

    pub fn mismatch_rate(&self) -> f64 {
        self.total.rate()
    }

    fn record(&mut self, basis: CheckBasis, branch: Option<usize>, mismatch: bool) {
        self.total.record(mismatch);
        match basis {
            CheckBasis::Z => {
                self.z.record(mismatch);
                if let Some(b) = branch {
                    self.z_branches[b].record(mismatch);
                }
            }
            CheckBasis::X => self.x.record(mismatch),
        }
    }
}

/// Joint basis Alice uses on an x-check under method 2, with the member expected
/// for each of Bob's outcomes.
#[derive(Debug, Clone)]
pub struct AliceCheckBasis<T> {
    family: GhzFamily<T>,
    expected: Vec<usize>,
}

impl<T: Real> AliceCheckBasis<T> {
    /// `None` when Alice holds a single particle (method 2 then coincides with method 1).
    pub fn for_scheme(scheme: Scheme) -> Result<Option<Self>> {
        let held = scheme.particles() - 1;
        let d = scheme.dim();
        if held < 2 {
            return Ok(None);
        }
        let family = GhzFamily::generalized(held, d)?;
        let fourier = fourier_basis::<T>(d);
        let weight = T::one() / T::from_usize_lossy(d).sqrt();
        let mut expected = Vec::with_capacity(d);
        for bob in &fourier {
            // ⟨k̃|_check applied to the GHZ state leaves Σ_n conj(f_k[n]) |n…n⟩ on Alice's side.
            let len = d.pow(held as u32);
            let step = (len - 1) / (d - 1);
            let mut amps = vec![Complex::new(T::zero(), T::zero()); len];
            for (n, f) in bob.iter().enumerate() {
                amps[n * step] = f.conj() * (weight / f.norm());
            }
            let cond = StateVector::from_amplitudes(d, held, amps)?;
            let k = family.index_of_state(&cond).ok_or_else(|| {
                Error::Consistency("conditional GHZ state missing from Alice's check basis".into())
            })?;
            expected.push(k);
        }
        Ok(Some(Self { family, expected }))
    }

    pub fn family(&self) -> &GhzFamily<T> {
        &self.family
    }
}

/// One checked position of the first check.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionCheck {
    pub basis: CheckBasis,
    pub bob: usize,
    pub alice: Vec<usize>,
    pub mismatch: bool,
    /// Alice's first digit on a z-check.
    pub branch: Option<usize>,
}

/// Bob measures the check particle, Alice her particles, and the correlation rule
/// for the untouched GHZ state is applied:
///
/// * z: every Alice digit equals Bob's digit;
/// * x, method 1: Bob's outcome plus Alice's outcomes sum to 0 mod d (for qubits, the
///   parity of Alice's `−` results is even iff Bob saw `+`);
/// * x, method 2: Alice's joint outcome is the GHZ state Bob's result leaves her with
///   (`Φ+` for `+`, `Φ−` for `−` on a qubit pair).
pub fn check_position<T: Real, R: Rng + ?Sized>(
    state: &StateVector<T>,
    scheme: Scheme,
    method: CheckMethod,
    basis: CheckBasis,
    alice_joint: Option<&AliceCheckBasis<T>>,
    rng: &mut R,
) -> Result<(PositionCheck, StateVector<T>)> {
    let d = scheme.dim();
    let check = scheme.check_particle();
    let (bob, mut state) = basis.measure(state, check, rng)?;
    let joint = method == CheckMethod::Method2 && basis == CheckBasis::X && alice_joint.is_some();
    if joint {
        let (alice_label, post, mismatch) = if d == 2 && check == 2 {
            let out = state.measure_bell((0, 1), rng)?;
            let want = if bob == 0 { BellState::PhiPlus } else { BellState::PhiMinus };
            let label = BellState::ALL.iter().position(|&b| b == out.label).unwrap_or(0);
            (label, out.post_state, out.label != want)
        } else {
            let aj = alice_joint.expect("checked above");
            let out = state.measure_family(aj.family(), rng)?;
            (out.label, out.post_state, out.label != aj.expected[bob])
        };
        let pc = PositionCheck {
            basis,
            bob,
            alice: vec![alice_label],
            mismatch,
            branch: None,
        };
        return Ok((pc, post));
    }
    let mut alice = Vec::with_capacity(check);
    for j in 0..check {
        let (digit, post) = basis.measure(&state, j, rng)?;
        alice.push(digit);
        state = post;
    }
    let mismatch = match basis {
        CheckBasis::Z => alice.iter().any(|&a| a != bob),
        CheckBasis::X => (alice.iter().sum::<usize>() + bob) % d != 0,
    };
    let branch = (basis == CheckBasis::Z).then(|| alice[0]);
    Ok((
        PositionCheck {
            basis,
            bob,
            alice,
            mismatch,
            branch,
        },
        state,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Fresh,
    FirstCheck,
    Sampling { op: usize, checked: bool },
    Payload,
    Padding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Prepared,
    AwaitingFirstCheck,
    Checked,
    Encoded,
    AwaitingPostCheck,
    Received,
    Decoded,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PositionCounts {
    pub first_check: usize,
    pub sampling: usize,
    pub sampling_checked: usize,
    pub payload: usize,
    pub padding: usize,
}

impl PositionCounts {
    pub fn total(&self) -> usize {
        self.first_check + self.sampling + self.payload + self.padding
    }

    fn merge(&mut self, o: &PositionCounts) {
        self.first_check += o.first_check;
        self.sampling += o.sampling;
        self.sampling_checked += o.sampling_checked;
        self.payload += o.payload;
        self.padding += o.padding;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchDelivery {
    /// Decoded payload messages in position order (padding excluded).
    pub messages: Vec<Message>,
    pub corrupted: Vec<usize>,
}

/// Per-batch session state shared by Alice and Bob.
#[derive(Debug)]
pub struct Batch<'a, T: Real> {
    config: &'a ProtocolConfig,
    family: &'a GhzFamily<T>,
    alice_joint: Option<&'a AliceCheckBasis<T>>,
    index: usize,
    slots: Vec<(StateVector<T>, Role)>,
    phase: Phase,
    plan: Vec<SequenceLabel>,
    sent: usize,
    support: HashMap<(usize, CheckBasis), Vec<bool>>,
    transcript: Vec<TranscriptEvent>,
    steps: Vec<Step>,
    checks: Vec<CheckResult>,
    warnings: Vec<String>,
    abort_stage: Option<String>,
}

impl<'a, T: Real> Batch<'a, T> {
    pub fn prepare(
        config: &'a ProtocolConfig,
        family: &'a GhzFamily<T>,
        alice_joint: Option<&'a AliceCheckBasis<T>>,
        index: usize,
    ) -> Result<Self> {
        let scheme = config.scheme;
        if family.scheme() != Some(scheme) {
            return Err(Error::Config("family does not match the configured scheme".into()));
        }
        let base = StateVector::ghz(scheme.particles(), scheme.dim())?;
        Ok(Self {
            config,
            family,
            alice_joint,
            index,
            slots: vec![(base, Role::Fresh); config.batch_size],
            phase: Phase::Prepared,
            plan: transmission_plan(scheme, &config.send_plan)?,
            sent: 0,
            support: HashMap::new(),
            transcript: Vec::new(),
            steps: vec![Step::Prepare { batch: index }],
            checks: Vec::new(),
            warnings: Vec::new(),
            abort_stage: None,
        })
    }

    fn expect_phase(&self, allowed: &[Phase], action: &str) -> Result<()> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(Error::ProtocolState(format!("cannot {action} in phase {:?}", self.phase)))
        }
    }

    fn announce(&mut self, actor: Actor, announcement: Announcement) {
        self.transcript.push(TranscriptEvent {
            batch: self.index,
            actor,
            announcement,
        });
    }

    pub fn is_aborted(&self) -> bool {
        self.phase == Phase::Aborted
    }

    pub fn state(&self, position: usize) -> Option<&StateVector<T>> {
        self.slots.get(position).map(|(s, _)| s)
    }

    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.transcript
    }

    pub fn checks(&self) -> &[CheckResult] {
        &self.checks
    }

    pub fn has_pending_sequence(&self) -> bool {
        self.sent < self.plan.len()
    }

    /// Positions holding recorded decoy operations that no check has consumed yet.
    pub fn unchecked_sampling(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| matches!(r, Role::Sampling { checked: false, .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Sends the next sequence of the plan through `channel`.
    pub fn transmit<R: Rng + ?Sized>(
        &mut self,
        channel: &ChannelModel<T>,
        eve_rng: &mut R,
        eve: &mut EveRecord,
    ) -> Result<SequenceLabel> {
        self.expect_phase(&[Phase::Prepared, Phase::Encoded], "transmit")?;
        let label = self.plan[self.sent].clone();
        let scheme = self.config.scheme;
        for (pos, (state, role)) in self.slots.iter_mut().enumerate() {
            if *role == Role::FirstCheck {
                continue;
            }
            let (next, actions) = channel.intercept(scheme, state, &label.particles, eve_rng)?;
            *state = next;
            for action in actions {
                eve.push(self.index, pos, action);
            }
        }
        self.sent += 1;
        self.phase = if self.phase == Phase::Prepared {
            Phase::AwaitingFirstCheck
        } else {
            Phase::AwaitingPostCheck
        };
        self.steps.push(Step::Transmit {
            batch: self.index,
            sequence: label.name.clone(),
        });
        Ok(label)
    }

    fn conclude_check(&mut self, result: CheckResult, checker: Actor, next: Phase) -> CheckResult {
        self.steps.push(Step::Check {
            batch: self.index,
            sequence: result.stage.clone(),
        });
        if !result.skipped && result.mismatch_rate() > self.config.abort_threshold {
            let stage = format!("batch {} after {}", self.index, result.stage);
            self.announce(checker, Announcement::AbortAnnounce {
                stage: stage.clone(),
                mismatch_rate: result.mismatch_rate(),
            });
            self.abort_stage = Some(stage);
            self.phase = Phase::Aborted;
        } else {
            self.phase = next;
        }
        self.checks.push(result.clone());
        result
    }

    /// First check with Bob's chosen positions and bases.
    pub fn security_check<R: Rng + ?Sized>(
        &mut self,
        method: CheckMethod,
        positions: &[usize],
        bases: &[CheckBasis],
        rng: &mut R,
    ) -> Result<CheckResult> {
        self.expect_phase(&[Phase::AwaitingFirstCheck], "run the first check")?;
        if positions.len() != bases.len() {
            return Err(Error::ProtocolState("one basis per checked position is required".into()));
        }
        for (k, &pos) in positions.iter().enumerate() {
            match self.slots.get(pos) {
                Some((_, Role::Fresh)) if !positions[..k].contains(&pos) => {}
                Some(_) => {
                    return Err(Error::ProtocolState(format!("position {pos} is already consumed")));
                }
                None => {
                    return Err(Error::ProtocolState(format!("position {pos} is outside the batch")));
                }
            }
        }
        let scheme = self.config.scheme;
        let stage = self.plan[0].name.clone();
        let mut result = CheckResult::new(self.index, &stage, CheckKind::First, Some(method), scheme.dim());
        let mut bob_out = Vec::with_capacity(positions.len());
        let mut alice_out = Vec::with_capacity(positions.len());
        for (&pos, &basis) in positions.iter().zip(bases) {
            let (pc, post) = check_position(&self.slots[pos].0, scheme, method, basis, self.alice_joint, rng)?;
            self.slots[pos] = (post, Role::FirstCheck);
            result.record(basis, pc.branch, pc.mismatch);
            bob_out.push(vec![pc.bob]);
            alice_out.push(pc.alice);
        }
        self.announce(Actor::Bob, Announcement::PositionsAnnounce(positions.to_vec()));
        self.announce(Actor::Bob, Announcement::BasisAnnounce(bases.to_vec()));
        self.announce(Actor::Bob, Announcement::OutcomeAnnounce(bob_out));
        self.announce(Actor::Alice, Announcement::OutcomeAnnounce(alice_out));
        Ok(self.conclude_check(result, Actor::Bob, Phase::Checked))
    }

    pub fn security_check_method1<R: Rng + ?Sized>(
        &mut self,
        positions: &[usize],
        bases: &[CheckBasis],
        rng: &mut R,
    ) -> Result<CheckResult> {
        self.security_check(CheckMethod::Method1, positions, bases, rng)
    }

    pub fn security_check_method2<R: Rng + ?Sized>(
        &mut self,
        positions: &[usize],
        bases: &[CheckBasis],
        rng: &mut R,
    ) -> Result<CheckResult> {
        self.security_check(CheckMethod::Method2, positions, bases, rng)
    }

    /// Bob picks `⌈check_fraction·N⌉` positions and a random basis for each.
    pub fn run_first_check<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<CheckResult> {
        let n = self.slots.len();
        let mut positions = index::sample(rng, n, self.config.check_count().min(n)).into_vec();
        positions.sort_unstable();
        let bases: Vec<CheckBasis> = positions.iter().map(|_| CheckBasis::random(rng)).collect();
        self.security_check(self.config.check_method, &positions, &bases, rng)
    }

    /// Encodes with explicit `(position, family index)` decoys; the remaining
    /// positions take `payload` in order, padded with the zero message.
    /// Returns how many payload messages were consumed.
    pub fn alice_encode_with(&mut self, sampling: &[(usize, usize)], payload: &[Message]) -> Result<usize> {
        self.expect_phase(&[Phase::Checked], "encode")?;
        let scheme = self.config.scheme;
        for (k, &(pos, op)) in sampling.iter().enumerate() {
            if op >= scheme.family_size() {
                return Err(Error::ProtocolState(format!("decoy operation {op} out of range")));
            }
            match self.slots.get(pos) {
                Some((_, Role::Fresh)) if !sampling[..k].iter().any(|&(p, _)| p == pos) => {}
                _ => return Err(Error::ProtocolState(format!("position {pos} cannot hold a decoy"))),
            }
        }
        for &(pos, op) in sampling {
            let ops = encode_ops_for_message(scheme, &decode_index(scheme, op)?)?;
            let state = ops.apply(&self.slots[pos].0)?;
            self.slots[pos] = (state, Role::Sampling { op, checked: false });
        }
        let mut used = 0;
        let mut padded = 0;
        for slot in self.slots.iter_mut().filter(|(_, r)| *r == Role::Fresh) {
            let (msg, role) = match payload.get(used) {
                Some(m) => {
                    used += 1;
                    (m.clone(), Role::Payload)
                }
                None => {
                    padded += 1;
                    (Message::zero(scheme.message_len()), Role::Padding)
                }
            };
            let state = encode_ops_for_message(scheme, &msg)?.apply(&slot.0)?;
            *slot = (state, role);
        }
        if padded > 0 {
            self.warnings.push(format!(
                "batch {}: payload exhausted, {padded} positions padded with the zero message",
                self.index
            ));
        }
        self.phase = Phase::Encoded;
        self.steps.push(Step::Encode { batch: self.index });
        Ok(used)
    }

    /// Random decoy positions (`⌈check_fraction·N⌉`) with uniformly random operations.
    pub fn alice_encode<R: Rng + ?Sized>(&mut self, payload: &[Message], rng: &mut R) -> Result<usize> {
        self.expect_phase(&[Phase::Checked], "encode")?;
        let fresh: Vec<usize> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| *r == Role::Fresh)
            .map(|(i, _)| i)
            .collect();
        let count = self.config.check_count().min(fresh.len());
        let mut picks = index::sample(rng, fresh.len(), count).into_vec();
        picks.sort_unstable();
        let family_size = self.config.scheme.family_size();
        let sampling: Vec<(usize, usize)> = picks
            .into_iter()
            .map(|k| (fresh[k], rng.random_range(0..family_size)))
            .collect();
        self.alice_encode_with(&sampling, payload)
    }

    fn support_of(&mut self, op: usize, basis: CheckBasis) -> Result<&Vec<bool>> {
        if !self.support.contains_key(&(op, basis)) {
            let member = &self.family.members()[op];
            let d = member.dim();
            let mut state = member.clone();
            if basis == CheckBasis::X {
                // Rows ⟨k̃| turn amplitudes into shift-eigenbasis amplitudes.
                let rows: Vec<Vec<Complex<T>>> = fourier_basis::<T>(d)
                    .into_iter()
                    .map(|v| v.into_iter().map(|c| c.conj()).collect())
                    .collect();
                for j in 0..member.particles() {
                    state = state.apply_matrix(j, &rows)?;
                }
            }
            let tol = T::span_tol();
            let mask = state.probabilities().into_iter().map(|p| p > tol).collect();
            self.support.insert((op, basis), mask);
        }
        Ok(&self.support[&(op, basis)])
    }

    /// Check after an encoded sequence arrives: Alice reveals the decoy operations at
    /// the chosen positions, every particle is measured in the announced basis, and a
    /// joint outcome outside the support of the known state counts as a mismatch.
    pub fn post_transmission_check_with<R: Rng + ?Sized>(
        &mut self,
        positions: &[usize],
        bases: &[CheckBasis],
        rng: &mut R,
    ) -> Result<CheckResult> {
        self.expect_phase(&[Phase::AwaitingPostCheck], "run a post-transmission check")?;
        if positions.len() != bases.len() {
            return Err(Error::ProtocolState("one basis per checked position is required".into()));
        }
        let scheme = self.config.scheme;
        let stage = self.plan[self.sent - 1].name.clone();
        let next = if self.has_pending_sequence() {
            Phase::Encoded
        } else {
            Phase::Received
        };
        let mut result = CheckResult::new(self.index, &stage, CheckKind::PostTransmission, None, scheme.dim());
        if positions.is_empty() {
            result.skipped = true;
            self.warnings.push(format!(
                "batch {}: no sampling positions left for the check after {stage}",
                self.index
            ));
            return Ok(self.conclude_check(result, Actor::Alice, next));
        }
        let mut ops = Vec::with_capacity(positions.len());
        for (k, &pos) in positions.iter().enumerate() {
            match self.slots.get(pos) {
                Some((_, Role::Sampling { op, checked: false })) if !positions[..k].contains(&pos) => ops.push(*op),
                _ => {
                    return Err(Error::ProtocolState(format!(
                        "position {pos} is not an unconsumed sampling position"
                    )))
                }
            }
        }
        let d = scheme.dim();
        let mut outcomes = Vec::with_capacity(positions.len());
        for ((&pos, &basis), &op) in positions.iter().zip(bases).zip(&ops) {
            let mut state = self.slots[pos].0.clone();
            let mut digits = Vec::with_capacity(scheme.particles());
            for j in 0..scheme.particles() {
                let (digit, post) = basis.measure(&state, j, rng)?;
                digits.push(digit);
                state = post;
            }
            let joint = digits.iter().fold(0, |acc, &x| acc * d + x);
            let mismatch = !self.support_of(op, basis)?[joint];
            let branch = (basis == CheckBasis::Z).then(|| digits[0]);
            result.record(basis, branch, mismatch);
            self.slots[pos] = (state, Role::Sampling { op, checked: true });
            outcomes.push(digits);
        }
        let op_labels = ops
            .iter()
            .map(|&op| {
                decode_index(scheme, op)
                    .and_then(|m| encode_ops_for_message(scheme, &m))
                    .map(|o| o.to_string())
            })
            .collect::<Result<Vec<_>>>()?;
        self.announce(Actor::Alice, Announcement::PositionsAnnounce(positions.to_vec()));
        self.announce(Actor::Alice, Announcement::OpAnnounce(op_labels));
        self.announce(Actor::Alice, Announcement::BasisAnnounce(bases.to_vec()));
        self.announce(Actor::Bob, Announcement::OutcomeAnnounce(outcomes));
        Ok(self.conclude_check(result, Actor::Alice, next))
    }

    /// Consumes half of the unchecked sampling positions (at least one).
    pub fn post_transmission_check<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<CheckResult> {
        let pool = self.unchecked_sampling();
        let count = if pool.is_empty() { 0 } else { (pool.len() / 2).max(1) };
        let mut positions: Vec<usize> = index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        positions.sort_unstable();
        let bases: Vec<CheckBasis> = positions.iter().map(|_| CheckBasis::random(rng)).collect();
        self.post_transmission_check_with(&positions, &bases, rng)
    }

    /// Bob's GHZ-family measurement on every payload and padding position.
    pub fn bob_decode<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<BatchDelivery> {
        self.expect_phase(&[Phase::Received], "decode")?;
        let mut messages = Vec::new();
        let mut corrupted = Vec::new();
        for pos in 0..self.slots.len() {
            let role = self.slots[pos].1;
            if !matches!(role, Role::Payload | Role::Padding) {
                continue;
            }
            match self.slots[pos].0.measure_family(self.family, rng) {
                Ok(out) => {
                    if role == Role::Payload {
                        messages.push(self.family.message_of_index(out.label)?);
                    }
                    self.slots[pos].0 = out.post_state;
                }
                Err(Error::OutsideSpan(_)) => corrupted.push(pos),
                Err(e) => return Err(e),
            }
        }
        self.phase = Phase::Decoded;
        self.steps.push(Step::Decode { batch: self.index });
        Ok(BatchDelivery { messages, corrupted })
    }

    pub fn position_counts(&self) -> PositionCounts {
        let mut c = PositionCounts::default();
        for (_, role) in &self.slots {
            match role {
                Role::FirstCheck => c.first_check += 1,
                Role::Sampling { checked, .. } => {
                    c.sampling += 1;
                    c.sampling_checked += usize::from(*checked);
                }
                Role::Payload => c.payload += 1,
                Role::Padding => c.padding += 1,
                Role::Fresh => {}
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub seed: u64,
    pub scheme: Scheme,
    pub check_method: CheckMethod,
    pub batch_size: usize,
    pub batches: usize,
    pub payload_len: usize,
    pub delivered: Vec<Message>,
    pub aborted: bool,
    pub abort_stage: Option<String>,
    pub checks: Vec<CheckResult>,
    pub throughput_bits: f64,
    pub positions: PositionCounts,
    /// Delivered messages that differ from what Alice encoded.
    pub message_errors: usize,
    /// `(batch, position)` pairs whose decode measurement fell outside the family span.
    pub corrupted_positions: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
    pub steps: Vec<Step>,
    pub transcript: Vec<TranscriptEvent>,
}

/// Runs a whole session; Eve's records are discarded.
pub fn run_session<T: Real>(config: &ProtocolConfig, channel: &ChannelModel<T>) -> Result<SessionReport> {
    Ok(run_session_with_eve(config, channel)?.0)
}

/// Honest parties draw from stream 0 of a ChaCha8 generator seeded with
/// `config.seed`; the channel draws from stream 1.
pub fn run_session_with_eve<T: Real>(
    config: &ProtocolConfig,
    channel: &ChannelModel<T>,
) -> Result<(SessionReport, EveRecord)> {
    config.validate()?;
    channel.validate(config.scheme)?;
    let scheme = config.scheme;
    let family = GhzFamily::<T>::build(scheme)?;
    let alice_joint = AliceCheckBasis::<T>::for_scheme(scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eve_rng = ChaCha8Rng::seed_from_u64(config.seed);
    eve_rng.set_stream(1);
    let mut eve = EveRecord::default();

    let mut report = SessionReport {
        seed: config.seed,
        scheme,
        check_method: config.check_method,
        batch_size: config.batch_size,
        batches: 0,
        payload_len: config.payload.len(),
        delivered: Vec::new(),
        aborted: false,
        abort_stage: None,
        checks: Vec::new(),
        throughput_bits: 0.0,
        positions: PositionCounts::default(),
        message_errors: 0,
        corrupted_positions: Vec::new(),
        warnings: Vec::new(),
        steps: Vec::new(),
        transcript: Vec::new(),
    };

    let mut next = 0;
    loop {
        let mut batch = Batch::prepare(config, &family, alice_joint.as_ref(), report.batches)?;
        let delivery = drive_batch(&mut batch, &config.payload[next..], channel, &mut rng, &mut eve_rng, &mut eve)?;
        report.batches += 1;
        report.positions.merge(&batch.position_counts());
        report.checks.append(&mut batch.checks);
        report.warnings.append(&mut batch.warnings);
        report.steps.append(&mut batch.steps);
        report.transcript.append(&mut batch.transcript);
        match delivery {
            None => {
                report.aborted = true;
                report.abort_stage = batch.abort_stage.take();
                break;
            }
            Some(d) => {
                let sent = &config.payload[next..next + d.messages.len()];
                report.message_errors += sent.iter().zip(&d.messages).filter(|(a, b)| a != b).count();
                report
                    .corrupted_positions
                    .extend(d.corrupted.iter().map(|&p| (batch.index, p)));
                next += d.messages.len();
                report.delivered.extend(d.messages);
            }
        }
        if next >= config.payload.len() {
            break;
        }
    }
    report.throughput_bits = report.delivered.len() as f64 * scheme.capacity_bits();
    Ok((report, eve))
}

fn drive_batch<T: Real, R: Rng>(
    batch: &mut Batch<'_, T>,
    payload: &[Message],
    channel: &ChannelModel<T>,
    rng: &mut R,
    eve_rng: &mut R,
    eve: &mut EveRecord,
) -> Result<Option<BatchDelivery>> {
    batch.transmit(channel, eve_rng, eve)?;
    batch.run_first_check(rng)?;
    if batch.is_aborted() {
        return Ok(None);
    }
    batch.alice_encode(payload, rng)?;
    while batch.has_pending_sequence() {
        batch.transmit(channel, eve_rng, eve)?;
        batch.post_transmission_check(rng)?;
        if batch.is_aborted() {
            return Ok(None);
        }
    }
    batch.bob_decode(rng).map(Some)
}

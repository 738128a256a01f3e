//! Executes an [`ExperimentSpec`].

use std::collections::BTreeSet;
use std::time::Instant;

use qsdc_core::adversary::{detection_probability, eve_information, ChannelModel};
use qsdc_core::codec::{all_messages, decode_index, encode_ops_for_message, GhzFamily};
use qsdc_core::leakage::grouped_leakage;
use qsdc_core::protocol::{run_session, ProtocolConfig};
use qsdc_core::state::StateVector;
use qsdc_core::stats::{Counts, Estimate};
use qsdc_core::Scheme;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::report::{
    FamilyCheck, LeakageRow, Outcome, Report, RunSummary, SweepRow, TrialDetail, TrialRow, SCHEMA_VERSION,
    TOOL_VERSION,
};
use crate::seed::derive_trial_seed;
use crate::spec::{AttackKind, EveBasis, ExperimentSpec, Mode};

/// ChaCha stream used for drawing a trial's payload (0 and 1 belong to the session).
const PAYLOAD_STREAM: u64 = 2;
/// ChaCha stream of the master seed used for mode-level sampling.
const EXPERIMENT_STREAM: u64 = 3;

fn experiment_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EXPERIMENT_STREAM);
    rng
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Report> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.unwrap_or(0))
        .build()
        .map_err(|e| SimError::usage("jobs", e.to_string()))?;
    let result = pool.install(|| match spec.mode {
        Mode::Run => run_sessions(spec).map(Outcome::Run),
        Mode::AttackSweep => attack_sweep(spec).map(|rows| Outcome::AttackSweep { rows }),
        Mode::FamilyVerify => family_verify(spec.protocol.scheme, spec.seed).map(Outcome::FamilyVerify),
        Mode::LeakageTable => leakage_table(spec.protocol.scheme).map(|rows| Outcome::LeakageTable {
            scheme: spec.protocol.scheme,
            rows,
        }),
    })?;
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        mode: spec.mode,
        seed: spec.seed,
        seed_generated: spec.seed_generated,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        spec: spec.clone(),
        result,
    })
}

fn trial_config(spec: &ExperimentSpec, seed: u64) -> Result<ProtocolConfig> {
    let scheme = spec.protocol.scheme;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PAYLOAD_STREAM);
    let mut cfg = spec.protocol.clone();
    cfg.seed = seed;
    cfg.payload = (0..spec.payload_len)
        .map(|_| decode_index(scheme, rng.random_range(0..scheme.family_size())))
        .collect::<qsdc_core::Result<_>>()?;
    Ok(cfg)
}

/// Row, optional detail, per-check rates, z counts and x counts of one trial.
type TrialOutcome = (TrialRow, Option<TrialDetail>, Vec<f64>, Counts, Counts);

fn run_sessions(spec: &ExperimentSpec) -> Result<RunSummary> {
    let channel = spec.attack.channel()?;
    let sessions: Vec<TrialOutcome> = (0..spec.trials)
        .into_par_iter()
        .map(|index| -> Result<_> {
            let seed = derive_trial_seed(spec.seed, index as u64);
            let rep = run_session(&trial_config(spec, seed)?, &channel)?;
            let mut total = Counts::default();
            let (mut z, mut x) = (Counts::default(), Counts::default());
            let mut rates = Vec::new();
            for c in &rep.checks {
                total.merge(&c.total);
                z.merge(&c.z);
                x.merge(&c.x);
                if !c.skipped {
                    rates.push(c.mismatch_rate());
                }
            }
            let row = TrialRow {
                index,
                seed,
                aborted: rep.aborted,
                abort_stage: rep.abort_stage.clone(),
                batches: rep.batches,
                delivered: rep.delivered.len(),
                delivered_bits: rep.throughput_bits,
                checked_positions: total.samples,
                mismatches: total.mismatches,
                message_errors: rep.message_errors,
                corrupted_positions: rep.corrupted_positions.len(),
            };
            let detail = spec.verbose_trials.then(|| TrialDetail {
                row: row.clone(),
                session: rep,
            });
            Ok((row, detail, rates, z, x))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(sessions.len());
    let mut per_trial = Vec::new();
    let mut check_rates = Vec::new();
    let (mut z, mut x) = (Counts::default(), Counts::default());
    for (row, detail, rates, zc, xc) in sessions {
        check_rates.extend(rates);
        z.merge(&zc);
        x.merge(&xc);
        per_trial.extend(detail);
        rows.push(row);
    }
    let aborted = rows.iter().filter(|r| r.aborted).count();
    let checked: u64 = rows.iter().map(|r| r.checked_positions).sum();
    let mismatches: u64 = rows.iter().map(|r| r.mismatches).sum();
    let bits: Vec<f64> = rows.iter().map(|r| r.delivered_bits).collect();
    let eve = eve_information(&channel, spec.protocol.scheme, spec.trials, &mut experiment_rng(spec.seed))?;
    Ok(RunSummary {
        trials: spec.trials,
        aborted,
        abort_rate: Estimate::proportion(aborted as u64, spec.trials as u64),
        check_mismatch_rate: Estimate::from_samples(&check_rates),
        position_mismatch_rate: Estimate::proportion(mismatches, checked),
        z_mismatch_rate: z.estimate(),
        x_mismatch_rate: x.estimate(),
        delivered_bits: Estimate::from_samples(&bits),
        delivered_bits_total: bits.iter().sum(),
        message_errors: rows.iter().map(|r| r.message_errors).sum(),
        corrupted_positions: rows.iter().map(|r| r.corrupted_positions).sum(),
        eve_information: eve,
        per_trial,
        rows,
    })
}

fn attack_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    let attack = &spec.attack;
    let points: Vec<(String, ChannelModel<f64>)> = match attack.kind {
        AttackKind::Probe => spec
            .betas
            .iter()
            .map(|&b| Ok((b.to_string(), attack.channel_with_beta(b)?)))
            .collect::<qsdc_core::Result<_>>()?,
        AttackKind::InterceptResend => [EveBasis::Z, EveBasis::X, EveBasis::Random]
            .into_iter()
            .map(|basis| {
                let mut a = attack.clone();
                a.eve_basis = basis;
                let name = match basis {
                    EveBasis::Z => "z",
                    EveBasis::X => "x",
                    EveBasis::Random => "random",
                };
                Ok((name.to_string(), a.channel()?))
            })
            .collect::<qsdc_core::Result<_>>()?,
        _ => vec![("-".to_string(), attack.channel()?)],
    };
    points
        .into_par_iter()
        .enumerate()
        .map(|(i, (parameter, channel))| {
            let seed = derive_trial_seed(spec.seed, i as u64);
            let est = detection_probability(
                &channel,
                spec.protocol.scheme,
                spec.protocol.check_method,
                spec.trials,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )?;
            Ok(SweepRow {
                attack: channel.label().to_string(),
                parameter,
                detection_rate: est.overall.mean,
                stderr: est.overall.stderr,
                trials: spec.trials,
                seed,
                z_mismatch_rate: est.z.mean,
                z_stderr: est.z.stderr,
                x_mismatch_rate: est.x.mean,
                x_stderr: est.x.stderr,
            })
        })
        .collect()
}

pub fn family_verify(scheme: Scheme, seed: u64) -> Result<FamilyCheck> {
    let family = GhzFamily::<f64>::build(scheme)?;
    let (off, diag) = family.gram_defect();
    let ghz = StateVector::<f64>::ghz(scheme.particles(), scheme.dim())?;
    let mut rng = experiment_rng(seed);
    let mut seen = BTreeSet::new();
    let mut failures = 0;
    for m in all_messages(scheme) {
        let state = encode_ops_for_message(scheme, &m)?.apply(&ghz)?;
        match family.index_of_state(&state) {
            Some(k) => {
                seen.insert(k);
            }
            None => failures += 1,
        }
        let out = state.measure_family(&family, &mut rng)?;
        if family.message_of_index(out.label)? != m {
            failures += 1;
        }
    }
    let tol = 1e-12;
    Ok(FamilyCheck {
        scheme,
        members: family.len(),
        expected_members: scheme.family_size(),
        max_off_diagonal: off,
        max_diagonal_defect: diag,
        orthonormal: off < tol && diag < tol,
        bijective: failures == 0 && seen.len() == scheme.family_size(),
        round_trip_failures: failures,
    })
}

pub fn leakage_table(scheme: Scheme) -> Result<Vec<LeakageRow>> {
    let message: Vec<usize> = scheme.message_particles().collect();
    let mut subsets: Vec<Vec<usize>> = (0..1u64 << message.len())
        .map(|mask| message.iter().copied().filter(|&j| mask >> j & 1 == 1).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_par_iter()
        .map(|set| {
            let bits = grouped_leakage(scheme, &set.iter().copied().collect())?;
            let particles = set.iter().map(|&j| scheme.particle_name(j)).collect::<Vec<_>>().join(",");
            Ok(LeakageRow {
                particles,
                size: set.len(),
                bits,
            })
        })
        .collect()
}

//! Acceptance gate. Each test prints one `acceptance criterion N [PASS|FAIL]` line
//! to the real stderr (bypassing libtest capture) and then asserts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use num_complex::Complex;
use qsdc_core::adversary::{detection_probability, transmit, BasisPolicy, ProbeParams, Targets};
use qsdc_core::codec::{all_messages, encode_ops_for_message, index_of_message, GhzFamily};
use qsdc_core::leakage::grouped_leakage;
use qsdc_core::protocol::{run_session, transmission_plan, CheckMethod, ProtocolConfig, SendPlan};
use qsdc_core::state::StateVector;
use qsdc_core::{Channel, Message, Scheme};
use qsdc_sim::spec::Format;
use qsdc_sim::{parse_spec, render, run_experiment};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn report(n: u32, name: &str, started: Instant, budget: Option<Duration>, outcome: Outcome) {
    let elapsed = started.elapsed();
    let outcome = match (outcome, budget) {
        (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
        (o, _) => o,
    };
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!("acceptance criterion {n} [{tag}] {name}: {detail} ({elapsed:.2?})\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(e) = outcome {
        panic!("criterion {n} failed: {e}");
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The eight Qubit3 family states, written out by hand as (plus term, minus-or-plus term, sign).
/// Row k belongs to the message whose binary value is k.
const QUBIT3_LIST: [(usize, usize, f64); 8] = [
    (0b000, 0b111, 1.0),
    (0b000, 0b111, -1.0),
    (0b100, 0b011, 1.0),
    (0b100, 0b011, -1.0),
    (0b010, 0b101, 1.0),
    (0b010, 0b101, -1.0),
    (0b110, 0b001, 1.0),
    (0b110, 0b001, -1.0),
];

fn listed_state(k: usize) -> [f64; 8] {
    let (a, b, s) = QUBIT3_LIST[k];
    let mut v = [0.0; 8];
    v[a] = H;
    v[b] = s * H;
    v
}

#[test]
fn criterion_1_qubit3_family_matches_hand_list() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let ghz = StateVector::<f64>::ghz(3, 2).map_err(|e| e.to_string())?;
        let mut worst_match = 0.0f64;
        let mut worst_cross = 0.0f64;
        for msg in all_messages(Scheme::Qubit3) {
            let k = index_of_message(Scheme::Qubit3, &msg).map_err(|e| e.to_string())?;
            let encoded = encode_ops_for_message(Scheme::Qubit3, &msg)
                .and_then(|op| op.apply(&ghz))
                .map_err(|e| e.to_string())?;
            for j in 0..8 {
                let listed = listed_state(j);
                let inner: Complex<f64> = encoded
                    .amplitudes()
                    .iter()
                    .zip(listed)
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                if j == k {
                    worst_match = worst_match.max((inner.norm() - 1.0).abs());
                } else {
                    worst_cross = worst_cross.max(inner.norm());
                }
            }
        }
        check(worst_match <= 1e-12 && worst_cross <= 1e-12, || {
            format!("matched defect {worst_match:e}, cross overlap {worst_cross:e}")
        })?;
        Ok(format!("max |1-|<m|l>|| = {worst_match:e}, max cross = {worst_cross:e}"))
    })();
    report(1, "Qubit3 family equals hand list", t, Some(Duration::from_secs(1)), outcome);
}

#[test]
fn criterion_2_exhaustive_round_trip() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut total = 0;
        let mut failures = Vec::new();
        let schemes = [
            Scheme::Qubit3,
            Scheme::QubitP(4),
            Scheme::QubitP(5),
            Scheme::QubitP(6),
            Scheme::Qutrit3,
        ];
        for scheme in schemes {
            let family = GhzFamily::<f64>::build(scheme).map_err(|e| e.to_string())?;
            let ghz = StateVector::<f64>::ghz(scheme.particles(), scheme.dim()).map_err(|e| e.to_string())?;
            let plan = transmission_plan(scheme, &SendPlan::MultiStep).map_err(|e| e.to_string())?;
            let mut count = 0;
            for msg in all_messages(scheme) {
                let encoded = encode_ops_for_message(scheme, &msg)
                    .and_then(|op| op.apply(&ghz))
                    .map_err(|e| e.to_string())?;
                let mut states = vec![encoded];
                for seq in &plan {
                    states = transmit(&states, scheme, &seq.particles, &Channel::Ideal, &mut rng)
                        .map_err(|e| e.to_string())?
                        .0;
                }
                let out = states[0].measure_family(&family, &mut rng).map_err(|e| e.to_string())?;
                let decoded = family.message_of_index(out.label).map_err(|e| e.to_string())?;
                if decoded != msg {
                    failures.push(format!("{scheme} {msg:?} -> {decoded:?}"));
                }
                count += 1;
            }
            check(count == scheme.family_size(), || format!("{scheme}: {count} messages"))?;
            total += count;
        }
        check(failures.is_empty(), || format!("{} failures: {:?}", failures.len(), failures))?;
        Ok(format!("{total} messages over 5 schemes, 0 failures"))
    })();
    report(2, "exhaustive round trip", t, Some(Duration::from_secs(10)), outcome);
}

#[test]
fn criterion_3_capacity_accounting() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let mut lines = Vec::new();
        for (scheme, bits) in [
            (Scheme::Qubit3, 3usize),
            (Scheme::QubitP(2), 2),
            (Scheme::QubitP(4), 4),
            (Scheme::QubitP(5), 5),
            (Scheme::QubitP(6), 6),
        ] {
            for method in [CheckMethod::Method1, CheckMethod::Method2] {
                let mut cfg = ProtocolConfig::new(scheme, 60, 3);
                cfg.check_method = method;
                let n = 2 * cfg.payload_slots() + 5;
                cfg.payload = all_messages(scheme).cycle().take(n).collect();
                let rep = run_session(&cfg, &Channel::Ideal).map_err(|e| e.to_string())?;
                let counted: usize = rep.delivered.iter().map(Message::len).sum();
                check(
                    !rep.aborted
                        && rep.delivered == cfg.payload
                        && rep.positions.payload == n
                        && counted == n * bits
                        && rep.throughput_bits == (n * bits) as f64,
                    || {
                        format!(
                            "{scheme} {method:?}: payload positions {}, bits {}, expected {}",
                            rep.positions.payload,
                            rep.throughput_bits,
                            n * bits
                        )
                    },
                )?;
                lines.push(format!("{scheme}:{}", rep.throughput_bits));
            }
        }
        Ok(format!("bits per session {}", lines.join(" ")))
    })();
    report(3, "capacity accounting", t, None, outcome);
}

#[test]
fn criterion_4_no_false_alarms() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let mut sessions = 0;
        let mut aborts = 0;
        for method in [CheckMethod::Method1, CheckMethod::Method2] {
            for seed in 0..1000u64 {
                let scheme = [Scheme::Qubit3, Scheme::QubitP(4), Scheme::Qutrit3][(seed % 3) as usize];
                let mut cfg = ProtocolConfig::new(scheme, 40, seed);
                cfg.check_method = method;
                cfg.abort_threshold = 0.0;
                cfg.payload = all_messages(scheme).cycle().take(cfg.payload_slots()).collect();
                let rep = run_session(&cfg, &Channel::Ideal).map_err(|e| e.to_string())?;
                sessions += 1;
                if rep.aborted || rep.message_errors != 0 {
                    aborts += 1;
                }
            }
        }
        check(aborts == 0, || format!("{aborts} of {sessions} ideal sessions aborted or misdecoded"))?;
        Ok(format!("{sessions} ideal sessions (1000 per method), 0 aborts"))
    })();
    report(4, "zero false alarms", t, None, outcome);
}

/// Exact mismatch probability of a single checked triplet when Eve measures C and
/// resends her outcome, enumerating Eve's basis, her collapse, Bob's basis and
/// every joint outcome. Amplitudes are real so probabilities are squares.
fn intercept_resend_oracle(eve_bases: &[bool]) -> f64 {
    fn rotate(v: &[f64; 8], qubit: usize) -> [f64; 8] {
        let bit = 4 >> qubit;
        let mut out = [0.0; 8];
        for i in 0..8 {
            out[i] = if i & bit == 0 {
                H * (v[i] + v[i | bit])
            } else {
                H * (v[i ^ bit] - v[i])
            };
        }
        out
    }
    let ghz = listed_state(0);
    let mut total = 0.0;
    for &eve_x in eve_bases {
        let frame = if eve_x { rotate(&ghz, 2) } else { ghz };
        for collapse in 0..2 {
            let mut post = [0.0; 8];
            for i in (0..8).filter(|i| i & 1 == collapse) {
                post[i] = frame[i];
            }
            let p: f64 = post.iter().map(|a| a * a).sum();
            post.iter_mut().for_each(|a| *a /= p.sqrt());
            let resent = if eve_x { rotate(&post, 2) } else { post };
            for bob_x in [false, true] {
                let seen = if bob_x {
                    rotate(&rotate(&rotate(&resent, 0), 1), 2)
                } else {
                    resent
                };
                for (i, a) in seen.iter().enumerate() {
                    let digits = [i >> 2 & 1, i >> 1 & 1, i & 1];
                    let wrong = if bob_x {
                        digits.iter().sum::<usize>() % 2 != 0
                    } else {
                        digits[0] != digits[2] || digits[1] != digits[2]
                    };
                    if wrong {
                        total += p * a * a * 0.5 / eve_bases.len() as f64;
                    }
                }
            }
        }
    }
    total
}

#[test]
fn criterion_5_intercept_resend_detection() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let oracle_z = intercept_resend_oracle(&[false]);
        let oracle_random = intercept_resend_oracle(&[false, true]);
        check((oracle_z - 0.25).abs() < 1e-12 && (oracle_random - 0.25).abs() < 1e-12, || {
            format!("oracle gives {oracle_z} / {oracle_random}")
        })?;
        let mut parts = vec![format!("oracle {oracle_z:.4}/{oracle_random:.4}")];
        for (policy, oracle, seed) in [
            (BasisPolicy::AlwaysZ, oracle_z, 51),
            (BasisPolicy::RandomZX, oracle_random, 52),
        ] {
            let model = Channel::InterceptResend {
                basis_policy: policy,
                targets: Targets::CheckSequence,
            };
            let est = detection_probability(
                &model,
                Scheme::Qubit3,
                CheckMethod::Method1,
                100_000,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )
            .map_err(|e| e.to_string())?;
            let rate = est.overall.mean;
            check(est.overall.samples >= 100_000 && (rate - oracle).abs() <= 0.01, || {
                format!("{policy:?}: {rate} over {} positions", est.overall.samples)
            })?;
            parts.push(format!("{policy:?} {rate:.4} over {}", est.overall.samples));
        }
        Ok(parts.join(", "))
    })();
    report(5, "intercept-resend detection", t, Some(Duration::from_secs(30)), outcome);
}

#[test]
fn criterion_6_probe_error_rate_law() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let mut parts = Vec::new();
        for (i, beta) in [0.0f64, 0.3, 0.6, 1.0].into_iter().enumerate() {
            let model = Channel::Probe {
                params: ProbeParams::symmetric(beta).map_err(|e| e.to_string())?,
                targets: Targets::CheckSequence,
            };
            let est = detection_probability(
                &model,
                Scheme::Qubit3,
                CheckMethod::Method1,
                220_000,
                &mut ChaCha8Rng::seed_from_u64(60 + i as u64),
            )
            .map_err(|e| e.to_string())?;
            let eps = beta * beta;
            let z = est.z;
            let tolerance = 3.0 * z.stderr;
            check(z.samples >= 100_000 && (z.mean - eps).abs() <= tolerance, || {
                format!("beta {beta}: z rate {} ± {} over {}, expected {eps}", z.mean, z.stderr, z.samples)
            })?;
            let branches: Vec<String> = est.z_branches.iter().map(|b| format!("{:.4}", b.mean)).collect();
            parts.push(format!(
                "beta {beta}: {:.4}±{:.4} (branches {}) n={}",
                z.mean,
                z.stderr,
                branches.join("/"),
                z.samples
            ));
        }
        Ok(parts.join("; "))
    })();
    report(6, "probe error rate equals |beta|^2", t, Some(Duration::from_secs(60)), outcome);
}

/// Mutual information between the message and a z readout of A and B, using
/// only the hand-listed states.
fn pair_leakage_oracle() -> f64 {
    let entropy = |dist: &BTreeMap<usize, f64>| -> f64 {
        dist.values().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
    };
    let mut joint = BTreeMap::new();
    let mut conditional = 0.0;
    for k in 0..8 {
        let v = listed_state(k);
        let mut given = BTreeMap::new();
        for (i, a) in v.iter().enumerate() {
            *given.entry(i >> 1).or_insert(0.0) += a * a;
        }
        conditional += entropy(&given) / 8.0;
        for (ab, p) in given {
            *joint.entry(ab).or_insert(0.0) += p / 8.0;
        }
    }
    entropy(&joint) - conditional
}

#[test]
fn criterion_7_grouped_leakage() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let schemes = [
            Scheme::Qubit3,
            Scheme::QubitP(2),
            Scheme::QubitP(4),
            Scheme::QubitP(5),
            Scheme::QubitP(6),
            Scheme::Qutrit3,
        ];
        let mut singletons = 0;
        for scheme in schemes {
            for j in scheme.message_particles() {
                let bits = grouped_leakage(scheme, &BTreeSet::from([j])).map_err(|e| e.to_string())?;
                check(bits == 0.0, || format!("{scheme} particle {j}: {bits} bits"))?;
                singletons += 1;
            }
        }
        let oracle = pair_leakage_oracle();
        let pair = grouped_leakage(Scheme::Qubit3, &BTreeSet::from([0, 1])).map_err(|e| e.to_string())?;
        check(oracle == 1.0 && pair == 1.0, || format!("pair {pair} bits, oracle {oracle}"))?;
        Ok(format!("{singletons} singletons at 0 bits, Qubit3 {{A,B}} = {pair} (oracle {oracle})"))
    })();
    report(7, "grouped leakage", t, None, outcome);
}

#[test]
fn criterion_8_qutrit_family() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let scheme = Scheme::Qutrit3;
        let family = GhzFamily::<f64>::build(scheme).map_err(|e| e.to_string())?;
        check(family.len() == 27, || format!("{} members", family.len()))?;
        let members = family.members();
        let mut worst_off = 0.0f64;
        let mut worst_norm = 0.0f64;
        for (i, a) in members.iter().enumerate() {
            for (j, b) in members.iter().enumerate() {
                let ip = a.inner(b).map_err(|e| e.to_string())?.norm();
                if i == j {
                    worst_norm = worst_norm.max((ip - 1.0).abs());
                } else {
                    worst_off = worst_off.max(ip);
                }
            }
        }
        check(worst_off < 1e-12 && worst_norm < 1e-12, || {
            format!("off-diagonal {worst_off:e}, diagonal defect {worst_norm:e}")
        })?;
        let ghz = StateVector::<f64>::ghz(3, 3).map_err(|e| e.to_string())?;
        let mut hit = BTreeSet::new();
        for msg in all_messages(scheme) {
            check(msg.len() == 3 && msg.digits().iter().all(|&d| d < 3), || format!("bad message {msg:?}"))?;
            let state = encode_ops_for_message(scheme, &msg)
                .and_then(|op| op.apply(&ghz))
                .map_err(|e| e.to_string())?;
            let k = family.index_of_state(&state).ok_or_else(|| format!("{msg:?} not in family"))?;
            let back = family.message_of_index(k).map_err(|e| e.to_string())?;
            check(back == msg, || format!("{msg:?} -> member {k} -> {back:?}"))?;
            hit.insert(k);
        }
        check(hit.len() == 27, || format!("{} distinct members reached", hit.len()))?;
        Ok(format!("27 members, max off-diagonal {worst_off:e}, bijective"))
    })();
    report(8, "qutrit family", t, Some(Duration::from_secs(1)), outcome);
}

fn without_timing(json: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(json).expect("report is JSON");
    v.as_object_mut().expect("report object").remove("wall_clock_secs");
    v
}

#[test]
fn criterion_9_reproducible_reports() {
    let t = Instant::now();
    let outcome = (|| -> Outcome {
        let lines = [
            "run --seed 90 --trials 30 --batch-size 48 --scheme qubit3 --check-method 2 --verbose-trials",
            "run --seed 91 --trials 30 --batch-size 48 --scheme qubitp:4 --attack intercept-resend --eve-basis random",
            "run --seed 92 --trials 20 --batch-size 30 --scheme qutrit3 --attack fake-resend",
            "run --seed 93 --trials 20 --batch-size 40 --attack probe --beta 0.4 --jobs 3",
            "run --seed 94 --trials 20 --batch-size 40 --send-plan grouped --group 0,1 --attack grouped",
            "attack-sweep --seed 95 --trials 2000 --attack probe",
            "attack-sweep --seed 96 --trials 2000 --attack intercept-resend --scheme qutrit3",
            "family-verify --seed 97 --scheme qubitp:6",
            "leakage-table --seed 98 --scheme qutrit3",
        ];
        for line in lines {
            let argv: Vec<String> = std::iter::once("qsdc-sim")
                .chain(line.split_whitespace())
                .map(str::to_string)
                .collect();
            let spec = parse_spec(argv, None).map_err(|e| format!("{line}: {e}"))?;
            for format in [Format::Json, Format::Csv] {
                let a = render(&run_experiment(&spec).map_err(|e| e.to_string())?, format).map_err(|e| e.to_string())?;
                let b = render(&run_experiment(&spec).map_err(|e| e.to_string())?, format).map_err(|e| e.to_string())?;
                let same = match format {
                    Format::Json => without_timing(&a) == without_timing(&b),
                    Format::Csv => a == b,
                };
                check(same, || format!("{line} ({format:?}) differs between runs"))?;
            }
        }
        Ok(format!("{} specs, JSON and CSV identical modulo wall_clock_secs", lines.len()))
    })();
    report(9, "same seed gives same report", t, None, outcome);
}

//! Command-line and config-file parsing into an [`ExperimentSpec`].
//!
//! Every flag has a config-file key of the same kebab-case name. Flags win over
//! the file; anything left unset takes the documented default.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qsdc_core::adversary::{BasisPolicy, ChannelModel, ProbeParams, Targets};
use qsdc_core::protocol::{CheckMethod, ProtocolConfig, SendPlan};
use qsdc_core::Scheme;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_CHECK_FRACTION: f64 = 0.1;
pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_ABORT_THRESHOLD: f64 = 0.0;
pub const DEFAULT_PROBE_BETA: f64 = 0.5;
pub const DEFAULT_BETAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Parser)]
#[command(name = "qsdc-sim", version, about = "Monte Carlo experiments for GHZ-based multi-step direct communication")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run seeded protocol sessions and aggregate their statistics.
    Run(Settings),
    /// Per-position detection rate of an attack over a parameter range.
    AttackSweep(Settings),
    /// Check orthonormality and message bijection of a scheme's GHZ family.
    FamilyVerify(Settings),
    /// Exact leakage for every set of intercepted message particles.
    LeakageTable(Settings),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Run,
    AttackSweep,
    FamilyVerify,
    LeakageTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    InterceptResend,
    Probe,
    FakeResend,
    Grouped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EveBasis {
    Z,
    X,
    Random,
}

impl From<EveBasis> for BasisPolicy {
    fn from(b: EveBasis) -> Self {
        match b {
            EveBasis::Z => BasisPolicy::AlwaysZ,
            EveBasis::X => BasisPolicy::AlwaysX,
            EveBasis::Random => BasisPolicy::RandomZX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SendPlanKind {
    MultiStep,
    Grouped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by all subcommands; also the schema of the TOML config file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// TOML file with defaults for any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Multiplets per batch [default: 256].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// qubit3, qutrit3 or qubitp:<p> [default: qubit3].
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// 1 (separate measurements) or 2 (joint measurement on x-checks) [default: 1].
    #[arg(long)]
    pub check_method: Option<u8>,
    /// Fraction of positions used by the first check and as decoys [default: 0.1].
    #[arg(long)]
    pub check_fraction: Option<f64>,
    /// Largest tolerated mismatch rate of a single check [default: 0].
    #[arg(long)]
    pub abort_threshold: Option<f64>,
    /// Channel behaviour [default: none].
    #[arg(long, value_enum)]
    pub attack: Option<AttackKind>,
    /// Eve's measurement basis for intercept-resend [default: z].
    #[arg(long, value_enum)]
    pub eve_basis: Option<EveBasis>,
    /// Probe flip amplitude for `run` [default: 0.5].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Probe flip amplitudes swept by `attack-sweep` [default: 0,0.2,…,1].
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Particles the attack targets [default: the check particle].
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<usize>>,
    /// Message particles sent together (grouped send plan and grouped attack) [default: all].
    #[arg(long, value_delimiter = ',')]
    pub group: Option<Vec<usize>>,
    /// multi-step or grouped [default: multi-step].
    #[arg(long, value_enum)]
    pub send_plan: Option<SendPlanKind>,
    /// Random payload messages per session [default: one batch worth].
    #[arg(long)]
    pub payload_len: Option<usize>,
    /// Sessions for `run`, checked positions per point for `attack-sweep` [default: 1000].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed [default: drawn from the OS and echoed].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// json or csv [default: json].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Include per-trial session reports.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub verbose_trials: Option<bool>,
}

impl Settings {
    /// Fills every unset field of `self` from `file`.
    fn or(self, file: Settings) -> Settings {
        Settings {
            config: self.config,
            batch_size: self.batch_size.or(file.batch_size),
            scheme: self.scheme.or(file.scheme),
            check_method: self.check_method.or(file.check_method),
            check_fraction: self.check_fraction.or(file.check_fraction),
            abort_threshold: self.abort_threshold.or(file.abort_threshold),
            attack: self.attack.or(file.attack),
            eve_basis: self.eve_basis.or(file.eve_basis),
            beta: self.beta.or(file.beta),
            betas: self.betas.or(file.betas),
            targets: self.targets.or(file.targets),
            group: self.group.or(file.group),
            send_plan: self.send_plan.or(file.send_plan),
            payload_len: self.payload_len.or(file.payload_len),
            trials: self.trials.or(file.trials),
            seed: self.seed.or(file.seed),
            jobs: self.jobs.or(file.jobs),
            output: self.output.or(file.output),
            format: self.format.or(file.format),
            verbose_trials: self.verbose_trials.or(file.verbose_trials),
        }
    }
}

/// Serializable description of the channel, echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub eve_basis: EveBasis,
    pub beta: f64,
    pub targets: Option<BTreeSet<usize>>,
    pub group: BTreeSet<usize>,
}

impl AttackSpec {
    fn targets(&self) -> Targets {
        match &self.targets {
            Some(set) => Targets::Particles(set.clone()),
            None => Targets::CheckSequence,
        }
    }

    /// Channel for this attack with the probe amplitude replaced by `beta`.
    pub fn channel_with_beta(&self, beta: f64) -> qsdc_core::Result<ChannelModel<f64>> {
        Ok(match self.kind {
            AttackKind::None => ChannelModel::Ideal,
            AttackKind::InterceptResend => ChannelModel::InterceptResend {
                basis_policy: self.eve_basis.into(),
                targets: self.targets(),
            },
            AttackKind::Probe => ChannelModel::Probe {
                params: ProbeParams::symmetric(beta)?,
                targets: self.targets(),
            },
            AttackKind::FakeResend => ChannelModel::FakeResend { targets: self.targets() },
            AttackKind::Grouped => ChannelModel::GroupedInterception {
                group: self.group.clone(),
            },
        })
    }

    pub fn channel(&self) -> qsdc_core::Result<ChannelModel<f64>> {
        self.channel_with_beta(self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    /// Session template; the payload is drawn per trial.
    pub protocol: ProtocolConfig,
    pub attack: AttackSpec,
    pub betas: Vec<f64>,
    pub payload_len: usize,
    pub trials: usize,
    pub seed: u64,
    /// True when no seed was supplied and one was drawn.
    pub seed_generated: bool,
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    pub format: Format,
    pub verbose_trials: bool,
}

/// Parses `argv` (program name first). `config_text` is used as the config file
/// when given; otherwise `--config` is read from disk.
pub fn parse_spec<I, S>(argv: I, config_text: Option<&str>) -> Result<ExperimentSpec>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let (mode, flags) = match cli.command {
        Command::Run(s) => (Mode::Run, s),
        Command::AttackSweep(s) => (Mode::AttackSweep, s),
        Command::FamilyVerify(s) => (Mode::FamilyVerify, s),
        Command::LeakageTable(s) => (Mode::LeakageTable, s),
    };
    let text = match (config_text, &flags.config) {
        (Some(t), _) => Some(t.to_string()),
        (None, Some(path)) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| SimError::usage("config", format!("cannot read {}: {e}", path.display())))?,
        ),
        (None, None) => None,
    };
    let file: Settings = match text {
        Some(t) => toml::from_str(&t).map_err(|e| SimError::usage("config", e.to_string()))?,
        None => Settings::default(),
    };
    build(mode, flags.or(file))
}

fn check_unit(key: &str, v: f64, open: bool) -> Result<f64> {
    let ok = if open { v > 0.0 && v < 1.0 } else { (0.0..=1.0).contains(&v) };
    if ok {
        Ok(v)
    } else {
        let range = if open { "(0, 1)" } else { "[0, 1]" };
        Err(SimError::usage(key, format!("{v} is outside {range}")))
    }
}

fn build(mode: Mode, s: Settings) -> Result<ExperimentSpec> {
    let scheme = s.scheme.unwrap_or(Scheme::Qubit3);
    scheme.validate().map_err(|e| SimError::usage("scheme", e.to_string()))?;
    let batch_size = s.batch_size.unwrap_or(DEFAULT_BATCH_SIZE);
    if batch_size == 0 {
        return Err(SimError::usage("batch-size", "must be at least 1"));
    }
    let check_method = match s.check_method.unwrap_or(1) {
        1 => CheckMethod::Method1,
        2 => CheckMethod::Method2,
        other => return Err(SimError::usage("check-method", format!("expected 1 or 2, got {other}"))),
    };
    let check_fraction = check_unit("check-fraction", s.check_fraction.unwrap_or(DEFAULT_CHECK_FRACTION), true)?;
    let abort_threshold = check_unit("abort-threshold", s.abort_threshold.unwrap_or(DEFAULT_ABORT_THRESHOLD), false)?;
    let beta = check_unit("beta", s.beta.unwrap_or(DEFAULT_PROBE_BETA), false)?;
    let betas = s.betas.unwrap_or_else(|| DEFAULT_BETAS.to_vec());
    if betas.is_empty() {
        return Err(SimError::usage("betas", "needs at least one value"));
    }
    for &b in &betas {
        check_unit("betas", b, false)?;
    }
    let trials = s.trials.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(SimError::usage("trials", "must be at least 1"));
    }
    if s.jobs == Some(0) {
        return Err(SimError::usage("jobs", "must be at least 1"));
    }

    let p = scheme.particles();
    let targets = match s.targets {
        Some(t) => {
            if let Some(&bad) = t.iter().find(|&&j| j >= p) {
                return Err(SimError::usage("targets", format!("particle {bad} does not exist in {scheme}")));
            }
            Some(t.into_iter().collect::<BTreeSet<_>>())
        }
        None => None,
    };
    let group: BTreeSet<usize> = match s.group {
        Some(g) => g.into_iter().collect(),
        None => scheme.message_particles().collect(),
    };
    if group.is_empty() || group.iter().any(|&j| j >= scheme.check_particle()) {
        return Err(SimError::usage(
            "group",
            format!("must be a non-empty subset of the message particles 0..{}", scheme.check_particle()),
        ));
    }
    let send_plan = match s.send_plan.unwrap_or(SendPlanKind::MultiStep) {
        SendPlanKind::MultiStep => SendPlan::MultiStep,
        SendPlanKind::Grouped => SendPlan::Grouped(group.iter().copied().collect()),
    };

    let mut protocol = ProtocolConfig::new(scheme, batch_size, 0);
    protocol.check_fraction = check_fraction;
    protocol.check_method = check_method;
    protocol.abort_threshold = abort_threshold;
    protocol.send_plan = send_plan;
    if protocol.check_count() < 1 {
        return Err(SimError::usage("check-fraction", "check-fraction × batch-size must be at least 1"));
    }
    if protocol.payload_slots() < 1 {
        return Err(SimError::usage(
            "batch-size",
            format!("{batch_size} leaves no payload positions after two check sets of {}", protocol.check_count()),
        ));
    }
    protocol.validate().map_err(|e| SimError::usage("config", e.to_string()))?;

    let attack = AttackSpec {
        kind: s.attack.unwrap_or(AttackKind::None),
        eve_basis: s.eve_basis.unwrap_or(EveBasis::Z),
        beta,
        targets,
        group,
    };
    let channel = attack.channel().map_err(|e| SimError::usage("attack", e.to_string()))?;
    channel.validate(scheme).map_err(|e| SimError::usage("attack", e.to_string()))?;

    let (seed, seed_generated) = match s.seed {
        Some(seed) => (seed, false),
        None => (rand::random::<u64>(), true),
    };
    protocol.seed = seed;

    Ok(ExperimentSpec {
        mode,
        payload_len: s.payload_len.unwrap_or(protocol.payload_slots()),
        protocol,
        attack,
        betas,
        trials,
        seed,
        seed_generated,
        jobs: s.jobs,
        output: s.output,
        format: s.format.unwrap_or(Format::Json),
        verbose_trials: s.verbose_trials.unwrap_or(false),
    })
}

//! Experiment runner for the `qsdc-core` simulator: argument parsing, seeded
//! Monte Carlo campaigns and report writing.

pub mod error;
pub mod report;
pub mod runner;
pub mod seed;
pub mod spec;

pub use error::{Result, SimError};
pub use report::{render, write_atomic, Report};
pub use runner::run_experiment;
pub use seed::derive_trial_seed;
pub use spec::{parse_spec, ExperimentSpec};

/// Parses, runs and writes one experiment; returns the process exit status.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let spec = match parse_spec(argv, None) {
        Ok(spec) => spec,
        Err(SimError::Cli(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if spec.seed_generated {
        eprintln!("seed: {}", spec.seed);
    }
    let outcome = run_experiment(&spec).and_then(|report| {
        let body = render(&report, spec.format)?;
        match &spec.output {
            Some(path) => write_atomic(path, &body),
            None => {
                print!("{body}");
                Ok(())
            }
        }
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

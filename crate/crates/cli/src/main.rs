mod args;
mod commands;
mod config;
mod runlog;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Cmd};
use claimrank::error::ErrorFamily;
use claimrank::{Error, Result};

const THREADS_VAR: &str = "CLAIMRANK_THREADS";

fn exit_code(e: &Error) -> u8 {
    match e.family() {
        ErrorFamily::Validation => 1,
        ErrorFamily::Io => 2,
        ErrorFamily::Numerical => 3,
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let (name, config) = match serde_json::to_value(&cli.command).expect("arguments serialize") {
        serde_json::Value::Object(m) if m.len() == 1 => m.into_iter().next().expect("one entry"),
        other => ("?".to_string(), other),
    };
    let rec = match &cli.command {
        Cmd::Ingest(a) => commands::ingest(a),
        Cmd::Stats(a) => commands::stats(a),
        Cmd::Variant(a) => commands::variant(a),
        Cmd::FilterSpeaker(a) => commands::filter_speaker_cmd(a),
        Cmd::Denoise(a) => commands::denoise(a),
        Cmd::Segment(a) => commands::segment(a),
        Cmd::Features(a) => commands::features(a),
        Cmd::Train(a) => commands::train(a),
        Cmd::Align(a) => commands::align(a),
        Cmd::Fuse(a) => commands::fuse(a),
        Cmd::Predict(a) => commands::predict(a),
        Cmd::Eval(a) => commands::eval(a),
        Cmd::Report(a) => commands::report(a),
        Cmd::Fixture(a) => commands::fixture(a),
        Cmd::Gradcheck(a) => commands::gradcheck(a),
        Cmd::Pipeline(a) => commands::pipeline(a),
    }?;
    if let Some(log) = cli.run_log.clone().or_else(|| runlog::default_location(&rec)) {
        runlog::append(&log, &name, &config, &rec)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::merge(argv, &cmd) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let matches = match cmd.try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

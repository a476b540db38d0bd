//! `amvp`: constants, medians, oracles, expansion sweeps and the mean-value
//! solver from the command line.
//!
//! Stdout carries the result only. A JSON run manifest with the resolved
//! flags, seed and a SHA-256 digest of stdout goes to stderr or `--manifest`.

mod args;
mod commands;
mod failure;
mod manifest;

use std::io::{IsTerminal, Write};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;

use args::{Cli, Command};
use failure::Failure;
use manifest::RunManifest;

fn strict_mode() -> bool {
    std::env::var("CI_STRICT").is_ok_and(|v| v == "1")
}

fn report_error(msg: &str) {
    let color = std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stderr().is_terminal();
    if color {
        eprintln!("\x1b[31merror:\x1b[0m {msg}");
    } else {
        eprintln!("error: {msg}");
    }
}

/// Fills in a missing seed: an error under CI_STRICT=1, otherwise drawn from
/// the clock and recorded in the manifest.
fn resolve_seed(cmd: &mut Command, now: SystemTime) -> Result<Option<u64>, Failure> {
    let name = cmd.name();
    let Some(slot) = cmd.seed_slot() else {
        return Ok(None);
    };
    if slot.is_none() {
        if strict_mode() {
            return Err(Failure::Usage(format!(
                "CI_STRICT=1: `{name}` requires an explicit --seed"
            )));
        }
        let nanos = now.duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        *slot = Some(nanos as u64);
    }
    Ok(*slot)
}

fn dispatch(cmd: &Command, seed: Option<u64>) -> Result<commands::Outcome, Failure> {
    let seed = seed.unwrap_or(0);
    match cmd {
        Command::Info => commands::info(),
        Command::Constants(a) => commands::constants(a),
        Command::Median(a) => commands::median(a, &mut std::io::stdin().lock()),
        Command::Oracle(a) => commands::oracle(a, seed),
        Command::Sweep(a) => commands::sweep(a, seed),
        Command::Solve(a) => commands::solve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let started = Instant::now();
    let now = SystemTime::now();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            report_error(&format!("cannot start {n} threads: {e}"));
            return ExitCode::from(2);
        }
    }

    let mut cmd = cli.command;
    let result = resolve_seed(&mut cmd, now).and_then(|seed| dispatch(&cmd, seed).map(|out| (seed, out)));
    let (seed, stdout, code) = match result {
        Ok((seed, out)) => (seed, out.stdout, out.exit_code),
        Err(f) => {
            report_error(&f.to_string());
            return ExitCode::from(f.exit_code() as u8);
        }
    };

    let mut handle = std::io::stdout().lock();
    if handle
        .write_all(stdout.as_bytes())
        .and_then(|_| handle.flush())
        .is_err()
    {
        return ExitCode::from(1);
    }

    let flags = serde_json::to_value(&cmd)
        .ok()
        .and_then(|v| v.as_object().and_then(|o| o.values().next().cloned()))
        .unwrap_or(serde_json::Value::Null);
    let manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        flags,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        started_unix: now.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        exit_code: code,
        output_sha256: manifest::sha256_hex(stdout.as_bytes()),
    };
    let text = serde_json::to_string(&manifest).unwrap_or_default();
    match &cli.manifest {
        Some(path) => {
            if let Err(e) = std::fs::write(path, format!("{text}\n")) {
                report_error(&format!("cannot write manifest {}: {e}", path.display()));
                return ExitCode::from(1);
            }
        }
        None => eprintln!("{text}"),
    }
    ExitCode::from(code as u8)
}

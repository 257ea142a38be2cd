//! `bmseg` command-line front end.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.

mod args;
mod commands;
mod manifest;
mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bmseg::{Error, Result};
use clap::Parser;

use args::{Cli, Command, OUT_ROOT_ENV};
use manifest::RunManifest;
use store::{read_json, resolve_out, write_json};

fn run(mut command: Command, args: Vec<String>, cwd: PathBuf) -> Result<()> {
    if let Command::Replay(r) = &command {
        let recorded: RunManifest = read_json(&r.manifest)?;
        let mut config = recorded.config;
        match r.out.clone() {
            Some(o) => *config.out_mut().expect("recorded commands have an output") = o,
            None => *config.out_mut().expect("recorded commands have an output") = recorded.out_dir,
        }
        if let Some(j) = r.jobs {
            config.set_jobs(j);
        }
        std::env::set_current_dir(&recorded.cwd).map_err(|e| Error::io(&recorded.cwd, e))?;
        return run(config, recorded.args, recorded.cwd);
    }

    let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from);
    let out = command.out_mut().expect("non-replay commands have an output");
    *out = resolve_out(out, root);
    let out = absolute(out, &cwd);

    let start = Instant::now();
    let outcome = match &command {
        Command::Phantom(a) => commands::phantom(a, &out),
        Command::Train(a) => commands::train_cmd(a, &out),
        Command::Infer(a) => commands::infer_cmd(a, &out),
        Command::Postprocess(a) => commands::postprocess_cmd(a, &out),
        Command::Eval(a) => commands::eval_cmd(a, &out),
        Command::Ablate(a) => commands::ablate_cmd(a, &out),
        Command::Replay(_) => unreachable!("handled above"),
    }?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        args,
        cwd,
        config: command,
        seeds: outcome.seeds,
        inputs: outcome.inputs,
        out_dir: out.clone(),
        outputs: outcome.outputs,
        duration_s: start.elapsed().as_secs_f64(),
    };
    write_json(&RunManifest::path_in(&out), &manifest)
}

fn absolute(p: &Path, cwd: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        cwd.join(p)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cwd = match std::env::current_dir() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: cannot read the working directory: {e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command, args, cwd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use overlay_auth::overlay::{verify_overlay, OverlayCode};
use serde_json::json;

use crate::config::{ExperimentConfig, KEYS};
use crate::experiment::{bounds_json, build, construction_json, run_experiment, sweep, SWEEP_AXES, VERSION};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "OVERLAY_AUTH_OUT";

/// Exit status when a run finishes but some estimate exceeds its bound.
pub const EXIT_NOT_DOMINATED: i32 = 1;

fn common(cmd: Command) -> Command {
    let mut cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("PATH")
                .help("Configuration file (key = value text or JSON)"),
        )
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .help("Override one configuration key"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .short('o')
                .value_name("PATH")
                .help("Output file; defaults to output.dir, then $OVERLAY_AUTH_OUT, then stdout"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .help("Worker threads for the simulation (default: all cores)"),
        );
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .help(format!("Set `{key}`"))
                .hide_short_help(true),
        );
    }
    cmd
}

pub fn command() -> Command {
    let axes: Vec<&str> = SWEEP_AXES.iter().map(|(a, _)| *a).collect();
    Command::new("overlay-auth")
        .version(VERSION)
        .about("Overlay-code authentication experiments over Gaussian channels")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(common(Command::new("construct").about("Build the overlay code and write it as JSON")))
        .subcommand(
            common(Command::new("verify").about("Check the overlay property of a code")).arg(
                Arg::new("overlay")
                    .long("overlay")
                    .value_name("PATH")
                    .help("Overlay JSON to check; constructs one from the configuration otherwise"),
            ),
        )
        .subcommand(common(Command::new("bounds").about("Evaluate every closed-form quantity")))
        .subcommand(common(
            Command::new("simulate").about("Run the experiment; exits non-zero if an estimate exceeds its bound"),
        ))
        .subcommand(
            common(Command::new("sweep").about("Run one experiment per axis value and write CSV"))
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .required(true)
                        .value_name("NAME")
                        .help(format!("One of {}", axes.join(", "))),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .value_name("V1,V2,..")
                        .default_value("")
                        .help("Comma-separated axis values"),
                ),
        )
}

pub fn load_config(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        cfg.apply_str(&text).with_context(|| format!("in {path}"))?;
    }
    if let Some(sets) = m.get_many::<String>("set") {
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {s:?}"))?;
            cfg.set(k.trim(), v)?;
        }
    }
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn destination(m: &ArgMatches, cfg: &ExperimentConfig, name: &str, ext: &str) -> Option<PathBuf> {
    if let Some(out) = m.get_one::<String>("out") {
        return Some(PathBuf::from(out));
    }
    let dir = cfg.output.dir.clone().or_else(|| std::env::var(OUT_ENV).ok().filter(|d| !d.is_empty()))?;
    Some(PathBuf::from(dir).join(format!("{name}-{}.{ext}", &cfg.hash()[..12])))
}

fn emit(dest: Option<PathBuf>, body: &str, stdout: &mut dyn Write) -> Result<()> {
    match dest {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            writeln!(stdout, "{}", path.display())?;
        }
        None => stdout.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON serializes");
    s.push('\n');
    s
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(args)?;
    let (name, m) = matches.subcommand().expect("subcommand required");
    let cfg = load_config(m)?;
    if let Some(&threads) = m.get_one::<usize>("threads") {
        // A pool can only be installed once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let header = || {
        json!({
            "version": VERSION,
            "config_hash": cfg.hash(),
        })
    };
    match name {
        "construct" => {
            let p = build(&cfg)?;
            emit(destination(m, &cfg, "overlay", "json"), &p.overlay.to_json_string(), stdout)?;
            Ok(0)
        }
        "verify" => {
            let overlay = match m.get_one::<String>("overlay") {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
                    OverlayCode::from_json_str(&text)?
                }
                None => build(&cfg)?.overlay,
            };
            let report = verify_overlay(&overlay);
            let mut out = header();
            out["pass"] = json!(report.pass);
            out["messages"] = json!(overlay.message_count());
            out["pairs_checked"] = json!(report.witnesses.len());
            out["count_violations"] = json!(report.count_violations);
            out["pair_violations"] = json!(report.pair_violations().collect::<Vec<_>>());
            emit(destination(m, &cfg, "verify", "json"), &pretty(&out), stdout)?;
            Ok(if report.pass { 0 } else { EXIT_NOT_DOMINATED })
        }
        "bounds" => {
            let p = build(&cfg)?;
            let mut out = header();
            out["config"] = serde_json::to_value(&cfg)?;
            out["construction"] = construction_json(&p);
            out["bounds"] = bounds_json(&cfg, &p)?;
            emit(destination(m, &cfg, "bounds", "json"), &pretty(&out), stdout)?;
            Ok(0)
        }
        "simulate" => {
            let report = run_experiment(&cfg)?;
            emit(destination(m, &cfg, "report", "json"), &report.to_json_string(), stdout)?;
            Ok(if report.all_dominated { 0 } else { EXIT_NOT_DOMINATED })
        }
        "sweep" => {
            let axis = m.get_one::<String>("axis").expect("required");
            let values: Vec<String> = m
                .get_one::<String>("values")
                .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
                .unwrap_or_default();
            let (csv, ok) = sweep(&cfg, axis, &values)?;
            emit(destination(m, &cfg, &format!("sweep-{axis}"), "csv"), &csv, stdout)?;
            Ok(if ok { 0 } else { EXIT_NOT_DOMINATED })
        }
        other => unreachable!("unknown subcommand {other}"),
    }
}

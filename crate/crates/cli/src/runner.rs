//! `graphflow --config PATH ...`: one flow run with its output files.
//!
//! Output directory contents:
//!
//! - `timeseries.csv`: one row per monitored state
//! - `snap_<step>.txt`: snapshots every `snapshot_interval` steps
//! - `final.txt` on a clean stop, `last_good.txt` after a failure
//! - `summary.txt`: status, stop reason, final row
//! - `config.txt`: the effective configuration

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use graphflow::diagnostics::{emit_timeseries, TimeSeriesRow};
use graphflow::flow::run;
use graphflow::snapshot::snapshot_write;
use graphflow::{make_grid, Error, FlowState};

use crate::config::{expand_resolution, parse_config, parse_resolution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_REFUSED: i32 = 2;
pub const EXIT_BREAKDOWN: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "graphflow", version, about = "Mean curvature flow of graphs in products of tori and spheres")]
struct Args {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output] dir)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Stop after this many steps
    #[arg(long)]
    max_steps: Option<u64>,
    /// Grid resolution `N` or `N,M`
    #[arg(long)]
    resolution: Option<String>,
    /// Evaluate the evolution identity (flat) or inequality (sphere) at monitor steps
    #[arg(long)]
    verify: bool,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

/// Stage that raised an error, printed in front of every message.
fn provenance(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Domain(_) | Error::Validation(_) => "geometry",
        Error::Numeric { .. } => "graph-state",
        Error::OutOfClass { .. } => "flow: initial data",
        Error::Breakdown { .. } | Error::BlowUp { .. } | Error::Precondition(_) => "flow",
        Error::Format { .. } => "snapshot",
        Error::Io(_) => "io",
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::OutOfClass { .. } => EXIT_REFUSED,
        _ => EXIT_BREAKDOWN,
    }
}

/// Parses `argv` (including the program name), runs, and returns the exit status.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_CONFIG
                }
            };
        }
    };
    let fail = |err: &mut dyn Write, stage: &str, msg: &dyn std::fmt::Display| {
        let _ = writeln!(err, "error [{stage}]: {msg}");
    };

    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            fail(err, "config", &format!("cannot read {}: {e}", args.config.display()));
            return EXIT_CONFIG;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errs) => {
            for e in &errs.0 {
                fail(err, "config", &format!("{}: {e}", args.config.display()));
            }
            return EXIT_CONFIG;
        }
    };
    if let Some(d) = args.out_dir {
        cfg.out_dir = d;
    }
    if let Some(m) = args.max_steps {
        cfg.flow.max_steps = Some(m);
    }
    if args.verify {
        cfg.flow.verify = true;
    }
    if let Some(r) = &args.resolution {
        match parse_resolution(r) {
            Ok(res) => cfg.resolution = expand_resolution(&res, &cfg.product.sigma1),
            Err(e) => {
                fail(err, "config", &format!("--resolution: {e}"));
                return EXIT_CONFIG;
            }
        }
    }
    let grid = match make_grid(&cfg.product.sigma1, &cfg.resolution) {
        Ok(g) => g,
        Err(e) => {
            fail(err, "config", &e);
            return EXIT_CONFIG;
        }
    };
    let initial = match cfg.initial.build(&grid, &cfg.product) {
        Ok(f) => f,
        Err(e) => {
            fail(err, "initial", &e);
            return EXIT_CONFIG;
        }
    };
    let dir = cfg.out_dir.clone();
    if let Err(e) = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("config.txt"), cfg.to_text())) {
        fail(err, "io", &format!("cannot prepare {}: {e}", dir.display()));
        return EXIT_CONFIG;
    }

    let flow_cfg = cfg.flow_config();
    let snap_every = cfg.snapshot_interval;
    let mut io_error: Option<std::io::Error> = None;
    let quiet = args.quiet;
    let mut observer = |state: &FlowState, row: &TimeSeriesRow| {
        if !quiet {
            let _ = writeln!(
                out,
                "step {:>8}  t = {:.6}  min eta = {:.9}  min eta1 = {:.9}  max |A|^2 = {:.3e}",
                state.step_index, row.time, row.min_eta, row.min_eta1, row.max_a_norm_sq
            );
        }
        if snap_every > 0 && state.step_index % snap_every == 0 && io_error.is_none() {
            let path = dir.join(format!("snap_{:08}.txt", state.step_index));
            if let Err(e) = write_snapshot(&path, state) {
                io_error = Some(e);
            }
        }
    };
    let result = run(&flow_cfg, initial, &mut observer);
    if let Some(e) = io_error {
        fail(err, "io", &format!("writing snapshots: {e}"));
        return EXIT_BREAKDOWN;
    }

    match result {
        Ok(outcome) => {
            let c_min = outcome.reaction_constants.iter().copied().reduce(f64::min);
            let mut summary = format!(
                "status = ok\nstop_reason = {}\nsteps = {}\ntime = {}\n",
                outcome.stop_reason, outcome.final_state.step_index, outcome.final_state.time
            );
            if let Some(c) = c_min {
                summary.push_str(&format!("reaction_c_min = {c}\n"));
            }
            let written = write_outputs(&dir, &outcome.rows, &summary)
                .and_then(|_| write_snapshot(&dir.join("final.txt"), &outcome.final_state));
            if let Err(e) = written {
                fail(err, "io", &e);
                return EXIT_BREAKDOWN;
            }
            if !quiet {
                let _ = writeln!(out, "stopped: {}", outcome.stop_reason);
            }
            EXIT_OK
        }
        Err(failure) => {
            let stage = provenance(&failure.error);
            fail(err, stage, &failure.error);
            let status = if exit_code(&failure.error) == EXIT_REFUSED { "refused" } else { "failed" };
            let summary = format!(
                "status = {status}\nerror = [{stage}] {}\nsteps = {}\ntime = {}\n",
                failure.error, failure.last_good.step_index, failure.last_good.time
            );
            let written = write_outputs(&dir, &failure.rows, &summary)
                .and_then(|_| write_snapshot(&dir.join("last_good.txt"), &failure.last_good));
            if let Err(e) = written {
                fail(err, "io", &e);
            }
            exit_code(&failure.error)
        }
    }
}

fn write_snapshot(path: &Path, state: &FlowState) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    snapshot_write(state, &mut w).map_err(std::io::Error::other)?;
    w.flush()
}

fn write_outputs(dir: &Path, rows: &[TimeSeriesRow], summary: &str) -> std::io::Result<()> {
    let mut csv = Vec::new();
    emit_timeseries(rows, &mut csv).map_err(std::io::Error::other)?;
    fs::write(dir.join("timeseries.csv"), &csv)?;
    let mut s = summary.as_bytes().to_vec();
    s.push(b'\n');
    emit_timeseries(&rows[rows.len().saturating_sub(1)..], &mut s).map_err(std::io::Error::other)?;
    fs::write(dir.join("summary.txt"), s)
}

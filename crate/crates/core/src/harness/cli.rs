use std::io::Write;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::{
    analyze_model, csv_header, json_artifact, load, select_modes, selftest, write_artifact,
    RunConfig, SweepSpec, THREADS_ENV,
};
use crate::design::design_report;
use crate::devices::{timescale_check, TimescaleCheck};
use crate::error::{Error, Result};
use crate::modal::{inter_area, modes_csv};
use crate::netmodel::{AssumptionReport, GridStrength};
use crate::ringdown::{estimate_mode, perturbation, simulate, ModeEstimate};
use crate::sensitivity::{sensitivity_csv, sensitivity_reports, FD_STEP_REL};
use crate::sweep::{detect_reversal, grid, locus_csv, sweep, SweepParam};

/// Exit status for command-line usage errors.
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "gridform-ssa", version, about = "Small-signal stability of grids with droop-controlled grid-forming storage")]
pub struct Cli {
    /// Directory receiving the artifacts.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    pub out: String,
    /// Inter-area frequency band in Hz.
    #[arg(long, global = true, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub band: Option<Vec<f64>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ParamArg {
    Droop,
    Size,
    Inertia,
}

impl From<ParamArg> for SweepParam {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Droop => SweepParam::Droop,
            ParamArg::Size => SweepParam::Size,
            ParamArg::Inertia => SweepParam::Inertia,
        }
    }
}

#[derive(Debug, Args)]
pub struct CaseArg {
    /// Network case (JSON).
    pub case: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Modal analysis: modes.csv and assumptions.json.
    Analyze {
        #[command(flatten)]
        case: CaseArg,
        /// Also write the state matrix to state_matrix.csv.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Parameter sweep with mode tracking: locus.csv and reversal.json.
    Sweep {
        #[command(flatten)]
        case: CaseArg,
        #[arg(long, value_enum)]
        param: ParamArg,
        /// Start value: droop setting, capacity as a fraction of load, or inertia multiplier.
        #[arg(long)]
        from: f64,
        /// End value.
        #[arg(long)]
        to: f64,
        /// Grid points including both ends.
        #[arg(long)]
        points: usize,
        /// Geometric grid spacing.
        #[arg(long)]
        log: bool,
        /// Droop setting applied before the sweep (size and inertia sweeps).
        #[arg(long, value_name = "SETTING")]
        mp: Option<f64>,
    },
    /// Droop sensitivity dλ/dm_p with a finite-difference cross-check: sensitivity.csv.
    Sensitivity {
        #[command(flatten)]
        case: CaseArg,
        /// Mode id; every inter-area mode when omitted.
        #[arg(long)]
        mode: Option<String>,
        /// Finite-difference step relative to the droop gain.
        #[arg(long, value_name = "H")]
        fd_step: Option<f64>,
    },
    /// Necessary condition and droop lower bound per mode: design.json.
    CheckDesign {
        #[command(flatten)]
        case: CaseArg,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Nonlinear ringdown from a perturbed equilibrium: trajectory.csv.
    Ringdown {
        #[command(flatten)]
        case: CaseArg,
        /// State perturbation, e.g. dg_G1=0.001 (repeatable).
        #[arg(long, value_name = "STATE=AMP", value_parser = parse_perturb, required = true)]
        perturb: Vec<(String, f64)>,
        /// Simulated time, s.
        #[arg(long, default_value_t = 20.0, value_name = "S")]
        horizon: f64,
        /// RK4 step, s.
        #[arg(long, default_value_t = 1e-3, value_name = "S")]
        dt: f64,
        /// State label used for the mode estimate; largest excursion when omitted.
        #[arg(long)]
        channel: Option<String>,
    },
    /// Run the built-in example suite.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_perturb(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected STATE=AMP, got \"{s}\""))?;
    let amp: f64 = v.trim().parse().map_err(|e| format!("bad amplitude \"{v}\": {e}"))?;
    Ok((k.trim().to_string(), amp))
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Invalid(format!("{THREADS_ENV} must be a positive integer, got \"{v}\"")))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse `args` (including the program name) and run; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_USAGE,
            };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match configure_threads().and_then(|_| run(&cli, &mut out)) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn base_config(cli: &Cli, command: &str, case: Option<&str>) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(command);
    cfg.case_path = case.map(str::to_string);
    cfg.out_dir = cli.out.clone();
    if let Some(b) = &cli.band {
        cfg.band = (b[0], b[1]);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

#[derive(Serialize)]
struct AnalyzeSummary<'a> {
    n_g: usize,
    n_i: usize,
    mp: f64,
    assumptions: &'a AssumptionReport,
    grid_strength: &'a GridStrength,
    timescale: TimescaleCheck,
    inter_area_modes: Vec<&'a str>,
}

/// Run a parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Analyze { case, dump_matrix } => {
            let cfg = base_config(cli, "analyze", Some(&case.case))?;
            let lc = load(&case.case)?;
            let modes = analyze_model(&lc.model, &cfg)?;
            let hdr = csv_header(&lc.sha256, &cfg);
            let p = write_artifact(&cfg.out_dir, "modes.csv", &(hdr.clone() + &modes_csv(&modes)))?;
            writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
            let report = lc.model.assumptions();
            let ia = inter_area(&modes);
            let summary = AnalyzeSummary {
                n_g: lc.model.jac.n_g,
                n_i: lc.model.jac.n_i,
                mp: lc.model.park.droop_gain(),
                assumptions: &report,
                grid_strength: &lc.model.strength,
                timescale: timescale_check(&lc.model.park),
                inter_area_modes: ia.iter().map(|m| m.id.as_str()).collect(),
            };
            let p = write_artifact(&cfg.out_dir, "assumptions.json", &json_artifact(&lc.sha256, &cfg, &summary))?;
            writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
            if *dump_matrix {
                let sm = lc.model.state_matrix()?;
                let p = write_artifact(&cfg.out_dir, "state_matrix.csv", &(hdr + &sm.to_csv()))?;
                writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
            }
            for m in &ia {
                writeln!(
                    out,
                    "{} inter-area: f = {:.4} Hz, zeta = {:.5} ({:.3}%)",
                    m.id,
                    m.freq_hz,
                    m.damping,
                    100.0 * m.damping
                )
                .map_err(io_err)?;
            }
            if !report.pass {
                writeln!(out, "warning: network assumptions not satisfied (see assumptions.json)").map_err(io_err)?;
            }
            Ok(0)
        }
        Command::Sweep {
            case,
            param,
            from,
            to,
            points,
            log,
            mp,
        } => {
            let mut cfg = base_config(cli, "sweep", Some(&case.case))?;
            let param = SweepParam::from(*param);
            cfg.sweep = Some(SweepSpec {
                param,
                from: *from,
                to: *to,
                points: *points,
                log: *log,
                at_droop: *mp,
            });
            let lc = load(&case.case)?;
            let model = match mp {
                Some(s) => lc.model.with_droop_setting(*s)?,
                None => lc.model,
            };
            let values = grid(*from, *to, *points, *log)?;
            let sr = sweep(&model, param, &values, *log, &cfg.modal())?;
            for w in &sr.warnings {
                eprintln!("warning: {w}");
            }
            let p = write_artifact(
                &cfg.out_dir,
                "locus.csv",
                &(csv_header(&lc.sha256, &cfg) + &locus_csv(&sr)),
            )?;
            writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
            let rev = detect_reversal(&sr);
            let p = write_artifact(&cfg.out_dir, "reversal.json", &json_artifact(&lc.sha256, &cfg, &rev))?;
            writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
            for r in rev.iter().filter(|r| r.inter_area) {
                match r.critical {
                    Some(c) => writeln!(out, "{}: interior damping maximum at {} = {:.6}", r.mode_id, param.as_str(), c),
                    None => writeln!(out, "{}: {}", r.mode_id, r.kind),
                }
                .map_err(io_err)?;
            }
            Ok(0)
        }
        Command::Sensitivity { case, mode, fd_step } => {
            let mut cfg = base_config(cli, "sensitivity", Some(&case.case))?;
            let h = fd_step.unwrap_or(FD_STEP_REL);
            if !(h > 0.0 && h < 1.0) {
                return Err(Error::Invalid(format!("--fd-step must lie in (0, 1), got {h}")));
            }
            cfg.mode = mode.clone();
            cfg.fd_step = Some(h);
            let lc = load(&case.case)?;
            let modes = analyze_model(&lc.model, &cfg)?;
            let sel = select_modes(&modes, mode.as_deref())?;
            let rows = sensitivity_reports(&lc.model.jac, &lc.model.park, &sel, h)?;
            let p = write_artifact(
                &cfg.out_dir,
                "sensitivity.csv",
                &(csv_header(&lc.sha256, &cfg) + &sensitivity_csv(&rows)),
            )?;
            writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
            for r in &rows {
                writeln!(
                    out,
                    "{}: dλ/dm_p = {:.6e} {:+.6e}j (FD rel. err {:.2e})",
                    r.mode_id, r.analytic.formula.0.re, r.analytic.formula.0.im, r.rel_err
                )
                .map_err(io_err)?;
            }
            Ok(0)
        }
        Command::CheckDesign { case, mode } => {
            let mut cfg = base_config(cli, "check-design", Some(&case.case))?;
            cfg.mode = mode.clone();
            let lc = load(&case.case)?;
            let modes = analyze_model(&lc.model, &cfg)?;
            let sel = select_modes(&modes, mode.as_deref())?;
            let m = &lc.model;
            let rep = design_report(&m.jac, &m.park, &m.strength, &sel)?;
            let p = write_artifact(&cfg.out_dir, "design.json", &json_artifact(&lc.sha256, &cfg, &rep))?;
            writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
            for d in &rep.modes {
                let ms = match (d.mstar_applicable, d.mstar) {
                    (true, Some(v)) => format!("m* = {v:.6e} (m_p = {:.6e})", rep.mp),
                    (true, None) => "m* unbounded".into(),
                    _ => "m* not applicable (preconditions fail)".into(),
                };
                writeln!(
                    out,
                    "{}: zeta = {:.5} ({:.3}%), enhancement by lower droop {}; {ms}",
                    d.mode_id, d.zeta, d.zeta_pct, d.damping_enhancement
                )
                .map_err(io_err)?;
            }
            Ok(0)
        }
        Command::Ringdown {
            case,
            perturb,
            horizon,
            dt,
            channel,
        } => {
            let mut cfg = base_config(cli, "ringdown", Some(&case.case))?;
            cfg.perturb = perturb.clone();
            cfg.horizon = Some(*horizon);
            cfg.dt = Some(*dt);
            if !(*horizon > 0.0) {
                return Err(Error::Invalid("--horizon must be positive".into()));
            }
            let lc = load(&case.case)?;
            let sm = lc.model.state_matrix()?;
            let x0 = perturbation(&sm.labels, perturb)?;
            let traj = simulate(&lc.model, &x0, *horizon, *dt)?;
            let p = write_artifact(
                &cfg.out_dir,
                "trajectory.csv",
                &(csv_header(&lc.sha256, &cfg) + &traj.to_csv()),
            )?;
            writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
            if traj.terminated {
                for e in &traj.events {
                    eprintln!("warning: {e}");
                }
            }
            let ch = match channel {
                Some(c) => sm
                    .state_index(c)
                    .ok_or_else(|| Error::Invalid(format!("unknown state label \"{c}\"")))?,
                None => {
                    let dev = traj.deviations();
                    (0..sm.dim())
                        .max_by(|&a, &b| {
                            let pa = dev.iter().map(|d| d[a].abs()).fold(0.0, f64::max);
                            let pb = dev.iter().map(|d| d[b].abs()).fold(0.0, f64::max);
                            pa.total_cmp(&pb)
                        })
                        .unwrap_or(0)
                }
            };
            match estimate_mode(&traj, ch) {
                ModeEstimate::Oscillatory {
                    freq_hz,
                    freq_unc_hz,
                    damping,
                    damping_unc,
                    snr,
                } => writeln!(
                    out,
                    "{}: f = {freq_hz:.4} ± {freq_unc_hz:.4} Hz, zeta = {damping:.5} ± {damping_unc:.5} ({:.3}%), SNR {snr:.1}",
                    sm.labels[ch],
                    100.0 * damping
                ),
                ModeEstimate::NonOscillatory => writeln!(out, "{}: non-oscillatory", sm.labels[ch]),
            }
            .map_err(io_err)?;
            Ok(0)
        }
        Command::Selftest { seed } => {
            let rep = selftest(*seed);
            write!(out, "{}", rep.render()).map_err(io_err)?;
            Ok(if rep.all_pass() { 0 } else { 2 })
        }
    }
}

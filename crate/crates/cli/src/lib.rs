//! `robreach` subcommands. Every command returns its exit code; input
//! problems (unreadable files, parse or validation errors) map to 2.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use robreach::decide::{check_certificate, robust_reach, ReachCertificate};
use robreach::format::{
    certificate_to_json, model_hash, model_to_json, parse_certificate, parse_model, parse_path, parse_replay,
    parse_trace_csv, trace_to_csv, CertificateFile, ReplayMove,
};
use robreach::model::{decompose_rate, instance_count, validate_problem, Bms, ReachProblem};
use robreach::rat::{format_rat, parse_rat, Rat};
use robreach::reductions::{decide_schedulable, decide_stable, follow_path, run_hold, sched_transform, schedulability_epsilon};
use robreach::sim::{check_trace, run_game, EnvStrategy, Outcome, Trace, DEFAULT_MAX_STEPS};
use robreach::testkit::{dnf_mode_bound, dnf_to_bms, DnfFormula};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "robreach", version, about = "Robust reachability for bounded-rate multi-mode systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide robust reachability and emit a certificate.
    Decide {
        model: PathBuf,
        #[arg(long)]
        cert_out: Option<PathBuf>,
    },
    /// Play the reachability game against an environment.
    Simulate {
        model: PathBuf,
        /// fixed:IDX | random:SEED | greedy | replay:PATH
        #[arg(long, default_value = "greedy")]
        env: String,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Decide whether the system can stay put (ignores start/target).
    Sched {
        model: PathBuf,
        /// Also play this many hold rounds from the start point.
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long, default_value = "greedy")]
        env: String,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Decide robust stability at the model's target.
    Stable {
        model: PathBuf,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Decide and play a waypoint path inside the model's safety set.
    Follow {
        model: PathBuf,
        path: PathBuf,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value = "greedy")]
        env: String,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
        /// Write one CSV per executed segment as PREFIX_<i>.csv.
        #[arg(long)]
        trace_prefix: Option<PathBuf>,
    },
    /// Build the reachability model of a DNF validity question.
    GenDnf {
        dnf: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a certificate (JSON) or a trace (CSV) against a model.
    Verify { model: PathBuf, file: PathBuf },
}

#[derive(Debug)]
pub struct InputError(pub String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

type CmdResult = Result<i32, InputError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_INPUT;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(InputError(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INPUT
        }
    }
}

pub fn execute(cmd: &Command, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Decide { model, cert_out } => cmd_decide(model, cert_out.as_deref(), out),
        Command::Simulate { model, env, max_steps, trace_out } => {
            cmd_simulate(model, env, *max_steps, trace_out.as_deref(), out)
        }
        Command::Sched { model, rounds, env, report_out } => cmd_sched(model, *rounds, env, report_out.as_deref(), out),
        Command::Stable { model, report_out } => cmd_stable(model, report_out.as_deref(), out),
        Command::Follow { model, path, eps, env, max_steps, trace_prefix } => {
            cmd_follow(model, path, eps, env, *max_steps, trace_prefix.as_deref(), out)
        }
        Command::GenDnf { dnf, out: target } => cmd_gen_dnf(dnf, target, out),
        Command::Verify { model, file } => cmd_verify(model, file, out),
    }
}

fn read(path: &FsPath) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn write_file(path: &FsPath, text: &str) -> Result<(), InputError> {
    fs::write(path, text).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

/// Model whose structure parses; problem-level checks are left to callers.
fn load_system(path: &FsPath) -> Result<(Bms, ReachProblem), InputError> {
    Ok(parse_model(&read(path)?)?)
}

fn load_model(path: &FsPath) -> Result<(Bms, ReachProblem), InputError> {
    let (bms, prob) = load_system(path)?;
    let report = validate_problem(&bms, &prob);
    if !report.is_valid() {
        return Err(InputError(format!("invalid model: {report}")));
    }
    Ok((bms, prob))
}

fn describe(out: &mut dyn Write, cert: &ReachCertificate) -> std::io::Result<()> {
    if let ReachCertificate::Unreachable { witness, hyperplane } = cert {
        writeln!(out, "witness instance {witness}")?;
        writeln!(out, "separating vector {hyperplane}")?;
    }
    Ok(())
}

pub fn cmd_decide(model: &FsPath, cert_out: Option<&FsPath>, out: &mut dyn Write) -> CmdResult {
    let (bms, prob) = load_system(model)?;
    let cert = robust_reach(&bms, &prob)?;
    let count = instance_count(&bms);
    let verdict = if cert.is_reachable() { "REACHABLE" } else { "UNREACHABLE" };
    writeln!(out, "{verdict} ({count} instances)")?;
    describe(out, &cert)?;
    if let Some(path) = cert_out {
        write_file(path, &certificate_to_json(&bms, &prob, &cert))?;
    }
    Ok(if cert.is_reachable() { EXIT_OK } else { EXIT_NEGATIVE })
}

/// `fixed:IDX`, `random:SEED`, `greedy` or `replay:PATH`.
pub fn parse_env(spec: &str, bms: &Bms) -> Result<EnvStrategy, InputError> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "greedy" if arg.is_empty() => Ok(EnvStrategy::GreedyAdversary),
        "fixed" => {
            let idx: usize = arg.parse().map_err(|_| InputError(format!("bad instance index `{arg}`")))?;
            EnvStrategy::fixed_by_index(bms, idx).ok_or_else(|| InputError(format!("instance index {idx} out of range")))
        }
        "random" => Ok(EnvStrategy::RandomMix(
            arg.parse().map_err(|_| InputError(format!("bad seed `{arg}`")))?,
        )),
        "replay" => {
            let moves = parse_replay(&read(FsPath::new(arg))?)?;
            let mut plain = Vec::with_capacity(moves.len());
            for (k, mv) in moves.into_iter().enumerate() {
                match mv {
                    ReplayMove::Theta(m, theta) => plain.push((m, theta)),
                    ReplayMove::Rate(m, rate) => {
                        if m >= bms.num_modes() {
                            return Err(InputError(format!("replay move {k}: mode {m} out of range")));
                        }
                        let theta = decompose_rate(bms.mode(m), &rate)
                            .map_err(|e| InputError(format!("replay move {k}: {e}")))?;
                        plain.push((m, theta));
                    }
                }
            }
            Ok(EnvStrategy::Replay(plain))
        }
        _ => Err(InputError(format!("unknown environment `{spec}`"))),
    }
}

fn summarize(out: &mut dyn Write, trace: &Trace, x0: &robreach::RVec) -> std::io::Result<()> {
    writeln!(out, "outcome: {}", trace.outcome)?;
    writeln!(out, "steps: {}", trace.steps.len())?;
    writeln!(out, "final point: {}", trace.final_point().unwrap_or(x0))?;
    let lambda = trace.final_lambda().map(format_rat).unwrap_or_else(|| "0".into());
    writeln!(out, "final lambda: {lambda}")
}

pub fn cmd_simulate(
    model: &FsPath,
    env: &str,
    max_steps: u64,
    trace_out: Option<&FsPath>,
    out: &mut dyn Write,
) -> CmdResult {
    let (bms, prob) = load_model(model)?;
    let env = parse_env(env, &bms)?;
    let trace = run_game(&bms, &prob, &env, max_steps);
    summarize(out, &trace, &prob.x0)?;
    if let Some(path) = trace_out {
        write_file(path, &trace_to_csv(&trace, bms.dim()))?;
    }
    Ok(if trace.outcome == Outcome::Reached { EXIT_OK } else { EXIT_NEGATIVE })
}

#[derive(Serialize)]
struct SchedReport {
    schedulable: bool,
    epsilon: String,
    certificate: CertificateFile,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    rounds: Vec<RoundSummary>,
}

#[derive(Serialize)]
struct RoundSummary {
    epsilon: String,
    steps: usize,
    elapsed: String,
    end: robreach::RVec,
}

pub fn cmd_sched(
    model: &FsPath,
    rounds: Option<usize>,
    env: &str,
    report_out: Option<&FsPath>,
    out: &mut dyn Write,
) -> CmdResult {
    let (bms, prob) = load_system(model)?;
    let cert = decide_schedulable(&bms);
    let ok = cert.is_reachable();
    writeln!(out, "{}", if ok { "SCHEDULABLE" } else { "NOT SCHEDULABLE" })?;
    describe(out, &cert)?;
    let mut summaries = Vec::new();
    if let (Some(k), true) = (rounds, ok) {
        let env = parse_env(env, &robreach::reductions::with_clock(&bms))?;
        let run = run_hold(&bms, &prob.x0, &prob.epsilon, k, &env)?;
        for (i, r) in run.rounds.iter().enumerate() {
            writeln!(
                out,
                "round {}: eps {} steps {} elapsed {} end {}",
                i + 1,
                format_rat(&r.epsilon),
                r.trace.steps.len(),
                format_rat(&r.elapsed),
                r.end
            )?;
            summaries.push(RoundSummary {
                epsilon: format_rat(&r.epsilon),
                steps: r.trace.steps.len(),
                elapsed: format_rat(&r.elapsed),
                end: r.end.clone(),
            });
        }
        writeln!(out, "total elapsed: {}", format_rat(&run.total_elapsed()))?;
    }
    if let Some(path) = report_out {
        let eps = schedulability_epsilon();
        let (aug, hold) = sched_transform(&bms, &eps);
        let report = SchedReport {
            schedulable: ok,
            epsilon: format_rat(&eps),
            certificate: CertificateFile::new(&aug, &hold, &cert),
            rounds: summaries,
        };
        write_file(path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_NEGATIVE })
}

#[derive(Serialize)]
struct StableReport {
    stable: bool,
    reach: CertificateFile,
    hold: CertificateFile,
}

pub fn cmd_stable(model: &FsPath, report_out: Option<&FsPath>, out: &mut dyn Write) -> CmdResult {
    let (bms, prob) = load_system(model)?;
    let verdict = decide_stable(&bms, &prob)?;
    let stable = verdict.is_stable();
    writeln!(out, "{}", if stable { "STABLE" } else { "NOT STABLE" })?;
    let reach = if verdict.reach.is_reachable() { "reachable" } else { "unreachable" };
    writeln!(out, "reach at eps/2: {reach}")?;
    describe(out, &verdict.reach)?;
    let hold = if verdict.hold.is_reachable() { "schedulable" } else { "not schedulable" };
    writeln!(out, "hold: {hold}")?;
    describe(out, &verdict.hold)?;
    if let Some(path) = report_out {
        let mut half = prob.clone();
        half.epsilon = &prob.epsilon / Rat::from_integer(2.into());
        let (aug, hold_prob) = sched_transform(&bms, &schedulability_epsilon());
        let report = StableReport {
            stable,
            reach: CertificateFile::new(&bms, &half, &verdict.reach),
            hold: CertificateFile::new(&aug, &hold_prob, &verdict.hold),
        };
        write_file(path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(if stable { EXIT_OK } else { EXIT_NEGATIVE })
}

pub fn cmd_follow(
    model: &FsPath,
    path_file: &FsPath,
    eps: &str,
    env: &str,
    max_steps: u64,
    trace_prefix: Option<&FsPath>,
    out: &mut dyn Write,
) -> CmdResult {
    let (bms, prob) = load_system(model)?;
    let path = parse_path(&read(path_file)?)?;
    if path.waypoints()[0].len() != bms.dim() {
        return Err(InputError("path dimension differs from the model".into()));
    }
    let eps = parse_rat(eps)?;
    let env = parse_env(env, &bms)?;
    let report = follow_path(&bms, &prob.safety, &path, &eps, &env, max_steps);
    for seg in &report.segments {
        let verdict = match &seg.decision {
            Ok(c) if c.is_reachable() => "reachable".to_string(),
            Ok(ReachCertificate::Unreachable { witness, .. }) => format!("unreachable (witness {witness})"),
            Ok(_) => unreachable!(),
            Err(e) => format!("invalid: {e}"),
        };
        let corridor = if seg.corridor_fallback { "safety set" } else { "corridor" };
        writeln!(out, "segment {}: eps {} {corridor} {verdict}", seg.index, format_rat(&seg.epsilon))?;
        if let Some(run) = &seg.run {
            writeln!(
                out,
                "  played {} steps: {} at {}{}",
                run.trace.steps.len(),
                run.trace.outcome,
                run.achieved,
                if run.corridor_fallback { " (safety set)" } else { "" }
            )?;
            if let Some(prefix) = trace_prefix {
                let file = PathBuf::from(format!("{}_{}.csv", prefix.display(), seg.index));
                write_file(&file, &trace_to_csv(&run.trace, bms.dim()))?;
            }
        }
    }
    writeln!(out, "cumulative tolerance: {}", format_rat(&report.cumulative_tolerance))?;
    let ok = report.followable() && report.executed();
    writeln!(out, "{}", if ok { "FOLLOWED" } else if report.followable() { "NOT COMPLETED" } else { "NOT FOLLOWABLE" })?;
    Ok(if ok { EXIT_OK } else { EXIT_NEGATIVE })
}

pub fn cmd_gen_dnf(dnf: &FsPath, target: &FsPath, out: &mut dyn Write) -> CmdResult {
    let formula: DnfFormula = serde_json::from_str(&read(dnf)?)?;
    let (bms, prob) = dnf_to_bms(&formula);
    let bound = dnf_mode_bound(&formula);
    writeln!(out, "modes: {}", bms.num_modes())?;
    writeln!(out, "variables: {}", bms.dim())?;
    writeln!(
        out,
        "mode bound 7m+2n+3 = {bound}: {}",
        if bms.num_modes() <= bound { "ok" } else { "exceeded" }
    )?;
    write_file(target, &model_to_json(&bms, &prob))?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(model: &FsPath, file: &FsPath, out: &mut dyn Write) -> CmdResult {
    let (bms, prob) = load_system(model)?;
    let text = read(file)?;
    if text.trim_start().starts_with('{') {
        let cert_file = parse_certificate(&text)?;
        if cert_file.model_hash != model_hash(&bms, &prob) {
            writeln!(out, "REJECTED: certificate was issued for a different model")?;
            return Ok(EXIT_NEGATIVE);
        }
        if cert_file.instances.to_string() != instance_count(&bms).to_string() {
            writeln!(out, "REJECTED: instance count {} does not match the model", cert_file.instances)?;
            return Ok(EXIT_NEGATIVE);
        }
        let cert = match cert_file.to_certificate() {
            Ok(cert) => cert,
            Err(e) => {
                writeln!(out, "REJECTED: {e}")?;
                return Ok(EXIT_NEGATIVE);
            }
        };
        return Ok(match check_certificate(&bms, &prob, &cert) {
            Ok(()) => {
                writeln!(out, "VALID certificate")?;
                EXIT_OK
            }
            Err(fault) => {
                writeln!(out, "REJECTED: {fault}")?;
                EXIT_NEGATIVE
            }
        });
    }

    let steps = parse_trace_csv(&text, bms.dim())?;
    let outcome = match steps.last() {
        Some(last) if last.x_after.dist2_sq(&prob.xt) <= &prob.epsilon * &prob.epsilon => Outcome::Reached,
        Some(_) => Outcome::StepLimit,
        None => match robust_reach(&bms, &prob) {
            Ok(ReachCertificate::Unreachable { witness, .. }) => Outcome::NotRobustlyReachable(witness),
            Ok(_) if prob.x0.dist2_sq(&prob.xt) <= &prob.epsilon * &prob.epsilon => Outcome::Reached,
            Ok(_) => Outcome::StepLimit,
            Err(e) => Outcome::InvalidProblem(e.to_string()),
        },
    };
    let trace = Trace { steps, outcome };
    let report = check_trace(&trace, &bms, &prob);
    if report.is_clean() {
        writeln!(out, "VALID trace ({} steps, {})", trace.steps.len(), trace.outcome)?;
        Ok(EXIT_OK)
    } else {
        writeln!(out, "REJECTED trace:")?;
        for issue in &report.issues {
            writeln!(out, "  {issue:?}")?;
        }
        Ok(EXIT_NEGATIVE)
    }
}

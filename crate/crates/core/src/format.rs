//! File formats: model JSON, certificates, trace CSV, replay files and
//! path files. Rationals are written as integers or `"p/q"` strings and
//! read back exactly.

use std::fmt::Write as _;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decide::{ReachCertificate, SigmaTable};
use crate::model::{instance_count, Bms, CmsInstance, HPolytope, HalfSpace, ModelError, Mode, ReachProblem};
use crate::rat::{format_rat, parse_rat, Rat, RVec};
use crate::reductions::{Path, PathError};
use crate::sim::{StepRecord, Trace};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("path: {0}")]
    Path(#[from] PathError),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn line_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Line { line, msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeFile {
    pub name: String,
    pub vertices: Vec<RVec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowFile {
    pub a: RVec,
    #[serde(with = "crate::rat::serde_rat")]
    pub b: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyFile {
    pub rows: Vec<RowFile>,
}

/// On-disk model: a system plus one reachability question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub modes: Vec<ModeFile>,
    pub safety: SafetyFile,
    pub start: RVec,
    pub target: RVec,
    #[serde(with = "crate::rat::serde_rat")]
    pub epsilon: Rat,
}

impl ModelFile {
    pub fn from_parts(bms: &Bms, prob: &ReachProblem) -> Self {
        ModelFile {
            n: bms.dim(),
            modes: bms
                .modes()
                .iter()
                .map(|m| ModeFile { name: m.name().to_string(), vertices: m.vertices().to_vec() })
                .collect(),
            safety: SafetyFile {
                rows: prob.safety.rows.iter().map(|h| RowFile { a: h.a.clone(), b: h.b.clone() }).collect(),
            },
            start: prob.x0.clone(),
            target: prob.xt.clone(),
            epsilon: prob.epsilon.clone(),
        }
    }

    /// Structural conversion; problem-level checks (interiority, bounded
    /// safety, ...) are left to [`crate::model::validate_problem`].
    pub fn into_parts(self) -> Result<(Bms, ReachProblem), FormatError> {
        let modes = self
            .modes
            .into_iter()
            .map(|m| Mode::new(m.name, m.vertices))
            .collect::<Result<Vec<_>, _>>()?;
        let bms = Bms::new(self.n, modes)?;
        let prob = ReachProblem {
            x0: self.start,
            xt: self.target,
            epsilon: self.epsilon,
            safety: HPolytope::new(self.safety.rows.into_iter().map(|r| HalfSpace::new(r.a, r.b)).collect()),
        };
        Ok((bms, prob))
    }
}

pub fn parse_model(text: &str) -> Result<(Bms, ReachProblem), FormatError> {
    serde_json::from_str::<ModelFile>(text)?.into_parts()
}

pub fn model_to_json(bms: &Bms, prob: &ReachProblem) -> String {
    serde_json::to_string_pretty(&ModelFile::from_parts(bms, prob)).expect("serializable")
}

/// SHA-256 (hex) of the compact canonical JSON of the model, so formatting
/// differences in the source file do not matter.
pub fn model_hash(bms: &Bms, prob: &ReachProblem) -> String {
    let canonical = serde_json::to_string(&ModelFile::from_parts(bms, prob)).expect("serializable");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Reachable,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub instance: Vec<usize>,
    pub sigma: RVec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub verdict: Verdict,
    /// Number of extreme-rate instances of the model.
    pub instances: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<TableEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperplane: Option<RVec>,
    pub model_hash: String,
}

impl CertificateFile {
    pub fn new(bms: &Bms, prob: &ReachProblem, cert: &ReachCertificate) -> Self {
        let instances = instance_count(bms).to_u64().unwrap_or(u64::MAX);
        let model_hash = model_hash(bms, prob);
        match cert {
            ReachCertificate::Reachable(table) => CertificateFile {
                verdict: Verdict::Reachable,
                instances,
                table: Some(
                    table
                        .iter()
                        .map(|(inst, sigma)| TableEntry { instance: inst.choice.clone(), sigma: sigma.clone() })
                        .collect(),
                ),
                witness: None,
                hyperplane: None,
                model_hash,
            },
            ReachCertificate::Unreachable { witness, hyperplane } => CertificateFile {
                verdict: Verdict::Unreachable,
                instances,
                table: None,
                witness: Some(witness.choice.clone()),
                hyperplane: Some(hyperplane.clone()),
                model_hash,
            },
        }
    }

    pub fn to_certificate(&self) -> Result<ReachCertificate, FormatError> {
        match self.verdict {
            Verdict::Reachable => {
                let entries = self.table.as_ref().ok_or_else(|| FormatError::Invalid("reachable certificate without table".into()))?;
                let mut table = SigmaTable::new();
                for e in entries {
                    if table.insert(CmsInstance::new(e.instance.clone()), e.sigma.clone()).is_some() {
                        return Err(FormatError::Invalid(format!("instance {:?} listed twice", e.instance)));
                    }
                }
                Ok(ReachCertificate::Reachable(table))
            }
            Verdict::Unreachable => match (&self.witness, &self.hyperplane) {
                (Some(w), Some(h)) => Ok(ReachCertificate::Unreachable {
                    witness: CmsInstance::new(w.clone()),
                    hyperplane: h.clone(),
                }),
                _ => Err(FormatError::Invalid("unreachable certificate needs witness and hyperplane".into())),
            },
        }
    }
}

pub fn certificate_to_json(bms: &Bms, prob: &ReachProblem, cert: &ReachCertificate) -> String {
    serde_json::to_string_pretty(&CertificateFile::new(bms, prob, cert)).expect("serializable")
}

pub fn parse_certificate(text: &str) -> Result<CertificateFile, FormatError> {
    Ok(serde_json::from_str(text)?)
}

fn join_rats<'a>(values: impl IntoIterator<Item = &'a Rat>, sep: &str) -> String {
    values.into_iter().map(format_rat).collect::<Vec<_>>().join(sep)
}

pub fn trace_csv_header(n: usize) -> String {
    let mut cols = vec!["step".to_string(), "mode".into(), "duration".into(), "theta".into()];
    cols.extend((0..n).map(|j| format!("x_before_{j}")));
    cols.extend((0..n).map(|j| format!("x_after_{j}")));
    cols.push("lambda".into());
    cols.join(",")
}

/// Wide CSV, one row per step. `theta` is a `;`-joined list.
pub fn trace_to_csv(trace: &Trace, n: usize) -> String {
    let mut out = trace_csv_header(n);
    out.push('\n');
    for (i, s) in trace.steps.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i,
            s.mode,
            format_rat(&s.duration),
            join_rats(&s.theta, ";"),
            join_rats(s.x_before.iter(), ","),
            join_rats(s.x_after.iter(), ","),
            format_rat(&s.lambda)
        );
    }
    out
}

/// Reads steps back from [`trace_to_csv`] output. Per-mode contributions
/// are not part of the file and come back empty.
pub fn parse_trace_csv(text: &str, n: usize) -> Result<Vec<StepRecord>, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == trace_csv_header(n) => {}
        Some((i, _)) => return Err(line_err(i + 1, "unexpected header")),
        None => return Err(line_err(1, "empty trace file")),
    }
    let rat_at = |i: usize, t: &str| parse_rat(t).map_err(|e| line_err(i + 1, e.to_string()));
    let mut steps = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 + 2 * n {
            return Err(line_err(i + 1, format!("expected {} columns, got {}", 5 + 2 * n, cells.len())));
        }
        let step: usize = cells[0].trim().parse().map_err(|_| line_err(i + 1, "bad step index"))?;
        if step != steps.len() {
            return Err(line_err(i + 1, format!("step {step} out of order")));
        }
        let mode = cells[1].trim().parse().map_err(|_| line_err(i + 1, "bad mode index"))?;
        let duration = rat_at(i, cells[2])?;
        let theta = cells[3].split(';').map(|t| rat_at(i, t)).collect::<Result<Vec<_>, _>>()?;
        let x_before = cells[4..4 + n].iter().map(|t| rat_at(i, t)).collect::<Result<RVec, _>>()?;
        let x_after = cells[4 + n..4 + 2 * n].iter().map(|t| rat_at(i, t)).collect::<Result<RVec, _>>()?;
        let lambda = rat_at(i, cells[4 + 2 * n])?;
        steps.push(StepRecord { mode, theta, duration, x_before, x_after, lambda, contributions: Vec::new() });
    }
    Ok(steps)
}

/// One environment move from a replay file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayMove {
    /// Convex weights over the mode's vertices.
    Theta(usize, Vec<Rat>),
    /// A raw rate vector, to be decomposed over the vertices.
    Rate(usize, RVec),
}

/// Lines `mode;θ_0,θ_1,…` or `mode;rate:r_0,r_1,…`. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_replay(text: &str) -> Result<Vec<ReplayMove>, FormatError> {
    let mut moves = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (mode, rest) = line.split_once(';').ok_or_else(|| line_err(i + 1, "missing `;`"))?;
        let mode: usize = mode.trim().parse().map_err(|_| line_err(i + 1, "bad mode index"))?;
        let (is_rate, list) = match rest.trim().strip_prefix("rate:") {
            Some(r) => (true, r),
            None => (false, rest),
        };
        let values = list
            .split(',')
            .map(|t| parse_rat(t).map_err(|e| line_err(i + 1, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        moves.push(if is_rate { ReplayMove::Rate(mode, RVec(values)) } else { ReplayMove::Theta(mode, values) });
    }
    Ok(moves)
}

pub fn replay_to_string(moves: &[(usize, Vec<Rat>)]) -> String {
    moves.iter().fold(String::new(), |mut s, (m, theta)| {
        let _ = writeln!(s, "{m};{}", join_rats(theta, ","));
        s
    })
}

/// A JSON list of waypoints.
pub fn parse_path(text: &str) -> Result<Path, FormatError> {
    let wps: Vec<RVec> = serde_json::from_str(text)?;
    Ok(Path::new(wps)?)
}

pub fn path_to_json(path: &Path) -> String {
    serde_json::to_string(path.waypoints()).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decide::robust_reach;
    use crate::examples::*;
    use crate::rat::{int, rat};
    use crate::sim::{run_game, EnvStrategy};

    #[test]
    fn model_round_trip_is_exact() {
        let bms = climb_bms();
        let prob = climb_problem();
        let text = model_to_json(&bms, &prob);
        assert!(text.contains("\"-6/5\""));
        assert!(text.contains("\"epsilon\": \"1/10\""));
        let (b2, p2) = parse_model(&text).unwrap();
        assert_eq!(b2, bms);
        assert_eq!(p2, prob);
        assert_eq!(model_hash(&b2, &p2), model_hash(&bms, &prob));
        assert_eq!(model_hash(&bms, &prob).len(), 64);

        let mut other = prob.clone();
        other.epsilon = rat(1, 11);
        assert_ne!(model_hash(&bms, &other), model_hash(&bms, &prob));
    }

    #[test]
    fn model_parse_errors() {
        assert!(matches!(parse_model("{"), Err(FormatError::Json(_))));
        let bad_rat = r#"{"n":1,"modes":[{"name":"a","vertices":[["1/0"]]}],"safety":{"rows":[]},"start":[0],"target":[1],"epsilon":"1/2"}"#;
        assert!(matches!(parse_model(bad_rat), Err(FormatError::Json(_))));
        let bad_dim = r#"{"n":2,"modes":[{"name":"a","vertices":[[1]]}],"safety":{"rows":[]},"start":[0,0],"target":[1,0],"epsilon":"1/2"}"#;
        assert!(matches!(parse_model(bad_dim), Err(FormatError::Model(_))));
        let ok = r#"{"n":1,"modes":[{"name":"a","vertices":[[1],["-2/4"]]}],"safety":{"rows":[{"a":[1],"b":2}]},"start":[0],"target":[1],"epsilon":"1/2"}"#;
        let (bms, _) = parse_model(ok).unwrap();
        assert_eq!(bms.mode(0).vertex(1), &RVec(vec![rat(-1, 2)]));
    }

    #[test]
    fn certificate_round_trip() {
        let bms = climb_bms();
        let prob = climb_problem();
        let cert = robust_reach(&bms, &prob).unwrap();
        let file = parse_certificate(&certificate_to_json(&bms, &prob, &cert)).unwrap();
        assert_eq!(file.verdict, Verdict::Reachable);
        assert_eq!(file.instances, 2);
        assert_eq!(file.to_certificate().unwrap(), cert);

        let bms = updown_bms();
        let prob = updown_problem();
        let cert = robust_reach(&bms, &prob).unwrap();
        let text = certificate_to_json(&bms, &prob, &cert);
        assert!(text.contains("\"witness\""));
        assert_eq!(parse_certificate(&text).unwrap().to_certificate().unwrap(), cert);
    }

    #[test]
    fn trace_csv_round_trip() {
        let bms = climb_bms();
        let prob = climb_problem();
        let trace = run_game(&bms, &prob, &EnvStrategy::RandomMix(42), 100_000);
        let csv = trace_to_csv(&trace, 2);
        assert!(csv.starts_with("step,mode,duration,theta,x_before_0,x_before_1,x_after_0,x_after_1,lambda\n"));
        let steps = parse_trace_csv(&csv, 2).unwrap();
        assert_eq!(steps.len(), trace.steps.len());
        for (a, b) in steps.iter().zip(&trace.steps) {
            assert_eq!((a.mode, &a.theta, &a.duration, &a.x_before, &a.x_after, &a.lambda), (b.mode, &b.theta, &b.duration, &b.x_before, &b.x_after, &b.lambda));
        }
        assert!(parse_trace_csv("step,mode\n", 2).is_err());
    }

    #[test]
    fn replay_and_path_formats() {
        let moves = parse_replay("# demo\n2;1/2,1/2\n\n0;1\n2;rate:0,8/5\n").unwrap();
        assert_eq!(moves[0], ReplayMove::Theta(2, vec![rat(1, 2), rat(1, 2)]));
        assert_eq!(moves[1], ReplayMove::Theta(0, vec![int(1)]));
        assert_eq!(moves[2], ReplayMove::Rate(2, RVec(vec![int(0), rat(8, 5)])));
        assert!(parse_replay("x;1").is_err());
        assert_eq!(replay_to_string(&[(2, vec![rat(1, 2), rat(1, 2)])]), "2;1/2,1/2\n");

        let path = parse_path(r#"[[0,0],["0","3/2"],[0,3]]"#).unwrap();
        assert_eq!(path.waypoints()[1], RVec(vec![int(0), rat(3, 2)]));
        assert_eq!(parse_path(&path_to_json(&path)).unwrap(), path);
        assert!(matches!(parse_path("[[0]]"), Err(FormatError::Path(_))));
    }
}

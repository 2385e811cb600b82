//! Repair: re-optimize the sub-MIP described by a destroy delta, either with
//! the built-in branch-and-bound or with an external solver process.

use std::fs;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::bnb::{solve_mip, MipResult, MipStatus, SolveLimits};
use crate::model::{MipInstance, ModelError, Relation, SolutionState, SubMipDelta};
use crate::mps::{parse_solution_file, write_mps, write_solution_file};

/// Grace period between the solver's time limit and killing its process.
pub const KILL_GRACE: Duration = Duration::from_secs(5);
const DEFAULT_EXTERNAL_LIMIT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("invalid destroy delta: {0}")]
    Delta(#[from] ModelError),
    #[error("external solver i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("external solver exited with {status}\n{output}")]
    Exit { status: String, output: String },
    #[error("external solver killed after {0:?}\n{1}")]
    Timeout(Duration, String),
    #[error("external solver produced an unusable solution: {message}\n{output}")]
    BadSolution { message: String, output: String },
}

#[derive(Debug, Error, PartialEq)]
#[error("external command template must contain {{input}} and {{output}}: {0:?}")]
pub struct TemplateError(pub String);

/// Shell command with `{input}`, `{output}`, `{timelimit}` and optionally
/// `{warmstart}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCommand {
    template: String,
}

impl ExternalCommand {
    pub fn new(template: impl Into<String>) -> Result<Self, TemplateError> {
        let template = template.into();
        if !template.contains("{input}") || !template.contains("{output}") {
            return Err(TemplateError(template));
        }
        Ok(ExternalCommand { template })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    fn render(&self, input: &Path, output: &Path, limit: Duration, warm: Option<&Path>) -> String {
        let secs = limit.as_secs() + u64::from(limit.subsec_nanos() > 0);
        self.template
            .replace("{input}", &shell_quote(input))
            .replace("{output}", &shell_quote(output))
            .replace("{timelimit}", &secs.max(1).to_string())
            .replace("{warmstart}", &warm.map(shell_quote).unwrap_or_default())
    }
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Backend {
    #[default]
    Builtin,
    External(ExternalCommand),
}

#[derive(Debug, Clone)]
pub struct RepairRequest<'a> {
    pub base: &'a MipInstance,
    pub delta: &'a SubMipDelta,
    pub limits: SolveLimits,
    /// Pre-destroy state over the base variables; used only when it is
    /// feasible for the sub-MIP.
    pub warm_start: Option<&'a SolutionState>,
}

#[derive(Debug, Clone)]
pub struct Repaired {
    /// Result on the sub-MIP (objective is the sub-MIP's own).
    pub result: MipResult,
    /// The repaired point restricted to base variables, valued with the
    /// base objective.
    pub candidate: Option<SolutionState>,
    /// Whether the warm start was feasible and handed to the solver.
    pub warm_started: bool,
}

pub fn repair(request: &RepairRequest<'_>, backend: &Backend) -> Result<Repaired, RepairError> {
    let sub = request.base.apply_delta(request.delta)?;
    let warm = request
        .warm_start
        .and_then(|ws| lift_warm_start(request.base, &sub, request.delta, ws));
    let result = match backend {
        Backend::Builtin => {
            let mut limits = request.limits.clone();
            limits.incumbent_warm_start = warm.clone();
            solve_mip(&sub, &limits)
        }
        Backend::External(cmd) => run_external(&sub, cmd, &request.limits, warm.as_ref())?,
    };
    let candidate = result.best.as_ref().map(|_| project(&result, request.base));
    Ok(Repaired {
        result,
        candidate,
        warm_started: warm.is_some(),
    })
}

/// Base objective of the point in `result`, ignoring trailing slack
/// variables.
///
/// # Panics
/// When `result` carries no solution.
pub fn original_objective_of(result: &MipResult, base: &MipInstance) -> f64 {
    project(result, base).objective()
}

fn project(result: &MipResult, base: &MipInstance) -> SolutionState {
    let best = result
        .best
        .as_ref()
        .expect("original_objective_of requires a result with a solution");
    let values = best.values()[..base.num_vars()].to_vec();
    SolutionState::new(base, values).expect("projected point has base dimension")
}

/// Extends a base-space state with slack values that satisfy the added rows
/// where possible, returning it when feasible for `sub`.
fn lift_warm_start(
    base: &MipInstance,
    sub: &MipInstance,
    delta: &SubMipDelta,
    ws: &SolutionState,
) -> Option<SolutionState> {
    let n = base.num_vars();
    if ws.values().len() != n {
        return None;
    }
    let mut x = ws.values().to_vec();
    x.extend(delta.slack_vars.iter().map(|s| s.lower.max(0.0).min(s.upper)));
    for row in &delta.added_constraints {
        let slacks: Vec<(usize, f64)> = row.coeffs().iter().copied().filter(|&(k, _)| k >= n).collect();
        if let [(k, a)] = slacks[..] {
            let rest: f64 = row
                .coeffs()
                .iter()
                .filter(|&&(j, _)| j != k)
                .map(|&(j, c)| c * x[j])
                .sum();
            let needed = (row.rhs - rest) / a;
            let s = delta.slack_vars[k - n];
            let value = match (row.relation, a > 0.0) {
                (Relation::Le, true) | (Relation::Ge, false) => x[k].min(needed),
                (Relation::Le, false) | (Relation::Ge, true) => x[k].max(needed),
                (Relation::Eq, _) => needed,
            };
            x[k] = value.clamp(s.lower, s.upper);
        }
    }
    if sub.is_feasible(&x) {
        SolutionState::new(sub, x).ok()
    } else {
        None
    }
}

fn run_external(
    sub: &MipInstance,
    cmd: &ExternalCommand,
    limits: &SolveLimits,
    warm: Option<&SolutionState>,
) -> Result<MipResult, RepairError> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("sub.mps");
    let output = dir.path().join("sub.sol");
    fs::write(&input, write_mps(sub))?;
    let warm_path = match warm {
        Some(ws) => {
            let p = dir.path().join("warm.sol");
            fs::write(&p, write_solution_file(sub, ws.values(), None))?;
            Some(p)
        }
        None => None,
    };
    let limit = limits.time_limit.unwrap_or(DEFAULT_EXTERNAL_LIMIT);
    let line = cmd.render(&input, &output, limit, warm_path.as_deref());
    let log_path = dir.path().join("solver.log");
    let log = fs::File::create(&log_path)?;

    let start = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&line)
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log)
        .spawn()?;
    let deadline = limit + KILL_GRACE;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() > deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(RepairError::Timeout(deadline, read_log(&log_path)));
        }
        thread::sleep(Duration::from_millis(5));
    };
    if !status.success() {
        return Err(RepairError::Exit {
            status: status.to_string(),
            output: read_log(&log_path),
        });
    }
    let bad = |message: String| RepairError::BadSolution {
        message,
        output: read_log(&log_path),
    };
    let text = fs::read_to_string(&output).map_err(|e| bad(format!("reading {}: {e}", output.display())))?;
    let sol = parse_solution_file(&text).map_err(|e| bad(e.to_string()))?;
    let declared = sol.status.as_deref().map(str::to_ascii_lowercase);
    let wall_time = start.elapsed();
    let empty = |status| MipResult {
        wall_time,
        ..MipResult::without_solution(status)
    };
    if matches!(declared.as_deref(), Some("infeasible")) {
        return Ok(empty(MipStatus::Infeasible));
    }
    if sol.values.is_empty() {
        return Ok(empty(MipStatus::LimitReachedNoIncumbent));
    }
    let values = sol.to_dense(sub);
    if !sub.is_feasible(&values) {
        return Err(bad("returned point violates the sub-MIP".into()));
    }
    let state = SolutionState::new(sub, values).map_err(|e| bad(e.to_string()))?;
    let status = match declared.as_deref() {
        Some("optimal") => MipStatus::Optimal,
        _ => MipStatus::Feasible,
    };
    let objective = state.objective();
    Ok(MipResult {
        status,
        best: Some(state),
        dual_bound: if status == MipStatus::Optimal { objective } else { f64::NEG_INFINITY },
        wall_time,
        ..MipResult::without_solution(status)
    })
}

fn read_log(path: &Path) -> String {
    let mut s = String::new();
    if let Ok(mut f) = fs::File::open(path) {
        let _ = f.read_to_string(&mut s);
    }
    const KEEP: usize = 4000;
    if s.len() > KEEP {
        let mut cut = s.len() - KEEP;
        while !s.is_char_boundary(cut) {
            cut += 1;
        }
        s = s[cut..].to_string();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::ks3;
    use crate::model::{LinearConstraint, ObjectiveReplacement, SlackVar};

    fn state(inst: &MipInstance, x: &[f64]) -> SolutionState {
        SolutionState::new(inst, x.to_vec()).unwrap()
    }

    #[test]
    fn builtin_with_fixing_and_warm_start() {
        let base = ks3();
        let mut delta = SubMipDelta::default();
        delta.fixings.insert(2, 1.0);
        let ws = state(&base, &[0.0, 1.0, 1.0]);
        let req = RepairRequest {
            base: &base,
            delta: &delta,
            limits: SolveLimits::nodes(1000),
            warm_start: Some(&ws),
        };
        let out = repair(&req, &Backend::Builtin).unwrap();
        assert!(out.warm_started);
        let c = out.candidate.unwrap();
        assert_eq!(c.values(), &[1.0, 0.0, 1.0]);
        assert_eq!(c.objective(), -8.0);
    }

    #[test]
    fn surrogate_objective_reports_original_value() {
        let base = ks3();
        let delta = SubMipDelta {
            objective_replacement: Some(ObjectiveReplacement {
                coeffs: vec![(0, 0.5), (1, -0.25)],
                constant: 0.0,
            }),
            ..Default::default()
        };
        let req = RepairRequest {
            base: &base,
            delta: &delta,
            limits: SolveLimits::nodes(1000),
            warm_start: None,
        };
        let out = repair(&req, &Backend::Builtin).unwrap();
        // surrogate optimum: x2 = 1, x1 = 0, x3 free at zero cost
        let c = out.candidate.unwrap();
        assert_eq!(c.values()[..2], [0.0, 1.0]);
        assert_eq!(c.objective(), base.evaluate_objective(c.values()).unwrap());
        assert_eq!(out.result.best.unwrap().objective(), -0.25);
    }

    #[test]
    fn slacks_are_ignored_and_warm_start_lifted() {
        let base = ks3();
        let n = base.num_vars();
        // c·x <= -8.05 + s, minimize hamming distance from (0,1,1) + 100 s
        let delta = SubMipDelta {
            added_constraints: vec![LinearConstraint::new(
                "target",
                [(0, -5.0), (1, -4.0), (2, -3.0), (n, -1.0)],
                Relation::Le,
                -8.05,
            )],
            objective_replacement: Some(ObjectiveReplacement {
                coeffs: vec![(0, 1.0), (1, -1.0), (2, -1.0)],
                constant: 2.0,
            }),
            slack_vars: vec![SlackVar {
                lower: 0.0,
                upper: f64::INFINITY,
                penalty: 100.0,
            }],
            ..Default::default()
        };
        let ws = state(&base, &[0.0, 1.0, 1.0]);
        let req = RepairRequest {
            base: &base,
            delta: &delta,
            limits: SolveLimits::nodes(1000),
            warm_start: Some(&ws),
        };
        let out = repair(&req, &Backend::Builtin).unwrap();
        assert!(out.warm_started);
        let best = out.result.best.as_ref().unwrap();
        assert_eq!(best.values().len(), n + 1);
        assert!((best.values()[n] - 0.05).abs() < 1e-9);
        assert_eq!(original_objective_of(&out.result, &base), -8.0);
    }

    #[test]
    fn infeasible_sub_mip_has_no_candidate() {
        let base = ks3();
        let mut delta = SubMipDelta::default();
        delta.fixings.insert(0, 1.0);
        delta.fixings.insert(1, 1.0);
        let req = RepairRequest {
            base: &base,
            delta: &delta,
            limits: SolveLimits::nodes(100),
            warm_start: None,
        };
        let out = repair(&req, &Backend::Builtin).unwrap();
        assert_eq!(out.result.status, MipStatus::Infeasible);
        assert!(out.candidate.is_none());
    }

    #[test]
    #[should_panic(expected = "requires a result with a solution")]
    fn original_objective_needs_a_solution() {
        original_objective_of(&MipResult::without_solution(MipStatus::Infeasible), &ks3());
    }

    #[test]
    fn template_placeholders_required() {
        assert!(ExternalCommand::new("solver {input}").is_err());
        let cmd = ExternalCommand::new("s {input} {output} {timelimit}").unwrap();
        let line = cmd.render(Path::new("/a b"), Path::new("/o"), Duration::from_millis(1500), None);
        assert_eq!(line, "s '/a b' '/o' 2");
    }

    #[test]
    fn external_stub_copies_warm_start() {
        let base = ks3();
        let delta = SubMipDelta::default();
        let ws = state(&base, &[0.0, 1.0, 1.0]);
        let cmd = ExternalCommand::new("cp {warmstart} {output} # {input}").unwrap();
        let req = RepairRequest {
            base: &base,
            delta: &delta,
            limits: SolveLimits::nodes(10).with_time(Duration::from_secs(5)),
            warm_start: Some(&ws),
        };
        let out = repair(&req, &Backend::External(cmd)).unwrap();
        assert_eq!(out.result.status, MipStatus::Feasible);
        assert_eq!(out.candidate.unwrap().values(), ws.values());
    }

    #[test]
    fn external_failures_carry_output() {
        let base = ks3();
        let delta = SubMipDelta::default();
        let req = RepairRequest {
            base: &base,
            delta: &delta,
            limits: SolveLimits::default().with_time(Duration::from_secs(1)),
            warm_start: None,
        };
        let cmd = ExternalCommand::new("echo boom >&2; exit 3 # {input} {output}").unwrap();
        match repair(&req, &Backend::External(cmd)) {
            Err(RepairError::Exit { output, .. }) => assert!(output.contains("boom")),
            other => panic!("unexpected {other:?}"),
        }
        let cmd = ExternalCommand::new("echo 'x1 oops' > {output} # {input}").unwrap();
        assert!(matches!(
            repair(&req, &Backend::External(cmd)),
            Err(RepairError::BadSolution { .. })
        ));
        let cmd = ExternalCommand::new("printf '# status infeasible\\n' > {output} # {input}").unwrap();
        let out = repair(&req, &Backend::External(cmd)).unwrap();
        assert_eq!(out.result.status, MipStatus::Infeasible);
    }
}

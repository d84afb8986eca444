//! Structured reports: every operation builds a JSON value and a plain-text rendering side by side.

use crate::ambiguity::{rectangularity_probe, AmbiguityModel, Rectangularity, StageAmbiguity};
use crate::cost::CostProblem;
use crate::fixtures::FixtureRun;
use crate::io::LoadedInstance;
use crate::mdp::{MdpInstance, RandomizedPolicy, StageKernel, ValueTable};
use crate::oracle::{check_equivalence, enlargement_invariance, OracleConfig};
use crate::risk::{build_avar_ambiguity, solve_nested_risk};
use crate::robust::{ConvexityCheck, RobustProblem, GAP_TOL};
use crate::soc::{build_soc_ambiguity, soc_rectangularity_probe, solve_soc, SocProbeStatus};
use crate::{Error, DEFAULT_CAP};
use serde_json::{json, Map, Value};


/// Which recursions `solve` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Primal,
    Dual,
    Both,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub lines: Vec<String>,
}

impl Report {
    fn new() -> Self {
        Report {
            json: Value::Object(Map::new()),
            lines: Vec::new(),
        }
    }

    fn section(&mut self, key: &str, title: &str, json: Value, lines: Vec<String>) {
        self.json.as_object_mut().expect("object").insert(key.into(), json);
        if !self.lines.is_empty() {
            self.lines.push(String::new());
        }
        self.lines.push(format!("[{title}]"));
        self.lines.extend(lines);
    }
}

fn num(x: f64) -> String {
    format!("{x:.9}")
}

fn yes(b: bool) -> &'static str {
    if b {
        "TRUE"
    } else {
        "FALSE"
    }
}

fn values_json(inst: &MdpInstance, v: &ValueTable) -> Value {
    Value::Array(
        (0..=inst.horizon())
            .map(|t| {
                Value::Object(
                    inst.states(t)
                        .iter()
                        .zip(v.stage(t))
                        .map(|(s, x)| (s.clone(), json!(x)))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn policy_json(inst: &MdpInstance, p: &RandomizedPolicy) -> Value {
    Value::Array(
        (0..inst.horizon())
            .map(|t| {
                Value::Object(
                    (0..inst.num_states(t))
                        .map(|s| {
                            let row: Map<String, Value> = inst
                                .actions(t, s)
                                .iter()
                                .zip(p.row(t, s))
                                .map(|(a, x)| (a.clone(), json!(x)))
                                .collect();
                            (inst.state_name(t, s).to_string(), Value::Object(row))
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

fn per_state<T>(inst: &MdpInstance, rows: &[Vec<T>], f: impl Fn(&T) -> Value) -> Value {
    Value::Array(
        rows.iter()
            .enumerate()
            .map(|(t, row)| {
                Value::Object(
                    row.iter()
                        .enumerate()
                        .map(|(s, x)| (inst.state_name(t, s).to_string(), f(x)))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// One row per `(stage, state)`, one column per table.
fn value_lines(inst: &MdpInstance, cols: &[(&str, &ValueTable)]) -> Vec<String> {
    let width = (0..=inst.horizon())
        .flat_map(|t| inst.states(t).iter().map(|s| s.chars().count()))
        .max()
        .unwrap_or(5)
        .max(5);
    let mut head = format!("{:<6} {:<width$}", "stage", "state");
    for (name, _) in cols {
        head.push_str(&format!(" {name:>14}"));
    }
    let mut out = vec![head];
    for t in 0..=inst.horizon() {
        for (s, name) in inst.states(t).iter().enumerate() {
            let mut line = format!("{:<6} {name:<width$}", t + 1);
            for (_, v) in cols {
                line.push_str(&format!(" {:>14}", num(v.get(t, s))));
            }
            out.push(line);
        }
    }
    out
}

fn policy_lines(inst: &MdpInstance, p: &RandomizedPolicy) -> Vec<String> {
    let mut out = Vec::new();
    for t in 0..inst.horizon() {
        for s in 0..inst.num_states(t) {
            let row: Vec<String> = inst
                .actions(t, s)
                .iter()
                .zip(p.row(t, s))
                .map(|(a, x)| format!("{a} {x:.6}"))
                .collect();
            out.push(format!("  ({}, {}): {}", t + 1, inst.state_name(t, s), row.join(", ")));
        }
    }
    out
}

fn rows_text(inst: &MdpInstance, t: usize, s: usize, joint: &[f64]) -> String {
    let n = inst.num_states(t + 1);
    inst.actions(t, s)
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let r: Vec<String> = joint[a * n..(a + 1) * n].iter().map(|x| format!("{x:.6}")).collect();
            format!("{name} ({})", r.join(", "))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn kernel_text(inst: &MdpInstance, t: usize, k: &StageKernel) -> String {
    (0..inst.num_states(t))
        .map(|s| format!("{}: {}", inst.state_name(t, s), rows_text(inst, t, s, &k.joint_row(s))))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn solve(l: &LoadedInstance, part: Part) -> Result<Report, Error> {
    let inst = &l.instance;
    let s1 = inst.initial_state();
    let root = inst.state_name(0, s1);
    let mut report = Report::new();
    if let Some(model) = &l.ambiguity {
        let p = RobustProblem::new(inst, model)?;
        let (json, lines) = match part {
            Part::Primal => {
                let sol = p.solve_primal()?;
                let mut lines = value_lines(inst, &[("V", &sol.values)]);
                lines.push("controller policy:".into());
                lines.extend(policy_lines(inst, &sol.policy));
                (
                    json!({
                        "primal_values": values_json(inst, &sol.values),
                        "policy": policy_json(inst, &sol.policy),
                        "deterministic_policy": sol.deterministic.as_ref().map(|d| policy_json(inst, d)),
                    }),
                    lines,
                )
            }
            Part::Dual => {
                let sol = p.solve_dual()?;
                (
                    json!({ "dual_values": values_json(inst, &sol.values) }),
                    value_lines(inst, &[("Q", &sol.values)]),
                )
            }
            Part::Both => {
                let r = p.diagnose()?;
                let mut lines = value_lines(inst, &[("V", &r.primal_values), ("Q", &r.dual_values)]);
                lines.push(format!("gap at {root}: {}", num(r.gap)));
                lines.push("controller policy:".into());
                lines.extend(policy_lines(inst, &r.controller_policy));
                lines.push(format!(
                    "deterministic optimal policy: {}",
                    if r.deterministic_policy.is_some() { "exists" } else { "none" }
                ));
                lines.push(format!("worst-case kernel: {}", r.assumption.verdict.as_str()));
                for i in &r.implications {
                    lines.push(format!(
                        "{}: {}",
                        i.name,
                        if !i.premise {
                            "premise not met"
                        } else if i.conclusion {
                            "holds"
                        } else {
                            "VIOLATED"
                        }
                    ));
                }
                lines.extend(r.remarks.iter().map(|m| format!("note: {m}")));
                (
                    json!({
                        "primal_values": values_json(inst, &r.primal_values),
                        "dual_values": values_json(inst, &r.dual_values),
                        "gap": r.gap,
                        "strong_duality": r.gap.abs() <= GAP_TOL,
                        "policy": policy_json(inst, &r.controller_policy),
                        "deterministic_policy": r.deterministic_policy.as_ref().map(|d| policy_json(inst, d)),
                        "saddle": per_state(inst, &r.per_state_saddle, |b| json!(b)),
                        "worst_case_kernel": r.assumption.verdict.as_str(),
                        "convex_marginal": per_state(inst, &r.convex_marginal, |c| json!(c.convex)),
                        "implications": r.implications.iter().map(|i| json!({
                            "name": i.name,
                            "premise": i.premise,
                            "conclusion": i.conclusion,
                            "holds": i.holds(),
                        })).collect::<Vec<_>>(),
                        "remarks": r.remarks,
                    }),
                    lines,
                )
            }
        };
        report.section("kernel", "kernel ambiguity", json, lines);
    }
    if let Some((kernel, model)) = &l.cost {
        let p = CostProblem::new(inst, kernel, model)?;
        let primal = p.solve_primal()?;
        let mut json = Map::new();
        let mut lines;
        match part {
            Part::Dual => {
                let dual = p.solve_dual()?;
                json.insert("dual_values".into(), values_json(inst, &dual.values));
                lines = value_lines(inst, &[("Q", &dual.values)]);
            }
            _ => {
                json.insert("primal_values".into(), values_json(inst, &primal.values));
                json.insert("policy".into(), policy_json(inst, &primal.policy));
                lines = value_lines(inst, &[("V", &primal.values)]);
                if part == Part::Both {
                    let dual = p.solve_dual()?;
                    let reg = p.solve_via_regularization()?;
                    let gap = primal.values.get(0, s1) - dual.values.get(0, s1);
                    let verdict = p.check_worst_case_cost(&primal.values)?.verdict;
                    json.insert("dual_values".into(), values_json(inst, &dual.values));
                    json.insert("regularized_values".into(), values_json(inst, &reg));
                    json.insert("gap".into(), json!(gap));
                    json.insert("worst_case_cost".into(), json!(verdict.as_str()));
                    lines = value_lines(inst, &[("V", &primal.values), ("Q", &dual.values), ("regularized", &reg)]);
                    lines.push(format!("gap at {root}: {}", num(gap)));
                    lines.push(format!("worst-case cost: {}", verdict.as_str()));
                }
                lines.push("controller policy:".into());
                lines.extend(policy_lines(inst, &primal.policy));
            }
        }
        report.section("cost", "cost ambiguity", Value::Object(json), lines);
    }
    if let Some(spec) = &l.avar {
        let (v, policy) = solve_nested_risk(inst, spec)?;
        let mut json = Map::new();
        json.insert("alpha".into(), json!(spec.alpha));
        json.insert("nested_values".into(), values_json(inst, &v));
        json.insert("policy".into(), policy_json(inst, &policy));
        let mut lines = vec![format!("level {}", spec.alpha)];
        if part == Part::Primal {
            lines.extend(value_lines(inst, &[("nested", &v)]));
        } else {
            let model = build_avar_ambiguity(spec, inst)?;
            let p = RobustProblem::new(inst, &model)?;
            let robust = p.solve_primal()?.values;
            let dual = p.solve_dual()?.values;
            json.insert("robust_values".into(), values_json(inst, &robust));
            json.insert("dual_values".into(), values_json(inst, &dual));
            lines.extend(value_lines(inst, &[("nested", &v), ("robust", &robust), ("Q", &dual)]));
        }
        lines.push("risk-averse policy:".into());
        lines.extend(policy_lines(inst, &policy));
        report.section("risk", "average value-at-risk", Value::Object(json), lines);
    }
    if let Some(spec) = &l.soc {
        let sol = solve_soc(inst, spec)?;
        let mut json = Map::new();
        json.insert("reducible".into(), json!(sol.reducible));
        let mut lines = Vec::new();
        match part {
            Part::Primal => {
                json.insert("primal_values".into(), values_json(inst, &sol.primal_values));
                lines.extend(value_lines(inst, &[("V", &sol.primal_values)]));
            }
            Part::Dual => {
                json.insert("dual_values".into(), values_json(inst, &sol.dual_values));
                lines.extend(value_lines(inst, &[("Q", &sol.dual_values)]));
            }
            Part::Both => {
                json.insert("primal_values".into(), values_json(inst, &sol.primal_values));
                json.insert("dual_values".into(), values_json(inst, &sol.dual_values));
                json.insert("gap".into(), json!(sol.gap));
                lines.extend(value_lines(inst, &[("V", &sol.primal_values), ("Q", &sol.dual_values)]));
                lines.push(format!("gap at {root}: {}", num(sol.gap)));
            }
        }
        if part != Part::Dual {
            json.insert("policy".into(), policy_json(inst, &sol.policy));
            lines.push("controller policy:".into());
            lines.extend(policy_lines(inst, &sol.policy));
        }
        if !sol.reducible {
            lines.push("note: outcome costs collide, solved over noise laws directly".into());
        }
        report.section("noise", "noise-driven dynamics", Value::Object(json), lines);
    }
    Ok(report)
}

fn convex_line(inst: &MdpInstance, t: usize, s: usize, c: &ConvexityCheck) -> String {
    let mut line = format!("convex marginal: {} at ({}, {})", yes(c.convex), t + 1, inst.state_name(t, s));
    if !c.exact {
        line.push_str(" (sampled)");
    }
    line
}

fn probe_line(
    model: &StageAmbiguity,
    inst: &MdpInstance,
    t: usize,
    kind: Rectangularity,
) -> Result<(Value, String), Error> {
    let label = match kind {
        Rectangularity::StateAction => "(s,a)-rectangular",
        Rectangularity::State => "s-rectangular",
    };
    let p = rectangularity_probe(model, inst, t, kind, DEFAULT_CAP)?;
    let text = if p.structural {
        "structural".to_string()
    } else if p.rectangular {
        format!("HOLDS ({} products tested)", p.combinations_tested)
    } else {
        let w = p.witness.as_ref().map(|k| kernel_text(inst, t, k)).unwrap_or_default();
        format!("FAILS (outside the set: {w})")
    };
    let json = json!({
        "rectangular": p.rectangular,
        "structural": p.structural,
        "witness": p.witness,
    });
    Ok((json, format!("{label}: {text}")))
}

pub fn check(l: &LoadedInstance) -> Result<Report, Error> {
    let inst = &l.instance;
    let mut report = Report::new();
    if let Some(model) = &l.ambiguity {
        let p = RobustProblem::new(inst, model)?;
        // The worst-case check is relative to the optimal continuation values.
        let values = p.solve_primal()?.values;
        let assumption = p.check_worst_case_kernel(&values)?;
        let mut stages = Vec::new();
        let mut lines = Vec::new();
        for t in 0..inst.horizon() {
            let st = model.stage(t);
            lines.push(format!("stage {}: {}", t + 1, st.class_name()));
            let (sa_json, sa_line) = probe_line(st, inst, t, Rectangularity::StateAction)?;
            let (s_json, s_line) = probe_line(st, inst, t, Rectangularity::State)?;
            lines.push(format!("  {sa_line}"));
            lines.push(format!("  {s_line}"));
            let a = &assumption.stages[t];
            let wc = match (&a.witness, a.verdict.holds()) {
                (Some(k), _) => format!("HOLDS (witness {})", kernel_text(inst, t, k)),
                (None, true) => "HOLDS state by state (no single kernel serves every state)".into(),
                (None, false) => "FAILS".into(),
            };
            lines.push(format!("  worst-case kernel: {wc}"));
            let mut convex = Map::new();
            for s in 0..inst.num_states(t) {
                let c = p.check_convex_marginal(t, s)?;
                lines.push(format!("  {}", convex_line(inst, t, s, &c)));
                convex.insert(inst.state_name(t, s).to_string(), json!(c));
            }
            stages.push(json!({
                "class": st.class_name(),
                "state_action_rectangular": sa_json,
                "state_rectangular": s_json,
                "worst_case_kernel": a.verdict.as_str(),
                "witness": a.witness,
                "convex_marginal": convex,
            }));
        }
        report.section("kernel", "kernel ambiguity", json!({ "stages": stages }), lines);
    }
    if let Some((kernel, model)) = &l.cost {
        let p = CostProblem::new(inst, kernel, model)?;
        let values = p.solve_primal()?.values;
        let assumption = p.check_worst_case_cost(&values)?;
        let mut stages = Vec::new();
        let mut lines = Vec::new();
        for t in 0..inst.horizon() {
            let a = &assumption.stages[t];
            lines.push(format!("stage {}: {}", t + 1, model.stages[t].class_name()));
            lines.push(format!("  worst-case cost: {}", a.verdict.as_str()));
            let mut convex = Map::new();
            for s in 0..inst.num_states(t) {
                let c = p.check_convex_marginal(t, s)?;
                lines.push(format!("  {}", convex_line(inst, t, s, &c)));
                convex.insert(inst.state_name(t, s).to_string(), json!(c));
            }
            stages.push(json!({
                "class": model.stages[t].class_name(),
                "worst_case_cost": a.verdict.as_str(),
                "witness": a.witness,
                "convex_marginal": convex,
            }));
        }
        report.section("cost", "cost ambiguity", json!({ "stages": stages }), lines);
    }
    if let Some(spec) = &l.avar {
        let model = build_avar_ambiguity(spec, inst)?;
        let lines = (0..inst.horizon())
            .map(|t| format!("stage {}: {}: (s,a)-rectangular: structural", t + 1, model.stage(t).class_name()))
            .collect();
        report.section("risk", "average value-at-risk", json!({ "state_action_rectangular": true }), lines);
    }
    if let Some(spec) = &l.soc {
        let probe = soc_rectangularity_probe(inst, spec)?;
        let lines = probe
            .stages
            .iter()
            .map(|s| {
                let status = match s.status {
                    SocProbeStatus::Singleton => "single noise law".to_string(),
                    SocProbeStatus::NotRectangular => format!(
                        "NOT {}",
                        if s.kind == Some(Rectangularity::State) { "s-rectangular" } else { "(s,a)-rectangular" }
                    ),
                    SocProbeStatus::Inconclusive => "inconclusive".to_string(),
                };
                let mut line = format!("stage {}: {status}; {}", s.stage, s.note);
                if let Some(w) = &s.witness {
                    line.push_str(&format!("\n  witness: {}", kernel_text(inst, s.stage - 1, w)));
                }
                line
            })
            .collect();
        report.section("noise", "noise-driven dynamics", json!(probe), lines);
    }
    Ok(report)
}

fn oracle_kernel(
    inst: &MdpInstance,
    model: &AmbiguityModel,
    cfg: &OracleConfig,
    tol: Option<f64>,
) -> Result<(Value, Vec<String>), Error> {
    let eq = check_equivalence(inst, model, cfg)?;
    let en = enlargement_invariance(inst, model)?;
    let tol = tol.unwrap_or(eq.grid_tolerance + 1e-6);
    let primal_ok = eq.certified.then(|| (eq.static_primal - eq.game_primal).abs() <= tol);
    let verdict = |v: Option<bool>| match v {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "not asserted",
    };
    let lines = vec![
        format!("game primal      {}", num(eq.game_primal)),
        format!("game dual        {}", num(eq.game_dual)),
        format!("static primal    {}  (grid bound {:.3e})", num(eq.static_primal), eq.grid_tolerance),
        format!("static dual  >=  {}", num(eq.static_dual_lower_bound)),
        format!("equivalence certified: {} ({})", yes(eq.certified), eq.certified_by),
        format!("static primal within {tol:.3e} of game primal: {}", verdict(primal_ok)),
        format!("static dual below game dual below game primal: {}", verdict(eq.dual_sandwich)),
        format!("strong duality: {}", yes(eq.strong_duality)),
        format!(
            "enlargement invariance: {} (primal {:.1e}, dual {:.1e})",
            yes(en.invariant),
            en.primal_max_diff,
            en.dual_max_diff
        ),
    ];
    let json = json!({
        "game_primal": eq.game_primal,
        "game_dual": eq.game_dual,
        "static_primal": eq.static_primal,
        "static_dual_lower_bound": eq.static_dual_lower_bound,
        "grid_tolerance": eq.grid_tolerance,
        "tolerance": tol,
        "certified": eq.certified,
        "certified_by": eq.certified_by,
        "primal_equivalent": primal_ok,
        "dual_sandwich": eq.dual_sandwich,
        "strong_duality": eq.strong_duality,
        "enlargement": en,
    });
    Ok((json, lines))
}

pub fn oracle(l: &LoadedInstance, cfg: &OracleConfig, tol: Option<f64>) -> Result<Report, Error> {
    let inst = &l.instance;
    let mut report = Report::new();
    if let Some(model) = &l.ambiguity {
        let (json, lines) = oracle_kernel(inst, model, cfg, tol)?;
        report.section("kernel", "kernel ambiguity", json, lines);
    }
    if let Some((kernel, model)) = &l.cost {
        let eq = CostProblem::new(inst, kernel, model)?.check_equivalence(cfg)?;
        let lines = vec![
            format!("game primal      {}", num(eq.game_primal)),
            format!("game dual        {}", num(eq.game_dual)),
            format!("static primal    {}  (grid bound {:.3e})", num(eq.static_primal), eq.grid_tolerance),
            format!("static dual  >=  {}", num(eq.static_dual_lower_bound)),
            format!("worst-case cost: {}", eq.verdict.as_str()),
            format!(
                "four values agree: {}",
                match eq.four_way_equal {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "not asserted",
                }
            ),
        ];
        report.section("cost", "cost ambiguity", json!(eq), lines);
    }
    if let Some(spec) = &l.avar {
        let model = build_avar_ambiguity(spec, inst)?;
        let (json, lines) = oracle_kernel(inst, &model, cfg, tol)?;
        report.section("risk", "average value-at-risk (induced sets)", json, lines);
    }
    if let Some(spec) = &l.soc {
        match build_soc_ambiguity(inst, spec) {
            Ok((induced, model)) => {
                let (json, lines) = oracle_kernel(&induced, &model, cfg, tol)?;
                report.section("noise", "noise-driven dynamics (induced kernels)", json, lines);
            }
            Err(Error::CostConflict(m)) => report.section(
                "noise",
                "noise-driven dynamics",
                json!({ "skipped": m }),
                vec![format!("skipped: {m}")],
            ),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

pub fn examples(runs: &[FixtureRun]) -> Report {
    let mut lines = Vec::new();
    for r in runs {
        lines.push(format!("{} {}", if r.passed() { "PASS" } else { "FAIL" }, r.name));
        for c in &r.checks {
            lines.push(format!(
                "  {} {}: {} (expected {})",
                if c.pass { "ok  " } else { "FAIL" },
                c.what,
                c.actual,
                c.expected
            ));
        }
    }
    Report {
        json: json!({
            "passed": runs.iter().all(|r| r.passed()),
            "runs": runs,
        }),
        lines,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn solve_reports_values_by_name() {
        let l = fixtures::load("ex_2_2").unwrap();
        let r = solve(&l, Part::Both).unwrap();
        assert_eq!(r.json["kernel"]["primal_values"][1]["sB"], 1.0);
        assert!((r.json["kernel"]["gap"].as_f64().unwrap() - 0.25).abs() < 1e-7);
        assert!(r.lines.iter().any(|l| l.starts_with("gap at sA")));
        let p = solve(&l, Part::Primal).unwrap();
        assert!(p.json["kernel"].get("gap").is_none());
    }

    #[test]
    fn sections_follow_the_file() {
        let l = fixtures::load("cost_interval").unwrap();
        let r = check(&l).unwrap();
        assert!(r.json.get("kernel").is_none());
        assert_eq!(r.json["cost"]["stages"][0]["worst_case_cost"], "uniform");
    }

    #[test]
    fn tolerance_override_is_reported() {
        let l = fixtures::load("ex_2_3").unwrap();
        let r = oracle(&l, &l.oracle, Some(0.5)).unwrap();
        assert_eq!(r.json["kernel"]["tolerance"], 0.5);
    }
}

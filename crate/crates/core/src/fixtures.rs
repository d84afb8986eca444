//! Bundled example instances and their golden outputs.

use serde::Serialize;

use crate::ambiguity::{rectangularity_probe, Rectangularity};
use crate::cost::CostProblem;
use crate::io::{InstanceFile, LoadError, LoadedInstance};
use crate::mdp::{solve_nominal, Kernel, MdpInstance};
use crate::oracle::{check_equivalence, history_dependent_check, static_primal};
use crate::risk::{avar, build_avar_ambiguity, solve_nested_risk};
use crate::robust::{solve_primal, RobustProblem, Verdict};
use crate::soc::{build_soc_ambiguity, reduction_agrees, soc_rectangularity_probe, solve_soc};
use crate::DEFAULT_CAP;

const SOURCES: [(&str, &str); 7] = [
    ("ex_2_1", include_str!("../fixtures/ex_2_1.json")),
    ("ex_2_2", include_str!("../fixtures/ex_2_2.json")),
    ("ex_2_3", include_str!("../fixtures/ex_2_3.json")),
    ("fig_2_sr", include_str!("../fixtures/fig_2_sr.json")),
    ("avar_demo", include_str!("../fixtures/avar_demo.json")),
    ("soc_demo", include_str!("../fixtures/soc_demo.json")),
    ("cost_interval", include_str!("../fixtures/cost_interval.json")),
];

/// Loadable by name but carrying no golden checks.
const EXTRA: [(&str, &str); 1] = [("singleton", include_str!("../fixtures/singleton.json"))];

pub fn names() -> Vec<&'static str> {
    SOURCES.iter().map(|(n, _)| *n).collect()
}

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().chain(&EXTRA).find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<LoadedInstance, LoadError> {
    let text = source(name).ok_or_else(|| LoadError::UnknownFixture(name.to_string()))?;
    Ok(InstanceFile::parse(text)?.load()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Golden {
    pub what: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureRun {
    pub name: String,
    pub description: Option<String>,
    pub checks: Vec<Golden>,
}

impl FixtureRun {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Checks(Vec<Golden>);

impl Checks {
    fn close(&mut self, what: &str, expected: f64, actual: f64, tol: f64) {
        self.0.push(Golden {
            what: what.into(),
            expected: format!("{expected:.9} ± {tol:e}"),
            actual: format!("{actual:.9}"),
            pass: (expected - actual).abs() <= tol,
        });
    }

    fn at_most(&mut self, what: &str, bound: f64, actual: f64) {
        self.0.push(Golden {
            what: what.into(),
            expected: format!("≤ {bound:e}"),
            actual: format!("{actual:e}"),
            pass: actual <= bound,
        });
    }

    fn flag(&mut self, what: &str, expected: impl ToString, actual: impl ToString) {
        let (e, a) = (expected.to_string(), actual.to_string());
        self.0.push(Golden {
            what: what.into(),
            pass: e == a,
            expected: e,
            actual: a,
        });
    }
}

fn state(inst: &MdpInstance, name: &str) -> usize {
    inst.state_index(0, name).expect("fixture state")
}

/// Loads a bundled fixture and evaluates its golden assertions.
pub fn run(name: &str) -> Result<FixtureRun, LoadError> {
    let l = load(name)?;
    let mut c = Checks(Vec::new());
    match name {
        "ex_2_1" => ex_2_1(&l, &mut c)?,
        "ex_2_2" => ex_2_2(&l, &mut c)?,
        "ex_2_3" => ex_2_3(&l, &mut c)?,
        "fig_2_sr" => fig_2_sr(&l, &mut c)?,
        "avar_demo" => avar_demo(&l, &mut c)?,
        "soc_demo" => soc_demo(&l, &mut c)?,
        "cost_interval" => cost_interval(&l, &mut c)?,
        _ => return Err(LoadError::UnknownFixture(name.to_string())),
    }
    Ok(FixtureRun {
        name: name.to_string(),
        description: l.description.clone(),
        checks: c.0,
    })
}

fn ex_2_1(l: &LoadedInstance, c: &mut Checks) -> crate::Result<()> {
    let model = l.ambiguity.as_ref().expect("kernel ambiguity");
    let inst = &l.instance;
    let r = RobustProblem::new(inst, model)?.diagnose()?;
    let sa = state(inst, "sA");
    c.close("V(1, sA)", 2.0 / 3.0, r.primal_values.get(0, sa), 1e-7);
    c.at_most("duality gap", 1e-6, r.gap.abs());
    c.flag("worst-case kernel", Verdict::Uniform.as_str(), r.assumption.verdict.as_str());
    match &r.assumption.stages[0].witness {
        Some(w) => {
            c.close("witness P(sB | sA, aL)", 1.0, w.row(sa, 0)[0], 1e-8);
            c.close("witness P(sB | sA, aR)", 2.0 / 3.0, w.row(sa, 1)[0], 1e-8);
        }
        None => c.flag("witness kernel", "present", "absent"),
    }
    let pure = r.deterministic_policy.as_ref().map(|p| {
        let row = p.row(0, sa);
        inst.action_name(0, sa, if row[0] > 0.5 { 0 } else { 1 }).to_string()
    });
    c.flag("deterministic optimal action at sA", "aR", pure.unwrap_or_else(|| "none".into()));
    let eq = check_equivalence(inst, model, &l.oracle)?;
    c.at_most("|static primal - V|", eq.grid_tolerance + 1e-6, (eq.static_primal - eq.game_primal).abs());
    let h = history_dependent_check(inst, model, &l.oracle)?;
    c.close("history-dependent min-max", r.primal_values.get(0, sa), h.history_value, 1e-6);
    Ok(())
}

fn ex_2_2(l: &LoadedInstance, c: &mut Checks) -> crate::Result<()> {
    let model = l.ambiguity.as_ref().expect("kernel ambiguity");
    let inst = &l.instance;
    let r = RobustProblem::new(inst, model)?.diagnose()?;
    let sa = state(inst, "sA");
    c.close("V(1, sA)", 0.5, r.primal_values.get(0, sa), 1e-7);
    c.close("Q(1, sA)", 0.25, r.dual_values.get(0, sa), 1e-7);
    c.close("duality gap", 0.25, r.gap, 1e-7);
    c.flag("convex marginal at (1, sA)", false, r.convex_marginal[0][sa].convex);
    Ok(())
}

fn ex_2_3(l: &LoadedInstance, c: &mut Checks) -> crate::Result<()> {
    let model = l.ambiguity.as_ref().expect("kernel ambiguity");
    let inst = &l.instance;
    let r = RobustProblem::new(inst, model)?.diagnose()?;
    let sa = state(inst, "sA");
    c.close("V(1, sA)", 0.5, r.primal_values.get(0, sa), 1e-7);
    c.at_most("duality gap", 1e-6, r.gap.abs());
    c.close("π(aL | sA)", 0.5, r.controller_policy.row(0, sa)[0], 1e-6);
    c.close("π(aR | sA)", 0.5, r.controller_policy.row(0, sa)[1], 1e-6);
    c.flag("worst-case kernel", Verdict::Fails.as_str(), r.assumption.verdict.as_str());
    c.flag("convex marginal at (1, sA)", true, r.convex_marginal[0][sa].convex);
    let sp = static_primal(inst, model, &l.oracle)?;
    c.close("static primal", 0.5, sp.value, 0.02);
    Ok(())
}

fn fig_2_sr(l: &LoadedInstance, c: &mut Checks) -> crate::Result<()> {
    let model = l.ambiguity.as_ref().expect("kernel ambiguity");
    let inst = &l.instance;
    let r = RobustProblem::new(inst, model)?.diagnose()?;
    let sa = state(inst, "sA");
    c.close("V(1, sA)", 2.0 / 3.0, r.primal_values.get(0, sa), 1e-7);
    c.at_most("duality gap", 1e-6, r.gap.abs());
    c.close("π(aL | sA)", 0.5, r.controller_policy.row(0, sa)[0], 1e-6);
    c.close("π(aR | sA)", 0.5, r.controller_policy.row(0, sa)[1], 1e-6);
    let probe = rectangularity_probe(model.stage(0), inst, 0, Rectangularity::StateAction, DEFAULT_CAP)?;
    c.flag("(s,a)-rectangular", false, probe.rectangular);
    c.flag("worst-case kernel", Verdict::Fails.as_str(), r.assumption.verdict.as_str());
    let eq = check_equivalence(inst, model, &l.oracle)?;
    c.flag("game/static equivalence", true, eq.passes() && eq.certified);
    Ok(())
}

fn avar_demo(l: &LoadedInstance, c: &mut Checks) -> crate::Result<()> {
    let spec = l.avar.as_ref().expect("risk spec");
    let inst = &l.instance;
    let s = state(inst, "s");
    let (v, policy) = solve_nested_risk(inst, spec)?;
    c.close("nested risk value", 1.0, v.get(0, s), 1e-9);
    let chosen = if policy.row(0, s)[0] > 0.5 { 0 } else { 1 };
    c.flag("risk-averse action", "safe", inst.action_name(0, s, chosen));
    let kernel = spec.kernel(inst)?;
    let (nv, np) = solve_nominal(inst, &kernel)?;
    c.close("risk-neutral value", 0.9, nv.get(0, s), 1e-9);
    let chosen = if np.row(0, s)[0] > 0.5 { 0 } else { 1 };
    c.flag("risk-neutral action", "risky", inst.action_name(0, s, chosen));
    let z: Vec<f64> = inst.terminal_cost().to_vec();
    c.close("risk of the lottery", 1.8, avar(&z, kernel.stage(0).row(s, 1), spec.alpha)?, 1e-9);
    let robust = solve_primal(inst, &build_avar_ambiguity(spec, inst)?)?;
    c.at_most("|nested - robust|", 1e-7, robust.values.max_abs_diff(&v));
    Ok(())
}

fn soc_demo(l: &LoadedInstance, c: &mut Checks) -> crate::Result<()> {
    let spec = l.soc.as_ref().expect("noise model");
    let inst = &l.instance;
    let x = state(inst, "x");
    let sol = solve_soc(inst, spec)?;
    c.close("V(1, x)", 0.5, sol.primal_values.get(0, x), 1e-7);
    c.at_most("duality gap", 1e-6, sol.gap.abs());
    c.close("π(a | x)", 0.5, sol.policy.row(0, x)[0], 1e-6);
    let probe = soc_rectangularity_probe(inst, spec)?;
    c.flag("induced set rectangular", false, !probe.any_not_rectangular());
    match reduction_agrees(inst, spec)? {
        Some(d) => c.at_most("|noise space - induced kernels|", 1e-7, d),
        None => c.flag("reduction to kernel ambiguity", "applies", "refused"),
    }
    let (_, model) = build_soc_ambiguity(inst, spec)?;
    c.flag("induced stage class", "finite kernel set", model.stage(0).class_name());
    Ok(())
}

fn cost_interval(l: &LoadedInstance, c: &mut Checks) -> crate::Result<()> {
    let (kernel, model) = l.cost.as_ref().expect("cost ambiguity");
    let inst = &l.instance;
    let s = state(inst, "s");
    let p = CostProblem::new(inst, kernel, model)?;
    let sol = p.solve_primal()?;
    c.close("V(1, s)", 1.0, sol.values.get(0, s), 1e-9);
    let reg = p.solve_via_regularization()?;
    c.at_most("|game - regularized|", 1e-8, reg.max_abs_diff(&sol.values));
    // Upper endpoints everywhere, solved as a plain MDP.
    let mut upper = inst.clone();
    for a in 0..inst.num_actions(0, s) {
        for j in 0..inst.num_states(1) {
            upper.set_cost(0, s, a, j, inst.cost(0, s, a, j) + 0.25);
        }
    }
    let (nv, _) = solve_nominal(&upper, &Kernel::from_stages(kernel.stages().to_vec()))?;
    c.close("V equals the upper-endpoint value", nv.get(0, s), sol.values.get(0, s), 1e-9);
    let pure = sol
        .deterministic
        .as_ref()
        .map(|d| inst.action_name(0, s, if d.row(0, s)[0] > 0.5 { 0 } else { 1 }).to_string());
    c.flag("deterministic optimal action", "a", pure.unwrap_or_else(|| "none".into()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_parses_and_round_trips() {
        for name in names() {
            let f = InstanceFile::parse(source(name).unwrap()).unwrap();
            assert_eq!(InstanceFile::parse(&f.to_json()).unwrap(), f, "{name}");
            f.load().unwrap();
        }
        assert!(matches!(load("nope"), Err(LoadError::UnknownFixture(_))));
    }

    #[test]
    fn goldens_pass() {
        for name in names() {
            let r = run(name).unwrap();
            for g in &r.checks {
                assert!(g.pass, "{name}: {} expected {} got {}", g.what, g.expected, g.actual);
            }
        }
    }
}

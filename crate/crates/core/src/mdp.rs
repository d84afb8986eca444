//! Finite-horizon MDP instances, kernels, policies and risk-neutral evaluation.
//!
//! Stages are indexed from `0` (first decision epoch) to `horizon - 1`; value
//! tables carry one extra row, index `horizon`, holding the terminal cost.
//! States and actions keep their string names for reporting but every
//! computation runs on dense indices.

use crate::error::{Error, Result, Violation};

/// Slack allowed when checking that a vector lies on the probability simplex.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    states: Vec<Vec<String>>,
    actions: Vec<Vec<Vec<String>>>,
    costs: Vec<Vec<Vec<Vec<f64>>>>,
    terminal: Vec<f64>,
    initial: usize,
}

impl MdpInstance {
    /// Assembles an instance without checking it. Use [`MdpInstance::validate`]
    /// (or [`MdpInstance::new`]) before solving.
    ///
    /// `states` has `horizon + 1` layers, `actions[t][s]` lists the actions of
    /// state `s` at stage `t`, and `costs[t][s][a][s']` is the stage cost.
    pub fn from_parts(
        states: Vec<Vec<String>>,
        actions: Vec<Vec<Vec<String>>>,
        costs: Vec<Vec<Vec<Vec<f64>>>>,
        terminal: Vec<f64>,
        initial: usize,
    ) -> Self {
        MdpInstance {
            states,
            actions,
            costs,
            terminal,
            initial,
        }
    }

    pub fn new(
        states: Vec<Vec<String>>,
        actions: Vec<Vec<Vec<String>>>,
        costs: Vec<Vec<Vec<Vec<f64>>>>,
        terminal: Vec<f64>,
        initial: usize,
    ) -> Result<Self> {
        let inst = Self::from_parts(states, actions, costs, terminal, initial);
        let violations = inst.validate();
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(Error::InvalidInstance(violations))
        }
    }

    /// Lists every broken structural invariant; empty means the instance is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.states.len() < 2 {
            out.push(Violation::new("horizon must be at least 1"));
            return out;
        }
        let horizon = self.states.len() - 1;
        for (t, layer) in self.states.iter().enumerate() {
            if layer.is_empty() {
                out.push(Violation::new("stage has no states").at_stage(t));
            }
            for (i, name) in layer.iter().enumerate() {
                if layer[..i].contains(name) {
                    out.push(
                        Violation::new("duplicate state name")
                            .at_stage(t)
                            .at_state(name.clone()),
                    );
                }
            }
        }
        if self.actions.len() != horizon {
            out.push(Violation::new(format!(
                "expected action sets for {} stages, found {}",
                horizon,
                self.actions.len()
            )));
            return out;
        }
        if self.costs.len() != horizon {
            out.push(Violation::new(format!(
                "expected costs for {} stages, found {}",
                horizon,
                self.costs.len()
            )));
            return out;
        }
        for t in 0..horizon {
            let n_next = self.states[t + 1].len();
            if self.actions[t].len() != self.states[t].len() {
                out.push(Violation::new("action table does not cover every state").at_stage(t));
                continue;
            }
            if self.costs[t].len() != self.states[t].len() {
                out.push(Violation::new("cost table does not cover every state").at_stage(t));
                continue;
            }
            for (s, acts) in self.actions[t].iter().enumerate() {
                let sname = self.states[t][s].clone();
                if acts.is_empty() {
                    out.push(
                        Violation::new("action set is empty")
                            .at_stage(t)
                            .at_state(sname.clone()),
                    );
                }
                for (i, a) in acts.iter().enumerate() {
                    if acts[..i].contains(a) {
                        out.push(
                            Violation::new("duplicate action name")
                                .at_stage(t)
                                .at_state(sname.clone())
                                .at_action(a.clone()),
                        );
                    }
                }
                let rows = &self.costs[t][s];
                if rows.len() != acts.len() {
                    out.push(
                        Violation::new(format!(
                            "cost rows for {} actions, expected {}",
                            rows.len(),
                            acts.len()
                        ))
                        .at_stage(t)
                        .at_state(sname.clone()),
                    );
                    continue;
                }
                for (a, row) in rows.iter().enumerate() {
                    if row.len() != n_next {
                        out.push(
                            Violation::new(format!(
                                "cost row has {} entries, expected {}",
                                row.len(),
                                n_next
                            ))
                            .at_stage(t)
                            .at_state(sname.clone())
                            .at_action(acts[a].clone()),
                        );
                    } else if row.iter().any(|c| !c.is_finite()) {
                        out.push(
                            Violation::new("cost is not finite")
                                .at_stage(t)
                                .at_state(sname.clone())
                                .at_action(acts[a].clone()),
                        );
                    }
                }
            }
        }
        if self.terminal.len() != self.states[horizon].len() {
            out.push(
                Violation::new("terminal cost does not cover the final states").at_stage(horizon),
            );
        } else if self.terminal.iter().any(|c| !c.is_finite()) {
            out.push(Violation::new("terminal cost is not finite").at_stage(horizon));
        }
        if self.initial >= self.states[0].len() {
            out.push(Violation::new("initial state is not a first-stage state"));
        }
        out
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn num_states(&self, t: usize) -> usize {
        self.states[t].len()
    }

    pub fn states(&self, t: usize) -> &[String] {
        &self.states[t]
    }

    pub fn state_name(&self, t: usize, s: usize) -> &str {
        &self.states[t][s]
    }

    pub fn state_index(&self, t: usize, name: &str) -> Option<usize> {
        self.states.get(t)?.iter().position(|x| x == name)
    }

    pub fn num_actions(&self, t: usize, s: usize) -> usize {
        self.actions[t][s].len()
    }

    pub fn actions(&self, t: usize, s: usize) -> &[String] {
        &self.actions[t][s]
    }

    pub fn action_name(&self, t: usize, s: usize, a: usize) -> &str {
        &self.actions[t][s][a]
    }

    pub fn action_index(&self, t: usize, s: usize, name: &str) -> Option<usize> {
        self.actions.get(t)?.get(s)?.iter().position(|x| x == name)
    }

    pub fn cost(&self, t: usize, s: usize, a: usize, next: usize) -> f64 {
        self.costs[t][s][a][next]
    }

    /// Stage costs `c_t(s, a, ·)` over next states.
    pub fn cost_row(&self, t: usize, s: usize, a: usize) -> &[f64] {
        &self.costs[t][s][a]
    }

    pub fn stage_costs(&self, t: usize) -> &[Vec<Vec<f64>>] {
        &self.costs[t]
    }

    pub fn set_cost(&mut self, t: usize, s: usize, a: usize, next: usize, value: f64) {
        self.costs[t][s][a][next] = value;
    }

    pub fn terminal_cost(&self) -> &[f64] {
        &self.terminal
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    /// True when every `c_t(s, a, ·)` is constant in the next state.
    pub fn costs_independent_of_next(&self, t: usize) -> bool {
        self.costs[t].iter().flatten().all(|row| {
            row.first()
                .map(|&c0| row.iter().all(|&c| (c - c0).abs() <= 1e-12))
                .unwrap_or(true)
        })
    }

    /// Largest absolute stage or terminal cost.
    pub fn max_abs_cost(&self) -> f64 {
        self.costs
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .chain(self.terminal.iter())
            .fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Multiplies every stage and terminal cost by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in out.costs.iter_mut().flatten().flatten().flatten() {
            *c *= factor;
        }
        for c in out.terminal.iter_mut() {
            *c *= factor;
        }
        out
    }

    /// Returns a copy with the stage-`t` cost table replaced.
    pub fn with_stage_costs(&self, t: usize, costs: Vec<Vec<Vec<f64>>>) -> Self {
        let mut out = self.clone();
        out.costs[t] = costs;
        out
    }
}

/// Builds instances from names; handy for fixtures and tests.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    states: Vec<Vec<String>>,
    actions: Vec<Vec<Vec<String>>>,
    costs: Vec<Vec<Vec<Vec<f64>>>>,
    terminal: Vec<f64>,
    initial: usize,
}

impl MdpBuilder {
    /// `states[t]` for `t = 0..=horizon`; every state gets the given action names.
    pub fn new<S: AsRef<str>>(states: &[Vec<S>]) -> Self {
        let states: Vec<Vec<String>> = states
            .iter()
            .map(|l| l.iter().map(|s| s.as_ref().to_string()).collect())
            .collect();
        let horizon = states.len().saturating_sub(1);
        MdpBuilder {
            actions: (0..horizon).map(|t| vec![Vec::new(); states[t].len()]).collect(),
            costs: (0..horizon).map(|t| vec![Vec::new(); states[t].len()]).collect(),
            terminal: vec![0.0; states.last().map(|l| l.len()).unwrap_or(0)],
            initial: 0,
            states,
        }
    }

    fn sidx(&self, t: usize, s: &str) -> usize {
        self.states[t]
            .iter()
            .position(|x| x == s)
            .unwrap_or_else(|| panic!("unknown state {s} at stage {t}"))
    }

    pub fn actions<S: AsRef<str>>(mut self, t: usize, state: &str, names: &[S]) -> Self {
        let s = self.sidx(t, state);
        let n_next = self.states[t + 1].len();
        self.actions[t][s] = names.iter().map(|a| a.as_ref().to_string()).collect();
        self.costs[t][s] = vec![vec![0.0; n_next]; names.len()];
        self
    }

    /// Gives every state of every stage the same action names.
    pub fn uniform_actions<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        for t in 0..self.actions.len() {
            let states = self.states[t].clone();
            for s in &states {
                self = self.actions(t, s, names);
            }
        }
        self
    }

    pub fn cost(mut self, t: usize, state: &str, action: &str, next: &str, c: f64) -> Self {
        let s = self.sidx(t, state);
        let a = self.actions[t][s]
            .iter()
            .position(|x| x == action)
            .expect("unknown action");
        let n = self.sidx(t + 1, next);
        self.costs[t][s][a][n] = c;
        self
    }

    /// Sets `c_t(s, a, s')` for every next state `s'`.
    pub fn cost_all(mut self, t: usize, state: &str, action: &str, c: f64) -> Self {
        let s = self.sidx(t, state);
        let a = self.actions[t][s]
            .iter()
            .position(|x| x == action)
            .expect("unknown action");
        for v in self.costs[t][s][a].iter_mut() {
            *v = c;
        }
        self
    }

    pub fn terminal(mut self, state: &str, c: f64) -> Self {
        let t = self.states.len() - 1;
        let s = self.sidx(t, state);
        self.terminal[s] = c;
        self
    }

    pub fn initial(mut self, state: &str) -> Self {
        self.initial = self.sidx(0, state);
        self
    }

    pub fn build(self) -> Result<MdpInstance> {
        MdpInstance::new(
            self.states,
            self.actions,
            self.costs,
            self.terminal,
            self.initial,
        )
    }
}

/// Checks `row` against the simplex and renormalizes it when it is within tolerance.
pub(crate) fn normalize_distribution(row: &mut [f64]) -> std::result::Result<(), String> {
    if row.is_empty() {
        return Err("empty distribution".into());
    }
    let mut sum = 0.0;
    for &p in row.iter() {
        if !p.is_finite() || !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
            return Err(format!("entry {p} outside [0, 1]"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(format!("entries sum to {sum}"));
    }
    for p in row.iter_mut() {
        *p = p.max(0.0);
    }
    let total: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= total;
    }
    Ok(())
}

pub(crate) fn is_distribution(row: &[f64], tol: f64) -> bool {
    !row.is_empty()
        && row.iter().all(|&p| p.is_finite() && p >= -tol && p <= 1.0 + tol)
        && (row.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// Transition probabilities of one stage, indexed `[s][a][s']`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct StageKernel {
    rows: Vec<Vec<Vec<f64>>>,
}

impl StageKernel {
    pub fn from_rows(rows: Vec<Vec<Vec<f64>>>) -> Self {
        StageKernel { rows }
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        &self.rows[s][a]
    }

    pub fn rows(&self) -> &[Vec<Vec<f64>>] {
        &self.rows
    }

    /// Rows of state `s`, concatenated action-major.
    pub fn joint_row(&self, s: usize) -> Vec<f64> {
        self.rows[s].iter().flatten().copied().collect()
    }

    /// Shape problems against stage `t` of `inst`.
    pub fn shape_violations(&self, inst: &MdpInstance, t: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.rows.len() != inst.num_states(t) {
            out.push(Violation::new(format!(
                "kernel covers {} states, expected {}",
                self.rows.len(),
                inst.num_states(t)
            ))
            .at_stage(t));
            return out;
        }
        let n_next = inst.num_states(t + 1);
        for (s, per_action) in self.rows.iter().enumerate() {
            if per_action.len() != inst.num_actions(t, s) {
                out.push(
                    Violation::new(format!(
                        "kernel has {} action rows, expected {}",
                        per_action.len(),
                        inst.num_actions(t, s)
                    ))
                    .at_stage(t)
                    .at_state(inst.state_name(t, s)),
                );
                continue;
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_next {
                    out.push(
                        Violation::new(format!("row has {} entries, expected {}", row.len(), n_next))
                            .at_stage(t)
                            .at_state(inst.state_name(t, s))
                            .at_action(inst.action_name(t, s, a)),
                    );
                }
            }
        }
        out
    }

    /// Shape and simplex problems (tolerance [`PROB_TOL`]).
    pub fn violations(&self, inst: &MdpInstance, t: usize) -> Vec<Violation> {
        let mut out = self.shape_violations(inst, t);
        if !out.is_empty() {
            return out;
        }
        for (s, per_action) in self.rows.iter().enumerate() {
            for (a, row) in per_action.iter().enumerate() {
                let mut r = row.clone();
                if let Err(msg) = normalize_distribution(&mut r) {
                    out.push(
                        Violation::new(format!("not a distribution: {msg}"))
                            .at_stage(t)
                            .at_state(inst.state_name(t, s))
                            .at_action(inst.action_name(t, s, a)),
                    );
                }
            }
        }
        out
    }

    /// Validates against stage `t` and renormalizes rows within tolerance.
    pub fn validated(mut self, inst: &MdpInstance, t: usize) -> Result<Self> {
        let v = self.violations(inst, t);
        if !v.is_empty() {
            return Err(Error::InvalidModel(v));
        }
        for row in self.rows.iter_mut().flatten() {
            normalize_distribution(row).expect("checked above");
        }
        Ok(self)
    }

    /// `β·self + (1 − β)·other`, row by row.
    pub fn blend(&self, beta: f64, other: &StageKernel) -> StageKernel {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(ra, rb)| {
                ra.iter()
                    .zip(rb)
                    .map(|(x, y)| x.iter().zip(y).map(|(p, q)| beta * p + (1.0 - beta) * q).collect())
                    .collect()
            })
            .collect();
        StageKernel { rows }
    }
}

/// A transition kernel for every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    stages: Vec<StageKernel>,
}

impl Kernel {
    pub fn new(inst: &MdpInstance, stages: Vec<StageKernel>) -> Result<Self> {
        if stages.len() != inst.horizon() {
            return Err(Error::Dimension {
                stage: stages.len().min(inst.horizon()) + 1,
                detail: format!("kernel has {} stages, horizon is {}", stages.len(), inst.horizon()),
            });
        }
        let stages = stages
            .into_iter()
            .enumerate()
            .map(|(t, k)| k.validated(inst, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Kernel { stages })
    }

    /// Wraps stage kernels that are already known to be valid.
    pub fn from_stages(stages: Vec<StageKernel>) -> Self {
        Kernel { stages }
    }

    pub fn stage(&self, t: usize) -> &StageKernel {
        &self.stages[t]
    }

    pub fn stages(&self) -> &[StageKernel] {
        &self.stages
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
}

/// Randomized Markov policy, rows indexed `[t][s][a]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct RandomizedPolicy {
    rows: Vec<Vec<Vec<f64>>>,
}

impl RandomizedPolicy {
    pub fn new(inst: &MdpInstance, mut rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let mut bad = Vec::new();
        if rows.len() != inst.horizon() {
            return Err(Error::Dimension {
                stage: rows.len().min(inst.horizon()) + 1,
                detail: format!("policy has {} stages, horizon is {}", rows.len(), inst.horizon()),
            });
        }
        for (t, layer) in rows.iter_mut().enumerate() {
            if layer.len() != inst.num_states(t) {
                return Err(Error::Dimension {
                    stage: t + 1,
                    detail: format!("policy covers {} states, expected {}", layer.len(), inst.num_states(t)),
                });
            }
            for (s, row) in layer.iter_mut().enumerate() {
                if row.len() != inst.num_actions(t, s) {
                    return Err(Error::Dimension {
                        stage: t + 1,
                        detail: format!(
                            "policy row at {} has {} entries, expected {}",
                            inst.state_name(t, s),
                            row.len(),
                            inst.num_actions(t, s)
                        ),
                    });
                }
                if let Err(msg) = normalize_distribution(row) {
                    bad.push(
                        Violation::new(format!("policy row: {msg}"))
                            .at_stage(t)
                            .at_state(inst.state_name(t, s)),
                    );
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidInstance(bad));
        }
        Ok(RandomizedPolicy { rows })
    }

    /// Rows are taken as-is; callers guarantee they are distributions.
    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<Vec<f64>>>) -> Self {
        RandomizedPolicy { rows }
    }

    /// Dirac policy playing `choice[t][s]`.
    pub fn deterministic(inst: &MdpInstance, choice: &[Vec<usize>]) -> Self {
        let rows = choice
            .iter()
            .enumerate()
            .map(|(t, layer)| {
                layer
                    .iter()
                    .enumerate()
                    .map(|(s, &a)| {
                        let mut r = vec![0.0; inst.num_actions(t, s)];
                        r[a] = 1.0;
                        r
                    })
                    .collect()
            })
            .collect();
        RandomizedPolicy { rows }
    }

    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        &self.rows[t][s]
    }

    pub fn rows(&self) -> &[Vec<Vec<f64>>] {
        &self.rows
    }

    /// Every row puts mass at least `1 − 1e-9` on one action.
    pub fn is_deterministic(&self) -> bool {
        self.rows
            .iter()
            .flatten()
            .all(|r| r.iter().any(|&p| p >= 1.0 - PROB_TOL))
    }

    fn check_dims(&self, inst: &MdpInstance) -> Result<()> {
        if self.rows.len() != inst.horizon() {
            return Err(Error::Dimension {
                stage: self.rows.len().min(inst.horizon()) + 1,
                detail: "policy horizon does not match instance".into(),
            });
        }
        for (t, layer) in self.rows.iter().enumerate() {
            let ok = layer.len() == inst.num_states(t)
                && layer
                    .iter()
                    .enumerate()
                    .all(|(s, r)| r.len() == inst.num_actions(t, s));
            if !ok {
                return Err(Error::Dimension {
                    stage: t + 1,
                    detail: "policy rows do not match the state/action sets".into(),
                });
            }
        }
        Ok(())
    }
}

/// Values `V_t(s)` for `t = 0..=horizon`; the last row is the terminal cost.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValueTable {
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub(crate) fn with_terminal(inst: &MdpInstance) -> Self {
        let horizon = inst.horizon();
        let mut values: Vec<Vec<f64>> = (0..horizon).map(|t| vec![0.0; inst.num_states(t)]).collect();
        values.push(inst.terminal_cost().to_vec());
        ValueTable { values }
    }

    pub fn get(&self, t: usize, s: usize) -> f64 {
        self.values[t][s]
    }

    pub(crate) fn set(&mut self, t: usize, s: usize, v: f64) {
        self.values[t][s] = v;
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Largest entrywise absolute difference; tables must have equal shapes.
    pub fn max_abs_diff(&self, other: &ValueTable) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn check_kernel_dims(inst: &MdpInstance, kernel: &Kernel) -> Result<()> {
    if kernel.horizon() != inst.horizon() {
        return Err(Error::Dimension {
            stage: kernel.horizon().min(inst.horizon()) + 1,
            detail: "kernel horizon does not match instance".into(),
        });
    }
    for t in 0..inst.horizon() {
        let v = kernel.stage(t).shape_violations(inst, t);
        if let Some(first) = v.into_iter().next() {
            return Err(Error::Dimension {
                stage: t + 1,
                detail: first.message,
            });
        }
    }
    Ok(())
}

/// Expected stage cost plus continuation under one transition row.
pub(crate) fn row_value(probs: &[f64], costs: &[f64], next: &[f64]) -> f64 {
    probs
        .iter()
        .zip(costs)
        .zip(next)
        .map(|((p, c), v)| p * (c + v))
        .sum()
}

/// Risk-neutral value of `policy` when transitions follow `kernel`.
pub fn evaluate_policy(
    inst: &MdpInstance,
    policy: &RandomizedPolicy,
    kernel: &Kernel,
) -> Result<ValueTable> {
    policy.check_dims(inst)?;
    check_kernel_dims(inst, kernel)?;
    let mut table = ValueTable::with_terminal(inst);
    for t in (0..inst.horizon()).rev() {
        for s in 0..inst.num_states(t) {
            let next = table.stage(t + 1);
            let v: f64 = policy
                .row(t, s)
                .iter()
                .enumerate()
                .map(|(a, &pa)| pa * row_value(kernel.stage(t).row(s, a), inst.cost_row(t, s, a), next))
                .sum();
            table.set(t, s, v);
        }
    }
    Ok(table)
}

/// Backward induction for the risk-neutral MDP. Ties go to the lowest action index.
pub fn solve_nominal(inst: &MdpInstance, kernel: &Kernel) -> Result<(ValueTable, RandomizedPolicy)> {
    check_kernel_dims(inst, kernel)?;
    let mut table = ValueTable::with_terminal(inst);
    let mut choice: Vec<Vec<usize>> = (0..inst.horizon()).map(|t| vec![0; inst.num_states(t)]).collect();
    for t in (0..inst.horizon()).rev() {
        for s in 0..inst.num_states(t) {
            let next = table.stage(t + 1);
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for a in 0..inst.num_actions(t, s) {
                let q = row_value(kernel.stage(t).row(s, a), inst.cost_row(t, s, a), next);
                if q < best - 1e-12 {
                    best = q;
                    arg = a;
                }
            }
            choice[t][s] = arg;
            table.set(t, s, best);
        }
    }
    let policy = RandomizedPolicy::deterministic(inst, &choice);
    Ok((table, policy))
}

//! Ambiguity over stage costs with a fixed transition kernel.
//!
//! Nature now picks cost tables `c_t(s, a, ·)` from a per-stage set while the
//! kernel is known. The game machinery is shared with the kernel case; only
//! the candidate points and their payoffs change. Terminal costs are never
//! ambiguous.

use serde::{Deserialize, Serialize};

use crate::ambiguity::push_unique;
use crate::error::{check_cap, Error, Result, Violation, DEFAULT_CAP};
use crate::geometry::{Polytope, UnionOfPolytopes};
use crate::lp::{solve_lp, Bound, LinearProgram, LpOutcome};
use crate::mdp::{Kernel, MdpInstance, RandomizedPolicy, ValueTable};
use crate::oracle::{
    static_dual_generic, static_primal_generic, LawModel, LawStructure, OracleConfig, StageLaw, StaticDual,
    StaticPrimal,
};
use crate::robust::{
    check_union_convex, run_dual, run_primal, split_rows, ConvexityCheck, GameSource, LocalGame, PrimalRun, Verdict,
    GAP_TOL, VALUE_TOL, WITNESS_TOL,
};

/// Cost ambiguity at one stage. Points live in `R^{|S_{t+1}|}` per action, or
/// in the action-major joint space `R^{|A(s)|·|S_{t+1}|}` per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageCostAmbiguity {
    /// `polytopes[s][a]` bounds the row `c(s, a, ·)`.
    SaRect { polytopes: Vec<Vec<Polytope>> },
    /// `marginals[s]` bounds the joint row of `s`.
    SRect { marginals: Vec<UnionOfPolytopes> },
    /// Convex hull of whole cost tables `tables[k][s][a][s']`.
    Finite { tables: Vec<Vec<Vec<Vec<f64>>>> },
    Singleton { table: Vec<Vec<Vec<f64>>> },
}

impl StageCostAmbiguity {
    pub fn class_name(&self) -> &'static str {
        match self {
            StageCostAmbiguity::SaRect { .. } => "sa_rect",
            StageCostAmbiguity::SRect { .. } => "s_rect",
            StageCostAmbiguity::Finite { .. } => "finite",
            StageCostAmbiguity::Singleton { .. } => "singleton",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostAmbiguityModel {
    pub stages: Vec<StageCostAmbiguity>,
}

fn table_violations(table: &[Vec<Vec<f64>>], inst: &MdpInstance, t: usize, what: &str) -> Vec<Violation> {
    let n = inst.num_states(t + 1);
    let mut out = Vec::new();
    if table.len() != inst.num_states(t) {
        out.push(Violation::new(format!("{what} has {} state rows, expected {}", table.len(), inst.num_states(t))).at_stage(t));
        return out;
    }
    for (s, per_a) in table.iter().enumerate() {
        if per_a.len() != inst.num_actions(t, s) {
            out.push(Violation::new(format!("{what} has {} action rows", per_a.len())).at_stage(t).at_state(inst.state_name(t, s)));
            continue;
        }
        for (a, row) in per_a.iter().enumerate() {
            if row.len() != n {
                out.push(
                    Violation::new(format!("{what} row has length {}, expected {n}", row.len()))
                        .at_stage(t)
                        .at_state(inst.state_name(t, s))
                        .at_action(inst.action_name(t, s, a)),
                );
            } else if row.iter().any(|x| !x.is_finite()) {
                out.push(Violation::new(format!("{what} entry is not finite")).at_stage(t).at_state(inst.state_name(t, s)).at_action(inst.action_name(t, s, a)));
            }
        }
    }
    out
}

fn polytope_violations(p: &Polytope, dim: usize, cap: u128) -> Vec<String> {
    let mut out: Vec<String> = p.violations().into_iter().map(|v| v.message).collect();
    if out.is_empty() {
        if p.dim() != dim {
            out.push(format!("cost polytope has dimension {}, expected {dim}", p.dim()));
        } else {
            match p.is_bounded() {
                Ok(true) => {
                    if let Err(e) = p.vertices(cap) {
                        out.push(e.to_string());
                    }
                }
                Ok(false) => out.push("cost polytope is unbounded".into()),
                Err(e) => out.push(e.to_string()),
            }
        }
    }
    out
}

impl CostAmbiguityModel {
    pub fn new(stages: Vec<StageCostAmbiguity>) -> Self {
        CostAmbiguityModel { stages }
    }

    pub fn violations(&self, inst: &MdpInstance, cap: u128) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.stages.len() != inst.horizon() {
            out.push(Violation::new(format!(
                "cost ambiguity has {} stages, instance has {}",
                self.stages.len(),
                inst.horizon()
            )));
            return out;
        }
        for (t, st) in self.stages.iter().enumerate() {
            let n = inst.num_states(t + 1);
            let n_s = inst.num_states(t);
            match st {
                StageCostAmbiguity::SaRect { polytopes } => {
                    if polytopes.len() != n_s {
                        out.push(Violation::new("wrong number of state entries").at_stage(t));
                        continue;
                    }
                    for (s, per_a) in polytopes.iter().enumerate() {
                        if per_a.len() != inst.num_actions(t, s) {
                            out.push(Violation::new("wrong number of action entries").at_stage(t).at_state(inst.state_name(t, s)));
                            continue;
                        }
                        for (a, p) in per_a.iter().enumerate() {
                            for m in polytope_violations(p, n, cap) {
                                out.push(Violation::new(m).at_stage(t).at_state(inst.state_name(t, s)).at_action(inst.action_name(t, s, a)));
                            }
                        }
                    }
                }
                StageCostAmbiguity::SRect { marginals } => {
                    if marginals.len() != n_s {
                        out.push(Violation::new("wrong number of state entries").at_stage(t));
                        continue;
                    }
                    for (s, u) in marginals.iter().enumerate() {
                        if u.pieces.is_empty() {
                            out.push(Violation::new("union has no pieces").at_stage(t).at_state(inst.state_name(t, s)));
                        }
                        for p in &u.pieces {
                            for m in polytope_violations(p, inst.num_actions(t, s) * n, cap) {
                                out.push(Violation::new(m).at_stage(t).at_state(inst.state_name(t, s)));
                            }
                        }
                    }
                }
                StageCostAmbiguity::Finite { tables } => {
                    if tables.is_empty() {
                        out.push(Violation::new("finite cost set is empty").at_stage(t));
                    }
                    for (k, table) in tables.iter().enumerate() {
                        out.extend(table_violations(table, inst, t, &format!("cost table {k}")));
                    }
                }
                StageCostAmbiguity::Singleton { table } => out.extend(table_violations(table, inst, t, "cost table")),
            }
        }
        out
    }

    pub fn validate(&self, inst: &MdpInstance, cap: u128) -> Result<()> {
        let v = self.violations(inst, cap);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    /// `[s][a][v]` cost rows.
    Separable(Vec<Vec<Vec<Vec<f64>>>>),
    /// `[s][p][v]` joint cost rows.
    Union(Vec<Vec<Vec<Vec<f64>>>>),
}

/// A kernel, an instance and cost ambiguity, validated and ready to solve.
#[derive(Debug, Clone)]
pub struct CostProblem<'a> {
    inst: &'a MdpInstance,
    kernel: &'a Kernel,
    model: &'a CostAmbiguityModel,
    prepared: Vec<Prepared>,
    cap: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostPrimalSolution {
    pub values: ValueTable,
    pub policy: RandomizedPolicy,
    pub deterministic: Option<RandomizedPolicy>,
    /// Nature's worst cost rows `[t][s][a][s']` against the optimal policy.
    pub worst_costs: Vec<Vec<Vec<Vec<f64>>>>,
    pub per_state_saddle: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostDualSolution {
    pub values: ValueTable,
    /// Nature's max-min cost rows `[t][s][a][s']`.
    pub nature_costs: Vec<Vec<Vec<Vec<f64>>>>,
    pub controller_responses: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostStageAssumption {
    pub verdict: Verdict,
    /// A cost table worst for every state and action simultaneously.
    pub witness: Option<Vec<Vec<Vec<f64>>>>,
    pub state_witnesses: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostAssumptionReport {
    pub verdict: Verdict,
    pub stages: Vec<CostStageAssumption>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEquivalenceReport {
    pub game_primal: f64,
    pub game_dual: f64,
    pub static_primal: f64,
    pub static_dual_lower_bound: f64,
    pub grid_tolerance: f64,
    pub verdict: Verdict,
    pub convex_marginals: bool,
    /// Game and static primal coincide (structure or uniform worst-case cost).
    pub certified: bool,
    pub strong_duality: bool,
    /// All four values agree; asserted when certified and a worst-case cost or convex marginals exist.
    pub four_way_equal: Option<bool>,
}

impl CostEquivalenceReport {
    pub fn passes(&self) -> bool {
        self.four_way_equal.unwrap_or(true) && self.game_dual <= self.game_primal + VALUE_TOL
    }
}

impl<'a> CostProblem<'a> {
    pub fn new(inst: &'a MdpInstance, kernel: &'a Kernel, model: &'a CostAmbiguityModel) -> Result<Self> {
        Self::with_cap(inst, kernel, model, DEFAULT_CAP)
    }

    pub fn with_cap(
        inst: &'a MdpInstance,
        kernel: &'a Kernel,
        model: &'a CostAmbiguityModel,
        cap: u128,
    ) -> Result<Self> {
        let v = inst.validate();
        if !v.is_empty() {
            return Err(Error::InvalidInstance(v));
        }
        if kernel.horizon() != inst.horizon() {
            return Err(Error::Dimension {
                stage: kernel.horizon().min(inst.horizon()) + 1,
                detail: format!("kernel has {} stages, instance has {}", kernel.horizon(), inst.horizon()),
            });
        }
        let kv: Vec<Violation> = (0..inst.horizon()).flat_map(|t| kernel.stage(t).violations(inst, t)).collect();
        if !kv.is_empty() {
            return Err(Error::InvalidModel(kv));
        }
        model.validate(inst, cap)?;
        let mut prepared = Vec::new();
        for (t, st) in model.stages.iter().enumerate() {
            let n_s = inst.num_states(t);
            prepared.push(match st {
                StageCostAmbiguity::SaRect { polytopes } => Prepared::Separable(
                    polytopes
                        .iter()
                        .map(|per_a| per_a.iter().map(|p| p.vertices(cap)).collect::<Result<Vec<_>>>())
                        .collect::<Result<_>>()?,
                ),
                StageCostAmbiguity::SRect { marginals } => Prepared::Union(
                    marginals.iter().map(|u| u.piece_vertices(cap)).collect::<Result<_>>()?,
                ),
                StageCostAmbiguity::Finite { tables } => Prepared::Union(
                    (0..n_s)
                        .map(|s| {
                            let mut l = Vec::new();
                            for table in tables {
                                push_unique(&mut l, table[s].iter().flatten().copied().collect());
                            }
                            vec![l]
                        })
                        .collect(),
                ),
                StageCostAmbiguity::Singleton { table } => {
                    Prepared::Union(table.iter().map(|r| vec![vec![r.iter().flatten().copied().collect()]]).collect())
                }
            });
        }
        Ok(CostProblem {
            inst,
            kernel,
            model,
            prepared,
            cap,
        })
    }

    pub fn instance(&self) -> &MdpInstance {
        self.inst
    }

    /// `Σ_{s'} P(s'|s, a) (c(s, a, s') + next(s'))` for every action.
    fn payoffs(&self, t: usize, s: usize, joint_cost: &[f64], next: &[f64]) -> Vec<f64> {
        let n = self.inst.num_states(t + 1);
        (0..self.inst.num_actions(t, s))
            .map(|a| {
                let p = self.kernel.stage(t).row(s, a);
                (0..n).map(|j| p[j] * (joint_cost[a * n + j] + next[j])).sum()
            })
            .collect()
    }

    fn row_payoff(&self, t: usize, s: usize, a: usize, cost: &[f64], next: &[f64]) -> f64 {
        let p = self.kernel.stage(t).row(s, a);
        p.iter().zip(cost).zip(next).map(|((p, c), v)| p * (c + v)).sum()
    }

    pub fn solve_primal(&self) -> Result<CostPrimalSolution> {
        let run = run_primal(self.inst, self)?;
        let n = |t: usize| self.inst.num_states(t + 1);
        let pure: Option<Vec<Vec<usize>>> = run
            .locals
            .iter()
            .map(|l| l.iter().map(|x| x.pure).collect::<Option<Vec<_>>>())
            .collect();
        Ok(CostPrimalSolution {
            policy: RandomizedPolicy::from_rows_unchecked(
                run.locals.iter().map(|l| l.iter().map(|x| x.minimizer.clone()).collect()).collect(),
            ),
            deterministic: pure.map(|c| RandomizedPolicy::deterministic(self.inst, &c)),
            worst_costs: run
                .locals
                .iter()
                .enumerate()
                .map(|(t, l)| l.iter().map(|x| split_rows(&x.primal_point, n(t))).collect())
                .collect(),
            per_state_saddle: run.locals.iter().map(|l| l.iter().map(|x| x.saddle).collect()).collect(),
            values: run.values,
        })
    }

    pub fn solve_dual(&self) -> Result<CostDualSolution> {
        let PrimalRun { values, locals } = run_dual(self.inst, self)?;
        Ok(CostDualSolution {
            values,
            nature_costs: locals
                .iter()
                .enumerate()
                .map(|(t, l)| {
                    l.iter()
                        .map(|x| split_rows(&x.dual_point, self.inst.num_states(t + 1)))
                        .collect()
                })
                .collect(),
            controller_responses: locals.iter().map(|l| l.iter().map(|x| x.dual_response).collect()).collect(),
        })
    }

    /// `h_s(x) = sup_c Σ_a x(a) Σ_{s'} P(s'|s, a) c(s, a, s')`.
    pub fn support_function(&self, t: usize, s: usize, x: &[f64]) -> Result<f64> {
        let inst = self.inst;
        if x.len() != inst.num_actions(t, s) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension {
                stage: t + 1,
                detail: format!("weight vector of length {} at state {}", x.len(), inst.state_name(t, s)),
            });
        }
        let zero = vec![0.0; inst.num_states(t + 1)];
        Ok(match &self.prepared[t] {
            Prepared::Separable(v) => (0..x.len())
                .map(|a| {
                    v[s][a]
                        .iter()
                        .map(|c| x[a] * self.row_payoff(t, s, a, c, &zero))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum(),
            Prepared::Union(v) => v[s]
                .iter()
                .flatten()
                .map(|c| self.payoffs(t, s, c, &zero).iter().zip(x).map(|(p, w)| p * w).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// The regularized nominal recursion `min_π h_s(π) + Σ_a π(a) P(·|s,a)·V_{t+1}`,
    /// one epigraph LP per state.
    pub fn solve_via_regularization(&self) -> Result<ValueTable> {
        let inst = self.inst;
        let mut values = ValueTable::with_terminal(inst);
        for t in (0..inst.horizon()).rev() {
            let next = values.stage(t + 1).to_vec();
            let zero = vec![0.0; next.len()];
            for s in 0..inst.num_states(t) {
                let m = inst.num_actions(t, s);
                // linear part b_a = P(·|s,a)·V_{t+1}
                let b: Vec<f64> = (0..m)
                    .map(|a| self.kernel.stage(t).row(s, a).iter().zip(&next).map(|(p, v)| p * v).sum())
                    .collect();
                // variables: π (m), then epigraph variables
                let lp = match &self.prepared[t] {
                    Prepared::Separable(v) => {
                        // u_a ≥ π_a · (P_a · c) for each vertex c of the action's polytope; h = Σ u_a
                        let mut obj = b.clone();
                        obj.extend(std::iter::repeat_n(1.0, m));
                        let mut lp = LinearProgram::new(obj);
                        for a in 0..m {
                            lp = lp.bound(m + a, Bound::FREE);
                            for c in &v[s][a] {
                                let mut row = vec![0.0; 2 * m];
                                row[a] = self.row_payoff(t, s, a, c, &zero);
                                row[m + a] = -1.0;
                                lp = lp.leq(row, 0.0);
                            }
                        }
                        let mut simplex = vec![1.0; m];
                        simplex.extend(vec![0.0; m]);
                        lp.eq(simplex, 1.0)
                    }
                    Prepared::Union(v) => {
                        let mut obj = b.clone();
                        obj.push(1.0);
                        let mut lp = LinearProgram::new(obj).bound(m, Bound::FREE);
                        for c in v[s].iter().flatten() {
                            let mut row = self.payoffs(t, s, c, &zero);
                            row.push(-1.0);
                            lp = lp.leq(row, 0.0);
                        }
                        let mut simplex = vec![1.0; m];
                        simplex.push(0.0);
                        lp.eq(simplex, 1.0)
                    }
                };
                match solve_lp(&lp)? {
                    LpOutcome::Optimal { value, .. } => values.set(t, s, value),
                    other => {
                        return Err(Error::Lp(crate::lp::LpError::Degenerate(format!(
                            "regularized program at stage {}, state {} ended {:?}",
                            t + 1,
                            inst.state_name(t, s),
                            other
                        ))))
                    }
                }
            }
        }
        Ok(values)
    }

    /// Whether some cost table is worst for every action at once.
    pub fn check_worst_case_cost(&self, values: &ValueTable) -> Result<CostAssumptionReport> {
        let inst = self.inst;
        let mut stages = Vec::new();
        for t in 0..inst.horizon() {
            let next = values.stage(t + 1);
            let n_s = inst.num_states(t);
            let stage = match (&self.prepared[t], &self.model.stages[t]) {
                (Prepared::Separable(v), _) => {
                    let table: Vec<Vec<Vec<f64>>> = (0..n_s)
                        .map(|s| {
                            (0..inst.num_actions(t, s))
                                .map(|a| {
                                    let mut best = 0;
                                    for (i, c) in v[s][a].iter().enumerate() {
                                        if self.row_payoff(t, s, a, c, next)
                                            > self.row_payoff(t, s, a, &v[s][a][best], next) + 1e-15
                                        {
                                            best = i;
                                        }
                                    }
                                    v[s][a][best].clone()
                                })
                                .collect()
                        })
                        .collect();
                    CostStageAssumption {
                        verdict: Verdict::Uniform,
                        state_witnesses: table.iter().map(|r| Some(r.iter().flatten().copied().collect())).collect(),
                        witness: Some(table),
                    }
                }
                (_, StageCostAmbiguity::Finite { tables }) => {
                    let obj: Vec<Vec<Vec<f64>>> = tables
                        .iter()
                        .map(|tb| {
                            (0..n_s)
                                .map(|s| self.payoffs(t, s, &tb[s].iter().flatten().copied().collect::<Vec<_>>(), next))
                                .collect()
                        })
                        .collect();
                    let attains = |k: usize, s: usize| {
                        (0..inst.num_actions(t, s)).all(|a| {
                            obj[k][s][a] >= obj.iter().map(|o| o[s][a]).fold(f64::NEG_INFINITY, f64::max) - WITNESS_TOL
                        })
                    };
                    let state_witnesses: Vec<Option<Vec<f64>>> = (0..n_s)
                        .map(|s| {
                            (0..tables.len())
                                .find(|&k| attains(k, s))
                                .map(|k| tables[k][s].iter().flatten().copied().collect())
                        })
                        .collect();
                    let uniform = (0..tables.len()).find(|&k| (0..n_s).all(|s| attains(k, s)));
                    CostStageAssumption {
                        verdict: if uniform.is_some() {
                            Verdict::Uniform
                        } else if state_witnesses.iter().all(|w| w.is_some()) {
                            Verdict::StateWise
                        } else {
                            Verdict::Fails
                        },
                        witness: uniform.map(|k| tables[k].clone()),
                        state_witnesses,
                    }
                }
                (Prepared::Union(v), _) => {
                    let n = inst.num_states(t + 1);
                    let state_witnesses: Vec<Option<Vec<f64>>> = (0..n_s)
                        .map(|s| {
                            let cands: Vec<&Vec<f64>> = v[s].iter().flatten().collect();
                            let obj: Vec<Vec<f64>> = cands.iter().map(|c| self.payoffs(t, s, c, next)).collect();
                            let m = inst.num_actions(t, s);
                            let best: Vec<f64> = (0..m)
                                .map(|a| obj.iter().map(|o| o[a]).fold(f64::NEG_INFINITY, f64::max))
                                .collect();
                            obj.iter()
                                .position(|o| (0..m).all(|a| o[a] >= best[a] - WITNESS_TOL))
                                .map(|k| cands[k].clone())
                        })
                        .collect();
                    let all = state_witnesses.iter().all(|w| w.is_some());
                    CostStageAssumption {
                        verdict: if all { Verdict::Uniform } else { Verdict::Fails },
                        witness: all.then(|| {
                            state_witnesses.iter().map(|w| split_rows(w.as_ref().unwrap(), n)).collect()
                        }),
                        state_witnesses,
                    }
                }
            };
            stages.push(stage);
        }
        let verdict = stages.iter().map(|s| s.verdict).min().unwrap_or(Verdict::Uniform);
        Ok(CostAssumptionReport { verdict, stages })
    }

    /// Convexity of the state-wise marginal of the cost set.
    pub fn check_convex_marginal(&self, t: usize, s: usize) -> Result<ConvexityCheck> {
        match &self.model.stages[t] {
            StageCostAmbiguity::SRect { marginals } => check_union_convex(&marginals[s], self.cap),
            _ => check_union_convex(&UnionOfPolytopes::single(Polytope::point(vec![0.0])), self.cap),
        }
    }

    pub fn static_primal(&self, cfg: &OracleConfig) -> Result<StaticPrimal> {
        static_primal_generic(self, cfg)
    }

    pub fn static_dual(&self, cfg: &OracleConfig) -> Result<StaticDual> {
        static_dual_generic(self, cfg)
    }

    /// Game primal, game dual, static primal and static dual side by side.
    pub fn check_equivalence(&self, cfg: &OracleConfig) -> Result<CostEquivalenceReport> {
        let inst = self.inst;
        let s1 = inst.initial_state();
        let primal = self.solve_primal()?;
        let dual = self.solve_dual()?;
        let sp = self.static_primal(cfg)?;
        let sd = self.static_dual(cfg)?;
        let verdict = self.check_worst_case_cost(&primal.values)?.verdict;
        let mut convex = true;
        for t in 0..inst.horizon() {
            for s in 0..inst.num_states(t) {
                convex &= self.check_convex_marginal(t, s)?.convex;
            }
        }
        let gp = primal.values.get(0, s1);
        let gd = dual.values.get(0, s1);
        let structural = self.model.stages.iter().all(|s| !matches!(s, StageCostAmbiguity::Finite { .. }));
        let certified = structural || verdict == Verdict::Uniform;
        let four = certified && (verdict.holds() || convex);
        // The static dual is sampled from below, so it is only required to be close within the grid.
        let dual_slack = sp.tolerance + 1e-6;
        Ok(CostEquivalenceReport {
            game_primal: gp,
            game_dual: gd,
            static_primal: sp.value,
            static_dual_lower_bound: sd.lower_bound,
            grid_tolerance: sp.tolerance,
            verdict,
            convex_marginals: convex,
            certified,
            strong_duality: (gp - gd).abs() <= GAP_TOL,
            four_way_equal: four.then(|| {
                (gp - gd).abs() <= GAP_TOL
                    && (gp - sp.value).abs() <= sp.tolerance + 1e-6
                    && sd.lower_bound <= gd + 1e-6
                    && sd.lower_bound >= gd - dual_slack
            }),
        })
    }
}

impl GameSource for CostProblem<'_> {
    fn local(&self, t: usize, s: usize, next: &[f64]) -> Result<LocalGame> {
        match &self.prepared[t] {
            Prepared::Separable(v) => Ok(LocalGame::Separable {
                points: v[s].clone(),
                payoffs: v[s]
                    .iter()
                    .enumerate()
                    .map(|(a, verts)| verts.iter().map(|c| self.row_payoff(t, s, a, c, next)).collect())
                    .collect(),
            }),
            Prepared::Union(v) => {
                check_cap(
                    || "local game vertices".into(),
                    [v[s].iter().map(|p| p.len()).sum::<usize>()],
                    self.cap,
                )?;
                Ok(LocalGame::Union {
                    points: v[s].clone(),
                    payoffs: v[s]
                        .iter()
                        .map(|piece| piece.iter().map(|c| self.payoffs(t, s, c, next)).collect())
                        .collect(),
                })
            }
        }
    }
}

impl LawModel for CostProblem<'_> {
    fn instance(&self) -> &MdpInstance {
        self.inst
    }

    fn support(&self, t: usize, s: usize) -> Result<Vec<bool>> {
        let n = self.inst.num_states(t + 1);
        let mut out = vec![false; n];
        for a in 0..self.inst.num_actions(t, s) {
            for (j, p) in self.kernel.stage(t).row(s, a).iter().enumerate() {
                out[j] |= *p > 0.0;
            }
        }
        Ok(out)
    }

    fn structure(&self, t: usize, reach: &[bool]) -> Result<LawStructure<'_>> {
        let inst = self.inst;
        let n = inst.num_states(t + 1);
        let n_s = inst.num_states(t);
        let kernel = self.kernel.stage(t).clone();
        let reach = reach.to_vec();
        let unflatten = move |v: &[f64], s: usize| -> Vec<Vec<f64>> {
            (0..inst.num_actions(t, s)).map(|a| v[a * n..(a + 1) * n].to_vec()).collect()
        };
        Ok(match (&self.prepared[t], &self.model.stages[t]) {
            (_, StageCostAmbiguity::Finite { tables }) => {
                let flat: Vec<Vec<f64>> = tables.iter().map(|tb| tb.iter().flatten().flatten().copied().collect()).collect();
                LawStructure {
                    components: vec![vec![flat]],
                    assemble: Box::new(move |c| {
                        let mut off = 0;
                        let costs = (0..n_s)
                            .map(|s| {
                                let k = inst.num_actions(t, s) * n;
                                let r = unflatten(&c[0][off..off + k], s);
                                off += k;
                                r
                            })
                            .collect();
                        StageLaw {
                            kernel: kernel.clone(),
                            costs,
                        }
                    }),
                }
            }
            (Prepared::Separable(v), _) => {
                let v = v.clone();
                let comps = (0..n_s)
                    .filter(|&s| reach[s])
                    .flat_map(|s| v[s].iter().map(|verts| vec![verts.clone()]).collect::<Vec<_>>())
                    .collect();
                LawStructure {
                    components: comps,
                    assemble: Box::new(move |c| {
                        let mut k = 0;
                        let costs = (0..n_s)
                            .map(|s| {
                                (0..v[s].len())
                                    .map(|a| {
                                        if reach[s] {
                                            k += 1;
                                            c[k - 1].clone()
                                        } else {
                                            v[s][a][0].clone()
                                        }
                                    })
                                    .collect()
                            })
                            .collect();
                        StageLaw {
                            kernel: kernel.clone(),
                            costs,
                        }
                    }),
                }
            }
            (Prepared::Union(v), _) => {
                let v = v.clone();
                let comps = (0..n_s).filter(|&s| reach[s]).map(|s| v[s].clone()).collect();
                LawStructure {
                    components: comps,
                    assemble: Box::new(move |c| {
                        let mut k = 0;
                        let costs = (0..n_s)
                            .map(|s| {
                                let row = if reach[s] {
                                    k += 1;
                                    &c[k - 1]
                                } else {
                                    &v[s][0][0]
                                };
                                unflatten(row, s)
                            })
                            .collect();
                        StageLaw {
                            kernel: kernel.clone(),
                            costs,
                        }
                    }),
                }
            }
        })
    }
}

pub fn solve_primal_cost(inst: &MdpInstance, kernel: &Kernel, model: &CostAmbiguityModel) -> Result<CostPrimalSolution> {
    CostProblem::new(inst, kernel, model)?.solve_primal()
}

pub fn solve_dual_cost(inst: &MdpInstance, kernel: &Kernel, model: &CostAmbiguityModel) -> Result<CostDualSolution> {
    CostProblem::new(inst, kernel, model)?.solve_dual()
}

pub fn support_function_h(
    inst: &MdpInstance,
    kernel: &Kernel,
    model: &CostAmbiguityModel,
    t: usize,
    s: usize,
    x: &[f64],
) -> Result<f64> {
    CostProblem::new(inst, kernel, model)?.support_function(t, s, x)
}

pub fn solve_via_regularization(inst: &MdpInstance, kernel: &Kernel, model: &CostAmbiguityModel) -> Result<ValueTable> {
    CostProblem::new(inst, kernel, model)?.solve_via_regularization()
}

/// Interval costs `[c − δ, c + δ]` around the instance's costs, per `(s, a)`.
pub fn interval_cost_model(inst: &MdpInstance, delta: f64) -> CostAmbiguityModel {
    CostAmbiguityModel::new(
        (0..inst.horizon())
            .map(|t| StageCostAmbiguity::SaRect {
                polytopes: (0..inst.num_states(t))
                    .map(|s| {
                        (0..inst.num_actions(t, s))
                            .map(|a| {
                                let c = inst.cost_row(t, s, a);
                                Polytope::segment(
                                    c.iter().map(|x| x - delta).collect(),
                                    c.iter().map(|x| x + delta).collect(),
                                )
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{solve_nominal, MdpBuilder, StageKernel};

    fn inst() -> (MdpInstance, Kernel) {
        let inst = MdpBuilder::new(&[vec!["s"], vec!["x", "y"]])
            .actions(0, "s", &["a", "b"])
            .cost(0, "s", "a", "x", 1.0)
            .cost(0, "s", "b", "y", 2.0)
            .terminal("x", 0.5)
            .build()
            .unwrap();
        let k = Kernel::new(
            &inst,
            vec![StageKernel::from_rows(vec![vec![vec![0.5, 0.5], vec![0.2, 0.8]]])],
        )
        .unwrap();
        (inst, k)
    }

    #[test]
    fn interval_set_is_upper_endpoint() {
        let (inst, k) = inst();
        let model = interval_cost_model(&inst, 0.3);
        let p = solve_primal_cost(&inst, &k, &model).unwrap();
        let shifted = inst.with_stage_costs(
            0,
            inst.stage_costs(0).iter().map(|r| r.iter().map(|c| c.iter().map(|x| x + 0.3).collect()).collect()).collect(),
        );
        let (nominal, _) = solve_nominal(&shifted, &k).unwrap();
        assert!(p.values.max_abs_diff(&nominal) < 1e-9);
        let reg = solve_via_regularization(&inst, &k, &model).unwrap();
        assert!(reg.max_abs_diff(&p.values) < 1e-8);
    }

    #[test]
    fn symmetric_finite_set_is_nonnegative() {
        let (inst, k) = inst();
        let c = inst.stage_costs(0).to_vec();
        let neg: Vec<Vec<Vec<f64>>> = c.iter().map(|r| r.iter().map(|x| x.iter().map(|v| -v).collect()).collect()).collect();
        let zero_term = MdpBuilder::new(&[vec!["s"], vec!["x", "y"]])
            .actions(0, "s", &["a", "b"])
            .build()
            .unwrap();
        let model = CostAmbiguityModel::new(vec![StageCostAmbiguity::Finite { tables: vec![c, neg] }]);
        let p = solve_primal_cost(&zero_term, &k, &model).unwrap();
        assert!(p.values.get(0, 0) >= -1e-12);
        let d = solve_dual_cost(&zero_term, &k, &model).unwrap();
        assert!(d.values.get(0, 0) <= p.values.get(0, 0) + 1e-9);
    }

    #[test]
    fn support_function_basics() {
        let (inst, k) = inst();
        let model = interval_cost_model(&inst, 0.3);
        let pr = CostProblem::new(&inst, &k, &model).unwrap();
        assert_eq!(pr.support_function(0, 0, &[0.0, 0.0]).unwrap(), 0.0);
        let h = pr.support_function(0, 0, &[0.3, 0.7]).unwrap();
        let h2 = pr.support_function(0, 0, &[0.6, 1.4]).unwrap();
        assert!((h2 - 2.0 * h).abs() < 1e-12);
        let single = CostAmbiguityModel::new(vec![StageCostAmbiguity::Singleton {
            table: inst.stage_costs(0).to_vec(),
        }]);
        let ps = CostProblem::new(&inst, &k, &single).unwrap();
        // E[c | a] = 0.5, E[c | b] = 1.6
        assert!((ps.support_function(0, 0, &[2.0, -1.0]).unwrap() - (1.0 - 1.6)).abs() < 1e-12);
    }

    #[test]
    fn singleton_four_way() {
        let (inst, k) = inst();
        let single = CostAmbiguityModel::new(vec![StageCostAmbiguity::Singleton {
            table: inst.stage_costs(0).to_vec(),
        }]);
        let r = CostProblem::new(&inst, &k, &single)
            .unwrap()
            .check_equivalence(&OracleConfig::default())
            .unwrap();
        assert_eq!(r.four_way_equal, Some(true));
        let (nominal, _) = solve_nominal(&inst, &k).unwrap();
        assert!((r.game_primal - nominal.get(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn unbounded_halfspace_rejected() {
        let (inst, k) = inst();
        let model = CostAmbiguityModel::new(vec![StageCostAmbiguity::SaRect {
            polytopes: vec![vec![
                Polytope::Halfspaces {
                    a: vec![vec![1.0, 0.0]],
                    b: vec![1.0],
                    e: vec![],
                    f: vec![],
                },
                Polytope::point(vec![0.0, 0.0]),
            ]],
        }]);
        assert!(matches!(CostProblem::new(&inst, &k, &model), Err(Error::InvalidModel(_))));
    }
}

//! Backward induction for the robust game: the min-max (primal) and max-min
//! (dual) recursions, robust policy evaluation, and the checks that decide
//! whether the two recursions must agree.
//!
//! Every `(t, s)` subproblem is a [`LocalGame`]: nature's candidate points
//! (joint action-major rows) and the controller's payoff against each. The
//! same engine drives kernel ambiguity here and cost ambiguity in
//! [`crate::cost`].

use serde::Serialize;

use crate::ambiguity::{
    marginalize_statewise, push_unique, AmbiguityModel, RFactors, StageAmbiguity,
};
use crate::error::{check_cap, Error, Result, DEFAULT_CAP};
use crate::geometry::{hull_contains, UnionOfPolytopes};
use crate::lp::{argmax, argmin, minmax_over_union};
use crate::mdp::{MdpInstance, RandomizedPolicy, StageKernel, ValueTable};

/// Value comparisons across stages.
pub const VALUE_TOL: f64 = 1e-7;
/// Certifying that a witness attains a maximum.
pub const WITNESS_TOL: f64 = 1e-8;
/// Largest gap still read as strong duality.
pub const GAP_TOL: f64 = 1e-6;

/// One `(t, s)` subproblem.
#[derive(Debug, Clone)]
pub(crate) enum LocalGame {
    /// `points[p][v]` is vertex `v` of piece `p`; `payoffs[p][v][a]` its payoff under action `a`.
    Union {
        points: Vec<Vec<Vec<f64>>>,
        payoffs: Vec<Vec<Vec<f64>>>,
    },
    /// Each action faces its own polytope: `points[a][v]`, `payoffs[a][v]`.
    Separable {
        points: Vec<Vec<Vec<f64>>>,
        payoffs: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct LocalSolution {
    pub primal: f64,
    pub dual: f64,
    pub minimizer: Vec<f64>,
    pub primal_point: Vec<f64>,
    pub primal_piece: usize,
    pub dual_point: Vec<f64>,
    pub dual_piece: usize,
    pub dual_response: usize,
    pub saddle: bool,
    /// Lowest pure action attaining the min-max value, if any.
    pub pure: Option<usize>,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn first_max(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 + 1e-12 {
            best = (i, v);
        }
    }
    best
}

impl LocalGame {
    fn separable_maxima(payoffs: &[Vec<f64>]) -> Vec<(usize, f64)> {
        payoffs.iter().map(|p| first_max(p.iter().copied())).collect()
    }

    pub(crate) fn solve(&self) -> Result<LocalSolution> {
        match self {
            LocalGame::Separable { points, payoffs } => {
                let maxima = Self::separable_maxima(payoffs);
                let m: Vec<f64> = maxima.iter().map(|x| x.1).collect();
                let a = argmin(&m);
                let point: Vec<f64> = maxima
                    .iter()
                    .enumerate()
                    .flat_map(|(b, &(v, _))| points[b][v].iter().copied())
                    .collect();
                let mut minimizer = vec![0.0; m.len()];
                minimizer[a] = 1.0;
                Ok(LocalSolution {
                    primal: m[a],
                    dual: m[a],
                    minimizer,
                    primal_point: point.clone(),
                    primal_piece: 0,
                    dual_point: point,
                    dual_piece: 0,
                    dual_response: a,
                    saddle: true,
                    pure: Some(a),
                })
            }
            LocalGame::Union { points, payoffs } => {
                let sol = minmax_over_union(payoffs)?;
                let pi = &sol.primal.minimizer;
                let pooled: Vec<(usize, usize)> = payoffs
                    .iter()
                    .enumerate()
                    .flat_map(|(p, vs)| (0..vs.len()).map(move |v| (p, v)))
                    .collect();
                let (k, _) = first_max(pooled.iter().map(|&(p, v)| dot(pi, &payoffs[p][v])));
                let (pp, pv) = pooled[k];
                let piece = sol.dual.piece_index;
                let dim = points[piece][0].len();
                let mut dual_point = vec![0.0; dim];
                for (l, x) in sol.dual.maximizer.iter().zip(&points[piece]) {
                    for (d, xi) in dual_point.iter_mut().zip(x) {
                        *d += l * xi;
                    }
                }
                let n_a = pi.len();
                let pure = (0..n_a).find(|&a| {
                    pooled
                        .iter()
                        .all(|&(p, v)| payoffs[p][v][a] <= sol.primal.value + VALUE_TOL)
                });
                Ok(LocalSolution {
                    primal: sol.primal.value,
                    dual: sol.dual.value,
                    minimizer: sol.primal.minimizer.clone(),
                    primal_point: points[pp][pv].clone(),
                    primal_piece: pp,
                    dual_point,
                    dual_piece: piece,
                    dual_response: argmax(&sol.dual.minimizer),
                    saddle: sol.primal.is_saddle,
                    pure,
                })
            }
        }
    }

    /// Nature's best response to a fixed controller row.
    pub(crate) fn evaluate(&self, pi: &[f64]) -> (f64, Vec<f64>) {
        match self {
            LocalGame::Separable { points, payoffs } => {
                let maxima = Self::separable_maxima(payoffs);
                let v = maxima.iter().zip(pi).map(|(m, p)| p * m.1).sum();
                let point = maxima
                    .iter()
                    .enumerate()
                    .flat_map(|(b, &(v, _))| points[b][v].iter().copied())
                    .collect();
                (v, point)
            }
            LocalGame::Union { points, payoffs } => {
                let pooled: Vec<(usize, usize)> = payoffs
                    .iter()
                    .enumerate()
                    .flat_map(|(p, vs)| (0..vs.len()).map(move |v| (p, v)))
                    .collect();
                let (k, v) = first_max(pooled.iter().map(|&(p, v)| dot(pi, &payoffs[p][v])));
                let (p, i) = pooled[k];
                (v, points[p][i].clone())
            }
        }
    }

}

/// Source of per-state subproblems for a given continuation value.
pub(crate) trait GameSource {
    fn local(&self, t: usize, s: usize, next: &[f64]) -> Result<LocalGame>;
}

/// Split an action-major joint vector into rows of length `n`.
pub fn split_rows(v: &[f64], n: usize) -> Vec<Vec<f64>> {
    v.chunks(n).map(|c| c.to_vec()).collect()
}

pub(crate) struct PrimalRun {
    pub values: ValueTable,
    pub locals: Vec<Vec<LocalSolution>>,
}

pub(crate) fn run_primal(inst: &MdpInstance, src: &dyn GameSource) -> Result<PrimalRun> {
    let mut values = ValueTable::with_terminal(inst);
    let mut locals = vec![Vec::new(); inst.horizon()];
    for t in (0..inst.horizon()).rev() {
        let next = values.stage(t + 1).to_vec();
        for s in 0..inst.num_states(t) {
            let sol = src.local(t, s, &next)?.solve()?;
            values.set(t, s, sol.primal);
            locals[t].push(sol);
        }
    }
    Ok(PrimalRun { values, locals })
}

pub(crate) fn run_dual(inst: &MdpInstance, src: &dyn GameSource) -> Result<PrimalRun> {
    let mut values = ValueTable::with_terminal(inst);
    let mut locals = vec![Vec::new(); inst.horizon()];
    for t in (0..inst.horizon()).rev() {
        let next = values.stage(t + 1).to_vec();
        for s in 0..inst.num_states(t) {
            let sol = src.local(t, s, &next)?.solve()?;
            values.set(t, s, sol.dual);
            locals[t].push(sol);
        }
    }
    Ok(PrimalRun { values, locals })
}

pub(crate) fn run_evaluate(
    inst: &MdpInstance,
    src: &dyn GameSource,
    policy: &RandomizedPolicy,
) -> Result<(ValueTable, Vec<Vec<Vec<f64>>>)> {
    check_policy(inst, policy)?;
    let mut values = ValueTable::with_terminal(inst);
    let mut points = vec![Vec::new(); inst.horizon()];
    for t in (0..inst.horizon()).rev() {
        let next = values.stage(t + 1).to_vec();
        for s in 0..inst.num_states(t) {
            let (v, p) = src.local(t, s, &next)?.evaluate(policy.row(t, s));
            values.set(t, s, v);
            points[t].push(p);
        }
    }
    Ok((values, points))
}

fn check_policy(inst: &MdpInstance, policy: &RandomizedPolicy) -> Result<()> {
    let rows = policy.rows();
    let bad = rows.len() != inst.horizon()
        || rows.iter().enumerate().any(|(t, l)| {
            l.len() != inst.num_states(t)
                || l.iter().enumerate().any(|(s, r)| r.len() != inst.num_actions(t, s))
        });
    if bad {
        let stage = rows
            .iter()
            .enumerate()
            .position(|(t, l)| t >= inst.horizon() || l.len() != inst.num_states(t))
            .unwrap_or(0)
            + 1;
        return Err(Error::Dimension {
            stage,
            detail: "policy does not match the instance".into(),
        });
    }
    Ok(())
}

/// Kernel candidates per stage, with vertex lists computed once.
#[derive(Debug, Clone)]
enum Prepared {
    /// `[s][a][v]` rows over next states.
    Separable(Vec<Vec<Vec<Vec<f64>>>>),
    /// `[s][p][v]` joint rows.
    Union(Vec<Vec<Vec<Vec<f64>>>>),
    R(RFactors),
    Blend {
        beta: f64,
        s_part: Vec<Vec<Vec<Vec<f64>>>>,
        r: RFactors,
    },
}

/// A validated instance together with kernel ambiguity, ready to solve.
#[derive(Debug, Clone)]
pub struct RobustProblem<'a> {
    inst: &'a MdpInstance,
    model: &'a AmbiguityModel,
    prepared: Vec<Prepared>,
    cap: u128,
}

fn kernel_payoffs(inst: &MdpInstance, t: usize, s: usize, point: &[f64], next: &[f64]) -> Vec<f64> {
    let n = inst.num_states(t + 1);
    (0..inst.num_actions(t, s))
        .map(|a| {
            let row = &point[a * n..(a + 1) * n];
            let c = inst.cost_row(t, s, a);
            (0..n).map(|j| row[j] * (c[j] + next[j])).sum()
        })
        .collect()
}

impl<'a> RobustProblem<'a> {
    pub fn new(inst: &'a MdpInstance, model: &'a AmbiguityModel) -> Result<Self> {
        Self::with_cap(inst, model, DEFAULT_CAP)
    }

    pub fn with_cap(inst: &'a MdpInstance, model: &'a AmbiguityModel, cap: u128) -> Result<Self> {
        let v = inst.validate();
        if !v.is_empty() {
            return Err(Error::InvalidInstance(v));
        }
        model.validate(inst, cap)?;
        model.check_cost_restriction(inst)?;
        let mut prepared = Vec::with_capacity(inst.horizon());
        for (t, st) in model.stages.iter().enumerate() {
            let p = match st {
                StageAmbiguity::SaRect { polytopes } => Prepared::Separable(
                    polytopes
                        .iter()
                        .map(|per_a| per_a.iter().map(|p| p.vertices(cap)).collect::<Result<Vec<_>>>())
                        .collect::<Result<_>>()?,
                ),
                StageAmbiguity::SRect { marginals } => Prepared::Union(
                    marginals
                        .iter()
                        .map(|u| u.piece_vertices(cap))
                        .collect::<Result<_>>()?,
                ),
                StageAmbiguity::RRect { .. } => Prepared::R(st.r_factors().expect("r part")),
                StageAmbiguity::SrRect {
                    beta,
                    s_part,
                    r_part,
                } => Prepared::Blend {
                    beta: *beta,
                    s_part: s_part
                        .iter()
                        .map(|u| u.piece_vertices(cap))
                        .collect::<Result<_>>()?,
                    r: r_part.clone(),
                },
                StageAmbiguity::Finite { .. } | StageAmbiguity::Singleton { .. } => Prepared::Union(
                    (0..inst.num_states(t))
                        .map(|s| {
                            let u = marginalize_statewise(st, inst, t, s, cap)?;
                            u.piece_vertices(cap)
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            prepared.push(p);
        }
        Ok(RobustProblem {
            inst,
            model,
            prepared,
            cap,
        })
    }

    pub fn instance(&self) -> &MdpInstance {
        self.inst
    }

    pub fn model(&self) -> &AmbiguityModel {
        self.model
    }

    /// Per-state candidate points at `(t, s)` given the continuation `next`.
    fn candidates(&self, t: usize, s: usize, next: &[f64]) -> Vec<Vec<Vec<f64>>> {
        match &self.prepared[t] {
            Prepared::Separable(_) => unreachable!("separable stages have no joint candidates"),
            Prepared::Union(v) => v[s].clone(),
            Prepared::R(r) => vec![vec![r.joint_row(s, &r.witness(next))]],
            Prepared::Blend { beta, s_part, r } => {
                let rj = r.joint_row(s, &r.witness(next));
                s_part[s]
                    .iter()
                    .map(|piece| {
                        piece
                            .iter()
                            .map(|v| v.iter().zip(&rj).map(|(x, y)| beta * x + (1.0 - beta) * y).collect())
                            .collect()
                    })
                    .collect()
            }
        }
    }

    pub fn solve_primal(&self) -> Result<PrimalSolution> {
        let run = run_primal(self.inst, self)?;
        Ok(self.primal_solution(run))
    }

    fn primal_solution(&self, run: PrimalRun) -> PrimalSolution {
        let inst = self.inst;
        let rows = run
            .locals
            .iter()
            .map(|l| l.iter().map(|x| x.minimizer.clone()).collect())
            .collect();
        let nature = run
            .locals
            .iter()
            .enumerate()
            .map(|(t, l)| {
                l.iter()
                    .map(|x| NatureChoice {
                        rows: split_rows(&x.primal_point, inst.num_states(t + 1)),
                        piece: x.primal_piece,
                    })
                    .collect()
            })
            .collect();
        let saddle = run
            .locals
            .iter()
            .map(|l| l.iter().map(|x| x.saddle).collect())
            .collect();
        let pure: Option<Vec<Vec<usize>>> = run
            .locals
            .iter()
            .map(|l| l.iter().map(|x| x.pure).collect::<Option<Vec<_>>>())
            .collect();
        PrimalSolution {
            values: run.values,
            policy: RandomizedPolicy::from_rows_unchecked(rows),
            deterministic: pure.map(|c| RandomizedPolicy::deterministic(inst, &c)),
            nature,
            per_state_saddle: saddle,
        }
    }

    pub fn solve_dual(&self) -> Result<DualSolution> {
        let inst = self.inst;
        let run = run_dual(inst, self)?;
        let nature = run
            .locals
            .iter()
            .enumerate()
            .map(|(t, l)| {
                l.iter()
                    .map(|x| NatureChoice {
                        rows: split_rows(&x.dual_point, inst.num_states(t + 1)),
                        piece: x.dual_piece,
                    })
                    .collect()
            })
            .collect();
        let responses = run
            .locals
            .iter()
            .map(|l| l.iter().map(|x| x.dual_response).collect())
            .collect();
        Ok(DualSolution {
            values: run.values,
            nature,
            controller_responses: responses,
        })
    }

    /// Worst-case value of a fixed Markov policy.
    pub fn evaluate(&self, policy: &RandomizedPolicy) -> Result<(ValueTable, Vec<Vec<NatureChoice>>)> {
        let (values, points) = run_evaluate(self.inst, self, policy)?;
        let nature = points
            .iter()
            .enumerate()
            .map(|(t, l)| {
                l.iter()
                    .map(|p| NatureChoice {
                        rows: split_rows(p, self.inst.num_states(t + 1)),
                        piece: 0,
                    })
                    .collect()
            })
            .collect();
        Ok((values, nature))
    }

    /// Worst-case kernel check against the continuation values in `values`
    /// (row `t + 1` is used at stage `t`).
    pub fn check_worst_case_kernel(&self, values: &ValueTable) -> Result<AssumptionReport> {
        let inst = self.inst;
        let mut stages = Vec::new();
        for t in 0..inst.horizon() {
            let next = values.stage(t + 1);
            let n = inst.num_states(t + 1);
            let report = match (&self.prepared[t], self.model.stage(t)) {
                (Prepared::Separable(verts), _) => {
                    let rows = (0..inst.num_states(t))
                        .map(|s| {
                            (0..inst.num_actions(t, s))
                                .map(|a| {
                                    let c = inst.cost_row(t, s, a);
                                    let scores: Vec<f64> = verts[s][a]
                                        .iter()
                                        .map(|v| (0..n).map(|j| v[j] * (c[j] + next[j])).sum())
                                        .collect();
                                    verts[s][a][first_max(scores).0].clone()
                                })
                                .collect()
                        })
                        .collect();
                    let k = StageKernel::from_rows(rows);
                    StageAssumption {
                        verdict: Verdict::Uniform,
                        state_witnesses: (0..inst.num_states(t)).map(|s| Some(k.joint_row(s))).collect(),
                        witness: Some(k),
                    }
                }
                (_, StageAmbiguity::Finite { kernels }) => self.finite_check(t, kernels, next),
                _ => {
                    // State-decoupled candidates (plus the shared r witness).
                    let per_state: Vec<Option<Vec<f64>>> = (0..inst.num_states(t))
                        .map(|s| {
                            let cands: Vec<Vec<f64>> =
                                self.candidates(t, s, next).into_iter().flatten().collect();
                            state_witness(inst, t, s, &cands, next)
                        })
                        .collect();
                    let all = per_state.iter().all(|w| w.is_some());
                    let witness = all.then(|| {
                        StageKernel::from_rows(
                            per_state
                                .iter()
                                .map(|w| split_rows(w.as_ref().unwrap(), n))
                                .collect(),
                        )
                    });
                    StageAssumption {
                        verdict: if all { Verdict::Uniform } else { Verdict::Fails },
                        state_witnesses: per_state,
                        witness,
                    }
                }
            };
            stages.push(report);
        }
        let verdict = stages.iter().map(|s| s.verdict).min().unwrap_or(Verdict::Uniform);
        Ok(AssumptionReport { verdict, stages })
    }

    fn finite_check(&self, t: usize, kernels: &[StageKernel], next: &[f64]) -> StageAssumption {
        let inst = self.inst;
        let n_s = inst.num_states(t);
        // objective[k][s][a]
        let obj: Vec<Vec<Vec<f64>>> = kernels
            .iter()
            .map(|k| (0..n_s).map(|s| kernel_payoffs(inst, t, s, &k.joint_row(s), next)).collect())
            .collect();
        let best = |s: usize, a: usize| obj.iter().map(|o| o[s][a]).fold(f64::NEG_INFINITY, f64::max);
        let attains = |k: usize, s: usize| {
            (0..inst.num_actions(t, s)).all(|a| obj[k][s][a] >= best(s, a) - WITNESS_TOL)
        };
        let state_witnesses: Vec<Option<Vec<f64>>> = (0..n_s)
            .map(|s| (0..kernels.len()).find(|&k| attains(k, s)).map(|k| kernels[k].joint_row(s)))
            .collect();
        let uniform = (0..kernels.len()).find(|&k| (0..n_s).all(|s| attains(k, s)));
        let verdict = if uniform.is_some() {
            Verdict::Uniform
        } else if state_witnesses.iter().all(|w| w.is_some()) {
            Verdict::StateWise
        } else {
            Verdict::Fails
        };
        StageAssumption {
            verdict,
            witness: uniform.map(|k| kernels[k].clone()),
            state_witnesses,
        }
    }

    /// Whether the state-wise marginal at `(t, s)` is convex.
    pub fn check_convex_marginal(&self, t: usize, s: usize) -> Result<ConvexityCheck> {
        match self.model.stage(t) {
            StageAmbiguity::SaRect { .. } => Ok(ConvexityCheck::exact(true)),
            st => {
                let u = marginalize_statewise(st, self.inst, t, s, self.cap)?;
                check_union_convex(&u, self.cap)
            }
        }
    }

    pub fn diagnose(&self) -> Result<RobustSolveReport> {
        let inst = self.inst;
        let primal = self.solve_primal()?;
        let dual = self.solve_dual()?;
        let s1 = inst.initial_state();
        let gap = primal.values.get(0, s1) - dual.values.get(0, s1);
        let assumption = self.check_worst_case_kernel(&primal.values)?;
        let convex: Vec<Vec<ConvexityCheck>> = (0..inst.horizon())
            .map(|t| {
                (0..inst.num_states(t))
                    .map(|s| self.check_convex_marginal(t, s))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let all_convex = convex.iter().flatten().all(|c| c.convex);
        let all_saddle = primal.per_state_saddle.iter().flatten().all(|&b| b);
        let holds = assumption.verdict != Verdict::Fails;
        let implications = vec![
            Implication::new("weak duality", true, gap >= -VALUE_TOL),
            Implication::new("worst-case kernel exists => no duality gap", holds, gap <= GAP_TOL),
            Implication::new(
                "worst-case kernel exists => deterministic optimal policy",
                holds,
                primal.deterministic.is_some(),
            ),
            Implication::new("convex state-wise marginals => saddle at every state", all_convex, all_saddle),
            Implication::new("saddle at every state => no duality gap", all_saddle, gap <= GAP_TOL),
        ];
        let mut remarks = vec![
            "nature is restricted to Markov kernel choices; randomized choices over the kernel set are not computed".to_string(),
        ];
        if primal.deterministic.is_none() && gap <= GAP_TOL {
            remarks.push("no pure action attains the min-max value at some state; the randomized policy is required".into());
        }
        Ok(RobustSolveReport {
            primal_values: primal.values,
            dual_values: dual.values,
            gap,
            controller_policy: primal.policy,
            deterministic_policy: primal.deterministic,
            nature_primal_response: primal.nature,
            nature_dual_policy: dual.nature,
            dual_controller_responses: dual.controller_responses,
            per_state_saddle: primal.per_state_saddle,
            assumption,
            convex_marginal: convex,
            implications,
            remarks,
        })
    }
}

impl GameSource for RobustProblem<'_> {
    fn local(&self, t: usize, s: usize, next: &[f64]) -> Result<LocalGame> {
        let inst = self.inst;
        if let Prepared::Separable(verts) = &self.prepared[t] {
            let n = inst.num_states(t + 1);
            let payoffs = (0..inst.num_actions(t, s))
                .map(|a| {
                    let c = inst.cost_row(t, s, a);
                    verts[s][a]
                        .iter()
                        .map(|v| (0..n).map(|j| v[j] * (c[j] + next[j])).sum())
                        .collect()
                })
                .collect();
            return Ok(LocalGame::Separable {
                points: verts[s].clone(),
                payoffs,
            });
        }
        let points = self.candidates(t, s, next);
        check_cap(
            || "local game vertices".into(),
            [points.iter().map(|p| p.len()).sum::<usize>()],
            self.cap,
        )?;
        let payoffs = points
            .iter()
            .map(|piece| piece.iter().map(|v| kernel_payoffs(inst, t, s, v, next)).collect())
            .collect();
        Ok(LocalGame::Union { points, payoffs })
    }
}

fn state_witness(
    inst: &MdpInstance,
    t: usize,
    s: usize,
    cands: &[Vec<f64>],
    next: &[f64],
) -> Option<Vec<f64>> {
    let obj: Vec<Vec<f64>> = cands.iter().map(|v| kernel_payoffs(inst, t, s, v, next)).collect();
    let n_a = inst.num_actions(t, s);
    let best: Vec<f64> = (0..n_a)
        .map(|a| obj.iter().map(|o| o[a]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    obj.iter()
        .position(|o| (0..n_a).all(|a| o[a] >= best[a] - WITNESS_TOL))
        .map(|k| cands[k].clone())
}

/// Convexity of a union of vertex-list pieces.
///
/// Exact when one piece already holds every vertex; otherwise pairwise
/// combinations on a 1/8 grid and the centroid are tested for membership.
pub fn check_union_convex(u: &UnionOfPolytopes, cap: u128) -> Result<ConvexityCheck> {
    let lists = u.piece_vertices(cap)?;
    if lists.len() == 1 {
        return Ok(ConvexityCheck::exact(true));
    }
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    for v in lists.iter().flatten() {
        push_unique(&mut pooled, v.clone());
    }
    for piece in &lists {
        let mut all = true;
        for v in &pooled {
            if !hull_contains(piece, v)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(ConvexityCheck::exact(true));
        }
    }
    let mut probes: Vec<Vec<f64>> = Vec::new();
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            for k in 1..8 {
                let l = k as f64 / 8.0;
                probes.push(pooled[i].iter().zip(&pooled[j]).map(|(x, y)| l * x + (1.0 - l) * y).collect());
            }
        }
    }
    let d = pooled[0].len();
    let centroid: Vec<f64> = (0..d)
        .map(|c| pooled.iter().map(|v| v[c]).sum::<f64>() / pooled.len() as f64)
        .collect();
    probes.push(centroid);
    for x in probes {
        if !u.contains(&x)? {
            return Ok(ConvexityCheck {
                convex: false,
                exact: true,
                witness: Some(x),
            });
        }
    }
    Ok(ConvexityCheck {
        convex: true,
        exact: false,
        witness: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityCheck {
    pub convex: bool,
    /// False when convexity was only supported by sampling.
    pub exact: bool,
    /// A convex combination of marginal points lying outside the marginal.
    pub witness: Option<Vec<f64>>,
}

impl ConvexityCheck {
    fn exact(convex: bool) -> Self {
        ConvexityCheck {
            convex,
            exact: true,
            witness: None,
        }
    }
}

/// Outcome of the worst-case kernel check, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Some state has no kernel that is worst for all its actions at once.
    Fails,
    /// Every state has its own worst-case kernel, but no single kernel serves all states.
    StateWise,
    /// One kernel is worst for every state and action simultaneously.
    Uniform,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self != Verdict::Fails
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Fails => "fails",
            Verdict::StateWise => "state_wise",
            Verdict::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageAssumption {
    pub verdict: Verdict,
    pub witness: Option<StageKernel>,
    /// Joint row attaining every action's maximum at each state, if one exists.
    pub state_witnesses: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub verdict: Verdict,
    pub stages: Vec<StageAssumption>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NatureChoice {
    /// `rows[a][s']`.
    pub rows: Vec<Vec<f64>>,
    pub piece: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub values: ValueTable,
    pub policy: RandomizedPolicy,
    /// Pure-action optimal policy, when every state admits one.
    pub deterministic: Option<RandomizedPolicy>,
    /// Extreme point nature plays against the optimal policy, per `[t][s]`.
    pub nature: Vec<Vec<NatureChoice>>,
    pub per_state_saddle: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub values: ValueTable,
    pub nature: Vec<Vec<NatureChoice>>,
    /// Pure controller response to nature's point, per `[t][s]`.
    pub controller_responses: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Implication {
    pub name: String,
    pub premise: bool,
    pub conclusion: bool,
}

impl Implication {
    pub fn new(name: &str, premise: bool, conclusion: bool) -> Self {
        Implication {
            name: name.to_string(),
            premise,
            conclusion,
        }
    }

    pub fn holds(&self) -> bool {
        !self.premise || self.conclusion
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolveReport {
    pub primal_values: ValueTable,
    pub dual_values: ValueTable,
    pub gap: f64,
    pub controller_policy: RandomizedPolicy,
    pub deterministic_policy: Option<RandomizedPolicy>,
    pub nature_primal_response: Vec<Vec<NatureChoice>>,
    pub nature_dual_policy: Vec<Vec<NatureChoice>>,
    pub dual_controller_responses: Vec<Vec<usize>>,
    pub per_state_saddle: Vec<Vec<bool>>,
    pub assumption: AssumptionReport,
    pub convex_marginal: Vec<Vec<ConvexityCheck>>,
    pub implications: Vec<Implication>,
    pub remarks: Vec<String>,
}

impl RobustSolveReport {
    pub fn implications_hold(&self) -> bool {
        self.implications.iter().all(|i| i.holds())
    }
}

pub fn solve_primal(inst: &MdpInstance, model: &AmbiguityModel) -> Result<PrimalSolution> {
    RobustProblem::new(inst, model)?.solve_primal()
}

pub fn solve_dual(inst: &MdpInstance, model: &AmbiguityModel) -> Result<DualSolution> {
    RobustProblem::new(inst, model)?.solve_dual()
}

pub fn evaluate_policy_robust(
    inst: &MdpInstance,
    model: &AmbiguityModel,
    policy: &RandomizedPolicy,
) -> Result<ValueTable> {
    Ok(RobustProblem::new(inst, model)?.evaluate(policy)?.0)
}

pub fn diagnose(inst: &MdpInstance, model: &AmbiguityModel) -> Result<RobustSolveReport> {
    RobustProblem::new(inst, model)?.diagnose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polytope;
    use crate::mdp::{solve_nominal, Kernel, MdpBuilder};

    fn two_stage(v_b: f64, v_c: f64) -> MdpInstance {
        MdpBuilder::new(&[vec!["sA"], vec!["sB", "sC"]])
            .actions(0, "sA", &["aL", "aR"])
            .terminal("sB", v_b)
            .terminal("sC", v_c)
            .build()
            .unwrap()
    }

    fn mirrored(pieces: &[(f64, f64)]) -> AmbiguityModel {
        let j = |p: f64| vec![p, 1.0 - p, 1.0 - p, p];
        AmbiguityModel::new(vec![StageAmbiguity::SRect {
            marginals: vec![UnionOfPolytopes {
                pieces: pieces.iter().map(|&(a, b)| Polytope::segment(j(a), j(b))).collect(),
            }],
        }])
    }

    #[test]
    fn split_segments_open_a_gap() {
        let inst = two_stage(1.0, 0.0);
        let r = diagnose(&inst, &mirrored(&[(0.0, 0.25), (0.75, 1.0)])).unwrap();
        assert!((r.primal_values.get(0, 0) - 0.5).abs() < 1e-9);
        assert!((r.dual_values.get(0, 0) - 0.25).abs() < 1e-9);
        assert!(!r.per_state_saddle[0][0]);
        assert!(!r.convex_marginal[0][0].convex);
        assert!(r.implications_hold());
    }

    #[test]
    fn full_segment_is_randomized() {
        let inst = two_stage(1.0, 0.0);
        let r = diagnose(&inst, &mirrored(&[(0.0, 1.0)])).unwrap();
        assert!(r.gap.abs() < 1e-9);
        assert!((r.controller_policy.row(0, 0)[0] - 0.5).abs() < 1e-9);
        assert_eq!(r.assumption.verdict, Verdict::Fails);
        assert!(r.deterministic_policy.is_none());
        assert!(r.convex_marginal[0][0].convex);
    }

    #[test]
    fn policy_evaluation_picks_worst_endpoint() {
        let inst = two_stage(1.0, 0.0);
        let m = mirrored(&[(0.0, 1.0)]);
        let left = RandomizedPolicy::deterministic(&inst, &[vec![0]]);
        let v = evaluate_policy_robust(&inst, &m, &left).unwrap();
        assert!((v.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_matches_nominal() {
        let inst = two_stage(1.0, 0.25);
        let k = StageKernel::from_rows(vec![vec![vec![0.3, 0.7], vec![0.6, 0.4]]]);
        let m = AmbiguityModel::new(vec![StageAmbiguity::Singleton { kernel: k.clone() }]);
        let (nom, _) = solve_nominal(&inst, &Kernel::new(&inst, vec![k]).unwrap()).unwrap();
        let r = diagnose(&inst, &m).unwrap();
        assert!(r.primal_values.max_abs_diff(&nom) < 1e-12);
        assert!(r.dual_values.max_abs_diff(&nom) < 1e-12);
        assert_eq!(r.gap, 0.0);
        assert!(r.per_state_saddle.iter().flatten().all(|&b| b));
    }

    #[test]
    fn r_part_requires_next_state_free_costs() {
        let inst = MdpBuilder::new(&[vec!["sA"], vec!["sB", "sC"]])
            .actions(0, "sA", &["a"])
            .cost(0, "sA", "a", "sB", 1.0)
            .build()
            .unwrap();
        let m = AmbiguityModel::new(vec![StageAmbiguity::RRect {
            factors: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            coefficients: vec![vec![vec![1.0]]],
        }]);
        assert!(matches!(
            RobustProblem::new(&inst, &m),
            Err(Error::NextStateDependentCost { stage: 1 })
        ));
    }

    #[test]
    fn separable_stage_is_deterministic() {
        let inst = two_stage(1.0, 0.0);
        let m = AmbiguityModel::new(vec![StageAmbiguity::SaRect {
            polytopes: vec![vec![
                Polytope::segment(vec![0.2, 0.8], vec![0.4, 0.6]),
                Polytope::segment(vec![0.1, 0.9], vec![0.5, 0.5]),
            ]],
        }]);
        let r = diagnose(&inst, &m).unwrap();
        assert!((r.primal_values.get(0, 0) - 0.4).abs() < 1e-12);
        assert_eq!(r.assumption.verdict, Verdict::Uniform);
        assert_eq!(r.controller_policy.row(0, 0), &[1.0, 0.0]);
    }
}

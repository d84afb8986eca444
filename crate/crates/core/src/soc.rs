//! Kernel ambiguity induced by a noise-driven state equation `s' = F_t(s, a, ξ)`.
//!
//! A noise law `Q` on the finite set `Ξ_t` pushes forward to the kernel
//! `P^Q(s'|s, a) = Q{ξ : F_t(s, a, ξ) = s'}`. The map is linear, so the images
//! of the vertices of the noise set generate the induced kernel set, which is
//! one global polytope coupling every `(s, a)` through the shared `Q`.

use serde::{Deserialize, Serialize};

use crate::ambiguity::{push_unique, rectangularity_probe, AmbiguityModel, Rectangularity, StageAmbiguity};
use crate::error::{Error, Result, Violation, DEFAULT_CAP};
use crate::geometry::Polytope;
use crate::mdp::{is_distribution, MdpInstance, RandomizedPolicy, StageKernel, ValueTable, PROB_TOL};
use crate::robust::{run_dual, run_primal, GameSource, LocalGame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocSpec {
    /// Noise outcomes `Ξ_t` per stage.
    pub noise: Vec<Vec<String>>,
    /// `transitions[t][s][a][ξ]` names the next state.
    pub transitions: Vec<Vec<Vec<Vec<String>>>>,
    /// `costs[t][s][a][ξ]`.
    pub costs: Vec<Vec<Vec<Vec<f64>>>>,
    /// Ambiguity set of noise laws per stage.
    pub noise_ambiguity: Vec<Polytope>,
}

/// The spec with names resolved against an instance skeleton.
#[derive(Debug, Clone)]
struct Resolved {
    /// `next[t][s][a][ξ]`.
    next: Vec<Vec<Vec<Vec<usize>>>>,
    /// Distinct vertices of each noise set.
    laws: Vec<Vec<Vec<f64>>>,
}

impl SocSpec {
    pub fn violations(&self, inst: &MdpInstance) -> Vec<Violation> {
        let mut out = Vec::new();
        let h = inst.horizon();
        if self.noise.len() != h
            || self.transitions.len() != h
            || self.costs.len() != h
            || self.noise_ambiguity.len() != h
        {
            out.push(Violation::new(format!("noise model must describe all {h} stages")));
            return out;
        }
        for t in 0..h {
            let m = self.noise[t].len();
            if m == 0 {
                out.push(Violation::new("noise support is empty").at_stage(t));
                continue;
            }
            if self.transitions[t].len() != inst.num_states(t) || self.costs[t].len() != inst.num_states(t) {
                out.push(Violation::new("transition or cost table has the wrong number of states").at_stage(t));
                continue;
            }
            for s in 0..inst.num_states(t) {
                let name = inst.state_name(t, s);
                let (tr, co) = (&self.transitions[t][s], &self.costs[t][s]);
                if tr.len() != inst.num_actions(t, s) || co.len() != inst.num_actions(t, s) {
                    out.push(Violation::new("wrong number of actions").at_stage(t).at_state(name));
                    continue;
                }
                for a in 0..tr.len() {
                    let action = inst.action_name(t, s, a);
                    if tr[a].len() != m || co[a].len() != m {
                        out.push(
                            Violation::new(format!("expected {m} noise outcomes"))
                                .at_stage(t)
                                .at_state(name)
                                .at_action(action),
                        );
                        continue;
                    }
                    for target in &tr[a] {
                        if inst.state_index(t + 1, target).is_none() {
                            out.push(
                                Violation::new(format!("next state '{target}' is not declared"))
                                    .at_stage(t)
                                    .at_state(name)
                                    .at_action(action),
                            );
                        }
                    }
                    if co[a].iter().any(|c| !c.is_finite()) {
                        out.push(Violation::new("cost is not finite").at_stage(t).at_state(name).at_action(action));
                    }
                }
            }
            let q = &self.noise_ambiguity[t];
            let pv = q.violations();
            if !pv.is_empty() {
                out.extend(pv.into_iter().map(|v| Violation { stage: Some(t + 1), ..v }));
            } else if q.dim() != m {
                out.push(Violation::new(format!("noise set has dimension {}, expected {m}", q.dim())).at_stage(t));
            } else {
                match q.vertices(DEFAULT_CAP) {
                    Ok(vs) => {
                        if vs.iter().any(|v| !is_distribution(v, PROB_TOL)) {
                            out.push(Violation::new("noise set leaves the probability simplex").at_stage(t));
                        }
                    }
                    Err(e) => out.push(Violation::new(e.to_string()).at_stage(t)),
                }
            }
        }
        out
    }

    fn resolve(&self, inst: &MdpInstance) -> Result<Resolved> {
        let v = inst.validate();
        if !v.is_empty() {
            return Err(Error::InvalidInstance(v));
        }
        let v = self.violations(inst);
        if !v.is_empty() {
            return Err(Error::InvalidModel(v));
        }
        let next = self
            .transitions
            .iter()
            .enumerate()
            .map(|(t, per_s)| {
                per_s
                    .iter()
                    .map(|per_a| {
                        per_a
                            .iter()
                            .map(|xs| xs.iter().map(|n| inst.state_index(t + 1, n).unwrap()).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut laws = Vec::new();
        for q in &self.noise_ambiguity {
            let mut l = Vec::new();
            for mut v in q.vertices(DEFAULT_CAP)? {
                crate::mdp::normalize_distribution(&mut v).map_err(|m| Error::InvalidModel(vec![Violation::new(m)]))?;
                push_unique(&mut l, v);
            }
            laws.push(l);
        }
        Ok(Resolved { next, laws })
    }
}

/// `P^Q` at stage `t`.
pub fn pushforward(inst: &MdpInstance, spec: &SocSpec, t: usize, q: &[f64]) -> Result<StageKernel> {
    let r = spec.resolve(inst)?;
    Ok(pushforward_resolved(inst, &r, t, q))
}

fn pushforward_resolved(inst: &MdpInstance, r: &Resolved, t: usize, q: &[f64]) -> StageKernel {
    let n = inst.num_states(t + 1);
    StageKernel::from_rows(
        r.next[t]
            .iter()
            .map(|per_a| {
                per_a
                    .iter()
                    .map(|targets| {
                        let mut row = vec![0.0; n];
                        for (x, &j) in targets.iter().enumerate() {
                            row[j] += q[x];
                        }
                        row
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Stage costs `c_t(s, a, s')` when every noise outcome reaching `s'` carries the same cost.
fn aggregate_costs(inst: &MdpInstance, spec: &SocSpec, r: &Resolved) -> std::result::Result<Vec<Vec<Vec<Vec<f64>>>>, String> {
    let mut out = Vec::new();
    for t in 0..inst.horizon() {
        let n = inst.num_states(t + 1);
        let mut stage = Vec::new();
        for s in 0..inst.num_states(t) {
            let mut per_a = Vec::new();
            for a in 0..inst.num_actions(t, s) {
                let mut row: Vec<Option<f64>> = vec![None; n];
                for (x, &j) in r.next[t][s][a].iter().enumerate() {
                    let c = spec.costs[t][s][a][x];
                    match row[j] {
                        Some(prev) if prev != c => {
                            return Err(format!(
                                "stage {}, state {}, action {}: outcomes reaching {} carry costs {prev} and {c}",
                                t + 1,
                                inst.state_name(t, s),
                                inst.action_name(t, s, a),
                                inst.state_name(t + 1, j)
                            ))
                        }
                        _ => row[j] = Some(c),
                    }
                }
                per_a.push(row.into_iter().map(|c| c.unwrap_or(0.0)).collect());
            }
            stage.push(per_a);
        }
        out.push(stage);
    }
    Ok(out)
}

/// Induced instance (costs pushed through the state equation) and kernel set.
///
/// Refused with [`Error::CostConflict`] when two outcomes lead to the same next
/// state with different costs; [`solve_soc`] handles that case in noise space.
pub fn build_soc_ambiguity(skeleton: &MdpInstance, spec: &SocSpec) -> Result<(MdpInstance, AmbiguityModel)> {
    let r = spec.resolve(skeleton)?;
    let costs = aggregate_costs(skeleton, spec, &r).map_err(Error::CostConflict)?;
    let mut inst = skeleton.clone();
    for (t, c) in costs.into_iter().enumerate() {
        inst = inst.with_stage_costs(t, c);
    }
    let stages = (0..inst.horizon())
        .map(|t| {
            let kernels: Vec<StageKernel> = r.laws[t].iter().map(|q| pushforward_resolved(&inst, &r, t, q)).collect();
            if kernels.len() == 1 {
                StageAmbiguity::Singleton {
                    kernel: kernels.into_iter().next().unwrap(),
                }
            } else {
                StageAmbiguity::Finite { kernels }
            }
        })
        .collect();
    Ok((inst, AmbiguityModel::new(stages)))
}

struct NoiseGame<'a> {
    inst: &'a MdpInstance,
    spec: &'a SocSpec,
    r: Resolved,
}

impl GameSource for NoiseGame<'_> {
    fn local(&self, t: usize, s: usize, next: &[f64]) -> Result<LocalGame> {
        let laws = &self.r.laws[t];
        let payoffs = laws
            .iter()
            .map(|q| {
                (0..self.inst.num_actions(t, s))
                    .map(|a| {
                        q.iter()
                            .enumerate()
                            .map(|(x, p)| p * (self.spec.costs[t][s][a][x] + next[self.r.next[t][s][a][x]]))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(LocalGame::Union {
            points: vec![laws.clone()],
            payoffs: vec![payoffs],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocSolution {
    pub primal_values: ValueTable,
    pub dual_values: ValueTable,
    pub policy: RandomizedPolicy,
    pub deterministic: Option<RandomizedPolicy>,
    /// Nature's worst noise law per `(t, s)` against the optimal policy.
    pub worst_noise: Vec<Vec<Vec<f64>>>,
    pub gap: f64,
    /// Whether the costs could be pushed through to an induced instance.
    pub reducible: bool,
}

/// Min over action weights, max over noise laws, with `ξ`-resolved costs.
pub fn solve_soc(skeleton: &MdpInstance, spec: &SocSpec) -> Result<SocSolution> {
    let r = spec.resolve(skeleton)?;
    let reducible = aggregate_costs(skeleton, spec, &r).is_ok();
    let game = NoiseGame {
        inst: skeleton,
        spec,
        r,
    };
    let p = run_primal(skeleton, &game)?;
    let d = run_dual(skeleton, &game)?;
    let s1 = skeleton.initial_state();
    let pure: Option<Vec<Vec<usize>>> = p
        .locals
        .iter()
        .map(|l| l.iter().map(|x| x.pure).collect::<Option<Vec<_>>>())
        .collect();
    Ok(SocSolution {
        gap: p.values.get(0, s1) - d.values.get(0, s1),
        policy: RandomizedPolicy::from_rows_unchecked(
            p.locals.iter().map(|l| l.iter().map(|x| x.minimizer.clone()).collect()).collect(),
        ),
        deterministic: pure.map(|c| RandomizedPolicy::deterministic(skeleton, &c)),
        worst_noise: p.locals.iter().map(|l| l.iter().map(|x| x.primal_point.clone()).collect()).collect(),
        primal_values: p.values,
        dual_values: d.values,
        reducible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SocProbeStatus {
    /// The noise set is a single law, so the induced set is a single kernel.
    Singleton,
    NotRectangular,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocStageProbe {
    pub stage: usize,
    pub status: SocProbeStatus,
    pub kind: Option<Rectangularity>,
    /// A product of marginal vertices that no noise law produces.
    pub witness: Option<StageKernel>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocProbeReport {
    pub stages: Vec<SocStageProbe>,
}

impl SocProbeReport {
    pub fn any_not_rectangular(&self) -> bool {
        self.stages.iter().any(|s| s.status == SocProbeStatus::NotRectangular)
    }
}

/// With pairwise distinct images `F_t(s, a, ξ)` and more than one noise law,
/// rectangularity fails; this exhibits an LP-verified witness.
pub fn soc_rectangularity_probe(skeleton: &MdpInstance, spec: &SocSpec) -> Result<SocProbeReport> {
    let r = spec.resolve(skeleton)?;
    let mut stages = Vec::new();
    for t in 0..skeleton.horizon() {
        let stage = t + 1;
        if r.laws[t].len() == 1 {
            stages.push(SocStageProbe {
                stage,
                status: SocProbeStatus::Singleton,
                kind: None,
                witness: None,
                note: "single noise law; the induced set is one kernel".into(),
            });
            continue;
        }
        let images: Vec<usize> = r.next[t].iter().flatten().flatten().copied().collect();
        let mut sorted = images.clone();
        sorted.sort_unstable();
        sorted.dedup();
        let inconclusive = |note: &str| SocStageProbe {
            stage,
            status: SocProbeStatus::Inconclusive,
            kind: None,
            witness: None,
            note: note.into(),
        };
        if sorted.len() != images.len() {
            stages.push(inconclusive("state-equation images collide"));
            continue;
        }
        let kind = if skeleton.num_states(t) >= 2 {
            Rectangularity::State
        } else if skeleton.num_actions(t, 0) >= 2 {
            Rectangularity::StateAction
        } else {
            stages.push(inconclusive("a single state with a single action is always rectangular"));
            continue;
        };
        let kernels = r.laws[t].iter().map(|q| pushforward_resolved(skeleton, &r, t, q)).collect();
        let probe = rectangularity_probe(&StageAmbiguity::Finite { kernels }, skeleton, t, kind, DEFAULT_CAP)?;
        stages.push(match probe.witness {
            Some(w) => SocStageProbe {
                stage,
                status: SocProbeStatus::NotRectangular,
                kind: Some(kind),
                witness: Some(w),
                note: format!("{} products of marginal vertices tested", probe.combinations_tested),
            },
            None => inconclusive("every product of marginal vertices is induced by some noise law"),
        });
    }
    Ok(SocProbeReport { stages })
}

/// Largest difference between noise-space and kernel-space primal values, when the reduction applies.
pub fn reduction_agrees(skeleton: &MdpInstance, spec: &SocSpec) -> Result<Option<f64>> {
    let sol = solve_soc(skeleton, spec)?;
    if !sol.reducible {
        return Ok(None);
    }
    let (inst, model) = build_soc_ambiguity(skeleton, spec)?;
    let p = crate::robust::solve_primal(&inst, &model)?;
    Ok(Some(p.values.max_abs_diff(&sol.primal_values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;

    fn skeleton() -> MdpInstance {
        MdpBuilder::new(&[vec!["x", "y"], vec!["n1", "n2", "n3", "n4", "n5", "n6"]])
            .actions(0, "x", &["a", "b"])
            .actions(0, "y", &["a"])
            .terminal("n1", 1.0)
            .terminal("n4", 1.0)
            .initial("x")
            .build()
            .unwrap()
    }

    fn spec(q: Polytope) -> SocSpec {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        SocSpec {
            noise: vec![s(&["lo", "hi"])],
            transitions: vec![vec![vec![s(&["n1", "n2"]), s(&["n3", "n4"])], vec![s(&["n5", "n6"])]]],
            costs: vec![vec![vec![vec![0.0; 2]; 2], vec![vec![0.0; 2]]]],
            noise_ambiguity: vec![q],
        }
    }

    #[test]
    fn coupled_actions_need_randomization() {
        let sp = spec(Polytope::segment(vec![0.2, 0.8], vec![0.6, 0.4]));
        let sol = solve_soc(&skeleton(), &sp).unwrap();
        assert!((sol.primal_values.get(0, 0) - 0.5).abs() < 1e-9);
        assert!(sol.gap.abs() < 1e-9);
        assert!((sol.policy.row(0, 0)[0] - 0.5).abs() < 1e-9);
        assert!(reduction_agrees(&skeleton(), &sp).unwrap().unwrap() < 1e-9);
    }

    #[test]
    fn pushforward_is_linear() {
        let sp = spec(Polytope::segment(vec![0.2, 0.8], vec![0.6, 0.4]));
        let inst = skeleton();
        let a = pushforward(&inst, &sp, 0, &[0.2, 0.8]).unwrap();
        let b = pushforward(&inst, &sp, 0, &[0.6, 0.4]).unwrap();
        let mid = pushforward(&inst, &sp, 0, &[0.3, 0.7]).unwrap();
        let blend = a.blend(0.75, &b);
        let diff = mid
            .rows()
            .iter()
            .flatten()
            .flatten()
            .zip(blend.rows().iter().flatten().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-15);
    }

    #[test]
    fn probe_finds_witness() {
        let sp = spec(Polytope::segment(vec![0.2, 0.8], vec![0.6, 0.4]));
        let r = soc_rectangularity_probe(&skeleton(), &sp).unwrap();
        assert!(r.any_not_rectangular());
        let single = spec(Polytope::point(vec![0.5, 0.5]));
        let r = soc_rectangularity_probe(&skeleton(), &single).unwrap();
        assert_eq!(r.stages[0].status, SocProbeStatus::Singleton);
        let (_, model) = build_soc_ambiguity(&skeleton(), &single).unwrap();
        assert!(matches!(model.stages[0], StageAmbiguity::Singleton { .. }));
    }

    #[test]
    fn cost_conflict_falls_back_to_noise_space() {
        let mut sp = spec(Polytope::segment(vec![0.2, 0.8], vec![0.6, 0.4]));
        sp.transitions[0][1][0] = vec!["n5".into(), "n5".into()];
        sp.costs[0][1][0] = vec![1.0, 2.0];
        assert!(matches!(build_soc_ambiguity(&skeleton(), &sp), Err(Error::CostConflict(_))));
        let sol = solve_soc(&skeleton(), &sp).unwrap();
        assert!(!sol.reducible);
        // worst law (0.2, 0.8): 0.2 * 1 + 0.8 * 2
        assert!((sol.primal_values.get(0, 1) - 1.8).abs() < 1e-9);
    }
}

//! Brute-force oracles for the static formulation and for history-dependent
//! controllers on tiny instances.
//!
//! In the static problem nature fixes one stage law per stage before the
//! process starts. For a fixed Markov policy the expected total cost is
//! multilinear in the stage laws (each stage enters the path probabilities
//! exactly once), so its supremum over a product of polytopes is attained at
//! a combination of vertices. The primal oracle therefore enumerates extreme
//! laws exactly and only grids the controller's rows; the error from the
//! policy grid is bounded by `(T + 1) · max|c|` times the grid spacing.
//!
//! The inner minimum of the static dual is concave in the laws, so vertices
//! do not suffice; the dual oracle samples convex-weight grids inside every
//! convex component and returns the best sample, a lower bound.

use serde::{Deserialize, Serialize};

use crate::ambiguity::{
    enumerate_extreme_kernels, for_each_product, marginalize_statewise, push_unique, AmbiguityModel,
    StageAmbiguity,
};
use crate::error::{Error, Result, DEFAULT_CAP};
use crate::mdp::{MdpInstance, RandomizedPolicy, StageKernel, ValueTable};
use crate::robust::{RobustProblem, Verdict, GAP_TOL, VALUE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Denominator of the simplex grid for controller rows.
    pub policy_grid: usize,
    /// Denominator of the convex-weight grid for dual sampling.
    pub kernel_grid: usize,
    /// Largest number of policy/law combinations any oracle may visit.
    pub max_enumeration: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            policy_grid: 20,
            kernel_grid: 8,
            max_enumeration: 50_000_000,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.policy_grid == 0 || self.kernel_grid == 0 || self.max_enumeration == 0 {
            return Err(Error::InvalidModel(vec![crate::Violation::new(
                "oracle resolutions and enumeration cap must be at least 1",
            )]));
        }
        Ok(())
    }

    fn cap(&self) -> u128 {
        self.max_enumeration as u128
    }
}

/// Transition law and stage costs that nature commits to for one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageLaw {
    pub kernel: StageKernel,
    /// `costs[s][a][s']`.
    pub costs: Vec<Vec<Vec<f64>>>,
}

type Assemble<'a> = Box<dyn Fn(&[Vec<f64>]) -> StageLaw + 'a>;

/// Independent convex components whose choices assemble into a stage law.
pub(crate) struct LawStructure<'a> {
    /// `[component][piece][vertex]` flat points.
    pub components: Vec<Vec<Vec<Vec<f64>>>>,
    pub assemble: Assemble<'a>,
}

fn count(radices: &[usize]) -> u128 {
    radices.iter().fold(1u128, |a, &r| a.saturating_mul(r as u128))
}

fn cap_error(what: &str, count: u128, cap: u128) -> Error {
    Error::CapExceeded {
        what: what.to_string(),
        count,
        cap,
    }
}

/// All points `Σ λ_i v_i` with `λ` on the grid of denominator `n`.
fn grid_combinations(vertices: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let d = vertices[0].len();
    simplex_grid(vertices.len(), n)
        .into_iter()
        .map(|w| {
            let mut x = vec![0.0; d];
            for (l, v) in w.iter().zip(vertices) {
                if *l != 0.0 {
                    for (xi, vi) in x.iter_mut().zip(v) {
                        *xi += l * vi;
                    }
                }
            }
            x
        })
        .collect()
}

/// Points of the probability simplex in `R^k` with coordinates in `{0, 1/n, …, 1}`.
pub fn simplex_grid(k: usize, n: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == k {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / n as f64).collect());
            cur.pop();
            return;
        }
        for c in (0..=left).rev() {
            cur.push(c);
            rec(k, left - c, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    rec(k, n, n, &mut Vec::new(), &mut out);
    out
}

/// Number of points returned by [`simplex_grid`].
fn simplex_grid_len(k: usize, n: usize) -> u128 {
    // C(n + k − 1, k − 1)
    let (top, r) = ((n + k - 1) as u128, (k - 1) as u128);
    let mut c: u128 = 1;
    for i in 0..r {
        c = c.saturating_mul(top - i) / (i + 1);
    }
    c
}

impl LawStructure<'_> {
    fn product(&self, lists: &[Vec<Vec<f64>>], what: &str, cap: u128) -> Result<Vec<StageLaw>> {
        let radices: Vec<usize> = lists.iter().map(|l| l.len()).collect();
        let n = count(&radices);
        if n > cap {
            return Err(cap_error(what, n, cap));
        }
        let mut out = Vec::new();
        for_each_product(&radices, |idx| {
            let choice: Vec<Vec<f64>> = idx.iter().enumerate().map(|(c, &i)| lists[c][i].clone()).collect();
            out.push((self.assemble)(&choice));
        });
        Ok(out)
    }

    pub fn extremes(&self, cap: u128) -> Result<Vec<StageLaw>> {
        let lists: Vec<Vec<Vec<f64>>> = self
            .components
            .iter()
            .map(|pieces| {
                let mut l = Vec::new();
                for v in pieces.iter().flatten() {
                    push_unique(&mut l, v.clone());
                }
                l
            })
            .collect();
        self.product(&lists, "extreme stage laws", cap)
    }

    pub fn samples(&self, n: usize, cap: u128) -> Result<Vec<StageLaw>> {
        let mut lists = Vec::new();
        for pieces in &self.components {
            let total: u128 = pieces.iter().map(|p| simplex_grid_len(p.len(), n)).sum();
            if total > cap {
                return Err(cap_error("sampled stage-law components", total, cap));
            }
            let mut l = Vec::new();
            for p in pieces {
                for x in grid_combinations(p, n) {
                    push_unique(&mut l, x);
                }
            }
            lists.push(l);
        }
        self.product(&lists, "sampled stage laws", cap)
    }
}

/// What the oracles need to know about an ambiguity description.
pub(crate) trait LawModel {
    fn instance(&self) -> &MdpInstance;
    /// Next states that some law in the set can reach from `s` at stage `t`.
    fn support(&self, t: usize, s: usize) -> Result<Vec<bool>>;
    fn structure(&self, t: usize, reach: &[bool]) -> Result<LawStructure<'_>>;
}

pub(crate) fn reachable(m: &dyn LawModel) -> Result<Vec<Vec<bool>>> {
    let inst = m.instance();
    let mut reach = vec![vec![false; inst.num_states(0)]];
    reach[0][inst.initial_state()] = true;
    for t in 0..inst.horizon() {
        let mut next = vec![false; inst.num_states(t + 1)];
        for s in 0..inst.num_states(t) {
            if reach[t][s] {
                for (j, b) in m.support(t, s)?.into_iter().enumerate() {
                    next[j] |= b;
                }
            }
        }
        reach.push(next);
    }
    Ok(reach)
}

struct KernelLaws<'a> {
    inst: &'a MdpInstance,
    model: &'a AmbiguityModel,
    cap: u128,
}

fn unflatten(v: &[f64], inst: &MdpInstance, t: usize) -> StageKernel {
    let n = inst.num_states(t + 1);
    let mut k = 0;
    StageKernel::from_rows(
        (0..inst.num_states(t))
            .map(|s| {
                (0..inst.num_actions(t, s))
                    .map(|_| {
                        let r = v[k..k + n].to_vec();
                        k += n;
                        r
                    })
                    .collect()
            })
            .collect(),
    )
}

fn flatten(k: &StageKernel) -> Vec<f64> {
    k.rows().iter().flatten().flatten().copied().collect()
}

fn r_mix(
    coefficients: &[Vec<Vec<f64>>],
    s: usize,
    ws: &[Vec<f64>],
    n: usize,
) -> Vec<f64> {
    coefficients[s]
        .iter()
        .flat_map(|kappa| {
            let mut row = vec![0.0; n];
            for (k, w) in kappa.iter().zip(ws) {
                if *k != 0.0 {
                    for (r, x) in row.iter_mut().zip(w) {
                        *r += k * x;
                    }
                }
            }
            row
        })
        .collect()
}

impl LawModel for KernelLaws<'_> {
    fn instance(&self) -> &MdpInstance {
        self.inst
    }

    fn support(&self, t: usize, s: usize) -> Result<Vec<bool>> {
        let u = marginalize_statewise(self.model.stage(t), self.inst, t, s, self.cap)?;
        let n = self.inst.num_states(t + 1);
        let mut out = vec![false; n];
        for v in u.piece_vertices(self.cap)?.iter().flatten() {
            for (i, p) in v.iter().enumerate() {
                if *p > 0.0 {
                    out[i % n] = true;
                }
            }
        }
        Ok(out)
    }

    fn structure(&self, t: usize, reach: &[bool]) -> Result<LawStructure<'_>> {
        let inst = self.inst;
        let n = inst.num_states(t + 1);
        let n_s = inst.num_states(t);
        let costs = inst.stage_costs(t).to_vec();
        let cap = self.cap;
        let reach: Vec<bool> = reach.to_vec();
        let s_part_components = |marginals: &[crate::geometry::UnionOfPolytopes]| -> Result<(Vec<Vec<Vec<Vec<f64>>>>, Vec<Vec<f64>>)> {
            let mut comps = Vec::new();
            let mut fixed = Vec::new();
            for (s, u) in marginals.iter().enumerate() {
                let lists = u.piece_vertices(cap)?;
                fixed.push(lists[0][0].clone());
                if reach[s] {
                    comps.push(lists);
                }
            }
            Ok((comps, fixed))
        };
        let reach_idx: Vec<usize> = (0..n_s).filter(|&s| reach[s]).collect();
        Ok(match self.model.stage(t) {
            StageAmbiguity::Singleton { kernel } => {
                let k = kernel.clone();
                LawStructure {
                    components: vec![],
                    assemble: Box::new(move |_| StageLaw {
                        kernel: k.clone(),
                        costs: costs.clone(),
                    }),
                }
            }
            StageAmbiguity::Finite { kernels } => LawStructure {
                components: vec![vec![kernels.iter().map(flatten).collect()]],
                assemble: Box::new(move |c| StageLaw {
                    kernel: unflatten(&c[0], inst, t),
                    costs: costs.clone(),
                }),
            },
            StageAmbiguity::SaRect { polytopes } => {
                let verts: Vec<Vec<Vec<Vec<f64>>>> = polytopes
                    .iter()
                    .map(|per_a| per_a.iter().map(|p| p.vertices(cap)).collect::<Result<Vec<_>>>())
                    .collect::<Result<_>>()?;
                let mut comps = Vec::new();
                for &s in &reach_idx {
                    for v in &verts[s] {
                        comps.push(vec![v.clone()]);
                    }
                }
                LawStructure {
                    components: comps,
                    assemble: Box::new(move |c| {
                        let mut k = 0;
                        let rows = (0..n_s)
                            .map(|s| {
                                (0..verts[s].len())
                                    .map(|a| {
                                        if reach[s] {
                                            k += 1;
                                            c[k - 1].clone()
                                        } else {
                                            verts[s][a][0].clone()
                                        }
                                    })
                                    .collect()
                            })
                            .collect();
                        StageLaw {
                            kernel: StageKernel::from_rows(rows),
                            costs: costs.clone(),
                        }
                    }),
                }
            }
            StageAmbiguity::SRect { marginals } => {
                let (comps, fixed) = s_part_components(marginals)?;
                LawStructure {
                    components: comps,
                    assemble: Box::new(move |c| {
                        let mut k = 0;
                        let rows = (0..n_s)
                            .map(|s| {
                                let v = if reach[s] {
                                    k += 1;
                                    &c[k - 1]
                                } else {
                                    &fixed[s]
                                };
                                v.chunks(n).map(|r| r.to_vec()).collect()
                            })
                            .collect();
                        StageLaw {
                            kernel: StageKernel::from_rows(rows),
                            costs: costs.clone(),
                        }
                    }),
                }
            }
            StageAmbiguity::RRect {
                factors,
                coefficients,
            } => {
                let coefficients = coefficients.clone();
                LawStructure {
                    components: factors.iter().map(|w| vec![w.clone()]).collect(),
                    assemble: Box::new(move |c| {
                        let rows = (0..n_s)
                            .map(|s| r_mix(&coefficients, s, c, n).chunks(n).map(|r| r.to_vec()).collect())
                            .collect();
                        StageLaw {
                            kernel: StageKernel::from_rows(rows),
                            costs: costs.clone(),
                        }
                    }),
                }
            }
            StageAmbiguity::SrRect {
                beta,
                s_part,
                r_part,
            } => {
                let (mut comps, fixed) = s_part_components(s_part)?;
                let n_s_comps = comps.len();
                comps.extend(r_part.factors.iter().map(|w| vec![w.clone()]));
                let coefficients = r_part.coefficients.clone();
                let beta = *beta;
                LawStructure {
                    components: comps,
                    assemble: Box::new(move |c| {
                        let (sc, rc) = c.split_at(n_s_comps);
                        let mut k = 0;
                        let rows = (0..n_s)
                            .map(|s| {
                                let v = if reach[s] {
                                    k += 1;
                                    &sc[k - 1]
                                } else {
                                    &fixed[s]
                                };
                                let r = r_mix(&coefficients, s, rc, n);
                                let b: Vec<f64> = v.iter().zip(&r).map(|(x, y)| beta * x + (1.0 - beta) * y).collect();
                                b.chunks(n).map(|x| x.to_vec()).collect()
                            })
                            .collect();
                        StageLaw {
                            kernel: StageKernel::from_rows(rows),
                            costs: costs.clone(),
                        }
                    }),
                }
            }
        })
    }
}

/// Expected total cost of a Markov policy under a fixed law per stage.
pub fn law_policy_value(inst: &MdpInstance, policy: &RandomizedPolicy, laws: &[&StageLaw]) -> ValueTable {
    let mut v = ValueTable::with_terminal(inst);
    for t in (0..inst.horizon()).rev() {
        for s in 0..inst.num_states(t) {
            let next = v.stage(t + 1);
            let x: f64 = policy
                .row(t, s)
                .iter()
                .enumerate()
                .map(|(a, p)| {
                    let row = laws[t].kernel.row(s, a);
                    let c = &laws[t].costs[s][a];
                    p * (0..row.len()).map(|j| row[j] * (c[j] + next[j])).sum::<f64>()
                })
                .sum();
            v.set(t, s, x);
        }
    }
    v
}

/// Optimal nominal value from the initial state under fixed stage laws.
pub(crate) fn law_nominal_value(inst: &MdpInstance, laws: &[&StageLaw]) -> f64 {
    let mut next = inst.terminal_cost().to_vec();
    for t in (0..inst.horizon()).rev() {
        next = (0..inst.num_states(t))
            .map(|s| {
                (0..inst.num_actions(t, s))
                    .map(|a| {
                        let row = laws[t].kernel.row(s, a);
                        let c = &laws[t].costs[s][a];
                        (0..row.len()).map(|j| row[j] * (c[j] + next[j])).sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
    }
    next[inst.initial_state()]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticPrimal {
    pub value: f64,
    pub policy: RandomizedPolicy,
    /// Worst extreme law per stage against `policy`.
    pub worst_laws: Vec<StageLaw>,
    /// `(T + 1) · max|c|`.
    pub lipschitz: f64,
    /// `lipschitz / policy_grid`.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticDual {
    /// Best sampled value; a lower bound on the static dual.
    pub lower_bound: f64,
    pub best_laws: Vec<StageLaw>,
    pub samples: u128,
}

/// A continuation vector with the law indices (stages `t..T`) that produced it.
#[derive(Clone)]
struct Tagged {
    w: Vec<f64>,
    laws: Vec<usize>,
}

fn prune(mut set: Vec<Tagged>, mask: &[bool]) -> Vec<Tagged> {
    let dominated = |a: &Tagged, b: &Tagged| {
        // b ≥ a on every reachable coordinate
        a.w.iter()
            .zip(&b.w)
            .zip(mask)
            .all(|((x, y), &m)| !m || *y >= *x - 1e-15)
    };
    let mut keep: Vec<Tagged> = Vec::new();
    set.sort_by(|a, b| {
        let sa: f64 = a.w.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x).sum();
        let sb: f64 = b.w.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x).sum();
        sb.total_cmp(&sa)
    });
    for x in set {
        if !keep.iter().any(|k| dominated(&x, k)) {
            keep.push(x);
        }
    }
    keep
}

pub(crate) fn static_primal_generic(m: &dyn LawModel, cfg: &OracleConfig) -> Result<StaticPrimal> {
    cfg.validate()?;
    let inst = m.instance();
    let horizon = inst.horizon();
    let cap = cfg.cap();
    let reach = reachable(m)?;
    let structures = (0..horizon)
        .map(|t| m.structure(t, &reach[t]))
        .collect::<Result<Vec<_>>>()?;
    let laws = structures
        .iter()
        .map(|s| s.extremes(cap))
        .collect::<Result<Vec<_>>>()?;

    // Grid rows for reachable states; unreachable states play their first action.
    let grids: Vec<Vec<Vec<Vec<f64>>>> = (0..horizon)
        .map(|t| {
            (0..inst.num_states(t))
                .map(|s| {
                    if reach[t][s] {
                        simplex_grid(inst.num_actions(t, s), cfg.policy_grid)
                    } else {
                        let mut r = vec![0.0; inst.num_actions(t, s)];
                        r[0] = 1.0;
                        vec![r]
                    }
                })
                .collect()
        })
        .collect();
    let mut total: u128 = 1;
    for t in 0..horizon {
        for g in &grids[t] {
            total = total.saturating_mul(g.len() as u128);
        }
        total = total.saturating_mul(laws[t].len() as u128);
    }
    if total > cap {
        return Err(cap_error("static policy and law combinations", total, cap));
    }

    // entries: (policy row indices for stages t..T, continuation set at stage t)
    let terminal = Tagged {
        w: inst.terminal_cost().to_vec(),
        laws: vec![],
    };
    let mut entries: Vec<(Vec<Vec<usize>>, Vec<Tagged>)> = vec![(vec![], vec![terminal])];
    for t in (1..horizon).rev() {
        let radices: Vec<usize> = grids[t].iter().map(|g| g.len()).collect();
        let mut next_entries = Vec::new();
        for (rows_after, set) in &entries {
            for_each_product(&radices, |idx| {
                let mut out = Vec::with_capacity(set.len() * laws[t].len());
                for (li, law) in laws[t].iter().enumerate() {
                    for cont in set {
                        let w: Vec<f64> = (0..inst.num_states(t))
                            .map(|s| {
                                if !reach[t][s] {
                                    return 0.0;
                                }
                                let g = &grids[t][s][idx[s]];
                                g.iter()
                                    .enumerate()
                                    .map(|(a, p)| {
                                        if *p == 0.0 {
                                            return 0.0;
                                        }
                                        let row = law.kernel.row(s, a);
                                        let c = &law.costs[s][a];
                                        p * (0..row.len()).map(|j| row[j] * (c[j] + cont.w[j])).sum::<f64>()
                                    })
                                    .sum()
                            })
                            .collect();
                        let mut tags = vec![li];
                        tags.extend(&cont.laws);
                        out.push(Tagged { w, laws: tags });
                    }
                }
                let mut rows = vec![idx.to_vec()];
                rows.extend(rows_after.iter().cloned());
                next_entries.push((rows, prune(out, &reach[t])));
            });
        }
        entries = next_entries;
    }

    let s1 = inst.initial_state();
    let first_rows = &grids[0][s1];
    let n_a = inst.num_actions(0, s1);
    let mut best: Option<(f64, usize, usize, Tagged)> = None;
    for (ei, (_, set)) in entries.iter().enumerate() {
        // Per-action continuation payoffs for every (law, continuation) pair.
        let mut q: Vec<(Vec<f64>, Tagged)> = Vec::new();
        for (li, law) in laws[0].iter().enumerate() {
            for cont in set {
                let v: Vec<f64> = (0..n_a)
                    .map(|a| {
                        let row = law.kernel.row(s1, a);
                        let c = &law.costs[s1][a];
                        (0..row.len()).map(|j| row[j] * (c[j] + cont.w[j])).sum()
                    })
                    .collect();
                let mut tags = vec![li];
                tags.extend(&cont.laws);
                q.push((v, Tagged { w: vec![], laws: tags }));
            }
        }
        for (gi, g) in first_rows.iter().enumerate() {
            let mut worst = f64::NEG_INFINITY;
            let mut arg = 0;
            for (k, (v, _)) in q.iter().enumerate() {
                let x: f64 = g.iter().zip(v).map(|(p, y)| p * y).sum();
                if x > worst + 1e-15 {
                    worst = x;
                    arg = k;
                }
            }
            if best.as_ref().is_none_or(|b| worst < b.0 - 1e-15) {
                best = Some((worst, ei, gi, q[arg].1.clone()));
            }
        }
    }
    let (value, ei, gi, tags) = best.expect("nonempty grid");
    let rows_after = &entries[ei].0;
    let policy_rows: Vec<Vec<Vec<f64>>> = (0..horizon)
        .map(|t| {
            (0..inst.num_states(t))
                .map(|s| {
                    if t == 0 {
                        if s == s1 {
                            grids[0][s][gi].clone()
                        } else {
                            grids[0][s][0].clone()
                        }
                    } else {
                        grids[t][s][rows_after[t - 1][s]].clone()
                    }
                })
                .collect()
        })
        .collect();
    let lipschitz = (horizon as f64 + 1.0) * inst.max_abs_cost();
    Ok(StaticPrimal {
        value,
        policy: RandomizedPolicy::from_rows_unchecked(policy_rows),
        worst_laws: tags.laws.iter().enumerate().map(|(t, &l)| laws[t][l].clone()).collect(),
        lipschitz,
        tolerance: lipschitz / cfg.policy_grid as f64,
    })
}

pub(crate) fn static_dual_generic(m: &dyn LawModel, cfg: &OracleConfig) -> Result<StaticDual> {
    cfg.validate()?;
    let inst = m.instance();
    let cap = cfg.cap();
    let reach = reachable(m)?;
    let samples = (0..inst.horizon())
        .map(|t| m.structure(t, &reach[t])?.samples(cfg.kernel_grid, cap))
        .collect::<Result<Vec<_>>>()?;
    let radices: Vec<usize> = samples.iter().map(|s| s.len()).collect();
    let total = count(&radices);
    if total > cap {
        return Err(cap_error("static dual law sequences", total, cap));
    }
    let mut best = (f64::NEG_INFINITY, vec![0; radices.len()]);
    for_each_product(&radices, |idx| {
        let seq: Vec<&StageLaw> = idx.iter().enumerate().map(|(t, &i)| &samples[t][i]).collect();
        let v = law_nominal_value(inst, &seq);
        if v > best.0 + 1e-15 {
            best = (v, idx.to_vec());
        }
    });
    Ok(StaticDual {
        lower_bound: best.0,
        best_laws: best.1.iter().enumerate().map(|(t, &i)| samples[t][i].clone()).collect(),
        samples: total,
    })
}

/// Grid minimum over controller policies of the exact worst case over extreme stage laws.
pub fn static_primal(inst: &MdpInstance, model: &AmbiguityModel, cfg: &OracleConfig) -> Result<StaticPrimal> {
    model.validate(inst, DEFAULT_CAP)?;
    static_primal_generic(
        &KernelLaws {
            inst,
            model,
            cap: DEFAULT_CAP,
        },
        cfg,
    )
}

/// Best sampled law sequence against an optimally responding controller.
pub fn static_dual(inst: &MdpInstance, model: &AmbiguityModel, cfg: &OracleConfig) -> Result<StaticDual> {
    model.validate(inst, DEFAULT_CAP)?;
    static_dual_generic(
        &KernelLaws {
            inst,
            model,
            cap: DEFAULT_CAP,
        },
        cfg,
    )
}

/// Worst case of a fixed policy over every sampled law sequence (for multilinearity checks).
pub fn sampled_policy_worst_case(
    inst: &MdpInstance,
    model: &AmbiguityModel,
    policy: &RandomizedPolicy,
    cfg: &OracleConfig,
) -> Result<(f64, f64)> {
    let m = KernelLaws {
        inst,
        model,
        cap: DEFAULT_CAP,
    };
    let reach = reachable(&m)?;
    let s1 = inst.initial_state();
    let eval = |lists: &[Vec<StageLaw>]| {
        let radices: Vec<usize> = lists.iter().map(|l| l.len()).collect();
        let mut best = f64::NEG_INFINITY;
        for_each_product(&radices, |idx| {
            let seq: Vec<&StageLaw> = idx.iter().enumerate().map(|(t, &i)| &lists[t][i]).collect();
            best = best.max(law_policy_value(inst, policy, &seq).get(0, s1));
        });
        best
    };
    let mut vertex = Vec::new();
    let mut sampled = Vec::new();
    for t in 0..inst.horizon() {
        let st = m.structure(t, &reach[t])?;
        vertex.push(st.extremes(cfg.cap())?);
        sampled.push(st.samples(cfg.kernel_grid, cfg.cap())?);
    }
    Ok((eval(&vertex), eval(&sampled)))
}

/// Whether the structure alone guarantees game/static equivalence.
fn structurally_rectangular(model: &AmbiguityModel) -> bool {
    model.stages.iter().all(|s| !matches!(s, StageAmbiguity::Finite { .. }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub game_primal: f64,
    pub game_dual: f64,
    pub static_primal: f64,
    pub static_dual_lower_bound: f64,
    pub grid_tolerance: f64,
    /// Equivalence of the primal problems is guaranteed (by structure or by a uniform worst-case kernel).
    pub certified: bool,
    pub certified_by: String,
    /// `|game_primal − static_primal| ≤ grid_tolerance + 1e-6`, asserted only when certified.
    pub primal_equivalent: Option<bool>,
    /// `static_dual_lb ≤ game_dual + 1e-6 ≤ game_primal + 2e-6`, asserted only when certified.
    pub dual_sandwich: Option<bool>,
    pub strong_duality: bool,
}

impl EquivalenceReport {
    pub fn passes(&self) -> bool {
        self.primal_equivalent.unwrap_or(true) && self.dual_sandwich.unwrap_or(true)
    }
}

pub fn check_equivalence(inst: &MdpInstance, model: &AmbiguityModel, cfg: &OracleConfig) -> Result<EquivalenceReport> {
    let problem = RobustProblem::new(inst, model)?;
    let primal = problem.solve_primal()?;
    let dual = problem.solve_dual()?;
    let s1 = inst.initial_state();
    let gp = primal.values.get(0, s1);
    let gd = dual.values.get(0, s1);
    let sp = static_primal(inst, model, cfg)?;
    let sd = static_dual(inst, model, cfg)?;
    let verdict = problem.check_worst_case_kernel(&primal.values)?.verdict;
    let (certified, by) = if structurally_rectangular(model) {
        (true, "rectangular structure".to_string())
    } else if verdict == Verdict::Uniform {
        (true, "uniform worst-case kernel".to_string())
    } else {
        (false, "none".to_string())
    };
    Ok(EquivalenceReport {
        game_primal: gp,
        game_dual: gd,
        static_primal: sp.value,
        static_dual_lower_bound: sd.lower_bound,
        grid_tolerance: sp.tolerance,
        certified,
        certified_by: by,
        primal_equivalent: certified
            .then(|| (gp - sp.value).abs() <= sp.tolerance + 1e-6 && sp.value >= gp - sp.tolerance - 1e-6),
        dual_sandwich: certified.then_some(sd.lower_bound <= gd + 1e-6 && gd <= gp + 1e-6),
        strong_duality: (gp - gd).abs() <= GAP_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnlargementReport {
    pub primal_max_diff: f64,
    pub dual_max_diff: f64,
    pub invariant: bool,
}

/// Compares primal and dual tables before and after the s-rectangular enlargement.
pub fn enlargement_invariance(inst: &MdpInstance, model: &AmbiguityModel) -> Result<EnlargementReport> {
    let big = model.s_rect_enlargement(inst, DEFAULT_CAP)?;
    let a = RobustProblem::new(inst, model)?;
    let b = RobustProblem::new(inst, &big)?;
    let dp = a.solve_primal()?.values.max_abs_diff(&b.solve_primal()?.values);
    let dd = a.solve_dual()?.values.max_abs_diff(&b.solve_dual()?.values);
    Ok(EnlargementReport {
        primal_max_diff: dp,
        dual_max_diff: dd,
        invariant: dp <= VALUE_TOL && dd <= VALUE_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryReport {
    /// Min over deterministic history-dependent controllers of the max over nature policies.
    pub history_value: f64,
    /// Same, restricted to deterministic Markov controllers.
    pub markov_value: f64,
    pub game_primal: f64,
    pub nature_policies: usize,
    pub verdict: Verdict,
    /// Equality with the game value is guaranteed when a worst-case kernel exists.
    pub equality_expected: bool,
    pub equality_holds: Option<bool>,
    /// When a pure Markov optimum exists the history value cannot exceed the game value.
    pub upper_bound_holds: Option<bool>,
    pub notes: Vec<String>,
}

impl HistoryReport {
    pub fn passes(&self) -> bool {
        self.equality_holds.unwrap_or(true) && self.upper_bound_holds.unwrap_or(true)
    }
}

/// Exhaustive deterministic history-dependent controllers against deterministic
/// Markov nature policies over each state's distinct extreme rows.
///
/// Histories record states, actions and the index of nature's row choice.
/// Nature's own history dependence is not enumerated.
pub fn history_dependent_check(inst: &MdpInstance, model: &AmbiguityModel, cfg: &OracleConfig) -> Result<HistoryReport> {
    cfg.validate()?;
    let cap = cfg.cap();
    let problem = RobustProblem::new(inst, model)?;
    let primal = problem.solve_primal()?;
    let verdict = problem.check_worst_case_kernel(&primal.values)?.verdict;
    let horizon = inst.horizon();
    let m = KernelLaws {
        inst,
        model,
        cap: DEFAULT_CAP,
    };
    let reach = reachable(&m)?;

    // rows[t][s] = distinct joint rows nature may play at (t, s).
    let mut rows: Vec<Vec<Vec<Vec<f64>>>> = Vec::new();
    for t in 0..horizon {
        let kernels = enumerate_extreme_kernels(model.stage(t), inst, t, DEFAULT_CAP)?;
        rows.push(
            (0..inst.num_states(t))
                .map(|s| {
                    let mut l = Vec::new();
                    if reach[t][s] {
                        for k in &kernels {
                            push_unique(&mut l, k.joint_row(s));
                        }
                    } else {
                        l.push(kernels[0].joint_row(s));
                    }
                    l
                })
                .collect(),
        );
    }
    let slots: Vec<(usize, usize)> = (0..horizon)
        .flat_map(|t| (0..inst.num_states(t)).map(move |s| (t, s)))
        .collect();
    let radices: Vec<usize> = slots.iter().map(|&(t, s)| rows[t][s].len()).collect();
    let n_gamma = count(&radices);
    if n_gamma > cap {
        return Err(cap_error("nature Markov policies", n_gamma, cap));
    }
    let mut gammas: Vec<Vec<usize>> = Vec::new();
    for_each_product(&radices, |idx| gammas.push(idx.to_vec()));
    let slot_of = |t: usize, s: usize| slots.iter().position(|&x| x == (t, s)).unwrap();
    let g = gammas.len();

    // sets[t][s]: cost vectors (over nature policies) of every controller subtree rooted at (t, s).
    let mut sets: Vec<Vec<Vec<Vec<f64>>>> = vec![Vec::new(); horizon + 1];
    sets[horizon] = inst.terminal_cost().iter().map(|&c| vec![vec![c; g]]).collect();
    let mut markov: Vec<Vec<Vec<Vec<f64>>>> = vec![Vec::new(); horizon + 1];
    markov[horizon] = sets[horizon].clone();
    let mut visited: u128 = 0;
    for t in (0..horizon).rev() {
        let n = inst.num_states(t + 1);
        let mut layer = Vec::new();
        for s in 0..inst.num_states(t) {
            if !reach[t][s] {
                layer.push(vec![vec![0.0; g]]);
                continue;
            }
            let slot = slot_of(t, s);
            let mut out: Vec<Vec<f64>> = Vec::new();
            for a in 0..inst.num_actions(t, s) {
                let c = inst.cost_row(t, s, a);
                // children (k, s') with positive probability under row k
                let children: Vec<(usize, usize)> = (0..rows[t][s].len())
                    .flat_map(|k| (0..n).map(move |j| (k, j)))
                    .filter(|&(k, j)| rows[t][s][k][a * n + j] > 0.0)
                    .collect();
                let child_radices: Vec<usize> = children.iter().map(|&(_, j)| sets[t + 1][j].len()).collect();
                let combos = count(&child_radices);
                visited = visited.saturating_add(combos.saturating_mul(g as u128));
                if visited > cap {
                    return Err(cap_error("history-dependent controller subtrees", visited, cap));
                }
                for_each_product(&child_radices, |idx| {
                    let mut v = vec![0.0; g];
                    for (gi, gamma) in gammas.iter().enumerate() {
                        let k = gamma[slot];
                        let row = &rows[t][s][k][a * n..(a + 1) * n];
                        let mut x = 0.0;
                        for (ci, &(ck, j)) in children.iter().enumerate() {
                            if ck == k {
                                x += row[j] * (c[j] + sets[t + 1][j][idx[ci]][gi]);
                            }
                        }
                        v[gi] = x;
                    }
                    out.push(v);
                });
            }
            layer.push(prune_vectors(out));
        }
        sets[t] = layer;
    }

    // Deterministic Markov controllers: one action per reachable (t, s).
    let mslots: Vec<(usize, usize)> = slots.iter().copied().filter(|&(t, s)| reach[t][s]).collect();
    let mradices: Vec<usize> = mslots.iter().map(|&(t, s)| inst.num_actions(t, s)).collect();
    if count(&mradices).saturating_mul(g as u128) > cap {
        return Err(cap_error("Markov controller policies", count(&mradices), cap));
    }
    let mut markov_value = f64::INFINITY;
    for_each_product(&mradices, |idx| {
        let mut choice: Vec<Vec<usize>> = (0..horizon).map(|t| vec![0; inst.num_states(t)]).collect();
        for (k, &(t, s)) in mslots.iter().enumerate() {
            choice[t][s] = idx[k];
        }
        let mut worst = f64::NEG_INFINITY;
        for gamma in &gammas {
            let mut next = inst.terminal_cost().to_vec();
            for t in (0..horizon).rev() {
                let n = inst.num_states(t + 1);
                next = (0..inst.num_states(t))
                    .map(|s| {
                        let a = choice[t][s];
                        let row = &rows[t][s][gamma[slot_of(t, s)]][a * n..(a + 1) * n];
                        let c = inst.cost_row(t, s, a);
                        (0..n).map(|j| row[j] * (c[j] + next[j])).sum()
                    })
                    .collect();
            }
            worst = worst.max(next[inst.initial_state()]);
        }
        markov_value = markov_value.min(worst);
    });

    let s1 = inst.initial_state();
    let history_value = sets[0][s1]
        .iter()
        .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    let gp = primal.values.get(0, s1);
    let equality_expected = verdict.holds();
    let mut notes = vec!["nature's history-dependent policies are not enumerated".to_string()];
    if !equality_expected {
        notes.push("no worst-case kernel; equality with the game value is not asserted".into());
    }
    Ok(HistoryReport {
        history_value,
        markov_value,
        game_primal: gp,
        nature_policies: g,
        verdict,
        equality_expected,
        equality_holds: equality_expected.then(|| (history_value - gp).abs() <= GAP_TOL),
        upper_bound_holds: primal.deterministic.is_some().then_some(history_value <= gp + GAP_TOL),
        notes,
    })
}

/// Keeps the vectors no other vector beats on every coordinate (smaller is better).
fn prune_vectors(mut set: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    set.sort_by(|a, b| a.iter().sum::<f64>().total_cmp(&b.iter().sum::<f64>()));
    let mut keep: Vec<Vec<f64>> = Vec::new();
    for x in set {
        if !keep.iter().any(|k| k.iter().zip(&x).all(|(a, b)| *a <= *b + 1e-15)) {
            keep.push(x);
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polytope, UnionOfPolytopes};
    use crate::mdp::MdpBuilder;

    fn two_stage() -> MdpInstance {
        MdpBuilder::new(&[vec!["sA"], vec!["sB", "sC"]])
            .actions(0, "sA", &["aL", "aR"])
            .terminal("sB", 1.0)
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
    fn grid_sizes() {
        assert_eq!(simplex_grid(2, 4).len(), 5);
        assert_eq!(simplex_grid(3, 2).len(), 6);
        assert_eq!(simplex_grid_len(3, 60), simplex_grid(3, 60).len() as u128);
        assert!(simplex_grid(3, 5).iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn static_primal_full_segment() {
        let cfg = OracleConfig {
            policy_grid: 100,
            ..OracleConfig::default()
        };
        let sp = static_primal(&two_stage(), &mirrored(&[(0.0, 1.0)]), &cfg).unwrap();
        assert!((sp.value - 0.5).abs() < 0.02);
        assert!((sp.policy.row(0, 0)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn static_dual_approaches_from_below() {
        let cfg = OracleConfig {
            kernel_grid: 16,
            ..OracleConfig::default()
        };
        let m = mirrored(&[(0.0, 0.25), (0.75, 1.0)]);
        let sd = static_dual(&two_stage(), &m, &cfg).unwrap();
        assert!(sd.lower_bound <= 0.25 + 1e-12);
        assert!(sd.lower_bound > 0.24);
        let full = static_dual(&two_stage(), &mirrored(&[(0.0, 1.0)]), &cfg).unwrap();
        assert!((full.lower_bound - 0.5).abs() < 1e-12);
    }

    #[test]
    fn finer_grid_never_worse() {
        let m = mirrored(&[(0.1, 0.9)]);
        let coarse = static_primal(&two_stage(), &m, &OracleConfig { policy_grid: 3, ..Default::default() }).unwrap();
        let fine = static_primal(&two_stage(), &m, &OracleConfig { policy_grid: 6, ..Default::default() }).unwrap();
        assert!(fine.value <= coarse.value + 1e-9);
    }

    #[test]
    fn tiny_cap_is_reported() {
        let cfg = OracleConfig {
            policy_grid: 100,
            max_enumeration: 10,
            ..Default::default()
        };
        assert!(matches!(
            static_primal(&two_stage(), &mirrored(&[(0.0, 1.0)]), &cfg),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn history_check_on_randomizing_instance() {
        // Deterministic controllers cannot randomize, so they do worse than the game value.
        let r = history_dependent_check(&two_stage(), &mirrored(&[(0.0, 1.0)]), &OracleConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert!((r.history_value - 1.0).abs() < 1e-12);
        assert!(r.passes());
    }

    #[test]
    fn history_check_keeps_cheapest_subtrees() {
        let inst = MdpBuilder::new(&[vec!["r"], vec!["u", "v"], vec!["lo", "hi"]])
            .uniform_actions(&["a", "b"])
            .terminal("hi", 1.0)
            .build()
            .unwrap();
        let k = StageKernel::from_rows;
        let model = AmbiguityModel::new(vec![
            StageAmbiguity::Finite {
                kernels: vec![
                    k(vec![vec![vec![0.3, 0.7], vec![0.5, 0.5]]]),
                    k(vec![vec![vec![0.6, 0.4], vec![0.8, 0.2]]]),
                ],
            },
            StageAmbiguity::Finite {
                kernels: vec![
                    k(vec![vec![vec![0.7, 0.3], vec![0.6, 0.4]], vec![vec![0.2, 0.8], vec![0.4, 0.6]]]),
                    k(vec![vec![vec![0.9, 0.1], vec![0.8, 0.2]], vec![vec![0.5, 0.5], vec![0.6, 0.4]]]),
                ],
            },
        ]);
        // b at the root, then a at u and b at v: 0.5 * 0.3 + 0.5 * 0.6.
        let r = history_dependent_check(&inst, &model, &OracleConfig::default()).unwrap();
        assert!((r.history_value - 0.45).abs() < 1e-12);
        assert!((r.markov_value - 0.45).abs() < 1e-12);
        assert!(r.passes());
    }
}

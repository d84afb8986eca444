//! Structured ambiguity sets of transition kernels.
//!
//! Joint vectors for a state `s` are laid out action-major: coordinate
//! `a * n_next + s'` holds `P(s' | s, a)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_cap, Error, Result, Violation};
use crate::geometry::{Polytope, UnionOfPolytopes};
use crate::mdp::{is_distribution, MdpInstance, StageKernel, PROB_TOL};

/// Factor sets `W_i` (vertex lists over next states) and nonnegative
/// coefficients `κ[s][a][i]`; kernel rows are `Σ_i κ[s][a][i] w_i` with one
/// `w_i ∈ W_i` per factor shared by every `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RFactors {
    pub factors: Vec<Vec<Vec<f64>>>,
    pub coefficients: Vec<Vec<Vec<f64>>>,
}

impl RFactors {
    fn violations(&self, inst: &MdpInstance, t: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        let n_next = inst.num_states(t + 1);
        let m = self.factors.len();
        for (i, w) in self.factors.iter().enumerate() {
            if w.is_empty() {
                out.push(Violation::new(format!("factor set {i} is empty")).at_stage(t));
            }
            if w.iter().any(|v| v.len() != n_next || v.iter().any(|x| !x.is_finite())) {
                out.push(
                    Violation::new(format!("factor set {i} has vectors of the wrong length or non-finite entries"))
                        .at_stage(t),
                );
            }
        }
        if self.coefficients.len() != inst.num_states(t) {
            out.push(Violation::new("coefficients do not cover every state").at_stage(t));
            return out;
        }
        for (s, per_a) in self.coefficients.iter().enumerate() {
            if per_a.len() != inst.num_actions(t, s) {
                out.push(
                    Violation::new("coefficients do not cover every action")
                        .at_stage(t)
                        .at_state(inst.state_name(t, s)),
                );
                continue;
            }
            for (a, k) in per_a.iter().enumerate() {
                let here = || {
                    Violation::new("")
                        .at_stage(t)
                        .at_state(inst.state_name(t, s))
                        .at_action(inst.action_name(t, s, a))
                };
                if k.len() != m {
                    out.push(Violation {
                        message: format!("{} coefficients for {} factors", k.len(), m),
                        ..here()
                    });
                } else if k.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    out.push(Violation {
                        message: "coefficients must be finite and nonnegative".into(),
                        ..here()
                    });
                }
            }
        }
        out
    }

    /// Factors with a nonzero coefficient somewhere at state `s`.
    fn active_factors(&self, s: usize) -> Vec<usize> {
        (0..self.factors.len())
            .filter(|&i| self.coefficients[s].iter().any(|k| k[i] != 0.0))
            .collect()
    }

    /// Row `Σ_i κ[s][a][i] W_i[choice[i]]`; `choice` is indexed by factor.
    pub fn row(&self, s: usize, a: usize, choice: &[usize]) -> Vec<f64> {
        let n = self.factors.first().and_then(|w| w.first()).map_or(0, |v| v.len());
        let mut out = vec![0.0; n];
        for (i, &k) in self.coefficients[s][a].iter().enumerate() {
            if k != 0.0 {
                for (o, w) in out.iter_mut().zip(&self.factors[i][choice[i]]) {
                    *o += k * w;
                }
            }
        }
        out
    }

    pub fn joint_row(&self, s: usize, choice: &[usize]) -> Vec<f64> {
        (0..self.coefficients[s].len())
            .flat_map(|a| self.row(s, a, choice))
            .collect()
    }

    pub fn stage_kernel(&self, choice: &[usize]) -> StageKernel {
        StageKernel::from_rows(
            (0..self.coefficients.len())
                .map(|s| {
                    (0..self.coefficients[s].len())
                        .map(|a| self.row(s, a, choice))
                        .collect()
                })
                .collect(),
        )
    }

    /// Per-factor maximizer of `w · next`, lowest index on ties.
    pub fn witness(&self, next: &[f64]) -> Vec<usize> {
        self.factors
            .iter()
            .map(|w| {
                let scores: Vec<f64> = w
                    .iter()
                    .map(|v| v.iter().zip(next).map(|(p, x)| p * x).sum())
                    .collect();
                crate::lp::argmax(&scores)
            })
            .collect()
    }

    /// Choices over every combination of the factors active at `s`
    /// (inactive factors pinned to their first vector).
    fn state_choices(&self, s: usize, cap: u128) -> Result<Vec<Vec<usize>>> {
        let active = self.active_factors(s);
        let radices: Vec<usize> = active.iter().map(|&i| self.factors[i].len()).collect();
        check_cap(|| "r-rectangular factor combinations".into(), radices.iter().copied(), cap)?;
        let mut out = Vec::new();
        for_each_product(&radices, |idx| {
            let mut choice = vec![0; self.factors.len()];
            for (k, &i) in active.iter().enumerate() {
                choice[i] = idx[k];
            }
            out.push(choice);
        });
        Ok(out)
    }

    fn marginal_vertices(&self, s: usize, cap: u128) -> Result<Vec<Vec<f64>>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for c in self.state_choices(s, cap)? {
            push_unique(&mut out, self.joint_row(s, &c));
        }
        Ok(out)
    }
}

/// Ambiguity set for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageAmbiguity {
    /// Independent polytope over next states for every `(s, a)`, indexed `[s][a]`.
    SaRect { polytopes: Vec<Vec<Polytope>> },
    /// Union of polytopes in the joint action-major space for every state.
    SRect { marginals: Vec<UnionOfPolytopes> },
    RRect {
        factors: Vec<Vec<Vec<f64>>>,
        coefficients: Vec<Vec<Vec<f64>>>,
    },
    /// `β · s_part + (1 − β) · r_part`.
    SrRect {
        beta: f64,
        s_part: Vec<UnionOfPolytopes>,
        r_part: RFactors,
    },
    /// Convex hull of the listed stage kernels.
    Finite { kernels: Vec<StageKernel> },
    Singleton { kernel: StageKernel },
}

pub(crate) fn for_each_product(radices: &[usize], mut f: impl FnMut(&[usize])) {
    if radices.contains(&0) {
        return;
    }
    let mut idx = vec![0; radices.len()];
    loop {
        f(&idx);
        let mut k = radices.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < radices[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

pub(crate) fn push_unique(list: &mut Vec<Vec<f64>>, v: Vec<f64>) {
    if !list
        .iter()
        .any(|u| u.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-12))
    {
        list.push(v);
    }
}

fn split_joint(v: &[f64], n_next: usize) -> Vec<Vec<f64>> {
    v.chunks(n_next).map(|c| c.to_vec()).collect()
}

fn blend(beta: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(p, q)| beta * p + (1.0 - beta) * q).collect()
}

fn joint_violations(
    inst: &MdpInstance,
    t: usize,
    s: usize,
    v: &[f64],
    what: &str,
    out: &mut Vec<Violation>,
) {
    let n_next = inst.num_states(t + 1);
    for (a, row) in split_joint(v, n_next).iter().enumerate() {
        if !is_distribution(row, PROB_TOL) {
            out.push(
                Violation::new(format!("{what} gives a row that is not a distribution: {row:?}"))
                    .at_stage(t)
                    .at_state(inst.state_name(t, s))
                    .at_action(inst.action_name(t, s, a)),
            );
        }
    }
}

fn union_shape(
    inst: &MdpInstance,
    t: usize,
    marginals: &[UnionOfPolytopes],
    out: &mut Vec<Violation>,
) -> bool {
    if marginals.len() != inst.num_states(t) {
        out.push(Violation::new("marginals do not cover every state").at_stage(t));
        return false;
    }
    let n_next = inst.num_states(t + 1);
    let mut ok = true;
    for (s, u) in marginals.iter().enumerate() {
        let d = inst.num_actions(t, s) * n_next;
        for v in u.violations() {
            ok = false;
            out.push(Violation {
                stage: Some(t + 1),
                state: Some(inst.state_name(t, s).to_string()),
                ..v
            });
        }
        if u.dim() != d {
            ok = false;
            out.push(
                Violation::new(format!("marginal has dimension {}, expected {}", u.dim(), d))
                    .at_stage(t)
                    .at_state(inst.state_name(t, s)),
            );
        }
    }
    ok
}

impl StageAmbiguity {
    pub fn r_factors(&self) -> Option<RFactors> {
        match self {
            StageAmbiguity::RRect {
                factors,
                coefficients,
            } => Some(RFactors {
                factors: factors.clone(),
                coefficients: coefficients.clone(),
            }),
            StageAmbiguity::SrRect { r_part, .. } => Some(r_part.clone()),
            _ => None,
        }
    }

    pub fn class_name(&self) -> &'static str {
        match self {
            StageAmbiguity::SaRect { .. } => "(s,a)-rectangular",
            StageAmbiguity::SRect { .. } => "s-rectangular",
            StageAmbiguity::RRect { .. } => "r-rectangular",
            StageAmbiguity::SrRect { .. } => "sr-rectangular",
            StageAmbiguity::Finite { .. } => "finite kernel set",
            StageAmbiguity::Singleton { .. } => "singleton",
        }
    }

    /// Whether the set is a product over states.
    pub fn is_state_decoupled(&self) -> bool {
        matches!(
            self,
            StageAmbiguity::SaRect { .. } | StageAmbiguity::SRect { .. } | StageAmbiguity::Singleton { .. }
        )
    }

    /// Weight of the r-rectangular part, if any.
    pub(crate) fn r_weight(&self) -> f64 {
        match self {
            StageAmbiguity::RRect { .. } => 1.0,
            StageAmbiguity::SrRect { beta, .. } => 1.0 - beta,
            _ => 0.0,
        }
    }
}

/// Lists every way stage `t` of `model` fails to describe valid kernels.
pub fn validate_model(model: &StageAmbiguity, inst: &MdpInstance, t: usize, cap: u128) -> Vec<Violation> {
    let mut out = Vec::new();
    let n_next = inst.num_states(t + 1);
    let n_s = inst.num_states(t);
    match model {
        StageAmbiguity::SaRect { polytopes } => {
            if polytopes.len() != n_s {
                out.push(Violation::new("polytopes do not cover every state").at_stage(t));
                return out;
            }
            for (s, per_a) in polytopes.iter().enumerate() {
                if per_a.len() != inst.num_actions(t, s) {
                    out.push(
                        Violation::new("polytopes do not cover every action")
                            .at_stage(t)
                            .at_state(inst.state_name(t, s)),
                    );
                    continue;
                }
                for (a, p) in per_a.iter().enumerate() {
                    let at = |v: Violation| Violation {
                        stage: Some(t + 1),
                        state: Some(inst.state_name(t, s).to_string()),
                        action: Some(inst.action_name(t, s, a).to_string()),
                        ..v
                    };
                    let pv = p.violations();
                    if !pv.is_empty() {
                        out.extend(pv.into_iter().map(at));
                        continue;
                    }
                    if p.dim() != n_next {
                        out.push(at(Violation::new(format!(
                            "polytope has dimension {}, expected {}",
                            p.dim(),
                            n_next
                        ))));
                        continue;
                    }
                    match p.vertices(cap) {
                        Ok(vs) => {
                            for v in vs {
                                if !is_distribution(&v, PROB_TOL) {
                                    out.push(at(Violation::new(format!(
                                        "vertex {v:?} is not a distribution"
                                    ))));
                                }
                            }
                        }
                        Err(e) => out.push(at(Violation::new(e.to_string()))),
                    }
                }
            }
        }
        StageAmbiguity::SRect { marginals } => {
            if !union_shape(inst, t, marginals, &mut out) {
                return out;
            }
            for (s, u) in marginals.iter().enumerate() {
                match u.piece_vertices(cap) {
                    Ok(lists) => {
                        for v in lists.iter().flatten() {
                            joint_violations(inst, t, s, v, "vertex", &mut out);
                        }
                    }
                    Err(e) => out.push(Violation::new(e.to_string()).at_stage(t).at_state(inst.state_name(t, s))),
                }
            }
        }
        StageAmbiguity::RRect {
            factors,
            coefficients,
        } => {
            let r = RFactors {
                factors: factors.clone(),
                coefficients: coefficients.clone(),
            };
            out.extend(r_violations(&r, inst, t, cap));
        }
        StageAmbiguity::SrRect {
            beta,
            s_part,
            r_part,
        } => {
            if !(0.0..=1.0).contains(beta) {
                out.push(Violation::new(format!("blend weight {beta} outside [0, 1]")).at_stage(t));
                return out;
            }
            let rv = r_part.violations(inst, t);
            let shape_ok = union_shape(inst, t, s_part, &mut out);
            if !rv.is_empty() || !shape_ok {
                out.extend(rv);
                return out;
            }
            for (s, u) in s_part.iter().enumerate() {
                let lists = match u.piece_vertices(cap) {
                    Ok(l) => l,
                    Err(e) => {
                        out.push(Violation::new(e.to_string()).at_stage(t).at_state(inst.state_name(t, s)));
                        continue;
                    }
                };
                let rs = match r_part.marginal_vertices(s, cap) {
                    Ok(r) => r,
                    Err(e) => {
                        out.push(Violation::new(e.to_string()).at_stage(t).at_state(inst.state_name(t, s)));
                        continue;
                    }
                };
                if let Err(e) = check_cap(
                    || "blend combinations".into(),
                    [lists.iter().map(|l| l.len()).sum::<usize>(), rs.len()],
                    cap,
                ) {
                    out.push(Violation::new(e.to_string()).at_stage(t));
                    continue;
                }
                for v in lists.iter().flatten() {
                    for r in &rs {
                        joint_violations(inst, t, s, &blend(*beta, v, r), "blend", &mut out);
                    }
                }
            }
        }
        StageAmbiguity::Finite { kernels } => {
            if kernels.is_empty() {
                out.push(Violation::new("finite kernel set is empty").at_stage(t));
            }
            for k in kernels {
                out.extend(k.violations(inst, t));
            }
        }
        StageAmbiguity::Singleton { kernel } => out.extend(kernel.violations(inst, t)),
    }
    out
}

fn r_violations(r: &RFactors, inst: &MdpInstance, t: usize, cap: u128) -> Vec<Violation> {
    let mut out = r.violations(inst, t);
    if !out.is_empty() {
        return out;
    }
    for s in 0..inst.num_states(t) {
        match r.state_choices(s, cap) {
            Ok(choices) => {
                for c in choices {
                    joint_violations(inst, t, s, &r.joint_row(s, &c), "factor combination", &mut out);
                }
            }
            Err(e) => out.push(Violation::new(e.to_string()).at_stage(t)),
        }
    }
    dedupe(out)
}

fn dedupe(v: Vec<Violation>) -> Vec<Violation> {
    let mut out: Vec<Violation> = Vec::new();
    for x in v {
        if !out.iter().any(|y| y.stage == x.stage && y.state == x.state && y.action == x.action) {
            out.push(x);
        }
    }
    out
}

/// Every stage kernel obtained by picking one vertex per independent component.
pub fn enumerate_extreme_kernels(
    model: &StageAmbiguity,
    inst: &MdpInstance,
    t: usize,
    cap: u128,
) -> Result<Vec<StageKernel>> {
    let n_next = inst.num_states(t + 1);
    let n_s = inst.num_states(t);
    match model {
        StageAmbiguity::SaRect { polytopes } => {
            let verts: Vec<Vec<Vec<Vec<f64>>>> = polytopes
                .iter()
                .map(|per_a| per_a.iter().map(|p| p.vertices(cap)).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?;
            let radices: Vec<usize> = verts.iter().flatten().map(|v| v.len()).collect();
            check_cap(|| format!("extreme kernels at stage {}", t + 1), radices.iter().copied(), cap)?;
            let mut out = Vec::new();
            for_each_product(&radices, |idx| {
                let mut k = 0;
                let rows = verts
                    .iter()
                    .map(|per_a| {
                        per_a
                            .iter()
                            .map(|vs| {
                                let r = vs[idx[k]].clone();
                                k += 1;
                                r
                            })
                            .collect()
                    })
                    .collect();
                out.push(StageKernel::from_rows(rows));
            });
            Ok(out)
        }
        StageAmbiguity::SRect { marginals } => {
            let pooled: Vec<Vec<Vec<f64>>> = marginals
                .iter()
                .map(|u| Ok(u.piece_vertices(cap)?.into_iter().flatten().collect()))
                .collect::<Result<_>>()?;
            let radices: Vec<usize> = pooled.iter().map(|v| v.len()).collect();
            check_cap(|| format!("extreme kernels at stage {}", t + 1), radices.iter().copied(), cap)?;
            let mut out = Vec::new();
            for_each_product(&radices, |idx| {
                let rows = (0..n_s).map(|s| split_joint(&pooled[s][idx[s]], n_next)).collect();
                out.push(StageKernel::from_rows(rows));
            });
            Ok(out)
        }
        StageAmbiguity::RRect { .. } => {
            let r = model.r_factors().expect("r part");
            r_extreme(&r, t, cap)
        }
        StageAmbiguity::SrRect {
            beta,
            s_part,
            r_part,
        } => {
            let s_model = StageAmbiguity::SRect {
                marginals: s_part.clone(),
            };
            let sk = enumerate_extreme_kernels(&s_model, inst, t, cap)?;
            let rk = r_extreme(r_part, t, cap)?;
            check_cap(|| format!("extreme kernels at stage {}", t + 1), [sk.len(), rk.len()], cap)?;
            Ok(sk
                .iter()
                .flat_map(|a| rk.iter().map(move |b| a.blend(*beta, b)))
                .collect())
        }
        StageAmbiguity::Finite { kernels } => Ok(kernels.clone()),
        StageAmbiguity::Singleton { kernel } => Ok(vec![kernel.clone()]),
    }
}

fn r_extreme(r: &RFactors, t: usize, cap: u128) -> Result<Vec<StageKernel>> {
    let radices: Vec<usize> = r.factors.iter().map(|w| w.len()).collect();
    check_cap(|| format!("extreme kernels at stage {}", t + 1), radices.iter().copied(), cap)?;
    let mut out = Vec::new();
    for_each_product(&radices, |idx| out.push(r.stage_kernel(idx)));
    Ok(out)
}

/// The state-wise marginal `{P(·|s, ·) : P in the set}` as a union of vertex lists.
pub fn marginalize_statewise(
    model: &StageAmbiguity,
    inst: &MdpInstance,
    _t: usize,
    s: usize,
    cap: u128,
) -> Result<UnionOfPolytopes> {
    let pieces = match model {
        StageAmbiguity::SaRect { polytopes } => {
            let verts = polytopes[s]
                .iter()
                .map(|p| p.vertices(cap))
                .collect::<Result<Vec<_>>>()?;
            let radices: Vec<usize> = verts.iter().map(|v| v.len()).collect();
            check_cap(|| "product marginal vertices".into(), radices.iter().copied(), cap)?;
            let mut joint = Vec::new();
            for_each_product(&radices, |idx| {
                joint.push(
                    idx.iter()
                        .enumerate()
                        .flat_map(|(a, &i)| verts[a][i].iter().copied())
                        .collect(),
                );
            });
            vec![joint]
        }
        StageAmbiguity::SRect { marginals } => marginals[s].piece_vertices(cap)?,
        StageAmbiguity::RRect { .. } => {
            vec![model.r_factors().expect("r part").marginal_vertices(s, cap)?]
        }
        StageAmbiguity::SrRect {
            beta,
            s_part,
            r_part,
        } => {
            let rs = r_part.marginal_vertices(s, cap)?;
            let lists = s_part[s].piece_vertices(cap)?;
            check_cap(
                || "blend marginal vertices".into(),
                [lists.iter().map(|l| l.len()).sum::<usize>(), rs.len()],
                cap,
            )?;
            lists
                .iter()
                .map(|piece| {
                    let mut out = Vec::new();
                    for v in piece {
                        for r in &rs {
                            push_unique(&mut out, blend(*beta, v, r));
                        }
                    }
                    out
                })
                .collect()
        }
        StageAmbiguity::Finite { kernels } => {
            let mut out = Vec::new();
            for k in kernels {
                push_unique(&mut out, k.joint_row(s));
            }
            vec![out]
        }
        StageAmbiguity::Singleton { kernel } => vec![vec![kernel.joint_row(s)]],
    };
    let _ = inst;
    Ok(UnionOfPolytopes {
        pieces: pieces.into_iter().map(Polytope::Vertices).collect(),
    })
}

/// The s-rectangular set whose state marginals are those of `model`.
pub fn s_rect_enlargement(
    model: &StageAmbiguity,
    inst: &MdpInstance,
    t: usize,
    cap: u128,
) -> Result<StageAmbiguity> {
    if let StageAmbiguity::SRect { .. } = model {
        return Ok(model.clone());
    }
    let marginals = (0..inst.num_states(t))
        .map(|s| marginalize_statewise(model, inst, t, s, cap))
        .collect::<Result<_>>()?;
    Ok(StageAmbiguity::SRect { marginals })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rectangularity {
    /// Independence across `(s, a)` pairs.
    StateAction,
    /// Independence across states.
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub kind: Rectangularity,
    pub rectangular: bool,
    /// Declared by the representation rather than computed.
    pub structural: bool,
    /// A product of marginal vertices outside the set.
    pub witness: Option<StageKernel>,
    pub combinations_tested: usize,
}

/// Tests whether stage `t` equals the product of its marginals.
///
/// The set is the hull of its extreme kernels, and the product of marginals is
/// the hull of products of marginal vertices, so testing every such product for
/// membership decides the question exactly.
pub fn rectangularity_probe(
    model: &StageAmbiguity,
    inst: &MdpInstance,
    t: usize,
    kind: Rectangularity,
    cap: u128,
) -> Result<ProbeReport> {
    let structural = match (model, kind) {
        (StageAmbiguity::SaRect { .. } | StageAmbiguity::Singleton { .. }, _) => true,
        (StageAmbiguity::SRect { .. }, Rectangularity::State) => true,
        _ => false,
    };
    if structural {
        return Ok(ProbeReport {
            kind,
            rectangular: true,
            structural,
            witness: None,
            combinations_tested: 0,
        });
    }
    let n = inst.num_states(t + 1);
    let kernels = enumerate_extreme_kernels(model, inst, t, cap)?;
    let flat: Vec<Vec<f64>> = kernels
        .iter()
        .map(|k| k.rows().iter().flatten().flatten().copied().collect())
        .collect();
    // slots are (s, a) pairs or whole states; marginal vertices are distinct blocks
    let slots: Vec<(usize, Option<usize>)> = (0..inst.num_states(t))
        .flat_map(|s| match kind {
            Rectangularity::StateAction => (0..inst.num_actions(t, s)).map(|a| (s, Some(a))).collect::<Vec<_>>(),
            Rectangularity::State => vec![(s, None)],
        })
        .collect();
    let marginals: Vec<Vec<Vec<f64>>> = slots
        .iter()
        .map(|&(s, a)| {
            let mut l = Vec::new();
            for k in &kernels {
                push_unique(&mut l, a.map_or_else(|| k.joint_row(s), |a| k.row(s, a).to_vec()));
            }
            l
        })
        .collect();
    let radices: Vec<usize> = marginals.iter().map(|m| m.len()).collect();
    check_cap(|| "marginal vertex products".into(), radices.iter().copied(), cap)?;
    let mut witness = None;
    let mut tested = 0;
    let mut failure = None;
    for_each_product(&radices, |idx| {
        if witness.is_some() || failure.is_some() {
            return;
        }
        tested += 1;
        let mut rows: Vec<Vec<Vec<f64>>> = (0..inst.num_states(t)).map(|_| Vec::new()).collect();
        for (k, &(s, a)) in slots.iter().enumerate() {
            let v = &marginals[k][idx[k]];
            match a {
                Some(_) => rows[s].push(v.clone()),
                None => rows[s] = split_joint(v, n),
            }
        }
        let x: Vec<f64> = rows.iter().flatten().flatten().copied().collect();
        match crate::geometry::hull_contains(&flat, &x) {
            Ok(true) => {}
            Ok(false) => witness = Some(StageKernel::from_rows(rows)),
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ProbeReport {
        kind,
        rectangular: witness.is_none(),
        structural,
        witness,
        combinations_tested: tested,
    })
}

/// `β · s_part + (1 − β) · r_part`, validated against stage `t`.
pub fn compose_sr(
    beta: f64,
    s_part: &StageAmbiguity,
    r_part: &StageAmbiguity,
    inst: &MdpInstance,
    t: usize,
    cap: u128,
) -> Result<StageAmbiguity> {
    let StageAmbiguity::SRect { marginals } = s_part else {
        return Err(Error::Unsupported("s part of a blend must be s-rectangular".into()));
    };
    let Some(r) = r_part.r_factors().filter(|_| matches!(r_part, StageAmbiguity::RRect { .. })) else {
        return Err(Error::Unsupported("r part of a blend must be r-rectangular".into()));
    };
    let model = StageAmbiguity::SrRect {
        beta,
        s_part: marginals.clone(),
        r_part: r,
    };
    let v = validate_model(&model, inst, t, cap);
    if v.is_empty() {
        Ok(model)
    } else {
        Err(Error::InvalidModel(v))
    }
}

/// Kernel ambiguity for every stage of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AmbiguityModel {
    pub stages: Vec<StageAmbiguity>,
}

impl AmbiguityModel {
    pub fn new(stages: Vec<StageAmbiguity>) -> Self {
        AmbiguityModel { stages }
    }

    pub fn stage(&self, t: usize) -> &StageAmbiguity {
        &self.stages[t]
    }

    pub fn violations(&self, inst: &MdpInstance, cap: u128) -> Vec<Violation> {
        if self.stages.len() != inst.horizon() {
            return vec![Violation::new(format!(
                "ambiguity given for {} stages, horizon is {}",
                self.stages.len(),
                inst.horizon()
            ))];
        }
        (0..inst.horizon())
            .flat_map(|t| validate_model(&self.stages[t], inst, t, cap))
            .collect()
    }

    pub fn validate(&self, inst: &MdpInstance, cap: u128) -> Result<()> {
        let v = self.violations(inst, cap);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    /// Stage-by-stage s-rectangular enlargement.
    pub fn s_rect_enlargement(&self, inst: &MdpInstance, cap: u128) -> Result<AmbiguityModel> {
        Ok(AmbiguityModel {
            stages: (0..inst.horizon())
                .map(|t| s_rect_enlargement(&self.stages[t], inst, t, cap))
                .collect::<Result<_>>()?,
        })
    }

    /// Whether stage costs must be free of the next state for this model.
    pub(crate) fn check_cost_restriction(&self, inst: &MdpInstance) -> Result<()> {
        for (t, st) in self.stages.iter().enumerate() {
            if st.r_weight() > 0.0 && !inst.costs_independent_of_next(t) {
                return Err(Error::NextStateDependentCost { stage: t + 1 });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::DEFAULT_CAP;
    use crate::mdp::MdpBuilder;

    fn two_stage() -> MdpInstance {
        MdpBuilder::new(&[vec!["sA"], vec!["sB", "sC"]])
            .actions(0, "sA", &["aL", "aR"])
            .terminal("sB", 1.0)
            .build()
            .unwrap()
    }

    fn joint(p: f64) -> Vec<f64> {
        vec![p, 1.0 - p, 1.0 - p, p]
    }

    fn remark_r_rect() -> StageAmbiguity {
        StageAmbiguity::RRect {
            factors: vec![
                vec![vec![0.0, 1.0]],
                vec![vec![1.0 / 3.0, 2.0 / 3.0]],
                vec![vec![0.0, 0.0], vec![1.0, -1.0]],
            ],
            coefficients: vec![vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0 / 3.0]]],
        }
    }

    #[test]
    fn remark_factors_are_valid() {
        assert!(validate_model(&remark_r_rect(), &two_stage(), 0, DEFAULT_CAP).is_empty());
    }

    #[test]
    fn bad_vertex_is_reported() {
        let m = StageAmbiguity::SaRect {
            polytopes: vec![vec![
                Polytope::point(vec![0.5, 0.6]),
                Polytope::point(vec![0.5, 0.5]),
            ]],
        };
        let v = validate_model(&m, &two_stage(), 0, DEFAULT_CAP);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].action.as_deref(), Some("aL"));
    }

    #[test]
    fn negative_coefficient_is_reported() {
        let mut m = remark_r_rect();
        if let StageAmbiguity::RRect { coefficients, .. } = &mut m {
            coefficients[0][0][0] = -1.0;
        }
        assert!(!validate_model(&m, &two_stage(), 0, DEFAULT_CAP).is_empty());
    }

    #[test]
    fn two_segments_give_four_kernels() {
        let m = StageAmbiguity::SRect {
            marginals: vec![UnionOfPolytopes {
                pieces: vec![
                    Polytope::segment(joint(0.0), joint(0.25)),
                    Polytope::segment(joint(0.75), joint(1.0)),
                ],
            }],
        };
        let k = enumerate_extreme_kernels(&m, &two_stage(), 0, DEFAULT_CAP).unwrap();
        assert_eq!(k.len(), 4);
        assert_eq!(k[1].row(0, 0), &[0.25, 0.75]);
        let marg = marginalize_statewise(&m, &two_stage(), 0, 0, DEFAULT_CAP).unwrap();
        assert_eq!(marg.pieces.len(), 2);
    }

    #[test]
    fn sa_rect_product_count() {
        let inst = MdpBuilder::new(&[vec!["x", "y"], vec!["u", "v"]])
            .uniform_actions(&["a", "b"])
            .build()
            .unwrap();
        let seg = || Polytope::segment(vec![0.2, 0.8], vec![0.6, 0.4]);
        let m = StageAmbiguity::SaRect {
            polytopes: vec![vec![seg(), seg()], vec![seg(), seg()]],
        };
        assert_eq!(enumerate_extreme_kernels(&m, &inst, 0, DEFAULT_CAP).unwrap().len(), 16);
        assert!(matches!(
            enumerate_extreme_kernels(&m, &inst, 0, 10),
            Err(Error::CapExceeded { count: 16, .. })
        ));
    }

    #[test]
    fn r_rect_enlargement_is_the_p_segment() {
        let inst = two_stage();
        let e = s_rect_enlargement(&remark_r_rect(), &inst, 0, DEFAULT_CAP).unwrap();
        let StageAmbiguity::SRect { marginals } = &e else { panic!() };
        let seg = |p: f64| vec![p, 1.0 - p, (1.0 + p) / 3.0, (2.0 - p) / 3.0];
        assert!(marginals[0].contains(&seg(0.3)).unwrap());
        assert!(!marginals[0].contains(&[0.3, 0.7, 0.6, 0.4]).unwrap());
    }

    #[test]
    fn singleton_and_finite_marginals() {
        let inst = two_stage();
        let k1 = StageKernel::from_rows(vec![vec![vec![1.0, 0.0], vec![0.5, 0.5]]]);
        let k2 = StageKernel::from_rows(vec![vec![vec![0.0, 1.0], vec![0.5, 0.5]]]);
        let s = StageAmbiguity::Singleton { kernel: k1.clone() };
        let m = marginalize_statewise(&s, &inst, 0, 0, DEFAULT_CAP).unwrap();
        assert_eq!(m.pieces, vec![Polytope::Vertices(vec![k1.joint_row(0)])]);
        let f = StageAmbiguity::Finite { kernels: vec![k1, k2] };
        let m = marginalize_statewise(&f, &inst, 0, 0, DEFAULT_CAP).unwrap();
        assert_eq!(m.pieces.len(), 1);
        let Polytope::Vertices(v) = &m.pieces[0] else { panic!() };
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn blend_extremes_and_degenerate_weights() {
        let inst = two_stage();
        let s = StageAmbiguity::SRect {
            marginals: vec![UnionOfPolytopes::single(Polytope::segment(joint(0.0), joint(1.0)))],
        };
        let sr = compose_sr(0.5, &s, &remark_r_rect(), &inst, 0, DEFAULT_CAP).unwrap();
        assert_eq!(enumerate_extreme_kernels(&sr, &inst, 0, DEFAULT_CAP).unwrap().len(), 4);
        assert!(compose_sr(1.5, &s, &remark_r_rect(), &inst, 0, DEFAULT_CAP).is_err());
        assert!(compose_sr(0.5, &remark_r_rect(), &s, &inst, 0, DEFAULT_CAP).is_err());
    }

    #[test]
    fn serde_is_strict() {
        let json = r#"{"kind":"singleton","kernel":[[[1.0,0.0],[0.0,1.0]]]}"#;
        let m: StageAmbiguity = serde_json::from_str(json).unwrap();
        assert!(matches!(m, StageAmbiguity::Singleton { .. }));
        let bad = r#"{"kind":"singleton","kernel":[[[1.0,0.0],[0.0,1.0]]],"extra":1}"#;
        assert!(serde_json::from_str::<StageAmbiguity>(bad).is_err());
        let sr = r#"{"kind":"sr_rect","beta":0.5,"s_part":[],"r_part":{"factors":[],"coefficients":[],"x":0}}"#;
        assert!(serde_json::from_str::<StageAmbiguity>(sr).is_err());
    }
}

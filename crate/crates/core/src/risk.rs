//! Average Value-at-Risk, its dual sets of measures, and the nested risk-averse recursion.

use serde::{Deserialize, Serialize};

use crate::ambiguity::{AmbiguityModel, StageAmbiguity};
use crate::error::{Error, Result, Violation};
use crate::geometry::Polytope;
use crate::lp::{solve_lp, Bound, LinearProgram, LpError, LpOutcome};
use crate::mdp::{Kernel, MdpInstance, RandomizedPolicy, StageKernel, ValueTable};

/// Agreement demanded between the sorting and LP forms.
pub const AVAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvarSpec {
    pub alpha: f64,
    /// Reference kernel, one stage kernel per stage.
    pub reference: Vec<StageKernel>,
}

impl AvarSpec {
    pub fn kernel(&self, inst: &MdpInstance) -> Result<Kernel> {
        check_alpha(self.alpha)?;
        Kernel::new(inst, self.reference.clone())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidModel(vec![Violation::new(format!(
            "alpha must lie in (0, 1], got {alpha}"
        ))]));
    }
    Ok(())
}

fn check_inputs(values: &[f64], probs: &[f64], alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    let bad = |m: String| Err(Error::InvalidModel(vec![Violation::new(m)]));
    if values.len() != probs.len() || values.is_empty() {
        return bad(format!("{} values for {} probabilities", values.len(), probs.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return bad("values must be finite".into());
    }
    if !crate::mdp::is_distribution(probs, crate::mdp::PROB_TOL) {
        return bad("probabilities must form a distribution".into());
    }
    Ok(())
}

/// `inf_τ τ + E[(Z − τ)_+] / α` by sorting; returns the value and the smallest minimizing `τ`.
pub fn avar_sorted(values: &[f64], probs: &[f64], alpha: f64) -> Result<(f64, f64)> {
    check_inputs(values, probs, alpha)?;
    Ok(avar_sorted_unchecked(values, probs, alpha))
}

fn avar_sorted_unchecked(values: &[f64], probs: &[f64], alpha: f64) -> (f64, f64) {
    if alpha == 1.0 {
        let mean = values.iter().zip(probs).map(|(z, p)| z * p).sum();
        let tau = values
            .iter()
            .zip(probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(z, _)| *z)
            .fold(f64::INFINITY, f64::min);
        return (mean, tau);
    }
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| probs[i] > 0.0).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    // Fill mass α from the top of the distribution.
    let mut mass = 0.0;
    let mut acc = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let p = probs[idx[k]];
        if mass + p >= alpha {
            acc += (alpha - mass) * values[idx[k]];
            break;
        }
        mass += p;
        acc += p * values[idx[k]];
        k += 1;
    }
    let k = k.min(idx.len() - 1);
    let value = acc / alpha;
    // The objective is flat between the quantile and the next lower value when the
    // quantile's mass is used up exactly.
    let objective = |tau: f64| {
        tau + idx
            .iter()
            .map(|&i| probs[i] * (values[i] - tau).max(0.0))
            .sum::<f64>()
            / alpha
    };
    let mut tau = values[idx[k]];
    for &i in &idx[k + 1..] {
        if values[i] < tau && objective(values[i]) <= objective(tau) + 1e-12 * (1.0 + value.abs()) {
            tau = values[i];
        } else {
            break;
        }
    }
    (value, tau)
}

/// `max Σ q_i Z_i` over `0 ≤ q ≤ p / α`, `Σ q = 1`.
pub fn avar_lp(values: &[f64], probs: &[f64], alpha: f64) -> Result<(f64, Vec<f64>)> {
    check_inputs(values, probs, alpha)?;
    let n = values.len();
    let mut lp = LinearProgram::new(values.iter().map(|z| -z).collect()).eq(vec![1.0; n], 1.0);
    for (i, p) in probs.iter().enumerate() {
        lp = lp.bound(i, Bound::between(0.0, p / alpha));
    }
    match solve_lp(&lp)? {
        LpOutcome::Optimal { x, value } => Ok((-value, x)),
        other => Err(Error::Lp(LpError::Degenerate(format!("risk measure program ended {other:?}")))),
    }
}

/// AV@R computed by both forms; disagreement beyond [`AVAR_TOL`] is a numerical failure.
pub fn avar(values: &[f64], probs: &[f64], alpha: f64) -> Result<f64> {
    let (a, _) = avar_sorted(values, probs, alpha)?;
    let (b, _) = avar_lp(values, probs, alpha)?;
    if (a - b).abs() > AVAR_TOL * (1.0 + a.abs()) {
        return Err(Error::Lp(LpError::Degenerate(format!(
            "sorting form {a} and program form {b} disagree"
        ))));
    }
    Ok(a)
}

/// The dual set `{q : 0 ≤ q ≤ ℙ(·|s,a) / α, Σ q = 1}` for every `(s, a)`.
pub fn build_avar_ambiguity(spec: &AvarSpec, inst: &MdpInstance) -> Result<AmbiguityModel> {
    let kernel = spec.kernel(inst)?;
    Ok(AmbiguityModel::new(
        (0..inst.horizon())
            .map(|t| StageAmbiguity::SaRect {
                polytopes: (0..inst.num_states(t))
                    .map(|s| {
                        (0..inst.num_actions(t, s))
                            .map(|a| avar_polytope(kernel.stage(t).row(s, a), spec.alpha))
                            .collect()
                    })
                    .collect(),
            })
            .collect(),
    ))
}

fn avar_polytope(p: &[f64], alpha: f64) -> Polytope {
    let n = p.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let mut lo = vec![0.0; n];
        lo[i] = -1.0;
        a.push(lo);
        b.push(0.0);
        let mut hi = vec![0.0; n];
        hi[i] = 1.0;
        a.push(hi);
        b.push(p[i] / alpha);
    }
    Polytope::Halfspaces {
        a,
        b,
        e: vec![vec![1.0; n]],
        f: vec![1.0],
    }
}

/// `V_t(s) = min_a AV@R_{α, ℙ(·|s,a)}(c_t(s, a, ·) + V_{t+1})`, lowest action on ties.
pub fn solve_nested_risk(inst: &MdpInstance, spec: &AvarSpec) -> Result<(ValueTable, RandomizedPolicy)> {
    let v = inst.validate();
    if !v.is_empty() {
        return Err(Error::InvalidInstance(v));
    }
    let kernel = spec.kernel(inst)?;
    let mut values = ValueTable::with_terminal(inst);
    let mut choice = Vec::new();
    for t in (0..inst.horizon()).rev() {
        let next = values.stage(t + 1).to_vec();
        let mut row = Vec::new();
        for s in 0..inst.num_states(t) {
            let mut best = (f64::INFINITY, 0);
            for a in 0..inst.num_actions(t, s) {
                let z: Vec<f64> = inst.cost_row(t, s, a).iter().zip(&next).map(|(c, v)| c + v).collect();
                let (r, _) = avar_sorted_unchecked(&z, kernel.stage(t).row(s, a), spec.alpha);
                if r < best.0 - 1e-12 {
                    best = (r, a);
                }
            }
            values.set(t, s, best.0);
            row.push(best.1);
        }
        choice.push(row);
    }
    choice.reverse();
    Ok((values, RandomizedPolicy::deterministic(inst, &choice)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;
    use crate::robust::solve_primal;

    #[test]
    fn two_point_lottery() {
        assert!((avar(&[1.0, 0.0], &[0.5, 0.5], 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(avar_sorted(&[1.0, 0.0], &[0.5, 0.5], 1.0).unwrap().0, 0.5);
        assert!(avar(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn smallest_tau_on_flat_stretch() {
        // mass 0.5 sits exactly on the top value, so τ can drop to the next value
        let (v, tau) = avar_sorted(&[3.0, 1.0, 0.0], &[0.5, 0.25, 0.25], 0.5).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        assert_eq!(tau, 1.0);
    }

    #[test]
    fn constant_is_translation_fixed() {
        for alpha in [0.1, 0.5, 1.0] {
            assert!((avar(&[2.0, 2.0, 2.0], &[0.2, 0.3, 0.5], alpha).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_reference_mass_stays_zero() {
        let p = avar_polytope(&[0.5, 0.0, 0.5], 0.25);
        for v in p.vertices(1000).unwrap() {
            assert!(v[1].abs() < 1e-12);
        }
        let mut verts = avar_polytope(&[0.5, 0.5], 0.5).vertices(1000).unwrap();
        verts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(verts.len(), 2);
        assert!((verts[0][1] - 1.0).abs() < 1e-12 && (verts[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nested_equals_robust() {
        let inst = MdpBuilder::new(&[vec!["s"], vec!["lo", "hi"]])
            .actions(0, "s", &["a"])
            .terminal("lo", 1.0)
            .build()
            .unwrap();
        let spec = AvarSpec {
            alpha: 0.5,
            reference: vec![StageKernel::from_rows(vec![vec![vec![0.5, 0.5]]])],
        };
        let (v, _) = solve_nested_risk(&inst, &spec).unwrap();
        assert!((v.get(0, 0) - 1.0).abs() < 1e-12);
        let model = build_avar_ambiguity(&spec, &inst).unwrap();
        let p = solve_primal(&inst, &model).unwrap();
        assert!(p.values.max_abs_diff(&v) < 1e-9);
    }
}

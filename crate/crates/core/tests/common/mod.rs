//! Seeded random instances for integration tests.
#![allow(dead_code)]

use drmdp::ambiguity::{AmbiguityModel, StageAmbiguity};
use drmdp::cost::{CostAmbiguityModel, StageCostAmbiguity};
use drmdp::geometry::{Polytope, UnionOfPolytopes};
use drmdp::mdp::{Kernel, MdpInstance, StageKernel};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random point of the simplex; about one in five draws zeroes an entry.
pub fn distribution(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    if n > 1 && rng.random_bool(0.2) {
        w[rng.random_range(0..n)] = 0.0;
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// `sizes[t]` states at stage `t`, between 1 and `max_actions` actions per state.
pub fn instance(rng: &mut StdRng, sizes: &[usize], max_actions: usize, with_costs: bool) -> MdpInstance {
    let h = sizes.len() - 1;
    let states: Vec<Vec<String>> = sizes
        .iter()
        .enumerate()
        .map(|(t, &n)| (0..n).map(|i| format!("s{t}_{i}")).collect())
        .collect();
    let mut actions = Vec::new();
    let mut costs = Vec::new();
    for t in 0..h {
        let mut sa = Vec::new();
        let mut sc = Vec::new();
        for _ in 0..sizes[t] {
            let k = rng.random_range(1..=max_actions);
            sa.push((0..k).map(|a| format!("a{a}")).collect());
            sc.push(
                (0..k)
                    .map(|_| {
                        (0..sizes[t + 1])
                            .map(|_| if with_costs { rng.random::<f64>() } else { 0.0 })
                            .collect()
                    })
                    .collect(),
            );
        }
        actions.push(sa);
        costs.push(sc);
    }
    let terminal = (0..sizes[h]).map(|_| rng.random::<f64>()).collect();
    MdpInstance::new(states, actions, costs, terminal, 0).unwrap()
}

/// Horizon 1 to 3, up to 4 states per later stage, up to 3 actions.
pub fn small_instance(rng: &mut StdRng, with_costs: bool) -> MdpInstance {
    let h = rng.random_range(1..=3);
    let mut sizes = vec![1];
    for _ in 0..h {
        sizes.push(rng.random_range(1..=4));
    }
    instance(rng, &sizes, 3, with_costs)
}

pub fn stage_kernel(rng: &mut StdRng, inst: &MdpInstance, t: usize) -> StageKernel {
    let n = inst.num_states(t + 1);
    StageKernel::from_rows(
        (0..inst.num_states(t))
            .map(|s| (0..inst.num_actions(t, s)).map(|_| distribution(rng, n)).collect())
            .collect(),
    )
}

pub fn kernel(rng: &mut StdRng, inst: &MdpInstance) -> Kernel {
    Kernel::new(inst, (0..inst.horizon()).map(|t| stage_kernel(rng, inst, t)).collect()).unwrap()
}

pub fn finite_model(rng: &mut StdRng, inst: &MdpInstance, kernels: usize) -> AmbiguityModel {
    AmbiguityModel::new(
        (0..inst.horizon())
            .map(|t| StageAmbiguity::Finite {
                kernels: (0..kernels).map(|_| stage_kernel(rng, inst, t)).collect(),
            })
            .collect(),
    )
}

pub fn sa_rect_model(rng: &mut StdRng, inst: &MdpInstance, vertices: usize) -> AmbiguityModel {
    AmbiguityModel::new(
        (0..inst.horizon())
            .map(|t| {
                let n = inst.num_states(t + 1);
                StageAmbiguity::SaRect {
                    polytopes: (0..inst.num_states(t))
                        .map(|s| {
                            (0..inst.num_actions(t, s))
                                .map(|_| Polytope::Vertices((0..vertices).map(|_| distribution(rng, n)).collect()))
                                .collect()
                        })
                        .collect(),
                }
            })
            .collect(),
    )
}

/// Each state's joint marginal is a union of one or two random polytopes.
pub fn s_rect_model(rng: &mut StdRng, inst: &MdpInstance) -> AmbiguityModel {
    AmbiguityModel::new(
        (0..inst.horizon())
            .map(|t| {
                let n = inst.num_states(t + 1);
                StageAmbiguity::SRect {
                    marginals: (0..inst.num_states(t))
                        .map(|s| {
                            let pieces = (0..rng.random_range(1..=2))
                                .map(|_| {
                                    Polytope::Vertices(
                                        (0..rng.random_range(1..=3))
                                            .map(|_| {
                                                (0..inst.num_actions(t, s))
                                                    .flat_map(|_| distribution(rng, n))
                                                    .collect()
                                            })
                                            .collect(),
                                    )
                                })
                                .collect();
                            UnionOfPolytopes::new(pieces).unwrap()
                        })
                        .collect(),
                }
            })
            .collect(),
    )
}

fn cost_table(rng: &mut StdRng, inst: &MdpInstance, t: usize) -> Vec<Vec<Vec<f64>>> {
    (0..inst.num_states(t))
        .map(|s| {
            (0..inst.num_actions(t, s))
                .map(|_| (0..inst.num_states(t + 1)).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect()
}

/// Finite cost sets when `finite`, otherwise per-(s, a) vertex lists.
pub fn cost_model(rng: &mut StdRng, inst: &MdpInstance, finite: bool) -> CostAmbiguityModel {
    CostAmbiguityModel::new(
        (0..inst.horizon())
            .map(|t| {
                if finite {
                    StageCostAmbiguity::Finite {
                        tables: (0..rng.random_range(1..=3)).map(|_| cost_table(rng, inst, t)).collect(),
                    }
                } else {
                    let n = inst.num_states(t + 1);
                    StageCostAmbiguity::SaRect {
                        polytopes: (0..inst.num_states(t))
                            .map(|s| {
                                (0..inst.num_actions(t, s))
                                    .map(|_| {
                                        Polytope::Vertices(
                                            (0..rng.random_range(1..=3))
                                                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                                                .collect(),
                                        )
                                    })
                                    .collect()
                            })
                            .collect(),
                    }
                }
            })
            .collect(),
    )
}

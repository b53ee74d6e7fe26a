//! Exact ground truth for tiny instances.
//!
//! `solve_joint_dp` runs backward induction over the full product state space
//! with every action profile that pulls at most `k` arms. It is exponential in
//! the number of arms and only meant for checking the heuristic and the
//! relaxation on toy problems.

use crate::arm::ArmModel;
use crate::error::{Error, Result};
use crate::relaxation::OccupancyTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCaps {
    pub max_joint_states: usize,
    pub max_horizon: usize,
    pub max_arms: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps { max_joint_states: 10_000, max_horizon: 6, max_arms: 3 }
    }
}

/// Optimal reward-to-go over the joint state space.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDp {
    pub budget_k: usize,
    pub horizon: usize,
    /// Mixed-radix strides: joint index is `sum_i s_i * strides[i]`.
    pub strides: Vec<usize>,
    pub num_joint_states: usize,
    /// Indexed `[t][joint]`, `t in 0..=T`.
    value: Vec<f64>,
}

impl JointDp {
    pub fn joint_index(&self, states: &[usize]) -> usize {
        states.iter().zip(&self.strides).map(|(s, st)| s * st).sum()
    }

    pub fn value(&self, joint: usize, t: usize) -> f64 {
        self.value[t * self.num_joint_states + joint]
    }
}

fn check_caps(arms: &[ArmModel], horizon: usize, caps: &OracleCaps) -> Result<usize> {
    if arms.len() > caps.max_arms {
        return Err(Error::InstanceTooLarge(format!("{} arms > cap {}", arms.len(), caps.max_arms)));
    }
    if horizon > caps.max_horizon {
        return Err(Error::InstanceTooLarge(format!("horizon {horizon} > cap {}", caps.max_horizon)));
    }
    let mut joint = 1usize;
    for arm in arms {
        joint = joint
            .checked_mul(arm.num_states())
            .filter(|&j| j <= caps.max_joint_states)
            .ok_or_else(|| {
                Error::InstanceTooLarge(format!("joint state space exceeds cap {}", caps.max_joint_states))
            })?;
    }
    Ok(joint)
}

/// Every joint action with at most `k` non-idle components.
fn feasible_actions(arms: &[ArmModel], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for arm in arms {
        let mut next = Vec::new();
        for prefix in &out {
            let used = prefix.iter().zip(arms).filter(|(&a, arm)| !arm.is_idle(a)).count();
            let mut with_idle = prefix.clone();
            with_idle.push(arm.idle_action());
            next.push(with_idle);
            if used < k {
                for a in arm.pull_actions() {
                    let mut p = prefix.clone();
                    p.push(a);
                    next.push(p);
                }
            }
        }
        out = next;
    }
    out
}

pub fn solve_joint_dp(arms: &[ArmModel], k: usize, horizon: usize, caps: &OracleCaps) -> Result<JointDp> {
    if k < 1 || k > arms.len() {
        return Err(Error::InvalidBudget { k, n: arms.len() });
    }
    let num_joint = check_caps(arms, horizon, caps)?;
    let mut strides = vec![1usize; arms.len()];
    for i in 1..arms.len() {
        strides[i] = strides[i - 1] * arms[i - 1].num_states();
    }
    let actions = feasible_actions(arms, k);

    let mut value = vec![0.0; (horizon + 1) * num_joint];
    let mut states = vec![0usize; arms.len()];
    let mut branches: Vec<(usize, f64)> = Vec::new();
    let mut scratch: Vec<(usize, f64)> = Vec::new();

    for t in (0..horizon).rev() {
        let (head, tail) = value.split_at_mut((t + 1) * num_joint);
        let next = &tail[..num_joint];
        let current = &mut head[t * num_joint..];
        for joint in 0..num_joint {
            let mut rem = joint;
            for (i, arm) in arms.iter().enumerate() {
                states[i] = rem % arm.num_states();
                rem /= arm.num_states();
            }
            let mut best = f64::NEG_INFINITY;
            for profile in &actions {
                let mut reward = 0.0;
                let mut base = joint;
                branches.clear();
                branches.push((0, 1.0));
                for (i, (&a, arm)) in profile.iter().zip(arms).enumerate() {
                    if arm.is_idle(a) {
                        continue;
                    }
                    reward += arm.reward(states[i], a);
                    base -= states[i] * strides[i];
                    scratch.clear();
                    for &(offset, p) in &branches {
                        for (s2, q) in arm.transitions(states[i], a) {
                            scratch.push((offset + s2 * strides[i], p * q));
                        }
                    }
                    std::mem::swap(&mut branches, &mut scratch);
                }
                let cont: f64 = branches.iter().map(|&(off, p)| p * next[base + off]).sum();
                best = best.max(reward + cont);
            }
            current[joint] = best;
        }
    }

    Ok(JointDp { budget_k: k, horizon, strides, num_joint_states: num_joint, value })
}

/// Optimal expected reward `J*` from the joint initial state.
pub fn exact_optimal_value(arms: &[ArmModel], k: usize, horizon: usize) -> Result<f64> {
    exact_optimal_value_with_caps(arms, k, horizon, &OracleCaps::default())
}

pub fn exact_optimal_value_with_caps(arms: &[ArmModel], k: usize, horizon: usize, caps: &OracleCaps) -> Result<f64> {
    let dp = solve_joint_dp(arms, k, horizon, caps)?;
    let start: Vec<usize> = arms.iter().map(ArmModel::initial_state).collect();
    Ok(dp.value(dp.joint_index(&start), 0))
}

/// Expected reward collected on the 1st, 2nd, ... pull of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PullCountProfile {
    /// `increments[m]` is `E[R^{m+1}] - E[R^m]`, the reward of pull number `m + 1`.
    pub increments: Vec<f64>,
}

impl PullCountProfile {
    pub fn total(&self) -> f64 {
        self.increments.iter().sum()
    }
}

/// Propagates the arm's relaxed policy on the chain `(state, pulls so far, t)`.
///
/// The policy is the per-cell normalization of `occupancy`; empty cells idle,
/// exactly as the packing heuristic samples.
pub fn exact_pull_count_profile(arm: &ArmModel, occupancy: &OccupancyTable) -> PullCountProfile {
    let horizon = occupancy.horizon();
    let ns = arm.num_states();
    let idle = arm.idle_action();
    let width = horizon + 1;
    let mut increments = vec![0.0; horizon];
    // `mass[s * width + pulls]`
    let mut mass = vec![0.0; ns * width];
    let mut next = vec![0.0; ns * width];
    mass[arm.initial_state() * width] = 1.0;

    for t in 0..horizon {
        next.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..ns {
            let cell = occupancy.cell(s, t);
            let total: f64 = cell.iter().sum();
            for pulls in 0..=t.min(horizon - 1) {
                let p = mass[s * width + pulls];
                if p == 0.0 {
                    continue;
                }
                if !(total > 0.0) {
                    next[s * width + pulls] += p;
                    continue;
                }
                for (a, &w) in cell.iter().enumerate() {
                    if w <= 0.0 {
                        continue;
                    }
                    let q = p * w / total;
                    if a == idle {
                        next[s * width + pulls] += q;
                    } else {
                        increments[pulls] += q * arm.reward(s, a);
                        for (s2, pr) in arm.transitions(s, a) {
                            next[s2 * width + pulls + 1] += q * pr;
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    PullCountProfile { increments }
}

/// Whether increments are nonincreasing up to `tol`.
pub fn check_decreasing_returns(profile: &PullCountProfile, tol: f64) -> bool {
    profile.increments.windows(2).all(|w| w[1] <= w[0] + tol)
}

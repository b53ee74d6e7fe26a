//! The irrevocable packing heuristic.
//!
//! Arms are ranked once by `E[R_i] / E[T_i]` under the relaxed solution. The
//! top `k` start active. Each active arm replays its relaxed policy on a local
//! clock: idle draws are skipped (advancing only the local clock) until a pull
//! is drawn, and an arm whose local clock runs out without a pull is discarded
//! for good and replaced by the best-ranked arm not yet tried.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::relaxation::{OccupancyTable, RelaxedSolution};

/// Arms with expected pulls at or below this are never played.
pub const ZERO_PULLS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmRanking {
    /// Arm indices, best ratio first.
    pub order: Vec<usize>,
    /// `E[R_i] / E[T_i]` per arm index; `NaN` for dropped arms.
    pub ratios: Vec<f64>,
    pub dropped: Vec<usize>,
}

pub fn rank_arms(solution: &RelaxedSolution) -> ArmRanking {
    rank_by_expectations(solution.tables.iter().map(|t| (t.expected_reward, t.expected_pulls)))
}

/// Ranking from `(E[R_i], E[T_i])` pairs in arm-index order.
pub fn rank_by_expectations(expectations: impl IntoIterator<Item = (f64, f64)>) -> ArmRanking {
    let mut ratios = Vec::new();
    let mut order = Vec::new();
    let mut dropped = Vec::new();
    for (i, (reward, pulls)) in expectations.into_iter().enumerate() {
        if pulls <= ZERO_PULLS {
            ratios.push(f64::NAN);
            dropped.push(i);
        } else {
            ratios.push(reward / pulls);
            order.push(i);
        }
    }
    order.sort_by(|&a, &b| ratios[b].total_cmp(&ratios[a]).then(a.cmp(&b)));
    ArmRanking { order, ratios, dropped }
}

/// Draws an action at `(state, local_time)` in proportion to the relaxed occupancy.
///
/// Cells with no mass return the idle action.
pub fn sample_local_action<R: Rng + ?Sized>(
    arm: &ArmModel,
    occupancy: &OccupancyTable,
    state: usize,
    local_time: usize,
    rng: &mut R,
) -> usize {
    let cell = occupancy.cell(state, local_time);
    let total: f64 = cell.iter().sum();
    if !(total > 0.0) {
        return arm.idle_action();
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = arm.idle_action();
    for (a, &p) in cell.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = a;
        if u < acc {
            return a;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullRecord {
    pub t: usize,
    pub arm: usize,
    pub action: usize,
    pub state_before: usize,
    pub state_after: usize,
    pub reward: f64,
}

/// One trajectory of the heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingRun {
    pub num_arms: usize,
    pub budget_k: usize,
    pub horizon: usize,
    pub active: Vec<usize>,
    /// Remaining candidates, best-ranked first.
    pub available: Vec<usize>,
    pub discarded: Vec<usize>,
    pub local_time: Vec<usize>,
    pub current_state: Vec<usize>,
    pub pending_action: Vec<usize>,
    pub total_reward: f64,
    /// `pull_log[t]` lists every pull made at global step `t`.
    pub pull_log: Vec<Vec<PullRecord>>,
    /// `(t, arm)`: arm discarded while selecting actions for step `t`.
    pub discard_events: Vec<(usize, usize)>,
    /// `(t, arm)`: arm promoted from the available pool during step `t`.
    pub activation_events: Vec<(usize, usize)>,
}

impl PackingRun {
    /// Discards that pulled a replacement into the active set.
    pub fn replacements(&self) -> usize {
        self.activation_events.len()
    }
}

/// Runs one trajectory of the packing heuristic.
pub fn run_packing<R: Rng + ?Sized>(
    arms: &[ArmModel],
    solution: &RelaxedSolution,
    k: usize,
    horizon: usize,
    rng: &mut R,
) -> PackingRun {
    let ranking = rank_arms(solution);
    run_packing_ranked(arms, solution, &ranking, k, horizon, rng)
}

/// As [`run_packing`], reusing a precomputed ranking.
pub fn run_packing_ranked<R: Rng + ?Sized>(
    arms: &[ArmModel],
    solution: &RelaxedSolution,
    ranking: &ArmRanking,
    k: usize,
    horizon: usize,
    rng: &mut R,
) -> PackingRun {
    let n = arms.len();
    let split = k.min(ranking.order.len());
    // Active arms are kept in ranking order; selection below scans them in that order.
    let mut active: Vec<usize> = ranking.order[..split].to_vec();
    let mut available: VecDeque<usize> = ranking.order[split..].iter().copied().collect();
    let mut discarded = Vec::new();
    let mut local_time = vec![0usize; n];
    let mut state: Vec<usize> = arms.iter().map(ArmModel::initial_state).collect();
    let mut pending: Vec<usize> = arms.iter().map(ArmModel::idle_action).collect();
    let mut total_reward = 0.0;
    let mut pull_log = Vec::with_capacity(horizon);
    let mut discard_events = Vec::new();
    let mut activation_events = Vec::new();

    for t in 0..horizon {
        while let Some(pos) = active.iter().position(|&i| arms[i].is_idle(pending[i])) {
            let i = active[pos];
            let table = &solution.tables[i];
            while arms[i].is_idle(pending[i]) && local_time[i] < horizon {
                pending[i] = sample_local_action(&arms[i], table, state[i], local_time[i], rng);
                local_time[i] += 1;
            }
            if local_time[i] == horizon && arms[i].is_idle(pending[i]) {
                active.remove(pos);
                discarded.push(i);
                discard_events.push((t, i));
                if let Some(j) = available.pop_front() {
                    // Every available arm ranks below every arm already tried.
                    active.push(j);
                    activation_events.push((t, j));
                }
            }
        }

        let mut pulls = Vec::with_capacity(active.len());
        for &i in &active {
            let a = pending[i];
            let before = state[i];
            let reward = arms[i].reward(before, a);
            let after = arms[i].sample_next(before, a, rng.gen::<f64>());
            state[i] = after;
            total_reward += reward;
            pending[i] = arms[i].idle_action();
            pulls.push(PullRecord { t, arm: i, action: a, state_before: before, state_after: after, reward });
        }
        pull_log.push(pulls);
    }

    PackingRun {
        num_arms: n,
        budget_k: k,
        horizon,
        active,
        available: available.into_iter().collect(),
        discarded,
        local_time,
        current_state: state,
        pending_action: pending,
        total_reward,
        pull_log,
        discard_events,
        activation_events,
    }
}

/// Checks the structural guarantees of a completed run.
///
/// Holds iff every step pulls at most `k` distinct arms, each arm's pulls
/// occupy one contiguous block of global steps, no arm is pulled at or after
/// its discard step or discarded twice, and at most `n - k` arms were promoted
/// beyond the initial active set.
pub fn verify_irrevocability(run: &PackingRun) -> bool {
    let n = run.num_arms;
    let mut pull_times: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, step) in run.pull_log.iter().enumerate() {
        if step.len() > run.budget_k {
            return false;
        }
        for rec in step {
            if rec.arm >= n || rec.t != t {
                return false;
            }
            if pull_times[rec.arm].last() == Some(&t) {
                return false;
            }
            pull_times[rec.arm].push(t);
        }
    }

    let mut discard_time = vec![None; n];
    for &(t, i) in &run.discard_events {
        if i >= n || discard_time[i].is_some() {
            return false;
        }
        discard_time[i] = Some(t);
    }

    for (i, times) in pull_times.iter().enumerate() {
        if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
            if last - first + 1 != times.len() {
                return false;
            }
            if matches!(discard_time[i], Some(d) if last >= d) {
                return false;
            }
        }
    }

    run.activation_events.len() <= n.saturating_sub(run.budget_k)
}

/// Deterministic RNG for trajectory `index` under `base_seed`.
///
/// Trajectory `i` uses ChaCha8 keyed by `base_seed` on stream `i`, so any
/// single trajectory can be replayed without generating the others.
pub fn trajectory_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Summary written by the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub trajectories: usize,
    pub mean_reward: f64,
    pub std_err: f64,
    pub discards_mean: f64,
}

/// Aggregate over many trajectories, with structural diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationStats {
    pub rewards: Vec<f64>,
    pub mean_reward: f64,
    pub std_err: f64,
    pub discards_mean: f64,
    /// Trajectories failing [`verify_irrevocability`].
    pub irrevocability_violations: usize,
    pub max_pulls_per_step: usize,
    pub max_replacements: usize,
    pub max_discards: usize,
}

impl SimulationStats {
    pub fn summary(&self) -> SimulationSummary {
        SimulationSummary {
            trajectories: self.rewards.len(),
            mean_reward: self.mean_reward,
            std_err: self.std_err,
            discards_mean: self.discards_mean,
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `trajectories` independent packing runs seeded from `base_seed`.
///
/// Trajectories run in parallel; results are reduced in index order so the
/// output does not depend on the thread count.
pub fn simulate(
    arms: &[ArmModel],
    solution: &RelaxedSolution,
    k: usize,
    horizon: usize,
    trajectories: usize,
    base_seed: u64,
) -> SimulationStats {
    let ranking = rank_arms(solution);
    let per_run: Vec<(f64, usize, bool, usize, usize)> = (0..trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(base_seed, i as u64);
            let run = run_packing_ranked(arms, solution, &ranking, k, horizon, &mut rng);
            let widest = run.pull_log.iter().map(Vec::len).max().unwrap_or(0);
            (
                run.total_reward,
                run.discard_events.len(),
                verify_irrevocability(&run),
                widest,
                run.replacements(),
            )
        })
        .collect();

    let rewards: Vec<f64> = per_run.iter().map(|r| r.0).collect();
    let (mean_reward, std_err) = mean_and_std_err(&rewards);
    let discards_mean = per_run.iter().map(|r| r.1 as f64).sum::<f64>() / trajectories.max(1) as f64;
    SimulationStats {
        mean_reward,
        std_err,
        discards_mean,
        irrevocability_violations: per_run.iter().filter(|r| !r.2).count(),
        max_pulls_per_step: per_run.iter().map(|r| r.3).max().unwrap_or(0),
        max_replacements: per_run.iter().map(|r| r.4).max().unwrap_or(0),
        max_discards: per_run.iter().map(|r| r.1).max().unwrap_or(0),
        rewards,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::build_tabular_arm;
    use crate::relaxation::solve_rlp;

    fn unit_arm(r: f64) -> ArmModel {
        build_tabular_arm(1, 2, 1, &[vec![r, 0.0]], &[vec![vec![1.0], vec![1.0]]], 0)
            .unwrap()
            .0
    }

    fn always_pull(arm: &ArmModel, horizon: usize) -> OccupancyTable {
        let mut v = vec![0.0; horizon * 2];
        for t in 0..horizon {
            v[t * 2] = 1.0;
        }
        OccupancyTable::from_values(arm, horizon, v).unwrap()
    }

    fn solution_of(tables: Vec<OccupancyTable>) -> RelaxedSolution {
        RelaxedSolution {
            tables,
            lambda_feas: 0.0,
            lambda_infeas: 0.0,
            dual_value: 0.0,
            alpha_blend: 1.0,
            epsilon: 1e-6,
            iterations: 0,
        }
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_by_expectations([(2.0, 1.0), (1.0, 1.0)]).order, vec![0, 1]);
        assert_eq!(rank_by_expectations([(1.0, 1.0), (1.0, 1.0)]).order, vec![0, 1]);
        let r = rank_by_expectations([(1.0, 1.0), (0.0, 0.0)]);
        assert_eq!(r.order, vec![0]);
        assert_eq!(r.dropped, vec![1]);
        assert_eq!(rank_by_expectations([(1.0, 2.0), (1.0, 1.0)]).order, vec![1, 0]);
    }

    #[test]
    fn single_atom_cell_always_pulls() {
        let arm = unit_arm(1.0);
        let mut v = vec![0.0; 2];
        v[0] = 0.3;
        let table = OccupancyTable::from_values(&arm, 1, v).unwrap();
        let mut rng = trajectory_rng(3, 0);
        for _ in 0..100 {
            assert_eq!(sample_local_action(&arm, &table, 0, 0, &mut rng), 0);
        }
    }

    #[test]
    fn empty_cell_idles() {
        let arm = unit_arm(1.0);
        let table = OccupancyTable::from_values(&arm, 1, vec![0.0, 0.0]).unwrap();
        let mut rng = trajectory_rng(3, 0);
        assert_eq!(sample_local_action(&arm, &table, 0, 0, &mut rng), 1);
    }

    #[test]
    fn half_mass_pulls_half_the_time() {
        let arm = unit_arm(1.0);
        let table = OccupancyTable::from_values(&arm, 1, vec![0.5, 0.5]).unwrap();
        let mut rng = trajectory_rng(11, 0);
        let n = 40_000;
        let pulls = (0..n).filter(|_| sample_local_action(&arm, &table, 0, 0, &mut rng) == 0).count();
        let frac = pulls as f64 / n as f64;
        // 4 standard deviations of a Bernoulli(1/2) mean.
        assert!((frac - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn first_ranked_arm_takes_the_budget() {
        let arms = vec![unit_arm(3.0), unit_arm(1.0)];
        let sol = solution_of(arms.iter().map(|a| always_pull(a, 2)).collect());
        let run = run_packing(&arms, &sol, 1, 2, &mut trajectory_rng(0, 0));
        assert_eq!(run.total_reward, 6.0);
        assert!(run.pull_log.iter().all(|s| s.len() == 1 && s[0].arm == 0));
        assert!(run.activation_events.is_empty());
        assert_eq!(run.available, vec![1]);
        assert!(verify_irrevocability(&run));
    }

    #[test]
    fn no_contention_pulls_everything() {
        let arms = vec![unit_arm(1.0), unit_arm(2.0), unit_arm(0.5)];
        let sol = solution_of(arms.iter().map(|a| always_pull(a, 4)).collect());
        let run = run_packing(&arms, &sol, 3, 4, &mut trajectory_rng(0, 0));
        assert!(run.pull_log.iter().all(|s| s.len() == 3));
        assert!(run.discard_events.is_empty());
        assert_eq!(run.total_reward, 4.0 * 3.5);
    }

    #[test]
    fn example_one_outcomes() {
        let arms = vec![unit_arm(1.0), unit_arm(1.0)];
        let sol = solve_rlp(&arms, 1, 1, 1e-6).unwrap();
        let mut total = 0.0;
        let n = 20_000;
        for i in 0..n {
            let run = run_packing(&arms, &sol, 1, 1, &mut trajectory_rng(5, i));
            assert!(run.total_reward == 0.0 || run.total_reward == 1.0);
            assert!(verify_irrevocability(&run));
            total += run.total_reward;
        }
        let mean = total / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((mean - 0.75).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn pull_after_discard_is_caught() {
        let arms = vec![unit_arm(1.0), unit_arm(1.0)];
        let sol = solution_of(arms.iter().map(|a| always_pull(a, 3)).collect());
        let mut run = run_packing(&arms, &sol, 1, 3, &mut trajectory_rng(0, 0));
        assert!(verify_irrevocability(&run));
        run.discard_events.push((1, 0));
        assert!(!verify_irrevocability(&run));
    }

    #[test]
    fn gap_in_pulls_is_caught() {
        let arms = vec![unit_arm(1.0), unit_arm(1.0)];
        let sol = solution_of(arms.iter().map(|a| always_pull(a, 3)).collect());
        let mut run = run_packing(&arms, &sol, 1, 3, &mut trajectory_rng(0, 0));
        run.pull_log[1].clear();
        assert!(!verify_irrevocability(&run));
    }

    #[test]
    fn over_budget_step_is_caught() {
        let arms = vec![unit_arm(1.0), unit_arm(1.0)];
        let sol = solution_of(arms.iter().map(|a| always_pull(a, 2)).collect());
        let mut run = run_packing(&arms, &sol, 1, 2, &mut trajectory_rng(0, 0));
        let extra = PullRecord { t: 0, arm: 1, action: 0, state_before: 0, state_after: 0, reward: 1.0 };
        run.pull_log[0].push(extra);
        assert!(!verify_irrevocability(&run));
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let arms = vec![unit_arm(1.0), unit_arm(1.0)];
        let sol = solve_rlp(&arms, 1, 1, 1e-6).unwrap();
        let a = simulate(&arms, &sol, 1, 1, 500, 9);
        let b = simulate(&arms, &sol, 1, 1, 500, 9);
        assert_eq!(a, b);
        let single = run_packing(&arms, &sol, 1, 1, &mut trajectory_rng(9, 17));
        assert_eq!(single.total_reward, a.rewards[17]);
    }

    #[test]
    fn std_err_of_constant_is_zero() {
        assert_eq!(mean_and_std_err(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}

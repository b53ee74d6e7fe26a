//! Lagrangian solver for the relaxed (expected-budget) problem.
//!
//! Coupling across arms is a single constraint on total expected pulls,
//! `sum_i T_i <= kT`. Pricing each pull at `lambda` decouples the arms into
//! independent finite-horizon DPs. Bisection on `lambda` brackets the optimal
//! multiplier; since the dual can be kinked there, the returned occupancies are
//! a convex blend of the solutions at both ends of the bracket, scaled so the
//! pull budget is met exactly when the infeasible side overshoots.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::error::{Error, Result};

/// Occupancy entries below this are treated as round-off and zeroed.
pub const OCCUPANCY_FLOOR: f64 = 1e-15;

/// State-action frequencies `pi(s, a, t)` of one arm over `t in 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    idle: usize,
    /// Indexed `[t][state][action]`.
    values: Vec<f64>,
    pub expected_reward: f64,
    pub expected_pulls: f64,
}

impl OccupancyTable {
    /// Wraps raw `[t][state][action]` values for `arm`, computing `R_i` and `T_i`.
    pub fn from_values(arm: &ArmModel, horizon: usize, values: Vec<f64>) -> Result<Self> {
        let expected = horizon * arm.num_states() * arm.num_actions();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "occupancy has {} entries, expected {expected}",
                values.len()
            )));
        }
        let mut table = OccupancyTable {
            horizon,
            num_states: arm.num_states(),
            num_actions: arm.num_actions(),
            idle: arm.idle_action(),
            values,
            expected_reward: 0.0,
            expected_pulls: 0.0,
        };
        table.recompute_totals(arm);
        Ok(table)
    }

    fn recompute_totals(&mut self, arm: &ArmModel) {
        let mut reward = 0.0;
        let mut idle_mass = 0.0;
        for t in 0..self.horizon {
            for s in 0..self.num_states {
                for (a, &p) in self.cell(s, t).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    reward += p * arm.reward(s, a);
                    if a == self.idle {
                        idle_mass += p;
                    }
                }
            }
        }
        self.expected_reward = reward;
        self.expected_pulls = (self.horizon as f64 - idle_mass).max(0.0);
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn offset(&self, s: usize, t: usize) -> usize {
        (t * self.num_states + s) * self.num_actions
    }

    pub fn get(&self, s: usize, a: usize, t: usize) -> f64 {
        self.values[self.offset(s, t) + a]
    }

    /// Action masses `pi(s, ., t)`.
    #[inline]
    pub fn cell(&self, s: usize, t: usize) -> &[f64] {
        let o = self.offset(s, t);
        &self.values[o..o + self.num_actions]
    }

    pub fn state_mass(&self, s: usize, t: usize) -> f64 {
        self.cell(s, t).iter().sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nested `[t][state][action]` copy, as written to solution files.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.horizon)
            .map(|t| (0..self.num_states).map(|s| self.cell(s, t).to_vec()).collect())
            .collect()
    }

    /// `weight * a + (1 - weight) * b`.
    pub fn blend(a: &OccupancyTable, b: &OccupancyTable, weight: f64, arm: &ArmModel) -> OccupancyTable {
        debug_assert_eq!(a.values.len(), b.values.len());
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| weight * x + (1.0 - weight) * y)
            .collect();
        let mut table = OccupancyTable { values, ..a.clone() };
        table.recompute_totals(arm);
        table
    }

    /// Largest absolute violation of the flow-conservation, initial-state and
    /// per-period normalization constraints.
    pub fn max_constraint_violation(&self, arm: &ArmModel) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..self.num_states {
            let target = if s == arm.initial_state() { 1.0 } else { 0.0 };
            worst = worst.max((self.state_mass(s, 0) - target).abs());
        }
        let mut inflow = vec![0.0; self.num_states];
        for t in 1..self.horizon {
            inflow.iter_mut().for_each(|x| *x = 0.0);
            for s in 0..self.num_states {
                for (a, &p) in self.cell(s, t - 1).iter().enumerate() {
                    if p != 0.0 {
                        for (next, q) in arm.transitions(s, a) {
                            inflow[next] += p * q;
                        }
                    }
                }
            }
            for s in 0..self.num_states {
                worst = worst.max((self.state_mass(s, t) - inflow[s]).abs());
            }
        }
        for t in 0..self.horizon {
            let total: f64 = (0..self.num_states).map(|s| self.state_mass(s, t)).sum();
            worst = worst.max((total - 1.0).abs());
        }
        worst
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Optimal occupancy for `R_i - lambda * T_i` and the optimal objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub table: OccupancyTable,
    pub objective: f64,
}

/// Best response of one arm to pull price `lambda`.
///
/// Backward induction on `r(s,a) - lambda * [a != idle]`, with ties resolved
/// toward idle and then toward the lowest action index, followed by a forward
/// pass from the initial state.
pub fn solve_arm_subproblem(arm: &ArmModel, lambda: f64, horizon: usize) -> Subproblem {
    let ns = arm.num_states();
    let na = arm.num_actions();
    let idle = arm.idle_action();

    let mut policy = vec![idle; horizon * ns];
    let mut value_next = vec![0.0; ns];
    let mut value = vec![0.0; ns];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            // Values of states not yet reachable at `t` are never read.
            if arm.earliest_time(s) > t {
                continue;
            }
            let mut best_action = idle;
            let mut best = value_next[s];
            for a in arm.pull_actions() {
                let cont: f64 = arm.transitions(s, a).map(|(next, p)| p * value_next[next]).sum();
                let q = arm.reward(s, a) - lambda + cont;
                if q > best {
                    best = q;
                    best_action = a;
                }
            }
            value[s] = best;
            policy[t * ns + s] = best_action;
        }
        std::mem::swap(&mut value, &mut value_next);
    }
    let objective = value_next[arm.initial_state()];

    let mut values = vec![0.0; horizon * ns * na];
    let mut mass = vec![0.0; ns];
    let mut next_mass = vec![0.0; ns];
    mass[arm.initial_state()] = 1.0;
    for t in 0..horizon {
        next_mass.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..ns {
            let p = mass[s];
            if p == 0.0 {
                continue;
            }
            let a = policy[t * ns + s];
            values[(t * ns + s) * na + a] = p;
            for (next, q) in arm.transitions(s, a) {
                next_mass[next] += p * q;
            }
        }
        std::mem::swap(&mut mass, &mut next_mass);
    }
    apply_floor(&mut values, horizon, ns * na);

    let table = OccupancyTable::from_values(arm, horizon, values).expect("dimensions match by construction");
    Subproblem { table, objective }
}

/// Clamps sub-floor entries to zero and rescales each period to total mass one.
fn apply_floor(values: &mut [f64], horizon: usize, period_len: usize) {
    for t in 0..horizon {
        let period = &mut values[t * period_len..(t + 1) * period_len];
        let mut clamped = false;
        for v in period.iter_mut() {
            if *v < OCCUPANCY_FLOOR && *v != 0.0 {
                *v = 0.0;
                clamped = true;
            }
        }
        if clamped {
            let total: f64 = period.iter().sum();
            if total > 0.0 {
                period.iter_mut().for_each(|v| *v /= total);
            }
        }
    }
}

fn solve_all(arms: &[ArmModel], lambda: f64, horizon: usize) -> Vec<Subproblem> {
    arms.par_iter().map(|arm| solve_arm_subproblem(arm, lambda, horizon)).collect()
}

fn total_pulls(subs: &[Subproblem]) -> f64 {
    subs.iter().map(|s| s.table.expected_pulls).sum()
}

fn total_objective(subs: &[Subproblem]) -> f64 {
    subs.iter().map(|s| s.objective).sum()
}

/// Dual function `g(lambda) = lambda k T + sum_i max_pi (R_i - lambda T_i)`.
pub fn dual_value(arms: &[ArmModel], lambda: f64, k: usize, horizon: usize) -> f64 {
    lambda * (k * horizon) as f64 + total_objective(&solve_all(arms, lambda, horizon))
}

/// `(lambda, sum_i T_i(pi_i(lambda)))` along a grid of pull prices.
pub fn pull_schedule_monotonicity_probe(arms: &[ArmModel], horizon: usize, lambda_grid: &[f64]) -> Vec<(f64, f64)> {
    lambda_grid
        .iter()
        .map(|&lambda| (lambda, total_pulls(&solve_all(arms, lambda, horizon))))
        .collect()
}

/// Feasible relaxed solution with its dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub tables: Vec<OccupancyTable>,
    pub lambda_feas: f64,
    pub lambda_infeas: f64,
    /// `min(g(lambda_feas), g(lambda_infeas))`, an upper bound on the relaxed optimum.
    pub dual_value: f64,
    pub alpha_blend: f64,
    pub epsilon: f64,
    /// Bisection steps taken (zero on the unconstrained fast path).
    pub iterations: usize,
}

impl RelaxedSolution {
    pub fn primal_value(&self) -> f64 {
        self.tables.iter().map(|t| t.expected_reward).sum()
    }

    pub fn total_pulls(&self) -> f64 {
        self.tables.iter().map(|t| t.expected_pulls).sum()
    }

    /// Whether bisection was skipped because the budget does not bind at `lambda = 0`.
    pub fn is_unconstrained(&self) -> bool {
        self.iterations == 0 && self.lambda_feas == 0.0 && self.alpha_blend == 1.0
    }

    pub fn to_file(&self) -> SolutionFile {
        SolutionFile {
            lambda_feas: self.lambda_feas,
            lambda_infeas: self.lambda_infeas,
            alpha: self.alpha_blend,
            dual_value: self.dual_value,
            epsilon: self.epsilon,
            arms: self
                .tables
                .iter()
                .map(|t| ArmSolutionFile {
                    expected_reward: t.expected_reward,
                    expected_pulls: t.expected_pulls,
                    occupancy: t.to_nested(),
                })
                .collect(),
        }
    }

    /// Rebuilds a solution from its file form, checking shapes against `arms`.
    pub fn from_file(file: &SolutionFile, arms: &[ArmModel]) -> Result<Self> {
        if file.arms.len() != arms.len() {
            return Err(Error::MalformedSolution(format!(
                "{} arm tables for {} arms",
                file.arms.len(),
                arms.len()
            )));
        }
        let mut tables = Vec::with_capacity(arms.len());
        for (i, (entry, arm)) in file.arms.iter().zip(arms).enumerate() {
            let horizon = entry.occupancy.len();
            let mut flat = Vec::with_capacity(horizon * arm.num_states() * arm.num_actions());
            for period in &entry.occupancy {
                if period.len() != arm.num_states() {
                    return Err(Error::MalformedSolution(format!("arm {i}: wrong state count")));
                }
                for cell in period {
                    if cell.len() != arm.num_actions() {
                        return Err(Error::MalformedSolution(format!("arm {i}: wrong action count")));
                    }
                    flat.extend_from_slice(cell);
                }
            }
            tables.push(OccupancyTable::from_values(arm, horizon, flat)?);
        }
        Ok(RelaxedSolution {
            tables,
            lambda_feas: file.lambda_feas,
            lambda_infeas: file.lambda_infeas,
            dual_value: file.dual_value,
            alpha_blend: file.alpha,
            epsilon: file.epsilon,
            iterations: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub lambda_feas: f64,
    pub lambda_infeas: f64,
    pub alpha: f64,
    pub dual_value: f64,
    pub epsilon: f64,
    pub arms: Vec<ArmSolutionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSolutionFile {
    pub expected_reward: f64,
    pub expected_pulls: f64,
    /// `[t][state][action]`
    pub occupancy: Vec<Vec<Vec<f64>>>,
}

/// Offset added to `r_max` for the initial feasible multiplier.
pub fn initial_lambda_offset(r_max: f64) -> f64 {
    r_max.max(1.0) * 1e-3
}

/// Upper bound on bisection steps for the given data.
pub fn max_bisection_steps(r_max: f64, k: usize, horizon: usize, epsilon: f64) -> usize {
    let width = (r_max + initial_lambda_offset(r_max)) * (k * horizon) as f64 / epsilon;
    width.log2().ceil().max(0.0) as usize + 1
}

/// Bisection on the pull price followed by the feasible/infeasible blend.
pub fn solve_rlp(arms: &[ArmModel], k: usize, horizon: usize, epsilon: f64) -> Result<RelaxedSolution> {
    let n = arms.len();
    if k < 1 || k > n {
        return Err(Error::InvalidBudget { k, n });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let budget = (k * horizon) as f64;

    let mut infeas = solve_all(arms, 0.0, horizon);
    if total_pulls(&infeas) <= budget {
        let dual = total_objective(&infeas);
        return Ok(RelaxedSolution {
            tables: infeas.into_iter().map(|s| s.table).collect(),
            lambda_feas: 0.0,
            lambda_infeas: 0.0,
            dual_value: dual,
            alpha_blend: 1.0,
            epsilon,
            iterations: 0,
        });
    }

    let r_max = arms.iter().map(ArmModel::max_reward).fold(0.0, f64::max);
    let mut lambda_infeas = 0.0;
    let mut lambda_feas = r_max + initial_lambda_offset(r_max);
    let mut feas = solve_all(arms, lambda_feas, horizon);

    let tolerance = epsilon / budget;
    let mut iterations = 0;
    while lambda_feas - lambda_infeas > tolerance {
        let lambda = 0.5 * (lambda_feas + lambda_infeas);
        if lambda <= lambda_infeas || lambda >= lambda_feas {
            // Bracket narrower than f64 resolution.
            break;
        }
        let candidate = solve_all(arms, lambda, horizon);
        if total_pulls(&candidate) > budget {
            lambda_infeas = lambda;
            infeas = candidate;
        } else {
            lambda_feas = lambda;
            feas = candidate;
        }
        iterations += 1;
    }

    let pulls_feas = total_pulls(&feas);
    let pulls_infeas = total_pulls(&infeas);
    let alpha = if pulls_infeas - pulls_feas > 0.0 {
        ((budget - pulls_feas) / (pulls_infeas - pulls_feas)).min(1.0)
    } else {
        0.0
    };

    let g_feas = lambda_feas * budget + total_objective(&feas);
    let g_infeas = lambda_infeas * budget + total_objective(&infeas);

    let tables = arms
        .iter()
        .zip(infeas.iter().zip(&feas))
        .map(|(arm, (hi, lo))| OccupancyTable::blend(&hi.table, &lo.table, alpha, arm))
        .collect();

    Ok(RelaxedSolution {
        tables,
        lambda_feas,
        lambda_infeas,
        dual_value: g_feas.min(g_infeas),
        alpha_blend: alpha,
        epsilon,
        iterations,
    })
}

//! Single-arm finite-horizon MDPs with a distinguished idle action.
//!
//! An [`ArmModel`] is a dense-indexed tabular MDP. Transition rows are stored
//! sparsely (compressed rows) since coin arms only branch `m + 1` ways per pull
//! while their posterior lattice grows quadratically in the horizon.
//!
//! Idle semantics are global: idling yields zero reward and leaves the state
//! unchanged. Rows supplied for the idle action are rewritten to that form.

use crate::error::{Error, Result};

/// Tolerance on kernel row sums accepted at construction.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    num_states: usize,
    num_actions: usize,
    idle: usize,
    initial_state: usize,
    /// Indexed `state * num_actions + action`.
    reward: Vec<f64>,
    /// Row `state * num_actions + action` occupies `row_start[row]..row_start[row + 1]`.
    row_start: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<f64>,
    /// Fewest steps needed to reach each state from the initial state; `usize::MAX` if never.
    earliest: Vec<usize>,
}

/// What `build_tabular_arm` had to change to make the input canonical.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArmReport {
    /// States whose idle reward or idle kernel row was overwritten.
    pub canonicalized_idle_states: Vec<usize>,
    /// Number of non-idle rows rescaled to sum to exactly one.
    pub renormalized_rows: usize,
}

impl ArmReport {
    pub fn idle_overwritten(&self) -> bool {
        !self.canonicalized_idle_states.is_empty()
    }
}

impl ArmModel {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn idle_action(&self) -> usize {
        self.idle
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn is_idle(&self, action: usize) -> bool {
        action == self.idle
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    /// Sparse transition row `(next_state, probability)` for `(state, action)`.
    #[inline]
    pub fn transitions(&self, state: usize, action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = state * self.num_actions + action;
        let range = self.row_start[row]..self.row_start[row + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.probs[range].iter().copied())
    }

    /// Dense probability `P(state, action, next)`.
    pub fn transition_prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions(state, action)
            .filter(|&(s, _)| s == next)
            .map(|(_, p)| p)
            .sum()
    }

    /// Non-idle actions in ascending index order.
    pub fn pull_actions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_actions).filter(move |&a| a != self.idle)
    }

    /// Earliest period at which `state` can be occupied, `usize::MAX` if unreachable.
    #[inline]
    pub fn earliest_time(&self, state: usize) -> usize {
        self.earliest[state]
    }

    pub fn max_reward(&self) -> f64 {
        self.reward.iter().copied().fold(0.0, f64::max)
    }

    /// Draws the next state from `(state, action)` given a uniform variate in `[0, 1)`.
    pub fn sample_next(&self, state: usize, action: usize, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = state;
        for (next, p) in self.transitions(state, action) {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = next;
            if u < acc {
                return next;
            }
        }
        // Round-off can leave `acc` a hair below 1.
        last
    }
}

/// Builds and validates a tabular arm from dense `reward[state][action]` and
/// `kernel[state][action][next]` tables.
pub fn build_tabular_arm(
    num_states: usize,
    num_actions: usize,
    idle: usize,
    reward: &[Vec<f64>],
    kernel: &[Vec<Vec<f64>>],
    initial_state: usize,
) -> Result<(ArmModel, ArmReport)> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::Dimension("an arm needs at least one state and one action".into()));
    }
    if idle >= num_actions {
        return Err(Error::Dimension(format!("idle index {idle} out of range for {num_actions} actions")));
    }
    if initial_state >= num_states {
        return Err(Error::Dimension(format!(
            "initial state {initial_state} out of range for {num_states} states"
        )));
    }
    if reward.len() != num_states || kernel.len() != num_states {
        return Err(Error::Dimension(format!(
            "expected {num_states} reward and kernel rows, got {} and {}",
            reward.len(),
            kernel.len()
        )));
    }

    let mut report = ArmReport::default();
    let mut rewards = Vec::with_capacity(num_states * num_actions);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(num_states * num_actions);

    for s in 0..num_states {
        if reward[s].len() != num_actions || kernel[s].len() != num_actions {
            return Err(Error::Dimension(format!("state {s} does not list {num_actions} actions")));
        }
        let mut idle_touched = false;
        for a in 0..num_actions {
            let row = &kernel[s][a];
            if row.len() != num_states {
                return Err(Error::Dimension(format!(
                    "kernel row ({s},{a}) has length {}, expected {num_states}",
                    row.len()
                )));
            }
            if a == idle {
                let canonical = reward[s][a] == 0.0
                    && row.iter().enumerate().all(|(j, &p)| p == if j == s { 1.0 } else { 0.0 });
                idle_touched |= !canonical;
                rewards.push(0.0);
                rows.push(vec![(s, 1.0)]);
                continue;
            }

            let r = reward[s][a];
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::NegativeReward { state: s, action: a, value: r });
            }
            if let Some((_, &p)) = row.iter().enumerate().find(|(_, &p)| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::NegativeProbability { state: s, action: a, value: p });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NonStochasticRow { state: s, action: a, sum });
            }
            if sum != 1.0 {
                report.renormalized_rows += 1;
            }
            rewards.push(r);
            rows.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| (j, p / sum))
                    .collect(),
            );
        }
        if idle_touched {
            report.canonicalized_idle_states.push(s);
        }
    }

    Ok((assemble(num_states, num_actions, idle, initial_state, rewards, rows), report))
}

fn assemble(
    num_states: usize,
    num_actions: usize,
    idle: usize,
    initial_state: usize,
    reward: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
) -> ArmModel {
    let mut row_start = Vec::with_capacity(rows.len() + 1);
    let nnz = rows.iter().map(Vec::len).sum();
    let mut targets = Vec::with_capacity(nnz);
    let mut probs = Vec::with_capacity(nnz);
    row_start.push(0);
    for row in rows {
        for (j, p) in row {
            targets.push(j);
            probs.push(p);
        }
        row_start.push(targets.len());
    }
    let mut arm = ArmModel {
        num_states,
        num_actions,
        idle,
        initial_state,
        reward,
        row_start,
        targets,
        probs,
        earliest: Vec::new(),
    };
    arm.earliest = earliest_times(&arm);
    arm
}

/// Breadth-first distances from the initial state over all positive-probability moves.
fn earliest_times(arm: &ArmModel) -> Vec<usize> {
    let mut dist = vec![usize::MAX; arm.num_states];
    let mut queue = std::collections::VecDeque::new();
    dist[arm.initial_state] = 0;
    queue.push_back(arm.initial_state);
    while let Some(s) = queue.pop_front() {
        for a in 0..arm.num_actions {
            for (next, p) in arm.transitions(s, a) {
                if p > 0.0 && dist[next] == usize::MAX {
                    dist[next] = dist[s] + 1;
                    queue.push_back(next);
                }
            }
        }
    }
    dist
}

/// Beta-Binomial coin: `m` Binomial trials per pull under a `Beta(alpha0, beta0)` prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinSpec {
    pub m: u32,
    pub alpha0: f64,
    pub beta0: f64,
    pub reward_scale: f64,
    pub horizon: usize,
}

/// Action index of the pull action on coin arms.
pub const COIN_PULL: usize = 0;
/// Action index of the idle action on coin arms.
pub const COIN_IDLE: usize = 1;

impl CoinSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Domain("coin needs m >= 1".into()));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) || !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::Domain(format!(
                "coin prior must be positive, got alpha={}, beta={}",
                self.alpha0, self.beta0
            )));
        }
        if !(self.reward_scale >= 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::Domain(format!("reward scale {} must be nonnegative", self.reward_scale)));
        }
        if self.horizon < 1 {
            return Err(Error::Domain("coin horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// `(T + 1) + m T (T + 1) / 2`: one layer per pull depth `0..=T`.
    pub fn state_count(&self) -> usize {
        let t = self.horizon;
        let m = self.m as usize;
        (t + 1) + m * t * (t + 1) / 2
    }

    /// Dense index of the posterior reached after `depth` pulls with `successes` total successes.
    pub fn state_index(&self, depth: usize, successes: usize) -> usize {
        debug_assert!(successes <= self.m as usize * depth);
        let m = self.m as usize;
        depth + m * depth * depth.saturating_sub(1) / 2 + successes
    }

    /// Posterior `(alpha, beta)` at a lattice point.
    pub fn posterior(&self, depth: usize, successes: usize) -> (f64, f64) {
        let trials = self.m as usize * depth;
        (
            self.alpha0 + successes as f64,
            self.beta0 + (trials - successes) as f64,
        )
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

fn ln_choose(n: u32, k: u32) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// Beta-Binomial posterior predictive `P(j successes in m trials | Beta(alpha, beta))`.
pub fn coin_predictive(alpha: f64, beta: f64, m: u32, j: u32) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Domain(format!("alpha={alpha}, beta={beta} must be positive")));
    }
    if j > m {
        return Err(Error::Domain(format!("j={j} exceeds m={m}")));
    }
    let log_p = ln_choose(m, j) + ln_beta(alpha + j as f64, beta + (m - j) as f64) - ln_beta(alpha, beta);
    Ok(log_p.exp())
}

/// Enumerates the reachable posterior lattice of a coin up to depth `horizon`.
///
/// Pull reward at posterior `(a, b)` is `reward_scale * m * a / (a + b)`.
/// States at depth `horizon` are absorbing under both actions.
pub fn build_coin_arm(spec: &CoinSpec) -> Result<ArmModel> {
    spec.validate()?;
    let n = spec.state_count();
    let m = spec.m as usize;
    let mut reward = vec![0.0; n * 2];
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n * 2];

    for depth in 0..=spec.horizon {
        for succ in 0..=m * depth {
            let s = spec.state_index(depth, succ);
            let (a, b) = spec.posterior(depth, succ);
            reward[s * 2 + COIN_PULL] = spec.reward_scale * spec.m as f64 * a / (a + b);
            rows[s * 2 + COIN_IDLE] = vec![(s, 1.0)];
            rows[s * 2 + COIN_PULL] = if depth == spec.horizon {
                vec![(s, 1.0)]
            } else {
                (0..=spec.m)
                    .map(|j| {
                        let p = coin_predictive(a, b, spec.m, j)?;
                        Ok((spec.state_index(depth + 1, succ + j as usize), p))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
        }
    }

    Ok(assemble(n, 2, COIN_IDLE, 0, reward, rows))
}

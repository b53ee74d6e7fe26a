//! Generative coin-bandit family and Monte-Carlo evaluation against the dual bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{ArmSpec, BanditInstance};
use crate::packing::simulate;
use crate::relaxation::solve_rlp;

/// Two-sided 98% normal quantile.
pub const Z_98: f64 = 2.326;

/// `beta` giving a `Beta(alpha, beta)` prior with `sd / mean == cv`.
///
/// From `cv^2 = beta / (alpha (alpha + beta + 1))`:
/// `beta = cv^2 alpha (alpha + 1) / (1 - cv^2 alpha)`, positive iff `cv^2 alpha < 1`.
pub fn beta_params_for_cv(alpha: f64, cv: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(cv > 0.0 && cv.is_finite()) {
        return Err(Error::Domain(format!("alpha={alpha} and cv={cv} must be positive")));
    }
    let c2 = cv * cv;
    let denom = 1.0 - c2 * alpha;
    if !(denom > 0.0) {
        return Err(Error::InfeasibleCv { alpha, cv });
    }
    let beta = c2 * alpha * (alpha + 1.0) / denom;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InfeasibleCv { alpha, cv });
    }
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub n: usize,
    pub k: usize,
    pub horizon: usize,
    pub groups: usize,
    pub cv: f64,
    pub m: u32,
    /// Half-open `[lo, hi)` range for each group's prior `alpha`.
    pub alpha_range: (f64, f64),
    pub reward_range: (f64, f64),
    pub instances: usize,
    pub trajectories: usize,
    pub base_seed: u64,
    pub epsilon: f64,
}

impl GenerativeConfig {
    /// Standard benchmark row at desk scale: 10 instances of 1000 trajectories.
    ///
    /// The `alpha` range is `[0.05, 0.35)` cut to `alpha < 1 / cv^2`, the
    /// region where the target coefficient of variation is attainable.
    pub fn table1(n: usize, k: usize, horizon: usize, cv: f64) -> Self {
        GenerativeConfig {
            n,
            k,
            horizon,
            groups: 10,
            cv,
            m: 2,
            alpha_range: (0.05, 0.35f64.min(1.0 / (cv * cv))),
            reward_range: (0.0, 2.0),
            instances: 10,
            trajectories: 1000,
            base_seed: 0,
            epsilon: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 || self.horizon == 0 || self.groups == 0 || self.m == 0 {
            return bad("n, T, groups and m must be positive".into());
        }
        if self.k < 1 || self.k > self.n {
            return Err(Error::InvalidBudget { k: self.k, n: self.n });
        }
        if !(self.cv > 0.0 && self.cv.is_finite()) {
            return bad(format!("cv must be positive, got {}", self.cv));
        }
        let (a_lo, a_hi) = self.alpha_range;
        if !(a_lo > 0.0 && a_hi > a_lo) {
            return bad(format!("alpha range [{a_lo}, {a_hi}) must be positive with positive length"));
        }
        let (r_lo, r_hi) = self.reward_range;
        if !(r_lo >= 0.0 && r_hi > r_lo) {
            return bad(format!("reward range [{r_lo}, {r_hi}) must be nonnegative with positive length"));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }

    /// Sizes of the contiguous arm blocks; the first `n % groups` blocks get one extra arm.
    pub fn group_sizes(&self) -> Vec<usize> {
        let groups = self.groups.min(self.n);
        (0..groups)
            .map(|g| self.n / groups + usize::from(g < self.n % groups))
            .collect()
    }

    /// Seed of instance `index` in a benchmark run.
    pub fn instance_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Draws one instance: per group `alpha ~ U[alpha_range)`, `beta` from the cv
/// target, `r ~ U[reward_range)`, replicated across the group's arms.
pub fn generate_instance(config: &GenerativeConfig, seed: u64) -> Result<BanditInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arms = Vec::with_capacity(config.n);
    for size in config.group_sizes() {
        let alpha = rng.gen_range(config.alpha_range.0..config.alpha_range.1);
        let beta = beta_params_for_cv(alpha, config.cv)?;
        let reward_scale = rng.gen_range(config.reward_range.0..config.reward_range.1);
        arms.extend(std::iter::repeat_n(ArmSpec::Coin { m: config.m, alpha, beta, reward_scale }, size));
    }
    Ok(BanditInstance { horizon: config.horizon, budget_k: config.k, arms, seed: Some(seed) })
}

/// One evaluated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub instance_seed: u64,
    pub mean_reward: f64,
    pub std_err: f64,
    pub dual_bound: f64,
    pub ratio: f64,
    pub discards_mean: f64,
    pub irrevocability_violations: usize,
    pub max_pulls_per_step: usize,
    pub max_replacements: usize,
    pub max_discards: usize,
}

/// Solves the relaxation once, then simulates `trajectories` packing runs.
pub fn evaluate(instance: &BanditInstance, epsilon: f64, trajectories: usize, seed: u64) -> Result<InstanceEval> {
    if trajectories < 2 {
        return Err(Error::InvalidParameter("need at least two trajectories".into()));
    }
    let arms = instance.build_arms()?;
    let solution = solve_rlp(&arms, instance.budget_k, instance.horizon, epsilon)?;
    let stats = simulate(&arms, &solution, instance.budget_k, instance.horizon, trajectories, seed);
    let dual_bound = solution.dual_value;
    Ok(InstanceEval {
        instance_seed: instance.seed.unwrap_or(seed),
        mean_reward: stats.mean_reward,
        std_err: stats.std_err,
        dual_bound,
        ratio: if dual_bound > 0.0 { stats.mean_reward / dual_bound } else { 1.0 },
        discards_mean: stats.discards_mean,
        irrevocability_violations: stats.irrevocability_violations,
        max_pulls_per_step: stats.max_pulls_per_step,
        max_replacements: stats.max_replacements,
        max_discards: stats.max_discards,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: GenerativeConfig,
    pub per_instance: Vec<InstanceEval>,
    pub aggregate_ratio: f64,
    /// 98% normal-approximation half width of `aggregate_ratio` across instances.
    pub confidence_half_width: f64,
}

/// Aggregate line mirroring one row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cv: f64,
    pub n: usize,
    pub k: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub instances: usize,
    pub trajectories: usize,
    pub performance: f64,
    pub ci_half_width: f64,
}

impl BenchReport {
    pub fn summary_row(&self) -> SummaryRow {
        SummaryRow {
            cv: self.config.cv,
            n: self.config.n,
            k: self.config.k,
            horizon: self.config.horizon,
            instances: self.config.instances,
            trajectories: self.config.trajectories,
            performance: self.aggregate_ratio,
            ci_half_width: self.confidence_half_width,
        }
    }
}

/// Generates and evaluates `config.instances` instances; instance `j` uses
/// seed `base_seed + j` for both generation and its trajectory streams.
pub fn run_bench(config: &GenerativeConfig) -> Result<BenchReport> {
    config.validate()?;
    let per_instance = (0..config.instances)
        .into_par_iter()
        .map(|j| {
            let seed = config.instance_seed(j);
            let instance = generate_instance(config, seed)?;
            evaluate(&instance, config.epsilon, config.trajectories, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let ratios: Vec<f64> = per_instance.iter().map(|r| r.ratio).collect();
    let (aggregate_ratio, se) = crate::packing::mean_and_std_err(&ratios);
    Ok(BenchReport {
        config: config.clone(),
        per_instance,
        aggregate_ratio,
        confidence_half_width: Z_98 * se,
    })
}

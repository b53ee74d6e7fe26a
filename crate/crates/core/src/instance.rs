//! Serializable bandit instances.

use serde::{Deserialize, Serialize};

use crate::arm::{build_coin_arm, build_tabular_arm, ArmModel, CoinSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ArmSpec {
    Coin {
        m: u32,
        alpha: f64,
        beta: f64,
        reward_scale: f64,
    },
    Tabular {
        states: usize,
        actions: usize,
        idle: usize,
        initial: usize,
        /// `reward[state][action]`
        reward: Vec<Vec<f64>>,
        /// `kernel[state][action][next_state]`
        kernel: Vec<Vec<Vec<f64>>>,
    },
}

impl ArmSpec {
    pub fn build(&self, horizon: usize) -> Result<ArmModel> {
        match self {
            ArmSpec::Coin { m, alpha, beta, reward_scale } => build_coin_arm(&CoinSpec {
                m: *m,
                alpha0: *alpha,
                beta0: *beta,
                reward_scale: *reward_scale,
                horizon,
            }),
            ArmSpec::Tabular { states, actions, idle, initial, reward, kernel } => {
                build_tabular_arm(*states, *actions, *idle, reward, kernel, *initial).map(|(arm, _)| arm)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    pub horizon: usize,
    pub budget_k: usize,
    pub arms: Vec<ArmSpec>,
    /// Seed the instance was generated from, when it came from the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl BanditInstance {
    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if self.budget_k < 1 || self.budget_k > self.arms.len() {
            return Err(Error::InvalidBudget { k: self.budget_k, n: self.arms.len() });
        }
        Ok(())
    }

    pub fn build_arms(&self) -> Result<Vec<ArmModel>> {
        self.validate()?;
        self.arms.iter().map(|a| a.build(self.horizon)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#![allow(dead_code)]

use banditpack::arm::{build_coin_arm, build_tabular_arm, ArmModel, CoinSpec};
use rand::Rng;

pub fn unit_arm(reward: f64) -> ArmModel {
    build_tabular_arm(1, 2, 1, &[vec![reward, 0.0]], &[vec![vec![1.0], vec![1.0]]], 0)
        .unwrap()
        .0
}

/// The two identical one-state arms with pull reward 1.
pub fn example_one() -> Vec<ArmModel> {
    vec![unit_arm(1.0), unit_arm(1.0)]
}

pub fn random_coin_spec<R: Rng>(rng: &mut R, max_m: u32, horizon: usize) -> CoinSpec {
    CoinSpec {
        m: rng.gen_range(1..=max_m),
        alpha0: rng.gen_range(0.05..3.0),
        beta0: rng.gen_range(0.05..3.0),
        reward_scale: rng.gen_range(0.1..2.0),
        horizon,
    }
}

pub fn random_coin<R: Rng>(rng: &mut R, max_m: u32, horizon: usize) -> ArmModel {
    build_coin_arm(&random_coin_spec(rng, max_m, horizon)).unwrap()
}

/// Tabular arm with `states` states, `actions` actions (last one idle), random
/// rewards in `[0, 1)` and random sparse-ish kernels.
pub fn random_tabular<R: Rng>(rng: &mut R, states: usize, actions: usize) -> ArmModel {
    let idle = actions - 1;
    let reward: Vec<Vec<f64>> = (0..states)
        .map(|_| (0..actions).map(|a| if a == idle { 0.0 } else { rng.gen::<f64>() }).collect())
        .collect();
    let kernel: Vec<Vec<Vec<f64>>> = (0..states)
        .map(|s| {
            (0..actions)
                .map(|a| {
                    if a == idle {
                        let mut row = vec![0.0; states];
                        row[s] = 1.0;
                        return row;
                    }
                    let mut row: Vec<f64> = (0..states)
                        .map(|_| if rng.gen_bool(0.6) { rng.gen::<f64>() } else { 0.0 })
                        .collect();
                    let target = rng.gen_range(0..states);
                    row[target] += 0.1;
                    let sum: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= sum);
                    row
                })
                .collect()
        })
        .collect();
    let initial = rng.gen_range(0..states);
    build_tabular_arm(states, actions, idle, &reward, &kernel, initial).unwrap().0
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

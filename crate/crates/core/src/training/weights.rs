//! Proportional contribution of the rule output weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::FuzzyRuleSet;

/// Normalized weights of one rule over `[1, θ taps, P̃_o taps]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleContribution {
    pub rule: usize,
    pub shares: Vec<f64>,
    pub bias: f64,
    pub theta: f64,
    pub reservoir: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub rules: Vec<RuleContribution>,
    /// Across-rule averages of the group sums.
    pub mean_bias: f64,
    pub mean_theta: f64,
    pub mean_reservoir: f64,
}

/// `ω̄_j = |ω_j| / Σ|ω_i|` per rule, grouped into bias, `n_y` angle taps and
/// `n_u` reservoir taps. The rule set should be trained on min-max
/// normalized features for the shares to be comparable.
pub fn weight_contributions(rules: &FuzzyRuleSet, n_y: usize, n_u: usize) -> Result<WeightReport> {
    let width = 1 + n_y + n_u;
    let mut out = Vec::with_capacity(rules.weights.len());
    for (i, w) in rules.weights.iter().enumerate() {
        if w.len() != width {
            return Err(Error::Dimension { expected: width, got: w.len() });
        }
        let total: f64 = w.iter().map(|v| v.abs()).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateRange(format!("rule {i} has an all-zero weight row")));
        }
        let shares: Vec<f64> = w.iter().map(|v| v.abs() / total).collect();
        out.push(RuleContribution {
            rule: i,
            bias: shares[0],
            theta: shares[1..=n_y].iter().sum(),
            reservoir: shares[1 + n_y..].iter().sum(),
            shares,
        });
    }
    let n = out.len() as f64;
    let avg = |f: fn(&RuleContribution) -> f64| out.iter().map(f).sum::<f64>() / n;
    Ok(WeightReport {
        mean_bias: avg(|r| r.bias),
        mean_theta: avg(|r| r.theta),
        mean_reservoir: avg(|r| r.reservoir),
        rules: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ruleset(weights: Vec<Vec<f64>>) -> FuzzyRuleSet {
        let dim = weights[0].len() - 1;
        FuzzyRuleSet {
            centers: vec![vec![0.0; dim]; weights.len()],
            weights,
            sigma: 1.0,
            fuzziness: 2.0,
            seed: 0,
        }
    }

    #[test]
    fn shares_of_simple_row() {
        let r = weight_contributions(&ruleset(vec![vec![1.0, -1.0, 2.0]]), 1, 1).unwrap();
        assert_eq!(r.rules[0].shares, vec![0.25, 0.25, 0.5]);
        assert_eq!((r.mean_bias, r.mean_theta, r.mean_reservoir), (0.25, 0.25, 0.5));
    }

    #[test]
    fn rows_sum_to_one() {
        let w = vec![vec![0.3, -2.0, 1.1, 0.7, -0.1], vec![5.0, 0.01, -0.2, 3.3, 1.0]];
        let r = weight_contributions(&ruleset(w), 2, 2).unwrap();
        for c in &r.rules {
            assert!((c.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((c.bias + c.theta + c.reservoir - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_row_is_degenerate() {
        let r = weight_contributions(&ruleset(vec![vec![0.0; 3]]), 1, 1);
        assert!(matches!(r, Err(Error::DegenerateRange(_))));
        assert!(weight_contributions(&ruleset(vec![vec![1.0; 3]]), 2, 2).is_err());
    }
}

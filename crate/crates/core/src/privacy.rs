//! Laplace mechanism, budget ledger and the noise sources used by every builder.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::PointDataset;

/// Slack allowed when checking that allocations stay within the total.
pub const BUDGET_SLACK: f64 = 1e-12;

/// Default share of ε spent on estimating the dataset size.
pub const DEFAULT_ESTIMATE_FRACTION: f64 = 0.02;

// One source lives per build, so the inline generator is cheaper than a box.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Kind {
    Laplace(ChaCha8Rng),
    Zero,
}

/// Source of Laplace noise. The `zero` kind always returns 0, which turns
/// every builder into its noiseless counterpart.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    kind: Kind,
    seed: u64,
}

impl NoiseSource {
    pub fn laplace(seed: u64) -> Self {
        Self::laplace_stream(seed, 0)
    }

    /// Independent stream `stream` under master seed `seed`.
    pub fn laplace_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseSource { kind: Kind::Laplace(rng), seed }
    }

    pub fn zero() -> Self {
        NoiseSource { kind: Kind::Zero, seed: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Kind::Zero)
    }
}

/// Recipe for creating per-trial noise sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFactory {
    Laplace,
    Zero,
}

impl NoiseFactory {
    pub fn make(&self, seed: u64, stream: u64) -> NoiseSource {
        match self {
            NoiseFactory::Laplace => NoiseSource::laplace_stream(seed, stream),
            NoiseFactory::Zero => NoiseSource { kind: Kind::Zero, seed },
        }
    }
}

/// A released value together with the variance of the noise it carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyValue {
    pub value: f64,
    pub variance: f64,
}

impl NoisyValue {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Variance of a single `Laplace(beta)` draw.
pub fn laplace_variance(beta: f64) -> f64 {
    2.0 * beta * beta
}

/// One draw from `Laplace(0, beta)` by inverse CDF.
pub fn laplace_sample(beta: f64, src: &mut NoiseSource) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param(format!("Laplace scale must be positive, got {beta}")));
    }
    let rng = match &mut src.kind {
        Kind::Zero => return Ok(0.0),
        Kind::Laplace(rng) => rng,
    };
    // u in (-1/2, 1/2); -1/2 would give ln(0).
    let u = loop {
        let u = rng.random::<f64>() - 0.5;
        if u > -0.5 {
            break u;
        }
    };
    Ok(-beta * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// Releases a disjoint-cell count (sensitivity 1) under budget `epsilon`.
/// Negative results are kept.
pub fn noisy_count(true_value: f64, epsilon: f64, src: &mut NoiseSource) -> Result<NoisyValue> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    let beta = 1.0 / epsilon;
    Ok(NoisyValue { value: true_value + laplace_sample(beta, src)?, variance: laplace_variance(beta) })
}

/// Sequential-composition ledger: labelled allocations whose sum never
/// exceeds the total.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    epsilon_total: f64,
    allocations: Vec<(String, f64)>,
}

impl Budget {
    pub fn new(epsilon_total: f64) -> Result<Self> {
        if !(epsilon_total > 0.0) || !epsilon_total.is_finite() {
            return Err(Error::param(format!("epsilon must be positive, got {epsilon_total}")));
        }
        Ok(Budget { epsilon_total, allocations: Vec::new() })
    }

    pub fn total(&self) -> f64 {
        self.epsilon_total
    }

    pub fn allocations(&self) -> &[(String, f64)] {
        &self.allocations
    }

    pub fn spent(&self) -> f64 {
        self.allocations.iter().map(|(_, e)| e).sum()
    }

    pub fn remaining(&self) -> f64 {
        (self.epsilon_total - self.spent()).max(0.0)
    }

    /// Records `epsilon` under `label`, failing if it would overdraw the total.
    pub fn charge(&mut self, label: impl Into<String>, epsilon: f64) -> Result<f64> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::param(format!("allocation must be positive, got {epsilon}")));
        }
        let after = self.spent() + epsilon;
        if after > self.epsilon_total * (1.0 + BUDGET_SLACK) {
            return Err(Error::BudgetExceeded { requested: epsilon, remaining: self.remaining() });
        }
        self.allocations.push((label.into(), epsilon));
        Ok(epsilon)
    }

    /// Rebuilds a ledger from stored allocations, checking the same invariant.
    pub fn from_parts(epsilon_total: f64, allocations: Vec<(String, f64)>) -> Result<Self> {
        let mut b = Budget::new(epsilon_total)?;
        for (label, e) in allocations {
            b.charge(label, e)?;
        }
        Ok(b)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.allocations.iter().map(|(l, e)| format!("{l}:{e}")).collect();
        write!(f, "{}", parts.join(";"))
    }
}

/// Splits `epsilon_total` by `fractions`, in order, labelled `part1`, `part2`, ...
pub fn split_budget(epsilon_total: f64, fractions: &[f64]) -> Result<Budget> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0)) {
        return Err(Error::param(format!("budget fractions must be positive, got {f}")));
    }
    let sum: f64 = fractions.iter().sum();
    if sum > 1.0 + BUDGET_SLACK {
        return Err(Error::BudgetExceeded { requested: sum * epsilon_total, remaining: epsilon_total });
    }
    let mut budget = Budget::new(epsilon_total)?;
    for (k, f) in fractions.iter().enumerate() {
        budget.charge(format!("part{}", k + 1), f * epsilon_total)?;
    }
    Ok(budget)
}

/// How builders learn the dataset size they plug into the sizing guidelines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizingMode {
    /// Use the true size and spend nothing.
    ExactN,
    /// Spend `fraction · ε` on a noisy count of the whole dataset.
    NoisyEstimate { fraction: f64 },
}

impl Default for SizingMode {
    fn default() -> Self {
        SizingMode::NoisyEstimate { fraction: DEFAULT_ESTIMATE_FRACTION }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalEstimate {
    pub raw: NoisyValue,
    /// `raw.value` floored at zero; only ever used for choosing grid sizes.
    pub sizing: f64,
}

impl TotalEstimate {
    pub fn from_raw(raw: NoisyValue) -> Self {
        TotalEstimate { raw, sizing: raw.value.max(0.0) }
    }
}

pub fn estimate_total(ds: &PointDataset, epsilon_est: f64, src: &mut NoiseSource) -> Result<TotalEstimate> {
    Ok(TotalEstimate::from_raw(noisy_count(ds.len() as f64, epsilon_est, src)?))
}

/// Resolves the size used for grid sizing, charging `budget` if an estimate is drawn.
pub(crate) fn sizing_total(
    ds: &PointDataset,
    mode: SizingMode,
    budget: &mut Budget,
    src: &mut NoiseSource,
) -> Result<f64> {
    match mode {
        SizingMode::ExactN => Ok(ds.len() as f64),
        SizingMode::NoisyEstimate { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::param(format!("estimate fraction must lie in (0,1), got {fraction}")));
            }
            let eps = budget.charge("estimate_n", fraction * budget.total())?;
            Ok(estimate_total(ds, eps, src)?.sizing)
        }
    }
}

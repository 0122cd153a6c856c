//! Network size estimation from maxima of uniform draws.
//!
//! Every agent draws `p` uniforms when it joins; `p` independent max-consensus
//! instances spread the coordinate maxima, and each agent estimates the
//! network size by maximum likelihood, `n_hat = -p / sum_j ln x_j`.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{EstimationError, ProtocolError};
use crate::graph::{NetworkSnapshot, NodeId};
use crate::protocols::{initial_state, open_step, DepartureSemantics, Mode, ProtocolParams, ProtocolState};
use crate::special::exponential_integral_scaled;
use crate::streams;

/// Floor applied to `u_max - epsilon` in the subtractive worst case.
pub const WORST_CASE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DseConfig {
    pub p: usize,
    pub backend: ProtocolParams,
}

impl DseConfig {
    pub fn new(p: usize, backend: ProtocolParams) -> Result<Self, EstimationError> {
        let config = DseConfig { p, backend };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.p < 2 {
            return Err(EstimationError::TooFewCoordinates(self.p));
        }
        if self.backend.mode != Mode::Max {
            return Err(EstimationError::InvalidParameters(
                "size estimation runs on max-consensus".into(),
            ));
        }
        self.backend
            .validate()
            .map_err(|e| EstimationError::InvalidParameters(e.to_string()))
    }
}

/// `p` i.i.d. uniforms on the open unit interval, so every logarithm is finite.
pub fn dse_generate<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    (0..p).map(|_| rng.sample(Open01)).collect()
}

/// `-p / sum_j ln x_j` for coordinates strictly inside `(0, 1)`.
pub fn mle_estimate(x: &[f64]) -> Result<f64, EstimationError> {
    if x.len() < 2 {
        return Err(EstimationError::TooFewCoordinates(x.len()));
    }
    let mut sum = 0.0;
    for (index, &value) in x.iter().enumerate() {
        if !(value > 0.0 && value < 1.0) {
            return Err(EstimationError::OutOfUnitInterval { index, value });
        }
        sum += value.ln();
    }
    Ok(-(x.len() as f64) / sum)
}

fn check_counts(n: usize, p: usize) -> Result<(), EstimationError> {
    if p < 2 {
        return Err(EstimationError::TooFewCoordinates(p));
    }
    if n == 0 {
        return Err(EstimationError::InvalidParameters("network size must be positive".into()));
    }
    Ok(())
}

/// Expected estimate with exact maxima: `n p / (p - 1)`.
pub fn expected_estimate_edmc(n: usize, p: usize) -> Result<f64, EstimationError> {
    check_counts(n, p)?;
    Ok((n * p) as f64 / (p - 1) as f64)
}

/// Expected estimate when every coordinate is underestimated by `epsilon` in
/// the logarithmic domain:
/// `epsilon^{p-1} e^{z} (np)^p Γ(1 - p, z)` with `z = epsilon n p`.
///
/// With `Γ(1 - p, z) = z^{1-p} E_p(z)` the powers cancel to `np e^z E_p(z)`,
/// which stays finite where the literal product overflows.
pub fn expected_estimate_admc(n: usize, p: usize, epsilon: f64) -> Result<f64, EstimationError> {
    check_counts(n, p)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(EstimationError::InvalidParameters(format!(
            "error bound {epsilon} must be finite and non-negative"
        )));
    }
    if epsilon == 0.0 {
        return expected_estimate_edmc(n, p);
    }
    let np = (n * p) as f64;
    Ok(np * exponential_integral_scaled(p as u32, epsilon * np)?)
}

/// How the worst-case error enters the estimator in the Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstCaseModel {
    /// `-p / sum_j (ln u_max_j - epsilon)`: the model whose mean is the closed
    /// form of [`expected_estimate_admc`].
    Relaxed,
    /// `-p / sum_j ln(u_max_j - epsilon)`, floored at [`WORST_CASE_FLOOR`];
    /// never above the relaxed estimate, so its mean lies below the closed form.
    Subtractive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ci99: (f64, f64),
    /// Trials in which at least one coordinate hit the floor.
    pub floored_trials: usize,
}

impl MonteCarloSummary {
    pub fn contains(&self, value: f64) -> bool {
        self.ci99.0 <= value && value <= self.ci99.1
    }
}

/// Two-sided 99% standard normal quantile.
pub fn z99() -> f64 {
    Normal::standard().inverse_cdf(0.995)
}

/// Mean, standard error and 99% normal interval of a sample, summed in order.
pub fn summarize(samples: &[f64]) -> (f64, f64, (f64, f64)) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let se = (var / m).sqrt();
    let half = z99() * se;
    (mean, se, (mean - half, mean + half))
}

/// Monte Carlo of the worst-case estimator: each trial draws an `n x p`
/// uniform matrix, takes column maxima, applies the error model and the
/// estimator. Trial `i` uses the stream `(root_seed, "trial", i)`.
pub fn worst_case_monte_carlo(
    n: usize,
    p: usize,
    epsilon: f64,
    trials: usize,
    root_seed: u64,
    model: WorstCaseModel,
) -> Result<MonteCarloSummary, EstimationError> {
    check_counts(n, p)?;
    if trials == 0 {
        return Err(EstimationError::InvalidParameters("at least one trial is required".into()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(EstimationError::InvalidParameters(format!("invalid error bound {epsilon}")));
    }
    let outcomes: Vec<(f64, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams::derive(root_seed, streams::TRIAL, i as u64);
            let mut maxima = vec![0.0f64; p];
            for _ in 0..n {
                for m in maxima.iter_mut() {
                    *m = m.max(rng.sample(Open01));
                }
            }
            let mut floored = false;
            let log_sum: f64 = match model {
                WorstCaseModel::Relaxed => maxima.iter().map(|u| u.ln() - epsilon).sum(),
                WorstCaseModel::Subtractive => maxima
                    .iter()
                    .map(|u| {
                        let shifted = u - epsilon;
                        if shifted < WORST_CASE_FLOOR {
                            floored = true;
                            WORST_CASE_FLOOR.ln()
                        } else {
                            shifted.ln()
                        }
                    })
                    .sum(),
            };
            (-(p as f64) / log_sum, floored)
        })
        .collect();
    let floored_trials = outcomes.iter().filter(|o| o.1).count();
    if floored_trials > 0 {
        log::warn!("{floored_trials} of {trials} worst-case trials hit the floor {WORST_CASE_FLOOR}");
    }
    let samples: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let (mean, std_error, ci99) = summarize(&samples);
    Ok(MonteCarloSummary {
        trials,
        mean,
        std_error,
        ci99,
        floored_trials,
    })
}

/// Running size estimation: one max-consensus instance per coordinate over a
/// shared graph sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DseState {
    config: DseConfig,
    inputs: BTreeMap<NodeId, Vec<f64>>,
    coordinates: Vec<ProtocolState>,
}

impl DseState {
    /// Draws inputs for every node of `g` (ascending order) and starts each
    /// coordinate from its input.
    pub fn start<R: Rng + ?Sized>(
        config: DseConfig,
        g: &NetworkSnapshot,
        rng: &mut R,
    ) -> Result<Self, EstimationError> {
        config.validate()?;
        let inputs: BTreeMap<NodeId, Vec<f64>> =
            g.nodes().iter().map(|&n| (n, dse_generate(config.p, rng))).collect();
        Self::from_inputs(config, inputs)
    }

    /// Starts from given input vectors; each must have `p` coordinates.
    pub fn from_inputs(
        config: DseConfig,
        inputs: BTreeMap<NodeId, Vec<f64>>,
    ) -> Result<Self, EstimationError> {
        config.validate()?;
        if let Some((_, v)) = inputs.iter().find(|(_, v)| v.len() != config.p) {
            return Err(EstimationError::TooFewCoordinates(v.len()));
        }
        let coordinates = (0..config.p)
            .map(|j| initial_state(&config.backend, &column(&inputs, j), None))
            .collect::<Result<_, _>>()
            .map_err(protocol_error)?;
        Ok(DseState {
            config,
            inputs,
            coordinates,
        })
    }

    pub fn config(&self) -> &DseConfig {
        &self.config
    }

    pub fn inputs(&self) -> &BTreeMap<NodeId, Vec<f64>> {
        &self.inputs
    }

    pub fn coordinates(&self) -> &[ProtocolState] {
        &self.coordinates
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.inputs.keys().copied().collect()
    }

    /// Advances from `g_now` to `g_next`. Arriving agents (ascending order)
    /// draw fresh inputs; departing agents lose theirs.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        g_now: &NetworkSnapshot,
        g_next: &NetworkSnapshot,
        departures: DepartureSemantics,
        rng: &mut R,
    ) -> Result<(), EstimationError> {
        let mut next_inputs: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for &node in g_next.nodes() {
            let v = match g_now.contains(node) {
                true => self
                    .inputs
                    .get(&node)
                    .cloned()
                    .ok_or(ProtocolError::MissingInput(node))
                    .map_err(protocol_error)?,
                false => dse_generate(self.config.p, rng),
            };
            next_inputs.insert(node, v);
        }
        let coordinates = self
            .coordinates
            .iter()
            .enumerate()
            .map(|(j, state)| {
                open_step(
                    g_now,
                    g_next,
                    state,
                    &self.config.backend,
                    &column(&self.inputs, j),
                    &column(&next_inputs, j),
                    departures,
                )
            })
            .collect::<Result<_, _>>()
            .map_err(protocol_error)?;
        self.coordinates = coordinates;
        self.inputs = next_inputs;
        Ok(())
    }

    /// Consensus output of `node` for every coordinate.
    pub fn agent_vector(&self, node: NodeId) -> Option<Vec<f64>> {
        self.coordinates.iter().map(|c| c.output(node)).collect()
    }

    /// Every agent's current estimate, in ascending agent order.
    pub fn estimates(&self) -> Result<BTreeMap<NodeId, f64>, EstimationError> {
        self.inputs
            .keys()
            .map(|&n| {
                let v = self.agent_vector(n).ok_or(ProtocolError::MissingState(n)).map_err(protocol_error)?;
                Ok((n, mle_estimate(&v)?))
            })
            .collect()
    }

    /// Coordinate maxima over the agents currently in the network.
    pub fn exact_maxima(&self) -> Vec<f64> {
        (0..self.config.p)
            .map(|j| self.inputs.values().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Estimate computed from the exact maxima.
    pub fn exact_estimate(&self) -> Result<f64, EstimationError> {
        mle_estimate(&self.exact_maxima())
    }
}

fn column(inputs: &BTreeMap<NodeId, Vec<f64>>, j: usize) -> BTreeMap<NodeId, f64> {
    inputs.iter().map(|(&n, v)| (n, v[j])).collect()
}

fn protocol_error(e: ProtocolError) -> EstimationError {
    EstimationError::InvalidParameters(e.to_string())
}

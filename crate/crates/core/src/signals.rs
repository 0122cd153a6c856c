//! Per-agent exogenous reference signals with a certified per-tick slope bound.
//!
//! Signals are pure functions of the tick. The random walk is expanded from a
//! random stream once (at scenario load) into a stored path, after which
//! sampling is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SignalError;
use crate::graph::NodeId;

/// Absolute slack when comparing observed per-tick changes against the
/// declared bound; piecewise-linear ramps accumulate a few ulps.
pub const SLOPE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    Constant {
        value: f64,
    },
    /// Linear interpolation between `(tick, value)` points; holds the first
    /// value before the first point and the last value after the last one.
    PiecewiseLinear {
        points: Vec<(u64, f64)>,
    },
    /// `initial` until the first step tick, then the value of the latest step
    /// whose tick is `<= k`.
    PiecewiseConstant {
        initial: f64,
        steps: Vec<(u64, f64)>,
    },
    Sinusoid {
        offset: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Steps drawn uniformly from `[-step_bound, step_bound]`, clamped to
    /// `[min, max]`. Must be expanded with [`SignalSpec::expand`] before sampling.
    RandomWalkClamped {
        start: f64,
        step_bound: f64,
        min: f64,
        max: f64,
    },
    /// A stored trajectory; holds its last value past the end.
    Path {
        values: Vec<f64>,
        slope_bound: f64,
    },
}

impl SignalSpec {
    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: String| Err(SignalError::Invalid(m));
        match self {
            SignalSpec::PiecewiseLinear { points } => {
                if points.is_empty() {
                    return bad("piecewise_linear needs at least one point".into());
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("piecewise_linear ticks must be strictly increasing".into());
                }
            }
            SignalSpec::PiecewiseConstant { steps, .. } => {
                if steps.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("piecewise_constant ticks must be strictly increasing".into());
                }
            }
            SignalSpec::Sinusoid { period, .. } if !(*period > 0.0) => {
                return bad(format!("sinusoid period must be positive, got {period}"));
            }
            SignalSpec::RandomWalkClamped {
                start,
                step_bound,
                min,
                max,
            } => {
                if !(*step_bound >= 0.0) || min > max || start < min || start > max {
                    return bad(format!(
                        "random walk needs step_bound >= 0 and min <= start <= max, got start {start}, step {step_bound}, [{min}, {max}]"
                    ));
                }
            }
            SignalSpec::Path { values, .. } if values.is_empty() => {
                return bad("path needs at least one value".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Declared bound on `|u(k+1) - u(k)|`.
    pub fn slope_bound(&self) -> f64 {
        match self {
            SignalSpec::Constant { .. } => 0.0,
            SignalSpec::PiecewiseLinear { points } => points
                .windows(2)
                .map(|w| (w[1].1 - w[0].1).abs() / (w[1].0 - w[0].0) as f64)
                .fold(0.0, f64::max),
            SignalSpec::PiecewiseConstant { initial, steps } => {
                let mut prev = *initial;
                let mut bound: f64 = 0.0;
                for &(_, v) in steps {
                    bound = bound.max((v - prev).abs());
                    prev = v;
                }
                bound
            }
            SignalSpec::Sinusoid {
                amplitude, period, ..
            } => amplitude.abs() * TAU / period,
            SignalSpec::RandomWalkClamped { step_bound, .. } => *step_bound,
            SignalSpec::Path { slope_bound, .. } => *slope_bound,
        }
    }

    pub fn sample(&self, k: u64) -> Result<f64, SignalError> {
        Ok(match self {
            SignalSpec::Constant { value } => *value,
            SignalSpec::PiecewiseLinear { points } => {
                let (first, last) = (points[0], points[points.len() - 1]);
                if k <= first.0 {
                    first.1
                } else if k >= last.0 {
                    last.1
                } else {
                    let idx = points.partition_point(|&(t, _)| t <= k);
                    let (t0, v0) = points[idx - 1];
                    let (t1, v1) = points[idx];
                    v0 + (v1 - v0) * ((k - t0) as f64 / (t1 - t0) as f64)
                }
            }
            SignalSpec::PiecewiseConstant { initial, steps } => {
                let idx = steps.partition_point(|&(t, _)| t <= k);
                if idx == 0 {
                    *initial
                } else {
                    steps[idx - 1].1
                }
            }
            SignalSpec::Sinusoid {
                offset,
                amplitude,
                period,
                phase,
            } => offset + amplitude * (TAU * k as f64 / period + phase).sin(),
            SignalSpec::RandomWalkClamped { .. } => {
                return Err(SignalError::Invalid(
                    "random walk must be expanded before sampling".into(),
                ))
            }
            SignalSpec::Path { values, .. } => values[(k as usize).min(values.len() - 1)],
        })
    }

    /// Expands a random walk into a stored path over `0..=horizon`; other
    /// kinds are returned unchanged.
    pub fn expand<R: Rng + ?Sized>(&self, horizon: u64, rng: &mut R) -> SignalSpec {
        match *self {
            SignalSpec::RandomWalkClamped {
                start,
                step_bound,
                min,
                max,
            } => {
                let mut values = Vec::with_capacity(horizon as usize + 1);
                let mut v = start;
                values.push(v);
                for _ in 0..horizon {
                    let step = if step_bound > 0.0 {
                        rng.random_range(-step_bound..=step_bound)
                    } else {
                        0.0
                    };
                    v = (v + step).clamp(min, max);
                    values.push(v);
                }
                SignalSpec::Path {
                    values,
                    slope_bound: step_bound,
                }
            }
            _ => self.clone(),
        }
    }

    /// The signal `-u`.
    pub fn negated(&self) -> SignalSpec {
        match self {
            SignalSpec::Constant { value } => SignalSpec::Constant { value: -value },
            SignalSpec::PiecewiseLinear { points } => SignalSpec::PiecewiseLinear {
                points: points.iter().map(|&(t, v)| (t, -v)).collect(),
            },
            SignalSpec::PiecewiseConstant { initial, steps } => SignalSpec::PiecewiseConstant {
                initial: -initial,
                steps: steps.iter().map(|&(t, v)| (t, -v)).collect(),
            },
            SignalSpec::Sinusoid {
                offset,
                amplitude,
                period,
                phase,
            } => SignalSpec::Sinusoid {
                offset: -offset,
                amplitude: -amplitude,
                period: *period,
                phase: *phase,
            },
            SignalSpec::RandomWalkClamped {
                start,
                step_bound,
                min,
                max,
            } => SignalSpec::RandomWalkClamped {
                start: -start,
                step_bound: *step_bound,
                min: -max,
                max: -min,
            },
            SignalSpec::Path {
                values,
                slope_bound,
            } => SignalSpec::Path {
                values: values.iter().map(|v| -v).collect(),
                slope_bound: *slope_bound,
            },
        }
    }
}

/// Signals for every agent that may ever be active.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalBank {
    specs: BTreeMap<NodeId, SignalSpec>,
}

impl SignalBank {
    pub fn new(specs: BTreeMap<NodeId, SignalSpec>) -> Result<Self, SignalError> {
        for spec in specs.values() {
            spec.validate()?;
        }
        Ok(SignalBank { specs })
    }

    pub fn uniform(nodes: impl IntoIterator<Item = NodeId>, spec: SignalSpec) -> Result<Self, SignalError> {
        Self::new(nodes.into_iter().map(|n| (n, spec.clone())).collect())
    }

    pub fn specs(&self) -> &BTreeMap<NodeId, SignalSpec> {
        &self.specs
    }

    pub fn spec(&self, node: NodeId) -> Result<&SignalSpec, SignalError> {
        self.specs.get(&node).ok_or(SignalError::MissingSpec(node))
    }

    /// Global slope bound: the largest per-agent declared bound.
    pub fn slope_bound(&self) -> f64 {
        self.specs.values().map(SignalSpec::slope_bound).fold(0.0, f64::max)
    }

    pub fn sample(&self, node: NodeId, k: u64) -> Result<f64, SignalError> {
        self.spec(node)?.sample(k)
    }

    /// Inputs of the `active` agents at tick `k`.
    pub fn inputs(&self, active: &BTreeSet<NodeId>, k: u64) -> Result<BTreeMap<NodeId, f64>, SignalError> {
        active.iter().map(|&n| Ok((n, self.sample(n, k)?))).collect()
    }

    /// Scans `|u(k+1) - u(k)|` over every agent and `k < horizon` and returns
    /// the largest observed change, failing if it exceeds the declared bound.
    pub fn certify_slope(&self, horizon: u64) -> Result<f64, SignalError> {
        let declared = self.slope_bound();
        let mut observed: f64 = 0.0;
        for (&agent, spec) in &self.specs {
            let mut prev = spec.sample(0)?;
            for k in 0..horizon {
                let next = spec.sample(k + 1)?;
                let change = (next - prev).abs();
                if change > declared + SLOPE_TOLERANCE {
                    return Err(SignalError::SlopeExceeded {
                        agent,
                        tick: k,
                        observed: change,
                        declared,
                    });
                }
                observed = observed.max(change);
                prev = next;
            }
        }
        Ok(observed)
    }

    pub fn max_signal(&self, active: &BTreeSet<NodeId>, k: u64) -> Result<f64, SignalError> {
        self.extremum(active, k, f64::max)
    }

    pub fn min_signal(&self, active: &BTreeSet<NodeId>, k: u64) -> Result<f64, SignalError> {
        self.extremum(active, k, f64::min)
    }

    fn extremum(
        &self,
        active: &BTreeSet<NodeId>,
        k: u64,
        pick: fn(f64, f64) -> f64,
    ) -> Result<f64, SignalError> {
        let mut iter = active.iter();
        let first = iter.next().ok_or(SignalError::EmptyActiveSet)?;
        iter.try_fold(self.sample(*first, k)?, |acc, &n| Ok(pick(acc, self.sample(n, k)?)))
    }

    pub fn negated(&self) -> SignalBank {
        SignalBank {
            specs: self.specs.iter().map(|(&n, s)| (n, s.negated())).collect(),
        }
    }

    /// Expands every random walk over `0..=horizon`, one derived stream per
    /// agent so adding an agent never changes another agent's path.
    pub fn expanded(&self, horizon: u64, root_seed: u64) -> SignalBank {
        SignalBank {
            specs: self
                .specs
                .iter()
                .map(|(&n, s)| {
                    let mut rng = crate::streams::derive(root_seed, crate::streams::SIGNALS, n.0 as u64);
                    (n, s.expand(horizon, &mut rng))
                })
                .collect(),
        }
    }
}

/// Which reading of the six-agent test signal to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Line6Reading {
    /// Slope `-Pi` on `[60, 80)`, hold, slope `+Pi` on `[100, 140)`, hold.
    Ramp,
    /// Literal levels: `u(0) - Pi` on `[60, 80)`, held, `u(0) + Pi` on `[100, 140)`, held.
    Step,
}

/// Reference signal of the sixth agent in the line-topology experiment,
/// starting at `u0` with per-tick change `slope`.
pub fn line6_signal(u0: f64, slope: f64, reading: Line6Reading) -> SignalSpec {
    match reading {
        Line6Reading::Ramp => {
            let low = u0 - slope * 20.0;
            let high = low + slope * 40.0;
            SignalSpec::PiecewiseLinear {
                points: vec![(0, u0), (60, u0), (80, low), (100, low), (140, high)],
            }
        }
        Line6Reading::Step => SignalSpec::PiecewiseConstant {
            initial: u0,
            steps: vec![(60, u0 - slope), (100, u0 + slope)],
        },
    }
}

/// The six-agent bank: agents 1..=5 constant at `u0`, agent 6 per `reading`.
pub fn line6_bank(u0: f64, slope: f64, reading: Line6Reading) -> SignalBank {
    let mut specs: BTreeMap<NodeId, SignalSpec> = (1..=5)
        .map(|i| (NodeId(i), SignalSpec::Constant { value: u0 }))
        .collect();
    specs.insert(NodeId(6), line6_signal(u0, slope, reading));
    SignalBank::new(specs).expect("static specs are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[u32]) -> BTreeSet<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn constant_samples() {
        let bank = SignalBank::uniform(set(&[1, 2]), SignalSpec::Constant { value: 0.2 }).unwrap();
        for k in [0, 1, 17, 10_000] {
            assert_eq!(bank.sample(NodeId(1), k).unwrap(), 0.2);
        }
        assert_eq!(bank.certify_slope(100).unwrap(), 0.0);
        assert_eq!(bank.max_signal(&set(&[1, 2]), 3).unwrap(), 0.2);
        assert_eq!(bank.min_signal(&set(&[1, 2]), 3).unwrap(), 0.2);
        assert_eq!(bank.sample(NodeId(9), 0), Err(SignalError::MissingSpec(NodeId(9))));
        assert_eq!(bank.max_signal(&set(&[]), 0), Err(SignalError::EmptyActiveSet));
    }

    #[test]
    fn line6_ramp_values() {
        let s = line6_signal(0.2, 0.02, Line6Reading::Ramp);
        assert_eq!(s.sample(0).unwrap(), 0.2);
        assert_eq!(s.sample(59).unwrap(), 0.2);
        assert!((s.sample(70).unwrap() - 0.0).abs() < 1e-15);
        assert!((s.sample(80).unwrap() + 0.2).abs() < 1e-15);
        assert!((s.sample(99).unwrap() + 0.2).abs() < 1e-15);
        assert!((s.sample(140).unwrap() - 0.6).abs() < 1e-15);
        assert!((s.sample(500).unwrap() - 0.6).abs() < 1e-15);
        let bank = line6_bank(0.2, 0.02, Line6Reading::Ramp);
        assert!((bank.slope_bound() - 0.02).abs() < 1e-15);
        let observed = bank.certify_slope(300).unwrap();
        assert!((observed - 0.02).abs() < 1e-12, "{observed}");
    }

    #[test]
    fn line6_step_reading_jumps_twice_pi() {
        let bank = line6_bank(0.2, 0.02, Line6Reading::Step);
        assert!((bank.sample(NodeId(6), 60).unwrap() - 0.18).abs() < 1e-15);
        assert!((bank.sample(NodeId(6), 99).unwrap() - 0.18).abs() < 1e-15);
        assert!((bank.sample(NodeId(6), 100).unwrap() - 0.22).abs() < 1e-15);
        assert!((bank.slope_bound() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn breakpoint_semantics() {
        let s = SignalSpec::PiecewiseConstant {
            initial: 1.0,
            steps: vec![(10, 3.0)],
        };
        assert_eq!(s.sample(9).unwrap(), 1.0);
        assert_eq!(s.sample(10).unwrap(), 3.0);
    }

    #[test]
    fn sinusoid_slope_within_declared() {
        let s = SignalSpec::Sinusoid {
            offset: 0.5,
            amplitude: 0.3,
            period: 40.0,
            phase: 0.1,
        };
        let bank = SignalBank::uniform(set(&[1]), s).unwrap();
        let observed = bank.certify_slope(400).unwrap();
        assert!(observed <= 0.3 * TAU / 40.0);
        assert!(observed > 0.9 * 0.3 * TAU / 40.0);
    }

    #[test]
    fn undeclared_slope_is_rejected() {
        // A path whose declared bound understates its jumps.
        let s = SignalSpec::Path {
            values: vec![0.0, 0.5, 0.5],
            slope_bound: 0.1,
        };
        let bank = SignalBank::uniform(set(&[4]), s).unwrap();
        assert!(matches!(
            bank.certify_slope(5),
            Err(SignalError::SlopeExceeded { agent: NodeId(4), tick: 0, .. })
        ));
    }

    #[test]
    fn extremum_drops_when_max_holder_leaves() {
        let specs = [(1, 0.3), (2, 0.9), (3, 0.7)]
            .into_iter()
            .map(|(n, v)| (NodeId(n), SignalSpec::Constant { value: v }))
            .collect();
        let bank = SignalBank::new(specs).unwrap();
        assert_eq!(bank.max_signal(&set(&[1, 2, 3]), 0).unwrap(), 0.9);
        assert_eq!(bank.max_signal(&set(&[1, 3]), 0).unwrap(), 0.7);
        assert_eq!(bank.min_signal(&set(&[2, 3]), 0).unwrap(), 0.7);
    }

    #[test]
    fn random_walk_is_bounded_and_reproducible() {
        let walk = SignalSpec::RandomWalkClamped {
            start: 0.5,
            step_bound: 0.05,
            min: 0.0,
            max: 1.0,
        };
        let bank = SignalBank::uniform(set(&[1, 2, 3]), walk).unwrap();
        assert!(bank.sample(NodeId(1), 0).is_err());
        let a = bank.expanded(200, 9);
        assert_eq!(a, bank.expanded(200, 9));
        assert!(a.certify_slope(200).unwrap() <= 0.05);
        for k in 0..=200 {
            let v = a.sample(NodeId(2), k).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
        assert_ne!(a.sample(NodeId(1), 50), a.sample(NodeId(2), 50));
    }

    #[test]
    fn negation_duality_of_extrema() {
        let specs = [
            SignalSpec::Sinusoid { offset: 0.1, amplitude: 0.4, period: 13.0, phase: 0.0 },
            line6_signal(0.2, 0.02, Line6Reading::Ramp),
            SignalSpec::PiecewiseConstant { initial: -1.0, steps: vec![(5, 2.0)] },
        ];
        let bank = SignalBank::new(
            specs.into_iter().enumerate().map(|(i, s)| (NodeId(i as u32 + 1), s)).collect(),
        )
        .unwrap();
        let neg = bank.negated();
        let all = set(&[1, 2, 3]);
        for k in 0..200 {
            assert_eq!(bank.min_signal(&all, k).unwrap(), -neg.max_signal(&all, k).unwrap());
        }
        assert_eq!(bank.slope_bound(), neg.slope_bound());
    }
}

//! Round-synchronous local update rules for dynamic max/min-consensus.
//!
//! * Approximate variant: one scalar per agent,
//!   `x_i' = max( max_{j in N_i + i} x_j - alpha, u_i )` (min variant: `min`, `+alpha`).
//! * Exact variant: a cascade of `depth + 1` levels per agent. Level 0 loads
//!   the agent's input; level `l` takes the neighborhood max (min) of level
//!   `l - 1` from the previous tick. The output is the last level.
//!
//! Every step is a pure function of the tick-`k` state: all reads come from
//! the old state and all writes go to the new one.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;
use crate::graph::{partition_nodes, NetworkSnapshot, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Max,
    Min,
}

impl Mode {
    fn pick(self, a: f64, b: f64) -> f64 {
        match self {
            Mode::Max => a.max(b),
            Mode::Min => a.min(b),
        }
    }

    /// Moves a neighbor's value one hop "away" from the target extremum.
    fn decay(self, value: f64, alpha: f64) -> f64 {
        match self {
            Mode::Max => value - alpha,
            Mode::Min => value + alpha,
        }
    }

    pub fn flipped(self) -> Mode {
        match self {
            Mode::Max => Mode::Min,
            Mode::Min => Mode::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    Approximate { alpha: f64 },
    Exact { depth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub mode: Mode,
    #[serde(flatten)]
    pub variant: Variant,
}

impl ProtocolParams {
    pub fn approximate(mode: Mode, alpha: f64) -> Self {
        ProtocolParams {
            mode,
            variant: Variant::Approximate { alpha },
        }
    }

    pub fn exact(mode: Mode, depth: usize) -> Self {
        ProtocolParams {
            mode,
            variant: Variant::Exact { depth },
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match self.variant {
            Variant::Approximate { alpha } if !(alpha > 0.0 && alpha < 1.0) => Err(
                ProtocolError::InvalidParameters(format!("alpha must lie in (0, 1), got {alpha}")),
            ),
            Variant::Exact { depth: 0 } => Err(ProtocolError::InvalidParameters(
                "cascade depth (diameter upper bound) must be >= 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Short protocol label: ADMC, ADmC, EDMC or EDmC.
    pub fn label(&self) -> &'static str {
        match (self.variant, self.mode) {
            (Variant::Approximate { .. }, Mode::Max) => "ADMC",
            (Variant::Approximate { .. }, Mode::Min) => "ADmC",
            (Variant::Exact { .. }, Mode::Max) => "EDMC",
            (Variant::Exact { .. }, Mode::Min) => "EDmC",
        }
    }
}

/// What remaining agents may read from agents that depart at the same tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepartureSemantics {
    /// Departing agents still broadcast their tick-`k` state.
    #[default]
    ReadBeforeDeparture,
    /// Departing agents are invisible to the final update.
    ExcludeDeparting,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentState {
    Scalar(f64),
    Cascade(Vec<f64>),
}

impl AgentState {
    pub fn output(&self) -> f64 {
        match self {
            AgentState::Scalar(x) => *x,
            AgentState::Cascade(levels) => *levels.last().expect("cascade is never empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolState {
    Scalar(BTreeMap<NodeId, f64>),
    Cascade {
        depth: usize,
        levels: BTreeMap<NodeId, Vec<f64>>,
    },
}

impl ProtocolState {
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        match self {
            ProtocolState::Scalar(x) => x.keys().copied().collect(),
            ProtocolState::Cascade { levels, .. } => levels.keys().copied().collect(),
        }
    }

    pub fn output(&self, node: NodeId) -> Option<f64> {
        match self {
            ProtocolState::Scalar(x) => x.get(&node).copied(),
            ProtocolState::Cascade { levels, .. } => levels.get(&node).and_then(|l| l.last().copied()),
        }
    }

    /// `(agent, output)` pairs in ascending agent order.
    pub fn outputs(&self) -> Vec<(NodeId, f64)> {
        match self {
            ProtocolState::Scalar(x) => x.iter().map(|(&n, &v)| (n, v)).collect(),
            ProtocolState::Cascade { levels, .. } => levels
                .iter()
                .map(|(&n, l)| (n, *l.last().expect("cascade is never empty")))
                .collect(),
        }
    }

    /// Elementwise negation of every stored value.
    pub fn negated(&self) -> ProtocolState {
        match self {
            ProtocolState::Scalar(x) => ProtocolState::Scalar(x.iter().map(|(&n, &v)| (n, -v)).collect()),
            ProtocolState::Cascade { depth, levels } => ProtocolState::Cascade {
                depth: *depth,
                levels: levels
                    .iter()
                    .map(|(&n, l)| (n, l.iter().map(|v| -v).collect()))
                    .collect(),
            },
        }
    }
}

/// State of an agent that joins (or every agent at start): its current input,
/// replicated over every cascade level.
pub fn init_agent(params: &ProtocolParams, u_now: f64) -> AgentState {
    match params.variant {
        Variant::Approximate { .. } => AgentState::Scalar(u_now),
        Variant::Exact { depth } => AgentState::Cascade(vec![u_now; depth + 1]),
    }
}

/// State at the first tick.
///
/// Without explicit `initial` values every agent starts from its input. With
/// them, the scalar state is set directly; for a cascade the output levels
/// `1..=depth` take the initial value while level 0 holds the input, which
/// plays the role of the previous tick's input.
pub fn initial_state(
    params: &ProtocolParams,
    inputs: &BTreeMap<NodeId, f64>,
    initial: Option<&BTreeMap<NodeId, f64>>,
) -> Result<ProtocolState, ProtocolError> {
    let start = |n: NodeId, u: f64| -> Result<f64, ProtocolError> {
        match initial {
            Some(map) => map.get(&n).copied().ok_or(ProtocolError::MissingState(n)),
            None => Ok(u),
        }
    };
    Ok(match params.variant {
        Variant::Approximate { .. } => ProtocolState::Scalar(
            inputs
                .iter()
                .map(|(&n, &u)| Ok((n, start(n, u)?)))
                .collect::<Result<_, ProtocolError>>()?,
        ),
        Variant::Exact { depth } => ProtocolState::Cascade {
            depth,
            levels: inputs
                .iter()
                .map(|(&n, &u)| {
                    let mut levels = vec![start(n, u)?; depth + 1];
                    levels[0] = u;
                    Ok((n, levels))
                })
                .collect::<Result<_, ProtocolError>>()?,
        },
    })
}

fn scalar_update<'a>(
    g: &NetworkSnapshot,
    x: &BTreeMap<NodeId, f64>,
    u: &BTreeMap<NodeId, f64>,
    alpha: f64,
    mode: Mode,
    targets: impl Iterator<Item = &'a NodeId>,
) -> Result<BTreeMap<NodeId, f64>, ProtocolError> {
    let read = |n: NodeId| x.get(&n).copied().ok_or(ProtocolError::MissingState(n));
    targets
        .map(|&i| {
            let mut best = mode.decay(read(i)?, alpha);
            for &j in g.neighbors(i)? {
                best = mode.pick(best, mode.decay(read(j)?, alpha));
            }
            let input = u.get(&i).copied().ok_or(ProtocolError::MissingInput(i))?;
            Ok((i, mode.pick(best, input)))
        })
        .collect()
}

fn check_cascades(levels: &BTreeMap<NodeId, Vec<f64>>, depth: usize) -> Result<(), ProtocolError> {
    for (&agent, l) in levels {
        if l.len() != depth + 1 {
            return Err(ProtocolError::CascadeLength {
                agent,
                found: l.len(),
                expected: depth + 1,
            });
        }
    }
    Ok(())
}

fn cascade_update<'a>(
    g: &NetworkSnapshot,
    levels: &BTreeMap<NodeId, Vec<f64>>,
    depth: usize,
    u: &BTreeMap<NodeId, f64>,
    mode: Mode,
    targets: impl Iterator<Item = &'a NodeId>,
) -> Result<BTreeMap<NodeId, Vec<f64>>, ProtocolError> {
    check_cascades(levels, depth)?;
    let read = |n: NodeId| levels.get(&n).ok_or(ProtocolError::MissingState(n));
    targets
        .map(|&i| {
            let own = read(i)?;
            let mut next = own.clone();
            next[0] = u.get(&i).copied().ok_or(ProtocolError::MissingInput(i))?;
            next[1..].copy_from_slice(&own[..depth]);
            for &j in g.neighbors(i)? {
                let theirs = read(j)?;
                for l in 1..=depth {
                    next[l] = mode.pick(next[l], theirs[l - 1]);
                }
            }
            Ok((i, next))
        })
        .collect()
}

/// Approximate max step over every agent of `g`.
pub fn admc_step(
    g: &NetworkSnapshot,
    x: &BTreeMap<NodeId, f64>,
    u: &BTreeMap<NodeId, f64>,
    alpha: f64,
) -> Result<BTreeMap<NodeId, f64>, ProtocolError> {
    scalar_update(g, x, u, alpha, Mode::Max, g.nodes().iter())
}

/// Approximate min step: `x_i' = min( min_{j in N_i + i} x_j + alpha, u_i )`.
pub fn admc_min_step(
    g: &NetworkSnapshot,
    x: &BTreeMap<NodeId, f64>,
    u: &BTreeMap<NodeId, f64>,
    alpha: f64,
) -> Result<BTreeMap<NodeId, f64>, ProtocolError> {
    scalar_update(g, x, u, alpha, Mode::Min, g.nodes().iter())
}

/// Exact max step: shift-and-max through a cascade of `depth + 1` levels.
pub fn edmc_step(
    g: &NetworkSnapshot,
    levels: &BTreeMap<NodeId, Vec<f64>>,
    depth: usize,
    u: &BTreeMap<NodeId, f64>,
) -> Result<BTreeMap<NodeId, Vec<f64>>, ProtocolError> {
    cascade_update(g, levels, depth, u, Mode::Max, g.nodes().iter())
}

pub fn edmc_min_step(
    g: &NetworkSnapshot,
    levels: &BTreeMap<NodeId, Vec<f64>>,
    depth: usize,
    u: &BTreeMap<NodeId, f64>,
) -> Result<BTreeMap<NodeId, Vec<f64>>, ProtocolError> {
    cascade_update(g, levels, depth, u, Mode::Min, g.nodes().iter())
}

/// One closed-network step of the configured protocol.
pub fn step(
    g: &NetworkSnapshot,
    state: &ProtocolState,
    params: &ProtocolParams,
    u: &BTreeMap<NodeId, f64>,
) -> Result<ProtocolState, ProtocolError> {
    update_targets(g, state, params, u, g.nodes())
}

fn update_targets(
    g: &NetworkSnapshot,
    state: &ProtocolState,
    params: &ProtocolParams,
    u: &BTreeMap<NodeId, f64>,
    targets: &BTreeSet<NodeId>,
) -> Result<ProtocolState, ProtocolError> {
    match (state, params.variant) {
        (ProtocolState::Scalar(x), Variant::Approximate { alpha }) => Ok(ProtocolState::Scalar(
            scalar_update(g, x, u, alpha, params.mode, targets.iter())?,
        )),
        (ProtocolState::Cascade { depth, levels }, Variant::Exact { depth: d }) if *depth == d => {
            Ok(ProtocolState::Cascade {
                depth: d,
                levels: cascade_update(g, levels, d, u, params.mode, targets.iter())?,
            })
        }
        _ => Err(ProtocolError::VariantMismatch),
    }
}

/// Advances an open network from tick `k` to `k + 1`.
///
/// Departing agents are dropped, remaining agents apply the update rule on
/// `g_now` with inputs `u_now`, and arriving agents are initialized from their
/// tick-`k+1` input `u_next`. The result is keyed by the nodes of `g_next`.
pub fn open_step(
    g_now: &NetworkSnapshot,
    g_next: &NetworkSnapshot,
    state: &ProtocolState,
    params: &ProtocolParams,
    u_now: &BTreeMap<NodeId, f64>,
    u_next: &BTreeMap<NodeId, f64>,
    departures: DepartureSemantics,
) -> Result<ProtocolState, ProtocolError> {
    let partition = partition_nodes(g_now.nodes(), g_next.nodes());
    let restricted;
    let view = match departures {
        DepartureSemantics::ReadBeforeDeparture => g_now,
        DepartureSemantics::ExcludeDeparting => {
            restricted = g_now.induced(&partition.remaining);
            &restricted
        }
    };
    let mut next = update_targets(view, state, params, u_now, &partition.remaining)?;
    for &node in &partition.arriving {
        let u = u_next.get(&node).copied().ok_or(ProtocolError::MissingInput(node))?;
        match (&mut next, init_agent(params, u)) {
            (ProtocolState::Scalar(x), AgentState::Scalar(v)) => {
                x.insert(node, v);
            }
            (ProtocolState::Cascade { levels, .. }, AgentState::Cascade(v)) => {
                levels.insert(node, v);
            }
            _ => return Err(ProtocolError::VariantMismatch),
        }
    }
    Ok(next)
}

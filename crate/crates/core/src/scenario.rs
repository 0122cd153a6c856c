//! Declarative scenarios (TOML) and their realization into a graph timeline.
//!
//! ```toml
//! name = "example"
//! seed = 7
//! horizon = 200
//! initial_state = [0.0, 0.5, 1.0]
//!
//! [topology]
//! kind = "line"
//! n = 3
//!
//! [protocol]
//! mode = "max"
//! variant = "approximate"
//! alpha = 0.05
//!
//! [signals]
//! default = { kind = "constant", value = 0.2 }
//!
//! [signals.agents.3]
//! kind = "sinusoid"
//! offset = 0.0
//! amplitude = 0.1
//! period = 100.0
//! ```

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    apply_churn, barabasi_albert, complete_graph, line_graph, random_connected, star_graph, ChurnEvent,
    GrownGraph, NetworkSnapshot, NodeId,
};
use crate::protocols::{DepartureSemantics, Mode, ProtocolParams, Variant};
use crate::signals::{SignalBank, SignalSpec};
use crate::size_estimation::DseConfig;
use crate::streams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Line {
        n: usize,
    },
    Complete {
        n: usize,
    },
    /// Hub `1` with leaves `2..=leaves + 1`.
    Star {
        leaves: usize,
    },
    /// Preferential attachment grown from a line of `seed_line` nodes.
    BarabasiAlbert {
        n: usize,
        #[serde(default = "default_seed_line")]
        seed_line: usize,
        #[serde(default = "default_edges_per_node")]
        edges_per_node: usize,
    },
    /// Erdős–Rényi graph on nodes `1..=n`, redrawn until connected.
    RandomConnected {
        n: usize,
        edge_prob: f64,
        #[serde(default = "default_attempts")]
        max_attempts: usize,
    },
    Explicit {
        nodes: Vec<u32>,
        edges: Vec<(u32, u32)>,
    },
}

fn default_seed_line() -> usize {
    5
}
fn default_edges_per_node() -> usize {
    2
}
fn default_attempts() -> usize {
    1000
}

impl TopologySpec {
    /// Builds the universe graph. Insertion order is ascending node id except
    /// for grown graphs.
    pub fn build(&self, root_seed: u64) -> Result<GrownGraph> {
        let mut rng = streams::named(root_seed, streams::TOPOLOGY);
        let graph = match self {
            TopologySpec::Line { n } => line_graph(*n)?,
            TopologySpec::Complete { n } => complete_graph(*n)?,
            TopologySpec::Star { leaves } => star_graph(*leaves)?,
            TopologySpec::BarabasiAlbert {
                n,
                seed_line,
                edges_per_node,
            } => return Ok(barabasi_albert(&line_graph(*seed_line)?, *n, *edges_per_node, &mut rng)?),
            TopologySpec::RandomConnected {
                n,
                edge_prob,
                max_attempts,
            } => random_connected(*n, *edge_prob, *max_attempts, &mut rng)?,
            TopologySpec::Explicit { nodes, edges } => NetworkSnapshot::new(
                nodes.iter().map(|&n| NodeId(n)),
                edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))),
            )?,
        };
        let insertion_order = graph.nodes().iter().copied().collect();
        Ok(GrownGraph { graph, insertion_order })
    }
}

/// One atomic network change: all listed deactivations, then activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledChange {
    pub tick: u64,
    #[serde(default)]
    pub deactivate: Vec<u32>,
    #[serde(default)]
    pub activate: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChurnSpec {
    #[default]
    None,
    /// Explicit changes; consecutive change ticks must be `dwell` apart.
    Schedule {
        dwell: u64,
        #[serde(default)]
        initially_inactive: Vec<u32>,
        events: Vec<ScheduledChange>,
    },
    /// Every `period` ticks a fresh `m` in `0..=max_removed`, different from
    /// the current one, is drawn and exactly the first `n - m` nodes in
    /// insertion order are active.
    InsertionSuffix { period: u64, max_removed: usize },
    /// Changes separated by `dwell + U{0..=extra_gap}` ticks, each toggling
    /// between one and `max_toggled` random nodes, redrawn until the result
    /// is connected with at least `min_active` nodes.
    RandomToggle {
        dwell: u64,
        #[serde(default)]
        extra_gap: u64,
        #[serde(default = "one")]
        max_toggled: usize,
        #[serde(default = "two")]
        min_active: usize,
    },
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}

const TOGGLE_ATTEMPTS: usize = 100;

impl ChurnSpec {
    /// Minimum spacing between network changes; `None` for a static network.
    pub fn dwell(&self) -> Option<u64> {
        match self {
            ChurnSpec::None => None,
            ChurnSpec::Schedule { dwell, .. } | ChurnSpec::RandomToggle { dwell, .. } => Some(*dwell),
            ChurnSpec::InsertionSuffix { period, .. } => Some(*period),
        }
    }

    fn validate(&self, horizon: u64) -> Result<()> {
        if self.dwell() == Some(0) {
            return Err(Error::Config("dwell time must be at least one tick".into()));
        }
        match self {
            ChurnSpec::Schedule { dwell, events, .. } => {
                let mut last: Option<u64> = None;
                for e in events {
                    if e.tick == 0 || e.tick >= horizon {
                        return Err(Error::Config(format!(
                            "change at tick {} lies outside (0, {horizon})",
                            e.tick
                        )));
                    }
                    if let Some(prev) = last {
                        if e.tick < prev + dwell {
                            return Err(Error::Assumption(format!(
                                "dwell-time assumption violated: changes at ticks {prev} and {} are closer than {dwell} ticks",
                                e.tick
                            )));
                        }
                    }
                    last = Some(e.tick);
                }
            }
            ChurnSpec::InsertionSuffix { max_removed: 0, .. } => {
                return Err(Error::Config("insertion-suffix churn needs max_removed >= 1".into()));
            }
            ChurnSpec::RandomToggle { max_toggled: 0, .. } => {
                return Err(Error::Config("random churn needs max_toggled >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalsSpec {
    /// Applied to every agent without an explicit entry.
    #[serde(default)]
    pub default: Option<SignalSpec>,
    /// Per-agent signals keyed by node id.
    #[serde(default)]
    pub agents: BTreeMap<String, SignalSpec>,
}

impl SignalsSpec {
    pub fn from_bank(bank: &SignalBank) -> Self {
        SignalsSpec {
            default: None,
            agents: bank.specs().iter().map(|(n, s)| (n.0.to_string(), s.clone())).collect(),
        }
    }

    /// Bank over `universe`.
    pub fn bank(&self, universe: &BTreeSet<NodeId>) -> Result<SignalBank> {
        let mut explicit = BTreeMap::new();
        for (key, spec) in &self.agents {
            let id: u32 = key
                .parse()
                .map_err(|_| Error::Config(format!("signal key {key:?} is not a node id")))?;
            if !universe.contains(&NodeId(id)) {
                return Err(Error::Config(format!("signal given for unknown node {id}")));
            }
            explicit.insert(NodeId(id), spec.clone());
        }
        let mut specs = BTreeMap::new();
        for &node in universe {
            let spec = match explicit.remove(&node) {
                Some(s) => s,
                None => self
                    .default
                    .clone()
                    .ok_or_else(|| Error::Config(format!("no signal for node {node} and no default")))?,
            };
            specs.insert(node, spec);
        }
        Ok(SignalBank::new(specs)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimationSpec {
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Write every `stride`-th tick to the trace file.
    #[serde(default = "stride_one")]
    pub stride: u64,
}

fn stride_one() -> u64 {
    1
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { stride: 1 }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub horizon: u64,
    /// Abort on any window whose guarantees do not apply, instead of only
    /// recording it in the summary.
    #[serde(default = "default_true")]
    pub strict: bool,
    /// Initial states of the initially active agents, ascending by id;
    /// defaults to their inputs.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    pub topology: TopologySpec,
    pub protocol: ProtocolParams,
    #[serde(default)]
    pub departures: DepartureSemantics,
    #[serde(default)]
    pub signals: Option<SignalsSpec>,
    #[serde(default)]
    pub size_estimation: Option<SizeEstimationSpec>,
    #[serde(default)]
    pub churn: ChurnSpec,
    #[serde(default)]
    pub trace: TraceOptions,
}

/// Graph sequence of a run: the initial graph and every change.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub universe: GrownGraph,
    pub initial: NetworkSnapshot,
    /// `(tick, graph from that tick on)`, ticks strictly increasing and > 0.
    pub changes: Vec<(u64, NetworkSnapshot)>,
}

impl Timeline {
    /// Ticks at which a window starts: 0 and every change.
    pub fn window_starts(&self) -> Vec<u64> {
        std::iter::once(0).chain(self.changes.iter().map(|c| c.0)).collect()
    }

    pub fn graph_at(&self, k: u64) -> &NetworkSnapshot {
        let idx = self.changes.partition_point(|c| c.0 <= k);
        if idx == 0 {
            &self.initial
        } else {
            &self.changes[idx - 1].1
        }
    }
}

impl Scenario {
    pub fn is_size_estimation(&self) -> bool {
        self.size_estimation.is_some()
    }

    pub fn dse_config(&self) -> Result<Option<DseConfig>> {
        self.size_estimation
            .map(|s| DseConfig::new(s.p, self.protocol).map_err(|e| Error::Config(e.to_string())))
            .transpose()
    }

    /// Signal bank over the universe with random walks expanded.
    pub fn signal_bank(&self, universe: &BTreeSet<NodeId>) -> Result<SignalBank> {
        let spec = self
            .signals
            .as_ref()
            .ok_or_else(|| Error::Config("consensus scenario without [signals]".into()))?;
        Ok(spec.bank(universe)?.expanded(self.horizon, self.seed))
    }

    /// Checks every constraint that does not need a simulation.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one tick".into()));
        }
        if self.trace.stride == 0 {
            return Err(Error::Config("trace stride must be at least one".into()));
        }
        self.protocol
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.churn.validate(self.horizon)?;
        let universe = self.topology.build(self.seed)?;
        let nodes = universe.graph.nodes().clone();
        match (&self.signals, &self.size_estimation) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either [signals] or [size_estimation], not both".into()))
            }
            (None, None) => return Err(Error::Config("missing [signals] or [size_estimation]".into())),
            (None, Some(_)) => {
                self.dse_config()?;
                if self.initial_state.is_some() {
                    return Err(Error::Config("size estimation starts from its draws; drop initial_state".into()));
                }
            }
            (Some(_), None) => {
                let bank = self.signal_bank(&nodes)?;
                let slope = bank.slope_bound();
                bank.certify_slope(self.horizon)?;
                if let Variant::Approximate { alpha } = self.protocol.variant {
                    if alpha <= slope {
                        let msg = format!(
                            "decay alpha = {alpha} must exceed the signal slope bound Pi = {slope}"
                        );
                        if self.strict {
                            return Err(Error::Assumption(msg));
                        }
                        log::warn!("{msg}");
                    }
                }
            }
        }
        if let ChurnSpec::Schedule {
            initially_inactive,
            events,
            ..
        } = &self.churn
        {
            let ids = initially_inactive
                .iter()
                .chain(events.iter().flat_map(|e| e.activate.iter().chain(&e.deactivate)));
            for &id in ids {
                if !nodes.contains(&NodeId(id)) {
                    return Err(Error::Config(format!("churn refers to unknown node {id}")));
                }
            }
        }
        if let Some(init) = &self.initial_state {
            let active = self.initial_active(&universe.graph)?;
            if init.len() != active.len() {
                return Err(Error::Config(format!(
                    "initial_state has {} values for {} initially active agents",
                    init.len(),
                    active.len()
                )));
            }
        }
        Ok(())
    }

    fn initial_active(&self, universe: &NetworkSnapshot) -> Result<BTreeSet<NodeId>> {
        let mut active = universe.nodes().clone();
        if let ChurnSpec::Schedule { initially_inactive, .. } = &self.churn {
            for id in initially_inactive {
                active.remove(&NodeId(*id));
            }
        }
        if active.is_empty() {
            return Err(Error::Config("no agent is initially active".into()));
        }
        Ok(active)
    }

    /// Explicit initial states keyed by agent, if any.
    pub fn initial_states(&self, initial: &NetworkSnapshot) -> Option<BTreeMap<NodeId, f64>> {
        self.initial_state
            .as_ref()
            .map(|v| initial.nodes().iter().copied().zip(v.iter().copied()).collect())
    }

    /// Draws the graph sequence. Fails with the offending tick if a graph is
    /// disconnected.
    pub fn realize(&self) -> Result<Timeline> {
        let universe = self.topology.build(self.seed)?;
        let initial = universe.graph.induced(&self.initial_active(&universe.graph)?);
        require_connected(&initial, 0)?;
        let mut rng = streams::named(self.seed, streams::CHURN);
        let mut changes = Vec::new();
        match &self.churn {
            ChurnSpec::None => {}
            ChurnSpec::Schedule { events, .. } => {
                let mut current = initial.clone();
                for e in events {
                    let batch = e
                        .deactivate
                        .iter()
                        .map(|&n| ChurnEvent::Deactivate(NodeId(n)))
                        .chain(e.activate.iter().map(|&n| ChurnEvent::Activate(NodeId(n))));
                    for event in batch {
                        current = apply_churn(&universe.graph, &current, event).map_err(|err| {
                            Error::Config(format!("churn at tick {}: {err}", e.tick))
                        })?;
                    }
                    require_connected(&current, e.tick)?;
                    changes.push((e.tick, current.clone()));
                }
            }
            ChurnSpec::InsertionSuffix { period, max_removed } => {
                let order = &universe.insertion_order;
                if *max_removed >= order.len() {
                    return Err(Error::Config(format!(
                        "cannot remove up to {max_removed} of {} nodes",
                        order.len()
                    )));
                }
                let mut removed = 0usize;
                let mut tick = *period;
                while tick < self.horizon {
                    let mut m = rng.random_range(0..*max_removed);
                    if m >= removed {
                        m += 1;
                    }
                    removed = m;
                    let keep: BTreeSet<NodeId> = order[..order.len() - m].iter().copied().collect();
                    let g = universe.graph.induced(&keep);
                    require_connected(&g, tick)?;
                    changes.push((tick, g));
                    tick += period;
                }
            }
            ChurnSpec::RandomToggle {
                dwell,
                extra_gap,
                max_toggled,
                min_active,
            } => {
                let all: Vec<NodeId> = universe.graph.nodes().iter().copied().collect();
                let mut current = initial.clone();
                let mut tick = dwell + rng.random_range(0..=*extra_gap);
                while tick < self.horizon {
                    for _ in 0..TOGGLE_ATTEMPTS {
                        let count = rng.random_range(1..=(*max_toggled).min(all.len()));
                        let mut active = current.nodes().clone();
                        for i in sample(&mut rng, all.len(), count) {
                            if !active.remove(&all[i]) {
                                active.insert(all[i]);
                            }
                        }
                        if active.len() < (*min_active).max(1) {
                            continue;
                        }
                        let g = universe.graph.induced(&active);
                        if g.is_connected()? {
                            current = g;
                            changes.push((tick, current.clone()));
                            break;
                        }
                    }
                    tick += dwell + rng.random_range(0..=*extra_gap);
                }
            }
        }
        Ok(Timeline {
            universe,
            initial,
            changes,
        })
    }

    /// The mirrored scenario: min instead of max (and vice versa) with
    /// negated signals and initial states. Random walks are expanded first,
    /// so the mirror sees exactly the negated paths.
    pub fn negated(&self) -> Result<Scenario> {
        let mut out = self.clone();
        out.name = format!("{}_negated", self.name);
        out.protocol.mode = self.protocol.mode.flipped();
        if self.signals.is_some() {
            let universe = self.topology.build(self.seed)?;
            let bank = self.signal_bank(universe.graph.nodes())?;
            out.signals = Some(SignalsSpec::from_bank(&bank.negated()));
        }
        out.initial_state = self
            .initial_state
            .as_ref()
            .map(|v| v.iter().map(|x| -x).collect());
        Ok(out)
    }

    /// Declared slope bound of the inputs; zero for size estimation, whose
    /// inputs only change when agents arrive.
    pub fn slope_bound(&self) -> Result<f64> {
        if self.is_size_estimation() {
            return Ok(0.0);
        }
        let universe = self.topology.build(self.seed)?;
        Ok(self.signal_bank(universe.graph.nodes())?.slope_bound())
    }

    pub fn target_mode(&self) -> Mode {
        self.protocol.mode
    }
}

fn require_connected(g: &NetworkSnapshot, tick: u64) -> Result<()> {
    if g.is_connected()? {
        Ok(())
    } else {
        Err(Error::Disconnected {
            tick,
            detail: format!("{} active nodes, {} edges", g.node_count(), g.edge_count()),
        })
    }
}

/// Parses and validates a scenario.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Loads a preset by name, or a scenario file by path.
pub fn load_scenario_file(path_or_preset: &str) -> Result<Scenario> {
    if let Some(text) = preset(path_or_preset) {
        return load_scenario(text);
    }
    let text = std::fs::read_to_string(path_or_preset).map_err(|e| Error::io(path_or_preset, e))?;
    load_scenario(&text)
}

/// Shipped scenarios, by name.
pub const PRESETS: [(&str, &str); 4] = [
    ("line6_admc", include_str!("../scenarios/line6_admc.toml")),
    ("line6_edmc", include_str!("../scenarios/line6_edmc.toml")),
    ("ba100_dse_admc", include_str!("../scenarios/ba100_dse_admc.toml")),
    ("ba100_dse_edmc", include_str!("../scenarios/ba100_dse_edmc.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Writes a scenario back to TOML.
pub fn to_toml(scenario: &Scenario) -> Result<String> {
    toml::to_string(scenario).map_err(|e| Error::Config(e.to_string()))
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        load_scenario(s)
    }
}

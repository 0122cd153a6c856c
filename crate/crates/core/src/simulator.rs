//! Tick loop, per-window audits and output writers.
//!
//! Tick convention: at tick `k` the trace records the outputs `x_k`, the
//! inputs `u_k` and `e_k = max_i |x_k^i - target(u_k)|`; the step then uses
//! `u_k` to produce `x_{k+1}`. Under this convention the exact protocol's
//! output satisfies `x_k = target(u_{k - depth - 1})` once the cascade has
//! filled, which [`WindowReport::identity_residual`] checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    admc_bounds, audit_window, bounds_for, edmc_bounds, lagging_start, BoundsReport, WindowAudit, BAND_TOLERANCE};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::protocols::{initial_state, open_step, Mode, Variant};
use crate::scenario::{Scenario, Timeline};
use crate::size_estimation::{
    expected_estimate_admc, expected_estimate_edmc, worst_case_monte_carlo, DseState, WorstCaseModel,
};
use crate::streams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    /// Extremum of the active agents' inputs.
    pub target: f64,
    pub error: f64,
    pub n_active: usize,
    /// `(agent, output)` in ascending agent order.
    pub outputs: Vec<(NodeId, f64)>,
    pub inputs: Vec<(NodeId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub protocol: String,
    pub records: Vec<TickRecord>,
}

impl ErrorTrace {
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error).collect()
    }
}

/// Checks of one fixed-graph window `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub start: u64,
    pub end: u64,
    pub n_active: usize,
    pub diameter: usize,
    pub bounds: BoundsReport,
    pub audit: WindowAudit,
    /// Exact protocol only: largest `|x_k - target(u_{k-depth-1})|` over the
    /// window once the cascade has filled.
    pub identity_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub horizon: u64,
    pub slope_bound: f64,
    /// Worst case over all windows.
    #[serde(flatten)]
    pub bounds: BoundsReport,
    /// Empirical times of the first window.
    pub empirical_transient_time: u64,
    pub empirical_convergence_time: Option<u64>,
    pub max_error_after_convergence: Option<f64>,
    pub decrease_violations: usize,
    pub band_violations: usize,
    pub windows: Vec<WindowReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Combines per-window reports into the worst case.
pub fn aggregate_bounds<'a>(reports: impl IntoIterator<Item = &'a BoundsReport>) -> BoundsReport {
    let mut out = BoundsReport {
        transient_time: 0,
        convergence_time: Some(0),
        tracking_bound: 0.0,
        steady_bound: 0.0,
        assumptions_ok: true,
        assumption_notes: Vec::new(),
    };
    for r in reports {
        out.transient_time = out.transient_time.max(r.transient_time);
        out.convergence_time = match (out.convergence_time, r.convergence_time) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        out.tracking_bound = out.tracking_bound.max(r.tracking_bound);
        out.steady_bound = out.steady_bound.max(r.steady_bound);
        out.assumptions_ok &= r.assumptions_ok;
        for note in &r.assumption_notes {
            if !out.assumption_notes.contains(note) {
                out.assumption_notes.push(note.clone());
            }
        }
    }
    out
}

fn extremum(mode: Mode, values: impl IntoIterator<Item = f64>) -> f64 {
    match mode {
        Mode::Max => values.into_iter().fold(f64::NEG_INFINITY, f64::max),
        Mode::Min => values.into_iter().fold(f64::INFINITY, f64::min),
    }
}

fn check_finite(tick: u64, values: &[(NodeId, f64)]) -> Result<()> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some(&(agent, _)) => Err(Error::NonFinite { tick, agent }),
        None => Ok(()),
    }
}

/// Windows `(start, end)` covering `[0, horizon)`.
fn windows(timeline: &Timeline, horizon: u64) -> Vec<(u64, u64)> {
    let starts = timeline.window_starts();
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, starts.get(i + 1).copied().unwrap_or(horizon)))
        .collect()
}

fn assumption_check(scenario: &Scenario, start: u64, report: &BoundsReport) -> Result<()> {
    if scenario.strict && !report.assumptions_ok {
        return Err(Error::Assumption(format!(
            "window starting at tick {start}: {}",
            report.assumption_notes.join("; ")
        )));
    }
    Ok(())
}

/// Runs a consensus scenario.
pub fn run(scenario: &Scenario) -> Result<(ErrorTrace, RunSummary)> {
    if scenario.is_size_estimation() {
        return Err(Error::Config(format!(
            "{} is a size-estimation scenario",
            scenario.name
        )));
    }
    let params = scenario.protocol;
    let mode = params.mode;
    let timeline = scenario.realize()?;
    let bank = scenario.signal_bank(timeline.universe.graph.nodes())?;
    let slope = bank.slope_bound();

    let mut records = Vec::with_capacity(scenario.horizon as usize);
    let mut graph = &timeline.initial;
    let mut inputs = bank.inputs(graph.nodes(), 0)?;
    let mut state = initial_state(&params, &inputs, scenario.initial_states(graph).as_ref())?;
    for k in 0..scenario.horizon {
        let outputs = state.outputs();
        check_finite(k, &outputs)?;
        let target = extremum(mode, inputs.values().copied());
        let error = outputs.iter().map(|(_, x)| (x - target).abs()).fold(0.0, f64::max);
        records.push(TickRecord {
            tick: k,
            target,
            error,
            n_active: graph.node_count(),
            outputs,
            inputs: inputs.iter().map(|(&n, &u)| (n, u)).collect(),
        });
        if k + 1 < scenario.horizon {
            let next_graph = timeline.graph_at(k + 1);
            let next_inputs = bank.inputs(next_graph.nodes(), k + 1)?;
            state = open_step(graph, next_graph, &state, &params, &inputs, &next_inputs, scenario.departures)?;
            graph = next_graph;
            inputs = next_inputs;
        }
    }

    let dwell = scenario.churn.dwell().unwrap_or(u64::MAX);
    let depth = match params.variant {
        Variant::Exact { depth } => Some(depth),
        Variant::Approximate { .. } => None,
    };
    let mut reports = Vec::new();
    for (start, end) in windows(&timeline, scenario.horizon) {
        let g = timeline.graph_at(start);
        let diameter = g.diameter()?;
        let first = &records[start as usize];
        let x: Vec<f64> = first.outputs.iter().map(|o| o.1).collect();
        let own: Vec<f64> = first.inputs.iter().map(|i| i.1).collect();
        let lagging = depth.is_none() && lagging_start(mode, &x, &own, slope);
        let bounds = bounds_for(&params, diameter, slope, &x, first.target)
            .with_lagging_start(lagging)
            .with_dwell(dwell, diameter, depth);
        assumption_check(scenario, start, &bounds)?;
        let errors: Vec<f64> = records[start as usize..end as usize].iter().map(|r| r.error).collect();
        let audit = audit_window(&errors, &bounds);
        let identity_residual = depth
            .filter(|&d| d >= diameter)
            .and_then(|d| identity_residual(&records, &timeline, mode, start, end, d));
        reports.push(WindowReport {
            start,
            end,
            n_active: g.node_count(),
            diameter,
            bounds,
            audit,
            identity_residual,
        });
    }

    let first = &reports[0];
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        protocol: params.label().to_string(),
        seed: scenario.seed,
        horizon: scenario.horizon,
        slope_bound: slope,
        bounds: aggregate_bounds(reports.iter().map(|w| &w.bounds)),
        empirical_transient_time: first.audit.detected.transient,
        empirical_convergence_time: first
            .audit
            .detected
            .converged
            .then_some(first.audit.detected.convergence),
        max_error_after_convergence: reports
            .iter()
            .filter_map(|w| w.audit.max_error_after_convergence)
            .reduce(f64::max),
        decrease_violations: reports.iter().map(|w| w.audit.decrease_violations).sum(),
        band_violations: reports.iter().map(|w| w.audit.band_violations).sum(),
        windows: reports,
        notes: Vec::new(),
    };
    Ok((
        ErrorTrace {
            protocol: params.label().to_string(),
            records,
        },
        summary,
    ))
}

/// Largest deviation from the delayed target over `[start, end)`, starting
/// once every level holds data from agents of the window: `depth` ticks in,
/// one more if agents arrived at `start`. At tick 0 the input before the
/// first tick is taken to be `u_0`.
fn identity_residual(
    records: &[TickRecord],
    timeline: &Timeline,
    mode: Mode,
    start: u64,
    end: u64,
    depth: usize,
) -> Option<f64> {
    let members = timeline.graph_at(start).nodes();
    let arrivals = start > 0 && members.iter().any(|n| !timeline.graph_at(start - 1).contains(*n));
    let first = start + depth as u64 + u64::from(arrivals);
    let mut worst: Option<f64> = None;
    for k in first..end {
        let source = k.saturating_sub(depth as u64 + 1);
        let target = extremum(
            mode,
            records[source as usize]
                .inputs
                .iter()
                .filter(|(n, _)| members.contains(n))
                .map(|p| p.1),
        );
        let r = &records[k as usize];
        let residual = r.outputs.iter().map(|(_, x)| (x - target).abs()).fold(0.0, f64::max);
        worst = Some(worst.map_or(residual, |w| w.max(residual)));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseTickRecord {
    pub tick: u64,
    pub n_active: usize,
    pub estimates: Vec<(NodeId, f64)>,
    /// Estimate from the exact coordinate maxima of the active agents.
    pub exact_estimate: f64,
    /// `max_{i,j} |x^{ij} - max_l u^{lj}|`.
    pub coordinate_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseTrace {
    pub protocol: String,
    pub records: Vec<DseTickRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseWindowReport {
    pub start: u64,
    pub end: u64,
    pub n_active: usize,
    pub diameter: usize,
    /// Bounds on the coordinate error, worst case over coordinates.
    pub bounds: BoundsReport,
    pub audit: WindowAudit,
    /// Whether the dwell time covers the convergence time.
    pub dwell_covers_convergence: bool,
    /// Expected estimate for this window's size and error band.
    pub expected_estimate: f64,
    pub exact_estimate: f64,
    /// Mean of every agent's estimate over the converged part of the window.
    pub steady_mean: Option<f64>,
    /// All agents report the same estimate at every converged tick.
    pub agents_agree: Option<bool>,
    /// No agent's estimate exceeds the exact-maxima estimate at converged ticks.
    pub underestimates: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseSummary {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub horizon: u64,
    pub p: usize,
    #[serde(flatten)]
    pub bounds: BoundsReport,
    /// Expected estimate of the first window.
    pub expected_closed_form: f64,
    pub monte_carlo_mean: Option<f64>,
    pub ci99: Option<(f64, f64)>,
    pub band_violations: usize,
    pub decrease_violations: usize,
    pub windows: Vec<DseWindowReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DseSummary {
    /// Adds a worst-case Monte Carlo for the first window.
    pub fn with_monte_carlo(mut self, trials: usize) -> Result<Self> {
        let w = &self.windows[0];
        let epsilon = w.bounds.steady_bound;
        let mc = worst_case_monte_carlo(
            w.n_active,
            self.p,
            epsilon,
            trials,
            self.seed,
            WorstCaseModel::Relaxed,
        )?;
        self.monte_carlo_mean = Some(mc.mean);
        self.ci99 = Some(mc.ci99);
        Ok(self)
    }
}

fn coordinate_error(state: &DseState, maxima: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (coord, m) in state.coordinates().iter().zip(maxima) {
        for (_, x) in coord.outputs() {
            worst = worst.max((x - m).abs());
        }
    }
    worst
}

fn overshoot(state: &DseState, maxima: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (coord, m) in state.coordinates().iter().zip(maxima) {
        for (_, x) in coord.outputs() {
            worst = worst.max(x - m);
        }
    }
    worst
}

/// Runs a size-estimation scenario.
pub fn run_size_estimation(scenario: &Scenario) -> Result<(DseTrace, DseSummary)> {
    let config = scenario
        .dse_config()?
        .ok_or_else(|| Error::Config(format!("{} is not a size-estimation scenario", scenario.name)))?;
    let timeline = scenario.realize()?;
    let mut rng = streams::named(scenario.seed, streams::DSE);
    let mut state = DseState::start(config, &timeline.initial, &mut rng)?;

    let mut records = Vec::with_capacity(scenario.horizon as usize);
    let mut overshoots = BTreeMap::new();
    let starts: BTreeSet<u64> = timeline.window_starts().into_iter().collect();
    for k in 0..scenario.horizon {
        let graph = timeline.graph_at(k);
        let estimates: Vec<(NodeId, f64)> = state.estimates()?.into_iter().collect();
        check_finite(k, &estimates)?;
        let maxima = state.exact_maxima();
        if starts.contains(&k) {
            overshoots.insert(k, overshoot(&state, &maxima));
        }
        records.push(DseTickRecord {
            tick: k,
            n_active: graph.node_count(),
            estimates,
            exact_estimate: state.exact_estimate()?,
            coordinate_error: coordinate_error(&state, &maxima),
        });
        if k + 1 < scenario.horizon {
            state.step(graph, timeline.graph_at(k + 1), scenario.departures, &mut rng)?;
        }
    }

    let dwell = scenario.churn.dwell().unwrap_or(u64::MAX);
    let mut reports = Vec::new();
    for (start, end) in windows(&timeline, scenario.horizon) {
        let g = timeline.graph_at(start);
        let diameter = g.diameter()?;
        let n = g.node_count();
        let (bounds, expected) = match config.backend.variant {
            Variant::Approximate { alpha } => (
                admc_bounds(diameter, alpha, 0.0, &[overshoots[&start]], 0.0).with_dwell(dwell, diameter, None),
                expected_estimate_admc(n, config.p, alpha * diameter as f64)?,
            ),
            Variant::Exact { depth } => (
                edmc_bounds(depth, 0.0).with_dwell(dwell, diameter, Some(depth)),
                expected_estimate_edmc(n, config.p)?,
            ),
        };
        let mut bounds = bounds;
        let covers = bounds.convergence_time.is_some_and(|tc| tc <= dwell);
        if !covers {
            bounds.assumptions_ok = false;
            bounds
                .assumption_notes
                .push(format!("dwell time {dwell} is shorter than the convergence time"));
        }
        assumption_check(scenario, start, &bounds)?;
        let window = &records[start as usize..end as usize];
        let errors: Vec<f64> = window.iter().map(|r| r.coordinate_error).collect();
        let audit = audit_window(&errors, &bounds);

        let steady: &[DseTickRecord] = match bounds.convergence_time {
            Some(tc) if audit.bounded_error_guaranteed => &window[tc as usize..],
            _ => &[],
        };
        let (mut sum, mut count) = (0.0, 0usize);
        let mut agree = true;
        let mut under = true;
        for r in steady {
            for &(_, e) in &r.estimates {
                sum += e;
                count += 1;
                under &= e <= r.exact_estimate * (1.0 + BAND_TOLERANCE);
            }
            let first = r.estimates[0].1;
            agree &= r.estimates.iter().all(|&(_, e)| e == first);
        }
        let has_steady = !steady.is_empty();
        reports.push(DseWindowReport {
            start,
            end,
            n_active: n,
            diameter,
            bounds,
            audit,
            dwell_covers_convergence: covers,
            expected_estimate: expected,
            exact_estimate: window[0].exact_estimate,
            steady_mean: has_steady.then(|| sum / count as f64),
            agents_agree: has_steady.then_some(agree),
            underestimates: has_steady.then_some(under),
        });
    }

    let summary = DseSummary {
        scenario: scenario.name.clone(),
        protocol: config.backend.label().to_string(),
        seed: scenario.seed,
        horizon: scenario.horizon,
        p: config.p,
        bounds: aggregate_bounds(reports.iter().map(|w| &w.bounds)),
        expected_closed_form: reports[0].expected_estimate,
        monte_carlo_mean: None,
        ci99: None,
        band_violations: reports.iter().map(|w| w.audit.band_violations).sum(),
        decrease_violations: reports.iter().map(|w| w.audit.decrease_violations).sum(),
        windows: reports,
        notes: Vec::new(),
    };
    Ok((
        DseTrace {
            protocol: config.backend.label().to_string(),
            records,
        },
        summary,
    ))
}

/// Runs `scenario` once per seed in parallel; results are in seed order.
pub fn ensemble<T, F>(scenario: &Scenario, seeds: &[u64], f: F) -> Vec<(u64, Result<T>)>
where
    T: Send,
    F: Fn(&Scenario) -> Result<T> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let mut s = scenario.clone();
            s.seed = seed;
            (seed, f(&s))
        })
        .collect()
}

/// Re-checks a realized timeline: connected graphs and changes at least
/// `dwell` ticks apart.
pub fn verify_timeline(timeline: &Timeline, dwell: Option<u64>) -> Result<()> {
    let graphs = std::iter::once(&timeline.initial).chain(timeline.changes.iter().map(|c| &c.1));
    for (tick, g) in timeline.window_starts().into_iter().zip(graphs) {
        if !g.is_connected()? {
            return Err(Error::Disconnected {
                tick,
                detail: "post-hoc audit".into(),
            });
        }
    }
    if let Some(dwell) = dwell {
        for w in timeline.window_starts().windows(2) {
            if w[1] - w[0] < dwell {
                return Err(Error::Assumption(format!(
                    "dwell-time assumption violated: changes at ticks {} and {}",
                    w[0], w[1]
                )));
            }
        }
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn header(fields: &[&str]) -> Vec<String> {
    fields.iter().map(|s| s.to_string()).collect()
}

/// `tick,agent,x,u,e,n_active`, one row per active agent per kept tick.
pub fn write_trace_csv(path: &Path, trace: &ErrorTrace, stride: u64) -> Result<()> {
    let rows = trace
        .records
        .iter()
        .filter(|r| r.tick % stride.max(1) == 0)
        .flat_map(|r| {
            r.outputs.iter().zip(&r.inputs).map(move |(&(agent, x), &(_, u))| {
                vec![
                    r.tick.to_string(),
                    agent.to_string(),
                    x.to_string(),
                    u.to_string(),
                    r.error.to_string(),
                    r.n_active.to_string(),
                ]
            })
        });
    write_rows(path, &header(&["tick", "agent", "x", "u", "e", "n_active"]), rows)
}

/// `tick,agent,n_hat`.
pub fn write_dse_trace_csv(path: &Path, trace: &DseTrace, stride: u64) -> Result<()> {
    let rows = trace
        .records
        .iter()
        .filter(|r| r.tick % stride.max(1) == 0)
        .flat_map(|r| {
            r.estimates
                .iter()
                .map(move |&(agent, n_hat)| vec![r.tick.to_string(), agent.to_string(), n_hat.to_string()])
        });
    write_rows(path, &header(&["tick", "agent", "n_hat"]), rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// One column per agent that was ever active; empty cells while inactive.
fn wide_rows<'a>(
    agents: &'a [NodeId],
    ticks: impl Iterator<Item = (Vec<String>, BTreeMap<NodeId, f64>)> + 'a,
) -> impl Iterator<Item = Vec<String>> + 'a {
    ticks.map(move |(mut row, values)| {
        row.extend(agents.iter().map(|a| values.get(a).map_or(String::new(), f64::to_string)));
        row
    })
}

fn agent_columns<'a>(lists: impl Iterator<Item = &'a Vec<(NodeId, f64)>>) -> Vec<NodeId> {
    let set: BTreeSet<NodeId> = lists.flat_map(|l| l.iter().map(|p| p.0)).collect();
    set.into_iter().collect()
}

/// Plot series for a consensus run: `states.csv` (target and every agent's
/// output) and `error.csv` (error and band).
pub fn write_plotdata(dir: &Path, trace: &ErrorTrace, summary: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let agents = agent_columns(trace.records.iter().map(|r| &r.outputs));
    let mut head = header(&["tick", "target"]);
    head.extend(agents.iter().map(|a| format!("x_{a}")));
    let ticks = trace.records.iter().map(|r| {
        (
            vec![r.tick.to_string(), r.target.to_string()],
            r.outputs.iter().copied().collect::<BTreeMap<_, _>>(),
        )
    });
    write_rows(&dir.join("states.csv"), &head, wide_rows(&agents, ticks))?;

    let band = |k: u64| {
        summary
            .windows
            .iter()
            .find(|w| w.start <= k && k < w.end)
            .map_or(f64::NAN, |w| w.bounds.tracking_bound)
    };
    let rows = trace
        .records
        .iter()
        .map(|r| vec![r.tick.to_string(), r.error.to_string(), band(r.tick).to_string()]);
    write_rows(&dir.join("error.csv"), &header(&["tick", "e", "epsilon"]), rows)
}

/// Plot series for a size-estimation run: `size_estimate.csv` with the true
/// size, the exact-maxima estimate and every agent's estimate.
pub fn write_dse_plotdata(dir: &Path, trace: &DseTrace) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let agents = agent_columns(trace.records.iter().map(|r| &r.estimates));
    let mut head = header(&["tick", "n_true", "n_hat_exact"]);
    head.extend(agents.iter().map(|a| format!("n_hat_{a}")));
    let ticks = trace.records.iter().map(|r| {
        (
            vec![r.tick.to_string(), r.n_active.to_string(), r.exact_estimate.to_string()],
            r.estimates.iter().copied().collect::<BTreeMap<_, _>>(),
        )
    });
    write_rows(&dir.join("size_estimate.csv"), &head, wide_rows(&agents, ticks))
}

/// Writes `trace.csv`, `summary.json` and `plotdata/` for a consensus run.
pub fn write_run_outputs(dir: &Path, scenario: &Scenario, trace: &ErrorTrace, summary: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trace_csv(&dir.join("trace.csv"), trace, scenario.trace.stride)?;
    write_json(&dir.join("summary.json"), summary)?;
    write_plotdata(&dir.join("plotdata"), trace, summary)
}

pub fn write_dse_outputs(dir: &Path, scenario: &Scenario, trace: &DseTrace, summary: &DseSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dse_trace_csv(&dir.join("trace.csv"), trace, scenario.trace.stride)?;
    write_json(&dir.join("summary.json"), summary)?;
    write_dse_plotdata(&dir.join("plotdata"), trace)
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Alpha,
    Depth,
    P,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParameter::Alpha),
            "depth" | "delta" => Ok(SweepParameter::Depth),
            "p" => Ok(SweepParameter::P),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?} (alpha, depth, p)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl std::str::FromStr for SweepGrid {
    type Err = Error;

    /// `name=v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid {s:?} is not of the form name=v1,v2")))?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("grid value {v:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::Config("empty grid".into()));
        }
        Ok(SweepGrid {
            parameter: name.trim().parse()?,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub eps_emp: Option<f64>,
    pub eps_theory: Option<f64>,
    pub tc_emp: Option<u64>,
    pub tc_theory: Option<u64>,
    /// Size estimation: mean converged estimate and its expected value.
    pub mean_estimate: Option<f64>,
    pub expected_estimate: Option<f64>,
    pub error: Option<String>,
}

fn apply_parameter(base: &Scenario, parameter: SweepParameter, value: f64) -> Result<Scenario> {
    let mut s = base.clone();
    s.name = format!("{}_{:?}_{value}", base.name, parameter).to_lowercase();
    let as_count = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("{v} is not a count")))
        }
    };
    match parameter {
        SweepParameter::Alpha => match &mut s.protocol.variant {
            Variant::Approximate { alpha } => *alpha = value,
            Variant::Exact { .. } => return Err(Error::Config("alpha sweep needs the approximate protocol".into())),
        },
        SweepParameter::Depth => match &mut s.protocol.variant {
            Variant::Exact { depth } => *depth = as_count(value)?,
            Variant::Approximate { .. } => return Err(Error::Config("depth sweep needs the exact protocol".into())),
        },
        SweepParameter::P => match &mut s.size_estimation {
            Some(spec) => spec.p = as_count(value)?,
            None => return Err(Error::Config("p sweep needs a size-estimation scenario".into())),
        },
    }
    s.validate()?;
    Ok(s)
}

fn sweep_point(base: &Scenario, parameter: SweepParameter, value: f64) -> Result<SweepRow> {
    let s = apply_parameter(base, parameter, value)?;
    if s.is_size_estimation() {
        let (_, summary) = run_size_estimation(&s)?;
        let w = &summary.windows[0];
        Ok(SweepRow {
            value,
            eps_emp: w.audit.max_error_after_convergence,
            eps_theory: Some(w.bounds.tracking_bound),
            tc_emp: w.audit.detected.converged.then_some(w.audit.detected.convergence),
            tc_theory: w.bounds.convergence_time,
            mean_estimate: w.steady_mean,
            expected_estimate: Some(w.expected_estimate),
            error: None,
        })
    } else {
        let (_, summary) = run(&s)?;
        let w = &summary.windows[0];
        Ok(SweepRow {
            value,
            eps_emp: summary.max_error_after_convergence,
            eps_theory: Some(summary.bounds.tracking_bound),
            tc_emp: w.audit.detected.converged.then_some(w.audit.detected.convergence),
            tc_theory: summary.bounds.convergence_time,
            mean_estimate: None,
            expected_estimate: None,
            error: None,
        })
    }
}

/// One run per grid value, in parallel; a failed run yields a row with
/// `error` set.
pub fn sweep(base: &Scenario, grid: &SweepGrid) -> Vec<SweepRow> {
    grid.values
        .par_iter()
        .map(|&value| {
            sweep_point(base, grid.parameter, value).unwrap_or_else(|e| SweepRow {
                value,
                eps_emp: None,
                eps_theory: None,
                tc_emp: None,
                tc_theory: None,
                mean_estimate: None,
                expected_estimate: None,
                error: Some(e.to_string()),
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, grid: &SweepGrid, rows: &[SweepRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let opt_u = |v: Option<u64>| v.map_or(String::new(), |x| x.to_string());
    let name = format!("{:?}", grid.parameter).to_lowercase();
    let head = header(&[
        &name,
        "eps_emp",
        "eps_theory",
        "tc_emp",
        "tc_theory",
        "mean_estimate",
        "expected_estimate",
        "error",
    ]);
    let body = rows.iter().map(|r| {
        vec![
            r.value.to_string(),
            opt(r.eps_emp),
            opt(r.eps_theory),
            opt_u(r.tc_emp),
            opt_u(r.tc_theory),
            opt(r.mean_estimate),
            opt(r.expected_estimate),
            r.error.clone().unwrap_or_default(),
        ]
    });
    write_rows(path, &head, body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario_file;

    #[test]
    fn line6_admc_stays_in_band() {
        let s = load_scenario_file("line6_admc").unwrap();
        let (trace, summary) = run(&s).unwrap();
        assert!((summary.bounds.tracking_bound - 0.27).abs() < 1e-12);
        assert_eq!(summary.bounds.convergence_time, Some(180));
        assert_eq!(summary.band_violations, 0);
        assert_eq!(summary.decrease_violations, 0);
        assert_eq!(trace.records.len(), 300);
        assert!(summary.empirical_convergence_time.unwrap() <= 180);
    }

    #[test]
    fn line6_edmc_identity_holds() {
        let s = load_scenario_file("line6_edmc").unwrap();
        let (_, summary) = run(&s).unwrap();
        assert_eq!(summary.windows[0].identity_residual, Some(0.0));
        assert!(summary.empirical_convergence_time.unwrap() <= 5);
    }

    #[test]
    fn runs_are_deterministic() {
        let s = load_scenario_file("ba100_dse_edmc").unwrap();
        let mut short = s.clone();
        short.horizon = 300;
        let a = run_size_estimation(&short).unwrap();
        let b = run_size_estimation(&short).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_parsing() {
        let g: SweepGrid = "alpha=0.03,0.06, 0.12".parse().unwrap();
        assert_eq!(g.parameter, SweepParameter::Alpha);
        assert_eq!(g.values, vec![0.03, 0.06, 0.12]);
        assert!("beta=1".parse::<SweepGrid>().is_err());
        assert!("alpha".parse::<SweepGrid>().is_err());
        assert!("p=2,x".parse::<SweepGrid>().is_err());
    }
}

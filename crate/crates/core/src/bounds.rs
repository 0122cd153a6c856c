//! Closed-form transient/convergence times and tracking-error bands for the
//! four protocols, and their empirical counterparts on error traces.
//!
//! All times are offsets (in ticks) from the network change `k0` that opens a
//! window during which the graph stays fixed.

use serde::{Deserialize, Serialize};

use crate::error::BoundsError;
use crate::protocols::{Mode, ProtocolParams, Variant};

/// Slack on `e_k <= epsilon` comparisons.
pub const BAND_TOLERANCE: f64 = 1e-9;
/// Slack on `e_{k+1} < e_k` comparisons; max/min arithmetic is exact, so this
/// only absorbs the rounding of the error itself.
pub const DECREASE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub transient_time: u64,
    /// `None` when the decay does not outpace the signals (`alpha <= Pi`).
    pub convergence_time: Option<u64>,
    pub tracking_bound: f64,
    pub steady_bound: f64,
    pub assumptions_ok: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumption_notes: Vec<String>,
}

impl BoundsReport {
    /// Fails when the guarantees do not apply.
    pub fn require_applicable(self) -> Result<Self, BoundsError> {
        if self.assumptions_ok {
            Ok(self)
        } else {
            Err(BoundsError::NotApplicable(self.assumption_notes.join("; ")))
        }
    }

    /// Delays `T^t` by one tick, and `T^c` with it when they coincide, for a
    /// window that opens with a lagging state (see [`lagging_start`]).
    pub fn with_lagging_start(mut self, lagging: bool) -> Self {
        if lagging {
            self.transient_time += 1;
            self.convergence_time = self.convergence_time.map(|t| t.max(self.transient_time));
        }
        self
    }

    /// Records the dwell-time requirement: `dwell >= diameter` for the
    /// approximate protocols, `dwell >= depth >= diameter` for the exact ones.
    pub fn with_dwell(mut self, dwell: u64, diameter: usize, depth: Option<usize>) -> Self {
        let needed = depth.unwrap_or(diameter) as u64;
        if dwell < needed {
            self.assumptions_ok = false;
            self.assumption_notes
                .push(format!("dwell time {dwell} is shorter than {needed}"));
        }
        if let Some(depth) = depth {
            if depth < diameter {
                self.assumptions_ok = false;
                self.assumption_notes.push(format!(
                    "cascade depth {depth} is below the network diameter {diameter}"
                ));
            }
        }
        self
    }
}

/// `ceil` that ignores relative rounding noise of order 1e-12, so that e.g.
/// `1.8 / (0.03 - 0.02)` gives 180 rather than 181.
fn ceil_ticks(v: f64) -> u64 {
    if v <= 0.0 {
        return 0;
    }
    let nearest = v.round();
    if (v - nearest).abs() <= 1e-12 * v.max(1.0) {
        nearest as u64
    } else {
        v.ceil() as u64
    }
}

fn approximate_bounds(diameter: usize, alpha: f64, slope: f64, overshoot: f64) -> BoundsReport {
    let delta = diameter as f64;
    let transient = diameter as u64;
    let mut notes = Vec::new();
    let convergence = if alpha > slope {
        Some(transient.max(ceil_ticks(overshoot.max(0.0) / (alpha - slope))))
    } else {
        notes.push(format!(
            "decay alpha = {alpha} must exceed the slope bound Pi = {slope}"
        ));
        None
    };
    BoundsReport {
        transient_time: transient,
        convergence_time: convergence,
        tracking_bound: (delta + 1.0) * slope + alpha * delta,
        steady_bound: alpha * delta,
        assumptions_ok: notes.is_empty(),
        assumption_notes: notes,
    }
}

fn largest(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Approximate max-consensus bounds for a window opening with states
/// `x_at_change` and target maximum `u_max_at_change`.
///
/// The convergence time uses the largest overshoot `max_i(x_i - u_max)`,
/// floored at zero.
pub fn admc_bounds(
    diameter: usize,
    alpha: f64,
    slope: f64,
    x_at_change: &[f64],
    u_max_at_change: f64,
) -> BoundsReport {
    let overshoot = largest(x_at_change.iter().map(|x| x - u_max_at_change));
    approximate_bounds(diameter, alpha, slope, overshoot)
}

/// Approximate min-consensus bounds; the overshoot is `max_i(u_min - x_i)`.
pub fn admc_min_bounds(
    diameter: usize,
    alpha: f64,
    slope: f64,
    x_at_change: &[f64],
    u_min_at_change: f64,
) -> BoundsReport {
    let overshoot = largest(x_at_change.iter().map(|x| u_min_at_change - x));
    approximate_bounds(diameter, alpha, slope, overshoot)
}

/// Exact max-consensus bounds: `T^t = T^c = depth`, band `(depth + 1) Pi`,
/// zero steady-state error.
pub fn edmc_bounds(depth: usize, slope: f64) -> BoundsReport {
    BoundsReport {
        transient_time: depth as u64,
        convergence_time: Some(depth as u64),
        tracking_bound: (depth as f64 + 1.0) * slope,
        steady_bound: 0.0,
        assumptions_ok: true,
        assumption_notes: Vec::new(),
    }
}

pub fn edmc_min_bounds(depth: usize, slope: f64) -> BoundsReport {
    edmc_bounds(depth, slope)
}

/// Bounds for any of the four protocols.
pub fn bounds_for(
    params: &ProtocolParams,
    diameter: usize,
    slope: f64,
    x_at_change: &[f64],
    target_at_change: f64,
) -> BoundsReport {
    match (params.variant, params.mode) {
        (Variant::Approximate { alpha }, Mode::Max) => {
            admc_bounds(diameter, alpha, slope, x_at_change, target_at_change)
        }
        (Variant::Approximate { alpha }, Mode::Min) => {
            admc_min_bounds(diameter, alpha, slope, x_at_change, target_at_change)
        }
        (Variant::Exact { depth }, Mode::Max) => edmc_bounds(depth, slope),
        (Variant::Exact { depth }, Mode::Min) => edmc_min_bounds(depth, slope),
    }
}

/// Whether some agent starts a window on the wrong side of its own input by
/// more than the slope bound. The protocol never produces such a state: a
/// remaining agent's state is at least its previous input and an arrival
/// starts at its input. Explicit initial states can, and then the farthest
/// agent needs `diameter + 1` ticks to see the extremum.
pub fn lagging_start(mode: Mode, x: &[f64], u: &[f64], slope: f64) -> bool {
    x.iter().zip(u).any(|(&x, &u)| match mode {
        Mode::Max => x < u - slope - DECREASE_TOLERANCE,
        Mode::Min => x > u + slope + DECREASE_TOLERANCE,
    })
}

/// Human-readable applicability condition of a protocol's guarantees.
pub fn applicability_condition(params: &ProtocolParams) -> &'static str {
    match params.variant {
        Variant::Approximate { .. } => "alpha > Pi and dwell >= diameter",
        Variant::Exact { .. } => "dwell >= depth >= diameter",
    }
}

/// Strict checking of the `alpha > Pi` requirement.
pub fn check_alpha(alpha: f64, slope: f64) -> Result<(), BoundsError> {
    if alpha > slope {
        Ok(())
    } else {
        Err(BoundsError::AlphaNotAboveSlope { alpha, slope })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedTimes {
    pub transient: u64,
    pub convergence: u64,
    /// False when the error never settles inside the band; `convergence` is
    /// then the trace length.
    pub converged: bool,
}

fn decreases(prev: f64, next: f64) -> bool {
    next < prev + DECREASE_TOLERANCE
}

/// Empirical transient and convergence offsets of an error trace that starts
/// at a network change.
///
/// The convergence offset is the first index after which every error lies in
/// the `epsilon` band; the transient offset is the first index from which the
/// error decreases at every step until that point.
pub fn detect_times(errors: &[f64], epsilon: f64) -> DetectedTimes {
    let in_band = |e: f64| e <= epsilon + BAND_TOLERANCE;
    let convergence = errors
        .iter()
        .rposition(|&e| !in_band(e))
        .map_or(0, |last_out| last_out + 1);
    let converged = convergence < errors.len() || errors.is_empty();
    let mut transient = convergence.min(errors.len().saturating_sub(1));
    while transient > 0 && decreases(errors[transient - 1], errors[transient]) {
        transient -= 1;
    }
    DetectedTimes {
        transient: transient as u64,
        convergence: convergence as u64,
        converged,
    }
}

/// Outcome of checking one fixed-graph window against its bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAudit {
    /// Whether the window is long enough for the band guarantee
    /// (`T^c` no later than the last tick of the window).
    pub bounded_error_guaranteed: bool,
    /// Steps in `[T^t, T^c]` where the error was above the band yet did not decrease.
    pub decrease_violations: usize,
    /// Ticks after `T^c` with the error outside the band.
    pub band_violations: usize,
    pub max_error_after_convergence: Option<f64>,
    pub detected: DetectedTimes,
}

/// Checks the decrease and containment conditions on `errors`, the tracking
/// error at ticks `k0, k0 + 1, ...` of a window with fixed graph.
pub fn audit_window(errors: &[f64], report: &BoundsReport) -> WindowAudit {
    let len = errors.len() as u64;
    let eps = report.tracking_bound;
    let tc = report.convergence_time;
    let guaranteed = report.assumptions_ok && tc.is_some_and(|tc| len > 0 && tc < len);

    let mut decrease_violations = 0;
    if report.assumptions_ok && len >= 2 {
        let end = tc.unwrap_or(u64::MAX).min(len - 2);
        let mut s = report.transient_time;
        while s <= end {
            let (prev, next) = (errors[s as usize], errors[s as usize + 1]);
            if prev > eps + BAND_TOLERANCE && !decreases(prev, next) {
                decrease_violations += 1;
            }
            s += 1;
        }
    }

    let (mut band_violations, mut max_after) = (0, None::<f64>);
    if guaranteed {
        for &e in &errors[tc.unwrap_or(0) as usize..] {
            if e > eps + BAND_TOLERANCE {
                band_violations += 1;
            }
            max_after = Some(max_after.map_or(e, |m| m.max(e)));
        }
    }

    WindowAudit {
        bounded_error_guaranteed: guaranteed,
        decrease_violations,
        band_violations,
        max_error_after_convergence: max_after,
        detected: detect_times(errors, eps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagging_start_needs_one_more_tick() {
        use std::collections::BTreeMap;

        use crate::graph::{line_graph, NodeId};
        use crate::protocols::{step, ProtocolState};
        // Two agents, inputs (1, 0), both states far below: after one tick the
        // far agent still reads -5, so e_1 = 1 exceeds alpha * diameter.
        let g = line_graph(2).unwrap();
        let params = ProtocolParams::approximate(Mode::Max, 0.1);
        let u: BTreeMap<_, _> = [(NodeId(1), 1.0), (NodeId(2), 0.0)].into();
        let mut state = ProtocolState::Scalar([(NodeId(1), -5.0), (NodeId(2), -5.0)].into());
        assert!(lagging_start(Mode::Max, &[-5.0, -5.0], &[1.0, 0.0], 0.0));
        let plain = admc_bounds(1, 0.1, 0.0, &[-5.0, -5.0], 1.0);
        let adjusted = plain.clone().with_lagging_start(true);
        assert_eq!((plain.convergence_time, adjusted.convergence_time), (Some(1), Some(2)));
        let mut errors = Vec::new();
        for _ in 0..4 {
            state = step(&g, &state, &params, &u).unwrap();
            errors.push(state.outputs().iter().map(|o| (o.1 - 1.0).abs()).fold(0.0, f64::max));
        }
        assert!(errors[0] > plain.tracking_bound + 0.5);
        assert!(errors[1..].iter().all(|&e| e <= adjusted.tracking_bound + BAND_TOLERANCE));
    }

    #[test]
    fn protocol_states_never_lag() {
        assert!(!lagging_start(Mode::Max, &[0.18], &[0.2], 0.02));
        assert!(lagging_start(Mode::Max, &[0.17], &[0.2], 0.02));
        assert!(lagging_start(Mode::Min, &[0.23], &[0.2], 0.02));
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn line6_admc_numbers() {
        let x0 = [0.0, 0.4, 0.8, 1.2, 1.6, 2.0];
        let r = admc_bounds(5, 0.03, 0.02, &x0, 0.2);
        assert!(close(r.tracking_bound, 0.27));
        assert!(close(r.steady_bound, 0.15));
        assert_eq!(r.transient_time, 5);
        assert_eq!(r.convergence_time, Some(180));
        assert!(r.assumptions_ok);
        // Constant inputs: the slope term vanishes from the denominator.
        let steady = admc_bounds(5, 0.03, 0.0, &x0, 0.2);
        assert_eq!(steady.convergence_time, Some(60));
        assert!(close(steady.tracking_bound, steady.steady_bound));
    }

    #[test]
    fn zero_overshoot_gives_diameter() {
        let r = admc_bounds(4, 0.1, 0.05, &[0.2, 0.1, 0.2], 0.2);
        assert_eq!(r.convergence_time, Some(4));
        let r = admc_min_bounds(4, 0.1, 0.05, &[0.2, 0.3, 0.2], 0.2);
        assert_eq!(r.convergence_time, Some(4));
    }

    #[test]
    fn min_bounds_mirror_max_bounds() {
        let x = [0.0, 0.4, 0.8, 1.2, 1.6, 2.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(admc_bounds(5, 0.03, 0.02, &x, 0.2), admc_min_bounds(5, 0.03, 0.02, &neg, -0.2));
        assert!(close(admc_min_bounds(5, 0.03, 0.02, &neg, -0.2).tracking_bound, 0.27));
    }

    #[test]
    fn exact_bounds() {
        let r = edmc_bounds(5, 0.02);
        assert!(close(r.tracking_bound, 0.12));
        assert_eq!((r.transient_time, r.convergence_time), (5, Some(5)));
        assert_eq!(r.steady_bound, 0.0);
        assert_eq!(edmc_bounds(3, 0.0).tracking_bound, 0.0);
        assert_eq!(edmc_min_bounds(1, 1.0).tracking_bound, 2.0);
    }

    #[test]
    fn alpha_not_above_slope_is_flagged() {
        let r = admc_bounds(5, 0.02, 0.02, &[1.0], 0.0);
        assert!(!r.assumptions_ok);
        assert_eq!(r.convergence_time, None);
        assert!(r.clone().require_applicable().is_err());
        assert_eq!(
            check_alpha(0.01, 0.02),
            Err(BoundsError::AlphaNotAboveSlope { alpha: 0.01, slope: 0.02 })
        );
    }

    #[test]
    fn dwell_requirements() {
        let r = edmc_bounds(5, 0.0).with_dwell(4, 3, Some(5));
        assert!(!r.assumptions_ok);
        let r = edmc_bounds(2, 0.0).with_dwell(10, 3, Some(2));
        assert!(!r.assumptions_ok);
        let r = admc_bounds(3, 0.1, 0.0, &[0.0], 0.0).with_dwell(3, 3, None);
        assert!(r.assumptions_ok);
    }

    #[test]
    fn detect_on_zero_trace() {
        let d = detect_times(&[0.0; 10], 0.1);
        assert_eq!((d.transient, d.convergence, d.converged), (0, 0, true));
    }

    #[test]
    fn detect_plateau_then_drop() {
        let errors = [1.8, 1.8, 1.8, 1.8, 1.8, 0.0, 0.0];
        let d = detect_times(&errors, 0.0);
        assert_eq!(d.convergence, 5);
        assert!(d.converged);
        assert!(d.transient <= 5);
    }

    #[test]
    fn detect_never_converging() {
        let d = detect_times(&[1.0, 0.5, 0.7], 0.1);
        assert!(!d.converged);
        assert_eq!(d.convergence, 3);
    }

    #[test]
    fn audit_counts_violations() {
        let report = BoundsReport {
            transient_time: 1,
            convergence_time: Some(3),
            tracking_bound: 0.1,
            steady_bound: 0.0,
            assumptions_ok: true,
            assumption_notes: vec![],
        };
        let ok = audit_window(&[5.0, 4.0, 3.0, 0.05, 0.1, 0.0], &report);
        assert_eq!((ok.decrease_violations, ok.band_violations), (0, 0));
        assert!(ok.bounded_error_guaranteed);
        let bad = audit_window(&[5.0, 4.0, 4.5, 0.05, 0.3, 0.0], &report);
        assert_eq!((bad.decrease_violations, bad.band_violations), (1, 1));
        let short = audit_window(&[5.0, 4.0, 3.0], &report);
        assert!(!short.bounded_error_guaranteed);
        assert_eq!(short.band_violations, 0);
    }
}

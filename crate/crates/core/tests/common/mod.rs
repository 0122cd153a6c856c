//! Oracles and scenario builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use dynmax::graph::NodeId;
use dynmax::protocols::{DepartureSemantics, Mode, ProtocolParams};
use dynmax::scenario::{ChurnSpec, Scenario, SignalsSpec, TopologySpec, TraceOptions};
use dynmax::signals::SignalSpec;

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let (f1, f2) = (f(c - h * XGK[i]), f(c + h * XGK[i]));
        k += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn go<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = kronrod(f, a, b);
        if err <= tol || depth >= 50 {
            return value;
        }
        let m = 0.5 * (a + b);
        go(f, a, m, tol / 2.0, depth + 1) + go(f, m, b, tol / 2.0, depth + 1)
    }
    go(f, a, b, tol, 0)
}

/// `E[1 / (X + epsilon)]` for `X ~ Gamma(shape p, rate n p)`, by quadrature.
/// The density is normalized numerically, so no gamma function is involved.
pub fn expected_by_quadrature(n: usize, p: usize, epsilon: f64) -> f64 {
    let (pf, rate) = (p as f64, (n * p) as f64);
    let mode = (pf - 1.0) / rate;
    let log_peak = (pf - 1.0) * mode.ln() - rate * mode;
    let kernel = move |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            ((pf - 1.0) * x.ln() - rate * x - log_peak).exp()
        }
    };
    let sd = pf.sqrt() / rate;
    let upper = pf / rate + 80.0 * sd;
    let mass = integrate(&kernel, 0.0, mode, 1e-15) + integrate(&kernel, mode, upper, 1e-15);
    let weighted = |x: f64| kernel(x) / (x + epsilon);
    let num = integrate(&weighted, 0.0, mode, 1e-15 / (mode + epsilon))
        + integrate(&weighted, mode, upper, 1e-15 / (mode + epsilon));
    num / mass
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random signal whose per-tick change never exceeds `slope`.
pub fn random_signal<R: Rng>(rng: &mut R, slope: f64, horizon: u64) -> SignalSpec {
    let level = rng.random_range(-1.0..1.0);
    match rng.random_range(0..4) {
        0 => SignalSpec::Constant { value: level },
        1 => {
            let period: f64 = rng.random_range(20.0..200.0);
            // Slope of A sin(2 pi k / T) is at most 2 pi A / T.
            let amplitude = (slope * period / std::f64::consts::TAU).min(0.5);
            SignalSpec::Sinusoid {
                offset: level * 0.5,
                amplitude,
                period,
                phase: rng.random_range(0.0..6.0),
            }
        }
        2 => SignalSpec::RandomWalkClamped {
            start: level,
            step_bound: slope,
            min: -1.0,
            max: 1.0,
        },
        _ => {
            let mut points = vec![(0, level)];
            let mut t = 0u64;
            let mut v = level;
            while t < horizon {
                let dt = rng.random_range(5..60);
                let dv = rng.random_range(-1.0..=1.0) * slope * dt as f64;
                t += dt;
                v = (v + dv).clamp(-1.0, 1.0);
                points.push((t, v));
            }
            SignalSpec::PiecewiseLinear { points }
        }
    }
}

/// Random connected topology on `3..=12` nodes with random bounded-slope
/// signals, random initial states and random churn spaced `dwell` apart.
pub fn random_scenario(seed: u64, protocol: ProtocolParams, slope: f64, dwell: u64, horizon: u64) -> Scenario {
    let mut r = rng(seed);
    let n = r.random_range(3..=12usize);
    let agents: BTreeMap<String, SignalSpec> = (1..=n as u32)
        .map(|i| {
            let s = r.random_range(0.0..=slope);
            (i.to_string(), random_signal(&mut r, s, horizon))
        })
        .collect();
    let initial: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    Scenario {
        name: format!("random_{seed}"),
        seed,
        horizon,
        strict: false,
        initial_state: Some(initial),
        topology: TopologySpec::RandomConnected {
            n,
            edge_prob: r.random_range(0.25..0.7),
            max_attempts: 10_000,
        },
        protocol,
        departures: DepartureSemantics::default(),
        signals: Some(SignalsSpec { default: None, agents }),
        size_estimation: None,
        churn: ChurnSpec::RandomToggle {
            dwell,
            extra_gap: dwell / 2,
            max_toggled: 2,
            min_active: 2,
        },
        trace: TraceOptions::default(),
    }
}

pub fn max_params(exact: bool, alpha: f64, depth: usize) -> ProtocolParams {
    if exact {
        ProtocolParams::exact(Mode::Max, depth)
    } else {
        ProtocolParams::approximate(Mode::Max, alpha)
    }
}

/// Every labeled connected graph on nodes `1..=n`, as edge lists.
pub fn connected_graphs(n: u32) -> Vec<Vec<(NodeId, NodeId)>> {
    let pairs: Vec<(u32, u32)> = (1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b))).collect();
    let mut out = Vec::new();
    for mask in 0u64..(1 << pairs.len()) {
        let edges: Vec<(u32, u32)> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        // Union-find connectivity check, independent of the library.
        let mut parent: Vec<u32> = (0..=n).collect();
        fn find(p: &mut [u32], x: u32) -> u32 {
            let mut r = x;
            while p[r as usize] != r {
                r = p[r as usize];
            }
            p[x as usize] = r;
            r
        }
        for &(a, b) in &edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra as usize] = rb;
        }
        let root = find(&mut parent, 1);
        if (1..=n).all(|v| find(&mut parent, v) == root) {
            out.push(edges.into_iter().map(|(a, b)| (NodeId(a), NodeId(b))).collect());
        }
    }
    out
}

/// Diameter by repeated relaxation, independent of the library's BFS.
pub fn brute_diameter(n: u32, edges: &[(NodeId, NodeId)]) -> usize {
    let n = n as usize;
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n + 1]; n + 1];
    for v in 1..=n {
        d[v][v] = 0;
    }
    for &(a, b) in edges {
        d[a.0 as usize][b.0 as usize] = 1;
        d[b.0 as usize][a.0 as usize] = 1;
    }
    for k in 1..=n {
        for i in 1..=n {
            for j in 1..=n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    (1..=n).flat_map(|i| (1..=n).map(move |j| (i, j))).map(|(i, j)| d[i][j]).max().unwrap_or(0)
}

//! Built-in scenarios, randomized instances, and ground-truth simulation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsiso_core::decouple::{
    build_equivalent_dynamics, svd_decouple, AgentSensing, DecoupledAgentSystem,
};
use dsiso_core::interval::IntervalVector;
use dsiso_core::jss::{jss_decompose, FieldEval, JacobianBounds, VectorField};
use dsiso_core::netsim::CommGraph;
use dsiso_core::observer::{build_input_model, AgentRuntime, ObserverGains};
use dsiso_core::synthesis::AgentSynthesisData;
use dsiso_core::{Error, Result};

/// Scripted unknown-input signal of the truth simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum InputScript {
    Zero,
    /// `d_j(k) = amp_j · sin(freq_j·k + phase_j)`.
    Sine {
        amp: Vec<f64>,
        freq: Vec<f64>,
        phase: Vec<f64>,
    },
    /// Difference form driving an integrator state along a sinusoid:
    /// `d_j(k) = scale · amp_j · (sin(freq_j(k+1)+phase_j) − sin(freq_j·k+phase_j))`.
    SineTrack {
        scale: f64,
        amp: Vec<f64>,
        freq: Vec<f64>,
        phase: Vec<f64>,
    },
}

impl InputScript {
    pub fn value(&self, k: usize, dim: usize) -> DVector<f64> {
        let kf = k as f64;
        match self {
            InputScript::Zero => DVector::zeros(dim),
            InputScript::Sine { amp, freq, phase } => DVector::from_fn(dim, |j, _| {
                amp[j] * (freq[j] * kf + phase[j]).sin()
            }),
            InputScript::SineTrack {
                scale,
                amp,
                freq,
                phase,
            } => DVector::from_fn(dim, |j, _| {
                scale
                    * amp[j]
                    * ((freq[j] * (kf + 1.0) + phase[j]).sin() - (freq[j] * kf + phase[j]).sin())
            }),
        }
    }
}

/// A complete experiment definition.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub plant: VectorField,
    pub g: DMatrix<f64>,
    pub sensing: Vec<AgentSensing>,
    pub graph: CommGraph,
    pub x0: DVector<f64>,
    pub initial_box: IntervalVector,
    pub horizon: usize,
    pub seed: u64,
    /// Round reported measurements to this many decimals (the noise boxes
    /// must already include the matching ±0.5·10^-d margin).
    pub quantize_decimals: Option<u32>,
    pub input: InputScript,
}

/// Ground-truth record: states `x_0..=x_{K+1}`, inputs `d_0..=d_K`, and
/// per-agent measurements `y_0..=y_{K+1}`.
pub struct TruthTrace {
    pub xs: Vec<DVector<f64>>,
    pub ds: Vec<DVector<f64>>,
    pub ys: Vec<Vec<DVector<f64>>>,
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.sensing.len()
    }

    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.g.ncols()
    }

    /// Decouples every agent (errors surface Assumption 2 violations).
    pub fn decouple(&self) -> Result<Vec<DecoupledAgentSystem>> {
        self.sensing
            .iter()
            .map(|s| svd_decouple(s.clone(), &self.g))
            .collect()
    }

    /// Load-time validation: consistent dimensions, truth inside the
    /// initial box, decoupling well-posed, and the per-agent effective
    /// fields admit a sign-stable decomposition.
    pub fn check_assumptions(&self) -> Result<()> {
        if self.graph.agent_count() != self.agent_count() {
            return Err(Error::Dimension(
                "graph and sensing list disagree on the agent count".into(),
            ));
        }
        if self.x0.len() != self.state_dim() || self.initial_box.dim() != self.state_dim() {
            return Err(Error::Dimension(
                "initial state and box must match the plant dimension".into(),
            ));
        }
        if !self.initial_box.contains(&self.x0) {
            return Err(Error::AssumptionViolated(
                "initial truth lies outside the initial box".into(),
            ));
        }
        for sys in self.decouple()? {
            let proj = sys.projection();
            let shift = -(&sys.phi * &sys.c1);
            let g_field = self.plant.linear_map(&proj, Some(&shift))?;
            jss_decompose(&g_field, &[])?;
        }
        Ok(())
    }

    /// Gain-independent synthesis data for every agent.
    pub fn synthesis_data(&self) -> Result<Vec<AgentSynthesisData>> {
        self.decouple()?
            .iter()
            .map(|sys| AgentSynthesisData::new(sys, &self.plant))
            .collect()
    }

    /// Builds the per-agent runtimes for a set of gains.
    pub fn build_runtimes(&self, gains: &[ObserverGains]) -> Result<Vec<AgentRuntime>> {
        let systems = self.decouple()?;
        if gains.len() != systems.len() {
            return Err(Error::Dimension(
                "one gain set per agent is required".into(),
            ));
        }
        systems
            .into_iter()
            .zip(gains)
            .map(|(sys, g)| {
                let eq = build_equivalent_dynamics(&sys, g, &self.plant)?;
                let input_model = build_input_model(&sys, &self.plant)?;
                Ok(AgentRuntime {
                    sys,
                    eq,
                    input_model,
                })
            })
            .collect()
    }

    /// Simulates the truth for `horizon + 2` measurement rounds with the
    /// given run seed (noise realizations change with it; the scenario
    /// seed fixes the structure).
    pub fn simulate_truth(&self, run_seed: u64) -> TruthTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ run_seed.rotate_left(17));
        let steps = self.horizon + 2;
        let p = self.input_dim();
        let w_box = self.plant.domain_w();
        let mut xs = Vec::with_capacity(steps);
        let mut ds = Vec::with_capacity(steps - 1);
        let mut ys: Vec<Vec<DVector<f64>>> =
            (0..self.agent_count()).map(|_| Vec::with_capacity(steps)).collect();

        let sample_box = |rng: &mut ChaCha8Rng, b: &IntervalVector| {
            DVector::from_fn(b.dim(), |s, _| {
                let (lo, hi) = (b.lower()[s], b.upper()[s]);
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
        };

        // The modeled noise box already includes the rounding margin, so
        // the realized noise must be drawn from the shrunk box: realized
        // noise plus rounding error then stays within the model.
        let margin = self
            .quantize_decimals
            .map_or(0.0, |d| 0.5 * 10f64.powi(-(d as i32)));
        let sample_boxes: Vec<IntervalVector> = self
            .sensing
            .iter()
            .map(|s| {
                let lo = s.noise_box.lower().map(|t| (t + margin).min(0.0));
                let hi = s.noise_box.upper().map(|t| (t - margin).max(0.0));
                IntervalVector::new(lo, hi).expect("margin smaller than noise half width")
            })
            .collect();

        let mut x = self.x0.clone();
        for k in 0..steps {
            let d_k = self.input.value(k, p);
            for (i, sensing) in self.sensing.iter().enumerate() {
                let v = sample_box(&mut rng, &sample_boxes[i]);
                let mut y = &sensing.c * &x + &sensing.d * v + &sensing.h * &d_k;
                if let Some(dec) = self.quantize_decimals {
                    let scale = 10f64.powi(dec as i32);
                    y.apply(|t| *t = (*t * scale).round() / scale);
                }
                ys[i].push(y);
            }
            xs.push(x.clone());
            if k + 1 < steps {
                let w = sample_box(&mut rng, w_box);
                x = self.plant.eval(&x, &w) + &self.g * &d_k;
                ds.push(d_k);
            }
        }
        TruthTrace { xs, ds, ys }
    }
}

fn symmetric_box(halves: &[f64]) -> IntervalVector {
    IntervalVector::symmetric(&DVector::from_row_slice(halves)).expect("nonnegative half widths")
}

/// The planar-vehicle scenario: four states (two positions, heading,
/// speed), six agents with seeded random 4-row measurement matrices,
/// unknown inputs on the heading and speed channels, quantized
/// measurements, and a nine-edge communication graph.
pub fn builtin_unicycle(seed: u64, horizon: usize) -> Result<Scenario> {
    unicycle_variant(seed, horizon, false)
}

/// Same structure (identical seeded measurement matrices) but with
/// degenerate noise boxes, no quantization, and no scripted input —
/// used to exercise the pure geometric-decay regime.
pub fn builtin_unicycle_noiseless(seed: u64, horizon: usize) -> Result<Scenario> {
    unicycle_variant(seed, horizon, true)
}

fn unicycle_variant(seed: u64, horizon: usize, noiseless: bool) -> Result<Scenario> {
    let dt = 0.01;
    let a0 = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, dt, dt, //
            0.0, 1.0, dt, dt, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    );
    let b0 = DMatrix::from_row_slice(4, 2, &[dt, 0.0, 0.0, dt, 0.0, 0.0, 0.0, 0.0]);
    let eval: FieldEval = FieldEval::Native(Arc::new(move |x: &DVector<f64>, w: &DVector<f64>| {
        let (x3, x4) = (x[2], x[3]);
        DVector::from_row_slice(&[
            x[0] + dt * (x4 * x3.cos() + w[0]),
            x[1] + dt * (x4 * x3.sin() + w[1]),
            x3,
            x4,
        ])
    }));
    // The nonlinear part has globally sign-stable Jacobian entries once
    // the linear trend above is extracted: each of the four (position ×
    // heading/speed) entries lives in [−0.01, +0.01] for |x₄| ≤ 1.
    let mut j_lo = a0.clone();
    for &(r, c) in &[(0, 2), (0, 3), (1, 2), (1, 3)] {
        j_lo[(r, c)] = -dt;
    }
    let jac = JacobianBounds::new(j_lo, a0, b0.clone(), b0)?;
    let domain_x = IntervalVector::new(
        DVector::from_row_slice(&[-1e3, -1e3, -1e3, -1.0]),
        DVector::from_row_slice(&[1e3, 1e3, 1e3, 1.0]),
    )?;
    let domain_w = if noiseless {
        symmetric_box(&[0.0, 0.0])
    } else {
        symmetric_box(&[10.0, 10.0])
    };
    let plant = VectorField::new(eval, domain_x, domain_w, jac)?;

    let g = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, dt, 0.0, 0.0, dt]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sensing = Vec::with_capacity(6);
    for _ in 0..6 {
        let c = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        // Half widths drawn uniformly, padded by the quantization margin.
        // The draws happen unconditionally so the seeded stream (and thus
        // the C matrices) is identical across the two variants.
        let halves: Vec<f64> = (0..4)
            .map(|_| {
                let h = rng.random_range(0.0..0.02) + 0.005;
                if noiseless {
                    0.0
                } else {
                    h
                }
            })
            .collect();
        sensing.push(AgentSensing::new(
            c,
            DMatrix::identity(4, 4),
            DMatrix::zeros(4, 2),
            symmetric_box(&halves),
        )?);
    }

    let graph = CommGraph::from_adjacency(
        6,
        &[
            (0, 1),
            (0, 3),
            (0, 4),
            (1, 2),
            (2, 3),
            (2, 5),
            (3, 4),
            (3, 5),
            (4, 5),
        ],
    )?;

    let x0 = DVector::from_row_slice(&[0.5, -0.3, 0.2, 0.0]);
    let initial_box = IntervalVector::new(
        &x0 - DVector::from_row_slice(&[1.0, 1.0, 0.5, 0.5]),
        &x0 + DVector::from_row_slice(&[1.0, 1.0, 0.5, 0.5]),
    )?;

    let scenario = Scenario {
        name: "unicycle".into(),
        plant,
        g,
        sensing,
        graph,
        x0,
        initial_box,
        horizon,
        seed,
        quantize_decimals: if noiseless { None } else { Some(2) },
        input: if noiseless {
            InputScript::Zero
        } else {
            InputScript::SineTrack {
                // Heading sweeps ±2 rad, speed tracks 0.8·sin(0.01k)
                // exactly (so |x₄| ≤ 0.8 stays inside the model domain).
                scale: 1.0 / dt,
                amp: vec![2.0, 0.8],
                freq: vec![0.013, 0.01],
                phase: vec![0.5, 0.0],
            }
        },
    };
    scenario.check_assumptions()?;
    Ok(scenario)
}

/// A synthetic swing-equation-style network: `generators` second-order
/// oscillators (angle/frequency pairs) coupled over a ring-plus-hub
/// graph, a dense single-column disturbance matrix concentrated on the
/// hub's frequency, and per-agent measurements of the own angle, incident
/// angle differences, the own frequency, and the hub frequency.
pub fn builtin_power_like(generators: usize, seed: u64, horizon: usize) -> Result<Scenario> {
    if !(3..=25).contains(&generators) {
        return Err(Error::InvalidInput(
            "generator count must be between 3 and 25".into(),
        ));
    }
    let gens = generators;
    let n = 2 * gens;
    let dt = 0.01;
    let retain = 0.4; // per-step frequency retention (heavy damping)
    let kappa = 0.2; // coupling strength

    let mut edges: Vec<(usize, usize)> = (0..gens).map(|i| (i, (i + 1) % gens)).collect();
    for i in 2..gens - 1 {
        edges.push((0, i));
    }
    edges.sort();
    edges.dedup();
    let graph = CommGraph::from_adjacency(gens, &edges)?;
    let adjacency: Vec<Vec<usize>> = (0..gens)
        .map(|i| {
            graph
                .neighborhood(i)
                .iter()
                .copied()
                .filter(|&j| j != i)
                .collect()
        })
        .collect();

    let adj = adjacency.clone();
    let eval: FieldEval = FieldEval::Native(Arc::new(move |x: &DVector<f64>, w: &DVector<f64>| {
        let mut out = DVector::zeros(2 * adj.len());
        for (i, nbrs) in adj.iter().enumerate() {
            let (delta, omega) = (x[2 * i], x[2 * i + 1]);
            let coupling: f64 = nbrs.iter().map(|&j| (delta - x[2 * j]).sin()).sum();
            out[2 * i] = delta + dt * omega;
            out[2 * i + 1] = retain * omega - dt * kappa * coupling + dt * w[0];
        }
        out
    }));

    // Jacobian bounds: angle rows are linear; frequency rows carry the
    // cosine couplings, globally within ±dt·kappa per incident edge.
    let mut j_lo = DMatrix::zeros(n, n);
    let mut j_hi = DMatrix::zeros(n, n);
    for (i, nbrs) in adjacency.iter().enumerate() {
        j_lo[(2 * i, 2 * i)] = 1.0;
        j_hi[(2 * i, 2 * i)] = 1.0;
        j_lo[(2 * i, 2 * i + 1)] = dt;
        j_hi[(2 * i, 2 * i + 1)] = dt;
        j_lo[(2 * i + 1, 2 * i + 1)] = retain;
        j_hi[(2 * i + 1, 2 * i + 1)] = retain;
        let deg = nbrs.len() as f64;
        j_lo[(2 * i + 1, 2 * i)] = -dt * kappa * deg;
        j_hi[(2 * i + 1, 2 * i)] = dt * kappa * deg;
        for &j in nbrs {
            j_lo[(2 * i + 1, 2 * j)] = -dt * kappa;
            j_hi[(2 * i + 1, 2 * j)] = dt * kappa;
        }
    }
    let jw_col = DVector::from_fn(n, |r, _| if r % 2 == 1 { dt } else { 0.0 });
    let jac = JacobianBounds::new(
        j_lo,
        j_hi,
        DMatrix::from_column_slice(n, 1, jw_col.as_slice()),
        DMatrix::from_column_slice(n, 1, jw_col.as_slice()),
    )?;
    let domain_x = IntervalVector::new(
        DVector::from_fn(n, |r, _| if r % 2 == 0 { -1e3 } else { -50.0 }),
        DVector::from_fn(n, |r, _| if r % 2 == 0 { 1e3 } else { 50.0 }),
    )?;
    let domain_w = symmetric_box(&[0.1]);
    let plant = VectorField::new(eval, domain_x, domain_w, jac)?;

    // Dense single-column disturbance, concentrated on the hub frequency.
    let g = DMatrix::from_fn(n, 1, |r, _| {
        if r == 1 {
            dt
        } else if r % 2 == 1 {
            1e-8
        } else {
            1e-9
        }
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sensing = Vec::with_capacity(gens);
    for (i, nbrs) in adjacency.iter().enumerate() {
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let unit = |idx: usize, val: f64| {
            let mut r = DVector::zeros(n);
            r[idx] = val;
            r
        };
        rows.push(unit(2 * i, 1.0));
        for &j in nbrs {
            let mut r = DVector::zeros(n);
            r[2 * i] = 0.5;
            r[2 * j] = -0.5;
            rows.push(r);
        }
        rows.push(unit(2 * i + 1, 1.0));
        if i != 0 {
            rows.push(unit(1, 1.0));
        }
        let l = rows.len();
        let c = DMatrix::from_fn(l, n, |r, s| rows[r][s]);
        let halves: Vec<f64> = (0..l).map(|_| 0.008 + rng.random_range(0.0..0.004)).collect();
        sensing.push(AgentSensing::new(
            c,
            DMatrix::identity(l, l),
            DMatrix::zeros(l, 1),
            symmetric_box(&halves),
        )?);
    }

    let x0 = DVector::zeros(n);
    let initial_box = symmetric_box(&vec![0.5; n]);
    let scenario = Scenario {
        name: "power-like".into(),
        plant,
        g,
        sensing,
        graph,
        x0,
        initial_box,
        horizon,
        seed,
        quantize_decimals: None,
        input: InputScript::Sine {
            amp: vec![2.0],
            freq: vec![0.005],
            phase: vec![0.3],
        },
    };
    scenario.check_assumptions()?;
    Ok(scenario)
}

/// A random two-agent, two-state instance for desk-scale synthesis
/// cross-checks. Resamples until the decoupling is well-posed for both
/// agents.
pub fn random_toy_instance(seed: u64) -> Result<(Vec<AgentSynthesisData>, CommGraph)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = CommGraph::from_adjacency(2, &[(0, 1)])?;
    for _attempt in 0..64 {
        let a0 = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.7..0.7));
        let b0 = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-0.2..0.2));
        let g = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0));
        let (a1, b1) = (a0.clone(), b0.clone());
        let eval: FieldEval =
            FieldEval::Native(Arc::new(move |x: &DVector<f64>, w: &DVector<f64>| {
                &a1 * x + &b1 * w
            }));
        let plant = VectorField::new(
            eval,
            symmetric_box(&[2.0, 2.0]),
            symmetric_box(&[0.1]),
            JacobianBounds::new(a0.clone(), a0, b0.clone(), b0)?,
        )?;
        let mut agents = Vec::with_capacity(2);
        let mut ok = true;
        for l in [2usize, 2] {
            let c = DMatrix::from_fn(l, 2, |_, _| rng.random_range(-1.0..1.0));
            let halves: Vec<f64> = (0..l).map(|_| rng.random_range(0.005..0.03)).collect();
            let sensing = AgentSensing::new(
                c,
                DMatrix::identity(l, l),
                DMatrix::zeros(l, 1),
                symmetric_box(&halves),
            )?;
            match svd_decouple(sensing, &g) {
                Ok(sys) => agents.push(AgentSynthesisData::new(&sys, &plant)?),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok((agents, graph));
        }
    }
    Err(Error::InvalidInput(
        "could not draw a well-posed random instance".into(),
    ))
}

//! The distributed simultaneous input and state observer runtime.
//!
//! Each round every agent runs four steps:
//!
//! 1. **Propagate** its state box through the input-free equivalent
//!    dynamics (measurement-driven, interval-valued).
//! 2. **Exchange state boxes** with its neighbors and keep the tightest
//!    interval per coordinate.
//! 3. **Estimate the unknown input** from the refined state box and the
//!    measurement split.
//! 4. **Exchange input boxes** and refine likewise.
//!
//! Containment is inductive: if every round-`k` box contains the truth,
//! every round-`k+1` box does too, regardless of the (possibly unbounded)
//! unknown input.

use alloc::string::ToString;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::decouple::{DecoupledAgentSystem, EquivalentDynamics};
use crate::interval::{affine_image, IntervalVector};
use crate::jss::{jss_decompose, JssModel, VectorField};
use crate::netsim::{execute_round, CommGraph};
use crate::{Error, Result};

/// Observer gains of one agent. `T` is derived, never free:
/// `T = I − Γ C₂` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub l: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

impl ObserverGains {
    pub fn new(l: DMatrix<f64>, gamma: DMatrix<f64>, c2: &DMatrix<f64>) -> Result<Self> {
        let n = gamma.nrows();
        if l.nrows() != n || c2.ncols() != n || l.ncols() != c2.nrows() || gamma.ncols() != c2.nrows()
        {
            return Err(Error::Dimension(
                "gain dimensions inconsistent with C2".to_string(),
            ));
        }
        let t = DMatrix::identity(n, n) - &gamma * c2;
        Ok(Self { l, gamma, t })
    }

    /// Zero gains (`T = I`): the open-loop observer.
    pub fn zero(n: usize, c2_rows: usize) -> Self {
        Self {
            l: DMatrix::zeros(n, c2_rows),
            gamma: DMatrix::zeros(n, c2_rows),
            t: DMatrix::identity(n, n),
        }
    }

    /// Verifies `T = I − Γ C₂` for the given `C₂` to 1e-9.
    pub fn check_consistent(&self, c2: &DMatrix<f64>) -> Result<()> {
        let n = self.t.nrows();
        let residual = (&self.t - (DMatrix::identity(n, n) - &self.gamma * c2)).amax();
        if residual > 1e-9 {
            return Err(Error::InvalidInput(alloc::format!(
                "gain constraint T = I - Gamma*C2 violated (residual {residual:.3e})"
            )));
        }
        Ok(())
    }
}

/// One agent's current framers: pre-network and post-network boxes for the
/// state and the unknown input.
#[derive(Debug, Clone)]
pub struct AgentBelief {
    pub pre_state: IntervalVector,
    pub state_box: IntervalVector,
    pub pre_input: IntervalVector,
    pub input_box: IntervalVector,
}

/// The algebra for bounding the unknown input from a state box.
///
/// Exactly (no approximation):
///
/// ```text
/// d_k = h(x_k, w_k) + Υ D₁ v_k + Θ D₂ v_{k+1} + ζ_d,k+1
/// h(x, w) = Υ C₁ x + Θ C₂ f(x, w)
/// ```
///
/// `h` is JSS-decomposed as `A_h x + C_h w + μ(x, w)`; the noise terms are
/// collected in `Λ = [C_h, Υ D₁, Θ D₂]` applied to `η = (w, v, v⁺)`.
#[derive(Debug, Clone)]
pub struct InputEstimationModel {
    pub upsilon: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    /// JSS decomposition of `h`; `a()` is `A_h`, `b()` is `C_h`.
    pub jss: JssModel,
    // ζ_d = zd1·z₁ + zd3·z₂⁺
    zd1: DMatrix<f64>,
    zd3: DMatrix<f64>,
}

impl InputEstimationModel {
    /// Measurement-driven offset `ζ_d,k+1` from `(z₁ₖ, z₂ₖ₊₁)`.
    pub fn zeta_d(&self, z1_k: &DVector<f64>, z2_next: &DVector<f64>) -> DVector<f64> {
        &self.zd1 * z1_k + &self.zd3 * z2_next
    }

    /// Unknown-input dimension `p`.
    pub fn input_dim(&self) -> usize {
        self.lambda.nrows()
    }
}

/// Builds the input-estimation algebra for one decoupled agent and checks
/// it by replaying the exact input identity on a random trajectory.
pub fn build_input_model(
    sys: &DecoupledAgentSystem,
    plant: &VectorField,
) -> Result<InputEstimationModel> {
    let p = sys.v1.nrows();
    // Υ = (V₂ M₂ C₂ G₁ − V₁) M₁ and Θ = −V₂ M₂.
    let upsilon = (&sys.v2 * &sys.m2 * &sys.c2 * &sys.g1 - &sys.v1) * &sys.m1;
    let theta = -(&sys.v2 * &sys.m2);

    // h(x, w) = Θ C₂ f(x, w) + Υ C₁ x, decomposed like any field.
    let s = &theta * &sys.c2;
    let k = &upsilon * &sys.c1;
    let h_field = plant.linear_map(&s, Some(&k))?;
    let jss = jss_decompose(&h_field, &[])?;

    let nw = plant.noise_dim();
    let nv = sys.sensing.noise_box.dim();
    let mut lambda = DMatrix::zeros(p, nw + 2 * nv);
    lambda.view_mut((0, 0), (p, nw)).copy_from(&jss.b());
    lambda
        .view_mut((0, nw), (p, nv))
        .copy_from(&(&upsilon * &sys.d1));
    lambda
        .view_mut((0, nw + nv), (p, nv))
        .copy_from(&(&theta * &sys.d2));

    let zd1 = -upsilon.clone();
    let zd3 = &sys.v2 * &sys.m2;

    let model = InputEstimationModel {
        upsilon,
        theta,
        lambda,
        jss,
        zd1,
        zd3,
    };
    input_replay_check(&model, sys, plant)?;
    Ok(model)
}

/// Replays `d_k = h(x_k, w_k) + Υ D₁ v_k + Θ D₂ v_{k+1} + ζ_d,k+1` on a
/// random trajectory with arbitrary inputs.
fn input_replay_check(
    model: &InputEstimationModel,
    sys: &DecoupledAgentSystem,
    plant: &VectorField,
) -> Result<()> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xd1_e57);
    let p = model.input_dim();
    let sample = |b: &IntervalVector, rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_iterator(
            b.dim(),
            (0..b.dim()).map(|s| {
                let (lo, hi) = (b.lower()[s], b.upper()[s]);
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }),
        )
    };
    for _ in 0..20 {
        let x = sample(plant.domain_x(), &mut rng);
        let w = sample(plant.domain_w(), &mut rng);
        let v = sample(&sys.sensing.noise_box, &mut rng);
        let v_next = sample(&sys.sensing.noise_box, &mut rng);
        let d = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-10.0..10.0)));
        let d_next = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-10.0..10.0)));
        let x_next = plant.eval(&x, &w) + &sys.g * &d;
        let y = &sys.sensing.c * &x + &sys.sensing.d * &v + &sys.sensing.h * &d;
        let y_next =
            &sys.sensing.c * &x_next + &sys.sensing.d * &v_next + &sys.sensing.h * &d_next;
        let (z1_k, _) = sys.split_measurement(&y)?;
        let (_, z2_next) = sys.split_measurement(&y_next)?;
        // h via its JSS pieces plus the noise and offset terms.
        let h_val = model.jss.a() * &x + model.jss.b() * &w + model.jss.remainder(&x, &w);
        let predicted = h_val
            + &model.upsilon * &sys.d1 * &v
            + &model.theta * &sys.d2 * &v_next
            + model.zeta_d(&z1_k, &z2_next);
        let residual = (&predicted - &d).amax() / (1.0 + d.amax());
        if residual > 1e-8 {
            return Err(Error::Solver(alloc::format!(
                "input-identity replay failed (residual {residual:.3e})"
            )));
        }
    }
    Ok(())
}

/// Repairs the ordering of a corner-evaluated bound pair.
///
/// Mixed monotonicity guarantees `lo ≤ hi` exactly in real arithmetic, but
/// the two corner evaluations round independently, so a remainder that is
/// analytically zero can come back as (`+ε`, `−ε`). Inversions within
/// floating-point noise are merged; anything larger is a real bug and is
/// rejected.
fn clamp_to_domain(state_box: &IntervalVector, domain: &IntervalVector) -> Result<IntervalVector> {
    state_box.intersect(domain).map_err(|e| {
        Error::AssumptionViolated(alloc::format!(
            "state framer left the model domain in coordinate {}",
            e.coordinate
        ))
    })
}

fn ordered_hull(lo: DVector<f64>, hi: DVector<f64>) -> Result<IntervalVector> {
    let mut lo = lo;
    let mut hi = hi;
    for s in 0..lo.len() {
        if lo[s] > hi[s] {
            let scale = 1.0 + lo[s].abs().max(hi[s].abs());
            if lo[s] - hi[s] > 1e-9 * scale {
                return Err(Error::Solver(alloc::format!(
                    "corner bounds inverted beyond rounding noise in coordinate {s}"
                )));
            }
            let mid = 0.5 * (lo[s] + hi[s]);
            lo[s] = mid;
            hi[s] = mid;
        }
    }
    IntervalVector::new(lo, hi)
}

/// Step 1: propagates a state box one step through the equivalent dynamics
/// using the measurement triple `(z₁ₖ, z₂ₖ, z₂ₖ₊₁)`.
pub fn propagate_and_update(
    state_box: &IntervalVector,
    eq: &EquivalentDynamics,
    z1_k: &DVector<f64>,
    z2_k: &DVector<f64>,
    z2_next: &DVector<f64>,
) -> Result<IntervalVector> {
    // The remainder corner evaluations are only valid on the stated state
    // domain (where the Jacobian bounds hold), and the truth is guaranteed
    // to live there, so clamping the box to the domain is sound.
    let state_box = clamp_to_domain(state_box, eq.jss.field().domain_x())?;
    let state_box = &state_box;
    let w_box = eq.jss.field().domain_w();
    let rho_hi = eq.jss.decomposition_value(
        state_box.upper(),
        w_box.upper(),
        state_box.lower(),
        w_box.lower(),
    )?;
    let rho_lo = eq.jss.decomposition_value(
        state_box.lower(),
        w_box.lower(),
        state_box.upper(),
        w_box.upper(),
    )?;
    let rho_box = ordered_hull(rho_lo, rho_hi)?;

    let a_img = affine_image(&eq.a_tilde, state_box)?;
    let t_img = affine_image(&eq.gains.t, &rho_box)?;
    let psi_img = affine_image(&eq.psi, &eq.eta_box)?;
    let zeta = eq.zeta(z1_k, z2_k, z2_next);

    ordered_hull(
        a_img.lower() + t_img.lower() + psi_img.lower() + &zeta,
        a_img.upper() + t_img.upper() + psi_img.upper() + &zeta,
    )
}

/// Step 3: bounds the round-`k` unknown input from the refined state box
/// and the measurement pair `(z₁ₖ, z₂ₖ₊₁)`.
pub fn estimate_input(
    state_box: &IntervalVector,
    model: &InputEstimationModel,
    eta_box: &IntervalVector,
    z1_k: &DVector<f64>,
    z2_next: &DVector<f64>,
) -> Result<IntervalVector> {
    let state_box = clamp_to_domain(state_box, model.jss.field().domain_x())?;
    let state_box = &state_box;
    let w_box = model.jss.field().domain_w();
    let mu_hi = model.jss.decomposition_value(
        state_box.upper(),
        w_box.upper(),
        state_box.lower(),
        w_box.lower(),
    )?;
    let mu_lo = model.jss.decomposition_value(
        state_box.lower(),
        w_box.lower(),
        state_box.upper(),
        w_box.upper(),
    )?;
    let a_img = affine_image(&model.jss.a(), state_box)?;
    let lam_img = affine_image(&model.lambda, eta_box)?;
    let zeta_d = model.zeta_d(z1_k, z2_next);
    ordered_hull(
        a_img.lower() + mu_lo + lam_img.lower() + &zeta_d,
        a_img.upper() + mu_hi + lam_img.upper() + &zeta_d,
    )
}

/// Behavior when a neighborhood intersection comes up empty (the observed
/// data falsifies the model or noise bounds).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunPolicy {
    /// Halt and report the offending agent, round, and coordinate.
    Halt,
    /// Keep going with the bound ordering restored by swapping. Unsound:
    /// containment guarantees no longer hold after the first event.
    Permissive,
}

/// Steps 2 and 4: keeps the tightest interval per coordinate over the
/// closed neighborhood. Equals pairwise intersection folded over all
/// neighbors, so the result is a subset of every input.
pub fn network_refine(
    boxes: &[(usize, &IntervalVector)],
    policy: RunPolicy,
    agent: usize,
    round: usize,
) -> Result<IntervalVector> {
    let mut it = boxes.iter();
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidInput("no boxes to refine".to_string()))?;
    let mut acc = (*first.1).clone();
    for (_, b) in it {
        match acc.intersect(b) {
            Ok(tight) => acc = tight,
            Err(empty) => match policy {
                RunPolicy::Halt => {
                    return Err(Error::Inconsistency {
                        agent,
                        round,
                        coordinate: empty.coordinate,
                    })
                }
                RunPolicy::Permissive => {
                    let mut lo = acc.lower().clone();
                    let mut hi = acc.upper().clone();
                    for s in 0..acc.dim() {
                        let l = lo[s].max(b.lower()[s]);
                        let u = hi[s].min(b.upper()[s]);
                        lo[s] = l.min(u);
                        hi[s] = l.max(u);
                    }
                    acc = IntervalVector::new(lo, hi)?;
                }
            },
        }
    }
    Ok(acc)
}

/// Everything one agent needs at runtime.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub sys: DecoupledAgentSystem,
    pub eq: EquivalentDynamics,
    pub input_model: InputEstimationModel,
}

/// One `(round, agent)` record of the run.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub round: usize,
    pub agent: usize,
    pub belief: AgentBelief,
}

/// Runs the observer for rounds `0..=horizon` over the given network.
///
/// `measurements[i][k]` is agent `i`'s raw measurement `yᵏ`; the runtime
/// needs a one-step lead, so `horizon + 2` measurements per agent are
/// required. Round 0 publishes the shared initial box and already estimates
/// the round-0 input; rounds `k ≥ 1` run the four steps.
pub fn run_dsiso(
    agents: &[AgentRuntime],
    graph: &CommGraph,
    initial_box: &IntervalVector,
    measurements: &[Vec<DVector<f64>>],
    horizon: usize,
    policy: RunPolicy,
) -> Result<Vec<Vec<TraceRecord>>> {
    let n_agents = agents.len();
    if graph.agent_count() != n_agents || measurements.len() != n_agents {
        return Err(Error::Dimension(
            "agents, graph, and measurement streams must agree in count".to_string(),
        ));
    }
    for (i, m) in measurements.iter().enumerate() {
        if m.len() < horizon + 2 {
            return Err(Error::Dimension(alloc::format!(
                "agent {i} needs {} measurements for horizon {horizon}, got {}",
                horizon + 2,
                m.len()
            )));
        }
    }

    // z-splits, precomputed once per agent.
    let mut z1: Vec<Vec<DVector<f64>>> = Vec::with_capacity(n_agents);
    let mut z2: Vec<Vec<DVector<f64>>> = Vec::with_capacity(n_agents);
    for (agent, stream) in agents.iter().zip(measurements) {
        let mut z1_i = Vec::with_capacity(stream.len());
        let mut z2_i = Vec::with_capacity(stream.len());
        for y in stream {
            let (a, b) = agent.sys.split_measurement(y)?;
            z1_i.push(a);
            z2_i.push(b);
        }
        z1.push(z1_i);
        z2.push(z2_i);
    }

    let mut trace: Vec<Vec<TraceRecord>> = Vec::with_capacity(horizon + 1);
    let mut state_boxes: Vec<IntervalVector> =
        (0..n_agents).map(|_| initial_box.clone()).collect();

    for k in 0..=horizon {
        // Steps 1–2 (skipped at round 0: the initial box is shared).
        let (pre_states, refined_states) = if k == 0 {
            (state_boxes.clone(), state_boxes.clone())
        } else {
            let pre: Vec<IntervalVector> = agents
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    propagate_and_update(
                        &state_boxes[i],
                        &a.eq,
                        &z1[i][k - 1],
                        &z2[i][k - 1],
                        &z2[i][k],
                    )
                })
                .collect::<Result<_>>()?;
            let refined = execute_round(graph, &pre, |i, inbox| {
                network_refine(inbox, policy, i, k)
            })?;
            (pre, refined)
        };

        // Step 3: input estimation from the refined state box.
        let pre_inputs: Vec<IntervalVector> = agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                estimate_input(
                    &refined_states[i],
                    &a.input_model,
                    &a.eq.eta_box,
                    &z1[i][k],
                    &z2[i][k + 1],
                )
            })
            .collect::<Result<_>>()?;
        // Step 4: input exchange.
        let refined_inputs = execute_round(graph, &pre_inputs, |i, inbox| {
            network_refine(inbox, policy, i, k)
        })?;

        trace.push(
            (0..n_agents)
                .map(|i| TraceRecord {
                    round: k,
                    agent: i,
                    belief: AgentBelief {
                        pre_state: pre_states[i].clone(),
                        state_box: refined_states[i].clone(),
                        pre_input: pre_inputs[i].clone(),
                        input_box: refined_inputs[i].clone(),
                    },
                })
                .collect(),
        );
        state_boxes = refined_states;
    }
    Ok(trace)
}

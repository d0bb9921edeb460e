//! High-level drivers tying scenarios to synthesis and simulation.

use nalgebra::DVector;

use dsiso_core::observer::{run_dsiso, ObserverGains, RunPolicy, TraceRecord};
use dsiso_core::optim::Tolerances;
use dsiso_core::synthesis::{
    assemble_error_system, build_sigma_star, centralized_milp, cpdn_verify, error_bounds,
    error_min, stabilize_lp, CpdnCertificate, ErrorBounds, ErrorSystem, MilpConfig,
    SwitchingMatrix, SynthesisSolution,
};
use dsiso_core::Result;

use crate::scenario::{Scenario, TruthTrace};

/// Centralized optimal gain design for a scenario.
pub fn synthesize_milp(scenario: &Scenario, cfg: &MilpConfig) -> Result<SynthesisSolution> {
    let agents = scenario.synthesis_data()?;
    centralized_milp(&agents, &scenario.graph, cfg)
}

/// Distributed design: per-agent stabilizing rows, a one-round coverage
/// exchange, and a per-agent error-minimizing redesign that preserves the
/// certified row contractions.
pub fn synthesize_cpdn(scenario: &Scenario) -> Result<(SynthesisSolution, CpdnCertificate)> {
    let data = scenario.synthesis_data()?;
    let tol = Tolerances::default();
    let mut row_bounds = Vec::with_capacity(data.len());
    for d in &data {
        let (_, p) = stabilize_lp(d, &tol)?;
        row_bounds.push(p);
    }
    let cert = cpdn_verify(&row_bounds, &scenario.graph)?;
    let sigma = build_sigma_star(&cert)?;
    let mut gains = Vec::with_capacity(data.len());
    for (i, d) in data.iter().enumerate() {
        let (g, _levels) = error_min(d, &cert.j_sets[i], &tol)?;
        gains.push(g);
    }
    let (sys, bounds) = certified_bounds(scenario, &gains, &sigma)?;
    let _ = sys;
    let solution = SynthesisSolution {
        gains,
        gamma_star: None,
        sigma_star: sigma,
        rho_star: bounds.rho_star,
        p: None,
        gap_log: Vec::new(),
    };
    Ok((solution, cert))
}

/// Assembles the interconnected error system induced by a set of gains.
pub fn build_error_system(scenario: &Scenario, gains: &[ObserverGains]) -> Result<ErrorSystem> {
    let runtimes = scenario.build_runtimes(gains)?;
    let eqs: Vec<_> = runtimes.iter().map(|r| r.eq.clone()).collect();
    let models: Vec<_> = runtimes.iter().map(|r| r.input_model.clone()).collect();
    assemble_error_system(&eqs, &models)
}

/// Error system plus the transient/steady-state bound certificates for a
/// given switching selection.
pub fn certified_bounds(
    scenario: &Scenario,
    gains: &[ObserverGains],
    sigma: &SwitchingMatrix,
) -> Result<(ErrorSystem, ErrorBounds)> {
    let sys = build_error_system(scenario, gains)?;
    let bounds = error_bounds(&sys, sigma)?;
    Ok((sys, bounds))
}

/// Simulates the truth for a run seed and executes the observer on the
/// resulting measurement streams.
pub fn run_observer(
    scenario: &Scenario,
    gains: &[ObserverGains],
    run_seed: u64,
    policy: RunPolicy,
) -> Result<(Vec<Vec<TraceRecord>>, TruthTrace)> {
    let runtimes = scenario.build_runtimes(gains)?;
    let truth = scenario.simulate_truth(run_seed);
    let records = run_dsiso(
        &runtimes,
        &scenario.graph,
        &scenario.initial_box,
        &truth.ys,
        scenario.horizon,
        policy,
    )?;
    Ok((records, truth))
}

/// Per-round worst-case error norms of a finished run.
pub struct RunErrors {
    /// max over agents and coordinates of the state error at each round.
    pub e_x_inf: Vec<f64>,
    /// max over agents and coordinates of the input error at each round.
    pub e_d_inf: Vec<f64>,
    /// max over agents of the 1-norm of the state error at each round.
    pub e_x_one: Vec<f64>,
    pub containment_violations: usize,
}

/// Checks containment and collects error norms against the truth.
pub fn run_errors(records: &[Vec<TraceRecord>], truth: &TruthTrace) -> RunErrors {
    let mut e_x_inf = Vec::with_capacity(records.len());
    let mut e_d_inf = Vec::with_capacity(records.len());
    let mut e_x_one = Vec::with_capacity(records.len());
    let mut violations = 0usize;
    for round in records {
        let mut mx = 0.0f64;
        let mut md = 0.0f64;
        let mut m1 = 0.0f64;
        for rec in round {
            let x = &truth.xs[rec.round];
            let b = &rec.belief;
            if !b.state_box.contains(x) {
                violations += 1;
            }
            let mut one = 0.0f64;
            for s in 0..x.len() {
                let e = (x[s] - b.state_box.lower()[s]).max(b.state_box.upper()[s] - x[s]);
                mx = mx.max(e);
                one += e;
            }
            m1 = m1.max(one);
            if let Some(d) = truth.ds.get(rec.round) {
                if !b.input_box.contains(d) {
                    violations += 1;
                }
                for s in 0..d.len() {
                    let e = (d[s] - b.input_box.lower()[s]).max(b.input_box.upper()[s] - d[s]);
                    md = md.max(e);
                }
            }
        }
        e_x_inf.push(mx);
        e_d_inf.push(md);
        e_x_one.push(m1);
    }
    RunErrors {
        e_x_inf,
        e_d_inf,
        e_x_one,
        containment_violations: violations,
    }
}

/// Initial worst-case state error of a shared initial box around a truth.
pub fn initial_error_inf(scenario: &Scenario) -> f64 {
    let b = &scenario.initial_box;
    let x = &scenario.x0;
    let mut e = 0.0f64;
    for s in 0..x.len() {
        e = e.max((x[s] - b.lower()[s]).max(b.upper()[s] - x[s]));
    }
    e
}

/// 1-norm of a vector's entries.
pub fn one_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|t| t.abs()).sum()
}

use std::time::Instant;

use dsiso_cli::driver::{run_errors, run_observer, synthesize_cpdn, synthesize_milp};
use dsiso_cli::scenario::{builtin_power_like, builtin_unicycle};
use dsiso_core::observer::RunPolicy;
use dsiso_core::synthesis::MilpConfig;

#[test]
#[ignore]
fn probe_milp_timing() {
    let sc = builtin_unicycle(7, 10).unwrap();
    let t0 = Instant::now();
    let sol = synthesize_milp(&sc, &MilpConfig::default()).unwrap();
    println!(
        "milp: {:?}, gamma={:?}, rho={}, gap_log={} entries",
        t0.elapsed(),
        sol.gamma_star,
        sol.rho_star,
        sol.gap_log.len()
    );
}

#[test]
#[ignore]
fn probe_run_timing() {
    let sc = builtin_unicycle(7, 2000).unwrap();
    let sol = synthesize_cpdn(&sc).unwrap().0;
    let t0 = Instant::now();
    let (records, truth) = run_observer(&sc, &sol.gains, 0, RunPolicy::Halt).unwrap();
    let flat: Vec<_> = records.into_iter().flatten().collect();
    let errs = run_errors(
        &flat.chunks(sc.agent_count()).map(|c| c.to_vec()).collect::<Vec<_>>(),
        &truth,
    );
    println!(
        "one 2000-step run: {:?}, violations={}, final e_x={}",
        t0.elapsed(),
        errs.containment_violations,
        errs.e_x_inf.last().unwrap()
    );
}

#[test]
#[ignore]
fn probe_power_like_cpdn() {
    let sc = builtin_power_like(10, 11, 100).unwrap();
    let t0 = Instant::now();
    let (sol, cert) = synthesize_cpdn(&sc).unwrap();
    println!(
        "cpdn: {:?}, verified={}, rho_star={}",
        t0.elapsed(),
        cert.verified,
        sol.rho_star
    );
}

#[test]
#[ignore]
fn probe_unicycle_design_lp() {
    use dsiso_core::synthesis::{design_value_for_sigma, SwitchingMatrix};
    let sc = builtin_unicycle(7, 10).unwrap();
    let agents = sc.synthesis_data().unwrap();
    let sigma = SwitchingMatrix::identity(6, 4);
    let t0 = Instant::now();
    match design_value_for_sigma(&agents, &sigma, &MilpConfig::default()) {
        Ok(v) => println!("identity sigma design LP: {v} in {:?}", t0.elapsed()),
        Err(e) => println!("identity sigma design LP error: {e} after {:?}", t0.elapsed()),
    }
}

use qdrive_core::classical::compare_quantum_classical;
use qdrive_core::dynamics::uniform_grid;
use qdrive_core::energetics::lindblad_ledger;
use qdrive_core::jc::{
    build_jc, excited_initial_state, fig2_experiment, golden_rule_dissipator, jc_layout, DriveState, JCParams,
};
use qdrive_core::linalg::expectation;
use qdrive_core::{Error, C64};

fn decay_ledger(n_trunc: usize, t_max: f64) -> qdrive_core::energetics::EnergyLedger {
    let p = JCParams::new(0.5, n_trunc).unwrap();
    let rho0 = excited_initial_state(&DriveState::fock(0, n_trunc).unwrap());
    let ls = golden_rule_dissipator(&p, 0.2).unwrap();
    lindblad_ledger(&rho0, &build_jc(&p).unwrap(), &ls, &jc_layout(&p).unwrap(), t_max, 1e-3, 100)
        .unwrap()
        .0
}

#[test]
fn vacuum_decay_does_not_depend_on_extra_fock_levels() {
    let small = decay_ledger(4, 20.0);
    let large = decay_ledger(8, 20.0);
    assert_eq!(small.len(), large.len());
    for i in 0..small.len() {
        for (a, b) in [
            (small.w_q[i], large.w_q[i]),
            (small.q_s[i], large.q_s[i]),
            (small.q_d[i], large.q_d[i]),
            (small.delta_h_d(i), large.delta_h_d(i)),
        ] {
            assert!((a - b).abs() < 1e-10, "row {i}: {a} vs {b}");
        }
    }
}

#[test]
fn vacuum_decay_ends_in_joint_ground_state() {
    let p = JCParams::new(0.5, 4).unwrap();
    let run = fig2_experiment(&p, 0.2, 150.0, 1e-3, 1000).unwrap();
    let rho = run.trajectory.final_state();
    // |0_F, g⟩ is composite index 0
    assert!((rho[[0, 0]].re - 1.0).abs() < 1e-4);
    let h = build_jc(&p).unwrap().lift_parts(&jc_layout(&p).unwrap()).unwrap().total();
    // all of ω/2 + the ground-state binding leaves as heat
    let e_final = expectation(rho, &h).re;
    let last = run.ledger.len() - 1;
    assert!((0.5 - e_final - run.ledger.q_tot[last]).abs() < 1e-4);
}

#[test]
fn short_runs_report_non_convergence() {
    let p = JCParams::new(0.5, 4).unwrap();
    assert!(matches!(
        fig2_experiment(&p, 0.2, 10.0, 1e-3, 100),
        Err(Error::NotConverged { .. })
    ));
}

#[test]
fn classical_and_quantum_work_agree_at_short_times() {
    // before the quantum collapse sets in, both follow −sin²(g|α|t)
    let nbar: f64 = 100.0;
    let p = JCParams::new(0.5, qdrive_core::jc::default_truncation(nbar)).unwrap();
    let grid = uniform_grid(0.3, 0.01).unwrap();
    let cmp = compare_quantum_classical(&p, C64::new(nbar.sqrt(), 0.0), &grid).unwrap();
    assert!(cmp.max_deviation_until(0.3) < 0.03, "{}", cmp.max_deviation_until(0.3));
    assert!(cmp.w_q.iter().zip(&cmp.w_cl).skip(1).all(|(q, c)| *q < 0.0 && *c < 0.0));
}

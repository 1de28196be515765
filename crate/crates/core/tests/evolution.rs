mod common;

use std::f64::consts::PI;

use kramers::diffusion::DiffusionField;
use kramers::elliptic::operator_for;
use kramers::error::{Error, EvolutionError};
use kramers::evolution::{
    energy_monitor, initial_data, solve_ks, solve_limit_system, valley_masses, AlphaProfile, Scenario, XDomain,
};
use kramers::grid::Grid;
use kramers::rates::chain_marginal;
use proptest::prelude::*;

#[test]
fn equilibrium_is_stationary() {
    let (p, s) = common::builtin("double_well");
    let chain = common::chain_of(&s);
    let sc = common::mixed_scenario(chain.mu_hat.iter().copied().collect(), 0.5, 5);
    let ks = solve_ks(&p, &s, &chain, &sc, 0.1).unwrap();
    for u in &ks.snapshots {
        assert!(u.iter().all(|v| (v - 1.0).abs() <= 1e-12));
    }
    for r in &ks.monitor {
        assert!(r.xi_energy.abs() <= 1e-20 && r.x_energy == 0.0);
    }
}

#[test]
fn initial_data_levels() {
    let (p, s) = common::builtin("double_well");
    let chain = common::chain_of(&s);
    let sc = common::mixed_scenario(vec![1.0, 0.0], 1.0, 1);
    let g = Grid::for_epsilon(s.domain.clone(), 0.1, 8.0);
    let dec = s.on_grid(&p, &g).unwrap();
    let u = initial_data(&dec, &chain, &sc);
    for k in 0..g.len() {
        if dec.valley_masks[0][k] {
            assert_eq!(u[k], 2.0);
        }
        if dec.valley_masks[1][k] {
            assert_eq!(u[k], 0.0);
        }
        assert!((0.0..=2.0).contains(&u[k]));
    }
}

#[test]
fn double_well_masses_follow_two_state_chain() {
    let (p, s) = common::builtin("double_well");
    let chain = common::chain_of(&s);
    let sc = common::mixed_scenario(vec![1.0, 0.0], 1.0, 10);
    let ks = solve_ks(&p, &s, &chain, &sc, 0.05).unwrap();
    let m = valley_masses(&ks);
    let r = 2f64.sqrt() / (2.0 * PI);
    let exact = common::two_state_mass(r, 1.0);
    let last = m.masses.last().unwrap();
    assert!((last[0] - exact).abs() <= 0.1 * exact, "{} vs {exact}", last[0]);
    assert!((last[1] - (1.0 - exact)).abs() <= 0.1);
    for (t, ms) in m.masses.iter().enumerate() {
        let sum: f64 = ms.iter().sum::<f64>() + m.delta[t];
        assert!((sum - m.total[t]).abs() <= 1e-14);
    }
    assert!(ks.mass_drift() <= 1e-10);
}

#[test]
fn initial_masses_are_laplace_ratios() {
    let (p, s) = common::builtin("double_well");
    let chain = common::chain_of(&s);
    let sc = common::mixed_scenario(vec![0.8, 0.3], 0.1, 1);
    for eps in [0.1, 0.05] {
        let ks = solve_ks(&p, &s, &chain, &sc, eps).unwrap();
        let m = valley_masses(&ks);
        let g = Grid::for_epsilon(s.domain.clone(), eps, 8.0);
        let row = kramers::asymptotics::laplace_row(&p, &s, eps, &g).unwrap();
        for (i, a) in [0.8, 0.3].iter().enumerate() {
            let expected = a * row.rho_v[i] / row.rho_z;
            assert!((m.masses[0][i] - expected).abs() <= 1e-12, "eps {eps}");
        }
    }
}

#[test]
fn transition_mass_shrinks_with_eps() {
    let (p, s) = common::builtin("double_well");
    let chain = common::chain_of(&s);
    let sc = common::mixed_scenario(vec![1.0, 0.0], 1.0, 4);
    let d1 = valley_masses(&solve_ks(&p, &s, &chain, &sc, 0.1).unwrap()).delta;
    let d2 = valley_masses(&solve_ks(&p, &s, &chain, &sc, 0.05).unwrap()).delta;
    for (a, b) in d1.iter().zip(&d2) {
        assert!(b <= a);
    }
}

#[test]
fn limit_without_diffusion_is_the_chain() {
    for name in ["double_well", "triple_well"] {
        let (_, s) = common::builtin(name);
        let chain = common::chain_of(&s);
        let mut a0 = vec![0.0; s.len()];
        a0[0] = 1.0;
        let sc = common::mixed_scenario(a0.clone(), 2.0, 8);
        let lim = solve_limit_system(&chain, &sc, 0.01).unwrap();
        for (t, al) in lim.times.iter().zip(&lim.alpha) {
            let exact = chain_marginal(&chain, &a0, *t);
            for i in 0..s.len() {
                assert!((al[i][0] - exact[i]).abs() <= 1e-8, "{name} t {t}");
            }
        }
    }
}

#[test]
fn triple_well_limit_relaxes_to_weights() {
    let (_, s) = common::builtin("triple_well");
    let chain = common::chain_of(&s);
    let sc = common::mixed_scenario(vec![1.0, 0.0, 0.0], 30.0, 1);
    let lim = solve_limit_system(&chain, &sc, 0.05).unwrap();
    for i in 0..3 {
        assert!((lim.alpha.last().unwrap()[i][0] - chain.mu_hat[i]).abs() <= 1e-6);
    }
}

#[test]
fn single_valley_limit_is_heat_equation() {
    let (_, s) = common::builtin("harmonic");
    let chain = common::chain_of(&s);
    let sc = Scenario {
        x: XDomain { length: 1.0, nodes: 41 },
        diffusion: DiffusionField::Constant { value: 1.0 },
        alpha0: vec![AlphaProfile::Cosine { mean: 1.0, amplitude: 0.5, mode: 1 }],
        output_times: vec![0.05, 0.1],
        dt: 1e-4,
        adapt_dt: true,
        cells_per_sqrt_eps: 8.0,
    };
    let lim = solve_limit_system(&chain, &sc, 1e-4).unwrap();
    assert!(lim.mass_drift() <= 1e-12);
    let x = sc.x.points();
    for (t, al) in lim.times.iter().zip(&lim.alpha) {
        for (j, v) in al[0].iter().enumerate() {
            let exact = 1.0 + 0.5 * (-PI * PI * t).exp() * (PI * x[j]).cos();
            assert!((v - exact).abs() <= 1e-3, "t {t} x {}", x[j]);
        }
    }
}

#[test]
fn weighted_flat_state_is_stationary() {
    let (_, s) = common::builtin("triple_well");
    let chain = common::chain_of(&s);
    let sc = Scenario {
        x: XDomain { length: 1.0, nodes: 11 },
        diffusion: DiffusionField::Sine { base: 1.0, amplitude: 0.5, length: 1.0 },
        alpha0: chain.mu_hat.iter().map(|&m| AlphaProfile::Constant { value: 2.0 * m }).collect(),
        output_times: vec![0.5],
        dt: 0.001,
        adapt_dt: true,
        cells_per_sqrt_eps: 8.0,
    };
    let lim = solve_limit_system(&chain, &sc, 0.001).unwrap();
    for i in 0..3 {
        for v in &lim.alpha[1][i] {
            assert!((v - 2.0 * chain.mu_hat[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn xi_step_is_self_adjoint() {
    let (p, s) = common::builtin("double_well");
    let g = Grid::for_epsilon(s.domain.clone(), 0.05, 8.0);
    let dec = s.on_grid(&p, &g).unwrap();
    let op = operator_for(&dec, 0.05).unwrap();
    let scale = op.matrix.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(op.matrix.is_symmetric(1e-12 * scale));
}

#[test]
fn l2_norm_decays_without_x_diffusion() {
    let (p, s) = common::builtin("double_well");
    let chain = common::chain_of(&s);
    let sc = common::mixed_scenario(vec![1.0, 0.0], 1.0, 4);
    let ks = solve_ks(&p, &s, &chain, &sc, 0.1).unwrap();
    let rep = energy_monitor(&ks.monitor, ks.sup_u0, ks.records[0].norm_sq);
    assert!(rep.lyapunov_monotone, "{rep:?}");
    assert!(rep.bounds_hold);
}

#[test]
fn dissipation_stable_under_step_halving() {
    let (p, s) = common::builtin("double_well");
    let chain = common::chain_of(&s);
    let mut sc = common::mixed_scenario(vec![1.0, 0.0], 1.0, 4);
    // backward Euler charges the stiff initial layer about |du|^2 / dt, so the
    // step has to resolve it (the fastest xi-rate here is about 300)
    sc.dt = 2.5e-4;
    let a = solve_ks(&p, &s, &chain, &sc, 0.1).unwrap();
    sc.dt = 1.25e-4;
    let b = solve_ks(&p, &s, &chain, &sc, 0.1).unwrap();
    let (da, db) = (a.monitor.last().unwrap().dissipation, b.monitor.last().unwrap().dissipation);
    assert!(da.is_finite() && da > 0.0);
    assert!((da - db).abs() <= 0.05 * db, "{da} vs {db}");
}

#[test]
fn too_large_step_without_adaptation_rejected() {
    let (p, s) = common::builtin("double_well");
    let chain = common::chain_of(&s);
    let mut sc = common::diffusive_scenario(0.1, 1);
    sc.adapt_dt = false;
    sc.dt = 0.01;
    let r = solve_ks(&p, &s, &chain, &sc, 0.2);
    assert!(matches!(r, Err(Error::Evolution(EvolutionError::Stability { .. }))), "{r:?}");
}

#[test]
fn two_dimensional_landscape_rejected() {
    let (p, s) = common::builtin("double_well_2d");
    let chain = common::chain_of(&s);
    let sc = common::mixed_scenario(vec![1.0, 0.0], 0.1, 1);
    assert!(matches!(solve_ks(&p, &s, &chain, &sc, 0.2), Err(Error::Evolution(EvolutionError::Dimension(2)))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn maximum_principle_and_conservation(a0 in 0.0f64..2.0, a1 in 0.0f64..2.0, amp in 0.0f64..0.9, diffuse in any::<bool>()) {
        let (p, s) = common::builtin("double_well");
        let chain = common::chain_of(&s);
        let sc = Scenario {
            x: XDomain { length: 1.0, nodes: if diffuse { 9 } else { 1 } },
            diffusion: if diffuse { DiffusionField::Constant { value: 0.5 } } else { DiffusionField::Zero },
            alpha0: vec![AlphaProfile::Cosine { mean: a0 + 0.01, amplitude: amp * a0, mode: 1 }, common::constant(a1)],
            output_times: vec![0.25, 0.5],
            dt: 0.01,
            adapt_dt: true,
            cells_per_sqrt_eps: 8.0,
        };
        let ks = solve_ks(&p, &s, &chain, &sc, 0.2).unwrap();
        for r in &ks.monitor {
            prop_assert!(r.inf >= -1e-12 * ks.sup_u0 && r.sup <= ks.sup_u0 * (1.0 + 1e-12));
        }
        prop_assert!(ks.mass_drift() <= 1e-8);
        let lim = solve_limit_system(&chain, &sc, ks.dt).unwrap();
        prop_assert!(lim.mass_drift() <= 1e-10);
    }
}

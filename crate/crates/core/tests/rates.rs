mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use kramers::diffusion::DiffusionField;
use kramers::error::RatesError;
use kramers::rates::{chain_marginal, dirichlet_form, solve_balance, transition_matrix, ChainSpec};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

#[test]
fn double_well_closed_forms() {
    let (_, s) = common::builtin("double_well");
    let c = common::chain_of(&s);
    let r = 2f64.sqrt() / (2.0 * PI);
    assert!((c.kappa[(0, 1)] - 1.0 / (2.0 * PI)).abs() <= 1e-12);
    assert!((c.r[(0, 1)] - r).abs() <= 1e-12);
    assert!((c.r[(1, 0)] - r).abs() <= 1e-12);
    assert_abs_diff_eq!(c.mu_i[0], 1.0 / 2f64.sqrt(), epsilon = 1e-14);
    assert_abs_diff_eq!(c.mu_hat[0], 0.5, epsilon = 1e-14);
}

#[test]
fn triple_well_closed_forms() {
    let (_, s) = common::builtin("triple_well");
    let c = common::chain_of(&s);
    // saddle curvature -8/3, minima curvatures 8, 2, 8
    let kappa = (8.0f64 / 3.0).sqrt() / (2.0 * PI);
    assert_eq!(c.kappa[(0, 2)], 0.0);
    assert_eq!(c.r[(0, 2)], 0.0);
    assert!((c.kappa[(0, 1)] - kappa).abs() <= 1e-12);
    assert!((c.kappa[(1, 2)] - kappa).abs() <= 1e-12);
    assert!((c.r[(0, 1)] - kappa * 8f64.sqrt()).abs() <= 1e-12);
    assert!((c.r[(1, 0)] - kappa * 2f64.sqrt()).abs() <= 1e-12);
    let mu = 2.0 / 8f64.sqrt() + 1.0 / 2f64.sqrt();
    assert_abs_diff_eq!(c.mu_hat[1], (1.0 / 2f64.sqrt()) / mu, epsilon = 1e-14);
}

#[test]
fn asym2d_weights_differ() {
    let (_, s) = common::builtin("asym2d");
    let c = common::chain_of(&s);
    let left = 1.0 / (2.0 * (-0.5f64).exp()).sqrt();
    let right = 1.0 / (2.0 * 0.5f64.exp()).sqrt();
    assert_abs_diff_eq!(c.mu_i[0], left, epsilon = 1e-12);
    assert_abs_diff_eq!(c.mu_i[1], right, epsilon = 1e-12);
    assert!((c.kappa[(0, 1)] - 1.0 / (2.0 * PI)).abs() <= 1e-12);
}

#[test]
fn balance_for_double_well() {
    let (_, s) = common::builtin("double_well");
    let c = common::chain_of(&s);
    let bal = solve_balance(&c, &[1.0, -1.0]).unwrap();
    // M = (1 / (2 pi sqrt 2)) [[1, -1], [-1, 1]], so b_1 - b_2 = 2 sqrt2 pi
    assert_abs_diff_eq!(bal.b[0], 2f64.sqrt() * PI, epsilon = 1e-12);
    assert_abs_diff_eq!(bal.b[1], -(2f64.sqrt()) * PI, epsilon = 1e-12);
    assert_abs_diff_eq!(bal.dirichlet, 2.0 * 2f64.sqrt() * PI, epsilon = 1e-11);
    assert_abs_diff_eq!(bal.d_c, -bal.dirichlet, epsilon = 1e-11);
    assert!(bal.residual <= 1e-13);
    assert!(matches!(solve_balance(&c, &[1.0, 0.0]), Err(RatesError::Range { .. })));
}

#[test]
fn marginal_matches_two_state_solution() {
    let (_, s) = common::builtin("double_well");
    let c = common::chain_of(&s);
    let r = 2f64.sqrt() / (2.0 * PI);
    for t in [0.0, 0.5, 1.0, 2.0, 10.0] {
        let a = chain_marginal(&c, &[1.0, 0.0], t);
        assert!((a[0] - common::two_state_mass(r, t)).abs() <= 1e-12);
    }
    assert!((chain_marginal(&c, &[1.0, 0.0], 1.0)[0] - 0.8187636568).abs() < 1e-10);
}

fn random_chain() -> impl Strategy<Value = ChainSpec> {
    (2usize..6).prop_flat_map(|k| {
        (
            proptest::collection::vec(0.01f64..2.0, k * (k - 1) / 2),
            proptest::collection::vec(0.0f64..1.0, k * (k - 1) / 2),
            proptest::collection::vec(0.1f64..3.0, k),
        )
            .prop_map(move |(w, keep, mu)| {
                let mut kappa = DMatrix::zeros(k, k);
                let mut idx = 0;
                for i in 0..k {
                    for j in i + 1..k {
                        // the path i, i+1 keeps the graph connected
                        if j == i + 1 || keep[idx] < 0.5 {
                            kappa[(i, j)] = w[idx];
                            kappa[(j, i)] = w[idx];
                        }
                        idx += 1;
                    }
                }
                ChainSpec::from_parts(kappa, DVector::from_vec(mu), DiffusionField::Zero)
            })
    })
}

proptest! {
    #[test]
    fn detailed_balance_and_psd(c in random_chain(), b in proptest::collection::vec(-2.0f64..2.0, 6)) {
        let k = c.k;
        for i in 0..k {
            for j in 0..k {
                prop_assert!((c.mu_hat[i] * c.r[(i, j)] - c.mu_hat[j] * c.r[(j, i)]).abs() <= 1e-12);
            }
            prop_assert!(c.generator.row(i).sum().abs() <= 1e-12);
        }
        let eig = SymmetricEigen::new(c.m.clone());
        let top = eig.eigenvalues.amax();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12 * top));
        prop_assert_eq!(eig.eigenvalues.iter().filter(|l| l.abs() <= 1e-10 * top).count(), 1);
        prop_assert!((&c.m * DVector::from_element(k, 1.0)).amax() <= 1e-12 * top);
        let bv = DVector::from_column_slice(&b[..k]);
        let quad = bv.dot(&(&c.m * &bv));
        prop_assert!((dirichlet_form(&c, &b[..k]) - quad).abs() <= 1e-12 * (1.0 + quad.abs()));
    }

    #[test]
    fn semigroup_and_invariance(c in random_chain(), s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let k = c.k;
        let ps = transition_matrix(&c, s);
        let pt = transition_matrix(&c, t);
        let pst = transition_matrix(&c, s + t);
        prop_assert!((&pst - &ps * &pt).amax() <= 1e-10);
        let a0: Vec<f64> = (0..k).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let a = chain_marginal(&c, &a0, t);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(a.iter().all(|&v| v >= -1e-12));
        let stat = chain_marginal(&c, c.mu_hat.as_slice(), t);
        for i in 0..k {
            prop_assert!((stat[i] - c.mu_hat[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn balance_solution_is_minimum_norm(c in random_chain(), raw in proptest::collection::vec(-1.0f64..1.0, 6)) {
        let k = c.k;
        let mean = raw[..k].iter().sum::<f64>() / k as f64;
        let rhs: Vec<f64> = raw[..k].iter().map(|v| v - mean).collect();
        let bal = solve_balance(&c, &rhs).unwrap();
        prop_assert!(bal.residual <= 1e-9 * (1.0 + rhs.iter().map(|v| v.abs()).sum::<f64>()));
        prop_assert!(bal.b.iter().sum::<f64>().abs() <= 1e-9);
    }
}

#[test]
fn disconnected_graph_is_singular() {
    let kappa = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let c = ChainSpec::from_parts(kappa, DVector::from_element(3, 1.0), DiffusionField::Zero);
    assert!(matches!(solve_balance(&c, &[1.0, -1.0, 0.0]), Err(RatesError::Singularity { .. })));
}

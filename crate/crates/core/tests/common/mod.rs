//! Independent reference computations for the integration tests.
#![allow(dead_code)]

use kramers::diffusion::DiffusionField;
use kramers::evolution::{AlphaProfile, Scenario, XDomain};
use kramers::landscape::{analyze, Potential, ValleyOptions, ValleyStructure};
use kramers::rates::{build_chain, ChainSpec};

pub fn builtin(name: &str) -> (Potential, ValleyStructure) {
    let p = Potential::builtin(name).unwrap();
    let (_, s) = analyze(&p, &p.default_box().unwrap(), &ValleyOptions::default()).unwrap();
    (p, s)
}

pub fn chain_of(s: &ValleyStructure) -> ChainSpec {
    build_chain(s, &DiffusionField::Zero).unwrap()
}

fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // fixed pre-split keeps narrow peaks from being skipped
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_step(&f, x0, x1, f0, fm, f1, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Root of `f` in `[a, b]` by bisection; `f(a)` and `f(b)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    assert!(fa * f(b) <= 0.0, "no sign change");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Exact capacity of the 1-d double well between the valley cores: with
/// weight `w = eps e^{(H-h)/eps} e^{-Phi/eps} / Z` the minimiser has
/// `psi' ∝ 1/w`, so the energy is `(b_1 - b_2)^2 / int 1/w` over the gap.
pub fn double_well_capacity(eps: f64, eta: f64, db: f64) -> f64 {
    let phi = |x: f64| (x * x - 1.0).powi(2) / 4.0;
    let (h_top, level) = (0.25, 0.25 - eta);
    let z = simpson(|x| (-phi(x) / eps).exp(), -2.0, 2.0, 1e-14);
    let right = bisect(|x| phi(x) - level, 0.0, 1.0);
    let inv_w = |x: f64| z * ((phi(x) - h_top) / eps).exp() / eps;
    let gap = simpson(inv_w, -right, right, 1e-13);
    db * db / gap
}

/// Valley-1 mass of the symmetric two-state chain started in valley 1.
pub fn two_state_mass(r: f64, t: f64) -> f64 {
    0.5 + 0.5 * (-2.0 * r * t).exp()
}

pub fn constant(v: f64) -> AlphaProfile {
    AlphaProfile::Constant { value: v }
}

/// Well-mixed scenario (single x node, no x-diffusion).
pub fn mixed_scenario(alpha0: Vec<f64>, t_end: f64, outputs: usize) -> Scenario {
    Scenario {
        x: XDomain { length: 1.0, nodes: 1 },
        diffusion: DiffusionField::Zero,
        alpha0: alpha0.into_iter().map(constant).collect(),
        output_times: (1..=outputs).map(|k| t_end * k as f64 / outputs as f64).collect(),
        dt: 0.01,
        adapt_dt: true,
        cells_per_sqrt_eps: 8.0,
    }
}

/// The spatial scenario: x in [0, 1], a = 1, two valleys.
pub fn diffusive_scenario(t_end: f64, outputs: usize) -> Scenario {
    Scenario {
        x: XDomain { length: 1.0, nodes: 21 },
        diffusion: DiffusionField::Constant { value: 1.0 },
        alpha0: vec![AlphaProfile::Cosine { mean: 1.0, amplitude: 0.5, mode: 1 }, constant(0.0)],
        output_times: (1..=outputs).map(|k| t_end * k as f64 / outputs as f64).collect(),
        dt: 0.01,
        adapt_dt: true,
        cells_per_sqrt_eps: 8.0,
    }
}

// SPDX-License-Identifier: Apache-2.0
use ctmc_sens::model::{fixtures, parse_model, Model};
use ctmc_sens::network::{Observable, State};
use ctmc_sens::oracle::{
    asymptotic_covariance, build_generator, check_irreducible, linear_moment_sensitivity,
    sample_limit_distributions, sensitivity_direct, sensitivity_direct_mass_action, sensitivity_fd,
    solve_poisson, stationary_distribution, Fsp, OracleError, Truncation, TruncationSpec,
};
use ctmc_sens::stats::Moments;
use proptest::prelude::*;

fn load(text: &str) -> Model {
    parse_model(text).unwrap()
}

fn trunc(m: &Model) -> Truncation {
    m.truncation.as_ref().unwrap().build(&m.network, &m.params, &m.initial).unwrap()
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn conservation_surface_is_sorted_and_indexed() {
    let t = Truncation::conservation_surface(&[1, 1, 1], 10).unwrap();
    assert_eq!(t.len() as u64, binomial(12, 2));
    assert!(t.states().windows(2).all(|w| w[0] < w[1]));
    for (i, s) in t.states().iter().enumerate() {
        assert_eq!(t.index_of(s), Some(i));
        assert_eq!(s.0.iter().sum::<u32>(), 10);
    }
    assert_eq!(t.index_of(&State::new(vec![3, 3, 3])), None);
}

#[test]
fn box_truncation_keeps_only_reachable_states() {
    let m = load(fixtures::PURE_DEATH);
    let t = trunc(&m);
    assert_eq!(t.len(), 11);
    let m = load(fixtures::LINEAR);
    let spec = TruncationSpec::Box { max: vec![10, 10, 10] };
    let b = spec.build(&m.network, &m.params, &m.initial).unwrap();
    // mass is conserved, so the box and the surface coincide
    assert_eq!(b.states(), trunc(&m).states());
    let too_small = TruncationSpec::Box { max: vec![2, 10, 10] };
    assert!(matches!(
        too_small.build(&m.network, &m.params, &m.initial),
        Err(OracleError::InitialOutside(_))
    ));
}

#[test]
fn leaky_box_reports_mass_loss() {
    let m = load(fixtures::BIRTH_DEATH);
    let small = TruncationSpec::Box { max: vec![3] }.build(&m.network, &m.params, &m.initial).unwrap();
    let sol = stationary_distribution(&m.network, &m.params, &small).unwrap();
    assert!(sol.mass_leak_rate > 0.0);
    let big = trunc(&m);
    let sol = stationary_distribution(&m.network, &m.params, &big).unwrap();
    // exact π(40) ≈ e⁻¹/40! sits far below the round-off floor of the solve
    assert!(sol.mass_leak_rate < 1e-13, "{}", sol.mass_leak_rate);
    // Poisson(1) stationary law
    for (i, p) in sol.pi.iter().take(8).enumerate() {
        let exact = (-1.0f64).exp() / (1..=i as u32).map(f64::from).product::<f64>();
        assert!((p - exact).abs() < 1e-12, "{i}: {p} vs {exact}");
    }
}

#[test]
fn birth_death_sensitivity_matches_closed_form() {
    // π = Poisson(k/g), so ∂E[S]/∂k = 1/g and ∂E[S]/∂g = −k/g².
    let mut m = load(fixtures::BIRTH_DEATH);
    m.params = vec![2.0, 0.5];
    let t = TruncationSpec::Box { max: vec![60] }.build(&m.network, &m.params, &m.initial).unwrap();
    let f = m.observable("s").unwrap();
    let dk = sensitivity_direct(&m.network, &m.params, &t, f, 0).unwrap();
    let dg = sensitivity_direct(&m.network, &m.params, &t, f, 1).unwrap();
    assert!((dk - 2.0).abs() < 1e-9, "{dk}");
    assert!((dg + 8.0).abs() < 1e-8, "{dg}");
}

#[test]
fn two_gene_network_rejects_moment_closure() {
    let m = load(fixtures::TWO_GENE);
    let f = m.observable("pAB").unwrap();
    assert!(matches!(
        linear_moment_sensitivity(&m.network, &m.params, &m.initial, f),
        Err(OracleError::NonAffine(_))
    ));
}

#[test]
fn limit_sampler_matches_covariance_structure() {
    let mut m = load(fixtures::ISOMERIZATION);
    m.params = vec![1.0, 1.0];
    let t = trunc(&m);
    let f = m.observable("in_a").unwrap();
    let cov = asymptotic_covariance(&m.network, &m.params, &t, f, 0).unwrap();
    let s = sample_limit_distributions(&cov, 0.5, 200, 20_000, 5).unwrap();
    // E[W₁W₂] = σ₁₂; E[LR limit] = 0.
    let clr: Moments = s.clr.iter().copied().collect();
    assert!((clr.mean() - cov.sigma12_rate).abs() < 4.0 * clr.std_error());
    let lr: Moments = s.lr.iter().copied().collect();
    assert!(lr.mean().abs() < 4.0 * lr.std_error());
    // Var(π(f) W₂(1)) = π(f)² σ₂₂ and Var of the ramp integral is a third of that.
    let int_lr: Moments = s.int_lr.iter().copied().collect();
    assert!((lr.variance() / (0.25 * cov.sigma22_rate) - 1.0).abs() < 0.05);
    assert!((int_lr.variance() / (0.25 * cov.sigma22_rate / 3.0) - 1.0).abs() < 0.05);
}

fn linear_with(c: [f64; 4], total: u32) -> (Model, Truncation) {
    let mut m = load(fixtures::LINEAR);
    m.params = c.to_vec();
    m.initial = State::new(vec![total, 0, 0]);
    let t = Truncation::conservation_surface(&[1, 1, 1], total).unwrap();
    (m, t)
}

fn rate() -> impl Strategy<Value = f64> {
    (-2.0f64..1.3).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_rows_sum_to_zero_and_pi_is_a_distribution(
        c in [rate(), rate(), rate(), rate()],
        total in 1u32..9,
    ) {
        let (m, t) = linear_with(c, total);
        let g = build_generator(&m.network, &m.params, &t).unwrap();
        prop_assert!(g.is_closed());
        for i in 0..g.dim() {
            prop_assert_eq!(g.row_sum(i), 0.0);
            prop_assert!(g.diag(i) <= 0.0);
        }
        let sol = stationary_distribution(&m.network, &m.params, &t).unwrap();
        prop_assert!(sol.pi.iter().all(|&p| p >= 0.0));
        prop_assert!((sol.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let max_rate = c.iter().cloned().fold(0.0, f64::max) * f64::from(total);
        prop_assert!(sol.residuals.stationary <= 1e-12 * (1.0 + max_rate));
    }

    #[test]
    fn poisson_solution_is_centered_and_solves_the_equation(
        c in [rate(), rate(), rate(), rate()],
        total in 1u32..9,
    ) {
        let (m, t) = linear_with(c, total);
        let f = Observable::SpeciesCount(0);
        let sol = solve_poisson(&m.network, &m.params, &t, &f).unwrap();
        let fh = sol.f_hat().unwrap();
        let weighted: f64 = sol.pi.iter().zip(fh).map(|(p, v)| p * v).sum();
        let mag = fh.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        prop_assert!(weighted.abs() <= 1e-10 * mag);
        let g = build_generator(&m.network, &m.params, &t).unwrap();
        let lf = g.apply(fh);
        for i in 0..t.len() {
            let rhs = sol.f_values[i] - sol.pi_f;
            prop_assert!((-lf[i] - rhs).abs() <= 1e-8 * (1.0 + mag * g.diag(i).abs()));
        }
    }

    #[test]
    fn truncated_sensitivity_matches_moment_equations(
        c in [rate(), rate(), rate(), rate()],
        total in 1u32..9,
        k in 0usize..4,
    ) {
        let (m, t) = linear_with(c, total);
        let f = Observable::SpeciesCount(0);
        let direct = sensitivity_direct(&m.network, &m.params, &t, &f, k).unwrap();
        let ma = sensitivity_direct_mass_action(&m.network, &m.params, &t, &f, k).unwrap();
        let lm = linear_moment_sensitivity(&m.network, &m.params, &m.initial, &f).unwrap();
        let exact = lm.gradient[k];
        let tol = 1e-6 * exact.abs().max(1e-6 * lm.value.abs() / c[k]);
        prop_assert!((direct - exact).abs() <= tol, "direct {} vs moments {}", direct, exact);
        prop_assert!((ma - direct).abs() <= tol);
        prop_assert!((sol_mean(&m, &t) - lm.value).abs() <= 1e-9 * (1.0 + lm.value));
    }

    #[test]
    fn two_state_oracle_matches_closed_form(c1 in rate(), c2 in rate()) {
        let mut m = load(fixtures::ISOMERIZATION);
        m.params = vec![c1, c2];
        let t = trunc(&m);
        let f = m.observable("in_a").unwrap();
        let s = c1 + c2;
        // π(A) = c₂/s, ∂π(A)/∂c₁ = −c₂/s²
        let d = sensitivity_direct(&m.network, &m.params, &t, f, 0).unwrap();
        prop_assert!((d + c2 / (s * s)).abs() <= 1e-10 * (c2 / (s * s)).max(1e-300) + 1e-14);
        let fd = sensitivity_fd(&m.network, &m.params, &t, f, 0, 1e-4).unwrap();
        prop_assert!((fd - d).abs() <= 1e-4 * d.abs());
        let cov = asymptotic_covariance(&m.network, &m.params, &t, f, 0).unwrap();
        prop_assert!(cov.is_psd());
        prop_assert!((cov.sigma12_rate - d).abs() <= 1e-12 * (1.0 + d.abs()));
        prop_assert!((cov.sigma22_rate - (c2 / s) / c1).abs() <= 1e-12 * (c2 / s / c1));
    }
}

fn sol_mean(m: &Model, t: &Truncation) -> f64 {
    let fsp = Fsp::new(&m.network, &m.params, t.clone()).unwrap();
    fsp.solve(&Observable::SpeciesCount(0)).unwrap().pi_f
}

#[test]
fn reducible_truncations_are_rejected() {
    let m = load(fixtures::PURE_DEATH);
    let t = trunc(&m);
    let r = check_irreducible(&m.network, &m.params, &t).unwrap();
    assert!(!r.irreducible);
    assert_eq!(r.components.len(), 11);
    assert!(matches!(
        stationary_distribution(&m.network, &m.params, &t),
        Err(OracleError::Reducible { components: 11 })
    ));
}

// SPDX-License-Identifier: Apache-2.0
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use super::{build_generator, OracleError, SparseGenerator, Truncation};
use crate::network::{Observable, ReactionNetwork, State};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrreducibilityReport {
    pub irreducible: bool,
    /// Strongly connected components, each sorted, ordered by first state.
    pub components: Vec<Vec<State>>,
    /// States with no retained outgoing transition.
    pub absorbing: Vec<State>,
}

pub(super) fn irreducibility_of(gen: &SparseGenerator, trunc: &Truncation) -> IrreducibilityReport {
    let n = trunc.len();
    let mut g = DiGraph::<(), ()>::with_capacity(n, gen.nnz());
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    let mut absorbing = Vec::new();
    for i in 0..n {
        let mut any = false;
        for (j, v) in gen.row(i) {
            if v > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
                any = true;
            }
        }
        if !any {
            absorbing.push(trunc.state(i).clone());
        }
    }
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|nd| nd.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort_by_key(|c| c[0]);
    IrreducibilityReport {
        irreducible: comps.len() == 1,
        components: comps
            .into_iter()
            .map(|c| c.into_iter().map(|i| trunc.state(i).clone()).collect())
            .collect(),
        absorbing,
    }
}

/// Strong connectivity of the transition graph restricted to the truncation.
pub fn check_irreducible(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
) -> Result<IrreducibilityReport, OracleError> {
    let gen = build_generator(net, c, trunc)?;
    Ok(irreducibility_of(&gen, trunc))
}

/// Outcome of a Foster–Lyapunov drift scan `LV ≤ −α₁V + α₂𝟙_D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub alpha1: f64,
    /// `max_{x∈D} (LV(x) + α₁V(x))`; zero when `D` is empty.
    pub alpha2: f64,
    /// States where `LV > −α₁V`.
    pub d_set: Vec<State>,
    pub violations: usize,
    pub n_states: usize,
    /// State maximizing `LV + α₁V`.
    pub worst_state: State,
    pub worst_margin: f64,
    /// The worst state has transitions leaving the truncation.
    pub worst_on_boundary: bool,
    /// States of `D` that have transitions leaving the truncation.
    pub boundary_violations: usize,
    /// No transition leaves the truncation, so the chain is finite and the
    /// drift condition holds with `D` equal to the whole space.
    pub finite_space_trivial: bool,
    pub warnings: Vec<String>,
}

/// Drift scan with `V(x) = 1 + ⟨v, x⟩`.
pub fn check_lyapunov(
    net: &ReactionNetwork,
    c: &[f64],
    v: &[f64],
    alpha1: f64,
    trunc: &Truncation,
) -> Result<LyapunovReport, OracleError> {
    if v.len() != net.n_species() || v.iter().any(|&w| !(w > 0.0)) {
        return Err(OracleError::Invalid(
            "Lyapunov weights must be positive, one per species".into(),
        ));
    }
    let lin = |x: &[u32]| 1.0 + v.iter().zip(x).map(|(w, &xi)| w * f64::from(xi)).sum::<f64>();
    check_lyapunov_with(net, c, alpha1, trunc, lin)
}

/// Drift scan with an arbitrary positive `V`.
pub fn check_lyapunov_with(
    net: &ReactionNetwork,
    c: &[f64],
    alpha1: f64,
    trunc: &Truncation,
    v: impl Fn(&[u32]) -> f64,
) -> Result<LyapunovReport, OracleError> {
    if !(alpha1 > 0.0) {
        return Err(OracleError::Invalid(format!("alpha1 must be positive, got {alpha1}")));
    }
    let gen = build_generator(net, c, trunc)?;
    let mut d_set = Vec::new();
    let mut alpha2: f64 = 0.0;
    let mut worst = (0usize, f64::NEG_INFINITY);
    let mut boundary_violations = 0;
    let mut warnings = Vec::new();
    for (i, x) in trunc.states().iter().enumerate() {
        let vx = v(x);
        if !(vx > 0.0) {
            warnings.push(format!("V is not positive at {x}"));
        }
        let mut lv = 0.0;
        for r in net.reactions() {
            let a = r.rate(x, c);
            if a > 0.0 {
                let y = x.shifted(&r.net).expect("positive intensity implies a valid target");
                lv += a * (v(&y) - vx);
            }
        }
        let margin = lv + alpha1 * vx;
        if margin > worst.1 {
            worst = (i, margin);
        }
        if margin > 0.0 {
            d_set.push(x.clone());
            alpha2 = alpha2.max(margin);
            if gen.leak(i) > 0.0 {
                boundary_violations += 1;
            }
        }
    }
    let finite_space_trivial = gen.is_closed();
    let worst_on_boundary = gen.leak(worst.0) > 0.0;
    if worst_on_boundary {
        warnings.push(format!(
            "largest drift margin occurs at boundary state {}; enlarge the truncation",
            trunc.state(worst.0)
        ));
    }
    if boundary_violations > 0 {
        warnings.push(format!(
            "{boundary_violations} boundary states violate the drift inequality"
        ));
    }
    Ok(LyapunovReport {
        alpha1,
        alpha2,
        violations: d_set.len(),
        d_set,
        n_states: trunc.len(),
        worst_state: trunc.state(worst.0).clone(),
        worst_margin: worst.1,
        worst_on_boundary,
        boundary_violations,
        finite_space_trivial,
        warnings,
    })
}

/// Sup ratios over the truncation for the growth and regularity conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionDiagnostics {
    /// `sup_x a_j(x)/√V(x)` per reaction.
    pub intensity_sqrt_v: Vec<f64>,
    /// `sup_x Σ_j |∂a_j/∂c_k(x)| (V(x+ν_j)/V(x) + 1)`.
    pub generator_regularity: f64,
    /// `sup_x |f(x)|/√V(x)`.
    pub observable_sqrt_v: Option<f64>,
    /// `sup_{x,j} |Δ_j f(x)|` over feasible transitions.
    pub increment_bound: Option<f64>,
}

pub fn assumption_diagnostics(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
    v: impl Fn(&[u32]) -> f64,
    f: Option<&Observable>,
    k: usize,
) -> Result<AssumptionDiagnostics, OracleError> {
    net.check_params(c)?;
    if k >= c.len() {
        return Err(OracleError::Invalid(format!("parameter index {k} out of range")));
    }
    if let Some(f) = f {
        f.check(net)?;
    }
    let mut intensity = vec![0.0f64; net.n_reactions()];
    let mut regularity: f64 = 0.0;
    let mut obs: f64 = 0.0;
    let mut incr: f64 = 0.0;
    for x in trunc.states() {
        let vx = v(x);
        let sv = vx.sqrt();
        let mut reg = 0.0;
        for (j, r) in net.reactions().iter().enumerate() {
            let a = r.rate(x, c);
            intensity[j] = intensity[j].max(a / sv);
            let Some(y) = x.shifted(&r.net) else { continue };
            let da = r.rate_derivative(x, c, k).abs();
            if da > 0.0 {
                reg += da * (v(&y) / vx + 1.0);
            }
            if let Some(f) = f {
                if a > 0.0 {
                    incr = incr.max((f.eval(&y)? - f.eval(x)?).abs());
                }
            }
        }
        regularity = regularity.max(reg);
        if let Some(f) = f {
            obs = obs.max(f.eval(x)?.abs() / sv);
        }
    }
    Ok(AssumptionDiagnostics {
        intensity_sqrt_v: intensity,
        generator_regularity: regularity,
        observable_sqrt_v: f.map(|_| obs),
        increment_bound: f.map(|_| incr),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures, parse_model};

    #[test]
    fn irreducibility_cases() {
        let m = parse_model(fixtures::ISOMERIZATION).unwrap();
        let t = Truncation::conservation_surface(&[1, 1], 1).unwrap();
        assert!(check_irreducible(&m.network, &m.params, &t).unwrap().irreducible);

        let m = parse_model(fixtures::LINEAR).unwrap();
        let t = Truncation::conservation_surface(&[1, 1, 1], 10).unwrap();
        let r = check_irreducible(&m.network, &m.params, &t).unwrap();
        assert!(r.irreducible);
        assert_eq!(r.components[0].len(), 66);

        let m = parse_model(fixtures::PURE_DEATH).unwrap();
        let t = Truncation::reachable_box(&m.network, &m.params, &m.initial, &[10]).unwrap();
        let r = check_irreducible(&m.network, &m.params, &t).unwrap();
        assert!(!r.irreducible);
        assert_eq!(r.components.len(), 11);
        assert_eq!(r.absorbing, vec![State::new(vec![0])]);
    }

    #[test]
    fn birth_death_drift_set() {
        let m = parse_model(fixtures::BIRTH_DEATH).unwrap();
        let t = Truncation::reachable_box(&m.network, &m.params, &m.initial, &[40]).unwrap();
        let r = check_lyapunov(&m.network, &m.params, &[1.0], 0.5, &t).unwrap();
        let d: Vec<u32> = r.d_set.iter().map(|s| s[0]).collect();
        assert_eq!(d, vec![0, 1, 2]);
        assert!((r.alpha2 - 1.5).abs() < 1e-15);
        assert!(!r.worst_on_boundary);
        assert!(!r.finite_space_trivial);
    }

    #[test]
    fn closed_linear_network_is_finite_space_trivial() {
        let m = parse_model(fixtures::LINEAR).unwrap();
        let t = Truncation::conservation_surface(&[1, 1, 1], 10).unwrap();
        let r = check_lyapunov(&m.network, &m.params, &[1.0, 1.0, 1.0], 0.1, &t).unwrap();
        assert!(r.finite_space_trivial);
        assert_eq!(r.violations, 66);
    }

    #[test]
    fn product_lyapunov_function_on_two_states() {
        let m = parse_model(fixtures::ISOMERIZATION).unwrap();
        let t = Truncation::conservation_surface(&[1, 1], 1).unwrap();
        let v = |x: &[u32]| 1.0 + f64::from(x[0]) * f64::from(x[1]);
        let r = check_lyapunov_with(&m.network, &m.params, 0.5, &t, v).unwrap();
        assert_eq!(r.violations, 2);
        assert!((r.alpha2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diagnostics_on_birth_death() {
        let m = parse_model(fixtures::BIRTH_DEATH).unwrap();
        let t = Truncation::reachable_box(&m.network, &m.params, &m.initial, &[40]).unwrap();
        let v = |x: &[u32]| 1.0 + f64::from(x[0]);
        let f = Observable::SpeciesCount(0);
        let d = assumption_diagnostics(&m.network, &m.params, &t, v, Some(&f), 1).unwrap();
        assert_eq!(d.increment_bound, Some(1.0));
        assert!(d.intensity_sqrt_v[0] <= 1.0);
        assert!(d.generator_regularity > 0.0);
    }
}

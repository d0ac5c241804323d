// SPDX-License-Identifier: Apache-2.0
//! Exact trajectory simulation (direct method) with streaming sensitivity
//! accumulators.
//!
//! Between jumps the state is constant, so every time integral is updated in
//! closed form over each holding interval. For a hold of length `Δ` in state
//! `x`, entered with weight `Z₀`, and `D(x) = Σ_j ∂a_j/∂c_k(x)`:
//!
//! ```text
//! Z(s)        = Z₀ − D(x)(s − t₀)
//! ∫ Z ds      = Z₀Δ − D(x)Δ²/2
//! ∫ f Z ds    = f(x)·(Z₀Δ − D(x)Δ²/2)
//! ∫ a_j ds    = a_j(x)Δ
//! ```
//!
//! At a firing of reaction `j` the hold integrals are closed first, then
//! `Z_k` jumps by `(∂a_j/∂c_k)/a_j` evaluated at the pre-jump state.
//! All time integrals use compensated summation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, Observable, RateLaw, ReactionNetwork, State};
use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("t_end must be finite and > 0 (got {0})")]
    BadHorizon(f64),
    #[error("checkpoints must be strictly increasing within (0, t_end]; offending value {0}")]
    BadCheckpoint(f64),
    #[error("parameter of interest {0} out of range")]
    BadParameter(usize),
    #[error("centering has {got} entries, expected one per observable ({expected})")]
    BadCentering { got: usize, expected: usize },
    #[error("non-finite intensity for reaction {reaction} at t = {time}")]
    IntensityOverflow { reaction: usize, time: f64 },
    #[error("non-finite accumulator at t = {time}")]
    NonFinite { time: f64 },
    #[error("replayed event at t = {time} fires reaction {reaction} with zero intensity")]
    InvalidEvent { reaction: usize, time: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Snapshot of all path functionals at one time.
///
/// `K` = number of parameters of interest, `O` = number of observables.
/// Observable-by-parameter arrays are laid out row-major as `[o * K + k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityAccumulators {
    /// `Z_k(t)`.
    pub weight: Vec<f64>,
    /// `∫₀ᵗ Z_k ds`.
    pub int_weight: Vec<f64>,
    /// `R_j(t)`.
    pub jumps: Vec<u64>,
    /// `∫₀ᵗ a_j(X(s)) ds`.
    pub int_intensity: Vec<f64>,
    /// `∫₀ᵗ f_o(X(s)) ds`.
    pub int_obs: Vec<f64>,
    /// `∫₀ᵗ f_o Z_k ds`.
    pub int_obs_weight: Vec<f64>,
    /// `∫₀ᵗ (f_o − centering_o) Z_k ds`, present when centering was supplied.
    pub int_centered_obs_weight: Option<Vec<f64>>,
    /// Centering constants used online.
    pub centering: Option<Vec<f64>>,
}

impl SensitivityAccumulators {
    pub fn n_params(&self) -> usize {
        self.weight.len()
    }

    pub fn n_observables(&self) -> usize {
        self.int_obs.len()
    }

    /// Compensated counter `Y_j(t) = R_j(t) − ∫₀ᵗ a_j ds`.
    pub fn compensated_jumps(&self, j: usize) -> f64 {
        self.jumps[j] as f64 - self.int_intensity[j]
    }

    fn all_finite(&self) -> bool {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        finite(&self.weight)
            && finite(&self.int_weight)
            && finite(&self.int_intensity)
            && finite(&self.int_obs)
            && finite(&self.int_obs_weight)
            && self.int_centered_obs_weight.as_deref().is_none_or(finite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub time: f64,
    pub state: State,
    pub acc: SensitivityAccumulators,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub checkpoints: Vec<Checkpoint>,
    pub terminal_time: f64,
    /// Total intensity hit zero; the state was frozen from `absorbed_at` on.
    pub absorbed: bool,
    pub absorbed_at: Option<f64>,
    pub n_events: u64,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("at least the terminal checkpoint")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub reaction: usize,
    pub pre_state: State,
}

/// Everything that defines a trajectory except its random stream.
#[derive(Debug, Clone, Copy)]
pub struct SimulationSpec<'a> {
    pub network: &'a ReactionNetwork,
    pub params: &'a [f64],
    pub initial: &'a State,
    pub t_end: f64,
    /// Snapshot times; `t_end` is appended if absent.
    pub checkpoints: &'a [f64],
    pub observables: &'a [Observable],
    pub params_of_interest: &'a [usize],
    pub centering: Option<&'a [f64]>,
}

impl<'a> SimulationSpec<'a> {
    /// A spec with no observables and no parameters of interest.
    pub fn bare(
        network: &'a ReactionNetwork,
        params: &'a [f64],
        initial: &'a State,
        t_end: f64,
    ) -> Self {
        Self {
            network,
            params,
            initial,
            t_end,
            checkpoints: &[],
            observables: &[],
            params_of_interest: &[],
            centering: None,
        }
    }

    fn validate(&self) -> Result<Vec<f64>, SimError> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(SimError::BadHorizon(self.t_end));
        }
        self.network.check_state(self.initial)?;
        self.network.check_params(self.params)?;
        let mut prev = 0.0;
        for &t in self.checkpoints {
            if !(t > prev && t <= self.t_end) {
                return Err(SimError::BadCheckpoint(t));
            }
            prev = t;
        }
        let mut cps = self.checkpoints.to_vec();
        if cps.last() != Some(&self.t_end) {
            cps.push(self.t_end);
        }
        for &k in self.params_of_interest {
            if k >= self.network.n_parameters() {
                return Err(SimError::BadParameter(k));
            }
        }
        for o in self.observables {
            o.check(self.network)?;
        }
        if let Some(c) = self.centering {
            if c.len() != self.observables.len() {
                return Err(SimError::BadCentering {
                    got: c.len(),
                    expected: self.observables.len(),
                });
            }
        }
        Ok(cps)
    }
}

/// Per-state quantities plus running sums for one trajectory.
struct PathIntegrator<'a> {
    spec: SimulationSpec<'a>,
    n_params: usize,
    // (reaction, slot in params_of_interest, parameter index), sorted by reaction
    pairs: Vec<(usize, usize, usize)>,
    pair_start: Vec<usize>,
    // reactions whose intensity reads a species changed by reaction j
    deps: Vec<Vec<usize>>,
    // state-dependent cache
    rates: Vec<f64>,
    total: f64,
    derivs: Vec<f64>,
    drift: Vec<f64>,
    f: Vec<f64>,
    // running sums
    z: Vec<Compensated>,
    int_z: Vec<Compensated>,
    jumps: Vec<u64>,
    int_a: Vec<Compensated>,
    int_f: Vec<Compensated>,
    int_fz: Vec<Compensated>,
    int_fcz: Option<Vec<Compensated>>,
}

impl<'a> PathIntegrator<'a> {
    fn new(spec: SimulationSpec<'a>) -> Self {
        let net = spec.network;
        let m = net.n_reactions();
        let k = spec.params_of_interest.len();
        let o = spec.observables.len();
        let mut pairs = Vec::new();
        let mut pair_start = Vec::with_capacity(m + 1);
        for (j, r) in net.reactions().iter().enumerate() {
            pair_start.push(pairs.len());
            let used = r.rate_law.parameters();
            for (slot, &p) in spec.params_of_interest.iter().enumerate() {
                if used.contains(&p) {
                    pairs.push((j, slot, p));
                }
            }
        }
        pair_start.push(pairs.len());
        let n_pairs = pairs.len();
        let reads: Vec<Vec<usize>> = net
            .reactions()
            .iter()
            .map(|r| {
                let mut v: Vec<usize> = (0..r.reactants.len()).filter(|&i| r.reactants[i] > 0).collect();
                match r.rate_law {
                    RateLaw::Hill { species, .. } | RateLaw::Repression { species, .. } => v.push(species),
                    RateLaw::MassAction { .. } => {}
                }
                v
            })
            .collect();
        let deps = net
            .reactions()
            .iter()
            .map(|fired| {
                (0..m)
                    .filter(|&r| reads[r].iter().any(|&i| fired.net[i] != 0))
                    .collect()
            })
            .collect();
        Self {
            spec,
            n_params: k,
            pairs,
            pair_start,
            deps,
            rates: vec![0.0; m],
            total: 0.0,
            derivs: vec![0.0; n_pairs],
            drift: vec![0.0; k],
            f: vec![0.0; o],
            z: vec![Compensated::default(); k],
            int_z: vec![Compensated::default(); k],
            jumps: vec![0; m],
            int_a: vec![Compensated::default(); m],
            int_f: vec![Compensated::default(); o],
            int_fz: vec![Compensated::default(); o * k],
            int_fcz: spec.centering.map(|_| vec![Compensated::default(); o * k]),
        }
    }

    /// Refreshes the state-dependent cache. After a firing of `fired` only
    /// the reactions whose intensity reads a changed species are recomputed;
    /// sums are always rebuilt in index order, so the cache is bit-identical
    /// to a full evaluation.
    fn evaluate(&mut self, x: &[u32], time: f64, fired: Option<usize>) -> Result<(), SimError> {
        let c = self.spec.params;
        let reactions = self.spec.network.reactions();
        let all: Vec<usize>;
        let targets: &[usize] = match fired {
            Some(j) => &self.deps[j],
            None => {
                all = (0..reactions.len()).collect();
                &all
            }
        };
        for &j in targets {
            let r = &reactions[j];
            let a = r.rate(x, c);
            if !a.is_finite() {
                return Err(SimError::IntensityOverflow { reaction: j, time });
            }
            self.rates[j] = a;
            for i in self.pair_start[j]..self.pair_start[j + 1] {
                self.derivs[i] = r.rate_derivative(x, c, self.pairs[i].2);
            }
        }
        self.total = self.rates.iter().sum();
        self.drift.iter_mut().for_each(|d| *d = 0.0);
        for (i, &(_, slot, _)) in self.pairs.iter().enumerate() {
            self.drift[slot] += self.derivs[i];
        }
        for (fo, obs) in self.f.iter_mut().zip(self.spec.observables) {
            *fo = obs.eval(x)?;
        }
        Ok(())
    }

    #[inline]
    fn hold(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let k = self.n_params;
        for (ia, &a) in self.int_a.iter_mut().zip(&self.rates) {
            ia.add(a * dt);
        }
        for (i, fo) in self.f.iter().enumerate() {
            self.int_f[i].add(fo * dt);
        }
        let half_dt2 = 0.5 * dt * dt;
        for slot in 0..k {
            let z0 = self.z[slot].value();
            let d = self.drift[slot];
            let seg = z0 * dt - d * half_dt2;
            self.int_z[slot].add(seg);
            for (o, fo) in self.f.iter().enumerate() {
                self.int_fz[o * k + slot].add(fo * seg);
            }
            if let (Some(cz), Some(center)) = (self.int_fcz.as_mut(), self.spec.centering) {
                for (o, fo) in self.f.iter().enumerate() {
                    cz[o * k + slot].add((fo - center[o]) * seg);
                }
            }
            if d != 0.0 {
                self.z[slot].add(-d * dt);
            }
        }
    }

    #[inline]
    fn jump(&mut self, j: usize) {
        self.jumps[j] += 1;
        let a = self.rates[j];
        for i in self.pair_start[j]..self.pair_start[j + 1] {
            let slot = self.pairs[i].1;
            let d = self.derivs[i];
            if d != 0.0 {
                self.z[slot].add(d / a);
            }
        }
    }

    fn snapshot(&self) -> SensitivityAccumulators {
        let vals = |v: &[Compensated]| v.iter().map(Compensated::value).collect::<Vec<_>>();
        SensitivityAccumulators {
            weight: vals(&self.z),
            int_weight: vals(&self.int_z),
            jumps: self.jumps.clone(),
            int_intensity: vals(&self.int_a),
            int_obs: vals(&self.int_f),
            int_obs_weight: vals(&self.int_fz),
            int_centered_obs_weight: self.int_fcz.as_deref().map(vals),
            centering: self.spec.centering.map(<[f64]>::to_vec),
        }
    }
}

/// Supplies the next firing given the current intensities.
trait EventSource {
    /// `Ok(None)` means no firing before `t_end`.
    fn next(
        &mut self,
        t: f64,
        t_end: f64,
        rates: &[f64],
        total: f64,
    ) -> Result<Option<(f64, usize)>, SimError>;
}

struct DirectMethod<R: Rng> {
    rng: R,
}

impl<R: Rng> EventSource for DirectMethod<R> {
    #[inline]
    fn next(
        &mut self,
        t: f64,
        t_end: f64,
        rates: &[f64],
        total: f64,
    ) -> Result<Option<(f64, usize)>, SimError> {
        if total <= 0.0 {
            return Ok(None);
        }
        let u: f64 = self.rng.random();
        let t_next = t - (1.0 - u).ln() / total;
        if t_next > t_end {
            return Ok(None);
        }
        let target = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (j, &a) in rates.iter().enumerate() {
            if a > 0.0 {
                acc += a;
                chosen = Some(j);
                if target < acc {
                    break;
                }
            }
        }
        Ok(chosen.map(|j| (t_next, j)))
    }
}

struct Replay<'e> {
    events: std::slice::Iter<'e, Event>,
}

impl EventSource for Replay<'_> {
    fn next(
        &mut self,
        t: f64,
        t_end: f64,
        rates: &[f64],
        total: f64,
    ) -> Result<Option<(f64, usize)>, SimError> {
        match self.events.next() {
            Some(e) if e.time <= t_end => {
                // an event from an absorbing state, out of order, or of a
                // reaction that cannot fire was not produced by this spec
                if total <= 0.0 || e.time < t || rates.get(e.reaction).copied().unwrap_or(0.0) <= 0.0 {
                    return Err(SimError::InvalidEvent {
                        reaction: e.reaction,
                        time: e.time,
                    });
                }
                Ok(Some((e.time, e.reaction)))
            }
            _ => Ok(None),
        }
    }
}

fn drive<S: EventSource>(
    spec: SimulationSpec<'_>,
    source: &mut S,
    mut log: Option<&mut Vec<Event>>,
) -> Result<TrajectoryRecord, SimError> {
    let cps = spec.validate()?;
    let mut integ = PathIntegrator::new(spec);
    let mut x = spec.initial.clone();
    let mut t = 0.0;
    let mut next_cp = 0;
    let mut checkpoints = Vec::with_capacity(cps.len());
    let mut n_events = 0u64;
    let mut absorbed_at = None;
    let mut fired = None;
    loop {
        integ.evaluate(&x, t, fired)?;
        let next = source.next(t, spec.t_end, &integ.rates, integ.total)?;
        if next.is_none() && integ.total <= 0.0 {
            absorbed_at = Some(t);
        }
        let t_stop = next.map_or(spec.t_end, |(tn, _)| tn);
        while next_cp < cps.len() && cps[next_cp] <= t_stop {
            let tc = cps[next_cp];
            integ.hold(tc - t);
            t = tc;
            let acc = integ.snapshot();
            if !acc.all_finite() {
                return Err(SimError::NonFinite { time: t });
            }
            checkpoints.push(Checkpoint {
                time: tc,
                state: x.clone(),
                acc,
            });
            next_cp += 1;
        }
        let Some((t_next, j)) = next else { break };
        integ.hold(t_next - t);
        t = t_next;
        if let Some(log) = log.as_deref_mut() {
            log.push(Event {
                time: t_next,
                reaction: j,
                pre_state: x.clone(),
            });
        }
        integ.jump(j);
        fired = Some(j);
        let r = &spec.network.reactions()[j];
        for (xi, &d) in x.0.iter_mut().zip(&r.net) {
            *xi = (i64::from(*xi) + d) as u32;
        }
        n_events += 1;
    }
    Ok(TrajectoryRecord {
        checkpoints,
        terminal_time: spec.t_end,
        absorbed: absorbed_at.is_some(),
        absorbed_at,
        n_events,
    })
}

/// Simulates one exact trajectory on `[0, t_end]`.
pub fn simulate(spec: SimulationSpec<'_>, stream: RngStream) -> Result<TrajectoryRecord, SimError> {
    let mut source = DirectMethod { rng: stream.rng() };
    drive(spec, &mut source, None)
}

/// Simulates and also returns the raw firing sequence.
pub fn simulate_with_events(
    spec: SimulationSpec<'_>,
    stream: RngStream,
) -> Result<(TrajectoryRecord, Vec<Event>), SimError> {
    let mut source = DirectMethod { rng: stream.rng() };
    let mut events = Vec::new();
    let rec = drive(spec, &mut source, Some(&mut events))?;
    Ok((rec, events))
}

/// Raw `(time, reaction, pre-jump state)` sequence on `[0, t_end]`.
pub fn event_stream(
    network: &ReactionNetwork,
    params: &[f64],
    initial: &State,
    t_end: f64,
    stream: RngStream,
) -> Result<Vec<Event>, SimError> {
    let spec = SimulationSpec::bare(network, params, initial, t_end);
    Ok(simulate_with_events(spec, stream)?.1)
}

/// Re-integrates the accumulators along a recorded firing sequence.
pub fn replay(spec: SimulationSpec<'_>, events: &[Event]) -> Result<TrajectoryRecord, SimError> {
    let mut source = Replay {
        events: events.iter(),
    };
    drive(spec, &mut source, None)
}

/// Weight `Σ_{j uses k} (R_j − ∫a_j)/c_k` for a parameter that enters only
/// mass-action laws; `None` otherwise.
pub fn mass_action_weight(
    network: &ReactionNetwork,
    params: &[f64],
    k: usize,
    acc: &SensitivityAccumulators,
) -> Option<f64> {
    let users = network.reactions_using(k);
    if users
        .iter()
        .any(|&j| !network.reactions()[j].rate_law.is_mass_action())
    {
        return None;
    }
    Some(
        users
            .iter()
            .map(|&j| acc.compensated_jumps(j))
            .sum::<f64>()
            / params[k],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures, parse_model};

    #[test]
    fn absorbing_start_freezes() {
        let m = parse_model(fixtures::PURE_DEATH).unwrap();
        let x0 = State::new(vec![0]);
        let obs = [Observable::SpeciesCount(0)];
        let spec = SimulationSpec {
            network: &m.network,
            params: &m.params,
            initial: &x0,
            t_end: 5.0,
            checkpoints: &[1.0, 2.0],
            observables: &obs,
            params_of_interest: &[0],
            centering: None,
        };
        let rec = simulate(spec, RngStream::new(1, 0)).unwrap();
        assert!(rec.absorbed);
        assert_eq!(rec.absorbed_at, Some(0.0));
        assert_eq!(rec.checkpoints.len(), 3);
        for cp in &rec.checkpoints {
            assert_eq!(cp.acc.weight, vec![0.0]);
            assert_eq!(cp.acc.jumps, vec![0]);
            assert_eq!(cp.state, x0);
        }
    }

    #[test]
    fn weight_before_first_jump_is_linear_drift() {
        let m = parse_model(fixtures::ISOMERIZATION).unwrap();
        let c = [1.0, 1.0];
        let spec = SimulationSpec {
            network: &m.network,
            params: &c,
            initial: &m.initial,
            t_end: 50.0,
            checkpoints: &[],
            observables: &[],
            params_of_interest: &[0],
            centering: None,
        };
        let (_, events) = simulate_with_events(spec, RngStream::new(3, 0)).unwrap();
        let first = events[0].time;
        assert_eq!(events[0].reaction, 0);
        let cps = [0.5 * first, first + 1e-12];
        let spec = SimulationSpec {
            checkpoints: &cps,
            ..spec
        };
        let rec = replay(spec, &events).unwrap();
        let z_before = rec.checkpoints[0].acc.weight[0];
        assert!((z_before + 0.5 * first).abs() < 1e-14);
        // jump of 1/c1 = 1, drift of 1e-12 afterwards (state b has no c1 dependence)
        let z_after = rec.checkpoints[1].acc.weight[0];
        assert!((z_after - (1.0 - first)).abs() < 1e-12, "{z_after}");
    }

    #[test]
    fn validation() {
        let m = parse_model(fixtures::LINEAR).unwrap();
        let mut spec = SimulationSpec::bare(&m.network, &m.params, &m.initial, 0.0);
        assert!(matches!(
            simulate(spec, RngStream::new(0, 0)),
            Err(SimError::BadHorizon(_))
        ));
        spec.t_end = 10.0;
        spec.checkpoints = &[5.0, 3.0];
        assert!(matches!(
            simulate(spec, RngStream::new(0, 0)),
            Err(SimError::BadCheckpoint(3.0))
        ));
        spec.checkpoints = &[11.0];
        assert!(simulate(spec, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut c = Compensated::default();
        let mut naive = 0.0;
        c.add(1e16);
        naive += 1e16;
        for _ in 0..1000 {
            c.add(1.0);
            naive += 1.0;
        }
        c.add(-1e16);
        naive -= 1e16;
        assert_eq!(c.value(), 1000.0);
        assert_ne!(naive, 1000.0);
    }
}

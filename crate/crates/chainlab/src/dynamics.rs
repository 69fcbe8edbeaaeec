//! Averaging dynamics x(t+1) = A(t) x(t) and contraction diagnostics.
//!
//! A weighted spread V_u(x) = sum_i u_i (x_i - u'x)^2 with u an
//! absolute probability vector is the natural comparison function for
//! these dynamics: along the chain's own probability sequence it never
//! increases, and over epochs in which every cut accumulates enough
//! flow it contracts by a factor bounded away from 1 in terms of the
//! feedback coefficient, the sequence floor, and the epoch flow level.
//! [`contraction_check`] measures realized epoch ratios against that
//! factor.

use crate::absolute_probability::ApsTrace;
use crate::chain_core::{block, cut_flow, ChainWindow, Stochasticity, SubsetCut, TOL_STOCH};
use crate::error::{Error, Result};
use crate::format::format_f64;
use crate::random_chains::CounterRng;
use crate::reciprocity::cut_mask_set;

/// Key prefix for trial initial states, disjoint from the generator
/// stream purposes.
const PURPOSE_TRIAL: u64 = 0xD7;

/// State history x(t0), ..., x(t0 + steps).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Time of the first recorded state.
    pub t0: usize,
    /// States in time order, one per step, initial state included.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    /// State at time t.
    pub fn value_at(&self, t: usize) -> Result<&[f64]> {
        let last = self.t0 + self.states.len() - 1;
        if t < self.t0 || t > last {
            return Err(Error::TimeRange(format!(
                "t = {t} outside the trajectory range [{}, {last}]",
                self.t0
            )));
        }
        Ok(&self.states[t - self.t0])
    }

    /// Tab-separated rows `t x_1 ... x_n`.
    pub fn to_tsv(&self) -> String {
        let n = self.states[0].len();
        let mut out = String::from("# t");
        for i in 1..=n {
            out.push_str(&format!("\tx_{i}"));
        }
        out.push('\n');
        for (k, x) in self.states.iter().enumerate() {
            out.push_str(&format!("{}", self.t0 + k));
            for v in x {
                out.push_str(&format!("\t{}", format_f64(*v)));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the averaging dynamics for the given number of steps from the
/// chain's start time.
///
/// Stochastic steps cannot move a state outside the envelope
/// [min x, max x]; a violation beyond rounding noise means the chain or
/// the arithmetic is corrupt and is reported as an internal error.
pub fn simulate(chain: &ChainWindow, x0: &[f64], steps: usize) -> Result<Trajectory> {
    let n = chain.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has length {}, chain dimension is {n}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("initial state has a non-finite entry".into()));
    }
    let t0 = chain.t0();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    for k in 0..steps {
        let m = chain.matrix_at(t0 + k)?;
        let next = m.apply(&x)?;
        if m.classify(TOL_STOCH) == Stochasticity::Stochastic {
            let (lo, hi) = envelope(&x);
            let slack = 1e-9 * (1.0 + hi.abs().max(lo.abs()));
            let (nlo, nhi) = envelope(&next);
            if nlo < lo - slack || nhi > hi + slack {
                return Err(Error::Internal(format!(
                    "stochastic step at t = {} moved the envelope from [{lo}, {hi}] to [{nlo}, {nhi}]",
                    t0 + k
                )));
            }
        }
        x = next;
        states.push(x.clone());
    }
    Ok(Trajectory { t0, states })
}

fn envelope(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Outcome of the random-start agreement probe for one agent pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutualErgodicityReport {
    /// Largest |x_i(T) - x_j(T)| seen over the trials.
    pub max_gap: f64,
    /// Whether every trial ended with the pair within tol.
    pub mutually_ergodic: bool,
}

/// Runs the dynamics from random initial states in [0, 1]^n and checks
/// whether agents i and j always end the horizon within tol of each
/// other.
pub fn mutual_ergodicity(
    chain: &ChainWindow,
    i: usize,
    j: usize,
    trials: usize,
    horizon: usize,
    tol: f64,
    seed: u64,
) -> Result<MutualErgodicityReport> {
    let n = chain.n();
    if i >= n || j >= n {
        return Err(Error::Dimension(format!(
            "agents ({i}, {j}) out of range for n = {n}"
        )));
    }
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol = {tol} must be positive")));
    }
    let mut max_gap = 0.0f64;
    for trial in 0..trials {
        let mut rng = CounterRng::keyed(seed, &[PURPOSE_TRIAL, trial as u64]);
        let x0: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let traj = simulate(chain, &x0, horizon)?;
        let last = traj.states.last().expect("trajectory is nonempty");
        max_gap = max_gap.max((last[i] - last[j]).abs());
    }
    Ok(MutualErgodicityReport {
        max_gap,
        mutually_ergodic: max_gap <= tol,
    })
}

/// Weighted spread V_u(x) = sum_i u_i (x_i - u'x)^2.
///
/// The weights must be nonnegative and sum to 1 within 1e-9; zero
/// entries are allowed and simply drop their coordinate.
pub fn quadratic_comparison(x: &[f64], u: &[f64]) -> Result<f64> {
    if x.len() != u.len() {
        return Err(Error::Dimension(format!(
            "state length {} does not match weight length {}",
            x.len(),
            u.len()
        )));
    }
    let mut sum = 0.0;
    for &w in u {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Domain(format!(
                "weight {w} is negative or not finite"
            )));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "weights sum to {sum}, expected 1 within 1e-9"
        )));
    }
    let mean: f64 = x.iter().zip(u).map(|(xi, ui)| ui * xi).sum();
    Ok(x.iter()
        .zip(u)
        .map(|(xi, ui)| ui * (xi - mean) * (xi - mean))
        .sum())
}

/// Which per-step quantity accumulates toward an epoch boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowMode {
    /// Weight the complement's rows place on the set, 1' A_{comp,S} 1.
    #[default]
    CrossFlow,
    /// Row deficit of the principal block, |S| - 1' A_{S,S} 1. Equals
    /// the outflow of the set for stochastic steps and additionally
    /// counts substochastic leakage.
    PrincipalBlock,
}

/// Greedy epoch boundaries: starting from t0, the next epoch closes at
/// the first step after which every cut, in both orientations, has
/// accumulated at least delta of the selected flow quantity since the
/// previous boundary.
///
/// The returned times start with t0 and are strictly increasing. Cuts
/// are scanned exhaustively through n = 16 and sampled beyond, matching
/// the reciprocity scan.
pub fn epoch_times(
    chain: &ChainWindow,
    delta: f64,
    horizon: usize,
    mode: FlowMode,
) -> Result<Vec<usize>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "delta = {delta} must be positive and finite"
        )));
    }
    let n = chain.n();
    if n < 2 {
        return Err(Error::Domain("epochs need at least two agents".into()));
    }
    let (masks, _) = cut_mask_set(n);
    let cuts: Vec<SubsetCut> = masks
        .into_iter()
        .map(|m| SubsetCut::new(n, m))
        .collect::<Result<_>>()?;
    let t0 = chain.t0();
    let mut epochs = vec![t0];
    let mut acc = vec![0.0f64; 2 * cuts.len()];
    for t in t0..t0 + horizon {
        let m = chain.matrix_at(t)?;
        for (k, cut) in cuts.iter().enumerate() {
            let (q_s, q_sbar) = match mode {
                FlowMode::CrossFlow => {
                    let f = cut_flow(&m, cut)?;
                    (f.into_sbar, f.into_s)
                }
                FlowMode::PrincipalBlock => {
                    let b = block(&m, cut)?;
                    (
                        cut.members().len() as f64 - b.on_s.total(),
                        cut.complement_members().len() as f64 - b.on_sbar.total(),
                    )
                }
            };
            acc[2 * k] += q_s;
            acc[2 * k + 1] += q_sbar;
        }
        if acc.iter().all(|&a| a >= delta) {
            epochs.push(t + 1);
            acc.fill(0.0);
        }
    }
    Ok(epochs)
}

/// Realized epoch contraction ratios measured against the guaranteed
/// factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    /// Guaranteed factor 1 - eps delta (1-delta)^2 gamma p* / (n-1)^2.
    pub bound: f64,
    /// Largest realized ratio V(t_{k+1}) / V(t_k).
    pub max_ratio: f64,
    /// Number of epoch ratios evaluated.
    pub checked: usize,
    /// Whether every evaluated ratio stayed within the bound.
    pub holds: bool,
}

/// Runs random-start trials and compares the weighted spread at
/// consecutive epoch times, weighting each time with the chain's own
/// probability vector from the trace.
///
/// Epochs where the spread has already collapsed below 1e-18 are
/// skipped, since their ratios are pure rounding noise.
#[allow(clippy::too_many_arguments)]
pub fn contraction_check(
    chain: &ChainWindow,
    aps: &ApsTrace,
    epochs: &[usize],
    gamma: f64,
    p_star: f64,
    delta: f64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let n = chain.n();
    if n < 2 {
        return Err(Error::Domain("contraction needs at least two agents".into()));
    }
    if epochs.len() < 2 {
        return Err(Error::Domain(
            "contraction needs at least two epoch times".into(),
        ));
    }
    if !epochs.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain("epoch times must be strictly increasing".into()));
    }
    for (name, v) in [
        ("gamma", gamma),
        ("p_star", p_star),
        ("delta", delta),
        ("eps", eps),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!("{name} = {v} must lie in (0, 1]")));
        }
    }
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    let first = epochs[0];
    let last = *epochs.last().expect("checked nonempty");
    if first < chain.t0() {
        return Err(Error::TimeRange(format!(
            "first epoch {first} precedes the chain start {}",
            chain.t0()
        )));
    }
    aps.value_at(first)?;
    aps.value_at(last)?;

    let bound =
        1.0 - eps * delta * (1.0 - delta) * (1.0 - delta) * gamma * p_star / ((n - 1).pow(2) as f64);
    let mut max_ratio = 0.0f64;
    let mut checked = 0usize;
    for trial in 0..trials {
        let mut rng = CounterRng::keyed(seed, &[PURPOSE_TRIAL, trial as u64]);
        let mut x: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        // Advance to the first epoch, then walk epoch to epoch.
        for t in chain.t0()..first {
            x = chain.matrix_at(t)?.apply(&x)?;
        }
        let mut v_prev = quadratic_comparison(&x, aps.value_at(first)?)?;
        for w in epochs.windows(2) {
            for t in w[0]..w[1] {
                x = chain.matrix_at(t)?.apply(&x)?;
            }
            let v_next = quadratic_comparison(&x, aps.value_at(w[1])?)?;
            if v_prev > 1e-18 {
                max_ratio = max_ratio.max(v_next / v_prev);
                checked += 1;
            }
            v_prev = v_next;
        }
    }
    Ok(ContractionReport {
        bound,
        max_ratio,
        checked,
        holds: max_ratio <= bound + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absolute_probability::aps_backward;
    use crate::chain_core::{Extension, Matrix};
    use crate::random_chains::{generate, Family, GeneratorSpec};
    use proptest::prelude::*;

    fn mixing_chain(count: usize) -> ChainWindow {
        let a = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        ChainWindow::new(0, vec![a; count], Extension::RepeatLast).unwrap()
    }

    #[test]
    fn simulate_matches_a_hand_step() {
        let a = Matrix::from_rows(&[vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
        let chain = ChainWindow::new(0, vec![a], Extension::RepeatLast).unwrap();
        let traj = simulate(&chain, &[1.0, 0.0], 2).unwrap();
        assert_eq!(traj.value_at(1).unwrap(), &[0.75, 0.5]);
        let x2 = traj.value_at(2).unwrap();
        assert!((x2[0] - (0.75 * 0.75 + 0.25 * 0.5)).abs() < 1e-15);
        assert!((x2[1] - (0.5 * 0.75 + 0.5 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn trajectory_tsv_has_header_and_rows() {
        let traj = simulate(&mixing_chain(1), &[1.0, 0.0], 3).unwrap();
        let tsv = traj.to_tsv();
        assert!(tsv.starts_with("# t\tx_1\tx_2\n"));
        assert_eq!(tsv.lines().count(), 5);
        assert!(traj.value_at(4).is_err());
    }

    #[test]
    fn connected_chain_reaches_agreement() {
        let spec = GeneratorSpec::new(
            Family::GossipPairs {
                pair_prob: 0.9,
                mixing: 0.5,
            },
            4,
            11,
        )
        .unwrap();
        let chain = generate(&spec, 400).unwrap();
        let rep = mutual_ergodicity(&chain, 0, 3, 8, 400, 1e-6, 5).unwrap();
        assert!(rep.mutually_ergodic, "gap {}", rep.max_gap);
    }

    #[test]
    fn decoupled_blocks_disagree() {
        let spec = GeneratorSpec::new(
            Family::BlockDiagonalMixers {
                blocks: 2,
                pair_prob: 1.0,
                mixing: 0.5,
            },
            4,
            23,
        )
        .unwrap();
        let chain = generate(&spec, 300).unwrap();
        let rep = mutual_ergodicity(&chain, 0, 2, 8, 300, 1e-6, 5).unwrap();
        assert!(!rep.mutually_ergodic);
        assert!(rep.max_gap > 0.05);
    }

    #[test]
    fn quadratic_comparison_hand_value() {
        // u = (1/4, 3/4), x = (2, -2): mean = -1, V = 1/4 * 9 + 3/4 * 1.
        let v = quadratic_comparison(&[2.0, -2.0], &[0.25, 0.75]).unwrap();
        assert!((v - 3.0).abs() < 1e-15);
        assert!(quadratic_comparison(&[1.0], &[0.5, 0.5]).is_err());
        assert!(quadratic_comparison(&[1.0, 2.0], &[0.7, 0.7]).is_err());
        assert!(quadratic_comparison(&[1.0, 2.0], &[-0.1, 1.1]).is_err());
    }

    proptest! {
        // With uniform weights and a doubly stochastic step the spread
        // cannot grow.
        #[test]
        fn uniform_spread_is_monotone_under_symmetric_gossip(
            x in prop::collection::vec(-10.0f64..10.0, 3),
            m in 0.05f64..0.95,
        ) {
            let a = Matrix::from_rows(&[
                vec![1.0 - m, m, 0.0],
                vec![m, 1.0 - m, 0.0],
                vec![0.0, 0.0, 1.0],
            ]).unwrap();
            let u = vec![1.0 / 3.0; 3];
            let before = quadratic_comparison(&x, &u).unwrap();
            let after = quadratic_comparison(&a.apply(&x).unwrap(), &u).unwrap();
            prop_assert!(after <= before + 1e-12 * (1.0 + before));
        }
    }

    #[test]
    fn epochs_close_when_every_cut_accumulates_delta() {
        // Each step moves 0.1 across the only cut in both orientations,
        // so delta = 0.25 closes an epoch every 3 steps.
        let chain = mixing_chain(10);
        let epochs = epoch_times(&chain, 0.25, 10, FlowMode::CrossFlow).unwrap();
        assert_eq!(epochs, vec![0, 3, 6, 9]);
        let epochs = epoch_times(&chain, 0.25, 10, FlowMode::PrincipalBlock).unwrap();
        assert_eq!(epochs, vec![0, 3, 6, 9]);
    }

    #[test]
    fn one_directional_flow_never_closes_an_epoch() {
        // All cross flow runs one way; the reverse orientation stays at
        // zero, so no epoch ever completes under the cross-flow rule.
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.25, 0.75]]).unwrap();
        let chain = ChainWindow::new(0, vec![a; 20], Extension::RepeatLast).unwrap();
        let epochs = epoch_times(&chain, 0.1, 20, FlowMode::CrossFlow).unwrap();
        assert_eq!(epochs, vec![0]);
    }

    #[test]
    fn two_state_contraction_ratio_is_exact() {
        // Along (1, -1) the mixing step scales by 0.8, so the uniform
        // spread contracts by exactly 0.64 per step.
        let chain = mixing_chain(30);
        let aps = aps_backward(&chain, 0, 30, &[0.5, 0.5]).unwrap();
        let mut x = vec![1.0, -1.0];
        for t in 0..5 {
            let v0 = quadratic_comparison(&x, aps.value_at(t).unwrap()).unwrap();
            x = chain.matrix_at(t).unwrap().apply(&x).unwrap();
            let v1 = quadratic_comparison(&x, aps.value_at(t + 1).unwrap()).unwrap();
            assert!((v1 / v0 - 0.64).abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_check_respects_the_guaranteed_factor() {
        let chain = mixing_chain(40);
        let aps = aps_backward(&chain, 0, 40, &[0.5, 0.5]).unwrap();
        let epochs = epoch_times(&chain, 0.1, 40, FlowMode::CrossFlow).unwrap();
        let rep =
            contraction_check(&chain, &aps, &epochs, 0.9, 0.5, 0.1, 1.0, 6, 42).unwrap();
        assert!(rep.checked > 0);
        assert!(rep.holds, "max ratio {} vs bound {}", rep.max_ratio, rep.bound);
        // The two-state mixing chain contracts per step by 0.64, far
        // below the guaranteed factor.
        assert!(rep.max_ratio < rep.bound);
    }

    #[test]
    fn contraction_check_rejects_bad_inputs() {
        let chain = mixing_chain(10);
        let aps = aps_backward(&chain, 0, 10, &[0.5, 0.5]).unwrap();
        let e = contraction_check(&chain, &aps, &[0], 0.9, 0.5, 0.1, 1.0, 2, 1);
        assert!(matches!(e, Err(Error::Domain(_))));
        let e = contraction_check(&chain, &aps, &[0, 5], 0.0, 0.5, 0.1, 1.0, 2, 1);
        assert!(matches!(e, Err(Error::Domain(_))));
        let e = contraction_check(&chain, &aps, &[0, 20], 0.9, 0.5, 0.1, 1.0, 2, 1);
        assert!(matches!(e, Err(Error::TimeRange(_))));
    }

    #[test]
    fn simulate_rejects_bad_initial_states() {
        let chain = mixing_chain(5);
        assert!(simulate(&chain, &[1.0], 3).is_err());
        assert!(simulate(&chain, &[f64::NAN, 0.0], 3).is_err());
    }
}

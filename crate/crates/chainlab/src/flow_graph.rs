//! Infinite flow graphs, truncated.
//!
//! The infinite flow graph of a chain has an undirected edge {i, j}
//! exactly when the accumulated cross weight sum_t (a_ij(t) + a_ji(t))
//! diverges. On a finite horizon divergence is approximated by a
//! threshold on the accumulated weight; the default threshold of 1
//! mirrors the constructive arguments in which classes merge once at
//! least unit cross flow has accumulated. A per-edge growth slope over
//! the second half of the horizon is reported as a divergence heuristic.
//!
//! Connected components of this graph predict the ergodic classes of a
//! strongly aperiodic, approximately reciprocal chain: rows of long
//! backward products group by component. [`ergodic_classes`] extracts
//! the row grouping directly from products and cross-checks it against
//! the flow-graph components.
//!
//! Jets refine cuts: a jet assigns to each time a subset J(t) of a base
//! set, and the interaction of two disjoint jets accumulates the weight
//! crossing between them with the one-step time offset a_ij(t) for
//! i in J(t+1), j in the other jet at t.

use crate::chain_core::{backward_product, ChainWindow, Matrix};
use crate::error::{Error, Result};
use crate::format::format_f64;

/// Default accumulation threshold for edge presence.
pub const DEFAULT_FLOW_THRESHOLD: f64 = 1.0;

/// Accumulated symmetric cross weights over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    n: usize,
    /// Steps accumulated, starting at the chain's t0.
    pub horizon: usize,
    /// Presence threshold the verdicts were taken at.
    pub threshold: f64,
    /// Accumulated weight per unordered pair, indexed i * n + j, i < j.
    weights: Vec<f64>,
    /// Accumulation rate per step over the second half of the horizon.
    slopes: Vec<f64>,
}

impl FlowGraph {
    pub(crate) fn from_parts(
        n: usize,
        horizon: usize,
        threshold: f64,
        weights: Vec<f64>,
        slopes: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(weights.len(), n * n);
        debug_assert_eq!(slopes.len(), n * n);
        Self {
            n,
            horizon,
            threshold,
            weights,
            slopes,
        }
    }

    /// Dimension n.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Accumulated weight of the unordered pair {i, j}.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.weights[a * self.n + b]
    }

    /// Second-half growth slope of the pair {i, j}.
    pub fn slope(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.slopes[a * self.n + b]
    }

    /// Whether the accumulated weight reaches the threshold.
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weight(i, j) >= self.threshold
    }

    /// Tab-separated rows `i j weight verdict` for every unordered
    /// pair, 0-based, ascending.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# i\tj\tweight\tverdict\n");
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push_str(&format!(
                    "{i}\t{j}\t{}\t{}\n",
                    format_f64(self.weight(i, j)),
                    if self.has_edge(i, j) { "present" } else { "absent" }
                ));
            }
        }
        out
    }
}

/// Accumulates a_ij(t) + a_ji(t) for t in [t0, t0 + horizon) and takes
/// edge verdicts at the threshold.
pub fn build_flow_graph(chain: &ChainWindow, horizon: usize, threshold: f64) -> Result<FlowGraph> {
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!(
            "threshold = {threshold} must be positive"
        )));
    }
    let n = chain.n();
    let t0 = chain.t0();
    let half = horizon / 2;
    let mut weights = vec![0.0; n * n];
    let mut at_half = vec![0.0; n * n];
    for k in 0..horizon {
        if k == half {
            at_half.copy_from_slice(&weights);
        }
        let m = chain.matrix_at(t0 + k)?;
        for i in 0..n {
            for j in i + 1..n {
                weights[i * n + j] += m.get(i, j) + m.get(j, i);
            }
        }
    }
    if half == horizon {
        at_half.copy_from_slice(&weights);
    }
    let tail = (horizon - half).max(1) as f64;
    let slopes = weights
        .iter()
        .zip(&at_half)
        .map(|(w, h)| (w - h) / tail)
        .collect();
    Ok(FlowGraph {
        n,
        horizon,
        threshold,
        weights,
        slopes,
    })
}

/// Size-ranked union-find with path halving.
struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    /// Partition in normal form: classes ordered by least member,
    /// members ascending.
    fn partition(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for x in 0..n {
            let r = self.find(x);
            by_root.entry(r).or_default().push(x);
        }
        let mut classes: Vec<Vec<usize>> = by_root.into_values().collect();
        classes.sort_by_key(|c| c[0]);
        classes
    }
}

/// Connected components of the thresholded graph, ordered by least
/// member.
pub fn connected_components(graph: &FlowGraph) -> Vec<Vec<usize>> {
    let n = graph.n();
    let mut dsu = Dsu::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if graph.has_edge(i, j) {
                dsu.union(i, j);
            }
        }
    }
    dsu.partition()
}

/// Row grouping of long backward products, cross-checked against the
/// flow graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicClassesReport {
    /// Row classes of A(t0 + horizon : t0), in partition normal form.
    pub classes: Vec<Vec<usize>>,
    /// Row partitions recomputed from later start times (start, classes).
    pub partitions_by_start: Vec<(usize, Vec<Vec<usize>>)>,
    /// Entrywise gap between the full-horizon and half-horizon products.
    pub cauchy_gap: f64,
    /// True when the partition is stable across starts and the product
    /// has stopped moving within tol.
    pub class_ergodic: bool,
    /// Components of the flow graph at the same horizon and the default
    /// threshold.
    pub flow_components: Vec<Vec<usize>>,
    /// Whether classes and flow components coincide exactly.
    pub matches_flow_graph: bool,
}

/// Groups rows of A(t0 + horizon : t0) whose pairwise l1 distance is at
/// most tol, checks the grouping is stable when the product is restarted
/// at t0 + horizon/4 and t0 + horizon/2, checks the product is Cauchy
/// along doubling horizons, and compares against flow-graph components.
pub fn ergodic_classes(
    chain: &ChainWindow,
    horizon: usize,
    tol: f64,
) -> Result<ErgodicClassesReport> {
    if horizon < 2 {
        return Err(Error::Domain("horizon must be at least 2".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol = {tol} must be positive")));
    }
    let t0 = chain.t0();
    let t_end = t0 + horizon;

    let full = backward_product(chain, t0, t_end)?;
    let half = backward_product(chain, t0, t0 + horizon / 2)?;
    let classes = group_rows(&full, tol);
    // The half product composed forward equals the full product, so the
    // gap below measures genuine tail movement.
    let cauchy_gap = full.max_abs_diff(&backward_product(chain, t0 + horizon / 2, t_end)?
        .matmul(&half)?)
        .max(full.max_abs_diff(&half));

    let mut partitions_by_start = Vec::new();
    let mut stable = true;
    for start in [t0 + horizon / 4, t0 + horizon / 2] {
        if start == t0 || start >= t_end {
            continue;
        }
        let p = group_rows(&backward_product(chain, start, t_end)?, tol);
        stable &= p == classes;
        partitions_by_start.push((start, p));
    }

    let graph = build_flow_graph(chain, horizon, DEFAULT_FLOW_THRESHOLD)?;
    let flow_components = connected_components(&graph);
    let class_ergodic = stable && cauchy_gap <= tol;
    let matches_flow_graph = classes == flow_components;
    Ok(ErgodicClassesReport {
        classes,
        partitions_by_start,
        cauchy_gap,
        class_ergodic,
        flow_components,
        matches_flow_graph,
    })
}

fn group_rows(m: &Matrix, tol: f64) -> Vec<Vec<usize>> {
    let n = m.n();
    let mut dsu = Dsu::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = m
                .row(i)
                .iter()
                .zip(m.row(j))
                .map(|(a, b)| (a - b).abs())
                .sum();
            if d <= tol {
                dsu.union(i, j);
            }
        }
    }
    dsu.partition()
}

/// Time-varying subset of a base set: J(t) for t from the jet's start,
/// with the last stored set repeating beyond it.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    n: usize,
    base: u32,
    t0: usize,
    sets: Vec<u32>,
}

impl Jet {
    /// Builds a jet from masks. The base must be nonempty within
    /// dimension n and every set must sit inside the base.
    pub fn new(n: usize, base: u32, t0: usize, sets: Vec<u32>) -> Result<Self> {
        if n == 0 || n > crate::chain_core::MAX_N {
            return Err(Error::InvalidJet(format!("dimension {n} unsupported")));
        }
        let full: u32 = if n == 32 { u32::MAX } else { (1 << n) - 1 };
        if base == 0 || base & !full != 0 {
            return Err(Error::InvalidJet(format!(
                "base mask {base:#b} empty or outside dimension {n}"
            )));
        }
        if sets.is_empty() {
            return Err(Error::InvalidJet("a jet needs at least one set".into()));
        }
        for (k, &s) in sets.iter().enumerate() {
            if s & !base != 0 {
                return Err(Error::InvalidJet(format!(
                    "set {k} ({s:#b}) leaves the base {base:#b}"
                )));
            }
        }
        Ok(Self { n, base, t0, sets })
    }

    /// Constant jet J(t) = members forever.
    pub fn constant(n: usize, members: &[usize]) -> Result<Self> {
        let mut mask = 0u32;
        for &i in members {
            if i >= n {
                return Err(Error::InvalidJet(format!(
                    "member {i} out of range for n = {n}"
                )));
            }
            mask |= 1 << i;
        }
        Self::new(n, mask, 0, vec![mask])
    }

    /// Mask at time t; the last set repeats past the stored range.
    pub fn at(&self, t: usize) -> Result<u32> {
        if t < self.t0 {
            return Err(Error::InvalidJet(format!(
                "jet queried at t = {t} before its start {}",
                self.t0
            )));
        }
        let k = (t - self.t0).min(self.sets.len() - 1);
        Ok(self.sets[k])
    }

    /// Proper at every stored time: nonempty and strictly inside the
    /// base.
    pub fn is_proper(&self) -> bool {
        self.sets.iter().all(|&s| s != 0 && s != self.base)
    }
}

/// Accumulated interaction of two jets over [t0, t0 + horizon):
/// sum_t of the weight a_ij(t) for i in J_u(t+1), j in J_v(t) plus the
/// mirrored term. The jets must be disjoint at every queried time.
pub fn jet_interaction(
    chain: &ChainWindow,
    ju: &Jet,
    jv: &Jet,
    horizon: usize,
) -> Result<f64> {
    if ju.n != chain.n() || jv.n != chain.n() {
        return Err(Error::Dimension(
            "jet dimension does not match the chain".into(),
        ));
    }
    let t0 = chain.t0();
    let mut total = 0.0;
    for t in t0..t0 + horizon {
        let (u_now, v_now) = (ju.at(t)?, jv.at(t)?);
        let (u_next, v_next) = (ju.at(t + 1)?, jv.at(t + 1)?);
        if u_now & v_now != 0 || u_next & v_next != 0 {
            return Err(Error::InvalidJet(format!(
                "jets intersect at t = {t}; interaction needs disjoint jets"
            )));
        }
        let m = chain.matrix_at(t)?;
        total += cross_mass(&m, u_next, v_now) + cross_mass(&m, v_next, u_now);
    }
    Ok(total)
}

fn cross_mass(m: &Matrix, rows: u32, cols: u32) -> f64 {
    let n = m.n();
    let mut s = 0.0;
    for i in 0..n {
        if rows >> i & 1 == 0 {
            continue;
        }
        for j in 0..n {
            if cols >> j & 1 == 1 {
                s += m.get(i, j);
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_core::{cut_flow, Extension, SubsetCut};
    use crate::random_chains::{generate, Family, GeneratorSpec};

    fn lazy_symmetric(t: usize) -> Matrix {
        let w = 1.0 / (t + 1) as f64;
        Matrix::from_rows(&[vec![1.0 - w, w], vec![w, 1.0 - w]]).unwrap()
    }

    #[test]
    fn harmonic_weights_cross_the_threshold() {
        let mats: Vec<Matrix> = (0..100).map(lazy_symmetric).collect();
        let chain = ChainWindow::new(0, mats, Extension::RepeatLast).unwrap();
        let g = build_flow_graph(&chain, 100, 5.0).unwrap();
        let harmonic: f64 = (1..=100).map(|k| 1.0 / k as f64).sum();
        assert!((g.weight(0, 1) - 2.0 * harmonic).abs() < 1e-12);
        assert!(g.has_edge(0, 1));
        assert!(g.slope(0, 1) > 0.0);
    }

    #[test]
    fn geometric_weights_stay_below_the_threshold() {
        // Total cross weight is 0.8 (1 - 2^-100), safely under 1.
        let mats: Vec<Matrix> = (0..100)
            .map(|t| {
                let w = 0.4 * 0.5f64.powi(t as i32);
                Matrix::from_rows(&[vec![1.0 - w, w], vec![0.0, 1.0]]).unwrap()
            })
            .collect();
        let chain = ChainWindow::new(0, mats, Extension::RepeatLast).unwrap();
        let g = build_flow_graph(&chain, 100, DEFAULT_FLOW_THRESHOLD).unwrap();
        assert!(g.weight(0, 1) < 0.8 + 1e-12);
        assert!(!g.has_edge(0, 1));
        assert_eq!(connected_components(&g), vec![vec![0], vec![1]]);
    }

    #[test]
    fn components_respect_relabeling() {
        let spec = GeneratorSpec::new(
            Family::BlockDiagonalMixers {
                blocks: 2,
                pair_prob: 0.9,
                mixing: 0.5,
            },
            5,
            17,
        )
        .unwrap();
        let chain = generate(&spec, 60).unwrap();
        let g = build_flow_graph(&chain, 60, DEFAULT_FLOW_THRESHOLD).unwrap();
        // Relabel agents by the permutation p and rebuild.
        let p = [3usize, 0, 4, 1, 2];
        let relabeled: Vec<Matrix> = chain
            .matrices()
            .iter()
            .map(|m| {
                let rows: Vec<Vec<f64>> = (0..5)
                    .map(|i| (0..5).map(|j| m.get(p[i], p[j])).collect())
                    .collect();
                Matrix::from_rows(&rows).unwrap()
            })
            .collect();
        let rechain = ChainWindow::new(0, relabeled, Extension::RepeatLast).unwrap();
        let rg = build_flow_graph(&rechain, 60, DEFAULT_FLOW_THRESHOLD).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert_eq!(g.has_edge(p[i], p[j]), rg.has_edge(i, j));
                }
            }
        }
    }

    #[test]
    fn two_block_chain_classes_match_flow_components() {
        let spec = GeneratorSpec::new(
            Family::BlockDiagonalMixers {
                blocks: 2,
                pair_prob: 1.0,
                mixing: 0.5,
            },
            4,
            9,
        )
        .unwrap();
        let chain = generate(&spec, 400).unwrap();
        let report = ergodic_classes(&chain, 400, 1e-8).unwrap();
        assert_eq!(report.classes, vec![vec![0, 1], vec![2, 3]]);
        assert!(report.class_ergodic, "cauchy gap {}", report.cauchy_gap);
        assert!(report.matches_flow_graph);
    }

    #[test]
    fn connected_chain_is_a_single_class() {
        let spec = GeneratorSpec::new(
            Family::GossipPairs {
                pair_prob: 0.8,
                mixing: 0.5,
            },
            4,
            31,
        )
        .unwrap();
        let chain = generate(&spec, 500).unwrap();
        let report = ergodic_classes(&chain, 500, 1e-8).unwrap();
        assert_eq!(report.classes, vec![vec![0, 1, 2, 3]]);
        assert!(report.class_ergodic);
        assert!(report.matches_flow_graph);
    }

    #[test]
    fn constant_jets_reduce_to_cut_flows() {
        let spec = GeneratorSpec::new(Family::LazyRandomWalk { self_weight: 0.6 }, 3, 4).unwrap();
        let chain = generate(&spec, 25).unwrap();
        let ju = Jet::constant(3, &[0]).unwrap();
        let jv = Jet::constant(3, &[1, 2]).unwrap();
        let u = jet_interaction(&chain, &ju, &jv, 25).unwrap();
        let cut = SubsetCut::from_members(3, &[0]).unwrap();
        let mut expect = 0.0;
        for t in 0..25 {
            let f = cut_flow(&chain.matrix_at(t).unwrap(), &cut).unwrap();
            expect += f.into_s + f.into_sbar;
        }
        assert!((u - expect).abs() < 1e-12);
    }

    #[test]
    fn alternating_jet_hand_trace() {
        let a = Matrix::from_rows(&[
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.05, 0.15, 0.8],
        ])
        .unwrap();
        let chain = ChainWindow::new(0, vec![a], Extension::RepeatLast).unwrap();
        // J_u alternates {0}, {1}, {0}, ...; J_v is {2} throughout.
        let ju = Jet::new(3, 0b011, 0, vec![0b001, 0b010, 0b001, 0b010]).unwrap();
        let jv = Jet::constant(3, &[2]).unwrap();
        let u = jet_interaction(&chain, &ju, &jv, 3).unwrap();
        // t=0: a_12 + a_20; t=1: a_02 + a_21; t=2: a_12 + a_20.
        let expect = (0.1 + 0.05) + (0.1 + 0.15) + (0.1 + 0.05);
        assert!((u - expect).abs() < 1e-15);
    }

    #[test]
    fn jets_must_be_disjoint_and_inside_their_base() {
        assert!(Jet::new(3, 0b011, 0, vec![0b100]).is_err());
        assert!(Jet::new(3, 0b000, 0, vec![0b000]).is_err());
        let chain = ChainWindow::new(
            0,
            vec![Matrix::identity(3)],
            Extension::RepeatLast,
        )
        .unwrap();
        let ju = Jet::constant(3, &[0, 1]).unwrap();
        let jv = Jet::constant(3, &[1, 2]).unwrap();
        assert!(matches!(
            jet_interaction(&chain, &ju, &jv, 5),
            Err(Error::InvalidJet(_))
        ));
    }

    #[test]
    fn proper_jet_predicate() {
        let proper = Jet::new(3, 0b011, 0, vec![0b001, 0b010]).unwrap();
        assert!(proper.is_proper());
        let improper = Jet::new(3, 0b011, 0, vec![0b011]).unwrap();
        assert!(!improper.is_proper());
    }

    #[test]
    fn flow_graph_tsv_lists_every_pair() {
        let mats: Vec<Matrix> = (0..10).map(lazy_symmetric).collect();
        let chain = ChainWindow::new(0, mats, Extension::RepeatLast).unwrap();
        let g = build_flow_graph(&chain, 10, DEFAULT_FLOW_THRESHOLD).unwrap();
        let tsv = g.to_tsv();
        assert!(tsv.starts_with("# i\tj\tweight\tverdict\n"));
        assert!(tsv.contains("present"));
        assert_eq!(tsv.lines().count(), 2);
    }
}

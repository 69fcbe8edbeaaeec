//! Approximate reciprocity across cuts.
//!
//! For a cut S, step t moves weight in two directions:
//! into_s = 1' A_{S,comp} 1 and into_sbar = 1' A_{comp,S} 1. A chain is
//! cut-balanced with ratio alpha when every step and cut satisfies both
//! into_s >= alpha * into_sbar and the swapped inequality. The weaker,
//! windowed notion certified here allows a fixed excess beta:
//!
//!   p0 * sum_t into_s(t)  <=  sum_t into_sbar(t) + beta
//!
//! over every cut and every time window inside the horizon. The smallest
//! beta making that hold is
//!
//!   beta_required = max(0, max_{S, window} sum_t (p0 * into_s - into_sbar))
//!
//! computed per cut by a maximum-subarray scan over the window sums, so
//! the whole certificate costs O(2^n * horizon) flow evaluations. The
//! scan accumulates each candidate window left to right, which makes the
//! result bit-identical to a brute-force enumeration of all windows.

use crate::chain_core::{
    cut_flow, unordered_cut_masks, ChainWindow, Extension, Matrix, SubsetCut,
};
use crate::error::{Error, Result};
use crate::random_chains::CounterRng;
use rayon::prelude::*;

/// Fixed seed for the sampled cut enumeration used beyond n = 16.
const SAMPLED_CUT_SEED: u64 = 0xC075_EED;
/// Number of sampled masks beyond n = 16.
const SAMPLED_CUT_COUNT: usize = 1 << 14;

/// Certificate for the windowed reciprocity inequality at a given p0.
#[derive(Debug, Clone, PartialEq)]
pub struct ReciprocityCertificate {
    /// Reciprocity weight p0 in (0, 1].
    pub p0: f64,
    /// Number of steps scanned, starting at the chain's t0.
    pub horizon: usize,
    /// Smallest admissible beta over the scanned cuts and windows.
    pub beta_required: f64,
    /// Cut and window [t_start, t_end) attaining beta_required, when
    /// it is positive.
    pub witness: Option<(SubsetCut, usize, usize)>,
    /// Whether every cut was scanned (true for n <= 16).
    pub exhaustive: bool,
}

impl ReciprocityCertificate {
    /// Key-value text block; `witness_mask` / `witness_window` read
    /// `none` when the certificate is tight at zero.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("p0 {}\n", crate::format::format_f64(self.p0)));
        out.push_str(&format!("horizon {}\n", self.horizon));
        out.push_str(&format!(
            "beta_required {}\n",
            crate::format::format_f64(self.beta_required)
        ));
        match &self.witness {
            Some((cut, a, b)) => {
                out.push_str(&format!("witness_mask {}\n", cut.mask()));
                out.push_str(&format!("witness_window {a} {b}\n"));
            }
            None => {
                out.push_str("witness_mask none\n");
                out.push_str("witness_window none\n");
            }
        }
        out.push_str(&format!("exhaustive {}\n", self.exhaustive));
        out
    }
}

/// Largest alpha in [0, 1] such that every stored step and every cut is
/// alpha-balanced. Cuts where nothing crosses in either direction do not
/// constrain alpha; a chain with no cross-cut weight at all reports 1.
/// Beyond n = 16 a documented sampled cut set is scanned instead.
pub fn cut_balance_alpha(chain: &ChainWindow) -> Result<f64> {
    if chain.n() < 2 {
        return Ok(1.0);
    }
    let masks = cut_mask_set(chain.n()).0;
    let mut alpha: f64 = 1.0;
    for m in chain.matrices() {
        for &mask in &masks {
            let cut = SubsetCut::new(chain.n(), mask)?;
            let f = cut_flow(m, &cut)?;
            for (num, den) in [(f.into_s, f.into_sbar), (f.into_sbar, f.into_s)] {
                if den > 0.0 {
                    alpha = alpha.min(num / den);
                }
            }
            if alpha == 0.0 {
                return Ok(0.0);
            }
        }
    }
    Ok(alpha)
}

/// Smallest beta certifying the windowed reciprocity inequality at p0
/// over all cuts and windows within `horizon` steps of the chain start.
/// The chain's extension rule supplies matrices past the stored window.
pub fn approximate_reciprocity_beta(
    chain: &ChainWindow,
    p0: f64,
    horizon: usize,
) -> Result<ReciprocityCertificate> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::Domain(format!("p0 = {p0} not in (0, 1]")));
    }
    let n = chain.n();
    let t0 = chain.t0();
    if n < 2 || horizon == 0 {
        return Ok(ReciprocityCertificate {
            p0,
            horizon,
            beta_required: 0.0,
            witness: None,
            exhaustive: true,
        });
    }
    let matrices: Vec<Matrix> = (t0..t0 + horizon)
        .map(|t| chain.matrix_at(t))
        .collect::<Result<_>>()?;
    let (masks, exhaustive) = cut_mask_set(n);

    // Per unordered cut, one pass computes both orientations.
    let best = masks
        .par_iter()
        .map(|&mask| -> Result<CutScan> {
            let cut = SubsetCut::new(n, mask)?;
            let mut fwd = WindowScan::new(t0);
            let mut rev = WindowScan::new(t0);
            for (k, m) in matrices.iter().enumerate() {
                let t = t0 + k;
                let f = cut_flow(m, &cut)?;
                fwd.push(t, p0 * f.into_s - f.into_sbar);
                rev.push(t, p0 * f.into_sbar - f.into_s);
            }
            let mut scan = CutScan::from(mask, fwd);
            scan.merge(CutScan::from(cut.complement().mask(), rev));
            Ok(scan)
        })
        .try_reduce(CutScan::empty, |mut a, b| {
            a.merge(b);
            Ok(a)
        })?;

    let (beta_required, witness) = if best.best > 0.0 {
        let (mask, a, b) = best.window.expect("positive excess carries a window");
        (best.best, Some((SubsetCut::new(n, mask)?, a, b)))
    } else {
        (0.0, None)
    };
    Ok(ReciprocityCertificate {
        p0,
        horizon,
        beta_required,
        witness,
        exhaustive,
    })
}

/// Maximum-subarray state over nonempty windows, tracking the attaining
/// window. Running sums restart exactly like a left-to-right summation
/// of the chosen window, so results match brute-force enumeration bit
/// for bit.
pub(crate) struct WindowScan {
    cur: f64,
    cur_start: usize,
    best: f64,
    best_window: (usize, usize),
}

impl WindowScan {
    pub(crate) fn new(t0: usize) -> Self {
        Self {
            cur: 0.0,
            cur_start: t0,
            best: f64::NEG_INFINITY,
            best_window: (t0, t0),
        }
    }

    pub(crate) fn push(&mut self, t: usize, g: f64) {
        let extended = self.cur + g;
        if g >= extended {
            // Restarting at t is at least as good as extending.
            self.cur = g;
            self.cur_start = t;
        } else {
            self.cur = extended;
        }
        if self.cur > self.best {
            self.best = self.cur;
            self.best_window = (self.cur_start, t + 1);
        }
    }
}

/// Best excess seen over one or more cuts, with a total tie-break order
/// (larger beta, then smaller mask, then earlier window) so parallel
/// reduction is deterministic.
pub(crate) struct CutScan {
    pub(crate) best: f64,
    pub(crate) window: Option<(u32, usize, usize)>,
}

impl CutScan {
    pub(crate) fn empty() -> Self {
        Self {
            best: f64::NEG_INFINITY,
            window: None,
        }
    }

    pub(crate) fn from(mask: u32, scan: WindowScan) -> Self {
        Self {
            best: scan.best,
            window: Some((mask, scan.best_window.0, scan.best_window.1)),
        }
    }

    pub(crate) fn merge(&mut self, other: CutScan) {
        let take = match (self.window, other.window) {
            (None, Some(_)) => true,
            (Some(a), Some(b)) => {
                other.best > self.best || (other.best == self.best && b < a)
            }
            _ => false,
        };
        if take {
            self.best = other.best;
            self.window = other.window;
        }
    }
}

/// Unordered cut representatives to scan: exhaustive through n = 16,
/// then singletons plus a fixed-seed uniform sample of 2^14 masks,
/// canonicalized and deduplicated.
pub(crate) fn cut_mask_set(n: usize) -> (Vec<u32>, bool) {
    if n <= 16 {
        return (unordered_cut_masks(n), true);
    }
    let full: u64 = if n == 32 { u32::MAX as u64 } else { (1u64 << n) - 1 };
    let canonical = |m: u32| -> u32 {
        if m & 1 == 1 {
            m
        } else {
            !m & full as u32
        }
    };
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..n {
        seen.insert(canonical(1u32 << i));
    }
    let mut rng = CounterRng::keyed(SAMPLED_CUT_SEED, &[n as u64]);
    while seen.len() < SAMPLED_CUT_COUNT {
        let m = (rng.next_u64() % (full - 1) + 1) as u32;
        seen.insert(canonical(m));
    }
    (seen.into_iter().collect(), false)
}

/// The three equivalent faces of irreducibility for one static
/// stochastic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StaticEquivalence {
    /// The positive-entry digraph is strongly connected.
    pub irreducible: bool,
    /// The static chain is cut-balanced with positive alpha.
    pub reciprocal: bool,
    /// The undirected graph with edges a_ij + a_ji > 0 is connected.
    pub flow_connected: bool,
}

/// Evaluates irreducibility, reciprocity, and flow connectivity of a
/// static matrix independently, then enforces their equivalence:
/// irreducible holds exactly when the other two hold together. Exact
/// zero entries are assumed; a disagreement is an internal error.
pub fn static_equivalence_check(m: &Matrix) -> Result<StaticEquivalence> {
    let n = m.n();
    let irreducible = strongly_connected(m);
    let chain = ChainWindow::new(0, vec![m.clone()], Extension::RepeatLast)?;
    let reciprocal = cut_balance_alpha(&chain)? > 0.0;
    let flow_connected = undirected_connected(m);
    if irreducible != (reciprocal && flow_connected) {
        return Err(Error::Internal(format!(
            "static equivalence broke on a {n}x{n} matrix: irreducible = {irreducible}, \
             reciprocal = {reciprocal}, flow_connected = {flow_connected}"
        )));
    }
    Ok(StaticEquivalence {
        irreducible,
        reciprocal,
        flow_connected,
    })
}

/// Strong connectivity via reachability from node 0 in the digraph and
/// its transpose.
fn strongly_connected(m: &Matrix) -> bool {
    let n = m.n();
    if n == 1 {
        return true;
    }
    let reach = |transpose: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if transpose { m.get(j, i) } else { m.get(i, j) };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count
    };
    reach(false) == n && reach(true) == n
}

fn undirected_connected(m: &Matrix) -> bool {
    let n = m.n();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if i != j && !seen[j] && m.get(i, j) + m.get(j, i) > 0.0 {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == n
}

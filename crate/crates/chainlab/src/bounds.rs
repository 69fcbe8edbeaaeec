//! Constructive lower bounds on backward-product entries.
//!
//! The scalar workhorse is M(eps) = ln(1/eps) / (1 - eps), the smallest
//! constant with 1 - x >= exp(-M(eps) x) for all x in [0, 1 - eps]. It
//! converts additive losses (deviation from stochasticity, reciprocity
//! excess) into multiplicative decay of diagonal product entries.
//!
//! [`eta_n`] evaluates the recursive bound eta_n(gamma, p0, beta, delta):
//! every diagonal entry of every backward product of a strongly
//! aperiodic chain satisfying the windowed reciprocity inequality stays
//! at or above eta_n. The recursion shrinks the dimension while
//! inflating beta and delta, and the closing formula raises the
//! recursive minimum to the n-th power twice over, so values collapse
//! toward zero extremely fast. Everything is evaluated in log space;
//! the linear value is also reported, flagged when it underflows.
//!
//! [`verify_product_lower_bound`] checks such a bound empirically
//! against every anchored window of a chain.

use crate::chain_core::{backward_product, ChainWindow};
use crate::error::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;

/// M(eps) = ln(1/eps) / (1 - eps) for eps in (0, 1).
///
/// Decreasing in eps, with limit 1 as eps -> 1 and divergence at 0.
pub fn m_of_eps(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} not in (0, 1)")));
    }
    Ok((1.0 / eps).ln() / (1.0 - eps))
}

/// Lower bound on a cross entry of a backward product: if diagonal
/// entries of all sub-window products stay at or above eta_i (row i)
/// and eta_j (row j), and the per-step weights a_ji sum to at least
/// delta with 0 < delta < eta_j, then the product entry (j, i) is at
/// least eta_i * eta_j * delta / 2.
pub fn cross_entry_bound(eta_i: f64, eta_j: f64, delta: f64) -> Result<f64> {
    for (name, v) in [("eta_i", eta_i), ("eta_j", eta_j)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!("{name} = {v} not in (0, 1]")));
        }
    }
    if !(delta > 0.0 && delta < eta_j) {
        return Err(Error::Domain(format!(
            "delta = {delta} not in (0, eta_j) with eta_j = {eta_j}"
        )));
    }
    Ok(0.5 * eta_i * eta_j * delta)
}

/// Parameters of the recursive product bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaParams {
    /// Dimension, at least 1.
    pub n: usize,
    /// Strong aperiodicity coefficient, in (0, 1).
    pub gamma: f64,
    /// Reciprocity weight, in (0, 1).
    pub p0: f64,
    /// Reciprocity excess, positive.
    pub beta: f64,
    /// Total deviation from stochasticity, nonnegative.
    pub delta: f64,
}

impl EtaParams {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("eta_n needs n >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!(
                "gamma = {} not in (0, 1)",
                self.gamma
            )));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::Domain(format!("p0 = {} not in (0, 1)", self.p0)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!(
                "beta = {} must be positive and finite",
                self.beta
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Domain(format!(
                "delta = {} must be nonnegative and finite",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Log-space value of the recursive bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaBound {
    /// ln eta_n; always finite.
    pub ln_value: f64,
    /// exp(ln_value); 0.0 when the linear value underflows f64.
    pub value: f64,
    /// True when `value` underflowed to exactly 0.
    pub underflowed: bool,
}

/// Evaluates the recursive product lower bound.
///
/// Base case: ln eta_1 = -M(gamma) * delta. For n >= 2 the recursion
/// takes the minimum of the bound over dimensions r < n under two
/// parameter inflations, beta + 2n and delta + 2n on one branch and
/// beta, delta both raised by (2n + beta) / p0 on the other, and closes
/// with
///
///   eta_n = (eta_min^n * (eta_min^2 / 2) * min(1/n^2, eta_min/2))^n
///           * eta_min^n * exp(-M(gamma) * delta).
///
/// Subproblems are memoized on (r, beta, delta). The memoized tree
/// still grows like 3^n in the worst case, so dimensions beyond roughly
/// 13 take noticeable time.
pub fn eta_n(params: &EtaParams) -> Result<EtaBound> {
    params.validate()?;
    let m_gamma = m_of_eps(params.gamma)?;
    let mut memo: HashMap<(usize, u64, u64), f64> = HashMap::new();
    let ln_value = ln_eta_rec(
        params.n,
        m_gamma,
        params.p0,
        params.beta,
        params.delta,
        &mut memo,
    );
    let value = ln_value.exp();
    Ok(EtaBound {
        ln_value,
        value,
        underflowed: value == 0.0,
    })
}

fn ln_eta_rec(
    n: usize,
    m_gamma: f64,
    p0: f64,
    beta: f64,
    delta: f64,
    memo: &mut HashMap<(usize, u64, u64), f64>,
) -> f64 {
    if n == 1 {
        return -m_gamma * delta;
    }
    let key = (n, beta.to_bits(), delta.to_bits());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let shift_b = 2.0 * n as f64;
    let shift_c = (2.0 * n as f64 + beta) / p0;
    let mut ln_min = f64::INFINITY;
    for r in 1..n {
        ln_min = ln_min.min(ln_eta_rec(r, m_gamma, p0, beta + shift_b, delta + shift_b, memo));
        ln_min = ln_min.min(ln_eta_rec(r, m_gamma, p0, beta + shift_c, delta + shift_c, memo));
    }
    let nf = n as f64;
    let ln2 = std::f64::consts::LN_2;
    let ln_gap = (-2.0 * nf.ln()).min(ln_min - ln2);
    let ln_inner = nf * ln_min + (2.0 * ln_min - ln2) + ln_gap;
    let v = nf * ln_inner + nf * ln_min - m_gamma * delta;
    memo.insert(key, v);
    v
}

/// Outcome of scanning every anchored window product of a chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductBoundReport {
    /// Whether the bound held for every window and diagonal index.
    pub holds: bool,
    /// Smallest diagonal entry found.
    pub min_diagonal: f64,
    /// (t1, t2, i) attaining the minimum.
    pub witness: (usize, usize, usize),
}

/// Checks min over t1 <= t2 <= t0 + horizon and i of the diagonal of
/// A(t2:t1) against a linear-space eta. Anchors are scanned
/// independently, O(horizon^2) matrix products in total.
pub fn verify_product_lower_bound(
    chain: &ChainWindow,
    eta: f64,
    horizon: usize,
) -> Result<ProductBoundReport> {
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("eta = {eta} must be nonnegative")));
    }
    let (min_diagonal, witness) = min_product_diagonal(chain, horizon)?;
    Ok(ProductBoundReport {
        holds: min_diagonal >= eta,
        min_diagonal,
        witness,
    })
}

/// Log-space variant for bounds whose linear value underflows: the
/// check becomes min_diag > 0 and ln(min_diag) >= ln_eta.
pub fn verify_product_lower_bound_log(
    chain: &ChainWindow,
    ln_eta: f64,
    horizon: usize,
) -> Result<ProductBoundReport> {
    let (min_diagonal, witness) = min_product_diagonal(chain, horizon)?;
    Ok(ProductBoundReport {
        holds: min_diagonal > 0.0 && min_diagonal.ln() >= ln_eta,
        min_diagonal,
        witness,
    })
}

fn min_product_diagonal(
    chain: &ChainWindow,
    horizon: usize,
) -> Result<(f64, (usize, usize, usize))> {
    let t0 = chain.t0();
    let end = t0 + horizon;
    let results = (t0..=end)
        .into_par_iter()
        .map(|t1| -> Result<(f64, (usize, usize, usize))> {
            let mut best = (1.0f64, (t1, t1, 0usize));
            let mut prod = backward_product(chain, t1, t1)?;
            for t2 in t1 + 1..=end {
                prod = chain.matrix_at(t2 - 1)?.matmul(&prod)?;
                for i in 0..prod.n() {
                    let d = prod.get(i, i);
                    if d < best.0 {
                        best = (d, (t1, t2, i));
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut overall = (1.0f64, (t0, t0, 0usize));
    for cand in results {
        if cand.0 < overall.0 || (cand.0 == overall.0 && cand.1 < overall.1) {
            overall = cand;
        }
    }
    Ok(overall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_core::{Extension, Matrix};
    use proptest::prelude::*;

    #[test]
    fn m_of_eps_reference_values() {
        assert!((m_of_eps(0.5).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let e = std::f64::consts::E;
        assert!((m_of_eps(1.0 / e).unwrap() - e / (e - 1.0)).abs() < 1e-12);
        assert!((m_of_eps(0.999).unwrap() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn m_of_eps_domain() {
        assert!(m_of_eps(0.0).is_err());
        assert!(m_of_eps(1.0).is_err());
        assert!(m_of_eps(-0.1).is_err());
    }

    proptest! {
        // 1 - x >= exp(-M(eps) x) on [0, 1 - eps], and M is the
        // smallest such constant: equality is approached at x = 1 - eps.
        #[test]
        fn linearization_inequality_holds(eps in 1e-6..0.999_999f64, frac in 0.0..=1.0f64) {
            let m = m_of_eps(eps).unwrap();
            let x = frac * (1.0 - eps);
            prop_assert!(1.0 - x >= (-m * x).exp() - 1e-15);
        }
    }

    #[test]
    fn linearization_is_tight_at_the_right_endpoint() {
        for eps in [0.1, 0.5, 0.9] {
            let m = m_of_eps(eps).unwrap();
            let x = 1.0 - eps;
            assert!(((1.0 - x) - (-m * x).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entry_bound_hand_value() {
        let v = cross_entry_bound(0.9, 0.9, 0.89).unwrap();
        assert!((v - 0.36045).abs() < 5e-4);
    }

    #[test]
    fn cross_entry_bound_preconditions() {
        assert!(cross_entry_bound(0.0, 0.9, 0.5).is_err());
        assert!(cross_entry_bound(0.9, 1.1, 0.5).is_err());
        assert!(cross_entry_bound(0.9, 0.9, 0.9).is_err());
        assert!(cross_entry_bound(0.9, 0.9, 0.0).is_err());
    }

    fn params(n: usize, gamma: f64, p0: f64, beta: f64, delta: f64) -> EtaParams {
        EtaParams {
            n,
            gamma,
            p0,
            beta,
            delta,
        }
    }

    #[test]
    fn eta_one_is_exponential_in_delta() {
        let b = eta_n(&params(1, 0.5, 0.5, 1.0, 0.0)).unwrap();
        assert_eq!(b.ln_value, 0.0);
        assert_eq!(b.value, 1.0);
        let b = eta_n(&params(1, 0.5, 0.5, 1.0, 3.0)).unwrap();
        assert!((b.ln_value + 3.0 * 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    /// Independent transcription of the recursion, linear space, no
    /// memoization, different expression grouping.
    fn eta_direct(n: usize, gamma: f64, p0: f64, beta: f64, delta: f64) -> f64 {
        let m = -gamma.ln() / (1.0 - gamma);
        if n == 1 {
            return (-m * delta).exp();
        }
        let nf = n as f64;
        let mut e_min = f64::INFINITY;
        for r in 1..n {
            e_min = e_min.min(eta_direct(r, gamma, p0, beta + 2.0 * nf, delta + 2.0 * nf));
            let s = (2.0 * nf + beta) / p0;
            e_min = e_min.min(eta_direct(r, gamma, p0, beta + s, delta + s));
        }
        let gap = (1.0 / (nf * nf)).min(e_min / 2.0);
        (e_min.powi(n as i32) * (e_min * e_min / 2.0) * gap).powi(n as i32)
            * e_min.powi(n as i32)
            * (-m * delta).exp()
    }

    #[test]
    fn eta_two_matches_independent_transcription() {
        // gamma = 1/2 makes every factor a power of two: the recursive
        // minimum is 2^-20, the gap term 2^-21, and the closing formula
        // gives 2^-244.
        let fast = eta_n(&params(2, 0.5, 0.5, 1.0, 0.0)).unwrap();
        let direct = eta_direct(2, 0.5, 0.5, 1.0, 0.0);
        assert!(
            ((fast.value - direct) / direct).abs() < 1e-12,
            "log-space {} vs direct {}",
            fast.value,
            direct
        );
        let hand = 2.0f64.powi(-244);
        assert!(((fast.value - hand) / hand).abs() < 1e-9);
        assert!(!fast.underflowed);
    }

    /// Second independent transcription: exact-exponent scaled floats
    /// (value = f * 2^e with f in [0.5, 1)), no logarithms anywhere.
    #[derive(Clone, Copy)]
    struct Scaled {
        f: f64,
        e: i64,
    }

    impl Scaled {
        fn from_f64(v: f64) -> Self {
            assert!(v > 0.0 && v.is_finite());
            let mut s = Self { f: v, e: 0 };
            s.normalize();
            s
        }

        fn normalize(&mut self) {
            while self.f >= 1.0 {
                self.f *= 0.5;
                self.e += 1;
            }
            while self.f < 0.5 {
                self.f *= 2.0;
                self.e -= 1;
            }
        }

        fn mul(self, other: Scaled) -> Scaled {
            let mut out = Scaled {
                f: self.f * other.f,
                e: self.e + other.e,
            };
            out.normalize();
            out
        }

        fn powi(self, k: usize) -> Scaled {
            let mut out = Scaled { f: 0.5, e: 1 }; // 1.0 normalized
            for _ in 0..k {
                out = out.mul(self);
            }
            out
        }

        fn halve(self) -> Scaled {
            Scaled {
                f: self.f,
                e: self.e - 1,
            }
        }

        fn min(self, other: Scaled) -> Scaled {
            if (self.e, self.f) <= (other.e, other.f) {
                self
            } else {
                other
            }
        }

        fn ln(self) -> f64 {
            self.f.ln() + self.e as f64 * std::f64::consts::LN_2
        }
    }

    fn eta_scaled(n: usize, gamma: f64, p0: f64, beta: f64, delta: f64) -> Scaled {
        let m = -gamma.ln() / (1.0 - gamma);
        let tail = Scaled::from_f64((-m * delta).exp());
        if n == 1 {
            return tail;
        }
        let nf = n as f64;
        let mut e_min: Option<Scaled> = None;
        for r in 1..n {
            let b = eta_scaled(r, gamma, p0, beta + 2.0 * nf, delta + 2.0 * nf);
            let s = (2.0 * nf + beta) / p0;
            let c = eta_scaled(r, gamma, p0, beta + s, delta + s);
            let both = b.min(c);
            e_min = Some(match e_min {
                Some(cur) => cur.min(both),
                None => both,
            });
        }
        let e_min = e_min.unwrap();
        let gap = Scaled::from_f64(1.0 / (nf * nf)).min(e_min.halve());
        e_min
            .powi(n)
            .mul(e_min.mul(e_min).halve())
            .mul(gap)
            .powi(n)
            .mul(e_min.powi(n))
            .mul(tail)
    }

    #[test]
    fn eta_three_matches_scaled_transcription() {
        for (gamma, p0, beta, delta) in [
            (0.5, 0.5, 1.0, 0.0),
            (0.3, 0.7, 0.5, 2.0),
            (0.8, 0.2, 2.0, 1.0),
        ] {
            let fast = eta_n(&params(3, gamma, p0, beta, delta)).unwrap();
            let direct = eta_scaled(3, gamma, p0, beta, delta).ln();
            assert!(
                (fast.ln_value - direct).abs() < 1e-9 * direct.abs(),
                "ln eta_3({gamma},{p0},{beta},{delta}): {} vs {direct}",
                fast.ln_value
            );
            assert!(fast.underflowed, "eta_3 should underflow linear f64");
        }
    }

    #[test]
    fn eta_monotonicity_on_parameter_grid() {
        // 27 grid points; nonincreasing in n, beta, delta and
        // nondecreasing in gamma, p0, all compared in log space.
        let delta = 0.5;
        for &gamma in &[0.25, 0.5, 0.75] {
            for &p0 in &[0.25, 0.5, 0.75] {
                for &beta in &[0.5, 1.0, 2.0] {
                    let ln = |n: usize, g: f64, p: f64, b: f64, d: f64| {
                        eta_n(&params(n, g, p, b, d)).unwrap().ln_value
                    };
                    let here = ln(3, gamma, p0, beta, delta);
                    assert!(ln(2, gamma, p0, beta, delta) >= here);
                    assert!(ln(4, gamma, p0, beta, delta) <= here);
                    assert!(ln(3, gamma, p0, beta + 0.5, delta) <= here);
                    assert!(ln(3, gamma, p0, beta, delta + 0.5) <= here);
                    assert!(ln(3, gamma + 0.1, p0, beta, delta) >= here);
                    assert!(ln(3, gamma, p0 + 0.1, beta, delta) >= here);
                }
            }
        }
    }

    #[test]
    fn eta_rejects_out_of_domain_parameters() {
        assert!(eta_n(&params(0, 0.5, 0.5, 1.0, 0.0)).is_err());
        assert!(eta_n(&params(2, 0.0, 0.5, 1.0, 0.0)).is_err());
        assert!(eta_n(&params(2, 1.0, 0.5, 1.0, 0.0)).is_err());
        assert!(eta_n(&params(2, 0.5, 1.0, 1.0, 0.0)).is_err());
        assert!(eta_n(&params(2, 0.5, 0.5, 0.0, 0.0)).is_err());
        assert!(eta_n(&params(2, 0.5, 0.5, 1.0, -1.0)).is_err());
    }

    #[test]
    fn identity_chain_bound_is_one() {
        let chain = ChainWindow::new(0, vec![Matrix::identity(3)], Extension::Identity).unwrap();
        let report = verify_product_lower_bound(&chain, 1.0, 10).unwrap();
        assert!(report.holds);
        assert_eq!(report.min_diagonal, 1.0);
    }

    #[test]
    fn mixing_chain_min_diagonal_stays_above_half() {
        let a = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let chain = ChainWindow::new(0, vec![a], Extension::RepeatLast).unwrap();
        let report = verify_product_lower_bound(&chain, 0.5, 60).unwrap();
        assert!(report.holds);
        // Diagonal of the k-step product is (1 + 0.8^k) / 2.
        let expect = (1.0 + 0.8f64.powi(60)) / 2.0;
        assert!((report.min_diagonal - expect).abs() < 1e-12);
        let report = verify_product_lower_bound(&chain, 0.6, 60).unwrap();
        assert!(!report.holds);
        assert_eq!(report.witness.0, 0);
        assert_eq!(report.witness.1, 60);
    }
}

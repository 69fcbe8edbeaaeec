//! Absolute probability sequences.
//!
//! A sequence of stochastic vectors pi(t) is an absolute probability
//! sequence for a stochastic chain when pi(t)' = pi(t+1)' A(t) for every
//! t. It generalizes the stationary distribution of a fixed matrix; for
//! a static irreducible chain the constant sequence pi(t) = pi with
//! pi' A = pi' is one. Traces here are computed by backward propagation
//! from a terminal vector: fix pi(T) and roll the recursion down to t0.
//! No eigensolver is involved, only products.
//!
//! Positivity of such a sequence, uniformly in t, is what the rest of
//! the crate calls membership in the class P*. On a finite horizon that
//! can only be probed, not decided, so [`class_pstar_verdict`] reports
//! the empirical floor at doubling horizons together with its trend.

use crate::bounds::{eta_n, EtaBound, EtaParams};
use crate::chain_core::{
    backward_product, strong_aperiodicity_gamma, ChainWindow, Matrix, Stochasticity, TOL_STOCH,
};
use crate::error::{Error, Result};
use crate::format::format_f64;
use crate::reciprocity::approximate_reciprocity_beta;

/// Backward-propagated trace pi(t0), ..., pi(T).
#[derive(Debug, Clone, PartialEq)]
pub struct ApsTrace {
    /// First time index of the trace.
    pub t0: usize,
    /// Vectors pi(t0 + k) for k = 0..=T - t0.
    pub values: Vec<Vec<f64>>,
    /// Recomputed recursion residuals |pi(t)' - pi(t+1)' A(t)|_1 per
    /// step t in [t0, T).
    pub residuals: Vec<f64>,
    /// Smallest entry over the whole trace, terminal included.
    pub p_star: f64,
}

impl ApsTrace {
    /// Terminal time T.
    pub fn terminal_time(&self) -> usize {
        self.t0 + self.values.len() - 1
    }

    /// The terminal vector pi(T).
    pub fn terminal(&self) -> &[f64] {
        self.values.last().expect("trace is nonempty")
    }

    /// The vector pi(t) for t inside the trace range.
    pub fn value_at(&self, t: usize) -> Result<&[f64]> {
        if t < self.t0 || t > self.terminal_time() {
            return Err(Error::TimeRange(format!(
                "t = {t} outside the trace range [{}, {}]",
                self.t0,
                self.terminal_time()
            )));
        }
        Ok(&self.values[t - self.t0])
    }

    /// Largest recursion residual.
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Tab-separated rows `t pi_1 ... pi_n residual`; the terminal row
    /// carries residual 0.
    pub fn to_tsv(&self) -> String {
        let n = self.values[0].len();
        let mut out = String::new();
        out.push_str("# t");
        for i in 1..=n {
            out.push_str(&format!("\tpi_{i}"));
        }
        out.push_str("\tresidual\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{}", self.t0 + k));
            for x in v {
                out.push_str(&format!("\t{}", format_f64(*x)));
            }
            let r = self.residuals.get(k).copied().unwrap_or(0.0);
            out.push_str(&format!("\t{}\n", format_f64(r)));
        }
        out
    }
}

fn check_terminal(n: usize, terminal: &[f64]) -> Result<()> {
    if terminal.len() != n {
        return Err(Error::Dimension(format!(
            "terminal vector has length {}, chain dimension is {n}",
            terminal.len()
        )));
    }
    let mut sum = 0.0;
    for &v in terminal {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Domain(format!(
                "terminal entry {v} is negative or not finite"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "terminal vector sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn stochastic_matrix_at(chain: &ChainWindow, t: usize) -> Result<Matrix> {
    let m = chain.matrix_at(t)?;
    if m.classify(TOL_STOCH) != Stochasticity::Stochastic {
        return Err(Error::Domain(format!(
            "A({t}) is not row-stochastic; absolute probability traces need stochastic steps"
        )));
    }
    Ok(m)
}

/// Rolls pi(t)' = pi(t+1)' A(t) backward from pi(T) = `terminal` down to
/// t0. Every matrix on the way must be row-stochastic within tolerance.
pub fn aps_backward(
    chain: &ChainWindow,
    t0: usize,
    terminal_time: usize,
    terminal: &[f64],
) -> Result<ApsTrace> {
    if t0 < chain.t0() {
        return Err(Error::TimeRange(format!(
            "trace start {t0} precedes chain start {}",
            chain.t0()
        )));
    }
    if terminal_time < t0 {
        return Err(Error::TimeRange(format!(
            "terminal time {terminal_time} precedes trace start {t0}"
        )));
    }
    check_terminal(chain.n(), terminal)?;

    let steps = terminal_time - t0;
    let mut values = vec![terminal.to_vec()];
    for k in 0..steps {
        let t = terminal_time - 1 - k;
        let a = stochastic_matrix_at(chain, t)?;
        let next = values.last().expect("nonempty");
        values.push(a.left_apply(next)?);
    }
    values.reverse();

    let mut residuals = Vec::with_capacity(steps);
    let mut p_star = f64::INFINITY;
    for (k, v) in values.iter().enumerate() {
        for &x in v {
            p_star = p_star.min(x);
        }
        if k < steps {
            let a = stochastic_matrix_at(chain, t0 + k)?;
            let re = a.left_apply(&values[k + 1])?;
            let r: f64 = v.iter().zip(&re).map(|(a, b)| (a - b).abs()).sum();
            residuals.push(r);
        }
    }
    Ok(ApsTrace {
        t0,
        values,
        residuals,
        p_star,
    })
}

/// Sensitivity of pi(t0) to the terminal condition: for each horizon h,
/// propagates every basis vector back from t0 + h and reports the
/// largest pairwise l1 distance at t0. Equivalently, the largest
/// pairwise row distance of A(t0+h : t0). Horizons must be strictly
/// increasing; the product is built incrementally across them.
pub fn uniqueness_diagnostic(
    chain: &ChainWindow,
    t0: usize,
    horizons: &[usize],
) -> Result<Vec<f64>> {
    if horizons.is_empty() {
        return Err(Error::Domain("at least one horizon is required".into()));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("horizons must be strictly increasing".into()));
    }
    let mut spreads = Vec::with_capacity(horizons.len());
    let mut prod = backward_product(chain, t0, t0)?;
    let mut reached = t0;
    for &h in horizons {
        let target = t0 + h;
        while reached < target {
            prod = chain.matrix_at(reached)?.matmul(&prod)?;
            reached += 1;
        }
        spreads.push(max_pairwise_row_distance(&prod));
    }
    Ok(spreads)
}

fn max_pairwise_row_distance(m: &Matrix) -> f64 {
    let n = m.n();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = m
                .row(i)
                .iter()
                .zip(m.row(j))
                .map(|(a, b)| (a - b).abs())
                .sum();
            worst = worst.max(d);
        }
    }
    worst
}

/// Evidence gathered by [`class_pstar_verdict`].
#[derive(Debug, Clone, PartialEq)]
pub struct PStarReport {
    /// Reciprocity weight the certificate was computed at.
    pub p0: f64,
    /// Smallest diagonal entry over the inspected horizon.
    pub gamma: f64,
    /// Total deviation from stochasticity over the inspected horizon.
    pub delta_dev: f64,
    /// Certified excess at p0 over the inspected horizon.
    pub beta_required: f64,
    /// Recursive theoretical floor at the measured parameters, when
    /// they sit inside its domain (gamma and p0 strictly inside (0,1)).
    pub eta: Option<EtaBound>,
    /// Horizons probed: (h, 2h, 4h).
    pub horizons: [usize; 3],
    /// Empirical floor min_{t,i} pi_i(t) of the uniform-terminal trace
    /// at each probed horizon.
    pub p_star_by_horizon: [f64; 3],
    /// Horizon-bounded verdict: positive diagonal and a floor that does
    /// not collapse between h and 4h.
    pub in_pstar: bool,
}

impl PStarReport {
    /// Empirical floor at the longest probed horizon.
    pub fn p_star_empirical(&self) -> f64 {
        self.p_star_by_horizon[2]
    }

    /// Key-value text block for reporting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("p0 {}\n", format_f64(self.p0)));
        out.push_str(&format!("gamma {}\n", format_f64(self.gamma)));
        out.push_str(&format!("delta_dev {}\n", format_f64(self.delta_dev)));
        out.push_str(&format!(
            "beta_required {}\n",
            format_f64(self.beta_required)
        ));
        match &self.eta {
            Some(b) => {
                out.push_str(&format!("ln_eta {}\n", format_f64(b.ln_value)));
                out.push_str(&format!(
                    "eta {}\n",
                    if b.underflowed {
                        "underflow".to_string()
                    } else {
                        format_f64(b.value)
                    }
                ));
            }
            None => out.push_str("ln_eta none\neta none\n"),
        }
        for (h, p) in self.horizons.iter().zip(&self.p_star_by_horizon) {
            out.push_str(&format!("p_star_at_{h} {}\n", format_f64(*p)));
        }
        out.push_str(&format!("in_pstar {}\n", self.in_pstar));
        out
    }
}

/// Collects horizon-bounded evidence for membership in the class of
/// chains with a uniformly positive absolute probability sequence.
///
/// The empirical floor uses the uniform terminal vector: positivity is
/// about the existence of some positive sequence, and the uniform
/// terminal gives the least biased probe. Probing happens at horizons
/// h, 2h, 4h; the verdict demands a positive diagonal over the horizon
/// and a floor at 4h that kept at least half its value at h, which
/// separates a positive limit from geometric collapse.
pub fn class_pstar_verdict(chain: &ChainWindow, p0: f64, horizon: usize) -> Result<PStarReport> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let t0 = chain.t0();
    let n = chain.n();

    // Materialize the inspected range so window statistics line up with
    // the certificate horizon.
    let mats: Vec<Matrix> = (t0..t0 + horizon)
        .map(|t| chain.matrix_at(t))
        .collect::<Result<_>>()?;
    let inspected = ChainWindow::new(t0, mats, crate::chain_core::Extension::RepeatLast)?;
    let gamma = strong_aperiodicity_gamma(&inspected);
    let delta_dev = crate::chain_core::deviation_from_stochasticity(&inspected)?;
    let beta_required = approximate_reciprocity_beta(chain, p0, horizon)?.beta_required;

    let uniform = vec![1.0 / n as f64; n];
    let horizons = [horizon, 2 * horizon, 4 * horizon];
    let mut p_star_by_horizon = [0.0; 3];
    for (slot, &h) in p_star_by_horizon.iter_mut().zip(&horizons) {
        *slot = aps_backward(chain, t0, t0 + h, &uniform)?.p_star;
    }

    let eta = if gamma > 0.0 && gamma < 1.0 && p0 < 1.0 {
        // A larger beta only weakens the bound, so raising an exact
        // zero to a token positive value keeps the floor valid.
        Some(eta_n(&EtaParams {
            n,
            gamma,
            p0,
            beta: beta_required.max(1e-12),
            delta: delta_dev,
        })?)
    } else {
        None
    };

    let in_pstar = gamma > 0.0
        && p_star_by_horizon[2] > 0.0
        && p_star_by_horizon[2] >= 0.5 * p_star_by_horizon[0];
    Ok(PStarReport {
        p0,
        gamma,
        delta_dev,
        beta_required,
        eta,
        horizons,
        p_star_by_horizon,
        in_pstar,
    })
}

/// Outcome of the forward ergodicity probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityReport {
    /// Whether all rows of A(t0+horizon : t0) coincide within tol.
    pub ergodic_on_horizon: bool,
    /// Largest pairwise l1 row distance of that product.
    pub max_row_distance: f64,
    /// Row average of the product when ergodic; the common limit row.
    pub pi: Option<Vec<f64>>,
}

/// Checks whether the backward product over the horizon has collapsed
/// to (nearly) rank one: every row of A(t0+horizon : t0) within tol of
/// each other in l1.
pub fn ergodicity_check(
    chain: &ChainWindow,
    t0: usize,
    horizon: usize,
    tol: f64,
) -> Result<ErgodicityReport> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol = {tol} must be positive")));
    }
    let prod = backward_product(chain, t0, t0 + horizon)?;
    let max_row_distance = max_pairwise_row_distance(&prod);
    let ergodic = max_row_distance <= tol;
    let pi = if ergodic {
        let n = prod.n();
        let mut avg = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                avg[j] += prod.get(i, j) / n as f64;
            }
        }
        Some(avg)
    } else {
        None
    };
    Ok(ErgodicityReport {
        ergodic_on_horizon: ergodic,
        max_row_distance,
        pi,
    })
}

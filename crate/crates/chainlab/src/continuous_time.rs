//! Piecewise-constant continuous-time chains.
//!
//! A continuous-time chain is driven by generators G(tau) with zero row
//! sums and nonnegative off-diagonal entries: xdot = G(tau) x. Over a
//! piecewise-constant segment the transition operator is a matrix
//! exponential, and the operator over any interval is the ordered
//! product of segment exponentials. Transition operators are row
//! stochastic, so every discrete-time notion in this crate applies to a
//! sampled continuous chain.
//!
//! The cross-cut weight of a transition operator is sandwiched between
//! multiples of the integrated generator cross flow, which is what ties
//! the continuous reciprocity certificate to the discrete one: both
//! scan the same windowed inequality, one over integrals, one over
//! sampled operators.

use crate::chain_core::{cut_flow, ChainWindow, CutFlow, Extension, Matrix, SubsetCut, MAX_N};
use crate::error::{Error, Result};
use crate::flow_graph::FlowGraph;
use crate::format::format_f64;
use crate::reciprocity::{cut_mask_set, CutScan, ReciprocityCertificate, WindowScan};

/// Entries of a transition operator may round this far below zero
/// before composition is considered corrupt.
pub const CLAMP_TOL: f64 = 1e-12;
/// Row sums of a transition operator must land this close to 1.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Discretization consistency: a sampled chain's recomposed product
/// must match the direct transition operator this closely.
pub const COMPOSITION_TOL: f64 = 1e-9;

/// Zero-row-sum generator with nonnegative off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    n: usize,
    data: Vec<f64>,
}

impl Generator {
    /// Validates and stores a generator given by rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n > MAX_N {
            return Err(Error::Dimension(format!(
                "generator dimension {n} outside 1..={MAX_N}"
            )));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "generator row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            let mut scale = 1.0f64;
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Domain(format!(
                        "generator entry ({i}, {j}) is not finite"
                    )));
                }
                if i != j && v < 0.0 {
                    return Err(Error::Domain(format!(
                        "off-diagonal generator entry ({i}, {j}) = {v} is negative"
                    )));
                }
                sum += v;
                scale += v.abs();
            }
            if sum.abs() > 1e-9 * scale {
                return Err(Error::Domain(format!(
                    "generator row {i} sums to {sum}, expected 0"
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    /// Dimension n.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry g_ij.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Largest intensity max_i |g_ii|. Since rows sum to zero this is
    /// also the largest total off-diagonal rate of any row.
    pub fn intensity(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    /// Off-diagonal block totals across a cut, row-major ascending.
    pub fn cut_flow(&self, cut: &SubsetCut) -> Result<CutFlow> {
        if cut.n() != self.n {
            return Err(Error::Dimension(format!(
                "cut over {} agents applied to a {}-agent generator",
                cut.n(),
                self.n
            )));
        }
        let mut into_s = 0.0;
        let mut into_sbar = 0.0;
        for i in 0..self.n {
            let in_s = cut.contains(i);
            for j in 0..self.n {
                if j == i || cut.contains(j) == in_s {
                    continue;
                }
                if in_s {
                    into_s += self.get(i, j);
                } else {
                    into_sbar += self.get(i, j);
                }
            }
        }
        Ok(CutFlow { into_s, into_sbar })
    }
}

/// One constant-generator stretch of continuous time.
#[derive(Debug, Clone, PartialEq)]
pub struct CtSegment {
    /// Length of the stretch, strictly positive.
    pub duration: f64,
    /// Generator active throughout.
    pub generator: Generator,
}

/// Piecewise-constant continuous-time chain on [t0, t0 + total].
#[derive(Debug, Clone, PartialEq)]
pub struct CtChain {
    t0: f64,
    segments: Vec<CtSegment>,
}

impl CtChain {
    /// Validates segment dimensions and durations.
    pub fn new(t0: f64, segments: Vec<CtSegment>) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::Domain(format!("start time {t0} is not finite")));
        }
        if segments.is_empty() {
            return Err(Error::Domain("a chain needs at least one segment".into()));
        }
        let n = segments[0].generator.n();
        for (k, seg) in segments.iter().enumerate() {
            if seg.generator.n() != n {
                return Err(Error::Dimension(format!(
                    "segment {k} has dimension {}, segment 0 has {n}",
                    seg.generator.n()
                )));
            }
            if !(seg.duration > 0.0) || !seg.duration.is_finite() {
                return Err(Error::Domain(format!(
                    "segment {k} duration {} must be positive and finite",
                    seg.duration
                )));
            }
        }
        Ok(Self { t0, segments })
    }

    /// Dimension n.
    pub fn n(&self) -> usize {
        self.segments[0].generator.n()
    }

    /// Start of the covered interval.
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// End of the covered interval.
    pub fn end_time(&self) -> f64 {
        self.breakpoints().last().copied().expect("nonempty")
    }

    /// Segment boundaries t0 = b_0 < b_1 < ... < b_k, cumulative in
    /// storage order so interval arithmetic is reproducible.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut t = self.t0;
        out.push(t);
        for seg in &self.segments {
            t += seg.duration;
            out.push(t);
        }
        out
    }

    /// Segments of the chain.
    pub fn segments(&self) -> &[CtSegment] {
        &self.segments
    }

    /// Pieces (dt, generator) covering [a, b], clipped to segment
    /// boundaries, in time order. Zero-length clips are dropped.
    fn pieces(&self, a: f64, b: f64) -> Result<Vec<(f64, &Generator)>> {
        let end = self.end_time();
        if !(self.t0..=end).contains(&a) || !(self.t0..=end).contains(&b) || a > b {
            return Err(Error::TimeRange(format!(
                "interval [{a}, {b}] not inside [{}, {end}]",
                self.t0
            )));
        }
        let bp = self.breakpoints();
        let mut out = Vec::new();
        for (k, seg) in self.segments.iter().enumerate() {
            let lo = a.max(bp[k]);
            let hi = b.min(bp[k + 1]);
            if hi > lo {
                out.push((hi - lo, &seg.generator));
            }
        }
        Ok(out)
    }

    /// Largest generator intensity over all segments: the uniform rate
    /// bound M with integral of |g_ii| at most M * dt on any interval.
    pub fn uniform_bound_m(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.generator.intensity())
            .fold(0.0, f64::max)
    }

    /// Integrated cut flow of the generator over [a, b], exact on the
    /// piecewise-constant segments.
    pub fn integrated_cut_flow(&self, cut: &SubsetCut, a: f64, b: f64) -> Result<CutFlow> {
        let mut into_s = 0.0;
        let mut into_sbar = 0.0;
        for (dt, g) in self.pieces(a, b)? {
            let f = g.cut_flow(cut)?;
            into_s += dt * f.into_s;
            into_sbar += dt * f.into_sbar;
        }
        Ok(CutFlow { into_s, into_sbar })
    }
}

/// Row-stochastic transition operator Phi(to, from).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOperator {
    /// The operator itself.
    pub matrix: Matrix,
    /// Number of segment exponentials composed.
    pub pieces: usize,
    /// Entries that rounded slightly negative and were clamped to zero.
    pub clamped: usize,
}

/// Computes Phi(to, from) as the ordered product of segment
/// exponentials, later times multiplying on the left.
///
/// Exponentials of generators are nonnegative in exact arithmetic;
/// entries down to -1e-12 are treated as rounding and clamped, anything
/// lower is reported as an internal error, as is a row sum off by more
/// than 1e-10.
pub fn transition(chain: &CtChain, from: f64, to: f64) -> Result<TransitionOperator> {
    let n = chain.n();
    let pieces = chain.pieces(from, to)?;
    let mut acc = raw_identity(n);
    for &(dt, g) in &pieces {
        let scaled: Vec<f64> = g.data.iter().map(|v| v * dt).collect();
        let e = expm(n, &scaled)?;
        acc = raw_mul(n, &e, &acc);
    }
    let mut clamped = 0usize;
    for v in acc.iter_mut() {
        if *v < 0.0 {
            if *v < -CLAMP_TOL {
                return Err(Error::Internal(format!(
                    "transition entry {v} is negative beyond the clamp tolerance"
                )));
            }
            *v = 0.0;
            clamped += 1;
        }
    }
    for i in 0..n {
        let sum: f64 = acc[i * n..(i + 1) * n].iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Internal(format!(
                "transition row {i} sums to {sum}, expected 1 within {ROW_SUM_TOL}"
            )));
        }
    }
    Ok(TransitionOperator {
        matrix: Matrix::from_flat(n, acc)?,
        pieces: pieces.len(),
        clamped,
    })
}

/// Evenly spaced sampling times covering the whole chain, endpoints
/// exact.
pub fn uniform_grid(chain: &CtChain, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Domain("a grid needs at least one step".into()));
    }
    let (a, b) = (chain.t0(), chain.end_time());
    let mut out: Vec<f64> = (0..steps)
        .map(|k| a + (b - a) * k as f64 / steps as f64)
        .collect();
    out.push(b);
    Ok(out)
}

/// Samples the chain on a strictly increasing grid, returning the
/// discrete chain of transition operators A_k = Phi(g_{k+1}, g_k).
///
/// Grids need not align with segment boundaries; intervals split
/// segments exactly. The recomposed product of the sampled operators is
/// checked against the direct end-to-end operator and a mismatch beyond
/// 1e-9 is an internal error.
pub fn sample_discrete(chain: &CtChain, grid: &[f64]) -> Result<ChainWindow> {
    if grid.len() < 2 {
        return Err(Error::Domain("a grid needs at least two points".into()));
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain("grid times must be strictly increasing".into()));
    }
    let mut mats = Vec::with_capacity(grid.len() - 1);
    for w in grid.windows(2) {
        mats.push(transition(chain, w[0], w[1])?.matrix);
    }
    let direct = transition(chain, grid[0], *grid.last().expect("len >= 2"))?.matrix;
    let mut recomposed = Matrix::identity(chain.n());
    for m in &mats {
        recomposed = m.matmul(&recomposed)?;
    }
    let gap = direct.max_abs_diff(&recomposed);
    if gap > COMPOSITION_TOL {
        return Err(Error::Internal(format!(
            "sampled operators recompose {gap:.3e} away from the direct transition"
        )));
    }
    ChainWindow::new(0, mats, Extension::Identity)
}

/// Windowed reciprocity certificate over integrated generator flows.
///
/// The grid splits the covered time span into intervals; the scan is
/// the discrete one with per-interval integrals in place of per-step
/// flows, so the witness window is a pair of interval indices.
pub fn ct_reciprocity_beta(
    chain: &CtChain,
    p0: f64,
    grid: &[f64],
) -> Result<ReciprocityCertificate> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::Domain(format!("p0 = {p0} not in (0, 1]")));
    }
    if grid.len() < 2 {
        return Err(Error::Domain("a grid needs at least two points".into()));
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain("grid times must be strictly increasing".into()));
    }
    let n = chain.n();
    let intervals = grid.len() - 1;
    if n < 2 {
        return Ok(ReciprocityCertificate {
            p0,
            horizon: intervals,
            beta_required: 0.0,
            witness: None,
            exhaustive: true,
        });
    }
    let (masks, exhaustive) = cut_mask_set(n);
    let mut best = CutScan::empty();
    for &mask in &masks {
        let cut = SubsetCut::new(n, mask)?;
        let mut fwd = WindowScan::new(0);
        let mut rev = WindowScan::new(0);
        for (k, w) in grid.windows(2).enumerate() {
            let f = chain.integrated_cut_flow(&cut, w[0], w[1])?;
            fwd.push(k, p0 * f.into_s - f.into_sbar);
            rev.push(k, p0 * f.into_sbar - f.into_s);
        }
        let mut scan = CutScan::from(mask, fwd);
        scan.merge(CutScan::from(cut.complement().mask(), rev));
        best.merge(scan);
    }
    let (beta_required, witness) = if best.best > 0.0 {
        let (mask, a, b) = best.window.expect("positive excess carries a window");
        (best.best, Some((SubsetCut::new(n, mask)?, a, b)))
    } else {
        (0.0, None)
    };
    Ok(ReciprocityCertificate {
        p0,
        horizon: intervals,
        beta_required,
        witness,
        exhaustive,
    })
}

/// Cross-cut weight of a transition operator sandwiched by integrated
/// generator flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    /// Integrated generator flow over the interval.
    pub integral: CutFlow,
    /// Cross-cut weight of Phi(to, from).
    pub flow: CutFlow,
    /// Lower multiplier exp(-2 M dt).
    pub lower_factor: f64,
    /// Upper multiplier exp((n - 1) M dt).
    pub upper_factor: f64,
    /// Both orientations landed inside their sandwich.
    pub holds: bool,
}

/// Checks lower * integral <= flow <= upper * integral in both cut
/// orientations for Phi(to, from).
///
/// Lower constant: each crossing entry of Phi accumulates at rate at
/// least g_ij(s) times a diagonal of Phi(s, from), and diagonals as well
/// as the accumulated entry decay no faster than exp(-M dt) each, which
/// yields exp(-2 M dt) times the integral. Upper constant: the crossing
/// mass grows at rate at most the instantaneous cross flow plus
/// (n - 1) M times the mass already present, so by comparison it stays
/// within exp((n - 1) M dt) times the integral.
pub fn sandwich_check(
    chain: &CtChain,
    cut: &SubsetCut,
    from: f64,
    to: f64,
) -> Result<SandwichReport> {
    let integral = chain.integrated_cut_flow(cut, from, to)?;
    let phi = transition(chain, from, to)?;
    let flow = cut_flow(&phi.matrix, cut)?;
    let dt = to - from;
    let m = chain.uniform_bound_m();
    let lower_factor = (-2.0 * m * dt).exp();
    let upper_factor = ((chain.n() as f64 - 1.0) * m * dt).exp();
    let within = |f: f64, i: f64| -> bool {
        let slack = 1e-12 * (1.0 + i.abs());
        f >= lower_factor * i - slack && f <= upper_factor * i + slack
    };
    let holds = within(flow.into_s, integral.into_s) && within(flow.into_sbar, integral.into_sbar);
    Ok(SandwichReport {
        integral,
        flow,
        lower_factor,
        upper_factor,
        holds,
    })
}

/// Flow graph with integrated weights w_ij = integral of g_ij + g_ji
/// over the whole chain. The graph's horizon field counts segments.
pub fn ct_flow_graph(chain: &CtChain, threshold: f64) -> Result<FlowGraph> {
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!(
            "threshold = {threshold} must be positive"
        )));
    }
    let n = chain.n();
    let total = chain.end_time() - chain.t0();
    let mid = chain.t0() + total / 2.0;
    let mut weights = vec![0.0; n * n];
    let mut at_mid = vec![0.0; n * n];
    let bp = chain.breakpoints();
    for (k, seg) in chain.segments().iter().enumerate() {
        let head = (mid.min(bp[k + 1]) - bp[k]).max(0.0);
        for i in 0..n {
            for j in i + 1..n {
                let rate = seg.generator.get(i, j) + seg.generator.get(j, i);
                weights[i * n + j] += seg.duration * rate;
                at_mid[i * n + j] += head * rate;
            }
        }
    }
    let tail = (total - total / 2.0).max(f64::MIN_POSITIVE);
    let slopes = weights
        .iter()
        .zip(&at_mid)
        .map(|(w, h)| (w - h) / tail)
        .collect();
    Ok(FlowGraph::from_parts(
        n,
        chain.segments().len(),
        threshold,
        weights,
        slopes,
    ))
}

/// Serializes a chain in the piecewise text format: a header with `n`,
/// `t0` and `segments`, then one `duration` line and n generator rows
/// per segment.
pub fn write_ct_chain(chain: &CtChain) -> String {
    let n = chain.n();
    let mut out = String::new();
    out.push_str(&format!("n {n}\n"));
    out.push_str(&format!("t0 {}\n", format_f64(chain.t0())));
    out.push_str(&format!("segments {}\n", chain.segments().len()));
    for seg in chain.segments() {
        out.push_str(&format!("duration {}\n", format_f64(seg.duration)));
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format_f64(seg.generator.get(i, j))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Parses the piecewise text format. Blank lines and `#` comments are
/// skipped; header keys may appear in any order before the first
/// segment.
pub fn parse_ct_chain(text: &str) -> Result<CtChain> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .peekable();

    let mut n: Option<usize> = None;
    let mut t0 = 0.0f64;
    let mut count: Option<usize> = None;
    while let Some(&line) = lines.peek() {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        match key {
            "n" | "t0" | "segments" => {
                let value = parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("header key `{key}` has no value")))?;
                if parts.next().is_some() {
                    return Err(Error::Parse(format!(
                        "header key `{key}` has trailing tokens"
                    )));
                }
                match key {
                    "n" => {
                        n = Some(value.parse().map_err(|_| {
                            Error::Parse(format!("cannot parse dimension `{value}`"))
                        })?)
                    }
                    "t0" => {
                        t0 = value.parse().map_err(|_| {
                            Error::Parse(format!("cannot parse start time `{value}`"))
                        })?
                    }
                    _ => {
                        count = Some(value.parse().map_err(|_| {
                            Error::Parse(format!("cannot parse segment count `{value}`"))
                        })?)
                    }
                }
                lines.next();
            }
            _ => break,
        }
    }
    let n = n.ok_or_else(|| Error::Parse("missing header key `n`".into()))?;
    let count = count.ok_or_else(|| Error::Parse("missing header key `segments`".into()))?;
    if count == 0 {
        return Err(Error::Parse("segment count must be positive".into()));
    }

    let mut segments = Vec::with_capacity(count);
    for k in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing `duration` line for segment {k}")))?;
        let duration = line
            .strip_prefix("duration")
            .map(str::trim)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse(format!("expected `duration <value>`, found `{line}`")))?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines.next().ok_or_else(|| {
                Error::Parse(format!("segment {k} is missing generator row {i}"))
            })?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("cannot parse entry `{tok}`")))
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "segment {k} row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            rows.push(row);
        }
        segments.push(CtSegment {
            duration,
            generator: Generator::from_rows(&rows)?,
        });
    }
    if let Some(extra) = lines.next() {
        return Err(Error::Parse(format!(
            "unexpected content after the last segment: `{extra}`"
        )));
    }
    CtChain::new(t0, segments)
}

/// Reads a chain from a file in the piecewise text format.
pub fn load_ct_chain(path: &std::path::Path) -> Result<CtChain> {
    parse_ct_chain(&std::fs::read_to_string(path)?)
}

/// Writes a chain to a file in the piecewise text format.
pub fn save_ct_chain(chain: &CtChain, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, write_ct_chain(chain))?;
    Ok(())
}

fn raw_identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn raw_mul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn one_norm(n: usize, a: &[f64]) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Degree-13 Pade approximant with scaling and squaring, the standard
/// double-precision choice: scale A by 2^-s until its 1-norm is below
/// 5.371920351148152, evaluate the (13, 13) approximant, square s times.
fn expm(n: usize, a: &[f64]) -> Result<Vec<f64>> {
    const THETA_13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let norm = one_norm(n, a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(s);
    let a: Vec<f64> = a.iter().map(|v| v * scale).collect();

    let a2 = raw_mul(n, &a, &a);
    let a4 = raw_mul(n, &a2, &a2);
    let a6 = raw_mul(n, &a2, &a4);
    let id = raw_identity(n);

    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n * n {
            out[i] = c6 * a6[i] + c4 * a4[i] + c2 * a2[i] + c0 * id[i];
        }
        out
    };
    // U = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
    let mut u_inner = raw_mul(n, &a6, &lin(B[13], B[11], B[9], 0.0));
    let low = lin(B[7], B[5], B[3], B[1]);
    for i in 0..n * n {
        u_inner[i] += low[i];
    }
    let u = raw_mul(n, &a, &u_inner);
    // V = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let mut v = raw_mul(n, &a6, &lin(B[12], B[10], B[8], 0.0));
    let low = lin(B[6], B[4], B[2], B[0]);
    for i in 0..n * n {
        v[i] += low[i];
    }

    // (V - U) X = (V + U)
    let mut lhs = vec![0.0; n * n];
    let mut rhs = vec![0.0; n * n];
    for i in 0..n * n {
        lhs[i] = v[i] - u[i];
        rhs[i] = v[i] + u[i];
    }
    let mut x = solve_multi(n, lhs, rhs)?;
    for _ in 0..s {
        x = raw_mul(n, &x, &x);
    }
    Ok(x)
}

/// Gaussian elimination with partial pivoting, solving A X = B for a
/// full n x n right-hand side in place.
fn solve_multi(n: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col]
                    .abs()
                    .partial_cmp(&a[r2 * n + col].abs())
                    .expect("pivot magnitudes are finite")
            })
            .expect("nonempty range");
        if a[pivot_row * n + col].abs() < 1e-300 {
            return Err(Error::Internal(
                "singular system in the exponential solver".into(),
            ));
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
                b.swap(col * n + j, pivot_row * n + j);
            }
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            for j in 0..n {
                b[row * n + j] -= factor * b[col * n + j];
            }
        }
    }
    for col in (0..n).rev() {
        let pivot = a[col * n + col];
        for j in 0..n {
            let mut sum = b[col * n + j];
            for k in col + 1..n {
                sum -= a[col * n + k] * b[k * n + j];
            }
            b[col * n + j] = sum / pivot;
        }
    }
    Ok(b)
}

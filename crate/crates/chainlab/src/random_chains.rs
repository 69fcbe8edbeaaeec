//! Seeded random chain families.
//!
//! Every family draws A(t) from a counter-based stream keyed by
//! (seed, purpose, t): realizing time t never consumes state shared with
//! any other time, so generation is bit-identical across runs, thread
//! counts, and query order, and a prefix of a longer run equals the
//! shorter run. Each family also exposes its expected chain in closed
//! form so simulations of realizations can be compared against the mean
//! dynamics.

use crate::chain_core::{ChainWindow, Extension, Matrix, MAX_N};
use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream purposes; distinct keys keep draws for different jobs
/// independent even at equal times.
const PURPOSE_STEP: u64 = 1;
const PURPOSE_BASE: u64 = 2;
const PURPOSE_SAMPLE: u64 = 3;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based pseudorandom stream (splitmix64 core). Cheap to key,
/// cheap to fork, and entirely deterministic in its key words.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    /// Derives a stream from a seed and a list of key words.
    pub fn keyed(seed: u64, words: &[u64]) -> Self {
        let mut s = mix64(seed ^ GOLDEN);
        for &w in words {
            s = mix64(s ^ mix64(w.wrapping_add(GOLDEN)));
        }
        Self { state: s }
    }

    /// Next 64 raw bits.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in 0..bound via multiply-shift.
    pub fn index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }
}

/// Random chain families with closed-form expected chains.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Each agent keeps `self_weight` on itself and puts the rest on one
    /// uniformly chosen other agent, independently per agent and step.
    LazyRandomWalk {
        /// Weight kept on the diagonal, in [0, 1].
        self_weight: f64,
    },
    /// With probability `pair_prob` one uniformly random unordered pair
    /// averages symmetrically with weight `mixing`; otherwise A(t) = I.
    GossipPairs {
        /// Probability of a pair activating, in [0, 1].
        pair_prob: f64,
        /// Off-diagonal weight the active pair exchanges, in [0, 1].
        mixing: f64,
    },
    /// Agent 0 listens to nobody; every other agent places `influence`
    /// on agent 0. Deterministic, and deliberately not reciprocal.
    OneDirectionalElite {
        /// Weight agents place on agent 0, in [0, 1].
        influence: f64,
    },
    /// Contiguous blocks run independent within-block gossip; no weight
    /// ever crosses block boundaries.
    BlockDiagonalMixers {
        /// Number of contiguous blocks, between 1 and n.
        blocks: usize,
        /// Per-block pair activation probability, in [0, 1].
        pair_prob: f64,
        /// Off-diagonal weight exchanged by an active pair, in [0, 1].
        mixing: f64,
    },
    /// A fixed seeded stochastic base matrix blended a random amount
    /// toward the identity each step: A(t) = (1-c) A0 + c I with
    /// c uniform in [0, blend_max].
    StaticPerturbed {
        /// Probability each off-diagonal base entry is present, in [0, 1].
        sparsity: f64,
        /// Upper end of the per-step identity blend, in [0, 1].
        blend_max: f64,
    },
}

impl Family {
    /// Canonical family name used in files and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Family::LazyRandomWalk { .. } => "lazy-random-walk",
            Family::GossipPairs { .. } => "gossip-pairs",
            Family::OneDirectionalElite { .. } => "one-directional-elite",
            Family::BlockDiagonalMixers { .. } => "block-diagonal-mixers",
            Family::StaticPerturbed { .. } => "static-perturbed",
        }
    }

    /// Parameters in `key=value,key=value` form, round-tripping exactly.
    pub fn params_string(&self) -> String {
        match self {
            Family::LazyRandomWalk { self_weight } => format!("self_weight={self_weight}"),
            Family::GossipPairs { pair_prob, mixing } => {
                format!("pair_prob={pair_prob},mixing={mixing}")
            }
            Family::OneDirectionalElite { influence } => format!("influence={influence}"),
            Family::BlockDiagonalMixers {
                blocks,
                pair_prob,
                mixing,
            } => format!("blocks={blocks},pair_prob={pair_prob},mixing={mixing}"),
            Family::StaticPerturbed {
                sparsity,
                blend_max,
            } => format!("sparsity={sparsity},blend_max={blend_max}"),
        }
    }

    fn check_unit(name: &str, v: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::FamilyParams(format!("{name} = {v} not in [0, 1]")));
        }
        Ok(())
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Family::LazyRandomWalk { self_weight } => {
                Self::check_unit("self_weight", *self_weight)?;
                if n < 2 {
                    return Err(Error::FamilyParams(
                        "lazy-random-walk needs n >= 2".into(),
                    ));
                }
            }
            Family::GossipPairs { pair_prob, mixing } => {
                Self::check_unit("pair_prob", *pair_prob)?;
                Self::check_unit("mixing", *mixing)?;
                if n < 2 {
                    return Err(Error::FamilyParams("gossip-pairs needs n >= 2".into()));
                }
            }
            Family::OneDirectionalElite { influence } => {
                Self::check_unit("influence", *influence)?;
                if n < 2 {
                    return Err(Error::FamilyParams(
                        "one-directional-elite needs n >= 2".into(),
                    ));
                }
            }
            Family::BlockDiagonalMixers {
                blocks,
                pair_prob,
                mixing,
            } => {
                Self::check_unit("pair_prob", *pair_prob)?;
                Self::check_unit("mixing", *mixing)?;
                if *blocks == 0 || *blocks > n {
                    return Err(Error::FamilyParams(format!(
                        "blocks = {blocks} not in 1..={n}"
                    )));
                }
            }
            Family::StaticPerturbed {
                sparsity,
                blend_max,
            } => {
                Self::check_unit("sparsity", *sparsity)?;
                Self::check_unit("blend_max", *blend_max)?;
            }
        }
        Ok(())
    }
}

/// Parses a family from its name and a `key=value,...` parameter string.
pub fn parse_family(name: &str, params: &str) -> Result<Family> {
    let mut map = std::collections::BTreeMap::new();
    for piece in params.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = piece.split_once('=').ok_or_else(|| {
            Error::Parse(format!("parameter `{piece}` is not of the form key=value"))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut take_f64 = |key: &str| -> Result<f64> {
        let raw = map
            .remove(key)
            .ok_or_else(|| Error::Parse(format!("family {name} needs parameter {key}")))?;
        raw.parse::<f64>()
            .map_err(|_| Error::Parse(format!("parameter {key} = `{raw}` is not a number")))
    };
    let family = match name {
        "lazy-random-walk" => Family::LazyRandomWalk {
            self_weight: take_f64("self_weight")?,
        },
        "gossip-pairs" => Family::GossipPairs {
            pair_prob: take_f64("pair_prob")?,
            mixing: take_f64("mixing")?,
        },
        "one-directional-elite" => Family::OneDirectionalElite {
            influence: take_f64("influence")?,
        },
        "block-diagonal-mixers" => {
            let blocks = take_f64("blocks")?;
            if blocks.fract() != 0.0 || blocks < 0.0 {
                return Err(Error::Parse(format!("blocks = {blocks} is not an integer")));
            }
            Family::BlockDiagonalMixers {
                blocks: blocks as usize,
                pair_prob: take_f64("pair_prob")?,
                mixing: take_f64("mixing")?,
            }
        }
        "static-perturbed" => Family::StaticPerturbed {
            sparsity: take_f64("sparsity")?,
            blend_max: take_f64("blend_max")?,
        },
        other => {
            return Err(Error::Parse(format!(
                "unknown family `{other}` (known: lazy-random-walk, gossip-pairs, \
                 one-directional-elite, block-diagonal-mixers, static-perturbed)"
            )))
        }
    };
    if !map.is_empty() {
        let extra: Vec<_> = map.keys().cloned().collect();
        return Err(Error::Parse(format!(
            "unexpected parameters for {name}: {}",
            extra.join(", ")
        )));
    }
    Ok(family)
}

/// A fully keyed generator: family, dimension, seed. Realization at any
/// time t is a pure function of these three values.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    family: Family,
    n: usize,
    seed: u64,
}

impl GeneratorSpec {
    /// Validates parameters against the dimension.
    pub fn new(family: Family, n: usize, seed: u64) -> Result<Self> {
        if n == 0 || n > MAX_N {
            return Err(Error::Dimension(format!(
                "dimension {n} outside supported range 1..={MAX_N}"
            )));
        }
        family.validate(n)?;
        Ok(Self { family, n, seed })
    }

    /// Family of this generator.
    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Dimension n.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Draws A(t). Fresh stream per t; no cross-time state.
    pub fn realize(&self, t: usize) -> Result<Matrix> {
        let n = self.n;
        let mut rng = CounterRng::keyed(self.seed, &[PURPOSE_STEP, t as u64]);
        let rows = match &self.family {
            Family::LazyRandomWalk { self_weight } => {
                let mut rows = vec![vec![0.0; n]; n];
                for (i, row) in rows.iter_mut().enumerate() {
                    let pick = rng.index(n - 1);
                    let j = if pick < i { pick } else { pick + 1 };
                    row[i] = *self_weight;
                    row[j] += 1.0 - *self_weight;
                }
                rows
            }
            Family::GossipPairs { pair_prob, mixing } => {
                let mut rows = identity_rows(n);
                if rng.next_f64() < *pair_prob {
                    let (i, j) = unrank_pair(n, rng.index(n * (n - 1) / 2));
                    mix_pair(&mut rows, i, j, *mixing);
                }
                rows
            }
            Family::OneDirectionalElite { influence } => {
                let mut rows = identity_rows(n);
                for (i, row) in rows.iter_mut().enumerate().skip(1) {
                    row[i] = 1.0 - *influence;
                    row[0] = *influence;
                }
                rows
            }
            Family::BlockDiagonalMixers {
                blocks,
                pair_prob,
                mixing,
            } => {
                let mut rows = identity_rows(n);
                for (start, size) in block_layout(n, *blocks) {
                    if size < 2 {
                        continue;
                    }
                    if rng.next_f64() < *pair_prob {
                        let (a, b) = unrank_pair(size, rng.index(size * (size - 1) / 2));
                        mix_pair(&mut rows, start + a, start + b, *mixing);
                    }
                }
                rows
            }
            Family::StaticPerturbed { blend_max, .. } => {
                let base = self.perturbation_base()?;
                let c = rng.uniform(0.0, *blend_max);
                let mut rows = vec![vec![0.0; n]; n];
                for (i, row) in rows.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = (1.0 - c) * base.get(i, j) + if i == j { c } else { 0.0 };
                    }
                }
                rows
            }
        };
        Matrix::from_rows(&rows)
    }

    /// The seeded base matrix of the static-perturbed family.
    fn perturbation_base(&self) -> Result<Matrix> {
        let Family::StaticPerturbed { sparsity, .. } = &self.family else {
            return Err(Error::Internal(
                "perturbation base requested from a non-static family".into(),
            ));
        };
        let n = self.n;
        let mut rng = CounterRng::keyed(self.seed, &[PURPOSE_BASE]);
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = rng.uniform(0.5, 1.0);
            for j in 0..n {
                if j != i && rng.next_f64() < *sparsity {
                    row[j] = rng.uniform(0.2, 1.0);
                }
            }
            let total: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        Matrix::from_rows(&rows)
    }
}

fn identity_rows(n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    rows
}

/// Symmetric pair averaging on rows i and j with off-diagonal weight w.
fn mix_pair(rows: &mut [Vec<f64>], i: usize, j: usize, w: f64) {
    rows[i][i] = 1.0 - w;
    rows[i][j] = w;
    rows[j][j] = 1.0 - w;
    rows[j][i] = w;
}

/// Unranks index k into the k-th unordered pair (i, j), i < j, in
/// lexicographic order.
fn unrank_pair(n: usize, mut k: usize) -> (usize, usize) {
    for i in 0..n - 1 {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    unreachable!("pair rank out of range");
}

/// Contiguous block layout: (start, size) per block, earlier blocks one
/// larger when n is not divisible by the block count.
fn block_layout(n: usize, blocks: usize) -> Vec<(usize, usize)> {
    let base = n / blocks;
    let extra = n % blocks;
    let mut out = Vec::with_capacity(blocks);
    let mut start = 0;
    for b in 0..blocks {
        let size = base + usize::from(b < extra);
        out.push((start, size));
        start += size;
    }
    out
}

/// Materializes `count` matrices from t = 0 with the generator handle as
/// extension, so queries past the window keep drawing from the family.
pub fn generate(spec: &GeneratorSpec, count: usize) -> Result<ChainWindow> {
    if count == 0 {
        return Err(Error::Domain("generate needs count >= 1".into()));
    }
    let matrices = (0..count)
        .map(|t| spec.realize(t))
        .collect::<Result<Vec<_>>>()?;
    ChainWindow::new(0, matrices, Extension::Generator(spec.clone()))
}

/// The expected chain E[A(t)] in closed form. All families here are
/// time-invariant in distribution, so the window holds `count` copies of
/// one matrix and repeats it beyond the window.
pub fn expected_chain(spec: &GeneratorSpec, count: usize) -> Result<ChainWindow> {
    if count == 0 {
        return Err(Error::Domain("expected_chain needs count >= 1".into()));
    }
    let n = spec.n;
    let rows = match &spec.family {
        Family::LazyRandomWalk { self_weight } => {
            let off = (1.0 - self_weight) / (n - 1) as f64;
            let mut rows = vec![vec![off; n]; n];
            for (i, row) in rows.iter_mut().enumerate() {
                row[i] = *self_weight;
            }
            rows
        }
        Family::GossipPairs { pair_prob, mixing } => gossip_expected_rows(
            &(0..n).collect::<Vec<_>>(),
            n,
            *pair_prob,
            *mixing,
        ),
        Family::OneDirectionalElite { .. } => {
            return Ok(ChainWindow::new(
                0,
                vec![spec.realize(0)?; count],
                Extension::RepeatLast,
            )?)
        }
        Family::BlockDiagonalMixers {
            blocks,
            pair_prob,
            mixing,
        } => {
            let mut rows = identity_rows(n);
            for (start, size) in block_layout(n, *blocks) {
                if size < 2 {
                    continue;
                }
                let members: Vec<usize> = (start..start + size).collect();
                let sub = gossip_expected_rows(&members, n, *pair_prob, *mixing);
                for (local, &i) in members.iter().enumerate() {
                    rows[i] = sub[local].clone();
                }
            }
            rows
        }
        Family::StaticPerturbed { blend_max, .. } => {
            let base = spec.perturbation_base()?;
            let c = blend_max / 2.0;
            let mut rows = vec![vec![0.0; n]; n];
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (1.0 - c) * base.get(i, j) + if i == j { c } else { 0.0 };
                }
            }
            rows
        }
    };
    let m = Matrix::from_rows(&rows)?;
    ChainWindow::new(0, vec![m; count], Extension::RepeatLast)
}

/// Expected gossip rows over `members` embedded in dimension `ambient`.
/// Each unordered pair is equally likely, so E[a_ij] = p w / C(m, 2) off
/// the diagonal and E[a_ii] = 1 - 2 p w / m.
fn gossip_expected_rows(members: &[usize], ambient: usize, p: f64, w: f64) -> Vec<Vec<f64>> {
    let m = members.len() as f64;
    let off = p * w / (m * (m - 1.0) / 2.0);
    let diag = 1.0 - 2.0 * p * w / m;
    members
        .iter()
        .map(|&i| {
            let mut row = vec![0.0; ambient];
            for &j in members {
                row[j] = if i == j { diag } else { off };
            }
            row
        })
        .collect()
}

/// Monte Carlo estimate of the feedback coefficient at time t: the
/// smallest ratio E[a_ii a_ij] / E[a_ij] over ordered pairs i != j with
/// nonvanishing mean weight. For strongly aperiodic families the ratio
/// is bounded below by the diagonal floor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackEstimate {
    /// Smallest informative ratio; 1 when every pair is vacuous.
    pub gamma_hat: f64,
    /// Block standard error of the binding ratio; NaN when fewer than
    /// two blocks are informative.
    pub std_err: f64,
    /// True when no pair had nonvanishing mean weight.
    pub vacuous: bool,
}

/// Estimates the feedback coefficient from `samples` independent draws
/// of A(t). Draw s uses stream (seed, sample-purpose, t, s).
pub fn feedback_coefficient(
    spec: &GeneratorSpec,
    t: usize,
    samples: usize,
) -> Result<FeedbackEstimate> {
    if samples < 2 {
        return Err(Error::Domain("feedback estimation needs samples >= 2".into()));
    }
    let n = spec.n;
    let blocks = samples.min(10);
    // num/den sums per ordered pair, totals and per block.
    let mut num = vec![0.0; n * n];
    let mut den = vec![0.0; n * n];
    let mut block_num = vec![vec![0.0; n * n]; blocks];
    let mut block_den = vec![vec![0.0; n * n]; blocks];
    for s in 0..samples {
        let draw = resample(spec, t, s)?;
        let b = s * blocks / samples;
        for i in 0..n {
            let aii = draw.get(i, i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let aij = draw.get(i, j);
                num[i * n + j] += aii * aij;
                den[i * n + j] += aij;
                block_num[b][i * n + j] += aii * aij;
                block_den[b][i * n + j] += aij;
            }
        }
    }
    let floor = 1e-12 * samples as f64;
    let mut best: Option<(f64, usize)> = None;
    for k in 0..n * n {
        if den[k] > floor {
            let ratio = num[k] / den[k];
            if best.map_or(true, |(r, _)| ratio < r) {
                best = Some((ratio, k));
            }
        }
    }
    let Some((gamma_hat, k)) = best else {
        return Ok(FeedbackEstimate {
            gamma_hat: 1.0,
            std_err: f64::NAN,
            vacuous: true,
        });
    };
    let ratios: Vec<f64> = (0..blocks)
        .filter(|&b| block_den[b][k] > 1e-12)
        .map(|b| block_num[b][k] / block_den[b][k])
        .collect();
    let std_err = if ratios.len() >= 2 {
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
            / (ratios.len() - 1) as f64;
        (var / ratios.len() as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(FeedbackEstimate {
        gamma_hat,
        std_err,
        vacuous: false,
    })
}

/// Independent redraw of A(t) for Monte Carlo estimation; sample index
/// s gets its own stream.
fn resample(spec: &GeneratorSpec, t: usize, s: usize) -> Result<Matrix> {
    let shifted = GeneratorSpec {
        family: spec.family.clone(),
        n: spec.n,
        seed: CounterRng::keyed(spec.seed, &[PURPOSE_SAMPLE, t as u64, s as u64]).next_u64(),
    };
    shifted.realize(t)
}

//! Core types for time-varying averaging chains.
//!
//! A chain is a sequence of n-by-n nonnegative matrices A(t) indexed by
//! discrete time. Entry a_ij(t) is the weight agent i places on agent j
//! during step t, so x(t+1) = A(t) x(t). Backward products
//!
//!   A(t2:t1) = A(t2-1) A(t2-2) ... A(t1),   A(t:t) = I
//!
//! carry states from time t1 to time t2. Stochasticity of a matrix is
//! always computed from its row sums, never declared: a matrix is
//! row-stochastic when every row sums to 1 within [`TOL_STOCH`] and
//! substochastic when every row sum is at most 1 + [`TOL_STOCH`].
//!
//! A [`ChainWindow`] stores finitely many matrices starting at time t0
//! together with an extension rule that resolves queries past the stored
//! range, so infinite-horizon constructions (repeat a matrix forever,
//! cycle a period, keep drawing from a seeded generator) stay exact.

use crate::error::{Error, Result};
use crate::random_chains::GeneratorSpec;

/// Tolerance for row-sum classification.
pub const TOL_STOCH: f64 = 1e-9;

/// Largest supported dimension. Everything is dense; cut enumeration and
/// bitmask cuts assume n fits in a u32 mask.
pub const MAX_N: usize = 32;

/// Row-sum classification of a nonnegative matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stochasticity {
    /// Every row sums to 1 within tolerance.
    Stochastic,
    /// Every row sums to at most 1 plus tolerance, some row falls short.
    Substochastic,
    /// Some row sum exceeds 1 beyond tolerance.
    General,
}

/// Dense nonnegative square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row slices. Entries must be finite and
    /// nonnegative; 1 <= n <= [`MAX_N`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "expected {} columns per row, found {}",
                    n,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(n, data)
    }

    /// Builds a matrix from a row-major buffer of length n*n.
    pub fn from_flat(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_N {
            return Err(Error::Dimension(format!(
                "dimension {} outside supported range 1..={}",
                n, MAX_N
            )));
        }
        if data.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {n}x{n} matrix, found {}",
                n * n,
                data.len()
            )));
        }
        for (k, &v) in data.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "entry ({},{}) = {v} is negative or not finite",
                    k / n,
                    k % n
                )));
            }
        }
        Ok(Self { n, data })
    }

    /// Identity matrix of dimension n.
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    /// Dimension n.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry (i, j), 0-based.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Row i as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Row-major view of all entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Sum of row i.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Smallest diagonal entry.
    pub fn min_diagonal(&self) -> f64 {
        (0..self.n)
            .map(|i| self.get(i, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Classifies row sums against the given tolerance.
    pub fn classify(&self, tol: f64) -> Stochasticity {
        let mut all_one = true;
        for i in 0..self.n {
            let s = self.row_sum(i);
            if s > 1.0 + tol {
                return Stochasticity::General;
            }
            if (s - 1.0).abs() > tol {
                all_one = false;
            }
        }
        if all_one {
            Stochasticity::Stochastic
        } else {
            Stochasticity::Substochastic
        }
    }

    /// Matrix product self * rhs.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.n != rhs.n {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n, self.n, rhs.n, rhs.n
            )));
        }
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let aik = self.data[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                let out_row = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    out_row[j] += aik * rhs_row[j];
                }
            }
        }
        Ok(Matrix { n, data: out })
    }

    /// Matrix-vector product A x.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "vector length {} does not match dimension {}",
                x.len(),
                self.n
            )));
        }
        Ok((0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Row-vector product v' A.
    pub fn left_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::Dimension(format!(
                "vector length {} does not match dimension {}",
                v.len(),
                self.n
            )));
        }
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for j in 0..n {
                out[j] += vi * self.data[i * n + j];
            }
        }
        Ok(out)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Nonempty proper subset S of the agent set, stored as a bitmask.
/// Bit k set means agent k (0-based) belongs to S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubsetCut {
    n: usize,
    mask: u32,
}

impl SubsetCut {
    /// Builds a cut from a mask. The subset must be nonempty and proper.
    pub fn new(n: usize, mask: u32) -> Result<Self> {
        if n < 2 || n > MAX_N {
            return Err(Error::InvalidCut(format!(
                "cuts require 2 <= n <= {MAX_N}, got n = {n}"
            )));
        }
        let full = full_mask(n);
        if mask & !full != 0 {
            return Err(Error::InvalidCut(format!(
                "mask {mask:#b} references agents beyond n = {n}"
            )));
        }
        if mask == 0 || mask == full {
            return Err(Error::InvalidCut(
                "subset must be nonempty and proper".into(),
            ));
        }
        Ok(Self { n, mask })
    }

    /// Builds a cut from 0-based member indices.
    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut mask = 0u32;
        for &i in members {
            if i >= n {
                return Err(Error::InvalidCut(format!(
                    "member index {i} out of range for n = {n}"
                )));
            }
            mask |= 1 << i;
        }
        Self::new(n, mask)
    }

    /// The complementary cut.
    pub fn complement(&self) -> SubsetCut {
        SubsetCut {
            n: self.n,
            mask: !self.mask & full_mask(self.n),
        }
    }

    /// Dimension of the ambient agent set.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Raw bitmask.
    pub fn mask(&self) -> u32 {
        self.mask
    }

    /// Whether agent i belongs to S.
    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.mask >> i & 1 == 1
    }

    /// Members of S in ascending order.
    pub fn members(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.contains(i)).collect()
    }

    /// Members of the complement in ascending order.
    pub fn complement_members(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.contains(i)).collect()
    }
}

fn full_mask(n: usize) -> u32 {
    if n == 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

/// Masks of one representative per unordered cut {S, s-complement}:
/// every nonempty proper subset containing agent 0, ascending. There are
/// 2^(n-1) - 1 of them; the caller scans both orientations where the
/// quantity of interest is asymmetric.
pub fn unordered_cut_masks(n: usize) -> Vec<u32> {
    if n < 2 {
        return Vec::new();
    }
    let full = full_mask(n);
    let mut masks = Vec::with_capacity((1usize << (n - 1)) - 1);
    let mut m = 1u32;
    while m < full {
        masks.push(m);
        m += 2;
    }
    masks
}

/// The four blocks of a cut-partitioned matrix. Row and column index
/// lists are ascending, so reassembly is exact.
#[derive(Debug, Clone)]
pub struct CutBlocks {
    /// Principal block on S.
    pub on_s: SubMatrix,
    /// Rows in S, columns in the complement.
    pub s_rows: SubMatrix,
    /// Rows in the complement, columns in S.
    pub sbar_rows: SubMatrix,
    /// Principal block on the complement.
    pub on_sbar: SubMatrix,
}

/// Dense rectangular slice of a matrix.
#[derive(Debug, Clone)]
pub struct SubMatrix {
    /// Original row indices, ascending.
    pub rows: Vec<usize>,
    /// Original column indices, ascending.
    pub cols: Vec<usize>,
    data: Vec<f64>,
}

impl SubMatrix {
    fn extract(m: &Matrix, rows: Vec<usize>, cols: Vec<usize>) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in &rows {
            for &j in &cols {
                data.push(m.get(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Entry at local position (r, c).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols.len() + c]
    }

    /// Sum of all entries.
    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Splits a matrix into the four blocks induced by a cut.
pub fn block(m: &Matrix, cut: &SubsetCut) -> Result<CutBlocks> {
    if m.n() != cut.n() {
        return Err(Error::Dimension(format!(
            "cut over {} agents applied to {}x{} matrix",
            cut.n(),
            m.n(),
            m.n()
        )));
    }
    let s = cut.members();
    let sbar = cut.complement_members();
    Ok(CutBlocks {
        on_s: SubMatrix::extract(m, s.clone(), s.clone()),
        s_rows: SubMatrix::extract(m, s.clone(), sbar.clone()),
        sbar_rows: SubMatrix::extract(m, sbar.clone(), s),
        on_sbar: SubMatrix::extract(m, sbar.clone(), sbar),
    })
}

/// Total weight crossing a cut in each direction.
///
/// `into_s` sums a_ij over i in S, j outside S: the weight rows of S
/// place on the complement, i.e. the influence the complement exerts on
/// S. `into_sbar` is the transposed block total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutFlow {
    /// 1' A_{S,comp} 1.
    pub into_s: f64,
    /// 1' A_{comp,S} 1.
    pub into_sbar: f64,
}

/// Sums the two off-diagonal blocks of a cut. Summation order is row-major
/// ascending, which keeps results bit-reproducible.
pub fn cut_flow(m: &Matrix, cut: &SubsetCut) -> Result<CutFlow> {
    if m.n() != cut.n() {
        return Err(Error::Dimension(format!(
            "cut over {} agents applied to {}x{} matrix",
            cut.n(),
            m.n(),
            m.n()
        )));
    }
    let n = m.n();
    let mut into_s = 0.0;
    let mut into_sbar = 0.0;
    for i in 0..n {
        let in_s = cut.contains(i);
        for j in 0..n {
            if j == i || cut.contains(j) == in_s {
                continue;
            }
            if in_s {
                into_s += m.get(i, j);
            } else {
                into_sbar += m.get(i, j);
            }
        }
    }
    Ok(CutFlow { into_s, into_sbar })
}

/// Rule for resolving matrices past the stored window.
#[derive(Debug, Clone, PartialEq)]
pub enum Extension {
    /// A(t) = I beyond the window.
    Identity,
    /// The last stored matrix repeats forever.
    RepeatLast,
    /// The stored window repeats cyclically.
    Cycle,
    /// Matrices keep coming from a seeded generator family.
    Generator(GeneratorSpec),
}

impl Extension {
    /// Keyword used in chain files.
    pub fn keyword(&self) -> &'static str {
        match self {
            Extension::Identity => "identity",
            Extension::RepeatLast => "repeat",
            Extension::Cycle => "cycle",
            Extension::Generator(_) => "generator",
        }
    }
}

/// Finite stored window of a chain plus its extension rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainWindow {
    t0: usize,
    n: usize,
    matrices: Vec<Matrix>,
    extension: Extension,
}

impl ChainWindow {
    /// Builds a window starting at time t0. At least one matrix is
    /// required and all must share a dimension. When the extension is a
    /// generator handle, its dimension must match too.
    pub fn new(t0: usize, matrices: Vec<Matrix>, extension: Extension) -> Result<Self> {
        let n = match matrices.first() {
            Some(m) => m.n(),
            None => {
                return Err(Error::Dimension(
                    "a chain window needs at least one matrix".into(),
                ))
            }
        };
        for (k, m) in matrices.iter().enumerate() {
            if m.n() != n {
                return Err(Error::Dimension(format!(
                    "matrix {} has dimension {}, expected {}",
                    k,
                    m.n(),
                    n
                )));
            }
        }
        if let Extension::Generator(spec) = &extension {
            if spec.n() != n {
                return Err(Error::Dimension(format!(
                    "generator emits {}x{} matrices but window stores {n}x{n}",
                    spec.n(),
                    spec.n()
                )));
            }
        }
        Ok(Self {
            t0,
            n,
            matrices,
            extension,
        })
    }

    /// Dimension n.
    pub fn n(&self) -> usize {
        self.n
    }

    /// First time index of the window.
    pub fn t0(&self) -> usize {
        self.t0
    }

    /// Number of stored matrices.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    /// Always false; windows are nonempty by construction.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// One past the last stored time index.
    pub fn end(&self) -> usize {
        self.t0 + self.matrices.len()
    }

    /// Stored matrices, index k holding A(t0 + k).
    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    /// Extension rule.
    pub fn extension(&self) -> &Extension {
        &self.extension
    }

    /// Resolves A(t), synthesizing past the stored window by the
    /// extension rule. Times before t0 are an error.
    pub fn matrix_at(&self, t: usize) -> Result<Matrix> {
        if t < self.t0 {
            return Err(Error::TimeRange(format!(
                "t = {t} precedes window start t0 = {}",
                self.t0
            )));
        }
        let k = t - self.t0;
        if k < self.matrices.len() {
            return Ok(self.matrices[k].clone());
        }
        match &self.extension {
            Extension::Identity => Ok(Matrix::identity(self.n)),
            Extension::RepeatLast => Ok(self.matrices.last().expect("nonempty").clone()),
            Extension::Cycle => Ok(self.matrices[k % self.matrices.len()].clone()),
            Extension::Generator(spec) => spec.realize(t),
        }
    }
}

/// Backward product A(t2:t1) = A(t2-1) ... A(t1); the empty product is I.
/// Requires chain.t0() <= t1 <= t2.
pub fn backward_product(chain: &ChainWindow, t1: usize, t2: usize) -> Result<Matrix> {
    if t1 < chain.t0() {
        return Err(Error::TimeRange(format!(
            "t1 = {t1} precedes window start t0 = {}",
            chain.t0()
        )));
    }
    if t2 < t1 {
        return Err(Error::TimeRange(format!(
            "backward product needs t1 <= t2, got t1 = {t1}, t2 = {t2}"
        )));
    }
    let mut prod = Matrix::identity(chain.n());
    for t in t1..t2 {
        prod = chain.matrix_at(t)?.matmul(&prod)?;
    }
    Ok(prod)
}

/// Total deviation from stochasticity over the stored window:
/// the sum over t and i of (1 - row sum), each term clamped at 0.
/// Rows exceeding 1 beyond [`TOL_STOCH`] are a domain error.
pub fn deviation_from_stochasticity(chain: &ChainWindow) -> Result<f64> {
    let mut total = 0.0;
    for (k, m) in chain.matrices().iter().enumerate() {
        for i in 0..m.n() {
            let s = m.row_sum(i);
            if s > 1.0 + TOL_STOCH {
                return Err(Error::Domain(format!(
                    "row {i} of A({}) sums to {s}, above 1",
                    chain.t0() + k
                )));
            }
            total += (1.0 - s).max(0.0);
        }
    }
    Ok(total)
}

/// Smallest diagonal entry over the stored window. A positive value is
/// the strong aperiodicity coefficient of the window.
pub fn strong_aperiodicity_gamma(chain: &ChainWindow) -> f64 {
    chain
        .matrices()
        .iter()
        .map(Matrix::min_diagonal)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_negative_entries() {
        let err = Matrix::from_rows(&[vec![1.0, -0.5], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn rejects_non_finite_entries() {
        let err = Matrix::from_rows(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn rejects_dimension_zero_and_oversize() {
        assert!(Matrix::from_flat(0, vec![]).is_err());
        assert!(Matrix::from_flat(33, vec![0.0; 33 * 33]).is_err());
    }

    #[test]
    fn classification_is_computed_from_row_sums() {
        let st = m(&[&[0.5, 0.5], &[0.25, 0.75]]);
        assert_eq!(st.classify(TOL_STOCH), Stochasticity::Stochastic);
        let sub = m(&[&[0.5, 0.4], &[0.25, 0.75]]);
        assert_eq!(sub.classify(TOL_STOCH), Stochasticity::Substochastic);
        let gen = m(&[&[0.5, 0.6], &[0.25, 0.75]]);
        assert_eq!(gen.classify(TOL_STOCH), Stochasticity::General);
        let near = m(&[&[0.5, 0.5 + 1e-10], &[0.25, 0.75]]);
        assert_eq!(near.classify(TOL_STOCH), Stochasticity::Stochastic);
    }

    #[test]
    fn backward_product_hand_checked() {
        // A(1) A(0) computed by hand.
        let a0 = m(&[&[1.0, 0.0], &[0.5, 0.5]]);
        let a1 = m(&[&[0.5, 0.5], &[0.0, 1.0]]);
        let chain = ChainWindow::new(0, vec![a0, a1], Extension::Identity).unwrap();
        let p = backward_product(&chain, 0, 2).unwrap();
        let expected = m(&[&[0.75, 0.25], &[0.5, 0.5]]);
        assert!(p.max_abs_diff(&expected) == 0.0);
    }

    #[test]
    fn empty_product_is_identity() {
        let a = m(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let chain = ChainWindow::new(3, vec![a], Extension::RepeatLast).unwrap();
        let p = backward_product(&chain, 5, 5).unwrap();
        assert_eq!(p, Matrix::identity(2));
    }

    #[test]
    fn product_before_window_start_errors() {
        let a = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let chain = ChainWindow::new(2, vec![a], Extension::RepeatLast).unwrap();
        assert!(matches!(
            backward_product(&chain, 1, 3),
            Err(Error::TimeRange(_))
        ));
        assert!(matches!(
            backward_product(&chain, 4, 3),
            Err(Error::TimeRange(_))
        ));
    }

    #[test]
    fn extensions_resolve_as_documented() {
        let a = m(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let b = m(&[&[1.0, 0.0], &[0.0, 1.0]]);

        let ident = ChainWindow::new(0, vec![a.clone()], Extension::Identity).unwrap();
        assert_eq!(ident.matrix_at(7).unwrap(), Matrix::identity(2));

        let rep = ChainWindow::new(0, vec![a.clone(), b.clone()], Extension::RepeatLast).unwrap();
        assert_eq!(rep.matrix_at(9).unwrap(), b);

        let cyc = ChainWindow::new(0, vec![a.clone(), b.clone()], Extension::Cycle).unwrap();
        assert_eq!(cyc.matrix_at(2).unwrap(), a);
        assert_eq!(cyc.matrix_at(5).unwrap(), b);
    }

    #[test]
    fn cut_flow_matches_block_totals() {
        let a = m(&[&[1.0, 0.0], &[0.5, 0.5]]);
        let s = SubsetCut::from_members(2, &[1]).unwrap();
        let f = cut_flow(&a, &s).unwrap();
        assert_eq!(f.into_s, 0.5);
        assert_eq!(f.into_sbar, 0.0);
        let parts = block(&a, &s).unwrap();
        assert_eq!(parts.s_rows.total(), f.into_s);
        assert_eq!(parts.sbar_rows.total(), f.into_sbar);
    }

    #[test]
    fn block_reassembly_is_exact() {
        let a = m(&[
            &[0.2, 0.3, 0.5, 0.0],
            &[0.1, 0.6, 0.1, 0.2],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.25, 0.25, 0.25, 0.25],
        ]);
        let cut = SubsetCut::from_members(4, &[0, 2]).unwrap();
        let parts = block(&a, &cut).unwrap();
        let mut rebuilt = vec![vec![f64::NAN; 4]; 4];
        for part in [&parts.on_s, &parts.s_rows, &parts.sbar_rows, &parts.on_sbar] {
            for (r, &i) in part.rows.iter().enumerate() {
                for (c, &j) in part.cols.iter().enumerate() {
                    rebuilt[i][j] = part.get(r, c);
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(rebuilt[i][j], a.get(i, j), "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn cut_rejects_empty_full_and_out_of_range() {
        assert!(SubsetCut::new(3, 0).is_err());
        assert!(SubsetCut::new(3, 0b111).is_err());
        assert!(SubsetCut::new(3, 0b1000).is_err());
        assert!(SubsetCut::from_members(3, &[3]).is_err());
    }

    #[test]
    fn unordered_masks_count_and_canonical_bit() {
        for n in 2..=10usize {
            let masks = unordered_cut_masks(n);
            assert_eq!(masks.len(), (1 << (n - 1)) - 1);
            assert!(masks.iter().all(|m| m & 1 == 1));
        }
        assert!(unordered_cut_masks(1).is_empty());
    }

    #[test]
    fn deviation_counts_missing_row_mass() {
        let sub = m(&[&[0.5, 0.3], &[0.2, 0.7]]);
        let chain = ChainWindow::new(0, vec![sub.clone(), sub], Extension::RepeatLast).unwrap();
        let d = deviation_from_stochasticity(&chain).unwrap();
        assert!((d - 2.0 * (0.2 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn deviation_rejects_superstochastic_rows() {
        let bad = m(&[&[0.9, 0.2], &[0.2, 0.7]]);
        let chain = ChainWindow::new(0, vec![bad], Extension::RepeatLast).unwrap();
        assert!(matches!(
            deviation_from_stochasticity(&chain),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gamma_is_min_diagonal_over_window() {
        let a = m(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let only_a = ChainWindow::new(0, vec![a.clone()], Extension::RepeatLast).unwrap();
        assert_eq!(strong_aperiodicity_gamma(&only_a), 0.9);
        let b = m(&[&[0.4, 0.6], &[1.0, 0.0]]);
        let chain = ChainWindow::new(0, vec![a, b], Extension::RepeatLast).unwrap();
        assert_eq!(strong_aperiodicity_gamma(&chain), 0.0);
    }

    #[test]
    fn substochastic_products_stay_substochastic() {
        // Row sums of backward products are nonincreasing in length.
        let a = m(&[&[0.5, 0.3], &[0.2, 0.7]]);
        let b = m(&[&[0.8, 0.1], &[0.4, 0.5]]);
        let chain = ChainWindow::new(0, vec![a, b], Extension::Cycle).unwrap();
        let mut prev = [f64::INFINITY; 2];
        for t2 in 0..8 {
            let p = backward_product(&chain, 0, t2).unwrap();
            for i in 0..2 {
                let s = p.row_sum(i);
                assert!(s <= prev[i] + 1e-12, "row {i} grew at length {t2}");
                prev[i] = s;
            }
        }
    }
}

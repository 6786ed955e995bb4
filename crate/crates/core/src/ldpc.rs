//! Rate-1/2 regular (3,6) LDPC codes.
//!
//! The parity-check matrix is a Gallager ensemble. Three column sequences
//! are laid end to end: the identity `0..n` and two seeded permutations of
//! it. Cutting the `3n` entries into consecutive groups of six gives the
//! `n/2` checks. When `6 | n` this is exactly the classic three-band
//! construction; otherwise one check per band boundary straddles two
//! sequences and may hit a column twice. Such repeats are kept as separate
//! Tanner edges and cancel in the GF(2) algebra. Every column has exactly
//! three edges and every check exactly six.
//!
//! `H` is rank deficient (each band sums to the all-ones vector when `6 | n`). The code dimension is `n - rank(H) >= n/2`; messages occupy the
//! first `n/2` information positions and any surplus information positions
//! are fixed to zero.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::keystream::{ChipStream, LDPC_DOMAIN};

pub const COLUMN_WEIGHT: usize = 3;
pub const ROW_WEIGHT: usize = 6;
pub const DEFAULT_MAX_ITER: u32 = 50;

const TANH_CLAMP: f64 = 1.0 - 1e-12;

/// Sparse parity-check matrix with its Tanner-graph adjacency.
#[derive(Debug, Clone)]
pub struct ParityCheck {
    n: usize,
    /// Check `c` owns edges `row_start[c]..row_start[c + 1]`.
    row_start: Vec<usize>,
    edge_var: Vec<u32>,
    /// Variable `v` owns the edge ids `var_edges[var_start[v]..var_start[v + 1]]`.
    var_start: Vec<usize>,
    var_edges: Vec<u32>,
}

impl ParityCheck {
    fn from_rows(n: usize, rows: &[Vec<u32>]) -> Self {
        let mut row_start = Vec::with_capacity(rows.len() + 1);
        let mut edge_var = Vec::new();
        row_start.push(0);
        for r in rows {
            edge_var.extend_from_slice(r);
            row_start.push(edge_var.len());
        }
        let mut degree = vec![0usize; n];
        for &v in &edge_var {
            degree[v as usize] += 1;
        }
        let mut var_start = Vec::with_capacity(n + 1);
        var_start.push(0);
        for d in &degree {
            var_start.push(var_start.last().unwrap() + d);
        }
        let mut fill = var_start[..n].to_vec();
        let mut var_edges = vec![0u32; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        Self {
            n,
            row_start,
            edge_var,
            var_start,
            var_edges,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of checks.
    pub fn m(&self) -> usize {
        self.row_start.len() - 1
    }

    /// Number of nonzero entries (Tanner-graph edges).
    pub fn entries(&self) -> usize {
        self.edge_var.len()
    }

    /// Sorted column indices covered by check `c`.
    pub fn row(&self, c: usize) -> &[u32] {
        &self.edge_var[self.row_start[c]..self.row_start[c + 1]]
    }

    pub fn column_weight(&self, v: usize) -> usize {
        self.var_start[v + 1] - self.var_start[v]
    }

    /// Checks that column `v` participates in.
    pub fn column(&self, v: usize) -> Vec<usize> {
        self.var_edges[self.var_start[v]..self.var_start[v + 1]]
            .iter()
            .map(|&e| self.check_of_edge(e as usize))
            .collect()
    }

    fn check_of_edge(&self, e: usize) -> usize {
        self.row_start.partition_point(|&s| s <= e) - 1
    }

    /// `word · Hᵀ mod 2`.
    pub fn syndrome(&self, word: &[u8]) -> Result<Vec<u8>> {
        check_len(self.n, word.len())?;
        Ok((0..self.m())
            .map(|c| self.row(c).iter().fold(0u8, |acc, &v| acc ^ (word[v as usize] & 1)))
            .collect())
    }

    fn syndrome_is_zero(&self, word: &[u8]) -> bool {
        (0..self.m()).all(|c| self.row(c).iter().fold(0u8, |acc, &v| acc ^ word[v as usize]) == 0)
    }

    /// Sum-product belief propagation in the log-likelihood domain.
    ///
    /// Channel LLRs are `2·y/σ²`; a positive LLR favours bit 1 (transmitted
    /// as +1). Internally messages use the conventional `log P(0)/P(1)` sign.
    pub fn decode(&self, soft: &SoftWord, max_iter: u32) -> Result<DecodeOutput> {
        check_len(self.n, soft.values.len())?;
        let scale = -2.0 / (soft.sigma * soft.sigma);
        let channel: Vec<f64> = soft.values.iter().map(|&y| y * scale).collect();
        let mut bits: Vec<u8> = channel.iter().map(|&l| u8::from(l < 0.0)).collect();
        if self.syndrome_is_zero(&bits) {
            return Ok(DecodeOutput {
                bits,
                converged: true,
                iterations: 0,
            });
        }

        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| channel[v as usize]).collect();
        let mut c2v = vec![0.0f64; v2c.len()];
        let mut t = Vec::with_capacity(ROW_WEIGHT);
        let mut suffix = Vec::with_capacity(ROW_WEIGHT + 1);

        for iter in 1..=max_iter {
            for c in 0..self.m() {
                let (lo, hi) = (self.row_start[c], self.row_start[c + 1]);
                t.clear();
                t.extend(
                    v2c[lo..hi]
                        .iter()
                        .map(|&x| (0.5 * x).tanh().clamp(-TANH_CLAMP, TANH_CLAMP)),
                );
                suffix.clear();
                suffix.resize(t.len() + 1, 1.0);
                for i in (0..t.len()).rev() {
                    suffix[i] = suffix[i + 1] * t[i];
                }
                let mut prefix = 1.0;
                for (i, out) in c2v[lo..hi].iter_mut().enumerate() {
                    *out = 2.0 * (prefix * suffix[i + 1]).atanh();
                    prefix *= t[i];
                }
            }
            for v in 0..self.n {
                let edges = &self.var_edges[self.var_start[v]..self.var_start[v + 1]];
                let total = channel[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                for &e in edges {
                    v2c[e as usize] = total - c2v[e as usize];
                }
                bits[v] = u8::from(total < 0.0);
            }
            if self.syndrome_is_zero(&bits) {
                return Ok(DecodeOutput {
                    bits,
                    converged: true,
                    iterations: iter,
                });
            }
        }
        Ok(DecodeOutput {
            bits,
            converged: false,
            iterations: max_iter,
        })
    }
}

/// Normalized channel observations (nominally ±1) with their noise level.
#[derive(Debug, Clone)]
pub struct SoftWord {
    values: Vec<f64>,
    sigma: f64,
}

impl SoftWord {
    pub fn new(values: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "noise sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { values, sigma })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutput {
    /// Hard-decision codeword bits.
    pub bits: Vec<u8>,
    /// True when the returned word satisfies every check.
    pub converged: bool,
    pub iterations: u32,
}

/// Systematic encoder derived from the reduced row-echelon form of `H`.
#[derive(Debug, Clone)]
pub struct Generator {
    n: usize,
    k: usize,
    info_cols: Vec<u32>,
    pivot_cols: Vec<u32>,
    /// For each pivot row, the information positions it depends on, packed
    /// over the `info_cols` index space.
    parity_rows: Vec<Vec<u64>>,
}

impl Generator {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Message bits per codeword.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Dimension of the full code (`n - rank H`).
    pub fn dimension(&self) -> usize {
        self.info_cols.len()
    }

    /// Column order putting information positions first: message bit `i`
    /// sits at codeword position `column_order()[i]`.
    pub fn column_order(&self) -> Vec<u32> {
        self.info_cols.iter().chain(&self.pivot_cols).copied().collect()
    }

    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        check_len(self.k, message.len())?;
        let mut packed = vec![0u64; self.info_cols.len().div_ceil(64)];
        for (i, &b) in message.iter().enumerate() {
            packed[i / 64] |= u64::from(b & 1) << (i % 64);
        }
        Ok(self.encode_packed(&packed))
    }

    fn encode_packed(&self, info: &[u64]) -> Vec<u8> {
        let mut word = vec![0u8; self.n];
        for (j, &col) in self.info_cols.iter().enumerate() {
            word[col as usize] = ((info[j / 64] >> (j % 64)) & 1) as u8;
        }
        for (row, &col) in self.parity_rows.iter().zip(&self.pivot_cols) {
            let ones: u32 = row.iter().zip(info).map(|(a, b)| (a & b).count_ones()).sum();
            word[col as usize] = (ones & 1) as u8;
        }
        word
    }

    /// Reads the message bits back out of a codeword.
    pub fn message(&self, codeword: &[u8]) -> Result<Vec<u8>> {
        check_len(self.n, codeword.len())?;
        Ok(self.info_cols[..self.k].iter().map(|&c| codeword[c as usize]).collect())
    }
}

/// A seeded code: parity-check matrix plus matching systematic encoder.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    h: ParityCheck,
    g: Generator,
}

impl LdpcCode {
    pub fn parity_check(&self) -> &ParityCheck {
        &self.h
    }

    pub fn generator(&self) -> &Generator {
        &self.g
    }

    pub fn n(&self) -> usize {
        self.h.n
    }

    pub fn k(&self) -> usize {
        self.g.k
    }

    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        self.g.encode(message)
    }

    pub fn syndrome(&self, word: &[u8]) -> Result<Vec<u8>> {
        self.h.syndrome(word)
    }

    pub fn decode(&self, soft: &SoftWord, max_iter: u32) -> Result<DecodeOutput> {
        self.h.decode(soft, max_iter)
    }

    /// Checks every basis codeword of the full code against `H`.
    pub fn verify_generator(&self) -> bool {
        let words = self.g.info_cols.len().div_ceil(64);
        (0..self.g.info_cols.len()).into_par_iter().all(|j| {
            let mut unit = vec![0u64; words];
            unit[j / 64] = 1 << (j % 64);
            self.h.syndrome_is_zero(&self.g.encode_packed(&unit))
        })
    }
}

/// Builds the (3,6)-regular code of length `n` for `seed`.
pub fn build(seed: u64, n: usize) -> Result<LdpcCode> {
    if n < ROW_WEIGHT || n % 2 != 0 || n > (u32::MAX / 2) as usize {
        return Err(Error::InvalidParams(format!(
            "LDPC length must be even and at least {ROW_WEIGHT}, got {n}"
        )));
    }
    let rows = gallager_rows(seed, n);
    let h = ParityCheck::from_rows(n, &rows);
    let g = systematic(n, &rows);
    let code = LdpcCode { h, g };
    if !code.verify_generator() {
        return Err(Error::Construction("generator is not orthogonal to H".into()));
    }
    Ok(code)
}

fn gallager_rows(seed: u64, n: usize) -> Vec<Vec<u32>> {
    let stream = ChipStream::new(seed, LDPC_DOMAIN);
    let mut sequence: Vec<u32> = (0..n as u32).collect();
    for counter_base in [0, 2 * n as u64] {
        sequence.extend(stream.permutation(counter_base, n as u32));
    }
    sequence
        .chunks(ROW_WEIGHT)
        .map(|c| {
            let mut r = c.to_vec();
            r.sort_unstable();
            r
        })
        .collect()
}

/// Gauss–Jordan elimination over GF(2), pivoting from the last column down
/// so parity positions gather at the end of the codeword.
fn systematic(n: usize, rows: &[Vec<u32>]) -> Generator {
    let words = n.div_ceil(64);
    let mut mat: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| {
            let mut packed = vec![0u64; words];
            for &c in r {
                packed[c as usize / 64] ^= 1 << (c % 64);
            }
            packed
        })
        .collect();
    let m = mat.len();
    let bit = |row: &[u64], c: usize| (row[c / 64] >> (c % 64)) & 1 == 1;

    let mut rank = 0;
    let mut is_pivot = vec![false; n];
    let mut pivot_cols = Vec::new();
    for col in (0..n).rev() {
        if rank == m {
            break;
        }
        let Some(p) = (rank..m).find(|&r| bit(&mat[r], col)) else {
            continue;
        };
        mat.swap(rank, p);
        let pivot = mat[rank].clone();
        for (r, row) in mat.iter_mut().enumerate() {
            if r != rank && bit(row, col) {
                row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
            }
        }
        is_pivot[col] = true;
        pivot_cols.push(col as u32);
        rank += 1;
    }

    let info_cols: Vec<u32> = (0..n as u32).filter(|&c| !is_pivot[c as usize]).collect();
    let info_words = info_cols.len().div_ceil(64);
    let parity_rows = mat[..rank]
        .iter()
        .map(|row| {
            let mut packed = vec![0u64; info_words];
            for (j, &c) in info_cols.iter().enumerate() {
                if bit(row, c as usize) {
                    packed[j / 64] |= 1 << (j % 64);
                }
            }
            packed
        })
        .collect();
    Generator {
        n,
        k: n / 2,
        info_cols,
        pivot_cols,
        parity_rows,
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Length { expected, actual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_soft(word: &[u8], sigma: f64) -> SoftWord {
        SoftWord::new(word.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect(), sigma).unwrap()
    }

    #[test]
    fn n24_structure() {
        let code = build(5, 24).unwrap();
        let h = code.parity_check();
        assert_eq!(h.m(), 12);
        for c in 0..12 {
            assert_eq!(h.row(c).len(), 6);
            assert!(h.row(c).windows(2).all(|w| w[0] < w[1]), "6 | 24: no repeats");
        }
        for v in 0..24 {
            assert_eq!(h.column_weight(v), 3);
        }
        assert_eq!(h.entries(), 6 * h.m());
    }

    #[test]
    fn first_band_is_consecutive() {
        let code = build(1, 48).unwrap();
        for i in 0..8 {
            let expected: Vec<u32> = (6 * i..6 * i + 6).collect();
            assert_eq!(code.parity_check().row(i as usize), &expected[..]);
        }
    }

    #[test]
    fn rank_deficiency_is_two() {
        for seed in 0..5 {
            let code = build(seed, 96).unwrap();
            assert_eq!(code.generator().dimension(), 96 - (48 - 2));
            assert_eq!(code.k(), 48);
        }
    }

    #[test]
    fn n2048_is_regular_with_repeats_at_band_edges() {
        let code = build(42, 2048).unwrap();
        let h = code.parity_check();
        assert_eq!(h.m(), 1024);
        assert_eq!(h.entries(), 6 * 1024);
        assert!((0..2048).all(|v| h.column_weight(v) == 3));
        assert!((0..1024).all(|c| h.row(c).len() == 6));
        // Only the two checks straddling a band boundary can repeat a column.
        for c in (0..1024).filter(|&c| c != 341 && c != 682) {
            assert!(h.row(c).windows(2).all(|w| w[0] < w[1]), "check {c}");
        }
        assert!(code.generator().dimension() >= 1024);
    }

    #[test]
    fn bad_lengths_rejected() {
        for n in [0, 4, 7, 101] {
            assert!(build(0, n).is_err());
        }
    }

    #[test]
    fn zero_message_zero_codeword() {
        let code = build(3, 48).unwrap();
        let cw = code.encode(&vec![0; 24]).unwrap();
        assert!(cw.iter().all(|&b| b == 0));
        assert!(code.syndrome(&cw).unwrap().iter().all(|&b| b == 0));
    }

    #[test]
    fn encode_is_systematic() {
        let code = build(9, 96).unwrap();
        let msg: Vec<u8> = (0..48).map(|i| (i % 3 == 0) as u8).collect();
        let cw = code.encode(&msg).unwrap();
        assert_eq!(code.generator().message(&cw).unwrap(), msg);
        let order = code.generator().column_order();
        for (i, &b) in msg.iter().enumerate() {
            assert_eq!(cw[order[i] as usize], b);
        }
    }

    #[test]
    fn single_error_syndrome_is_column() {
        let code = build(2, 48).unwrap();
        let h = code.parity_check();
        for j in 0..48 {
            let mut e = vec![0u8; 48];
            e[j] = 1;
            let s = h.syndrome(&e).unwrap();
            let ones: Vec<usize> = (0..h.m()).filter(|&c| s[c] == 1).collect();
            let mut col = h.column(j);
            col.sort_unstable();
            assert_eq!(ones, col);
            assert_eq!(ones.len(), 3);
        }
    }

    #[test]
    fn length_errors() {
        let code = build(2, 48).unwrap();
        assert!(matches!(code.encode(&[0; 23]), Err(Error::Length { .. })));
        assert!(matches!(code.syndrome(&[0; 47]), Err(Error::Length { .. })));
        let soft = SoftWord::new(vec![1.0; 47], 0.5).unwrap();
        assert!(matches!(code.decode(&soft, 10), Err(Error::Length { .. })));
    }

    #[test]
    fn noiseless_decode_converges_immediately() {
        let code = build(4, 240).unwrap();
        let msg: Vec<u8> = (0..120).map(|i| ((i * 7) % 5 < 2) as u8).collect();
        let cw = code.encode(&msg).unwrap();
        let out = code.decode(&to_soft(&cw, 0.1), 50).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 2);
        assert_eq!(out.bits, cw);
    }

    #[test]
    fn corrects_a_few_flipped_symbols() {
        let code = build(4, 2048).unwrap();
        let msg: Vec<u8> = (0..1024).map(|i| ((i * 13) % 7 < 3) as u8).collect();
        let cw = code.encode(&msg).unwrap();
        let mut soft: Vec<f64> = cw.iter().map(|&b| if b == 1 { 0.9 } else { -0.9 }).collect();
        for i in [3, 500, 1200, 2047] {
            soft[i] = -0.3 * soft[i];
        }
        let out = code.decode(&SoftWord::new(soft, 0.6).unwrap(), 50).unwrap();
        assert!(out.converged);
        assert_eq!(out.bits, cw);
        assert!(out.iterations >= 1);
    }

    #[test]
    fn degenerate_soft_input_does_not_panic() {
        let code = build(4, 96).unwrap();
        let zero = SoftWord::new(vec![0.0; 96], 1.0).unwrap();
        let out = code.decode(&zero, 20).unwrap();
        // All-zero LLRs hard-decide to the zero codeword.
        assert!(out.converged);
        let nan = SoftWord::new(vec![f64::NAN; 96], 1.0).unwrap();
        let _ = code.decode(&nan, 5).unwrap();
        let huge = SoftWord::new(vec![1e300; 96], 1e-6).unwrap();
        let _ = code.decode(&huge, 5).unwrap();
    }

    #[test]
    fn soft_word_rejects_bad_sigma() {
        assert!(SoftWord::new(vec![], 0.0).is_err());
        assert!(SoftWord::new(vec![], f64::NAN).is_err());
        assert!(SoftWord::new(vec![], -1.0).is_err());
    }

    #[test]
    fn deterministic_construction() {
        let a = build(77, 120).unwrap();
        let b = build(77, 120).unwrap();
        let c = build(78, 120).unwrap();
        let rows = |x: &LdpcCode| (0..60).map(|i| x.parity_check().row(i).to_vec()).collect::<Vec<_>>();
        assert_eq!(rows(&a), rows(&b));
        assert_ne!(rows(&a), rows(&c));
    }
}

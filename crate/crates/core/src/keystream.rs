//! Counter-addressable pseudo-random streams.
//!
//! Every word is a pure function of `(seed, domain, counter)`: the base state
//! is the splitmix64 finalizer applied to `seed ^ domain`, and word `i` is the
//! finalizer applied to `base + (i + 1) * GOLDEN`. This is exactly the output
//! sequence of a sequential splitmix64 generator started at `base`, but any
//! index can be produced without stepping through the ones before it.

/// Domain tag for spreading chips and the preamble.
pub const CHIP_DOMAIN: u64 = 0x434849505F444F4D;
/// Domain tag for parity-check matrix construction.
pub const LDPC_DOMAIN: u64 = 0x4C4450435F444F4D;

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

/// The splitmix64 output mix.
#[inline]
pub fn finalize(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58476D1CE4E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Word `i` of the stream identified by `(seed, domain)`.
#[inline]
pub fn word(seed: u64, domain: u64, i: u64) -> u64 {
    word_from_base(finalize(seed ^ domain), i)
}

#[inline]
fn word_from_base(base: u64, i: u64) -> u64 {
    finalize(base.wrapping_add(i.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// A seeded, domain-separated source of ±1 chips and 64-bit words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChipStream {
    seed: u64,
    domain: u64,
    base: u64,
}

impl ChipStream {
    pub fn new(seed: u64, domain: u64) -> Self {
        Self {
            seed,
            domain,
            base: finalize(seed ^ domain),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    #[inline]
    pub fn word(&self, i: u64) -> u64 {
        word_from_base(self.base, i)
    }

    /// Chip `i` is bit `i % 64` (LSB first) of word `i / 64`; a set bit is +1.
    #[inline]
    pub fn chip(&self, i: u64) -> i8 {
        if (self.word(i / 64) >> (i % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Writes chips `start .. start + out.len()` into `out`.
    pub fn fill_chips(&self, start: u64, out: &mut [i8]) {
        let mut idx = start;
        let mut pos = 0;
        while pos < out.len() {
            let w = self.word(idx / 64);
            let bit = (idx % 64) as u32;
            let take = ((64 - bit) as usize).min(out.len() - pos);
            let mut bits = w >> bit;
            for slot in &mut out[pos..pos + take] {
                *slot = if bits & 1 == 1 { 1 } else { -1 };
                bits >>= 1;
            }
            pos += take;
            idx += take as u64;
        }
    }

    pub fn chips(&self, start: u64, len: usize) -> Vec<i8> {
        let mut out = vec![0; len];
        self.fill_chips(start, &mut out);
        out
    }

    /// Uniform Fisher–Yates permutation of `0..n`, consuming words from
    /// `counter_base` onwards. Draws use rejection sampling, so there is no
    /// modulo bias.
    pub fn permutation(&self, counter_base: u64, n: u32) -> Vec<u32> {
        let mut perm: Vec<u32> = (0..n).collect();
        let mut counter = counter_base;
        for i in (1..n as usize).rev() {
            let j = self.uniform_below(&mut counter, i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        perm
    }

    fn uniform_below(&self, counter: &mut u64, m: u64) -> u64 {
        debug_assert!(m > 0);
        // 2^64 mod m
        let rem = (u64::MAX % m + 1) % m;
        loop {
            let w = self.word(*counter);
            *counter = counter.wrapping_add(1);
            // Accept w < 2^64 - rem; with rem == 0 everything is accepted.
            if rem == 0 || w < rem.wrapping_neg() {
                return w % m;
            }
        }
    }

    /// Standard normal pair from words `2p` and `2p + 1` via Box–Muller.
    #[inline]
    pub fn normal_pair(&self, counter_base: u64, p: u64) -> (f64, f64) {
        let c = counter_base.wrapping_add(2 * p);
        let u1 = unit_open_closed(self.word(c));
        let u2 = unit_open_closed(self.word(c.wrapping_add(1)));
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, co) = (std::f64::consts::TAU * u2).sin_cos();
        (r * co, r * s)
    }

    /// Fills `out` with `N(0, std²)` samples; element `i` is a pure function of
    /// `(counter_base, i)`.
    pub fn fill_normal(&self, counter_base: u64, std: f64, out: &mut [f64]) {
        use rayon::prelude::*;
        out.par_chunks_mut(1 << 14).enumerate().for_each(|(chunk, slice)| {
            let first = (chunk << 14) as u64;
            for (off, pair) in slice.chunks_mut(2).enumerate() {
                let (z0, z1) = self.normal_pair(counter_base, first / 2 + off as u64);
                pair[0] = z0 * std;
                if pair.len() > 1 {
                    pair[1] = z1 * std;
                }
            }
        });
    }

    /// Bytes taken little-endian from successive words starting at `counter_base`.
    pub fn bytes(&self, counter_base: u64, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len + 8);
        let mut c = counter_base;
        while out.len() < len {
            out.extend_from_slice(&self.word(c).to_le_bytes());
            c = c.wrapping_add(1);
        }
        out.truncate(len);
        out
    }
}

/// Maps a word to `(word + 1) / 2^64`, a value in `(0, 1]`.
#[inline]
fn unit_open_closed(w: u64) -> f64 {
    (w as f64 + 1.0) * (1.0 / 18446744073709551616.0)
}

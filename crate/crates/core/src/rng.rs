//! Counter-based deterministic random number generation.
//!
//! Every stochastic component of the toolkit (phantom features, motion
//! trajectories, acquisition noise, weight initialization, dropout) draws
//! from this generator so that a fixed seed reproduces outputs bit-exactly,
//! independent of call interleaving, thread count, or platform.
//!
//! The generator is fully specified so it can be reimplemented elsewhere:
//!
//! * A stream key is derived from `(seed, label)` where `label` is hashed
//!   with FNV-1a (64-bit, offset basis `0xcbf29ce484222325`, prime
//!   `0x100000001b3`) and combined as `seed XOR fnv1a(label)`, then passed
//!   once through the SplitMix64 finalizer.
//! * Draw `i` (0-based) of a stream is
//!   `finalize(key + (i + 1) * 0x9e3779b97f4a7c15)` with wrapping
//!   arithmetic, where `finalize` is the SplitMix64 finalizer
//!   (`z ^= z >> 30; z *= 0xbf58476d1ce4e5b9; z ^= z >> 27;
//!   z *= 0x94d049bb133111eb; z ^= z >> 31`).
//! * `uniform()` maps a draw to `[0, 1)` as `(x >> 11) * 2^-53`.
//! * `normal()` consumes exactly two draws and applies the Box-Muller
//!   transform `sqrt(-2 ln u1) * cos(2 pi u2)` with `u1` in `(0, 1]`.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn finalize(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic counter-based RNG stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Opens the stream identified by `(seed, label)`.
    pub fn new(seed: u64, label: &str) -> Self {
        CounterRng {
            key: finalize(seed ^ fnv1a(label.as_bytes())),
            counter: 0,
        }
    }

    /// Derives an independent substream; used to key per-epoch/per-item work.
    pub fn substream(&self, index: u64) -> Self {
        CounterRng {
            key: finalize(self.key ^ finalize(index.wrapping_add(1).wrapping_mul(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        finalize(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Box-Muller); always consumes two raw draws.
    pub fn normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }
}

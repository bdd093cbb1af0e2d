//! Counter-based splittable random number generation.
//!
//! Every random quantity in the library is drawn from an `RngStream`, a pure
//! function of (seed, stream key, counter). Streams are split by a purpose
//! label plus index, so independent pipeline stages (data noise, parameter
//! init, batch shuffling, ...) draw from non-overlapping sequences and any
//! stage can be replayed in isolation. There is no global RNG state.

/// SplitMix64 finalizer; full-period bijective mixer on u64.
#[inline]
fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[inline]
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic stream of random values, identified by a derived key and a
/// draw counter. Cloning then drawing from both clones yields identical
/// sequences; use `split` to obtain an independent stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Root stream for a run seed.
    pub fn new(seed: u64) -> Self {
        RngStream {
            key: mix64(seed ^ 0x5851_f42d_4c95_7f2d),
            counter: 0,
        }
    }

    /// Child stream keyed by a purpose label and an index. Children with
    /// different (purpose, index) pairs, and the parent itself, never share a
    /// sequence.
    pub fn split(&self, purpose: &str, index: u64) -> Self {
        let k = mix64(self.key ^ fnv1a(purpose.as_bytes()) ^ mix64(index ^ 0x94d0_49bb_1331_11eb));
        RngStream { key: k, counter: 0 }
    }

    /// Current draw counter (number of u64 values consumed).
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Rewind or fast-forward to an absolute counter position.
    pub fn set_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key ^ mix64(self.counter ^ 0xbf58_476d_1ce4_e5b9));
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller. Consumes exactly two counter steps, so
    /// draws stay aligned to the counter regardless of call history.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        // u1 in (0, 1] keeps the log finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0);
        let u2 = (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }

    /// Normal with the given mean and standard deviation.
    #[inline]
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Bernoulli draw with probability `p` of true.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Integer uniform in [0, n). n must be positive.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // 64-bit multiply-shift; bias is negligible for the n used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Fisher-Yates shuffle with draws from this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Vector of iid standard normals.
    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_and_counter_same_value() {
        let mut a = RngStream::new(42).split("noise", 3);
        let mut b = RngStream::new(42).split("noise", 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::new(42).split("noise", 3);
        c.set_counter(57);
        let mut d = RngStream::new(42).split("noise", 3);
        for _ in 0..57 {
            d.next_u64();
        }
        assert_eq!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn splits_are_distinct_from_parent_and_siblings() {
        let mut parent = RngStream::new(7);
        let mut child_a = parent.split("a", 0);
        let mut child_b = parent.split("a", 1);
        let mut child_c = parent.split("b", 0);
        let p: Vec<u64> = (0..64).map(|_| parent.next_u64()).collect();
        let a: Vec<u64> = (0..64).map(|_| child_a.next_u64()).collect();
        let b: Vec<u64> = (0..64).map(|_| child_b.next_u64()).collect();
        let c: Vec<u64> = (0..64).map(|_| child_c.next_u64()).collect();
        assert_ne!(p, a);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }

    #[test]
    fn uniform_moments() {
        let mut rng = RngStream::new(123).split("uniform-test", 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
            sum_sq += u * u;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.01, "uniform mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.005, "uniform var {var}");
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(9).split("normal-test", 0);
        let n = 100_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.standard_normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "normal mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "normal var {var}");
    }

    #[test]
    fn below_is_in_range_and_covers() {
        let mut rng = RngStream::new(5).split("below", 0);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[rng.below(7) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn shuffle_is_a_permutation_and_deterministic() {
        let mut a: Vec<u32> = (0..100).collect();
        let mut b: Vec<u32> = (0..100).collect();
        RngStream::new(11).split("shuffle", 0).shuffle(&mut a);
        RngStream::new(11).split("shuffle", 0).shuffle(&mut b);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<u32>>());
        assert_ne!(a, (0..100).collect::<Vec<u32>>());
    }
}

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded, single-owner random stream.
///
/// Equal seeds give bitwise-equal draw sequences. Independent streams for
/// parallel chains or per-state updates are derived from one root seed with
/// [`RngStream::substream`], which selects a distinct ChaCha stream id rather
/// than reseeding.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Stream `index` of the family rooted at `seed`.
    pub fn substream(seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index);
        Self { seed, inner }
    }

    /// Derives a child stream from this stream's root seed.
    pub fn child(&self, index: u64) -> Self {
        // Index 0 is the root itself; children start at 1.
        Self::substream(self.seed, index.wrapping_add(1))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            // 53 random mantissa bits.
            let x = (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if x > 0.0 {
                return x;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

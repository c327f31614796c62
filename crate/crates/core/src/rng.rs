use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A reproducible random stream addressed by `(master_seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id selecting one of its 2^64 independent
/// streams, so per-trial streams can be derived in any order or in parallel.
#[derive(Clone, Debug)]
pub struct RngState {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self { master_seed, stream_id, inner }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same master seed.
    pub fn derive(&self, stream_id: u64) -> Self {
        Self::new(self.master_seed, stream_id)
    }
}

impl RngCore for RngState {
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

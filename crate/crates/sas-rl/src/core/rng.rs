use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Deterministic RNG with explicit stream derivation.
///
/// Every random draw in the crate flows through a handle so that a run is
/// reproducible from `(master_seed, stream)` alone. Streams derived from the
/// same master seed are independent ChaCha12 instances; the stream id is the
/// user-visible seed value, so extending a seed list never changes the draws
/// of existing seeds.
#[derive(Clone, Debug)]
pub struct RngHandle {
    master_seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

/// splitmix64 output function. Used only for key expansion; all actual
/// sampling comes from ChaCha12.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngHandle {
    /// Root handle: stream 0 of `master_seed`.
    pub fn new(master_seed: u64) -> Self {
        Self::derive(master_seed, 0)
    }

    /// Handle for an identified stream of `master_seed`.
    ///
    /// The 256-bit ChaCha key is the splitmix64 expansion of
    /// `master_seed XOR mix(stream)`, where `mix` is itself a splitmix64
    /// step. Distinct `(master_seed, stream)` pairs collide with only the
    /// probability of a 64-bit hash collision.
    pub fn derive(master_seed: u64, stream: u64) -> Self {
        let mut mix_state = stream;
        let mixed = splitmix64(&mut mix_state);
        let mut state = master_seed ^ mixed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngHandle {
            master_seed,
            stream,
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// Child handle keyed by a sub-stream of this handle's stream.
    /// Splitting is stable: it depends only on the identifiers, not on how
    /// many draws have been made.
    pub fn split(&self, substream: u64) -> Self {
        let mut state = self.stream;
        let folded = splitmix64(&mut state) ^ substream.rotate_left(32);
        Self::derive(self.master_seed, folded)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream_reproduces() {
        let mut a = RngHandle::derive(7, 3);
        let mut b = RngHandle::derive(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = RngHandle::derive(7, 0);
        let mut b = RngHandle::derive(7, 1);
        let draws_a: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let draws_b: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(draws_a, draws_b);
    }

    #[test]
    fn stream_depends_only_on_identifiers() {
        // Draw from stream 0, then derive stream 5: must equal a fresh
        // derivation of stream 5.
        let mut root = RngHandle::new(42);
        let _ = root.gen::<f64>();
        let mut later = RngHandle::derive(42, 5);
        let mut fresh = RngHandle::derive(42, 5);
        assert_eq!(later.next_u64(), fresh.next_u64());
    }

    #[test]
    fn split_is_stable_under_extra_draws() {
        let mut h = RngHandle::derive(9, 2);
        let before = h.split(11).next_u64();
        let _ = h.next_u64();
        let after = h.split(11).next_u64();
        assert_eq!(before, after);
    }

    #[test]
    fn uniform_draws_land_in_unit_interval() {
        let mut h = RngHandle::new(1);
        for _ in 0..1000 {
            let x: f64 = h.gen();
            assert!((0.0..1.0).contains(&x));
        }
    }
}

//! Deterministic, splittable random streams.
//!
//! A stream is a `(master_seed, stream_id)` pair mapped onto one ChaCha
//! keystream: the master seed keys the cipher and the stream id selects the
//! 64-bit ChaCha stream, so distinct ids never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Stream for trial `index` of an experiment seeded with `master_seed`.
    pub fn for_trial(master_seed: u64, index: u64) -> Self {
        Self::new(master_seed, index)
    }

    /// Derives an independent child stream labelled by `tag`.
    pub fn child(&self, tag: u64) -> Self {
        let mixed = splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self::new(self.master_seed, mixed)
    }

    /// Child stream labelled by a string, e.g. `"signal"`.
    pub fn named(&self, label: &str) -> Self {
        self.child(fnv1a(label.as_bytes()))
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

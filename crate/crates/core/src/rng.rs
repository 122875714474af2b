//! Named random sub-streams derived from one root seed.
//!
//! Each consumer (topology, data, init, training, ...) gets its own generator so that
//! changing how much randomness one stage draws never perturbs another stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Data,
    Init,
    Training,
    Durations,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Topology => 0x746f_706f,
            Stream::Data => 0x6461_7461,
            Stream::Init => 0x696e_6974,
            Stream::Training => 0x7472_6169,
            Stream::Durations => 0x6475_7261,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SeedStreams {
    root: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Generator for `stream`, further keyed by two indices (e.g. round and client).
    pub fn rng(&self, stream: Stream, a: u64, b: u64) -> SimRng {
        let mut h = splitmix(self.root ^ splitmix(stream.tag()));
        h = splitmix(h ^ a.wrapping_mul(0x2545_f491_4f6c_dd1d));
        h = splitmix(h ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        SimRng::seed_from_u64(h)
    }
}

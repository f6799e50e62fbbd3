//! Seeded random streams.
//!
//! One master seed fans out into independent ChaCha streams, one per purpose.
//! Adding a new consumer means adding a new [`Stream`] variant, which never
//! disturbs the draws seen by existing consumers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Events,
    Activations,
    Init,
    Exploration,
    Replay,
    Policy,
    Layout,
    Meta,
    Dataset,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Events => 1,
            Stream::Activations => 2,
            Stream::Init => 3,
            Stream::Exploration => 4,
            Stream::Replay => 5,
            Stream::Policy => 6,
            Stream::Layout => 7,
            Stream::Meta => 8,
            Stream::Dataset => 9,
        }
    }
}

/// A master seed plus a sub-index, from which purpose streams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
    branch: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master, branch: 0 }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// A child tree, e.g. one per evaluation run or per meta-step.
    pub fn child(&self, index: u64) -> Self {
        Self {
            master: self.master,
            branch: splitmix64(self.branch ^ splitmix64(index.wrapping_add(0x5851_f42d))),
        }
    }

    pub fn stream(&self, stream: Stream) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.master ^ self.branch));
        rng.set_stream(stream.id());
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! Seed derivation for independent, reproducible random streams.
//!
//! Every random quantity in a run is drawn from its own PCG stream whose
//! seed is a hash of the run seed, a purpose tag and an index. Policies that
//! share a seed therefore see identical MAC, channel and arrival draws.

use rand::SeedableRng;
use rand_pcg::Pcg64;

pub type SimRng = Pcg64;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Topology = 1,
    ArrivalRates = 2,
    Mac = 3,
    Channel = 4,
    Arrivals = 5,
    BaseStationChannel = 6,
    Episode = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit child seed.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(seed ^ 0x5851_f42d_4c95_7f2d);
    let b = splitmix64(a ^ (stream as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
    splitmix64(b ^ index.wrapping_mul(0xa076_1d64_78bd_642f))
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, index))
}

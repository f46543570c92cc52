use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes that get their own independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Data = 4,
}

/// Derives an independent ChaCha stream from one run seed.
///
/// The stream id packs the purpose with up to two counters (e.g. epoch and
/// example index), so any component can be replayed without consuming
/// numbers from another.
pub fn stream_rng(seed: u64, purpose: Stream, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((purpose as u64) << 56) ^ ((a & 0xff_ffff) << 32) ^ (b & 0xffff_ffff);
    rng.set_stream(id);
    rng
}

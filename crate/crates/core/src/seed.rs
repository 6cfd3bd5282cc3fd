//! Per-member random streams.
//!
//! Member `e` of a run with master seed `s` draws from ChaCha20 keyed by
//! `seed_from_u64(s)` on stream `e`. Streams are disjoint 2^64-block
//! sequences of the same key, so members never share state and any member
//! can be replayed on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn member_rng(master: u64, member: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(member);
    rng
}

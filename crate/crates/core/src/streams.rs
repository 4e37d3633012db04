//! Named random substreams derived from one master seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream, so changing
//! one parameter (say, the obstacle count) leaves the draws of unrelated
//! consumers untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const OBSTACLES: u64 = 1;
pub const UAV_PLACEMENT: u64 = 2;
pub const FADING: u64 = 3;
const USER_PLACEMENT_BASE: u64 = 1 << 20;
const USER_MOBILITY_BASE: u64 = 2 << 20;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn user_placement(seed: u64, user: u32) -> ChaCha8Rng {
    substream(seed, USER_PLACEMENT_BASE + user as u64)
}

pub fn user_mobility(seed: u64, user: u32) -> ChaCha8Rng {
    substream(seed, USER_MOBILITY_BASE + user as u64)
}

//! Deterministic stream derivation for parallel Monte Carlo.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed
//! by `(seed, replication, role)`. Replications and bootstrap resamples
//! get disjoint streams, so results are independent of scheduling and
//! thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream roles inside one replication.
#[derive(Debug, Clone, Copy)]
pub enum Role {
    Data,
    Oracle,
    /// Bootstrap resample `b` (attempt index, including redraws).
    Bootstrap(u64),
}

/// Streams per replication. Bounds the bootstrap attempt index; the
/// config layer rejects `n_boot` large enough to overflow this block.
pub const STREAMS_PER_REP: u64 = 4096;
pub(crate) const BOOT_BASE: u64 = 16;

impl Role {
    fn offset(self) -> u64 {
        match self {
            Role::Data => 0,
            Role::Oracle => 1,
            Role::Bootstrap(b) => {
                assert!(b < STREAMS_PER_REP - BOOT_BASE, "bootstrap stream overflow");
                BOOT_BASE + b
            }
        }
    }
}

/// Generator for `(seed, rep, role)`. Identical arguments always yield
/// the identical stream.
pub fn stream(seed: u64, rep: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(
        rep.wrapping_mul(STREAMS_PER_REP)
            .wrapping_add(role.offset()),
    );
    rng
}

/// Standard normal draw pinned to f64, for call sites where inference
/// cannot pick between the f32 and f64 distribution impls.
#[cfg(test)]
pub(crate) fn stdn(rng: &mut impl rand::Rng) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}

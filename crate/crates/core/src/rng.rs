//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream addressed
//! by a master seed plus a path of integer coordinates, e.g. `(seed, m)` for the
//! `m`-th bootstrap draw or `(seed, cell, rep)` for one simulation replication.
//! The key is derived from the seed and all but the last coordinate; the last
//! coordinate selects the ChaCha stream. Results therefore never depend on the
//! order in which work items are executed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of coordinates into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(GOLDEN).rotate_left(17) ^ acc;
        acc = splitmix64(&mut state);
    }
    acc
}

/// Returns the ChaCha8 stream addressed by `(seed, path...)`.
///
/// An empty path yields stream 0 of the key derived from `seed` alone.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let (prefix, stream) = match path.split_last() {
        Some((last, prefix)) => (prefix, *last),
        None => (&[][..], 0),
    };
    let mut state = derive_seed(seed, prefix);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Fills `out` with independent Rademacher signs (P(+1) = P(-1) = 1/2).
pub fn fill_rademacher<R: RngCore>(rng: &mut R, out: &mut [f64]) {
    for chunk in out.chunks_mut(64) {
        let bits = rng.next_u64();
        for (k, v) in chunk.iter_mut().enumerate() {
            *v = if (bits >> k) & 1 == 1 { 1.0 } else { -1.0 };
        }
    }
}

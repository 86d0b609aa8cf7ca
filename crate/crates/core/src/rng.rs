//! Seed discipline.
//!
//! Every random draw in the library comes from a ChaCha stream addressed by
//! `(master seed, index, role)`. The role occupies the top byte of the
//! ChaCha stream id and the index the remaining 56 bits, so two streams
//! never overlap and any single trial can be replayed in isolation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRole {
    /// Injected noise `G_Δ` inside the encoder.
    Delta = 1,
    /// Adversary observation noise `G_Adv`.
    Adversary = 2,
    /// Decoder noise `G_Dec`.
    Decoder = 3,
    /// The per-message offset table `t`.
    TTable = 4,
    /// Message-set decimation.
    Decimation = 5,
    /// Overlay subset selection.
    Overlay = 6,
    /// Random codebooks.
    Codebook = 7,
    /// Message selection inside estimators.
    Message = 8,
}

const INDEX_MASK: u64 = (1 << 56) - 1;

/// Returns the generator for `(master, index, role)`.
pub fn stream(master: u64, index: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((role as u64) << 56) | (index & INDEX_MASK));
    rng
}

/// `len` i.i.d. draws from N(0, variance).
pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> Vec<f64> {
    let sd = variance.sqrt();
    (0..len)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `len` i.i.d. standard normal draws.
pub fn standard_normals<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

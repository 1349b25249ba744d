//! Sampling from standard-form GP models and synthetic dataset generation.
//!
//! # Random streams
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`). A
//! [`RngStreams`] family is keyed by a 64-bit seed and a sub-stream name:
//! the 256-bit key holds the seed (little endian) in bytes 0..8 and the
//! 64-bit FNV-1a hash of the name in bytes 8..16, the rest zero. Stream `i`
//! of the family uses ChaCha stream id `i`. Output therefore depends only
//! on `(seed, name, i)` and is identical across platforms.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvgp::{ExcessVector, GeneratorFamily, MvGpModel};
use crate::optim::open_unit;

/// Independent, reproducible random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    key: [u8; 32],
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl RngStreams {
    pub fn new(seed: u64, name: &str) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&fnv1a(name).to_le_bytes());
        Self { key }
    }

    pub fn stream(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }

    /// A 64-bit seed drawn from stream `index`, for components that take a
    /// plain seed rather than a generator.
    pub fn derive_seed(&self, index: u64) -> u64 {
        self.stream(index).next_u64()
    }
}

const SAMPLE_STREAM: &str = "gp-sample";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    pub n_vectors: usize,
    pub n_datasets: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_vectors: 33,
            n_datasets: 1500,
        }
    }
}

/// Draws one generator vector from the law with density proportional to
/// `exp(max u) f_U(u)`.
///
/// Proposals come from the mixture `Σ_j e^{u_j} f_U(u) / Σ_j E[e^{U_j}]`
/// (component `j` exponentially tilted, the others untouched), which
/// dominates the target because `e^{max u} ≤ Σ_j e^{u_j}`; a proposal is
/// accepted with probability `e^{max u} / Σ_j e^{u_j}` (at least 1/3).
fn sample_tilted_generator<R: Rng + ?Sized>(family: &GeneratorFamily, rng: &mut R) -> [f64; 3] {
    let lme: [f64; 3] = std::array::from_fn(|i| family.log_mean_exp(i));
    let top = lme.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: [f64; 3] = std::array::from_fn(|i| (lme[i] - top).exp());
    let total: f64 = w.iter().sum();
    loop {
        let pick = open_unit(rng) * total;
        let j = if pick < w[0] {
            0
        } else if pick < w[0] + w[1] {
            1
        } else {
            2
        };
        let u: [f64; 3] = std::array::from_fn(|i| {
            if i == j {
                family.sample_tilted_component(i, rng)
            } else {
                family.sample_component(i, rng)
            }
        });
        let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = u.iter().map(|v| (v - m).exp()).sum();
        if open_unit(rng) * denom <= 1.0 {
            return u;
        }
    }
}

/// One standard-form GP vector: `E + T - max T` with `E` unit exponential
/// and `T` drawn from the max-tilted generator law.
pub fn sample_one<R: Rng + ?Sized>(family: &GeneratorFamily, rng: &mut R) -> ExcessVector {
    let t = sample_tilted_generator(family, rng);
    let m = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: f64 = Exp1.sample(rng);
    std::array::from_fn(|i| e + (t[i] - m))
}

pub fn sample_with_rng<R: Rng + ?Sized>(family: &GeneratorFamily, n: usize, rng: &mut R) -> Vec<ExcessVector> {
    (0..n).map(|_| sample_one(family, rng)).collect()
}

/// `n` independent draws in standard units.
pub fn sample_gp(family: &GeneratorFamily, n: usize, seed: u64) -> Vec<ExcessVector> {
    let mut rng = RngStreams::new(seed, SAMPLE_STREAM).stream(0);
    sample_with_rng(family, n, &mut rng)
}

/// `config.n_datasets` datasets of `config.n_vectors` vectors; dataset `i`
/// uses stream `i`, so dataset 0 equals [`sample_gp`] with the same seed.
pub fn sample_datasets(family: &GeneratorFamily, config: &SimulationConfig) -> Result<Vec<Vec<ExcessVector>>> {
    if config.n_vectors == 0 || config.n_datasets == 0 {
        return Err(Error::Config("simulation needs at least one dataset and one vector".into()));
    }
    let streams = RngStreams::new(config.seed, SAMPLE_STREAM);
    Ok((0..config.n_datasets as u64)
        .into_par_iter()
        .map(|i| sample_with_rng(family, config.n_vectors, &mut streams.stream(i)))
        .collect())
}

/// Maps standardized vectors back to original units: `y_j = u_j + σ_j x_j`.
pub fn unstandardize(vectors: &[ExcessVector], model: &MvGpModel) -> Vec<[f64; 3]> {
    vectors
        .iter()
        .map(|x| std::array::from_fn(|j| model.thresholds[j] + model.scales[j] * x[j]))
        .collect()
}

/// Writes datasets as CSV with columns `dataset_id,vector_id,x1,x2,x3`.
pub fn write_datasets_csv<W: Write>(datasets: &[Vec<ExcessVector>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset_id", "vector_id", "x1", "x2", "x3"])
        .map_err(|e| Error::Io(e.into()))?;
    for (d, set) in datasets.iter().enumerate() {
        for (v, x) in set.iter().enumerate() {
            w.write_record([
                d.to_string(),
                v.to_string(),
                x[0].to_string(),
                x[1].to_string(),
                x[2].to_string(),
            ])
            .map_err(|e| Error::Io(e.into()))?;
        }
    }
    w.flush()?;
    Ok(())
}

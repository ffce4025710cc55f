//! Sparse-sensor simulation: keep a seeded uniform subset of a denser map's
//! measurements.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{DepthMap, MISSING_DEPTH};

/// How many measurements to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSpec {
    /// Exact count.
    Count(usize),
    /// Fraction of the valid pixels, rounded half up.
    Fraction(f64),
}

impl SampleSpec {
    fn resolve(&self, valid: usize) -> Result<usize> {
        match *self {
            SampleSpec::Count(n) => {
                if n > valid {
                    Err(Error::InvalidInput(format!(
                        "requested {n} samples but only {valid} valid pixels exist"
                    )))
                } else {
                    Ok(n)
                }
            }
            SampleSpec::Fraction(f) => {
                if !(0.0..=1.0).contains(&f) {
                    Err(Error::InvalidInput(format!("fraction must lie in [0, 1], got {f}")))
                } else {
                    Ok((f * valid as f64 + 0.5).floor() as usize)
                }
            }
        }
    }
}

/// Keep exactly `spec` measurements chosen uniformly without replacement
/// (seeded partial Fisher-Yates over the valid index set); everything else
/// becomes missing. Kept values are bit-exact.
pub fn sparsify(dense: &DepthMap, spec: SampleSpec, seed: u64) -> Result<DepthMap> {
    let mut valid_idx: Vec<usize> = dense
        .values()
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v != MISSING_DEPTH).then_some(i))
        .collect();
    let n = spec.resolve(valid_idx.len())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![MISSING_DEPTH; dense.values().len()];
    let len = valid_idx.len();
    for k in 0..n {
        let j = rng.gen_range(k..len);
        valid_idx.swap(k, j);
        let idx = valid_idx[k];
        values[idx] = dense.values()[idx];
    }
    DepthMap::new(dense.width(), dense.height(), values, dense.max_depth())
}

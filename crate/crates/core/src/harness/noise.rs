use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{Channel, RmtResponse};

pub const NOISE_LEVELS: [f64; 3] = [0.01, 0.03, 0.05];

const RHO_FLOOR: f64 = 1e-6;
const PHASE_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Relative standard deviation, 0.05 = 5 %.
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0 && self.level.is_finite()) {
            return Err(Error::config("level", format!("must be >= 0, got {}", self.level)));
        }
        Ok(())
    }
}

/// `v ← v·(1 + level·g)` for every unmasked entry, `g ~ N(0, 1)`, then clamped
/// to ρ_a > 0 and 0° < φ < 90°. The normal draws depend only on the seed, so
/// different levels scale the same draws.
pub fn add_noise(r: &RmtResponse, spec: &NoiseSpec) -> Result<RmtResponse> {
    spec.validate()?;
    let mut out = r.clone();
    if spec.level == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for ch in Channel::ALL {
        let mask = r.channel_mask(ch);
        let mut values = r.channel(ch).to_owned();
        for ((idx, v), g) in values
            .indexed_iter_mut()
            .zip(std::iter::repeat_with(|| rng.sample::<f64, _>(StandardNormal)))
        {
            if mask.is_some_and(|m| m[idx]) {
                continue;
            }
            let noisy = *v * (1.0 + spec.level * g);
            *v = if ch.is_resistivity() {
                noisy.max(RHO_FLOOR)
            } else {
                noisy.clamp(PHASE_MARGIN, 90.0 - PHASE_MARGIN)
            };
        }
        out.set_channel(ch, &values);
    }
    Ok(out)
}

//! Per-trial random draws.
//!
//! Trial `k` of a run with seed `s` draws from ChaCha8 seeded with `s` on
//! stream `k`, so every trial is reproducible on its own and the order in
//! which trials are evaluated does not matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AllocationConfig, AllocationError, DgUnit, Sampling};
use crate::loadability::Candidate;

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Picks `n` distinct candidates. Uniform sampling gives each remaining
/// candidate equal odds; margin-weighted sampling draws in proportion to the
/// Stage-1 additional MW, removing each pick before the next draw. When
/// every remaining weight is zero the draw falls back to uniform.
pub fn pick_buses<R: Rng + ?Sized>(
    rng: &mut R,
    candidates: &[Candidate],
    n: usize,
    sampling: Sampling,
) -> Vec<usize> {
    let mut pool: Vec<Candidate> = candidates.to_vec();
    let mut picked = Vec::with_capacity(n);
    for _ in 0..n.min(pool.len()) {
        let total: f64 = pool.iter().map(|c| c.additional_mw.max(0.0)).sum();
        let idx = match sampling {
            Sampling::MarginWeighted if total > 0.0 => {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = pool.len() - 1;
                for (i, c) in pool.iter().enumerate() {
                    acc += c.additional_mw.max(0.0);
                    if target < acc {
                        chosen = i;
                        break;
                    }
                }
                chosen
            }
            _ => rng.random_range(0..pool.len()),
        };
        picked.push(pool.remove(idx).bus);
    }
    picked
}

/// Draws one trial: distinct buses, then sizes uniform in the per-unit
/// bounds. Size vectors whose sum exceeds the penetration cap are redrawn
/// up to `config.max_redraws` times.
pub fn sample_trial<R: Rng + ?Sized>(
    rng: &mut R,
    config: &AllocationConfig,
) -> Result<Vec<DgUnit>, AllocationError> {
    if config.candidates.len() < config.n_dg {
        return Err(AllocationError::TooFewCandidates {
            candidates: config.candidates.len(),
            n_dg: config.n_dg,
        });
    }
    let buses = pick_buses(rng, &config.candidates, config.n_dg, config.sampling);
    let (lo, hi) = config.dg_size_bounds;
    for _ in 0..config.max_redraws.max(1) {
        let sizes: Vec<f64> = (0..config.n_dg)
            .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
            .collect();
        if sizes.iter().sum::<f64>() <= config.total_penetration_cap {
            return Ok(buses
                .iter()
                .zip(sizes)
                .map(|(&bus, p_mw)| DgUnit { bus, p_mw })
                .collect());
        }
    }
    Err(AllocationError::RedrawExhausted {
        attempts: config.max_redraws.max(1),
        cap: config.total_penetration_cap,
    })
}

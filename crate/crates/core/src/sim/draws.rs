//! Stochastic hot-water demand: Poisson event counts per quarter-hour with
//! normally distributed event volumes.

use super::{HouseholdProfile, STEPS_PER_DAY, STEPS_PER_HOUR};
use crate::rng::stream;
use rand_distr::{Distribution, Normal, Poisson};

/// Draw volumes (liters) for the 96 quarter-hours of one day.
///
/// Deterministic in `(profile.seed, day_index)`: the same household and day
/// always produce the same demand, regardless of simulation order. Event
/// counts are Poisson with mean `draw_rate_by_hour[hour] / 4` per slot;
/// event volumes are Normal(mean, sd) clamped at zero.
pub fn sample_draws(profile: &HouseholdProfile, day_index: usize) -> Vec<f64> {
    let mut rng = stream(profile.seed, "draws", &[day_index as u64]);
    let volume = Normal::new(profile.draw_volume_mean_l, profile.draw_volume_sd_l)
        .expect("validated profile has finite mean and non-negative sd");
    let mut out = Vec::with_capacity(STEPS_PER_DAY);
    for slot in 0..STEPS_PER_DAY {
        let hour = slot / STEPS_PER_HOUR;
        let lambda = profile.draw_rate_by_hour[hour] / STEPS_PER_HOUR as f64;
        let events = if lambda > 0.0 {
            Poisson::new(lambda)
                .expect("positive finite lambda")
                .sample(&mut rng) as u64
        } else {
            0
        };
        let mut liters = 0.0;
        for _ in 0..events {
            liters += volume.sample(&mut rng).max(0.0);
        }
        out.push(liters);
    }
    out
}

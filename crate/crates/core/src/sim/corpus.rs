//! Heterogeneous 24-household corpus generation: 8 source systems used for
//! pre-training, 16 target systems for deployment and evaluation. Hardware
//! (TankConfig) is identical across households; occupants and controller
//! setpoints differ.

use super::{simulate_household, HouseholdProfile, SimRecord, TankConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_key, stream};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemSet {
    Source,
    Target,
}

impl SystemSet {
    pub fn as_str(&self) -> &'static str {
        match self {
            SystemSet::Source => "source",
            SystemSet::Target => "target",
        }
    }
}

/// Distribution the 24 household profiles are drawn from: a shared daily
/// demand shape scaled per household, per-household event volumes, and
/// jittered controller setpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Heterogeneity {
    /// Canonical morning/evening-peaked expected events per hour.
    pub base_draw_rate_by_hour: Vec<f64>,
    /// Per-household multiplier on the base profile, uniform over this range.
    pub draw_scale_range: (f64, f64),
    /// Per-household mean event volume, liters, uniform over this range.
    pub draw_volume_mean_range_l: (f64, f64),
    pub draw_volume_sd_l: f64,
    pub base_t_low_c: f64,
    pub base_t_high_c: f64,
    /// Setpoints jittered uniformly within ± this many °C.
    pub setpoint_jitter_c: f64,
}

impl Default for Heterogeneity {
    fn default() -> Self {
        Heterogeneity {
            base_draw_rate_by_hour: vec![
                0.2, 0.2, 0.2, 0.2, 0.2, 0.2, // night
                1.5, 2.5, 2.0, 1.2, 0.8, 0.8, // morning peak
                1.0, 0.8, 0.6, 0.6, 0.8, 1.2, // afternoon
                2.0, 2.2, 1.8, 1.2, 0.6, 0.3, // evening peak
            ],
            draw_scale_range: (0.5, 1.6),
            draw_volume_mean_range_l: (5.0, 12.0),
            draw_volume_sd_l: 2.0,
            // Reheat-on well above the 40 °C comfort line: the thermostat
            // never lets the data show what happens below ~t_low, so any
            // scheduler working down at the comfort line must extrapolate.
            base_t_low_c: 45.0,
            base_t_high_c: 58.0,
            setpoint_jitter_c: 2.0,
        }
    }
}

impl Heterogeneity {
    pub fn validate(&self) -> Result<()> {
        if self.base_draw_rate_by_hour.len() != 24 {
            return Err(Error::InvalidConfig(format!(
                "base_draw_rate_by_hour must have 24 entries, got {}",
                self.base_draw_rate_by_hour.len()
            )));
        }
        if self
            .base_draw_rate_by_hour
            .iter()
            .any(|r| !r.is_finite() || *r < 0.0)
        {
            return Err(Error::InvalidConfig(
                "base_draw_rate_by_hour entries must be finite and >= 0".into(),
            ));
        }
        for (name, (lo, hi)) in [
            ("draw_scale_range", self.draw_scale_range),
            ("draw_volume_mean_range_l", self.draw_volume_mean_range_l),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.draw_volume_sd_l < 0.0 || !self.draw_volume_sd_l.is_finite() {
            return Err(Error::InvalidConfig(
                "draw_volume_sd_l must be finite and >= 0".into(),
            ));
        }
        if self.setpoint_jitter_c < 0.0 || !self.setpoint_jitter_c.is_finite() {
            return Err(Error::InvalidConfig(
                "setpoint_jitter_c must be finite and >= 0".into(),
            ));
        }
        if !(self.base_t_low_c + self.setpoint_jitter_c
            < self.base_t_high_c - self.setpoint_jitter_c)
        {
            return Err(Error::InvalidConfig(format!(
                "setpoint bands overlap: t_low {} + jitter {} reaches t_high {} - jitter",
                self.base_t_low_c, self.setpoint_jitter_c, self.base_t_high_c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub tank: TankConfig,
    pub heterogeneity: Heterogeneity,
    pub n_source: usize,
    pub n_target: usize,
    pub n_days: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            tank: TankConfig::default(),
            heterogeneity: Heterogeneity::default(),
            n_source: 8,
            n_target: 16,
            n_days: 365,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        self.tank.validate()?;
        self.heterogeneity.validate()?;
        if self.n_source == 0 || self.n_target == 0 {
            return Err(Error::InvalidConfig(
                "n_source and n_target must be at least 1".into(),
            ));
        }
        if self.n_days == 0 {
            return Err(Error::InvalidConfig("n_days must be at least 1".into()));
        }
        Ok(())
    }
}

/// One household's year of data together with the profile that produced it.
#[derive(Debug, Clone)]
pub struct HouseholdSeries {
    pub set: SystemSet,
    pub profile: HouseholdProfile,
    pub records: Vec<SimRecord>,
}

impl HouseholdSeries {
    pub fn id(&self) -> &str {
        &self.profile.household_id
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub tank: TankConfig,
    pub source: Vec<HouseholdSeries>,
    pub target: Vec<HouseholdSeries>,
}

impl Corpus {
    pub fn all(&self) -> impl Iterator<Item = &HouseholdSeries> {
        self.source.iter().chain(self.target.iter())
    }
}

fn sample_profile(
    het: &Heterogeneity,
    set: SystemSet,
    index: usize,
    master_seed: u64,
) -> HouseholdProfile {
    let set_code = match set {
        SystemSet::Source => 0u64,
        SystemSet::Target => 1u64,
    };
    let prefix = match set {
        SystemSet::Source => 's',
        SystemSet::Target => 't',
    };
    let mut rng = stream(master_seed, "profile", &[set_code, index as u64]);
    let scale = rng.random_range(het.draw_scale_range.0..=het.draw_scale_range.1);
    let mean_l =
        rng.random_range(het.draw_volume_mean_range_l.0..=het.draw_volume_mean_range_l.1);
    let j = het.setpoint_jitter_c;
    let (low_jitter, high_jitter) = if j > 0.0 {
        (rng.random_range(-j..=j), rng.random_range(-j..=j))
    } else {
        (0.0, 0.0)
    };
    HouseholdProfile {
        household_id: format!("{prefix}{index:02}"),
        draw_rate_by_hour: het
            .base_draw_rate_by_hour
            .iter()
            .map(|r| r * scale)
            .collect(),
        draw_volume_mean_l: mean_l,
        draw_volume_sd_l: het.draw_volume_sd_l,
        t_low_c: het.base_t_low_c + low_jitter,
        t_high_c: het.base_t_high_c + high_jitter,
        seed: derive_key(master_seed, "household", &[set_code, index as u64]),
    }
}

/// Draw the 8+16 household profiles from the heterogeneity distribution.
/// Deterministic in `master_seed`; every profile gets a distinct seed.
pub fn build_profiles(
    cfg: &CorpusConfig,
    master_seed: u64,
) -> Result<Vec<(SystemSet, HouseholdProfile)>> {
    cfg.validate()?;
    let mut profiles = Vec::with_capacity(cfg.n_source + cfg.n_target);
    for i in 0..cfg.n_source {
        profiles.push((
            SystemSet::Source,
            sample_profile(&cfg.heterogeneity, SystemSet::Source, i, master_seed),
        ));
    }
    for i in 0..cfg.n_target {
        profiles.push((
            SystemSet::Target,
            sample_profile(&cfg.heterogeneity, SystemSet::Target, i, master_seed),
        ));
    }
    let seeds: HashSet<u64> = profiles.iter().map(|(_, p)| p.seed).collect();
    if seeds.len() != profiles.len() {
        return Err(Error::InvalidConfig(
            "household seed collision; pick a different master_seed".into(),
        ));
    }
    for (_, p) in &profiles {
        p.validate()?;
    }
    Ok(profiles)
}

/// Simulate the full corpus. Households run independently (and possibly in
/// parallel); each owns a seeded stream keyed by its profile, so the output
/// is identical regardless of scheduling.
pub fn generate_corpus(cfg: &CorpusConfig, master_seed: u64) -> Result<Corpus> {
    let profiles = build_profiles(cfg, master_seed)?;
    let series: Vec<HouseholdSeries> = profiles
        .into_par_iter()
        .map(|(set, profile)| {
            let records = simulate_household(&cfg.tank, &profile, cfg.n_days)?;
            Ok(HouseholdSeries {
                set,
                profile,
                records,
            })
        })
        .collect::<Result<_>>()?;
    let (source, target): (Vec<_>, Vec<_>) = series
        .into_iter()
        .partition(|s| s.set == SystemSet::Source);
    Ok(Corpus {
        tank: cfg.tank.clone(),
        source,
        target,
    })
}

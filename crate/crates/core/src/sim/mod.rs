//! Stratified hot-water-tank simulation and synthetic household corpus.
//!
//! A tank is modelled as `n_layers` fully mixed horizontal layers, hottest at
//! the top. Each quarter-hour step applies, in order: plug-flow draw, heater
//! injection into the bottom layers, ambient loss, inter-layer conduction,
//! and buoyancy mixing of any temperature inversions. Loss and conduction use
//! the exact exponential relaxation over the step so the model stays stable
//! at a 900 s step size.

mod corpus;
pub mod csv;
mod draws;

pub use corpus::{
    Corpus, CorpusConfig, Heterogeneity, HouseholdSeries, SystemSet, build_profiles,
    generate_corpus,
};
pub use draws::sample_draws;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Specific heat capacity of water, J/(kg·K).
pub const WATER_HEAT_CAPACITY: f64 = 4186.0;
/// Mass of one liter of water, kg.
pub const KG_PER_LITER: f64 = 1.0;

pub const STEPS_PER_HOUR: usize = 4;
pub const STEPS_PER_DAY: usize = 96;
pub const STEPS_PER_WEEK: usize = 672;
pub const HOURS_PER_STEP: f64 = 0.25;

/// Physical and numerical parameters of one storage vessel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankConfig {
    /// Number of stacked layers; must be even and at least 2.
    pub n_layers: usize,
    pub volume_liters: f64,
    /// Total ambient loss coefficient, W/K, split evenly over layers.
    pub ua_loss_w_per_k: f64,
    /// Conduction coefficient between adjacent layers, W/K.
    pub k_cond_w_per_k: f64,
    pub t_ambient_c: f64,
    pub t_inlet_c: f64,
    /// Thermal power injected into the bottom two layers while reheating, W.
    pub heater_power_w: f64,
    /// Step length in seconds (900 = quarter-hourly).
    pub dt_seconds: f64,
}

impl Default for TankConfig {
    fn default() -> Self {
        TankConfig {
            n_layers: 10,
            volume_liters: 200.0,
            ua_loss_w_per_k: 2.0,
            k_cond_w_per_k: 0.8,
            t_ambient_c: 18.0,
            t_inlet_c: 12.0,
            heater_power_w: 2000.0,
            dt_seconds: 900.0,
        }
    }
}

impl TankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 2 || self.n_layers % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "n_layers must be even and >= 2, got {}",
                self.n_layers
            )));
        }
        for (name, v) in [
            ("volume_liters", self.volume_liters),
            ("ua_loss_w_per_k", self.ua_loss_w_per_k),
            ("k_cond_w_per_k", self.k_cond_w_per_k),
            ("heater_power_w", self.heater_power_w),
            ("dt_seconds", self.dt_seconds),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.t_ambient_c.is_finite() || !self.t_inlet_c.is_finite() {
            return Err(Error::InvalidConfig("temperatures must be finite".into()));
        }
        // Rejects configs with swapped or mis-scaled units.
        if self.t_inlet_c > self.t_ambient_c + 30.0 {
            return Err(Error::InvalidConfig(format!(
                "t_inlet_c = {} exceeds t_ambient_c + 30 = {}",
                self.t_inlet_c,
                self.t_ambient_c + 30.0
            )));
        }
        Ok(())
    }

    /// Volume of one layer, liters.
    pub fn layer_volume(&self) -> f64 {
        self.volume_liters / self.n_layers as f64
    }

    /// Heat capacity of one layer, J/K.
    pub fn layer_capacity(&self) -> f64 {
        self.layer_volume() * KG_PER_LITER * WATER_HEAT_CAPACITY
    }

    /// Heat capacity of the full tank, J/K.
    pub fn tank_capacity(&self) -> f64 {
        self.volume_liters * KG_PER_LITER * WATER_HEAT_CAPACITY
    }
}

/// Occupant draw behaviour and reheat setpoints for one household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdProfile {
    pub household_id: String,
    /// Expected number of draw events per hour, one entry per hour of day.
    pub draw_rate_by_hour: Vec<f64>,
    pub draw_volume_mean_l: f64,
    pub draw_volume_sd_l: f64,
    /// Reheat-on setpoint, °C.
    pub t_low_c: f64,
    /// Reheat-off setpoint, °C.
    pub t_high_c: f64,
    pub seed: u64,
}

impl HouseholdProfile {
    pub fn validate(&self) -> Result<()> {
        if self.draw_rate_by_hour.len() != 24 {
            return Err(Error::InvalidConfig(format!(
                "draw_rate_by_hour must have 24 entries, got {}",
                self.draw_rate_by_hour.len()
            )));
        }
        if self.draw_rate_by_hour.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidConfig(
                "draw_rate_by_hour entries must be finite and >= 0".into(),
            ));
        }
        if !(self.draw_volume_mean_l > 0.0) {
            return Err(Error::InvalidConfig(
                "draw_volume_mean_l must be positive".into(),
            ));
        }
        if self.draw_volume_sd_l < 0.0 {
            return Err(Error::InvalidConfig(
                "draw_volume_sd_l must be non-negative".into(),
            ));
        }
        if !(self.t_low_c < self.t_high_c) {
            return Err(Error::InvalidConfig(format!(
                "t_low_c = {} must be below t_high_c = {}",
                self.t_low_c, self.t_high_c
            )));
        }
        for (name, t) in [("t_low_c", self.t_low_c), ("t_high_c", self.t_high_c)] {
            if !(30.0..=70.0).contains(&t) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {t} outside the [30, 70] °C setpoint range"
                )));
            }
        }
        Ok(())
    }
}

/// Layer temperatures, index 0 = top of tank.
#[derive(Debug, Clone, PartialEq)]
pub struct TankState {
    pub layer_temps: Vec<f64>,
}

impl TankState {
    pub fn uniform(n_layers: usize, temp_c: f64) -> Self {
        TankState {
            layer_temps: vec![temp_c; n_layers],
        }
    }

    /// Temperature at the mid-point sensor: mean of the two layers adjacent
    /// to the tank's half-height boundary (layers n/2 - 1 and n/2 from the top).
    pub fn mid_temp(&self) -> f64 {
        let n = self.layer_temps.len();
        0.5 * (self.layer_temps[n / 2 - 1] + self.layer_temps[n / 2])
    }

    pub fn is_finite(&self) -> bool {
        self.layer_temps.iter().all(|t| t.is_finite())
    }

    /// True when layers are non-increasing from top to bottom within `tol`.
    pub fn is_stratified(&self, tol: f64) -> bool {
        self.layer_temps.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// Internal energy relative to 0 °C, J.
    pub fn internal_energy(&self, cfg: &TankConfig) -> f64 {
        let c = cfg.layer_capacity();
        self.layer_temps.iter().map(|t| c * t).sum()
    }
}

/// One quarter-hour observation of a household system.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub step_index: usize,
    pub draw_liters: f64,
    pub hp_active: bool,
    pub t_mid: f64,
}

/// Per-step energy accounting, J. Signs: `injected` and `inlet_in` add energy,
/// `ambient_loss` and `draw_out` remove it.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepEnergy {
    pub injected_j: f64,
    pub ambient_loss_j: f64,
    pub draw_out_j: f64,
    pub inlet_in_j: f64,
    pub internal_delta_j: f64,
}

impl StepEnergy {
    /// |ΔU - (in - out)| scaled by the largest term involved.
    pub fn relative_imbalance(&self) -> f64 {
        let net = self.injected_j - self.ambient_loss_j - self.draw_out_j + self.inlet_in_j;
        let scale = [
            self.injected_j.abs(),
            self.ambient_loss_j.abs(),
            self.draw_out_j.abs(),
            self.inlet_in_j.abs(),
            self.internal_delta_j.abs(),
            1.0,
        ]
        .into_iter()
        .fold(0.0f64, f64::max);
        (self.internal_delta_j - net).abs() / scale
    }
}

// Mean of old temperatures over the volume band [a, b), in the volume
// coordinate measured down from the tank top. Water below the physical tank
// (coordinate >= total volume) is incoming inlet water.
fn band_mean(temps: &[f64], layer_vol: f64, total_vol: f64, t_inlet: f64, a: f64, b: f64) -> f64 {
    debug_assert!(b > a);
    let mut acc = 0.0;
    for (i, &t) in temps.iter().enumerate() {
        let lo = (i as f64 * layer_vol).max(a);
        let hi = ((i + 1) as f64 * layer_vol).min(b);
        if hi > lo {
            acc += (hi - lo) * t;
        }
    }
    let inlet_lo = total_vol.max(a);
    if b > inlet_lo {
        acc += (b - inlet_lo) * t_inlet;
    }
    acc / (b - a)
}

// Pool-adjacent-violators with equal layer masses: repeatedly mixing each
// inverted pair to its mean converges to exactly this block structure.
fn settle_buoyancy(temps: &mut [f64]) {
    let n = temps.len();
    let mut block_sum: Vec<f64> = Vec::with_capacity(n);
    let mut block_len: Vec<usize> = Vec::with_capacity(n);
    for &t in temps.iter() {
        let mut sum = t;
        let mut len = 1usize;
        while let (Some(&ps), Some(&pl)) = (block_sum.last(), block_len.last()) {
            // Lower block warmer than the one above -> unstable, merge.
            if sum / len as f64 > ps / pl as f64 {
                sum += ps;
                len += pl;
                block_sum.pop();
                block_len.pop();
            } else {
                break;
            }
        }
        block_sum.push(sum);
        block_len.push(len);
    }
    let mut i = 0;
    for (sum, len) in block_sum.iter().zip(&block_len) {
        let mean = sum / *len as f64;
        for _ in 0..*len {
            temps[i] = mean;
            i += 1;
        }
    }
}

/// Advance the tank by one step. Substep order: draw, heater, ambient loss,
/// conduction, buoyancy. Returns the new state and the step's energy terms.
pub fn step(
    state: &TankState,
    draw_liters: f64,
    hp_active: bool,
    cfg: &TankConfig,
) -> Result<(TankState, StepEnergy)> {
    if !state.is_finite() || !draw_liters.is_finite() {
        return Err(Error::NumericFault(
            "non-finite tank state or draw volume".into(),
        ));
    }
    if draw_liters < 0.0 || draw_liters > cfg.volume_liters {
        return Err(Error::InvalidDraw {
            draw_liters,
            volume_liters: cfg.volume_liters,
        });
    }

    let n = cfg.n_layers;
    debug_assert_eq!(state.layer_temps.len(), n);
    let layer_vol = cfg.layer_volume();
    let layer_cap = cfg.layer_capacity();
    let mut temps = state.layer_temps.clone();
    let mut energy = StepEnergy::default();
    let u_before = state.internal_energy(cfg);

    // (1) Plug-flow draw: the drawn band leaves the top, everything shifts
    // up, inlet water enters at the bottom.
    if draw_liters > 0.0 {
        let drawn_mean = band_mean(
            &temps,
            layer_vol,
            cfg.volume_liters,
            cfg.t_inlet_c,
            0.0,
            draw_liters,
        );
        energy.draw_out_j = draw_liters * KG_PER_LITER * WATER_HEAT_CAPACITY * drawn_mean;
        energy.inlet_in_j = draw_liters * KG_PER_LITER * WATER_HEAT_CAPACITY * cfg.t_inlet_c;
        let mut shifted = vec![0.0; n];
        for (i, slot) in shifted.iter_mut().enumerate() {
            let a = i as f64 * layer_vol + draw_liters;
            let b = (i + 1) as f64 * layer_vol + draw_liters;
            *slot = band_mean(&temps, layer_vol, cfg.volume_liters, cfg.t_inlet_c, a, b);
        }
        temps = shifted;
    }

    // (2) Heater injection into the bottom two layers.
    if hp_active {
        energy.injected_j = cfg.heater_power_w * cfg.dt_seconds;
        let dt_per_layer = energy.injected_j / 2.0 / layer_cap;
        temps[n - 1] += dt_per_layer;
        temps[n - 2] += dt_per_layer;
    }

    // (3) Ambient loss, exact exponential relaxation toward t_ambient.
    let loss_decay =
        (-(cfg.ua_loss_w_per_k / n as f64) * cfg.dt_seconds / layer_cap).exp();
    for t in temps.iter_mut() {
        let relaxed = cfg.t_ambient_c + (*t - cfg.t_ambient_c) * loss_decay;
        energy.ambient_loss_j += layer_cap * (*t - relaxed);
        *t = relaxed;
    }

    // (4) Conduction: exact pairwise relaxation, one top-to-bottom sweep.
    // Each exchange preserves the pair's energy.
    let cond_decay = (-2.0 * cfg.k_cond_w_per_k * cfg.dt_seconds / layer_cap).exp();
    for i in 0..n - 1 {
        let mean = 0.5 * (temps[i] + temps[i + 1]);
        let half_diff = 0.5 * (temps[i] - temps[i + 1]) * cond_decay;
        temps[i] = mean + half_diff;
        temps[i + 1] = mean - half_diff;
    }

    // (5) Buoyancy: resolve inversions by mixing, restoring stratification.
    settle_buoyancy(&mut temps);

    let next = TankState { layer_temps: temps };
    if !next.is_finite() {
        return Err(Error::NumericFault("tank state became non-finite".into()));
    }
    energy.internal_delta_j = next.internal_energy(cfg) - u_before;
    Ok((next, energy))
}

/// Deadband reheat controller: on below `t_low`, off at or above `t_high`,
/// otherwise keep the previous state.
pub fn hysteresis_control(
    state: &TankState,
    profile: &HouseholdProfile,
    prev_hp_active: bool,
) -> bool {
    let t_mid = state.mid_temp();
    if t_mid < profile.t_low_c {
        true
    } else if t_mid >= profile.t_high_c {
        false
    } else {
        prev_hp_active
    }
}

/// Sequential simulator for one household, stepping quarter-hour by
/// quarter-hour with the hysteresis controller in the loop.
pub struct HouseholdSim {
    pub cfg: TankConfig,
    pub profile: HouseholdProfile,
    pub state: TankState,
    pub hp_active: bool,
    pub step_index: usize,
}

impl HouseholdSim {
    pub fn new(cfg: TankConfig, profile: HouseholdProfile) -> Result<Self> {
        cfg.validate()?;
        profile.validate()?;
        let start = 0.5 * (profile.t_low_c + profile.t_high_c);
        Ok(HouseholdSim {
            state: TankState::uniform(cfg.n_layers, start),
            cfg,
            profile,
            hp_active: false,
            step_index: 0,
        })
    }

    /// Apply controller decision and one physics step for a given draw.
    pub fn advance(&mut self, draw_liters: f64) -> Result<SimRecord> {
        self.hp_active = hysteresis_control(&self.state, &self.profile, self.hp_active);
        let draw = draw_liters.min(self.cfg.volume_liters);
        let (next, _energy) = step(&self.state, draw, self.hp_active, &self.cfg)?;
        self.state = next;
        let record = SimRecord {
            step_index: self.step_index,
            draw_liters: draw,
            hp_active: self.hp_active,
            t_mid: self.state.mid_temp(),
        };
        self.step_index += 1;
        Ok(record)
    }

    /// Simulate `n_days` starting at day index `start_day`, appending one
    /// record per quarter-hour.
    pub fn run_days(&mut self, start_day: usize, n_days: usize, out: &mut Vec<SimRecord>) -> Result<()> {
        for day in start_day..start_day + n_days {
            let draws = sample_draws(&self.profile, day);
            for &d in &draws {
                out.push(self.advance(d)?);
            }
        }
        Ok(())
    }
}

/// Simulate one household for `n_days` from the standard initial state
/// (uniform at the midpoint of the setpoint band, heater off).
pub fn simulate_household(
    cfg: &TankConfig,
    profile: &HouseholdProfile,
    n_days: usize,
) -> Result<Vec<SimRecord>> {
    if n_days < 1 {
        return Err(Error::InvalidConfig("n_days must be at least 1".into()));
    }
    let mut sim = HouseholdSim::new(cfg.clone(), profile.clone())?;
    let mut records = Vec::with_capacity(n_days * STEPS_PER_DAY);
    sim.run_days(0, n_days, &mut records)?;
    Ok(records)
}

#[cfg(test)]
mod tests;

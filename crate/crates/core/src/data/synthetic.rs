//! Synthetic building series: seasonal + diurnal weather with a cold front,
//! a rule-based discharge set-point schedule and smooth ground-truth energy
//! functions of weather and `sat`.

use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::frame::{Column, TimeSeriesFrame};
use crate::env::{operating_mode, OperatingMode, SETPOINT_MAX, SETPOINT_MIN};
use crate::error::{Error, Result};
use crate::util::{rng_for, softplus};

/// Sampling period of generated series, minutes.
pub const SYNTHETIC_PERIOD: u32 = 5;

/// Samples between a state and the energy it causes (one half hour).
pub const ENERGY_LAG: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherModel {
    /// Mean outside air temperature before the front, °F.
    pub oat_mean: f64,
    pub seasonal_amplitude: f64,
    /// Day offset of the seasonal maximum relative to `start`.
    pub seasonal_peak_day: f64,
    pub diurnal_amplitude: f64,
    /// Temperature drop of the cold front, °F.
    pub front_drop: f64,
    /// The front's midpoint is this many days before the shift week begins.
    pub front_lead_days: f64,
    pub front_width_days: f64,
    pub orh_mean: f64,
    pub orh_amplitude: f64,
    /// Wet-bulb depression at 60 %RH; scales with `(100 - orh)`.
    pub wbt_depression: f64,
    pub solar_peak: f64,
}

impl Default for WeatherModel {
    fn default() -> Self {
        Self {
            oat_mean: 74.0,
            seasonal_amplitude: 4.0,
            seasonal_peak_day: 0.0,
            diurnal_amplitude: 7.0,
            front_drop: 26.0,
            front_lead_days: 2.0,
            front_width_days: 0.25,
            orh_mean: 60.0,
            orh_amplitude: 15.0,
            wbt_depression: 8.0,
            solar_peak: 800.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseScales {
    /// Std of the AR(1) temperature disturbance, °F.
    pub oat: f64,
    /// Std of the AR(1) humidity disturbance, %RH.
    pub orh: f64,
    /// Maximum daily cloud attenuation of solar radiation, fraction.
    pub cloud: f64,
    /// Discharge air sensor noise, °F.
    pub sat: f64,
    /// Relative noise on each 5-minute energy sample.
    pub energy: f64,
    /// Half-width of the operator's set-point jitter per 2-hour block, °F.
    pub setpoint_jitter: f64,
}

impl Default for NoiseScales {
    fn default() -> Self {
        Self { oat: 1.5, orh: 4.0, cloud: 0.5, sat: 0.3, energy: 0.03, setpoint_jitter: 7.0 }
    }
}

impl NoiseScales {
    pub fn zero() -> Self {
        Self { oat: 0.0, orh: 0.0, cloud: 0.0, sat: 0.0, energy: 0.0, setpoint_jitter: 0.0 }
    }
}

/// Ground-truth plant: hourly energy rates (kBTU/h) as smooth functions of
/// weather and discharge temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantModel {
    /// Reheat coil, per °F of `sat` above the 52 °F coil leaving temperature.
    pub reheat_gain: f64,
    /// Preheat coil, per °F of `sat` above `oat`.
    pub preheat_gain: f64,
    /// Cooling coil, per °F of `oat` above 52 °F, reheat mode only.
    pub cooling_coil_gain: f64,
    /// Zone heating demand when supply air is below the balance temperature.
    pub zone_heat_gain: f64,
    pub zone_cool_gain: f64,
    pub softness: f64,
    /// The valve shuts when unoccupied and `oat` is at least this, °F.
    pub valve_off_unoccupied_oat: f64,
    /// The valve shuts in reheat mode when `oat` is at least this, °F.
    pub valve_off_reheat_oat: f64,
    pub rbc_reheat_setpoint: f64,
    pub rbc_preheat_setpoint: f64,
}

impl Default for PlantModel {
    fn default() -> Self {
        Self {
            reheat_gain: 3.0,
            preheat_gain: 2.5,
            cooling_coil_gain: 3.0,
            zone_heat_gain: 12.0,
            zone_cool_gain: 5.0,
            softness: 1.5,
            valve_off_unoccupied_oat: 45.0,
            valve_off_reheat_oat: 84.0,
            rbc_reheat_setpoint: 65.0,
            rbc_preheat_setpoint: 72.0,
        }
    }
}

impl PlantModel {
    pub fn valve_open(&self, oat: f64, wbt: f64, occupied: bool) -> bool {
        let mode = operating_mode(wbt);
        !((!occupied && oat >= self.valve_off_unoccupied_oat)
            || (mode == OperatingMode::Reheat && oat >= self.valve_off_reheat_oat))
    }

    /// Heating and cooling rates (kBTU/h) for one state.
    pub fn rates(&self, oat: f64, wbt: f64, sol: f64, sat: f64, occupied: bool) -> (f64, f64) {
        let s = self.softness;
        let mode = operating_mode(wbt);
        let t_bal = 72.0 + 0.4 * (50.0 - oat);
        let t_cool = 66.0 + 0.4 * (70.0 - oat) - 0.004 * sol;
        let zone_heat = self.zone_heat_gain * s * softplus((t_bal - sat) / s);
        let zone_cool = self.zone_cool_gain * s * softplus((sat - t_cool) / s);
        let (coil_heat, coil_cool) = match mode {
            OperatingMode::Reheat => {
                (self.reheat_gain * (sat - 52.0).max(0.0), self.cooling_coil_gain * (oat - 52.0).max(0.0))
            }
            OperatingMode::Preheat => (self.preheat_gain * (sat - oat).max(0.0), 0.0),
        };
        let heat = if self.valve_open(oat, wbt, occupied) { coil_heat + zone_heat } else { 0.0 };
        (heat, coil_cool + zone_cool)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticGenConfig {
    pub start: NaiveDateTime,
    pub n_weeks: u32,
    pub seed: u64,
    /// First week whose weather is fully post-front.
    pub regime_shift_week: u32,
    /// Shortest accepted series, weeks.
    pub min_weeks: u32,
    pub weather: WeatherModel,
    pub noise: NoiseScales,
    pub plant: PlantModel,
}

impl Default for SyntheticGenConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2019, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            n_weeks: 21,
            seed: 7,
            regime_shift_week: 17,
            min_weeks: 15,
            weather: WeatherModel::default(),
            noise: NoiseScales::default(),
            plant: PlantModel::default(),
        }
    }
}

/// Noise-free weather at a point in time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeatherSample {
    pub oat: f64,
    pub orh: f64,
    pub wbt: f64,
    pub sol: f64,
}

impl SyntheticGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_weeks < self.min_weeks {
            return Err(Error::config(format!("n_weeks = {} is below the minimum of {}", self.n_weeks, self.min_weeks)));
        }
        if self.start.minute() % 30 != 0 || self.start.second() != 0 {
            return Err(Error::config("start must fall on a half-hour boundary"));
        }
        let w = &self.weather;
        let n = &self.noise;
        let all = [
            w.oat_mean,
            w.seasonal_amplitude,
            w.diurnal_amplitude,
            w.front_drop,
            w.front_lead_days,
            w.orh_mean,
            w.orh_amplitude,
            w.wbt_depression,
            w.solar_peak,
            n.oat,
            n.orh,
            n.cloud,
            n.sat,
            n.energy,
            n.setpoint_jitter,
        ];
        if all.iter().any(|v| !v.is_finite()) || w.front_width_days <= 0.0 {
            return Err(Error::config("weather and noise parameters must be finite, front width positive"));
        }
        if [n.oat, n.orh, n.cloud, n.sat, n.energy, n.setpoint_jitter].iter().any(|v| *v < 0.0) || n.cloud > 1.0 {
            return Err(Error::config("noise scales must be non-negative and cloud at most 1"));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_weeks as usize * 7 * 24 * 60 / SYNTHETIC_PERIOD as usize
    }

    /// Deterministic weather component at `days` after `start` (fractional).
    pub fn expected_weather(&self, days: f64) -> WeatherSample {
        let w = &self.weather;
        let hour = (days.rem_euclid(1.0) + self.start_hour_fraction()) * 24.0;
        let d_front = 7.0 * self.regime_shift_week as f64 - w.front_lead_days;
        let front = logistic((days - d_front) / w.front_width_days);
        let base = w.oat_mean + w.seasonal_amplitude * (2.0 * PI * (days - w.seasonal_peak_day) / 365.0).cos()
            - w.front_drop * front;
        let diurnal = (2.0 * PI * (hour - 9.0) / 24.0).sin();
        let oat = base + w.diurnal_amplitude * diurnal;
        let orh = (w.orh_mean - w.orh_amplitude * diurnal).clamp(0.0, 100.0);
        let wbt = wet_bulb(oat, orh, w.wbt_depression);
        let sol = w.solar_peak * (PI * (hour - 6.0) / 12.0).sin().max(0.0);
        WeatherSample { oat, orh, wbt, sol }
    }

    fn start_hour_fraction(&self) -> f64 {
        self.start.num_seconds_from_midnight() as f64 / 86_400.0
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn wet_bulb(oat: f64, orh: f64, depression: f64) -> f64 {
    oat - depression * (100.0 - orh) / 40.0
}

pub fn is_occupied(t: NaiveDateTime) -> bool {
    let weekday = !matches!(t.weekday(), Weekday::Sat | Weekday::Sun);
    weekday && (7..19).contains(&t.hour())
}

/// Deterministic 5-minute series for `config`.
pub fn generate_synthetic(config: &SyntheticGenConfig) -> Result<TimeSeriesFrame> {
    config.validate()?;
    let n = config.n_samples();
    let step = chrono::Duration::minutes(SYNTHETIC_PERIOD as i64);
    let timestamps: Vec<NaiveDateTime> = (0..n).map(|i| config.start + step * i as i32).collect();
    let days_of = |i: usize| (i as f64 * SYNTHETIC_PERIOD as f64) / 1440.0;
    let noise = &config.noise;
    let plant = &config.plant;

    // Independent streams so each column's noise does not depend on the others.
    let mut rng_oat = rng_for(config.seed, 1);
    let mut rng_orh = rng_for(config.seed, 2);
    let mut rng_cloud = rng_for(config.seed, 3);
    let mut rng_stpt = rng_for(config.seed, 4);
    let mut rng_sat = rng_for(config.seed, 5);
    let mut rng_energy = rng_for(config.seed, 6);

    let rho: f64 = 0.995;
    let innov = (1.0 - rho * rho).sqrt();
    let (mut e_oat, mut e_orh) = (0.0, 0.0);
    let n_days = n.div_ceil(288);
    let clouds: Vec<f64> = (0..n_days).map(|_| noise.cloud * rng_cloud.random::<f64>()).collect();
    let day_stpt: Vec<f64> = (0..n_days).map(|_| 70.0 + rng_stpt.random_range(0..3u8) as f64).collect();

    let mut cols: [Vec<f64>; 8] = std::array::from_fn(|_| Vec::with_capacity(n));
    let mut occupied = Vec::with_capacity(n);
    let mut block_setpoint = f64::NAN;
    for (i, &t) in timestamps.iter().enumerate() {
        let z1: f64 = StandardNormal.sample(&mut rng_oat);
        let z2: f64 = StandardNormal.sample(&mut rng_orh);
        e_oat = rho * e_oat + innov * noise.oat * z1;
        e_orh = rho * e_orh + innov * noise.orh * z2;
        let det = config.expected_weather(days_of(i));
        let oat = det.oat + e_oat;
        let orh = (det.orh + e_orh).clamp(0.0, 100.0);
        let wbt = wet_bulb(oat, orh, config.weather.wbt_depression);
        let day = i / 288;
        let sol = det.sol * (1.0 - clouds[day]);
        let occ = is_occupied(t);
        let avg_stpt = if occ { day_stpt[day] } else { 68.0 };

        // The operator revisits the set point every two hours.
        if i % 24 == 0 {
            let base = match operating_mode(wbt) {
                OperatingMode::Reheat => plant.rbc_reheat_setpoint,
                OperatingMode::Preheat => plant.rbc_preheat_setpoint,
            };
            let jitter = if noise.setpoint_jitter > 0.0 {
                rng_stpt.random_range(-noise.setpoint_jitter..=noise.setpoint_jitter)
            } else {
                0.0
            };
            block_setpoint = ((base + jitter) * 2.0).round() / 2.0;
            block_setpoint = block_setpoint.clamp(SETPOINT_MIN, SETPOINT_MAX);
        }
        let z3: f64 = StandardNormal.sample(&mut rng_sat);
        let sat = block_setpoint + noise.sat * z3;

        for (c, v) in [
            (Column::Oat, oat),
            (Column::Orh, orh),
            (Column::Wbt, wbt),
            (Column::Sol, sol),
            (Column::AvgStpt, avg_stpt),
            (Column::Sat, sat),
        ] {
            cols[c.index()].push(v);
        }
        occupied.push(occ);
    }

    for i in 0..n {
        let k = i.saturating_sub(ENERGY_LAG);
        let (heat, cool) = plant.rates(
            cols[Column::Oat.index()][k],
            cols[Column::Wbt.index()][k],
            cols[Column::Sol.index()][k],
            cols[Column::Sat.index()][k],
            occupied[k],
        );
        let per_sample = SYNTHETIC_PERIOD as f64 / 60.0;
        let z_h: f64 = StandardNormal.sample(&mut rng_energy);
        let z_c: f64 = StandardNormal.sample(&mut rng_energy);
        cols[Column::Hwe.index()].push((heat * per_sample * (1.0 + noise.energy * z_h)).max(0.0));
        cols[Column::Cwe.index()].push((cool * per_sample * (1.0 + noise.energy * z_c)).max(0.0));
    }

    let frame = TimeSeriesFrame::new(timestamps, SYNTHETIC_PERIOD, cols)?;
    frame.check_physical()?;
    Ok(frame)
}

//! Deterministic discrete-time model of a lettuce bed.
//!
//! Temperature, humidity and light follow fixed daily curves; soil moisture
//! integrates drip inflow against temperature-dependent evaporation. Mist
//! cools the air and raises humidity for the tick it is on. Optional Gaussian
//! noise is drawn from a ChaCha stream keyed by `(seed, tick)`, so a step is a
//! pure function of its inputs.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recommend::SensorSnapshot;

const SECONDS_PER_DAY: u64 = 86_400;
const FORECAST_STREAM: u64 = 1 << 63;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sim config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sim config {origin}: {reason}")]
    Parse { origin: String, reason: String },
    #[error("sim config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Switch {
    On,
    #[default]
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Switch::On => "ON",
            Switch::Off => "OFF",
        }
    }
}

impl fmt::Display for Switch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActuatorState {
    pub drip: Switch,
    pub mist: Switch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldState {
    pub soil_moisture: f64,
    pub air_temp: f64,
    pub rel_humidity: f64,
    pub light: f64,
    pub tick: u64,
}

impl FieldState {
    /// Field at tick 0: configured soil moisture, weather on its daily curves.
    pub fn initial(cfg: &SimConfig) -> Self {
        FieldState {
            soil_moisture: clamp_pct(cfg.initial_soil_moisture),
            air_temp: cfg.diurnal_temp(0),
            rel_humidity: clamp_pct(cfg.diurnal_humidity(0)),
            light: cfg.diurnal_light(0),
            tick: 0,
        }
    }

    pub fn snapshot(&self, ts: i64) -> SensorSnapshot {
        SensorSnapshot {
            ts,
            air_temp: self.air_temp,
            rel_humidity: self.rel_humidity,
            soil_moisture: self.soil_moisture,
            light: self.light,
        }
    }
}

/// Model constants. Loaded from a flat JSON object; absent keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub tick_seconds: u32,
    /// %VWC added per tick while drip is on.
    pub k_drip: f64,
    /// Base %VWC lost per tick.
    pub k_evap: f64,
    /// °C removed while mist is on.
    pub k_mist_temp: f64,
    /// % humidity added while mist is on.
    pub k_mist_hum: f64,
    pub temp_mean: f64,
    pub temp_amplitude: f64,
    pub humidity_mean: f64,
    pub humidity_amplitude: f64,
    /// Midday light in lux.
    pub light_peak: f64,
    pub noise_soil: f64,
    pub noise_temp: f64,
    pub noise_humidity: f64,
    pub noise_light: f64,
    /// Local time of day (seconds after midnight) at tick 0.
    pub start_second_of_day: u32,
    pub initial_soil_moisture: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            tick_seconds: 600,
            k_drip: 1.5,
            k_evap: 0.4,
            k_mist_temp: 0.8,
            k_mist_hum: 1.2,
            temp_mean: 26.0,
            temp_amplitude: 5.0,
            humidity_mean: 70.0,
            humidity_amplitude: 15.0,
            light_peak: 50_000.0,
            noise_soil: 0.0,
            noise_temp: 0.0,
            noise_humidity: 0.0,
            noise_light: 0.0,
            start_second_of_day: 0,
            initial_soil_moisture: 35.0,
        }
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&path.display().to_string(), &text)
    }

    pub fn from_json(origin: &str, text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| SimError::Parse {
            origin: origin.to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Returns a copy with the keys of `overrides` (a flat JSON object) replaced.
    pub fn with_overrides(
        &self,
        overrides: &serde_json::Map<String, serde_json::Value>,
    ) -> Result<Self, SimError> {
        let mut value = serde_json::to_value(self).expect("sim config serializes");
        let map = value.as_object_mut().expect("sim config is an object");
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        let cfg: SimConfig = serde_json::from_value(value).map_err(|e| SimError::Parse {
            origin: "overrides".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.tick_seconds == 0 {
            return Err(SimError::Invalid("tick_seconds must be at least 1".into()));
        }
        let rates = [
            ("k_drip", self.k_drip),
            ("k_evap", self.k_evap),
            ("k_mist_temp", self.k_mist_temp),
            ("k_mist_hum", self.k_mist_hum),
            ("noise_soil", self.noise_soil),
            ("noise_temp", self.noise_temp),
            ("noise_humidity", self.noise_humidity),
            ("noise_light", self.noise_light),
            ("light_peak", self.light_peak),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(SimError::Invalid(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("temp_mean", self.temp_mean),
            ("temp_amplitude", self.temp_amplitude),
            ("humidity_mean", self.humidity_mean),
            ("humidity_amplitude", self.humidity_amplitude),
            ("initial_soil_moisture", self.initial_soil_moisture),
        ] {
            if !v.is_finite() {
                return Err(SimError::Invalid(format!("{name} must be finite")));
            }
        }
        if u64::from(self.start_second_of_day) >= SECONDS_PER_DAY {
            return Err(SimError::Invalid("start_second_of_day must be < 86400".into()));
        }
        Ok(())
    }

    pub fn ticks_per_day(&self) -> u64 {
        SECONDS_PER_DAY.div_ceil(u64::from(self.tick_seconds))
    }

    fn noise_free(&self) -> bool {
        self.noise_soil == 0.0
            && self.noise_temp == 0.0
            && self.noise_humidity == 0.0
            && self.noise_light == 0.0
    }

    /// Fraction of the day elapsed at `tick`, in [0, 1).
    fn day_fraction(&self, tick: u64) -> f64 {
        let seconds = u64::from(self.start_second_of_day)
            + (tick % SECONDS_PER_DAY) * u64::from(self.tick_seconds);
        (seconds % SECONDS_PER_DAY) as f64 / SECONDS_PER_DAY as f64
    }

    /// Sine wave peaking at 15:00.
    fn afternoon_wave(&self, tick: u64) -> f64 {
        (2.0 * PI * (self.day_fraction(tick) - 9.0 / 24.0)).sin()
    }

    pub fn diurnal_temp(&self, tick: u64) -> f64 {
        self.temp_mean + self.temp_amplitude * self.afternoon_wave(tick)
    }

    pub fn diurnal_humidity(&self, tick: u64) -> f64 {
        self.humidity_mean - self.humidity_amplitude * self.afternoon_wave(tick)
    }

    /// Half-sine between 06:00 and 18:00, zero at night.
    pub fn diurnal_light(&self, tick: u64) -> f64 {
        let hours = self.day_fraction(tick) * 24.0;
        let x = (hours - 6.0) / 12.0;
        if x > 0.0 && x < 1.0 {
            self.light_peak * (PI * x).sin()
        } else {
            0.0
        }
    }
}

fn clamp_pct(v: f64) -> f64 {
    v.clamp(0.0, 100.0)
}

/// Extra evaporation above 25 °C.
pub fn evap_factor(temp: f64) -> f64 {
    1.0 + 0.05 * (temp - 25.0).max(0.0)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma)
        .expect("sigma validated finite and >= 0")
        .sample(rng)
}

/// Advances the field by one tick under the given actuator states.
pub fn step(state: &FieldState, act: ActuatorState, cfg: &SimConfig) -> FieldState {
    let next_tick = state.tick + 1;
    let [n_soil, n_temp, n_hum, n_light] = if cfg.noise_free() {
        [0.0; 4]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(next_tick);
        [
            gaussian(&mut rng, cfg.noise_soil),
            gaussian(&mut rng, cfg.noise_temp),
            gaussian(&mut rng, cfg.noise_humidity),
            gaussian(&mut rng, cfg.noise_light),
        ]
    };
    let drip = if act.drip.is_on() { cfg.k_drip } else { 0.0 };
    let mist = if act.mist.is_on() { 1.0 } else { 0.0 };

    FieldState {
        soil_moisture: clamp_pct(
            state.soil_moisture + drip - cfg.k_evap * evap_factor(state.air_temp) + n_soil,
        ),
        air_temp: cfg.diurnal_temp(next_tick) - cfg.k_mist_temp * mist + n_temp,
        rel_humidity: clamp_pct(cfg.diurnal_humidity(next_tick) + cfg.k_mist_hum * mist + n_hum),
        light: (cfg.diurnal_light(next_tick) + n_light).max(0.0),
        tick: next_tick,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub day_index: u64,
    pub min_temp: f64,
    pub max_temp: f64,
    pub rain_chance: u8,
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Synthetic daily forecast, a pure function of `(cfg.seed, day_index)`.
pub fn weather_forecast(cfg: &SimConfig, day_index: u64) -> Forecast {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(FORECAST_STREAM | day_index);
    let jitter = Uniform::new_inclusive(-2.0, 2.0).expect("valid range");
    let low = round1(cfg.temp_mean - cfg.temp_amplitude + jitter.sample(&mut rng));
    let high = round1(cfg.temp_mean + cfg.temp_amplitude + jitter.sample(&mut rng));
    let rain = Uniform::new_inclusive(0u8, 100u8)
        .expect("valid range")
        .sample(&mut rng);
    Forecast {
        day_index,
        min_temp: low.min(high),
        max_temp: low.max(high),
        rain_chance: rain,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(soil: f64, temp: f64) -> FieldState {
        FieldState {
            soil_moisture: soil,
            air_temp: temp,
            rel_humidity: 70.0,
            light: 0.0,
            tick: 0,
        }
    }

    #[test]
    fn drip_step_arithmetic() {
        let cfg = SimConfig::default();
        let act = ActuatorState {
            drip: Switch::On,
            mist: Switch::Off,
        };
        let next = step(&state(30.0, 25.0), act, &cfg);
        assert!((next.soil_moisture - 31.1).abs() < 1e-9, "{}", next.soil_moisture);
        assert_eq!(next.tick, 1);
    }

    #[test]
    fn soil_clamps_at_zero() {
        let cfg = SimConfig::default();
        let next = step(&state(0.2, 25.0), ActuatorState::default(), &cfg);
        assert_eq!(next.soil_moisture, 0.0);
    }

    #[test]
    fn evaporation_grows_above_25c() {
        assert_eq!(evap_factor(20.0), 1.0);
        assert!((evap_factor(35.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn step_is_deterministic_even_with_noise() {
        let cfg = SimConfig {
            seed: 7,
            noise_soil: 0.5,
            noise_temp: 0.3,
            noise_humidity: 1.0,
            noise_light: 500.0,
            ..SimConfig::default()
        };
        let s = FieldState::initial(&cfg);
        let act = ActuatorState::default();
        assert_eq!(step(&s, act, &cfg), step(&s, act, &cfg));
        let other = SimConfig { seed: 8, ..cfg.clone() };
        assert_ne!(step(&s, act, &cfg), step(&s, act, &other));
    }

    #[test]
    fn diurnal_shape() {
        let cfg = SimConfig::default();
        let per_hour = 3600 / u64::from(cfg.tick_seconds);
        assert!((cfg.diurnal_temp(15 * per_hour) - 31.0).abs() < 1e-9);
        assert!((cfg.diurnal_temp(3 * per_hour) - 21.0).abs() < 1e-9);
        assert!((cfg.diurnal_light(12 * per_hour) - 50_000.0).abs() < 1e-6);
        assert_eq!(cfg.diurnal_light(0), 0.0);
        assert_eq!(cfg.diurnal_light(20 * per_hour), 0.0);
        assert!((cfg.diurnal_humidity(3 * per_hour) - 85.0).abs() < 1e-9);
    }

    #[test]
    fn forecast_is_pure_and_ordered() {
        let cfg = SimConfig {
            seed: 42,
            ..SimConfig::default()
        };
        for day in 0..30 {
            let f = weather_forecast(&cfg, day);
            assert_eq!(f, weather_forecast(&cfg, day));
            assert!(f.min_temp <= f.max_temp);
            assert!(f.rain_chance <= 100);
        }
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let mut o = serde_json::Map::new();
        o.insert("k_drip".into(), serde_json::json!(2.0));
        let cfg = SimConfig::default().with_overrides(&o).unwrap();
        assert_eq!(cfg.k_drip, 2.0);
        assert!(SimConfig::from_json("t", r#"{"k_drp":1}"#).is_err());
        assert!(SimConfig::from_json("t", r#"{"k_evap":-1}"#).is_err());
        assert!(SimConfig::from_json("t", r#"{"tick_seconds":0}"#).is_err());
        assert_eq!(SimConfig::from_json("t", "{}").unwrap(), SimConfig::default());
    }

    fn arb_schedule() -> impl Strategy<Value = Vec<(bool, bool)>> {
        proptest::collection::vec((any::<bool>(), any::<bool>()), 1..300)
    }

    proptest! {
        #[test]
        fn states_stay_in_bounds(
            schedule in arb_schedule(),
            soil in 0.0f64..100.0,
            seed in any::<u64>(),
            noisy in any::<bool>(),
        ) {
            let sigma = if noisy { 3.0 } else { 0.0 };
            let cfg = SimConfig {
                seed,
                initial_soil_moisture: soil,
                noise_soil: sigma,
                noise_temp: sigma,
                noise_humidity: sigma * 5.0,
                noise_light: sigma * 1000.0,
                ..SimConfig::default()
            };
            let mut s = FieldState::initial(&cfg);
            for (drip, mist) in schedule {
                let act = ActuatorState {
                    drip: if drip { Switch::On } else { Switch::Off },
                    mist: if mist { Switch::On } else { Switch::Off },
                };
                s = step(&s, act, &cfg);
                prop_assert!((0.0..=100.0).contains(&s.soil_moisture));
                prop_assert!((0.0..=100.0).contains(&s.rel_humidity));
                prop_assert!(s.light >= 0.0);
                prop_assert!(s.air_temp.is_finite());
            }
        }

        #[test]
        fn drip_and_mist_are_monotone(ticks in 1usize..400, soil in 0.0f64..100.0) {
            let cfg = SimConfig { initial_soil_moisture: soil, ..SimConfig::default() };
            let start = FieldState::initial(&cfg);
            let (mut wet, mut dry) = (start, start);
            let (mut misted, mut plain) = (start, start);
            let on = ActuatorState { drip: Switch::On, mist: Switch::Off };
            let mist = ActuatorState { drip: Switch::Off, mist: Switch::On };
            for _ in 0..ticks {
                wet = step(&wet, on, &cfg);
                dry = step(&dry, ActuatorState::default(), &cfg);
                misted = step(&misted, mist, &cfg);
                plain = step(&plain, ActuatorState::default(), &cfg);
                prop_assert!(wet.soil_moisture >= dry.soil_moisture);
                prop_assert!(misted.air_temp <= plain.air_temp);
            }
        }
    }
}

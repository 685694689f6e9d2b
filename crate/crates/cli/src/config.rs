use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use aqc_tsp::bounds::theta_for_unit_resource;
use aqc_tsp::evolution::Stepper;
use aqc_tsp::fock::OccupationCutoff;
use aqc_tsp::schedule::Schedule;
use aqc_tsp::tsp_model::{ModelConfig, PenaltyVariant, TspInstance, DEFAULT_EPSILON_S};
use aqc_tsp::Complex64;

/// Coherent-state parameter: a number, or `auto` for `((N−1)!)^(−1/2N)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Theta {
    #[default]
    Auto,
    Value(f64),
}

impl Theta {
    pub fn resolve(self, n_cities: usize) -> f64 {
        match self {
            Theta::Auto => theta_for_unit_resource(n_cities),
            Theta::Value(v) => v,
        }
    }
}

impl FromStr for Theta {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Theta::Auto);
        }
        s.parse::<f64>().map(Theta::Value).map_err(|_| format!("theta must be a number or \"auto\", got {s:?}"))
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta::Auto => f.write_str("auto"),
            Theta::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Theta {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Theta::Auto => s.serialize_str("auto"),
            Theta::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Theta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Theta::Value(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Toml,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Toml => "toml",
        }
    }
}

/// Everything a run depends on. Reports embed it, so a run can be repeated
/// from its report alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub instance: Option<PathBuf>,
    pub theta: Theta,
    pub per_mode_max: u8,
    pub link_total_max: Option<u32>,
    pub symmetric_links: bool,
    pub epsilon_s: f64,
    pub penalty: PenaltyVariant,
    pub schedule: Schedule,
    pub total_time: f64,
    pub dt: f64,
    pub stepper: Stepper,
    /// Levels tracked by the spectral flow.
    pub levels: usize,
    /// τ samples of the spectral flow.
    pub tau_samples: usize,
    /// Keep every `sample_stride`-th step in evolution traces.
    pub sample_stride: usize,
    pub output_dir: Option<PathBuf>,
    pub format: ReportFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            instance: None,
            theta: Theta::Auto,
            per_mode_max: 2,
            link_total_max: None,
            symmetric_links: false,
            epsilon_s: DEFAULT_EPSILON_S,
            penalty: PenaltyVariant::HermitianSquare,
            schedule: Schedule::Linear,
            total_time: 10.0,
            dt: 0.05,
            stepper: Stepper::Magnus4,
            levels: 4,
            tau_samples: 41,
            sample_stride: 1,
            output_dir: None,
            format: ReportFormat::Json,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config = if is_json(path) {
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        };
        Ok(config)
    }

    pub fn load_instance(&self) -> anyhow::Result<TspInstance> {
        let Some(path) = &self.instance else { bail!(crate::ValidationError("no instance given; pass --instance".into())) };
        read_instance(path)
    }

    pub fn cutoff(&self, n_cities: usize) -> OccupationCutoff {
        OccupationCutoff::filter_ready(n_cities, self.per_mode_max, self.link_total_max)
    }

    pub fn model(&self, n_cities: usize) -> ModelConfig {
        ModelConfig {
            symmetric_links: self.symmetric_links,
            cutoff: self.cutoff(n_cities),
            theta: Complex64::new(self.theta.resolve(n_cities), 0.0),
            variant: self.penalty,
            epsilon_s: self.epsilon_s,
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads `n_cities` and `distances` from a TOML or (by extension) JSON file.
pub fn read_instance(path: &Path) -> anyhow::Result<TspInstance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading instance {}", path.display()))?;
    let parsed = if is_json(path) {
        serde_json::from_str::<TspInstance>(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str::<TspInstance>(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| crate::ValidationError(format!("instance {}: {e}", path.display())).into())
}

/// `linear`, `scaled=K`, `quadratic-boost=K` or `exponential-boost=M` (`K = e^M`).
pub fn parse_schedule(s: &str) -> Result<Schedule, String> {
    let (name, arg) = match s.split_once('=') {
        Some((n, a)) => (n, Some(a.parse::<f64>().map_err(|_| format!("bad schedule parameter in {s:?}"))?)),
        None => (s, None),
    };
    let schedule = match (name.replace('_', "-").as_str(), arg) {
        ("linear", None) => Schedule::Linear,
        ("scaled", Some(k)) => Schedule::Scaled { k },
        ("quadratic-boost", Some(k)) => Schedule::QuadraticBoost { k },
        ("exponential-boost", Some(m)) => Schedule::exponential_boost(m),
        _ => return Err(format!("unknown schedule {s:?}; use linear, scaled=K, quadratic-boost=K or exponential-boost=M")),
    };
    schedule.validate().map_err(|e| e.to_string())?;
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_round_trips_through_toml() {
        let mut c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert!(text.contains("theta = \"auto\""));
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
        c.theta = Theta::Value(0.25);
        c.schedule = Schedule::QuadraticBoost { k: 2.0 };
        let back: RunConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("thetta = 0.3").is_err());
        assert!(toml::from_str::<RunConfig>("theta = \"large\"").is_err());
    }

    #[test]
    fn schedules_parse() {
        assert_eq!(parse_schedule("linear").unwrap(), Schedule::Linear);
        assert_eq!(parse_schedule("scaled=2").unwrap(), Schedule::Scaled { k: 2.0 });
        assert_eq!(parse_schedule("quadratic_boost=3").unwrap(), Schedule::QuadraticBoost { k: 3.0 });
        assert!(parse_schedule("scaled").is_err());
        assert!(parse_schedule("scaled=-1").is_err());
        assert!(parse_schedule("cubic=1").is_err());
    }

    #[test]
    fn auto_theta_resolves() {
        assert!((Theta::Auto.resolve(3) - 2f64.powf(-1.0 / 6.0)).abs() < 1e-15);
        assert_eq!(Theta::Value(0.2).resolve(3), 0.2);
    }
}

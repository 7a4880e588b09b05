use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyEstimator, DEFAULT_GIBBS_TOLERANCE};
use crate::error::{LabError, Result};
use crate::measure::{sample_uniform, GridPartition, MeasureDistanceConfig};
use crate::perturb::PerturbationKind;
use crate::systems::{build_system, BuiltSystem, SystemSpec};
use crate::tangent::{DEFAULT_REORTHONORMALIZATION, DEFAULT_SPLITTING_TOL};

/// One JSON document describing an experiment. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    /// Cells per axis; defaults to 32 on `T^2` and boxes, 16 on `T^4`.
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default = "default_orbit_length")]
    pub orbit_length: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_ic_count")]
    pub ic_count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Explicit initial conditions; replace seeded sampling when present.
    #[serde(default)]
    pub ics: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    /// Depth `K` of the weak-* proxy; defaults to `log2(resolution)`.
    #[serde(default)]
    pub distance_depth: Option<usize>,
    #[serde(default = "default_gibbs_tolerance")]
    pub gibbs_tolerance: f64,
    #[serde(default)]
    pub itinerary: ItineraryConfig,
    #[serde(default)]
    pub splitting: SplittingConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub recurrence: RecurrenceConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_orbit_length() -> usize {
    100_000
}
fn default_burn_in() -> usize {
    1_000
}
fn default_ic_count() -> usize {
    16
}
fn default_gibbs_tolerance() -> f64 {
    DEFAULT_GIBBS_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub kind: PerturbationKindName,
    /// Displacement direction for the translation and vector-field kinds.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    /// Displaced coordinate of the shear.
    #[serde(default)]
    pub axis: Option<usize>,
    /// Coordinate the shear grows along.
    #[serde(default)]
    pub along: Option<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
    /// Strictly decreasing sizes; the last may be 0.
    pub schedule: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKindName {
    BumpTranslation,
    BumpShear,
    OdeVectorFieldBump,
}

impl PerturbationConfig {
    pub fn family_kind(&self) -> Result<PerturbationKind> {
        let need = |what: &str| LabError::Config(format!("perturbation of kind {:?} needs `{what}`", self.kind));
        Ok(match self.kind {
            PerturbationKindName::BumpTranslation => PerturbationKind::BumpTranslation {
                direction: self.direction.clone().ok_or_else(|| need("direction"))?,
            },
            PerturbationKindName::OdeVectorFieldBump => PerturbationKind::OdeVectorFieldBump {
                direction: self.direction.clone().ok_or_else(|| need("direction"))?,
            },
            PerturbationKindName::BumpShear => PerturbationKind::BumpShear {
                axis: self.axis.ok_or_else(|| need("axis"))?,
                along: self.along.ok_or_else(|| need("along"))?,
            },
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordSource {
    /// Sliding windows along the ensemble orbits after burn-in.
    #[default]
    OrbitWindows,
    /// One word per fresh uniformly sampled initial condition.
    InitialConditions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItineraryConfig {
    /// Cells per axis of the coding partition.
    pub resolution: usize,
    pub depth: usize,
    pub samples: usize,
    pub estimator: EntropyEstimator,
    pub source: WordSource,
}

impl Default for ItineraryConfig {
    fn default() -> Self {
        Self {
            resolution: 2,
            depth: 8,
            samples: 1_000_000,
            estimator: EntropyEstimator::Conditional,
            source: WordSource::OrbitWindows,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplittingConfig {
    /// Orbit length for per-point splitting estimation.
    pub n: usize,
    pub tol: f64,
    /// Transient for forward-transported `F` frames.
    pub transport_burn_in: usize,
    /// Number of basepoints exported by the `splitting` subcommand.
    pub points: usize,
    /// Orbit length over which potentials are averaged; defaults to `orbit_length`.
    pub potential_length: Option<usize>,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            n: 200,
            tol: DEFAULT_SPLITTING_TOL,
            transport_burn_in: 50,
            points: 8,
            potential_length: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub period: usize,
    /// Orbit length; defaults to `orbit_length`.
    pub n: Option<usize>,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            period: DEFAULT_REORTHONORMALIZATION,
            n: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrenceTarget {
    /// Uniform weights on the grid.
    #[default]
    Uniform,
    /// The ensemble mean of the physical-measure estimate.
    Ensemble,
    /// Each orbit's own empirical measure over the full horizon.
    OwnOrbit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceConfig {
    pub target: RecurrenceTarget,
    pub radius: f64,
    /// Evaluate the distance every `stride` steps.
    pub stride: usize,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        Self {
            target: RecurrenceTarget::Uniform,
            radius: 0.2,
            stride: 1,
        }
    }
}

/// RNG stream for the main ensemble.
pub const STREAM_MAIN: u64 = 0;
/// Independent stream for the noise-floor ensemble.
pub const STREAM_NOISE: u64 = 1;
/// Stream for entropy words sampled from fresh initial conditions.
pub const STREAM_WORDS: u64 = 2;

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// A config with defaults for everything but the system.
    pub fn for_system(system: SystemSpec) -> Self {
        serde_json::from_value(serde_json::json!({ "system": system })).expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.orbit_length == 0 {
            return bad("orbit_length must be >= 1".into());
        }
        if self.burn_in >= self.orbit_length {
            return bad(format!("burn_in {} must be below orbit_length {}", self.burn_in, self.orbit_length));
        }
        if self.ics.is_none() && self.ic_count == 0 {
            return bad("ic_count must be >= 1".into());
        }
        if let Some(ics) = &self.ics {
            if ics.is_empty() {
                return bad("ics must not be empty".into());
            }
        }
        if let Some(r) = self.resolution {
            if r == 0 || !r.is_power_of_two() {
                return bad(format!("resolution {r} is not a power of two"));
            }
        }
        if self.distance_depth == Some(0) {
            return bad("distance_depth must be >= 1".into());
        }
        if !(self.gibbs_tolerance >= 0.0) {
            return bad("gibbs_tolerance must be >= 0".into());
        }
        if self.itinerary.depth == 0 || self.itinerary.samples == 0 || !self.itinerary.resolution.is_power_of_two() {
            return bad("itinerary needs depth >= 1, samples >= 1 and a power-of-two resolution".into());
        }
        if let Some(p) = &self.perturbation {
            if p.schedule.is_empty() {
                return bad("perturbation schedule is empty".into());
            }
            if p.schedule.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
                return bad("perturbation sizes must be finite and >= 0".into());
            }
            if p.schedule.windows(2).any(|w| w[1] >= w[0]) {
                return bad(format!("schedule {:?} is not strictly decreasing", p.schedule));
            }
            p.family_kind()?;
        }
        if !(self.recurrence.radius > 0.0) || self.recurrence.stride == 0 {
            return bad("recurrence needs radius > 0 and stride >= 1".into());
        }
        if self.lyapunov.period == 0 {
            return bad("lyapunov.period must be >= 1".into());
        }
        Ok(())
    }

    pub fn build(&self) -> Result<BuiltSystem> {
        build_system(&self.system)
    }

    pub fn partition(&self, built: &BuiltSystem) -> Result<GridPartition> {
        GridPartition::new(
            built.system.space().clone(),
            self.resolution.unwrap_or(built.default_resolution),
        )
    }

    pub fn distance_config(&self, partition: &GridPartition) -> Result<MeasureDistanceConfig> {
        match self.distance_depth {
            Some(k) => MeasureDistanceConfig::new(k),
            None => Ok(MeasureDistanceConfig::for_partition(partition)),
        }
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Explicit ICs, or `ic_count` seeded samples on the given stream.
    pub fn initial_conditions(&self, built: &BuiltSystem, stream: u64) -> Result<Vec<Vec<f64>>> {
        if let Some(ics) = &self.ics {
            if stream == STREAM_MAIN {
                for x in ics {
                    crate::system::check_point(built.system.space(), x)?;
                }
                return Ok(ics.clone());
            }
        }
        let count = self.ics.as_ref().map_or(self.ic_count, |v| v.len().max(2));
        Ok(self.sample_points(built, count, stream))
    }

    /// Seeded uniform samples: the absorbing ball for Lorenz, the phase space otherwise.
    pub fn sample_points(&self, built: &BuiltSystem, count: usize, stream: u64) -> Vec<Vec<f64>> {
        match &built.lorenz {
            Some(l) => {
                let mut rng = self.rng(stream);
                let seed = rand::Rng::gen::<u64>(&mut rng);
                l.sample_initial_conditions(count, seed)
            }
            None => sample_uniform(built.system.space(), count, &mut self.rng(stream)),
        }
    }

    pub fn potential_length(&self) -> usize {
        self.splitting.potential_length.unwrap_or(self.orbit_length)
    }

    pub fn lyapunov_length(&self) -> usize {
        self.lyapunov.n.unwrap_or(self.orbit_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"system": {"name": "cat"}}"#).unwrap();
        assert_eq!(cfg.orbit_length, 100_000);
        assert_eq!(cfg.itinerary.depth, 8);
        assert_eq!(cfg.gibbs_tolerance, 0.15);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"system": {"name": "cat"}, "sede": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"system": {"name": "cat"}, "itinerary": {"deep": 3}}"#).is_err());
    }

    #[test]
    fn schedule_must_decrease() {
        let text = r#"{"system": {"name": "cat"}, "perturbation": {"kind": "bump-translation",
            "direction": [1.0, 0.0], "center": [0.5, 0.5], "radius": 0.25, "schedule": [0.1, 0.1, 0.0]}}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(LabError::Config(_))));
        let ok = text.replace("[0.1, 0.1, 0.0]", "[0.1, 0.05, 0.0]");
        let cfg = ExperimentConfig::from_json(&ok).unwrap();
        assert!(matches!(
            cfg.perturbation.unwrap().family_kind().unwrap(),
            PerturbationKind::BumpTranslation { .. }
        ));
        let shear = ok.replace(r#""direction": [1.0, 0.0]"#, r#""axis": 0"#).replace("bump-translation", "bump-shear");
        assert!(ExperimentConfig::from_json(&shear).is_err());
    }

    #[test]
    fn seed_determines_ics() {
        let cfg = ExperimentConfig::for_system(SystemSpec::Cat);
        let built = cfg.build().unwrap();
        let a = cfg.initial_conditions(&built, STREAM_MAIN).unwrap();
        let b = cfg.initial_conditions(&built, STREAM_MAIN).unwrap();
        let c = cfg.initial_conditions(&built, STREAM_NOISE).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

use std::fmt;
use std::path::{Path, PathBuf};

use cyclofield_core::covariance::{geometric, AuditSettings};
use cyclofield_core::sim::SpatialGrid;
use cyclofield_core::spectral::{self, CyclicalSpectralDensity};
use cyclofield_core::{KernelSpec, QuadratureSpec};
use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::CliError;

/// A density given by registry name (`"example1(1)"`, `"gen(...)"`) or in full.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityConfig {
    Name(String),
    Spec(CyclicalSpectralDensity),
}

impl DensityConfig {
    pub fn build(&self) -> Result<CyclicalSpectralDensity, CliError> {
        match self {
            DensityConfig::Name(s) => {
                spectral::from_name(s).map_err(|e| CliError::Config(format!("density `{s}`: {e}")))
            }
            DensityConfig::Spec(d) => Ok(d.clone()),
        }
    }

    /// File-name friendly label.
    pub fn label(&self, index: usize) -> String {
        match self {
            DensityConfig::Name(s) => {
                let mut out = String::new();
                for c in s.chars() {
                    if c.is_ascii_alphanumeric() || c == '.' {
                        out.push(c);
                    } else if !out.ends_with('_') {
                        out.push('_');
                    }
                }
                out.trim_matches('_').to_string()
            }
            DensityConfig::Spec(_) => format!("density{index}"),
        }
    }
}

impl Serialize for DensityConfig {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            DensityConfig::Name(n) => s.serialize_str(n),
            DensityConfig::Spec(d) => d.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for DensityConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = DensityConfig;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a density name or a density object")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                Ok(DensityConfig::Name(v.to_string()))
            }
            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
                CyclicalSpectralDensity::deserialize(de::value::MapAccessDeserializer::new(map))
                    .map(DensityConfig::Spec)
            }
        }
        d.deserialize_any(V)
    }
}

/// Radii as an explicit list or as `{"lo", "hi", "count", "spacing"}`.
#[derive(Debug, Clone, PartialEq)]
pub enum GridConfig {
    Values(Vec<f64>),
    Range(RangeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Geometric,
    Linear,
}

impl GridConfig {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = match self {
            GridConfig::Values(v) => v.clone(),
            GridConfig::Range(r) => {
                if !(r.lo > 0.0 && r.hi > r.lo) || r.count < 2 {
                    return Err(CliError::Config(
                        "r_grid range needs 0 < lo < hi and count >= 2".into(),
                    ));
                }
                match r.spacing {
                    Spacing::Geometric => geometric(r.lo, r.hi, r.count),
                    Spacing::Linear => (0..r.count)
                        .map(|k| r.lo + (r.hi - r.lo) * k as f64 / (r.count - 1) as f64)
                        .collect(),
                }
            }
        };
        if v.is_empty() || v.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(CliError::Config(
                "r_grid must be a non-empty list of finite radii >= 0".into(),
            ));
        }
        Ok(v)
    }
}

impl Serialize for GridConfig {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            GridConfig::Values(v) => v.serialize(s),
            GridConfig::Range(r) => r.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for GridConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = GridConfig;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of radii or a {lo, hi, count} range")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, seq: A) -> Result<Self::Value, A::Error> {
                Vec::<f64>::deserialize(de::value::SeqAccessDeserializer::new(seq))
                    .map(GridConfig::Values)
            }
            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
                RangeConfig::deserialize(de::value::MapAccessDeserializer::new(map))
                    .map(GridConfig::Range)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem1Config {
    /// Singularity index; defaults to the one matching `kernel.a`, else 1.
    pub j: Option<usize>,
    /// Overrides `alpha_j` in the normalization (to probe mismatches).
    pub alpha: Option<f64>,
    /// Final deviation allowed, relative to the largest limit entry.
    pub threshold: f64,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Self {
            j: None,
            alpha: None,
            threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem2Config {
    pub alpha: f64,
    pub t: f64,
    /// Also runs the same ladder centred here (normally a singular frequency).
    pub control_a: Option<f64>,
}

impl Default for Theorem2Config {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            t: 1.0,
            control_a: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub certify_s_max: f64,
    pub certify_grid: usize,
    /// Offsets `s`, evaluated at `|l| = a + s / r`.
    pub offsets: Vec<f64>,
    pub roundtrip_r: f64,
    pub roundtrip_dimensions: Vec<usize>,
    pub points_per_radius: usize,
    pub extent: f64,
    /// `|x| / r` at which the `a = 0` weight is compared with the indicator.
    pub ball_points: Vec<f64>,
    pub roundtrip_tol: f64,
    pub ball_tol: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            certify_s_max: 1e4,
            certify_grid: 2000,
            offsets: vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.5, 8.0],
            roundtrip_r: 1.0,
            roundtrip_dimensions: vec![1, 3],
            points_per_radius: 200,
            extent: 2.0,
            ball_points: vec![0.5, 0.9, 1.1, 2.0],
            roundtrip_tol: 1e-3,
            ball_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub density: DensityConfig,
    pub kernel: KernelSpec,
    #[serde(default = "twenty")]
    pub r: f64,
    #[serde(default = "unit")]
    pub t: f64,
    #[serde(default = "sixteen")]
    pub components: usize,
    #[serde(default = "two_thousand")]
    pub replicates: usize,
    #[serde(default)]
    pub grid: Option<SpatialGrid>,
}

fn twenty() -> f64 {
    20.0
}
fn unit() -> f64 {
    1.0
}
fn sixteen() -> usize {
    16
}
fn two_thousand() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub lags: Vec<f64>,
    pub components: usize,
    pub replicates: usize,
    /// Sites for one stored realization (replicate 0); empty skips it.
    pub field_points: Vec<Vec<f64>>,
    pub z_max: f64,
    pub functional: Option<FunctionalConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            lags: vec![0.0, 1.0, 2.0, 5.0],
            components: 4096,
            replicates: 2000,
            field_points: Vec::new(),
            z_max: 3.0,
            functional: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must name the subcommand being run.
    pub command: Option<String>,
    pub density: DensityConfig,
    /// Densities for `figures`.
    pub densities: Vec<DensityConfig>,
    pub kernel: Option<KernelSpec>,
    pub r_grid: GridConfig,
    pub r_ladder: Vec<f64>,
    pub times: Vec<f64>,
    pub quad: QuadratureSpec,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub theorem1: Theorem1Config,
    pub theorem2: Theorem2Config,
    pub audit: AuditSettings,
    pub weights: WeightsConfig,
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            density: DensityConfig::Name("example1(1)".into()),
            densities: vec![
                DensityConfig::Name("example1(1)".into()),
                DensityConfig::Name("example2(1)".into()),
                DensityConfig::Name("example3".into()),
            ],
            kernel: None,
            r_grid: GridConfig::Range(RangeConfig {
                lo: 0.1,
                hi: 50.0,
                count: 200,
                spacing: Spacing::Geometric,
            }),
            r_ladder: vec![10.0, 100.0, 1000.0],
            times: vec![0.25, 0.5, 1.0],
            quad: QuadratureSpec::default(),
            seed: 1,
            output_dir: PathBuf::from("out"),
            theorem1: Theorem1Config::default(),
            theorem2: Theorem2Config::default(),
            audit: AuditSettings::default(),
            weights: WeightsConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." || path.is_empty() {
                CliError::Config(inner.to_string())
            } else {
                CliError::Config(format!("at `{path}`: {inner}"))
            }
        })?;
        cfg.quad
            .validate()
            .map_err(|e| CliError::Config(format!("at `quad`: {e}")))?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the resolved configuration, embedded in every artifact.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_takes_defaults() {
        let c = RunConfig::parse("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_pointed_at() {
        let err = RunConfig::parse(r#"{"theorem1": {"treshold": 0.1}}"#).unwrap_err();
        assert!(err.to_string().contains("theorem1"), "{err}");
        let err = RunConfig::parse(r#"{"kernel": {"kind": "bessel", "n": 3, "a": 1, "b": 2}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("kernel"), "{err}");
    }

    #[test]
    fn density_by_name_or_object() {
        let c = RunConfig::parse(r#"{"density": "example2(1)"}"#).unwrap();
        assert!(c.density.build().is_ok());
        let c = RunConfig::parse(
            r#"{"density": {"n": 3, "alpha0": 2, "singularities": [{"a": 1, "alpha": 0.5}],
                "h": {"kind": "builtin", "name": "constant", "value": 1, "support": 2}}}"#,
        )
        .unwrap();
        assert!(matches!(c.density, DensityConfig::Spec(_)));
        assert!(RunConfig::parse(
            r#"{"density": {"n": 3, "alpha0": 5, "h": {"kind": "builtin", "name": "example3"}}}"#
        )
        .is_err());
    }

    #[test]
    fn grid_forms() {
        let c = RunConfig::parse(r#"{"r_grid": [1, 2, 3]}"#).unwrap();
        assert_eq!(c.r_grid.values().unwrap(), vec![1.0, 2.0, 3.0]);
        let c =
            RunConfig::parse(r#"{"r_grid": {"lo": 1, "hi": 3, "count": 3, "spacing": "linear"}}"#)
                .unwrap();
        assert_eq!(c.r_grid.values().unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(RunConfig::default().hash(), RunConfig::default().hash());
        assert_eq!(RunConfig::default().hash().len(), 64);
    }
}

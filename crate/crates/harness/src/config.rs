//! Run configuration: a TOML file of `key = value` sections, plus
//! `--key value` overrides from the command line.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use polaron_core::dynamics::AbsorbingMask;
use polaron_core::pekar::RadialParams;

#[derive(Debug, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending key, or `config` for file-level problems.
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Smallest torus meeting the zero-mode and resolution targets.
    Certified,
    /// `L = 640`, `N = 32`, polished; fast enough for dynamics.
    Desk,
    /// `box_length` and `points` from the config.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Unset: `certified` for the static commands, `desk` for dynamics.
    pub preset: Option<Preset>,
    pub box_length: f64,
    pub points: usize,
    /// Self-consistent polish on the torus; unset means "only for desk".
    pub polish: Option<bool>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            preset: None,
            box_length: 640.0,
            points: 32,
            polish: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub alphas: Vec<f64>,
    /// Fit velocities as fractions of `1/(2√q)`.
    pub v_fractions: Vec<f64>,
    /// Initial velocities for `simulate` and `damping`.
    pub velocities: Vec<f64>,
    /// Also run the constrained minimization in `effective-mass`.
    pub minimize: bool,
    pub minimize_max_iter: usize,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 1.0, 2.0, 4.0],
            v_fractions: polaron_core::mass::FIT_FRACTIONS.to_vec(),
            velocities: vec![0.0],
            minimize: false,
            minimize_max_iter: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    /// Unset: `min(1e-3, α²/50)`.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub cadence: usize,
    pub projections: bool,
    pub mask: bool,
    pub mask_width: f64,
    pub mask_strength: f64,
    pub radiation_radii: Vec<f64>,
    /// Write the final fields as binary snapshots.
    pub snapshots: bool,
    /// Relative energy drift tolerated by the conservation check.
    pub drift_tol: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let m = AbsorbingMask::default();
        Self {
            dt: None,
            t_end: 10.0,
            cadence: 100,
            projections: true,
            mask: false,
            mask_width: m.width_fraction,
            mask_strength: m.strength,
            radiation_radii: vec![100.0, 150.0, 200.0],
            snapshots: false,
            drift_tol: 1e-8,
        }
    }
}

impl DynamicsConfig {
    pub fn absorbing_mask(&self) -> Option<AbsorbingMask> {
        self.mask.then_some(AbsorbingMask {
            width_fraction: self.mask_width,
            strength: self.mask_strength,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub seed: u64,
    /// Compute the Hessian spectrum in `solve-pekar`.
    pub hessian: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { seed: 7, hessian: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub radial: RadialParams,
    pub physics: PhysicsConfig,
    pub dynamics: DynamicsConfig,
    pub check: CheckConfig,
    pub output: OutputConfig,
}

const SECTIONS: [&str; 6] = ["grid", "radial", "physics", "dynamics", "check", "output"];

impl RunConfig {
    /// Parses a config file (or the defaults) and applies overrides given as
    /// `(key, value)` pairs. A `.json` path is read as a run manifest and its
    /// recorded config is replayed.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::new("config", format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        if path.is_some_and(|p| p.extension().is_some_and(|e| e == "json")) {
            let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| ConfigError::new("config", e.to_string()))?;
            let recorded = manifest
                .get("config")
                .ok_or_else(|| ConfigError::new("config", "manifest has no `config` record"))?;
            let table = toml::Table::try_from(without_nulls(recorded.clone())).map_err(|e| ConfigError::new("config", e.to_string()))?;
            return Self::from_table(table, overrides);
        }
        Self::from_str_with(&text, overrides)
    }

    pub fn from_str_with(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("config", e.message()))?;
        Self::from_table(table, overrides)
    }

    fn from_table(mut table: toml::Table, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let key = e.path().to_string();
            ConfigError::new(if key == "." { "config".into() } else { key }, e.into_inner().to_string())
        })?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// JSON `null` marks an unset option; TOML spells that by omission.
fn without_nulls(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, without_nulls(v))).collect(),
        other => other,
    }
}

/// `coupling-scale` and `radial.coupling_scale` both address
/// `[radial] coupling_scale`; bare keys must be unique across sections.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let key = key.replace('-', "_");
    let (section, field) = match key.split_once('.') {
        Some((s, f)) => (s.to_string(), f.to_string()),
        None => {
            let owners: Vec<&str> = SECTIONS.iter().copied().filter(|s| section_has(s, &key)).collect();
            match owners.as_slice() {
                [one] => (one.to_string(), key.clone()),
                [] => return Err(ConfigError::new(key, "unknown override key")),
                _ => return Err(ConfigError::new(key, format!("ambiguous key, qualify it with one of {owners:?}"))),
            }
        }
    };
    if !SECTIONS.contains(&section.as_str()) {
        return Err(ConfigError::new(key, "unknown section"));
    }
    let value = parse_value(raw);
    let entry = table
        .entry(section.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(t) = entry else {
        return Err(ConfigError::new(section, "expected a section"));
    };
    t.insert(field, value);
    Ok(())
}

fn section_has(section: &str, key: &str) -> bool {
    let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
    defaults.get(section).and_then(|s| s.get(key)).is_some()
}

/// A TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Splits `[config] --key value ...` into the config path and overrides.
pub fn split_args(args: &[String]) -> Result<(Option<PathBuf>, Vec<(String, String)>), ConfigError> {
    let mut path = None;
    let mut overrides = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if let Some(key) = a.strip_prefix("--") {
            let (k, v) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| ConfigError::new(key, "override is missing its value"))?;
                    (key.to_string(), v.clone())
                }
            };
            overrides.push((k, v));
        } else if path.is_none() {
            path = Some(PathBuf::from(a));
        } else {
            return Err(ConfigError::new("config", format!("unexpected positional argument `{a}`")));
        }
    }
    Ok((path, overrides))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_str_with(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn overrides_find_their_section() {
        let cfg = RunConfig::from_str_with("", &[ov("coupling-scale", "2"), ov("dynamics.t_end", "3.5"), ov("preset", "desk")]).unwrap();
        assert_eq!(cfg.radial.coupling_scale, 2.0);
        assert_eq!(cfg.dynamics.t_end, 3.5);
        assert_eq!(cfg.grid.preset, Some(Preset::Desk));
        let cfg = RunConfig::from_str_with("", &[ov("alphas", "[1, 2.5]")]).unwrap();
        assert_eq!(cfg.physics.alphas, vec![1.0, 2.5]);
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::from_str_with("[grid]\npoints = \"many\"\n", &[]).unwrap_err();
        assert_eq!(e.key, "grid.points");
        let e = RunConfig::from_str_with("[grid]\nbogus = 1\n", &[]).unwrap_err();
        assert!(e.key.starts_with("grid"), "{e}");
        assert!(e.message.contains("bogus"));
        let e = RunConfig::from_str_with("", &[ov("nonsense", "1")]).unwrap_err();
        assert_eq!(e.key, "nonsense");
        let e = RunConfig::from_str_with("[grid", &[]).unwrap_err();
        assert_eq!(e.key, "config");
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.dynamics.cadence += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn manifests_replay_their_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.dynamics.dt = Some(0.01);
        cfg.physics.alphas = vec![1.5];
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, serde_json::json!({ "command": "simulate", "config": cfg }).to_string()).unwrap();
        let back = RunConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn argument_splitting() {
        let args: Vec<String> = ["run.toml", "--alphas", "[1]", "--t-end=2"].iter().map(|s| s.to_string()).collect();
        let (p, o) = split_args(&args).unwrap();
        assert_eq!(p.unwrap(), PathBuf::from("run.toml"));
        assert_eq!(o, vec![ov("alphas", "[1]"), ov("t-end", "2")]);
        assert!(split_args(&["--dt".to_string()]).is_err());
        assert!(split_args(&["a".to_string(), "b".to_string()]).is_err());
    }
}

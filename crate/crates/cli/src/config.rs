//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use qrotor::{Boundary, ModelParams, TruncationSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FreeBosonScan,
    SgScaling,
    CorrelatorProfile,
    StringTension,
    MassScaling,
    Validate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FreeBosonScan => "free-boson-scan",
            ExperimentKind::SgScaling => "sg-scaling",
            ExperimentKind::CorrelatorProfile => "correlator-profile",
            ExperimentKind::StringTension => "string-tension",
            ExperimentKind::MassScaling => "mass-scaling",
            ExperimentKind::Validate => "validate",
        }
    }
}

/// A scanned coupling: a single value, an explicit list, or evenly spaced
/// points (linearly or logarithmically).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Range {
    Value(f64),
    List(Vec<f64>),
    Spaced(Spaced),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spaced {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Range::Value(v) => vec![*v],
            Range::List(v) => v.clone(),
            Range::Spaced(s) => {
                if s.points == 1 {
                    return vec![s.start];
                }
                (0..s.points)
                    .map(|i| {
                        let t = i as f64 / (s.points - 1) as f64;
                        if s.log {
                            (s.start.ln() + t * (s.stop.ln() - s.start.ln())).exp()
                        } else {
                            s.start + t * (s.stop - s.start)
                        }
                    })
                    .collect()
            }
        }
    }

    fn check(&self, field: &str, errors: &mut Vec<String>) {
        let v = self.values();
        if v.is_empty() {
            errors.push(format!("{field}: range has zero points"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            errors.push(format!("{field}: non-finite value"));
        }
        if let Range::Spaced(s) = self {
            if s.log && (s.start <= 0.0 || s.stop <= 0.0) {
                errors.push(format!("{field}: logarithmic spacing needs positive endpoints"));
            }
        }
    }
}

fn zero() -> Range {
    Range::Value(0.0)
}

fn default_n_max() -> usize {
    qrotor::local::DEFAULT_N_MAX
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_len")]
    pub len: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "zero")]
    pub ej: Range,
    #[serde(default = "zero")]
    pub ej1: Range,
    #[serde(default = "zero")]
    pub ej2: Range,
    #[serde(default)]
    pub eg: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub bc: Boundary,
}

fn default_len() -> usize {
    32
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            len: default_len(),
            n_max: default_n_max(),
            ej: zero(),
            ej1: zero(),
            ej2: zero(),
            eg: 0.0,
            eps: 0.0,
            bc: Boundary::Open,
        }
    }
}

impl ModelSection {
    /// Every `(ej, ej1, ej2)` combination, `ej` outermost.
    pub fn points(&self) -> Vec<ModelParams> {
        let mut out = Vec::new();
        for ej in self.ej.values() {
            for ej1 in self.ej1.values() {
                for ej2 in self.ej2.values() {
                    out.push(self.at(ej, ej1, ej2));
                }
            }
        }
        out
    }

    pub fn at(&self, ej: f64, ej1: f64, ej2: f64) -> ModelParams {
        ModelParams::new(self.len, self.n_max)
            .ej(ej)
            .ej1(ej1)
            .ej2(ej2)
            .eg(self.eg)
            .eps(self.eps)
            .bc(self.bc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmrgSection {
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    /// Energy tolerance per site; the run tolerance is `e_tol_per_site · L`.
    #[serde(default = "default_e_tol")]
    pub e_tol_per_site: f64,
}

fn default_sweeps() -> usize {
    12
}

fn default_e_tol() -> f64 {
    1e-9
}

impl Default for DmrgSection {
    fn default() -> Self {
        Self {
            max_sweeps: default_sweeps(),
            e_tol_per_site: default_e_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmrgSection {
    #[serde(default = "default_chi_inf")]
    pub chi_max: usize,
    #[serde(default = "default_steps")]
    pub max_steps: usize,
    #[serde(default = "default_idmrg_tol")]
    pub e_tol: f64,
}

fn default_chi_inf() -> usize {
    64
}

fn default_steps() -> usize {
    600
}

fn default_idmrg_tol() -> f64 {
    1e-10
}

impl Default for IdmrgSection {
    fn default() -> Self {
        Self {
            chi_max: default_chi_inf(),
            max_steps: default_steps(),
            e_tol: default_idmrg_tol(),
        }
    }
}

/// Fit windows; `None` means the documented default for the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    /// Separations for power-law fits; default `[4, L/3]`.
    pub power_law: Option<[f64; 2]>,
    /// Separations for string-tension fits; default `[4, 12]`.
    pub string_tension: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringTensionSection {
    /// Left end of the soliton pair; default `L/4`.
    pub j: Option<usize>,
    #[serde(default = "default_separations")]
    pub separations: Vec<usize>,
}

fn default_separations() -> Vec<usize> {
    (0..=12).collect()
}

impl Default for StringTensionSection {
    fn default() -> Self {
        Self {
            j: None,
            separations: default_separations(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(default = "default_r_max")]
    pub r_max: usize,
}

fn default_r_max() -> usize {
    200
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self { r_max: default_r_max() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassSection {
    /// sG coupling for the η axis; fitted from `calibration_ej2` when absent.
    pub beta_sq: Option<f64>,
    #[serde(default = "default_calibration")]
    pub calibration_ej2: Vec<f64>,
}

fn default_calibration() -> Vec<f64> {
    vec![0.05, 0.1, 0.15, 0.2]
}

impl Default for MassSection {
    fn default() -> Self {
        Self {
            beta_sq: None,
            calibration_ej2: default_calibration(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasimirSection {
    /// Chain lengths for the Casimir velocity fit; empty skips the fit.
    #[serde(default)]
    pub lengths: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default)]
    pub dmrg: DmrgSection,
    #[serde(default)]
    pub idmrg: IdmrgSection,
    #[serde(default)]
    pub windows: WindowSection,
    #[serde(default)]
    pub string_tension: StringTensionSection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub mass: MassSection,
    #[serde(default)]
    pub casimir: CasimirSection,
}

fn default_threads() -> usize {
    1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::parse(&text)
    }

    /// A config with every default filled in, for the given kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self::parse("")
            .map(|c| Self { kind: Some(kind), ..c })
            .expect("empty config parses")
    }

    pub fn kind(&self) -> ExperimentKind {
        self.kind.unwrap_or(ExperimentKind::Validate)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errors = Vec::new();
        let m = &self.model;
        if m.len < 2 {
            errors.push(format!("model.len: need at least 2 sites, got {}", m.len));
        }
        if m.n_max == 0 {
            errors.push("model.n_max: must be at least 1".into());
        }
        m.ej.check("model.ej", &mut errors);
        m.ej1.check("model.ej1", &mut errors);
        m.ej2.check("model.ej2", &mut errors);
        if errors.is_empty() {
            for p in m.points() {
                if let Err(e) = p.validate() {
                    errors.push(format!("model: {e}"));
                    break;
                }
            }
        }
        if let Err(e) = self.truncation.validate() {
            errors.push(format!("truncation: {e}"));
        }
        if self.dmrg.max_sweeps == 0 {
            errors.push("dmrg.max_sweeps: must be positive".into());
        }
        if self.idmrg.chi_max == 0 {
            errors.push("idmrg.chi_max: must be positive".into());
        }
        if self.threads == 0 {
            errors.push("threads: must be positive".into());
        }
        for (name, w) in [
            ("windows.power_law", self.windows.power_law),
            ("windows.string_tension", self.windows.string_tension),
        ] {
            if let Some([lo, hi]) = w {
                if lo >= hi || lo.is_nan() || hi.is_nan() || lo < 0.0 {
                    errors.push(format!("{name}: need 0 <= lo < hi, got [{lo}, {hi}]"));
                }
            }
        }
        match self.kind() {
            ExperimentKind::StringTension => {
                if self.string_tension.separations.is_empty() {
                    errors.push("string_tension.separations: range has zero points".into());
                }
                if m.ej2.values().iter().any(|v| *v <= 0.0) {
                    errors.push("model.ej2: string tension needs ej2 > 0".into());
                }
                if m.bc == Boundary::Periodic {
                    errors.push("model.bc: string tension runs use open chains".into());
                }
            }
            ExperimentKind::SgScaling => {
                if m.ej2.values().len() < 4 {
                    errors.push("model.ej2: vertex scaling needs at least 4 coupling points".into());
                }
            }
            ExperimentKind::MassScaling => {
                if m.ej1.values().len() < 3 {
                    errors.push("model.ej1: mass scaling needs at least 3 ej1 points".into());
                }
                if m.ej2.values().len() != 1 || m.ej.values().len() != 1 {
                    errors.push("model: mass scaling runs at a single (ej, ej2)".into());
                }
                if let Some(b) = self.mass.beta_sq {
                    if !(b > 0.0 && b < 1.0) {
                        errors.push(format!("mass.beta_sq: {b} is not in (0, 1)"));
                    }
                } else if self.mass.calibration_ej2.len() < 4 {
                    errors.push("mass.calibration_ej2: need at least 4 points to fit beta^2".into());
                }
            }
            ExperimentKind::FreeBosonScan => {
                if m.ej1.values().iter().chain(m.ej2.values().iter()).any(|v| *v != 0.0) {
                    errors.push("model: the free-boson scan needs ej1 = ej2 = 0".into());
                }
                if m.bc == Boundary::Periodic {
                    errors.push("model.bc: DMRG runs use open chains".into());
                }
            }
            ExperimentKind::CorrelatorProfile | ExperimentKind::Validate => {}
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse("kind = \"validate\"\n").unwrap();
        assert_eq!(c.model.n_max, 4);
        assert_eq!(c.truncation.chi_max, 128);
        assert_eq!(c.model.eps, 0.0);
        assert_eq!(c.model.eg, 0.0);
        assert_eq!(c.dmrg.max_sweeps, 12);
        c.validate().unwrap();
    }

    #[test]
    fn misspelled_key_is_named() {
        let err = ExperimentConfig::parse("[model]\nejj = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("ejj"), "{err}");
    }

    #[test]
    fn empty_range_is_rejected() {
        let c = ExperimentConfig::parse("[model]\nej = []\n").unwrap();
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("model.ej") && err.contains("zero points"), "{err}");
        let c = ExperimentConfig::parse("[model]\nej = { start = 1.0, stop = 2.0, points = 0 }\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn ranges_expand() {
        let c = ExperimentConfig::parse("[model]\nej = { start = 1.0, stop = 3.0, points = 3 }\nej2 = [0.1, 0.2]\n")
            .unwrap();
        assert_eq!(c.model.ej.values(), vec![1.0, 2.0, 3.0]);
        assert_eq!(c.model.points().len(), 6);
        let r = Range::Spaced(Spaced {
            start: 0.01,
            stop: 1.0,
            points: 3,
            log: true,
        });
        let v = r.values();
        assert!((v[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn kind_specific_checks() {
        let c = ExperimentConfig::parse("kind = \"string-tension\"\n[model]\nej2 = 0.0\n").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("ej2"));
        let c = ExperimentConfig::parse("kind = \"sg-scaling\"\n[model]\nej2 = [0.1, 0.2]\n").unwrap();
        assert!(c.validate().is_err());
    }
}

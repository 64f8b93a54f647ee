//! Config ingestion: a flat TOML schema mirrored onto [`RunConfig`].
//!
//! The file has five sections (`model`, `kernel`, `initial`, `numerics`,
//! `experiment`); every field is explicit so a config file is a complete
//! record of a run. Unknown keys are rejected. The config hash is FNV-1a 64
//! over the canonical re-serialization of the parsed file, so formatting
//! and comments do not affect it.

use std::fmt;
use std::fs;
use std::path::Path;

use chemofrag::model::{CoefficientFamily, DiffForm, KernelVariant, Shape};
use chemofrag::run::{Experiment, InitialCondition, InitialShape, Numerics, RunConfig};
use serde::{Deserialize, Serialize};

/// Schema-level rejection of a config file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaError {
    pub message: String,
    /// 1-based line of the offending entry, when the parser reports a span.
    pub line: Option<usize>,
    /// Field the error is about, when it can be named.
    pub field: Option<String>,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config schema error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " (field `{field}`)")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for SchemaError {}

impl SchemaError {
    fn for_field(field: &str, message: impl Into<String>) -> Self {
        SchemaError { message: message.into(), line: None, field: Some(field.to_string()) }
    }
}

/// Reading a config can fail on IO or on schema grounds; the two map to
/// different exit codes.
#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Schema(SchemaError),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read config: {e}"),
            LoadError::Schema(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for LoadError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ShapeName {
    One,
    Saturating,
}

impl From<ShapeName> for Shape {
    fn from(s: ShapeName) -> Shape {
        match s {
            ShapeName::One => Shape::One,
            ShapeName::Saturating => Shape::Saturating,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum DiffFormName {
    ResourceLinear,
    Saturating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum KernelName {
    DiracHalf,
    Uniform01,
    SymmetricBeta,
    DiscreteSymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum InitialName {
    PointMass,
    TruncatedGaussian,
    GridProfile,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    zeta0: f64,
    zeta1: f64,
    diff_form: DiffFormName,
    delta0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta1: Option<f64>,
    b0: f64,
    kappa_b: f64,
    birth_shape: ShapeName,
    d1: f64,
    death_shape: ShapeName,
    chi0: f64,
    kappa_chi: f64,
    chi_shape: ShapeName,
    r_in: f64,
    r0: f64,
    t_final: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSection {
    variant: KernelName,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    mass: f64,
    shape: InitialName,
    #[serde(skip_serializing_if = "Option::is_none")]
    x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsSection {
    dt_ibm: f64,
    dt_pde: f64,
    dt_sde: f64,
    dx: f64,
    x_max: f64,
    truncation_tol: f64,
    n_quad: usize,
    dict_size: usize,
    h_count: usize,
    h_max: f64,
    mc_paths: usize,
    density_bins: usize,
    record_every: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    k_values: Vec<u64>,
    seeds: Vec<u64>,
    snapshot_times: Vec<f64>,
}

/// Parsed form of one config file, prior to semantic validation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    model: ModelSection,
    kernel: KernelSection,
    initial: InitialSection,
    numerics: NumericsSection,
    experiment: ExperimentSection,
}

fn require(field: &'static str, v: Option<f64>, ctx: &str) -> Result<f64, SchemaError> {
    v.ok_or_else(|| SchemaError::for_field(field, format!("required for {ctx}")))
}

fn forbid<T>(field: &'static str, v: &Option<T>, ctx: &str) -> Result<(), SchemaError> {
    if v.is_some() {
        return Err(SchemaError::for_field(field, format!("not a parameter of {ctx}")));
    }
    Ok(())
}

impl ConfigFile {
    /// Parses a config file's text, mapping TOML diagnostics to
    /// [`SchemaError`] with line and field information where available.
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        toml::from_str::<ConfigFile>(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
            let message = e.message().to_string();
            let field = message
                .split_once('`')
                .and_then(|(_, rest)| rest.split_once('`'))
                .map(|(name, _)| name.to_string());
            SchemaError { message, line, field }
        })
    }

    /// Resolves the parsed sections into a [`RunConfig`], checking the
    /// variant-dependent parameter sets.
    pub fn to_run_config(&self) -> Result<RunConfig, SchemaError> {
        let m = &self.model;
        let diff = match m.diff_form {
            DiffFormName::ResourceLinear => DiffForm::ResourceLinear {
                delta0: m.delta0,
                delta1: require("delta1", m.delta1, "diff_form = \"resource-linear\"")?,
            },
            DiffFormName::Saturating => {
                forbid("delta1", &m.delta1, "diff_form = \"saturating\"")?;
                DiffForm::Saturating { delta0: m.delta0 }
            }
        };
        let family = CoefficientFamily {
            zeta0: m.zeta0,
            zeta1: m.zeta1,
            diff,
            b0: m.b0,
            kappa_b: m.kappa_b,
            birth_shape: m.birth_shape.into(),
            d1: m.d1,
            death_shape: m.death_shape.into(),
            chi0: m.chi0,
            kappa_chi: m.kappa_chi,
            chi_shape: m.chi_shape.into(),
        };

        let k = &self.kernel;
        let kernel = match k.variant {
            KernelName::DiracHalf | KernelName::Uniform01 => {
                forbid("a", &k.a, "this kernel variant")?;
                forbid("atoms", &k.atoms, "this kernel variant")?;
                if k.variant == KernelName::DiracHalf {
                    KernelVariant::DiracHalf
                } else {
                    KernelVariant::Uniform01
                }
            }
            KernelName::SymmetricBeta => {
                forbid("atoms", &k.atoms, "variant = \"symmetric-beta\"")?;
                KernelVariant::SymmetricBeta {
                    a: require("a", k.a, "variant = \"symmetric-beta\"")?,
                }
            }
            KernelName::DiscreteSymmetric => {
                forbid("a", &k.a, "variant = \"discrete-symmetric\"")?;
                let atoms = k.atoms.clone().ok_or_else(|| {
                    SchemaError::for_field("atoms", "required for variant = \"discrete-symmetric\"")
                })?;
                KernelVariant::DiscreteSymmetric { atoms }
            }
        };

        let i = &self.initial;
        let shape = match i.shape {
            InitialName::PointMass => {
                forbid("mean", &i.mean, "shape = \"point-mass\"")?;
                forbid("sd", &i.sd, "shape = \"point-mass\"")?;
                forbid("lo", &i.lo, "shape = \"point-mass\"")?;
                forbid("hi", &i.hi, "shape = \"point-mass\"")?;
                forbid("x_max", &i.x_max, "shape = \"point-mass\"")?;
                forbid("values", &i.values, "shape = \"point-mass\"")?;
                InitialShape::PointMass { x0: require("x0", i.x0, "shape = \"point-mass\"")? }
            }
            InitialName::TruncatedGaussian => {
                forbid("x0", &i.x0, "shape = \"truncated-gaussian\"")?;
                forbid("x_max", &i.x_max, "shape = \"truncated-gaussian\"")?;
                forbid("values", &i.values, "shape = \"truncated-gaussian\"")?;
                InitialShape::TruncatedGaussian {
                    mean: require("mean", i.mean, "shape = \"truncated-gaussian\"")?,
                    sd: require("sd", i.sd, "shape = \"truncated-gaussian\"")?,
                    lo: require("lo", i.lo, "shape = \"truncated-gaussian\"")?,
                    hi: require("hi", i.hi, "shape = \"truncated-gaussian\"")?,
                }
            }
            InitialName::GridProfile => {
                forbid("x0", &i.x0, "shape = \"grid-profile\"")?;
                forbid("mean", &i.mean, "shape = \"grid-profile\"")?;
                forbid("sd", &i.sd, "shape = \"grid-profile\"")?;
                forbid("lo", &i.lo, "shape = \"grid-profile\"")?;
                forbid("hi", &i.hi, "shape = \"grid-profile\"")?;
                InitialShape::GridProfile {
                    x_max: require("x_max", i.x_max, "shape = \"grid-profile\"")?,
                    values: i.values.clone().ok_or_else(|| {
                        SchemaError::for_field("values", "required for shape = \"grid-profile\"")
                    })?,
                }
            }
        };

        let n = &self.numerics;
        Ok(RunConfig {
            family,
            r_in: m.r_in,
            kernel,
            initial: InitialCondition { mass: i.mass, shape },
            r0: m.r0,
            t_final: m.t_final,
            numerics: Numerics {
                dt_ibm: n.dt_ibm,
                dt_pde: n.dt_pde,
                dt_sde: n.dt_sde,
                dx: n.dx,
                x_max: n.x_max,
                truncation_tol: n.truncation_tol,
                n_quad: n.n_quad,
                dict_size: n.dict_size,
                h_count: n.h_count,
                h_max: n.h_max,
                mc_paths: n.mc_paths,
                density_bins: n.density_bins,
                record_every: n.record_every,
            },
            experiment: Experiment {
                k_values: self.experiment.k_values.clone(),
                seeds: self.experiment.seeds.clone(),
                snapshot_times: self.experiment.snapshot_times.clone(),
            },
        })
    }

    /// FNV-1a 64 hash of the canonical re-serialization, in hex.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("parsed config reserializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Reads, parses, and resolves a config file; returns the run config with
/// its canonical hash.
pub fn load_config(path: &Path) -> Result<(RunConfig, String), LoadError> {
    let text = fs::read_to_string(path).map_err(LoadError::Io)?;
    let file = ConfigFile::parse(&text).map_err(LoadError::Schema)?;
    let config = file.to_run_config().map_err(LoadError::Schema)?;
    Ok((config, file.hash()))
}

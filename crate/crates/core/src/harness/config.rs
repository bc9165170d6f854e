use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::densities::{Density, DictionaryParams, TableDensity};
use crate::fields::{curl_of_interpolated_potential, parse_field_csv, PiecewiseConstantField, PotentialSpec, PotentialTerm};
use crate::geometry::{MeshSpec, Triangulation};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the triangulation comes from: a built-in generator name
/// (`unit-cube-6tet`, `single-tet`, `kuhn-subdivision(n)`) or a tet-list file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

/// The input field. Exactly one source: per-tet matrices given inline
/// (row-major `N × 3`, one list per tet) or as a CSV file, or a polynomial
/// vector potential given inline or as a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldConfig {
    Matrices {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<usize>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        values: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
    Potential {
        rows: usize,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        terms: Vec<PotentialTerm>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
}

/// A built-in density name (`iso`, `aniso:slip-e3`, `offset:<α>`,
/// `power:<p>`) or a table file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default = "default_s_max")]
    pub s_max: u64,
}

fn default_s_max() -> u64 {
    64
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            name: None,
            table: None,
            s_max: default_s_max(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Admissible normal jump of explicit matrices, relative to `max |A|`.
    #[serde(default = "default_normal_jump")]
    pub normal_jump: f64,
    /// Admissible interior ledger norm, relative to `‖μ_k‖(Ω)`.
    #[serde(default = "default_ledger")]
    pub ledger: f64,
    /// Envelope refinement slack `ε` for the certificate level choice.
    #[serde(default = "default_certificate")]
    pub certificate: f64,
}

fn default_normal_jump() -> f64 {
    1e-9
}
fn default_ledger() -> f64 {
    1e-10
}
fn default_certificate() -> f64 {
    1e-3
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            normal_jump: default_normal_jump(),
            ledger: default_ledger(),
            certificate: default_certificate(),
        }
    }
}

fn default_tests() -> usize {
    10
}

/// A run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub mesh: MeshConfig,
    pub field: FieldConfig,
    #[serde(default)]
    pub density: DensityConfig,
    pub ks: Vec<usize>,
    #[serde(default)]
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub dictionary: DictionaryParams,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Number of bubble test functions for the weak* gaps.
    #[serde(default = "default_tests")]
    pub weak_tests: usize,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Everything wrong with a configuration, one line per violation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid configuration:\n  {}", .0.join("\n  "))]
pub struct ConfigError(pub Vec<String>);

/// The inputs a run works on.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub field: PiecewiseConstantField,
    pub psi: Density,
    /// The potential, when the field came from one.
    pub potential: Option<PotentialSpec>,
}

impl RunConfig {
    /// Parses TOML; relative paths inside, the output directory included, are
/// taken relative to `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(vec![e.to_string()]))?;
        if let Some(base) = base {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(vec![format!("{}: {e}", path.display())]))?;
        Self::from_toml(&text, path.parent())
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        if self.out_dir.is_relative() {
            self.out_dir = base.join(&self.out_dir);
        }
        fix(&mut self.mesh.file);
        fix(&mut self.density.table);
        match &mut self.field {
            FieldConfig::Matrices { file, .. } | FieldConfig::Potential { file, .. } => fix(file),
        }
    }

    /// Canonical serialization, the input of the config hash. The output
    /// directory is left out so that relocated runs hash alike.
    pub fn canonical_toml(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        toml::to_string(&c).expect("config serializes")
    }

    /// Checks every constraint, collecting all violations.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!("schema_version: expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if self.ks.is_empty() {
            v.push("ks: must be nonempty".into());
        }
        for (i, k) in self.ks.iter().enumerate() {
            if *k < 2 {
                v.push(format!("ks[{i}]: k = {k} must be at least 2"));
            }
        }
        if self.sigmas.is_empty() {
            v.push("sigmas: must be nonempty".into());
        }
        if self.eps.is_empty() {
            v.push("eps: must be nonempty".into());
        }
        for (i, s) in self.sigmas.iter().enumerate() {
            if !(*s > 0.0 && s.is_finite()) {
                v.push(format!("sigmas[{i}]: σ = {s} must be positive"));
            }
        }
        for (i, e) in self.eps.iter().enumerate() {
            if !(*e > 0.0 && e.is_finite()) {
                v.push(format!("eps[{i}]: ε = {e} must be positive"));
            }
        }
        if self.dictionary.z_max < 1 {
            v.push(format!("dictionary.z_max: {} must be at least 1", self.dictionary.z_max));
        }
        if self.dictionary.directions < 1 {
            v.push("dictionary.directions: must be at least 1".into());
        }
        if self.density.s_max < 1 {
            v.push("density.s_max: must be at least 1".into());
        }
        let t = &self.tolerances;
        for (name, x) in [("normal_jump", t.normal_jump), ("ledger", t.ledger), ("certificate", t.certificate)] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("tolerances.{name}: {x} must be nonnegative"));
            }
        }
        match (&self.mesh.generator, &self.mesh.file) {
            (Some(_), Some(_)) => v.push("mesh: give either generator or file, not both".into()),
            (None, None) => v.push("mesh: one of generator or file is required".into()),
            (Some(g), None) => {
                if let Err(e) = MeshSpec::parse_name(g) {
                    v.push(format!("mesh.generator: {e}"));
                }
            }
            (None, Some(_)) => {}
        }
        match &self.field {
            FieldConfig::Matrices { rows, values, file } => match (values.is_empty(), file) {
                (false, Some(_)) => v.push("field: give either values or file, not both".into()),
                (true, None) => v.push("field: matrices need values or file".into()),
                (false, None) => match rows {
                    None => v.push("field.rows: required with inline values".into()),
                    Some(0) => v.push("field.rows: must be at least 1".into()),
                    Some(n) => {
                        for (i, m) in values.iter().enumerate() {
                            if m.len() != 3 * n {
                                v.push(format!("field.values[{i}]: {} entries, expected {}", m.len(), 3 * n));
                            }
                        }
                    }
                },
                (true, Some(_)) => {}
            },
            FieldConfig::Potential { rows, terms, file } => {
                if *rows == 0 {
                    v.push("field.rows: must be at least 1".into());
                }
                if !terms.is_empty() && file.is_some() {
                    v.push("field: give either terms or file, not both".into());
                }
                for (i, t) in terms.iter().enumerate() {
                    if t.row >= *rows || t.component >= 3 {
                        v.push(format!("field.terms[{i}]: row {} component {} out of range", t.row, t.component));
                    }
                }
            }
        }
        match (&self.density.name, &self.density.table) {
            (Some(_), Some(_)) => v.push("density: give either name or table, not both".into()),
            (Some(n), None) => {
                if let Err(e) = Density::parse_name(n, 1) {
                    v.push(format!("density.name: {e}"));
                }
            }
            (None, Some(p)) => match std::fs::read_to_string(p) {
                Ok(text) => {
                    if let Err(e) = TableDensity::parse(&text) {
                        v.push(format!("density.table: {e}"));
                    }
                }
                Err(e) => v.push(format!("density.table: {}: {e}", p.display())),
            },
            (None, None) => {}
        }
        finish(v)
    }

    /// Validates and builds the mesh, field and density.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        self.validate()?;
        let err = |m: String| ConfigError(vec![m]);
        let mesh: Triangulation = match (&self.mesh.generator, &self.mesh.file) {
            (Some(g), _) => MeshSpec::parse_name(g).and_then(|s| s.build()),
            (None, Some(p)) => MeshSpec::File {
                path: p.display().to_string(),
            }
            .build(),
            (None, None) => unreachable!("validated"),
        }
        .map_err(|e| err(format!("mesh: {e}")))?;
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| err(format!("{}: {e}", p.display())));
        let (field, potential) = match &self.field {
            FieldConfig::Matrices { rows, values, file } => {
                let f = match file {
                    Some(p) => parse_field_csv(&read(p)?, mesh, self.tolerances.normal_jump),
                    None => {
                        let n = rows.expect("validated");
                        let ms = values.iter().map(|m| DMatrix::from_row_slice(n, 3, m)).collect();
                        PiecewiseConstantField::from_matrices(mesh, ms, self.tolerances.normal_jump)
                    }
                };
                (f.map_err(|e| err(format!("field: {e}")))?, None)
            }
            FieldConfig::Potential { rows, terms, file } => {
                let spec = match file {
                    Some(p) => PotentialSpec::parse(&read(p)?, *rows).map_err(|e| err(format!("field: {e}")))?,
                    None => PotentialSpec {
                        rows: *rows,
                        terms: terms.clone(),
                    },
                };
                let f = curl_of_interpolated_potential(&spec, &mesh).map_err(|e| err(format!("field: {e}")))?;
                (f, Some(spec))
            }
        };
        let dim = field.dim();
        let psi = match (&self.density.name, &self.density.table) {
            (_, Some(p)) => Density::table(TableDensity::parse(&read(p)?).map_err(|e| err(format!("density.table: {e}")))?),
            (Some(n), None) => Density::parse_name(n, dim).map_err(|e| err(format!("density.name: {e}")))?,
            (None, None) => Density::iso(dim),
        };
        if psi.dim != dim {
            return Err(err(format!("density: dimension {} does not match field rows {dim}", psi.dim)));
        }
        Ok(Resolved { field, psi, potential })
    }
}

fn finish(v: Vec<String>) -> Result<(), ConfigError> {
    if v.is_empty() {
        Ok(())
    } else {
        Err(ConfigError(v))
    }
}

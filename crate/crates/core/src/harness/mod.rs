//! Configuration-driven runs: TOML configs with a schema version, report
//! and geometry files with a hashed manifest, and the verification suite.

mod config;
mod export;
mod run;
mod verify;

pub use config::{
    ConfigError, DensityConfig, FieldConfig, MeshConfig, Resolved, RunConfig, Tolerances, SCHEMA_VERSION,
};
pub use export::{export_geometry, render_geometry, GeometryFormat};
pub use run::{
    convergence_csv, convergence_summary, decompositions, report, run, sha256_hex, Artifact, Command, RunManifest,
    CODE_VERSION,
};
pub use verify::{gradient_pairing_check, lattice_count_bound, verify, Check, Fault, VerifyReport};

use std::path::Path;

use thiserror::Error;

use crate::construction::ConstructionError;
use crate::currents::CurrentError;
use crate::densities::EnvelopeError;
use crate::energy::EnergyError;
use crate::fields::FieldError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Current(#[from] CurrentError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("density: {0}")]
    Density(String),
    #[error("tet {tet}: {source}")]
    Envelope { tet: usize, source: EnvelopeError },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("artifacts changed since the run: {}", .0.join(", "))]
    Tampered(Vec<String>),
    #[error("verify: {0}")]
    Verify(String),
}

impl HarnessError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

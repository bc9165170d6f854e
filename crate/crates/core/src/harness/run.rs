use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Resolved, RunConfig};
use super::export::{render_geometry, GeometryFormat};
use super::HarnessError;
use crate::construction::{approximate_measure_pipeline, BubbleTest, ConvergenceReport};
use crate::densities::{certificate_within, RecessionEvaluator};
use crate::energy::{upper_bound_experiment, ExperimentParams};
use crate::fields::{coordinate_rank_one_decomposition, RankOneDecomposition};
use crate::numerics::sci;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Approximate,
    Energy,
    Envelope,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Approximate => "approximate",
            Command::Energy => "energy",
            Command::Envelope => "envelope",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// `manifest.json`: what was run, on which inputs, and what it wrote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub code_version: String,
    /// SHA-256 of the canonical TOML of the configuration.
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serialized file output into one directory, recording every file.
struct OutputDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

pub fn decompositions(r: &Resolved) -> Vec<RankOneDecomposition> {
    r.field.matrices().iter().map(coordinate_rank_one_decomposition).collect()
}

/// One row per `k`, fixed-width scientific floats.
pub fn convergence_csv(report: &ConvergenceReport, tests: usize) -> String {
    let mut s = String::from("k,segments,mass_in_domain,nu_mass,omega_mass,rho_mass_in_domain,ledger_residual,culled_lines,cell_offset,projection_offset");
    for i in 0..tests {
        let _ = write!(s, ",weak_gap_{i}");
    }
    s.push('\n');
    for r in &report.rows {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.segments,
            sci(r.mass_in_domain),
            sci(r.nu_mass),
            sci(r.omega_mass),
            sci(r.rho_mass_in_domain),
            sci(r.ledger_residual),
            r.culled_lines,
            sci(r.cell_offset),
            sci(r.projection_offset)
        );
        for g in &r.weak_gaps {
            let _ = write!(s, ",{}", sci(*g));
        }
        s.push('\n');
    }
    s
}

fn slope(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

pub fn convergence_summary(report: &ConvergenceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "field L1 = {:.6e}", report.field_l1);
    let _ = writeln!(s, "omega mass slope = {}", slope(report.omega_slope));
    let _ = writeln!(s, "rho mass slope = {}", slope(report.rho_slope));
    let _ = writeln!(
        s,
        "cell offset slope = {}, projection offset slope = {}",
        slope(report.cell_offset_slope),
        slope(report.projection_offset_slope)
    );
    for r in &report.rows {
        let worst = r.weak_gaps.iter().copied().fold(0.0, f64::max);
        let rel = if report.field_l1 > 0.0 { worst / report.field_l1 } else { 0.0 };
        let _ = writeln!(
            s,
            "k = {:>3}: {} segments, ledger residual {:.3e}, worst weak gap {:.3e} of L1, {} culled",
            r.k, r.segments, r.ledger_residual, rel, r.culled_lines
        );
    }
    s
}

fn approximate(cfg: &RunConfig, r: &Resolved, format: GeometryFormat, out: &mut OutputDir) -> Result<(), HarnessError> {
    let tests = BubbleTest::family(r.field.dim().max(1), cfg.weak_tests);
    let (measures, report) = approximate_measure_pipeline(&r.field, &decompositions(r), &cfg.ks, cfg.seed, &tests)?;
    out.write("convergence.csv", convergence_csv(&report, tests.len()).as_bytes())?;
    out.write("convergence.txt", convergence_summary(&report).as_bytes())?;
    for g in &measures {
        let mu = g.measure();
        out.write(&format!("measure_k{}.{}", g.k, format.extension()), &render_geometry(&mu, format)?)?;
        out.write(&format!("tets_k{}.json", g.k), &json(&g.manifest()))?;
    }
    Ok(())
}

fn energy(cfg: &RunConfig, r: &Resolved, out: &mut OutputDir) -> Result<(), HarnessError> {
    let params = ExperimentParams {
        ks: cfg.ks.clone(),
        sigmas: cfg.sigmas.clone(),
        eps: cfg.eps.clone(),
        dictionary: cfg.dictionary,
        s_max: cfg.density.s_max,
        seed: cfg.seed,
    };
    let report = upper_bound_experiment(&r.field, &r.psi, &params)?;
    out.write("energy.csv", report.to_csv().as_bytes())?;
    out.write("energy.txt", report.summary().as_bytes())?;
    out.write("certificates.json", &json(&report.reductions))?;
    Ok(())
}

/// One row per tetrahedron: `g̃(A_T)` at the coarsest dictionary level
/// within the certificate tolerance.
fn envelope(cfg: &RunConfig, r: &Resolved, out: &mut OutputDir) -> Result<(), HarnessError> {
    let rec = RecessionEvaluator::new(r.psi.clone(), cfg.density.s_max).map_err(|e| HarnessError::Density(e.to_string()))?;
    let mut csv = String::from("tet,value,volume,terms,z_max,residual,iterations,dictionary_size\n");
    let mut certs = Vec::new();
    for (i, (a, t)) in r.field.matrices().iter().zip(r.field.mesh().tetra()).enumerate() {
        let sol = certificate_within(a, &rec, &cfg.dictionary, cfg.tolerances.certificate)
            .map_err(|source| HarnessError::Envelope { tet: i, source })?;
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{},{}",
            sci(sol.value),
            sci(t.volume()),
            sol.certificate.len(),
            sol.z_max,
            sci(sol.residual),
            sol.iterations,
            sol.dictionary_size
        );
        certs.push(sol.certificate);
    }
    out.write("envelope.csv", csv.as_bytes())?;
    out.write("envelope_certificates.json", &json(&certs))?;
    Ok(())
}

/// Runs `command`, writing every artifact and `manifest.json` into the
/// configured output directory. Output depends only on the configuration.
pub fn run(cfg: &RunConfig, command: Command, format: GeometryFormat) -> Result<RunManifest, HarnessError> {
    let resolved = cfg.resolve()?;
    let mut out = OutputDir::create(&cfg.out_dir)?;
    log::info!("{}: {} tetrahedra, N = {}", command.name(), resolved.field.mesh().len(), resolved.field.dim());
    match command {
        Command::Approximate => approximate(cfg, &resolved, format, &mut out)?,
        Command::Energy => energy(cfg, &resolved, &mut out)?,
        Command::Envelope => envelope(cfg, &resolved, &mut out)?,
    }
    let manifest = RunManifest {
        schema_version: cfg.schema_version,
        command: command.name().into(),
        code_version: CODE_VERSION.into(),
        config_hash: sha256_hex(cfg.canonical_toml().as_bytes()),
        seed: cfg.seed,
        artifacts: out.artifacts.clone(),
    };
    let path = cfg.out_dir.join("manifest.json");
    std::fs::write(&path, json(&manifest)).map_err(|e| HarnessError::io(&path, e))?;
    Ok(manifest)
}

/// Reads `manifest.json` from a run directory, checks every artifact hash and
/// concatenates the text summaries.
pub fn report(dir: &Path) -> Result<String, HarnessError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut s = String::new();
    let _ = writeln!(s, "command = {}", manifest.command);
    let _ = writeln!(s, "code = {}", manifest.code_version);
    let _ = writeln!(s, "config = {}", manifest.config_hash);
    let _ = writeln!(s, "seed = {}", manifest.seed);
    let mut bad = Vec::new();
    for a in &manifest.artifacts {
        let p = dir.join(&a.path);
        let bytes = std::fs::read(&p).map_err(|e| HarnessError::io(&p, e))?;
        let ok = sha256_hex(&bytes) == a.sha256;
        let _ = writeln!(s, "{} {} ({} bytes)", if ok { "ok     " } else { "CHANGED" }, a.path, a.bytes);
        if !ok {
            bad.push(a.path.clone());
        }
        if ok && a.path.ends_with(".txt") {
            s.push_str(&String::from_utf8_lossy(&bytes));
        }
    }
    if !bad.is_empty() {
        return Err(HarnessError::Tampered(bad));
    }
    Ok(s)
}

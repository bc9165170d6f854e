use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::currents::{
    boundary_ledger, decompose_into_loops, default_quantum, to_obj, write_csv, write_obj_loops, NodeKey, NodeMap,
    PolyhedralCurrent,
};
use crate::geometry::Aabb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GeometryFormat {
    #[default]
    Obj,
    Csv,
}

impl GeometryFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GeometryFormat::Obj => "obj",
            GeometryFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for GeometryFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "obj" => Ok(GeometryFormat::Obj),
            "csv" => Ok(GeometryFormat::Csv),
            other => Err(format!("unknown geometry format `{other}` (expected obj or csv)")),
        }
    }
}

/// The bytes of a geometry export.
///
/// CSV lists raw segments and re-imports bit-exactly. OBJ writes one
/// polyline object per loop of constant burgers vector, with the loop's open
/// ends at nodes where the current has a boundary; a current that does not
/// decompose falls back to one object per segment.
pub fn render_geometry(mu: &PolyhedralCurrent, format: GeometryFormat) -> Result<Vec<u8>, HarnessError> {
    let mut out = Vec::new();
    match format {
        GeometryFormat::Csv => write_csv(mu, &mut out)?,
        GeometryFormat::Obj => {
            if mu.is_empty() {
                return Ok(out);
            }
            let bbox = Aabb::from_points(mu.iter().flat_map(|s| [s.start, s.end]).collect::<Vec<_>>().iter())
                .expect("nonempty current");
            let q = default_quantum(&bbox);
            let scale = mu.iter().map(|s| s.burgers_norm()).fold(0.0, f64::max);
            let ledger = boundary_ledger(mu, q, 1e-12 * scale)?;
            let keys = NodeMap::new(q);
            let ends: BTreeSet<NodeKey> = ledger.iter().map(|e| keys.key_of(&e.point)).collect();
            let exempt = |p: &crate::Vec3| ends.contains(&keys.key_of(p));
            match decompose_into_loops(mu, q, exempt, 1e-12) {
                Ok(d) => write_obj_loops(&d.loops, &mut out)?,
                Err(_) => out = to_obj(mu).into_bytes(),
            }
        }
    }
    Ok(out)
}

/// Writes `mu` to `path` in the given format.
pub fn export_geometry(mu: &PolyhedralCurrent, path: &Path, format: GeometryFormat) -> Result<(), HarnessError> {
    let bytes = render_geometry(mu, format)?;
    let io = |e: std::io::Error| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&bytes).map_err(io)?;
    w.flush().map_err(io)
}

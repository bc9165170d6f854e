use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{CurrentError, Loop, PolyhedralCurrent};
use crate::geometry::Vec3;

fn io_err(e: std::io::Error) -> CurrentError {
    CurrentError::Io(e.to_string())
}

/// Writes `x0,y0,z0,x1,y1,z1,b1..bN` with a header line. Floats use the
/// shortest representation that parses back to the same bits.
pub fn write_csv<W: Write>(mu: &PolyhedralCurrent, mut w: W) -> Result<(), CurrentError> {
    let mut header = String::from("x0,y0,z0,x1,y1,z1");
    for i in 1..=mu.dim() {
        let _ = write!(header, ",b{i}");
    }
    writeln!(w, "{header}").map_err(io_err)?;
    let mut line = String::new();
    for s in mu.iter() {
        line.clear();
        for v in [s.start.x, s.start.y, s.start.z, s.end.x, s.end.y, s.end.z]
            .iter()
            .chain(s.burgers)
        {
            if !line.is_empty() {
                line.push(',');
            }
            let _ = write!(line, "{v:?}");
        }
        writeln!(w, "{line}").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<PolyhedralCurrent, CurrentError> {
    let mut lines = r.lines().enumerate();
    let dim = match lines.next() {
        Some((_, header)) => {
            let header = header.map_err(io_err)?;
            let cols = header.split(',').count();
            if cols < 6 || !header.starts_with("x0,y0,z0,x1,y1,z1") {
                return Err(CurrentError::Csv {
                    line: 1,
                    message: "expected header x0,y0,z0,x1,y1,z1,b1..bN".into(),
                });
            }
            cols - 6
        }
        None => {
            return Err(CurrentError::Csv {
                line: 1,
                message: "empty input".into(),
            })
        }
    };
    let mut mu = PolyhedralCurrent::new(dim);
    for (i, line) in lines {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| CurrentError::Csv {
            line: i + 1,
            message: e.to_string(),
        })?;
        if vals.len() != 6 + dim {
            return Err(CurrentError::Csv {
                line: i + 1,
                message: format!("expected {} columns, found {}", 6 + dim, vals.len()),
            });
        }
        mu.push(
            Vec3::new(vals[0], vals[1], vals[2]),
            Vec3::new(vals[3], vals[4], vals[5]),
            &vals[6..],
        )
        .map_err(|e| CurrentError::Csv {
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(mu)
}

fn burgers_tag(b: &[f64]) -> String {
    let parts: Vec<String> = b.iter().map(|v| format!("{v:?}")).collect();
    format!("b=[{}]", parts.join(";"))
}

/// OBJ polylines, one object per loop with its burgers vector in the name.
pub fn write_obj_loops<W: Write>(loops: &[Loop], mut w: W) -> Result<(), CurrentError> {
    let mut base = 1usize;
    for (i, l) in loops.iter().enumerate() {
        writeln!(w, "o loop{i}_{}", burgers_tag(&l.burgers)).map_err(io_err)?;
        for p in &l.nodes {
            writeln!(w, "v {:?} {:?} {:?}", p.x, p.y, p.z).map_err(io_err)?;
        }
        let mut idx: Vec<String> = (0..l.nodes.len()).map(|k| (base + k).to_string()).collect();
        if l.closed {
            idx.push(base.to_string());
        }
        writeln!(w, "l {}", idx.join(" ")).map_err(io_err)?;
        base += l.nodes.len();
    }
    Ok(())
}

/// OBJ rendering of a raw current: one object per segment.
pub fn to_obj(mu: &PolyhedralCurrent) -> String {
    let mut s = String::new();
    for (i, seg) in mu.iter().enumerate() {
        let _ = writeln!(s, "o seg{i}_{}", burgers_tag(seg.burgers));
        let _ = writeln!(s, "v {:?} {:?} {:?}", seg.start.x, seg.start.y, seg.start.z);
        let _ = writeln!(s, "v {:?} {:?} {:?}", seg.end.x, seg.end.y, seg.end.z);
        let _ = writeln!(s, "l {} {}", 2 * i + 1, 2 * i + 2);
    }
    s
}

//! ASCII PLY for point clouds.
//!
//! Vertices are `x y z` in millimeters, written with shortest round-trip
//! formatting so a write/read cycle is lossless. Cloud metadata travels in
//! `comment` lines:
//!
//! ```text
//! comment view_tag merged
//! comment gap_mm 0
//! comment pitch_mm 2.5
//! comment back_translation 0.1 -0.02 3.5
//! comment front_count 11834
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::reconstruct::{MergeInfo, Point3, PointCloud, ViewTag};

pub fn to_string(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(64 + cloud.len() * 32);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "comment view_tag {}", cloud.view());
    if let Some(p) = cloud.pitch_mm() {
        let _ = writeln!(s, "comment pitch_mm {p:?}");
    }
    if let Some(m) = cloud.merge_info() {
        let _ = writeln!(s, "comment gap_mm {:?}", m.gap_mm);
        let t = m.back_translation;
        let _ = writeln!(s, "comment back_translation {:?} {:?} {:?}", t[0], t[1], t[2]);
        let _ = writeln!(s, "comment front_count {}", m.front_count);
    }
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in cloud.points() {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    s
}

pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    fs::write(path, to_string(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::MalformedPly(msg.into())
}

fn parse_f64(tok: Option<&str>, what: &str) -> Result<f64> {
    tok.ok_or_else(|| bad(format!("missing {what}")))?
        .parse()
        .map_err(|_| bad(format!("bad {what}")))
}

pub fn parse(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing 'ply' magic"));
    }
    let mut view = ViewTag::Merged;
    let mut pitch = None;
    let mut gap = None;
    let mut back_translation = [0.0; 3];
    let mut front_count = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;

    loop {
        let line = lines.next().ok_or_else(|| bad("missing end_header"))?.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(bad("only ASCII PLY is supported"));
                }
            }
            Some("comment") => match tok.next() {
                Some("view_tag") => view = tok.next().unwrap_or("").parse()?,
                Some("pitch_mm") => pitch = Some(parse_f64(tok.next(), "pitch_mm")?),
                Some("gap_mm") => gap = Some(parse_f64(tok.next(), "gap_mm")?),
                Some("back_translation") => {
                    for t in back_translation.iter_mut() {
                        *t = parse_f64(tok.next(), "back_translation")?;
                    }
                }
                Some("front_count") => {
                    front_count = Some(
                        tok.next()
                            .and_then(|t| t.parse::<usize>().ok())
                            .ok_or_else(|| bad("bad front_count"))?,
                    )
                }
                _ => {}
            },
            Some("element") => {
                let name = tok.next();
                let n = tok
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| bad("bad element count"))?;
                in_vertex = name == Some("vertex");
                if in_vertex {
                    vertex_count = Some(n);
                } else if n > 0 {
                    return Err(bad("only vertex elements are supported"));
                }
            }
            Some("property") if in_vertex => {
                let ty = tok.next().unwrap_or("");
                if !matches!(ty, "float" | "double" | "float32" | "float64") {
                    return Err(bad(format!("unsupported property type {ty:?}")));
                }
                properties.push(tok.next().unwrap_or("").to_string());
            }
            Some("end_header") => break,
            _ => {}
        }
    }

    let n = vertex_count.ok_or_else(|| bad("no vertex element"))?;
    let idx = |name: &str| {
        properties
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| bad(format!("missing property {name}")))
    };
    let (ix, iy, iz) = (idx("x")?, idx("y")?, idx("z")?);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let line = lines.next().ok_or_else(|| bad(format!("expected {n} vertices, found {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("bad vertex line {i}")))?;
        if vals.len() < properties.len() {
            return Err(bad(format!("short vertex line {i}")));
        }
        points.push(Point3::new(vals[ix], vals[iy], vals[iz]));
    }

    let mut cloud = PointCloud::new(points, view)
        .map_err(|e| bad(e.to_string()))?
        .with_pitch(pitch);
    if let Some(gap_mm) = gap {
        cloud = cloud.with_merge(MergeInfo {
            gap_mm,
            front_translation: [0.0; 3],
            back_translation,
            front_count: front_count.unwrap_or(0),
        });
    }
    Ok(cloud)
}

//! Text file formats.
//!
//! Pose graphs use a line-oriented UTF-8 format, `#` comments, `\n` newlines,
//! locale-independent decimals with 17 significant digits:
//!
//! ```text
//! VERTEX <id> [gx gy gz]
//! EDGE <i> <j> <qw> <qx> <qy> <qz> [kappa]
//! ```
//!
//! Quaternions are Hamilton convention, scalar first, and represent the
//! relative rotation mapping frame `i` to frame `j`. On read, quaternion (and
//! gravity) norms within 1e-3 of 1 are renormalized, anything further off is
//! rejected; exactly-unit values are kept bit-identical so that rewriting a
//! canonical file reproduces it byte for byte.
//!
//! Rotation sets (ground truth and estimates) use one `GT` record per camera:
//!
//! ```text
//! GT <id> <qw> <qx> <qy> <qz>
//! ```
//!
//! Solve reports are key-value lines plus `OBJ`/`THETA`/`K` records; see
//! [`write_solve_report`].

use crate::circular::{SolveReport, Stage};
use crate::geometry::{Rotation3, UnitVector3, WrappedAngle};
use crate::pose_graph::{GraphError, PoseGraph, VertexId};
use nalgebra::Vector3;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

const QUAT_NORM_TOL: f64 = 1e-3;

/// Canonical float formatting: 17 significant digits, enough to round-trip
/// any f64 exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Quaternion serialization form of a rotation.
///
/// Extraction is iterated to a bitwise fixed point of
/// `to_quaternion . from_quaternion`, so rewriting a file that was parsed
/// from canonical output reproduces it byte for byte.
fn canonical_quaternion(r: &Rotation3) -> [f64; 4] {
    let mut q = r.to_quaternion_wxyz();
    for _ in 0..4 {
        let back = Rotation3::from_quaternion_wxyz(q, 1e-6).expect("unit quaternion");
        let next = back.to_quaternion_wxyz();
        if next == q {
            break;
        }
        q = next;
    }
    q
}

fn parse_err(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, GraphError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid {what}: {tok:?}")))
}

fn parse_id(tok: &str, line: usize) -> Result<VertexId, GraphError> {
    tok.parse::<VertexId>()
        .map_err(|_| parse_err(line, format!("invalid vertex id: {tok:?}")))
}

fn parse_quaternion(
    toks: &[&str],
    line: usize,
) -> Result<Rotation3, GraphError> {
    let mut q = [0.0; 4];
    for (k, slot) in q.iter_mut().enumerate() {
        *slot = parse_f64(toks[k], line, "quaternion component")?;
    }
    Rotation3::from_quaternion_wxyz(q, QUAT_NORM_TOL)
        .map_err(|e| parse_err(line, e.to_string()))
}

/// Reads a pose graph. Vertices must be declared before the edges that use
/// them; errors carry the offending line number.
pub fn read_graph(path: &Path) -> Result<PoseGraph, GraphError> {
    let content = fs::read_to_string(path)?;
    let mut graph = PoseGraph::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match toks[0] {
            "VERTEX" => {
                let gravity = match toks.len() {
                    2 => None,
                    5 => {
                        let g = Vector3::new(
                            parse_f64(toks[2], line, "gravity component")?,
                            parse_f64(toks[3], line, "gravity component")?,
                            parse_f64(toks[4], line, "gravity component")?,
                        );
                        let n = g.norm();
                        if (n - 1.0).abs() > QUAT_NORM_TOL {
                            return Err(parse_err(line, format!("gravity norm {n} too far from 1")));
                        }
                        let g = if (n - 1.0).abs() <= 1e-12 { g } else { g / n };
                        Some(UnitVector3::new(g).map_err(|e| parse_err(line, e.to_string()))?)
                    }
                    _ => return Err(parse_err(line, "VERTEX takes <id> or <id> <gx> <gy> <gz>")),
                };
                let id = parse_id(toks[1], line)?;
                graph
                    .add_vertex(id, gravity)
                    .map_err(|e| parse_err(line, e.to_string()))?;
            }
            "EDGE" => {
                if toks.len() != 7 && toks.len() != 8 {
                    return Err(parse_err(
                        line,
                        "EDGE takes <i> <j> <qw> <qx> <qy> <qz> [kappa]",
                    ));
                }
                let src = parse_id(toks[1], line)?;
                let dst = parse_id(toks[2], line)?;
                let rel = parse_quaternion(&toks[3..7], line)?;
                let kappa = if toks.len() == 8 {
                    parse_f64(toks[7], line, "kappa")?
                } else {
                    1.0
                };
                graph
                    .add_edge(src, dst, rel, kappa)
                    .map_err(|e| parse_err(line, e.to_string()))?;
            }
            other => return Err(parse_err(line, format!("unknown record tag {other:?}"))),
        }
    }
    Ok(graph)
}

/// Writes a pose graph in canonical form: vertices in ascending id order,
/// edges in insertion order, kappa always explicit.
pub fn write_graph(graph: &PoseGraph, path: &Path) -> Result<(), GraphError> {
    let mut out = String::new();
    for v in graph.vertices() {
        match &v.gravity {
            Some(g) => {
                let gv = g.as_vector();
                writeln!(
                    out,
                    "VERTEX {} {} {} {}",
                    v.id,
                    format_float(gv.x),
                    format_float(gv.y),
                    format_float(gv.z)
                )
                .unwrap();
            }
            None => writeln!(out, "VERTEX {}", v.id).unwrap(),
        }
    }
    for e in graph.edges() {
        let q = canonical_quaternion(&e.rel);
        writeln!(
            out,
            "EDGE {} {} {} {} {} {} {}",
            e.src,
            e.dst,
            format_float(q[0]),
            format_float(q[1]),
            format_float(q[2]),
            format_float(q[3]),
            format_float(e.kappa)
        )
        .unwrap();
    }
    atomic_write(path, &out)?;
    Ok(())
}

/// Reads a rotation set (`GT` records).
pub fn read_rotations(path: &Path) -> Result<BTreeMap<VertexId, Rotation3>, GraphError> {
    let content = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks[0] != "GT" {
            return Err(parse_err(line, format!("unknown record tag {:?}", toks[0])));
        }
        if toks.len() != 6 {
            return Err(parse_err(line, "GT takes <id> <qw> <qx> <qy> <qz>"));
        }
        let id = parse_id(toks[1], line)?;
        let rot = parse_quaternion(&toks[2..6], line)?;
        if out.insert(id, rot).is_some() {
            return Err(parse_err(line, format!("duplicate GT record for id {id}")));
        }
    }
    Ok(out)
}

/// Writes a rotation set as `GT` records in ascending id order.
pub fn write_rotations(
    rotations: &BTreeMap<VertexId, Rotation3>,
    path: &Path,
) -> Result<(), GraphError> {
    let mut out = String::new();
    for (id, r) in rotations {
        let q = canonical_quaternion(r);
        writeln!(
            out,
            "GT {} {} {} {} {}",
            id,
            format_float(q[0]),
            format_float(q[1]),
            format_float(q[2]),
            format_float(q[3])
        )
        .unwrap();
    }
    atomic_write(path, &out)?;
    Ok(())
}

/// Serializes a solve report: header keys, then one `OBJ` line per outer
/// iteration, `THETA` per vertex, `K` per edge in problem order.
pub fn write_solve_report(report: &SolveReport, mode: &str, path: &Path) -> Result<(), GraphError> {
    let mut out = String::new();
    writeln!(out, "mode {mode}").unwrap();
    writeln!(out, "converged {}", u8::from(report.converged)).unwrap();
    writeln!(out, "iterations {}", report.iterations).unwrap();
    for (stage, value) in &report.objective_trace {
        writeln!(out, "OBJ {} {}", stage.name(), format_float(*value)).unwrap();
    }
    for (id, theta) in &report.thetas {
        writeln!(out, "THETA {} {}", id, format_float(theta.radians())).unwrap();
    }
    for &(src, dst, k) in &report.periods {
        writeln!(out, "K {src} {dst} {k}").unwrap();
    }
    atomic_write(path, &out)?;
    Ok(())
}

/// Reads a solve report written by [`write_solve_report`]. Returns the
/// report and its mode string.
pub fn read_solve_report(path: &Path) -> Result<(SolveReport, String), GraphError> {
    let content = fs::read_to_string(path)?;
    let mut mode = String::new();
    let mut converged = false;
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut thetas = BTreeMap::new();
    let mut periods = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match toks[0] {
            "mode" => mode = toks.get(1).unwrap_or(&"").to_string(),
            "converged" => converged = toks.get(1) == Some(&"1"),
            "iterations" => {
                iterations = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(line, "invalid iterations"))?
            }
            "OBJ" => {
                if toks.len() != 3 {
                    return Err(parse_err(line, "OBJ takes <stage> <value>"));
                }
                let stage = match toks[1] {
                    "l1" => Stage::L1,
                    "gm" => Stage::GemanMcClure,
                    other => return Err(parse_err(line, format!("unknown stage {other:?}"))),
                };
                trace.push((stage, parse_f64(toks[2], line, "objective")?));
            }
            "THETA" => {
                if toks.len() != 3 {
                    return Err(parse_err(line, "THETA takes <id> <radians>"));
                }
                let id = parse_id(toks[1], line)?;
                let value = parse_f64(toks[2], line, "theta")?;
                let angle = WrappedAngle::new(value).map_err(|e| parse_err(line, e.to_string()))?;
                thetas.insert(id, angle);
            }
            "K" => {
                if toks.len() != 4 {
                    return Err(parse_err(line, "K takes <src> <dst> <k>"));
                }
                let src = parse_id(toks[1], line)?;
                let dst = parse_id(toks[2], line)?;
                let k = toks[3]
                    .parse::<i32>()
                    .map_err(|_| parse_err(line, format!("invalid period {:?}", toks[3])))?;
                periods.push((src, dst, k));
            }
            other => return Err(parse_err(line, format!("unknown record tag {other:?}"))),
        }
    }
    Ok((
        SolveReport {
            thetas,
            periods,
            objective_trace: trace,
            iterations,
            converged,
        },
        mode,
    ))
}

/// CSV float formatting: 9 significant digits.
pub fn format_csv_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Per-vertex error CSV: `vertex_id,error_rad`.
pub fn write_errors_csv(errors: &[(VertexId, f64)], path: &Path) -> Result<(), GraphError> {
    let mut out = String::from("vertex_id,error_rad\n");
    for (id, e) in errors {
        writeln!(out, "{},{}", id, format_csv_float(*e)).unwrap();
    }
    atomic_write(path, &out)?;
    Ok(())
}

/// CDF CSV: `error_rad,cumulative_fraction`, sorted by error.
pub fn write_cdf_csv(cdf: &[(f64, f64)], path: &Path) -> Result<(), GraphError> {
    let mut out = String::from("error_rad,cumulative_fraction\n");
    for (e, f) in cdf {
        writeln!(out, "{},{}", format_csv_float(*e), format_csv_float(*f)).unwrap();
    }
    atomic_write(path, &out)?;
    Ok(())
}

/// Writes `content` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, content: &str) -> Result<(), std::io::Error> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".into(),
    });
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)
}

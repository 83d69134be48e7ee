//! ASCII PLY point clouds.
//!
//! Reading accepts any ASCII PLY whose first element is `vertex` with `x`,
//! `y`, `z` properties; other vertex properties (colors, normals) and any
//! further elements are skipped. Writing emits only `x y z`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Point3, PointCloud};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PLY header: {0}")]
    Header(String),
    #[error("unsupported PLY format `{0}` (only ascii 1.0 is supported)")]
    Format(String),
    #[error("line {line}: {msg}")]
    Body { line: usize, msg: String },
}

pub fn read_ply_file(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let frame = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_ply(file, frame)
}

pub fn read_ply(reader: impl Read, frame: impl Into<String>) -> Result<PointCloud, PlyError> {
    let mut lines = Lines {
        inner: BufReader::new(reader).lines(),
        line_no: 0,
    };

    if lines.next()?.as_deref().map(str::trim) != Some("ply") {
        return Err(PlyError::Header("missing `ply` magic".into()));
    }

    // (name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    loop {
        let line = lines
            .next()?
            .ok_or_else(|| PlyError::Header("missing end_header".into()))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", fmt, ver] => {
                if *fmt != "ascii" || *ver != "1.0" {
                    return Err(PlyError::Format(format!("{fmt} {ver}")));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let n = count
                    .parse()
                    .map_err(|_| PlyError::Header(format!("bad element count `{count}`")))?;
                elements.push((name.to_string(), n, Vec::new()));
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| PlyError::Header("property before element".into()))?;
                el.2.push(name.to_string());
            }
            _ => return Err(PlyError::Header(format!("unexpected line `{line}`"))),
        }
    }

    let mut points = Vec::new();
    for (name, count, props) in &elements {
        if name != "vertex" {
            for _ in 0..*count {
                lines.next()?;
            }
            continue;
        }
        let idx = |axis: &str| {
            props
                .iter()
                .position(|p| p == axis)
                .ok_or_else(|| PlyError::Header(format!("vertex element lacks `{axis}`")))
        };
        let (ix, iy, iz) = (idx("x")?, idx("y")?, idx("z")?);
        points.reserve(*count);
        for _ in 0..*count {
            let line = lines.next()?.ok_or(PlyError::Body {
                line: lines.line_no,
                msg: "unexpected end of file".into(),
            })?;
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() < props.len() {
                return Err(PlyError::Body {
                    line: lines.line_no,
                    msg: format!("expected {} values, found {}", props.len(), values.len()),
                });
            }
            let parse = |i: usize| -> Result<f64, PlyError> {
                let v: f64 = values[i].parse().map_err(|_| PlyError::Body {
                    line: lines.line_no,
                    msg: format!("`{}` is not a number", values[i]),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(PlyError::Body {
                        line: lines.line_no,
                        msg: "non-finite coordinate".into(),
                    })
                }
            };
            points.push(Point3::new(parse(ix)?, parse(iy)?, parse(iz)?));
        }
    }
    Ok(PointCloud::new(points, frame))
}

struct Lines<R> {
    inner: std::io::Lines<BufReader<R>>,
    line_no: usize,
}

impl<R: Read> Lines<R> {
    fn next(&mut self) -> Result<Option<String>, PlyError> {
        self.line_no += 1;
        Ok(self.inner.next().transpose()?)
    }
}

pub fn write_ply(cloud: &PointCloud, mut writer: impl Write) -> std::io::Result<()> {
    writer.write_all(ply_string(cloud).as_bytes())
}

pub fn write_ply_file(cloud: &PointCloud, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, ply_string(cloud))
}

pub fn ply_string(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(64 + cloud.len() * 32);
    s.push_str("ply\nformat ascii 1.0\n");
    if !cloud.frame.is_empty() {
        let _ = writeln!(s, "comment frame {}", cloud.frame);
    }
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in &cloud.points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

//! Plain-text mesh and metric files.
//!
//! Mesh: a `NVERTS NELEMS` header, then `x y` per vertex, then `v0 v1 v2`
//! per element (0-based). Metric: one `m00 m01 m11` line per vertex.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::metric::{MetricField, MetricTensor};

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Lines {
            path,
            inner: text.lines().enumerate(),
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Next non-blank line parsed as exactly `N` fields.
    fn fields<T: FromStr, const N: usize>(&mut self, what: &str) -> Result<[T; N]> {
        let (i, line) = loop {
            match self.inner.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => break (i + 1, l),
                None => return Err(self.err(0, format!("unexpected end of file, expected {what}"))),
            }
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != N {
            return Err(self.err(i, format!("expected {N} fields for {what}, found {}", parts.len())));
        }
        let mut out = Vec::with_capacity(N);
        for p in parts {
            out.push(
                p.parse::<T>()
                    .map_err(|_| self.err(i, format!("bad value {p:?} in {what}")))?,
            );
        }
        Ok(out.try_into().ok().expect("length checked"))
    }

    fn finish(mut self) -> Result<()> {
        match self.inner.find(|(_, l)| !l.trim().is_empty()) {
            Some((i, _)) => Err(self.err(i + 1, "trailing data")),
            None => Ok(()),
        }
    }
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    let text = fs::read_to_string(path)?;
    let mut lines = Lines::new(path, &text);
    let [nv, ne] = lines.fields::<usize, 2>("header")?;
    let mut coords = Vec::with_capacity(nv);
    for _ in 0..nv {
        let xy = lines.fields::<f64, 2>("vertex")?;
        if !xy.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite vertex coordinate in {}",
                path.display()
            )));
        }
        coords.push(xy);
    }
    let mut elements = Vec::with_capacity(ne);
    for _ in 0..ne {
        elements.push(lines.fields::<usize, 3>("element")?);
    }
    lines.finish()?;
    Mesh::build_adjacency(elements, coords, true)
}

/// Writes the live part of `mesh`; it should be compacted first so that
/// ids stay meaningful.
pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{} {}", mesh.n_vertices(), mesh.n_live_elements())?;
    for p in mesh.coords() {
        writeln!(w, "{:e} {:e}", p[0], p[1])?;
    }
    for (_, t) in mesh.live_elements() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metric(path: &Path, n_vertices: usize) -> Result<MetricField> {
    let text = fs::read_to_string(path)?;
    let mut lines = Lines::new(path, &text);
    let mut tensors = Vec::with_capacity(n_vertices);
    for v in 0..n_vertices {
        let [a, b, c] = lines.fields::<f64, 3>("metric tensor")?;
        let m = MetricTensor::new(a, b, c);
        if !m.is_spd() {
            return Err(Error::InvalidArgument(format!(
                "metric tensor of vertex {v} in {} is not SPD",
                path.display()
            )));
        }
        tensors.push(m);
    }
    lines.finish()?;
    Ok(MetricField::new(tensors))
}

pub fn write_metric(field: &MetricField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for m in field.tensors() {
        writeln!(w, "{:e} {:e} {:e}", m.m00, m.m01, m.m11)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let mesh = Mesh::structured(4, 3).unwrap();
        write_mesh(&mesh, &path).unwrap();
        let back = read_mesh(&path).unwrap();
        assert_eq!(back.coords(), mesh.coords());
        assert_eq!(back.element_nodes(), mesh.element_nodes());
        assert_eq!(back.boundary_tags(), mesh.boundary_tags());
    }

    #[test]
    fn metric_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.metric");
        let field = MetricField::new(vec![MetricTensor::new(2.0, 0.25, 1.0 / 3.0), MetricTensor::IDENTITY]);
        write_metric(&field, &path).unwrap();
        assert_eq!(read_metric(&path, 2).unwrap(), field);
        assert!(read_metric(&path, 3).is_err());
        assert!(read_metric(&path, 1).is_err());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "3 1\n0 0\n1 0\n0 x\n0 1 2\n").unwrap();
        match read_mesh(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        fs::write(&path, "3 1\n0 0\n1 0\n0 1\n0 1 5\n").unwrap();
        assert!(read_mesh(&path).is_err());
        fs::write(&path, "3 1\n0 0\n1 0\n0 1\n").unwrap();
        assert!(matches!(read_mesh(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_spd_metric_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.metric");
        fs::write(&path, "1 2 1\n").unwrap();
        assert!(read_metric(&path, 1).is_err());
    }
}

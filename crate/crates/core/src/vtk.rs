//! Legacy ASCII VTK unstructured-grid output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// VTK cell type id of a linear triangle.
pub const VTK_TRIANGLE: u8 = 5;

#[derive(Debug, Clone, Copy)]
pub enum VtkField<'a> {
    Point(&'a str, &'a [f64]),
    Cell(&'a str, &'a [f64]),
}

/// Writes `mesh` with the given scalar arrays. The mesh must be compacted.
pub fn write_vtk(mesh: &Mesh, fields: &[VtkField<'_>], path: &Path) -> Result<()> {
    let (nv, ne) = (mesh.n_vertices(), mesh.n_elements());
    if mesh.n_live_elements() != ne || mesh.n_live_vertices() != nv {
        return Err(Error::InvalidArgument("write_vtk needs a compacted mesh".into()));
    }
    for f in fields {
        let (name, len, want) = match *f {
            VtkField::Point(n, v) => (n, v.len(), nv),
            VtkField::Cell(n, v) => (n, v.len(), ne),
        };
        if len != want || name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "bad VTK array {name:?}: {len} values, need {want}"
            )));
        }
    }

    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "meshadapt")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for p in mesh.coords() {
        writeln!(w, "{:e} {:e} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {ne} {}", 4 * ne)?;
    for t in mesh.element_nodes() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(w, "{VTK_TRIANGLE}")?;
    }

    let section = |w: &mut BufWriter<fs::File>, header: &str, cell: bool| -> Result<()> {
        let mut first = true;
        for f in fields {
            let (name, values) = match (*f, cell) {
                (VtkField::Point(n, v), false) | (VtkField::Cell(n, v), true) => (n, v),
                _ => continue,
            };
            if first {
                writeln!(w, "{header}")?;
                first = false;
            }
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in values {
                writeln!(w, "{v:e}")?;
            }
        }
        Ok(())
    };
    section(&mut w, &format!("POINT_DATA {nv}"), false)?;
    section(&mut w, &format!("CELL_DATA {ne}"), true)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_after(text: &str, key: &str) -> usize {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    }

    #[test]
    fn two_triangles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vtk");
        let mesh = Mesh::structured(2, 2).unwrap();
        let psi = [0.0, 1.0, 2.0, 3.0];
        let q = [0.5, 0.75];
        write_vtk(
            &mesh,
            &[VtkField::Point("psi", &psi), VtkField::Cell("quality", &q)],
            &path,
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(count_after(&text, "POINTS"), 4);
        assert_eq!(count_after(&text, "CELLS"), 2);
        assert_eq!(count_after(&text, "CELL_TYPES"), 2);
        let types: Vec<&str> = text
            .lines()
            .skip_while(|l| !l.starts_with("CELL_TYPES"))
            .skip(1)
            .take(2)
            .collect();
        assert_eq!(types, ["5", "5"]);
        assert!(text.contains("POINT_DATA 4\nSCALARS psi double 1"));
        assert!(text.contains("CELL_DATA 2\nSCALARS quality double 1"));
    }

    #[test]
    fn geometry_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.vtk");
        let mesh = Mesh::structured(5, 4).unwrap();
        write_vtk(&mesh, &[], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(count_after(&text, "POINTS"), mesh.n_vertices());
        assert!(!text.contains("POINT_DATA") && !text.contains("CELL_DATA"));
    }

    #[test]
    fn rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::structured(2, 2).unwrap();
        let short = [1.0];
        assert!(write_vtk(&mesh, &[VtkField::Point("p", &short)], &dir.path().join("x.vtk")).is_err());
        assert!(matches!(
            write_vtk(&mesh, &[], &dir.path().join("missing").join("x.vtk")),
            Err(Error::Io(_))
        ));
    }
}

//! Legacy ASCII VTK (version 2.0) output of nodal P1 fields.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::point::Point2;
use crate::spaces::CompositeStokesSpace;

/// Triangle mesh with nodal velocity and pressure.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodalField {
    pub points: Vec<Point2>,
    pub cells: Vec<[usize; 3]>,
    pub velocity: Vec<[f64; 2]>,
    pub pressure: Vec<f64>,
}

const VTK_TRIANGLE: u8 = 5;

impl NodalField {
    pub fn write_legacy<W: Write>(&self, mut w: W, title: &str) -> Result<()> {
        writeln!(w, "# vtk DataFile Version 2.0")?;
        writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", self.points.len())?;
        for p in &self.points {
            writeln!(w, "{:e} {:e} 0", p.x, p.y)?;
        }
        writeln!(w, "CELLS {} {}", self.cells.len(), 4 * self.cells.len())?;
        for c in &self.cells {
            writeln!(w, "3 {} {} {}", c[0], c[1], c[2])?;
        }
        writeln!(w, "CELL_TYPES {}", self.cells.len())?;
        for _ in &self.cells {
            writeln!(w, "{VTK_TRIANGLE}")?;
        }
        writeln!(w, "POINT_DATA {}", self.points.len())?;
        writeln!(w, "VECTORS velocity double")?;
        for v in &self.velocity {
            writeln!(w, "{:e} {:e} 0", v[0], v[1])?;
        }
        writeln!(w, "SCALARS pressure double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for p in &self.pressure {
            writeln!(w, "{p:e}")?;
        }
        Ok(())
    }

    /// Reads back files in the layout written by [`NodalField::write_legacy`],
    /// checking counts and section headers.
    pub fn read_legacy<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut next =
            || -> Result<String> { lines.next().ok_or_else(|| Error::Parse("unexpected end of file".into()))?.map_err(Error::from) };
        let bad = |what: &str, line: &str| Error::Parse(format!("expected {what}, found {line:?}"));
        let header = next()?;
        if !header.starts_with("# vtk DataFile Version") {
            return Err(bad("vtk header", &header));
        }
        next()?;
        for expect in ["ASCII", "DATASET UNSTRUCTURED_GRID"] {
            let line = next()?;
            if line.trim() != expect {
                return Err(bad(expect, &line));
            }
        }
        let count = |line: &str, key: &str| -> Result<Vec<usize>> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(key, line));
            }
            Ok(it.filter_map(|t| t.parse().ok()).collect())
        };
        let floats = |line: &str| -> Result<Vec<f64>> {
            line.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| bad("number", line))).collect()
        };

        let np = *count(&next()?, "POINTS")?.first().ok_or_else(|| Error::Parse("POINTS count".into()))?;
        let mut field = NodalField::default();
        for _ in 0..np {
            let v = floats(&next()?)?;
            if v.len() != 3 {
                return Err(Error::Parse("point needs three coordinates".into()));
            }
            field.points.push(Point2::new(v[0], v[1]));
        }
        let cc = count(&next()?, "CELLS")?;
        if cc.len() != 2 || cc[1] != 4 * cc[0] {
            return Err(Error::Parse(format!("bad CELLS header {cc:?}")));
        }
        for _ in 0..cc[0] {
            let line = next()?;
            let ids: Vec<usize> = line.split_whitespace().map(|t| t.parse().map_err(|_| bad("index", &line))).collect::<Result<_>>()?;
            if ids.len() != 4 || ids[0] != 3 || ids[1..].iter().any(|&i| i >= np) {
                return Err(bad("triangle", &line));
            }
            field.cells.push([ids[1], ids[2], ids[3]]);
        }
        if count(&next()?, "CELL_TYPES")? != vec![cc[0]] {
            return Err(Error::Parse("CELL_TYPES count".into()));
        }
        for _ in 0..cc[0] {
            let line = next()?;
            if line.trim() != "5" {
                return Err(bad("triangle cell type", &line));
            }
        }
        if count(&next()?, "POINT_DATA")? != vec![np] {
            return Err(Error::Parse("POINT_DATA count".into()));
        }
        let line = next()?;
        if line.split_whitespace().take(2).collect::<Vec<_>>() != ["VECTORS", "velocity"] {
            return Err(bad("velocity vectors", &line));
        }
        for _ in 0..np {
            let v = floats(&next()?)?;
            if v.len() != 3 {
                return Err(Error::Parse("vector needs three components".into()));
            }
            field.velocity.push([v[0], v[1]]);
        }
        let line = next()?;
        if line.split_whitespace().take(2).collect::<Vec<_>>() != ["SCALARS", "pressure"] {
            return Err(bad("pressure scalars", &line));
        }
        let line = next()?;
        if line.trim() != "LOOKUP_TABLE default" {
            return Err(bad("lookup table", &line));
        }
        for _ in 0..np {
            let v = floats(&next()?)?;
            field.pressure.push(*v.first().ok_or_else(|| Error::Parse("missing pressure".into()))?);
        }
        Ok(field)
    }
}

/// Background (active cells only) and overlapping fields of a composite
/// coefficient vector. Points are numbered by dof.
pub fn composite_fields(space: &CompositeStokesSpace, x: &[f64]) -> (NodalField, NodalField) {
    let bg = NodalField {
        points: space.bg.dof_vertices().iter().map(|&v| space.bg.mesh().vertices()[v]).collect(),
        cells: space.bg.active_cells().iter().map(|&c| space.bg.cell_dofs(c)).collect(),
        velocity: (0..space.bg.n_dofs()).map(|d| [x[space.u1(d, 0)], x[space.u1(d, 1)]]).collect(),
        pressure: (0..space.bg.n_dofs()).map(|d| x[space.p1(d)]).collect(),
    };
    let ov = NodalField {
        points: space.ov.dof_vertices().iter().map(|&v| space.ov.mesh().vertices()[v]).collect(),
        cells: (0..space.ov.mesh().num_cells()).map(|c| space.ov.cell_dofs(c)).collect(),
        velocity: (0..space.ov.n_dofs()).map(|d| [x[space.u2(d, 0)], x[space.u2(d, 1)]]).collect(),
        pressure: (0..space.ov.n_dofs()).map(|d| x[space.p2(d)]).collect(),
    };
    (bg, ov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> NodalField {
        NodalField {
            points: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0), Point2::new(1.0, 1.0)],
            cells: vec![[0, 1, 3], [0, 3, 2]],
            velocity: vec![[0.0, 1.0], [0.5, -0.25], [1e-17, 3.0], [2.0, 2.0]],
            pressure: vec![1.0, -2.0, 0.1, 0.0],
        }
    }

    #[test]
    fn roundtrip() {
        let mut buf = Vec::new();
        sample().write_legacy(&mut buf, "test").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 2.0\ntest\nASCII\nDATASET UNSTRUCTURED_GRID\n"));
        assert!(text.contains("VECTORS velocity double\n"));
        assert!(text.contains("SCALARS pressure double 1\nLOOKUP_TABLE default\n"));
        assert_eq!(NodalField::read_legacy(buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn rejects_truncated_and_malformed() {
        let mut buf = Vec::new();
        sample().write_legacy(&mut buf, "t").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(NodalField::read_legacy(truncated.as_bytes()).is_err());
        let broken = text.replace("3 0 1 3", "3 0 1 9");
        assert!(NodalField::read_legacy(broken.as_bytes()).is_err());
        let broken = text.replace("ASCII", "BINARY");
        assert!(NodalField::read_legacy(broken.as_bytes()).is_err());
    }
}

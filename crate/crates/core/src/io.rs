//! Field dumps: a self-describing CSV format that round-trips bit-exactly and
//! a legacy-VTK `STRUCTURED_POINTS` writer for visualization tools.
//!
//! CSV layout:
//!
//! ```text
//! # nx=4 ny=2 x0=0e0 y0=0e0 dx=2.5e-1 dy=5e-1 t=1e0
//! x,y,h,hu,hv
//! 1.2500000000000000e-1,2.5000000000000000e-1,...
//! ```
//!
//! Rows run over interior cells with x varying fastest. Values are written with
//! 17 significant digits, which is enough to recover every finite `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Result, SolverError};
use crate::grid::{Conserved, ConservedField, Field, Grid, ScalarField};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "GYRE_OUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub grid: Grid,
    pub t: f64,
    pub names: Vec<String>,
    /// One interior-sized column per name, row-major.
    pub columns: Vec<Vec<f64>>,
}

impl FieldDump {
    pub fn new(grid: Grid, t: f64) -> Self {
        FieldDump {
            grid,
            t,
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    /// Append a column; it must hold one value per interior cell.
    pub fn push(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        let n = self.grid.nx * self.grid.ny;
        if values.len() != n {
            return Err(SolverError::ShapeMismatch {
                expected: n,
                actual: values.len(),
            });
        }
        if name.is_empty() || name.contains([',', ' ', '\n']) || name == "x" || name == "y" {
            return Err(SolverError::config("column", format!("invalid column name `{name}`")));
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    pub fn with(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.push(name, values)?;
        Ok(self)
    }

    pub fn push_scalar(&mut self, name: &str, field: &ScalarField) -> Result<()> {
        self.push(name, field.interior_values())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|k| self.columns[k].as_slice())
    }

    /// Depth and momenta of a conserved field.
    pub fn conserved(q: &ConservedField, t: f64) -> Self {
        let vals = q.interior_values();
        FieldDump {
            grid: *q.grid(),
            t,
            names: vec!["h".into(), "hu".into(), "hv".into()],
            columns: vec![
                vals.iter().map(|s| s.h).collect(),
                vals.iter().map(|s| s.hu).collect(),
                vals.iter().map(|s| s.hv).collect(),
            ],
        }
    }

    /// Rebuild a conserved field from the `h`, `hu`, `hv` columns. Ghost cells
    /// are left at rest with the first interior depth; callers refill them.
    pub fn to_conserved(&self) -> Result<ConservedField> {
        let col = |name: &str| {
            self.column(name)
                .ok_or_else(|| SolverError::config(name, "column missing from field dump"))
        };
        let (h, hu, hv) = (col("h")?, col("hu")?, col("hv")?);
        let vals: Vec<Conserved> = (0..h.len()).map(|k| Conserved::new(h[k], hu[k], hv[k])).collect();
        let mut q = Field::filled(self.grid, Conserved::new(h[0], 0.0, 0.0));
        q.set_interior(&vals)?;
        Ok(q)
    }

    pub fn to_csv_string(&self) -> String {
        let g = &self.grid;
        let mut out = String::with_capacity((self.names.len() + 2) * 24 * g.nx * g.ny + 128);
        let _ = writeln!(
            out,
            "# nx={} ny={} x0={:e} y0={:e} dx={:e} dy={:e} t={:e}",
            g.nx, g.ny, g.x0, g.y0, g.dx, g.dy, self.t
        );
        out.push_str("x,y");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (k, (i, j)) in g.interior().enumerate() {
            let (x, y) = g.center(i, j);
            let _ = write!(out, "{x:.16e},{y:.16e}");
            for c in &self.columns {
                let _ = write!(out, ",{:.16e}", c[k]);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let bad = |message: String| SolverError::MalformedDump {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| bad("missing `#` metadata line".into()))?;
        let get = |key: &str| -> Result<&str> {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| bad(format!("metadata lacks `{key}`")))
        };
        let num = |key: &str, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| bad(format!("metadata `{key}` is not a number")))
        };
        let nx: usize = get("nx")?.parse().map_err(|_| bad("bad nx".into()))?;
        let ny: usize = get("ny")?.parse().map_err(|_| bad("bad ny".into()))?;
        let x0 = num("x0", get("x0")?)?;
        let y0 = num("y0", get("y0")?)?;
        let dx = num("dx", get("dx")?)?;
        let dy = num("dy", get("dy")?)?;
        let t = num("t", get("t")?)?;
        let grid = Grid::new(nx, ny, dx, dy, x0, y0).map_err(|e| bad(e.to_string()))?;

        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing column header".into()))?
            .split(',')
            .collect();
        if header.len() < 2 || header[0] != "x" || header[1] != "y" {
            return Err(bad("column header must start with `x,y`".into()));
        }
        let names: Vec<String> = header[2..].iter().map(|s| s.to_string()).collect();
        let mut columns = vec![Vec::with_capacity(nx * ny); names.len()];
        let mut rows = 0;
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(bad(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    header.len()
                )));
            }
            for (c, f) in fields[2..].iter().enumerate() {
                let v = f
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}: `{f}` is not a number", lineno + 1)))?;
                columns[c].push(v);
            }
            rows += 1;
        }
        if rows != nx * ny {
            return Err(bad(format!("expected {} rows, found {rows}", nx * ny)));
        }
        Ok(FieldDump { grid, t, names, columns })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        fs::write(path, self.to_csv_string()).map_err(|e| SolverError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SolverError::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    /// Legacy ASCII VTK with one `SCALARS` block per column, plus a
    /// `velocity` vector block when both `u` and `v` columns are present.
    pub fn to_vtk_string(&self, title: &str) -> String {
        let g = &self.grid;
        let n = g.nx * g.ny;
        let mut out = String::with_capacity((self.names.len() + 1) * 26 * n + 256);
        out.push_str("# vtk DataFile Version 3.0\n");
        let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
        out.push_str(if title.is_empty() { "field" } else { &title });
        out.push('\n');
        out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
        let _ = writeln!(out, "DIMENSIONS {} {} 1", g.nx + 1, g.ny + 1);
        let _ = writeln!(out, "ORIGIN {:e} {:e} 0", g.x0, g.y0);
        let _ = writeln!(out, "SPACING {:e} {:e} 1", g.dx, g.dy);
        let _ = writeln!(out, "CELL_DATA {n}");
        for (name, col) in self.names.iter().zip(&self.columns) {
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in col {
                let _ = writeln!(out, "{v:.16e}");
            }
        }
        if let (Some(u), Some(v)) = (self.column("u"), self.column("v")) {
            out.push_str("VECTORS velocity double\n");
            for (a, b) in u.iter().zip(v) {
                let _ = writeln!(out, "{a:.16e} {b:.16e} 0");
            }
        }
        out
    }

    pub fn write_vtk(&self, path: &Path, title: &str) -> Result<()> {
        ensure_parent(path)?;
        fs::write(path, self.to_vtk_string(title)).map_err(|e| SolverError::io(path, e))
    }
}

/// Header facts of a legacy-VTK structured-points file.
#[derive(Clone, Debug, PartialEq)]
pub struct VtkSummary {
    pub dimensions: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub cells: usize,
    pub scalars: Vec<String>,
    pub vectors: Vec<String>,
}

/// Check a legacy ASCII `STRUCTURED_POINTS` file against the format grammar:
/// header lines, consistent dimensions and cell count, and the right number of
/// numeric values in every data block.
pub fn validate_vtk(text: &str) -> std::result::Result<VtkSummary, String> {
    let mut lines = text.lines();
    let first = lines.next().ok_or("empty file")?;
    if !first.starts_with("# vtk DataFile Version") {
        return Err(format!("bad magic line `{first}`"));
    }
    lines.next().ok_or("missing title")?;
    if lines.next().map(str::trim) != Some("ASCII") {
        return Err("only ASCII files are supported".into());
    }
    if lines.next().map(str::trim) != Some("DATASET STRUCTURED_POINTS") {
        return Err("expected DATASET STRUCTURED_POINTS".into());
    }

    fn triple<T: std::str::FromStr>(line: Option<&str>, key: &str) -> std::result::Result<[T; 3], String> {
        let line = line.ok_or(format!("missing {key}"))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(format!("expected {key}, got `{line}`"));
        }
        let vals: Vec<T> = it
            .map(|s| s.parse().map_err(|_| format!("bad {key} value `{s}`")))
            .collect::<std::result::Result<_, _>>()?;
        vals.try_into().map_err(|_| format!("{key} needs three values"))
    }
    let dimensions: [usize; 3] = triple(lines.next(), "DIMENSIONS")?;
    let origin: [f64; 3] = triple(lines.next(), "ORIGIN")?;
    let spacing: [f64; 3] = triple(lines.next(), "SPACING")?;
    if spacing.iter().any(|s| !(*s > 0.0)) {
        return Err("spacing must be positive".into());
    }
    let cd = lines.next().ok_or("missing CELL_DATA")?;
    let cells: usize = cd
        .strip_prefix("CELL_DATA ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or(format!("bad CELL_DATA line `{cd}`"))?;
    let expected: usize = dimensions.iter().map(|d| d.saturating_sub(1).max(1)).product();
    if cells != expected {
        return Err(format!("CELL_DATA {cells} does not match dimensions ({expected} cells)"));
    }

    let mut scalars = Vec::new();
    let mut vectors = Vec::new();
    let mut rest = lines.peekable();
    while let Some(line) = rest.next() {
        let words: Vec<&str> = line.split_whitespace().collect();
        let (width, name) = match words.as_slice() {
            [] => continue,
            ["SCALARS", name, _ty, ..] => {
                let comps: usize = words.get(3).map_or(Ok(1), |s| s.parse()).map_err(|_| "bad component count")?;
                if rest.next().map(str::trim) != Some("LOOKUP_TABLE default") {
                    return Err(format!("SCALARS {name} lacks LOOKUP_TABLE"));
                }
                scalars.push(name.to_string());
                (comps, *name)
            }
            ["VECTORS", name, _ty] => {
                vectors.push(name.to_string());
                (3, *name)
            }
            _ => return Err(format!("unexpected line `{line}`")),
        };
        let mut count = 0;
        while count < cells * width {
            let l = rest.next().ok_or(format!("block {name} truncated"))?;
            for w in l.split_whitespace() {
                w.parse::<f64>().map_err(|_| format!("block {name}: `{w}` is not a number"))?;
                count += 1;
            }
        }
        if count != cells * width {
            return Err(format!("block {name} has {count} values, expected {}", cells * width));
        }
    }
    Ok(VtkSummary {
        dimensions,
        origin,
        spacing,
        cells,
        scalars,
        vectors,
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| SolverError::io(p, e)),
        _ => Ok(()),
    }
}

/// Output root: an explicit path, else `$GYRE_OUT_DIR`, else `./out`.
pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("out"),
    }
}

/// File stem fragment for a simulated time in seconds, e.g. `day00030`.
pub fn day_label(t_seconds: f64) -> String {
    let days = t_seconds / 86_400.0;
    let rounded = days.round();
    if (days - rounded).abs() < 1e-9 * days.abs().max(1.0) {
        format!("day{:05}", rounded as i64)
    } else {
        format!("day{days:09.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FieldDump {
        let g = Grid::new(2, 2, 0.5, 0.25, -1.0, 3.0).unwrap();
        FieldDump::new(g, 0.1)
            .with("a", vec![1.0, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0])
            .unwrap()
            .with("b", vec![1e300, -2.5e-310, 0.1 + 0.2, std::f64::consts::PI])
            .unwrap()
    }

    #[test]
    fn csv_shape() {
        let s = sample().to_csv_string();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 2 + 4);
        assert_eq!(lines[1], "x,y,a,b");
        assert!(lines[0].starts_with("# nx=2 ny=2"));
    }

    #[test]
    fn csv_round_trip_bitwise() {
        let d = sample();
        let back = FieldDump::parse_csv(&d.to_csv_string(), Path::new("mem")).unwrap();
        assert_eq!(back.grid, d.grid);
        assert_eq!(back.t.to_bits(), d.t.to_bits());
        assert_eq!(back.names, d.names);
        for (a, b) in back.columns.iter().flatten().zip(d.columns.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/f.csv");
        let g = Grid::over_domain(3, 2, 0.0, 0.0, 3.0, 2.0).unwrap();
        let q = Field::from_fn(g, Conserved::ZERO, |x, y| Conserved::new(1.0 + x, x * y, -y));
        let d = FieldDump::conserved(&q, 2.0);
        d.write_csv(&path).unwrap();
        let back = FieldDump::read_csv(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_conserved().unwrap().interior_values(), q.interior_values());
        assert!(sample().to_conserved().is_err());
    }

    #[test]
    fn malformed_inputs() {
        let p = Path::new("x.csv");
        assert!(FieldDump::parse_csv("", p).is_err());
        let text = sample().to_csv_string();
        let truncated: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            FieldDump::parse_csv(&truncated, p),
            Err(SolverError::MalformedDump { .. })
        ));
        let garbage = text.replacen("x,y,a,b\n", "x,y,a,b\n1,2,nope,4\n", 1);
        assert!(FieldDump::parse_csv(&garbage, p).is_err());
        let missing = FieldDump::read_csv(Path::new("/nonexistent/dir/f.csv")).unwrap_err();
        assert!(missing.to_string().contains("/nonexistent/dir/f.csv"));
    }

    #[test]
    fn push_checks_length() {
        let g = Grid::new(2, 2, 1.0, 1.0, 0.0, 0.0).unwrap();
        let mut d = FieldDump::new(g, 0.0);
        assert!(d.push("c", vec![0.0; 3]).is_err());
        assert!(d.push("x", vec![0.0; 4]).is_err());
    }

    #[test]
    fn vtk_is_well_formed() {
        let g = Grid::new(3, 2, 10.0, 20.0, 0.0, 0.0).unwrap();
        let d = FieldDump::new(g, 0.0)
            .with("u", vec![1.0; 6])
            .unwrap()
            .with("v", vec![2.0; 6])
            .unwrap();
        let s = d.to_vtk_string("test");
        let summary = validate_vtk(&s).unwrap();
        assert_eq!(summary.dimensions, [4, 3, 1]);
        assert_eq!(summary.spacing, [10.0, 20.0, 1.0]);
        assert_eq!(summary.cells, 6);
        assert_eq!(summary.scalars, vec!["u", "v"]);
        assert_eq!(summary.vectors, vec!["velocity"]);

        let broken = s.replace("CELL_DATA 6", "CELL_DATA 7");
        assert!(validate_vtk(&broken).is_err());
        let short: String = s.lines().take(s.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        assert!(validate_vtk(&short).is_err());
    }

    #[test]
    fn day_labels() {
        assert_eq!(day_label(30.0 * 86_400.0), "day00030");
        assert_eq!(day_label(0.0), "day00000");
        assert_eq!(day_label(1.5 * 86_400.0), "day00001.500");
    }

    #[test]
    fn output_root_prefers_explicit() {
        assert_eq!(output_root(Some(Path::new("/tmp/a"))), PathBuf::from("/tmp/a"));
    }
}

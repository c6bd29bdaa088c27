//! Plain-text persistence for codebooks, paths and subspaces. Floats are
//! written in shortest round-trip form, so a load after a save reproduces
//! every value bit for bit. Files are replaced atomically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path as FsPath;

use crate::error::{config, Error, Result};
use crate::paths::{Grid, NormKind, Path, Point, Subspace};
use crate::quantize::Codebook;

const CODEBOOK_MAGIC: &str = "quantquad-codebook v1";
const SUBSPACE_MAGIC: &str = "quantquad-subspace v1";

/// Writes `contents` through a temporary file in the target directory and
/// renames it into place.
pub fn write_atomic(path: &FsPath, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => FsPath::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

fn parse_floats(line_no: usize, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse { line: line_no, msg: format!("bad number '{}'", t.trim()) })
        })
        .collect()
}

fn join(v: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{x:?}").unwrap();
    }
    s
}

/// Codebook file text. `comments` are echoed as `#` lines after the header.
pub fn codebook_to_string(cb: &Codebook, comments: &[String]) -> Result<String> {
    let shape = match &cb.points()[0] {
        Point::Vector(v) => format!("dim:{}", v.len()),
        Point::Path(p) => {
            if !p.grid().is_uniform() {
                return config("only codebooks on uniform grids can be saved");
            }
            format!("grid:{}:{}", p.grid().len(), p.dim())
        }
    };
    let mut out = format!(
        "{CODEBOOK_MAGIC}, {}, {shape}, {:?}, {}, {}\n",
        cb.len(),
        cb.order_r(),
        cb.norm(),
        cb.measure_tag()
    );
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}").unwrap();
        }
    }
    for p in cb.points() {
        out.push_str(&join(p.raw()));
        out.push('\n');
    }
    if let Some(w) = cb.weights() {
        writeln!(out, "weights,{}", join(w)).unwrap();
    }
    Ok(out)
}

pub fn codebook_from_str(text: &str) -> Result<Codebook> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let fields: Vec<&str> = header.splitn(6, ',').map(str::trim).collect();
    if fields.len() != 6 {
        return parse_err(1, "header needs 6 comma-separated fields");
    }
    if fields[0] != CODEBOOK_MAGIC {
        return parse_err(1, format!("expected '{CODEBOOK_MAGIC}', found '{}'", fields[0]));
    }
    let n: usize = fields[1].parse().map_err(|_| Error::Parse { line: 1, msg: "bad point count".into() })?;
    let r: f64 = fields[3].parse().map_err(|_| Error::Parse { line: 1, msg: "bad order r".into() })?;
    let norm: NormKind = fields[4].parse().map_err(|_| Error::Parse { line: 1, msg: format!("bad norm '{}'", fields[4]) })?;
    let tag = fields[5].to_string();
    let shape: Vec<&str> = fields[2].split(':').collect();
    let (width, grid) = match shape.as_slice() {
        ["dim", d] => (d.parse::<usize>().map_err(|_| Error::Parse { line: 1, msg: "bad dim".into() })?, None),
        ["grid", g, m] => {
            let g: usize = g.parse().map_err(|_| Error::Parse { line: 1, msg: "bad grid size".into() })?;
            let m: usize = m.parse().map_err(|_| Error::Parse { line: 1, msg: "bad path dimension".into() })?;
            let grid = Grid::uniform(g).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
            (g * m, Some((grid, m)))
        }
        _ => return parse_err(1, format!("bad shape field '{}'", fields[2])),
    };
    let mut points = Vec::with_capacity(n);
    let mut weights = None;
    for (no, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if weights.is_some() {
            return parse_err(no, "content after the weights row");
        }
        if let Some(rest) = line.strip_prefix("weights,") {
            let w = parse_floats(no, rest)?;
            if w.len() != n {
                return parse_err(no, format!("{} weights for {n} points", w.len()));
            }
            weights = Some(w);
            continue;
        }
        let vals = parse_floats(no, line)?;
        if vals.len() != width {
            return parse_err(no, format!("row has {} values, expected {width}", vals.len()));
        }
        let p = match &grid {
            None => Point::Vector(vals),
            Some((g, m)) => Point::Path(Path::new(g.clone(), *m, vals).map_err(|e| Error::Parse { line: no, msg: e.to_string() })?),
        };
        points.push(p);
    }
    if points.len() != n {
        return parse_err(text.lines().count(), format!("found {} points, header says {n}", points.len()));
    }
    let mut cb = Codebook::new(points, r, norm, tag)?;
    if let Some(w) = weights {
        cb.set_weights(w)?;
    }
    Ok(cb)
}

pub fn save_codebook(cb: &Codebook, path: &FsPath, comments: &[String]) -> Result<()> {
    write_atomic(path, &codebook_to_string(cb, comments)?)
}

pub fn load_codebook(path: &FsPath) -> Result<Codebook> {
    codebook_from_str(&std::fs::read_to_string(path)?)
}

/// `t,v_1..v_m` per grid point.
pub fn path_to_csv(p: &Path) -> String {
    let m = p.dim();
    let mut out = String::from("t");
    for c in 1..=m {
        write!(out, ",v{c}").unwrap();
    }
    out.push('\n');
    for (j, t) in p.grid().points().iter().enumerate() {
        write!(out, "{t:?}").unwrap();
        for c in 0..m {
            write!(out, ",{:?}", p.value(j, c)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn path_from_csv(text: &str) -> Result<Path> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return parse_err(1, "header must be 't,v1,...'");
    }
    let m = cols.len() - 1;
    let mut ts = Vec::new();
    let mut vals = Vec::new();
    for (no, line) in lines {
        let row = parse_floats(no, line)?;
        if row.len() != m + 1 {
            return parse_err(no, format!("row has {} values, expected {}", row.len(), m + 1));
        }
        ts.push(row[0]);
        vals.extend_from_slice(&row[1..]);
    }
    let grid = Grid::new(ts)?;
    Path::new(grid, m, vals)
}

/// Header `quantquad-subspace v1, kind, dim, G`, then one basis vector per row.
pub fn subspace_to_csv(sub: &Subspace) -> String {
    let mut out = format!("{SUBSPACE_MAGIC}, {}, {}, {}\n", sub.kind(), sub.dim(), sub.grid().len());
    for b in sub.basis() {
        out.push_str(&join(b));
        out.push('\n');
    }
    out
}

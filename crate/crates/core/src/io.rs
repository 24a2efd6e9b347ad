//! File formats: node-field CSV, potential CSV, DN data and JSON reports.
//! All writes go to a temporary file in the target directory and are renamed.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dn_map::DnData;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorPairField};
use crate::potentials::MagneticPotential;

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns `node, x0[, x1], <names...>`, one row per node of `nodes`.
pub fn fields_csv(grid: &Grid, nodes: &[usize], columns: &[(&str, &ScalarField)]) -> String {
    let mut out = String::from("node");
    for d in 0..grid.dim() {
        out.push_str(&format!(",x{d}"));
    }
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for &k in nodes {
        out.push_str(&k.to_string());
        for x in grid.point(k) {
            out.push(',');
            out.push_str(&fmt(*x));
        }
        for (_, f) in columns {
            out.push(',');
            out.push_str(&fmt(f[k]));
        }
        out.push('\n');
    }
    out
}

pub fn write_fields_csv(path: &Path, grid: &Grid, nodes: &[usize], columns: &[(&str, &ScalarField)]) -> Result<()> {
    write_atomic(path, fields_csv(grid, nodes, columns).as_bytes())
}

/// Read named columns of a node-field CSV into full-grid fields (zero at absent nodes).
pub fn read_fields_csv(path: &Path, grid: &Grid, names: &[&str]) -> Result<Vec<ScalarField>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?.split(',').collect();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::Parse(format!("CSV column {n:?} missing")))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![ScalarField::zeros(grid.len()); names.len()];
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse(format!("ragged CSV row {line:?}")));
        }
        let k: usize = cells[0].parse().map_err(|_| Error::Parse(format!("bad node index {:?}", cells[0])))?;
        if k >= grid.len() {
            return Err(Error::Parse(format!("node {k} outside the grid")));
        }
        for (o, &i) in idx.iter().enumerate() {
            out[o][k] = cells[i].parse().map_err(|_| Error::Parse(format!("bad number {:?}", cells[i])))?;
        }
    }
    Ok(out)
}

/// Potential as `x_node, y_node, a0[, a1]` rows; the support is the set of listed nodes.
pub fn read_potential_csv(path: &Path, grid: &Grid) -> Result<MagneticPotential> {
    let text = fs::read_to_string(path)?;
    let n = grid.dim();
    let mut entries = Vec::new();
    let mut nodes = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 2 + n {
            return Err(Error::Parse(format!("potential row {} needs {} columns", i + 1, 2 + n)));
        }
        let x: usize = cells[0].parse().map_err(|_| Error::Parse(format!("bad node in row {}", i + 1)))?;
        let y: usize = cells[1].parse().map_err(|_| Error::Parse(format!("bad node in row {}", i + 1)))?;
        if x >= grid.len() || y >= grid.len() {
            return Err(Error::Parse(format!("potential row {} names a node outside the grid", i + 1)));
        }
        let v: Vec<f64> = cells[2..]
            .iter()
            .map(|c| c.parse().map_err(|_| Error::Parse(format!("bad number {c:?}"))))
            .collect::<Result<_>>()?;
        nodes.insert(x);
        nodes.insert(y);
        entries.push((x, y, v));
    }
    let nodes: Vec<usize> = nodes.into_iter().collect();
    let mut field = VectorPairField::square(n, nodes.clone());
    for (x, y, v) in entries {
        let r = nodes.binary_search(&x).expect("listed");
        let c = nodes.binary_search(&y).expect("listed");
        field.get_mut(r, c).copy_from_slice(&v);
    }
    MagneticPotential::from_field(grid, field)
}

pub fn potential_csv(a: &MagneticPotential) -> String {
    let n = a.dim();
    let mut out = String::from("x_node,y_node");
    for d in 0..n {
        out.push_str(&format!(",a{d}"));
    }
    out.push('\n');
    for (r, &x) in a.nodes().iter().enumerate() {
        for (c, &y) in a.nodes().iter().enumerate() {
            let v = a.at(r, c);
            if v.iter().all(|e| *e == 0.0) {
                continue;
            }
            out.push_str(&format!("{x},{y}"));
            for e in v {
                out.push(',');
                out.push_str(&fmt(*e));
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_dn_data(path: &Path, data: &DnData) -> Result<()> {
    write_atomic(path, data.to_text().as_bytes())
}

pub fn read_dn_data(path: &Path) -> Result<DnData> {
    DnData::from_text(&fs::read_to_string(path)?)
}

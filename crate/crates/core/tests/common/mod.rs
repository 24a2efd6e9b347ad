#![allow(dead_code)]

use std::path::PathBuf;

use fracmag::grid::{build_grid, BoundingBox, DomainSpec, Grid, Region, ScalarField};

/// `(-1, 1)` in `[-4, 4]` with windows on either side.
pub fn grid_1d(n: usize) -> Grid {
    let spec = DomainSpec {
        dimension: 1,
        bbox: BoundingBox::new(&[-4.0], &[4.0]),
        omega: Region::interval(-1.0, 1.0),
        w1: Region::interval(-3.0, -1.2),
        w2: Region::interval(1.2, 3.0),
    };
    build_grid(&spec, n).unwrap()
}

/// Unit disc in `[-2, 2]^2` with vertical strip windows.
pub fn grid_2d(n: usize) -> Grid {
    let spec = DomainSpec {
        dimension: 2,
        bbox: BoundingBox::cube(2, -2.0, 2.0),
        omega: Region::ball(&[0.0, 0.0], 1.0),
        w1: Region::boxed(&[-1.95, -1.9], &[-1.15, 1.9]),
        w2: Region::boxed(&[1.15, -1.9], &[1.95, 1.9]),
    };
    build_grid(&spec, n).unwrap()
}

pub fn interior_constant(g: &Grid, v: f64) -> ScalarField {
    ScalarField::constant(g.len(), v).restricted(|k| g.is_interior(k))
}

pub fn gaussian(g: &Grid, amp: f64, center: &[f64], width: f64) -> ScalarField {
    ScalarField::from_fn(g, |p| {
        let r2: f64 = p.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
        amp * (-r2 / (2.0 * width * width)).exp()
    })
}

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_fracmag"))
}

//! Computational box, domain and exterior windows, and the uniform
//! cell-centred node lattice that carries every discrete field.
//!
//! Nodes are cell centres. A node belongs to the domain iff its centre lies
//! in the (open) domain; every other node is exterior. Exterior nodes may
//! additionally be flagged as lying in the measurement windows `W1`/`W2`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of nodes per axis.
pub const MIN_NODES_PER_AXIS: usize = 16;
/// Smallest admissible number of distinct interior node positions per axis.
pub const MIN_INTERIOR_PER_AXIS: usize = 4;

/// An open axis-aligned box or an open ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Region {
    Box {
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

impl Region {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Region::Box {
            center: vec![0.5 * (lo + hi)],
            half_widths: vec![0.5 * (hi - lo)],
        }
    }

    pub fn ball(center: &[f64], radius: f64) -> Self {
        Region::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn boxed(lower: &[f64], upper: &[f64]) -> Self {
        Region::Box {
            center: lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
            half_widths: lower.iter().zip(upper).map(|(l, u)| 0.5 * (u - l)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Region::Box { center, .. } | Region::Ball { center, .. } => center,
        }
    }

    /// Open-set membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Region::Box {
                center,
                half_widths,
            } => p
                .iter()
                .zip(center)
                .zip(half_widths)
                .all(|((x, c), hw)| (x - c).abs() < *hw),
            Region::Ball { center, radius } => dist(p, center) < *radius,
        }
    }

    /// Axis-aligned bounds of the closure.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Box {
                center,
                half_widths,
            } => (
                center.iter().zip(half_widths).map(|(c, h)| c - h).collect(),
                center.iter().zip(half_widths).map(|(c, h)| c + h).collect(),
            ),
            Region::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Largest distance from the region's centre to a point of its closure.
    pub fn outer_radius(&self) -> f64 {
        match self {
            Region::Box { half_widths, .. } => half_widths.iter().map(|h| h * h).sum::<f64>().sqrt(),
            Region::Ball { radius, .. } => *radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.outer_radius()
    }

    /// Distance from `p` to the closure of the region (zero inside).
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        match self {
            Region::Box {
                center,
                half_widths,
            } => p
                .iter()
                .zip(center)
                .zip(half_widths)
                .map(|((x, c), hw)| ((x - c).abs() - hw).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt(),
            Region::Ball { center, radius } => (dist(p, center) - radius).max(0.0),
        }
    }

    /// Whether this (open) region meets the closure of `other`.
    pub fn meets_closure_of(&self, other: &Region) -> bool {
        match (self, other) {
            (Region::Ball { center, radius }, o) => o.distance_to(center) < *radius,
            (Region::Box { .. }, Region::Ball { center, radius }) => {
                self.distance_to(center) < *radius
            }
            (Region::Box { .. }, Region::Box { .. }) => {
                let (a_lo, a_hi) = self.bounds();
                let (b_lo, b_hi) = other.bounds();
                (0..a_lo.len()).all(|d| a_lo[d] < b_hi[d] && b_lo[d] < a_hi[d])
            }
        }
    }

    fn validate(&self, dim: usize, name: &str) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::SpecViolation(format!(
                "{name} has dimension {} but the domain is {dim}-dimensional",
                self.dim()
            )));
        }
        let ok = match self {
            Region::Box { half_widths, .. } => {
                half_widths.len() == dim && half_widths.iter().all(|h| h.is_finite() && *h > 0.0)
            }
            Region::Ball { radius, .. } => radius.is_finite() && *radius > 0.0,
        };
        if !ok || !self.center().iter().all(|c| c.is_finite()) {
            return Err(Error::SpecViolation(format!("{name} is degenerate")));
        }
        Ok(())
    }
}

/// Closed computational bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lower: &[f64], upper: &[f64]) -> Self {
        Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Distance from an inner point to the box boundary.
    pub fn distance_to_boundary(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| (x - l).min(u - x))
            .fold(f64::INFINITY, f64::min)
    }

    fn contains_closure_of(&self, r: &Region, strict: bool) -> bool {
        let (lo, hi) = r.bounds();
        (0..lo.len()).all(|d| {
            if strict {
                lo[d] > self.lower[d] && hi[d] < self.upper[d]
            } else {
                lo[d] >= self.lower[d] && hi[d] <= self.upper[d]
            }
        })
    }
}

/// Geometry of a run: dimension, box, domain and the two exterior windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub dimension: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub omega: Region,
    pub w1: Region,
    pub w2: Region,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        if !(1..=2).contains(&n) {
            return Err(Error::SpecViolation(format!(
                "dimension must be 1 or 2, got {n}"
            )));
        }
        if self.bbox.lower.len() != n
            || self.bbox.upper.len() != n
            || self
                .bbox
                .lower
                .iter()
                .zip(&self.bbox.upper)
                .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(Error::SpecViolation("computational box is degenerate".into()));
        }
        self.omega.validate(n, "omega")?;
        self.w1.validate(n, "W1")?;
        self.w2.validate(n, "W2")?;
        if !self.bbox.contains_closure_of(&self.omega, true) {
            return Err(Error::SpecViolation(
                "the closure of omega must lie in the interior of the box".into(),
            ));
        }
        for (w, name) in [(&self.w1, "W1"), (&self.w2, "W2")] {
            if !self.bbox.contains_closure_of(w, false) {
                return Err(Error::SpecViolation(format!("{name} leaves the box")));
            }
            if w.meets_closure_of(&self.omega) {
                return Err(Error::SpecViolation(format!(
                    "{name} intersects the closure of omega"
                )));
            }
        }
        Ok(())
    }

    /// Distance between the domain and the boundary of the box.
    pub fn omega_padding(&self) -> f64 {
        let (lo, hi) = self.omega.bounds();
        (0..self.dimension)
            .map(|d| (lo[d] - self.bbox.lower[d]).min(self.bbox.upper[d] - hi[d]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Classification of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Exterior,
}

/// Uniform cell-centred lattice over the computational box.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: DomainSpec,
    nodes_per_axis: usize,
    spacing: Vec<f64>,
    coords: Vec<f64>,
    kind: Vec<NodeKind>,
    in_w1: Vec<bool>,
    in_w2: Vec<bool>,
    interior: Vec<usize>,
    exterior: Vec<usize>,
    /// Position of a node inside `interior`, if it is interior.
    interior_slot: Vec<Option<usize>>,
}

/// Build the lattice and populate all masks.
pub fn build_grid(spec: &DomainSpec, nodes_per_axis: usize) -> Result<Grid> {
    spec.validate()?;
    if nodes_per_axis < MIN_NODES_PER_AXIS {
        return Err(Error::SpecViolation(format!(
            "nodes_per_axis must be at least {MIN_NODES_PER_AXIS}, got {nodes_per_axis}"
        )));
    }
    let n = spec.dimension;
    let spacing: Vec<f64> = (0..n)
        .map(|d| (spec.bbox.upper[d] - spec.bbox.lower[d]) / nodes_per_axis as f64)
        .collect();
    let total = nodes_per_axis.pow(n as u32);
    let mut coords = Vec::with_capacity(total * n);
    let mut kind = Vec::with_capacity(total);
    let mut in_w1 = Vec::with_capacity(total);
    let mut in_w2 = Vec::with_capacity(total);
    let mut interior = Vec::new();
    let mut exterior = Vec::new();
    let mut interior_slot = vec![None; total];
    let mut axis_hits = vec![vec![false; nodes_per_axis]; n];
    let mut p = vec![0.0; n];
    for k in 0..total {
        let mut rem = k;
        for d in 0..n {
            let i = rem % nodes_per_axis;
            rem /= nodes_per_axis;
            p[d] = spec.bbox.lower[d] + (i as f64 + 0.5) * spacing[d];
        }
        coords.extend_from_slice(&p);
        if spec.omega.contains(&p) {
            kind.push(NodeKind::Interior);
            interior_slot[k] = Some(interior.len());
            interior.push(k);
            let mut rem = k;
            for hits in axis_hits.iter_mut() {
                hits[rem % nodes_per_axis] = true;
                rem /= nodes_per_axis;
            }
        } else {
            kind.push(NodeKind::Exterior);
            exterior.push(k);
        }
        in_w1.push(spec.w1.contains(&p));
        in_w2.push(spec.w2.contains(&p));
    }
    for (d, hits) in axis_hits.iter().enumerate() {
        let count = hits.iter().filter(|h| **h).count();
        if count < MIN_INTERIOR_PER_AXIS {
            return Err(Error::SpecViolation(format!(
                "omega resolves only {count} nodes along axis {d}; refine the grid"
            )));
        }
    }
    Ok(Grid {
        spec: spec.clone(),
        nodes_per_axis,
        spacing,
        coords,
        kind,
        in_w1,
        in_w2,
        interior,
        exterior,
        interior_slot,
    })
}

impl Grid {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dimension
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest grid spacing.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Quadrature weight carried by every node (cell volume).
    pub fn weight(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.coords[k * n..(k + 1) * n]
    }

    pub fn kind(&self, k: usize) -> NodeKind {
        self.kind[k]
    }

    pub fn is_interior(&self, k: usize) -> bool {
        self.kind[k] == NodeKind::Interior
    }

    pub fn in_w1(&self, k: usize) -> bool {
        self.in_w1[k]
    }

    pub fn in_w2(&self, k: usize) -> bool {
        self.in_w2[k]
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn exterior(&self) -> &[usize] {
        &self.exterior
    }

    pub fn interior_slot(&self, k: usize) -> Option<usize> {
        self.interior_slot[k]
    }

    /// Squared distance between two nodes.
    #[inline]
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        let n = self.dim();
        let (a, b) = (&self.coords[i * n..i * n + n], &self.coords[j * n..j * n + n]);
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    /// Lattice multi-index of a node.
    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        let mut rem = k;
        (0..self.dim())
            .map(|_| {
                let i = rem % self.nodes_per_axis;
                rem /= self.nodes_per_axis;
                i
            })
            .collect()
    }

    /// Lattice neighbours of `k` along `axis` (previous, next), `None` at the box edge.
    pub fn axis_neighbours(&self, k: usize, axis: usize) -> (Option<usize>, Option<usize>) {
        let stride = self.nodes_per_axis.pow(axis as u32);
        let i = (k / stride) % self.nodes_per_axis;
        let prev = (i > 0).then(|| k - stride);
        let next = (i + 1 < self.nodes_per_axis).then(|| k + stride);
        (prev, next)
    }

    /// Distance from a node to the closure of the domain's complement,
    /// i.e. how deep an interior node sits.
    pub fn depth_in_omega(&self, k: usize) -> f64 {
        let p = self.point(k);
        match &self.spec.omega {
            Region::Box {
                center,
                half_widths,
            } => p
                .iter()
                .zip(center)
                .zip(half_widths)
                .map(|((x, c), hw)| hw - (x - c).abs())
                .fold(f64::INFINITY, f64::min),
            Region::Ball { center, radius } => radius - dist(p, center),
        }
    }

    /// A short fingerprint of the lattice, used to tag serialized data.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.nodes_per_axis.to_le_bytes());
        hasher.update(self.dim().to_le_bytes());
        for v in self.spec.bbox.lower.iter().chain(&self.spec.bbox.upper) {
            hasher.update(v.to_le_bytes());
        }
        for k in &self.kind {
            hasher.update([*k as u8]);
        }
        for (a, b) in self.in_w1.iter().zip(&self.in_w2) {
            hasher.update([*a as u8 | (*b as u8) << 1]);
        }
        hex::encode(&hasher.finalize()[..12])
    }
}

/// One real value per node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(len: usize) -> Self {
        ScalarField(vec![0.0; len])
    }

    pub fn constant(len: usize, value: f64) -> Self {
        ScalarField(vec![value; len])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        ScalarField((0..grid.len()).map(|k| f(grid.point(k))).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude over a subset of nodes.
    pub fn max_abs_on(&self, nodes: &[usize]) -> f64 {
        nodes.iter().fold(0.0, |m, &k| m.max(self.0[k].abs()))
    }

    pub fn min_on(&self, nodes: &[usize]) -> f64 {
        nodes.iter().fold(f64::INFINITY, |m, &k| m.min(self.0[k]))
    }

    pub fn scaled(&self, t: f64) -> Self {
        ScalarField(self.0.iter().map(|v| v * t).collect())
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        ScalarField(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        ScalarField(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Copy with every node outside `keep` set to zero.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> Self {
        ScalarField(
            self.0
                .iter()
                .enumerate()
                .map(|(k, v)| if keep(k) { *v } else { 0.0 })
                .collect(),
        )
    }
}

impl Deref for ScalarField {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

/// One real per ordered pair `(rows[r], cols[c])` of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairField {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub data: Vec<f64>,
}

impl PairField {
    pub fn zeros(rows: Vec<usize>, cols: Vec<usize>) -> Self {
        let data = vec![0.0; rows.len() * cols.len()];
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols.len() + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let nc = self.cols.len();
        self.data[r * nc + c] = v;
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// One vector in `R^dim` per ordered pair `(rows[r], cols[c])` of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPairField {
    pub dim: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub data: Vec<f64>,
}

impl VectorPairField {
    pub fn zeros(dim: usize, rows: Vec<usize>, cols: Vec<usize>) -> Self {
        let data = vec![0.0; rows.len() * cols.len() * dim];
        Self {
            dim,
            rows,
            cols,
            data,
        }
    }

    /// Square field over `nodes x nodes`.
    pub fn square(dim: usize, nodes: Vec<usize>) -> Self {
        Self::zeros(dim, nodes.clone(), nodes)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> &[f64] {
        let o = (r * self.cols.len() + c) * self.dim;
        &self.data[o..o + self.dim]
    }

    #[inline]
    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut [f64] {
        let o = (r * self.cols.len() + c) * self.dim;
        &mut self.data[o..o + self.dim]
    }

    pub fn same_layout(&self, other: &VectorPairField) -> bool {
        self.dim == other.dim && self.rows == other.rows && self.cols == other.cols
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &VectorPairField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exponential mollifier `amplitude * exp(1 - 1/(1 - |x-c|^2/r^2))` on the
/// open ball, zero outside.
pub fn bump(grid: &Grid, center: &[f64], radius: f64, amplitude: f64) -> Result<ScalarField> {
    if center.len() != grid.dim() || !(radius > 0.0) {
        return Err(Error::SpecViolation("bump needs a positive radius and a matching centre".into()));
    }
    let bb = &grid.spec().bbox;
    for d in 0..grid.dim() {
        if center[d] - radius < bb.lower[d] - 1e-12 || center[d] + radius > bb.upper[d] + 1e-12 {
            return Err(Error::SpecViolation(format!(
                "bump of radius {radius} at {center:?} leaves the box"
            )));
        }
    }
    Ok(ScalarField::from_fn(grid, |p| {
        amplitude * mollifier(dist(p, center) / radius)
    }))
}

/// `exp(1 - 1/(1 - t^2))` for `|t| < 1`, zero otherwise.
pub fn mollifier(t: f64) -> f64 {
    let t2 = t * t;
    if t2 < 1.0 {
        (1.0 - 1.0 / (1.0 - t2)).exp()
    } else {
        0.0
    }
}

/// Smooth step: 1 for `t <= 0`, 0 for `t >= 1`, monotone in between.
pub fn smooth_step_down(t: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let (a, b) = (f(1.0 - t), f(t));
    if a + b == 0.0 {
        if t <= 0.0 { 1.0 } else { 0.0 }
    } else {
        a / (a + b)
    }
}

/// Smooth radial cutoff with `eta = 1` on the domain plus a one-cell collar
/// and support inside the ball `B_R`.
#[derive(Debug, Clone)]
pub struct Cutoff {
    pub field: ScalarField,
    pub center: Vec<f64>,
    /// Radius of the plateau where `eta = 1`.
    pub inner_radius: f64,
    /// Radius `R` of the supporting ball.
    pub radius: f64,
}

/// Build the cutoff. `R` defaults to `min(2 * outer radius of omega,
/// distance from omega's centre to the box boundary)`.
pub fn cutoff_eta(grid: &Grid, radius: Option<f64>) -> Result<Cutoff> {
    let spec = grid.spec();
    let center = spec.omega.center().to_vec();
    let rho = spec.omega.outer_radius();
    let inner = rho + grid.h() * (grid.dim() as f64).sqrt();
    let room = spec.bbox.distance_to_boundary(&center);
    let r = radius.unwrap_or_else(|| (2.0 * rho).min(room));
    if r > room + 1e-12 || r <= inner + grid.h() {
        return Err(Error::SpecViolation(format!(
            "no admissible ball B_R: need {:.3} < R <= {:.3}, got {r:.3}",
            inner + grid.h(),
            room
        )));
    }
    let field = ScalarField::from_fn(grid, |p| {
        smooth_step_down((dist(p, &center) - inner) / (r - inner))
    });
    Ok(Cutoff {
        field,
        center,
        inner_radius: inner,
        radius: r,
    })
}

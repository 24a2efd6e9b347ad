//! Exterior bases, DN pairings and their derivatives in the data amplitude.
//!
//! A pairing is `B[u_g, v] = sum_{x in supp v} (M0 u_g)(x) v(x) w
//! + sum_omega a(x, u_g) v w`, where `M0` is the magnetic operator without
//! the zeroth-order coefficient and `v` is extended by zero.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bell::fornberg_weights;
use crate::error::{Error, Result};
use crate::forward::{NonlinearSolver, SolverOptions};
use crate::grid::{bump, Grid, Region, ScalarField};
use crate::nonlocal::{assemble_magnetic_rows, Conventions, OperatorMatrix};
use crate::potentials::{MagneticPotential, Nonlinearity};

/// Amplitude multipliers of the full stencil.
pub const STENCIL: [i32; 7] = [-3, -2, -1, 0, 1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    W1,
    W2,
}

impl Window {
    pub fn region<'a>(&self, grid: &'a Grid) -> &'a Region {
        match self {
            Window::W1 => &grid.spec().w1,
            Window::W2 => &grid.spec().w2,
        }
    }

    fn contains_node(&self, grid: &Grid, k: usize) -> bool {
        match self {
            Window::W1 => grid.in_w1(k),
            Window::W2 => grid.in_w2(k),
        }
    }
}

/// Bump functions supported in one window.
#[derive(Debug, Clone)]
pub struct ExteriorBasis {
    pub window: Window,
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub fields: Vec<ScalarField>,
}

impl ExteriorBasis {
    pub fn from_bumps(grid: &Grid, window: Window, centers: &[Vec<f64>], radii: &[f64]) -> Result<Self> {
        if centers.is_empty() || centers.len() != radii.len() {
            return Err(Error::SpecViolation("basis needs matching nonempty centres and radii".into()));
        }
        let mut fields = Vec::with_capacity(centers.len());
        for (c, &r) in centers.iter().zip(radii) {
            let f = bump(grid, c, r, 1.0)?;
            if f.max_abs() == 0.0 {
                return Err(Error::SpecViolation(format!("basis bump at {c:?} covers no node")));
            }
            if (0..grid.len()).any(|k| f[k] != 0.0 && !window.contains_node(grid, k)) {
                return Err(Error::SpecViolation(format!(
                    "basis bump at {c:?} with radius {r} leaves {window:?}"
                )));
            }
            fields.push(f);
        }
        let basis = Self {
            window,
            centers: centers.to_vec(),
            radii: radii.to_vec(),
            fields,
        };
        basis.check_independent(grid)?;
        Ok(basis)
    }

    /// `count` bumps of radius `radius` on a regular lattice inside the window.
    pub fn in_window(grid: &Grid, window: Window, count: usize, radius: f64) -> Result<Self> {
        let centers = lattice_centers(window.region(grid), count, radius)?;
        Self::from_bumps(grid, window, &centers, &vec![radius; count])
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Nodes where some basis field is nonzero.
    pub fn support(&self) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for f in &self.fields {
            for (k, v) in f.iter().enumerate() {
                if *v != 0.0 {
                    set.insert(k);
                }
            }
        }
        set.into_iter().collect()
    }

    fn check_independent(&self, grid: &Grid) -> Result<()> {
        let m = self.fields.len();
        let gram = DMatrix::from_fn(m, m, |i, j| {
            self.fields[i].iter().zip(self.fields[j].iter()).map(|(a, b)| a * b).sum::<f64>() * grid.weight()
        });
        let eig = gram.clone().symmetric_eigen();
        let (lo, hi) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        if !(lo > 1e-12 * hi) {
            return Err(Error::SpecViolation(format!(
                "basis on {:?} is numerically dependent (eigenvalue ratio {:.2e})",
                self.window,
                lo / hi
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        for f in &mut out.fields {
            *f = f.scaled(t);
        }
        out
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.fields {
            for v in f.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..12])
    }
}

fn lattice_centers(region: &Region, count: usize, radius: f64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::SpecViolation("basis count must be positive".into()));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = match region {
        Region::Box { .. } => {
            let (l, h) = region.bounds();
            (l.iter().map(|v| v + radius).collect(), h.iter().map(|v| v - radius).collect())
        }
        Region::Ball { center, radius: rr } => {
            let half = (rr - radius) / 2f64.sqrt();
            (center.iter().map(|c| c - half).collect(), center.iter().map(|c| c + half).collect())
        }
    };
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return Err(Error::SpecViolation(format!("bumps of radius {radius} do not fit in the window")));
    }
    let lin = |l: f64, h: f64, m: usize, i: usize| if m == 1 { 0.5 * (l + h) } else { l + (h - l) * i as f64 / (m - 1) as f64 };
    Ok(match lo.len() {
        1 => (0..count).map(|i| vec![lin(lo[0], hi[0], count, i)]).collect(),
        _ => {
            let (wx, wy) = ((hi[0] - lo[0]).max(1e-12), (hi[1] - lo[1]).max(1e-12));
            let mx = ((count as f64 * wx / wy).sqrt().round() as usize).clamp(1, count);
            let my = count.div_ceil(mx);
            let mut out = Vec::with_capacity(count);
            'outer: for i in 0..mx {
                for j in 0..my {
                    if out.len() == count {
                        break 'outer;
                    }
                    out.push(vec![lin(lo[0], hi[0], mx, i), lin(lo[1], hi[1], my, j)]);
                }
            }
            out
        }
    })
}

/// Finite-difference scheme in the data amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FdScheme {
    /// All seven points `{0, +-1, +-2, +-3} eps_s`.
    #[default]
    Richardson7,
    /// Five points `{0, +-1, +-2} eps_s`.
    Central5,
}

impl FdScheme {
    pub fn multipliers(&self) -> &'static [i32] {
        match self {
            FdScheme::Richardson7 => &STENCIL,
            FdScheme::Central5 => &STENCIL[1..6],
        }
    }

    /// Weights for the k-th derivative at unit step, aligned with `multipliers`.
    pub fn weights(&self, k: usize) -> Result<Vec<f64>> {
        let pts: Vec<f64> = self.multipliers().iter().map(|m| *m as f64).collect();
        if k + 1 > pts.len() {
            return Err(Error::DomainError(format!("{self:?} cannot resolve derivative order {k}")));
        }
        Ok(fornberg_weights(0.0, &pts, k).swap_remove(k))
    }
}

/// Pairing operator: `M0` rows for the domain and for window nodes.
#[derive(Debug, Clone)]
pub struct PairingOperator {
    ops: OperatorMatrix,
    row_of: Vec<Option<usize>>,
    weight: f64,
}

impl PairingOperator {
    pub fn new(grid: &Grid, s: f64, a: &MagneticPotential, extra_rows: &[usize]) -> Result<Self> {
        let mut set: BTreeSet<usize> = grid.interior().iter().copied().collect();
        set.extend(extra_rows.iter().copied());
        let rows: Vec<usize> = set.into_iter().collect();
        let ops = assemble_magnetic_rows(grid, s, a, None, &rows, Conventions::default())?;
        let mut row_of = vec![None; grid.len()];
        for (r, &k) in rows.iter().enumerate() {
            row_of[k] = Some(r);
        }
        Ok(Self {
            ops,
            row_of,
            weight: grid.weight(),
        })
    }

    /// `sum_{x in supp v} (M0 u)(x) v(x) w`.
    pub fn pair(&self, u: &ScalarField, v: &ScalarField) -> Result<f64> {
        let mut acc = 0.0;
        for (k, &vk) in v.iter().enumerate() {
            if vk == 0.0 {
                continue;
            }
            let r = self.row_of[k].ok_or_else(|| {
                Error::SpecViolation(format!("test function is nonzero at node {k} outside the pairing rows"))
            })?;
            let row = self.ops.matrix.row(r);
            let mu: f64 = row.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            acc += mu * vk;
        }
        Ok(acc * self.weight)
    }

    /// Largest absolute row sum restricted to domain columns over the given rows.
    fn interior_row_norm(&self, grid: &Grid, rows: &[usize]) -> f64 {
        rows.iter()
            .filter_map(|&k| self.row_of[k])
            .map(|r| grid.interior().iter().map(|&c| self.ops.matrix[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Solver plus pairing rows for one `(A, a)`.
#[derive(Debug, Clone)]
pub struct DnContext {
    pub solver: NonlinearSolver,
    pub pairing: PairingOperator,
    pub potential: String,
}

impl DnContext {
    pub fn new(
        grid: &Grid,
        s: f64,
        a: &MagneticPotential,
        nl: &Nonlinearity,
        test_nodes: &[usize],
        opts: &SolverOptions,
    ) -> Result<Self> {
        Ok(Self {
            solver: NonlinearSolver::new(grid, s, a, nl, opts)?,
            pairing: PairingOperator::new(grid, s, a, test_nodes)?,
            potential: a.fingerprint(),
        })
    }

    /// `B[u, v]` for a solution `u` (the nonlinearity term uses `u` on the domain).
    pub fn pair_solution(&self, u: &ScalarField, v: &ScalarField) -> Result<f64> {
        let grid = self.solver.linear().grid();
        let mut acc = self.pairing.pair(u, v)?;
        if grid.interior().iter().any(|&k| v[k] != 0.0) {
            let au = self.solver.nonlinearity().eval_a(u)?;
            acc += grid.interior().iter().map(|&k| au[k] * v[k]).sum::<f64>() * grid.weight();
        }
        Ok(acc)
    }

    /// Solve for data `g` and pair with `v`.
    pub fn pairing_for(&self, g: &ScalarField, v: &ScalarField) -> Result<f64> {
        let sol = self.solver.solve(g)?;
        self.pair_solution(&sol.u, v)
    }
}

/// One DN pairing `B[u_g, v]` with `v` extended by zero.
pub fn dn_pairing(
    a: &MagneticPotential,
    nl: &Nonlinearity,
    g: &ScalarField,
    v: &ScalarField,
    grid: &Grid,
    s: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    let nodes: Vec<usize> = (0..grid.len()).filter(|&k| v[k] != 0.0).collect();
    DnContext::new(grid, s, a, nl, &nodes, opts)?.pairing_for(g, v)
}

/// Identification of the inputs a DN dataset was produced from. Holds
/// hashes only, never coefficient values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnMeta {
    pub dimension: usize,
    pub nodes_per_axis: usize,
    pub s: f64,
    pub grid: String,
    pub potential: String,
    pub nonlinearity: String,
    pub basis_w1: String,
    pub basis_w2: String,
}

/// DN pairings and their amplitude derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DnData {
    pub meta: DnMeta,
    pub order: usize,
    pub scheme: FdScheme,
    pub eps_base: f64,
    /// `raw[e]` is the `n1 x n2` pairing matrix at amplitude `STENCIL[e] * eps_base`.
    pub raw: Vec<DMatrix<f64>>,
    /// Finite-difference derivatives, index `k - 1`.
    pub measured: Vec<DMatrix<f64>>,
    /// Cascade pairings, index `k - 1`.
    pub direct: Vec<DMatrix<f64>>,
    /// `|D_7 - D_5|` per entry, index `k - 1`.
    pub estimate: Vec<DMatrix<f64>>,
    /// Finite-difference noise floor per order, index `k - 1`.
    pub noise_floor: Vec<f64>,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

impl DnData {
    pub fn n1(&self) -> usize {
        self.raw[0].nrows()
    }

    pub fn n2(&self) -> usize {
        self.raw[0].ncols()
    }

    /// Derivative matrix of order `k` from the requested mode.
    pub fn derivative(&self, k: usize, direct: bool) -> &DMatrix<f64> {
        if direct {
            &self.direct[k - 1]
        } else {
            &self.measured[k - 1]
        }
    }

    /// `max |measured - direct| / max |direct|` per order.
    pub fn dual_mode_gaps(&self) -> Vec<f64> {
        self.measured
            .iter()
            .zip(&self.direct)
            .map(|(m, d)| max_abs(&(m - d)) / max_abs(d).max(f64::MIN_POSITIVE))
            .collect()
    }

    /// Absolute `max |measured - direct|` per order.
    pub fn dual_mode_abs_gaps(&self) -> Vec<f64> {
        self.measured.iter().zip(&self.direct).map(|(m, d)| max_abs(&(m - d))).collect()
    }

    /// Derivatives recomputed from the raw pairings with another scheme.
    pub fn rederive(&self, scheme: FdScheme) -> Result<Vec<DMatrix<f64>>> {
        (1..=self.order)
            .map(|k| fd_derivative(&self.raw, scheme, k, self.eps_base))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("fracmag-dn 1\n");
        let header = serde_json::json!({
            "meta": self.meta,
            "order": self.order,
            "scheme": self.scheme,
            "eps_base": self.eps_base,
            "stencil": STENCIL,
            "noise_floor": self.noise_floor,
        });
        out.push_str(&format!("meta {header}\n"));
        let mut block = |name: String, m: &DMatrix<f64>| {
            out.push_str(&format!("@block {name} {} {}\n", m.nrows(), m.ncols()));
            for r in 0..m.nrows() {
                let line: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
        };
        for (e, m) in self.raw.iter().enumerate() {
            block(format!("raw_{}", STENCIL[e]), m);
        }
        for k in 0..self.order {
            block(format!("measured_{}", k + 1), &self.measured[k]);
            block(format!("direct_{}", k + 1), &self.direct[k]);
            block(format!("estimate_{}", k + 1), &self.estimate[k]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |m: &str| Error::Parse(format!("DN data: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("fracmag-dn 1") {
            return Err(perr("missing or unsupported header"));
        }
        let meta_line = lines.next().and_then(|l| l.strip_prefix("meta ")).ok_or_else(|| perr("missing meta line"))?;
        let header: serde_json::Value = serde_json::from_str(meta_line).map_err(|e| perr(&e.to_string()))?;
        let meta: DnMeta = serde_json::from_value(header["meta"].clone()).map_err(|e| perr(&e.to_string()))?;
        let order = header["order"].as_u64().ok_or_else(|| perr("order"))? as usize;
        let scheme: FdScheme = serde_json::from_value(header["scheme"].clone()).map_err(|e| perr(&e.to_string()))?;
        let eps_base = header["eps_base"].as_f64().ok_or_else(|| perr("eps_base"))?;
        let noise_floor: Vec<f64> =
            serde_json::from_value(header["noise_floor"].clone()).map_err(|e| perr(&e.to_string()))?;
        let mut blocks: Vec<(String, DMatrix<f64>)> = Vec::new();
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "@block" {
                return Err(perr(&format!("unexpected line {line:?}")));
            }
            let (nr, nc): (usize, usize) = (
                parts[2].parse().map_err(|_| perr("rows"))?,
                parts[3].parse().map_err(|_| perr("cols"))?,
            );
            let mut m = DMatrix::zeros(nr, nc);
            for r in 0..nr {
                let row = lines.next().ok_or_else(|| perr("truncated block"))?;
                let vals: Vec<&str> = row.split(',').collect();
                if vals.len() != nc {
                    return Err(perr("ragged block"));
                }
                for (c, v) in vals.iter().enumerate() {
                    m[(r, c)] = v.trim().parse().map_err(|_| perr(&format!("bad number {v:?}")))?;
                }
            }
            blocks.push((parts[1].to_string(), m));
        }
        let mut take = |name: String| {
            blocks
                .iter()
                .position(|(n, _)| *n == name)
                .map(|i| blocks.swap_remove(i).1)
                .ok_or_else(|| perr(&format!("missing block {name}")))
        };
        let raw = STENCIL.iter().map(|m| take(format!("raw_{m}"))).collect::<Result<Vec<_>>>()?;
        let mut measured = Vec::new();
        let mut direct = Vec::new();
        let mut estimate = Vec::new();
        for k in 1..=order {
            measured.push(take(format!("measured_{k}"))?);
            direct.push(take(format!("direct_{k}"))?);
            estimate.push(take(format!("estimate_{k}"))?);
        }
        Ok(Self {
            meta,
            order,
            scheme,
            eps_base,
            raw,
            measured,
            direct,
            estimate,
            noise_floor,
        })
    }
}

fn fd_derivative(raw: &[DMatrix<f64>], scheme: FdScheme, k: usize, eps: f64) -> Result<DMatrix<f64>> {
    let w = scheme.weights(k)?;
    let offset = match scheme {
        FdScheme::Richardson7 => 0,
        FdScheme::Central5 => 1,
    };
    let mut d = DMatrix::zeros(raw[0].nrows(), raw[0].ncols());
    for (e, we) in w.iter().enumerate() {
        d += &raw[e + offset] * *we;
    }
    Ok(d / eps.powi(k as i32))
}

/// Derivatives of the DN pairings up to order `order`, by finite differences
/// of nonlinear pairings and by the cascade.
#[allow(clippy::too_many_arguments)]
pub fn dn_derivatives(
    a: &MagneticPotential,
    nl: &Nonlinearity,
    basis1: &ExteriorBasis,
    basis2: &ExteriorBasis,
    grid: &Grid,
    s: f64,
    order: usize,
    scheme: FdScheme,
    opts: &SolverOptions,
) -> Result<DnData> {
    if order == 0 || order > nl.order() {
        return Err(Error::DomainError(format!(
            "derivative order {order} must lie in 1..={}",
            nl.order()
        )));
    }
    if order > 4 {
        return Err(Error::DomainError("derivative orders above 4 are not supported".into()));
    }
    let ctx = DnContext::new(grid, s, a, nl, &basis2.support(), opts)?;
    dn_derivatives_with(&ctx, basis1, basis2, order, scheme, opts.eps0 / 8.0)
}

/// As [`dn_derivatives`] with a prepared context and explicit base step.
pub fn dn_derivatives_with(
    ctx: &DnContext,
    basis1: &ExteriorBasis,
    basis2: &ExteriorBasis,
    order: usize,
    scheme: FdScheme,
    eps_base: f64,
) -> Result<DnData> {
    let grid = ctx.solver.linear().grid();
    let (n1, n2) = (basis1.len(), basis2.len());
    let jobs: Vec<(usize, usize)> = (0..STENCIL.len()).flat_map(|e| (0..n1).map(move |i| (e, i))).collect();
    let results: Vec<Result<(Vec<f64>, f64)>> = jobs
        .par_iter()
        .map(|&(e, i)| {
            let amp = STENCIL[e] as f64 * eps_base;
            if STENCIL[e] == 0 {
                return Ok((vec![0.0; n2], 0.0));
            }
            let sol = ctx.solver.solve(&basis1.fields[i].scaled(amp))?;
            let row = basis2
                .fields
                .iter()
                .map(|h| ctx.pairing.pair(&sol.u, h))
                .collect::<Result<Vec<f64>>>()?;
            Ok((row, sol.u.max_abs()))
        })
        .collect();
    let mut raw = vec![DMatrix::zeros(n1, n2); STENCIL.len()];
    let mut umax = 0.0f64;
    for (&(e, i), r) in jobs.iter().zip(results) {
        let (row, um) = r?;
        umax = umax.max(um);
        for (j, v) in row.into_iter().enumerate() {
            raw[e][(i, j)] = v;
        }
    }
    let mut measured = Vec::new();
    let mut direct = vec![DMatrix::zeros(n1, n2); order];
    let mut estimate = Vec::new();
    let mut noise_floor = Vec::new();
    for i in 0..n1 {
        let us = ctx.solver.cascade(&basis1.fields[i], order)?;
        for (k, u) in us.iter().enumerate() {
            for (j, h) in basis2.fields.iter().enumerate() {
                direct[k][(i, j)] = ctx.pairing.pair(u, h)?;
            }
        }
    }
    // pairing noise from the Picard tolerance and rounding
    let opts = ctx.solver.options();
    let h1 = basis2
        .fields
        .iter()
        .map(|h| h.iter().map(|v| v.abs()).sum::<f64>() * grid.weight())
        .fold(0.0, f64::max);
    let rows = basis2.support();
    let praw = raw.iter().map(max_abs).fold(0.0, f64::max);
    let sigma = (opts.tol_picard + 64.0 * f64::EPSILON * umax) * ctx.pairing.interior_row_norm(grid, &rows) * h1
        + 64.0 * f64::EPSILON * praw;
    for k in 1..=order {
        let d7 = fd_derivative(&raw, FdScheme::Richardson7, k, eps_base)?;
        let d5 = fd_derivative(&raw, FdScheme::Central5, k, eps_base)?;
        let wsum: f64 = scheme.weights(k)?.iter().map(|w| w.abs()).sum();
        noise_floor.push(wsum * sigma / eps_base.powi(k as i32));
        estimate.push((&d7 - &d5).abs());
        measured.push(match scheme {
            FdScheme::Richardson7 => d7,
            FdScheme::Central5 => d5,
        });
    }
    for k in 1..=order {
        let est = max_abs(&estimate[k - 1]);
        let value = max_abs(&direct[k - 1]);
        if est > 0.1 * value + 10.0 * noise_floor[k - 1] {
            return Err(Error::StencilTooCoarse {
                order: k,
                estimate: est,
                value,
            });
        }
    }
    let meta = DnMeta {
        dimension: grid.dim(),
        nodes_per_axis: grid.nodes_per_axis(),
        s: ctx.solver.linear().s(),
        grid: grid.fingerprint(),
        potential: ctx.potential.clone(),
        nonlinearity: ctx.solver.nonlinearity().fingerprint(),
        basis_w1: basis1.fingerprint(),
        basis_w2: basis2.fingerprint(),
    };
    Ok(DnData {
        meta,
        order,
        scheme,
        eps_base,
        raw,
        measured,
        direct,
        estimate,
        noise_floor,
    })
}

fn check_compatible(d1: &DnData, d2: &DnData) -> Result<()> {
    if d1.meta.grid != d2.meta.grid
        || d1.meta.basis_w1 != d2.meta.basis_w1
        || d1.meta.basis_w2 != d2.meta.basis_w2
        || d1.eps_base != d2.eps_base
        || d1.scheme != d2.scheme
        || d1.order != d2.order
    {
        return Err(Error::BasisMismatch(
            "DN datasets use different grids, bases, stencils or orders".into(),
        ));
    }
    Ok(())
}

/// Relative gaps `max |D1 - D2| / max(|D1|, |D2|)` per order (measured mode).
pub fn dn_restriction_gaps(d1: &DnData, d2: &DnData) -> Result<Vec<f64>> {
    check_compatible(d1, d2)?;
    Ok(d1
        .measured
        .iter()
        .zip(&d2.measured)
        .map(|(a, b)| max_abs(&(a - b)) / max_abs(a).max(max_abs(b)).max(f64::MIN_POSITIVE))
        .collect())
}

pub fn dn_restriction_equal(d1: &DnData, d2: &DnData, tol: f64) -> Result<bool> {
    Ok(dn_restriction_gaps(d1, d2)?.iter().all(|g| *g <= tol))
}

/// First order whose relative gap exceeds `tol`.
pub fn first_differing_order(d1: &DnData, d2: &DnData, tol: f64) -> Result<Option<usize>> {
    Ok(dn_restriction_gaps(d1, d2)?.iter().position(|g| *g > tol).map(|i| i + 1))
}

/// Linear DN matrix `B[u_{f_i}, h_j]` for `a(x, z) = q z`.
pub fn linear_dn_matrix(
    a: &MagneticPotential,
    q: &ScalarField,
    basis1: &ExteriorBasis,
    basis2: &ExteriorBasis,
    grid: &Grid,
    s: f64,
) -> Result<DMatrix<f64>> {
    let solver = crate::forward::LinearSolver::new(grid, s, a, q)?;
    let pairing = PairingOperator::new(grid, s, a, &basis2.support())?;
    let zero = ScalarField::zeros(grid.len());
    let mut d = DMatrix::zeros(basis1.len(), basis2.len());
    for (i, f) in basis1.fields.iter().enumerate() {
        let u = solver.solve(&zero, f)?.u;
        for (j, h) in basis2.fields.iter().enumerate() {
            d[(i, j)] = pairing.pair(&u, h)?;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::factorial;
    use crate::grid::{build_grid, BoundingBox, DomainSpec};

    fn grid_1d() -> Grid {
        let spec = DomainSpec {
            dimension: 1,
            bbox: BoundingBox::new(&[-4.0], &[4.0]),
            omega: Region::interval(-1.0, 1.0),
            w1: Region::interval(-3.0, -1.2),
            w2: Region::interval(1.2, 3.0),
        };
        build_grid(&spec, 96).unwrap()
    }

    #[test]
    fn lattice_placement_stays_in_window() {
        let g = grid_1d();
        let b = ExteriorBasis::in_window(&g, Window::W2, 6, 0.3).unwrap();
        assert_eq!(b.len(), 6);
        for c in &b.centers {
            assert!(c[0] - 0.3 >= 1.2 - 1e-12 && c[0] + 0.3 <= 3.0 + 1e-12);
        }
        assert!(ExteriorBasis::in_window(&g, Window::W2, 3, 1.0).is_err());
    }

    #[test]
    fn fornberg_stencils_resolve_orders() {
        for k in 1..=4 {
            let w = FdScheme::Richardson7.weights(k).unwrap();
            // exact on z^k
            let v: f64 = w.iter().zip(STENCIL).map(|(w, m)| w * (m as f64).powi(k as i32)).sum();
            assert!((v - factorial(k)).abs() < 1e-10);
        }
        assert!(FdScheme::Central5.weights(5).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = DMatrix::from_fn(2, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) * std::f64::consts::PI);
        let d = DnData {
            meta: DnMeta {
                dimension: 1,
                nodes_per_axis: 96,
                s: 0.5,
                grid: "g".into(),
                potential: "p".into(),
                nonlinearity: "n".into(),
                basis_w1: "b1".into(),
                basis_w2: "b2".into(),
            },
            order: 1,
            scheme: FdScheme::Richardson7,
            eps_base: 0.05,
            raw: vec![m.clone(); 7],
            measured: vec![m.scale(1.0 / 3.0)],
            direct: vec![m.scale(-2.0e-17)],
            estimate: vec![m.scale(1e-300)],
            noise_floor: vec![1.0 / 7.0],
        };
        let back = DnData::from_text(&d.to_text()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn measured_and_direct_modes_agree() {
        let g = grid_1d();
        let a = MagneticPotential::zero(&g);
        let c = |v: f64| ScalarField::constant(g.len(), v);
        let nl = Nonlinearity::new(&g, vec![c(1.0), c(1.0), c(0.5)], 2.0).unwrap();
        let b1 = ExteriorBasis::in_window(&g, Window::W1, 3, 0.25).unwrap();
        let b2 = ExteriorBasis::in_window(&g, Window::W2, 3, 0.25).unwrap();
        let d = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &SolverOptions::default()).unwrap();
        let gaps = d.dual_mode_gaps();
        println!("gaps {gaps:?} floor {:?}", d.noise_floor);
        assert!(gaps.iter().all(|x| *x < 1e-4), "{gaps:?}");
    }
}

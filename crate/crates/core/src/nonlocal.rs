//! Discrete fractional gradient, divergence, fractional Laplacian and the
//! magnetic fractional Laplacian on the node lattice.
//!
//! Rows of the fractional Laplacian are the punctured pair sum
//! `C w sum_{j != i} (u_i - u_j) / r^{n+2s}`, plus
//!
//! * a far-field weight `t(x_i) u_i` for the part of `R^n` outside the box
//!   (data vanish there), and
//! * a singular-cell correction `sum_d a_d (-D_dd u)(x_i)` from the
//!   second-order Taylor model of `u` on the cell containing `x_i`.
//!
//! Both extras can be switched off; the bare pair sum is exactly
//! `div^s grad^s` for the discrete gradient and divergence below.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorPairField};
use crate::potentials::{decompose, mass_term, MagneticPotential};
use crate::quadrature::{integrate, integrate_breaks};

/// Normalizing constant of the fractional Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FracConstant {
    pub n: usize,
    pub s: f64,
    pub value: f64,
}

/// `C_{n,s} = 4^s Gamma(n/2 + s) / (pi^{n/2} |Gamma(-s)|)`.
pub fn frac_constant(n: usize, s: f64) -> Result<FracConstant> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::DomainError(format!("s must lie in (0, 1), got {s}")));
    }
    if n == 0 {
        return Err(Error::DomainError("dimension must be positive".into()));
    }
    if !(0.1..=0.9).contains(&s) {
        warn!("s = {s} is outside [0.1, 0.9]; quadrature accuracy degrades");
    }
    let nf = n as f64;
    // |Gamma(-s)| = Gamma(1 - s) / s on (0, 1)
    let abs_gamma_neg = gamma(1.0 - s) / s;
    let value = 4f64.powf(s) * gamma(nf / 2.0 + s) / (std::f64::consts::PI.powf(nf / 2.0) * abs_gamma_neg);
    Ok(FracConstant { n, s, value })
}

/// Which correction terms enter an assembled row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Conventions {
    pub singular_correction: bool,
    pub tail: bool,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            singular_correction: true,
            tail: true,
        }
    }
}

impl Conventions {
    /// The bare punctured pair sum.
    pub fn pair_sum_only() -> Self {
        Self {
            singular_correction: false,
            tail: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    FractionalLaplacian,
    Magnetic,
    MagneticWithPotential,
}

/// Dense operator rows over all nodes.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    /// Node index of each row.
    pub rows: Vec<usize>,
    /// `rows.len() x grid.len()`.
    pub matrix: DMatrix<f64>,
    /// Far-field weight per row (zero when the tail is off).
    pub tail: Vec<f64>,
    pub constant: FracConstant,
    pub s: f64,
    pub kind: OperatorKind,
    pub conventions: Conventions,
}

impl OperatorMatrix {
    /// Row values `(M u)(rows[r])`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVectorView::from_slice(u, u.len());
        (&self.matrix * v).iter().copied().collect()
    }

    /// `M u` scattered into a node field (zero off the rows).
    pub fn apply_field(&self, u: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(u.len());
        for (r, v) in self.rows.iter().zip(self.apply(u)) {
            out[*r] = v;
        }
        out
    }

    /// Sub-block on the given columns.
    pub fn columns(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), cols.len(), |r, c| self.matrix[(r, cols[c])])
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Far-field weight `C int_{R^n \ box} |x - y|^{-n-2s} dy` at `p`.
pub fn tail_weight(grid: &Grid, c: &FracConstant, p: &[f64]) -> f64 {
    let bb = &grid.spec().bbox;
    let s = c.s;
    match grid.dim() {
        1 => c.value * ((p[0] - bb.lower[0]).powf(-2.0 * s) + (bb.upper[0] - p[0]).powf(-2.0 * s)) / (2.0 * s),
        _ => {
            let (lo, hi) = (&bb.lower, &bb.upper);
            let rho = |t: f64| {
                let (dx, dy) = (t.cos(), t.sin());
                let mut r = f64::INFINITY;
                if dx > 0.0 {
                    r = r.min((hi[0] - p[0]) / dx);
                } else if dx < 0.0 {
                    r = r.min((lo[0] - p[0]) / dx);
                }
                if dy > 0.0 {
                    r = r.min((hi[1] - p[1]) / dy);
                } else if dy < 0.0 {
                    r = r.min((lo[1] - p[1]) / dy);
                }
                r
            };
            let tau = std::f64::consts::TAU;
            let mut breaks = vec![0.0, tau];
            for cx in [lo[0], hi[0]] {
                for cy in [lo[1], hi[1]] {
                    breaks.push((cy - p[1]).atan2(cx - p[0]).rem_euclid(tau));
                }
            }
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let q = integrate_breaks(&|t| rho(t).powf(-2.0 * s) / (2.0 * s), &breaks, 1e-13, 1e-12);
            c.value * q.value
        }
    }
}

/// Per-axis singular-cell coefficients `a_d = (C/2) int_cell z_d^2 |z|^{-n-2s} dz`.
pub fn singular_coefficients(grid: &Grid, c: &FracConstant) -> Vec<f64> {
    let s = c.s;
    let h = grid.spacing();
    let e = 2.0 - 2.0 * s;
    match grid.dim() {
        1 => vec![0.5 * c.value * 2.0 * (0.5 * h[0]).powf(e) / e],
        _ => {
            let (hx, hy) = (0.5 * h[0], 0.5 * h[1]);
            let tc = (hy / hx).atan();
            let rho = |t: f64| (hx / t.cos().abs()).min(hy / t.sin().abs());
            let half_pi = std::f64::consts::FRAC_PI_2;
            let mx = 4.0 * integrate_breaks(&|t| t.cos().powi(2) * rho(t).powf(e) / e, &[0.0, tc, half_pi], 1e-15, 1e-13).value;
            let my = 4.0 * integrate_breaks(&|t| t.sin().powi(2) * rho(t).powf(e) / e, &[0.0, tc, half_pi], 1e-15, 1e-13).value;
            vec![0.5 * c.value * mx, 0.5 * c.value * my]
        }
    }
}

fn frac_row(
    grid: &Grid,
    c: &FracConstant,
    i: usize,
    conv: Conventions,
    sing: &[f64],
    row: &mut [f64],
) -> f64 {
    let n = grid.dim() as f64;
    let expo = -(n + 2.0 * c.s) / 2.0;
    let cw = c.value * grid.weight();
    let mut diag = 0.0;
    for (j, e) in row.iter_mut().enumerate() {
        if j == i {
            *e = 0.0;
            continue;
        }
        let k = cw * grid.dist2(i, j).powf(expo);
        *e = -k;
        diag += k;
    }
    let mut t = 0.0;
    if conv.tail {
        t = tail_weight(grid, c, grid.point(i));
        diag += t;
    }
    if conv.singular_correction {
        for (axis, a) in sing.iter().enumerate() {
            let hd = grid.spacing()[axis];
            let coef = a / (hd * hd);
            diag += 2.0 * coef;
            let (prev, next) = grid.axis_neighbours(i, axis);
            for nb in [prev, next].into_iter().flatten() {
                row[nb] -= coef;
            }
        }
    }
    row[i] += diag;
    t
}

/// Fractional Laplacian rows for arbitrary nodes.
pub fn assemble_frac_rows(grid: &Grid, s: f64, rows: &[usize], conv: Conventions) -> Result<OperatorMatrix> {
    let c = frac_constant(grid.dim(), s)?;
    let sing = singular_coefficients(grid, &c);
    let nn = grid.len();
    let mut data = vec![0.0; rows.len() * nn];
    let tails: Vec<f64> = data
        .par_chunks_mut(nn)
        .zip(rows.par_iter())
        .map(|(row, &i)| frac_row(grid, &c, i, conv, &sing, row))
        .collect();
    let matrix = DMatrix::from_row_slice(rows.len(), nn, &data);
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow("fractional Laplacian assembly".into()));
    }
    Ok(OperatorMatrix {
        rows: rows.to_vec(),
        matrix,
        tail: tails,
        constant: c,
        s,
        kind: OperatorKind::FractionalLaplacian,
        conventions: conv,
    })
}

/// Fractional Laplacian rows on the domain nodes with all corrections.
pub fn assemble_frac_laplacian(grid: &Grid, s: f64) -> Result<OperatorMatrix> {
    assemble_frac_rows(grid, s, grid.interior(), Conventions::default())
}

/// `sqrt(C/2) (y - x) / |y - x|^{n/2+s+1}` written into `out`.
#[inline]
fn kernel_vector(grid: &Grid, c: &FracConstant, x: usize, y: usize, out: &mut [f64]) {
    let n = grid.dim() as f64;
    let r2 = grid.dist2(x, y);
    let scale = (0.5 * c.value).sqrt() * r2.powf(-(n / 2.0 + c.s + 1.0) / 2.0);
    let (px, py) = (grid.point(x), grid.point(y));
    for d in 0..out.len() {
        out[d] = scale * (py[d] - px[d]);
    }
}

/// `grad^s u(x, y) = sqrt(C/2) (u(x) - u(y)) (y - x) / |y - x|^{n/2+s+1}` on all pairs.
pub fn frac_gradient(grid: &Grid, s: f64, u: &ScalarField) -> Result<VectorPairField> {
    let c = frac_constant(grid.dim(), s)?;
    let nn = grid.len();
    let dim = grid.dim();
    let all: Vec<usize> = (0..nn).collect();
    let mut out = VectorPairField::zeros(dim, all.clone(), all);
    out.data.par_chunks_mut(nn * dim).enumerate().for_each(|(x, chunk)| {
        let mut k = vec![0.0; dim];
        for y in 0..nn {
            if y == x {
                continue;
            }
            kernel_vector(grid, &c, x, y, &mut k);
            let du = u[x] - u[y];
            for d in 0..dim {
                chunk[y * dim + d] = du * k[d];
            }
        }
    });
    Ok(out)
}

/// Adjoint of [`frac_gradient`] for the weighted inner products:
/// `(div P)(x) = w sum_y (P(x, y) + P(y, x)) . K(x, y)`.
pub fn frac_divergence(grid: &Grid, s: f64, p: &VectorPairField) -> Result<ScalarField> {
    let c = frac_constant(grid.dim(), s)?;
    if p.dim != grid.dim() {
        return Err(Error::SpecViolation("pair field dimension mismatch".into()));
    }
    let w = grid.weight();
    let mut out = ScalarField::zeros(grid.len());
    let mut k = vec![0.0; p.dim];
    for (r, &x) in p.rows.iter().enumerate() {
        for (cc, &y) in p.cols.iter().enumerate() {
            if x == y {
                continue;
            }
            let v = p.get(r, cc);
            kernel_vector(grid, &c, x, y, &mut k);
            let dot: f64 = v.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() * w;
            out[x] += dot;
            out[y] -= dot;
        }
    }
    if !out.is_finite() {
        return Err(Error::NumericalOverflow("fractional divergence".into()));
    }
    Ok(out)
}

/// Magnetic operator `(-Delta)^s + drift + m_A (+ q)` on the domain rows.
pub fn assemble_magnetic(
    grid: &Grid,
    s: f64,
    a: &MagneticPotential,
    q: Option<&ScalarField>,
) -> Result<OperatorMatrix> {
    assemble_magnetic_rows(grid, s, a, q, grid.interior(), Conventions::default())
}

/// Magnetic operator rows for arbitrary nodes. Rows off the domain reduce
/// to the fractional Laplacian because `A` is supported in `omega x omega`.
pub fn assemble_magnetic_rows(
    grid: &Grid,
    s: f64,
    a: &MagneticPotential,
    q: Option<&ScalarField>,
    rows: &[usize],
    conv: Conventions,
) -> Result<OperatorMatrix> {
    a.ensure_supported_in_omega(grid)?;
    let mut op = assemble_frac_rows(grid, s, rows, conv)?;
    let c = op.constant;
    let w = grid.weight();
    let dim = grid.dim();
    if !a.is_zero() {
        let anti = decompose(a, grid).anti;
        let m = mass_term(a, grid, s)?;
        let nodes = a.nodes();
        for (r, &x) in rows.iter().enumerate() {
            let Some(sx) = a.slot(x) else { continue };
            let mut k = vec![0.0; dim];
            let mut diag = m[x];
            for (sy, &y) in nodes.iter().enumerate() {
                if y == x {
                    continue;
                }
                kernel_vector(grid, &c, x, y, &mut k);
                let kappa: f64 = 2.0 * w * anti.at(sx, sy).iter().zip(&k).map(|(p, q)| p * q).sum::<f64>();
                diag += kappa;
                op.matrix[(r, y)] -= kappa;
            }
            op.matrix[(r, x)] += diag;
        }
        op.kind = OperatorKind::Magnetic;
    } else {
        op.kind = OperatorKind::Magnetic;
    }
    if let Some(q) = q {
        for (r, &x) in rows.iter().enumerate() {
            if grid.is_interior(x) {
                op.matrix[(r, x)] += q[x];
            }
        }
        op.kind = OperatorKind::MagneticWithPotential;
    }
    if op.matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow("magnetic operator assembly".into()));
    }
    Ok(op)
}

/// `(-D_h u)(x) w` summed against `v`, per axis coefficient `a_d / h_d^2`,
/// with zero values outside the box.
fn singular_form(grid: &Grid, sing: &[f64], u: &ScalarField, v: &ScalarField) -> f64 {
    let mut acc = 0.0;
    for i in 0..grid.len() {
        if v[i] == 0.0 {
            continue;
        }
        let mut lap = 0.0;
        for (axis, a) in sing.iter().enumerate() {
            let hd = grid.spacing()[axis];
            let (p, n) = grid.axis_neighbours(i, axis);
            let up = p.map_or(0.0, |k| u[k]);
            let un = n.map_or(0.0, |k| u[k]);
            lap += a / (hd * hd) * (2.0 * u[i] - up - un);
        }
        acc += lap * v[i];
    }
    acc * grid.weight()
}

/// `sum_{x,y} (grad^s u + A u(x)) . (grad^s v + A v(x)) w^2` plus the
/// far-field and singular-cell forms of the chosen conventions.
pub fn bilinear_energy_with(
    grid: &Grid,
    s: f64,
    a: &MagneticPotential,
    u: &ScalarField,
    v: &ScalarField,
    conv: Conventions,
) -> Result<f64> {
    let c = frac_constant(grid.dim(), s)?;
    let nn = grid.len();
    let w = grid.weight();
    let n = grid.dim() as f64;
    let expo = -(n + 2.0 * s) / 2.0;
    // gradient part: (C/2) sum (u_x - u_y)(v_x - v_y) / r^{n+2s} w^2
    let grad: f64 = (0..nn)
        .into_par_iter()
        .map(|x| {
            let mut acc = 0.0;
            for y in 0..nn {
                if y != x {
                    acc += (u[x] - u[y]) * (v[x] - v[y]) * grid.dist2(x, y).powf(expo);
                }
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        * 0.5
        * c.value
        * w
        * w;
    let mut mag = 0.0;
    let nodes = a.nodes();
    let dim = grid.dim();
    let mut k = vec![0.0; dim];
    if !a.is_zero() {
        for (r, &x) in nodes.iter().enumerate() {
            for (cc, &y) in nodes.iter().enumerate() {
                let av = a.at(r, cc);
                let a2: f64 = av.iter().map(|t| t * t).sum();
                let mut term = a2 * u[x] * v[x];
                if x != y {
                    kernel_vector(grid, &c, x, y, &mut k);
                    let ak: f64 = av.iter().zip(&k).map(|(p, q)| p * q).sum();
                    term += ak * (u[x] * (v[x] - v[y]) + (u[x] - u[y]) * v[x]);
                }
                mag += term;
            }
        }
        mag *= w * w;
    }
    let mut extra = 0.0;
    if conv.tail {
        for i in 0..nn {
            if u[i] != 0.0 && v[i] != 0.0 {
                extra += tail_weight(grid, &c, grid.point(i)) * u[i] * v[i] * w;
            }
        }
    }
    if conv.singular_correction {
        extra += singular_form(grid, &singular_coefficients(grid, &c), u, v);
    }
    Ok(grad + mag + extra)
}

pub fn bilinear_energy(grid: &Grid, s: f64, a: &MagneticPotential, u: &ScalarField, v: &ScalarField) -> Result<f64> {
    bilinear_energy_with(grid, s, a, u, v, Conventions::default())
}

/// Quadrature check of the far-field integral by brute force over a large
/// annulus, used in tests only.
#[doc(hidden)]
pub fn tail_weight_1d_reference(c: &FracConstant, x: f64, lo: f64, hi: f64) -> f64 {
    let s = c.s;
    let f = |y: f64| (x - y).abs().powf(-1.0 - 2.0 * s);
    let left = integrate(&|t: f64| if t <= 0.0 { 0.0 } else { f(lo - (1.0 - t) / t) / (t * t) }, 0.0, 1.0, 1e-13, 1e-12);
    let right = integrate(&|t: f64| if t <= 0.0 { 0.0 } else { f(hi + (1.0 - t) / t) / (t * t) }, 0.0, 1.0, 1e-13, 1e-12);
    c.value * (left.value + right.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, bump, BoundingBox, DomainSpec, Region};
    use crate::potentials::{random_admissible_q, random_potential, PotentialPreset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_1d(n: usize) -> Grid {
        let spec = DomainSpec {
            dimension: 1,
            bbox: BoundingBox::new(&[-4.0], &[4.0]),
            omega: Region::interval(-1.0, 1.0),
            w1: Region::interval(1.5, 2.5),
            w2: Region::interval(-2.5, -1.5),
        };
        build_grid(&spec, n).unwrap()
    }

    fn grid_2d(n: usize) -> Grid {
        let spec = DomainSpec {
            dimension: 2,
            bbox: BoundingBox::cube(2, -2.0, 2.0),
            omega: Region::ball(&[0.0, 0.0], 1.0),
            w1: Region::boxed(&[1.2, -0.5], &[1.9, 0.5]),
            w2: Region::boxed(&[-1.9, -0.5], &[-1.2, 0.5]),
        };
        build_grid(&spec, n).unwrap()
    }

    #[test]
    fn constant_values() {
        let c = frac_constant(1, 0.5).unwrap();
        assert!((c.value - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        // n = 2, s = 1/2: Gamma(3/2) 2 / (pi Gamma(1/2) 2) = 1 / (2 pi)
        let c2 = frac_constant(2, 0.5).unwrap();
        assert!((c2.value - 0.5 / std::f64::consts::PI).abs() < 1e-14);
        assert!(frac_constant(1, 0.25).unwrap().value > 0.0);
        assert!(frac_constant(1, 0.75).unwrap().value > 0.0);
        assert!(matches!(frac_constant(1, 1.0), Err(Error::DomainError(_))));
        assert!(matches!(frac_constant(1, 0.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn tail_matches_brute_force_in_1d() {
        let g = grid_1d(32);
        let c = frac_constant(1, 0.3).unwrap();
        for &x in &[-3.9, -1.0, 0.0, 2.5] {
            let a = tail_weight(&g, &c, &[x]);
            let b = tail_weight_1d_reference(&c, x, -4.0, 4.0);
            assert!((a - b).abs() < 1e-8 * a, "{a} {b}");
        }
    }

    #[test]
    fn tail_2d_against_polar_brute_force() {
        // centre of [-2,2]^2: t = C/(2s) int rho^{-2s}
        let g = grid_2d(16);
        let c = frac_constant(2, 0.5).unwrap();
        let t = tail_weight(&g, &c, &[0.0, 0.0]);
        // rho = 2 / max(|cos|, |sin|); int_0^{2pi} max(|cos|,|sin|) dtheta / 2 = 8 sin(pi/4) / 2
        let exact = c.value * 8.0 * (std::f64::consts::FRAC_PI_4).sin() / 2.0;
        assert!((t - exact).abs() < 1e-11 * exact);
        // monotone towards the boundary
        let t2 = tail_weight(&g, &c, &[1.5, 0.0]);
        let t3 = tail_weight(&g, &c, &[1.9, 0.0]);
        assert!(t < t2 && t2 < t3);
    }

    #[test]
    fn constant_field_sees_only_tail() {
        let g = grid_1d(64);
        let op = assemble_frac_laplacian(&g, 0.4).unwrap();
        let one = ScalarField::constant(g.len(), 1.0);
        let mu = op.apply(&one);
        // box edges: the discrete Laplacian sees the zero outside the box
        for (r, &i) in op.rows.iter().enumerate() {
            assert!((mu[r] - op.tail[r]).abs() < 1e-10 * op.tail[r].max(1.0), "{i}");
        }
    }

    #[test]
    fn sign_structure() {
        let g = grid_2d(16);
        let op = assemble_frac_rows(&g, 0.6, &(0..g.len()).collect::<Vec<_>>(), Conventions::default()).unwrap();
        for (r, &i) in op.rows.iter().enumerate() {
            let mut sum = 0.0;
            for j in 0..g.len() {
                let v = op.matrix[(r, j)];
                sum += v;
                if j != i {
                    assert!(v <= 0.0);
                } else {
                    assert!(v > 0.0);
                }
            }
            assert!(sum >= -1e-12);
        }
    }

    #[test]
    fn factorization_and_adjointness() {
        let g = grid_2d(16);
        let s = 0.35;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = ScalarField((0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let grad = frac_gradient(&g, s, &u).unwrap();
        let dg = frac_divergence(&g, s, &grad).unwrap();
        let all: Vec<usize> = (0..g.len()).collect();
        let op = assemble_frac_rows(&g, s, &all, Conventions::pair_sum_only()).unwrap();
        let mu = op.apply(&u);
        let scale = mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..g.len() {
            assert!((dg[k] - mu[k]).abs() <= 1e-12 * scale);
        }
        // duality with a random pair field
        let mut p = grad.clone();
        p.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let v = ScalarField((0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let dp = frac_divergence(&g, s, &p).unwrap();
        let gv = frac_gradient(&g, s, &v).unwrap();
        let w = g.weight();
        let lhs: f64 = dp.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() * w;
        let rhs: f64 = p.data.iter().zip(&gv.data).map(|(a, b)| a * b).sum::<f64>() * w * w;
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn gradient_pair_symmetry() {
        // both u(x) - u(y) and y - x change sign under the swap
        let g = grid_1d(32);
        let u = bump(&g, &[0.0], 0.8, 1.0).unwrap();
        let gr = frac_gradient(&g, 0.5, &u).unwrap();
        for x in 0..g.len() {
            for y in 0..g.len() {
                assert_eq!(gr.get(x, y)[0], gr.get(y, x)[0]);
            }
        }
        let z = frac_gradient(&g, 0.5, &ScalarField::constant(g.len(), 2.0)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn magnetic_reduces_and_annihilates_constants() {
        let g = grid_1d(48);
        let zero = MagneticPotential::zero(&g);
        let plain = assemble_frac_laplacian(&g, 0.5).unwrap();
        let mag = assemble_magnetic(&g, 0.5, &zero, None).unwrap();
        assert_eq!(plain.matrix, mag.matrix);

        let a = PotentialPreset::AntisymmetricRadial { strength: 1.5, center: vec![0.0], radius: 1.0 }
            .build(&g)
            .unwrap();
        let q = ScalarField::constant(g.len(), 0.7);
        let m = assemble_magnetic(&g, 0.5, &a, Some(&q)).unwrap();
        let ma = mass_term(&a, &g, 0.5).unwrap();
        let mu = m.apply(&ScalarField::constant(g.len(), 1.0));
        for (r, &i) in m.rows.iter().enumerate() {
            let expect = plain.tail[r] + ma[i] + q[i];
            assert!((mu[r] - expect).abs() < 1e-10, "{} vs {}", mu[r], expect);
        }
    }

    #[test]
    fn strong_form_equals_weak_form() {
        let g = grid_2d(16);
        let s = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_potential(&g, &mut rng);
        let q = random_admissible_q(&a, &g, s, &mut rng).unwrap();
        let all: Vec<usize> = (0..g.len()).collect();
        let m = assemble_magnetic_rows(&g, s, &a, None, &all, Conventions::default()).unwrap();
        let u = ScalarField((0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let v = ScalarField((0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let b = bilinear_energy(&g, s, &a, &u, &v).unwrap();
        let mu = m.apply(&u);
        let strong: f64 = mu.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>() * g.weight();
        assert!((b - strong).abs() < 1e-11 * b.abs().max(1.0), "{b} {strong}");
        let b2 = bilinear_energy(&g, s, &a, &v, &u).unwrap();
        assert!((b - b2).abs() < 1e-11 * b.abs().max(1.0));
        let _ = q;
    }
}

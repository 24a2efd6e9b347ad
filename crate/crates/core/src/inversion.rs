//! Recovery of the Taylor coefficients `c_k`, `k >= 2`, from DN derivatives.
//!
//! With `v` solving the linear problem in the domain,
//! `D^(k)[f, h] = sum_omega (c_k (u^(1))^k + R_{k-1}) v w`, where `R_{k-1}`
//! collects the Bell terms with `m < k`. Test functions are built as Runge
//! approximations of narrow targets and `c_k` is fit by regularized least squares.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dn_map::{linear_dn_matrix, DnData, ExteriorBasis};
use crate::error::{Error, Result};
use crate::forward::{cascade_source, cascade_with, LinearSolver};
use crate::grid::{Grid, ScalarField};
use crate::potentials::{gauge_equivalent, MagneticPotential, Nonlinearity, GAUGE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    Identity,
    /// Graph Laplacian over neighbouring domain nodes.
    #[default]
    Smoothness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionOptions {
    /// Runge Tikhonov weight, relative to the mean Gram diagonal.
    pub lambda_runge: f64,
    /// Coefficient fit weight, relative to the mean normal-matrix diagonal.
    pub lambda_fit: f64,
    pub regularizer: Regularizer,
    /// Nodes with `u1 < mask_threshold * max u1` are masked.
    pub mask_threshold: f64,
    /// Gaussian target width in grid spacings; dimension default when absent.
    pub target_width: Option<f64>,
    /// Rows of the W1 basis used as data; several rows are stacked.
    pub data_rows: Vec<usize>,
    /// Use cascade pairings instead of finite differences.
    pub use_direct: bool,
    /// Abort when the mean Runge misfit exceeds this.
    pub max_runge_misfit: f64,
    /// Abort when the measured-vs-direct DN gap of an order exceeds this.
    pub max_dual_gap: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            lambda_runge: 1e-8,
            lambda_fit: 1e-8,
            regularizer: Regularizer::Smoothness,
            mask_threshold: 0.05,
            target_width: None,
            data_rows: vec![0],
            use_direct: false,
            max_runge_misfit: 0.95,
            max_dual_gap: 0.02,
        }
    }
}

impl InversionOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.lambda_runge) || !pos(self.lambda_fit) {
            return Err(Error::DomainError("regularization weights must be positive".into()));
        }
        if !(self.mask_threshold >= 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::DomainError("mask_threshold must lie in [0, 1)".into()));
        }
        if self.target_width.is_some_and(|w| !pos(w)) {
            return Err(Error::DomainError("target_width must be positive".into()));
        }
        if self.data_rows.is_empty() {
            return Err(Error::DomainError("data_rows must not be empty".into()));
        }
        if !pos(self.max_runge_misfit) || !pos(self.max_dual_gap) {
            return Err(Error::DomainError("abort limits must be positive".into()));
        }
        Ok(())
    }

    fn width(&self, dim: usize) -> f64 {
        self.target_width.unwrap_or(if dim == 1 { 2.1 } else { 1.5 })
    }
}

/// Linear solutions for the W2 basis, restricted to the domain.
#[derive(Debug, Clone)]
pub struct RungeBasis {
    /// `J x n_omega`.
    values: DMatrix<f64>,
    /// SVD of `values * sqrt(w)`.
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v_t: DMatrix<f64>,
    lambda_eff: f64,
    weight: f64,
    interior: Vec<usize>,
    len: usize,
    condition: f64,
}

#[derive(Debug, Clone)]
pub struct RungeSolution {
    pub target: ScalarField,
    pub coefficients: Vec<f64>,
    pub achieved: ScalarField,
    pub misfit: f64,
    pub lambda: f64,
}

impl RungeBasis {
    pub fn new(solver: &LinearSolver, basis2: &ExteriorBasis, lambda_reg: f64) -> Result<Self> {
        if basis2.is_empty() {
            return Err(Error::SpecViolation("Runge basis is empty".into()));
        }
        let grid = solver.grid();
        let interior = grid.interior().to_vec();
        let zero = ScalarField::zeros(grid.len());
        let mut values = DMatrix::zeros(basis2.len(), interior.len());
        for (j, h) in basis2.fields.iter().enumerate() {
            let v = solver.solve(&zero, h)?.u;
            for (c, &k) in interior.iter().enumerate() {
                values[(j, c)] = v[k];
            }
        }
        Self::from_values(values, grid, lambda_reg)
    }

    fn from_values(values: DMatrix<f64>, grid: &Grid, lambda_reg: f64) -> Result<Self> {
        let w = grid.weight();
        let svd = (&values * w.sqrt()).svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::NumericalOverflow("Runge SVD did not converge".into())),
        };
        let sigma = svd.singular_values;
        if !sigma.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalOverflow("Runge basis values are not finite".into()));
        }
        let hi = sigma.max().powi(2);
        let lo = sigma.min().powi(2);
        let condition = hi / lo.max(f64::EPSILON * hi);
        if condition > 1e12 {
            warn!("IllConditioned: Runge Gram condition estimate {condition:.2e}");
        }
        let lambda_eff = lambda_reg * sigma.norm_squared() / values.nrows() as f64;
        if !(lambda_eff > 0.0) {
            return Err(Error::NumericalOverflow("Runge basis solutions vanish on the domain".into()));
        }
        Ok(Self {
            len: grid.len(),
            values,
            u,
            sigma,
            v_t,
            lambda_eff,
            weight: w,
            interior: grid.interior().to_vec(),
            condition,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_eff
    }

    /// Basis solution `j` on the domain, in interior order.
    pub fn solution(&self, j: usize) -> Vec<f64> {
        self.values.row(j).iter().copied().collect()
    }

    /// Coefficients for a target given in interior order.
    fn coefficients_for(&self, target: &[f64]) -> DVector<f64> {
        // (A A^T + lambda)^-1 A t with A = V sqrt(w), through filter factors
        let t = DVector::from_column_slice(target) * self.weight.sqrt();
        let mut c = &self.v_t * t;
        for (ci, s) in c.iter_mut().zip(self.sigma.iter()) {
            *ci *= s / (s * s + self.lambda_eff);
        }
        &self.u * c
    }

    pub fn approximate(&self, target: &ScalarField) -> RungeSolution {
        let t: Vec<f64> = self.interior.iter().map(|&k| target[k]).collect();
        let alpha = self.coefficients_for(&t);
        let got = self.values.transpose() * &alpha;
        let mut achieved = ScalarField::zeros(self.len);
        for (c, &k) in self.interior.iter().enumerate() {
            achieved[k] = got[c];
        }
        let num: f64 = t.iter().zip(got.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = t.iter().map(|a| a * a).sum();
        RungeSolution {
            target: target.clone(),
            coefficients: alpha.iter().copied().collect(),
            achieved,
            misfit: if den > 0.0 { (num / den).sqrt() } else { 0.0 },
            lambda: self.lambda_eff,
        }
    }
}

/// Runge approximation of `target` by linear solutions with W2 data.
/// `lambda_reg` is relative to the mean Gram diagonal.
pub fn runge_approximate(
    a: &MagneticPotential,
    q: &ScalarField,
    target: &ScalarField,
    basis2: &ExteriorBasis,
    grid: &Grid,
    s: f64,
    lambda_reg: f64,
) -> Result<RungeSolution> {
    let solver = LinearSolver::new(grid, s, a, q)?;
    Ok(RungeBasis::new(&solver, basis2, lambda_reg)?.approximate(target))
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstOrderReport {
    pub gauge_equivalent: bool,
    /// `max |D1 - D2| / max |D1|`.
    pub dn_gap: f64,
    pub tol: f64,
    /// Equivalent pairs must be within `tol`, others beyond `10 tol`.
    pub consistent: bool,
}

/// Compare linear DN matrices of two linear parts against their gauge relation.
#[allow(clippy::too_many_arguments)]
pub fn verify_first_order(
    a1: &MagneticPotential,
    q1: &ScalarField,
    a2: &MagneticPotential,
    q2: &ScalarField,
    basis1: &ExteriorBasis,
    basis2: &ExteriorBasis,
    grid: &Grid,
    s: f64,
    tol: f64,
) -> Result<FirstOrderReport> {
    let d1 = linear_dn_matrix(a1, q1, basis1, basis2, grid, s)?;
    let d2 = linear_dn_matrix(a2, q2, basis1, basis2, grid, s)?;
    let scale = d1.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let dn_gap = (&d1 - &d2).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
    let equivalent = gauge_equivalent((a1, q1), (a2, q2), grid, s, GAUGE_TOL)?;
    Ok(FirstOrderReport {
        gauge_equivalent: equivalent,
        dn_gap,
        tol,
        consistent: if equivalent { dn_gap <= tol } else { dn_gap > 10.0 * tol },
    })
}

/// One recovered coefficient with diagnostics.
#[derive(Debug, Clone)]
pub struct CoefficientEstimate {
    pub order: usize,
    /// Values on domain nodes, zero elsewhere (masked nodes included).
    pub field: ScalarField,
    pub runge_misfit: f64,
}

/// Shared state for fitting coefficients from one linear part and data set.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    grid: Grid,
    solver: LinearSolver,
    q: ScalarField,
    runge: RungeBasis,
    /// `n_omega x J`: Runge coefficients per target.
    alphas: DMatrix<f64>,
    runge_misfit: f64,
    /// First linearizations for the data rows.
    u1: Vec<ScalarField>,
    mask: Vec<bool>,
    /// Regularization operator `L`; the penalty is `|L c|^2`.
    penalty: DMatrix<f64>,
    opts: InversionOptions,
}

impl Reconstructor {
    pub fn new(
        grid: &Grid,
        s: f64,
        a: &MagneticPotential,
        q: &ScalarField,
        data: &[ScalarField],
        basis2: &ExteriorBasis,
        opts: &InversionOptions,
    ) -> Result<Self> {
        opts.validate()?;
        if data.is_empty() {
            return Err(Error::SpecViolation("no W1 data supplied".into()));
        }
        let solver = LinearSolver::new(grid, s, a, q)?;
        let runge = RungeBasis::new(&solver, basis2, opts.lambda_runge)?;
        let interior = grid.interior();
        let zero = ScalarField::zeros(grid.len());
        let mut u1 = Vec::with_capacity(data.len());
        for f in data {
            if f.iter().any(|v| *v < 0.0) {
                warn!("W1 datum takes negative values; positivity of u1 is not guaranteed");
            }
            let u = solver.solve(&zero, f)?.u;
            let min = u.min_on(interior);
            if !(min > 0.0) {
                return Err(Error::PositivityFailure { min });
            }
            u1.push(u);
        }
        let mean: Vec<f64> = interior
            .iter()
            .map(|&k| u1.iter().map(|u| u[k]).sum::<f64>() / u1.len() as f64)
            .collect();
        let peak = mean.iter().fold(0.0f64, |m, v| m.max(*v));
        let mask = mean.iter().map(|v| *v >= opts.mask_threshold * peak).collect();

        let sigma = opts.width(grid.dim()) * grid.h();
        let n = interior.len();
        let mut alphas = DMatrix::zeros(n, basis2.len());
        let mut misfit = 0.0;
        for (m, &km) in interior.iter().enumerate() {
            let target: Vec<f64> = interior
                .iter()
                .map(|&k| (-grid.dist2(k, km) / (2.0 * sigma * sigma)).exp())
                .collect();
            let alpha = runge.coefficients_for(&target);
            let got = runge.values.transpose() * &alpha;
            let num: f64 = target.iter().zip(got.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = target.iter().map(|a| a * a).sum();
            misfit += (num / den).sqrt();
            alphas.row_mut(m).copy_from(&alpha.transpose());
        }
        let runge_misfit = misfit / n as f64;
        let penalty = match opts.regularizer {
            Regularizer::Identity => DMatrix::identity(n, n),
            Regularizer::Smoothness => graph_laplacian(grid),
        };
        Ok(Self {
            grid: grid.clone(),
            solver,
            q: q.clone(),
            runge,
            alphas,
            runge_misfit,
            u1,
            mask,
            penalty,
            opts: opts.clone(),
        })
    }

    pub fn u1(&self) -> &[ScalarField] {
        &self.u1
    }

    /// Mask over domain nodes in interior order; `true` where values are reported.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn runge_misfit(&self) -> f64 {
        self.runge_misfit
    }

    pub fn runge(&self) -> &RungeBasis {
        &self.runge
    }

    /// Fit `c_k` from `dk` (one row per data row, one column per W2 basis
    /// function), given `known = [c_2, ..., c_{k-1}]`.
    pub fn fit(&self, k: usize, dk: &DMatrix<f64>, known: &[ScalarField]) -> Result<CoefficientEstimate> {
        if k < 2 {
            return Err(Error::DomainError("only orders k >= 2 are reconstructed".into()));
        }
        if known.len() != k - 2 {
            return Err(Error::DomainError(format!("order {k} needs {} known coefficients", k - 2)));
        }
        if dk.nrows() != self.u1.len() || dk.ncols() != self.runge.values.nrows() {
            return Err(Error::BasisMismatch(format!(
                "DN block is {}x{}, expected {}x{}",
                dk.nrows(),
                dk.ncols(),
                self.u1.len(),
                self.runge.values.nrows()
            )));
        }
        let interior = self.grid.interior();
        let n = interior.len();
        let w = self.grid.weight();
        let mut coeffs = vec![self.q.clone()];
        coeffs.extend(known.iter().cloned());
        let known_nl = Nonlinearity::new(&self.grid, coeffs, 1.0)?;
        let nf = self.u1.len();
        let mut rows = DMatrix::zeros(n * nf, n);
        let mut rhs = DVector::zeros(n * nf);
        for (i, u1) in self.u1.iter().enumerate() {
            let remainder = if k > 2 {
                let f = self.exterior_datum(u1);
                let us = cascade_with(&self.solver, &known_nl, &f, k - 1)?;
                cascade_source(&known_nl, &us, k, k - 1).scaled(-1.0)
            } else {
                ScalarField::zeros(self.grid.len())
            };
            // V (u1^k w) and V (R w)
            let uk: Vec<f64> = interior.iter().map(|&p| u1[p].powi(k as i32) * w).collect();
            let rw = DVector::from_iterator(n, interior.iter().map(|&p| remainder[p] * w));
            let vr = &self.runge.values * rw;
            let block = &self.alphas * DMatrix::from_fn(self.runge.values.nrows(), n, |j, c| self.runge.values[(j, c)] * uk[c]);
            let d = DVector::from_iterator(dk.ncols(), (0..dk.ncols()).map(|j| dk[(i, j)] - vr[j]));
            let r = &self.alphas * d;
            rows.view_mut((i * n, 0), (n, n)).copy_from(&block);
            rhs.rows_mut(i * n, n).copy_from(&r);
        }
        // Tikhonov through QR of the stacked system [rows; sqrt(mu) L]
        let mu = self.opts.lambda_fit * rows.norm_squared() / n as f64;
        let m = rows.nrows();
        let mut stacked = DMatrix::zeros(m + n, n);
        stacked.view_mut((0, 0), (m, n)).copy_from(&rows);
        stacked.view_mut((m, 0), (n, n)).copy_from(&(&self.penalty * mu.sqrt()));
        let mut b = DVector::zeros(m + n);
        b.rows_mut(0, m).copy_from(&rhs);
        let qr = stacked.qr();
        let qtb = qr.q().transpose() * b;
        let sol = qr
            .r()
            .solve_upper_triangular(&qtb)
            .ok_or(Error::SingularSystem { pivot_ratio: 0.0 })?;
        let mut field = ScalarField::zeros(self.grid.len());
        for (c, &p) in interior.iter().enumerate() {
            field[p] = sol[c];
        }
        Ok(CoefficientEstimate {
            order: k,
            field,
            runge_misfit: self.runge_misfit,
        })
    }

    /// The exterior part of a first linearization.
    fn exterior_datum(&self, u1: &ScalarField) -> ScalarField {
        u1.restricted(|k| !self.grid.is_interior(k))
    }
}

/// Graph Laplacian over domain nodes, in interior order.
pub fn graph_laplacian(grid: &Grid) -> DMatrix<f64> {
    let interior = grid.interior();
    let n = interior.len();
    let mut l = DMatrix::zeros(n, n);
    for (r, &k) in interior.iter().enumerate() {
        for axis in 0..grid.dim() {
            let (lo, hi) = grid.axis_neighbours(k, axis);
            for nb in [lo, hi].into_iter().flatten() {
                if let Some(c) = grid.interior_slot(nb) {
                    l[(r, r)] += 1.0;
                    l[(r, c)] -= 1.0;
                }
            }
        }
    }
    l
}

/// Recover `c_k` from a DN derivative block for the given W1 data.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_coefficient(
    dk: &DMatrix<f64>,
    k: usize,
    known: &[ScalarField],
    a: &MagneticPotential,
    q: &ScalarField,
    data: &[ScalarField],
    basis2: &ExteriorBasis,
    grid: &Grid,
    s: f64,
    opts: &InversionOptions,
) -> Result<CoefficientEstimate> {
    Reconstructor::new(grid, s, a, q, data, basis2, opts)?.fit(k, dk, known)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientError {
    pub order: usize,
    pub relative_l2: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// `coefficients[k - 2]` is the estimate of `c_k`.
    pub coefficients: Vec<ScalarField>,
    /// Interior-order mask of reported nodes.
    pub mask: Vec<bool>,
    pub u1: ScalarField,
    pub positivity_margin: f64,
    pub runge_misfit: f64,
    pub runge_condition: f64,
    pub dual_mode_gaps: Vec<f64>,
    pub partial: bool,
    pub abort_reason: Option<String>,
    pub errors: Vec<CoefficientError>,
}

impl ReconstructionResult {
    /// Reported value of `c_k` at a node, `None` when masked or outside the domain.
    pub fn value(&self, grid: &Grid, k: usize, node: usize) -> Option<f64> {
        let slot = grid.interior_slot(node)?;
        self.mask[slot].then(|| self.coefficients[k - 2][node])
    }

    /// Fill `errors` against a known nonlinearity.
    pub fn compare(&mut self, grid: &Grid, truth: &Nonlinearity) {
        self.errors = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, est)| {
                let k = i + 2;
                let c = truth.coeff(k);
                masked_error(grid, &self.mask, est, &c, k)
            })
            .collect();
    }
}

/// Relative L2 and max-abs error over unmasked domain nodes.
pub fn masked_error(grid: &Grid, mask: &[bool], est: &ScalarField, truth: &ScalarField, order: usize) -> CoefficientError {
    let (mut num, mut den, mut mx) = (0.0, 0.0, 0.0f64);
    for (slot, &k) in grid.interior().iter().enumerate() {
        if mask[slot] {
            let d = est[k] - truth[k];
            num += d * d;
            den += truth[k] * truth[k];
            mx = mx.max(d.abs());
        }
    }
    CoefficientError {
        order,
        relative_l2: if den > 0.0 { (num / den).sqrt() } else { f64::INFINITY },
        max_abs: mx,
    }
}

/// Run the order-by-order reconstruction `k = 2..=order`.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_all(
    dn: &DnData,
    a: &MagneticPotential,
    q: &ScalarField,
    basis1: &ExteriorBasis,
    basis2: &ExteriorBasis,
    grid: &Grid,
    order: usize,
    opts: &InversionOptions,
) -> Result<ReconstructionResult> {
    if order < 2 || order > dn.order {
        return Err(Error::DomainError(format!(
            "reconstruction order {order} must lie in 2..={}",
            dn.order
        )));
    }
    if dn.meta.grid != grid.fingerprint()
        || dn.meta.basis_w1 != basis1.fingerprint()
        || dn.meta.basis_w2 != basis2.fingerprint()
    {
        return Err(Error::BasisMismatch("DN data was produced on a different grid or basis".into()));
    }
    if let Some(&bad) = opts.data_rows.iter().find(|&&i| i >= basis1.len()) {
        return Err(Error::DomainError(format!("data row {bad} exceeds the W1 basis size {}", basis1.len())));
    }
    let data: Vec<ScalarField> = opts.data_rows.iter().map(|&i| basis1.fields[i].clone()).collect();
    let rec = Reconstructor::new(grid, dn.meta.s, a, q, &data, basis2, opts)?;
    let gaps = dn.dual_mode_gaps();
    let mut u1 = ScalarField::zeros(grid.len());
    for u in rec.u1() {
        u1 = u1.add(&u.scaled(1.0 / rec.u1().len() as f64));
    }
    let mut result = ReconstructionResult {
        coefficients: Vec::new(),
        mask: rec.mask().to_vec(),
        positivity_margin: u1.min_on(grid.interior()),
        u1,
        runge_misfit: rec.runge_misfit(),
        runge_condition: rec.runge().condition(),
        dual_mode_gaps: gaps.clone(),
        partial: false,
        abort_reason: None,
        errors: Vec::new(),
    };
    if rec.runge_misfit() > opts.max_runge_misfit {
        result.partial = true;
        result.abort_reason = Some(format!(
            "mean Runge misfit {:.3} exceeds {:.3}",
            rec.runge_misfit(),
            opts.max_runge_misfit
        ));
        return Ok(result);
    }
    for k in 2..=order {
        if !opts.use_direct && gaps[k - 1] > opts.max_dual_gap {
            result.partial = true;
            result.abort_reason = Some(format!(
                "order {k}: measured/direct DN gap {:.3e} exceeds {:.3e}",
                gaps[k - 1],
                opts.max_dual_gap
            ));
            break;
        }
        let full = dn.derivative(k, opts.use_direct);
        let dk = DMatrix::from_fn(opts.data_rows.len(), full.ncols(), |r, c| full[(opts.data_rows[r], c)]);
        let est = rec.fit(k, &dk, &result.coefficients)?;
        result.coefficients.push(est.field);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dn_map::{dn_derivatives, FdScheme, Window};
    use crate::forward::SolverOptions;
    use crate::grid::{build_grid, BoundingBox, DomainSpec, Region};

    fn grid_1d() -> Grid {
        let spec = DomainSpec {
            dimension: 1,
            bbox: BoundingBox::new(&[-4.0], &[4.0]),
            omega: Region::interval(-1.0, 1.0),
            w1: Region::interval(-3.0, -1.2),
            w2: Region::interval(1.2, 3.0),
        };
        build_grid(&spec, 128).unwrap()
    }

    #[test]
    fn target_in_span_is_reproduced() {
        let g = grid_1d();
        let a = MagneticPotential::zero(&g);
        let q = ScalarField::constant(g.len(), 1.0).restricted(|k| g.is_interior(k));
        let b2 = ExteriorBasis::in_window(&g, Window::W2, 6, 0.3).unwrap();
        let solver = LinearSolver::new(&g, 0.5, &a, &q).unwrap();
        let v1 = solver.solve(&ScalarField::zeros(g.len()), &b2.fields[0]).unwrap().u.restricted(|k| g.is_interior(k));
        let sol = runge_approximate(&a, &q, &v1, &b2, &g, 0.5, 1e-12).unwrap();
        assert!(sol.misfit <= 1e-8, "{}", sol.misfit);
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-4);
        let big = runge_approximate(&a, &q, &v1, &b2, &g, 0.5, 1e8).unwrap();
        assert!(big.misfit > 0.99);
    }

    #[test]
    fn closed_loop_second_and_third_order() {
        let g = grid_1d();
        let a = MagneticPotential::zero(&g);
        let q = ScalarField::constant(g.len(), 1.0);
        let c2 = ScalarField::from_fn(&g, |p| 2.0 * (-p[0] * p[0] / (2.0 * 0.35 * 0.35)).exp());
        let c3 = ScalarField::from_fn(&g, |p| 3.0 * (-(p[0] - 0.2).powi(2) / (2.0 * 0.3 * 0.3)).exp());
        let nl = Nonlinearity::new(&g, vec![q.clone(), c2, c3], 2.0).unwrap();
        let b1 = ExteriorBasis::from_bumps(&g, Window::W1, &[vec![-2.1]], &[0.8]).unwrap();
        let b2 = ExteriorBasis::in_window(&g, Window::W2, 12, 0.3).unwrap();
        let opts = SolverOptions::default();
        let dn = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
        let qi = nl.q().clone();
        let mut res = reconstruct_all(&dn, &a, &qi, &b1, &b2, &g, 3, &InversionOptions::default()).unwrap();
        res.compare(&g, &nl);
        println!("{:?} misfit {} gaps {:?}", res.errors, res.runge_misfit, res.dual_mode_gaps);
        assert!(!res.partial);
        assert!(res.errors[0].relative_l2 < 0.1);
        assert!(res.errors[1].relative_l2 < 0.15);
    }
}

//! Linear exterior-value solves, the barrier function, Picard iteration for
//! the semilinear problem, the linearization cascade, and maximum-principle
//! batches.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, Dyn, LU};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bell::bell_field;
use crate::error::{Error, Result};
use crate::grid::{bump, cutoff_eta, dist, Grid, Region, ScalarField};
use crate::nonlocal::{assemble_magnetic, frac_constant, OperatorMatrix};
use crate::potentials::{
    drift_sign_min, mass_term, random_admissible_q, random_potential,
    MagneticPotential, Nonlinearity, ADMISSIBILITY_TOL,
};
use crate::quadrature::integrate;

/// Required lower bound of `min M phi` over the domain.
pub const BARRIER_REQUIRED: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol_linear: f64,
    pub tol_picard: f64,
    pub max_picard_iters: usize,
    /// Radius of the ball the Picard correction must stay in.
    pub delta: f64,
    /// Largest exterior-data amplitude.
    pub eps0: f64,
    /// Under-relaxation in `(0, 1]`.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_linear: 1e-10,
            tol_picard: 1e-13,
            max_picard_iters: 200,
            delta: 0.5,
            eps0: 0.4,
            damping: 1.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.tol_linear, self.tol_picard, self.delta, self.eps0, self.damping];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.max_picard_iters == 0 {
            return Err(Error::DomainError("solver options must be positive".into()));
        }
        if self.delta >= 1.0 {
            return Err(Error::DomainError(format!("delta must be below 1, got {}", self.delta)));
        }
        if self.damping > 1.0 {
            return Err(Error::DomainError(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// `(-Delta)^s_A u + q u = F` in the domain, `u = g` outside.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub a: MagneticPotential,
    pub q: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: ScalarField,
    pub residual_inf: f64,
    /// Picard updates (zero for linear solves).
    pub iterations: usize,
    /// Largest observed ratio of successive Picard steps.
    pub contraction_estimate: Option<f64>,
}

/// Factored interior block of `(-Delta)^s_A + q`.
#[derive(Clone)]
pub struct LinearSolver {
    grid: Grid,
    s: f64,
    op: OperatorMatrix,
    lu: LU<f64, Dyn, Dyn>,
    ext_cols: Vec<usize>,
    ext_block: DMatrix<f64>,
    tol: f64,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver")
            .field("unknowns", &self.op.rows.len())
            .field("s", &self.s)
            .finish()
    }
}

impl LinearSolver {
    pub fn new(grid: &Grid, s: f64, a: &MagneticPotential, q: &ScalarField) -> Result<Self> {
        Self::with_tolerance(grid, s, a, q, SolverOptions::default().tol_linear)
    }

    pub fn with_tolerance(grid: &Grid, s: f64, a: &MagneticPotential, q: &ScalarField, tol: f64) -> Result<Self> {
        let m = mass_term(a, grid, s)?;
        let worst = grid.interior().iter().fold(f64::INFINITY, |acc, &k| acc.min(m[k] + q[k]));
        if worst < -ADMISSIBILITY_TOL {
            warn!("m_A + q reaches {worst:.3e} < 0; coercivity is not guaranteed");
        }
        let op = assemble_magnetic(grid, s, a, Some(q))?;
        let block = op.columns(grid.interior());
        let lu = block.lu();
        let diag = lu.u().diagonal();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for v in diag.iter() {
            lo = lo.min(v.abs());
            hi = hi.max(v.abs());
        }
        let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        if !(ratio > 1e-13) {
            return Err(Error::SingularSystem { pivot_ratio: ratio });
        }
        let ext_cols = grid.exterior().to_vec();
        let ext_block = op.columns(&ext_cols);
        Ok(Self {
            grid: grid.clone(),
            s,
            op,
            lu,
            ext_cols,
            ext_block,
            tol,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Interior rows of the operator including `q`.
    pub fn operator(&self) -> &OperatorMatrix {
        &self.op
    }

    /// Solve `M_int x = rhs` for a right-hand side indexed like the interior nodes.
    pub fn solve_block(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        let x = self.lu.solve(&b).expect("factorization checked at construction");
        x.iter().copied().collect()
    }

    /// Solve with source `f` (read on the domain) and exterior data `g`
    /// (read off the domain).
    pub fn solve(&self, f: &ScalarField, g: &ScalarField) -> Result<Solution> {
        let interior = self.grid.interior();
        let gext = DVector::from_iterator(self.ext_cols.len(), self.ext_cols.iter().map(|&k| g[k]));
        let coupling = &self.ext_block * gext;
        let rhs: Vec<f64> = interior.iter().enumerate().map(|(r, &k)| f[k] - coupling[r]).collect();
        let mut x = self.solve_block(&rhs);
        let mut u = g.restricted(|k| !self.grid.is_interior(k));
        for (r, &k) in interior.iter().enumerate() {
            u[k] = x[r];
        }
        let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut res = self.residual(&u, f);
        if res > self.tol * scale {
            // one step of iterative refinement
            let r: Vec<f64> = interior
                .iter()
                .zip(self.op.apply(&u))
                .map(|(&k, mu)| f[k] - mu)
                .collect();
            let dx = self.solve_block(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            for (r, &k) in interior.iter().enumerate() {
                u[k] = x[r];
            }
            res = self.residual(&u, f);
            if res > self.tol * scale {
                return Err(Error::SingularSystem { pivot_ratio: res / scale });
            }
        }
        if !u.is_finite() {
            return Err(Error::NumericalOverflow("linear solve".into()));
        }
        Ok(Solution {
            u,
            residual_inf: res,
            iterations: 0,
            contraction_estimate: None,
        })
    }

    /// `max_interior |M u - f|`.
    pub fn residual(&self, u: &ScalarField, f: &ScalarField) -> f64 {
        self.op
            .apply(u)
            .iter()
            .zip(&self.op.rows)
            .fold(0.0f64, |m, (mu, &k)| m.max((mu - f[k]).abs()))
    }
}

pub fn solve_linear(p: &LinearProblem, grid: &Grid, s: f64, opts: &SolverOptions) -> Result<Solution> {
    LinearSolver::with_tolerance(grid, s, &p.a, &p.q, opts.tol_linear)?.solve(&p.f, &p.g)
}

/// `phi = eta / lambda` with `(-Delta)^s_A phi >= 1` on the domain.
#[derive(Debug, Clone)]
pub struct Barrier {
    pub phi: ScalarField,
    pub lambda: f64,
    /// `1 / lambda`.
    pub constant: f64,
    pub radius: f64,
    pub eta: ScalarField,
    /// `min_omega M phi`.
    pub achieved: f64,
}

/// `lambda = (C/2) int_{|z| > R} (R + |z|)^{-n-2s} dz` by radial quadrature.
pub fn barrier_lambda(n: usize, s: f64, radius: f64) -> Result<f64> {
    let c = frac_constant(n, s)?;
    let sphere = match n {
        1 => 2.0,
        2 => std::f64::consts::TAU,
        _ => return Err(Error::DomainError("dimension must be 1 or 2".into())),
    };
    let nf = n as f64;
    // r = R tau^{-1/s} turns the algebraic tail into a smooth integrand on (0, 1]
    let q = integrate(
        &|tau: f64| {
            if tau <= 0.0 {
                return 0.0;
            }
            let r = radius * tau.powf(-1.0 / s);
            let jac = radius / s * tau.powf(-1.0 / s - 1.0);
            r.powf(nf - 1.0) * (radius + r).powf(-nf - 2.0 * s) * jac
        },
        0.0,
        1.0,
        1e-15,
        1e-13,
    );
    Ok(0.5 * c.value * sphere * q.value)
}

pub fn build_barrier(grid: &Grid, s: f64, a: &MagneticPotential, q: &ScalarField) -> Result<Barrier> {
    let solver = LinearSolver::new(grid, s, a, q)?;
    build_barrier_with(&solver)
}

pub fn build_barrier_with(solver: &LinearSolver) -> Result<Barrier> {
    let grid = solver.grid();
    let cut = cutoff_eta(grid, None)?;
    let lambda = barrier_lambda(grid.dim(), solver.s(), cut.radius)?;
    let phi = cut.field.scaled(1.0 / lambda);
    let mphi = solver.operator().apply(&phi);
    let achieved = mphi.iter().cloned().fold(f64::INFINITY, f64::min);
    if achieved < BARRIER_REQUIRED {
        return Err(Error::BarrierFailure {
            achieved,
            required: BARRIER_REQUIRED,
        });
    }
    Ok(Barrier {
        phi,
        lambda,
        constant: 1.0 / lambda,
        radius: cut.radius,
        eta: cut.field,
        achieved,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinfReport {
    pub norm_u: f64,
    pub norm_g: f64,
    pub norm_f: f64,
    /// `||g|| + C ||F||`.
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
}

/// Compare `||u||_inf` with `||g||_inf + (1/lambda) ||F||_inf`.
pub fn linf_bound_check(grid: &Grid, sol: &Solution, f: &ScalarField, g: &ScalarField, barrier: &Barrier, slack: f64) -> LinfReport {
    let norm_u = sol.u.max_abs();
    let norm_g = g.max_abs_on(grid.exterior());
    let norm_f = f.max_abs_on(grid.interior());
    let bound = norm_g + barrier.constant * norm_f;
    LinfReport {
        norm_u,
        norm_g,
        norm_f,
        bound,
        margin: bound - norm_u,
        holds: norm_u <= bound + slack,
    }
}

/// Picard solver for `(-Delta)^s_A u + a(x, u) = 0`, `u = g` outside.
#[derive(Debug, Clone)]
pub struct NonlinearSolver {
    linear: LinearSolver,
    nl: Nonlinearity,
    opts: SolverOptions,
}

impl NonlinearSolver {
    pub fn new(grid: &Grid, s: f64, a: &MagneticPotential, nl: &Nonlinearity, opts: &SolverOptions) -> Result<Self> {
        opts.validate()?;
        let linear = LinearSolver::with_tolerance(grid, s, a, nl.q(), opts.tol_linear)?;
        Ok(Self {
            linear,
            nl: nl.clone(),
            opts: *opts,
        })
    }

    pub fn linear(&self) -> &LinearSolver {
        &self.linear
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn solve(&self, g: &ScalarField) -> Result<Solution> {
        self.solve_from(g, None)
    }

    /// Picard iteration `v <- L^{-1}[-(a(u0 + v) - c1 (u0 + v))]` from `v0`.
    pub fn solve_from(&self, g: &ScalarField, v0: Option<&ScalarField>) -> Result<Solution> {
        let grid = self.linear.grid();
        let interior = grid.interior();
        let amplitude = g.max_abs_on(grid.exterior());
        let zero = ScalarField::zeros(grid.len());
        let u0 = self.linear.solve(&zero, g)?.u;
        let q = self.nl.q();
        let mut v = v0.cloned().unwrap_or_else(|| zero.clone());
        let mut prev_step: Option<f64> = None;
        let mut ratio_max: Option<f64> = None;
        let mut bad_streak = 0;
        let theta = self.opts.damping;
        let fail = |reason: &str, it: usize| Error::ContractionFailure {
            reason: reason.into(),
            iterations: it,
            amplitude,
            suggested: 0.5 * amplitude,
        };
        for it in 1..=self.opts.max_picard_iters {
            let u = u0.add(&v);
            let au = self.nl.eval_a(&u)?;
            let mut rhs = vec![0.0; interior.len()];
            for (r, &k) in interior.iter().enumerate() {
                rhs[r] = -(au[k] - q[k] * u[k]);
            }
            let x = self.linear.solve_block(&rhs);
            let mut step = 0.0f64;
            let mut vnew = v.clone();
            for (r, &k) in interior.iter().enumerate() {
                let nv = (1.0 - theta) * v[k] + theta * x[r];
                step = step.max((nv - v[k]).abs());
                vnew[k] = nv;
            }
            if !vnew.is_finite() {
                return Err(Error::NumericalOverflow("Picard iteration".into()));
            }
            v = vnew;
            let unew = u0.add(&v);
            let unorm = unew.max_abs_on(interior);
            let floor = 64.0 * f64::EPSILON * unorm.max(f64::MIN_POSITIVE);
            if let Some(p) = prev_step {
                if p > floor && step > floor {
                    let ratio = step / p;
                    ratio_max = Some(ratio_max.map_or(ratio, |m: f64| m.max(ratio)));
                    if ratio >= 1.0 {
                        bad_streak += 1;
                    } else {
                        bad_streak = 0;
                    }
                }
            }
            if bad_streak >= 3 {
                return Err(fail("step ratio at least 1 for 3 consecutive steps", it));
            }
            if v.max_abs_on(interior) > self.opts.delta {
                return Err(fail("correction left the contraction ball", it));
            }
            if unorm > self.nl.radius() {
                return Err(Error::RadiusExceeded {
                    max_abs: unorm,
                    radius: self.nl.radius(),
                });
            }
            if step <= self.opts.tol_picard || step <= 16.0 * f64::EPSILON * unorm {
                let res = self.residual(&unew)?;
                debug!("Picard converged in {it} steps, residual {res:.3e}");
                return Ok(Solution {
                    u: unew,
                    residual_inf: res,
                    iterations: it,
                    contraction_estimate: ratio_max,
                });
            }
            prev_step = Some(step);
        }
        Err(fail("iteration limit reached", self.opts.max_picard_iters))
    }

    /// `max_interior |M0 u + a(x, u)|` with `M0` the operator without `q`.
    pub fn residual(&self, u: &ScalarField) -> Result<f64> {
        let mu = self.linear.operator().apply(u);
        let au = self.nl.eval_a(u)?;
        let q = self.nl.q();
        Ok(self
            .linear
            .operator()
            .rows
            .iter()
            .zip(mu)
            .fold(0.0f64, |m, (&k, v)| m.max((v - q[k] * u[k] + au[k]).abs())))
    }

    /// Solve, halving the data amplitude after each contraction failure.
    /// Returns the solution and the factor applied to `g`.
    pub fn solve_adaptive(&self, g: &ScalarField, max_halvings: usize) -> Result<(Solution, f64)> {
        let mut t = 1.0;
        let amp = g.max_abs();
        if amp > self.opts.eps0 {
            t = self.opts.eps0 / amp;
        }
        let mut last = None;
        for _ in 0..=max_halvings {
            match self.solve(&g.scaled(t)) {
                Ok(sol) => return Ok((sol, t)),
                Err(e @ (Error::ContractionFailure { .. } | Error::RadiusExceeded { .. })) => {
                    warn!("amplitude {:.3e} failed ({}); halving", t * amp, e.class());
                    last = Some(e);
                    t *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// `[u^(1), ..., u^(K)]` for exterior datum `f`.
    pub fn cascade(&self, f: &ScalarField, order: usize) -> Result<Vec<ScalarField>> {
        cascade_with(&self.linear, &self.nl, f, order)
    }
}

/// Source `-sum_{m=2}^{k} c_m B_{k,m}(u^(1), ...)` on the domain.
pub fn cascade_source(nl: &Nonlinearity, us: &[ScalarField], k: usize, upto_m: usize) -> ScalarField {
    let len = us[0].len();
    let mut src = ScalarField::zeros(len);
    for m in 2..=k.min(upto_m) {
        if m > nl.order() {
            break;
        }
        let cm = nl.coeff(m);
        if cm.iter().all(|v| *v == 0.0) {
            continue;
        }
        let b = bell_field(k, m, us);
        for p in 0..len {
            src[p] -= cm[p] * b[p];
        }
    }
    src
}

pub fn cascade_with(linear: &LinearSolver, nl: &Nonlinearity, f: &ScalarField, order: usize) -> Result<Vec<ScalarField>> {
    if order == 0 {
        return Err(Error::DomainError("cascade order must be at least 1".into()));
    }
    let grid = linear.grid();
    let zero = ScalarField::zeros(grid.len());
    let mut us = vec![linear.solve(&zero, f)?.u];
    for k in 2..=order {
        let src = cascade_source(nl, &us, k, k);
        us.push(linear.solve(&src, &zero)?.u);
    }
    Ok(us)
}

pub fn solve_nonlinear(
    a: &MagneticPotential,
    nl: &Nonlinearity,
    g: &ScalarField,
    grid: &Grid,
    s: f64,
    opts: &SolverOptions,
) -> Result<Solution> {
    NonlinearSolver::new(grid, s, a, nl, opts)?.solve(g)
}

pub fn solve_cascade(
    a: &MagneticPotential,
    nl: &Nonlinearity,
    f: &ScalarField,
    grid: &Grid,
    s: f64,
    order: usize,
    opts: &SolverOptions,
) -> Result<Vec<ScalarField>> {
    if order > nl.order() {
        return Err(Error::DomainError(format!(
            "cascade order {order} exceeds the truncation order {}",
            nl.order()
        )));
    }
    NonlinearSolver::new(grid, s, a, nl, opts)?.cascade(f, order)
}

/// One maximum-principle instance.
#[derive(Debug, Clone)]
pub struct MpInstance {
    pub a: MagneticPotential,
    pub q: ScalarField,
    pub f: ScalarField,
    pub g: ScalarField,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MaxPrincipleReport {
    pub instances: usize,
    pub outside_hypothesis: usize,
    pub checked: usize,
    pub weak_violations: usize,
    pub strong_checked: usize,
    pub strong_violations: usize,
    /// Nonpositive values at collar nodes (within 2h of the boundary), not counted as violations.
    pub collar_nonpositive: usize,
    /// Smallest `min_omega u / scale` over checked instances.
    pub worst_scaled_min: f64,
    /// Smallest `min_core u` over strong-checked instances.
    pub worst_core_min: f64,
    pub linf_checked: usize,
    pub linf_violations: usize,
    pub barrier_min: f64,
}

impl MaxPrincipleReport {
    pub fn clean(&self) -> bool {
        self.weak_violations == 0 && self.strong_violations == 0 && self.linf_violations == 0
    }
}

/// Domain nodes at depth at least `2h`.
pub fn core_nodes(grid: &Grid) -> Vec<usize> {
    let h = grid.h();
    grid.interior()
        .iter()
        .copied()
        .filter(|&k| grid.depth_in_omega(k) >= 2.0 * h)
        .collect()
}

/// Run the weak and strong maximum principles and the sup bound on a batch.
/// Instances violating the hypotheses are counted but not checked.
pub fn check_maximum_principle(batch: &[MpInstance], grid: &Grid, s: f64, linf_slack: f64) -> Result<MaxPrincipleReport> {
    let mut rep = MaxPrincipleReport {
        instances: batch.len(),
        worst_scaled_min: f64::INFINITY,
        worst_core_min: f64::INFINITY,
        barrier_min: f64::INFINITY,
        ..Default::default()
    };
    let core = core_nodes(grid);
    for inst in batch {
        let m = mass_term(&inst.a, grid, s)?;
        let coer = grid.interior().iter().fold(f64::INFINITY, |acc, &k| acc.min(m[k] + inst.q[k]));
        let signs_ok = inst.f.min_on(grid.interior()) >= 0.0 && inst.g.min_on(grid.exterior()) >= 0.0;
        if drift_sign_min(&inst.a, grid) < -ADMISSIBILITY_TOL
            || coer < -ADMISSIBILITY_TOL
            || inst.a.leaked_pairs(grid) > 0
            || !signs_ok
        {
            rep.outside_hypothesis += 1;
            continue;
        }
        rep.checked += 1;
        let solver = LinearSolver::new(grid, s, &inst.a, &inst.q)?;
        let sol = solver.solve(&inst.f, &inst.g)?;
        let scale = inst.f.max_abs_on(grid.interior()).max(inst.g.max_abs_on(grid.exterior()));
        let umin = sol.u.min_on(grid.interior());
        if scale > 0.0 {
            rep.worst_scaled_min = rep.worst_scaled_min.min(umin / scale);
        }
        if umin < -1e-8 * scale {
            rep.weak_violations += 1;
        }
        if inst.g.max_abs_on(grid.exterior()) > 0.0 {
            rep.strong_checked += 1;
            let cmin = sol.u.min_on(&core);
            rep.worst_core_min = rep.worst_core_min.min(cmin);
            if !(cmin > 0.0) {
                rep.strong_violations += 1;
            }
            rep.collar_nonpositive += grid
                .interior()
                .iter()
                .filter(|&&k| sol.u[k] <= 0.0 && !core.contains(&k))
                .count();
        }
        let barrier = build_barrier_with(&solver)?;
        rep.barrier_min = rep.barrier_min.min(barrier.achieved);
        rep.linf_checked += 1;
        if !linf_bound_check(grid, &sol, &inst.f, &inst.g, &barrier, linf_slack).holds {
            rep.linf_violations += 1;
        }
    }
    Ok(rep)
}

/// Random ball strictly inside a region.
pub fn random_ball_in(region: &Region, rng: &mut impl Rng) -> (Vec<f64>, f64) {
    match region {
        Region::Box { center, half_widths } => {
            let hmin = half_widths.iter().cloned().fold(f64::INFINITY, f64::min);
            let r = hmin * rng.random_range(0.4..0.9);
            let c = center
                .iter()
                .zip(half_widths)
                .map(|(c, h)| c + rng.random_range(-1.0..1.0) * (h - r) * 0.95)
                .collect();
            (c, r)
        }
        Region::Ball { center, radius } => {
            let r = radius * rng.random_range(0.3..0.6);
            let room = (radius - r) * 0.95;
            let mut c = center.clone();
            // rejection sample a point in the shrunken ball
            loop {
                let off: Vec<f64> = center.iter().map(|_| rng.random_range(-1.0..1.0) * room).collect();
                if off.iter().map(|v| v * v).sum::<f64>().sqrt() <= room {
                    for (ci, o) in c.iter_mut().zip(off) {
                        *ci += o;
                    }
                    break;
                }
            }
            (c, r)
        }
    }
}

/// Random instance satisfying the hypotheses, with `F >= 0` and `g >= 0`.
/// `g` is a bump in one of the windows; `strict_g` forces it nonzero.
pub fn random_instance(grid: &Grid, s: f64, rng: &mut impl Rng, strict_g: bool) -> Result<MpInstance> {
    let a = random_potential(grid, rng);
    let q = random_admissible_q(&a, grid, s, rng)?;
    let spec = grid.spec();
    let fz = rng.random_bool(0.25);
    let f = if fz {
        ScalarField::zeros(grid.len())
    } else {
        let (c, r) = random_ball_in(&spec.omega, rng);
        bump(grid, &c, r, rng.random_range(0.1..2.0))?.restricted(|k| grid.is_interior(k))
    };
    let gz = !strict_g && !fz && rng.random_bool(0.2);
    let g = if gz {
        ScalarField::zeros(grid.len())
    } else {
        let win = if rng.random_bool(0.5) { &spec.w1 } else { &spec.w2 };
        let (c, r) = random_ball_in(win, rng);
        let b = bump(grid, &c, r, rng.random_range(0.1..2.0))?;
        if b.max_abs() == 0.0 {
            // too small to be seen by the lattice: fall back to the window centre
            let cc = win.center().to_vec();
            let rr = win.outer_radius().min(dist_to_omega(grid, &cc)) * 0.9;
            bump(grid, &cc, rr, 1.0)?
        } else {
            b
        }
    };
    Ok(MpInstance { a, q, f, g })
}

fn dist_to_omega(grid: &Grid, p: &[f64]) -> f64 {
    let om = &grid.spec().omega;
    match om {
        Region::Ball { center, radius } => dist(p, center) - radius,
        Region::Box { .. } => om.distance_to(p),
    }
}

//! Magnetic two-point potentials, the nonlinearity `a(x, z)`, their
//! admissibility checks, and gauge invariants.

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bell::factorial;
use crate::error::{Error, Result};
use crate::grid::{dist, mollifier, Grid, ScalarField, VectorPairField};
use crate::nonlocal::frac_divergence;

/// Default slack for sign conditions.
pub const ADMISSIBILITY_TOL: f64 = 1e-10;
/// Default tolerance of the gauge comparison.
pub const GAUGE_TOL: f64 = 1e-8;
/// Number of equispaced `z` samples in the coercivity check.
pub const Z_SAMPLES: usize = 101;

/// `A(x, y)` on the square `nodes x nodes`; zero on every other pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MagneticPotential {
    field: VectorPairField,
    slot: Vec<Option<usize>>,
}

impl MagneticPotential {
    /// The zero potential with support on the domain nodes.
    pub fn zero(grid: &Grid) -> Self {
        Self::from_field(grid, VectorPairField::square(grid.dim(), grid.interior().to_vec()))
            .expect("interior support is valid")
    }

    /// Wrap a square pair field whose rows and columns are the support nodes.
    pub fn from_field(grid: &Grid, field: VectorPairField) -> Result<Self> {
        if field.rows != field.cols || field.dim != grid.dim() {
            return Err(Error::SpecViolation(
                "potential must be a square pair field of the grid dimension".into(),
            ));
        }
        let mut slot = vec![None; grid.len()];
        for (i, &k) in field.rows.iter().enumerate() {
            if k >= grid.len() || slot[k].is_some() {
                return Err(Error::SpecViolation(format!("invalid support node {k}")));
            }
            slot[k] = Some(i);
        }
        if !field.is_finite() {
            return Err(Error::SpecViolation("potential has non-finite entries".into()));
        }
        Ok(Self { field, slot })
    }

    /// Evaluate `f(x, y)` on `nodes x nodes`.
    pub fn from_fn(
        grid: &Grid,
        nodes: &[usize],
        f: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let mut field = VectorPairField::square(grid.dim(), nodes.to_vec());
        for (r, &x) in nodes.iter().enumerate() {
            for (c, &y) in nodes.iter().enumerate() {
                let v = f(grid.point(x), grid.point(y));
                if v.len() != grid.dim() {
                    return Err(Error::SpecViolation("potential has the wrong number of components".into()));
                }
                field.get_mut(r, c).copy_from_slice(&v);
            }
        }
        Self::from_field(grid, field)
    }

    pub fn dim(&self) -> usize {
        self.field.dim
    }

    pub fn nodes(&self) -> &[usize] {
        &self.field.rows
    }

    pub fn field(&self) -> &VectorPairField {
        &self.field
    }

    pub fn slot(&self, node: usize) -> Option<usize> {
        self.slot.get(node).copied().flatten()
    }

    /// Value on a support slot pair.
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> &[f64] {
        self.field.get(r, c)
    }

    /// Value at a node pair, `None` off the support.
    pub fn value(&self, x: usize, y: usize) -> Option<&[f64]> {
        Some(self.field.get(self.slot(x)?, self.slot(y)?))
    }

    pub fn is_zero(&self) -> bool {
        self.field.data.iter().all(|v| *v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.field.max_abs()
    }

    /// Nonzero entries on pairs with a node outside the domain.
    pub fn leaked_pairs(&self, grid: &Grid) -> usize {
        let nodes = self.nodes();
        let mut count = 0;
        for (r, &x) in nodes.iter().enumerate() {
            for (c, &y) in nodes.iter().enumerate() {
                if (!grid.is_interior(x) || !grid.is_interior(y))
                    && self.at(r, c).iter().any(|v| *v != 0.0)
                {
                    count += 1;
                }
            }
        }
        count
    }

    pub fn ensure_supported_in_omega(&self, grid: &Grid) -> Result<()> {
        match self.leaked_pairs(grid) {
            0 => Ok(()),
            n => Err(Error::SpecViolation(format!(
                "magnetic potential is nonzero on {n} pairs outside omega x omega"
            ))),
        }
    }

    fn map(&self, f: impl Fn(usize, usize, &mut [f64])) -> Self {
        let mut out = self.clone();
        let m = self.nodes().len();
        for r in 0..m {
            for c in 0..m {
                f(r, c, out.field.get_mut(r, c));
            }
        }
        out
    }

    pub fn add(&self, other: &MagneticPotential) -> Result<Self> {
        if !self.field.same_layout(&other.field) {
            return Err(Error::SpecViolation("potentials have different supports".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.field.data.iter_mut().zip(&other.field.data) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.field.data.iter_mut().for_each(|v| *v *= t);
        out
    }

    /// Short content hash.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for k in self.nodes() {
            h.update((*k as u64).to_le_bytes());
        }
        for v in &self.field.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(&h.finalize()[..12])
    }
}

/// The six parts of a two-point potential.
#[derive(Debug, Clone)]
pub struct PotentialDecomposition {
    pub sym: MagneticPotential,
    pub anti: MagneticPotential,
    pub par: MagneticPotential,
    pub perp: MagneticPotential,
    /// Parallel part of the symmetric part.
    pub sym_par: MagneticPotential,
    /// Parallel part of the antisymmetric part.
    pub anti_par: MagneticPotential,
}

fn parallel_part(v: &[f64], x: &[f64], y: &[f64], out: &mut [f64]) {
    let r = dist(x, y);
    if r == 0.0 {
        out.copy_from_slice(v);
        return;
    }
    let proj: f64 = v.iter().zip(x.iter().zip(y)).map(|(a, (p, q))| a * (q - p)).sum::<f64>() / (r * r);
    for d in 0..out.len() {
        out[d] = proj * (y[d] - x[d]);
    }
}

/// Split `A` into symmetric/antisymmetric and parallel/perpendicular parts.
/// On the diagonal the parallel part is `A` itself.
pub fn decompose(a: &MagneticPotential, grid: &Grid) -> PotentialDecomposition {
    let nodes = a.nodes();
    let n = a.dim();
    let sym = a.map(|r, c, out| {
        for d in 0..n {
            out[d] = 0.5 * (a.at(r, c)[d] + a.at(c, r)[d]);
        }
    });
    let anti = a.map(|r, c, out| {
        for d in 0..n {
            out[d] = 0.5 * (a.at(r, c)[d] - a.at(c, r)[d]);
        }
    });
    let par_of = |src: &MagneticPotential| {
        src.map(|r, c, out| parallel_part(src.at(r, c), grid.point(nodes[r]), grid.point(nodes[c]), out))
    };
    let par = par_of(a);
    let perp = a.map(|r, c, out| {
        for d in 0..n {
            out[d] = a.at(r, c)[d] - par.at(r, c)[d];
        }
    });
    let sym_par = par_of(&sym);
    let anti_par = par_of(&anti);
    PotentialDecomposition {
        sym,
        anti,
        par,
        perp,
        sym_par,
        anti_par,
    }
}

/// `m_A = div^s(A_s,par) + sum_j |A(x, y_j)|^2 w` on all nodes.
pub fn mass_term(a: &MagneticPotential, grid: &Grid, s: f64) -> Result<ScalarField> {
    let dec = decompose(a, grid);
    let mut m = frac_divergence(grid, s, dec.sym_par.field())?;
    let w = grid.weight();
    let nodes = a.nodes();
    for (r, &x) in nodes.iter().enumerate() {
        let mut acc = 0.0;
        for c in 0..nodes.len() {
            acc += a.at(r, c).iter().map(|v| v * v).sum::<f64>();
        }
        m[x] += acc * w;
    }
    if !m.is_finite() {
        return Err(Error::NumericalOverflow("mass term".into()));
    }
    Ok(m)
}

/// Truncated Taylor model `a(x, z) = sum_{k=1}^K c_k(x) z^k / k!`, valid for `|z| <= R0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    coeffs: Vec<ScalarField>,
    radius: f64,
    support: Vec<usize>,
}

impl Nonlinearity {
    /// Coefficients are given on all nodes and zeroed outside the domain.
    pub fn new(grid: &Grid, coeffs: Vec<ScalarField>, radius: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::DomainError("nonlinearity needs at least c_1".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::DomainError(format!("validity radius must be positive, got {radius}")));
        }
        let coeffs: Vec<ScalarField> = coeffs
            .into_iter()
            .map(|c| {
                if c.len() != grid.len() || !c.is_finite() {
                    return Err(Error::SpecViolation("coefficient field has wrong length or non-finite values".into()));
                }
                Ok(c.restricted(|k| grid.is_interior(k)))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            coeffs,
            radius,
            support: grid.interior().to_vec(),
        })
    }

    /// `a(x, z) = q(x) z`.
    pub fn linear(grid: &Grid, q: ScalarField, radius: f64) -> Result<Self> {
        Self::new(grid, vec![q], radius)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `c_k = d^k a / dz^k (x, 0)`; zero beyond the truncation order.
    pub fn coeff(&self, k: usize) -> ScalarField {
        assert!(k >= 1);
        self.coeffs
            .get(k - 1)
            .cloned()
            .unwrap_or_else(|| ScalarField::zeros(self.coeffs[0].len()))
    }

    pub fn coeffs(&self) -> &[ScalarField] {
        &self.coeffs
    }

    pub fn q(&self) -> &ScalarField {
        &self.coeffs[0]
    }

    pub fn is_linear(&self) -> bool {
        self.coeffs[1..].iter().all(|c| c.iter().all(|v| *v == 0.0))
    }

    /// Copy with `c_k` replaced (the order grows if needed).
    pub fn with_coeff(&self, k: usize, field: ScalarField) -> Self {
        let mut out = self.clone();
        let len = field.len();
        while out.coeffs.len() < k {
            out.coeffs.push(ScalarField::zeros(len));
        }
        let support = &self.support;
        let mut f = ScalarField::zeros(len);
        for &p in support {
            f[p] = field[p];
        }
        out.coeffs[k - 1] = f;
        out
    }

    /// Copy truncated to order `k`.
    pub fn truncated(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.coeffs.truncate(k.max(1));
        out
    }

    fn check_radius(&self, u: &ScalarField) -> Result<()> {
        let m = u.max_abs_on(&self.support);
        if m > self.radius {
            return Err(Error::RadiusExceeded {
                max_abs: m,
                radius: self.radius,
            });
        }
        Ok(())
    }

    /// `a(x, u(x))`, zero off the domain.
    pub fn eval_a(&self, u: &ScalarField) -> Result<ScalarField> {
        self.eval_dz(u, 0)
    }

    /// `d^m a / dz^m (x, u(x)) = sum_{k>=m} c_k u^{k-m} / (k-m)!`.
    pub fn eval_dz(&self, u: &ScalarField, m: usize) -> Result<ScalarField> {
        self.check_radius(u)?;
        let mut out = ScalarField::zeros(u.len());
        for &p in &self.support {
            out[p] = self.dz_at(p, u[p], m);
        }
        Ok(out)
    }

    /// Pointwise `d^m a / dz^m (x_p, z)` (Horner form).
    pub fn dz_at(&self, p: usize, z: f64, m: usize) -> f64 {
        let kk = self.coeffs.len();
        if m > kk {
            return 0.0;
        }
        let kmin = m.max(1);
        let mut acc = 0.0;
        for k in (kmin..=kk).rev() {
            acc = acc * z + self.coeffs[k - 1][p] / factorial(k - m);
        }
        if m == 0 {
            acc * z
        } else {
            acc
        }
    }

    /// Lower bound of `d a / dz (x_p, z)` over `|z| <= R0`: dense samples,
    /// plus endpoints and critical points when the polynomial degree is at most 3.
    pub fn min_slope(&self, p: usize) -> f64 {
        let r = self.radius;
        let mut best = f64::INFINITY;
        for i in 0..Z_SAMPLES {
            let z = -r + 2.0 * r * i as f64 / (Z_SAMPLES - 1) as f64;
            best = best.min(self.dz_at(p, z, 1));
        }
        if self.order() <= 4 {
            // slope' = c2 + c3 z + c4 z^2 / 2
            let c2 = self.coeff(2)[p];
            let c3 = self.coeff(3)[p];
            let c4 = if self.order() == 4 { self.coeffs[3][p] } else { 0.0 };
            let mut crit = vec![-r, r];
            let (qa, qb, qc) = (0.5 * c4, c3, c2);
            if qa != 0.0 {
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    crit.push((-qb + sq) / (2.0 * qa));
                    crit.push((-qb - sq) / (2.0 * qa));
                }
            } else if qb != 0.0 {
                crit.push(-qc / qb);
            }
            for z in crit {
                if z.abs() <= r {
                    best = best.min(self.dz_at(p, z, 1));
                }
            }
        }
        best
    }

    /// Content hash of all coefficients.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.radius.to_le_bytes());
        for c in &self.coeffs {
            for v in c.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..12])
    }
}

/// Outcome of the admissibility conditions; violations are reported, not raised.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// `A_a,par(x, y) . (y - x) >= -tol` on all pairs.
    pub drift_sign: bool,
    pub drift_sign_worst: f64,
    /// `m_A + d a / dz (x, z) >= -tol` on the domain for `|z| <= R0`.
    pub coercivity: bool,
    pub coercivity_worst: f64,
    /// Support of `A` inside `omega x omega`.
    pub support: bool,
    pub leaked_pairs: usize,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.drift_sign && self.coercivity && self.support
    }

    /// Names of the failed conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.drift_sign {
            v.push("drift sign");
        }
        if !self.coercivity {
            v.push("coercivity");
        }
        if !self.support {
            v.push("support");
        }
        v
    }
}

/// Smallest `A_a(x, y) . (y - x)` over the support pairs.
pub fn drift_sign_min(a: &MagneticPotential, grid: &Grid) -> f64 {
    let nodes = a.nodes();
    let mut worst = f64::INFINITY;
    for (r, &x) in nodes.iter().enumerate() {
        let px = grid.point(x);
        for (c, &y) in nodes.iter().enumerate() {
            if r == c {
                continue;
            }
            let py = grid.point(y);
            let v: f64 = (0..a.dim())
                .map(|d| 0.5 * (a.at(r, c)[d] - a.at(c, r)[d]) * (py[d] - px[d]))
                .sum();
            worst = worst.min(v);
        }
    }
    if worst.is_infinite() {
        0.0
    } else {
        worst
    }
}

pub fn check_admissibility(
    a: &MagneticPotential,
    nl: &Nonlinearity,
    grid: &Grid,
    s: f64,
) -> Result<AdmissibilityReport> {
    let drift = drift_sign_min(a, grid);
    let m = mass_term(a, grid, s)?;
    let mut coer = f64::INFINITY;
    for &p in grid.interior() {
        coer = coer.min(m[p] + nl.min_slope(p));
    }
    let leaked = a.leaked_pairs(grid);
    Ok(AdmissibilityReport {
        drift_sign: drift >= -ADMISSIBILITY_TOL,
        drift_sign_worst: drift,
        coercivity: coer >= -ADMISSIBILITY_TOL,
        coercivity_worst: coer,
        support: leaked == 0,
        leaked_pairs: leaked,
    })
}

/// Pair `(A_a,par, sigma)` with `sigma = m_A + q`.
#[derive(Debug, Clone)]
pub struct GaugeInvariants {
    pub kernel: MagneticPotential,
    pub sigma: ScalarField,
}

pub fn gauge_invariants(
    a: &MagneticPotential,
    q: &ScalarField,
    grid: &Grid,
    s: f64,
) -> Result<GaugeInvariants> {
    let dec = decompose(a, grid);
    let m = mass_term(a, grid, s)?;
    let sigma = m.add(&q.restricted(|k| grid.is_interior(k)));
    Ok(GaugeInvariants {
        kernel: dec.anti_par,
        sigma,
    })
}

/// Sup-norm gaps `(kernel, sigma on omega)` between the invariants of two pairs.
pub fn gauge_gap(
    p1: (&MagneticPotential, &ScalarField),
    p2: (&MagneticPotential, &ScalarField),
    grid: &Grid,
    s: f64,
) -> Result<(f64, f64)> {
    let g1 = gauge_invariants(p1.0, p1.1, grid, s)?;
    let g2 = gauge_invariants(p2.0, p2.1, grid, s)?;
    let mut nodes: Vec<usize> = g1.kernel.nodes().iter().chain(g2.kernel.nodes()).copied().collect();
    nodes.sort_unstable();
    nodes.dedup();
    let zero = vec![0.0; grid.dim()];
    let mut kgap: f64 = 0.0;
    for &x in &nodes {
        for &y in &nodes {
            let a = g1.kernel.value(x, y).unwrap_or(&zero);
            let b = g2.kernel.value(x, y).unwrap_or(&zero);
            for d in 0..grid.dim() {
                kgap = kgap.max((a[d] - b[d]).abs());
            }
        }
    }
    let sgap = grid
        .interior()
        .iter()
        .fold(0.0f64, |m, &k| m.max((g1.sigma[k] - g2.sigma[k]).abs()));
    Ok((kgap, sgap))
}

pub fn gauge_equivalent(
    p1: (&MagneticPotential, &ScalarField),
    p2: (&MagneticPotential, &ScalarField),
    grid: &Grid,
    s: f64,
    tol: f64,
) -> Result<bool> {
    let (k, g) = gauge_gap(p1, p2, grid, s)?;
    Ok(k <= tol && g <= tol)
}

/// A gauge partner of `(A, q)`: `A + delta` with `q` shifted so that `sigma`
/// is unchanged. `delta` must not change the antisymmetric parallel part.
pub fn gauge_partner(
    a: &MagneticPotential,
    q: &ScalarField,
    delta: &MagneticPotential,
    grid: &Grid,
    s: f64,
) -> Result<(MagneticPotential, ScalarField)> {
    let a2 = a.add(delta)?;
    let m1 = mass_term(a, grid, s)?;
    let m2 = mass_term(&a2, grid, s)?;
    let q2 = ScalarField(
        (0..grid.len())
            .map(|k| if grid.is_interior(k) { q[k] + m1[k] - m2[k] } else { 0.0 })
            .collect(),
    );
    Ok((a2, q2))
}

/// Named analytic potentials; `chi` is the mollifier bump of the given
/// centre and radius, restricted to the domain.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, Serialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialPreset {
    Zero,
    /// `A = v` on `omega x omega`.
    Constant { vector: Vec<f64> },
    /// `A = v chi(x) chi(y)`.
    BumpProduct {
        vector: Vec<f64>,
        center: Vec<f64>,
        radius: f64,
    },
    /// `A = beta (y - x) chi(x) chi(y)`.
    AntisymmetricRadial {
        strength: f64,
        center: Vec<f64>,
        radius: f64,
    },
}

impl PotentialPreset {
    pub fn build(&self, grid: &Grid) -> Result<MagneticPotential> {
        let nodes = grid.interior();
        let n = grid.dim();
        let check_len = |v: &[f64]| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!("potential vector needs {n} components")))
            }
        };
        match self {
            PotentialPreset::Zero => Ok(MagneticPotential::zero(grid)),
            PotentialPreset::Constant { vector } => {
                check_len(vector)?;
                MagneticPotential::from_fn(grid, nodes, |_, _| vector.clone())
            }
            PotentialPreset::BumpProduct {
                vector,
                center,
                radius,
            } => {
                check_len(vector)?;
                check_len(center)?;
                let chi = |p: &[f64]| mollifier(dist(p, center) / radius);
                MagneticPotential::from_fn(grid, nodes, |x, y| {
                    let w = chi(x) * chi(y);
                    vector.iter().map(|v| v * w).collect()
                })
            }
            PotentialPreset::AntisymmetricRadial {
                strength,
                center,
                radius,
            } => {
                check_len(center)?;
                let chi = |p: &[f64]| mollifier(dist(p, center) / radius);
                MagneticPotential::from_fn(grid, nodes, |x, y| {
                    let w = strength * chi(x) * chi(y);
                    x.iter().zip(y).map(|(a, b)| w * (b - a)).collect()
                })
            }
        }
    }
}

/// Random potential satisfying the drift sign condition: a nonnegative
/// antisymmetric radial part plus a bounded symmetric part (and, in 2D, a
/// perpendicular part). Coercivity is not guaranteed; see [`random_admissible_q`].
pub fn random_potential(grid: &Grid, rng: &mut impl Rng) -> MagneticPotential {
    let n = grid.dim();
    let spec = grid.spec();
    let c0 = spec.omega.center().to_vec();
    let rho = spec.omega.outer_radius();
    let beta: f64 = rng.random_range(0.0..2.0);
    let sym: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let perp: f64 = if n == 2 { rng.random_range(-1.0..1.0) } else { 0.0 };
    let shift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3) * rho).collect();
    let cb: Vec<f64> = c0.iter().zip(&shift).map(|(a, b)| a + b).collect();
    let rb = rho * rng.random_range(0.8..1.4);
    let chi = |p: &[f64]| mollifier(dist(p, &c0) / (rho * 1.05));
    let chi2 = |p: &[f64]| mollifier(dist(p, &cb) / rb);
    MagneticPotential::from_fn(grid, grid.interior(), |x, y| {
        let w = chi(x) * chi(y);
        let w2 = chi2(x) * chi2(y);
        let mut v: Vec<f64> = (0..n).map(|d| beta * w * (y[d] - x[d]) + sym[d] * w2).collect();
        if n == 2 {
            // rotated difference: perpendicular to y - x
            v[0] += perp * w2 * -(y[1] - x[1]);
            v[1] += perp * w2 * (y[0] - x[0]);
        }
        v
    })
    .expect("interior support is valid")
}

/// `q = -m_A + rho` with a random smooth `rho >= 0`, so that `m_A + q >= 0`.
pub fn random_admissible_q(
    a: &MagneticPotential,
    grid: &Grid,
    s: f64,
    rng: &mut impl Rng,
) -> Result<ScalarField> {
    let m = mass_term(a, grid, s)?;
    let base: f64 = rng.random_range(0.0..1.0);
    let amp: f64 = rng.random_range(0.0..2.0);
    let rho = grid.spec().omega.outer_radius();
    let c: Vec<f64> = grid
        .spec()
        .omega
        .center()
        .iter()
        .map(|v| v + rng.random_range(-0.5..0.5) * rho)
        .collect();
    let mut q = ScalarField::zeros(grid.len());
    for &k in grid.interior() {
        let d = dist(grid.point(k), &c) / rho;
        q[k] = -m[k] + base + amp * (-d * d).exp();
    }
    Ok(q)
}

mod common;

use common::{gaussian, grid_1d, interior_constant};
use fracmag::dn_map::{dn_derivatives, ExteriorBasis, FdScheme, Window};
use fracmag::error::Error;
use fracmag::forward::{LinearSolver, SolverOptions};
use fracmag::grid::{Grid, ScalarField};
use fracmag::inversion::{reconstruct_all, runge_approximate, InversionOptions, Reconstructor, RungeBasis};
use fracmag::potentials::{gauge_partner, MagneticPotential, Nonlinearity, PotentialPreset};
use nalgebra::DMatrix;

fn setup(g: &Grid) -> (ExteriorBasis, ExteriorBasis, ScalarField) {
    let b1 = ExteriorBasis::from_bumps(g, Window::W1, &[vec![-2.1]], &[0.8]).unwrap();
    let b2 = ExteriorBasis::in_window(g, Window::W2, 12, 0.3).unwrap();
    (b1, b2, ScalarField::constant(g.len(), 1.0))
}

#[test]
fn runge_misfit_shrinks_with_nested_bases() {
    let g = grid_1d(96);
    let a = MagneticPotential::zero(&g);
    let q = ScalarField::constant(g.len(), 1.0);
    let target = interior_constant(&g, 1.0);
    // nested: each basis extends the previous by new centers
    let full = ExteriorBasis::in_window(&g, Window::W2, 12, 0.15).unwrap();
    let mut last = f64::INFINITY;
    for count in 4..=12 {
        let b = ExteriorBasis::from_bumps(&g, Window::W2, &full.centers[..count], &full.radii[..count]).unwrap();
        let r = runge_approximate(&a, &q, &target, &b, &g, 0.5, 1e-14).unwrap();
        assert!(r.misfit <= last + 1e-12, "{count} bumps: {} after {last}", r.misfit);
        last = r.misfit;
    }
    assert!(last < 1.0);
}

#[test]
fn runge_basis_solution_is_recovered() {
    let g = grid_1d(96);
    let a = PotentialPreset::AntisymmetricRadial { strength: 0.2, center: vec![0.0], radius: 0.8 }
        .build(&g)
        .unwrap();
    let q = ScalarField::constant(g.len(), 1.0);
    let b2 = ExteriorBasis::in_window(&g, Window::W2, 4, 0.3).unwrap();
    let solver = LinearSolver::new(&g, 0.5, &a, &q).unwrap();
    let runge = RungeBasis::new(&solver, &b2, 1e-12).unwrap();
    let mut target = ScalarField::zeros(g.len());
    for (&k, v) in g.interior().iter().zip(runge.solution(2)) {
        target[k] = v;
    }
    let r = runge.approximate(&target);
    assert!(r.misfit <= 1e-8, "{}", r.misfit);
    assert!((r.coefficients[2] - 1.0).abs() < 1e-4, "{:?}", r.coefficients);
    let heavy = RungeBasis::new(&solver, &b2, 1e8).unwrap().approximate(&target);
    assert!(heavy.coefficients.iter().all(|c| c.abs() < 1e-4));
}

#[test]
fn zero_quadratic_coefficient_is_recovered_as_zero() {
    let g = grid_1d(128);
    let (b1, b2, q) = setup(&g);
    let a = MagneticPotential::zero(&g);
    let nl = Nonlinearity::new(&g, vec![q.clone(), ScalarField::zeros(g.len()), gaussian(&g, 3.0, &[0.2], 0.3)], 0.5)
        .unwrap();
    let dn = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 2, FdScheme::Richardson7, &SolverOptions::default()).unwrap();
    let opts = InversionOptions::default();
    let rec = Reconstructor::new(&g, 0.5, &a, &q, &b1.fields, &b2, &opts).unwrap();
    let est = rec.fit(2, &dn.measured[1], &[]).unwrap().field;
    // floor: Richardson error estimate of D2 pushed through the fit
    let e = &dn.estimate[1];
    let mut floor = ScalarField::zeros(g.len());
    for j in 0..e.ncols() {
        let mut unit = DMatrix::zeros(1, e.ncols());
        unit[(0, j)] = 1.0;
        let resp = rec.fit(2, &unit, &[]).unwrap().field;
        for &k in g.interior() {
            floor[k] += resp[k].abs() * e[(0, j)];
        }
    }
    for (&k, &m) in g.interior().iter().zip(rec.mask()) {
        if m {
            assert!(est[k].abs() <= floor[k].max(1e-10), "node {k}: {} vs {}", est[k], floor[k]);
        }
    }
}

#[test]
fn gauge_partners_reconstruct_identically() {
    let g = grid_1d(128);
    let (b1, b2, q) = setup(&g);
    let a = PotentialPreset::AntisymmetricRadial { strength: 0.2, center: vec![0.0], radius: 0.9 }
        .build(&g)
        .unwrap();
    let nl = Nonlinearity::new(&g, vec![q.clone(), gaussian(&g, 2.0, &[0.0], 0.35)], 0.5).unwrap();
    let dn = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 2, FdScheme::Richardson7, &SolverOptions::default()).unwrap();
    let opts = InversionOptions::default();
    let r1 = reconstruct_all(&dn, &a, &q, &b1, &b2, &g, 2, &opts).unwrap();
    let delta = MagneticPotential::from_fn(&g, g.interior(), |x, y| vec![0.15 * (x[0].sin() + y[0].sin())]).unwrap();
    let (a2, q2) = gauge_partner(&a, &q, &delta, &g, 0.5).unwrap();
    let r2 = reconstruct_all(&dn, &a2, &q2, &b1, &b2, &g, 2, &opts).unwrap();
    let c2 = &r2.coefficients[0];
    assert_eq!(r1.mask, r2.mask);
    let scale = r1.coefficients[0].max_abs();
    for &k in g.interior() {
        assert!((c2[k] - r1.coefficients[0][k]).abs() <= 1e-8 * scale, "{k}: {} vs {} scale {scale}", c2[k], r1.coefficients[0][k]);
    }
}

#[test]
fn linear_truth_gives_vanishing_coefficients() {
    let g = grid_1d(128);
    let (b1, b2, q) = setup(&g);
    let a = MagneticPotential::zero(&g);
    let nl = Nonlinearity::new(&g, vec![q.clone(), ScalarField::zeros(g.len()), ScalarField::zeros(g.len())], 0.5)
        .unwrap();
    let dn = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &SolverOptions::default()).unwrap();
    let opts = InversionOptions { use_direct: true, ..InversionOptions::default() };
    let r = reconstruct_all(&dn, &a, &q, &b1, &b2, &g, 3, &opts).unwrap();
    assert!(!r.partial);
    for c in &r.coefficients {
        assert_eq!(c.max_abs(), 0.0);
    }
}

#[test]
fn masked_nodes_carry_no_value() {
    let g = grid_1d(128);
    let (b1, b2, q) = setup(&g);
    let a = MagneticPotential::zero(&g);
    let nl = Nonlinearity::new(&g, vec![q.clone(), gaussian(&g, 2.0, &[0.0], 0.35)], 0.5).unwrap();
    let dn = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 2, FdScheme::Richardson7, &SolverOptions::default()).unwrap();
    let opts = InversionOptions { mask_threshold: 0.5, ..InversionOptions::default() };
    let r = reconstruct_all(&dn, &a, &q, &b1, &b2, &g, 2, &opts).unwrap();
    let masked = r.mask.iter().filter(|m| !**m).count();
    assert!(masked > 0);
    for (&k, &m) in g.interior().iter().zip(&r.mask) {
        assert_eq!(r.value(&g, 2, k).is_some(), m);
    }
}

#[test]
fn negative_datum_fails_positivity() {
    let g = grid_1d(96);
    let (b1, b2, q) = setup(&g);
    let a = MagneticPotential::zero(&g);
    let neg = b1.fields[0].scaled(-1.0);
    let r = Reconstructor::new(&g, 0.5, &a, &q, &[neg], &b2, &InversionOptions::default());
    assert!(matches!(r, Err(Error::PositivityFailure { .. })));
}

#[test]
fn runge_limit_aborts_with_partial_result() {
    let g = grid_1d(128);
    let (b1, b2, q) = setup(&g);
    let a = MagneticPotential::zero(&g);
    let nl = Nonlinearity::new(&g, vec![q.clone(), gaussian(&g, 2.0, &[0.0], 0.35)], 0.5).unwrap();
    let dn = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 2, FdScheme::Richardson7, &SolverOptions::default()).unwrap();
    let opts = InversionOptions { max_runge_misfit: 1e-6, ..InversionOptions::default() };
    let r = reconstruct_all(&dn, &a, &q, &b1, &b2, &g, 2, &opts).unwrap();
    assert!(r.partial);
    assert!(r.abort_reason.is_some());
    assert!(r.coefficients.is_empty());
}

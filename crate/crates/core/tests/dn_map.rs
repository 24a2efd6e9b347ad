mod common;

use common::{gaussian, grid_1d, grid_2d};
use fracmag::dn_map::{
    dn_derivatives, dn_pairing, dn_restriction_equal, first_differing_order, linear_dn_matrix, DnContext, ExteriorBasis,
    FdScheme, Window,
};
use fracmag::error::Error;
use fracmag::forward::SolverOptions;
use fracmag::grid::{bump, Grid, ScalarField};
use fracmag::potentials::{gauge_partner, MagneticPotential, Nonlinearity, PotentialPreset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cubic(g: &Grid, c2: f64, c3: f64) -> Nonlinearity {
    let q = ScalarField::constant(g.len(), 1.0);
    Nonlinearity::new(
        g,
        vec![q, gaussian(g, c2, &[0.0], 0.35), gaussian(g, c3, &[0.2], 0.3)],
        0.5,
    )
    .unwrap()
}

fn bases(g: &Grid) -> (ExteriorBasis, ExteriorBasis) {
    (
        ExteriorBasis::in_window(g, Window::W1, 2, 0.3).unwrap(),
        ExteriorBasis::in_window(g, Window::W2, 4, 0.3).unwrap(),
    )
}

#[test]
fn zero_data_pairs_to_zero() {
    let g = grid_1d(96);
    let (_, b2) = bases(&g);
    let a = MagneticPotential::zero(&g);
    let p = dn_pairing(&a, &cubic(&g, 2.0, 3.0), &ScalarField::zeros(g.len()), &b2.fields[0], &g, 0.5, &SolverOptions::default())
        .unwrap();
    assert_eq!(p, 0.0);
}

#[test]
fn pairing_ignores_extension_into_domain() {
    let g = grid_1d(96);
    let (b1, b2) = bases(&g);
    let a = PotentialPreset::AntisymmetricRadial { strength: 0.2, center: vec![0.0], radius: 0.8 }
        .build(&g)
        .unwrap();
    let opts = SolverOptions { tol_picard: 1e-10, ..SolverOptions::default() };
    let ctx = DnContext::new(&g, 0.5, &a, &cubic(&g, 2.0, 3.0), &b2.support(), &opts).unwrap();
    let u = ctx.solver.solve(&b1.fields[0].scaled(0.2)).unwrap().u;
    let v = &b2.fields[1];
    let base = ctx.pair_solution(&u, v).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let w = ScalarField((0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).restricted(|k| g.is_interior(k));
        let other = ctx.pair_solution(&u, &v.add(&w)).unwrap();
        assert!((other - base).abs() <= 1e-6 * base.abs(), "{base} vs {other}");
    }
}

#[test]
fn pairing_vanishing_on_window_and_domain_is_zero() {
    let g = grid_1d(96);
    let (b1, _) = bases(&g);
    let a = MagneticPotential::zero(&g);
    // supported in W1 only: no pairing row sees it as a test function
    let ctx = DnContext::new(&g, 0.5, &a, &cubic(&g, 2.0, 0.0), &[], &SolverOptions::default()).unwrap();
    let p = ctx.pairing_for(&b1.fields[0].scaled(0.1), &ScalarField::zeros(g.len())).unwrap();
    assert_eq!(p, 0.0);
}

#[test]
fn linear_dn_matrix_is_symmetric() {
    for g in [grid_1d(96), grid_2d(20)] {
        let q = ScalarField::constant(g.len(), 1.0);
        let a = MagneticPotential::zero(&g);
        // same bumps on both sides of the domain, mirrored
        let w1 = ExteriorBasis::in_window(&g, Window::W1, 4, 0.25).unwrap();
        let mirrored: Vec<Vec<f64>> = w1.centers.iter().map(|c| c.iter().map(|x| -x).collect()).collect();
        let w2 = ExteriorBasis::from_bumps(&g, Window::W2, &mirrored, &w1.radii).unwrap();
        let d12 = linear_dn_matrix(&a, &q, &w1, &w2, &g, 0.5).unwrap();
        let d21 = linear_dn_matrix(&a, &q, &w2, &w1, &g, 0.5).unwrap();
        let gap = (&d12 - d21.transpose()).amax() / d12.amax();
        assert!(gap <= 1e-8, "asymmetry {gap:e}");
    }
}

#[test]
fn first_order_ignores_higher_coefficients() {
    let g = grid_1d(96);
    let (b1, b2) = bases(&g);
    let a = MagneticPotential::zero(&g);
    let opts = SolverOptions::default();
    let d = dn_derivatives(&a, &cubic(&g, 2.0, 3.0), &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
    let q = ScalarField::constant(g.len(), 1.0);
    let lin = linear_dn_matrix(&a, &q, &b1, &b2, &g, 0.5).unwrap();
    assert!((&d.measured[0] - &lin).amax() <= 1e-8 * lin.amax());
    let other = dn_derivatives(&a, &cubic(&g, -1.0, 5.0), &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
    assert!((&d.measured[0] - &other.measured[0]).amax() <= 1e-8 * lin.amax());
}

#[test]
fn linear_nonlinearity_has_no_higher_derivatives() {
    let g = grid_1d(96);
    let (b1, b2) = bases(&g);
    let a = MagneticPotential::zero(&g);
    let nl = cubic(&g, 0.0, 0.0);
    let d = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &SolverOptions::default()).unwrap();
    let scale = d.measured[0].amax();
    for k in 2..=3 {
        assert!(d.measured[k - 1].amax() <= 1e-9 * scale, "D{k} = {:e}", d.measured[k - 1].amax());
        assert_eq!(d.direct[k - 1].amax(), 0.0);
    }
}

#[test]
fn quadratic_term_dual_modes_agree() {
    let g = grid_2d(20);
    let (b1, b2) = bases(&g);
    let a = MagneticPotential::zero(&g);
    let q = ScalarField::constant(g.len(), 1.0);
    let c2 = bump(&g, &[0.1, 0.0], 0.6, 2.0).unwrap();
    let nl = Nonlinearity::new(&g, vec![q, c2], 0.5).unwrap();
    let d = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.4, 2, FdScheme::Richardson7, &SolverOptions::default()).unwrap();
    assert!(d.dual_mode_gaps()[1] <= 0.02);
}

#[test]
fn derivatives_are_homogeneous() {
    let g = grid_1d(96);
    let (b1, b2) = bases(&g);
    let a = MagneticPotential::zero(&g);
    let nl = cubic(&g, 2.0, 3.0);
    let opts = SolverOptions::default();
    let small = b1.scaled(0.5);
    let d1 = dn_derivatives(&a, &nl, &small, &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
    let d2 = dn_derivatives(&a, &nl, &small.scaled(2.0), &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
    for k in 1..=3 {
        let t = 2f64.powi(k as i32);
        let gap = (&d2.measured[k - 1] - &d1.measured[k - 1] * t).amax() / d2.measured[k - 1].amax();
        assert!(gap <= 1e-3, "order {k}: {gap:e}");
    }
}

#[test]
fn restriction_equality_cases() {
    let g = grid_1d(96);
    let (b1, b2) = bases(&g);
    let opts = SolverOptions::default();
    let a = PotentialPreset::AntisymmetricRadial { strength: 0.2, center: vec![0.0], radius: 0.8 }
        .build(&g)
        .unwrap();
    let nl = cubic(&g, 2.0, 3.0);
    let base = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
    let again = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
    assert!(dn_restriction_equal(&base, &again, 1e-12).unwrap());

    let delta = MagneticPotential::from_fn(&g, g.interior(), |x, y| vec![0.1 * ((2.0 * x[0]).cos() + (2.0 * y[0]).cos())])
        .unwrap();
    let (a2, q2) = gauge_partner(&a, nl.q(), &delta, &g, 0.5).unwrap();
    let partner = dn_derivatives(&a2, &nl.with_coeff(1, q2), &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
    assert!(dn_restriction_equal(&base, &partner, 1e-6).unwrap());

    let c2 = nl.coeff(2);
    let perturbed_c2 = c2.add(&bump(&g, &[0.1], 0.5, 0.1 * c2.max_abs()).unwrap());
    let perturbed = nl.with_coeff(2, perturbed_c2);
    let d = dn_derivatives(&a, &perturbed, &b1, &b2, &g, 0.5, 3, FdScheme::Richardson7, &opts).unwrap();
    assert!(!dn_restriction_equal(&base, &d, 1e-6).unwrap());
    assert_eq!(first_differing_order(&base, &d, 1e-6).unwrap(), Some(2));
}

#[test]
fn mismatched_bases_are_rejected() {
    let g = grid_1d(96);
    let (b1, b2) = bases(&g);
    let other = ExteriorBasis::in_window(&g, Window::W2, 3, 0.3).unwrap();
    let a = MagneticPotential::zero(&g);
    let nl = cubic(&g, 2.0, 0.0);
    let opts = SolverOptions::default();
    let d1 = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 2, FdScheme::Richardson7, &opts).unwrap();
    let d2 = dn_derivatives(&a, &nl, &b1, &other, &g, 0.5, 2, FdScheme::Richardson7, &opts).unwrap();
    assert!(matches!(dn_restriction_equal(&d1, &d2, 1e-6), Err(Error::BasisMismatch(_))));
}

#[test]
fn basis_leaving_window_is_rejected() {
    let g = grid_1d(96);
    assert!(ExteriorBasis::from_bumps(&g, Window::W2, &[vec![1.1]], &[0.3]).is_err());
}

#[test]
fn order_above_nonlinearity_is_rejected() {
    let g = grid_1d(96);
    let (b1, b2) = bases(&g);
    let a = MagneticPotential::zero(&g);
    let nl = Nonlinearity::linear(&g, ScalarField::constant(g.len(), 1.0), 0.5).unwrap();
    let r = dn_derivatives(&a, &nl, &b1, &b2, &g, 0.5, 2, FdScheme::Richardson7, &SolverOptions::default());
    assert!(matches!(r, Err(Error::DomainError(_))));
}

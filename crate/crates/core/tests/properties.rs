mod common;

use common::{grid_1d, grid_2d};
use fracmag::bell::{factorial, fornberg_weights, partial_bell};
use fracmag::dn_map::{DnData, DnMeta, FdScheme};
use fracmag::grid::{Grid, ScalarField};
use fracmag::io::{fields_csv, read_fields_csv};
use fracmag::potentials::{decompose, gauge_equivalent, random_potential, Nonlinearity};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Coefficients of `p(e) * q(e)` truncated at degree `n`.
fn poly_mul(p: &[f64], q: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            if i + j <= n {
                out[i + j] += a * b;
            }
        }
    }
    out
}

fn proptest_config() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(proptest_config())]

    #[test]
    fn bell_expansion_matches_series_composition(
        c in prop::collection::vec(-3.0f64..3.0, 4),
        u in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        // u(e) = sum u_j e^j / j!,  a(z) = sum c_m z^m / m!
        let n = 4;
        let mut series = vec![0.0; n + 1];
        for j in 1..=n {
            series[j] = u[j - 1] / factorial(j);
        }
        let mut power = vec![1.0; 1];
        let mut composed = vec![0.0; n + 1];
        for m in 1..=n {
            power = poly_mul(&power, &series, n);
            for (k, p) in power.iter().enumerate() {
                composed[k] += c[m - 1] / factorial(m) * p;
            }
        }
        for k in 1..=n {
            let direct = composed[k] * factorial(k);
            let bell: f64 = (1..=k).map(|m| c[m - 1] * partial_bell(k, m, &u)).sum();
            prop_assert!((direct - bell).abs() <= 1e-10 * (1.0 + direct.abs()), "k={} {} vs {}", k, direct, bell);
        }
    }

    #[test]
    fn fornberg_weights_are_exact_on_polynomials(
        offsets in prop::collection::btree_set(-40i32..40, 7),
        x0 in -1.0f64..1.0,
        coeffs in prop::collection::vec(-2.0f64..2.0, 5),
    ) {
        let pts: Vec<f64> = offsets.iter().map(|o| *o as f64 / 20.0).collect();
        let w = fornberg_weights(x0, &pts, 4);
        let f = |x: f64| coeffs.iter().enumerate().map(|(i, c)| c * x.powi(i as i32)).sum::<f64>();
        for (m, wm) in w.iter().enumerate() {
            let approx: f64 = wm.iter().zip(&pts).map(|(a, x)| a * f(*x)).sum();
            let exact: f64 = coeffs
                .iter()
                .enumerate()
                .skip(m)
                .map(|(i, c)| c * factorial(i) / factorial(i - m) * x0.powi((i - m) as i32))
                .sum();
            prop_assert!((approx - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "m={} {} vs {}", m, approx, exact);
        }
    }

    #[test]
    fn slope_matches_centered_difference(
        c in prop::collection::vec(-3.0f64..3.0, 4),
        z in -0.8f64..0.8,
    ) {
        let g = grid_1d(64);
        let p = g.interior()[5];
        let coeffs: Vec<ScalarField> = c.iter().map(|v| ScalarField::constant(g.len(), *v)).collect();
        let nl = Nonlinearity::new(&g, coeffs, 1.0).unwrap();
        let dz = 1e-4;
        let at = |v: f64| {
            let mut u = ScalarField::zeros(g.len());
            u[p] = v;
            nl.eval_a(&u).unwrap()[p]
        };
        let fd = (at(z + dz) - at(z - dz)) / (2.0 * dz);
        let exact = nl.dz_at(p, z, 1);
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }

    #[test]
    fn decomposition_splits_exactly(seed in any::<u64>(), two_d in any::<bool>()) {
        let g = if two_d { grid_2d(16) } else { grid_1d(48) };
        let a = random_potential(&g, &mut ChaCha8Rng::seed_from_u64(seed));
        let dec = decompose(&a, &g);
        let nodes = a.nodes();
        for r in 0..nodes.len() {
            for cidx in 0..nodes.len() {
                let (x, y) = (g.point(nodes[r]), g.point(nodes[cidx]));
                for d in 0..g.dim() {
                    let total = dec.sym.at(r, cidx)[d] + dec.anti.at(r, cidx)[d];
                    prop_assert!((total - a.at(r, cidx)[d]).abs() <= 1e-14);
                    prop_assert!(dec.sym.at(r, cidx)[d] == dec.sym.at(cidx, r)[d]);
                    prop_assert!(dec.anti.at(r, cidx)[d] == -dec.anti.at(cidx, r)[d]);
                }
                let dot = |v: &[f64]| v.iter().zip(x.iter().zip(y)).map(|(a, (p, q))| a * (q - p)).sum::<f64>();
                prop_assert!((dot(dec.anti_par.at(r, cidx)) - dot(dec.anti.at(r, cidx))).abs() <= 1e-13);
                prop_assert!(dot(dec.perp.at(r, cidx)).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn gauge_equivalence_is_reflexive_and_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let g = grid_1d(48);
        let a1 = random_potential(&g, &mut ChaCha8Rng::seed_from_u64(s1));
        let a2 = random_potential(&g, &mut ChaCha8Rng::seed_from_u64(s2));
        let q = ScalarField::constant(g.len(), 1.0);
        prop_assert!(gauge_equivalent((&a1, &q), (&a1, &q), &g, 0.5, 1e-12).unwrap());
        let fwd = gauge_equivalent((&a1, &q), (&a2, &q), &g, 0.5, 1e-8).unwrap();
        let back = gauge_equivalent((&a2, &q), (&a1, &q), &g, 0.5, 1e-8).unwrap();
        prop_assert_eq!(fwd, back);
        prop_assert_eq!(fwd, s1 == s2);
    }

    #[test]
    fn dn_text_round_trip_is_bit_exact(
        values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6),
        eps in 1e-6f64..1.0,
    ) {
        let m = DMatrix::from_column_slice(2, 3, &values);
        let d = DnData {
            meta: DnMeta {
                dimension: 2,
                nodes_per_axis: 20,
                s: 0.4,
                grid: "grid".into(),
                potential: "pot".into(),
                nonlinearity: "nl".into(),
                basis_w1: "w1".into(),
                basis_w2: "w2".into(),
            },
            order: 2,
            scheme: FdScheme::Central5,
            eps_base: eps,
            raw: vec![m.clone(); 7],
            measured: vec![m.clone(), m.scale(0.5)],
            direct: vec![m.scale(-1.0), m.clone()],
            estimate: vec![m.abs(), m.abs()],
            noise_floor: vec![eps, eps * eps],
        };
        prop_assert_eq!(DnData::from_text(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn field_csv_round_trip_is_bit_exact(values in prop::collection::vec(-1e6f64..1e6, 48)) {
        let g: Grid = grid_1d(48);
        let u = ScalarField(values);
        let all: Vec<usize> = (0..g.len()).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        std::fs::write(&path, fields_csv(&g, &all, &[("u", &u)])).unwrap();
        prop_assert_eq!(&read_fields_csv(&path, &g, &["u"]).unwrap()[0], &u);
    }
}

//! Partial Bell polynomials, binomials and finite-difference weights.
//!
//! The k-th derivative in `eps` of `a(x, u_eps)` at `eps = 0` with
//! `u_0 = 0` is `sum_m c_m(x) B_{k,m}(u1, ..., u_{k-m+1})`, which is how
//! the linearization cascade sources are built.

use crate::grid::ScalarField;

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Table `t[n][k] = B_{n,k}(x_1, ..., x_{n-k+1})` for `0 <= k <= n <= order`.
///
/// `xs[0]` is `x_1`. Uses `B_{n,k} = sum_{i=1}^{n-k+1} C(n-1, i-1) x_i B_{n-i,k-1}`.
pub fn bell_table(xs: &[f64], order: usize) -> Vec<Vec<f64>> {
    assert!(xs.len() >= order, "need x_1..x_order");
    let mut t = vec![vec![0.0; order + 1]; order + 1];
    t[0][0] = 1.0;
    for n in 1..=order {
        for k in 1..=n {
            let mut acc = 0.0;
            for i in 1..=(n - k + 1) {
                acc += binomial(n - 1, i - 1) * xs[i - 1] * t[n - i][k - 1];
            }
            t[n][k] = acc;
        }
    }
    t
}

pub fn partial_bell(n: usize, k: usize, xs: &[f64]) -> f64 {
    if k > n {
        return 0.0;
    }
    bell_table(xs, n)[n][k]
}

/// Nodewise `B_{n,k}(u_1, ..., u_{n-k+1})` for fields `us[0] = u_1, ...`.
pub fn bell_field(n: usize, k: usize, us: &[ScalarField]) -> ScalarField {
    let len = us.first().map_or(0, |u| u.len());
    if k > n || n == 0 {
        let v = if n == 0 && k == 0 { 1.0 } else { 0.0 };
        return ScalarField::constant(len, v);
    }
    let mut xs = vec![0.0; n];
    ScalarField(
        (0..len)
            .map(|p| {
                for (i, x) in xs.iter_mut().enumerate() {
                    *x = us.get(i).map_or(0.0, |u| u[p]);
                }
                bell_table(&xs, n)[n][k]
            })
            .collect(),
    )
}

/// Fornberg weights: `w[m][j]` approximates the m-th derivative at `x0` by
/// `sum_j w[m][j] f(points[j])`, for `m = 0..=max_order`.
pub fn fornberg_weights(x0: f64, points: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let np = points.len();
    let mut c = vec![vec![0.0; np]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = points[0] - x0;
    for i in 1..np {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = points[i] - x0;
        for j in 0..i {
            let c3 = points[i] - points[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(6, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn low_order_bell() {
        let x = [2.0, 3.0, 5.0, 7.0];
        assert_eq!(partial_bell(2, 2, &x), 4.0);
        assert_eq!(partial_bell(2, 1, &x), 3.0);
        // B_{3,2} = 3 x1 x2
        assert_eq!(partial_bell(3, 2, &x), 18.0);
        assert_eq!(partial_bell(3, 3, &x), 8.0);
        // B_{4,2} = 4 x1 x3 + 3 x2^2
        assert_eq!(partial_bell(4, 2, &x), 4.0 * 2.0 * 5.0 + 3.0 * 9.0);
        // B_{4,3} = 6 x1^2 x2
        assert_eq!(partial_bell(4, 3, &x), 6.0 * 4.0 * 3.0);
    }

    #[test]
    fn bell_sums_match_bell_numbers() {
        let ones = [1.0; 6];
        let t = bell_table(&ones, 6);
        let totals: Vec<f64> = (0..=6).map(|n| t[n].iter().sum()).collect();
        assert_eq!(totals, vec![1.0, 1.0, 2.0, 5.0, 15.0, 52.0, 203.0]);
    }

    #[test]
    fn faa_di_bruno_on_composition() {
        // d^k/de^k exp(sin e) at 0: outer derivatives all 1, inner x_i = sin^(i)(0)
        let inner = [1.0, 0.0, -1.0, 0.0, 1.0];
        let t = bell_table(&inner, 5);
        let d: Vec<f64> = (1..=5).map(|n| t[n].iter().sum()).collect();
        assert_eq!(d, vec![1.0, 1.0, 0.0, -3.0, -8.0]);
    }

    #[test]
    fn fornberg_central() {
        let pts = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fornberg_weights(0.0, &pts, 4);
        let second = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w[2].iter().zip(second) {
            assert!((a - b).abs() < 1e-14);
        }
        let fourth = [1.0, -4.0, 6.0, -4.0, 1.0];
        for (a, b) in w[4].iter().zip(fourth) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}

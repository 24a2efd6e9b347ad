//! Adaptive Gauss–Kronrod quadrature on finite and semi-infinite intervals.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// One 15-point Kronrod rule with the embedded 7-point Gauss estimate.
pub fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = WGK[7] * fc;
    let mut rg = WG[3] * fc;
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * hl, ((rk - rg) * hl).abs())
}

/// Globally adaptive bisection until the summed error estimate meets
/// `max(abs_tol, rel_tol * |I|)` or the interval budget is exhausted.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return Quad { value: 0.0, error: 0.0, intervals: 0 };
    }
    let (v, e) = gk15(f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || pieces.len() >= MAX_INTERVALS {
            return Quad { value, error, intervals: pieces.len() };
        }
        // bisect the piece with the largest error
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, be), (i, p)| if p.3 > be { (i, p.3) } else { (bi, be) });
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Quad { value, error, intervals: pieces.len() + 1 };
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Integral over consecutive breakpoints, each sub-interval handled adaptively.
pub fn integrate_breaks(f: &dyn Fn(f64) -> f64, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Quad {
    let mut out = Quad { value: 0.0, error: 0.0, intervals: 0 };
    let parts = breaks.len().saturating_sub(1).max(1) as f64;
    for w in breaks.windows(2) {
        let q = integrate(f, w[0], w[1], abs_tol / parts, rel_tol);
        out.value += q.value;
        out.error += q.error;
        out.intervals += q.intervals;
    }
    out
}

/// Integral over `[a, inf)` via `x = a + t / (1 - t)`.
pub fn integrate_to_infinity(f: &dyn Fn(f64) -> f64, a: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let om = 1.0 - t;
        let v = f(a + t / om) / (om * om);
        if v.is_finite() { v } else { 0.0 }
    };
    integrate(&g, 0.0, 1.0, abs_tol, rel_tol)
}

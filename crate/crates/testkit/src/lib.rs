//! Independent numerical oracles used by the `ghdgls` test suites.
//!
//! Nothing in here shares code with the library under test: quadrature is a
//! plain adaptive Gauss-Kronrod (7/15) scheme, derivatives are Richardson
//! extrapolated central differences and maximisation is a dense grid followed
//! by golden-section refinement.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

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

// Gauss weights for the 7-point rule living on XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Adaptive Gauss-Kronrod integral of `f` over the finite interval `[a, b]`.
///
/// Bisects the worst segment until the summed error estimate drops below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let mut heap = BinaryHeap::new();
    let first = gk15(&f, a, b);
    let mut total = first.value;
    let mut err = first.error;
    heap.push(first);
    let mut evals = 0usize;
    while err > abs_tol.max(rel_tol * total.abs()) && evals < 200_000 {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        evals += 1;
    }
    // Recompute the sum to avoid drift from the running updates.
    heap.iter().map(|s| s.value).sum()
}

/// Integral over `[a, ∞)` via the substitution `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - t;
        let x = a + t / one_minus;
        let v = f(x) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}

/// Integral of a positive-support function over `(0, ∞)`, split at `pivot`
/// so that mass near zero and the tail are both resolved.
pub fn integrate_positive<F: Fn(f64) -> f64>(f: F, pivot: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    // log-substitution on (0, pivot] handles integrable singularities at zero
    let lo = |u: f64| {
        let x = pivot * u.exp();
        let v = f(x) * x;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let head = integrate(lo, -60.0, 0.0, abs_tol, rel_tol);
    let tail = integrate_to_infinity(&f, pivot, abs_tol, rel_tol);
    head + tail
}

/// Integral over the whole real line, split at `center`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, center: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let right = integrate_to_infinity(|x| f(x), center, abs_tol, rel_tol);
    let left = integrate_to_infinity(|x| f(2.0 * center - x), center, abs_tol, rel_tol);
    left + right
}

/// `K_ν(x)` from the integral `∫_0^∞ exp(-x cosh t) cosh(ν t) dt`.
pub fn bessel_k_by_quadrature(nu: f64, x: f64) -> f64 {
    // integrand is negligible once x cosh t - |ν| t > x + 750
    let mut upper: f64 = 1.0;
    while x * upper.cosh() - nu.abs() * upper < x + 750.0 {
        upper *= 1.5;
    }
    // scale by e^{x} to keep values O(1) for large arguments
    let scaled = integrate(
        |t| (-x * (t.cosh() - 1.0)).exp() * (nu * t).cosh(),
        0.0,
        upper,
        0.0,
        1e-14,
    );
    scaled * (-x).exp()
}

/// Log of `K_ν(x)` from the same integral, stable when `K_ν(x)` is tiny or huge.
pub fn log_bessel_k_by_quadrature(nu: f64, x: f64) -> f64 {
    let a = nu.abs();
    // locate the maximum of the log-integrand  -x cosh t + a t  ->  sinh t = a/x
    let t_star = (a / x).asinh();
    let peak = -x * t_star.cosh() + a * t_star;
    let log_cosh = |t: f64| {
        let z = a * t;
        z + (0.5 * (1.0 + (-2.0 * z).exp())).ln()
    };
    let mut upper = t_star + 1.0;
    while -x * upper.cosh() + a * upper > peak - 750.0 {
        upper += 1.0 + 0.5 * upper;
    }
    let scaled = integrate(
        |t| (-x * t.cosh() + log_cosh(t) - peak).exp(),
        0.0,
        upper,
        0.0,
        1e-14,
    );
    scaled.ln() + peak
}

/// Central difference derivative refined by one Richardson step.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d1 = d(h);
    let d2 = d(0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

/// Second derivative by central differences refined by one Richardson step.
pub fn richardson_second_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let fx = f(x);
    let d = |h: f64| (f(x + h) - 2.0 * fx + f(x - h)) / (h * h);
    let d1 = d(h);
    let d2 = d(0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

/// Maximiser of a unimodal-ish `f` on `[lo, hi]`: dense grid, then golden
/// section on the bracketing cell.
pub fn grid_argmax<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize) -> f64 {
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..points {
        let v = f(lo + step * i as f64);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = (lo + step * (best + 1) as f64).min(hi);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-12 * (1.0 + a.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Small dense linear algebra used by oracles: Gauss-Jordan inverse with
/// partial pivoting on a row-major square matrix.
pub fn invert_dense(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = a[row][col];
                if factor != 0.0 {
                    for k in 0..2 * n {
                        a[row][k] -= factor * a[col][k];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant_dense(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        if p == 0.0 {
            return 0.0;
        }
        for row in col + 1..n {
            let factor = a[row][col] / p;
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    det
}

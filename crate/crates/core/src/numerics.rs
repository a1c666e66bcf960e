//! Small numerical kernels: logarithmic mean, compensated summation,
//! Gauss-Legendre panels, and the power-ratio helper with its log branch.

/// Logarithmic mean `(a - b) / (log a - log b)`, extended continuously by
/// `log_mean(a, a) = a` and `log_mean(0, b) = log_mean(a, 0) = 0`.
///
/// For comparable arguments the denominator is formed as
/// `log1p((a - b)/b)`, which does not cancel the way `log a - log b` does;
/// for extreme ratios the plain difference of logs is the accurate route.
/// Below `|a - b| <= 1e-8 (a + b)` the series in `r = (a - b)/m`,
/// `m = (a + b)/2` takes over before the quotient itself degenerates.
pub fn log_mean(a: f64, b: f64) -> f64 {
    debug_assert!(a >= 0.0 && b >= 0.0);
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if a == b {
        return a;
    }
    let d = a - b;
    let m = 0.5 * (a + b);
    if d.abs() <= 1e-8 * (a + b) {
        let r = d / m;
        let r2 = r * r;
        return m * (1.0 - r2 / 12.0 - r2 * r2 / 180.0);
    }
    if d.abs() <= 0.5 * b {
        d / (d / b).ln_1p()
    } else {
        d / (a.ln() - b.ln())
    }
}

/// `(x^(1-2g) - 1) / (1 - 2g)`, with the convention `log x` at `g = 1/2`.
///
/// The singular branch is taken only on an exact match of `gamma` with 0.5,
/// never through an epsilon window.
pub fn power_ratio(x: f64, gamma: f64) -> f64 {
    if gamma == 0.5 {
        x.ln()
    } else {
        let k = 1.0 - 2.0 * gamma;
        (x.powf(k) - 1.0) / k
    }
}

/// Compensated (Kahan) accumulator for long sums of small terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrates a smooth function over `[a, b]` with 32-point Gauss-Legendre
/// panels split at dyadic points, suited to integrands decaying like a power.
pub fn integrate_dyadic<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    assert!(b >= a && a > 0.0);
    let (nodes, weights) = gauss_legendre(32);
    let mut acc = KahanSum::new();
    let mut lo = a;
    while lo < b {
        let hi = (2.0 * lo).min(b);
        let c = 0.5 * (hi + lo);
        let h = 0.5 * (hi - lo);
        for (x, w) in nodes.iter().zip(&weights) {
            acc.add(w * h * f(c + h * x));
        }
        lo = hi;
    }
    acc.value()
}

/// log(sum exp(v_i)) over a slice, stable against under/overflow.
/// Returns negative infinity on an empty slice.
pub fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = vals.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

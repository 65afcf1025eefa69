//! Quadrature rules, root bracketing and small numerical helpers shared by the solvers.

use std::f64::consts::PI;

/// Gauss-Hermite rule for the standard normal weight: `E f(z) ~ sum w_i f(z_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes and weights: roots are bracketed on a fine scan of the orthonormal Hermite
    /// functions and polished by Newton steps.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite order must be positive");
        let nf = n as f64;
        let step = 0.1 / (2.0 * nf + 1.0).sqrt();
        let top = (2.0 * nf + 1.0).sqrt() + 1.0;
        let mut roots = Vec::with_capacity(n);
        if n % 2 == 1 {
            roots.push(0.0);
        }
        let mut a = if n % 2 == 1 { step } else { 0.0 };
        let mut fa = hermite_function(n, a).0;
        while roots.len() < n.div_ceil(2) && a < top {
            let b = a + step;
            let fb = hermite_function(n, b).0;
            if fa == 0.0 || fa.signum() != fb.signum() {
                roots.push(polish_root(n, a, b));
            }
            a = b;
            fa = fb;
        }
        assert_eq!(roots.len(), n.div_ceil(2), "Gauss-Hermite root scan failed for n = {n}");
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &x in &roots {
            let (_, deriv) = hermite_function(n, x);
            // Physicists' weight 2 / H'(x)^2 in orthonormal scaling, with the
            // exp(-x^2) factor restored from the function scaling.
            let w = 2.0 * (-x * x).exp() / (deriv * deriv) / PI.sqrt();
            pairs.push((x, w));
            if x != 0.0 {
                pairs.push((-x, w));
            }
        }
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let nodes = pairs.iter().map(|p| p.0 * std::f64::consts::SQRT_2).collect();
        let weights = pairs.iter().map(|p| p.1).collect();
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E f(mean + sd * Z)` for standard normal `Z`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mean: f64, sd: f64, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(mean + sd * z))
            .sum()
    }
}

/// Orthonormal Hermite function `h_n(x) = pi^{-1/4} H_n(x) e^{-x^2/2} / norm` and
/// `sqrt(2n) h_{n-1}(x)`, which equals the polynomial-part derivative at a root.
fn hermite_function(n: usize, x: f64) -> (f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut p1 = PIM4 * (-0.5 * x * x).exp();
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = x * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

fn polish_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let flo = hermite_function(n, lo).0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = hermite_function(n, mid).0;
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..20 {
        let (f, d) = hermite_function(n, x);
        let dx = f / d;
        x -= dx;
        if dx.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    /// `int_a^b f`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Below a few ulps of the partial sums, further splitting only chases rounding.
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Root of `f` in `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 {
            return Some(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Six-point Lagrange interpolation of samples on a uniform grid.
///
/// `values[i]` sits at `x0 + i * dx`. Points outside the grid are extended linearly
/// from the two outermost samples.
pub fn interp_uniform(values: &[f64], x0: f64, dx: f64, x: f64) -> f64 {
    interp_lagrange(values, x0, dx, x, 6)
}

/// Lagrange interpolation with a centered stencil of `points` samples.
pub fn interp_lagrange(values: &[f64], x0: f64, dx: f64, x: f64, points: usize) -> f64 {
    let n = values.len();
    debug_assert!(n >= points && points >= 2);
    let t = (x - x0) / dx;
    if t <= 0.0 {
        return values[0] + t * (values[1] - values[0]);
    }
    let last = (n - 1) as f64;
    if t >= last {
        return values[n - 1] + (t - last) * (values[n - 1] - values[n - 2]);
    }
    let half = (points / 2 - 1) as isize;
    let base = (t.floor() as isize - half).clamp(0, (n - points) as isize) as usize;
    let s = t - base as f64;
    if s == s.floor() && (s as usize) < points {
        return values[base + s as usize];
    }
    let mut acc = 0.0;
    for j in 0..points {
        let mut l = 1.0;
        for k in 0..points {
            if k != j {
                l *= (s - k as f64) / (j as f64 - k as f64);
            }
        }
        acc += l * values[base + j];
    }
    acc
}

//! Adaptive Gauss–Kronrod quadrature.
//!
//! Every integral in the multivariate model is a one-dimensional integral
//! over `s = log t` of a positive, unimodal integrand that is naturally
//! computed in log space. [`integrate_log_unimodal`] locates the mode,
//! brackets the region where the integrand is within `exp(TAIL_LOG_RATIO)` of
//! its peak, and runs a 7/15-point Gauss–Kronrod rule with adaptive
//! bisection on the rescaled integrand.
//!
//! The integrators work on fixed-size vectors of integrands so that ratios
//! (numerator and denominator of a conditional probability) can be computed
//! on one shared set of nodes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Integrand values below `peak + TAIL_LOG_RATIO` (log scale) are treated
/// as negligible when bracketing; `exp(-28) < 1e-12`.
pub const TAIL_LOG_RATIO: f64 = -28.0;

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

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Per-component relative tolerance.
    pub rel: f64,
    /// Absolute floor, expressed relative to the magnitude of component 0.
    pub abs_rel_to_first: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-10,
            abs_rel_to_first: 1e-15,
            max_subdivisions: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
    // Largest error relative to its component's share of the tolerance;
    // determines which panel is split next.
    priority: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl<const N: usize> Eq for Panel<N> {}
impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn kronrod_panel<const N: usize, F>(f: &F, a: f64, b: f64) -> ([f64; N], [f64; N])
where
    F: Fn(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut abs_k = [0.0; N];
    let mut fvals: [([f64; N], [f64; N]); 7] = [([0.0; N], [0.0; N]); 7];
    for c in 0..N {
        kron[c] = WGK[7] * fc[c];
        gauss[c] = WG[3] * fc[c];
        abs_k[c] = WGK[7] * fc[c].abs();
    }
    for (j, fv) in fvals.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for c in 0..N {
            kron[c] += WGK[j] * (f1[c] + f2[c]);
            abs_k[c] += WGK[j] * (f1[c].abs() + f2[c].abs());
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * (f1[c] + f2[c]);
            }
        }
        *fv = (f1, f2);
    }
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for c in 0..N {
        let mean = 0.5 * kron[c];
        let mut asc = WGK[7] * (fc[c] - mean).abs();
        for (j, (f1, f2)) in fvals.iter().enumerate() {
            asc += WGK[j] * ((f1[c] - mean).abs() + (f2[c] - mean).abs());
        }
        let resasc = asc * half.abs();
        let mut err = ((kron[c] - gauss[c]) * half).abs();
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        let resabs = abs_k[c] * half.abs();
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        value[c] = kron[c] * half;
        error[c] = err;
    }
    (value, error)
}

/// Adaptive 7/15-point Gauss–Kronrod integration of a vector-valued
/// integrand on a finite interval.
///
/// Fails with [`Error::Numeric`] if the requested accuracy is not reached
/// within `tol.max_subdivisions` bisections.
pub fn integrate<const N: usize, F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult<N>>
where
    F: Fn(f64) -> [f64; N],
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric(format!(
            "integration bounds must be finite, got [{a}, {b}]"
        )));
    }
    let mut evaluations = 0usize;
    let mut heap: BinaryHeap<Panel<N>> = BinaryHeap::new();
    let mut total = [0.0; N];
    let mut total_err = [0.0; N];

    let (v, e) = kronrod_panel(&f, a, b);
    evaluations += 15;
    let budget = |total: &[f64; N]| -> [f64; N] {
        let floor = tol.abs_rel_to_first * total[0].abs();
        let mut out = [0.0; N];
        for c in 0..N {
            out[c] = (tol.rel * total[c].abs()).max(floor).max(f64::MIN_POSITIVE);
        }
        out
    };
    let priority = |err: &[f64; N], budget: &[f64; N]| -> f64 {
        (0..N).map(|c| err[c] / budget[c]).fold(0.0, f64::max)
    };
    total.copy_from_slice(&v);
    total_err.copy_from_slice(&e);
    let bud = budget(&total);
    heap.push(Panel {
        a,
        b,
        value: v,
        error: e,
        priority: priority(&e, &bud),
    });

    let mut subdivisions = 0usize;
    loop {
        let bud = budget(&total);
        if (0..N).all(|c| total_err[c] <= bud[c]) {
            break;
        }
        if subdivisions >= tol.max_subdivisions {
            return Err(Error::Numeric(format!(
                "quadrature did not converge on [{a}, {b}] after {subdivisions} subdivisions \
                 (value {:?}, error {:?})",
                total, total_err
            )));
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel is at floating-point resolution; accept what we have.
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod_panel(&f, worst.a, mid);
        let (v2, e2) = kronrod_panel(&f, mid, worst.b);
        evaluations += 30;
        subdivisions += 1;
        for c in 0..N {
            total[c] += v1[c] + v2[c] - worst.value[c];
            total_err[c] += e1[c] + e2[c] - worst.error[c];
        }
        let bud = budget(&total);
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            priority: priority(&e1, &bud),
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            priority: priority(&e2, &bud),
        });
    }
    // Re-sum from panels to shed accumulated cancellation in the running total.
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for p in heap.iter() {
        for c in 0..N {
            value[c] += p.value[c];
            error[c] += p.error[c];
        }
    }
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

/// Result of a log-space integral: `log_value = log ∫ exp(g(s)) ds`.
#[derive(Debug, Clone, Copy)]
pub struct LogIntegral<const N: usize> {
    pub log_value: [f64; N],
    pub rel_error: [f64; N],
    pub mode: f64,
    pub bracket: (f64, f64),
}

/// Location of the maximum of a unimodal function on `(lo, hi)`.
///
/// Expands from `hint` with doubling steps until the function decreases,
/// then narrows the bracket by golden-section search. Returns `(argmax, max)`.
pub fn find_mode<F>(g: &F, lo: f64, hi: f64, hint: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    find_mode_tol(g, lo, hi, hint, 1e-7)
}

fn find_mode_tol<F>(g: &F, lo: f64, hi: f64, hint: f64, rel_tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let inside = |x: f64| -> f64 {
        let x = if lo.is_finite() { x.max(lo) } else { x };
        if hi.is_finite() {
            x.min(hi)
        } else {
            x
        }
    };
    let x0 = inside(hint);
    let f0 = g(x0);
    let mut step = 0.5;

    // Decide direction.
    let xr = inside(x0 + 1e-3);
    let direction = if g(xr) >= f0 { 1.0 } else { -1.0 };

    let mut a = x0;
    let mut b = x0;
    let mut fb = f0;
    let mut prev = x0;
    for _ in 0..200 {
        let next = inside(b + direction * step);
        let fn_ = g(next);
        if fn_ < fb || next == b {
            a = prev;
            b = next;
            break;
        }
        prev = b;
        b = next;
        fb = fn_;
        step *= 2.0;
    }
    let (mut left, mut right) = if a <= b { (a, b) } else { (b, a) };
    // Bracket [left, right] contains the maximum. Golden-section refine.
    let inv_phi = 0.618_033_988_749_894_9;
    let tol = rel_tol * (1.0 + left.abs().max(right.abs()));
    let mut c = right - inv_phi * (right - left);
    let mut d = left + inv_phi * (right - left);
    let mut fc = g(c);
    let mut fd = g(d);
    while right - left > tol {
        if fc >= fd {
            right = d;
            d = c;
            fd = fc;
            c = right - inv_phi * (right - left);
            fc = g(c);
        } else {
            left = c;
            c = d;
            fc = fd;
            d = left + inv_phi * (right - left);
            fd = g(d);
        }
    }
    let x = 0.5 * (left + right);
    let fx = g(x);
    // Edge maxima at a support bound.
    let mut best = (x, fx);
    for edge in [lo, hi] {
        if edge.is_finite() {
            let fe = g(edge);
            if fe > best.1 {
                best = (edge, fe);
            }
        }
    }
    best
}

fn expand_until_tail<F>(g: &F, mode: f64, peak: f64, bound: f64, direction: f64, first_step: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut step = first_step;
    let mut x = mode;
    for _ in 0..200 {
        let mut next = x + direction * step;
        if bound.is_finite() && (next - bound) * direction >= 0.0 {
            next = bound;
        }
        let v = g(next);
        if next == bound {
            return next;
        }
        if !(v >= peak + TAIL_LOG_RATIO) {
            return refine_tail(g, x, next, peak);
        }
        x = next;
        step *= 2.0;
    }
    x
}

/// Pulls a tail end point `outside` back towards `inside` while it stays
/// in the tail, so the doubling search overshoots by at most 1/8 of its
/// last step.
fn refine_tail<F>(g: &F, mut inside: f64, mut outside: f64, peak: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    for _ in 0..3 {
        let mid = 0.5 * (inside + outside);
        if g(mid) >= peak + TAIL_LOG_RATIO {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    outside
}

/// Integrates `exp(g_c(s))` for each component `c` over the support
/// `(lo, hi)`, where `g_0` dominates the others (`g_c ≤ g_0` pointwise)
/// and is unimodal.
///
/// The bracket and the adaptive partition are driven by `g_0`; every other
/// component is evaluated on the same nodes. `g` must return the log
/// integrands scaled by nothing; the peak of `g_0` is factored out
/// internally.
pub fn integrate_log_unimodal<const N: usize, F>(
    g: F,
    lo: f64,
    hi: f64,
    hint: f64,
    tol: Tolerance,
) -> Result<LogIntegral<N>>
where
    F: Fn(f64) -> [f64; N],
{
    let g0 = |s: f64| g(s)[0];
    let (mode, peak) = find_mode(&g0, lo, hi, hint);
    if !peak.is_finite() {
        return Err(Error::Numeric(format!(
            "log integrand has no finite peak (mode {mode}, value {peak})"
        )));
    }
    let left = expand_until_tail(&g0, mode, peak, lo, -1.0, 0.25);
    let right = expand_until_tail(&g0, mode, peak, hi, 1.0, 0.25);
    let scaled = |s: f64| -> [f64; N] {
        let v = g(s);
        let mut out = [0.0; N];
        for c in 0..N {
            out[c] = (v[c] - peak).exp();
        }
        out
    };
    let res = integrate(scaled, left, right, tol)?;
    let mut log_value = [0.0; N];
    let mut rel_error = [0.0; N];
    for c in 0..N {
        log_value[c] = peak + res.value[c].ln();
        rel_error[c] = if res.value[c] > 0.0 {
            res.error[c] / res.value[c]
        } else {
            f64::INFINITY
        };
    }
    Ok(LogIntegral {
        log_value,
        rel_error,
        mode,
        bracket: (left, right),
    })
}

/// Like [`integrate_log_unimodal`] on the whole real line, for integrands
/// that are analytic and decay at least exponentially in both directions.
///
/// Uses the trapezoidal rule on the bracketed region, halving the step
/// until successive sums agree to `tol.rel`; for such integrands the
/// trapezoidal rule converges exponentially in the number of nodes, so a
/// few dozen evaluations reach near machine precision. Falls back to the
/// adaptive rule if halving stalls.
///
/// `scale` is the width of the narrowest feature of the integrand (e.g.
/// `1/α` for a Gumbel factor of shape `α`); it sets the mode tolerance and
/// the first bracketing step.
pub fn integrate_log_smooth<const N: usize, F>(g: F, hint: f64, scale: f64, tol: Tolerance) -> Result<LogIntegral<N>>
where
    F: Fn(f64) -> [f64; N],
{
    let scale = if scale > 0.0 { scale.min(0.25) } else { 0.25 };
    let g0 = |s: f64| g(s)[0];
    let (mode, peak) = find_mode_tol(&g0, f64::NEG_INFINITY, f64::INFINITY, hint, 4e-3 * scale);
    if !peak.is_finite() {
        return Err(Error::Numeric(format!(
            "log integrand has no finite peak (mode {mode}, value {peak})"
        )));
    }
    let left = expand_until_tail(&g0, mode, peak, f64::NEG_INFINITY, -1.0, scale);
    let right = expand_until_tail(&g0, mode, peak, f64::INFINITY, 1.0, scale);
    let scaled = |s: f64| -> [f64; N] {
        let v = g(s);
        std::array::from_fn(|c| (v[c] - peak).exp())
    };
    let mut n = 16usize;
    let mut h = (right - left) / n as f64;
    let mut sum = [0.0; N];
    for k in 0..=n {
        let v = scaled(left + h * k as f64);
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        for c in 0..N {
            sum[c] += w * v[c];
        }
    }
    let mut prev: [f64; N] = std::array::from_fn(|c| sum[c] * h);
    for _ in 0..6 {
        // Add the midpoints of the current grid.
        for k in 0..n {
            let v = scaled(left + h * (k as f64 + 0.5));
            for c in 0..N {
                sum[c] += v[c];
            }
        }
        n *= 2;
        h *= 0.5;
        let cur: [f64; N] = std::array::from_fn(|c| sum[c] * h);
        // The error of the trapezoid rule on an analytic, rapidly decaying
        // integrand roughly squares with each halving, so the error of
        // `cur` is about the square of its change from `prev`.
        let floor = tol.abs_rel_to_first * cur[0].abs();
        let err: [f64; N] = std::array::from_fn(|c| {
            let d = (cur[c] - prev[c]).abs() / cur[0].abs();
            d * d * cur[0].abs()
        });
        let done = n >= 64 && (0..N).all(|c| err[c] <= 0.01 * (tol.rel * cur[c].abs() + floor));
        if done {
            let mut log_value = [0.0; N];
            let mut rel_error = [0.0; N];
            for c in 0..N {
                log_value[c] = peak + cur[c].ln();
                rel_error[c] = if cur[c] > 0.0 { err[c] / cur[c] } else { f64::INFINITY };
            }
            return Ok(LogIntegral {
                log_value,
                rel_error,
                mode,
                bracket: (left, right),
            });
        }
        prev = cur;
    }
    integrate_log_unimodal(g, f64::NEG_INFINITY, f64::INFINITY, mode, tol)
}

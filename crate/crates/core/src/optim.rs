//! Derivative-free minimization.
//!
//! The multivariate likelihoods are evaluated through quadrature, so their
//! gradients are only available through noisy finite differences. A
//! Nelder–Mead simplex with random multi-starts is the workhorse; a
//! bounded Brent search handles the one-dimensional profile problems of the
//! univariate fits.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::RngStreams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// Stop when `(f_max - f_min) / (|f_min| + 1e-12)` falls below this.
    pub f_rel_tol: f64,
    /// ... and every vertex lies within this distance of the best vertex.
    pub x_tol: f64,
    pub max_evaluations: usize,
    /// Edge length of the initial simplex, per coordinate.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            f_rel_tol: 1e-9,
            x_tol: 1e-7,
            max_evaluations: 20_000,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead minimization of `f` starting at `x0`.
///
/// Non-finite objective values are treated as `+∞`, which lets callers
/// express hard constraints by returning `f64::INFINITY`.
pub fn nelder_mead<F>(f: &F, x0: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let dim = n as f64;
    // Dimension-adaptive coefficients (Gao & Han) behave better than the
    // classic (1, 2, 0.5, 0.5) beyond a couple of dimensions.
    let (reflect, expand, contract, shrink) = if n >= 2 {
        (1.0, 1.0 + 2.0 / dim, 0.75 - 1.0 / (2.0 * dim), 1.0 - 1.0 / dim)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut evaluations = n + 1;
    let mut converged = false;

    let mut order: Vec<usize> = (0..=n).collect();
    while evaluations < opts.max_evaluations {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_best = values[best];
        let f_worst = values[worst];
        let spread = if f_worst.is_finite() {
            (f_worst - f_best).abs() / (f_best.abs() + 1e-12)
        } else {
            f64::INFINITY
        };
        let size = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.f_rel_tol && size <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for &idx in order.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += x / dim;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(reflect);
        let fr = eval(&xr);
        evaluations += 1;
        if fr < f_best {
            let xe = along(reflect * expand);
            let fe = eval(&xe);
            evaluations += 1;
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second_worst] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = along(reflect * contract);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-contract);
            let fc = eval(&xc);
            (xc, fc)
        };
        evaluations += 1;
        if fc < fr.min(f_worst) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for &idx in order.iter().skip(1) {
            for (x, a) in simplex[idx].iter_mut().zip(&anchor) {
                *x = a + shrink * (*x - a);
            }
            values[idx] = eval(&simplex[idx]);
            evaluations += 1;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evaluations,
        converged,
    }
}

/// Runs Nelder–Mead from `x0`, then restarts once from the optimum (a
/// collapsed simplex is the usual failure mode of the method).
pub fn nelder_mead_restarted<F>(f: &F, x0: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let first = nelder_mead(f, x0, opts);
    let mut restart_opts = *opts;
    restart_opts.initial_step = opts.initial_step * 0.2;
    restart_opts.max_evaluations = opts.max_evaluations.saturating_sub(first.evaluations).max(50);
    let second = nelder_mead(f, &first.x, &restart_opts);
    let evaluations = first.evaluations + second.evaluations;
    if second.value <= first.value {
        Minimum {
            evaluations,
            ..second
        }
    } else {
        Minimum {
            evaluations,
            ..first
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiStartOptions {
    /// Total number of starts, including the supplied initial point(s).
    pub starts: usize,
    /// Standard deviation of the Gaussian jitter applied to random starts.
    pub jitter: f64,
    pub seed: u64,
    pub simplex: SimplexOptions,
}

impl Default for MultiStartOptions {
    fn default() -> Self {
        Self {
            starts: 10,
            jitter: 0.5,
            seed: 0x5eed,
            simplex: SimplexOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartResult {
    pub best: Minimum,
    /// Objective value reached from each start, in start order.
    pub trace: Vec<f64>,
}

/// Minimizes `f` from several starting points and keeps the best result.
///
/// The first starts are the given `anchors`; the remaining ones are drawn
/// around the first anchor with Gaussian jitter. Starts run concurrently.
pub fn multi_start<F>(f: &F, anchors: &[Vec<f64>], opts: &MultiStartOptions) -> Result<MultiStartResult>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let Some(center) = anchors.first() else {
        return Err(Error::Config("multi-start needs at least one anchor".into()));
    };
    let streams = RngStreams::new(opts.seed, "multi-start");
    let mut starts: Vec<Vec<f64>> = anchors.to_vec();
    let mut draw = 0u64;
    while starts.len() < opts.starts.max(anchors.len()) {
        let mut rng: ChaCha20Rng = streams.stream(draw);
        draw += 1;
        let p: Vec<f64> = center
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c + opts.jitter * z
            })
            .collect();
        starts.push(p);
    }

    let results: Vec<Minimum> = starts
        .par_iter()
        .map(|s| nelder_mead_restarted(f, s, &opts.simplex))
        .collect();
    let trace: Vec<f64> = results.iter().map(|m| m.value).collect();
    let best = results
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Optimization {
            message: "no start reached a finite objective".into(),
            evaluations: best.evaluations,
            best: best.value,
        });
    }
    Ok(MultiStartResult { best, trace })
}

/// Brent's method for the minimum of `f` on `[a, b]`.
///
/// Returns `(x_min, f_min)`.
pub fn brent_minimize<F>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + CGOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Draws a uniform value in `(0, 1)`, never exactly 0.
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

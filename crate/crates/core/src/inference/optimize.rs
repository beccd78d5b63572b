//! Unconstrained minimisation with finite-difference derivatives.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::math;
use crate::par;

const GRADIENT_STEP: f64 = 1e-6;
const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Gradient max-norm at which the search stops.
    pub gradient: f64,
    /// Relative objective improvement below which a step counts as a stall.
    pub relative: f64,
    /// Gradient max-norm that still allows a stall to count as convergence.
    pub stall_gradient: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gradient: 1e-5,
            relative: 1e-9,
            stall_gradient: 1e-4,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

impl Minimum {
    pub fn gradient_norm(&self) -> f64 {
        max_norm(&self.gradient)
    }
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(math::abs(*x)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central-difference gradient with step `1e-6 (1 + |x_i|)`; the `2n`
/// evaluations run in parallel.
pub fn gradient<F>(f: &F, x: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    let values = par::map_indexed(2 * n, |k| {
        let i = k / 2;
        let h = GRADIENT_STEP * (1.0 + math::abs(x[i]));
        let mut y = x.to_vec();
        y[i] += if k % 2 == 0 { h } else { -h };
        f(&y)
    });
    (0..n)
        .map(|i| {
            let h = GRADIENT_STEP * (1.0 + math::abs(x[i]));
            (values[2 * i] - values[2 * i + 1]) / (2.0 * h)
        })
        .collect()
}

/// Four-point central-difference Hessian with step `1e-4 (1 + |x_i|)`,
/// evaluated for every ordered pair. Returns the raw matrix; callers
/// symmetrise.
pub fn hessian<F>(f: &F, x: &[f64]) -> Matrix
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    let h: Vec<f64> = x
        .iter()
        .map(|v| HESSIAN_STEP * (1.0 + math::abs(*v)))
        .collect();
    let values = par::map_indexed(4 * n * n, |k| {
        let (pair, corner) = (k / 4, k % 4);
        let (i, j) = (pair / n, pair % n);
        let mut y = x.to_vec();
        y[i] += if corner < 2 { h[i] } else { -h[i] };
        y[j] += if corner % 2 == 0 { h[j] } else { -h[j] };
        f(&y)
    });
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = &values[4 * (i * n + j)..4 * (i * n + j) + 4];
            out[(i, j)] = (v[0] - v[1] - v[2] + v[3]) / (4.0 * h[i] * h[j]);
        }
    }
    out
}

/// Largest `|a_ij - a_ji|`.
pub fn asymmetry(a: &Matrix) -> f64 {
    let n = a.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max(math::abs(a[(i, j)] - a[(j, i)]));
        }
    }
    worst
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    let mut s = a.clone();
    s.add_scaled(&a.transpose(), 1.0);
    s.scaled(0.5)
}

/// BFGS on the inverse Hessian with Armijo backtracking. Non-finite objective
/// values are treated as `+inf`.
pub fn bfgs<F>(f: &F, x0: &[f64], tol: &Tolerances) -> Minimum
where
    F: Fn(&[f64]) -> f64 + Sync,
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
    let mut evaluations = 1;
    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    let mut g = gradient(&eval, &x);
    evaluations += 2 * n;
    let initial_scale = |g: &[f64]| 1.0f64.min(1.0 / max_norm(g).max(f64::MIN_POSITIVE));
    let mut hinv = Matrix::identity(n).scaled(initial_scale(&g));
    let mut converged = false;
    let mut iterations = 0;
    let mut fresh = true;

    while iterations < tol.max_iterations {
        if max_norm(&g) < tol.gradient {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d = vec![0.0; n];
        hinv.left_mul_vec(&g, &mut d);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hinv = Matrix::identity(n).scaled(initial_scale(&g));
            fresh = true;
            d = g.iter().map(|v| -v * initial_scale(&g)).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let ft = eval(&trial);
            evaluations += 1;
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                converged = max_norm(&g) < tol.stall_gradient;
                break;
            }
            hinv = Matrix::identity(n).scaled(initial_scale(&g));
            fresh = true;
            continue;
        };
        let g_new = gradient(&eval, &x_new);
        evaluations += 2 * n;
        let improvement = (fx - f_new) / math::abs(fx).max(1.0);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * math::sqrt(dot(&s, &s) * dot(&y, &y)) {
            let mut hy = vec![0.0; n];
            hinv.left_mul_vec(&y, &mut hy);
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[(i, j)] +=
                        rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if improvement < tol.relative && max_norm(&g) < tol.stall_gradient {
            converged = true;
            break;
        }
    }
    if !converged && max_norm(&g) < tol.gradient {
        converged = true;
    }
    Minimum {
        x,
        value: fx,
        gradient: g,
        converged,
        iterations,
        evaluations,
    }
}

/// Nelder-Mead simplex search; convergence is judged on the spread of
/// objective values across the simplex.
pub fn nelder_mead<F>(f: &F, x0: &[f64], tol: &Tolerances) -> Minimum
where
    F: Fn(&[f64]) -> f64 + Sync,
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
    let mut simplex: Vec<Vec<f64>> = (0..=n)
        .map(|k| {
            let mut p = x0.to_vec();
            if k > 0 {
                p[k - 1] += 0.5 * (1.0 + math::abs(x0[k - 1]));
            }
            p
        })
        .collect();
    let mut values = par::map_indexed(n + 1, |k| eval(&simplex[k]));
    let mut evaluations = n + 1;
    let max_iter = tol.max_iterations * (n + 1) * 4;
    let mut iterations = 0;
    let mut converged = false;
    let centroid_of = |s: &[Vec<f64>], skip: usize| {
        let mut c = vec![0.0; n];
        for (k, p) in s.iter().enumerate() {
            if k != skip {
                c.iter_mut().zip(p).for_each(|(a, b)| *a += b / n as f64);
            }
        }
        c
    };
    let along = |c: &[f64], p: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(p).map(|(a, b)| a + t * (b - a)).collect()
    };

    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();
        let spread = values[n] - values[0];
        if spread.is_finite() && spread <= tol.relative * math::abs(values[0]).max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let c = centroid_of(&simplex, n);
        let reflected = along(&c, &simplex[n], -1.0);
        let fr = eval(&reflected);
        evaluations += 1;
        if fr < values[0] {
            let expanded = along(&c, &simplex[n], -2.0);
            let fe = eval(&expanded);
            evaluations += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let target = if fr < values[n] {
                along(&c, &reflected, 0.5)
            } else {
                along(&c, &simplex[n], 0.5)
            };
            let fc = eval(&target);
            evaluations += 1;
            if fc < values[n].min(fr) {
                simplex[n] = target;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for p in simplex.iter_mut().skip(1) {
                    *p = along(&best, p, 0.5);
                }
                let shrunk = par::map_indexed(n, |k| eval(&simplex[k + 1]));
                values[1..].copy_from_slice(&shrunk);
                evaluations += n;
            }
        }
    }
    let mut best = 0;
    for k in 1..=n {
        if values[k] < values[best] {
            best = k;
        }
    }
    let x = simplex[best].clone();
    let g = gradient(&eval, &x);
    Minimum {
        value: values[best],
        gradient: g,
        x,
        converged,
        iterations,
        evaluations: evaluations + 2 * n,
    }
}

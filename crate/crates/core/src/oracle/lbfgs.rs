//! Limited-memory BFGS with Armijo backtracking.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;


use crate::linalg::dot;

const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;

/// Minimizes `f` from `x` in place and returns the final value.
/// `f(x, grad)` returns the value and writes the gradient.
pub(crate) fn minimize(
    x: &mut [f64],
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    max_iter: usize,
    grad_tol: f64,
) -> f64 {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;
    while iterations < max_iter {
        if !fx.is_finite() || max_abs(&g) <= grad_tol {
            break;
        }
        iterations += 1;
        let mut d = two_loop(&g, &history);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        let mut step = if history.is_empty() {
            (1.0 / crate::linalg::norm2(&g)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACK {
            for i in 0..n {
                trial[i] = x[i] + step * d[i];
            }
            let ft = f(&trial, &mut g_trial);
            if ft.is_finite() && ft <= fx + ARMIJO * step * slope {
                let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-300 {
                    if history.len() == MEMORY {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                x.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                let improvement = fx - ft;
                fx = ft;
                accepted = true;
                if improvement <= 1e-16 * fx.abs().max(1.0) {
                    return fx;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if history.is_empty() {
                break;
            }
            history.clear();
        }
    }
    fx
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let value = minimize(
            &mut x,
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            1000,
            1e-10,
        );
        assert!(value < 1e-16, "{value}");
        assert!((x[0] - 1.0).abs() < 1e-7 && (x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let scales = [1.0, 10.0, 1e3, 1e5];
        let mut x = vec![1.0; 4];
        minimize(
            &mut x,
            |x, g| {
                let mut v = 0.0;
                for i in 0..4 {
                    g[i] = scales[i] * (x[i] - i as f64);
                    v += 0.5 * scales[i] * (x[i] - i as f64).powi(2);
                }
                v
            },
            500,
            1e-9,
        );
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - i as f64).abs() < 1e-8);
        }
    }
}

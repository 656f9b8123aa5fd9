//! FFT-backed linear convolution and an online solver for explicit discrete
//! Volterra recursions.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

const DIRECT_LIMIT: usize = 48;
const BLOCK: usize = 96;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Full linear convolution `c_k = Σ_j a_j b_{k-j}`, of length `|a| + |b| - 1`.
pub fn convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    if a.iter().all(|&x| x == 0.0) || b.iter().all(|&x| x == 0.0) {
        return vec![0.0; a.len() + b.len() - 1];
    }
    if a.len().min(b.len()) <= DIRECT_LIMIT {
        return convolve_direct(a, b);
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let pad = |x: &[f64]| -> Vec<Complex64> {
        (0..n).map(|k| Complex64::new(x.get(k).copied().unwrap_or(0.0), 0.0)).collect()
    };
    let mut fa = pad(a);
    let mut fb = pad(b);
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fwd = p.plan_fft_forward(n);
        let inv = p.plan_fft_inverse(n);
        fwd.process(&mut fa);
        fwd.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= *y;
        }
        inv.process(&mut fa);
        let scale = 1.0 / n as f64;
        fa[..out_len].iter().map(|z| z.re * scale).collect()
    })
}

fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

/// Solve an explicit Volterra recursion online in `O(n log² n)`.
///
/// For `m = 0..n` the caller's `update(m, s_m)` returns `(y_m, g_m)` where
/// `s_m = Σ_{j=1}^{m} kern[j]·g_{m-j}`; `kern[0]` is ignored. Returns `y`.
pub fn solve_volterra<F>(n: usize, kern: &[f64], mut update: F) -> Vec<f64>
where
    F: FnMut(usize, f64) -> (f64, f64),
{
    assert!(kern.len() >= n, "kernel shorter than the requested horizon");
    let mut y = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut acc = vec![0.0; n];
    solve_range(0, n, kern, &mut y, &mut g, &mut acc, &mut update);
    y
}

fn solve_range<F>(
    lo: usize,
    hi: usize,
    kern: &[f64],
    y: &mut [f64],
    g: &mut [f64],
    acc: &mut [f64],
    update: &mut F,
) where
    F: FnMut(usize, f64) -> (f64, f64),
{
    if hi <= lo {
        return;
    }
    if hi - lo <= BLOCK {
        for m in lo..hi {
            let mut s = acc[m];
            for i in lo..m {
                s += kern[m - i] * g[i];
            }
            let (ym, gm) = update(m, s);
            y[m] = ym;
            g[m] = gm;
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    solve_range(lo, mid, kern, y, g, acc, update);
    let c = convolve_full(&g[lo..mid], &kern[..hi - lo]);
    for m in mid..hi {
        acc[m] += c[m - lo];
    }
    solve_range(mid, hi, kern, y, g, acc, update);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct() {
        let a: Vec<f64> = (0..300).map(|k| ((k * 7919) % 97) as f64 / 97.0 - 0.3).collect();
        let b: Vec<f64> = (0..211).map(|k| ((k * 104729) % 89) as f64 / 89.0).collect();
        let f = convolve_full(&a, &b);
        let d = convolve_direct(&a, &b);
        assert_eq!(f.len(), d.len());
        for (x, y) in f.iter().zip(&d) {
            assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn volterra_solver_matches_direct_recursion() {
        let n = 1000;
        let kern: Vec<f64> = (0..n).map(|k| 0.3 / (1.0 + k as f64).powf(1.4)).collect();
        let f: Vec<f64> = (0..n).map(|k| (k as f64 * 0.01).cos()).collect();
        let fast = solve_volterra(n, &kern, |m, s| {
            let y = f[m] + s;
            (y, y)
        });
        let mut slow = vec![0.0; n];
        for m in 0..n {
            let mut s = 0.0;
            for j in 1..=m {
                s += kern[j] * slow[m - j];
            }
            slow[m] = f[m] + s;
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn nonlinear_recursion() {
        let n = 500;
        let kern: Vec<f64> = (0..n).map(|k| 0.01 / (1.0 + k as f64).sqrt()).collect();
        let fast = solve_volterra(n, &kern, |_, s| {
            let y = -0.5 + s;
            (y, y * y)
        });
        let mut slow = vec![0.0; n];
        for m in 0..n {
            let mut s = 0.0;
            for j in 1..=m {
                s += kern[j] * slow[m - j] * slow[m - j];
            }
            slow[m] = -0.5 + s;
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

//! Bracketed scalar root finding shared by the duty solver, curve
//! intersections and parameter-window searches.

use crate::error::Result;

/// Brent's method on a sign-changing bracket `[a, b]`.
///
/// Stops when the bracket is narrower than `xtol` or `|f| <= ftol`.
pub fn brent<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64, ftol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    debug_assert!(fa.signum() != fb.signum(), "brent needs a sign change");
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb.abs() <= ftol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b)?;
    }
    Ok(b)
}

/// Uniform grid of `n` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                lo * (1.0 - t) + hi * t
            })
            .collect(),
    }
}

/// Every sign change of `f` over `grid`, each polished by Brent.
///
/// Points where `f` fails are treated as gaps and never bracket a root. A
/// sign change whose polished `|f|` is not small compared with the bracket
/// values is a pole rather than a root and is dropped.
pub fn all_roots<F>(mut f: F, grid: &[f64], xtol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let vals: Vec<Option<f64>> = grid
        .iter()
        .map(|&x| f(x).ok().filter(|v| v.is_finite()))
        .collect();
    let mut out = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        let (Some(fa), Some(fb)) = (vals[i], vals[i + 1]) else {
            continue;
        };
        if fa == 0.0 {
            if out.last() != Some(&grid[i]) {
                out.push(grid[i]);
            }
            continue;
        }
        if fb == 0.0 || fa.signum() == fb.signum() {
            continue;
        }
        let x = brent(&mut f, grid[i], grid[i + 1], fa, fb, xtol, 0.0)?;
        let fx = f(x)?;
        if fx.abs() <= 1e-3 * fa.abs().max(fb.abs()) {
            out.push(x);
        }
    }
    if let Some(&Some(v)) = vals.last() {
        if v == 0.0 {
            out.push(*grid.last().unwrap());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cubic_root() {
        let f = |x: f64| Ok(x * x * x - 2.0 * x - 5.0);
        let r = brent(f, 2.0, 3.0, -1.0, 16.0, 1e-15, 0.0).unwrap();
        assert!((r - 2.0945514815423265).abs() < 1e-14);
    }

    #[test]
    fn reports_every_crossing_and_skips_poles() {
        let grid = linspace(0.05, 3.0, 60);
        let roots = all_roots(|x: f64| Ok((2.0 * x).sin()), &grid, 1e-14).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        let grid = linspace(0.1, 2.0, 40);
        let roots = all_roots(|x: f64| Ok(1.0 / (x - 1.01)), &grid, 1e-12).unwrap();
        assert!(roots.is_empty());
    }
}

//! Dense kernels for the small state matrices (N ≤ 8) used by every model.

use nalgebra::{DMatrix, DVector, Schur};
pub use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

// Padé [13/13] coefficients and the 1-norm bound below which no scaling is needed
// (Higham, "The scaling and squaring method for the matrix exponential revisited").
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn check_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

fn check_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn norm1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Diagonal `d` (powers of two) such that `D⁻¹ A D` has comparable row and
/// column norms off the diagonal. Companion-form compensators need this.
pub fn balance(a: &Matrix) -> Vector {
    let n = a.nrows();
    let mut d = Vector::from_element(n, 1.0);
    let mut b = a.clone();
    loop {
        let mut converged = true;
        for i in 0..n {
            let c: f64 = (0..n).filter(|&j| j != i).map(|j| b[(j, i)].abs()).sum();
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| b[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let (mut c2, mut r2, mut f) = (c, r, 1.0);
            while c2 < r2 / 2.0 {
                c2 *= 2.0;
                r2 /= 2.0;
                f *= 2.0;
            }
            while c2 >= 2.0 * r2 {
                c2 /= 2.0;
                r2 *= 2.0;
                f /= 2.0;
            }
            if c2 + r2 < 0.95 * (c + r) {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    b[(j, i)] *= f;
                    b[(i, j)] /= f;
                }
            }
        }
        if converged {
            return d;
        }
    }
}

/// `e^{A t}` by scaling and squaring with a degree-13 Padé approximant,
/// applied to the balanced matrix.
pub fn expm(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = check_square(a)?;
    if !t.is_finite() {
        return Err(Error::NonFinite("expm time argument".into()));
    }
    check_finite(a, "expm argument")?;
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let d = balance(a);
    let at = Matrix::from_fn(n, n, |i, j| a[(i, j)] * t * d[j] / d[i]);
    let norm = norm1(&at);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let x = at * 2f64.powi(-s);

    let id = Matrix::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let b = &PADE13;
    let u_inner = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9])
        + &x6 * b[7]
        + &x4 * b[5]
        + &x2 * b[3]
        + &id * b[1];
    let u = &x * u_inner;
    let v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8])
        + &x6 * b[6]
        + &x4 * b[4]
        + &x2 * b[2]
        + &id * b[0];

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(Matrix::from_fn(n, n, |i, j| r[(i, j)] * d[i] / d[j]))
}

/// `∫₀ᵗ e^{Aσ} dσ`, read off the exponential of the block matrix `[[A, I], [0, 0]]`.
///
/// Works for singular `A` (integrator poles) without forming an inverse.
pub fn expm_integral(a: &Matrix, t: f64) -> Result<Matrix> {
    Ok(expm_with_integral(a, t)?.1)
}

/// Both `e^{At}` and `∫₀ᵗ e^{Aσ} dσ` from a single block exponential.
pub fn expm_with_integral(a: &Matrix, t: f64) -> Result<(Matrix, Matrix)> {
    let n = check_square(a)?;
    let mut m = Matrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, n)).fill_with_identity();
    let e = expm(&m, t)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
    ))
}

/// All eigenvalues of a square matrix via real Schur decomposition.
pub fn eig(a: &Matrix) -> Result<Vec<Complex64>> {
    let n = check_square(a)?;
    check_finite(a, "eig argument")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000).ok_or(Error::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Solves `A X = B` by partial-pivot LU, rejecting numerically singular `A`.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    solve_ctx(a, b, "linear solve")
}

pub(crate) fn solve_ctx(a: &Matrix, b: &Matrix, ctx: &'static str) -> Result<Matrix> {
    let n = check_square(a)?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "{ctx}: {n}x{n} system with {} rows on the right",
            b.nrows()
        )));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let p = u[(i, i)].abs();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if n > 0 && (!(lo > 0.0) || lo <= 1e-14 * hi) {
        return Err(Error::Singular(ctx));
    }
    let x = lu.solve(b).ok_or(Error::Singular(ctx))?;
    check_finite(&x, ctx)?;
    Ok(x)
}

pub(crate) fn solve_vec(a: &Matrix, b: &Vector, ctx: &'static str) -> Result<Vector> {
    let x = solve_ctx(a, &Matrix::from_column_slice(b.len(), 1, b.as_slice()), ctx)?;
    Ok(Vector::from_column_slice(x.as_slice()))
}

/// Row-major constructor, convenient for transcribing printed matrices.
pub fn mat(rows: usize, cols: usize, entries: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, entries)
}

//! Dense real linear-algebra substrate.
//!
//! Thin wrappers over nalgebra's factorizations plus a Bartels–Stewart
//! Lyapunov solver that works directly on the real quasi-triangular Schur
//! form (2×2 blocks are handled as small Kronecker systems, no complex
//! arithmetic).

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const SCHUR_MAX_ITER: usize = 10_000;
const EIG_MAX_ITER: usize = 10_000;

/// Real Schur decomposition `m = q t qᵀ` with `t` quasi-upper-triangular.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub q: Matrix,
    pub t: Matrix,
}

/// A complex number as a plain pair; only used to report eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl SchurForm {
    /// Sizes (1 or 2) of the diagonal blocks, top to bottom.
    pub fn block_sizes(&self) -> Vec<usize> {
        schur_blocks(&self.t)
    }

    /// Eigenvalues read off the diagonal blocks.
    pub fn eigenvalues(&self) -> Vec<Eigenvalue> {
        let mut out = Vec::with_capacity(self.t.nrows());
        let mut i = 0;
        for size in self.block_sizes() {
            if size == 1 {
                out.push(Eigenvalue { re: self.t[(i, i)], im: 0.0 });
            } else {
                let (a, b, c, d) = (
                    self.t[(i, i)],
                    self.t[(i, i + 1)],
                    self.t[(i + 1, i)],
                    self.t[(i + 1, i + 1)],
                );
                let half_tr = 0.5 * (a + d);
                let disc = 0.25 * (a - d) * (a - d) + b * c;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    out.push(Eigenvalue { re: half_tr + s, im: 0.0 });
                    out.push(Eigenvalue { re: half_tr - s, im: 0.0 });
                } else {
                    let s = (-disc).sqrt();
                    out.push(Eigenvalue { re: half_tr, im: s });
                    out.push(Eigenvalue { re: half_tr, im: -s });
                }
            }
            i += size;
        }
        out
    }
}

fn schur_blocks(t: &Matrix) -> Vec<usize> {
    let n = t.nrows();
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            sizes.push(2);
            i += 2;
        } else {
            sizes.push(1);
            i += 1;
        }
    }
    sizes
}

fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure(format!("{what}: non-finite entries")))
    }
}

fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!(
            "{what}: expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Real Schur decomposition.
///
/// Negligible subdiagonal entries are flushed to exact zeros so the block
/// structure of `t` can be read off unambiguously.
pub fn real_schur(m: &Matrix) -> Result<SchurForm> {
    ensure_square(m, "real_schur")?;
    ensure_finite(m, "real_schur")?;
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("real Schur QR iteration did not converge".into()))?;
    let (q, mut t) = schur.unpack();
    ensure_finite(&t, "real_schur")?;
    for j in 0..n {
        for i in (j + 2)..n {
            t[(i, j)] = 0.0;
        }
    }
    for i in 0..n.saturating_sub(1) {
        let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        if t[(i + 1, i)].abs() <= f64::EPSILON * scale {
            t[(i + 1, i)] = 0.0;
        }
    }
    // Two consecutive nonzero subdiagonals would mean a 3×3 unreduced block.
    for i in 0..n.saturating_sub(2) {
        if t[(i + 1, i)] != 0.0 && t[(i + 2, i + 1)] != 0.0 {
            return Err(Error::NumericalFailure(
                "real Schur form has an unreduced block larger than 2x2".into(),
            ));
        }
    }
    Ok(SchurForm { q, t })
}

/// Eigenvalues of a general square matrix.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Eigenvalue>> {
    Ok(real_schur(m)?.eigenvalues())
}

/// Largest real part among the eigenvalues of `a`.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Solves `T_ii Y + Y T_jjᵀ = G` for a block of size p×q (p, q ∈ {1, 2}).
fn solve_block(tii: &Matrix, tjj: &Matrix, g: &Matrix) -> Result<Matrix> {
    let p = tii.nrows();
    let q = tjj.nrows();
    if p == 1 && q == 1 {
        let d = tii[(0, 0)] + tjj[(0, 0)];
        let scale = tii[(0, 0)].abs() + tjj[(0, 0)].abs();
        if d.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) || d == 0.0 {
            return Err(Error::SolverDegenerate(
                "eigenvalue pair sums to zero; Lyapunov operator is singular".into(),
            ));
        }
        return Ok(Matrix::from_element(1, 1, g[(0, 0)] / d));
    }
    // Column-major vec: vec(T Y + Y Sᵀ) = (I ⊗ T + S ⊗ I) vec(Y).
    let ip = Matrix::identity(p, p);
    let iq = Matrix::identity(q, q);
    let op = iq.kronecker(tii) + tjj.kronecker(&ip);
    let rhs = Vector::from_column_slice(g.as_slice());
    let scale = op.amax().max(f64::MIN_POSITIVE);
    let lu = op.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() <= (1e-14 * scale).powi((p * q) as i32) {
        return Err(Error::SolverDegenerate(
            "eigenvalue pair sums to zero; Lyapunov operator is singular".into(),
        ));
    }
    let y = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SolverDegenerate("singular block in Bartels–Stewart".into()))?;
    Ok(Matrix::from_column_slice(p, q, y.as_slice()))
}

/// Solves `T Y + Y Tᵀ = F` for quasi-upper-triangular `T`.
fn solve_quasi_triangular(t: &Matrix, f: &Matrix) -> Result<Matrix> {
    let n = t.nrows();
    let sizes = schur_blocks(t);
    let mut starts = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for s in &sizes {
        starts.push(acc);
        acc += s;
    }
    let nb = sizes.len();
    let mut y = Matrix::zeros(n, n);
    for bi in (0..nb).rev() {
        let (i0, p) = (starts[bi], sizes[bi]);
        let tii = t.view((i0, i0), (p, p)).into_owned();
        for bj in (0..nb).rev() {
            let (j0, q) = (starts[bj], sizes[bj]);
            let tjj = t.view((j0, j0), (q, q)).into_owned();
            let mut g = f.view((i0, j0), (p, q)).into_owned();
            let below = i0 + p;
            if below < n {
                g -= t.view((i0, below), (p, n - below)) * y.view((below, j0), (n - below, q));
            }
            let right = j0 + q;
            if right < n {
                g -= y.view((i0, right), (p, n - right))
                    * t.view((j0, right), (q, n - right)).transpose();
            }
            let blk = solve_block(&tii, &tjj, &g)?;
            y.view_mut((i0, j0), (p, q)).copy_from(&blk);
        }
    }
    Ok(y)
}

/// Returns `(m + mᵀ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Solves the Lyapunov equation `a X + X aᵀ + w = 0` by Bartels–Stewart.
///
/// `a` need not be stable, only free of eigenvalue pairs with λᵢ + λⱼ = 0.
/// For stable `a` and `w ⪰ 0` the solution is positive semidefinite.
pub fn lyap_solve(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    ensure_square(a, "lyap_solve")?;
    if w.shape() != a.shape() {
        return Err(Error::InvalidModel(format!(
            "lyap_solve: right-hand side is {}x{}, expected {}x{}",
            w.nrows(),
            w.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(w, "lyap_solve")?;
    let schur = real_schur(a)?;
    let eigs = schur.eigenvalues();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for (i, li) in eigs.iter().enumerate() {
        for lj in &eigs[i..] {
            let re = li.re + lj.re;
            let im = li.im + lj.im;
            if re.hypot(im) <= 1e-13 * scale {
                return Err(Error::SolverDegenerate(format!(
                    "eigenvalues {:.3e}{:+.3e}i and {:.3e}{:+.3e}i sum to ~0 (unstable or marginal)",
                    li.re, li.im, lj.re, lj.im
                )));
            }
        }
    }
    let q = &schur.q;
    let f = -(q.transpose() * w * q);
    let y = solve_quasi_triangular(&schur.t, &f)?;
    let x = symmetrize(&(q * y * q.transpose()));
    ensure_finite(&x, "lyap_solve")?;
    Ok(x)
}

/// Frobenius-norm residual `‖aX + Xaᵀ + w‖`.
pub fn lyap_residual(a: &Matrix, x: &Matrix, w: &Matrix) -> f64 {
    (a * x + x * a.transpose() + w).norm()
}

/// Symmetric eigen-decomposition with eigenvalues ascending.
///
/// Returns `(values, vectors)` where column `i` of `vectors` belongs to
/// `values[i]`.
pub fn eig_sym(s: &Matrix) -> Result<(Vector, Matrix)> {
    ensure_square(s, "eig_sym")?;
    ensure_finite(s, "eig_sym")?;
    let eig = SymmetricEigen::try_new(symmetrize(s), f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(s: &Matrix) -> Result<f64> {
    let (vals, _) = eig_sym(s)?;
    Ok(vals[vals.len() - 1])
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(s: &Matrix) -> Result<f64> {
    let (vals, _) = eig_sym(s)?;
    Ok(vals[0])
}

/// Matrix exponential `e^{a t}` (scaling and squaring, Padé 13).
pub fn matexp(a: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square(a, "matexp")?;
    if !t.is_finite() {
        return Err(Error::NumericalFailure("matexp: non-finite time".into()));
    }
    ensure_finite(a, "matexp")?;
    if t == 0.0 {
        return Ok(Matrix::identity(a.nrows(), a.ncols()));
    }
    let at = a * t;
    if at.norm() > 700.0 * (a.nrows() as f64) {
        // Guard before nalgebra squares its way into inf/NaN.
        let r = spectral_abscissa(&at)?;
        if r > 700.0 {
            return Err(Error::NumericalFailure("matexp: overflow for large ‖a·t‖".into()));
        }
    }
    let e = at.exp();
    ensure_finite(&e, "matexp")?;
    Ok(e)
}

/// Cholesky-based positive-definiteness test.
///
/// True iff every pivot exceeds `tol·‖s‖_F` (and is strictly positive).
pub fn is_spd(s: &Matrix, tol: f64) -> bool {
    if !s.is_square() || s.nrows() == 0 || !s.iter().all(|v| v.is_finite()) {
        return false;
    }
    let n = s.nrows();
    let threshold = tol * s.norm();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= threshold || d <= 0.0 {
            return false;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = 0.5 * (s[(i, j)] + s[(j, i)]);
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    true
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(s: &Matrix) -> Result<Matrix> {
    let chol = nalgebra::Cholesky::new(symmetrize(s))
        .ok_or_else(|| Error::NumericalFailure("matrix is not positive definite".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Singular values, descending.
pub fn singular_values(m: &Matrix) -> Vector {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vector::zeros(0);
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Vector::from_vec(sv)
}

/// Largest singular value (spectral norm).
pub fn sigma_max(m: &Matrix) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

//! Dense complex linear algebra helpers used throughout the crate.
//!
//! Everything here is a thin, deterministic layer over LAPACK (via
//! `ndarray-linalg`): fixed eigenpair ordering, phase-fixed Haar sampling,
//! SVD-based rank decisions. All routines operate on `Complex64` dense
//! matrices; the block sizes in this crate stay small (≲ 10³), so dense is
//! the right tradeoff.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, EigVals, SVD, UPLO};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

/// Real number as a complex scalar.
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn czeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros((rows, cols))
}

pub fn ceye(n: usize) -> CMat {
    CMat::eye(n)
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Kronecker product, row index of `a` slower.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = czeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let z = a[(i, j)];
            if z != C64::ZERO {
                for k in 0..br {
                    for l in 0..bc {
                        out[(i * br + k, j * bc + l)] = z * b[(k, l)];
                    }
                }
            }
        }
    }
    out
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest singular value; zero for empty matrices.
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let (_, s, _) = a.svd(false, false).expect("svd failed");
    s.iter().cloned().fold(0.0, f64::max)
}

/// Smallest eigenvalue of the Hermitian part (a + a†)/2.
pub fn herm_min_eig(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let h = (a + &dagger(a)).mapv(|z| z * c(0.5));
    let (vals, _) = h.eigh(UPLO::Lower).expect("eigh failed");
    vals.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Dimension of the nullspace, decided by a relative singular value cutoff.
pub fn nullspace_dim(a: &CMat, tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return a.ncols();
    }
    let (_, s, _) = a.svd(false, false).expect("svd failed");
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * smax.max(1.0);
    a.ncols() - s.iter().filter(|&&x| x > cutoff).count()
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the R
/// diagonal phases absorbed into Q. Deterministic under a seeded generator.
pub fn haar_unitary<R: Rng>(n: usize, rng: &mut R) -> CMat {
    use ndarray_linalg::QR;
    if n == 0 {
        return czeros(0, 0);
    }
    let mut g = czeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[(i, j)] = C64::new(re, im) / (2.0f64).sqrt();
        }
    }
    let (q, r) = g.qr().expect("qr failed");
    let mut u = q;
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0) };
        for i in 0..n {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// Phase in (−π, π] with values within 1e-9 of −π snapped to +π, so that
/// real negative eigenvalues sort deterministically regardless of rounding.
pub fn canonical_arg(z: C64) -> f64 {
    let a = z.arg();
    if a < -std::f64::consts::PI + 1e-9 {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

fn spectral_order(x: C64, y: C64) -> std::cmp::Ordering {
    let (nx, ny) = (x.norm(), y.norm());
    if (nx - ny).abs() > 1e-10 * nx.max(ny).max(1.0) {
        ny.partial_cmp(&nx).unwrap()
    } else {
        canonical_arg(x).partial_cmp(&canonical_arg(y)).unwrap()
    }
}

/// Eigenvalues in a fixed order: modulus descending (ties resolved by phase
/// ascending).
pub fn eigvals_sorted(a: &CMat) -> Result<Vec<C64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Structure(format!(
            "eigvals on non-square matrix {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let vals = a.eigvals()?;
    let mut v: Vec<C64> = vals.to_vec();
    v.sort_by(|x, y| spectral_order(*x, *y));
    Ok(v)
}

pub fn spectral_radius(a: &CMat) -> Result<f64> {
    Ok(eigvals_sorted(a)?.first().map(|z| z.norm()).unwrap_or(0.0))
}

/// Eigenpairs in the same fixed order as [`eigvals_sorted`], each vector
/// normalized and phase-fixed (largest-modulus entry made real positive).
pub fn eig_sorted(a: &CMat) -> Result<Vec<(C64, CVec)>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Structure("eig on non-square matrix".into()));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (vals, vecs) = a.eig()?;
    let mut pairs: Vec<(C64, CVec)> = vals
        .iter()
        .enumerate()
        .map(|(j, &l)| (l, vecs.column(j).to_owned()))
        .collect();
    for (_, v) in pairs.iter_mut() {
        normalize_phase(v);
    }
    pairs.sort_by(|x, y| spectral_order(x.0, y.0));
    Ok(pairs)
}

/// Normalize to unit Euclidean norm and rotate so the largest-modulus entry
/// is real positive.
pub fn normalize_phase(v: &mut CVec) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let mut best = 0usize;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() {
            best = i;
        }
    }
    let phase = v[best] / v[best].norm();
    let scale = phase.conj() / c(norm);
    v.mapv_inplace(|z| z * scale);
}

/// Gram–Schmidt against a strictly positive diagonal weight (the inner
/// product is ⟨x,y⟩ = Σ_i g_i x_i conj(y_i)). Vectors that become numerically
/// dependent are dropped.
pub fn gram_schmidt_weighted(vecs: &[CVec], g: &[f64], tol: f64) -> Vec<CVec> {
    let inner = |x: &CVec, y: &CVec| -> C64 {
        x.iter()
            .zip(y.iter())
            .zip(g.iter())
            .map(|((a, b), &w)| a * b.conj() * c(w))
            .sum()
    };
    let mut out: Vec<CVec> = Vec::new();
    for v in vecs {
        let mut w = v.clone();
        for u in &out {
            let coef = inner(&w, u);
            w = &w - &u.mapv(|z| z * coef);
        }
        let n2 = inner(&w, &w).re;
        if n2.sqrt() > tol {
            let mut w = w.mapv(|z| z / c(n2.sqrt()));
            normalize_phase(&mut w);
            // phase fix breaks weighted normalization only by a unit scalar
            out.push(w);
        }
    }
    out
}

/// n×n matrix from an entry function.
pub fn cmat_from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> CMat {
    let mut m = czeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = f(i, j);
        }
    }
    m
}

/// Integer matrix product for adjacency data.
pub fn mat_mul_usize(a: &Array2<usize>, b: &Array2<usize>) -> Array2<usize> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    assert_eq!(ac, br, "adjacency product shape mismatch");
    let mut out = Array2::<usize>::zeros((ar, bc));
    for i in 0..ar {
        for j in 0..bc {
            let mut s = 0;
            for k in 0..ac {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

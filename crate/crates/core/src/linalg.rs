//! Small complex linear-algebra helpers on top of `nalgebra`.

use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let d = a - a.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Negative eigenvalues down to `-1e-12·‖R‖` are clipped to zero; anything
/// more negative is reported as a factorization failure.
pub fn psd_sqrt(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let (vals, vecs) = hermitian_eigen(a);
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut out = CMat::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam < -tol {
            return Err(Error::Factorization(format!(
                "eigenvalue {lam:e} below -{tol:e}"
            )));
        }
        let s = lam.max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        let v = vecs.column(k);
        out += (&v * v.adjoint()) * C64::new(s, 0.0);
    }
    Ok(out)
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Orthonormal basis of the column space of `a`.
///
/// Columns whose singular value falls below `1e-12·σ_max` are dropped.
pub fn orthonormal_basis(a: &CMat) -> CMat {
    let (rows, cols) = a.shape();
    if cols == 0 || rows == 0 {
        return CMat::zeros(rows, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return CMat::zeros(rows, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-12 * smax)
        .collect();
    let mut basis = CMat::zeros(rows, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        basis.set_column(dst, &u.column(src));
    }
    basis
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(a: &CMat, what: &'static str) -> Result<CMat> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite(what))
}

/// Inverse of a Hermitian PSD matrix after adding `rel·tr(A)/n` to the diagonal.
pub fn regularized_inverse(a: &CMat, rel: f64, what: &'static str) -> Result<CMat> {
    let n = a.nrows();
    let tr: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let eps = rel * tr / n.max(1) as f64;
    let mut m = hermitian_part(a);
    for i in 0..n {
        m[(i, i)] += C64::new(eps, 0.0);
    }
    hpd_inverse(&m, what)
}

/// `x^H A x` for Hermitian `A`, returned as a real number.
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    x.dotc(&(a * x)).re
}

pub fn cvec(values: &[C64]) -> CVec {
    CVec::from_column_slice(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream};

    fn random_psd(n: usize, rank: usize, seed: u64) -> CMat {
        let mut rng = stream(seed, "psd", &[]);
        let g = CMat::from_fn(n, rank, |_, _| complex_normal(&mut rng));
        &g * g.adjoint()
    }

    #[test]
    fn sqrt_squares_back() {
        let r = random_psd(5, 3, 1);
        let s = psd_sqrt(&r).unwrap();
        let err = (&s * &s - &r).norm() / r.norm();
        assert!(err < 1e-10, "{err}");
        assert!(hermitian_defect(&s) < 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let mut r = CMat::identity(3, 3);
        r[(2, 2)] = C64::new(-0.5, 0.0);
        assert!(psd_sqrt(&r).is_err());
    }

    #[test]
    fn basis_spans_and_is_orthonormal() {
        let mut rng = stream(3, "basis", &[]);
        let mut a = CMat::from_fn(6, 3, |_, _| complex_normal(&mut rng));
        // third column is a combination of the first two
        let c = a.column(0) * C64::new(0.3, -1.0) + a.column(1) * C64::new(2.0, 0.5);
        a.set_column(2, &c);
        let u = orthonormal_basis(&a);
        assert_eq!(u.ncols(), 2);
        let gram = u.adjoint() * &u;
        assert!((gram - CMat::identity(2, 2)).norm() < 1e-12);
        let resid = &a - &u * (u.adjoint() * &a);
        assert!(resid.norm() < 1e-10 * a.norm());
    }
}

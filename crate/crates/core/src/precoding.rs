//! Centralized unit-norm RZF precoders for the UEs and the null-space
//! sensing precoder.

use crate::linalg::{orthonormal_basis, CMat, CVec};
use crate::{Error, Result, C64};

/// Precoders of one realization. Index 0 is the sensing precoder.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub w: Vec<CVec>,
    /// `W_k = [w_{0,k} … w_{N_ue,k}]` per transmit AP.
    pub per_ap: Vec<CMat>,
}

impl PrecoderSet {
    pub fn new(sensing: CVec, comm: Vec<CVec>, antennas_per_ap: usize) -> Result<Self> {
        let mut w = Vec::with_capacity(comm.len() + 1);
        w.push(sensing);
        w.extend(comm);
        let per_ap = split_per_ap(&w, antennas_per_ap)?;
        Ok(Self { w, per_ap })
    }

    /// Communication-only set with a zero sensing column.
    pub fn without_sensing(comm: Vec<CVec>, antennas_per_ap: usize) -> Result<Self> {
        let n = comm.first().map_or(0, |v| v.len());
        Self::new(CVec::zeros(n), comm, antennas_per_ap)
    }
}

/// `w_i = normalize((Σ_j ĥ_j ĥ_jᴴ + δI)^{-1} ĥ_i)`.
pub fn rzf_precoders(estimates: &[CVec], delta: f64) -> Result<Vec<CVec>> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::NonPositive { what: "RZF regularization", value: delta });
    }
    let Some(first) = estimates.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    let mut gram = CMat::identity(n, n) * C64::new(delta, 0.0);
    for h in estimates {
        if h.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: h.len() });
        }
        gram += h * h.adjoint();
    }
    let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite("RZF Gram matrix"))?;
    let mut rhs = CMat::zeros(n, estimates.len());
    for (i, h) in estimates.iter().enumerate() {
        rhs.set_column(i, h);
    }
    let sol = chol.solve(&rhs);
    Ok((0..estimates.len())
        .map(|i| {
            let v: CVec = sol.column(i).into_owned();
            let norm = v.norm();
            if norm > 0.0 {
                v / C64::new(norm, 0.0)
            } else {
                v
            }
        })
        .collect())
}

/// `w_0 = normalize((I − UUᴴ)h_0)` with `U` spanning the UE estimates.
pub fn zf_sensing_precoder(estimates: &[CVec], h0: &CVec) -> Result<CVec> {
    let n = h0.len();
    let mut span = CMat::zeros(n, estimates.len());
    for (i, h) in estimates.iter().enumerate() {
        if h.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: h.len() });
        }
        span.set_column(i, h);
    }
    let u = orthonormal_basis(&span);
    let mut v = h0 - &u * (u.adjoint() * h0);
    // a second projection pass removes round-off left by the first
    v -= &u * (u.adjoint() * &v);
    let projected = v.norm();
    let total = h0.norm();
    if projected < 1e-10 * total || total == 0.0 {
        return Err(Error::DegenerateNullspace { projected, total });
    }
    Ok(v / C64::new(projected, 0.0))
}

/// Split collective precoders into the per-AP matrices `W_k`.
pub fn split_per_ap(w: &[CVec], antennas_per_ap: usize) -> Result<Vec<CMat>> {
    let Some(first) = w.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    if antennas_per_ap == 0 || n % antennas_per_ap != 0 {
        return Err(Error::LengthMismatch { expected: antennas_per_ap, got: n });
    }
    for v in w {
        if v.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: v.len() });
        }
    }
    let m = antennas_per_ap;
    Ok((0..n / m)
        .map(|k| CMat::from_fn(m, w.len(), |row, col| w[col][k * m + row]))
        .collect())
}

/// Reassemble collective vectors from per-AP blocks.
pub fn join_per_ap(blocks: &[CMat]) -> Vec<CVec> {
    let Some(first) = blocks.first() else {
        return Vec::new();
    };
    let m = first.nrows();
    (0..first.ncols())
        .map(|col| CVec::from_fn(m * blocks.len(), |idx, _| blocks[idx / m][(idx % m, col)]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream};

    fn random_vecs(n: usize, count: usize, seed: u64) -> Vec<CVec> {
        let mut rng = stream(seed, "prec", &[]);
        (0..count).map(|_| CVec::from_fn(n, |_, _| complex_normal(&mut rng))).collect()
    }

    #[test]
    fn single_user_rzf_is_matched_filter() {
        let h = random_vecs(6, 1, 1);
        let w = rzf_precoders(&h, 0.3).unwrap();
        let coll = w[0].dotc(&h[0]).norm() / h[0].norm();
        assert!((coll - 1.0).abs() < 1e-10);
        assert!((w[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rzf_matches_linear_solve() {
        let h = random_vecs(5, 2, 2);
        let delta = 0.7;
        let w = rzf_precoders(&h, delta).unwrap();
        let mut a = CMat::identity(5, 5) * C64::new(delta, 0.0);
        for v in &h {
            a += v * v.adjoint();
        }
        for i in 0..2 {
            let x = a.clone().lu().solve(&h[i]).unwrap();
            let x = &x / C64::new(x.norm(), 0.0);
            assert!((&x - &w[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn zf_examples() {
        let mut h0 = CVec::zeros(4);
        h0[0] = C64::new(1.0, 0.5);
        h0[1] = C64::new(-0.2, 0.0);
        let mut e = CVec::zeros(4);
        e[2] = C64::new(1.0, 0.0);
        let w0 = zf_sensing_precoder(&[e], &h0).unwrap();
        assert!((&w0 - &h0 / C64::new(h0.norm(), 0.0)).norm() < 1e-14);

        let est = random_vecs(8, 3, 4);
        let h0 = random_vecs(8, 1, 5).remove(0);
        let w0 = zf_sensing_precoder(&est, &h0).unwrap();
        for h in &est {
            assert!(h.dotc(&w0).norm() <= 1e-10 * h.norm());
        }

        let full = random_vecs(4, 4, 6);
        assert!(matches!(
            zf_sensing_precoder(&full, &h0.rows(0, 4).into_owned()),
            Err(Error::DegenerateNullspace { .. })
        ));
    }

    #[test]
    fn split_round_trip() {
        let w = random_vecs(12, 3, 7);
        let blocks = split_per_ap(&w, 4).unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(join_per_ap(&blocks), w);
        let single = split_per_ap(&w, 12).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].column(1).into_owned(), w[1]);
        assert!(split_per_ap(&w, 5).is_err());
    }
}

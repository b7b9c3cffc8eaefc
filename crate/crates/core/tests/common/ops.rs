//! Instrumented reference for the processing counts.
//!
//! Every pipeline stage is carried out on random data with a counter that
//! charges each multiplication as it happens: 8 for complex by complex, 4 for
//! real by complex (memory factor included). Matrix inverses are charged the
//! LU convention `8(n³ − n)/3`; scalar reciprocals are free.

use cfisac::detection::DetectorKind;
use cfisac::energy::{count_comm_ops, count_sensing_ops};
use cfisac::linalg::{CMat, CVec};
use cfisac::rng::{complex_normal, stream};
use cfisac::C64;
use rand::Rng;

#[derive(Default)]
pub struct Tally {
    pub ops: u64,
}

impl Tally {
    pub fn cmul(&mut self, a: C64, b: C64) -> C64 {
        self.ops += 8;
        a * b
    }

    pub fn rmul(&mut self, a: f64, b: C64) -> C64 {
        self.ops += 4;
        b * a
    }

    pub fn inverse(&mut self, a: &CMat) -> CMat {
        let n = a.nrows() as u64;
        self.ops += 8 * (n * n * n - n) / 3;
        a.clone().try_inverse().expect("well-conditioned test matrix")
    }

    pub fn matvec(&mut self, a: &CMat, x: &CVec) -> CVec {
        CVec::from_fn(a.nrows(), |i, _| (0..a.ncols()).map(|j| self.cmul(a[(i, j)], x[j])).sum())
    }

    /// `xᴴy`.
    pub fn dotc(&mut self, x: &CVec, y: &CVec) -> C64 {
        x.iter().zip(y.iter()).map(|(a, b)| self.cmul(a.conj(), *b)).sum()
    }

    /// `w / ‖w‖` with the squared norm formed as products `conj(w_j) w_j`.
    pub fn normalize(&mut self, w: &CVec) -> CVec {
        let n2 = self.dotc(w, w).re;
        let inv = 1.0 / n2.sqrt();
        w.map(|v| self.rmul(inv, v))
    }
}

/// Dimensions of one oracle configuration.
#[derive(Debug, Clone, Copy)]
pub struct Dims {
    pub m: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ue: usize,
    pub l_p: usize,
    pub l_d: usize,
}

/// Counted totals over one block of `l_d` data symbols.
#[derive(Debug, Default, Clone, Copy)]
pub struct Counted {
    pub ch_est: u64,
    pub rzf: u64,
    pub comm_symbols: u64,
    pub zf_sensing: u64,
    pub sensing_symbols: u64,
    pub detector_fixed: u64,
}

fn rand_vec<R: Rng>(n: usize, rng: &mut R) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng))
}

fn rand_mat<R: Rng>(r: usize, c: usize, rng: &mut R) -> CMat {
    CMat::from_fn(r, c, |_, _| complex_normal(rng))
}

/// Hermitian `A + Aᴴ + (n + 1)I`, safely invertible.
fn rand_hpd<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let a = rand_mat(n, n, rng);
    &a * a.adjoint() + CMat::identity(n, n) * C64::new(n as f64 + 1.0, 0.0)
}

/// Run every stage once and return the charged counts. `aware` selects the
/// clutter-aware detector.
pub fn count(d: Dims, aware: bool, seed: u64) -> Counted {
    let mut rng = stream(seed, "ops-oracle", &[]);
    let Dims { m, n_tx, n_rx, n_ue, l_p, l_d } = d;
    let n = m * n_tx;
    let mut out = Counted::default();

    // channel estimation: despread each distinct pilot, then the per-UE LMMSE filter
    let mut t = Tally::default();
    let pilot_of = |i: usize| i % l_p;
    let mut estimates = vec![CVec::zeros(n); n_ue];
    for k in 0..n_tx {
        let y = rand_mat(m, l_p, &mut rng);
        let pilots: Vec<CVec> = (0..l_p).map(|_| rand_vec(l_p, &mut rng)).collect();
        let used = n_ue.min(l_p);
        let despread: Vec<CVec> = (0..used).map(|p| t.matvec(&y, &pilots[p])).collect();
        for (i, est) in estimates.iter_mut().enumerate() {
            let filter = rand_mat(m, m, &mut rng);
            let h = t.matvec(&filter, &despread[pilot_of(i)]);
            est.rows_mut(k * m, m).copy_from(&h);
        }
    }
    out.ch_est = t.ops;

    // RZF: Hermitian half of the Gram sum, one inverse, then per-UE solve and normalization
    let mut t = Tally::default();
    let mut gram = CMat::identity(n, n) * C64::new(0.1, 0.0);
    for h in &estimates {
        for i in 0..n {
            for j in i..n {
                let v = t.cmul(h[i], h[j].conj());
                gram[(i, j)] += v;
                if j != i {
                    gram[(j, i)] += v.conj();
                }
            }
        }
    }
    let inv = t.inverse(&gram);
    let comm: Vec<CVec> = estimates
        .iter()
        .map(|h| {
            let v = t.matvec(&inv, h);
            t.normalize(&v)
        })
        .collect();
    out.rzf = t.ops;

    // downlink data: reciprocity calibration, precoding and power scaling per UE
    let mut t = Tally::default();
    let calibration = rand_vec(n, &mut rng);
    let amp: Vec<f64> = (0..=n_ue).map(|_| rng.random::<f64>()).collect();
    let mut comm_x = Vec::with_capacity(l_d);
    for _ in 0..l_d {
        let mut x = CVec::zeros(n);
        for (i, w) in comm.iter().enumerate() {
            let s = complex_normal(&mut rng);
            for j in 0..n {
                let cal = t.cmul(calibration[j], w[j]);
                let pre = t.cmul(s, cal);
                x[j] += t.rmul(amp[i + 1], pre);
            }
        }
        comm_x.push(x);
    }
    out.comm_symbols = t.ops;

    // sensing precoder: project the target vector, then normalize
    let mut t = Tally::default();
    let projector = rand_hpd(n, &mut rng);
    let h0 = rand_vec(n, &mut rng);
    let v = t.matvec(&projector, &h0);
    let w0 = t.normalize(&v);
    out.zf_sensing = t.ops;

    let tx_steer: Vec<CVec> = (0..n_tx).map(|_| rand_vec(m, &mut rng)).collect();
    let rx_steer: Vec<CVec> = (0..n_rx).map(|_| rand_vec(m, &mut rng)).collect();
    let gain: Vec<Vec<f64>> = (0..n_rx).map(|_| (0..n_tx).map(|_| rng.random::<f64>()).collect()).collect();

    // per data symbol: sensing stream, then the detector accumulations
    let mut t = Tally::default();
    let mut a = vec![CVec::zeros(n_tx); n_rx];
    let mut c: Vec<CMat> = (0..n_rx).map(|_| CMat::identity(n_tx, n_tx)).collect();
    let mut b = vec![CVec::zeros(n * m); n_rx];
    let mut e = vec![CMat::zeros(n_tx, n * m); n_rx];
    let mut xx = CMat::zeros(n, n);
    for x_comm in &comm_x {
        let s0 = complex_normal(&mut rng);
        let mut x = x_comm.clone();
        for j in 0..n {
            let pre = t.cmul(s0, w0[j]);
            x[j] += t.rmul(amp[0], pre);
        }
        if aware && n_rx > 0 {
            for i in 0..n {
                for j in i..n {
                    let v = t.cmul(x[i].conj(), x[j]);
                    xx[(i, j)] += v;
                    if j != i {
                        xx[(j, i)] += v.conj();
                    }
                }
            }
        }
        for r in 0..n_rx {
            let y = rand_vec(m, &mut rng);
            let mut g = CMat::zeros(m, n_tx);
            for k in 0..n_tx {
                let proj: C64 = (0..m).map(|q| t.cmul(tx_steer[k][q], x[k * m + q])).sum();
                for q in 0..m {
                    let v = t.cmul(rx_steer[r][q], proj);
                    g[(q, k)] = t.rmul(gain[r][k].sqrt(), v);
                }
            }
            for k in 0..n_tx {
                a[r][k] += (0..m).map(|q| t.cmul(g[(q, k)].conj(), y[q])).sum::<C64>();
            }
            for k in 0..n_tx {
                for l in k..n_tx {
                    let v: C64 = (0..m).map(|q| t.cmul(g[(q, k)].conj(), g[(q, l)])).sum();
                    c[r][(k, l)] += v;
                    if l != k {
                        c[r][(l, k)] += v.conj();
                    }
                }
            }
            if aware {
                for j in 0..n {
                    for q in 0..m {
                        b[r][j * m + q] += t.cmul(x[j].conj(), y[q]);
                    }
                }
                for j in 0..n {
                    for q in 0..m {
                        for k in 0..n_tx {
                            e[r][(k, j * m + q)] += t.cmul(x[j], g[(q, k)].conj());
                        }
                    }
                }
            }
        }
    }
    out.sensing_symbols = t.ops;

    // once per block: inverses and the final quadratic form over all receive APs
    let mut t = Tally::default();
    if aware {
        if n_rx > 0 {
            let k_dim = (1 + m * m) * n_tx * n_rx;
            let j_dim = m * m * n_tx * n_rx;
            let mut stacked = CVec::zeros(k_dim);
            let mut big = CMat::zeros(k_dim, k_dim);
            let mut dd = CMat::zeros(j_dim, j_dim);
            let (ba, bb) = (n_tx, n * m);
            for r in 0..n_rx {
                let off_a = r * ba;
                let off_b = n_tx * n_rx + r * bb;
                stacked.rows_mut(off_a, ba).copy_from(&a[r]);
                stacked.rows_mut(off_b, bb).copy_from(&b[r]);
                let mut dr = rand_hpd(bb, &mut rng);
                for i in 0..n {
                    for j in 0..n {
                        for q in 0..m {
                            dr[(i * m + q, j * m + q)] += xx[(i, j)];
                        }
                    }
                }
                dd.view_mut((r * bb, r * bb), (bb, bb)).copy_from(&dr);
                big.view_mut((off_a, off_a), (ba, ba)).copy_from(&c[r]);
                big.view_mut((off_a, off_b), (ba, bb)).copy_from(&e[r]);
                big.view_mut((off_b, off_a), (bb, ba)).copy_from(&e[r].adjoint());
                big.view_mut((off_b, off_b), (bb, bb)).copy_from(&dr);
            }
            let _ = t.inverse(&dd);
            let big_inv = t.inverse(&big);
            let v = t.matvec(&big_inv, &stacked);
            let _ = t.dotc(&stacked, &v);
        }
    } else {
        let nt = n_tx * n_rx;
        let mut stacked = CVec::zeros(nt);
        let mut c_inv = CMat::zeros(nt, nt);
        for r in 0..n_rx {
            stacked.rows_mut(r * n_tx, n_tx).copy_from(&a[r]);
            let inv = t.inverse(&c[r]);
            c_inv.view_mut((r * n_tx, r * n_tx), (n_tx, n_tx)).copy_from(&inv);
        }
        let v = t.matvec(&c_inv, &stacked);
        let _ = t.dotc(&stacked, &v);
    }
    out.detector_fixed = t.ops;
    out
}

/// Every configuration with `M, N_tx ≤ 2`, `N_rx ≤ 1`, `N_ue ≤ 2`, `L_p ≤ 3`, `L_d ≤ 4`.
pub fn configurations() -> Vec<Dims> {
    let mut out = Vec::new();
    for m in 1..=2 {
        for n_tx in 1..=2 {
            for n_rx in 0..=1 {
                for n_ue in 1..=2 {
                    for l_p in 1..=3 {
                        for l_d in 1..=4 {
                            out.push(Dims { m, n_tx, n_rx, n_ue, l_p, l_d });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Fields where the closed forms disagree with the counted pipeline.
pub fn mismatches() -> Vec<String> {
    let mut bad = Vec::new();
    for (idx, d) in configurations().into_iter().enumerate() {
        for kind in DetectorKind::ALL {
            let counted = count(d, kind == DetectorKind::ClutterAware, idx as u64);
            let comm = count_comm_ops(d.m, d.l_p, d.n_ue, d.n_tx);
            let se = count_sensing_ops(d.m, d.n_tx, d.n_rx, kind);
            let l_d = d.l_d as u64;
            let pairs = [
                ("ch_est", comm.ch_est, counted.ch_est),
                ("rzf", comm.rzf, counted.rzf),
                ("comm_per_symbol", comm.comm_per_symbol * l_d, counted.comm_symbols),
                ("zf_sensing", se.zf_sensing, counted.zf_sensing),
                ("sensing_per_symbol", se.sensing_per_symbol * l_d, counted.sensing_symbols),
                ("detector_fixed", se.detector_fixed, counted.detector_fixed),
            ];
            for (name, closed, reference) in pairs {
                if closed != reference {
                    bad.push(format!("{name} {d:?} {kind}: {closed} != {reference}"));
                }
            }
        }
    }
    bad
}

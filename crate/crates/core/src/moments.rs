//! Monte Carlo estimation of the deterministic statistics that feed the
//! optimizer: `b_i`, `a_ij`, the per-AP precoder norms `F_k` and the sensing
//! matrices `A_D`, `B_D`.
//!
//! All statistics are averaged over the same `n_mc` realizations, each with
//! fresh channels, estimates and precoders.

use crate::channel::{sample_realization, ChannelRealization, LargeScale, LmmseFilter};
use crate::linalg::quad_form;
use crate::precoding::{rzf_precoders, zf_sensing_precoder, PrecoderSet};
use crate::rng::{self, purpose, StreamRng};
use crate::scenario::Scenario;
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Default number of Monte Carlo realizations.
pub const DEFAULT_N_MC: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    /// `|E{h_iᴴ w_i}|` per UE.
    pub b: Vec<f64>,
    /// `a_ij`, `[ue][j]` with `j = 0..=N_ue` (0 = sensing).
    pub a: Vec<Vec<f64>>,
    /// Diagonal of `F_k`, `[tx_ap][j]`.
    pub f: Vec<Vec<f64>>,
    /// Diagonal of `A_D`.
    pub a_d: Vec<f64>,
    /// Diagonal of `B_D`.
    pub b_d: Vec<f64>,
    pub n_mc: usize,
    pub b_stderr: Vec<f64>,
    /// Standard error of the `a_ij²` estimates.
    pub a2_stderr: Vec<Vec<f64>>,
    pub a_d_stderr: Vec<f64>,
    pub b_d_stderr: Vec<f64>,
}

impl MomentStats {
    pub fn num_ues(&self) -> usize {
        self.b.len()
    }

    /// `a_ij²`.
    pub fn a2(&self) -> Vec<Vec<f64>> {
        self.a.iter().map(|row| row.iter().map(|x| x * x).collect()).collect()
    }

    /// Copy with `A_D` scaled by `factor` (used for RCS sweeps).
    pub fn with_sensing_gain(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.a_d.iter_mut().for_each(|x| *x *= factor);
        out.a_d_stderr.iter_mut().for_each(|x| *x *= factor);
        out
    }
}

/// Per-realization sensing diagonals `(A_D, B_D)` from the per-AP precoders.
pub fn sensing_diagonals(large: &LargeScale, per_ap: &[nalgebra::DMatrix<C64>]) -> (Vec<f64>, Vec<f64>) {
    let cols = per_ap.first().map_or(0, |w| w.ncols());
    let mut a_d = vec![0.0; cols];
    let mut b_d = vec![0.0; cols];
    for (k, wk) in per_ap.iter().enumerate() {
        let steer = &large.tx_steering[k];
        let beta_sum: f64 = large.bistatic.iter().map(|row| row[k]).sum();
        // Σ_r tr(R_rx) R_txᵀ for this transmit AP
        let mut clutter_t = nalgebra::DMatrix::<C64>::zeros(wk.nrows(), wk.nrows());
        for row in &large.clutter {
            let st = &row[k];
            let tr: f64 = (0..st.rx_cov.nrows()).map(|d| st.rx_cov[(d, d)].re).sum();
            clutter_t += st.tx_cov.transpose() * C64::new(tr, 0.0);
        }
        for j in 0..cols {
            let w = wk.column(j).into_owned();
            let response: C64 = steer.iter().zip(w.iter()).map(|(a, x)| a * x).sum();
            a_d[j] += beta_sum * response.norm_sqr();
            b_d[j] += quad_form(&clutter_t, &w);
        }
    }
    (a_d, b_d)
}

/// One realization together with its precoders.
pub struct PrecodedRealization {
    pub channels: ChannelRealization,
    pub precoders: PrecoderSet,
}

/// Draw channels, estimate them and build precoders. Without sensing the
/// sensing column is zero.
pub fn sample_precoded(
    s: &Scenario,
    large: &LargeScale,
    filter: &LmmseFilter,
    with_sensing: bool,
    rng: &mut StreamRng,
) -> Result<PrecodedRealization> {
    let channels = sample_realization(large, filter, rng);
    let comm = rzf_precoders(&channels.comm_estimates, s.radio.rzf_regularization)?;
    let m = s.radio.antennas_per_ap;
    let precoders = if with_sensing {
        let w0 = zf_sensing_precoder(&channels.comm_estimates, &channels.h0)?;
        PrecoderSet::new(w0, comm, m)?
    } else {
        PrecoderSet::without_sensing(comm, m)?
    };
    Ok(PrecodedRealization { channels, precoders })
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Estimate every statistic from `n_mc` realizations drawn from the
/// `comm-moments` stream of `seed`.
pub fn estimate_moments(
    s: &Scenario,
    large: &LargeScale,
    n_mc: usize,
    seed: u64,
    with_sensing: bool,
) -> Result<MomentStats> {
    if n_mc < 2 {
        return Err(Error::NonPositive { what: "n_mc - 1", value: n_mc as f64 - 1.0 });
    }
    let n_ue = s.radio.num_ues;
    let n_tx = s.radio.num_tx_aps;
    let cols = n_ue + 1;
    let filter = LmmseFilter::new(&large.comm, s.radio.noise_power, s.radio.pilot_length, s.radio.pilot_power)?;

    let mut diag_samples = vec![Vec::with_capacity(n_mc); n_ue];
    let mut g2 = vec![vec![Vec::with_capacity(n_mc); cols]; n_ue];
    let mut f2 = vec![vec![0.0; cols]; n_tx];
    let mut ad = vec![Vec::with_capacity(n_mc); cols];
    let mut bd = vec![Vec::with_capacity(n_mc); cols];

    for t in 0..n_mc {
        let mut rng = rng::stream(seed, purpose::COMM_MOMENTS, &[t as u64]);
        let real = sample_precoded(s, large, &filter, with_sensing, &mut rng)?;
        let w = &real.precoders.w;
        for (i, h) in real.channels.comm_channels.iter().enumerate() {
            for (j, wj) in w.iter().enumerate() {
                let g = h.dotc(wj);
                g2[i][j].push(g.norm_sqr());
                if j == i + 1 {
                    diag_samples[i].push(g);
                }
            }
        }
        for (k, wk) in real.precoders.per_ap.iter().enumerate() {
            for j in 0..cols {
                f2[k][j] += wk.column(j).norm_squared();
            }
        }
        let (a_d, b_d) = sensing_diagonals(large, &real.precoders.per_ap);
        for j in 0..cols {
            ad[j].push(a_d[j]);
            bd[j].push(b_d[j]);
        }
    }

    let n = n_mc as f64;
    let mut b = Vec::with_capacity(n_ue);
    let mut b_stderr = Vec::with_capacity(n_ue);
    let mut a = vec![vec![0.0; cols]; n_ue];
    let mut a2_stderr = vec![vec![0.0; cols]; n_ue];
    for i in 0..n_ue {
        let mean: C64 = diag_samples[i].iter().sum::<C64>() / n;
        let var = diag_samples[i].iter().map(|g| (g - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        b.push(mean.norm());
        b_stderr.push((var / n).sqrt());
        for j in 0..cols {
            let (m2, se) = mean_and_stderr(&g2[i][j]);
            let val = if j == i + 1 { m2 - mean.norm_sqr() } else { m2 };
            a[i][j] = val.max(0.0).sqrt();
            a2_stderr[i][j] = se;
        }
    }
    let f = f2
        .into_iter()
        .map(|row| row.into_iter().map(|x| (x / n).sqrt()).collect())
        .collect();
    let (a_d, a_d_stderr): (Vec<f64>, Vec<f64>) = ad.iter().map(|v| mean_and_stderr(v)).unzip();
    let (b_d, b_d_stderr): (Vec<f64>, Vec<f64>) = bd.iter().map(|v| mean_and_stderr(v)).unzip();

    Ok(MomentStats { b, a, f, a_d, b_d, n_mc, b_stderr, a2_stderr, a_d_stderr, b_d_stderr })
}

/// Communication statistics `(b, a, F)` only.
pub fn estimate_comm_moments(
    s: &Scenario,
    large: &LargeScale,
    n_mc: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let m = estimate_moments(s, large, n_mc, seed, true)?;
    Ok((m.b, m.a, m.f))
}

/// Sensing diagonals `(A_D, B_D)` only.
pub fn estimate_sensing_matrices(
    s: &Scenario,
    large: &LargeScale,
    n_mc: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = estimate_moments(s, large, n_mc, seed, true)?;
    Ok((m.a_d, m.b_d))
}

/// Hex SHA-256 of the scenario's canonical JSON form.
pub fn scenario_hash(s: &Scenario) -> String {
    let json = serde_json::to_string(s).expect("scenario serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_path(dir: &Path, s: &Scenario, n_mc: usize, seed: u64, with_sensing: bool) -> PathBuf {
    let tag = if with_sensing { "isac" } else { "comm" };
    dir.join(format!("moments-{}-{n_mc}-{seed}-{tag}.json", &scenario_hash(s)[..16]))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    scenario_hash: String,
    n_mc: usize,
    seed: u64,
    with_sensing: bool,
    stats: MomentStats,
}

/// Load statistics from `dir` if a matching entry exists, otherwise estimate
/// and store them. I/O failures on the cache never fail the estimate.
pub fn cached_moments(
    dir: &Path,
    s: &Scenario,
    large: &LargeScale,
    n_mc: usize,
    seed: u64,
    with_sensing: bool,
) -> Result<MomentStats> {
    let path = cache_path(dir, s, n_mc, seed, with_sensing);
    let hash = scenario_hash(s);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
            if entry.scenario_hash == hash && entry.n_mc == n_mc && entry.seed == seed && entry.with_sensing == with_sensing {
                return Ok(entry.stats);
            }
        }
    }
    let stats = estimate_moments(s, large, n_mc, seed, with_sensing)?;
    let entry = CacheEntry { scenario_hash: hash, n_mc, seed, with_sensing, stats };
    if std::fs::create_dir_all(dir).is_ok() {
        if let Ok(text) = serde_json::to_string(&entry) {
            let _ = std::fs::write(&path, text);
        }
    }
    Ok(entry.stats)
}

//! Channel generation: array responses, UMi large-scale fading, local
//! scattering correlation, Rician user channels, Kronecker clutter channels,
//! the bistatic target gains and LMMSE channel estimation.

use crate::linalg::{hermitian_part, psd_sqrt, CMat, CVec};
use crate::rng::{self, complex_normal, purpose, uniform_phase, StreamRng};
use crate::scenario::{Geometry, Scenario};
use crate::{Error, Result, C64};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Urban-microcell large-scale constants. Path loss in dB is
/// `intercept + slope·log10(d) + freq_coeff·log10(f_GHz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModelParams {
    pub name: String,
    pub los_intercept_db: f64,
    pub los_slope_db_per_decade: f64,
    pub los_freq_coeff_db_per_decade_ghz: f64,
    pub los_shadow_std_db: f64,
    pub nlos_intercept_db: f64,
    pub nlos_slope_db_per_decade: f64,
    pub nlos_freq_coeff_db_per_decade_ghz: f64,
    pub nlos_shadow_std_db: f64,
    pub los_prob_breakpoint_m: f64,
    pub los_prob_decay_m: f64,
    pub rician_k_mean_db: f64,
    pub rician_k_std_db: f64,
    pub angle_spread_deg: f64,
    /// Residual suppression of the target-free paths beyond the clutter
    /// scaling factor (dB, nonnegative).
    pub clutter_cancellation_db: f64,
}

impl ChannelModelParams {
    /// Path loss in dB without shadowing.
    pub fn pathloss_db(&self, distance: f64, carrier: f64, los: bool) -> f64 {
        let f_ghz = carrier / 1e9;
        if los {
            self.los_intercept_db
                + self.los_slope_db_per_decade * distance.log10()
                + self.los_freq_coeff_db_per_decade_ghz * f_ghz.log10()
        } else {
            self.nlos_intercept_db
                + self.nlos_slope_db_per_decade * distance.log10()
                + self.nlos_freq_coeff_db_per_decade_ghz * f_ghz.log10()
        }
    }

    /// LOS probability at horizontal distance `d2d`.
    pub fn los_probability(&self, d2d: f64) -> f64 {
        let decay = (-d2d / self.los_prob_decay_m).exp();
        (self.los_prob_breakpoint_m / d2d).min(1.0) * (1.0 - decay) + decay
    }

    pub fn angle_spread_rad(&self) -> f64 {
        self.angle_spread_deg.to_radians()
    }
}

/// ULA response `[exp(jπ m sin(az) cos(el))]_{m=0..M-1}`.
pub fn array_response(m: usize, azimuth: f64, elevation: f64) -> CVec {
    let phase = PI * azimuth.sin() * elevation.cos();
    CVec::from_fn(m, |i, _| C64::from_polar(1.0, phase * i as f64))
}

/// UMi channel gain (linear) including a shadowing draw in dB.
pub fn umi_pathloss(
    params: &ChannelModelParams,
    distance: f64,
    carrier: f64,
    los: bool,
    shadow_draw_db: f64,
) -> Result<f64> {
    if distance.is_nan() || distance <= 0.0 {
        return Err(Error::NonPositive { what: "distance", value: distance });
    }
    let db = -params.pathloss_db(distance, carrier, los) + shadow_draw_db;
    Ok(10f64.powf(db / 10.0))
}

const SCATTER_NODES: usize = 801;
const SCATTER_WIDTH_SIGMAS: f64 = 7.0;

/// Gaussian local-scattering correlation scaled by `gain`.
///
/// `[R]_{l,m} = gain·E[exp(jπ(l−m) sin(az+δ) cos(el))]`, `δ ~ N(0, spread²)`,
/// evaluated with Simpson's rule over ±7 standard deviations. The weights are
/// normalized, so the diagonal equals `gain` exactly.
pub fn local_scattering_covariance(
    m: usize,
    nominal_azimuth: f64,
    nominal_elevation: f64,
    angle_spread: f64,
    gain: f64,
) -> CMat {
    let n = SCATTER_NODES;
    let h = 2.0 * SCATTER_WIDTH_SIGMAS / (n - 1) as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        let t = -SCATTER_WIDTH_SIGMAS + h * i as f64;
        let simpson = if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let w = simpson * (-0.5 * t * t).exp();
        total += w;
        nodes.push((nominal_azimuth + angle_spread * t, w));
    }
    let cos_el = nominal_elevation.cos();
    // Toeplitz: only the lag matters
    let lags: Vec<C64> = (0..m)
        .map(|lag| {
            let mut acc = C64::new(0.0, 0.0);
            for &(ang, w) in &nodes {
                acc += C64::from_polar(w, PI * lag as f64 * ang.sin() * cos_el);
            }
            acc * (gain / total)
        })
        .collect();
    CMat::from_fn(m, m, |l, c| {
        if l >= c {
            lags[l - c]
        } else {
            lags[c - l].conj()
        }
    })
}

/// Bistatic radar-range gain `λ²σ / ((4π)³ d_tx² d_rx²)`.
pub fn bistatic_gain(d_tx: f64, d_rx: f64, wavelength: f64, sigma_rcs: f64) -> Result<f64> {
    if d_tx.is_nan() || d_tx <= 0.0 {
        return Err(Error::NonPositive { what: "transmitter distance", value: d_tx });
    }
    if d_rx.is_nan() || d_rx <= 0.0 {
        return Err(Error::NonPositive { what: "receiver distance", value: d_rx });
    }
    Ok(wavelength * wavelength * sigma_rcs / ((4.0 * PI).powi(3) * d_tx * d_tx * d_rx * d_rx))
}

/// One-way gain from transmit AP `k` to the target: deterministic UMi LOS
/// path loss, no shadowing.
pub fn target_gain(s: &Scenario, k: usize) -> Result<f64> {
    umi_pathloss(
        &s.channel_model,
        s.geometry.tx_to_target_distance(k),
        s.radio.carrier_frequency,
        true,
        0.0,
    )
}

/// Concatenated AP-to-target channel; block `k` is `√β_k a(φ_k, ϑ_k)`.
pub fn sensing_vector_h0(s: &Scenario) -> Result<CVec> {
    let m = s.radio.antennas_per_ap;
    let mut h0 = CVec::zeros(s.radio.total_antennas());
    for k in 0..s.radio.num_tx_aps {
        let beta = target_gain(s, k)?;
        let (az, el) = s.geometry.tx_target_angles(k);
        let a = array_response(m, az, el) * C64::new(beta.sqrt(), 0.0);
        h0.rows_mut(k * m, m).copy_from(&a);
    }
    Ok(h0)
}

/// Statistics of the channel between one UE and one transmit AP.
#[derive(Debug, Clone)]
pub struct CommChannelStat {
    pub los_mean: CVec,
    pub nlos_cov: CMat,
    /// Linear Rician factor, 0 for NLOS links.
    pub rician_factor: f64,
    /// Linear large-scale gain including shadowing.
    pub pathloss: f64,
    pub nlos_sqrt: CMat,
}

impl CommChannelStat {
    pub fn new(los_mean: CVec, nlos_cov: CMat, rician_factor: f64, pathloss: f64) -> Result<Self> {
        let nlos_sqrt = psd_sqrt(&nlos_cov)?;
        Ok(Self { los_mean, nlos_cov, rician_factor, pathloss, nlos_sqrt })
    }

    /// `R' = R + h̄h̄ᴴ`, the covariance once the LOS phase is unknown.
    pub fn effective_cov(&self) -> CMat {
        &self.nlos_cov + &self.los_mean * self.los_mean.adjoint()
    }
}

/// Kronecker statistics of one clutter path (receive AP `r`, transmit AP `k`).
#[derive(Debug, Clone)]
pub struct ClutterStat {
    pub rx_cov: CMat,
    /// Transmit-side correlation, carries the path gain.
    pub tx_cov: CMat,
    pub rx_sqrt: CMat,
    pub tx_sqrt: CMat,
}

impl ClutterStat {
    pub fn new(rx_cov: CMat, tx_cov: CMat) -> Result<Self> {
        let rx_sqrt = psd_sqrt(&rx_cov)?;
        let tx_sqrt = psd_sqrt(&tx_cov)?;
        Ok(Self { rx_cov, tx_cov, rx_sqrt, tx_sqrt })
    }

    /// Covariance of `vec(H)` (column-major), `R_tx ⊗ R_rx`.
    pub fn vec_cov(&self) -> CMat {
        self.tx_cov.kronecker(&self.rx_cov)
    }
}

/// Everything about the channels that stays fixed across coherence blocks.
#[derive(Debug, Clone)]
pub struct LargeScale {
    /// Indexed `[ue][tx_ap]`.
    pub comm: Vec<Vec<CommChannelStat>>,
    /// Indexed `[rx_ap][tx_ap]`.
    pub clutter: Vec<Vec<ClutterStat>>,
    /// Bistatic gains through the target, `[rx_ap][tx_ap]`.
    pub bistatic: Vec<Vec<f64>>,
    pub h0: CVec,
    /// Transmit array response toward the target, per transmit AP.
    pub tx_steering: Vec<CVec>,
    /// Receive array response from the target, per receive AP.
    pub rx_steering: Vec<CVec>,
}

/// Draw the large-scale statistics for a scenario. Deterministic in the
/// scenario's master seed.
pub fn build_large_scale(s: &Scenario) -> Result<LargeScale> {
    let p = &s.channel_model;
    let g = &s.geometry;
    let m = s.radio.antennas_per_ap;
    let fc = s.radio.carrier_frequency;
    let spread = p.angle_spread_rad();
    let mut rng = rng::stream(s.master_seed, purpose::LARGE_SCALE, &[0]);

    let mut comm = Vec::with_capacity(s.radio.num_ues);
    for ue in &g.ue_positions {
        let mut row = Vec::with_capacity(s.radio.num_tx_aps);
        for ap in &g.tx_ap_positions {
            let d = Geometry::distance(ap, ue);
            let d2d = Geometry::horizontal_distance(ap, ue).max(1e-3);
            let los = rng.random::<f64>() < p.los_probability(d2d);
            let shadow_std = if los { p.los_shadow_std_db } else { p.nlos_shadow_std_db };
            let shadow: f64 = rng.sample::<f64, _>(StandardNormal) * shadow_std;
            let k_db: f64 = p.rician_k_mean_db + rng.sample::<f64, _>(StandardNormal) * p.rician_k_std_db;
            let beta = umi_pathloss(p, d, fc, los, shadow)?;
            let (az, el) = Geometry::azimuth_elevation(ap, ue);
            let kappa = if los { 10f64.powf(k_db / 10.0) } else { 0.0 };
            let los_mean = array_response(m, az, el) * C64::new((kappa * beta / (kappa + 1.0)).sqrt(), 0.0);
            let nlos_cov = local_scattering_covariance(m, az, el, spread, beta / (kappa + 1.0));
            row.push(CommChannelStat::new(los_mean, nlos_cov, kappa, beta)?);
        }
        comm.push(row);
    }

    let mut clutter = Vec::with_capacity(s.radio.num_rx_aps);
    for rx in &g.rx_ap_positions {
        let mut row = Vec::with_capacity(s.radio.num_tx_aps);
        for tx in &g.tx_ap_positions {
            // the direct path is cancelled; residual clutter travels via the sensing area
            let d = Geometry::distance(tx, &g.target_position) + Geometry::distance(&g.target_position, rx);
            let shadow: f64 = rng.sample::<f64, _>(StandardNormal) * p.nlos_shadow_std_db;
            let gain = umi_pathloss(p, d, fc, false, shadow)?
                * s.radio.clutter_scaling
                * 10f64.powf(-p.clutter_cancellation_db / 10.0);
            let (az_tx, _) = Geometry::azimuth_elevation(tx, rx);
            let (az_rx, _) = Geometry::azimuth_elevation(rx, tx);
            let tx_cov = local_scattering_covariance(m, az_tx, 0.0, spread, gain);
            let rx_cov = local_scattering_covariance(m, az_rx, 0.0, spread, 1.0);
            row.push(ClutterStat::new(rx_cov, tx_cov)?);
        }
        clutter.push(row);
    }

    let lambda = s.radio.wavelength();
    let bistatic = (0..s.radio.num_rx_aps)
        .map(|r| {
            (0..s.radio.num_tx_aps)
                .map(|k| {
                    bistatic_gain(
                        g.tx_to_target_distance(k),
                        g.rx_to_target_distance(r),
                        lambda,
                        s.radio.rcs_variance,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let tx_steering = (0..s.radio.num_tx_aps)
        .map(|k| {
            let (az, el) = g.tx_target_angles(k);
            array_response(m, az, el)
        })
        .collect();
    let rx_steering = (0..s.radio.num_rx_aps)
        .map(|r| {
            let (az, el) = g.target_rx_angles(r);
            array_response(m, az, el)
        })
        .collect();

    Ok(LargeScale {
        comm,
        clutter,
        bistatic,
        h0: sensing_vector_h0(s)?,
        tx_steering,
        rx_steering,
    })
}

/// Draw `h_{i,k} = e^{jφ}h̄ + R^{1/2}z` for every UE and concatenate over APs.
pub fn sample_comm_channels<R: Rng + ?Sized>(stats: &[Vec<CommChannelStat>], rng: &mut R) -> Vec<CVec> {
    stats
        .iter()
        .map(|row| {
            let m = row.first().map_or(0, |st| st.los_mean.len());
            let mut h = CVec::zeros(m * row.len());
            for (k, st) in row.iter().enumerate() {
                let phase = C64::from_polar(1.0, uniform_phase(rng));
                let z = CVec::from_fn(m, |_, _| complex_normal(rng));
                let block = &st.los_mean * phase + &st.nlos_sqrt * z;
                h.rows_mut(k * m, m).copy_from(&block);
            }
            h
        })
        .collect()
}

/// Draw `H = R_rx^{1/2} W (R_tx^{1/2})ᵀ` for every clutter path.
pub fn sample_clutter_channels<R: Rng + ?Sized>(stats: &[Vec<ClutterStat>], rng: &mut R) -> Vec<Vec<CMat>> {
    stats
        .iter()
        .map(|row| {
            row.iter()
                .map(|st| {
                    let m = st.rx_cov.nrows();
                    let w = CMat::from_fn(m, m, |_, _| complex_normal(rng));
                    &st.rx_sqrt * w * st.tx_sqrt.transpose()
                })
                .collect()
        })
        .collect()
}

/// Covariance of the vectorized clutter channel: block diagonal over receive
/// APs `r` and, inside, over transmit APs `k`, with blocks `R_tx ⊗ R_rx`.
/// Block `r` matches `(xᵀ ⊗ I_M)` applied to `[vec(H_{r,1}); …; vec(H_{r,N_tx})]`.
pub fn clutter_covariance(stats: &[Vec<ClutterStat>]) -> CMat {
    let blocks: Vec<CMat> = stats.iter().flatten().map(ClutterStat::vec_cov).collect();
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let d = b.nrows();
        out.view_mut((off, off), (d, d)).copy_from(&b);
        off += d;
    }
    out
}

/// Per-receive-AP clutter covariance blocks (size `N_tx·M²` each).
pub fn clutter_covariance_per_rx(stats: &[Vec<ClutterStat>]) -> Vec<CMat> {
    stats.iter().map(|row| clutter_covariance(std::slice::from_ref(row))).collect()
}

/// Stack `[vec(H_{r,1}); …; vec(H_{r,N_tx})]` for every `r`.
pub fn vectorize_clutter(h: &[Vec<CMat>]) -> CVec {
    let values: Vec<C64> = h.iter().flatten().flat_map(|hk| hk.iter().copied()).collect();
    CVec::from_vec(values)
}

/// Per-link LMMSE filters for a given pilot configuration.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    /// `R'(R' + νI)^{-1}` per `[ue][tx_ap]`.
    pub gain: Vec<Vec<CMat>>,
    /// Error covariance `R' − R'(R' + νI)^{-1}R'` per `[ue][tx_ap]`.
    pub error_cov: Vec<Vec<CMat>>,
    /// Effective observation noise `ν = σ²/(L_p·p)`.
    pub noise: f64,
}

impl LmmseFilter {
    pub fn new(stats: &[Vec<CommChannelStat>], noise_power: f64, pilot_length: usize, pilot_power: f64) -> Result<Self> {
        if pilot_power <= 0.0 {
            return Err(Error::NonPositive { what: "pilot power", value: pilot_power });
        }
        let nu = noise_power / (pilot_length as f64 * pilot_power);
        let mut gain = Vec::with_capacity(stats.len());
        let mut error_cov = Vec::with_capacity(stats.len());
        for row in stats {
            let mut g_row = Vec::with_capacity(row.len());
            let mut e_row = Vec::with_capacity(row.len());
            for st in row {
                let r = st.effective_cov();
                let m = r.nrows();
                let mut innov = hermitian_part(&r);
                for d in 0..m {
                    innov[(d, d)] += C64::new(nu, 0.0);
                }
                // innovation is Hermitian PD because ν > 0; fall back to a floor if ν underflows
                let chol = match innov.clone().cholesky() {
                    Some(c) => c,
                    None => {
                        let floor = 1e-12 * (0..m).map(|d| r[(d, d)].re).sum::<f64>().max(f64::MIN_POSITIVE);
                        for d in 0..m {
                            innov[(d, d)] += C64::new(floor, 0.0);
                        }
                        innov.cholesky().ok_or(Error::NotPositiveDefinite("LMMSE innovation"))?
                    }
                };
                // R'(R'+νI)^{-1} = ((R'+νI)^{-1} R')ᴴ since both factors are Hermitian
                let g = chol.solve(&r).adjoint();
                let e = hermitian_part(&(&r - &g * &r));
                g_row.push(g);
                e_row.push(e);
            }
            gain.push(g_row);
            error_cov.push(e_row);
        }
        Ok(Self { gain, error_cov, noise: nu })
    }

    /// Estimate every UE channel from one de-spread pilot observation.
    pub fn estimate<R: Rng + ?Sized>(&self, channels: &[CVec], rng: &mut R) -> Vec<CVec> {
        let sd = self.noise.sqrt();
        channels
            .iter()
            .zip(&self.gain)
            .map(|(h, row)| {
                let m = row.first().map_or(0, |g| g.nrows());
                let mut est = CVec::zeros(h.len());
                for (k, g) in row.iter().enumerate() {
                    let z = CVec::from_fn(m, |d, _| h[k * m + d] + complex_normal(rng) * sd);
                    est.rows_mut(k * m, m).copy_from(&(g * z));
                }
                est
            })
            .collect()
    }

    /// Trace of the total estimation-error covariance of UE `i`.
    pub fn error_trace(&self, i: usize) -> f64 {
        self.error_cov[i]
            .iter()
            .map(|e| (0..e.nrows()).map(|d| e[(d, d)].re).sum::<f64>())
            .sum()
    }
}

/// LMMSE estimates of all UE channels for the given pilot power.
pub fn lmmse_estimate<R: Rng + ?Sized>(
    s: &Scenario,
    stats: &[Vec<CommChannelStat>],
    channels: &[CVec],
    pilot_power: f64,
    rng: &mut R,
) -> Result<Vec<CVec>> {
    let filter = LmmseFilter::new(stats, s.radio.noise_power, s.radio.pilot_length, pilot_power)?;
    Ok(filter.estimate(channels, rng))
}

/// One coherence-block draw of every channel.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub comm_channels: Vec<CVec>,
    pub comm_estimates: Vec<CVec>,
    /// `[rx_ap][tx_ap]`.
    pub clutter: Vec<Vec<CMat>>,
    pub h0: CVec,
    /// Swerling-I amplitudes `[rx_ap][tx_ap]`.
    pub rcs: Vec<Vec<C64>>,
}

/// Draw a full realization from one stream.
pub fn sample_realization(
    large: &LargeScale,
    filter: &LmmseFilter,
    rng: &mut StreamRng,
) -> ChannelRealization {
    let comm_channels = sample_comm_channels(&large.comm, rng);
    let comm_estimates = filter.estimate(&comm_channels, rng);
    let clutter = sample_clutter_channels(&large.clutter, rng);
    let rcs = large
        .bistatic
        .iter()
        .map(|row| row.iter().map(|_| complex_normal(rng)).collect())
        .collect();
    ChannelRealization {
        comm_channels,
        comm_estimates,
        clutter,
        h0: large.h0.clone(),
        rcs,
    }
}

//! Multistatic target detection: the observation model, the clutter-unaware
//! and clutter-aware MAPRT statistics, empirical threshold calibration and
//! detection-probability estimation.
//!
//! The detector matrices are block diagonal over receive APs (`G[m]`, `X[m]`
//! and the clutter covariance all are), so every quantity is kept per receive
//! AP and the statistics are sums of per-AP terms. Inside block `r` the
//! clutter vector is `[vec(H_{r,1}); …; vec(H_{r,N_tx})]` with column-major
//! `vec`, so that `X_r[m] = x[m]ᵀ ⊗ I_M`.

use crate::channel::{LargeScale, LmmseFilter};
use crate::linalg::{hermitian_part, CMat, CVec};
use crate::moments::sample_precoded;
use crate::precoding::PrecoderSet;
use crate::rng::{self, complex_normal, StreamRng};
use crate::scenario::Scenario;
use crate::{Error, Result, C64};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Relative diagonal loading applied to each clutter covariance block before
/// inversion.
pub const COVARIANCE_LOADING: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    ClutterUnaware,
    ClutterAware,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 2] = [DetectorKind::ClutterUnaware, DetectorKind::ClutterAware];

    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::ClutterUnaware => "clutter-unaware",
            DetectorKind::ClutterAware => "clutter-aware",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clutter-unaware" | "unaware" => Ok(DetectorKind::ClutterUnaware),
            "clutter-aware" | "aware" => Ok(DetectorKind::ClutterAware),
            other => Err(format!("unknown detector `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Target absent.
    H0,
    /// Target present.
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolAlphabet {
    #[default]
    Gaussian,
    Qpsk,
}

fn draw_symbol<R: Rng + ?Sized>(alphabet: SymbolAlphabet, rng: &mut R) -> C64 {
    match alphabet {
        SymbolAlphabet::Gaussian => complex_normal(rng),
        SymbolAlphabet::Qpsk => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            C64::new(if rng.random::<bool>() { s } else { -s }, if rng.random::<bool>() { s } else { -s })
        }
    }
}

/// One sensing block of `L_d` data symbols.
#[derive(Debug, Clone)]
pub struct SensingBlock {
    /// `symbols[m][j]`, `j = 0..=N_ue`.
    pub symbols: Vec<Vec<C64>>,
    /// Collective transmit signal `x[m]`, length `N_tx·M`.
    pub tx_signals: Vec<CVec>,
    /// `received[m][r]`, length `M` each.
    pub received: Vec<Vec<CVec>>,
    /// Target amplitudes used for this block, `[rx_ap][tx_ap]`.
    pub rcs: Vec<Vec<C64>>,
}

/// `x_k[m] = W_k diag(s[m]) q` for all APs, concatenated.
pub fn transmit_signal(precoders: &PrecoderSet, symbols: &[C64], amp: &[f64]) -> CVec {
    let n = precoders.w[0].len();
    let mut x = CVec::zeros(n);
    for (j, w) in precoders.w.iter().enumerate() {
        let c = symbols[j] * amp[j];
        if c != C64::new(0.0, 0.0) {
            x.axpy(c, w, C64::new(1.0, 0.0));
        }
    }
    x
}

/// `G_r[m]`: column `k` is `√β_{r,k} a_rx,r (a_tx,kᵀ x_k[m])`.
pub fn known_reflection(large: &LargeScale, r: usize, x: &CVec) -> CMat {
    let m = large.rx_steering[r].len();
    let n_tx = large.tx_steering.len();
    let mut g = CMat::zeros(m, n_tx);
    for k in 0..n_tx {
        let steer = &large.tx_steering[k];
        let mut proj = C64::new(0.0, 0.0);
        for d in 0..m {
            proj += steer[d] * x[k * m + d];
        }
        let c = proj * large.bistatic[r][k].sqrt();
        for d in 0..m {
            g[(d, k)] = large.rx_steering[r][d] * c;
        }
    }
    g
}

/// Simulate the received signal of one block.
#[allow(clippy::too_many_arguments)]
pub fn simulate_block<R: Rng + ?Sized>(
    large: &LargeScale,
    clutter: &[Vec<CMat>],
    precoders: &PrecoderSet,
    amp: &[f64],
    data_symbols: usize,
    noise_power: f64,
    hypothesis: Hypothesis,
    alphabet: SymbolAlphabet,
    rng: &mut R,
) -> SensingBlock {
    let n_rx = large.rx_steering.len();
    let n_tx = large.tx_steering.len();
    let m = large.rx_steering.first().map_or(0, |a| a.len());
    let rcs: Vec<Vec<C64>> = (0..n_rx).map(|_| (0..n_tx).map(|_| complex_normal(rng)).collect()).collect();
    let noise_sd = noise_power.sqrt();
    let mut symbols = Vec::with_capacity(data_symbols);
    let mut tx_signals = Vec::with_capacity(data_symbols);
    let mut received = Vec::with_capacity(data_symbols);
    for _ in 0..data_symbols {
        let s: Vec<C64> = (0..precoders.w.len()).map(|_| draw_symbol(alphabet, rng)).collect();
        let x = transmit_signal(precoders, &s, amp);
        let mut per_rx = Vec::with_capacity(n_rx);
        for r in 0..n_rx {
            let mut y = CVec::from_fn(m, |_, _| complex_normal(rng) * noise_sd);
            for k in 0..n_tx {
                let xk = x.rows(k * m, m);
                y += &clutter[r][k] * xk;
            }
            if hypothesis == Hypothesis::H1 {
                let g = known_reflection(large, r, &x);
                for k in 0..n_tx {
                    y.axpy(rcs[r][k], &g.column(k), C64::new(1.0, 0.0));
                }
            }
            per_rx.push(y);
        }
        symbols.push(s);
        tx_signals.push(x);
        received.push(per_rx);
    }
    SensingBlock { symbols, tx_signals, received, rcs }
}

/// Detector sufficient statistics, one entry per receive AP.
#[derive(Debug, Clone)]
pub struct DetectorInputs {
    pub a: Vec<CVec>,
    pub b: Vec<CVec>,
    pub c: Vec<CMat>,
    pub d: Vec<CMat>,
    pub e: Vec<CMat>,
}

/// `σ² R_r^{-1}` per receive AP, block diagonal over transmit APs.
#[derive(Debug, Clone)]
pub struct ClutterPrior {
    pub scaled_inverse: Vec<CMat>,
}

impl ClutterPrior {
    pub fn new(large: &LargeScale, noise_power: f64) -> Result<Self> {
        let scaled_inverse = large
            .clutter
            .iter()
            .map(|row| {
                let blocks: Vec<CMat> = row
                    .iter()
                    .map(|st| {
                        crate::linalg::regularized_inverse(&st.vec_cov(), COVARIANCE_LOADING, "clutter covariance")
                            .map(|inv| inv * C64::new(noise_power, 0.0))
                    })
                    .collect::<Result<_>>()?;
                let n: usize = blocks.iter().map(|b| b.nrows()).sum();
                let mut out = CMat::zeros(n, n);
                let mut off = 0;
                for b in blocks {
                    let d = b.nrows();
                    out.view_mut((off, off), (d, d)).copy_from(&b);
                    off += d;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scaled_inverse })
    }
}

/// Build `a, b, C, D, E` for every receive AP. With `clutter_terms = false`
/// only `a` and `C` are formed (enough for the clutter-unaware statistic).
pub fn detector_inputs(
    block: &SensingBlock,
    large: &LargeScale,
    prior: &ClutterPrior,
    noise_power: f64,
    clutter_terms: bool,
) -> DetectorInputs {
    let n_rx = large.rx_steering.len();
    let n_tx = large.tx_steering.len();
    let m = large.rx_steering.first().map_or(0, |a| a.len());
    let n = n_tx * m;
    let mut a = vec![CVec::zeros(n_tx); n_rx];
    let mut c: Vec<CMat> = (0..n_rx).map(|_| CMat::identity(n_tx, n_tx) * C64::new(noise_power, 0.0)).collect();
    let (mut b, mut d, mut e) = (Vec::new(), Vec::new(), Vec::new());
    let mut xx = CMat::zeros(n, n);
    if clutter_terms {
        b = vec![CVec::zeros(n * m); n_rx];
        e = vec![CMat::zeros(n_tx, n * m); n_rx];
    }
    for (x, y_all) in block.tx_signals.iter().zip(&block.received) {
        if clutter_terms {
            // Σ_m conj(x) xᵀ, shared by every receive AP
            xx += x.conjugate() * x.transpose();
        }
        for r in 0..n_rx {
            let g = known_reflection(large, r, x);
            let y = &y_all[r];
            a[r] += g.adjoint() * y;
            c[r] += g.adjoint() * &g;
            if clutter_terms {
                // b_r += conj(x) ⊗ y
                for j in 0..n {
                    let cx = x[j].conj();
                    for row in 0..m {
                        b[r][j * m + row] += cx * y[row];
                    }
                }
                // E_r += xᵀ ⊗ G_rᴴ
                let gh = g.adjoint();
                for j in 0..n {
                    let xj = x[j];
                    for row in 0..m {
                        for k in 0..n_tx {
                            e[r][(k, j * m + row)] += xj * gh[(k, row)];
                        }
                    }
                }
            }
        }
    }
    if clutter_terms {
        for r in 0..n_rx {
            let mut dr = prior.scaled_inverse[r].clone();
            for i in 0..n {
                for j in 0..n {
                    let v = xx[(i, j)];
                    for row in 0..m {
                        dr[(i * m + row, j * m + row)] += v;
                    }
                }
            }
            d.push(dr);
        }
    }
    DetectorInputs { a, b, c, d, e }
}

/// `Σ_r a_rᴴ C_r^{-1} a_r`.
pub fn test_clutter_unaware(inputs: &DetectorInputs) -> Result<f64> {
    let mut t = 0.0;
    for (a, c) in inputs.a.iter().zip(&inputs.c) {
        let chol = hermitian_part(c).cholesky().ok_or(Error::NotPositiveDefinite("C"))?;
        t += a.dotc(&chol.solve(a)).re;
    }
    Ok(t)
}

/// `Σ_r (a_r − E_r D_r^{-1} b_r)ᴴ S_r^{-1} (a_r − E_r D_r^{-1} b_r)` with
/// `S_r = C_r − E_r D_r^{-1} E_rᴴ`, equal to the partitioned-inverse form.
pub fn test_clutter_aware(inputs: &DetectorInputs) -> Result<f64> {
    let mut t = 0.0;
    for r in 0..inputs.a.len() {
        let d = hermitian_part(&inputs.d[r]).cholesky().ok_or(Error::NotPositiveDefinite("D"))?;
        let e = &inputs.e[r];
        let d_inv_b = d.solve(&inputs.b[r]);
        let d_inv_eh = d.solve(&e.adjoint());
        let resid = &inputs.a[r] - e * d_inv_b;
        let schur = hermitian_part(&(&inputs.c[r] - e * d_inv_eh));
        let s = schur.cholesky().ok_or(Error::NotPositiveDefinite("partitioned detector matrix"))?;
        t += resid.dotc(&s.solve(&resid)).re;
    }
    Ok(t)
}

pub fn statistic(kind: DetectorKind, inputs: &DetectorInputs) -> Result<f64> {
    match kind {
        DetectorKind::ClutterUnaware => test_clutter_unaware(inputs),
        DetectorKind::ClutterAware => test_clutter_aware(inputs),
    }
}

/// Everything needed to run detection trials for one scenario.
pub struct DetectionSetup<'a> {
    pub scenario: &'a Scenario,
    pub large: &'a LargeScale,
    pub filter: LmmseFilter,
    pub prior: ClutterPrior,
    pub alphabet: SymbolAlphabet,
}

impl<'a> DetectionSetup<'a> {
    pub fn new(scenario: &'a Scenario, large: &'a LargeScale) -> Result<Self> {
        let r = &scenario.radio;
        Ok(Self {
            scenario,
            large,
            filter: LmmseFilter::new(&large.comm, r.noise_power, r.pilot_length, r.pilot_power)?,
            prior: ClutterPrior::new(large, r.noise_power)?,
            alphabet: SymbolAlphabet::default(),
        })
    }

    /// Statistics of one trial for each requested detector. The trial draws
    /// fresh channels, precoders, clutter, target amplitudes, symbols and
    /// noise from its own stream.
    pub fn trial(
        &self,
        amp: &[f64],
        data_symbols: usize,
        hypothesis: Hypothesis,
        kinds: &[DetectorKind],
        rng: &mut StreamRng,
    ) -> Result<Vec<f64>> {
        let real = sample_precoded(self.scenario, self.large, &self.filter, true, rng)?;
        let noise = self.scenario.radio.noise_power;
        let block = simulate_block(
            self.large,
            &real.channels.clutter,
            &real.precoders,
            amp,
            data_symbols,
            noise,
            hypothesis,
            self.alphabet,
            rng,
        );
        let aware = kinds.contains(&DetectorKind::ClutterAware);
        let inputs = detector_inputs(&block, self.large, &self.prior, noise, aware);
        kinds.iter().map(|k| statistic(*k, &inputs)).collect()
    }

    /// Run `n_trials` trials on streams `(seed, purpose, [trial])`; returns
    /// `out[kind][trial]`.
    #[allow(clippy::too_many_arguments)]
    pub fn statistics(
        &self,
        amp: &[f64],
        data_symbols: usize,
        hypothesis: Hypothesis,
        kinds: &[DetectorKind],
        n_trials: usize,
        seed: u64,
        purpose: &str,
    ) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::with_capacity(n_trials); kinds.len()];
        for t in 0..n_trials {
            let mut rng = rng::stream(seed, purpose, &[t as u64]);
            let vals = self.trial(amp, data_symbols, hypothesis, kinds, &mut rng)?;
            for (slot, v) in out.iter_mut().zip(vals) {
                slot.push(v);
            }
        }
        Ok(out)
    }
}

/// Empirical `(1 − P_fa)` quantile: the smallest sample such that at most a
/// fraction `P_fa` of the samples exceed it.
pub fn empirical_threshold(samples: &[f64], false_alarm_prob: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((1.0 - false_alarm_prob) * n as f64).ceil() as usize;
    sorted[idx.saturating_sub(1).min(n - 1)]
}

/// Fraction of samples above the threshold and its binomial standard error.
pub fn exceedance(samples: &[f64], threshold: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let p = samples.iter().filter(|v| **v > threshold).count() as f64 / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

/// Calibrate the threshold on `n_trials` target-free blocks.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_threshold(
    setup: &DetectionSetup,
    amp: &[f64],
    data_symbols: usize,
    kind: DetectorKind,
    false_alarm_prob: f64,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    if n_trials < 100 {
        return Err(Error::NonPositive { what: "n_trials - 99", value: n_trials as f64 - 99.0 });
    }
    let stats = setup.statistics(amp, data_symbols, Hypothesis::H0, &[kind], n_trials, seed, rng::purpose::THRESHOLD)?;
    Ok(empirical_threshold(&stats[0], false_alarm_prob))
}

/// Detection probability and its standard error on target-present blocks.
pub fn detection_probability(
    setup: &DetectionSetup,
    amp: &[f64],
    data_symbols: usize,
    kind: DetectorKind,
    threshold: f64,
    n_trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let stats = setup.statistics(amp, data_symbols, Hypothesis::H1, &[kind], n_trials, seed, rng::purpose::DETECTION)?;
    Ok(exceedance(&stats[0], threshold))
}

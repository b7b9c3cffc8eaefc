//! Dense brute-force detector statistics.
//!
//! The block is written as one linear model per receive AP over all data
//! symbols: `y = Φ α + Ψ vec(H) + n`, where `Φ` stacks the known target
//! reflections and `Ψ` stacks `xᵀ[m] ⊗ I_M`. Both statistics are then formed
//! with explicit matrix inverses.

use cfisac::channel::{build_large_scale, LargeScale, LmmseFilter};
use cfisac::detection::{
    detector_inputs, known_reflection, simulate_block, test_clutter_aware, test_clutter_unaware, ClutterPrior,
    Hypothesis, SensingBlock, SymbolAlphabet,
};
use cfisac::linalg::{CMat, CVec};
use cfisac::moments::sample_precoded;
use cfisac::rng::stream;
use cfisac::scenario::{build_from_value, Scenario};
use cfisac::C64;
use rand::Rng;
use serde_json::json;

fn regressors(block: &SensingBlock, large: &LargeScale, r: usize) -> (CMat, CMat, CVec) {
    let m = large.rx_steering[r].len();
    let n_tx = large.tx_steering.len();
    let n = m * n_tx;
    let l_d = block.tx_signals.len();
    let mut phi = CMat::zeros(m * l_d, n_tx);
    let mut psi = CMat::zeros(m * l_d, n * m);
    let mut y = CVec::zeros(m * l_d);
    for (s, x) in block.tx_signals.iter().enumerate() {
        let g = known_reflection(large, r, x);
        phi.view_mut((s * m, 0), (m, n_tx)).copy_from(&g);
        for j in 0..n {
            for q in 0..m {
                psi[(s * m + q, j * m + q)] = x[j];
            }
        }
        y.rows_mut(s * m, m).copy_from(&block.received[s][r]);
    }
    (phi, psi, y)
}

fn quad_inv(a: &CMat, v: &CVec) -> f64 {
    let inv = a.clone().try_inverse().expect("invertible");
    v.dotc(&(inv * v)).re
}

/// `Σ_r (Φᴴy)ᴴ (σ²I + ΦᴴΦ)⁻¹ (Φᴴy)`.
pub fn unaware(block: &SensingBlock, large: &LargeScale, noise_power: f64) -> f64 {
    (0..large.rx_steering.len())
        .map(|r| {
            let (phi, _, y) = regressors(block, large, r);
            let n_tx = phi.ncols();
            let c = CMat::identity(n_tx, n_tx) * C64::new(noise_power, 0.0) + phi.adjoint() * &phi;
            quad_inv(&c, &(phi.adjoint() * y))
        })
        .sum()
}

/// Full-model quadratic form minus the clutter-only one, with `prior[r]` the
/// scaled clutter precision `σ² R_r⁻¹`.
pub fn aware(block: &SensingBlock, large: &LargeScale, prior: &[CMat], noise_power: f64) -> f64 {
    (0..large.rx_steering.len())
        .map(|r| {
            let (phi, psi, y) = regressors(block, large, r);
            let (p, q) = (phi.ncols(), psi.ncols());
            let mut full = CMat::zeros(p + q, p + q);
            let mut regress = CMat::zeros(y.len(), p + q);
            regress.columns_mut(0, p).copy_from(&phi);
            regress.columns_mut(p, q).copy_from(&psi);
            full.copy_from(&(regress.adjoint() * &regress));
            for i in 0..p {
                full[(i, i)] += C64::new(noise_power, 0.0);
            }
            let mut d = psi.adjoint() * &psi + &prior[r];
            full.view_mut((p, p), (q, q)).copy_from(&d);
            let v = regress.adjoint() * &y;
            let b = psi.adjoint() * &y;
            d = (&d + d.adjoint()) * C64::new(0.5, 0.0);
            quad_inv(&full, &v) - quad_inv(&d, &b)
        })
        .sum()
}

/// Small instance: two 2-antenna transmit APs, one receive AP, one UE.
pub fn small_scenario(seed: u64) -> Scenario {
    build_from_value(&json!({
        "master_seed": seed,
        "radio": { "antennas_per_ap": 2, "num_tx_aps": 2, "num_rx_aps": 1, "num_ues": 1 },
    }))
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Worst relative disagreement `(unaware, aware)` between the production
/// statistics and the dense forms over `n` random blocks of three symbols.
pub fn worst_disagreement(n: u64) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for inst in 0..n {
        let s = small_scenario(1000 + inst);
        let large = build_large_scale(&s).unwrap();
        let r = &s.radio;
        let filter = LmmseFilter::new(&large.comm, r.noise_power, r.pilot_length, r.pilot_power).unwrap();
        let prior = ClutterPrior::new(&large, r.noise_power).unwrap();
        let mut rng = stream(inst, "dense-oracle", &[]);
        let real = sample_precoded(&s, &large, &filter, true, &mut rng).unwrap();
        let amp: Vec<f64> = (0..=r.num_ues).map(|_| rng.random::<f64>() * r.max_tx_power.sqrt()).collect();
        let hyp = if inst % 2 == 0 { Hypothesis::H1 } else { Hypothesis::H0 };
        let block = simulate_block(
            &large,
            &real.channels.clutter,
            &real.precoders,
            &amp,
            3,
            r.noise_power,
            hyp,
            SymbolAlphabet::Gaussian,
            &mut rng,
        );
        let inputs = detector_inputs(&block, &large, &prior, r.noise_power, true);
        let dense_unaware = unaware(&block, &large, r.noise_power);
        let dense_aware = aware(&block, &large, &prior.scaled_inverse, r.noise_power);
        assert!(dense_unaware > 0.0 && dense_aware > 0.0);
        worst.0 = worst.0.max(rel(test_clutter_unaware(&inputs).unwrap(), dense_unaware));
        worst.1 = worst.1.max(rel(test_clutter_aware(&inputs).unwrap(), dense_aware));
    }
    worst
}

//! URLLC and sensing performance metrics: downlink SINR lower bound,
//! finite-blocklength error bound, delay, blocklength cap, average sensing
//! SINR and refreshing rate.

use crate::scenario::{SensingRequirement, UrllcRequirement};
use crate::{Error, Result};
use statrs::function::erf::erfc_inv;
use std::f64::consts::{LN_2, SQRT_2};

/// Gaussian tail `Q(x) = P(N(0,1) > x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`q_func`] on `(0, 1)`.
pub fn q_inv(p: f64) -> Result<f64> {
    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return Err(Error::Probability(p));
    }
    let mut x = SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..3 {
        let pdf = normal_pdf(x);
        if pdf == 0.0 {
            break;
        }
        let step = (q_func(x) - p) / pdf;
        x += step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Blocklength split into pilot and data symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlocklengthPlan {
    pub total: usize,
    pub pilot: usize,
}

impl BlocklengthPlan {
    pub fn new(total: usize, pilot: usize) -> Result<Self> {
        if total <= pilot {
            return Err(Error::InfeasibleBlocklength { l_max: total as f64, l_p: pilot });
        }
        Ok(Self { total, pilot })
    }

    pub fn data(&self) -> usize {
        self.total - self.pilot
    }

    /// Pilot fraction `L_p / L`.
    pub fn pilot_fraction(&self) -> f64 {
        self.pilot as f64 / self.total as f64
    }

    /// Block duration in seconds.
    pub fn duration(&self, bandwidth: f64) -> f64 {
        self.total as f64 / bandwidth
    }
}

/// Per-UE URLLC summary at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct UrllcReport {
    pub sinr_lb: Vec<f64>,
    pub dep_ub: Vec<f64>,
    pub delay_ub: Vec<f64>,
    pub channel_dispersion: Vec<f64>,
}

/// `ρ_i b_i² / (Σ_j ρ_j a_ij² + σ²)` for every UE.
///
/// `rho` holds powers (not amplitudes) indexed `0..=N_ue`, index 0 sensing;
/// `a2[i][j]` holds `a_{i+1,j}²`.
pub fn sinr_dl_lb(rho: &[f64], b: &[f64], a2: &[Vec<f64>], noise_power: f64) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(i, bi)| {
            let interference: f64 = rho.iter().zip(&a2[i]).map(|(p, a)| p * a).sum();
            rho[i + 1] * bi * bi / (interference + noise_power)
        })
        .collect()
}

/// `Q(√L_d [ln(1+SINR) − b ln2 / L_d])`.
pub fn dep_upper_bound(sinr: f64, plan: &BlocklengthPlan, bits: f64) -> f64 {
    dep_upper_bound_real(sinr, plan.data() as f64, bits)
}

/// Same bound for a real-valued number of data symbols.
pub fn dep_upper_bound_real(sinr: f64, data_symbols: f64, bits: f64) -> f64 {
    q_func(dep_argument(sinr, data_symbols, bits))
}

/// Argument of the Q-function in the error bound.
pub fn dep_argument(sinr: f64, data_symbols: f64, bits: f64) -> f64 {
    data_symbols.sqrt() * (sinr.ln_1p() - bits * LN_2 / data_symbols)
}

/// `V = 1 − (1+SINR)^{-2}`.
pub fn channel_dispersion(sinr: f64) -> f64 {
    1.0 - (1.0 + sinr).powi(-2)
}

/// `L / (B (1 − ε_th))`.
pub fn delay_upper_bound(total_symbols: f64, bandwidth: f64, eps_th: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eps_th) {
        return Err(Error::Probability(eps_th));
    }
    Ok(total_symbols / (bandwidth * (1.0 - eps_th)))
}

/// Real-valued communication blocklength cap `min_i D_i B (1 − ε_i)`.
pub fn max_blocklength_comm(urllc: &[UrllcRequirement], bandwidth: f64) -> f64 {
    urllc
        .iter()
        .map(|u| u.delay_threshold * bandwidth * (1.0 - u.dep_threshold))
        .fold(f64::INFINITY, f64::min)
}

/// Real-valued sensing blocklength cap `B / R_s^th`.
pub fn max_blocklength_sensing(sensing: &SensingRequirement, bandwidth: f64) -> f64 {
    bandwidth / sensing.refresh_rate_threshold
}

/// Integer blocklength cap; errors when it leaves no data symbols.
pub fn max_blocklength(
    urllc: &[UrllcRequirement],
    sensing: Option<&SensingRequirement>,
    bandwidth: f64,
    pilot_length: usize,
) -> Result<usize> {
    let mut cap = max_blocklength_comm(urllc, bandwidth);
    if let Some(se) = sensing {
        cap = cap.min(max_blocklength_sensing(se, bandwidth));
    }
    // guard against values like 100.00000000000001 from the division
    let floored = (cap * (1.0 + 1e-12)).floor();
    if !floored.is_finite() || floored <= pilot_length as f64 {
        return Err(Error::InfeasibleBlocklength { l_max: cap, l_p: pilot_length });
    }
    Ok(floored as usize)
}

/// `M ρᵀA_Dρ / (M N_rx σ² + ρᵀB_Dρ)` with diagonal `A_D`, `B_D` given as
/// vectors and `amp` holding amplitudes `√ρ_j`.
pub fn avg_sensing_sinr(amp: &[f64], a_d: &[f64], b_d: &[f64], m: usize, n_rx: usize, noise_power: f64) -> f64 {
    let num: f64 = amp.iter().zip(a_d).map(|(q, a)| q * q * a).sum::<f64>() * m as f64;
    let den: f64 = m as f64 * n_rx as f64 * noise_power + amp.iter().zip(b_d).map(|(q, b)| q * q * b).sum::<f64>();
    num / den
}

/// `B / L` updates per second.
pub fn refreshing_rate(total_symbols: f64, bandwidth: f64) -> f64 {
    bandwidth / total_symbols
}

/// URLLC report for a power vector and blocklength.
pub fn urllc_report(
    rho: &[f64],
    b: &[f64],
    a2: &[Vec<f64>],
    noise_power: f64,
    plan: &BlocklengthPlan,
    urllc: &[UrllcRequirement],
    bandwidth: f64,
) -> Result<UrllcReport> {
    let sinr_lb = sinr_dl_lb(rho, b, a2, noise_power);
    let dep_ub = sinr_lb
        .iter()
        .zip(urllc)
        .map(|(s, u)| dep_upper_bound(*s, plan, u.packet_bits))
        .collect();
    let delay_ub = urllc
        .iter()
        .map(|u| delay_upper_bound(plan.total as f64, bandwidth, u.dep_threshold))
        .collect::<Result<Vec<_>>>()?;
    let channel_dispersion = sinr_lb.iter().map(|s| channel_dispersion(*s)).collect();
    Ok(UrllcReport { sinr_lb, dep_ub, delay_ub, channel_dispersion })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::paper_default;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn q_reference_values() {
        // 50-digit reference evaluations
        let cases = [
            (-3.0, 0.99865010196836991),
            (1.0, 0.15865525393145705),
            (2.5, 0.0062096653257761352),
            (4.0, 3.1671241833119921e-5),
            (6.0, 9.8658764503769814e-10),
            (7.0, 1.2798125438858350e-12),
        ];
        for (x, q) in cases {
            assert!(rel(q_func(x), q) < 1e-12, "Q({x})");
        }
        assert_eq!(q_func(0.0), 0.5);
    }

    #[test]
    fn q_inv_reference_values() {
        let cases = [
            (1e-5, 4.2648907939228246),
            (0.03, 1.8807936081512509),
            (1e-3, 3.0902323061678135),
            (0.1, 1.2815515655446005),
            (1e-9, 5.9978070150076869),
        ];
        for (p, x) in cases {
            assert!(rel(q_inv(p).unwrap(), x) < 1e-12, "Q^-1({p})");
        }
        assert!(q_inv(0.5).unwrap().abs() < 1e-15);
        assert!(q_inv(0.0).is_err());
        assert!(q_inv(1.0).is_err());
    }

    #[test]
    fn q_round_trip() {
        let mut x = -3.0;
        while x <= 6.0 {
            let back = q_inv(q_func(x)).unwrap();
            assert!((back - x).abs() < 1e-10, "{x} -> {back}");
            let p = q_func(x);
            assert!(rel(q_func(q_inv(p).unwrap()), p) < 1e-12);
            x += 0.25;
        }
    }

    #[test]
    fn sinr_examples() {
        let b = [1.0, 2.0, 0.5];
        let a2 = vec![vec![0.1, 0.3, 0.2, 0.05], vec![0.0, 0.4, 0.6, 0.1], vec![0.2, 0.2, 0.2, 0.7]];
        let zero = sinr_dl_lb(&[0.0; 4], &b, &a2, 1e-3);
        assert!(zero.iter().all(|s| *s == 0.0));
        let rho = [0.3, 1.1, 0.7, 2.0];
        let s = sinr_dl_lb(&rho, &b, &a2, 0.25);
        let hand = 0.7 * 4.0 / (0.3 * 0.0 + 1.1 * 0.4 + 0.7 * 0.6 + 2.0 * 0.1 + 0.25);
        assert!(rel(s[1], hand) < 1e-14);
        let single = sinr_dl_lb(&[0.0, 2.0], &[3.0], &[vec![0.0, 0.0]], 0.5);
        assert_eq!(single[0], 2.0 * 9.0 / 0.5);
    }

    #[test]
    fn dep_examples() {
        let plan = BlocklengthPlan::new(199, 10).unwrap();
        let sinr = (256.0 * LN_2 / 189.0).exp_m1();
        assert!((dep_upper_bound(sinr, &plan, 256.0) - 0.5).abs() < 1e-12);
        assert!(dep_upper_bound(1e12, &plan, 256.0) < 1e-300);
        // 2^{512/189} − 1 puts the argument at 256 ln2 / √189
        let s = 2f64.powf(512.0 / 189.0) - 1.0;
        let arg = dep_argument(s, 189.0, 256.0);
        assert!(rel(arg, 12.907273844464447) < 1e-12);
        assert!(rel(dep_upper_bound(s, &plan, 256.0), 2.0477261221778824e-38) < 1e-9);
        assert!(rel(dep_upper_bound(10.0, &plan, 256.0), 8.5350769076121904e-90) < 1e-9);
        assert!(rel(dep_argument(20.0, 189.0, 256.0), 28.947989733112743) < 1e-12);
    }

    #[test]
    fn delay_examples() {
        assert!(rel(delay_upper_bound(200.0, 2e5, 0.0).unwrap(), 1e-3) < 1e-15);
        assert!(rel(delay_upper_bound(199.0, 2e5, 1e-5).unwrap(), 9.9500995009950100e-4) < 1e-14);
        assert!(rel(delay_upper_bound(398.0, 2e5, 1e-5).unwrap(), 2.0 * 9.9500995009950100e-4) < 1e-14);
    }

    #[test]
    fn blocklength_cap() {
        let s = paper_default();
        assert_eq!(max_blocklength(&s.urllc, Some(&s.sensing), 2e5, 10).unwrap(), 199);
        let mut se = s.sensing.clone();
        se.refresh_rate_threshold = 2000.0;
        assert_eq!(max_blocklength(&s.urllc, Some(&se), 2e5, 10).unwrap(), 100);
        let mut u = s.urllc.clone();
        u[2].dep_threshold = 1.0 - 1e-9;
        assert!(matches!(
            max_blocklength(&u, Some(&s.sensing), 2e5, 10),
            Err(Error::InfeasibleBlocklength { .. })
        ));
    }

    #[test]
    fn sensing_sinr_examples() {
        assert_eq!(avg_sensing_sinr(&[0.0; 3], &[1.0; 3], &[1.0; 3], 4, 2, 1e-3), 0.0);
        let amp = [0.5, 1.2, 0.3];
        let a = [2.0, 0.5, 1.5];
        let v = avg_sensing_sinr(&amp, &a, &[0.0; 3], 4, 2, 0.1);
        let expect: f64 = amp.iter().zip(&a).map(|(q, a)| a * q * q).sum::<f64>() / (2.0 * 0.1);
        assert!(rel(v, expect) < 1e-14);
        let b = [0.2, 0.1, 0.7];
        let v = avg_sensing_sinr(&amp, &a, &b, 3, 1, 0.1);
        let mut num = 0.0;
        let mut den = 3.0 * 0.1;
        for j in 0..3 {
            num += 3.0 * amp[j] * a[j] * amp[j];
            den += amp[j] * b[j] * amp[j];
        }
        assert!(rel(v, num / den) < 1e-14);
    }

    #[test]
    fn refresh_examples() {
        assert_eq!(refreshing_rate(20000.0, 2e5), 10.0);
        assert_eq!(refreshing_rate(2e5, 2e5), 1.0);
        assert_eq!(refreshing_rate(100.0, 2e5), 2.0 * refreshing_rate(200.0, 2e5));
    }
}

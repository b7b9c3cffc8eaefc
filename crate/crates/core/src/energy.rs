//! Processing-load (GOPS) accounting and the end-to-end power and energy
//! model.
//!
//! Operation counts are real multiplications and divisions with the memory
//! factor included: a complex multiplication counts 8, a real-by-complex
//! multiplication counts 4.

use crate::detection::DetectorKind;
use crate::metrics::BlocklengthPlan;
use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModelParams {
    /// Slope of the load-dependent transmit power.
    pub delta_tr: f64,
    pub ap_static_tx_per_antenna_w: f64,
    pub ap_static_rx_per_antenna_w: f64,
    /// Load-independent cloud power.
    pub cloud_fixed_w: f64,
    /// Idle power per general-purpose processor.
    pub cloud_idle_per_gpp_w: f64,
    /// Slope of the load-dependent processing power.
    pub cloud_load_slope_w: f64,
    pub cooling_efficiency: f64,
    /// Capacity of one processor in GOPS.
    pub gpp_capacity_gops: f64,
}

impl PowerModelParams {
    pub fn ap_static_tx(&self, antennas: usize) -> f64 {
        self.ap_static_tx_per_antenna_w * antennas as f64
    }

    pub fn ap_static_rx(&self, antennas: usize) -> f64 {
        self.ap_static_rx_per_antenna_w * antennas as f64
    }

    /// Joules per operation-per-symbol coefficient `Δ_cloud / (σ_cool C_max) · B / 10⁹`.
    pub fn load_coefficient(&self, bandwidth: f64) -> f64 {
        self.cloud_load_slope_w / (self.cooling_efficiency * self.gpp_capacity_gops) * bandwidth / 1e9
    }
}

/// Operation counts per transmission block (or per data symbol).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpsBreakdown {
    pub ch_est: u64,
    pub rzf: u64,
    pub comm_per_symbol: u64,
    pub zf_sensing: u64,
    /// Sensing transmit processing plus the per-symbol detector terms.
    pub sensing_per_symbol: u64,
    /// Detector terms independent of the number of data symbols.
    pub detector_fixed: u64,
}

impl OpsBreakdown {
    pub fn comm_fixed(&self) -> u64 {
        self.ch_est + self.rzf
    }

    pub fn sensing_fixed(&self) -> u64 {
        self.zf_sensing + self.detector_fixed
    }
}

/// `8(n³ − n)/3`, the LU-inversion cost of an `n × n` complex matrix.
fn inverse_cost(n: u64) -> u64 {
    8 * (n * n * n - n) / 3
}

/// Channel estimation, RZF and per-symbol downlink communication counts.
pub fn count_comm_ops(m: usize, l_p: usize, n_ue: usize, n_tx: usize) -> OpsBreakdown {
    let (m, l_p, n_ue, n_tx) = (m as u64, l_p as u64, n_ue as u64, n_tx as u64);
    let ch_est = if l_p >= n_ue {
        (8 * m * l_p + 8 * m * m) * n_ue * n_tx
    } else {
        8 * m * l_p * l_p * n_tx + 8 * m * m * n_ue * n_tx
    };
    let n = m * n_tx;
    let rzf = (12 * n * n + 16 * n) * n_ue + if n > 0 { inverse_cost(n) } else { 0 };
    OpsBreakdown {
        ch_est,
        rzf,
        comm_per_symbol: 20 * m * n_ue * n_tx,
        ..OpsBreakdown::default()
    }
}

/// Detector counts split into per-data-symbol and fixed parts.
pub fn detector_ops(m: usize, n_tx: usize, n_rx: usize, kind: DetectorKind) -> (u64, u64) {
    let (m, n_tx, n_rx) = (m as u64, n_tx as u64, n_rx as u64);
    let g = 20 * m * n_tx * n_rx;
    let a = 8 * m * n_tx * n_rx;
    let c = 4 * n_rx * (n_tx * n_tx + n_tx) * m;
    match kind {
        DetectorKind::ClutterUnaware => {
            let per_symbol = g + a + c;
            let nt = n_tx * n_rx;
            let fixed = if n_tx > 0 { inverse_cost(n_tx) * n_rx } else { 0 } + 8 * (nt * nt + nt);
            (per_symbol, fixed)
        }
        DetectorKind::ClutterAware => {
            if n_rx == 0 {
                return (0, 0);
            }
            let n = m * n_tx;
            let b = 8 * m * m * n_rx * n_tx;
            let d = 4 * (n * n + n);
            let e = 8 * m * m * n_rx * n_tx * n_tx;
            let per_symbol = g + a + b + c + d + e;
            let k = (1 + m * m) * n_tx * n_rx;
            let j = m * m * n_tx * n_rx;
            let fixed = inverse_cost(k) + inverse_cost(j) + 8 * (k * k + k);
            (per_symbol, fixed)
        }
    }
}

/// Sensing precoder, per-symbol sensing and detector counts.
pub fn count_sensing_ops(m: usize, n_tx: usize, n_rx: usize, kind: DetectorKind) -> OpsBreakdown {
    let n = (m * n_tx) as u64;
    let (det_symbol, det_fixed) = detector_ops(m, n_tx, n_rx, kind);
    OpsBreakdown {
        zf_sensing: 8 * n * n + 12 * n,
        sensing_per_symbol: 12 * n + det_symbol,
        detector_fixed: det_fixed,
        ..OpsBreakdown::default()
    }
}

/// All counts for a scenario; `sensing = None` drops every sensing term.
pub fn count_ops(s: &Scenario, sensing: Option<DetectorKind>) -> OpsBreakdown {
    let r = &s.radio;
    let comm = count_comm_ops(r.antennas_per_ap, r.pilot_length, r.num_ues, r.num_tx_aps);
    match sensing {
        None => comm,
        Some(kind) => {
            let se = count_sensing_ops(r.antennas_per_ap, r.num_tx_aps, r.num_rx_aps, kind);
            OpsBreakdown {
                zf_sensing: se.zf_sensing,
                sensing_per_symbol: se.sensing_per_symbol,
                detector_fixed: se.detector_fixed,
                ..comm
            }
        }
    }
}

/// Processing load in GOPS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gops {
    pub comm: f64,
    pub sensing: f64,
    pub cloud: f64,
}

/// GOPS for a (possibly fractional) blocklength `total` with `data` data symbols.
pub fn gops_real(total: f64, data: f64, bandwidth: f64, ops: &OpsBreakdown) -> Gops {
    let scale = bandwidth / (total * 1e9);
    let comm = scale * (ops.comm_fixed() as f64 + ops.comm_per_symbol as f64 * data);
    let sensing = scale * (ops.sensing_fixed() as f64 + ops.sensing_per_symbol as f64 * data);
    Gops { comm, sensing, cloud: comm + sensing }
}

pub fn gops(plan: &BlocklengthPlan, bandwidth: f64, ops: &OpsBreakdown) -> Gops {
    gops_real(plan.total as f64, plan.data() as f64, bandwidth, ops)
}

/// Number of processors needed for a load.
pub fn num_gpp(c_cloud: f64, params: &PowerModelParams) -> u64 {
    (c_cloud / params.gpp_capacity_gops).ceil().max(0.0) as u64
}

/// Cloud power in watts.
pub fn cloud_power(c_cloud: f64, params: &PowerModelParams) -> f64 {
    let n = num_gpp(c_cloud, params) as f64;
    params.cloud_fixed_w
        + (n * params.cloud_idle_per_gpp_w + params.cloud_load_slope_w * c_cloud / params.gpp_capacity_gops)
            / params.cooling_efficiency
}

/// Power components at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    /// `Δ^tr ‖ρ‖²`.
    pub tx_part: f64,
    pub ap_static_tx: f64,
    pub ap_static_rx: f64,
    pub cloud: f64,
    pub n_gpp: u64,
    pub gops: Gops,
    pub total: f64,
}

impl PowerBreakdown {
    pub fn ap_static(&self) -> f64 {
        self.ap_static_tx + self.ap_static_rx
    }
}

fn active_rx_aps(s: &Scenario, sensing: bool) -> usize {
    if sensing {
        s.radio.num_rx_aps
    } else {
        0
    }
}

/// Total network power. Receive APs are only powered when sensing is active.
pub fn total_power(rho_norm2: f64, plan: &BlocklengthPlan, s: &Scenario, ops: &OpsBreakdown, sensing: bool) -> PowerBreakdown {
    let pm = &s.power_model;
    let m = s.radio.antennas_per_ap;
    let load = gops(plan, s.radio.bandwidth, ops);
    let tx_part = pm.delta_tr * rho_norm2;
    let ap_static_tx = s.radio.num_tx_aps as f64 * pm.ap_static_tx(m);
    let ap_static_rx = active_rx_aps(s, sensing) as f64 * pm.ap_static_rx(m);
    let cloud = cloud_power(load.cloud, pm);
    PowerBreakdown {
        tx_part,
        ap_static_tx,
        ap_static_rx,
        cloud,
        n_gpp: num_gpp(load.cloud, pm),
        gops: load,
        total: tx_part + ap_static_tx + ap_static_rx + cloud,
    }
}

/// Constants of the energy objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// Static radio power plus load-independent cloud power (W).
    pub p_fixed: f64,
    /// Per-block processing energy times `B` (W·symbols).
    pub f1: f64,
    /// Per-data-symbol processing power (W).
    pub f2: f64,
    pub n_gpp: u64,
}

/// Objective constants with the processor count frozen at `n_gpp`.
pub fn objective_terms_with_gpp(s: &Scenario, ops: &OpsBreakdown, n_gpp: u64, sensing: bool) -> ObjectiveTerms {
    let pm = &s.power_model;
    let m = s.radio.antennas_per_ap;
    let p_fixed = s.radio.num_tx_aps as f64 * pm.ap_static_tx(m)
        + active_rx_aps(s, sensing) as f64 * pm.ap_static_rx(m)
        + pm.cloud_fixed_w
        + n_gpp as f64 * pm.cloud_idle_per_gpp_w / pm.cooling_efficiency;
    let coef = pm.load_coefficient(s.radio.bandwidth);
    ObjectiveTerms {
        p_fixed,
        f1: coef * (ops.comm_fixed() + ops.sensing_fixed()) as f64,
        f2: coef * (ops.comm_per_symbol + ops.sensing_per_symbol) as f64,
        n_gpp,
    }
}

/// Objective constants with the processor count evaluated at a real blocklength.
pub fn objective_terms_real(s: &Scenario, total: f64, ops: &OpsBreakdown, sensing: bool) -> ObjectiveTerms {
    let data = total - s.radio.pilot_length as f64;
    let load = gops_real(total, data, s.radio.bandwidth, ops);
    objective_terms_with_gpp(s, ops, num_gpp(load.cloud, &s.power_model), sensing)
}

pub fn objective_terms(s: &Scenario, plan: &BlocklengthPlan, ops: &OpsBreakdown, sensing: bool) -> ObjectiveTerms {
    objective_terms_real(s, plan.total as f64, ops, sensing)
}

/// Energy per block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_total: f64,
    /// `E_total` without the constant `f1/B`.
    pub f_value: f64,
    pub terms: ObjectiveTerms,
}

/// `E_total = (L P_FIXED + L_d f2 + f1 + Δ^tr L_d ‖ρ‖²) / B`.
pub fn total_energy(rho_norm2: f64, plan: &BlocklengthPlan, s: &Scenario, ops: &OpsBreakdown, sensing: bool) -> EnergyReport {
    let terms = objective_terms(s, plan, ops, sensing);
    energy_from_terms(rho_norm2, plan.total as f64, plan.data() as f64, s, &terms)
}

pub fn energy_from_terms(rho_norm2: f64, total: f64, data: f64, s: &Scenario, terms: &ObjectiveTerms) -> EnergyReport {
    let b = s.radio.bandwidth;
    let f_value = (total * terms.p_fixed + data * terms.f2 + s.power_model.delta_tr * data * rho_norm2) / b;
    EnergyReport { e_total: f_value + terms.f1 / b, f_value, terms: *terms }
}

/// Energy per block split by consumer; the fields sum to `E_total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub tx_aps: f64,
    pub rx_aps: f64,
    pub comm_processing: f64,
    pub sensing_processing: f64,
    /// Load-independent cloud power and idle processors.
    pub others: f64,
    pub total: f64,
}

pub fn energy_breakdown(rho_norm2: f64, plan: &BlocklengthPlan, s: &Scenario, ops: &OpsBreakdown, sensing: bool) -> EnergyBreakdown {
    let pm = &s.power_model;
    let b = s.radio.bandwidth;
    let l = plan.total as f64;
    let ld = plan.data() as f64;
    let p = total_power(rho_norm2, plan, s, ops, sensing);
    let coef = pm.load_coefficient(b);
    let tx_aps = l / b * p.ap_static_tx + ld / b * p.tx_part;
    let rx_aps = l / b * p.ap_static_rx;
    let comm_processing = coef * (ops.comm_fixed() as f64 + ops.comm_per_symbol as f64 * ld) / b;
    let sensing_processing = coef * (ops.sensing_fixed() as f64 + ops.sensing_per_symbol as f64 * ld) / b;
    let others = l / b * (pm.cloud_fixed_w + p.n_gpp as f64 * pm.cloud_idle_per_gpp_w / pm.cooling_efficiency);
    EnergyBreakdown {
        tx_aps,
        rx_aps,
        comm_processing,
        sensing_processing,
        others,
        total: tx_aps + rx_aps + comm_processing + sensing_processing + others,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::paper_default;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn comm_count_examples() {
        let ops = count_comm_ops(4, 10, 8, 16);
        assert_eq!(ops.ch_est, 57_344);
        assert_eq!(ops.rzf, 1_100_288);
        assert_eq!(ops.comm_per_symbol, 20 * 4 * 8 * 16);
        let none = count_comm_ops(4, 10, 0, 16);
        assert_eq!(none.ch_est, 0);
        assert_eq!(none.comm_per_symbol, 0);
        let short = count_comm_ops(2, 3, 5, 2);
        assert_eq!(short.ch_est, 8 * 2 * 9 * 2 + 8 * 4 * 5 * 2);
    }

    #[test]
    fn sensing_count_examples() {
        let ops = count_sensing_ops(1, 1, 1, DetectorKind::ClutterUnaware);
        assert_eq!(ops.detector_fixed, 16);
        assert_eq!(ops.sensing_per_symbol - 12, 36);
        assert_eq!(ops.zf_sensing, 8 + 12);
        let aware = count_sensing_ops(4, 16, 2, DetectorKind::ClutterAware);
        let unaware = count_sensing_ops(4, 16, 2, DetectorKind::ClutterUnaware);
        assert!(aware.detector_fixed > 1000 * unaware.detector_fixed);
        for kind in [DetectorKind::ClutterAware, DetectorKind::ClutterUnaware] {
            assert_eq!(detector_ops(4, 16, 0, kind), (0, 0));
        }
    }

    #[test]
    fn gops_scaling() {
        let plan = BlocklengthPlan::new(200, 10).unwrap();
        let zero = gops(&plan, 2e5, &OpsBreakdown::default());
        assert_eq!(zero.cloud, 0.0);
        let ops = OpsBreakdown { ch_est: 1000, rzf: 500, zf_sensing: 70, detector_fixed: 30, ..Default::default() };
        let a = gops(&plan, 2e5, &ops);
        let b = gops(&BlocklengthPlan::new(400, 10).unwrap(), 2e5, &ops);
        assert!(rel(a.cloud, 2.0 * b.cloud) < 1e-15);
        assert_eq!(a.cloud, a.comm + a.sensing);

        let s = paper_default();
        let full = count_ops(&s, Some(DetectorKind::ClutterAware));
        let short = gops(&BlocklengthPlan::new(200, 10).unwrap(), 2e5, &full);
        let long = gops(&BlocklengthPlan::new(2000, 10).unwrap(), 2e5, &full);
        assert!(long.cloud < short.cloud);
    }

    #[test]
    fn cloud_power_examples() {
        let pm = paper_default().power_model;
        assert_eq!(cloud_power(0.0, &pm), 120.0);
        assert_eq!(num_gpp(0.0, &pm), 0);
        assert!(rel(cloud_power(700.94, &pm), 530.0) < 1e-9);
        let above = 700.94 * (1.0 + 1e-12);
        assert_eq!(num_gpp(above, &pm), 2);
        assert!((cloud_power(above, &pm) - cloud_power(700.94, &pm) - 90.0).abs() < 1e-6);
    }

    #[test]
    fn static_power() {
        let s = paper_default();
        let plan = BlocklengthPlan::new(199, 10).unwrap();
        let p = total_power(0.0, &plan, &s, &OpsBreakdown::default(), true);
        assert!(rel(p.total, 16.0 * 6.8 * 4.0 + 2.0 * 6.8 * 4.0 + 120.0) < 1e-12);
        assert!(rel(p.total, 609.6) < 1e-12);
        let q = total_power(0.1, &plan, &s, &OpsBreakdown::default(), true);
        assert!(((q.total - p.total) - 0.4).abs() < 1e-12);
        assert!(rel(q.tx_part + q.ap_static() + q.cloud, q.total) < 1e-15);
    }

    #[test]
    fn energy_consistency() {
        let s = paper_default();
        let ops = count_ops(&s, Some(DetectorKind::ClutterUnaware));
        let plan = BlocklengthPlan::new(150, 10).unwrap();
        let rho2 = 0.37;
        let e = total_energy(rho2, &plan, &s, &ops, true);
        let p = total_power(rho2, &plan, &s, &ops, true);
        let l = 150.0;
        let ld = 140.0;
        let b = s.radio.bandwidth;
        let from_power = l / b * (p.total - p.tx_part) + ld / b * p.tx_part;
        assert!(rel(e.e_total, from_power) < 1e-9);
        assert!(rel(e.e_total - e.f_value, e.terms.f1 / b) < 1e-9);
        let br = energy_breakdown(rho2, &plan, &s, &ops, true);
        assert!(rel(br.total, e.e_total) < 1e-12);
        let zero = total_energy(0.0, &plan, &s, &ops, true);
        assert!(rel(zero.e_total, (l * zero.terms.p_fixed + ld * zero.terms.f2 + zero.terms.f1) / b) < 1e-12);
        assert!(rel(e.e_total - zero.e_total, s.power_model.delta_tr * ld * rho2 / b) < 1e-9);
    }

    #[test]
    fn terms_without_ops() {
        let s = paper_default();
        let t = objective_terms(&s, &BlocklengthPlan::new(100, 10).unwrap(), &OpsBreakdown::default(), true);
        assert_eq!(t.f1, 0.0);
        assert_eq!(t.f2, 0.0);
        assert!(rel(t.p_fixed, 609.6) < 1e-12);
    }
}

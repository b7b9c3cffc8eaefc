//! Property checks on the building blocks of the allocation problem.

use cfisac::detection::DetectorKind;
use cfisac::energy::{cloud_power, count_ops, energy_breakdown, num_gpp, total_energy, total_power};
use cfisac::linalg::CVec;
use cfisac::metrics::{dep_upper_bound_real, q_func, q_inv, BlocklengthPlan};
use cfisac::optimizer::subproblem::{build, sensing_residual, Constants, Layout};
use cfisac::optimizer::{IterateState, Mode};
use cfisac::precoding::zf_sensing_precoder;
use cfisac::rng::{complex_normal, stream};
use cfisac::scenario::paper_default;
use proptest::prelude::*;

fn constants(a_d: Vec<f64>, b_d: Vec<f64>, gamma: f64) -> Constants {
    let n_ue = a_d.len() - 1;
    Constants {
        mode: Mode::E2eIsac,
        n_ue,
        max_tx_power: 0.1,
        noise_power: 1e-3,
        b_hat: vec![20.0; n_ue],
        a_hat: vec![vec![1.0; n_ue + 1]; n_ue],
        f: vec![vec![0.5; n_ue + 1]; 2],
        a_d_hat: a_d,
        b_d_hat: b_d,
        gamma,
        q_inv: vec![4.26; n_ue],
        bits_ln2: vec![256.0 * std::f64::consts::LN_2; n_ue],
        pilot: 3.0,
        l_lo: 4.0,
        l_hi: 199.0,
        lbar_min: 1e-3 / 196.0,
        bandwidth: 2e5,
        delta_p: 0.4,
        per_symbol: 600.0,
        f2: 10.0,
        lambda: 10.0,
        reference: 0.6,
    }
}

fn state(q: Vec<f64>, l_bar: f64) -> IterateState {
    let n_ue = q.len() - 1;
    IterateState { q, chi: vec![1.0; n_ue], r: vec![1e-3; n_ue], l: 50.0, l_bar, chi0: 0.0 }
}

fn row<'a>(sub: &'a cfisac::optimizer::subproblem::Subproblem, label: &str) -> &'a cfisac::optimizer::barrier::Row {
    sub.program.rows.iter().find(|r| r.label == label).expect("row present")
}

fn amps(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..0.316f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    // the convexified sensing row overshoots the exact one by exactly (q − q_c)ᵀÂ(q − q_c)
    #[test]
    fn sensing_row_is_conservative_and_tangent(
        a_d in proptest::collection::vec(0.01..50.0f64, 3),
        b_d in proptest::collection::vec(0.01..5.0f64, 3),
        gamma in 0.1..10.0f64,
        q_c in amps(3),
        q in amps(3),
    ) {
        let c = constants(a_d.clone(), b_d, gamma);
        let lin = state(q_c.clone(), 1.0 / 47.0);
        let sub = build(&c, &lin, false).unwrap();
        let at = state(q.clone(), 1.0 / 47.0);
        let z = sub.layout.pack(&c, &at);
        let convex = row(&sub, "sensing SINR").violation(&z);
        let exact = sensing_residual(&c, &at);
        let gap: f64 = (0..3).map(|j| a_d[j] * (q[j] - q_c[j]).powi(2) / c.max_tx_power).sum();
        prop_assert!(convex >= exact - 1e-12 * (1.0 + exact.abs()));
        prop_assert!((convex - exact - gap).abs() <= 1e-9 * (1.0 + convex.abs() + exact.abs()));
    }
}

proptest! {
    #[test]
    fn blocklength_tangent_is_conservative(lbar_c in 1e-3..1.0f64, lbar in 1e-3..1.0f64, l in 4.0..199.0f64) {
        let c = constants(vec![1.0; 3], vec![1.0; 3], 1.0);
        let sub = build(&c, &state(vec![0.1; 3], lbar_c), false).unwrap();
        let mut at = state(vec![0.1; 3], lbar);
        at.l = l;
        let z = sub.layout.pack(&c, &at);
        let tangent = row(&sub, "blocklength tangent").violation(&z);
        let exact = l - c.pilot - 1.0 / lbar;
        prop_assert!(tangent >= exact - 1e-9 * exact.abs().max(1.0));
        at.l_bar = lbar_c;
        let z = sub.layout.pack(&c, &at);
        let touch = row(&sub, "blocklength tangent").violation(&z);
        prop_assert!((touch - (l - c.pilot - 1.0 / lbar_c)).abs() <= 1e-9 * (l + 1.0 / lbar_c));
    }

    #[test]
    fn layout_round_trips(q in amps(3), lbar in 1e-3..1.0f64, chi0 in 0.0..5.0f64) {
        let c = constants(vec![1.0; 3], vec![1.0; 3], 1.0);
        let lay = Layout { n_ue: 2, sensing: true, slack: true };
        let st = IterateState { chi0, ..state(q, lbar) };
        let back = lay.unpack(&c, &lay.pack(&c, &st));
        for (a, b) in back.q.iter().zip(&st.q) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        prop_assert!((back.l_bar - lbar).abs() <= 1e-15 * lbar.max(1.0));
        prop_assert!((back.chi0 - chi0).abs() <= 1e-12 * chi0.max(1.0));
    }

    #[test]
    fn energy_grows_with_power_and_blocklength(
        rho_lo in 0.0..1.5f64,
        extra in 1e-6..1.0f64,
        total in 12usize..199,
        detector in prop_oneof![Just(DetectorKind::ClutterAware), Just(DetectorKind::ClutterUnaware)],
    ) {
        let s = paper_default();
        let ops = count_ops(&s, Some(detector));
        let plan = BlocklengthPlan::new(total, s.radio.pilot_length).unwrap();
        let lo = total_energy(rho_lo, &plan, &s, &ops, true).e_total;
        let hi = total_energy(rho_lo + extra, &plan, &s, &ops, true).e_total;
        prop_assert!(hi > lo);
        let longer = BlocklengthPlan::new(total + 1, s.radio.pilot_length).unwrap();
        prop_assert!(total_power(rho_lo, &longer, &s, &ops, true).total <= total_power(rho_lo, &plan, &s, &ops, true).total + 1e-9);
        let br = energy_breakdown(rho_lo, &plan, &s, &ops, true);
        let parts = br.tx_aps + br.rx_aps + br.comm_processing + br.sensing_processing + br.others;
        prop_assert!(((parts - br.total) / br.total).abs() <= 1e-12);
        prop_assert!(((br.total - lo) / lo).abs() <= 1e-12);
    }

    #[test]
    fn cloud_power_is_monotone(c in 0.0..5000.0f64, dc in 0.0..500.0f64) {
        let pm = paper_default().power_model;
        prop_assert!(cloud_power(c + dc, &pm) >= cloud_power(c, &pm));
        prop_assert!(num_gpp(c + dc, &pm) >= num_gpp(c, &pm));
        prop_assert!(num_gpp(c, &pm) as f64 * pm.gpp_capacity_gops >= c);
    }

    #[test]
    fn error_bound_decreases_with_sinr_and_length(sinr in 0.5..200.0f64, ds in 0.01..10.0f64, n in 20.0..400.0f64) {
        let base = dep_upper_bound_real(sinr, n, 256.0);
        prop_assert!(dep_upper_bound_real(sinr + ds, n, 256.0) <= base);
        prop_assert!(dep_upper_bound_real(sinr, n + 1.0, 256.0) <= base);
    }

    #[test]
    fn tail_function_round_trips(p in 1e-9..0.5f64) {
        let x = q_inv(p).unwrap();
        prop_assert!(((q_func(x) - p) / p).abs() <= 1e-9);
    }

    #[test]
    fn sensing_beam_is_orthogonal_to_estimates(seed in any::<u64>(), n_ue in 1usize..6) {
        let mut rng = stream(seed, "zf-property", &[]);
        let n = 12;
        let est: Vec<CVec> = (0..n_ue).map(|_| CVec::from_fn(n, |_, _| complex_normal(&mut rng))).collect();
        let h0 = CVec::from_fn(n, |_, _| complex_normal(&mut rng));
        let w0 = zf_sensing_precoder(&est, &h0).unwrap();
        prop_assert!((w0.norm() - 1.0).abs() <= 1e-12);
        let scale = est.iter().map(|h| h.norm()).fold(0.0, f64::max);
        for h in &est {
            prop_assert!(h.dotc(&w0).norm() <= 1e-10 * scale);
        }
    }
}

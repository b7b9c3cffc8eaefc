//! Scenario construction and validation.
//!
//! A scenario is described by one JSON document. Any field left out falls back
//! to the `paper-default` preset, so `{}` is a complete configuration. Powers
//! in the document may be given in dB (`*_dbm`, `*_db`, `*_dbsm` keys); the
//! built [`Scenario`] stores everything in linear units.

use crate::channel::ChannelModelParams;
use crate::energy::PowerModelParams;
use crate::rng::{self, purpose};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PAPER_DEFAULT: &str = "paper-default";
const PAPER_DEFAULT_JSON: &str = include_str!("../presets/paper-default.json");

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Radius of the circle around the target on which receive APs beyond the
/// first two are placed.
const RX_RING_RADIUS_M: f64 = 50.0;

/// 3D position in meters.
pub type Position = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    pub pilot_length: usize,
    pub num_tx_aps: usize,
    pub num_rx_aps: usize,
    pub antennas_per_ap: usize,
    pub num_ues: usize,
    /// Per-AP maximum downlink power in watts.
    pub max_tx_power: f64,
    pub pilot_power: f64,
    /// RZF regularization in watts.
    pub rzf_regularization: f64,
    /// Target RCS variance in m².
    pub rcs_variance: f64,
    pub clutter_scaling: f64,
}

impl RadioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Length of the collective channel vector, `N_tx·M`.
    pub fn total_antennas(&self) -> usize {
        self.num_tx_aps * self.antennas_per_ap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrllcRequirement {
    pub packet_bits: f64,
    pub dep_threshold: f64,
    pub delay_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingRequirement {
    /// Required average sensing SINR, linear.
    pub sinr_threshold: f64,
    /// Minimum sensing updates per second.
    pub refresh_rate_threshold: f64,
    pub false_alarm_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub tx_ap_positions: Vec<Position>,
    pub rx_ap_positions: Vec<Position>,
    pub ue_positions: Vec<Position>,
    pub target_position: Position,
    pub area_side: f64,
}

impl Geometry {
    pub fn distance(a: &Position, b: &Position) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    pub fn horizontal_distance(a: &Position, b: &Position) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// Azimuth and elevation (radians) of the direction `from → to`.
    pub fn azimuth_elevation(from: &Position, to: &Position) -> (f64, f64) {
        let dx = to[0] - from[0];
        let dy = to[1] - from[1];
        let dz = to[2] - from[2];
        (dy.atan2(dx), dz.atan2(dx.hypot(dy)))
    }

    pub fn tx_to_target_distance(&self, k: usize) -> f64 {
        Self::distance(&self.tx_ap_positions[k], &self.target_position)
    }

    pub fn rx_to_target_distance(&self, r: usize) -> f64 {
        Self::distance(&self.rx_ap_positions[r], &self.target_position)
    }

    /// Angles from transmit AP `k` to the target.
    pub fn tx_target_angles(&self, k: usize) -> (f64, f64) {
        Self::azimuth_elevation(&self.tx_ap_positions[k], &self.target_position)
    }

    /// Angles from the target to receive AP `r`.
    pub fn target_rx_angles(&self, r: usize) -> (f64, f64) {
        Self::azimuth_elevation(&self.target_position, &self.rx_ap_positions[r])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub radio: RadioConfig,
    pub urllc: Vec<UrllcRequirement>,
    pub sensing: SensingRequirement,
    pub geometry: Geometry,
    pub power_model: PowerModelParams,
    pub channel_model: ChannelModelParams,
    pub master_seed: u64,
}

// ---------------------------------------------------------------------------
// Config document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadioDoc {
    carrier_frequency_hz: f64,
    bandwidth_hz: f64,
    noise_power_dbm: f64,
    pilot_length: usize,
    num_tx_aps: usize,
    num_rx_aps: usize,
    antennas_per_ap: usize,
    num_ues: usize,
    max_tx_power_w: f64,
    pilot_power_w: f64,
    rzf_regularization_w: Option<f64>,
    rcs_dbsm: f64,
    clutter_scaling: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct UrllcDoc {
    packet_bits: f64,
    dep_threshold: f64,
    delay_threshold_s: f64,
    #[serde(default)]
    per_ue: Option<Vec<UrllcEntryDoc>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct UrllcEntryDoc {
    packet_bits: f64,
    dep_threshold: f64,
    delay_threshold_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensingDoc {
    sinr_threshold_db: f64,
    refresh_rate_threshold: f64,
    false_alarm_prob: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryDoc {
    area_side_m: f64,
    ap_height_m: f64,
    ue_height_m: f64,
    target_height_m: f64,
    target_position: [f64; 2],
    tx_ap_positions: Option<Vec<[f64; 2]>>,
    rx_ap_positions: Option<Vec<[f64; 2]>>,
    ue_positions: Option<Vec<[f64; 2]>>,
    random_ap_placement: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default)]
    #[allow(dead_code)]
    preset: Option<String>,
    master_seed: u64,
    radio: RadioDoc,
    urllc: UrllcDoc,
    sensing: SensingDoc,
    geometry: GeometryDoc,
    power_model: PowerModelParams,
    channel_model: ChannelModelParams,
}

/// The preset document as a JSON tree.
pub fn preset(name: &str) -> Result<Value> {
    match name {
        PAPER_DEFAULT => Ok(serde_json::from_str(PAPER_DEFAULT_JSON).expect("embedded preset parses")),
        other => Err(Error::Parse {
            path: "preset".into(),
            message: format!("unknown preset `{other}`"),
        }),
    }
}

/// Recursively overlay `patch` onto `base`. Objects merge key by key; any
/// other value replaces.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Set a dotted path (e.g. `sensing.sinr_threshold_db`) in a config tree.
/// The path must already exist in the full (preset-merged) schema.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| Error::Parse {
            path: parts[..i].join("."),
            message: "not an object".into(),
        })?;
        if !obj.contains_key(*part) {
            return Err(Error::Parse {
                path: parts[..=i].join("."),
                message: "no such field".into(),
            });
        }
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj.get_mut(*part).expect("checked");
    }
    Ok(())
}

/// Expand a user document into the full config tree (preset merged in).
pub fn resolve_document(user: &Value) -> Result<Value> {
    let name = user
        .get("preset")
        .and_then(Value::as_str)
        .unwrap_or(PAPER_DEFAULT);
    let mut base = preset(name)?;
    merge_json(&mut base, user);
    if let Some(obj) = base.as_object_mut() {
        obj.insert("preset".into(), Value::String(name.to_string()));
    }
    Ok(base)
}

/// Parse a JSON config document and build the scenario.
pub fn build_scenario(config_document: &str) -> Result<Scenario> {
    let user: Value = serde_json::from_str(config_document).map_err(|e| Error::Parse {
        path: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    build_from_value(&user)
}

/// Build from an already-parsed document.
pub fn build_from_value(user: &Value) -> Result<Scenario> {
    let full = resolve_document(user)?;
    let doc: ScenarioDoc = serde_path_to_error::deserialize(full).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let scenario = from_doc(&doc)?;
    let violations = validate(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::InvalidScenario(violations))
    }
}

/// Master seed of Monte Carlo drop `drop` under experiment seed `seed`.
pub fn drop_seed(seed: u64, drop: u64) -> u64 {
    rng::child_seed(seed, purpose::DROP, drop)
}

/// The `paper-default` scenario.
pub fn paper_default() -> Scenario {
    build_scenario("{}").expect("paper-default preset is valid")
}

fn from_doc(doc: &ScenarioDoc) -> Result<Scenario> {
    let r = &doc.radio;
    let noise_power = 10f64.powf((r.noise_power_dbm - 30.0) / 10.0);
    let radio = RadioConfig {
        carrier_frequency: r.carrier_frequency_hz,
        bandwidth: r.bandwidth_hz,
        noise_power,
        pilot_length: r.pilot_length,
        num_tx_aps: r.num_tx_aps,
        num_rx_aps: r.num_rx_aps,
        antennas_per_ap: r.antennas_per_ap,
        num_ues: r.num_ues,
        max_tx_power: r.max_tx_power_w,
        pilot_power: r.pilot_power_w,
        rzf_regularization: r.rzf_regularization_w.unwrap_or(noise_power),
        rcs_variance: 10f64.powf(r.rcs_dbsm / 10.0),
        clutter_scaling: r.clutter_scaling,
    };

    let urllc = match &doc.urllc.per_ue {
        Some(list) => list
            .iter()
            .map(|e| UrllcRequirement {
                packet_bits: e.packet_bits,
                dep_threshold: e.dep_threshold,
                delay_threshold: e.delay_threshold_s,
            })
            .collect(),
        None => vec![
            UrllcRequirement {
                packet_bits: doc.urllc.packet_bits,
                dep_threshold: doc.urllc.dep_threshold,
                delay_threshold: doc.urllc.delay_threshold_s,
            };
            radio.num_ues
        ],
    };

    let sensing = SensingRequirement {
        sinr_threshold: 10f64.powf(doc.sensing.sinr_threshold_db / 10.0),
        refresh_rate_threshold: doc.sensing.refresh_rate_threshold,
        false_alarm_prob: doc.sensing.false_alarm_prob,
    };

    let geometry = build_geometry(&doc.geometry, &radio, doc.master_seed);

    Ok(Scenario {
        radio,
        urllc,
        sensing,
        geometry,
        power_model: doc.power_model.clone(),
        channel_model: doc.channel_model.clone(),
        master_seed: doc.master_seed,
    })
}

/// Cell centers of a near-square grid covering the area.
pub fn grid_positions(n: usize, side: f64) -> Vec<[f64; 2]> {
    if n == 0 {
        return Vec::new();
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let mut out = Vec::with_capacity(n);
    'outer: for row in 0..rows {
        for col in 0..cols {
            if out.len() == n {
                break 'outer;
            }
            out.push([
                (col as f64 + 0.5) * side / cols as f64,
                (row as f64 + 0.5) * side / rows as f64,
            ]);
        }
    }
    out
}

/// Default receive-AP placement: on a ring of radius 50 m around the target,
/// starting west of it. For one and two receivers this gives (200, 250) and
/// (300, 250) with the target at the area center.
pub fn default_rx_positions(n: usize, target: [f64; 2]) -> Vec<[f64; 2]> {
    (0..n)
        .map(|j| {
            let ang = std::f64::consts::PI + std::f64::consts::TAU * j as f64 / n as f64;
            let x = target[0] + RX_RING_RADIUS_M * ang.cos();
            let y = target[1] + RX_RING_RADIUS_M * ang.sin();
            // snap round-off so the canonical positions are exact
            [(x * 1e9).round() / 1e9, (y * 1e9).round() / 1e9]
        })
        .collect()
}

fn build_geometry(g: &GeometryDoc, radio: &RadioConfig, seed: u64) -> Geometry {
    let lift = |p: [f64; 2], h: f64| -> Position { [p[0], p[1], h] };

    let tx2d = match &g.tx_ap_positions {
        Some(p) => p.clone(),
        None if g.random_ap_placement => {
            let mut rng = rng::stream(seed, purpose::AP_PLACEMENT, &[]);
            (0..radio.num_tx_aps)
                .map(|_| [rng.random::<f64>() * g.area_side_m, rng.random::<f64>() * g.area_side_m])
                .collect()
        }
        None => grid_positions(radio.num_tx_aps, g.area_side_m),
    };
    let rx2d = match &g.rx_ap_positions {
        Some(p) => p.clone(),
        None => default_rx_positions(radio.num_rx_aps, g.target_position),
    };
    let ue2d = match &g.ue_positions {
        Some(p) => p.clone(),
        None => {
            let mut rng = rng::stream(seed, purpose::UE_PLACEMENT, &[]);
            (0..radio.num_ues)
                .map(|_| [rng.random::<f64>() * g.area_side_m, rng.random::<f64>() * g.area_side_m])
                .collect()
        }
    };

    Geometry {
        tx_ap_positions: tx2d.into_iter().map(|p| lift(p, g.ap_height_m)).collect(),
        rx_ap_positions: rx2d.into_iter().map(|p| lift(p, g.ap_height_m)).collect(),
        ue_positions: ue2d.into_iter().map(|p| lift(p, g.ue_height_m)).collect(),
        target_position: lift(g.target_position, g.target_height_m),
        area_side: g.area_side_m,
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Check every scenario invariant; an empty list means the scenario is valid.
pub fn validate(s: &Scenario) -> Vec<String> {
    let mut v = Vec::new();
    let mut check = |ok: bool, field: &str, rule: &str| {
        if !ok {
            v.push(format!("{field}: {rule}"));
        }
    };
    let r = &s.radio;
    check(r.carrier_frequency > 0.0, "radio.carrier_frequency", "must be > 0");
    check(r.bandwidth > 0.0, "radio.bandwidth", "must be > 0");
    check(r.noise_power > 0.0, "radio.noise_power", "must be > 0");
    check(r.pilot_length >= 1, "radio.pilot_length", "must be >= 1");
    check(r.antennas_per_ap >= 1, "radio.antennas_per_ap", "must be >= 1");
    check(r.num_tx_aps >= 1, "radio.num_tx_aps", "must be >= 1");
    check(r.num_rx_aps >= 1, "radio.num_rx_aps", "must be >= 1");
    check(r.num_ues >= 1, "radio.num_ues", "must be >= 1");
    check(r.max_tx_power > 0.0, "radio.max_tx_power", "must be > 0");
    check(r.pilot_power > 0.0, "radio.pilot_power", "must be > 0");
    check(r.rzf_regularization > 0.0, "radio.rzf_regularization", "must be > 0");
    check(r.rcs_variance >= 0.0, "radio.rcs_variance", "must be >= 0");
    check(
        r.clutter_scaling > 0.0 && r.clutter_scaling <= 1.0,
        "radio.clutter_scaling",
        "must lie in (0, 1]",
    );
    check(
        r.pilot_length >= r.num_ues,
        "radio.pilot_length",
        "orthogonal pilots require pilot_length >= num_ues",
    );

    check(
        s.urllc.len() == r.num_ues,
        "urllc",
        "one requirement per UE expected",
    );
    for (i, u) in s.urllc.iter().enumerate() {
        check(u.packet_bits >= 1.0, &format!("urllc[{i}].packet_bits"), "must be >= 1");
        check(
            u.dep_threshold > 0.0 && u.dep_threshold < 0.5,
            &format!("urllc[{i}].dep_threshold"),
            "must lie in (0, 0.5)",
        );
        check(u.delay_threshold > 0.0, &format!("urllc[{i}].delay_threshold"), "must be > 0");
    }

    let se = &s.sensing;
    check(se.sinr_threshold > 0.0, "sensing.sinr_threshold", "must be > 0");
    check(se.refresh_rate_threshold > 0.0, "sensing.refresh_rate_threshold", "must be > 0");
    check(
        se.false_alarm_prob > 0.0 && se.false_alarm_prob < 1.0,
        "sensing.false_alarm_prob",
        "must lie in (0, 1)",
    );

    let g = &s.geometry;
    check(g.area_side > 0.0, "geometry.area_side", "must be > 0");
    check(
        g.tx_ap_positions.len() == r.num_tx_aps,
        "geometry.tx_ap_positions",
        "length must equal num_tx_aps",
    );
    check(
        g.rx_ap_positions.len() == r.num_rx_aps,
        "geometry.rx_ap_positions",
        "length must equal num_rx_aps",
    );
    check(
        g.ue_positions.len() == r.num_ues,
        "geometry.ue_positions",
        "length must equal num_ues",
    );
    let inside = |p: &Position| p[0] >= 0.0 && p[0] <= g.area_side && p[1] >= 0.0 && p[1] <= g.area_side;
    for (name, list) in [
        ("tx_ap_positions", &g.tx_ap_positions),
        ("rx_ap_positions", &g.rx_ap_positions),
        ("ue_positions", &g.ue_positions),
    ] {
        for (i, p) in list.iter().enumerate() {
            check(inside(p), &format!("geometry.{name}[{i}]"), "outside the area");
        }
    }
    check(inside(&g.target_position), "geometry.target_position", "outside the area");
    for (name, list) in [("tx_ap_positions", &g.tx_ap_positions), ("rx_ap_positions", &g.rx_ap_positions)] {
        for (i, p) in list.iter().enumerate() {
            check(
                Geometry::horizontal_distance(p, &g.target_position) > 1e-9,
                &format!("geometry.{name}[{i}]"),
                "coincides with the target",
            );
        }
    }

    let pm = &s.power_model;
    for (name, value) in [
        ("delta_tr", pm.delta_tr),
        ("ap_static_tx_per_antenna_w", pm.ap_static_tx_per_antenna_w),
        ("ap_static_rx_per_antenna_w", pm.ap_static_rx_per_antenna_w),
        ("cloud_fixed_w", pm.cloud_fixed_w),
        ("cloud_idle_per_gpp_w", pm.cloud_idle_per_gpp_w),
        ("cloud_load_slope_w", pm.cloud_load_slope_w),
        ("gpp_capacity_gops", pm.gpp_capacity_gops),
    ] {
        check(value > 0.0, &format!("power_model.{name}"), "must be > 0");
    }
    check(
        pm.cooling_efficiency > 0.0 && pm.cooling_efficiency <= 1.0,
        "power_model.cooling_efficiency",
        "must lie in (0, 1]",
    );
    check(
        s.channel_model.angle_spread_deg > 0.0,
        "channel_model.angle_spread_deg",
        "must be > 0",
    );
    check(
        s.channel_model.clutter_cancellation_db >= 0.0,
        "channel_model.clutter_cancellation_db",
        "must be >= 0",
    );
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::array_response;
    use serde_json::json;

    #[test]
    fn paper_default_values() {
        let s = paper_default();
        assert_eq!(s.radio.num_tx_aps, 16);
        assert_eq!(s.radio.antennas_per_ap, 4);
        assert_eq!(s.radio.num_ues, 8);
        assert_eq!(s.radio.pilot_length, 10);
        assert_eq!(s.radio.bandwidth, 2.0e5);
        assert_eq!(s.radio.max_tx_power, 0.1);
        assert_eq!(s.geometry.target_position, [250.0, 250.0, 1.5]);
        assert_eq!(s.geometry.area_side, 500.0);
        assert_eq!(s.radio.rzf_regularization, s.radio.noise_power);
        assert!((s.radio.noise_power / 3.981_071_705_534_97e-15 - 1.0).abs() < 1e-12);
        assert_eq!(s.geometry.tx_ap_positions[0], [62.5, 62.5, 10.0]);
        assert_eq!(s.geometry.tx_ap_positions[15], [437.5, 437.5, 10.0]);
        assert!(validate(&s).is_empty());
    }

    #[test]
    fn two_receivers_at_documented_coordinates() {
        let s = build_scenario(r#"{"radio": {"num_rx_aps": 2}}"#).unwrap();
        assert_eq!(s.geometry.rx_ap_positions[0], [200.0, 250.0, 10.0]);
        assert_eq!(s.geometry.rx_ap_positions[1], [300.0, 250.0, 10.0]);
        let one = build_scenario(r#"{"radio": {"num_rx_aps": 1}}"#).unwrap();
        assert_eq!(one.geometry.rx_ap_positions, vec![[200.0, 250.0, 10.0]]);
    }

    #[test]
    fn target_on_ap_is_rejected() {
        let err = build_scenario(r#"{"geometry": {"target_position": [62.5, 62.5]}}"#).unwrap_err();
        match err {
            Error::InvalidScenario(v) => {
                assert!(v.iter().any(|m| m.contains("coincides with the target")), "{v:?}")
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parse_errors_carry_field_path() {
        let err = build_scenario(r#"{"radio": {"num_ues": "eight"}}"#).unwrap_err();
        match err {
            Error::Parse { path, .. } => assert_eq!(path, "radio.num_ues"),
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(build_scenario("{not json"), Err(Error::Parse { .. })));
        assert!(matches!(
            build_scenario(r#"{"radio": {"bogus": 1}}"#),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn validate_flags_single_dep_threshold() {
        let mut s = paper_default();
        s.urllc[0].dep_threshold = 0.9;
        let v = validate(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].starts_with("urllc[0].dep_threshold"));
    }

    #[test]
    fn validate_flags_short_pilots() {
        let mut s = paper_default();
        s.radio.pilot_length = 5;
        let v = validate(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("orthogonal pilots"));
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_scenario(r#"{"master_seed": 9}"#).unwrap();
        let b = build_scenario(r#"{"master_seed": 9}"#).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = build_scenario(r#"{"master_seed": 10}"#).unwrap();
        assert_ne!(a.geometry.ue_positions, c.geometry.ue_positions);
    }

    #[test]
    fn explicit_ue_positions_are_used() {
        let s = build_from_value(&json!({
            "radio": {"num_ues": 2},
            "geometry": {"ue_positions": [[10.0, 20.0], [30.0, 40.0]]}
        }))
        .unwrap();
        assert_eq!(s.geometry.ue_positions, vec![[10.0, 20.0, 1.5], [30.0, 40.0, 1.5]]);
        assert_eq!(s.urllc.len(), 2);
    }

    #[test]
    fn set_path_rejects_unknown_fields() {
        let mut doc = resolve_document(&json!({})).unwrap();
        set_path(&mut doc, "sensing.sinr_threshold_db", json!(3.0)).unwrap();
        assert_eq!(doc["sensing"]["sinr_threshold_db"], json!(3.0));
        assert!(set_path(&mut doc, "sensing.nope", json!(1)).is_err());
    }

    #[test]
    fn angles_agree_with_coordinates() {
        let s = paper_default();
        let m = s.radio.antennas_per_ap;
        for k in 0..s.radio.num_tx_aps {
            let (az, el) = s.geometry.tx_target_angles(k);
            let a = array_response(m, az, el);
            let p = s.geometry.tx_ap_positions[k];
            let t = s.geometry.target_position;
            let dir = (t[1] - p[1]) / Geometry::distance(&p, &t);
            for (idx, z) in a.iter().enumerate() {
                let expect = crate::C64::from_polar(1.0, std::f64::consts::PI * idx as f64 * dir);
                assert!((z - expect).norm() <= 1e-12 * expect.norm());
            }
        }
    }
}

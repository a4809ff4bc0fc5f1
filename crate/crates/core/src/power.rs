//! Switch power model: chassis + linecards + per-port utilization, with a
//! sleeping mode that draws a reduced fraction of the load-independent base.

use std::collections::BTreeMap;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_PROFILE_TOML: &str = include_str!("../profiles/default.toml");

/// Slack allowed on utilization factors that come out of floating point
/// allocation arithmetic.
const FACTOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub chassis_w: f64,
    pub linecard_w: f64,
    pub num_linecards: u32,
    /// Watts drawn by one port of the given link rate (bit/s) at full utilization.
    pub port_w_per_rate: BTreeMap<u64, f64>,
    /// Fraction of the base power saved while sleeping.
    pub sleep_saving_fraction: f64,
}

/// On-disk layout; map keys are strings in both TOML and JSON.
#[derive(Debug, Serialize, Deserialize)]
struct ProfileFile {
    chassis_w: f64,
    linecard_w: f64,
    num_linecards: u32,
    port_w_per_rate: BTreeMap<String, f64>,
    sleep_saving_fraction: f64,
}

fn parse_rate(key: &str) -> Result<u64> {
    let key = key.trim();
    if let Ok(v) = key.parse::<u64>() {
        return Ok(v);
    }
    match key.parse::<f64>() {
        Ok(v) if v > 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(Error::InvalidProfile(format!("bad link rate key `{key}`"))),
    }
}

impl TryFrom<ProfileFile> for PowerProfile {
    type Error = Error;

    fn try_from(f: ProfileFile) -> Result<Self> {
        let port_w_per_rate = f
            .port_w_per_rate
            .iter()
            .map(|(k, &w)| parse_rate(k).map(|r| (r, w)))
            .collect::<Result<_>>()?;
        let profile = PowerProfile {
            chassis_w: f.chassis_w,
            linecard_w: f.linecard_w,
            num_linecards: f.num_linecards,
            port_w_per_rate,
            sleep_saving_fraction: f.sleep_saving_fraction,
        };
        profile.validate()?;
        Ok(profile)
    }
}

impl From<&PowerProfile> for ProfileFile {
    fn from(p: &PowerProfile) -> Self {
        ProfileFile {
            chassis_w: p.chassis_w,
            linecard_w: p.linecard_w,
            num_linecards: p.num_linecards,
            port_w_per_rate: p
                .port_w_per_rate
                .iter()
                .map(|(r, w)| (r.to_string(), *w))
                .collect(),
            sleep_saving_fraction: p.sleep_saving_fraction,
        }
    }
}

impl Default for PowerProfile {
    /// The calibrated profile shipped in `profiles/default.toml`.
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_PROFILE_TOML).expect("shipped default profile is valid")
    }
}

impl PowerProfile {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidProfile(format!("{name} must be >= 0, got {v}")))
            }
        };
        nonneg("chassis_w", self.chassis_w)?;
        nonneg("linecard_w", self.linecard_w)?;
        for (rate, w) in &self.port_w_per_rate {
            nonneg(&format!("port power for rate {rate}"), *w)?;
        }
        let s = self.sleep_saving_fraction;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidProfile(format!(
                "sleep_saving_fraction must lie in [0, 1], got {s}"
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str::<ProfileFile>(s)?.try_into()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<ProfileFile>(s)?.try_into()
    }

    /// Loads a profile; `.json` files are parsed as JSON, anything else as TOML.
    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ProfileFile::from(self)).expect("profile serializes")
    }

    pub fn with_sleep_saving(mut self, s: f64) -> Result<Self> {
        self.sleep_saving_fraction = s;
        self.validate()?;
        Ok(self)
    }

    /// Returns a copy with every power constant multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        PowerProfile {
            chassis_w: self.chassis_w * factor,
            linecard_w: self.linecard_w * factor,
            num_linecards: self.num_linecards,
            port_w_per_rate: self
                .port_w_per_rate
                .iter()
                .map(|(r, w)| (*r, w * factor))
                .collect(),
            sleep_saving_fraction: self.sleep_saving_fraction,
        }
    }

    /// Load-independent draw of an active switch.
    pub fn base_w(&self) -> f64 {
        self.chassis_w + f64::from(self.num_linecards) * self.linecard_w
    }

    pub fn sleeping_w(&self) -> f64 {
        (1.0 - self.sleep_saving_fraction) * self.base_w()
    }

    pub fn port_w(&self, rate_bps: u64) -> Result<f64> {
        self.port_w_per_rate
            .get(&rate_bps)
            .copied()
            .ok_or(Error::MissingPortRate(rate_bps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SwitchMode {
    Active,
    Sleeping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortLoad {
    pub rate_bps: u64,
    /// Carried rate divided by link rate, in `[0, 1]`.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPowerState {
    pub mode: SwitchMode,
    pub ports: Vec<PortLoad>,
}

impl SwitchPowerState {
    pub fn sleeping(ports: impl IntoIterator<Item = u64>) -> Self {
        SwitchPowerState {
            mode: SwitchMode::Sleeping,
            ports: ports
                .into_iter()
                .map(|rate_bps| PortLoad {
                    rate_bps,
                    factor: 0.0,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.ports {
            if !(p.factor >= -FACTOR_EPS && p.factor <= 1.0 + FACTOR_EPS) {
                return Err(Error::InvalidSwitchState(format!(
                    "utilization factor {} outside [0, 1]",
                    p.factor
                )));
            }
            if self.mode == SwitchMode::Sleeping && p.factor.abs() > FACTOR_EPS {
                return Err(Error::InvalidSwitchState(
                    "sleeping switch with nonzero port utilization".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Power drawn by one switch.
pub fn switch_power(profile: &PowerProfile, state: &SwitchPowerState) -> Result<f64> {
    state.validate()?;
    match state.mode {
        SwitchMode::Sleeping => Ok(profile.sleeping_w()),
        SwitchMode::Active => {
            // group utilization by port configuration, then weight by its power
            let mut per_rate: BTreeMap<u64, f64> = BTreeMap::new();
            for p in &state.ports {
                *per_rate.entry(p.rate_bps).or_default() += p.factor.clamp(0.0, 1.0);
            }
            let mut total = profile.base_w();
            for (rate, util) in per_rate {
                total += profile.port_w(rate)? * util;
            }
            Ok(total)
        }
    }
}

/// Total draw of all switches, sleeping ones included at their reduced draw.
pub fn network_power(profile: &PowerProfile, states: &[SwitchPowerState]) -> Result<f64> {
    states.iter().map(|s| switch_power(profile, s)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const GBPS: u64 = 1_000_000_000;

    fn profile(s: f64) -> PowerProfile {
        PowerProfile {
            chassis_w: 100.0,
            linecard_w: 20.0,
            num_linecards: 2,
            port_w_per_rate: BTreeMap::from([(GBPS, 1.5)]),
            sleep_saving_fraction: s,
        }
    }

    fn active(factors: &[f64]) -> SwitchPowerState {
        SwitchPowerState {
            mode: SwitchMode::Active,
            ports: factors
                .iter()
                .map(|&factor| PortLoad {
                    rate_bps: GBPS,
                    factor,
                })
                .collect(),
        }
    }

    #[test]
    fn idle_active_is_base() {
        let p = profile(0.6);
        assert_eq!(switch_power(&p, &active(&[0.0; 4])).unwrap(), 140.0);
    }

    #[test]
    fn loaded_ports_add_linearly() {
        let p = profile(0.6);
        let w = switch_power(&p, &active(&[1.0, 0.5, 0.0, 0.25])).unwrap();
        assert!((w - (140.0 + 1.5 * 1.75)).abs() < 1e-12);
    }

    #[test]
    fn full_saving_sleep_is_zero() {
        let p = profile(1.0);
        assert_eq!(switch_power(&p, &SwitchPowerState::sleeping([GBPS; 4])).unwrap(), 0.0);
    }

    #[test]
    fn sleeping_network_is_fraction_of_idle() {
        let p = profile(0.6);
        let sleeping: Vec<_> = (0..20).map(|_| SwitchPowerState::sleeping([GBPS; 4])).collect();
        let idle: Vec<_> = (0..20).map(|_| active(&[0.0; 4])).collect();
        let a = network_power(&p, &sleeping).unwrap();
        let b = network_power(&p, &idle).unwrap();
        assert!((a - 0.4 * b).abs() < 1e-9);
    }

    #[test]
    fn one_active_among_sleepers() {
        let p = profile(0.6);
        let n = 20;
        let mut states: Vec<_> = (0..n).map(|_| SwitchPowerState::sleeping([GBPS; 4])).collect();
        states[7] = active(&[0.0; 4]);
        let base = p.base_w();
        let expected = base + (n as f64 - 1.0) * 0.4 * base;
        assert!((network_power(&p, &states).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn missing_rate_is_an_error() {
        let p = profile(0.6);
        let mut st = active(&[0.5]);
        st.ports[0].rate_bps = 10 * GBPS;
        assert!(matches!(switch_power(&p, &st), Err(Error::MissingPortRate(_))));
    }

    #[test]
    fn invalid_states_rejected() {
        let p = profile(0.6);
        assert!(switch_power(&p, &active(&[1.5])).is_err());
        let mut st = SwitchPowerState::sleeping([GBPS]);
        st.ports[0].factor = 0.2;
        assert!(switch_power(&p, &st).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(profile(1.2).validate().is_err());
        assert!(profile(-0.1).validate().is_err());
        let mut p = profile(0.5);
        p.chassis_w = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn default_profile_loads() {
        let p = PowerProfile::default();
        assert_eq!(p.num_linecards, 1);
        assert!(p.port_w_per_rate.contains_key(&GBPS));
        assert_eq!(p.sleep_saving_fraction, 0.6);
    }

    #[test]
    fn json_and_toml_agree() {
        let p = PowerProfile::default();
        let back = PowerProfile::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(p, back);
        let toml_src = r#"
            chassis_w = 100.0
            linecard_w = 20.0
            num_linecards = 2
            sleep_saving_fraction = 0.6
            [port_w_per_rate]
            "1e9" = 1.5
        "#;
        assert_eq!(PowerProfile::from_toml_str(toml_src).unwrap(), profile(0.6));
    }

    #[test]
    fn sleeping_never_exceeds_idle() {
        for s in [0.0, 0.2, 0.6, 1.0] {
            let p = profile(s);
            let sleep = switch_power(&p, &SwitchPowerState::sleeping([GBPS; 4])).unwrap();
            let idle = switch_power(&p, &active(&[0.0; 4])).unwrap();
            assert!(sleep <= idle);
            assert_eq!(sleep == idle, s == 0.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_utilization(
                factors in proptest::collection::vec(0.0f64..=1.0, 1..8),
                idx in 0usize..8,
                bump in 0.0f64..=1.0,
            ) {
                let p = profile(0.6);
                let before = switch_power(&p, &active(&factors)).unwrap();
                let mut raised = factors.clone();
                let i = idx % raised.len();
                raised[i] = (raised[i] + bump).min(1.0);
                let after = switch_power(&p, &active(&raised)).unwrap();
                prop_assert!(after >= before);
            }

            #[test]
            fn additive_over_disjoint_sets(
                a in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 4), 0..6),
                b in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 4), 0..6),
            ) {
                let p = profile(0.4);
                let sa: Vec<_> = a.iter().map(|f| active(f)).collect();
                let sb: Vec<_> = b.iter().map(|f| active(f)).collect();
                let joint: Vec<_> = sa.iter().chain(sb.iter()).cloned().collect();
                let lhs = network_power(&p, &joint).unwrap();
                let rhs = network_power(&p, &sa).unwrap() + network_power(&p, &sb).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }
        }
    }
}

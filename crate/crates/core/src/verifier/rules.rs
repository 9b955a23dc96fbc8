use serde::{Deserialize, Serialize};

/// Thresholds of the rule cascade and of the fiducial detectors.
///
/// Deserialises from TOML with every key optional; omitted keys keep their
/// defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    pub lbbb: LbbbRules,
    pub acutmi: AcutmiRules,
    pub lvh: LvhRules,
    pub on: OnRules,
    pub measure: MeasureConfig,
}

impl RulesConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("rules serialise")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbbbRules {
    /// QRS duration that must be exceeded.
    pub qrs_ms: f64,
}

impl Default for LbbbRules {
    fn default() -> Self {
        Self { qrs_ms: 120.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StThresholds {
    /// Elevation required in every lead other than V2 and V3.
    pub default: f64,
    /// How many adjacent leads must exceed `default`.
    pub contiguous: usize,
    pub v23: V23Thresholds,
}

impl Default for StThresholds {
    fn default() -> Self {
        Self {
            default: 100.0,
            contiguous: 2,
            v23: V23Thresholds::default(),
        }
    }
}

/// V2/V3 elevation limits in µV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct V23Thresholds {
    pub female: f64,
    pub male_40_plus: f64,
    pub male_under_40: f64,
}

impl Default for V23Thresholds {
    fn default() -> Self {
        Self {
            female: 150.0,
            male_40_plus: 200.0,
            male_under_40: 250.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcutmiRules {
    pub st_uv: StThresholds,
    /// Males younger than this are not assessed.
    pub min_age_male: f64,
    /// Females younger than this are not assessed.
    pub min_age_female: f64,
    /// Age splitting the two male V2/V3 limits.
    pub male_age_split: f64,
}

impl Default for AcutmiRules {
    fn default() -> Self {
        Self {
            st_uv: StThresholds::default(),
            min_age_male: 20.0,
            min_age_female: 30.0,
            male_age_split: 40.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LvhRules {
    /// `S(V1) + max(R(V5), R(V6))` that must be exceeded.
    pub voltage_mv: f64,
    pub min_age: f64,
    /// Width of the borderline band below `voltage_mv`, as a fraction of it.
    pub borderline_fraction: f64,
}

impl Default for LvhRules {
    fn default() -> Self {
        Self {
            voltage_mv: 3.5,
            min_age: 35.0,
            borderline_fraction: 0.10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnRules {
    /// QTc below this is otherwise normal.
    pub qtc_ms: f64,
    /// ST depression at or beyond this is abnormal; between the floor and this
    /// it is otherwise normal.
    pub st_dep_mv: f64,
    /// Same for elevation that does not meet the infarct rule.
    pub st_elev_mv: f64,
    /// ST deviations up to this are ignored.
    pub st_floor_mv: f64,
}

impl Default for OnRules {
    fn default() -> Self {
        Self {
            qtc_ms: 340.0,
            st_dep_mv: 0.03,
            st_elev_mv: 0.05,
            st_floor_mv: 0.02,
        }
    }
}

/// Fiducial detector settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    /// Leading samples whose median is each lead's baseline.
    pub baseline_samples: usize,
    /// QRS boundary: summed slope falls below this fraction of its peak.
    pub slope_fraction: f64,
    /// Sub-threshold run that ends the QRS search.
    pub gap_samples: usize,
    /// The QRS peak is searched away from the window edges by this much.
    pub edge_samples: usize,
    /// Smallest summed slope (mV per sample) accepted as a QRS.
    pub qrs_slope_floor: f64,
    /// P/T boundary: envelope falls below this fraction of the wave peak.
    pub wave_fraction: f64,
    /// How far before QRS onset the P wave is searched.
    pub p_search_ms: f64,
    pub p_floor_mv: f64,
    pub t_floor_mv: f64,
    /// Delay after QRS offset before the T search starts.
    pub t_skip_ms: f64,
    /// ST level is sampled this long after the QRS offset.
    pub st_offset_ms: f64,
    pub notch_dip_mv: f64,
    pub notch_min_peak_mv: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            baseline_samples: 20,
            slope_fraction: 0.09,
            gap_samples: 5,
            edge_samples: 25,
            qrs_slope_floor: 0.01,
            wave_fraction: 0.044,
            p_search_ms: 300.0,
            p_floor_mv: 0.03,
            t_floor_mv: 0.05,
            t_skip_ms: 20.0,
            st_offset_ms: 60.0,
            notch_dip_mv: 0.05,
            notch_min_peak_mv: 0.1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_keys_override_defaults() {
        let r = RulesConfig::from_toml(
            "[lbbb]\nqrs_ms = 130\n[acutmi.st_uv.v23]\nfemale = 160\n[on]\nqtc_ms = 350\n",
        )
        .unwrap();
        assert_eq!(r.lbbb.qrs_ms, 130.0);
        assert_eq!(r.acutmi.st_uv.v23.female, 160.0);
        assert_eq!(r.acutmi.st_uv.v23.male_40_plus, 200.0);
        assert_eq!(r.acutmi.st_uv.default, 100.0);
        assert_eq!(r.on.qtc_ms, 350.0);
        assert_eq!(r.lvh, LvhRules::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RulesConfig::from_toml("[lbbb]\nqrs = 1\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let r = RulesConfig::default();
        assert_eq!(RulesConfig::from_toml(&r.to_toml()).unwrap(), r);
    }
}

//! Case documents: buses, branches, device placements and the operating point.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_omega0() -> f64 {
    2.0 * std::f64::consts::PI * 60.0
}

fn default_v_ref() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    /// System power base, MVA.
    pub base_mva: f64,
    /// Frequency base, rad/s. Converts p.u. frequency droop into angle rate.
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub sgs: Vec<SgUnit>,
    pub gfms: Vec<GfmUnit>,
    #[serde(default)]
    pub loads: Vec<Load>,
    pub operating_point: OperatingPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    /// Voltage magnitude, p.u. (power-flow record; not used by the reduction).
    pub vm: f64,
    /// Voltage angle, rad (power-flow record).
    pub va: f64,
    /// Susceptance tying the bus to the stiff reference, p.u.
    #[serde(default)]
    pub shunt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Series susceptance magnitude 1/x, p.u. Lossless.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgUnit {
    pub id: String,
    pub bus: String,
    /// Internal (transient) reactance, p.u. on system base.
    pub xd: f64,
    /// Inertia constant M_k, s²·p.u.
    pub m: f64,
    /// Damping D_k, s·p.u.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfmUnit {
    pub id: String,
    pub bus: String,
    /// Coupling reactance between the internal bus and the POI, p.u. on system base.
    pub x: f64,
    /// Inverter capacity, MVA.
    pub s_mva: f64,
    /// Active power-frequency droop setting as a fraction (0.05 = 5 %).
    pub mp_setting: f64,
    /// Reactive droop setting, stored only.
    #[serde(default)]
    pub mq_setting: f64,
    /// Power-measurement filter time constant, s.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub id: String,
    pub bus: String,
    /// Nominal demand, p.u. on system base. Used for storage sizing.
    pub p: f64,
    /// Constant-impedance equivalent susceptance to the reference, p.u.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    /// Voltage magnitude of the stiff reference node, p.u.
    #[serde(default = "default_v_ref")]
    pub v_ref: f64,
    pub internal: Vec<InternalState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalState {
    pub device: String,
    /// Internal voltage magnitude, p.u.
    pub e: f64,
    /// Internal angle relative to the reference, rad.
    pub delta: f64,
}

/// Parse and validate a case document.
pub fn load_case(text: &str) -> Result<NetworkCase> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let case: NetworkCase = serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        Error::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    case.validate()?;
    Ok(case)
}

pub fn load_case_file(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_case(&text)
}

fn positive(what: String, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} must be positive, got {v}")))
    }
}

fn nonnegative(what: String, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} must be non-negative, got {v}")))
    }
}

impl NetworkCase {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("case serializes");
        s.push('\n');
        s
    }

    pub fn n_g(&self) -> usize {
        self.sgs.len()
    }

    pub fn n_i(&self) -> usize {
        self.gfms.len()
    }

    pub fn total_load(&self) -> f64 {
        self.loads.iter().map(|l| l.p).sum()
    }

    pub fn validate(&self) -> Result<()> {
        positive("base_mva".into(), self.base_mva)?;
        positive("omega0".into(), self.omega0)?;
        positive("operating_point.v_ref".into(), self.operating_point.v_ref)?;
        if self.sgs.is_empty() {
            return Err(Error::Invalid("case needs at least one SG (n_g >= 1)".into()));
        }
        if self.gfms.is_empty() {
            return Err(Error::Invalid("case needs at least one GFM (n_i >= 1)".into()));
        }

        let mut buses = HashSet::new();
        for bus in &self.buses {
            if !buses.insert(bus.id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "bus",
                    id: bus.id.clone(),
                });
            }
            nonnegative(format!("bus {} shunt", bus.id), bus.shunt)?;
        }
        let bus_ref = |owner: &str, id: &str| -> Result<()> {
            if buses.contains(id) {
                Ok(())
            } else {
                Err(Error::DanglingReference {
                    owner: owner.to_string(),
                    kind: "bus",
                    id: id.to_string(),
                })
            }
        };

        let mut branches = HashSet::new();
        for br in &self.branches {
            if !branches.insert(br.id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "branch",
                    id: br.id.clone(),
                });
            }
            bus_ref(&format!("branch {}", br.id), &br.from)?;
            bus_ref(&format!("branch {}", br.id), &br.to)?;
            if br.from == br.to {
                return Err(Error::Invalid(format!("branch {} is a self-loop", br.id)));
            }
            positive(format!("branch {} susceptance", br.id), br.b)?;
        }

        let mut devices = HashSet::new();
        for sg in &self.sgs {
            if !devices.insert(sg.id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "device",
                    id: sg.id.clone(),
                });
            }
            bus_ref(&format!("sg {}", sg.id), &sg.bus)?;
            positive(format!("sg {} xd", sg.id), sg.xd)?;
        }
        for g in &self.gfms {
            if !devices.insert(g.id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "device",
                    id: g.id.clone(),
                });
            }
            bus_ref(&format!("gfm {}", g.id), &g.bus)?;
            positive(format!("gfm {} x", g.id), g.x)?;
        }

        let mut loads = HashSet::new();
        for l in &self.loads {
            if !loads.insert(l.id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "load",
                    id: l.id.clone(),
                });
            }
            bus_ref(&format!("load {}", l.id), &l.bus)?;
            nonnegative(format!("load {} b", l.id), l.b)?;
        }

        let mut seen = HashSet::new();
        for st in &self.operating_point.internal {
            if !devices.contains(st.device.as_str()) {
                return Err(Error::DanglingReference {
                    owner: "operating_point".into(),
                    kind: "device",
                    id: st.device.clone(),
                });
            }
            if !seen.insert(st.device.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "operating-point device",
                    id: st.device.clone(),
                });
            }
            positive(format!("operating point e of {}", st.device), st.e)?;
            if !st.delta.is_finite() {
                return Err(Error::Invalid(format!("operating point delta of {}", st.device)));
            }
        }
        for id in &devices {
            if !seen.contains(id) {
                return Err(Error::Invalid(format!(
                    "operating_point has no internal state for device \"{id}\""
                )));
            }
        }
        Ok(())
    }

    /// Internal (E, δ) in kept-bus order: SGs first, then GFMs.
    pub fn internal_states(&self) -> (Vec<f64>, Vec<f64>) {
        let by_id: HashMap<&str, &InternalState> = self
            .operating_point
            .internal
            .iter()
            .map(|s| (s.device.as_str(), s))
            .collect();
        self.device_ids()
            .iter()
            .map(|id| {
                let st = by_id[id.as_str()];
                (st.e, st.delta)
            })
            .unzip()
    }

    pub fn device_ids(&self) -> Vec<String> {
        self.sgs
            .iter()
            .map(|s| s.id.clone())
            .chain(self.gfms.iter().map(|g| g.id.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
  "base_mva": 100.0,
  "buses": [
    { "id": "b1", "vm": 1.0, "va": 0.0, "shunt": 0.5 },
    { "id": "b2", "vm": 1.0, "va": 0.0, "shunt": 0.5 }
  ],
  "branches": [ { "id": "l1", "from": "b1", "to": "b2", "b": 5.0 } ],
  "sgs": [ { "id": "G1", "bus": "b1", "xd": 0.3, "m": 0.4, "d": 0.02 } ],
  "gfms": [ { "id": "I1", "bus": "b2", "x": 0.5, "s_mva": 50.0, "mp_setting": 0.05, "tau": 0.02 } ],
  "operating_point": { "internal": [
    { "device": "G1", "e": 1.0, "delta": 0.1 },
    { "device": "I1", "e": 1.0, "delta": 0.0 }
  ] }
}"#;

    #[test]
    fn minimal_case_parses() {
        let case = load_case(MINIMAL).unwrap();
        assert_eq!(case.n_g(), 1);
        assert_eq!(case.n_i(), 1);
        assert!((case.omega0 - 376.99111843077515).abs() < 1e-9);
        let again = load_case(&case.to_json()).unwrap();
        assert_eq!(case, again);
    }

    #[test]
    fn dangling_branch_names_bus() {
        let text = MINIMAL.replace(r#""to": "b2""#, r#""to": "b99""#);
        let err = load_case(&text).unwrap_err();
        assert!(matches!(err, Error::DanglingReference { .. }));
        assert!(err.to_string().contains("b99"), "{err}");
    }

    #[test]
    fn duplicate_bus_rejected() {
        let text = MINIMAL.replace(r#""id": "b2", "vm""#, r#""id": "b1", "vm""#);
        let err = load_case(&text).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { kind: "bus", .. }), "{err}");
    }

    #[test]
    fn parse_error_carries_field_path() {
        let text = MINIMAL.replace(r#""xd": 0.3"#, r#""xd": "fast""#);
        match load_case(&text).unwrap_err() {
            Error::Parse { path, line, .. } => {
                assert_eq!(path, "sgs[0].xd");
                assert!(line > 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_operating_state_rejected() {
        let text = MINIMAL.replace(
            r#",
    { "device": "I1", "e": 1.0, "delta": 0.0 }"#,
            "",
        );
        let err = load_case(&text).unwrap_err();
        assert!(err.to_string().contains("I1"), "{err}");
    }
}

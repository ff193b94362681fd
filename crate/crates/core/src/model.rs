//! A case carried through reduction, linearization and parameter extraction.

use crate::devices::DevicePark;
use crate::error::Result;
use crate::netmodel::{
    build_jacobians, gamma_bounds, kron_reduce, validate_assumptions, AssumptionReport,
    GridStrength, JacobianSet, NetworkCase, ReducedNetwork,
};
use crate::statespace::{assemble_state_matrix, StateMatrix};

#[derive(Debug, Clone)]
pub struct GridModel {
    pub case: NetworkCase,
    pub reduced: ReducedNetwork,
    pub jac: JacobianSet,
    pub strength: GridStrength,
    pub park: DevicePark,
}

impl GridModel {
    pub fn from_case(case: NetworkCase) -> Result<Self> {
        case.validate()?;
        let reduced = kron_reduce(&case)?;
        let jac = build_jacobians(&reduced)?;
        let strength = gamma_bounds(&jac)?;
        let park = DevicePark::from_case(&case)?;
        Ok(Self {
            case,
            reduced,
            jac,
            strength,
            park,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_case(crate::netmodel::load_case(text)?)
    }

    pub fn state_matrix(&self) -> Result<StateMatrix> {
        assemble_state_matrix(&self.jac, &self.park)
    }

    pub fn assumptions(&self) -> AssumptionReport {
        validate_assumptions(&self.jac)
    }

    pub fn with_park(&self, park: DevicePark) -> Self {
        Self {
            park,
            ..self.clone()
        }
    }

    /// Every inverter at droop setting `mp_setting` (fraction).
    pub fn with_droop_setting(&self, mp_setting: f64) -> Result<Self> {
        Ok(self.with_park(self.park.with_droop_setting(mp_setting)?))
    }

    /// Inverter capacities scaled proportionally to `total_mva`.
    pub fn with_total_capacity(&self, total_mva: f64) -> Result<Self> {
        Ok(self.with_park(self.park.with_total_capacity(total_mva)?))
    }

    /// Total demand in MVA (loads are stored in p.u.).
    pub fn total_load_mva(&self) -> f64 {
        self.case.total_load() * self.case.base_mva
    }
}

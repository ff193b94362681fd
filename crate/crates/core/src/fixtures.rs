//! Cases bundled with the crate.

use crate::error::Result;
use crate::model::GridModel;
use crate::netmodel::{load_case, NetworkCase};

/// Two generators, three grid-forming inverters, six buses.
pub const TOY2X3: &str = include_str!("../cases/toy2x3.json");

pub fn toy2x3_case() -> NetworkCase {
    load_case(TOY2X3).expect("bundled case parses")
}

pub fn toy2x3() -> Result<GridModel> {
    GridModel::from_case(toy2x3_case())
}

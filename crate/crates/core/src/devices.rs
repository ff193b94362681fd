//! Synchronous-generator and grid-forming inverter parameters.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::NetworkCase;

/// Timescale margin below which the quasi-steady inverter reduction is suspect.
pub const TIMESCALE_WARN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SgParams {
    pub id: String,
    pub m: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GfmParams {
    pub id: String,
    pub s_mva: f64,
    pub mp_setting: f64,
    pub mq_setting: f64,
    pub tau: f64,
}

/// Device parameters with a single droop gain shared by every inverter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DevicePark {
    pub sgs: Vec<SgParams>,
    pub gfms: Vec<GfmParams>,
    pub base_mva: f64,
    /// Frequency base, rad/s.
    pub omega0: f64,
    mp: f64,
}

/// `m_p = m̂_p / (S / base)`: droop setting normalized to the inverter capacity.
pub fn droop_from_setting(mp_setting: f64, s_mva: f64, base_mva: f64) -> Result<f64> {
    if !(s_mva > 0.0) || !(base_mva > 0.0) {
        return Err(Error::Invalid(format!(
            "capacity and base must be positive (S = {s_mva}, base = {base_mva})"
        )));
    }
    Ok(mp_setting / (s_mva / base_mva))
}

pub fn setting_from_droop(mp: f64, s_mva: f64, base_mva: f64) -> Result<f64> {
    if !(s_mva > 0.0) || !(base_mva > 0.0) {
        return Err(Error::Invalid(format!(
            "capacity and base must be positive (S = {s_mva}, base = {base_mva})"
        )));
    }
    Ok(mp * (s_mva / base_mva))
}

impl DevicePark {
    pub fn new(sgs: Vec<SgParams>, gfms: Vec<GfmParams>, base_mva: f64, omega0: f64) -> Result<Self> {
        if sgs.is_empty() || gfms.is_empty() {
            return Err(Error::Invalid("device park needs at least one SG and one GFM".into()));
        }
        for sg in &sgs {
            if !(sg.m > 0.0) {
                return Err(Error::Invalid(format!("SG {} inertia must be positive", sg.id)));
            }
            if !(sg.d >= 0.0) {
                return Err(Error::Invalid(format!("SG {} damping must be non-negative", sg.id)));
            }
        }
        for g in &gfms {
            if !(g.s_mva > 0.0) || !(g.mp_setting > 0.0) || !(g.tau > 0.0) {
                return Err(Error::Invalid(format!(
                    "GFM {} needs positive capacity, droop setting and filter constant",
                    g.id
                )));
            }
        }
        if !(omega0 > 0.0) {
            return Err(Error::Invalid("omega0 must be positive".into()));
        }
        let gains = gfms
            .iter()
            .map(|g| droop_from_setting(g.mp_setting, g.s_mva, base_mva))
            .collect::<Result<Vec<_>>>()?;
        let mp = gains[0];
        for (g, &gain) in gfms.iter().zip(&gains) {
            if (gain - mp).abs() > 1e-12 * mp.abs() {
                return Err(Error::HeterogeneousDroop(format!(
                    "GFM {} has normalized droop {gain} but {} has {mp}",
                    g.id, gfms[0].id
                )));
            }
        }
        Ok(Self {
            sgs,
            gfms,
            base_mva,
            omega0,
            mp: omega0 * mp,
        })
    }

    pub fn from_case(case: &NetworkCase) -> Result<Self> {
        let sgs = case
            .sgs
            .iter()
            .map(|s| SgParams {
                id: s.id.clone(),
                m: s.m,
                d: s.d,
            })
            .collect();
        let gfms = case
            .gfms
            .iter()
            .map(|g| GfmParams {
                id: g.id.clone(),
                s_mva: g.s_mva,
                mp_setting: g.mp_setting,
                mq_setting: g.mq_setting,
                tau: g.tau,
            })
            .collect();
        Self::new(sgs, gfms, case.base_mva, case.omega0)
    }

    /// Park specified directly by its droop gain: unit base, unit capacity,
    /// `ω0 = 1`, so the gain equals the setting.
    pub fn with_gain(m: &[f64], d: &[f64], n_i: usize, mp: f64) -> Result<Self> {
        if m.len() != d.len() {
            return Err(Error::DimensionMismatch("M and D lengths differ".into()));
        }
        let sgs = m
            .iter()
            .zip(d)
            .enumerate()
            .map(|(k, (&m, &d))| SgParams {
                id: format!("G{}", k + 1),
                m,
                d,
            })
            .collect();
        let gfms = (0..n_i)
            .map(|j| GfmParams {
                id: format!("I{}", j + 1),
                s_mva: 1.0,
                mp_setting: mp,
                mq_setting: 0.0,
                tau: 0.02,
            })
            .collect();
        Self::new(sgs, gfms, 1.0, 1.0)
    }

    pub fn n_g(&self) -> usize {
        self.sgs.len()
    }

    pub fn n_i(&self) -> usize {
        self.gfms.len()
    }

    /// Droop gain entering the state matrix, rad/s per p.u. power.
    pub fn droop_gain(&self) -> f64 {
        self.mp
    }

    pub fn inertia(&self) -> Vec<f64> {
        self.sgs.iter().map(|s| s.m).collect()
    }

    pub fn damping(&self) -> Vec<f64> {
        self.sgs.iter().map(|s| s.d).collect()
    }

    pub fn total_capacity(&self) -> f64 {
        self.gfms.iter().map(|g| g.s_mva).sum()
    }

    /// Same park with every inverter at droop setting `mp_setting`.
    pub fn with_droop_setting(&self, mp_setting: f64) -> Result<Self> {
        let gfms = self
            .gfms
            .iter()
            .map(|g| GfmParams {
                mp_setting,
                ..g.clone()
            })
            .collect();
        Self::new(self.sgs.clone(), gfms, self.base_mva, self.omega0)
    }

    /// Same park rescaled so the state-matrix droop gain equals `gain`.
    pub fn with_droop_gain(&self, gain: f64) -> Result<Self> {
        let f = gain / self.mp;
        let gfms = self
            .gfms
            .iter()
            .map(|g| GfmParams {
                mp_setting: g.mp_setting * f,
                ..g.clone()
            })
            .collect();
        let mut p = Self::new(self.sgs.clone(), gfms, self.base_mva, self.omega0)?;
        // pin the gain exactly; the settings above carry it up to rounding
        p.mp = gain;
        Ok(p)
    }

    /// Same park with capacities scaled proportionally to a new total (MVA).
    pub fn with_total_capacity(&self, total_mva: f64) -> Result<Self> {
        let scale = total_mva / self.total_capacity();
        let gfms = self
            .gfms
            .iter()
            .map(|g| GfmParams {
                s_mva: g.s_mva * scale,
                ..g.clone()
            })
            .collect();
        Self::new(self.sgs.clone(), gfms, self.base_mva, self.omega0)
    }

    /// Same park with all SG inertias multiplied by `factor`.
    pub fn with_inertia_scale(&self, factor: f64) -> Result<Self> {
        let sgs = self
            .sgs
            .iter()
            .map(|s| SgParams {
                m: s.m * factor,
                ..s.clone()
            })
            .collect();
        Self::new(sgs, self.gfms.clone(), self.base_mva, self.omega0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParkExtremes {
    pub m_u: f64,
    pub m_l: f64,
    pub d_u: f64,
    pub d_l: f64,
}

pub fn extremes_of(m: &[f64], d: &[f64]) -> Option<ParkExtremes> {
    if m.is_empty() || d.is_empty() {
        return None;
    }
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    Some(ParkExtremes {
        m_u: max(m),
        m_l: min(m),
        d_u: max(d),
        d_l: min(d),
    })
}

pub fn park_extremes(park: &DevicePark) -> ParkExtremes {
    extremes_of(&park.inertia(), &park.damping()).expect("park has at least one SG")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimescaleCheck {
    /// min_j(1/τ_j) / max_k(D_k/M_k).
    pub margin: f64,
    pub warning: Option<String>,
}

pub fn timescale_check(park: &DevicePark) -> TimescaleCheck {
    let fastest_sg = park
        .sgs
        .iter()
        .map(|s| s.d / s.m)
        .fold(0.0_f64, f64::max);
    let slowest_gfm = park
        .gfms
        .iter()
        .map(|g| 1.0 / g.tau)
        .fold(f64::INFINITY, f64::min);
    let margin = if fastest_sg > 0.0 {
        slowest_gfm / fastest_sg
    } else {
        f64::INFINITY
    };
    let warning = (margin < TIMESCALE_WARN).then(|| {
        format!("inverter filter only {margin:.2}x faster than SG damping; quasi-steady droop reduction is suspect")
    });
    TimescaleCheck { margin, warning }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_capacity_keeps_setting() {
        assert_eq!(droop_from_setting(0.05, 100.0, 100.0).unwrap(), 0.05);
    }

    #[test]
    fn doubled_capacity_halves_gain() {
        assert_eq!(droop_from_setting(0.05, 200.0, 100.0).unwrap(), 0.025);
    }

    #[test]
    fn capacity_sweep() {
        let got: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|s| droop_from_setting(0.03, s * 100.0, 100.0).unwrap())
            .collect();
        for (g, want) in got.iter().zip([0.06, 0.03, 0.015]) {
            assert!((g - want).abs() < 1e-15, "{g} vs {want}");
        }
    }

    #[test]
    fn nonpositive_capacity_rejected() {
        assert!(droop_from_setting(0.05, 0.0, 100.0).is_err());
        assert!(droop_from_setting(0.05, -1.0, 100.0).is_err());
    }

    #[test]
    fn singleton_extremes() {
        let e = extremes_of(&[1.0], &[0.1]).unwrap();
        assert_eq!((e.m_u, e.m_l, e.d_u, e.d_l), (1.0, 1.0, 0.1, 0.1));
    }

    #[test]
    fn pair_extremes() {
        let e = extremes_of(&[2.0, 5.0], &[0.1, 0.4]).unwrap();
        assert_eq!((e.m_u, e.m_l, e.d_u, e.d_l), (5.0, 2.0, 0.4, 0.1));
    }

    #[test]
    fn random_park_matches_sort_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m: Vec<f64> = (0..10).map(|_| rng.random_range(0.1..2.0)).collect();
        let d: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..0.5)).collect();
        let e = extremes_of(&m, &d).unwrap();
        let mut ms = m.clone();
        ms.sort_by(f64::total_cmp);
        let mut ds = d.clone();
        ds.sort_by(f64::total_cmp);
        assert_eq!((e.m_u, e.m_l, e.d_u, e.d_l), (ms[9], ms[0], ds[9], ds[0]));
    }

    fn park_with(m: &[f64], d: &[f64], tau: f64) -> DevicePark {
        let mut p = DevicePark::with_gain(m, d, 2, 1.0).unwrap();
        for g in &mut p.gfms {
            g.tau = tau;
        }
        p
    }

    #[test]
    fn timescale_margin() {
        let t = timescale_check(&park_with(&[1.0], &[0.1], 0.02));
        assert!((t.margin - 500.0).abs() < 1e-9);
        assert!(t.warning.is_none());
        let t = timescale_check(&park_with(&[1.0], &[0.1], 5.0));
        assert!((t.margin - 2.0).abs() < 1e-12);
        assert!(t.warning.is_some());
    }

    #[test]
    fn heterogeneous_droop_rejected() {
        let p = DevicePark::with_gain(&[1.0], &[0.1], 2, 1.0).unwrap();
        let mut gfms = p.gfms.clone();
        gfms[1].s_mva = 2.0;
        let err = DevicePark::new(p.sgs.clone(), gfms, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::HeterogeneousDroop(_)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn setting_roundtrip(mhat in 1e-4f64..0.5, s in 1.0f64..5000.0) {
            let mp = droop_from_setting(mhat, s, 100.0).unwrap();
            let back = setting_from_droop(mp, s, 100.0).unwrap();
            prop_assert!(((back - mhat) / mhat).abs() < 1e-14);
        }

        #[test]
        fn extremes_permutation_invariant(mut pairs in prop::collection::vec((0.1f64..5.0, 0.0f64..1.0), 1..12), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let m: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let d: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let before = extremes_of(&m, &d).unwrap();
            pairs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let m: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let d: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assert_eq!(before, extremes_of(&m, &d).unwrap());
        }
    }
}

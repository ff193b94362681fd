//! Damping-design conditions: the necessary condition on the asymptotic
//! matrices, the droop lower bound m*(λ) with its preconditions, and its
//! low-damping limit.

use serde::Serialize;

use crate::devices::{park_extremes, DevicePark, ParkExtremes};
use crate::error::Result;
use crate::linalg::{self, CMat, C64};
use crate::modal::Mode;
use crate::netmodel::{GridStrength, JacobianSet};
use crate::sensitivity::{asymptotic_matrices, AsymptoticSet, C64Ser};

/// `(C_h, C_h')` with `C_h = (C + Cᴴ)/2` and `C_h' = (C − Cᴴ)/2`.
pub fn hermitian_part(c: &CMat) -> (CMat, CMat) {
    let ct = c.adjoint();
    ((c + &ct) * linalg::c64(0.5, 0.0), (c - &ct) * linalg::c64(0.5, 0.0))
}

/// Largest eigenvalue of the Hermitian part of `c`.
pub fn lambda_max_h(c: &CMat) -> f64 {
    linalg::hermitian_extremes(&hermitian_part(c).0).1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NecessaryCondition {
    pub lmax_theta1_h: f64,
    pub lmax_theta2_h: f64,
    /// m_p λ_max(Θ₁,h) + λ_max(Θ₂,h).
    pub lhs: f64,
    /// Damping enhancement by lowering droop is possible only when this holds.
    pub holds: bool,
}

pub fn necessary_condition(aset: &AsymptoticSet, mp: f64) -> NecessaryCondition {
    let l1 = lambda_max_h(&aset.theta1);
    let l2 = lambda_max_h(&aset.theta2);
    let lhs = mp * l1 + l2;
    NecessaryCondition {
        lmax_theta1_h: l1,
        lmax_theta2_h: l2,
        lhs,
        holds: lhs > 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignVariables {
    pub d_star: f64,
    pub zeta_l: f64,
    /// +∞ when D_l = 0.
    pub zeta_u: f64,
    pub zeta_u_infinite: bool,
}

pub fn design_variables(lambda: C64, ext: &ParkExtremes, gamma_l: f64, gamma_u: f64) -> DesignVariables {
    let l = lambda.norm();
    let r = gamma_u / gamma_l;
    let base = 1.0 / gamma_u + 4.0 * l * l * ext.m_l;
    let zeta_u_infinite = ext.d_l == 0.0;
    DesignVariables {
        d_star: ext.m_u * base / r,
        zeta_l: 2.0 * l * ext.d_u * r.powi(3) / base,
        zeta_u: if zeta_u_infinite {
            f64::INFINITY
        } else {
            2.0 * l * ext.m_u * r * r / ext.d_l
        },
        zeta_u_infinite,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MStar {
    pub value: f64,
    pub dv: DesignVariables,
    /// D_u D_l < D*.
    pub damping_condition: bool,
    /// ζ_l < ζ < ζ_u.
    pub zeta_window: bool,
    pub preconditions: bool,
}

/// Lower bound on the droop gain for a mode of damping ratio `zeta` (fraction).
pub fn mstar(lambda: C64, zeta: f64, ext: &ParkExtremes, gamma_u: f64, gamma_l: f64) -> MStar {
    let dv = design_variables(lambda, ext, gamma_l, gamma_u);
    let l = lambda.norm();
    let num = (1.0 + 4.0 * l * l * ext.m_l * gamma_u) * (zeta - dv.zeta_l);
    let value = if dv.zeta_u_infinite {
        // D_l ζ_u stays finite as D_l → 0
        let r = gamma_u / gamma_l;
        num / (gamma_u * gamma_u * 2.0 * l * ext.m_u * r * r)
    } else if zeta == dv.zeta_u {
        f64::INFINITY
    } else {
        num / (gamma_u * gamma_u * ext.d_l * (dv.zeta_u - zeta))
    };
    let damping_condition = ext.d_u * ext.d_l < dv.d_star;
    let zeta_window = dv.zeta_l < zeta && zeta < dv.zeta_u;
    MStar {
        value,
        dv,
        damping_condition,
        zeta_window,
        preconditions: damping_condition && zeta_window,
    }
}

/// Low-damping limit of [`mstar`] on a uniform grid.
pub fn mstar_limit(lambda: C64, zeta: f64, m_l: f64, m_u: f64, gamma_u: f64) -> f64 {
    let l = lambda.norm();
    (1.0 + 4.0 * l * l * m_l * gamma_u) * zeta / (2.0 * l * m_u * gamma_u * gamma_u)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeDesign {
    pub mode_id: String,
    pub lambda: C64Ser,
    pub freq_hz: f64,
    pub zeta: f64,
    pub zeta_pct: f64,
    pub slow_ratio: f64,
    pub condition: NecessaryCondition,
    /// "possible" when the necessary condition holds, else "excluded".
    pub damping_enhancement: &'static str,
    pub d_star: f64,
    pub zeta_l: f64,
    pub zeta_u: Option<f64>,
    pub damping_condition: bool,
    pub zeta_window: bool,
    pub preconditions_hold: bool,
    pub mstar: Option<f64>,
    /// Not applicable when the preconditions fail.
    pub mstar_applicable: bool,
    pub margin: Option<f64>,
    pub mstar_limit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub mp: f64,
    pub gamma_l: f64,
    pub gamma_u: f64,
    pub extremes: ParkExtremes,
    pub modes: Vec<ModeDesign>,
    /// Largest applicable m* across modes.
    pub mstar_max: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn design_report(
    jac: &JacobianSet,
    park: &DevicePark,
    strength: &GridStrength,
    modes: &[&Mode],
) -> Result<DesignReport> {
    let mp = park.droop_gain();
    let ext = park_extremes(park);
    let (gl, gu) = (strength.gamma_l, strength.gamma_u);
    let mut out = Vec::with_capacity(modes.len());
    for m in modes {
        let aset = asymptotic_matrices(jac, park, m.lambda, mp)?;
        let t1 = necessary_condition(&aset, mp);
        let ms = mstar(m.lambda, m.damping, &ext, gu, gl);
        out.push(ModeDesign {
            mode_id: m.id.clone(),
            lambda: C64Ser(m.lambda),
            freq_hz: m.freq_hz,
            zeta: m.damping,
            zeta_pct: 100.0 * m.damping,
            slow_ratio: m.slow_ratio,
            condition: t1,
            damping_enhancement: if t1.holds { "possible" } else { "excluded" },
            d_star: ms.dv.d_star,
            zeta_l: ms.dv.zeta_l,
            zeta_u: finite(ms.dv.zeta_u),
            damping_condition: ms.damping_condition,
            zeta_window: ms.zeta_window,
            preconditions_hold: ms.preconditions,
            mstar: finite(ms.value),
            mstar_applicable: ms.preconditions,
            margin: finite(mp - ms.value),
            mstar_limit: mstar_limit(m.lambda, m.damping, ext.m_l, ext.m_u, gu),
        });
    }
    let mstar_max = out
        .iter()
        .filter(|d| d.mstar_applicable)
        .filter_map(|d| d.mstar)
        .reduce(f64::max);
    Ok(DesignReport {
        mp,
        gamma_l: gl,
        gamma_u: gu,
        extremes: ext,
        modes: out,
        mstar_max,
    })
}

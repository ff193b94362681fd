//! Droop sensitivity of eigenvalues: the closed-form derivative, a
//! finite-difference oracle, and the large-droop asymptotic matrices.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::devices::DevicePark;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, CVec, C64};
use crate::modal::{self, Mode};
use crate::netmodel::JacobianSet;
use crate::statespace::{assemble_state_matrix, resolvent_argument};

/// Minimum |vᵀu|/(‖u‖‖v‖) for the perturbation quotient to be meaningful.
pub const COND_FLOOR: f64 = 1e-8;
/// Default relative finite-difference step.
pub const FD_STEP_REL: f64 = 1e-4;
/// Eigenvector overlap required to accept a tracked eigenvalue.
pub const TRACK_OVERLAP: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct AsymptoticSet {
    pub lambda: C64,
    pub mp: f64,
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    pub q: CMat,
    pub theta1: CMat,
    pub theta2: CMat,
    pub r: CMat,
    pub theta: CMat,
}

impl AsymptoticSet {
    /// Smallest eigenvalues of U₁ and U₂.
    pub fn u_min_eigs(&self) -> (f64, f64) {
        let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
        (
            linalg::symmetric_extremes(&sym(&self.u1)).0,
            linalg::symmetric_extremes(&sym(&self.u2)).0,
        )
    }
}

fn diag_c(v: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(v.len(), v.iter().map(|&x| c64(x, 0.0))))
}

fn conj(m: &CMat) -> CMat {
    m.map(|z| z.conj())
}

pub fn asymptotic_matrices(
    jac: &JacobianSet,
    park: &DevicePark,
    lambda: C64,
    mp: f64,
) -> Result<AsymptoticSet> {
    let kii = jac.kii();
    let kii_inv = kii
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("K_ii is singular".into()))?;
    let kgi = jac.kgi();
    let kig = jac.kig();
    let u1 = &kgi * &kii_inv * &kii_inv * &kig;
    let u2 = &kgi * &kii_inv * &kii_inv * &kii_inv * &kig;

    let m = diag_c(&park.inertia());
    let d = diag_c(&park.damping());
    let l2 = lambda.norm_sqr();
    let q = &m * (lambda * 2.0) + &d;
    let u1c = linalg::to_complex(&u1);
    let u2c = linalg::to_complex(&u2);
    let theta1 = &u1c * (&m * c64(2.0 * l2, 0.0) + &d * lambda);
    let theta2 = &u1c * &u1c * lambda + &u2c * (&m * (lambda.conj() * 2.0) + &d) * c64(2.0 * l2, 0.0);

    let arg = resolvent_argument(jac, mp, lambda)?;
    let lu = arg.lu();
    let x = lu
        .solve(&linalg::to_complex(&kig))
        .ok_or(Error::ResolventSingular { lambda })?;
    let x2 = lu.solve(&x).ok_or(Error::ResolventSingular { lambda })?;
    let r = linalg::to_complex(&kgi) * x2;
    let theta = compose_theta(lambda, mp, &r, &q);
    Ok(AsymptoticSet {
        lambda,
        mp,
        u1,
        u2,
        q,
        theta1,
        theta2,
        r,
        theta,
    })
}

/// `Θ = λ R (m_p R̄ + Q̄)`.
pub fn compose_theta(lambda: C64, mp: f64, r: &CMat, q: &CMat) -> CMat {
    r * (conj(r) * c64(mp, 0.0) + conj(q)) * lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticSensitivity {
    /// λ·v*ᵀM⁻¹R u* / v*ᵀM⁻¹(m_pR + Q)u*.
    pub formula: C64Ser,
    /// vᵀ(∂A/∂m_p)u / vᵀu.
    pub quotient: C64Ser,
    /// |vᵀu| / (‖u‖‖v‖).
    pub cond: f64,
}

/// Complex number that serializes as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C64Ser(pub C64);

impl Serialize for C64Ser {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

/// ∂A/∂m_p: only the inverter rows depend on the droop gain.
pub fn droop_derivative(jac: &JacobianSet) -> DMatrix<f64> {
    let (ng, ni) = (jac.n_g, jac.n_i);
    let n = 2 * ng + ni;
    let mut da = DMatrix::zeros(n, n);
    da.view_mut((2 * ng, 0), (ni, ng)).copy_from(&(-jac.kig()));
    da.view_mut((2 * ng, 2 * ng), (ni, ni)).copy_from(&(-jac.kii()));
    da
}

pub fn dlambda_dmp_analytic(
    jac: &JacobianSet,
    park: &DevicePark,
    mode: &Mode,
) -> Result<AnalyticSensitivity> {
    let ng = jac.n_g;
    let lambda = mode.lambda;
    let mp = park.droop_gain();
    let cond = mode.vu_cond;
    if !(cond >= COND_FLOOR) {
        return Err(Error::Numerical(format!(
            "mode {} is near-defective (|vᵀu| = {cond:.3e})",
            mode.id
        )));
    }
    let (u_star, v_star) = match &mode.kernel {
        Some(kv) => (kv.u_star.clone(), kv.v_star.clone()),
        None => (
            mode.right.rows(0, ng).into_owned(),
            mode.left.rows(ng, ng).into_owned(),
        ),
    };
    let aset = asymptotic_matrices(jac, park, lambda, mp)?;
    let minv = diag_c(&park.inertia().iter().map(|m| 1.0 / m).collect::<Vec<_>>());
    let w = minv.transpose() * &v_star;
    let num = w.dot(&(&aset.r * &u_star)) * lambda;
    let den = w.dot(&((&aset.r * c64(mp, 0.0) + &aset.q) * &u_star));
    if den.norm() < 1e-12 {
        return Err(Error::Numerical(format!(
            "sensitivity denominator vanishes for mode {} (|den| = {:.3e})",
            mode.id,
            den.norm()
        )));
    }
    let da = linalg::to_complex(&droop_derivative(jac));
    let quotient = mode.left.dot(&(da * &mode.right)) / mode.left.dot(&mode.right);
    Ok(AnalyticSensitivity {
        formula: C64Ser(num / den),
        quotient: C64Ser(quotient),
        cond,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdEstimate {
    pub h: f64,
    /// Central difference with step h.
    pub central: C64Ser,
    /// Central difference with step h/2.
    pub central_half: C64Ser,
    /// (4 D(h/2) − D(h)) / 3.
    pub richardson: C64Ser,
    /// Smallest eigenvector overlap seen while tracking.
    pub min_overlap: f64,
}

/// Locate the continuation of `mode` in the spectrum of `a`: maximal
/// eigenvector overlap among the nearest candidates, ties broken by distance.
pub fn track(a: &DMatrix<f64>, lambda: C64, right: &CVec) -> Result<(C64, CVec, f64)> {
    let eigs = linalg::eigenvalues(a)?;
    let mut cands: Vec<C64> = eigs;
    cands.sort_by(|x, y| (x - lambda).norm().total_cmp(&(y - lambda).norm()));
    let n = a.nrows();
    let mut best: Option<(C64, CVec, f64)> = None;
    for &z in cands.iter().take(3) {
        let sh = linalg::to_complex(a) - CMat::from_diagonal_element(n, n, z);
        let v = linalg::null_vector(&sh)?.vector;
        let ov = linalg::overlap(&v, right);
        let better = match &best {
            None => true,
            Some((_, _, b)) => ov > *b + 1e-3,
        };
        if better {
            best = Some((z, v, ov));
        }
    }
    let (z, v, ov) = best.ok_or_else(|| Error::Eigensolver("empty spectrum".into()))?;
    if ov < TRACK_OVERLAP {
        return Err(Error::ModeTracking { lambda, overlap: ov });
    }
    Ok((z, linalg::normalize_phase(&v), ov))
}

/// Central differences of the tracked eigenvalue of `build(m_p ± h)`.
pub fn dlambda_dmp_fd<F>(build: F, mode: &Mode, mp: f64, h: f64) -> Result<FdEstimate>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    let mut min_overlap = 1.0_f64;
    let mut central = |step: f64| -> Result<C64> {
        let (lp, _, op) = track(&build(mp + step)?, mode.lambda, &mode.right)?;
        let (lm, _, om) = track(&build(mp - step)?, mode.lambda, &mode.right)?;
        min_overlap = min_overlap.min(op).min(om);
        Ok((lp - lm) / (2.0 * step))
    };
    let d1 = central(h)?;
    let d2 = central(h / 2.0)?;
    Ok(FdEstimate {
        h,
        central: C64Ser(d1),
        central_half: C64Ser(d2),
        richardson: C64Ser((d2 * 4.0 - d1) / 3.0),
        min_overlap,
    })
}

/// Builder for `A(m_p)` with the droop gain overridden.
pub fn droop_builder<'a>(
    jac: &'a JacobianSet,
    park: &'a DevicePark,
) -> impl Fn(f64) -> Result<DMatrix<f64>> + 'a {
    move |gain| Ok(assemble_state_matrix(jac, &park.with_droop_gain(gain)?)?.a)
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub mode_id: String,
    pub lambda: C64Ser,
    pub analytic: AnalyticSensitivity,
    pub fd: FdEstimate,
    /// |analytic − FD_richardson| / |FD_richardson|.
    pub rel_err: f64,
    /// |formula − quotient| / |quotient|.
    pub derivation_gap: f64,
}

pub fn rel_err(a: C64, b: C64) -> f64 {
    let scale = b.norm().max(a.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Analytic and finite-difference sensitivities for each listed mode,
/// evaluated concurrently; output order follows `modes`.
pub fn sensitivity_reports(
    jac: &JacobianSet,
    park: &DevicePark,
    modes: &[&Mode],
    h_rel: f64,
) -> Result<Vec<SensitivityReport>> {
    let mp = park.droop_gain();
    modes
        .par_iter()
        .map(|mode| {
            let analytic = dlambda_dmp_analytic(jac, park, mode)?;
            let fd = dlambda_dmp_fd(droop_builder(jac, park), mode, mp, h_rel * mp)?;
            Ok(SensitivityReport {
                mode_id: mode.id.clone(),
                lambda: C64Ser(mode.lambda),
                rel_err: rel_err(analytic.formula.0, fd.richardson.0),
                derivation_gap: rel_err(analytic.formula.0, analytic.quotient.0),
                analytic,
                fd,
            })
        })
        .collect()
}

pub fn sensitivity_csv(rows: &[SensitivityReport]) -> String {
    let mut out = String::from("mode_id,dre_dmp,dim_dmp,fd_re,fd_im,rel_err,cond\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.3e},{:.6e}",
            r.mode_id,
            r.analytic.formula.0.re,
            r.analytic.formula.0.im,
            r.fd.richardson.0.re,
            r.fd.richardson.0.im,
            r.rel_err,
            r.analytic.cond
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRow {
    pub mp: f64,
    pub slow_ratio: f64,
    /// ‖R − m_p⁻³(m_pU₁ + 2λ̄U₂)‖₂
    pub e_r: f64,
    /// ‖Θ − m_p⁻³(m_pΘ₁ + Θ₂)‖₂
    pub e_theta: f64,
    /// Same with the exact second-order term, ‖R − m_p⁻³(m_pU₁ − 2λU₂)‖₂.
    pub e_r_exact: f64,
    /// ‖Θ − m_p⁻³(m_pλU₁Q̄ + λU₁² − 2λ²U₂Q̄)‖₂.
    pub e_theta_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticTable {
    pub lambda: C64Ser,
    pub rows: Vec<AsymptoticRow>,
    pub exponent_r: f64,
    pub exponent_theta: f64,
    pub exponent_r_exact: f64,
    pub exponent_theta_exact: f64,
}

pub fn asymptotic_check(
    jac: &JacobianSet,
    park: &DevicePark,
    lambda: C64,
    mps: &[f64],
) -> Result<AsymptoticTable> {
    let kii_norm = linalg::spectral_norm(&jac.kii());
    let mut rows = Vec::with_capacity(mps.len());
    for &mp in mps {
        let s = asymptotic_matrices(jac, park, lambda, mp)?;
        let inv3 = c64(mp.powi(-3), 0.0);
        let u1 = linalg::to_complex(&s.u1);
        let u2 = linalg::to_complex(&s.u2);
        let r_stated = (&u1 * c64(mp, 0.0) + &u2 * (lambda.conj() * 2.0)) * inv3;
        let t_stated = (&s.theta1 * c64(mp, 0.0) + &s.theta2) * inv3;
        let r_exact = (&u1 * c64(mp, 0.0) - &u2 * (lambda * 2.0)) * inv3;
        let qb = conj(&s.q);
        let t_exact = (&u1 * &qb * (lambda * mp) + &u1 * &u1 * lambda - &u2 * &qb * (lambda * lambda * 2.0)) * inv3;
        rows.push(AsymptoticRow {
            mp,
            slow_ratio: modal::slow_ratio(lambda, mp, kii_norm),
            e_r: linalg::spectral_norm_c(&(&s.r - r_stated)),
            e_theta: linalg::spectral_norm_c(&(&s.theta - t_stated)),
            e_r_exact: linalg::spectral_norm_c(&(&s.r - r_exact)),
            e_theta_exact: linalg::spectral_norm_c(&(&s.theta - t_exact)),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.mp).collect();
    let fit = |f: fn(&AsymptoticRow) -> f64| {
        linalg::decay_exponent(&x, &rows.iter().map(f).collect::<Vec<_>>())
    };
    Ok(AsymptoticTable {
        lambda: C64Ser(lambda),
        exponent_r: fit(|r| r.e_r),
        exponent_theta: fit(|r| r.e_theta),
        exponent_r_exact: fit(|r| r.e_r_exact),
        exponent_theta_exact: fit(|r| r.e_theta_exact),
        rows,
    })
}

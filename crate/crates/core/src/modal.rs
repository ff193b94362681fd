//! Modal decomposition of the state matrix, inter-area classification, and
//! eigenvectors rebuilt from the kernel of `Λ(λ, m_p)`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::devices::DevicePark;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, CVec, C64};
use crate::netmodel::JacobianSet;
use crate::statespace::{assemble_state_matrix, lambda_matrix, resolvent_times_kig, StateMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModalConfig {
    /// Inter-area band (f_lo, f_hi), Hz, open interval.
    pub band: (f64, f64),
    /// σ_min/σ_max of Λ below which λ is accepted as a root of the pencil.
    pub singular_tol: f64,
    pub residual_tol: f64,
    /// |λ| / (m_p‖K_ii‖₂) below which the slow-mode asymptotics apply.
    pub slow_threshold: f64,
}

impl Default for ModalConfig {
    fn default() -> Self {
        Self {
            band: (0.1, 1.0),
            singular_tol: 1e-8,
            residual_tol: 1e-8,
            slow_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeClass {
    InterArea,
    Local,
    Real,
    /// Timescale set by the droop loop rather than the generators.
    Inverter,
}

impl ModeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeClass::InterArea => "inter-area",
            ModeClass::Local => "local",
            ModeClass::Real => "real",
            ModeClass::Inverter => "inverter",
        }
    }
}

/// Eigenvectors assembled from the reduced pencil.
#[derive(Debug, Clone)]
pub struct KernelVectors {
    pub u: CVec,
    pub v: CVec,
    pub u_star: CVec,
    pub v_star: CVec,
    /// σ_min/σ_max of Λ(λ, m_p).
    pub sigma_ratio: f64,
    /// σ_min of Λ relative to the sum of its term magnitudes.
    pub pencil_residual: f64,
    pub residual_right: f64,
    pub residual_left: f64,
}

#[derive(Debug, Clone)]
pub struct Mode {
    pub id: String,
    pub lambda: C64,
    pub freq_hz: f64,
    /// Damping ratio as a fraction.
    pub damping: f64,
    /// Right eigenvector `A u = λ u`, unit norm.
    pub right: CVec,
    /// Left eigenvector `vᵀ A = λ vᵀ`, unit norm.
    pub left: CVec,
    pub residual_right: f64,
    pub residual_left: f64,
    /// |vᵀu| / (‖u‖‖v‖).
    pub vu_cond: f64,
    pub class: ModeClass,
    pub slow_ratio: f64,
    pub kernel: Option<KernelVectors>,
}

impl Mode {
    pub fn residual(&self) -> f64 {
        self.residual_right.max(self.residual_left)
    }

    pub fn is_oscillatory(&self) -> bool {
        self.lambda.im > 0.0
    }
}

pub fn frequency_hz(lambda: C64) -> f64 {
    lambda.im.abs() / (2.0 * std::f64::consts::PI)
}

/// `|Re λ| / |λ|`; zero at the origin.
pub fn damping_ratio(lambda: C64) -> f64 {
    let n = lambda.norm();
    if n == 0.0 {
        0.0
    } else {
        lambda.re.abs() / n
    }
}

pub fn slow_ratio(lambda: C64, mp: f64, kii_norm2: f64) -> f64 {
    let den = mp * kii_norm2;
    if den > 0.0 {
        lambda.norm() / den
    } else {
        f64::INFINITY
    }
}

pub fn slow_mode_check(mode: &Mode, jac: &JacobianSet, park: &DevicePark) -> f64 {
    slow_ratio(mode.lambda, park.droop_gain(), linalg::spectral_norm(&jac.kii()))
}

fn shifted(a: &DMatrix<f64>, lambda: C64) -> CMat {
    let n = a.nrows();
    linalg::to_complex(a) - CMat::from_diagonal_element(n, n, lambda)
}

/// ‖Au − λu‖ / (‖A‖‖u‖).
pub fn right_residual(a: &DMatrix<f64>, lambda: C64, u: &CVec, a_norm: f64) -> f64 {
    let r = linalg::to_complex(a) * u - u * lambda;
    r.norm() / (a_norm * u.norm())
}

/// ‖vᵀA − λvᵀ‖ / (‖A‖‖v‖).
pub fn left_residual(a: &DMatrix<f64>, lambda: C64, v: &CVec, a_norm: f64) -> f64 {
    let r = linalg::to_complex(&a.transpose()) * v - v * lambda;
    r.norm() / (a_norm * v.norm())
}

fn vu_cond(u: &CVec, v: &CVec) -> f64 {
    v.dot(u).norm() / (u.norm() * v.norm())
}

fn pair_spectrum(eigs: &[C64], scale: f64) -> Result<Vec<C64>> {
    let tol = 1e-10 * scale.max(1.0);
    let mut reps = Vec::new();
    let mut lower: Vec<C64> = Vec::new();
    for &z in eigs {
        if z.im.abs() <= tol {
            reps.push(c64(z.re, 0.0));
        } else if z.im > 0.0 {
            reps.push(z);
        } else {
            lower.push(z);
        }
    }
    let upper: Vec<C64> = reps.iter().copied().filter(|z| z.im > 0.0).collect();
    if upper.len() != lower.len() {
        return Err(Error::Eigensolver(format!(
            "spectrum not closed under conjugation ({} upper vs {} lower)",
            upper.len(),
            lower.len()
        )));
    }
    let mut used = vec![false; lower.len()];
    for z in &upper {
        let hit = lower
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .min_by(|a, b| (a.1 - z.conj()).norm().total_cmp(&(b.1 - z.conj()).norm()));
        match hit {
            Some((k, w)) if (w - z.conj()).norm() <= 1e-8 * scale.max(1.0) => used[k] = true,
            _ => {
                return Err(Error::Eigensolver(format!(
                    "eigenvalue {z} has no conjugate partner"
                )))
            }
        }
    }
    Ok(reps)
}

fn order(a: &C64, b: &C64) -> std::cmp::Ordering {
    frequency_hz(*a)
        .total_cmp(&frequency_hz(*b))
        .then(a.re.total_cmp(&b.re))
}

/// Spectrum, vectors and classification. One mode per conjugate pair.
pub fn eigen_modes(sm: &StateMatrix, cfg: &ModalConfig) -> Result<Vec<Mode>> {
    let a = &sm.a;
    let eigs = linalg::eigenvalues(a)?;
    let a_norm = linalg::spectral_norm(a).max(f64::MIN_POSITIVE);
    let mut reps = pair_spectrum(&eigs, a_norm)?;
    reps.sort_by(order);
    let mut modes = Vec::with_capacity(reps.len());
    for (k, lambda) in reps.into_iter().enumerate() {
        let sh = shifted(a, lambda);
        let right = linalg::normalize_phase(&linalg::null_vector(&sh)?.vector);
        let left = linalg::normalize_phase(&linalg::null_vector(&sh.transpose())?.vector);
        let slow = slow_ratio(lambda, sm.mp, sm.kii_norm2);
        modes.push(Mode {
            id: format!("M{}", k + 1),
            lambda,
            freq_hz: frequency_hz(lambda),
            damping: damping_ratio(lambda),
            residual_right: right_residual(a, lambda, &right, a_norm),
            residual_left: left_residual(a, lambda, &left, a_norm),
            vu_cond: vu_cond(&right, &left),
            right,
            left,
            class: ModeClass::Real,
            slow_ratio: slow,
            kernel: None,
        });
    }
    classify_inter_area(&mut modes, cfg.band);
    Ok(modes)
}

/// Tags oscillatory modes inside the open band as inter-area. Modes whose
/// magnitude is comparable to the droop loop (slow ratio ≥ 1) are inverter modes.
pub fn classify_inter_area(modes: &mut [Mode], band: (f64, f64)) {
    for m in modes.iter_mut() {
        m.class = if m.slow_ratio >= 1.0 {
            ModeClass::Inverter
        } else if !m.is_oscillatory() {
            ModeClass::Real
        } else if m.freq_hz > band.0 && m.freq_hz < band.1 {
            ModeClass::InterArea
        } else {
            ModeClass::Local
        };
    }
}

pub fn inter_area(modes: &[Mode]) -> Vec<&Mode> {
    modes.iter().filter(|m| m.class == ModeClass::InterArea).collect()
}

/// Right/left eigenvectors of A rebuilt from the kernels of Λ and Λᵀ.
pub fn eigvec_from_kernel(
    jac: &JacobianSet,
    park: &DevicePark,
    lambda: C64,
    cfg: &ModalConfig,
) -> Result<KernelVectors> {
    let ng = jac.n_g;
    let ni = jac.n_i;
    let mp = park.droop_gain();
    let lam = lambda_matrix(jac, park, lambda)?;
    let right = linalg::null_vector(&lam)?;
    let x = resolvent_times_kig(jac, mp, lambda)?;
    // termwise magnitude of Λ; for n_g = 1 σ_min/σ_max is identically one
    let scale = {
        let minv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            ng,
            park.sgs.iter().map(|s| 1.0 / s.m),
        ));
        let dm = park.sgs.iter().map(|s| s.d / s.m).fold(0.0, f64::max);
        lambda.norm_sqr()
            + lambda.norm() * dm
            + linalg::spectral_norm(&(&minv * jac.kgg()))
            + mp * linalg::spectral_norm_c(&(linalg::to_complex(&(&minv * jac.kgi())) * &x))
    };
    let pencil = right.sigma_min() / scale.max(f64::MIN_POSITIVE);
    if pencil >= cfg.singular_tol {
        return Err(Error::NotOnSpectrum {
            lambda,
            ratio: if ng > 1 { right.ratio() } else { pencil },
        });
    }
    let count = right
        .singular_values
        .iter()
        .filter(|&&s| s <= cfg.singular_tol * scale)
        .count();
    if count >= 2 {
        return Err(Error::RepeatedMode { lambda, count });
    }
    let ratio = right.ratio();
    let left = linalg::null_vector(&lam.transpose())?;
    let u_star = linalg::normalize_phase(&right.vector);
    let v_star = linalg::normalize_phase(&left.vector);

    let mut u = CVec::zeros(2 * ng + ni);
    u.rows_mut(0, ng).copy_from(&u_star);
    u.rows_mut(ng, ng).copy_from(&(&u_star * lambda));
    u.rows_mut(2 * ng, ni).copy_from(&(&x * &u_star * c64(-mp, 0.0)));

    let minv_v = CVec::from_fn(ng, |r, _| v_star[r] / park.sgs[r].m);
    let mut v = CVec::zeros(2 * ng + ni);
    v.rows_mut(0, ng)
        .copy_from(&CVec::from_fn(ng, |r, _| v_star[r] * (lambda + park.sgs[r].d / park.sgs[r].m)));
    v.rows_mut(ng, ng).copy_from(&v_star);
    // (λ + m_p K_ii)⁻¹ K_ig M⁻¹ v*; K_ii symmetric so the resolvent is its own transpose
    v.rows_mut(2 * ng, ni).copy_from(&(&x * &minv_v * c64(-1.0, 0.0)));

    let u = linalg::normalize_phase(&u);
    let v = linalg::normalize_phase(&v);
    let a = assemble_state_matrix(jac, park)?.a;
    let a_norm = linalg::spectral_norm(&a);
    Ok(KernelVectors {
        residual_right: right_residual(&a, lambda, &u, a_norm),
        residual_left: left_residual(&a, lambda, &v, a_norm),
        u,
        v,
        u_star,
        v_star,
        sigma_ratio: ratio,
        pencil_residual: pencil,
    })
}

/// Fill `kernel` for every mode inside the slow regime. Modes where the
/// reduced pencil cannot be used keep `None`.
pub fn attach_kernels(modes: &mut [Mode], jac: &JacobianSet, park: &DevicePark, cfg: &ModalConfig) {
    for m in modes.iter_mut() {
        if m.slow_ratio < cfg.slow_threshold {
            m.kernel = eigvec_from_kernel(jac, park, m.lambda, cfg).ok();
        }
    }
}

/// Full modal analysis: spectrum, backend vectors, kernel vectors for slow modes.
pub fn analyze(jac: &JacobianSet, park: &DevicePark, cfg: &ModalConfig) -> Result<Vec<Mode>> {
    let sm = assemble_state_matrix(jac, park)?;
    let mut modes = eigen_modes(&sm, cfg)?;
    attach_kernels(&mut modes, jac, park, cfg);
    Ok(modes)
}

pub fn modes_csv(modes: &[Mode]) -> String {
    let mut out = String::from("mode_id,re,im,freq_hz,damping_pct,class,residual\n");
    for m in modes {
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{:.9},{:.9},{},{:.3e}",
            m.id,
            m.lambda.re,
            m.lambda.im,
            m.freq_hz,
            100.0 * m.damping,
            m.class.as_str(),
            m.residual()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn bare_mode(lambda: C64, slow: f64) -> Mode {
        Mode {
            id: "M1".into(),
            lambda,
            freq_hz: frequency_hz(lambda),
            damping: damping_ratio(lambda),
            right: CVec::zeros(1),
            left: CVec::zeros(1),
            residual_right: 0.0,
            residual_left: 0.0,
            vu_cond: 1.0,
            class: ModeClass::Real,
            slow_ratio: slow,
            kernel: None,
        }
    }

    #[test]
    fn eq11_values() {
        let l = c64(-1.0, 0.0);
        assert_eq!((frequency_hz(l), damping_ratio(l)), (0.0, 1.0));
        let l = c64(0.0, 2.0 * std::f64::consts::PI);
        assert!((frequency_hz(l) - 1.0).abs() < 1e-15);
        assert_eq!(damping_ratio(l), 0.0);
        let l = c64(-0.3, 4.0);
        assert!((100.0 * damping_ratio(l) - 7.479).abs() < 5e-4);
        assert!((frequency_hz(l) - std::f64::consts::FRAC_2_PI).abs() < 5e-5);
    }

    #[test]
    fn band_classification() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut modes = vec![
            bare_mode(c64(-0.1, 0.5 * two_pi), 0.01),
            bare_mode(c64(-0.1, 1.5 * two_pi), 0.01),
            bare_mode(c64(-2.0, 0.0), 0.01),
            bare_mode(c64(-300.0, 0.0), 5.0),
        ];
        classify_inter_area(&mut modes, (0.1, 1.0));
        let got: Vec<_> = modes.iter().map(|m| m.class).collect();
        assert_eq!(
            got,
            vec![ModeClass::InterArea, ModeClass::Local, ModeClass::Real, ModeClass::Inverter]
        );
    }

    #[test]
    fn slow_ratio_threshold() {
        assert!((slow_ratio(c64(0.0, 1.0), 100.0, 1.0) - 0.01).abs() < 1e-15);
        assert!((slow_ratio(c64(1.0, 0.0), 2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    fn scalar_toy(mp: f64) -> (JacobianSet, DevicePark) {
        let jac = JacobianSet::from_blocks(
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, -0.5),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_vec(vec![0.5, 0.5]),
        )
        .unwrap();
        (jac, DevicePark::with_gain(&[1.0], &[0.1], 1, mp).unwrap())
    }

    #[test]
    fn scalar_kernel_vectors() {
        let (jac, park) = scalar_toy(1.0);
        let cfg = ModalConfig::default();
        let modes = analyze(&jac, &park, &ModalConfig { slow_threshold: 10.0, ..cfg }).unwrap();
        for m in &modes {
            let kv = eigvec_from_kernel(&jac, &park, m.lambda, &cfg).unwrap();
            assert!((kv.u_star[0].norm() - 1.0).abs() < 1e-14);
            assert!((kv.v_star[0].norm() - 1.0).abs() < 1e-14);
            let l = m.lambda;
            let want = linalg::normalize_phase(&CVec::from_vec(vec![
                c64(1.0, 0.0),
                l,
                -(l + 1.0).inv() * (-0.5),
            ]));
            assert!((&kv.u - &want).norm() < 1e-12);
            assert!(kv.residual_right < 1e-12 && kv.residual_left < 1e-12);
        }
    }

    #[test]
    fn decoupled_inverter_block_is_zero() {
        let jac = JacobianSet::from_blocks(
            &DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.5]),
            &DMatrix::zeros(2, 3),
            &(DMatrix::identity(3, 3) * 2.0),
            &DVector::from_vec(vec![1.5, 1.0, 2.0, 2.0, 2.0]),
        )
        .unwrap();
        let park = DevicePark::with_gain(&[1.0, 2.0], &[0.1, 0.2], 3, 20.0).unwrap();
        let cfg = ModalConfig::default();
        let modes = analyze(&jac, &park, &cfg).unwrap();
        let osc: Vec<_> = modes.iter().filter(|m| m.is_oscillatory()).collect();
        assert_eq!(osc.len(), 2);
        for m in osc {
            let kv = m.kernel.as_ref().expect("slow mode has kernel vectors");
            assert!(kv.u.rows(4, 3).norm() < 1e-14);
        }
    }

    #[test]
    fn not_on_spectrum() {
        let (jac, park) = scalar_toy(1.0);
        let err = eigvec_from_kernel(&jac, &park, c64(0.3, 0.3), &ModalConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotOnSpectrum { .. }));
    }

    #[test]
    fn conjugate_closure_and_order() {
        let (jac, park) = scalar_toy(1.0);
        let sm = assemble_state_matrix(&jac, &park).unwrap();
        let modes = eigen_modes(&sm, &ModalConfig::default()).unwrap();
        assert_eq!(modes.len(), 2);
        assert!(modes[0].lambda.im == 0.0 && modes[1].lambda.im > 0.0);
        for m in &modes {
            assert!(m.residual() < 1e-12);
            assert!(m.vu_cond > 1e-3);
            assert!((0.0..=1.0).contains(&m.damping));
        }
        let csv = modes_csv(&modes);
        assert!(csv.starts_with("mode_id,re,im,freq_hz,damping_pct,class,residual\nM1,"));
    }

    #[test]
    fn cubic_roots_slow_at_large_droop() {
        let (jac, park) = scalar_toy(50.0);
        let modes = analyze(&jac, &park, &ModalConfig::default()).unwrap();
        for m in modes.iter().filter(|m| m.is_oscillatory()) {
            assert!(m.slow_ratio < 0.1, "{}", m.slow_ratio);
        }
    }
}

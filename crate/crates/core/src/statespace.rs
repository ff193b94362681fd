//! Composite small-signal state matrix and the reduced `Λ(λ, m_p)` pencil.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::devices::DevicePark;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, C64};
use crate::netmodel::JacobianSet;

/// Threshold on σ_min(λI + m_p K_ii) / max(1, |λ|) below which the resolvent is singular.
pub const RESOLVENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct StateMatrix {
    pub a: DMatrix<f64>,
    /// One label per state: `dg_<SG>`, `w_<SG>`, `di_<GFM>`.
    pub labels: Vec<String>,
    pub n_g: usize,
    pub n_i: usize,
    pub mp: f64,
    pub kii_norm2: f64,
    /// sha256 over the Jacobian and park parameters that produced `a`.
    pub provenance: String,
}

impl StateMatrix {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Dense CSV dump, header row of state labels.
    pub fn to_csv(&self) -> String {
        let mut out = self.labels.join(",");
        out.push('\n');
        for r in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|c| format!("{:e}", self.a[(r, c)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

fn check_dims(jac: &JacobianSet, park: &DevicePark) -> Result<()> {
    if jac.n_g != park.n_g() || jac.n_i != park.n_i() {
        return Err(Error::DimensionMismatch(format!(
            "Jacobian has {} SGs / {} GFMs but the device park has {} / {}",
            jac.n_g,
            jac.n_i,
            park.n_g(),
            park.n_i()
        )));
    }
    Ok(())
}

fn provenance(jac: &JacobianSet, park: &DevicePark) -> String {
    let mut h = Sha256::new();
    for x in jac.k.iter().chain(jac.k_diag.iter()) {
        h.update(x.to_le_bytes());
    }
    for sg in &park.sgs {
        h.update(sg.m.to_le_bytes());
        h.update(sg.d.to_le_bytes());
    }
    h.update(park.droop_gain().to_le_bytes());
    hex::encode(h.finalize())
}

pub fn state_labels(park: &DevicePark) -> Vec<String> {
    let mut labels = Vec::with_capacity(2 * park.n_g() + park.n_i());
    labels.extend(park.sgs.iter().map(|s| format!("dg_{}", s.id)));
    labels.extend(park.sgs.iter().map(|s| format!("w_{}", s.id)));
    labels.extend(park.gfms.iter().map(|g| format!("di_{}", g.id)));
    labels
}

pub fn assemble_state_matrix(jac: &JacobianSet, park: &DevicePark) -> Result<StateMatrix> {
    check_dims(jac, park)?;
    let (ng, ni) = (jac.n_g, jac.n_i);
    let n = 2 * ng + ni;
    let mp = park.droop_gain();
    let minv: Vec<f64> = park.sgs.iter().map(|s| 1.0 / s.m).collect();
    let d = park.damping();
    let k = &jac.k;

    let mut a = DMatrix::zeros(n, n);
    for r in 0..ng {
        a[(r, ng + r)] = 1.0;
        for c in 0..ng {
            a[(ng + r, c)] = -minv[r] * k[(r, c)];
        }
        a[(ng + r, ng + r)] = -minv[r] * d[r];
        for c in 0..ni {
            a[(ng + r, 2 * ng + c)] = -minv[r] * k[(r, ng + c)];
        }
    }
    for r in 0..ni {
        for c in 0..ng {
            a[(2 * ng + r, c)] = -mp * k[(ng + r, c)];
        }
        for c in 0..ni {
            a[(2 * ng + r, 2 * ng + c)] = -mp * k[(ng + r, ng + c)];
        }
    }
    Ok(StateMatrix {
        a,
        labels: state_labels(park),
        n_g: ng,
        n_i: ni,
        mp,
        kii_norm2: linalg::spectral_norm(&jac.kii()),
        provenance: provenance(jac, park),
    })
}

/// `(λI + m_p K_ii)` together with its smallest singular value.
pub fn resolvent_argument(jac: &JacobianSet, mp: f64, lambda: C64) -> Result<CMat> {
    let ni = jac.n_i;
    let arg = CMat::from_diagonal_element(ni, ni, lambda) + linalg::to_complex(&(jac.kii() * mp));
    let smin = linalg::singular_values(&arg).last().copied().unwrap_or(0.0);
    if smin <= RESOLVENT_TOL * lambda.norm().max(1.0) {
        return Err(Error::ResolventSingular { lambda });
    }
    Ok(arg)
}

/// `(λI + m_p K_ii)⁻¹ K_ig`.
pub fn resolvent_times_kig(jac: &JacobianSet, mp: f64, lambda: C64) -> Result<CMat> {
    let arg = resolvent_argument(jac, mp, lambda)?;
    linalg::solve_c(&arg, &linalg::to_complex(&jac.kig())).ok_or(Error::ResolventSingular { lambda })
}

pub fn lambda_matrix(jac: &JacobianSet, park: &DevicePark, lambda: C64) -> Result<CMat> {
    check_dims(jac, park)?;
    let ng = jac.n_g;
    let mp = park.droop_gain();
    let x = resolvent_times_kig(jac, mp, lambda)?;
    let reduced = linalg::to_complex(&jac.kgg()) - linalg::to_complex(&jac.kgi()) * x * c64(mp, 0.0);
    let minv = DVector::from_iterator(ng, park.sgs.iter().map(|s| c64(1.0 / s.m, 0.0)));
    let d = park.damping();
    let mut lam = reduced;
    for r in 0..ng {
        for c in 0..ng {
            lam[(r, c)] *= minv[r];
        }
        lam[(r, r)] += lambda * lambda + lambda * (d[r] / park.sgs[r].m);
    }
    Ok(lam)
}

/// Characteristic polynomial coefficients (monic, highest degree first) from a spectrum.
pub fn poly_from_roots(roots: &[C64]) -> Vec<C64> {
    let mut coeffs = vec![c64(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![c64(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn scalar_toy(mp: f64) -> (JacobianSet, DevicePark) {
        let jac = JacobianSet::from_blocks(
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, -0.5),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_vec(vec![0.5, 0.5]),
        )
        .unwrap();
        let park = DevicePark::with_gain(&[1.0], &[0.1], 1, mp).unwrap();
        (jac, park)
    }

    #[test]
    fn scalar_substitution() {
        let (jac, park) = scalar_toy(1.0);
        let sm = assemble_state_matrix(&jac, &park).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, -0.1, 0.5, 0.5, 0.0, -1.0]);
        assert_eq!(sm.a, want);
        assert_eq!(sm.labels, vec!["dg_G1", "w_G1", "di_I1"]);
    }

    #[test]
    fn characteristic_polynomial() {
        let (jac, park) = scalar_toy(1.0);
        let sm = assemble_state_matrix(&jac, &park).unwrap();
        let p = poly_from_roots(&linalg::eigenvalues(&sm.a).unwrap());
        for (got, want) in p.iter().zip([1.0, 1.1, 1.1, 0.75]) {
            assert!((got - c64(want, 0.0)).norm() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_droop_decouples() {
        let (jac, park) = scalar_toy(1.0);
        let mut sm = assemble_state_matrix(&jac, &park).unwrap();
        // the validated constructor rejects zero droop; zero the inverter rows instead
        for c in 0..3 {
            sm.a[(2, c)] = 0.0;
        }
        let mut ev = linalg::eigenvalues(&sm.a).unwrap();
        ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        assert!(ev[0].norm() < 1e-14);
        // remaining roots solve λ² + 0.1λ + 1 = 0
        for z in &ev[1..] {
            assert!((z * z + z * 0.1 + 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_in_droop() {
        let (jac, p1) = scalar_toy(1.0);
        let (_, p3) = scalar_toy(3.0);
        let (_, p7) = scalar_toy(7.0);
        let a1 = assemble_state_matrix(&jac, &p1).unwrap().a;
        let a3 = assemble_state_matrix(&jac, &p3).unwrap().a;
        let a7 = assemble_state_matrix(&jac, &p7).unwrap().a;
        // A(m) − A(0) is m·(A(1) − A(0)); the SG rows do not depend on m
        let diff = (&a7 - &a3) - (&a3 - &a1) * 2.0;
        assert!(diff.amax() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let (jac, _) = scalar_toy(1.0);
        let park = DevicePark::with_gain(&[1.0, 2.0], &[0.1, 0.1], 1, 1.0).unwrap();
        assert!(matches!(
            assemble_state_matrix(&jac, &park),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn lambda_at_zero_is_schur_complement() {
        let (jac, park) = scalar_toy(4.0);
        let lam = lambda_matrix(&jac, &park, c64(0.0, 0.0)).unwrap();
        assert!((lam[(0, 0)] - c64(1.0 - 0.25, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn lambda_decoupled() {
        let jac = JacobianSet::from_blocks(
            &DMatrix::from_element(1, 1, 2.0),
            &DMatrix::zeros(1, 1),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_vec(vec![2.0, 1.0]),
        )
        .unwrap();
        let park = DevicePark::with_gain(&[1.0], &[0.1], 1, 3.0).unwrap();
        let l = c64(-0.2, 1.3);
        let lam = lambda_matrix(&jac, &park, l).unwrap();
        assert!((lam[(0, 0)] - (l * l + l * 0.1 + 2.0)).norm() < 1e-14);
    }

    #[test]
    fn lambda_vanishes_on_toy_spectrum() {
        let (jac, park) = scalar_toy(1.0);
        let sm = assemble_state_matrix(&jac, &park).unwrap();
        for l in linalg::eigenvalues(&sm.a).unwrap() {
            let lam = lambda_matrix(&jac, &park, l).unwrap();
            assert!(lam[(0, 0)].norm() < 1e-9, "{l}: {}", lam[(0, 0)]);
        }
    }

    #[test]
    fn resolvent_singular_reported() {
        let (jac, park) = scalar_toy(1.0);
        assert!(matches!(
            lambda_matrix(&jac, &park, c64(-1.0, 0.0)),
            Err(Error::ResolventSingular { .. })
        ));
    }
}

//! Linearized injections `ΔP = K Δδ` and the grid-strength bounds on `K_ii`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::kron::ReducedNetwork;
use crate::error::{Error, Result};
use crate::linalg;

/// Couplings below this are treated as absent when checking the angle wedge.
const COUPLING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSet {
    pub labels: Vec<String>,
    pub n_g: usize,
    pub n_i: usize,
    /// Full `(n_g+n_i)²` Jacobian `∂P/∂δ`, SG rows/columns first.
    pub k: DMatrix<f64>,
    /// Reference-tie (diagonal) component of every row.
    pub k_diag: DVector<f64>,
    pub gamma_l: f64,
    pub gamma_u: f64,
}

impl JacobianSet {
    /// Assemble from blocks. `k_diag` is the diagonal component over all
    /// `n_g + n_i` rows; the Laplacian part is `K − diag(k_diag)`.
    pub fn from_blocks(
        kgg: &DMatrix<f64>,
        kgi: &DMatrix<f64>,
        kii: &DMatrix<f64>,
        k_diag: &DVector<f64>,
    ) -> Result<Self> {
        let n_g = kgg.nrows();
        let n_i = kii.nrows();
        if kgg.ncols() != n_g || kii.ncols() != n_i || kgi.shape() != (n_g, n_i) {
            return Err(Error::DimensionMismatch(format!(
                "blocks K_gg {:?}, K_gi {:?}, K_ii {:?}",
                kgg.shape(),
                kgi.shape(),
                kii.shape()
            )));
        }
        if k_diag.len() != n_g + n_i {
            return Err(Error::DimensionMismatch("k_diag length".into()));
        }
        let n = n_g + n_i;
        let mut k = DMatrix::zeros(n, n);
        k.view_mut((0, 0), (n_g, n_g)).copy_from(kgg);
        k.view_mut((0, n_g), (n_g, n_i)).copy_from(kgi);
        k.view_mut((n_g, 0), (n_i, n_g)).copy_from(&kgi.transpose());
        k.view_mut((n_g, n_g), (n_i, n_i)).copy_from(kii);
        if linalg::asymmetry(&k) > 1e-12 {
            return Err(Error::Invalid("K_gg and K_ii must be symmetric".into()));
        }
        let labels = (0..n_g)
            .map(|k| format!("G{}", k + 1))
            .chain((0..n_i).map(|j| format!("I{}", j + 1)))
            .collect();
        let mut jac = JacobianSet {
            labels,
            n_g,
            n_i,
            k,
            k_diag: k_diag.clone(),
            gamma_l: 0.0,
            gamma_u: 0.0,
        };
        jac.refresh_gamma();
        Ok(jac)
    }

    fn refresh_gamma(&mut self) {
        let (gl, gu) = raw_gamma(self);
        self.gamma_l = gl;
        self.gamma_u = gu;
    }

    pub fn kgg(&self) -> DMatrix<f64> {
        self.k.view((0, 0), (self.n_g, self.n_g)).into_owned()
    }

    pub fn kgi(&self) -> DMatrix<f64> {
        self.k.view((0, self.n_g), (self.n_g, self.n_i)).into_owned()
    }

    pub fn kig(&self) -> DMatrix<f64> {
        self.k.view((self.n_g, 0), (self.n_i, self.n_g)).into_owned()
    }

    pub fn kii(&self) -> DMatrix<f64> {
        self.k.view((self.n_g, self.n_g), (self.n_i, self.n_i)).into_owned()
    }

    pub fn kgg_diag(&self) -> DVector<f64> {
        self.k_diag.rows(0, self.n_g).into_owned()
    }

    pub fn kii_diag(&self) -> DVector<f64> {
        self.k_diag.rows(self.n_g, self.n_i).into_owned()
    }

    pub fn kgg_laplacian(&self) -> DMatrix<f64> {
        self.kgg() - DMatrix::from_diagonal(&self.kgg_diag())
    }

    pub fn kii_laplacian(&self) -> DMatrix<f64> {
        self.kii() - DMatrix::from_diagonal(&self.kii_diag())
    }
}

/// Nonlinear lossless injections at internal angles `delta`.
pub fn injections(red: &ReducedNetwork, delta: &DVector<f64>) -> DVector<f64> {
    let n = red.dim();
    DVector::from_fn(n, |k, _| {
        let mut p = red.e[k] * red.v_ref * red.reference_tie(k) * delta[k].sin();
        for j in 0..n {
            if j != k {
                p += red.e[k] * red.e[j] * red.coupling(k, j) * (delta[k] - delta[j]).sin();
            }
        }
        p
    })
}

fn wedge_check(red: &ReducedNetwork) -> Result<()> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let n = red.dim();
    for k in 0..n {
        if red.reference_tie(k) > COUPLING_FLOOR && red.delta0[k].abs() >= half_pi {
            return Err(Error::AngleWedge {
                branch: format!("{}–ref", red.labels[k]),
                angle: red.delta0[k],
            });
        }
        for j in (k + 1)..n {
            let diff = red.delta0[k] - red.delta0[j];
            if red.coupling(k, j) > COUPLING_FLOOR && diff.abs() >= half_pi {
                return Err(Error::AngleWedge {
                    branch: format!("{}–{}", red.labels[k], red.labels[j]),
                    angle: diff,
                });
            }
        }
    }
    Ok(())
}

/// Analytic Jacobian of [`injections`] at the operating point.
pub fn build_jacobians(red: &ReducedNetwork) -> Result<JacobianSet> {
    wedge_check(red)?;
    let n = red.dim();
    let d = &red.delta0;
    let mut k = DMatrix::zeros(n, n);
    let mut k_diag = DVector::zeros(n);
    for a in 0..n {
        let tie = red.e[a] * red.v_ref * red.reference_tie(a) * d[a].cos();
        k_diag[a] = tie;
        let mut diag = tie;
        for b in 0..n {
            if b != a {
                let w = red.e[a] * red.e[b] * red.coupling(a, b) * (d[a] - d[b]).cos();
                k[(a, b)] = -w;
                diag += w;
            }
        }
        k[(a, a)] = diag;
    }
    let mut jac = JacobianSet {
        labels: red.labels.clone(),
        n_g: red.n_g,
        n_i: red.n_i,
        k,
        k_diag,
        gamma_l: 0.0,
        gamma_u: 0.0,
    };
    jac.refresh_gamma();
    Ok(jac)
}

fn raw_gamma(jac: &JacobianSet) -> (f64, f64) {
    let diag = jac.kii_diag();
    let lap = jac.kii_laplacian();
    let gl = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let gu = (0..jac.n_i)
        .map(|j| diag[j] + 2.0 * lap[(j, j)])
        .fold(f64::NEG_INFINITY, f64::max);
    (gl, gu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridStrength {
    pub gamma_l: f64,
    pub gamma_u: f64,
    /// Extreme eigenvalues of K_ii used to confirm `γ_l I ⪯ K_ii ⪯ γ_u I`.
    pub kii_eig_min: f64,
    pub kii_eig_max: f64,
}

/// `γ_l = min_j K_ii,j^diag`, `γ_u = max_j (K_ii,j^diag + 2 K_ii,j^L)`, with the
/// eigenvalue sandwich verified.
pub fn gamma_bounds(jac: &JacobianSet) -> Result<GridStrength> {
    let (gamma_l, gamma_u) = raw_gamma(jac);
    if gamma_l.is_nan() || gamma_l <= 0.0 {
        return Err(Error::WeakGrid { gamma_l });
    }
    let (emin, emax) = linalg::symmetric_extremes(&jac.kii());
    let tol = 1e-10 * gamma_u.abs().max(1.0);
    if emin < gamma_l - tol || emax > gamma_u + tol {
        return Err(Error::Numerical(format!(
            "grid-strength sandwich violated: eig(K_ii) in [{emin}, {emax}], bounds [{gamma_l}, {gamma_u}]"
        )));
    }
    Ok(GridStrength {
        gamma_l,
        gamma_u,
        kii_eig_min: emin,
        kii_eig_max: emax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(shunt2: f64) -> ReducedNetwork {
        ReducedNetwork {
            labels: vec!["G1".into(), "I1".into()],
            n_g: 1,
            n_i: 1,
            b_red: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0 + shunt2]),
            e: DVector::from_element(2, 1.0),
            delta0: DVector::zeros(2),
            v_ref: 1.0,
            condition: 1.0,
        }
    }

    #[test]
    fn pure_laplacian_at_zero_angle() {
        let jac = build_jacobians(&two_bus(0.0)).unwrap();
        assert_eq!(jac.k, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(jac.k_diag, DVector::zeros(2));
        assert!(matches!(gamma_bounds(&jac), Err(Error::WeakGrid { .. })));
    }

    #[test]
    fn additive_shunt_lands_on_diag() {
        let jac = build_jacobians(&two_bus(0.5)).unwrap();
        assert!((jac.k[(1, 1)] - 1.5).abs() < 1e-15);
        assert_eq!(jac.k_diag, DVector::from_vec(vec![0.0, 0.5]));
    }

    #[test]
    fn wedge_violation_names_pair() {
        let mut red = two_bus(0.5);
        red.delta0[0] = 1.0;
        red.delta0[1] = -0.7;
        match build_jacobians(&red) {
            Err(Error::AngleWedge { branch, .. }) => assert_eq!(branch, "G1–I1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gamma_from_split() {
        // K_ii^diag = diag(0.8, 1.0), K_ii^L = [[0.5,-0.5],[-0.5,0.5]].
        let kgg = DMatrix::from_element(1, 1, 2.0);
        let kgi = DMatrix::zeros(1, 2);
        let kii = DMatrix::from_row_slice(2, 2, &[1.3, -0.5, -0.5, 1.5]);
        let diag = DVector::from_vec(vec![2.0, 0.8, 1.0]);
        let jac = JacobianSet::from_blocks(&kgg, &kgi, &kii, &diag).unwrap();
        let gs = gamma_bounds(&jac).unwrap();
        assert!((gs.gamma_l - 0.8).abs() < 1e-15);
        assert!((gs.gamma_u - 2.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_diagonal_gamma_collapses() {
        let c = 1.7;
        let kii = DMatrix::from_diagonal_element(3, 3, c);
        let jac = JacobianSet::from_blocks(
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::zeros(1, 3),
            &kii,
            &DVector::from_element(4, c),
        )
        .unwrap();
        let gs = gamma_bounds(&jac).unwrap();
        assert_eq!(gs.gamma_l, c);
        assert_eq!(gs.gamma_u, c);
    }
}

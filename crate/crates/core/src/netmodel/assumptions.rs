use serde::Serialize;

use super::jacobian::JacobianSet;
use crate::linalg;

/// Relative floor below which a singular value counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Network-assumption margins. Violations are reported, never raised.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// λ_min(K_gg − K_gi K_ii⁻ᵀ K_ig); positive definiteness needs > 0.
    pub reduced_stiffness_min_eig: f64,
    pub positive_definite: bool,
    /// Smallest singular value of K_gi K_giᵀ.
    pub kgi_gram_sigma_min: f64,
    /// Smallest singular value of K_igᵀ K_ig.
    pub kig_gram_sigma_min: f64,
    pub grams_invertible: bool,
    pub n_g: usize,
    pub n_i: usize,
    /// More inverters than generators.
    pub storage_outnumbers_sgs: bool,
    pub pass: bool,
}

pub fn validate_assumptions(jac: &JacobianSet) -> AssumptionReport {
    let kgg = jac.kgg();
    let kgi = jac.kgi();
    let kig = jac.kig();
    let kii = jac.kii();

    let reduced_stiffness_min_eig = match kii.transpose().lu().solve(&kig) {
        Some(x) => {
            let s = &kgg - &kgi * x;
            let s = (&s + s.transpose()) * 0.5;
            linalg::symmetric_extremes(&s).0
        }
        None => f64::NEG_INFINITY,
    };

    let gram_min = |g: nalgebra::DMatrix<f64>| -> (f64, bool) {
        let sv = linalg::singular_values_real(&g);
        let smin = *sv.last().unwrap_or(&0.0);
        let smax = sv.first().copied().unwrap_or(0.0);
        (smin, smax > 0.0 && smin > RANK_TOL * smax)
    };
    let (kgi_gram_sigma_min, ok1) = gram_min(&kgi * kgi.transpose());
    let (kig_gram_sigma_min, ok2) = gram_min(kig.transpose() * &kig);

    let positive_definite = reduced_stiffness_min_eig > 0.0;
    let grams_invertible = ok1 && ok2;
    let storage_outnumbers_sgs = jac.n_i > jac.n_g;
    AssumptionReport {
        reduced_stiffness_min_eig,
        positive_definite,
        kgi_gram_sigma_min,
        kig_gram_sigma_min,
        grams_invertible,
        n_g: jac.n_g,
        n_i: jac.n_i,
        storage_outnumbers_sgs,
        pass: positive_definite && grams_invertible && storage_outnumbers_sgs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn decoupled_case_fails_gram_check_only() {
        let jac = JacobianSet::from_blocks(
            &DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.5]),
            &DMatrix::zeros(2, 3),
            &DMatrix::from_diagonal_element(3, 3, 1.0),
            &DVector::from_element(5, 1.0),
        )
        .unwrap();
        let r = validate_assumptions(&jac);
        assert!(r.positive_definite);
        assert!(!r.grams_invertible);
        assert_eq!(r.kgi_gram_sigma_min, 0.0);
        assert!(!r.pass);
    }

    #[test]
    fn more_sgs_than_inverters_flags_count() {
        let jac = JacobianSet::from_blocks(
            &DMatrix::from_diagonal_element(2, 2, 2.0),
            &DMatrix::from_row_slice(2, 1, &[-0.5, -0.4]),
            &DMatrix::from_element(1, 1, 2.0),
            &DVector::from_element(3, 1.0),
        )
        .unwrap();
        let r = validate_assumptions(&jac);
        assert!(!r.storage_outnumbers_sgs);
        assert!(!r.pass);
    }
}

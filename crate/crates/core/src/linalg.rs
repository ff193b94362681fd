//! Dense helpers shared by the analysis modules.
//!
//! Everything here is a thin layer over nalgebra: real Schur for spectra,
//! complex SVD for kernels and singularity metrics, Hermitian eigensolves for
//! the extreme eigenvalues used by the design conditions.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| c64(x, 0.0))
}

/// Spectrum of a real square matrix via the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    if !a.iter().all(|x| x.is_finite()) {
        return Err(Error::Eigensolver("matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| {
            Error::Eigensolver(format!(
                "real Schur iteration did not converge for a {n}x{n} matrix"
            ))
        })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Singular values of a complex matrix, sorted descending.
pub fn singular_values(c: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = c.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn singular_values_real(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Result of a kernel extraction: right-singular vector at σ_min plus the
/// full singular spectrum (descending).
pub struct NullVector {
    pub vector: CVec,
    pub singular_values: Vec<f64>,
}

impl NullVector {
    pub fn sigma_min(&self) -> f64 {
        *self.singular_values.last().unwrap_or(&0.0)
    }

    pub fn sigma_max(&self) -> f64 {
        *self.singular_values.first().unwrap_or(&0.0)
    }

    pub fn ratio(&self) -> f64 {
        let smax = self.sigma_max();
        if smax == 0.0 {
            0.0
        } else {
            self.sigma_min() / smax
        }
    }

    /// Count of singular values at or below `tol · σ_max`.
    pub fn near_null_count(&self, tol: f64) -> usize {
        let smax = self.sigma_max();
        self.singular_values.iter().filter(|&&s| s <= tol * smax).count()
    }
}

pub fn null_vector(c: &CMat) -> Result<NullVector> {
    let svd = c.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Numerical("empty matrix".into()))?;
    let vector: CVec = v_t.row(imin).transpose().map(|z| z.conj());
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    Ok(NullVector {
        vector,
        singular_values,
    })
}

/// Extreme eigenvalues (min, max) of a Hermitian matrix.
pub fn hermitian_extremes(c: &CMat) -> (f64, f64) {
    let eig = SymmetricEigen::new(c.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values_real(m).first().copied().unwrap_or(0.0)
}

pub fn spectral_norm_c(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn solve_c(a: &CMat, b: &CMat) -> Option<CMat> {
    a.clone().lu().solve(b)
}

/// Unit 2-norm with the largest-magnitude entry rotated onto the positive real axis.
pub fn normalize_phase(v: &CVec) -> CVec {
    let norm = v.norm();
    if norm == 0.0 {
        return v.clone();
    }
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(c64(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    v.map(|z| z * phase / norm)
}

/// |aᴴ b| / (‖a‖ ‖b‖).
pub fn overlap(a: &CVec, b: &CVec) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dotc(b).norm() / (na * nb)
}

/// Max relative asymmetry ‖M − Mᵀ‖_max / max(1, ‖M‖_max).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// Least-squares slope of log(y) against log(x), negated (decay exponent).
pub fn decay_exponent(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &yy)| yy > 0.0)
        .map(|(&xx, &yy)| (xx.ln(), yy.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_rotation_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let mut ev = eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.im.total_cmp(&y.im));
        assert!((ev[0] - c64(0.0, -2.0)).norm() < 1e-14);
        assert!((ev[1] - c64(0.0, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn null_vector_of_rank_one() {
        let c = to_complex(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let nv = null_vector(&c).unwrap();
        assert!(nv.sigma_min() < 1e-14);
        let r = &c * &nv.vector;
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn phase_normalization_is_deterministic() {
        let v = CVec::from_vec(vec![c64(0.0, 2.0), c64(1.0, 0.0)]);
        let n = normalize_phase(&v);
        assert!((n.norm() - 1.0).abs() < 1e-15);
        assert!(n[0].im.abs() < 1e-15 && n[0].re > 0.0);
    }

    #[test]
    fn decay_exponent_of_power_law() {
        let x = [10.0, 100.0, 1000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(-4)).collect();
        assert!((decay_exponent(&x, &y) - 4.0).abs() < 1e-12);
    }
}

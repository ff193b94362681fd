//! Kron reduction onto the machine and inverter internal buses.
//!
//! Matrices here use the grounded-Laplacian convention: `L[k][k]` is the sum
//! of all susceptances incident to bus k (including the tie to the stiff
//! reference), `L[k][j] = -b_kj`. The conventional bus susceptance matrix is
//! `-L`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::case::NetworkCase;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    /// Device ids in kept order: SGs then GFMs.
    pub labels: Vec<String>,
    pub n_g: usize,
    pub n_i: usize,
    /// Reduced grounded Laplacian over the internal buses.
    pub b_red: DMatrix<f64>,
    /// Internal voltage magnitudes.
    pub e: DVector<f64>,
    /// Operating-point internal angles.
    pub delta0: DVector<f64>,
    pub v_ref: f64,
    /// 2-norm condition number of the eliminated block (1 when nothing is eliminated).
    pub condition: f64,
}

impl ReducedNetwork {
    pub fn dim(&self) -> usize {
        self.n_g + self.n_i
    }

    /// Coupling susceptance between internal buses k and j (k != j), non-negative.
    pub fn coupling(&self, k: usize, j: usize) -> f64 {
        -self.b_red[(k, j)]
    }

    /// Effective susceptance from internal bus k to the stiff reference.
    pub fn reference_tie(&self, k: usize) -> f64 {
        self.b_red.row(k).sum()
    }
}

/// Schur complement `L_kk − L_kl L_ll⁻¹ L_lk` over `keep`; returns the reduced
/// matrix and the condition number of the eliminated block.
pub fn kron_reduce_matrix(l: &DMatrix<f64>, keep: &[usize]) -> Result<(DMatrix<f64>, f64)> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::DimensionMismatch("Kron reduction needs a square matrix".into()));
    }
    let mut is_kept = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(Error::DimensionMismatch(format!("kept index {k} out of range {n}")));
        }
        is_kept[k] = true;
    }
    let elim: Vec<usize> = (0..n).filter(|&i| !is_kept[i]).collect();
    let l_kk = l.select_rows(keep).select_columns(keep);
    if elim.is_empty() {
        return Ok((l_kk, 1.0));
    }
    let l_ll = l.select_rows(&elim).select_columns(&elim);
    let l_kl = l.select_rows(keep).select_columns(&elim);
    let l_lk = l.select_rows(&elim).select_columns(keep);

    let sv = linalg::singular_values_real(&l_ll);
    let smax = sv[0];
    let smin = *sv.last().unwrap();
    if smin <= 1e-13 * smax.max(1.0) {
        return Err(Error::SingularBlock { sigma_min: smin });
    }
    let x = l_ll
        .lu()
        .solve(&l_lk)
        .ok_or(Error::SingularBlock { sigma_min: smin })?;
    let mut red = l_kk - l_kl * x;
    // Symmetrize the rounding residue; the exact result is symmetric.
    red = (&red + red.transpose()) * 0.5;
    Ok((red, smax / smin))
}

/// Augmented grounded Laplacian: internal buses first (SG then GFM), then
/// network buses in case order.
pub fn augmented_laplacian(case: &NetworkCase) -> DMatrix<f64> {
    let nd = case.n_g() + case.n_i();
    let nb = case.buses.len();
    let n = nd + nb;
    let idx: HashMap<&str, usize> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), nd + i))
        .collect();
    let mut l = DMatrix::zeros(n, n);
    let mut connect = |a: usize, b: usize, s: f64| {
        l[(a, a)] += s;
        l[(b, b)] += s;
        l[(a, b)] -= s;
        l[(b, a)] -= s;
    };
    for br in &case.branches {
        connect(idx[br.from.as_str()], idx[br.to.as_str()], br.b);
    }
    for (k, sg) in case.sgs.iter().enumerate() {
        connect(k, idx[sg.bus.as_str()], 1.0 / sg.xd);
    }
    for (j, g) in case.gfms.iter().enumerate() {
        connect(case.n_g() + j, idx[g.bus.as_str()], 1.0 / g.x);
    }
    for bus in &case.buses {
        let i = idx[bus.id.as_str()];
        l[(i, i)] += bus.shunt;
    }
    for load in &case.loads {
        let i = idx[load.bus.as_str()];
        l[(i, i)] += load.b;
    }
    l
}

pub fn kron_reduce(case: &NetworkCase) -> Result<ReducedNetwork> {
    let nd = case.n_g() + case.n_i();
    let l = augmented_laplacian(case);
    let keep: Vec<usize> = (0..nd).collect();
    let (b_red, condition) = kron_reduce_matrix(&l, &keep)?;
    let (e, delta) = case.internal_states();
    Ok(ReducedNetwork {
        labels: case.device_ids(),
        n_g: case.n_g(),
        n_i: case.n_i(),
        b_red,
        e: DVector::from_vec(e),
        delta0: DVector::from_vec(delta),
        v_ref: case.operating_point.v_ref,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_eliminated_is_identity() {
        let l = DMatrix::from_row_slice(2, 2, &[1.5, -1.0, -1.0, 1.2]);
        let (red, cond) = kron_reduce_matrix(&l, &[0, 1]).unwrap();
        assert_eq!(red, l);
        assert_eq!(cond, 1.0);
    }

    #[test]
    fn series_combination_of_chain() {
        let (b1, b2) = (4.0, 6.0);
        let l = DMatrix::from_row_slice(
            3,
            3,
            &[b1, -b1, 0.0, -b1, b1 + b2, -b2, 0.0, -b2, b2],
        );
        let (red, _) = kron_reduce_matrix(&l, &[0, 2]).unwrap();
        let series = b1 * b2 / (b1 + b2);
        assert!((-red[(0, 1)] - series).abs() < 1e-14);
        assert!((red[(0, 0)] - series).abs() < 1e-14);
        assert_eq!(red[(0, 1)], red[(1, 0)]);
    }

    #[test]
    fn floating_interior_is_singular() {
        // Middle bus connects to nothing: its block is exactly zero.
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0]);
        match kron_reduce_matrix(&l, &[0, 2]) {
            Err(Error::SingularBlock { sigma_min }) => assert!(sigma_min < 1e-12),
            other => panic!("expected singular block, got {other:?}"),
        }
    }
}

use gridform_ssa::devices::timescale_check;
use gridform_ssa::fixtures::{toy2x3, TOY2X3};
use gridform_ssa::linalg::overlap;
use gridform_ssa::modal::{analyze, inter_area, ModalConfig};
use gridform_ssa::netmodel::{augmented_laplacian, injections, load_case};
use nalgebra::{DMatrix, DVector};

#[test]
fn reparses_byte_identically() {
    let case = load_case(TOY2X3).unwrap();
    assert_eq!(case.to_json(), TOY2X3);
    assert_eq!((case.n_g(), case.n_i(), case.buses.len()), (2, 3, 6));
}

#[test]
fn reduction_matches_direct_schur_complement() {
    let model = toy2x3().unwrap();
    let l = augmented_laplacian(&model.case);
    // brute force: invert the interior block explicitly
    let (nd, n) = (5, l.nrows());
    let kk = l.view((0, 0), (nd, nd)).into_owned();
    let kl = l.view((0, nd), (nd, n - nd)).into_owned();
    let ll_inv = l.view((nd, nd), (n - nd, n - nd)).into_owned().try_inverse().unwrap();
    let direct = &kk - &kl * ll_inv * kl.transpose();
    assert!((&model.reduced.b_red - direct).amax() < 1e-10);
}

#[test]
fn jacobian_matches_finite_differences() {
    let model = toy2x3().unwrap();
    let d0 = model.reduced.delta0.clone();
    let h = 1e-6;
    let n = d0.len();
    let mut fd = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut dp = d0.clone();
        let mut dm = d0.clone();
        dp[j] += h;
        dm[j] -= h;
        let col: DVector<f64> = (injections(&model.reduced, &dp) - injections(&model.reduced, &dm)) / (2.0 * h);
        fd.set_column(j, &col);
    }
    let rel = (&fd - &model.jac.k).amax() / model.jac.k.amax();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn strength_assumptions_and_timescale() {
    let model = toy2x3().unwrap();
    let s = model.strength;
    assert!(s.kii_eig_min >= s.gamma_l && s.kii_eig_max <= s.gamma_u);
    let rep = model.assumptions();
    assert!(rep.pass, "{rep:?}");
    let t = timescale_check(&model.park);
    assert!(t.margin > 10.0 && t.warning.is_none());
}

#[test]
fn laplacian_rows_sum_to_diag() {
    let model = toy2x3().unwrap();
    let k = &model.jac.k;
    for r in 0..k.nrows() {
        assert!((k.row(r).sum() - model.jac.k_diag[r]).abs() < 1e-10);
    }
}

#[test]
fn kernel_vectors_match_backend() {
    let model = toy2x3().unwrap();
    let cfg = ModalConfig::default();
    let modes = analyze(&model.jac, &model.park, &cfg).unwrap();
    let ia = inter_area(&modes);
    assert!(!ia.is_empty());
    for m in ia {
        let kv = m.kernel.as_ref().unwrap();
        let angle = overlap(&kv.u, &m.right).min(1.0).acos();
        assert!(angle < 1e-6, "{}: {angle}", m.id);
        assert!(overlap(&kv.v, &m.left) > 1.0 - 1e-10);
        assert!(kv.sigma_ratio < 1e-8);
        println!("{} {:.4} Hz zeta {:.3}% slow {:.3}", m.id, m.freq_hz, 100.0 * m.damping, m.slow_ratio);
    }
}

use gridform_ssa::fixtures::toy2x3;
use gridform_ssa::modal::{analyze, inter_area, ModalConfig};
use gridform_ssa::ringdown::{estimate_mode, linear_response, mode_perturbation, simulate, ModeEstimate};
use nalgebra::DVector;

#[test]
fn zero_perturbation_holds_equilibrium() {
    let model = toy2x3().unwrap();
    let n = model.state_matrix().unwrap().dim();
    let traj = simulate(&model, &DVector::zeros(n), 5.0, 1e-3).unwrap();
    let dev = traj.deviations().iter().map(|d| d.amax()).fold(0.0, f64::max);
    assert!(dev < 1e-9, "{dev}");
    assert!(!traj.terminated);
}

#[test]
fn coarse_step_rejected() {
    let model = toy2x3().unwrap();
    let n = model.state_matrix().unwrap().dim();
    assert!(simulate(&model, &DVector::zeros(n), 1.0, 0.05).is_err());
}

#[test]
fn rk4_order() {
    let model = toy2x3().unwrap();
    let n = model.state_matrix().unwrap().dim();
    let mut x0 = DVector::zeros(n);
    x0[0] = 0.05;
    let run = |dt: f64| simulate(&model, &x0, 2.0, dt).unwrap().x.last().unwrap().clone();
    let (a, b, c) = (run(4e-3), run(2e-3), run(1e-3));
    let ratio = (&a - &b).norm() / (&b - &c).norm();
    assert!((ratio.log2() - 4.0).abs() < 0.5, "{ratio}");
}

#[test]
fn ringdown_matches_linear_modes() {
    let model = toy2x3().unwrap();
    let sm = model.state_matrix().unwrap();
    let modes = analyze(&model.jac, &model.park, &ModalConfig::default()).unwrap();
    for m in inter_area(&modes) {
        let x0 = mode_perturbation(&m.right, 1e-3);
        let traj = simulate(&model, &x0, 20.0, 1e-3).unwrap();
        let ch = (0..2 * sm.n_g).max_by(|&a, &b| m.right[a].norm().total_cmp(&m.right[b].norm())).unwrap();
        let est = estimate_mode(&traj, ch);
        println!("{} linear f {:.4} z {:.4} -> {est:?}", m.id, m.freq_hz, m.damping);
        if let ModeEstimate::Oscillatory { freq_hz, damping, .. } = est {
            assert!((freq_hz - m.freq_hz).abs() / m.freq_hz < 0.05);
            assert!((damping - m.damping).abs() / m.damping < 0.2);
        } else {
            panic!("no oscillation");
        }
        let mut errs = Vec::new();
        for eps in [1e-4, 1e-3] {
            let x0 = mode_perturbation(&m.right, eps);
            let traj = simulate(&model, &x0, 20.0, 1e-3).unwrap();
            let idx: Vec<usize> = (0..traj.t.len()).step_by(100).collect();
            let times: Vec<f64> = idx.iter().map(|&k| traj.t[k]).collect();
            let lin = linear_response(&sm.a, &x0, &times);
            let dev = traj.deviations();
            let e = idx.iter().zip(&lin).map(|(&k, l)| (&dev[k] - l).norm()).fold(0.0, f64::max);
            let peak = lin.iter().map(|l| l.norm()).fold(0.0, f64::max);
            println!("eps {eps}: max mismatch {e:.3e} rel {:.3e}", e / peak);
            errs.push(e);
        }
        let order = (errs[1] / errs[0]).log10();
        println!("order {order}");
        assert!((order - 2.0).abs() < 0.2);
    }
}

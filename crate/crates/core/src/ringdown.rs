//! Nonlinear ringdown of the reduced swing/droop model and modal estimation
//! from the resulting trajectories.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::GridModel;
use crate::netmodel::{injections, ReducedNetwork};
use crate::statespace::state_labels;

/// Operating point the simulation is anchored to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    /// δ* over SGs then GFMs.
    pub delta: Vec<f64>,
    /// Mechanical power P^m per SG.
    pub p_m: Vec<f64>,
    /// Power set-point P^set per GFM.
    pub p_set: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub t: Vec<f64>,
    /// Full state at each time, absolute (angles in rad, speed deviation).
    pub x: Vec<DVector<f64>>,
    pub equilibrium: Equilibrium,
    pub events: Vec<String>,
    /// Set when the run left the ±π/2 wedge before the horizon.
    pub terminated: bool,
}

impl Trajectory {
    /// Equilibrium state vector `[δ_g*, 0, δ_i*]`.
    pub fn x_star(&self) -> DVector<f64> {
        let ng = self.equilibrium.p_m.len();
        let ni = self.equilibrium.p_set.len();
        let mut x = DVector::zeros(2 * ng + ni);
        x.rows_mut(0, ng).copy_from_slice(&self.equilibrium.delta[..ng]);
        x.rows_mut(2 * ng, ni).copy_from_slice(&self.equilibrium.delta[ng..]);
        x
    }

    /// Deviation from equilibrium of one state.
    pub fn channel(&self, idx: usize) -> Vec<f64> {
        let xs = self.x_star();
        self.x.iter().map(|x| x[idx] - xs[idx]).collect()
    }

    pub fn deviations(&self) -> Vec<DVector<f64>> {
        let xs = self.x_star();
        self.x.iter().map(|x| x - &xs).collect()
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() > 1 {
            self.t[1] - self.t[0]
        } else {
            0.0
        }
    }

    /// `t` plus one deviation column per state label.
    pub fn to_csv(&self) -> String {
        let mut out = format!("t,{}\n", self.labels.join(","));
        for (t, d) in self.t.iter().zip(self.deviations()) {
            let _ = write!(out, "{t:.6}");
            for v in d.iter() {
                let _ = write!(out, ",{v:.12e}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn equilibrium(red: &ReducedNetwork) -> Equilibrium {
    let p = injections(red, &red.delta0);
    Equilibrium {
        delta: red.delta0.iter().copied().collect(),
        p_m: p.rows(0, red.n_g).iter().copied().collect(),
        p_set: p.rows(red.n_g, red.n_i).iter().copied().collect(),
    }
}

struct Rhs<'a> {
    red: &'a ReducedNetwork,
    m: Vec<f64>,
    d: Vec<f64>,
    mp: f64,
    eq: &'a Equilibrium,
}

impl Rhs<'_> {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let (ng, ni) = (self.red.n_g, self.red.n_i);
        let mut delta = DVector::zeros(ng + ni);
        delta.rows_mut(0, ng).copy_from(&x.rows(0, ng));
        delta.rows_mut(ng, ni).copy_from(&x.rows(2 * ng, ni));
        let p = injections(self.red, &delta);
        let mut dx = DVector::zeros(x.len());
        for k in 0..ng {
            dx[k] = x[ng + k];
            dx[ng + k] = (self.eq.p_m[k] - p[k] - self.d[k] * x[ng + k]) / self.m[k];
        }
        for j in 0..ni {
            dx[2 * ng + j] = self.mp * (self.eq.p_set[j] - p[ng + j]);
        }
        dx
    }
}

fn wedge_violation(red: &ReducedNetwork, x: &DVector<f64>) -> Option<String> {
    let (ng, ni) = (red.n_g, red.n_i);
    let delta: Vec<f64> = x.rows(0, ng).iter().chain(x.rows(2 * ng, ni).iter()).copied().collect();
    let n = delta.len();
    for k in 0..n {
        if red.reference_tie(k) > 1e-12 && delta[k].abs() >= FRAC_PI_2 {
            return Some(format!("{}–ref", red.labels[k]));
        }
        for j in (k + 1)..n {
            if red.coupling(k, j) > 1e-12 && (delta[k] - delta[j]).abs() >= FRAC_PI_2 {
                return Some(format!("{}–{}", red.labels[k], red.labels[j]));
            }
        }
    }
    None
}

/// Largest modal frequency |λ|/2π of the linearization, Hz.
pub fn max_linear_frequency(model: &GridModel) -> Result<f64> {
    let ev = linalg::eigenvalues(&model.state_matrix()?.a)?;
    Ok(ev.iter().map(|z| z.norm()).fold(0.0, f64::max) / (2.0 * PI))
}

/// Fixed-step RK4 from `x* + offset` over `[0, horizon]`.
pub fn simulate(model: &GridModel, offset: &DVector<f64>, horizon: f64, dt: f64) -> Result<Trajectory> {
    let (ng, ni) = (model.jac.n_g, model.jac.n_i);
    let n = 2 * ng + ni;
    if offset.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "perturbation has {} entries, state has {n}",
            offset.len()
        )));
    }
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::Invalid("horizon and dt must be positive".into()));
    }
    let fmax = max_linear_frequency(model)?;
    if dt > 1.0 / (20.0 * fmax) {
        return Err(Error::Invalid(format!(
            "dt = {dt} s too coarse: the fastest linear mode ({fmax:.2} Hz) needs dt ≤ {:.3e} s",
            1.0 / (20.0 * fmax)
        )));
    }
    let eq = equilibrium(&model.reduced);
    let rhs = Rhs {
        red: &model.reduced,
        m: model.park.inertia(),
        d: model.park.damping(),
        mp: model.park.droop_gain(),
        eq: &eq,
    };
    let mut traj = Trajectory {
        labels: state_labels(&model.park),
        t: Vec::new(),
        x: Vec::new(),
        equilibrium: eq.clone(),
        events: Vec::new(),
        terminated: false,
    };
    let mut x = traj.x_star() + offset;
    let steps = (horizon / dt).round() as usize;
    traj.t.push(0.0);
    traj.x.push(x.clone());
    for k in 1..=steps {
        let k1 = rhs.eval(&x);
        let k2 = rhs.eval(&(&x + &k1 * (dt / 2.0)));
        let k3 = rhs.eval(&(&x + &k2 * (dt / 2.0)));
        let k4 = rhs.eval(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let t = k as f64 * dt;
        traj.t.push(t);
        traj.x.push(x.clone());
        if let Some(branch) = wedge_violation(&model.reduced, &x) {
            traj.events.push(format!("nonlinear regime: {branch} left the ±π/2 wedge at t = {t:.4} s"));
            traj.terminated = true;
            break;
        }
    }
    Ok(traj)
}

/// `exp(A t) x0` at each requested time.
pub fn linear_response(a: &DMatrix<f64>, x0: &DVector<f64>, times: &[f64]) -> Vec<DVector<f64>> {
    times.iter().map(|&t| (a * t).exp() * x0).collect()
}

/// Offset vector from `label=amplitude` pairs.
pub fn perturbation(labels: &[String], entries: &[(String, f64)]) -> Result<DVector<f64>> {
    let mut x = DVector::zeros(labels.len());
    for (label, amp) in entries {
        let idx = labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Invalid(format!("unknown state \"{label}\"; states are {}", labels.join(", "))))?;
        x[idx] += amp;
    }
    Ok(x)
}

/// Real part of a mode shape scaled to 2-norm `eps`.
pub fn mode_perturbation(right: &linalg::CVec, eps: f64) -> DVector<f64> {
    let re = right.map(|z| z.re);
    let n = re.norm();
    if n == 0.0 {
        re
    } else {
        re * (eps / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModeEstimate {
    Oscillatory {
        freq_hz: f64,
        freq_unc_hz: f64,
        damping: f64,
        damping_unc: f64,
        /// Spectral peak over the median spectral magnitude.
        snr: f64,
    },
    NonOscillatory,
}

/// Spectral-peak SNR below which a record counts as non-oscillatory.
pub const SNR_MIN: f64 = 10.0;
const PAD: usize = 8;

fn bandpass_coeffs(f0: f64, fs: f64, q: f64) -> ([f64; 3], [f64; 3]) {
    let w0 = 2.0 * PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    (
        [alpha / a0, 0.0, -alpha / a0],
        [1.0, -2.0 * w0.cos() / a0, (1.0 - alpha) / a0],
    )
}

fn biquad(b: &[f64; 3], a: &[f64; 3], x: &[f64]) -> Vec<f64> {
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&xn| {
            let y = b[0] * xn + b[1] * x1 + b[2] * x2 - a[1] * y1 - a[2] * y2;
            x2 = x1;
            x1 = xn;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Zero-phase band-pass: forward then backward pass over an odd-reflected
/// extension of two periods at each end, which suppresses edge transients.
pub fn filtfilt_bandpass(x: &[f64], f0: f64, fs: f64, q: f64) -> Vec<f64> {
    let n = x.len();
    let pad = ((2.0 * fs / f0).round() as usize).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));
    let (b, a) = bandpass_coeffs(f0, fs, q);
    let mut y = biquad(&b, &a, &ext);
    y.reverse();
    let mut y = biquad(&b, &a, &y);
    y.reverse();
    y[pad..pad + n].to_vec()
}

fn spectral_peak(x: &[f64], fs: f64) -> Option<(f64, f64, f64)> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let nfft = (n * PAD).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let mag: Vec<f64> = buf[..nfft / 2].iter().map(|c| c.norm()).collect();
    let (k, &peak) = mag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if peak == 0.0 {
        return None;
    }
    let mut sorted = mag.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let snr = if median > 0.0 { peak / median } else { f64::INFINITY };
    let df = fs / nfft as f64;
    let mut kf = k as f64;
    if k > 0 && k + 1 < mag.len() {
        let (l, c, r) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
        let den = l - 2.0 * c + r;
        if den != 0.0 {
            kf += 0.5 * (l - r) / den;
        }
    }
    Some((kf * df, df, snr))
}

/// Frequency and damping of the dominant oscillation in a uniformly sampled record.
pub fn estimate_signal(x: &[f64], dt: f64) -> ModeEstimate {
    if x.len() < 16 || !(dt > 0.0) {
        return ModeEstimate::NonOscillatory;
    }
    let fs = 1.0 / dt;
    let record = dt * (x.len() - 1) as f64;
    let Some((f, df, snr)) = spectral_peak(x, fs) else {
        return ModeEstimate::NonOscillatory;
    };
    if snr < SNR_MIN || f < 1.5 / record {
        return ModeEstimate::NonOscillatory;
    }
    let y = filtfilt_bandpass(x, f, fs, 1.0);
    let mut ext: Vec<(f64, f64)> = Vec::new();
    for k in 1..y.len() - 1 {
        let (a, b, c) = (y[k - 1].abs(), y[k].abs(), y[k + 1].abs());
        if b > a && b >= c && y[k - 1].signum() == y[k].signum() && y[k + 1].signum() == y[k].signum() {
            ext.push((k as f64 * dt, b.ln()));
        }
    }
    // drop extrema within one period of either edge (filter transients)
    let period = 1.0 / f;
    let ext: Vec<(f64, f64)> = ext
        .into_iter()
        .filter(|p| p.0 > period && p.0 < record - period)
        .collect();
    if ext.len() < 3 {
        return ModeEstimate::NonOscillatory;
    }
    let n = ext.len() as f64;
    let mt = ext.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = ext.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = ext.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = ext.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum::<f64>() / stt;
    let resid: f64 = ext
        .iter()
        .map(|p| (p.1 - ml - slope * (p.0 - mt)).powi(2))
        .sum::<f64>();
    let slope_se = if ext.len() > 2 {
        (resid / (n - 2.0) / stt).sqrt()
    } else {
        f64::NAN
    };
    let sigma = -slope;
    let wd = 2.0 * PI * f;
    let zeta = sigma / (sigma * sigma + wd * wd).sqrt();
    let dzeta = wd * wd / (sigma * sigma + wd * wd).powf(1.5);
    ModeEstimate::Oscillatory {
        freq_hz: f,
        freq_unc_hz: df / 2.0,
        damping: zeta,
        damping_unc: dzeta * slope_se,
        snr,
    }
}

/// Mode estimate on one state channel, decimated to about 100 Hz.
pub fn estimate_mode(traj: &Trajectory, channel: usize) -> ModeEstimate {
    let dt = traj.dt();
    let stride = ((0.01 / dt).floor() as usize).max(1);
    let x: Vec<f64> = traj.channel(channel).into_iter().step_by(stride).collect();
    estimate_signal(&x, dt * stride as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(f: impl Fn(f64) -> f64, fs: f64, secs: f64) -> Vec<f64> {
        (0..=(secs * fs) as usize).map(|k| f(k as f64 / fs)).collect()
    }

    #[test]
    fn damped_sinusoid() {
        let x = sampled(|t| (-0.3 * t).exp() * (4.0 * t).sin(), 100.0, 30.0);
        match estimate_signal(&x, 0.01) {
            ModeEstimate::Oscillatory { freq_hz, damping, .. } => {
                assert!((freq_hz - std::f64::consts::FRAC_2_PI).abs() < 0.01, "{freq_hz}");
                assert!((damping - 0.0748).abs() < 0.005, "{damping}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn amplitude_invariant() {
        let x = sampled(|t| (-0.2 * t).exp() * (3.0 * t).cos(), 100.0, 30.0);
        let a = estimate_signal(&x, 0.01);
        let y: Vec<f64> = x.iter().map(|v| v * 1234.5).collect();
        let b = estimate_signal(&y, 0.01);
        match (a, b) {
            (
                ModeEstimate::Oscillatory { freq_hz: f1, damping: z1, .. },
                ModeEstimate::Oscillatory { freq_hz: f2, damping: z2, .. },
            ) => {
                assert!((f1 - f2).abs() < 1e-12 && (z1 - z2).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pure_decay_is_non_oscillatory() {
        let x = sampled(|t| (-t).exp(), 100.0, 30.0);
        assert_eq!(estimate_signal(&x, 0.01), ModeEstimate::NonOscillatory);
    }

    #[test]
    fn perturbation_labels() {
        let labels: Vec<String> = ["dg_G1", "w_G1", "di_I1"].iter().map(|s| s.to_string()).collect();
        let x = perturbation(&labels, &[("w_G1".into(), 0.01)]).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 0.01, 0.0]);
        assert!(perturbation(&labels, &[("nope".into(), 1.0)]).is_err());
    }
}

//! Parameter sweeps with eigenvector-overlap mode tracking and detection of
//! damping-trend reversals.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::modal::{eigen_modes, ModalConfig, Mode, ModeClass};
use crate::model::GridModel;
use crate::sensitivity::{C64Ser, TRACK_OVERLAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Droop setting m̂_p (fraction).
    Droop,
    /// Total inverter capacity as a fraction of total load.
    Size,
    /// Multiplier on every generator inertia.
    Inertia,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Droop => "droop",
            SweepParam::Size => "size",
            SweepParam::Inertia => "inertia",
        }
    }

    /// Grid spacing used when none is requested: geometric for droop.
    pub fn default_log(self) -> bool {
        matches!(self, SweepParam::Droop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocusPoint {
    pub param_value: f64,
    pub lambda: C64Ser,
    pub freq_hz: f64,
    pub damping: f64,
    /// Overlap with the previous point of the locus (1 at the first point).
    pub overlap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Locus {
    pub mode_id: String,
    /// Inter-area tag frozen at the first sweep point.
    pub inter_area: bool,
    /// Index into the sweep axis of the first point.
    pub start: usize,
    pub points: Vec<LocusPoint>,
}

impl Locus {
    pub fn damping(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.damping).collect()
    }

    pub fn params(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.param_value).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub log_grid: bool,
    pub loci: Vec<Locus>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn inter_area(&self) -> impl Iterator<Item = &Locus> {
        self.loci.iter().filter(|l| l.inter_area)
    }
}

/// `points` values from `from` to `to`, endpoints exact.
pub fn grid(from: f64, to: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(Error::Invalid("sweep needs at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    if log && !(from > 0.0 && to > 0.0) {
        return Err(Error::Invalid("geometric grid needs positive endpoints".into()));
    }
    let n = (points - 1) as f64;
    Ok((0..points)
        .map(|k| {
            if k == 0 {
                from
            } else if k == points - 1 {
                to
            } else {
                let t = k as f64 / n;
                if log {
                    (from.ln() + t * (to.ln() - from.ln())).exp()
                } else {
                    from + t * (to - from)
                }
            }
        })
        .collect())
}

fn check_axis(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("sweep axis has non-finite values".into()));
    }
    let inc = values.windows(2).all(|w| w[1] > w[0]);
    let dec = values.windows(2).all(|w| w[1] < w[0]);
    if !(inc || dec) {
        return Err(Error::Invalid("sweep axis must be strictly monotone".into()));
    }
    Ok(())
}

pub fn variant(model: &GridModel, param: SweepParam, value: f64) -> Result<GridModel> {
    match param {
        SweepParam::Droop => model.with_droop_setting(value),
        SweepParam::Size => model.with_total_capacity(value * model.total_load_mva()),
        SweepParam::Inertia => Ok(model.with_park(model.park.with_inertia_scale(value)?)),
    }
}

fn tracked(m: &Mode) -> bool {
    m.is_oscillatory() && m.class != ModeClass::Inverter
}

pub fn sweep(
    model: &GridModel,
    param: SweepParam,
    values: &[f64],
    log_grid: bool,
    cfg: &ModalConfig,
) -> Result<SweepResult> {
    check_axis(values)?;
    let snapshots: Vec<Vec<Mode>> = values
        .par_iter()
        .map(|&v| {
            let sm = variant(model, param, v)?.state_matrix()?;
            eigen_modes(&sm, cfg)
        })
        .collect::<Result<_>>()?;

    let mut loci: Vec<Locus> = Vec::new();
    let mut warnings = Vec::new();
    // open locus index → (right eigenvector, λ) at its latest point
    let mut open: Vec<(usize, crate::linalg::CVec, C64)> = Vec::new();
    for m in snapshots[0].iter().filter(|m| tracked(m)) {
        open.push((loci.len(), m.right.clone(), m.lambda));
        loci.push(Locus {
            mode_id: m.id.clone(),
            inter_area: m.class == ModeClass::InterArea,
            start: 0,
            points: vec![point(values[0], m, 1.0)],
        });
    }
    for (k, snap) in snapshots.iter().enumerate().skip(1) {
        let cands: Vec<&Mode> = snap.iter().filter(|m| m.is_oscillatory()).collect();
        // all (locus, candidate) pairs, best overlap first, nearest λ on ties
        let mut pairs: Vec<(usize, usize, f64, f64)> = Vec::new();
        for (oi, (_, u, l)) in open.iter().enumerate() {
            for (ci, c) in cands.iter().enumerate() {
                pairs.push((oi, ci, linalg::overlap(u, &c.right), (c.lambda - l).norm()));
            }
        }
        pairs.sort_by(|a, b| {
            let ord = b.2.total_cmp(&a.2);
            if (a.2 - b.2).abs() < 1e-9 {
                a.3.total_cmp(&b.3)
            } else {
                ord
            }
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
        });
        let mut locus_done = vec![false; open.len()];
        let mut cand_used = vec![false; cands.len()];
        let mut assignment: Vec<Option<(usize, f64)>> = vec![None; open.len()];
        for (oi, ci, ov, _) in pairs {
            if locus_done[oi] || cand_used[ci] {
                continue;
            }
            locus_done[oi] = true;
            cand_used[ci] = true;
            assignment[oi] = Some((ci, ov));
        }
        let mut next_open = Vec::with_capacity(open.len());
        for (oi, (li, _, _)) in open.iter().enumerate() {
            match assignment[oi] {
                Some((ci, ov)) if ov >= TRACK_OVERLAP => {
                    let c = cands[ci];
                    loci[*li].points.push(point(values[k], c, ov));
                    next_open.push((*li, c.right.clone(), c.lambda));
                }
                other => {
                    let ov = other.map(|(_, o)| o).unwrap_or(0.0);
                    let id = loci[*li].mode_id.clone();
                    warnings.push(format!(
                        "tracking of {id} broke at {}={} (overlap {ov:.3}); locus split",
                        param.as_str(),
                        values[k]
                    ));
                    if let Some((ci, _)) = other {
                        let c = cands[ci];
                        let parts = loci.iter().filter(|l| l.mode_id.starts_with(&id)).count();
                        let new_id = format!("{id}.{}", parts + 1);
                        let inter_area = loci[*li].inter_area;
                        next_open.push((loci.len(), c.right.clone(), c.lambda));
                        loci.push(Locus {
                            mode_id: new_id,
                            inter_area,
                            start: k,
                            points: vec![point(values[k], c, 1.0)],
                        });
                    }
                }
            }
        }
        open = next_open;
    }
    Ok(SweepResult {
        param,
        values: values.to_vec(),
        log_grid,
        loci,
        warnings,
    })
}

fn point(param_value: f64, m: &Mode, overlap: f64) -> LocusPoint {
    LocusPoint {
        param_value,
        lambda: C64Ser(m.lambda),
        freq_hz: m.freq_hz,
        damping: m.damping,
        overlap,
    }
}

pub fn sweep_droop(model: &GridModel, settings: &[f64], cfg: &ModalConfig) -> Result<SweepResult> {
    sweep(model, SweepParam::Droop, settings, true, cfg)
}

/// Capacity sweep at the model's droop setting; values are fractions of total load.
pub fn sweep_size(model: &GridModel, fractions: &[f64], cfg: &ModalConfig) -> Result<SweepResult> {
    sweep(model, SweepParam::Size, fractions, false, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reversal {
    pub mode_id: String,
    pub inter_area: bool,
    /// "interior", "no interior reversal" or "too few points".
    pub kind: &'static str,
    pub critical: Option<f64>,
    pub max_damping_pct: f64,
}

/// Vertex abscissa of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let (a, b) = (x[1] - x[0], x[1] - x[2]);
    let (fa, fb) = (y[1] - y[2], y[1] - y[0]);
    let den = a * fa - b * fb;
    if den == 0.0 {
        return x[1];
    }
    x[1] - 0.5 * (a * a * fa - b * b * fb) / den
}

pub fn reversal_of(locus: &Locus, log_grid: bool) -> Reversal {
    let z = locus.damping();
    let p = locus.params();
    let (imax, &zmax) = z
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &f64::NAN));
    let base = Reversal {
        mode_id: locus.mode_id.clone(),
        inter_area: locus.inter_area,
        kind: "no interior reversal",
        critical: None,
        max_damping_pct: 100.0 * zmax,
    };
    if z.len() < 5 {
        return Reversal {
            kind: "too few points",
            ..base
        };
    }
    if imax == 0 || imax == z.len() - 1 {
        return base;
    }
    let tx = |v: f64| if log_grid { v.ln() } else { v };
    let xs = [tx(p[imax - 1]), tx(p[imax]), tx(p[imax + 1])];
    let ys = [z[imax - 1], z[imax], z[imax + 1]];
    let v = parabola_vertex(xs, ys);
    let lo = xs[0].min(xs[2]);
    let hi = xs[0].max(xs[2]);
    let v = v.clamp(lo, hi);
    Reversal {
        kind: "interior",
        critical: Some(if log_grid { v.exp() } else { v }),
        ..base
    }
}

pub fn detect_reversal(sr: &SweepResult) -> Vec<Reversal> {
    sr.loci.iter().map(|l| reversal_of(l, sr.log_grid)).collect()
}

pub fn locus_csv(sr: &SweepResult) -> String {
    let mut out = String::from("param_name,param_value,mode_id,re,im,freq_hz,damping_pct\n");
    for l in &sr.loci {
        for p in &l.points {
            let _ = writeln!(
                out,
                "{},{:.12e},{},{:.12e},{:.12e},{:.9},{:.9}",
                sr.param.as_str(),
                p.param_value,
                l.mode_id,
                p.lambda.0.re,
                p.lambda.0.im,
                p.freq_hz,
                100.0 * p.damping
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(values: &[f64], f: impl Fn(f64) -> f64) -> Locus {
        Locus {
            mode_id: "M1".into(),
            inter_area: true,
            start: 0,
            points: values
                .iter()
                .map(|&p| LocusPoint {
                    param_value: p,
                    lambda: C64Ser(crate::linalg::c64(-0.1, 1.0)),
                    freq_hz: 0.5,
                    damping: f(p),
                    overlap: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn parabola_peak_recovered() {
        let g = grid(0.0, 1.0, 11, false).unwrap();
        let r = reversal_of(&synthetic(&g, |p| 1.0 - (p - 0.3).powi(2)), false);
        assert_eq!(r.kind, "interior");
        assert!((r.critical.unwrap() - 0.3).abs() <= 0.05);
        let g = grid(0.0, 1.0, 13, false).unwrap();
        let r = reversal_of(&synthetic(&g, |p| 1.0 - (p - 0.3).powi(2)), false);
        assert!((r.critical.unwrap() - 0.3).abs() <= 0.5 / 12.0);
    }

    #[test]
    fn monotone_has_no_reversal() {
        let g = grid(0.1, 0.02, 9, true).unwrap();
        let r = reversal_of(&synthetic(&g, |p| 1.0 / p), true);
        assert_eq!(r.kind, "no interior reversal");
        assert!(r.critical.is_none());
    }

    #[test]
    fn short_locus() {
        let r = reversal_of(&synthetic(&[0.1, 0.2, 0.3], |p| p), false);
        assert_eq!(r.kind, "too few points");
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = grid(0.10, 0.02, 9, true).unwrap();
        assert_eq!((g[0], g[8]), (0.10, 0.02));
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        let ratio = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
        assert_eq!(grid(0.5, 0.7, 1, false).unwrap(), vec![0.5]);
        assert!(grid(0.0, 1.0, 3, true).is_err());
    }

    #[test]
    fn axis_must_be_monotone() {
        assert!(check_axis(&[0.1, 0.3, 0.2]).is_err());
        assert!(check_axis(&[0.3, 0.2, 0.1]).is_ok());
    }
}

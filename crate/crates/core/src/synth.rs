//! Seeded random case generators for property suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{Branch, Bus, GfmUnit, InternalState, NetworkCase, OperatingPoint, SgUnit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Meshed networks, moderate shunts, realistic damping.
    General,
    /// Stiff inverter terminals and near-zero generator damping, the regime
    /// where the droop lower-bound preconditions can hold.
    LowDamping { uniform_sgs: bool },
}

const OMEGA0: f64 = 2.0 * std::f64::consts::PI * 60.0;

/// Random case with `n_g ∈ [2, 6]`, `n_i ∈ [max(3, n_g+1), 12]`.
pub fn random_case(rng: &mut ChaCha8Rng, family: Family) -> NetworkCase {
    let ng = rng.random_range(2..=6usize);
    let ni = rng.random_range((ng + 1).max(3)..=12usize);
    let nb = ng + ni + rng.random_range(1..=3usize);
    let bus_id = |k: usize| format!("b{}", k + 1);

    let mut shunt: Vec<f64> = (0..nb).map(|_| rng.random_range(0.3..1.5)).collect();
    if let Family::LowDamping { .. } = family {
        for s in shunt.iter_mut().skip(ng).take(ni) {
            *s = rng.random_range(20.0..40.0);
        }
    }
    let buses = shunt
        .iter()
        .enumerate()
        .map(|(k, &s)| Bus {
            id: bus_id(k),
            vm: 1.0,
            va: 0.0,
            shunt: s,
        })
        .collect();

    let mut branches = Vec::new();
    for i in 1..nb {
        let j = rng.random_range(0..i);
        branches.push((i, j, rng.random_range(2.0..8.0)));
    }
    for _ in 0..rng.random_range(0..nb) {
        let a = rng.random_range(0..nb);
        let mut b = rng.random_range(0..nb - 1);
        if b >= a {
            b += 1;
        }
        branches.push((a, b, rng.random_range(0.5..4.0)));
    }
    let branches = branches
        .into_iter()
        .enumerate()
        .map(|(k, (a, b, s))| Branch {
            id: format!("l{}", k + 1),
            from: bus_id(a),
            to: bus_id(b),
            b: s,
        })
        .collect();

    let (m_common, d_common) = (rng.random_range(0.2..0.6), 10f64.powf(rng.random_range(-6.0..-4.0)));
    let sgs = (0..ng)
        .map(|k| {
            let (m, d) = match family {
                Family::General => (rng.random_range(0.2..0.6), rng.random_range(0.005..0.05)),
                Family::LowDamping { uniform_sgs: true } => (m_common, d_common),
                Family::LowDamping { uniform_sgs: false } => {
                    (rng.random_range(0.2..0.6), 10f64.powf(rng.random_range(-6.0..-4.0)))
                }
            };
            SgUnit {
                id: format!("G{}", k + 1),
                bus: bus_id(k),
                xd: rng.random_range(0.15..0.35),
                m,
                d,
            }
        })
        .collect::<Vec<_>>();
    let gain = match family {
        Family::General => rng.random_range(10.0..60.0),
        Family::LowDamping { .. } => rng.random_range(0.5..60.0),
    };
    let gfms = (0..ni)
        .map(|j| GfmUnit {
            id: format!("I{}", j + 1),
            bus: bus_id(ng + j),
            x: rng.random_range(0.3..0.8),
            s_mva: 100.0,
            mp_setting: gain / OMEGA0,
            mq_setting: 0.05,
            tau: 0.02,
        })
        .collect::<Vec<_>>();
    let internal = sgs
        .iter()
        .map(|s| s.id.clone())
        .chain(gfms.iter().map(|g| g.id.clone()))
        .map(|device| InternalState {
            device,
            e: rng.random_range(1.0..1.08),
            delta: rng.random_range(-0.15..0.15),
        })
        .collect();
    NetworkCase {
        name: "random".into(),
        base_mva: 100.0,
        omega0: OMEGA0,
        buses,
        branches,
        sgs,
        gfms,
        loads: Vec::new(),
        operating_point: OperatingPoint {
            v_ref: 1.0,
            internal,
        },
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

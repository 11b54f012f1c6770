//! Closed-loop simulation on the extended state.

use std::io::{self, Write};

use rand::Rng;

use crate::backstepping::{vbar_unchecked, BacksteppingCertificate};
use crate::error::{arg_err, Result};
use crate::model::{ExtendedState, LinearPlant, NominalStabilizer};
use crate::redesign::RedesignSetup;
use crate::sampling::rng_from_seed;

/// How `d(t)` is chosen; magnitudes are bounded by the plant's `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisturbanceStrategy {
    Zero,
    Constant(f64),
    UniformRandom { seed: u64 },
    /// One-step maximizer of the next Lyapunov value.
    GreedyAdversary,
}

/// What the simulator can evaluate besides the plant: `Vbar` for the record and the greedy
/// adversary, and the redesign coefficients for the exact adversary.
#[derive(Debug, Clone, Copy, Default)]
pub struct Monitor<'a> {
    lyapunov: Option<(&'a NominalStabilizer, &'a BacksteppingCertificate)>,
    setup: Option<&'a RedesignSetup>,
}

impl<'a> Monitor<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn lyapunov(stab: &'a NominalStabilizer, cert: &'a BacksteppingCertificate) -> Self {
        Self { lyapunov: Some((stab, cert)), setup: None }
    }

    pub fn redesign(setup: &'a RedesignSetup) -> Self {
        Self { lyapunov: Some((setup.stabilizer(), setup.certificate())), setup: Some(setup) }
    }

    fn vbar(&self, plant: &LinearPlant, z: &ExtendedState) -> Option<f64> {
        self.lyapunov.map(|(stab, cert)| vbar_unchecked(plant, stab, cert, z))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Input issued at `t`.
    pub u: f64,
    /// Disturbance acting between `t` and `t + 1`.
    pub d: f64,
    pub vbar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T + 1` records for `T` steps; the last one carries the input and disturbance that
    /// would be applied next.
    pub records: Vec<StepRecord>,
    /// A non-finite value was produced; the trajectory stops at the last finite state.
    pub diverged: bool,
}

/// Runs `steps` steps of the closed loop `z(t+1) = step(z(t), policy(z(t)), d(t))`.
pub fn simulate<F>(
    plant: &LinearPlant,
    policy: F,
    strategy: DisturbanceStrategy,
    z0: &ExtendedState,
    steps: usize,
    monitor: Monitor<'_>,
) -> Result<Trajectory>
where
    F: Fn(&ExtendedState) -> f64,
{
    if steps == 0 {
        return arg_err("simulation needs at least one step");
    }
    if z0.x.len() != plant.dim() || z0.y.len() != plant.delay() {
        return arg_err("initial state does not match plant dimensions");
    }
    let a = plant.bound();
    if let DisturbanceStrategy::Constant(v) = strategy {
        if !(v.abs() <= a) {
            return arg_err(format!("constant disturbance {v} outside [-{a}, {a}]"));
        }
    }
    let mut rng = match strategy {
        DisturbanceStrategy::UniformRandom { seed } => Some(rng_from_seed(seed)),
        _ => None,
    };
    let mut records = Vec::with_capacity(steps + 1);
    let mut z = z0.clone();
    let mut diverged = false;
    for t in 0..=steps {
        let u = policy(&z);
        let d = match strategy {
            DisturbanceStrategy::Zero => 0.0,
            DisturbanceStrategy::Constant(v) => v,
            DisturbanceStrategy::UniformRandom { .. } => {
                let rng = rng.as_mut().expect("seeded above");
                if a > 0.0 {
                    rng.random_range(-a..=a)
                } else {
                    0.0
                }
            }
            DisturbanceStrategy::GreedyAdversary => greedy(plant, &monitor, &z, u, a),
        };
        records.push(StepRecord {
            t,
            x: z.x.iter().copied().collect(),
            y: z.y.clone(),
            u,
            d,
            vbar: monitor.vbar(plant, &z),
        });
        if t == steps {
            break;
        }
        if !u.is_finite() {
            diverged = true;
            break;
        }
        let next = plant.step_extended_unchecked(&z, u, d);
        if !next.is_finite() {
            diverged = true;
            break;
        }
        z = next;
    }
    Ok(Trajectory { records, diverged })
}

fn greedy(plant: &LinearPlant, monitor: &Monitor<'_>, z: &ExtendedState, u: f64, a: f64) -> f64 {
    if let Some(setup) = monitor.setup {
        return setup.greedy_disturbance(z, u, a);
    }
    let score = |d: f64| {
        let next = plant.step_extended_unchecked(z, u, d);
        monitor.vbar(plant, &next).unwrap_or_else(|| next.norm().powi(2))
    };
    let mut best = (a, score(a));
    for d in [0.0, -a] {
        let s = score(d);
        if s > best.1 {
            best = (d, s);
        }
    }
    best.0
}

/// `max_t vbar(t+1)/vbar(t)` over steps with `vbar(t) >= 1e-300`; 0 when every such step is
/// skipped.
pub fn decay_rate(traj: &Trajectory) -> Result<f64> {
    let mut vals = Vec::with_capacity(traj.records.len());
    for r in &traj.records {
        match r.vbar {
            Some(v) => vals.push(v),
            None => return arg_err("trajectory has no vbar column"),
        }
    }
    Ok(vals
        .windows(2)
        .filter(|w| w[0] >= 1e-300)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max))
}

/// Checks on a 1001-point grid of `d` in `[-a, a]` that the largest next-step value is attained
/// at an endpoint.
pub fn adversary_endpoint_check(setup: &RedesignSetup, z: &ExtendedState, u: f64) -> bool {
    let plant = setup.plant();
    let a = plant.bound();
    if a == 0.0 {
        return true;
    }
    const N: usize = 1001;
    let vals: Vec<f64> = (0..N)
        .map(|i| {
            let d = -a + 2.0 * a * i as f64 / (N - 1) as f64;
            setup.vbar(&plant.step_extended_unchecked(z, u, d))
        })
        .collect();
    let endpoint = vals[0].max(vals[N - 1]);
    let interior = vals[1..N - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    interior <= endpoint + 1e-12 * endpoint.abs().max(1e-300)
}

impl Trajectory {
    /// CSV with header `t,x_1..x_n,y_1..y_r,u,d,vbar`; floats in `{:.16e}`, empty `vbar` when
    /// no certificate was attached.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (n, r) = self.records.first().map(|s| (s.x.len(), s.y.len())).unwrap_or((0, 0));
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=r).map(|i| format!("y_{i}")));
        header.extend(["u", "d", "vbar"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.records {
            let mut line = s.t.to_string();
            for v in s.x.iter().chain(&s.y).chain([&s.u, &s.d]) {
                line.push_str(&format!(",{v:.16e}"));
            }
            line.push(',');
            if let Some(v) = s.vbar {
                line.push_str(&format!("{v:.16e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

//! Robustness of the nominal predictor feedback for the scalar integrator
//! `x(t+1) = x + d x + u(t-r)`, `u = -(x + y_1 + .. + y_r)`.
//!
//! Uncertainties `|d| < necessary_bound(r)` are necessary for stability (a constant
//! disturbance `1/(r+1)` admits a nonzero equilibrium), and `|d| < sufficient_bound(r)` is
//! sufficient by a backstepping Lyapunov argument.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::backstepping::{nominal_predictor_feedback, BacksteppingCertificate};
use crate::error::{arg_err, Error, Result};
use crate::model::{ExtendedState, ScalarExamplePlant};
use crate::optimize::golden_section_max;
use crate::sampling::{rng_from_seed, split_seed, DEFAULT_SEED};
use crate::simulation::{simulate, DisturbanceStrategy, Monitor};

/// Delays listed in the robustness table.
pub const TABLE_DELAYS: [usize; 13] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessBound {
    pub r: usize,
    pub necessary: f64,
    pub sufficient: f64,
    /// Optimal `c` for `r >= 2`.
    pub c_star: Option<f64>,
    /// Optimal `s = c(1 + phi) - 1`.
    pub s_star: Option<f64>,
}

pub fn necessary_bound(r: usize) -> f64 {
    1.0 / (r as f64 + 1.0)
}

/// `(c^{r+1} - c^r + c^{r-1} - c) / (c - 1)^2`.
fn growth(c: f64, r: usize) -> f64 {
    let ri = r as i32;
    (c.powi(ri + 1) - c.powi(ri) + c.powi(ri - 1) - c) / (c - 1.0).powi(2)
}

/// Optimal `s` for given `c`: `(c - 1)/sqrt(c^{r+1} - c^r + c^{r-1} - c)`.
pub fn optimal_s(c: f64, r: usize) -> f64 {
    1.0 / growth(c, r).sqrt()
}

/// Right side of the sufficient condition `a^2 < s / (1 + s(1 + K) + s^2 K)`.
pub fn sufficient_objective(c: f64, s: f64, r: usize) -> f64 {
    let k = growth(c, r);
    s / (1.0 + s * (1.0 + k) + s * s * k)
}

/// Objective maximized over `c` for `r >= 2`, with `s` at its optimum.
pub fn reduced_objective(c: f64, r: usize) -> f64 {
    sufficient_objective(c, optimal_s(c, r), r)
}

pub const C_LO: f64 = 1.0 + 1e-6;
pub const C_HI: f64 = 64.0;

/// Lower estimate of the robustness margin from the Lyapunov argument.
pub fn sufficient_bound(r: usize) -> Result<RobustnessBound> {
    let necessary = necessary_bound(r);
    match r {
        0 => Ok(RobustnessBound { r, necessary, sufficient: 1.0, c_star: None, s_star: None }),
        1 => {
            // a^2 < (q - 1)/q^2 with q = c(1 + phi), maximal at q = 2.
            let (q, v) = golden_section_max(|q| (q - 1.0) / (q * q), 1.0, C_HI, 1e-10)?;
            Ok(RobustnessBound { r, necessary, sufficient: v.sqrt(), c_star: None, s_star: Some(q - 1.0) })
        }
        _ => {
            // Coarse log grid in c - 1 to bracket the peak, then golden section.
            const COARSE: usize = 400;
            let (lo, hi) = ((C_LO - 1.0).ln(), (C_HI - 1.0).ln());
            let cs: Vec<f64> =
                (0..COARSE).map(|i| 1.0 + (lo + (hi - lo) * i as f64 / (COARSE - 1) as f64).exp()).collect();
            let vals: Vec<f64> = cs.iter().map(|&c| reduced_objective(c, r)).collect();
            let best = vals
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .max_by(|x, y| x.1.total_cmp(y.1))
                .map(|(i, _)| i)
                .ok_or_else(|| Error::Numerical(format!("r = {r}: objective is not finite on the c grid")))?;
            let a = cs[best.saturating_sub(1)];
            let b = cs[(best + 1).min(COARSE - 1)];
            let (c, v) = golden_section_max(|c| reduced_objective(c, r), a, b, 1e-10).map_err(|e| {
                Error::Numerical(format!("r = {r}: bracket [{a}, {b}] around grid peak {}: {e}", cs[best]))
            })?;
            if !(v > 0.0) {
                return Err(Error::Numerical(format!("r = {r}: nonpositive optimum {v} at c = {c}")));
            }
            Ok(RobustnessBound { r, necessary, sufficient: v.sqrt(), c_star: Some(c), s_star: Some(optimal_s(c, r)) })
        }
    }
}

/// Rows for `r` in [`TABLE_DELAYS`].
pub fn table1() -> Result<Vec<RobustnessBound>> {
    TABLE_DELAYS.par_iter().map(|&r| sufficient_bound(r)).collect()
}

/// Runs the nominal loop with `d` constant and `y_i(0) = -x0/(r+1)` and returns `max_t |x(t) - x0|`.
///
/// At `d = 1/(r+1)` the state stays at `x0`.
pub fn constant_solution_check(r: usize, x0: f64, steps: usize) -> Result<f64> {
    constant_solution_deviation(r, x0, steps, necessary_bound(r))
}

/// As [`constant_solution_check`] with an arbitrary constant disturbance.
pub fn constant_solution_deviation(r: usize, x0: f64, steps: usize, d: f64) -> Result<f64> {
    if r == 0 || x0 == 0.0 || !x0.is_finite() || steps == 0 {
        return arg_err("constant solution check needs r >= 1, finite x0 != 0 and at least one step");
    }
    let ex = ScalarExamplePlant::deadbeat(d.abs(), r)?;
    let (plant, stab) = (ex.plant(), ex.stabilizer());
    let z0 = ExtendedState::new(DVector::from_element(1, x0), vec![-x0 / (r as f64 + 1.0); r]);
    let traj = simulate(
        &plant,
        |z| nominal_predictor_feedback(&plant, &stab, z),
        DisturbanceStrategy::Constant(d),
        &z0,
        steps,
        Monitor::none(),
    )?;
    Ok(traj.records.iter().map(|s| (s.x[0] - x0).abs()).fold(0.0, f64::max))
}

/// Heuristic Monte Carlo check: `trials` closed loops of 200 steps with random, constant `±a`
/// and greedy disturbances from random initial states; true iff every `Vbar` ends below
/// `1e-6` of its initial value. Simulation never certifies; use the bounds for that.
pub fn empirical_margin(r: usize, a: f64, trials: usize) -> Result<bool> {
    if !(a >= 0.0 && a.is_finite()) {
        return arg_err(format!("a must be finite and >= 0, got {a}"));
    }
    const HORIZON: usize = 200;
    let ex = ScalarExamplePlant::deadbeat(a, r)?;
    let (plant, stab) = (ex.plant(), ex.stabilizer());
    let cert = BacksteppingCertificate::new(2.0, 1.0, 0.5, 0.0)?;
    let results: Vec<Result<bool>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = split_seed(DEFAULT_SEED, i as u64);
            let mut rng = rng_from_seed(seed);
            let w: Vec<f64> = (0..=r).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let z0 = ExtendedState::from_flat(&w, 1);
            let strategy = match i % 4 {
                0 => DisturbanceStrategy::UniformRandom { seed },
                1 => DisturbanceStrategy::Constant(a),
                2 => DisturbanceStrategy::Constant(-a),
                _ => DisturbanceStrategy::GreedyAdversary,
            };
            let traj = simulate(
                &plant,
                |z| nominal_predictor_feedback(&plant, &stab, z),
                strategy,
                &z0,
                HORIZON,
                Monitor::lyapunov(&stab, &cert),
            )?;
            let first = traj.records[0].vbar.unwrap_or(0.0);
            let last = traj.records.last().and_then(|s| s.vbar).unwrap_or(f64::INFINITY);
            Ok(!traj.diverged && traj.records.len() == HORIZON + 1 && last < 1e-6 * first.max(f64::MIN_POSITIVE))
        })
        .collect();
    let mut all = true;
    for res in results {
        all &= res?;
    }
    Ok(all)
}

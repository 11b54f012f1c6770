//! Closed-form redesign for the scalar integrator with one step of delay.
//!
//! With `Vbar(x, y1) = x^2 + q (x + y1)^2`, `q = c(1 + phi)`, the worst case over `|d| <= a`
//! is minimized by a three-piece law, and certification reduces to three inequalities in the
//! angle `theta` of `(x, y1) = (cos theta, sin theta)`.

use rayon::prelude::*;
use serde::Serialize;

use super::certify::{max_certified_a_sweep, CertificationOptions, SweepPoint};
use crate::error::{arg_err, Result};
use crate::model::ScalarExamplePlant;
use crate::optimize::{bisect_last_true, golden_section_max};

/// Piecewise linear minimax law for `x(t+1) = x + dx + u(t-1)`.
pub fn scalar_redesign_feedback(x: f64, y1: f64, a: f64, q: f64) -> f64 {
    let zeta = a / q;
    let s = x * x + x * y1;
    if s >= zeta * x * x {
        -(1.0 + zeta) * x - y1
    } else if s <= -zeta * x * x {
        -(1.0 - zeta) * x - y1
    } else {
        -2.0 * x - 2.0 * y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarLaw {
    /// The three-piece redesigned law.
    Redesign,
    /// `u = -x - y1`.
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarCertification {
    pub pass: bool,
    /// Largest `lhs - rhs` over the grid; negative on success.
    pub worst_margin: f64,
    pub worst_theta: f64,
    /// Largest `lhs - rhs` per region (`x^2 + x y1 >= (a/q) x^2`, `<= -(a/q) x^2`, between).
    pub region_worst: [Option<f64>; 3],
}

struct ThetaGrid {
    cos2: Vec<f64>,
    sin2t: Vec<f64>,
}

impl ThetaGrid {
    fn new(n: usize) -> Self {
        let th = |j: usize| std::f64::consts::TAU * j as f64 / n as f64;
        Self {
            cos2: (0..n).map(|j| th(j).cos().powi(2)).collect(),
            sin2t: (0..n).map(|j| (2.0 * th(j)).sin()).collect(),
        }
    }

    fn theta(&self, j: usize) -> f64 {
        std::f64::consts::TAU * j as f64 / self.cos2.len() as f64
    }
}

fn check_args(q: f64, grid_size: usize) -> Result<()> {
    if !(q > 0.0 && q.is_finite()) {
        return arg_err(format!("q must be positive, got {q}"));
    }
    if grid_size < 10_000 {
        return arg_err(format!("theta grid needs at least 10^4 points, got {grid_size}"));
    }
    Ok(())
}

fn scan(grid: &ThetaGrid, a: f64, q: f64, law: ScalarLaw) -> ScalarCertification {
    let zeta = a / q;
    let a2 = a * a;
    let mut worst = [f64::NEG_INFINITY; 3];
    let mut worst_j = [0usize; 3];
    for (j, (&c2, &s2)) in grid.cos2.iter().zip(&grid.sin2t).enumerate() {
        let region = if s2 >= 2.0 * (zeta - 1.0) * c2 {
            0
        } else if s2 <= -2.0 * (zeta + 1.0) * c2 {
            1
        } else {
            2
        };
        let excess = match law {
            ScalarLaw::Redesign => match region {
                0 => (2.0 * a - a2 / q + (1.0 + q) * a2 - 1.0) * c2 + (a + 1.0 - q) * s2 - (q - 1.0),
                1 => ((1.0 + q) * a2 - 2.0 * a - a2 / q - 1.0) * c2 + (1.0 - a - q) * s2 - (q - 1.0),
                _ => ((1.0 + q) * a2 - 1.0) * c2 + 1.0 + s2,
            },
            ScalarLaw::Nominal => {
                // max_d Vbar(next) - Vbar(z) for u = -x - y1 with x^2 = c2, x (x + y1) = c2 + s2/2.
                let w2 = 1.0 + s2; // (x + y1)^2
                let xw = c2 + 0.5 * s2;
                (1.0 - q) * w2 + ((1.0 + q) * a2 - 1.0) * c2 + 2.0 * a * xw.abs()
            }
        };
        if excess > worst[region] {
            worst[region] = excess;
            worst_j[region] = j;
        }
    }
    let (k, &max) = worst
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("three regions");
    ScalarCertification {
        pass: max < 0.0,
        worst_margin: max,
        worst_theta: grid.theta(worst_j[k]),
        region_worst: [0, 1, 2].map(|i| worst[i].is_finite().then_some(worst[i])),
    }
}

/// Checks the three strict angle inequalities of the redesigned law on a uniform grid.
pub fn scalar_certify(a: f64, q: f64, grid_size: usize) -> Result<ScalarCertification> {
    check_args(q, grid_size)?;
    Ok(scan(&ThetaGrid::new(grid_size), a, q, ScalarLaw::Redesign))
}

/// Same harness for the nominal law `u = -x - y1`: `max_d Vbar(next) < Vbar(z)` on the circle.
pub fn scalar_certify_nominal(a: f64, q: f64, grid_size: usize) -> Result<ScalarCertification> {
    check_args(q, grid_size)?;
    Ok(scan(&ThetaGrid::new(grid_size), a, q, ScalarLaw::Nominal))
}

fn max_a_on(grid: &ThetaGrid, law: ScalarLaw, q: f64, a_hi: f64, tol: f64) -> f64 {
    if !scan(grid, 0.0, q, law).pass {
        return 0.0;
    }
    bisect_last_true(|a| scan(grid, a, q, law).pass, 0.0, a_hi, tol).0
}

/// Largest certified `a` in `[0, a_hi]` for fixed `q`, by bisection to `tol`; zero when the
/// inequalities fail already at `a = 0`.
pub fn scalar_max_a(law: ScalarLaw, q: f64, grid_size: usize, a_hi: f64, tol: f64) -> Result<f64> {
    check_args(q, grid_size)?;
    Ok(max_a_on(&ThetaGrid::new(grid_size), law, q, a_hi, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QSearchResult {
    /// Best grid point and its certified `a` (resolution 1e-4).
    pub grid_q: f64,
    pub grid_a: f64,
    /// After golden-section refinement around the grid point (resolution 1e-6 in `a`).
    pub q: f64,
    pub a: f64,
}

/// Scans `q` over `[1, 3]` in steps of 0.01, then refines by golden section.
pub fn scalar_q_search(law: ScalarLaw, grid_size: usize) -> Result<QSearchResult> {
    check_args(1.0, grid_size)?;
    let grid = ThetaGrid::new(grid_size);
    let qs: Vec<f64> = (0..=200).map(|i| 1.0 + 0.01 * i as f64).collect();
    let found: Vec<(f64, f64)> = qs.par_iter().map(|&q| (q, max_a_on(&grid, law, q, 1.0, 1e-4))).collect();
    let (grid_q, grid_a) = found
        .iter()
        .copied()
        .fold((f64::NAN, -1.0), |b, c| if c.1 > b.1 { c } else { b });
    let lo = (grid_q - 0.01).max(1e-3);
    let (q, a) = golden_section_max(|q| max_a_on(&grid, law, q, 1.0, 1e-6), lo, grid_q + 0.01, 1e-5)?;
    let (q, a) = if a >= grid_a { (q, a) } else { (grid_q, max_a_on(&grid, law, grid_q, 1.0, 1e-6)) };
    Ok(QSearchResult { grid_q, grid_a, q, a })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaSweepRow {
    pub beta: f64,
    pub q: f64,
    pub a: f64,
}

/// For each nominal gain `k = -beta`, the largest `a` the general redesign certifies over
/// `c = q` in `q_grid` (with `phi = 0` and automatic `sigma`).
pub fn beta_sweep(betas: &[f64], q_grid: &[f64], opts: &CertificationOptions) -> Result<Vec<BetaSweepRow>> {
    betas
        .iter()
        .map(|&beta| {
            let ex = ScalarExamplePlant::new(0.0, 1, beta)?;
            let grid: Vec<SweepPoint> = q_grid.iter().map(|&q| SweepPoint { c: q, phi: 0.0, sigma: None }).collect();
            let res = max_certified_a_sweep(&ex.plant(), &ex.stabilizer(), &grid, 1.0, opts)?;
            Ok(BetaSweepRow { beta, q: res.best.c, a: res.a })
        })
        .collect()
}

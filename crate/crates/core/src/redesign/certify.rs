//! Sampled certification of the redesigned (or nominal) law on the unit sphere.
//!
//! All left-hand sides are homogeneous of degree two in `z`, so their sign on the unit sphere
//! decides the sign everywhere. The sphere is covered by a Halton set, seeded random points,
//! coordinate axes and pairwise diagonals. Results are certified up to sampling only.

use rayon::prelude::*;
use serde::Serialize;

use super::{classify, Region, RedesignSetup};
use crate::backstepping::{nominal_predictor_feedback, BacksteppingCertificate};
use crate::error::{arg_err, Error, Result};
use crate::model::{ExtendedState, LinearPlant, NominalStabilizer};
use crate::optimize::bisect_last_true;
use crate::sampling::{halton_sphere, random_sphere, structured_directions, DEFAULT_SEED};

/// Worst values must be at most `-MARGIN_FLOOR` to pass.
pub const MARGIN_FLOOR: f64 = 1e-9;

/// `|L|` below this (on the unit sphere) is treated as zero when routing samples.
const L_FLOOR: f64 = 1e-12;

const SIGMA_GRID: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackLaw {
    Redesigned,
    NominalPredictor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaChoice {
    /// Use the certificate's `sigma`.
    Certificate,
    /// Smallest passing value on a 100-point grid in `[lambda + 1/c, 1)`.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationOptions {
    /// Size of the low-discrepancy part of the sample set.
    pub n_samples: usize,
    pub random_samples: usize,
    pub seed: u64,
    pub law: FeedbackLaw,
    pub sigma: SigmaChoice,
    /// Resolution of [`max_certified_a`].
    pub tolerance: f64,
}

impl Default for CertificationOptions {
    fn default() -> Self {
        Self {
            n_samples: 4096,
            random_samples: 10_000,
            seed: DEFAULT_SEED,
            law: FeedbackLaw::Redesigned,
            sigma: SigmaChoice::Certificate,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub a: f64,
    pub sigma: f64,
    pub law: FeedbackLaw,
    /// Worst left-hand side per region; `None` when no sample fell in the region.
    pub region1: Option<f64>,
    pub region2: Option<f64>,
    pub region3: Option<f64>,
    pub region_counts: [usize; 3],
    /// Minus the largest worst value.
    pub margin: f64,
    pub samples: usize,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub largest_certified_a: Option<f64>,
    /// Sphere point attaining each region's worst value, flattened `(x, y_1, .., y_r)`.
    pub argmax: [Option<Vec<f64>>; 3],
    pub note: &'static str,
}

impl CertificationReport {
    pub fn worst(&self) -> f64 {
        -self.margin
    }
}

/// Unit-sphere samples in extended-state coordinates.
pub(crate) fn sphere_samples(n: usize, r: usize, opts: &CertificationOptions) -> Vec<ExtendedState> {
    let dim = n + r;
    halton_sphere(dim, opts.n_samples)
        .into_iter()
        .chain(random_sphere(dim, opts.random_samples, opts.seed))
        .chain(structured_directions(dim))
        .map(|w| ExtendedState::from_flat(&w, n))
        .collect()
}

struct Evaluated {
    region: Region,
    /// Left-hand side at `sigma = 0`.
    lhs0: f64,
    vbar: f64,
}

fn evaluate(setup: &RedesignSetup, z: &ExtendedState, a: f64, law: FeedbackLaw) -> Evaluated {
    let co = setup.coefficients_at(z, a, 0.0);
    let l_routed = if co.l.abs() < L_FLOOR { 0.0 } else { co.l };
    let region = classify(co.p, l_routed, co.kappa, co.b, a);
    let lhs0 = match law {
        FeedbackLaw::Redesigned => match region {
            Region::Interior => {
                co.p * co.kappa * co.kappa / (co.l * co.l) - 2.0 * co.b * co.kappa / co.l + co.resid
            }
            Region::Upper => -(a * co.l + co.b).powi(2) / co.p + co.resid + 2.0 * a * co.kappa,
            Region::Lower => -(a * co.l - co.b).powi(2) / co.p + co.resid - 2.0 * a * co.kappa,
        },
        FeedbackLaw::NominalPredictor => {
            let u = nominal_predictor_feedback(setup.plant(), setup.stabilizer(), z);
            co.p * u * u + 2.0 * co.b * u + 2.0 * a * (co.kappa + co.l * u).abs() + co.resid
        }
    };
    Evaluated { region, lhs0, vbar: co.vbar }
}

fn report_at(evals: &[Evaluated], samples: &[ExtendedState], a: f64, sigma: f64, law: FeedbackLaw) -> CertificationReport {
    let mut worst = [f64::NEG_INFINITY; 3];
    let mut arg = [usize::MAX; 3];
    let mut counts = [0usize; 3];
    for (i, e) in evals.iter().enumerate() {
        let k = e.region.index();
        counts[k] += 1;
        let v = e.lhs0 - sigma * e.vbar;
        if v > worst[k] || arg[k] == usize::MAX {
            worst[k] = v;
            arg[k] = i;
        }
    }
    let max = worst.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let opt = |k: usize| (counts[k] > 0).then_some(worst[k]);
    let argmax = [0, 1, 2].map(|k| (counts[k] > 0).then(|| samples[arg[k]].to_flat().iter().copied().collect()));
    CertificationReport {
        a,
        sigma,
        law,
        region1: opt(0),
        region2: opt(1),
        region3: opt(2),
        region_counts: counts,
        margin: -max,
        samples: evals.len(),
        pass: max <= -MARGIN_FLOOR && max.is_finite(),
        largest_certified_a: None,
        argmax,
        note: "certified up to sampling",
    }
}

/// Lower end of the automatic `sigma` grid: `lambda + 1/c` when below one, else `lambda`.
fn sigma_grid(cert: &BacksteppingCertificate) -> Vec<f64> {
    let guaranteed = cert.lambda + 1.0 / cert.c;
    let lo = if guaranteed < 1.0 { guaranteed } else { cert.lambda };
    (0..SIGMA_GRID).map(|j| lo + (1.0 - lo) * j as f64 / SIGMA_GRID as f64).collect()
}

fn max_over(evals: &[Evaluated], sigma: f64) -> f64 {
    evals.iter().map(|e| e.lhs0 - sigma * e.vbar).fold(f64::NEG_INFINITY, f64::max)
}

fn certify_on(
    setup: &RedesignSetup,
    a: f64,
    samples: &[ExtendedState],
    law: FeedbackLaw,
    sigma: SigmaChoice,
) -> CertificationReport {
    let evals: Vec<Evaluated> = samples.par_iter().map(|z| evaluate(setup, z, a, law)).collect();
    let sigma = match sigma {
        SigmaChoice::Certificate => setup.certificate().sigma,
        SigmaChoice::Auto => {
            // The worst value is nonincreasing in sigma, so the first passing grid point is
            // found by bisection over the grid index.
            let grid = sigma_grid(setup.certificate());
            let passes = |j: usize| max_over(&evals, grid[j]) <= -MARGIN_FLOOR;
            let last = grid.len() - 1;
            if !passes(last) {
                grid[last]
            } else if passes(0) {
                grid[0]
            } else {
                let (mut lo, mut hi) = (0usize, last);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if passes(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                grid[hi]
            }
        }
    };
    report_at(&evals, samples, a, sigma, law)
}

/// Certifies the redesigned law at the setup's `sigma` with `n_samples` low-discrepancy points
/// plus the default random and structured directions.
pub fn certify(setup: &RedesignSetup, a: f64, n_samples: usize) -> Result<CertificationReport> {
    certify_with(setup, a, &CertificationOptions { n_samples, ..Default::default() })
}

pub fn certify_with(setup: &RedesignSetup, a: f64, opts: &CertificationOptions) -> Result<CertificationReport> {
    if !(a >= 0.0 && a.is_finite()) {
        return arg_err(format!("a must be finite and >= 0, got {a}"));
    }
    let samples = sphere_samples(setup.plant().dim(), setup.plant().delay(), opts);
    Ok(certify_on(setup, a, &samples, opts.law, opts.sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxCertified {
    pub a: f64,
    /// The upper end of the search interval already passes.
    pub saturated: bool,
    pub report: CertificationReport,
}

/// Largest `a` in `[0, a_hi]` at which certification passes, by bisection to `opts.tolerance`.
pub fn max_certified_a(setup: &RedesignSetup, a_hi: f64, opts: &CertificationOptions) -> Result<MaxCertified> {
    if !(a_hi >= 0.0 && a_hi.is_finite()) {
        return arg_err(format!("a_hi must be finite and >= 0, got {a_hi}"));
    }
    let samples = sphere_samples(setup.plant().dim(), setup.plant().delay(), opts);
    max_certified_on(setup, a_hi, &samples, opts)
}

fn max_certified_on(
    setup: &RedesignSetup,
    a_hi: f64,
    samples: &[ExtendedState],
    opts: &CertificationOptions,
) -> Result<MaxCertified> {
    let at_zero = certify_on(setup, 0.0, samples, opts.law, opts.sigma);
    if !at_zero.pass {
        return Err(Error::Configuration(format!(
            "certification fails already at a = 0 (worst value {:e}); choose other c, phi, sigma",
            at_zero.worst()
        )));
    }
    let (a, saturated) =
        bisect_last_true(|a| certify_on(setup, a, samples, opts.law, opts.sigma).pass, 0.0, a_hi, opts.tolerance);
    let mut report = certify_on(setup, a, samples, opts.law, opts.sigma);
    report.largest_certified_a = Some(a);
    Ok(MaxCertified { a, saturated, report })
}

/// One point of a `(c, phi, sigma)` sweep; `sigma = None` selects the automatic grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub c: f64,
    pub phi: f64,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub best: SweepPoint,
    pub a: f64,
    pub saturated: bool,
    /// Largest certified `a` per grid point; `None` where the point is not admissible or
    /// fails at `a = 0`.
    pub per_point: Vec<(SweepPoint, Option<f64>)>,
}

/// Runs [`max_certified_a`] over a grid of certificates and keeps the best. Certificates are
/// built with the relaxed admissible range; `opts.sigma` is ignored in favour of each point's.
pub fn max_certified_a_sweep(
    plant: &LinearPlant,
    stab: &NominalStabilizer,
    grid: &[SweepPoint],
    a_hi: f64,
    opts: &CertificationOptions,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return arg_err("empty sweep grid");
    }
    let samples = sphere_samples(plant.dim(), plant.delay(), opts);
    let results: Vec<(SweepPoint, Option<MaxCertified>)> = grid
        .par_iter()
        .map(|pt| {
            let run = || -> Result<MaxCertified> {
                let cert = BacksteppingCertificate::relaxed(pt.c, pt.phi, pt.sigma.unwrap_or(0.0), stab.lambda())?;
                let setup = RedesignSetup::new(plant.clone(), stab.clone(), cert)?;
                let o = CertificationOptions {
                    sigma: if pt.sigma.is_some() { SigmaChoice::Certificate } else { SigmaChoice::Auto },
                    ..opts.clone()
                };
                max_certified_on(&setup, a_hi, &samples, &o)
            };
            (*pt, run().ok())
        })
        .collect();
    let best = results
        .iter()
        .filter_map(|(pt, m)| m.as_ref().map(|m| (pt, m)))
        .fold(None::<(&SweepPoint, &MaxCertified)>, |acc, cur| match acc {
            Some(b) if b.1.a >= cur.1.a => Some(b),
            _ => Some(cur),
        });
    let (pt, m) = best.ok_or_else(|| Error::Configuration("no sweep point certifies at a = 0".into()))?;
    Ok(SweepResult {
        best: *pt,
        a: m.a,
        saturated: m.saturated,
        per_point: results.iter().map(|(p, m)| (*p, m.as_ref().map(|m| m.a))).collect(),
    })
}

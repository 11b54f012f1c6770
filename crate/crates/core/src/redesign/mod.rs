//! Lyapunov redesign of the predictor feedback.
//!
//! Along the uncertain closed loop the backstepping function satisfies, for every `|d| = a`,
//!
//! ```text
//! Vbar(next) = p u^2 + 2 b(z) u + 2 d (kappa(z) + L(x) u) + resid(z) + sigma Vbar(z)
//! ```
//!
//! and for `|d| < a` the right side only grows, so the worst case over `[-a, a]` is
//! `p u^2 + 2 b u + 2 a |kappa + L u| + resid + sigma Vbar`. The redesigned feedback
//! [`RedesignSetup::redesigned_feedback`] is its minimizer over `u`: a continuous, piecewise
//! linear law, homogeneous of degree one.

use nalgebra::{DMatrix, DVector};

use crate::backstepping::{nominal_predictor_feedback, vbar_unchecked, BacksteppingCertificate};
use crate::error::{arg_err, Error, Result};
use crate::model::{ExtendedState, LinearPlant, NominalStabilizer};

mod certify;
mod scalar;

pub use certify::{
    certify, certify_with, max_certified_a, max_certified_a_sweep, CertificationOptions, CertificationReport,
    FeedbackLaw, MaxCertified, SigmaChoice, SweepPoint, SweepResult,
};
pub use scalar::{
    beta_sweep, scalar_certify, scalar_certify_nominal, scalar_max_a, scalar_q_search, scalar_redesign_feedback,
    BetaSweepRow, QSearchResult, ScalarCertification, ScalarLaw,
};

/// Which of the three pieces of the redesigned law applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `|p kappa - b L| < a L^2`: `u = -kappa/L`, the disturbance term is cancelled.
    Interior,
    /// `p kappa - b L >= a L^2`: `u = -(a L + b)/p`.
    Upper,
    /// `p kappa - b L <= -a L^2`: `u = (a L - b)/p`.
    Lower,
}

impl Region {
    pub fn index(self) -> usize {
        match self {
            Region::Interior => 0,
            Region::Upper => 1,
            Region::Lower => 2,
        }
    }
}

/// Coefficients of the worst-case next-step Lyapunov value at one extended state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub p: f64,
    pub l: f64,
    pub kappa: f64,
    pub b: f64,
    /// `resid` at the setup's `sigma`.
    pub resid: f64,
    pub vbar: f64,
}

/// Plant, stabilizer and certificate with the matrix products the redesign formulas need.
#[derive(Debug, Clone)]
pub struct RedesignSetup {
    plant: LinearPlant,
    stab: NominalStabilizer,
    cert: BacksteppingCertificate,
    p: f64,
    /// `c^i` for `i = 0..=r`.
    cpow: Vec<f64>,
    /// `A^{i} G` for `i = 0..=r`.
    ag: Vec<DMatrix<f64>>,
    /// `(B'PA - phi k')'`.
    row: DVector<f64>,
    /// `A'PA + phi kk'`.
    mat: DMatrix<f64>,
    /// `c^r (A^{r-1}G)'(B'PA - phi k')'`, so that `L(x) = l_vec . x`.
    l_vec: DVector<f64>,
}

impl RedesignSetup {
    /// Requires `r >= 1` and `p = c^r (B'PB + phi) > 0`. The certificate may be relaxed
    /// (`c > 0`, `phi > -1`).
    pub fn new(plant: LinearPlant, stab: NominalStabilizer, cert: BacksteppingCertificate) -> Result<Self> {
        let n = plant.dim();
        let r = plant.delay();
        if r == 0 {
            return arg_err("redesign needs an input delay r >= 1");
        }
        if stab.k().len() != n {
            return arg_err(format!("gain has length {}, plant dimension is {n}", stab.k().len()));
        }
        let pm = stab.p();
        let b = plant.b();
        let a = plant.a();
        let k = stab.k();
        let cpow: Vec<f64> = (0..=r).map(|i| cert.c.powi(i as i32)).collect();
        let p = cpow[r] * (b.dot(&(pm * b)) + cert.phi);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Configuration(format!("p = c^r (B'PB + phi) must be positive, got {p}")));
        }
        let row = a.transpose() * (pm * b) - k * cert.phi;
        let mat = a.transpose() * pm * a + (k * k.transpose()) * cert.phi;
        let mut ag = Vec::with_capacity(r + 1);
        ag.push(plant.g().clone());
        for i in 1..=r {
            ag.push(a * &ag[i - 1]);
        }
        let l_vec = ag[r - 1].transpose() * &row * cpow[r];
        Ok(Self { plant, stab, cert, p, cpow, ag, row, mat, l_vec })
    }

    /// Same plant and stabilizer with another certificate.
    pub fn with_certificate(&self, cert: BacksteppingCertificate) -> Result<Self> {
        Self::new(self.plant.clone(), self.stab.clone(), cert)
    }

    pub fn plant(&self) -> &LinearPlant {
        &self.plant
    }

    pub fn stabilizer(&self) -> &NominalStabilizer {
        &self.stab
    }

    pub fn certificate(&self) -> &BacksteppingCertificate {
        &self.cert
    }

    /// `p = c^r (B'PB + phi)`.
    pub fn p(&self) -> f64 {
        self.p
    }

    fn check(&self, z: &ExtendedState) -> Result<()> {
        if z.x.len() != self.plant.dim() || z.y.len() != self.plant.delay() {
            return arg_err("extended state does not match plant dimensions");
        }
        Ok(())
    }

    /// `L(x) = c^r (B'PA - phi k') A^{r-1} G x`.
    pub fn eval_l(&self, x: &DVector<f64>) -> f64 {
        self.l_vec.dot(x)
    }

    /// Coefficient of `2d` in the next-step value at `u = 0`.
    pub fn eval_kappa(&self, z: &ExtendedState) -> f64 {
        let f = self.plant.predictors(z);
        self.kappa_from(z, &f)
    }

    fn kappa_from(&self, z: &ExtendedState, f: &[DVector<f64>]) -> f64 {
        let r = self.plant.delay();
        let pm = self.stab.p();
        let gx: Vec<DVector<f64>> = (0..r).map(|i| &self.ag[i] * &z.x).collect();
        let mut kappa = f[1].dot(&(pm * &gx[0]));
        for i in 1..=r {
            let ci = self.cpow[i];
            if i < r {
                kappa += ci * z.y[i] * self.row.dot(&gx[i - 1]);
            }
            kappa += ci * f[i].dot(&(&self.mat * &gx[i - 1]));
        }
        kappa
    }

    /// `b(z) = c^r (B'PA - phi k') F_r`.
    pub fn eval_b(&self, z: &ExtendedState) -> f64 {
        let fr = self.plant.predictor_unchecked(z, self.plant.delay());
        self.cpow[self.plant.delay()] * self.row.dot(&fr)
    }

    /// `u`- and `d`-free part of the next-step value, with the `d^2` term taken at `|d| = a`
    /// and `sigma Vbar(z)` subtracted.
    pub fn eval_resid(&self, z: &ExtendedState, a: f64, sigma: f64) -> f64 {
        let f = self.plant.predictors(z);
        self.resid_from(z, &f, a, sigma)
    }

    fn resid_from(&self, z: &ExtendedState, f: &[DVector<f64>], a: f64, sigma: f64) -> f64 {
        let r = self.plant.delay();
        let pm = self.stab.p();
        let k = self.stab.k();
        let c = self.cert.c;
        let phi = self.cert.phi;
        let mut dd = 0.0;
        for i in 0..=r {
            let v = &self.ag[i] * &z.x;
            dd += self.cpow[i] * v.dot(&(pm * &v));
            if i >= 1 {
                let kg = k.dot(&(&self.ag[i - 1] * &z.x));
                dd += self.cpow[i] * phi * kg * kg;
            }
        }
        let mut total = a * a * dd;
        for i in 1..=r {
            total += (1.0 - sigma * c) * self.cpow[i - 1] * f[i].dot(&(pm * &f[i]));
        }
        total += self.cpow[r] * f[r].dot(&(&self.mat * &f[r]));
        for i in 2..=r {
            let gap = z.y[i - 1] - k.dot(&f[i - 1]);
            total += (1.0 - sigma * c) * phi * self.cpow[i - 1] * gap * gap;
        }
        let gap1 = z.y[0] - k.dot(&z.x);
        total - sigma * f[0].dot(&(pm * &f[0])) - sigma * c * phi * gap1 * gap1
    }

    /// All coefficients at `z` in one pass.
    pub fn coefficients(&self, z: &ExtendedState, a: f64) -> Coefficients {
        self.coefficients_at(z, a, self.cert.sigma)
    }

    pub(crate) fn coefficients_at(&self, z: &ExtendedState, a: f64, sigma: f64) -> Coefficients {
        let f = self.plant.predictors(z);
        let r = self.plant.delay();
        Coefficients {
            p: self.p,
            l: self.eval_l(&z.x),
            kappa: self.kappa_from(z, &f),
            b: self.cpow[r] * self.row.dot(&f[r]),
            resid: self.resid_from(z, &f, a, sigma),
            vbar: vbar_unchecked(&self.plant, &self.stab, &self.cert, z),
        }
    }

    /// `Vbar(z)` for this setup's certificate.
    pub fn vbar(&self, z: &ExtendedState) -> f64 {
        vbar_unchecked(&self.plant, &self.stab, &self.cert, z)
    }

    /// `max_{|d| <= a} Vbar(next)` at input `u`.
    pub fn worst_case_value(&self, z: &ExtendedState, u: f64, a: f64) -> Result<f64> {
        self.check(z)?;
        if !(a >= 0.0) {
            return arg_err(format!("a must be >= 0, got {a}"));
        }
        Ok(self.coefficients(z, a).worst_case(u, a, self.cert.sigma))
    }

    /// Minimax feedback. Total: `L(x) = 0` is routed by the sign of `p kappa`.
    pub fn redesigned_feedback(&self, z: &ExtendedState, a: f64) -> Result<f64> {
        self.check(z)?;
        Ok(self.redesigned_unchecked(z, a))
    }

    pub(crate) fn redesigned_unchecked(&self, z: &ExtendedState, a: f64) -> f64 {
        let f = self.plant.predictors(z);
        let l = self.eval_l(&z.x);
        let kappa = self.kappa_from(z, &f);
        let b = self.cpow[self.plant.delay()] * self.row.dot(&f[self.plant.delay()]);
        minimax_input(self.p, l, kappa, b, a).0
    }

    /// Nominal predictor law for comparison.
    pub fn nominal_feedback(&self, z: &ExtendedState) -> f64 {
        nominal_predictor_feedback(&self.plant, &self.stab, z)
    }

    /// Disturbance maximizing the next-step value: `a sign(kappa + L u)`, `+a` on ties.
    pub fn greedy_disturbance(&self, z: &ExtendedState, u: f64, a: f64) -> f64 {
        let s = self.eval_kappa(z) + self.eval_l(&z.x) * u;
        if s >= 0.0 {
            a
        } else {
            -a
        }
    }
}

impl Coefficients {
    /// `p u^2 + 2bu + 2a|kappa + Lu| + resid + sigma Vbar`.
    pub fn worst_case(&self, u: f64, a: f64, sigma: f64) -> f64 {
        self.p * u * u + 2.0 * self.b * u + 2.0 * a * (self.kappa + self.l * u).abs() + self.resid + sigma * self.vbar
    }
}

/// Region and minimizer of `p u^2 + 2bu + 2a|kappa + Lu|`.
pub fn minimax_input(p: f64, l: f64, kappa: f64, b: f64, a: f64) -> (f64, Region) {
    let region = classify(p, l, kappa, b, a);
    let u = match region {
        Region::Interior => -kappa / l,
        Region::Upper => -(a * l + b) / p,
        Region::Lower => (a * l - b) / p,
    };
    (u, region)
}

pub(crate) fn classify(p: f64, l: f64, kappa: f64, b: f64, a: f64) -> Region {
    if l == 0.0 {
        return if p * kappa >= 0.0 { Region::Upper } else { Region::Lower };
    }
    let disc = p * kappa - b * l;
    let width = a * l * l;
    if disc.abs() < width {
        Region::Interior
    } else if disc >= width {
        Region::Upper
    } else {
        Region::Lower
    }
}

//! Backstepping construction of the predictor feedback and its Lyapunov function.
//!
//! Given a nominal delay-free stabilizer `k` with Lyapunov function `V` contracting at
//! rate `lambda`, the predictor feedback `u = k(F_r(z))` stabilizes the delayed plant and
//!
//! ```text
//! Vbar(z) = sum_{i=0..r} c^i V(F_i(z_i)) + sum_{i=1..r} c^i a_i(|y_i - k(F_{i-1}(z_{i-1}))|)
//! ```
//!
//! decays at rate `lambda + 1/c` along the disturbance-free closed loop whenever
//! `c > 1/(1 - lambda)` and the gauges `a_i` are nondecreasing in `i`.
//!
//! For linear plants with `V = x'Px` and `a_i(s) = phi s^2`, [`lyapunov_bar`] evaluates
//! `Vbar` directly and [`lyapunov_matrix`] materializes it as a quadratic form.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{arg_err, Error, Result};
use crate::linalg::sym_eigenvalues;
use crate::model::{ExtendedState, LinearPlant, NominalStabilizer};

/// Weights of the backstepping Lyapunov function plus the redesign target rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacksteppingCertificate {
    /// Geometric weight `c`.
    pub c: f64,
    /// Quadratic gauge coefficient, `a_i(s) = phi s^2`.
    pub phi: f64,
    /// Target contraction for the redesigned loop.
    pub sigma: f64,
    /// Nominal contraction of the delay-free loop.
    pub lambda: f64,
}

impl BacksteppingCertificate {
    /// Certificate for which the decay guarantee holds: `c > 1/(1-lambda)`, `phi > 0`.
    pub fn new(c: f64, phi: f64, sigma: f64, lambda: f64) -> Result<Self> {
        let cert = Self::relaxed(c, phi, sigma, lambda)?;
        if !cert.satisfies_decay_conditions() {
            return arg_err(format!(
                "decay guarantee needs c > 1/(1-lambda) = {} and phi > 0, got c = {c}, phi = {phi}",
                1.0 / (1.0 - lambda)
            ));
        }
        Ok(cert)
    }

    /// Certificate with the wider range `c > 0`, `phi > -1`. For the scalar integrator `Vbar`
    /// stays positive definite there; the decay guarantee is not implied.
    pub fn relaxed(c: f64, phi: f64, sigma: f64, lambda: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return arg_err(format!("c must be positive, got {c}"));
        }
        if !(phi > -1.0 && phi.is_finite()) {
            return arg_err(format!("phi must exceed -1, got {phi}"));
        }
        if !(0.0..1.0).contains(&sigma) {
            return arg_err(format!("sigma must lie in [0, 1), got {sigma}"));
        }
        if !(0.0..1.0).contains(&lambda) {
            return arg_err(format!("lambda must lie in [0, 1), got {lambda}"));
        }
        Ok(Self { c, phi, sigma, lambda })
    }

    /// Copies `lambda` from the stabilizer.
    pub fn for_stabilizer(stab: &NominalStabilizer, c: f64, phi: f64, sigma: f64) -> Result<Self> {
        Self::new(c, phi, sigma, stab.lambda())
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::relaxed(self.c, self.phi, sigma, self.lambda)
    }

    pub fn satisfies_decay_conditions(&self) -> bool {
        self.c > 1.0 / (1.0 - self.lambda) && self.phi > 0.0
    }

    /// Guaranteed nominal decay rate `lambda + 1/c`.
    pub fn decay_bound(&self) -> f64 {
        self.lambda + 1.0 / self.c
    }
}

/// Nominal predictor feedback `u = k' F_r(z)`; for `r = 0` this is `k'x`.
pub fn nominal_predictor_feedback(plant: &LinearPlant, stab: &NominalStabilizer, z: &ExtendedState) -> f64 {
    stab.k().dot(&plant.predictor_unchecked(z, plant.delay()))
}

/// Backstepping Lyapunov function for the linear case.
///
/// ```text
/// Vbar = x'Px + sum_{i=1..r} c^i F_i'P F_i + c phi (y_1 - k'x)^2
///        + phi sum_{i=2..r} c^i (y_i - k'F_{i-1})^2
/// ```
///
/// Requires `r >= 1`; without delay use `V(x) = x'Px` directly.
pub fn lyapunov_bar(
    plant: &LinearPlant,
    stab: &NominalStabilizer,
    cert: &BacksteppingCertificate,
    z: &ExtendedState,
) -> Result<f64> {
    if plant.delay() == 0 {
        return arg_err("lyapunov_bar needs r >= 1; use V(x) = x'Px when there is no delay");
    }
    if z.x.len() != plant.dim() || z.y.len() != plant.delay() {
        return arg_err("extended state does not match plant dimensions");
    }
    Ok(vbar_unchecked(plant, stab, cert, z))
}

/// `Vbar` with the `r = 0` case collapsed to `x'Px`.
pub(crate) fn vbar_unchecked(
    plant: &LinearPlant,
    stab: &NominalStabilizer,
    cert: &BacksteppingCertificate,
    z: &ExtendedState,
) -> f64 {
    let r = plant.delay();
    let f = plant.predictors(z);
    let mut total = stab.lyapunov(&f[0]);
    let mut ci = 1.0;
    for i in 1..=r {
        ci *= cert.c;
        let gap = z.y[i - 1] - stab.k().dot(&f[i - 1]);
        total += ci * (stab.lyapunov(&f[i]) + cert.phi * gap * gap);
    }
    total
}

/// Symmetric matrix `Q` with `Vbar(z) = w'Qw`, `w = (x, y_1, .., y_r)`.
pub fn lyapunov_matrix(plant: &LinearPlant, stab: &NominalStabilizer, cert: &BacksteppingCertificate) -> DMatrix<f64> {
    let n = plant.dim();
    let r = plant.delay();
    let dim = n + r;
    // Row blocks M_i with F_i(z) = M_i w.
    let predictor_rows = |i: usize| {
        let mut m = DMatrix::<f64>::zeros(n, dim);
        m.view_mut((0, 0), (n, n)).copy_from(plant.power(i));
        for j in 1..=i {
            m.set_column(n + j - 1, plant.power_b(i - j));
        }
        m
    };
    let mut q = DMatrix::<f64>::zeros(dim, dim);
    let mut prev = predictor_rows(0);
    q += prev.transpose() * stab.p() * &prev;
    let mut ci = 1.0;
    for i in 1..=r {
        ci *= cert.c;
        let mi = predictor_rows(i);
        q += (mi.transpose() * stab.p() * &mi) * ci;
        let mut h = -(prev.transpose() * stab.k());
        h[n + i - 1] += 1.0;
        q += (&h * h.transpose()) * (ci * cert.phi);
        prev = mi;
    }
    (&q + q.transpose()) * 0.5
}

/// `min_{|w| = 1} Vbar(w)`: the smallest eigenvalue of [`lyapunov_matrix`].
pub fn min_sphere_value(plant: &LinearPlant, stab: &NominalStabilizer, cert: &BacksteppingCertificate) -> f64 {
    sym_eigenvalues(&lyapunov_matrix(plant, stab, cert))[0]
}

/// Largest `Vbar(next)/Vbar(z)` over the samples under nominal predictor feedback and `d = 0`.
///
/// Zero samples are skipped. The backstepping guarantee bounds the result by `lambda + 1/c`.
pub fn verify_decay(
    plant: &LinearPlant,
    stab: &NominalStabilizer,
    cert: &BacksteppingCertificate,
    samples: &[ExtendedState],
) -> Result<f64> {
    if cert.c <= 1.0 / (1.0 - cert.lambda) {
        return arg_err(format!("verify_decay needs c > 1/(1-lambda), got c = {}", cert.c));
    }
    if samples.iter().any(|z| z.x.len() != plant.dim() || z.y.len() != plant.delay()) {
        return arg_err("sample does not match plant dimensions");
    }
    let worst = samples
        .par_iter()
        .filter_map(|z| {
            let v = vbar_unchecked(plant, stab, cert, z);
            if v <= 0.0 {
                return None;
            }
            let u = nominal_predictor_feedback(plant, stab, z);
            let next = plant.step_extended_unchecked(z, u, 0.0);
            Some(vbar_unchecked(plant, stab, cert, &next) / v)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

type StateMap = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type GainMap = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type LyapunovMap = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type Gauge = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Delay-free nonlinear system `x+ = f(x, u)` with stabilizer `k` and Lyapunov function `V`
/// satisfying `V(f(x, k(x))) <= lambda V(x)`.
pub struct GenericSystem {
    f: StateMap,
    k: GainMap,
    v: LyapunovMap,
    lambda: f64,
    n: usize,
    m: usize,
}

impl std::fmt::Debug for GenericSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenericSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

/// Extended state with vector-valued pending inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericState {
    pub x: DVector<f64>,
    pub y: Vec<DVector<f64>>,
}

impl GenericSystem {
    /// Checks `f(0,0) = 0`, `k(0) = 0` and `V(0) = 0` for state dimension `n`, input dimension `m`.
    pub fn new<F, K, V>(n: usize, m: usize, f: F, k: K, v: V, lambda: f64) -> Result<Self>
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        K: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        if !(0.0..1.0).contains(&lambda) {
            return arg_err(format!("lambda must lie in [0, 1), got {lambda}"));
        }
        let x0 = DVector::zeros(n);
        let u0 = DVector::zeros(m);
        let f0 = f(&x0, &u0);
        if f0.len() != n || f0.amax() > 1e-12 {
            return arg_err("f(0, 0) must be the zero state");
        }
        let k0 = k(&x0);
        if k0.len() != m || k0.amax() > 1e-12 {
            return arg_err("k(0) must be the zero input");
        }
        if v(&x0).abs() > 1e-12 {
            return arg_err("V(0) must be zero");
        }
        Ok(Self { f: Box::new(f), k: Box::new(k), v: Box::new(v), lambda, n, m })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, u)
    }

    pub fn k(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.k)(x)
    }

    pub fn v(&self, x: &DVector<f64>) -> f64 {
        (self.v)(x)
    }

    /// Worst `V(f(x,k(x)))/V(x)` over the samples; fails if it exceeds `lambda + 1e-9`.
    pub fn spot_check(&self, samples: &[DVector<f64>]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for x in samples {
            let v = self.v(x);
            if v <= 0.0 {
                continue;
            }
            let ratio = self.v(&self.f(x, &self.k(x))) / v;
            worst = worst.max(ratio);
        }
        if worst > self.lambda + 1e-9 {
            return Err(Error::Validation(format!(
                "V(f(x,k(x))) <= lambda V(x) fails: ratio {worst} > lambda {}",
                self.lambda
            )));
        }
        Ok(worst)
    }

    /// `F_0, .., F_r` by the recursion `F_{i+1} = f(F_i, y_{i+1})`.
    pub fn predictors(&self, z: &GenericState) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(z.y.len() + 1);
        out.push(z.x.clone());
        for yi in &z.y {
            let next = self.f(out.last().expect("non-empty"), yi);
            out.push(next);
        }
        out
    }

    /// Predictor feedback `k(F_r(z))`.
    pub fn predictor_feedback(&self, z: &GenericState) -> DVector<f64> {
        let f = self.predictors(z);
        self.k(f.last().expect("non-empty"))
    }

    /// `(f(x, y_1), y_2, .., y_r, u)`, or `f(x, u)` without delay.
    pub fn step(&self, z: &GenericState, u: &DVector<f64>) -> GenericState {
        match z.y.split_first() {
            None => GenericState { x: self.f(&z.x, u), y: Vec::new() },
            Some((y1, rest)) => {
                let mut y = rest.to_vec();
                y.push(u.clone());
                GenericState { x: self.f(&z.x, y1), y }
            }
        }
    }

    fn check_state(&self, z: &GenericState) -> Result<()> {
        if z.x.len() != self.n || z.y.iter().any(|yi| yi.len() != self.m) {
            return arg_err("generic state does not match system dimensions");
        }
        Ok(())
    }
}

/// Family `a_1 <= a_2 <= .. <= a_r` of class-K-infinity gauges.
pub struct GaugeFamily {
    gauges: Vec<Gauge>,
}

impl std::fmt::Debug for GaugeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaugeFamily").field("len", &self.gauges.len()).finish()
    }
}

const GAUGE_GRID_POINTS: usize = 64;

fn gauge_grid() -> Vec<f64> {
    // 64 log-spaced points over [1e-6, 1e6].
    (0..GAUGE_GRID_POINTS)
        .map(|j| 10f64.powf(-6.0 + 12.0 * j as f64 / (GAUGE_GRID_POINTS - 1) as f64))
        .collect()
}

impl GaugeFamily {
    /// Checks on a log-spaced grid that each gauge vanishes at zero, is strictly increasing,
    /// and that the family is pointwise nondecreasing in the index.
    pub fn new(gauges: Vec<Gauge>) -> Result<Self> {
        let grid = gauge_grid();
        for (i, g) in gauges.iter().enumerate() {
            if g(0.0).abs() > 1e-12 {
                return arg_err(format!("gauge a_{} does not vanish at zero", i + 1));
            }
            let vals: Vec<f64> = grid.iter().map(|&s| g(s)).collect();
            if vals.windows(2).any(|w| !(w[1] > w[0])) || !(vals[0] > 0.0) {
                return arg_err(format!("gauge a_{} is not strictly increasing on the sample grid", i + 1));
            }
        }
        for i in 1..gauges.len() {
            if let Some(&s) = grid.iter().find(|&&s| gauges[i - 1](s) > gauges[i](s)) {
                return arg_err(format!("gauges violate a_{i}(s) <= a_{}(s) at s = {s:e}", i + 1));
            }
        }
        Ok(Self { gauges })
    }

    /// `a_i(s) = phi s^2` for `i = 1..r`.
    pub fn quadratic(phi: f64, r: usize) -> Result<Self> {
        Self::new((0..r).map(|_| Box::new(move |s: f64| phi * s * s) as Gauge).collect())
    }

    pub fn len(&self) -> usize {
        self.gauges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gauges.is_empty()
    }

    pub fn eval(&self, i: usize, s: f64) -> f64 {
        (self.gauges[i - 1])(s)
    }
}

/// Backstepping Lyapunov function for a generic system, built from the predictor recursion.
pub fn backstep_lyapunov_generic(
    sys: &GenericSystem,
    cert: &BacksteppingCertificate,
    gauges: &GaugeFamily,
    z: &GenericState,
) -> Result<f64> {
    sys.check_state(z)?;
    if gauges.len() != z.y.len() {
        return arg_err(format!("need {} gauges, got {}", z.y.len(), gauges.len()));
    }
    Ok(generic_vbar(sys, cert, gauges, z))
}

fn generic_vbar(sys: &GenericSystem, cert: &BacksteppingCertificate, gauges: &GaugeFamily, z: &GenericState) -> f64 {
    let f = sys.predictors(z);
    let mut total = sys.v(&f[0]);
    let mut ci = 1.0;
    for i in 1..=z.y.len() {
        ci *= cert.c;
        let gap = (&z.y[i - 1] - sys.k(&f[i - 1])).norm();
        total += ci * (sys.v(&f[i]) + gauges.eval(i, gap));
    }
    total
}

/// Generic counterpart of [`verify_decay`].
pub fn verify_decay_generic(
    sys: &GenericSystem,
    cert: &BacksteppingCertificate,
    gauges: &GaugeFamily,
    samples: &[GenericState],
) -> Result<f64> {
    if cert.c <= 1.0 / (1.0 - cert.lambda) {
        return arg_err(format!("verify_decay needs c > 1/(1-lambda), got c = {}", cert.c));
    }
    let mut worst = 0.0_f64;
    for z in samples {
        sys.check_state(z)?;
        if gauges.len() != z.y.len() {
            return arg_err(format!("need {} gauges, got {}", z.y.len(), gauges.len()));
        }
        let v = generic_vbar(sys, cert, gauges, z);
        if v <= 0.0 {
            continue;
        }
        let next = sys.step(z, &sys.predictor_feedback(z));
        worst = worst.max(generic_vbar(sys, cert, gauges, &next) / v);
    }
    Ok(worst)
}

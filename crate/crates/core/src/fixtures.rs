//! Random stabilized plants for tests and sweeps.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::linalg::ackermann_gain;
use crate::model::{LinearPlant, NominalStabilizer};
use crate::sampling::rng_from_seed;

/// A plant together with a pole-placement stabilizer and its tight Lyapunov certificate.
#[derive(Debug, Clone)]
pub struct StabilizedPlant {
    pub plant: LinearPlant,
    pub stab: NominalStabilizer,
}

/// Random controllable `(A, B, G)` with `n <= max_n`, `r <= max_r`; the gain places the
/// closed-loop poles uniformly in `(-0.6, 0.6)` and `P` solves `P - Acl'P Acl = I`.
///
/// Draws are retried until the pair is controllable and the Lyapunov solve is well conditioned.
pub fn random_stabilized_plant(seed: u64, max_n: usize, max_r: usize, bound: f64) -> Result<StabilizedPlant> {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(1..=max_n);
    let r = rng.random_range(0..=max_r);
    random_stabilized_plant_with(&mut rng, n, r, bound)
}

/// As [`random_stabilized_plant`] with fixed dimensions.
pub fn random_stabilized_plant_dims(seed: u64, n: usize, r: usize, bound: f64) -> Result<StabilizedPlant> {
    let mut rng = rng_from_seed(seed);
    random_stabilized_plant_with(&mut rng, n, r, bound)
}

fn random_stabilized_plant_with<R: Rng>(rng: &mut R, n: usize, r: usize, bound: f64) -> Result<StabilizedPlant> {
    let mut last_err = None;
    for _ in 0..100 {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.5..1.5));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let poles: Vec<f64> = (0..n).map(|_| rng.random_range(-0.6..0.6)).collect();
        let attempt = (|| {
            let plant = LinearPlant::new(a, b, g, bound, r)?;
            let k = ackermann_gain(plant.a(), plant.b(), &poles)?;
            let stab = NominalStabilizer::from_gain(&plant, k)?;
            Ok::<_, crate::Error>(StabilizedPlant { plant, stab })
        })();
        match attempt {
            Ok(sp) if sp.stab.lambda() < 0.95 && sp.stab.k().amax() < 1e3 => return Ok(sp),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| crate::Error::Numerical("no well-conditioned random plant found".into())))
}

//! Plants, nominal stabilizers and the extended-state representation.
//!
//! A plant with input delay `r`,
//!
//! ```text
//! x(t+1) = A x(t) + B u(t-r) + d(t) G x(t),   |d(t)| <= a,
//! ```
//!
//! is simulated either with an explicit FIFO of pending inputs
//! ([`LinearPlant::step_delayed`]) or as the delay-free cascade on the extended
//! state `z = (x, y_1, .., y_r)` with `y_i(t) = u(t-r-1+i)`
//! ([`LinearPlant::step_extended`]). Both produce the same trajectory.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{arg_err, Error, Result};
use crate::linalg::{self, check_positive_definite, max_generalized_eigenvalue};

/// Single-input linear plant with multiplicative uncertainty and input delay.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DVector<f64>,
    g: DMatrix<f64>,
    bound: f64,
    delay: usize,
    /// `A^i` for `i = 0..=r`.
    powers: Vec<DMatrix<f64>>,
    /// `A^i B` for `i = 0..=r`.
    powers_b: Vec<DVector<f64>>,
}

impl LinearPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        g: DMatrix<f64>,
        bound: f64,
        delay: usize,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return arg_err(format!("A must be square and non-empty, got {:?}", a.shape()));
        }
        if g.shape() != (n, n) {
            return arg_err(format!("G must be {n}x{n}, got {:?}", g.shape()));
        }
        if b.len() != n {
            return arg_err(format!("B must have length {n}, got {}", b.len()));
        }
        if !(bound >= 0.0 && bound.is_finite()) {
            return arg_err(format!("uncertainty bound a must be finite and >= 0, got {bound}"));
        }
        let mut powers = Vec::with_capacity(delay + 1);
        let mut powers_b = Vec::with_capacity(delay + 1);
        powers.push(DMatrix::identity(n, n));
        powers_b.push(b.clone());
        for i in 1..=delay {
            powers.push(&a * &powers[i - 1]);
            powers_b.push(&a * &powers_b[i - 1]);
        }
        Ok(Self { a, b, g, bound, delay, powers, powers_b })
    }

    /// Scalar integrator `x(t+1) = x + d x + u(t-r)`.
    pub fn scalar_integrator(bound: f64, delay: usize) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            bound,
            delay,
        )
    }

    /// Same matrices and delay, different uncertainty bound.
    pub fn with_bound(&self, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return arg_err(format!("uncertainty bound a must be finite and >= 0, got {bound}"));
        }
        let mut out = self.clone();
        out.bound = bound;
        Ok(out)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Uncertainty magnitude `a`; disturbances range over `[-a, a]`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Cached `A^i`, `i <= r`.
    pub fn power(&self, i: usize) -> &DMatrix<f64> {
        &self.powers[i]
    }

    /// Cached `A^i B`, `i <= r`.
    pub fn power_b(&self, i: usize) -> &DVector<f64> {
        &self.powers_b[i]
    }

    fn check_state(&self, z: &ExtendedState) -> Result<()> {
        if z.x.len() != self.dim() {
            return arg_err(format!("state has dimension {}, plant has {}", z.x.len(), self.dim()));
        }
        if z.y.len() != self.delay {
            return arg_err(format!(
                "input pipeline has length {}, plant delay is {}",
                z.y.len(),
                self.delay
            ));
        }
        Ok(())
    }

    fn check_disturbance(&self, d: f64) -> Result<()> {
        if d.is_nan() || d.abs() > self.bound {
            return arg_err(format!("disturbance {d} outside [-{0}, {0}]", self.bound));
        }
        Ok(())
    }

    /// One step of the extended (delay-free) system.
    pub fn step_extended(&self, z: &ExtendedState, u: f64, d: f64) -> Result<ExtendedState> {
        self.check_state(z)?;
        self.check_disturbance(d)?;
        Ok(self.step_extended_unchecked(z, u, d))
    }

    pub(crate) fn step_extended_unchecked(&self, z: &ExtendedState, u: f64, d: f64) -> ExtendedState {
        let acting = z.y.first().copied().unwrap_or(u);
        let x = &self.a * &z.x + &self.b * acting + (&self.g * &z.x) * d;
        let y = if self.delay == 0 {
            Vec::new()
        } else {
            let mut y = Vec::with_capacity(self.delay);
            y.extend_from_slice(&z.y[1..]);
            y.push(u);
            y
        };
        ExtendedState { x, y }
    }

    /// One step of the delayed form, keeping an explicit FIFO of the last `r` inputs
    /// (oldest first).
    pub fn step_delayed(
        &self,
        x: &DVector<f64>,
        buffer: &VecDeque<f64>,
        u_new: f64,
        d: f64,
    ) -> Result<(DVector<f64>, VecDeque<f64>)> {
        if x.len() != self.dim() {
            return arg_err(format!("state has dimension {}, plant has {}", x.len(), self.dim()));
        }
        if buffer.len() != self.delay {
            return arg_err(format!(
                "input buffer holds {} entries, plant delay is {}",
                buffer.len(),
                self.delay
            ));
        }
        self.check_disturbance(d)?;
        let mut next = buffer.clone();
        next.push_back(u_new);
        let acting = next.pop_front().expect("buffer holds at least u_new");
        let x_next = &self.a * x + &self.b * acting + (&self.g * x) * d;
        Ok((x_next, next))
    }

    /// Predictor map `F_i(z_i) = A^i x + sum_{j=1..i} A^{i-j} B y_j`, `0 <= i <= r`.
    pub fn predictor_map(&self, z: &ExtendedState, i: usize) -> Result<DVector<f64>> {
        self.check_state(z)?;
        if i > self.delay {
            return arg_err(format!("predictor index {i} exceeds delay {}", self.delay));
        }
        Ok(self.predictor_unchecked(z, i))
    }

    pub(crate) fn predictor_unchecked(&self, z: &ExtendedState, i: usize) -> DVector<f64> {
        let mut f = &self.powers[i] * &z.x;
        for j in 1..=i {
            f.axpy(z.y[j - 1], &self.powers_b[i - j], 1.0);
        }
        f
    }

    /// All predictions `F_0, .., F_r`.
    pub(crate) fn predictors(&self, z: &ExtendedState) -> Vec<DVector<f64>> {
        (0..=self.delay).map(|i| self.predictor_unchecked(z, i)).collect()
    }
}

/// Nominal delay-free stabilizer `u = k'x` with quadratic Lyapunov function `x'Px`
/// contracting at rate `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalStabilizer {
    k: DVector<f64>,
    p: DMatrix<f64>,
    lambda: f64,
}

impl NominalStabilizer {
    /// Checks `P` is symmetric positive definite and `lambda` in `[0, 1)`.
    ///
    /// Does not check the decay inequality; use [`NominalStabilizer::checked`] for that.
    pub fn new(k: DVector<f64>, p: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if p.shape() != (k.len(), k.len()) {
            return arg_err(format!("P must be {0}x{0}, got {1:?}", k.len(), p.shape()));
        }
        check_positive_definite(&p, "P")?;
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::Validation(format!("lambda must lie in [0, 1), got {lambda}")));
        }
        Ok(Self { k, p, lambda })
    }

    /// Builds the stabilizer and verifies `(A+Bk')'P(A+Bk') <= lambda P`.
    pub fn checked(plant: &LinearPlant, k: DVector<f64>, p: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let stab = Self::new(k, p, lambda)?;
        let min_lambda = validate_stabilizer(plant, &stab)?;
        if min_lambda > lambda + 1e-10 {
            return Err(Error::Validation(format!(
                "decay inequality fails: smallest feasible lambda is {min_lambda}, declared {lambda}"
            )));
        }
        Ok(stab)
    }

    /// Builds the stabilizer with the smallest feasible `lambda` for the given `(k, P)`.
    pub fn auto(plant: &LinearPlant, k: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.shape() != (k.len(), k.len()) {
            return arg_err(format!("P must be {0}x{0}, got {1:?}", k.len(), p.shape()));
        }
        check_positive_definite(&p, "P")?;
        let min_lambda = min_lambda(plant, &k, &p)?;
        if min_lambda >= 1.0 {
            return Err(Error::Validation(format!(
                "gain does not stabilize: smallest feasible lambda is {min_lambda}"
            )));
        }
        Ok(Self { k, p, lambda: min_lambda.max(0.0) })
    }

    /// Builds `P` from the discrete Lyapunov equation `P - Acl'P Acl = I` and the tight `lambda`.
    pub fn from_gain(plant: &LinearPlant, k: DVector<f64>) -> Result<Self> {
        if k.len() != plant.dim() {
            return arg_err(format!("gain must have length {}", plant.dim()));
        }
        let acl = plant.a() + plant.b() * k.transpose();
        let p = linalg::discrete_lyapunov(&acl, &DMatrix::identity(plant.dim(), plant.dim()))?;
        Self::auto(plant, k, p)
    }

    pub fn k(&self) -> &DVector<f64> {
        &self.k
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `V(x) = x'Px`.
    pub fn lyapunov(&self, x: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.p, x)
    }
}

fn min_lambda(plant: &LinearPlant, k: &DVector<f64>, p: &DMatrix<f64>) -> Result<f64> {
    if k.len() != plant.dim() {
        return arg_err(format!("gain has length {}, plant dimension is {}", k.len(), plant.dim()));
    }
    let acl = plant.a() + plant.b() * k.transpose();
    let m = acl.transpose() * p * &acl;
    max_generalized_eigenvalue(&m, p)
}

/// Smallest `lambda` with `(A+Bk')'P(A+Bk') <= lambda P`: the largest generalized
/// eigenvalue of the pencil `((A+Bk')'P(A+Bk'), P)`.
///
/// The stabilizer is valid iff the result is `<= stab.lambda() + 1e-10`.
pub fn validate_stabilizer(plant: &LinearPlant, stab: &NominalStabilizer) -> Result<f64> {
    check_positive_definite(stab.p(), "P")?;
    min_lambda(plant, stab.k(), stab.p())
}

/// Plant state plus the inputs already issued but not yet applied.
///
/// `y[i-1]` holds `y_i = u(t-r-1+i)`, so `y[0]` acts next.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub x: DVector<f64>,
    pub y: Vec<f64>,
}

impl ExtendedState {
    pub fn new(x: DVector<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(n: usize, r: usize) -> Self {
        Self { x: DVector::zeros(n), y: vec![0.0; r] }
    }

    /// Splits a flat vector `(x, y_1, .., y_r)`.
    pub fn from_flat(w: &[f64], n: usize) -> Self {
        Self { x: DVector::from_column_slice(&w[..n]), y: w[n..].to_vec() }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len() + self.y.len(),
            self.x.iter().chain(self.y.iter()).copied(),
        )
    }

    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn scaled(&self, tau: f64) -> Self {
        Self { x: &self.x * tau, y: self.y.iter().map(|v| v * tau).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }
}

/// The scalar integrator `x(t+1) = x + d x + u(t-r)` with nominal gain `k(x) = -beta x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarExamplePlant {
    pub a: f64,
    pub r: usize,
    pub beta: f64,
}

impl ScalarExamplePlant {
    pub fn new(a: f64, r: usize, beta: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return arg_err(format!("a must be finite and >= 0, got {a}"));
        }
        if !(beta > 0.0 && beta < 2.0) {
            return arg_err(format!("beta must lie in (0, 2), got {beta}"));
        }
        Ok(Self { a, r, beta })
    }

    /// The deadbeat case `beta = 1`.
    pub fn deadbeat(a: f64, r: usize) -> Result<Self> {
        Self::new(a, r, 1.0)
    }

    pub fn plant(&self) -> LinearPlant {
        LinearPlant::scalar_integrator(self.a, self.r).expect("validated on construction")
    }

    /// `k = -beta`, `V(x) = x^2`, `lambda = (1 - beta)^2`.
    pub fn stabilizer(&self) -> NominalStabilizer {
        let lambda = (1.0 - self.beta).powi(2);
        NominalStabilizer::new(
            DVector::from_element(1, -self.beta),
            DMatrix::from_element(1, 1, 1.0),
            lambda,
        )
        .expect("beta in (0, 2) gives lambda in [0, 1)")
    }
}

/// Past measurements available to a measurement-delayed controller at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementHistory {
    /// `x(t-r)`.
    pub delayed_state: DVector<f64>,
    /// `u(t-r), .., u(t-1)`, oldest first. Longer histories use the most recent `r` entries.
    pub inputs: Vec<f64>,
}

/// Evaluates an extended-state feedback `K(x, y_1, .., y_r)` as the measurement-delayed law
/// `u(t) = K(x(t-r), u(t-r), .., u(t-1))` for the delay-free plant.
pub fn measurement_delay_wrap<F>(feedback: F, history: &MeasurementHistory, delay: usize) -> Result<f64>
where
    F: Fn(&ExtendedState) -> f64,
{
    if history.inputs.len() < delay {
        return arg_err(format!(
            "insufficient history: need {delay} past inputs, have {}",
            history.inputs.len()
        ));
    }
    let recent = &history.inputs[history.inputs.len() - delay..];
    let z = ExtendedState::new(history.delayed_state.clone(), recent.to_vec());
    Ok(feedback(&z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrator(r: usize, a: f64) -> LinearPlant {
        LinearPlant::scalar_integrator(a, r).unwrap()
    }

    #[test]
    fn step_extended_scalar_examples() {
        let p = integrator(1, 0.5);
        let z = ExtendedState::new(DVector::from_element(1, 1.0), vec![-1.0]);
        let next = p.step_extended(&z, 0.0, 0.0).unwrap();
        assert_eq!(next.x[0], 0.0);
        assert_eq!(next.y, vec![0.0]);

        let p2 = integrator(2, 0.5);
        let z = ExtendedState::new(DVector::from_element(1, 1.0), vec![0.5, -0.25]);
        let next = p2.step_extended(&z, 0.1, 0.2).unwrap();
        assert!((next.x[0] - 1.7).abs() < 1e-15);
        assert_eq!(next.y, vec![-0.25, 0.1]);
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let p = integrator(3, 0.4);
        let z = ExtendedState::zeros(1, 3);
        for d in [-0.4, 0.0, 0.17, 0.4] {
            assert_eq!(p.step_extended(&z, 0.0, d).unwrap(), z);
        }
    }

    #[test]
    fn step_extended_without_delay_applies_input_directly() {
        let p = integrator(0, 1.0);
        let z = ExtendedState::new(DVector::from_element(1, 2.0), vec![]);
        let next = p.step_extended(&z, -1.5, 0.5).unwrap();
        assert!((next.x[0] - (2.0 - 1.5 + 1.0)).abs() < 1e-15);
        assert!(next.y.is_empty());
    }

    #[test]
    fn step_rejects_bad_arguments() {
        let p = integrator(2, 0.1);
        let z = ExtendedState::zeros(1, 2);
        assert!(matches!(p.step_extended(&z, 0.0, 0.2), Err(Error::Argument(_))));
        let short = ExtendedState::zeros(1, 1);
        assert!(matches!(p.step_extended(&short, 0.0, 0.0), Err(Error::Argument(_))));
        let buf: VecDeque<f64> = VecDeque::from(vec![0.0]);
        assert!(p.step_delayed(&z.x, &buf, 0.0, 0.0).is_err());
    }

    #[test]
    fn step_delayed_without_delay() {
        let p = integrator(0, 1.0);
        let x = DVector::from_element(1, 2.0);
        let (xn, buf) = p.step_delayed(&x, &VecDeque::new(), -1.5, 0.5).unwrap();
        assert!((xn[0] - 1.5).abs() < 1e-15);
        assert!(buf.is_empty());
        let zero = DVector::zeros(1);
        let (xz, _) = p.step_delayed(&zero, &VecDeque::new(), 0.0, 0.0).unwrap();
        assert_eq!(xz[0], 0.0);
    }

    #[test]
    fn predictor_of_scalar_integrator_is_partial_sum() {
        let p = integrator(4, 0.0);
        let z = ExtendedState::new(DVector::from_element(1, 0.3), vec![1.0, -2.0, 0.25, 4.0]);
        let mut partial = 0.3;
        assert_eq!(p.predictor_map(&z, 0).unwrap()[0], 0.3);
        for i in 1..=4 {
            partial += z.y[i - 1];
            assert!((p.predictor_map(&z, i).unwrap()[0] - partial).abs() < 1e-14);
        }
        assert!(p.predictor_map(&z, 5).is_err());
    }

    #[test]
    fn validate_scalar_deadbeat() {
        let ex = ScalarExamplePlant::deadbeat(0.0, 1).unwrap();
        let lam = validate_stabilizer(&ex.plant(), &ex.stabilizer()).unwrap();
        assert!(lam.abs() < 1e-15);
    }

    #[test]
    fn validate_zero_closed_loop() {
        let plant = LinearPlant::new(
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![1.0, 0.5]),
            DMatrix::identity(2, 2),
            0.0,
            0,
        )
        .unwrap();
        let stab = NominalStabilizer::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            0.0,
        )
        .unwrap();
        assert!(validate_stabilizer(&plant, &stab).unwrap().abs() < 1e-15);
    }

    #[test]
    fn stabilizer_rejects_indefinite_p() {
        let err = NominalStabilizer::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            0.1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("eigenvalue")));
    }

    #[test]
    fn checked_rejects_too_small_lambda() {
        let ex = ScalarExamplePlant::new(0.0, 0, 0.5).unwrap();
        let plant = ex.plant();
        let ok = NominalStabilizer::checked(&plant, DVector::from_element(1, -0.5), DMatrix::identity(1, 1), 0.25);
        assert!(ok.is_ok());
        let bad = NominalStabilizer::checked(&plant, DVector::from_element(1, -0.5), DMatrix::identity(1, 1), 0.2);
        assert!(matches!(bad, Err(Error::Validation(_))));
    }

    #[test]
    fn measurement_wrap_edge_cases() {
        let hist = MeasurementHistory { delayed_state: DVector::from_element(1, 3.0), inputs: vec![] };
        let u = measurement_delay_wrap(|z: &ExtendedState| -z.x[0], &hist, 0).unwrap();
        assert_eq!(u, -3.0);

        let zero = MeasurementHistory { delayed_state: DVector::zeros(1), inputs: vec![0.0, 0.0] };
        let u = measurement_delay_wrap(|z: &ExtendedState| -(z.x[0] + z.y.iter().sum::<f64>()), &zero, 2).unwrap();
        assert_eq!(u, 0.0);

        let short = MeasurementHistory { delayed_state: DVector::zeros(1), inputs: vec![0.0] };
        assert!(measurement_delay_wrap(|_: &ExtendedState| 0.0, &short, 2).is_err());
    }

    #[test]
    fn scalar_example_validation() {
        assert!(ScalarExamplePlant::new(0.1, 1, 2.0).is_err());
        assert!(ScalarExamplePlant::new(-0.1, 1, 1.0).is_err());
        let ex = ScalarExamplePlant::new(0.1, 2, 0.5).unwrap();
        assert!((ex.stabilizer().lambda() - 0.25).abs() < 1e-15);
    }
}

//! Scenario files: a JSON object with `plant`, `stabilizer`, optional `certificate` and
//! `simulation` blocks and a `feedback` selector.

use std::fmt;
use std::path::Path;

use delaypred_core::backstepping::BacksteppingCertificate;
use delaypred_core::model::{ExtendedState, LinearPlant, NominalStabilizer};
use delaypred_core::simulation::DisturbanceStrategy;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub plant: PlantBlock,
    pub stabilizer: StabilizerBlock,
    #[serde(default)]
    pub certificate: Option<CertificateBlock>,
    #[serde(default)]
    pub simulation: Option<SimulationBlock>,
    pub feedback: Feedback,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantBlock {
    #[serde(rename = "A")]
    pub a_matrix: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    pub a: f64,
    pub r: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizerBlock {
    pub k: Vec<f64>,
    /// Solved from `P - Acl'P Acl = I` when absent.
    #[serde(rename = "P", default)]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(default = "auto_validate")]
    pub lambda: Lambda,
}

fn auto_validate() -> Lambda {
    Lambda::Auto(AutoValidate::AutoValidate)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Lambda {
    Value(f64),
    Auto(AutoValidate),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoValidate {
    AutoValidate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateBlock {
    pub c: f64,
    pub phi: f64,
    #[serde(default = "auto_sigma")]
    pub sigma: Sigma,
}

fn auto_sigma() -> Sigma {
    Sigma::Auto(AutoSigma::Auto)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Value(f64),
    Auto(AutoSigma),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoSigma {
    Auto,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(rename = "T")]
    pub steps: usize,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Zero,
    Constant(f64),
    Random,
    Greedy,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Nominal,
    Redesigned,
    ScalarRedesign { q: f64 },
}

/// A load or validation failure, reported with exit code 2.
#[derive(Debug)]
pub struct ScenarioError(pub String);

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError(msg.into()))
}

/// Validated scenario.
#[derive(Debug)]
pub struct Scenario {
    pub plant: LinearPlant,
    pub stab: NominalStabilizer,
    /// `sigma` is 0 when the file asks for `"auto"`.
    pub cert: BacksteppingCertificate,
    pub auto_sigma: bool,
    pub simulation: Option<Simulation>,
    pub feedback: Feedback,
}

#[derive(Debug)]
pub struct Simulation {
    pub steps: usize,
    pub z0: ExtendedState,
    pub strategy: DisturbanceStrategy,
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, ScenarioError> {
    let n = rows.len();
    if n == 0 {
        return err(format!("{field}: matrix is empty"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != rows[0].len() {
            return err(format!("{field}[{i}]: row has {} entries, expected {}", row.len(), rows[0].len()));
        }
    }
    Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
}

fn field<T>(res: delaypred_core::Result<T>, name: &str) -> Result<T, ScenarioError> {
    res.map_err(|e| ScenarioError(format!("{name}: {e}")))
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        ScenarioError(format!("{}: {} (line {}, column {})", e.path(), inner, inner.line(), inner.column()))
    })?;
    build(file)
}

fn build(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let pb = &file.plant;
    let plant = field(
        LinearPlant::new(
            matrix(&pb.a_matrix, "plant.A")?,
            DVector::from_vec(pb.b.clone()),
            matrix(&pb.g, "plant.G")?,
            pb.a,
            pb.r,
        ),
        "plant",
    )?;
    let n = plant.dim();
    let sb = &file.stabilizer;
    if sb.k.len() != n {
        return err(format!("stabilizer.k: length {} does not match plant dimension {n}", sb.k.len()));
    }
    let k = DVector::from_vec(sb.k.clone());
    let stab = match (&sb.p, &sb.lambda) {
        (None, Lambda::Auto(_)) => field(NominalStabilizer::from_gain(&plant, k), "stabilizer")?,
        (None, Lambda::Value(l)) => {
            let p = field(NominalStabilizer::from_gain(&plant, k.clone()), "stabilizer")?.p().clone();
            field(NominalStabilizer::checked(&plant, k, p, *l), "stabilizer.lambda")?
        }
        (Some(p), Lambda::Auto(_)) => field(NominalStabilizer::auto(&plant, k, matrix(p, "stabilizer.P")?), "stabilizer")?,
        (Some(p), Lambda::Value(l)) => {
            field(NominalStabilizer::checked(&plant, k, matrix(p, "stabilizer.P")?, *l), "stabilizer")?
        }
    };
    let (cert, auto_sigma) = match &file.certificate {
        Some(cb) => {
            let (sigma, auto) = match cb.sigma {
                Sigma::Value(s) => (s, false),
                Sigma::Auto(_) => (0.0, true),
            };
            (field(BacksteppingCertificate::relaxed(cb.c, cb.phi, sigma, stab.lambda()), "certificate")?, auto)
        }
        None => {
            let c = 2.0 / (1.0 - stab.lambda());
            (field(BacksteppingCertificate::new(c, 1.0, 0.0, stab.lambda()), "certificate")?, true)
        }
    };
    if let Feedback::ScalarRedesign { q } = file.feedback {
        let unit = |m: &DMatrix<f64>| m.shape() == (1, 1) && m[(0, 0)] == 1.0;
        if !(unit(plant.a()) && plant.b()[0] == 1.0 && unit(plant.g()) && plant.delay() == 1) {
            return err("feedback.scalar_redesign: plant must be the scalar integrator A = B = G = 1 with r = 1");
        }
        if !(q > 0.0 && q.is_finite()) {
            return err(format!("feedback.scalar_redesign.q: must be positive, got {q}"));
        }
    }
    let simulation = match file.simulation {
        None => None,
        Some(s) => {
            if s.x0.len() != n {
                return err(format!("simulation.x0: length {} does not match plant dimension {n}", s.x0.len()));
            }
            if s.y0.len() != plant.delay() {
                return err(format!("simulation.y0: length {} does not match delay {}", s.y0.len(), plant.delay()));
            }
            let strategy = match s.strategy {
                Strategy::Zero => DisturbanceStrategy::Zero,
                Strategy::Constant(d) => {
                    if !(d.abs() <= plant.bound()) {
                        return err(format!("simulation.strategy.constant: |{d}| exceeds plant.a = {}", plant.bound()));
                    }
                    DisturbanceStrategy::Constant(d)
                }
                Strategy::Random => DisturbanceStrategy::UniformRandom { seed: s.seed },
                Strategy::Greedy => DisturbanceStrategy::GreedyAdversary,
            };
            if s.steps == 0 {
                return err("simulation.T: must be at least 1");
            }
            let z0 = ExtendedState::new(DVector::from_vec(s.x0), s.y0);
            Some(Simulation { steps: s.steps, z0, strategy })
        }
    };
    Ok(Scenario { plant, stab, cert, auto_sigma, simulation, feedback: file.feedback })
}

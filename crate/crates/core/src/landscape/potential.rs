//! Analytic potentials with closed-form gradient and Hessian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::LandscapeError;
use crate::grid::BoxDomain;

/// One term `coefficient * prod_k xi_k^powers[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coefficient: f64,
    pub powers: Vec<u32>,
}

/// An inverted Gaussian well `-depth * exp(-|xi - center|^2 / (2 width^2))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianWell {
    pub center: Vec<f64>,
    pub depth: f64,
    pub width: f64,
}

/// Potential description as it appears in a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Either `coefficients` (1-d, ascending powers) or general `terms`.
    Polynomial {
        dimension: usize,
        #[serde(default)]
        coefficients: Option<Vec<f64>>,
        #[serde(default)]
        terms: Option<Vec<Monomial>>,
    },
    /// Wells plus the confinement `quadratic/2 |xi|^2 + quartic/4 |xi|^4`.
    GaussianWells {
        dimension: usize,
        wells: Vec<GaussianWell>,
        #[serde(default)]
        quadratic: f64,
        #[serde(default)]
        quartic: f64,
    },
    Builtin { name: String },
}

#[derive(Clone, Debug, PartialEq)]
enum Form {
    Polynomial(Vec<Monomial>),
    Gaussian { wells: Vec<GaussianWell>, quadratic: f64, quartic: f64 },
    Asym2d,
}

/// A smooth potential on `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    dim: usize,
    form: Form,
    shift: f64,
    name: String,
}

/// Value, gradient and Hessian at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

pub const BUILTINS: &[&str] = &["double_well", "triple_well", "asym2d", "double_well_2d", "harmonic", "harmonic_2d"];

fn mono(coefficient: f64, powers: &[u32]) -> Monomial {
    Monomial { coefficient, powers: powers.to_vec() }
}

impl Potential {
    pub fn polynomial(dim: usize, terms: Vec<Monomial>) -> Result<Self, LandscapeError> {
        if dim == 0 {
            return Err(LandscapeError::InvalidPotential("dimension must be positive".into()));
        }
        for t in &terms {
            if t.powers.len() != dim {
                return Err(LandscapeError::InvalidPotential(format!(
                    "monomial has {} exponents, expected {dim}",
                    t.powers.len()
                )));
            }
            if !t.coefficient.is_finite() {
                return Err(LandscapeError::InvalidPotential("non-finite coefficient".into()));
            }
        }
        Ok(Self { dim, form: Form::Polynomial(terms), shift: 0.0, name: "polynomial".into() })
    }

    /// 1-d polynomial `sum_k c_k xi^k`.
    pub fn polynomial_1d(coefficients: &[f64]) -> Result<Self, LandscapeError> {
        let terms = coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, &c)| mono(c, &[k as u32]))
            .collect();
        Self::polynomial(1, terms)
    }

    pub fn gaussian_wells(dim: usize, wells: Vec<GaussianWell>, quadratic: f64, quartic: f64) -> Result<Self, LandscapeError> {
        if dim == 0 || wells.iter().any(|w| w.center.len() != dim || !(w.width > 0.0)) {
            return Err(LandscapeError::InvalidPotential("malformed Gaussian well".into()));
        }
        if quadratic < 0.0 || quartic < 0.0 || (quadratic == 0.0 && quartic == 0.0) {
            return Err(LandscapeError::InvalidPotential("confinement must be nonnegative and not identically zero".into()));
        }
        Ok(Self {
            dim,
            form: Form::Gaussian { wells, quadratic, quartic },
            shift: 0.0,
            name: "gaussian_wells".into(),
        })
    }

    pub fn builtin(name: &str) -> Result<Self, LandscapeError> {
        let mut p = match name {
            "double_well" => Self::polynomial_1d(&[0.25, 0.0, -0.5, 0.0, 0.25])?,
            "triple_well" => Self::polynomial_1d(&[0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0])?,
            "harmonic" => Self::polynomial_1d(&[0.0, 0.0, 0.5])?,
            "double_well_2d" => Self::polynomial(
                2,
                vec![mono(0.25, &[0, 0]), mono(-0.5, &[2, 0]), mono(0.25, &[4, 0]), mono(0.5, &[0, 2])],
            )?,
            "harmonic_2d" => Self::polynomial(2, vec![mono(0.5, &[2, 0]), mono(0.5, &[0, 2])])?,
            "asym2d" => Self { dim: 2, form: Form::Asym2d, shift: 0.0, name: String::new() },
            other => {
                return Err(LandscapeError::InvalidPotential(format!(
                    "unknown builtin `{other}` (known: {})",
                    BUILTINS.join(", ")
                )))
            }
        };
        p.name = name.to_string();
        Ok(p)
    }

    pub fn from_spec(spec: &PotentialSpec) -> Result<Self, LandscapeError> {
        match spec {
            PotentialSpec::Builtin { name } => Self::builtin(name),
            PotentialSpec::Polynomial { dimension, coefficients, terms } => match (coefficients, terms) {
                (Some(c), None) if *dimension == 1 => Self::polynomial_1d(c),
                (Some(_), None) => Err(LandscapeError::InvalidPotential(
                    "`coefficients` is only valid for dimension 1; use `terms`".into(),
                )),
                (None, Some(t)) => Self::polynomial(*dimension, t.clone()),
                _ => Err(LandscapeError::InvalidPotential(
                    "give exactly one of `coefficients` or `terms`".into(),
                )),
            },
            PotentialSpec::GaussianWells { dimension, wells, quadratic, quartic } => {
                Self::gaussian_wells(*dimension, wells.clone(), *quadratic, *quartic)
            }
        }
    }

    /// Suggested truncation box for the builtins.
    pub fn default_box(&self) -> Option<BoxDomain> {
        match self.name.as_str() {
            "double_well" => Some(BoxDomain::interval(-2.0, 2.0)),
            "triple_well" => Some(BoxDomain::interval(-1.6, 1.6)),
            "harmonic" => Some(BoxDomain::interval(-3.0, 3.0)),
            "double_well_2d" => Some(BoxDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0])),
            "harmonic_2d" => Some(BoxDomain::new(vec![-3.0, -3.0], vec![3.0, 3.0])),
            "asym2d" => Some(BoxDomain::new(vec![-2.5, -3.0], vec![2.5, 3.0])),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The same potential plus a constant.
    pub fn shifted(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.shift += c;
        p
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.shift
            + match &self.form {
                Form::Polynomial(terms) => terms.iter().map(|t| t.coefficient * monomial(x, &t.powers)).sum(),
                Form::Gaussian { wells, quadratic, quartic } => {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    let wells: f64 = wells
                        .iter()
                        .map(|w| {
                            let d2: f64 = x.iter().zip(&w.center).map(|(a, c)| (a - c).powi(2)).sum();
                            -w.depth * (-d2 / (2.0 * w.width * w.width)).exp()
                        })
                        .sum();
                    wells + 0.5 * quadratic * r2 + 0.25 * quartic * r2 * r2
                }
                Form::Asym2d => {
                    let (a, b) = (x[0], x[1]);
                    0.25 * (a * a - 1.0).powi(2) + 0.5 * (0.5 * a).exp() * b * b
                }
            }
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim;
        match &self.form {
            Form::Polynomial(terms) => DVector::from_fn(d, |k, _| {
                terms
                    .iter()
                    .filter(|t| t.powers[k] > 0)
                    .map(|t| {
                        let mut p = t.powers.clone();
                        let c = t.coefficient * p[k] as f64;
                        p[k] -= 1;
                        c * monomial(x, &p)
                    })
                    .sum()
            }),
            Form::Gaussian { wells, quadratic, quartic } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let mut g = DVector::from_fn(d, |k, _| (quadratic + quartic * r2) * x[k]);
                for w in wells {
                    let s2 = w.width * w.width;
                    let d2: f64 = x.iter().zip(&w.center).map(|(a, c)| (a - c).powi(2)).sum();
                    let e = w.depth * (-d2 / (2.0 * s2)).exp() / s2;
                    for k in 0..d {
                        g[k] += e * (x[k] - w.center[k]);
                    }
                }
                g
            }
            Form::Asym2d => {
                let (a, b) = (x[0], x[1]);
                let e = (0.5 * a).exp();
                DVector::from_vec(vec![a * (a * a - 1.0) + 0.25 * e * b * b, e * b])
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.form {
            Form::Polynomial(terms) => DMatrix::from_fn(d, d, |k, l| {
                terms
                    .iter()
                    .map(|t| {
                        let mut p = t.powers.clone();
                        if p[k] == 0 {
                            return 0.0;
                        }
                        let mut c = t.coefficient * p[k] as f64;
                        p[k] -= 1;
                        if p[l] == 0 {
                            return 0.0;
                        }
                        c *= p[l] as f64;
                        p[l] -= 1;
                        c * monomial(x, &p)
                    })
                    .sum()
            }),
            Form::Gaussian { wells, quadratic, quartic } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let mut h = DMatrix::from_fn(d, d, |k, l| {
                    let diag = if k == l { quadratic + quartic * r2 } else { 0.0 };
                    diag + 2.0 * quartic * x[k] * x[l]
                });
                for w in wells {
                    let s2 = w.width * w.width;
                    let d2: f64 = x.iter().zip(&w.center).map(|(a, c)| (a - c).powi(2)).sum();
                    let e = w.depth * (-d2 / (2.0 * s2)).exp() / s2;
                    for k in 0..d {
                        for l in 0..d {
                            let dk = x[k] - w.center[k];
                            let dl = x[l] - w.center[l];
                            h[(k, l)] += e * ((if k == l { 1.0 } else { 0.0 }) - dk * dl / s2);
                        }
                    }
                }
                h
            }
            Form::Asym2d => {
                let (a, b) = (x[0], x[1]);
                let e = (0.5 * a).exp();
                DMatrix::from_row_slice(2, 2, &[3.0 * a * a - 1.0 + 0.125 * e * b * b, 0.5 * e * b, 0.5 * e * b, e])
            }
        }
    }

    /// Value, gradient and Hessian; rejects non-finite output.
    pub fn eval(&self, x: &[f64]) -> Result<Evaluation, LandscapeError> {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return Err(LandscapeError::PotentialOverflow { at: x.to_vec() });
        }
        let ev = Evaluation { value: self.value(x), gradient: self.gradient(x), hessian: self.hessian(x) };
        if !ev.value.is_finite() || ev.gradient.iter().any(|v| !v.is_finite()) || ev.hessian.iter().any(|v| !v.is_finite()) {
            return Err(LandscapeError::PotentialOverflow { at: x.to_vec() });
        }
        Ok(ev)
    }
}

fn monomial(x: &[f64], powers: &[u32]) -> f64 {
    x.iter().zip(powers).map(|(v, &p)| v.powi(p as i32)).product()
}

//! Spatial diffusion coefficient a(x) on the macroscopic interval.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionField {
    Zero,
    Constant { value: f64 },
    /// `base + amplitude * sin(pi x / length)`.
    Sine { base: f64, amplitude: f64, length: f64 },
}

impl Default for DiffusionField {
    fn default() -> Self {
        DiffusionField::Zero
    }
}

impl DiffusionField {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DiffusionField::Zero => 0.0,
            DiffusionField::Constant { value } => value,
            DiffusionField::Sine { base, amplitude, length } => {
                base + amplitude * (std::f64::consts::PI * x / length).sin()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            DiffusionField::Zero => true,
            DiffusionField::Constant { value } => value == 0.0,
            DiffusionField::Sine { base, amplitude, .. } => base == 0.0 && amplitude == 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, DiffusionField::Sine { amplitude, .. } if *amplitude != 0.0)
    }

    /// Upper bound of a on [0, length].
    pub fn max_value(&self) -> f64 {
        match *self {
            DiffusionField::Zero => 0.0,
            DiffusionField::Constant { value } => value,
            DiffusionField::Sine { base, amplitude, .. } => base + amplitude.abs(),
        }
    }

    /// Lower bound of a on [0, length].
    pub fn min_value(&self) -> f64 {
        match *self {
            DiffusionField::Zero => 0.0,
            DiffusionField::Constant { value } => value,
            DiffusionField::Sine { base, amplitude, .. } => base + amplitude.min(0.0),
        }
    }
}

//! Domain types for axisymmetric models: phase-space points, potential
//! conventions, density expansions in potential and radius, and the model
//! file schema.
//!
//! A density expansion is a finite sum of terms
//! `coeff(psi) * R^(2 n beta)` (pure-radial family) and
//! `coeff(psi) * R^(2 n beta) / (1 + R^2/R_a^2)^(n beta + 1/2)` (scaled-radial
//! family). The admissibility condition `n * beta > -1` must hold for every
//! term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::CoefficientFunction;

/// Default gravitational constant; tests and bundled models are unit-free.
pub const DEFAULT_GRAV: f64 = 1.0;

/// A point of phase space in cylindrical coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub radius: f64,
    pub height: f64,
    pub v_r: f64,
    pub v_phi: f64,
    pub v_z: f64,
}

impl PhasePoint {
    pub fn new(radius: f64, height: f64, v_r: f64, v_phi: f64, v_z: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::Domain(format!("radius must be >= 0, got {radius}")));
        }
        Ok(PhasePoint {
            radius,
            height,
            v_r,
            v_phi,
            v_z,
        })
    }

    /// Angular momentum about the symmetry axis, R * v_phi (0 on the axis).
    pub fn angular_momentum_z(&self) -> f64 {
        self.radius * self.v_phi
    }

    pub fn speed_squared(&self) -> f64 {
        self.v_r * self.v_r + self.v_phi * self.v_phi + self.v_z * self.v_z
    }
}

/// Relative energy of a star at a point with relative potential `psi`.
/// Values <= 0 lie outside the system.
pub fn relative_energy(point: &PhasePoint, psi: f64) -> Result<f64> {
    if !(psi >= 0.0) {
        return Err(Error::Domain(format!(
            "relative potential must be >= 0, got {psi}"
        )));
    }
    Ok(psi - 0.5 * point.speed_squared())
}

/// Sign convention of the potential.
///
/// * `RelativeBounded`: the relative potential psi = -Phi + Phi0 is
///   non-negative on the configuration domain and stars exist for relative
///   energy eps > 0.
/// * `UnboundedRising`: the potential Phi rises without bound at large
///   distances and stars exist for E > 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PotentialConvention {
    RelativeBounded { offset: f64 },
    UnboundedRising,
}

impl PotentialConvention {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialConvention::RelativeBounded { .. } => "relative-bounded",
            PotentialConvention::UnboundedRising => "unbounded-rising",
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, PotentialConvention::RelativeBounded { .. })
    }
}

/// Radial family of an expansion term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermFamily {
    PureRadial,
    ScaledRadial,
}

/// One expansion term: coeff(psi) times the family's radial factor with
/// exponent 2 n beta.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionTerm {
    pub family: TermFamily,
    pub index: u32,
    pub beta: f64,
    pub coeff: CoefficientFunction,
}

impl ExpansionTerm {
    /// n * beta, the half radial exponent.
    pub fn n_beta(&self) -> f64 {
        self.index as f64 * self.beta
    }

    pub fn radial_exponent(&self) -> f64 {
        2.0 * self.n_beta()
    }
}

/// A density expansion plus the scaling radius required by scaled-radial terms.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityExpansion {
    pub terms: Vec<ExpansionTerm>,
    pub scaling_radius: Option<f64>,
}

impl DensityExpansion {
    pub fn new(terms: Vec<ExpansionTerm>, scaling_radius: Option<f64>) -> Result<Self> {
        let expansion = DensityExpansion {
            terms,
            scaling_radius,
        };
        expansion.validate()?;
        Ok(expansion)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, term) in self.terms.iter().enumerate() {
            if !term.beta.is_finite() {
                return Err(Error::Parse(format!("term {i}: beta must be finite")));
            }
            if term.n_beta() <= -1.0 {
                return Err(Error::Admissibility {
                    index: i,
                    n_beta: term.n_beta(),
                });
            }
        }
        let needs_ra = self
            .terms
            .iter()
            .any(|t| t.family == TermFamily::ScaledRadial);
        match self.scaling_radius {
            Some(ra) if !(ra > 0.0) => {
                return Err(Error::Parse(format!("R_a must be positive, got {ra}")));
            }
            None if needs_ra => return Err(Error::MissingScalingRadius),
            _ => {}
        }
        Ok(())
    }

    pub fn max_index(&self) -> u32 {
        self.terms.iter().map(|t| t.index).max().unwrap_or(0)
    }

    /// Evaluate the expansion at (psi, R). The value may be negative;
    /// positivity is a model property checked elsewhere.
    pub fn eval(&self, psi: f64, radius: f64) -> Result<f64> {
        if !(psi >= 0.0) {
            return Err(Error::Domain(format!(
                "potential argument must be >= 0, got {psi}"
            )));
        }
        if !(radius >= 0.0) {
            return Err(Error::Domain(format!("radius must be >= 0, got {radius}")));
        }
        let mut total = 0.0;
        for term in &self.terms {
            let exponent = term.radial_exponent();
            if radius == 0.0 && exponent < 0.0 {
                return Err(Error::Domain(
                    "R = 0 with a negative radial exponent".into(),
                ));
            }
            let radial = if exponent == 0.0 {
                1.0
            } else {
                radius.powf(exponent)
            };
            let scale = match term.family {
                TermFamily::PureRadial => radial,
                TermFamily::ScaledRadial => {
                    let ra = self.scaling_radius.ok_or(Error::MissingScalingRadius)?;
                    let base = 1.0 + (radius / ra) * (radius / ra);
                    radial / base.powf(term.n_beta() + 0.5)
                }
            };
            total += term.coeff.eval(psi) * scale;
        }
        Ok(total)
    }

    /// Concatenation of two expansions (densities add).
    pub fn concat(&self, other: &DensityExpansion) -> Result<DensityExpansion> {
        if self.scaling_radius.is_some()
            && other.scaling_radius.is_some()
            && self.scaling_radius != other.scaling_radius
        {
            return Err(Error::Parse(
                "cannot concatenate expansions with different R_a".into(),
            ));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        DensityExpansion::new(terms, self.scaling_radius.or(other.scaling_radius))
    }
}

/// A fully validated model: convention, gravitational constant and expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDefinition {
    pub convention: PotentialConvention,
    pub grav: f64,
    pub expansion: DensityExpansion,
}

/// Evaluate a model's density expansion at (psi, R).
pub fn eval_density(expansion: &DensityExpansion, psi: f64, radius: f64) -> Result<f64> {
    expansion.eval(psi, radius)
}

// ---------------------------------------------------------------------------
// Model file schema (TOML: key/value pairs plus arrays of terms)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    convention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(default = "default_grav")]
    #[serde(rename = "G")]
    grav: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[serde(rename = "R_a")]
    scaling_radius: Option<f64>,
    terms: Vec<TermFile>,
}

#[derive(Serialize, Deserialize)]
struct TermFile {
    family: TermFamily,
    n: u32,
    #[serde(default = "default_beta")]
    beta: f64,
    coeff: CoefficientFunction,
}

fn default_grav() -> f64 {
    DEFAULT_GRAV
}

fn default_beta() -> f64 {
    1.0
}

/// Parse a model specification document. See the README for the schema.
pub fn parse_model_spec(text: &str) -> Result<ModelDefinition> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let convention = match file.convention.as_str() {
        "relative-bounded" => PotentialConvention::RelativeBounded {
            offset: file.offset.unwrap_or(0.0),
        },
        "unbounded-rising" => {
            if file.offset.is_some() {
                return Err(Error::Parse(
                    "field `offset` only applies to the relative-bounded convention".into(),
                ));
            }
            PotentialConvention::UnboundedRising
        }
        other => {
            return Err(Error::Parse(format!(
                "field `convention`: expected \"relative-bounded\" or \"unbounded-rising\", got \"{other}\""
            )))
        }
    };
    if !(file.grav > 0.0) {
        return Err(Error::Parse(format!(
            "field `G` must be positive, got {}",
            file.grav
        )));
    }
    let terms = file
        .terms
        .into_iter()
        .map(|t| ExpansionTerm {
            family: t.family,
            index: t.n,
            beta: t.beta,
            coeff: t.coeff,
        })
        .collect();
    let expansion = DensityExpansion::new(terms, file.scaling_radius)?;
    Ok(ModelDefinition {
        convention,
        grav: file.grav,
        expansion,
    })
}

/// Serialize a model back to the file schema. Inverse of [`parse_model_spec`].
pub fn serialize_model_spec(model: &ModelDefinition) -> Result<String> {
    let (convention, offset) = match model.convention {
        PotentialConvention::RelativeBounded { offset } => (
            "relative-bounded".to_string(),
            if offset != 0.0 { Some(offset) } else { None },
        ),
        PotentialConvention::UnboundedRising => ("unbounded-rising".to_string(), None),
    };
    let file = ModelFile {
        convention,
        offset,
        grav: model.grav,
        scaling_radius: model.expansion.scaling_radius,
        terms: model
            .expansion
            .terms
            .iter()
            .map(|t| TermFile {
                family: t.family,
                n: t.index,
                beta: t.beta,
                coeff: t.coeff.clone(),
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
}

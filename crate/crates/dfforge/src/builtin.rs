//! Ready-made model bundles: the logarithmic (Binney) model, the finite-mass
//! flattened (Lynden-Bell) model, and the separable power-law (Fricke-type)
//! family. Each bundle carries the analytic potential where one exists, the
//! density expansion, and enough structure to synthesize and verify its DF.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Atom, AtomSum, CoefficientFunction};
use crate::model::{
    DensityExpansion, ExpansionTerm, ModelDefinition, PotentialConvention, TermFamily, DEFAULT_GRAV,
};
use crate::quad::QuadContext;
use crate::special::gamma;
use crate::synthesis::{
    binney_odd_df, dejonghe_powerlaw_component, synthesize, ArgumentKind, DfTerm,
    DistributionFunction, EnergyFn, Parity, SynthesisRequest, Variant,
};
use crate::verify::ScanStation;

/// Logarithmic model parameters: circular velocity at large R and axial
/// ratio of the equipotentials. The density is non-negative everywhere iff
/// q >= 1/sqrt(2); the model is flattened for 1 > q >= 1/sqrt(2) and
/// spherical at q = 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinneyParams {
    pub v0: f64,
    pub q: f64,
}

impl Default for BinneyParams {
    fn default() -> Self {
        BinneyParams { v0: 1.0, q: 0.9 }
    }
}

/// Flattening parameter of the finite-mass model; psi(0, 0) = 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyndenBellParams {
    pub a: f64,
}

impl Default for LyndenBellParams {
    fn default() -> Self {
        LyndenBellParams { a: 0.5 }
    }
}

/// Separable power-law family psi^p R^(2n) / (1 + R^2)^(n + 1/2), p - n > 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrickeParams {
    pub p: f64,
    pub n: u32,
}

impl Default for FrickeParams {
    fn default() -> Self {
        FrickeParams { p: 2.5, n: 0 }
    }
}

/// Analytic potential of a bundle, evaluated at (R, z).
#[derive(Clone, Copy, Debug)]
pub enum Potential {
    /// Phi = (v0^2/2) ln(1 + R^2 + z^2/q^2), rising without bound.
    Logarithmic { v0: f64, q: f64 },
    /// psi = [(R^2 + z^2 + 1)^2 + a R^2]^(-1/4), a relative potential.
    FiniteMass { a: f64 },
}

impl Potential {
    pub fn eval(&self, radius: f64, height: f64) -> f64 {
        match *self {
            Potential::Logarithmic { v0, q } => {
                0.5 * v0 * v0 * (1.0 + radius * radius + height * height / (q * q)).ln()
            }
            Potential::FiniteMass { a } => {
                let s = radius * radius + height * height + 1.0;
                (s * s + a * radius * radius).powf(-0.25)
            }
        }
    }
}

/// A model bundle: named definition, synthesis variant, analytic potential
/// when available.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub name: String,
    pub definition: ModelDefinition,
    pub variant: Variant,
    pub potential: Option<Potential>,
}

impl ModelBundle {
    /// Synthesize the even DF of this bundle.
    pub fn synthesize(&self, quad: Arc<QuadContext>) -> Result<DistributionFunction> {
        let req = SynthesisRequest::new(
            self.definition.expansion.clone(),
            self.definition.convention,
            self.variant,
        );
        synthesize(&req, quad)
    }

    /// Density at a configuration-space point, through the analytic potential.
    pub fn density_at(&self, radius: f64, height: f64) -> Result<f64> {
        let pot = self
            .potential
            .ok_or_else(|| {
                Error::UnsupportedParameters(format!("{} has no analytic potential", self.name))
            })?
            .eval(radius, height);
        self.definition.expansion.eval(pot, radius)
    }

    /// Default verification stations: representative radii in the equatorial
    /// plane, using the analytic potential where there is one and a unit
    /// relative potential otherwise.
    pub fn default_stations(&self) -> Vec<ScanStation> {
        self.stations_at(&[0.5, 1.0, 2.0])
    }

    /// Positivity-scan stations: a wider radius range, since negative DF
    /// regions can sit at larger radii than the round-trip samples.
    pub fn scan_stations(&self) -> Vec<ScanStation> {
        self.stations_at(&[0.5, 1.0, 2.0, 4.0, 8.0])
    }

    fn stations_at(&self, radii: &[f64]) -> Vec<ScanStation> {
        radii
            .iter()
            .map(|&radius| ScanStation {
                radius,
                pot: self.potential.map(|p| p.eval(radius, 0.0)).unwrap_or(1.0),
            })
            .collect()
    }
}

/// The logarithmic-model bundle. The density expansion groups the closed-form
/// density by powers of R^2 with exponential coefficient functions of Phi:
///
/// ```text
/// rho(Phi, R) = A [2 e^(-4 Phi/v0^2) + (2 q^2 - 1) e^(-2 Phi/v0^2)]
///             + A [2 (1 - q^2) e^(-4 Phi/v0^2)] R^2,    A = v0^2/(4 pi G q^2)
/// ```
pub fn binney_bundle(params: BinneyParams) -> Result<ModelBundle> {
    binney_bundle_with_grav(params, DEFAULT_GRAV)
}

pub fn binney_bundle_with_grav(params: BinneyParams, grav: f64) -> Result<ModelBundle> {
    let BinneyParams { v0, q } = params;
    if !(q > 0.0) || !(v0 > 0.0) || !(grav > 0.0) {
        return Err(Error::UnsupportedParameters(format!(
            "logarithmic model requires v0, q, G > 0 (got v0 = {v0}, q = {q}, G = {grav})"
        )));
    }
    let a = v0 * v0 / (4.0 * std::f64::consts::PI * grav * q * q);
    let k4 = 4.0 / (v0 * v0);
    let k2 = 2.0 / (v0 * v0);
    let n0 = AtomSum::new(vec![
        Atom {
            c: 2.0 * a,
            p: 0.0,
            k: k4,
        },
        Atom {
            c: (2.0 * q * q - 1.0) * a,
            p: 0.0,
            k: k2,
        },
    ])?;
    let n1 = AtomSum::exponential(2.0 * (1.0 - q * q) * a, k4);
    let mut terms = vec![ExpansionTerm {
        family: TermFamily::PureRadial,
        index: 0,
        beta: 1.0,
        coeff: CoefficientFunction::Atoms(n0),
    }];
    if !n1.is_zero() {
        // Vanishes in the spherical case q = 1.
        terms.push(ExpansionTerm {
            family: TermFamily::PureRadial,
            index: 1,
            beta: 1.0,
            coeff: CoefficientFunction::Atoms(n1),
        });
    }
    Ok(ModelBundle {
        name: format!("binney:v0={v0},q={q}"),
        definition: ModelDefinition {
            convention: PotentialConvention::UnboundedRising,
            grav,
            expansion: DensityExpansion::new(terms, None)?,
        },
        variant: Variant::UnboundedEpsilon,
        potential: Some(Potential::Logarithmic { v0, q }),
    })
}

/// Odd DF factory for the logarithmic model under the rotation law
/// v* R^(2(n+1)) / (R*^2 + R^2)^(n+1).
pub fn binney_odd_factory(
    params: BinneyParams,
    grav: f64,
    law_index: u32,
    v_star: f64,
    r_star: f64,
    quad: Arc<QuadContext>,
) -> DistributionFunction {
    binney_odd_df(law_index, v_star, r_star, params.v0, params.q, grav, quad)
}

/// The even DF of the logarithmic model exactly as printed in the source the
/// expansion was taken from:
///
/// ```text
/// f = 1/(4 pi G q^2 v0^3) { 2^(9/2) [(1-q^2) L_z^2 + 2^(5/2) v0^2] e^(-4E/v0^2)
///                           + (2q^2 - 1) v0^2 e^(-2E/v0^2) }
/// ```
///
/// The bracket mixes L_z^2 with v0^2 and is dimensionally inhomogeneous, and
/// its constants do not reproduce the model density under the fundamental
/// integral; the transcription is kept for reference only and is excluded
/// from verification. Use [`ModelBundle::synthesize`] for the working DF.
pub fn binney_printed_df(
    params: BinneyParams,
    grav: f64,
    quad: Arc<QuadContext>,
) -> DistributionFunction {
    let BinneyParams { v0, q } = params;
    let front = 1.0 / (4.0 * std::f64::consts::PI * grav * q * q * v0.powi(3));
    let k4 = 4.0 / (v0 * v0);
    let k2 = 2.0 / (v0 * v0);
    let term = |lz_power: f64, coeff: f64, rate: f64| DfTerm {
        lz_power,
        lz_gauss_rate: 0.0,
        parity: Parity::Even,
        argument: ArgumentKind::EnergyE,
        energy_fn: EnergyFn::Atoms(AtomSum::exponential(coeff, rate)),
        energy_decay: rate,
        energy_zero_exponent: 0.0,
    };
    DistributionFunction::new(
        vec![
            term(2.0, front * 2f64.powf(4.5) * (1.0 - q * q), k4),
            term(0.0, front * 2f64.powf(4.5) * 2f64.powf(2.5) * v0 * v0, k4),
            term(0.0, front * (2.0 * q * q - 1.0) * v0 * v0, k2),
        ],
        PotentialConvention::UnboundedRising,
        None,
        quad,
    )
}

/// The finite-mass-model bundle:
///
/// ```text
/// rho(psi, R) = (3 + a)/(4 pi G) psi^5 - 5 a (1 + a/4)/(4 pi G) psi^9 R^2
/// ```
pub fn lyndenbell_bundle(params: LyndenBellParams) -> Result<ModelBundle> {
    lyndenbell_bundle_with_grav(params, DEFAULT_GRAV)
}

pub fn lyndenbell_bundle_with_grav(params: LyndenBellParams, grav: f64) -> Result<ModelBundle> {
    let LyndenBellParams { a } = params;
    if !(a >= 0.0) || !(grav > 0.0) {
        return Err(Error::UnsupportedParameters(format!(
            "finite-mass model requires a >= 0 and G > 0 (got a = {a}, G = {grav})"
        )));
    }
    let four_pi_g = 4.0 * std::f64::consts::PI * grav;
    let mut terms = vec![ExpansionTerm {
        family: TermFamily::PureRadial,
        index: 0,
        beta: 1.0,
        coeff: CoefficientFunction::Atoms(AtomSum::power((3.0 + a) / four_pi_g, 5.0)),
    }];
    if a != 0.0 {
        terms.push(ExpansionTerm {
            family: TermFamily::PureRadial,
            index: 1,
            beta: 1.0,
            coeff: CoefficientFunction::Atoms(AtomSum::power(
                -5.0 * a * (1.0 + a / 4.0) / four_pi_g,
                9.0,
            )),
        });
    }
    Ok(ModelBundle {
        name: format!("lyndenbell:a={a}"),
        definition: ModelDefinition {
            convention: PotentialConvention::RelativeBounded { offset: 0.0 },
            grav,
            expansion: DensityExpansion::new(terms, None)?,
        },
        variant: Variant::EpsilonForm,
        potential: Some(Potential::FiniteMass { a }),
    })
}

/// The printed closed-form DF coefficients of the finite-mass model, as exact
/// rationals times the (2^(3/2) pi^2)^(-1) front factor:
/// `c0 = 2^7 (3+a)/7` on eps^(7/2) and `c1 = -15 a (4+a) 2^12 / 143` on
/// eps^(13/2) L_z^2.
///
/// These coefficients correspond to the density with the 1/(4 pi G) factor
/// stripped, i.e. to 4 pi G rho; multiply a DF synthesized from the physical
/// expansion by 4 pi G before comparing.
pub fn lyndenbell_printed_coefficients(a: f64) -> (f64, f64) {
    let front = 1.0 / (2f64.powf(1.5) * std::f64::consts::PI.powi(2));
    let c0 = 2f64.powi(7) * (3.0 + a) / 7.0;
    let c1 = -15.0 * a * (4.0 + a) * 2f64.powi(12) / 143.0;
    (front * c0, front * c1)
}

/// The closed-form coefficients the synthesis must produce for a pure power
/// coefficient c psi^p at radial index n (beta = 1):
/// `c Gamma(p+1) Gamma(1/2) / [(2 pi)^(3/2) 2^n Gamma(n + 1/2) Gamma(p - n - 1/2)]`
/// on eps^(p - n - 3/2).
pub fn power_component_coefficient(c: f64, p: f64, n: u32) -> f64 {
    let nf = n as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    c * gamma(p + 1.0) * gamma(0.5)
        / (two_pi.powf(1.5) * 2f64.powf(nf) * gamma(nf + 0.5) * gamma(p - nf - 0.5))
}

/// The separable power-law bundle whose DF is the closed form of
/// [`crate::synthesis::dejonghe_powerlaw_df`].
pub fn fricke_bundle(params: FrickeParams) -> Result<ModelBundle> {
    let FrickeParams { p, n } = params;
    if p < 1.5 || p - n as f64 <= 1.0 {
        return Err(Error::UnsupportedParameters(format!(
            "power-law bundle requires p >= 3/2 and p - n > 1, got p = {p}, n = {n}"
        )));
    }
    let terms = vec![ExpansionTerm {
        family: TermFamily::ScaledRadial,
        index: n,
        beta: 1.0,
        coeff: CoefficientFunction::Atoms(AtomSum::power(1.0, p)),
    }];
    Ok(ModelBundle {
        name: format!("fricke:p={p},n={n}"),
        definition: ModelDefinition {
            convention: PotentialConvention::RelativeBounded { offset: 0.0 },
            grav: DEFAULT_GRAV,
            expansion: DensityExpansion::new(terms, Some(1.0))?,
        },
        variant: Variant::QForm,
        potential: None,
    })
}

/// The closed-form DF of the power-law bundle.
pub fn fricke_closed_form_df(
    params: FrickeParams,
    quad: Arc<QuadContext>,
) -> Result<DistributionFunction> {
    dejonghe_powerlaw_component(params.p, params.n, quad)
}

/// Parse a builtin reference of the form `name:key=val,key=val`, e.g.
/// `binney:v0=1,q=0.9`, `lyndenbell:a=0.5`, `fricke:p=2.5,n=0`. Every key is
/// optional; `G` overrides the gravitational constant where it applies.
pub fn parse_builtin(spec: &str) -> Result<ModelBundle> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n, r),
        None => (spec, ""),
    };
    let mut kv = std::collections::BTreeMap::new();
    for pair in rest.split(',').filter(|s| !s.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("builtin parameter `{pair}` is not key=value")))?;
        let parsed: f64 = value.parse().map_err(|_| {
            Error::Parse(format!(
                "builtin parameter `{key}` has non-numeric value `{value}`"
            ))
        })?;
        kv.insert(key.to_string(), parsed);
    }
    let grav = kv.remove("G").unwrap_or(DEFAULT_GRAV);
    let bundle = match name {
        "binney" => {
            let mut params = BinneyParams::default();
            if let Some(v) = kv.remove("v0") {
                params.v0 = v;
            }
            if let Some(v) = kv.remove("q") {
                params.q = v;
            }
            binney_bundle_with_grav(params, grav)?
        }
        "lyndenbell" => {
            let mut params = LyndenBellParams::default();
            if let Some(v) = kv.remove("a") {
                params.a = v;
            }
            lyndenbell_bundle_with_grav(params, grav)?
        }
        "fricke" => {
            let mut params = FrickeParams::default();
            if let Some(v) = kv.remove("p") {
                params.p = v;
            }
            if let Some(v) = kv.remove("n") {
                if v.fract() != 0.0 || v < 0.0 {
                    return Err(Error::Parse(format!(
                        "builtin parameter `n` must be a non-negative integer, got {v}"
                    )));
                }
                params.n = v as u32;
            }
            fricke_bundle(params)?
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown builtin `{other}` (expected binney, lyndenbell or fricke)"
            )))
        }
    };
    if let Some(stray) = kv.keys().next() {
        return Err(Error::Parse(format!(
            "builtin `{name}` does not take parameter `{stray}`"
        )));
    }
    Ok(bundle)
}

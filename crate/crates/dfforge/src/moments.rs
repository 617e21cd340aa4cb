//! Velocity moments of two-integral models.
//!
//! For a density expansion the dispersions come out in closed form: each term
//! contributes its radial factor times the antiderivative of its coefficient,
//! with sigma_phi^2 carrying an extra (2 n beta + 1) weight (and, for
//! scaled-radial terms, one more power of the scaling denominator). The radial
//! and vertical dispersions are equal in every two-integral model, which is
//! reflected structurally here. Direct integration of a synthesized DF serves
//! as the numerical cross-check.

use crate::error::{Error, Result};
use crate::model::{DensityExpansion, PotentialConvention, TermFamily};
use crate::synthesis::{DistributionFunction, MomentWeight};

/// Squared dispersions and mean rotation at a point (psi or Phi, R).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentField {
    pub sigma_r2: f64,
    pub sigma_z2: f64,
    pub sigma_phi2: f64,
    pub vbar_phi: f64,
}

/// Closed-form dispersions of an expansion at (pot, R) for a given mean
/// rotation. The mean rotation is always an input; no rotation law is ever
/// chosen implicitly.
///
/// For bounded conventions the coefficient antiderivatives run over [0, psi];
/// for unbounded ones over [Phi, +inf), which requires decaying coefficients.
pub fn dispersion_closed_form(
    expansion: &DensityExpansion,
    convention: &PotentialConvention,
    pot: f64,
    radius: f64,
    vbar_phi: f64,
) -> Result<MomentField> {
    let density = expansion.eval(pot, radius)?;
    if !(density > 0.0) {
        return Err(Error::UndefinedMoment {
            potential: pot,
            radius,
        });
    }
    let mut radial_sum = 0.0;
    let mut azimuthal_sum = 0.0;
    for term in &expansion.terms {
        let integral = match convention {
            PotentialConvention::RelativeBounded { .. } => term.coeff.integral_from_zero(pot)?,
            PotentialConvention::UnboundedRising => match &term.coeff {
                crate::expr::CoefficientFunction::Atoms(sum) => sum.integral_to_infinity(pot)?,
                crate::expr::CoefficientFunction::Tabulated(_) => {
                    return Err(Error::Divergence { term: 0 })
                }
            },
        };
        let exponent = term.radial_exponent();
        let radial = if exponent == 0.0 {
            1.0
        } else {
            radius.powf(exponent)
        };
        let weight = 2.0 * term.n_beta() + 1.0;
        match term.family {
            TermFamily::PureRadial => {
                radial_sum += radial * integral;
                azimuthal_sum += weight * radial * integral;
            }
            TermFamily::ScaledRadial => {
                let ra = expansion
                    .scaling_radius
                    .ok_or(Error::MissingScalingRadius)?;
                let base = 1.0 + (radius / ra) * (radius / ra);
                radial_sum += radial / base.powf(term.n_beta() + 0.5) * integral;
                azimuthal_sum += weight * radial / base.powf(term.n_beta() + 1.5) * integral;
            }
        }
    }
    let sigma_r2 = radial_sum / density;
    Ok(MomentField {
        sigma_r2,
        sigma_z2: sigma_r2,
        sigma_phi2: azimuthal_sum / density - vbar_phi * vbar_phi,
        vbar_phi,
    })
}

/// The rotation law v* R^(2(n+1)) / (R*^2 + R^2)^(n+1): rises from 0 on the
/// axis to v* at large R.
pub fn mean_vphi_law(n: u32, v_star: f64, r_star: f64, radius: f64) -> f64 {
    let num = radius.powi(2 * (n as i32 + 1));
    v_star * num / (r_star * r_star + radius * radius).powi(n as i32 + 1)
}

/// Dispersions by direct velocity-space integration of an even DF, the
/// numerical oracle for [`dispersion_closed_form`]. The even part carries no
/// rotation, so the azimuthal second moment is returned as the dispersion.
pub fn dispersion_from_df(df: &DistributionFunction, pot: f64, radius: f64) -> Result<MomentField> {
    let rel_tol = 1e-8;
    let density = df
        .velocity_integral(pot, radius, MomentWeight::Density, rel_tol)?
        .value;
    if !(density > 0.0) {
        return Err(Error::UndefinedMoment {
            potential: pot,
            radius,
        });
    }
    let radial = df
        .velocity_integral(pot, radius, MomentWeight::RadialSquared, rel_tol)?
        .value;
    let azimuthal = df
        .velocity_integral(pot, radius, MomentWeight::AzimuthalSquared, rel_tol)?
        .value;
    let sigma_r2 = radial / density;
    Ok(MomentField {
        sigma_r2,
        sigma_z2: sigma_r2,
        sigma_phi2: azimuthal / density,
        vbar_phi: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{AtomSum, CoefficientFunction};
    use crate::model::ExpansionTerm;
    use crate::quad::QuadContext;
    use crate::synthesis::{synthesize, SynthesisRequest, Variant};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn bounded() -> PotentialConvention {
        PotentialConvention::RelativeBounded { offset: 0.0 }
    }

    fn power_expansion(c: f64, p: f64, n: u32) -> DensityExpansion {
        DensityExpansion::new(
            vec![ExpansionTerm {
                family: TermFamily::PureRadial,
                index: n,
                beta: 1.0,
                coeff: CoefficientFunction::Atoms(AtomSum::power(c, p)),
            }],
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_power_dispersion() {
        // coeff = psi^p: sigma_R^2 = psi / (p + 1), and sigma_phi^2 equals it
        // at n = 0 with no rotation.
        for &p in &[2.0, 3.5, 5.0] {
            let expansion = power_expansion(1.0, p, 0);
            let m = dispersion_closed_form(&expansion, &bounded(), 0.8, 1.1, 0.0).unwrap();
            assert_relative_eq!(m.sigma_r2, 0.8 / (p + 1.0), max_relative = 1e-13);
            assert_eq!(m.sigma_r2, m.sigma_z2);
            assert_relative_eq!(m.sigma_phi2, m.sigma_r2, max_relative = 1e-13);
        }
    }

    #[test]
    fn zero_potential_zero_dispersion() {
        // As psi -> 0 the integrals empty out; at psi = 0 exactly the density
        // vanishes too, so probe the limit just above.
        let expansion = power_expansion(1.0, 2.0, 0);
        let m = dispersion_closed_form(&expansion, &bounded(), 1e-12, 0.5, 0.0).unwrap();
        assert!(m.sigma_r2 < 1e-12);
        assert!(matches!(
            dispersion_closed_form(&expansion, &bounded(), 0.0, 0.5, 0.0),
            Err(Error::UndefinedMoment { .. })
        ));
    }

    #[test]
    fn azimuthal_weight_is_2n_plus_1() {
        // For a single term of index n, sigma_phi^2 + vbar^2 = (2n + 1) sigma_R^2.
        for n in 0..4u32 {
            let expansion = power_expansion(1.0, (n + 2) as f64 + 1.0, n);
            let vbar = 0.3;
            let m = dispersion_closed_form(&expansion, &bounded(), 0.9, 1.4, vbar).unwrap();
            assert_relative_eq!(
                m.sigma_phi2 + vbar * vbar,
                (2.0 * n as f64 + 1.0) * m.sigma_r2,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn rotation_law_limits() {
        assert_eq!(mean_vphi_law(0, 2.0, 1.5, 0.0), 0.0);
        // R = R*, n = 0: v*/2.
        assert_relative_eq!(mean_vphi_law(0, 2.0, 1.5, 1.5), 1.0, max_relative = 1e-15);
        for n in 0..3u32 {
            assert_relative_eq!(mean_vphi_law(n, 2.0, 1.5, 1e6), 2.0, max_relative = 1e-5);
        }
    }

    #[test]
    fn closed_form_matches_direct_integration() {
        // psi^2 model at (psi = 1, R = 0.5): sigma_R^2 = 1/3.
        let expansion = power_expansion(1.0, 2.0, 0);
        let df = synthesize(
            &SynthesisRequest::new(expansion.clone(), bounded(), Variant::EpsilonForm),
            Arc::new(QuadContext::default()),
        )
        .unwrap();
        let direct = dispersion_from_df(&df, 1.0, 0.5).unwrap();
        let closed = dispersion_closed_form(&expansion, &bounded(), 1.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(direct.sigma_r2, closed.sigma_r2, max_relative = 1e-6);
        assert_relative_eq!(direct.sigma_phi2, closed.sigma_phi2, max_relative = 1e-6);
        assert_relative_eq!(direct.sigma_r2, 1.0 / 3.0, max_relative = 1e-6);
        // Isotropy in the meridional plane is structural.
        assert_eq!(direct.sigma_r2, direct.sigma_z2);
    }
}

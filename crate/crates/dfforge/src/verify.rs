//! Independent oracles: recover the density (or the rotation moment) of a
//! synthesized DF by velocity-space quadrature, and scan a DF for negative
//! values over the physical domain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DensityExpansion, PotentialConvention};
use crate::moments::{dispersion_closed_form, dispersion_from_df};
use crate::quad::Estimate;
use crate::synthesis::{DistributionFunction, MomentWeight, Parity};

/// Density recovered from an even DF by nested adaptive quadrature of the
/// fundamental velocity-space integral at (psi or Phi, R).
pub fn recover_density(
    df: &DistributionFunction,
    pot: f64,
    radius: f64,
    rel_tol: f64,
) -> Result<Estimate> {
    df.velocity_integral(pot, radius, MomentWeight::Density, rel_tol)
}

/// The rotation moment rho R <v_phi> recovered from an odd DF.
pub fn recover_rotation(
    df: &DistributionFunction,
    phi: f64,
    radius: f64,
    rel_tol: f64,
) -> Result<Estimate> {
    if df.convention.is_bounded() {
        return Err(Error::UnsupportedParameters(
            "rotation recovery applies to unbounded-rising models".into(),
        ));
    }
    if df.parity() != Some(Parity::Odd) {
        return Err(Error::UnsupportedParameters(
            "rotation recovery expects an odd DF".into(),
        ));
    }
    df.velocity_integral(phi, radius, MomentWeight::Rotation, rel_tol)
}

/// A radius at which to scan, together with the potential value there.
#[derive(Clone, Copy, Debug)]
pub struct ScanStation {
    pub radius: f64,
    pub pot: f64,
}

/// Deterministic scan grid over the physical (energy, L_z) domain at a set of
/// representative radii: at each station the energy runs over (0, psi] (or
/// [Phi, cutoff] unbounded) and |L_z| up to R sqrt(2 (energy depth)).
#[derive(Clone, Debug)]
pub struct ScanSpec {
    pub stations: Vec<ScanStation>,
    pub energy_steps: usize,
    pub lz_steps: usize,
    /// Negative values are flagged below -tol_rel times the grid maximum.
    pub tol_rel: f64,
    /// Unbounded scans stop where the slowest component has decayed to this
    /// fraction of its peak.
    pub tail_relative: f64,
}

impl ScanSpec {
    pub fn new(stations: Vec<ScanStation>) -> Self {
        ScanSpec {
            stations,
            energy_steps: 120,
            lz_steps: 121,
            tol_rel: 1e-12,
            tail_relative: 1e-16,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScanReport {
    pub min_value: f64,
    pub argmin_energy: f64,
    pub argmin_lz: f64,
    pub max_value: f64,
    /// Fraction of scanned points flagged negative.
    pub negative_fraction: f64,
    pub points: usize,
    pub negative_points: usize,
}

impl ScanReport {
    pub fn is_nonnegative(&self) -> bool {
        self.negative_points == 0
    }
}

/// Scan the DF over the physical domain. Points where the physical envelope
/// is empty contribute nothing.
pub fn positivity_scan(df: &DistributionFunction, spec: &ScanSpec) -> Result<ScanReport> {
    let mut values: Vec<(f64, f64, f64)> = Vec::new();
    for station in &spec.stations {
        let (lo, hi) = match df.convention {
            PotentialConvention::RelativeBounded { .. } => (0.0, station.pot),
            PotentialConvention::UnboundedRising => {
                let decay = df.min_energy_decay().ok_or(Error::Divergence { term: 0 })?;
                (station.pot, station.pot - spec.tail_relative.ln() / decay)
            }
        };
        if hi <= lo {
            continue;
        }
        for i in 1..=spec.energy_steps {
            let energy = lo + (hi - lo) * i as f64 / spec.energy_steps as f64;
            let depth = match df.convention {
                PotentialConvention::RelativeBounded { .. } => station.pot - energy,
                PotentialConvention::UnboundedRising => energy - station.pot,
            };
            let lmax = station.radius * (2.0 * depth).max(0.0).sqrt();
            for j in 0..spec.lz_steps {
                let lz = if spec.lz_steps == 1 {
                    0.0
                } else {
                    -lmax + 2.0 * lmax * j as f64 / (spec.lz_steps - 1) as f64
                };
                let f = df.eval(energy, lz)?;
                if f.is_finite() {
                    values.push((f, energy, lz));
                }
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Domain(
            "positivity scan covered no physical points".into(),
        ));
    }
    let max_value = values.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let scale = values.iter().map(|v| v.0.abs()).fold(0.0f64, f64::max);
    let threshold = -spec.tol_rel * scale;
    let (mut min_value, mut argmin_energy, mut argmin_lz) = (f64::INFINITY, 0.0, 0.0);
    let mut negative_points = 0usize;
    for &(f, energy, lz) in &values {
        if f < min_value {
            min_value = f;
            argmin_energy = energy;
            argmin_lz = lz;
        }
        if f < threshold {
            negative_points += 1;
        }
    }
    Ok(ScanReport {
        min_value,
        argmin_energy,
        argmin_lz,
        max_value,
        negative_fraction: negative_points as f64 / values.len() as f64,
        points: values.len(),
        negative_points,
    })
}

/// Everything needed to verify one model end to end.
pub struct VerifyJob<'a> {
    pub name: String,
    pub df: &'a DistributionFunction,
    pub expansion: &'a DensityExpansion,
    /// Sample points for the density round trip and the moment comparison.
    pub stations: Vec<ScanStation>,
    pub scan: ScanSpec,
    pub round_trip_tol: f64,
    pub moments_tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub model: String,
    pub round_trip_max_rel_err: f64,
    pub round_trip_pass: bool,
    pub positivity: ScanReport,
    pub moments_max_rel_err: f64,
    pub moments_pass: bool,
}

pub const VERIFY_SCHEMA_VERSION: u32 = 1;

/// Run the round trip, the positivity scan and the moment comparison for one
/// model.
pub fn run_verification(job: &VerifyJob<'_>) -> Result<VerifyReport> {
    let quad_tol = (job.round_trip_tol * 1e-2).clamp(1e-12, 1e-6);
    let mut round_trip_max = 0.0f64;
    let mut moments_max = 0.0f64;
    let cached = cache_for_stations(job.df, &job.stations)?;
    for station in &job.stations {
        let target = job.expansion.eval(station.pot, station.radius)?;
        let recovered = recover_density(&cached, station.pot, station.radius, quad_tol)?;
        let scale = target.abs().max(1e-300);
        round_trip_max = round_trip_max.max((recovered.value - target).abs() / scale);

        if target > 0.0 {
            let closed = dispersion_closed_form(
                job.expansion,
                &cached.convention,
                station.pot,
                station.radius,
                0.0,
            )?;
            let direct = dispersion_from_df(&cached, station.pot, station.radius)?;
            let sig_scale = closed.sigma_r2.abs().max(1e-300);
            moments_max = moments_max
                .max((closed.sigma_r2 - direct.sigma_r2).abs() / sig_scale)
                .max((closed.sigma_phi2 - direct.sigma_phi2).abs() / sig_scale);
        }
    }
    // Scan the uncached DF (closed form where one exists): interpolation
    // wiggle at the level of the cache budget would read as spurious
    // negatives in the deep tail.
    let scan_df = job.df.closed_form();
    let positivity = positivity_scan(scan_df.as_ref().unwrap_or(job.df), &job.scan)?;
    Ok(VerifyReport {
        schema_version: VERIFY_SCHEMA_VERSION,
        model: job.name.clone(),
        round_trip_max_rel_err: round_trip_max,
        round_trip_pass: round_trip_max <= job.round_trip_tol,
        positivity,
        moments_max_rel_err: moments_max,
        moments_pass: moments_max <= job.moments_tol,
    })
}

/// Cache the DF's energy functions over the largest argument any station can
/// reach, so grid scans do not re-run the synthesis quadrature per point.
pub fn cache_for_stations(
    df: &DistributionFunction,
    stations: &[ScanStation],
) -> Result<DistributionFunction> {
    let mut max_arg = 0.0f64;
    for s in stations {
        let top = match df.convention {
            PotentialConvention::RelativeBounded { .. } => s.pot,
            PotentialConvention::UnboundedRising => {
                let cut = df.energy_cutoff(s.pot)?;
                match df.scaling_radius {
                    // Q components can exceed the energy at large |L_z|.
                    Some(ra) => cut * (1.0 + (s.radius / ra) * (s.radius / ra)),
                    None => cut,
                }
            }
        };
        max_arg = max_arg.max(top);
    }
    df.cached(max_arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{AtomSum, CoefficientFunction};
    use crate::model::{ExpansionTerm, TermFamily};
    use crate::quad::QuadContext;
    use crate::synthesis::{exp_pair, synthesize, SynthesisRequest, Variant};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn bounded() -> PotentialConvention {
        PotentialConvention::RelativeBounded { offset: 0.0 }
    }

    fn quad() -> Arc<QuadContext> {
        Arc::new(QuadContext::default())
    }

    #[test]
    fn round_trip_quadratic_model() {
        // coeff = psi^2: recovering the density at (psi, R) = (1, 0.7) returns 1.
        let expansion = DensityExpansion::new(
            vec![ExpansionTerm {
                family: TermFamily::PureRadial,
                index: 0,
                beta: 1.0,
                coeff: CoefficientFunction::Atoms(AtomSum::power(1.0, 2.0)),
            }],
            None,
        )
        .unwrap();
        let df = synthesize(
            &SynthesisRequest::new(expansion, bounded(), Variant::EpsilonForm),
            quad(),
        )
        .unwrap();
        let rec = recover_density(&df, 1.0, 0.7, 1e-10).unwrap();
        assert_relative_eq!(rec.value, 1.0, max_relative = 1e-8);
        assert!(rec.error < 1e-6);
    }

    #[test]
    fn zero_df_recovers_zero() {
        let df = DistributionFunction::new(Vec::new(), bounded(), None, quad());
        let rec = recover_density(&df, 0.8, 1.0, 1e-8).unwrap();
        assert_eq!(rec.value, 0.0);
        let odd = DistributionFunction::new(
            Vec::new(),
            PotentialConvention::UnboundedRising,
            None,
            quad(),
        );
        // An empty DF has no common parity; bypass via direct moment call.
        assert_eq!(
            odd.velocity_integral(0.5, 1.0, MomentWeight::Rotation, 1e-8)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn rotation_recovery_of_exponential_pair() {
        let pair = exp_pair(0, 1.0, 0.4, 1.3, Parity::Odd, quad()).unwrap();
        let (phi, r) = (1.0, 1.0);
        let rec = recover_rotation(&pair.df, phi, r, 1e-8).unwrap();
        // recover_rotation returns rho R <v_phi>; the closed form is rho <v_phi>.
        assert_relative_eq!(
            rec.value,
            r * pair.closed_form_density(phi, r),
            max_relative = 1e-6
        );
        // Even DFs are rejected.
        let even = exp_pair(0, 1.0, 0.4, 1.3, Parity::Even, quad()).unwrap();
        assert!(recover_rotation(&even.df, phi, r, 1e-8).is_err());
    }

    #[test]
    fn scan_flags_negative_region() {
        // A DF with a negative high-L_z component.
        let expansion = DensityExpansion::new(
            vec![
                ExpansionTerm {
                    family: TermFamily::PureRadial,
                    index: 0,
                    beta: 1.0,
                    coeff: CoefficientFunction::Atoms(AtomSum::power(1.0, 2.0)),
                },
                ExpansionTerm {
                    family: TermFamily::PureRadial,
                    index: 1,
                    beta: 1.0,
                    coeff: CoefficientFunction::Atoms(AtomSum::power(-0.8, 4.0)),
                },
            ],
            None,
        )
        .unwrap();
        let df = synthesize(
            &SynthesisRequest::new(expansion, bounded(), Variant::EpsilonForm),
            quad(),
        )
        .unwrap();
        let spec = ScanSpec::new(vec![
            ScanStation {
                radius: 0.5,
                pot: 1.0,
            },
            ScanStation {
                radius: 1.0,
                pot: 1.0,
            },
            ScanStation {
                radius: 2.0,
                pot: 1.0,
            },
        ]);
        let report = positivity_scan(&df, &spec).unwrap();
        assert!(!report.is_nonnegative());
        assert!(report.min_value < 0.0);
        assert!(report.negative_fraction > 0.0);

        // The single positive term alone is non-negative everywhere.
        let pos = DensityExpansion::new(
            vec![ExpansionTerm {
                family: TermFamily::PureRadial,
                index: 0,
                beta: 1.0,
                coeff: CoefficientFunction::Atoms(AtomSum::power(1.0, 2.0)),
            }],
            None,
        )
        .unwrap();
        let df = synthesize(
            &SynthesisRequest::new(pos, bounded(), Variant::EpsilonForm),
            quad(),
        )
        .unwrap();
        let report = positivity_scan(&df, &spec).unwrap();
        assert!(report.is_nonnegative());
    }
}

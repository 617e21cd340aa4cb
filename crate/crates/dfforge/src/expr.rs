//! The coefficient expression family: finite sums of atoms c * x^p * exp(-k x)
//! with c real, p >= 0 and k >= 0. The family is closed under differentiation
//! to any order, which is what lets the synthesis avoid numerical
//! differentiation entirely. A Chebyshev-tabulated fallback covers coefficient
//! functions outside the family, with an error estimate that grows per
//! derivative order.

use serde::{Deserialize, Serialize};

use crate::cheb::ChebSeries;
use crate::error::{Error, Result};
use crate::special::{lower_incomplete_gamma, upper_incomplete_gamma};

/// One term c * x^p * exp(-k x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub c: f64,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub k: f64,
}

impl Atom {
    pub fn eval(&self, x: f64) -> f64 {
        let pow = if self.p == 0.0 { 1.0 } else { x.powf(self.p) };
        let exp = if self.k == 0.0 {
            1.0
        } else {
            (-self.k * x).exp()
        };
        self.c * pow * exp
    }
}

/// A normalized finite sum of atoms: merged on equal (p, k), zero terms
/// dropped, sorted by (k, p).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AtomSum {
    atoms: Vec<Atom>,
}

impl AtomSum {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !a.c.is_finite() || !a.p.is_finite() || !a.k.is_finite() {
                return Err(Error::Domain("atom parameters must be finite".into()));
            }
            if a.k < 0.0 {
                return Err(Error::Domain(format!(
                    "atom decay rate k = {} must be >= 0",
                    a.k
                )));
            }
        }
        let mut sum = AtomSum { atoms };
        sum.normalize();
        Ok(sum)
    }

    pub fn zero() -> Self {
        AtomSum { atoms: Vec::new() }
    }

    /// c * x^p
    pub fn power(c: f64, p: f64) -> Self {
        AtomSum::new(vec![Atom { c, p, k: 0.0 }]).expect("finite parameters")
    }

    /// c * exp(-k x)
    pub fn exponential(c: f64, k: f64) -> Self {
        AtomSum::new(vec![Atom { c, p: 0.0, k }]).expect("finite parameters")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    fn normalize(&mut self) {
        self.atoms.retain(|a| a.c != 0.0);
        self.atoms.sort_by(|a, b| {
            (a.k, a.p)
                .partial_cmp(&(b.k, b.p))
                .expect("finite atom parameters")
        });
        let mut merged: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in self.atoms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.p == a.p && last.k == a.k => last.c += a.c,
                _ => merged.push(a),
            }
        }
        merged.retain(|a| a.c != 0.0);
        self.atoms = merged;
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.atoms.iter().map(|a| a.eval(x)).sum()
    }

    /// Single differentiation within the family.
    pub fn derivative(&self) -> Self {
        let mut out = Vec::with_capacity(2 * self.atoms.len());
        for a in &self.atoms {
            if a.p != 0.0 {
                out.push(Atom {
                    c: a.c * a.p,
                    p: a.p - 1.0,
                    k: a.k,
                });
            }
            if a.k != 0.0 {
                out.push(Atom {
                    c: -a.c * a.k,
                    p: a.p,
                    k: a.k,
                });
            }
        }
        let mut sum = AtomSum { atoms: out };
        sum.normalize();
        sum
    }

    pub fn derivative_n(&self, order: usize) -> Self {
        let mut cur = self.clone();
        for _ in 0..order {
            cur = cur.derivative();
        }
        cur
    }

    /// Value at x = 0: Some(v) when finite, None when a negative power with a
    /// nonzero coefficient makes the limit infinite.
    pub fn value_at_zero(&self) -> Option<f64> {
        let mut v = 0.0;
        for a in &self.atoms {
            if a.p < 0.0 {
                return None;
            }
            if a.p == 0.0 {
                v += a.c;
            }
        }
        Some(v)
    }

    /// Smallest power exponent among atoms (+inf for the empty sum).
    pub fn min_power(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).fold(f64::INFINITY, f64::min)
    }

    /// Smallest decay rate among atoms; 0 when any atom is purely polynomial.
    pub fn min_decay(&self) -> f64 {
        self.atoms.iter().map(|a| a.k).fold(f64::INFINITY, f64::min)
    }

    /// Largest power exponent among atoms.
    pub fn max_power(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).fold(0.0f64, f64::max)
    }

    /// True when every atom carries a strictly positive decay rate.
    pub fn decays(&self) -> bool {
        !self.is_zero() && self.min_decay() > 0.0
    }

    /// Exact antiderivative over [0, x]. Power atoms integrate to powers,
    /// power-times-exponential atoms to lower incomplete gamma terms.
    pub fn integral_from_zero(&self, x: f64) -> Result<f64> {
        let mut total = 0.0;
        for a in &self.atoms {
            if a.p <= -1.0 {
                return Err(Error::Domain(format!(
                    "atom with power {} is not integrable at 0",
                    a.p
                )));
            }
            total += if a.k == 0.0 {
                a.c * x.powf(a.p + 1.0) / (a.p + 1.0)
            } else {
                a.c * a.k.powf(-(a.p + 1.0)) * lower_incomplete_gamma(a.p + 1.0, a.k * x)
            };
        }
        Ok(total)
    }

    /// Exact tail integral over [x, +inf). Requires strict decay.
    pub fn integral_to_infinity(&self, x: f64) -> Result<f64> {
        let mut total = 0.0;
        for a in &self.atoms {
            if a.k <= 0.0 {
                return Err(Error::Divergence { term: 0 });
            }
            if a.p <= -1.0 {
                return Err(Error::Domain(format!(
                    "atom with power {} is not integrable",
                    a.p
                )));
            }
            total += a.c * a.k.powf(-(a.p + 1.0)) * upper_incomplete_gamma(a.p + 1.0, a.k * x);
        }
        Ok(total)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                c: a.c * factor,
                ..*a
            })
            .collect();
        let mut s = AtomSum { atoms };
        s.normalize();
        s
    }

    pub fn plus(&self, other: &AtomSum) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        let mut s = AtomSum { atoms };
        s.normalize();
        s
    }
}

/// A coefficient function of the potential: either a member of the exact
/// expression family or a Chebyshev-tabulated function with spectral
/// differentiation. The tabulated form degrades with each derivative order;
/// the estimated error is tracked and enforced against a budget.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientFunction {
    Atoms(AtomSum),
    Tabulated(TabulatedFn),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedFn {
    pub series: ChebSeries,
    /// Relative error estimate of the current representation.
    pub error_estimate: f64,
    /// Hard ceiling on the relative error a derivative may reach.
    pub error_budget: f64,
    /// Orders of spectral differentiation already applied.
    pub derivative_order: usize,
}

impl CoefficientFunction {
    pub fn from_atoms(sum: AtomSum) -> Self {
        CoefficientFunction::Atoms(sum)
    }

    /// Tabulate `f` on [0, hi] for use outside the expression family.
    /// `error_budget` is the relative accuracy floor at which higher
    /// derivatives are refused.
    pub fn tabulated(f: &dyn Fn(f64) -> f64, hi: f64, error_budget: f64) -> Result<Self> {
        if !(hi > 0.0) {
            return Err(Error::Domain("tabulation interval must have hi > 0".into()));
        }
        let (series, tail) = ChebSeries::fit_adaptive(f, 0.0, hi, 1e-14, 2049);
        if tail > error_budget {
            return Err(Error::TabulatedDerivative {
                order: 0,
                estimate: tail,
                budget: error_budget,
            });
        }
        Ok(CoefficientFunction::Tabulated(TabulatedFn {
            series,
            error_estimate: tail.max(1e-15),
            error_budget,
            derivative_order: 0,
        }))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CoefficientFunction::Atoms(sum) => sum.eval(x),
            CoefficientFunction::Tabulated(t) => t.series.eval(x),
        }
    }

    /// Exact derivative within the family; spectral derivative with error
    /// tracking for tabulated functions.
    pub fn derivative(&self, order: usize) -> Result<CoefficientFunction> {
        match self {
            CoefficientFunction::Atoms(sum) => {
                Ok(CoefficientFunction::Atoms(sum.derivative_n(order)))
            }
            CoefficientFunction::Tabulated(t) => {
                let mut series = t.series.clone();
                let mut estimate = t.error_estimate;
                let n = series.coeffs.len() as f64;
                let width = series.hi - series.lo;
                for _ in 0..order {
                    series = series.derivative();
                    // Spectral differentiation amplifies coefficient noise by
                    // roughly 2 N^2 / width per order.
                    estimate *= 2.0 * n * n / width;
                }
                if estimate > t.error_budget {
                    return Err(Error::TabulatedDerivative {
                        order: t.derivative_order + order,
                        estimate,
                        budget: t.error_budget,
                    });
                }
                Ok(CoefficientFunction::Tabulated(TabulatedFn {
                    series,
                    error_estimate: estimate,
                    error_budget: t.error_budget,
                    derivative_order: t.derivative_order + order,
                }))
            }
        }
    }

    /// The atoms, when this function is a member of the exact family.
    pub fn as_atoms(&self) -> Option<&AtomSum> {
        match self {
            CoefficientFunction::Atoms(sum) => Some(sum),
            CoefficientFunction::Tabulated(_) => None,
        }
    }

    pub fn integral_from_zero(&self, x: f64) -> Result<f64> {
        match self {
            CoefficientFunction::Atoms(sum) => sum.integral_from_zero(x),
            CoefficientFunction::Tabulated(t) => Ok(t.series.antiderivative().eval(x)),
        }
    }
}

impl Serialize for CoefficientFunction {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CoefficientFunction::Atoms(sum) => sum.serialize(serializer),
            CoefficientFunction::Tabulated(_) => Err(serde::ser::Error::custom(
                "tabulated coefficient functions are not representable in model files",
            )),
        }
    }
}

impl<'de> Deserialize<'de> for CoefficientFunction {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let atoms = Vec::<Atom>::deserialize(deserializer)?;
        AtomSum::new(atoms)
            .map(CoefficientFunction::Atoms)
            .map_err(serde::de::Error::custom)
    }
}

//! The covariance function `xi(u) = sum_p beta_p^2 u^p` of a mixed p-spin model.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A validated finite mixture, stored as the map `p -> beta_p^2`.
///
/// ```
/// use parisi::Mixture;
///
/// let sk = Mixture::sk(0.8);
/// assert!((sk.xi(0.5) - 0.16).abs() < 1e-15);
/// assert!((sk.xi_pp(0.0) - 1.28).abs() < 1e-15);
/// ```
#[derive(Clone, PartialEq)]
pub struct Mixture {
    terms: Vec<(u32, f64)>,
}

impl Mixture {
    /// Validates a raw coefficient map. Zero coefficients are dropped.
    pub fn new(raw: &BTreeMap<u32, f64>) -> Result<Self> {
        let mut terms = Vec::with_capacity(raw.len());
        for (&p, &c) in raw {
            if p < 2 {
                return Err(Error::KeyBelowTwo(p));
            }
            if c.is_nan() || c < 0.0 {
                return Err(Error::NegativeCoefficient { p, value: c });
            }
            if c > 0.0 {
                terms.push((p, c));
            }
        }
        if terms.is_empty() {
            return Err(Error::EmptyMixture);
        }
        let summable: f64 = terms.iter().map(|&(p, c)| 2f64.powi(p as i32) * c).sum();
        if !summable.is_finite() {
            return Err(Error::NotSummable(summable));
        }
        Ok(Self { terms })
    }

    /// Convenience constructor from `(p, beta_p^2)` pairs.
    pub fn from_pairs(pairs: &[(u32, f64)]) -> Result<Self> {
        let mut raw = BTreeMap::new();
        for &(p, c) in pairs {
            *raw.entry(p).or_insert(0.0) += c;
        }
        Self::new(&raw)
    }

    /// Sherrington-Kirkpatrick mixture `xi(u) = beta^2 u^2`.
    pub fn sk(beta: f64) -> Self {
        Self::from_pairs(&[(2, beta * beta)]).expect("beta must be nonzero")
    }

    /// Pure p-spin mixture `xi(u) = beta^2 u^p`.
    pub fn pure(p: u32, beta: f64) -> Self {
        Self::from_pairs(&[(p, beta * beta)]).expect("beta must be nonzero")
    }

    /// The `(p, beta_p^2)` terms in increasing `p`.
    pub fn terms(&self) -> &[(u32, f64)] {
        &self.terms
    }

    /// `beta_p^2`, zero if absent.
    pub fn coefficient(&self, p: u32) -> f64 {
        self.terms.iter().find(|&&(q, _)| q == p).map_or(0.0, |&(_, c)| c)
    }

    /// Largest power present.
    pub fn degree(&self) -> u32 {
        self.terms.last().map_or(0, |&(p, _)| p)
    }

    /// `xi^{(order)}(u)` for `u` in `[0, 1]`.
    pub fn eval(&self, u: f64, order: u32) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain { value: u, domain: "[0, 1]" });
        }
        Ok(self.derivative(u, order))
    }

    /// Termwise derivative without the domain check. Valid for any real `u`.
    pub fn derivative(&self, u: f64, order: u32) -> f64 {
        self.terms
            .iter()
            .filter(|&&(p, _)| p >= order)
            .map(|&(p, c)| {
                let falling: f64 = (0..order).map(|i| f64::from(p - i)).product();
                c * falling * u.powi((p - order) as i32)
            })
            .sum()
    }

    pub fn xi(&self, u: f64) -> f64 {
        self.derivative(u, 0)
    }

    pub fn xi_p(&self, u: f64) -> f64 {
        self.derivative(u, 1)
    }

    pub fn xi_pp(&self, u: f64) -> f64 {
        self.derivative(u, 2)
    }

    pub fn xi_ppp(&self, u: f64) -> f64 {
        self.derivative(u, 3)
    }

    /// Antiderivative of `u xi''(u)`, namely `u xi'(u) - xi(u)`.
    pub(crate) fn u_xi_pp_primitive(&self, u: f64) -> f64 {
        u * self.xi_p(u) - self.xi(u)
    }

    /// The map form used in JSON documents.
    pub fn to_map(&self) -> BTreeMap<u32, f64> {
        self.terms.iter().copied().collect()
    }
}

impl fmt::Debug for Mixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mixture(")?;
        for (i, (p, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}u^{p}")?;
        }
        write!(f, ")")
    }
}

// JSON keys are decimal strings of p.
impl Serialize for Mixture {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<String, f64> =
            self.terms.iter().map(|&(p, c)| (p.to_string(), c)).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Mixture {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw: BTreeMap<String, f64> = BTreeMap::deserialize(deserializer)?;
        let mut map = BTreeMap::new();
        for (k, v) in raw {
            let p: u32 = k
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("mixture key {k:?} is not an integer")))?;
            map.insert(p, v);
        }
        Mixture::new(&map).map_err(D::Error::custom)
    }
}

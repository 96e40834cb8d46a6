//! Ground metric and ambiguity set.
//!
//! The transport cost between `(x, a, y)` and `(x', a', y')` is
//! `||x - x'|| + kappa_a |a - a'| + kappa_y |y - y'|`. Trust weights may be
//! infinite, meaning the attribute or label can never be changed; the product
//! `0 * inf` is taken to be zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Cell;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("trust weight {name} = {value} must be positive (inf allowed)")]
    InvalidKappa { name: &'static str, value: f64 },
    #[error("radius {0} must be a nonnegative finite number")]
    InvalidRadius(f64),
    #[error("vectors have lengths {0} and {1}")]
    DimensionMismatch(usize, usize),
}

/// Feature norm. The dual pairs are `L1 <-> Linf` and `L2 <-> L2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
    Linf,
}

impl Norm {
    pub fn dual(self) -> Norm {
        match self {
            Norm::L1 => Norm::Linf,
            Norm::L2 => Norm::L2,
            Norm::Linf => Norm::L1,
        }
    }

    pub fn eval(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn dual_eval(self, v: &[f64]) -> f64 {
        self.dual().eval(v)
    }

    /// A subgradient of `v -> ||v||`; zero at the origin.
    pub fn subgradient(self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; v.len()];
        match self {
            Norm::L1 => g.iter_mut().zip(v).for_each(|(g, x)| *g = if *x == 0.0 { 0.0 } else { x.signum() }),
            Norm::L2 => {
                let n = self.eval(v);
                if n > 0.0 {
                    g.iter_mut().zip(v).for_each(|(g, x)| *g = x / n);
                }
            }
            Norm::Linf => {
                if let Some(j) = (0..v.len()).reduce(|m, j| if v[j].abs() > v[m].abs() { j } else { m }) {
                    if v[j] != 0.0 {
                        g[j] = v[j].signum();
                    }
                }
            }
        }
        g
    }

    /// A subgradient of the dual norm.
    pub fn dual_subgradient(self, v: &[f64]) -> Vec<f64> {
        self.dual().subgradient(v)
    }

    pub fn distance(self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Norm::L1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
            Norm::L2 => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Norm::Linf => x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs())),
        }
    }

    pub fn parse(s: &str) -> Option<Norm> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Some(Norm::L1),
            "l2" => Some(Norm::L2),
            "linf" | "inf" => Some(Norm::Linf),
            _ => None,
        }
    }
}

/// Serialises trust weights as numbers, or the string `"inf"` when infinite.
pub mod kappa_serde {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => super::parse_kappa(&t).ok_or_else(|| D::Error::custom(format!("invalid trust weight `{t}`"))),
        }
    }
}

/// Parses a trust weight; accepts `inf`, `infinity` and decimal numbers.
pub fn parse_kappa(s: &str) -> Option<f64> {
    let t = s.trim().to_ascii_lowercase();
    match t.as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        _ => t.parse::<f64>().ok(),
    }
}

/// `kappa * |u - v|` for binary `u, v` with `0 * inf = 0`.
#[inline]
pub fn flip_cost(kappa: f64, u: u8, v: u8) -> f64 {
    if u == v {
        0.0
    } else {
        kappa
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundMetric {
    pub norm: Norm,
    #[serde(with = "kappa_serde")]
    pub kappa_a: f64,
    #[serde(with = "kappa_serde")]
    pub kappa_y: f64,
}

impl GroundMetric {
    pub fn new(norm: Norm, kappa_a: f64, kappa_y: f64) -> Result<Self, MetricError> {
        let m = Self { norm, kappa_a, kappa_y };
        m.validate()?;
        Ok(m)
    }

    /// Both weights infinite: attributes and labels are never transported.
    pub fn infinite(norm: Norm) -> Self {
        Self {
            norm,
            kappa_a: f64::INFINITY,
            kappa_y: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        for (name, value) in [("kappa_a", self.kappa_a), ("kappa_y", self.kappa_y)] {
            if !(value > 0.0) {
                return Err(MetricError::InvalidKappa { name, value });
            }
        }
        Ok(())
    }

    pub fn is_infinite(&self) -> bool {
        self.kappa_a.is_infinite() && self.kappa_y.is_infinite()
    }

    /// Cost of relabelling a sample from cell `from` to cell `to`, ignoring features.
    pub fn cell_cost(&self, from: Cell, to: Cell) -> f64 {
        flip_cost(self.kappa_a, from.a, to.a) + flip_cost(self.kappa_y, from.y, to.y)
    }

    pub fn cost(&self, x: &[f64], a: u8, y: u8, x2: &[f64], a2: u8, y2: u8) -> f64 {
        self.norm.distance(x, x2) + self.cell_cost(Cell::new(a, y), Cell::new(a2, y2))
    }
}

impl Default for GroundMetric {
    fn default() -> Self {
        Self {
            norm: Norm::L2,
            kappa_a: 0.5,
            kappa_y: 0.5,
        }
    }
}

/// Wasserstein ball radius plus ground metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    pub rho: f64,
    pub metric: GroundMetric,
}

impl AmbiguityConfig {
    pub fn new(rho: f64, metric: GroundMetric) -> Result<Self, MetricError> {
        let c = Self { rho, metric };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(MetricError::InvalidRadius(self.rho));
        }
        self.metric.validate()
    }

    pub fn with_rho(self, rho: f64) -> Self {
        Self { rho, ..self }
    }
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        Self {
            rho: 0.0,
            metric: GroundMetric::default(),
        }
    }
}

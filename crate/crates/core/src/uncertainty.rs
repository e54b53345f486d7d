//! Norm-ball uncertainty sets and closed-form worst cases of functions
//! affine in the uncertain parameters.
//!
//! For `g(u) = a^T u + b` and `U = {u : ||u - u_hat|| <= rho}`,
//! `max_U g = a^T u_hat + rho ||a||_* + b`, with `||.||_*` the dual norm:
//! l1 for a box (l-inf ball), l2 for an ellipsoid (l2 ball).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm1, norm2};

/// Below this l2 norm the ellipsoid subgradient is taken to be zero.
pub const ELLIPSOID_KINK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// l-inf ball; dual norm l1.
    Box,
    /// l2 ball; dual norm l2.
    Ellipsoid,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Box => "box",
            NormKind::Ellipsoid => "ellipsoid",
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(NormKind::Box),
            "ellipsoid" => Ok(NormKind::Ellipsoid),
            other => Err(Error::Config(format!(
                "unknown norm `{other}` (expected box or ellipsoid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    pub norm: NormKind,
    pub nominal: Vec<f64>,
    pub radius: f64,
}

impl UncertaintySet {
    /// A zero radius is accepted and collapses the set to its center.
    pub fn new(norm: NormKind, nominal: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!(
                "uncertainty radius must be finite and nonnegative, got {radius}"
            )));
        }
        if nominal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("nominal parameters must be finite".into()));
        }
        Ok(Self {
            norm,
            nominal,
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.nominal.len()
    }
}

/// `a^T u + b`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineInU {
    pub coeff: Vec<f64>,
    pub offset: f64,
}

pub fn dual_norm(a: &[f64], norm: NormKind) -> f64 {
    match norm {
        NormKind::Box => norm1(a),
        NormKind::Ellipsoid => norm2(a),
    }
}

/// A subgradient of the dual norm at `a`; zero at the kinks.
pub fn dual_norm_subgradient(a: &[f64], norm: NormKind) -> Vec<f64> {
    match norm {
        NormKind::Box => a
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
        NormKind::Ellipsoid => {
            let n = norm2(a);
            if n < ELLIPSOID_KINK_TOL {
                vec![0.0; a.len()]
            } else {
                a.iter().map(|v| v / n).collect()
            }
        }
    }
}

/// `coeff^T nominal + sign * radius * ||coeff||_* + offset`; shared by the
/// evaluators so they need not materialize an [`UncertaintySet`] per row.
#[inline]
pub(crate) fn robust_affine(
    coeff: &[f64],
    offset: f64,
    nominal: &[f64],
    radius: f64,
    norm: NormKind,
    sign: f64,
) -> f64 {
    dot(coeff, nominal) + sign * radius * dual_norm(coeff, norm) + offset
}

pub fn worst_case_max(c: &AffineInU, set: &UncertaintySet) -> Result<f64> {
    check_len("worst_case_max", set.dim(), c.coeff.len())?;
    Ok(robust_affine(
        &c.coeff,
        c.offset,
        &set.nominal,
        set.radius,
        set.norm,
        1.0,
    ))
}

pub fn worst_case_min(c: &AffineInU, set: &UncertaintySet) -> Result<f64> {
    check_len("worst_case_min", set.dim(), c.coeff.len())?;
    Ok(robust_affine(
        &c.coeff,
        c.offset,
        &set.nominal,
        set.radius,
        set.norm,
        -1.0,
    ))
}

/// The maximizer of `coeff^T u` over the set.
pub fn worst_case_point(coeff: &[f64], set: &UncertaintySet) -> Result<Vec<f64>> {
    check_len("worst_case_point", set.dim(), coeff.len())?;
    let dir = dual_norm_subgradient(coeff, set.norm);
    Ok(set
        .nominal
        .iter()
        .zip(&dir)
        .map(|(u, d)| u + set.radius * d)
        .collect())
}

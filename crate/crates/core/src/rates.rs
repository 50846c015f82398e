//! Rate functions for binary collisions and unary type changes, drawn from a
//! closed catalog so scenarios stay data-only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collision rate `α(T, T')` of an ordered reactant pair. The pair is
/// declared once per unordered type pair; the swapped order evaluates
/// `α(T', T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinaryRate {
    Constant {
        value: f64,
    },
    /// `amplitude · s / (s + scale)` with `s = T + T'`; depends on the sum only.
    SumSaturating {
        amplitude: f64,
        scale: f64,
    },
    /// `min(cap, base + first · T + second · T')`.
    Affine {
        base: f64,
        first: f64,
        second: f64,
        cap: f64,
    },
}

impl BinaryRate {
    pub fn constant(value: f64) -> Self {
        BinaryRate::Constant { value }
    }

    #[inline]
    pub fn eval(&self, t: f64, u: f64) -> f64 {
        match *self {
            BinaryRate::Constant { value } => value,
            BinaryRate::SumSaturating { amplitude, scale } => {
                let s = t + u;
                amplitude * s / (s + scale)
            }
            BinaryRate::Affine {
                base,
                first,
                second,
                cap,
            } => (base + first * t + second * u).min(cap),
        }
    }

    /// Checked evaluation used by the simulator.
    #[inline]
    pub fn eval_checked(&self, t: f64, u: f64) -> Result<f64> {
        let r = self.eval(t, u);
        if r >= 0.0 && r.is_finite() {
            Ok(r)
        } else {
            Err(Error::NegativeRate {
                rate: r,
                source_desc: format!("binary rate {self:?} at ({t}, {u})"),
            })
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            BinaryRate::Constant { value } => Some(value),
            _ => None,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let ok = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(
                    format!("{field}.{name}"),
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        };
        match *self {
            BinaryRate::Constant { value } => ok("value", value),
            BinaryRate::SumSaturating { amplitude, scale } => {
                ok("amplitude", amplitude)?;
                if scale > 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("{field}.scale"), "must be > 0"))
                }
            }
            BinaryRate::Affine {
                base,
                first,
                second,
                cap,
            } => {
                ok("base", base)?;
                ok("first", first)?;
                ok("second", second)?;
                ok("cap", cap)
            }
        }
    }
}

/// Rate `a_vw(U)` of a unary reaction `v -> w`, as a function of the full
/// energy `U` of the reacting particle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnaryRate {
    Constant {
        value: f64,
    },
    /// `coefficient · (U - I_w)^exponent` for `U >= I_w`, zero otherwise.
    PowerGap {
        coefficient: f64,
        exponent: f64,
    },
}

impl UnaryRate {
    pub fn constant(value: f64) -> Self {
        UnaryRate::Constant { value }
    }

    /// Rate at full energy `full`, given the product's internal energy.
    /// Zero whenever the product kinetic energy would be negative.
    #[inline]
    pub fn eval(&self, full: f64, product_internal: f64) -> f64 {
        let gap = full - product_internal;
        if gap < 0.0 {
            return 0.0;
        }
        match *self {
            UnaryRate::Constant { value } => value,
            UnaryRate::PowerGap { coefficient, exponent } => {
                if exponent == 0.0 {
                    coefficient
                } else {
                    coefficient * gap.powf(exponent)
                }
            }
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        match *self {
            UnaryRate::Constant { value } if value >= 0.0 && value.is_finite() => Ok(()),
            UnaryRate::PowerGap { coefficient, exponent }
                if coefficient >= 0.0 && coefficient.is_finite() && exponent > -1.0 && exponent.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::invalid(
                field,
                "rates need a finite nonnegative scale and exponent > -1",
            )),
        }
    }
}

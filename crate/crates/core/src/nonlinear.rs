//! The nonlinearity `f`, its derivative, the secant quotient used by the
//! first fixed-point map, the line-search remainder `G`, and the temporal
//! cut-off `eta`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::QuadField;

/// Below this magnitude the secant quotient is replaced by `f'(0)`.
pub const SECANT_THRESHOLD: f64 = 1e-8;

/// Regularization used inside the cut-off exponents.
pub const CUTOFF_EPS: f64 = 1e-6;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Nonlinearity {
    /// `f(r) = c r ln^2(1 + |r|)`. Its derivative is 1-Hoelder.
    LogSquared { c: f64 },
    /// `f(r) = c r`.
    Linear { c: f64 },
    /// User-supplied `f` and `f'`.
    Custom { f: ScalarFn, df: ScalarFn },
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::LogSquared { c } => write!(out, "LogSquared {{ c: {c} }}"),
            Nonlinearity::Linear { c } => write!(out, "Linear {{ c: {c} }}"),
            Nonlinearity::Custom { .. } => write!(out, "Custom"),
        }
    }
}

impl Nonlinearity {
    pub fn log_squared(c: f64) -> Self {
        Nonlinearity::LogSquared { c }
    }

    pub fn linear(c: f64) -> Self {
        Nonlinearity::Linear { c }
    }

    pub fn zero() -> Self {
        Nonlinearity::Linear { c: 0.0 }
    }

    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity::Custom {
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    /// Hoelder exponent of `f'` (metadata only).
    pub fn holder_exponent(&self) -> Option<f64> {
        match self {
            Nonlinearity::LogSquared { .. } | Nonlinearity::Linear { .. } => Some(1.0),
            Nonlinearity::Custom { .. } => None,
        }
    }

    #[inline]
    pub fn f(&self, r: f64) -> f64 {
        match self {
            Nonlinearity::LogSquared { c } => {
                let l = r.abs().ln_1p();
                c * r * l * l
            }
            Nonlinearity::Linear { c } => c * r,
            Nonlinearity::Custom { f, .. } => f(r),
        }
    }

    #[inline]
    pub fn df(&self, r: f64) -> f64 {
        match self {
            Nonlinearity::LogSquared { c } => {
                let a = r.abs();
                let l = a.ln_1p();
                c * (l * l + 2.0 * a * l / (1.0 + a))
            }
            Nonlinearity::Linear { c } => *c,
            Nonlinearity::Custom { df, .. } => df(r),
        }
    }

    /// Secant quotient `(f(r) - f(0)) / r`, or `f'(0)` near zero.
    #[inline]
    pub fn secant(&self, r: f64) -> f64 {
        if r.abs() < SECANT_THRESHOLD {
            self.df(0.0)
        } else {
            (self.f(r) - self.f(0.0)) / r
        }
    }

    /// `order` 0 gives `f(r)`, 1 gives `f'(r)`.
    pub fn eval(&self, r: f64, order: u8) -> Result<f64> {
        if r.is_nan() {
            return Err(Error::invalid("nonlinearity evaluated at NaN"));
        }
        match order {
            0 => Ok(self.f(r)),
            1 => Ok(self.df(r)),
            _ => Err(Error::invalid(format!("derivative order {order} not available"))),
        }
    }

    pub fn apply(&self, y: &QuadField) -> QuadField {
        y.map(|v| self.f(v))
    }

    pub fn apply_derivative(&self, y: &QuadField) -> QuadField {
        y.map(|v| self.df(v))
    }

    pub fn apply_secant(&self, y: &QuadField) -> QuadField {
        y.map(|v| self.secant(v))
    }

    /// Pointwise `G(lambda) = f(y - lambda Y) - f(y) + lambda f'(y) Y`.
    pub fn remainder(&self, y: &QuadField, dir: &QuadField, lambda: f64) -> Result<QuadField> {
        y.zip_map(dir, |a, b| self.remainder_at(a, b, lambda))
    }

    #[inline]
    pub fn remainder_at(&self, y: f64, dir: f64, lambda: f64) -> f64 {
        match self {
            Nonlinearity::Linear { .. } => 0.0,
            _ => self.f(y - lambda * dir) - self.f(y) + lambda * self.df(y) * dir,
        }
    }
}

/// Smooth weight on `[0, T]` vanishing at both ends, normalized so that
/// `eta(T/2)` is close to one. Underflows to exactly zero near the ends.
pub fn eval_eta(t: f64, t_final: f64) -> Result<f64> {
    if !(0.0..=t_final).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, {t_final}]")));
    }
    Ok(cutoff(t, t_final))
}

#[inline]
pub(crate) fn cutoff(t: f64, t_final: f64) -> f64 {
    let e = CUTOFF_EPS;
    let expo = -1.0 / (2.0 * (t + e)) - 1.0 / (2.0 * (t_final - t + e)) + 2.0 / (t_final + e);
    expo.exp()
}

/// Control weight used in the cost `||y||^2 + ||v / eta||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlWeight {
    /// `eta = 1`: the unweighted cost.
    Unit,
    /// The cut-off `eta` of [`eval_eta`].
    #[default]
    CutOff,
}

impl ControlWeight {
    #[inline]
    pub fn eta(&self, t: f64, t_final: f64) -> f64 {
        match self {
            ControlWeight::Unit => 1.0,
            ControlWeight::CutOff => cutoff(t.clamp(0.0, t_final), t_final),
        }
    }
}

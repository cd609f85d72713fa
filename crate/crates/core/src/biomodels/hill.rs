//! Hill dose-response curve in the `𝓔 = Eⁿ` parameterization.

use serde::{Deserialize, Serialize};

use super::jet::Scalar;
use crate::{CrnasError, Result};

/// Max effect `b`, transformed EC50 `𝓔 = Eⁿ`, Hill coefficient `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "HillRepr", into = "HillRepr")]
pub struct HillParams {
    pub b: f64,
    pub ecal: f64,
    pub n: f64,
}

/// Serialized form reports the EC50 itself. `Ecal` is written too so that
/// files round-trip exactly; when absent it is rebuilt from `E`.
#[derive(Serialize, Deserialize)]
struct HillRepr {
    b: f64,
    #[serde(rename = "E")]
    e: f64,
    n: f64,
    #[serde(rename = "Ecal", default, skip_serializing_if = "Option::is_none")]
    ecal: Option<f64>,
}

impl From<HillRepr> for HillParams {
    fn from(r: HillRepr) -> Self {
        match r.ecal {
            Some(ecal) => HillParams { b: r.b, ecal, n: r.n },
            None => HillParams::from_ec50(r.b, r.e, r.n),
        }
    }
}

impl From<HillParams> for HillRepr {
    fn from(h: HillParams) -> Self {
        HillRepr {
            b: h.b,
            e: h.ec50(),
            n: h.n,
            ecal: Some(h.ecal),
        }
    }
}

impl HillParams {
    pub fn from_ec50(b: f64, e: f64, n: f64) -> Self {
        Self {
            b,
            ecal: e.powf(n),
            n,
        }
    }

    pub fn ec50(&self) -> f64 {
        self.ecal.powf(1.0 / self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b < 1.0 && self.ecal > 0.0 && self.n > 0.0) {
            return Err(CrnasError::Contract(format!(
                "Hill parameters out of domain: b={}, 𝓔={}, n={}",
                self.b, self.ecal, self.n
            )));
        }
        Ok(())
    }
}

/// Fraction of viable cells at dose `d`.
pub fn hill(d: f64, params: &HillParams) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(CrnasError::Contract(format!("dose must be nonnegative, got {d}")));
    }
    Ok(hill_bar(d, params.b, params.ecal, params.n))
}

/// Hill curve in its original `(b, E, n)` form.
pub fn hill_original(d: f64, b: f64, e: f64, n: f64) -> f64 {
    b + (1.0 - b) / (1.0 + (d / e).powf(n))
}

/// `1 / (1 + eᶻ)` with its first two derivatives, overflow-free.
fn logistic_tail(z: f64) -> (f64, f64, f64) {
    let s = if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    };
    let ds = -s * (1.0 - s);
    (s, ds, -ds * (1.0 - 2.0 * s))
}

/// `1 / (1 + eᶻ)` lifted to any scalar.
pub(crate) fn sigmoid_neg<T: Scalar>(z: T) -> T {
    let (s, ds, d2s) = logistic_tail(z.value());
    z.lift(s, ds, d2s)
}

/// `b + (1 - b) / (1 + dⁿ/𝓔)`.
pub(crate) fn hill_bar<T: Scalar>(d: f64, b: T, ecal: T, n: T) -> T {
    if d == 0.0 {
        return T::constant(1.0);
    }
    let z = n * d.ln() - ecal.ln();
    b + (T::constant(1.0) - b) * sigmoid_neg(z)
}

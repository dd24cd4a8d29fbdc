use crate::error::{Error, Result};

/// Digamma function `ψ(x) = d/dx ln Γ(x)`, rejecting `x <= 0` and NaN.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("digamma needs x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::digamma(x))
}

//! Comparison models: bottom-up accumulation, autoregression, and plain
//! feed-forward networks.

pub mod ar2;
pub mod fnn;

use crate::error::{Error, Result};

/// The planner's classic estimate: next year's peak is this year's peak
/// plus the known large-customer change. A non-positive result is returned
/// but logged — it signals an implausible reported change, not a math
/// error.
pub fn bottom_up_forecast(prev_peak: f64, large_customer_net_change: f64) -> Result<f64> {
    if !(prev_peak > 0.0) {
        return Err(Error::domain(format!(
            "previous-year peak must be positive, got {prev_peak}"
        )));
    }
    if !large_customer_net_change.is_finite() {
        return Err(Error::domain(format!(
            "large-customer change must be finite, got {large_customer_net_change}"
        )));
    }
    let forecast = prev_peak + large_customer_net_change;
    if forecast <= 0.0 {
        log::warn!(
            "bottom-up forecast {forecast} A is non-positive (peak {prev_peak} + change {large_customer_net_change})"
        );
    }
    Ok(forecast)
}

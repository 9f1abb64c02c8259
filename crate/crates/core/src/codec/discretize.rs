//! Bin schemes for the continuous event and context attributes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const X_BINS: u32 = 105;
pub const Y_BINS: u32 = 68;
pub const DELTA_BINS: u32 = 61;
pub const ROBV_BINS: u32 = 201;
pub const MINUTE_BINS: u32 = 131;
pub const COUNT_BINS: u32 = 16;

pub const ROBV_MIN: f64 = -1.0;
pub const ROBV_MAX: f64 = 1.0;
pub const ROBV_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    X,
    Y,
    DeltaT,
    Robv,
    Minute,
    Counter,
}

impl AttributeKind {
    pub fn bins(self) -> u32 {
        match self {
            AttributeKind::X => X_BINS,
            AttributeKind::Y => Y_BINS,
            AttributeKind::DeltaT => DELTA_BINS,
            AttributeKind::Robv => ROBV_BINS,
            AttributeKind::Minute => MINUTE_BINS,
            AttributeKind::Counter => COUNT_BINS,
        }
    }
}

fn clip_bin(v: f64, max_bin: u32) -> u32 {
    // NaN never reaches here; callers check finiteness first.
    v.max(0.0).min(max_bin as f64) as u32
}

pub fn discretize(kind: AttributeKind, value: f64) -> Result<u32> {
    if !value.is_finite() {
        return Err(Error::Domain(format!("cannot discretize non-finite {kind:?} value {value}")));
    }
    let last = kind.bins() - 1;
    let bin = match kind {
        AttributeKind::X | AttributeKind::Y | AttributeKind::Minute | AttributeKind::Counter => {
            clip_bin(value.floor(), last)
        }
        AttributeKind::DeltaT => clip_bin(value.round(), last),
        AttributeKind::Robv => {
            let v = value.clamp(ROBV_MIN, ROBV_MAX);
            clip_bin(((v - ROBV_MIN) / ROBV_STEP).round(), last)
        }
    };
    Ok(bin)
}

/// Representative value of a bin: the cell center for floor-binned
/// coordinates, the rounding target otherwise.
pub fn undiscretize(kind: AttributeKind, bin: u32) -> f64 {
    let bin = bin.min(kind.bins() - 1);
    match kind {
        AttributeKind::X | AttributeKind::Y => bin as f64 + 0.5,
        AttributeKind::DeltaT | AttributeKind::Minute | AttributeKind::Counter => bin as f64,
        AttributeKind::Robv => ROBV_MIN + bin as f64 * ROBV_STEP,
    }
}

/// Precomputed bin centers for the rOBV block, in bin order.
pub fn robv_centers() -> Vec<f64> {
    (0..ROBV_BINS).map(|b| undiscretize(AttributeKind::Robv, b)).collect()
}

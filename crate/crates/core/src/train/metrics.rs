use serde::{Deserialize, Serialize};

use crate::codec::discretize::{undiscretize, AttributeKind};
use crate::codec::Slot;
use crate::error::{Error, Result};

/// Per-attribute next-event metrics. MAEs are on the original scale, using
/// bin centers for both prediction and target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc_team: f64,
    pub acc_type: f64,
    pub acc_success: f64,
    pub mae_x: f64,
    pub mae_y: f64,
    pub mae_delta: f64,
    pub mae_robv: f64,
    pub n_events_evaluated: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    sum: f64,
    n: u64,
}

impl Tally {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Accumulates in-block predictions against targets, both given as the
/// value within the slot's block (bin index, type index, side index).
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    team: Tally,
    kind: Tally,
    success: Tally,
    x: Tally,
    y: Tally,
    delta: Tally,
    robv: Tally,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Slots that carry no metric (episode end, unpredicted slots) are ignored.
    pub fn record(&mut self, slot: Slot, predicted: u32, target: u32) {
        let hit = if predicted == target { 1.0 } else { 0.0 };
        let abs = |k: AttributeKind| (undiscretize(k, predicted) - undiscretize(k, target)).abs();
        match slot {
            Slot::Team => self.team.add(hit),
            Slot::ActionType => self.kind.add(hit),
            Slot::Success => self.success.add(hit),
            Slot::X => self.x.add(abs(AttributeKind::X)),
            Slot::Y => self.y.add(abs(AttributeKind::Y)),
            Slot::Delta => self.delta.add(abs(AttributeKind::DeltaT)),
            Slot::Robv => self.robv.add(abs(AttributeKind::Robv)),
            _ => {}
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in [
            (&mut self.team, &other.team),
            (&mut self.kind, &other.kind),
            (&mut self.success, &other.success),
            (&mut self.x, &other.x),
            (&mut self.y, &other.y),
            (&mut self.delta, &other.delta),
            (&mut self.robv, &other.robv),
        ] {
            a.sum += b.sum;
            a.n += b.n;
        }
    }

    /// Events are counted by their team slot, the first predicted slot of
    /// each event.
    pub fn report(&self) -> Result<MetricReport> {
        if self.team.n == 0 {
            return Err(Error::Empty("no events were evaluated".into()));
        }
        Ok(MetricReport {
            acc_team: self.team.mean(),
            acc_type: self.kind.mean(),
            acc_success: self.success.mean(),
            mae_x: self.x.mean(),
            mae_y: self.y.mean(),
            mae_delta: self.delta.mean(),
            mae_robv: self.robv.mean(),
            n_events_evaluated: self.team.n,
        })
    }
}

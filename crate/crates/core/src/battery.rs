//! Battery charge bookkeeping and per-source drain attribution.
//!
//! Every consumer is a [`DrainSource`] drawing a constant current while it is
//! in the active set. Drain is integrated analytically over each interval, so
//! splitting an interval into sub-steps never changes the result beyond
//! floating-point rounding. Charge is tracked in mAh, currents in mA and
//! instants in simulated minutes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for all charge comparisons.
pub const CHARGE_EPSILON_MAH: f64 = 1e-6;

const MINUTES_PER_HOUR: f64 = 60.0;

// Segment ends come from `start + hours * 60`, which can land a few ulps
// short of a whole minute.
const HISTORY_SLACK_MIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatteryError {
    #[error("drain source `{0}` is already registered")]
    DuplicateSource(String),
    #[error("unknown drain source id {0}")]
    UnknownSource(usize),
    #[error("drain source name must be non-empty")]
    EmptyName,
    #[error("drain rate must be finite and >= 0, got {0}")]
    InvalidRate(f64),
    #[error("battery capacity must be finite and > 0, got {0}")]
    InvalidCapacity(f64),
    #[error("remaining charge {remaining} outside [0, {capacity}]")]
    InvalidRemaining { remaining: f64, capacity: f64 },
    #[error("duration must be finite and >= 0, got {0}")]
    InvalidDuration(f64),
    #[error("battery is depleted")]
    Depleted,
    #[error("window [{start}, {end}) is empty or inverted")]
    EmptyWindow { start: u64, end: u64 },
    #[error("window [{start}, {end}) lies outside recorded history [{history_start}, {history_end}]")]
    WindowOutOfRange {
        start: u64,
        end: u64,
        history_start: f64,
        history_end: f64,
    },
}

impl BatteryError {
    pub fn code(&self) -> &'static str {
        match self {
            BatteryError::DuplicateSource(_) => "duplicate-name",
            BatteryError::UnknownSource(_) => "unknown-source",
            BatteryError::EmptyName => "invalid-name",
            BatteryError::InvalidRate(_) => "invalid-rate",
            BatteryError::InvalidCapacity(_) | BatteryError::InvalidRemaining { .. } => {
                "invalid-capacity"
            }
            BatteryError::InvalidDuration(_) => "invalid-duration",
            BatteryError::Depleted => "depleted-battery",
            BatteryError::EmptyWindow { .. } => "empty-window",
            BatteryError::WindowOutOfRange { .. } => "window-out-of-range",
        }
    }
}

/// What a drain source belongs to in a breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceCategory {
    Platform,
    Application,
    Timer,
    Peripheral,
    MemoryRetention,
}

impl SourceCategory {
    pub const ALL: [SourceCategory; 5] = [
        SourceCategory::Platform,
        SourceCategory::Application,
        SourceCategory::Timer,
        SourceCategory::Peripheral,
        SourceCategory::MemoryRetention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceCategory::Platform => "platform",
            SourceCategory::Application => "application",
            SourceCategory::Timer => "timer",
            SourceCategory::Peripheral => "peripheral",
            SourceCategory::MemoryRetention => "memory-retention",
        }
    }
}

impl fmt::Display for SourceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown source category `{s}`"))
    }
}

/// A named consumer drawing a constant current while active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrainSource {
    pub name: String,
    pub category: SourceCategory,
    pub rate_ma: f64,
}

impl DrainSource {
    pub fn new(
        name: impl Into<String>,
        category: SourceCategory,
        rate_ma: f64,
    ) -> Result<Self, BatteryError> {
        let name = name.into();
        if name.is_empty() {
            return Err(BatteryError::EmptyName);
        }
        if !rate_ma.is_finite() || rate_ma < 0.0 {
            return Err(BatteryError::InvalidRate(rate_ma));
        }
        Ok(Self {
            name,
            category,
            rate_ma,
        })
    }
}

/// Handle returned by [`SourceRegistry::register`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceId(pub usize);

/// Set of sources drawing current during an interval.
pub type ActiveSet = BTreeSet<SourceId>;

/// All drain sources known to the battery monitor, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceRegistry {
    sources: Vec<DrainSource>,
}

impl SourceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, source: DrainSource) -> Result<SourceId, BatteryError> {
        if self.id_of(&source.name).is_some() {
            return Err(BatteryError::DuplicateSource(source.name));
        }
        // Re-validate in case the struct was built by hand.
        let source = DrainSource::new(source.name, source.category, source.rate_ma)?;
        self.sources.push(source);
        Ok(SourceId(self.sources.len() - 1))
    }

    pub fn get(&self, id: SourceId) -> Result<&DrainSource, BatteryError> {
        self.sources
            .get(id.0)
            .ok_or(BatteryError::UnknownSource(id.0))
    }

    pub fn id_of(&self, name: &str) -> Option<SourceId> {
        self.sources
            .iter()
            .position(|s| s.name == name)
            .map(SourceId)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SourceId, &DrainSource)> {
        self.sources
            .iter()
            .enumerate()
            .map(|(i, s)| (SourceId(i), s))
    }

    /// Sum of the rates of `active`, in mA.
    pub fn total_rate(&self, active: &ActiveSet) -> Result<f64, BatteryError> {
        active
            .iter()
            .map(|&id| self.get(id).map(|s| s.rate_ma))
            .sum()
    }
}

/// Remaining charge of one battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub capacity_mah: f64,
    pub remaining_mah: f64,
    /// Exact instant (simulated minutes) at which the charge first hit zero.
    pub depleted_at: Option<f64>,
}

impl BatteryState {
    /// A fully charged battery.
    pub fn new(capacity_mah: f64) -> Result<Self, BatteryError> {
        Self::with_remaining(capacity_mah, capacity_mah)
    }

    pub fn with_remaining(capacity_mah: f64, remaining_mah: f64) -> Result<Self, BatteryError> {
        if !capacity_mah.is_finite() || capacity_mah <= 0.0 {
            return Err(BatteryError::InvalidCapacity(capacity_mah));
        }
        if !remaining_mah.is_finite() || !(0.0..=capacity_mah).contains(&remaining_mah) {
            return Err(BatteryError::InvalidRemaining {
                remaining: remaining_mah,
                capacity: capacity_mah,
            });
        }
        Ok(Self {
            capacity_mah,
            remaining_mah,
            depleted_at: None,
        })
    }

    pub fn is_depleted(&self) -> bool {
        self.depleted_at.is_some()
    }

    pub fn consumed_mah(&self) -> f64 {
        self.capacity_mah - self.remaining_mah
    }

    /// Remaining charge as a percentage of capacity.
    pub fn remaining_pct(&self) -> f64 {
        100.0 * self.remaining_mah / self.capacity_mah
    }

    /// Removes a lump of charge at instant `at`, clamping at zero. Returns the
    /// amount actually removed.
    pub fn deduct(&mut self, amount_mah: f64, at: f64) -> Result<f64, BatteryError> {
        if self.is_depleted() {
            return Err(BatteryError::Depleted);
        }
        if !amount_mah.is_finite() || amount_mah < 0.0 {
            return Err(BatteryError::InvalidRate(amount_mah));
        }
        if self.remaining_mah - amount_mah <= CHARGE_EPSILON_MAH && amount_mah > 0.0 {
            let taken = self.remaining_mah;
            self.remaining_mah = 0.0;
            self.depleted_at = Some(at);
            Ok(taken)
        } else {
            self.remaining_mah -= amount_mah;
            Ok(amount_mah)
        }
    }
}

/// Consumption attributed to each active source over `[start, end]`.
///
/// A segment with `start == end` is an instantaneous charge (a transition cost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrainSegment {
    pub start: f64,
    pub end: f64,
    pub consumed: Vec<(SourceId, f64)>,
}

impl DrainSegment {
    pub fn total_mah(&self) -> f64 {
        self.consumed.iter().map(|(_, mah)| mah).sum()
    }

    pub fn lump(at: f64, source: SourceId, mah: f64) -> Self {
        Self {
            start: at,
            end: at,
            consumed: vec![(source, mah)],
        }
    }
}

/// Drains `battery` by the sources in `active` for `duration_h` hours starting
/// at minute `start`.
///
/// Consumption is split pro rata to each source's rate. If the battery runs
/// out inside the interval the charge clamps to zero, `depleted_at` is set to
/// the exact crossing instant and the returned segment ends there.
pub fn integrate_drain(
    battery: &BatteryState,
    registry: &SourceRegistry,
    active: &ActiveSet,
    start: f64,
    duration_h: f64,
) -> Result<(BatteryState, DrainSegment), BatteryError> {
    if !duration_h.is_finite() || duration_h < 0.0 {
        return Err(BatteryError::InvalidDuration(duration_h));
    }
    if battery.is_depleted() {
        return Err(BatteryError::Depleted);
    }
    let rates = active
        .iter()
        .map(|&id| registry.get(id).map(|s| (id, s.rate_ma)))
        .collect::<Result<Vec<_>, _>>()?;
    let total_rate: f64 = rates.iter().map(|(_, r)| r).sum();
    let demand = total_rate * duration_h;

    let mut next = battery.clone();
    let end = start + duration_h * MINUTES_PER_HOUR;
    if demand > 0.0 && battery.remaining_mah - demand <= CHARGE_EPSILON_MAH {
        let hours_left = battery.remaining_mah / total_rate;
        let depleted_at = start + hours_left * MINUTES_PER_HOUR;
        let consumed = rates
            .iter()
            .map(|&(id, r)| (id, r * hours_left))
            .collect();
        next.remaining_mah = 0.0;
        next.depleted_at = Some(depleted_at);
        return Ok((
            next,
            DrainSegment {
                start,
                end: depleted_at,
                consumed,
            },
        ));
    }

    next.remaining_mah -= demand;
    let consumed = rates
        .iter()
        .map(|&(id, r)| (id, r * duration_h))
        .collect();
    Ok((
        next,
        DrainSegment {
            start,
            end,
            consumed,
        },
    ))
}

/// Per-source line of a [`Breakdown`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceShare {
    pub name: String,
    pub category: SourceCategory,
    pub consumed_mah: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: SourceCategory,
    pub consumed_mah: f64,
    pub share: f64,
}

/// Consumption over a window, by source and by category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub window: (u64, u64),
    pub total_mah: f64,
    pub per_source: Vec<SourceShare>,
    pub per_category: Vec<CategoryShare>,
}

/// Append-only record of every drain segment and lump charge.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsumptionLedger {
    start: f64,
    end: f64,
    entries: Vec<DrainSegment>,
}

impl ConsumptionLedger {
    pub fn starting_at(start: f64) -> Self {
        Self {
            start,
            end: start,
            entries: Vec::new(),
        }
    }

    pub fn history(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn entries(&self) -> &[DrainSegment] {
        &self.entries
    }

    /// Extends recorded history to `t` without consumption.
    pub fn extend_to(&mut self, t: f64) {
        if t > self.end {
            self.end = t;
        }
    }

    pub fn record(&mut self, segment: DrainSegment) {
        self.extend_to(segment.end);
        self.entries.push(segment);
    }

    pub fn total_mah(&self) -> f64 {
        self.entries.iter().map(DrainSegment::total_mah).sum()
    }

    /// Builds a breakdown over `[start, end)`. Segments straddling a window
    /// edge contribute pro rata to their overlap. Lump charges count when they
    /// fall inside the window, or exactly on its end when that is the end of
    /// history.
    pub fn breakdown(
        &self,
        registry: &SourceRegistry,
        start: u64,
        end: u64,
    ) -> Result<Breakdown, BatteryError> {
        if start >= end {
            return Err(BatteryError::EmptyWindow { start, end });
        }
        let (ws, we) = (start as f64, end as f64);
        if ws < self.start - HISTORY_SLACK_MIN || we > self.end + HISTORY_SLACK_MIN {
            return Err(BatteryError::WindowOutOfRange {
                start,
                end,
                history_start: self.start,
                history_end: self.end,
            });
        }

        let mut per_id: Vec<Option<f64>> = vec![None; registry.len()];
        for seg in &self.entries {
            let fraction = if seg.end > seg.start {
                let overlap = seg.end.min(we) - seg.start.max(ws);
                if overlap <= 0.0 {
                    continue;
                }
                overlap / (seg.end - seg.start)
            } else {
                let inside = (ws..we).contains(&seg.start) || (seg.start == we && (we - self.end).abs() <= HISTORY_SLACK_MIN);
                if !inside {
                    continue;
                }
                1.0
            };
            for &(id, mah) in &seg.consumed {
                let slot = per_id
                    .get_mut(id.0)
                    .ok_or(BatteryError::UnknownSource(id.0))?;
                *slot = Some(slot.unwrap_or(0.0) + mah * fraction);
            }
        }

        let total: f64 = per_id.iter().flatten().sum();
        let share = |mah: f64| if total > 0.0 { mah / total } else { 0.0 };

        let per_source: Vec<SourceShare> = registry
            .iter()
            .filter_map(|(id, src)| {
                per_id[id.0].map(|mah| SourceShare {
                    name: src.name.clone(),
                    category: src.category,
                    consumed_mah: mah,
                    share: share(mah),
                })
            })
            .collect();

        let per_category = SourceCategory::ALL
            .into_iter()
            .filter_map(|cat| {
                let mut members = per_source.iter().filter(|s| s.category == cat).peekable();
                members.peek()?;
                let mah: f64 = members.map(|s| s.consumed_mah).sum();
                Some(CategoryShare {
                    category: cat,
                    consumed_mah: mah,
                    share: share(mah),
                })
            })
            .collect();

        Ok(Breakdown {
            window: (start, end),
            total_mah: total,
            per_source,
            per_category,
        })
    }
}

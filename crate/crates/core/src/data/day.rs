use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::frame::ThermalFrame;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomalous,
    Unlabeled,
}

impl Label {
    pub fn code(self) -> i8 {
        match self {
            Label::Unlabeled => -1,
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }

    pub fn from_code(code: i8) -> Result<Self> {
        match code {
            -1 => Ok(Label::Unlabeled),
            0 => Ok(Label::Normal),
            1 => Ok(Label::Anomalous),
            other => Err(Error::Format { what: "label", reason: format!("code {other}") }),
        }
    }

    pub fn from_flag(anomalous: bool) -> Self {
        if anomalous {
            Label::Anomalous
        } else {
            Label::Normal
        }
    }

    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

/// Position within the power phase: starting ramp, plateau, ending decline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Segment {
    S,
    M,
    E,
    Unassigned,
}

impl Segment {
    pub fn code(self) -> i8 {
        match self {
            Segment::Unassigned => -1,
            Segment::S => 0,
            Segment::M => 1,
            Segment::E => 2,
        }
    }

    pub fn from_code(code: i8) -> Result<Self> {
        match code {
            -1 => Ok(Segment::Unassigned),
            0 => Ok(Segment::S),
            1 => Ok(Segment::M),
            2 => Ok(Segment::E),
            other => Err(Error::Format { what: "segment", reason: format!("code {other}") }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    FreezeStreak,
    ColdPatch,
    GlobalDrop,
    HotSpot,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 4] = [
        AnomalyKind::FreezeStreak,
        AnomalyKind::ColdPatch,
        AnomalyKind::GlobalDrop,
        AnomalyKind::HotSpot,
    ];

    /// On-disk code; `0` is reserved for "none".
    pub fn code(self) -> u8 {
        match self {
            AnomalyKind::FreezeStreak => 1,
            AnomalyKind::ColdPatch => 2,
            AnomalyKind::GlobalDrop => 3,
            AnomalyKind::HotSpot => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Option<Self>> {
        match code {
            0 => Ok(None),
            1 => Ok(Some(AnomalyKind::FreezeStreak)),
            2 => Ok(Some(AnomalyKind::ColdPatch)),
            3 => Ok(Some(AnomalyKind::GlobalDrop)),
            4 => Ok(Some(AnomalyKind::HotSpot)),
            other => Err(Error::UnknownKind(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::FreezeStreak => "freeze_streak",
            AnomalyKind::ColdPatch => "cold_patch",
            AnomalyKind::GlobalDrop => "global_drop",
            AnomalyKind::HotSpot => "hot_spot",
        }
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown anomaly kind `{s}`")))
    }
}

/// Opaque identifier of one operational day.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DayId(pub String);

impl fmt::Display for DayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DayId {
    fn from(s: &str) -> Self {
        DayId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub frame: ThermalFrame<S>,
    /// Seconds since epoch.
    pub t: f64,
    pub y: Label,
    pub segment: Segment,
    pub day_id: DayId,
    /// Simulator ground truth; `None` for normal or real-world samples.
    pub anomaly_kind: Option<AnomalyKind>,
}

/// The time-ordered samples of one operational day.
///
/// `t0` is the start of the day's operation. It equals the first sample's
/// timestamp for a complete day and is retained when a day is filtered down
/// to a subset of its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DaySequence<S> {
    pub day_id: DayId,
    pub samples: Vec<Sample<S>>,
    pub t0: f64,
}

impl<S: Scalar> DaySequence<S> {
    pub fn new(day_id: DayId, samples: Vec<Sample<S>>) -> Result<Self> {
        let t0 = samples.first().map_or(0.0, |s| s.t);
        let day = Self { day_id, samples, t0 };
        day.validate()?;
        Ok(day)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::Ordering { index: i + 1, prev: w[0].t, next: w[1].t });
            }
        }
        if let Some(s) = self.samples.iter().find(|s| s.day_id != self.day_id) {
            return Err(Error::config(format!(
                "sample of day {} inside day {}",
                s.day_id, self.day_id
            )));
        }
        if let Some(first) = self.samples.first() {
            if first.t < self.t0 {
                return Err(Error::config(format!(
                    "day {} starts at {} before t0 {}",
                    self.day_id, first.t, self.t0
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Keeps samples matching `keep`, preserving the day's `t0`.
    pub fn filtered(&self, keep: impl Fn(&Sample<S>) -> bool) -> Self {
        Self {
            day_id: self.day_id.clone(),
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            t0: self.t0,
        }
    }

    pub fn frame_means(&self) -> Vec<S> {
        self.samples.iter().map(|s| s.frame.mean()).collect()
    }

    pub fn has_anomaly(&self) -> bool {
        self.samples.iter().any(|s| s.y.is_anomalous())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetupTag {
    /// Training and validation restricted to plateau samples.
    #[serde(rename = "Tr#1")]
    Tr1,
    /// Training and validation over all segments.
    #[serde(rename = "Tr#2")]
    Tr2,
}

impl fmt::Display for SetupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetupTag::Tr1 => "Tr#1",
            SetupTag::Tr2 => "Tr#2",
        })
    }
}

impl FromStr for SetupTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Tr#1" | "tr1" | "1" => Ok(SetupTag::Tr1),
            "Tr#2" | "tr2" | "2" => Ok(SetupTag::Tr2),
            other => Err(Error::config(format!("unknown setup `{other}`"))),
        }
    }
}

/// Disjoint training (all normal), validation and test days.
#[derive(Debug, Clone)]
pub struct DatasetSplit<S> {
    pub train: Vec<DaySequence<S>>,
    pub validation: Vec<DaySequence<S>>,
    pub test: Vec<DaySequence<S>>,
    pub setup: SetupTag,
}

impl<S: Scalar> DatasetSplit<S> {
    /// Assembles a split from whole days, applying the setup's segment
    /// restriction to the training and validation sets.
    pub fn from_days(
        train: Vec<DaySequence<S>>,
        validation: Vec<DaySequence<S>>,
        test: Vec<DaySequence<S>>,
        setup: SetupTag,
    ) -> Result<Self> {
        let restrict = |days: Vec<DaySequence<S>>| -> Vec<DaySequence<S>> {
            match setup {
                SetupTag::Tr1 => days.iter().map(|d| d.filtered(|s| s.segment == Segment::M)).collect(),
                SetupTag::Tr2 => days,
            }
        };
        let split = Self { train: restrict(train), validation: restrict(validation), test, setup };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for day in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(day.day_id.clone()) {
                return Err(Error::config(format!("day {} appears in two sets", day.day_id)));
            }
        }
        for day in &self.train {
            if let Some(s) = day.samples.iter().find(|s| s.y != Label::Normal) {
                return Err(Error::config(format!(
                    "training day {} holds a non-normal sample at t={}",
                    day.day_id, s.t
                )));
            }
        }
        if self.setup == SetupTag::Tr1 {
            for day in self.train.iter().chain(&self.validation) {
                if day.samples.iter().any(|s| s.segment != Segment::M) {
                    return Err(Error::config(format!(
                        "Tr#1 day {} holds a non-M sample",
                        day.day_id
                    )));
                }
            }
        }
        Ok(())
    }
}

//! Frames, samples, days, splits and context-window construction.

mod day;
pub mod format;
mod frame;
mod window;

pub use day::{AnomalyKind, DatasetSplit, DayId, DaySequence, Label, Sample, Segment, SetupTag};
pub use format::{read_day, write_day, DroppedDay, Manifest};
pub use frame::ThermalFrame;
pub use window::{build_context_windows, compute_time_offsets, ContextWindow, CoreConfig, TimeOffsets, WindowEntry};

//! Dataset text format and streaming schedules.

mod schedule;
mod xmlc;

pub use schedule::{initial_count, make_schedule, SeededRng, StreamSchedule};
pub use xmlc::{parse_xmlc, parse_xmlc_str, write_xmlc, write_xmlc_string};

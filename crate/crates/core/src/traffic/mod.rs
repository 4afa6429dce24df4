//! Request originator: simulated users of a profile sending purchase
//! requests to the store on a discrete-event schedule.

mod clock;
mod generator;

pub use clock::{ClockMode, SimClock, MICROS_PER_SECOND};
pub use generator::{GeneratorStats, TrafficError, TrafficGenerator};

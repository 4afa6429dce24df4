use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const MICROS_PER_SECOND: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Simulated time advances as fast as events can be processed.
    Virtual,
    /// Simulated time is paced against the wall clock at `scale` simulated
    /// seconds per wall second.
    Realtime,
}

/// Simulated time in microseconds. Only moves forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimClock {
    pub mode: ClockMode,
    pub scale: f64,
    now_us: u64,
}

impl SimClock {
    pub fn virtual_time() -> Self {
        Self { mode: ClockMode::Virtual, scale: 1.0, now_us: 0 }
    }

    pub fn realtime(scale: f64) -> Result<Self, String> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(format!("time scale must be positive, got {scale}"));
        }
        Ok(Self { mode: ClockMode::Realtime, scale, now_us: 0 })
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    /// Moves the clock forward by `step_us`, sleeping first in realtime mode.
    pub fn advance(&mut self, step_us: u64) {
        if self.mode == ClockMode::Realtime && step_us > 0 {
            let wall = step_us as f64 / self.scale / MICROS_PER_SECOND as f64;
            std::thread::sleep(Duration::from_secs_f64(wall));
        }
        self.now_us += step_us;
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::virtual_time()
    }
}

//! Battery timer: a one-shot alarm over a simulated clock whose wake-up
//! instant lives in a small checksummed image that survives power loss.
//!
//! Image layout (20 bytes, little endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "BTMR"
//!      4     1  format version (1)
//!      5     1  armed flag (0 or 1)
//!      6     2  reserved, zero
//!      8     8  wake_at, simulated minutes (u64)
//!     16     4  CRC-32 (IEEE) of bytes 0..16
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IMAGE_LEN: usize = 20;
const MAGIC: &[u8; 4] = b"BTMR";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum TimerError {
    #[error("wake instant {wake_at} is not after now ({now})")]
    PastInstant { wake_at: u64, now: u64 },
    #[error("timer is already armed for {0}")]
    AlreadyArmed(u64),
    #[error("clock cannot move backwards from {now} to {to}")]
    ClockRegression { now: u64, to: u64 },
    #[error("corrupt timer image: {0}")]
    CorruptImage(String),
    #[error("timer image i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl TimerError {
    pub fn code(&self) -> &'static str {
        match self {
            TimerError::PastInstant { .. } => "past-instant",
            TimerError::AlreadyArmed(_) => "already-armed",
            TimerError::ClockRegression { .. } => "clock-regression",
            TimerError::CorruptImage(_) => "corrupt-image",
            TimerError::Io(_) => "io-error",
        }
    }
}

/// Monotone simulated clock with one-minute resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    now: u64,
}

impl SimClock {
    pub fn new(now: u64) -> Self {
        Self { now }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn advance_to(&mut self, to: u64) -> Result<(), TimerError> {
        if to < self.now {
            return Err(TimerError::ClockRegression { now: self.now, to });
        }
        self.now = to;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimerMemory {
    pub armed: bool,
    pub wake_at: u64,
}

impl TimerMemory {
    pub fn encode(&self) -> [u8; IMAGE_LEN] {
        let mut out = [0u8; IMAGE_LEN];
        out[0..4].copy_from_slice(MAGIC);
        out[4] = VERSION;
        out[5] = u8::from(self.armed);
        out[8..16].copy_from_slice(&self.wake_at.to_le_bytes());
        let crc = crc32fast::hash(&out[0..16]);
        out[16..20].copy_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TimerError> {
        if bytes.len() != IMAGE_LEN {
            return Err(TimerError::CorruptImage(format!(
                "expected {IMAGE_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let stored = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if crc32fast::hash(&bytes[0..16]) != stored {
            return Err(TimerError::CorruptImage("checksum mismatch".into()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(TimerError::CorruptImage("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(TimerError::CorruptImage(format!(
                "unsupported version {}",
                bytes[4]
            )));
        }
        let armed = match bytes[5] {
            0 => false,
            1 => true,
            other => {
                return Err(TimerError::CorruptImage(format!("bad armed flag {other}")));
            }
        };
        if bytes[6..8] != [0, 0] {
            return Err(TimerError::CorruptImage("reserved bytes set".into()));
        }
        Ok(Self {
            armed,
            wake_at: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
        })
    }
}

/// Emitted once when the clock reaches an armed instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WakeEvent {
    pub at: u64,
}

/// One-shot alarm. Every state change rewrites the image (and the backing
/// file, when one is configured) before returning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatteryTimer {
    memory: TimerMemory,
    image: [u8; IMAGE_LEN],
    path: Option<PathBuf>,
}

impl Default for BatteryTimer {
    fn default() -> Self {
        Self::new()
    }
}

impl BatteryTimer {
    pub fn new() -> Self {
        let memory = TimerMemory::default();
        Self {
            memory,
            image: memory.encode(),
            path: None,
        }
    }

    /// A disarmed timer persisted to `path`.
    pub fn with_image_file(path: impl Into<PathBuf>) -> Result<Self, TimerError> {
        let mut timer = Self::new();
        timer.path = Some(path.into());
        timer.persist(timer.memory)?;
        Ok(timer)
    }

    /// Rebuilds a timer from an existing image file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TimerError> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let mut timer = Self::from_image(&bytes)?;
        timer.path = Some(path.to_path_buf());
        Ok(timer)
    }

    pub fn from_image(bytes: &[u8]) -> Result<Self, TimerError> {
        let memory = TimerMemory::decode(bytes)?;
        Ok(Self {
            memory,
            image: memory.encode(),
            path: None,
        })
    }

    pub fn memory(&self) -> TimerMemory {
        self.memory
    }

    pub fn image(&self) -> &[u8; IMAGE_LEN] {
        &self.image
    }

    pub fn is_armed(&self) -> bool {
        self.memory.armed
    }

    /// Armed wake instant, if any.
    pub fn pending(&self) -> Option<u64> {
        self.memory.armed.then_some(self.memory.wake_at)
    }

    pub fn arm(&mut self, wake_at: u64, now: u64) -> Result<(), TimerError> {
        if self.memory.armed {
            return Err(TimerError::AlreadyArmed(self.memory.wake_at));
        }
        if wake_at <= now {
            return Err(TimerError::PastInstant { wake_at, now });
        }
        self.persist(TimerMemory {
            armed: true,
            wake_at,
        })
    }

    /// Cancels a pending alarm. Disarming an idle timer is a no-op.
    pub fn disarm(&mut self) -> Result<(), TimerError> {
        if !self.memory.armed {
            return Ok(());
        }
        self.persist(TimerMemory {
            armed: false,
            wake_at: self.memory.wake_at,
        })
    }

    /// Moves `clock` to `to`. If the alarm falls in `(now, to]` (or at `now`
    /// itself) it fires exactly once, stamped with the armed instant.
    pub fn advance(&mut self, clock: &mut SimClock, to: u64) -> Result<Option<WakeEvent>, TimerError> {
        clock.advance_to(to)?;
        match self.pending() {
            Some(at) if at <= to => {
                self.disarm()?;
                Ok(Some(WakeEvent { at }))
            }
            _ => Ok(None),
        }
    }

    /// Simulates losing all power: the timer is rebuilt only from what was
    /// persisted (the image file when configured, else the in-timer image).
    pub fn power_cut_roundtrip(&self) -> Result<BatteryTimer, TimerError> {
        match &self.path {
            Some(path) => Self::load(path),
            None => Self::from_image(&self.image),
        }
    }

    fn persist(&mut self, memory: TimerMemory) -> Result<(), TimerError> {
        let image = memory.encode();
        if let Some(path) = &self.path {
            write_atomically(path, &image)?;
        }
        self.memory = memory;
        self.image = image;
        Ok(())
    }
}

pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

//! Multi-bank on-chip SRAM with per-bank power states.

use std::path::Path;

use serde::Serialize;

use crate::error::{ConfigError, Error};
use crate::power::state::{PowerState, PowerStateMachine, TransitionLatencies};

/// Pattern returned by reads of a bank that lost its contents.
pub const POISON_WORD: u32 = 0x0BAD_0BAD;

/// Default bank size.
pub const DEFAULT_BANK_SIZE: u32 = 32 * 1024;

/// Why a slave refused an access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessFault {
    Gated,
    Retained,
    PoweredOff,
    /// Address decodes to nothing.
    Decode,
    /// Register rejected the write (e.g. out-of-envelope FLL request).
    Rejected,
}

impl AccessFault {
    pub fn from_state(state: PowerState) -> Option<AccessFault> {
        match state {
            PowerState::Active => None,
            PowerState::ClockGated => Some(AccessFault::Gated),
            PowerState::Retention => Some(AccessFault::Retained),
            PowerState::Off => Some(AccessFault::PoweredOff),
        }
    }
}

/// Applies a byte-enable mask to a word update.
pub fn merge_bytes(old: u32, new: u32, byte_enable: u8) -> u32 {
    let mut mask = 0u32;
    for b in 0..4 {
        if byte_enable & (1 << b) != 0 {
            mask |= 0xFF << (8 * b);
        }
    }
    (old & !mask) | (new & mask)
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    id: usize,
    words: Vec<u32>,
    power: PowerStateMachine,
    pub reads: u64,
    pub writes: u64,
}

impl MemoryBank {
    pub fn new(id: usize, size_bytes: u32) -> Result<Self, ConfigError> {
        if size_bytes == 0 || !size_bytes.is_multiple_of(4) {
            return Err(ConfigError::invalid(format!(
                "bank size {size_bytes} is not a positive multiple of 4"
            )));
        }
        Ok(MemoryBank {
            id,
            words: vec![0; size_bytes as usize / 4],
            power: PowerStateMachine::new(PowerState::Active),
            reads: 0,
            writes: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn size_bytes(&self) -> u32 {
        self.words.len() as u32 * 4
    }

    pub fn power_state(&self) -> PowerState {
        self.power.effective()
    }

    pub fn power(&self) -> &PowerStateMachine {
        &self.power
    }

    pub fn power_machine(&self) -> &PowerStateMachine {
        &self.power
    }

    /// One word access at a byte offset. Only an active bank serves requests.
    pub fn access(
        &mut self,
        offset: u32,
        is_write: bool,
        byte_enable: u8,
        write_data: u32,
    ) -> Result<u32, AccessFault> {
        assert!(
            offset as usize + 3 < self.words.len() * 4,
            "bank {} offset {offset:#x} out of range; address map is inconsistent",
            self.id
        );
        if let Some(fault) = AccessFault::from_state(self.power.effective()) {
            return Err(fault);
        }
        let idx = offset as usize / 4;
        if is_write {
            self.words[idx] = merge_bytes(self.words[idx], write_data, byte_enable);
            self.writes += 1;
            Ok(0)
        } else {
            self.reads += 1;
            Ok(self.words[idx])
        }
    }

    /// Schedules a power transition and returns its latency in cycles.
    pub fn set_power_state(
        &mut self,
        state: PowerState,
        latencies: &TransitionLatencies,
    ) -> Result<u32, ConfigError> {
        self.power.request(state, latencies)
    }

    /// Advances any in-flight transition by one cycle. Entering `Off` destroys
    /// the contents.
    pub fn tick_power(&mut self) {
        if let Some(done) = self.power.tick() {
            if done.to == PowerState::Off {
                self.words.fill(POISON_WORD);
            }
        }
    }

    /// Immediate state change used for scenario initial conditions.
    pub fn force_power_state(&mut self, state: PowerState) {
        if state == PowerState::Off {
            self.words.fill(POISON_WORD);
        }
        self.power.force(state);
    }

    /// Backdoor read used by loaders and tests; ignores power state.
    pub fn peek(&self, offset: u32) -> u32 {
        self.words[offset as usize / 4]
    }

    pub fn poke(&mut self, offset: u32, value: u32) {
        self.words[offset as usize / 4] = value;
    }

    pub fn contents(&self) -> &[u32] {
        &self.words
    }
}

/// Reads a flat little-endian image into words, zero-padding a short tail.
pub fn read_image(path: &Path) -> Result<Vec<u32>, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes
        .chunks(4)
        .map(|c| {
            let mut w = [0u8; 4];
            w[..c.len()].copy_from_slice(c);
            u32::from_le_bytes(w)
        })
        .collect())
}

/// Writes words as a flat little-endian image.
pub fn write_image(path: &Path, words: &[u32]) -> Result<(), Error> {
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use PowerState::*;

    fn bank() -> MemoryBank {
        MemoryBank::new(0, DEFAULT_BANK_SIZE).unwrap()
    }

    fn settle(b: &mut MemoryBank) {
        while b.power_machine().in_transition() {
            b.tick_power();
        }
    }

    #[test]
    fn readback() {
        let mut b = bank();
        b.access(0, true, 0xF, 0xDEAD_BEEF).unwrap();
        assert_eq!(b.access(0, false, 0xF, 0).unwrap(), 0xDEAD_BEEF);
        assert_eq!((b.reads, b.writes), (1, 1));
    }

    #[test]
    fn byte_enables() {
        let mut b = bank();
        b.access(8, true, 0xF, 0x1122_3344).unwrap();
        b.access(8, true, 0b0101, 0xAABB_CCDD).unwrap();
        assert_eq!(b.peek(8), 0x11BB_33DD);
    }

    #[test]
    fn retention_preserves_and_faults() {
        let t = TransitionLatencies::default();
        let mut b = bank();
        b.access(0, true, 0xF, 0x1234_5678).unwrap();
        b.set_power_state(Retention, &t).unwrap();
        settle(&mut b);
        assert_eq!(b.access(0, false, 0xF, 0), Err(AccessFault::Retained));
        assert_eq!(b.reads, 0);
        b.set_power_state(Active, &t).unwrap();
        settle(&mut b);
        assert_eq!(b.access(0, false, 0xF, 0).unwrap(), 0x1234_5678);
    }

    #[test]
    fn gated_bank_faults() {
        let t = TransitionLatencies::default();
        let mut b = bank();
        assert_eq!(b.set_power_state(ClockGated, &t).unwrap(), 1);
        // restrictive state visible immediately
        assert_eq!(b.access(0, false, 0xF, 0), Err(AccessFault::Gated));
    }

    #[test]
    fn power_cycle_poisons() {
        let t = TransitionLatencies::default();
        let mut b = bank();
        b.access(0, true, 0xF, 7).unwrap();
        b.set_power_state(Off, &t).unwrap();
        settle(&mut b);
        assert_eq!(b.access(0, false, 0xF, 0), Err(AccessFault::PoweredOff));
        assert!(b.set_power_state(Retention, &t).is_err());
        assert_eq!(b.set_power_state(Active, &t).unwrap(), 10);
        settle(&mut b);
        assert_eq!(b.access(0, false, 0xF, 0).unwrap(), POISON_WORD);
    }

    #[test]
    #[should_panic]
    fn out_of_range_offset_is_a_bug() {
        let mut b = MemoryBank::new(0, 16).unwrap();
        let _ = b.access(16, false, 0xF, 0);
    }

    #[test]
    fn image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.bin");
        write_image(&p, &[1, 0xDEAD_BEEF, 3]).unwrap();
        assert_eq!(read_image(&p).unwrap(), vec![1, 0xDEAD_BEEF, 3]);
    }
}

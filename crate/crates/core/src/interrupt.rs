//! PLIC-style interrupt aggregation with a fast-line bypass.
//!
//! Pending is level-latched until claimed. Claim returns the highest-priority
//! pending enabled line, lowest id first on ties. Priority 0 is never
//! delivered. Lines marked `fast` reach the CPU in the cycle they are raised;
//! PLIC-routed lines one cycle later.

use serde::Serialize;

use crate::error::ConfigError;

/// Default priority assigned to accelerator interrupt lines.
pub const XAIF_DEFAULT_PRIORITY: u8 = 4;
pub const MAX_PRIORITY: u8 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum IrqSource {
    Peripheral { name: String },
    Dma,
    Xaif { accel: String, index: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IrqLine {
    pub id: u32,
    pub source: IrqSource,
    pub priority: u8,
    pub pending: bool,
    pub enabled: bool,
    pub fast: bool,
    /// Cycle of the raise that set `pending`.
    #[serde(skip)]
    raised_at: u64,
}

#[derive(Debug, Clone, Default)]
pub struct InterruptController {
    lines: Vec<IrqLine>,
    now: u64,
    pub raises: u64,
    pub claims: u64,
}

impl InterruptController {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a line and returns its id (ids start at 1).
    pub fn add_line(&mut self, source: IrqSource, priority: u8, fast: bool) -> u32 {
        let id = self.lines.len() as u32 + 1;
        self.lines.push(IrqLine {
            id,
            source,
            priority: priority.min(MAX_PRIORITY),
            pending: false,
            enabled: true,
            fast,
            raised_at: 0,
        });
        id
    }

    pub fn lines(&self) -> &[IrqLine] {
        &self.lines
    }

    pub fn line(&self, id: u32) -> Result<&IrqLine, ConfigError> {
        id.checked_sub(1)
            .and_then(|i| self.lines.get(i as usize))
            .ok_or_else(|| ConfigError::Unknown {
                kind: "interrupt line",
                name: id.to_string(),
            })
    }

    fn line_mut(&mut self, id: u32) -> Result<&mut IrqLine, ConfigError> {
        id.checked_sub(1)
            .and_then(|i| self.lines.get_mut(i as usize))
            .ok_or_else(|| ConfigError::Unknown {
                kind: "interrupt line",
                name: id.to_string(),
            })
    }

    /// Current cycle, used to delay PLIC-routed delivery.
    pub fn set_time(&mut self, now: u64) {
        self.now = now;
    }

    pub fn raise(&mut self, id: u32) -> Result<(), ConfigError> {
        let now = self.now;
        let line = self.line_mut(id)?;
        if !line.pending {
            line.pending = true;
            line.raised_at = now;
        }
        self.raises += 1;
        Ok(())
    }

    pub fn set_enabled(&mut self, id: u32, enabled: bool) -> Result<(), ConfigError> {
        self.line_mut(id)?.enabled = enabled;
        Ok(())
    }

    pub fn set_priority(&mut self, id: u32, priority: u8) -> Result<(), ConfigError> {
        if priority > MAX_PRIORITY {
            return Err(ConfigError::invalid(format!("priority {priority} above {MAX_PRIORITY}")));
        }
        self.line_mut(id)?.priority = priority;
        Ok(())
    }

    pub fn set_fast(&mut self, id: u32, fast: bool) -> Result<(), ConfigError> {
        self.line_mut(id)?.fast = fast;
        Ok(())
    }

    fn deliverable(&self, l: &IrqLine) -> bool {
        l.pending && l.enabled && l.priority > 0
    }

    /// Best deliverable line under the priority/tie-break rule.
    pub fn highest_pending(&self) -> Option<u32> {
        self.lines
            .iter()
            .filter(|l| self.deliverable(l))
            .min_by_key(|l| (std::cmp::Reverse(l.priority), l.id))
            .map(|l| l.id)
    }

    /// Whether the CPU sees an interrupt request in the current cycle.
    pub fn cpu_request(&self) -> bool {
        self.lines
            .iter()
            .any(|l| self.deliverable(l) && (l.fast || l.raised_at < self.now))
    }

    pub fn claim(&mut self) -> Option<u32> {
        let id = self.highest_pending()?;
        self.lines[id as usize - 1].pending = false;
        self.claims += 1;
        Some(id)
    }

    /// MMIO view: `0x000 + 4*id` priority, `0x800 + 4*id` enable,
    /// `0xC00` claim (read) / fast-mask bit per id at `0xA00 + 4*id`.
    pub fn mmio_read(&mut self, offset: u32) -> u32 {
        let id = (offset & 0x1FF) / 4;
        match offset {
            0xC00 => self.claim().unwrap_or(0),
            o if o < 0x200 => self.line(id).map(|l| l.priority as u32).unwrap_or(0),
            o if (0x800..0xA00).contains(&o) => self.line(id).map(|l| l.enabled as u32).unwrap_or(0),
            o if (0xA00..0xC00).contains(&o) => self.line(id).map(|l| l.fast as u32).unwrap_or(0),
            0xC04 => self.lines.iter().filter(|l| l.pending).count() as u32,
            _ => 0,
        }
    }

    pub fn mmio_write(&mut self, offset: u32, value: u32) -> Result<(), ConfigError> {
        let id = (offset & 0x1FF) / 4;
        match offset {
            o if o < 0x200 => self.set_priority(id, value as u8),
            o if (0x800..0xA00).contains(&o) => self.set_enabled(id, value & 1 != 0),
            o if (0xA00..0xC00).contains(&o) => self.set_fast(id, value & 1 != 0),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctl(n: usize) -> InterruptController {
        let mut c = InterruptController::new();
        for i in 0..n {
            c.add_line(IrqSource::Peripheral { name: format!("p{i}") }, 1, false);
        }
        c
    }

    #[test]
    fn disabled_line_latches_but_is_not_delivered() {
        let mut c = ctl(2);
        c.set_enabled(1, false).unwrap();
        c.raise(1).unwrap();
        assert!(c.line(1).unwrap().pending);
        assert_eq!(c.claim(), None);
        c.set_enabled(1, true).unwrap();
        assert_eq!(c.claim(), Some(1));
        assert!(!c.line(1).unwrap().pending);
        assert_eq!(c.claim(), None);
    }

    #[test]
    fn unknown_line_errors() {
        let mut c = ctl(1);
        assert!(c.raise(0).is_err());
        assert!(c.raise(5).is_err());
    }

    #[test]
    fn priority_then_lowest_id() {
        for order in [[1u32, 2], [2, 1]] {
            let mut c = ctl(2);
            c.set_priority(1, 3).unwrap();
            c.set_priority(2, 5).unwrap();
            for id in order {
                c.raise(id).unwrap();
            }
            assert_eq!(c.claim(), Some(2));
            assert_eq!(c.claim(), Some(1));
        }
        let mut c = ctl(9);
        c.raise(9).unwrap();
        c.raise(2).unwrap();
        assert_eq!(c.claim(), Some(2));
    }

    #[test]
    fn priority_zero_never_delivered() {
        let mut c = ctl(1);
        c.set_priority(1, 0).unwrap();
        c.raise(1).unwrap();
        assert!(!c.cpu_request());
        assert_eq!(c.claim(), None);
    }

    #[test]
    fn fast_lines_skip_the_delivery_cycle() {
        let mut c = ctl(2);
        c.set_fast(2, true).unwrap();
        c.set_time(10);
        c.raise(1).unwrap();
        assert!(!c.cpu_request());
        c.set_time(11);
        assert!(c.cpu_request());
        c.claim();
        c.raise(2).unwrap();
        assert!(c.cpu_request());
    }

    #[test]
    fn double_raise_claims_once() {
        let mut c = ctl(1);
        c.raise(1).unwrap();
        c.raise(1).unwrap();
        assert_eq!(c.claim(), Some(1));
        assert_eq!(c.claim(), None);
    }
}

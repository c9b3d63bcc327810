//! Accelerator attachment interface.
//!
//! An accelerator declares its ports in an [`XaifDescriptor`] and talks to
//! the platform only through them: slave windows in the address map, master
//! ports on the bus, interrupt lines and power-control requests for its own
//! power domains. Models implement [`Accelerator`] and are advanced once per
//! cycle in the master phase.

pub mod cgra;
pub mod imc;

use std::fmt::Debug;

use serde::Serialize;

use crate::error::ConfigError;
use crate::interconnect::{BusTransaction, Interconnect, MasterId, Request};
use crate::kernel::SimEvent;
use crate::memory::AccessFault;
use crate::power::state::{Completed, PowerState};
use crate::power::Capabilities;

pub use cgra::Cgra;
pub use imc::Imc;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerDomainSpec {
    pub name: String,
    pub capabilities: Capabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XaifDescriptor {
    /// Window size in bytes of each slave port.
    pub slave_windows: Vec<u32>,
    pub master_ports: usize,
    pub irq_lines: usize,
    pub power_domains: Vec<PowerDomainSpec>,
}

/// XAIF resources reserved by a platform configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct XaifCapacity {
    pub slave_ports: usize,
    pub master_ports: usize,
    pub irq_lines: usize,
    pub power_domains: usize,
}

impl XaifCapacity {
    /// Checks the summed demand of `descriptors` against the reservation.
    pub fn check<'a>(&self, descriptors: impl IntoIterator<Item = &'a XaifDescriptor>) -> Result<(), ConfigError> {
        let mut used = [0usize; 4];
        for d in descriptors {
            used[0] += d.slave_windows.len();
            used[1] += d.master_ports;
            used[2] += d.irq_lines;
            used[3] += d.power_domains.len();
        }
        let avail = [self.slave_ports, self.master_ports, self.irq_lines, self.power_domains];
        let names = ["slave ports", "master ports", "interrupt lines", "power domains"];
        for i in 0..4 {
            if used[i] > avail[i] {
                return Err(ConfigError::Capacity {
                    resource: names[i],
                    requested: used[i],
                    available: avail[i],
                });
            }
        }
        Ok(())
    }
}

/// The accelerator's view of its bus master ports.
pub struct MasterPorts<'a> {
    bus: &'a mut Interconnect,
    ids: &'a [MasterId],
}

impl<'a> MasterPorts<'a> {
    pub fn new(bus: &'a mut Interconnect, ids: &'a [MasterId]) -> Self {
        MasterPorts { bus, ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn busy(&self, port: usize) -> bool {
        self.bus.busy(self.ids[port])
    }

    pub fn issue(&mut self, port: usize, req: Request, now: u64) {
        self.bus.issue(self.ids[port], req, now);
    }

    pub fn take_response(&mut self, port: usize, now: u64) -> Option<BusTransaction> {
        self.bus.take_response(self.ids[port], now)
    }
}

/// Per-cycle context handed to [`Accelerator::tick`].
pub struct XaifContext<'a> {
    pub now: u64,
    pub masters: MasterPorts<'a>,
    /// Effective state of each of the accelerator's power domains.
    pub domains: &'a [PowerState],
    /// Activity events per power domain for energy accounting.
    pub activity: &'a mut [u64],
    /// Local interrupt line indices raised this cycle.
    pub irqs: Vec<usize>,
    /// Power-control port requests `(local domain, state)`.
    pub power_requests: Vec<(usize, PowerState)>,
    pub events: Vec<SimEvent>,
}

/// An accelerator model attached through XAIF.
pub trait Accelerator: Debug + Send {
    /// Short instance name used for domains, regions and reports.
    fn name(&self) -> &str;

    fn descriptor(&self) -> XaifDescriptor;

    /// Returns to the post-reset state, dropping volatile state.
    fn reset(&mut self);

    /// Serves one word on slave port `port`. `domains` holds the effective
    /// states of the accelerator's power domains.
    fn slave_access(
        &mut self,
        now: u64,
        port: usize,
        offset: u32,
        req: &Request,
        domains: &[PowerState],
    ) -> Result<u32, AccessFault>;

    /// Advances one cycle.
    fn tick(&mut self, ctx: &mut XaifContext<'_>);

    /// Notification that a power transition of a local domain completed.
    fn on_power(&mut self, _domain: usize, _done: Completed) {}

    /// Backdoor read of a slave-port word, ignoring power state and mode.
    fn peek(&self, _port: usize, _offset: u32) -> Option<u32> {
        None
    }

    /// Whether the accelerator has work in flight.
    fn busy(&self) -> bool;

    /// Model-specific statistics for reports.
    fn stats(&self) -> serde_json::Value;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_names_violated_resource() {
        let cap = XaifCapacity {
            slave_ports: 2,
            master_ports: 4,
            irq_lines: 1,
            power_domains: 2,
        };
        let mut d = XaifDescriptor {
            slave_windows: vec![0x100, 0x1000],
            master_ports: 4,
            irq_lines: 1,
            power_domains: vec![],
        };
        assert!(cap.check([&d]).is_ok());
        d.master_ports = 5;
        let err = cap.check([&d]).unwrap_err();
        assert!(matches!(err, ConfigError::Capacity { resource: "master ports", requested: 5, available: 4 }));
    }
}

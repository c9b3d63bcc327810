//! OBI-style system bus: address decoding, arbitration and transaction
//! bookkeeping for both bus topologies.
//!
//! Each master port carries at most one outstanding transaction. A request
//! issued in cycle `t` can be granted in `t`; the slave then answers with
//! `response_cycle = t + latency` and the master picks the response up in
//! that cycle's issue phase.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::memory::AccessFault;

/// Data width of one bus beat.
pub const BUS_WORD_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MasterId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SlaveId {
    Bank(u16),
    Peripheral,
    Xaif { accel: u16, port: u16 },
    /// Catch-all for unmapped addresses; always answers with a decode fault.
    Error,
}

impl fmt::Display for SlaveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlaveId::Bank(b) => write!(f, "bank{b}"),
            SlaveId::Peripheral => f.write_str("peripheral"),
            SlaveId::Xaif { accel, port } => write!(f, "xaif{accel}.{port}"),
            SlaveId::Error => f.write_str("error"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusTopology {
    OneAtATime,
    FullyConnected,
}

impl BusTopology {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "one-at-a-time" => Some(BusTopology::OneAtATime),
            "fully-connected" => Some(BusTopology::FullyConnected),
            _ => None,
        }
    }
}

impl fmt::Display for BusTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BusTopology::OneAtATime => "one-at-a-time",
            BusTopology::FullyConnected => "fully-connected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AddressingMode {
    Contiguous,
    Interleaved,
}

impl AddressingMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "contiguous" => Some(AddressingMode::Contiguous),
            "interleaved" => Some(AddressingMode::Interleaved),
            _ => None,
        }
    }
}

impl fmt::Display for AddressingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AddressingMode::Contiguous => "contiguous",
            AddressingMode::Interleaved => "interleaved",
        })
    }
}

/// Interleaving granularity in bytes.
pub const INTERLEAVE_BYTES: u32 = 4;

/// What a region routes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTarget {
    /// The banked main memory.
    Memory,
    /// A block behind the shared peripheral port.
    Peripheral,
    Xaif { accel: u16, port: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub base: u32,
    pub size: u32,
    pub target: RegionTarget,
}

impl Region {
    fn end(&self) -> u64 {
        self.base as u64 + self.size as u64
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.base && (addr as u64) < self.end()
    }
}

/// Geometry of the banked memory region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryLayout {
    pub mode: AddressingMode,
    pub bank_count: u32,
    pub bank_size: u32,
}

/// Result of decoding an address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decoded {
    pub slave: SlaveId,
    /// Offset inside the bank or window.
    pub offset: u32,
    /// Index of the matched region.
    pub region: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMap {
    regions: Vec<Region>,
    layout: MemoryLayout,
}

impl AddressMap {
    /// Builds a map with the memory region at `memory_base`.
    pub fn new(memory_base: u32, layout: MemoryLayout) -> Result<Self, ConfigError> {
        if !layout.bank_count.is_power_of_two() {
            return Err(ConfigError::invalid(format!(
                "bank count {} is not a power of two",
                layout.bank_count
            )));
        }
        if layout.bank_size == 0 || !layout.bank_size.is_multiple_of(4) {
            return Err(ConfigError::invalid("bank size must be a positive multiple of 4"));
        }
        let size = layout
            .bank_count
            .checked_mul(layout.bank_size)
            .ok_or_else(|| ConfigError::invalid("memory region exceeds the 32-bit space"))?;
        let mut map = AddressMap {
            regions: Vec::new(),
            layout,
        };
        map.add(Region {
            name: "ram".into(),
            base: memory_base,
            size,
            target: RegionTarget::Memory,
        })?;
        Ok(map)
    }

    pub fn layout(&self) -> MemoryLayout {
        self.layout
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn memory_region(&self) -> &Region {
        self.regions
            .iter()
            .find(|r| r.target == RegionTarget::Memory)
            .expect("memory region always present")
    }

    /// Adds a region, rejecting overlaps.
    pub fn add(&mut self, region: Region) -> Result<(), ConfigError> {
        if region.size == 0 || region.end() > 1 << 32 {
            return Err(ConfigError::invalid(format!(
                "region `{}` has an invalid extent",
                region.name
            )));
        }
        if let Some(other) = self
            .regions
            .iter()
            .find(|r| (region.base as u64) < r.end() && (r.base as u64) < region.end())
        {
            return Err(ConfigError::Overlap {
                a: other.name.clone(),
                b: region.name,
            });
        }
        if let Some(dup) = self.regions.iter().find(|r| r.name == region.name) {
            return Err(ConfigError::invalid(format!("duplicate region name `{}`", dup.name)));
        }
        let pos = self.regions.partition_point(|r| r.base < region.base);
        self.regions.insert(pos, region);
        Ok(())
    }

    /// Maps an address to its slave and local offset.
    pub fn decode(&self, addr: u32) -> Result<Decoded, AccessFault> {
        let idx = self.regions.partition_point(|r| r.base <= addr);
        let region_idx = idx.checked_sub(1).ok_or(AccessFault::Decode)?;
        let region = &self.regions[region_idx];
        if !region.contains(addr) {
            return Err(AccessFault::Decode);
        }
        let rel = addr - region.base;
        let (slave, offset) = match region.target {
            RegionTarget::Memory => {
                let (bank, offset) = self.bank_of(rel);
                (SlaveId::Bank(bank as u16), offset)
            }
            RegionTarget::Peripheral => (SlaveId::Peripheral, rel),
            RegionTarget::Xaif { accel, port } => (SlaveId::Xaif { accel, port }, rel),
        };
        Ok(Decoded {
            slave,
            offset,
            region: region_idx,
        })
    }

    /// Bank and in-bank offset of a byte offset into the memory region.
    pub fn bank_of(&self, rel: u32) -> (u32, u32) {
        let l = self.layout;
        match l.mode {
            AddressingMode::Contiguous => (rel / l.bank_size, rel % l.bank_size),
            AddressingMode::Interleaved => {
                let w = INTERLEAVE_BYTES;
                let bank = (rel / w) % l.bank_count;
                let offset = rel / (w * l.bank_count) * w + rel % w;
                (bank, offset)
            }
        }
    }

    /// Inverse of [`bank_of`](Self::bank_of).
    pub fn address_of(&self, bank: u32, offset: u32) -> u32 {
        let l = self.layout;
        let base = self.memory_region().base;
        base + match l.mode {
            AddressingMode::Contiguous => bank * l.bank_size + offset,
            AddressingMode::Interleaved => {
                let w = INTERLEAVE_BYTES;
                (offset / w) * w * l.bank_count + bank * w + offset % w
            }
        }
    }
}

/// A bus request as issued by a master.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub address: u32,
    pub is_write: bool,
    pub byte_enable: u8,
    pub write_data: u32,
}

impl Request {
    pub fn read(address: u32) -> Self {
        Request {
            address,
            is_write: false,
            byte_enable: 0xF,
            write_data: 0,
        }
    }

    pub fn write(address: u32, data: u32) -> Self {
        Request {
            address,
            is_write: true,
            byte_enable: 0xF,
            write_data: data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BusTransaction {
    pub master: MasterId,
    pub address: u32,
    pub is_write: bool,
    pub byte_enable: u8,
    pub write_data: u32,
    pub issue_cycle: u64,
    pub grant_cycle: Option<u64>,
    pub response_cycle: Option<u64>,
    pub read_data: Option<u32>,
    pub fault: Option<AccessFault>,
    #[serde(skip)]
    pub target: Result<Decoded, AccessFault>,
}

impl BusTransaction {
    pub fn slave(&self) -> SlaveId {
        match self.target {
            Ok(d) => d.slave,
            Err(_) => SlaveId::Error,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.fault.is_none()
    }
}

/// A grant issued in the current cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub master: MasterId,
    pub slave: SlaveId,
}

#[derive(Debug, Default, Clone)]
struct Port {
    pending: Option<BusTransaction>,
    in_flight: Option<BusTransaction>,
}

/// Aggregate bus statistics.
#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct BusStats {
    pub cycles: u64,
    pub grants: u64,
    /// `histogram[k]` = cycles with exactly `k` grants.
    pub grants_histogram: Vec<u64>,
    pub grants_per_master: Vec<u64>,
    pub faults: u64,
}

impl BusStats {
    pub fn utilization(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.grants as f64 / self.cycles as f64
        }
    }
}

/// Round-robin choice: the first candidate after `last` in id order.
pub fn round_robin(candidates: &[MasterId], last: Option<MasterId>, n_ports: u16) -> MasterId {
    debug_assert!(!candidates.is_empty());
    let start = last.map(|m| (m.0 + 1) % n_ports.max(1)).unwrap_or(0);
    *candidates
        .iter()
        .min_by_key(|m| (m.0 + n_ports - start) % n_ports)
        .expect("non-empty")
}

/// Pure arbitration over `(master, slave)` requests. `last_global` and
/// `last_per_slave` hold the round-robin pointers and are updated.
pub fn arbitrate(
    topology: BusTopology,
    pending: &[(MasterId, SlaveId)],
    n_ports: u16,
    last_global: &mut Option<MasterId>,
    last_per_slave: &mut BTreeMap<SlaveId, MasterId>,
) -> Vec<Grant> {
    if pending.is_empty() {
        return Vec::new();
    }
    match topology {
        BusTopology::OneAtATime => {
            let masters: Vec<MasterId> = pending.iter().map(|p| p.0).collect();
            let winner = round_robin(&masters, *last_global, n_ports);
            *last_global = Some(winner);
            let slave = pending.iter().find(|p| p.0 == winner).unwrap().1;
            vec![Grant {
                master: winner,
                slave,
            }]
        }
        BusTopology::FullyConnected => {
            let mut by_slave: BTreeMap<SlaveId, Vec<MasterId>> = BTreeMap::new();
            for &(m, s) in pending {
                by_slave.entry(s).or_default().push(m);
            }
            let mut grants = Vec::with_capacity(by_slave.len());
            for (slave, masters) in by_slave {
                let winner = round_robin(&masters, last_per_slave.get(&slave).copied(), n_ports);
                last_per_slave.insert(slave, winner);
                *last_global = Some(winner);
                grants.push(Grant {
                    master: winner,
                    slave,
                });
            }
            grants.sort_by_key(|g| g.master);
            grants
        }
    }
}

/// The bus instance: per-master ports, arbitration state and statistics.
#[derive(Debug, Clone)]
pub struct Interconnect {
    topology: BusTopology,
    map: AddressMap,
    ports: Vec<Port>,
    last_global: Option<MasterId>,
    last_per_slave: BTreeMap<SlaveId, MasterId>,
    pub stats: BusStats,
    trace: Option<Vec<BusTransaction>>,
    outstanding_grants: Vec<Grant>,
}

impl Interconnect {
    pub fn new(topology: BusTopology, map: AddressMap) -> Self {
        Interconnect {
            topology,
            map,
            ports: Vec::new(),
            last_global: None,
            last_per_slave: BTreeMap::new(),
            stats: BusStats::default(),
            trace: None,
            outstanding_grants: Vec::new(),
        }
    }

    pub fn topology(&self) -> BusTopology {
        self.topology
    }

    pub fn map(&self) -> &AddressMap {
        &self.map
    }

    pub fn map_mut(&mut self) -> &mut AddressMap {
        &mut self.map
    }

    /// Registers a new master port.
    pub fn add_master(&mut self) -> MasterId {
        self.ports.push(Port::default());
        self.stats.grants_per_master.push(0);
        MasterId(self.ports.len() as u16 - 1)
    }

    pub fn master_count(&self) -> usize {
        self.ports.len()
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[BusTransaction]> {
        self.trace.as_deref()
    }

    /// True while the port has a request waiting or a response not yet taken.
    pub fn busy(&self, m: MasterId) -> bool {
        let p = &self.ports[m.0 as usize];
        p.pending.is_some() || p.in_flight.is_some()
    }

    /// True while the request is still waiting for a grant.
    pub fn waiting(&self, m: MasterId) -> bool {
        self.ports[m.0 as usize].pending.is_some()
    }

    pub fn issue(&mut self, m: MasterId, req: Request, now: u64) {
        let port = &mut self.ports[m.0 as usize];
        assert!(
            port.pending.is_none() && port.in_flight.is_none(),
            "master {m:?} issued with a transaction outstanding"
        );
        port.pending = Some(BusTransaction {
            master: m,
            address: req.address,
            is_write: req.is_write,
            byte_enable: req.byte_enable,
            write_data: req.write_data,
            issue_cycle: now,
            grant_cycle: None,
            response_cycle: None,
            read_data: None,
            fault: None,
            target: self.map.decode(req.address),
        });
    }

    /// Takes a completed transaction whose response is visible at `now`.
    pub fn take_response(&mut self, m: MasterId, now: u64) -> Option<BusTransaction> {
        let port = &mut self.ports[m.0 as usize];
        match &port.in_flight {
            Some(t) if t.response_cycle.is_some_and(|r| r <= now) => {
                let t = port.in_flight.take().unwrap();
                if let Some(trace) = &mut self.trace {
                    trace.push(t.clone());
                }
                Some(t)
            }
            _ => None,
        }
    }

    /// Arbitration phase: grants pending requests per the topology bound.
    pub fn arbitrate(&mut self, now: u64) -> &[Grant] {
        self.stats.cycles += 1;
        if self.ports.iter().all(|p| p.pending.is_none()) {
            self.outstanding_grants.clear();
            if self.stats.grants_histogram.is_empty() {
                self.stats.grants_histogram.push(0);
            }
            self.stats.grants_histogram[0] += 1;
            return &self.outstanding_grants;
        }
        let pending: Vec<(MasterId, SlaveId)> = self
            .ports
            .iter()
            .filter_map(|p| p.pending.as_ref().map(|t| (t.master, t.slave())))
            .collect();
        let grants = arbitrate(
            self.topology,
            &pending,
            self.ports.len() as u16,
            &mut self.last_global,
            &mut self.last_per_slave,
        );
        self.check_grant_bound(&grants);
        for g in &grants {
            let port = &mut self.ports[g.master.0 as usize];
            let mut t = port.pending.take().unwrap();
            t.grant_cycle = Some(now);
            port.in_flight = Some(t);
            self.stats.grants_per_master[g.master.0 as usize] += 1;
        }
        self.stats.grants += grants.len() as u64;
        let k = grants.len();
        if self.stats.grants_histogram.len() <= k {
            self.stats.grants_histogram.resize(k + 1, 0);
        }
        self.stats.grants_histogram[k] += 1;
        self.outstanding_grants = grants;
        &self.outstanding_grants
    }

    fn check_grant_bound(&self, grants: &[Grant]) {
        match self.topology {
            BusTopology::OneAtATime => assert!(grants.len() <= 1, "one-at-a-time bus granted {}", grants.len()),
            BusTopology::FullyConnected => {
                for (i, g) in grants.iter().enumerate() {
                    assert!(
                        grants[i + 1..].iter().all(|h| h.slave != g.slave),
                        "slave {} granted twice in one cycle",
                        g.slave
                    );
                }
            }
        }
    }

    pub fn grants(&self) -> &[Grant] {
        &self.outstanding_grants
    }

    /// The granted transaction of `m` awaiting its slave response.
    pub fn granted(&self, m: MasterId) -> &BusTransaction {
        self.ports[m.0 as usize]
            .in_flight
            .as_ref()
            .expect("granted transaction")
    }

    /// Slave response for a transaction granted this cycle.
    pub fn complete(&mut self, m: MasterId, result: Result<u32, AccessFault>, latency: u32) {
        let t = self.ports[m.0 as usize]
            .in_flight
            .as_mut()
            .expect("complete without grant");
        let grant = t.grant_cycle.expect("granted");
        t.response_cycle = Some(grant + latency.max(1) as u64);
        match result {
            Ok(data) => {
                if !t.is_write {
                    t.read_data = Some(data);
                }
            }
            Err(f) => {
                t.fault = Some(f);
                self.stats.faults += 1;
            }
        }
    }

    /// Drops all state of a master port (used when a master is reset).
    pub fn reset_port(&mut self, m: MasterId) {
        self.ports[m.0 as usize] = Port::default();
    }
}

/// Writes the transaction trace as CSV.
pub fn write_trace_csv<W: Write>(out: W, trace: &[BusTransaction]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "cycle",
        "master",
        "address",
        "rw",
        "grant_cycle",
        "response_cycle",
        "fault",
    ])?;
    for t in trace {
        let opt = |c: Option<u64>| c.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([
            t.issue_cycle.to_string(),
            t.master.0.to_string(),
            format!("{:#010x}", t.address),
            if t.is_write { "w" } else { "r" }.to_string(),
            opt(t.grant_cycle),
            opt(t.response_cycle),
            t.fault
                .map(|f| serde_json::to_value(f).unwrap().as_str().unwrap().to_string())
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(mode: AddressingMode) -> AddressMap {
        AddressMap::new(
            0,
            MemoryLayout {
                mode,
                bank_count: 8,
                bank_size: 32 * 1024,
            },
        )
        .unwrap()
    }

    #[test]
    fn decode_examples() {
        let c = map(AddressingMode::Contiguous);
        assert_eq!(c.decode(0x8000).unwrap().slave, SlaveId::Bank(1));
        assert_eq!(c.decode(0x8000).unwrap().offset, 0);
        let i = map(AddressingMode::Interleaved);
        let d = i.decode(0x1C).unwrap();
        assert_eq!((d.slave, d.offset), (SlaveId::Bank(7), 0));
        let d = i.decode(0x20).unwrap();
        assert_eq!((d.slave, d.offset), (SlaveId::Bank(0), 4));
        assert_eq!(i.decode(0x0004_0000), Err(AccessFault::Decode));
    }

    #[test]
    fn decode_inverse() {
        for mode in [AddressingMode::Contiguous, AddressingMode::Interleaved] {
            let m = map(mode);
            for addr in (0..0x4_0000u32).step_by(4 * 97) {
                let d = m.decode(addr).unwrap();
                let SlaveId::Bank(b) = d.slave else { panic!() };
                assert_eq!(m.address_of(b as u32, d.offset), addr);
            }
        }
    }

    #[test]
    fn overlap_rejected() {
        let mut m = map(AddressingMode::Contiguous);
        m.add(Region {
            name: "a".into(),
            base: 0x2000_0000,
            size: 0x1000,
            target: RegionTarget::Peripheral,
        })
        .unwrap();
        let err = m
            .add(Region {
                name: "b".into(),
                base: 0x2000_0800,
                size: 0x1000,
                target: RegionTarget::Peripheral,
            })
            .unwrap_err();
        assert!(matches!(err, ConfigError::Overlap { .. }));
        assert!(m
            .add(Region {
                name: "c".into(),
                base: 0x1000,
                size: 4,
                target: RegionTarget::Peripheral,
            })
            .is_err());
    }

    #[test]
    fn non_power_of_two_banks_rejected() {
        assert!(AddressMap::new(
            0,
            MemoryLayout {
                mode: AddressingMode::Interleaved,
                bank_count: 3,
                bank_size: 1024
            }
        )
        .is_err());
    }

    #[test]
    fn fully_connected_grants_distinct_slaves() {
        let pending: Vec<_> = (0..4).map(|i| (MasterId(i), SlaveId::Bank(i))).collect();
        let mut last = None;
        let mut per = BTreeMap::new();
        let g = arbitrate(BusTopology::FullyConnected, &pending, 4, &mut last, &mut per);
        assert_eq!(g.len(), 4);
        let g = arbitrate(BusTopology::OneAtATime, &pending, 4, &mut last, &mut per);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn round_robin_alternates_on_shared_bank() {
        let pending = [(MasterId(0), SlaveId::Bank(0)), (MasterId(1), SlaveId::Bank(0))];
        let mut last = None;
        let mut per = BTreeMap::new();
        let mut counts = [0; 2];
        for _ in 0..10 {
            let g = arbitrate(BusTopology::FullyConnected, &pending, 2, &mut last, &mut per);
            assert_eq!(g.len(), 1);
            counts[g[0].master.0 as usize] += 1;
        }
        assert_eq!(counts, [5, 5]);
    }

    #[test]
    fn held_request_is_granted_later() {
        let mut bus = Interconnect::new(BusTopology::OneAtATime, map(AddressingMode::Contiguous));
        let a = bus.add_master();
        let b = bus.add_master();
        bus.issue(a, Request::read(0), 0);
        bus.issue(b, Request::read(0x8000), 0);
        assert_eq!(bus.arbitrate(0).len(), 1);
        bus.complete(a, Ok(1), 1);
        assert!(bus.waiting(b));
        assert_eq!(bus.arbitrate(1)[0].master, b);
        bus.complete(b, Ok(2), 1);
        assert!(bus.take_response(a, 0).is_none());
        assert_eq!(bus.take_response(a, 1).unwrap().read_data, Some(1));
        let t = bus.take_response(b, 2).unwrap();
        assert_eq!((t.issue_cycle, t.grant_cycle, t.response_cycle), (0, Some(1), Some(2)));
    }
}

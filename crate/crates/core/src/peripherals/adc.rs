//! SPI-attached ADC stream paced by wall time.

use std::collections::VecDeque;
use std::path::Path;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{ConfigError, Error};
use crate::kernel::SimClock;

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSource {
    Constant(i16),
    Sine { amplitude: i16, frequency_hz: f64 },
    Prbs { seed: u64 },
    /// Per-lead sample sequences, replayed cyclically.
    Trace(Vec<Vec<i16>>),
}

impl SampleSource {
    /// Loads `timestamp_s,lead,value` rows. Rows are ordered per lead by
    /// timestamp; the timestamps themselves are not used for pacing.
    pub fn from_csv(path: &Path, leads: u32) -> Result<Self, Error> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let mut rows: Vec<(f64, u32, i16)> = Vec::new();
        for (i, rec) in rdr.deserialize::<(f64, u32, i16)>().enumerate() {
            let row = rec.map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: format!("row {}: {e}", i + 2),
            })?;
            if row.1 >= leads {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("row {}: lead {} out of range", i + 2, row.1),
                });
            }
            rows.push(row);
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut per_lead = vec![Vec::new(); leads as usize];
        for (_, lead, v) in rows {
            per_lead[lead as usize].push(v);
        }
        if per_lead.iter().any(|l| l.is_empty()) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "every lead needs at least one sample".into(),
            });
        }
        Ok(SampleSource::Trace(per_lead))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AdcStats {
    pub produced: u64,
    pub dropped: u64,
    pub consumed: u64,
}

#[derive(Debug, Clone)]
pub struct AdcStream {
    pub leads: u32,
    pub rate_hz: u32,
    /// FIFO capacity in samples.
    pub depth: usize,
    fifo: VecDeque<u16>,
    source: SampleSource,
    rng: ChaCha8Rng,
    enabled: bool,
    /// Index of the next sampling instant.
    next_instant: u64,
    next_due: u64,
    pub stats: AdcStats,
}

impl AdcStream {
    pub fn new(leads: u32, rate_hz: u32, depth: usize, source: SampleSource) -> Result<Self, ConfigError> {
        if leads == 0 || rate_hz == 0 || depth == 0 {
            return Err(ConfigError::invalid("ADC needs positive leads, rate and FIFO depth"));
        }
        let seed = match source {
            SampleSource::Prbs { seed } => seed,
            _ => 0,
        };
        Ok(AdcStream {
            leads,
            rate_hz,
            depth,
            fifo: VecDeque::with_capacity(depth),
            source,
            rng: ChaCha8Rng::seed_from_u64(seed),
            enabled: false,
            next_instant: 0,
            next_due: u64::MAX,
            stats: AdcStats::default(),
        })
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    /// Starts sampling at the current wall time.
    pub fn enable(&mut self, clock: &SimClock) {
        self.enabled = true;
        let now = clock.wall_time() * Ratio::from_integer(self.rate_hz as u128);
        self.next_instant = now.ceil().to_integer() as u64;
        self.reschedule(clock);
    }

    pub fn disable(&mut self) {
        self.enabled = false;
        self.next_due = u64::MAX;
    }

    /// Recomputes the due cycle; call after a frequency change.
    pub fn reschedule(&mut self, clock: &SimClock) {
        if self.enabled {
            self.next_due = clock.cycle_at(Ratio::new(self.next_instant as u128, self.rate_hz as u128));
        }
    }

    fn sample(&mut self, lead: u32) -> u16 {
        let k = self.next_instant;
        let v: i16 = match &self.source {
            SampleSource::Constant(v) => *v,
            SampleSource::Sine {
                amplitude,
                frequency_hz,
            } => {
                let t = k as f64 / self.rate_hz as f64;
                let phase = lead as f64 * std::f64::consts::FRAC_PI_3;
                (*amplitude as f64 * (2.0 * std::f64::consts::PI * frequency_hz * t + phase).sin()) as i16
            }
            SampleSource::Prbs { .. } => self.rng.gen(),
            SampleSource::Trace(leads) => {
                let l = &leads[lead as usize];
                l[(k % l.len() as u64) as usize]
            }
        };
        v as u16
    }

    /// Pushes samples due at the clock's current cycle. Returns the number
    /// of samples dropped by overflow.
    pub fn tick(&mut self, clock: &SimClock) -> u64 {
        let mut dropped = 0;
        while self.enabled && clock.cycle() >= self.next_due {
            for lead in 0..self.leads {
                let s = self.sample(lead);
                if self.fifo.len() == self.depth {
                    self.fifo.pop_front();
                    dropped += 1;
                }
                self.fifo.push_back(s);
                self.stats.produced += 1;
            }
            self.next_instant += 1;
            self.reschedule(clock);
        }
        self.stats.dropped += dropped;
        dropped
    }

    #[inline]
    pub fn next_due(&self) -> u64 {
        self.next_due
    }

    pub fn level(&self) -> usize {
        self.fifo.len()
    }

    /// Pops two samples packed little-end-first into one bus word.
    pub fn pop_word(&mut self) -> Option<u32> {
        if self.fifo.len() < 2 {
            return None;
        }
        let lo = self.fifo.pop_front().unwrap() as u32;
        let hi = self.fifo.pop_front().unwrap() as u32;
        self.stats.consumed += 2;
        Some(lo | hi << 16)
    }

    /// Pops one sample (register reads).
    pub fn pop_sample(&mut self) -> Option<u16> {
        let s = self.fifo.pop_front()?;
        self.stats.consumed += 1;
        Some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(adc: &mut AdcStream, clock: &mut SimClock, cycles: u64) -> u64 {
        let mut dropped = 0;
        for _ in 0..cycles {
            dropped += adc.tick(clock);
            clock.tick();
        }
        dropped
    }

    #[test]
    fn one_second_at_1mhz() {
        let mut clock = SimClock::new(1_000_000, 0.8);
        let mut adc = AdcStream::new(1, 256, 1024, SampleSource::Constant(1)).unwrap();
        adc.enable(&clock);
        run(&mut adc, &mut clock, 1_000_000);
        assert_eq!(adc.stats.produced, 256);
    }

    #[test]
    fn pacing_survives_frequency_change() {
        let mut clock = SimClock::new(1_000_000, 0.8);
        let mut adc = AdcStream::new(3, 256, 4096, SampleSource::Prbs { seed: 1 }).unwrap();
        adc.enable(&clock);
        run(&mut adc, &mut clock, 500_000);
        clock.set(170_000_000, 0.8);
        adc.reschedule(&clock);
        run(&mut adc, &mut clock, 85_000_000);
        assert_eq!(adc.stats.produced, 3 * 256);
    }

    #[test]
    fn overflow_drops_oldest() {
        let mut clock = SimClock::new(1_000, 0.8);
        let mut adc = AdcStream::new(1, 1_000, 4, SampleSource::Trace(vec![(0..8).collect()])).unwrap();
        adc.enable(&clock);
        let dropped = run(&mut adc, &mut clock, 8);
        assert_eq!(dropped, 4);
        assert_eq!(adc.pop_sample(), Some(4));
        let s = &adc.stats;
        assert_eq!(s.produced, s.consumed + s.dropped + adc.level() as u64);
    }

    #[test]
    fn words_pack_two_samples() {
        let clock = SimClock::new(1_000, 0.8);
        let mut adc = AdcStream::new(2, 1_000, 8, SampleSource::Trace(vec![vec![1], vec![-1]])).unwrap();
        adc.enable(&clock);
        adc.tick(&clock);
        assert_eq!(adc.pop_word(), Some(0xFFFF_0001));
        assert_eq!(adc.pop_word(), None);
    }

    #[test]
    fn csv_trace() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "timestamp_s,lead,value\n0.0,0,5\n0.0,1,6\n0.004,0,7\n0.004,1,8\n").unwrap();
        let SampleSource::Trace(l) = SampleSource::from_csv(&p, 2).unwrap() else {
            panic!()
        };
        assert_eq!(l, vec![vec![5, 7], vec![6, 8]]);
        assert!(SampleSource::from_csv(&p, 1).is_err());
    }
}

//! Healthcare benchmark shapes. Processing is modeled as memory traffic
//! and compute cycles over the acquired window, not as real signal
//! processing.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkName {
    HeartbeatClassifier,
    SeizureCnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkSpec {
    pub name: BenchmarkName,
    pub leads: u32,
    pub sample_rate_hz: u32,
    pub sample_bits: u32,
    pub window_s: u32,
}

impl BenchmarkSpec {
    pub fn heartbeat() -> Self {
        BenchmarkSpec {
            name: BenchmarkName::HeartbeatClassifier,
            leads: 3,
            sample_rate_hz: 256,
            sample_bits: 16,
            window_s: 15,
        }
    }

    pub fn seizure() -> Self {
        BenchmarkSpec {
            name: BenchmarkName::SeizureCnn,
            leads: 23,
            sample_rate_hz: 256,
            sample_bits: 16,
            window_s: 4,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "heartbeat-classifier" => Some(Self::heartbeat()),
            "seizure-cnn" => Some(Self::seizure()),
            _ => None,
        }
    }

    pub fn samples(&self) -> u32 {
        self.leads * self.sample_rate_hz * self.window_s
    }

    pub fn input_bytes(&self) -> u32 {
        self.samples() * self.sample_bits / 8
    }

    /// 16x16 word tiles covering the input window.
    pub fn processing_tiles(&self) -> u32 {
        (self.input_bytes() / 4).div_ceil(256)
    }

    /// Acquisition: the CPU programs one DMA transfer from the ADC FIFO
    /// into `input`, sleeps until the completion interrupt and halts.
    pub fn acquisition_program(&self, input: u32) -> String {
        format!(
            "STORE dma.dst, 1, 4, {input:#x}\n\
             STORE dma.len, 1, 4, {len}\n\
             STORE dma.ctrl, 1, 4, 0x3\n\
             WFI\n\
             HALT\n",
            len = self.input_bytes()
        )
    }

    /// Processing: matrix products over 16x16 tiles of the input window
    /// against a weight tile, results written to `output`.
    pub fn processing_program(&self) -> String {
        format!(
            "LOOP t, {tiles}\n\
             \x20 LOOP i, 16\n\
             \x20   LOOP j, 16\n\
             \x20     LOOP k, 16\n\
             \x20       LOAD input + 1024*t + 64*i + 4*k, 1\n\
             \x20       LOAD weights + 64*k + 4*j, 1\n\
             \x20       COMPUTE 1, matmul32\n\
             \x20     ENDLOOP\n\
             \x20     STORE output + 64*i + 4*j, 1\n\
             \x20   ENDLOOP\n\
             \x20 ENDLOOP\n\
             ENDLOOP\n\
             HALT\n",
            tiles = self.processing_tiles()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sizes() {
        let h = BenchmarkSpec::heartbeat();
        assert_eq!(h.input_bytes(), 22 * 1024 + 512);
        assert_eq!(h.samples(), 11520);
        assert_eq!(BenchmarkSpec::seizure().input_bytes(), 46 * 1024);
    }
}

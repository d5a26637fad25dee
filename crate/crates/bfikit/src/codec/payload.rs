//! Packed payload bytes and the JSONL capture record.
//!
//! Angle indices are packed most-significant-bit first with no padding
//! between fields, subcarriers in ascending order. Only the final byte may
//! carry padding bits and those must be zero. A capture line pairs the
//! payload with the stream configuration and codebook:
//!
//! ```text
//! {"t": 12.5, "cfg": [4, 2, 234], "cb": [9, 7], "payload": "a3f0..."}
//! ```

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ladder::ladder_steps;
use super::quant::AngleKind;
use super::{AngleReport, Codebook, CodecError, StreamConfig};

/// Payload size in bytes for one report: all angle fields of all subcarriers,
/// rounded up to whole bytes.
pub fn payload_len(config: StreamConfig, codebook: Codebook) -> usize {
    let bits_per_sub: usize = ladder_steps(config.n_tx, config.n_stream)
        .iter()
        .map(|s| match s.kind {
            AngleKind::Phi => codebook.bits_phi() as usize,
            AngleKind::Psi => codebook.bits_psi() as usize,
        })
        .sum();
    (config.n_sub * bits_per_sub).div_ceil(8)
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(capacity: usize) -> Self {
        Self {
            out: Vec::with_capacity(capacity),
            acc: 0,
            nbits: 0,
        }
    }

    fn push(&mut self, value: u16, width: u32) {
        self.acc = (self.acc << width) | u32::from(value);
        self.nbits += width;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.out.push((self.acc >> self.nbits) as u8);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            // Remaining bits move to the top of the final byte; the rest is
            // zero padding.
            self.out.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.out
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self {
            data,
            pos: 0,
            acc: 0,
            nbits: 0,
        }
    }

    fn read(&mut self, width: u32) -> u16 {
        while self.nbits < width {
            self.acc = (self.acc << 8) | u32::from(self.data[self.pos]);
            self.pos += 1;
            self.nbits += 8;
        }
        self.nbits -= width;
        ((self.acc >> self.nbits) & ((1 << width) - 1)) as u16
    }

    /// True when every bit that was buffered but never consumed is zero.
    fn padding_is_zero(&self) -> bool {
        self.nbits == 0 || self.acc & ((1 << self.nbits) - 1) == 0
    }
}

/// Packs a report into payload bytes.
pub fn serialize_payload(report: &AngleReport) -> Vec<u8> {
    let steps = ladder_steps(report.config.n_tx, report.config.n_stream);
    let mut w = BitWriter::new(payload_len(report.config, report.codebook));
    for row in report.angles().rows() {
        for (step, &index) in steps.iter().zip(row.iter()) {
            let width = match step.kind {
                AngleKind::Phi => report.codebook.bits_phi(),
                AngleKind::Psi => report.codebook.bits_psi(),
            };
            w.push(index, u32::from(width));
        }
    }
    w.finish()
}

/// Parses payload bytes into a report.
///
/// The byte count must match the configuration exactly and any padding bits
/// in the final byte must be zero.
pub fn parse_payload(
    bytes: &[u8],
    config: StreamConfig,
    codebook: Codebook,
    timestamp: f64,
) -> Result<AngleReport, CodecError> {
    let want = payload_len(config, codebook);
    if bytes.len() != want {
        return Err(CodecError::TruncatedPayload {
            got: bytes.len(),
            want,
        });
    }
    let steps = ladder_steps(config.n_tx, config.n_stream);
    let mut r = BitReader::new(bytes);
    let mut angles = Array2::<u16>::zeros((config.n_sub, steps.len()));
    for s in 0..config.n_sub {
        for (j, step) in steps.iter().enumerate() {
            let width = match step.kind {
                AngleKind::Phi => codebook.bits_phi(),
                AngleKind::Psi => codebook.bits_psi(),
            };
            angles[(s, j)] = r.read(u32::from(width));
        }
    }
    if !r.padding_is_zero() {
        return Err(CodecError::ReservedBits);
    }
    AngleReport::new(config, codebook, timestamp, angles)
}

/// One captured report as serialized to JSONL sidecar files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRecord {
    /// Capture time in seconds.
    pub t: f64,
    /// `[n_tx, n_stream, n_sub]`
    pub cfg: [usize; 3],
    /// `[bits_phi, bits_psi]`
    pub cb: [u8; 2],
    /// Lowercase hex payload bytes.
    pub payload: String,
}

impl ReportRecord {
    pub fn from_report(report: &AngleReport) -> Self {
        Self {
            t: report.timestamp,
            cfg: [
                report.config.n_tx,
                report.config.n_stream,
                report.config.n_sub,
            ],
            cb: [report.codebook.bits_phi(), report.codebook.bits_psi()],
            payload: hex::encode(serialize_payload(report)),
        }
    }

    pub fn to_report(&self) -> Result<AngleReport, CodecError> {
        let config = StreamConfig::new(self.cfg[0], self.cfg[1], self.cfg[2])?;
        let codebook = Codebook::new(self.cb[0], self.cb[1])?;
        let bytes = hex::decode(&self.payload).map_err(|e| CodecError::BadHex(e.to_string()))?;
        parse_payload(&bytes, config, codebook, self.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn default_config() -> (StreamConfig, Codebook) {
        (
            StreamConfig::new(4, 2, 234).unwrap(),
            Codebook::default(),
        )
    }

    fn random_report(config: StreamConfig, codebook: Codebook, seed: u64) -> AngleReport {
        let steps = ladder_steps(config.n_tx, config.n_stream);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut angles = Array2::<u16>::zeros((config.n_sub, steps.len()));
        for s in 0..config.n_sub {
            for (j, step) in steps.iter().enumerate() {
                let bits = match step.kind {
                    AngleKind::Phi => codebook.bits_phi(),
                    AngleKind::Psi => codebook.bits_psi(),
                };
                angles[(s, j)] = rng.random_range(0..(1u16 << bits));
            }
        }
        AngleReport::new(config, codebook, 1.25, angles).unwrap()
    }

    #[test]
    fn default_payload_is_2340_bytes() {
        // 234 subcarriers x (5 phi x 9 bits + 5 psi x 7 bits) = 18720 bits.
        let (config, codebook) = default_config();
        assert_eq!(payload_len(config, codebook), 2340);
    }

    #[test]
    fn odd_bit_totals_round_up() {
        // 2x1 with the coarse codebook: 4 + 2 = 6 bits per subcarrier.
        let config = StreamConfig::new(2, 1, 3).unwrap();
        let codebook = Codebook::new(4, 2).unwrap();
        assert_eq!(payload_len(config, codebook), 3); // 18 bits -> 3 bytes
    }

    #[test]
    fn all_zero_payload_parses_to_zero_indices() {
        let (config, codebook) = default_config();
        let bytes = vec![0u8; payload_len(config, codebook)];
        let report = parse_payload(&bytes, config, codebook, 0.0).unwrap();
        assert!(report.angles().iter().all(|&k| k == 0));
        assert_eq!(report.total_angles(), 2340);
    }

    #[test]
    fn bit_layout_is_msb_first() {
        // 2x1, coarse codebook, one subcarrier: phi=0b1010, psi=0b11
        // packs as 1010_11 followed by two zero padding bits.
        let config = StreamConfig::new(2, 1, 1).unwrap();
        let codebook = Codebook::new(4, 2).unwrap();
        let angles = Array2::from_shape_vec((1, 2), vec![0b1010, 0b11]).unwrap();
        let report = AngleReport::new(config, codebook, 0.0, angles).unwrap();
        assert_eq!(serialize_payload(&report), vec![0b1010_1100]);
    }

    #[test]
    fn round_trip_is_identity() {
        for (i, codebook) in Codebook::ALL.into_iter().enumerate() {
            let config = StreamConfig::new(4, 2, 17).unwrap();
            let report = random_report(config, codebook, i as u64);
            let bytes = serialize_payload(&report);
            let back = parse_payload(&bytes, config, codebook, report.timestamp).unwrap();
            assert_eq!(report.angles(), back.angles());
        }
    }

    #[test]
    fn wrong_length_is_rejected() {
        let (config, codebook) = default_config();
        let bytes = vec![0u8; 2339];
        assert!(matches!(
            parse_payload(&bytes, config, codebook, 0.0),
            Err(CodecError::TruncatedPayload {
                got: 2339,
                want: 2340
            })
        ));
        let bytes = vec![0u8; 2341];
        assert!(parse_payload(&bytes, config, codebook, 0.0).is_err());
    }

    #[test]
    fn nonzero_padding_is_rejected() {
        // 18 bits of data in 3 bytes leaves 6 padding bits at the tail.
        let config = StreamConfig::new(2, 1, 3).unwrap();
        let codebook = Codebook::new(4, 2).unwrap();
        let mut bytes = vec![0u8; 3];
        bytes[2] = 0b0000_0001;
        assert!(matches!(
            parse_payload(&bytes, config, codebook, 0.0),
            Err(CodecError::ReservedBits)
        ));
    }

    #[test]
    fn jsonl_record_round_trips() {
        let (config, codebook) = default_config();
        let report = random_report(config, codebook, 99);
        let record = ReportRecord::from_report(&report);
        assert_eq!(record.payload, record.payload.to_lowercase());
        let line = serde_json::to_string(&record).unwrap();
        let parsed: ReportRecord = serde_json::from_str(&line).unwrap();
        let back = parsed.to_report().unwrap();
        assert_eq!(back.angles(), report.angles());
        assert_eq!(back.timestamp, report.timestamp);
    }
}

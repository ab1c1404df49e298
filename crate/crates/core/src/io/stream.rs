//! Pulse-stream files.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! | offset      | size | content                                  |
//! |-------------|------|------------------------------------------|
//! | 0           | 4    | magic `SQZP`                             |
//! | 4           | 2    | format version (`u16`, currently 1)      |
//! | 6           | 4    | header length `L` in bytes (`u32`)       |
//! | 10          | L    | header, UTF-8 TOML                       |
//! | 10 + L      | 16·N | N records of (`f64` phase, `f64` value)  |
//!
//! N is the header's `config.scan.n_pulses`; the pulse index is implicit.
//! The CSV twin stores `index,phase,value` rows next to a `.header.toml`
//! sidecar holding the same header text.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::write_atomic;
use crate::error::{Error, Result};
use crate::homodyne::{PulseRecord, CHUNK_LEN, RNG_ID};

pub const MAGIC: &[u8; 4] = b"SQZP";
pub const VERSION: u16 = 1;
const PREAMBLE: usize = 10;
const RECORD: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngInfo {
    pub algorithm: String,
    pub chunk_len: u64,
}

impl Default for RngInfo {
    fn default() -> Self {
        Self {
            algorithm: RNG_ID.into(),
            chunk_len: CHUNK_LEN,
        }
    }
}

/// Raw-unit calibration carried with a stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationHeader {
    /// Raw variance of one SNU.
    pub snl_raw: f64,
    /// Raw electronic-noise variance.
    pub v_elec_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub rng: RngInfo,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub calibration: Option<CalibrationHeader>,
    pub config: RunConfig,
}

impl StreamHeader {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("header serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            offset: PREAMBLE as u64,
            reason: format!("bad header: {e}"),
        })
    }

    pub fn n_pulses(&self) -> u64 {
        self.config.scan.n_pulses
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseStream {
    pub header: StreamHeader,
    /// Header text exactly as stored.
    pub header_text: String,
    pub records: Vec<PulseRecord>,
}

pub fn encode(header_text: &str, records: &[PulseRecord]) -> Result<Vec<u8>> {
    let len = u32::try_from(header_text.len()).map_err(|_| Error::param("header", "header exceeds 4 GiB"))?;
    let mut buf = Vec::with_capacity(PREAMBLE + header_text.len() + RECORD * records.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(header_text.as_bytes());
    for r in records {
        buf.extend_from_slice(&r.lo_phase.to_le_bytes());
        buf.extend_from_slice(&r.value.to_le_bytes());
    }
    Ok(buf)
}

fn short(offset: usize, what: &str) -> Error {
    Error::Format {
        offset: offset as u64,
        reason: format!("truncated file: expected {what}"),
    }
}

pub fn decode(bytes: &[u8]) -> Result<PulseStream> {
    if bytes.len() < 4 {
        return Err(short(bytes.len(), "4-byte magic"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!(
                "magic mismatch: expected {:?}, found {:?}",
                String::from_utf8_lossy(MAGIC),
                String::from_utf8_lossy(&bytes[..4])
            ),
        });
    }
    if bytes.len() < PREAMBLE {
        return Err(short(bytes.len(), "version and header length"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported format version {version} (this build reads {VERSION})"),
        });
    }
    let hlen = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let body = PREAMBLE + hlen;
    if bytes.len() < body {
        return Err(short(bytes.len(), &format!("{hlen}-byte header")));
    }
    let header_text = std::str::from_utf8(&bytes[PREAMBLE..body])
        .map_err(|e| Error::Format {
            offset: (PREAMBLE + e.valid_up_to()) as u64,
            reason: "header is not valid UTF-8".into(),
        })?
        .to_owned();
    let header = StreamHeader::parse(&header_text)?;
    let n = header.n_pulses() as usize;
    let expected = n.checked_mul(RECORD).and_then(|b| b.checked_add(body));
    match expected {
        Some(end) if bytes.len() == end => {}
        Some(end) if bytes.len() < end => {
            let complete = (bytes.len() - body) / RECORD;
            return Err(short(
                body + complete * RECORD,
                &format!("{n} records, file holds {complete} complete records"),
            ));
        }
        _ => {
            return Err(Error::Format {
                offset: (body + n * RECORD) as u64,
                reason: format!("trailing bytes after the declared {n} records"),
            })
        }
    }
    let records = bytes[body..]
        .chunks_exact(RECORD)
        .enumerate()
        .map(|(i, c)| PulseRecord {
            index: i as u64,
            lo_phase: f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
            value: f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
        })
        .collect();
    Ok(PulseStream {
        header,
        header_text,
        records,
    })
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".header.toml");
    PathBuf::from(s)
}

/// 17 significant digits: enough for an exact f64 round trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn encode_csv(records: &[PulseRecord]) -> Vec<u8> {
    let mut out = String::with_capacity(records.len() * 52 + 20);
    out.push_str("index,phase,value\n");
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.index, fmt_f64(r.lo_phase), fmt_f64(r.value)));
    }
    out.into_bytes()
}

pub fn write_stream(path: &Path, header: &StreamHeader, records: &[PulseRecord]) -> Result<()> {
    write_atomic(path, &encode(&header.to_text(), records)?)
}

pub fn write_stream_csv(path: &Path, header: &StreamHeader, records: &[PulseRecord]) -> Result<()> {
    write_atomic(&sidecar_path(path), header.to_text().as_bytes())?;
    write_atomic(path, &encode_csv(records))
}

pub fn read_stream(path: &Path) -> Result<PulseStream> {
    if path.extension().is_some_and(|e| e == "csv") {
        return read_stream_csv(path);
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn read_stream_csv(path: &Path) -> Result<PulseStream> {
    let side = sidecar_path(path);
    let header_text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header = StreamHeader::parse(&header_text)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, &e))?;
    let cols = rdr.headers().map_err(|e| csv_err(path, &e))?.clone();
    if cols.iter().collect::<Vec<_>>() != ["index", "phase", "value"] {
        return Err(Error::Csv {
            path: path.into(),
            line: 1,
            reason: "expected header `index,phase,value`".into(),
        });
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, &e))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::Csv {
            path: path.into(),
            line,
            reason,
        };
        let index: u64 = row[0].trim().parse().map_err(|e| bad(format!("index: {e}")))?;
        if index != records.len() as u64 {
            return Err(bad(format!("index {index} out of sequence")));
        }
        let lo_phase: f64 = row[1].trim().parse().map_err(|e| bad(format!("phase: {e}")))?;
        let value: f64 = row[2].trim().parse().map_err(|e| bad(format!("value: {e}")))?;
        records.push(PulseRecord { index, lo_phase, value });
    }
    if records.len() as u64 != header.n_pulses() {
        return Err(Error::Format {
            offset: 0,
            reason: format!("header declares {} pulses, CSV holds {}", header.n_pulses(), records.len()),
        });
    }
    Ok(PulseStream {
        header,
        header_text,
        records,
    })
}

pub(crate) fn csv_err(path: &Path, e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        path: path.into(),
        line,
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(n: u64) -> StreamHeader {
        let mut config = RunConfig::default();
        config.scan.n_pulses = n;
        StreamHeader {
            rng: RngInfo::default(),
            calibration: Some(CalibrationHeader {
                snl_raw: 1.0,
                v_elec_raw: 0.0073,
            }),
            config,
        }
    }

    fn records(n: usize) -> Vec<PulseRecord> {
        (0..n)
            .map(|i| PulseRecord {
                index: i as u64,
                lo_phase: i as f64 * 0.1,
                value: (i as f64).sin(),
            })
            .collect()
    }

    #[test]
    fn magic_mismatch_named() {
        let mut bytes = encode(&header(3).to_text(), &records(3)).unwrap();
        bytes[0] = b'X';
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic mismatch"), "{err}");
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode(&header(3).to_text(), &records(3)).unwrap();
        let cut = &bytes[..bytes.len() - 5];
        match decode(cut).unwrap_err() {
            Error::Format { offset, reason } => {
                assert_eq!(offset as usize, bytes.len() - 16);
                assert!(reason.contains("truncated"));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(decode(&bytes[..7]), Err(Error::Format { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
    }

    #[test]
    fn version_gates() {
        let mut bytes = encode(&header(1).to_text(), &records(1)).unwrap();
        bytes[4] = 9;
        assert!(decode(&bytes).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn header_parses_back() {
        let h = header(10);
        assert_eq!(StreamHeader::parse(&h.to_text()).unwrap(), h);
    }

    #[test]
    fn csv_twin_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let recs = records(50);
        write_stream_csv(&path, &header(50), &recs).unwrap();
        let back = read_stream(&path).unwrap();
        assert_eq!(back.records, recs);
        assert_eq!(back.header, header(50));
    }

    proptest! {
        #[test]
        fn binary_round_trip(values in prop::collection::vec((any::<f64>(), any::<f64>()), 0..64), tag in "[a-z ]{0,12}") {
            let mut h = header(values.len().max(1) as u64);
            h.config.output.dir = tag;
            h.config.scan.n_pulses = values.len() as u64;
            let recs: Vec<PulseRecord> = values.iter().enumerate()
                .map(|(i, &(p, v))| PulseRecord { index: i as u64, lo_phase: p, value: v })
                .collect();
            let text = h.to_text();
            let back = decode(&encode(&text, &recs).unwrap()).unwrap();
            prop_assert_eq!(&back.header_text, &text);
            prop_assert_eq!(back.records.len(), recs.len());
            for (a, b) in back.records.iter().zip(&recs) {
                prop_assert_eq!(a.lo_phase.to_bits(), b.lo_phase.to_bits());
                prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
            }
        }

        #[test]
        fn decimal_17_digits_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let back: f64 = fmt_f64(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}

use squeezelab::homodyne::PulseRecord;
use squeezelab::io::config::RunConfig;
use squeezelab::io::stream::{decode, encode, StreamHeader, RngInfo};

#[test]
fn byte_layout() {
    let header = StreamHeader {
        rng: RngInfo::default(),
        calibration: None,
        config: RunConfig::default(),
    };
    let text = header.to_text();
    let records = [
        PulseRecord { index: 0, lo_phase: 0.0, value: -1.5 },
        PulseRecord { index: 1, lo_phase: 0.25, value: f64::MIN_POSITIVE },
    ];
    let bytes = encode(&text, &records).unwrap();
    assert_eq!(&bytes[..4], b"SQZP");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    assert_eq!(len, text.len());
    assert_eq!(&bytes[10..10 + len], text.as_bytes());
    let body = &bytes[10 + len..];
    assert_eq!(body.len(), 32);
    assert_eq!(f64::from_le_bytes(body[8..16].try_into().unwrap()), -1.5);
    assert_eq!(f64::from_le_bytes(body[16..24].try_into().unwrap()), 0.25);

    let mut versioned = bytes.clone();
    versioned[4] = 2;
    assert!(decode(&versioned).unwrap_err().to_string().contains("version"));
}

//! Deterministic report serialization.
//!
//! Every float in machine-readable output is written with 17 significant
//! digits (`{:.16e}`), which round-trips any finite f64 bit-exactly, so
//! golden files and determinism checks can compare bytes.

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Error, Result};

/// Full round-trip decimal formatting: 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            // same encoding serde_json uses for non-finite floats
            write!(writer, "null")
        }
    }
}

/// Serializes to compact JSON with full-precision floats (non-finite floats
/// become `null`, as in stock serde_json) and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Serde(e.to_string()))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Serde(e.to_string()))
}

/// One CSV line from preformatted cells.
pub fn csv_row(cells: &[String]) -> String {
    let mut row = cells.join(",");
    row.push('\n');
    row
}

/// Deterministic seeded generator used by every sampling routine; reports
/// record the seed they were produced with.
pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [
            0.0,
            -0.0,
            1.0,
            0.1,
            std::f64::consts::PI,
            -2.2250738585072014e-308,
            1.7976931348623157e308,
            3.0_f64.powi(-40),
        ] {
            let s = format_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn json_uses_full_precision() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
        }
        let s = to_json(&S { a: 0.1, b: vec![1.0, -2.0] }).unwrap();
        assert_eq!(s, "{\"a\":1.0000000000000001e-1,\"b\":[1.0000000000000000e0,-2.0000000000000000e0]}\n");
        let parsed: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["a"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn json_maps_non_finite_to_null() {
        let s = to_json(&vec![f64::INFINITY, f64::NAN, 1.0]).unwrap();
        assert_eq!(s, "[null,null,1.0000000000000000e0]\n");
        assert!(serde_json::from_str::<serde_json::Value>(&s).is_ok());
    }
}

//! Serialization helpers shared by machine-readable reports.

use serde::Serializer;

/// Writes finite numbers as JSON numbers and infinities as `"inf"` / `"-inf"`.
pub fn serialize_extended_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Formats a number for CSV output: shortest round-trip form, `inf`/`-inf`
/// for unbounded thresholds.
pub fn csv_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Serialize)]
    struct Wrap(#[serde(serialize_with = "serialize_extended_f64")] f64);

    #[test]
    fn infinities_are_strings() {
        assert_eq!(serde_json::to_string(&Wrap(1.5)).unwrap(), "1.5");
        assert_eq!(serde_json::to_string(&Wrap(f64::INFINITY)).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&Wrap(f64::NEG_INFINITY)).unwrap(), "\"-inf\"");
        assert_eq!(csv_number(-0.25), "-0.25");
        assert_eq!(csv_number(f64::INFINITY), "inf");
    }
}

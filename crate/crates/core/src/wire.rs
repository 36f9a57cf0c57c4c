//! Shared serialization helpers, so the service and the CLI emit identical bytes.

use serde::Serialize;

/// Compact JSON followed by a single newline.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("response types serialize");
    s.push('\n');
    s
}

/// Fixed-point decimal text with `digits` significant digits.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*}", digits.saturating_sub(1), if x.is_finite() { 0.0 } else { x });
    }
    let magnitude = x.abs().log10().floor() as i64 + 1;
    let decimals = (digits as i64 - magnitude).max(0) as usize;
    let text = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit (9.99.. -> 10.0..)
    let int_digits = text
        .trim_start_matches('-')
        .split('.')
        .next()
        .map(|s| s.trim_start_matches('0').len())
        .unwrap_or(0) as i64;
    if int_digits > magnitude.max(0) && decimals > 0 {
        format!("{x:.*}", decimals - 1)
    } else {
        text
    }
}

/// Serializes an `f64` field as [`significant`] text with 12 digits.
pub fn serialize_12<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&significant(*x, 12))
}

/// Renders rows as CSV with `\n` line endings.
pub fn csv_table(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        w.write_record(header).expect("in-memory csv write");
        for r in rows {
            w.write_record(&r).expect("in-memory csv write");
        }
        w.flush().expect("in-memory csv write");
    }
    String::from_utf8(buf).expect("csv is utf-8")
}

//! Number formatting and CSV assembly.

use std::fmt::Write as _;

/// Formats `x` with 6 significant digits, like C's `%.6g`.
pub fn g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round to 6 significant digits first so the exponent reflects the carry.
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `g6` for optional values; absent values become an empty field.
pub fn g6_opt(x: Option<f64>) -> String {
    x.map(g6).unwrap_or_default()
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// First line of every CSV the harness writes.
pub fn metadata_row(command: &str, spec_hash: u64, seeds: &[u64]) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    format!("# command={command} spec_hash={spec_hash:016x} master_seeds={}", seeds.join(";"))
}

/// Accumulates CSV text: metadata row, header, then data rows.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
    rows: usize,
}

impl Csv {
    pub fn new(metadata: &str, header: &[String]) -> Self {
        let mut text = String::new();
        writeln!(text, "{metadata}").unwrap();
        writeln!(text, "{}", header.join(",")).unwrap();
        Self {
            text,
            columns: header.len(),
            rows: 0,
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "row width differs from header");
        writeln!(self.text, "{}", fields.join(",")).unwrap();
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(self) -> String {
        self.text
    }
}

//! JSON output with 17-significant-digit numbers.
//!
//! `serde_json` prints the shortest round-tripping form; the CLI formats are
//! pinned to `%.17g` instead so output is byte-stable across implementations.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

/// `%.17g`: 17 significant digits, trailing zeros stripped, exponent form
/// outside `[1e-5, 1e17)`.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return "null".into();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    strip_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Compact formatter writing floats with [`fmt_g17`].
#[derive(Debug, Default, Clone, Copy)]
pub struct G17Formatter;

impl Formatter for G17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_g17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_writer<W: io::Write, T: Serialize + ?Sized>(writer: W, value: &T) -> serde_json::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(writer, G17Formatter);
    value.serialize(&mut ser)
}

/// Serializes `value` on one line with 17-digit numbers.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    to_writer(&mut buf, value).expect("serialization into memory does not fail");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats_like_printf_g17() {
        assert_eq!(fmt_g17(3.5), "3.5");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(2f64.ln()), "0.69314718055994529");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(-2.5), "-2.5");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_g17(0.0), "0");
    }

    #[test]
    fn serializes_structs() {
        #[derive(Serialize)]
        struct P {
            x: Vec<f64>,
            n: usize,
        }
        let s = to_string(&P {
            x: vec![0.1, 2.0],
            n: 3,
        });
        assert_eq!(s, r#"{"x":[0.10000000000000001,2],"n":3}"#);
    }

    proptest! {
        #[test]
        fn round_trips_exactly(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let s = fmt_g17(x);
            let back: f64 = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back.to_bits(), if x == 0.0 { back.to_bits() } else { x.to_bits() });
        }
    }
}

//! Deterministic text rendering of numbers for table and report output.

/// Shortest `%.17g`-style rendering: 17 significant digits, trailing zeros
/// trimmed, exponent form only for very large or small magnitudes.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders() {
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(-0.5), "-0.5");
        assert_eq!(fmt_f64(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(fmt_f64(1e-7), "9.9999999999999995e-8");
        assert_eq!(fmt_f64(123456.0), "123456");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn round_trips() {
        for v in [0.1, 2.0 / 3.0, 1e300, 5e-324, 123.456, -7.25e-12] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}

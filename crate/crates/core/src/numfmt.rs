//! Fixed-precision number formatting for CSV output.

/// Formats `x` with 12 significant digits, `%.12g` style: fixed notation for
/// decimal exponents in `[-5, 12)`, scientific otherwise, trailing zeros trimmed.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Round once in scientific form so the exponent reflects rounding.
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..12).contains(&exp) {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::sig12;

    #[test]
    fn formats_like_printf_g() {
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(24.5), "24.5");
        assert_eq!(sig12(15.0 / 19.0), "0.789473684211");
        assert_eq!(sig12(-3.0), "-3");
        assert_eq!(sig12(1e-7), "1e-7");
        assert_eq!(sig12(123456789012345.0), "1.23456789012e14");
        assert_eq!(sig12(0.121421356237309), "0.121421356237");
        assert_eq!(sig12(9.99999999999999), "10");
    }
}

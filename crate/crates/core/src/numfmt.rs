//! Fixed-precision decimal rendering shared by every text output.

use alloc::format;
use alloc::string::String;

/// Significant digits used for scores in quality tables.
pub const SIG_DIGITS: usize = 12;

/// Renders `x` with [`SIG_DIGITS`] significant digits in the style of C's
/// `%.12g`: plain decimal for moderate exponents, scientific otherwise,
/// trailing zeros removed.
pub fn fmt_sig(x: f64) -> String {
    fmt_sig_digits(x, SIG_DIGITS)
}

pub fn fmt_sig_digits(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return String::from("0");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exp) as usize;
    let fixed = format!("{:.*}", decimals, x);
    String::from(trim_zeros(&fixed))
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds `x` to the value that [`fmt_sig`] text parses back to.
pub fn quantize(x: f64) -> f64 {
    fmt_sig(x).parse().expect("fmt_sig emits parseable decimals")
}

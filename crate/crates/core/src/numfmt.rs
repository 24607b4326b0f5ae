//! Canonical float text: 17 significant digits, `%.17g` style.
//!
//! Every value that leaves the crate as text goes through [`g17`], so equal
//! inputs always produce byte-identical files and every finite `f64` survives
//! a print/parse round trip exactly.

use alloc::format;
use alloc::string::{String, ToString};

/// Formats `x` like C's `printf("%.17g", x)`.
///
/// Trailing zeros are stripped, so `2.0` prints as `2` and `0.1` as
/// `0.10000000000000001`. Non-finite values print as `nan`, `inf`, `-inf`.
pub fn g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{}e{}{:02}", m, sign, exp.abs());
    }
    let decimals = (16 - exp) as usize;
    let fixed = format!("{:.*}", decimals, x);
    strip_zeros(&fixed).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

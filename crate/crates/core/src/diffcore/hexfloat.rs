//! C99-style hexadecimal float text (`%a`), exact for every `f64`.
//!
//! Normal numbers print as `0x1.<frac>p<exp>` with trailing zero nibbles
//! trimmed, subnormals as `0x0.<frac>p-1022`, zeros as `0x0p+0` (with sign),
//! and the non-finite values as `inf`, `-inf` and `nan`.

use crate::error::{Error, Result};

const FRAC_BITS: u32 = 52;
const FRAC_MASK: u64 = (1 << FRAC_BITS) - 1;

pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let exp_field = ((bits >> FRAC_BITS) & 0x7ff) as i32;
    let frac = bits & FRAC_MASK;
    if exp_field == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_field == 0 {
        (0, -1022)
    } else {
        (1, exp_field - 1023)
    };
    let digits = format!("{frac:013x}");
    let digits = digits.trim_end_matches('0');
    let es = if exp >= 0 { "+" } else { "-" };
    if digits.is_empty() {
        format!("{sign}0x{lead}p{es}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{digits}p{es}{}", exp.abs())
    }
}

pub fn parse(s: &str) -> Result<f64> {
    let bad = || Error::format("hexadecimal float", s.to_string());
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let signed = |v: f64| if neg { -v } else { v };
    match body {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(signed(f64::INFINITY)),
        _ => {}
    }
    let body = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))
        .ok_or_else(bad)?;
    let (mant, exp) = body.split_once(['p', 'P']).ok_or_else(bad)?;
    let exp: i32 = exp.parse().map_err(|_| bad())?;
    let (lead, frac_digits) = match mant.split_once('.') {
        Some((l, f)) => (l, f),
        None => (mant, ""),
    };
    if frac_digits.len() > 13 || !frac_digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(bad());
    }
    let frac = if frac_digits.is_empty() {
        0
    } else {
        u64::from_str_radix(frac_digits, 16).map_err(|_| bad())? << (4 * (13 - frac_digits.len()))
    };
    let bits = match lead {
        "1" => {
            if !(-1022..=1023).contains(&exp) {
                return Err(bad());
            }
            (((exp + 1023) as u64) << FRAC_BITS) | frac
        }
        "0" if frac == 0 => 0,
        "0" if exp == -1022 => frac,
        _ => return Err(bad()),
    };
    Ok(signed(f64::from_bits(bits)))
}

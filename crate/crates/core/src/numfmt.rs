//! Deterministic numeric formatting for text artifacts.
//!
//! All floating-point values written to delimited-text outputs go through
//! [`sig9`], which rounds to 9 significant digits and renders the shortest
//! decimal string that round-trips to the rounded value. Currency amounts are
//! carried as integer cents and rendered with exactly two decimals.

/// Formats `x` with 9 significant digits.
///
/// The value is first rounded to 9 significant digits, then printed with the
/// shortest representation that parses back to the rounded value, so repeated
/// runs produce byte-identical artifacts.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string(); // canonicalizes -0.0 as well
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("rounded float reparses");
    format!("{rounded}")
}

/// Renders an integer amount of cents as a decimal string with two places.
pub fn cents_to_decimal(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let a = cents.unsigned_abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

/// Parses a decimal currency string (at most two fractional digits) to cents.
pub fn decimal_to_cents(s: &str) -> Result<i64, String> {
    let t = s.trim();
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1i64, t),
    };
    let (whole, frac) = match body.split_once('.') {
        Some((w, f)) => (w, f),
        None => (body, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return Err(format!("empty currency value {s:?}"));
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(format!("malformed currency value {s:?}"));
    }
    if frac.len() > 2 {
        return Err(format!("currency value {s:?} has more than two decimals"));
    }
    let whole_cents: i64 = if whole.is_empty() {
        0
    } else {
        whole
            .parse::<i64>()
            .map_err(|_| format!("currency value {s:?} out of range"))?
            .checked_mul(100)
            .ok_or_else(|| format!("currency value {s:?} out of range"))?
    };
    let frac_cents: i64 = match frac.len() {
        0 => 0,
        1 => frac.parse::<i64>().unwrap() * 10,
        _ => frac.parse::<i64>().unwrap(),
    };
    whole_cents
        .checked_add(frac_cents)
        .and_then(|v| v.checked_mul(sign))
        .ok_or_else(|| format!("currency value {s:?} out of range"))
}

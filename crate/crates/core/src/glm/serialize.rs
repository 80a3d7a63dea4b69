//! Plain-text model persistence.
//!
//! Fitted models are stored as a line-oriented `key value` format under the
//! header `argile-model v1`, terminated by `end` so truncated files are
//! rejected. Floats are written with Rust's shortest round-trip formatting,
//! so reading a file back reproduces the exact bit patterns.

use std::fmt::Write as _;

use super::{FamilyKind, FittedGlm, GlmError};

pub const HEADER: &str = "argile-model v1";

fn err(line: usize, message: impl std::fmt::Display) -> GlmError {
    GlmError::ModelText { message: format!("line {line}: {message}") }
}

/// Line cursor shared by the model parsers.
pub(crate) struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    pub fn new(text: &'a str) -> Self {
        Reader { lines: text.lines().enumerate() }
    }

    /// Next non-empty line with its 1-based number.
    pub fn next_line(&mut self) -> Result<(usize, &'a str), GlmError> {
        for (i, raw) in self.lines.by_ref() {
            let line = raw.trim_end();
            if !line.is_empty() {
                return Ok((i + 1, line));
            }
        }
        Err(GlmError::ModelText { message: "unexpected end of model text".to_string() })
    }

    pub fn expect(&mut self, literal: &str) -> Result<(), GlmError> {
        let (no, line) = self.next_line()?;
        if line != literal {
            return Err(err(no, format!("expected {literal:?}, found {line:?}")));
        }
        Ok(())
    }

    /// Reads a line of the form `key value...` and returns the value part.
    pub fn key(&mut self, key: &str) -> Result<(usize, &'a str), GlmError> {
        let (no, line) = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((no, v.trim())),
            _ => Err(err(no, format!("expected key {key:?}, found {line:?}"))),
        }
    }
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64, GlmError> {
    s.parse::<f64>().map_err(|_| err(line, format!("bad float {s:?}")))
}

pub(crate) fn parse_usize(s: &str, line: usize) -> Result<usize, GlmError> {
    s.parse::<usize>().map_err(|_| err(line, format!("bad integer {s:?}")))
}

fn parse_opt_f64(s: &str, line: usize) -> Result<Option<f64>, GlmError> {
    if s == "none" {
        Ok(None)
    } else {
        parse_f64(s, line).map(Some)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "none".to_string(),
    }
}

/// Model kind recorded in a persisted file (`glm`, `zero_inflated`, `forest`).
pub fn model_kind(text: &str) -> Result<String, GlmError> {
    let mut r = Reader::new(text);
    r.expect(HEADER)?;
    let (_, kind) = r.key("kind")?;
    Ok(kind.to_string())
}

/// Serializes a fitted regression.
pub fn glm_to_text(model: &FittedGlm) -> String {
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "kind glm").unwrap();
    writeln!(s, "family {}", model.family.name()).unwrap();
    writeln!(s, "columns {}", model.columns.join(",")).unwrap();
    match model.training_year_range {
        Some((lo, hi)) => writeln!(s, "train_years {lo} {hi}").unwrap(),
        None => writeln!(s, "train_years none").unwrap(),
    }
    writeln!(s, "n {}", model.n).unwrap();
    writeln!(s, "k {}", model.k).unwrap();
    writeln!(s, "log_likelihood {}", model.log_likelihood).unwrap();
    writeln!(s, "deviance {}", model.deviance).unwrap();
    writeln!(s, "dispersion {}", fmt_opt(model.dispersion)).unwrap();
    writeln!(s, "theta {}", fmt_opt(model.theta)).unwrap();
    writeln!(s, "tweedie_power {}", fmt_opt(model.tweedie_power)).unwrap();
    if model.flags.is_empty() {
        writeln!(s, "flags none").unwrap();
    } else {
        writeln!(s, "flags {}", model.flags.join(",")).unwrap();
    }
    for ((name, est), se) in model
        .columns
        .iter()
        .zip(&model.coefficients)
        .zip(&model.standard_errors)
    {
        writeln!(s, "coef {name} {est} {se}").unwrap();
    }
    writeln!(s, "end").unwrap();
    s
}

/// Parses text written by [`glm_to_text`].
pub fn glm_from_text(text: &str) -> Result<FittedGlm, GlmError> {
    let mut r = Reader::new(text);
    r.expect(HEADER)?;
    let (no, kind) = r.key("kind")?;
    if kind != "glm" {
        return Err(err(no, format!("expected kind glm, found {kind:?}")));
    }
    let (no, family) = r.key("family")?;
    let family = FamilyKind::parse(family).map_err(|e| err(no, e))?;
    let (no, cols) = r.key("columns")?;
    let columns: Vec<String> = cols.split(',').map(str::to_string).collect();
    if columns.first().map(String::as_str) != Some("intercept") {
        return Err(err(no, "first column must be the intercept"));
    }
    let (no, years) = r.key("train_years")?;
    let training_year_range = if years == "none" {
        None
    } else {
        let mut it = years.split_whitespace();
        let lo = it
            .next()
            .and_then(|v| v.parse::<i32>().ok())
            .ok_or_else(|| err(no, "bad train_years"))?;
        let hi = it
            .next()
            .and_then(|v| v.parse::<i32>().ok())
            .ok_or_else(|| err(no, "bad train_years"))?;
        Some((lo, hi))
    };
    let (no, n) = r.key("n")?;
    let n = parse_usize(n, no)?;
    let (no, k) = r.key("k")?;
    let k = parse_usize(k, no)?;
    let (no, ll) = r.key("log_likelihood")?;
    let log_likelihood = parse_f64(ll, no)?;
    let (no, dev) = r.key("deviance")?;
    let deviance = parse_f64(dev, no)?;
    let (no, disp) = r.key("dispersion")?;
    let dispersion = parse_opt_f64(disp, no)?;
    let (no, theta) = r.key("theta")?;
    let theta = parse_opt_f64(theta, no)?;
    let (no, power) = r.key("tweedie_power")?;
    let tweedie_power = parse_opt_f64(power, no)?;
    let (_, flags) = r.key("flags")?;
    let flags: Vec<String> = if flags == "none" {
        Vec::new()
    } else {
        flags.split(',').map(str::to_string).collect()
    };
    let mut coefficients = Vec::with_capacity(columns.len());
    let mut standard_errors = Vec::with_capacity(columns.len());
    for name in &columns {
        let (no, line) = r.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("coef") {
            return Err(err(no, format!("expected coef line for column {name:?}")));
        }
        let got = parts
            .next()
            .ok_or_else(|| err(no, "coef line missing column name"))?;
        if got != name {
            return Err(err(no, format!("coef order mismatch: expected {name:?}, found {got:?}")));
        }
        let est = parts.next().ok_or_else(|| err(no, "coef line missing estimate"))?;
        let se = parts.next().ok_or_else(|| err(no, "coef line missing standard error"))?;
        coefficients.push(parse_f64(est, no)?);
        standard_errors.push(parse_f64(se, no)?);
    }
    r.expect("end")?;
    Ok(FittedGlm {
        family,
        columns,
        coefficients,
        standard_errors,
        dispersion,
        theta,
        tweedie_power,
        log_likelihood,
        deviance,
        n,
        k,
        training_year_range,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FittedGlm {
        FittedGlm {
            family: FamilyKind::NegBin,
            columns: vec!["intercept".to_string(), "essti".to_string(), "clay".to_string()],
            coefficients: vec![-14.357, 1.0 / 3.0, 1e-17],
            standard_errors: vec![0.049, 0.012, 7.2e-3],
            dispersion: None,
            theta: Some(1.5000000000000002),
            tweedie_power: None,
            log_likelihood: -50245.5,
            deviance: 1234.0,
            n: 540_000,
            k: 4,
            training_year_range: Some((2000, 2017)),
            flags: vec!["theta_boundary".to_string()],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = glm_to_text(&m);
        let back = glm_from_text(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(model_kind(&text).unwrap(), "glm");
    }

    #[test]
    fn round_trip_preserves_nan_likelihood() {
        let mut m = sample();
        m.log_likelihood = f64::NAN;
        m.flags = vec!["quasi_likelihood".to_string()];
        let back = glm_from_text(&glm_to_text(&m)).unwrap();
        assert!(back.log_likelihood.is_nan());
        assert_eq!(back.flags, m.flags);
    }

    #[test]
    fn rejects_bad_header_and_truncation() {
        assert!(glm_from_text("argile-model v2\nkind glm\n").is_err());
        let full = glm_to_text(&sample());
        let without_end = full.strip_suffix("end\n").unwrap();
        let e = glm_from_text(without_end).unwrap_err();
        assert!(e.to_string().contains("unexpected end"), "{e}");
    }

    #[test]
    fn rejects_reordered_coefficients() {
        let text = glm_to_text(&sample())
            .replace("coef essti", "coef tmp")
            .replace("coef clay", "coef essti")
            .replace("coef tmp", "coef clay");
        let e = glm_from_text(&text).unwrap_err();
        assert!(e.to_string().contains("coef order mismatch"), "{e}");
    }

    #[test]
    fn rejects_garbage_floats_and_unknown_family() {
        let text = glm_to_text(&sample()).replace("deviance 1234", "deviance twelve34");
        assert!(glm_from_text(&text).is_err());
        let text = glm_to_text(&sample()).replace("family negbin", "family cauchy");
        assert!(glm_from_text(&text).is_err());
    }
}

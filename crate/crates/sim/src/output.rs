//! CSV tables and JSON plot data.
//!
//! Every file starts with its format version, the effective configuration and
//! the master seed, so an output can be regenerated from itself. Numbers are
//! written with 12 significant digits.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::{json, Value};

use crate::harness::{ExperimentConfig, LevelPowerTable, TCensus, TableRow, Truncation};

pub const TABLE_FORMAT: &str = "stnmmd-table/1";
pub const CENSUS_FORMAT: &str = "stnmmd-census/1";
pub const PLOT_FORMAT: &str = "stnmmd-plot/1";

const SIGNIFICANT: usize = 12;

/// `%.12g`-style formatting; non-finite values become `inf`, `-inf`, `nan`.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT as i32).contains(&exp) {
        let decimals = (SIGNIFICANT as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Rounds to 12 significant digits for JSON output; non-finite values become
/// the strings used by [`format_sig`].
pub fn json_number(x: f64) -> Value {
    if x.is_finite() {
        json!(format_sig(x).parse::<f64>().expect("formatted number parses"))
    } else {
        json!(format_sig(x))
    }
}

/// Rounds every float in a JSON tree to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => json_number(n.as_f64().expect("f64")),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Serializes to JSON with floats rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Value {
    round_json(serde_json::to_value(value).expect("value serializes"))
}

fn histogram_field(h: &std::collections::BTreeMap<usize, u64>) -> String {
    h.iter()
        .map(|(t, c)| format!("{t}:{c}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn provenance<W: Write>(out: &mut W, format: &str, config: &ExperimentConfig) -> io::Result<()> {
    writeln!(out, "# format: {format}")?;
    writeln!(out, "# master_seed: {}", config.master_seed)?;
    writeln!(out, "# config: {}", to_json(config))?;
    Ok(())
}

pub const TABLE_COLUMNS: [&str; 17] = [
    "null",
    "alternative",
    "n_total",
    "d",
    "alpha",
    "truncation",
    "method",
    "repetitions",
    "failures",
    "rejections",
    "denominator",
    "rate",
    "ci_half_width",
    "ci_low",
    "ci_high",
    "mean_t",
    "t_histogram",
];

fn method_name(m: stnmmd::QuantileMethod) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .expect("unit variant serializes to a string")
}

fn table_record(r: &TableRow) -> Vec<String> {
    vec![
        r.null.clone(),
        r.alternative.clone(),
        r.n_total.to_string(),
        r.d.to_string(),
        format_sig(r.alpha),
        r.truncation.to_string(),
        method_name(r.method),
        r.repetitions.to_string(),
        r.failures.to_string(),
        r.rejections.to_string(),
        r.denominator.to_string(),
        format_sig(r.rate),
        format_sig(r.ci_half_width),
        format_sig(r.ci_low),
        format_sig(r.ci_high),
        format_sig(r.mean_t),
        histogram_field(&r.t_histogram),
    ]
}

/// Level or power table: `#` provenance lines, a header, one row per cell.
pub fn write_table_csv<W: Write>(
    mut out: W,
    config: &ExperimentConfig,
    table: &LevelPowerTable,
) -> io::Result<()> {
    provenance(&mut out, TABLE_FORMAT, config)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_COLUMNS)?;
    for r in &table.rows {
        w.write_record(table_record(r))?;
    }
    w.flush()
}

pub const CENSUS_COLUMNS: [&str; 9] = [
    "null",
    "alternative",
    "n_total",
    "d",
    "repetitions",
    "failures",
    "mean_t",
    "median_t",
    "t_histogram",
];

pub fn write_census_csv<W: Write>(
    mut out: W,
    config: &ExperimentConfig,
    census: &[TCensus],
) -> io::Result<()> {
    provenance(&mut out, CENSUS_FORMAT, config)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CENSUS_COLUMNS)?;
    for c in census {
        w.write_record([
            c.null.clone(),
            c.alternative.clone(),
            c.n_total.to_string(),
            c.d.to_string(),
            c.repetitions.to_string(),
            c.failures.to_string(),
            format_sig(c.mean),
            c.median.map_or_else(String::new, |m| m.to_string()),
            histogram_field(&c.histogram),
        ])?;
    }
    w.flush()
}

/// Plot data for a level or power table. Rows are grouped into series that
/// differ only in the x coordinate: `T` when several fixed truncations are
/// configured, `n_total` otherwise. Error bars are the clipped 95% interval.
pub fn table_plot_data(config: &ExperimentConfig, table: &LevelPowerTable) -> Value {
    let fixed = config
        .truncation
        .iter()
        .filter(|t| matches!(t, Truncation::Fixed(_)))
        .count();
    let x_axis = if fixed > 1 { "truncation" } else { "n_total" };
    let mut series: Vec<(Value, Vec<Value>)> = Vec::new();
    for r in &table.rows {
        let (key, x) = if x_axis == "truncation" {
            let x = match r.truncation {
                Truncation::Fixed(t) => json!(t),
                Truncation::Auto => json!("auto"),
            };
            (
                json!({"null": r.null, "alternative": r.alternative, "n_total": r.n_total, "d": r.d,
                       "alpha": json_number(r.alpha), "method": method_name(r.method)}),
                x,
            )
        } else {
            (
                json!({"null": r.null, "alternative": r.alternative, "d": r.d,
                       "alpha": json_number(r.alpha), "method": method_name(r.method),
                       "truncation": r.truncation}),
                json!(r.n_total),
            )
        };
        let point = json!({
            "x": x,
            "y": json_number(r.rate),
            "err_low": json_number(r.ci_low),
            "err_high": json_number(r.ci_high),
            "mean_t": json_number(r.mean_t),
        });
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, points)) => points.push(point),
            None => series.push((key, vec![point])),
        }
    }
    json!({
        "format": PLOT_FORMAT,
        "master_seed": config.master_seed,
        "config": to_json(config),
        "x_axis": x_axis,
        "y_axis": "rejection_rate",
        "series": series
            .into_iter()
            .map(|(k, points)| json!({"key": k, "points": points}))
            .collect::<Vec<_>>(),
    })
}

/// Plot data for a truncation census: one histogram per cell.
pub fn census_plot_data(config: &ExperimentConfig, census: &[TCensus]) -> Value {
    json!({
        "format": PLOT_FORMAT,
        "master_seed": config.master_seed,
        "config": to_json(config),
        "x_axis": "selected_truncation",
        "y_axis": "frequency",
        "series": census.iter().map(|c| json!({
            "key": {"null": c.null, "alternative": c.alternative, "n_total": c.n_total, "d": c.d},
            "points": c.histogram.iter().map(|(t, n)| json!({"x": t, "y": n})).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

/// Pretty JSON followed by a newline.
pub fn write_json<W: Write>(mut out: W, value: &Value) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_sig(0.05), "0.05");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(2.0 / 3.0 * 1e6), "666666.666667");
        assert_eq!(format_sig(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_sig(1.5e-7), "1.5e-7");
        assert_eq!(format_sig(-0.25), "-0.25");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(999999999999.9), "1e12");
        assert_eq!(format_sig(f64::INFINITY), "inf");
        assert_eq!(format_sig(f64::NAN), "nan");
        assert_eq!(format_sig(0.0), "0");
    }

    #[test]
    fn json_rounding() {
        assert_eq!(json_number(1.0 / 3.0), json!(0.333333333333));
        assert_eq!(json_number(f64::INFINITY), json!("inf"));
        let v = round_json(json!({"a": [0.1 + 0.2, 3], "b": "x"}));
        assert_eq!(v, json!({"a": [0.3, 3], "b": "x"}));
    }
}

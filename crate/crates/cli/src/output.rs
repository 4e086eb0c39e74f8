//! CSV result tables.
//!
//! Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `scheme` | `S1` .. `S6` |
//! | `sweep_axis` | `K`, `N`, `p_max_w`, `sar_max` or `none` |
//! | `sweep_value` | value on the sweep axis (empty without a sweep) |
//! | `users`, `antennas`, `ris_elements` | system size at this point |
//! | `trials` | successful trials |
//! | `failures` | trials whose solver failed |
//! | `seed` | master seed |
//! | `min_sinr_mean` | mean over trials of the minimum user SINR (linear) |
//! | `min_sinr_db` | `10 log10(min_sinr_mean)` |
//! | `min_sinr_std` | standard deviation over trials |
//! | `min_sinr_min`, `min_sinr_max` | extremes over trials |
//! | `power_sum_w` | mean over trials of the summed transmit powers (W) |
//! | `statistical_ms` | one-time statistical phase design per set of statistics |
//! | `per_realization_ms` | mean per-realization wall clock |
//! | `total_ms` | `statistical_ms + trials * per_realization_ms` |
//! | `error` | first solver error, empty on success |
//!
//! Timing columns read `NA` when timing is disabled, which makes the file a
//! pure function of the config and seed.

use std::io::Write;

use risfair::model::linear_to_db;
use risfair::schemes::{SchemeId, SchemeSummary};

pub const COLUMNS: [&str; 19] = [
    "scheme",
    "sweep_axis",
    "sweep_value",
    "users",
    "antennas",
    "ris_elements",
    "trials",
    "failures",
    "seed",
    "min_sinr_mean",
    "min_sinr_db",
    "min_sinr_std",
    "min_sinr_min",
    "min_sinr_max",
    "power_sum_w",
    "statistical_ms",
    "per_realization_ms",
    "total_ms",
    "error",
];

/// Format with 12 significant digits, choosing fixed or exponent notation
/// like C's `%.12g`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One output line.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scheme: SchemeId,
    pub sweep_axis: Option<&'static str>,
    pub sweep_value: Option<f64>,
    pub users: usize,
    pub antennas: usize,
    pub ris_elements: usize,
    pub trials: usize,
    pub failures: usize,
    pub seed: u64,
    pub min_sinr_mean: f64,
    pub min_sinr_std: f64,
    pub min_sinr_min: f64,
    pub min_sinr_max: f64,
    pub power_sum_w: f64,
    pub statistical_ms: f64,
    pub per_realization_ms: f64,
    pub error: Option<String>,
}

impl Row {
    pub fn from_summary(s: &SchemeSummary, point: Point, seed: u64) -> Self {
        let error = s
            .first_error
            .as_ref()
            .map(|e| format!("{} trial(s) failed: {e}", s.failures));
        Self {
            scheme: s.scheme,
            sweep_axis: point.axis,
            sweep_value: point.value,
            users: point.users,
            antennas: point.antennas,
            ris_elements: point.ris_elements,
            trials: s.trials,
            failures: s.failures,
            seed,
            min_sinr_mean: s.mean_min_sinr,
            min_sinr_std: s.std_min_sinr,
            min_sinr_min: s.min_min_sinr,
            min_sinr_max: s.max_min_sinr,
            power_sum_w: s.mean_power_sum,
            statistical_ms: s.statistical_ms,
            per_realization_ms: s.per_realization_ms,
            error,
        }
    }

    /// Placeholder for a scheme whose whole point failed.
    pub fn failed(scheme: SchemeId, point: Point, seed: u64, requested: usize, error: String) -> Self {
        Self {
            scheme,
            sweep_axis: point.axis,
            sweep_value: point.value,
            users: point.users,
            antennas: point.antennas,
            ris_elements: point.ris_elements,
            trials: 0,
            failures: requested,
            seed,
            min_sinr_mean: f64::NAN,
            min_sinr_std: f64::NAN,
            min_sinr_min: f64::NAN,
            min_sinr_max: f64::NAN,
            power_sum_w: f64::NAN,
            statistical_ms: f64::NAN,
            per_realization_ms: f64::NAN,
            error: Some(error),
        }
    }

    pub fn total_ms(&self) -> f64 {
        self.statistical_ms + self.trials as f64 * self.per_realization_ms
    }

    fn fields(&self, timing: bool) -> Vec<String> {
        let time = |x: f64| if timing { fmt_num(x) } else { "NA".to_string() };
        vec![
            self.scheme.to_string(),
            self.sweep_axis.unwrap_or("none").to_string(),
            self.sweep_value.map(fmt_num).unwrap_or_default(),
            self.users.to_string(),
            self.antennas.to_string(),
            self.ris_elements.to_string(),
            self.trials.to_string(),
            self.failures.to_string(),
            self.seed.to_string(),
            fmt_num(self.min_sinr_mean),
            fmt_num(linear_to_db(self.min_sinr_mean)),
            fmt_num(self.min_sinr_std),
            fmt_num(self.min_sinr_min),
            fmt_num(self.min_sinr_max),
            fmt_num(self.power_sum_w),
            time(self.statistical_ms),
            time(self.per_realization_ms),
            time(self.total_ms()),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Where a row sits in the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub axis: Option<&'static str>,
    pub value: Option<f64>,
    pub users: usize,
    pub antennas: usize,
    pub ris_elements: usize,
}

pub fn write_csv<W: Write>(out: W, rows: &[Row], timing: bool) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        w.write_record(row.fields(timing))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2f64.sqrt()), "1.41421356237");
        assert_eq!(fmt_num(123456.789), "123456.789");
        assert_eq!(fmt_num(1e-7), "1e-07");
        assert_eq!(fmt_num(-2.5e13), "-2.5e+13");
        assert_eq!(fmt_num(1e-4), "0.0001");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn twelve_digits_round_trip_closely() {
        for &x in &[
            std::f64::consts::PI,
            6.02214076e23,
            1.602176634e-19,
            -0.000123456789012345,
        ] {
            let y: f64 = fmt_num(x).parse().unwrap();
            assert!((x - y).abs() <= 1e-11 * x.abs(), "{x} -> {y}");
        }
    }

    #[test]
    fn header_matches_fields() {
        let p = Point {
            axis: None,
            value: None,
            users: 2,
            antennas: 4,
            ris_elements: 8,
        };
        let row = Row::failed(SchemeId::S1, p, 7, 3, "boom".into());
        assert_eq!(row.fields(true).len(), COLUMNS.len());
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row], false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("scheme,sweep_axis"));
        assert!(lines[1].starts_with("S1,none,,2,4,8,0,3,7,nan"));
        assert!(lines[1].ends_with("NA,NA,NA,boom"));
    }
}

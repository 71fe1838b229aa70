//! Fixed-width datetime format specs used by filename and log grammars.
//!
//! Directives: `%Y` (4-digit year), `%m` `%d` `%H` `%M` `%S` (2 digits),
//! `%L` (3-digit milliseconds), `%s` (10-digit Unix seconds), `%Q`
//! (13-digit Unix milliseconds) and `%%`. Any other character is literal.
//! A spec must determine a calendar date, either through `%Y`+`%m`+`%d` or
//! through one of the epoch directives.

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DateSpecError {
    #[error("unknown directive %{0}")]
    UnknownDirective(char),
    #[error("dangling % at end of spec")]
    Dangling,
    #[error("field %{0} appears more than once")]
    Duplicate(char),
    #[error("spec does not determine a date")]
    Incomplete,
    #[error("epoch directives cannot be mixed with calendar fields")]
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Field(char, usize),
    Lit(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Resolution {
    Day,
    Second,
    Millisecond,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DateSpec {
    source: String,
    items: Vec<Item>,
}

impl DateSpec {
    pub fn parse(spec: &str) -> Result<DateSpec, DateSpecError> {
        let mut items = Vec::new();
        let mut chars = spec.chars();
        let mut seen = Vec::new();
        while let Some(c) = chars.next() {
            if c != '%' {
                items.push(Item::Lit(c));
                continue;
            }
            let d = chars.next().ok_or(DateSpecError::Dangling)?;
            let width = match d {
                '%' => {
                    items.push(Item::Lit('%'));
                    continue;
                }
                'Y' => 4,
                'm' | 'd' | 'H' | 'M' | 'S' => 2,
                'L' => 3,
                's' => 10,
                'Q' => 13,
                other => return Err(DateSpecError::UnknownDirective(other)),
            };
            if seen.contains(&d) {
                return Err(DateSpecError::Duplicate(d));
            }
            seen.push(d);
            items.push(Item::Field(d, width));
        }
        let epoch = seen.iter().filter(|c| matches!(c, 's' | 'Q')).count();
        let calendar = seen.iter().any(|c| !matches!(c, 's' | 'Q'));
        if epoch > 1 || (epoch == 1 && calendar) {
            return Err(DateSpecError::Mixed);
        }
        if epoch == 0 && !(seen.contains(&'Y') && seen.contains(&'m') && seen.contains(&'d')) {
            return Err(DateSpecError::Incomplete);
        }
        Ok(DateSpec {
            source: spec.to_owned(),
            items,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    fn has(&self, d: char) -> bool {
        self.items.iter().any(|i| matches!(i, Item::Field(c, _) if *c == d))
    }

    /// Finest time unit the spec can represent.
    pub fn resolution(&self) -> Resolution {
        if self.has('Q') || self.has('L') {
            Resolution::Millisecond
        } else if self.has('s') || self.has('H') || self.has('M') || self.has('S') {
            Resolution::Second
        } else {
            Resolution::Day
        }
    }

    /// Regex fragment (no groups) matching any rendering of this spec.
    pub fn regex_fragment(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            match *item {
                Item::Field(_, w) => out.push_str(&format!("[0-9]{{{w}}}")),
                Item::Lit(c) => out.push_str(&regex::escape(&c.to_string())),
            }
        }
        out
    }

    /// Parses a string that must match the spec in full.
    pub fn parse_datetime(&self, s: &str) -> Option<NaiveDateTime> {
        let mut rest = s;
        let (mut y, mut mo, mut d) = (None, None, None);
        let (mut h, mut mi, mut sec, mut ms) = (0u32, 0u32, 0u32, 0u32);
        let mut epoch: Option<NaiveDateTime> = None;
        for item in &self.items {
            match *item {
                Item::Lit(c) => rest = rest.strip_prefix(c)?,
                Item::Field(f, w) => {
                    let digits = rest.get(..w)?;
                    if !digits.bytes().all(|b| b.is_ascii_digit()) {
                        return None;
                    }
                    rest = &rest[w..];
                    let v: i64 = digits.parse().ok()?;
                    match f {
                        'Y' => y = Some(v as i32),
                        'm' => mo = Some(v as u32),
                        'd' => d = Some(v as u32),
                        'H' => h = v as u32,
                        'M' => mi = v as u32,
                        'S' => sec = v as u32,
                        'L' => ms = v as u32,
                        's' => epoch = Some(DateTime::from_timestamp(v, 0)?.naive_utc()),
                        'Q' => epoch = Some(DateTime::from_timestamp_millis(v)?.naive_utc()),
                        _ => unreachable!(),
                    }
                }
            }
        }
        if !rest.is_empty() {
            return None;
        }
        if epoch.is_some() {
            return epoch;
        }
        NaiveDate::from_ymd_opt(y?, mo?, d?)?.and_hms_milli_opt(h, mi, sec, ms)
    }

    pub fn format(&self, dt: &NaiveDateTime) -> String {
        let mut out = String::new();
        for item in &self.items {
            match *item {
                Item::Lit(c) => out.push(c),
                Item::Field(f, w) => {
                    let v: i64 = match f {
                        'Y' => dt.year() as i64,
                        'm' => dt.month() as i64,
                        'd' => dt.day() as i64,
                        'H' => dt.hour() as i64,
                        'M' => dt.minute() as i64,
                        'S' => dt.second() as i64,
                        'L' => (dt.nanosecond() / 1_000_000) as i64,
                        's' => dt.and_utc().timestamp(),
                        'Q' => dt.and_utc().timestamp_millis(),
                        _ => unreachable!(),
                    };
                    out.push_str(&format!("{v:0w$}"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dt(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, mo, d).unwrap().and_hms_opt(h, mi, s).unwrap()
    }

    #[test]
    fn calendar_spec() {
        let spec = DateSpec::parse("%Y%m%d_%H%M%S").unwrap();
        assert_eq!(spec.parse_datetime("20230401_123456"), Some(dt(2023, 4, 1, 12, 34, 56)));
        assert_eq!(spec.format(&dt(2023, 4, 1, 12, 34, 56)), "20230401_123456");
        assert_eq!(spec.parse_datetime("20231301_123456"), None);
        assert_eq!(spec.parse_datetime("20230401-123456"), None);
        assert_eq!(spec.resolution(), Resolution::Second);
    }

    #[test]
    fn epoch_millis() {
        let spec = DateSpec::parse("%Q").unwrap();
        let t = spec.parse_datetime("1680345296123").unwrap();
        assert_eq!(t.and_utc().timestamp_millis(), 1680345296123);
        assert_eq!(spec.format(&t), "1680345296123");
        assert_eq!(spec.resolution(), Resolution::Millisecond);
    }

    #[test]
    fn date_only() {
        let spec = DateSpec::parse("%Y%m%d").unwrap();
        assert_eq!(spec.parse_datetime("20230401"), Some(dt(2023, 4, 1, 0, 0, 0)));
        assert_eq!(spec.resolution(), Resolution::Day);
    }

    #[test]
    fn bad_specs() {
        assert_eq!(DateSpec::parse("%Y%m").unwrap_err(), DateSpecError::Incomplete);
        assert_eq!(DateSpec::parse("%Y%q").unwrap_err(), DateSpecError::UnknownDirective('q'));
        assert_eq!(DateSpec::parse("%Y%m%d%").unwrap_err(), DateSpecError::Dangling);
        assert_eq!(DateSpec::parse("%Y%Y%m%d").unwrap_err(), DateSpecError::Duplicate('Y'));
        assert_eq!(DateSpec::parse("%Q%H").unwrap_err(), DateSpecError::Mixed);
    }

    #[test]
    fn regex_fragment_escapes_literals() {
        let spec = DateSpec::parse("%Y-%m-%d %H:%M:%S.%L").unwrap();
        let re = regex::Regex::new(&format!("^{}$", spec.regex_fragment())).unwrap();
        assert!(re.is_match("2023-04-01 12:34:56.789"));
        assert!(!re.is_match("2023-04-01T12:34:56.789"));
    }
}

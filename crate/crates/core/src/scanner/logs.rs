//! Line-oriented edit-log grammars.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDateTime};

use super::profile::LogGrammar;

pub const EPOCH_MILLIS: &str = "epoch_millis";

/// One recognized log record: named fields, timestamps normalized to ISO 8601.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub line: usize,
    pub fields: BTreeMap<String, String>,
}

fn normalize_time(format: &str, raw: &str) -> Option<String> {
    let dt: NaiveDateTime = if format == EPOCH_MILLIS {
        DateTime::from_timestamp_millis(raw.parse().ok()?)?.naive_utc()
    } else {
        NaiveDateTime::parse_from_str(raw, format).ok()?
    };
    Some(dt.format("%Y-%m-%dT%H:%M:%S%.3f").to_string())
}

/// Applies `grammar` to every line of `text`. Lines that do not match, or
/// whose timestamps do not parse, are skipped with a diagnostic. An input
/// without any non-empty line yields one diagnostic.
pub fn parse_log(grammar: &LogGrammar, text: &str) -> (Vec<LogRecord>, Vec<String>) {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut nonempty = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        nonempty += 1;
        let Some(caps) = grammar.record.captures(line) else {
            diagnostics.push(format!("line {}: not a {} record", i + 1, grammar.name));
            continue;
        };
        let mut fields = BTreeMap::new();
        let mut ok = true;
        for name in grammar.record.capture_names().flatten() {
            let Some(m) = caps.name(name) else { continue };
            let value = match grammar.time_fields.get(name) {
                Some(fmt) => match normalize_time(fmt, m.as_str()) {
                    Some(v) => v,
                    None => {
                        diagnostics.push(format!("line {}: bad {name} {:?}", i + 1, m.as_str()));
                        ok = false;
                        break;
                    }
                },
                None => m.as_str().to_owned(),
            };
            fields.insert(name.to_owned(), value);
        }
        if ok {
            records.push(LogRecord { line: i + 1, fields });
        }
    }
    if nonempty == 0 {
        diagnostics.push(format!("empty {} log", grammar.name));
    }
    (records, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanner::ProfileSet;

    fn grammar(name: &str) -> LogGrammar {
        ProfileSet::builtin().grammars[name].clone()
    }

    #[test]
    fn meitu_line() {
        let text = "[2023-04-01 12:34:56] save path=/storage/emulated/0/DCIM/MTXX/MTXX_MH20230401_123456.jpg \
                    original=IMG_0001.jpg edited=MTXX_MH20230401_123456.jpg start=2023-04-01 12:30:05 functions=eraser,filter\n";
        let (recs, diags) = parse_log(&grammar("meitu-edit"), text);
        assert!(diags.is_empty(), "{diags:?}");
        let f = &recs[0].fields;
        assert_eq!(f["original_name"], "IMG_0001.jpg");
        assert_eq!(f["edited_name"], "MTXX_MH20230401_123456.jpg");
        assert_eq!(f["start_time"], "2023-04-01T12:30:05.000");
        assert_eq!(f["functions"], "eraser,filter");
    }

    #[test]
    fn inshot_epoch_millis() {
        let text = "{\"image\":\"cutout_1.png\",\"startTime\":1680352205123,\"saveTime\":1680352262000}\r\n";
        let (recs, diags) = parse_log(&grammar("inshot-save"), text);
        assert!(diags.is_empty());
        assert_eq!(recs[0].fields["start_time"], "2023-04-01T12:30:05.123");
        assert_eq!(recs[0].fields["save_time"], "2023-04-01T12:31:02.000");
    }

    #[test]
    fn empty_log_one_diagnostic() {
        let (recs, diags) = parse_log(&grammar("project"), "\n  \n");
        assert!(recs.is_empty());
        assert_eq!(diags.len(), 1);
    }

    #[test]
    fn malformed_lines_skipped() {
        let text = "garbage\nproject=p1;created=2023-04-01T10:00:00;modified=2023-04-01T11:00:00\n\
                    project=p2;created=2023-13-01T10:00:00;modified=2023-04-01T11:00:00\n";
        let (recs, diags) = parse_log(&grammar("project"), text);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].line, 2);
        assert_eq!(diags.len(), 2);
    }
}

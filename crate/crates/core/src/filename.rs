//! Filename signature grammars.
//!
//! Editors often name saved files after a fixed template (a literal prefix,
//! a creation timestamp, the source filename). Each template is a token
//! grammar compiled into an anchored regex; timestamps are recovered through
//! [`DateSpec`].

use chrono::NaiveDateTime;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datefmt::DateSpec;

const BUILTIN_PATTERNS: &str = include_str!("../data/filename_patterns.toml");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatternError {
    #[error("invalid pattern {pattern:?}: {reason}")]
    InvalidPattern { pattern: String, reason: String },
    #[error("pattern file: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Literal(String),
    Datetime(DateSpec),
    OriginalName,
    RandomNumber,
    Extension(Vec<String>),
}

/// One pattern record as written in the pattern file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternDef {
    pub name: String,
    pub editor: String,
    pub tokens: Vec<String>,
    pub extensions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature_token: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PatternFile {
    #[serde(default)]
    pattern: Vec<PatternDef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilenamePattern {
    pub name: String,
    pub editor_name: String,
    /// Ends with an `Extension` token.
    pub grammar: Vec<Token>,
    pub signature_token: Option<String>,
}

impl FilenamePattern {
    pub fn from_def(def: &PatternDef) -> Result<FilenamePattern, PatternError> {
        let invalid = |reason: String| PatternError::InvalidPattern {
            pattern: def.name.clone(),
            reason,
        };
        if def.tokens.is_empty() {
            return Err(invalid("empty grammar".into()));
        }
        if def.extensions.is_empty() || def.extensions.iter().any(String::is_empty) {
            return Err(invalid("extension set must be non-empty".into()));
        }
        let mut grammar = Vec::with_capacity(def.tokens.len() + 1);
        for raw in &def.tokens {
            let (kind, arg) = match raw.split_once(':') {
                Some((k, a)) => (k, Some(a)),
                None => (raw.as_str(), None),
            };
            let token = match (kind, arg) {
                ("literal", Some(a)) if !a.is_empty() => Token::Literal(a.to_owned()),
                ("datetime", Some(a)) => Token::Datetime(
                    DateSpec::parse(a).map_err(|e| invalid(format!("datetime {a:?}: {e}")))?,
                ),
                ("original_name", None) => Token::OriginalName,
                ("random_number", None) => Token::RandomNumber,
                _ => return Err(invalid(format!("unknown token {raw:?}"))),
            };
            grammar.push(token);
        }
        if let Some(sig) = &def.signature_token {
            let present = grammar
                .iter()
                .any(|t| matches!(t, Token::Literal(l) if l.contains(sig.as_str())));
            if sig.is_empty() || !present {
                return Err(invalid(format!("signature token {sig:?} not in any literal")));
            }
        }
        grammar.push(Token::Extension(def.extensions.clone()));
        Ok(FilenamePattern {
            name: def.name.clone(),
            editor_name: def.editor.clone(),
            grammar,
            signature_token: def.signature_token.clone(),
        })
    }

    fn regex_source(&self) -> String {
        let mut re = String::from("^");
        for (i, token) in self.grammar.iter().enumerate() {
            match token {
                Token::Literal(l) => re.push_str(&regex::escape(l)),
                Token::Datetime(spec) => {
                    re.push_str(&format!("(?P<dt{i}>{})", spec.regex_fragment()))
                }
                Token::OriginalName => re.push_str("(?P<orig>.+?)"),
                Token::RandomNumber => re.push_str("[0-9]+"),
                Token::Extension(exts) => {
                    let alts: Vec<String> = exts.iter().map(|e| regex::escape(e)).collect();
                    re.push_str(&format!(r"\.(?:{})", alts.join("|")));
                }
            }
        }
        re.push('$');
        re
    }

    /// Human-readable template, e.g. `PSX_{%Y%m%d_%H%M%S}.{jpg}`.
    pub fn template(&self) -> String {
        let mut out = String::new();
        for token in &self.grammar {
            match token {
                Token::Literal(l) => out.push_str(l),
                Token::Datetime(spec) => out.push_str(&format!("{{{}}}", spec.as_str())),
                Token::OriginalName => out.push_str("{original_name}"),
                Token::RandomNumber => out.push_str("{number}"),
                Token::Extension(exts) => out.push_str(&format!(".{{{}}}", exts.join("|"))),
            }
        }
        out
    }

    /// Renders a filename following this grammar, using the first extension.
    pub fn instantiate(&self, when: &NaiveDateTime, original: &str, number: u64) -> String {
        let mut out = String::new();
        for token in &self.grammar {
            match token {
                Token::Literal(l) => out.push_str(l),
                Token::Datetime(spec) => out.push_str(&spec.format(when)),
                Token::OriginalName => out.push_str(original),
                Token::RandomNumber => out.push_str(&number.to_string()),
                Token::Extension(exts) => {
                    out.push('.');
                    out.push_str(&exts[0]);
                }
            }
        }
        out
    }

    pub fn datetime_spec(&self) -> Option<&DateSpec> {
        self.grammar.iter().find_map(|t| match t {
            Token::Datetime(s) => Some(s),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrength {
    /// The pattern's unique signature literal occurred.
    Signature,
    /// Only the grammar structure matched.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilenameMatch {
    pub editor_name: String,
    pub pattern_name: String,
    pub strength: MatchStrength,
    pub extracted_datetime: Option<NaiveDateTime>,
    pub extracted_original_name: Option<String>,
}

#[derive(Debug)]
struct Compiled {
    pattern: FilenamePattern,
    regex: Regex,
}

/// Immutable set of compiled patterns, tried in definition order.
#[derive(Debug, Default)]
pub struct FilenameMatcher {
    compiled: Vec<Compiled>,
}

impl FilenameMatcher {
    pub fn compile(defs: &[PatternDef]) -> Result<FilenameMatcher, PatternError> {
        let mut compiled = Vec::with_capacity(defs.len());
        for def in defs {
            let pattern = FilenamePattern::from_def(def)?;
            let regex = Regex::new(&pattern.regex_source()).map_err(|e| {
                PatternError::InvalidPattern {
                    pattern: def.name.clone(),
                    reason: e.to_string(),
                }
            })?;
            compiled.push(Compiled { pattern, regex });
        }
        Ok(FilenameMatcher { compiled })
    }

    pub fn from_toml(text: &str) -> Result<FilenameMatcher, PatternError> {
        let file: PatternFile =
            toml::from_str(text).map_err(|e| PatternError::Syntax(e.to_string()))?;
        FilenameMatcher::compile(&file.pattern)
    }

    /// The built-in edited-image filename grammars.
    pub fn builtin() -> FilenameMatcher {
        FilenameMatcher::from_toml(BUILTIN_PATTERNS).expect("built-in patterns compile")
    }

    pub fn builtin_defs() -> Vec<PatternDef> {
        let file: PatternFile = toml::from_str(BUILTIN_PATTERNS).expect("built-in patterns parse");
        file.pattern
    }

    pub fn patterns(&self) -> impl Iterator<Item = &FilenamePattern> {
        self.compiled.iter().map(|c| &c.pattern)
    }

    pub fn pattern(&self, name: &str) -> Option<&FilenamePattern> {
        self.patterns().find(|p| p.name == name)
    }

    /// All grammars matching `name` (a bare filename).
    pub fn match_filename(&self, name: &str) -> Vec<FilenameMatch> {
        let mut out = Vec::new();
        for c in &self.compiled {
            let Some(caps) = c.regex.captures(name) else {
                continue;
            };
            let extracted_datetime = c.pattern.grammar.iter().enumerate().find_map(|(i, t)| {
                let Token::Datetime(spec) = t else { return None };
                caps.name(&format!("dt{i}"))
                    .and_then(|m| spec.parse_datetime(m.as_str()))
            });
            let strength = match &c.pattern.signature_token {
                Some(sig) if name.contains(sig.as_str()) => MatchStrength::Signature,
                _ => MatchStrength::Structural,
            };
            out.push(FilenameMatch {
                editor_name: c.pattern.editor_name.clone(),
                pattern_name: c.pattern.name.clone(),
                strength,
                extracted_datetime,
                extracted_original_name: caps.name("orig").map(|m| m.as_str().to_owned()),
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, mo, d).unwrap().and_hms_opt(h, mi, s).unwrap()
    }

    #[test]
    fn builtins_cover_every_editor() {
        let m = FilenameMatcher::builtin();
        let mut editors: Vec<&str> = m.patterns().map(|p| p.editor_name.as_str()).collect();
        editors.dedup();
        assert_eq!(editors.len(), 11);
    }

    #[test]
    fn empty_matcher() {
        let m = FilenameMatcher::compile(&[]).unwrap();
        assert!(m.match_filename("PSX_20230401_123456.jpg").is_empty());
    }

    #[test]
    fn invalid_definitions() {
        let base = PatternDef {
            name: "x".into(),
            editor: "X".into(),
            tokens: vec!["wildcard".into()],
            extensions: vec!["jpg".into()],
            signature_token: None,
        };
        assert!(matches!(
            FilenameMatcher::compile(&[base.clone()]),
            Err(PatternError::InvalidPattern { .. })
        ));
        let empty = PatternDef {
            tokens: vec![],
            ..base.clone()
        };
        assert!(FilenameMatcher::compile(&[empty]).is_err());
        let no_ext = PatternDef {
            tokens: vec!["literal:a".into()],
            extensions: vec![],
            ..base.clone()
        };
        assert!(FilenameMatcher::compile(&[no_ext]).is_err());
        let bad_sig = PatternDef {
            tokens: vec!["literal:abc".into()],
            signature_token: Some("zzz".into()),
            ..base
        };
        assert!(FilenameMatcher::compile(&[bad_sig]).is_err());
    }

    #[test]
    fn psx() {
        let m = FilenameMatcher::builtin().match_filename("PSX_20230401_123456.jpg");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].editor_name, "Photoshop Express");
        assert_eq!(m[0].strength, MatchStrength::Signature);
        assert_eq!(m[0].extracted_datetime, Some(at(2023, 4, 1, 12, 34, 56)));
    }

    #[test]
    fn camera_name_matches_nothing() {
        assert!(FilenameMatcher::builtin().match_filename("IMG_0001.jpg").is_empty());
    }

    #[test]
    fn snapseed_export() {
        let m = FilenameMatcher::builtin().match_filename("flower_edited.png");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].editor_name, "Snapseed");
        assert_eq!(m[0].strength, MatchStrength::Structural);
        assert_eq!(m[0].extracted_original_name.as_deref(), Some("flower"));
    }

    #[test]
    fn background_eraser() {
        let m = FilenameMatcher::builtin().match_filename("BackgroundEraser_20230401_123456.jpg");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].editor_name, "Background Eraser (Inshot)");
        assert_eq!(m[0].strength, MatchStrength::Signature);
    }

    #[test]
    fn epoch_names_are_structural_only() {
        let m = FilenameMatcher::builtin().match_filename("1680345296123.png");
        let editors: Vec<&str> = m.iter().map(|m| m.editor_name.as_str()).collect();
        assert_eq!(editors, vec!["SnapEdit", "Background Eraser (handy)"]);
        assert!(m.iter().all(|m| m.strength == MatchStrength::Structural));
        assert!(m.iter().all(|m| m.extracted_datetime.is_some()));
    }

    #[test]
    fn case_sensitive() {
        assert!(FilenameMatcher::builtin().match_filename("psx_20230401_123456.jpg").is_empty());
        assert!(FilenameMatcher::builtin().match_filename("PSX_20230401_123456.JPG").is_empty());
    }

    #[test]
    fn photostudio_date_only() {
        let m = FilenameMatcher::builtin().match_filename("photostudio_20230401.png");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].pattern_name, "photo-studio-date");
        assert_eq!(m[0].extracted_datetime, Some(at(2023, 4, 1, 0, 0, 0)));
    }

    #[test]
    fn invalid_date_still_matches_structure() {
        let m = FilenameMatcher::builtin().match_filename("PSX_20231399_123456.jpg");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].extracted_datetime, None);
    }

    #[test]
    fn template_rendering() {
        let m = FilenameMatcher::builtin();
        let p = m.pattern("photoshop-express").unwrap();
        assert_eq!(p.template(), "PSX_{%Y%m%d_%H%M%S}.{jpg}");
        assert_eq!(p.instantiate(&at(2023, 4, 1, 12, 34, 56), "", 0), "PSX_20230401_123456.jpg");
    }
}

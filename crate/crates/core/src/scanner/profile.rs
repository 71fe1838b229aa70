//! Package profiles and log grammars, loaded from a TOML profile file.

use std::collections::BTreeMap;

use globset::{GlobBuilder, GlobMatcher};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ArtifactKind, ScanError};

const BUILTIN_PROFILES: &str = include_str!("../../data/profiles.toml");

pub const PACKAGE_PLACEHOLDER: &str = "{package_name}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ContentRule {
    JpegSignature,
    PngSignature,
    /// JPEG or PNG.
    ImageSignature,
    Any,
    LogGrammar(String),
}

impl TryFrom<String> for ContentRule {
    type Error = String;

    fn try_from(s: String) -> Result<ContentRule, String> {
        Ok(match s.as_str() {
            "jpeg-signature" => ContentRule::JpegSignature,
            "png-signature" => ContentRule::PngSignature,
            "image-signature" => ContentRule::ImageSignature,
            "any" => ContentRule::Any,
            _ => match s.strip_prefix("log:") {
                Some(name) if !name.is_empty() => ContentRule::LogGrammar(name.to_owned()),
                _ => return Err(format!("unknown content rule {s:?}")),
            },
        })
    }
}

impl From<ContentRule> for String {
    fn from(r: ContentRule) -> String {
        match r {
            ContentRule::JpegSignature => "jpeg-signature".into(),
            ContentRule::PngSignature => "png-signature".into(),
            ContentRule::ImageSignature => "image-signature".into(),
            ContentRule::Any => "any".into(),
            ContentRule::LogGrammar(n) => format!("log:{n}"),
        }
    }
}

fn high() -> Confidence {
    Confidence::High
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRule {
    pub kind: ArtifactKind,
    pub path: String,
    pub content: ContentRule,
    #[serde(default = "high")]
    pub confidence: Confidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn default_probes() -> Vec<String> {
    vec![
        "data/data/{package_name}".into(),
        "storage/emulated/0/Android/data/{package_name}".into(),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageProfile {
    pub package_name: String,
    pub editor_name: String,
    #[serde(default = "default_probes")]
    pub probe_paths: Vec<String>,
    #[serde(default)]
    pub cache_paths: Vec<String>,
    #[serde(default, rename = "rule")]
    pub artifact_rules: Vec<ArtifactRule>,
}

impl PackageProfile {
    pub fn new(package_name: &str, editor_name: &str) -> PackageProfile {
        PackageProfile {
            package_name: package_name.to_owned(),
            editor_name: editor_name.to_owned(),
            probe_paths: default_probes(),
            cache_paths: Vec::new(),
            artifact_rules: Vec::new(),
        }
    }

    /// Substitutes the package name into a path template.
    pub fn expand(&self, template: &str) -> String {
        template.replace(PACKAGE_PLACEHOLDER, &self.package_name)
    }

    /// Cache directories to carve, default first.
    pub fn cache_dirs(&self) -> Vec<String> {
        let mut dirs = vec![format!("data/data/{}/cache/image_manager_disk_cache", self.package_name)];
        dirs.extend(self.cache_paths.iter().map(|t| self.expand(t)));
        dirs.dedup();
        dirs
    }

    fn validate(&self) -> Result<(), ScanError> {
        let bad = |reason: String| ScanError::InvalidProfile {
            package: self.package_name.clone(),
            reason,
        };
        if self.package_name.is_empty() {
            return Err(bad("empty package name".into()));
        }
        let templates = self
            .probe_paths
            .iter()
            .chain(&self.cache_paths)
            .chain(self.artifact_rules.iter().map(|r| &r.path));
        for t in templates {
            let rest = t.replace(PACKAGE_PLACEHOLDER, "");
            if rest.contains('{') || rest.contains('}') {
                return Err(bad(format!("template {t:?} uses an unknown placeholder")));
            }
            if t.starts_with('/') || t.split('/').any(|c| c == "..") {
                return Err(bad(format!("template {t:?} escapes the extraction root")));
            }
        }
        for r in &self.artifact_rules {
            rule_glob(&self.expand(&r.path)).map_err(|e| bad(e.to_string()))?;
        }
        Ok(())
    }
}

pub(crate) fn rule_glob(path: &str) -> Result<GlobMatcher, globset::Error> {
    Ok(GlobBuilder::new(path).literal_separator(true).build()?.compile_matcher())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogGrammarDef {
    pub name: String,
    pub record: String,
    #[serde(default)]
    pub time_fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct LogGrammar {
    pub name: String,
    pub record: Regex,
    pub time_fields: BTreeMap<String, String>,
}

impl LogGrammar {
    pub fn compile(def: &LogGrammarDef) -> Result<LogGrammar, ScanError> {
        let bad = |reason: String| ScanError::InvalidGrammar {
            grammar: def.name.clone(),
            reason,
        };
        let record = Regex::new(&def.record).map_err(|e| bad(e.to_string()))?;
        let groups: Vec<&str> = record.capture_names().flatten().collect();
        for field in def.time_fields.keys() {
            if !groups.contains(&field.as_str()) {
                return Err(bad(format!("time field {field:?} is not a named group")));
            }
        }
        Ok(LogGrammar {
            name: def.name.clone(),
            record,
            time_fields: def.time_fields.clone(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct ProfileFile {
    #[serde(default)]
    profile: Vec<PackageProfile>,
    #[serde(default)]
    log_grammar: Vec<LogGrammarDef>,
}

/// Validated profiles plus the grammars their log rules refer to.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub profiles: Vec<PackageProfile>,
    pub grammars: BTreeMap<String, LogGrammar>,
}

impl ProfileSet {
    pub fn from_toml(text: &str) -> Result<ProfileSet, ScanError> {
        let file: ProfileFile = toml::from_str(text).map_err(|e| ScanError::ProfileSyntax(e.to_string()))?;
        ProfileSet::new(file.profile, &file.log_grammar)
    }

    pub fn new(profiles: Vec<PackageProfile>, grammars: &[LogGrammarDef]) -> Result<ProfileSet, ScanError> {
        let mut compiled = BTreeMap::new();
        for g in grammars {
            if compiled.insert(g.name.clone(), LogGrammar::compile(g)?).is_some() {
                return Err(ScanError::InvalidGrammar {
                    grammar: g.name.clone(),
                    reason: "defined twice".into(),
                });
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &profiles {
            p.validate()?;
            if !seen.insert(&p.package_name) {
                return Err(ScanError::InvalidProfile {
                    package: p.package_name.clone(),
                    reason: "defined twice".into(),
                });
            }
            for r in &p.artifact_rules {
                if let ContentRule::LogGrammar(name) = &r.content {
                    if !compiled.contains_key(name) {
                        return Err(ScanError::InvalidProfile {
                            package: p.package_name.clone(),
                            reason: format!("unknown log grammar {name:?}"),
                        });
                    }
                }
            }
        }
        Ok(ProfileSet {
            profiles,
            grammars: compiled,
        })
    }

    pub fn builtin() -> ProfileSet {
        ProfileSet::from_toml(BUILTIN_PROFILES).expect("built-in profiles load")
    }

    pub fn profile(&self, package_name: &str) -> Option<&PackageProfile> {
        self.profiles.iter().find(|p| p.package_name == package_name)
    }
}

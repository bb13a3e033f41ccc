//! Canonical data model for timestamps, subtitles, shot cuts, and cast
//! lists, plus the file loaders that gate everything entering the pipeline.
//!
//! All timestamps are exact integer milliseconds. Types are immutable after
//! construction and safe to share across threads; loaders are pure functions
//! of their input bytes.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::schema::{self, FieldTable, Loaded, SchemaMode};

/// Milliseconds from video start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeMs(pub u64);

impl TimeMs {
    pub fn as_u64(self) -> u64 {
        self.0
    }

    /// "mm:ss" rendering, flooring to whole seconds. Minutes are zero-padded
    /// to two digits and keep growing past 99 for very long timelines.
    pub fn as_mm_ss(self) -> String {
        let secs = self.0 / 1000;
        format!("{:02}:{:02}", secs / 60, secs % 60)
    }
}

impl fmt::Display for TimeMs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_mm_ss())
    }
}

/// Cluster label grouping all utterances of one speaker, rendered "C1",
/// "C2", ... Ordinals are positive and totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalSpeakerId(u32);

impl GlobalSpeakerId {
    pub fn new(ordinal: u32) -> Result<Self> {
        if ordinal == 0 {
            return Err(Error::Validation(
                "global speaker ordinal must be positive".into(),
            ));
        }
        Ok(GlobalSpeakerId(ordinal))
    }

    pub fn ordinal(self) -> u32 {
        self.0
    }

    pub fn parse(text: &str) -> Result<Self> {
        let digits = text.strip_prefix('C').ok_or_else(|| {
            Error::Validation(format!("global speaker id `{text}` must look like \"C1\""))
        })?;
        let ordinal: u32 = digits
            .parse()
            .map_err(|_| Error::Validation(format!("global speaker id `{text}` has a bad ordinal")))?;
        GlobalSpeakerId::new(ordinal)
    }
}

impl fmt::Display for GlobalSpeakerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

impl Serialize for GlobalSpeakerId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GlobalSpeakerId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        GlobalSpeakerId::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Final identity attached to a speaker: a cast name, or free text for
/// characters absent from the cast list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum ResolvedName {
    Cast(String),
    Descriptive(String),
}

impl ResolvedName {
    pub fn rendered(&self) -> &str {
        match self {
            ResolvedName::Cast(name) | ResolvedName::Descriptive(name) => name,
        }
    }
}

/// One time-stamped dialogue line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtitleLine {
    pub index: u32,
    #[serde(rename = "start_ms")]
    pub start: TimeMs,
    #[serde(rename = "end_ms")]
    pub end: TimeMs,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_id: Option<GlobalSpeakerId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_name: Option<ResolvedName>,
}

impl SubtitleLine {
    fn canonical_key(&self) -> (TimeMs, TimeMs, u32) {
        (self.start, self.end, self.index)
    }
}

/// A validated, canonically sorted subtitle track.
///
/// Lines are ordered by (start, end, index); indices are unique and agree
/// with that temporal order. Overlapping lines are permitted (cross-talk).
#[derive(Debug, Clone, PartialEq)]
pub struct SubtitleTrack {
    lines: Vec<SubtitleLine>,
    duration: TimeMs,
}

impl SubtitleTrack {
    pub fn new(mut lines: Vec<SubtitleLine>, duration: TimeMs) -> Result<Self> {
        for line in &lines {
            if line.index == 0 {
                return Err(Error::Validation(format!(
                    "subtitle line starting at {}ms: index must be positive",
                    line.start.0
                )));
            }
            if line.start >= line.end {
                return Err(Error::Validation(format!(
                    "subtitle line {}: start {}ms is not before end {}ms",
                    line.index, line.start.0, line.end.0
                )));
            }
            if line.end > duration {
                return Err(Error::Validation(format!(
                    "subtitle line {}: end {}ms exceeds duration {}ms",
                    line.index, line.end.0, duration.0
                )));
            }
        }
        lines.sort_by_key(SubtitleLine::canonical_key);
        for pair in lines.windows(2) {
            if pair[0].index == pair[1].index {
                return Err(Error::Validation(format!(
                    "duplicate subtitle index {}",
                    pair[0].index
                )));
            }
            if pair[0].index > pair[1].index {
                return Err(Error::Validation(format!(
                    "subtitle index {} precedes index {} but starts later; indices must follow temporal order",
                    pair[1].index, pair[0].index
                )));
            }
        }
        Ok(SubtitleTrack { lines, duration })
    }

    pub fn empty(duration: TimeMs) -> Self {
        SubtitleTrack {
            lines: Vec::new(),
            duration,
        }
    }

    pub fn lines(&self) -> &[SubtitleLine] {
        &self.lines
    }

    pub fn duration(&self) -> TimeMs {
        self.duration
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Lookup by subtitle index (indices are sorted, so this is a binary
    /// search).
    pub fn line(&self, index: u32) -> Option<&SubtitleLine> {
        self.lines
            .binary_search_by_key(&index, |l| l.index)
            .ok()
            .map(|i| &self.lines[i])
    }

    /// Rebuild the track with mapped lines; revalidates everything.
    pub fn map_lines(&self, f: impl FnMut(SubtitleLine) -> SubtitleLine) -> Result<SubtitleTrack> {
        let lines = self.lines.iter().cloned().map(f).collect();
        SubtitleTrack::new(lines, self.duration)
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        schema::to_pretty_bytes(&SubtitlesFile {
            duration_ms: Some(self.duration),
            lines: self.lines.clone(),
        })
    }
}

/// Shot-cut timestamps, strictly increasing and strictly inside
/// (0, duration).
#[derive(Debug, Clone, PartialEq)]
pub struct CutList {
    cuts: Vec<TimeMs>,
    duration: TimeMs,
}

impl CutList {
    /// Build from already-canonical cut positions.
    pub fn new(cuts: Vec<TimeMs>, duration: TimeMs) -> Result<Self> {
        for pair in cuts.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Validation(format!(
                    "cuts must be strictly increasing: {}ms then {}ms",
                    pair[0].0, pair[1].0
                )));
            }
        }
        for &cut in &cuts {
            if cut.0 == 0 || cut >= duration {
                return Err(Error::Validation(format!(
                    "cut {}ms is not strictly inside (0, {}ms)",
                    cut.0, duration.0
                )));
            }
        }
        Ok(CutList { cuts, duration })
    }

    /// Canonicalize raw cut timestamps: deduplicate, sort, drop boundary
    /// cuts (0 or duration) with a warning each. Cuts beyond the duration
    /// are errors.
    pub fn from_raw(raw: Vec<u64>, duration: TimeMs) -> Result<Loaded<Self>> {
        let mut warnings = Vec::new();
        let mut cuts: Vec<u64> = raw;
        cuts.sort_unstable();
        cuts.dedup();
        let mut kept = Vec::with_capacity(cuts.len());
        for cut in cuts {
            if cut > duration.0 {
                return Err(Error::Validation(format!(
                    "cut {}ms exceeds duration {}ms",
                    cut, duration.0
                )));
            }
            if cut == 0 || cut == duration.0 {
                warnings.push(format!("dropped boundary cut at {cut}ms"));
            } else {
                kept.push(TimeMs(cut));
            }
        }
        Ok(Loaded {
            value: CutList {
                cuts: kept,
                duration,
            },
            warnings,
        })
    }

    pub fn cuts(&self) -> &[TimeMs] {
        &self.cuts
    }

    pub fn duration(&self) -> TimeMs {
        self.duration
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        schema::to_pretty_bytes(&CutsFile {
            duration_ms: self.duration,
            cuts_ms: self.cuts.iter().map(|c| c.0).collect(),
        })
    }
}

/// Reserved candidate for speakers absent from the cast list. Cast files may
/// not use it as a character name.
pub const OTHERS_NAME: &str = "Others";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastMember {
    pub name: String,
    #[serde(rename = "photo")]
    pub photo_ref: String,
}

/// Cast of a video: unique character names with photo references.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CastList {
    members: Vec<CastMember>,
}

impl CastList {
    pub fn new(members: Vec<CastMember>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for member in &members {
            if member.name.is_empty() {
                return Err(Error::Validation("cast member with empty name".into()));
            }
            if member.name == OTHERS_NAME {
                return Err(Error::Validation(format!(
                    "cast name `{OTHERS_NAME}` is reserved"
                )));
            }
            if !seen.insert(member.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate cast name `{}`",
                    member.name
                )));
            }
        }
        Ok(CastList { members })
    }

    pub fn members(&self) -> &[CastMember] {
        &self.members
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|m| m.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.members.iter().any(|m| m.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        schema::to_pretty_bytes(&CastFile {
            members: self.members.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// File schemas
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SubtitlesFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration_ms: Option<TimeMs>,
    #[serde(default)]
    lines: Vec<SubtitleLine>,
}

const SUBTITLES_FIELDS: FieldTable = FieldTable(&[
    ("", &["duration_ms", "lines"]),
    (
        "lines[]",
        &[
            "index",
            "start_ms",
            "end_ms",
            "text",
            "global_id",
            "resolved_name",
        ],
    ),
    ("lines[].resolved_name", &["kind", "name"]),
]);

#[derive(Serialize, Deserialize)]
struct CutsFile {
    duration_ms: TimeMs,
    #[serde(default)]
    cuts_ms: Vec<u64>,
}

const CUTS_FIELDS: FieldTable = FieldTable(&[("", &["duration_ms", "cuts_ms"])]);

#[derive(Serialize, Deserialize)]
struct CastFile {
    #[serde(default)]
    members: Vec<CastMember>,
}

const CAST_FIELDS: FieldTable = FieldTable(&[("", &["members"]), ("members[]", &["name", "photo"])]);

/// Load and validate a subtitles file. Lines are re-sorted canonically; the
/// duration comes from the file or, when absent, from the latest line end.
pub fn load_subtitles(bytes: &[u8], mode: SchemaMode) -> Result<Loaded<SubtitleTrack>> {
    let mut warnings = Vec::new();
    let file: SubtitlesFile = schema::load_checked(bytes, &SUBTITLES_FIELDS, mode, &mut warnings)?;
    let duration = file
        .duration_ms
        .unwrap_or_else(|| TimeMs(file.lines.iter().map(|l| l.end.0).max().unwrap_or(0)));
    let track = SubtitleTrack::new(file.lines, duration)?;
    Ok(Loaded {
        value: track,
        warnings,
    })
}

/// Load and canonicalize a cuts file.
pub fn load_cuts(bytes: &[u8], mode: SchemaMode) -> Result<Loaded<CutList>> {
    let mut warnings = Vec::new();
    let file: CutsFile = schema::load_checked(bytes, &CUTS_FIELDS, mode, &mut warnings)?;
    let loaded = CutList::from_raw(file.cuts_ms, file.duration_ms)?;
    warnings.extend(loaded.warnings);
    Ok(Loaded {
        value: loaded.value,
        warnings,
    })
}

/// Load and validate a cast file.
pub fn load_cast(bytes: &[u8], mode: SchemaMode) -> Result<Loaded<CastList>> {
    let mut warnings = Vec::new();
    let file: CastFile = schema::load_checked(bytes, &CAST_FIELDS, mode, &mut warnings)?;
    let cast = CastList::new(file.members)?;
    Ok(Loaded {
        value: cast,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(index: u32, start: u64, end: u64, text: &str) -> SubtitleLine {
        SubtitleLine {
            index,
            start: TimeMs(start),
            end: TimeMs(end),
            text: text.to_string(),
            global_id: None,
            resolved_name: None,
        }
    }

    #[test]
    fn loads_two_sorted_lines() {
        let bytes = br#"{
            "duration_ms": 5000,
            "lines": [
                {"index": 2, "start_ms": 3000, "end_ms": 4000, "text": "yo"},
                {"index": 1, "start_ms": 1000, "end_ms": 2000, "text": "hi"}
            ]
        }"#;
        let track = load_subtitles(bytes, SchemaMode::Strict).unwrap().value;
        assert_eq!(track.lines().len(), 2);
        assert_eq!(track.lines()[0].text, "hi");
        assert_eq!(track.duration(), TimeMs(5000));
    }

    #[test]
    fn empty_track_is_valid() {
        let bytes = br#"{"duration_ms": 1000, "lines": []}"#;
        let track = load_subtitles(bytes, SchemaMode::Strict).unwrap().value;
        assert!(track.is_empty());
        assert_eq!(track.duration(), TimeMs(1000));
    }

    #[test]
    fn zero_length_line_rejected() {
        let err = SubtitleTrack::new(vec![line(1, 2000, 2000, "x")], TimeMs(5000)).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn duplicate_index_rejected() {
        let err = SubtitleTrack::new(
            vec![line(1, 0, 10, "a"), line(1, 20, 30, "b")],
            TimeMs(100),
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate subtitle index 1"));
    }

    #[test]
    fn index_order_must_match_time_order() {
        let err = SubtitleTrack::new(
            vec![line(2, 0, 10, "a"), line(1, 20, 30, "b")],
            TimeMs(100),
        )
        .unwrap_err();
        assert!(err.to_string().contains("temporal order"), "{err}");
    }

    #[test]
    fn line_past_duration_rejected() {
        let err = SubtitleTrack::new(vec![line(1, 0, 200, "a")], TimeMs(100)).unwrap_err();
        assert!(err.to_string().contains("exceeds duration"));
    }

    #[test]
    fn overlapping_lines_allowed() {
        let track = SubtitleTrack::new(
            vec![line(1, 0, 50, "a"), line(2, 10, 30, "b")],
            TimeMs(100),
        )
        .unwrap();
        assert_eq!(track.lines().len(), 2);
    }

    #[test]
    fn subtitles_round_trip_is_canonical() {
        let bytes = br#"{
            "duration_ms": 100,
            "lines": [
                {"index": 2, "start_ms": 20, "end_ms": 30, "text": "b", "global_id": "C2"},
                {"index": 1, "start_ms": 0, "end_ms": 10, "text": "a",
                 "resolved_name": {"kind": "descriptive", "name": "a clerk"}}
            ]
        }"#;
        let first = load_subtitles(bytes, SchemaMode::Strict).unwrap().value;
        let rendered = first.to_json_bytes();
        let second = load_subtitles(&rendered, SchemaMode::Strict).unwrap().value;
        assert_eq!(first, second);
        assert_eq!(rendered, second.to_json_bytes());
    }

    #[test]
    fn cuts_dedup_and_sort() {
        let bytes = br#"{"duration_ms": 10000, "cuts_ms": [5000, 5000, 1000]}"#;
        let loaded = load_cuts(bytes, SchemaMode::Strict).unwrap();
        assert_eq!(loaded.value.cuts(), &[TimeMs(1000), TimeMs(5000)]);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn boundary_cuts_dropped_with_warnings() {
        let bytes = br#"{"duration_ms": 10000, "cuts_ms": [0, 10000]}"#;
        let loaded = load_cuts(bytes, SchemaMode::Strict).unwrap();
        assert!(loaded.value.cuts().is_empty());
        assert_eq!(loaded.warnings.len(), 2);
    }

    #[test]
    fn cut_past_duration_rejected() {
        let bytes = br#"{"duration_ms": 10000, "cuts_ms": [12000]}"#;
        let err = load_cuts(bytes, SchemaMode::Strict).unwrap_err();
        assert!(err.to_string().contains("12000ms exceeds duration"));
    }

    #[test]
    fn cast_loads_members() {
        let bytes = br#"{"members": [
            {"name": "Jiang Feng", "photo": "jf.png"},
            {"name": "Hui Lan", "photo": "hl.png"}
        ]}"#;
        let cast = load_cast(bytes, SchemaMode::Strict).unwrap().value;
        assert_eq!(cast.members().len(), 2);
        assert!(cast.contains("Jiang Feng"));
    }

    #[test]
    fn empty_cast_is_valid() {
        let cast = load_cast(br#"{"members": []}"#, SchemaMode::Strict)
            .unwrap()
            .value;
        assert!(cast.is_empty());
    }

    #[test]
    fn reserved_cast_name_rejected() {
        let bytes = br#"{"members": [{"name": "Others", "photo": "x.png"}]}"#;
        let err = load_cast(bytes, SchemaMode::Strict).unwrap_err();
        assert!(err.to_string().contains("reserved"));
    }

    #[test]
    fn duplicate_cast_name_rejected() {
        let bytes = br#"{"members": [
            {"name": "Ava", "photo": "a.png"},
            {"name": "Ava", "photo": "b.png"}
        ]}"#;
        let err = load_cast(bytes, SchemaMode::Strict).unwrap_err();
        assert!(err.to_string().contains("duplicate cast name `Ava`"));
    }

    #[test]
    fn speaker_id_round_trips() {
        let id = GlobalSpeakerId::new(12).unwrap();
        assert_eq!(id.to_string(), "C12");
        assert_eq!(GlobalSpeakerId::parse("C12").unwrap(), id);
        assert!(GlobalSpeakerId::parse("12").is_err());
        assert!(GlobalSpeakerId::parse("C0").is_err());
    }

    #[test]
    fn mm_ss_rendering_floors() {
        assert_eq!(TimeMs(0).as_mm_ss(), "00:00");
        assert_eq!(TimeMs(71000).as_mm_ss(), "01:11");
        assert_eq!(TimeMs(71999).as_mm_ss(), "01:11");
        assert_eq!(TimeMs(6_000_000).as_mm_ss(), "100:00");
    }
}

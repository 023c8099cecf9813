//! CSV table formats, stage access checks and atomic file writes.

use std::fmt::Display;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use csv::StringRecord;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::deployment::{DelayCondition, ExpectedLabel, QuestionRecord};
use crate::detect::DetectionOutcome;
use crate::error::{Error, Result};
use crate::features::{FeatureRow, FEATURE_NAMES, N_FEATURES};
use crate::learner::{LearnerStatus, SessionClassification};
use crate::model::{CoherenceComponents, RiskState};
use crate::priors::BehaviorSample;
use crate::simulate::{HiddenLabelRecord, VideoInteractionRecord};
use crate::splits::{SplitKind, SplitSpec};

const DIGEST_PREFIX: &str = "# digest: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableKind {
    Interactions,
    HiddenLabels,
    DeploymentQuestions,
    ExpectedLabels,
    Features,
    Detections,
    SplitSpec,
    Classifications,
}

impl TableKind {
    pub const ALL: [TableKind; 8] = [
        TableKind::Interactions,
        TableKind::HiddenLabels,
        TableKind::DeploymentQuestions,
        TableKind::ExpectedLabels,
        TableKind::Features,
        TableKind::Detections,
        TableKind::SplitSpec,
        TableKind::Classifications,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Interactions => "interactions",
            TableKind::HiddenLabels => "hidden-labels",
            TableKind::DeploymentQuestions => "deployment-questions",
            TableKind::ExpectedLabels => "expected-labels",
            TableKind::Features => "features",
            TableKind::Detections => "detections",
            TableKind::SplitSpec => "split-spec",
            TableKind::Classifications => "classifications",
        }
    }

    pub fn header(self) -> Vec<&'static str> {
        match self {
            TableKind::Interactions => INTERACTION_COLUMNS.to_vec(),
            TableKind::HiddenLabels => vec!["user_id", "day", "state"],
            TableKind::DeploymentQuestions => QUESTION_COLUMNS.to_vec(),
            TableKind::ExpectedLabels => vec!["session_id", "learner_id", "expected_status"],
            TableKind::Features => {
                let mut h = vec!["user_id", "day"];
                h.extend(FEATURE_NAMES);
                h
            }
            TableKind::Detections => vec![
                "user_id",
                "onset_day",
                "detection_day",
                "threshold",
                "first_alarm_day",
                "delay_sessions",
                "ttd",
            ],
            TableKind::SplitSpec => vec!["entry", "user_id", "day", "name", "value"],
            TableKind::Classifications => vec!["session_id", "predicted_status", "expected_status", "rule_index"],
        }
    }
}

impl Display for TableKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown table kind `{s}`")))
    }
}

pub const INTERACTION_COLUMNS: [&str; 25] = [
    "user_id",
    "day",
    "video_index",
    "category",
    "video_title",
    "video_length_s",
    "summary_text",
    "accuracy",
    "latency_s",
    "skip_rate",
    "consistency",
    "coherence",
    "drift",
    "watch_s",
    "skip_s",
    "pause_count",
    "replay_count",
    "reaction_s",
    "like_pct",
    "share_pct",
    "churn_pct",
    "logins_per_day",
    "liked",
    "shared",
    "provenance",
];

pub const QUESTION_COLUMNS: [&str; 14] = [
    "learner_id",
    "session_id",
    "video_topic",
    "question_type",
    "question_difficulty",
    "delay_condition",
    "answer_correct",
    "response_time_seconds",
    "video_completion_rate",
    "pause_count",
    "replay_count",
    "skip_count",
    "missed_question",
    "attention_noise_level",
];

/// Pipeline stages, for file-kind access checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Simulate,
    Perturb,
    Split,
    Features,
    TrainProbe,
    Detect,
    GenDeployment,
    Classify,
    Evaluate,
    Report,
    ExportSchema,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Perturb => "perturb",
            Stage::Split => "split",
            Stage::Features => "features",
            Stage::TrainProbe => "train-probe",
            Stage::Detect => "detect",
            Stage::GenDeployment => "gen-deployment",
            Stage::Classify => "classify",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
            Stage::ExportSchema => "export-schema",
        }
    }

    /// Hidden labels are readable by evaluation, probe training and the
    /// detector's onset lookup only.
    pub fn can_read(self, kind: TableKind) -> bool {
        match kind {
            TableKind::HiddenLabels => matches!(self, Stage::Evaluate | Stage::TrainProbe | Stage::Detect),
            _ => true,
        }
    }

    pub fn check(self, kind: TableKind) -> Result<()> {
        if self.can_read(kind) {
            Ok(())
        } else {
            Err(Error::AccessDenied { stage: self.name().into(), kind: kind.name().into() })
        }
    }
}

/// Nine significant digits, printed in shortest form.
pub fn fmt_f64(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    let s = rounded.to_string();
    if s == "-0" { "0".into() } else { s }
}

/// Round to nine significant digits, as a write/read cycle would.
pub fn quantize(v: f64) -> f64 {
    fmt_f64(v).parse().expect("formatted float parses")
}

fn fmt_opt<T: Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Field accessor that reports the line and column of any parse failure.
pub struct Fields<'a> {
    path: &'a Path,
    line: usize,
    header: &'a [&'static str],
    rec: &'a StringRecord,
}

impl Fields<'_> {
    fn err(&self, i: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            row: self.line,
            column: self.header[i].to_string(),
            message: message.into(),
        }
    }

    pub fn str(&self, i: usize) -> &str {
        &self.rec[i]
    }

    pub fn parse<T>(&self, i: usize) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.rec[i].parse().map_err(|e: T::Err| self.err(i, format!("cannot parse `{}`: {e}", &self.rec[i])))
    }

    pub fn opt<T>(&self, i: usize) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if self.rec[i].is_empty() {
            Ok(None)
        } else {
            self.parse(i).map(Some)
        }
    }

    pub fn f64(&self, i: usize) -> Result<f64> {
        let v: f64 = self.parse(i)?;
        if v.is_nan() {
            return Err(self.err(i, "NaN is not allowed"));
        }
        Ok(v)
    }
}

/// A row type with a fixed column layout.
pub trait TableRow: Sized {
    const KIND: TableKind;
    fn to_fields(&self) -> Vec<String>;
    fn from_fields(f: &Fields<'_>) -> Result<Self>;
}

impl TableRow for VideoInteractionRecord {
    const KIND: TableKind = TableKind::Interactions;

    fn to_fields(&self) -> Vec<String> {
        let c = &self.components;
        let b = &self.behavior;
        vec![
            self.user_id.to_string(),
            self.day.to_string(),
            self.video_index.to_string(),
            self.category.clone(),
            self.video_title.clone(),
            fmt_f64(self.video_length_s),
            self.summary_text.clone(),
            fmt_f64(c.accuracy),
            fmt_f64(c.latency_s),
            fmt_f64(c.skip_rate),
            fmt_f64(c.consistency),
            fmt_f64(self.coherence),
            fmt_f64(self.drift),
            fmt_f64(b.watch_s),
            fmt_f64(b.skip_s),
            b.pause_count.to_string(),
            b.replay_count.to_string(),
            fmt_f64(b.reaction_s),
            fmt_f64(b.like_pct),
            fmt_f64(b.share_pct),
            fmt_f64(b.churn_pct),
            fmt_f64(b.logins_per_day),
            self.liked.to_string(),
            self.shared.to_string(),
            self.provenance.clone(),
        ]
    }

    fn from_fields(f: &Fields<'_>) -> Result<Self> {
        Ok(Self {
            user_id: f.parse(0)?,
            day: f.parse(1)?,
            video_index: f.parse(2)?,
            category: f.str(3).into(),
            video_title: f.str(4).into(),
            video_length_s: f.f64(5)?,
            summary_text: f.str(6).into(),
            components: CoherenceComponents {
                accuracy: f.f64(7)?,
                latency_s: f.f64(8)?,
                skip_rate: f.f64(9)?,
                consistency: f.f64(10)?,
            },
            coherence: f.f64(11)?,
            drift: f.f64(12)?,
            behavior: BehaviorSample {
                watch_s: f.f64(13)?,
                skip_s: f.f64(14)?,
                pause_count: f.parse(15)?,
                replay_count: f.parse(16)?,
                reaction_s: f.f64(17)?,
                like_pct: f.f64(18)?,
                share_pct: f.f64(19)?,
                churn_pct: f.f64(20)?,
                logins_per_day: f.f64(21)?,
            },
            liked: f.parse(22)?,
            shared: f.parse(23)?,
            provenance: f.str(24).into(),
        })
    }
}

impl TableRow for HiddenLabelRecord {
    const KIND: TableKind = TableKind::HiddenLabels;

    fn to_fields(&self) -> Vec<String> {
        vec![self.user_id.to_string(), self.day.to_string(), self.state.name().into()]
    }

    fn from_fields(f: &Fields<'_>) -> Result<Self> {
        Ok(Self { user_id: f.parse(0)?, day: f.parse(1)?, state: f.parse::<RiskState>(2)? })
    }
}

impl TableRow for QuestionRecord {
    const KIND: TableKind = TableKind::DeploymentQuestions;

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.learner_id.to_string(),
            self.session_id.to_string(),
            self.video_topic.clone(),
            self.question_type.clone(),
            self.question_difficulty.clone(),
            self.delay_condition.name().into(),
            fmt_opt(self.answer_correct),
            fmt_f64(self.response_time_seconds),
            fmt_f64(self.video_completion_rate),
            self.pause_count.to_string(),
            self.replay_count.to_string(),
            self.skip_count.to_string(),
            self.missed_question.to_string(),
            fmt_f64(self.attention_noise_level),
        ]
    }

    fn from_fields(f: &Fields<'_>) -> Result<Self> {
        let r = Self {
            learner_id: f.parse(0)?,
            session_id: f.parse(1)?,
            video_topic: f.str(2).into(),
            question_type: f.str(3).into(),
            question_difficulty: f.str(4).into(),
            delay_condition: f.parse::<DelayCondition>(5)?,
            answer_correct: f.opt(6)?,
            response_time_seconds: f.f64(7)?,
            video_completion_rate: f.f64(8)?,
            pause_count: f.parse(9)?,
            replay_count: f.parse(10)?,
            skip_count: f.parse(11)?,
            missed_question: f.parse(12)?,
            attention_noise_level: f.f64(13)?,
        };
        if r.missed_question && r.answer_correct.is_some() {
            return Err(f.err(6, "a missed question cannot have an answer"));
        }
        if !(r.response_time_seconds > 0.0) {
            return Err(f.err(7, "response time must be > 0"));
        }
        Ok(r)
    }
}

impl TableRow for ExpectedLabel {
    const KIND: TableKind = TableKind::ExpectedLabels;

    fn to_fields(&self) -> Vec<String> {
        vec![self.session_id.to_string(), self.learner_id.to_string(), self.expected_status.name().into()]
    }

    fn from_fields(f: &Fields<'_>) -> Result<Self> {
        Ok(Self { session_id: f.parse(0)?, learner_id: f.parse(1)?, expected_status: f.parse::<LearnerStatus>(2)? })
    }
}

impl TableRow for FeatureRow {
    const KIND: TableKind = TableKind::Features;

    fn to_fields(&self) -> Vec<String> {
        let mut out = vec![self.user_id.to_string(), self.day.to_string()];
        out.extend(self.values.iter().map(|v| fmt_f64(*v)));
        out
    }

    fn from_fields(f: &Fields<'_>) -> Result<Self> {
        let mut values = [0.0; N_FEATURES];
        for (k, v) in values.iter_mut().enumerate() {
            *v = f.f64(k + 2)?;
        }
        Ok(Self { user_id: f.parse(0)?, day: f.parse(1)?, values })
    }
}

impl TableRow for DetectionOutcome {
    const KIND: TableKind = TableKind::Detections;

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.user_id.to_string(),
            fmt_opt(self.onset_day),
            fmt_opt(self.detection_day),
            fmt_f64(self.threshold),
            fmt_opt(self.first_alarm_day),
            fmt_opt(self.delay_sessions),
            fmt_opt(self.ttd()),
        ]
    }

    fn from_fields(f: &Fields<'_>) -> Result<Self> {
        let o = Self {
            user_id: f.parse(0)?,
            onset_day: f.opt(1)?,
            detection_day: f.opt(2)?,
            threshold: f.f64(3)?,
            first_alarm_day: f.opt(4)?,
            delay_sessions: f.opt(5)?,
        };
        if f.opt::<u32>(6)? != o.ttd() {
            return Err(f.err(6, "ttd disagrees with onset_day and detection_day"));
        }
        Ok(o)
    }
}

impl TableRow for SessionClassification {
    const KIND: TableKind = TableKind::Classifications;

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.session_id.to_string(),
            self.predicted_status.name().into(),
            self.expected_status.name().into(),
            self.rule_index.to_string(),
        ]
    }

    fn from_fields(f: &Fields<'_>) -> Result<Self> {
        Ok(Self {
            session_id: f.parse(0)?,
            predicted_status: f.parse::<LearnerStatus>(1)?,
            expected_status: f.parse::<LearnerStatus>(2)?,
            rule_index: f.parse(3)?,
        })
    }
}

fn csv_bytes(kind: TableKind, digest: &str, rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut buf = format!("{DIGEST_PREFIX}{digest}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(kind.header())?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(|e| Error::io("<buffer>", e))?;
    }
    Ok(buf)
}

/// The CSV form of `rows`, with the digest header line.
pub fn to_csv<T: TableRow>(digest: &str, rows: &[T]) -> Result<Vec<u8>> {
    csv_bytes(T::KIND, digest, rows.iter().map(TableRow::to_fields))
}

/// Write `bytes` to a temporary file beside `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644)).map_err(|e| Error::io(tmp.path(), e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_table<T: TableRow>(path: &Path, digest: &str, rows: &[T]) -> Result<()> {
    write_atomic(path, &to_csv(digest, rows)?)
}

/// A parsed table and the digest from its header line.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    pub digest: Option<String>,
    pub rows: Vec<T>,
}

fn parse_digest(bytes: &[u8]) -> Option<String> {
    let first = bytes.split(|b| *b == b'\n').next()?;
    let line = std::str::from_utf8(first).ok()?;
    line.strip_prefix(DIGEST_PREFIX).map(|d| d.trim().to_string())
}

/// Digest recorded in a file's header line, if any.
pub fn read_digest(path: &Path) -> Result<Option<String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_digest(&bytes))
}

fn parse_records<R>(path: &Path, kind: TableKind, bytes: &[u8], mut row: R) -> Result<()>
where
    R: FnMut(&Fields<'_>) -> Result<()>,
{
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(bytes);
    let header = kind.header();
    let found = reader.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Columns {
            path: path.to_path_buf(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rec = StringRecord::new();
    while reader.read_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: line,
                column: header.get(rec.len()).unwrap_or(&"<extra>").to_string(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        row(&Fields { path, line, header: &header, rec: &rec })?;
    }
    Ok(())
}

/// Parse CSV bytes into rows; `path` is used in error messages.
pub fn from_csv<T: TableRow>(path: &Path, bytes: &[u8]) -> Result<Table<T>> {
    let mut rows = Vec::new();
    parse_records(path, T::KIND, bytes, |f| {
        rows.push(T::from_fields(f)?);
        Ok(())
    })?;
    Ok(Table { digest: parse_digest(bytes), rows })
}

/// Read a table after checking that `stage` may read its kind.
pub fn read_table<T: TableRow>(path: &Path, stage: Stage) -> Result<Table<T>> {
    stage.check(T::KIND)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if let Some(kind) = sniff_kind(&bytes) {
        stage.check(kind)?;
    }
    from_csv(path, &bytes)
}

/// Table kind named by the first non-comment line, if it is a known header.
pub fn sniff_kind(bytes: &[u8]) -> Option<TableKind> {
    let text = std::str::from_utf8(bytes).ok()?;
    let line = text.lines().find(|l| !l.starts_with('#'))?;
    let cols: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
    TableKind::ALL.into_iter().find(|k| k.header() == cols)
}

fn split_rows(spec: &SplitSpec) -> Vec<Vec<String>> {
    let param = |name: &str, value: String| vec!["param".into(), String::new(), String::new(), name.into(), value];
    let mut out = vec![param("kind", spec.kind.name().into()), param("seed", spec.seed.to_string())];
    for (name, v) in [("train_sigma", spec.train_sigma), ("test_sigma", spec.test_sigma), ("dropout_p", spec.dropout_p)] {
        if let Some(v) = v {
            out.push(param(name, fmt_f64(v)));
        }
    }
    if let Some(w) = spec.min_window_days {
        out.push(param("min_window_days", w.to_string()));
    }
    for p in &spec.held_out_profiles {
        out.push(param("held_out_profile", p.clone()));
    }
    let user = |entry: &str, u: u32| vec![entry.into(), u.to_string(), String::new(), String::new(), String::new()];
    out.extend(spec.train_user_ids.iter().map(|&u| user("train", u)));
    out.extend(spec.test_user_ids.iter().map(|&u| user("test", u)));
    out.extend(
        spec.dropped
            .iter()
            .map(|&(u, d)| vec!["dropped".into(), u.to_string(), d.to_string(), String::new(), String::new()]),
    );
    out
}

pub fn split_to_csv(digest: &str, spec: &SplitSpec) -> Result<Vec<u8>> {
    csv_bytes(TableKind::SplitSpec, digest, split_rows(spec).into_iter())
}

pub fn write_split(path: &Path, digest: &str, spec: &SplitSpec) -> Result<()> {
    write_atomic(path, &split_to_csv(digest, spec)?)
}

pub fn split_from_csv(path: &Path, bytes: &[u8]) -> Result<Table<SplitSpec>> {
    let mut kind = None;
    let mut seed = None;
    let mut spec = SplitSpec {
        kind: SplitKind::Default,
        seed: 0,
        train_user_ids: Vec::new(),
        test_user_ids: Vec::new(),
        train_sigma: None,
        test_sigma: None,
        dropout_p: None,
        min_window_days: None,
        held_out_profiles: Vec::new(),
        dropped: Vec::new(),
    };
    parse_records(path, TableKind::SplitSpec, bytes, |f| {
        match f.str(0) {
            "param" => match f.str(3) {
                "kind" => kind = Some(f.parse::<SplitKind>(4)?),
                "seed" => seed = Some(f.parse::<u64>(4)?),
                "train_sigma" => spec.train_sigma = Some(f.f64(4)?),
                "test_sigma" => spec.test_sigma = Some(f.f64(4)?),
                "dropout_p" => spec.dropout_p = Some(f.f64(4)?),
                "min_window_days" => spec.min_window_days = Some(f.parse(4)?),
                "held_out_profile" => spec.held_out_profiles.push(f.str(4).into()),
                other => return Err(f.err(3, format!("unknown parameter `{other}`"))),
            },
            "train" => spec.train_user_ids.push(f.parse(1)?),
            "test" => spec.test_user_ids.push(f.parse(1)?),
            "dropped" => spec.dropped.push((f.parse(1)?, f.parse(2)?)),
            other => return Err(f.err(0, format!("unknown entry `{other}`"))),
        }
        Ok(())
    })?;
    let missing = |what: &str| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        column: "name".into(),
        message: format!("missing `{what}` parameter"),
    };
    spec.kind = kind.ok_or_else(|| missing("kind"))?;
    spec.seed = seed.ok_or_else(|| missing("seed"))?;
    spec.validate()?;
    Ok(Table { digest: parse_digest(bytes), rows: vec![spec] })
}

pub fn read_split(path: &Path, stage: Stage) -> Result<SplitSpec> {
    stage.check(TableKind::SplitSpec)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(split_from_csv(path, &bytes)?.rows.remove(0))
}

#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    digest: String,
    #[serde(flatten)]
    value: T,
}

/// Pretty JSON with the digest as its first field.
pub fn write_json<T: Serialize>(path: &Path, digest: &str, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(&Stamped { digest: digest.into(), value })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(String, T)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let s: Stamped<T> = serde_json::from_slice(&bytes)?;
    Ok((s.digest, s.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deployment::{generate_deployment, default_profiles, DeploymentConfig};
    use crate::features::build_features;
    use crate::priors::Priors;
    use crate::simulate::{simulate_cohort, CohortConfig, TemplateGenerator};

    fn p() -> &'static Path {
        Path::new("mem.csv")
    }

    fn round_trip<T: TableRow + Clone + PartialEq + std::fmt::Debug>(rows: &[T]) {
        let bytes = to_csv("abc", rows).unwrap();
        let back = from_csv::<T>(p(), &bytes).unwrap();
        assert_eq!(back.digest.as_deref(), Some("abc"));
        assert_eq!(back.rows.len(), rows.len());
        assert_eq!(to_csv("abc", &back.rows).unwrap(), bytes);
        let again = from_csv::<T>(p(), &to_csv("abc", &back.rows).unwrap()).unwrap();
        assert_eq!(again.rows, back.rows);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_f64(0.123_456_789_123), "0.123456789");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(123_456_789_012.0), "123456789000");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(quantize(quantize(0.987_654_321_987)), quantize(0.987_654_321_987));
    }

    #[test]
    fn tables_round_trip() {
        let cfg = CohortConfig { n_users: 5, horizon_days: 40, ..Default::default() };
        let cohort = simulate_cohort(&cfg, &Priors::default(), &TemplateGenerator).unwrap();
        assert_eq!(cohort.interactions.len(), 1000);
        round_trip(&cohort.interactions);
        round_trip(&cohort.labels);
        round_trip(&build_features(&cohort.interactions, 3).unwrap());
        let dep = generate_deployment(&DeploymentConfig::default(), &default_profiles()).unwrap();
        round_trip(&dep.questions);
        round_trip(&dep.expected);
    }

    #[test]
    fn exact_values_round_trip_identically() {
        let rows = vec![
            DetectionOutcome {
                user_id: 3,
                onset_day: Some(50),
                detection_day: Some(57),
                threshold: 0.65,
                first_alarm_day: Some(12),
                delay_sessions: Some(7),
            },
            DetectionOutcome {
                user_id: 4,
                onset_day: None,
                detection_day: None,
                threshold: 0.65,
                first_alarm_day: None,
                delay_sessions: None,
            },
        ];
        let back = from_csv::<DetectionOutcome>(p(), &to_csv("d", &rows).unwrap()).unwrap();
        assert_eq!(back.rows, rows);
        let text = String::from_utf8(to_csv("d", &rows).unwrap()).unwrap();
        assert!(text.contains("3,50,57,0.65,12,7,7\n"));
        assert!(text.contains("4,,,0.65,,,\n"));
    }

    #[test]
    fn deployment_header_order() {
        let dep = generate_deployment(&DeploymentConfig::default(), &default_profiles()).unwrap();
        let text = String::from_utf8(to_csv("x", &dep.questions[..1]).unwrap()).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "learner_id,session_id,video_topic,question_type,question_difficulty,delay_condition,answer_correct,\
             response_time_seconds,video_completion_rate,pause_count,replay_count,skip_count,missed_question,\
             attention_noise_level"
        );
    }

    #[test]
    fn labels_live_apart_from_interactions() {
        let inter = TableKind::Interactions.header();
        for col in TableKind::HiddenLabels.header() {
            assert!(col == "user_id" || col == "day" || !inter.contains(&col));
        }
        assert!(!inter.contains(&"state"));
    }

    #[test]
    fn errors_name_row_and_column() {
        let labels = vec![HiddenLabelRecord { user_id: 0, day: 0, state: RiskState::Healthy }; 3];
        let text = String::from_utf8(to_csv("x", &labels).unwrap()).unwrap().replacen("0,0,Healthy\n0,0,Healthy", "0,0,Healthy\n0,zero,Healthy", 1);
        match from_csv::<HiddenLabelRecord>(p(), text.as_bytes()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 4);
                assert_eq!(column, "day");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = "user_id,day,label\n0,0,Healthy\n";
        assert!(matches!(from_csv::<HiddenLabelRecord>(p(), bad.as_bytes()), Err(Error::Columns { .. })));
        let short = "user_id,day,state\n0,0\n";
        match from_csv::<HiddenLabelRecord>(p(), short.as_bytes()) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "state")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hidden_labels_access() {
        assert!(Stage::Evaluate.can_read(TableKind::HiddenLabels));
        assert!(Stage::TrainProbe.can_read(TableKind::HiddenLabels));
        assert!(Stage::Detect.can_read(TableKind::HiddenLabels));
        for s in [Stage::Simulate, Stage::Perturb, Stage::Split, Stage::Features, Stage::Classify, Stage::Report] {
            assert!(matches!(s.check(TableKind::HiddenLabels), Err(Error::AccessDenied { .. })));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        write_table(&path, "x", &[HiddenLabelRecord { user_id: 1, day: 2, state: RiskState::Mci }]).unwrap();
        assert!(read_table::<HiddenLabelRecord>(&path, Stage::Features).is_err());
        assert!(matches!(
            read_table::<VideoInteractionRecord>(&path, Stage::Features),
            Err(Error::AccessDenied { .. })
        ));
        assert_eq!(read_table::<HiddenLabelRecord>(&path, Stage::Detect).unwrap().rows[0].state, RiskState::Mci);
    }

    #[test]
    fn split_spec_round_trip() {
        let spec = SplitSpec {
            kind: SplitKind::SparseObservation,
            seed: 9,
            train_user_ids: vec![0, 2],
            test_user_ids: vec![1, 3],
            train_sigma: None,
            test_sigma: None,
            dropout_p: Some(0.3),
            min_window_days: None,
            held_out_profiles: vec![],
            dropped: vec![(1, 4), (3, 0)],
        };
        let bytes = split_to_csv("s", &spec).unwrap();
        let back = split_from_csv(p(), &bytes).unwrap();
        assert_eq!(back.rows[0], spec);
        assert_eq!(back.digest.as_deref(), Some("s"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("f.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}

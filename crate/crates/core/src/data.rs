//! Dataset ingestion: GAP TSV rows, personal-name annotations and model
//! predictions, plus the derived name-count and candidate-rank property sets.
//!
//! All character offsets are counted in Unicode scalar values, matching the
//! offsets of the public GAP release.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column header of the public GAP release.
pub const GAP_HEADER: [&str; 11] = [
    "ID",
    "Text",
    "Pronoun",
    "Pronoun-offset",
    "A",
    "A-offset",
    "A-coref",
    "B",
    "B-offset",
    "B-coref",
    "URL",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("line {line}: {message}")]
    MalformedAnnotation { line: usize, message: String },
    #[error("annotation for unknown example id `{0}`")]
    UnknownId(String),
    #[error("duplicate record for example id `{0}`")]
    DuplicateId(String),
    #[error("example `{id}`: span [{start}, {end}) is out of bounds for text of length {len}")]
    SpanOutOfBounds {
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("example `{id}`: spans [{a_start}, {a_end}) and [{b_start}, {b_end}) overlap")]
    OverlappingSpans {
        id: String,
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },
    #[error("no name annotation for example `{0}`")]
    MissingAnnotation(String),
    #[error("example `{0}`: coreferent candidate matches no annotated name span")]
    UnmatchedCandidate(String),
    #[error("prediction line {line}: {message}")]
    MalformedPrediction { line: usize, message: String },
}

/// The two compared groups. In GAP the group is the grammatical gender of
/// the pronoun; masculine plays the role of group A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Masculine,
    Feminine,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Masculine, Group::Feminine];

    /// Case-insensitive pronoun lookup.
    pub fn from_pronoun(pronoun: &str) -> Option<Group> {
        match pronoun.to_lowercase().as_str() {
            "he" | "him" | "his" => Some(Group::Masculine),
            "she" | "her" | "hers" => Some(Group::Feminine),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Masculine => "masculine",
            Group::Feminine => "feminine",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Half-open character span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NameSpan {
    pub start: usize,
    pub end: usize,
}

impl NameSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    /// Character distance from `offset` to the nearest edge of the span.
    pub fn distance_to(&self, offset: usize) -> usize {
        if self.end <= offset {
            offset - self.end
        } else { self.start.saturating_sub(offset) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub offset: usize,
    pub coreferent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub group: Group,
    pub text: String,
    pub pronoun: String,
    pub pronoun_offset: usize,
    pub candidate_a: Candidate,
    pub candidate_b: Candidate,
    pub url: String,
    /// Sorted, non-overlapping annotated personal names.
    pub name_spans: Vec<NameSpan>,
}

/// Which candidate an answer refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSlot {
    A,
    B,
}

impl Example {
    pub fn has_positive(&self) -> bool {
        self.candidate_a.coreferent || self.candidate_b.coreferent
    }

    pub fn coreferent(&self) -> Option<(CandidateSlot, &Candidate)> {
        if self.candidate_a.coreferent {
            Some((CandidateSlot::A, &self.candidate_a))
        } else if self.candidate_b.coreferent {
            Some((CandidateSlot::B, &self.candidate_b))
        } else {
            None
        }
    }

    pub fn candidate(&self, slot: CandidateSlot) -> &Candidate {
        match slot {
            CandidateSlot::A => &self.candidate_a,
            CandidateSlot::B => &self.candidate_b,
        }
    }

    pub fn text_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Text covered by a character span.
    pub fn span_text(&self, span: NameSpan) -> String {
        self.text
            .chars()
            .skip(span.start)
            .take(span.end.saturating_sub(span.start))
            .collect()
    }

    /// A candidate matches a name span when its offset lies inside the span
    /// and its surface string occurs in the span text ("John" in "John Smith").
    pub fn span_matches(&self, span: NameSpan, candidate: &Candidate) -> bool {
        span.start <= candidate.offset
            && candidate.offset < span.end
            && self.span_text(span).contains(candidate.name.as_str())
    }

    /// Span indices ordered by distance to the pronoun, ties by earlier start.
    pub fn spans_by_distance(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.name_spans.len()).collect();
        order.sort_by_key(|&i| {
            let s = self.name_spans[i];
            (s.distance_to(self.pronoun_offset), s.start)
        });
        order
    }

    /// Index of the annotated span matching the coreferent candidate.
    pub fn correct_span(&self) -> Option<usize> {
        let (_, cand) = self.coreferent()?;
        self.name_spans
            .iter()
            .position(|&s| self.span_matches(s, cand))
    }
}

/// Position of the correct candidate among annotated names sorted by
/// distance to the pronoun (1 = closest). `Ok(None)` when the example has no
/// coreferent candidate.
pub fn candidate_rank(example: &Example) -> Result<Option<usize>, DataError> {
    if !example.has_positive() {
        return Ok(None);
    }
    let correct = example
        .correct_span()
        .ok_or_else(|| DataError::UnmatchedCandidate(example.id.clone()))?;
    let rank = example
        .spans_by_distance()
        .iter()
        .position(|&i| i == correct)
        .map(|p| p + 1);
    Ok(rank)
}

/// Rank lookup that maps annotation disagreements to "no rank".
pub fn matched_rank(example: &Example) -> Option<usize> {
    candidate_rank(example).unwrap_or_default()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Self { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    pub fn index(&self) -> HashMap<&str, &Example> {
        self.examples.iter().map(|e| (e.id.as_str(), e)).collect()
    }

    pub fn group(&self, group: Group) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(move |e| e.group == group)
    }

    pub fn group_size(&self, group: Group) -> usize {
        self.group(group).count()
    }

    /// Examples with a coreferent candidate; the population of accuracy metrics.
    pub fn positive(&self) -> Dataset {
        Dataset::new(
            self.examples
                .iter()
                .filter(|e| e.has_positive())
                .cloned()
                .collect(),
        )
    }

    pub fn retain(&self, mut keep: impl FnMut(&Example) -> bool) -> Dataset {
        Dataset::new(self.examples.iter().filter(|e| keep(e)).cloned().collect())
    }

    /// Serializes the GAP columns (name spans are not part of this format).
    pub fn to_gap_tsv(&self) -> String {
        let mut out = GAP_HEADER.join("\t");
        out.push('\n');
        for e in &self.examples {
            let flag = |b: bool| if b { "TRUE" } else { "FALSE" };
            let fields = [
                e.id.clone(),
                e.text.clone(),
                e.pronoun.clone(),
                e.pronoun_offset.to_string(),
                e.candidate_a.name.clone(),
                e.candidate_a.offset.to_string(),
                flag(e.candidate_a.coreferent).to_string(),
                e.candidate_b.name.clone(),
                e.candidate_b.offset.to_string(),
                flag(e.candidate_b.coreferent).to_string(),
                e.url.clone(),
            ];
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Serializes name spans as newline-delimited JSON records.
    pub fn to_annotations_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            let record = AnnotationRecord {
                id: e.id.clone(),
                spans: e.name_spans.iter().map(|s| [s.start, s.end]).collect(),
            };
            out.push_str(&serde_json::to_string(&record).expect("plain record serializes"));
            out.push('\n');
        }
        out
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_uppercase().as_str() {
        "TRUE" => Some(true),
        "FALSE" => Some(false),
        _ => None,
    }
}

/// Parses the 11-column GAP TSV. Row numbers in errors are 1-based file lines.
pub fn parse_gap_tsv(raw: &[u8]) -> Result<Dataset, DataError> {
    let text = std::str::from_utf8(raw).map_err(|e| DataError::MalformedRow {
        row: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().ok_or(DataError::MalformedRow {
        row: 1,
        message: "missing header row".into(),
    })?;
    let cols: Vec<&str> = header.1.trim_end_matches('\r').split('\t').collect();
    if cols != GAP_HEADER {
        return Err(DataError::MalformedRow {
            row: 1,
            message: format!("unexpected header {cols:?}"),
        });
    }

    let mut examples = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| DataError::MalformedRow { row, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != GAP_HEADER.len() {
            return Err(bad(format!("expected 11 columns, found {}", f.len())));
        }
        let offset = |s: &str, what: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("{what} `{s}` is not a non-negative integer")))
        };
        let flag = |s: &str, what: &str| {
            parse_flag(s).ok_or_else(|| bad(format!("{what} `{s}` is not TRUE/FALSE")))
        };
        let text = f[1].to_string();
        let len = text.chars().count();
        let pronoun_offset = offset(f[3], "Pronoun-offset")?;
        let group =
            Group::from_pronoun(f[2]).ok_or_else(|| bad(format!("unrecognized pronoun `{}`", f[2])))?;
        let candidate_a = Candidate {
            name: f[4].to_string(),
            offset: offset(f[5], "A-offset")?,
            coreferent: flag(f[6], "A-coref")?,
        };
        let candidate_b = Candidate {
            name: f[7].to_string(),
            offset: offset(f[8], "B-offset")?,
            coreferent: flag(f[9], "B-coref")?,
        };
        for (what, off, surface) in [
            ("pronoun", pronoun_offset, f[2]),
            ("candidate A", candidate_a.offset, f[4]),
            ("candidate B", candidate_b.offset, f[7]),
        ] {
            if off + surface.chars().count() > len {
                return Err(bad(format!(
                    "{what} offset {off} out of bounds for text of length {len}"
                )));
            }
        }
        if candidate_a.coreferent && candidate_b.coreferent {
            return Err(bad("both candidates marked coreferent".into()));
        }
        if !seen.insert(f[0].to_string()) {
            return Err(DataError::DuplicateId(f[0].to_string()));
        }
        examples.push(Example {
            id: f[0].to_string(),
            group,
            text,
            pronoun: f[2].to_string(),
            pronoun_offset,
            candidate_a,
            candidate_b,
            url: f[10].to_string(),
            name_spans: Vec::new(),
        });
    }
    Ok(Dataset::new(examples))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationRecord {
    id: String,
    spans: Vec<[usize; 2]>,
}

/// Validates and sorts a span list for one example.
pub fn validate_spans(example: &Example, spans: &[NameSpan]) -> Result<Vec<NameSpan>, DataError> {
    let len = example.text_len();
    let mut sorted = spans.to_vec();
    sorted.sort();
    for s in &sorted {
        if s.start >= s.end || s.end > len {
            return Err(DataError::SpanOutOfBounds {
                id: example.id.clone(),
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    for w in sorted.windows(2) {
        if w[1].start < w[0].end {
            return Err(DataError::OverlappingSpans {
                id: example.id.clone(),
                a_start: w[0].start,
                a_end: w[0].end,
                b_start: w[1].start,
                b_end: w[1].end,
            });
        }
    }
    Ok(sorted)
}

/// Attaches name annotations (JSONL `{"id": .., "spans": [[s, e], ..]}`).
/// Every example of the dataset must be annotated exactly once.
pub fn parse_name_annotations(raw: &[u8], dataset: &Dataset) -> Result<Dataset, DataError> {
    let text = std::str::from_utf8(raw).map_err(|e| DataError::MalformedAnnotation {
        line: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let index: HashMap<&str, usize> = dataset
        .examples
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();
    let mut spans: Vec<Option<Vec<NameSpan>>> = vec![None; dataset.len()];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(line).map_err(|e| DataError::MalformedAnnotation {
                line: i + 1,
                message: e.to_string(),
            })?;
        let &pos = index
            .get(record.id.as_str())
            .ok_or_else(|| DataError::UnknownId(record.id.clone()))?;
        if spans[pos].is_some() {
            return Err(DataError::DuplicateId(record.id));
        }
        let raw_spans: Vec<NameSpan> = record.spans.iter().map(|s| NameSpan::new(s[0], s[1])).collect();
        spans[pos] = Some(validate_spans(&dataset.examples[pos], &raw_spans)?);
    }
    let mut out = dataset.clone();
    for (example, s) in out.examples.iter_mut().zip(spans) {
        example.name_spans = s.ok_or_else(|| DataError::MissingAnnotation(example.id.clone()))?;
    }
    Ok(out)
}

/// Per-example verdicts on the two candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Verdict {
    pub a: bool,
    pub b: bool,
}

impl Verdict {
    pub fn get(&self, slot: CandidateSlot) -> bool {
        match slot {
            CandidateSlot::A => self.a,
            CandidateSlot::B => self.b,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub verdicts: BTreeMap<String, Verdict>,
}

impl PredictionSet {
    pub fn get(&self, id: &str) -> Option<Verdict> {
        self.verdicts.get(id).copied()
    }

    pub fn insert(&mut self, id: impl Into<String>, verdict: Verdict) {
        self.verdicts.insert(id.into(), verdict);
    }

    /// Ids that are not part of `dataset`.
    pub fn unknown_ids(&self, dataset: &Dataset) -> Vec<String> {
        let index = dataset.index();
        self.verdicts
            .keys()
            .filter(|id| !index.contains_key(id.as_str()))
            .cloned()
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let flag = |b: bool| if b { "TRUE" } else { "FALSE" };
        let mut out = String::new();
        for (id, v) in &self.verdicts {
            out.push_str(&format!("{id}\t{}\t{}\n", flag(v.a), flag(v.b)));
        }
        out
    }
}

/// Parses `id <TAB> a_pred <TAB> b_pred`; a header row is detected when its
/// verdict columns are not TRUE/FALSE.
pub fn parse_predictions(raw: &[u8]) -> Result<PredictionSet, DataError> {
    let text = std::str::from_utf8(raw).map_err(|e| DataError::MalformedPrediction {
        line: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let mut out = PredictionSet::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DataError::MalformedPrediction { line: i + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", f.len())));
        }
        match (parse_flag(f[1]), parse_flag(f[2])) {
            (Some(a), Some(b)) => {
                if out.verdicts.insert(f[0].to_string(), Verdict { a, b }).is_some() {
                    return Err(bad(format!("duplicate id `{}`", f[0])));
                }
            }
            _ if i == 0 => continue,
            _ => return Err(bad(format!("verdicts `{}`/`{}` are not TRUE/FALSE", f[1], f[2]))),
        }
    }
    Ok(out)
}

/// A labeled subset of example ids whose weighted mass must match across groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySet {
    pub label: String,
    pub members: BTreeSet<String>,
}

/// Property families: `N_k` (exactly k names) and `D_k` (correct candidate is
/// the k-th closest name).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PropertyFamilies {
    pub names: bool,
    pub distance: bool,
}

impl PropertyFamilies {
    pub const ALL: PropertyFamilies = PropertyFamilies {
        names: true,
        distance: true,
    };
    pub const NAMES: PropertyFamilies = PropertyFamilies {
        names: true,
        distance: false,
    };
    pub const DISTANCE: PropertyFamilies = PropertyFamilies {
        names: false,
        distance: true,
    };
}

/// Derives `N_k` for every occurring name count and `D_k` for every
/// occurring rank. Examples whose correct candidate is absent or matches no
/// annotation are in no `D_k`.
pub fn derive_property_sets(dataset: &Dataset, which: PropertyFamilies) -> Vec<PropertySet> {
    let mut names: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    let mut ranks: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for e in &dataset.examples {
        if which.names {
            names
                .entry(e.name_spans.len())
                .or_default()
                .insert(e.id.clone());
        }
        if which.distance {
            if let Some(r) = matched_rank(e) {
                ranks.entry(r).or_default().insert(e.id.clone());
            }
        }
    }
    let mut out: Vec<PropertySet> = names
        .into_iter()
        .map(|(k, members)| PropertySet {
            label: format!("N_{k}"),
            members,
        })
        .collect();
    out.extend(ranks.into_iter().map(|(k, members)| PropertySet {
        label: format!("D_{k}"),
        members,
    }));
    out
}

/// Counts, mean and population standard deviation of a sample.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Distribution {
    pub histogram: BTreeMap<usize, usize>,
    pub count: usize,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
}

impl Distribution {
    pub fn from_values(values: impl IntoIterator<Item = usize>) -> Self {
        let mut histogram = BTreeMap::new();
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for v in values {
            *histogram.entry(v).or_insert(0) += 1;
            count += 1;
            sum += v as f64;
            sum_sq += (v as f64) * (v as f64);
        }
        if count == 0 {
            return Self::default();
        }
        let mean = sum / count as f64;
        let var = (sum_sq / count as f64 - mean * mean).max(0.0);
        Self {
            histogram,
            count,
            mean: Some(mean),
            std_dev: Some(var.sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: Group,
    pub examples: usize,
    pub name_counts: Distribution,
    pub candidate_ranks: Distribution,
}

/// Per-group name-count and candidate-rank distributions. Ranks only cover
/// examples whose correct candidate matches an annotated name.
pub fn dataset_stats(dataset: &Dataset) -> Vec<GroupStats> {
    Group::ALL
        .iter()
        .map(|&g| GroupStats {
            group: g,
            examples: dataset.group_size(g),
            name_counts: Distribution::from_values(dataset.group(g).map(|e| e.name_spans.len())),
            candidate_ranks: Distribution::from_values(dataset.group(g).filter_map(matched_rank)),
        })
        .collect()
}

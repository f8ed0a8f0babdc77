//! Records, datasets, CSV ingestion and threshold policies.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value of the binary sensitive attribute. `Zero` is the favored group by
/// convention, `One` the disadvantaged one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    Zero,
    One,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Zero, Group::One];

    pub fn index(self) -> usize {
        match self {
            Group::Zero => 0,
            Group::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Group {
        if i == 0 {
            Group::Zero
        } else {
            Group::One
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Zero => Group::One,
            Group::One => Group::Zero,
        }
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.index() as u8
    }
}

impl TryFrom<u8> for Group {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Group, String> {
        match v {
            0 => Ok(Group::Zero),
            1 => Ok(Group::One),
            _ => Err(format!("group must be 0 or 1, got {v}")),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub s: Group,
    pub y: bool,
    pub score: Option<f64>,
    /// Feature values; `NaN` marks a missing cell.
    pub features: Vec<f64>,
    pub weight: f64,
}

impl Record {
    pub fn new(s: Group, y: bool, score: Option<f64>) -> Record {
        Record {
            s,
            y,
            score,
            features: Vec::new(),
            weight: 1.0,
        }
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Record {
        self.features = features;
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Record {
        self.weight = weight;
        self
    }

    fn check(&self, row: usize, n_features: usize) -> Result<()> {
        if let Some(m) = self.score {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::InvalidValue {
                    row,
                    column: "score".into(),
                    message: format!("score {m} outside [0, 1]"),
                });
            }
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::InvalidValue {
                row,
                column: "weight".into(),
                message: format!("weight {} must be positive", self.weight),
            });
        }
        if self.features.len() != n_features {
            return Err(Error::InvalidValue {
                row,
                column: "features".into(),
                message: format!("expected {n_features} features, got {}", self.features.len()),
            });
        }
        Ok(())
    }
}

/// Non-empty, validated sequence of records plus column metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<Record>,
    feature_names: Vec<String>,
    legitimate: Vec<String>,
}

impl Dataset {
    pub fn new(records: Vec<Record>, feature_names: Vec<String>) -> Result<Dataset> {
        if records.is_empty() {
            return Err(Error::NoRecords);
        }
        for (i, r) in records.iter().enumerate() {
            r.check(i + 1, feature_names.len())?;
        }
        Ok(Dataset {
            records,
            feature_names,
            legitimate: Vec::new(),
        })
    }

    /// Featureless dataset from parallel `s`, `y` and score columns.
    pub fn from_scores(s: &[u8], y: &[u8], scores: &[f64]) -> Result<Dataset> {
        if s.len() != y.len() || s.len() != scores.len() {
            return Err(Error::invalid("s, y and score columns differ in length"));
        }
        let records = s
            .iter()
            .zip(y)
            .zip(scores)
            .enumerate()
            .map(|(i, ((&si, &yi), &m))| {
                let g = Group::try_from(si).map_err(|message| Error::InvalidValue {
                    row: i + 1,
                    column: "s".into(),
                    message,
                })?;
                if yi > 1 {
                    return Err(Error::InvalidValue {
                        row: i + 1,
                        column: "y".into(),
                        message: format!("outcome must be 0 or 1, got {yi}"),
                    });
                }
                Ok(Record::new(g, yi == 1, Some(m)))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(records, Vec::new())
    }

    /// Marks feature columns usable as strata for conditional parity.
    pub fn with_legitimate(mut self, cols: &[String]) -> Result<Dataset> {
        for c in cols {
            if self.feature_index(c).is_none() {
                return Err(Error::MissingColumn(c.clone()));
            }
        }
        self.legitimate = cols.to_vec();
        Ok(self)
    }

    /// Same metadata, new records (re-validated).
    pub fn replace_records(&self, records: Vec<Record>) -> Result<Dataset> {
        let mut d = Dataset::new(records, self.feature_names.clone())?;
        d.legitimate = self.legitimate.clone();
        Ok(d)
    }

    /// Records at `idx`, in that order (indices may repeat).
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        self.replace_records(idx.iter().map(|&i| self.records[i].clone()).collect())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn legitimate(&self) -> &[String] {
        &self.legitimate
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.features[j]).collect()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.records.iter().map(|r| r.s).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.weight).collect()
    }

    pub fn has_scores(&self) -> bool {
        self.records.iter().all(|r| r.score.is_some())
    }

    pub fn scores(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.score
                    .ok_or_else(|| Error::invalid(format!("record {} has no score", i + 1)))
            })
            .collect()
    }

    pub fn group_size(&self, g: Group) -> usize {
        self.records.iter().filter(|r| r.s == g).count()
    }

    pub fn has_group(&self, g: Group) -> bool {
        self.records.iter().any(|r| r.s == g)
    }

    pub fn group_weight(&self, g: Group) -> f64 {
        self.records.iter().filter(|r| r.s == g).map(|r| r.weight).sum()
    }

    /// Weighted `P[Y = 1 | S = g]`.
    pub fn base_rate(&self, g: Group) -> Option<f64> {
        let total = self.group_weight(g);
        (total > 0.0).then(|| {
            self.records
                .iter()
                .filter(|r| r.s == g && r.y)
                .map(|r| r.weight)
                .sum::<f64>()
                / total
        })
    }

    pub(crate) fn require_both_groups(&self) -> Result<()> {
        for g in Group::BOTH {
            if !self.has_group(g) {
                return Err(Error::EmptyGroup(g));
            }
        }
        Ok(())
    }
}

/// Rejects everything under the strict `score > t` rule.
pub const REJECT_ALL: f64 = 1.0;
/// Accepts everything under the strict `score > t` rule.
pub const ACCEPT_ALL: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub threshold: f64,
    pub weight: f64,
}

/// Decision rule for one group; `ŷ = 1` iff `score > t` for the drawn `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdRule {
    Deterministic { threshold: f64 },
    /// `low` with probability `p_low`, otherwise `high`.
    Randomized { low: f64, high: f64, p_low: f64 },
    /// General finite mixture of thresholds; weights sum to one.
    Mixture { components: Vec<MixtureComponent> },
}

impl ThresholdRule {
    pub fn deterministic(threshold: f64) -> ThresholdRule {
        ThresholdRule::Deterministic { threshold }
    }

    pub fn decision_probability(&self, score: f64) -> f64 {
        let hit = |t: f64| if score > t { 1.0 } else { 0.0 };
        match self {
            ThresholdRule::Deterministic { threshold } => hit(*threshold),
            ThresholdRule::Randomized { low, high, p_low } => {
                p_low * hit(*low) + (1.0 - p_low) * hit(*high)
            }
            ThresholdRule::Mixture { components } => components
                .iter()
                .map(|c| c.weight * hit(c.threshold))
                .sum::<f64>()
                .clamp(0.0, 1.0),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            ThresholdRule::Deterministic { .. } => true,
            ThresholdRule::Randomized { low, high, p_low } => {
                low == high || *p_low == 0.0 || *p_low == 1.0
            }
            ThresholdRule::Mixture { components } => {
                components.iter().filter(|c| c.weight > 0.0).count() <= 1
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |t: f64| {
            if t.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("threshold {t} is not finite")))
            }
        };
        match self {
            ThresholdRule::Deterministic { threshold } => finite(*threshold),
            ThresholdRule::Randomized { low, high, p_low } => {
                finite(*low)?;
                finite(*high)?;
                if low > high {
                    return Err(Error::invalid(format!("randomized rule has low {low} > high {high}")));
                }
                if !(0.0..=1.0).contains(p_low) {
                    return Err(Error::invalid(format!("mixing probability {p_low} outside [0, 1]")));
                }
                Ok(())
            }
            ThresholdRule::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::invalid("empty threshold mixture"));
                }
                for c in components {
                    finite(c.threshold)?;
                    if !(c.weight >= 0.0) {
                        return Err(Error::invalid("negative mixture weight"));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("mixture weights sum to {total}")));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub s0: Option<ThresholdRule>,
    pub s1: Option<ThresholdRule>,
}

impl ThresholdPolicy {
    pub fn shared(threshold: f64) -> ThresholdPolicy {
        ThresholdPolicy::per_group(
            ThresholdRule::deterministic(threshold),
            ThresholdRule::deterministic(threshold),
        )
    }

    pub fn per_group(r0: ThresholdRule, r1: ThresholdRule) -> ThresholdPolicy {
        ThresholdPolicy {
            s0: Some(r0),
            s1: Some(r1),
        }
    }

    pub fn rule(&self, g: Group) -> Option<&ThresholdRule> {
        match g {
            Group::Zero => self.s0.as_ref(),
            Group::One => self.s1.as_ref(),
        }
    }

    pub fn set(&mut self, g: Group, rule: ThresholdRule) {
        match g {
            Group::Zero => self.s0 = Some(rule),
            Group::One => self.s1 = Some(rule),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        [&self.s0, &self.s1]
            .into_iter()
            .flatten()
            .all(ThresholdRule::is_deterministic)
    }
}

/// Per-record probability that `ŷ = 1`; exactly 0 or 1 for deterministic
/// decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    probs: Vec<f64>,
}

impl PredictionSet {
    pub fn new(probs: Vec<f64>) -> Result<PredictionSet> {
        if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!(
                "decision probability {} at record {} outside [0, 1]",
                probs[i],
                i + 1
            )));
        }
        Ok(PredictionSet { probs })
    }

    pub fn from_decisions(yhat: &[bool]) -> PredictionSet {
        PredictionSet {
            probs: yhat.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_hard(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Hard decisions, if every probability is 0 or 1.
    pub fn decisions(&self) -> Option<Vec<bool>> {
        self.is_hard()
            .then(|| self.probs.iter().map(|&p| p == 1.0).collect())
    }

    pub(crate) fn check_aligned(&self, d: &Dataset) -> Result<()> {
        if self.len() != d.len() {
            return Err(Error::invalid(format!(
                "{} predictions for {} records",
                self.len(),
                d.len()
            )));
        }
        Ok(())
    }
}

pub fn apply_policy(d: &Dataset, policy: &ThresholdPolicy) -> Result<PredictionSet> {
    for g in Group::BOTH {
        match policy.rule(g) {
            Some(rule) => rule.validate()?,
            None if d.has_group(g) => return Err(Error::MissingPolicy(g)),
            None => {}
        }
    }
    let scores = d.scores()?;
    let probs = d
        .records()
        .iter()
        .zip(scores)
        .map(|(r, m)| policy.rule(r.s).map_or(0.0, |rule| rule.decision_probability(m)))
        .collect();
    Ok(PredictionSet { probs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnCount {
    pub column: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub records: usize,
    pub group_sizes: [usize; 2],
    pub group_weights: [f64; 2],
    pub base_rates: [Option<f64>; 2],
    pub missing_features: Vec<ColumnCount>,
    pub constant_columns: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn validate(d: &Dataset) -> ValidationReport {
    let mut warnings = Vec::new();
    let group_sizes = Group::BOTH.map(|g| d.group_size(g));
    for g in Group::BOTH {
        if group_sizes[g.index()] == 0 {
            warnings.push(format!("group {g} empty"));
        }
    }
    let mut constant_columns = Vec::new();
    if d.has_scores() {
        let scores = d.scores().unwrap_or_default();
        if scores.iter().all(|&m| m == scores[0]) {
            constant_columns.push("score".to_string());
            warnings.push("constant score".to_string());
        }
    }
    let mut missing_features = Vec::new();
    for (j, name) in d.feature_names().iter().enumerate() {
        let col = d.feature_column(j);
        let missing = col.iter().filter(|v| v.is_nan()).count();
        if missing > 0 {
            missing_features.push(ColumnCount {
                column: name.clone(),
                count: missing,
            });
        }
        let present: Vec<f64> = col.into_iter().filter(|v| !v.is_nan()).collect();
        if present.windows(2).all(|w| w[0] == w[1]) {
            constant_columns.push(name.clone());
            warnings.push(format!("constant feature `{name}`"));
        }
    }
    if d.records().iter().all(|r| r.y == d.records()[0].y) {
        warnings.push("single outcome class".to_string());
    }
    ValidationReport {
        records: d.len(),
        group_sizes,
        group_weights: Group::BOTH.map(|g| d.group_weight(g)),
        base_rates: Group::BOTH.map(|g| d.base_rate(g)),
        missing_features,
        constant_columns,
        warnings,
    }
}

/// Column mapping for CSV ingestion. `None` for the score or weight column
/// means "use `score` / `w` when present".
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub s_col: String,
    pub y_col: String,
    pub score_col: Option<String>,
    pub weight_col: Option<String>,
    /// Explicit feature list; by default every unmapped column is a feature.
    pub feature_cols: Option<Vec<String>>,
    /// Column holding precomputed decisions, excluded from the features.
    pub prediction_col: Option<String>,
    pub legitimate_cols: Vec<String>,
    /// Replace score `m` by `1 - m` (for scores where large means `y = 0`).
    pub flip_score: bool,
    /// Keep the sensitive column as an extra feature instead of ignoring it.
    pub sensitive_as_feature: bool,
}

impl Default for CsvSchema {
    fn default() -> CsvSchema {
        CsvSchema {
            s_col: "s".into(),
            y_col: "y".into(),
            score_col: None,
            weight_col: None,
            feature_cols: None,
            prediction_col: None,
            legitimate_cols: Vec::new(),
            flip_score: false,
            sensitive_as_feature: false,
        }
    }
}

/// Raw CSV contents, kept as strings so untouched cells can be written back
/// verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: impl AsRef<Path>) -> Result<CsvTable> {
        CsvTable::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<CsvTable> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(Error::NoRecords);
        }
        Ok(CsvTable { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Replaces (or appends) a column.
    pub fn set_column(&mut self, name: &str, values: Vec<String>) {
        debug_assert_eq!(values.len(), self.rows.len());
        match self.column_index(name) {
            Some(j) => {
                for (row, v) in self.rows.iter_mut().zip(values) {
                    row[j] = v;
                }
            }
            None => {
                self.headers.push(name.to_string());
                for (row, v) in self.rows.iter_mut().zip(values) {
                    row.push(v);
                }
            }
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_writer(std::fs::File::create(path)?)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn cell(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).map_or("", |s| s.trim())
    }

    fn parse_number(&self, row: usize, col: usize) -> Result<f64> {
        let raw = self.cell(row, col);
        raw.parse::<f64>().map_err(|_| Error::InvalidValue {
            row: row + 1,
            column: self.headers[col].clone(),
            message: format!("`{raw}` is not a number"),
        })
    }

    fn parse_binary(&self, row: usize, col: usize, what: &str) -> Result<bool> {
        let v = self.parse_number(row, col)?;
        if v == 0.0 || v == 1.0 {
            Ok(v == 1.0)
        } else {
            Err(Error::InvalidValue {
                row: row + 1,
                column: self.headers[col].clone(),
                message: format!("{what} must be 0 or 1, got {}", self.cell(row, col)),
            })
        }
    }

    fn optional_column(&self, explicit: &Option<String>, default: &str) -> Result<Option<usize>> {
        match explicit {
            Some(name) => self.require(name).map(Some),
            None => Ok(self.column_index(default)),
        }
    }

    pub fn to_dataset(&self, schema: &CsvSchema) -> Result<Dataset> {
        let s_idx = self.require(&schema.s_col)?;
        let y_idx = self.require(&schema.y_col)?;
        let score_idx = self.optional_column(&schema.score_col, "score")?;
        let weight_idx = self.optional_column(&schema.weight_col, "w")?;
        let pred_idx = match &schema.prediction_col {
            Some(p) => Some(self.require(p)?),
            None => None,
        };
        let mut feature_idx: Vec<usize> = match &schema.feature_cols {
            Some(cols) => cols.iter().map(|c| self.require(c)).collect::<Result<_>>()?,
            None => (0..self.headers.len())
                .filter(|j| {
                    ![Some(s_idx), Some(y_idx), score_idx, weight_idx, pred_idx].contains(&Some(*j))
                })
                .collect(),
        };
        if schema.sensitive_as_feature && !feature_idx.contains(&s_idx) {
            feature_idx.push(s_idx);
        }
        if score_idx.is_none() && feature_idx.is_empty() {
            return Err(Error::invalid(
                "schema needs a score column or at least one feature column",
            ));
        }

        let mut records = Vec::with_capacity(self.rows.len());
        for i in 0..self.rows.len() {
            let s = if self.parse_binary(i, s_idx, "sensitive attribute")? {
                Group::One
            } else {
                Group::Zero
            };
            let y = self.parse_binary(i, y_idx, "outcome")?;
            let score = match score_idx {
                Some(j) => {
                    let m = self.parse_number(i, j)?;
                    if !(0.0..=1.0).contains(&m) {
                        return Err(Error::InvalidValue {
                            row: i + 1,
                            column: self.headers[j].clone(),
                            message: format!("score {m} outside [0, 1]"),
                        });
                    }
                    Some(if schema.flip_score { 1.0 - m } else { m })
                }
                None => None,
            };
            let weight = match weight_idx {
                Some(j) => {
                    let w = self.parse_number(i, j)?;
                    if !(w.is_finite() && w > 0.0) {
                        return Err(Error::InvalidValue {
                            row: i + 1,
                            column: self.headers[j].clone(),
                            message: format!("weight {w} must be positive"),
                        });
                    }
                    w
                }
                None => 1.0,
            };
            let features = feature_idx
                .iter()
                .map(|&j| match self.cell(i, j) {
                    "" | "NA" | "na" | "NaN" | "nan" => Ok(f64::NAN),
                    _ => self.parse_number(i, j).and_then(|v| {
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(Error::InvalidValue {
                                row: i + 1,
                                column: self.headers[j].clone(),
                                message: "feature value is not finite".into(),
                            })
                        }
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            records.push(Record {
                s,
                y,
                score,
                features,
                weight,
            });
        }
        let names = feature_idx.iter().map(|&j| self.headers[j].clone()).collect();
        Dataset::new(records, names)?.with_legitimate(&schema.legitimate_cols)
    }

    /// Decisions (0/1) or decision probabilities read from a column.
    pub fn predictions(&self, column: &str) -> Result<PredictionSet> {
        let j = self.require(column)?;
        let probs = (0..self.rows.len())
            .map(|i| {
                let p = self.parse_number(i, j)?;
                if (0.0..=1.0).contains(&p) {
                    Ok(p)
                } else {
                    Err(Error::InvalidValue {
                        row: i + 1,
                        column: column.to_string(),
                        message: format!("decision {p} outside [0, 1]"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        PredictionSet::new(probs)
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    CsvTable::read(path)?.to_dataset(schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    CsvTable::from_reader(reader)?.to_dataset(schema)
}

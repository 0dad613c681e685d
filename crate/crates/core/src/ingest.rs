//! Loading, validation and indexing of the three input datasets, and the
//! cutoff-based train/test slicing used by training and backtests.
//!
//! File formats:
//! - `sales.csv`: `title,issue,pos,supply,sales,period_start,period_end`
//! - `pos.csv`: `pos,establishment,revenue_bracket`
//! - `issues.jsonl`: one [`IssueMeta`] JSON object per line

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{IssueKey, IssueMeta, PosId, PosMeta, SalesRecord, TitleId, MAX_REVENUE_BRACKET};
use crate::error::{Error, Result};

pub const SALES_FILE: &str = "sales.csv";
pub const POS_FILE: &str = "pos.csv";
pub const ISSUES_FILE: &str = "issues.jsonl";
pub const HOLIDAYS_FILE: &str = "holidays.txt";

#[derive(Debug, Deserialize)]
struct SalesRow {
    title: String,
    issue: String,
    pos: String,
    supply: u32,
    sales: u32,
    period_start: NaiveDate,
    period_end: NaiveDate,
}

#[derive(Debug, Serialize, Deserialize)]
struct PosRow {
    pos: String,
    establishment: String,
    revenue_bracket: u8,
}

/// Cross-referenced, immutable view of the input data.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<SalesRecord>,
    pos_meta: BTreeMap<PosId, PosMeta>,
    issue_meta: BTreeMap<IssueKey, IssueMeta>,
    by_title_pos: HashMap<(TitleId, PosId), Vec<usize>>,
    by_issue: BTreeMap<IssueKey, Vec<usize>>,
    by_issue_pos: HashMap<(IssueKey, PosId), usize>,
}

impl Dataset {
    /// Builds and validates a dataset from in-memory parts.
    pub fn new(
        records: Vec<SalesRecord>,
        pos: impl IntoIterator<Item = PosMeta>,
        issues: impl IntoIterator<Item = IssueMeta>,
    ) -> Result<Self> {
        let mut pos_meta = BTreeMap::new();
        for p in pos {
            validate_pos(&p)?;
            if pos_meta.insert(p.pos.clone(), p.clone()).is_some() {
                return Err(Error::Reference(format!("duplicate pos {}", p.pos)));
            }
        }
        let mut issue_meta = BTreeMap::new();
        for m in issues {
            m.validate()?;
            let key = m.key();
            if issue_meta.insert(key.clone(), m).is_some() {
                return Err(Error::Reference(format!("duplicate issue {key}")));
            }
        }
        let lines: Vec<usize> = (0..records.len()).map(|i| i + 2).collect();
        Self::assemble(records, &lines, pos_meta, issue_meta, SALES_FILE)
    }

    fn assemble(
        records: Vec<SalesRecord>,
        lines: &[usize],
        pos_meta: BTreeMap<PosId, PosMeta>,
        issue_meta: BTreeMap<IssueKey, IssueMeta>,
        sales_file: &str,
    ) -> Result<Self> {
        let mut by_issue_pos: HashMap<(IssueKey, PosId), usize> = HashMap::with_capacity(records.len());
        let mut by_issue: BTreeMap<IssueKey, Vec<usize>> = BTreeMap::new();
        let mut by_title_pos: HashMap<(TitleId, PosId), Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let line = lines[i];
            r.validate().map_err(|e| Error::Schema {
                file: sales_file.to_string(),
                line,
                message: e.to_string(),
            })?;
            if !pos_meta.contains_key(&r.pos) {
                return Err(Error::Reference(format!(
                    "{sales_file}:{line}: unknown pos `{}`",
                    r.pos
                )));
            }
            let key = r.issue_key();
            let meta = issue_meta.get(&key).ok_or_else(|| {
                Error::Reference(format!("{sales_file}:{line}: unknown issue `{key}`"))
            })?;
            if meta.period_start != r.period_start || meta.period_end != r.period_end {
                return Err(Error::Schema {
                    file: sales_file.to_string(),
                    line,
                    message: format!("selling period differs from issue metadata for {key}"),
                });
            }
            if let Some(&first) = by_issue_pos.get(&(key.clone(), r.pos.clone())) {
                return Err(Error::Duplicate {
                    file: sales_file.to_string(),
                    line,
                    first_line: lines[first],
                    key: format!("{key}@{}", r.pos),
                });
            }
            by_issue_pos.insert((key.clone(), r.pos.clone()), i);
            by_issue.entry(key).or_default().push(i);
            by_title_pos
                .entry((r.title.clone(), r.pos.clone()))
                .or_default()
                .push(i);
        }
        for idx in by_title_pos.values_mut() {
            idx.sort_by(|&a, &b| {
                let (ra, rb) = (&records[a], &records[b]);
                (ra.period_start, &ra.issue).cmp(&(rb.period_start, &rb.issue))
            });
        }
        for meta in issue_meta.values() {
            for r in meta.references.iter().chain(meta.atypical_exclusions.iter()) {
                if !issue_meta.contains_key(r) {
                    return Err(Error::Reference(format!(
                        "issue {} refers to unknown issue {r}",
                        meta.key()
                    )));
                }
            }
            for r in &meta.references {
                if !by_issue.contains_key(r) {
                    return Err(Error::Reference(format!(
                        "issue {}: reference {r} has no observed sales",
                        meta.key()
                    )));
                }
            }
        }
        Ok(Dataset {
            records,
            pos_meta,
            issue_meta,
            by_title_pos,
            by_issue,
            by_issue_pos,
        })
    }

    pub fn load(sales_path: &Path, pos_path: &Path, issues_path: &Path) -> Result<Self> {
        let pos_meta = read_pos(pos_path)?;
        let issue_meta = read_issues(issues_path)?;
        let (records, lines) = read_sales(sales_path)?;
        let name = sales_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| SALES_FILE.to_string());
        Self::assemble(records, &lines, pos_meta, issue_meta, &name)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::load(&dir.join(SALES_FILE), &dir.join(POS_FILE), &dir.join(ISSUES_FILE))
    }

    /// Writes the canonical form: records sorted by `(title, issue, pos)`,
    /// POS by id, issues by key.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_sales(&dir.join(SALES_FILE))?;
        self.write_pos(&dir.join(POS_FILE))?;
        self.write_issues(&dir.join(ISSUES_FILE))
    }

    pub fn write_sales(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_sales_to(BufWriter::new(file))
            .map_err(|e| relabel(e, path))
    }

    pub fn write_sales_to(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["title", "issue", "pos", "supply", "sales", "period_start", "period_end"])?;
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&self.records[a], &self.records[b]);
            (&ra.title, &ra.issue, &ra.pos).cmp(&(&rb.title, &rb.issue, &rb.pos))
        });
        for i in order {
            let r = &self.records[i];
            w.write_record([
                r.title.as_str(),
                r.issue.as_str(),
                r.pos.as_str(),
                &r.supply.to_string(),
                &r.sales.to_string(),
                &r.period_start.to_string(),
                &r.period_end.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<sales>", e))
    }

    pub fn write_pos(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_pos_to(BufWriter::new(file)).map_err(|e| relabel(e, path))
    }

    pub fn write_pos_to(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        for p in self.pos_meta.values() {
            w.serialize(PosRow {
                pos: p.pos.0.clone(),
                establishment: p.establishment.clone(),
                revenue_bracket: p.revenue_bracket,
            })?;
        }
        w.flush().map_err(|e| Error::io("<pos>", e))
    }

    pub fn write_issues(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_issues_to(BufWriter::new(file)).map_err(|e| relabel(e, path))
    }

    pub fn write_issues_to(&self, mut w: impl Write) -> Result<()> {
        for m in self.issue_meta.values() {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n").map_err(|e| Error::io("<issues>", e))?;
        }
        w.flush().map_err(|e| Error::io("<issues>", e))
    }

    pub fn records(&self) -> &[SalesRecord] {
        &self.records
    }

    pub fn record(&self, idx: usize) -> &SalesRecord {
        &self.records[idx]
    }

    pub fn pos_meta(&self) -> &BTreeMap<PosId, PosMeta> {
        &self.pos_meta
    }

    pub fn issue_meta(&self) -> &BTreeMap<IssueKey, IssueMeta> {
        &self.issue_meta
    }

    pub fn issue(&self, key: &IssueKey) -> Option<&IssueMeta> {
        self.issue_meta.get(key)
    }

    pub fn titles(&self) -> BTreeSet<TitleId> {
        self.issue_meta.keys().map(|k| k.title.clone()).collect()
    }

    /// Records of one title at one POS, oldest first.
    pub fn history(&self, title: &TitleId, pos: &PosId) -> &[usize] {
        self.by_title_pos
            .get(&(title.clone(), pos.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn issue_records(&self, key: &IssueKey) -> &[usize] {
        self.by_issue.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn record_at(&self, key: &IssueKey, pos: &PosId) -> Option<&SalesRecord> {
        self.by_issue_pos
            .get(&(key.clone(), pos.clone()))
            .map(|&i| &self.records[i])
    }

    /// Issues of a title ordered by `period_start`.
    pub fn title_issues(&self, title: &TitleId) -> Vec<&IssueMeta> {
        let mut v: Vec<&IssueMeta> = self
            .issue_meta
            .values()
            .filter(|m| &m.title == title)
            .collect();
        v.sort_by(|a, b| (a.period_start, &a.issue).cmp(&(b.period_start, &b.issue)));
        v
    }

    /// `(earliest period_start, latest period_end)` over all records.
    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let lo = self.records.iter().map(|r| r.period_start).min()?;
        let hi = self.records.iter().map(|r| r.period_end).max()?;
        Some((lo, hi))
    }

    /// A copy keeping only the records accepted by `keep`; metadata is unchanged
    /// except that references without remaining sales are dropped.
    pub fn filtered(&self, keep: impl Fn(&SalesRecord) -> bool) -> Dataset {
        let records: Vec<SalesRecord> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        let observed: BTreeSet<IssueKey> = records.iter().map(|r| r.issue_key()).collect();
        let issues = self.issue_meta.values().cloned().map(|mut m| {
            if m.references.iter().any(|r| !observed.contains(r)) {
                m.references.clear();
            }
            m
        });
        Dataset::new(records, self.pos_meta.values().cloned(), issues)
            .expect("a filtered valid dataset stays valid")
    }

    /// Replaces one issue's metadata, re-validating the dataset.
    pub fn with_issue_meta(&self, meta: IssueMeta) -> Result<Dataset> {
        let key = meta.key();
        let old = self
            .issue_meta
            .get(&key)
            .ok_or_else(|| Error::Reference(format!("unknown issue {key}")))?;
        if old.period_start != meta.period_start || old.period_end != meta.period_end {
            if !self.issue_records(&key).is_empty() {
                return Err(Error::invalid(
                    "period_start",
                    "cannot move the selling period of an issue with recorded sales",
                ));
            }
        }
        let mut issues = self.issue_meta.clone();
        issues.insert(key, meta);
        Dataset::new(self.records.clone(), self.pos_meta.values().cloned(), issues.into_values())
    }

    pub fn slice(&self, cutoff: NaiveDate) -> Result<TimeSlice> {
        TimeSlice::new(self, cutoff)
    }
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

fn validate_pos(p: &PosMeta) -> Result<()> {
    if p.pos.0.is_empty() {
        return Err(Error::invalid("pos", "identifier must be non-empty"));
    }
    if p.revenue_bracket > MAX_REVENUE_BRACKET {
        return Err(Error::invalid(
            "revenue_bracket",
            format!("bracket {} outside 0..={MAX_REVENUE_BRACKET}", p.revenue_bracket),
        ));
    }
    Ok(())
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_sales(path: &Path) -> Result<(Vec<SalesRecord>, Vec<usize>)> {
    let label = file_label(path);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let headers = rdr.headers()?.clone();
    let expected = ["title", "issue", "pos", "supply", "sales", "period_start", "period_end"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Schema {
            file: label,
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for row in rdr.deserialize::<SalesRow>() {
        let row = row.map_err(|e| csv_schema_error(&label, e))?;
        lines.push(lines.len() + 2);
        records.push(SalesRecord {
            title: TitleId(row.title),
            issue: row.issue.into(),
            pos: PosId(row.pos),
            supply: row.supply,
            sales: row.sales,
            period_start: row.period_start,
            period_end: row.period_end,
        });
    }
    Ok((records, lines))
}

fn csv_schema_error(label: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("field {}: {}", f + 1, err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    };
    Error::Schema {
        file: label.to_string(),
        line,
        message,
    }
}

fn read_pos(path: &Path) -> Result<BTreeMap<PosId, PosMeta>> {
    let label = file_label(path);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(["pos", "establishment", "revenue_bracket"]) {
        return Err(Error::Schema {
            file: label,
            line: 1,
            message: "expected header `pos,establishment,revenue_bracket`".into(),
        });
    }
    let mut out = BTreeMap::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (i, row) in rdr.deserialize::<PosRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| csv_schema_error(&label, e))?;
        let meta = PosMeta {
            pos: PosId(row.pos.clone()),
            establishment: row.establishment,
            revenue_bracket: row.revenue_bracket,
        };
        validate_pos(&meta).map_err(|e| Error::Schema {
            file: label.clone(),
            line,
            message: e.to_string(),
        })?;
        if let Some(&first) = first_line.get(&row.pos) {
            return Err(Error::Duplicate {
                file: label,
                line,
                first_line: first,
                key: row.pos,
            });
        }
        first_line.insert(row.pos, line);
        out.insert(meta.pos.clone(), meta);
    }
    Ok(out)
}

fn read_issues(path: &Path) -> Result<BTreeMap<IssueKey, IssueMeta>> {
    let label = file_label(path);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    let mut first_line: HashMap<IssueKey, usize> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: IssueMeta = serde_json::from_str(&line).map_err(|e| Error::Schema {
            file: label.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        meta.validate().map_err(|e| Error::Schema {
            file: label.clone(),
            line: line_no,
            message: e.to_string(),
        })?;
        let key = meta.key();
        if let Some(&first) = first_line.get(&key) {
            return Err(Error::Duplicate {
                file: label,
                line: line_no,
                first_line: first,
                key: key.to_string(),
            });
        }
        first_line.insert(key.clone(), line_no);
        out.insert(key, meta);
    }
    Ok(out)
}

/// Train/test partition of a dataset at a cutoff date.
///
/// Train holds records whose selling period ended before the cutoff, test
/// holds records whose period starts on or after it. Issues selling across
/// the cutoff belong to neither and are listed in `straddling`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSlice {
    pub cutoff: NaiveDate,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub straddling: Vec<IssueKey>,
}

impl TimeSlice {
    pub fn new(ds: &Dataset, cutoff: NaiveDate) -> Result<Self> {
        let (lo, hi) = ds
            .date_range()
            .ok_or_else(|| Error::Empty("dataset has no sales records".into()))?;
        let last = hi.succ_opt().unwrap_or(hi);
        if cutoff < lo || cutoff > last {
            return Err(Error::invalid(
                "cutoff",
                format!("{cutoff} outside data range {lo}..={last}"),
            ));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, r) in ds.records().iter().enumerate() {
            if r.period_end < cutoff {
                train.push(i);
            } else if r.period_start >= cutoff {
                test.push(i);
            }
        }
        let straddling = ds
            .issue_meta()
            .values()
            .filter(|m| m.period_start < cutoff && m.period_end >= cutoff)
            .map(IssueMeta::key)
            .collect();
        Ok(TimeSlice {
            cutoff,
            train,
            test,
            straddling,
        })
    }

    pub fn train_issues(&self, ds: &Dataset) -> BTreeSet<IssueKey> {
        self.train.iter().map(|&i| ds.record(i).issue_key()).collect()
    }

    pub fn test_issues(&self, ds: &Dataset) -> BTreeSet<IssueKey> {
        self.test.iter().map(|&i| ds.record(i).issue_key()).collect()
    }
}

/// One ISO date per line; blank lines and `#` comments ignored.
pub fn load_holidays(path: &Path) -> Result<BTreeSet<NaiveDate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_holidays(&text, &file_label(path))
}

pub fn parse_holidays(text: &str, label: &str) -> Result<BTreeSet<NaiveDate>> {
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let d = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| Error::Schema {
            file: label.to_string(),
            line: i + 1,
            message: format!("invalid date `{line}`: {e}"),
        })?;
        out.insert(d);
    }
    Ok(out)
}

pub fn write_holidays(path: &Path, holidays: &BTreeSet<NaiveDate>) -> Result<()> {
    let mut s = String::new();
    for d in holidays {
        s.push_str(&d.to_string());
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

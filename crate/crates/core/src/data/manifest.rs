use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::image::BBox;
use crate::error::{Error, Result};
use crate::model::{Task, NUM_EXPRESSIONS};

pub const MANIFEST_HEADER: [&str; 6] = ["path", "source", "expr", "valence", "arousal", "bbox"];

/// Class indices follow this order.
pub const EXPRESSION_NAMES: [&str; NUM_EXPRESSIONS] =
    ["Neutral", "Anger", "Disgust", "Fear", "Happy", "Sad", "Surprise", "Other"];

/// Published per-class image counts of the four in-the-wild corpora.
/// Blank cells (classes a corpus does not cover) are zero.
pub const SOURCE_CLASS_COUNTS: [(Source, [usize; NUM_EXPRESSIONS]); 4] = [
    (Source::AffWild2, [177_498, 16_573, 10_810, 9_080, 95_633, 79_862, 31_637, 165_866]),
    (Source::AffectNet, [74_874, 24_882, 3_803, 6_378, 134_415, 25_459, 14_090, 3_750]),
    (Source::ExpW, [34_883, 3_671, 3_395, 1_088, 30_537, 10_559, 7_060, 0]),
    (Source::AiHub, [0, 59_696, 0, 59_262, 0, 0, 59_643, 0]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "AFFWILD2")]
    AffWild2,
    #[serde(rename = "AFFECTNET")]
    AffectNet,
    #[serde(rename = "EXPW")]
    ExpW,
    #[serde(rename = "AIHUB")]
    AiHub,
    #[serde(rename = "SYNTH")]
    Synth,
}

impl Source {
    pub const ALL: [Source; 5] = [Source::AffWild2, Source::AffectNet, Source::ExpW, Source::AiHub, Source::Synth];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::AffWild2 => "AFFWILD2",
            Source::AffectNet => "AFFECTNET",
            Source::ExpW => "EXPW",
            Source::AiHub => "AIHUB",
            Source::Synth => "SYNTH",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Source::ALL
            .into_iter()
            .find(|src| src.as_str() == s)
            .ok_or_else(|| format!("unknown source {s:?}"))
    }
}

/// One labeled image.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationRecord {
    pub path: String,
    pub source: Source,
    pub expr: Option<usize>,
    /// (valence, arousal), both in [-1, 1].
    pub va: Option<[f64; 2]>,
    pub bbox: Option<BBox>,
}

impl AnnotationRecord {
    /// Checks the record invariants; the message names the first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.path.is_empty() {
            return Err("empty path".into());
        }
        if let Some(e) = self.expr {
            if e >= NUM_EXPRESSIONS {
                return Err(format!("expr {e} out of range 0..{}", NUM_EXPRESSIONS - 1));
            }
        }
        if let Some(va) = self.va {
            for (name, v) in ["valence", "arousal"].iter().zip(va) {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(format!("{name} {v} outside [-1, 1]"));
                }
            }
        }
        if self.expr.is_none() && self.va.is_none() {
            return Err("record has neither expr nor a valence/arousal pair".into());
        }
        if let Some(b) = self.bbox {
            if b.w == 0 || b.h == 0 {
                return Err(format!("bbox {b:?} has zero extent"));
            }
        }
        Ok(())
    }

    pub fn usable_for(&self, task: Task) -> bool {
        match task {
            Task::Expr => self.expr.is_some(),
            Task::Va => self.va.is_some(),
        }
    }

    /// Image location; relative paths resolve against `root`.
    pub fn resolve(&self, root: &Path) -> PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            root.join(p)
        }
    }

    fn to_row(&self) -> [String; 6] {
        let opt = |v: Option<String>| v.unwrap_or_default();
        [
            self.path.clone(),
            self.source.to_string(),
            opt(self.expr.map(|e| e.to_string())),
            opt(self.va.map(|va| va[0].to_string())),
            opt(self.va.map(|va| va[1].to_string())),
            opt(self.bbox.map(|b| format!("{};{};{};{}", b.x, b.y, b.w, b.h))),
        ]
    }
}

fn parse_row(fields: &csv::StringRecord) -> std::result::Result<AnnotationRecord, (bool, String)> {
    let parse_err = |m: String| (false, m);
    if fields.len() != MANIFEST_HEADER.len() {
        return Err(parse_err(format!("expected {} fields, found {}", MANIFEST_HEADER.len(), fields.len())));
    }
    let source = fields[1].parse::<Source>().map_err(parse_err)?;
    let expr = match &fields[2] {
        "" => None,
        s => Some(s.parse::<usize>().map_err(|_| parse_err(format!("expr {s:?} is not a class index")))?),
    };
    let float = |name: &str, s: &str| -> std::result::Result<Option<f64>, (bool, String)> {
        if s.is_empty() {
            return Ok(None);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            Ok(v) => Err((true, format!("{name} {v} is not finite"))),
            Err(_) => Err(parse_err(format!("{name} {s:?} is not a number"))),
        }
    };
    let valence = float("valence", &fields[3])?;
    let arousal = float("arousal", &fields[4])?;
    let va = match (valence, arousal) {
        (Some(v), Some(a)) => Some([v, a]),
        (None, None) => None,
        _ => return Err((true, "valence and arousal must be present together".into())),
    };
    let bbox = match &fields[5] {
        "" => None,
        s => {
            let parts: Vec<usize> = s
                .split(';')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(format!("bbox {s:?} is not x;y;w;h")))?;
            match parts[..] {
                [x, y, w, h] => Some(BBox { x, y, w, h }),
                _ => return Err(parse_err(format!("bbox {s:?} is not x;y;w;h"))),
            }
        }
    };
    let record = AnnotationRecord {
        path: fields[0].to_string(),
        source,
        expr,
        va,
        bbox,
    };
    record.check().map_err(|m| (true, m))?;
    Ok(record)
}

/// Parses manifest CSV from any reader; `origin` labels errors.
pub fn parse_manifest<R: Read>(reader: R, origin: &str) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();
    let parse = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    match rows.next() {
        Some(Ok(h)) if h.iter().eq(MANIFEST_HEADER.iter().copied()) => {}
        Some(Ok(h)) => {
            let found: Vec<&str> = h.iter().collect();
            return Err(parse(1, format!("header must be {}, found {}", MANIFEST_HEADER.join(","), found.join(","))));
        }
        Some(Err(e)) => return Err(parse(1, e.to_string())),
        None => return Err(parse(1, "missing header".into())),
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        match parse_row(&row) {
            Ok(r) => out.push(r),
            Err((false, message)) => return Err(parse(line, message)),
            Err((true, message)) => {
                return Err(Error::Validation {
                    path: origin.to_string(),
                    line,
                    message,
                })
            }
        }
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_manifest_to<W: Write>(writer: W, records: &[AnnotationRecord]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(MANIFEST_HEADER)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()
}

pub fn write_manifest(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|f| write_manifest_to(std::io::BufWriter::new(f), records))
        .map_err(|e| Error::io(path, e))
}

/// Per-source bookkeeping from [`merge_sources`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SourceCount {
    pub total: usize,
    pub kept: usize,
}

impl SourceCount {
    pub fn dropped(&self) -> usize {
        self.total - self.kept
    }
}

#[derive(Clone, Debug)]
pub struct MergedManifest {
    pub records: Vec<AnnotationRecord>,
    pub counts: BTreeMap<Source, SourceCount>,
}

impl MergedManifest {
    /// Records per expression class (unlabeled records are skipped).
    pub fn class_histogram(&self) -> [usize; NUM_EXPRESSIONS] {
        let mut h = [0; NUM_EXPRESSIONS];
        for e in self.records.iter().filter_map(|r| r.expr) {
            h[e] += 1;
        }
        h
    }
}

/// Concatenates manifests in order and keeps the records usable for `task`.
/// Duplicate paths are kept.
pub fn merge_sources(manifests: &[Vec<AnnotationRecord>], task: Task) -> Result<MergedManifest> {
    let mut counts: BTreeMap<Source, SourceCount> = BTreeMap::new();
    let mut records = Vec::new();
    for r in manifests.iter().flatten() {
        let c = counts.entry(r.source).or_default();
        c.total += 1;
        if r.usable_for(task) {
            c.kept += 1;
            records.push(r.clone());
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!("no record carries {task} labels")));
    }
    Ok(MergedManifest { records, counts })
}

/// Label-only records reproducing a per-class histogram (for sampler and merge fixtures).
pub fn histogram_records(source: Source, counts: &[usize; NUM_EXPRESSIONS]) -> Vec<AnnotationRecord> {
    let mut out = Vec::with_capacity(counts.iter().sum());
    for (class, &n) in counts.iter().enumerate() {
        for i in 0..n {
            out.push(AnnotationRecord {
                path: format!("{source}/{class}_{i}.ppm"),
                source,
                expr: Some(class),
                va: None,
                bbox: None,
            });
        }
    }
    out
}

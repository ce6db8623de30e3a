//! Loading entity collections and ground truth from CSV / JSON-lines files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::datamodel::{EntityCollection, EntityProfile, GroundTruth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guesses the format from the file extension (`.jsonl`/`.json` vs anything else).
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json" | "ndjson" => Ok(Format::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?}"))),
        }
    }
}

/// Two collections to be linked, plus optional known matches.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub name: String,
    pub e1: EntityCollection,
    pub e2: EntityCollection,
    pub gt: Option<GroundTruth>,
}

impl DatasetBundle {
    /// Builds a bundle and checks that every ground-truth id resolves.
    pub fn new(
        name: impl Into<String>,
        e1: EntityCollection,
        e2: EntityCollection,
        gt: Option<GroundTruth>,
    ) -> Result<Self> {
        let bundle = Self {
            name: name.into(),
            e1,
            e2,
            gt,
        };
        bundle.indexed_ground_truth()?;
        Ok(bundle)
    }

    /// Ground truth as `(position in E1, position in E2)` pairs, if present.
    pub fn indexed_ground_truth(&self) -> Result<Option<Vec<(u32, u32)>>> {
        let Some(gt) = &self.gt else {
            return Ok(None);
        };
        gt.pairs()
            .iter()
            .map(|(a, b)| {
                let l = self.e1.position(a).ok_or_else(|| Error::UnresolvedId {
                    source_id: self.e1.source_id().to_string(),
                    id: a.clone(),
                })?;
                let r = self.e2.position(b).ok_or_else(|| Error::UnresolvedId {
                    source_id: self.e2.source_id().to_string(),
                    id: b.clone(),
                })?;
                Ok((l as u32, r as u32))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Loads one entity collection. Empty cells and JSON nulls become absent
/// attribute-value pairs.
pub fn load_collection(
    path: &Path,
    format: Format,
    id_column: &str,
    source_id: &str,
) -> Result<EntityCollection> {
    let entities = match format {
        Format::Csv => read_csv_profiles(path, id_column)?,
        Format::Jsonl => read_jsonl_profiles(path, id_column)?,
    };
    EntityCollection::new(source_id, entities)
}

fn read_csv_profiles(path: &Path, id_column: &str) -> Result<Vec<EntityProfile>> {
    let ctx = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let id_pos = headers.iter().position(|h| h == id_column);
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(&ctx, e))?;
        let id = id_pos
            .and_then(|p| record.get(p))
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::MissingIdColumn {
                column: id_column.to_string(),
                record: row + 1,
            })?;
        let mut profile = EntityProfile::new(id);
        for (col, value) in record.iter().enumerate() {
            if Some(col) == id_pos || value.is_empty() {
                continue;
            }
            let name = headers
                .get(col)
                .map(str::to_string)
                .unwrap_or_else(|| format!("col{col}"));
            profile.attributes.push((name, value.to_string()));
        }
        out.push(profile);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        return Error::parse(path.display().to_string(), "I/O failure");
    }
    Error::parse(path.display().to_string(), e)
}

fn json_value_text(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) if s.is_empty() => None,
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn read_jsonl_profiles(path: &Path, id_column: &str) -> Result<Vec<EntityProfile>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = format!("{}:{}", path.display(), lineno + 1);
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::parse(&ctx, e))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::parse(&ctx, "record is not a JSON object"))?;
        let id = obj
            .get(id_column)
            .and_then(json_value_text)
            .ok_or_else(|| Error::MissingIdColumn {
                column: id_column.to_string(),
                record: out.len() + 1,
            })?;
        let mut profile = EntityProfile::new(id);
        for (name, v) in obj {
            if name == id_column {
                continue;
            }
            if let Some(text) = json_value_text(v) {
                profile.attributes.push((name.clone(), text));
            }
        }
        out.push(profile);
    }
    Ok(out)
}

/// Ground truth read from a file, with the count of collapsed duplicate rows.
#[derive(Debug, Clone)]
pub struct LoadedGroundTruth {
    pub gt: GroundTruth,
    pub duplicates: usize,
}

/// Reads a two-column `(id1, id2)` CSV.
///
/// When the collections are given, a first row that does not resolve against
/// them is taken as a header and skipped; without collections every row is
/// data unless it reads `id1,id2`-like column names.
pub fn load_ground_truth(
    path: &Path,
    collections: Option<(&EntityCollection, &EntityCollection)>,
) -> Result<LoadedGroundTruth> {
    let ctx = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(&ctx, e))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::parse(&ctx, "ground-truth row needs two columns"));
        }
        rows.push((record[0].to_string(), record[1].to_string()));
    }
    if let Some((a, b)) = rows.first() {
        let is_header = match collections {
            Some((e1, e2)) => e1.position(a).is_none() || e2.position(b).is_none(),
            None => looks_like_header(a) && looks_like_header(b),
        };
        if is_header {
            rows.remove(0);
        }
    }
    let (gt, duplicates) = GroundTruth::from_pairs(rows);
    Ok(LoadedGroundTruth { gt, duplicates })
}

fn looks_like_header(cell: &str) -> bool {
    let lower = cell.to_ascii_lowercase();
    ["id", "id1", "id2", "d1", "d2", "ltable_id", "rtable_id", "left", "right", "source", "target"]
        .contains(&lower.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FindingKind {
    UnresolvedId,
    CleanCleanViolation,
}

#[derive(Debug, Clone, Serialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub e1_entities: usize,
    pub e2_entities: usize,
    pub gt_pairs: usize,
    /// Hard errors: ground-truth ids that do not resolve.
    pub violations: Vec<Finding>,
    /// Ids matched more than once on one side.
    pub warnings: Vec<Finding>,
}

/// Summarizes a bundle and checks the record-linkage assumptions on its ground truth.
pub fn validate_bundle(
    e1: &EntityCollection,
    e2: &EntityCollection,
    gt: Option<&GroundTruth>,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let mut left_uses: HashMap<&str, usize> = HashMap::new();
    let mut right_uses: HashMap<&str, usize> = HashMap::new();
    if let Some(gt) = gt {
        for (a, b) in gt.pairs() {
            if e1.position(a).is_none() {
                violations.push(Finding {
                    kind: FindingKind::UnresolvedId,
                    detail: format!("{a:?} not in {}", e1.source_id()),
                });
            }
            if e2.position(b).is_none() {
                violations.push(Finding {
                    kind: FindingKind::UnresolvedId,
                    detail: format!("{b:?} not in {}", e2.source_id()),
                });
            }
            *left_uses.entry(a).or_default() += 1;
            *right_uses.entry(b).or_default() += 1;
        }
    }
    for (side, uses) in [(e1.source_id(), &left_uses), (e2.source_id(), &right_uses)] {
        let mut repeated: Vec<_> = uses.iter().filter(|(_, &n)| n > 1).collect();
        repeated.sort();
        for (id, n) in repeated {
            warnings.push(Finding {
                kind: FindingKind::CleanCleanViolation,
                detail: format!("{id:?} of {side} appears in {n} ground-truth pairs"),
            });
        }
    }
    ValidationReport {
        e1_entities: e1.len(),
        e2_entities: e2.len(),
        gt_pairs: gt.map_or(0, GroundTruth::len),
        violations,
        warnings,
    }
}

/// Writes a collection as canonical CSV: `id` first, then the attribute
/// names in order of first appearance.
pub fn write_collection_csv(c: &EntityCollection, path: &Path, id_column: &str) -> Result<()> {
    let mut columns: Vec<&str> = Vec::new();
    for e in c.entities() {
        for (name, _) in &e.attributes {
            if !columns.contains(&name.as_str()) {
                columns.push(name);
            }
        }
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<&str> = std::iter::once(id_column).chain(columns.iter().copied()).collect();
    writer.write_record(&header).map_err(|e| csv_error(path, e))?;
    for e in c.entities() {
        let mut row = vec![e.id.as_str()];
        for col in &columns {
            let value = e
                .attributes
                .iter()
                .find(|(n, _)| n == col)
                .map_or("", |(_, v)| v.as_str());
            row.push(value);
        }
        writer.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes ground truth as a headered two-column CSV.
pub fn write_ground_truth_csv(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::from("id1,id2\n");
    for (a, b) in gt.pairs() {
        body.push_str(&csv_field(a));
        body.push(',');
        body.push_str(&csv_field(b));
        body.push('\n');
    }
    file.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn csv_rows_become_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("id,name,city\n");
        for i in 0..340 {
            body.push_str(&format!("{i},name {i},\n"));
        }
        let p = write(&dir, "e1.csv", &body);
        let c = load_collection(&p, Format::Csv, "id", "E1").unwrap();
        assert_eq!(c.len(), 340);
        // empty city cell is an absent pair
        assert_eq!(c.get(0).attributes, vec![("name".into(), "name 0".into())]);
    }

    #[test]
    fn csv_with_only_id_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "id\n7\n");
        let c = load_collection(&p, Format::Csv, "id", "E1").unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.get(0).attributes.is_empty());
    }

    #[test]
    fn missing_id_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "key,name\n1,a\n");
        assert!(matches!(
            load_collection(&p, Format::Csv, "id", "E1"),
            Err(Error::MissingIdColumn { .. })
        ));
    }

    #[test]
    fn jsonl_duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.jsonl",
            "{\"id\":1,\"name\":\"a\"}\n{\"id\":2,\"name\":null}\n{\"id\":1,\"name\":\"c\"}\n",
        );
        assert!(matches!(
            load_collection(&p, Format::Jsonl, "id", "E2"),
            Err(Error::DuplicateId { .. })
        ));
    }

    #[test]
    fn jsonl_nulls_are_absent() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.jsonl", "{\"id\":1,\"name\":null,\"year\":2010}\n");
        let c = load_collection(&p, Format::Jsonl, "id", "E2").unwrap();
        assert_eq!(c.get(0).id, "1");
        assert_eq!(c.get(0).attributes, vec![("year".into(), "2010".into())]);
    }

    #[test]
    fn malformed_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.jsonl", "{\"id\":1\n");
        assert!(matches!(
            load_collection(&p, Format::Jsonl, "id", "E2"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn ground_truth_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::new();
        for i in 0..89 {
            body.push_str(&format!("{i},{}\n", i * 2));
        }
        let p = write(&dir, "gt.csv", &body);
        assert_eq!(load_ground_truth(&p, None).unwrap().gt.len(), 89);

        let empty = write(&dir, "empty.csv", "");
        assert!(load_ground_truth(&empty, None).unwrap().gt.is_empty());

        let dup = write(&dir, "dup.csv", "a,x\na,x\n");
        let loaded = load_ground_truth(&dup, None).unwrap();
        assert_eq!(loaded.gt.len(), 1);
        assert_eq!(loaded.duplicates, 1);
    }

    #[test]
    fn ground_truth_header_detection_by_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let e1 = EntityCollection::new("E1", vec![EntityProfile::new("a")]).unwrap();
        let e2 = EntityCollection::new("E2", vec![EntityProfile::new("x")]).unwrap();
        let p = write(&dir, "gt.csv", "left_key,right_key\na,x\n");
        let loaded = load_ground_truth(&p, Some((&e1, &e2))).unwrap();
        assert_eq!(loaded.gt.pairs(), &[("a".to_string(), "x".to_string())]);
        let p = write(&dir, "gt2.csv", "a,x\n");
        assert_eq!(load_ground_truth(&p, Some((&e1, &e2))).unwrap().gt.len(), 1);
    }

    fn coll(source: &str, n: usize) -> EntityCollection {
        EntityCollection::new(
            source,
            (0..n).map(|i| EntityProfile::new(i.to_string())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn validation_report_counts() {
        let e1 = coll("E1", 340);
        let e2 = coll("E2", 2257);
        let (gt, _) = GroundTruth::from_pairs((0..89).map(|i| (i.to_string(), (i * 3).to_string())));
        let report = validate_bundle(&e1, &e2, Some(&gt));
        assert_eq!(
            (report.e1_entities, report.e2_entities, report.gt_pairs),
            (340, 2257, 89)
        );
        assert!(report.violations.is_empty());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn validation_flags_unresolved_and_reuse() {
        let e1 = coll("E1", 3);
        let e2 = coll("E2", 3);
        let (gt, _) = GroundTruth::from_pairs(vec![
            ("0".to_string(), "9".to_string()),
            ("1".to_string(), "1".to_string()),
            ("1".to_string(), "2".to_string()),
        ]);
        let report = validate_bundle(&e1, &e2, Some(&gt));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, FindingKind::UnresolvedId);
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].kind, FindingKind::CleanCleanViolation);
    }

    #[test]
    fn canonical_csv_round_trip_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(
            &dir,
            "src.csv",
            "name,id,city\n\"a, b\",1,\n\"q\"\"x\",2,rome\n",
        );
        let c1 = load_collection(&src, Format::Csv, "id", "E1").unwrap();
        let p1 = dir.path().join("one.csv");
        write_collection_csv(&c1, &p1, "id").unwrap();
        let c2 = load_collection(&p1, Format::Csv, "id", "E1").unwrap();
        let p2 = dir.path().join("two.csv");
        write_collection_csv(&c2, &p2, "id").unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(c1.entities(), c2.entities());
    }
}

//! Input parsers and output writers for the CLI's text formats.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uqkit_core::MetricId;

use crate::records::validate_item_id;
use crate::CliError;

/// Placeholder replaced by the item text in every prompt variant.
pub const INPUT_PLACEHOLDER: &str = "{input}";

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).expect("outputs always serialize");
    body.push('\n');
    write_atomic(path, body.as_bytes())
}

fn read_text(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {what} file {}: {e}", path.display())))
}

/// Prompt variants: a JSON list of strings, or one prompt per line. Each
/// variant must contain [`INPUT_PLACEHOLDER`] exactly once.
pub fn read_variants(path: &Path) -> Result<Vec<String>, CliError> {
    let text = read_text(path, "variants")?;
    let at = |line: usize, msg: String| CliError::Usage(format!("{}:{line}: {msg}", path.display()));
    let numbered: Vec<(usize, String)> = if text.trim_start().starts_with('[') {
        let list: Vec<String> = serde_json::from_str(&text).map_err(|e| at(e.line(), e.to_string()))?;
        // JSON lists carry no useful line per element; report list positions.
        list.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect()
    } else {
        let lines: Vec<&str> = text.lines().collect();
        let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
        lines[..last].iter().enumerate().map(|(i, l)| (i + 1, l.to_string())).collect()
    };
    if numbered.is_empty() {
        return Err(CliError::Usage(format!("{}: no prompt variants", path.display())));
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (line, v) in &numbered {
        if v.trim().is_empty() {
            return Err(at(*line, "empty prompt variant".into()));
        }
        if v.matches(INPUT_PLACEHOLDER).count() != 1 {
            return Err(at(*line, format!("variant must contain {INPUT_PLACEHOLDER} exactly once")));
        }
        if let Some(first) = seen.insert(v.as_str(), *line) {
            return Err(at(*line, format!("duplicates the variant at {first}")));
        }
    }
    Ok(numbered.into_iter().map(|(_, v)| v).collect())
}

/// Fills the placeholder of `variant` with the item text.
pub fn render_prompt(variant: &str, input: &str) -> String {
    variant.replacen(INPUT_PLACEHOLDER, input, 1)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub text: String,
}

/// Items CSV with header `item_id,text`.
pub fn read_items(path: &Path) -> Result<Vec<Item>, CliError> {
    let text = read_text(path, "items")?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut items: Vec<Item> = Vec::new();
    let mut seen = BTreeSet::new();
    for row in reader.deserialize::<Item>() {
        let item = row.map_err(|e| csv_error(path, &e))?;
        let line = items.len() + 2;
        validate_item_id(&item.item_id)
            .map_err(|m| CliError::Usage(format!("{}:{line}: {m}", path.display())))?;
        if item.text.trim().is_empty() {
            return Err(CliError::Usage(format!("{}:{line}: empty item text", path.display())));
        }
        if !seen.insert(item.item_id.clone()) {
            return Err(CliError::Usage(format!(
                "{}:{line}: duplicate item id {:?}",
                path.display(),
                item.item_id
            )));
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(CliError::Usage(format!("{}: no items", path.display())));
    }
    Ok(items)
}

fn csv_error(path: &Path, e: &csv::Error) -> CliError {
    match e.position() {
        Some(p) => CliError::Usage(format!("{}:{}: {e}", path.display(), p.line())),
        None => CliError::Usage(format!("{}: {e}", path.display())),
    }
}

/// One row of a scores CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub item_id: String,
    pub metric_id: String,
    pub value: f64,
}

pub fn scores_csv(rows: &[ScoreRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV writes cannot fail");
    }
    w.into_inner().expect("in-memory CSV writes cannot fail")
}

/// Scores keyed by metric, then item.
pub type ScoreTable = BTreeMap<MetricId, BTreeMap<String, f64>>;

/// Reads `item_id,metric_id,value` rows. Values must be finite and each
/// (item, metric) pair may appear once.
pub fn read_scores(path: &Path) -> Result<ScoreTable, CliError> {
    let text = read_text(path, "scores")?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut table = ScoreTable::new();
    for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, &e))?;
        let line = i + 2;
        let bad = |m: String| CliError::Usage(format!("{}:{line}: {m}", path.display()));
        let metric: MetricId = row
            .metric_id
            .parse()
            .map_err(|_| bad(format!("unknown metric id {:?}", row.metric_id)))?;
        if !row.value.is_finite() {
            return Err(bad("value must be finite".into()));
        }
        if table.entry(metric).or_default().insert(row.item_id.clone(), row.value).is_some() {
            return Err(bad(format!("duplicate score for {} / {}", row.item_id, row.metric_id)));
        }
    }
    if table.is_empty() {
        return Err(CliError::Usage(format!("{}: no score rows", path.display())));
    }
    Ok(table)
}

/// One row of the gold-label CSV. `accuracy`, when present, is used as the
/// item's accuracy directly instead of being measured from run records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRow {
    pub item_id: String,
    pub gold_label: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub accuracy: Option<f64>,
}

pub fn read_gold(path: &Path) -> Result<BTreeMap<String, GoldRow>, CliError> {
    let text = read_text(path, "gold")?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, row) in reader.deserialize::<GoldRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, &e))?;
        let line = i + 2;
        if let Some(a) = row.accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(CliError::Usage(format!(
                    "{}:{line}: accuracy {a} is outside [0, 1]",
                    path.display()
                )));
            }
        }
        if out.insert(row.item_id.clone(), row).is_some() {
            return Err(CliError::Usage(format!("{}:{line}: duplicate item id", path.display())));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn variants_from_lines_and_json() {
        let f = file("Q1 {input}\nQ2 {input}\n\n");
        assert_eq!(read_variants(f.path()).unwrap(), ["Q1 {input}", "Q2 {input}"]);
        let f = file(r#"["A {input}", "B {input}"]"#);
        assert_eq!(read_variants(f.path()).unwrap().len(), 2);
    }

    #[test]
    fn variant_errors_name_the_line() {
        let cases = [
            ("A {input}\n\nB {input}\n", ":2: empty"),
            ("A {input}\nno placeholder\n", ":2: variant must contain"),
            ("A {input}\nB {input}\nA {input}\n", ":3: duplicates the variant at 1"),
            ("[\"A {input}\",\n 3]", ":2: "),
        ];
        for (text, needle) in cases {
            let f = file(text);
            let err = read_variants(f.path()).unwrap_err();
            assert_eq!(err.exit_code(), 2);
            assert!(err.to_string().contains(needle), "{err} lacks {needle}");
        }
    }

    #[test]
    fn items_and_scores_round_trip() {
        let f = file("item_id,text\na,hello\nb,\"x, y\"\n");
        let items = read_items(f.path()).unwrap();
        assert_eq!(items[1].text, "x, y");
        let dup = file("item_id,text\na,one\na,two\n");
        assert!(read_items(dup.path()).unwrap_err().to_string().contains(":3: duplicate"));
        let rows = vec![
            ScoreRow { item_id: "a".into(), metric_id: "brier".into(), value: 0.25 },
            ScoreRow { item_id: "b".into(), metric_id: "luq".into(), value: 0.1 + 0.2 },
        ];
        let f = file(std::str::from_utf8(&scores_csv(&rows)).unwrap());
        let table = read_scores(f.path()).unwrap();
        assert_eq!(table[&MetricId::Brier]["a"], 0.25);
        assert_eq!(table[&MetricId::Luq]["b"], 0.1 + 0.2);
    }

    #[test]
    fn gold_accuracy_column_is_optional() {
        let f = file("item_id,gold_label,category\na,yes,news\n");
        let g = read_gold(f.path()).unwrap();
        assert_eq!(g["a"].accuracy, None);
        let f = file("item_id,gold_label,category,accuracy\na,yes,news,0.5\nb,no,news,\n");
        let g = read_gold(f.path()).unwrap();
        assert_eq!((g["a"].accuracy, g["b"].accuracy), (Some(0.5), None));
        let f = file("item_id,gold_label,category,accuracy\na,yes,news,1.5\n");
        assert!(read_gold(f.path()).is_err());
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "second");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}

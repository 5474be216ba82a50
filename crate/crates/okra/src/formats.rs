//! Readers and writers for every file the pipeline exchanges. Writers are
//! pure functions of their input so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use okra_core::kg::{qualified_key, Binning, Column, ColumnRole, EntityKind, KnowledgeGraph, Table, Triple};
use okra_core::metrics::EvalReport;
use okra_core::model::{ModelConfig, ModelParams};
use okra_core::train::{HistoryRow, HistorySplit, TrainHistory, HISTORY_COLUMNS};

use crate::pipeline::LabelRow;
use crate::Error;

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Escape a TSV cell: backslash, tab, newline and carriage return.
pub fn escape(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len());
    for ch in cell.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(cell: &str) -> Result<String, String> {
    let mut out = String::with_capacity(cell.len());
    let mut chars = cell.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape sequence \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

/// Split into lines, dropping one trailing newline; numbering starts at 1.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.strip_suffix('\n')
        .unwrap_or(text)
        .split('\n')
        .enumerate()
        .filter(|(_, l)| !text.is_empty() || !l.is_empty())
        .map(|(i, l)| (i + 1, l))
}

fn cells(path: &Path, line: usize, raw: &str, expected: usize) -> Result<Vec<String>, Error> {
    let parts: Vec<&str> = raw.split('\t').collect();
    if parts.len() != expected {
        return Err(format_err(path, line, format!("expected {expected} columns, found {}", parts.len())));
    }
    parts
        .into_iter()
        .map(|c| unescape(c).map_err(|m| format_err(path, line, m)))
        .collect()
}

fn expect_header(path: &Path, text: &str, header: &[&str]) -> Result<(), Error> {
    let first = text.split('\n').next().unwrap_or("");
    if first != header.join("\t") {
        return Err(format_err(path, 1, format!("expected header {:?}", header.join("\t"))));
    }
    Ok(())
}

/// Header cell of a table column: `name:key=kind`, `name:ref=kind`,
/// `name:attr`, `name:text` or `name:literal=e1;e2;…`.
pub fn column_header(col: &Column) -> String {
    let role = match &col.role {
        ColumnRole::Key(k) => format!("key={k}"),
        ColumnRole::Ref(k) => format!("ref={k}"),
        ColumnRole::Attr => "attr".to_string(),
        ColumnRole::Text => "text".to_string(),
        ColumnRole::Literal(b) => {
            let edges: Vec<String> = b.edges.iter().map(|e| e.to_string()).collect();
            format!("literal={}", edges.join(";"))
        }
    };
    format!("{}:{role}", col.name)
}

pub fn parse_column_header(cell: &str) -> Result<Column, String> {
    let (name, role) = cell
        .rsplit_once(':')
        .ok_or_else(|| format!("column {cell:?} lacks a :role suffix"))?;
    if name.is_empty() {
        return Err(format!("column {cell:?} has an empty name"));
    }
    let (tag, arg) = match role.split_once('=') {
        Some((t, a)) => (t, Some(a)),
        None => (role, None),
    };
    let kind = |a: Option<&str>| -> Result<EntityKind, String> {
        a.ok_or_else(|| format!("column {cell:?} needs an entity kind"))?
            .parse()
            .map_err(|e: okra_core::kg::KgError| e.to_string())
    };
    let role = match tag {
        "key" => ColumnRole::Key(kind(arg)?),
        "ref" => ColumnRole::Ref(kind(arg)?),
        "attr" => ColumnRole::Attr,
        "text" => ColumnRole::Text,
        "literal" => {
            let edges = arg
                .unwrap_or("")
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| format!("bad bin edge {s:?} in {cell:?}")))
                .collect::<Result<Vec<_>, _>>()?;
            ColumnRole::Literal(Binning { edges })
        }
        other => return Err(format!("unknown column role {other:?} in {cell:?}")),
    };
    Ok(Column::new(name, role))
}

pub fn write_table(table: &Table) -> String {
    let mut out = String::new();
    let header: Vec<String> = table.columns.iter().map(column_header).collect();
    out.push_str(&header.join("\t"));
    out.push('\n');
    for row in &table.rows {
        let row: Vec<String> = row.iter().map(|c| escape(c)).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Parse a table file; the table is named after the file stem.
pub fn read_table(path: &Path, text: &str) -> Result<Table, Error> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| format_err(path, 0, "table file needs a UTF-8 name"))?
        .to_string();
    let mut it = lines(text);
    let (_, header) = it.next().ok_or_else(|| format_err(path, 1, "missing header"))?;
    let columns = header
        .split('\t')
        .map(parse_column_header)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|m| format_err(path, 1, m))?;
    let mut rows = Vec::new();
    for (line, raw) in it {
        rows.push(cells(path, line, raw, columns.len())?);
    }
    Ok(Table { name, columns, rows })
}

const LABEL_HEADER: [&str; 3] = ["candidate", "vacancy", "label"];

pub fn write_labels(rows: &[LabelRow]) -> String {
    let mut out = LABEL_HEADER.join("\t");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}", escape(&r.candidate), escape(&r.vacancy), r.label);
    }
    out
}

pub fn read_labels(path: &Path, text: &str) -> Result<Vec<LabelRow>, Error> {
    expect_header(path, text, &LABEL_HEADER)?;
    lines(text)
        .skip(1)
        .map(|(line, raw)| {
            let c = cells(path, line, raw, 3)?;
            let label = c[2]
                .parse::<i8>()
                .map_err(|_| format_err(path, line, format!("label {:?} is not an integer", c[2])))?;
            Ok(LabelRow {
                candidate: c[0].clone(),
                vacancy: c[1].clone(),
                label,
            })
        })
        .collect()
}

/// Two-column `raw → name` relation renames.
pub fn write_relation_names(names: &BTreeMap<String, String>) -> String {
    let mut out = String::from("raw\tname\n");
    for (raw, name) in names {
        let _ = writeln!(out, "{}\t{}", escape(raw), escape(name));
    }
    out
}

pub fn read_relation_names(path: &Path, text: &str) -> Result<BTreeMap<String, String>, Error> {
    expect_header(path, text, &["raw", "name"])?;
    lines(text)
        .skip(1)
        .map(|(line, raw)| {
            let c = cells(path, line, raw, 2)?;
            Ok((c[0].clone(), c[1].clone()))
        })
        .collect()
}

const ENTITY_HEADER: [&str; 4] = ["key", "kind", "attrs", "payload"];
const TRIPLE_HEADER: [&str; 3] = ["subject_key", "predicate", "object_key"];

/// Entities in id order, so reading them back reproduces every id.
pub fn write_entities(graph: &KnowledgeGraph) -> String {
    let mut out = ENTITY_HEADER.join("\t");
    out.push('\n');
    for e in graph.entities() {
        let attrs: Vec<String> = e.attrs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            escape(&e.key),
            e.kind,
            escape(&attrs.join(";")),
            escape(e.payload.as_deref().unwrap_or(""))
        );
    }
    out
}

/// Relation vocabulary in id order.
pub fn write_relations(graph: &KnowledgeGraph) -> String {
    let mut out = String::from("id\tname\n");
    for r in graph.relations() {
        let _ = writeln!(out, "{}\t{}", r.id.0, escape(&r.name));
    }
    out
}

/// Triples by qualified keys, sorted lexicographically.
pub fn write_triples(graph: &KnowledgeGraph) -> String {
    let key = |id| graph.entity(id).qualified_key();
    let mut rows: Vec<String> = graph
        .triples()
        .iter()
        .map(|t| {
            format!(
                "{}\t{}\t{}",
                escape(&key(t.subject)),
                escape(graph.relation_name(t.predicate)),
                escape(&key(t.object))
            )
        })
        .collect();
    rows.sort();
    let mut out = TRIPLE_HEADER.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Inputs of [`read_graph`]: (path, contents) of each of the three files.
pub struct GraphFiles<'a> {
    pub entities: (&'a Path, &'a str),
    pub relations: (&'a Path, &'a str),
    pub triples: (&'a Path, &'a str),
}

pub fn read_graph(files: GraphFiles<'_>) -> Result<KnowledgeGraph, Error> {
    let mut g = KnowledgeGraph::new();
    let (path, text) = files.relations;
    expect_header(path, text, &["id", "name"])?;
    for (line, raw) in lines(text).skip(1) {
        let c = cells(path, line, raw, 2)?;
        let rel = g.register_relation(&c[1]);
        if c[0] != rel.id.0.to_string() {
            return Err(format_err(path, line, "relation ids must be dense and in order"));
        }
    }
    let (path, text) = files.entities;
    expect_header(path, text, &ENTITY_HEADER)?;
    for (line, raw) in lines(text).skip(1) {
        let c = cells(path, line, raw, 4)?;
        let kind: EntityKind = c[1].parse().map_err(|e: okra_core::kg::KgError| format_err(path, line, e.to_string()))?;
        let before = g.entity_count();
        let id = g.add_entity(kind, &c[0]);
        if g.entity_count() == before {
            return Err(format_err(path, line, format!("duplicate entity {}", qualified_key(kind, &c[0]))));
        }
        for pair in c[2].split(';').filter(|s| !s.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format_err(path, line, format!("attribute {pair:?} lacks '='")))?;
            g.set_attr(id, k, v)?;
        }
        if !c[3].is_empty() {
            g.set_payload(id, &c[3])?;
        }
    }
    let (path, text) = files.triples;
    expect_header(path, text, &TRIPLE_HEADER)?;
    for (line, raw) in lines(text).skip(1) {
        let c = cells(path, line, raw, 3)?;
        let entity = |k: &str| {
            g.lookup_qualified(k)
                .ok_or_else(|| format_err(path, line, format!("unknown entity {k:?}")))
        };
        let (s, o) = (entity(&c[0])?, entity(&c[2])?);
        let p = g
            .relation_id(&c[1])
            .ok_or_else(|| format_err(path, line, format!("unknown relation {:?}", c[1])))?;
        g.insert_triple(Triple::new(s, p, o))?;
    }
    Ok(g)
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>, Error> {
    lines(text)
        .filter(|(_, l)| !l.is_empty())
        .map(|(line, raw)| serde_json::from_str(raw).map_err(|e| format_err(path, line, e.to_string())))
        .collect()
}

pub fn write_json<T: Serialize>(item: &T) -> String {
    let mut s = serde_json::to_string_pretty(item).expect("serializable");
    s.push('\n');
    s
}

pub fn read_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, Error> {
    serde_json::from_str(text).map_err(|e| format_err(path, e.line(), e.to_string()))
}

/// Feature sidecar: `feature_ref → payload`.
pub fn write_features(features: &BTreeMap<String, String>) -> String {
    let mut out = String::from("feature_ref\tpayload\n");
    for (k, v) in features {
        let _ = writeln!(out, "{}\t{}", escape(k), escape(v));
    }
    out
}

pub fn read_features(path: &Path, text: &str) -> Result<BTreeMap<String, String>, Error> {
    expect_header(path, text, &["feature_ref", "payload"])?;
    lines(text)
        .skip(1)
        .map(|(line, raw)| {
            let c = cells(path, line, raw, 2)?;
            Ok((c[0].clone(), c[1].clone()))
        })
        .collect()
}

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"OKRACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A decoded checkpoint: the digest of the run that wrote it, the model
/// config and the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_digest: String,
    pub model: ModelConfig,
    pub params: ModelParams,
}

/// magic ‖ version u32 ‖ digest (64 hex bytes) ‖ config length u64 ‖
/// config JSON ‖ value count u64 ‖ f64 values, all little-endian, values
/// in parameter declaration order.
pub fn write_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let config = serde_json::to_vec(&ckpt.model).expect("config serializes");
    let values: Vec<f64> = okra_core::train::flatten(&ckpt.params);
    let mut out = Vec::with_capacity(96 + config.len() + 8 * values.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    assert_eq!(ckpt.config_digest.len(), 64, "digest is 64 hex characters");
    out.extend_from_slice(ckpt.config_digest.as_bytes());
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_checkpoint(path: &Path, bytes: &[u8]) -> Result<Checkpoint, Error> {
    let bad = |m: &str| format_err(path, 0, m);
    let mut rest = bytes;
    let mut take = |n: usize| -> Result<&[u8], Error> {
        if rest.len() < n {
            return Err(bad("truncated checkpoint"));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    if take(8)? != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let digest = std::str::from_utf8(take(64)?)
        .map_err(|_| bad("digest is not ASCII"))?
        .to_string();
    let config_len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let model: ModelConfig = serde_json::from_slice(take(config_len)?).map_err(|e| bad(&e.to_string()))?;
    let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let blob = take(count.checked_mul(8).ok_or_else(|| bad("value count overflows"))?)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after the parameter blob"));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let template = ModelParams::init(&model)?;
    if template.param_count() != values.len() {
        return Err(bad(&format!(
            "checkpoint holds {} values, the config needs {}",
            values.len(),
            template.param_count()
        )));
    }
    Ok(Checkpoint {
        config_digest: digest,
        params: okra_core::train::unflatten(&template, &values),
        model,
    })
}

pub fn write_history(history: &TrainHistory) -> String {
    let mut out = HISTORY_COLUMNS.join(",");
    out.push('\n');
    for r in &history.rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.split.as_str(), r.ndcg10, r.loss, r.seconds);
    }
    out
}

pub fn read_history(path: &Path, text: &str) -> Result<TrainHistory, Error> {
    let header = text.split('\n').next().unwrap_or("");
    if header != HISTORY_COLUMNS.join(",") {
        return Err(format_err(path, 1, "unexpected history header"));
    }
    let rows = lines(text)
        .skip(1)
        .map(|(line, raw)| {
            let c: Vec<&str> = raw.split(',').collect();
            if c.len() != HISTORY_COLUMNS.len() {
                return Err(format_err(path, line, "wrong column count"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format_err(path, line, format!("bad number {s:?}")));
            Ok(HistoryRow {
                epoch: c[0].parse().map_err(|_| format_err(path, line, "bad epoch"))?,
                split: c[1].parse::<HistorySplit>().map_err(|_| format_err(path, line, "bad split"))?,
                ndcg10: num(c[2])?,
                loss: num(c[3])?,
                seconds: num(c[4])?,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(TrainHistory { rows })
}

/// Long-format `model,metric,value` rows for external charting.
pub fn plot_rows(report: &EvalReport) -> Vec<(String, String, f64)> {
    let mut rows = Vec::new();
    let m = &report.model;
    for (k, v) in report.cutoffs.iter().zip(&report.ndcg) {
        rows.push((m.clone(), format!("ndcg@{k}"), *v));
    }
    for g in &report.groups {
        for (k, v) in report.cutoffs.iter().zip(&g.ndcg) {
            rows.push((m.clone(), format!("ndcg@{k}[{}]", g.group), *v));
        }
    }
    if let Some(dp) = report.performance_disparity {
        rows.push((m.clone(), "delta_p".to_string(), dp));
    }
    rows.push((m.clone(), "delta_v".to_string(), report.disparate_visibility));
    rows.push((m.clone(), "catalog_protected_fraction".to_string(), report.catalog_protected_fraction));
    rows
}

pub fn write_plotdata(report: &EvalReport) -> String {
    let mut out = String::from("model,metric,value\n");
    for (model, metric, value) in plot_rows(report) {
        let _ = writeln!(out, "{model},{metric},{value}");
    }
    out
}

/// Per-stage record written next to the stage's outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub stage: String,
    pub config_digest: String,
    pub seed: u64,
    /// file name → hex SHA-256 of its bytes
    pub files: BTreeMap<String, String>,
}

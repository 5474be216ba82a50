//! Typed knowledge graph built from tables, with transitive / inverse /
//! subclass inference closure.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KgError {
    #[error("table {table}, column {column}: unknown {kind} key {key:?}")]
    UnknownEntityRef {
        table: String,
        column: String,
        kind: EntityKind,
        key: String,
    },
    #[error("relation {0:?} is not registered")]
    UnknownRelation(String),
    #[error("relation id {0} is not registered")]
    UnknownRelationId(u16),
    #[error("entity id {0} does not exist")]
    UnknownEntity(u32),
    #[error("unknown entity kind {0:?}")]
    UnknownKind(String),
    #[error("table {table}, column {column}: literal {value:?} is not numeric")]
    InvalidLiteral {
        table: String,
        column: String,
        value: String,
    },
    #[error("table {table}: row {row} has {got} cells, expected {expected}")]
    RaggedRow {
        table: String,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("inference added more than {budget} triples without reaching a fixpoint")]
    CycleBudgetExceeded { budget: usize },
}

pub type Result<T> = core::result::Result<T, KgError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Candidate,
    Vacancy,
    Skill,
    Language,
    License,
    Location,
    EducationLevel,
    JobType,
    WorkExperience,
    TextDoc,
    /// Binned literal cell (salary range, years of experience, ...).
    Value,
}

impl EntityKind {
    pub const ALL: [EntityKind; 11] = [
        EntityKind::Candidate,
        EntityKind::Vacancy,
        EntityKind::Skill,
        EntityKind::Language,
        EntityKind::License,
        EntityKind::Location,
        EntityKind::EducationLevel,
        EntityKind::JobType,
        EntityKind::WorkExperience,
        EntityKind::TextDoc,
        EntityKind::Value,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Candidate => "candidate",
            EntityKind::Vacancy => "vacancy",
            EntityKind::Skill => "skill",
            EntityKind::Language => "language",
            EntityKind::License => "license",
            EntityKind::Location => "location",
            EntityKind::EducationLevel => "education_level",
            EntityKind::JobType => "job_type",
            EntityKind::WorkExperience => "work_experience",
            EntityKind::TextDoc => "text_doc",
            EntityKind::Value => "value",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| KgError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityKind,
    /// External key, unique per kind.
    pub key: String,
    pub payload: Option<String>,
    pub attrs: BTreeMap<String, String>,
}

impl Entity {
    /// Graph-wide unique reference `kind:key`.
    pub fn qualified_key(&self) -> String {
        qualified_key(self.kind, &self.key)
    }
}

pub fn qualified_key(kind: EntityKind, key: &str) -> String {
    format!("{}:{}", kind.as_str(), key)
}

/// Split a `kind:key` reference.
pub fn parse_qualified_key(s: &str) -> Result<(EntityKind, &str)> {
    let (kind, key) = s.split_once(':').ok_or_else(|| KgError::UnknownKind(s.to_string()))?;
    Ok((kind.parse()?, key))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u16);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub id: RelationId,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: EntityId, predicate: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InferenceRule {
    /// `(a r b), (b r c) ⇒ (a r c)`
    Transitive(String),
    /// `(s r o) ⇒ (o inv s)` and `(s inv o) ⇒ (o r s)`
    InversePair(String, String),
    /// `(x target sub), (sub hierarchy super) ⇒ (x target super)`
    SubclassPropagate { hierarchy: String, target: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    by_key: BTreeMap<(EntityKind, String), EntityId>,
    relations: Vec<RelationType>,
    relation_index: BTreeMap<String, RelationId>,
    attr_vocab: BTreeSet<String>,
    triples: BTreeSet<Triple>,
    out_adj: Vec<Vec<(RelationId, EntityId)>>,
    in_adj: Vec<Vec<(RelationId, EntityId)>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent: a name already present keeps its id.
    pub fn register_relation(&mut self, name: &str) -> RelationType {
        assert!(!name.is_empty(), "relation name must be non-empty");
        if let Some(&id) = self.relation_index.get(name) {
            return self.relations[id.0 as usize].clone();
        }
        let id = RelationId(self.relations.len() as u16);
        let rel = RelationType {
            id,
            name: name.to_string(),
        };
        self.relations.push(rel.clone());
        self.relation_index.insert(name.to_string(), id);
        rel
    }

    pub fn register_attribute(&mut self, name: &str) {
        self.attr_vocab.insert(name.to_string());
    }

    pub fn attribute_vocab(&self) -> &BTreeSet<String> {
        &self.attr_vocab
    }

    /// Add an entity, or return the existing one with the same `(kind, key)`.
    pub fn add_entity(&mut self, kind: EntityKind, key: &str) -> EntityId {
        if let Some(&id) = self.by_key.get(&(kind, key.to_string())) {
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(Entity {
            id,
            kind,
            key: key.to_string(),
            payload: None,
            attrs: BTreeMap::new(),
        });
        self.by_key.insert((kind, key.to_string()), id);
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        id
    }

    pub fn set_payload(&mut self, id: EntityId, payload: &str) -> Result<()> {
        self.check_entity(id)?;
        self.entities[id.index()].payload = Some(payload.to_string());
        Ok(())
    }

    /// Set an attribute, registering its name in the attribute vocabulary.
    pub fn set_attr(&mut self, id: EntityId, name: &str, value: &str) -> Result<()> {
        self.check_entity(id)?;
        self.register_attribute(name);
        self.entities[id.index()]
            .attrs
            .insert(name.to_string(), value.to_string());
        Ok(())
    }

    fn check_entity(&self, id: EntityId) -> Result<()> {
        if id.index() < self.entities.len() {
            Ok(())
        } else {
            Err(KgError::UnknownEntity(id.0))
        }
    }

    /// Insert a triple; returns `false` when it was already present.
    pub fn insert_triple(&mut self, t: Triple) -> Result<bool> {
        self.check_entity(t.subject)?;
        self.check_entity(t.object)?;
        if t.predicate.0 as usize >= self.relations.len() {
            return Err(KgError::UnknownRelationId(t.predicate.0));
        }
        if !self.triples.insert(t) {
            return Ok(false);
        }
        // adjacency stays sorted so walks depend on the triple set only
        let out = &mut self.out_adj[t.subject.index()];
        let at = out.partition_point(|e| *e < (t.predicate, t.object));
        out.insert(at, (t.predicate, t.object));
        let inc = &mut self.in_adj[t.object.index()];
        let at = inc.partition_point(|e| *e < (t.predicate, t.subject));
        inc.insert(at, (t.predicate, t.subject));
        Ok(true)
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.index()]
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn lookup(&self, kind: EntityKind, key: &str) -> Option<EntityId> {
        self.by_key.get(&(kind, key.to_string())).copied()
    }

    pub fn lookup_qualified(&self, qualified: &str) -> Option<EntityId> {
        let (kind, key) = parse_qualified_key(qualified).ok()?;
        self.lookup(kind, key)
    }

    pub fn entities_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(move |e| e.kind == kind)
    }

    /// Payloads of every text entity keyed by qualified key.
    pub fn text_features(&self) -> BTreeMap<String, String> {
        self.entities
            .iter()
            .filter_map(|e| e.payload.as_ref().map(|p| (e.qualified_key(), p.clone())))
            .collect()
    }

    pub fn relations(&self) -> &[RelationType] {
        &self.relations
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations[id.0 as usize].name
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn out_edges(&self, id: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_adj[id.index()]
    }

    pub fn in_edges(&self, id: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_adj[id.index()]
    }

    /// Number of incident edges ignoring direction.
    pub fn degree(&self, id: EntityId) -> usize {
        self.out_adj[id.index()].len() + self.in_adj[id.index()].len()
    }

    /// The `i`-th incident edge of `id` ignoring direction, as a stored triple.
    pub fn incident(&self, id: EntityId, i: usize) -> Triple {
        let out = &self.out_adj[id.index()];
        if i < out.len() {
            let (p, o) = out[i];
            Triple::new(id, p, o)
        } else {
            let (p, s) = self.in_adj[id.index()][i - out.len()];
            Triple::new(s, p, id)
        }
    }
}

/// Role of a column when converting a table into triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnRole {
    /// Declares one entity of this kind per row; the row's subject.
    Key(EntityKind),
    /// References an entity declared by some `Key` column.
    Ref(EntityKind),
    /// Stored as an attribute of the row's subject.
    Attr,
    /// Promoted to a `TextDoc` entity linked from the subject.
    Text,
    /// Numeric literal promoted to a binned `Value` entity.
    Literal(Binning),
}

/// Half-open numeric bins: value `x` lands in bin `#{edge <= x}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub edges: Vec<f64>,
}

impl Binning {
    pub fn bin(&self, x: f64) -> usize {
        self.edges.iter().filter(|&&e| e <= x).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub role: ColumnRole,
}

impl Column {
    pub fn new(name: &str, role: ColumnRole) -> Self {
        Self {
            name: name.to_string(),
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Index of the column that provides each row's subject: the `Key`
    /// column if there is one, otherwise the first `Ref` column.
    pub fn subject_column(&self) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| matches!(c.role, ColumnRole::Key(_)))
            .or_else(|| {
                self.columns
                    .iter()
                    .position(|c| matches!(c.role, ColumnRole::Ref(_)))
            })
    }

    /// Relation name for triples emitted from column `col`: link tables with
    /// two columns are named after the table, wider tables after the column.
    /// `mapping` renames either (e.g. `candidate_skills → has_skill`).
    pub fn relation_for(&self, col: usize, mapping: &BTreeMap<String, String>) -> String {
        let raw = if self.columns.len() == 2 {
            &self.name
        } else {
            &self.columns[col].name
        };
        mapping.get(raw).cloned().unwrap_or_else(|| raw.clone())
    }
}

/// Convert tables into a knowledge graph with one triple per
/// `(row, non-subject column)` cell. Empty cells are nulls and emit nothing.
pub fn build_graph(tables: &[Table], relation_names: &BTreeMap<String, String>) -> Result<KnowledgeGraph> {
    let mut g = KnowledgeGraph::new();
    for t in tables {
        for (r, row) in t.rows.iter().enumerate() {
            if row.len() != t.columns.len() {
                return Err(KgError::RaggedRow {
                    table: t.name.clone(),
                    row: r,
                    got: row.len(),
                    expected: t.columns.len(),
                });
            }
        }
        for (c, col) in t.columns.iter().enumerate() {
            if let ColumnRole::Key(kind) = col.role {
                for row in &t.rows {
                    if !row[c].is_empty() {
                        g.add_entity(kind, &row[c]);
                    }
                }
            }
        }
    }

    for t in tables {
        let Some(subject_col) = t.subject_column() else {
            continue;
        };
        let subject_kind = match t.columns[subject_col].role {
            ColumnRole::Key(k) | ColumnRole::Ref(k) => k,
            _ => unreachable!(),
        };
        for row in &t.rows {
            let key = &row[subject_col];
            if key.is_empty() {
                continue;
            }
            let subject = g.lookup(subject_kind, key).ok_or_else(|| KgError::UnknownEntityRef {
                table: t.name.clone(),
                column: t.columns[subject_col].name.clone(),
                kind: subject_kind,
                key: key.clone(),
            })?;
            for (c, col) in t.columns.iter().enumerate() {
                let cell = &row[c];
                if c == subject_col || cell.is_empty() {
                    continue;
                }
                let object = match &col.role {
                    ColumnRole::Key(_) => continue,
                    ColumnRole::Attr => {
                        g.set_attr(subject, &col.name, cell)?;
                        continue;
                    }
                    ColumnRole::Ref(kind) => {
                        g.lookup(*kind, cell).ok_or_else(|| KgError::UnknownEntityRef {
                            table: t.name.clone(),
                            column: col.name.clone(),
                            kind: *kind,
                            key: cell.clone(),
                        })?
                    }
                    ColumnRole::Text => {
                        let doc_key = format!("{}#{}", key, col.name);
                        let doc = g.add_entity(EntityKind::TextDoc, &doc_key);
                        g.set_payload(doc, cell)?;
                        doc
                    }
                    ColumnRole::Literal(binning) => {
                        let x: f64 = cell.trim().parse().map_err(|_| KgError::InvalidLiteral {
                            table: t.name.clone(),
                            column: col.name.clone(),
                            value: cell.clone(),
                        })?;
                        let value_key = format!("{}#{}", col.name, binning.bin(x));
                        g.add_entity(EntityKind::Value, &value_key)
                    }
                };
                let rel = g.register_relation(&t.relation_for(c, relation_names)).id;
                g.insert_triple(Triple::new(subject, rel, object))?;
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Transitive(RelationId),
    Inverse(RelationId, RelationId),
    Subclass { hierarchy: RelationId, target: RelationId },
}

fn resolve(graph: &KnowledgeGraph, rules: &[InferenceRule]) -> Result<Vec<Rule>> {
    let id = |name: &String| graph.relation_id(name).ok_or_else(|| KgError::UnknownRelation(name.clone()));
    rules
        .iter()
        .map(|r| {
            Ok(match r {
                InferenceRule::Transitive(rel) => Rule::Transitive(id(rel)?),
                InferenceRule::InversePair(rel, inv) => Rule::Inverse(id(rel)?, id(inv)?),
                InferenceRule::SubclassPropagate { hierarchy, target } => Rule::Subclass {
                    hierarchy: id(hierarchy)?,
                    target: id(target)?,
                },
            })
        })
        .collect()
}

/// Least fixpoint of `graph` under `rules`, computed semi-naively: each round
/// only joins triples derived in the previous round against the graph.
///
/// Fails with [`KgError::CycleBudgetExceeded`] once more triples have been
/// derived than `relation_count · entity_count²`, the number of distinct
/// triples the vocabulary admits; reaching it means a rule fired outside
/// the graph's relations.
pub fn apply_inference(graph: &KnowledgeGraph, rules: &[InferenceRule]) -> Result<KnowledgeGraph> {
    let rules = resolve(graph, rules)?;
    let mut g = graph.clone();
    let budget = g.relations.len() * g.entity_count() * g.entity_count();
    let mut added = 0usize;
    let mut delta: Vec<Triple> = g.triples.iter().copied().collect();
    while !delta.is_empty() {
        let mut fresh = BTreeSet::new();
        for t in &delta {
            for rule in &rules {
                fire(&g, *rule, t, &mut fresh);
            }
        }
        delta.clear();
        for t in fresh {
            if g.insert_triple(t)? {
                delta.push(t);
                added += 1;
                if added > budget {
                    return Err(KgError::CycleBudgetExceeded { budget });
                }
            }
        }
    }
    Ok(g)
}

fn fire(g: &KnowledgeGraph, rule: Rule, t: &Triple, out: &mut BTreeSet<Triple>) {
    let mut emit = |n: Triple| {
        if !g.contains(&n) {
            out.insert(n);
        }
    };
    match rule {
        Rule::Inverse(rel, inv) => {
            if t.predicate == rel {
                emit(Triple::new(t.object, inv, t.subject));
            }
            if t.predicate == inv {
                emit(Triple::new(t.object, rel, t.subject));
            }
        }
        Rule::Transitive(rel) => {
            if t.predicate == rel {
                for &(p, c) in g.out_edges(t.object) {
                    if p == rel {
                        emit(Triple::new(t.subject, rel, c));
                    }
                }
                for &(p, a) in g.in_edges(t.subject) {
                    if p == rel {
                        emit(Triple::new(a, rel, t.object));
                    }
                }
            }
        }
        Rule::Subclass { hierarchy, target } => {
            if t.predicate == target {
                for &(p, sup) in g.out_edges(t.object) {
                    if p == hierarchy {
                        emit(Triple::new(t.subject, target, sup));
                    }
                }
            }
            if t.predicate == hierarchy {
                for &(p, x) in g.in_edges(t.subject) {
                    if p == target {
                        emit(Triple::new(x, target, t.object));
                    }
                }
            }
        }
    }
}

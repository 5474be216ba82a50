//! The four-stage ranking network.
//!
//! 1. Relational node embedding: hashed bag-of-tokens text projection (or a
//!    per-kind embedding plus a fixed random offset for non-text nodes),
//!    followed by two edge-type-aware graph transformer layers.
//! 2. Stakeholder channels: for the candidate side (candidate → vacancy
//!    orientation) and the company side (reversed orientation), `H` GATv2
//!    attention channels whose normalized node importances weight the
//!    channel embeddings.
//! 3. Subgraph embedding: pooled side embedding concatenated with the side
//!    embeddings of the two main nodes.
//! 4. Prediction: one bounded score per side, fused by a shifted harmonic
//!    mean so the lower score dominates.
//!
//! The graph-transformer baselines share stages 1, 3 and a single head of
//! stage 4 through [`Architecture::GraphTransformer`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Axis, ReduceMode, Segments, Tape, Tensor, Var};
use crate::kg::EntityKind;
use crate::rng;
use crate::sampler::{Direction, PairSubGraph};
use crate::text::hashed_tokens;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("no feature for text node {0:?}")]
    MissingFeature(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(&'static str),
    #[error("relation id {0} outside the configured vocabulary")]
    RelationOutOfRange(u16),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("this architecture has no stakeholder channels to explain")]
    NotExplainable,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = core::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Full model: relational layers, stakeholder channels, dual heads.
    Okra,
    /// Relational layers and a single head; `depth` ∈ {1, 2}.
    GraphTransformer { depth: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// T
    pub text_dim: usize,
    /// M
    pub node_dim: usize,
    /// H, channels per side.
    pub channels: usize,
    pub pooling: ReduceMode,
    pub hash_buckets: usize,
    pub token_limit: usize,
    pub leaky_slope: f64,
    pub score_bound: f64,
    pub fusion_epsilon: f64,
    /// Size of the relation vocabulary of the source graph.
    pub relation_count: usize,
    pub architecture: Architecture,
    /// Give the two main nodes their own kind embeddings so message passing
    /// can tell the ranked pair apart from other candidates and vacancies.
    pub anchor_roles: bool,
    /// Standard deviation of the fixed per-node offsets of non-text nodes.
    pub offset_scale: f64,
    /// Seeds parameter initialization and the fixed per-node offsets.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            text_dim: 128,
            node_dim: 32,
            channels: 4,
            pooling: ReduceMode::Mean,
            hash_buckets: 512,
            token_limit: 96,
            leaky_slope: 0.2,
            score_bound: 100.0,
            fusion_epsilon: 1.0,
            relation_count: 1,
            architecture: Architecture::Okra,
            anchor_roles: true,
            offset_scale: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.text_dim == 0 || self.node_dim == 0 {
            return Err(ModelError::InvalidConfig("text_dim and node_dim must be positive"));
        }
        if self.architecture == Architecture::Okra && self.channels != 4 {
            return Err(ModelError::InvalidConfig("channels must be 4"));
        }
        if let Architecture::GraphTransformer { depth } = self.architecture {
            if !(1..=2).contains(&depth) {
                return Err(ModelError::InvalidConfig("graph transformer depth must be 1 or 2"));
            }
        }
        if self.hash_buckets == 0 || self.token_limit == 0 || self.relation_count == 0 {
            return Err(ModelError::InvalidConfig("hash_buckets, token_limit and relation_count must be positive"));
        }
        if self.score_bound <= 0.0 || self.fusion_epsilon <= 0.0 {
            return Err(ModelError::InvalidConfig("score_bound and fusion_epsilon must be positive"));
        }
        Ok(())
    }

    /// Rows of the kind embedding table: one per entity kind, plus the
    /// main candidate and main vacancy roles when enabled.
    pub fn kind_rows(&self) -> usize {
        EntityKind::ALL.len() + if self.anchor_roles { 2 } else { 0 }
    }

    fn depth(&self) -> usize {
        match self.architecture {
            Architecture::Okra => 2,
            Architecture::GraphTransformer { depth } => depth,
        }
    }

    /// Width of one side's node embedding after the stakeholder layer.
    pub fn side_dim(&self) -> usize {
        match self.architecture {
            Architecture::Okra => self.node_dim * self.channels,
            Architecture::GraphTransformer { .. } => self.node_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<T> {
    pub query: T,
    pub key: T,
    pub value: T,
    pub skip: T,
    pub edge_type: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams<T> {
    pub left: T,
    pub right: T,
    pub attn: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams<T> {
    pub weight: T,
    pub bias: T,
}

/// Every trainable weight. `T` is [`Tensor`] for stored parameters and
/// [`Var`] once bound to a tape. Declaration order (as visited by
/// [`ParamSet::flat`]) is the checkpoint order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<T> {
    pub text_proj: T,
    pub text_bias: T,
    pub text_out: T,
    pub text_out_bias: T,
    pub kind_embed: T,
    pub layers: Vec<LayerParams<T>>,
    pub candidate_channels: Vec<ChannelParams<T>>,
    pub company_channels: Vec<ChannelParams<T>>,
    pub candidate_head: HeadParams<T>,
    pub company_head: Option<HeadParams<T>>,
}

pub type ModelParams = ParamSet<Tensor>;

impl<T> ParamSet<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ParamSet<U> {
        let text_proj = f(&self.text_proj);
        let text_bias = f(&self.text_bias);
        let text_out = f(&self.text_out);
        let text_out_bias = f(&self.text_out_bias);
        let kind_embed = f(&self.kind_embed);
        let layers = self
            .layers
            .iter()
            .map(|l| LayerParams {
                query: f(&l.query),
                key: f(&l.key),
                value: f(&l.value),
                skip: f(&l.skip),
                edge_type: f(&l.edge_type),
            })
            .collect();
        let mut channel = |c: &ChannelParams<T>| ChannelParams {
            left: f(&c.left),
            right: f(&c.right),
            attn: f(&c.attn),
        };
        let candidate_channels = self.candidate_channels.iter().map(&mut channel).collect();
        let company_channels = self.company_channels.iter().map(&mut channel).collect();
        let candidate_head = HeadParams {
            weight: f(&self.candidate_head.weight),
            bias: f(&self.candidate_head.bias),
        };
        let company_head = self.company_head.as_ref().map(|h| HeadParams {
            weight: f(&h.weight),
            bias: f(&h.bias),
        });
        ParamSet {
            text_proj,
            text_bias,
            text_out,
            text_out_bias,
            kind_embed,
            layers,
            candidate_channels,
            company_channels,
            candidate_head,
            company_head,
        }
    }

    /// All entries in declaration order.
    pub fn flat(&self) -> Vec<&T> {
        let mut out = vec![
            &self.text_proj,
            &self.text_bias,
            &self.text_out,
            &self.text_out_bias,
            &self.kind_embed,
        ];
        for l in &self.layers {
            out.extend([&l.query, &l.key, &l.value, &l.skip, &l.edge_type]);
        }
        for c in self.candidate_channels.iter().chain(&self.company_channels) {
            out.extend([&c.left, &c.right, &c.attn]);
        }
        out.extend([&self.candidate_head.weight, &self.candidate_head.bias]);
        if let Some(h) = &self.company_head {
            out.extend([&h.weight, &h.bias]);
        }
        out
    }

    /// Rebuild with the same layout from values given in declaration order.
    pub fn with_values<U>(&self, values: Vec<U>) -> ParamSet<U> {
        let mut it = values.into_iter();
        self.map(&mut |_| it.next().expect("one value per parameter"))
    }
}

impl ModelParams {
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::rng_for(config.seed, &["init"]);
        let mut normal = |rows: usize, cols: usize, std: f64| {
            let dist = Normal::new(0.0, std).expect("finite std");
            Tensor::from_fn(rows, cols, |_, _| dist.sample(&mut rng))
        };
        let (t, m) = (config.text_dim, config.node_dim);
        let inv = |n: usize| 1.0 / libm::sqrt(n as f64);
        let text_proj = normal(config.hash_buckets, t, inv(config.token_limit));
        let text_bias = Tensor::zeros(1, t);
        let text_out = normal(t, m, inv(t));
        let text_out_bias = Tensor::zeros(1, m);
        let kind_embed = normal(config.kind_rows(), m, 0.5);
        let layers = (0..config.depth())
            .map(|_| LayerParams {
                query: normal(m, m, inv(m)),
                key: normal(m, m, inv(m)),
                value: normal(m, m, inv(m)),
                skip: normal(m, m, inv(m)),
                edge_type: normal(2 * config.relation_count, m, inv(m)),
            })
            .collect();
        let okra = config.architecture == Architecture::Okra;
        let n_channels = if okra { config.channels } else { 0 };
        let mut channels = |n: usize| -> Vec<ChannelParams<Tensor>> {
            (0..n)
                .map(|_| ChannelParams {
                    left: normal(m, m, inv(m)),
                    right: normal(m, m, inv(m)),
                    attn: normal(m, 1, inv(m)),
                })
                .collect()
        };
        let candidate_channels = channels(n_channels);
        let company_channels = channels(n_channels);
        let head_in = 3 * config.side_dim();
        let mut head = || HeadParams {
            weight: normal(head_in, 1, 0.1 * inv(head_in)),
            bias: Tensor::zeros(1, 1),
        };
        let candidate_head = head();
        let company_head = okra.then(&mut head);
        Ok(Self {
            text_proj,
            text_bias,
            text_out,
            text_out_bias,
            kind_embed,
            layers,
            candidate_channels,
            company_channels,
            candidate_head,
            company_head,
        })
    }

    pub fn param_count(&self) -> usize {
        self.flat().iter().map(|t| t.len()).sum()
    }

    /// Element-wise zero tensors with the same layout.
    pub fn zeros_like(&self) -> Self {
        self.map(&mut |t| Tensor::zeros(t.rows(), t.cols()))
    }

    pub fn all_finite(&self) -> bool {
        self.flat().iter().all(|t| t.data().iter().all(|v| v.is_finite()))
    }
}

/// Payload lookup for text nodes by `feature_ref`.
pub trait FeatureSource {
    fn text(&self, feature_ref: &str) -> Option<&str>;
}

impl FeatureSource for BTreeMap<String, String> {
    fn text(&self, feature_ref: &str) -> Option<&str> {
        self.get(feature_ref).map(String::as_str)
    }
}

/// Edges of a batch ordered by target, with segment bookkeeping for
/// per-target softmax and aggregation.
#[derive(Debug, Clone)]
struct EdgeSet {
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    relation: Arc<[usize]>,
    /// `None` when there are no edges.
    segments: Option<Arc<Segments>>,
    /// node → compact target id, or `targets` for nodes without in-edges
    scatter: Arc<[usize]>,
    targets: usize,
    /// (graph, stored edge index) per edge; `None` for self loops.
    origin: Vec<Option<(usize, usize)>>,
}

impl EdgeSet {
    fn build(n_nodes: usize, mut edges: Vec<(usize, usize, usize, Option<(usize, usize)>)>) -> Result<Self> {
        edges.sort_by_key(|e| e.1);
        let mut compact = vec![usize::MAX; n_nodes];
        let mut targets = 0;
        let mut seg_ids = Vec::with_capacity(edges.len());
        for e in &edges {
            if compact[e.1] == usize::MAX {
                compact[e.1] = targets;
                targets += 1;
            }
            seg_ids.push(compact[e.1]);
        }
        let scatter: Vec<usize> = compact
            .iter()
            .map(|&c| if c == usize::MAX { targets } else { c })
            .collect();
        let segments = if edges.is_empty() {
            None
        } else {
            Some(Arc::new(Segments::new(seg_ids, targets)?))
        };
        Ok(Self {
            src: edges.iter().map(|e| e.0).collect(),
            dst: edges.iter().map(|e| e.1).collect(),
            relation: edges.iter().map(|e| e.2).collect(),
            segments,
            scatter: scatter.into(),
            targets,
            origin: edges.iter().map(|e| e.3).collect(),
        })
    }
}

/// Index structures for one batch of subgraphs laid out as a single
/// disjoint graph.
#[derive(Debug, Clone)]
struct Prepared {
    n_nodes: usize,
    graph_offsets: Vec<usize>,
    graph_segments: Arc<Segments>,
    /// per-node size of the node's own subgraph
    graph_size_col: Tensor,
    token_buckets: Arc<[usize]>,
    token_segments: Option<Arc<Segments>>,
    /// text row → row of [token sums; zero row]
    text_gather: Arc<[usize]>,
    n_text: usize,
    kind_ids: Arc<[usize]>,
    offsets: Tensor,
    /// node → row of [text rows; other rows]
    assemble: Arc<[usize]>,
    relational: EdgeSet,
    candidate_side: EdgeSet,
    company_side: EdgeSet,
    main_candidate: Arc<[usize]>,
    main_vacancy: Arc<[usize]>,
}

fn node_offset(config: &ModelConfig, feature_ref: &str) -> Vec<f64> {
    let mut r = rng::rng_for(config.seed, &["offset", feature_ref]);
    (0..config.node_dim)
        .map(|_| config.offset_scale * Distribution::<f64>::sample(&StandardNormal, &mut r))
        .collect()
}

fn prepare(batch: &[&PairSubGraph], features: &dyn FeatureSource, config: &ModelConfig) -> Result<Prepared> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut graph_offsets = Vec::with_capacity(batch.len() + 1);
    let mut n_nodes = 0;
    for g in batch {
        graph_offsets.push(n_nodes);
        n_nodes += g.nodes.len();
    }
    graph_offsets.push(n_nodes);
    let sizes: Vec<usize> = batch.iter().map(|g| g.nodes.len()).collect();
    let graph_segments = Arc::new(Segments::from_lengths(&sizes)?);
    let graph_size_col = Tensor::column(
        batch
            .iter()
            .flat_map(|g| core::iter::repeat_n(g.nodes.len() as f64, g.nodes.len()))
            .collect(),
    );

    let mut text_nodes = Vec::new();
    let mut other_nodes = Vec::new();
    let mut token_buckets = Vec::new();
    let mut token_seg_ids = Vec::new();
    let mut text_gather = Vec::new();
    let mut nonempty = 0usize;
    let mut kind_ids = Vec::new();
    let mut offsets = Vec::new();
    for (gi, g) in batch.iter().enumerate() {
        for (li, node) in g.nodes.iter().enumerate() {
            let global = graph_offsets[gi] + li;
            if node.kind == EntityKind::TextDoc {
                let text = features
                    .text(&node.feature_ref)
                    .ok_or_else(|| ModelError::MissingFeature(node.feature_ref.clone()))?;
                let buckets = hashed_tokens(text, config.token_limit, config.hash_buckets);
                text_nodes.push(global);
                if buckets.is_empty() {
                    text_gather.push(usize::MAX);
                } else {
                    token_seg_ids.extend(core::iter::repeat_n(nonempty, buckets.len()));
                    token_buckets.extend(buckets);
                    text_gather.push(nonempty);
                    nonempty += 1;
                }
            } else {
                other_nodes.push(global);
                let role = if !config.anchor_roles {
                    node.kind.index()
                } else if li == g.main_candidate as usize {
                    EntityKind::ALL.len()
                } else if li == g.main_vacancy as usize {
                    EntityKind::ALL.len() + 1
                } else {
                    node.kind.index()
                };
                kind_ids.push(role);
                offsets.extend(node_offset(config, &node.feature_ref));
            }
        }
    }
    for t in &mut text_gather {
        if *t == usize::MAX {
            *t = nonempty;
        }
    }
    let mut assemble = vec![0usize; n_nodes];
    for (row, &node) in text_nodes.iter().chain(&other_nodes).enumerate() {
        assemble[node] = row;
    }
    let token_segments = if nonempty == 0 {
        None
    } else {
        Some(Arc::new(Segments::new(token_seg_ids, nonempty)?))
    };

    let mut stored = Vec::new();
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    for (gi, g) in batch.iter().enumerate() {
        let base = graph_offsets[gi];
        for (ei, e) in g.edges.iter().enumerate() {
            if e.relation as usize >= config.relation_count {
                return Err(ModelError::RelationOutOfRange(e.relation));
            }
            let (s, d, r) = (base + e.src as usize, base + e.dst as usize, e.relation as usize);
            stored.push((s, d, r, Some((gi, ei))));
            stored.push((d, s, r + config.relation_count, None));
            // candidate side reads the candidate→vacancy orientation
            let (cs, cd) = match g.direction {
                Direction::CandidateToVacancy => (s, d),
                Direction::VacancyToCandidate => (d, s),
            };
            forward.push((cs, cd, r, Some((gi, ei))));
            backward.push((cd, cs, r, Some((gi, ei))));
        }
        for li in 0..g.nodes.len() {
            forward.push((base + li, base + li, 0, None));
            backward.push((base + li, base + li, 0, None));
        }
    }
    let okra = config.architecture == Architecture::Okra;
    let empty = || EdgeSet::build(n_nodes, Vec::new());
    let main_candidate = batch
        .iter()
        .enumerate()
        .map(|(gi, g)| graph_offsets[gi] + g.main_candidate as usize)
        .collect();
    let main_vacancy = batch
        .iter()
        .enumerate()
        .map(|(gi, g)| graph_offsets[gi] + g.main_vacancy as usize)
        .collect();
    Ok(Prepared {
        n_nodes,
        graph_offsets,
        graph_segments,
        graph_size_col,
        token_buckets: token_buckets.into(),
        token_segments,
        text_gather: text_gather.into(),
        n_text: text_nodes.len(),
        kind_ids: kind_ids.into(),
        offsets: Tensor::new(other_nodes.len(), config.node_dim, offsets)?,
        assemble: assemble.into(),
        relational: EdgeSet::build(n_nodes, stored)?,
        candidate_side: if okra { EdgeSet::build(n_nodes, forward)? } else { empty()? },
        company_side: if okra { EdgeSet::build(n_nodes, backward)? } else { empty()? },
        main_candidate,
        main_vacancy,
    })
}

/// Initial `V×M` node embeddings of a prepared batch.
fn embed_nodes(tape: &mut Tape, p: &ParamSet<Var>, prep: &Prepared, config: &ModelConfig) -> Result<Var> {
    let mut parts = Vec::new();
    if prep.n_text > 0 {
        let zero = tape.constant(Tensor::zeros(1, config.text_dim));
        let sums = match &prep.token_segments {
            Some(seg) => {
                let rows = tape.gather_rows(p.text_proj, prep.token_buckets.clone())?;
                let s = tape.segment_reduce(rows, seg, ReduceMode::Sum)?;
                tape.concat(&[s, zero], Axis::Rows)?
            }
            None => zero,
        };
        let counts = tape.gather_rows(sums, prep.text_gather.clone())?;
        let bias = tape.repeat_rows(p.text_bias, prep.n_text)?;
        let projected = tape.add(counts, bias)?;
        parts.push(tape.linear(projected, p.text_out, Some(p.text_out_bias))?);
    }
    if !prep.kind_ids.is_empty() {
        let kinds = tape.gather_rows(p.kind_embed, prep.kind_ids.clone())?;
        let offsets = tape.constant(prep.offsets.clone());
        parts.push(tape.add(kinds, offsets)?);
    }
    let stacked = if parts.len() == 1 { parts[0] } else { tape.concat(&parts, Axis::Rows)? };
    Ok(tape.gather_rows(stacked, prep.assemble.clone())?)
}

/// One masked graph transformer layer. Messages run along every stored edge
/// and against it; the reverse orientation of relation `r` uses edge type
/// `r + relation_count`. Per target `i`,
/// `α_ij = softmax_j((W_q h_i)·(W_k h_j + E_r) / √d)` and
/// `h'_i = leaky_relu(W_skip h_i + Σ_j α_ij (W_v h_j + E_r))`.
fn transformer_layer(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeSet,
    layer: &LayerParams<Var>,
    slope: f64,
) -> Result<Var> {
    let d = tape.shape(h)[1];
    let skip = tape.matmul(h, layer.skip)?;
    let pre = match &edges.segments {
        None => skip,
        Some(seg) => {
            let q = tape.matmul(h, layer.query)?;
            let k = tape.matmul(h, layer.key)?;
            let v = tape.matmul(h, layer.value)?;
            let et = tape.gather_rows(layer.edge_type, edges.relation.clone())?;
            let kj = tape.gather_rows(k, edges.src.clone())?;
            let kj = tape.add(kj, et)?;
            let qi = tape.gather_rows(q, edges.dst.clone())?;
            let dot = tape.mul(qi, kj)?;
            let logits = tape.row_sums(dot)?;
            let logits = tape.affine(logits, 1.0 / libm::sqrt(d as f64), 0.0);
            let alpha = tape.segment_softmax(logits, seg)?;
            let vj = tape.gather_rows(v, edges.src.clone())?;
            let vj = tape.add(vj, et)?;
            let wide = tape.repeat_cols(alpha, d)?;
            let msg = tape.mul(wide, vj)?;
            let agg = tape.segment_reduce(msg, seg, ReduceMode::Sum)?;
            let zero = tape.constant(Tensor::zeros(1, d));
            let padded = tape.concat(&[agg, zero], Axis::Rows)?;
            let full = tape.gather_rows(padded, edges.scatter.clone())?;
            tape.add(skip, full)?
        }
    };
    Ok(tape.leaky_relu(pre, slope))
}

struct ChannelVars {
    embedding: Var,
    importance: Var,
    attention: Var,
}

/// One GATv2 channel over an edge set that contains a self loop per node.
fn attention_channel(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeSet,
    ch: &ChannelParams<Var>,
    prep: &Prepared,
    slope: f64,
) -> Result<ChannelVars> {
    let d = tape.shape(h)[1];
    let seg = edges.segments.as_ref().expect("self loops guarantee edges");
    debug_assert_eq!(edges.targets, prep.n_nodes);
    let left = tape.matmul(h, ch.left)?;
    let right = tape.matmul(h, ch.right)?;
    let zi = tape.gather_rows(left, edges.dst.clone())?;
    let zj = tape.gather_rows(right, edges.src.clone())?;
    let z = tape.add(zi, zj)?;
    let z = tape.leaky_relu(z, slope);
    let e = tape.matmul(z, ch.attn)?;
    let alpha = tape.segment_softmax(e, seg)?;
    let wide = tape.repeat_cols(alpha, d)?;
    let msg = tape.mul(wide, zj)?;
    let g = tape.segment_reduce(msg, seg, ReduceMode::Sum)?;
    // importance: mean incoming exp-logit mass, normalized over the subgraph.
    // The log-mean-exp is shifted by each target's largest logit, held
    // constant, so exp neither overflows nor underflows to log(0).
    let e_val = tape.value(e).data();
    let mut top = vec![f64::NEG_INFINITY; seg.count()];
    for (k, &s) in seg.ids().iter().enumerate() {
        top[s] = top[s].max(e_val[k]);
    }
    let per_edge: Vec<f64> = seg.ids().iter().map(|&s| -top[s]).collect();
    let shift = tape.constant(Tensor::column(per_edge));
    let shifted = tape.add(e, shift)?;
    let mass = tape.exp(shifted);
    let mass = tape.segment_reduce(mass, seg, ReduceMode::Mean)?;
    let log_mass = tape.log(mass);
    let back = tape.constant(Tensor::column(top));
    let log_mass = tape.add(log_mass, back)?;
    let importance = tape.segment_softmax(log_mass, &prep.graph_segments)?;
    let sizes = tape.constant(prep.graph_size_col.clone());
    let scaled = tape.mul(importance, sizes)?;
    let scaled = tape.repeat_cols(scaled, d)?;
    let embedding = tape.mul(scaled, g)?;
    Ok(ChannelVars {
        embedding,
        importance,
        attention: alpha,
    })
}

/// pooled ‖ main candidate row ‖ main vacancy row, one row per subgraph.
fn pool(tape: &mut Tape, side: Var, prep: &Prepared, mode: ReduceMode) -> Result<Var> {
    let pooled = tape.segment_reduce(side, &prep.graph_segments, mode)?;
    let c = tape.gather_rows(side, prep.main_candidate.clone())?;
    let v = tape.gather_rows(side, prep.main_vacancy.clone())?;
    Ok(tape.concat(&[pooled, c, v], Axis::Cols)?)
}

/// `bound · tanh(w·x + b)`
fn head(tape: &mut Tape, x: Var, h: &HeadParams<Var>, bound: f64) -> Result<Var> {
    let pre = tape.linear(x, h.weight, Some(h.bias))?;
    let t = tape.tanh(pre);
    Ok(tape.affine(t, bound, 0.0))
}

/// Tape version of [`fuse_harmonic`]: `2ab/(a+b) − shift` evaluated as
/// `2·exp(ln a + ln b − ln(a+b)) − shift`.
fn fuse_on_tape(tape: &mut Tape, cand: Var, comp: Var, shift: f64) -> Result<Var> {
    let a = tape.affine(cand, 1.0, shift);
    let b = tape.affine(comp, 1.0, shift);
    let la = tape.log(a);
    let lb = tape.log(b);
    let sum = tape.add(a, b)?;
    let ls = tape.log(sum);
    let num = tape.add(la, lb)?;
    let neg = tape.affine(ls, -1.0, 0.0);
    let diff = tape.add(num, neg)?;
    let h = tape.exp(diff);
    Ok(tape.affine(h, 2.0, -shift))
}

/// Shifted harmonic mean of two bounded scores: with `a = s_cand + B + ε`
/// and `b = s_comp + B + ε`, returns `2ab/(a+b) − (B + ε)`, clamped into
/// `[min, max]` of the inputs. Equal inputs return that input.
pub fn fuse_harmonic(s_cand: f64, s_comp: f64, bound: f64, epsilon: f64) -> f64 {
    if s_cand == s_comp {
        return s_cand;
    }
    let shift = bound + epsilon;
    let (a, b) = (s_cand + shift, s_comp + shift);
    let h = 2.0 * a * b / (a + b) - shift;
    h.clamp(s_cand.min(s_comp), s_cand.max(s_comp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Candidate,
    Company,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelExplanation {
    pub side: Side,
    pub polarity: Polarity,
    /// Per local node; sums to 1.
    pub node_importances: Vec<f64>,
    /// Attention weight of each stored edge in this channel's orientation.
    pub edge_importances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub candidate: f64,
    pub company: f64,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub origin: (String, String),
    pub main_candidate: u32,
    pub main_vacancy: u32,
    pub channels: Vec<ChannelExplanation>,
    pub scores: Scores,
}

impl ExplanationReport {
    /// The `k` most important nodes of a channel, highest first.
    pub fn top_nodes(&self, channel: usize, k: usize) -> Vec<(u32, f64)> {
        let imp = &self.channels[channel].node_importances;
        let mut order: Vec<usize> = (0..imp.len()).collect();
        order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]));
        order.into_iter().take(k).map(|i| (i as u32, imp[i])).collect()
    }
}

/// Handles of one forward pass on a tape.
pub struct ForwardVars {
    pub fused: Var,
    pub candidate: Var,
    pub company: Option<Var>,
    channels: Vec<(Side, usize, ChannelVars)>,
}

/// Values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub fused: Vec<f64>,
    pub candidate: Vec<f64>,
    /// Absent for single-head architectures.
    pub company: Option<Vec<f64>>,
    /// Per subgraph; empty for single-head architectures.
    pub explanations: Vec<ExplanationReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let reference = ModelParams::init(&config)?;
        let same = reference.flat().iter().zip(params.flat()).all(|(a, b)| a.shape() == b.shape())
            && reference.flat().len() == params.flat().len();
        if !same {
            return Err(ModelError::InvalidConfig("parameter shapes do not match the config"));
        }
        Ok(Self { config, params })
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> ParamSet<Var> {
        self.params.map(&mut |t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
    }

    fn forward_vars(
        &self,
        tape: &mut Tape,
        p: &ParamSet<Var>,
        prep: &Prepared,
    ) -> Result<ForwardVars> {
        let cfg = &self.config;
        let mut h = embed_nodes(tape, p, prep, cfg)?;
        for layer in &p.layers {
            h = transformer_layer(tape, h, &prep.relational, layer, cfg.leaky_slope)?;
        }
        match cfg.architecture {
            Architecture::GraphTransformer { .. } => {
                let x = pool(tape, h, prep, cfg.pooling)?;
                let s = head(tape, x, &p.candidate_head, cfg.score_bound)?;
                Ok(ForwardVars {
                    fused: s,
                    candidate: s,
                    company: None,
                    channels: Vec::new(),
                })
            }
            Architecture::Okra => {
                let mut channels = Vec::new();
                let mut side_scores = Vec::new();
                let company_head = p.company_head.as_ref().expect("okra has a company head");
                for (side, params, edges, hp) in [
                    (Side::Candidate, &p.candidate_channels, &prep.candidate_side, &p.candidate_head),
                    (Side::Company, &p.company_channels, &prep.company_side, company_head),
                ] {
                    let mut parts = Vec::with_capacity(params.len());
                    for (c, ch) in params.iter().enumerate() {
                        let vars = attention_channel(tape, h, edges, ch, prep, cfg.leaky_slope)?;
                        parts.push(vars.embedding);
                        channels.push((side, c, vars));
                    }
                    let side_h = tape.concat(&parts, Axis::Cols)?;
                    let x = pool(tape, side_h, prep, cfg.pooling)?;
                    side_scores.push(head(tape, x, hp, cfg.score_bound)?);
                }
                let fused = fuse_on_tape(tape, side_scores[0], side_scores[1], cfg.score_bound + cfg.fusion_epsilon)?;
                Ok(ForwardVars {
                    fused,
                    candidate: side_scores[0],
                    company: Some(side_scores[1]),
                    channels,
                })
            }
        }
    }

    /// Scores and explanations for a batch; parameters are not tracked.
    pub fn forward(&self, batch: &[&PairSubGraph], features: &dyn FeatureSource) -> Result<ForwardOutput> {
        let prep = prepare(batch, features, &self.config)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let vars = self.forward_vars(&mut tape, &p, &prep)?;
        let fused = tape.value(vars.fused).data().to_vec();
        let candidate = tape.value(vars.candidate).data().to_vec();
        let company = vars.company.map(|c| tape.value(c).data().to_vec());
        let explanations = match &company {
            Some(company) => self.collect_explanations(&tape, &vars, &prep, batch, &fused, &candidate, company),
            None => Vec::new(),
        };
        Ok(ForwardOutput {
            fused,
            candidate,
            company,
            explanations,
        })
    }

    /// Fused scores only.
    pub fn score(&self, batch: &[&PairSubGraph], features: &dyn FeatureSource) -> Result<Vec<f64>> {
        let prep = prepare(batch, features, &self.config)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let vars = self.forward_vars(&mut tape, &p, &prep)?;
        Ok(tape.value(vars.fused).data().to_vec())
    }

    /// Forward pass with tracked parameters. `upstream` maps the fused
    /// scores to `∂loss/∂score`; returns the scores and `∂loss/∂θ` for the
    /// surrogate loss `Σ upstream_i · score_i`.
    pub fn value_and_grad(
        &self,
        batch: &[&PairSubGraph],
        features: &dyn FeatureSource,
        upstream: impl FnOnce(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, ModelParams)> {
        let prep = prepare(batch, features, &self.config)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, true);
        let vars = self.forward_vars(&mut tape, &p, &prep)?;
        let scores = tape.value(vars.fused).data().to_vec();
        let weights = upstream(&scores);
        let w = tape.constant(Tensor::column(weights));
        let weighted = tape.mul(w, vars.fused)?;
        let loss = tape.sum_all(weighted)?;
        tape.backward(loss)?;
        let grads = p.map(&mut |&v| {
            tape.grad(v)
                .unwrap_or_else(|| {
                    let [r, c] = tape.shape(v);
                    Tensor::zeros(r, c)
                })
        });
        Ok((scores, grads))
    }

    #[allow(clippy::too_many_arguments)]
    fn collect_explanations(
        &self,
        tape: &Tape,
        vars: &ForwardVars,
        prep: &Prepared,
        batch: &[&PairSubGraph],
        fused: &[f64],
        candidate: &[f64],
        company: &[f64],
    ) -> Vec<ExplanationReport> {
        let mut reports: Vec<ExplanationReport> = batch
            .iter()
            .enumerate()
            .map(|(gi, g)| ExplanationReport {
                origin: g.origin.clone(),
                main_candidate: g.main_candidate,
                main_vacancy: g.main_vacancy,
                channels: Vec::new(),
                scores: Scores {
                    candidate: candidate[gi],
                    company: company[gi],
                    fused: fused[gi],
                },
            })
            .collect();
        for (side, c, ch) in &vars.channels {
            let polarity = match c {
                0 => Polarity::Positive,
                1 => Polarity::Negative,
                _ => continue,
            };
            let edges = match side {
                Side::Candidate => &prep.candidate_side,
                Side::Company => &prep.company_side,
            };
            let imp = tape.value(ch.importance).data();
            let att = tape.value(ch.attention).data();
            let mut edge_imp: Vec<Vec<f64>> = batch.iter().map(|g| vec![0.0; g.edges.len()]).collect();
            for (k, origin) in edges.origin.iter().enumerate() {
                if let Some((gi, ei)) = origin {
                    edge_imp[*gi][*ei] = att[k];
                }
            }
            for (gi, report) in reports.iter_mut().enumerate() {
                let range = prep.graph_offsets[gi]..prep.graph_offsets[gi + 1];
                report.channels.push(ChannelExplanation {
                    side: *side,
                    polarity,
                    node_importances: imp[range].to_vec(),
                    edge_importances: core::mem::take(&mut edge_imp[gi]),
                });
            }
        }
        reports
    }

    /// Explanation channels (candidate⁺, candidate⁻, company⁺, company⁻) of
    /// one subgraph.
    pub fn explain(&self, sub: &PairSubGraph, features: &dyn FeatureSource) -> Result<ExplanationReport> {
        if self.config.architecture != Architecture::Okra {
            return Err(ModelError::NotExplainable);
        }
        let mut out = self.forward(&[sub], features)?;
        Ok(out.explanations.remove(0))
    }

    /// Initial `V×M` embeddings of one subgraph.
    pub fn init_node_embeddings(&self, sub: &PairSubGraph, features: &dyn FeatureSource) -> Result<Tensor> {
        let prep = prepare(&[sub], features, &self.config)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let h = embed_nodes(&mut tape, &p, &prep, &self.config)?;
        Ok(tape.value(h).clone())
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }
}

/// Stand-alone graph transformer layer over explicit `(src, dst, relation)`
/// edges; see [`Model`] for the formula.
pub fn graph_transformer_layer(
    h: &Tensor,
    edges: &[(usize, usize, usize)],
    layer: &LayerParams<Tensor>,
    slope: f64,
) -> Result<Tensor> {
    let set = EdgeSet::build(h.rows(), edges.iter().map(|&(s, d, r)| (s, d, r, None)).collect())?;
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let lp = LayerParams {
        query: tape.constant(layer.query.clone()),
        key: tape.constant(layer.key.clone()),
        value: tape.constant(layer.value.clone()),
        skip: tape.constant(layer.skip.clone()),
        edge_type: tape.constant(layer.edge_type.clone()),
    };
    let out = transformer_layer(&mut tape, hv, &set, &lp, slope)?;
    Ok(tape.value(out).clone())
}

/// Side embeddings of one subgraph after the stakeholder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StakeholderOutput {
    /// `V×(M·H)`
    pub candidate: Tensor,
    /// `V×(M·H)`
    pub company: Tensor,
    /// `[side][channel]` node importances, each summing to 1.
    pub importances: Vec<Vec<Vec<f64>>>,
}

/// Stakeholder layer applied to given node embeddings `h` (`V×M`) of `sub`.
pub fn stakeholder_channels(model: &Model, sub: &PairSubGraph, h: &Tensor, features: &dyn FeatureSource) -> Result<StakeholderOutput> {
    if model.config.architecture != Architecture::Okra {
        return Err(ModelError::NotExplainable);
    }
    let prep = prepare(&[sub], features, &model.config)?;
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, false);
    let hv = tape.constant(h.clone());
    let mut sides = Vec::new();
    let mut importances = Vec::new();
    for (params, edges) in [(&p.candidate_channels, &prep.candidate_side), (&p.company_channels, &prep.company_side)] {
        let mut parts = Vec::new();
        let mut imps = Vec::new();
        for ch in params {
            let vars = attention_channel(&mut tape, hv, edges, ch, &prep, model.config.leaky_slope)?;
            parts.push(vars.embedding);
            imps.push(tape.value(vars.importance).data().to_vec());
        }
        let side = tape.concat(&parts, Axis::Cols)?;
        sides.push(tape.value(side).clone());
        importances.push(imps);
    }
    let company = sides.pop().expect("two sides");
    let candidate = sides.pop().expect("two sides");
    Ok(StakeholderOutput {
        candidate,
        company,
        importances,
    })
}

/// Pool one subgraph's side embedding and append the two main rows.
pub fn pool_subgraph(side: &Tensor, main_candidate: usize, main_vacancy: usize, mode: ReduceMode) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant(side.clone());
    let seg = Arc::new(Segments::new(vec![0; side.rows()], 1)?);
    let pooled = tape.segment_reduce(x, &seg, mode)?;
    let c = tape.gather_rows(x, vec![main_candidate])?;
    let v = tape.gather_rows(x, vec![main_vacancy])?;
    let out = tape.concat(&[pooled, c, v], Axis::Cols)?;
    Ok(tape.value(out).data().to_vec())
}

/// `(bound·tanh(w_c·x_c + b_c), bound·tanh(w_v·x_v + b_v))`.
pub fn predict_scores(
    emb_cand: &[f64],
    emb_comp: &[f64],
    cand_head: &HeadParams<Tensor>,
    comp_head: &HeadParams<Tensor>,
    bound: f64,
) -> (f64, f64) {
    let score = |x: &[f64], h: &HeadParams<Tensor>| {
        let pre: f64 = x.iter().zip(h.weight.data()).map(|(a, b)| a * b).sum::<f64>() + h.bias.item();
        bound * libm::tanh(pre)
    };
    (score(emb_cand, cand_head), score(emb_comp, comp_head))
}

//! Permutation-equivariant tokenized graph transformer (the student).
//!
//! Every atom and every bond becomes a token. A node token carries its atom
//! features plus its orthonormal identifier twice; an edge token carries the
//! bond features plus both endpoint identifiers. The identifier channels go
//! through one shared projection, which makes the edge embedding symmetric
//! in its endpoints, so relabeling atoms permutes node-token outputs
//! exactly. An optional virtual token provides the +vn graph readout;
//! pre-softmax attention logits can be captured per layer and head.

use crate::autodiff::{
    normal_init, ones_init, xavier_uniform, zeros_init, AdError, BoundParams, ParamId, ParamSet,
    Tape, Tensor, VarId,
};
use crate::moldata::MoleculeGraph;
use crate::real::Real;
use crate::seeding::{derive_seed_ints, rng_from};
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

/// Embedding-table sizes for the nine atom feature codes.
pub const ATOM_CARDINALITIES: [usize; 9] = [119, 9, 32, 12, 10, 6, 9, 2, 2];
pub const ATOM_FIELD_NAMES: [&str; 9] = [
    "atomic_number",
    "chirality",
    "degree",
    "formal_charge",
    "num_hydrogens",
    "num_radical_electrons",
    "hybridization",
    "is_aromatic",
    "is_in_ring",
];
/// Embedding-table sizes for the three bond feature codes.
pub const BOND_CARDINALITIES: [usize; 3] = [6, 8, 2];
pub const BOND_FIELD_NAMES: [&str; 3] = ["bond_type", "stereo", "is_conjugated"];

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Encoder2DConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    /// Identifier dimension k; must cover the largest molecule (k >= N).
    pub identifier_dim: usize,
    pub use_virtual_node: bool,
    pub capture_attention: bool,
}

impl Default for Encoder2DConfig {
    fn default() -> Self {
        Encoder2DConfig {
            num_layers: 4,
            num_heads: 4,
            hidden_dim: 64,
            identifier_dim: 32,
            use_virtual_node: false,
            capture_attention: false,
        }
    }
}

impl Encoder2DConfig {
    /// Large-scale preset kept for documentation fidelity.
    pub fn paper_scale() -> Self {
        Encoder2DConfig {
            num_layers: 12,
            num_heads: 32,
            hidden_dim: 128,
            ..Default::default()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_layers < 1 {
            out.push("encoder2d.num_layers must be >= 1".into());
        }
        if self.num_heads < 1 || self.hidden_dim % self.num_heads.max(1) != 0 {
            out.push(format!(
                "encoder2d.hidden_dim ({}) must be divisible by num_heads ({})",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.identifier_dim < 1 {
            out.push("encoder2d.identifier_dim must be >= 1".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder2DError {
    /// k < N: identifiers cannot be pairwise orthonormal.
    IdentifierCapacity { k: usize, n: usize },
    /// A feature code exceeds its embedding table.
    FeatureOutOfRange {
        field: &'static str,
        code: u8,
        table: usize,
    },
    /// +vn readout requested but the virtual token is disabled.
    NoVirtualToken,
    Ad(AdError),
}

impl fmt::Display for Encoder2DError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encoder2DError::IdentifierCapacity { k, n } => {
                write!(f, "identifier dim {k} cannot host {n} orthonormal rows")
            }
            Encoder2DError::FeatureOutOfRange { field, code, table } => {
                write!(f, "{field} code {code} outside embedding table of size {table}")
            }
            Encoder2DError::NoVirtualToken => {
                write!(f, "virtual-node readout requested but the encoder has no virtual token")
            }
            Encoder2DError::Ad(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for Encoder2DError {}

impl From<AdError> for Encoder2DError {
    fn from(e: AdError) -> Self {
        Encoder2DError::Ad(e)
    }
}

pub type Encoder2DResult<T> = Result<T, Encoder2DError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Node,
    Edge,
    Virtual,
}

/// Where identifiers come from: a fresh seeded draw, or an explicit matrix
/// (evaluation fixes them; equivariance tests permute them).
pub enum IdentifierSource<'a> {
    Seeded(u64),
    Given(&'a Tensor<f64>),
}

/// Identifiers plus token bookkeeping for one molecule.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub kinds: Vec<TokenKind>,
    /// Token position of node u is node_positions[u] (always u here).
    pub node_positions: Vec<usize>,
    pub edge_endpoints: Vec<(usize, usize)>,
    pub virtual_position: Option<usize>,
    /// Orthonormal rows, one per node: (N, k) with P·Pᵀ = I.
    pub identifiers: Tensor<f64>,
}

impl TokenSequence {
    pub fn token_count(&self) -> usize {
        self.kinds.len()
    }
}

/// Gram–Schmidt orthonormal rows from a seeded Gaussian draw.
pub fn orthonormal_identifiers(n: usize, k: usize, seed: u64) -> Encoder2DResult<Tensor<f64>> {
    if k < n {
        return Err(Encoder2DError::IdentifierCapacity { k, n });
    }
    let mut rng = rng_from(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut row: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        for prev in &rows {
            let dot: f64 = row.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (r, p) in row.iter_mut().zip(prev) {
                *r -= dot * p;
            }
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // essentially-dependent draw, take another
        }
        for r in &mut row {
            *r /= norm;
        }
        rows.push(row);
    }
    Tensor::from_rows(&rows).map_err(Encoder2DError::Ad)
}

/// Build the token bookkeeping for a validated graph. Deterministic given a
/// seed; token count is N + M, plus one when the virtual token is enabled.
pub fn tokenize(
    graph: &MoleculeGraph,
    config: &Encoder2DConfig,
    ids: IdentifierSource<'_>,
) -> Encoder2DResult<TokenSequence> {
    let n = graph.num_atoms();
    let m = graph.num_bonds();
    let identifiers = match ids {
        IdentifierSource::Seeded(seed) => orthonormal_identifiers(n, config.identifier_dim, seed)?,
        IdentifierSource::Given(p) => {
            if p.shape() != [n, config.identifier_dim] {
                return Err(Encoder2DError::Ad(AdError::ShapeMismatch {
                    op: "tokenize",
                    left: p.shape().to_vec(),
                    right: vec![n, config.identifier_dim],
                }));
            }
            p.clone()
        }
    };
    let mut kinds = vec![TokenKind::Node; n];
    kinds.extend(std::iter::repeat(TokenKind::Edge).take(m));
    let mut virtual_position = None;
    if config.use_virtual_node {
        virtual_position = Some(kinds.len());
        kinds.push(TokenKind::Virtual);
    }
    Ok(TokenSequence {
        kinds,
        node_positions: (0..n).collect(),
        edge_endpoints: graph.bonds.iter().map(|b| (b.u, b.v)).collect(),
        virtual_position,
        identifiers,
    })
}

/// Pre-softmax attention logits captured during a forward pass, per layer
/// and head; each matrix is T×T over all tokens.
pub struct AttentionTrace<F> {
    pub logits: Vec<Vec<Tensor<F>>>,
}

/// Forward outputs: per-node representations, the optional virtual-token
/// representation, and the optional attention trace.
pub struct Encoded2D<F> {
    pub node_reps: VarId,
    pub virtual_rep: Option<VarId>,
    pub trace: Option<AttentionTrace<F>>,
}

struct AttentionLayer {
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
    w1: ParamId,
    c1: ParamId,
    w2: ParamId,
    c2: ParamId,
}

/// The 2D student encoder.
pub struct Encoder2D<F: Real> {
    pub config: Encoder2DConfig,
    params: ParamSet<F>,
    atom_tables: Vec<ParamId>,
    bond_tables: Vec<ParamId>,
    id_proj: ParamId,
    node_type: ParamId,
    edge_type: ParamId,
    virtual_type: ParamId,
    virtual_embed: ParamId,
    layers: Vec<AttentionLayer>,
    final_gain: ParamId,
    final_bias: ParamId,
}

impl<F: Real> Encoder2D<F> {
    pub fn init(config: Encoder2DConfig, seed: u64) -> Self {
        let d = config.hidden_dim;
        let k = config.identifier_dim;
        let mut params = ParamSet::new();
        let mut rng = rng_from(derive_seed_ints(seed, &[0x2d]));
        let atom_tables = ATOM_CARDINALITIES
            .iter()
            .zip(ATOM_FIELD_NAMES)
            .map(|(&card, name)| {
                params.add(
                    format!("encoder2d/atom_embed/{name}"),
                    0,
                    normal_init(&mut rng, vec![card, d], 0.5),
                )
            })
            .collect();
        let bond_tables = BOND_CARDINALITIES
            .iter()
            .zip(BOND_FIELD_NAMES)
            .map(|(&card, name)| {
                params.add(
                    format!("encoder2d/bond_embed/{name}"),
                    0,
                    normal_init(&mut rng, vec![card, d], 0.5),
                )
            })
            .collect();
        let id_proj = params.add("encoder2d/id_proj", 0, xavier_uniform(&mut rng, k, d));
        let node_type = params.add("encoder2d/type/node", 0, normal_init(&mut rng, vec![d], 0.1));
        let edge_type = params.add("encoder2d/type/edge", 0, normal_init(&mut rng, vec![d], 0.1));
        let virtual_type =
            params.add("encoder2d/type/virtual", 0, normal_init(&mut rng, vec![d], 0.1));
        let virtual_embed =
            params.add("encoder2d/virtual_embed", 0, normal_init(&mut rng, vec![1, d], 0.5));
        let layers = (0..config.num_layers)
            .map(|l| {
                let li = l + 1;
                let p = |s: &str| format!("encoder2d/layer{l}/{s}");
                AttentionLayer {
                    ln1_gain: params.add(p("ln1/gain"), li, ones_init(d)),
                    ln1_bias: params.add(p("ln1/bias"), li, zeros_init(vec![d])),
                    wq: params.add(p("attn/wq"), li, xavier_uniform(&mut rng, d, d)),
                    bq: params.add(p("attn/bq"), li, zeros_init(vec![d])),
                    wk: params.add(p("attn/wk"), li, xavier_uniform(&mut rng, d, d)),
                    bk: params.add(p("attn/bk"), li, zeros_init(vec![d])),
                    wv: params.add(p("attn/wv"), li, xavier_uniform(&mut rng, d, d)),
                    bv: params.add(p("attn/bv"), li, zeros_init(vec![d])),
                    wo: params.add(p("attn/wo"), li, xavier_uniform(&mut rng, d, d)),
                    bo: params.add(p("attn/bo"), li, zeros_init(vec![d])),
                    ln2_gain: params.add(p("ln2/gain"), li, ones_init(d)),
                    ln2_bias: params.add(p("ln2/bias"), li, zeros_init(vec![d])),
                    w1: params.add(p("mlp/w1"), li, xavier_uniform(&mut rng, d, 4 * d)),
                    c1: params.add(p("mlp/b1"), li, zeros_init(vec![4 * d])),
                    w2: params.add(p("mlp/w2"), li, xavier_uniform(&mut rng, 4 * d, d)),
                    c2: params.add(p("mlp/b2"), li, zeros_init(vec![d])),
                }
            })
            .collect();
        let final_gain = params.add("encoder2d/final_ln/gain", config.num_layers, ones_init(d));
        let final_bias =
            params.add("encoder2d/final_ln/bias", config.num_layers, zeros_init(vec![d]));
        Encoder2D {
            config,
            params,
            atom_tables,
            bond_tables,
            id_proj,
            node_type,
            edge_type,
            virtual_type,
            virtual_embed,
            layers,
            final_gain,
            final_bias,
        }
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    fn check_features(&self, graph: &MoleculeGraph) -> Encoder2DResult<()> {
        for atom in &graph.atoms {
            for (f, &code) in atom.codes().iter().enumerate() {
                if code as usize >= ATOM_CARDINALITIES[f] {
                    return Err(Encoder2DError::FeatureOutOfRange {
                        field: ATOM_FIELD_NAMES[f],
                        code,
                        table: ATOM_CARDINALITIES[f],
                    });
                }
            }
        }
        for bond in &graph.bonds {
            for (f, &code) in bond.features.codes().iter().enumerate() {
                if code as usize >= BOND_CARDINALITIES[f] {
                    return Err(Encoder2DError::FeatureOutOfRange {
                        field: BOND_FIELD_NAMES[f],
                        code,
                        table: BOND_CARDINALITIES[f],
                    });
                }
            }
        }
        Ok(())
    }

    /// Summed per-field feature embeddings for a list of code columns.
    fn embed_codes(
        &self,
        tape: &mut Tape<F>,
        bound: &BoundParams,
        tables: &[ParamId],
        codes: &[Vec<usize>],
    ) -> Encoder2DResult<VarId> {
        let mut acc: Option<VarId> = None;
        for (f, table) in tables.iter().enumerate() {
            let table_var = bound.var(*table);
            let got = tape.gather_rows(table_var, &codes[f])?;
            acc = Some(match acc {
                None => got,
                Some(a) => tape.add(a, got)?,
            });
        }
        Ok(acc.expect("at least one feature table"))
    }

    /// Encode a graph; `capture` additionally records pre-softmax logits.
    pub fn forward(
        &self,
        tape: &mut Tape<F>,
        bound: &BoundParams,
        graph: &MoleculeGraph,
        tokens: &TokenSequence,
        capture: bool,
    ) -> Encoder2DResult<Encoded2D<F>> {
        self.check_features(graph)?;
        let heads = self.config.num_heads;
        let dh = self.config.hidden_dim / heads;
        let m = graph.num_bonds();

        // Node tokens: features + identifier (twice, shared projection).
        let atom_codes: Vec<Vec<usize>> = (0..9)
            .map(|f| graph.atoms.iter().map(|a| a.codes()[f] as usize).collect())
            .collect();
        let node_feat = self.embed_codes(tape, bound, &self.atom_tables, &atom_codes)?;
        let ids = tape.constant(tokens.identifiers.cast::<F>());
        let id_proj = tape.matmul(ids, bound.var(self.id_proj))?;
        let node_id = tape.scale(id_proj, F::from_f64(2.0))?;
        let node_part = tape.add(node_feat, node_id)?;
        let node_part = tape.bias_add(node_part, bound.var(self.node_type))?;

        // Edge tokens: features + both endpoint identifiers.
        let mut parts = vec![node_part];
        if m > 0 {
            let bond_codes: Vec<Vec<usize>> = (0..3)
                .map(|f| {
                    graph
                        .bonds
                        .iter()
                        .map(|b| b.features.codes()[f] as usize)
                        .collect()
                })
                .collect();
            let edge_feat = self.embed_codes(tape, bound, &self.bond_tables, &bond_codes)?;
            let us: Vec<usize> = tokens.edge_endpoints.iter().map(|&(u, _)| u).collect();
            let vs: Vec<usize> = tokens.edge_endpoints.iter().map(|&(_, v)| v).collect();
            let pu = tape.gather_rows(id_proj, &us)?;
            let pv = tape.gather_rows(id_proj, &vs)?;
            let edge_id = tape.add(pu, pv)?;
            let edge_part = tape.add(edge_feat, edge_id)?;
            let edge_part = tape.bias_add(edge_part, bound.var(self.edge_type))?;
            parts.push(edge_part);
        }
        if tokens.virtual_position.is_some() {
            let virt = bound.var(self.virtual_embed);
            let virt = tape.bias_add(virt, bound.var(self.virtual_type))?;
            parts.push(virt);
        }
        let mut x = if parts.len() == 1 {
            parts[0]
        } else {
            tape.concat(&parts, 0)?
        };

        let mut trace = capture.then(|| AttentionTrace { logits: Vec::new() });
        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        for layer in &self.layers {
            let hn = tape.layer_norm(x, bound.var(layer.ln1_gain), bound.var(layer.ln1_bias))?;
            let q = tape.matmul(hn, bound.var(layer.wq))?;
            let q = tape.bias_add(q, bound.var(layer.bq))?;
            let k = tape.matmul(hn, bound.var(layer.wk))?;
            let k = tape.bias_add(k, bound.var(layer.bk))?;
            let v = tape.matmul(hn, bound.var(layer.wv))?;
            let v = tape.bias_add(v, bound.var(layer.bv))?;
            let mut head_outs = Vec::with_capacity(heads);
            let mut layer_logits = Vec::with_capacity(heads);
            for h in 0..heads {
                let (s, e) = (h * dh, (h + 1) * dh);
                let qh = tape.slice_cols(q, s, e)?;
                let kh = tape.slice_cols(k, s, e)?;
                let vh = tape.slice_cols(v, s, e)?;
                let kt = tape.transpose(kh)?;
                let scores = tape.matmul(qh, kt)?;
                let scores = tape.scale(scores, scale)?;
                if capture {
                    layer_logits.push(tape.value(scores).clone());
                }
                let attn = tape.softmax_rows(scores, None)?;
                head_outs.push(tape.matmul(attn, vh)?);
            }
            if let Some(t) = &mut trace {
                t.logits.push(layer_logits);
            }
            let concat = if heads == 1 {
                head_outs[0]
            } else {
                tape.concat(&head_outs, 1)?
            };
            let o = tape.matmul(concat, bound.var(layer.wo))?;
            let o = tape.bias_add(o, bound.var(layer.bo))?;
            x = tape.add(x, o)?;

            let hm = tape.layer_norm(x, bound.var(layer.ln2_gain), bound.var(layer.ln2_bias))?;
            let mid = tape.matmul(hm, bound.var(layer.w1))?;
            let mid = tape.bias_add(mid, bound.var(layer.c1))?;
            let mid = tape.silu(mid)?;
            let mlp = tape.matmul(mid, bound.var(layer.w2))?;
            let mlp = tape.bias_add(mlp, bound.var(layer.c2))?;
            x = tape.add(x, mlp)?;
        }
        let x = tape.layer_norm(x, bound.var(self.final_gain), bound.var(self.final_bias))?;

        let node_reps = tape.gather_rows(x, &tokens.node_positions)?;
        let virtual_rep = match tokens.virtual_position {
            Some(pos) => Some(tape.gather_rows(x, &[pos])?),
            None => None,
        };
        Ok(Encoded2D {
            node_reps,
            virtual_rep,
            trace,
        })
    }
}

/// Arithmetic mean over node tokens only: (1, d).
pub fn pool_mean<F: Real>(tape: &mut Tape<F>, node_reps: VarId) -> Encoder2DResult<VarId> {
    Ok(tape.mean_axis(node_reps, 0)?)
}

/// The virtual token's output row: (1, d).
pub fn pool_virtual<F: Real>(encoded: &Encoded2D<F>) -> Encoder2DResult<VarId> {
    encoded.virtual_rep.ok_or(Encoder2DError::NoVirtualToken)
}

/// CSV export of captured logits joined against 3D pairwise distances:
/// `layer,head,i,j,logit,distance` over node-token pairs i != j.
pub fn attention_trace_csv<F: Real>(
    trace: &AttentionTrace<F>,
    tokens: &TokenSequence,
    distances: &Tensor<f64>,
) -> String {
    let mut out = String::from("layer,head,i,j,logit,distance\n");
    let n = tokens.node_positions.len();
    for (l, heads) in trace.logits.iter().enumerate() {
        for (h, logits) in heads.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let (ti, tj) = (tokens.node_positions[i], tokens.node_positions[j]);
                    out.push_str(&format!(
                        "{l},{h},{i},{j},{},{}\n",
                        logits.at(ti, tj).as_f64(),
                        distances.at(i, j)
                    ));
                }
            }
        }
    }
    out
}

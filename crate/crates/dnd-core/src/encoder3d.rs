//! SE(3)-invariant conformer encoder (the teacher) and its equivariant
//! noise-prediction head.
//!
//! Message passing over distance features only: the message from atom j to
//! atom i is MLP(z_i ‖ z_j ‖ rbf(d_ij)) · smooth_cutoff(d_ij), aggregated by
//! scatter-add, followed by a residual update and layer norm. The output
//! depends on coordinates only through pairwise distances, so it is
//! invariant to every rigid motion (and to reflections; per-atom chirality
//! codes are the only tie-breaker between enantiomers).

use crate::autodiff::{
    normal_init, ones_init, xavier_uniform, zeros_init, AdError, BoundParams, ParamId, ParamSet,
    Tape, Tensor, VarId,
};
use crate::real::Real;
use crate::seeding::{derive_seed_ints, rng_from};
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

/// Floor for direction normalization of near-coincident atoms.
pub const DIRECTION_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Relu,
}

impl Activation {
    fn apply<F: Real>(self, tape: &mut Tape<F>, x: VarId) -> Result<VarId, AdError> {
        match self {
            Activation::Silu => tape.silu(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Encoder3DConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_rbf: usize,
    /// Neighbor cutoff radius in ångström.
    pub cutoff: f64,
    pub activation: Activation,
    /// Embedding table covers atomic numbers 1..=max_atomic_number.
    pub max_atomic_number: u8,
}

impl Default for Encoder3DConfig {
    fn default() -> Self {
        Encoder3DConfig {
            num_layers: 4,
            hidden_dim: 64,
            num_rbf: 16,
            cutoff: 6.0,
            activation: Activation::Silu,
            max_atomic_number: 118,
        }
    }
}

impl Encoder3DConfig {
    /// Large-scale preset kept for documentation fidelity; far beyond desk
    /// scale.
    pub fn paper_scale() -> Self {
        Encoder3DConfig {
            num_layers: 8,
            hidden_dim: 768,
            num_rbf: 64,
            ..Default::default()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_layers < 1 {
            out.push("encoder3d.num_layers must be >= 1".into());
        }
        if self.hidden_dim < 4 {
            out.push("encoder3d.hidden_dim must be >= 4".into());
        }
        if self.num_rbf < 1 {
            out.push("encoder3d.num_rbf must be >= 1".into());
        }
        if self.cutoff <= 0.0 {
            out.push(format!("encoder3d.cutoff must be > 0, got {}", self.cutoff));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderError {
    /// Atomic number outside the embedding table (an element the encoder
    /// has never observed).
    UnknownElement { atomic_number: u8, max: u8 },
    /// Conformer/graph atom-count mismatch.
    AtomCountMismatch { graph: usize, conformer: usize },
    Ad(AdError),
}

impl fmt::Display for EncoderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderError::UnknownElement { atomic_number, max } => write!(
                f,
                "atomic number {atomic_number} outside embedding table (max {max})"
            ),
            EncoderError::AtomCountMismatch { graph, conformer } => write!(
                f,
                "graph has {graph} atoms but conformer has {conformer} rows"
            ),
            EncoderError::Ad(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for EncoderError {}

impl From<AdError> for EncoderError {
    fn from(e: AdError) -> Self {
        EncoderError::Ad(e)
    }
}

pub type EncoderResult<T> = Result<T, EncoderError>;

/// Gaussian radial basis expansion with centers equally spaced in
/// [0, cutoff].
#[derive(Debug, Clone)]
pub struct RbfExpansion {
    pub centers: Vec<f64>,
    pub gamma: f64,
}

impl RbfExpansion {
    pub fn new(num_rbf: usize, cutoff: f64) -> Self {
        let spacing = if num_rbf > 1 {
            cutoff / (num_rbf - 1) as f64
        } else {
            cutoff
        };
        let centers = (0..num_rbf).map(|k| k as f64 * spacing).collect();
        RbfExpansion {
            centers,
            gamma: 1.0 / (2.0 * spacing * spacing),
        }
    }

    pub fn expand(&self, d: f64) -> Vec<f64> {
        self.centers
            .iter()
            .map(|&mu| (-self.gamma * (d - mu) * (d - mu)).exp())
            .collect()
    }
}

/// Cosine envelope, smoothly zero at the cutoff radius.
pub fn smooth_cutoff(d: f64, cutoff: f64) -> f64 {
    if d < cutoff {
        0.5 * ((std::f64::consts::PI * d / cutoff).cos() + 1.0)
    } else {
        0.0
    }
}

/// Symmetric Euclidean distance matrix with zero diagonal.
pub fn pairwise_distances(coords: &[[f64; 3]]) -> Tensor<f64> {
    let n = coords.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = crate::moldata::distance(coords[i], coords[j]);
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Tensor::matrix(n, n, data).expect("sized")
}

/// Per-conformer constants consumed by the teacher: directed neighbor pairs
/// within the cutoff, their RBF features, envelopes, and unit directions.
#[derive(Debug, Clone)]
pub struct Geometry<F> {
    pub n: usize,
    pub distances: Tensor<f64>,
    /// Message target atom i per edge.
    pub edge_dst: Vec<usize>,
    /// Message source atom j per edge.
    pub edge_src: Vec<usize>,
    pub rbf: Tensor<F>,
    pub envelope: Tensor<F>,
    /// (r_i − r_j) / max(d_ij, DIRECTION_EPSILON), one row per edge.
    pub directions: Tensor<F>,
    /// Atoms with no neighbor inside the cutoff.
    pub isolated_atoms: usize,
}

pub fn compute_geometry<F: Real>(
    coords: &[[f64; 3]],
    rbf: &RbfExpansion,
    cutoff: f64,
) -> Geometry<F> {
    let n = coords.len();
    let distances = pairwise_distances(coords);
    let mut edge_dst = Vec::new();
    let mut edge_src = Vec::new();
    let mut rbf_rows: Vec<F> = Vec::new();
    let mut env_rows: Vec<F> = Vec::new();
    let mut dir_rows: Vec<F> = Vec::new();
    let mut has_neighbor = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = distances.at(i, j);
            if d >= cutoff {
                continue;
            }
            edge_dst.push(i);
            edge_src.push(j);
            has_neighbor[i] = true;
            rbf_rows.extend(rbf.expand(d).into_iter().map(F::from_f64));
            env_rows.push(F::from_f64(smooth_cutoff(d, cutoff)));
            let denom = d.max(DIRECTION_EPSILON);
            for k in 0..3 {
                dir_rows.push(F::from_f64((coords[i][k] - coords[j][k]) / denom));
            }
        }
    }
    let e = edge_dst.len();
    Geometry {
        n,
        distances,
        edge_dst,
        edge_src,
        rbf: Tensor::matrix(e, rbf.centers.len(), rbf_rows).expect("sized"),
        envelope: Tensor::matrix(e, 1, env_rows).expect("sized"),
        directions: Tensor::matrix(e, 3, dir_rows).expect("sized"),
        isolated_atoms: has_neighbor.iter().filter(|&&h| !h).count(),
    }
}

struct MessageLayer {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln_gain: ParamId,
    ln_bias: ParamId,
}

/// The 3D teacher encoder.
pub struct Encoder3D<F: Real> {
    pub config: Encoder3DConfig,
    params: ParamSet<F>,
    embed: ParamId,
    layers: Vec<MessageLayer>,
    rbf: RbfExpansion,
}

impl<F: Real> Encoder3D<F> {
    pub fn init(config: Encoder3DConfig, seed: u64) -> Self {
        let d = config.hidden_dim;
        let k = config.num_rbf;
        let vocab = config.max_atomic_number as usize + 1;
        let mut params = ParamSet::new();
        let mut rng = rng_from(derive_seed_ints(seed, &[0x3d]));
        let embed = params.add("encoder3d/embed", 0, normal_init(&mut rng, vec![vocab, d], 1.0));
        let layers = (0..config.num_layers)
            .map(|l| {
                let li = l + 1;
                let p = |s: &str| format!("encoder3d/layer{l}/{s}");
                MessageLayer {
                    w1: params.add(p("msg/w1"), li, xavier_uniform(&mut rng, 2 * d + k, d)),
                    b1: params.add(p("msg/b1"), li, zeros_init(vec![d])),
                    w2: params.add(p("msg/w2"), li, xavier_uniform(&mut rng, d, d)),
                    b2: params.add(p("msg/b2"), li, zeros_init(vec![d])),
                    ln_gain: params.add(p("ln/gain"), li, ones_init(d)),
                    ln_bias: params.add(p("ln/bias"), li, zeros_init(vec![d])),
                }
            })
            .collect();
        let rbf = RbfExpansion::new(k, config.cutoff);
        Encoder3D {
            config,
            params,
            embed,
            layers,
            rbf,
        }
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    pub fn rbf(&self) -> &RbfExpansion {
        &self.rbf
    }

    pub fn geometry(&self, coords: &[[f64; 3]]) -> Geometry<F> {
        compute_geometry(coords, &self.rbf, self.config.cutoff)
    }

    fn check_elements(&self, atomic_numbers: &[u8]) -> EncoderResult<()> {
        for &z in atomic_numbers {
            if z > self.config.max_atomic_number {
                return Err(EncoderError::UnknownElement {
                    atomic_number: z,
                    max: self.config.max_atomic_number,
                });
            }
        }
        Ok(())
    }

    /// Per-atom representations Z3D of shape (N, hidden_dim).
    pub fn forward(
        &self,
        tape: &mut Tape<F>,
        bound: &BoundParams,
        atomic_numbers: &[u8],
        geom: &Geometry<F>,
    ) -> EncoderResult<VarId> {
        self.check_elements(atomic_numbers)?;
        if atomic_numbers.len() != geom.n {
            return Err(EncoderError::AtomCountMismatch {
                graph: atomic_numbers.len(),
                conformer: geom.n,
            });
        }
        let d = self.config.hidden_dim;
        let atom_idx: Vec<usize> = atomic_numbers.iter().map(|&z| z as usize).collect();
        let embed = bound.var(self.embed);
        let mut h = tape.gather_rows(embed, &atom_idx)?;

        let rbf_const = tape.constant(geom.rbf.clone());
        let env_const = tape.constant(geom.envelope.clone());
        for layer in &self.layers {
            let zi = tape.gather_rows(h, &geom.edge_dst)?;
            let zj = tape.gather_rows(h, &geom.edge_src)?;
            let cat = tape.concat(&[zi, zj, rbf_const], 1)?;
            let m = tape.matmul(cat, bound.var(layer.w1))?;
            let m = tape.bias_add(m, bound.var(layer.b1))?;
            let m = self.config.activation.apply(tape, m)?;
            let m = tape.matmul(m, bound.var(layer.w2))?;
            let m = tape.bias_add(m, bound.var(layer.b2))?;
            let env_wide = tape.repeat_cols(env_const, d)?;
            let m = tape.mul(m, env_wide)?;
            let agg = tape.scatter_add_rows(geom.n, &geom.edge_dst, m)?;
            let res = tape.add(h, agg)?;
            h = tape.layer_norm(res, bound.var(layer.ln_gain), bound.var(layer.ln_bias))?;
        }
        Ok(h)
    }
}

/// Equivariant noise head: per-edge scalar gates on unit relative
/// directions, summed per atom. Output shape (N, 3).
pub struct NoiseHead<F: Real> {
    params: ParamSet<F>,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    activation: Activation,
}

/// Noise prediction plus metadata about atoms that had no neighbors (their
/// rows are exactly zero).
pub struct NoisePrediction {
    pub var: VarId,
    pub isolated_atoms: usize,
}

impl<F: Real> NoiseHead<F> {
    pub fn init(encoder_config: &Encoder3DConfig, seed: u64) -> Self {
        let d = encoder_config.hidden_dim;
        let k = encoder_config.num_rbf;
        let li = encoder_config.num_layers;
        let mut params = ParamSet::new();
        let mut rng = rng_from(derive_seed_ints(seed, &[0xead]));
        let w1 = params.add("noise_head/w1", li, xavier_uniform(&mut rng, 2 * d + k, d));
        let b1 = params.add("noise_head/b1", li, zeros_init(vec![d]));
        let w2 = params.add("noise_head/w2", li, xavier_uniform(&mut rng, d, 1));
        let b2 = params.add("noise_head/b2", li, zeros_init(vec![1]));
        NoiseHead {
            params,
            w1,
            b1,
            w2,
            b2,
            activation: encoder_config.activation,
        }
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    pub fn forward(
        &self,
        tape: &mut Tape<F>,
        bound: &BoundParams,
        z: VarId,
        geom: &Geometry<F>,
    ) -> EncoderResult<NoisePrediction> {
        let zi = tape.gather_rows(z, &geom.edge_dst)?;
        let zj = tape.gather_rows(z, &geom.edge_src)?;
        let rbf_const = tape.constant(geom.rbf.clone());
        let cat = tape.concat(&[zi, zj, rbf_const], 1)?;
        let m = tape.matmul(cat, bound.var(self.w1))?;
        let m = tape.bias_add(m, bound.var(self.b1))?;
        let m = self.activation.apply(tape, m)?;
        let gate = tape.matmul(m, bound.var(self.w2))?;
        let gate = tape.bias_add(gate, bound.var(self.b2))?;
        let gate3 = tape.repeat_cols(gate, 3)?;
        let dirs = tape.constant(geom.directions.clone());
        let vectors = tape.mul(gate3, dirs)?;
        let pred = tape.scatter_add_rows(geom.n, &geom.edge_dst, vectors)?;
        Ok(NoisePrediction {
            var: pred,
            isolated_atoms: geom.isolated_atoms,
        })
    }
}

// ── rigid-motion helpers (shared by symmetry tests and analyses) ──────

/// Uniform random rotation matrix (proper, det +1) from a seeded quaternion.
pub fn random_rotation(seed: u64) -> [[f64; 3]; 3] {
    let mut rng = rng_from(seed);
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / norm);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn apply_rotation(rot: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| rot[r][0] * p[0] + rot[r][1] * p[1] + rot[r][2] * p[2])
}

/// Apply a rigid motion (rotation then translation) to every coordinate.
pub fn apply_rigid_motion(
    coords: &[[f64; 3]],
    rot: &[[f64; 3]; 3],
    translation: [f64; 3],
) -> Vec<[f64; 3]> {
    coords
        .iter()
        .map(|&p| {
            let q = apply_rotation(rot, p);
            [
                q[0] + translation[0],
                q[1] + translation[1],
                q[2] + translation[2],
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moldata::{generate_synthetic, SyntheticConfig};

    fn tiny_config() -> Encoder3DConfig {
        Encoder3DConfig {
            num_layers: 2,
            hidden_dim: 8,
            num_rbf: 4,
            max_atomic_number: 16,
            ..Default::default()
        }
    }

    fn encode_f64(
        enc: &Encoder3D<f64>,
        atomic_numbers: &[u8],
        coords: &[[f64; 3]],
    ) -> Tensor<f64> {
        let mut tape = Tape::new();
        let bound = enc.params().bind(&mut tape, false);
        let geom = enc.geometry(coords);
        let z = enc.forward(&mut tape, &bound, atomic_numbers, &geom).unwrap();
        tape.value(z).clone()
    }

    #[test]
    fn pairwise_distance_examples() {
        let d = pairwise_distances(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]);
        assert_eq!(d.at(0, 1), 5.0);
        assert_eq!(d.at(1, 0), 5.0);
        assert_eq!(d.at(0, 0), 0.0);

        let coords = [[0.1, 0.7, -0.3], [1.0, -0.2, 0.4], [-0.5, 0.9, 2.0]];
        let rot = random_rotation(3);
        let moved = apply_rigid_motion(&coords, &rot, [5.0, -2.0, 1.0]);
        let a = pairwise_distances(&coords);
        let b = pairwise_distances(&moved);
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.at(i, j) - b.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_atom_is_coordinate_independent() {
        let enc = Encoder3D::<f64>::init(tiny_config(), 9);
        let a = encode_f64(&enc, &[6], &[[0.0, 0.0, 0.0]]);
        let b = encode_f64(&enc, &[6], &[[100.0, -3.0, 7.0]]);
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_element_rejected() {
        let enc = Encoder3D::<f64>::init(tiny_config(), 9);
        let mut tape = Tape::new();
        let bound = enc.params().bind(&mut tape, false);
        let geom = enc.geometry(&[[0.0; 3]]);
        let err = enc.forward(&mut tape, &bound, &[99], &geom).unwrap_err();
        assert!(matches!(err, EncoderError::UnknownElement { .. }));
    }

    #[test]
    fn rigid_motion_invariance_f64() {
        let enc = Encoder3D::<f64>::init(tiny_config(), 1);
        let ds = generate_synthetic(&SyntheticConfig {
            count: 5,
            seed: 21,
            ..Default::default()
        })
        .unwrap();
        for (ri, r) in ds.iter().enumerate() {
            let zs: Vec<u8> = r.graph.atoms.iter().map(|a| a.atomic_number).collect();
            let coords = &r.conformer.as_ref().unwrap().coords;
            let base = encode_f64(&enc, &zs, coords);
            for m in 0..3u64 {
                let rot = random_rotation(1000 + 10 * ri as u64 + m);
                let moved = apply_rigid_motion(coords, &rot, [1.0, -4.0, 2.5]);
                let out = encode_f64(&enc, &zs, &moved);
                let max_dev = base
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(max_dev < 1e-8, "deviation {max_dev}");
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let enc = Encoder3D::<f64>::init(tiny_config(), 2);
        let ds = generate_synthetic(&SyntheticConfig {
            count: 3,
            seed: 33,
            ..Default::default()
        })
        .unwrap();
        for r in ds.iter() {
            let zs: Vec<u8> = r.graph.atoms.iter().map(|a| a.atomic_number).collect();
            let coords = &r.conformer.as_ref().unwrap().coords;
            let n = zs.len();
            let base = encode_f64(&enc, &zs, coords);
            // Reverse permutation: atom i moves to position n-1-i.
            let perm: Vec<usize> = (0..n).rev().collect();
            let zs_p: Vec<u8> = perm.iter().map(|&old| zs[old]).collect();
            let coords_p: Vec<[f64; 3]> = perm.iter().map(|&old| coords[old]).collect();
            let out = encode_f64(&enc, &zs_p, &coords_p);
            for (new, &old) in perm.iter().enumerate() {
                for c in 0..enc.config.hidden_dim {
                    assert!(
                        (out.at(new, c) - base.at(old, c)).abs() < 1e-10,
                        "row mismatch at {new}"
                    );
                }
            }
        }
    }

    #[test]
    fn noise_head_zero_for_single_atom() {
        let config = tiny_config();
        let enc = Encoder3D::<f64>::init(config.clone(), 4);
        let head = NoiseHead::<f64>::init(&config, 5);
        let mut tape = Tape::new();
        let be = enc.params().bind(&mut tape, false);
        let bh = head.params().bind(&mut tape, false);
        let geom = enc.geometry(&[[1.0, 2.0, 3.0]]);
        let z = enc.forward(&mut tape, &be, &[8], &geom).unwrap();
        let pred = head.forward(&mut tape, &bh, z, &geom).unwrap();
        assert_eq!(pred.isolated_atoms, 1);
        assert_eq!(tape.value(pred.var).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn noise_head_rotation_equivariance() {
        let config = tiny_config();
        let enc = Encoder3D::<f64>::init(config.clone(), 6);
        let head = NoiseHead::<f64>::init(&config, 7);
        let coords = vec![
            [0.0, 0.0, 0.0],
            [1.4, 0.3, -0.2],
            [-0.8, 1.1, 0.9],
            [0.4, -1.2, 1.3],
        ];
        let zs = [6u8, 7, 8, 6];
        let predict = |coords: &[[f64; 3]]| -> Tensor<f64> {
            let mut tape = Tape::new();
            let be = enc.params().bind(&mut tape, false);
            let bh = head.params().bind(&mut tape, false);
            let geom = enc.geometry(coords);
            let z = enc.forward(&mut tape, &be, &zs, &geom).unwrap();
            let pred = head.forward(&mut tape, &bh, z, &geom).unwrap();
            tape.value(pred.var).clone()
        };
        let base = predict(&coords);
        for m in 0..5u64 {
            let rot = random_rotation(50 + m);
            let moved = apply_rigid_motion(&coords, &rot, [2.0, 0.5, -1.0]);
            let out = predict(&moved);
            for i in 0..coords.len() {
                let expect = apply_rotation(&rot, [base.at(i, 0), base.at(i, 1), base.at(i, 2)]);
                for k in 0..3 {
                    assert!(
                        (out.at(i, k) - expect[k]).abs() < 1e-9,
                        "equivariance violated at atom {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn noise_head_antisymmetric_on_identical_dumbbell() {
        let config = tiny_config();
        let enc = Encoder3D::<f64>::init(config.clone(), 8);
        let head = NoiseHead::<f64>::init(&config, 9);
        let coords = vec![[0.0, 0.0, 0.0], [1.5, 0.0, 0.0]];
        let mut tape = Tape::new();
        let be = enc.params().bind(&mut tape, false);
        let bh = head.params().bind(&mut tape, false);
        let geom = enc.geometry(&coords);
        let z = enc.forward(&mut tape, &be, &[6, 6], &geom).unwrap();
        let pred = head.forward(&mut tape, &bh, z, &geom).unwrap();
        let v = tape.value(pred.var);
        for k in 0..3 {
            assert!((v.at(0, k) + v.at(1, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn rbf_centers_strictly_increasing() {
        let rbf = RbfExpansion::new(16, 6.0);
        assert!(rbf.centers.windows(2).all(|w| w[0] < w[1]));
        assert!(rbf.gamma > 0.0);
        assert_eq!(rbf.centers.len(), 16);
        assert_eq!(*rbf.centers.last().unwrap(), 6.0);
    }
}

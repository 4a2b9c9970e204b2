//! Training objectives: denoising, graph- and node-level distillation, the
//! contrastive baseline, and finetuning losses.

use crate::autodiff::{
    xavier_uniform, zeros_init, AdError, BoundParams, ParamId, ParamSet, Tape, Tensor, VarId,
};
use crate::encoder2d::{pool_mean, Encoder2D, Encoder2DError, TokenSequence};
use crate::encoder3d::{Encoder3D, EncoderError, NoiseHead};
use crate::moldata::{Conformer, MoleculeGraph};
use crate::real::Real;
use crate::seeding::rng_from;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveError {
    MissingConformer,
    /// Contrastive batches need at least two items for negatives.
    BatchTooSmall { batch: usize },
    AtomCountMismatch { graph: usize, conformer: usize },
    NonPositiveSigma { sigma: f64 },
    Encoder3D(EncoderError),
    Encoder2D(Encoder2DError),
    Ad(AdError),
}

impl fmt::Display for ObjectiveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveError::MissingConformer => write!(f, "record has no conformer"),
            ObjectiveError::BatchTooSmall { batch } => {
                write!(f, "contrastive batch needs >= 2 items, got {batch}")
            }
            ObjectiveError::AtomCountMismatch { graph, conformer } => {
                write!(f, "graph has {graph} atoms, conformer {conformer} rows")
            }
            ObjectiveError::NonPositiveSigma { sigma } => {
                write!(f, "noise scale must be positive, got {sigma}")
            }
            ObjectiveError::Encoder3D(e) => write!(f, "{e}"),
            ObjectiveError::Encoder2D(e) => write!(f, "{e}"),
            ObjectiveError::Ad(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ObjectiveError {}

impl From<EncoderError> for ObjectiveError {
    fn from(e: EncoderError) -> Self {
        ObjectiveError::Encoder3D(e)
    }
}

impl From<Encoder2DError> for ObjectiveError {
    fn from(e: Encoder2DError) -> Self {
        ObjectiveError::Encoder2D(e)
    }
}

impl From<AdError> for ObjectiveError {
    fn from(e: AdError) -> Self {
        ObjectiveError::Ad(e)
    }
}

pub type ObjectiveResult<T> = Result<T, ObjectiveError>;

/// Default noise scale in ångström: small against the 1.5 Å bond scale, so
/// perturbations stay in the harmonic regime.
pub const DEFAULT_SIGMA: f64 = 0.1;

/// A clean conformer, its Gaussian perturbation, and the injected noise.
#[derive(Debug, Clone)]
pub struct NoiseSample {
    pub clean: Conformer,
    pub perturbed: Conformer,
    /// (N, 3), entries i.i.d. standard normal.
    pub noise: Tensor<f64>,
    pub sigma: f64,
}

/// Perturb each coordinate with seeded Gaussian noise of scale `sigma`.
pub fn sample_noise(conformer: &Conformer, sigma: f64, seed: u64) -> ObjectiveResult<NoiseSample> {
    if sigma <= 0.0 {
        return Err(ObjectiveError::NonPositiveSigma { sigma });
    }
    let mut rng = rng_from(seed);
    let n = conformer.num_atoms();
    let mut noise = Vec::with_capacity(3 * n);
    let perturbed = conformer
        .coords
        .iter()
        .map(|&r| {
            let mut p = r;
            for (k, slot) in p.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(&mut rng);
                noise.push(e);
                *slot = r[k] + sigma * e;
            }
            p
        })
        .collect();
    Ok(NoiseSample {
        clean: conformer.clone(),
        perturbed: Conformer { coords: perturbed },
        noise: Tensor::matrix(n, 3, noise).expect("sized"),
        sigma,
    })
}

/// Mean over all 3N entries of squared error between the predicted and the
/// injected noise. The teacher reads the perturbed conformer.
pub fn denoise_loss<F: Real>(
    tape: &mut Tape<F>,
    teacher: &Encoder3D<F>,
    head: &NoiseHead<F>,
    teacher_bound: &BoundParams,
    head_bound: &BoundParams,
    atomic_numbers: &[u8],
    sample: &NoiseSample,
) -> ObjectiveResult<VarId> {
    let geom = teacher.geometry(&sample.perturbed.coords);
    let z = teacher.forward(tape, teacher_bound, atomic_numbers, &geom)?;
    let pred = head.forward(tape, head_bound, z, &geom)?;
    let target = tape.constant(sample.noise.cast::<F>());
    Ok(tape.mse(pred.var, target)?)
}

/// Learned affine map. Serves as the distillation projection (student to
/// teacher width, discarded before finetuning) and as the finetune
/// prediction head.
pub struct LinearHead<F: Real> {
    params: ParamSet<F>,
    w: ParamId,
    b: ParamId,
}

/// Spec name for the distillation-time student-to-teacher projection.
pub type ProjectionHead<F> = LinearHead<F>;

impl<F: Real> LinearHead<F> {
    pub fn init(prefix: &str, in_dim: usize, out_dim: usize, layer_index: usize, seed: u64) -> Self {
        let mut params = ParamSet::new();
        let mut rng = rng_from(seed);
        let w = params.add(
            format!("{prefix}/w"),
            layer_index,
            xavier_uniform(&mut rng, in_dim, out_dim),
        );
        let b = params.add(format!("{prefix}/b"), layer_index, zeros_init(vec![out_dim]));
        LinearHead { params, w, b }
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    pub fn out_dim(&self) -> usize {
        self.params.get(self.b).value.numel()
    }

    pub fn apply(&self, tape: &mut Tape<F>, bound: &BoundParams, x: VarId) -> ObjectiveResult<VarId> {
        let y = tape.matmul(x, bound.var(self.w))?;
        Ok(tape.bias_add(y, bound.var(self.b))?)
    }
}

/// Squared L2 distance between the projected mean-pooled student
/// representation and the mean-pooled teacher representation, averaged over
/// the teacher dimensions. The teacher representation enters as a constant
/// (it comes from a frozen model).
pub fn distill_graph_loss<F: Real>(
    tape: &mut Tape<F>,
    student_nodes: VarId,
    projection: &LinearHead<F>,
    projection_bound: &BoundParams,
    teacher_nodes: &Tensor<F>,
) -> ObjectiveResult<VarId> {
    let pooled = pool_mean(tape, student_nodes)?;
    let projected = projection.apply(tape, projection_bound, pooled)?;
    let teacher_const = tape.constant(teacher_nodes.clone());
    let teacher_pooled = tape.mean_axis(teacher_const, 0)?;
    Ok(tape.mse(projected, teacher_pooled)?)
}

/// Mean over N×d_t entries of squared error between projected student node
/// representations and teacher per-atom representations.
pub fn distill_node_loss<F: Real>(
    tape: &mut Tape<F>,
    student_nodes: VarId,
    projection: &LinearHead<F>,
    projection_bound: &BoundParams,
    teacher_nodes: &Tensor<F>,
) -> ObjectiveResult<VarId> {
    let n_student = tape.value(student_nodes).shape()[0];
    if teacher_nodes.shape()[0] != n_student {
        return Err(ObjectiveError::AtomCountMismatch {
            graph: n_student,
            conformer: teacher_nodes.shape()[0],
        });
    }
    let projected = projection.apply(tape, projection_bound, student_nodes)?;
    let teacher_const = tape.constant(teacher_nodes.clone());
    Ok(tape.mse(projected, teacher_const)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillVariant {
    Graph,
    Node,
}

impl fmt::Display for DistillVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistillVariant::Graph => write!(f, "graph"),
            DistillVariant::Node => write!(f, "node"),
        }
    }
}

/// Distillation loss with the teacher run inline on the same tape, bound
/// frozen: the backward pass writes no teacher gradients. The teacher reads
/// the clean conformer.
#[allow(clippy::too_many_arguments)]
pub fn distill_loss_with_live_teacher<F: Real>(
    tape: &mut Tape<F>,
    variant: DistillVariant,
    student: &Encoder2D<F>,
    student_bound: &BoundParams,
    projection: &LinearHead<F>,
    projection_bound: &BoundParams,
    teacher: &Encoder3D<F>,
    teacher_bound_frozen: &BoundParams,
    graph: &MoleculeGraph,
    tokens: &TokenSequence,
    conformer: &Conformer,
) -> ObjectiveResult<VarId> {
    if conformer.num_atoms() != graph.num_atoms() {
        return Err(ObjectiveError::AtomCountMismatch {
            graph: graph.num_atoms(),
            conformer: conformer.num_atoms(),
        });
    }
    let atomic_numbers: Vec<u8> = graph.atoms.iter().map(|a| a.atomic_number).collect();
    let geom = teacher.geometry(&conformer.coords);
    let teacher_var = teacher.forward(tape, teacher_bound_frozen, &atomic_numbers, &geom)?;
    let teacher_nodes = tape.value(teacher_var).clone();
    let encoded = student.forward(tape, student_bound, graph, tokens, false)?;
    match variant {
        DistillVariant::Graph => distill_graph_loss(
            tape,
            encoded.node_reps,
            projection,
            projection_bound,
            &teacher_nodes,
        ),
        DistillVariant::Node => distill_node_loss(
            tape,
            encoded.node_reps,
            projection,
            projection_bound,
            &teacher_nodes,
        ),
    }
}

/// Symmetrized NTXent over a batch of pooled representations: cosine
/// similarities scaled by 1/temperature, cross entropy of matching i to i,
/// averaged over both matching directions.
pub fn ntxent_loss<F: Real>(
    tape: &mut Tape<F>,
    student_reps: VarId,
    teacher_reps: VarId,
    temperature: f64,
) -> ObjectiveResult<VarId> {
    let b = tape.value(student_reps).shape()[0];
    if b < 2 {
        return Err(ObjectiveError::BatchTooSmall { batch: b });
    }
    let s = tape.normalize_rows(student_reps)?;
    let t = tape.normalize_rows(teacher_reps)?;
    let tt = tape.transpose(t)?;
    let sims = tape.matmul(s, tt)?;
    let logits = tape.scale(sims, F::from_f64(1.0 / temperature))?;
    let forward = tape.nll_diagonal(logits)?;
    let logits_t = tape.transpose(logits)?;
    let backward = tape.nll_diagonal(logits_t)?;
    let sum = tape.add(forward, backward)?;
    Ok(tape.scale(sum, F::from_f64(0.5))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Regression,
    Classification,
}

/// L1 for regression, BCE-with-logits for classification; missing labels
/// are masked out.
pub fn finetune_loss<F: Real>(
    tape: &mut Tape<F>,
    prediction: VarId,
    labels: &[Option<f64>],
    task: TaskType,
) -> ObjectiveResult<VarId> {
    let shape = tape.value(prediction).shape().to_vec();
    let values: Vec<F> = labels
        .iter()
        .map(|l| F::from_f64(l.unwrap_or(0.0)))
        .collect();
    let valid: Vec<bool> = labels.iter().map(|l| l.is_some()).collect();
    let target = tape.constant(Tensor::new(shape, values)?);
    let loss = match task {
        TaskType::Regression => tape.l1(prediction, target, Some(&valid))?,
        TaskType::Classification => tape.bce_with_logits(prediction, target, Some(&valid))?,
    };
    Ok(loss)
}

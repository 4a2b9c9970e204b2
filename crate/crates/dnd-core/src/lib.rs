//! Denoise-and-distill molecular pretraining, desk scale.
//!
//! The pipeline pretrains an SE(3)-invariant 3D conformer encoder by noise
//! prediction, distills its representations (graph- or node-level) into a
//! permutation-equivariant 2D graph transformer, and finetunes the student
//! on property prediction. Everything runs on a self-contained reverse-mode
//! autodiff core over dense arrays; no external tensor runtime.

pub mod analysis;
pub mod autodiff;
pub mod encoder2d;
pub mod encoder3d;
pub mod moldata;
pub mod objectives;
pub mod real;
pub mod seeding;
pub mod trainer;

pub use autodiff::{Gradients, Tape, Tensor, VarId};
pub use real::Real;

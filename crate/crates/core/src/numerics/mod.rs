//! Dense arrays, reverse-mode gradients, and the optimizer primitives the
//! tagger and character language models are trained with.

pub mod array;
mod gradcheck;
mod graph;
mod param;
mod rng;

pub use array::{Array, Shape};
pub use gradcheck::{gradient_check, relative_error, CoordinateCheck, GradCheckReport};
pub use graph::{dropout, Gradients, Graph, Var};
pub(crate) use graph::dropout_mask;
pub use param::{clip_grad_norm, sgd_step, NonFiniteGradient, ParamSet, Parameter};
pub use rng::Rng;

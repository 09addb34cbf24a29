//! Dense matrices, the differentiation tape, and optimizers.

mod dense;
mod gradcheck;
mod optim;
mod tape;

pub use dense::{matmul, Tensor};
pub use gradcheck::{finite_diff_check, GradCheck, GRAD_FLOOR};
pub use optim::{AdamState, Optimizer, Sgd};
pub use tape::{softmax_rows, Gradients, Reduce, Tape, Var};

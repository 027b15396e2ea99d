//! Dense networks, the gated recurrent trajectory encoder, and Adam.
//!
//! Parameters are stored flat so that optimizers, Polyak averaging and
//! gradient clipping operate on plain slices. Forward and backward passes
//! are generic over [`crate::Scalar`]: running a backward pass on
//! [`crate::Dual`] inputs yields exact Hessian-vector products, which the
//! R1 penalty and the differentiable MPC unroll rely on.

mod adam;
mod dense;
mod gru;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use dense::{DenseNet, DenseTrace};
pub use gru::{EncoderTrace, RecurrentEncoder, RecurrentEncoderParams};
pub use mlp::{
    glorot_init, Activation, ForwardTrace, NetworkParams, NetworkSpec, OutputActivation,
};

//! A small transformer encoder-decoder with an indicator-guided copy
//! mechanism, trained with hand-rolled reverse-mode gradients.
//!
//! The copy distribution over source positions is the final decoder layer's
//! head-averaged cross-attention, reweighted per position by
//! `sigmoid(w_fuse * h_c + b_fuse)` and renormalized. With `w_fuse = 0` the
//! reweighting is uniform and the model reduces to a plain pointer-generator.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod synthetic;
pub mod tape;
pub mod tensor;
pub mod train;

pub use checkpoint::{checkpoint_bytes, read_checkpoint, write_checkpoint};
pub use config::{ModelConfig, Strategy, TrainConfig, BOS, EOS, FIRST_TOKEN, PAD};
pub use decode::{beam_decode, copied_f1_on, greedy_decode, Decoded};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{loss_total, shift_right, CopyIndicator, EncoderStates, Example, ForwardTrace, LossBreakdown, Model, Objective};
pub use params::{init_model, init_std, Params};
pub use synthetic::{make_synthetic_task, SyntheticTask};
pub use tensor::Mat;
pub use train::{grad, grad_sequential, smoothed_endpoints, train, train_from, StepLog};

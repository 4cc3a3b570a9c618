//! Hardness regression network: a small autodiff engine, the conv-LSTM model,
//! its variance-penalised loss, AdamW, augmentation and the training loop.

pub mod augment;
pub mod gemm;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod train;

pub use augment::{augment, prepare_input, AugmentParams};
pub use loss::{hardness_loss, hardness_loss_grad, LossValue};
pub use model::{Checkpoint, HardnessModel, Mode, ModelConfig};
pub use optim::{AdamW, AdamWConfig, GroupRates, Plateau};
pub use params::{Grads, Group, ParamStore};
pub use tape::{ConvGeom, Tape, Var};
pub use train::{
    batch_gradient, evaluate, leave_one_object_out, predict, train, train_direct, train_phase, EvalMetrics, LooReport, MetricHistory,
    Phase, TrainConfig, TrainSets,
};

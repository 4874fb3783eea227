//! Learned multi-user reliability codes and their baselines.

mod baselines;
mod codec;
mod config;
mod train;

pub use baselines::{baseline_joint_decoding, baseline_time_sharing, JointDecoder, TimeSharingConfig, TimeSharingPoint, TimeSharingResult};
pub use codec::{decode_sic, Algorithm, CodeSystem, CodecPair, CodecSet};
pub use config::{CodeConfig, Role, TrainConfig, UserSpec, MAX_BLOCKLENGTH};
pub use train::{train, train_ptp, train_sic, train_with_history, TrainHistory};

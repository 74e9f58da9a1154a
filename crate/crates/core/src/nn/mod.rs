//! U-shaped encoder–decoder with hand-written backward passes, trained by
//! Adam on mean squared error.

pub mod layers;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod unet;

pub use layers::{avg_pool2, avg_pool2_backward, BatchNorm2d, Conv2d, Param, Relu, UpConv2d};
pub use optim::{lr_schedule, mse_loss, Adam, AdamConfig};
pub use tensor::{concat_channels, split_channels, Tensor4};
pub use train::{predict, train, EpochRecord, TrainConfig, TrainData, TrainOutcome};
pub use unet::{ConvBlock, ShapeTrace, UNet, UNetConfig};

//! The confocal directional light-cone transform.

mod fft;
pub mod kernels;
pub mod operator;
pub mod oracle;
pub mod resample;

pub use kernels::{build_cone_kernels, ConeKernelSet};
pub use operator::{wiener_filter, DlctOperator, OperatorOptions, DEFAULT_ATTENUATION_EXPONENT};
pub use oracle::{brute_force_forward, discrete_conv_oracle, volume_points, ScenePoint};
pub use resample::{Resampler, TransformedVolume};

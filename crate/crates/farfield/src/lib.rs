//! Far-field multi-channel speech enhancement toolkit.
//!
//! The crate covers the full chain needed to study cocktail-party speech
//! enhancement with microphone arrays:
//!
//! * [`wave`] / [`stft`] — multi-channel audio containers, WAV I/O and a
//!   perfectly reconstructing STFT front end,
//! * [`mask`] — complex time-frequency masks plus spatial features
//!   (log-power spectra, inter-channel phase differences, angle features),
//! * [`linalg`] — narrowband Hermitian PSD estimation, variance flooring and
//!   stable solves shared by all beamformers,
//! * [`mvdr`] — mask-based minimum-variance distortionless-response
//!   separation,
//! * [`dereverb`] — weighted-prediction-error (WPE) and spectral-masking
//!   dereverberation,
//! * [`wpd`] — the convolutional beamformer that performs both jobs with a
//!   single filter,
//! * [`pipeline`] — the three ways of chaining separation and
//!   dereverberation,
//! * [`room`] — an image-method room simulator and cocktail-party scene
//!   sampler,
//! * [`metrics`] — SI-SNR, spectral MSE, STOI and SRMR,
//! * [`cli`] — batch simulate / enhance / evaluate drivers used by the
//!   `farfield` binary.

pub mod cli;
pub mod dereverb;
pub mod error;
pub mod linalg;
pub mod mask;
pub mod metrics;
pub mod mvdr;
pub mod pipeline;
pub mod room;
pub mod stft;
pub mod synth;
pub mod wave;
pub mod wpd;

pub use error::{Error, Result};

/// Double-precision complex sample used throughout the crate.
pub type C64 = num_complex::Complex<f64>;

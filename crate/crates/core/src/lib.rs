//! Observer/Kalman filter identification from input/output records with
//! colored measurement noise.

pub mod analysis;
pub mod benchmark;
pub mod cli;
pub mod era;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod okid;

pub use analysis::{compare_frequency_responses, frequency_response, validate_kalman, FrequencyResponse};
pub use era::{identify, EraOptions, IdentifiedModel, OrderSelection};
pub use error::{Error, Result};
pub use model::{ColoringFilter, NoiseSpec, StateSpaceModel, TimeSeriesDataset};
pub use okid::{MarkovParameterSet, OkidConfig};

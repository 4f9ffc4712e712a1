//! Photon-stream simulation and time-correlated single-photon analysis.
//!
//! [`stream`] holds the `.phst` record format, [`sim`] generates streams from
//! a blinking emitter model, and [`correlation`], [`lifetime`] and
//! [`fitting`] analyze them. [`oracle`] has slow reference implementations
//! used to cross-check the fast paths.

pub mod correlation;
pub mod fitting;
pub mod lifetime;
pub mod modes;
pub mod oracle;
pub mod sim;
pub mod stream;

pub use correlation::{
    bin_intensity, g2_envelope, g2_pulsed, intensity_histogram, log_tau_grid, subtract_background, threshold_states,
    CorrelationError, EnvelopeOptions, G2Envelope, G2Histogram, G2Options, IntensityTrace, OccurrenceHistogram,
    StateLabels,
};
pub use fitting::{
    fit_nonlinear, fit_saturation, FitError, FitOptions, FitProblem, FitResult, Model, Objective, Parameter,
    SaturationFit, SaturationPoint,
};
pub use lifetime::{
    bin_lifetime_estimate, build_flid, decay_histogram, fit_multiexp, intensity_lifetime_correlation, DecayHistogram,
    FlidGrid, FlidOptions, LifetimeError, MultiExpFit,
};
pub use sim::{
    expected_rate, simulate_stream, BlinkingModel, DetectorParams, EmitterParams, SimConfig, SimError,
};
pub use stream::{decode_stream, encode_stream, PhotonRecord, PhotonStream, StreamError, StreamHeader};

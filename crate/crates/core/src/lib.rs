//! Online sparse identification of governing equations by Bayesian
//! regression over a basis-function dictionary.
//!
//! The coefficient posterior is kept in information form so that new data
//! is multiplied in and expired data divided out. A horseshoe prior shrinks
//! inactive terms, and a monitor checks that every division is well posed.

pub mod analyze;
pub mod dictionary;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod monitor;
pub mod pipeline;
pub mod posterior;
pub mod recursion;
pub mod simulate;

pub use dictionary::{DictionarySpec, Sample};
pub use error::{BrslError, Result};
pub use gaussian::{InformationForm, Moment1D};
pub use monitor::{Classification, PeReport, UtilityReport};
pub use posterior::{HorseshoeMode, HorseshoeState, NoiseModel, PosteriorSnapshot, PosteriorState};
pub use recursion::{ConditionTiming, RecursionConfig, RecursionState, StepOutcome, ViolationPolicy};

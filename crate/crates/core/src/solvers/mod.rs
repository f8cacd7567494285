//! Ground states, the coupling threshold, semi-trivial classification, the
//! mountain-pass path algorithm and the regime classifier.

pub mod classify;
pub mod ground;
pub mod linalg;
pub mod mountain;
pub mod newton;
pub mod nubar;
pub mod regime;

pub use classify::{classify_semitrivial, classify_with, Character, Classification};
pub use ground::{ground_state, GroundInit, GroundStateResult};
pub use mountain::{mountain_pass, MPResult, MpOptions};
pub use newton::newton_polish;
pub use nubar::{nu_bar, NuBarResult};
pub use regime::{regime_report, Regime, RegimeOptions, RegimeReport};

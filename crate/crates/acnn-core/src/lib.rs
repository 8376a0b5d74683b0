//! Attentive convolutional network for binary speech emotion classification,
//! plus the logMel frontend, corpus handling, experiment protocols, and
//! attention analysis that go with it.

pub mod attention;
pub mod cli;
pub mod corpus;
pub mod dsp;
pub mod experiments;
pub mod model;
pub mod numeric;

//! Receiver-deniable image steganography.
//!
//! One cover image carries a real message and a fake one. The receiver
//! extracts the real message in normal operation; under coercion they can
//! extract (or cryptographically fabricate) the fake one instead. Two routes
//! are provided: exact classic constructions (`classic`) built on a
//! one-time-pad XOR layer and keyed LSB location splitting, and a trainable
//! encoder / multi-decoder / adversary network (`networks`, `training`)
//! with a balanced message loss.

pub mod autodiff;
pub mod bitmsg;
pub mod classic;
pub mod config;
pub mod corpus;
pub mod imaging;
pub mod losses;
pub mod model_io;
pub mod networks;
pub mod rng;
pub mod scenario;
pub mod training;

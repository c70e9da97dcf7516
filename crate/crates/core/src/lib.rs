//! Online bearing health monitoring with a one-class OS-ELM.
//!
//! Vibration snapshots are averaged, compressed to five features (either the
//! code layer of a small autoencoder or five handcrafted statistics), and fed
//! one at a time to a one-class OS-ELM. After its output weights settle, the
//! deviation of each prediction from the "healthy" target is compared against
//! an adaptive threshold `T = K (mu_t + sigma_t)` built from the training
//! deviations.
//!
//! ```
//! use bearing_monitor::{harness::MonitorSession, oselm::OselmModel};
//!
//! let model = OselmModel::init_random(2, 10, 100.0, 7).unwrap();
//! let mut session = MonitorSession::new(model, Some(10.0)).unwrap();
//! let mut records = Vec::new();
//! for i in 0..200 {
//!     let x = [0.5 + 1e-3 * (i % 3) as f64, 0.2];
//!     records.extend(session.push(&x).unwrap());
//! }
//! assert_eq!(records.len(), 200);
//! ```

pub mod anomaly;
pub mod autoencoder;
mod codec;
pub mod dataset;
pub mod error;
pub mod features;
pub mod harness;
pub mod oselm;

pub use error::{Error, Result};

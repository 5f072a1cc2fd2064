//! Edge-label refinement and crispness-aware edge evaluation.

pub mod canny;
pub mod elastic;
pub mod error;
pub mod imagecore;
pub mod inpaint;
pub mod metrics;
pub mod nms;
pub mod pipeline;
pub mod refine;
pub mod synthetic;

pub use error::{Error, Result};
pub use imagecore::{BinaryEdgeMap, EdgeMap, GrayImage, Grid, Rect};

//! Training-free, annotation-free and guidance-free open-vocabulary semantic
//! segmentation over precomputed dense image features.
//!
//! The engine clusters self-supervised per-pixel features into segment
//! candidates, pools image-text features over each segment, retrieves the
//! closest captions from a caption-embedding database and names every
//! segment with a word drawn from those captions. An evaluation harness
//! scores the resulting label maps against ground truth after mapping free
//! form words onto a dataset's class list.

pub mod caption_index;
pub mod dense_features;
pub mod error;
pub mod evaluator;
pub mod kmeans;
pub mod label_png;
pub mod pipeline;
pub mod render;
pub mod segmenter;
pub mod tensor_store;
pub mod word_pipeline;

pub use error::{Error, Result};

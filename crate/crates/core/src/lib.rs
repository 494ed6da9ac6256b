//! groundtex — ground-texture image retrieval at desk scale.
//!
//! The toolkit covers the full loop of overlap-supervised image retrieval for
//! ground-texture localization:
//!
//! 1. **geometry** – exact footprint overlap fractions (training labels and
//!    evaluation ground truth) and pose errors.
//! 2. **synth** – procedural texture canvases, posed patch rendering, map
//!    generation and the CSV manifest format for user-supplied maps.
//! 3. **pairs** – positive/negative Siamese pair construction with
//!    flip/rotation augmentation.
//! 4. **embednet** – a compact CNN trained with the overlap loss
//!    `(d - (1 - o))^2` in Siamese configuration, from-scratch forward,
//!    backward, and Adam with decoupled weight decay.
//! 5. **index** – exact k-d tree top-k retrieval with a brute-force oracle.
//! 6. **bow** – the Bag-of-Visual-Words baseline: DoG keypoints, gradient
//!    histogram descriptors, k-means vocabulary, tf-idf histograms.
//! 7. **evalloc** – overlap-thresholded recall@k, failure counting, feature
//!    matching + RANSAC rigid pose estimation, localization campaigns and
//!    report files.

pub mod benchmark;
pub mod bow;
pub mod embedding;
pub mod embednet;
pub mod error;
pub mod evalloc;
pub mod geometry;
pub mod index;
pub mod pairs;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};

//! Moving-object detection toolkit.
//!
//! * [`ingest`]: readers and writers for KITTI raw drives, optical-flow files and masks.
//! * [`geometry`]: rigid transforms, GPS poses and the LiDAR-to-pixel projection chain.
//! * [`annotation`]: Moving/Static labelling of tracked objects and motion-mask export.
//! * [`models`]: ShuffleNet encoders, the FCN8s decoder and every fusion topology.
//! * [`eval`]: confusion matrices, IoU, class weights and the fps harness.
//! * [`synth`]: deterministic synthetic scenes, drives and low-light degradations.

pub mod annotation;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod models;
pub mod synth;

pub mod geometry;
pub mod ingest;
pub mod distances;
pub mod corrections;
pub mod demand;
pub mod segmentation;
pub mod stations;
pub mod report;
pub mod synth;

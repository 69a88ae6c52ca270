pub mod analytics;
pub mod design;
pub mod direct;
pub mod exposure;
pub mod graph;
pub mod panel;
pub mod persistence;
pub mod pipeline;
pub mod simulate;
pub mod upstream;
pub mod validate;

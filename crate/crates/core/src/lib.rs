pub mod element;
pub mod error;
pub mod ingest;
pub mod table;
pub mod text;
pub mod filter;
pub mod chunk;
pub mod predict;
pub mod annotations;
pub mod apply;
pub mod par;
pub mod tree;
pub mod summary;
pub mod eval;
pub mod export;
pub mod config;
pub mod pipeline;

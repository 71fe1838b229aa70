//! Image manipulation forensics: JPEG structure and metadata fingerprinting,
//! a baseline JPEG codec with pixel-domain analyses, and an Android
//! extraction scanner.

pub mod analysis;
pub mod codec;
pub mod datefmt;
pub mod exif;
pub mod filename;
pub mod fixtures;
pub mod metadata;
pub mod pipeline;
pub mod refdb;
pub mod scanner;
pub mod segments;

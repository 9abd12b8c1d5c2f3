//! Conditional teacher-student distillation for dimensional speech emotion
//! recognition: a multimodal (audio + text) teacher guides an audio-only
//! student, gated by how well the teacher fits each training label.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod filter;
pub mod gradcheck;
pub mod losses;
pub mod trainer;

pub use error::{Error, Result};

//! The guide under `book/src`, one module per chapter so that
//! `cargo test --doc` runs every code block against the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/probability-maps.md")]
pub mod probability_maps {}
#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/postprocessing.md")]
pub mod postprocessing {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}

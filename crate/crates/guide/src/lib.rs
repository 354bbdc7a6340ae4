//! The chapters of `book/` compiled as doc-tests, one module per chapter,
//! so `cargo test` catches listings that drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/annotations.md")]
pub mod annotations {}

#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}

#[doc = include_str!("../../../book/src/window-loss.md")]
pub mod window_loss {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/ablation.md")]
pub mod ablation {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}

// Compiles the book's snippets as doc-tests so they cannot drift.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/dead-units.md")]
mod dead_units {}

#[doc = include_str!("../../../book/src/penalty.md")]
mod penalty {}

#[doc = include_str!("../../../book/src/training.md")]
mod training {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
mod diagnostics {}

#[doc = include_str!("../../../book/src/data.md")]
mod data {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}

//! The guide in `book/` is plain mdbook, which cannot run listings that
//! depend on workspace crates. Each chapter is included here as the
//! documentation of an empty module, so `cargo test --doc` compiles and
//! runs every listing; a failure names the chapter's module.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/alignment.md")]
pub mod alignment {}
#[doc = include_str!("../../../book/src/missions.md")]
pub mod missions {}
#[doc = include_str!("../../../book/src/planning.md")]
pub mod planning {}
#[doc = include_str!("../../../book/src/trajectories.md")]
pub mod trajectories {}
#[doc = include_str!("../../../book/src/formation.md")]
pub mod formation {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/interface.md")]
pub mod interface {}

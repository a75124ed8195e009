//! The user guide, compiled.
//!
//! Each module below embeds one chapter of the book under `book/src/`, so
//! `cargo test --doc` runs every code snippet the guide shows. Read it
//! rendered (`mdbook serve book/`) or right here in rustdoc — same text,
//! same examples, kept honest by the same test run.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/mdps-and-occupancy.md")]
pub mod mdps_and_occupancy {}

#[doc = include_str!("../../../book/src/soft-bellman.md")]
pub mod soft_bellman {}

#[doc = include_str!("../../../book/src/divergences.md")]
pub mod divergences {}

#[doc = include_str!("../../../book/src/imitation.md")]
pub mod imitation {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}

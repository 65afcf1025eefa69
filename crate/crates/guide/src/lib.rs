//! Compiles every Rust listing in `book/src` as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/mixtures.md")]
pub mod mixtures {}
#[doc = include_str!("../../../book/src/measures.md")]
pub mod measures {}
#[doc = include_str!("../../../book/src/pde.md")]
pub mod pde {}
#[doc = include_str!("../../../book/src/gamma.md")]
pub mod gamma {}
#[doc = include_str!("../../../book/src/optimizer.md")]
pub mod optimizer {}
#[doc = include_str!("../../../book/src/spherical.md")]
pub mod spherical {}
#[doc = include_str!("../../../book/src/criteria.md")]
pub mod criteria {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

//! Learning small, readable decision-tree policies with reinforcement learning.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cqi;
pub mod env;
pub mod export;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod pyeatt;
pub mod schedule;
pub mod tree;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/cqi.md")]
    mod cqi {}
    #[doc = include_str!("../../../book/src/pyeatt.md")]
    mod pyeatt {}
    #[doc = include_str!("../../../book/src/robotnav.md")]
    mod robotnav {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}

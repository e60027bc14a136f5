//! Guide listings as doctests. Each chapter is its own module so a failing
//! listing points at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("../../../book/src/tracker.md")]
pub mod tracker {}
#[doc = include_str!("../../../book/src/supervised.md")]
pub mod supervised {}
#[doc = include_str!("../../../book/src/policy_gradient.md")]
pub mod policy_gradient {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

pub mod benchrunner;
pub mod databuilder;
pub mod datamodel;
pub mod judgeclient;
pub mod metrics;
pub mod mock;
pub mod promptforge;
pub mod verdictparse;

// Guide chapters are compiled as doctests so their examples stay honest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/prompts.md")]
    mod prompts {}
    #[doc = include_str!("../../../book/src/parsing.md")]
    mod parsing {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/distillation.md")]
    mod distillation {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
}

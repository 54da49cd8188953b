//! Argument mining and deliberation analytics for threaded forum discussions.
//!
//! Stages are plain functions over in-memory values: [`relevance`] selects
//! threads, [`backends`] labels posts, [`clustering`] groups arguments,
//! [`threadgraph`] measures reply trees, [`deliberation`] scores threads and
//! [`report`] renders tables and graph files. [`pipeline`] runs the same
//! stages against an on-disk [`workspace`].

pub mod backends;
pub mod clustering;
pub mod corpus;
pub mod deliberation;
pub mod error;
pub mod pipeline;
pub mod relevance;
pub mod report;
pub mod text;
pub mod threadgraph;
pub mod workspace;

pub use error::{BackendError, Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/topics.md")]
    mod topics {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/threads.md")]
    mod threads {}
    #[doc = include_str!("../../../book/src/deliberation.md")]
    mod deliberation {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/adapter.md")]
    mod adapter {}
}

//! Doc tests for the guide in `book/`.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/netlists.md")]
pub mod netlists {}

#[doc = include_str!("../../../book/src/graphs.md")]
pub mod graphs {}

#[doc = include_str!("../../../book/src/embedding.md")]
pub mod embedding {}

#[doc = include_str!("../../../book/src/reconstruction.md")]
pub mod reconstruction {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/knowledge-base.md")]
pub mod knowledge_base {}

#[doc = include_str!("../../../book/src/tutoring.md")]
pub mod tutoring {}

#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}

//! Controllable lyrics-to-melody generation.

pub mod attr;
pub mod error;
pub mod lyrics;
pub mod melody;
pub mod rng;
pub mod style;
pub mod tape;
pub mod net;
pub mod train;
pub mod eval;
pub mod model;

pub use error::{Error, Result};

/// Guide chapters under `book/src`, compiled so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/melodies.md")]
    mod melodies {}
    #[doc = include_str!("../../../book/src/lyrics.md")]
    mod lyrics {}
    #[doc = include_str!("../../../book/src/style.md")]
    mod style {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/studio.md")]
    mod studio {}
}

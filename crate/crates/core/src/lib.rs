//! Large deviations for finite-state mean-field interacting particle systems.

pub mod error;
pub mod model;
pub mod rates;
pub mod structure;
pub mod lln;
pub mod ldp;
pub mod simulate;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/lln.md")]
    mod lln {}
    #[doc = include_str!("../../../book/src/rate-function.md")]
    mod rate_function {}
    #[doc = include_str!("../../../book/src/paths.md")]
    mod paths {}
    #[doc = include_str!("../../../book/src/structure.md")]
    mod structure {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

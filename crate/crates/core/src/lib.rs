//! Safe output-feedback approximate dynamic programming.
//!
//! A projection observer with an LMI-certified error envelope feeds a critic-only
//! saturated controller whose cost carries a recentered robust log barrier.

pub mod cli;
pub mod critic;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod observer;
pub mod safety;
pub mod sim;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/observer.md")]
    mod observer {}
    #[doc = include_str!("../../../book/src/lmi.md")]
    mod lmi {}
    #[doc = include_str!("../../../book/src/safety.md")]
    mod safety {}
    #[doc = include_str!("../../../book/src/critic.md")]
    mod critic {}
    #[doc = include_str!("../../../book/src/sim.md")]
    mod sim {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

pub mod acceptance;
pub mod balls;
pub mod cli;
pub mod contact;
pub mod error;
pub mod graph;
pub mod numerics;
pub mod optimizer;
pub mod perimeter;
pub mod pansu;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/contact.md")]
    mod contact {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/pansu.md")]
    mod pansu {}
    #[doc = include_str!("../../../book/src/balls.md")]
    mod balls {}
    #[doc = include_str!("../../../book/src/perimeter.md")]
    mod perimeter {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

//! The BACIP guide, compiled. Each chapter of `book/src` becomes a module
//! so its Rust snippets run as doctests.

#[doc = include_str!("../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../book/src/credentials.md")]
pub mod credentials {}
#[doc = include_str!("../../book/src/crypto.md")]
pub mod crypto {}
#[doc = include_str!("../../book/src/storage.md")]
pub mod storage {}
#[doc = include_str!("../../book/src/ledger.md")]
pub mod ledger {}
#[doc = include_str!("../../book/src/consensus.md")]
pub mod consensus {}
#[doc = include_str!("../../book/src/anchoring.md")]
pub mod anchoring {}
#[doc = include_str!("../../book/src/gateway.md")]
pub mod gateway {}
#[doc = include_str!("../../book/src/cli.md")]
pub mod cli {}

//! Generation service and command-line front end for `conl2m`.
//!
//! [`service`] serves controllable generation over HTTP; [`cli`] exposes
//! every pipeline stage as a subcommand of the `conl2m` binary. Both go
//! through [`api::generate`], so a request produces the same melody either way.

pub mod api;
pub mod cli;
pub mod service;

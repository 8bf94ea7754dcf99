//! File formats, output encodings, parallel experiment drivers and the
//! command-line front end for the star-discrepancy toolkit.

pub mod cli;
pub mod harness;
pub mod io;
pub mod report;

//! Library side of the command-line front end: benchmark orchestration,
//! figure emission, and the subcommand implementations.

// degenerate chart ranges are guarded with `!(hi > lo)` so NaN fails too
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

pub mod bench;
pub mod commands;
pub mod svg;

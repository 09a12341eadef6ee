// SPDX-License-Identifier: Apache-2.0

//! Library side of the `rtlfix` binary.

pub mod commands;
pub mod config;
pub mod oracle;
pub mod synth;

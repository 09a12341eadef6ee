// SPDX-License-Identifier: Apache-2.0

//! RTL front end, cycle simulator, waveform tooling, linting, and SMT-based
//! template repair.

pub mod bits;
pub mod check;
pub mod lint;
pub mod rtl;
pub mod smt;
pub mod wave;

pub use bits::Bv;

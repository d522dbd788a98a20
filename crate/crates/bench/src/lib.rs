// SPDX-License-Identifier: Apache-2.0

//! Criterion benchmarks for the hot kernels; see `benches/kernels.rs`.

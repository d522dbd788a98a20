// SPDX-License-Identifier: Apache-2.0

//! Augmentation selection statistics, t-SNE and report tables.

pub mod embed;
pub mod report;
pub mod select;
pub mod stats;
pub mod tsne;

pub use embed::{export_embeddings, layout_csv, scatter_svg, EmbeddingTable};
pub use report::{build_report, dedup_ledger, format_report, parse_ledger, read_ledger, LedgerRow, ReportRow, REPORT_HEADER};
pub use select::{select_top_k, AugRunTable, Ranked, Strategy, DEFAULT_TOP_K};
pub use stats::{paired_t_test, two_sided_p, TTest};
pub use tsne::{kmeans, silhouette, tsne, TsneConfig, TsneResult};

//! Reference fusion baselines and exact operation accounting:
//! channel concatenation (DCF) and object-query cross-attention over all
//! sensors and patches (SCF).

mod bench;
mod dcf;
mod scf;

pub use bench::{
    count_attention_ops, default_grid, expected_score_evals, run_bench, write_bench_csv, BenchPoint,
    BenchRow, BenchSettings, Method, OpCount, BENCH_HEADER,
};
pub use dcf::{dcf_concat_fuse, DcfParams};
pub use scf::{scf_decode, ScfParams};

//! Strassen's algorithm for general tensor contraction.
//!
//! Tensors are never transposed or copied into matrix form. Instead each
//! operand is viewed as a matrix through scatter vectors (one element offset
//! per matricized row or column) plus block scatter vectors (the constant
//! stride of each register-sized block, or 0 when the block is irregular).
//! A GotoBLAS-style five-loop driver packs operands straight out of those
//! views, and the Strassen operand sums `Σ ±A_q`, `Σ ±B_q` are folded into
//! packing while the `Σ ±C_q += M` updates are folded into the micro-kernel.
//!
//! Three variants are provided:
//!
//! * [`Variant::Abc`] fuses everything, no temporaries.
//! * [`Variant::Ab`] materializes each product `M` and accumulates it into C.
//! * [`Variant::Naive`] additionally copies the operand sums into dense buffers.
//!
//! ```
//! use strassen_tc::{contract, ContractOptions, ContractionSpec, DenseTensor, Fill, Variant};
//!
//! let spec: ContractionSpec = "abc dca db & a:4;b:8;c:2;d:8;".parse().unwrap();
//! let a = DenseTensor::new(&spec.extents_of_a(), Fill::Random(1)).unwrap();
//! let b = DenseTensor::new(&spec.extents_of_b(), Fill::Random(2)).unwrap();
//! let mut c = DenseTensor::new(&spec.extents_of_c(), Fill::Zeros).unwrap();
//!
//! let opts = ContractOptions::new(1, Variant::Abc);
//! let stats = contract(&spec, &a, &b, &mut c, &opts).unwrap();
//! assert_eq!(stats.leaf_multiplies, 7);
//! ```

pub mod bench;
pub mod contraction;
mod error;
pub mod gemm;
pub mod kernel;
pub mod matrix;
pub mod reference;
pub mod scatter;
pub mod strassen;
pub mod tensor;

pub use contraction::{parse_benchmark_file, parse_benchmark_line, ContractionSpec, ParseError};
pub use error::{Error, Result};
pub use gemm::{run_fused, run_gemm_dense, FusedPrimitive, Workspace};
pub use kernel::{BlockingParams, ExecConfig, KernelStats, OperandSide};
pub use matrix::DenseMatrix;
pub use reference::{contract_reference, effective_gflops, relative_error, RunStats};
pub use scatter::{BlockScatterView, PAD};
pub use strassen::{contract, quadrant_views, strassen_terms, ContractOptions, StrassenTerm, Variant};
pub use tensor::{DenseTensor, Fill};

#[cfg(not(target_arch = "wasm32"))]
pub(crate) use std::time::Instant;
#[cfg(target_arch = "wasm32")]
pub(crate) use web_time::Instant;

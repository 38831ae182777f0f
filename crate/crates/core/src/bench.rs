//! Benchmark harness behind the `test_strassen` binary.
//!
//! Problems come either from synthetic sizes (`-m -n -k`) or from a file of
//! benchmark lines (`-file`). Each problem prints one tab-separated record:
//! size, seconds, total GFLOPS, effective GFLOPS, accuracy.

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::contraction::{parse_benchmark_file, ContractionSpec};
use crate::kernel::{BlockingParams, ExecConfig};
use crate::reference::{contract_reference, relative_error, RunStats};
use crate::strassen::{contract, ContractOptions, Variant};
use crate::tensor::{DenseTensor, Fill};

/// Accuracy is checked by default when every bundle is at most this large.
pub const AUTO_VERIFY_LIMIT: usize = 512;

pub const USAGE: &str = "\
usage: test_strassen (-m NI -n NJ -k NP | -file PATH) [options]

  -m, -n, -k N        synthetic bundle sizes N_I, N_J, N_P
  -mode matrix|split  synthetic layout: one label per bundle, or two (default matrix)
  -file PATH          benchmark file, one contraction per line
  -niter N            iterations per problem; the best time is reported (default 1)
  -level L            Strassen levels 0, 1 or 2 (default 1; 0 runs the plain driver)
  -impl I             0 plain driver, 1 ABC, 2 AB, 3 Naive (default 1)
  -threads T          threads for the jr loop (default 1)
  -seed S             RNG seed for operand contents (default 0)
  -verify | -noverify force or skip the accuracy check
  -blocking mC,nC,kC,mR,nR,kR
  -csv PATH           also write records as CSV";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthMode {
    /// One label per bundle: a plain matrix multiply.
    Matrix,
    /// Two labels per bundle with permuted tensor layouts.
    Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProblemSource {
    Sizes {
        m: usize,
        n: usize,
        k: usize,
        mode: SynthMode,
    },
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verify {
    Auto,
    Always,
    Never,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchOptions {
    pub source: ProblemSource,
    pub niter: usize,
    pub level: usize,
    /// The `-impl` number; 0 is the plain driver.
    pub implementation: u32,
    pub threads: usize,
    pub seed: u64,
    pub verify: Verify,
    pub params: BlockingParams,
    pub csv: Option<PathBuf>,
}

impl BenchOptions {
    pub fn variant(&self) -> Variant {
        if self.level == 0 {
            return Variant::Abc;
        }
        Variant::from_impl(self.implementation).unwrap_or(Variant::Abc)
    }

    pub fn contract_options(&self) -> ContractOptions {
        ContractOptions {
            level: self.level,
            variant: self.variant(),
            exec: ExecConfig {
                params: self.params,
                threads: self.threads,
                force_slow: false,
            },
            max_level: ContractOptions::DEFAULT_MAX_LEVEL,
        }
    }
}

fn positive(flag: &str, v: &str) -> Result<usize, UsageError> {
    match v.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(UsageError(format!(
            "{flag} expects a positive integer, got {v:?}"
        ))),
    }
}

/// Parses the flags that follow the program name.
pub fn parse_args<I, S>(args: I) -> Result<BenchOptions, UsageError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let args: Vec<String> = args.into_iter().map(|s| s.as_ref().to_string()).collect();
    let (mut m, mut n, mut k) = (None, None, None);
    let mut mode = SynthMode::Matrix;
    let mut file = None;
    let mut opts = BenchOptions {
        source: ProblemSource::File(PathBuf::new()),
        niter: 1,
        level: 1,
        implementation: 1,
        threads: 1,
        seed: 0,
        verify: Verify::Auto,
        params: BlockingParams::default(),
        csv: None,
    };

    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let name = flag.strip_prefix("--").or_else(|| flag.strip_prefix('-'));
        let Some(name) = name else {
            return Err(UsageError(format!("unexpected argument {flag:?}")));
        };
        let mut value = || {
            it.next()
                .map(String::as_str)
                .ok_or_else(|| UsageError(format!("{flag} needs a value")))
        };
        match name {
            "m" => m = Some(positive(flag, value()?)?),
            "n" => n = Some(positive(flag, value()?)?),
            "k" => k = Some(positive(flag, value()?)?),
            "file" => file = Some(PathBuf::from(value()?)),
            "niter" => opts.niter = positive(flag, value()?)?,
            "threads" => opts.threads = positive(flag, value()?)?,
            "level" => {
                opts.level = match value()? {
                    "0" => 0,
                    "1" => 1,
                    "2" => 2,
                    v => return Err(UsageError(format!("-level must be 0, 1 or 2, got {v:?}"))),
                }
            }
            "impl" => {
                opts.implementation = match value()? {
                    "0" => 0,
                    "1" => 1,
                    "2" => 2,
                    "3" => 3,
                    v => return Err(UsageError(format!("-impl must be 0..=3, got {v:?}"))),
                }
            }
            "seed" => {
                let v = value()?;
                opts.seed = v
                    .parse()
                    .map_err(|_| UsageError(format!("-seed expects an integer, got {v:?}")))?;
            }
            "mode" => {
                mode = match value()? {
                    "matrix" => SynthMode::Matrix,
                    "split" => SynthMode::Split,
                    v => return Err(UsageError(format!("-mode must be matrix or split, got {v:?}"))),
                }
            }
            "verify" => opts.verify = Verify::Always,
            "noverify" => opts.verify = Verify::Never,
            "blocking" => {
                let v = value()?;
                let parts = v
                    .split(',')
                    .map(|p| positive("-blocking", p.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                let [mc, nc, kc, mr, nr, kr] = parts[..] else {
                    return Err(UsageError("-blocking expects mC,nC,kC,mR,nR,kR".into()));
                };
                opts.params =
                    BlockingParams::new(mc, nc, kc, mr, nr, kr).map_err(|e| UsageError(e.to_string()))?;
            }
            "csv" => opts.csv = Some(PathBuf::from(value()?)),
            "h" | "help" => return Err(UsageError(USAGE.into())),
            _ => return Err(UsageError(format!("unknown flag {flag:?}"))),
        }
    }

    if opts.implementation == 0 && opts.level != 0 {
        return Err(UsageError(
            "-impl 0 is the plain driver and requires -level 0".into(),
        ));
    }
    opts.source = match (file, m, n, k) {
        (Some(path), None, None, None) => ProblemSource::File(path),
        (None, Some(m), Some(n), Some(k)) => ProblemSource::Sizes { m, n, k, mode },
        (Some(_), _, _, _) => return Err(UsageError("-file cannot be combined with -m/-n/-k".into())),
        _ => return Err(UsageError("give either -m, -n and -k, or -file".into())),
    };
    Ok(opts)
}

fn split_factor(size: usize) -> (usize, usize) {
    let r = size.isqrt();
    if r * r == size {
        (r, r)
    } else {
        (size, 1)
    }
}

/// A synthetic contraction with bundle sizes `m`, `n`, `k`.
///
/// Matrix mode gives `ab ac cb`. Split mode gives `abcd aebf dfce` with each
/// bundle factored into two labels: `(√s, √s)` for a perfect square, else
/// `(s, 1)`.
pub fn synthesize_spec(m: usize, n: usize, k: usize, mode: SynthMode) -> ContractionSpec {
    let spec = match mode {
        SynthMode::Matrix => ContractionSpec::new("ab", "ac", "cb", [('a', m), ('b', n), ('c', k)]),
        SynthMode::Split => {
            let (a, b) = split_factor(m);
            let (c, d) = split_factor(n);
            let (e, f) = split_factor(k);
            ContractionSpec::new(
                "abcd",
                "aebf",
                "dfce",
                [('a', a), ('b', b), ('c', c), ('d', d), ('e', e), ('f', f)],
            )
        }
    };
    spec.expect("synthetic specs are well formed")
}

/// Deterministic A, B and C for a problem.
pub fn make_operands(spec: &ContractionSpec, seed: u64) -> (DenseTensor, DenseTensor, DenseTensor) {
    let t = |ext: Vec<usize>, s: u64| DenseTensor::new(&ext, Fill::Random(s)).expect("positive extents");
    (
        t(spec.extents_of_a(), seed),
        t(spec.extents_of_b(), seed.wrapping_add(1)),
        t(spec.extents_of_c(), seed.wrapping_add(2)),
    )
}

/// One output line.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub spec: ContractionSpec,
    pub stats: RunStats,
}

impl Record {
    pub fn size(&self) -> String {
        format!(
            "{}:{}x{}x{}",
            self.spec.index_string(),
            self.spec.n_i(),
            self.spec.n_j(),
            self.spec.n_p()
        )
    }

    pub fn accuracy(&self) -> String {
        self.stats
            .rel_error
            .map_or_else(|| "NA".to_string(), |e| format!("{e:.3e}"))
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.6}\t{:.3}\t{:.3}\t{}",
            self.size(),
            self.stats.seconds,
            self.stats.total_gflops(),
            self.stats.effective_gflops,
            self.accuracy()
        )
    }
}

pub const HEADER: &str = "# size\tseconds\ttotal_gflops\teffective_gflops\taccuracy";

/// Runs `niter` iterations from the same initial C and keeps the fastest.
pub fn run_problem(spec: &ContractionSpec, opts: &BenchOptions) -> crate::Result<Record> {
    let (a, b, c0) = make_operands(spec, opts.seed);
    let copts = opts.contract_options();
    let mut best: Option<RunStats> = None;
    let mut result = c0.clone();
    for _ in 0..opts.niter {
        let mut c = c0.clone();
        let stats = contract(spec, &a, &b, &mut c, &copts)?;
        if best.as_ref().is_none_or(|b| stats.seconds < b.seconds) {
            best = Some(stats);
        }
        result = c;
    }
    let mut stats = best.expect("niter >= 1");

    let verify = match opts.verify {
        Verify::Always => true,
        Verify::Never => false,
        Verify::Auto => [spec.n_i(), spec.n_j(), spec.n_p()]
            .iter()
            .all(|&s| s <= AUTO_VERIFY_LIMIT),
    };
    if verify {
        let mut reference = c0;
        contract_reference(spec, &a, &b, &mut reference)?;
        stats.rel_error = Some(relative_error(&result, &reference)?);
    }
    Ok(Record {
        spec: spec.clone(),
        stats,
    })
}

/// Problems named by the options, reading the benchmark file if needed.
pub fn load_problems(opts: &BenchOptions) -> Result<Vec<ContractionSpec>, String> {
    match &opts.source {
        ProblemSource::Sizes { m, n, k, mode } => Ok(vec![synthesize_spec(*m, *n, *k, *mode)]),
        ProblemSource::File(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_benchmark_file(&text).map_err(|(line, e)| format!("{}:{line}: {e}", path.display()))
        }
    }
}

/// Writes records as CSV, including the kernel counters.
pub fn write_csv<W: std::io::Write>(out: W, records: &[Record], opts: &BenchOptions) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "size",
        "seconds",
        "total_gflops",
        "effective_gflops",
        "accuracy",
        "level",
        "variant",
        "leaf_multiplies",
        "fast_blocks",
        "slow_blocks",
        "fast_updates",
        "slow_updates",
    ])?;
    for r in records {
        let s = &r.stats;
        w.write_record([
            r.size(),
            s.seconds.to_string(),
            s.total_gflops().to_string(),
            s.effective_gflops.to_string(),
            s.rel_error.map_or_else(|| "NA".into(), |e| e.to_string()),
            opts.level.to_string(),
            opts.variant().to_string(),
            s.leaf_multiplies.to_string(),
            s.fast_blocks.to_string(),
            s.slow_blocks.to_string(),
            s.fast_updates.to_string(),
            s.slow_updates.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Browser demo bindings. Each export takes plain values and returns a JSON
//! string, or an error message the page shows as is.

use serde_json::{json, Value};
use strassen_tc::{
    contract, contract_reference, parse_benchmark_line, quadrant_views, relative_error, strassen_terms,
    BlockScatterView, BlockingParams, ContractOptions, ContractionSpec, DenseTensor, Fill, Variant,
};
use wasm_bindgen::prelude::*;

/// Largest `N_I * N_J * N_P` the demo will contract, to keep the page responsive.
pub const MAX_WORK: usize = 1 << 27;

/// Largest level the table and block map will render.
pub const MAX_LEVEL: usize = 2;

fn ops(v: &[(usize, i8)]) -> Value {
    v.iter().map(|&(q, s)| json!({ "q": q, "sign": s })).collect()
}

/// The `7^level` products, each as the signed quadrants of A, B and C.
pub fn term_table(level: usize) -> Result<Value, String> {
    if level > MAX_LEVEL {
        return Err(format!("level must be at most {MAX_LEVEL}"));
    }
    let terms: Vec<Value> = strassen_terms(level)
        .iter()
        .map(|t| json!({ "a": ops(&t.a), "b": ops(&t.b), "c": ops(&t.c) }))
        .collect();
    Ok(json!({ "level": level, "quadrants": 1usize << (2 * level), "terms": terms }))
}

fn describe(name: &str, v: &BlockScatterView, level: usize) -> Result<Value, String> {
    let quads = quadrant_views(v, level).map_err(|e| e.to_string())?;
    let quads: Vec<Value> = quads
        .iter()
        .map(|q| json!({ "m": q.m(), "n": q.n(), "rbs": q.rbs(), "cbs": q.cbs() }))
        .collect();
    Ok(json!({
        "name": name,
        "m": v.m(),
        "n": v.n(),
        "rb": v.rb(),
        "cb": v.cb(),
        "rbs": v.rbs(),
        "cbs": v.cbs(),
        "quadrants": quads,
    }))
}

fn parse(line: &str) -> Result<ContractionSpec, String> {
    parse_benchmark_line(line).map_err(|e| format!("cannot parse: {e}"))
}

/// Block scatter vectors of the A, B and C views of `line` (column-major
/// tensors, default register blocking) and of their quadrants.
pub fn block_map(line: &str, level: usize) -> Result<Value, String> {
    if level > MAX_LEVEL {
        return Err(format!("level must be at most {MAX_LEVEL}"));
    }
    let spec = parse(line)?;
    let p = BlockingParams::default();
    let view = |labels: &[char], rows: &[char], cols: &[char], rb, cb| {
        let extents: Vec<usize> = labels.iter().map(|l| spec.extent(*l).unwrap()).collect();
        let t = DenseTensor::new(&extents, Fill::Zeros).map_err(|e| e.to_string())?;
        BlockScatterView::make_view(&t, labels, rows, cols, rb, cb).map_err(|e| e.to_string())
    };
    let a = view(spec.labels_a(), spec.bundle_i(), spec.bundle_p(), p.mr, p.kr)?;
    let b = view(spec.labels_b(), spec.bundle_p(), spec.bundle_j(), p.kr, p.nr)?;
    let c = view(spec.labels_c(), spec.bundle_i(), spec.bundle_j(), p.mr, p.nr)?;
    Ok(json!({
        "spec": spec.to_string(),
        "level": level,
        "operands": [describe("A", &a, level)?, describe("B", &b, level)?, describe("C", &c, level)?],
    }))
}

/// Contracts random operands for `line` and checks the result against the
/// nested-loop reference.
pub fn run(line: &str, level: usize, implementation: u32, seed: u64) -> Result<Value, String> {
    let spec = parse(line)?;
    let work = spec.n_i().saturating_mul(spec.n_j()).saturating_mul(spec.n_p());
    if work > MAX_WORK {
        return Err(format!(
            "N_I*N_J*N_P = {work} exceeds the demo limit of {MAX_WORK}"
        ));
    }
    let variant = Variant::from_impl(implementation).ok_or("impl must be 1, 2 or 3")?;
    let tensor = |labels: &[char], fill| {
        let extents: Vec<usize> = labels.iter().map(|l| spec.extent(*l).unwrap()).collect();
        DenseTensor::new(&extents, fill).map_err(|e| e.to_string())
    };
    let a = tensor(spec.labels_a(), Fill::Random(seed))?;
    let b = tensor(spec.labels_b(), Fill::Random(seed.wrapping_add(1)))?;
    let mut c = tensor(spec.labels_c(), Fill::Zeros)?;
    let mut want = c.clone();

    let stats =
        contract(&spec, &a, &b, &mut c, &ContractOptions::new(level, variant)).map_err(|e| e.to_string())?;
    contract_reference(&spec, &a, &b, &mut want).map_err(|e| e.to_string())?;
    let err = relative_error(&c, &want).map_err(|e| e.to_string())?;

    Ok(json!({
        "spec": spec.to_string(),
        "level": level,
        "variant": variant.to_string(),
        "seconds": stats.seconds,
        "total_gflops": stats.total_gflops(),
        "effective_gflops": stats.effective_gflops,
        "rel_error": err,
        "leaf_multiplies": stats.leaf_multiplies,
        "fast_blocks": stats.fast_blocks,
        "slow_blocks": stats.slow_blocks,
        "fast_updates": stats.fast_updates,
        "slow_updates": stats.slow_updates,
    }))
}

#[wasm_bindgen(js_name = termTable)]
pub fn term_table_js(level: usize) -> Result<String, String> {
    term_table(level).map(|v| v.to_string())
}

#[wasm_bindgen(js_name = blockMap)]
pub fn block_map_js(line: &str, level: usize) -> Result<String, String> {
    block_map(line, level).map(|v| v.to_string())
}

#[wasm_bindgen(js_name = runContraction)]
pub fn run_js(line: &str, level: usize, implementation: u32, seed: u32) -> Result<String, String> {
    run(line, level, implementation, u64::from(seed)).map(|v| v.to_string())
}

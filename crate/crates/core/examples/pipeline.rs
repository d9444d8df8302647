//! The whole staged pipeline on a tiny configuration, driven from code.
//! Equivalent to `keydecode run-all --config configs/tiny.json --out DIR`.

use std::path::Path;

use keydecode::metrics::EvalReport;
use keydecode::pipeline::{run_all, Ctx, PipelineConfig};

fn main() -> keydecode::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.json");
    let cfg = PipelineConfig::load(&config)?;
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("keydecode_tiny"), Into::into);
    run_all(Ctx {
        out: &out,
        cfg: &cfg,
        force: false,
    })?;
    let report = EvalReport::load_json(&out.join("report.json"))?;
    for e in &report.entries {
        println!("{:<40} {:>9.4}  p {:?}", e.metric, e.value, e.p_fdr);
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

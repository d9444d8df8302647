//! Error rates, paired and unpaired rank tests, FDR correction and the
//! JSON evaluation report.

use keydecode::keyboard::classify_str;
use keydecode::metrics::stats::{fdr, mannwhitney, pearson, wilcoxon};
use keydecode::metrics::{cer, her, EvalReport};
use keydecode::KeyboardLayout;

fn main() -> keydecode::Result<()> {
    let layout = KeyboardLayout::qwerty();
    let target = classify_str("hello world");
    let pred = classify_str("hellp wprld");
    println!("CER {:.3}, HER {:.3}", cer(&pred, &target)?, her(&pred, &target, &layout)?);

    let model = [0.31, 0.28, 0.35, 0.40, 0.22, 0.30, 0.27, 0.33];
    let baseline = [0.52, 0.49, 0.60, 0.55, 0.47, 0.51, 0.58, 0.50];
    let w = wilcoxon(&model, &baseline, 10_000, 0)?;
    let u = mannwhitney(&model, &baseline, 10_000, 1)?;
    let r = pearson(&model, &baseline, 10_000, 2)?;
    for t in [&w, &u, &r] {
        println!("{:<13} statistic {:>7.3}  p {:.4}", t.test, t.statistic, t.p);
    }
    println!("BH-adjusted: {:?}", fdr(&[w.p, u.p, r.p])?);

    let mut report = EvalReport::default();
    report.push("cer_model", 0.307, 8, Some(0.02), None);
    report.push("delta_cer", -0.22, 8, None, Some(w.p));
    report.push("correlation", r.statistic, 8, None, Some(r.p));
    report.correct()?;
    let path = std::env::temp_dir().join("keydecode_example_report.json");
    report.save_json(&path)?;
    println!("{}", std::fs::read_to_string(&path)?);
    std::fs::remove_file(path)?;
    Ok(())
}

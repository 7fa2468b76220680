use mslab_core::lab::*;

fn main() {
    let cfg = LabConfig::default();
    let corpus = reference_corpus(&cfg);
    let mut analyses = Vec::new();
    for entry in &corpus {
        let prepared = prepare_scene(&cfg, entry).unwrap();
        analyses.push(analyze_scene(&cfg, &prepared).unwrap());
    }
    let summary = summarize(&analyses);
    let baseline = Baseline::load(std::path::Path::new("baselines/reference-64.json")).unwrap();
    let cmp = compare_baseline(&summary, &baseline);
    for e in &cmp.entries {
        if !e.pass {
            println!("MISMATCH {}: measured {:.6e} baseline {:?}", e.key, e.measured, e.baseline);
        }
    }
    println!("pass = {}", cmp.pass);
}

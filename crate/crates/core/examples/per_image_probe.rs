//! Quick probe: per-image adaptive F on the desk overfit set.

use gelenet_core::config::ExperimentConfig;
use gelenet_core::model::GeleNet;
use gelenet_core::train::{evaluate_model, load_dataset};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_preset("desk").unwrap();
    cfg.seed = 0;
    let samples = load_dataset(&cfg).unwrap();
    let mut model = GeleNet::new(&cfg.model_config(), cfg.seed).unwrap();
    model
        .load_checkpoint(std::path::Path::new(&std::env::args().nth(1).unwrap()))
        .unwrap();
    let (per, agg) = evaluate_model(&model, &samples).unwrap();
    for (s, r) in samples.iter().zip(&per) {
        let fg: f64 = s.mask.iter().sum::<f64>() / s.mask.len() as f64;
        println!(
            "{}: f_adp {:.4} f_max {:.4} mae {:.4} fg_frac {:.3}",
            s.id, r.f_adp, r.f_max, r.mae, fg
        );
    }
    println!("aggregate: f_adp {:.4} mae {:.4}", agg.f_adp, agg.mae);
}

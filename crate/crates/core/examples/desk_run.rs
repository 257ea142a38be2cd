//! Trains the toy predictor on a mixed phantom suite and reports held-out MAE.
//!
//! ```text
//! cargo run --release -p bmseg --example desk_run -- [train_count] [epochs] [widths...]
//! ```

use std::time::Instant;

use bmseg::phantom::{make_suite, Difficulty, SuiteShape};
use bmseg::predictor::{infer_volume, samples_from_phantoms, train, ToyNet, ToyNetConfig, TrainConfig};
use bmseg::shape::LossConfig;

fn main() -> bmseg::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n_train = args.first().copied().unwrap_or(64);
    let epochs = args.get(1).copied().unwrap_or(20);
    let widths = if args.len() > 2 { args[2..].to_vec() } else { vec![1, 8, 8, 1] };
    let shape = SuiteShape::default();

    let train_set = make_suite(Difficulty::Mixed, n_train, 1, shape)?;
    let test_set = make_suite(Difficulty::Mixed, 16, 2, shape)?;
    let data = samples_from_phantoms(&train_set)?;
    let mut net = ToyNet::new(ToyNetConfig { widths, seed: 1, ..Default::default() })?;
    let cfg = TrainConfig { epochs, loss: LossConfig::for_width(shape.width), ..Default::default() };

    let t = Instant::now();
    for e in train(&mut net, &data, &cfg)? {
        println!("epoch {:3} lr {:.5} total {:.4} l1 {:.4} l2 {:.4} l3 {:.4}", e.epoch, e.learning_rate, e.total, e.l1, e.l2, e.l3);
    }
    println!("train {:.1}s on {} B-scans", t.elapsed().as_secs_f64(), data.len());

    let (mut sum, mut n) = (0.0, 0usize);
    for ph in &test_set {
        let out = infer_volume(&net, &ph.volume, false, 1)?;
        for (pc, tc) in out.surface.curves().iter().zip(ph.truth.curves()) {
            for (x, t) in tc.iter_valid() {
                if let Some(p) = pc.get(x) {
                    sum += (p - t).abs();
                    n += 1;
                }
            }
        }
    }
    println!("held-out MAE {:.3} px over {n} A-scans", sum / n as f64);
    Ok(())
}

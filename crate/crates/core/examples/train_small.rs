//! Trains a small multi-subject model on a generated dataset, stops part way,
//! and resumes from the checkpoint directory.
//!
//! cargo run --release --example train_small -- /tmp/hipnet-train

use hipnet::pipeline::train_on_dataset;
use hipnet::training::TrainConfig;

mod common;

fn main() -> hipnet::Result<()> {
    let dir = common::workdir("train");
    let ds = common::small_dataset(&dir)?;
    let config = TrainConfig {
        surface_points: 500,
        eikonal_points: 500,
        lr: 2e-3,
        epochs: 3,
        model: common::small_model(),
        ..TrainConfig::default()
    };
    let log = |r: &hipnet::training::LossRecord| {
        if r.step.is_multiple_of(6) {
            let l = &r.loss;
            println!(
                "step {:3} epoch {} subject {}  total {:.4}  surface {:.4}  normal {:.4}  eikonal {:.4}",
                r.step, r.epoch, r.subject, l.total, l.surface, l.normal, l.eikonal
            );
        }
    };
    let first = train_on_dataset(&ds, &config, &dir.join("first"), None, None, Some(20), log)?;
    println!("stopped after {} steps; resuming", first.steps);
    let rest = train_on_dataset(&ds, &config, &dir.join("rest"), Some(&first.out), None, None, log)?;
    println!(
        "ran {} more steps to the end of {} epochs, final loss {:.4}; losses in {}",
        rest.steps,
        rest.epochs,
        rest.final_loss.unwrap_or(f64::NAN),
        rest.out.join("losses.csv").display()
    );
    Ok(())
}

//! Generates a small synthetic dataset and walks its manifest.
//!
//! cargo run --release --example make_dataset -- /tmp/hipnet-data

use hipnet::synthdata::{make_dataset, Dataset, DatasetConfig, Split};

fn main() -> hipnet::Result<()> {
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("hipnet-data"));
    let config = DatasetConfig {
        subjects: 3,
        sequences: 4,
        frames: 5,
        points: 3000,
        seed: 11,
        neighbors: 8,
    };
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    make_dataset(&config, &dir)?;
    let ds = Dataset::open(&dir)?;
    println!("{} subjects, skeleton hash {}", ds.subject_count(), ds.skeleton.hash());
    for (s, fig) in ds.figures.iter().enumerate() {
        println!("  subject {s}: scale {:.3}", fig.scale);
    }
    let (train, test) = (ds.frames(Split::Train), ds.frames(Split::Test));
    println!("{} training frames, {} test frames", train.len(), test.len());
    let rec = ds.load(&test[0])?;
    let mut counts = vec![0usize; ds.skeleton.len()];
    for &l in &rec.cloud.labels {
        counts[l as usize] += 1;
    }
    println!("{}: {} points, per-joint labels {counts:?}", test[0].path.display(), rec.cloud.len());
    Ok(())
}

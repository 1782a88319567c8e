//! Test-time fitting: recovers a subject code from a point cloud with the
//! network frozen, for growing point counts and for a front-facing view only.
//!
//! cargo run --release --example fit_partial -- /tmp/hipnet-small

use hipnet::cli::{resample_frame, FrameSelect};
use hipnet::evalmesh::uniform_miou;
use hipnet::geom::P3;
use hipnet::skeleton::flatten;
use hipnet::synthdata::{OrientedCloud, Split};
use hipnet::training::{fit_subject, FitConfig};

mod common;

fn main() -> hipnet::Result<()> {
    let dir = common::workdir("small");
    let (ds, model, _) = common::trained(&dir)?;
    let r = &ds.frames(Split::Test)[1];
    let sel = FrameSelect {
        subject: r.subject,
        sequence: r.sequence,
        frame: r.frame,
    };
    let rec = resample_frame(&ds, &sel, 5000, 1)?;
    let pv = flatten(&rec.pose);
    let posed = ds.figures[r.subject].posed(&rec.pose);
    let score = |code: &[f64]| {
        uniform_miou(
            |p: &[P3]| model.eval_sdf(p, &pv, code),
            |p: &[P3]| Ok(posed.sdf_batch(p)),
            &posed.bounds(),
            20_000,
            0,
        )
    };
    let own = model.code(r.subject)?;
    println!("trained code of subject {}: mIoU {:.2}%", r.subject, score(&own)?);
    let first = |c: &OrientedCloud, n: usize| c.subset(&(0..n.min(c.len())).collect::<Vec<_>>());
    let config = FitConfig::default();
    for n in [0, 100, 1000, 5000] {
        let code = fit_subject(&model, &first(&rec.cloud, n), &pv, &config)?;
        println!("{n:5} points: mIoU {:.2}%", score(&code)?);
    }
    let front = rec.cloud.front_only();
    let code = fit_subject(&model, &first(&front, 1000), &pv, &config)?;
    println!(" 1000 front-facing points: mIoU {:.2}%", score(&code)?);
    Ok(())
}

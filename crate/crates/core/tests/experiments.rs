//! End-to-end harness experiments. Each trains several models on the
//! default scene, so these take minutes.

use splat4d::gauss4d::slice_at;
use splat4d::harness::{heatmap, run_variant, synth, Ablation, DistortionSpec, EvalOptions, SynthSpec, WarpRegion};
use splat4d::optimloop::frame_time;
use splat4d::splat::{render, RenderOptions, ViewKind};

#[test]
fn field_is_harmless_without_distortion() {
    let mut gaps = Vec::new();
    for seed in 0..3 {
        let spec = SynthSpec {
            seed,
            distortion: DistortionSpec {
                mean_px: 0.0,
                ..DistortionSpec::default()
            },
            ..SynthSpec::default()
        };
        let ds = synth(&spec).unwrap();
        let cfg = spec.train_config();
        let eval = EvalOptions::default();
        let full = run_variant(&ds, &cfg, Ablation::Full, &eval).unwrap().report.mean_psnr;
        let bare = run_variant(&ds, &cfg, Ablation::NoField, &eval).unwrap().report.mean_psnr;
        eprintln!("seed {seed}: with field {full:.3} dB, without {bare:.3} dB");
        gaps.push(full - bare);
    }
    assert!(gaps.iter().all(|g| g.abs() < 0.3), "PSNR gaps {gaps:?}");
}

#[test]
fn heatmap_is_brighter_over_the_distorted_half() {
    let spec = SynthSpec {
        distortion: DistortionSpec {
            region: WarpRegion::PositiveX,
            ..DistortionSpec::default()
        },
        ..SynthSpec::default()
    };
    let ds = synth(&spec).unwrap();
    let run = run_variant(&ds, &spec.train_config(), Ablation::Full, &EvalOptions::default()).unwrap();
    let gaussians = run.model.canonical();
    let positive: Vec<f64> = gaussians.iter().map(|g| f64::from(u8::from(g.mu[0] > 0.0))).collect();
    let negative: Vec<f64> = positive.iter().map(|p| 1.0 - p).collect();

    let (mut hot, mut cold) = ((0.0, 0usize), (0.0, 0usize));
    for gv in ds.split(ViewKind::Generated) {
        let view = run.model.posed_view(&gv.view);
        let s = view.s_index.expect("generated views carry a pose index");
        let heat = heatmap(&run.model, &view, view.t_index, s).unwrap();
        let slices: Vec<_> = gaussians.iter().map(|g| slice_at(g, frame_time(view.t_index)).unwrap()).collect();
        let side = |ind: &[f64]| render(&view, &slices, Some(ind), &RenderOptions::default()).unwrap().attribute.unwrap();
        let (pos, neg) = (side(&positive), side(&negative));
        for ((h, p), n) in heat.data().iter().zip(pos.data()).zip(neg.data()) {
            // pixels clearly owned by one half of the volume
            if *p > 0.5 && *n < 0.05 {
                hot.0 += h;
                hot.1 += 1;
            } else if *n > 0.5 && *p < 0.05 {
                cold.0 += h;
                cold.1 += 1;
            }
        }
    }
    assert!(hot.1 > 0 && cold.1 > 0, "both halves must be visible");
    let (hot_mean, cold_mean) = (hot.0 / hot.1 as f64, cold.0 / cold.1 as f64);
    eprintln!("mean heat over x > 0: {hot_mean:.4} ({} px), over x < 0: {cold_mean:.4} ({} px)", hot.1, cold.1);
    assert!(hot_mean > cold_mean);
}

use super::*;
use crate::diffcore::{grad_check, grad_check_fn, ParamStore};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(scales: Vec<usize>) -> PlaneSetConfig {
    PlaneSetConfig {
        spatial_res: 4,
        t_res: 3,
        s_res: 4,
        channels: 2,
        scales,
    }
}

fn random_set(seed: u64, scales: Vec<usize>) -> (ParamStore, PlaneSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let set = PlaneSet::register(
        &mut store,
        "planes",
        small_config(scales),
        PlaneInit::Uniform { lo: 0.5, hi: 1.5 },
        &mut rng,
    )
    .unwrap();
    (store, set)
}

#[test]
fn project_selects_and_scales() {
    let c = NormalizedCoord::new(1.0, 2.0, 3.0, 4.0, 5.0);
    assert_eq!(project(&c, (Axis::X, Axis::Z), 1), [1.0, 3.0]);
    assert_eq!(project(&c, (Axis::Y, Axis::S), 2), [4.0, 10.0]);
    for &axes in &PLANE_AXES {
        assert_eq!(project(&NormalizedCoord::default(), axes, 3), [0.0, 0.0]);
    }
}

#[test]
fn layout_rejects_ts_pair_and_repeats() {
    assert!(PlaneLayout::new((Axis::T, Axis::S), (2, 2), 1, 1).is_err());
    assert!(PlaneLayout::new((Axis::S, Axis::T), (2, 2), 1, 1).is_err());
    assert!(PlaneLayout::new((Axis::X, Axis::X), (2, 2), 1, 1).is_err());
    assert!(PlaneLayout::new((Axis::X, Axis::Y), (0, 2), 1, 1).is_err());
}

#[test]
fn plane_set_has_nine_planes_per_scale_in_order() {
    let (_, set) = random_set(1, vec![1, 2]);
    assert_eq!(set.layouts().len(), 18);
    for (k, layout) in set.layouts().iter().enumerate() {
        assert_eq!(layout.axes, PLANE_AXES[k % 9]);
        assert_eq!(layout.scale, if k < 9 { 1 } else { 2 });
        assert_eq!(layout.rows(), layout.scale * layout.base.0);
    }
    assert!(set.layouts().iter().all(|l| !matches!(l.axes, (Axis::T, Axis::S))));
}

#[test]
fn interp_exact_at_node() {
    let layout = PlaneLayout::new((Axis::X, Axis::Y), (5, 6), 1, 3).unwrap();
    let values: Vec<f64> = (0..layout.len()).map(|i| (i as f64).sin()).collect();
    let plane = FeaturePlane::new(layout, values).unwrap();
    assert_eq!(plane.interp([2.0, 3.0]), plane.node(2, 3));
}

#[test]
fn interp_two_by_two_fixture() {
    // v(0,0)=0, v(0,1)=1, v(1,0)=2, v(1,1)=3 at (0.25, 0.5):
    // 0.75*(0.5*0 + 0.5*1) + 0.25*(0.5*2 + 0.5*3) = 0.375 + 0.625 = 1.0
    let layout = PlaneLayout::new((Axis::X, Axis::Y), (2, 2), 1, 1).unwrap();
    let plane = FeaturePlane::new(layout, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    assert!((plane.interp([0.25, 0.5])[0] - 1.0).abs() < 1e-15);
}

#[test]
fn interp_cell_center_is_corner_mean() {
    let layout = PlaneLayout::new((Axis::Y, Axis::T), (4, 4), 1, 2).unwrap();
    let values: Vec<f64> = (0..layout.len()).map(|i| (i * i % 7) as f64).collect();
    let plane = FeaturePlane::new(layout, values).unwrap();
    for r in 0..3 {
        for c in 0..3 {
            let got = plane.interp([r as f64 + 0.5, c as f64 + 0.5]);
            for ch in 0..2 {
                let mean = (plane.node(r, c)[ch]
                    + plane.node(r + 1, c)[ch]
                    + plane.node(r, c + 1)[ch]
                    + plane.node(r + 1, c + 1)[ch])
                    / 4.0;
                assert!((got[ch] - mean).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn interp_clamps_outside() {
    let layout = PlaneLayout::new((Axis::X, Axis::Y), (3, 3), 1, 1).unwrap();
    let plane = FeaturePlane::new(layout, (0..9).map(|i| i as f64).collect()).unwrap();
    assert_eq!(plane.interp([-4.0, -1.0]), plane.node(0, 0));
    assert_eq!(plane.interp([7.0, 2.0]), plane.node(2, 2));
}

#[test]
fn fuse_examples() {
    let ones = vec![1.0; 3];
    let vs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 + 1.0, 0.5, -2.0]).collect();
    let mut refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
    refs.push(&ones);
    let fused = fuse(&refs).unwrap();
    let expected: Vec<f64> = (0..3)
        .map(|ch| vs.iter().map(|v| v[ch]).product::<f64>())
        .collect();
    assert_eq!(fused, expected);

    let zeros = vec![0.0; 3];
    refs[4] = &zeros;
    assert!(fuse(&refs).unwrap().iter().all(|&x| x == 0.0));

    let scalars = [2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5];
    let s: Vec<Vec<f64>> = scalars.iter().map(|&x| vec![x]).collect();
    let r: Vec<&[f64]> = s.iter().map(|v| v.as_slice()).collect();
    assert_eq!(fuse(&r).unwrap(), vec![1.0]);
}

#[test]
fn fuse_missing_plane_is_error() {
    let v = vec![1.0; 2];
    let refs: Vec<&[f64]> = (0..8).map(|_| v.as_slice()).collect();
    match fuse(&refs) {
        Err(Error::MissingPlane(name)) => assert_eq!(name, "zs"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn multiscale_lengths_and_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (scales, len) in [(vec![1], 16), (vec![1, 2], 32)] {
        let mut store = ParamStore::new();
        let config = PlaneSetConfig {
            spatial_res: 8,
            t_res: 4,
            s_res: 3,
            channels: 16,
            scales,
        };
        let set = PlaneSet::register(&mut store, "p", config, PlaneInit::Constant(1.0), &mut rng).unwrap();
        let f = set
            .multiscale_feature(&store, &NormalizedCoord::new(1.3, 2.2, 6.9, 0.5, 1.7))
            .unwrap();
        assert_eq!(f.len(), len);
        assert!(f.iter().all(|&x| x == 1.0));
    }
}

#[test]
fn tv_zero_on_constant_planes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let set = PlaneSet::register(&mut store, "p", small_config(vec![1, 2]), PlaneInit::Constant(0.7), &mut rng).unwrap();
    assert_eq!(set.tv_loss(&mut store, 1.0), 0.0);
    assert_eq!(set.smooth_loss(&mut store, 1.0), 0.0);
}

#[test]
fn tv_single_plane_fixture() {
    let layout = PlaneLayout::new((Axis::X, Axis::Y), (1, 2), 1, 1).unwrap();
    assert_eq!(plane_tv(&layout, &[0.0, 1.0], None), 1.0);
}

#[test]
fn tv_set_fixture_is_plane_average() {
    // one non-constant plane among 9: a 4x4 single-channel xy plane holding
    // a ramp along rows (step 1) gives 1 + 0 = 1 before averaging over 9
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let config = PlaneSetConfig {
        spatial_res: 4,
        t_res: 3,
        s_res: 3,
        channels: 1,
        scales: vec![1],
    };
    let set = PlaneSet::register(&mut store, "p", config, PlaneInit::Constant(0.0), &mut rng).unwrap();
    let id = set.ids()[0];
    for r in 0..4 {
        for c in 0..4 {
            store.values_mut(id)[r * 4 + c] = r as f64;
        }
    }
    let tv = set.tv_loss(&mut store, 0.0);
    assert!((tv - 1.0 / 9.0).abs() < 1e-12 * (1.0 / 9.0));
}

#[test]
fn tv_is_homogeneous_of_degree_two() {
    let (mut store, set) = random_set(3, vec![1, 2]);
    let a = set.tv_loss(&mut store, 0.0);
    for id in set.ids() {
        store.values_mut(*id).iter_mut().for_each(|v| *v *= 2.0);
    }
    let b = set.tv_loss(&mut store, 0.0);
    assert!((b - 4.0 * a).abs() < 1e-12 * b);
}

#[test]
fn smooth_column_fixture() {
    // one channel, xs plane at scale 1 with base (4, 3); row 0 reads [0, 0, 1]
    // along s: second difference (0-0)-(0-1) = 1, squared 1, divided by
    // rows*cols = 12, averaged over the 3 pose planes, times the weight
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let config = PlaneSetConfig {
        spatial_res: 4,
        t_res: 3,
        s_res: 3,
        channels: 1,
        scales: vec![1],
    };
    let set = PlaneSet::register(&mut store, "p", config, PlaneInit::Constant(0.0), &mut rng).unwrap();
    let xs = set.ids()[6];
    assert_eq!(set.layouts()[6].axes, (Axis::X, Axis::S));
    store.values_mut(xs)[2] = 1.0;
    let w = 1e-4;
    let expected = w * (1.0 / 12.0) / 3.0;
    let got = set.smooth_loss(&mut store, w);
    assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
}

#[test]
fn smooth_vanishes_on_linear_in_s() {
    let (mut store, set) = random_set(5, vec![1, 2]);
    let poses: Vec<_> = set.pose_planes().collect();
    for (layout, id) in poses {
        let vals = store.values_mut(id);
        for r in 0..layout.rows() {
            for c in 0..layout.cols() {
                for ch in 0..layout.channels {
                    vals[(r * layout.cols() + c) * layout.channels + ch] =
                        0.25 * r as f64 - 0.5 * c as f64 + ch as f64;
                }
            }
        }
    }
    assert!(set.smooth_loss(&mut store, 1.0).abs() < 1e-24);
}

#[test]
fn smooth_with_short_pose_axis_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let config = PlaneSetConfig {
        spatial_res: 4,
        t_res: 3,
        s_res: 2,
        channels: 1,
        scales: vec![1],
    };
    let set = PlaneSet::register(&mut store, "p", config, PlaneInit::Uniform { lo: 0.0, hi: 1.0 }, &mut rng).unwrap();
    assert_eq!(set.smooth_loss(&mut store, 1.0), 0.0);
}

#[test]
fn interp_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = PlaneLayout::new((Axis::X, Axis::T), (4, 3), 2, 3).unwrap();
        let values: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = [rng.random_range(0.1..6.9), rng.random_range(0.1..4.9)];
        let mut x = values.clone();
        x.extend_from_slice(&p);
        let n = layout.len();
        let report = grad_check_fn(&x, 1e-5, |x| {
            let mut out = vec![0.0; 3];
            plane_interp(&layout, &x[..n], [x[n], x[n + 1]], &mut out);
            let f: f64 = out.iter().zip(&w).map(|(a, b)| a * b).sum();
            let mut g = vec![0.0; n + 2];
            let gp = plane_interp_backward(&layout, &x[..n], [x[n], x[n + 1]], &w, &mut g[..n]);
            g[n] = gp[0];
            g[n + 1] = gp[1];
            Ok((f, g))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn fuse_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..9 * 4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let report = grad_check_fn(&x, 1e-5, |x| {
            let refs: Vec<&[f64]> = x.chunks(4).collect();
            let fused = fuse(&refs)?;
            let f = fused.iter().zip(&w).map(|(a, b)| a * b).sum();
            Ok((f, fuse_backward(&refs, &w).concat()))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn multiscale_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let (mut store, set) = random_set(seed, vec![1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let coord = store.insert(
            "coord",
            vec![
                rng.random_range(0.1..2.9),
                rng.random_range(0.1..2.9),
                rng.random_range(0.1..2.9),
                rng.random_range(0.1..1.9),
                rng.random_range(0.1..2.9),
            ],
        )
        .unwrap();
        let w: Vec<f64> = (0..set.feature_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let report = grad_check(&mut store, 1e-5, |s| {
            let c = s.values(coord);
            let c = NormalizedCoord::new(c[0], c[1], c[2], c[3], c[4]);
            let (f, tape) = set.multiscale_feature_taped(s, &c)?;
            let v = f.iter().zip(&w).map(|(a, b)| a * b).sum();
            let gc = set.multiscale_feature_backward(s, &tape, &w);
            s.grads_mut(coord).copy_from_slice(&gc.as_array());
            Ok(v)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn regularizer_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let (mut store, set) = random_set(seed, vec![1, 2]);
        let report = grad_check(&mut store, 1e-5, |s| {
            let tv = set.tv_loss(s, 0.3);
            let sm = set.smooth_loss(s, 0.7);
            Ok(0.3 * tv + sm)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {report:?}");
    }
}

proptest! {
    #[test]
    fn node_exactness(seed in 0u64..1000, r in 0usize..6, c in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = PlaneLayout::new((Axis::Z, Axis::S), (3, 5), 2, 4).unwrap();
        let values: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let plane = FeaturePlane::new(layout, values).unwrap();
        let c = c.min(layout.cols() - 1);
        let got = plane.interp([r as f64, c as f64]);
        prop_assert_eq!(got.as_slice(), plane.node(r, c));
    }

    #[test]
    fn bilinear_is_affine_along_each_axis(
        seed in 0u64..1000, r in 0usize..3, c in 0usize..3,
        a in 0.0f64..1.0, b in 0.0f64..1.0, fixed in 0.0f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = PlaneLayout::new((Axis::X, Axis::Y), (4, 4), 1, 2).unwrap();
        let values: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let plane = FeaturePlane::new(layout, values).unwrap();
        let m = 0.5 * (a + b);
        // along rows with the column fixed, then along columns
        for axis in 0..2 {
            let at = |u: f64| {
                let mut p = [r as f64 + fixed, c as f64 + fixed];
                p[axis] = if axis == 0 { r as f64 + u } else { c as f64 + u };
                plane.interp(p)
            };
            let (fa, fb, fm) = (at(a), at(b), at(m));
            for ch in 0..2 {
                prop_assert!((fm[ch] - 0.5 * (fa[ch] + fb[ch])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fuse_is_order_independent(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vs: Vec<Vec<f64>> = (0..9).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        let mut rev = refs.clone();
        rev.reverse();
        let a = fuse(&refs).unwrap();
        let b = fuse(&rev).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
        prop_assert_eq!(fuse(&refs).unwrap(), a);
    }

    #[test]
    fn regularizers_non_negative(seed in 0u64..200) {
        let (mut store, set) = random_set(seed, vec![1, 2]);
        prop_assert!(set.tv_loss(&mut store, 0.0) >= 0.0);
        prop_assert!(set.smooth_loss(&mut store, 1.0) >= 0.0);
    }
}

use ebm_core::diagnostics::{acf, displacement, pacf, read_csv, write_csv, DiagnosticsRecord};
use ebm_core::landscape::{emit_disconnectivity, find_metastable, merge_basins, MergeConfig, MetastableConfig, TreeNode};
use ebm_core::numerics::{conv2d, LayerSpec};
use ebm_core::potential::analytic::DoubleWell;
use ebm_core::potential::{read_checkpoint, write_checkpoint};
use ebm_core::sampler::{run_chain, uniform_batch};
use ebm_core::toy::{grid_l1, Bounds, GridDensity};
use ebm_core::trainer::{ml_gradient, train, Preset};
use ebm_core::{rng, Energy, InitMode, ParametricEnergy, Potential, PotentialSpec, SamplerConfig, Tensor};
use proptest::prelude::*;

fn small_image_spec(c: usize, hw: usize, width: usize, relu: bool, head: u8, seed: u64) -> PotentialSpec {
    let act = if relu { LayerSpec::Relu } else { LayerSpec::lrelu() };
    let mut layers = vec![LayerSpec::conv(3, 1, width), act, LayerSpec::conv(4, 2, width), LayerSpec::lrelu()];
    match head {
        0 => layers.push(LayerSpec::dense(1)),
        1 => layers.extend([LayerSpec::conv(1, 1, 1), LayerSpec::GlobalSum]),
        _ => layers.extend([LayerSpec::conv(3, 1, 1), LayerSpec::GlobalMean]),
    }
    PotentialSpec::new(vec![c, hw, hw], layers, seed)
}

fn fd_input(pot: &Potential, x: &Tensor, i: usize) -> f64 {
    let h = 1e-6;
    let (mut p, mut m) = (x.clone(), x.clone());
    p.data_mut()[i] += h;
    m.data_mut()[i] -= h;
    (pot.energy(&p).unwrap() - pot.energy(&m).unwrap()) / (2.0 * h)
}

fn fd_param(pot: &Potential, x: &Tensor, j: usize) -> f64 {
    let h = 1e-6;
    let mut q = pot.clone();
    let mut t = pot.params().to_vec();
    t[j] += h;
    q.set_params(&t).unwrap();
    let up = q.energy(x).unwrap();
    t[j] -= 2.0 * h;
    q.set_params(&t).unwrap();
    (up - q.energy(x).unwrap()) / (2.0 * h)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-6)
}

fn grid(values: Vec<f64>, g: usize) -> GridDensity {
    GridDensity {
        bounds: Bounds::default(),
        resolution: g,
        values,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn layer_gradients_match_finite_differences(
        c in 1usize..3,
        hw in 5usize..9,
        width in 1usize..4,
        relu: bool,
        head in 0u8..3,
        seed: u64,
        coords in proptest::collection::vec(any::<u32>(), 4),
    ) {
        let pot = Potential::build(small_image_spec(c, hw, width, relu, head, seed)).unwrap();
        let x = uniform_batch(pot.input_shape(), 1, &mut rng::seeded(seed ^ 1)).unwrap().sample_tensor(0);
        let g = pot.grad_wrt_input(&x).unwrap().grad;
        let mut acc = vec![0.0; pot.num_params()];
        pot.accumulate_param_grad(x.data(), 1.0, &mut acc).unwrap();
        for &k in &coords {
            let i = k as usize % x.len();
            let fd = fd_input(&pot, &x, i);
            prop_assert!(close(g.data()[i], fd), "input {i}: {} vs {fd}", g.data()[i]);
            let j = k as usize % pot.num_params();
            let fd = fd_param(&pot, &x, j);
            prop_assert!(close(acc[j], fd), "param {j}: {} vs {fd}", acc[j]);
        }
    }

    #[test]
    fn conv_matches_direct_sum(
        c in 1usize..3, h in 3usize..8, w in 3usize..8, o in 1usize..3,
        k in 1usize..4, stride in 1usize..3, pad in 0usize..2, seed: u64,
    ) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let mut r = rng::seeded(seed);
        let x = uniform_batch(&[c, h, w], 1, &mut r).unwrap().reshape(vec![c, h, w]).unwrap();
        let kern = uniform_batch(&[o, c, k, k], 1, &mut r).unwrap().reshape(vec![o, c, k, k]).unwrap();
        let y = conv2d(&x, &kern, stride, pad).unwrap();
        let (oh, ow) = ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1);
        prop_assert_eq!(y.shape(), &[o, oh, ow][..]);
        for oc in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = 0.0;
                    for ic in 0..c {
                        for a in 0..k {
                            for b in 0..k {
                                let (yy, xx) = ((i * stride + a) as i64 - pad as i64, (j * stride + b) as i64 - pad as i64);
                                if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                                    s += x.data()[(ic * h + yy as usize) * w + xx as usize]
                                        * kern.data()[((oc * c + ic) * k + a) * k + b];
                                }
                            }
                        }
                    }
                    prop_assert!((y.data()[(oc * oh + i) * ow + j] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spec_determines_parameters(seed: u64, dim in 1usize..5) {
        let a = Potential::build(PotentialSpec::toy_mlp(dim, seed)).unwrap();
        let b = Potential::build(PotentialSpec::toy_mlp(dim, seed)).unwrap();
        prop_assert_eq!(a.params(), b.params());
        prop_assert_eq!(a.num_params(), 64 * (dim + 1) + 64 * 65 + 65);
    }

    #[test]
    fn fresh_models_are_finite_on_the_cube(seed: u64) {
        let pot = Potential::build(small_image_spec(1, 8, 3, false, 0, seed)).unwrap();
        let x = uniform_batch(pot.input_shape(), 4, &mut rng::seeded(seed)).unwrap();
        for i in 0..4 {
            let g = pot.grad_wrt_input(&x.sample_tensor(i)).unwrap();
            prop_assert!(g.value.is_finite() && g.grad.is_finite());
        }
    }

    #[test]
    fn ml_gradient_is_antisymmetric(seed: u64) {
        let pot = Potential::build(PotentialSpec::toy_mlp(2, seed)).unwrap();
        let mut r = rng::seeded(seed);
        let a = uniform_batch(&[2], 5, &mut r).unwrap();
        let b = uniform_batch(&[2], 7, &mut r).unwrap();
        let g1 = ml_gradient(&pot, &a, &b).unwrap();
        let g2 = ml_gradient(&pot, &b, &a).unwrap();
        for (x, y) in g1.data().iter().zip(g2.data()) {
            prop_assert!((x + y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn noiseless_chains_ignore_the_rng(seed: u64, s1: u64, s2: u64) {
        let pot = Potential::build(PotentialSpec::toy_mlp(2, seed)).unwrap();
        let x0 = uniform_batch(&[2], 6, &mut rng::seeded(seed)).unwrap();
        let cfg = SamplerConfig { epsilon: 0.1, steps: 20, tau: 0, mh: false, init: InitMode::Noise };
        let a = run_chain(&x0, &pot, &cfg, &mut rng::seeded(s1)).unwrap();
        let b = run_chain(&x0, &pot, &cfg, &mut rng::seeded(s2)).unwrap();
        prop_assert_eq!(a.final_states, b.final_states);
        prop_assert_eq!(a.mean_grad_norm, b.mean_grad_norm);
    }

    #[test]
    fn grad_norm_is_permutation_invariant(seed: u64, shift in 1usize..6) {
        let pot = Potential::build(PotentialSpec::toy_mlp(2, seed)).unwrap();
        let x0 = uniform_batch(&[2], 6, &mut rng::seeded(seed)).unwrap();
        let idx: Vec<usize> = (0..6).map(|i| (i + shift) % 6).collect();
        let cfg = SamplerConfig { epsilon: 0.1, steps: 10, tau: 0, mh: false, init: InitMode::Noise };
        let a = run_chain(&x0, &pot, &cfg, &mut rng::seeded(0)).unwrap().mean_grad_norm;
        let b = run_chain(&x0.select(&idx).unwrap(), &pot, &cfg, &mut rng::seeded(0)).unwrap().mean_grad_norm;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn grid_l1_is_a_metric(
        a in proptest::collection::vec(0.0f64..1.0, 16),
        b in proptest::collection::vec(0.0f64..1.0, 16),
        c in proptest::collection::vec(0.0f64..1.0, 16),
    ) {
        let (ga, gb, gc) = (grid(a, 4), grid(b, 4), grid(c, 4));
        let ab = grid_l1(&ga, &gb).unwrap();
        prop_assert_eq!(ab, grid_l1(&gb, &ga).unwrap());
        prop_assert_eq!(grid_l1(&ga, &ga).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= grid_l1(&ga, &gc).unwrap() + grid_l1(&gc, &gb).unwrap() + 1e-12);
    }

    #[test]
    fn correlations_are_bounded(x in proptest::collection::vec(-10.0f64..10.0, 30..80), centered: bool) {
        prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-6));
        let a = acf(&x, 5, centered).unwrap();
        prop_assert!((a[0] - 1.0).abs() < 1e-12);
        prop_assert!(a.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        let p = pacf(&x, 5, centered).unwrap();
        prop_assert!((p[1] - a[1]).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_csv_round_trips(
        rows in proptest::collection::vec((-1e6f64..1e6, 0.0f64..1e3, -1e3f64..1e3, -1e3f64..1e3, 0.0f64..=1.0), 1..20),
        eps in 1e-3f64..2.0,
    ) {
        let log: Vec<DiagnosticsRecord> = rows
            .iter()
            .enumerate()
            .map(|(t, &(d, v, p, n, acc))| DiagnosticsRecord {
                t: t + 1, d, v, r: displacement(eps, v), mean_pos: p, mean_neg: n, accept_rate: acc,
            })
            .collect();
        let mut buf = Vec::new();
        write_csv(&log, &mut buf).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        prop_assert_eq!(&back, &log);
        for r in &back {
            prop_assert_eq!(r.r, displacement(eps, r.v));
        }
    }

    #[test]
    fn checkpoints_round_trip(seed: u64) {
        let pot = Potential::build(small_image_spec(1, 6, 2, false, 1, seed)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&pot, &mut buf).unwrap();
        let back = read_checkpoint(&buf[..], std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back.params(), pot.params());
        prop_assert_eq!(back.spec(), pot.spec());
    }
}

#[test]
fn training_is_bit_reproducible() {
    let data = uniform_batch(&[2], 200, &mut rng::seeded(1)).unwrap();
    let pot = Potential::build(PotentialSpec::toy_mlp(2, 3)).unwrap();
    let mut cfg = Preset::ToyConv.config();
    cfg.steps = 15;
    cfg.sampler.steps = 10;
    cfg.bank_capacity = 300;
    let a = train(&data, &pot, &cfg).unwrap();
    let b = train(&data, &pot, &cfg).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.potential.params(), b.potential.params());
}

fn double_well_map(budget: usize) -> ebm_core::landscape::LandscapeMap {
    let starts = Tensor::new(vec![2, 2], vec![0.6, 0.4, -0.5, -0.3]).unwrap();
    let minima = find_metastable(&DoubleWell, &starts, &MetastableConfig::for_dim(2), &mut rng::seeded(8)).unwrap();
    let mut cfg = MergeConfig::for_dim(2);
    cfg.travel_budget = budget;
    merge_basins(&DoubleWell, &minima, &cfg).unwrap()
}

#[test]
fn barriers_improve_with_budget_and_sit_above_minima() {
    let mut last = f64::INFINITY;
    for budget in [200, 1000, 5000] {
        let map = double_well_map(budget);
        for m in &map.merges {
            assert!(m.barrier >= map.basins[m.a].min_energy && m.barrier >= map.basins[m.b].min_energy);
        }
        let b = map.merges.iter().map(|m| m.barrier).fold(f64::INFINITY, f64::min);
        assert!(b <= last + 1e-12, "budget {budget}: {b} > {last}");
        last = b;
    }
}

#[test]
fn disconnectivity_heights_are_monotone() {
    let map = double_well_map(5000);
    let tree = emit_disconnectivity(&map).unwrap();
    for (i, node) in tree.nodes.iter().enumerate() {
        if let TreeNode::Join { left, right, height } = *node {
            assert!(height >= tree.height(left) && height >= tree.height(right), "node {i}");
        }
    }
}

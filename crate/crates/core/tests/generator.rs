use std::path::PathBuf;

use cppn2gan::tensor_gen::{
    load_generator_weights, ForwardFixture, GeneratorWeights, LatentVector, LayerKind, LayerMeta, Nonlinearity,
    TensorRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(rng: &mut ChaCha8Rng, name: &str, kind: LayerKind, act: Nonlinearity, shape: Vec<usize>) -> TensorRecord {
    let n = shape.iter().product();
    let data = match kind {
        LayerKind::BatchNorm { .. } => {
            let c = shape[1];
            (0..4 * c)
                .map(|i| match i / c {
                    0 => rng.random_range(0.5..1.5),
                    1 | 2 => rng.random_range(-0.5..0.5),
                    _ => rng.random_range(0.2..2.0),
                })
                .collect()
        }
        _ => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    TensorRecord::new(name, LayerMeta { kind, activation: act }, shape, data).unwrap()
}

/// latent -> 4x4 (k4 s1 p0) -> BN+ReLU -> 8x8 (k4 s2 p1) -> bias+tanh.
fn small_generator(seed: u64, latent: usize, channels: usize) -> GeneratorWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = |k, s, p| LayerKind::ConvTranspose {
        kernel: k,
        stride: s,
        pad: p,
    };
    let records = vec![
        record(&mut rng, "c1", conv(4, 1, 0), Nonlinearity::None, vec![latent, 6, 4, 4]),
        record(&mut rng, "bn1", LayerKind::BatchNorm { eps: 1e-5 }, Nonlinearity::Relu, vec![4, 6]),
        record(&mut rng, "c2", conv(4, 2, 1), Nonlinearity::LeakyRelu, vec![6, 5, 4, 4]),
        record(&mut rng, "c3", conv(3, 1, 1), Nonlinearity::None, vec![5, channels, 3, 3]),
        record(&mut rng, "b3", LayerKind::Bias, Nonlinearity::Tanh, vec![channels]),
    ];
    GeneratorWeights::new(latent, 8, 8, channels, records).unwrap()
}

/// Scatter-form transposed convolution and elementwise layers, all in f64.
fn oracle_forward(w: &GeneratorWeights, z: &[f64]) -> Vec<f64> {
    let (mut c, mut h, mut wd) = (z.len(), 1usize, 1usize);
    let mut vol: Vec<f64> = z.to_vec();
    for r in w.records() {
        match r.meta.kind {
            LayerKind::ConvTranspose { kernel, stride, pad } => {
                let oc_n = r.shape[1];
                let full_h = (h - 1) * stride + kernel;
                let full_w = (wd - 1) * stride + kernel;
                let mut full = vec![0.0; oc_n * full_h * full_w];
                for ic in 0..c {
                    for iy in 0..h {
                        for ix in 0..wd {
                            let v = vol[(ic * h + iy) * wd + ix];
                            for oc in 0..oc_n {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let wt = r.data[((ic * oc_n + oc) * kernel + ky) * kernel + kx] as f64;
                                        let (fy, fx) = (iy * stride + ky, ix * stride + kx);
                                        full[(oc * full_h + fy) * full_w + fx] += v * wt;
                                    }
                                }
                            }
                        }
                    }
                }
                let (nh, nw) = (full_h - 2 * pad, full_w - 2 * pad);
                vol = (0..oc_n)
                    .flat_map(|oc| (0..nh).flat_map(move |y| (0..nw).map(move |x| (oc, y, x))))
                    .map(|(oc, y, x)| full[(oc * full_h + y + pad) * full_w + x + pad])
                    .collect();
                c = oc_n;
                h = nh;
                wd = nw;
            }
            LayerKind::Bias => {
                for (i, v) in vol.iter_mut().enumerate() {
                    *v += r.data[i / (h * wd)] as f64;
                }
            }
            LayerKind::BatchNorm { eps } => {
                for (i, v) in vol.iter_mut().enumerate() {
                    let ch = i / (h * wd);
                    let g = r.data[ch] as f64;
                    let b = r.data[c + ch] as f64;
                    let m = r.data[2 * c + ch] as f64;
                    let var = r.data[3 * c + ch] as f64;
                    *v = (*v - m) / (var + eps).sqrt() * g + b;
                }
            }
        }
        for v in vol.iter_mut() {
            *v = match r.meta.activation {
                Nonlinearity::None => *v,
                Nonlinearity::Relu => v.max(0.0),
                Nonlinearity::LeakyRelu => {
                    if *v < 0.0 {
                        0.2 * *v
                    } else {
                        *v
                    }
                }
                Nonlinearity::Tanh => v.tanh(),
                Nonlinearity::Sigmoid => 1.0 / (1.0 + (-*v).exp()),
            };
        }
    }
    vol
}

#[test]
fn forward_matches_scatter_oracle() {
    let w = small_generator(1, 5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let z: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = w.forward(&LatentVector::new(z.iter().copied())).unwrap();
        let want = oracle_forward(&w, &z);
        assert_eq!(got.data.len(), want.len());
        for (a, b) in got.data.iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}

#[test]
fn ganw_file_round_trip() {
    let w = small_generator(3, 7, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ganw");
    std::fs::write(&path, w.to_bytes()).unwrap();
    let back = load_generator_weights(&path).unwrap();
    assert_eq!(back, w);
    assert_eq!(back.to_bytes(), w.to_bytes());
}

#[test]
fn fixture_text_round_trip_and_compare() {
    let w = small_generator(4, 5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let zs: Vec<Vec<f64>> = (0..10).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let fx = ForwardFixture::record(&w, &zs, 6, 5).unwrap();
    let parsed = ForwardFixture::parse(&fx.to_text()).unwrap();
    assert_eq!(parsed, fx);
    let cmp = parsed.compare(&w).unwrap();
    assert_eq!(cmp.max_abs_error, 0.0);
    assert_eq!(cmp.tile_mismatches, 0);

    let other = small_generator(5, 5, 3);
    let cmp = parsed.compare(&other).unwrap();
    assert!(cmp.max_abs_error > 1e-4);
}

#[test]
fn fixture_rejects_bad_text() {
    assert!(ForwardFixture::parse("").is_err());
    assert!(ForwardFixture::parse("# ganw-fixture 1\nlatent_size=1 channels=1 width=1 height=1 crop_width=1 crop_height=1 count=1\nz 0.5\n").is_err());
    assert!(ForwardFixture::parse("# ganw-fixture 1\nlatent_size=1 channels=1 width=1 height=1 crop_width=1 crop_height=1 count=1\nz 0.5\nscores 1 2\ntiles 0\n").is_err());
}

/// Exported checkpoints, if a directory of `<name>.ganw` + `<name>.fixture`
/// pairs is given in `GANW_FIXTURE_DIR`.
#[test]
fn exported_fixtures_when_present() {
    let Some(dir) = std::env::var_os("GANW_FIXTURE_DIR").map(PathBuf::from) else {
        return;
    };
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "ganw") {
            continue;
        }
        let w = load_generator_weights(&path).unwrap();
        let fx = ForwardFixture::parse(&std::fs::read_to_string(path.with_extension("fixture")).unwrap()).unwrap();
        let cmp = fx.compare(&w).unwrap();
        assert!(cmp.max_abs_error <= 1e-4, "{}: {cmp:?}", path.display());
        assert_eq!(cmp.tile_mismatches, 0, "{}", path.display());
    }
}

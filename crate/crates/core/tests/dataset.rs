use vtriplet::eval::embed_sequence;
use vtriplet::imaging::load_image;
use vtriplet::mining::synth::{manifest_path, synthetic_manifest};
use vtriplet::mining::{generate_synthetic_dataset, load_manifest, render_place, MiningRule, SynthConfig, TripletMiner};
use vtriplet::network::{Network, NetworkSpec, ParameterSet};

fn raw_distance(a: &image::RgbImage, b: &image::RgbImage) -> f64 {
    a.as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn places_differ_more_than_conditions() {
    let cfg = SynthConfig { seed: 42, ..SynthConfig::default() };
    let imgs: Vec<Vec<_>> = (0..cfg.conditions)
        .map(|c| (0..cfg.places).map(|p| render_place(&cfg, c, p)).collect())
        .collect();
    let (mut inter, mut n_inter) = (0.0, 0);
    for c in 0..cfg.conditions {
        for p in 0..cfg.places {
            for q in p + 1..cfg.places {
                inter += raw_distance(&imgs[c][p], &imgs[c][q]);
                n_inter += 1;
            }
        }
    }
    let (mut intra, mut n_intra) = (0.0, 0);
    for p in 0..cfg.places {
        for c in 0..cfg.conditions {
            for e in c + 1..cfg.conditions {
                intra += raw_distance(&imgs[c][p], &imgs[e][p]);
                n_intra += 1;
            }
        }
    }
    let (inter, intra) = (inter / n_inter as f64, intra / n_intra as f64);
    assert!(inter > intra, "inter {inter} intra {intra}");
    // frozen on the default seed
    assert!((inter - 3650.7).abs() < 0.1, "{inter}");
    assert!((intra - 3000.8).abs() < 0.1, "{intra}");
}

#[test]
fn rendering_regression() {
    let cfg = SynthConfig { seed: 42, ..SynthConfig::default() };
    let img = render_place(&cfg, 1, 7);
    let sum: u64 = img.as_raw().iter().map(|&v| v as u64).sum();
    assert_eq!(sum, 175_210);
    assert_eq!(img.get_pixel(5, 5).0, [48, 124, 53]);
    assert_eq!(render_place(&cfg, 1, 7), img);
}

#[test]
fn single_condition_degenerates() {
    let cfg = SynthConfig { places: 8, conditions: 1, ..SynthConfig::default() };
    let m = synthetic_manifest(&cfg, 0, ".".as_ref());
    assert_eq!(render_place(&cfg, 0, 3), render_place(&cfg, 0, 3));
    let miner = TripletMiner::cross_condition(&m, &m, None, &MiningRule::default()).unwrap();
    assert_eq!(miner.available(), 0);
}

#[test]
fn embedding_matches_independent_forwards() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { places: 3, conditions: 1, seed: 9, ..SynthConfig::default() };
    generate_synthetic_dataset(&cfg, dir.path()).unwrap();
    let m = load_manifest(&manifest_path(dir.path(), 0), true).unwrap();
    assert_eq!(m.len(), 3);

    let spec = NetworkSpec::tiny();
    let params = ParameterSet::init(&spec, 1);
    let set = embed_sequence(&m, &spec, &params, 2).unwrap();
    let net = Network::new(&spec, &params).unwrap();
    for i in 0..3 {
        let img = load_image(&m.image_path(i), &spec.input()).unwrap();
        assert_eq!(set.get(i), net.forward(&img).unwrap().as_slice());
    }

    let mut dup = m.clone();
    dup.records.push(dup.records[1].clone());
    dup.records[3].frame = 3;
    let twice = embed_sequence(&dup, &spec, &params, 64).unwrap();
    assert_eq!(twice.get(3), twice.get(1));

    let mut empty = m.clone();
    empty.records.clear();
    let none = embed_sequence(&empty, &spec, &params, 4).unwrap();
    assert!(none.is_empty());
    assert_eq!(none.dim(), 16);
}

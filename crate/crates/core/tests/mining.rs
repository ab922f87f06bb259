use std::collections::HashSet;
use std::path::PathBuf;

use vtriplet::mining::synth::synthetic_manifest;
use vtriplet::mining::{
    parse_alignment, FrameRecord, FrameRef, MiningRule, Pose, PoseIndex, RuleKind, SequenceManifest,
    SynthConfig, Triplet, TripletMiner, TripletSource, TripletStream,
};

fn manifest(seq: &str, condition: &str, positions: &[[f64; 2]]) -> SequenceManifest {
    SequenceManifest {
        seq_id: seq.into(),
        condition: condition.into(),
        geographic: false,
        base_dir: PathBuf::from("."),
        records: positions
            .iter()
            .enumerate()
            .map(|(i, p)| FrameRecord {
                frame: i,
                timestamp: i as f64,
                pose: Pose::Metric { x: p[0], y: p[1], z: 0.0 },
                image: format!("{i}.png"),
            })
            .collect(),
    }
}

/// Two laps of a 60-frame circle of radius 100 m: frame i and i + 60 coincide.
fn two_laps() -> SequenceManifest {
    let pts: Vec<[f64; 2]> = (0..120)
        .map(|i| {
            let a = (i % 60) as f64 / 60.0 * std::f64::consts::TAU;
            [100.0 * a.cos(), 100.0 * a.sin()]
        })
        .collect();
    manifest("loop", "day", &pts)
}

fn dist(m: &SequenceManifest, a: usize, b: usize) -> f64 {
    let p = m.local_positions();
    let (x, y) = (p[a], p[b]);
    ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
}

fn brute_force_viewpoint(m: &SequenceManifest, rule: &MiningRule) -> HashSet<Triplet> {
    let n = m.len();
    let mut out = HashSet::new();
    for q in 0..n {
        for p in 0..n {
            if p == q || p.abs_diff(q) <= rule.temporal_exclusion || dist(m, q, p) >= rule.positive_radius {
                continue;
            }
            for d in 0..n {
                if dist(m, q, d) > rule.negative_radius {
                    out.insert(Triplet {
                        query: FrameRef::new(&m.seq_id, q),
                        similar: FrameRef::new(&m.seq_id, p),
                        dissimilar: FrameRef::new(&m.seq_id, d),
                        rule: RuleKind::Viewpoint,
                    });
                }
            }
        }
    }
    out
}

#[test]
fn loop_closure_matches_brute_force() {
    let m = two_laps();
    // adjacent frames are ~10.5 m apart, so only the other lap is a positive
    let rule = MiningRule { seed: 5, ..MiningRule::default() };
    let miner = TripletMiner::viewpoint(&m, &rule).unwrap();
    let expected = brute_force_viewpoint(&m, &rule);
    let all: Vec<Triplet> = miner.enumerate();
    assert_eq!(all.len(), expected.len());
    assert_eq!(miner.available(), expected.len() as u128);
    assert_eq!(all.iter().cloned().collect::<HashSet<_>>(), expected);
    assert!(all.iter().all(|t| t.query.frame.abs_diff(t.similar.frame) == 60));

    let mut miner = miner;
    let mined = miner.mine(500).unwrap();
    assert!(mined.shortfall.is_none());
    assert!(mined.triplets.iter().all(|t| expected.contains(t)));
}

#[test]
fn viewpoint_shortfall_returns_everything() {
    let m = two_laps();
    let rule = MiningRule { positive_radius: 1.0, negative_radius: 195.0, ..MiningRule::default() };
    let mut miner = TripletMiner::viewpoint(&m, &rule).unwrap();
    let avail = miner.available();
    let out = miner.mine(avail as usize + 1).unwrap();
    let s = out.shortfall.unwrap();
    assert_eq!(s.available, avail);
    assert_eq!(out.triplets.len() as u128, avail);
    assert_eq!(out.triplets.iter().collect::<HashSet<_>>().len() as u128, avail);
}

#[test]
fn cross_condition_triplets_pass_pose_checks() {
    let cfg = SynthConfig { places: 20, ..SynthConfig::default() };
    let a = synthetic_manifest(&cfg, 0, ".".as_ref());
    let b = synthetic_manifest(&cfg, 1, ".".as_ref());
    let rule = MiningRule::default();
    let miner = TripletMiner::cross_condition(&a, &b, None, &rule).unwrap();
    let index = PoseIndex::new(&[&a, &b]).unwrap();
    let all = miner.enumerate();
    assert_eq!(all.len() as u128, miner.available());
    assert!(!all.is_empty());
    for t in &all {
        index.verify(t, rule.positive_radius, rule.negative_radius, true).unwrap();
        assert_ne!(t.query.seq, t.similar.seq);
    }
    let queries: HashSet<&str> = all.iter().map(|t| t.query.seq.as_str()).collect();
    assert_eq!(queries.len(), 2);
}

#[test]
fn same_tags_yield_no_cross_condition_positives() {
    let cfg = SynthConfig { places: 10, ..SynthConfig::default() };
    let a = synthetic_manifest(&cfg, 0, ".".as_ref());
    let mut b = a.clone();
    b.seq_id = "copy".into();
    let miner = TripletMiner::cross_condition(&a, &b, None, &MiningRule::default()).unwrap();
    assert_eq!(miner.available(), 0);

    // without the tag requirement the identity alignment pairs the copies
    let rule = MiningRule { cross_condition: false, ..MiningRule::default() };
    let miner = TripletMiner::cross_condition(&a, &b, None, &rule).unwrap();
    let all = miner.enumerate();
    assert!(!all.is_empty());
    assert!(all.iter().all(|t| t.query.frame == t.similar.frame && t.query.seq != t.similar.seq));
}

#[test]
fn explicit_alignment_is_honoured() {
    let a = manifest("a", "day", &[[0.0, 0.0], [100.0, 0.0], [200.0, 0.0]]);
    let b = manifest("b", "night", &[[200.0, 0.0], [100.0, 0.0], [0.0, 0.0]]);
    let map = parse_alignment("a_frame,b_frame\n0,2\n1,1\n2,0\n").unwrap();
    let miner = TripletMiner::cross_condition(&a, &b, Some(&map), &MiningRule::default()).unwrap();
    for t in miner.enumerate() {
        let (qa, sb) = if t.query.seq == "a" { (t.query.frame, t.similar.frame) } else { (t.similar.frame, t.query.frame) };
        assert_eq!(qa + sb, 2);
    }
    let bad = parse_alignment("a_frame,b_frame\n0,5\n").unwrap();
    assert!(TripletMiner::cross_condition(&a, &b, Some(&bad), &MiningRule::default()).is_err());
}

#[test]
fn mining_is_deterministic() {
    let m = two_laps();
    let rule = MiningRule { seed: 11, ..MiningRule::default() };
    let run = || TripletMiner::viewpoint(&m, &rule).unwrap().mine(200).unwrap();
    assert_eq!(run(), run());
    let other = TripletMiner::viewpoint(&m, &MiningRule { seed: 12, ..rule }).unwrap().mine(200).unwrap();
    assert_ne!(run(), other);
}

fn boxed(m: TripletMiner) -> Box<dyn TripletSource + Send> {
    Box::new(m)
}

#[test]
fn stream_mixture_weights() {
    let m = two_laps();
    let cfg = SynthConfig { places: 20, ..SynthConfig::default() };
    let a = synthetic_manifest(&cfg, 0, ".".as_ref());
    let b = synthetic_manifest(&cfg, 1, ".".as_ref());
    let rule = MiningRule { seed: 3, ..MiningRule::default() };
    let vp = || TripletMiner::viewpoint(&m, &rule).unwrap();
    let cc = || TripletMiner::cross_condition(&a, &b, None, &rule).unwrap();

    let mut mixed = TripletStream::new(vec![(boxed(vp()), 1.0), (boxed(cc()), 1.0)], 9).unwrap();
    let n = 10_000;
    let firsts = (0..n).filter(|_| mixed.draw().unwrap().0 == 0).count();
    let frac = firsts as f64 / n as f64;
    assert!((0.47..=0.53).contains(&frac), "{frac}");

    // a zero weight source is never chosen and the other behaves as if alone
    let mut only = TripletStream::new(vec![(boxed(vp()), 1.0), (boxed(cc()), 0.0)], 9).unwrap();
    let mut single = TripletStream::new(vec![(boxed(vp()), 1.0)], 9).unwrap();
    for _ in 0..500 {
        let (i, t) = only.draw().unwrap();
        assert_eq!(i, 0);
        assert_eq!(t, single.draw().unwrap().1);
    }
}

#[test]
fn starved_stream_fails_once() {
    let lonely = manifest("s", "day", &[[0.0, 0.0], [500.0, 0.0]]);
    let miner = TripletMiner::viewpoint(&lonely, &MiningRule::default()).unwrap();
    let mut stream = TripletStream::new(vec![(boxed(miner), 1.0)], 0).unwrap();
    assert_eq!(stream.next().unwrap().unwrap_err().class(), "stream");
    assert!(stream.next().is_none());
}

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mining::manifest::SequenceManifest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningRule {
    /// Frames closer than this (metres) count as the same place.
    #[serde(default = "default_positive_radius")]
    pub positive_radius: f64,
    /// Frames farther than this (metres) count as a different place.
    #[serde(default = "default_negative_radius")]
    pub negative_radius: f64,
    /// Require positives to carry a different condition tag than the query.
    #[serde(default = "default_true")]
    pub cross_condition: bool,
    /// Temporal neighbours (in frames) excluded from same-sequence positives.
    #[serde(default = "default_exclusion")]
    pub temporal_exclusion: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_positive_radius() -> f64 {
    10.0
}

fn default_negative_radius() -> f64 {
    50.0
}

fn default_true() -> bool {
    true
}

fn default_exclusion() -> usize {
    2
}

impl Default for MiningRule {
    fn default() -> Self {
        MiningRule {
            positive_radius: default_positive_radius(),
            negative_radius: default_negative_radius(),
            cross_condition: true,
            temporal_exclusion: default_exclusion(),
            seed: 0,
        }
    }
}

impl MiningRule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.positive_radius > 0.0
            && self.positive_radius < self.negative_radius
            && self.negative_radius.is_finite();
        if !ok {
            return Err(Error::config(format!(
                "mining radii must satisfy 0 < r_pos < r_neg, got {} and {}",
                self.positive_radius, self.negative_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameRef {
    pub seq: String,
    pub frame: usize,
}

impl FrameRef {
    pub fn new(seq: impl Into<String>, frame: usize) -> Self {
        FrameRef {
            seq: seq.into(),
            frame,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Viewpoint,
    CrossCondition,
}

impl RuleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleKind::Viewpoint => "viewpoint",
            RuleKind::CrossCondition => "cross-condition",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "viewpoint" => Some(RuleKind::Viewpoint),
            "cross-condition" => Some(RuleKind::CrossCondition),
            _ => None,
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub query: FrameRef,
    pub similar: FrameRef,
    pub dissimilar: FrameRef,
    pub rule: RuleKind,
}

/// Returned alongside the mined triplets when fewer than requested exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shortfall {
    pub requested: usize,
    pub available: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningOutcome {
    pub triplets: Vec<Triplet>,
    pub shortfall: Option<Shortfall>,
}

/// One attempt at producing a triplet; `None` is a rejection.
pub trait TripletSource {
    fn name(&self) -> &str;
    fn try_draw(&mut self) -> Option<Triplet>;
}

#[derive(Debug, Clone)]
struct PoolFrame {
    seq: usize,
    frame: usize,
    pos: [f64; 3],
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Seeded triplet sampler over one sequence (viewpoint rule) or an aligned pair
/// of sequences (cross-condition rule).
#[derive(Debug, Clone)]
pub struct TripletMiner {
    name: String,
    kind: RuleKind,
    seq_ids: Vec<String>,
    pool: Vec<PoolFrame>,
    /// Query groups visited in turn; one group for viewpoint mining, one per side otherwise.
    groups: Vec<Vec<usize>>,
    positives: Vec<Vec<usize>>,
    negative_counts: Vec<usize>,
    negative_radius: f64,
    rng: ChaCha8Rng,
    turn: usize,
}

impl TripletMiner {
    /// Same-sequence mining: positives within `r_pos` outside the temporal
    /// exclusion window (loop closures included), negatives beyond `r_neg`.
    pub fn viewpoint(manifest: &SequenceManifest, rule: &MiningRule) -> Result<Self> {
        rule.validate()?;
        let positions = manifest.local_positions();
        let pool: Vec<PoolFrame> = positions
            .iter()
            .enumerate()
            .map(|(i, &pos)| PoolFrame {
                seq: 0,
                frame: i,
                pos,
            })
            .collect();
        let positives = (0..pool.len())
            .map(|q| {
                (0..pool.len())
                    .filter(|&p| {
                        p != q
                            && p.abs_diff(q) > rule.temporal_exclusion
                            && dist(&pool[q].pos, &pool[p].pos) < rule.positive_radius
                    })
                    .collect()
            })
            .collect();
        let mut miner = TripletMiner {
            name: format!("viewpoint:{}", manifest.seq_id),
            kind: RuleKind::Viewpoint,
            seq_ids: vec![manifest.seq_id.clone()],
            groups: vec![(0..pool.len()).collect()],
            positives,
            negative_counts: Vec::new(),
            negative_radius: rule.negative_radius,
            rng: ChaCha8Rng::seed_from_u64(rule.seed),
            turn: 0,
            pool,
        };
        miner.count_negatives();
        Ok(miner)
    }

    /// Cross-condition mining over two aligned sequences. `alignment[i]` is the
    /// frame of `b` captured at the place of frame `i` of `a`; `None` means the
    /// identity map over the common length.
    pub fn cross_condition(
        a: &SequenceManifest,
        b: &SequenceManifest,
        alignment: Option<&[Option<usize>]>,
        rule: &MiningRule,
    ) -> Result<Self> {
        rule.validate()?;
        if a.geographic != b.geographic {
            return Err(Error::config(format!(
                "cannot mix geographic and metric poses (`{}` vs `{}`)",
                a.seq_id, b.seq_id
            )));
        }
        let identity: Vec<Option<usize>>;
        let alignment = match alignment {
            Some(map) => map,
            None => {
                identity = (0..a.len()).map(|i| (i < b.len()).then_some(i)).collect();
                &identity
            }
        };
        if alignment.len() > a.len() {
            return Err(Error::config(format!(
                "alignment has {} entries for {} frames of `{}`",
                alignment.len(),
                a.len(),
                a.seq_id
            )));
        }
        if let Some(&bad) = alignment.iter().flatten().find(|&&j| j >= b.len()) {
            return Err(Error::config(format!(
                "alignment targets frame {bad} but `{}` has {} frames",
                b.seq_id,
                b.len()
            )));
        }
        let (pa, pb) = match a.records.first() {
            Some(first) => (a.positions_about(&first.pose), b.positions_about(&first.pose)),
            None => (Vec::new(), b.local_positions()),
        };
        let mut pool: Vec<PoolFrame> = pa
            .iter()
            .enumerate()
            .map(|(i, &pos)| PoolFrame {
                seq: 0,
                frame: i,
                pos,
            })
            .collect();
        let offset = pool.len();
        pool.extend(pb.iter().enumerate().map(|(i, &pos)| PoolFrame {
            seq: 1,
            frame: i,
            pos,
        }));
        let same_seq = a.seq_id == b.seq_id;
        let differing_tags = a.condition != b.condition;
        let mut positives = vec![Vec::new(); pool.len()];
        for (i, j) in alignment.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))) {
            if same_seq && i == j {
                continue;
            }
            if rule.cross_condition && !differing_tags {
                continue;
            }
            let (qa, qb) = (i, offset + j);
            if dist(&pool[qa].pos, &pool[qb].pos) < rule.positive_radius {
                positives[qa].push(qb);
                positives[qb].push(qa);
            }
        }
        for p in &mut positives {
            p.sort_unstable();
            p.dedup();
        }
        let mut miner = TripletMiner {
            name: format!("cross-condition:{}+{}", a.seq_id, b.seq_id),
            kind: RuleKind::CrossCondition,
            seq_ids: vec![a.seq_id.clone(), b.seq_id.clone()],
            groups: vec![(0..offset).collect(), (offset..pool.len()).collect()],
            positives,
            negative_counts: Vec::new(),
            negative_radius: rule.negative_radius,
            rng: ChaCha8Rng::seed_from_u64(rule.seed),
            turn: 0,
            pool,
        };
        miner.count_negatives();
        Ok(miner)
    }

    fn count_negatives(&mut self) {
        let r = self.negative_radius;
        self.negative_counts = self
            .pool
            .iter()
            .map(|q| self.pool.iter().filter(|f| dist(&q.pos, &f.pos) > r).count())
            .collect();
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    /// Number of distinct triplets this miner can emit.
    pub fn available(&self) -> u128 {
        self.positives
            .iter()
            .zip(&self.negative_counts)
            .map(|(p, &n)| p.len() as u128 * n as u128)
            .sum()
    }

    fn frame_ref(&self, idx: usize) -> FrameRef {
        let f = &self.pool[idx];
        FrameRef::new(self.seq_ids[f.seq].clone(), f.frame)
    }

    fn make(&self, q: usize, p: usize, n: usize) -> Triplet {
        Triplet {
            query: self.frame_ref(q),
            similar: self.frame_ref(p),
            dissimilar: self.frame_ref(n),
            rule: self.kind,
        }
    }

    /// Every distinct triplet, in query, positive, negative order.
    pub fn enumerate(&self) -> Vec<Triplet> {
        let mut out = Vec::new();
        for group in &self.groups {
            for &q in group {
                if self.negative_counts[q] == 0 {
                    continue;
                }
                for &p in &self.positives[q] {
                    for n in 0..self.pool.len() {
                        if dist(&self.pool[q].pos, &self.pool[n].pos) > self.negative_radius {
                            out.push(self.make(q, p, n));
                        }
                    }
                }
            }
        }
        out
    }

    /// Samples `count` triplets, or returns every available triplet plus a
    /// shortfall report when fewer than `count` exist.
    pub fn mine(&mut self, count: usize) -> Result<MiningOutcome> {
        if count == 0 {
            return Err(Error::usage("triplet count must be at least 1"));
        }
        let available = self.available();
        if available < count as u128 {
            return Ok(MiningOutcome {
                triplets: self.enumerate(),
                shortfall: Some(Shortfall {
                    requested: count,
                    available,
                }),
            });
        }
        let mut triplets = Vec::with_capacity(count);
        while triplets.len() < count {
            if let Some(t) = self.try_draw() {
                triplets.push(t);
            }
        }
        Ok(MiningOutcome {
            triplets,
            shortfall: None,
        })
    }
}

impl TripletSource for TripletMiner {
    fn name(&self) -> &str {
        &self.name
    }

    fn try_draw(&mut self) -> Option<Triplet> {
        let group = &self.groups[self.turn % self.groups.len()];
        self.turn = self.turn.wrapping_add(1);
        if group.is_empty() {
            return None;
        }
        let q = group[self.rng.gen_range(0..group.len())];
        let pos = &self.positives[q];
        if pos.is_empty() || self.negative_counts[q] == 0 {
            return None;
        }
        let p = pos[self.rng.gen_range(0..pos.len())];
        let n = loop {
            let n = self.rng.gen_range(0..self.pool.len());
            if dist(&self.pool[q].pos, &self.pool[n].pos) > self.negative_radius {
                break n;
            }
        };
        Some(self.make(q, p, n))
    }
}

pub fn mine_viewpoint_triplets(
    manifest: &SequenceManifest,
    rule: &MiningRule,
    count: usize,
) -> Result<MiningOutcome> {
    TripletMiner::viewpoint(manifest, rule)?.mine(count)
}

pub fn mine_cross_condition_triplets(
    a: &SequenceManifest,
    b: &SequenceManifest,
    alignment: Option<&[Option<usize>]>,
    rule: &MiningRule,
    count: usize,
) -> Result<MiningOutcome> {
    TripletMiner::cross_condition(a, b, alignment, rule)?.mine(count)
}

/// Parses a two-column `a_frame,b_frame` alignment file into a map over `a`.
pub fn parse_alignment(text: &str) -> Result<Vec<Option<usize>>> {
    let mut map: Vec<Option<usize>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if i == 0 {
            if line != "a_frame,b_frame" {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header `a_frame,b_frame`".into(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Parse {
            line: i + 1,
            message: format!("malformed alignment row `{line}`"),
        };
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > 10_000_000 {
            return Err(bad());
        }
        if map.len() <= a {
            map.resize(a + 1, None);
        }
        if map[a].is_some() {
            return Err(Error::Validation {
                line: i + 1,
                message: format!("frame {a} aligned twice"),
            });
        }
        map[a] = Some(b);
    }
    if map.is_empty() && text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(map)
}

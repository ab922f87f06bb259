use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::mining::manifest::SequenceManifest;
use crate::mining::miner::{FrameRef, RuleKind, Triplet};

pub const TRIPLET_HEADER: [&str; 7] = ["q_seq", "q_frame", "p_seq", "p_frame", "n_seq", "n_frame", "rule"];

pub fn write_triplets<W: Write>(triplets: &[Triplet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::format(format!("cannot write triplets: {e}"));
    w.write_record(TRIPLET_HEADER).map_err(err)?;
    for t in triplets {
        w.write_record([
            t.query.seq.as_str(),
            &t.query.frame.to_string(),
            &t.similar.seq,
            &t.similar.frame.to_string(),
            &t.dissimilar.seq,
            &t.dissimilar.frame.to_string(),
            t.rule.as_str(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<triplets>", e))?;
    Ok(())
}

/// Parses a triplet list. Lines starting with `#` are comments.
pub fn parse_triplets(text: &str) -> Result<Vec<Triplet>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut seen_header = false;
    for row in reader.records() {
        let rec = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let perr = |message: String| Error::Parse { line, message };
        if !seen_header {
            if rec.iter().map(str::trim).ne(TRIPLET_HEADER) {
                return Err(perr(format!("expected header `{}`", TRIPLET_HEADER.join(","))));
            }
            seen_header = true;
            continue;
        }
        if rec.len() != 7 {
            return Err(perr(format!("expected 7 fields, found {}", rec.len())));
        }
        let frame = |i: usize| -> Result<usize> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| perr(format!("`{}` is not a frame index", rec[i].trim())))
        };
        let r = |i: usize| -> Result<FrameRef> {
            let seq = rec[i].trim();
            if seq.is_empty() {
                return Err(perr("empty sequence id".into()));
            }
            Ok(FrameRef::new(seq, frame(i + 1)?))
        };
        let rule = RuleKind::parse(rec[6].trim())
            .ok_or_else(|| perr(format!("unknown rule `{}`", rec[6].trim())))?;
        let t = Triplet {
            query: r(0)?,
            similar: r(2)?,
            dissimilar: r(4)?,
            rule,
        };
        if t.query == t.similar {
            return Err(Error::Validation {
                line,
                message: "query and similar refer to the same frame".into(),
            });
        }
        out.push(t);
    }
    if !seen_header {
        return Err(Error::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(out)
}

/// Looks up frame positions across manifests for post-hoc triplet checks.
pub struct PoseIndex<'a> {
    manifests: HashMap<&'a str, (&'a SequenceManifest, Vec<[f64; 3]>)>,
}

impl<'a> PoseIndex<'a> {
    /// All manifests must share a pose kind; geographic poses are projected about
    /// the first manifest's first fix.
    pub fn new(manifests: &[&'a SequenceManifest]) -> Result<Self> {
        let origin = manifests.iter().find_map(|m| m.records.first().map(|r| r.pose));
        let mut map = HashMap::new();
        for m in manifests {
            if let Some(o) = origin {
                if m.geographic != o.is_geographic() {
                    return Err(Error::config("manifests mix geographic and metric poses"));
                }
            }
            let pos = origin.map_or_else(Vec::new, |o| m.positions_about(&o));
            if map.insert(m.seq_id.as_str(), (*m, pos)).is_some() {
                return Err(Error::config(format!("duplicate sequence id `{}`", m.seq_id)));
            }
        }
        Ok(PoseIndex { manifests: map })
    }

    pub fn manifest(&self, seq: &str) -> Option<&'a SequenceManifest> {
        self.manifests.get(seq).map(|(m, _)| *m)
    }

    pub fn position(&self, r: &FrameRef) -> Result<[f64; 3]> {
        self.manifests
            .get(r.seq.as_str())
            .and_then(|(_, p)| p.get(r.frame).copied())
            .ok_or_else(|| Error::Resolution {
                missing: vec![format!("{}#{}", r.seq, r.frame)],
            })
    }

    pub fn distance(&self, a: &FrameRef, b: &FrameRef) -> Result<f64> {
        let (p, q) = (self.position(a)?, self.position(b)?);
        Ok(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
    }

    /// Checks the pose invariants of one triplet.
    pub fn verify(&self, t: &Triplet, r_pos: f64, r_neg: f64, cross_condition: bool) -> Result<()> {
        let fail = |m: String| Err(Error::Validation { line: 0, message: m });
        if t.query == t.similar {
            return fail(format!("{:?}: query equals similar", t));
        }
        let dp = self.distance(&t.query, &t.similar)?;
        let dn = self.distance(&t.query, &t.dissimilar)?;
        if !(dp < r_pos) {
            return fail(format!("{:?}: similar at {dp} m", t));
        }
        if !(dn > r_neg) {
            return fail(format!("{:?}: dissimilar at {dn} m", t));
        }
        if cross_condition && t.rule == RuleKind::CrossCondition {
            let cq = self.manifest(&t.query.seq).map(|m| &m.condition);
            let cs = self.manifest(&t.similar.seq).map(|m| &m.condition);
            if cq == cs {
                return fail(format!("{:?}: positive shares the query condition", t));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Triplet> {
        vec![
            Triplet {
                query: FrameRef::new("a", 0),
                similar: FrameRef::new("b", 0),
                dissimilar: FrameRef::new("a", 7),
                rule: RuleKind::CrossCondition,
            },
            Triplet {
                query: FrameRef::new("a", 3),
                similar: FrameRef::new("a", 9),
                dissimilar: FrameRef::new("a", 20),
                rule: RuleKind::Viewpoint,
            },
        ]
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_triplets(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("q_seq,q_frame,p_seq,p_frame,n_seq,n_frame,rule\n"));
        assert_eq!(parse_triplets(&text).unwrap(), sample());
    }

    #[test]
    fn comment_lines_are_skipped() {
        let text = "# config_hash=ab\nq_seq,q_frame,p_seq,p_frame,n_seq,n_frame,rule\na,0,b,0,a,5,viewpoint\n";
        assert_eq!(parse_triplets(text).unwrap().len(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "q_seq,q_frame,p_seq,p_frame,n_seq,n_frame,rule\na,0,b,0,a,5,viewpoint\na,x,b,0,a,5,viewpoint\n";
        assert!(matches!(parse_triplets(text), Err(Error::Parse { line: 3, .. })));
        let text = "q_seq,q_frame,p_seq,p_frame,n_seq,n_frame,rule\na,0,a,0,a,5,viewpoint\n";
        assert!(matches!(parse_triplets(text), Err(Error::Validation { line: 2, .. })));
        assert!(parse_triplets("").is_err());
    }
}

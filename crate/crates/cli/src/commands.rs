use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use vtriplet::check::run_checks;
use vtriplet::config::{EvalSection, PipelineConfig};
use vtriplet::eval::{
    confusion_matrix, curves_svg, embed_sequence, load_descriptors, normalize_confusion,
    performance_curve, top1_accuracy, write_curve_csv, write_matrix_csv, write_pgm,
};
use vtriplet::imaging::load_image;
use vtriplet::mining::synth::manifest_path;
use vtriplet::mining::{
    generate_synthetic_dataset, load_manifest, parse_alignment, parse_triplets, write_triplets,
    FrameRef, RuleKind, SequenceManifest, TripletMiner, TripletSource, TripletStream,
};
use vtriplet::network::{import_text_weights, load_params, write_params, ParameterSet};
use vtriplet::train::{train, write_log_csv, ImageTriplet};
use vtriplet::Tensor;

use crate::failure::Failure;
use crate::provenance::Provenance;

pub struct Context {
    pub config: PipelineConfig,
    pub provenance: Provenance,
}

type CmdResult = Result<(), Failure>;

fn create_parent(path: &Path) -> CmdResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

impl Context {
    fn out(&self, p: &Path) -> PathBuf {
        self.config.out_path(p)
    }

    /// Text output prefixed with the provenance comment.
    fn write_stamped(&self, path: &Path, body: &[u8]) -> CmdResult {
        let mut bytes = self.provenance.comment_line().into_bytes();
        bytes.extend_from_slice(body);
        write_file(path, &bytes)
    }

    fn evaluation(&self) -> Result<&EvalSection, Failure> {
        self.config
            .evaluation
            .as_ref()
            .ok_or_else(|| Failure::new("config", "config has no [evaluation] section"))
    }

    /// Manifests named by the mining sources, in first-mention order.
    fn mining_manifest_paths(&self) -> Vec<PathBuf> {
        let mut seen = BTreeSet::new();
        self.config
            .mining
            .sources
            .iter()
            .flat_map(|s| s.manifests.iter())
            .filter(|p| seen.insert((*p).clone()))
            .cloned()
            .collect()
    }

    fn eval_manifest_paths(&self) -> Result<Vec<PathBuf>, Failure> {
        let e = self.evaluation()?;
        let mut seen = BTreeSet::new();
        Ok(std::iter::once(&e.database)
            .chain(&e.queries)
            .filter(|p| seen.insert((*p).clone()))
            .cloned()
            .collect())
    }

    fn descriptor_path(&self, seq_id: &str) -> PathBuf {
        self.out(&self.config.paths.descriptors).join(format!("{seq_id}.vds"))
    }
}

pub fn synth(ctx: &Context) -> CmdResult {
    let cfg = ctx
        .config
        .synth
        .as_ref()
        .ok_or_else(|| Failure::new("config", "config has no [synth] section"))?;
    let out = &ctx.config.paths.out_dir;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let manifests = generate_synthetic_dataset(cfg, out)?;
    for (c, m) in manifests.iter().enumerate() {
        let mut body = Vec::new();
        m.write_csv(&mut body)?;
        ctx.write_stamped(&manifest_path(out, c), &body)?;
    }
    println!(
        "synth: {} places x {} conditions written to {}",
        cfg.places,
        cfg.conditions,
        out.display()
    );
    Ok(())
}

pub fn mine(ctx: &Context) -> CmdResult {
    let cfg = &ctx.config;
    if cfg.mining.sources.is_empty() {
        return Err(Failure::new("config", "config has no [[mining.sources]]"));
    }
    let mut sources: Vec<(Box<dyn TripletSource + Send>, f64)> = Vec::new();
    for src in &cfg.mining.sources {
        let manifests: Vec<SequenceManifest> = src
            .manifests
            .iter()
            .map(|p| load_manifest(&ctx.out(p), false))
            .collect::<Result<_, _>>()?;
        let miner = match src.kind {
            RuleKind::Viewpoint => TripletMiner::viewpoint(&manifests[0], &src.rule)?,
            RuleKind::CrossCondition => {
                let alignment = match &src.alignment {
                    Some(p) => Some(parse_alignment(&read_text(&ctx.out(p))?)?),
                    None => None,
                };
                TripletMiner::cross_condition(&manifests[0], &manifests[1], alignment.as_deref(), &src.rule)?
            }
        };
        if miner.available() == 0 && src.weight > 0.0 {
            eprintln!("warning: source `{}` has no valid triplets", miner.name());
        }
        sources.push((Box::new(miner), src.weight));
    }
    let mut stream = TripletStream::new(sources, cfg.seed)?;
    let count = cfg.triplet_count();
    let triplets = (0..count)
        .map(|_| stream.draw().map(|(_, t)| t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut body = Vec::new();
    write_triplets(&triplets, &mut body)?;
    let path = ctx.out(&cfg.paths.triplets);
    ctx.write_stamped(&path, &body)?;
    println!("mine: {} triplets written to {}", triplets.len(), path.display());
    Ok(())
}

pub fn train_cmd(ctx: &Context) -> CmdResult {
    let cfg = &ctx.config;
    let spec = cfg.network_spec()?;
    let mut params = ParameterSet::<f32>::init(&spec, cfg.seed);
    if let Some(dump) = &cfg.paths.import_weights {
        let text = read_text(&cfg.config_dir.join(dump))?;
        let report = import_text_weights(&spec, &mut params, &text)?;
        println!("train: imported {}", report.imported.join(", "));
    }
    let triplets = parse_triplets(&read_text(&ctx.out(&cfg.paths.triplets))?)?;
    let mut manifests: HashMap<String, SequenceManifest> = HashMap::new();
    for p in ctx.mining_manifest_paths() {
        let m = load_manifest(&ctx.out(&p), true)?;
        manifests.insert(m.seq_id.clone(), m);
    }
    let input = spec.input();
    let mut cache: HashMap<FrameRef, Arc<Tensor<f32>>> = HashMap::new();
    let mut fetch = |r: &FrameRef| -> Result<Arc<Tensor<f32>>, Failure> {
        if let Some(t) = cache.get(r) {
            return Ok(t.clone());
        }
        let m = manifests.get(&r.seq).filter(|m| r.frame < m.len()).ok_or_else(|| {
            Failure::from(vtriplet::Error::Resolution {
                missing: vec![format!("{}#{}", r.seq, r.frame)],
            })
        })?;
        let t = Arc::new(load_image(&m.image_path(r.frame), &input)?);
        cache.insert(r.clone(), t.clone());
        Ok(t)
    };
    let mut batch_images = Vec::with_capacity(triplets.len());
    for t in &triplets {
        batch_images.push(ImageTriplet {
            query: fetch(&t.query)?,
            similar: fetch(&t.similar)?,
            dissimilar: fetch(&t.dissimilar)?,
        });
    }
    let outcome = train(&spec, params, batch_images.into_iter().map(Ok), &cfg.training, &cfg.cost)?;
    if let Some(reason) = &outcome.truncated {
        eprintln!("warning: training stopped early: {reason}");
    }
    let params_path = ctx.out(&cfg.paths.params);
    write_file(&params_path, &write_params(&outcome.params))?;
    ctx.provenance.write_sidecar(&params_path)?;
    let mut log = Vec::new();
    write_log_csv(&outcome.log, &mut log).map_err(|e| Failure::io(&cfg.paths.train_log, e))?;
    ctx.write_stamped(&ctx.out(&cfg.paths.train_log), &log)?;
    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        println!(
            "train: {} iterations, mean cost {:.4} -> {:.4}, params written to {}",
            outcome.iterations_completed,
            first.mean_cost,
            last.mean_cost,
            params_path.display()
        );
    }
    Ok(())
}

pub fn embed(ctx: &Context, csv: bool) -> CmdResult {
    let cfg = &ctx.config;
    let spec = cfg.network_spec()?;
    let params = load_params(ctx.out(&cfg.paths.params))?;
    let batch = ctx.evaluation()?.embed_batch;
    for p in ctx.eval_manifest_paths()? {
        let m = load_manifest(&ctx.out(&p), true)?;
        let set = embed_sequence(&m, &spec, &params, batch)?;
        let path = ctx.descriptor_path(&m.seq_id);
        write_file(&path, &set.to_bytes())?;
        ctx.provenance.write_sidecar(&path)?;
        if csv {
            let mut body = Vec::new();
            set.write_csv(&mut body)?;
            ctx.write_stamped(&path.with_extension("csv"), &body)?;
        }
        println!("embed: {} x {} -> {}", set.len(), set.dim(), path.display());
    }
    Ok(())
}

pub fn eval(ctx: &Context, force: bool, plot: bool) -> CmdResult {
    let cfg = &ctx.config;
    let e = ctx.evaluation()?;
    let params_path = ctx.out(&cfg.paths.params);
    fs::metadata(&params_path).map_err(|err| Failure::io(&params_path, err))?;

    let seq_of = |p: &Path| -> Result<String, Failure> { Ok(load_manifest(&ctx.out(p), false)?.seq_id) };
    let db_seq = seq_of(&e.database)?;
    let query_seqs = e.queries.iter().map(|p| seq_of(p)).collect::<Result<Vec<_>, _>>()?;

    let mut inputs = vec![params_path.clone(), ctx.descriptor_path(&db_seq)];
    inputs.extend(query_seqs.iter().map(|s| ctx.descriptor_path(s)));
    let mut hashes = BTreeSet::new();
    for p in &inputs {
        match Provenance::read_sidecar(p) {
            Ok(prov) => {
                hashes.insert(prov.config_hash);
            }
            Err(err) if !force => return Err(err),
            Err(_) => {}
        }
    }
    if hashes.len() > 1 && !force {
        return Err(Failure::new(
            "mixed-provenance",
            format!(
                "inputs come from different configs ({}); rerun or pass --force",
                hashes.into_iter().collect::<Vec<_>>().join(", ")
            ),
        ));
    }

    let db = load_descriptors(&ctx.descriptor_path(&db_seq))?;
    for q_seq in &query_seqs {
        let q = load_descriptors(&ctx.descriptor_path(q_seq))?;
        let m = confusion_matrix(&db, &q)?;
        let normalized = normalize_confusion(&m)?;
        let dir = ctx.out(&cfg.paths.eval).join(q_seq);
        let mut body = Vec::new();
        write_matrix_csv(&m, &mut body)?;
        ctx.write_stamped(&dir.join("confusion.csv"), &body)?;

        let mut pgm = Vec::new();
        write_pgm(&normalized, &mut pgm)?;
        // PGM headers allow a comment after the magic number
        let mut stamped = b"P5\n".to_vec();
        stamped.extend_from_slice(ctx.provenance.comment_line().as_bytes());
        stamped.extend_from_slice(&pgm[3..]);
        write_file(&dir.join("heatmap.pgm"), &stamped)?;

        let d_max = e.d_max.unwrap_or(m.rows().max(m.cols()).saturating_sub(1));
        let mut curves = Vec::new();
        for &k in &e.k {
            let curve = performance_curve(&m, k, d_max, e.axis)?;
            let mut body = Vec::new();
            write_curve_csv(&curve, &mut body)?;
            ctx.write_stamped(&dir.join(format!("curve_k{k}.csv")), &body)?;
            curves.push(curve);
        }
        if plot {
            write_file(&dir.join("curves.svg"), curves_svg(&curves).as_bytes())?;
        }
        let top1 = top1_accuracy(&m)?;
        let at0: Vec<String> = curves
            .iter()
            .map(|c| format!("k={}:{:.3}", c.k, c.points.first().map_or(0.0, |p| p.1)))
            .collect();
        println!(
            "eval: {} vs {}: top1 {:.3}, inliers at d=0 {}",
            q_seq,
            db_seq,
            top1,
            at0.join(" ")
        );
    }
    Ok(())
}

pub fn check(seed: u64) -> CmdResult {
    let reports = run_checks(seed);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::new(
            "check-failed",
            format!("{failed} of {} checks failed", reports.len()),
        ));
    }
    Ok(())
}

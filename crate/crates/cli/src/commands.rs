use std::path::Path;

use anyhow::Context;
use proxymix_core::datagen::SampleSet;
use proxymix_core::embedding::cosine_sim;
use proxymix_core::eval::{
    evaluate, hull_proximity, sample_proxy_texts, similarity_histogram, sweep_fusion, sweep_to_csv,
};
use proxymix_core::experiment::{
    granularity_variants, loss_variants, pair_strategy_variants, results_to_csv, run_variants, sampler_variants,
    seed_range,
};
use proxymix_core::losses::proxy_loss;
use proxymix_core::mixer::{mix_pair, select_pairs, MixSpec, PairStrategy};
use proxymix_core::prototype::batch_prototypes;
use proxymix_core::rng::{derive_seed, stream};
use proxymix_core::{
    forward, gen_benchmark, load_registry, save_registry, ClassRecord, ClassRegistry, Embedding, Group, HeadParams,
    RegionView, TwoHeads,
};

use crate::config::RunConfig;
use crate::{HeadChoice, Study, UsageError};

const REGISTRY: &str = "registry.json";
const TRAIN: &str = "train.json";
const EVAL: &str = "eval.json";
const BCE_HEAD: &str = "bce_head.json";
const PROXY_HEAD: &str = "proxy_head.json";

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_data(dir: &Path, file: &str) -> anyhow::Result<(ClassRegistry, SampleSet)> {
    let registry = load_registry(dir.join(REGISTRY))?;
    let samples = SampleSet::load(dir.join(file))?;
    Ok((registry, samples))
}

fn load_heads(dir: &Path) -> anyhow::Result<TwoHeads> {
    Ok(TwoHeads {
        bce: HeadParams::load(dir.join(BCE_HEAD))?,
        proxy: HeadParams::load(dir.join(PROXY_HEAD))?,
    })
}

pub fn gen(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let bench = gen_benchmark(&cfg.data_spec())?;
    save_registry(&bench.registry, out.join(REGISTRY))?;
    bench.train.save(out.join(TRAIN))?;
    bench.eval.save(out.join(EVAL))?;
    write(&out.join("gen.run.json"), &cfg.manifest("gen"))?;
    println!(
        "{} base + {} novel classes, {} train / {} eval samples ({:?})",
        bench.registry.ids_in_group(Group::Base).len(),
        bench.registry.ids_in_group(Group::Novel).len(),
        bench.train.len(),
        bench.eval.len(),
        cfg.data.novel_mode
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> anyhow::Result<()> {
    let (registry, samples) = load_data(data, TRAIN)?;
    samples.validate_against(&registry, true)?;
    let config = cfg.train_config();
    let fitted = proxymix_core::fit(&config, &registry, &samples.samples)?;
    fitted.heads.bce.save(out.join(BCE_HEAD))?;
    fitted.heads.proxy.save(out.join(PROXY_HEAD))?;
    let t = &cfg.train;
    let preamble = [
        cfg.header("train"),
        format!(
            "proxy_variant={} weighting={} sampler={} pair_strategy={} granularity={} proxy_weight={}",
            t.loss.proxy_variant.as_str(),
            t.weighting.mode.as_str(),
            t.mix.sampler,
            t.mix.pair_strategy.as_str(),
            t.mix.granularity.as_str(),
            t.loss.proxy_weight
        ),
    ];
    write(&out.join("train_log.csv"), &fitted.log.to_csv(&preamble))?;
    write(&out.join("train.run.json"), &cfg.manifest("train"))?;
    if let Some(last) = fitted.log.epochs.last() {
        println!(
            "epoch {}: bce {:.5} proxy {:.5} total {:.5}",
            last.epoch, last.bce_loss, last.proxy_loss, last.total_loss
        );
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, data: &Path, model: &Path, head: HeadChoice, out: &Path) -> anyhow::Result<()> {
    let (registry, samples) = load_data(data, EVAL)?;
    samples.validate_against(&registry, false)?;
    let mut heads = load_heads(model)?;
    match head {
        HeadChoice::Fused => {}
        HeadChoice::Bce => heads.proxy = heads.bce.clone(),
        HeadChoice::Proxy => heads.bce = heads.proxy.clone(),
    }
    let report = evaluate(&heads, &samples.samples, &registry, &cfg.fusion)?;
    let preamble = [
        cfg.header("eval"),
        format!("head={} alpha={} beta={}", head.as_str(), cfg.fusion.alpha, cfg.fusion.beta),
    ];
    write(&out.join("eval.csv"), &report.to_csv(&preamble))?;
    println!(
        "base_top1 {:.4} novel_top1 {:.4} overall_top1 {:.4}",
        report.base_top1, report.novel_top1, report.overall_top1
    );
    Ok(())
}

fn parse_grid(text: Option<&str>, flag: &str) -> anyhow::Result<Vec<f64>> {
    match text {
        None => Ok((0..=10).map(|k| k as f64 / 10.0).collect()),
        Some(s) => s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| UsageError(format!("bad {flag} value {v:?}: {e}")).into())
            })
            .collect(),
    }
}

pub fn sweep(
    cfg: &RunConfig,
    data: &Path,
    model: &Path,
    alphas: Option<&str>,
    betas: Option<&str>,
    out: &Path,
) -> anyhow::Result<()> {
    let alphas = parse_grid(alphas, "--alphas")?;
    let betas = parse_grid(betas, "--betas")?;
    let (registry, samples) = load_data(data, EVAL)?;
    samples.validate_against(&registry, false)?;
    let heads = load_heads(model)?;
    let rows = sweep_fusion(&heads, &samples.samples, &registry, &alphas, &betas, cfg.fusion.positivity)?;
    write(&out.join("sweep.csv"), &sweep_to_csv(&rows, &[cfg.header("fuse-sweep")]))?;
    if let Some(best) = rows
        .iter()
        .max_by(|a, b| a.novel_top1.total_cmp(&b.novel_top1))
    {
        println!(
            "best novel_top1 {:.4} at alpha={} beta={}",
            best.novel_top1, best.alpha, best.beta
        );
    }
    Ok(())
}

pub fn mix(
    cfg: &RunConfig,
    data: &Path,
    model: &Path,
    count: usize,
    dump_prototypes: bool,
    out: &Path,
) -> anyhow::Result<()> {
    if count == 0 {
        return Err(UsageError("--count must be >= 1".into()).into());
    }
    let (registry, samples) = load_data(data, TRAIN)?;
    samples.validate_against(&registry, true)?;
    let heads = load_heads(model)?;
    let regions: Vec<Embedding> = samples
        .samples
        .iter()
        .map(|s| forward(&heads.proxy, &s.feature))
        .collect::<proxymix_core::Result<_>>()?;
    let labeled: Vec<(u32, RegionView<'_>)> = samples
        .samples
        .iter()
        .zip(&regions)
        .map(|(s, r)| {
            (
                s.class_id,
                RegionView {
                    embedding: r,
                    iou: s.iou,
                    objectness: s.objectness,
                },
            )
        })
        .collect();
    let protos = batch_prototypes(&labeled, &cfg.train.weighting)?;

    let spec = MixSpec {
        pairs_per_batch: count,
        ..cfg.train.mix
    };
    let targets: Vec<Embedding> = registry
        .in_group(Group::Novel)
        .map(|r| r.text_embedding.clone())
        .collect();
    let targets = (spec.pair_strategy == PairStrategy::NovelNearest).then_some(targets.as_slice());
    let present: Vec<u32> = protos.keys().copied().collect();
    let mut rng = stream(derive_seed(cfg.seed, "mix"), "mix");
    let sources = select_pairs(&present, &registry, &spec, targets, &mut rng)?;

    let mut csv = format!("# {}\nclass_i,class_j,lambda,cosine,proxy_loss\n", cfg.header("mix"));
    for s in &sources {
        let pair = mix_pair(
            &protos[&s.class_i],
            &protos[&s.class_j],
            registry.text(s.class_i)?,
            registry.text(s.class_j)?,
            s.lambda,
        )?;
        let cos = cosine_sim(&pair.visual, &pair.textual)?;
        let loss = proxy_loss(&pair.textual, &pair.visual, cfg.train.loss.proxy_variant)?;
        csv.push_str(&format!("{},{},{},{},{}\n", s.class_i, s.class_j, s.lambda, cos, loss));
    }
    write(&out.join("proxy_pairs.csv"), &csv)?;

    if dump_prototypes {
        let records = protos
            .values()
            .map(|p| {
                let name = registry.get(p.class_id).map(|r| r.name.clone()).unwrap_or_default();
                ClassRecord {
                    id: p.class_id,
                    name,
                    group: Group::Base,
                    text_embedding: p.embedding.clone(),
                }
            })
            .collect();
        let proto_registry = ClassRegistry::new(registry.dimension(), records)?;
        let path = out.join("prototypes.json");
        save_registry(&proto_registry, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn analyze(cfg: &RunConfig, data: &Path, proxy_count: usize, bins: usize, out: &Path) -> anyhow::Result<()> {
    if proxy_count == 0 || bins == 0 {
        return Err(UsageError("--proxy-count and --bins must be >= 1".into()).into());
    }
    let registry = load_registry(data.join(REGISTRY))?;
    let base: Vec<&[f64]> = registry.in_group(Group::Base).map(|r| r.text_embedding.as_slice()).collect();
    let novel: Vec<&[f64]> = registry.in_group(Group::Novel).map(|r| r.text_embedding.as_slice()).collect();
    let mut rng = stream(derive_seed(cfg.seed, "analyze"), "analyze");
    let proxies = sample_proxy_texts(&registry, proxy_count, &cfg.train.mix.sampler, &mut rng)?;
    let proxy_refs: Vec<&[f64]> = proxies.iter().map(|e| e.as_slice()).collect();

    let h_base = similarity_histogram(&base, &novel, bins)?;
    let h_proxy = similarity_histogram(&proxy_refs, &novel, bins)?;
    let header = cfg.header("analyze");
    write(
        &out.join("histogram_base.csv"),
        &h_base.to_csv(&[header.clone(), "group=base".into()]),
    )?;
    write(
        &out.join("histogram_proxy.csv"),
        &h_proxy.to_csv(&[header.clone(), "group=proxy_novel".into()]),
    )?;
    let summary = format!(
        "# {header}\nmetric,base,proxy_novel\nmean_similarity,{},{}\nmean_max_similarity,{},{}\n",
        h_base.mean_similarity, h_proxy.mean_similarity, h_base.mean_max_similarity, h_proxy.mean_max_similarity
    );
    write(&out.join("similarity_summary.csv"), &summary)?;

    let mut hull = format!(
        "# {header}\nnovel_id,nearest_single_sim,best_pair_mix_sim,residual,class_i,class_j,lambda\n"
    );
    for rec in registry.in_group(Group::Novel) {
        let h = hull_proximity(&rec.text_embedding, &registry)?;
        hull.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            rec.id,
            h.nearest_single_sim,
            h.best_pair_mix_sim,
            h.residual,
            h.best_pair.class_i,
            h.best_pair.class_j,
            h.best_pair.lambda
        ));
    }
    write(&out.join("hull.csv"), &hull)?;
    println!(
        "mean max similarity to novel: base {:.4}, proxy-novel {:.4}",
        h_base.mean_max_similarity, h_proxy.mean_max_similarity
    );
    Ok(())
}

pub fn ablate(cfg: &RunConfig, study: Study, seeds: usize, out: &Path) -> anyhow::Result<()> {
    if seeds == 0 {
        return Err(UsageError("--seeds must be >= 1".into()).into());
    }
    let base = cfg.train.clone();
    let variants = match study {
        Study::Granularity => granularity_variants(&base),
        Study::Sampler => sampler_variants(&base),
        Study::PairStrategy => pair_strategy_variants(&base),
        Study::Loss => loss_variants(&base),
    };
    let variants: Vec<_> = variants
        .into_iter()
        .map(|mut v| {
            v.fusion = cfg.fusion;
            v
        })
        .collect();
    let results = run_variants(&cfg.data, &variants, &seed_range(cfg.seed, seeds))?;
    let preamble = [cfg.header("ablate"), format!("study={}", study.as_str())];
    write(
        &out.join(format!("ablation_{}.csv", study.as_str())),
        &results_to_csv(&results, &preamble),
    )?;
    for r in &results {
        println!(
            "{:<20} base {:.4} novel {:.4} overall {:.4}",
            r.name,
            r.base_top1(),
            r.novel_top1(),
            r.overall_top1()
        );
    }
    Ok(())
}

//! Two-head score fusion, open-vocabulary evaluation and the embedding-space
//! analyses (similarity histograms, hull proximity).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datagen::RegionSample;
use crate::embedding::{cosine_sim, dot, Embedding};
use crate::error::{Error, Result};
use crate::losses::logistic;
use crate::mixer::{best_mix, mix_embeddings, sample_lambda, BestMix, Sampler};
use crate::registry::{ClassRecord, ClassRegistry, Group};
use crate::rng::Rng;
use crate::trainer::{forward, TwoHeads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum Positivity {
    /// `σ(scale · cos)`
    Logistic(f64),
    /// `max(cos + 1, ε) / 2`
    ShiftClamp(f64),
}

impl Positivity {
    pub fn apply(&self, cos: f64) -> f64 {
        match *self {
            Positivity::Logistic(scale) => logistic(scale * cos),
            Positivity::ShiftClamp(eps) => (cos + 1.0).max(eps) / 2.0,
        }
    }

    /// `ln(apply(cos))`, computed without saturating.
    pub fn log_apply(&self, cos: f64) -> f64 {
        match *self {
            Positivity::Logistic(scale) => log_logistic(scale * cos),
            Positivity::ShiftClamp(_) => self.apply(cos).ln(),
        }
    }
}

/// `ln σ(z)`
fn log_logistic(z: f64) -> f64 {
    if z > 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Proxy-head exponent for base classes.
    pub alpha: f64,
    /// Proxy-head exponent for novel classes.
    pub beta: f64,
    pub positivity: Positivity,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: 0.45,
            beta: 0.65,
            positivity: Positivity::Logistic(50.0),
        }
    }
}

impl FusionParams {
    /// The operating point used for the LVIS-style benchmark.
    pub fn lvis_preset() -> Self {
        Self {
            alpha: 0.15,
            beta: 0.35,
            ..Self::default()
        }
    }

    pub fn with_exponents(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "fusion exponents must lie in [0, 1], got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        let p = match self.positivity {
            Positivity::Logistic(s) => s,
            Positivity::ShiftClamp(e) => e,
        };
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Config("positivity parameter must be > 0".into()));
        }
        Ok(())
    }

    fn exponent(&self, group: Group, id: u32) -> Result<f64> {
        match group {
            Group::Base => Ok(self.alpha),
            Group::Novel => Ok(self.beta),
            Group::Proxy => Err(Error::UnknownGroup(id)),
        }
    }
}

/// `p^a · b^(1−a)`, with the exponent endpoints and equal operands taken exactly.
#[inline]
fn geometric(p: f64, b: f64, a: f64) -> f64 {
    if p == b {
        p
    } else if a == 0.0 {
        b
    } else if a == 1.0 {
        p
    } else {
        p.powf(a) * b.powf(1.0 - a)
    }
}

/// Log-domain counterpart of [`geometric`].
#[inline]
fn log_geometric(lp: f64, lb: f64, a: f64) -> f64 {
    if lp == lb {
        lp
    } else if a == 0.0 {
        lb
    } else if a == 1.0 {
        lp
    } else {
        a * lp + (1.0 - a) * lb
    }
}

/// Fuses already-transformed (positive) per-class scores of the proxy head
/// and the BCE head.
pub fn fuse_transformed(
    proxy_scores: &[f64],
    bce_scores: &[f64],
    registry: &ClassRegistry,
    params: &FusionParams,
) -> Result<Vec<f64>> {
    if proxy_scores.len() != registry.len() || bce_scores.len() != registry.len() {
        return Err(Error::DimensionMismatch {
            expected: registry.len(),
            actual: proxy_scores.len().min(bce_scores.len()),
        });
    }
    registry
        .records()
        .iter()
        .zip(proxy_scores.iter().zip(bce_scores))
        .map(|(rec, (&p, &b))| Ok(geometric(p, b, params.exponent(rec.group, rec.id)?)))
        .collect()
}

/// Positive per-class scores `transform(cos(r, w_c))` for every class.
pub fn class_scores(region: &[f64], registry: &ClassRegistry, positivity: &Positivity) -> Result<Vec<f64>> {
    registry
        .classifier_rows()
        .map(|w| Ok(positivity.apply(cosine_sim(region, w)?)))
        .collect()
}

/// `ln transform(cos(r, w_c))` for every class.
pub fn class_log_scores(region: &[f64], registry: &ClassRegistry, positivity: &Positivity) -> Result<Vec<f64>> {
    registry
        .classifier_rows()
        .map(|w| Ok(positivity.log_apply(cosine_sim(region, w)?)))
        .collect()
}

/// Fuses per-class log scores of the proxy head and the BCE head. Ranks the
/// same as [`fuse_transformed`] but keeps saturated classes apart.
pub fn fuse_log_scores(
    proxy_log: &[f64],
    bce_log: &[f64],
    registry: &ClassRegistry,
    params: &FusionParams,
) -> Result<Vec<f64>> {
    if proxy_log.len() != registry.len() || bce_log.len() != registry.len() {
        return Err(Error::DimensionMismatch {
            expected: registry.len(),
            actual: proxy_log.len().min(bce_log.len()),
        });
    }
    registry
        .records()
        .iter()
        .zip(proxy_log.iter().zip(bce_log))
        .map(|(rec, (&p, &b))| Ok(log_geometric(p, b, params.exponent(rec.group, rec.id)?)))
        .collect()
}

/// Per-class fused scores for a region seen by both heads.
pub fn fuse_scores(
    r_proxy: &Embedding,
    r_bce: &Embedding,
    registry: &ClassRegistry,
    params: &FusionParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let p = class_scores(r_proxy, registry, &params.positivity)?;
    let b = class_scores(r_bce, registry, &params.positivity)?;
    fuse_transformed(&p, &b, registry, params)
}

/// Index of the largest score; ties resolve to the smallest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub class_id: u32,
    pub group: Group,
    pub correct: usize,
    pub total: usize,
}

impl ClassAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub alpha: f64,
    pub beta: f64,
    pub base_top1: f64,
    pub novel_top1: f64,
    pub overall_top1: f64,
    pub base_count: usize,
    pub novel_count: usize,
    pub per_class: Vec<ClassAccuracy>,
    /// `[true group][predicted group]` counts, groups ordered base, novel.
    pub group_confusion: [[usize; 2]; 2],
    /// Predicted registry row for each eval sample, in input order.
    pub predictions: Vec<usize>,
}

impl EvalReport {
    pub fn to_csv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("scope,class_id,group,correct,total,top1\n");
        let base_correct: usize = self.group_sum(Group::Base, |c| c.correct);
        let novel_correct: usize = self.group_sum(Group::Novel, |c| c.correct);
        let _ = writeln!(out, "base,,base,{},{},{}", base_correct, self.base_count, self.base_top1);
        let _ = writeln!(out, "novel,,novel,{},{},{}", novel_correct, self.novel_count, self.novel_top1);
        let _ = writeln!(
            out,
            "overall,,,{},{},{}",
            base_correct + novel_correct,
            self.base_count + self.novel_count,
            self.overall_top1
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "class,{},{},{},{},{}",
                c.class_id,
                c.group.as_str(),
                c.correct,
                c.total,
                c.accuracy()
            );
        }
        let names = ["base", "novel"];
        for (t, row) in self.group_confusion.iter().enumerate() {
            for (p, n) in row.iter().enumerate() {
                let _ = writeln!(out, "confusion,,{}->{},{},,", names[t], names[p], n);
            }
        }
        out
    }

    fn group_sum(&self, group: Group, f: impl Fn(&ClassAccuracy) -> usize) -> usize {
        self.per_class.iter().filter(|c| c.group == group).map(f).sum()
    }
}

fn group_slot(group: Group) -> usize {
    match group {
        Group::Base => 0,
        _ => 1,
    }
}

/// Per-sample log scores of both heads, reusable across fusion settings.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    proxy: Vec<Vec<f64>>,
    bce: Vec<Vec<f64>>,
    labels: Vec<u32>,
}

impl ScoreCache {
    pub fn new(
        heads: &TwoHeads,
        samples: &[RegionSample],
        registry: &ClassRegistry,
        positivity: &Positivity,
    ) -> Result<Self> {
        let mut proxy = Vec::with_capacity(samples.len());
        let mut bce = Vec::with_capacity(samples.len());
        for s in samples {
            registry.get(s.class_id).ok_or(Error::UnknownClass(s.class_id))?;
            proxy.push(class_log_scores(&forward(&heads.proxy, &s.feature)?, registry, positivity)?);
            bce.push(class_log_scores(&forward(&heads.bce, &s.feature)?, registry, positivity)?);
        }
        Ok(Self {
            proxy,
            bce,
            labels: samples.iter().map(|s| s.class_id).collect(),
        })
    }

    pub fn evaluate(&self, registry: &ClassRegistry, params: &FusionParams) -> Result<EvalReport> {
        params.validate()?;
        let mut per_class: Vec<ClassAccuracy> = registry
            .records()
            .iter()
            .map(|r| ClassAccuracy {
                class_id: r.id,
                group: r.group,
                correct: 0,
                total: 0,
            })
            .collect();
        let mut confusion = [[0usize; 2]; 2];
        let mut predictions = Vec::with_capacity(self.labels.len());
        for ((p, b), &label) in self.proxy.iter().zip(&self.bce).zip(&self.labels) {
            let fused = fuse_log_scores(p, b, registry, params)?;
            let pred = argmax(&fused);
            let truth = registry.position(label).ok_or(Error::UnknownClass(label))?;
            let entry = &mut per_class[truth];
            entry.total += 1;
            if pred == truth {
                entry.correct += 1;
            }
            let pred_group = registry.records()[pred].group;
            confusion[group_slot(entry.group)][group_slot(pred_group)] += 1;
            predictions.push(pred);
        }
        let tally = |g: Group| {
            per_class
                .iter()
                .filter(|c| c.group == g)
                .fold((0usize, 0usize), |(c, t), x| (c + x.correct, t + x.total))
        };
        let (bc, bt) = tally(Group::Base);
        let (nc, nt) = tally(Group::Novel);
        let ratio = |c: usize, t: usize| if t == 0 { 0.0 } else { c as f64 / t as f64 };
        Ok(EvalReport {
            alpha: params.alpha,
            beta: params.beta,
            base_top1: ratio(bc, bt),
            novel_top1: ratio(nc, nt),
            overall_top1: ratio(bc + nc, bt + nt),
            base_count: bt,
            novel_count: nt,
            per_class,
            group_confusion: confusion,
            predictions,
        })
    }
}

/// Top-1 accuracy of fused predictions over all classes.
pub fn evaluate(
    heads: &TwoHeads,
    samples: &[RegionSample],
    registry: &ClassRegistry,
    params: &FusionParams,
) -> Result<EvalReport> {
    params.validate()?;
    ScoreCache::new(heads, samples, registry, &params.positivity)?.evaluate(registry, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub base_top1: f64,
    pub novel_top1: f64,
    pub overall_top1: f64,
}

/// Evaluates every `(α, β)` in the grid, α-major.
pub fn sweep_fusion(
    heads: &TwoHeads,
    samples: &[RegionSample],
    registry: &ClassRegistry,
    alphas: &[f64],
    betas: &[f64],
    positivity: Positivity,
) -> Result<Vec<SweepRow>> {
    let cache = ScoreCache::new(heads, samples, registry, &positivity)?;
    let mut rows = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            let r = cache.evaluate(
                registry,
                &FusionParams {
                    alpha,
                    beta,
                    positivity,
                },
            )?;
            rows.push(SweepRow {
                alpha,
                beta,
                base_top1: r.base_top1,
                novel_top1: r.novel_top1,
                overall_top1: r.overall_top1,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow], preamble: &[String]) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("alpha,beta,base_top1,novel_top1,overall_top1\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.alpha, r.beta, r.base_top1, r.novel_top1, r.overall_top1
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityHistogram {
    pub bins: usize,
    pub counts: Vec<usize>,
    /// For each novel class, the largest similarity to any member of the group.
    pub per_novel_max: Vec<f64>,
    pub mean_similarity: f64,
    pub mean_max_similarity: f64,
}

impl SimilarityHistogram {
    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let w = 2.0 / self.bins as f64;
        (-1.0 + k as f64 * w, -1.0 + (k + 1) as f64 * w)
    }

    pub fn to_csv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("bin_left,bin_right,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let (l, r) = self.bin_edges(k);
            let _ = writeln!(out, "{l},{r},{c}");
        }
        out
    }
}

/// Histogram over `[-1, 1]` of cosine similarities between every member of
/// `group` and every novel embedding.
pub fn similarity_histogram(
    group: &[&[f64]],
    novel: &[&[f64]],
    bins: usize,
) -> Result<SimilarityHistogram> {
    if group.is_empty() {
        return Err(Error::EmptyGroup("comparison group"));
    }
    if novel.is_empty() {
        return Err(Error::EmptyGroup("novel"));
    }
    if bins == 0 {
        return Err(Error::Config("bins must be >= 1".into()));
    }
    let mut counts = vec![0usize; bins];
    let mut per_novel_max = Vec::with_capacity(novel.len());
    let mut total = 0.0;
    for n in novel {
        let mut best = f64::NEG_INFINITY;
        for a in group {
            let c = cosine_sim(a, n)?;
            total += c;
            best = best.max(c);
            let k = (((c + 1.0) / 2.0) * bins as f64).floor() as usize;
            counts[k.min(bins - 1)] += 1;
        }
        per_novel_max.push(best);
    }
    let pairs = (group.len() * novel.len()) as f64;
    let mean_max_similarity = per_novel_max.iter().sum::<f64>() / novel.len() as f64;
    Ok(SimilarityHistogram {
        bins,
        counts,
        per_novel_max,
        mean_similarity: total / pairs,
        mean_max_similarity,
    })
}

/// `count` proxy-novel text embeddings from random base pairs.
pub fn sample_proxy_texts(
    registry: &ClassRegistry,
    count: usize,
    sampler: &Sampler,
    rng: &mut Rng,
) -> Result<Vec<Embedding>> {
    use rand::Rng as _;
    let base: Vec<&ClassRecord> = registry.in_group(Group::Base).collect();
    if base.len() < 2 {
        return Err(Error::InsufficientClasses(base.len()));
    }
    sampler.validate()?;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.random_range(0..base.len());
        let mut j = rng.random_range(0..base.len() - 1);
        if j >= i {
            j += 1;
        }
        let l = sample_lambda(sampler, rng);
        if let Ok(e) = mix_embeddings(&base[i].text_embedding, &base[j].text_embedding, l) {
            out.push(e);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullProximity {
    pub nearest_single_sim: f64,
    pub best_pair: BestMix,
    pub best_pair_mix_sim: f64,
    pub residual: f64,
}

/// How well a novel embedding is approximated by a single base class versus
/// the best two-class mixture on the λ grid.
pub fn hull_proximity(novel: &[f64], registry: &ClassRegistry) -> Result<HullProximity> {
    let base: Vec<(u32, &[f64])> = registry
        .in_group(Group::Base)
        .map(|r| (r.id, r.text_embedding.as_slice()))
        .collect();
    if base.len() < 2 {
        return Err(Error::InsufficientClasses(base.len()));
    }
    let nearest_single_sim = base
        .iter()
        .map(|(_, b)| cosine_sim(b, novel))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let best_pair = best_mix(&base, novel)?;
    // Endpoints of the λ grid are the single classes themselves; the Gram
    // evaluation can differ from the direct cosine in the last ulp.
    let best_pair_mix_sim = best_pair.similarity.max(nearest_single_sim);
    Ok(HullProximity {
        nearest_single_sim,
        best_pair,
        best_pair_mix_sim,
        residual: 1.0 - best_pair_mix_sim,
    })
}

/// Mean over novel classes of the best single-class and best-pair similarity.
pub fn mean_hull_proximity(registry: &ClassRegistry) -> Result<(f64, f64)> {
    let novel: Vec<&ClassRecord> = registry.in_group(Group::Novel).collect();
    if novel.is_empty() {
        return Err(Error::EmptyGroup("novel"));
    }
    let mut single = 0.0;
    let mut pair = 0.0;
    for n in &novel {
        let h = hull_proximity(&n.text_embedding, registry)?;
        single += h.nearest_single_sim;
        pair += h.best_pair_mix_sim;
    }
    let k = novel.len() as f64;
    Ok((single / k, pair / k))
}

/// Dot products between every row of `a` and every row of `b`, row-major.
pub fn pairwise_similarity(a: &[&[f64]], b: &[&[f64]]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| dot(x, y))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::l2_normalize;
    use crate::rng;
    use crate::trainer::HeadParams;
    use approx::assert_abs_diff_eq;

    fn rec(id: u32, group: Group, v: &[f64]) -> ClassRecord {
        ClassRecord {
            id,
            name: format!("c{id}"),
            group,
            text_embedding: l2_normalize(v).unwrap(),
        }
    }

    fn registry() -> ClassRegistry {
        ClassRegistry::new(
            3,
            vec![
                rec(0, Group::Base, &[1.0, 0.0, 0.0]),
                rec(1, Group::Base, &[0.0, 1.0, 0.0]),
                rec(2, Group::Novel, &[0.0, 0.0, 1.0]),
                rec(3, Group::Novel, &[1.0, 1.0, 0.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_exponents_give_bce_scores() {
        let reg = registry();
        let rp = l2_normalize(&[0.3, 0.1, 0.9]).unwrap();
        let rb = l2_normalize(&[0.7, -0.2, 0.4]).unwrap();
        let params = FusionParams::with_exponents(0.0, 0.0);
        let fused = fuse_scores(&rp, &rb, &reg, &params).unwrap();
        let bce = class_scores(&rb, &reg, &params.positivity).unwrap();
        assert_eq!(fused, bce);
        let ones = fuse_scores(&rp, &rb, &reg, &FusionParams::with_exponents(1.0, 1.0)).unwrap();
        assert_eq!(ones, class_scores(&rp, &reg, &params.positivity).unwrap());
    }

    #[test]
    fn identical_heads_collapse() {
        let reg = registry();
        let r = l2_normalize(&[0.3, 0.1, 0.9]).unwrap();
        for positivity in [Positivity::Logistic(50.0), Positivity::ShiftClamp(1e-6)] {
            let single = class_scores(&r, &reg, &positivity).unwrap();
            for (a, b) in [(0.45, 0.65), (0.1, 0.9), (0.5, 0.5)] {
                let fused = fuse_scores(&r, &r, &reg, &FusionParams { alpha: a, beta: b, positivity }).unwrap();
                assert_eq!(fused, single);
                assert!(fused.iter().all(|f| *f > 0.0 && *f <= 1.0));
            }
        }
    }

    #[test]
    fn scaling_scores_keeps_argmax() {
        let reg = registry();
        let p = vec![0.2, 0.5, 0.1, 0.9];
        let b = vec![0.6, 0.3, 0.4, 0.2];
        let params = FusionParams::default();
        let base = argmax(&fuse_transformed(&p, &b, &reg, &params).unwrap());
        for c in [1e-3, 0.5, 7.0] {
            let ps: Vec<f64> = p.iter().map(|x| x * c).collect();
            let bs: Vec<f64> = b.iter().map(|x| x * c).collect();
            assert_eq!(argmax(&fuse_transformed(&ps, &bs, &reg, &params).unwrap()), base);
        }
    }

    #[test]
    fn log_scores_match_product_and_resolve_saturation() {
        let reg = registry();
        let params = FusionParams::default();
        for cos in [-1.0, -0.3, 0.0, 0.02, 0.2] {
            let z = params.positivity.apply(cos);
            assert!((params.positivity.log_apply(cos) - z.ln()).abs() <= 1e-12 * z.ln().abs().max(1.0));
        }
        let p = [0.9, 0.99, 0.8, 0.95];
        let b = [0.95, 0.85, 0.9, 0.7];
        let lp: Vec<f64> = p.iter().map(|c| params.positivity.log_apply(*c)).collect();
        let lb: Vec<f64> = b.iter().map(|c| params.positivity.log_apply(*c)).collect();
        let fused = fuse_log_scores(&lp, &lb, &reg, &params).unwrap();
        assert!(fused.windows(2).all(|w| w[0] != w[1]));
        let sat: Vec<f64> = p.iter().map(|c| params.positivity.apply(*c)).collect();
        assert!(sat.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn proxy_group_in_registry_is_rejected() {
        let reg = ClassRegistry::new(
            2,
            vec![rec(0, Group::Base, &[1.0, 0.0]), rec(1, Group::Proxy, &[0.0, 1.0])],
        )
        .unwrap();
        let r = l2_normalize(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            fuse_scores(&r, &r, &reg, &FusionParams::default()),
            Err(Error::UnknownGroup(1))
        ));
    }

    #[test]
    fn shift_clamp_transform() {
        assert_eq!(Positivity::ShiftClamp(1e-6).apply(0.5), 0.75);
        assert_eq!(Positivity::ShiftClamp(1e-6).apply(-1.0), 0.5e-6);
    }

    #[test]
    fn invalid_fusion_params() {
        assert!(FusionParams::with_exponents(1.2, 0.0).validate().is_err());
        assert!(FusionParams {
            positivity: Positivity::Logistic(0.0),
            ..FusionParams::default()
        }
        .validate()
        .is_err());
        assert_eq!(FusionParams::lvis_preset().alpha, 0.15);
        assert_eq!(FusionParams::lvis_preset().beta, 0.35);
    }

    #[test]
    fn one_class_registry_is_always_right() {
        let reg = ClassRegistry::new(2, vec![rec(0, Group::Base, &[1.0, 0.0])]).unwrap();
        let heads = TwoHeads::init(2, 3, 1);
        let samples: Vec<RegionSample> = (0..5)
            .map(|k| RegionSample {
                feature: vec![k as f64 + 1.0, -1.0, 0.5],
                class_id: 0,
                iou: 0.5,
                objectness: 0.5,
            })
            .collect();
        let r = evaluate(&heads, &samples, &reg, &FusionParams::default()).unwrap();
        assert_eq!(r.overall_top1, 1.0);
        assert_eq!(r.base_count, 5);
    }

    #[test]
    fn report_counts_add_up() {
        let reg = registry();
        let mut heads = TwoHeads::init(3, 3, 4);
        heads.bce = HeadParams::new(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let samples: Vec<RegionSample> = reg
            .records()
            .iter()
            .map(|r| RegionSample {
                feature: r.text_embedding.to_vec(),
                class_id: r.id,
                iou: 1.0,
                objectness: 1.0,
            })
            .collect();
        let r = evaluate(&heads, &samples, &reg, &FusionParams::with_exponents(0.0, 0.0)).unwrap();
        assert_eq!(r.overall_top1, 1.0);
        assert_eq!(r.base_count + r.novel_count, samples.len());
        let conf: usize = r.group_confusion.iter().flatten().sum();
        assert_eq!(conf, samples.len());
        let weighted = (r.base_top1 * r.base_count as f64 + r.novel_top1 * r.novel_count as f64)
            / samples.len() as f64;
        assert_abs_diff_eq!(weighted, r.overall_top1, epsilon = 1e-15);
    }

    #[test]
    fn sweep_grid_shape_and_origin() {
        let reg = registry();
        let heads = TwoHeads::init(3, 4, 9);
        let samples: Vec<RegionSample> = (0..12)
            .map(|k| RegionSample {
                feature: vec![(k as f64).sin(), (k as f64).cos(), 0.3, -0.2 * k as f64],
                class_id: (k % 4) as u32,
                iou: 0.7,
                objectness: 0.7,
            })
            .collect();
        let rows = sweep_fusion(&heads, &samples, &reg, &[0.0, 0.5, 1.0], &[0.0, 0.5, 1.0], Positivity::Logistic(50.0)).unwrap();
        assert_eq!(rows.len(), 9);
        let direct = evaluate(&heads, &samples, &reg, &FusionParams::with_exponents(0.0, 0.0)).unwrap();
        assert_eq!(rows[0].base_top1, direct.base_top1);
        assert_eq!(rows[0].novel_top1, direct.novel_top1);
        assert_eq!(sweep_to_csv(&rows, &[]).lines().count(), 10);
    }

    #[test]
    fn histogram_self_and_orthogonal() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        let c = [0.0, 0.0, 1.0];
        let novel: Vec<&[f64]> = vec![&a, &b];
        let h = similarity_histogram(&novel, &novel, 20).unwrap();
        assert!(h.per_novel_max.iter().all(|&m| m == 1.0));
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        let ortho: Vec<&[f64]> = vec![&c];
        let h = similarity_histogram(&ortho, &novel, 20).unwrap();
        assert!(h.per_novel_max.iter().all(|&m| m == 0.0));
        assert_eq!(h.mean_similarity, 0.0);
        assert_eq!(h.counts[10], 2);
        assert!(matches!(
            similarity_histogram(&[], &novel, 4),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn hull_examples() {
        let reg = registry();
        let h = hull_proximity(reg.text(0).unwrap(), &reg).unwrap();
        assert_eq!(h.nearest_single_sim, 1.0);
        assert_abs_diff_eq!(h.best_pair_mix_sim, 1.0, epsilon = 1e-15);
        assert!(h.residual.abs() <= 1e-15);
        let mid = reg.text(3).unwrap();
        let h = hull_proximity(mid, &reg).unwrap();
        assert_abs_diff_eq!(h.best_pair_mix_sim, 1.0, epsilon = 1e-12);
        assert_eq!(h.best_pair.lambda_index, 50);
        assert!(h.best_pair_mix_sim >= h.nearest_single_sim);
        let small = ClassRegistry::new(2, vec![rec(0, Group::Base, &[1.0, 0.0])]).unwrap();
        assert!(matches!(
            hull_proximity(&[1.0, 0.0], &small),
            Err(Error::InsufficientClasses(1))
        ));
    }

    #[test]
    fn proxy_texts_are_unit_and_reproducible() {
        let reg = registry();
        let a = sample_proxy_texts(&reg, 10, &Sampler::Beta(1.0), &mut rng::stream(1, "p")).unwrap();
        let b = sample_proxy_texts(&reg, 10, &Sampler::Beta(1.0), &mut rng::stream(1, "p")).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|e| e.is_normalized()));
    }

    #[test]
    fn pseudo_inverse_head_recovers_base_classes() {
        use crate::datagen::{gen_benchmark, SyntheticSpec};
        let spec = SyntheticSpec {
            quality_noise_coupling: 0.0,
            ..SyntheticSpec::default()
        };
        let b = gen_benchmark(&spec).unwrap();
        let (f, m) = (spec.feature_dim, spec.embedding_dim);
        let a = nalgebra::DMatrix::from_row_slice(f, m, &b.projection);
        let pinv = a.pseudo_inverse(1e-12).unwrap();
        let w: Vec<f64> = (0..m).flat_map(|i| (0..f).map(move |j| (i, j))).map(|(i, j)| pinv[(i, j)]).collect();
        let head = HeadParams::new(m, f, w).unwrap();
        let heads = TwoHeads {
            bce: head.clone(),
            proxy: head,
        };
        let r = evaluate(&heads, &b.eval.samples, &b.registry, &FusionParams::default()).unwrap();
        assert_eq!(r.base_top1, 1.0);
        assert_eq!(r.novel_top1, 1.0);
    }

    #[test]
    fn off_hull_proximity_matches_exhaustive_search() {
        use crate::datagen::{gen_benchmark, NovelMode, SyntheticSpec};
        let spec = SyntheticSpec {
            embedding_dim: 128,
            feature_dim: 8,
            n_base: 10,
            n_novel: 6,
            novel_mode: NovelMode::OffHull,
            samples_per_class: 1,
            ..SyntheticSpec::default()
        };
        let b = gen_benchmark(&spec).unwrap();
        let base: Vec<&ClassRecord> = b.registry.in_group(Group::Base).collect();
        for n in b.registry.in_group(Group::Novel) {
            let h = hull_proximity(&n.text_embedding, &b.registry).unwrap();
            let mut brute = f64::NEG_INFINITY;
            for x in &base {
                for y in &base {
                    if x.id == y.id {
                        continue;
                    }
                    for k in 0..crate::mixer::LAMBDA_GRID_POINTS {
                        let l = crate::mixer::lambda_at(k);
                        let raw: Vec<f64> = x
                            .text_embedding
                            .iter()
                            .zip(y.text_embedding.iter())
                            .map(|(p, q)| l * p + (1.0 - l) * q)
                            .collect();
                        if let Ok(mix) = l2_normalize(&raw) {
                            brute = brute.max(cosine_sim(&mix, &n.text_embedding).unwrap());
                        }
                    }
                }
            }
            assert!((h.best_pair_mix_sim - brute).abs() <= 1e-12, "{} vs {brute}", h.best_pair_mix_sim);
            assert!(h.best_pair_mix_sim >= h.nearest_single_sim);
            assert!(h.best_pair_mix_sim < 0.5);
        }
    }
}

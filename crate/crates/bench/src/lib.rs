//! Fixtures shared by the criterion benches.

use proxymix_core::trainer::TwoHeads;
use proxymix_core::{build_prototype, forward, gen_benchmark, Benchmark, Group, Prototype, RegionView, SyntheticSpec, WeightingSpec};

pub struct Fixture {
    pub bench: Benchmark,
    pub heads: TwoHeads,
    pub prototypes: Vec<Prototype>,
}

pub fn fixture() -> Fixture {
    let spec = SyntheticSpec::default();
    let bench = gen_benchmark(&spec).expect("default spec is valid");
    let heads = TwoHeads::init(spec.embedding_dim, spec.feature_dim, 1);
    let prototypes = bench
        .registry
        .in_group(Group::Base)
        .map(|rec| {
            let embs: Vec<_> = bench
                .train
                .samples
                .iter()
                .filter(|s| s.class_id == rec.id)
                .map(|s| (forward(&heads.proxy, &s.feature).unwrap(), s.iou, s.objectness))
                .collect();
            let views: Vec<RegionView<'_>> = embs
                .iter()
                .map(|(e, iou, obj)| RegionView {
                    embedding: e,
                    iou: *iou,
                    objectness: *obj,
                })
                .collect();
            build_prototype(rec.id, &views, &WeightingSpec::default()).unwrap()
        })
        .collect();
    Fixture {
        bench,
        heads,
        prototypes,
    }
}

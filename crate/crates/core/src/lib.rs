//! Proxy-novel class synthesis for open-vocabulary classification.
//!
//! Base-class prototypes are mixed pairwise into proxy-novel classes, the
//! matching text embeddings are mixed with the same coefficient, and a proxy
//! head is trained to align the two. At inference the proxy head and a plain
//! BCE head are fused with separate exponents for base and novel classes.

pub mod datagen;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod jsonfmt;
pub mod losses;
pub mod mixer;
pub mod prototype;
pub mod registry;
pub mod rng;
pub mod trainer;

pub use datagen::{gen_benchmark, Benchmark, NovelMode, RegionSample, SampleSet, SyntheticSpec};
pub use embedding::{cosine_sim, l2_normalize, Embedding};
pub use error::{Error, Result};
pub use eval::{evaluate, fuse_log_scores, fuse_scores, EvalReport, FusionParams, Positivity};
pub use losses::{LossSpec, ProxyVariant};
pub use mixer::{best_mix, mix_embeddings, mix_pair, Granularity, MixSpec, PairStrategy, Sampler};
pub use prototype::{build_prototype, Prototype, RegionView, WeightingMode, WeightingSpec};
pub use registry::{load_registry, save_registry, ClassRecord, ClassRegistry, Group};
pub use trainer::{fit, forward, train_step, FitOutput, HeadParams, TrainConfig, TrainLog, TwoHeads};

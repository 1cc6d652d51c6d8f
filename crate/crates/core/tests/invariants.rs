//! Cross-module invariants on generated corpora.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use subprofiles::cluster::{Algorithm, KStrategy};
use subprofiles::corpus::{read_corpus, split_train_test, write_corpus, SplitPlan};
use subprofiles::eval::{competition_positions, ndcg_at_k, precision_at_k, recall_at_k, rrf_combine};
use subprofiles::profiles::{
    build_committee, build_global, build_intervention, build_local, build_monolithic, ClusterSettings, ProfileSet,
    TrainingSet,
};
use subprofiles::retrieval::{comb_lg_dcs, Bm25Params, Index, RankScope, RankedList, Task};
use subprofiles::synthgen::{generate, MixtureSpec, PlantedSpec};
use subprofiles::textprep::TokenPipelineConfig;

fn small_spec(topics: usize, experts: usize, docs: (usize, usize), seed: u64) -> PlantedSpec {
    PlantedSpec {
        topics,
        words_per_topic: 20,
        overlap: 0.2,
        experts,
        docs_per_expert: docs,
        doc_length: (8, 20),
        title_length: 3,
        mixture: MixtureSpec::Uniform,
        zipf_exponent: None,
        seed,
    }
}

fn training(seed: u64) -> TrainingSet {
    let planted = generate(&small_spec(3, 5, (1, 9), seed)).unwrap();
    TrainingSet::new(planted.corpus, TokenPipelineConfig::plain()).unwrap()
}

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(Algorithm::ALL.to_vec())
}

fn k_strategy() -> impl Strategy<Value = KStrategy> {
    prop_oneof![
        Just(KStrategy::Groups),
        Just(KStrategy::MnOverT),
        Just(KStrategy::SqrtNHalf),
        (1usize..5).prop_map(KStrategy::Fixed),
    ]
}

/// Every profile set partitions each expert's training documents.
fn assert_partition(profiles: &ProfileSet, train: &TrainingSet) {
    profiles.validate(&train.corpus).unwrap();
    let covered: BTreeSet<&str> = profiles
        .subprofiles
        .iter()
        .flat_map(|s| s.doc_ids.iter().map(String::as_str))
        .collect();
    assert_eq!(covered.len(), train.corpus.len());
    let owners = profiles.owners();
    for s in &profiles.subprofiles {
        assert!(!s.doc_ids.is_empty());
        assert_eq!(owners[s.subprofile_id.as_str()], s.expert_id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn local_profiles_partition_expert_documents(seed in 0u64..1000, a in algorithm(), k in k_strategy()) {
        let mut settings = ClusterSettings::new(a, k, seed);
        settings.params.lda_iterations = 50;
        settings.params.lda_burn_in = 10;
        settings.params.som_epochs = 10;
        let train = training(seed);
        let profiles = build_local(&train, &settings).unwrap();
        assert_partition(&profiles, &train);
        // Local clustering never gives an expert more subprofiles than documents.
        for (expert, subs) in profiles.by_expert() {
            prop_assert!(subs.len() <= train.corpus.documents_of(expert).count());
        }
    }

    #[test]
    fn global_profiles_partition_expert_documents(seed in 0u64..1000, a in algorithm(), k in k_strategy()) {
        let mut settings = ClusterSettings::new(a, k, seed);
        settings.params.lda_iterations = 50;
        settings.params.lda_burn_in = 10;
        settings.params.som_epochs = 10;
        let train = training(seed);
        assert_partition(&build_global(&train, &settings).unwrap(), &train);
    }

    #[test]
    fn baselines_partition_expert_documents(seed in 0u64..1000) {
        let train = training(seed);
        assert_partition(&build_monolithic(&train.corpus), &train);
        assert_partition(&build_committee(&train.corpus), &train);
        assert_partition(&build_intervention(&train.corpus), &train);
        prop_assert_eq!(build_monolithic(&train.corpus).len(), train.corpus.experts().len());
        prop_assert_eq!(build_intervention(&train.corpus).len(), train.corpus.len());
    }

    #[test]
    fn profile_jsonl_round_trips(seed in 0u64..1000, a in algorithm()) {
        let mut settings = ClusterSettings::new(a, KStrategy::Fixed(2), seed);
        settings.params.lda_iterations = 50;
        settings.params.lda_burn_in = 10;
        let train = training(seed);
        let profiles = build_local(&train, &settings).unwrap();
        let mut buf = Vec::new();
        profiles.write_jsonl(&mut buf).unwrap();
        let back = ProfileSet::read_jsonl(buf.as_slice(), &train.corpus).unwrap();
        prop_assert_eq!(back.subprofiles, profiles.subprofiles);
        prop_assert_eq!(back.provenance, profiles.provenance);
    }

    #[test]
    fn corpus_jsonl_round_trips(seed in 0u64..1000) {
        let corpus = generate(&small_spec(2, 3, (1, 4), seed)).unwrap().corpus;
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        prop_assert_eq!(read_corpus(buf.as_slice()).unwrap(), corpus);
    }

    #[test]
    fn splits_partition_the_corpus(seed in 0u64..1000, rep in 0usize..5) {
        let corpus = generate(&small_spec(2, 4, (3, 12), seed)).unwrap().corpus;
        let plan = SplitPlan { seed, ..SplitPlan::default() };
        let (train, test) = split_train_test(&corpus, &plan, rep).unwrap();
        prop_assert_eq!(train.len(), plan.train_size(corpus.len()));
        prop_assert_eq!(train.len() + test.len(), corpus.len());
        let ids = |c: &subprofiles::corpus::Corpus| -> BTreeSet<String> {
            c.documents().iter().map(|d| d.doc_id.clone()).collect()
        };
        prop_assert!(ids(&train).is_disjoint(&ids(&test)));
        let again = split_train_test(&corpus, &plan, rep).unwrap();
        prop_assert_eq!(again.0, train);
    }

    #[test]
    fn expert_ranking_matches_fused_subprofile_ranking(seed in 0u64..1000, a in algorithm()) {
        let mut settings = ClusterSettings::new(a, KStrategy::Fixed(2), seed);
        settings.params.lda_iterations = 50;
        settings.params.lda_burn_in = 10;
        let train = training(seed);
        let profiles = build_local(&train, &settings).unwrap();
        let index = Index::build(&profiles, &train.vocab, &train.config, Bm25Params::default()).unwrap();
        for d in train.corpus.documents().iter().take(5) {
            let q = index.query(&d.body, Task::Filtering).unwrap();
            let fused = comb_lg_dcs(&index.bm25_rank(&q, None), &profiles).unwrap();
            let direct = index.rank_experts(&q, None);
            prop_assert_eq!(fused.len(), direct.len());
            for (x, y) in fused.entries.iter().zip(&direct.entries) {
                prop_assert_eq!(&x.id, &y.id);
                prop_assert!((x.score - y.score).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn metrics_are_bounded_and_recall_grows_with_k(
        scores in prop::collection::vec(0.01f64..10.0, 1..30),
        relevant in prop::collection::btree_set(0usize..40, 1..6),
    ) {
        let ranking = RankedList::from_scores(
            RankScope::Experts,
            scores.iter().enumerate().map(|(i, s)| (format!("e{i}"), *s)).collect(),
            None,
        );
        let relevant: BTreeSet<String> = relevant.iter().map(|i| format!("e{i}")).collect();
        let mut last_recall = 0.0;
        for k in 1..=12 {
            let p = precision_at_k(&ranking, &relevant, k).unwrap();
            let r = recall_at_k(&ranking, &relevant, k).unwrap();
            let n = ndcg_at_k(&ranking, &relevant, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            prop_assert!(r >= last_recall);
            last_recall = r;
        }
    }

    #[test]
    fn rrf_ignores_positive_affine_transforms(
        values in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 2..8),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let positions = |transform: &dyn Fn(f64) -> f64| -> Vec<BTreeMap<String, usize>> {
            (0..3)
                .map(|m| {
                    let column: Vec<f64> = values.iter().map(|row| transform(row[m])).collect();
                    competition_positions(&column)
                        .into_iter()
                        .enumerate()
                        .map(|(i, p)| (format!("c{i}"), p))
                        .collect()
                })
                .collect()
        };
        let plain = rrf_combine(&positions(&|x| x), 60.0).unwrap();
        let moved = rrf_combine(&positions(&|x| scale * x + shift), 60.0).unwrap();
        prop_assert_eq!(plain, moved);
    }
}

#[test]
fn planted_subprofiles_follow_topics() {
    // Two experts, each writing on two disjoint topics: local K-Means with
    // k = 2 splits each expert exactly along the planted topics.
    let spec = PlantedSpec {
        mixture: MixtureSpec::Explicit(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]),
        ..PlantedSpec::simple(3, 2, 16, 30, 4)
    };
    let planted = generate(&spec).unwrap();
    let topic: BTreeMap<&str, usize> = planted
        .corpus
        .documents()
        .iter()
        .zip(&planted.labels)
        .map(|(d, &l)| (d.doc_id.as_str(), l))
        .collect();
    let train = TrainingSet::new(planted.corpus.clone(), TokenPipelineConfig::plain()).unwrap();
    let profiles = build_local(&train, &ClusterSettings::new(Algorithm::Kmeans, KStrategy::Fixed(2), 0)).unwrap();
    assert_eq!(profiles.len(), 4);
    for s in &profiles.subprofiles {
        let topics: BTreeSet<usize> = s.doc_ids.iter().map(|d| topic[d.as_str()]).collect();
        assert_eq!(topics.len(), 1, "{} mixes topics {topics:?}", s.subprofile_id);
    }
}

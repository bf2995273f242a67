//! Randomised invariants across the public API.

use gdd::awig::{build_awig, AwigOptions};
use gdd::conllu::DepTree;
use gdd::data::synthetic_dataset;
use gdd::dgat::{
    global_forward, global_forward_on, DgatLayerParams, DgatOptions, DualHeadParams, GraphBatch,
    LayerVars, RelHeadParams,
};
use gdd::embeddings::{embed_composed_tag, EmbeddingTable, TagVocab};
use gdd::fft::circ_corr_fft;
use gdd::local::{
    compute_sigma, covariance_attention, original_attention, AttentionParams, GaussianMaskParams,
};
use gdd::model::{Model, ModelConfig};
use gdd::proposition::{check_stationarity, eval_objective};
use gdd::rng::init_weight;
use gdd::{Rng, Span, Tape, Tensor};
use proptest::prelude::*;

fn random_tree(rng: &mut Rng, n: usize) -> DepTree {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut heads = vec![0; n];
    for pos in 1..n {
        heads[order[pos]] = order[rng.below(pos)] + 1;
    }
    let rels = (0..n)
        .map(|_| ["nsubj", "obj", "amod", "det"][rng.below(4)].to_string())
        .collect();
    DepTree::new((0..n).map(|i| format!("t{i}")).collect(), heads, rels).unwrap()
}

fn layer(
    rng: &mut Rng,
    d_aspect: usize,
    d_node: usize,
    d_edge: usize,
    last: bool,
) -> DgatLayerParams {
    let dh = 3;
    DgatLayerParams {
        dual: vec![DualHeadParams {
            w_a: init_weight(rng, &[d_aspect, dh]).unwrap(),
            w_e: init_weight(rng, &[d_edge, dh]).unwrap(),
            w_i: init_weight(rng, &[d_node, dh]).unwrap(),
        }],
        rel: vec![RelHeadParams {
            w_v: init_weight(rng, &[d_node, dh]).unwrap(),
            w_v1: init_weight(rng, &[d_edge, dh]).unwrap(),
            b_v1: rng.uniform(&[dh], 0.5),
            w_v2: init_weight(rng, &[dh, 1]).unwrap(),
            b_v2: rng.uniform(&[1], 0.5),
        }],
        w_r: (!last).then(|| init_weight(rng, &[d_edge, d_edge]).unwrap()),
    }
}

fn stack(rng: &mut Rng, d_node: usize, d_edge: usize) -> Vec<DgatLayerParams> {
    vec![
        layer(rng, d_node, d_node, d_edge, false),
        layer(rng, 6, d_node, d_edge, true),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_correlation_matches_definition(seed: u64, d in 1usize..80) {
        let mut rng = Rng::new(seed);
        let a = rng.uniform(&[d], 3.0);
        let b = rng.uniform(&[d], 3.0);
        let fast = circ_corr_fft(&a, &b).unwrap();
        for k in 0..d {
            let want: f64 = (0..d).map(|i| a.data()[i] * b.data()[(i + k) % d]).sum();
            prop_assert!((fast.data()[k] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn rng_is_reproducible(seed: u64) {
        let draw = |s| {
            let mut r = Rng::new(s);
            let mut v: Vec<usize> = (0..20).collect();
            r.shuffle(&mut v);
            (r.uniform(&[4, 3], 1.0), v, r.below(1000))
        };
        prop_assert_eq!(draw(seed), draw(seed));
    }

    #[test]
    fn attention_rows_are_distributions(seed: u64, n in 1usize..10, d in 1usize..6) {
        let mut rng = Rng::new(seed);
        let h = rng.uniform(&[n, d], 4.0);
        let p = AttentionParams {
            wq: rng.uniform(&[d, 3], 2.0),
            wk: rng.uniform(&[d, 3], 2.0),
            wv: rng.uniform(&[d, 3], 2.0),
        };
        for out in [original_attention(&h, &p).unwrap(), covariance_attention(&h, &p).unwrap()] {
            for row in out.weights.rows() {
                prop_assert!(row.iter().all(|&x| x >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigma_is_positive(seed: u64, n in 1usize..8, scale in 0.1f64..50.0) {
        let mut rng = Rng::new(seed);
        let h = rng.uniform(&[n, 5], scale);
        let p = GaussianMaskParams {
            w1: rng.uniform(&[5, 4], scale),
            b1: rng.uniform(&[4], scale),
            w2: rng.uniform(&[4, 1], scale),
            b2: rng.uniform(&[1], scale),
            sample_interval: 0.2,
        };
        prop_assert!(compute_sigma(&h, &p).unwrap() > 0.0);
    }

    #[test]
    fn objective_is_stationary_at_means(seed: u64, n in 2usize..7, d in 1usize..5) {
        let mut rng = Rng::new(seed);
        let q = rng.uniform(&[n, d], 1.0);
        let k = rng.uniform(&[n, d], 1.0);
        if let Ok(report) = check_stationarity(&q, &k, 1e-6) {
            prop_assert!(report.is_stationary, "{:?}", report);
            let theta = q.mean_rows().unwrap();
            let phi = k.mean_rows().unwrap();
            prop_assert!(eval_objective(theta.data(), phi.data(), &q, &k).unwrap().is_finite());
        }
    }

    #[test]
    fn graphs_are_deterministic_and_well_formed(seed: u64, n in 1usize..13, kappa in 1usize..5) {
        let mut rng = Rng::new(seed);
        let tree = random_tree(&mut rng, n);
        let start = rng.below(n);
        let end = start + 1 + rng.below((n - start).min(3));
        let span = Span::new(start, end, n).unwrap();
        let opts = AwigOptions { kappa_max: kappa, drop_punct: false };
        let g = build_awig(&tree, span, &opts).unwrap();
        prop_assert_eq!(&g, &build_awig(&tree, span, &opts).unwrap());
        prop_assert_eq!(g.edges.len(), g.word_nodes.len());
        let mut seen = g.word_nodes.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), g.word_nodes.len());
        for (i, e) in g.edges.iter().enumerate() {
            prop_assert_eq!(e.node, i);
            prop_assert!(!span.contains(g.word_nodes[i]), "aspect token became a word node");
            prop_assert!(e.tag.hops() >= 1 && e.tag.hops() <= kappa);
            prop_assert_eq!(e.via.len(), e.tag.hops() + 1);
        }

        // every composed tag embeds to the same width
        let vocab = TagVocab::build(tree.rels().iter().map(String::as_str), kappa);
        let tags = EmbeddingTable::new(rng.uniform(&[vocab.tags.len(), 2], 1.0)).unwrap();
        let hops = EmbeddingTable::new(rng.uniform(&[kappa, 2], 1.0)).unwrap();
        for e in &g.edges {
            let v = embed_composed_tag(&e.tag, &vocab, &tags, &hops).unwrap();
            prop_assert_eq!(v.len(), vocab.edge_width(2));
        }
    }

    #[test]
    fn graph_attention_is_normalised_and_order_free(seed: u64, m in 0usize..8) {
        let mut rng = Rng::new(seed);
        let (d_node, d_edge) = (4, 5);
        let layers = stack(&mut rng, d_node, d_edge);
        let batch = GraphBatch {
            h_a: rng.uniform(&[d_node], 1.0),
            h_n: rng.uniform(&[m, d_node], 1.0),
            e: rng.uniform(&[m, d_edge], 1.0),
        };
        let opts = DgatOptions::default();
        let out = global_forward(&batch, &layers, &opts).unwrap();
        prop_assert_eq!(out.empty_graph, m == 0);
        if m == 0 {
            prop_assert!(out.h_global.data().iter().all(|&x| x == 0.0));
            return Ok(());
        }

        let mut tape = Tape::new();
        let h_a = tape.leaf(batch.h_a.clone());
        let h_n = tape.leaf(batch.h_n.clone());
        let e = tape.leaf(batch.e.clone());
        let vars: Vec<LayerVars> = layers.iter().map(|p| LayerVars::register(&mut tape, p)).collect();
        let trace = global_forward_on(&mut tape, h_a, h_n, e, &vars, &opts, None).unwrap();
        for l in &trace.layers {
            for &v in l.beta.iter().chain(&l.omega).chain(&l.rho) {
                let dist = tape.value(v);
                prop_assert_eq!(dist.len(), m);
                prop_assert!((dist.sum() - 1.0).abs() < 1e-12);
            }
        }

        let mut perm: Vec<usize> = (0..m).collect();
        rng.shuffle(&mut perm);
        let pick = |t: &Tensor| Tensor::from_rows(&perm.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let shuffled = GraphBatch { h_a: batch.h_a.clone(), h_n: pick(&batch.h_n), e: pick(&batch.e) };
        let again = global_forward(&shuffled, &layers, &opts).unwrap();
        prop_assert!(out.h_global.max_abs_diff(&again.h_global).unwrap() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn model_outputs_distributions_and_additive_loss(seed in 0u64..1000, l2 in 0.0f64..0.5) {
        let examples = synthetic_dataset(6, seed);
        let model = Model::from_training_data(ModelConfig { l2, seed, ..ModelConfig::toy() }, &examples).unwrap();
        let insts = model.prepare_all(&examples, None).unwrap();
        let mut sum = 0.0;
        for inst in &insts {
            let p = model.predict(inst).unwrap();
            prop_assert!((p.probs.sum() - 1.0).abs() < 1e-12);
            prop_assert!(p.probs.data().iter().all(|&x| x >= 0.0));
            sum += model.example_loss(inst).unwrap();
        }
        let total = model.dataset_loss(&insts).unwrap();
        prop_assert!((total - sum - model.penalty().unwrap()).abs() < 1e-10);
    }
}

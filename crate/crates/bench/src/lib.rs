//! Criterion benchmarks for the hot paths: preprocessing, TF-IDF
//! classification, the CNN forward pass, LIME and the metric scorers.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{BenchmarkId, Criterion, Throughput};
use lumen_core::corpus::synthetic::{clustered_embedding_table, generate, SyntheticSpec};
use lumen_core::corpus::Post;
use lumen_core::explain::{explain, LimeConfig};
use lumen_core::metrics::{metric_tokens, rouge_l, rouge_n};
use lumen_core::pipeline::{ModelSpec, PipelineConfig, TextClassifier};
use lumen_core::prompts::{build_diagnose_prompt, default_exemplar_bank};
use lumen_core::textprep::{porter_stem, preprocess, PreprocessConfig};

const SAMPLE_POST: &str = "I have not slept properly in weeks, I feel exhausted and hopeless, \
                           and nothing at work or at home seems worth the effort anymore.";

pub fn corpus() -> Vec<Post> {
    generate(&SyntheticSpec { docs: 200, seed: 0, ..Default::default() })
}

fn text(c: &mut Criterion) {
    let mut g = c.benchmark_group("text");
    g.throughput(Throughput::Bytes(SAMPLE_POST.len() as u64));
    g.bench_function("preprocess", |b| b.iter(|| preprocess(black_box(SAMPLE_POST), PreprocessConfig::default())));
    let words = ["hopelessness", "relational", "generalizations", "sleeping", "exhausted"];
    g.bench_function("porter_stem", |b| {
        b.iter(|| words.iter().map(|w| porter_stem(black_box(w)).unwrap().len()).sum::<usize>())
    });
    g.finish();
}

fn classify(c: &mut Criterion) {
    let posts = corpus();
    let logreg = TextClassifier::fit(&posts, &PipelineConfig::new(ModelSpec::LogReg { c: 10.0 }), None).unwrap();
    let svm =
        TextClassifier::fit(&posts, &PipelineConfig::new(ModelSpec::Svm { c: 1.0, gamma: 1.0, features: 1024 }), None)
            .unwrap();
    let table = Arc::new(clustered_embedding_table(16, 1, 2.0));
    let mut cnn_cfg = PipelineConfig::new(ModelSpec::Cnn { max_len: 32 });
    cnn_cfg.train.epochs = 2;
    let cnn = TextClassifier::fit(&posts, &cnn_cfg, Some(table)).unwrap();

    let mut g = c.benchmark_group("predict");
    for (name, clf) in [("logreg", &logreg), ("svm_rff", &svm), ("cnn", &cnn)] {
        let doc = clf.tokenize(&posts[0].text);
        g.bench_with_input(BenchmarkId::from_parameter(name), &doc, |b, d| b.iter(|| clf.predict_doc(d).unwrap()));
    }
    g.finish();

    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    g.bench_function("logreg_200", |b| {
        b.iter(|| TextClassifier::fit(&posts, &PipelineConfig::new(ModelSpec::LogReg { c: 10.0 }), None).unwrap())
    });
    g.finish();

    let mut g = c.benchmark_group("lime");
    g.sample_size(20);
    let doc = logreg.tokenize(&posts[0].text);
    for samples in [250, 1000] {
        let cfg = LimeConfig { samples, ..LimeConfig::default() };
        g.bench_with_input(BenchmarkId::from_parameter(samples), &cfg, |b, cfg| {
            b.iter(|| explain(|d| logreg.predict_doc(d).map(|p| p.p1), &doc, cfg).unwrap())
        });
    }
    g.finish();
}

fn prompts_and_metrics(c: &mut Criterion) {
    let bank = default_exemplar_bank();
    c.bench_function("build_diagnose_prompt_k4", |b| {
        b.iter(|| build_diagnose_prompt(black_box(SAMPLE_POST), &bank, 4).unwrap().render())
    });
    let cand = metric_tokens("It sounds like the lack of sleep has left you exhausted and without hope.");
    let reference = metric_tokens(SAMPLE_POST);
    c.bench_function("rouge", |b| {
        b.iter(|| (rouge_n(&cand, &reference, 1).f1, rouge_n(&cand, &reference, 2).f1, rouge_l(&cand, &reference).f1))
    });
}

pub fn benchmarks(c: &mut Criterion) {
    text(c);
    classify(c);
    prompts_and_metrics(c);
}

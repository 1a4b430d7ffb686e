//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails.

#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use lumen_core::classify::{
    grid_search_cv, train_svm_rff, CnnModel, CvMetric, LogRegModel, Model, RffMap, TrainConfig,
};
use lumen_core::corpus::synthetic::{clustered_embedding_table, generate, SyntheticSpec};
use lumen_core::corpus::{
    pseudo_label, stratified_split, Dataset, Label, Partition, Post, PseudoLabelConfig, SplitSpec,
};
use lumen_core::explain::{apply_mask, explain, LimeConfig};
use lumen_core::linalg::Matrix;
use lumen_core::llmclient::{LlmBackend, MockBackend, ScriptEntry, Unmatched};
use lumen_core::metrics::{cosine, metric_tokens, prf_report, rouge_n};
use lumen_core::pipeline::{FeatureMap, ModelSpec, PipelineConfig, PipelineCv, PipelineTeacher, TextClassifier};
use lumen_core::prompts::{
    build_diagnose_prompt, default_cbt_db, default_cbt_embeddings, default_exemplar_bank, parse_diagnosis,
    plan_treatment, render_exemplar_answer, Answer, DiagnosisLabel, DialogueState, PlanConfig, RiskLevel, Stage,
    CRISIS_MESSAGE,
};
use lumen_core::textprep::{preprocess, tfidf_transform, TokenDoc};
use lumen_service::Engines;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

/// Name, check and runtime budget.
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn synthetic_split(docs: usize, seed: u64) -> Result<Dataset, String> {
    let ds = Dataset::new(generate(&SyntheticSpec { docs, seed, ..Default::default() })).map_err(err)?;
    stratified_split(&ds, &SplitSpec { seed, ..SplitSpec::default() }).map_err(err)
}

fn owned(posts: Vec<&Post>) -> Vec<Post> {
    posts.into_iter().cloned().collect()
}

fn test_f1(clf: &TextClassifier, test: &[Post]) -> Result<f64, String> {
    let preds = test.iter().map(|p| clf.predict_text(&p.text).map(|x| x.label)).collect::<Result<Vec<_>, _>>();
    let gold: Vec<Label> = test.iter().map(|p| p.label.expect("labeled")).collect();
    Ok(prf_report(&preds.map_err(err)?, &gold).map_err(err)?.f1)
}

fn metric_oracles() -> Outcome {
    // (tp, fp, fn, tn) = (2, 1, 1, 6)
    let mut preds = Vec::new();
    let mut gold = Vec::new();
    for (p, g, n) in [(true, true, 2), (true, false, 1), (false, true, 1), (false, false, 6)] {
        for _ in 0..n {
            preds.push(Label::from_bool(p));
            gold.push(Label::from_bool(g));
        }
    }
    let r = prf_report(&preds, &gold).map_err(err)?;
    let third = 2.0 / 3.0;
    ensure(
        close(r.accuracy, 0.8, 1e-12)
            && close(r.precision, third, 1e-12)
            && close(r.recall, third, 1e-12)
            && close(r.f1, third, 1e-12),
        || format!("prf {r:?}"),
    )?;
    let rg = rouge_n(&metric_tokens("the cat sat"), &metric_tokens("the cat sat on the mat"), 1);
    ensure(close(rg.precision, 1.0, 1e-12) && close(rg.recall, 0.5, 1e-12) && close(rg.f1, third, 1e-12), || {
        format!("rouge1 {rg:?}")
    })?;
    let c = cosine(&[1.0, 0.0], &[1.0, 1.0]).map_err(err)?;
    ensure(close(c, 1.0 / 2f64.sqrt(), 1e-12), || format!("cosine {c}"))?;
    Ok(format!("f1 {:.6}, rouge1 f {:.6}, cosine {c:.12}", r.f1, rg.f1))
}

const FD_EPS: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

fn gradients() -> Outcome {
    let mut worst_cnn = 0.0f64;
    let mut worst_lr = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let model = CnnModel::new(8, 32, seed).map_err(err)?;
        let x = Matrix::from_vec(32, 8, (0..256).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mask = model.dropout_mask(&mut rng);
        let y = Label::from_bool(seed % 2 == 1);
        let (_, grad) = model.loss_and_grad(&x, y, Some(&mask)).map_err(err)?;
        for i in 0..model.params().len() {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            plus.params_mut()[i] += FD_EPS;
            minus.params_mut()[i] -= FD_EPS;
            let lp = plus.loss(&x, y, Some(&mask)).map_err(err)?;
            let lm = minus.loss(&x, y, Some(&mask)).map_err(err)?;
            worst_cnn = worst_cnn.max(rel_err(grad[i], (lp - lm) / (2.0 * FD_EPS)));
        }

        let dim = 10;
        let xs: Vec<Vec<f64>> = (0..16).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<Label> = (0..16).map(|i| Label::from_bool(i % 2 == 0)).collect();
        let lr = LogRegModel {
            weights: (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
            bias: rng.random_range(-0.5..0.5),
            c: 1.5,
        };
        let refs: Vec<&Vec<f64>> = xs.iter().collect();
        let (gw, gb) = lr.gradient(&refs, &ys);
        for i in 0..=dim {
            let (mut plus, mut minus) = (lr.clone(), lr.clone());
            if i < dim {
                plus.weights[i] += FD_EPS;
                minus.weights[i] -= FD_EPS;
            } else {
                plus.bias += FD_EPS;
                minus.bias -= FD_EPS;
            }
            let numeric = (plus.objective(&xs, &ys) - minus.objective(&xs, &ys)) / (2.0 * FD_EPS);
            worst_lr = worst_lr.max(rel_err(if i < dim { gw[i] } else { gb }, numeric));
        }
    }
    ensure(worst_cnn < 1e-3 && worst_lr < 1e-3, || format!("cnn {worst_cnn:.2e}, logreg {worst_lr:.2e}"))?;
    Ok(format!("max rel err cnn {worst_cnn:.2e}, logreg {worst_lr:.2e}"))
}

fn synthetic_classification() -> Outcome {
    let ds = synthetic_split(200, 0)?;
    let train = owned(ds.partition(Partition::Train));
    let test = owned(ds.partition(Partition::Test));

    let base = PipelineConfig::new(ModelSpec::LogReg { c: 1.0 });
    let grid: Vec<ModelSpec> = [0.01, 0.1, 1.0, 10.0, 100.0].into_iter().map(|c| ModelSpec::LogReg { c }).collect();
    let docs: Vec<TokenDoc> = train.iter().map(|p| preprocess(&p.text, base.preprocess)).collect();
    let ys: Vec<Label> = train.iter().map(|p| p.label.expect("labeled")).collect();
    let cv =
        grid_search_cv(&PipelineCv { base, embeddings: None }, &grid, 10, &docs, &ys, CvMetric::F1, 0).map_err(err)?;
    let logreg = TextClassifier::fit(&train, &PipelineConfig { model: cv.best, ..base }, None).map_err(err)?;
    let lr_f1 = test_f1(&logreg, &test)?;

    let table = Arc::new(clustered_embedding_table(16, 1, 2.0));
    let mut cnn_cfg = PipelineConfig::new(ModelSpec::Cnn { max_len: 32 });
    cnn_cfg.train = TrainConfig { epochs: 20, learning_rate: 0.003, batch_size: 16, ..cnn_cfg.train };
    let cnn = TextClassifier::fit(&train, &cnn_cfg, Some(table)).map_err(err)?;
    let cnn_f1 = test_f1(&cnn, &test)?;

    let detail = format!("logreg {:?} f1 {lr_f1:.3}, cnn f1 {cnn_f1:.3}", cv.best);
    ensure(lr_f1 >= 0.95 && cnn_f1 >= 0.90, || detail.clone())?;
    Ok(detail)
}

fn rff_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gamma = 0.5;
    let points: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let map = RffMap::sample(4, 4096, gamma, &mut rng);
    let z: Vec<Vec<f64>> = points.iter().map(|p| map.transform(p)).collect();
    let (mut total, mut pairs) = (0.0, 0usize);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            let approx: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum();
            total += (approx - (-gamma * d2).exp()).abs();
            pairs += 1;
        }
    }
    let mean = total / pairs as f64;

    let xs = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let ys = vec![Label::NotDepressed, Label::NotDepressed, Label::Depressed, Label::Depressed];
    let cfg = TrainConfig { epochs: 300, batch_size: 4, learning_rate: 0.05, ..Default::default() };
    let svm = train_svm_rff(&xs, &ys, None, &cfg, 10.0, 1.0, 512).map_err(err)?;
    let correct = xs.iter().zip(&ys).filter(|(x, y)| svm.predict(*x).map(|p| p.label) == Ok(**y)).count();
    let acc = correct as f64 / xs.len() as f64;
    let detail = format!("mean kernel error {mean:.4} over {pairs} pairs, xor accuracy {acc}");
    ensure(mean < 0.05 && acc == 1.0, || detail.clone())?;
    Ok(detail)
}

fn lime_oracle() -> Outcome {
    let train = generate(&SyntheticSpec { docs: 200, seed: 0, ..Default::default() });
    let clf = TextClassifier::fit(&train, &PipelineConfig::new(ModelSpec::LogReg { c: 10.0 }), None).map_err(err)?;
    let (FeatureMap::Tfidf(vocab), Model::LogReg(lr)) = (&clf.features, &clf.model) else {
        return Err("expected a tf-idf logistic regression".into());
    };
    let docs = generate(&SyntheticSpec { docs: 50, seed: 99, ..Default::default() });
    let cfg = LimeConfig { samples: 1000, top_k: 10, ..LimeConfig::default() };
    let (mut top1, mut lowered) = (0usize, 0usize);
    for post in &docs {
        let doc = clf.tokenize(&post.text);
        let x = tfidf_transform(vocab, &doc);
        let oracle = x
            .entries
            .iter()
            .map(|&(i, v)| (i, (lr.weights[i] * v).abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| vocab.token(i).to_string());
        let e = explain(|d| clf.predict_doc(d).map(|p| p.p1), &doc, &cfg).map_err(err)?;
        if oracle.as_deref() == e.items.first().map(|t| t.token.as_str()) {
            top1 += 1;
        }
        let positive = e.items.iter().filter(|t| t.weight > 0.0).max_by(|a, b| a.weight.total_cmp(&b.weight));
        if let Some(tok) = positive {
            let unique = doc.unique_tokens();
            let mask: Vec<bool> = unique.iter().map(|t| *t != tok.token).collect();
            let p_masked = clf.predict_doc(&apply_mask(&doc, &mask)).map_err(err)?.p1;
            if p_masked < e.model_p1 {
                lowered += 1;
            }
        }
    }
    let (a, b) = (top1 as f64 / docs.len() as f64, lowered as f64 / docs.len() as f64);
    let detail = format!("top-1 agreement {a:.2}, masking lowers p1 {b:.2}");
    ensure(a >= 0.80 && b >= 0.90, || detail.clone())?;
    Ok(detail)
}

fn pseudo_labeling() -> Outcome {
    let ds = synthetic_split(200, 0)?;
    let test = owned(ds.partition(Partition::Test));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut seed_set, mut pool) = (Vec::new(), Vec::new());
    for label in Label::ALL {
        let mut class: Vec<Post> = ds
            .posts
            .iter()
            .filter(|p| {
                p.label == Some(label) && ds.split.as_ref().and_then(|s| s.get(&p.id)) != Some(&Partition::Test)
            })
            .cloned()
            .collect();
        class.shuffle(&mut rng);
        let n = (class.len() as f64 * 0.1).round() as usize;
        pool.extend(class.split_off(n));
        seed_set.extend(class);
    }
    let truth: HashMap<String, Label> = pool.iter().map(|p| (p.id.clone(), p.label.expect("labeled"))).collect();
    let hidden: Vec<Post> = pool.into_iter().map(|p| Post { label: None, ..p }).collect();

    let teacher = PipelineTeacher { cfg: PipelineConfig::new(ModelSpec::LogReg { c: 1e4 }), embeddings: None };
    let cfg = PseudoLabelConfig::new(0.9, 3).map_err(err)?.balanced(true);
    let out = pseudo_label(&teacher, &seed_set, &hidden, &cfg).map_err(err)?;
    let agree = out.admitted.iter().filter(|p| truth.get(&p.id) == p.label.as_ref()).count();
    let agreement = agree as f64 / out.admitted.len().max(1) as f64;

    let labeled_only = TextClassifier::fit(&seed_set, &teacher.cfg, None).map_err(err)?;
    let all: Vec<Post> = seed_set.iter().chain(&out.admitted).cloned().collect();
    let student = TextClassifier::fit(&all, &teacher.cfg, None).map_err(err)?;
    let (f_lab, f_stu) = (test_f1(&labeled_only, &test)?, test_f1(&student, &test)?);
    let detail = format!(
        "seed {}, admitted {}/{}, agreement {agreement:.3}, f1 student {f_stu:.3} vs labeled-only {f_lab:.3}",
        seed_set.len(),
        out.admitted.len(),
        hidden.len()
    );
    ensure(!out.admitted.is_empty() && agreement >= 0.95 && f_stu >= f_lab - 0.02, || detail.clone())?;
    Ok(detail)
}

const GOLDEN_TARGET: &str = "I have not slept properly in weeks and nothing feels worth doing anymore.";

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

fn prompt_round_trip() -> Outcome {
    let bank = default_exemplar_bank();
    let llm = MockBackend::sequence(bank.iter().map(render_exemplar_answer));
    for ex in &bank {
        let req = build_diagnose_prompt(&ex.post, &bank, 0).map_err(err)?.to_request("gpt-4", 0.0, 256);
        let d = parse_diagnosis(&llm.complete(&req).map_err(err)?.content).map_err(err)?;
        let want = if ex.answer == Answer::A { DiagnosisLabel::Depressed } else { DiagnosisLabel::NotDepressed };
        ensure(d.label == want && d.keywords == ex.keywords, || format!("exemplar {:?}", ex.post))?;
    }
    for k in 0..=4 {
        let path = golden_dir().join(format!("diagnose_k{k}.txt"));
        let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let rendered = build_diagnose_prompt(GOLDEN_TARGET, &bank, k).map_err(err)?.render();
        ensure(rendered == golden, || format!("golden mismatch at k = {k}"))?;
    }
    Ok(format!("{} exemplars recovered, 5 golden prompts byte-exact", bank.len()))
}

const SIX_TURNS: [&str; 6] = [
    "I have been feeling low for weeks.",
    "I stopped doing activities I enjoy.",
    "Mostly I stay in bed all day.",
    "I used to go running with friends.",
    "Now I cancel plans at the last minute.",
    "I do not know where to start.",
];

fn six_turn_backend() -> MockBackend {
    let replies = [
        "[clarify] How long has the low mood lasted?",
        "[clarify] Which activities did you used to enjoy?",
        "[paraphrase_reflect] It sounds like staying in bed has replaced the things you enjoyed.",
        "[clarify] What was running with friends like for you?",
        "[paraphrase_reflect] Cancelling plans seems to keep you away from people who matter.",
        "[paraphrase_reflect] Feeling unsure where to begin makes sense after weeks like this.",
    ];
    let mut script: Vec<ScriptEntry> = replies.iter().enumerate().map(|(i, r)| ScriptEntry::nth(i + 1, *r)).collect();
    script.push(ScriptEntry::contains("Candidate module:", "Vote: 5"));
    MockBackend::new(script, Unmatched::Error)
}

fn dialogue_safety() -> Outcome {
    let engines = Engines::new(None, Arc::new(six_turn_backend()));
    let mut state = DialogueState::default();
    let mut plan = None;
    for text in SIX_TURNS {
        let (out, p) = engines.chat_step(&state, plan.is_none(), text).map_err(err)?;
        plan = plan.or(p);
        state = out.state;
    }
    ensure(state.stage == Stage::Support, || format!("stage {:?} after 6 turns", state.stage))?;
    let plan = plan.ok_or("no treatment plan attached")?;
    let first = plan.steps.first().map(|s| s.node.clone()).unwrap_or_default();

    let mock = Arc::new(MockBackend::new(vec![ScriptEntry::nth(1, "[clarify] Tell me more.")], Unmatched::Error));
    let engines = Engines::new(None, mock.clone());
    let (out, _) = engines.chat_step(&DialogueState::default(), true, "Work has been stressful.").map_err(err)?;
    let (out, _) = engines.chat_step(&out.state, true, "I want to end my life.").map_err(err)?;
    ensure(out.state.risk == RiskLevel::Crisis, || format!("risk {:?}", out.state.risk))?;
    let stage = out.state.stage;
    let mut state = out.state;
    for i in 0..10 {
        let (o, p) = engines.chat_step(&state, true, &format!("Ordinary message number {i}.")).map_err(err)?;
        ensure(
            o.state.risk == RiskLevel::Crisis
                && o.state.stage == stage
                && !o.llm_called
                && p.is_none()
                && o.reply == CRISIS_MESSAGE.trim_end(),
            || format!("crisis state left at subsequent turn {i}"),
        )?;
        state = o.state;
    }
    ensure(mock.call_count() == 1, || format!("{} backend calls", mock.call_count()))?;
    Ok(format!("support with plan starting at {first}; crisis held over 10 turns with no backend calls"))
}

const INACTIVE: &str = "stopped doing activities I enjoy, stay in bed all day";

/// Mean embedding of in-table words, from the raw resource text.
fn oracle_similarities(db: &[(String, String)], table_text: &str, case: &str) -> Vec<f64> {
    let table: HashMap<&str, Vec<f64>> = table_text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            let word = parts.next()?;
            Some((word, parts.map(|v| v.parse::<f64>().unwrap()).collect()))
        })
        .collect();
    let mean = |text: &str| -> Vec<f64> {
        let words: Vec<String> = text
            .to_lowercase()
            .split_whitespace()
            .map(|w| w.chars().filter(|c| c.is_ascii_alphanumeric()).collect())
            .collect();
        let hits: Vec<&Vec<f64>> = words.iter().filter_map(|w| table.get(w.as_str())).collect();
        let dim = table.values().next().map_or(0, Vec::len);
        (0..dim).map(|j| hits.iter().map(|v| v[j]).sum::<f64>() / hits.len() as f64).collect()
    };
    let c = mean(case);
    db.iter()
        .map(|(_, app)| {
            let v = mean(app);
            let dot: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
            let n = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
            dot / (n(&c) * n(&v))
        })
        .collect()
}

fn tot_determinism() -> Outcome {
    let db = default_cbt_db();
    ensure(db.len() == 6, || format!("{} nodes", db.len()))?;
    let resources = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/resources/prompts");
    let raw_db: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string(resources.join("cbt_db.json")).map_err(err)?).map_err(err)?;
    let pairs: Vec<(String, String)> = raw_db
        .iter()
        .map(|n| (n["name"].as_str().unwrap_or("").to_string(), n["application"].as_str().unwrap_or("").to_string()))
        .collect();
    let table_text = std::fs::read_to_string(resources.join("cbt_embeddings.txt")).map_err(err)?;
    let sims = oracle_similarities(&pairs, &table_text, INACTIVE);
    let best = (0..sims.len()).max_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(b.cmp(&a))).unwrap();
    ensure(pairs[best].0 == "Behavioral Activation", || format!("oracle argmax {}", pairs[best].0))?;

    let table = default_cbt_embeddings();
    let cfg = PlanConfig { beta: 0.0, ..PlanConfig::default() };
    let mock = MockBackend::new(vec![], Unmatched::Error);
    let a = plan_treatment(INACTIVE, &db, &cfg, &table, Some(&mock)).map_err(err)?;
    let b = plan_treatment(INACTIVE, &db, &cfg, &table, Some(&mock)).map_err(err)?;
    let first = &a.steps[0];
    ensure(first.node == "Behavioral Activation", || format!("first node {}", first.node))?;
    ensure(close(first.score, (sims[best] + 1.0) / 2.0, 1e-12), || format!("score {} vs oracle", first.score))?;
    let bits = |p: &lumen_core::prompts::TreatmentPlan| p.scores.iter().map(|s| s.to_bits()).collect::<Vec<_>>();
    ensure(a == b && bits(&a) == bits(&b), || "plans differ between runs".into())?;
    ensure(mock.call_count() == 0, || "backend consulted with beta = 0".into())?;
    let path: Vec<&str> = a.steps.iter().map(|s| s.node.as_str()).collect();
    Ok(format!("plan {}; oracle similarity {:.4}", path.join(" -> "), sims[best]))
}

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn free_port() -> Result<u16, String> {
    Ok(TcpListener::bind("127.0.0.1:0").map_err(err)?.local_addr().map_err(err)?.port())
}

fn start_server(config: &Path) -> Result<Server, String> {
    let port = free_port()?;
    let child = Command::new(env!("CARGO_BIN_EXE_lumen"))
        .args(["serve", "--config"])
        .arg(config)
        .args(["--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(err)?;
    let mut server = Server { child, base: format!("http://127.0.0.1:{port}") };
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        if ureq::get(&format!("{}/healthz", server.base)).call().is_ok() {
            return Ok(server);
        }
        if let Ok(Some(status)) = server.child.try_wait() {
            let mut log = String::new();
            if let Some(stderr) = server.child.stderr.take() {
                for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                    log.push_str(&line);
                    log.push('\n');
                }
            }
            return Err(format!("server exited with {status}: {log}"));
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    Err("server did not become healthy".into())
}

fn post(base: &str, path: &str, body: &Value) -> Result<Value, String> {
    let mut resp = ureq::post(&format!("{base}{path}")).send_json(body).map_err(err)?;
    resp.body_mut().read_json::<Value>().map_err(err)
}

fn get(base: &str, path: &str) -> Result<Value, String> {
    let mut resp = ureq::get(&format!("{base}{path}")).call().map_err(err)?;
    resp.body_mut().read_json::<Value>().map_err(err)
}

fn service_integration() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let script = [
        json!({"match": {"nth": 1}, "response": "Answer: A\nExplanation: Persistent hopelessness.\nKeywords: hopeless, tired"}),
        json!({"match": {"nth": 2}, "response": "[clarify] When did this start?"}),
        json!({"match": {"nth": 3}, "response": "I hear you."}),
        json!({"match": {"nth": 4}, "response": "[paraphrase_reflect] It sounds like work has drained you."}),
    ];
    let script_path = dir.path().join("script.jsonl");
    let lines: Vec<String> = script.iter().map(Value::to_string).collect();
    std::fs::write(&script_path, lines.join("\n")).map_err(err)?;
    let config = json!({
        "backend": { "kind": "mock", "mock_script": script_path },
        "journal_dir": dir.path().join("journal"),
    });
    let config_path = dir.path().join("service.json");
    std::fs::write(&config_path, config.to_string()).map_err(err)?;

    let server = start_server(&config_path)?;
    let d = post(&server.base, "/v1/diagnose", &json!({"text": "I feel hopeless and tired", "engine": "llm"}))?;
    ensure(d["label"] == "depressed" && d["keywords"] == json!(["hopeless", "tired"]), || format!("diagnose {d}"))?;
    let id = post(&server.base, "/v1/sessions", &json!({}))?["session_id"].as_str().ok_or("no session id")?.to_string();
    let mut stages = Vec::new();
    for text in ["Work has been exhausting.", "About a month ago.", "I just feel empty after my shifts."] {
        let r = post(&server.base, &format!("/v1/sessions/{id}/messages"), &json!({ "text": text }))?;
        stages.push(r["stage"].as_str().unwrap_or("").to_string());
    }
    ensure(stages == ["relate", "relate", "reflect"], || format!("stages {stages:?}"))?;
    let before = get(&server.base, &format!("/v1/sessions/{id}"))?;
    drop(server);

    let server = start_server(&config_path)?;
    let after = get(&server.base, &format!("/v1/sessions/{id}"))?;
    ensure(before == after, || "session differs after restart".into())?;
    let turns = after["state"]["history"].as_array().map_or(0, Vec::len);
    ensure(turns == 6, || format!("{turns} turns replayed"))?;
    Ok(format!("diagnose ok, stages {stages:?}, {turns} turns identical after restart"))
}

fn main() {
    // `cargo test -- --list` and filters are passed through; only run for a plain invocation
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 10] = [
        ("metric_oracles", metric_oracles, Duration::from_secs(1)),
        ("gradient_correctness", gradients, Duration::from_secs(30)),
        ("synthetic_classification", synthetic_classification, Duration::from_secs(180)),
        ("rff_fidelity", rff_fidelity, Duration::from_secs(30)),
        ("lime_oracle", lime_oracle, Duration::from_secs(120)),
        ("pseudo_labeling", pseudo_labeling, Duration::from_secs(120)),
        ("prompt_round_trip", prompt_round_trip, Duration::from_secs(5)),
        ("dialogue_safety", dialogue_safety, Duration::from_secs(5)),
        ("tot_determinism", tot_determinism, Duration::from_secs(5)),
        ("service_integration", service_integration, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; over budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {name} ({detail}; {:.2}s)", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({detail}; {:.2}s)", elapsed.as_secs_f64());
            }
        }
    }
    println!("{} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

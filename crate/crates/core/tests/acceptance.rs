//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{strip_timing, synthetic};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ragev_core::bench::factorial::ExperimentConfig;
use ragev_core::bench::runner::run_path;
use ragev_core::bench::{expand_factorial, load_qa_dataset, pearson, BaseSettings, ExperimentFactors, Runner};
use ragev_core::chunking::ChunkingParams;
use ragev_core::corpus::{Collection, CollectionKind, Document};
use ragev_core::embedding::{EmbeddingVector, HashedNgramEmbedder};
use ragev_core::generation::{GeneratorConfig, GeneratorKind};
use ragev_core::index::{build_indexes, VectorIndex};
use ragev_core::metrics::{bert_score, rouge_l, rouge_n, ShortLabel};
use ragev_core::retrieval::{retrieve, rrf_fuse, shy_retrieve, PipelineKind, RetrievalParams};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64) -> Outcome {
    ensure!(elapsed.as_secs_f64() < limit_s, "took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64());
    Ok(format!("{:.2}s", elapsed.as_secs_f64()))
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

// --- 1 ---------------------------------------------------------------

fn oracle_rouge_n(cand: &[&str], reference: &[&str], n: usize) -> (f64, f64, f64) {
    let grams = |t: &[&str]| -> Vec<Vec<String>> {
        if t.len() < n {
            return Vec::new();
        }
        (0..=t.len() - n).map(|i| t[i..i + n].iter().map(|s| s.to_string()).collect()).collect()
    };
    let (c, r) = (grams(cand), grams(reference));
    let mut distinct: Vec<&Vec<String>> = r.iter().collect();
    distinct.sort();
    distinct.dedup();
    let mut matched = 0usize;
    for g in distinct {
        let in_c = c.iter().filter(|x| *x == g).count();
        let in_r = r.iter().filter(|x| *x == g).count();
        matched += in_c.min(in_r);
    }
    let recall = if r.is_empty() { 0.0 } else { matched as f64 / r.len() as f64 };
    let precision = if c.is_empty() { 0.0 } else { matched as f64 / c.len() as f64 };
    (recall, precision, f1(precision, recall))
}

fn oracle_lcs(a: &[&str], b: &[&str]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let vocab = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let words = |rng: &mut ChaCha8Rng| -> Vec<&str> {
            let len = rng.gen_range(0..25);
            (0..len).map(|_| *vocab.choose(rng).unwrap()).collect()
        };
        let (c, r) = (words(&mut rng), words(&mut rng));
        let (cs, rs) = (c.join(" "), r.join(" "));
        for n in [1, 2] {
            let got = rouge_n(&cs, &rs, n).map_err(|e| e.to_string())?;
            let (er, ep, ef) = oracle_rouge_n(&c, &r, n);
            for (x, y) in [(got.recall, er), (got.precision, ep), (got.f1, ef)] {
                worst = worst.max((x - y).abs());
            }
        }
        let lcs = oracle_lcs(&c, &r) as f64;
        let l = rouge_l(&cs, &rs);
        let er = if r.is_empty() { 0.0 } else { lcs / r.len() as f64 };
        let ep = if c.is_empty() { 0.0 } else { lcs / c.len() as f64 };
        for (x, y) in [(l.recall, er), (l.precision, ep), (l.f1, f1(ep, er))] {
            worst = worst.max((x - y).abs());
        }
    }
    ensure!(worst <= 1e-12, "max deviation from oracle {worst:e}");
    let t = within(start.elapsed(), 5.0)?;
    Ok(format!("200 pairs, max deviation {worst:e}, {t}"))
}

// --- 2 ---------------------------------------------------------------

fn criterion_2() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6;
    let r1 = rouge_n("the cat", "the cat sat on the mat", 1).map_err(|e| e.to_string())?;
    ensure!(close(r1.recall, 2.0 / 6.0) && close(r1.precision, 1.0), "rouge-1 fixture gave {r1:?}");
    let l = rouge_l("the cat sat on mat", "the cat sat on the mat");
    ensure!(close(l.recall, 5.0 / 6.0) && close(l.precision, 1.0), "rouge-L fixture gave {l:?}");
    let basis = |i: usize| {
        let mut v = vec![0.0; 4];
        v[i] = 1.0;
        EmbeddingVector::new(v).unwrap()
    };
    let reference: Vec<EmbeddingVector> = (0..4).map(basis).collect();
    let b = bert_score(&reference[..2], &reference).map_err(|e| e.to_string())?;
    ensure!(
        close(b.precision, 1.0) && close(b.recall, 0.5) && close(b.f1, 2.0 / 3.0),
        "BERTScore fixture gave {b:?}"
    );
    Ok("rouge-1 2/6, rouge-L 5/6, BERTScore 1/0.5/0.6667".into())
}

// --- 3 ---------------------------------------------------------------

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 64;
    let mut index = VectorIndex::new(dim).unwrap();
    let mut stored = Vec::new();
    for i in 0..100 {
        // f32-representable values, so storage is lossless
        let v: Vec<f64> = (0..dim).map(|_| f64::from(rng.gen_range(-1.0f32..1.0))).collect();
        index.insert(&format!("c{i:03}"), "doc", &EmbeddingVector::new(v.clone()).unwrap()).unwrap();
        stored.push(v);
    }
    for trial in 0..10 {
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut brute: Vec<(f64, String)> = stored
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let dot: f64 = v.iter().zip(&q).map(|(a, b)| a * b).sum();
                let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (dot / (vn * qn), format!("c{i:03}"))
            })
            .collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        let query = EmbeddingVector::new(q).unwrap();
        for k in [1, 5, 20, 100] {
            let got = index.search(&query, k).map_err(|e| e.to_string())?;
            ensure!(got.len() == k, "k={k}: {} results", got.len());
            for (hit, (score, id)) in got.iter().zip(&brute) {
                ensure!(hit.chunk_id == *id, "trial {trial}, k={k}: {} where brute force has {id}", hit.chunk_id);
                ensure!((hit.score - score).abs() < 1e-9, "score drift at {id}");
            }
        }
    }
    let t = within(start.elapsed(), 2.0)?;
    Ok(format!("10 queries x k in {{1,5,20,100}}, {t}"))
}

// --- 4 ---------------------------------------------------------------

fn criterion_4() -> Outcome {
    let fused = rrf_fuse(&[vec!["d1", "d2", "d3"], vec!["d3", "d1", "d2"]], 60.0).map_err(|e| e.to_string())?;
    let order: Vec<&str> = fused.iter().map(|f| f.chunk_id.as_str()).collect();
    ensure!(order == ["d1", "d3", "d2"], "order {order:?}");
    for (f, want) in fused.iter().zip([1.0 / 61.0 + 1.0 / 62.0, 1.0 / 63.0 + 1.0 / 61.0, 1.0 / 62.0 + 1.0 / 63.0]) {
        ensure!((f.score - want).abs() < 1e-6, "{} scored {} not {want}", f.chunk_id, f.score);
    }
    ensure!((fused[0].score - 0.0325224).abs() < 1e-6, "d1 score {}", fused[0].score);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let n = rng.gen_range(3..12);
        let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let lists: Vec<Vec<String>> = (0..rng.gen_range(1..4))
            .map(|_| {
                let mut l = ids.clone();
                l.shuffle(&mut rng);
                l.truncate(rng.gen_range(2..=n));
                l
            })
            .collect();
        let which = rng.gen_range(0..lists.len());
        let pos = rng.gen_range(1..lists[which].len());
        let target = lists[which][pos].clone();
        let mut improved = lists.clone();
        let to = rng.gen_range(0..pos);
        let item = improved[which].remove(pos);
        improved[which].insert(to, item);
        let score = |ls: &[Vec<String>]| {
            rrf_fuse(ls, 60.0).unwrap().into_iter().find(|f| f.chunk_id == target).unwrap().score
        };
        let (before, after) = (score(&lists), score(&improved));
        ensure!(after >= before, "trial {trial}: moving {target} up lowered {before} to {after}");
    }
    Ok("fixture d1/d3/d2 within 1e-6; 100 perturbations monotone".into())
}

// --- 5 ---------------------------------------------------------------

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let s = synthetic(5, 20, &[ShortLabel::Yes, ShortLabel::No], 5);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("qa.jsonl");
    std::fs::write(&path, ragev_core::bench::dataset::qa_dataset_to_jsonl(&s.items).unwrap()).unwrap();
    let items = load_qa_dataset(&path).map_err(|e| e.to_string())?;
    ensure!(items.len() == 20, "loaded {} items", items.len());
    let pipelines: Vec<&str> = PipelineKind::ALL.iter().map(|p| p.code()).collect();
    let f = ExperimentFactors::new(&[("PIP", &pipelines), ("MOD", &["echo", "contradict"])]);
    let runner = Runner::new(f.clone(), BaseSettings::default());
    for cfg in expand_factorial(&f, &[]).unwrap() {
        let rec = runner
            .run(&cfg, &s.collection, &items, &mut std::io::sink())
            .map_err(|e| format!("{}: {e}", cfg.mnemonic))?;
        let m = &rec.aggregate.metrics;
        if cfg.level("MOD") == Some("echo") {
            ensure!(m["accuracy"].mean == 1.0, "{} accuracy {}", cfg.mnemonic, m["accuracy"].mean);
            ensure!(m["rouge1_recall"].mean == 1.0, "{} rouge-1 recall {}", cfg.mnemonic, m["rouge1_recall"].mean);
            ensure!((m["bert_f1"].mean - 1.0).abs() <= 1e-9, "{} BERTScore F1 {}", cfg.mnemonic, m["bert_f1"].mean);
        } else {
            ensure!(m["accuracy"].mean == 0.0, "{} accuracy {}", cfg.mnemonic, m["accuracy"].mean);
        }
    }
    let t = within(start.elapsed(), 10.0)?;
    Ok(format!("5 pipelines x echo/contradict over 20 items, {t}"))
}

// --- 6 ---------------------------------------------------------------

const SEVEN_FACTORS: &str = r##"
norag = ["GPT", "LLA", "NOU"]

[[factor]]
code = "CKw"
levels = ["100", "500"]

[[factor]]
code = "EMB"
levels = ["ADA", "SFR"]

[[factor]]
code = "PIP"
levels = ["VAN", "VEC", "TEX", "HYB", "SHY"]

[[factor]]
code = "#c"
levels = ["3", "10"]

[[factor]]
code = "RER"
levels = ["RR", "NR", "on"]

[[factor]]
code = "RTH"
levels = ["0", "0.01"]

[[factor]]
code = "MOD"
levels = ["GPT", "LLA", "NOU"]
"##;

fn criterion_6() -> Outcome {
    let f = ExperimentFactors::from_toml(SEVEN_FACTORS).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = f.factors.iter().map(|x| x.levels.len()).collect();
    ensure!(counts == [2, 2, 5, 2, 3, 2, 3], "level counts {counts:?}");
    let cfgs = expand_factorial(&f, &f.norag).map_err(|e| e.to_string())?;
    let rag = cfgs.iter().filter(|c| !c.norag).count();
    let norag: Vec<&str> = cfgs.iter().filter(|c| c.norag).map(|c| c.mnemonic.as_str()).collect();
    ensure!(rag == 720, "{rag} factorial configs");
    ensure!(norag == ["NORAG-GPT", "NORAG-LLA", "NORAG-NOU"], "baselines {norag:?}");
    let unique: BTreeSet<&str> = cfgs.iter().map(|c| c.mnemonic.as_str()).collect();
    ensure!(unique.len() == cfgs.len(), "{} unique mnemonics of {}", unique.len(), cfgs.len());
    Ok(format!("720 + 3 configs, first {}, last {}", cfgs[0].mnemonic, cfgs[cfgs.len() - 1].mnemonic))
}

// --- 7 ---------------------------------------------------------------

fn criterion_7() -> Outcome {
    let mut c = Collection::create("shy", CollectionKind::Relevant).unwrap();
    let dominant = "insulin resistance insulin dose insulin pump insulin therapy insulin levels \
                    insulin resistance in adults insulin resistance in children insulin signalling";
    c.add_document(Document::new("a", "Insulin", dominant)).unwrap();
    for (id, text) in [
        ("b", "blood pressure in older adults is often high and needs monitoring over years"),
        ("c", "vaccination schedules for infants differ between countries and regions"),
        ("d", "antibiotic resistance in hospital wards is a growing concern for staff"),
        ("e", "sleep quality affects memory and attention in adolescents and adults"),
    ] {
        c.add_document(Document::new(id, id, text)).unwrap();
    }
    let e = HashedNgramEmbedder::new(256).unwrap();
    let ix = build_indexes(&c, &ChunkingParams::new(6, 0).unwrap(), &e, "hashed:256").map_err(|e| e.to_string())?;
    let params = RetrievalParams { top_k: 3, per_doc_m: 2, ..Default::default() };
    let q = "insulin resistance";
    let hybrid = retrieve(PipelineKind::HybridRRF, q, &ix, &params, &e).map_err(|e| e.to_string())?;
    let hybrid_docs: BTreeSet<&str> = hybrid.items.iter().map(|i| i.hit.doc_id.as_str()).collect();
    ensure!(
        hybrid.items.len() == 3 && hybrid_docs.len() == 1 && hybrid_docs.contains("a"),
        "fixture precondition: hybrid top-3 came from {hybrid_docs:?}"
    );
    let shy = shy_retrieve(q, &ix, &params, &e).map_err(|e| e.to_string())?;
    let groups = shy.groups.as_ref().ok_or("SHy returned no groups")?;
    ensure!(groups.len() == 5, "{} groups", groups.len());
    for g in groups {
        ensure!(!g.items.is_empty() && g.items.len() <= 2, "group {} has {} items", g.doc_id, g.items.len());
    }
    ensure!(groups[0].doc_id == "a", "dominant document not first");
    Ok(format!("hybrid top-3 all from one document; SHy groups {:?}", groups.iter().map(|g| &g.doc_id).collect::<Vec<_>>()))
}

// --- 8 ---------------------------------------------------------------

const DOMINANCE_DOCS: [(&str, &str); 16] = [
    ("d01", "The NCT04280705 trial randomized adults to remdesivir or placebo and measured time to recovery."),
    ("d02", "Vaccination of young children confers durable immune protection against measles outbreaks."),
    ("d03", "Statin therapy lowers circulating cholesterol and reduces cardiovascular events in older patients."),
    ("d04", "Antibiotic stewardship programs curb resistant bacterial infections across hospital wards."),
    ("d05", "The BRCA2 c.5946delT variant raises lifetime breast cancer risk in carriers."),
    ("d06", "Regular aerobic exercise improves insulin sensitivity among overweight adults."),
    ("d07", "Smoking cessation counselling doubles quit rates when combined with nicotine replacement."),
    ("d08", "Sleep deprivation impairs memory consolidation and attention in adolescents."),
    ("d09", "Protocol ISRCTN55582132 evaluated mindfulness sessions for chronic back pain."),
    ("d10", "Dietary sodium restriction decreases systolic blood pressure in hypertensive patients."),
    ("d11", "Trial participants who were adults reported the time of recovery from surgery."),
    ("d12", "Patients in the trial were older adults with chronic pain and high blood pressure."),
    ("d13", "Results of the NCT04280750 trial in adults show outcome results for recovery time."),
    ("d14", "Results of the NCT04208705 study: adults with placebo showed similar results."),
    ("d15", "Carriers of the BRCA1 c.5946delA variant and BRCA2 carriers had similar cancer risk."),
    ("d16", "The ISRCTN55582123 outcome: outcome measures for pain after sessions."),
];

// exact identifiers favour full-text search; inflected paraphrases favour vectors
const DOMINANCE_QUERIES: [(&str, &str); 10] = [
    ("NCT04280705 trial results", "d01"),
    ("BRCA2 c.5946delT carriers", "d05"),
    ("ISRCTN55582132 outcome", "d09"),
    ("vaccinating children immunity", "d02"),
    ("statins lowering cholesterol", "d03"),
    ("antibiotics resistance bacteria hospitals", "d04"),
    ("exercising improves insulin", "d06"),
    ("smokers quitting nicotine", "d07"),
    ("sleeping deprived adolescent memories", "d08"),
    ("salt restriction blood pressure hypertension", "d10"),
];

fn criterion_8() -> Outcome {
    let mut c = Collection::create("dominance", CollectionKind::Relevant).unwrap();
    for (id, text) in DOMINANCE_DOCS {
        c.add_document(Document::new(id, id, text)).unwrap();
    }
    let e = HashedNgramEmbedder::new(256).unwrap();
    let ix = build_indexes(&c, &ChunkingParams::new(64, 0).unwrap(), &e, "hashed:256").map_err(|e| e.to_string())?;
    let params = RetrievalParams { top_k: 2, ..Default::default() };
    let mut recall = BTreeMap::new();
    for kind in [PipelineKind::Vector, PipelineKind::FullText, PipelineKind::HybridRRF] {
        let mut hits = 0;
        for (q, relevant) in DOMINANCE_QUERIES {
            let ctx = retrieve(kind, q, &ix, &params, &e).map_err(|e| e.to_string())?;
            if ctx.items.iter().any(|i| i.hit.doc_id == relevant) {
                hits += 1;
            }
        }
        recall.insert(kind.code(), hits as f64 / DOMINANCE_QUERIES.len() as f64);
    }
    let (v, t, h) = (recall["VEC"], recall["TEX"], recall["HYB"]);
    ensure!(h >= v.max(t), "recall@2 hybrid {h} < max(vector {v}, full-text {t})");
    Ok(format!("recall@2 hybrid {h:.2}, vector {v:.2}, full-text {t:.2}"))
}

// --- 9 ---------------------------------------------------------------

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let s = synthetic(6, 30, &[ShortLabel::Yes, ShortLabel::No, ShortLabel::Maybe], 9);
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut rouge = Vec::new();
    let mut bert = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for level in levels {
        let mut f = ExperimentFactors::new(&[("PIP", &["HYB"]), ("MOD", &["corrupt"])]);
        let mut g = GeneratorConfig::stub(GeneratorKind::CorruptStub);
        g.corrupt_level = level;
        f.models.insert("corrupt".into(), g);
        let runner = Runner::new(f.clone(), BaseSettings::default());
        let cfg = expand_factorial(&f, &[]).unwrap().remove(0);
        let rec = runner.run(&cfg, &s.collection, &s.items, &mut std::io::sink()).map_err(|e| e.to_string())?;
        rouge.push(rec.aggregate.metrics["rouge1_recall"].mean);
        bert.push(rec.aggregate.metrics["bert_f1"].mean);
        for item in &rec.items {
            xs.push(1.0 - level);
            ys.push(item.bert.f1);
        }
    }
    for i in 1..levels.len() {
        ensure!(rouge[i] <= rouge[i - 1], "rouge-1 recall rose at level {}: {rouge:?}", levels[i]);
        ensure!(bert[i] <= bert[i - 1], "BERTScore F1 rose at level {}: {bert:?}", levels[i]);
    }
    let r = pearson(&xs, &ys).map_err(|e| e.to_string())?;
    ensure!(r > 0.9, "Pearson r {r:.4} over {} items", xs.len());
    let t = within(start.elapsed(), 30.0)?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    Ok(format!("rouge-1 recall {}, BERTScore F1 {}, item-level r {r:.4}, {t}", fmt(&rouge), fmt(&bert)))
}

// --- 10 --------------------------------------------------------------

fn sweep_files(dir: &std::path::Path, configs: &[ExperimentConfig], seed: u64) -> Result<Vec<String>, String> {
    let s = synthetic(3, 8, &[ShortLabel::Yes, ShortLabel::No, ShortLabel::Maybe], 10);
    let mut f = ExperimentFactors::new(&[("PIP", &["VEC", "SHY"]), ("MOD", &["corrupt", "grounded"])]);
    f.norag = vec!["corrupt".into()];
    let mut base = BaseSettings { seed, ..Default::default() };
    base.generator.corrupt_level = 0.35;
    let runner = Runner::new(f, base);
    let summary = runner.sweep(configs, &s.collection, &s.items, dir, false, |_, _| {}).map_err(|e| e.to_string())?;
    ensure!(summary.failed.is_empty(), "failed runs {:?}", summary.failed);
    Ok(configs.iter().map(|c| std::fs::read_to_string(run_path(dir, c)).unwrap()).collect())
}

fn criterion_10() -> Outcome {
    let mut f = ExperimentFactors::new(&[("PIP", &["VEC", "SHY"]), ("MOD", &["corrupt", "grounded"])]);
    f.norag = vec!["corrupt".into()];
    let configs = expand_factorial(&f, &f.norag).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = sweep_files(a.path(), &configs, 42)?;
    std::thread::sleep(Duration::from_millis(1100));
    let second = sweep_files(b.path(), &configs, 42)?;
    for ((cfg, x), y) in configs.iter().zip(&first).zip(&second) {
        ensure!(strip_timing(x) == strip_timing(y), "{} differs between sweeps", cfg.mnemonic);
    }
    let c = tempfile::tempdir().unwrap();
    let other_seed = sweep_files(c.path(), &configs, 43)?;
    let differs = first.iter().zip(&other_seed).any(|(x, y)| strip_timing(x) != strip_timing(y));
    ensure!(differs, "a different seed produced identical records");
    Ok(format!("{} run records identical across sweeps apart from timing fields", configs.len()))
}

// --- 11 --------------------------------------------------------------

/// Needs RAGEV_BASE_URL, RAGEV_CHAT_MODEL, RAGEV_LIVE_COLLECTION (a
/// collection path) and RAGEV_LIVE_DATASET (question JSONL).
fn criterion_11() -> Option<Outcome> {
    let vars = ["RAGEV_BASE_URL", "RAGEV_CHAT_MODEL", "RAGEV_LIVE_COLLECTION", "RAGEV_LIVE_DATASET"];
    let values: Vec<String> = vars.iter().filter_map(|v| std::env::var(v).ok()).collect();
    if values.len() < vars.len() {
        return None;
    }
    Some((|| {
        let collection = Collection::load(&values[2]).map_err(|e| e.to_string())?;
        let items: Vec<_> = load_qa_dataset(&values[3])
            .map_err(|e| e.to_string())?
            .into_iter()
            .filter(|i| matches!(i.gold_short, ShortLabel::Yes | ShortLabel::No))
            .collect();
        let mut f = ExperimentFactors::new(&[("PIP", &["VEC", "TEX", "HYB", "SHY"]), ("MOD", &["LIVE"])]);
        f.norag = vec!["LIVE".into()];
        let mut g = GeneratorConfig::stub(GeneratorKind::RemoteChat);
        g.model_name = values[1].clone();
        g.endpoint_url = Some(values[0].clone());
        f.models.insert("LIVE".into(), g);
        let runner = Runner::new(f.clone(), BaseSettings::default());
        let mut acc = BTreeMap::new();
        let mut shy_precision = 0.0;
        for cfg in expand_factorial(&f, &f.norag).unwrap() {
            let rec = runner.run(&cfg, &collection, &items, &mut std::io::sink()).map_err(|e| e.to_string())?;
            if cfg.level("PIP") == Some("SHY") {
                shy_precision = rec.aggregate.binary.macro_precision;
            }
            acc.insert(cfg.mnemonic.clone(), rec.aggregate.binary.accuracy);
        }
        let norag = acc["NORAG-LIVE"];
        for (name, a) in &acc {
            ensure!(name == "NORAG-LIVE" || *a > norag, "{name} accuracy {a:.3} <= baseline {norag:.3}");
        }
        Ok(format!("accuracies {acc:?}; SHy yes/no precision {shy_precision:.3} (reference 0.85)"))
    })())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric oracle equivalence", criterion_1),
        ("hand-computed metric fixtures", criterion_2),
        ("vector search exactness", criterion_3),
        ("RRF fixture and monotonicity", criterion_4),
        ("end-to-end echo round-trip", criterion_5),
        ("factorial count", criterion_6),
        ("SHy horizontal coverage", criterion_7),
        ("hybrid dominance", criterion_8),
        ("degradation monotonicity", criterion_9),
        ("determinism replay", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    match criterion_11() {
        None => println!("SKIP 11 live endpoint comparison: set RAGEV_BASE_URL, RAGEV_CHAT_MODEL, RAGEV_LIVE_COLLECTION, RAGEV_LIVE_DATASET"),
        Some(Ok(detail)) => println!("PASS 11 live endpoint comparison: {detail}"),
        Some(Err(why)) => {
            failed += 1;
            println!("FAIL 11 live endpoint comparison: {why}");
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

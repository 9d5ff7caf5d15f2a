//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs the release pipeline through the `fashionrec` binary on the seeded
//! synthetic corpus and checks the numeric properties against independent
//! oracles. Exits non-zero when any criterion fails. Set
//! `FASHIONREC_POLYVORE_DIR` to a non-disjoint Polyvore Outfits directory to
//! enable the dataset count check.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fashionrec::polyvore::load_corpus_dir;
use fashionrec::{checkpoint, emb, orix};
use fashionrec_core::corpus::{FitbQuestion, Split};
use fashionrec_core::embeddings::{feature_as, EmbeddingStore};
use fashionrec_core::gradcheck::gradcheck;
use fashionrec_core::losses::{focal_loss, ranking_terms};
use fashionrec_core::metrics::auc;
use fashionrec_core::model::{
    forward_cir, forward_cp, item_index_embedding, Batch, Mode, ModelConfig, ModelParams,
};
use fashionrec_core::retrieval::{
    build_index, evaluate_fitb, evaluate_fitb_with_queries, query, FitbScoring, IndexEntry,
    KnnIndex,
};
use fashionrec_core::training::evaluate_cp;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const EPOCHS: &str = "30";
const SEEDS: [u64; 3] = [0, 1, 2];
const TIME_BUDGET: Duration = Duration::from_secs(600);
const MIN_CP_AUC: f64 = 0.90;
const MIN_FITB: f64 = 0.70;
const PRETRAIN_SLACK: f64 = 0.02;
const GRAD_TOL: f64 = 1e-4;
const PERM_TOL: f64 = 1e-5;
const FOCAL_BCE_TOL: f64 = 1e-9;
const RANDOM_FITB_BAND: (f64, f64) = (0.22, 0.28);
const POLYVORE_COUNTS: [(Split, usize); 3] = [
    (Split::Train, 53_306),
    (Split::Test, 10_000),
    (Split::Valid, 5_000),
];

#[derive(Default)]
struct Tally {
    failed: usize,
}

impl Tally {
    fn check(&mut self, ok: bool, name: &str, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }

    fn outcome(&mut self, name: &str, r: Result<(bool, String), String>) {
        match r {
            Ok((ok, detail)) => self.check(ok, name, detail),
            Err(e) => self.check(false, name, format!("error: {e}")),
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(r: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(r);
            x as f32
        })
        .collect()
}

fn unit_gaussian(r: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    let v = gaussian(r, n);
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

// ---------------------------------------------------------------------------
// synthetic pipeline through the binary

fn fashionrec(dir: &Path, args: &[&str]) -> Result<Duration, String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_fashionrec"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`fashionrec {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(start.elapsed())
}

struct SeedRun {
    seed: u64,
    dir: PathBuf,
    cp_secs: f64,
    cir_secs: f64,
    cp_auc: f64,
    fitb_pretrained: f64,
    fitb_cold: f64,
}

struct Data {
    store: EmbeddingStore,
    corpus: fashionrec_core::corpus::Corpus,
}

fn data(dir: &Path) -> Result<Data, String> {
    let corpus = load_corpus_dir(&dir.join("corpus"))
        .map_err(|e| e.to_string())?
        .corpus;
    let store = emb::load_store(&dir.join("corpus/embeddings.jsonl")).map_err(|e| e.to_string())?;
    Ok(Data { store, corpus })
}

fn held_out_fitb(d: &Data, ckpt: &Path) -> Result<f64, String> {
    let params = checkpoint::load(ckpt).map_err(|e| e.to_string())?;
    evaluate_fitb(
        &params,
        &d.store,
        &d.corpus.fitb.test,
        FitbScoring::Distance,
    )
    .map(|r| r.accuracy)
    .map_err(|e| e.to_string())
}

fn pipeline(root: &Path, seed: u64) -> Result<SeedRun, String> {
    let dir = root.join(format!("seed{seed}"));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let s = seed.to_string();
    fashionrec(&dir, &["gen-synth", "--seed", &s, "--out", "corpus"])?;
    let common = ["--corpus", "corpus", "--seed", &s, "--epochs", EPOCHS];
    let with =
        |extra: &[&'static str]| -> Vec<&str> { extra.iter().copied().chain(common).collect() };
    let cp = fashionrec(&dir, &with(&["train-cp", "--out", "cp"]))?;
    let cir = fashionrec(
        &dir,
        &with(&[
            "train-cir",
            "--pretrained",
            "cp/best",
            "--out",
            "cir_pretrained",
        ]),
    )?;
    fashionrec(&dir, &with(&["train-cir", "--out", "cir_cold"]))?;

    let d = data(&dir)?;
    let cp_params = checkpoint::load(&dir.join("cp/best")).map_err(|e| e.to_string())?;
    let cp_auc = evaluate_cp(&cp_params, &d.store, &d.corpus.cp.test, 2.0, 64)
        .map_err(|e| e.to_string())?
        .auc;
    Ok(SeedRun {
        seed,
        cp_secs: cp.as_secs_f64(),
        cir_secs: cir.as_secs_f64(),
        cp_auc,
        fitb_pretrained: held_out_fitb(&d, &dir.join("cir_pretrained/best"))?,
        fitb_cold: held_out_fitb(&d, &dir.join("cir_cold/best"))?,
        dir,
    })
}

fn pretraining_effect(runs: &[SeedRun]) -> (bool, String) {
    let per_seed_ok = runs
        .iter()
        .all(|r| r.fitb_pretrained >= r.fitb_cold - PRETRAIN_SLACK);
    let mean = |f: fn(&SeedRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let (mp, mc) = (mean(|r| r.fitb_pretrained), mean(|r| r.fitb_cold));
    let pairs: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "seed {} {:.4}/{:.4}",
                r.seed, r.fitb_pretrained, r.fitb_cold
            )
        })
        .collect();
    (
        per_seed_ok && mp >= mc,
        format!(
            "pretrained/cold {}; means {mp:.4}/{mc:.4} (each pretrained >= cold - {PRETRAIN_SLACK}, mean pretrained >= mean cold)",
            pairs.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// gradients and invariance

fn gradients() -> Result<(bool, String), String> {
    let mut focal: f64 = 0.0;
    let mut ranking: f64 = 0.0;
    let mut n_tensors = 0;
    for seed in SEEDS {
        let r = gradcheck(seed).map_err(|e| e.to_string())?;
        n_tensors = r.focal.len();
        focal = r.focal.iter().map(|t| t.rel_error).fold(focal, f64::max);
        ranking = r
            .ranking
            .iter()
            .map(|t| t.rel_error)
            .fold(ranking, f64::max);
    }
    Ok((
        focal <= GRAD_TOL && ranking <= GRAD_TOL,
        format!(
            "max relative error focal {focal:.2e}, ranking {ranking:.2e} over {n_tensors} tensors x {} seeds (<= {GRAD_TOL:.0e})",
            SEEDS.len()
        ),
    ))
}

fn permutation_invariance() -> Result<(bool, String), String> {
    let mut r = rng(17);
    let (mut d_cp, mut d_cir): (f64, f64) = (0.0, 0.0);
    let base = ModelConfig::default();
    for trial in 0..200u64 {
        let cfg = ModelConfig {
            seed: trial,
            learnable_placeholder: trial % 2 == 1,
            ..base.clone()
        };
        let p = ModelParams::<f32>::init(&cfg).map_err(|e| e.to_string())?;
        let n = r.random_range(2..=8);
        let items: Vec<Vec<f32>> = (0..n).map(|_| gaussian(&mut r, cfg.input_dim)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        while order.iter().enumerate().all(|(i, &j)| i == j) {
            order.shuffle(&mut r);
        }
        let permuted: Vec<Vec<f32>> = order.iter().map(|&i| items[i].clone()).collect();

        let score = |rows: &[Vec<f32>]| -> Result<f32, String> {
            let batch =
                Batch::from_rows(cfg.input_dim, &[rows.to_vec()]).map_err(|e| e.to_string())?;
            Ok(forward_cp(&p, &batch, &mut Mode::Eval).map_err(|e| e.to_string())?[0])
        };
        d_cp = d_cp.max((score(&items)? - score(&permuted)?).abs() as f64);

        let mut token = gaussian(&mut r, cfg.input_dim);
        token[..cfg.image_dim].iter_mut().for_each(|x| *x = 0.0);
        let t = |rows: &[Vec<f32>]| {
            let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
            forward_cir(&p, &refs, &token, &mut Mode::Eval).map_err(|e| e.to_string())
        };
        let (a, b) = (t(&items)?, t(&permuted)?);
        for (x, y) in a.iter().zip(&b) {
            d_cir = d_cir.max((x - y).abs() as f64);
        }
    }
    Ok((
        d_cp <= PERM_TOL && d_cir <= PERM_TOL,
        format!("200 triples, max |dCP| {d_cp:.2e}, max |dCIR| {d_cir:.2e} (<= {PERM_TOL:.0e})"),
    ))
}

// ---------------------------------------------------------------------------
// loss and metric oracles

fn bce(p: &[f64], y: &[u8]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&p, &y)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
        .sum()
}

fn focal_oracle() -> Result<(bool, String), String> {
    let mut r = rng(23);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.random_range(1..=16);
        // log-uniform over [1e-6, 0.5], reflected half the time
        let p: Vec<f64> = (0..n)
            .map(|_| {
                let x = 10f64.powf(r.random_range(-6.0..(0.5f64).log10()));
                if r.random() {
                    1.0 - x
                } else {
                    x
                }
            })
            .collect();
        let y: Vec<u8> = (0..n).map(|_| r.random_range(0..=1)).collect();
        let got = focal_loss(&p, &y, 0.0).map_err(|e| e.to_string())?.loss;
        worst = worst.max((got - bce(&p, &y)).abs());
    }
    Ok((
        worst <= FOCAL_BCE_TOL,
        format!("1000 cases, max |focal(0) - BCE| {worst:.2e} (<= {FOCAL_BCE_TOL:.0e})"),
    ))
}

/// `(L_all, L_hard)` from plain scalar arithmetic.
fn ranking_oracle(d_pos: f64, d_negs: &[f64], margin: f64) -> (f64, f64) {
    let hinge = |x: f64| if x > 0.0 { x } else { 0.0 };
    let mut sum = 0.0;
    for &d in d_negs {
        sum += hinge(d_pos - d + margin);
    }
    let closest = d_negs.iter().copied().fold(f64::INFINITY, f64::min);
    (sum / d_negs.len() as f64, hinge(d_pos - closest + margin))
}

fn ranking_oracle_check() -> Result<(bool, String), String> {
    let mut r = rng(29);
    let (mut mismatches, mut singles, mut collapse_ok) = (0, 0, true);
    for case in 0..1000 {
        let n = if case % 8 == 0 {
            1
        } else {
            r.random_range(1..=12)
        };
        // a coarse grid half the time, to produce ties and exact hinge zeros
        let draw = |r: &mut ChaCha8Rng| -> f64 {
            if case % 2 == 0 {
                r.random_range(0..=16) as f64 / 4.0
            } else {
                r.random_range(0.0..4.0)
            }
        };
        let d_pos = draw(&mut r);
        let d_negs: Vec<f64> = (0..n).map(|_| draw(&mut r)).collect();
        let margin = if case % 2 == 0 {
            r.random_range(0..=4) as f64 / 4.0
        } else {
            r.random_range(0.0..1.0)
        };
        let got = ranking_terms(d_pos, &d_negs, margin).map_err(|e| e.to_string())?;
        let (all, hard) = ranking_oracle(d_pos, &d_negs, margin);
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
        if !(same(got.all, all) && same(got.hard, hard) && same(got.total, all + hard)) {
            mismatches += 1;
        }
        if n == 1 {
            singles += 1;
            collapse_ok &= same(got.all, got.hard);
        }
    }
    Ok((
        mismatches == 0 && collapse_ok && singles > 0,
        format!("1000 cases, {mismatches} mismatches; |N|=1 collapse L_all == L_hard on {singles} cases: {collapse_ok}"),
    ))
}

fn auc_oracle() -> Result<(bool, String), String> {
    let mut r = rng(31);
    let (mut mismatches, mut with_ties) = (0, 0);
    for _ in 0..500 {
        let n = r.random_range(2..=50);
        let levels = r.random_range(1..=10);
        let scores: Vec<f64> = (0..n)
            .map(|_| r.random_range(0..=levels) as f64 / levels as f64)
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..=1)).collect();
        labels[0] = 1;
        labels[1] = 0;
        labels.shuffle(&mut r);

        let mut twice: u64 = 0;
        for i in (0..n).filter(|&i| labels[i] == 1) {
            for j in (0..n).filter(|&j| labels[j] == 0) {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
        let expected = twice as f64 / (2.0 * n_pos * (n as f64 - n_pos));
        let got = auc(&scores, &labels).map_err(|e| e.to_string())?;
        if got.to_bits() != expected.to_bits() {
            mismatches += 1;
        }
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            with_ties += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("500 instances ({with_ties} with ties), {mismatches} mismatches"),
    ))
}

fn query_oracle() -> Result<(bool, String), String> {
    let mut r = rng(37);
    let dim = 16;
    let categories = ["tops", "bottoms", "shoes", "bags", "jewelry"];
    let entries: Vec<IndexEntry> = (0..1000)
        .map(|i| IndexEntry {
            item_id: format!("item{:04}", (i * 7919) % 1000),
            vector: unit_gaussian(&mut r, dim),
            category: Some(categories[r.random_range(0..categories.len())].to_string()),
        })
        .collect();
    let index = KnnIndex::from_entries(dim, entries.clone()).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    for _ in 0..100 {
        let t = unit_gaussian(&mut r, dim);
        let k = r.random_range(1..=50);
        let filter =
            (r.random::<f64>() < 0.3).then(|| categories[r.random_range(0..categories.len())]);

        let mut scan: Vec<(f32, &str)> = entries
            .iter()
            .filter(|e| filter.is_none_or(|c| e.category.as_deref() == Some(c)))
            .map(|e| {
                let mut d = 0.0f32;
                for (a, b) in t.iter().zip(&e.vector) {
                    d += (a - b) * (a - b);
                }
                (d, e.item_id.as_str())
            })
            .collect();
        let pool = scan.len();
        scan.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        scan.truncate(k);

        let got = query(&index, &t, k, filter).map_err(|e| e.to_string())?;
        let same = got.hits.len() == scan.len()
            && got
                .hits
                .iter()
                .zip(&scan)
                .all(|(h, (d, id))| h.item_id == *id && h.distance.to_bits() == d.to_bits())
            && got.pool_exhausted == (pool < k);
        if !same {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("100 queries over 1000 items, {mismatches} mismatches"),
    ))
}

// ---------------------------------------------------------------------------
// FITB oracle

fn fitb_oracle(run: &SeedRun) -> Result<(bool, String), String> {
    let d = data(&run.dir)?;
    let params =
        checkpoint::load(&run.dir.join("cir_pretrained/best")).map_err(|e| e.to_string())?;
    let questions: Vec<FitbQuestion> = Split::ALL
        .iter()
        .flat_map(|&s| d.corpus.fitb.get(s).to_vec())
        .collect();
    let exact = evaluate_fitb_with_queries(&params, &d.store, &questions, |_, q| {
        item_index_embedding(&params, &feature_as::<f32>(&d.store, q.answer())?)
    })
    .map_err(|e| e.to_string())?
    .accuracy;

    let mut r = rng(41);
    let ids: Vec<String> = d.corpus.items.keys().cloned().collect();
    let random_questions: Vec<FitbQuestion> = (0..10_000)
        .map(|_| {
            let mut picked: Vec<String> = ids.choose_multiple(&mut r, 7).cloned().collect();
            let candidates = picked.split_off(3);
            let blank = r.random_range(0..=picked.len());
            FitbQuestion::new(picked, blank, candidates, r.random_range(0..4)).unwrap()
        })
        .collect();
    let index_dim = params.config().index_dim;
    let random = evaluate_fitb_with_queries(&params, &d.store, &random_questions, |_, _| {
        Ok(unit_gaussian(&mut r, index_dim))
    })
    .map_err(|e| e.to_string())?
    .accuracy;
    let (lo, hi) = RANDOM_FITB_BAND;
    Ok((
        exact == 1.0 && (lo..=hi).contains(&random),
        format!(
            "answer embedding as t: {exact:.4} on {} questions (== 1.0); random unit t: {random:.4} on 10000 questions (in [{lo}, {hi}])",
            questions.len()
        ),
    ))
}

// ---------------------------------------------------------------------------
// formats

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn format_round_trips(run: &SeedRun, scratch: &Path) -> Result<(bool, String), String> {
    let e = |x: fashionrec::Error| x.to_string();
    let d = data(&run.dir)?;

    let emb_path = scratch.join("copy.jsonl");
    emb::save(&d.store, &emb_path).map_err(e)?;
    let store = emb::load_store(&emb_path).map_err(e)?;
    let emb_ok = store.len() == d.store.len()
        && store.iter().zip(d.store.iter()).all(|((ia, a), (ib, b))| {
            ia == ib && bits(&a.image) == bits(&b.image) && bits(&a.text) == bits(&b.text)
        });

    let params = checkpoint::load(&run.dir.join("cir_pretrained/best")).map_err(e)?;
    let ckpt = scratch.join("ckpt");
    checkpoint::save(&params, &ckpt).map_err(e)?;
    let back = checkpoint::load(&ckpt).map_err(e)?;
    let ckpt_ok = back.config() == params.config() && bits(back.data()) == bits(params.data());

    let ids: Vec<String> = d.corpus.items.keys().cloned().collect();
    let index = build_index(&params, &d.store, Some(&d.corpus), &ids).map_err(|x| x.to_string())?;
    let orix_path = scratch.join("index.orix");
    orix::save(&index, &orix_path).map_err(e)?;
    let loaded = orix::load(&orix_path).map_err(e)?;
    let orix_ok = loaded.dim() == index.dim()
        && loaded.len() == index.len()
        && loaded.entries().iter().zip(index.entries()).all(|(a, b)| {
            a.item_id == b.item_id && a.category == b.category && bits(&a.vector) == bits(&b.vector)
        });

    Ok((
        emb_ok && ckpt_ok && orix_ok,
        format!(
            "emb-v1 ({} items): {emb_ok}; checkpoint ({} values): {ckpt_ok}; ORIX ({} entries): {orix_ok}",
            d.store.len(),
            params.data().len(),
            index.len()
        ),
    ))
}

fn polyvore_counts(t: &mut Tally) {
    let name = "Polyvore non-disjoint outfit counts";
    let Some(dir) = std::env::var_os("FASHIONREC_POLYVORE_DIR").map(PathBuf::from) else {
        println!("SKIP {name}: FASHIONREC_POLYVORE_DIR not set, dataset absent");
        return;
    };
    let result = (|| -> Result<(bool, String), String> {
        load_corpus_dir(&dir).map_err(|e| e.to_string())?;
        let mut ok = true;
        let mut found = Vec::new();
        for (split, expected) in POLYVORE_COUNTS {
            let path = dir.join(format!("{}.json", split.name()));
            let text =
                std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let outfits: Vec<serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| e.to_string())?;
            ok &= outfits.len() == expected;
            found.push(format!("{} {}/{expected}", split.name(), outfits.len()));
        }
        Ok((ok, found.join(", ")))
    })();
    t.outcome(name, result);
}

fn main() {
    let mut t = Tally::default();
    println!(
        "N/A  full-scale reference results (AUC 0.95, FITB 69.24%): need the full Polyvore Outfits data, CLIP features and GPU training; not reproduced here, covered by the criteria below"
    );

    let scratch = tempfile::tempdir().expect("temp dir");
    let mut runs = Vec::new();
    for seed in SEEDS {
        match pipeline(scratch.path(), seed) {
            Ok(r) => runs.push(r),
            Err(e) => {
                t.check(false, &format!("synthetic pipeline seed {seed}"), e);
            }
        }
    }
    let budget = TIME_BUDGET.as_secs_f64();
    match runs.iter().find(|r| r.seed == 0) {
        Some(r) => {
            t.check(
                r.cp_auc >= MIN_CP_AUC && r.cp_secs <= budget,
                "synthetic CP",
                format!(
                    "held-out AUC {:.4} (>= {MIN_CP_AUC}) after {EPOCHS} epochs in {:.1} s (<= {budget} s)",
                    r.cp_auc, r.cp_secs
                ),
            );
            t.check(
                r.fitb_pretrained >= MIN_FITB && r.cir_secs <= budget,
                "synthetic FITB",
                format!(
                    "held-out accuracy {:.4} (>= {MIN_FITB}, 4 candidates) from the CP checkpoint in {:.1} s (<= {budget} s)",
                    r.fitb_pretrained, r.cir_secs
                ),
            );
        }
        None => {
            t.check(false, "synthetic CP", "seed 0 pipeline did not run".into());
            t.check(
                false,
                "synthetic FITB",
                "seed 0 pipeline did not run".into(),
            );
        }
    }
    if runs.len() == SEEDS.len() {
        let (ok, detail) = pretraining_effect(&runs);
        t.check(ok, "pretraining effect", detail);
    } else {
        t.check(
            false,
            "pretraining effect",
            "not every seed completed".into(),
        );
    }

    t.outcome("gradcheck", gradients());
    t.outcome("permutation invariance", permutation_invariance());
    t.outcome("loss oracle: focal(gamma=0) vs BCE", focal_oracle());
    t.outcome("loss oracle: ranking loss", ranking_oracle_check());
    t.outcome("metric oracle: AUC vs pairwise count", auc_oracle());
    t.outcome("metric oracle: query vs linear scan", query_oracle());
    match runs.first() {
        Some(r) => {
            t.outcome("FITB oracle", fitb_oracle(r));
            t.outcome("format round-trips", format_round_trips(r, scratch.path()));
        }
        None => {
            t.check(false, "FITB oracle", "no trained checkpoint".into());
            t.check(false, "format round-trips", "no trained checkpoint".into());
        }
    }
    polyvore_counts(&mut t);

    if t.failed > 0 {
        println!("{} criterion/criteria failed", t.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}

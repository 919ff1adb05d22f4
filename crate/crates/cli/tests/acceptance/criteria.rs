//! Library-level criteria.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use aqa_core::answerability::{
    accuracy_of, build_classifier, train_classifier, LabeledData, TrainConfig, DEFAULT_DROPOUT, DEFAULT_HIDDEN,
};
use aqa_core::corpus::{derive_gold_iob, load_dataset, QaSample, Strictness};
use aqa_core::evaluate::{perplexity, pr_curve, squad_v2, token_f1};
use aqa_core::features::{fit_bow_vocab, FeatureSet, Featurizer};
use aqa_core::interpret::{attack_report, integrated_gradients as ig, LinearModel, ScalarModel, SubstitutionMap};
use aqa_core::neural::{
    bce_with_logits, grad_check, log_softmax_rows, seeded_rng, weighted_cross_entropy, BiLstm, Dense, Mode, Parameters,
    SeededRng,
};
use aqa_core::tagger::{
    decode, evaluate_examples, exhaustive_best, extract_spans, segment_sample, sequence_score, train_tagger,
    LegalityConfig, TaggerConfig, TaggerExample, TaggerModel, TaggerTrainConfig,
};
use aqa_core::tokenization::word_tokenize;
use aqa_core::{IobLabel, Language};
use ndarray::{Array, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{ensure, within, Verdict};

const EPS: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-5;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn uniform(rng: &mut SeededRng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

fn normal(rng: &mut SeededRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Max relative error of one check, failing on anything at or above the tolerance.
fn check(name: &str, f: impl Fn(&[f64]) -> f64, params: &[f64], analytic: &[f64]) -> Result<f64, String> {
    let r = grad_check(f, params, analytic, EPS).map_err(|e| format!("{name}: {e}"))?;
    ensure(
        r.max_rel_error < GRAD_TOL,
        format!(
            "{name}: relative error {:.2e} at index {} (analytic {:.6e}, numeric {:.6e})",
            r.max_rel_error, r.worst_index, r.analytic, r.numeric
        ),
    )?;
    Ok(r.max_rel_error)
}

pub fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded_rng(11);
    let mut worst: f64 = 0.0;

    // dense: objective sum(y * r)
    let dense = Dense::glorot(5, 3, &mut rng);
    let x = uniform(&mut rng, (4, 5));
    let r = uniform(&mut rng, (4, 3));
    let (dx, g) = dense.backward(x.view(), r.view()).map_err(|e| e.to_string())?;
    let objective = |d: &Dense, x: &Array2<f64>| (d.forward(x.view()).unwrap() * &r).sum();
    worst = worst.max(check(
        "dense params",
        |p| {
            let mut d = dense.clone();
            d.assign_flat(p).unwrap();
            objective(&d, &x)
        },
        &dense.flatten(),
        &g.flatten(),
    )?);
    worst = worst.max(check(
        "dense input",
        |p| objective(&dense, &Array2::from_shape_vec(x.raw_dim(), p.to_vec()).unwrap()),
        x.as_slice().unwrap(),
        dx.as_slice().unwrap(),
    )?);

    // BiLSTM with a fixed dropout mask between layers
    let (t, d, h) = (4, 3, 2);
    let lstm = BiLstm::new(d, h, 2, 0.3, &mut rng);
    let x = uniform(&mut rng, (t, d));
    let h0 = uniform(&mut rng, (4, h));
    let c0 = uniform(&mut rng, (4, h));
    let r = uniform(&mut rng, (t, 2 * h));
    let run = |m: &BiLstm, x: &Array2<f64>, h0: &Array2<f64>, c0: &Array2<f64>| {
        let (out, _) = m
            .forward(x.view(), h0.view(), c0.view(), Mode::Train, &mut seeded_rng(5))
            .unwrap();
        (out * &r).sum()
    };
    let (_, cache) = lstm
        .forward(x.view(), h0.view(), c0.view(), Mode::Train, &mut seeded_rng(5))
        .map_err(|e| e.to_string())?;
    let g = lstm.backward(&cache, r.view()).map_err(|e| e.to_string())?;
    worst = worst.max(check(
        "bilstm params",
        |p| {
            let mut m = lstm.clone();
            m.assign_flat(p).unwrap();
            run(&m, &x, &h0, &c0)
        },
        &lstm.flatten(),
        &g.params.flatten(),
    )?);
    let state = |p: &[f64]| Array2::from_shape_vec((4, h), p.to_vec()).unwrap();
    worst = worst.max(check(
        "bilstm input",
        |p| run(&lstm, &Array::from_shape_vec((t, d), p.to_vec()).unwrap(), &h0, &c0),
        x.as_slice().unwrap(),
        g.d_input.as_slice().unwrap(),
    )?);
    worst = worst.max(check(
        "bilstm h0",
        |p| run(&lstm, &x, &state(p), &c0),
        h0.as_slice().unwrap(),
        g.d_h0.as_slice().unwrap(),
    )?);
    worst = worst.max(check(
        "bilstm c0",
        |p| run(&lstm, &x, &h0, &state(p)),
        c0.as_slice().unwrap(),
        g.d_c0.as_slice().unwrap(),
    )?);

    // weighted cross-entropy with the O-discounting weights
    let logits = uniform(&mut rng, (6, 3)) * 3.0;
    let targets = [0, 1, 2, 0, 0, 2];
    let weights = [0.01, 1.0, 1.0];
    let (_, dl) = weighted_cross_entropy(logits.view(), &targets, &weights).map_err(|e| e.to_string())?;
    worst = worst.max(check(
        "weighted CE",
        |p| {
            let l = Array2::from_shape_vec((6, 3), p.to_vec()).unwrap();
            weighted_cross_entropy(l.view(), &targets, &weights).unwrap().0
        },
        logits.as_slice().unwrap(),
        dl.as_slice().unwrap(),
    )?);

    // full classifier with dropout masks
    let model = build_classifier(6, (8, 4), DEFAULT_DROPOUT, 3).map_err(|e| e.to_string())?;
    let x = uniform(&mut rng, (5, 6));
    let y = Array1::from(vec![1.0, 0.0, 0.0, 1.0, 1.0]);
    let (logits, cache) = model
        .forward(x.view(), Mode::Train, &mut seeded_rng(9))
        .map_err(|e| e.to_string())?;
    let (_, dl) = bce_with_logits(&logits, &y).map_err(|e| e.to_string())?;
    let (g, _) = model.backward(&cache, dl.view()).map_err(|e| e.to_string())?;
    worst = worst.max(check(
        "classifier params",
        |p| {
            let mut m = model.clone();
            m.assign_flat(p).unwrap();
            let (l, _) = m.forward(x.view(), Mode::Train, &mut seeded_rng(9)).unwrap();
            bce_with_logits(&l, &y).unwrap().0
        },
        &model.flatten(),
        &g.flatten(),
    )?);
    let point = [0.4, -0.3, 0.8, 0.1, -1.2, 0.5];
    let (_, gx) = model.proba_and_input_grad(&point).map_err(|e| e.to_string())?;
    worst = worst.max(check(
        "classifier input",
        |p| model.predict_proba(p).unwrap(),
        &point,
        &gx,
    )?);

    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("9 checks, max relative error {worst:.2e}"))
}

fn argmax_labels(lp: &Array2<f64>) -> Vec<IobLabel> {
    lp.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..3 {
                if r[j] > r[best] {
                    best = j;
                }
            }
            IobLabel::ALL[best]
        })
        .collect()
}

pub fn decoding_oracle() -> Verdict {
    const TRIALS: usize = 1000;
    let start = Instant::now();
    let mut rng = seeded_rng(2024);
    let all = LegalityConfig::all();
    let off = LegalityConfig::default();
    let (mut exact, mut argmax_ok) = (0, 0);
    for _ in 0..TRIALS {
        let t = rng.random_range(1..=8);
        let lp = log_softmax_rows((uniform(&mut rng, (t, 3)) * 3.0).view());
        let (_, best) = exhaustive_best(lp.view(), &all).ok_or("no legal sequence")?;
        let seq = decode(lp.view(), 3, &all).map_err(|e| e.to_string())?;
        let score = sequence_score(lp.view(), &seq);
        ensure(
            score <= best + 1e-12,
            format!("beam scored {score} above the optimum {best}"),
        )?;
        if (score - best).abs() <= 1e-12 {
            exact += 1;
        }
        let want = argmax_labels(&lp);
        if [1, 3]
            .iter()
            .all(|&k| decode(lp.view(), k, &off).map(|s| s == want).unwrap_or(false))
        {
            argmax_ok += 1;
        }
    }
    let rate = exact as f64 / TRIALS as f64;
    let summary = format!(
        "k=3 with a,b,c optimal on {exact}/{TRIALS} ({:.1}%, need 95%), never above optimum; unconstrained = argmax on {argmax_ok}/{TRIALS}",
        100.0 * rate
    );
    ensure(argmax_ok == TRIALS, summary.clone())?;
    ensure(rate >= 0.95, summary.clone())?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(summary)
}

fn random_labels(rng: &mut SeededRng, t: usize) -> Vec<IobLabel> {
    (0..t).map(|_| IobLabel::ALL[rng.random_range(0..3)]).collect()
}

/// Random answerable samples: word contexts with an answer of one to four
/// words, sometimes starting or ending inside a word.
fn random_answerable(rng: &mut SeededRng, n: usize) -> Vec<QaSample> {
    const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "äiti", "kuu", "river", "sea"];
    (0..n)
        .map(|i| {
            let len = rng.random_range(2..30);
            let words: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            let context = words.join(" ");
            let first = rng.random_range(0..len);
            let last = (first + rng.random_range(0..4)).min(len - 1);
            let word_start: usize = words[..first].iter().map(|w| w.chars().count() + 1).sum();
            let word_end: usize = words[..=last].iter().map(|w| w.chars().count() + 1).sum::<usize>() - 1;
            let start = word_start + rng.random_range(0..2);
            let end = (word_end - rng.random_range(0..2)).max(start + 1);
            let text: String = context.chars().skip(start).take(end - start).collect();
            QaSample {
                id: format!("r{i}"),
                language: Language::En,
                question_text: "which?".into(),
                context_text: context,
                answer: Some(aqa_core::Answer { text, start }),
            }
        })
        .collect()
}

pub fn span_algebra() -> Verdict {
    let mut rng = seeded_rng(77);
    let mut n_spans = 0;
    for _ in 0..10_000 {
        let t = rng.random_range(0..25);
        let labels = random_labels(&mut rng, t);
        let context = vec!["w"; t].join(" ");
        let tokens = word_tokenize(&context, Language::En);
        let lp = log_softmax_rows(uniform(&mut rng, (t, 3)).view());
        let spans = extract_spans(&labels, lp.view(), &tokens, &context, 0).map_err(|e| e.to_string())?;
        for s in &spans {
            ensure(
                labels[s.token_start] == IobLabel::B,
                format!("span {s:?} does not start with B"),
            )?;
            ensure(
                labels[s.token_start..=s.token_end].iter().all(|&l| l != IobLabel::O),
                format!("span {s:?} contains O in {labels:?}"),
            )?;
        }
        n_spans += spans.len();
    }

    let langs: HashSet<Language> = [Language::En, Language::Fi, Language::Ja].into_iter().collect();
    let fixture = load_dataset(fixtures().join("tiny.jsonl"), &langs, Strictness::Abort).map_err(|e| e.to_string())?;
    let mut samples: Vec<QaSample> = fixture.into_iter().filter(QaSample::is_answerable).collect();
    let n_fixture = samples.len();
    samples.extend(random_answerable(&mut rng, 500));
    for s in &samples {
        let tokens = word_tokenize(&s.context_text, s.language);
        let gold = derive_gold_iob(s, &tokens).map_err(|e| e.to_string())?;
        let lp = Array2::from_elem((tokens.len(), 3), (1.0f64 / 3.0).ln());
        let spans = extract_spans(&gold, lp.view(), &tokens, &s.context_text, 0).map_err(|e| e.to_string())?;
        let first = gold.iter().position(|&l| l == IobLabel::B).ok_or("gold without B")?;
        let last = gold.iter().rposition(|&l| l != IobLabel::O).unwrap_or(first);
        ensure(
            spans.len() == 1 && (spans[0].token_start, spans[0].token_end) == (first, last),
            format!("{}: recovered {spans:?}, gold tokens {first}..={last}", s.id),
        )?;
        let a = s.answer.as_ref().unwrap();
        ensure(
            spans[0].char_start <= a.start && spans[0].char_end >= a.end(),
            format!("{}: span does not cover the answer", s.id),
        )?;
    }
    Ok(format!(
        "10000 random sequences ({n_spans} spans) well formed; gold round trip exact on {} samples ({n_fixture} fixture)",
        samples.len()
    ))
}

pub fn segmenting() -> Verdict {
    let mut rng = seeded_rng(5);
    for _ in 0..5000 {
        let q = rng.random_range(1..200);
        let n = rng.random_range(0..5000);
        let segs = segment_sample("s", q, n, 512, 128).map_err(|e| e.to_string())?;
        let covered = segs.first().map(|s| s.ctx_start) == Some(0) && segs.last().map(|s| s.ctx_end) == Some(n);
        ensure(covered, format!("Q={q}, n={n}: segments do not span the context"))?;
        for pair in segs.windows(2) {
            ensure(
                pair[0].ctx_end.saturating_sub(pair[1].ctx_start) == 128,
                format!("Q={q}, n={n}: overlap of {:?} and {:?}", pair[0], pair[1]),
            )?;
        }
        for s in &segs {
            ensure(
                s.question_tokens + s.context_len() <= 512,
                format!("Q={q}, n={n}: {s:?} exceeds the window"),
            )?;
        }
    }
    let worked: Vec<(usize, usize)> = segment_sample("w", 12, 1000, 512, 128)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|s| (s.ctx_start, s.ctx_end))
        .collect();
    ensure(
        worked == [(0, 500), (372, 872), (744, 1000)],
        format!("worked example gave {worked:?}"),
    )?;
    Ok(
        "5000 random (Q, n) pairs covered with 128-token overlaps; Q=12, n=1000 gives [0,500) [372,872) [744,1000)"
            .into(),
    )
}

pub fn metric_goldens() -> Verdict {
    let ap = pr_curve(&[0.9, 0.8, 0.3], &[true, false, true])
        .map_err(|e| e.to_string())?
        .average_precision;
    ensure((ap - 5.0 / 6.0).abs() < 1e-6, format!("AP {ap}"))?;
    let sq = squad_v2(Some("in Helsinki"), Some("Helsinki"), Language::En);
    ensure(
        (sq.f1 - 2.0 / 3.0).abs() < 1e-4 && sq.exact == 0.0,
        format!("squad {sq:?}"),
    )?;
    use IobLabel::{B, I, O};
    let f1 = token_f1(&[O, O, B, I], &[O; 4]).map_err(|e| e.to_string())?.macro_f1;
    ensure((f1 - 0.2222).abs() < 1e-4, format!("macro F1 {f1}"))?;
    let ppl = perplexity(&[10f64.ln(); 50]).map_err(|e| e.to_string())?;
    ensure((ppl - 10.0).abs() < 1e-9, format!("perplexity {ppl}"))?;
    Ok(format!(
        "AP {ap:.4}, SQuAD F1 {:.4} EM {}, macro F1 {f1:.4}, perplexity {ppl}",
        sq.f1, sq.exact
    ))
}

pub fn integrated_gradients() -> Verdict {
    let mut rng = seeded_rng(31);
    let dim = 50;
    let linear = LinearModel {
        weights: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
        intercept: 0.3,
    };
    let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = ig(&linear, "lin", &x, &b, 256).map_err(|e| e.to_string())?;
    let lin_err = a
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - linear.weights[i] * (x[i] - b[i])).abs())
        .fold(0.0, f64::max);
    ensure(lin_err < 1e-9, format!("linear attribution error {lin_err:.2e}"))?;

    let mlp = build_classifier(100, DEFAULT_HIDDEN, DEFAULT_DROPOUT, 17).map_err(|e| e.to_string())?;
    let zero = vec![0.0; 100];
    let mut worst_ratio: f64 = 0.0;
    for i in 0..20 {
        let x: Vec<f64> = (0..100).map(|_| 2.0 * normal(&mut rng)).collect();
        let a = ig(&mlp, &format!("x{i}"), &x, &zero, 256).map_err(|e| e.to_string())?;
        let delta = (a.output - a.baseline_output).abs();
        ensure(
            a.completeness_gap <= 1e-6f64.max(0.01 * delta),
            format!("sample {i}: gap {:.2e} for |dF| {delta:.2e}", a.completeness_gap),
        )?;
        worst_ratio = worst_ratio.max(a.completeness_gap / delta.max(1e-12));
    }

    // identity attack through the real bag-of-words featurizer
    let langs: HashSet<Language> = [Language::En, Language::Fi, Language::Ja].into_iter().collect();
    let samples = load_dataset(fixtures().join("tiny.jsonl"), &langs, Strictness::Abort).map_err(|e| e.to_string())?;
    let vocab = fit_bow_vocab(&samples, 1000);
    let featurizer = Featurizer::new(FeatureSet::Bow).with_vocab(&vocab);
    let mut clf = build_classifier(vocab.len(), (16, 8), DEFAULT_DROPOUT, 2).map_err(|e| e.to_string())?;
    // a confident classifier satisfies the attack's precondition on every sample
    clf.layer3.bias[0] = 8.0;
    let report = attack_report(&clf, &featurizer, &samples, &SubstitutionMap::identity()).map_err(|e| e.to_string())?;
    ensure(
        report.before == report.after && report.flip_count == 0,
        "identity mapping changed confidences",
    )?;
    ensure(clf.input_dim() == vocab.len(), "dimension")?;
    Ok(format!(
        "linear error {lin_err:.1e}; 20 MLP inputs with gap/|dF| at most {:.3}%; identity attack unchanged on {} samples",
        100.0 * worst_ratio,
        report.n
    ))
}

/// Linearly separable points labelled by the sign of a random projection.
fn separable(rng: &mut SeededRng, n: usize, d: usize) -> LabeledData {
    let w: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    while rows.len() < n {
        let x: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        // a small margin keeps the classes strictly apart
        if s.abs() < 0.1 {
            continue;
        }
        y.push(s > 0.0);
        rows.push(x);
    }
    LabeledData::from_rows(&rows, y).unwrap()
}

/// Sequences of `t` tokens with one answer of one or two tokens; answer
/// tokens are shifted by `signal` along a label-specific axis.
fn tagging_task(n: usize, t: usize, d: usize, signal: f64, seed: u64) -> Vec<TaggerExample> {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|i| {
            let start = rng.random_range(0..t - 2);
            let len = rng.random_range(1..=2);
            let mut gold = vec![IobLabel::O; t];
            gold[start] = IobLabel::B;
            for g in gold.iter_mut().skip(start + 1).take(len - 1) {
                *g = IobLabel::I;
            }
            let tokens = Array2::from_shape_fn((t, d), |(r, c)| {
                let base = 0.5 * normal(&mut rng);
                match (gold[r], c) {
                    (IobLabel::B, 0) | (IobLabel::I, 1) => base + signal,
                    _ => base,
                }
            });
            TaggerExample {
                id: format!("t{i}"),
                segment: 0,
                pooled: Array1::zeros(d),
                tokens,
                gold,
            }
        })
        .collect()
}

fn tagger_f1(train: &[TaggerExample], val: &[TaggerExample], weights: [f64; 3]) -> Result<f64, String> {
    let cfg = TaggerConfig {
        hidden: 16,
        layers: 2,
        dropout: 0.1,
    };
    let model = TaggerModel::seeded(train[0].tokens.ncols(), &cfg, 3).map_err(|e| e.to_string())?;
    let train_cfg = TaggerTrainConfig {
        epochs: 10,
        batch_size: 16,
        lr_start: 5e-3,
        lr_end: 5e-5,
        class_weights: weights,
        seed: 3,
        ..TaggerTrainConfig::default()
    };
    let (model, _) = train_tagger(model, train, val, &train_cfg).map_err(|e| e.to_string())?;
    let (f1, _, _) = evaluate_examples(&model, val, 1, &LegalityConfig::default()).map_err(|e| e.to_string())?;
    Ok(f1)
}

pub fn training_smoke() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded_rng(8);

    let data = separable(&mut rng, 500, 20);
    let (train, val) = data.split(0.8, 1);
    let model = build_classifier(20, DEFAULT_HIDDEN, DEFAULT_DROPOUT, 4).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        batch_size: 32,
        ..TrainConfig::default()
    };
    let (best, hist) = train_classifier(model, &train, &val, &cfg).map_err(|e| e.to_string())?;
    let acc = accuracy_of(&best, &val).map_err(|e| e.to_string())?;
    ensure(
        acc >= 0.95 && hist.epochs.len() <= 20,
        format!("separable task reached {acc:.3} in {} epochs", hist.epochs.len()),
    )?;

    let frozen = build_classifier(20, DEFAULT_HIDDEN, DEFAULT_DROPOUT, 4).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        lr: 0.0,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let (_, stall) = train_classifier(frozen, &train, &val, &cfg).map_err(|e| e.to_string())?;
    ensure(
        stall.epochs.len() == 6 && stall.stopped_early,
        format!("lr=0 ran {} epochs", stall.epochs.len()),
    )?;

    let train = tagging_task(200, 150, 6, 5.0, 1);
    let val = tagging_task(50, 150, 6, 5.0, 2);
    let labels: Vec<IobLabel> = train.iter().chain(&val).flat_map(|e| e.gold.iter().copied()).collect();
    let o_share = labels.iter().filter(|&&l| l == IobLabel::O).count() as f64 / labels.len() as f64;
    ensure(
        o_share >= 0.99,
        format!("tagging data is only {:.2}% O", 100.0 * o_share),
    )?;
    let weighted = tagger_f1(&train, &val, [0.01, 1.0, 1.0])?;
    let uniform = tagger_f1(&train, &val, [1.0, 1.0, 1.0])?;
    let summary = format!(
        "separable acc {acc:.3}; lr=0 stops after {} epochs; tagger F1 {weighted:.3} with (0.01,1,1), {uniform:.3} with (1,1,1) on {:.2}% O",
        stall.epochs.len(),
        100.0 * o_share
    );
    ensure(weighted >= 0.9, format!("weighted tagger below 0.9: {summary}"))?;
    ensure(
        uniform <= 0.35,
        format!("unweighted tagger did not collapse: {summary}"),
    )?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(summary)
}

#[allow(dead_code)]
fn assert_scalar_model<M: ScalarModel>(_: &M) {}

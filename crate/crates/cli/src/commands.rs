//! One function per subcommand.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use aqa_core::answerability::{
    build_classifier, classify, train_classifier, AnswerabilityModel, LabeledData, TrainConfig, Verdict,
    DEFAULT_DROPOUT, DEFAULT_HIDDEN,
};
use aqa_core::corpus::{token_position_stats, QaSample, Split};
use aqa_core::evaluate::{
    crosslingual_report, pr_curve, token_f1, write_pr_csv, EvalError, EvalSet, QaSystem, RandomGuess,
};
use aqa_core::features::{fit_bow_vocab, ContextVectorSet, FeatureVector, Featurize, Featurizer};
use aqa_core::interpret::{
    attack_report, integrated_gradients, salient_features, write_histogram_csv, Attribution, AttributionRecord,
    SubstitutionMap, HISTOGRAM_BINS,
};
use aqa_core::neural::{seeded_rng, AdamConfig};
use aqa_core::tagger::{
    answer, build_examples, evaluate_examples, train_tagger, write_predictions, LegalityConfig, TaggerConfig,
    TaggerExample, TaggerModel, TaggerTrainConfig,
};
use aqa_core::IobLabel;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde_json::json;

use crate::resources::{
    create, emit, featurize_all, group_segments, load_classifier, load_samples, load_samples_from, load_tagger,
    read_cvec, save, to_json, ClassifierMeta, FeatureResources, OrRuntime,
};
use crate::{invalid, Cli, CliResult, Command, DataArgs, DecodeArgs, ReportFormat, SplitArg};

pub fn execute(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Ingest { data, out } => ingest(&data, &out),
        Command::Stats { data, split, out } => stats(&data, split, out.as_deref()),
        Command::TrainAnswerability {
            data,
            res,
            features,
            val_data,
            val_fraction,
            bow_size,
            epochs,
            batch_size,
            lr,
            patience,
            out,
        } => {
            let cfg = TrainConfig {
                batch_size,
                lr,
                max_epochs: epochs,
                patience,
                seed,
                adam: AdamConfig::default(),
            };
            if let Err(e) = cfg.validate() {
                return invalid(e.to_string());
            }
            let samples = load_samples(&data)?;
            let (train, val) = match &val_data {
                Some(path) => (samples, load_samples_from(path, &data)?),
                None => split_samples(samples, val_fraction, seed)?,
            };
            let vocab = features.needs_vocab().then(|| fit_bow_vocab(&train, bow_size));
            let res = FeatureResources::load(features, &res, vocab)?;
            let featurizer = res.featurizer();
            let train_set = labeled(&featurize_all(&featurizer, &train)?, &train)?;
            let val_set = labeled(&featurize_all(&featurizer, &val)?, &val)?;
            let model = build_classifier(train_set.x.ncols(), DEFAULT_HIDDEN, DEFAULT_DROPOUT, seed).rt()?;
            let (best, history) = train_classifier(model, &train_set, &val_set, &cfg).rt()?;
            let meta = ClassifierMeta {
                features,
                vocab: res.vocab.clone(),
                train: cfg,
            };
            save(&out, &best.to_checkpoint(seed, serde_json::to_value(&meta).rt()?))?;
            emit(None, &to_json(&history)?)
        }
        Command::EvalAnswerability {
            model,
            data,
            res,
            threshold,
            out,
        } => {
            check_threshold(threshold)?;
            let (model, meta) = load_classifier(&model)?;
            let samples = load_samples(&data)?;
            let res = FeatureResources::load(meta.features, &res, meta.vocab)?;
            let probs = probabilities(&model, &res.featurizer(), &samples)?;
            let golds: Vec<bool> = samples.iter().map(QaSample::is_answerable).collect();
            let correct = probs
                .iter()
                .zip(&golds)
                .filter(|(&p, &g)| (classify(p, threshold) == Verdict::Answerable) == g)
                .count();
            let ap = match pr_curve(&probs, &golds) {
                Ok(c) => Some(c.average_precision),
                Err(EvalError::NoPositives) => None,
                Err(e) => return Err(e).rt(),
            };
            if let Some(path) = &out {
                let mut w = create(path)?;
                for ((s, p), g) in samples.iter().zip(&probs).zip(&golds) {
                    writeln!(w, "{}", json!({"id": s.id, "proba": p, "answerable": g})).rt()?;
                }
                w.flush().rt()?;
            }
            let accuracy = if samples.is_empty() {
                None
            } else {
                Some(correct as f64 / samples.len() as f64)
            };
            emit(
                None,
                &to_json(&json!({
                    "n": samples.len(),
                    "threshold": threshold,
                    "accuracy": accuracy,
                    "average_precision": ap,
                }))?,
            )
        }
        Command::PrCurve { model, data, res, out } => {
            let (model, meta) = load_classifier(&model)?;
            let samples = load_samples(&data)?;
            let res = FeatureResources::load(meta.features, &res, meta.vocab)?;
            let probs = probabilities(&model, &res.featurizer(), &samples)?;
            let golds: Vec<bool> = samples.iter().map(QaSample::is_answerable).collect();
            let curve = pr_curve(&probs, &golds).rt()?;
            write_pr_csv(create(&out)?, &curve).rt()?;
            emit(
                None,
                &to_json(&json!({
                    "n": samples.len(),
                    "points": curve.points.len(),
                    "average_precision": curve.average_precision,
                }))?,
            )
        }
        Command::TrainTagger {
            data,
            cvec,
            val_data,
            val_cvec,
            val_fraction,
            hidden,
            layers,
            dropout,
            epochs,
            batch_size,
            lr,
            lr_end,
            class_weights,
            out,
        } => {
            let Ok(class_weights) = <[f64; 3]>::try_from(class_weights.as_slice()) else {
                return invalid("--class-weights takes exactly three values (O, B, I)");
            };
            if !(0.0..1.0).contains(&val_fraction) {
                return invalid(format!("--val-fraction {val_fraction} must lie in [0, 1)"));
            }
            let model_cfg = TaggerConfig {
                hidden,
                layers,
                dropout,
            };
            let cfg = TaggerTrainConfig {
                epochs,
                batch_size,
                lr_start: lr,
                lr_end,
                class_weights,
                seed,
                adam: AdamConfig::default(),
            };
            let samples = load_samples(&data)?;
            let (dim, sets) = read_cvec(&cvec)?;
            let examples = build_examples(&samples, &sets).rt()?;
            let (train, val) = match (&val_data, &val_cvec) {
                (Some(vd), Some(vc)) => {
                    let val_samples = load_samples_from(vd, &data)?;
                    let (_, val_sets) = read_cvec(vc)?;
                    (examples, build_examples(&val_samples, &val_sets).rt()?)
                }
                _ => split_examples(examples, val_fraction, seed),
            };
            let model = TaggerModel::seeded(dim, &model_cfg, seed).rt()?;
            let (model, history) = train_tagger(model, &train, &val, &cfg).rt()?;
            save(&out, &model.to_checkpoint(seed, json!({ "train": cfg })))?;
            emit(None, &to_json(&history)?)
        }
        Command::EvalTagger {
            model,
            data,
            cvec,
            decode,
        } => {
            check_beam(&decode)?;
            let model = load_tagger(&model)?;
            let samples = load_samples(&data)?;
            let (_, sets) = read_cvec(&cvec)?;
            let examples = build_examples(&samples, &sets).rt()?;
            let (_, degenerate, preds) =
                evaluate_examples(&model, &examples, decode.beam_k, &decode.constraints).rt()?;
            let gold: Vec<IobLabel> = examples.iter().flat_map(|e| e.gold.iter().copied()).collect();
            let pred: Vec<IobLabel> = preds.into_iter().flatten().collect();
            let f1 = token_f1(&gold, &pred).rt()?;
            emit(
                None,
                &to_json(&json!({
                    "segments": examples.len(),
                    "tokens": gold.len(),
                    "beam_k": decode.beam_k,
                    "constraints": decode.constraints.to_string(),
                    "macro_f1": f1.macro_f1,
                    "per_label": f1.per_label,
                    "confusion": f1.confusion,
                    "degenerate_fraction": degenerate,
                }))?,
            )
        }
        Command::Predict {
            model,
            data,
            cvec,
            decode,
            out,
        } => {
            check_beam(&decode)?;
            let model = load_tagger(&model)?;
            let samples = load_samples(&data)?;
            let (_, sets) = read_cvec(&cvec)?;
            let grouped = group_segments(sets);
            let predictions = samples
                .par_iter()
                .filter_map(|s| {
                    let segs = grouped.get(&s.id)?;
                    Some(answer(
                        &s.id,
                        &s.context_text,
                        &model,
                        segs,
                        decode.beam_k,
                        &decode.constraints,
                    ))
                })
                .collect::<Result<Vec<_>, _>>()
                .rt()?;
            if predictions.len() < samples.len() {
                log::warn!("{} samples have no context vectors", samples.len() - predictions.len());
            }
            write_predictions(create(&out)?, &predictions).rt()?;
            emit(
                None,
                &to_json(&json!({
                    "samples": predictions.len(),
                    "answered": predictions.iter().filter(|p| p.answerable).count(),
                }))?,
            )
        }
        Command::Ig {
            model,
            data,
            res,
            steps,
            top_n,
            out,
        } => {
            if steps == 0 {
                return invalid("--steps must be at least 1");
            }
            let (model, meta) = load_classifier(&model)?;
            let samples = load_samples(&data)?;
            let res = FeatureResources::load(meta.features, &res, meta.vocab)?;
            let vectors = featurize_all(&res.featurizer(), &samples)?;
            let Some(schema) = vectors.first().map(|v| v.schema().to_vec()) else {
                return invalid("no samples to attribute");
            };
            let attributions = samples
                .par_iter()
                .zip(&vectors)
                .map(|(s, v)| {
                    let baseline = vec![0.0; v.len()];
                    integrated_gradients(&model, &s.id, v.values(), &baseline, steps)
                })
                .collect::<Result<Vec<_>, _>>()
                .rt()?;
            let class_of = |s: &QaSample| {
                if s.is_answerable() {
                    "answerable"
                } else {
                    "unanswerable"
                }
            };
            let mut w = create(&out)?;
            for (s, a) in samples.iter().zip(&attributions) {
                let rec = AttributionRecord::new(a, class_of(s), &schema, res.vocab.as_ref(), top_n);
                writeln!(w, "{}", serde_json::to_string(&rec).rt()?).rt()?;
            }
            w.flush().rt()?;
            let mut per_class: BTreeMap<&str, Vec<Attribution>> = BTreeMap::new();
            for (s, a) in samples.iter().zip(attributions.iter().cloned()) {
                per_class.entry(class_of(s)).or_default().push(a);
            }
            let per_class: Vec<(String, Vec<Attribution>)> =
                per_class.into_iter().map(|(c, a)| (c.to_string(), a)).collect();
            let salience = salient_features(&per_class, &schema, res.vocab.as_ref(), top_n).rt()?;
            let max_gap = attributions.iter().map(|a| a.completeness_gap).fold(0.0, f64::max);
            emit(
                None,
                &to_json(&json!({
                    "n": attributions.len(),
                    "steps": steps,
                    "max_completeness_gap": max_gap,
                    "salience": salience,
                }))?,
            )
        }
        Command::Attack {
            model,
            data,
            res,
            map,
            out,
            histogram,
        } => {
            let mapping = if map.is_empty() {
                SubstitutionMap::default()
            } else {
                match SubstitutionMap::from_pairs(&map) {
                    Ok(m) => m,
                    Err(e) => return invalid(e.to_string()),
                }
            };
            let (model, meta) = load_classifier(&model)?;
            let samples = load_samples(&data)?;
            let res = FeatureResources::load(meta.features, &res, meta.vocab)?;
            let featurizer = res.featurizer();
            let probs = probabilities(&model, &featurizer, &samples)?;
            let targets: Vec<QaSample> = samples
                .iter()
                .zip(&probs)
                .filter(|(s, &p)| s.is_answerable() && classify(p, 0.5) == Verdict::Answerable)
                .map(|(s, _)| s.clone())
                .collect();
            let report = attack_report(&model, &featurizer, &targets, &mapping).rt()?;
            emit(Some(&out), &to_json(&report)?)?;
            if let Some(path) = &histogram {
                write_histogram_csv(create(path)?, &report, HISTOGRAM_BINS).rt()?;
            }
            emit(
                None,
                &to_json(&json!({"n": report.n, "flip_count": report.flip_count}))?,
            )
        }
        Command::Crosslingual {
            data,
            train_lang,
            n,
            model,
            res,
            tagger,
            decode,
            threshold,
            format,
            out,
        } => {
            check_threshold(threshold)?;
            check_beam(&decode)?;
            let samples = load_samples(&data)?;
            let classifier = model.as_deref().map(load_classifier).transpose()?;
            let resources = match &classifier {
                Some((_, meta)) => Some(FeatureResources::load(meta.features, &res, meta.vocab.clone())?),
                None => None,
            };
            let tagger = match &tagger {
                Some(path) => {
                    let cvec = res.cvec.as_deref().expect("clap enforces --cvec");
                    Some((load_tagger(path)?, group_segments(read_cvec(cvec)?.1)))
                }
                None => None,
            };
            let featurizer = resources.as_ref().map(FeatureResources::featurizer);
            let pipeline;
            let guess = RandomGuess { seed };
            let system: &dyn QaSystem = match (&classifier, &featurizer) {
                (Some((m, _)), Some(f)) => {
                    pipeline = Pipeline {
                        classifier: m,
                        featurizer: f,
                        tagger: tagger.as_ref().map(|(t, g)| (t, g)),
                        decode: &decode,
                        threshold,
                    };
                    &pipeline
                }
                _ => &guess,
            };
            let mut by_lang: BTreeMap<_, Vec<QaSample>> = BTreeMap::new();
            for s in samples {
                by_lang.entry(s.language).or_default().push(s);
            }
            let langs: Vec<_> = dedup(&data.lang);
            let empty = Vec::new();
            let sets: Vec<EvalSet<'_>> = langs
                .iter()
                .map(|&l| EvalSet {
                    language: l,
                    samples: by_lang.get(&l).unwrap_or(&empty),
                    system,
                })
                .collect();
            let report = crosslingual_report(train_lang, &sets, n, seed).rt()?;
            let text = match format {
                ReportFormat::Text => report.to_text(),
                ReportFormat::Json => to_json(&report)?,
            };
            emit(out.as_deref(), &text)
        }
    }
}

fn ingest(data: &DataArgs, out: &Path) -> CliResult<()> {
    let samples = load_samples(data)?;
    let mut w = create(out)?;
    for s in &samples {
        writeln!(w, "{}", serde_json::to_string(s).rt()?).rt()?;
    }
    w.flush().rt()?;
    let mut per_lang: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in &samples {
        let e = per_lang.entry(s.language.code().to_string()).or_default();
        e.0 += 1;
        e.1 += usize::from(s.is_answerable());
    }
    let languages: BTreeMap<String, serde_json::Value> = per_lang
        .into_iter()
        .map(|(l, (n, a))| (l, json!({"samples": n, "answerable": a})))
        .collect();
    emit(
        None,
        &to_json(&json!({"samples": samples.len(), "languages": languages}))?,
    )
}

fn stats(data: &DataArgs, split: SplitArg, out: Option<&Path>) -> CliResult<()> {
    let split = match split {
        SplitArg::Train => Split::Train,
        SplitArg::Validation => Split::Validation,
    };
    let samples = load_samples(data)?;
    let all: Vec<_> = dedup(&data.lang)
        .into_iter()
        .map(|lang| {
            let subset: Vec<QaSample> = samples.iter().filter(|s| s.language == lang).cloned().collect();
            token_position_stats(&subset, lang, split)
        })
        .collect();
    let text = match all.as_slice() {
        [one] => to_json(one)?,
        many => to_json(&many)?,
    };
    emit(out, &text)
}

fn dedup<T: Copy + Eq + std::hash::Hash>(items: &[T]) -> Vec<T> {
    let mut seen = HashSet::new();
    items.iter().copied().filter(|x| seen.insert(*x)).collect()
}

fn check_threshold(threshold: f64) -> CliResult<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return invalid(format!("--threshold {threshold} must lie in [0, 1]"));
    }
    Ok(())
}

fn check_beam(decode: &DecodeArgs) -> CliResult<()> {
    if decode.beam_k == 0 {
        return invalid("--beam-k must be at least 1");
    }
    Ok(())
}

/// Seeded split into training and held-out samples.
fn split_samples(samples: Vec<QaSample>, val_fraction: f64, seed: u64) -> CliResult<(Vec<QaSample>, Vec<QaSample>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return invalid(format!("--val-fraction {val_fraction} must lie in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let n_val = ((samples.len() as f64 * val_fraction).round() as usize).clamp(1.min(samples.len()), samples.len());
    let held: HashSet<usize> = order[..n_val].iter().copied().collect();
    let (val, train): (Vec<_>, Vec<_>) = samples.into_iter().enumerate().partition(|(i, _)| held.contains(i));
    Ok((
        train.into_iter().map(|(_, s)| s).collect(),
        val.into_iter().map(|(_, s)| s).collect(),
    ))
}

/// Holds out whole samples so no segment of a validation sample is trained on.
fn split_examples(
    examples: Vec<TaggerExample>,
    val_fraction: f64,
    seed: u64,
) -> (Vec<TaggerExample>, Vec<TaggerExample>) {
    let ids = dedup_ids(&examples);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let n_val = (ids.len() as f64 * val_fraction).round() as usize;
    let held: HashSet<&str> = order[..n_val].iter().map(|&i| ids[i].as_str()).collect();
    let (val, train): (Vec<_>, Vec<_>) = examples.into_iter().partition(|e| held.contains(e.id.as_str()));
    (train, val)
}

fn dedup_ids(examples: &[TaggerExample]) -> Vec<String> {
    let mut seen = HashSet::new();
    examples
        .iter()
        .filter(|e| seen.insert(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect()
}

fn labeled(vectors: &[FeatureVector], samples: &[QaSample]) -> CliResult<LabeledData> {
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.values().to_vec()).collect();
    LabeledData::from_rows(&rows, samples.iter().map(QaSample::is_answerable).collect()).rt()
}

fn probabilities(model: &AnswerabilityModel, featurizer: &Featurizer<'_>, samples: &[QaSample]) -> CliResult<Vec<f64>> {
    featurize_all(featurizer, samples)?
        .par_iter()
        .map(|v| model.predict_proba(v.values()))
        .collect::<Result<Vec<_>, _>>()
        .rt()
}

/// Classifier for answerability, optionally followed by the tagger for the span.
struct Pipeline<'a> {
    classifier: &'a AnswerabilityModel,
    featurizer: &'a Featurizer<'a>,
    tagger: Option<(&'a TaggerModel, &'a HashMap<String, Vec<ContextVectorSet>>)>,
    decode: &'a DecodeArgs,
    threshold: f64,
}

impl QaSystem for Pipeline<'_> {
    fn answerable_proba(&self, sample: &QaSample) -> Result<f64, EvalError> {
        let v = self
            .featurizer
            .featurize_sample(sample)
            .map_err(|e| EvalError::System(e.to_string()))?;
        self.classifier
            .predict_proba(v.values())
            .map_err(|e| EvalError::System(e.to_string()))
    }

    fn extract(&self, sample: &QaSample) -> Result<Option<String>, EvalError> {
        let Some((tagger, segments)) = self.tagger else {
            return Ok(None);
        };
        if self.answerable_proba(sample)? < self.threshold {
            return Ok(None);
        }
        let Some(segs) = segments.get(&sample.id) else {
            return Err(EvalError::MissingArtifact(format!(
                "context vectors for `{}`",
                sample.id
            )));
        };
        let k = self.decode.beam_k;
        let cons: &LegalityConfig = &self.decode.constraints;
        answer(&sample.id, &sample.context_text, tagger, segs, k, cons)
            .map(|p| p.answer_text)
            .map_err(|e| EvalError::System(e.to_string()))
    }
}

//! Loading inputs and writing outputs for the subcommands.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use aqa_core::answerability::{AnswerabilityModel, TrainConfig};
use aqa_core::corpus::{load_dataset, QaSample, Strictness};
use aqa_core::features::{
    read_context_vectors, ContextVectorSet, FeatureSet, FeatureVector, Featurize, Featurizer, Vocabulary,
};
use aqa_core::neural::{read_checkpoint, write_checkpoint, Checkpoint};
use aqa_core::tagger::TaggerModel;
use aqa_core::tokenization::{load_subword_model, SubwordModel};
use aqa_core::Language;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{invalid, CliError, CliResult, DataArgs, FeatureArgs};

/// Turns any library error into a runtime failure.
pub trait OrRuntime<T> {
    fn rt(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrRuntime<T> for Result<T, E> {
    fn rt(self) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.is_file() {
        return invalid(format!("{what} `{}` does not exist", path.display()));
    }
    Ok(())
}

pub fn load_samples(args: &DataArgs) -> CliResult<Vec<QaSample>> {
    load_samples_from(&args.data, args)
}

/// Loads `path` with the language filter and strictness of `args`.
pub fn load_samples_from(path: &Path, args: &DataArgs) -> CliResult<Vec<QaSample>> {
    require_file(path, "dataset")?;
    let languages: HashSet<Language> = args.lang.iter().copied().collect();
    let strictness = if args.strict {
        Strictness::Abort
    } else {
        Strictness::Skip
    };
    load_dataset(path, &languages, strictness)
        .with_context(|| format!("loading {}", path.display()))
        .rt()
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let file = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .rt()?;
    Ok(BufWriter::new(file))
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes()).rt()?;
            w.flush().rt()
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).rt()?;
            out.flush().rt()
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).rt()?;
    s.push('\n');
    Ok(s)
}

/// All records of a CVEC file and its vector dimension.
pub fn read_cvec(path: &Path) -> CliResult<(usize, Vec<ContextVectorSet>)> {
    require_file(path, "context vector file")?;
    let reader = read_context_vectors(path)
        .with_context(|| format!("opening {}", path.display()))
        .rt()?;
    let dim = reader.dim();
    let sets = reader
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("reading {}", path.display()))
        .rt()?;
    Ok((dim, sets))
}

/// Segments per sample id, in file order.
pub fn group_segments(sets: Vec<ContextVectorSet>) -> HashMap<String, Vec<ContextVectorSet>> {
    let mut grouped: HashMap<String, Vec<ContextVectorSet>> = HashMap::new();
    for set in sets {
        grouped.entry(set.sample_id.clone()).or_default().push(set);
    }
    grouped
}

/// Pooled vector of the first segment of every sample.
pub fn pooled_map(sets: &[ContextVectorSet]) -> HashMap<String, Vec<f64>> {
    let mut map = HashMap::new();
    for set in sets {
        map.entry(set.sample_id.clone())
            .or_insert_with(|| set.pooled_f64().to_vec());
    }
    map
}

/// Everything a [`Featurizer`] may borrow.
pub struct FeatureResources {
    pub set: FeatureSet,
    pub vocab: Option<Vocabulary>,
    pub subwords: Option<SubwordModel>,
    pub pooled: Option<HashMap<String, Vec<f64>>>,
}

impl FeatureResources {
    pub fn load(set: FeatureSet, args: &FeatureArgs, vocab: Option<Vocabulary>) -> CliResult<Self> {
        if set.needs_vocab() && vocab.is_none() {
            return invalid(format!("feature set `{set}` needs a bag-of-words vocabulary"));
        }
        let subwords = if set.needs_subwords() {
            let (Some(v), Some(m), Some(e)) = (&args.bpe_vocab, &args.bpe_merges, &args.bpe_emb) else {
                return invalid(format!(
                    "feature set `{set}` needs --bpe-vocab, --bpe-merges and --bpe-emb"
                ));
            };
            for (p, what) in [(v, "subword vocabulary"), (m, "merge table"), (e, "embedding file")] {
                require_file(p, what)?;
            }
            Some(load_subword_model(v, m, e).rt()?)
        } else {
            None
        };
        let pooled = if set == FeatureSet::Cvec {
            let Some(path) = &args.cvec else {
                return invalid("feature set `cvec` needs --cvec");
            };
            Some(pooled_map(&read_cvec(path)?.1))
        } else {
            None
        };
        Ok(Self {
            set,
            vocab,
            subwords,
            pooled,
        })
    }

    pub fn featurizer(&self) -> Featurizer<'_> {
        let mut f = Featurizer::new(self.set);
        if let Some(v) = &self.vocab {
            f = f.with_vocab(v);
        }
        if let Some(s) = &self.subwords {
            f = f.with_subwords(s);
        }
        if let Some(p) = &self.pooled {
            f = f.with_pooled(p);
        }
        f
    }
}

pub fn featurize_all(featurizer: &Featurizer<'_>, samples: &[QaSample]) -> CliResult<Vec<FeatureVector>> {
    samples
        .par_iter()
        .map(|s| featurizer.featurize_sample(s))
        .collect::<Result<Vec<_>, _>>()
        .rt()
}

/// What a classifier checkpoint records besides its weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub features: FeatureSet,
    pub vocab: Option<Vocabulary>,
    pub train: TrainConfig,
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> CliResult<()> {
    write_checkpoint(path, ckpt)
        .with_context(|| format!("writing {}", path.display()))
        .rt()
}

fn read(path: &Path) -> CliResult<Checkpoint> {
    require_file(path, "checkpoint")?;
    read_checkpoint(path)
        .with_context(|| format!("reading {}", path.display()))
        .rt()
}

pub fn load_classifier(path: &Path) -> CliResult<(AnswerabilityModel, ClassifierMeta)> {
    let ckpt = read(path)?;
    let model = AnswerabilityModel::from_checkpoint(&ckpt).rt()?;
    let meta: ClassifierMeta = serde_json::from_value(ckpt.meta.config.clone())
        .context("checkpoint lacks classifier settings")
        .rt()?;
    Ok((model, meta))
}

pub fn load_tagger(path: &Path) -> CliResult<TaggerModel> {
    TaggerModel::from_checkpoint(&read(path)?).rt()
}

use std::fmt::Write as _;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::Checkpoint;
use crate::scalar::Scalar;
use crate::SourceUnit;

use super::metrics::{bleu, meteor_lite, rouge_l};
use super::{encode_unit, CorpusError, TrainError, Vocabulary};

pub const PAPER_NOTE: &str = "paper-reported, not reproduced";

const AVERAGING: &str = "corpus score = mean of sentence-level scores; METEOR-lite uses exact matches only";

const BUNDLED: &str = include_str!("../../data/reference_scores.json");

/// BLEU, METEOR and ROUGE-L in percent, in the table's column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanguageScores(pub f64, pub f64, pub f64);

impl LanguageScores {
    pub fn bleu(&self) -> f64 {
        self.0
    }
    pub fn meteor(&self) -> f64 {
        self.1
    }
    pub fn rouge_l(&self) -> f64 {
        self.2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub input: String,
    pub method: String,
    pub java: LanguageScores,
    pub python: LanguageScores,
}

/// Published reference scores, carried as labels only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTable {
    pub note: String,
    pub columns: Vec<String>,
    pub rows: Vec<BaselineRow>,
}

impl BaselineTable {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled reference table is valid")
    }

    pub fn get(&self, method: &str) -> Option<&BaselineRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `(label, language, scores)` with AST-MHSA first.
    fn lines(&self) -> Vec<(String, &'static str, LanguageScores)> {
        let mut rows: Vec<&BaselineRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.method != "AST-MHSA");
        rows.into_iter()
            .flat_map(|r| {
                let label = format!("{} (paper)", r.method);
                [(label.clone(), "Java", r.java), (label, "Python", r.python)]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoding {
    Greedy,
    Beam(usize),
}

impl Decoding {
    fn label(self) -> String {
        match self {
            Decoding::Greedy => "greedy".into(),
            Decoding::Beam(k) => format!("beam-{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleScore {
    pub id: String,
    pub candidate: Vec<String>,
    pub reference: Vec<String>,
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

impl SampleScore {
    pub fn new(id: &str, candidate: Vec<String>, reference: Vec<String>) -> Self {
        SampleScore {
            id: id.to_string(),
            bleu: bleu(&candidate, &reference),
            rouge_l: rouge_l(&candidate, &reference),
            meteor: meteor_lite(&candidate, &reference),
            candidate,
            reference,
        }
    }
}

/// Corpus scores (fractions) averaged over per-sample scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub decoding: String,
    pub samples: usize,
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub per_sample: Vec<SampleScore>,
}

impl MetricReport {
    pub fn from_scores(decoding: &str, per_sample: Vec<SampleScore>) -> Self {
        let n = per_sample.len().max(1) as f64;
        let mean = |f: fn(&SampleScore) -> f64| per_sample.iter().map(f).sum::<f64>() / n;
        MetricReport {
            decoding: decoding.to_string(),
            samples: per_sample.len(),
            bleu: mean(|s| s.bleu),
            rouge_l: mean(|s| s.rouge_l),
            meteor: mean(|s| s.meteor),
            per_sample,
        }
    }

    /// Plain-text table: this run followed by the reference rows, all as
    /// percentages with two decimals.
    pub fn render_text(&self, table: &BaselineTable) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {AVERAGING}");
        let _ = writeln!(out, "# decoding: {}, samples: {}", self.decoding, self.samples);
        let _ = writeln!(out, "method language BLEU(%) METEOR(%) ROUGE-L(%)");
        let _ = writeln!(
            out,
            "this-run - {:.2} {:.2} {:.2}",
            100.0 * self.bleu,
            100.0 * self.meteor,
            100.0 * self.rouge_l
        );
        let _ = writeln!(out, "# {}", table.note);
        for (label, lang, s) in table.lines() {
            let _ = writeln!(out, "{label} {lang} {:.2} {:.2} {:.2}", s.0, s.1, s.2);
        }
        out
    }

    /// JSON form of the report:
    /// `{"averaging", "decoding", "samples", "scores": {"bleu","meteor","rouge_l"},
    ///   "per_sample": [...], "reference": {"note", "rows": [{"method","language","bleu","meteor","rouge_l"}]}}`.
    /// Run scores are fractions; reference rows are percentages.
    pub fn to_json(&self, table: &BaselineTable) -> serde_json::Value {
        let rows: Vec<_> = table
            .lines()
            .into_iter()
            .map(|(label, lang, s)| {
                json!({"method": label, "language": lang, "bleu": s.0, "meteor": s.1, "rouge_l": s.2})
            })
            .collect();
        json!({
            "averaging": AVERAGING,
            "decoding": self.decoding,
            "samples": self.samples,
            "scores": {"bleu": self.bleu, "meteor": self.meteor, "rouge_l": self.rouge_l},
            "per_sample": self.per_sample,
            "reference": {"note": table.note, "rows": rows},
        })
    }
}

/// Decodes every unit and scores it against its reference summary. Units
/// are split across threads; results keep input order.
pub fn evaluate<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    units: &[&SourceUnit],
    decoding: Decoding,
) -> Result<MetricReport, TrainError> {
    if units.is_empty() {
        return Err(CorpusError::EmptySplit.into());
    }
    if decoding == Decoding::Beam(0) {
        return Err(TrainError::Config("beam width must be >= 1".into()));
    }
    let src = Vocabulary::from_tokens(checkpoint.vocab_src.clone()).map_err(TrainError::Config)?;
    let tgt = Vocabulary::from_tokens(checkpoint.vocab_tgt.clone()).map_err(TrainError::Config)?;
    let model = checkpoint.model();
    let score = |unit: &SourceUnit| -> Result<SampleScore, TrainError> {
        let sample = encode_unit(unit, &src, &tgt, &model.config)?;
        let enc = model.encode(&sample.input)?;
        let ids = match decoding {
            Decoding::Greedy => model.decode_greedy(&enc)?,
            Decoding::Beam(k) => model.decode_beam(&enc, k)?,
        };
        Ok(SampleScore::new(&unit.id, tgt.decode(&ids), unit.summary.clone()))
    };
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(units.len());
    let chunk = units.len().div_ceil(workers);
    let scores: Vec<SampleScore> = thread::scope(|s| {
        let handles: Vec<_> = units
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(|u| score(u)).collect::<Result<Vec<_>, _>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("decode worker panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    Ok(MetricReport::from_scores(&decoding.label(), scores))
}

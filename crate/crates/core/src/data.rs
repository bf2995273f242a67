//! Labelled examples, JSON Lines loading and a seeded synthetic generator.
//!
//! One line per (sentence, aspect) pair:
//!
//! ```json
//! {"tokens": ["the", "food", "was", "great"], "aspect_start": 1, "aspect_end": 2,
//!  "label": "positive", "dep_heads": [2, 4, 4, 0], "dep_rels": ["det", "nsubj", "cop", "root"]}
//! ```
//!
//! `aspect_end` is exclusive and heads are 1-based with 0 for the root.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conllu::{validate_tree, DepTree};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::span::Span;

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Neutral,
    Negative,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::Positive, Label::Neutral, Label::Negative];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Label> {
        Label::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::invalid(format!("class index {i} out of range")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Neutral => "neutral",
            Label::Negative => "negative",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        match s {
            "positive" => Ok(Label::Positive),
            "neutral" => Ok(Label::Neutral),
            "negative" => Ok(Label::Negative),
            "conflict" => Err(Error::invalid(
                "label \"conflict\" is not supported; drop conflict examples",
            )),
            other => Err(Error::invalid(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub tokens: Vec<String>,
    pub aspect_start: usize,
    pub aspect_end: usize,
    pub label: Label,
    pub dep_heads: Vec<usize>,
    pub dep_rels: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExample {
    tokens: Vec<String>,
    aspect_start: usize,
    aspect_end: usize,
    label: String,
    dep_heads: Vec<usize>,
    dep_rels: Vec<String>,
}

impl Example {
    /// Field name and message of the first violated invariant.
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(("tokens", "empty token list".into()));
        }
        if !(self.aspect_start < self.aspect_end && self.aspect_end <= n) {
            return Err((
                "aspect_end",
                format!(
                    "span [{}, {}) invalid for {n} tokens",
                    self.aspect_start, self.aspect_end
                ),
            ));
        }
        if self.dep_heads.len() != n {
            return Err((
                "dep_heads",
                format!("{} heads for {n} tokens", self.dep_heads.len()),
            ));
        }
        if self.dep_rels.len() != n {
            return Err((
                "dep_rels",
                format!("{} relations for {n} tokens", self.dep_rels.len()),
            ));
        }
        validate_tree(&self.tokens, &self.dep_heads, &self.dep_rels).map_err(|m| ("dep_heads", m))
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(field, msg)| Error::invalid(format!("field {field}: {msg}")))
    }

    pub fn span(&self) -> Result<Span> {
        Span::new(self.aspect_start, self.aspect_end, self.tokens.len())
    }

    pub fn tree(&self) -> Result<DepTree> {
        DepTree::new(
            self.tokens.clone(),
            self.dep_heads.clone(),
            self.dep_rels.clone(),
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("examples always serialise")
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<Example> {
    let parse_err = |msg: String| Error::Parse { line: line_no, msg };
    let raw: RawExample = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
    let label = raw.label.parse::<Label>().map_err(|e| {
        parse_err(format!(
            "field label: {}",
            e.to_string().trim_start_matches("invalid argument: ")
        ))
    })?;
    let ex = Example {
        tokens: raw.tokens,
        aspect_start: raw.aspect_start,
        aspect_end: raw.aspect_end,
        label,
        dep_heads: raw.dep_heads,
        dep_rels: raw.dep_rels,
    };
    ex.check()
        .map_err(|(field, msg)| parse_err(format!("field {field}: {msg}")))?;
    Ok(ex)
}

/// Reads JSON Lines examples; blank lines are skipped.
pub fn read_dataset(reader: impl BufRead) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, idx + 1)?);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(std::io::BufReader::new(file))
}

/// Per-class counts in `Label::ALL` order.
pub fn class_counts(examples: &[Example]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for ex in examples {
        counts[ex.label.index()] += 1;
    }
    counts
}

const ASPECTS: &[&str] = &[
    "food", "service", "pasta", "staff", "pizza", "wine", "decor", "menu", "dessert", "coffee",
    "waiter", "soup",
];
const COMPOUND_HEADS: &[(&str, &str)] = &[
    ("wine", "list"),
    ("happy", "hour"),
    ("fish", "tacos"),
    ("dining", "room"),
];
const POSITIVE: &[&str] = &[
    "great",
    "delicious",
    "excellent",
    "friendly",
    "amazing",
    "superb",
];
const NEUTRAL: &[&str] = &[
    "average", "ordinary", "standard", "typical", "okay", "usual",
];
const NEGATIVE: &[&str] = &["terrible", "awful", "bland", "rude", "horrible", "cold"];
const FILLERS: &[&str] = &["yesterday", "twice", "earlier", "tonight"];

fn opinion_words(label: Label) -> &'static [&'static str] {
    match label {
        Label::Positive => POSITIVE,
        Label::Neutral => NEUTRAL,
        Label::Negative => NEGATIVE,
    }
}

fn pick<'a>(rng: &mut Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.below(xs.len())]
}

fn make(
    tokens: &[&str],
    heads: &[usize],
    rels: &[&str],
    span: (usize, usize),
    label: Label,
) -> Example {
    Example {
        tokens: tokens.iter().map(|s| s.to_string()).collect(),
        aspect_start: span.0,
        aspect_end: span.1,
        label,
        dep_heads: heads.to_vec(),
        dep_rels: rels.iter().map(|s| s.to_string()).collect(),
    }
}

fn templated(rng: &mut Rng, label: Label) -> Example {
    let op = pick(rng, opinion_words(label));
    match rng.below(5) {
        // the ASP was OP
        0 => {
            let asp = pick(rng, ASPECTS);
            make(
                &["the", asp, "was", op],
                &[2, 4, 4, 0],
                &["det", "nsubj", "cop", "root"],
                (1, 2),
                label,
            )
        }
        // the ASP that we ordered FILLER was OP: opinion far in tokens, one hop in the tree
        1 => {
            let asp = pick(rng, ASPECTS);
            let fill = pick(rng, FILLERS);
            make(
                &["the", asp, "that", "we", "ordered", fill, "was", op],
                &[2, 8, 5, 5, 2, 5, 8, 0],
                &[
                    "det",
                    "nsubj",
                    "mark",
                    "nsubj",
                    "acl:relcl",
                    "advmod",
                    "cop",
                    "root",
                ],
                (1, 2),
                label,
            )
        }
        // we had OP ASP
        2 => {
            let asp = pick(rng, ASPECTS);
            make(
                &["we", "had", op, asp],
                &[2, 0, 4, 2],
                &["nsubj", "root", "amod", "obj"],
                (3, 4),
                label,
            )
        }
        // the A B was OP, two-token aspect
        3 => {
            let (a, b) = COMPOUND_HEADS[rng.below(COMPOUND_HEADS.len())];
            make(
                &["the", a, b, "was", op],
                &[3, 3, 5, 5, 0],
                &["det", "compound", "nsubj", "cop", "root"],
                (1, 3),
                label,
            )
        }
        // the A1 was OP1 but the A2 was OP2, one of the two aspects is the target
        _ => {
            let a1 = pick(rng, ASPECTS);
            let mut a2 = pick(rng, ASPECTS);
            while a2 == a1 {
                a2 = pick(rng, ASPECTS);
            }
            let other = Label::ALL[rng.below(NUM_CLASSES)];
            let other_op = pick(rng, opinion_words(other));
            let heads = [2, 4, 4, 0, 9, 7, 9, 9, 4];
            let rels = [
                "det", "nsubj", "cop", "root", "cc", "det", "nsubj", "cop", "conj",
            ];
            if rng.below(2) == 0 {
                make(
                    &["the", a1, "was", op, "but", "the", a2, "was", other_op],
                    &heads,
                    &rels,
                    (1, 2),
                    label,
                )
            } else {
                make(
                    &["the", a1, "was", other_op, "but", "the", a2, "was", op],
                    &heads,
                    &rels,
                    (6, 7),
                    label,
                )
            }
        }
    }
}

/// `n` templated examples with labels cycling positive, neutral, negative.
/// No two examples share both tokens and aspect span.
pub fn synthetic_dataset(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = Rng::new(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let label = Label::ALL[out.len() % NUM_CLASSES];
        let ex = templated(&mut rng, label);
        if seen.insert((ex.tokens.clone(), ex.aspect_start, ex.aspect_end)) {
            out.push(ex);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"tokens":["the","food","was","really","great"],"aspect_start":1,"aspect_end":2,"label":"positive","dep_heads":[2,5,5,5,0],"dep_rels":["det","nsubj","cop","advmod","root"]}"#;

    #[test]
    fn fixture_line_round_trips() {
        let exs = read_dataset(LINE.as_bytes()).unwrap();
        assert_eq!(exs.len(), 1);
        assert_eq!(exs[0].tokens.len(), 5);
        assert_eq!(exs[0].span().unwrap(), Span { start: 1, end: 2 });
        assert_eq!(exs[0].label, Label::Positive);
        let again = read_dataset(exs[0].to_json_line().as_bytes()).unwrap();
        assert_eq!(again, exs);
    }

    #[test]
    fn conflict_label_rejected_with_location() {
        let text = format!("{LINE}\n{}", LINE.replace("positive", "conflict"));
        let err = read_dataset(text.as_bytes()).unwrap_err().to_string();
        assert!(err.starts_with("line 2"), "{err}");
        assert!(err.contains("label") && err.contains("conflict"), "{err}");
    }

    #[test]
    fn schema_violations_name_line_and_field() {
        let cases = [
            (
                LINE.replace("\"aspect_end\":2", "\"aspect_end\":9"),
                "aspect_end",
            ),
            (LINE.replace("[2,5,5,5,0]", "[2,5,5,0]"), "dep_heads"),
            (LINE.replace("[2,5,5,5,0]", "[2,1,5,5,0]"), "cycle"),
            (LINE.replace(",\"label\":\"positive\"", ""), "label"),
            (LINE.replace("\"tokens\"", "\"words\""), "words"),
            (LINE.replace("\"positive\"", "\"happy\""), "label"),
        ];
        for (line, needle) in cases {
            let err = read_dataset(format!("\n{line}").as_bytes())
                .unwrap_err()
                .to_string();
            assert!(err.starts_with("line 2"), "{err}");
            assert!(err.contains(needle), "{needle}: {err}");
        }
    }

    #[test]
    fn label_indices() {
        for (i, l) in Label::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(Label::from_index(i).unwrap(), *l);
            assert_eq!(l.as_str().parse::<Label>().unwrap(), *l);
        }
        assert!(Label::from_index(3).is_err());
    }

    #[test]
    fn synthetic_examples_are_valid_unique_and_balanced() {
        let exs = synthetic_dataset(300, 7);
        let mut keys = HashSet::new();
        for ex in &exs {
            ex.validate().unwrap();
            assert!(keys.insert((ex.tokens.clone(), ex.aspect_start)));
            // the planted opinion word carries the label
            assert!(ex
                .tokens
                .iter()
                .any(|t| opinion_words(ex.label).contains(&t.as_str())));
        }
        assert_eq!(class_counts(&exs), [100, 100, 100]);
        assert_eq!(synthetic_dataset(32, 7), synthetic_dataset(32, 7));
        assert_ne!(synthetic_dataset(32, 7), synthetic_dataset(32, 8));
    }
}

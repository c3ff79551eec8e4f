use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{words, Example, ExampleSet, Relation, Split, Task};
use crate::error::{Error, Result};

/// Size of the held-out CommonsenseQA split carved from the end of the
/// validation file.
pub const CSQA_TEST_STAR_LEN: usize = 611;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Copa,
    Csqa,
    Swag,
    HellaSwag,
    Canonical,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copa" => Ok(Self::Copa),
            "csqa" | "commonsenseqa" => Ok(Self::Csqa),
            "swag" => Ok(Self::Swag),
            "hellaswag" => Ok(Self::HellaSwag),
            "canonical" => Ok(Self::Canonical),
            other => Err(Error::argument(format!("unknown dataset format {other:?}"))),
        }
    }
}

pub fn load_dataset(format: DatasetFormat, path: &Path, split: Split) -> Result<ExampleSet> {
    match format {
        DatasetFormat::Copa => load_copa(path, split),
        DatasetFormat::Csqa => load_commonsenseqa(path, split),
        DatasetFormat::Swag => load_swag(path, split),
        DatasetFormat::HellaSwag => load_hellaswag(path, split),
        DatasetFormat::Canonical => load_canonical(path, split),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_line<'a, T: Deserialize<'a>>(line: &'a str, path: &str, lineno: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        path: path.to_string(),
        line: lineno,
        message: e.to_string(),
    })
}

fn at_line(err: Error, path: &str, line: usize) -> Error {
    match err {
        Error::Schema(msg) => Error::Parse {
            path: path.to_string(),
            line,
            message: msg,
        },
        other => other,
    }
}

/// Negative labels mark unlabeled records in some published test files.
fn label_index(label: Option<i64>) -> Option<usize> {
    label.and_then(|l| usize::try_from(l).ok())
}

#[derive(Deserialize)]
struct CopaRecord {
    #[serde(default)]
    idx: Option<u64>,
    premise: String,
    choice1: String,
    choice2: String,
    question: String,
    #[serde(default)]
    label: Option<i64>,
}

/// SuperGLUE COPA layout: one JSON record per line.
pub fn load_copa(path: &Path, split: Split) -> Result<ExampleSet> {
    let name = path.display().to_string();
    parse_copa(&read(path)?, &name, split)
}

pub(crate) fn parse_copa(text: &str, name: &str, split: Split) -> Result<ExampleSet> {
    let mut out = Vec::new();
    for (lineno, line) in records(text) {
        let rec: CopaRecord = parse_line(line, name, lineno)?;
        let relation = match rec.question.as_str() {
            "cause" => Relation::Cause,
            "effect" => Relation::Effect,
            other => {
                return Err(Error::schema(format!(
                    "{name}:{lineno}: unknown COPA question {other:?}"
                )))
            }
        };
        let id = match rec.idx {
            Some(i) => format!("copa-{i}"),
            None => format!("copa-line{lineno}"),
        };
        let ex = Example {
            id,
            premise: words(&rec.premise),
            hypotheses: vec![words(&rec.choice1), words(&rec.choice2)],
            gold_index: label_index(rec.label),
            task: Task::Copa,
            relation,
        };
        ex.validate().map_err(|e| at_line(e, name, lineno))?;
        out.push(ex);
    }
    ExampleSet::new(out, split)
}

#[derive(Deserialize)]
struct CsqaChoice {
    label: String,
    text: String,
}

#[derive(Deserialize)]
struct CsqaQuestion {
    stem: String,
    choices: Vec<CsqaChoice>,
}

#[derive(Deserialize)]
struct CsqaRecord {
    id: String,
    question: CsqaQuestion,
    #[serde(default, rename = "answerKey")]
    answer_key: Option<String>,
}

/// CommonsenseQA layout. `Split::TestStar` keeps the last 611 records of a
/// validation file and `Split::Val` the records before them; other splits
/// keep the whole file.
pub fn load_commonsenseqa(path: &Path, split: Split) -> Result<ExampleSet> {
    let name = path.display().to_string();
    parse_commonsenseqa(&read(path)?, &name, split)
}

pub(crate) fn parse_commonsenseqa(text: &str, name: &str, split: Split) -> Result<ExampleSet> {
    let mut out = Vec::new();
    for (lineno, line) in records(text) {
        let rec: CsqaRecord = parse_line(line, name, lineno)?;
        let gold_index = match rec.answer_key.as_deref() {
            None | Some("") => None,
            Some(key) => Some(
                rec.question
                    .choices
                    .iter()
                    .position(|c| c.label == key)
                    .ok_or_else(|| {
                        Error::schema(format!(
                            "{name}:{lineno}: answer key {key:?} matches no choice label"
                        ))
                    })?,
            ),
        };
        let ex = Example {
            id: rec.id,
            premise: words(&rec.question.stem),
            hypotheses: rec.question.choices.iter().map(|c| words(&c.text)).collect(),
            gold_index,
            task: Task::CommonsenseQa,
            relation: Relation::None,
        };
        ex.validate().map_err(|e| at_line(e, name, lineno))?;
        out.push(ex);
    }
    match split {
        Split::Val | Split::TestStar => {
            if out.len() < CSQA_TEST_STAR_LEN {
                return Err(Error::Split(format!(
                    "{name}: {} records, need at least {CSQA_TEST_STAR_LEN} to carve Test*",
                    out.len()
                )));
            }
            let cut = out.len() - CSQA_TEST_STAR_LEN;
            let kept = if split == Split::TestStar {
                out.split_off(cut)
            } else {
                out.truncate(cut);
                out
            };
            ExampleSet::new(kept, split)
        }
        _ => ExampleSet::new(out, split),
    }
}

/// Swag CSV layout (`sent1`, `sent2`, `ending0..3`, optional `label`).
/// Each hypothesis is `sent2` followed by one ending.
pub fn load_swag(path: &Path, split: Split) -> Result<ExampleSet> {
    let name = path.display().to_string();
    parse_swag(&read(path)?, &name, split)
}

pub(crate) fn parse_swag(text: &str, name: &str, split: Split) -> Result<ExampleSet> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: name.to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |h: &str| headers.iter().position(|c| c == h);
    let sent1 = col("sent1").ok_or_else(|| Error::schema(format!("{name}: no sent1 column")))?;
    let sent2 = col("sent2").ok_or_else(|| Error::schema(format!("{name}: no sent2 column")))?;
    let endings: Vec<usize> = (0..)
        .map_while(|i| col(&format!("ending{i}")))
        .collect();
    if endings.len() != 4 {
        return Err(Error::schema(format!(
            "{name}: Swag needs 4 ending columns, found {}",
            endings.len()
        )));
    }
    let label = col("label");
    let id_col = col("").or_else(|| col("id"));

    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let lineno = row + 2;
        let record = record.map_err(|e| Error::Parse {
            path: name.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let gold_index = match label.map(field) {
            None | Some("") => None,
            Some(l) => label_index(Some(l.parse::<i64>().map_err(|e| Error::Parse {
                path: name.to_string(),
                line: lineno,
                message: format!("label {l:?}: {e}"),
            })?)),
        };
        let id = match id_col.map(field) {
            Some(v) if !v.is_empty() => format!("swag-{v}"),
            _ => format!("swag-row{}", row + 1),
        };
        let stem = field(sent2);
        let ex = Example {
            id,
            premise: words(field(sent1)),
            hypotheses: endings
                .iter()
                .map(|&c| words(&format!("{stem} {}", field(c))))
                .collect(),
            gold_index,
            task: Task::Swag,
            relation: Relation::None,
        };
        ex.validate().map_err(|e| at_line(e, name, lineno))?;
        out.push(ex);
    }
    ExampleSet::new(out, split)
}

#[derive(Deserialize)]
struct HellaSwagRecord {
    #[serde(default)]
    ind: Option<u64>,
    #[serde(default)]
    ctx: Option<String>,
    #[serde(default)]
    ctx_a: Option<String>,
    #[serde(default)]
    ctx_b: Option<String>,
    endings: Vec<String>,
    #[serde(default)]
    label: Option<i64>,
}

/// HellaSwag JSONL layout; the premise is `ctx` (or `ctx_a` + `ctx_b`).
pub fn load_hellaswag(path: &Path, split: Split) -> Result<ExampleSet> {
    let name = path.display().to_string();
    parse_hellaswag(&read(path)?, &name, split)
}

pub(crate) fn parse_hellaswag(text: &str, name: &str, split: Split) -> Result<ExampleSet> {
    let mut out = Vec::new();
    for (lineno, line) in records(text) {
        let rec: HellaSwagRecord = parse_line(line, name, lineno)?;
        if rec.endings.len() != 4 {
            return Err(Error::schema(format!(
                "{name}:{lineno}: HellaSwag needs 4 endings, found {}",
                rec.endings.len()
            )));
        }
        let premise = match (rec.ctx, rec.ctx_a, rec.ctx_b) {
            (Some(ctx), _, _) => ctx,
            (None, Some(a), b) => format!("{a} {}", b.unwrap_or_default()),
            (None, None, _) => {
                return Err(Error::Parse {
                    path: name.to_string(),
                    line: lineno,
                    message: "missing ctx".into(),
                })
            }
        };
        let id = match rec.ind {
            Some(i) => format!("hellaswag-{i}"),
            None => format!("hellaswag-line{lineno}"),
        };
        let ex = Example {
            id,
            premise: words(&premise),
            hypotheses: rec.endings.iter().map(|e| words(e)).collect(),
            gold_index: label_index(rec.label),
            task: Task::HellaSwag,
            relation: Relation::None,
        };
        ex.validate().map_err(|e| at_line(e, name, lineno))?;
        out.push(ex);
    }
    ExampleSet::new(out, split)
}

pub fn load_canonical(path: &Path, split: Split) -> Result<ExampleSet> {
    let name = path.display().to_string();
    parse_canonical(&read(path)?, &name, split)
}

pub fn parse_canonical(text: &str, name: &str, split: Split) -> Result<ExampleSet> {
    let mut out = Vec::new();
    for (lineno, line) in records(text) {
        let ex: Example = parse_line(line, name, lineno)?;
        ex.validate().map_err(|e| at_line(e, name, lineno))?;
        out.push(ex);
    }
    ExampleSet::new(out, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COPA: &str = r#"{"premise": "The man broke his toe.", "choice1": "He got a hole in his sock.", "choice2": "He dropped a hammer on his foot.", "question": "cause", "idx": 0, "label": 1}
{"premise": "I knocked on my neighbor's door.", "choice1": "My neighbor invited me in.", "choice2": "My neighbor left his house.", "question": "effect", "idx": 1, "label": 0}
"#;

    #[test]
    fn copa_field_mapping() {
        let set = parse_copa(COPA, "copa.jsonl", Split::Train).unwrap();
        assert_eq!(set.len(), 2);
        let e = &set.examples()[0];
        assert_eq!(e.relation, Relation::Cause);
        assert_eq!(e.gold_index, Some(1));
        assert_eq!(e.id, "copa-0");
        assert_eq!(set.examples()[1].relation, Relation::Effect);
    }

    #[test]
    fn copa_missing_choice_is_parse_error_at_line() {
        let text = format!(
            "{}\n{}\n",
            COPA.lines().next().unwrap(),
            r#"{"premise": "x", "choice1": "y", "question": "cause", "idx": 5}"#
        );
        match parse_copa(&text, "f", Split::Train) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("choice2"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn copa_unknown_question_is_schema_error() {
        let text = r#"{"premise": "x", "choice1": "y", "choice2": "z", "question": "purpose", "idx": 0}"#;
        assert!(matches!(parse_copa(text, "f", Split::Test), Err(Error::Schema(_))));
    }

    #[test]
    fn copa_unlabeled_test_records() {
        let text = r#"{"premise": "x", "choice1": "y", "choice2": "z", "question": "effect", "idx": 0, "label": -1}
{"premise": "x", "choice1": "y", "choice2": "z", "question": "effect", "idx": 1}"#;
        let set = parse_copa(text, "f", Split::Test).unwrap();
        assert!(set.iter().all(|e| e.gold_index.is_none()));
    }

    fn csqa_line(id: usize, key: &str) -> String {
        let choices: Vec<String> = ["A", "B", "C", "D", "E"]
            .iter()
            .map(|l| format!(r#"{{"label": "{l}", "text": "answer {l}"}}"#))
            .collect();
        format!(
            r#"{{"answerKey": "{key}", "id": "q{id}", "question": {{"question_concept": "c", "choices": [{}], "stem": "Where is it?"}}}}"#,
            choices.join(", ")
        )
    }

    #[test]
    fn csqa_answer_key_to_index() {
        let set = parse_commonsenseqa(&csqa_line(0, "C"), "f", Split::Train).unwrap();
        assert_eq!(set.examples()[0].gold_index, Some(2));
        assert_eq!(set.examples()[0].hypotheses.len(), 5);
    }

    #[test]
    fn csqa_test_star_split() {
        let n = 1221;
        let text: String = (0..n).map(|i| csqa_line(i, "A") + "\n").collect();
        let star = parse_commonsenseqa(&text, "dev", Split::TestStar).unwrap();
        let val = parse_commonsenseqa(&text, "dev", Split::Val).unwrap();
        assert_eq!(star.len(), CSQA_TEST_STAR_LEN);
        assert_eq!(val.len(), n - CSQA_TEST_STAR_LEN);
        assert_eq!(star.examples()[0].id, format!("q{}", n - 611));
        assert_eq!(star.examples()[610].id, format!("q{}", n - 1));
        // Disjoint and jointly exhaustive.
        let all = parse_commonsenseqa(&text, "dev", Split::Train).unwrap();
        let joined: Vec<_> = val.iter().chain(star.iter()).cloned().collect();
        assert_eq!(joined, all.into_examples());

        let short: String = (0..600).map(|i| csqa_line(i, "A") + "\n").collect();
        assert!(matches!(
            parse_commonsenseqa(&short, "dev", Split::TestStar),
            Err(Error::Split(_))
        ));
    }

    const SWAG: &str = "\
,video-id,fold-ind,startphrase,sent1,sent2,gold-source,ending0,ending1,ending2,ending3,label
0,anetv_x,5,We notice ...,We notice a man in a kayak and a yellow helmet coming in from the left.,As he approaches,gold,\"his kayak flips upside-down.\",he paddles.,he waves.,he sinks.,0
";

    #[test]
    fn swag_layout() {
        let set = parse_swag(SWAG, "swag.csv", Split::Val).unwrap();
        let e = &set.examples()[0];
        assert_eq!(e.hypotheses.len(), 4);
        assert_eq!(e.gold_index, Some(0));
        assert_eq!(e.relation, Relation::None);
        assert_eq!(e.hypotheses[0].join(" "), "As he approaches his kayak flips upside-down.");
    }

    #[test]
    fn swag_wrong_choice_count() {
        let text = "sent1,sent2,ending0,ending1,ending2,label\na,b,c,d,e,0\n";
        assert!(matches!(parse_swag(text, "s", Split::Val), Err(Error::Schema(_))));
    }

    #[test]
    fn hellaswag_layout_and_arity() {
        let ok = r#"{"ind": 4, "ctx_a": "A man is standing in front of a camera.", "ctx_b": "he starts playing", "ctx": "A man is standing in front of a camera. He starts playing a harmonica for the camera.", "endings": ["He rocks back and forth to the music as he goes.", "b", "c", "d"], "label": 0}"#;
        let set = parse_hellaswag(ok, "h", Split::Val).unwrap();
        assert_eq!(set.examples()[0].hypotheses.len(), 4);
        assert_eq!(set.examples()[0].id, "hellaswag-4");

        let bad = r#"{"ind": 4, "ctx": "x", "endings": ["a", "b", "c"], "label": 0}"#;
        assert!(matches!(parse_hellaswag(bad, "h", Split::Val), Err(Error::Schema(_))));
    }

    #[test]
    fn loaders_are_deterministic() {
        let a = parse_copa(COPA, "f", Split::Train).unwrap();
        let b = parse_copa(COPA, "f", Split::Train).unwrap();
        assert_eq!(a, b);
    }
}
